#include "yoro/data.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "yoro/errors.hpp"

namespace yoro {

// ---- tokenizer ----

Vocabulary::Vocabulary() : Vocabulary(std::vector<std::string>{std::string(kUnknown)}) {}

Vocabulary::Vocabulary(std::vector<std::string> words) : words_(std::move(words)) {
    if (words_.empty() || words_[0] != kUnknown)
        throw ValidationError("vocabulary must start with the unknown marker");
    for (std::size_t i = 0; i < words_.size(); ++i)
        if (!index_.emplace(words_[i], i).second) throw ValidationError("duplicate vocabulary word '" + words_[i] + "'");
}

Vocabulary Vocabulary::build(std::span<const std::string> phrases) {
    std::set<std::string> unique;
    for (const auto& p : phrases)
        for (auto& w : split_words(p)) unique.insert(std::move(w));
    std::vector<std::string> words{std::string(kUnknown)};
    words.insert(words.end(), unique.begin(), unique.end());
    return Vocabulary(std::move(words));
}

std::size_t Vocabulary::id(std::string_view word) const {
    const auto it = index_.find(std::string(word));
    return it == index_.end() ? kUnknownId : it->second;
}

std::vector<std::string> split_words(std::string_view phrase) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) out.push_back(std::move(cur));
        cur.clear();
    };
    for (char ch : phrase) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isspace(c)) {
            flush();
        } else if (std::ispunct(c)) {
            flush();
            out.emplace_back(1, ch);
        } else {
            cur.push_back(static_cast<char>(std::tolower(c)));
        }
    }
    flush();
    return out;
}

std::vector<std::size_t> tokenize(std::string_view phrase, const Vocabulary& vocab, std::size_t m_max) {
    auto words = split_words(phrase);
    if (words.empty()) throw InputError("phrase has no words");
    if (words.size() > m_max) words.resize(m_max);
    std::vector<std::size_t> ids;
    ids.reserve(words.size());
    for (const auto& w : words) ids.push_back(vocab.id(w));
    return ids;
}

std::string detokenize(std::span<const std::size_t> ids, const Vocabulary& vocab) {
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (i) out.push_back(' ');
        out += vocab.word(ids[i]);
    }
    return out;
}

bool is_stop_word(std::string_view word) {
    static const std::array<std::string_view, 7> kStop = {"the", "that", "is", "of", "to", "a", "an"};
    return std::find(kStop.begin(), kStop.end(), word) != kStop.end();
}

std::vector<std::size_t> content_token_indices(std::span<const std::string> words) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < words.size(); ++i)
        if (!is_stop_word(words[i]) && !(words[i].size() == 1 && std::ispunct(static_cast<unsigned char>(words[i][0]))))
            out.push_back(i);
    return out;
}

// ---- scene vocabulary ----

namespace {

constexpr std::array kShapes = {ShapeKind::kCircle, ShapeKind::kSquare, ShapeKind::kTriangle};
constexpr std::array kColors = {ColorKind::kRed, ColorKind::kGreen, ColorKind::kBlue, ColorKind::kYellow};
constexpr std::array kRelations = {Relation::kLeftOf, Relation::kRightOf, Relation::kAbove, Relation::kBelow};

std::array<double, 3> rgb(ColorKind c) {
    switch (c) {
        case ColorKind::kRed: return {1.0, 0.0, 0.0};
        case ColorKind::kGreen: return {0.0, 1.0, 0.0};
        case ColorKind::kBlue: return {0.0, 0.0, 1.0};
        case ColorKind::kYellow: return {1.0, 1.0, 0.0};
    }
    return {0, 0, 0};
}

template <typename Enum, std::size_t N>
bool lookup(const std::array<Enum, N>& all, std::string_view word, Enum& out) {
    for (Enum e : all)
        if (name_of(e) == word) {
            out = e;
            return true;
        }
    return false;
}

struct Descriptor {
    bool has_color = false;
    ColorKind color{};
    ShapeKind shape{};

    bool matches(const SceneObject& o) const { return o.shape == shape && (!has_color || o.color == color); }
};

// Parses "the [color] shape" starting at `pos`; advances pos.
Descriptor parse_descriptor(std::span<const std::string> w, std::size_t& pos) {
    auto fail = [] { throw InputError("phrase does not follow the synthetic grammar"); };
    if (pos >= w.size() || w[pos] != "the") fail();
    ++pos;
    Descriptor d;
    if (pos < w.size() && lookup(kColors, w[pos], d.color)) {
        d.has_color = true;
        ++pos;
    }
    if (pos >= w.size() || !lookup(kShapes, w[pos], d.shape)) fail();
    ++pos;
    return d;
}

bool parse_relation(std::span<const std::string> w, std::size_t& pos, Relation& r) {
    if (pos >= w.size()) return false;
    if (w[pos] == "above" || w[pos] == "below") {
        r = w[pos] == "above" ? Relation::kAbove : Relation::kBelow;
        ++pos;
        return true;
    }
    if ((w[pos] == "left" || w[pos] == "right") && pos + 1 < w.size() && w[pos + 1] == "of") {
        r = w[pos] == "left" ? Relation::kLeftOf : Relation::kRightOf;
        pos += 2;
        return true;
    }
    throw InputError("unknown relation '" + w[pos] + "'");
}

std::string describe(const SceneObject& o, bool with_color) {
    std::string s = "the ";
    if (with_color) s += std::string(name_of(o.color)) + " ";
    return s + std::string(name_of(o.shape));
}

bool overlaps(const Corners& a, const Corners& b, double gap) {
    return a.x1 < b.x2 + gap && b.x1 < a.x2 + gap && a.y1 < b.y2 + gap && b.y1 < a.y2 + gap;
}

void draw(Image& img, const SceneObject& o) {
    const auto color = rgb(o.color);
    const double size = o.pixels.x2 - o.pixels.x1;
    const double cx = (o.pixels.x1 + o.pixels.x2) / 2, cy = (o.pixels.y1 + o.pixels.y2) / 2;
    for (auto y = static_cast<std::size_t>(o.pixels.y1); y < static_cast<std::size_t>(o.pixels.y2); ++y)
        for (auto x = static_cast<std::size_t>(o.pixels.x1); x < static_cast<std::size_t>(o.pixels.x2); ++x) {
            const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
            bool inside = true;
            switch (o.shape) {
                case ShapeKind::kSquare: break;
                case ShapeKind::kCircle: {
                    const double r = size / 2;
                    inside = (px - cx) * (px - cx) + (py - cy) * (py - cy) <= r * r;
                    break;
                }
                case ShapeKind::kTriangle: {
                    // apex at top-center, base along the bottom edge
                    const double depth = (py - o.pixels.y1) / size;
                    inside = std::abs(px - cx) <= depth * size / 2;
                    break;
                }
            }
            if (!inside) continue;
            for (std::size_t ch = 0; ch < 3; ++ch) img.at(y, x, ch) = color[ch];
        }
}

}  // namespace

std::string_view name_of(ShapeKind s) {
    switch (s) {
        case ShapeKind::kCircle: return "circle";
        case ShapeKind::kSquare: return "square";
        case ShapeKind::kTriangle: return "triangle";
    }
    return "";
}

std::string_view name_of(ColorKind c) {
    switch (c) {
        case ColorKind::kRed: return "red";
        case ColorKind::kGreen: return "green";
        case ColorKind::kBlue: return "blue";
        case ColorKind::kYellow: return "yellow";
    }
    return "";
}

std::string_view name_of(Relation r) {
    switch (r) {
        case Relation::kLeftOf: return "left of";
        case Relation::kRightOf: return "right of";
        case Relation::kAbove: return "above";
        case Relation::kBelow: return "below";
    }
    return "";
}

bool holds(Relation r, const SceneObject& a, const SceneObject& b) {
    switch (r) {
        case Relation::kLeftOf: return a.box.cx < b.box.cx;
        case Relation::kRightOf: return a.box.cx > b.box.cx;
        case Relation::kAbove: return a.box.cy < b.box.cy;
        case Relation::kBelow: return a.box.cy > b.box.cy;
    }
    return false;
}

void retokenize(std::span<GroundingSample> samples, const Vocabulary& vocab) {
    for (auto& s : samples) {
        s.token_ids.clear();
        for (const auto& w : s.words) s.token_ids.push_back(vocab.id(w));
    }
}

Vocabulary synthetic_vocabulary() {
    std::vector<std::string> phrases{"the of"};
    for (ShapeKind s : kShapes) phrases.emplace_back(name_of(s));
    for (ColorKind c : kColors) phrases.emplace_back(name_of(c));
    for (Relation r : kRelations) phrases.emplace_back(name_of(r));
    return Vocabulary::build(phrases);
}

std::vector<std::size_t> resolve_phrase(std::span<const std::string> words, std::span<const SceneObject> scene) {
    std::size_t pos = 0;
    const Descriptor target = parse_descriptor(words, pos);
    std::vector<std::size_t> out;
    if (pos == words.size()) {
        for (std::size_t i = 0; i < scene.size(); ++i)
            if (target.matches(scene[i])) out.push_back(i);
        return out;
    }
    Relation rel{};
    parse_relation(words, pos, rel);
    const Descriptor landmark = parse_descriptor(words, pos);
    if (pos != words.size()) throw InputError("trailing words after the landmark");
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!target.matches(scene[i])) continue;
        for (std::size_t j = 0; j < scene.size(); ++j)
            if (j != i && landmark.matches(scene[j]) && holds(rel, scene[i], scene[j])) {
                out.push_back(i);
                break;
            }
    }
    return out;
}

void attach_alignment(GroundingSample& sample, const PatchGrid& grid, CoverageRule rule) {
    sample.truth.alignment = build_alignment(sample.truth, grid, rule);
}

SyntheticGenerator::SyntheticGenerator(SyntheticSpec spec)
    : spec_(spec), vocab_(synthetic_vocabulary()), rng_(spec.seed) {
    if (spec_.min_objects < 1 || spec_.max_objects < spec_.min_objects || spec_.min_size < 2 ||
        spec_.max_size < spec_.min_size || spec_.max_size > spec_.canvas)
        throw ValidationError("synthetic spec: inconsistent object count or size range");
    PatchGrid{spec_.canvas, spec_.canvas, spec_.patch}.validate();
}

GroundingSample SyntheticGenerator::next() {
    GroundingSample sample;
    for (std::size_t attempt = 0; attempt < spec_.max_attempts; ++attempt)
        if (try_sample(sample)) {
            ++index_;
            return sample;
        }
    throw GenerationError("no uniquely describable scene after " + std::to_string(spec_.max_attempts) + " attempts");
}

bool SyntheticGenerator::try_sample(GroundingSample& out) {
    const double canvas = static_cast<double>(spec_.canvas);
    std::uniform_int_distribution<std::size_t> count_dist(spec_.min_objects, spec_.max_objects);
    std::uniform_int_distribution<std::size_t> size_dist(spec_.min_size, spec_.max_size);
    std::uniform_int_distribution<std::size_t> shape_dist(0, kShapes.size() - 1);
    std::uniform_int_distribution<std::size_t> color_dist(0, kColors.size() - 1);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    const std::size_t n = count_dist(rng_);
    std::vector<SceneObject> scene;
    for (std::size_t k = 0; k < n; ++k) {
        bool placed = false;
        for (int tries = 0; tries < 50 && !placed; ++tries) {
            const std::size_t size = size_dist(rng_);
            std::uniform_int_distribution<std::size_t> pos_dist(0, spec_.canvas - size);
            const auto x0 = static_cast<double>(pos_dist(rng_));
            const auto y0 = static_cast<double>(pos_dist(rng_));
            const Corners c{x0, y0, x0 + static_cast<double>(size), y0 + static_cast<double>(size)};
            if (std::any_of(scene.begin(), scene.end(), [&](const SceneObject& o) { return overlaps(o.pixels, c, 2.0); }))
                continue;
            SceneObject o;
            o.pixels = c;
            o.box = from_pixel_corners(c, canvas, canvas);
            scene.push_back(o);
            placed = true;
        }
        if (!placed) return false;
    }
    for (auto& o : scene) {
        o.shape = kShapes[shape_dist(rng_)];
        o.color = kColors[color_dist(rng_)];
    }
    std::uniform_int_distribution<std::size_t> ref_dist(0, n - 1);
    const std::size_t ref = ref_dist(rng_);
    const SceneObject& r = scene[ref];

    auto count_if = [&](auto pred) { return std::count_if(scene.begin(), scene.end(), pred); };
    const bool shape_unique = count_if([&](const SceneObject& o) { return o.shape == r.shape; }) == 1;
    const bool full_unique =
        count_if([&](const SceneObject& o) { return o.shape == r.shape && o.color == r.color; }) == 1;

    std::string phrase;
    if (full_unique) {
        const bool shape_only = shape_unique && unit(rng_) < spec_.shape_only_rate;
        phrase = describe(r, !shape_only);
    } else {
        // Relation to a uniquely described landmark.
        std::vector<std::string> options;
        for (std::size_t j = 0; j < n; ++j) {
            const SceneObject& l = scene[j];
            if (j == ref) continue;
            if (count_if([&](const SceneObject& o) { return o.shape == l.shape && o.color == l.color; }) != 1) continue;
            for (Relation rel : kRelations) {
                if (!holds(rel, r, l)) continue;
                std::size_t satisfied = 0;
                for (const auto& o : scene)
                    if (&o != &l && o.shape == r.shape && o.color == r.color && holds(rel, o, l)) ++satisfied;
                if (satisfied == 1)
                    options.push_back(describe(r, true) + " " + std::string(name_of(rel)) + " " + describe(l, true));
            }
        }
        if (options.empty()) return false;
        std::uniform_int_distribution<std::size_t> pick(0, options.size() - 1);
        phrase = options[pick(rng_)];
    }

    auto words = split_words(phrase);
    if (words.size() > spec_.m_max) words.resize(spec_.m_max);
    if (resolve_phrase(words, scene) != std::vector<std::size_t>{ref}) return false;

    GroundingSample s;
    s.id = "synthetic-" + std::to_string(spec_.seed) + "-" + std::to_string(index_);
    s.image = Image(spec_.canvas, spec_.canvas, 0.0);
    for (const auto& o : scene) draw(s.image, o);
    s.phrase = phrase;
    s.words = std::move(words);
    for (const auto& w : s.words) s.token_ids.push_back(vocab_.id(w));
    s.truth.boxes = {r.box};
    s.truth.token_sets = {content_token_indices(s.words)};
    s.truth.tokens = s.words.size();
    if (s.truth.token_sets[0].empty()) return false;
    attach_alignment(s, PatchGrid{spec_.canvas, spec_.canvas, spec_.patch}, spec_.coverage);
    s.scene = std::move(scene);
    s.referent = ref;
    out = std::move(s);
    return true;
}

std::vector<GroundingSample> generate(const SyntheticSpec& spec, std::size_t count) {
    SyntheticGenerator gen(spec);
    std::vector<GroundingSample> out;
    out.reserve(count);
    for (std::size_t i = 0; i < count; ++i) out.push_back(gen.next());
    return out;
}

// ---- annotation files ----

namespace {

struct ParsedRecord {
    std::string image;
    std::size_t width = 0, height = 0;
    std::string phrase;
    Corners box;
    std::vector<std::vector<std::size_t>> token_box_map;
};

ParsedRecord parse_record(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    ParsedRecord r;
    r.image = j.at("image").get<std::string>();
    const auto w = j.at("width").get<long long>();
    const auto h = j.at("height").get<long long>();
    if (w <= 0 || h <= 0) throw ValidationError("width/height must be positive");
    r.width = static_cast<std::size_t>(w);
    r.height = static_cast<std::size_t>(h);
    r.phrase = j.at("phrase").get<std::string>();
    const auto box = j.at("box").get<std::vector<double>>();
    if (box.size() != 4) throw ValidationError("box must have 4 values");
    r.box = {box[0], box[1], box[2], box[3]};
    if (!(r.box.x2 > r.box.x1) || !(r.box.y2 > r.box.y1) || r.box.x1 < 0 || r.box.y1 < 0 ||
        r.box.x2 > static_cast<double>(r.width) || r.box.y2 > static_cast<double>(r.height))
        throw ValidationError("box outside the image or degenerate");
    if (j.contains("token_box_map"))
        r.token_box_map = j.at("token_box_map").get<std::vector<std::vector<std::size_t>>>();
    return r;
}

}  // namespace

IngestResult ingest(const std::filesystem::path& annotations, const std::filesystem::path& images_dir,
                    const ModelConfig& config, const IngestOptions& options) {
    std::ifstream in(annotations);
    if (!in) throw IoError("cannot open annotations " + annotations.string());
    IngestResult result;
    std::size_t records = 0, line_no = 0;
    std::string line;
    auto skip = [&](const std::string& why) {
        ++result.skipped;
        result.log.push_back("line " + std::to_string(line_no) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++line_no;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
        ++records;
        ParsedRecord rec;
        try {
            rec = parse_record(line);
        } catch (const std::exception& e) {
            skip(std::string("malformed record: ") + e.what());
            continue;
        }
        auto words = split_words(rec.phrase);
        if (words.empty()) {
            skip("empty phrase");
            continue;
        }
        if (words.size() > config.m_max) words.resize(config.m_max);
        std::vector<std::size_t> tokens;
        if (rec.token_box_map.empty()) {
            tokens = content_token_indices(words);
        } else if (rec.token_box_map.size() == 1) {
            tokens = rec.token_box_map[0];
            std::sort(tokens.begin(), tokens.end());
            tokens.erase(std::unique(tokens.begin(), tokens.end()), tokens.end());
            std::erase_if(tokens, [&](std::size_t t) { return t >= words.size(); });
        } else {
            skip("token_box_map must list exactly one token set");
            continue;
        }
        if (tokens.empty()) {
            skip("no tokens to align with the box");
            continue;
        }
        const auto image_path = images_dir / rec.image;
        if (!std::filesystem::exists(image_path)) {
            skip("missing image " + image_path.string());
            continue;
        }
        Image image;
        try {
            image = read_image(image_path);
        } catch (const std::exception& e) {
            skip(std::string("unreadable image: ") + e.what());
            continue;
        }
        if (image.width != rec.width || image.height != rec.height) {
            skip("image extents differ from the record");
            continue;
        }
        GroundingSample s;
        s.id = rec.image + "#" + std::to_string(line_no);
        s.phrase = rec.phrase;
        s.words = std::move(words);
        s.truth.boxes = {from_pixel_corners(rec.box, static_cast<double>(rec.width), static_cast<double>(rec.height))};
        s.truth.token_sets = {std::move(tokens)};
        s.truth.tokens = s.words.size();
        s.image = resize(image, config.image_height, config.image_width);
        attach_alignment(s, config.grid(), config.coverage);
        result.samples.push_back(std::move(s));
    }
    if (records > 0 && static_cast<double>(result.skipped) > options.max_skip_fraction * static_cast<double>(records))
        throw ValidationError("ingest aborted: skipped " + std::to_string(result.skipped) + " of " +
                              std::to_string(records) + " records");
    if (options.vocabulary != nullptr) {
        result.vocabulary = *options.vocabulary;
    } else {
        std::vector<std::string> phrases;
        for (const auto& s : result.samples) phrases.push_back(s.phrase);
        result.vocabulary = Vocabulary::build(phrases);
    }
    retokenize(result.samples, result.vocabulary);
    return result;
}

void export_dataset(std::span<const GroundingSample> samples, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir / "images");
    std::ofstream out(dir / "annotations.jsonl");
    if (!out) throw IoError("cannot write " + (dir / "annotations.jsonl").string());
    for (const auto& s : samples) {
        if (s.truth.boxes.size() != 1) throw ContractError("export_dataset: only single-referent samples are supported");
        const std::string rel = "images/" + s.id + ".ppm";
        write_ppm(dir / rel, s.image);
        const auto w = static_cast<double>(s.image.width), h = static_cast<double>(s.image.height);
        const Box& b = s.truth.boxes[0];
        // Pixel corners from the center form invert from_pixel_corners exactly
        // for the integer-aligned boxes the generator emits.
        Corners px = s.scene.empty() ? to_pixel_corners(b, w, h) : s.scene[s.referent].pixels;
        nlohmann::json rec{{"image", rel},
                           {"width", s.image.width},
                           {"height", s.image.height},
                           {"phrase", s.phrase},
                           {"box", {px.x1, px.y1, px.x2, px.y2}},
                           {"token_box_map", s.truth.token_sets}};
        out << rec.dump() << '\n';
    }
    if (!out) throw IoError("failed writing annotations");
}

}  // namespace yoro
