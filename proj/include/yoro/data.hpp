#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "yoro/config.hpp"
#include "yoro/geometry.hpp"
#include "yoro/ground_truth.hpp"
#include "yoro/image.hpp"

namespace yoro {

// ---- tokenizer ----

// Word-level vocabulary. Id 0 is reserved for unknown words; the remaining ids
// follow the sorted order of the distinct corpus words.
class Vocabulary {
public:
    static constexpr std::string_view kUnknown = "[unk]";
    static constexpr std::size_t kUnknownId = 0;

    Vocabulary();
    // `words[0]` must be the unknown marker; throws ValidationError otherwise
    // or on duplicates.
    explicit Vocabulary(std::vector<std::string> words);
    static Vocabulary build(std::span<const std::string> phrases);

    std::size_t size() const { return words_.size(); }
    std::size_t id(std::string_view word) const;
    const std::string& word(std::size_t id) const { return words_.at(id); }
    const std::vector<std::string>& words() const { return words_; }
    bool operator==(const Vocabulary& o) const { return words_ == o.words_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Lowercases and splits on whitespace; punctuation characters become their
// own words. Digit runs stay single words.
std::vector<std::string> split_words(std::string_view phrase);

// Token ids truncated to m_max. Throws InputError for a phrase with no words.
std::vector<std::size_t> tokenize(std::string_view phrase, const Vocabulary& vocab, std::size_t m_max);
std::string detokenize(std::span<const std::size_t> ids, const Vocabulary& vocab);

bool is_stop_word(std::string_view word);
// Positions of the non-stop words.
std::vector<std::size_t> content_token_indices(std::span<const std::string> words);

// ---- samples ----

enum class ShapeKind { kCircle, kSquare, kTriangle };
enum class ColorKind { kRed, kGreen, kBlue, kYellow };
enum class Relation { kLeftOf, kRightOf, kAbove, kBelow };

std::string_view name_of(ShapeKind s);
std::string_view name_of(ColorKind c);
std::string_view name_of(Relation r);

struct SceneObject {
    ShapeKind shape = ShapeKind::kSquare;
    ColorKind color = ColorKind::kRed;
    Corners pixels;  // pixel-space bounding square
    Box box;         // normalized
};

// True when `a` stands in relation `r` to `b`, judged by box centers.
bool holds(Relation r, const SceneObject& a, const SceneObject& b);

struct GroundingSample {
    std::string id;
    Image image;
    std::string phrase;
    std::vector<std::string> words;      // after truncation to m_max
    std::vector<std::size_t> token_ids;  // against the producing vocabulary
    GroundTruth truth;
    // Synthetic samples keep their scene for verification; empty otherwise.
    std::vector<SceneObject> scene;
    std::size_t referent = 0;
};

// Re-derives token ids against another vocabulary.
void retokenize(std::span<GroundingSample> samples, const Vocabulary& vocab);

// ---- synthetic referring expressions ----

struct SyntheticSpec {
    std::uint64_t seed = 0;
    std::size_t canvas = 64;
    std::size_t min_objects = 2;
    std::size_t max_objects = 5;
    std::size_t min_size = 12;
    std::size_t max_size = 20;
    // Chance of describing a referent with a unique shape by shape alone.
    double shape_only_rate = 0.25;
    std::size_t max_attempts = 100;
    std::size_t m_max = 40;
    std::size_t patch = 8;
    CoverageRule coverage = CoverageRule::kCellFraction;
};

// Every word the generator can emit.
Vocabulary synthetic_vocabulary();

// Objects of `scene` that a synthetic phrase refers to. Throws InputError if
// the phrase does not follow the generator grammar.
std::vector<std::size_t> resolve_phrase(std::span<const std::string> words, std::span<const SceneObject> scene);

// Deterministic stream of single-referent samples.
class SyntheticGenerator {
public:
    explicit SyntheticGenerator(SyntheticSpec spec);
    // Throws GenerationError when no uniquely describable scene is found
    // within spec.max_attempts draws.
    GroundingSample next();
    const Vocabulary& vocabulary() const { return vocab_; }

private:
    bool try_sample(GroundingSample& out);

    SyntheticSpec spec_;
    Vocabulary vocab_;
    std::mt19937_64 rng_;
    std::size_t index_ = 0;
};

std::vector<GroundingSample> generate(const SyntheticSpec& spec, std::size_t count);

// Builds truth.alignment from the boxes and token sets.
void attach_alignment(GroundingSample& sample, const PatchGrid& grid, CoverageRule rule);

// ---- annotation files ----

struct IngestResult {
    std::vector<GroundingSample> samples;
    Vocabulary vocabulary;
    std::size_t skipped = 0;
    std::vector<std::string> log;  // one line per skipped record
};

struct IngestOptions {
    // Use this vocabulary instead of building one from the phrases.
    const Vocabulary* vocabulary = nullptr;
    // Abort when more than this fraction of records is skipped.
    double max_skip_fraction = 0.10;
};

// Reads line-delimited JSON records {image, width, height, phrase, box:[x1,y1,
// x2,y2] (pixels), token_box_map?}. Images are resampled to the configured
// extents. Malformed records are skipped and logged; throws ValidationError
// when the skipped fraction exceeds the limit, IoError when the file cannot be
// read.
IngestResult ingest(const std::filesystem::path& annotations, const std::filesystem::path& images_dir,
                    const ModelConfig& config, const IngestOptions& options = {});

// Writes <dir>/annotations.jsonl plus <dir>/images/<id>.ppm.
void export_dataset(std::span<const GroundingSample> samples, const std::filesystem::path& dir);

}  // namespace yoro
