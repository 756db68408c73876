#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "yoro/errors.hpp"
#include "yoro/runtime.hpp"

namespace yoro {

namespace {

constexpr std::array<char, 5> kMagic = {'Y', 'O', 'R', 'O', '1'};
constexpr const char* kFormat = "yoro-checkpoint";

template <typename T>
void put(std::ostream& out, T value) {
    std::array<char, sizeof(T)> bytes;
    std::memcpy(bytes.data(), &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    out.write(bytes.data(), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    std::array<char, sizeof(T)> bytes;
    if (!in.read(bytes.data(), sizeof(T))) throw IoError("checkpoint truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes.begin(), bytes.end());
    T value;
    std::memcpy(&value, bytes.data(), sizeof(T));
    return value;
}

std::string get_string(std::istream& in, std::size_t len) {
    if (len > (std::size_t{1} << 30)) throw IoError("checkpoint field too long");
    std::string s(len, '\0');
    if (!in.read(s.data(), static_cast<std::streamsize>(len))) throw IoError("checkpoint truncated");
    return s;
}

}  // namespace

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint " + path.string());
    const nlohmann::json header{{"format", kFormat}, {"config", model.config}, {"vocab", model.vocab.words()}};
    const std::string h = header.dump();
    out.write(kMagic.data(), kMagic.size());
    put<std::uint64_t>(out, h.size());
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    const auto named = model.params.named();
    put<std::uint64_t>(out, named.size());
    for (const auto& [name, t] : named) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(t->rank()));
        for (std::size_t e : t->shape()) put<std::uint64_t>(out, e);
        for (double v : t->data()) put<double>(out, v);
    }
    if (!out) throw IoError("failed writing checkpoint " + path.string());
}

Model load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint " + path.string());
    std::array<char, 5> magic{};
    if (!in.read(magic.data(), magic.size()) || magic != kMagic) throw IoError("not a checkpoint: bad magic");
    const auto header_len = get<std::uint64_t>(in);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(get_string(in, header_len));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint header: ") + e.what());
    }
    if (header.value("format", "") != kFormat) throw IoError("checkpoint header: unknown format");
    ModelConfig config = header.at("config").get<ModelConfig>();
    Vocabulary vocab(header.at("vocab").get<std::vector<std::string>>());
    Model model = Model::create(config, std::move(vocab), 0);
    if (model.config.vocab_size != config.vocab_size)
        throw ValidationError("checkpoint: vocabulary size disagrees with the config");

    std::map<std::string, Tensor*> slots;
    for (auto& [name, t] : model.params.named()) slots.emplace(name, t);
    const auto count = get<std::uint64_t>(in);
    if (count != slots.size())
        throw ValidationError("checkpoint holds " + std::to_string(count) + " tensors, model expects " +
                              std::to_string(slots.size()));
    for (std::uint64_t k = 0; k < count; ++k) {
        const std::string name = get_string(in, get<std::uint32_t>(in));
        const auto it = slots.find(name);
        if (it == slots.end()) throw ValidationError("checkpoint: unexpected tensor " + name);
        const auto rank = get<std::uint32_t>(in);
        Shape shape;
        for (std::uint32_t r = 0; r < rank; ++r) shape.push_back(get<std::uint64_t>(in));
        if (shape != it->second->shape()) throw ValidationError("checkpoint: shape mismatch for " + name);
        for (double& v : it->second->mutable_data()) v = get<double>(in);
        slots.erase(it);
    }
    if (in.peek() != std::char_traits<char>::eof()) throw IoError("checkpoint: trailing bytes");
    return model;
}

}  // namespace yoro
