#include "yoro/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "json.hpp"
#include "yoro/errors.hpp"

namespace yoro {

namespace {

unsigned char to_byte(double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Reads the next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& in) {
    std::string tok;
    char c;
    while (in.get(c)) {
        if (c == '#') {
            std::string skip;
            std::getline(in, skip);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(c);
    }
    return tok;
}

std::size_t parse_extent(const std::string& tok, const std::filesystem::path& path) {
    try {
        const long v = std::stol(tok);
        if (v <= 0) throw IoError("");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw IoError("bad header value '" + tok + "' in " + path.string());
    }
}

Image from_bytes(std::size_t h, std::size_t w, const std::vector<unsigned char>& bytes) {
    Image img(h, w);
    for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0;
    return img;
}

}  // namespace

Image read_ppm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    if (header_token(in) != "P6") throw IoError(path.string() + " is not a binary PPM (P6)");
    const std::size_t w = parse_extent(header_token(in), path);
    const std::size_t h = parse_extent(header_token(in), path);
    if (header_token(in) != "255") throw IoError(path.string() + ": only maxval 255 is supported");
    std::vector<unsigned char> bytes(w * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError(path.string() + ": truncated pixel data");
    return from_bytes(h, w, bytes);
}

void write_ppm(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
    std::vector<unsigned char> bytes(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), to_byte);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Image read_raw_rgb(const std::filesystem::path& path) {
    std::filesystem::path sidecar = path;
    sidecar += ".json";
    std::ifstream meta(sidecar);
    if (!meta) throw IoError("missing sidecar " + sidecar.string());
    nlohmann::json j;
    try {
        meta >> j;
    } catch (const nlohmann::json::exception& e) {
        throw IoError("bad sidecar " + sidecar.string() + ": " + e.what());
    }
    const auto w = j.value("width", std::size_t{0});
    const auto h = j.value("height", std::size_t{0});
    if (w == 0 || h == 0) throw IoError("sidecar " + sidecar.string() + " lacks positive width/height");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<unsigned char> bytes(w * h * 3);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError(path.string() + ": truncated pixel data");
    return from_bytes(h, w, bytes);
}

void write_raw_rgb(const std::filesystem::path& path, const Image& image) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    std::vector<unsigned char> bytes(image.pixels.size());
    std::transform(image.pixels.begin(), image.pixels.end(), bytes.begin(), to_byte);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    std::filesystem::path sidecar = path;
    sidecar += ".json";
    std::ofstream meta(sidecar);
    meta << nlohmann::json{{"width", image.width}, {"height", image.height}}.dump() << '\n';
    if (!out || !meta) throw IoError("failed writing " + path.string());
}

Image read_image(const std::filesystem::path& path) {
    const auto ext = path.extension().string();
    if (ext == ".ppm") return read_ppm(path);
    if (ext == ".rgb" || ext == ".raw") return read_raw_rgb(path);
    throw IoError("unsupported image format: " + path.string());
}

void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               std::span<const unsigned char> values) {
    if (values.size() != height * width) throw DimensionError("write_pgm: value count mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << "P5\n" << width << ' ' << height << "\n255\n";
    out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

Image resize(const Image& image, std::size_t height, std::size_t width) {
    if (image.height == height && image.width == width) return image;
    Image out(height, width);
    const double sy = static_cast<double>(image.height) / static_cast<double>(height);
    const double sx = static_cast<double>(image.width) / static_cast<double>(width);
    for (std::size_t y = 0; y < height; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                     static_cast<double>(image.height - 1));
        const auto y0 = static_cast<std::size_t>(fy);
        const std::size_t y1 = std::min(y0 + 1, image.height - 1);
        const double ty = fy - static_cast<double>(y0);
        for (std::size_t x = 0; x < width; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                         static_cast<double>(image.width - 1));
            const auto x0 = static_cast<std::size_t>(fx);
            const std::size_t x1 = std::min(x0 + 1, image.width - 1);
            const double tx = fx - static_cast<double>(x0);
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double top = image.at(y0, x0, ch) * (1 - tx) + image.at(y0, x1, ch) * tx;
                const double bot = image.at(y1, x0, ch) * (1 - tx) + image.at(y1, x1, ch) * tx;
                out.at(y, x, ch) = top * (1 - ty) + bot * ty;
            }
        }
    }
    return out;
}

}  // namespace yoro
