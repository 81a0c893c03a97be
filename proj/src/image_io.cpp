#include "dbd/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace dbd {

namespace {

std::uint8_t to_byte(double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

/// Reads the next header token, skipping whitespace and `#` comments.
std::string next_token(std::istream& is) {
    std::string tok;
    int ch;
    while ((ch = is.get()) != EOF) {
        if (ch == '#') {
            while ((ch = is.get()) != EOF && ch != '\n') {}
            continue;
        }
        if (!std::isspace(ch)) {
            tok.push_back(static_cast<char>(ch));
            break;
        }
    }
    while ((ch = is.get()) != EOF && !std::isspace(ch)) tok.push_back(static_cast<char>(ch));
    return tok;
}

} // namespace

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
    const Shape s = rgb.shape();
    if (s.n != 1 || s.c != 3) throw DimensionError("write_ppm expects [1,3,H,W], got " + s.str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path.string());
    os << "P6\n" << s.w << " " << s.h << "\n255\n";
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x)
            for (std::int64_t c = 0; c < 3; ++c) os.put(static_cast<char>(to_byte(rgb.at(0, c, y, x))));
    if (!os) throw IoError("failed writing image: " + path.string());
}

void write_pgm(const std::filesystem::path& path, const Tensor& gray) {
    const Shape s = gray.shape();
    if (s.n != 1 || s.c != 1) throw DimensionError("write_pgm expects [1,1,H,W], got " + s.str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path.string());
    os << "P5\n" << s.w << " " << s.h << "\n255\n";
    for (std::int64_t y = 0; y < s.h; ++y)
        for (std::int64_t x = 0; x < s.w; ++x) os.put(static_cast<char>(to_byte(gray.at(0, 0, y, x))));
    if (!os) throw IoError("failed writing image: " + path.string());
}

void write_pfm(const std::filesystem::path& path, const Tensor& values) {
    const Shape s = values.shape();
    if (s.n != 1 || s.c != 1) throw DimensionError("write_pfm expects [1,1,H,W], got " + s.str());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write image: " + path.string());
    os << "Pf\n" << s.w << " " << s.h << "\n-1.0\n"; // negative scale: little-endian
    // PFM stores rows bottom to top.
    for (std::int64_t y = s.h - 1; y >= 0; --y)
        for (std::int64_t x = 0; x < s.w; ++x) {
            float v = static_cast<float>(values.at(0, 0, y, x));
            os.write(reinterpret_cast<const char*>(&v), sizeof(float));
        }
    if (!os) throw IoError("failed writing image: " + path.string());
}

Tensor read_image(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open image: " + path.string());
    std::string magic = next_token(is);
    if (magic != "P5" && magic != "P6") throw LoadError("unsupported image format in " + path.string());
    std::int64_t w = 0, h = 0, maxval = 0;
    try {
        w = std::stoll(next_token(is));
        h = std::stoll(next_token(is));
        maxval = std::stoll(next_token(is));
    } catch (const std::exception&) {
        throw LoadError("bad image header in " + path.string());
    }
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw LoadError("bad image header in " + path.string());
    const std::int64_t channels = magic == "P6" ? 3 : 1;
    std::vector<char> raw(static_cast<std::size_t>(w * h * channels));
    is.read(raw.data(), static_cast<std::streamsize>(raw.size()));
    if (!is) throw LoadError("truncated image data in " + path.string());
    Tensor out(Shape{1, channels, h, w});
    const double inv = 1.0 / static_cast<double>(maxval);
    std::size_t i = 0;
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < channels; ++c)
                out.at(0, c, y, x) = static_cast<double>(static_cast<std::uint8_t>(raw[i++])) * inv;
    return out;
}

Tensor read_pfm(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw LoadError("cannot open image: " + path.string());
    std::string magic = next_token(is);
    if (magic != "Pf") throw LoadError("not a grayscale PFM: " + path.string());
    std::int64_t w = 0, h = 0;
    double scale = 0.0;
    try {
        w = std::stoll(next_token(is));
        h = std::stoll(next_token(is));
        scale = std::stod(next_token(is));
    } catch (const std::exception&) {
        throw LoadError("bad PFM header in " + path.string());
    }
    if (w <= 0 || h <= 0 || scale >= 0.0) throw LoadError("unsupported PFM header in " + path.string());
    Tensor out(Shape{1, 1, h, w});
    for (std::int64_t y = h - 1; y >= 0; --y)
        for (std::int64_t x = 0; x < w; ++x) {
            float v;
            is.read(reinterpret_cast<char*>(&v), sizeof(float));
            if (!is) throw LoadError("truncated PFM data in " + path.string());
            out.at(0, 0, y, x) = static_cast<double>(v);
        }
    return out;
}

bool is_supported_image(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    return ext == ".ppm" || ext == ".pgm";
}

} // namespace dbd
