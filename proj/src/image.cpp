#include "mei3d/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <cstring>

#include "mei3d/errors.hpp"

namespace mei3d {

double image_mean(const Image& img) {
    double s = 0.0;
    for (double v : img.values) s += v;
    return s / static_cast<double>(img.pixel_count());
}

double image_std(const Image& img) {
    double mean = image_mean(img);
    double s = 0.0;
    for (double v : img.values) s += (v - mean) * (v - mean);
    return std::sqrt(s / static_cast<double>(img.pixel_count()));
}

double image_l2_norm(const Image& img) {
    double s = 0.0;
    for (double v : img.values) s += v * v;
    return std::sqrt(s);
}

double image_dot(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height) throw Error("image_dot: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
    return s;
}

bool image_finite(const Image& img) {
    for (double v : img.values) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

std::vector<unsigned char> quantize_image(const Image& img, PixelWindow window) {
    std::vector<unsigned char> out(img.pixel_count());
    double lo = 0.0, hi = 1.0;
    if (window == PixelWindow::MinMax) {
        lo = img.values.empty() ? 0.0 : img.values[0];
        hi = lo;
        for (double v : img.values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (hi - lo <= 0.0) {
            // constant image: defined as all zeros
            return out;
        }
    }
    const double span = hi - lo;
    for (std::size_t i = 0; i < img.values.size(); ++i) {
        double t = (img.values[i] - lo) / span;
        t = std::min(std::max(t, 0.0), 1.0);
        out[i] = static_cast<unsigned char>(std::floor(t * 255.0 + 0.5));  // round half up
    }
    return out;
}

void write_pgm(const Image& img, const std::string& path, PixelWindow window) {
    auto bytes = quantize_image(img, window);
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f, "P2\n%d %d\n255\n", img.width, img.height);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c) {
            std::fprintf(f, "%u%c", bytes[static_cast<std::size_t>(r) * img.width + c],
                         c + 1 == img.width ? '\n' : ' ');
        }
    }
    if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

namespace {

void put_u32_be(std::vector<unsigned char>& buf, std::uint32_t v) {
    buf.push_back(static_cast<unsigned char>(v >> 24));
    buf.push_back(static_cast<unsigned char>(v >> 16));
    buf.push_back(static_cast<unsigned char>(v >> 8));
    buf.push_back(static_cast<unsigned char>(v));
}

void append_chunk(std::vector<unsigned char>& out, const char type[4],
                  const std::vector<unsigned char>& data) {
    put_u32_be(out, static_cast<std::uint32_t>(data.size()));
    std::size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), data.begin(), data.end());
    uLong crc = crc32(0L, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
    put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const Image& img, const std::string& path, PixelWindow window) {
    auto bytes = quantize_image(img, window);

    // raw scanlines with filter byte 0
    std::vector<unsigned char> raw;
    raw.reserve(static_cast<std::size_t>(img.height) * (img.width + 1));
    for (int r = 0; r < img.height; ++r) {
        raw.push_back(0);
        raw.insert(raw.end(), bytes.begin() + static_cast<std::size_t>(r) * img.width,
                   bytes.begin() + static_cast<std::size_t>(r + 1) * img.width);
    }
    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> compressed(comp_len);
    if (compress2(compressed.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK) {
        throw IoError("PNG deflate failed for " + path);
    }
    compressed.resize(comp_len);

    std::vector<unsigned char> png = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<unsigned char> ihdr;
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.width));
    put_u32_be(ihdr, static_cast<std::uint32_t>(img.height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter
    ihdr.push_back(0);  // no interlace
    append_chunk(png, "IHDR", ihdr);
    append_chunk(png, "IDAT", compressed);
    append_chunk(png, "IEND", {});

    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::size_t written = std::fwrite(png.data(), 1, png.size(), f);
    if (std::fclose(f) != 0 || written != png.size()) throw IoError("write failed: " + path);
}

void write_image(const Image& img, const std::string& path, const std::string& format,
                 PixelWindow window) {
    if (format == "pgm") {
        write_pgm(img, path, window);
    } else if (format == "png") {
        write_png(img, path, window);
    } else {
        throw ConfigError("unknown image format '" + format + "' (use pgm or png)");
    }
}

}  // namespace mei3d
