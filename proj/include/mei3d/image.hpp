#pragma once
#include <cstddef>
#include <string>
#include <vector>

namespace mei3d {

// Single-channel luminance grid, row-major, row 0 at the top of the frame.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> values;

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), values(static_cast<std::size_t>(w) * h, fill) {}

    double& at(int row, int col) { return values[static_cast<std::size_t>(row) * width + col]; }
    double at(int row, int col) const { return values[static_cast<std::size_t>(row) * width + col]; }
    std::size_t pixel_count() const { return values.size(); }
};

double image_mean(const Image& img);
double image_std(const Image& img);   // population standard deviation
double image_l2_norm(const Image& img);
double image_dot(const Image& a, const Image& b);
bool image_finite(const Image& img);

enum class PixelWindow {
    Fixed01,  // clamp to [0,1], then scale to [0,255] with round-half-up
    MinMax,   // affine min-max stretch; constant images map to all zeros
};

// P2 (ASCII) PGM; byte-deterministic, used for golden-file comparisons.
void write_pgm(const Image& img, const std::string& path, PixelWindow window = PixelWindow::Fixed01);

// 8-bit grayscale PNG (zlib-compressed, filter 0).
void write_png(const Image& img, const std::string& path, PixelWindow window = PixelWindow::Fixed01);

// Dispatch on "pgm"/"png".
void write_image(const Image& img, const std::string& path, const std::string& format,
                 PixelWindow window = PixelWindow::Fixed01);

// Quantization used by both writers (exposed for tests).
std::vector<unsigned char> quantize_image(const Image& img, PixelWindow window);

}  // namespace mei3d
