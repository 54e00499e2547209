#pragma once
#include <memory>

#include "mei3d/image.hpp"

namespace mei3d {

// Scalar response over a normalized image, with its gradient.
class ResponseModel {
public:
    virtual ~ResponseModel() = default;
    virtual double respond(const Image& img) = 0;
    virtual Image respond_gradient(const Image& img) = 0;
    virtual const char* name() const = 0;
};

struct GaborFilter {
    double orientation = 0.0;  // radians
    double frequency = 0.06;   // cycles per pixel
    double phase = 0.0;        // radians
    double sigma = 8.0;        // envelope, pixels
    double center_x = 0.0;     // offset from the image center, pixels
    double center_y = 0.0;
    double amplitude = 1.0;
};

// G(x,y) = A * exp(-(x'^2 + y'^2)/(2 sigma^2)) * cos(2 pi f x' + phase), with
// (x', y') the rotated coordinates about the filter center. Sampled at pixel
// centers; the center offset is measured from the image center.
Image make_gabor(const GaborFilter& params, int width, int height);

// Rectified linear Gabor unit: r = max(0, <img, G>) / (norm_budget * |G|).
// Cauchy-Schwarz bounds r by 1 for images with L2 norm equal to norm_budget.
class SimpleCellModel : public ResponseModel {
public:
    SimpleCellModel(const GaborFilter& params, int width, int height, double norm_budget);
    double respond(const Image& img) override;
    Image respond_gradient(const Image& img) override;
    const char* name() const override { return "simple"; }

    const Image& filter() const { return filter_; }

private:
    Image filter_;
    double denom_;
};

// Phase-invariant energy unit over a quadrature pair (phase and phase + pi/2):
// r = sqrt(<img,G1>^2 + <img,G2>^2) / (norm_budget * |G1|).
class ComplexCellModel : public ResponseModel {
public:
    ComplexCellModel(const GaborFilter& params, int width, int height, double norm_budget);
    // Rejects pairs whose phases do not differ by pi/2.
    ComplexCellModel(const GaborFilter& a, const GaborFilter& b, int width, int height,
                     double norm_budget);
    double respond(const Image& img) override;
    Image respond_gradient(const Image& img) override;
    const char* name() const override { return "complex"; }

    const Image& filter_a() const { return f1_; }
    const Image& filter_b() const { return f2_; }

private:
    Image f1_, f2_;
    double denom_;
};

// response = mean pixel; the reference model for adapter consistency checks.
class MeanPixelModel : public ResponseModel {
public:
    double respond(const Image& img) override;
    Image respond_gradient(const Image& img) override;
    const char* name() const override { return "mean"; }
};

}  // namespace mei3d
