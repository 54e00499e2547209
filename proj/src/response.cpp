#include "mei3d/response.hpp"

#include <cmath>

#include "mei3d/errors.hpp"

namespace mei3d {

Image make_gabor(const GaborFilter& params, int width, int height) {
    if (!(params.sigma > 0.0)) throw ModelError("gabor: sigma must be > 0");
    Image g(width, height);
    const double cx = width / 2.0 + params.center_x;
    const double cy = height / 2.0 + params.center_y;
    const double ct = std::cos(params.orientation), st = std::sin(params.orientation);
    const double two_pi_f = 2.0 * 3.14159265358979323846 * params.frequency;
    const double inv_two_sigma2 = 1.0 / (2.0 * params.sigma * params.sigma);
    for (int row = 0; row < height; ++row) {
        for (int col = 0; col < width; ++col) {
            double dx = (col + 0.5) - cx;
            double dy = (row + 0.5) - cy;
            double xr = dx * ct + dy * st;
            double yr = -dx * st + dy * ct;
            g.at(row, col) = params.amplitude * std::exp(-(xr * xr + yr * yr) * inv_two_sigma2) *
                             std::cos(two_pi_f * xr + params.phase);
        }
    }
    return g;
}

SimpleCellModel::SimpleCellModel(const GaborFilter& params, int width, int height, double norm_budget)
    : filter_(make_gabor(params, width, height)) {
    double fn = image_l2_norm(filter_);
    if (fn < 1e-300) throw ModelError("simple cell: zero filter");
    if (!(norm_budget > 0.0)) throw ModelError("simple cell: norm budget must be > 0");
    denom_ = norm_budget * fn;
}

double SimpleCellModel::respond(const Image& img) {
    return std::max(0.0, image_dot(img, filter_)) / denom_;
}

Image SimpleCellModel::respond_gradient(const Image& img) {
    Image grad(img.width, img.height);
    if (image_dot(img, filter_) > 0.0) {
        for (std::size_t i = 0; i < grad.values.size(); ++i) {
            grad.values[i] = filter_.values[i] / denom_;
        }
    }
    // subgradient at the rectification kink: 0
    return grad;
}

ComplexCellModel::ComplexCellModel(const GaborFilter& params, int width, int height, double norm_budget)
    : ComplexCellModel(params,
                       [&] {
                           GaborFilter q = params;
                           q.phase += 1.5707963267948966;
                           return q;
                       }(),
                       width, height, norm_budget) {}

ComplexCellModel::ComplexCellModel(const GaborFilter& a, const GaborFilter& b, int width, int height,
                                   double norm_budget) {
    if (std::abs(std::abs(b.phase - a.phase) - 1.5707963267948966) > 1e-9) {
        throw ModelError("complex cell: filters must form a quadrature pair (phase offset pi/2)");
    }
    f1_ = make_gabor(a, width, height);
    f2_ = make_gabor(b, width, height);
    double fn = image_l2_norm(f1_);
    if (fn < 1e-300) throw ModelError("complex cell: zero filter");
    if (!(norm_budget > 0.0)) throw ModelError("complex cell: norm budget must be > 0");
    denom_ = norm_budget * fn;
}

double ComplexCellModel::respond(const Image& img) {
    double q1 = image_dot(img, f1_);
    double q2 = image_dot(img, f2_);
    return std::sqrt(q1 * q1 + q2 * q2) / denom_;
}

Image ComplexCellModel::respond_gradient(const Image& img) {
    double q1 = image_dot(img, f1_);
    double q2 = image_dot(img, f2_);
    double energy = std::sqrt(q1 * q1 + q2 * q2);
    Image grad(img.width, img.height);
    if (energy < 1e-300) return grad;  // response minimum; no descent direction
    for (std::size_t i = 0; i < grad.values.size(); ++i) {
        grad.values[i] = (q1 * f1_.values[i] + q2 * f2_.values[i]) / (energy * denom_);
    }
    return grad;
}

double MeanPixelModel::respond(const Image& img) { return image_mean(img); }

Image MeanPixelModel::respond_gradient(const Image& img) {
    Image grad(img.width, img.height);
    double inv = 1.0 / static_cast<double>(img.pixel_count());
    for (double& v : grad.values) v = inv;
    return grad;
}

}  // namespace mei3d
