#include <doctest.h>

#include <cmath>

#include "mei3d/errors.hpp"
#include "mei3d/image.hpp"
#include "mei3d/optimize.hpp"
#include "mei3d/response.hpp"
#include "mei3d/rng.hpp"

using namespace mei3d;

namespace {

constexpr double kPi = 3.14159265358979323846;

Image scaled_to_norm(const Image& img, double target) {
    Image out = img;
    double k = target / image_l2_norm(img);
    for (double& v : out.values) v *= k;
    return out;
}

GaborFilter centered_filter() {
    GaborFilter g;
    g.frequency = 0.08;
    g.sigma = 6.0;
    g.center_x = 0.5;  // land exactly on a pixel center of an even-sized grid
    g.center_y = 0.5;
    return g;
}

}  // namespace

TEST_CASE("gabor value at its center is the amplitude for phase 0") {
    GaborFilter g = centered_filter();
    g.amplitude = 1.7;
    Image f = make_gabor(g, 64, 64);
    // center = (32 + 0.5, 32 + 0.5), i.e. the center of pixel (32, 32)
    CHECK(f.at(32, 32) == doctest::Approx(1.7).epsilon(1e-14));
}

TEST_CASE("gabor value at its center vanishes for phase pi/2") {
    GaborFilter g = centered_filter();
    g.phase = kPi / 2.0;
    Image f = make_gabor(g, 64, 64);
    CHECK(std::abs(f.at(32, 32)) < 1e-14);
}

TEST_CASE("rotating a gabor by pi mirrors it through its center") {
    GaborFilter g0 = centered_filter();
    GaborFilter gpi = g0;
    gpi.orientation = kPi;
    Image a = make_gabor(g0, 64, 64);
    Image b = make_gabor(gpi, 64, 64);
    // center pixel (32,32); mirroring maps pixel (r,c) to (64-r, 64-c) in
    // center coordinates: (r,c) <-> (65-r, 65-c) would leave the grid, so
    // compare over the symmetric interior
    for (int r = 1; r < 64; ++r) {
        for (int c = 1; c < 64; ++c) {
            CHECK(a.at(r, c) == doctest::Approx(b.at(65 - r - 1, 65 - c - 1)).epsilon(1e-9));
        }
    }
}

TEST_CASE("simple cell saturates its Cauchy-Schwarz bound on the matched stimulus") {
    GaborFilter g = centered_filter();
    SimpleCellModel cell(g, 64, 64, 25.0);
    Image stim = scaled_to_norm(cell.filter(), 25.0);
    CHECK(cell.respond(stim) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("simple cell rectifies anti-matched stimuli to zero") {
    GaborFilter g = centered_filter();
    SimpleCellModel cell(g, 64, 64, 25.0);
    Image stim = scaled_to_norm(cell.filter(), 25.0);
    for (double& v : stim.values) v = -v;
    CHECK(cell.respond(stim) == 0.0);
}

TEST_CASE("quadrature pair is numerically orthogonal") {
    GaborFilter g = centered_filter();
    GaborFilter q = g;
    q.phase = g.phase + kPi / 2.0;
    Image f1 = make_gabor(g, 64, 64);
    Image f2 = make_gabor(q, 64, 64);
    double cosine = image_dot(f1, f2) / (image_l2_norm(f1) * image_l2_norm(f2));
    CHECK(std::abs(cosine) < 1e-2);

    // the phase-shifted filter therefore barely drives the simple cell
    SimpleCellModel cell(g, 64, 64, 25.0);
    Image stim = scaled_to_norm(f2, 25.0);
    CHECK(cell.respond(stim) < 1e-2);
}

TEST_CASE("simple cell ignores perturbations orthogonal to its filter") {
    GaborFilter g = centered_filter();
    SimpleCellModel cell(g, 64, 64, 25.0);
    Image stim = scaled_to_norm(cell.filter(), 25.0);
    double base = cell.respond(stim);

    Rng rng(31);
    Image noise(64, 64);
    for (double& v : noise.values) v = rng.normal();
    // project out the filter component
    double coeff = image_dot(noise, cell.filter()) / image_dot(cell.filter(), cell.filter());
    for (std::size_t i = 0; i < noise.values.size(); ++i) {
        stim.values[i] += noise.values[i] - coeff * cell.filter().values[i];
    }
    CHECK(cell.respond(stim) == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("complex cell is phase invariant") {
    GaborFilter g = centered_filter();
    ComplexCellModel cell(g, 64, 64, 25.0);
    GaborFilter shifted = g;
    shifted.phase = g.phase + kPi / 2.0;
    Image a = scaled_to_norm(make_gabor(g, 64, 64), 25.0);
    Image b = scaled_to_norm(make_gabor(shifted, 64, 64), 25.0);
    CHECK(cell.respond(a) == doctest::Approx(cell.respond(b)).epsilon(1e-3));
}

TEST_CASE("complex cell response is even in the stimulus") {
    GaborFilter g = centered_filter();
    ComplexCellModel cell(g, 64, 64, 25.0);
    Rng rng(37);
    Image stim(64, 64);
    for (double& v : stim.values) v = rng.normal();
    stim = scaled_to_norm(stim, 25.0);
    Image neg = stim;
    for (double& v : neg.values) v = -v;
    CHECK(cell.respond(stim) == cell.respond(neg));
}

TEST_CASE("stimulus orthogonal to both quadrature filters gives zero energy") {
    GaborFilter g = centered_filter();
    ComplexCellModel cell(g, 64, 64, 25.0);
    Rng rng(41);
    Image stim(64, 64);
    for (double& v : stim.values) v = rng.normal();
    // Gram-Schmidt against both filters
    for (const Image* f : {&cell.filter_a(), &cell.filter_b()}) {
        double coeff = image_dot(stim, *f) / image_dot(*f, *f);
        for (std::size_t i = 0; i < stim.values.size(); ++i) {
            stim.values[i] -= coeff * f->values[i];
        }
    }
    stim = scaled_to_norm(stim, 25.0);
    CHECK(cell.respond(stim) < 1e-10);
}

TEST_CASE("both cells stay within [0, 1] on norm-budget stimuli") {
    GaborFilter g = centered_filter();
    SimpleCellModel simple(g, 32, 32, 25.0);
    ComplexCellModel complex_cell(g, 32, 32, 25.0);
    Rng rng(43);
    for (int trial = 0; trial < 50; ++trial) {
        Image stim(32, 32);
        for (double& v : stim.values) v = rng.normal();
        stim = scaled_to_norm(stim, 25.0);
        double rs = simple.respond(stim);
        double rc = complex_cell.respond(stim);
        CHECK(rs >= 0.0);
        CHECK(rs <= 1.0 + 1e-12);
        CHECK(rc >= 0.0);
        CHECK(rc <= 1.0 + 1e-9);  // |G2| differs from |G1| in the last digits
    }
}

TEST_CASE("cell gradients match finite differences away from the kink") {
    GaborFilter g = centered_filter();
    SimpleCellModel simple(g, 16, 16, 25.0);
    ComplexCellModel complex_cell(g, 16, 16, 25.0);
    Rng rng(47);
    Image stim(16, 16);
    for (std::size_t i = 0; i < stim.values.size(); ++i) {
        stim.values[i] = 0.5 * simple.filter().values[i] + 0.2 * rng.normal();
    }
    stim = scaled_to_norm(stim, 25.0);
    REQUIRE(image_dot(stim, simple.filter()) > 0.01);

    for (ResponseModel* model : {static_cast<ResponseModel*>(&simple),
                                 static_cast<ResponseModel*>(&complex_cell)}) {
        auto value = [&](const std::vector<double>& p) {
            Image x(16, 16);
            x.values = p;
            return model->respond(x);
        };
        auto grad = [&](const std::vector<double>& p) {
            Image x(16, 16);
            x.values = p;
            return model->respond_gradient(x).values;
        };
        GradCheckResult res = check_gradients(value, grad, stim.values, 1e-5);
        CHECK(res.max_rel_error < 1e-6);
    }
}

TEST_CASE("mean pixel model and its gradient") {
    MeanPixelModel model;
    Image img(8, 8);
    for (std::size_t i = 0; i < img.values.size(); ++i) img.values[i] = static_cast<double>(i);
    CHECK(model.respond(img) == doctest::Approx(31.5));
    Image g = model.respond_gradient(img);
    for (double v : g.values) CHECK(v == doctest::Approx(1.0 / 64.0));
}

TEST_CASE("complex cell rejects non-quadrature pairs") {
    GaborFilter a = centered_filter();
    GaborFilter b = a;
    b.phase = a.phase + 1.0;  // not pi/2
    CHECK_THROWS_AS(ComplexCellModel(a, b, 32, 32, 25.0), ModelError);
}

TEST_CASE("zero filters are rejected") {
    GaborFilter g = centered_filter();
    g.amplitude = 0.0;
    CHECK_THROWS_AS(SimpleCellModel(g, 32, 32, 25.0), ModelError);
    g.sigma = -1.0;
    CHECK_THROWS_AS(make_gabor(g, 32, 32), ModelError);
}
