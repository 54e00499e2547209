#include <doctest.h>

#include <zlib.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "mei3d/errors.hpp"
#include "mei3d/image.hpp"
#include "mei3d/mesh.hpp"
#include "mei3d/optimize.hpp"
#include "mei3d/render.hpp"
#include "mei3d/rng.hpp"

using namespace mei3d;

namespace {

Scene small_scene(int res = 64) {
    Scene s;
    s.width = res;
    s.height = res;
    return s;
}

DeformedMesh wrap(const Mesh& m) {
    DeformedMesh d;
    d.base = &m;
    d.vertices = m.vertices;
    return d;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("scene validation rejects bad parameters") {
    Scene s;
    s.width = 4;
    CHECK_THROWS_AS(s.validate(), RenderError);
    s = Scene{};
    s.fov_degrees = 180.0;
    CHECK_THROWS_AS(s.validate(), RenderError);
    s = Scene{};
    s.edge_softness = 0.0;
    CHECK_THROWS_AS(s.validate(), RenderError);
    s = Scene{};
    s.background = 1.5;
    CHECK_THROWS_AS(s.validate(), RenderError);
}

TEST_CASE("sub-pixel mesh renders as pure background") {
    Mesh m = make_sphere(1, 1.0);
    for (auto& v : m.vertices) v *= 1e-6;
    Scene s = small_scene();
    Image img = render(wrap(m), s);
    for (double v : img.values) {
        CHECK(std::abs(v - s.background) < 1e-3);
    }
}

TEST_CASE("zero faces render as the background image") {
    Mesh m;
    m.vertices = {{0, 0, 0}};
    Scene s = small_scene();
    Image img = render(wrap(m), s);
    for (double v : img.values) CHECK(v == s.background);
}

TEST_CASE("interior pixel of a frontal triangle matches the shading formula") {
    // constant-z triangle so the screen-space surface point is exact
    Mesh m;
    m.vertices = {{-5.0, -5.0, 0.0}, {5.0, -5.0, 0.0}, {0.0, 5.0, 0.0}};
    m.faces = {{0, 1, 2}};
    Scene s = small_scene(64);
    s.light_position = {0.0, 0.0, 80.0};  // far away on the camera axis
    s.light_intensity = 4000.0;
    s.ambient = 0.25;

    Image img = render(wrap(m), s);

    // independent evaluation at the pixel center (33, 31): project the camera
    // ray onto the z=0 plane, shade with the Lambertian formula
    const int row = 33, col = 31;
    double tanv = std::tan(s.fov_degrees * 3.14159265358979323846 / 360.0);
    double ndc_x = (col + 0.5) / (s.width / 2.0) - 1.0;
    double ndc_y = 1.0 - (row + 0.5) / (s.height / 2.0);
    Vec3 p{ndc_x * tanv * s.camera_height, ndc_y * tanv * s.camera_height, 0.0};
    Vec3 n{0.0, 0.0, 1.0};  // oriented toward the camera
    Vec3 lvec = s.light_position - p;
    double r2 = norm2(lvec);
    double expected = s.ambient + s.light_intensity * std::max(0.0, dot(n, lvec) / std::sqrt(r2)) / r2;
    REQUIRE(expected < 1.0);

    CHECK(img.at(row, col) == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("light behind the surface leaves only ambient") {
    Mesh m;
    m.vertices = {{-5.0, -5.0, 0.0}, {5.0, -5.0, 0.0}, {0.0, 5.0, 0.0}};
    m.faces = {{0, 1, 2}};
    Scene s = small_scene(32);
    s.light_position = {0.0, 0.0, -50.0};
    s.ambient = 0.3;
    Image img = render(wrap(m), s);
    CHECK(img.at(16, 16) == doctest::Approx(0.3).epsilon(1e-9));
}

TEST_CASE("pixels beyond the silhouette window are exactly background") {
    Mesh m = make_sphere(1, 0.4);
    Scene s = small_scene(64);
    Image img = render(wrap(m), s);
    // the sphere projects well inside the frame; corners are far outside
    CHECK(img.at(0, 0) == s.background);
    CHECK(img.at(0, 63) == s.background);
    CHECK(img.at(63, 0) == s.background);
    CHECK(img.at(63, 63) == s.background);
}

TEST_CASE("shading is monotone in light intensity") {
    Mesh m = make_sphere(1, 1.0);
    Scene s = small_scene(48);
    s.ambient = 0.1;
    s.light_intensity = 1.0;
    Image a = render(wrap(m), s);
    s.light_intensity = 2.0;
    Image b = render(wrap(m), s);
    s.light_intensity = 3.0;
    Image c = render(wrap(m), s);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        CHECK(b.values[i] >= a.values[i] - 1e-15);
        CHECK(c.values[i] >= b.values[i] - 1e-15);
    }
}

TEST_CASE("rendering is deterministic") {
    Mesh m = make_sphere(2, 1.0);
    Scene s = small_scene(64);
    Image a = render(wrap(m), s);
    Image b = render(wrap(m), s);
    CHECK(a.values == b.values);
}

TEST_CASE("meshes reaching the camera plane are rejected") {
    Mesh m = make_sphere(0, 1.0);
    m.vertices[0].z = 2.7;  // exactly at the camera
    Scene s = small_scene();
    CHECK_THROWS_AS(render(wrap(m), s), RenderError);

    Mesh nan_mesh = make_sphere(0, 1.0);
    nan_mesh.vertices[2].x = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(render(wrap(nan_mesh), s), RenderError);
}

TEST_CASE("render gradient w.r.t. vertices matches finite differences") {
    Mesh base = make_sphere(1, 1.0);
    Scene s = small_scene(32);
    s.light_intensity = 2.0;

    auto unflatten = [&](const std::vector<double>& p) {
        std::vector<Vec3> v(p.size() / 3);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
        return v;
    };
    auto value = [&](const std::vector<double>& p) {
        RenderCache cache;
        Image img = render_forward(unflatten(p), base.faces, s, cache);
        return image_mean(img);
    };
    auto grad = [&](const std::vector<double>& p) {
        auto verts = unflatten(p);
        RenderCache cache;
        Image img = render_forward(verts, base.faces, s, cache);
        Image adj(img.width, img.height, 1.0 / static_cast<double>(img.pixel_count()));
        RenderAdjoint radj = render_backward(verts, base.faces, s, cache, adj);
        std::vector<double> g(p.size());
        for (std::size_t i = 0; i < verts.size(); ++i) {
            g[3 * i] = radj.vertex_adjoint[i].x;
            g[3 * i + 1] = radj.vertex_adjoint[i].y;
            g[3 * i + 2] = radj.vertex_adjoint[i].z;
        }
        return g;
    };

    std::vector<double> point(base.vertices.size() * 3);
    for (std::size_t i = 0; i < base.vertices.size(); ++i) {
        point[3 * i] = base.vertices[i].x;
        point[3 * i + 1] = base.vertices[i].y;
        point[3 * i + 2] = base.vertices[i].z;
    }
    GradCheckResult res = check_gradients(value, grad, point, 1e-4);
    CAPTURE(res.worst_index);
    CAPTURE(res.analytic_at_worst);
    CAPTURE(res.numeric_at_worst);
    CHECK(res.max_rel_error < 1e-2);
}

TEST_CASE("render gradient w.r.t. the light position matches finite differences") {
    // frontal triangle: no terminator, so no pixel sits on the max(0, n.l) kink
    Mesh base;
    base.vertices = {{-2.0, -2.0, 0.0}, {2.0, -2.0, 0.0}, {0.0, 2.0, 0.3}};
    base.faces = {{0, 1, 2}};
    Scene s = small_scene(32);
    s.light_intensity = 1.0;

    auto value = [&](const std::vector<double>& p) {
        Scene sc = s;
        sc.light_position = {p[0], p[1], p[2]};
        RenderCache cache;
        Image img = render_forward(base.vertices, base.faces, sc, cache);
        return image_mean(img);
    };
    auto grad = [&](const std::vector<double>& p) {
        Scene sc = s;
        sc.light_position = {p[0], p[1], p[2]};
        RenderCache cache;
        Image img = render_forward(base.vertices, base.faces, sc, cache);
        Image adj(img.width, img.height, 1.0 / static_cast<double>(img.pixel_count()));
        RenderAdjoint radj = render_backward(base.vertices, base.faces, sc, cache, adj);
        return std::vector<double>{radj.light_adjoint.x, radj.light_adjoint.y, radj.light_adjoint.z};
    };
    GradCheckResult res = check_gradients(value, grad, {0.0, 0.3, 2.6}, 1e-5);
    CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("normalize_image hits the target norm") {
    Rng rng(13);
    Image img(16, 16);
    for (double& v : img.values) v = 0.5 + 0.1 * rng.normal();
    NormalizationSpec spec;
    Image out = normalize_image(img, spec);
    CHECK(std::abs(image_l2_norm(out) - 25.0) < 1e-9);
}

TEST_CASE("normalize_image worked example") {
    Image img(2, 2);
    img.values = {0.0, 0.0, 1.0, 1.0};
    NormalizationSpec spec;  // mean 0, std 1, norm 25
    Image out = normalize_image(img, spec);
    CHECK(out.values[0] == doctest::Approx(-12.5).epsilon(1e-12));
    CHECK(out.values[1] == doctest::Approx(-12.5).epsilon(1e-12));
    CHECK(out.values[2] == doctest::Approx(12.5).epsilon(1e-12));
    CHECK(out.values[3] == doctest::Approx(12.5).epsilon(1e-12));
}

TEST_CASE("normalize_image fixes its own output") {
    Rng rng(19);
    Image img(8, 8);
    for (double& v : img.values) v = rng.normal();
    NormalizationSpec spec;
    Image once = normalize_image(img, spec);
    // feeding the output back with its own statistics as targets reproduces it
    NormalizationSpec fixed_spec;
    fixed_spec.target_mean = image_mean(once);
    fixed_spec.target_std = image_std(once);
    fixed_spec.target_norm = image_l2_norm(once);
    Image twice = normalize_image(once, fixed_spec);
    for (std::size_t i = 0; i < once.values.size(); ++i) {
        CHECK(twice.values[i] == doctest::Approx(once.values[i]).epsilon(1e-9));
    }
}

TEST_CASE("constant images cannot be normalized") {
    Image img(8, 8, 0.5);
    CHECK_THROWS_AS(normalize_image(img, NormalizationSpec{}), RenderError);
}

TEST_CASE("normalize_image backward matches finite differences") {
    Rng rng(23);
    Image img(6, 6);
    for (double& v : img.values) v = 0.4 + 0.2 * rng.normal();
    NormalizationSpec spec;
    Image upstream(6, 6);
    for (double& v : upstream.values) v = rng.normal();

    auto value = [&](const std::vector<double>& p) {
        Image x(6, 6);
        x.values = p;
        Image out = normalize_image(x, spec);
        double s = 0.0;
        for (std::size_t i = 0; i < out.values.size(); ++i) s += upstream.values[i] * out.values[i];
        return s;
    };
    auto grad = [&](const std::vector<double>& p) {
        Image x(6, 6);
        x.values = p;
        Image g = normalize_image_backward(x, spec, upstream);
        return g.values;
    };
    GradCheckResult res = check_gradients(value, grad, img.values, 1e-6);
    CHECK(res.max_rel_error < 1e-6);
}

TEST_CASE("pgm quantization rounds half up") {
    Image img(4, 4, 0.5);
    auto bytes = quantize_image(img, PixelWindow::Fixed01);
    for (unsigned char b : bytes) CHECK(b == 128);
}

TEST_CASE("min-max window maps constant images to zeros") {
    Image img(4, 4, 0.7);
    auto bytes = quantize_image(img, PixelWindow::MinMax);
    for (unsigned char b : bytes) CHECK(b == 0);
}

TEST_CASE("pgm output is byte-deterministic") {
    Mesh m = make_sphere(1, 1.0);
    Scene s = small_scene(32);
    Image img = render(wrap(m), s);
    std::string p1 = temp_path("mei3d_golden_a.pgm");
    std::string p2 = temp_path("mei3d_golden_b.pgm");
    write_pgm(img, p1);
    write_pgm(img, p2);
    CHECK(slurp(p1) == slurp(p2));
    std::string content = slurp(p1);
    CHECK(content.substr(0, 3) == "P2\n");
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}

TEST_CASE("png output decodes back to the quantized pixels") {
    Mesh m = make_sphere(1, 1.0);
    Scene s = small_scene(16);
    Image img = render(wrap(m), s);
    std::string path = temp_path("mei3d_test.png");
    write_png(img, path);
    std::string content = slurp(path);
    REQUIRE(content.size() > 45);
    CHECK(static_cast<unsigned char>(content[0]) == 0x89);
    CHECK(content.substr(1, 3) == "PNG");

    std::size_t idat_pos = content.find("IDAT");
    REQUIRE(idat_pos != std::string::npos);
    std::uint32_t idat_len = 0;
    for (int k = 0; k < 4; ++k) {
        idat_len = (idat_len << 8) | static_cast<unsigned char>(content[idat_pos - 4 + k]);
    }
    std::vector<unsigned char> raw(static_cast<std::size_t>(16 * 17));
    uLongf raw_len = raw.size();
    int rc = uncompress(raw.data(), &raw_len,
                        reinterpret_cast<const unsigned char*>(content.data() + idat_pos + 4),
                        idat_len);
    REQUIRE(rc == Z_OK);
    REQUIRE(raw_len == static_cast<uLongf>(16 * 17));

    auto expected = quantize_image(img, PixelWindow::Fixed01);
    for (int row = 0; row < 16; ++row) {
        CHECK(raw[static_cast<std::size_t>(row) * 17] == 0);  // filter byte
        for (int col = 0; col < 16; ++col) {
            CHECK(raw[static_cast<std::size_t>(row) * 17 + 1 + col] ==
                  expected[static_cast<std::size_t>(row) * 16 + col]);
        }
    }
    std::remove(path.c_str());
}

TEST_CASE("unknown image format is rejected") {
    Image img(8, 8, 0.5);
    CHECK_THROWS_AS(write_image(img, temp_path("x.bmp"), "bmp"), ConfigError);
}
