#include <doctest.h>

#include <cmath>

#include "mei3d/errors.hpp"
#include "mei3d/mesh.hpp"
#include "mei3d/optimize.hpp"
#include "mei3d/regularizers.hpp"
#include "mei3d/rng.hpp"

using namespace mei3d;

namespace {

Mesh tetrahedron() {
    Mesh m;
    m.vertices = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
    m.faces = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
    return m;
}

std::vector<Vec3> translated(const std::vector<Vec3>& verts, const Vec3& t) {
    std::vector<Vec3> out = verts;
    for (auto& v : out) v += t;
    return out;
}

std::vector<Vec3> rotated_z90(const std::vector<Vec3>& verts) {
    std::vector<Vec3> out(verts.size());
    for (std::size_t i = 0; i < verts.size(); ++i) {
        out[i] = {-verts[i].y, verts[i].x, verts[i].z};
    }
    return out;
}

// flatten vertices so check_gradients can drive the adjoint implementations
using VertLoss = std::function<double(const std::vector<Vec3>&)>;
using VertAdjoint = std::function<void(const std::vector<Vec3>&, std::vector<Vec3>&)>;

GradCheckResult check_vertex_gradient(const std::vector<Vec3>& verts, const VertLoss& loss,
                                      const VertAdjoint& adjoint, double h = 1e-5) {
    auto unflatten = [](const std::vector<double>& p) {
        std::vector<Vec3> v(p.size() / 3);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = {p[3 * i], p[3 * i + 1], p[3 * i + 2]};
        return v;
    };
    std::vector<double> point(verts.size() * 3);
    for (std::size_t i = 0; i < verts.size(); ++i) {
        point[3 * i] = verts[i].x;
        point[3 * i + 1] = verts[i].y;
        point[3 * i + 2] = verts[i].z;
    }
    auto value = [&](const std::vector<double>& p) { return loss(unflatten(p)); };
    auto grad = [&](const std::vector<double>& p) {
        auto v = unflatten(p);
        std::vector<Vec3> vbar(v.size());
        adjoint(v, vbar);
        std::vector<double> g(p.size());
        for (std::size_t i = 0; i < v.size(); ++i) {
            g[3 * i] = vbar[i].x;
            g[3 * i + 1] = vbar[i].y;
            g[3 * i + 2] = vbar[i].z;
        }
        return g;
    };
    return check_gradients(value, grad, point, h);
}

}  // namespace

TEST_CASE("laplacian: vertex at its neighbor centroid contributes zero") {
    // hexagonal fan: center 0 surrounded by 6 ring vertices
    Mesh m;
    m.vertices.push_back({0, 0, 0});
    for (int k = 0; k < 6; ++k) {
        double a = k * 3.14159265358979323846 / 3.0;
        m.vertices.push_back({std::cos(a), std::sin(a), 0.0});
    }
    for (int k = 0; k < 6; ++k) m.faces.push_back({0, 1 + k, 1 + (k + 1) % 6});
    Topology topo = build_topology(m);

    Vec3 mean{};
    for (int j : topo.neighbors[0]) mean += m.vertices[j];
    mean *= 1.0 / 6.0;
    CHECK(norm2(m.vertices[0] - mean) <= 1e-12);
}

TEST_CASE("laplacian: displaced tetrahedron matches the direct formula") {
    Mesh m = tetrahedron();
    m.vertices[2].z += 0.1;
    Topology topo = build_topology(m);

    // independent evaluation of the defining sum
    double expected = 0.0;
    for (std::size_t i = 0; i < m.vertices.size(); ++i) {
        Vec3 mean{};
        for (int j : topo.neighbors[i]) mean += m.vertices[j];
        mean *= 1.0 / static_cast<double>(topo.neighbors[i].size());
        expected += norm2(m.vertices[i] - mean);
    }
    expected /= static_cast<double>(m.vertices.size());

    CHECK(laplacian_loss(m.vertices, topo) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected > 0.0);
}

TEST_CASE("laplacian is translation invariant") {
    Mesh m = tetrahedron();
    m.vertices[1].x += 0.3;
    Topology topo = build_topology(m);
    double a = laplacian_loss(m.vertices, topo);
    double b = laplacian_loss(translated(m.vertices, {0.3, -0.2, 0.7}), topo);
    CHECK(std::abs(a - b) <= 1e-12);
}

TEST_CASE("laplacian rejects isolated vertices") {
    Mesh m = tetrahedron();
    Topology topo = build_topology(m);
    topo.neighbors.push_back({});  // pretend there is an extra isolated vertex
    std::vector<Vec3> verts = m.vertices;
    verts.push_back({5, 5, 5});
    CHECK_THROWS_AS(laplacian_loss(verts, topo), MeshError);
}

TEST_CASE("edge loss: equilateral triangle is exactly zero") {
    Mesh m;
    double s = std::sqrt(3.0) / 2.0;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0.5, s, 0}};
    m.faces = {{0, 1, 2}};
    Topology topo = build_topology(m);
    CHECK(edge_loss(m.vertices, topo) <= 1e-12);
}

TEST_CASE("edge loss: two disjoint edges of lengths 1 and 3 give variance 1") {
    std::vector<Vec3> verts = {{0, 0, 0}, {1, 0, 0}, {0, 2, 0}, {3, 2, 0}};
    Topology topo;
    topo.edges = {{0, 1}, {2, 3}};
    topo.neighbors = {{1}, {0}, {3}, {2}};
    CHECK(edge_loss(verts, topo) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("edge loss scales quadratically under uniform scaling") {
    Mesh m = tetrahedron();
    m.vertices[0].x += 0.4;
    Topology topo = build_topology(m);
    double base = edge_loss(m.vertices, topo);
    std::vector<Vec3> scaled = m.vertices;
    for (auto& v : scaled) v *= 1.7;
    CHECK(edge_loss(scaled, topo) == doctest::Approx(base * 1.7 * 1.7).epsilon(1e-12));
}

TEST_CASE("area loss: fresh sheet of congruent triangles is zero") {
    Mesh m = make_sheet(5, 5, 2.0);
    CHECK(area_loss(m.vertices, m.faces) <= 1e-12);
}

TEST_CASE("area loss: areas 0.5 and 1.5 give variance 0.25") {
    std::vector<Vec3> verts = {
        {0, 0, 0}, {1, 0, 0}, {0, 1, 0},   // area 1/2
        {3, 0, 0}, {4, 0, 0}, {3, 3, 0},   // area 3/2
    };
    std::vector<FaceIndices> faces = {{0, 1, 2}, {3, 4, 5}};
    CHECK(area_loss(verts, faces) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("area loss is rotation invariant") {
    Mesh m = tetrahedron();
    m.vertices[3].y -= 0.2;
    double a = area_loss(m.vertices, m.faces);
    double b = area_loss(rotated_z90(m.vertices), m.faces);
    CHECK(std::abs(a - b) <= 1e-12);
}

TEST_CASE("arap: per-edge scaling along original directions costs nothing") {
    Mesh m = tetrahedron();
    Topology topo = build_topology(m);
    ReferenceGeometry ref = ReferenceGeometry::from_mesh(m, topo);
    std::vector<Vec3> scaled = m.vertices;
    for (auto& v : scaled) v *= 2.3;  // uniform scaling about the origin scales every edge in place
    CHECK(arap_loss(scaled, ref, topo) <= 1e-12);
}

TEST_CASE("arap: a 90-degree rotated edge contributes its squared length") {
    Mesh base;
    base.vertices = {{0, 0, 0}, {2, 0, 0}};
    Topology topo;
    topo.edges = {{0, 1}};
    topo.neighbors = {{1}, {0}};
    ReferenceGeometry ref;
    ref.edge_directions = {{-1, 0, 0}};  // v0 - v1 direction
    ref.included = {1};

    std::vector<Vec3> rotated = {{0, 0, 0}, {0, 2, 0}};  // length preserved, orthogonal
    CHECK(arap_loss(rotated, ref, topo) == doctest::Approx(4.0).epsilon(1e-14));
}

TEST_CASE("arap is translation invariant but not rotation invariant") {
    Mesh m = tetrahedron();
    Topology topo = build_topology(m);
    ReferenceGeometry ref = ReferenceGeometry::from_mesh(m, topo);

    double at_translation = arap_loss(translated(m.vertices, {1.0, -2.0, 0.5}), ref, topo);
    CHECK(at_translation <= 1e-12);

    double at_rotation = arap_loss(rotated_z90(m.vertices), ref, topo);
    CHECK(at_rotation > 0.1);
}

TEST_CASE("arap excludes degenerate reference edges") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {0, 0, 0}, {1, 0, 0}};  // first edge has zero length
    m.faces = {{0, 1, 2}};
    Topology topo = build_topology(m);
    ReferenceGeometry ref = ReferenceGeometry::from_mesh(m, topo);
    CHECK(ref.excluded_count == 1);
    CHECK(arap_loss(m.vertices, ref, topo) <= 1e-12);
}

TEST_CASE("arap rejects mismatched reference geometry") {
    Mesh m = tetrahedron();
    Topology topo = build_topology(m);
    ReferenceGeometry ref;
    ref.edge_directions = {{1, 0, 0}};
    ref.included = {1};
    CHECK_THROWS_AS(arap_loss(m.vertices, ref, topo), Error);
}

TEST_CASE("chamfer: identical point sets give zero") {
    std::vector<Vec3> a = {{0, 0, 0}, {1, 2, 3}, {-1, 0.5, 2}};
    CHECK(chamfer_loss(a, a) == 0.0);
}

TEST_CASE("chamfer: singletons at distance d give 2 d^2") {
    std::vector<Vec3> a = {{0, 0, 0}};
    std::vector<Vec3> b = {{0, 0, 1.5}};
    CHECK(chamfer_loss(a, b) == doctest::Approx(2.0 * 1.5 * 1.5));
}

TEST_CASE("chamfer: asymmetric sets enumerate to 0.5") {
    std::vector<Vec3> a = {{0, 0, 0}, {1, 0, 0}};
    std::vector<Vec3> b = {{0, 0, 0}};
    CHECK(chamfer_loss(a, b) == doctest::Approx(0.5));
    CHECK(chamfer_loss(b, a) == doctest::Approx(0.5));  // symmetric by definition
}

TEST_CASE("chamfer rejects empty sets") {
    std::vector<Vec3> a = {{0, 0, 0}};
    std::vector<Vec3> empty;
    CHECK_THROWS_AS(chamfer_loss(a, empty), Error);
    CHECK_THROWS_AS(chamfer_loss(empty, a), Error);
}

TEST_CASE("grid nearest neighbors agree with brute force") {
    Rng rng(11);
    std::vector<Vec3> a(200), b(157);
    for (auto& p : a) p = {rng.normal(), rng.normal(), rng.normal()};
    for (auto& p : b) p = {rng.normal() * 0.7 + 0.3, rng.normal(), rng.normal() * 1.3};
    auto brute = nearest_neighbors_brute(a, b);
    auto grid = nearest_neighbors_grid(a, b);
    REQUIRE(brute.size() == grid.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(norm2(a[i] - b[brute[i]]) == norm2(a[i] - b[grid[i]]));
    }
}

TEST_CASE("surface samples stay on a single triangle") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {2, 0, 0}, {0, 2, 0}};
    m.faces = {{0, 1, 2}};
    auto pts = sample_surface(m, 500, 42);
    for (const auto& p : pts) {
        CHECK(p.z == 0.0);
        CHECK(p.x >= -1e-12);
        CHECK(p.y >= -1e-12);
        CHECK(p.x + p.y <= 2.0 + 1e-12);
    }
}

TEST_CASE("surface sampling is area weighted") {
    // two triangles with area ratio 3:1
    Mesh m;
    m.vertices = {{0, 0, 0}, {3, 0, 0}, {0, 2, 0}, {10, 0, 0}, {11, 0, 0}, {10, 2, 0}};
    m.faces = {{0, 1, 2}, {3, 4, 5}};
    SurfaceSamplePlan plan = plan_surface_samples(m, 10000, 123);
    int big = 0;
    for (int f : plan.face) big += f == 0 ? 1 : 0;
    double fraction = big / 10000.0;
    double sigma = std::sqrt(0.75 * 0.25 / 10000.0);
    CHECK(std::abs(fraction - 0.75) < 3.0 * sigma);
}

TEST_CASE("surface sampling is deterministic in the seed") {
    Mesh m = make_sphere(1, 1.0);
    auto a = sample_surface(m, 100, 7);
    auto b = sample_surface(m, 100, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].x == b[i].x);
        CHECK(a[i].y == b[i].y);
        CHECK(a[i].z == b[i].z);
    }
}

TEST_CASE("sampling a zero-area mesh is rejected") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};  // collinear
    m.faces = {{0, 1, 2}};
    CHECK_THROWS_AS(sample_surface(m, 10, 1), Error);
}

TEST_CASE("negative regularizer weights are rejected") {
    RegularizerWeights w;
    w.lambda_edge = -0.5;
    CHECK_THROWS_AS(w.validate(), ConfigError);
}

TEST_CASE("all four adjoints match central finite differences") {
    Mesh m = make_sphere(1, 1.0);  // 42 vertices
    Rng rng(5);
    for (auto& v : m.vertices) {
        v += Vec3{0.05 * rng.normal(), 0.05 * rng.normal(), 0.05 * rng.normal()};
    }
    Topology topo = build_topology(m);
    ReferenceGeometry ref = ReferenceGeometry::from_mesh(make_sphere(1, 1.0), topo);

    SUBCASE("laplacian") {
        auto res = check_vertex_gradient(
            m.vertices, [&](const std::vector<Vec3>& v) { return laplacian_loss(v, topo); },
            [&](const std::vector<Vec3>& v, std::vector<Vec3>& vbar) {
                laplacian_loss_adjoint(v, topo, 1.0, vbar);
            });
        CHECK(res.max_rel_error < 1e-6);
    }
    SUBCASE("edge") {
        auto res = check_vertex_gradient(
            m.vertices, [&](const std::vector<Vec3>& v) { return edge_loss(v, topo); },
            [&](const std::vector<Vec3>& v, std::vector<Vec3>& vbar) {
                edge_loss_adjoint(v, topo, 1.0, vbar);
            });
        CHECK(res.max_rel_error < 1e-6);
    }
    SUBCASE("area") {
        auto res = check_vertex_gradient(
            m.vertices, [&](const std::vector<Vec3>& v) { return area_loss(v, m.faces); },
            [&](const std::vector<Vec3>& v, std::vector<Vec3>& vbar) {
                area_loss_adjoint(v, m.faces, 1.0, vbar);
            });
        CHECK(res.max_rel_error < 1e-6);
    }
    SUBCASE("arap") {
        auto res = check_vertex_gradient(
            m.vertices, [&](const std::vector<Vec3>& v) { return arap_loss(v, ref, topo); },
            [&](const std::vector<Vec3>& v, std::vector<Vec3>& vbar) {
                arap_loss_adjoint(v, ref, topo, 1.0, vbar);
            });
        CHECK(res.max_rel_error < 1e-6);
    }
}

TEST_CASE("chamfer adjoint matches finite differences on separated sets") {
    Rng rng(29);
    std::vector<Vec3> a(20), b(25);
    for (auto& p : a) p = {rng.normal(), rng.normal(), rng.normal()};
    for (auto& p : b) p = {rng.normal() + 4.0, rng.normal(), rng.normal()};

    auto pack = [](const std::vector<Vec3>& va, const std::vector<Vec3>& vb) {
        std::vector<double> p;
        for (const auto& v : va) { p.push_back(v.x); p.push_back(v.y); p.push_back(v.z); }
        for (const auto& v : vb) { p.push_back(v.x); p.push_back(v.y); p.push_back(v.z); }
        return p;
    };
    auto unpack = [&](const std::vector<double>& p, std::vector<Vec3>& va, std::vector<Vec3>& vb) {
        va.resize(a.size());
        vb.resize(b.size());
        std::size_t i = 0;
        for (auto& v : va) { v = {p[i], p[i + 1], p[i + 2]}; i += 3; }
        for (auto& v : vb) { v = {p[i], p[i + 1], p[i + 2]}; i += 3; }
    };

    auto value = [&](const std::vector<double>& p) {
        std::vector<Vec3> va, vb;
        unpack(p, va, vb);
        return chamfer_loss(va, vb);
    };
    auto grad = [&](const std::vector<double>& p) {
        std::vector<Vec3> va, vb;
        unpack(p, va, vb);
        std::vector<Vec3> ga, gb;
        chamfer_loss_adjoint(va, vb, 1.0, ga, gb);
        return pack(ga, gb);
    };
    GradCheckResult res = check_gradients(value, grad, pack(a, b), 1e-5);
    CHECK(res.max_rel_error < 1e-6);
}
