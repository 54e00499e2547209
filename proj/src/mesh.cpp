#include "mei3d/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "mei3d/errors.hpp"

namespace mei3d {

void validate_mesh(const Mesh& mesh) {
    const int n = static_cast<int>(mesh.vertices.size());
    for (std::size_t t = 0; t < mesh.faces.size(); ++t) {
        const auto& f = mesh.faces[t];
        for (int k = 0; k < 3; ++k) {
            if (f[k] < 0 || f[k] >= n) {
                throw MeshError("face " + std::to_string(t) + " references vertex " +
                                std::to_string(f[k]) + " out of range [0, " + std::to_string(n) + ")");
            }
        }
        if (f[0] == f[1] || f[1] == f[2] || f[0] == f[2]) {
            throw MeshError("face " + std::to_string(t) + " has repeated vertex indices");
        }
    }
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        if (!finite(mesh.vertices[i])) {
            throw MeshError("vertex " + std::to_string(i) + " is not finite");
        }
    }
}

Topology build_topology(const Mesh& mesh) {
    validate_mesh(mesh);
    Topology topo;
    topo.neighbors.assign(mesh.vertices.size(), {});

    // map keyed on (min,max) gives deterministic lexicographic edge order
    std::map<std::array<int, 2>, bool> edge_set;
    for (const auto& f : mesh.faces) {
        const int idx[3] = {f[0], f[1], f[2]};
        for (int k = 0; k < 3; ++k) {
            int a = idx[k], b = idx[(k + 1) % 3];
            edge_set[{std::min(a, b), std::max(a, b)}] = true;
        }
    }
    topo.edges.reserve(edge_set.size());
    for (const auto& [e, _] : edge_set) {
        topo.edges.push_back(e);
        topo.neighbors[e[0]].push_back(e[1]);
        topo.neighbors[e[1]].push_back(e[0]);
    }
    for (auto& nbrs : topo.neighbors) std::sort(nbrs.begin(), nbrs.end());
    return topo;
}

namespace {

Mesh icosahedron(double radius) {
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    Mesh m;
    m.vertices = {
        {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
        {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
        {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
    };
    for (auto& v : m.vertices) v = normalized(v) * radius;
    m.faces = {
        {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
        {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
        {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
        {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1},
    };
    return m;
}

}  // namespace

Mesh make_sphere(int subdivisions, double radius, int max_subdivisions) {
    if (subdivisions < 0) throw MeshError("make_sphere: subdivisions must be >= 0");
    if (radius <= 0.0) throw MeshError("make_sphere: radius must be > 0");
    if (subdivisions > max_subdivisions) {
        throw MeshError("make_sphere: subdivision level " + std::to_string(subdivisions) +
                        " exceeds cap " + std::to_string(max_subdivisions));
    }

    Mesh m = icosahedron(radius);
    for (int level = 0; level < subdivisions; ++level) {
        std::map<std::array<int, 2>, int> midpoint;
        auto midpoint_index = [&](int a, int b) {
            std::array<int, 2> key{std::min(a, b), std::max(a, b)};
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3 mid = (m.vertices[a] + m.vertices[b]) * 0.5;
            m.vertices.push_back(normalized(mid) * radius);
            int idx = static_cast<int>(m.vertices.size()) - 1;
            midpoint.emplace(key, idx);
            return idx;
        };

        std::vector<FaceIndices> refined;
        refined.reserve(m.faces.size() * 4);
        for (const auto& f : m.faces) {
            int ab = midpoint_index(f[0], f[1]);
            int bc = midpoint_index(f[1], f[2]);
            int ca = midpoint_index(f[2], f[0]);
            refined.push_back({f[0], ab, ca});
            refined.push_back({f[1], bc, ab});
            refined.push_back({f[2], ca, bc});
            refined.push_back({ab, bc, ca});
        }
        m.faces = std::move(refined);
    }
    return m;
}

Mesh make_sheet(int nx, int ny, double extent) {
    if (nx < 2 || ny < 2) throw MeshError("make_sheet: nx and ny must be >= 2");
    if (extent <= 0.0) throw MeshError("make_sheet: extent must be > 0");

    Mesh m;
    m.vertices.reserve(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) {
            double x = -extent / 2.0 + extent * static_cast<double>(i) / (nx - 1);
            double y = -extent / 2.0 + extent * static_cast<double>(j) / (ny - 1);
            m.vertices.push_back({x, y, 0.0});
        }
    }
    auto idx = [nx](int i, int j) { return j * nx + i; };
    for (int j = 0; j + 1 < ny; ++j) {
        for (int i = 0; i + 1 < nx; ++i) {
            int a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
            // CCW seen from +z (the camera side)
            m.faces.push_back({a, b, c});
            m.faces.push_back({a, c, d});
        }
    }
    return m;
}

Mesh make_torus(double major_r, double minor_r, int n_major, int n_minor) {
    if (!(major_r > minor_r && minor_r > 0.0)) {
        throw MeshError("make_torus: need major_r > minor_r > 0");
    }
    if (n_major < 3 || n_minor < 3) throw MeshError("make_torus: need n_major, n_minor >= 3");

    const double two_pi = 6.283185307179586476925286766559;
    Mesh m;
    m.vertices.reserve(static_cast<std::size_t>(n_major) * n_minor);
    for (int i = 0; i < n_major; ++i) {
        double u = two_pi * i / n_major;
        for (int j = 0; j < n_minor; ++j) {
            double v = two_pi * j / n_minor;
            double ring = major_r + minor_r * std::cos(v);
            m.vertices.push_back({ring * std::cos(u), ring * std::sin(u), minor_r * std::sin(v)});
        }
    }
    auto idx = [n_minor](int i, int j) { return i * n_minor + j; };
    for (int i = 0; i < n_major; ++i) {
        int i1 = (i + 1) % n_major;
        for (int j = 0; j < n_minor; ++j) {
            int j1 = (j + 1) % n_minor;
            int a = idx(i, j), b = idx(i1, j), c = idx(i1, j1), d = idx(i, j1);
            m.faces.push_back({a, b, c});
            m.faces.push_back({a, c, d});
        }
    }
    return m;
}

double mesh_extent(const Mesh& mesh) {
    if (mesh.vertices.empty()) return 0.0;
    Vec3 lo = mesh.vertices[0], hi = mesh.vertices[0];
    for (const auto& v : mesh.vertices) {
        lo.x = std::min(lo.x, v.x); lo.y = std::min(lo.y, v.y); lo.z = std::min(lo.z, v.z);
        hi.x = std::max(hi.x, v.x); hi.y = std::max(hi.y, v.y); hi.z = std::max(hi.z, v.z);
    }
    return std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z});
}

double mean_edge_length(const Mesh& mesh, const Topology& topo) {
    if (topo.edges.empty()) return 0.0;
    double total = 0.0;
    for (const auto& e : topo.edges) total += norm(mesh.vertices[e[0]] - mesh.vertices[e[1]]);
    return total / static_cast<double>(topo.edges.size());
}

}  // namespace mei3d
