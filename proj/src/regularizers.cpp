#include "mei3d/regularizers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_map>

#include "mei3d/errors.hpp"
#include "mei3d/rng.hpp"

namespace mei3d {

void RegularizerWeights::validate() const {
    const double ws[4] = {lambda_laplacian, lambda_edge, lambda_area, lambda_arap};
    const char* names[4] = {"lambda_laplacian", "lambda_edge", "lambda_area", "lambda_arap"};
    for (int i = 0; i < 4; ++i) {
        if (!std::isfinite(ws[i]) || ws[i] < 0.0) {
            throw ConfigError(std::string("regularizer weight ") + names[i] + " must be finite and >= 0");
        }
    }
}

ReferenceGeometry ReferenceGeometry::from_mesh(const Mesh& base, const Topology& topo,
                                               double degenerate_cutoff) {
    ReferenceGeometry ref;
    ref.edge_directions.resize(topo.edges.size());
    ref.included.assign(topo.edges.size(), 1);
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        Vec3 d = base.vertices[topo.edges[e][0]] - base.vertices[topo.edges[e][1]];
        double len = norm(d);
        if (len < degenerate_cutoff) {
            ref.edge_directions[e] = Vec3{};
            ref.included[e] = 0;
            ++ref.excluded_count;
        } else {
            ref.edge_directions[e] = d * (1.0 / len);
        }
    }
    return ref;
}

double laplacian_loss(const std::vector<Vec3>& vertices, const Topology& topo) {
    if (topo.neighbors.size() != vertices.size()) throw Error("laplacian_loss: topology mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const auto& nbrs = topo.neighbors[i];
        if (nbrs.empty()) throw MeshError("laplacian_loss: vertex " + std::to_string(i) + " is isolated");
        Vec3 mean{};
        for (int j : nbrs) mean += vertices[j];
        mean *= 1.0 / static_cast<double>(nbrs.size());
        total += norm2(vertices[i] - mean);
    }
    return total / static_cast<double>(vertices.size());
}

void laplacian_loss_adjoint(const std::vector<Vec3>& vertices, const Topology& topo,
                            double loss_adjoint, std::vector<Vec3>& vertex_adjoint) {
    vertex_adjoint.resize(vertices.size());
    const double scale = 2.0 * loss_adjoint / static_cast<double>(vertices.size());
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        const auto& nbrs = topo.neighbors[i];
        Vec3 mean{};
        for (int j : nbrs) mean += vertices[j];
        double inv_n = 1.0 / static_cast<double>(nbrs.size());
        mean *= inv_n;
        Vec3 diff = (vertices[i] - mean) * scale;
        vertex_adjoint[i] += diff;
        for (int j : nbrs) vertex_adjoint[j] -= diff * inv_n;
    }
}

double edge_loss(const std::vector<Vec3>& vertices, const Topology& topo) {
    if (topo.edges.empty()) throw Error("edge_loss: mesh has no edges");
    const double n = static_cast<double>(topo.edges.size());
    double mean = 0.0;
    for (const auto& e : topo.edges) mean += norm(vertices[e[0]] - vertices[e[1]]);
    mean /= n;
    double total = 0.0;
    for (const auto& e : topo.edges) {
        double d = norm(vertices[e[0]] - vertices[e[1]]) - mean;
        total += d * d;
    }
    return total / n;
}

void edge_loss_adjoint(const std::vector<Vec3>& vertices, const Topology& topo,
                       double loss_adjoint, std::vector<Vec3>& vertex_adjoint) {
    vertex_adjoint.resize(vertices.size());
    const double n = static_cast<double>(topo.edges.size());
    double mean = 0.0;
    for (const auto& e : topo.edges) mean += norm(vertices[e[0]] - vertices[e[1]]);
    mean /= n;
    // dL/dlen_e = (2/n)(len_e - mean); the mean term cancels since sum(len-mean)=0
    for (const auto& e : topo.edges) {
        Vec3 d = vertices[e[0]] - vertices[e[1]];
        double len = norm(d);
        if (len < 1e-300) continue;
        double g = loss_adjoint * 2.0 / n * (len - mean);
        Vec3 dir = d * (g / len);
        vertex_adjoint[e[0]] += dir;
        vertex_adjoint[e[1]] -= dir;
    }
}

namespace {

inline double triangle_area(const std::vector<Vec3>& v, const FaceIndices& f) {
    return 0.5 * norm(cross(v[f[1]] - v[f[0]], v[f[2]] - v[f[0]]));
}

}  // namespace

double area_loss(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces) {
    if (faces.empty()) throw Error("area_loss: mesh has no faces");
    const double n = static_cast<double>(faces.size());
    double mean = 0.0;
    for (const auto& f : faces) mean += triangle_area(vertices, f);
    mean /= n;
    double total = 0.0;
    for (const auto& f : faces) {
        double d = triangle_area(vertices, f) - mean;
        total += d * d;
    }
    return total / n;
}

void area_loss_adjoint(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces,
                       double loss_adjoint, std::vector<Vec3>& vertex_adjoint) {
    vertex_adjoint.resize(vertices.size());
    const double n = static_cast<double>(faces.size());
    double mean = 0.0;
    for (const auto& f : faces) mean += triangle_area(vertices, f);
    mean /= n;
    for (const auto& f : faces) {
        Vec3 a = vertices[f[1]] - vertices[f[0]];
        Vec3 b = vertices[f[2]] - vertices[f[0]];
        Vec3 c = cross(a, b);
        double cn = norm(c);
        if (cn < 1e-300) continue;  // degenerate: area 0 with undefined direction
        double area = 0.5 * cn;
        double g = loss_adjoint * 2.0 / n * (area - mean);
        // dA/dc = c / (2|c|)
        Vec3 cbar = c * (g * 0.5 / cn);
        Vec3 abar = cross(b, cbar);
        Vec3 bbar = cross(cbar, a);
        vertex_adjoint[f[1]] += abar;
        vertex_adjoint[f[2]] += bbar;
        vertex_adjoint[f[0]] -= abar + bbar;
    }
}

double arap_loss(const std::vector<Vec3>& vertices, const ReferenceGeometry& ref, const Topology& topo) {
    if (ref.edge_directions.size() != topo.edges.size()) {
        throw Error("arap_loss: reference geometry does not match edge count");
    }
    std::size_t used = 0;
    double total = 0.0;
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        if (!ref.included[e]) continue;
        Vec3 d = vertices[topo.edges[e][0]] - vertices[topo.edges[e][1]];
        Vec3 resid = d - ref.edge_directions[e] * dot(d, ref.edge_directions[e]);
        total += norm2(resid);
        ++used;
    }
    if (used == 0) throw Error("arap_loss: no usable edges in reference geometry");
    return total / static_cast<double>(used);
}

void arap_loss_adjoint(const std::vector<Vec3>& vertices, const ReferenceGeometry& ref,
                       const Topology& topo, double loss_adjoint, std::vector<Vec3>& vertex_adjoint) {
    vertex_adjoint.resize(vertices.size());
    std::size_t used = 0;
    for (std::size_t e = 0; e < topo.edges.size(); ++e) used += ref.included[e] ? 1 : 0;
    if (used == 0) return;
    const double scale = 2.0 * loss_adjoint / static_cast<double>(used);
    for (std::size_t e = 0; e < topo.edges.size(); ++e) {
        if (!ref.included[e]) continue;
        Vec3 d = vertices[topo.edges[e][0]] - vertices[topo.edges[e][1]];
        Vec3 resid = d - ref.edge_directions[e] * dot(d, ref.edge_directions[e]);
        Vec3 g = resid * scale;  // projector is symmetric idempotent: d(|Pd|^2)/dd = 2Pd
        vertex_adjoint[topo.edges[e][0]] += g;
        vertex_adjoint[topo.edges[e][1]] -= g;
    }
}

std::vector<int> nearest_neighbors_brute(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    if (to.empty()) throw Error("nearest_neighbors: empty target set");
    std::vector<int> nn(from.size(), 0);
    for (std::size_t i = 0; i < from.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        int best_j = 0;
        for (std::size_t j = 0; j < to.size(); ++j) {
            double d = norm2(from[i] - to[j]);
            if (d < best) {
                best = d;
                best_j = static_cast<int>(j);
            }
        }
        nn[i] = best_j;
    }
    return nn;
}

namespace {

struct UniformGrid {
    Vec3 origin;
    double cell = 1.0;
    int nx = 1, ny = 1, nz = 1;
    std::vector<std::vector<int>> cells;

    static UniformGrid build(const std::vector<Vec3>& pts) {
        UniformGrid g;
        Vec3 lo = pts[0], hi = pts[0];
        for (const auto& p : pts) {
            lo.x = std::min(lo.x, p.x); lo.y = std::min(lo.y, p.y); lo.z = std::min(lo.z, p.z);
            hi.x = std::max(hi.x, p.x); hi.y = std::max(hi.y, p.y); hi.z = std::max(hi.z, p.z);
        }
        double span = std::max({hi.x - lo.x, hi.y - lo.y, hi.z - lo.z, 1e-12});
        // target ~ a few points per cell
        int target = std::max(1, static_cast<int>(std::cbrt(static_cast<double>(pts.size()) / 4.0)));
        g.cell = span / target;
        g.origin = lo;
        g.nx = static_cast<int>((hi.x - lo.x) / g.cell) + 1;
        g.ny = static_cast<int>((hi.y - lo.y) / g.cell) + 1;
        g.nz = static_cast<int>((hi.z - lo.z) / g.cell) + 1;
        g.cells.resize(static_cast<std::size_t>(g.nx) * g.ny * g.nz);
        for (std::size_t i = 0; i < pts.size(); ++i) {
            g.cells[g.cell_index(g.clamp_coords(pts[i]))].push_back(static_cast<int>(i));
        }
        return g;
    }

    std::array<int, 3> clamp_coords(const Vec3& p) const {
        auto cl = [](int v, int n) { return std::min(std::max(v, 0), n - 1); };
        return {cl(static_cast<int>((p.x - origin.x) / cell), nx),
                cl(static_cast<int>((p.y - origin.y) / cell), ny),
                cl(static_cast<int>((p.z - origin.z) / cell), nz)};
    }

    std::size_t cell_index(const std::array<int, 3>& c) const {
        return (static_cast<std::size_t>(c[2]) * ny + c[1]) * nx + c[0];
    }
};

}  // namespace

std::vector<int> nearest_neighbors_grid(const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
    if (to.empty()) throw Error("nearest_neighbors: empty target set");
    UniformGrid grid = UniformGrid::build(to);
    std::vector<int> nn(from.size(), 0);
    for (std::size_t i = 0; i < from.size(); ++i) {
        const Vec3 p = from[i];
        auto base = grid.clamp_coords(p);
        double best = std::numeric_limits<double>::infinity();
        int best_j = 0;
        // expand rings of cells until the found distance bounds the unexplored shell
        for (int ring = 0;; ++ring) {
            bool any_cell = false;
            for (int dz = -ring; dz <= ring; ++dz) {
                for (int dy = -ring; dy <= ring; ++dy) {
                    for (int dx = -ring; dx <= ring; ++dx) {
                        if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) continue;
                        int cx = base[0] + dx, cy = base[1] + dy, cz = base[2] + dz;
                        if (cx < 0 || cy < 0 || cz < 0 || cx >= grid.nx || cy >= grid.ny || cz >= grid.nz) continue;
                        any_cell = true;
                        for (int j : grid.cells[grid.cell_index({cx, cy, cz})]) {
                            double d = norm2(p - to[j]);
                            if (d < best || (d == best && j < best_j)) {
                                best = d;
                                best_j = j;
                            }
                        }
                    }
                }
            }
            if (best < std::numeric_limits<double>::infinity()) {
                // closest possible point in the next unexplored ring
                double safe = static_cast<double>(ring) * grid.cell;
                if (best <= safe * safe) break;
            }
            if (!any_cell && ring > std::max({grid.nx, grid.ny, grid.nz})) break;
        }
        nn[i] = best_j;
    }
    return nn;
}

double chamfer_loss(const std::vector<Vec3>& points_a, const std::vector<Vec3>& points_b) {
    if (points_a.empty() || points_b.empty()) throw Error("chamfer_loss: empty point set");
    auto nn_ab = nearest_neighbors_grid(points_a, points_b);
    auto nn_ba = nearest_neighbors_grid(points_b, points_a);
    double sum_a = 0.0, sum_b = 0.0;
    for (std::size_t i = 0; i < points_a.size(); ++i) sum_a += norm2(points_a[i] - points_b[nn_ab[i]]);
    for (std::size_t j = 0; j < points_b.size(); ++j) sum_b += norm2(points_b[j] - points_a[nn_ba[j]]);
    return sum_a / static_cast<double>(points_a.size()) + sum_b / static_cast<double>(points_b.size());
}

void chamfer_loss_adjoint(const std::vector<Vec3>& points_a, const std::vector<Vec3>& points_b,
                          double loss_adjoint, std::vector<Vec3>& adjoint_a,
                          std::vector<Vec3>& adjoint_b) {
    if (points_a.empty() || points_b.empty()) throw Error("chamfer_loss: empty point set");
    adjoint_a.resize(points_a.size());
    adjoint_b.resize(points_b.size());
    auto nn_ab = nearest_neighbors_grid(points_a, points_b);
    auto nn_ba = nearest_neighbors_grid(points_b, points_a);
    const double sa = 2.0 * loss_adjoint / static_cast<double>(points_a.size());
    const double sb = 2.0 * loss_adjoint / static_cast<double>(points_b.size());
    for (std::size_t i = 0; i < points_a.size(); ++i) {
        Vec3 g = (points_a[i] - points_b[nn_ab[i]]) * sa;
        adjoint_a[i] += g;
        adjoint_b[nn_ab[i]] -= g;
    }
    for (std::size_t j = 0; j < points_b.size(); ++j) {
        Vec3 g = (points_b[j] - points_a[nn_ba[j]]) * sb;
        adjoint_b[j] += g;
        adjoint_a[nn_ba[j]] -= g;
    }
}

SurfaceSamplePlan plan_surface_samples(const std::vector<Vec3>& vertices,
                                       const std::vector<FaceIndices>& faces, int n,
                                       std::uint64_t seed) {
    if (n < 1) throw Error("plan_surface_samples: n must be >= 1");
    if (faces.empty()) throw Error("plan_surface_samples: mesh has no faces");

    std::vector<double> cumulative(faces.size());
    double total = 0.0;
    for (std::size_t t = 0; t < faces.size(); ++t) {
        total += triangle_area(vertices, faces[t]);
        cumulative[t] = total;
    }
    if (total <= 0.0) throw Error("plan_surface_samples: total surface area is zero");

    Rng rng(seed);
    SurfaceSamplePlan plan;
    plan.face.resize(n);
    plan.bary.resize(n);
    for (int s = 0; s < n; ++s) {
        double u = rng.uniform() * total;
        auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        int t = static_cast<int>(std::min<std::size_t>(it - cumulative.begin(), faces.size() - 1));
        double b1 = rng.uniform(), b2 = rng.uniform();
        if (b1 + b2 > 1.0) {  // fold into the triangle
            b1 = 1.0 - b1;
            b2 = 1.0 - b2;
        }
        plan.face[s] = t;
        plan.bary[s] = {1.0 - b1 - b2, b1, b2};
    }
    return plan;
}

SurfaceSamplePlan plan_surface_samples(const Mesh& mesh, int n, std::uint64_t seed) {
    return plan_surface_samples(mesh.vertices, mesh.faces, n, seed);
}

std::vector<Vec3> apply_sample_plan(const SurfaceSamplePlan& plan, const std::vector<Vec3>& vertices,
                                    const std::vector<FaceIndices>& faces) {
    std::vector<Vec3> pts(plan.size());
    for (std::size_t s = 0; s < plan.size(); ++s) {
        const auto& f = faces[plan.face[s]];
        const Vec3 b = plan.bary[s];
        pts[s] = vertices[f[0]] * b.x + vertices[f[1]] * b.y + vertices[f[2]] * b.z;
    }
    return pts;
}

std::vector<Vec3> sample_surface(const Mesh& mesh, int n, std::uint64_t seed) {
    auto plan = plan_surface_samples(mesh, n, seed);
    return apply_sample_plan(plan, mesh.vertices, mesh.faces);
}

}  // namespace mei3d
