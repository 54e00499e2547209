#pragma once
#include <cstdint>
#include <vector>

#include "mei3d/mesh.hpp"
#include "mei3d/vec3.hpp"

namespace mei3d {

struct RegularizerWeights {
    double lambda_laplacian = 0.0;
    double lambda_edge = 0.0;
    double lambda_area = 0.0;
    double lambda_arap = 0.0;

    void validate() const;  // all weights finite and >= 0
};

// Unit edge directions of the base mesh, captured before any deformation.
// Edges shorter than degenerate_cutoff are excluded from the ARAP sum.
struct ReferenceGeometry {
    std::vector<Vec3> edge_directions;   // one per topology edge; zero if excluded
    std::vector<std::uint8_t> included;  // 1 if the edge participates
    std::size_t excluded_count = 0;

    static ReferenceGeometry from_mesh(const Mesh& base, const Topology& topo,
                                       double degenerate_cutoff = 1e-9);
};

// Mean squared deviation of each vertex from the centroid of its 1-ring.
double laplacian_loss(const std::vector<Vec3>& vertices, const Topology& topo);
void laplacian_loss_adjoint(const std::vector<Vec3>& vertices, const Topology& topo,
                            double loss_adjoint, std::vector<Vec3>& vertex_adjoint);

// Population variance of edge lengths.
double edge_loss(const std::vector<Vec3>& vertices, const Topology& topo);
void edge_loss_adjoint(const std::vector<Vec3>& vertices, const Topology& topo,
                       double loss_adjoint, std::vector<Vec3>& vertex_adjoint);

// Population variance of triangle areas.
double area_loss(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces);
void area_loss_adjoint(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces,
                       double loss_adjoint, std::vector<Vec3>& vertex_adjoint);

// Direction-preserving rigidity: mean squared component of each deformed edge
// orthogonal to its reference direction. Zero iff every edge stays parallel
// to its original direction.
double arap_loss(const std::vector<Vec3>& vertices, const ReferenceGeometry& ref, const Topology& topo);
void arap_loss_adjoint(const std::vector<Vec3>& vertices, const ReferenceGeometry& ref,
                       const Topology& topo, double loss_adjoint, std::vector<Vec3>& vertex_adjoint);

// Symmetric mean of squared nearest-neighbor distances between point sets.
double chamfer_loss(const std::vector<Vec3>& points_a, const std::vector<Vec3>& points_b);

// Adjoint w.r.t. both point sets (nearest-neighbor assignments held fixed).
void chamfer_loss_adjoint(const std::vector<Vec3>& points_a, const std::vector<Vec3>& points_b,
                          double loss_adjoint, std::vector<Vec3>& adjoint_a,
                          std::vector<Vec3>& adjoint_b);

// Exact nearest-neighbor indices by brute force and by a uniform spatial grid;
// the two must agree on distances.
std::vector<int> nearest_neighbors_brute(const std::vector<Vec3>& from, const std::vector<Vec3>& to);
std::vector<int> nearest_neighbors_grid(const std::vector<Vec3>& from, const std::vector<Vec3>& to);

// Area-weighted surface sampling plan: face index plus barycentric weights per
// sample. Frozen plans keep Chamfer fitting differentiable through vertex
// positions.
struct SurfaceSamplePlan {
    std::vector<int> face;
    std::vector<Vec3> bary;  // (b0, b1, b2), nonnegative, summing to 1

    std::size_t size() const { return face.size(); }
};

SurfaceSamplePlan plan_surface_samples(const Mesh& mesh, int n, std::uint64_t seed);
SurfaceSamplePlan plan_surface_samples(const std::vector<Vec3>& vertices,
                                       const std::vector<FaceIndices>& faces, int n,
                                       std::uint64_t seed);

std::vector<Vec3> apply_sample_plan(const SurfaceSamplePlan& plan, const std::vector<Vec3>& vertices,
                                    const std::vector<FaceIndices>& faces);

// One-shot uniform-by-area sampling, deterministic in the seed.
std::vector<Vec3> sample_surface(const Mesh& mesh, int n, std::uint64_t seed);

}  // namespace mei3d
