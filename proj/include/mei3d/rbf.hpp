#pragma once
#include <string>
#include <vector>

#include "mei3d/mesh.hpp"
#include "mei3d/vec3.hpp"

namespace mei3d {

// Gaussian RBF displacement field. Centers are frozen at the base-mesh vertex
// positions; the learnable state is the per-kernel offset delta_k and the
// kernel width sigma_k, stored as log(sigma) so positivity holds by
// construction. Displacement at a point v:
//   dv = sum_k delta_k * exp(-|v - c_k|^2 / (2 sigma_k^2))
struct RbfField {
    std::vector<Vec3> centers;
    std::vector<Vec3> offsets;
    std::vector<double> log_scales;

    std::size_t kernel_count() const { return centers.size(); }
    void validate() const;  // throws on size mismatch or non-finite parameters
};

// Identity field with all vertices as control points; sigma defaults to the
// base mesh's mean edge length unless sigma0 > 0 is given.
RbfField make_identity_field(const Mesh& base, double sigma0 = 0.0);

struct DeformedMesh {
    const Mesh* base = nullptr;
    std::vector<Vec3> vertices;  // same ordering/face list as base

    std::size_t vertex_count() const { return vertices.size(); }
};

DeformedMesh deform(const Mesh& base, const RbfField& field);

// Reverse-mode adjoint of deform: given dL/dv' per deformed vertex, returns
// dL/ddelta_k and dL/dlog_sigma_k.
struct RbfAdjoint {
    std::vector<Vec3> offset_adjoint;
    std::vector<double> log_scale_adjoint;
};

RbfAdjoint deform_gradient(const Mesh& base, const RbfField& field,
                           const std::vector<Vec3>& vertex_adjoint);

// Flat parameter vector layout: [delta_0.xyz, ..., delta_{K-1}.xyz, log_sigma_0, ...].
std::vector<double> field_to_params(const RbfField& field);
void params_to_field(const std::vector<double>& params, RbfField& field);

// JSON serialization so an optimized stimulus can be reloaded for sweeps.
void save_field(const RbfField& field, const std::string& path);
RbfField load_field(const std::string& path);

}  // namespace mei3d
