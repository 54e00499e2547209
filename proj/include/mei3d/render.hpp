#pragma once
#include <vector>

#include "mei3d/image.hpp"
#include "mei3d/mesh.hpp"
#include "mei3d/rbf.hpp"
#include "mei3d/vec3.hpp"

namespace mei3d {

// Fixed overhead camera at (0, 0, camera_height) looking at the origin with
// world +y as image up; movable point light; uniform gray background.
struct Scene {
    double camera_height = 2.7;
    double fov_degrees = 60.0;
    int width = 128;
    int height = 128;
    Vec3 light_position{0.0, 0.3, 2.6};
    double light_intensity = 4.0;
    double ambient = 0.3;
    double background = 0.5;
    double edge_softness = 1.5;  // sigma of the silhouette sigmoid, in pixels
    double depth_blend = 0.02;   // width of the occlusion depth sigmoid, world units

    void validate() const;  // throws RenderError on out-of-range parameters
};

// Screen-space projection of a world point: pixel coordinates with row 0 at
// the top, plus camera depth. Exposed for tests and sweep tooling.
struct Projected {
    double sx, sy, depth;
};
Projected project_point(const Scene& scene, const Vec3& p);

// Per-pixel candidate faces found by the forward pass, reused in backward.
struct RenderCache {
    std::vector<std::vector<int>> candidates;
};

// Differentiable rendering of a deformed mesh.
//
// Each face contributes a coverage weight c = pw(d / edge_softness) * s where
// d is the signed screen-space distance to the projected triangle (positive
// inside), pw a sigmoid profile windowed to zero beyond 5 sigma, and s a
// solidity factor that fades sub-pixel triangles out. Faces composite by soft
// transmittance: face i carries weight c_i * prod_j (1 - c_j * occ_ij) with
// occ_ij a depth sigmoid of width depth_blend, and the background carries the
// full transmittance prod_j (1 - c_j). Occlusion, silhouettes, and shading
// all stay differentiable in the vertex positions and the light.
Image render(const DeformedMesh& mesh, const Scene& scene);
Image render_forward(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces,
                     const Scene& scene, RenderCache& cache);

struct RenderAdjoint {
    std::vector<Vec3> vertex_adjoint;
    Vec3 light_adjoint;
};

// Reverse-mode pass; image_adjoint is dLoss/dpixel. The cache must come from
// render_forward on the same inputs.
RenderAdjoint render_backward(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces,
                              const Scene& scene, const RenderCache& cache,
                              const Image& image_adjoint);

// Normalization applied before a response model sees the image: standardize
// to (target_mean, target_std), then rescale so the L2 norm over all pixels
// equals target_norm.
struct NormalizationSpec {
    double target_mean = 0.0;
    double target_std = 1.0;
    double target_norm = 25.0;

    void validate() const;
};

Image normalize_image(const Image& img, const NormalizationSpec& spec);

// dLoss/dinput given dLoss/doutput.
Image normalize_image_backward(const Image& input, const NormalizationSpec& spec,
                               const Image& output_adjoint);

}  // namespace mei3d
