#include "mei3d/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "mei3d/errors.hpp"

namespace mei3d {

namespace {

constexpr double kSilhouetteWindow = 5.0;   // coverage support, in units of edge_softness
constexpr double kSolidityArea = 0.05;      // projected area (px^2) at which a face is half faded
constexpr double kBackgroundAnchor = 1e-12; // keeps the shading blend defined on empty pixels
constexpr double kMinCameraDepth = 1e-6;
// Smooth camera-facing factor tanh(nz / kOrientSoftness) stands in for a hard
// normal flip; a hard flip jumps when rim faces cross edge-on, which breaks
// vertex gradients.
constexpr double kOrientSoftness = 0.08;
// Pixels in the coverage band outside a triangle still need a surface point.
// Plane barycentrics are soft-clamped to [-kLambdaOverhang, 1+kLambdaOverhang]:
// the identity on [0,1] keeps interior shading exact, the C1 tanh saturation
// keeps band points bounded without the derivative kinks a hard clamp has.
constexpr double kLambdaOverhang = 0.35;
// The coverage field is a log-sum-exp softmin over the signed distances to
// the three edge lines (positive toward the triangle interior). Hard mins and
// closest-point clamps kink on the interior medial axis and at corners; the
// price of the smooth field is that the coverage band widens somewhat past
// sharp corners, where line distance undershoots point distance.
constexpr double kDistSoftmin = 0.5;  // pixels

double softclamp01(double x) {
    if (x < 0.0) return kLambdaOverhang * std::tanh(x / kLambdaOverhang);
    if (x > 1.0) return 1.0 + kLambdaOverhang * std::tanh((x - 1.0) / kLambdaOverhang);
    return x;
}

double softclamp01_slope(double x) {
    if (x < 0.0) {
        double t = std::tanh(x / kLambdaOverhang);
        return 1.0 - t * t;
    }
    if (x > 1.0) {
        double t = std::tanh((x - 1.0) / kLambdaOverhang);
        return 1.0 - t * t;
    }
    return 1.0;
}

struct Vec2 {
    double x{}, y{};
};
inline Vec2 operator-(const Vec2& a, const Vec2& b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator+(const Vec2& a, const Vec2& b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator*(const Vec2& a, double s) { return {a.x * s, a.y * s}; }
inline double dot2(const Vec2& a, const Vec2& b) { return a.x * b.x + a.y * b.y; }
inline double cross2(const Vec2& a, const Vec2& b) { return a.x * b.y - a.y * b.x; }

inline double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Sigmoid silhouette profile, renormalized so it hits exactly 0/1 at the
// window boundary; pixels past the window cannot see the face at all.
struct CoverageProfile {
    double lo = sigmoid(-kSilhouetteWindow);
    double span = sigmoid(kSilhouetteWindow) - sigmoid(-kSilhouetteWindow);

    double value(double u) const {
        if (u <= -kSilhouetteWindow) return 0.0;
        if (u >= kSilhouetteWindow) return 1.0;
        return (sigmoid(u) - lo) / span;
    }
    double slope(double u) const {
        if (u <= -kSilhouetteWindow || u >= kSilhouetteWindow) return 0.0;
        double s = sigmoid(u);
        return s * (1.0 - s) / span;
    }
};

struct CameraModel {
    double cx, cy, fpx, cam_height;

    explicit CameraModel(const Scene& scene) {
        cx = scene.width / 2.0;
        cy = scene.height / 2.0;
        double fov_rad = scene.fov_degrees * (3.14159265358979323846 / 180.0);
        fpx = (scene.height / 2.0) / std::tan(fov_rad / 2.0);
        cam_height = scene.camera_height;
    }

    Vec2 project(const Vec3& w, double& depth) const {
        depth = cam_height - w.z;
        return {cx + fpx * w.x / depth, cy - fpx * w.y / depth};
    }

    // screen adjoint -> world adjoint
    void project_backward(const Vec3& w, const Vec2& sbar, Vec3& wbar) const {
        double zc = cam_height - w.z;
        wbar.x += sbar.x * fpx / zc;
        wbar.y -= sbar.y * fpx / zc;
        wbar.z += fpx / (zc * zc) * (sbar.x * w.x - sbar.y * w.y);
    }
};

struct FaceGeom {
    int idx[3];
    Vec3 w[3];
    Vec2 s[3];
    Vec3 normal;  // unit normal in winding orientation
    double facing = 0.0;  // smooth toward-the-camera factor, tanh(nz / kOrientSoftness)
    Vec3 n_raw;
    double n_raw_len = 0.0;
    double area2 = 0.0;  // squared signed projected area (px^4)
    double gate = 0.0;
    int col_lo = 0, col_hi = -1, row_lo = 0, row_hi = -1;
};

FaceGeom face_geometry(const std::vector<Vec3>& vertices, const FaceIndices& f,
                       const CameraModel& cam, const Scene& scene, double pad) {
    FaceGeom g;
    for (int k = 0; k < 3; ++k) {
        g.idx[k] = f[k];
        g.w[k] = vertices[f[k]];
        double depth;
        g.s[k] = cam.project(g.w[k], depth);
    }
    g.n_raw = cross(g.w[1] - g.w[0], g.w[2] - g.w[0]);
    g.n_raw_len = norm(g.n_raw);
    if (g.n_raw_len > 1e-30) {
        g.normal = g.n_raw * (1.0 / g.n_raw_len);
        g.facing = std::tanh(g.normal.z / kOrientSoftness);
    } else {
        g.normal = {0, 0, 1};
        g.facing = 1.0;
    }
    double signed_area = 0.5 * cross2(g.s[1] - g.s[0], g.s[2] - g.s[0]);
    g.area2 = signed_area * signed_area;
    g.gate = g.area2 / (g.area2 + kSolidityArea * kSolidityArea);

    double min_x = std::min({g.s[0].x, g.s[1].x, g.s[2].x}) - pad;
    double max_x = std::max({g.s[0].x, g.s[1].x, g.s[2].x}) + pad;
    double min_y = std::min({g.s[0].y, g.s[1].y, g.s[2].y}) - pad;
    double max_y = std::max({g.s[0].y, g.s[1].y, g.s[2].y}) + pad;
    g.col_lo = std::max(0, static_cast<int>(std::ceil(min_x - 0.5)));
    g.col_hi = std::min(scene.width - 1, static_cast<int>(std::floor(max_x - 0.5)));
    g.row_lo = std::max(0, static_cast<int>(std::ceil(min_y - 0.5)));
    g.row_hi = std::min(scene.height - 1, static_cast<int>(std::floor(max_y - 0.5)));
    return g;
}

// Everything one face contributes at one pixel, with the branch bookkeeping
// the backward pass needs.
struct PixelFace {
    double signed_dist = 0.0;          // softmin over signed edge-line distances
    double softmin_w[3] = {0, 0, 0};   // softmin weights per edge line
    // soft-clamped plane barycentrics of the pixel; they vary smoothly across
    // the triangle boundary and stay bounded in the coverage band
    double lambda[3] = {0, 0, 0};
    double lambda_raw[3] = {0, 0, 0};  // before the soft clamp
    bool lambda_degenerate = false;    // projected area ~ 0: lambda held fixed
    Vec3 surface;   // world point under (or nearest to) the pixel
    double depth = 0.0;
    double shade = 0.0;
    double shade_pre = 0.0;   // before clamping
    double diffuse_raw = 0.0; // n . (light - surface)
    double diffuse_q = 0.0;   // facing-gated diffuse numerator, before rectification
};

PixelFace evaluate_pixel_face(const Vec2& p, const FaceGeom& g, const Scene& scene) {
    PixelFace pf;
    double signed_area = 0.5 * cross2(g.s[1] - g.s[0], g.s[2] - g.s[0]);
    const double winding = signed_area >= 0.0 ? 1.0 : -1.0;

    // signed distance to each edge line, positive toward the interior
    double sline[3];
    double min_sline = std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
        Vec2 a = g.s[k], b = g.s[(k + 1) % 3];
        Vec2 ab = b - a;
        double len = std::sqrt(dot2(ab, ab));
        sline[k] = len > 1e-12 ? winding * cross2(ab, p - a) / len
                               : std::numeric_limits<double>::infinity();
        min_sline = std::min(min_sline, sline[k]);
    }
    if (!std::isfinite(min_sline)) {
        // fully degenerate projection: no boundary, no coverage
        pf.signed_dist = -std::numeric_limits<double>::infinity();
        pf.lambda_degenerate = true;
        pf.lambda[0] = pf.lambda[1] = pf.lambda[2] = 1.0 / 3.0;
    } else {
        double exp_sum = 0.0;
        for (int k = 0; k < 3; ++k) {
            if (std::isfinite(sline[k])) {
                exp_sum += std::exp(-(sline[k] - min_sline) / kDistSoftmin);
            }
        }
        pf.signed_dist = min_sline - kDistSoftmin * std::log(exp_sum);
        for (int k = 0; k < 3; ++k) {
            pf.softmin_w[k] = std::isfinite(sline[k])
                                  ? std::exp(-(sline[k] - min_sline) / kDistSoftmin) / exp_sum
                                  : 0.0;
        }
    }

    double area_full = 2.0 * signed_area;
    if (std::abs(area_full) > 1e-9) {
        pf.lambda_raw[0] = cross2(g.s[1] - p, g.s[2] - p) / area_full;
        pf.lambda_raw[1] = cross2(g.s[2] - p, g.s[0] - p) / area_full;
        pf.lambda_raw[2] = cross2(g.s[0] - p, g.s[1] - p) / area_full;
        for (int k = 0; k < 3; ++k) pf.lambda[k] = softclamp01(pf.lambda_raw[k]);
    } else if (!pf.lambda_degenerate) {
        // the solidity gate makes such faces invisible; pin the surface point
        pf.lambda_degenerate = true;
        pf.lambda[0] = pf.lambda[1] = pf.lambda[2] = 1.0 / 3.0;
    }

    pf.surface = g.w[0] * pf.lambda[0] + g.w[1] * pf.lambda[1] + g.w[2] * pf.lambda[2];
    pf.depth = scene.camera_height - pf.surface.z;

    Vec3 lvec = scene.light_position - pf.surface;
    double r2 = norm2(lvec);
    double r = std::sqrt(r2);
    pf.diffuse_raw = dot(g.normal, lvec);
    pf.diffuse_q = pf.diffuse_raw * g.facing;
    pf.shade_pre = scene.ambient;
    if (pf.diffuse_q > 0.0 && r > 1e-30) {
        pf.shade_pre += scene.light_intensity * pf.diffuse_q / (r2 * r);
    }
    pf.shade = std::min(std::max(pf.shade_pre, 0.0), 1.0);
    return pf;
}

struct PixelFaceAdjoint {
    Vec2 sbar[3];
    Vec3 wbar[3];
    Vec3 lightbar;
};

void cross2_adjoint(const Vec2& a, const Vec2& b, double cbar, Vec2& abar, Vec2& bbar) {
    abar.x += cbar * b.y;
    abar.y -= cbar * b.x;
    bbar.x -= cbar * a.y;
    bbar.y += cbar * a.x;
}

// Propagates lambda_bar and dist_bar back to the projected vertices.
void pixel_face_backward(const Vec2& p, const FaceGeom& g, const Scene& scene, const PixelFace& pf,
                         const double lambda_bar_in[3], double dist_bar, double shade_bar,
                         PixelFaceAdjoint& adj) {
    // shading first: contributes to surface/normal/light, i.e. lambda and world verts
    double lambda_bar[3] = {lambda_bar_in[0], lambda_bar_in[1], lambda_bar_in[2]};
    Vec3 surface_bar{};
    if (shade_bar != 0.0 && pf.shade_pre > 0.0 && pf.shade_pre < 1.0 && pf.diffuse_q > 0.0 &&
        g.n_raw_len > 1e-30) {
        // L = ambient + I * (n.lvec) * facing / r^3, facing = tanh(nz / eps)
        Vec3 lvec = scene.light_position - pf.surface;
        double r2 = norm2(lvec);
        double r = std::sqrt(r2);
        double r3 = r2 * r;
        double r5 = r3 * r2;
        double coef = shade_bar * scene.light_intensity;
        Vec3 lvec_bar = (g.normal * (g.facing / r3) - lvec * (3.0 * pf.diffuse_q / r5)) * coef;
        double facing_slope = (1.0 - g.facing * g.facing) / kOrientSoftness;
        Vec3 nbar =
            (lvec * g.facing + Vec3{0.0, 0.0, pf.diffuse_raw * facing_slope}) * (coef / r3);
        adj.lightbar += lvec_bar;
        surface_bar -= lvec_bar;

        Vec3 rawbar = (nbar - g.normal * dot(g.normal, nbar)) * (1.0 / g.n_raw_len);
        Vec3 e1 = g.w[1] - g.w[0], e2 = g.w[2] - g.w[0];
        Vec3 e1bar = cross(e2, rawbar);
        Vec3 e2bar = cross(rawbar, e1);
        adj.wbar[1] += e1bar;
        adj.wbar[2] += e2bar;
        adj.wbar[0] -= e1bar + e2bar;
    }

    // surface = sum lambda_i w_i
    for (int k = 0; k < 3; ++k) {
        lambda_bar[k] += dot(surface_bar, g.w[k]);
        adj.wbar[k] += pf.lambda[k] * surface_bar;
    }

    // lambda back to the projected vertices (plane barycentrics via soft clamp)
    if (!pf.lambda_degenerate) {
        double area_full = cross2(g.s[1] - g.s[0], g.s[2] - g.s[0]);
        double area_bar = 0.0;
        struct Term {
            int qa, qb;  // lambda_k numerator = cross2(s[qa]-p, s[qb]-p)
        };
        const Term terms[3] = {{1, 2}, {2, 0}, {0, 1}};
        for (int k = 0; k < 3; ++k) {
            double raw_bar = lambda_bar[k] * softclamp01_slope(pf.lambda_raw[k]);
            if (raw_bar == 0.0) continue;
            Vec2 a = g.s[terms[k].qa] - p, b = g.s[terms[k].qb] - p;
            double numer = cross2(a, b);
            double nbar = raw_bar / area_full;
            area_bar -= raw_bar * numer / (area_full * area_full);
            cross2_adjoint(a, b, nbar, adj.sbar[terms[k].qa], adj.sbar[terms[k].qb]);
        }
        {
            Vec2 a = g.s[1] - g.s[0], b = g.s[2] - g.s[0];
            Vec2 abar{}, bbar{};
            cross2_adjoint(a, b, area_bar, abar, bbar);
            adj.sbar[1] = adj.sbar[1] + abar;
            adj.sbar[2] = adj.sbar[2] + bbar;
            adj.sbar[0] = adj.sbar[0] - abar - bbar;
        }
    }

    // signed distance back through the per-line softmin weights
    if (dist_bar != 0.0) {
        double signed_area = 0.5 * cross2(g.s[1] - g.s[0], g.s[2] - g.s[0]);
        double winding = signed_area >= 0.0 ? 1.0 : -1.0;
        for (int k = 0; k < 3; ++k) {
            double sl_bar = dist_bar * pf.softmin_w[k];
            if (sl_bar == 0.0) continue;
            int a_i = k, b_i = (k + 1) % 3;
            Vec2 a = g.s[a_i], b = g.s[b_i];
            Vec2 ab = b - a;
            Vec2 pa = p - a;
            double len = std::sqrt(dot2(ab, ab));
            if (len <= 1e-12) continue;
            double cr = cross2(ab, pa);
            double cr_bar = sl_bar * winding / len;
            double len_bar = -sl_bar * winding * cr / (len * len);
            Vec2 ab_bar{}, pa_bar{};
            cross2_adjoint(ab, pa, cr_bar, ab_bar, pa_bar);
            ab_bar = ab_bar + ab * (len_bar / len);
            adj.sbar[b_i] = adj.sbar[b_i] + ab_bar;
            adj.sbar[a_i] = adj.sbar[a_i] - ab_bar - pa_bar;
        }
    }
}

}  // namespace

void Scene::validate() const {
    if (width < 8 || height < 8) throw RenderError("scene: resolution must be at least 8x8");
    if (!(fov_degrees > 0.0 && fov_degrees < 180.0)) throw RenderError("scene: fov must be in (0, 180)");
    if (!(camera_height > 0.0)) throw RenderError("scene: camera_height must be > 0");
    if (!(light_intensity >= 0.0)) throw RenderError("scene: light_intensity must be >= 0");
    if (!(ambient >= 0.0 && ambient <= 1.0)) throw RenderError("scene: ambient must be in [0, 1]");
    if (!(background >= 0.0 && background <= 1.0)) throw RenderError("scene: background must be in [0, 1]");
    if (!(edge_softness > 0.0)) throw RenderError("scene: edge_softness must be > 0");
    if (!(depth_blend > 0.0)) throw RenderError("scene: depth_blend must be > 0");
    const double scalars[] = {camera_height, fov_degrees, light_position.x, light_position.y,
                              light_position.z, light_intensity, ambient, background,
                              edge_softness, depth_blend};
    for (double s : scalars) {
        if (!std::isfinite(s)) throw RenderError("scene: non-finite parameter");
    }
}

Projected project_point(const Scene& scene, const Vec3& p) {
    CameraModel cam(scene);
    double depth;
    Vec2 s = cam.project(p, depth);
    return {s.x, s.y, depth};
}

namespace {

// One candidate entry for the per-pixel composite.
struct Contrib {
    int face;
    double cover;
    double depth;
    double shade;
};

// Soft transmittance composite over the candidate list:
//   u_i = c_i * prod_{j != i} (1 - c_j * occ_ij),  occ_ij = sig((z_i - z_j)/tau)
//   value = (sum u_i L_i + T_bg * bg) / (sum u_i + T_bg),  T_bg = prod (1 - c_j)
double composite_pixel(const std::vector<Contrib>& cs, double tau, double bg) {
    double numer = 0.0, denom = 0.0, t_bg = 1.0;
    for (const auto& c : cs) t_bg *= 1.0 - c.cover;
    for (std::size_t i = 0; i < cs.size(); ++i) {
        double t = 1.0;
        for (std::size_t j = 0; j < cs.size(); ++j) {
            if (j == i) continue;
            double occ = sigmoid((cs[i].depth - cs[j].depth) / tau);
            t *= 1.0 - cs[j].cover * occ;
        }
        double u = cs[i].cover * t;
        numer += u * cs[i].shade;
        denom += u;
    }
    return (numer + t_bg * bg + kBackgroundAnchor * bg) / (denom + t_bg + kBackgroundAnchor);
}

}  // namespace

Image render_forward(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces,
                     const Scene& scene, RenderCache& cache) {
    scene.validate();
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        if (!finite(vertices[i])) throw RenderError("render: vertex " + std::to_string(i) + " is not finite");
        if (scene.camera_height - vertices[i].z < kMinCameraDepth) {
            throw RenderError("render: mesh reaches the camera plane (vertex " + std::to_string(i) + ")");
        }
    }

    const CameraModel cam(scene);
    const CoverageProfile profile;
    const double pad = kSilhouetteWindow * scene.edge_softness + 1e-9;
    const std::size_t npix = static_cast<std::size_t>(scene.width) * scene.height;

    cache.candidates.assign(npix, {});
    std::vector<std::vector<Contrib>> contribs(npix);

    for (std::size_t t = 0; t < faces.size(); ++t) {
        FaceGeom g = face_geometry(vertices, faces[t], cam, scene, pad);
        for (int row = g.row_lo; row <= g.row_hi; ++row) {
            for (int col = g.col_lo; col <= g.col_hi; ++col) {
                Vec2 p{col + 0.5, row + 0.5};
                PixelFace pf = evaluate_pixel_face(p, g, scene);
                double u = pf.signed_dist / scene.edge_softness;
                if (u <= -kSilhouetteWindow) continue;
                double c = profile.value(u) * g.gate;
                std::size_t px = static_cast<std::size_t>(row) * scene.width + col;
                cache.candidates[px].push_back(static_cast<int>(t));
                contribs[px].push_back({static_cast<int>(t), c, pf.depth, pf.shade});
            }
        }
    }

    Image img(scene.width, scene.height);
    for (std::size_t px = 0; px < npix; ++px) {
        img.values[px] = contribs[px].empty()
                             ? scene.background
                             : composite_pixel(contribs[px], scene.depth_blend, scene.background);
    }
    return img;
}

Image render(const DeformedMesh& mesh, const Scene& scene) {
    RenderCache cache;
    return render_forward(mesh.vertices, mesh.base->faces, scene, cache);
}

RenderAdjoint render_backward(const std::vector<Vec3>& vertices, const std::vector<FaceIndices>& faces,
                              const Scene& scene, const RenderCache& cache,
                              const Image& image_adjoint) {
    scene.validate();
    if (image_adjoint.width != scene.width || image_adjoint.height != scene.height) {
        throw RenderError("render_backward: adjoint image size mismatch");
    }
    const std::size_t npix = static_cast<std::size_t>(scene.width) * scene.height;
    if (cache.candidates.size() != npix) {
        throw RenderError("render_backward: cache does not match the scene resolution");
    }

    const CameraModel cam(scene);
    const CoverageProfile profile;
    const double pad = kSilhouetteWindow * scene.edge_softness + 1e-9;
    const double g2 = kSolidityArea * kSolidityArea;
    const double tau = scene.depth_blend;
    const double bg = scene.background;

    std::vector<FaceGeom> geoms(faces.size());
    for (std::size_t t = 0; t < faces.size(); ++t) {
        geoms[t] = face_geometry(vertices, faces[t], cam, scene, pad);
    }

    RenderAdjoint out;
    out.vertex_adjoint.assign(vertices.size(), Vec3{});
    out.light_adjoint = Vec3{};

    std::vector<PixelFace> pfs;
    std::vector<double> cbar, zbar, lbar, t_front;
    for (std::size_t px = 0; px < npix; ++px) {
        double vbar = image_adjoint.values[px];
        const auto& cand = cache.candidates[px];
        if (vbar == 0.0 || cand.empty()) continue;

        const int row = static_cast<int>(px) / scene.width;
        const int col = static_cast<int>(px) % scene.width;
        const Vec2 p{col + 0.5, row + 0.5};
        const std::size_t n = cand.size();

        pfs.assign(n, {});
        for (std::size_t i = 0; i < n; ++i) pfs[i] = evaluate_pixel_face(p, geoms[cand[i]], scene);

        // recompute the composite pieces
        double t_bg = 1.0;
        std::vector<double> cover(n);
        for (std::size_t i = 0; i < n; ++i) {
            double u = pfs[i].signed_dist / scene.edge_softness;
            cover[i] = profile.value(u) * geoms[cand[i]].gate;
            t_bg *= 1.0 - cover[i];
        }
        t_front.assign(n, 1.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double occ = sigmoid((pfs[i].depth - pfs[j].depth) / tau);
                t_front[i] *= 1.0 - cover[j] * occ;
            }
        }
        double denom = t_bg + kBackgroundAnchor, numer = (t_bg + kBackgroundAnchor) * bg;
        for (std::size_t i = 0; i < n; ++i) {
            double u_i = cover[i] * t_front[i];
            denom += u_i;
            numer += u_i * pfs[i].shade;
        }
        const double value = numer / denom;

        cbar.assign(n, 0.0);
        zbar.assign(n, 0.0);
        lbar.assign(n, 0.0);

        // background transmittance path
        double tbg_bar = vbar * (bg - value) / denom;
        for (std::size_t j = 0; j < n; ++j) {
            double excl = 1.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k != j) excl *= 1.0 - cover[k];
            }
            cbar[j] -= tbg_bar * excl;
        }

        // per-face weight paths
        for (std::size_t i = 0; i < n; ++i) {
            double ubar = vbar * (pfs[i].shade - value) / denom;
            lbar[i] += vbar * cover[i] * t_front[i] / denom;
            cbar[i] += ubar * t_front[i];
            double tibar = ubar * cover[i];
            if (tibar == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double x = (pfs[i].depth - pfs[j].depth) / tau;
                double occ = sigmoid(x);
                double factor = 1.0 - cover[j] * occ;
                double excl;
                if (factor > 1e-12) {
                    excl = t_front[i] / factor;
                } else {
                    excl = 1.0;
                    for (std::size_t k = 0; k < n; ++k) {
                        if (k != i && k != j) {
                            excl *= 1.0 - cover[k] * sigmoid((pfs[i].depth - pfs[k].depth) / tau);
                        }
                    }
                }
                cbar[j] -= tibar * excl * occ;
                double occbar = -tibar * excl * cover[j];
                double slope = occ * (1.0 - occ) / tau;
                zbar[i] += occbar * slope;
                zbar[j] -= occbar * slope;
            }
        }

        // push each candidate's adjoints back to vertices and light
        for (std::size_t i = 0; i < n; ++i) {
            const FaceGeom& g = geoms[cand[i]];
            const PixelFace& pf = pfs[i];
            double u = pf.signed_dist / scene.edge_softness;
            double pwv = profile.value(u);

            double dist_bar = cbar[i] * profile.slope(u) / scene.edge_softness * g.gate;
            double area2_bar = cbar[i] * pwv * g2 / ((g.area2 + g2) * (g.area2 + g2));
            double shade_bar =
                (pf.shade_pre > 0.0 && pf.shade_pre < 1.0) ? lbar[i] : 0.0;

            PixelFaceAdjoint adj{};
            // composite depth = camera_height - surface.z enters via the surface point
            Vec3 surface_bar_depth{0.0, 0.0, -zbar[i]};
            double lambda_bar[3];
            for (int k = 0; k < 3; ++k) {
                lambda_bar[k] = dot(surface_bar_depth, g.w[k]);
                adj.wbar[k] += pf.lambda[k] * surface_bar_depth;
            }
            pixel_face_backward(p, g, scene, pf, lambda_bar, dist_bar, shade_bar, adj);

            if (area2_bar != 0.0) {
                double signed_area = 0.5 * cross2(g.s[1] - g.s[0], g.s[2] - g.s[0]);
                double qbar = area2_bar * 2.0 * signed_area * 0.5;
                Vec2 ea = g.s[1] - g.s[0], eb = g.s[2] - g.s[0];
                Vec2 abar{}, bbar{};
                cross2_adjoint(ea, eb, qbar, abar, bbar);
                adj.sbar[1] = adj.sbar[1] + abar;
                adj.sbar[2] = adj.sbar[2] + bbar;
                adj.sbar[0] = adj.sbar[0] - abar - bbar;
            }

            for (int k = 0; k < 3; ++k) {
                cam.project_backward(g.w[k], adj.sbar[k], adj.wbar[k]);
                out.vertex_adjoint[g.idx[k]] += adj.wbar[k];
            }
            out.light_adjoint += adj.lightbar;
        }
    }
    return out;
}

void NormalizationSpec::validate() const {
    if (!(target_std > 0.0)) throw RenderError("normalization: target_std must be > 0");
    if (!(target_norm > 0.0)) throw RenderError("normalization: target_norm must be > 0");
    if (!std::isfinite(target_mean)) throw RenderError("normalization: target_mean must be finite");
}

Image normalize_image(const Image& img, const NormalizationSpec& spec) {
    spec.validate();
    double mean = image_mean(img);
    double sd = image_std(img);
    if (sd < 1e-300) throw RenderError("normalize_image: constant image (zero variance)");

    Image out = img;
    double scale = spec.target_std / sd;
    for (double& v : out.values) v = (v - mean) * scale + spec.target_mean;
    double n2 = image_l2_norm(out);
    if (n2 < 1e-300) throw RenderError("normalize_image: standardized image has zero norm");
    double k = spec.target_norm / n2;
    for (double& v : out.values) v *= k;
    return out;
}

Image normalize_image_backward(const Image& input, const NormalizationSpec& spec,
                               const Image& output_adjoint) {
    const std::size_t n = input.pixel_count();
    const double N = static_cast<double>(n);
    double mean = image_mean(input);
    double sd = image_std(input);
    if (sd < 1e-300) throw RenderError("normalize_image: constant image (zero variance)");
    double scale = spec.target_std / sd;

    Image stage1 = input;
    for (double& v : stage1.values) v = (v - mean) * scale + spec.target_mean;
    double n2 = image_l2_norm(stage1);
    double k = spec.target_norm / n2;

    // out = k * y with k = target_norm / |y|:
    //   ybar_j = k * (obar_j - (obar . y) y_j / |y|^2)
    double dot_oy = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot_oy += output_adjoint.values[i] * stage1.values[i];
    Image ybar(input.width, input.height);
    for (std::size_t i = 0; i < n; ++i) {
        ybar.values[i] = k * (output_adjoint.values[i] - dot_oy * stage1.values[i] / (n2 * n2));
    }

    // y = (x - mean)*scale + tm with scale = ts/std(x)
    double A = 0.0, B = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        A += ybar.values[i];
        B += ybar.values[i] * (input.values[i] - mean);
    }
    Image xbar(input.width, input.height);
    for (std::size_t i = 0; i < n; ++i) {
        double centered = input.values[i] - mean;
        xbar.values[i] = scale * (ybar.values[i] - A / N) - scale * B * centered / (N * sd * sd);
    }
    return xbar;
}

}  // namespace mei3d
