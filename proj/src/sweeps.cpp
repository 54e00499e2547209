#include "mei3d/sweeps.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <numeric>
#include <thread>

#include "mei3d/errors.hpp"

namespace mei3d {

namespace {

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

std::vector<double> degree_range(double lo, double hi, double step) {
    std::vector<double> out;
    for (int i = 0;; ++i) {
        double v = lo + i * step;
        if (v > hi + 1e-9) break;
        out.push_back(v);
    }
    return out;
}

// strided parallel map over grid cells; results land in pre-sized storage so
// the outcome is independent of scheduling
void for_each_cell(std::size_t n, int n_threads, const std::function<void(std::size_t)>& fn) {
    if (n_threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    int t_count = std::min<int>(n_threads, static_cast<int>(n));
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(t_count);
    for (int t = 0; t < t_count; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += t_count) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

std::vector<Vec3> rotate_vertices(const std::vector<Vec3>& verts, double azimuth_deg,
                                  double elevation_deg) {
    Mat3 rot = matmul(rotation_z(azimuth_deg * kDegToRad), rotation_x(elevation_deg * kDegToRad));
    std::vector<Vec3> out(verts.size());
    for (std::size_t i = 0; i < verts.size(); ++i) out[i] = rot.apply(verts[i]);
    return out;
}

double respond_to_render(const std::vector<Vec3>& verts, const std::vector<FaceIndices>& faces,
                         const Scene& scene, ResponseModel& model,
                         const NormalizationSpec& norm_spec) {
    RenderCache cache;
    Image img = render_forward(verts, faces, scene, cache);
    return model.respond(normalize_image(img, norm_spec));
}

}  // namespace

PoseGridSpec PoseGridSpec::default_grid() {
    PoseGridSpec s;
    s.azimuths_deg = degree_range(-90.0, 90.0, 15.0);
    s.elevations_deg = degree_range(-90.0, 90.0, 15.0);
    return s;
}

DomeSpec DomeSpec::default_grid() {
    DomeSpec s;
    s.azimuths_deg = degree_range(0.0, 345.0, 15.0);
    s.elevations_deg = degree_range(0.0, 90.0, 15.0);
    return s;
}

Vec3 dome_light_position(double radius, double azimuth_deg, double elevation_deg) {
    double az = azimuth_deg * kDegToRad;
    double el = elevation_deg * kDegToRad;
    return {radius * std::cos(el) * std::cos(az), radius * std::cos(el) * std::sin(az),
            radius * std::sin(el)};
}

PoseGrid sweep_pose(const DeformedMesh& mesh, const Scene& scene, ResponseModel& model,
                    const NormalizationSpec& norm_spec, const PoseGridSpec& spec, int n_threads) {
    if (spec.azimuths_deg.empty() || spec.elevations_deg.empty()) {
        throw ConfigError("sweep_pose: empty grid");
    }
    auto has_zero = [](const std::vector<double>& v) {
        return std::any_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
    };
    if (!has_zero(spec.azimuths_deg) || !has_zero(spec.elevations_deg)) {
        throw ConfigError("sweep_pose: grid must include the identity pose (0, 0)");
    }

    PoseGrid grid;
    grid.azimuths_deg = spec.azimuths_deg;
    grid.elevations_deg = spec.elevations_deg;
    const std::size_t n_az = spec.azimuths_deg.size();
    const std::size_t n_cells = n_az * spec.elevations_deg.size();
    grid.responses.assign(n_cells, std::numeric_limits<double>::quiet_NaN());

    const std::vector<FaceIndices>& faces = mesh.base->faces;
    for_each_cell(n_cells, n_threads, [&](std::size_t cell) {
        double az = spec.azimuths_deg[cell % n_az];
        double el = spec.elevations_deg[cell / n_az];
        try {
            auto verts = rotate_vertices(mesh.vertices, az, el);
            grid.responses[cell] = respond_to_render(verts, faces, scene, model, norm_spec);
        } catch (const RenderError&) {
            // rotation pushed the mesh out of the renderable volume: NaN cell
        }
    });

    for (std::size_t e = 0; e < spec.elevations_deg.size(); ++e) {
        for (std::size_t a = 0; a < n_az; ++a) {
            if (spec.elevations_deg[e] == 0.0 && spec.azimuths_deg[a] == 0.0) {
                grid.base_response = grid.at(e, a);
            }
        }
    }
    return grid;
}

DomeGrid sweep_light(const DeformedMesh& mesh, const Scene& scene, ResponseModel& model,
                     const NormalizationSpec& norm_spec, const DomeSpec& spec, int n_threads) {
    if (spec.azimuths_deg.empty() || spec.elevations_deg.empty()) {
        throw ConfigError("sweep_light: empty dome grid");
    }
    for (double el : spec.elevations_deg) {
        if (el < 0.0 || el > 90.0) {
            throw ConfigError("sweep_light: elevations must lie in [0, 90] (forward half dome)");
        }
    }
    if (!(spec.radius > 0.0)) throw ConfigError("sweep_light: radius must be > 0");

    DomeGrid grid;
    grid.azimuths_deg = spec.azimuths_deg;
    grid.elevations_deg = spec.elevations_deg;
    grid.radius = spec.radius;
    const std::size_t n_az = spec.azimuths_deg.size();
    const std::size_t n_cells = n_az * spec.elevations_deg.size();
    grid.responses.assign(n_cells, std::numeric_limits<double>::quiet_NaN());

    const std::vector<FaceIndices>& faces = mesh.base->faces;
    for_each_cell(n_cells, n_threads, [&](std::size_t cell) {
        Scene cell_scene = scene;
        cell_scene.light_position = dome_light_position(
            spec.radius, spec.azimuths_deg[cell % n_az], spec.elevations_deg[cell / n_az]);
        grid.responses[cell] =
            respond_to_render(mesh.vertices, faces, cell_scene, model, norm_spec);
    });

    // tertiles by response rank, ties broken by cell index
    std::vector<std::size_t> order(n_cells);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return grid.responses[a] > grid.responses[b];
    });
    grid.tertile.assign(n_cells, 2);
    const std::size_t base = n_cells / 3, rem = n_cells % 3;
    const std::size_t n_high = base + (rem > 0 ? 1 : 0);
    const std::size_t n_mid = base + (rem > 1 ? 1 : 0);
    for (std::size_t r = 0; r < n_cells; ++r) {
        grid.tertile[order[r]] = r < n_high ? 0 : (r < n_high + n_mid ? 1 : 2);
    }

    // exemplars: the top-ranked cells within each tertile
    int want = std::max(0, spec.exemplars_per_tertile);
    std::vector<int> taken(3, 0);
    for (std::size_t r = 0; r < n_cells && want > 0; ++r) {
        std::size_t cell = order[r];
        int t = grid.tertile[cell];
        if (taken[t] >= want) continue;
        ++taken[t];
        double az = spec.azimuths_deg[cell % n_az];
        double el = spec.elevations_deg[cell / n_az];
        Scene cell_scene = scene;
        cell_scene.light_position = dome_light_position(spec.radius, az, el);
        RenderCache cache;
        grid.exemplars.push_back(
            {az, el, t, render_forward(mesh.vertices, faces, cell_scene, cache)});
    }
    return grid;
}

namespace {

void write_matrix(std::FILE* f, const char* corner, const std::vector<double>& azimuths,
                  const std::vector<double>& elevations,
                  const std::function<void(std::size_t, std::size_t)>& write_cell) {
    std::fprintf(f, "%s", corner);
    for (double az : azimuths) std::fprintf(f, ",%.2f", az);
    std::fprintf(f, "\n");
    for (std::size_t e = 0; e < elevations.size(); ++e) {
        std::fprintf(f, "%.2f", elevations[e]);
        for (std::size_t a = 0; a < azimuths.size(); ++a) write_cell(e, a);
        std::fprintf(f, "\n");
    }
}

}  // namespace

void export_heatmap(const PoseGrid& grid, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    write_matrix(f, "elev_deg/azim_deg", grid.azimuths_deg, grid.elevations_deg,
                 [&](std::size_t e, std::size_t a) {
                     double v = grid.at(e, a);
                     if (std::isnan(v)) {
                         std::fprintf(f, ",NA");
                     } else {
                         std::fprintf(f, ",%.12f", v);
                     }
                 });
    if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

void export_heatmap(const DomeGrid& grid, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    write_matrix(f, "elev_deg/azim_deg", grid.azimuths_deg, grid.elevations_deg,
                 [&](std::size_t e, std::size_t a) {
                     double v = grid.at(e, a);
                     if (std::isnan(v)) {
                         std::fprintf(f, ",NA");
                     } else {
                         std::fprintf(f, ",%.12f", v);
                     }
                 });
    std::fprintf(f, "\n");
    static const char* kNames[3] = {"high", "mid", "low"};
    write_matrix(f, "tertile", grid.azimuths_deg, grid.elevations_deg,
                 [&](std::size_t e, std::size_t a) {
                     std::fprintf(f, ",%s", kNames[grid.tertile[e * grid.azimuths_deg.size() + a]]);
                 });
    if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

}  // namespace mei3d
