#pragma once
#include <string>
#include <vector>

#include "mei3d/image.hpp"
#include "mei3d/rbf.hpp"
#include "mei3d/render.hpp"
#include "mei3d/response.hpp"

namespace mei3d {

// Pose rotations are extrinsic: elevation about the world x axis first, then
// azimuth about the world z axis, both about the origin.
struct PoseGridSpec {
    std::vector<double> azimuths_deg;
    std::vector<double> elevations_deg;

    static PoseGridSpec default_grid();  // -90..90 in 15 degree steps, both axes
};

struct PoseGrid {
    std::vector<double> azimuths_deg;
    std::vector<double> elevations_deg;
    // row-major [elevation][azimuth]; NaN marks cells whose rotation pushed
    // the mesh out of the renderable volume
    std::vector<double> responses;
    double base_response = 0.0;  // the (0, 0) cell

    double at(std::size_t el_idx, std::size_t az_idx) const {
        return responses[el_idx * azimuths_deg.size() + az_idx];
    }
};

// Light positions on the forward-facing half dome: z >= 0, base ring at z=0.
struct DomeSpec {
    std::vector<double> azimuths_deg;
    std::vector<double> elevations_deg;
    double radius = 6.0;
    int exemplars_per_tertile = 3;

    static DomeSpec default_grid();  // az 0..345 step 15, el 0..90 step 15
};

struct DomeGrid {
    std::vector<double> azimuths_deg;
    std::vector<double> elevations_deg;
    double radius = 0.0;
    std::vector<double> responses;  // row-major [elevation][azimuth]
    std::vector<int> tertile;       // 0 = high, 1 = mid, 2 = low (by response rank)

    struct Exemplar {
        double azimuth_deg, elevation_deg;
        int tertile;
        Image render;  // raw (un-normalized) render for inspection
    };
    std::vector<Exemplar> exemplars;

    double at(std::size_t el_idx, std::size_t az_idx) const {
        return responses[el_idx * azimuths_deg.size() + az_idx];
    }
};

Vec3 dome_light_position(double radius, double azimuth_deg, double elevation_deg);

// Re-renders the rigidly rotated mesh per grid cell with all other scene
// parameters fixed; the (0,0) cell shares the synthesis code path exactly.
// Grid cells are independent; n_threads > 1 evaluates them in parallel.
PoseGrid sweep_pose(const DeformedMesh& mesh, const Scene& scene, ResponseModel& model,
                    const NormalizationSpec& norm_spec, const PoseGridSpec& spec, int n_threads = 1);

DomeGrid sweep_light(const DeformedMesh& mesh, const Scene& scene, ResponseModel& model,
                     const NormalizationSpec& norm_spec, const DomeSpec& spec, int n_threads = 1);

// CSV with an angle header row/column; invalid cells print NA. The dome file
// carries a second block with the tertile labels.
void export_heatmap(const PoseGrid& grid, const std::string& path);
void export_heatmap(const DomeGrid& grid, const std::string& path);

}  // namespace mei3d
