#pragma once
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mei3d/mesh.hpp"
#include "mei3d/optimize.hpp"
#include "mei3d/render.hpp"
#include "mei3d/response.hpp"
#include "mei3d/sweeps.hpp"

namespace mei3d {

struct MeshSpec {
    std::string kind;  // sphere | sheet | torus | obj
    int subdivisions = 3;
    double radius = 1.1;
    int nx = 33, ny = 33;
    double extent = 4.0;
    double major_radius = 1.0, minor_radius = 0.35;
    int n_major = 24, n_minor = 12;
    std::string path;  // for kind == obj, relative to the config file
};

struct ModelSpec {
    std::string kind;  // simple | complex | mean | external
    GaborFilter gabor;
    std::vector<std::string> command;  // for kind == external
    int timeout_ms = 30000;
};

struct FitSpec {
    MeshSpec target;
    int source_samples = 5000;
    int target_samples = 5000;
};

// Parsed run configuration. Unknown keys anywhere in the file are rejected;
// relative paths are resolved against the config file's directory.
struct RunConfig {
    Scene scene;
    NormalizationSpec normalization;
    std::optional<MeshSpec> mesh;
    std::optional<ModelSpec> model;
    OptimizationConfig optimizer;
    std::optional<FitSpec> fit;
    std::optional<PoseGridSpec> pose_sweep;
    std::optional<DomeSpec> light_sweep;
    std::string output_dir = "out";
    std::uint64_t seed = 0;
    bool deterministic = true;
    int threads = 1;

    std::string base_dir;             // directory of the config file
    nlohmann::json raw;               // original document, echoed into manifests

    std::string resolve_path(const std::string& p) const;
};

RunConfig load_config(const std::string& path);

Mesh build_mesh(const MeshSpec& spec, const RunConfig& cfg);
std::unique_ptr<ResponseModel> build_model(const ModelSpec& spec, const RunConfig& cfg);

}  // namespace mei3d
