#include "mei3d/config.hpp"

#include <fstream>
#include <set>

#include "mei3d/errors.hpp"
#include "mei3d/external_model.hpp"
#include "mei3d/obj_io.hpp"

namespace mei3d {

namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = obj.begin(); it != obj.end(); ++it) {
        if (!allowed.count(it.key())) {
            throw ConfigError("unknown config key '" + where + "." + it.key() + "'");
        }
    }
}

template <typename T>
T get_or(const json& obj, const std::string& where, const std::string& key, T fallback) {
    if (!obj.contains(key)) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + "." + key + "' has the wrong type");
    }
}

Vec3 get_vec3(const json& obj, const std::string& where, const std::string& key, Vec3 fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& arr = obj.at(key);
    if (!arr.is_array() || arr.size() != 3) {
        throw ConfigError("config key '" + where + "." + key + "' must be a 3-element array");
    }
    try {
        return {arr.at(0).get<double>(), arr.at(1).get<double>(), arr.at(2).get<double>()};
    } catch (const json::exception&) {
        throw ConfigError("config key '" + where + "." + key + "' must hold numbers");
    }
}

std::vector<double> angle_range(const json& obj, const std::string& where, const char* axis,
                                double def_start, double def_stop, double def_step) {
    double start = get_or(obj, where, std::string(axis) + "_start", def_start);
    double stop = get_or(obj, where, std::string(axis) + "_stop", def_stop);
    double step = get_or(obj, where, std::string(axis) + "_step", def_step);
    if (!(step > 0.0)) throw ConfigError(where + ": " + axis + "_step must be > 0");
    if (stop < start) throw ConfigError(where + ": " + axis + "_stop must be >= start");
    std::vector<double> out;
    for (int i = 0;; ++i) {
        double v = start + i * step;
        if (v > stop + 1e-9) break;
        out.push_back(v);
    }
    return out;
}

Scene parse_scene(const json& j) {
    Scene s;
    if (!j.contains("scene")) return s;
    const json& o = j.at("scene");
    const std::string w = "scene";
    check_keys(o, w, {"camera_height", "fov_degrees", "width", "height", "light_position",
                      "light_intensity", "ambient", "background", "edge_softness", "depth_blend"});
    s.camera_height = get_or(o, w, "camera_height", s.camera_height);
    s.fov_degrees = get_or(o, w, "fov_degrees", s.fov_degrees);
    s.width = get_or(o, w, "width", s.width);
    s.height = get_or(o, w, "height", s.height);
    s.light_position = get_vec3(o, w, "light_position", s.light_position);
    s.light_intensity = get_or(o, w, "light_intensity", s.light_intensity);
    s.ambient = get_or(o, w, "ambient", s.ambient);
    s.background = get_or(o, w, "background", s.background);
    s.edge_softness = get_or(o, w, "edge_softness", s.edge_softness);
    s.depth_blend = get_or(o, w, "depth_blend", s.depth_blend);
    return s;
}

NormalizationSpec parse_normalization(const json& j) {
    NormalizationSpec n;
    if (!j.contains("normalization")) return n;
    const json& o = j.at("normalization");
    const std::string w = "normalization";
    check_keys(o, w, {"target_mean", "target_std", "target_norm"});
    n.target_mean = get_or(o, w, "target_mean", n.target_mean);
    n.target_std = get_or(o, w, "target_std", n.target_std);
    n.target_norm = get_or(o, w, "target_norm", n.target_norm);
    n.validate();
    return n;
}

MeshSpec parse_mesh(const json& o, const std::string& w) {
    check_keys(o, w, {"kind", "subdivisions", "radius", "nx", "ny", "extent", "major_radius",
                      "minor_radius", "n_major", "n_minor", "path"});
    MeshSpec m;
    m.kind = get_or<std::string>(o, w, "kind", "");
    if (m.kind != "sphere" && m.kind != "sheet" && m.kind != "torus" && m.kind != "obj") {
        throw ConfigError(w + ".kind must be one of sphere|sheet|torus|obj");
    }
    m.subdivisions = get_or(o, w, "subdivisions", m.subdivisions);
    m.radius = get_or(o, w, "radius", m.radius);
    m.nx = get_or(o, w, "nx", m.nx);
    m.ny = get_or(o, w, "ny", m.ny);
    m.extent = get_or(o, w, "extent", m.extent);
    m.major_radius = get_or(o, w, "major_radius", m.major_radius);
    m.minor_radius = get_or(o, w, "minor_radius", m.minor_radius);
    m.n_major = get_or(o, w, "n_major", m.n_major);
    m.n_minor = get_or(o, w, "n_minor", m.n_minor);
    m.path = get_or<std::string>(o, w, "path", "");
    if (m.kind == "obj" && m.path.empty()) throw ConfigError(w + ": obj meshes need a path");
    return m;
}

GaborFilter parse_gabor(const json& o, const std::string& w) {
    check_keys(o, w, {"orientation", "frequency", "phase", "sigma", "center", "amplitude"});
    GaborFilter g;
    g.orientation = get_or(o, w, "orientation", g.orientation);
    g.frequency = get_or(o, w, "frequency", g.frequency);
    g.phase = get_or(o, w, "phase", g.phase);
    g.sigma = get_or(o, w, "sigma", g.sigma);
    if (o.contains("center")) {
        const auto& c = o.at("center");
        if (!c.is_array() || c.size() != 2) throw ConfigError(w + ".center must be [x, y]");
        g.center_x = c.at(0).get<double>();
        g.center_y = c.at(1).get<double>();
    }
    g.amplitude = get_or(o, w, "amplitude", g.amplitude);
    return g;
}

ModelSpec parse_model(const json& o) {
    const std::string w = "model";
    check_keys(o, w, {"kind", "gabor", "command", "timeout_ms"});
    ModelSpec m;
    m.kind = get_or<std::string>(o, w, "kind", "");
    if (m.kind != "simple" && m.kind != "complex" && m.kind != "mean" && m.kind != "external") {
        throw ConfigError("model.kind must be one of simple|complex|mean|external");
    }
    if (o.contains("gabor")) m.gabor = parse_gabor(o.at("gabor"), "model.gabor");
    m.command = get_or<std::vector<std::string>>(o, w, "command", {});
    m.timeout_ms = get_or(o, w, "timeout_ms", m.timeout_ms);
    if (m.kind == "external" && m.command.empty()) {
        throw ConfigError("model: external models need a command");
    }
    return m;
}

OptimizationConfig parse_optimizer(const json& j) {
    OptimizationConfig c;
    if (j.contains("optimizer")) {
        const json& o = j.at("optimizer");
        const std::string w = "optimizer";
        check_keys(o, w, {"max_steps", "learning_rate", "beta1", "beta2", "epsilon",
                          "convergence_window", "convergence_threshold", "snapshot_interval",
                          "init_noise", "init_sigma"});
        c.max_steps = get_or(o, w, "max_steps", c.max_steps);
        c.learning_rate = get_or(o, w, "learning_rate", c.learning_rate);
        c.beta1 = get_or(o, w, "beta1", c.beta1);
        c.beta2 = get_or(o, w, "beta2", c.beta2);
        c.epsilon = get_or(o, w, "epsilon", c.epsilon);
        c.convergence_window = get_or(o, w, "convergence_window", c.convergence_window);
        c.convergence_threshold = get_or(o, w, "convergence_threshold", c.convergence_threshold);
        c.snapshot_interval = get_or(o, w, "snapshot_interval", c.snapshot_interval);
        c.init_noise = get_or(o, w, "init_noise", c.init_noise);
        c.init_sigma = get_or(o, w, "init_sigma", c.init_sigma);
    }
    if (j.contains("regularizers")) {
        const json& o = j.at("regularizers");
        const std::string w = "regularizers";
        check_keys(o, w, {"lambda_laplacian", "lambda_edge", "lambda_area", "lambda_arap"});
        c.weights.lambda_laplacian = get_or(o, w, "lambda_laplacian", 0.0);
        c.weights.lambda_edge = get_or(o, w, "lambda_edge", 0.0);
        c.weights.lambda_area = get_or(o, w, "lambda_area", 0.0);
        c.weights.lambda_arap = get_or(o, w, "lambda_arap", 0.0);
    }
    c.validate();
    return c;
}

}  // namespace

std::string RunConfig::resolve_path(const std::string& p) const {
    if (p.empty() || p[0] == '/') return p;
    return base_dir.empty() ? p : base_dir + "/" + p;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    check_keys(j, "<root>", {"scene", "normalization", "mesh", "model", "optimizer", "regularizers",
                             "fit", "sweep", "output_dir", "seed", "deterministic", "threads"});

    RunConfig cfg;
    cfg.raw = j;
    auto slash = path.find_last_of('/');
    cfg.base_dir = slash == std::string::npos ? std::string(".") : path.substr(0, slash);

    cfg.scene = parse_scene(j);
    cfg.normalization = parse_normalization(j);
    if (j.contains("mesh")) cfg.mesh = parse_mesh(j.at("mesh"), "mesh");
    if (j.contains("model")) cfg.model = parse_model(j.at("model"));
    cfg.optimizer = parse_optimizer(j);

    if (j.contains("fit")) {
        const json& o = j.at("fit");
        check_keys(o, "fit", {"target", "source_samples", "target_samples"});
        if (!o.contains("target")) throw ConfigError("fit: missing target mesh");
        FitSpec f;
        f.target = parse_mesh(o.at("target"), "fit.target");
        f.source_samples = get_or(o, "fit", "source_samples", f.source_samples);
        f.target_samples = get_or(o, "fit", "target_samples", f.target_samples);
        if (f.source_samples < 1 || f.target_samples < 1) {
            throw ConfigError("fit: sample counts must be >= 1");
        }
        cfg.fit = f;
    }

    if (j.contains("sweep")) {
        const json& o = j.at("sweep");
        check_keys(o, "sweep", {"pose", "light"});
        if (o.contains("pose")) {
            const json& p = o.at("pose");
            check_keys(p, "sweep.pose", {"azimuth_start", "azimuth_stop", "azimuth_step",
                                         "elevation_start", "elevation_stop", "elevation_step"});
            PoseGridSpec spec;
            spec.azimuths_deg = angle_range(p, "sweep.pose", "azimuth", -90.0, 90.0, 15.0);
            spec.elevations_deg = angle_range(p, "sweep.pose", "elevation", -90.0, 90.0, 15.0);
            cfg.pose_sweep = spec;
        }
        if (o.contains("light")) {
            const json& p = o.at("light");
            check_keys(p, "sweep.light",
                       {"azimuth_start", "azimuth_stop", "azimuth_step", "elevation_start",
                        "elevation_stop", "elevation_step", "radius", "exemplars_per_tertile"});
            DomeSpec spec;
            spec.azimuths_deg = angle_range(p, "sweep.light", "azimuth", 0.0, 345.0, 15.0);
            spec.elevations_deg = angle_range(p, "sweep.light", "elevation", 0.0, 90.0, 15.0);
            spec.radius = get_or(p, "sweep.light", "radius", spec.radius);
            spec.exemplars_per_tertile = get_or(p, "sweep.light", "exemplars_per_tertile",
                                                spec.exemplars_per_tertile);
            cfg.light_sweep = spec;
        }
    }

    cfg.output_dir = get_or<std::string>(j, "<root>", "output_dir", cfg.output_dir);
    cfg.seed = get_or<std::uint64_t>(j, "<root>", "seed", cfg.seed);
    cfg.deterministic = get_or(j, "<root>", "deterministic", cfg.deterministic);
    cfg.threads = get_or(j, "<root>", "threads", cfg.threads);
    if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
    cfg.optimizer.seed = cfg.seed;
    return cfg;
}

Mesh build_mesh(const MeshSpec& spec, const RunConfig& cfg) {
    if (spec.kind == "sphere") return make_sphere(spec.subdivisions, spec.radius);
    if (spec.kind == "sheet") return make_sheet(spec.nx, spec.ny, spec.extent);
    if (spec.kind == "torus") {
        return make_torus(spec.major_radius, spec.minor_radius, spec.n_major, spec.n_minor);
    }
    if (spec.kind == "obj") return load_obj(cfg.resolve_path(spec.path));
    throw ConfigError("unknown mesh kind '" + spec.kind + "'");
}

std::unique_ptr<ResponseModel> build_model(const ModelSpec& spec, const RunConfig& cfg) {
    const double budget = cfg.normalization.target_norm;
    if (spec.kind == "simple") {
        return std::make_unique<SimpleCellModel>(spec.gabor, cfg.scene.width, cfg.scene.height, budget);
    }
    if (spec.kind == "complex") {
        return std::make_unique<ComplexCellModel>(spec.gabor, cfg.scene.width, cfg.scene.height, budget);
    }
    if (spec.kind == "mean") return std::make_unique<MeanPixelModel>();
    if (spec.kind == "external") {
        std::vector<std::string> argv = spec.command;
        if (!argv.empty() && !argv[0].empty() && argv[0][0] != '/') {
            // resolve the executable relative to the config when it looks like a path
            if (argv[0].find('/') != std::string::npos) argv[0] = cfg.resolve_path(argv[0]);
        }
        return std::make_unique<ExternalProcessModel>(argv, spec.timeout_ms);
    }
    throw ConfigError("unknown model kind '" + spec.kind + "'");
}

}  // namespace mei3d
