#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "mei3d/config.hpp"
#include "mei3d/errors.hpp"
#include "mei3d/obj_io.hpp"
#include "mei3d/optimize.hpp"
#include "mei3d/rbf.hpp"
#include "mei3d/sweeps.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace mei3d;

namespace {

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
    std::string config_path;
    std::string out_override;
    std::string field_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    bool deterministic = false;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool with_field) {
    cmd->add_option("--config", args.config_path, "run configuration (JSON)")->required();
    cmd->add_option("--out", args.out_override, "output directory (overrides the config)");
    cmd->add_option("--seed", args.seed, "seed override")->each([&](const std::string&) {
        args.seed_set = true;
    });
    cmd->add_option("--threads", args.threads, "worker threads (1 = fully deterministic)");
    cmd->add_flag("--deterministic", args.deterministic, "force single-threaded execution");
    if (with_field) {
        cmd->add_option("--field", args.field_path, "saved RBF field from a previous run");
    }
}

RunConfig load_and_override(const CommonArgs& args) {
    RunConfig cfg = load_config(args.config_path);
    if (args.seed_set) {
        cfg.seed = args.seed;
        cfg.optimizer.seed = args.seed;
    }
    if (args.threads > 0) cfg.threads = args.threads;
    if (args.deterministic) cfg.deterministic = true;
    if (cfg.deterministic) cfg.threads = 1;
    if (!args.out_override.empty()) {
        cfg.output_dir = args.out_override;
    } else if (!cfg.output_dir.empty() && cfg.output_dir[0] != '/') {
        if (const char* root = std::getenv("MEI3D_OUT_ROOT")) {
            cfg.output_dir = std::string(root) + "/" + cfg.output_dir;
        }
    }
    return cfg;
}

void write_trace_csv(const std::vector<TraceRecord>& trace, const std::string& path,
                     const char* response_column) {
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw IoError("cannot open for writing: " + path);
    std::fprintf(f, "step,%s,laplacian,edge,area,arap,total,offset_norm,mean_sigma\n",
                 response_column);
    for (const auto& r : trace) {
        std::fprintf(f, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.step, r.response,
                     r.laplacian, r.edge, r.area, r.arap, r.total, r.offset_norm, r.mean_sigma);
    }
    if (std::fclose(f) != 0) throw IoError("write failed: " + path);
}

void write_manifest(const RunConfig& cfg, const CommonArgs& args, const std::string& command,
                    const json& extra, const std::string& path) {
    json m;
    m["tool"] = "mei3d";
    m["version"] = kVersion;
    m["command"] = command;
    m["config_path"] = args.config_path;
    m["config"] = cfg.raw;
    m["seed"] = cfg.seed;
    m["threads"] = cfg.threads;
    m["deterministic"] = cfg.deterministic;
    m["output_dir"] = cfg.output_dir;
    for (auto it = extra.begin(); it != extra.end(); ++it) m[it.key()] = it.value();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << m.dump(1, '\t') << "\n";
}

int run_synthesize(const CommonArgs& args) {
    RunConfig cfg = load_and_override(args);
    if (!cfg.mesh) throw ConfigError("synthesize needs a mesh block");
    if (!cfg.model) throw ConfigError("synthesize needs a model block");
    Mesh base = build_mesh(*cfg.mesh, cfg);
    auto model = build_model(*cfg.model, cfg);
    fs::create_directories(cfg.output_dir);
    const std::string out = cfg.output_dir;

    SnapshotFn snapshot;
    if (cfg.optimizer.snapshot_interval > 0) {
        fs::create_directories(out + "/snapshots");
        snapshot = [&out](int step, const RbfField& field, const DeformedMesh&, const Image& img) {
            char name[64];
            std::snprintf(name, sizeof(name), "%06d", step);
            save_field(field, out + "/snapshots/field_" + name + ".json");
            write_pgm(img, out + "/snapshots/render_" + name + ".pgm", PixelWindow::MinMax);
        };
    }

    SynthesisResult result =
        synthesize_mei(base, cfg.scene, *model, cfg.optimizer, cfg.normalization, snapshot);

    save_field(result.field, out + "/field.json");
    Mesh final_mesh{result.mesh.vertices, base.faces};
    save_obj(final_mesh, out + "/final.obj");
    write_pgm(result.image, out + "/final_normalized.pgm", PixelWindow::MinMax);
    write_png(result.image, out + "/final_normalized.png", PixelWindow::MinMax);
    {
        RenderCache cache;
        Image raw = render_forward(result.mesh.vertices, base.faces, cfg.scene, cache);
        write_pgm(raw, out + "/final_render.pgm", PixelWindow::Fixed01);
    }
    write_trace_csv(result.trace, out + "/trace.csv", "response");

    json extra;
    extra["final_response"] = result.final_response;
    extra["converged"] = result.converged;
    extra["steps_logged"] = result.trace.size();
    write_manifest(cfg, args, "synthesize", extra, out + "/run_manifest.json");
    std::printf("final response %.17g after %zu logged steps (%s)\n", result.final_response,
                result.trace.size(), result.converged ? "converged" : "max steps");
    return 0;
}

int run_fit_mesh(const CommonArgs& args) {
    RunConfig cfg = load_and_override(args);
    if (!cfg.mesh) throw ConfigError("fit-mesh needs a mesh block (the source)");
    if (!cfg.fit) throw ConfigError("fit-mesh needs a fit block with a target");
    Mesh source = build_mesh(*cfg.mesh, cfg);
    Mesh target = build_mesh(cfg.fit->target, cfg);
    fs::create_directories(cfg.output_dir);
    const std::string out = cfg.output_dir;

    FitConfig fit_cfg;
    fit_cfg.opt = cfg.optimizer;
    fit_cfg.source_samples = cfg.fit->source_samples;
    fit_cfg.target_samples = cfg.fit->target_samples;

    FitResult result = fit_mesh_chamfer(source, target, fit_cfg);

    save_field(result.field, out + "/field.json");
    Mesh fitted{result.mesh.vertices, source.faces};
    save_obj(fitted, out + "/fitted.obj");
    write_trace_csv(result.trace, out + "/fit_trace.csv", "neg_chamfer");

    json extra;
    extra["initial_chamfer"] = result.initial_chamfer;
    extra["final_chamfer"] = result.final_chamfer;
    write_manifest(cfg, args, "fit-mesh", extra, out + "/run_manifest.json");
    std::printf("chamfer %.17g -> %.17g\n", result.initial_chamfer, result.final_chamfer);
    return 0;
}

int run_sweep(const CommonArgs& args, bool pose, bool light) {
    if (pose == light) throw ConfigError("sweep needs exactly one of --pose or --light");
    RunConfig cfg = load_and_override(args);
    if (!cfg.mesh) throw ConfigError("sweep needs a mesh block (the base mesh)");
    if (!cfg.model) throw ConfigError("sweep needs a model block");
    if (args.field_path.empty()) throw ConfigError("sweep needs --field from a previous run");

    Mesh base = build_mesh(*cfg.mesh, cfg);
    RbfField field = load_field(args.field_path);
    if (field.kernel_count() != base.vertices.size()) {
        throw ConfigError("field/mesh mismatch: field has " + std::to_string(field.kernel_count()) +
                          " kernels, mesh has " + std::to_string(base.vertices.size()) + " vertices");
    }
    auto model = build_model(*cfg.model, cfg);
    fs::create_directories(cfg.output_dir);
    const std::string out = cfg.output_dir;
    DeformedMesh mesh = deform(base, field);

    json extra;
    if (pose) {
        PoseGridSpec spec = cfg.pose_sweep ? *cfg.pose_sweep : PoseGridSpec::default_grid();
        PoseGrid grid = sweep_pose(mesh, cfg.scene, *model, cfg.normalization, spec, cfg.threads);
        export_heatmap(grid, out + "/pose_heatmap.csv");
        extra["base_response"] = grid.base_response;
        std::printf("pose sweep: identity response %.17g\n", grid.base_response);
    } else {
        DomeSpec spec = cfg.light_sweep ? *cfg.light_sweep : DomeSpec::default_grid();
        DomeGrid grid = sweep_light(mesh, cfg.scene, *model, cfg.normalization, spec, cfg.threads);
        export_heatmap(grid, out + "/light_heatmap.csv");
        static const char* kNames[3] = {"high", "mid", "low"};
        for (const auto& ex : grid.exemplars) {
            std::string dir = out + "/dome/" + kNames[ex.tertile];
            fs::create_directories(dir);
            char name[64];
            std::snprintf(name, sizeof(name), "az%03.0f_el%02.0f.pgm", ex.azimuth_deg,
                          ex.elevation_deg);
            write_pgm(ex.render, dir + "/" + name, PixelWindow::Fixed01);
        }
        extra["cells"] = grid.responses.size();
        std::printf("light sweep: %zu dome cells\n", grid.responses.size());
    }
    write_manifest(cfg, args, pose ? "sweep --pose" : "sweep --light", extra,
                   out + "/sweep_manifest.json");
    return 0;
}

int run_render(const CommonArgs& args) {
    RunConfig cfg = load_and_override(args);
    if (!cfg.mesh) throw ConfigError("render needs a mesh block");
    Mesh base = build_mesh(*cfg.mesh, cfg);

    DeformedMesh mesh;
    if (!args.field_path.empty()) {
        RbfField field = load_field(args.field_path);
        if (field.kernel_count() != base.vertices.size()) {
            throw ConfigError("field/mesh mismatch: field has " +
                              std::to_string(field.kernel_count()) + " kernels, mesh has " +
                              std::to_string(base.vertices.size()) + " vertices");
        }
        mesh = deform(base, field);
    } else {
        mesh.base = &base;
        mesh.vertices = base.vertices;
    }

    fs::create_directories(cfg.output_dir);
    const std::string out = cfg.output_dir;
    RenderCache cache;
    Image img = render_forward(mesh.vertices, base.faces, cfg.scene, cache);
    write_pgm(img, out + "/render.pgm", PixelWindow::Fixed01);
    write_png(img, out + "/render.png", PixelWindow::Fixed01);

    if (cfg.model) {
        auto model = build_model(*cfg.model, cfg);
        double response = model->respond(normalize_image(img, cfg.normalization));
        std::printf("response %.17g\n", response);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"3D maximally exciting input synthesis through a differentiable renderer"};
    app.require_subcommand(1);

    CommonArgs synth_args, fit_args, sweep_args, render_args;
    bool sweep_pose_flag = false, sweep_light_flag = false;

    CLI::App* synth = app.add_subcommand("synthesize", "optimize a mesh against a response model");
    add_common(synth, synth_args, false);
    CLI::App* fit = app.add_subcommand("fit-mesh", "fit a source mesh to a target by Chamfer loss");
    add_common(fit, fit_args, false);
    CLI::App* sweep = app.add_subcommand("sweep", "pose or light tuning of a saved stimulus");
    add_common(sweep, sweep_args, true);
    sweep->add_flag("--pose", sweep_pose_flag, "azimuth x elevation pose grid");
    sweep->add_flag("--light", sweep_light_flag, "light-direction half dome");
    CLI::App* rend = app.add_subcommand("render", "render the configured scene once");
    add_common(rend, render_args, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (synth->parsed()) return run_synthesize(synth_args);
        if (fit->parsed()) return run_fit_mesh(fit_args);
        if (sweep->parsed()) return run_sweep(sweep_args, sweep_pose_flag, sweep_light_flag);
        if (rend->parsed()) return run_render(render_args);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "io error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
