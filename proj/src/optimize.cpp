#include "mei3d/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mei3d/errors.hpp"
#include "mei3d/rng.hpp"

namespace mei3d {

void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads) {
    if (params.size() != grads.size() || params.size() != state.m.size()) {
        throw OptimizationError("adam_step: parameter/gradient/state size mismatch");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (!std::isfinite(grads[i])) {
            throw OptimizationError("adam_step: non-finite gradient at parameter " + std::to_string(i));
        }
    }
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double corr1 = 1.0 - std::pow(state.beta1, t);
    const double corr2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads[i];
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * grads[i] * grads[i];
        double mhat = state.m[i] / corr1;
        double vhat = state.v[i] / corr2;
        params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

void OptimizationConfig::validate() const {
    if (max_steps < 1) throw ConfigError("optimizer: max_steps must be >= 1");
    if (!(learning_rate > 0.0)) throw ConfigError("optimizer: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
        throw ConfigError("optimizer: betas must be in [0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("optimizer: epsilon must be > 0");
    if (convergence_window < 1) throw ConfigError("optimizer: convergence_window must be >= 1");
    if (!(convergence_threshold >= 0.0)) throw ConfigError("optimizer: convergence_threshold must be >= 0");
    if (!(init_noise >= 0.0)) throw ConfigError("optimizer: init_noise must be >= 0");
    weights.validate();
}

namespace {

struct RegTerms {
    double laplacian = 0.0, edge = 0.0, area = 0.0, arap = 0.0;
    double weighted_sum(const RegularizerWeights& w) const {
        return w.lambda_laplacian * laplacian + w.lambda_edge * edge + w.lambda_area * area +
               w.lambda_arap * arap;
    }
};

// Shared context for one optimization run; topology and reference geometry
// are derived from the base mesh once.
struct PipelineContext {
    const Mesh* base;
    Topology topo;
    ReferenceGeometry ref;
    RegularizerWeights weights;

    PipelineContext(const Mesh& b, const RegularizerWeights& w)
        : base(&b), topo(build_topology(b)), ref(ReferenceGeometry::from_mesh(b, topo)), weights(w) {}

    RegTerms reg_values(const std::vector<Vec3>& verts) const {
        RegTerms r;
        r.laplacian = laplacian_loss(verts, topo);
        r.edge = edge_loss(verts, topo);
        r.area = area_loss(verts, base->faces);
        r.arap = arap_loss(verts, ref, topo);
        return r;
    }

    void reg_adjoints(const std::vector<Vec3>& verts, std::vector<Vec3>& vertex_adjoint) const {
        if (weights.lambda_laplacian != 0.0)
            laplacian_loss_adjoint(verts, topo, weights.lambda_laplacian, vertex_adjoint);
        if (weights.lambda_edge != 0.0)
            edge_loss_adjoint(verts, topo, weights.lambda_edge, vertex_adjoint);
        if (weights.lambda_area != 0.0)
            area_loss_adjoint(verts, base->faces, weights.lambda_area, vertex_adjoint);
        if (weights.lambda_arap != 0.0)
            arap_loss_adjoint(verts, ref, topo, weights.lambda_arap, vertex_adjoint);
    }
};

void require_finite(double v, const char* term) {
    if (!std::isfinite(v)) {
        throw OptimizationError(std::string("non-finite loss term: ") + term);
    }
}

TraceRecord make_record(int step, double response, const RegTerms& regs,
                        const RegularizerWeights& w, const RbfField& field) {
    TraceRecord rec;
    rec.step = step;
    rec.response = response;
    rec.laplacian = regs.laplacian;
    rec.edge = regs.edge;
    rec.area = regs.area;
    rec.arap = regs.arap;
    rec.total = -response + regs.weighted_sum(w);
    double on2 = 0.0, sig = 0.0;
    for (const auto& d : field.offsets) on2 += norm2(d);
    for (double ls : field.log_scales) sig += std::exp(ls);
    rec.offset_norm = std::sqrt(on2);
    rec.mean_sigma = sig / static_cast<double>(field.kernel_count());
    return rec;
}

}  // namespace

std::pair<double, TraceRecord> total_loss(const RbfField& field, const Mesh& base,
                                          const Scene& scene, ResponseModel& model,
                                          const RegularizerWeights& weights,
                                          const NormalizationSpec& norm_spec) {
    weights.validate();
    PipelineContext ctx(base, weights);
    DeformedMesh deformed = deform(base, field);
    RegTerms regs = ctx.reg_values(deformed.vertices);
    require_finite(regs.laplacian, "laplacian");
    require_finite(regs.edge, "edge");
    require_finite(regs.area, "area");
    require_finite(regs.arap, "arap");

    RenderCache cache;
    Image img = render_forward(deformed.vertices, base.faces, scene, cache);
    Image normed = normalize_image(img, norm_spec);
    double response = model.respond(normed);
    require_finite(response, "response");

    TraceRecord rec = make_record(0, response, regs, weights, field);
    return {rec.total, rec};
}

namespace {

// Full forward + reverse pass for the synthesis objective.
struct SynthEval {
    double loss = 0.0;
    double response = 0.0;
    RegTerms regs;
    Image normalized;
    std::vector<double> grad;  // w.r.t. flat (offsets, log_scales)
};

SynthEval evaluate_synthesis(const PipelineContext& ctx, const RbfField& field, const Scene& scene,
                             ResponseModel& model, const NormalizationSpec& norm_spec,
                             bool want_grad) {
    SynthEval ev;
    DeformedMesh deformed = deform(*ctx.base, field);
    ev.regs = ctx.reg_values(deformed.vertices);
    require_finite(ev.regs.laplacian, "laplacian");
    require_finite(ev.regs.edge, "edge");
    require_finite(ev.regs.area, "area");
    require_finite(ev.regs.arap, "arap");

    RenderCache cache;
    Image img = render_forward(deformed.vertices, ctx.base->faces, scene, cache);
    ev.normalized = normalize_image(img, norm_spec);
    ev.response = model.respond(ev.normalized);
    require_finite(ev.response, "response");
    ev.loss = -ev.response + ev.regs.weighted_sum(ctx.weights);

    if (!want_grad) return ev;

    // d(loss)/d(normalized image) = -model gradient
    Image normed_adj = model.respond_gradient(ev.normalized);
    if (!image_finite(normed_adj)) throw OptimizationError("non-finite model gradient");
    for (double& v : normed_adj.values) v = -v;
    Image img_adj = normalize_image_backward(img, norm_spec, normed_adj);
    RenderAdjoint radj = render_backward(deformed.vertices, ctx.base->faces, scene, cache, img_adj);

    std::vector<Vec3> vertex_adjoint = std::move(radj.vertex_adjoint);
    ctx.reg_adjoints(deformed.vertices, vertex_adjoint);

    RbfAdjoint fadj = deform_gradient(*ctx.base, field, vertex_adjoint);
    const std::size_t K = field.kernel_count();
    ev.grad.resize(4 * K);
    for (std::size_t k = 0; k < K; ++k) {
        ev.grad[3 * k + 0] = fadj.offset_adjoint[k].x;
        ev.grad[3 * k + 1] = fadj.offset_adjoint[k].y;
        ev.grad[3 * k + 2] = fadj.offset_adjoint[k].z;
    }
    for (std::size_t k = 0; k < K; ++k) ev.grad[3 * K + k] = fadj.log_scale_adjoint[k];
    return ev;
}

RbfField initial_field(const Mesh& base, const OptimizationConfig& cfg) {
    RbfField field = make_identity_field(base, cfg.init_sigma);
    if (cfg.init_noise > 0.0) {
        Rng rng(cfg.seed);
        for (auto& d : field.offsets) {
            d.x = cfg.init_noise * rng.normal();
            d.y = cfg.init_noise * rng.normal();
            d.z = cfg.init_noise * rng.normal();
        }
    }
    return field;
}

// Relative improvement of the best value over the trailing window.
class ConvergenceMonitor {
public:
    ConvergenceMonitor(int window, double threshold) : window_(window), threshold_(threshold) {}

    bool update(double value) {
        best_ = history_.empty() ? value : std::max(best_, value);
        history_.push_back(best_);
        if (static_cast<int>(history_.size()) <= window_) return false;
        double before = history_[history_.size() - 1 - window_];
        double gain = best_ - before;
        return gain < threshold_ * std::max(std::abs(best_), 1e-12);
    }

private:
    int window_;
    double threshold_;
    double best_ = 0.0;
    std::vector<double> history_;
};

}  // namespace

SynthesisResult synthesize_mei(const Mesh& base, const Scene& scene, ResponseModel& model,
                               const OptimizationConfig& cfg, const NormalizationSpec& norm_spec,
                               const SnapshotFn& snapshot) {
    cfg.validate();
    scene.validate();
    PipelineContext ctx(base, cfg.weights);

    RbfField field = initial_field(base, cfg);
    std::vector<double> params = field_to_params(field);
    AdamState adam(params.size(), cfg.learning_rate);
    adam.beta1 = cfg.beta1;
    adam.beta2 = cfg.beta2;
    adam.epsilon = cfg.epsilon;

    SynthesisResult result;
    ConvergenceMonitor monitor(cfg.convergence_window, cfg.convergence_threshold);

    RbfField last_good = field;
    SynthEval last_eval;
    bool have_eval = false;
    bool params_dirty = false;  // true when adam ran after the last logged eval

    for (int step = 0; step < cfg.max_steps; ++step) {
        SynthEval ev;
        try {
            ev = evaluate_synthesis(ctx, field, scene, model, norm_spec, true);
        } catch (const Error& e) {
            if (snapshot && have_eval) {
                snapshot(step, last_good, deform(base, last_good), last_eval.normalized);
            }
            throw OptimizationError(std::string("synthesis aborted at step ") +
                                    std::to_string(step) + ": " + e.what());
        }
        last_good = field;
        last_eval = ev;
        have_eval = true;
        params_dirty = false;

        result.trace.push_back(make_record(step, ev.response, ev.regs, cfg.weights, field));
        if (snapshot && cfg.snapshot_interval > 0 && step % cfg.snapshot_interval == 0) {
            snapshot(step, field, deform(base, field), ev.normalized);
        }

        if (monitor.update(ev.response)) {
            result.converged = true;
            break;
        }
        adam_step(adam, params, ev.grad);
        params_to_field(params, field);
        params_dirty = true;
    }

    if (params_dirty) {
        last_eval = evaluate_synthesis(ctx, field, scene, model, norm_spec, false);
        result.trace.push_back(make_record(static_cast<int>(result.trace.size()), last_eval.response,
                                           last_eval.regs, cfg.weights, field));
    }
    result.field = field;
    result.mesh = deform(base, field);
    result.image = last_eval.normalized;
    result.final_response = last_eval.response;
    return result;
}

FitResult fit_mesh_chamfer(const Mesh& source, const Mesh& target, const FitConfig& cfg) {
    cfg.opt.validate();
    if (cfg.source_samples < 1 || cfg.target_samples < 1) {
        throw ConfigError("fit_mesh_chamfer: sample counts must be >= 1");
    }
    PipelineContext ctx(source, cfg.opt.weights);
    validate_mesh(target);

    SurfaceSamplePlan src_plan = plan_surface_samples(source, cfg.source_samples, cfg.opt.seed);
    std::vector<Vec3> target_points = sample_surface(target, cfg.target_samples, cfg.opt.seed + 1);

    RbfField field = initial_field(source, cfg.opt);
    std::vector<double> params = field_to_params(field);
    AdamState adam(params.size(), cfg.opt.learning_rate);
    adam.beta1 = cfg.opt.beta1;
    adam.beta2 = cfg.opt.beta2;
    adam.epsilon = cfg.opt.epsilon;

    FitResult result;
    ConvergenceMonitor monitor(cfg.opt.convergence_window, cfg.opt.convergence_threshold);

    const std::size_t K = field.kernel_count();
    for (int step = 0; step < cfg.opt.max_steps; ++step) {
        DeformedMesh deformed = deform(source, field);
        std::vector<Vec3> src_points = apply_sample_plan(src_plan, deformed.vertices, source.faces);
        double cham = chamfer_loss(src_points, target_points);
        require_finite(cham, "chamfer");
        RegTerms regs = ctx.reg_values(deformed.vertices);
        if (step == 0) result.initial_chamfer = cham;

        result.trace.push_back(make_record(step, -cham, regs, cfg.opt.weights, field));
        if (monitor.update(-cham)) break;

        std::vector<Vec3> adj_src, adj_tgt;
        chamfer_loss_adjoint(src_points, target_points, 1.0, adj_src, adj_tgt);

        std::vector<Vec3> vertex_adjoint(source.vertices.size());
        for (std::size_t s = 0; s < src_plan.size(); ++s) {
            const auto& f = source.faces[src_plan.face[s]];
            const Vec3 b = src_plan.bary[s];
            vertex_adjoint[f[0]] += adj_src[s] * b.x;
            vertex_adjoint[f[1]] += adj_src[s] * b.y;
            vertex_adjoint[f[2]] += adj_src[s] * b.z;
        }
        ctx.reg_adjoints(deformed.vertices, vertex_adjoint);

        RbfAdjoint fadj = deform_gradient(source, field, vertex_adjoint);
        std::vector<double> grad(4 * K);
        for (std::size_t k = 0; k < K; ++k) {
            grad[3 * k + 0] = fadj.offset_adjoint[k].x;
            grad[3 * k + 1] = fadj.offset_adjoint[k].y;
            grad[3 * k + 2] = fadj.offset_adjoint[k].z;
        }
        for (std::size_t k = 0; k < K; ++k) grad[3 * K + k] = fadj.log_scale_adjoint[k];

        adam_step(adam, params, grad);
        params_to_field(params, field);
    }

    result.field = field;
    result.mesh = deform(source, field);
    {
        std::vector<Vec3> src_points = apply_sample_plan(src_plan, result.mesh.vertices, source.faces);
        result.final_chamfer = chamfer_loss(src_points, target_points);
    }
    return result;
}

GradCheckResult check_gradients(const std::function<double(const std::vector<double>&)>& value_fn,
                                const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
                                const std::vector<double>& point, double h) {
    std::vector<double> analytic = grad_fn(point);
    if (analytic.size() != point.size()) throw Error("check_gradients: gradient size mismatch");

    std::vector<double> numeric(point.size());
    std::vector<double> x = point;
    for (std::size_t i = 0; i < point.size(); ++i) {
        x[i] = point[i] + h;
        double fp = value_fn(x);
        x[i] = point[i] - h;
        double fm = value_fn(x);
        x[i] = point[i];
        if (!std::isfinite(fp) || !std::isfinite(fm)) {
            throw Error("check_gradients: non-finite evaluation at coordinate " + std::to_string(i));
        }
        numeric[i] = (fp - fm) / (2.0 * h);
    }

    double ginf = 0.0;
    for (std::size_t i = 0; i < point.size(); ++i) {
        ginf = std::max({ginf, std::abs(analytic[i]), std::abs(numeric[i])});
    }

    GradCheckResult res;
    for (std::size_t i = 0; i < point.size(); ++i) {
        // coordinates far below the gradient scale are dominated by rounding
        // noise in the central difference; compare those in scaled terms
        double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), 1e-3 * ginf, 1e-12});
        double err = std::abs(analytic[i] - numeric[i]) / denom;
        if (err >= res.max_rel_error) {
            res.max_rel_error = err;
            res.worst_index = i;
            res.analytic_at_worst = analytic[i];
            res.numeric_at_worst = numeric[i];
        }
    }
    return res;
}

}  // namespace mei3d
