#pragma once
#include <cstdint>
#include <functional>
#include <vector>

#include "mei3d/mesh.hpp"
#include "mei3d/rbf.hpp"
#include "mei3d/regularizers.hpp"
#include "mei3d/render.hpp"
#include "mei3d/response.hpp"

namespace mei3d {

struct AdamState {
    std::size_t step = 0;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamState(std::size_t n_params = 0, double lr = 0.01)
        : learning_rate(lr), m(n_params, 0.0), v(n_params, 0.0) {}
};

// Bias-corrected Adam update, in place. Throws OptimizationError on
// non-finite gradients.
void adam_step(AdamState& state, std::vector<double>& params, const std::vector<double>& grads);

struct OptimizationConfig {
    int max_steps = 2000;
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    RegularizerWeights weights;
    std::uint64_t seed = 0;
    int snapshot_interval = 0;  // 0 disables periodic snapshots
    int convergence_window = 100;
    double convergence_threshold = 1e-4;
    double init_noise = 0.0;  // stddev of the initial offset perturbation, world units
    double init_sigma = 0.0;  // initial kernel width; 0 means mean edge length

    void validate() const;
};

// One logged step. For Chamfer fitting the response column carries the
// negated Chamfer value so total = -response + sum(lambda * reg) holds for
// both loop kinds.
struct TraceRecord {
    int step = 0;
    double response = 0.0;
    double laplacian = 0.0;
    double edge = 0.0;
    double area = 0.0;
    double arap = 0.0;
    double total = 0.0;
    double offset_norm = 0.0;
    double mean_sigma = 0.0;
};

// Composes deform -> render -> normalize -> respond plus the regularizers on
// the deformed mesh. Aborts with the offending term named if any component
// goes non-finite.
std::pair<double, TraceRecord> total_loss(const RbfField& field, const Mesh& base,
                                          const Scene& scene, ResponseModel& model,
                                          const RegularizerWeights& weights,
                                          const NormalizationSpec& norm_spec = {});

using SnapshotFn = std::function<void(int step, const RbfField&, const DeformedMesh&, const Image&)>;

struct SynthesisResult {
    RbfField field;
    DeformedMesh mesh;
    Image image;  // rendered and normalized
    std::vector<TraceRecord> trace;
    double final_response = 0.0;
    bool converged = false;
};

// Runs Adam on (delta, log sigma) minimizing -response + regularizers. Stops
// at max_steps or when the best response improves by less than
// convergence_threshold (relative) over convergence_window steps. On a
// mid-run abort the last finite state is handed to the snapshot callback
// before the error propagates.
SynthesisResult synthesize_mei(const Mesh& base, const Scene& scene, ResponseModel& model,
                               const OptimizationConfig& cfg,
                               const NormalizationSpec& norm_spec = {},
                               const SnapshotFn& snapshot = nullptr);

struct FitConfig {
    OptimizationConfig opt;
    int source_samples = 5000;
    int target_samples = 5000;
};

struct FitResult {
    RbfField field;
    DeformedMesh mesh;
    std::vector<TraceRecord> trace;
    double initial_chamfer = 0.0;
    double final_chamfer = 0.0;
};

// Chamfer fitting between frozen area-uniform sample plans of the deforming
// source and the fixed target.
FitResult fit_mesh_chamfer(const Mesh& source, const Mesh& target, const FitConfig& cfg);

// Central-difference gradient verification. Relative error per coordinate is
// |fd - an| / max(|fd|, |an|, 1e-3 * ginf, 1e-12) with ginf the largest
// gradient magnitude seen, so coordinates near zero are held to a scaled
// absolute tolerance instead of drowning in rounding noise.
struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
};

GradCheckResult check_gradients(const std::function<double(const std::vector<double>&)>& value_fn,
                                const std::function<std::vector<double>(const std::vector<double>&)>& grad_fn,
                                const std::vector<double>& point, double h);

}  // namespace mei3d
