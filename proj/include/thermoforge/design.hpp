#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "thermoforge/adam.hpp"
#include "thermoforge/core.hpp"
#include "thermoforge/meltpool.hpp"
#include "thermoforge/mlp.hpp"
#include "thermoforge/simulate.hpp"
#include "thermoforge/tape.hpp"

namespace thermoforge {

inline constexpr double kTempNorm = 1000.0;  // K, loss normalization

enum class ObservedSet { TopLayer, AllActive };

// MSE between the running history and a stored target over an observed node
// set per step: mean of ((T - T_target)/1000K)^2. Inputs are the state
// records for steps 1..n_steps.
class HistoryMseKernel : public ad::Kernel {
public:
    HistoryMseKernel(sim::RunContextPtr ctx, ObservedSet observed,
                     std::vector<ad::Vec> target)
        : ad::Kernel("history_mse"),
          ctx_(std::move(ctx)),
          observed_(observed),
          target_(std::move(target)) {
        require(static_cast<int>(target_.size()) == ctx_->cfg.n_steps,
                "loss: target history does not match simulation schedule");
        n_total_ = 0;
        for (int s = 1; s <= ctx_->cfg.n_steps; ++s) n_total_ += observed_count(s);
        require(n_total_ > 0, "loss: empty observed set");
    }

    std::size_t observed_count(int s) const {
        const sim::Epoch& ep = ctx_->epochs[ctx_->epoch_of_step[s]];
        if (observed_ == ObservedSet::TopLayer) return ep.observed_top_nodes.size();
        std::size_t n = 0;
        for (auto a : ep.node_active) n += a;
        return n;
    }

    template <typename Fn>
    void for_observed(int s, Fn&& fn) const {
        const sim::Epoch& ep = ctx_->epochs[ctx_->epoch_of_step[s]];
        if (observed_ == ObservedSet::TopLayer) {
            for (NodeId n : ep.observed_top_nodes) fn(n);
        } else {
            for (std::size_t n = 0; n < ep.node_active.size(); ++n)
                if (ep.node_active[n]) fn(static_cast<NodeId>(n));
        }
    }

    std::vector<ad::Vec> forward(const std::vector<const ad::Vec*>& in) const override {
        double acc = 0.0;
        for (std::size_t r = 0; r < in.size(); ++r) {
            int s = static_cast<int>(r) + 1;
            const ad::Vec& T = *in[r];
            const ad::Vec& Tt = target_[r];
            for_observed(s, [&](NodeId n) {
                double d = (T[n] - Tt[n]) / kTempNorm;
                acc += d * d;
            });
        }
        return {{acc / static_cast<double>(n_total_)}};
    }

    void backward(const std::vector<const ad::Vec*>& in, const std::vector<ad::Vec>&,
                  const std::vector<ad::Vec>& out_adj,
                  std::vector<ad::Vec>& in_adj) const override {
        double scale = out_adj[0][0] * 2.0 /
                       (kTempNorm * kTempNorm * static_cast<double>(n_total_));
        for (std::size_t r = 0; r < in.size(); ++r) {
            int s = static_cast<int>(r) + 1;
            const ad::Vec& T = *in[r];
            const ad::Vec& Tt = target_[r];
            for_observed(s, [&](NodeId n) { in_adj[r][n] += scale * (T[n] - Tt[n]); });
        }
    }

private:
    sim::RunContextPtr ctx_;
    ObservedSet observed_;
    std::vector<ad::Vec> target_;
    std::size_t n_total_ = 0;
};

// MSE of melt-pool depth against a constant target, normalized by the element
// height: mean of ((depth - d*)/dz)^2 over non-skipped laser-on steps.
class DepthMseKernel : public ad::Kernel {
public:
    DepthMseKernel(double target_depth, double dz)
        : ad::Kernel("depth_mse"), target_(target_depth), dz_(dz) {}

    std::vector<ad::Vec> forward(const std::vector<const ad::Vec*>& in) const override {
        require(!in.empty(), "loss_case3: empty depth trace");
        double acc = 0.0;
        for (const ad::Vec* d : in) {
            double e = ((*d)[0] - target_) / dz_;
            acc += e * e;
        }
        return {{acc / static_cast<double>(in.size())}};
    }

    void backward(const std::vector<const ad::Vec*>& in, const std::vector<ad::Vec>&,
                  const std::vector<ad::Vec>& out_adj,
                  std::vector<ad::Vec>& in_adj) const override {
        double scale = out_adj[0][0] * 2.0 / (dz_ * dz_ * static_cast<double>(in.size()));
        for (std::size_t i = 0; i < in.size(); ++i)
            in_adj[i][0] += scale * ((*in[i])[0] - target_);
    }

private:
    double target_;
    double dz_;
};

// Case-1 parameter map: scaled parameters [cp~,k~,h~,P~,rb~] to the physical
// [cp,k,h,eps] and [P,rb] vectors; emissivity stays fixed.
class ScaleKernel : public ad::Kernel {
public:
    ScaleKernel(std::array<double, 5> ref, double emissivity)
        : ad::Kernel("param_scale"), ref_(ref), eps_(emissivity) {}

    std::vector<ad::Vec> forward(const std::vector<const ad::Vec*>& in) const override {
        const ad::Vec& t = *in[0];
        return {{t[0] * ref_[0], t[1] * ref_[1], t[2] * ref_[2], eps_},
                {t[3] * ref_[3], t[4] * ref_[4]}};
    }

    void backward(const std::vector<const ad::Vec*>&, const std::vector<ad::Vec>&,
                  const std::vector<ad::Vec>& out_adj,
                  std::vector<ad::Vec>& in_adj) const override {
        for (int i = 0; i < 3; ++i) in_adj[0][i] += out_adj[0][i] * ref_[i];
        for (int i = 0; i < 2; ++i) in_adj[0][3 + i] += out_adj[1][i] * ref_[3 + i];
    }

private:
    std::array<double, 5> ref_;
    double eps_;
};

// Documented case-2 reference schedule: plateaus, ramps, and sharp steps,
// used only to synthesize the target history.
inline double reference_power_schedule(double t_norm) {
    double t = std::clamp(t_norm, 0.0, 1.0);
    if (t < 0.20) return 800.0;
    if (t < 0.35) return 800.0 + (t - 0.20) / 0.15 * (350.0 - 800.0);
    if (t < 0.50) return 350.0;
    if (t < 0.70) return 750.0;
    if (t < 0.90) return 750.0 + (t - 0.70) / 0.20 * (500.0 - 750.0);
    return 900.0;
}

struct CaseSpec {
    int case_id = 1;
    HexMesh mesh;
    Toolpath path;
    BirthSchedule schedule;
    MaterialParams material;  // reference values; case 1 target-synthesis truth
    LaserParams laser;
    SimConfig sim;
    int iterations = 60;
    double lr = 0.05;
    std::uint64_t seed = 0;
    double init_lo = 0.5, init_hi = 1.5;  // case-1 init range multipliers
    double target_depth = 0.0;            // case 3, meters
    std::function<double(double)> reference_power;  // case 2; default schedule
    double delta_clamp = 1e-6;
};

struct IterationEntry {
    int iter = 0;
    double loss = 0.0;
    std::vector<double> params;  // case 1: physical parameter values
    double wall_s = 0.0;
};

struct OptimizationLog {
    int case_id = 0;
    std::vector<IterationEntry> entries;
    // Sampled power over normalized time, at logged iterations (cases 2-3).
    std::vector<std::pair<int, std::vector<double>>> power_curves;
    std::vector<double> target_params;  // case 1, physical
    std::vector<double> initial_depths, final_depths;  // case 3, per laser-on sample
    double initial_loss() const { return entries.front().loss; }
    double final_loss() const { return entries.back().loss; }
};

namespace design_detail {

inline std::vector<ad::Vec> collect_states(const ad::Tape& tape,
                                           const ThermalHistory& hist) {
    std::vector<ad::Vec> out;
    out.reserve(hist.n_steps);
    for (int s = 1; s <= hist.n_steps; ++s) out.push_back(hist.state(tape, s));
    return out;
}

inline std::vector<ad::ValueRef> state_refs(const ThermalHistory& hist) {
    std::vector<ad::ValueRef> refs;
    refs.reserve(hist.n_steps);
    for (int s = 1; s <= hist.n_steps; ++s) refs.push_back(hist.state_ref(s));
    return refs;
}

// Target synthesis: one forward run with reference inputs.
inline std::vector<ad::Vec> synthesize_target(
    const sim::RunContextPtr& ctx, const std::function<double(double)>& power) {
    ad::Tape tape;
    int mat_p = tape.add_param({ctx->mat.cp, ctx->mat.k, ctx->mat.h_conv,
                                ctx->mat.emissivity}, false);
    int las_p = tape.add_param({ctx->las.power, ctx->las.beam_radius}, false);
    ForwardRefs refs{ad::ValueRef::param(mat_p), ad::ValueRef::param(las_p), {}};
    if (power)
        refs.power_at = [&power](ad::Tape& t, int, double tn) {
            return ad::ValueRef::output(t.record_step(
                std::make_shared<sim::ConstKernel>("reference_power", ad::Vec{power(tn)}),
                {}));
        };
    ThermalHistory hist = run_forward(tape, ctx, refs);
    return collect_states(tape, hist);
}

inline std::vector<double> sample_power_curve(const ad::Tape& tape,
                                              const MlpParamIds& ids, int n_samples) {
    MlpParams p{tape.param_value(ids.w1), tape.param_value(ids.b1),
                tape.param_value(ids.w2), tape.param_value(ids.b2),
                tape.param_value(ids.w3), tape.param_value(ids.b3)};
    std::vector<double> curve(n_samples);
    for (int i = 0; i < n_samples; ++i)
        curve[i] = mlp_forward(p, n_samples > 1 ? double(i) / (n_samples - 1) : 0.0);
    return curve;
}

}  // namespace design_detail

inline OptimizationLog run_case1(const CaseSpec& spec,
                                 const std::function<void(const IterationEntry&)>& on_iter = {}) {
    auto ctx = sim::make_run_context(spec.mesh, spec.path, spec.schedule, spec.material,
                                     spec.laser, spec.sim);
    auto target = design_detail::synthesize_target(ctx, {});

    OptimizationLog log;
    log.case_id = 1;
    std::array<double, 5> ref{spec.material.cp, spec.material.k, spec.material.h_conv,
                              spec.laser.power, spec.laser.beam_radius};
    log.target_params.assign(ref.begin(), ref.end());

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> init(spec.init_lo, spec.init_hi);
    ad::Vec theta0(5);
    for (auto& t : theta0) t = init(rng);

    ad::Tape tape;
    int theta = tape.add_param(theta0, true);
    auto scale = std::make_shared<ScaleKernel>(ref, spec.material.emissivity);
    auto loss_kernel =
        std::make_shared<HistoryMseKernel>(ctx, ObservedSet::TopLayer, target);
    AdamState adam(spec.lr);

    auto t_start = std::chrono::steady_clock::now();
    for (int iter = 0; iter <= spec.iterations; ++iter) {
        tape.clear_records();
        int sc = tape.record_step(scale, {ad::ValueRef::param(theta)});
        ForwardRefs refs{ad::ValueRef::output(sc, 0), ad::ValueRef::output(sc, 1), {}};
        ThermalHistory hist = run_forward(tape, ctx, refs);
        int lr_rec = tape.record_step(loss_kernel, design_detail::state_refs(hist));
        IterationEntry e;
        e.iter = iter;
        e.loss = tape.output(lr_rec)[0];
        for (int i = 0; i < 5; ++i) e.params.push_back(tape.param_value(theta)[i] * ref[i]);
        e.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                 t_start).count();
        log.entries.push_back(e);
        if (on_iter) on_iter(e);
        if (iter == spec.iterations) break;
        ad::GradientStore grads = tape.backward();
        adam_step(adam, {&tape.param_value(theta)}, {&grads.grad(theta)});
    }
    return log;
}

namespace design_detail {

// Shared driver for the two MLP-controlled cases.
template <typename LossFn>
OptimizationLog run_mlp_case(const CaseSpec& spec, const sim::RunContextPtr& ctx,
                             LossFn&& record_loss, int case_id,
                             const std::function<void(const IterationEntry&)>& on_iter) {
    OptimizationLog log;
    log.case_id = case_id;
    ad::Tape tape;
    MlpParamIds ids = register_mlp_params(tape, MlpParams::random_init(spec.seed), true);
    int mat_p = tape.add_param({ctx->mat.cp, ctx->mat.k, ctx->mat.h_conv,
                                ctx->mat.emissivity}, false);
    int las_p = tape.add_param({ctx->las.power, ctx->las.beam_radius}, false);
    AdamState adam(spec.lr);
    const int n_curve = 200;

    auto t_start = std::chrono::steady_clock::now();
    for (int iter = 0; iter <= spec.iterations; ++iter) {
        tape.clear_records();
        ForwardRefs refs{ad::ValueRef::param(mat_p), ad::ValueRef::param(las_p),
                         [&](ad::Tape& t, int, double tn) {
                             std::vector<ad::ValueRef> pin;
                             for (int id : ids.all()) pin.push_back(ad::ValueRef::param(id));
                             return ad::ValueRef::output(
                                 t.record_step(std::make_shared<MlpKernel>(tn), pin));
                         }};
        ThermalHistory hist = run_forward(tape, ctx, refs);
        double loss = record_loss(tape, hist, log, iter);
        IterationEntry e;
        e.iter = iter;
        e.loss = loss;
        e.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                                 t_start).count();
        log.entries.push_back(e);
        if (on_iter) on_iter(e);
        bool snapshot = iter == 0 || iter == spec.iterations ||
                        (spec.iterations >= 5 && iter % std::max(1, spec.iterations / 5) == 0);
        if (snapshot)
            log.power_curves.emplace_back(iter,
                                          design_detail::sample_power_curve(tape, ids, n_curve));
        if (iter == spec.iterations) break;
        ad::GradientStore grads = tape.backward();
        std::vector<ad::Vec*> params;
        std::vector<const ad::Vec*> gs;
        for (int id : ids.all()) {
            params.push_back(&tape.param_value(id));
            gs.push_back(&grads.grad(id));
        }
        adam_step(adam, params, gs);
    }
    return log;
}

}  // namespace design_detail

inline OptimizationLog run_case2(const CaseSpec& spec,
                                 const std::function<void(const IterationEntry&)>& on_iter = {}) {
    auto ctx = sim::make_run_context(spec.mesh, spec.path, spec.schedule, spec.material,
                                     spec.laser, spec.sim);
    auto ref_power = spec.reference_power ? spec.reference_power
                                          : reference_power_schedule;
    auto target = design_detail::synthesize_target(ctx, ref_power);
    auto loss_kernel =
        std::make_shared<HistoryMseKernel>(ctx, ObservedSet::AllActive, target);
    return design_detail::run_mlp_case(
        spec, ctx,
        [&](ad::Tape& tape, const ThermalHistory& hist, OptimizationLog&, int) {
            int rec = tape.record_step(loss_kernel, design_detail::state_refs(hist));
            return tape.output(rec)[0];
        },
        2, on_iter);
}

inline OptimizationLog run_case3(const CaseSpec& spec,
                                 const std::function<void(const IterationEntry&)>& on_iter = {}) {
    require(spec.target_depth > 0, "case3: target depth must be > 0");
    auto ctx = sim::make_run_context(spec.mesh, spec.path, spec.schedule, spec.material,
                                     spec.laser, spec.sim);
    auto loss_kernel = std::make_shared<DepthMseKernel>(spec.target_depth,
                                                        ctx->mesh.element_size.z);
    return design_detail::run_mlp_case(
        spec, ctx,
        [&](ad::Tape& tape, const ThermalHistory& hist, OptimizationLog& log, int iter) {
            DepthTrace trace = depth_trace(tape, hist, ctx, spec.delta_clamp);
            std::vector<ad::ValueRef> refs;
            std::vector<double> depths;
            for (const auto& s : trace.samples)
                if (!s.skipped) {
                    refs.push_back(ad::ValueRef::output(s.record, 0));
                    depths.push_back(s.depth);
                }
            require(!refs.empty(), "case3: depth trace has no usable samples");
            if (iter == 0) log.initial_depths = depths;
            log.final_depths = depths;
            int rec = tape.record_step(loss_kernel, refs);
            return tape.output(rec)[0];
        },
        3, on_iter);
}

inline OptimizationLog run_case(const CaseSpec& spec,
                                const std::function<void(const IterationEntry&)>& on_iter = {}) {
    switch (spec.case_id) {
        case 1: return run_case1(spec, on_iter);
        case 2: return run_case2(spec, on_iter);
        case 3: return run_case3(spec, on_iter);
        default: throw std::invalid_argument("run_case: case id must be 1, 2, or 3");
    }
}

inline std::string loss_csv(const OptimizationLog& log) {
    std::string out = "iteration,loss\n";
    char buf[64];
    for (const auto& e : log.entries) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g\n", e.iter, e.loss);
        out += buf;
    }
    return out;
}

inline std::string params_csv(const OptimizationLog& log) {
    std::string out = "iteration,cp,k,h_conv,power,beam_radius\n";
    char buf[256];
    for (const auto& e : log.entries) {
        if (e.params.size() != 5) continue;
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g\n", e.iter,
                      e.params[0], e.params[1], e.params[2], e.params[3], e.params[4]);
        out += buf;
    }
    return out;
}

inline std::string power_csv(const std::vector<double>& curve) {
    std::string out = "t_norm,power\n";
    char buf[64];
    for (std::size_t i = 0; i < curve.size(); ++i) {
        double tn = curve.size() > 1 ? double(i) / (curve.size() - 1) : 0.0;
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", tn, curve[i]);
        out += buf;
    }
    return out;
}

}  // namespace thermoforge
