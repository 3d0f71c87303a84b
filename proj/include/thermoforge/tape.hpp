#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "thermoforge/core.hpp"

namespace thermoforge::ad {

using Vec = std::vector<double>;

// A value on the tape: either the output of an earlier record or a parameter.
struct ValueRef {
    int record = -1;
    int index = 0;
    int param_id = -1;

    static ValueRef output(int record, int index = 0) { return {record, index, -1}; }
    static ValueRef param(int id) { return {-1, 0, id}; }
    bool is_param() const { return param_id >= 0; }
};

struct Param {
    int id = -1;
    Vec value;
    bool requires_grad = false;
};

class GradientStore {
public:
    void ensure(int param_id, std::size_t n) {
        auto& g = grads_[param_id];
        if (g.size() < n) g.resize(n, 0.0);
    }
    void accumulate(int param_id, const Vec& adj) {
        ensure(param_id, adj.size());
        auto& g = grads_[param_id];
        for (std::size_t i = 0; i < adj.size(); ++i) g[i] += adj[i];
    }
    const Vec& grad(int param_id) const {
        auto it = grads_.find(param_id);
        if (it == grads_.end()) throw SimulationError("GradientStore: no entry for param");
        return it->second;
    }
    bool has(int param_id) const { return grads_.count(param_id) > 0; }

private:
    std::map<int, Vec> grads_;
};

// A composite operation with a hand-derived adjoint. backward() receives the
// same resolved inputs as forward(), the stored outputs, and the output
// adjoints; it accumulates into preallocated zero input-adjoint buffers.
class Kernel {
public:
    explicit Kernel(std::string name) : name_(std::move(name)) {}
    virtual ~Kernel() = default;
    const std::string& name() const { return name_; }

    virtual std::vector<Vec> forward(const std::vector<const Vec*>& inputs) const = 0;
    virtual void backward(const std::vector<const Vec*>& inputs,
                          const std::vector<Vec>& outputs,
                          const std::vector<Vec>& out_adj,
                          std::vector<Vec>& in_adj) const = 0;

private:
    std::string name_;
};

class LambdaKernel : public Kernel {
public:
    using ForwardFn = std::function<std::vector<Vec>(const std::vector<const Vec*>&)>;
    using BackwardFn = std::function<void(const std::vector<const Vec*>&,
                                          const std::vector<Vec>&,
                                          const std::vector<Vec>&, std::vector<Vec>&)>;
    LambdaKernel(std::string name, ForwardFn fwd, BackwardFn bwd)
        : Kernel(std::move(name)), fwd_(std::move(fwd)), bwd_(std::move(bwd)) {}

    std::vector<Vec> forward(const std::vector<const Vec*>& in) const override {
        return fwd_(in);
    }
    void backward(const std::vector<const Vec*>& in, const std::vector<Vec>& out,
                  const std::vector<Vec>& out_adj, std::vector<Vec>& in_adj) const override {
        bwd_(in, out, out_adj, in_adj);
    }

private:
    ForwardFn fwd_;
    BackwardFn bwd_;
};

// Step-level tape. Forward stores each record's outputs (the per-step
// checkpoints); backward walks the records once in reverse, handing each
// kernel its stored inputs/outputs so intra-step intermediates can be
// recomputed instead of stored.
class Tape {
public:
    int add_param(Vec value, bool requires_grad) {
        for (double v : value)
            if (!std::isfinite(v)) throw std::invalid_argument("Tape: non-finite param value");
        int id = static_cast<int>(params_.size());
        params_.push_back({id, std::move(value), requires_grad});
        return id;
    }
    Vec& param_value(int id) { return params_.at(id).value; }
    const Vec& param_value(int id) const { return params_.at(id).value; }
    const std::vector<Param>& params() const { return params_; }

    const Vec& value(const ValueRef& ref) const {
        if (ref.is_param()) return params_.at(ref.param_id).value;
        return records_.at(ref.record).outputs.at(ref.index);
    }

    int record_step(std::shared_ptr<const Kernel> kernel, std::vector<ValueRef> inputs) {
        std::vector<const Vec*> in;
        in.reserve(inputs.size());
        for (const auto& r : inputs) in.push_back(&value(r));
        auto outputs = kernel->forward(in);
        for (const auto& o : outputs)
            for (double v : o)
                if (!std::isfinite(v))
                    throw SimulationError("Tape: non-finite output from kernel '" +
                                          kernel->name() + "' at record " +
                                          std::to_string(records_.size()));
        records_.push_back({std::move(kernel), std::move(inputs), std::move(outputs)});
        return static_cast<int>(records_.size()) - 1;
    }

    const Vec& output(int record, int index = 0) const {
        return records_.at(record).outputs.at(index);
    }
    std::size_t n_records() const { return records_.size(); }

    // Total scalars held in record outputs; the backward-memory contract.
    std::size_t checkpoint_scalars() const {
        std::size_t n = 0;
        for (const auto& r : records_)
            for (const auto& o : r.outputs) n += o.size();
        return n;
    }

    // Reverse sweep from the last record's first output (a scalar loss).
    // The tape is left untouched and can be re-run.
    GradientStore backward(double loss_adjoint = 1.0) const {
        if (records_.empty()) throw SimulationError("Tape: backward before forward");
        const auto& last = records_.back();
        if (last.outputs.empty() || last.outputs[0].size() != 1)
            throw SimulationError("Tape: last record output is not a scalar loss");

        GradientStore grads;
        for (const auto& p : params_)
            if (p.requires_grad) grads.ensure(p.id, p.value.size());

        // adj[r][k]: adjoint of record r's output k; allocated on demand,
        // released once consumed.
        std::vector<std::vector<Vec>> adj(records_.size());
        auto adj_of = [&](int r, std::size_t k) -> Vec& {
            auto& a = adj[r];
            if (a.empty()) {
                a.resize(records_[r].outputs.size());
                for (std::size_t i = 0; i < a.size(); ++i)
                    a[i].assign(records_[r].outputs[i].size(), 0.0);
            }
            return a[k];
        };
        adj_of(static_cast<int>(records_.size()) - 1, 0)[0] = loss_adjoint;

        for (int r = static_cast<int>(records_.size()) - 1; r >= 0; --r) {
            if (adj[r].empty()) continue;  // no path to the loss
            const auto& rec = records_[r];
            std::vector<const Vec*> in;
            in.reserve(rec.inputs.size());
            for (const auto& ref : rec.inputs) in.push_back(&value(ref));
            std::vector<Vec> in_adj(rec.inputs.size());
            for (std::size_t i = 0; i < in.size(); ++i) in_adj[i].assign(in[i]->size(), 0.0);
            rec.kernel->backward(in, rec.outputs, adj[r], in_adj);
            for (std::size_t i = 0; i < rec.inputs.size(); ++i) {
                const auto& ref = rec.inputs[i];
                if (ref.is_param()) {
                    grads.accumulate(ref.param_id, in_adj[i]);
                } else {
                    Vec& dst = adj_of(ref.record, ref.index);
                    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += in_adj[i][k];
                }
            }
            adj[r].clear();
            adj[r].shrink_to_fit();
        }
        return grads;
    }

    // Drop all records but keep parameters; used between optimizer iterations.
    void clear_records() { records_.clear(); }

private:
    struct Record {
        std::shared_ptr<const Kernel> kernel;
        std::vector<ValueRef> inputs;
        std::vector<Vec> outputs;
    };
    std::vector<Param> params_;
    std::vector<Record> records_;
};

// Central-difference check of backward() for every requires_grad parameter.
// run_loss must clear old records, rebuild the computation from the tape's
// current parameter values, and return the scalar loss.
inline double grad_check(Tape& tape, const std::function<double(Tape&)>& run_loss,
                         double eps) {
    require(eps >= 1e-8 && eps <= 1e-3, "grad_check: eps must lie in [1e-8, 1e-3]");
    constexpr double kFloor = 1e-12;
    double loss0 = run_loss(tape);
    if (!std::isfinite(loss0)) throw SimulationError("grad_check: non-finite loss");
    GradientStore grads = tape.backward();

    double max_rel = 0.0;
    std::vector<int> ids;
    for (const auto& p : tape.params())
        if (p.requires_grad) ids.push_back(p.id);
    for (int id : ids) {
        Vec base = tape.param_value(id);
        const Vec& g = grads.grad(id);
        for (std::size_t i = 0; i < base.size(); ++i) {
            double h = eps * std::max(std::abs(base[i]), 1.0);
            tape.param_value(id)[i] = base[i] + h;
            double lp = run_loss(tape);
            tape.param_value(id)[i] = base[i] - h;
            double lm = run_loss(tape);
            tape.param_value(id)[i] = base[i];
            if (!std::isfinite(lp) || !std::isfinite(lm))
                throw SimulationError("grad_check: non-finite loss at perturbed param " +
                                      std::to_string(id));
            double fd = (lp - lm) / (2.0 * h);
            double rel = std::abs(g[i] - fd) / std::max(std::abs(fd), kFloor);
            max_rel = std::max(max_rel, rel);
        }
    }
    // Leave the tape holding the unperturbed computation.
    run_loss(tape);
    return max_rel;
}

}  // namespace thermoforge::ad
