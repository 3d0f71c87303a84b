#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "thermoforge/core.hpp"
#include "thermoforge/tape.hpp"

namespace thermoforge {

// 1 -> 50 -> 50 -> 1 controller, tanh hidden activations, output mapped to
// power = 500 (tanh(z) + 1) in (0, 1000) W.
struct MlpParams {
    static constexpr int kHidden = 50;
    static constexpr int kScalarCount = 1 * 50 + 50 + 50 * 50 + 50 + 50 * 1 + 1;  // 2701

    ad::Vec w1, b1;  // 50, 50
    ad::Vec w2, b2;  // 50x50 row-major, 50
    ad::Vec w3, b3;  // 50, 1

    static MlpParams random_init(std::uint64_t seed) {
        MlpParams p;
        std::mt19937_64 rng(seed);
        auto fill = [&rng](ad::Vec& v, std::size_t n, int fan_in) {
            std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in),
                                                        1.0 / std::sqrt(fan_in));
            v.resize(n);
            for (auto& x : v) x = dist(rng);
        };
        fill(p.w1, 50, 1);
        fill(p.b1, 50, 1);
        fill(p.w2, 2500, 50);
        fill(p.b2, 50, 50);
        fill(p.w3, 50, 50);
        fill(p.b3, 1, 50);
        return p;
    }

    std::size_t scalar_count() const {
        return w1.size() + b1.size() + w2.size() + b2.size() + w3.size() + b3.size();
    }
};

struct MlpParamIds {
    int w1, b1, w2, b2, w3, b3;

    std::vector<int> all() const { return {w1, b1, w2, b2, w3, b3}; }
};

inline MlpParamIds register_mlp_params(ad::Tape& tape, const MlpParams& p,
                                       bool requires_grad = true) {
    return {tape.add_param(p.w1, requires_grad), tape.add_param(p.b1, requires_grad),
            tape.add_param(p.w2, requires_grad), tape.add_param(p.b2, requires_grad),
            tape.add_param(p.w3, requires_grad), tape.add_param(p.b3, requires_grad)};
}

// Plain (tape-free) evaluation; time is normalized to [0,1] and mapped to
// [-1,1] before the first layer.
inline double mlp_forward(const MlpParams& p, double t_norm) {
    constexpr int H = MlpParams::kHidden;
    double x = 2.0 * t_norm - 1.0;
    double a1[H], a2[H];
    for (int i = 0; i < H; ++i) a1[i] = std::tanh(p.w1[i] * x + p.b1[i]);
    for (int i = 0; i < H; ++i) {
        double z = p.b2[i];
        for (int j = 0; j < H; ++j) z += p.w2[i * H + j] * a1[j];
        a2[i] = std::tanh(z);
    }
    double z3 = p.b3[0];
    for (int j = 0; j < H; ++j) z3 += p.w3[j] * a2[j];
    return 500.0 * (std::tanh(z3) + 1.0);
}

// Tape kernel; inputs are the six parameter vectors, output the laser power.
class MlpKernel : public ad::Kernel {
public:
    explicit MlpKernel(double t_norm) : ad::Kernel("mlp_power"), t_norm_(t_norm) {}

    std::vector<ad::Vec> forward(const std::vector<const ad::Vec*>& in) const override {
        MlpParams p{*in[0], *in[1], *in[2], *in[3], *in[4], *in[5]};
        return {{mlp_forward(p, t_norm_)}};
    }

    void backward(const std::vector<const ad::Vec*>& in, const std::vector<ad::Vec>&,
                  const std::vector<ad::Vec>& out_adj,
                  std::vector<ad::Vec>& in_adj) const override {
        constexpr int H = MlpParams::kHidden;
        const ad::Vec& w1 = *in[0];
        const ad::Vec& b1 = *in[1];
        const ad::Vec& w2 = *in[2];
        const ad::Vec& b2 = *in[3];
        const ad::Vec& w3 = *in[4];
        const ad::Vec& b3 = *in[5];
        double x = 2.0 * t_norm_ - 1.0;
        double a1[H], a2[H];
        for (int i = 0; i < H; ++i) a1[i] = std::tanh(w1[i] * x + b1[i]);
        for (int i = 0; i < H; ++i) {
            double z = b2[i];
            for (int j = 0; j < H; ++j) z += w2[i * H + j] * a1[j];
            a2[i] = std::tanh(z);
        }
        double z3 = b3[0];
        for (int j = 0; j < H; ++j) z3 += w3[j] * a2[j];
        double th3 = std::tanh(z3);
        double dz3 = out_adj[0][0] * 500.0 * (1.0 - th3 * th3);
        double da1[H] = {};
        for (int i = 0; i < H; ++i) {
            double da2 = dz3 * w3[i];
            in_adj[4][i] += dz3 * a2[i];
            double dz2 = da2 * (1.0 - a2[i] * a2[i]);
            in_adj[3][i] += dz2;
            for (int j = 0; j < H; ++j) {
                in_adj[2][i * H + j] += dz2 * a1[j];
                da1[j] += dz2 * w2[i * H + j];
            }
        }
        in_adj[5][0] += dz3;
        for (int i = 0; i < H; ++i) {
            double dz1 = da1[i] * (1.0 - a1[i] * a1[i]);
            in_adj[0][i] += dz1 * x;
            in_adj[1][i] += dz1;
        }
    }

private:
    double t_norm_;
};

}  // namespace thermoforge
