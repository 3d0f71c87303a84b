#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <vector>

#include "thermoforge/core.hpp"
#include "thermoforge/mesh.hpp"
#include "thermoforge/simulate.hpp"
#include "thermoforge/tape.hpp"

namespace thermoforge {

// 3x3 in-plane node grid at one height level below the laser. Level 0 is the
// node plane of the current top active build layer; each level descends one
// element height.
struct InterpStencil {
    int level = 0;
    std::array<NodeId, 9> nodes{};  // row-major, j then i
    std::array<double, 9> x{}, y{};
    double z = 0.0;
};

namespace meltpool_detail {

// Nearest lattice index to coordinate v/spacing, ties toward the smaller index.
inline int nearest_index(double v, double spacing) {
    return static_cast<int>(std::ceil(v / spacing - 0.5));
}

// 9x9 solve by Gaussian elimination with partial pivoting.
inline std::array<double, 9> solve9(std::array<std::array<double, 9>, 9> A,
                                    std::array<double, 9> b) {
    for (int col = 0; col < 9; ++col) {
        int piv = col;
        for (int r = col + 1; r < 9; ++r)
            if (std::abs(A[r][col]) > std::abs(A[piv][col])) piv = r;
        if (std::abs(A[piv][col]) < 1e-14)
            throw SimulationError("biquadratic: singular interpolation system");
        std::swap(A[col], A[piv]);
        std::swap(b[col], b[piv]);
        for (int r = col + 1; r < 9; ++r) {
            double f = A[r][col] / A[col][col];
            for (int c = col; c < 9; ++c) A[r][c] -= f * A[col][c];
            b[r] -= f * b[col];
        }
    }
    std::array<double, 9> sol{};
    for (int r = 8; r >= 0; --r) {
        double acc = b[r];
        for (int c = r + 1; c < 9; ++c) acc -= A[r][c] * sol[c];
        sol[r] = acc / A[r][r];
    }
    return sol;
}

inline std::array<double, 9> basis(double u, double v) {
    return {1.0, u, v, u * v, u * u, v * v, u * u * v, u * v * v, u * u * v * v};
}

}  // namespace meltpool_detail

// Interpolation weights w with T(query) = w . T_nodes. The Vandermonde matrix
// depends only on geometry, so the interpolant is linear in the nodal values;
// w solves A^T w = basis(query) in centered/scaled local coordinates.
inline std::array<double, 9> biquadratic_weights(const InterpStencil& st, double qx,
                                                 double qy) {
    double xc = st.x[4], yc = st.y[4];
    double sx = st.x[5] - st.x[4], sy = st.y[7] - st.y[4];
    std::array<std::array<double, 9>, 9> At;  // A^T: rows basis term, cols point
    for (int p = 0; p < 9; ++p) {
        auto bp = meltpool_detail::basis((st.x[p] - xc) / sx, (st.y[p] - yc) / sy);
        for (int t = 0; t < 9; ++t) At[t][p] = bp[t];
    }
    auto bq = meltpool_detail::basis((qx - xc) / sx, (qy - yc) / sy);
    return meltpool_detail::solve9(At, bq);
}

inline double biquadratic_eval(const InterpStencil& st,
                               const std::array<double, 9>& T, double qx, double qy) {
    auto w = biquadratic_weights(st, qx, qy);
    double acc = 0.0;
    for (int i = 0; i < 9; ++i) acc += w[i] * T[i];
    return acc;
}

// Stencil at the given level under the laser; nullopt when the 3x3 grid does
// not fit inside the lattice (laser outside the build footprint).
inline std::optional<InterpStencil> stencil_lookup(const HexMesh& mesh, int top_layer_k,
                                                   Vec3 laser, int level) {
    require(level >= 0 && level <= 3, "stencil_lookup: level in 0..3");
    int ci = meltpool_detail::nearest_index(laser.x, mesh.element_size.x);
    int cj = meltpool_detail::nearest_index(laser.y, mesh.element_size.y);
    int ck = top_layer_k + 1 - level;  // node-lattice plane
    if (ci < 1 || ci > mesh.nx - 1 || cj < 1 || cj > mesh.ny - 1) return std::nullopt;
    if (ck < mesh.kmin) return std::nullopt;
    InterpStencil st;
    st.level = level;
    st.z = ck * mesh.element_size.z;
    int idx = 0;
    for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di, ++idx) {
            NodeId n = mesh.node_at(ci + di, cj + dj, ck);
            if (n < 0) return std::nullopt;
            st.nodes[idx] = n;
            st.x[idx] = mesh.nodes[n].x;
            st.y[idx] = mesh.nodes[n].y;
        }
    return st;
}

struct PairwiseDepth {
    double depth = 0.0;
    std::array<double, 4> dT{};  // d(depth)/d(level temperature)
    bool saturated = false;
    bool degenerate = false;
};

// First adjacent level pair bracketing the melt isotherm, linearly
// interpolated. Below-surface misses extrapolate from the top pair and are
// softly clamped at zero so the gradient survives near zero depth.
inline PairwiseDepth pairwise_depth(const std::array<double, 4>& T,
                                    const std::array<double, 4>& d, double T_melt,
                                    double delta_clamp = 1e-6) {
    for (int i = 0; i < 3; ++i)
        require(d[i] < d[i + 1], "pairwise_depth: level depths must increase");
    PairwiseDepth out;
    if (T[0] >= T_melt && T[1] >= T_melt && T[2] >= T_melt && T[3] >= T_melt) {
        out.depth = d[3];
        out.saturated = true;
        return out;
    }
    int pair = -1;
    for (int i = 0; i < 3; ++i)
        if (T[i] >= T_melt && T[i + 1] < T_melt) {
            pair = i;
            break;
        }
    bool extrapolate = false;
    if (pair < 0) {
        // T[0] < T_melt, or a non-monotone profile with no bracketing pair.
        pair = 0;
        extrapolate = true;
    }
    double dT01 = T[pair + 1] - T[pair];
    if (dT01 == 0.0) {
        if (extrapolate) {
            // Flat sub-melt profile: the isotherm is never reached; hard zero
            // (the smooth clamp's limit for raw -> -inf) with zero slope.
            out.depth = 0.0;
            return out;
        }
        out.depth = 0.5 * (d[pair] + d[pair + 1]);
        out.degenerate = true;
        return out;
    }
    double dd = d[pair + 1] - d[pair];
    double raw = d[pair] + (T_melt - T[pair]) * dd / dT01;
    double g_i = dd * (T_melt - T[pair + 1]) / (dT01 * dT01);
    double g_i1 = -dd * (T_melt - T[pair]) / (dT01 * dT01);
    if (extrapolate) {
        double root = std::sqrt(raw * raw + delta_clamp * delta_clamp);
        double chain = 0.5 * (1.0 + raw / root);
        out.depth = 0.5 * (raw + root);
        g_i *= chain;
        g_i1 *= chain;
    } else {
        out.depth = raw;
    }
    out.dT[pair] = g_i;
    out.dT[pair + 1] = g_i1;
    return out;
}

// Tape kernel: nodal temperature field -> (melt-pool depth, 4 level temps).
class DepthKernel : public ad::Kernel {
public:
    DepthKernel(std::array<InterpStencil, 4> stencils, Vec3 laser, double T_melt,
                double dz, double delta_clamp)
        : ad::Kernel("meltpool_depth"),
          stencils_(stencils),
          T_melt_(T_melt),
          delta_clamp_(delta_clamp) {
        for (int l = 0; l < 4; ++l) {
            weights_[l] = biquadratic_weights(stencils_[l], laser.x, laser.y);
            depths_[l] = l * dz;
        }
    }

    std::array<double, 4> level_temps(const ad::Vec& T) const {
        std::array<double, 4> out{};
        for (int l = 0; l < 4; ++l)
            for (int i = 0; i < 9; ++i)
                out[l] += weights_[l][i] * T[stencils_[l].nodes[i]];
        return out;
    }

    std::vector<ad::Vec> forward(const std::vector<const ad::Vec*>& in) const override {
        auto lt = level_temps(*in[0]);
        auto pd = pairwise_depth(lt, depths_, T_melt_, delta_clamp_);
        return {{pd.depth}, {lt[0], lt[1], lt[2], lt[3]}};
    }

    void backward(const std::vector<const ad::Vec*>& in, const std::vector<ad::Vec>&,
                  const std::vector<ad::Vec>& out_adj,
                  std::vector<ad::Vec>& in_adj) const override {
        auto lt = level_temps(*in[0]);
        auto pd = pairwise_depth(lt, depths_, T_melt_, delta_clamp_);
        for (int l = 0; l < 4; ++l) {
            double lam_level = out_adj[0][0] * pd.dT[l] + out_adj[1][l];
            if (lam_level == 0.0) continue;
            for (int i = 0; i < 9; ++i)
                in_adj[0][stencils_[l].nodes[i]] += lam_level * weights_[l][i];
        }
    }

private:
    std::array<InterpStencil, 4> stencils_;
    std::array<double, 9> weights_[4];
    std::array<double, 4> depths_{};
    double T_melt_;
    double delta_clamp_;
};

struct DepthSample {
    int step = 0;       // state index s; depth evaluated on T^s
    double time = 0.0;
    Vec3 laser;
    bool skipped = false;
    int record = -1;    // tape record of the depth kernel
    double depth = 0.0;
    std::array<double, 4> level_T{};
};

struct DepthTrace {
    std::vector<DepthSample> samples;
    double element_height = 0.0;
};

// Registers a depth kernel at every laser-on step (state T^{n+1}, laser of
// step n); stencil-unavailable steps are kept as skipped entries.
inline DepthTrace depth_trace(ad::Tape& tape, const ThermalHistory& hist,
                              const sim::RunContextPtr& ctx,
                              double delta_clamp = 1e-6) {
    DepthTrace trace;
    const HexMesh& mesh = ctx->mesh;
    trace.element_height = mesh.element_size.z;
    for (int n = 0; n < hist.n_steps; ++n) {
        const sim::StepLaser& laser = ctx->laser_at_step[n];
        if (!laser.on) continue;
        DepthSample s;
        s.step = n + 1;
        s.time = n * hist.dt;
        s.laser = laser.pos;
        const sim::Epoch& ep = ctx->epoch_at(n);
        int top_k = mesh.kmin - 1;
        for (ElementId e : ep.elements) top_k = std::max(top_k, mesh.elem_coord[e][2]);
        std::array<InterpStencil, 4> stencils;
        bool ok = true;
        for (int l = 0; l < 4 && ok; ++l) {
            auto st = stencil_lookup(mesh, top_k, laser.pos, l);
            if (!st)
                ok = false;
            else
                stencils[l] = *st;
        }
        if (!ok) {
            s.skipped = true;
            trace.samples.push_back(s);
            continue;
        }
        auto kernel = std::make_shared<DepthKernel>(stencils, laser.pos, ctx->mat.T_melt,
                                                    mesh.element_size.z, delta_clamp);
        s.record = tape.record_step(kernel, {hist.state_ref(n + 1)});
        s.depth = tape.output(s.record, 0)[0];
        const ad::Vec& lt = tape.output(s.record, 1);
        for (int l = 0; l < 4; ++l) s.level_T[l] = lt[l];
        trace.samples.push_back(s);
    }
    return trace;
}

inline std::string depth_csv(const DepthTrace& trace) {
    std::string out =
        "step,time,x,y,depth_m,T_level0,T_level1,T_level2,T_level3,skipped_flag\n";
    char buf[256];
    for (const auto& s : trace.samples) {
        std::snprintf(buf, sizeof(buf),
                      "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d\n", s.step,
                      s.time, s.laser.x, s.laser.y, s.depth, s.level_T[0], s.level_T[1],
                      s.level_T[2], s.level_T[3], s.skipped ? 1 : 0);
        out += buf;
    }
    return out;
}

}  // namespace thermoforge
