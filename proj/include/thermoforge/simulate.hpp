#pragma once

#include <cstdio>
#include <functional>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "thermoforge/core.hpp"
#include "thermoforge/fem.hpp"
#include "thermoforge/mesh.hpp"
#include "thermoforge/tape.hpp"
#include "thermoforge/toolpath.hpp"

namespace thermoforge {

struct SurfaceSets {
    std::vector<FaceKey> dirichlet;    // Gamma_1: substrate bottom
    std::vector<FaceKey> laser;        // Gamma_2: free +z faces
    std::vector<FaceKey> convection;   // Gamma_3 (= Gamma_4): free minus Dirichlet
};

inline SurfaceSets surface_sets(const HexMesh& mesh, const std::set<ElementId>& active) {
    SurfaceSets s;
    for (const FaceKey& f : free_faces(mesh, active)) {
        bool bottom = f.local_face == 4 && mesh.elem_coord[f.element][2] == mesh.kmin;
        if (bottom) {
            s.dirichlet.push_back(f);
            continue;
        }
        s.convection.push_back(f);
        if (f.local_face == 5) s.laser.push_back(f);
    }
    return s;
}

namespace sim {

struct ConvFace {
    std::array<NodeId, 4> n;
    int axis;  // 0:x 1:y 2:z normal
};

struct LaserFace {
    std::array<NodeId, 4> n;
    double qx[4], qy[4];  // in-plane quadrature point positions
};

// Assembly snapshot for one contiguous run of steps with a fixed active set.
struct Epoch {
    int first_step = 0;
    std::vector<ElementId> elements;
    std::vector<std::uint8_t> node_active;
    std::vector<double> m_unit;     // lumped capacitance per node at rho*cp = 1
    std::vector<double> krow_unit;  // sum_j |K_ij| per node at k = 1
    std::vector<ConvFace> conv_faces;
    std::vector<LaserFace> laser_faces;
    std::vector<NodeId> observed_top_nodes;  // nodes of the topmost active layer
};

struct StepLaser {
    Vec3 pos;
    bool on = false;
};

struct RunContext {
    HexMesh mesh;
    Toolpath path;
    BirthSchedule schedule;
    MaterialParams mat;
    LaserParams las;
    SimConfig cfg;

    double Ke_unit[8][8] = {};   // reference-box conduction at k = 1
    double me_unit[8] = {};      // reference-box lumped capacitance at rho*cp = 1
    double M2_axis[3][4][4] = {};  // face consistent mass by normal axis
    double wq_axis[3] = {};        // face quadrature weight (area / 4) by normal axis

    std::vector<Epoch> epochs;
    std::vector<int> epoch_of_step;           // step n -> epoch index, n in [0, n_steps]
    std::vector<StepLaser> laser_at_step;     // n in [0, n_steps)
    std::vector<std::vector<NodeId>> newborn; // newborn[s]: nodes first active at step s
    std::vector<std::uint8_t> is_dirichlet;
    std::vector<NodeId> dirichlet_nodes;
    ad::Vec initial_T;
    double dt_max = 0.0;
    bool near_stability_limit = false;

    const Epoch& epoch_at(int step) const { return epochs[epoch_of_step[step]]; }
};

using RunContextPtr = std::shared_ptr<const RunContext>;

struct StepParams {
    double cp, k, h, eps, P, rb;
};

namespace detail_sim {

// Shared forward recompute: writes T_out, and (if f_store) the net nodal
// power F used by the parameter adjoints.
inline void step_apply(const RunContext& ctx, int step, const double* T,
                       const StepParams& p, double* T_out, double* f_store) {
    const std::size_t n_nodes = ctx.mesh.n_nodes();
    const Epoch& ep = ctx.epoch_at(step);
    const StepLaser& laser = ctx.laser_at_step[step];
    const MaterialParams& mat = ctx.mat;
    std::vector<double> F(n_nodes, 0.0);

    // Conduction action -k K T plus volumetric source.
    for (ElementId e : ep.elements) {
        const auto& conn = ctx.mesh.elements[e];
        double Te[8];
        for (int i = 0; i < 8; ++i) Te[i] = T[conn[i]];
        for (int i = 0; i < 8; ++i) {
            double kt = 0.0;
            for (int j = 0; j < 8; ++j) kt += ctx.Ke_unit[i][j] * Te[j];
            F[conn[i]] -= p.k * kt;
        }
    }
    if (mat.s_vol != 0.0)
        for (std::size_t i = 0; i < n_nodes; ++i) F[i] += mat.s_vol * ep.m_unit[i];

    // Convection and radiation losses on free faces.
    const double amb4 = mat.T_amb * mat.T_amb * mat.T_amb * mat.T_amb;
    const double sig = PhysicalConstants::sigma_sb;
    for (const ConvFace& cf : ep.conv_faces) {
        const auto& M2 = ctx.M2_axis[cf.axis];
        double Tf[4];
        for (int i = 0; i < 4; ++i) Tf[i] = T[cf.n[i]];
        for (int i = 0; i < 4; ++i) {
            double acc = 0.0;
            for (int j = 0; j < 4; ++j) acc += M2[i][j] * (Tf[j] - mat.T_amb);
            F[cf.n[i]] -= p.h * acc;
        }
        double wq = ctx.wq_axis[cf.axis];
        for (int q = 0; q < 4; ++q) {
            double gu = (q & 2) ? quad::g : -quad::g;
            double gv = (q & 1) ? quad::g : -quad::g;
            std::array<double, 4> N;
            detail::face_shape(gu, gv, N);
            double Tq = 0.0;
            for (int i = 0; i < 4; ++i) Tq += N[i] * Tf[i];
            double flux = p.eps * sig * (Tq * Tq * Tq * Tq - amb4);
            for (int i = 0; i < 4; ++i) F[cf.n[i]] -= N[i] * flux * wq;
        }
    }

    // Laser flux on free top faces; Gaussian without cutoff.
    if (laser.on && p.P != 0.0) {
        double wq = ctx.wq_axis[2];
        for (const LaserFace& lf : ep.laser_faces) {
            for (int q = 0; q < 4; ++q) {
                double dx = lf.qx[q] - laser.pos.x, dy = lf.qy[q] - laser.pos.y;
                double flux = gaussian_flux(dx * dx + dy * dy, p.P, p.rb,
                                            ctx.las.absorptivity);
                double gu = (q & 2) ? quad::g : -quad::g;
                double gv = (q & 1) ? quad::g : -quad::g;
                std::array<double, 4> N;
                detail::face_shape(gu, gv, N);
                for (int i = 0; i < 4; ++i) F[lf.n[i]] += N[i] * flux * wq;
            }
        }
    }

    const double rc = mat.rho * p.cp;
    for (std::size_t i = 0; i < n_nodes; ++i) {
        if (ep.node_active[i] && !ctx.is_dirichlet[i])
            T_out[i] = T[i] + ctx.cfg.dt * F[i] / (rc * ep.m_unit[i]);
        else if (ctx.is_dirichlet[i])
            T_out[i] = mat.T_amb;
        else
            T_out[i] = T[i];
    }
    if (step + 1 < static_cast<int>(ctx.newborn.size()))
        for (NodeId nb : ctx.newborn[step + 1]) T_out[nb] = mat.T_deposit;
    if (f_store)
        for (std::size_t i = 0; i < n_nodes; ++i) f_store[i] = F[i];
}

}  // namespace detail_sim

// One explicit Euler step over the step's active domain, with its
// hand-derived adjoint. Inputs: T^n, [cp,k,h,eps], [P,rb], optional per-step
// power override. Output: T^{n+1}.
class FemStepKernel : public ad::Kernel {
public:
    FemStepKernel(RunContextPtr ctx, int step)
        : ad::Kernel("fem_step@" + std::to_string(step)),
          ctx_(std::move(ctx)),
          step_(step) {}

    StepParams unpack(const std::vector<const ad::Vec*>& in) const {
        const ad::Vec& m = *in[1];
        const ad::Vec& l = *in[2];
        StepParams p{m[0], m[1], m[2], m[3], l[0], l[1]};
        if (in.size() > 3) p.P = (*in[3])[0];
        return p;
    }

    std::vector<ad::Vec> forward(const std::vector<const ad::Vec*>& in) const override {
        ad::Vec out(ctx_->mesh.n_nodes());
        detail_sim::step_apply(*ctx_, step_, in[0]->data(), unpack(in), out.data(), nullptr);
        return {std::move(out)};
    }

    void backward(const std::vector<const ad::Vec*>& in, const std::vector<ad::Vec>&,
                  const std::vector<ad::Vec>& out_adj,
                  std::vector<ad::Vec>& in_adj) const override {
        const RunContext& ctx = *ctx_;
        const std::size_t n_nodes = ctx.mesh.n_nodes();
        const Epoch& ep = ctx.epoch_at(step_);
        const StepLaser& laser = ctx.laser_at_step[step_];
        const StepParams p = unpack(in);
        const double* T = in[0]->data();
        const ad::Vec& lam = out_adj[0];

        // Recompute the net nodal power F (checkpoint-and-recompute).
        std::vector<double> scratch(n_nodes), F(n_nodes);
        detail_sim::step_apply(ctx, step_, T, p, scratch.data(), F.data());

        // Effective adjoints: lam_c = lam * dt/(rho cp m) on updated nodes,
        // zero on Dirichlet/newborn/inactive nodes.
        std::vector<std::uint8_t> overwritten(n_nodes, 0);
        if (step_ + 1 < static_cast<int>(ctx.newborn.size()))
            for (NodeId nb : ctx.newborn[step_ + 1]) overwritten[nb] = 1;
        const double rc = ctx.mat.rho * p.cp;
        std::vector<double> lam_c(n_nodes, 0.0);
        ad::Vec& dT = in_adj[0];
        double dcp = 0, dk = 0, dh = 0, deps = 0, dP = 0, drb = 0;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            if (ctx.is_dirichlet[i] || overwritten[i]) continue;
            dT[i] += lam[i];  // identity part of the update
            if (ep.node_active[i]) {
                lam_c[i] = lam[i] * ctx.cfg.dt / (rc * ep.m_unit[i]);
                dcp -= lam_c[i] * F[i] / p.cp;
            }
        }

        for (ElementId e : ep.elements) {
            const auto& conn = ctx.mesh.elements[e];
            double Te[8], Le[8];
            for (int i = 0; i < 8; ++i) {
                Te[i] = T[conn[i]];
                Le[i] = lam_c[conn[i]];
            }
            for (int i = 0; i < 8; ++i) {
                double kt = 0.0, klam = 0.0;
                for (int j = 0; j < 8; ++j) {
                    kt += ctx.Ke_unit[i][j] * Te[j];
                    klam += ctx.Ke_unit[i][j] * Le[j];  // Ke symmetric
                }
                dk -= Le[i] * kt;
                dT[conn[i]] -= p.k * klam;
            }
        }

        const double amb4 = std::pow(ctx.mat.T_amb, 4);
        const double sig = PhysicalConstants::sigma_sb;
        for (const ConvFace& cf : ep.conv_faces) {
            const auto& M2 = ctx.M2_axis[cf.axis];
            double Tf[4], Lf[4];
            for (int i = 0; i < 4; ++i) {
                Tf[i] = T[cf.n[i]];
                Lf[i] = lam_c[cf.n[i]];
            }
            for (int i = 0; i < 4; ++i) {
                double acc = 0.0, lacc = 0.0;
                for (int j = 0; j < 4; ++j) {
                    acc += M2[i][j] * (Tf[j] - ctx.mat.T_amb);
                    lacc += M2[i][j] * Lf[j];
                }
                dh -= Lf[i] * acc;
                dT[cf.n[i]] -= p.h * lacc;
            }
            double wq = ctx.wq_axis[cf.axis];
            for (int q = 0; q < 4; ++q) {
                double gu = (q & 2) ? quad::g : -quad::g;
                double gv = (q & 1) ? quad::g : -quad::g;
                std::array<double, 4> N;
                detail::face_shape(gu, gv, N);
                double Tq = 0.0, lq = 0.0;
                for (int i = 0; i < 4; ++i) {
                    Tq += N[i] * Tf[i];
                    lq += N[i] * Lf[i];
                }
                deps -= lq * sig * (Tq * Tq * Tq * Tq - amb4) * wq;
                double dflux = p.eps * sig * 4.0 * Tq * Tq * Tq * wq;
                for (int j = 0; j < 4; ++j) dT[cf.n[j]] -= lq * dflux * N[j];
            }
        }

        if (laser.on) {
            double wq = ctx.wq_axis[2];
            double rb2 = p.rb * p.rb;
            for (const LaserFace& lf : ep.laser_faces) {
                for (int q = 0; q < 4; ++q) {
                    double dx = lf.qx[q] - laser.pos.x, dy = lf.qy[q] - laser.pos.y;
                    double r2 = dx * dx + dy * dy;
                    double unit = gaussian_flux(r2, 1.0, p.rb, ctx.las.absorptivity);
                    double gu = (q & 2) ? quad::g : -quad::g;
                    double gv = (q & 1) ? quad::g : -quad::g;
                    std::array<double, 4> N;
                    detail::face_shape(gu, gv, N);
                    double lq = 0.0;
                    for (int i = 0; i < 4; ++i) lq += N[i] * lam_c[lf.n[i]];
                    dP += lq * unit * wq;
                    drb += lq * p.P * unit * (-2.0 / p.rb + 4.0 * r2 / (rb2 * p.rb)) * wq;
                }
            }
        }

        in_adj[1][0] += dcp;
        in_adj[1][1] += dk;
        in_adj[1][2] += dh;
        in_adj[1][3] += deps;
        in_adj[2][1] += drb;
        if (in.size() > 3)
            in_adj[3][0] += dP;
        else
            in_adj[2][0] += dP;
    }

private:
    RunContextPtr ctx_;
    int step_;
};

// Leaf record holding a constant vector (e.g. the initial temperature field).
class ConstKernel : public ad::Kernel {
public:
    ConstKernel(std::string name, ad::Vec value)
        : ad::Kernel(std::move(name)), value_(std::move(value)) {}
    std::vector<ad::Vec> forward(const std::vector<const ad::Vec*>&) const override {
        return {value_};
    }
    void backward(const std::vector<const ad::Vec*>&, const std::vector<ad::Vec>&,
                  const std::vector<ad::Vec>&, std::vector<ad::Vec>&) const override {}

private:
    ad::Vec value_;
};

inline RunContextPtr make_run_context(HexMesh mesh, Toolpath path, BirthSchedule schedule,
                                      MaterialParams mat, LaserParams las, SimConfig cfg) {
    mat.validate();
    las.validate();
    cfg.validate();
    require(schedule.birth_step.size() == mesh.n_elements(),
            "run_context: schedule does not match mesh");

    auto ctx = std::make_shared<RunContext>();
    ctx->mat = mat;
    ctx->las = las;
    ctx->cfg = cfg;

    // Reference-box element integrals (uniform structured grid).
    {
        Vec3 s = mesh.element_size;
        std::array<Vec3, 8> x;
        for (int c = 0; c < 8; ++c)
            x[c] = {kHexCorner[c][0] * s.x, kHexCorner[c][1] * s.y, kHexCorner[c][2] * s.z};
        auto Ke = element_conduction(x, 1.0);
        auto me = element_capacitance_lumped(x, 1.0, 1.0);
        for (int i = 0; i < 8; ++i) {
            ctx->me_unit[i] = me[i];
            for (int j = 0; j < 8; ++j) ctx->Ke_unit[i][j] = Ke[i][j];
        }
        const double area[3] = {s.y * s.z, s.x * s.z, s.x * s.y};
        for (int ax = 0; ax < 3; ++ax) {
            ctx->wq_axis[ax] = area[ax] / 4.0;
            // Consistent bilinear face mass, exact under 2x2 Gauss.
            for (int q = 0; q < 4; ++q) {
                double gu = (q & 2) ? quad::g : -quad::g;
                double gv = (q & 1) ? quad::g : -quad::g;
                std::array<double, 4> N;
                detail::face_shape(gu, gv, N);
                for (int i = 0; i < 4; ++i)
                    for (int j = 0; j < 4; ++j)
                        ctx->M2_axis[ax][i][j] += N[i] * N[j] * ctx->wq_axis[ax];
            }
        }
    }

    // Dirichlet nodes: substrate bottom plane (only when a substrate exists;
    // a pure build block has no prescribed-temperature boundary).
    bool has_substrate = false;
    for (ElementTag t : mesh.element_tag)
        if (t == ElementTag::Substrate) has_substrate = true;
    ctx->is_dirichlet.assign(mesh.n_nodes(), 0);
    if (has_substrate)
        for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
            if (std::abs(mesh.nodes[n].z - mesh.kmin * mesh.element_size.z) <
                0.5 * mesh.element_size.z)
                ctx->is_dirichlet[n] = 1;
    for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
        if (ctx->is_dirichlet[n]) ctx->dirichlet_nodes.push_back(static_cast<NodeId>(n));

    // Cell lattice -> element lookup for O(1) neighbor tests.
    const int kspan = mesh.kmax - mesh.kmin + 1;
    std::vector<ElementId> cell_elem(
        static_cast<std::size_t>(mesh.nx) * mesh.ny * kspan, -1);
    auto cell_index = [&](int i, int j, int k) {
        return (static_cast<std::size_t>(k - mesh.kmin) * mesh.ny + j) * mesh.nx + i;
    };
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        cell_elem[cell_index(mesh.elem_coord[e][0], mesh.elem_coord[e][1],
                             mesh.elem_coord[e][2])] = static_cast<ElementId>(e);
    auto neighbor = [&](ElementId e, int face) -> ElementId {
        static constexpr int dirs[6][3] = {{-1, 0, 0}, {1, 0, 0},  {0, -1, 0},
                                           {0, 1, 0},  {0, 0, -1}, {0, 0, 1}};
        int i = mesh.elem_coord[e][0] + dirs[face][0];
        int j = mesh.elem_coord[e][1] + dirs[face][1];
        int k = mesh.elem_coord[e][2] + dirs[face][2];
        if (i < 0 || i >= mesh.nx || j < 0 || j >= mesh.ny || k < mesh.kmin ||
            k > mesh.kmax)
            return -1;
        return cell_elem[cell_index(i, j, k)];
    };

    // Epoch boundaries: distinct birth steps within [0, n_steps].
    std::set<int> starts{0};
    for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
        int b = schedule.birth_step[e];
        require(b >= 0, "run_context: negative birth step");
        if (b <= cfg.n_steps) starts.insert(b);
    }
    std::vector<std::uint8_t> active(mesh.n_elements(), 0);
    std::vector<std::uint8_t> node_seen(mesh.n_nodes(), 0);
    ctx->newborn.assign(cfg.n_steps + 1, {});
    for (int start : starts) {
        Epoch ep;
        ep.first_step = start;
        for (std::size_t e = 0; e < mesh.n_elements(); ++e)
            if (schedule.birth_step[e] <= start) active[e] = 1;
        ep.node_active.assign(mesh.n_nodes(), 0);
        ep.m_unit.assign(mesh.n_nodes(), 0.0);
        ep.krow_unit.assign(mesh.n_nodes(), 0.0);
        int top_k = mesh.kmin - 1;
        for (std::size_t e = 0; e < mesh.n_elements(); ++e) {
            if (!active[e]) continue;
            ep.elements.push_back(static_cast<ElementId>(e));
            top_k = std::max(top_k, mesh.elem_coord[e][2]);
            const auto& conn = mesh.elements[e];
            for (int i = 0; i < 8; ++i) {
                ep.node_active[conn[i]] = 1;
                ep.m_unit[conn[i]] += ctx->me_unit[i];
                for (int j = 0; j < 8; ++j)
                    ep.krow_unit[conn[i]] += std::abs(ctx->Ke_unit[i][j]);
            }
            for (int f = 0; f < 6; ++f) {
                ElementId nb = neighbor(static_cast<ElementId>(e), f);
                bool interior = nb >= 0 && schedule.birth_step[nb] <= start;
                if (interior) continue;
                bool bottom = has_substrate && f == 4 &&
                              mesh.elem_coord[e][2] == mesh.kmin;
                if (bottom) continue;  // Dirichlet face, no flux BCs
                FaceKey key{static_cast<ElementId>(e), f};
                auto ids = mesh.face_nodes(key);
                ConvFace cf{{ids[0], ids[1], ids[2], ids[3]}, f / 2};
                ep.conv_faces.push_back(cf);
                if (f == 5) {
                    LaserFace lf;
                    lf.n = cf.n;
                    auto x = face_corners(mesh, key);
                    auto qps = detail::face_quadrature(x);
                    for (int q = 0; q < 4; ++q) {
                        lf.qx[q] = qps[q].pos.x;
                        lf.qy[q] = qps[q].pos.y;
                    }
                    ep.laser_faces.push_back(lf);
                }
            }
        }
        // Newborn nodes: first appearance across epochs.
        if (start > 0)
            for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
                if (ep.node_active[n] && !node_seen[n])
                    ctx->newborn[start].push_back(static_cast<NodeId>(n));
        for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
            if (ep.node_active[n]) node_seen[n] = 1;
        // Observed top layer: nodes of active elements in the topmost layer.
        for (ElementId e : ep.elements)
            if (mesh.elem_coord[e][2] == top_k)
                for (NodeId n : mesh.elements[e])
                    if (std::find(ep.observed_top_nodes.begin(),
                                  ep.observed_top_nodes.end(),
                                  n) == ep.observed_top_nodes.end())
                        ep.observed_top_nodes.push_back(n);
        std::sort(ep.observed_top_nodes.begin(), ep.observed_top_nodes.end());
        ctx->epochs.push_back(std::move(ep));
    }

    ctx->epoch_of_step.assign(cfg.n_steps + 1, 0);
    {
        std::size_t ei = 0;
        for (int s = 0; s <= cfg.n_steps; ++s) {
            while (ei + 1 < ctx->epochs.size() && ctx->epochs[ei + 1].first_step <= s) ++ei;
            ctx->epoch_of_step[s] = static_cast<int>(ei);
        }
    }

    ctx->laser_at_step.resize(cfg.n_steps);
    for (int s = 0; s < cfg.n_steps; ++s) {
        if (path.segments.empty()) {
            ctx->laser_at_step[s] = {{0, 0, 0}, false};
            continue;
        }
        double t = std::min(s * cfg.dt, path.end_time());
        auto [pos, on] = laser_state_at(path, t);
        ctx->laser_at_step[s] = {pos, on && s * cfg.dt <= path.end_time()};
    }

    // Stability bound over every epoch's assembled operators.
    double dt_max = std::numeric_limits<double>::infinity();
    for (const Epoch& ep : ctx->epochs)
        for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
            if (ep.node_active[n] && ep.krow_unit[n] > 0)
                dt_max = std::min(dt_max, mat.rho * mat.cp * ep.m_unit[n] /
                                              (mat.k * ep.krow_unit[n]));
    ctx->dt_max = dt_max;
    if (cfg.dt > dt_max && !cfg.allow_unstable)
        throw SimulationError("run_context: dt " + std::to_string(cfg.dt) +
                              " exceeds stability limit " + std::to_string(dt_max) +
                              " (use allow_unstable to override)");
    ctx->near_stability_limit = cfg.dt > 0.9 * dt_max;

    // Initial field: active nodes at ambient, unborn nodes held at T_deposit.
    ctx->initial_T.assign(mesh.n_nodes(), mat.T_deposit);
    for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
        if (ctx->epochs[0].node_active[n]) ctx->initial_T[n] = mat.T_amb;

    ctx->mesh = std::move(mesh);
    ctx->path = std::move(path);
    ctx->schedule = std::move(schedule);
    return ctx;
}

}  // namespace sim

struct ForwardRefs {
    ad::ValueRef mat;  // [cp, k, h_conv, emissivity]
    ad::ValueRef las;  // [power, beam_radius]
    // Optional per-step laser power source (e.g. an MLP record); called only
    // at laser-on steps with normalized time t/t_end.
    std::function<ad::ValueRef(ad::Tape&, int step, double t_norm)> power_at;
};

struct ThermalHistory {
    int n_steps = 0;
    double dt = 0.0;
    int record_t0 = -1;
    std::vector<int> state_records;  // index s-1 holds the record of T^s
    std::vector<int> recorded_steps; // strided user-facing step list

    ad::ValueRef state_ref(int s) const {
        if (s == 0) return ad::ValueRef::output(record_t0, 0);
        return ad::ValueRef::output(state_records.at(s - 1), 0);
    }
    const ad::Vec& state(const ad::Tape& tape, int s) const {
        return tape.value(state_ref(s));
    }
};

inline ThermalHistory run_forward(ad::Tape& tape, const sim::RunContextPtr& ctx,
                                  const ForwardRefs& refs) {
    const SimConfig& cfg = ctx->cfg;
    ThermalHistory hist;
    hist.n_steps = cfg.n_steps;
    hist.dt = cfg.dt;
    hist.record_t0 = tape.record_step(
        std::make_shared<sim::ConstKernel>("initial_state", ctx->initial_T), {});
    hist.recorded_steps.push_back(0);
    const double t_end = cfg.n_steps * cfg.dt;
    for (int s = 0; s < cfg.n_steps; ++s) {
        std::vector<ad::ValueRef> inputs{hist.state_ref(s), refs.mat, refs.las};
        if (refs.power_at && ctx->laser_at_step[s].on)
            inputs.push_back(refs.power_at(tape, s, s * cfg.dt / t_end));
        int rec = tape.record_step(std::make_shared<sim::FemStepKernel>(ctx, s),
                                   std::move(inputs));
        hist.state_records.push_back(rec);
        if ((s + 1) % cfg.record_stride == 0 || s + 1 == cfg.n_steps)
            hist.recorded_steps.push_back(s + 1);
    }
    return hist;
}

// History CSV for a node watch list: step,time,node_id,T.
inline std::string history_csv(const ad::Tape& tape, const ThermalHistory& hist,
                               const std::vector<NodeId>& watch) {
    std::string out = "step,time,node_id,T\n";
    char buf[128];
    for (int s : hist.recorded_steps) {
        const ad::Vec& T = hist.state(tape, s);
        for (NodeId n : watch) {
            std::snprintf(buf, sizeof(buf), "%d,%.17g,%d,%.17g\n", s, s * hist.dt, n,
                          T[n]);
            out += buf;
        }
    }
    return out;
}

// Little-endian binary dump: u64 n_records, u64 n_nodes, f64 dt, then the
// recorded step indices as u64, then step-major f64 temperatures.
inline void history_binary_dump(const ad::Tape& tape, const ThermalHistory& hist,
                                const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw SimulationError("history_binary_dump: cannot open " + path);
    std::uint64_t n_rec = hist.recorded_steps.size();
    std::uint64_t n_nodes = hist.state(tape, 0).size();
    std::fwrite(&n_rec, sizeof(n_rec), 1, f);
    std::fwrite(&n_nodes, sizeof(n_nodes), 1, f);
    std::fwrite(&hist.dt, sizeof(double), 1, f);
    for (int s : hist.recorded_steps) {
        std::uint64_t v = s;
        std::fwrite(&v, sizeof(v), 1, f);
    }
    for (int s : hist.recorded_steps) {
        const ad::Vec& T = hist.state(tape, s);
        std::fwrite(T.data(), sizeof(double), T.size(), f);
    }
    std::fclose(f);
}

}  // namespace thermoforge
