#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "thermoforge/core.hpp"
#include "thermoforge/mesh.hpp"

namespace thermoforge {

struct MaterialParams {
    double rho = 7800.0;        // kg/m^3
    double cp = 500.0;          // J/(kg K)
    double k = 16.0;            // W/(m K)
    double h_conv = 20.0;       // W/(m^2 K)
    double emissivity = 0.7;
    double T_amb = 300.0;       // K
    double T_melt = 1700.0;     // K
    double T_deposit = 300.0;   // K, initial temperature of newly born nodes
    double s_vol = 0.0;         // W/m^3 volumetric source

    void validate() const {
        require(rho > 0 && cp > 0 && k > 0, "material: rho, cp, k must be > 0");
        require(h_conv >= 0, "material: h_conv must be >= 0");
        require(emissivity >= 0 && emissivity <= 1, "material: emissivity in [0,1]");
        require(T_amb > 0 && T_melt > 0 && T_deposit > 0,
                "material: temperatures must be > 0 K");
    }
};

struct PhysicalConstants {
    static constexpr double sigma_sb = 5.670374419e-8;  // W/(m^2 K^4)
};

struct LaserParams {
    double power = 500.0;        // W
    double beam_radius = 1e-3;   // m
    double absorptivity = 1.0;

    void validate() const {
        require(power >= 0, "laser: power must be >= 0");
        require(beam_radius > 0, "laser: beam_radius must be > 0");
        require(absorptivity > 0 && absorptivity <= 1, "laser: absorptivity in (0,1]");
    }
};

struct SimConfig {
    double dt = 1e-3;
    int n_steps = 1;
    int record_stride = 1;
    bool deterministic = true;
    bool allow_unstable = false;

    void validate() const {
        require(dt > 0, "sim: dt must be > 0");
        require(n_steps >= 1, "sim: n_steps must be >= 1");
        require(record_stride >= 1, "sim: record_stride must be >= 1");
    }
};

namespace quad {
inline constexpr double g = 0.5773502691896257;  // 1/sqrt(3)
inline constexpr double pts[2] = {-g, g};
}  // namespace quad

// Trilinear shape functions on [-1,1]^3, corner ordering per kHexCorner.
inline void shape_eval(const std::array<double, 3>& xi, std::array<double, 8>& N,
                       std::array<std::array<double, 3>, 8>& dN) {
    for (int c = 0; c < 8; ++c) {
        double s[3];
        for (int d = 0; d < 3; ++d) s[d] = 2.0 * kHexCorner[c][d] - 1.0;
        double f[3];
        for (int d = 0; d < 3; ++d) f[d] = 0.5 * (1.0 + s[d] * xi[d]);
        N[c] = f[0] * f[1] * f[2];
        dN[c][0] = 0.5 * s[0] * f[1] * f[2];
        dN[c][1] = 0.5 * s[1] * f[0] * f[2];
        dN[c][2] = 0.5 * s[2] * f[0] * f[1];
    }
}

namespace detail {

struct JacobianEval {
    double det = 0.0;
    std::array<std::array<double, 3>, 8> dN_global;  // dN/dx per corner
};

inline JacobianEval element_jacobian(const std::array<Vec3, 8>& x,
                                     const std::array<double, 3>& xi) {
    std::array<double, 8> N;
    std::array<std::array<double, 3>, 8> dN;
    shape_eval(xi, N, dN);
    double J[3][3] = {};
    for (int c = 0; c < 8; ++c) {
        const double p[3] = {x[c].x, x[c].y, x[c].z};
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b) J[a][b] += dN[c][a] * p[b];
    }
    double det = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
                 J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
                 J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
    if (!(det > 0)) throw SimulationError("fem: degenerate element (non-positive Jacobian)");
    double inv[3][3];
    inv[0][0] = (J[1][1] * J[2][2] - J[1][2] * J[2][1]) / det;
    inv[0][1] = (J[0][2] * J[2][1] - J[0][1] * J[2][2]) / det;
    inv[0][2] = (J[0][1] * J[1][2] - J[0][2] * J[1][1]) / det;
    inv[1][0] = (J[1][2] * J[2][0] - J[1][0] * J[2][2]) / det;
    inv[1][1] = (J[0][0] * J[2][2] - J[0][2] * J[2][0]) / det;
    inv[1][2] = (J[0][2] * J[1][0] - J[0][0] * J[1][2]) / det;
    inv[2][0] = (J[1][0] * J[2][1] - J[1][1] * J[2][0]) / det;
    inv[2][1] = (J[0][1] * J[2][0] - J[0][0] * J[2][1]) / det;
    inv[2][2] = (J[0][0] * J[1][1] - J[0][1] * J[1][0]) / det;
    JacobianEval out;
    out.det = det;
    for (int c = 0; c < 8; ++c)
        for (int b = 0; b < 3; ++b) {
            double v = 0.0;
            for (int a = 0; a < 3; ++a) v += dN[c][a] * inv[a][b];
            out.dN_global[c][b] = v;
        }
    return out;
}

}  // namespace detail

// Consistent capacitance integrated by 2x2x2 Gauss, then row-sum lumped.
inline std::array<double, 8> element_capacitance_lumped(const std::array<Vec3, 8>& x,
                                                        double rho, double cp) {
    std::array<double, 8> lumped{};
    std::array<double, 8> N;
    std::array<std::array<double, 3>, 8> dN;
    for (double gx : quad::pts)
        for (double gy : quad::pts)
            for (double gz : quad::pts) {
                std::array<double, 3> xi{gx, gy, gz};
                auto jac = detail::element_jacobian(x, xi);
                shape_eval(xi, N, dN);
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j)
                        lumped[i] += rho * cp * N[i] * N[j] * jac.det;
            }
    return lumped;
}

inline std::array<std::array<double, 8>, 8> element_conduction(
    const std::array<Vec3, 8>& x, double k) {
    require(k > 0, "element_conduction: k must be > 0");
    std::array<std::array<double, 8>, 8> K{};
    for (double gx : quad::pts)
        for (double gy : quad::pts)
            for (double gz : quad::pts) {
                auto jac = detail::element_jacobian(x, {gx, gy, gz});
                for (int i = 0; i < 8; ++i)
                    for (int j = 0; j < 8; ++j) {
                        double dot = 0.0;
                        for (int d = 0; d < 3; ++d)
                            dot += jac.dN_global[i][d] * jac.dN_global[j][d];
                        K[i][j] += k * dot * jac.det;
                    }
            }
    return K;
}

namespace detail {

// Bilinear shape on a quadrilateral face, corners in cyclic order.
inline constexpr int kFaceSign[4][2] = {{-1, -1}, {1, -1}, {1, 1}, {-1, 1}};

inline void face_shape(double u, double v, std::array<double, 4>& N) {
    for (int c = 0; c < 4; ++c)
        N[c] = 0.25 * (1.0 + kFaceSign[c][0] * u) * (1.0 + kFaceSign[c][1] * v);
}

struct FaceQuadPoint {
    std::array<double, 4> N;
    Vec3 pos;
    double w;  // quadrature weight x surface Jacobian
};

inline std::array<FaceQuadPoint, 4> face_quadrature(const std::array<Vec3, 4>& x) {
    std::array<FaceQuadPoint, 4> qps;
    int q = 0;
    for (double gu : quad::pts)
        for (double gv : quad::pts) {
            auto& qp = qps[q++];
            face_shape(gu, gv, qp.N);
            qp.pos = {0, 0, 0};
            Vec3 du{0, 0, 0}, dv{0, 0, 0};
            for (int c = 0; c < 4; ++c) {
                double su = kFaceSign[c][0], sv = kFaceSign[c][1];
                double dNu = 0.25 * su * (1.0 + sv * gv);
                double dNv = 0.25 * sv * (1.0 + su * gu);
                qp.pos = qp.pos + x[c] * qp.N[c];
                du = du + x[c] * dNu;
                dv = dv + x[c] * dNv;
            }
            Vec3 cr{du.y * dv.z - du.z * dv.y, du.z * dv.x - du.x * dv.z,
                    du.x * dv.y - du.y * dv.x};
            qp.w = cr.norm();
            if (!(qp.w > 0)) throw SimulationError("fem: degenerate face");
        }
    return qps;
}

}  // namespace detail

// Gaussian beam: q_s(r) = 2 eta P / (pi r_b^2) exp(-2 r^2 / r_b^2), r the
// in-plane distance to the beam axis. No cutoff radius.
inline double gaussian_flux(double r2, double power, double beam_radius,
                            double absorptivity) {
    double rb2 = beam_radius * beam_radius;
    return 2.0 * absorptivity * power / (M_PI * rb2) * std::exp(-2.0 * r2 / rb2);
}

inline std::array<double, 4> laser_flux_vector(const std::array<Vec3, 4>& x,
                                               Vec3 laser_pos, double power,
                                               double beam_radius,
                                               double absorptivity) {
    require(beam_radius > 0, "laser_flux_vector: beam_radius must be > 0");
    std::array<double, 4> R{};
    for (const auto& qp : detail::face_quadrature(x)) {
        double dx = qp.pos.x - laser_pos.x, dy = qp.pos.y - laser_pos.y;
        double q = gaussian_flux(dx * dx + dy * dy, power, beam_radius, absorptivity);
        for (int i = 0; i < 4; ++i) R[i] += qp.N[i] * q * qp.w;
    }
    return R;
}

inline std::array<double, 4> convection_vector(const std::array<Vec3, 4>& x,
                                               const std::array<double, 4>& T,
                                               double h, double T_amb) {
    std::array<double, 4> R{};
    for (const auto& qp : detail::face_quadrature(x)) {
        double Tq = 0.0;
        for (int i = 0; i < 4; ++i) Tq += qp.N[i] * T[i];
        for (int i = 0; i < 4; ++i) R[i] += qp.N[i] * h * (Tq - T_amb) * qp.w;
    }
    return R;
}

inline std::array<double, 4> radiation_vector(const std::array<Vec3, 4>& x,
                                              const std::array<double, 4>& T,
                                              double emissivity, double T_amb) {
    for (double t : T)
        if (t < 0) throw SimulationError("radiation_vector: negative absolute temperature");
    std::array<double, 4> R{};
    double amb4 = T_amb * T_amb * T_amb * T_amb;
    for (const auto& qp : detail::face_quadrature(x)) {
        double Tq = 0.0;
        for (int i = 0; i < 4; ++i) Tq += qp.N[i] * T[i];
        double flux = emissivity * PhysicalConstants::sigma_sb * (Tq * Tq * Tq * Tq - amb4);
        for (int i = 0; i < 4; ++i) R[i] += qp.N[i] * flux * qp.w;
    }
    return R;
}

inline std::array<Vec3, 8> element_corners(const HexMesh& mesh, ElementId e) {
    std::array<Vec3, 8> x;
    for (int c = 0; c < 8; ++c) x[c] = mesh.nodes[mesh.elements[e][c]];
    return x;
}

inline std::array<Vec3, 4> face_corners(const HexMesh& mesh, const FaceKey& f) {
    auto ids = mesh.face_nodes(f);
    return {mesh.nodes[ids[0]], mesh.nodes[ids[1]], mesh.nodes[ids[2]], mesh.nodes[ids[3]]};
}

// Gershgorin-style explicit-Euler bound: min over active nodes of
// M_ii / sum_j |K_ij|. Convection/radiation terms are ignored; callers apply
// their own safety factor.
inline double stability_limit(const HexMesh& mesh, const MaterialParams& mat,
                              const std::vector<ElementId>& active) {
    require(!active.empty(), "stability_limit: empty active set");
    std::vector<double> m(mesh.n_nodes(), 0.0), krow(mesh.n_nodes(), 0.0);
    for (ElementId e : active) {
        auto x = element_corners(mesh, e);
        auto me = element_capacitance_lumped(x, mat.rho, mat.cp);
        auto Ke = element_conduction(x, mat.k);
        for (int i = 0; i < 8; ++i) {
            NodeId ni = mesh.elements[e][i];
            m[ni] += me[i];
            for (int j = 0; j < 8; ++j) krow[ni] += std::abs(Ke[i][j]);
        }
    }
    double dt_max = std::numeric_limits<double>::infinity();
    for (std::size_t n = 0; n < mesh.n_nodes(); ++n)
        if (krow[n] > 0) dt_max = std::min(dt_max, m[n] / krow[n]);
    return dt_max;
}

}  // namespace thermoforge
