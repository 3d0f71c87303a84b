#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "thermoforge/fem.hpp"

using namespace thermoforge;

namespace {

std::array<Vec3, 8> box_corners(double ax, double ay, double az) {
    std::array<Vec3, 8> x;
    for (int c = 0; c < 8; ++c)
        x[c] = {kHexCorner[c][0] * ax, kHexCorner[c][1] * ay, kHexCorner[c][2] * az};
    return x;
}

// Independent high-order integration of the unit-cube stiffness entry
// K_ij = k * int grad(Ni) . grad(Nj) dV, with trilinear shapes written from
// scratch (tensor products of 1-x / x), 8-point Gauss-Legendre per axis.
double oracle_unit_cube_stiffness(int i, int j) {
    static const double gp[8] = {-0.9602898564975363, -0.7966664774136267,
                                 -0.5255324099163290, -0.1834346424956498,
                                 0.1834346424956498,  0.5255324099163290,
                                 0.7966664774136267,  0.9602898564975363};
    static const double gw[8] = {0.1012285362903763, 0.2223810344533745,
                                 0.3137066458778873, 0.3626837833783620,
                                 0.3626837833783620, 0.3137066458778873,
                                 0.2223810344533745, 0.1012285362903763};
    auto lin = [](int bit, double t) { return bit ? t : 1.0 - t; };
    auto dlin = [](int bit) { return bit ? 1.0 : -1.0; };
    double acc = 0.0;
    const int* ci = kHexCorner[i];
    const int* cj = kHexCorner[j];
    for (int a = 0; a < 8; ++a)
        for (int b = 0; b < 8; ++b)
            for (int c = 0; c < 8; ++c) {
                double x = 0.5 * (gp[a] + 1.0), y = 0.5 * (gp[b] + 1.0),
                       z = 0.5 * (gp[c] + 1.0);
                double w = 0.125 * gw[a] * gw[b] * gw[c];
                double gi[3] = {dlin(ci[0]) * lin(ci[1], y) * lin(ci[2], z),
                                lin(ci[0], x) * dlin(ci[1]) * lin(ci[2], z),
                                lin(ci[0], x) * lin(ci[1], y) * dlin(ci[2])};
                double gj[3] = {dlin(cj[0]) * lin(cj[1], y) * lin(cj[2], z),
                                lin(cj[0], x) * dlin(cj[1]) * lin(cj[2], z),
                                lin(cj[0], x) * lin(cj[1], y) * dlin(cj[2])};
                acc += w * (gi[0] * gj[0] + gi[1] * gj[1] + gi[2] * gj[2]);
            }
    return acc;
}

}  // namespace

TEST_CASE("shape functions: interpolation and partition of unity") {
    std::array<double, 8> N;
    std::array<std::array<double, 3>, 8> dN;
    shape_eval({0, 0, 0}, N, dN);
    for (int c = 0; c < 8; ++c) REQUIRE(N[c] == Catch::Approx(0.125).margin(1e-15));
    for (int d = 0; d < 3; ++d) {
        double s = 0.0;
        for (int c = 0; c < 8; ++c) s += dN[c][d];
        REQUIRE(std::abs(s) < 1e-15);
    }
    shape_eval({-1, -1, -1}, N, dN);
    REQUIRE(N[0] == 1.0);
    for (int c = 1; c < 8; ++c) REQUIRE(N[c] == 0.0);
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 50; ++t) {
        shape_eval({u(rng), u(rng), u(rng)}, N, dN);
        double s = 0.0;
        for (int c = 0; c < 8; ++c) s += N[c];
        REQUIRE(s == Catch::Approx(1.0).margin(1e-15));
    }
}

TEST_CASE("lumped capacitance entries and totals") {
    auto unit = element_capacitance_lumped(box_corners(1, 1, 1), 1.0, 1.0);
    double sum = 0.0;
    for (double m : unit) {
        REQUIRE(m == Catch::Approx(0.125).margin(1e-14));
        sum += m;
    }
    REQUIRE(sum == Catch::Approx(1.0).margin(1e-14));

    auto mm = element_capacitance_lumped(box_corners(1e-3, 1e-3, 1e-3), 8000.0, 500.0);
    double total = 0.0;
    for (double m : mm) {
        REQUIRE(m == Catch::Approx(5e-4).epsilon(1e-12));
        total += m;
    }
    REQUIRE(total == Catch::Approx(4e-3).epsilon(1e-12));

    auto stretched = element_capacitance_lumped(box_corners(2, 1, 1), 3.0, 7.0);
    double tot = 0.0;
    for (double m : stretched) {
        REQUIRE(m == Catch::Approx(stretched[0]).epsilon(1e-13));
        tot += m;
    }
    REQUIRE(tot == Catch::Approx(2.0 * 3.0 * 7.0).epsilon(1e-12));
}

TEST_CASE("conduction matrix: symmetry, nullspace, linearity, oracle") {
    auto K = element_conduction(box_corners(1, 1, 1), 1.0);
    for (int i = 0; i < 8; ++i) {
        double row = 0.0;
        for (int j = 0; j < 8; ++j) {
            row += K[i][j];
            REQUIRE(K[i][j] == Catch::Approx(K[j][i]).margin(1e-15));
        }
        REQUIRE(std::abs(row) < 1e-12);  // constant-field nullspace
    }
    // Independent 8-point-Gauss integration oracle, every entry.
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
            REQUIRE(K[i][j] ==
                    Catch::Approx(oracle_unit_cube_stiffness(i, j)).margin(1e-13));
    auto K2 = element_conduction(box_corners(1, 1, 1), 2.0);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) REQUIRE(K2[i][j] == 2.0 * K[i][j]);
    REQUIRE_THROWS_AS(element_conduction(box_corners(1, 1, 1), 0.0),
                      std::invalid_argument);
}

TEST_CASE("degenerate element geometry raises") {
    auto flat = box_corners(1, 1, 0);
    for (auto& p : flat) p.z = 0.0;
    REQUIRE_THROWS_AS(element_conduction(flat, 1.0), SimulationError);
}

TEST_CASE("laser flux vector: zero power, Gaussian tail, total power") {
    std::array<Vec3, 4> face = {Vec3{0, 0, 0}, {1e-3, 0, 0}, {1e-3, 1e-3, 0},
                                {0, 1e-3, 0}};
    auto zero = laser_flux_vector(face, {0.5e-3, 0.5e-3, 0}, 0.0, 1e-3, 1.0);
    for (double v : zero) REQUIRE(v == 0.0);

    auto far = laser_flux_vector(face, {50e-3, 0.5e-3, 0}, 500.0, 1e-3, 1.0);
    for (double v : far) {
        REQUIRE(v >= 0.0);
        REQUIRE(v < 1e-12);
    }
    // No hard cutoff: a moderately distant beam still deposits something.
    auto near = laser_flux_vector(face, {4e-3, 0.5e-3, 0}, 500.0, 1e-3, 1.0);
    double s = near[0] + near[1] + near[2] + near[3];
    REQUIRE(s > 0.0);

    // Tile a large plane around the beam: total nodal flux -> eta * P.
    const double P = 500.0, rb = 1e-3, eta = 0.85, a = 0.25e-3;
    const int n = 80;  // covers +-10 mm = +-10 r_b
    double total = 0.0;
    for (int i = -n; i < n; ++i)
        for (int j = -n; j < n; ++j) {
            std::array<Vec3, 4> cell = {Vec3{i * a, j * a, 0},
                                        {(i + 1) * a, j * a, 0},
                                        {(i + 1) * a, (j + 1) * a, 0},
                                        {i * a, (j + 1) * a, 0}};
            auto R = laser_flux_vector(cell, {0, 0, 0}, P, rb, eta);
            total += R[0] + R[1] + R[2] + R[3];
        }
    REQUIRE(total == Catch::Approx(eta * P).epsilon(0.005));
}

TEST_CASE("convection vector: equilibrium, constants, h=0") {
    std::array<Vec3, 4> face = {Vec3{0, 0, 0}, {2e-3, 0, 0}, {2e-3, 1e-3, 0},
                                {0, 1e-3, 0}};
    double A = 2e-6;
    auto eq = convection_vector(face, {300, 300, 300, 300}, 20.0, 300.0);
    for (double v : eq) REQUIRE(v == Catch::Approx(0.0).margin(1e-18));
    auto hot = convection_vector(face, {400, 400, 400, 400}, 20.0, 300.0);
    REQUIRE(hot[0] + hot[1] + hot[2] + hot[3] ==
            Catch::Approx(20.0 * A * 100.0).epsilon(1e-12));
    auto off = convection_vector(face, {400, 500, 600, 700}, 0.0, 300.0);
    for (double v : off) REQUIRE(v == 0.0);
}

TEST_CASE("radiation vector: equilibrium, constants, eps=0, domain error") {
    std::array<Vec3, 4> face = {Vec3{0, 0, 0}, {1e-3, 0, 0}, {1e-3, 1e-3, 0},
                                {0, 1e-3, 0}};
    double A = 1e-6;
    auto eq = radiation_vector(face, {300, 300, 300, 300}, 0.7, 300.0);
    for (double v : eq) REQUIRE(v == Catch::Approx(0.0).margin(1e-18));
    double T = 800.0, Ta = 300.0;
    auto hot = radiation_vector(face, {T, T, T, T}, 0.7, Ta);
    double expect = 0.7 * PhysicalConstants::sigma_sb * A *
                    (T * T * T * T - Ta * Ta * Ta * Ta);
    REQUIRE(hot[0] + hot[1] + hot[2] + hot[3] == Catch::Approx(expect).epsilon(1e-12));
    auto off = radiation_vector(face, {500, 600, 700, 800}, 0.0, 300.0);
    for (double v : off) REQUIRE(v == 0.0);
    REQUIRE_THROWS_AS(radiation_vector(face, {-1, 300, 300, 300}, 0.7, 300.0),
                      SimulationError);
}

TEST_CASE("stability limit scalings and eigenvalue oracle") {
    auto mesh = build_block_mesh(2, 2, 2, {1e-3, 1e-3, 1e-3});
    std::vector<ElementId> all;
    for (std::size_t e = 0; e < mesh.n_elements(); ++e)
        all.push_back(static_cast<ElementId>(e));
    MaterialParams mat;
    double dt0 = stability_limit(mesh, mat, all);
    MaterialParams mat2k = mat;
    mat2k.k *= 2.0;
    REQUIRE(stability_limit(mesh, mat2k, all) == Catch::Approx(dt0 / 2).epsilon(1e-14));
    MaterialParams mat2c = mat;
    mat2c.cp *= 2.0;
    REQUIRE(stability_limit(mesh, mat2c, all) == Catch::Approx(2 * dt0).epsilon(1e-14));
    MaterialParams mat2r = mat;
    mat2r.rho *= 2.0;
    REQUIRE(stability_limit(mesh, mat2r, all) == Catch::Approx(2 * dt0).epsilon(1e-14));

    // Dense eigenvalue oracle: lambda_max of M^-1 K by power iteration on the
    // deflated space (constants removed); explicit Euler is stable iff
    // dt * lambda_max <= 2, and the Gershgorin bound must satisfy it.
    std::size_t n = mesh.n_nodes();
    std::vector<double> M(n, 0.0);
    std::vector<std::vector<double>> K(n, std::vector<double>(n, 0.0));
    for (ElementId e : all) {
        auto x = element_corners(mesh, e);
        auto me = element_capacitance_lumped(x, mat.rho, mat.cp);
        auto Ke = element_conduction(x, mat.k);
        for (int i = 0; i < 8; ++i) {
            NodeId ni = mesh.elements[e][i];
            M[ni] += me[i];
            for (int j = 0; j < 8; ++j) K[ni][mesh.elements[e][j]] += Ke[i][j];
        }
    }
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    double lambda = 0.0;
    for (int it = 0; it < 2000; ++it) {
        // w = M^-1 K v
        std::vector<double> w(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += K[i][j] * v[j];
            w[i] = acc / M[i];
        }
        double norm = 0.0;
        for (double x : w) norm += x * x;
        norm = std::sqrt(norm);
        REQUIRE(norm > 0.0);
        lambda = norm;
        for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / norm;
    }
    REQUIRE(dt0 * lambda <= 2.0 + 1e-9);
    // The bound is not wildly conservative either (within ~4x here).
    REQUIRE(dt0 * lambda > 0.5);
    REQUIRE_THROWS_AS(stability_limit(mesh, mat, {}), std::invalid_argument);
}

TEST_CASE("parameter validation") {
    MaterialParams m;
    m.cp = -1;
    REQUIRE_THROWS_AS(m.validate(), std::invalid_argument);
    LaserParams l;
    l.beam_radius = 0;
    REQUIRE_THROWS_AS(l.validate(), std::invalid_argument);
    SimConfig s;
    s.dt = -1;
    REQUIRE_THROWS_AS(s.validate(), std::invalid_argument);
}
