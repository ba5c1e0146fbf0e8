#pragma once

#include "mfo/sim.hpp"

namespace mfo {
namespace systems {

/// Harmonic oscillator with a Lipschitz output nonlinearity:
///   x1' = x2 + (1/6) sin y + u^2,  x2' = -x1 - u,  y = x1.
inline SampledPlantSpec lti_oscillator_plant() {
    SampledPlantSpec sp;
    sp.n = 2;
    sp.m = 1;
    sp.p = 0;
    Matrix A(2, 2);
    A << 0, 1, -1, 0;
    sp.A = MatrixSignal::constant(A);
    sp.C = RowVector(2);
    sp.C << 1, 0;
    sp.E = Matrix::Zero(2, 0);
    const double eps = 1.0 / 6.0;
    sp.phi = [eps](double y, const Vector& u, double) {
        Vector f(2);
        f << eps * std::sin(y) + u(0) * u(0), -u(0);
        return f;
    };
    sp.L_phi = eps;
    sp.T_bar = 0.22;
    sp.T_under = 0.22;
    return sp;
}

inline Scenario lti_oscillator_scenario() {
    Scenario sc;
    sc.name = "lti-oscillator";
    sc.plant = lti_oscillator_plant();
    sc.x0 = Vector(2);
    sc.x0 << 1, 1;
    sc.u = [](double t) { return Vector::Constant(1, 0.5 * std::sin(0.5 * t)).eval(); };
    sc.d = [](double, const Vector&) { return Vector::Zero(0).eval(); };
    sc.T_s = 1e-3;
    sc.t_end = 30.0;
    sc.sample_spacing = 0.22;
    sc.kernel_n = 2;
    sc.kernel_T = 2.0;
    sc.kernel_extra = 2;
    sc.optimize = true;  // the plain kernel misses the criterion at T_bar = 0.22
    sc.coeff_grid = GridSpec{0.0, 2.0, 0.05};
    sc.gain_tgrid_step = 0.25;
    sc.opt_tgrid_step = 0.25;
    sc.opt_sigma_step = 2e-3;
    return sc;
}

/// Pendulum with time-varying friction k(t) = (1 + sin t)/10:
///   x1' = x2,  x2' = -k(t) x2 - (g/L) sin(x1) + u/(M L^2) + d,  y = c x1,
/// with M = L = 1, g = 9.81, c = 2. The gravity term is folded into the
/// output nonlinearity via sin(x1) = sin(y/c).
inline SampledPlantSpec tv_pendulum_plant() {
    SampledPlantSpec sp;
    sp.n = 2;
    sp.m = 1;
    sp.p = 1;
    // exact derivatives: k^(j)(t) = sin(t + j pi/2)/10 for j >= 1
    sp.A = MatrixSignal(
        2, 2,
        [](double t, int order) {
            Matrix A = Matrix::Zero(2, 2);
            if (order == 0) {
                A(0, 1) = 1.0;
                A(1, 1) = -(1.0 + std::sin(t)) / 10.0;
            } else {
                A(1, 1) = -std::sin(t + order * M_PI / 2.0) / 10.0;
            }
            return A;
        },
        1000);
    sp.C = RowVector(2);
    sp.C << 2, 0;
    sp.E = Matrix(2, 1);
    sp.E << 0, 1;
    const double g = 9.81, c = 2.0;
    sp.phi = [g, c](double y, const Vector& u, double) {
        Vector f(2);
        f << 0.0, -g * std::sin(y / c) + u(0);
        return f;
    };
    sp.L_phi = g / c;  // sup_y |d/dy (g sin(y/c))| times C row scaling
    sp.T_bar = 0.02;
    sp.T_under = 0.02;
    return sp;
}

/// H scales the load disturbance d = H cos(x1).
inline Scenario tv_pendulum_scenario(double H = 0.0) {
    Scenario sc;
    sc.name = "tv-pendulum";
    sc.plant = tv_pendulum_plant();
    sc.x0 = Vector(2);
    sc.x0 << 28.02, 0.0;  // several revolutions out; cold start transient
    sc.u = [](double) { return Vector::Zero(1).eval(); };
    sc.xhat_zero_during_fill = true;
    sc.reset_during_fill = false;
    sc.yhat0 = 0.0;
    sc.d = [H](double, const Vector& x) { return Vector::Constant(1, H * std::cos(x(0))).eval(); };
    sc.T_s = 1e-3;
    sc.t_end = 20.0;
    sc.sample_spacing = 0.02;
    sc.kernel_n = 2;
    sc.kernel_T = 1.0;
    sc.coeff_grid = GridSpec{0.0, 2.0 * M_PI, 0.02};
    sc.gain_tgrid_step = 0.05;
    return sc;
}

}  // namespace systems
}  // namespace mfo
