#pragma once

#include "mfo/kernel.hpp"
#include "mfo/modop.hpp"

#include <deque>

namespace mfo {

struct Estimate {
    Vector z_hat;
    Vector x_hat;
    bool filling = false;  // horizon not yet filled; pad policy engaged
};

/// Moving-horizon algebraic observer:
///   z_hat = -<L* phi, y~> + <B* phi, u>,  x_hat = P(t) z_hat.
///
/// Realized as an FIR structure: ring buffers of measurement/input samples
/// over [t-T, t] paired with coefficient samples a(tau), B_o(tau) cached at
/// push time, combined through the precomputed kernel derivative tables.
class AlgebraicObserver {
  public:
    AlgebraicObserver() = default;

    AlgebraicObserver(OcfData ocf, UmfKernel kernel, double h,
                      FillPolicy policy = FillPolicy::PadWithFirst,
                      Quadrature quad = Quadrature::Trapezoid)
        : ocf_(std::move(ocf)),
          kernel_(std::move(kernel)),
          quad_(quad),
          ybuf_(1, kernel_.horizon(), h, policy),
          ubuf_(ocf_.m, kernel_.horizon(), h, policy) {
        const int n = kernel_.order();
        if (n != ocf_.n) throw Error("kernel order does not match plant dimension");
        phi_tab_.assign(n + 1, Matrix(n, ybuf_.capacity()));
        for (int d = 0; d <= n; ++d)
            for (int j = 0; j < ybuf_.capacity(); ++j)
                phi_tab_[d].col(j) = kernel_.eval_vec(j * h, d);
    }

    const OcfData& ocf() const { return ocf_; }
    const UmfKernel& kernel() const { return kernel_; }
    double step() const { return ybuf_.step(); }
    bool filling() const { return !ybuf_.full(); }
    double latest_time() const { return ybuf_.latest_time(); }

    void push(double t, double y, const Vector& u) {
        ybuf_.push(t, Vector::Constant(1, y));
        ubuf_.push(t, u);
        acoef_.push_back(ocf_.a.eval(t));
        bcoef_.push_back(ocf_.B_o.eval(t));
        if (static_cast<int>(acoef_.size()) > ybuf_.capacity()) {
            acoef_.pop_front();
            bcoef_.pop_front();
        }
    }

    Estimate estimate(double t) const {
        if (ybuf_.empty()) throw Error("horizon not initialized");
        if (std::abs(t - ybuf_.latest_time()) > 1e-9 ||
            std::abs(ybuf_.latest_time() - ubuf_.latest_time()) > 1e-9)
            throw Error("horizon misalignment at t=" + std::to_string(t));

        const int n = kernel_.order();
        const int cap = ybuf_.capacity();
        const int missing = cap - ybuf_.size();
        Vector z = Vector::Zero(n);
        for (int j = 0; j < cap; ++j) {
            // padded slots reuse the oldest coefficient sample (constant
            // initial function before t0)
            const int ci = std::max(0, j - missing);
            const Vector& av = acoef_[static_cast<std::size_t>(ci)];
            const Matrix& Bv = bcoef_[static_cast<std::size_t>(ci)];

            const double w = ybuf_.weight(j, quad_);
            const double y = ybuf_.at_slot(j)(0);
            const Vector& u = ubuf_.at_slot(j);

            // -w*y*(L* phi) + w*(B* phi)*u, accumulated per derivative order
            z += (-w * y * neg1pow(n)) * phi_tab_[n].col(j);
            for (int k = 0; k < n; ++k) {
                const double bu = Bv.row(n - 1 - k).dot(u);
                z += w * neg1pow(k) * (bu - y * av(n - 1 - k)) * phi_tab_[k].col(j);
            }
        }
        Estimate est;
        est.z_hat = z;
        est.x_hat = ocf_.P.eval(t) * z;
        est.filling = filling();
        if (!est.x_hat.allFinite()) throw Error("estimate divergence at t=" + std::to_string(t));
        return est;
    }

  private:
    OcfData ocf_;
    UmfKernel kernel_;
    Quadrature quad_ = Quadrature::Trapezoid;
    HorizonBuffer ybuf_;
    HorizonBuffer ubuf_;
    std::deque<Vector> acoef_;
    std::deque<Matrix> bcoef_;
    std::vector<Matrix> phi_tab_;  // derivative order -> n x capacity
};

struct L2ErrorBound {
    double d_bar = 0.0;
    double nu_bar = 0.0;
    double bound = 0.0;    // on e_z
    double bound_x = 0.0;  // on e_x = P e_z
};

/// ||e_z|| <= ||E* phi||_L2[0,T] d_bar + ||L* phi||_L2[0,T] nu_bar, using the
/// global sups of the L2 gain curves; the x bound carries the factor ||P||.
inline L2ErrorBound error_bound(const AdjointGainTable& gains, double d_bar, double nu_bar,
                                double P_sup = 1.0) {
    L2ErrorBound b;
    b.d_bar = d_bar;
    b.nu_bar = nu_bar;
    b.bound = gains.l2_bar_d * d_bar + gains.l2_bar_a * nu_bar;
    b.bound_x = P_sup * b.bound;
    return b;
}

/// Same bound at a query time, using the gain curves at the nearest t-grid
/// point instead of the global sups.
inline L2ErrorBound error_bound_at(const AdjointGainTable& gains, double d_bar, double nu_bar,
                                   double t, double P_sup = 1.0) {
    if (gains.t_grid.empty()) throw Error("gain table empty");
    std::size_t best = 0;
    for (std::size_t i = 1; i < gains.t_grid.size(); ++i)
        if (std::abs(gains.t_grid[i] - t) < std::abs(gains.t_grid[best] - t)) best = i;
    L2ErrorBound b;
    b.d_bar = d_bar;
    b.nu_bar = nu_bar;
    b.bound = gains.l2_d[best] * d_bar + gains.l2_a[best] * nu_bar;
    b.bound_x = P_sup * b.bound;
    return b;
}

/// Differential parameterization of the companion-form state from derivative
/// stacks Y = [y,...,y^(n-1)], U_j, D_l via the Toeplitz boundary matrices:
///   z = Delta(t) Y - sum_j Gamma_B^j U_j - sum_l Gamma_E^l D_l.
inline Vector diff_param_oracle(const OcfData& ocf, double t, const Vector& Y,
                                const std::vector<Vector>& U, const std::vector<Vector>& D) {
    const int n = ocf.n;
    const Vector a = ocf.a.eval(t);
    const Matrix Bo = ocf.B_o.eval(t);
    const Matrix Eo = ocf.E_o.eval(t);

    Matrix delta = Matrix::Identity(n, n);
    for (int i = 1; i < n; ++i)
        for (int j = 0; j < i; ++j) delta(i, j) = a(i - j - 1);

    Vector z = delta * Y;
    auto gamma_apply = [n](const Matrix& coef, int col, const Vector& stack) {
        Vector r = Vector::Zero(n);
        for (int i = 1; i < n; ++i)
            for (int j = 0; j < i; ++j) r(i) += coef(i - j - 1, col) * stack(j);
        return r;
    };
    for (int j = 0; j < ocf.m; ++j) z -= gamma_apply(Bo, j, U[static_cast<std::size_t>(j)]);
    for (int l = 0; l < ocf.p; ++l) z -= gamma_apply(Eo, l, D[static_cast<std::size_t>(l)]);
    return z;
}

}  // namespace mfo
