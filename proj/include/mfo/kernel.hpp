#pragma once

#include "mfo/ocf.hpp"

#include <algorithm>
#include <ostream>
#include <random>
#include <vector>

namespace mfo {

/// Spectral norm specialized for the small matrices appearing in the
/// adjoint-kernel tables (closed form up to 2x2 Gram matrices).
inline double small_spectral_norm(const Matrix& m) {
    const int r = static_cast<int>(m.rows());
    const int c = static_cast<int>(m.cols());
    if (r == 1 || c == 1) return m.norm();
    if (std::min(r, c) == 2) {
        const Matrix g = (r <= c) ? Matrix(m * m.transpose()) : Matrix(m.transpose() * m);
        const double tr = g(0, 0) + g(1, 1);
        const double det = g(0, 0) * g(1, 1) - g(0, 1) * g(1, 0);
        const double disc = std::max(0.0, tr * tr - 4.0 * det);
        return std::sqrt(0.5 * (tr + std::sqrt(disc)));
    }
    return spectral_norm(m);
}

/// Unitary modulating function of order n on [0,T].
///
/// Each component is a polynomial of degree 2n-1+extra_degree whose 2n
/// Hermite boundary conditions are eliminated exactly:
///   phi^(i)(0) = 0,  phi^(i)(T) = (-1)^i e_{n-i},  i = 0..n-1.
/// The extra_degree coefficients per component parameterize the null space of
/// the boundary constraints and default to zero (the minimal-degree kernel).
class UmfKernel {
    // boundary elimination and evaluation run in extended precision: the
    // monomial basis cancels heavily at sigma = T and plain doubles leave
    // residuals of a few 1e-12 at order 4
    using VectorL = Eigen::Matrix<long double, Eigen::Dynamic, 1>;
    using MatrixL = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;

  public:
    UmfKernel() = default;

    static UmfKernel hermite(int n, double T, int extra_degree = 0) {
        if (n < 1 || !(T > 0.0) || extra_degree < 0)
            throw Error("invalid kernel parameters");
        UmfKernel k;
        k.n_ = n;
        k.T_ = T;
        k.extra_ = extra_degree;
        k.degree_ = 2 * n - 1 + extra_degree;
        const int nu = k.degree_ - n + 1;  // unknown monomial coefficients per component

        // rows: derivative order j at T; cols: monomial powers n..degree
        MatrixL M(n, nu);
        for (int j = 0; j < n; ++j)
            for (int c = 0; c < nu; ++c) {
                const int pw = n + c;
                long double fac = 1.0L;
                for (int i = 0; i < j; ++i) fac *= pw - i;
                M(j, c) = fac * powl(static_cast<long double>(T), pw - j);
            }
        const MatrixL Msq = M.leftCols(n);
        const Eigen::JacobiSVD<MatrixL> svd(Msq, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const double cond =
            static_cast<double>(svd.singularValues()(0) / svd.singularValues()(n - 1));
        if (!std::isfinite(cond) || cond > 1e12)
            throw Error("kernel conditioning: condition estimate " + std::to_string(cond));

        // null-space basis: one direction per extra monomial, same for all components
        k.null_basis_.clear();
        for (int f = 0; f < extra_degree; ++f) {
            VectorL dir = VectorL::Zero(nu);
            dir(n + f) = 1.0L;
            dir.head(n) = svd.solve(VectorL(-M.col(n + f)));
            k.null_basis_.push_back(dir);
        }

        k.coeffs_.clear();
        for (int comp = 0; comp < n; ++comp) {
            VectorL rhs = VectorL::Zero(n);
            rhs(n - 1 - comp) = neg1pow(n - 1 - comp);
            VectorL c = VectorL::Zero(nu);
            c.head(n) = svd.solve(rhs);
            k.coeffs_.push_back(c);
        }
        k.theta_ = Vector::Zero(static_cast<Eigen::Index>(n) * extra_degree);
        return k;
    }

    int order() const { return n_; }
    double horizon() const { return T_; }
    int degree() const { return degree_; }
    int free_params() const { return n_ * extra_; }
    const Vector& free_values() const { return theta_; }

    /// Same boundary conditions, free directions displaced by theta
    /// (component-major: n_ blocks of extra_degree parameters).
    UmfKernel with_free_params(const Vector& theta) const {
        if (theta.size() != free_params()) throw Error("free parameter size mismatch");
        UmfKernel k = UmfKernel::hermite(n_, T_, extra_);
        for (int comp = 0; comp < n_; ++comp)
            for (int f = 0; f < extra_; ++f)
                k.coeffs_[comp] +=
                    static_cast<long double>(theta(comp * extra_ + f)) * k.null_basis_[f];
        k.theta_ = theta;
        return k;
    }

    /// der-th derivative of component comp (0-based) at sigma.
    double eval(int comp, double sigma, int der = 0) const {
        const VectorL& c = coeffs_[comp];
        long double v = 0.0L;
        const long double s = sigma;
        for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) {
            const int pw = n_ + k;
            if (pw < der) continue;
            long double fac = 1.0L;
            for (int i = 0; i < der; ++i) fac *= pw - i;
            v += c(k) * fac * powl(s, pw - der);
        }
        return static_cast<double>(v);
    }

    Vector eval_vec(double sigma, int der = 0) const {
        Vector v(n_);
        for (int comp = 0; comp < n_; ++comp) v(comp) = eval(comp, sigma, der);
        return v;
    }

    /// max over the 2n boundary conditions of |actual - required|.
    double boundary_residual() const {
        double worst = 0.0;
        for (int j = 0; j < n_; ++j) {
            const Vector v0 = eval_vec(0.0, j);
            Vector vT = eval_vec(T_, j);
            vT(n_ - 1 - j) -= neg1pow(j);
            worst = std::max({worst, v0.lpNorm<Eigen::Infinity>(), vT.lpNorm<Eigen::Infinity>()});
        }
        return worst;
    }

    /// Plain-text table: sigma, components, then each derivative order up to n.
    void write_csv(std::ostream& os, double step) const {
        os << "sigma";
        for (int d = 0; d <= n_; ++d)
            for (int c = 0; c < n_; ++c) {
                os << ",phi" << c + 1;
                if (d > 0) os << "_d" << d;
            }
        os << "\n";
        const int rows = static_cast<int>(std::floor(T_ / step + 0.5));
        for (int i = 0; i <= rows; ++i) {
            const double s = std::min(T_, i * step);
            os << s;
            for (int d = 0; d <= n_; ++d)
                for (int c = 0; c < n_; ++c) os << "," << eval(c, s, d);
            os << "\n";
        }
    }

  private:
    int n_ = 0;
    double T_ = 0.0;
    int extra_ = 0;
    int degree_ = 0;
    std::vector<VectorL> coeffs_;      // per component, monomial powers n..degree
    std::vector<VectorL> null_basis_;  // free directions of the constraint system
    Vector theta_;
};

/// (L* phi)(tau, sigma): n-vector with components
///   (-1)^n phi_i^(n)(sigma) + sum_k (-1)^k a_k(tau) phi_i^(k)(sigma),
/// a sampled as [a_{n-1},...,a_0]^T.
inline Vector adjoint_L(const UmfKernel& kernel, const Vector& a_vals, double sigma) {
    const int n = kernel.order();
    Vector r = neg1pow(n) * kernel.eval_vec(sigma, n);
    for (int k = 0; k < n; ++k)
        r += neg1pow(k) * a_vals(n - 1 - k) * kernel.eval_vec(sigma, k);
    return r;
}

/// (B* phi)(tau, sigma): n x m with entries
///   sum_l (-1)^l B_{l,j}(tau) phi_i^(l)(sigma),  B_l = row n-l of B_o.
inline Matrix adjoint_B(const UmfKernel& kernel, const Matrix& Bo_vals, double sigma) {
    const int n = kernel.order();
    const int m = static_cast<int>(Bo_vals.cols());
    Matrix r = Matrix::Zero(n, m);
    for (int l = 0; l < n; ++l)
        r += neg1pow(l) * kernel.eval_vec(sigma, l) * Bo_vals.row(n - 1 - l);
    return r;
}

inline Matrix adjoint_E(const UmfKernel& kernel, const Matrix& Eo_vals, double sigma) {
    return adjoint_B(kernel, Eo_vals, sigma);
}

/// Coefficient functions of an OCF sampled on a uniform time grid, so gain
/// sweeps and FIR taps do not re-run the transformation recursion.
struct CoeffSamples {
    double t0 = 0.0;
    double step = 0.0;
    std::vector<Vector> a;
    std::vector<Matrix> Bo;
    std::vector<Matrix> Eo;

    static CoeffSamples sample(const OcfData& ocf, double t_begin, double t_end, double step) {
        CoeffSamples cs;
        cs.t0 = t_begin;
        cs.step = step;
        const int count = static_cast<int>(std::floor((t_end - t_begin) / step + 0.5));
        cs.a.reserve(count + 1);
        cs.Bo.reserve(count + 1);
        cs.Eo.reserve(count + 1);
        for (int i = 0; i <= count; ++i) {
            const double t = t_begin + i * step;
            cs.a.push_back(ocf.a.eval(t));
            cs.Bo.push_back(ocf.B_o.eval(t));
            cs.Eo.push_back(ocf.E_o.eval(t));
        }
        return cs;
    }

    int index(double t) const {
        int i = static_cast<int>(std::floor((t - t0) / step + 0.5));
        return std::clamp(i, 0, static_cast<int>(a.size()) - 1);
    }
};

/// Kernel gain curves over a t-grid plus their global sups.
/// eta_* are the sup-in-sigma gains, l2_* the L2[0,T] variants.
struct AdjointGainTable {
    double T = 0.0;
    double sigma_step = 0.0;
    std::vector<double> t_grid;
    std::vector<double> eta_a, eta_phi, eta_d;
    std::vector<double> l2_a, l2_phi, l2_d;
    double eta_bar_a = 0.0, eta_bar_phi = 0.0, eta_bar_d = 0.0;
    double l2_bar_a = 0.0, l2_bar_phi = 0.0, l2_bar_d = 0.0;
};

inline AdjointGainTable compute_gain_table(const UmfKernel& kernel, const CoeffSamples& coeffs,
                                           const std::vector<double>& t_grid, double sigma_step) {
    const int n = kernel.order();
    const double T = kernel.horizon();
    const int ns = static_cast<int>(std::floor(T / sigma_step + 0.5));

    // phi derivative tables on the sigma grid, orders 0..n
    std::vector<Matrix> phi(n + 1, Matrix(n, ns + 1));
    for (int d = 0; d <= n; ++d)
        for (int j = 0; j <= ns; ++j) phi[d].col(j) = kernel.eval_vec(j * sigma_step, d);

    AdjointGainTable g;
    g.T = T;
    g.sigma_step = sigma_step;
    g.t_grid = t_grid;
    for (double t : t_grid) {
        double sup_a = 0.0, sup_b = 0.0, sup_e = 0.0;
        double sq_a = 0.0, sq_b = 0.0, sq_e = 0.0;
        for (int j = 0; j <= ns; ++j) {
            const double sigma = j * sigma_step;
            const int idx = coeffs.index(t - T + sigma);
            const Vector& av = coeffs.a[idx];
            const Matrix& Bv = coeffs.Bo[idx];
            const Matrix& Ev = coeffs.Eo[idx];

            Vector Lv = neg1pow(n) * phi[n].col(j);
            for (int k = 0; k < n; ++k) Lv += neg1pow(k) * av(n - 1 - k) * phi[k].col(j);
            Matrix Bm = Matrix::Zero(n, Bv.cols());
            Matrix Em = Matrix::Zero(n, Ev.cols());
            for (int l = 0; l < n; ++l) {
                Bm += neg1pow(l) * phi[l].col(j) * Bv.row(n - 1 - l);
                Em += neg1pow(l) * phi[l].col(j) * Ev.row(n - 1 - l);
            }
            const double na = Lv.norm();
            const double nb = small_spectral_norm(Bm);
            const double ne = small_spectral_norm(Em);
            sup_a = std::max(sup_a, na);
            sup_b = std::max(sup_b, nb);
            sup_e = std::max(sup_e, ne);
            const double w = (j == 0 || j == ns) ? 0.5 : 1.0;  // trapezoid
            sq_a += w * na * na;
            sq_b += w * nb * nb;
            sq_e += w * ne * ne;
        }
        g.eta_a.push_back(sup_a);
        g.eta_phi.push_back(sup_b);
        g.eta_d.push_back(sup_e);
        g.l2_a.push_back(std::sqrt(sq_a * sigma_step));
        g.l2_phi.push_back(std::sqrt(sq_b * sigma_step));
        g.l2_d.push_back(std::sqrt(sq_e * sigma_step));
    }
    auto vmax = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end());
    };
    g.eta_bar_a = vmax(g.eta_a);
    g.eta_bar_phi = vmax(g.eta_phi);
    g.eta_bar_d = vmax(g.eta_d);
    g.l2_bar_a = vmax(g.l2_a);
    g.l2_bar_phi = vmax(g.l2_phi);
    g.l2_bar_d = vmax(g.l2_d);
    return g;
}

/// Stability-margin cost J = eta_bar_a + L_phi * eta_bar_phi.
inline double kernel_cost(const UmfKernel& kernel, const CoeffSamples& coeffs,
                          const std::vector<double>& t_grid, double sigma_step, double L_phi) {
    const AdjointGainTable g = compute_gain_table(kernel, coeffs, t_grid, sigma_step);
    return g.eta_bar_a + L_phi * g.eta_bar_phi;
}

struct KernelOptResult {
    UmfKernel kernel;
    double cost_baseline = 0.0;
    double cost_optimized = 0.0;
    bool improved = false;
};

namespace detail {

/// Nelder-Mead with shrink; deterministic for a fixed start simplex.
template <class F>
Vector nelder_mead(F cost, Vector x0, double scale, int max_iter, double tol) {
    const int dim = static_cast<int>(x0.size());
    std::vector<Vector> xs(dim + 1, x0);
    std::vector<double> fs(dim + 1);
    for (int i = 0; i < dim; ++i) xs[i + 1](i) += scale;
    for (int i = 0; i <= dim; ++i) fs[i] = cost(xs[i]);

    for (int it = 0; it < max_iter; ++it) {
        std::vector<int> ord(dim + 1);
        for (int i = 0; i <= dim; ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](int a, int b) { return fs[a] < fs[b]; });
        std::vector<Vector> xs2;
        std::vector<double> fs2;
        for (int i : ord) {
            xs2.push_back(xs[i]);
            fs2.push_back(fs[i]);
        }
        xs = xs2;
        fs = fs2;
        if (std::abs(fs[dim] - fs[0]) < tol * (std::abs(fs[0]) + tol)) break;

        Vector centroid = Vector::Zero(dim);
        for (int i = 0; i < dim; ++i) centroid += xs[i];
        centroid /= dim;

        const Vector xr = centroid + (centroid - xs[dim]);
        const double fr = cost(xr);
        if (fr < fs[0]) {
            const Vector xe = centroid + 2.0 * (centroid - xs[dim]);
            const double fe = cost(xe);
            if (fe < fr) {
                xs[dim] = xe;
                fs[dim] = fe;
            } else {
                xs[dim] = xr;
                fs[dim] = fr;
            }
        } else if (fr < fs[dim - 1]) {
            xs[dim] = xr;
            fs[dim] = fr;
        } else {
            const Vector xc = centroid + 0.5 * (xs[dim] - centroid);
            const double fc = cost(xc);
            if (fc < fs[dim]) {
                xs[dim] = xc;
                fs[dim] = fc;
            } else {
                for (int i = 1; i <= dim; ++i) {
                    xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
                    fs[i] = cost(xs[i]);
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i <= dim; ++i)
        if (fs[i] < fs[best]) best = i;
    return xs[best];
}

}  // namespace detail

/// Derivative-free search over the free kernel coefficients; boundary
/// conditions stay exact by construction. Deterministic for a given seed.
inline KernelOptResult optimize_kernel(const UmfKernel& baseline, const CoeffSamples& coeffs,
                                       const std::vector<double>& t_grid, double sigma_step,
                                       double L_phi, int restarts = 3, unsigned seed = 1) {
    KernelOptResult res;
    res.kernel = baseline;
    res.cost_baseline = kernel_cost(baseline, coeffs, t_grid, sigma_step, L_phi);
    res.cost_optimized = res.cost_baseline;
    if (baseline.free_params() == 0) return res;  // empty search space

    auto cost = [&](const Vector& theta) {
        return kernel_cost(baseline.with_free_params(theta), coeffs, t_grid, sigma_step, L_phi);
    };

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    Vector best_theta = Vector::Zero(baseline.free_params());
    double best = res.cost_baseline;
    for (int r = 0; r < restarts; ++r) {
        Vector x0 = Vector::Zero(baseline.free_params());
        if (r > 0)
            for (int i = 0; i < x0.size(); ++i) x0(i) = 0.1 * dist(rng);
        const Vector theta = detail::nelder_mead(cost, x0, 0.05, 400, 1e-10);
        const double c = cost(theta);
        if (c < best) {
            best = c;
            best_theta = theta;
        }
    }
    if (best < res.cost_baseline) {
        res.kernel = baseline.with_free_params(best_theta);
        res.cost_optimized = best;
        res.improved = true;
    }
    return res;
}

}  // namespace mfo
