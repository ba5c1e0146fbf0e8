#pragma once

#include "mfo/observer.hpp"

#include <functional>
#include <limits>

namespace mfo {

/// Plant x' = A(t)x + phi(y,u,t) + E d with sampled output y(t_i) = C x(t_i).
/// The nonlinearity is treated as an n-vector pseudo-input with B = I, so the
/// companion-form input matrix becomes B_o = P^{-1}.
struct SampledPlantSpec {
    int n = 0;
    int m = 0;  // dimension of the physical input u entering phi
    int p = 0;
    MatrixSignal A;
    RowVector C;
    Matrix E;
    std::function<Vector(double y, const Vector& u, double t)> phi;
    double L_phi = 0.0;   // Lipschitz constant of phi in y
    double T_bar = 0.0;   // max sampling period
    double T_under = 0.0;  // min sampling period

    void validate() const {
        if (!(T_under > 0.0) || !(T_under <= T_bar) || L_phi < 0.0)
            throw Error("invalid sampled plant spec");
        if (A.rows() != n || A.cols() != n || C.size() != n || E.rows() != n || E.cols() != p)
            throw Error("inconsistent plant dimensions");
    }

    /// Linear part with identity pseudo-input, the form the transformation
    /// machinery consumes.
    LtvPlant pseudo_input_plant() const {
        LtvPlant pl;
        pl.n = n;
        pl.m = n;
        pl.p = p;
        pl.A = A;
        pl.B = MatrixSignal::constant(Matrix::Identity(n, n));
        pl.C = MatrixSignal::constant(C);
        pl.E = MatrixSignal::constant(E);
        return pl;
    }
};

/// Evaluation of the sampling criterion T_bar * lambda < 1 with
///   lambda = K1 L_phi + K3 T (eta_bar_a + eta_bar_phi L_phi).
struct StabilityReport {
    double K1 = 0.0, K2 = 0.0, K3 = 0.0;
    double eta_bar_a = 0.0, eta_bar_phi = 0.0, eta_bar_d = 0.0;
    double T = 0.0, T_bar = 0.0, L_phi = 0.0;
    double lambda = 0.0;
    double product = 0.0;  // T_bar * lambda
    bool stable = false;
    double T_max_feasible = 0.0;  // 1 / lambda
    double margin = 0.0;          // 1 - T_bar * lambda
};

inline StabilityReport stability_report(const SampledPlantSpec& spec, const OcfData& ocf,
                                        const AdjointGainTable& gains, double T, double T_bar,
                                        const GridSpec& k3_grid) {
    StabilityReport r;
    r.K1 = spec.C.norm();
    r.K2 = (spec.p > 0) ? (spec.C * spec.E).norm() : 0.0;
    for (double t : k3_grid.points()) {
        const RowVector cap = spec.C * spec.A.eval(t) * ocf.P.eval(t);
        r.K3 = std::max(r.K3, cap.norm());
    }
    r.eta_bar_a = gains.eta_bar_a;
    r.eta_bar_phi = gains.eta_bar_phi;
    r.eta_bar_d = gains.eta_bar_d;
    r.T = T;
    r.T_bar = T_bar;
    r.L_phi = spec.L_phi;
    r.lambda = r.K1 * spec.L_phi + r.K3 * T * (r.eta_bar_a + r.eta_bar_phi * spec.L_phi);
    r.product = T_bar * r.lambda;
    r.stable = r.product < 1.0;
    r.T_max_feasible = r.lambda > 0.0 ? 1.0 / r.lambda : std::numeric_limits<double>::infinity();
    r.margin = 1.0 - r.product;
    return r;
}

struct SampledObserverConfig {
    bool xhat_zero_during_fill = false;  // default: pad-policy estimate while filling
    FillPolicy fill_policy = FillPolicy::PadWithFirst;
};

/// Inter-sample output predictor coupled with the algebraic observer:
///   yhat' = C A(t) xhat + C phi(yhat, u, t),   yhat(t_i) = ytilde(t_i),
///   xhat  = P(t)(-<L* phi_k, yhat> + <B* phi_k, phi(yhat,u,t)>).
class SampledObserver {
  public:
    SampledObserver(SampledPlantSpec spec, const OcfData& ocf, const UmfKernel& kernel, double h,
                    double t0, double yhat0, const Vector& u0,
                    SampledObserverConfig config = {})
        : spec_(std::move(spec)),
          config_(config),
          alg_(ocf, kernel, h, config.fill_policy),
          t_(t0),
          yhat_(yhat0) {
        spec_.validate();
        alg_.push(t0, yhat0, spec_.phi(yhat0, u0, t0));
    }

    double time() const { return t_; }
    double y_hat() const { return yhat_; }
    const AlgebraicObserver& algebraic() const { return alg_; }

    Estimate current_estimate() const {
        if (config_.xhat_zero_during_fill && alg_.filling()) {
            Estimate est;
            est.z_hat = Vector::Zero(spec_.n);
            est.x_hat = Vector::Zero(spec_.n);
            est.filling = true;
            return est;
        }
        return alg_.estimate(t_);
    }

    /// One RK4 micro-step of the predictor, holding xhat constant (dt must
    /// equal the buffer step). Pushes the advanced yhat and phi samples.
    Estimate step(const std::function<Vector(double)>& u_of_t, double dt) {
        if (std::abs(dt - alg_.step()) > 1e-12) throw Error("predictor step must equal buffer step");
        const Estimate est = current_estimate();
        const Vector& xhat = est.x_hat;
        auto f = [&](double s, double yh) {
            return (spec_.C * spec_.A.eval(s) * xhat)(0) +
                   (spec_.C * spec_.phi(yh, u_of_t(s), s))(0);
        };
        const double k1 = f(t_, yhat_);
        const double k2 = f(t_ + dt / 2, yhat_ + dt / 2 * k1);
        const double k3 = f(t_ + dt / 2, yhat_ + dt / 2 * k2);
        const double k4 = f(t_ + dt, yhat_ + dt * k3);
        yhat_ += dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
        t_ += dt;
        if (!std::isfinite(yhat_)) throw Error("predictor divergence at t=" + std::to_string(t_));
        alg_.push(t_, yhat_, spec_.phi(yhat_, u_of_t(t_), t_));
        return est;
    }

    /// Reset rule yhat(t_i) = ytilde(t_i); buffers pick up the jump at the
    /// next push.
    void reset_on_sample(double t_i, double y_tilde) {
        note_sample(t_i);
        yhat_ = y_tilde;
    }

    /// Acknowledge a measurement instant without reinitializing the
    /// predictor (used for cold starts while the horizon fills).
    void note_sample(double t_i) {
        if (has_sample_) {
            const double gap = t_i - last_sample_t_;
            if (gap < spec_.T_under - 1e-9 || gap > spec_.T_bar + 1e-9)
                throw Error("Assumption 3 violated: sampling interval " + std::to_string(gap));
        }
        last_sample_t_ = t_i;
        has_sample_ = true;
    }

  private:
    SampledPlantSpec spec_;
    SampledObserverConfig config_;
    AlgebraicObserver alg_;
    double t_ = 0.0;
    double yhat_ = 0.0;
    double last_sample_t_ = 0.0;
    bool has_sample_ = false;
};

/// ISS error envelopes evaluated on a uniform time grid.
struct BoundEnvelope {
    double T_star = 0.0;       // T_bar + T
    double alpha_x = 0.0;
    double sup_ey_init = 0.0;  // sup of |e_y| over [0, T*]
    std::vector<double> t;
    std::vector<double> W;
    std::vector<double> ey_env;  // valid for t >= T*; NaN before
    std::vector<double> ex_env;  // valid for t >= T* + T; NaN before
};

/// Envelopes from realized window statistics:
///   W(t)      = nu_win(t) + T_bar (K2 + K3 T eta_bar_d) d_win(t)
///   ey_env(t) = sup_ey_init exp[ln(T_bar lambda)/T* (t - T*)] + W(t)/(1 - T_bar lambda)
///   ex_env(t) = ||P|| [ (eta_a+eta_phi L_phi)(alpha_x exp[...] + ||W||_L1[t-T,t]/(1-T_bar lambda))
///                       + eta_d ||d||_L1[t-T,t] ]
/// nu_win: sup |nu| over [t-T_bar, t]; d_win: sup ||d|| over [t-T*, t];
/// d_norm: pointwise ||d(t)||. rate_over_T switches the exponential rate
/// denominator from T* to T.
inline BoundEnvelope bound_envelopes(const StabilityReport& rep, double P_sup, double sup_ey_init,
                                     const std::vector<double>& ts,
                                     const std::vector<double>& nu_win,
                                     const std::vector<double>& d_win,
                                     const std::vector<double>& d_norm,
                                     bool rate_over_T = false) {
    if (!(rep.product < 1.0)) throw Error("criterion violated; no envelope");
    const double nan = std::numeric_limits<double>::quiet_NaN();
    BoundEnvelope env;
    env.T_star = rep.T_bar + rep.T;
    env.sup_ey_init = sup_ey_init;
    env.t = ts;
    const double log_prod = std::log(rep.product);
    env.alpha_x = env.T_star / log_prod * (std::pow(rep.product, rep.T / env.T_star) - 1.0) *
                  sup_ey_init;
    const double rate = log_prod / (rate_over_T ? rep.T : env.T_star);
    const double d_gain = rep.T_bar * (rep.K2 + rep.K3 * rep.T * rep.eta_bar_d);
    const double denom = 1.0 - rep.product;

    const std::size_t count = ts.size();
    env.W.resize(count);
    for (std::size_t i = 0; i < count; ++i) env.W[i] = nu_win[i] + d_gain * d_win[i];

    const double h = count > 1 ? ts[1] - ts[0] : 0.0;
    const int win = h > 0.0 ? static_cast<int>(std::floor(rep.T / h + 0.5)) : 0;
    env.ey_env.assign(count, nan);
    env.ex_env.assign(count, nan);
    for (std::size_t i = 0; i < count; ++i) {
        const double t = ts[i];
        if (t < env.T_star - 1e-9) continue;
        env.ey_env[i] = sup_ey_init * std::exp(rate * (t - env.T_star)) + env.W[i] / denom;
        if (t < env.T_star + rep.T - 1e-9) continue;
        // trailing L1 windows over [t-T, t], trapezoid
        double w_l1 = 0.0, d_l1 = 0.0;
        const std::size_t j0 = i - static_cast<std::size_t>(win);
        for (std::size_t j = j0; j <= i; ++j) {
            const double w = (j == j0 || j == i) ? 0.5 * h : h;
            w_l1 += w * env.W[j];
            d_l1 += w * d_norm[j];
        }
        env.ex_env[i] =
            P_sup * ((rep.eta_bar_a + rep.eta_bar_phi * rep.L_phi) *
                         (env.alpha_x * std::exp(rate * (t - env.T_star - rep.T)) + w_l1 / denom) +
                     rep.eta_bar_d * d_l1);
    }
    return env;
}

}  // namespace mfo
