#pragma once

#include "mfo/sampled.hpp"

#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>

namespace mfo {

enum class ObserverMode { Continuous, Sampled };

/// Closed-loop scenario description. The built-in presets in systems.hpp
/// fill these fields; the CLI maps its config onto them.
struct Scenario {
    std::string name;
    SampledPlantSpec plant;
    Vector x0;
    std::function<Vector(double t)> u;
    std::function<Vector(double t, const Vector& x)> d;  // process disturbance
    double noise_variance = 0.0;
    unsigned seed = 0;

    double sample_spacing = 0.0;  // equidistant sampling; multiple of T_s
    bool sampler_jitter = false;  // spacing drawn uniformly in [T_under, T_bar]
    unsigned sampler_seed = 0;
    std::vector<double> sample_times;  // explicit schedule overrides the above

    double T_s = 1e-3;
    double t_end = 10.0;

    int kernel_n = 2;
    double kernel_T = 1.0;
    int kernel_extra = 0;
    bool optimize = false;
    unsigned opt_seed = 1;

    ObserverMode mode = ObserverMode::Sampled;
    GridSpec coeff_grid;  // observability / K3 / gain evaluation window
    double gain_tgrid_step = 0.05;
    double opt_tgrid_step = 0.5;   // coarser grids keep the optimizer fast;
    double opt_sigma_step = 5e-3;  // final gains are re-evaluated on the fine grid
    double obs_threshold = 1e-8;
    double divergence_threshold = 1e6;
    bool xhat_zero_during_fill = false;
    bool reset_during_fill = true;  // false: predictor runs open during [0, T)
    std::optional<double> yhat0;    // initial predictor guess; default ytilde(0)
    bool rate_over_T = false;
    Quadrature quadrature = Quadrature::Trapezoid;
};

/// Everything computable offline: transformation, kernel, gains, criterion.
struct Design {
    ObservabilityReport obs_report;
    OcfData ocf;
    UmfKernel baseline;
    UmfKernel kernel;
    AdjointGainTable gains;
    StabilityReport report;
    double P_sup = 0.0;
    double J_baseline = 0.0;
    double J_opt = 0.0;
    bool opt_improved = false;
};

inline Design prepare(const Scenario& sc) {
    sc.plant.validate();
    Design d;
    const LtvPlant plant = sc.plant.pseudo_input_plant();
    d.obs_report = strong_observability_check(plant, sc.coeff_grid, sc.obs_threshold);
    d.ocf = to_ocf(plant, sc.coeff_grid, sc.obs_threshold);
    d.baseline = UmfKernel::hermite(sc.kernel_n, sc.kernel_T, sc.kernel_extra);
    d.kernel = d.baseline;

    const double sigma_step = sc.T_s;
    const CoeffSamples coeffs = CoeffSamples::sample(
        d.ocf, sc.coeff_grid.t_start - sc.kernel_T, sc.coeff_grid.t_end, sigma_step);
    const GridSpec tg{sc.coeff_grid.t_start, sc.coeff_grid.t_end, sc.gain_tgrid_step};
    const std::vector<double> t_grid = tg.points();

    d.J_baseline =
        kernel_cost(d.baseline, coeffs, t_grid, sigma_step, sc.plant.L_phi);
    d.J_opt = d.J_baseline;
    if (sc.optimize && sc.kernel_extra > 0) {
        const CoeffSamples ccoarse = CoeffSamples::sample(
            d.ocf, sc.coeff_grid.t_start - sc.kernel_T, sc.coeff_grid.t_end, sc.opt_sigma_step);
        const GridSpec tgc{sc.coeff_grid.t_start, sc.coeff_grid.t_end, sc.opt_tgrid_step};
        const KernelOptResult opt =
            optimize_kernel(d.baseline, ccoarse, tgc.points(), sc.opt_sigma_step,
                            sc.plant.L_phi, 3, sc.opt_seed);
        const double j_fine = kernel_cost(opt.kernel, coeffs, t_grid, sigma_step, sc.plant.L_phi);
        if (j_fine < d.J_baseline) {
            d.kernel = opt.kernel;
            d.J_opt = j_fine;
            d.opt_improved = true;
        }
    }
    d.gains = compute_gain_table(d.kernel, coeffs, t_grid, sigma_step);
    d.report = stability_report(sc.plant, d.ocf, d.gains, sc.kernel_T, sc.plant.T_bar,
                                sc.coeff_grid);
    d.P_sup = d.ocf.P.sup_norm(sc.coeff_grid);
    return d;
}

/// Column-aligned closed-loop record at step T_s. NaN marks undefined cells
/// (y_tilde/nu off sample instants, envelopes before their validity times).
struct Trace {
    std::vector<double> t;
    std::vector<Vector> x;
    std::vector<double> y;
    std::vector<int> sample;  // 1 at sampling instants
    std::vector<double> y_tilde;
    std::vector<double> nu;
    std::vector<double> y_hat;
    std::vector<Vector> z_hat;
    std::vector<Vector> x_hat;
    std::vector<double> e_y;
    std::vector<double> e_x_norm;
    std::vector<Vector> d;
    std::vector<double> ey_env;
    std::vector<double> ex_env;
    std::vector<int> fill;
    int status = 0;  // 0 ok, 4 divergence (trace truncated)
    double sup_ey_init = 0.0;
    double alpha_x = std::numeric_limits<double>::quiet_NaN();
    std::map<std::string, std::string> meta;

    std::size_t size() const { return t.size(); }
};

namespace detail {

inline std::vector<double> build_sample_times(const Scenario& sc) {
    if (!sc.sample_times.empty()) return sc.sample_times;
    std::vector<double> ts;
    if (sc.sampler_jitter) {
        std::mt19937_64 rng(sc.sampler_seed);
        std::uniform_real_distribution<double> gap(sc.plant.T_under, sc.plant.T_bar);
        double t = 0.0;
        while (t <= sc.t_end + 1e-12) {
            ts.push_back(t);
            // snap to the integration grid
            const double g = std::max(sc.T_s, std::floor(gap(rng) / sc.T_s + 0.5) * sc.T_s);
            t += g;
        }
    } else {
        const double spacing = sc.sample_spacing;
        for (double t = 0.0; t <= sc.t_end + 1e-12; t += spacing) ts.push_back(t);
    }
    return ts;
}

/// sup of |v| over trailing windows of the given length (NaN entries skipped).
inline std::vector<double> trailing_window_sup(const std::vector<double>& t,
                                               const std::vector<double>& v, double window) {
    const std::size_t count = t.size();
    std::vector<double> out(count, 0.0);
    std::size_t lo = 0;
    std::deque<std::size_t> maxq;  // indices, decreasing |v|
    for (std::size_t i = 0; i < count; ++i) {
        if (std::isfinite(v[i])) {
            while (!maxq.empty() && std::abs(v[maxq.back()]) <= std::abs(v[i])) maxq.pop_back();
            maxq.push_back(i);
        }
        while (t[lo] < t[i] - window - 1e-12) {
            if (!maxq.empty() && maxq.front() == lo) maxq.pop_front();
            ++lo;
        }
        out[i] = maxq.empty() ? 0.0 : std::abs(v[maxq.front()]);
    }
    return out;
}

}  // namespace detail

/// Realized window statistics from a trace feeding the error envelopes; the
/// same path serves in-run evaluation and post-hoc recomputation from a
/// written trace.
inline BoundEnvelope envelopes_from_trace(const Trace& tr, const Design& design,
                                          const Scenario& sc) {
    const double T_star = sc.plant.T_bar + sc.kernel_T;
    double sup_ey = 0.0;
    std::vector<double> d_norm(tr.size(), 0.0);
    for (std::size_t i = 0; i < tr.size(); ++i) {
        if (tr.t[i] <= T_star + 1e-12 && std::isfinite(tr.e_y[i]))
            sup_ey = std::max(sup_ey, std::abs(tr.e_y[i]));
        d_norm[i] = tr.d[i].size() > 0 ? tr.d[i].norm() : 0.0;
    }
    const auto nu_win = detail::trailing_window_sup(tr.t, tr.nu, sc.plant.T_bar);
    const auto d_win = detail::trailing_window_sup(tr.t, d_norm, T_star);
    return bound_envelopes(design.report, design.P_sup, sup_ey, tr.t, nu_win, d_win, d_norm,
                           sc.rate_over_T);
}

/// Full closed-loop execution. Divergent runs return a truncated trace with
/// status 4 rather than throwing.
inline Trace run(const Scenario& sc, const Design& design) {
    const double h = sc.T_s;
    const int steps = static_cast<int>(std::floor(sc.t_end / h + 0.5));
    const auto sample_ts = detail::build_sample_times(sc);
    std::vector<char> is_sample(static_cast<std::size_t>(steps) + 1, 0);
    for (double ts : sample_ts) {
        const double idx = ts / h;
        if (std::abs(idx - std::floor(idx + 0.5)) > 1e-6)
            throw Error("sampling misalignment: sample time " + std::to_string(ts) +
                        " not on the integration grid");
        const int i = static_cast<int>(std::floor(idx + 0.5));
        if (i >= 0 && i <= steps) is_sample[static_cast<std::size_t>(i)] = 1;
    }

    std::mt19937_64 rng(sc.seed);
    std::normal_distribution<double> noise(0.0, std::sqrt(sc.noise_variance));
    auto draw_noise = [&]() { return sc.noise_variance > 0.0 ? noise(rng) : 0.0; };

    const double nan = std::numeric_limits<double>::quiet_NaN();
    Trace tr;
    tr.meta["scenario"] = sc.name;
    tr.meta["seed"] = std::to_string(sc.seed);

    // plant right-hand side (true output y = Cx inside the stages)
    auto rhs = [&](double s, const Vector& x) -> Vector {
        const double y = (sc.plant.C * x)(0);
        Vector dx = sc.plant.A.eval(s) * x + sc.plant.phi(y, sc.u(s), s);
        if (sc.plant.p > 0) dx += sc.plant.E * sc.d(s, x);
        return dx;
    };

    Vector x = sc.x0;
    double y0 = (sc.plant.C * x)(0);
    const double nu0 = draw_noise();

    std::optional<SampledObserver> sobs;
    std::optional<AlgebraicObserver> aobs;
    if (sc.mode == ObserverMode::Sampled) {
        SampledObserverConfig cfg;
        cfg.xhat_zero_during_fill = sc.xhat_zero_during_fill;
        const double yh0 = sc.yhat0.value_or(y0 + nu0);
        sobs.emplace(sc.plant, design.ocf, design.kernel, h, 0.0, yh0, sc.u(0.0), cfg);
        if (sc.reset_during_fill)
            sobs->reset_on_sample(0.0, y0 + nu0);
        else
            sobs->note_sample(0.0);
    } else {
        aobs.emplace(design.ocf, design.kernel, h, FillPolicy::PadWithFirst, sc.quadrature);
        aobs->push(0.0, y0 + nu0, sc.plant.phi(y0 + nu0, sc.u(0.0), 0.0));
    }

    double pending_nu = nu0;  // noise drawn for the current instant (if sampled)
    bool pending_is_sample = true;

    for (int i = 0; i <= steps; ++i) {
        const double t = i * h;
        const double y = (sc.plant.C * x)(0);

        double nu_i = nan, ytilde_i = nan;
        bool sampled_now = false;
        if (sc.mode == ObserverMode::Sampled) {
            if (i == 0) {
                sampled_now = pending_is_sample;
                nu_i = pending_nu;
                ytilde_i = y + nu_i;
            } else if (is_sample[static_cast<std::size_t>(i)]) {
                sampled_now = true;
                nu_i = draw_noise();
                ytilde_i = y + nu_i;
                if (sc.reset_during_fill || t >= sc.kernel_T - 1e-12)
                    sobs->reset_on_sample(t, ytilde_i);
                else
                    sobs->note_sample(t);
            }
        } else {
            sampled_now = true;
            nu_i = (i == 0) ? pending_nu : draw_noise();
            ytilde_i = y + nu_i;
            if (i > 0) aobs->push(t, ytilde_i, sc.plant.phi(ytilde_i, sc.u(t), t));
        }

        Estimate est;
        double yh = nan;
        try {
            if (sc.mode == ObserverMode::Sampled) {
                yh = sobs->y_hat();
                est = (i < steps) ? sobs->step(sc.u, h) : sobs->current_estimate();
            } else {
                est = aobs->estimate(t);
                yh = ytilde_i;
            }
        } catch (const Error&) {
            tr.status = 4;
            break;
        }

        tr.t.push_back(t);
        tr.x.push_back(x);
        tr.y.push_back(y);
        tr.sample.push_back(sampled_now ? 1 : 0);
        tr.y_tilde.push_back(ytilde_i);
        tr.nu.push_back(nu_i);
        tr.y_hat.push_back(yh);
        tr.z_hat.push_back(est.z_hat);
        tr.x_hat.push_back(est.x_hat);
        tr.e_y.push_back(sc.mode == ObserverMode::Sampled ? y - yh : nan);
        tr.e_x_norm.push_back((x - est.x_hat).norm());
        tr.d.push_back(sc.plant.p > 0 ? sc.d(t, x) : Vector::Zero(0).eval());
        tr.fill.push_back(est.filling ? 1 : 0);

        if (!x.allFinite() || x.norm() > sc.divergence_threshold ||
            (std::isfinite(yh) && std::abs(yh) > sc.divergence_threshold) ||
            est.x_hat.norm() > sc.divergence_threshold) {
            tr.status = 4;
            break;
        }
        if (i == steps) break;

        // classical RK4 plant step
        const Vector k1 = rhs(t, x);
        const Vector k2 = rhs(t + h / 2, x + h / 2 * k1);
        const Vector k3 = rhs(t + h / 2, x + h / 2 * k2);
        const Vector k4 = rhs(t + h, x + h * k3);
        x += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
    }

    tr.ey_env.assign(tr.size(), nan);
    tr.ex_env.assign(tr.size(), nan);
    if (sc.mode == ObserverMode::Sampled && tr.status == 0 && design.report.stable) {
        const BoundEnvelope env = envelopes_from_trace(tr, design, sc);
        tr.sup_ey_init = env.sup_ey_init;
        tr.ey_env = env.ey_env;
        tr.ex_env = env.ex_env;
        tr.alpha_x = env.alpha_x;
    }
    return tr;
}

inline Trace run(const Scenario& sc) { return run(sc, prepare(sc)); }

struct Metrics {
    double snr_db = std::numeric_limits<double>::infinity();
    double steady_ex = 0.0;         // mean ||e_x|| over the last 10% of the run
    double nu_sup = 0.0;            // sup |nu|
    double d_sup = 0.0;             // sup ||d||
    double nu_bar_l2 = 0.0;         // sup over t of ||nu||_L2 window norm
    double d_bar_l2 = 0.0;
    int ey_violations = 0;          // e_y above its envelope for t >= T*
    int ex_violations = 0;          // ||e_x|| above its envelope
};

inline Metrics metrics(const Trace& tr, double horizon_T) {
    Metrics m;
    double sig = 0.0, pwr = 0.0;
    int noise_count = 0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        if (std::isfinite(tr.nu[i])) {
            sig += tr.y[i] * tr.y[i];
            pwr += tr.nu[i] * tr.nu[i];
            ++noise_count;
        }
        if (std::isfinite(tr.nu[i])) m.nu_sup = std::max(m.nu_sup, std::abs(tr.nu[i]));
        if (tr.d[i].size() > 0) m.d_sup = std::max(m.d_sup, tr.d[i].norm());
        if (std::isfinite(tr.ey_env[i]) && std::abs(tr.e_y[i]) > tr.ey_env[i] * (1 + 1e-12) + 1e-12)
            ++m.ey_violations;
        if (std::isfinite(tr.ex_env[i]) && tr.e_x_norm[i] > tr.ex_env[i] * (1 + 1e-12) + 1e-12)
            ++m.ex_violations;
    }
    if (pwr > 0.0 && noise_count > 0) m.snr_db = 10.0 * std::log10(sig / pwr);

    const std::size_t tail = std::max<std::size_t>(1, tr.size() / 10);
    double acc = 0.0;
    for (std::size_t i = tr.size() - tail; i < tr.size(); ++i) acc += tr.e_x_norm[i];
    m.steady_ex = acc / tail;

    // Assumption-2-style L2 window statistics from the realizations
    if (tr.size() > 1) {
        const double h = tr.t[1] - tr.t[0];
        const int win = static_cast<int>(std::floor(horizon_T / h + 0.5));
        double best_nu = 0.0, best_d = 0.0;
        for (std::size_t i = static_cast<std::size_t>(win); i < tr.size(); ++i) {
            double snu = 0.0, sd = 0.0;
            for (std::size_t j = i - win; j <= i; ++j) {
                const double w = (j == i - win || j == i) ? 0.5 * h : h;
                if (std::isfinite(tr.nu[j])) snu += w * tr.nu[j] * tr.nu[j];
                if (tr.d[j].size() > 0) sd += w * tr.d[j].squaredNorm();
            }
            best_nu = std::max(best_nu, snu);
            best_d = std::max(best_d, sd);
        }
        m.nu_bar_l2 = std::sqrt(best_nu);
        m.d_bar_l2 = std::sqrt(best_d);
    }
    return m;
}

inline void write_trace_csv(const Trace& tr, std::ostream& os) {
    const int n = tr.x.empty() ? 0 : static_cast<int>(tr.x[0].size());
    const int p = tr.d.empty() ? 0 : static_cast<int>(tr.d[0].size());
    os << std::setprecision(17);
    os << "t";
    for (int i = 0; i < n; ++i) os << ",x" << i + 1;
    os << ",y,sample,y_tilde,nu,y_hat";
    for (int i = 0; i < n; ++i) os << ",z_hat" << i + 1;
    for (int i = 0; i < n; ++i) os << ",x_hat" << i + 1;
    os << ",e_y,e_x_norm";
    for (int i = 0; i < p; ++i) os << ",d" << i + 1;
    os << ",ey_env,ex_env,fill\n";
    for (std::size_t r = 0; r < tr.size(); ++r) {
        os << tr.t[r];
        for (int i = 0; i < n; ++i) os << "," << tr.x[r](i);
        os << "," << tr.y[r] << "," << tr.sample[r] << "," << tr.y_tilde[r] << "," << tr.nu[r]
           << "," << tr.y_hat[r];
        for (int i = 0; i < n; ++i) os << "," << tr.z_hat[r](i);
        for (int i = 0; i < n; ++i) os << "," << tr.x_hat[r](i);
        os << "," << tr.e_y[r] << "," << tr.e_x_norm[r];
        for (int i = 0; i < p; ++i) os << "," << tr.d[r](i);
        os << "," << tr.ey_env[r] << "," << tr.ex_env[r] << "," << tr.fill[r] << "\n";
    }
}

inline void write_metadata(const Trace& tr, std::ostream& os) {
    os << std::setprecision(17);
    for (const auto& [k, v] : tr.meta) os << k << " = " << v << "\n";
    os << "status = " << tr.status << "\n";
    os << "sup_ey_init = " << tr.sup_ey_init << "\n";
    os << "alpha_x = " << tr.alpha_x << "\n";
}

/// Minimal CSV reader for traces produced by write_trace_csv (used by the
/// bounds command to consume previously written runs).
inline Trace read_trace_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw Error("empty trace file");
    std::vector<std::string> cols;
    {
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) cols.push_back(c);
    }
    auto col = [&](const std::string& name) -> int {
        for (std::size_t i = 0; i < cols.size(); ++i)
            if (cols[i] == name) return static_cast<int>(i);
        return -1;
    };
    int n = 0, p = 0;
    while (col("x" + std::to_string(n + 1)) >= 0) ++n;
    while (col("d" + std::to_string(p + 1)) >= 0) ++p;

    Trace tr;
    std::vector<double> vals;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        vals.clear();
        std::stringstream ss(line);
        std::string c;
        while (std::getline(ss, c, ',')) {
            try {
                vals.push_back(std::stod(c));
            } catch (...) {
                vals.push_back(std::numeric_limits<double>::quiet_NaN());
            }
        }
        auto get = [&](const std::string& name) {
            const int i = col(name);
            return i >= 0 ? vals[static_cast<std::size_t>(i)]
                          : std::numeric_limits<double>::quiet_NaN();
        };
        tr.t.push_back(get("t"));
        Vector x(n);
        for (int i = 0; i < n; ++i) x(i) = get("x" + std::to_string(i + 1));
        tr.x.push_back(x);
        tr.y.push_back(get("y"));
        tr.sample.push_back(static_cast<int>(get("sample")));
        tr.y_tilde.push_back(get("y_tilde"));
        tr.nu.push_back(get("nu"));
        tr.y_hat.push_back(get("y_hat"));
        Vector zh(n), xh(n);
        for (int i = 0; i < n; ++i) zh(i) = get("z_hat" + std::to_string(i + 1));
        for (int i = 0; i < n; ++i) xh(i) = get("x_hat" + std::to_string(i + 1));
        tr.z_hat.push_back(zh);
        tr.x_hat.push_back(xh);
        tr.e_y.push_back(get("e_y"));
        tr.e_x_norm.push_back(get("e_x_norm"));
        Vector dv(p);
        for (int i = 0; i < p; ++i) dv(i) = get("d" + std::to_string(i + 1));
        tr.d.push_back(dv);
        tr.ey_env.push_back(get("ey_env"));
        tr.ex_env.push_back(get("ex_env"));
        tr.fill.push_back(static_cast<int>(get("fill")));
    }
    return tr;
}

}  // namespace mfo
