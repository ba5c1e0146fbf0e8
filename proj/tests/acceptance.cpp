// Acceptance suite: one PASS/FAIL line per criterion, exit code = #failures.
#include "mfo/mfo.hpp"

#include <cstdarg>
#include <cstdio>
#include <future>
#include <random>
#include <thread>
#include <vector>

using namespace mfo;

namespace {

int g_failures = 0;

void report(int criterion, bool ok, const std::string& detail) {
    std::printf("%s criterion %d: %s\n", ok ? "PASS" : "FAIL", criterion, detail.c_str());
    if (!ok) ++g_failures;
}

std::string fmt(const char* f, ...) {
    char buf[512];
    va_list ap;
    va_start(ap, f);
    std::vsnprintf(buf, sizeof buf, f, ap);
    va_end(ap);
    return buf;
}

// ---------------------------------------------------------------- criterion 6
// dense polynomial with exact derivatives, for synthesizing smooth companion
// trajectories whose disturbance channel is solved in closed form
struct Poly {
    std::vector<double> c;

    double eval(double t, int der = 0) const {
        double v = 0.0;
        for (int k = static_cast<int>(c.size()) - 1; k >= der; --k) {
            double fac = 1.0;
            for (int i = 0; i < der; ++i) fac *= k - i;
            v += c[static_cast<std::size_t>(k)] * fac * std::pow(t, k - der);
        }
        return v;
    }
    Poly deriv() const {
        Poly d;
        for (std::size_t k = 1; k < c.size(); ++k) d.c.push_back(c[k] * static_cast<double>(k));
        return d;
    }
    Poly operator+(const Poly& o) const {
        Poly r = *this;
        if (o.c.size() > r.c.size()) r.c.resize(o.c.size(), 0.0);
        for (std::size_t k = 0; k < o.c.size(); ++k) r.c[k] += o.c[k];
        return r;
    }
    Poly scaled(double s) const {
        Poly r = *this;
        for (double& v : r.c) v *= s;
        return r;
    }
    Poly operator*(const Poly& o) const {
        Poly r;
        r.c.assign(c.size() + o.c.size() - 1, 0.0);
        for (std::size_t i = 0; i < c.size(); ++i)
            for (std::size_t j = 0; j < o.c.size(); ++j) r.c[i + j] += c[i] * o.c[j];
        return r;
    }
};

Poly random_poly(std::mt19937_64& rng, int degree, double scale) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Poly p;
    for (int k = 0; k <= degree; ++k) p.c.push_back(u(rng));
    return p;
}

double diff_param_worst_residual() {
    std::mt19937_64 rng(42);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + trial % 2;
        const int m = 1 + trial % 2;
        const bool tv = (n == 2) && (trial % 3 == 0);

        std::vector<Poly> a_poly;
        for (int k = 0; k < n; ++k) a_poly.push_back(random_poly(rng, tv ? 2 : 0, 0.5));
        Matrix Bo = Matrix::Random(n, m);
        Matrix Eo = Matrix::Identity(n, n) + 0.1 * Matrix::Random(n, n);
        const Matrix Einv = Eo.inverse();

        std::vector<Poly> z_poly, u_poly;
        for (int i = 0; i < n; ++i) z_poly.push_back(random_poly(rng, 4, 1.0));
        for (int j = 0; j < m; ++j) u_poly.push_back(random_poly(rng, 3, 1.0));

        std::vector<Poly> rhs;
        for (int i = 0; i < n; ++i) {
            Poly r = z_poly[static_cast<std::size_t>(i)].deriv() +
                     a_poly[static_cast<std::size_t>(i)] * z_poly[0];
            if (i + 1 < n) r = r + z_poly[static_cast<std::size_t>(i + 1)].scaled(-1.0);
            for (int j = 0; j < m; ++j)
                r = r + u_poly[static_cast<std::size_t>(j)].scaled(-Bo(i, j));
            rhs.push_back(r);
        }
        std::vector<Poly> d_poly;
        for (int l = 0; l < n; ++l) {
            Poly d;
            for (int i = 0; i < n; ++i)
                d = d + rhs[static_cast<std::size_t>(i)].scaled(Einv(l, i));
            d_poly.push_back(d);
        }

        OcfData ocf;
        ocf.n = n;
        ocf.m = m;
        ocf.p = n;
        ocf.a = MatrixSignal(
            n, 1,
            [a_poly, n](double t, int der) {
                Matrix v(n, 1);
                for (int k = 0; k < n; ++k)
                    v(k, 0) = a_poly[static_cast<std::size_t>(k)].eval(t, der);
                return v;
            },
            1000);
        ocf.B_o = MatrixSignal::constant(Bo);
        ocf.E_o = MatrixSignal::constant(Eo);

        for (double t : {0.2, 0.9}) {
            Vector Y(n);
            for (int k = 0; k < n; ++k) Y(k) = z_poly[0].eval(t, k);
            std::vector<Vector> U, D;
            for (int j = 0; j < m; ++j) {
                Vector s(n);
                for (int k = 0; k < n; ++k) s(k) = u_poly[static_cast<std::size_t>(j)].eval(t, k);
                U.push_back(s);
            }
            for (int l = 0; l < n; ++l) {
                Vector s(n);
                for (int k = 0; k < n; ++k) s(k) = d_poly[static_cast<std::size_t>(l)].eval(t, k);
                D.push_back(s);
            }
            const Vector z_param = diff_param_oracle(ocf, t, Y, U, D);

            // forward-simulated reference: RK4 on the companion dynamics
            auto f = [&](double s, const Vector& z) -> Vector {
                Vector av(n);
                for (int k = 0; k < n; ++k) av(k) = a_poly[static_cast<std::size_t>(k)].eval(s);
                Vector uu(m), dd(n);
                for (int j = 0; j < m; ++j) uu(j) = u_poly[static_cast<std::size_t>(j)].eval(s);
                for (int l = 0; l < n; ++l) dd(l) = d_poly[static_cast<std::size_t>(l)].eval(s);
                return companion_from_a(av) * z + Bo * uu + Eo * dd;
            };
            Vector z_sim(n);
            for (int i = 0; i < n; ++i) z_sim(i) = z_poly[static_cast<std::size_t>(i)].eval(0.0);
            const double h = 1e-3;
            double s = 0.0;
            while (s < t - h / 2) {
                const Vector k1 = f(s, z_sim);
                const Vector k2 = f(s + h / 2, z_sim + h / 2 * k1);
                const Vector k3 = f(s + h / 2, z_sim + h / 2 * k2);
                const Vector k4 = f(s + h, z_sim + h * k3);
                z_sim += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
                s += h;
            }
            worst = std::max(worst, (z_param - z_sim).norm());
        }
    }
    return worst;
}

// ---------------------------------------------------------------- criterion 5
double max_ez(const Scenario& sc, const Design& design) {
    Trace tr = run(sc, design);
    if (tr.status != 0) return std::numeric_limits<double>::infinity();
    double worst = 0.0;
    for (std::size_t i = 0; i < tr.size(); ++i) {
        if (tr.t[i] < sc.kernel_T) continue;
        const Vector ez = design.ocf.P_inv.eval(tr.t[i]) * tr.x[i] - tr.z_hat[i];
        worst = std::max(worst, ez.norm());
    }
    return worst;
}

// ---------------------------------------------------------------- criterion 7
double modulate_scalar(const UmfKernel& k, int comp, double h,
                       const std::function<double(double)>& xi) {
    HorizonBuffer b(1, k.horizon(), h);
    for (int j = 0; j < b.capacity(); ++j) b.push(j * h, Vector::Constant(1, xi(j * h)));
    auto row = [&](double, double sigma) { return Matrix::Constant(1, 1, k.eval(comp, sigma)); };
    return b.modulate(row, b.horizon(), Quadrature::Trapezoid)(0);
}

}  // namespace

int main() {
    // shared designs ---------------------------------------------------------
    Scenario pend = systems::tv_pendulum_scenario(0.0);
    const Design d_pend = prepare(pend);

    Scenario pend_opt_sc = pend;
    pend_opt_sc.kernel_extra = 2;
    pend_opt_sc.optimize = true;
    const Design d_pend_opt = prepare(pend_opt_sc);

    Scenario lti = systems::lti_oscillator_scenario();
    const Design d_lti = prepare(lti);

    // injected reference gains for the stability constants
    AdjointGainTable ref_gains;
    ref_gains.eta_bar_a = 0.26;
    ref_gains.eta_bar_phi = 2.76;
    const StabilityReport rep_ref = stability_report(pend.plant, d_pend.ocf, ref_gains, 1.0,
                                                     pend.plant.T_bar, pend.coeff_grid);

    // criterion 1: stability factor with reference gains, then self-computed
    {
        const bool lam_ok = std::abs(rep_ref.lambda - 23.88) <= 0.1;
        const bool inv_ok = std::abs(rep_ref.T_max_feasible - 0.0419) <= 0.0005;
        const StabilityReport& self = d_pend_opt.report;
        const bool self_ok = self.stable && self.product < 1.0;
        report(1, lam_ok && inv_ok && self_ok,
               fmt("lambda(ref gains) = %.4f (target 23.88 +- 0.1), 1/lambda = %.6f "
                   "(target 0.0419 +- 0.0005); self-computed lambda = %.4f, "
                   "T_bar*lambda = %.4f < 1",
                   rep_ref.lambda, rep_ref.T_max_feasible, self.lambda, self.product));
    }

    // criterion 2: transformation gain and observability determinant
    {
        const double P_sup = d_pend.P_sup;
        const double det_min = d_pend.obs_report.delta_min;
        const bool ok = std::abs(P_sup - 0.5525) <= 0.005 && std::abs(det_min - 4.0) <= 1e-10;
        report(2, ok,
               fmt("sup ||P|| = %.6f (target 0.5525 +- 0.005), min |det O| = %.12f "
                   "(target 4 +- 1e-10)",
                   P_sup, det_min));
    }

    // criterion 3: predictor constants
    {
        const StabilityReport& r = d_pend.report;
        const bool ok = r.K1 == 2.0 && r.K2 == 0.0 && std::abs(r.K3 - 1.0198) <= 1e-3;
        report(3, ok,
               fmt("K1 = %g (= 2), K2 = %g (= 0), K3 = %.5f (target 1.0198 +- 1e-3)", r.K1,
                   r.K2, r.K3));
    }

    // nominal pendulum run: feeds criteria 4 and 8
    const Trace tr_nom = run(pend, d_pend);

    // criterion 4: worst-case transient amplitude with reference gains
    {
        const double sup0 = tr_nom.sup_ey_init;
        const std::vector<double> one_t{0.0}, zero{0.0};
        const BoundEnvelope env = bound_envelopes(rep_ref, d_pend.P_sup, sup0, one_t, zero,
                                                  zero, zero);
        const bool ok = tr_nom.status == 0 && std::abs(env.alpha_x - 39.8) <= 0.05 * 39.8;
        report(4, ok,
               fmt("alpha_x = %.3f (target 39.8 +- 5%%) from sup_ey_init = %.3f; "
                   "sensitivity d(alpha_x)/d(sup_ey_init) = %.4f (linear)",
                   env.alpha_x, sup0, env.alpha_x / sup0));
    }

    // criterion 5: continuous-measurement reconstruction exactness
    {
        Scenario pc = pend;
        pc.mode = ObserverMode::Continuous;
        pc.x0 << 0.7, -0.2;
        pc.t_end = 3.0;
        Scenario lc = lti;
        lc.mode = ObserverMode::Continuous;
        lc.t_end = 6.0;
        lc.optimize = false;
        const Design d_lc = prepare(lc);

        auto at = [&](Scenario sc, const Design& d, double h) {
            sc.T_s = h;
            return max_ez(sc, d);
        };
        const double p1 = at(pc, d_pend, 1e-3), p2 = at(pc, d_pend, 5e-4);
        const double l1 = at(lc, d_lc, 1e-3), l2 = at(lc, d_lc, 5e-4);
        const bool ok = p1 <= 1e-4 && l1 <= 1e-4 && p1 / p2 > 2.5 && p1 / p2 < 6.0 &&
                        l1 / l2 > 2.5 && l1 / l2 < 6.0;
        report(5, ok,
               fmt("max ||e_z|| (t >= T, h=1e-3): pendulum %.3e, oscillator %.3e "
                   "(<= 1e-4); halving h cuts them by %.2fx / %.2fx (~4x expected)",
                   p1, l1, p1 / p2, l1 / l2));
    }

    // criterion 6: differential parameterization vs forward simulation
    {
        const double worst = diff_param_worst_residual();
        report(6, worst <= 1e-6,
               fmt("worst residual over 20 randomized trajectories = %.3e (<= 1e-6)", worst));
    }

    // criterion 7: kernel boundary conditions, linearity, quadrature order
    {
        double worst_bnd = 0.0;
        for (int n : {2, 3, 4})
            for (double T : {0.5, 1.0, 2.0})
                worst_bnd = std::max(worst_bnd, UmfKernel::hermite(n, T).boundary_residual());

        const UmfKernel k = UmfKernel::hermite(2, 2.0);
        auto xi1 = [](double s) { return std::sin(s); };
        auto xi2 = [](double s) { return s * s - 0.3; };
        const double a = 1.7, c = -2.4;
        double worst_lin = 0.0;
        for (int comp = 0; comp < 2; ++comp) {
            const double lhs = modulate_scalar(
                k, comp, 1e-2, [&](double s) { return a * xi1(s) + c * xi2(s); });
            const double rhs = a * modulate_scalar(k, comp, 1e-2, xi1) +
                               c * modulate_scalar(k, comp, 1e-2, xi2);
            worst_lin = std::max(worst_lin, std::abs(lhs - rhs));
        }

        // ramp against the first component: exact integral 2/5
        auto err = [&](double h) {
            return std::abs(modulate_scalar(k, 0, h, [](double s) { return s; }) - 0.4);
        };
        const double ratio = err(2e-2) / err(1e-2);
        const bool ok = worst_bnd <= 1e-12 && worst_lin <= 1e-12 && ratio > 3.0 && ratio < 5.0;
        report(7, ok,
               fmt("boundary residual %.3e (<= 1e-12, n in {2,3,4} x T in {0.5,1,2}); "
                   "linearity residual %.3e (<= 1e-12); trapezoid error ratio %.2f "
                   "(second order: ~4)",
                   worst_bnd, worst_lin, ratio));
    }

    // criterion 8: envelope soundness across the disturbance/noise matrix
    {
        int viol = 0, bad_status = 0;
        auto tally = [&](const Trace& tr, double T) {
            const Metrics m = metrics(tr, T);
            viol += m.ey_violations + m.ex_violations;
            if (tr.status != 0) ++bad_status;
        };
        tally(tr_nom, pend.kernel_T);
        for (double H : {0.5, 2.0, 5.0}) {
            Scenario sc = systems::tv_pendulum_scenario(H);
            sc.t_end = 12.0;
            tally(run(sc, d_pend), sc.kernel_T);
        }

        Scenario ln = lti;
        ln.noise_variance = 1e-2;
        ln.t_end = 10.0;
        const unsigned workers = std::max(2u, std::thread::hardware_concurrency());
        std::vector<std::pair<int, int>> results(100);
        for (unsigned base = 0; base < 100; base += workers) {
            std::vector<std::future<std::pair<int, int>>> fs;
            for (unsigned s = base; s < std::min(base + workers, 100u); ++s)
                fs.push_back(std::async(std::launch::async, [&, s] {
                    Scenario sc = ln;
                    sc.seed = s;
                    const Trace tr = run(sc, d_lti);
                    const Metrics m = metrics(tr, sc.kernel_T);
                    return std::make_pair(m.ey_violations + m.ex_violations,
                                          tr.status == 0 ? 0 : 1);
                }));
            for (unsigned s = base; s < std::min(base + workers, 100u); ++s)
                results[s] = fs[s - base].get();
        }
        for (const auto& [v, b] : results) {
            viol += v;
            bad_status += b;
        }
        report(8, viol == 0 && bad_status == 0,
               fmt("envelope violations = %d (target 0) across pendulum H in {0,0.5,2,5} "
                   "and 100 noisy oscillator seeds; non-zero statuses = %d",
                   viol, bad_status));
    }

    // criterion 9: empirical stability boundary of the sampled oscillator
    {
        Scenario ok_sc = lti;
        ok_sc.t_end = 60.0;
        const Trace tr_ok = run(ok_sc, d_lti);
        double sup_x = 0.0;
        for (const Vector& x : tr_ok.x) sup_x = std::max(sup_x, x.norm());

        Scenario div_sc = lti;
        div_sc.plant.T_bar = 2.2;
        div_sc.plant.T_under = 2.2;
        div_sc.sample_spacing = 2.2;
        div_sc.noise_variance = 1e-2;
        div_sc.seed = 7;
        div_sc.t_end = 120.0;
        const Trace tr_div = run(div_sc, prepare(div_sc));

        const bool ok = tr_ok.status == 0 && sup_x < 100.0 && tr_div.status == 4;
        report(9, ok,
               fmt("T_bar = 0.22: bounded over 60 s (status %d, sup ||x|| = %.2f); "
                   "T_bar = 2.2: divergence status %d (= 4) at t = %.1f",
                   tr_ok.status, sup_x, tr_div.status, tr_div.t.empty() ? 0.0 : tr_div.t.back()));
    }

    // criterion 10: kernel optimization strictly improves the pendulum cost
    {
        const bool ok = d_pend_opt.opt_improved && d_pend_opt.J_opt < d_pend_opt.J_baseline;
        report(10, ok,
               fmt("J_baseline = %.3f, J_opt = %.3f (strict improvement required; "
                   "reference pair for qualitative comparison: 13.8 / 16.1)",
                   d_pend_opt.J_baseline, d_pend_opt.J_opt));
    }

    std::printf("%d/10 criteria passed\n", 10 - g_failures);
    return g_failures;
}
