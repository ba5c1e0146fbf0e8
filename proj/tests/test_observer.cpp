#include "mfo/mfo.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace mfo;

namespace {

// small dense polynomial helper with exact derivatives
struct Poly {
    std::vector<double> c;  // c[k] t^k

    double eval(double t, int der = 0) const {
        double v = 0.0;
        for (int k = static_cast<int>(c.size()) - 1; k >= 0; --k) {
            if (k < der) break;
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

}  // namespace

TEST_CASE("zero measurements and inputs give a zero estimate") {
    auto ocf = to_ocf(systems::lti_oscillator_plant().pseudo_input_plant(), GridSpec{0, 2, 0.1});
    auto k = UmfKernel::hermite(2, 2.0);
    AlgebraicObserver obs(ocf, k, 1e-2);
    for (int j = 0; j <= 200; ++j) obs.push(j * 1e-2, 0.0, Vector::Zero(2));
    auto est = obs.estimate(2.0);
    CHECK(est.z_hat.norm() == 0.0);
    CHECK(est.x_hat.norm() == 0.0);
    CHECK_FALSE(est.filling);
}

TEST_CASE("estimate guards alignment and initialization") {
    auto ocf = to_ocf(systems::lti_oscillator_plant().pseudo_input_plant(), GridSpec{0, 2, 0.1});
    auto k = UmfKernel::hermite(2, 2.0);
    AlgebraicObserver obs(ocf, k, 1e-2);
    CHECK_THROWS_WITH(obs.estimate(0.0),
                      Catch::Matchers::ContainsSubstring("horizon not initialized"));
    obs.push(0.0, 1.0, Vector::Zero(2));
    CHECK_THROWS_WITH(obs.estimate(0.5),
                      Catch::Matchers::ContainsSubstring("horizon misalignment"));
}

TEST_CASE("continuous-measurement reconstruction is exact up to quadrature error") {
    // disturbance- and noise-free closed loop; residual is O(h^2)
    auto base = systems::tv_pendulum_scenario(0.0);
    base.mode = ObserverMode::Continuous;
    base.t_end = 2.5;
    base.x0 << 0.7, -0.2;
    auto design = prepare(base);

    auto max_ez = [&](double h) {
        auto sc = base;
        sc.T_s = h;
        auto tr = run(sc, design);
        REQUIRE(tr.status == 0);
        double worst = 0.0;
        for (std::size_t i = 0; i < tr.size(); ++i) {
            if (tr.t[i] < sc.kernel_T) continue;
            const Vector ez = design.ocf.P_inv.eval(tr.t[i]) * tr.x[i] - tr.z_hat[i];
            worst = std::max(worst, ez.norm());
        }
        return worst;
    };
    const double e1 = max_ez(1e-3);
    CHECK(e1 <= 1e-4);
    const double e2 = max_ez(5e-4);
    const double ratio = e1 / e2;
    CHECK(ratio > 2.5);
    CHECK(ratio < 6.0);
}

TEST_CASE("estimate depends only on the current horizon window") {
    auto ocf = to_ocf(systems::lti_oscillator_plant().pseudo_input_plant(), GridSpec{0, 2, 0.1});
    auto k = UmfKernel::hermite(2, 2.0);
    const double h = 1e-2;
    auto y = [](double t) { return std::sin(1.3 * t); };
    auto u = [](double t) { return Vector::Constant(2, std::cos(t)).eval(); };

    AlgebraicObserver a(ocf, k, h), b(ocf, k, h);
    for (int j = 0; j <= 400; ++j) a.push(j * h, y(j * h), u(j * h));  // long history
    for (int j = 200; j <= 400; ++j) b.push(j * h, y(j * h), u(j * h));  // window only
    CHECK((a.estimate(4.0).z_hat - b.estimate(4.0).z_hat).norm() < 1e-13);
}

TEST_CASE("differential parameterization instantiates the order-2 pattern") {
    OcfData ocf;
    ocf.n = 2;
    ocf.m = 0;
    ocf.p = 0;
    Vector a(2);
    a << 0.8, -0.3;  // [a1, a0]
    ocf.a = MatrixSignal::constant(a);
    ocf.B_o = MatrixSignal::zero(2, 0);
    ocf.E_o = MatrixSignal::zero(2, 0);
    Vector Y(2);
    Y << 2.0, -1.0;  // [y, y']
    Vector z = diff_param_oracle(ocf, 0.0, Y, {}, {});
    CHECK(z(0) == Catch::Approx(2.0));
    CHECK(z(1) == Catch::Approx(0.8 * 2.0 - 1.0));  // a1 y + y'
}

TEST_CASE("differential parameterization matches simulated trajectories") {
    // randomized coefficient data; z and u polynomial, d solved from the
    // companion dynamics so every signal has exact derivatives
    std::mt19937_64 rng(42);
    int checked = 0;
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + trial % 2;
        const int m = 1 + trial % 2;
        // time variation of the leading coefficient only exercises the n=2
        // pattern; higher orders use constant coefficients
        const bool tv = (n == 2) && (trial % 3 == 0);

        std::vector<Poly> a_poly;
        for (int k = 0; k < n; ++k) a_poly.push_back(random_poly(rng, tv ? 2 : 0, 0.5));
        Matrix Bo = Matrix::Random(n, m);
        Matrix Eo = Matrix::Identity(n, n) + 0.1 * Matrix::Random(n, n);
        const Matrix Einv = Eo.inverse();

        std::vector<Poly> z_poly, u_poly;
        for (int i = 0; i < n; ++i) z_poly.push_back(random_poly(rng, 4, 1.0));
        for (int j = 0; j < m; ++j) u_poly.push_back(random_poly(rng, 3, 1.0));

        // rhs_i = z_i' + a_i z_0 - z_{i+1} - sum_j Bo(i,j) u_j  (companion rows)
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
            for (int i = 0; i < n; ++i) d = d + rhs[static_cast<std::size_t>(i)].scaled(Einv(l, i));
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
                for (int k = 0; k < n; ++k) v(k, 0) = a_poly[static_cast<std::size_t>(k)].eval(t, der);
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

            Vector z_true(n);
            for (int i = 0; i < n; ++i) z_true(i) = z_poly[static_cast<std::size_t>(i)].eval(t);
            INFO("trial " << trial << " t=" << t);
            CHECK((z_param - z_true).norm() <= 1e-6);

            // cross-check against RK4 forward simulation of the companion ODE
            auto f = [&](double s, const Vector& z) -> Vector {
                Vector av(n);
                for (int k = 0; k < n; ++k) av(k) = a_poly[static_cast<std::size_t>(k)].eval(s);
                Vector uu(m), dd(n);
                for (int j = 0; j < m; ++j) uu(j) = u_poly[static_cast<std::size_t>(j)].eval(s);
                for (int l = 0; l < n; ++l) dd(l) = d_poly[static_cast<std::size_t>(l)].eval(s);
                return companion_from_a(av) * z + Bo * uu + Eo * dd;
            };
            Vector z0(n);
            for (int i = 0; i < n; ++i) z0(i) = z_poly[static_cast<std::size_t>(i)].eval(0.0);
            const double h = 1e-3;
            Vector z_sim = z0;
            double s = 0.0;
            while (s < t - h / 2) {
                const Vector k1 = f(s, z_sim);
                const Vector k2 = f(s + h / 2, z_sim + h / 2 * k1);
                const Vector k3 = f(s + h / 2, z_sim + h / 2 * k2);
                const Vector k4 = f(s + h, z_sim + h * k3);
                z_sim += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
                s += h;
            }
            CHECK((z_param - z_sim).norm() <= 1e-6);
            ++checked;
        }
    }
    CHECK(checked == 40);
}

TEST_CASE("L2 error bound composes linearly") {
    auto ocf = to_ocf(systems::tv_pendulum_plant().pseudo_input_plant(), GridSpec{0, 6.3, 0.1});
    auto cs = CoeffSamples::sample(ocf, -1.0, 6.3, 1e-2);
    auto k = UmfKernel::hermite(2, 1.0);
    auto g = compute_gain_table(k, cs, GridSpec{0, 6.3, 0.5}.points(), 1e-2);

    CHECK(error_bound(g, 0.0, 0.0).bound == 0.0);
    auto b1 = error_bound(g, 1.0, 0.0);
    auto b2 = error_bound(g, 2.0, 0.0);
    CHECK(b2.bound == Catch::Approx(2.0 * b1.bound).margin(1e-14));
    auto bn = error_bound(g, 0.0, 1.0);
    CHECK(bn.bound == Catch::Approx(g.l2_bar_a).margin(1e-14));
    auto bx = error_bound(g, 1.0, 1.0, 0.5525);
    CHECK(bx.bound_x == Catch::Approx(0.5525 * bx.bound).margin(1e-12));
    auto bt = error_bound_at(g, 0.0, 1.0, g.t_grid.front());
    CHECK(bt.bound == Catch::Approx(g.l2_a.front()).margin(1e-14));
}
