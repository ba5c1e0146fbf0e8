#pragma once

#include "mfo/timefun.hpp"

#include <string>

namespace mfo {

/// Plant x' = A(t)x + B(t)u + E(t)d, scalar output y = C(t)x.
struct LtvPlant {
    int n = 0;  // state dimension
    int m = 0;  // input dimension
    int p = 0;  // disturbance dimension
    MatrixSignal A;
    MatrixSignal B;
    MatrixSignal C;
    MatrixSignal E;

    void validate() const {
        if (A.rows() != n || A.cols() != n || B.rows() != n || B.cols() != m || C.rows() != 1 ||
            C.cols() != n || E.rows() != n || E.cols() != p)
            throw Error("inconsistent plant dimensions");
    }
};

namespace detail {

// N^k C and its time derivatives:
//   N^0 C = C,  N^k C = d/dt N^{k-1}C + (N^{k-1}C) A
// nc_row(k, t, der) returns d^der/dt^der [N^k C](t), a 1xn row.
inline Matrix nc_row(const LtvPlant& plant, int k, double t, int der) {
    if (k == 0) return plant.C.eval(t, der);
    Matrix r = nc_row(plant, k - 1, t, der + 1);
    for (int i = 0; i <= der; ++i)
        r += binomial(der, i) * nc_row(plant, k - 1, t, i) * plant.A.eval(t, der - i);
    return r;
}

inline Matrix obs_matrix_der(const LtvPlant& plant, double t, int der) {
    Matrix O(plant.n, plant.n);
    for (int k = 0; k < plant.n; ++k) O.row(k) = nc_row(plant, k, t, der);
    return O;
}

// d^der/dt^der [O^{-1}] via the Leibniz recursion on O^{-1} O = I.
inline Matrix obs_inv_der(const LtvPlant& plant, double t, int der) {
    const Matrix O = obs_matrix_der(plant, t, 0);
    Eigen::FullPivLU<Matrix> lu(O);
    if (!lu.isInvertible())
        throw Error("observability degeneracy at t=" + std::to_string(t));
    if (der == 0) return lu.inverse();
    Matrix acc = Matrix::Zero(plant.n, plant.n);
    for (int i = 0; i < der; ++i)
        acc += binomial(der, i) * obs_inv_der(plant, t, i) * obs_matrix_der(plant, t, der - i);
    return -acc * lu.inverse();
}

inline Matrix q_der(const LtvPlant& plant, double t, int der) {
    return obs_inv_der(plant, t, der).col(plant.n - 1);
}

// K^k q and derivatives:  K^0 q = q,  K^k q = -d/dt K^{k-1}q + A (K^{k-1}q)
inline Matrix kq(const LtvPlant& plant, int k, double t, int der) {
    if (k == 0) return q_der(plant, t, der);
    Matrix r = -kq(plant, k - 1, t, der + 1);
    for (int i = 0; i <= der; ++i)
        r += binomial(der, i) * plant.A.eval(t, der - i) * kq(plant, k - 1, t, i);
    return r;
}

// P = [q | Kq | ... | K^{n-1}q] J_n ; the exchange matrix reverses column order.
inline Matrix p_der(const LtvPlant& plant, double t, int der) {
    Matrix P(plant.n, plant.n);
    for (int k = 0; k < plant.n; ++k) P.col(plant.n - 1 - k) = kq(plant, k, t, der);
    return P;
}

inline Matrix p_inv_der(const LtvPlant& plant, double t, int der) {
    const Matrix P = p_der(plant, t, 0);
    Eigen::FullPivLU<Matrix> lu(P);
    if (!lu.isInvertible())
        throw Error("observability degeneracy at t=" + std::to_string(t));
    if (der == 0) return lu.inverse();
    Matrix acc = Matrix::Zero(plant.n, plant.n);
    for (int i = 0; i < der; ++i)
        acc += binomial(der, i) * p_inv_der(plant, t, i) * p_der(plant, t, der - i);
    return -acc * lu.inverse();
}

// d^der [A P - P'], the bracket appearing in A_o = P^{-1}(AP - P').
inline Matrix ap_minus_pdot_der(const LtvPlant& plant, double t, int der) {
    Matrix r = -p_der(plant, t, der + 1);
    for (int i = 0; i <= der; ++i)
        r += binomial(der, i) * plant.A.eval(t, der - i) * p_der(plant, t, i);
    return r;
}

inline Matrix a_o_der(const LtvPlant& plant, double t, int der) {
    Matrix r = Matrix::Zero(plant.n, plant.n);
    for (int i = 0; i <= der; ++i)
        r += binomial(der, i) * p_inv_der(plant, t, i) * ap_minus_pdot_der(plant, t, der - i);
    return r;
}

}  // namespace detail

/// Observability matrix of the recursion rows N^0 C ... N^{n-1} C at time t.
inline Matrix observability_matrix(const LtvPlant& plant, double t) {
    return detail::obs_matrix_der(plant, t, 0);
}

struct ObservabilityReport {
    double delta_min = 0.0;  // min over grid of |det O(t)|
    double t_at_min = 0.0;
    double threshold = 1e-8;
    bool ok = false;
};

inline ObservabilityReport strong_observability_check(const LtvPlant& plant, const GridSpec& grid,
                                                      double threshold = 1e-8) {
    plant.validate();
    ObservabilityReport rep;
    rep.threshold = threshold;
    bool first = true;
    for (double t : grid.points()) {
        const double det = std::abs(observability_matrix(plant, t).determinant());
        if (first || det < rep.delta_min) {
            rep.delta_min = det;
            rep.t_at_min = t;
            first = false;
        }
    }
    rep.ok = rep.delta_min > threshold;
    return rep;
}

/// Companion-form data of the transformed plant: z = P^{-1} x with
///   z' = A_o(t) z + B_o(t) u + E_o(t) d,  y = z_1,
/// A_o companion-structured with first column -a(t), a = [a_{n-1},...,a_0]^T.
struct OcfData {
    int n = 0;
    int m = 0;
    int p = 0;
    MatrixSignal P;
    MatrixSignal P_inv;
    MatrixSignal a;    // n x 1, ordered [a_{n-1},...,a_0]^T
    MatrixSignal B_o;  // n x m
    MatrixSignal E_o;  // n x p
    double delta_min = 0.0;
};

inline OcfData to_ocf(const LtvPlant& plant, const GridSpec& grid, double threshold = 1e-8) {
    plant.validate();
    const ObservabilityReport rep = strong_observability_check(plant, grid, threshold);
    if (!rep.ok)
        throw Error("observability degeneracy at t=" + std::to_string(rep.t_at_min) +
                    " (|det O|=" + std::to_string(rep.delta_min) + ")");

    // The Pdot entering a(t) comes from one extra derivative order of the
    // K^k q columns, not from differencing P numerically.
    const LtvPlant pl = plant;  // captured by value; MatrixSignal copies are cheap
    const int order_cap = 6;
    OcfData ocf;
    ocf.n = plant.n;
    ocf.m = plant.m;
    ocf.p = plant.p;
    ocf.delta_min = rep.delta_min;
    ocf.P = MatrixSignal(
        plant.n, plant.n, [pl](double t, int der) { return detail::p_der(pl, t, der); },
        order_cap);
    ocf.P_inv = MatrixSignal(
        plant.n, plant.n, [pl](double t, int der) { return detail::p_inv_der(pl, t, der); },
        order_cap);
    ocf.a = MatrixSignal(
        plant.n, 1,
        [pl](double t, int der) -> Matrix { return -detail::a_o_der(pl, t, der).col(0); },
        order_cap);
    ocf.B_o = MatrixSignal(
        plant.n, plant.m,
        [pl](double t, int der) {
            Matrix r = Matrix::Zero(pl.n, pl.m);
            for (int i = 0; i <= der; ++i)
                r += binomial(der, i) * detail::p_inv_der(pl, t, i) * pl.B.eval(t, der - i);
            return r;
        },
        order_cap);
    ocf.E_o = MatrixSignal(
        plant.n, plant.p,
        [pl](double t, int der) {
            Matrix r = Matrix::Zero(pl.n, pl.p);
            for (int i = 0; i <= der; ++i)
                r += binomial(der, i) * detail::p_inv_der(pl, t, i) * pl.E.eval(t, der - i);
            return r;
        },
        order_cap);
    return ocf;
}

/// Companion matrix rebuilt from a(t); used for residual checks.
inline Matrix companion_from_a(const Vector& a) {
    const int n = static_cast<int>(a.size());
    Matrix Ao = Matrix::Zero(n, n);
    Ao.col(0) = -a;
    for (int i = 0; i + 1 < n; ++i) Ao(i, i + 1) = 1.0;
    return Ao;
}

}  // namespace mfo
