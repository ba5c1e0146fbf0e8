#pragma once

#include "mfo/common.hpp"

#include <functional>
#include <memory>
#include <utility>
#include <vector>

namespace mfo {

/// Uniform evaluation grid [t_start, t_end] with the given step.
struct GridSpec {
    double t_start = 0.0;
    double t_end = 0.0;
    double step = 0.0;

    void validate() const {
        if (!(step > 0.0) || !(t_end > t_start)) throw Error("empty grid: invalid GridSpec");
    }

    std::vector<double> points() const {
        validate();
        std::vector<double> ts;
        const int n = static_cast<int>(std::floor((t_end - t_start) / step + 0.5));
        ts.reserve(static_cast<std::size_t>(n) + 1);
        for (int i = 0; i <= n; ++i) ts.push_back(t_start + step * i);
        if (ts.back() < t_end - 1e-12) ts.push_back(t_end);
        return ts;
    }

    GridSpec refined(int factor) const { return {t_start, t_end, step / factor}; }
};

/// Time-varying matrix-valued function with derivative access.
///
/// The evaluator supplies analytic derivatives up to max_analytic_order;
/// higher orders fall back to central finite differences with step fd_step.
/// Immutable after construction, safe for concurrent evaluation.
class MatrixSignal {
  public:
    using Evaluator = std::function<Matrix(double t, int order)>;

    MatrixSignal() = default;

    MatrixSignal(int rows, int cols, Evaluator evaluator, int max_analytic_order = 0,
                 double fd_step = 1e-4)
        : rows_(rows),
          cols_(cols),
          eval_(std::make_shared<Evaluator>(std::move(evaluator))),
          max_analytic_order_(max_analytic_order),
          fd_step_(fd_step) {}

    static MatrixSignal constant(const Matrix& m) {
        const int r = static_cast<int>(m.rows());
        const int c = static_cast<int>(m.cols());
        return MatrixSignal(
            r, c,
            [m, r, c](double, int order) -> Matrix {
                return order == 0 ? m : Matrix::Zero(r, c);
            },
            1000);
    }

    static MatrixSignal zero(int rows, int cols) { return constant(Matrix::Zero(rows, cols)); }

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    int max_analytic_order() const { return max_analytic_order_; }
    double fd_step() const { return fd_step_; }

    Matrix eval(double t, int order = 0) const {
        Matrix result;
        if (order <= max_analytic_order_) {
            result = (*eval_)(t, order);
        } else {
            // central difference on the previous order, applied recursively
            const Matrix hi = eval(t + fd_step_, order - 1);
            const Matrix lo = eval(t - fd_step_, order - 1);
            result = (hi - lo) / (2.0 * fd_step_);
        }
        if (!is_finite(result))
            throw Error("signal evaluation failure at t=" + std::to_string(t) +
                        " order=" + std::to_string(order));
        return result;
    }

    /// Grid maximum of the spectral norm of the order-th derivative.
    /// A lower bound of the true sup norm, refined by the grid step.
    double sup_norm(const GridSpec& grid, int order = 0) const {
        double best = 0.0;
        for (double t : grid.points()) best = std::max(best, spectral_norm(eval(t, order)));
        return best;
    }

  private:
    int rows_ = 0;
    int cols_ = 0;
    std::shared_ptr<Evaluator> eval_;
    int max_analytic_order_ = 0;
    double fd_step_ = 1e-4;
};

}  // namespace mfo
