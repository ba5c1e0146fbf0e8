#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace mfo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

/// Error raised by library operations; the message starts with a stable
/// category string (e.g. "signal evaluation failure") followed by context.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Largest singular value; the matrix norm used throughout.
inline double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    return m.jacobiSvd().singularValues()(0);
}

inline bool is_finite(const Matrix& m) { return m.allFinite(); }

inline double binomial(int n, int k) {
    double r = 1.0;
    for (int i = 0; i < k; ++i) r = r * static_cast<double>(n - i) / static_cast<double>(i + 1);
    return r;
}

/// (-1)^k without pow().
inline double neg1pow(int k) { return (k % 2 == 0) ? 1.0 : -1.0; }

}  // namespace mfo
