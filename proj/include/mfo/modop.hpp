#pragma once

#include "mfo/common.hpp"

#include <deque>
#include <vector>

namespace mfo {

enum class FillPolicy { PadWithFirst, ZeroPad };
enum class Quadrature { Trapezoid, Simpson };

/// Fixed-rate ring buffer spanning the moving horizon [t-T, t].
/// T must be an integer multiple of the sample step h.
class HorizonBuffer {
  public:
    HorizonBuffer() = default;

    HorizonBuffer(int dim, double T, double h, FillPolicy policy = FillPolicy::PadWithFirst)
        : dim_(dim), T_(T), h_(h), policy_(policy), zero_(Vector::Zero(dim)) {
        if (!(T > 0.0) || !(h > 0.0)) throw Error("invalid horizon parameters");
        const double ratio = T / h;
        if (std::abs(ratio - std::floor(ratio + 0.5)) > 1e-6)
            throw Error("horizon not an integer multiple of the sample step");
        capacity_ = static_cast<int>(std::floor(ratio + 0.5)) + 1;
    }

    int dim() const { return dim_; }
    int capacity() const { return capacity_; }
    int size() const { return static_cast<int>(ring_.size()); }
    bool full() const { return size() == capacity_; }
    bool empty() const { return ring_.empty(); }
    double horizon() const { return T_; }
    double step() const { return h_; }
    double latest_time() const { return last_t_; }
    FillPolicy policy() const { return policy_; }

    void push(double t, const Vector& v) {
        if (v.size() != dim_) throw Error("sample dimension mismatch");
        if (!ring_.empty() && std::abs(t - (last_t_ + h_)) > 1e-9)
            throw Error("sampling misalignment at t=" + std::to_string(t));
        ring_.push_back(v);
        if (size() > capacity_) ring_.pop_front();
        last_t_ = t;
    }

    /// Sample at slot j, j=0 oldest .. capacity-1 newest; missing slots are
    /// resolved by the fill policy.
    const Vector& at_slot(int j) const {
        if (empty()) throw Error("horizon not initialized");
        const int missing = capacity_ - size();
        if (j >= missing) return ring_[static_cast<std::size_t>(j - missing)];
        return policy_ == FillPolicy::PadWithFirst ? ring_.front() : zero_;
    }

    /// Composite quadrature of kernel(tau, sigma) * sample over the horizon,
    /// with tau = t_now - T + sigma and sigma = j*h on the slot grid.
    /// KernelRow: (double tau, double sigma) -> Matrix (k x dim).
    template <class KernelRow>
    Vector modulate(KernelRow&& kernel_row, double t_now,
                    Quadrature quad = Quadrature::Trapezoid) const {
        if (empty()) throw Error("horizon not initialized");
        if (quad == Quadrature::Simpson && capacity_ % 2 == 0)
            throw Error("Simpson quadrature needs an odd tap count");
        Vector acc;
        bool first = true;
        for (int j = 0; j < capacity_; ++j) {
            const double sigma = j * h_;
            const Matrix k = kernel_row(t_now - T_ + sigma, sigma);
            const Vector term = k * at_slot(j);
            const double w = weight(j, quad);
            if (first) {
                acc = w * term;
                first = false;
            } else {
                acc += w * term;
            }
        }
        return acc;
    }

    double weight(int j, Quadrature quad) const {
        const int last = capacity_ - 1;
        if (quad == Quadrature::Simpson) {
            if (j == 0 || j == last) return h_ / 3.0;
            return (j % 2 == 1) ? 4.0 * h_ / 3.0 : 2.0 * h_ / 3.0;
        }
        return (j == 0 || j == last) ? h_ / 2.0 : h_;
    }

  private:
    int dim_ = 0;
    double T_ = 0.0;
    double h_ = 0.0;
    FillPolicy policy_ = FillPolicy::PadWithFirst;
    int capacity_ = 0;
    Vector zero_;
    std::deque<Vector> ring_;
    double last_t_ = 0.0;
};

}  // namespace mfo
