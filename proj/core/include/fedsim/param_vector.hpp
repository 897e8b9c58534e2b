#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace fedsim {

/// Dense model parameter (or gradient) vector of fixed dimension d >= 1.
///
/// Every operation that writes entries checks that they stay finite; a NaN or
/// infinity is reported as an Error with code kNonFinite.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t dim, double fill = 0.0);
  explicit ParamVector(std::vector<double> values);
  ParamVector(std::initializer_list<double> values);

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator[](std::size_t i) const noexcept { return values_[i]; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }

  std::span<const double> span() const noexcept { return values_; }
  std::span<double> span() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool all_finite() const noexcept;

  /// this += alpha * x. Throws on length mismatch or a non-finite result.
  void axpy_inplace(double alpha, const ParamVector& x);
  void scale_inplace(double alpha);
  void fill(double value);

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<double> values_;
};

/// Returns y + alpha * x.
ParamVector vec_axpy(double alpha, const ParamVector& x, const ParamVector& y);

/// Squared Euclidean norm.
double vec_norm_sq(const ParamVector& x);

double vec_dot(const ParamVector& x, const ParamVector& y);

/// Throws kNonFinite naming `what` if any entry is NaN or infinite.
void require_finite(const ParamVector& x, const char* what);

}  // namespace fedsim
