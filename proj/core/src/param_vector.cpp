#include "fedsim/param_vector.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fedsim/error.hpp"

namespace fedsim {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kLengthMismatch: return "length_mismatch";
    case ErrorCode::kNonFinite: return "non_finite";
    case ErrorCode::kOutOfRange: return "out_of_range";
    case ErrorCode::kDisconnected: return "disconnected";
    case ErrorCode::kInfeasible: return "infeasible";
    case ErrorCode::kBudgetExhausted: return "budget_exhausted";
    case ErrorCode::kNoParticipants: return "no_participants";
    case ErrorCode::kDivergence: return "divergence";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kIo: return "io";
  }
  return "unknown";
}

namespace {

void require_same_length(const ParamVector& x, const ParamVector& y) {
  if (x.size() != y.size()) {
    throw Error(ErrorCode::kLengthMismatch,
                "vector length mismatch: " + std::to_string(x.size()) + " vs " +
                    std::to_string(y.size()));
  }
}

}  // namespace

ParamVector::ParamVector(std::size_t dim, double fill) : values_(dim, fill) {
  if (!std::isfinite(fill)) {
    throw Error(ErrorCode::kNonFinite, "ParamVector fill value is not finite");
  }
}

ParamVector::ParamVector(std::vector<double> values) : values_(std::move(values)) {
  require_finite(*this, "ParamVector");
}

ParamVector::ParamVector(std::initializer_list<double> values) : values_(values) {
  require_finite(*this, "ParamVector");
}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void ParamVector::axpy_inplace(double alpha, const ParamVector& x) {
  require_same_length(*this, x);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    values_[i] += alpha * x.values_[i];
  }
  require_finite(*this, "axpy result");
}

void ParamVector::scale_inplace(double alpha) {
  for (double& v : values_) v *= alpha;
  require_finite(*this, "scale result");
}

void ParamVector::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

ParamVector vec_axpy(double alpha, const ParamVector& x, const ParamVector& y) {
  ParamVector out = y;
  out.axpy_inplace(alpha, x);
  return out;
}

double vec_norm_sq(const ParamVector& x) {
  require_finite(x, "vec_norm_sq input");
  double sum = 0.0;
  for (double v : x.span()) sum += v * v;
  return sum;
}

double vec_dot(const ParamVector& x, const ParamVector& y) {
  require_same_length(x, y);
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += x[i] * y[i];
  return sum;
}

void require_finite(const ParamVector& x, const char* what) {
  if (!x.all_finite()) {
    throw Error(ErrorCode::kNonFinite, std::string(what) + " has a non-finite entry");
  }
}

}  // namespace fedsim
