#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace kiras {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using Rng = std::mt19937_64;

// Bad caller input (dimension mismatch, malformed file, invalid config).
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// API misuse (e.g. backward without a cached forward).
struct UsageError : std::logic_error {
  using std::logic_error::logic_error;
};

// NaN/Inf detected where training must abort.
struct NumericalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// I/O and format failures (checkpoints, configs, scripts).
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline bool all_finite(const Vec& v) { return v.allFinite(); }
inline bool all_finite(const Mat& m) { return m.allFinite(); }

inline double uniform(Rng& rng, double lo, double hi) {
  std::uniform_real_distribution<double> d(lo, hi);
  return d(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
  std::normal_distribution<double> d(mean, stddev);
  return d(rng);
}

inline std::string rng_to_string(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

inline void rng_from_string(Rng& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (is.fail()) throw IoError("corrupt rng state");
}

// Welford running mean/variance, used to normalize imitation frames.
// Until enough samples arrive the untouched dimensions normalize as
// mean 0 / std 1; can be frozen (updates become no-ops).
class RunningStat {
 public:
  RunningStat() = default;
  explicit RunningStat(int dim)
      : count_(0.0), mean_(Vec::Zero(dim)), m2_(Vec::Zero(dim)) {}

  void update(const Vec& x) {
    if (frozen_) return;
    count_ += 1.0;
    Vec delta = x - mean_;
    mean_ += delta / count_;
    m2_ += delta.cwiseProduct(x - mean_);
  }

  Vec normalize(const Vec& x) const {
    if (count_ < 2.0) return x - mean_;
    return (x - mean_).cwiseQuotient(stddev().cwiseMax(1e-6));
  }

  Vec stddev() const {
    if (count_ < 2.0) return Vec::Ones(mean_.size());
    return (m2_ / count_).cwiseSqrt();
  }

  const Vec& mean() const { return mean_; }
  const Vec& m2() const { return m2_; }
  double count() const { return count_; }
  bool frozen() const { return frozen_; }
  int dim() const { return static_cast<int>(mean_.size()); }

  void freeze() { frozen_ = true; }
  void restore(const Vec& mean, const Vec& m2, double count, bool frozen) {
    mean_ = mean;
    m2_ = m2;
    count_ = count;
    frozen_ = frozen;
  }

  // Grows the tracked vector by one dimension at `index` (mean 0, var count)
  // so previously seen data keeps normalizing identically.
  void insert_dim(int index) {
    mean_ = inserted(mean_, index, 0.0);
    m2_ = inserted(m2_, index, count_);
  }

  static Vec inserted(const Vec& v, int index, double value) {
    Vec out(v.size() + 1);
    out.head(index) = v.head(index);
    out(index) = value;
    out.tail(v.size() - index) = v.tail(v.size() - index);
    return out;
  }

 private:
  double count_ = 0.0;
  Vec mean_;
  Vec m2_;
  bool frozen_ = false;
};

}  // namespace kiras
