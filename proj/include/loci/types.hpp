#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace loci {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

/// Base class for every hard error raised by the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Raised when a characteristic cannot be continued to the requested time.
class EscapedError : public Error {
 public:
  EscapedError(const std::string& what, double last_valid_time)
      : Error(what), last_valid_time_(last_valid_time) {}
  double last_valid_time() const { return last_valid_time_; }

 private:
  double last_valid_time_;
};

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

inline bool all_finite(const Mat& m) { return m.allFinite(); }

}  // namespace loci
