#pragma once

// Dormand-Prince 5(4) integrator with the classical fourth-order continuous
// extension. Works forward or backward in time.

#include <array>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "loci/types.hpp"

namespace loci::ode {

using Rhs = std::function<void(double t, const Vec& y, Vec& dydt)>;
/// Returns false when the state has left the admissible region.
using Guard = std::function<bool(double t, const Vec& y)>;

struct Options {
  double rtol = 1e-10;
  double atol = 1e-10;
  double h_init = 0.0;  // 0 = automatic
  double h_max = std::numeric_limits<double>::infinity();
  long max_steps = 2'000'000;
  double overflow = 1e12;  // max |y_i| before declaring blow-up
};

enum class Status { Complete, StepUnderflow, Overflow, NonFinite, TooManySteps, GuardStopped };

std::string to_string(Status s);

struct DenseSegment {
  double t0 = 0.0;
  double h = 0.0;
  std::array<Vec, 5> c;
};

/// Piecewise polynomial interpolant over the accepted steps.
class DenseOutput {
 public:
  void push(DenseSegment seg) { segments_.push_back(std::move(seg)); }
  bool empty() const { return segments_.empty(); }
  double t_begin() const;
  double t_end() const;
  /// Valid for t between t_begin and t_end (either orientation).
  Vec eval(double t) const;
  const std::vector<DenseSegment>& segments() const { return segments_; }

 private:
  std::size_t locate(double t) const;
  std::vector<DenseSegment> segments_;
};

struct Result {
  Status status = Status::Complete;
  double t_last = 0.0;
  Vec y_last;
  std::vector<double> times;  // accepted step endpoints, times[0] = t0
  std::vector<Vec> states;
  DenseOutput dense;
  long accepted = 0;
  long rejected = 0;
};

Result integrate(const Rhs& rhs, double t0, const Vec& y0, double t1, const Options& opt,
                 const Guard& guard = {});

}  // namespace loci::ode
