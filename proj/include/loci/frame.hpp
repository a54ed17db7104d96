#pragma once

#include "loci/types.hpp"

namespace loci {

/// sigma((h_a, v_a), (h_b, v_b)) = <h_a, v_b> - <v_a, h_b>.
double symplectic_form(const Vec& a, const Vec& b);

/// Max |sigma(c_i, c_j)| over column pairs of a 2n x k matrix.
double isotropy_residual(const Mat& columns);

/// 2n x n frame spanning an isotropic subspace, stacked as (Hblock; Vblock).
struct LagrangianFrame {
  Mat columns;
  double isotropy = 0.0;

  LagrangianFrame() = default;
  explicit LagrangianFrame(Mat c);

  int n() const { return static_cast<int>(columns.cols()); }
  auto hblock() const { return columns.topRows(columns.cols()); }
  auto vblock() const { return columns.bottomRows(columns.cols()); }
};

LagrangianFrame vertical_frame(int n);
LagrangianFrame horizontal_frame(int n);

/// Smallest singular value of a square matrix.
double smallest_singular_value(const Mat& m);

/// Orthonormal basis of the column span (thin Householder QR, sign-fixed so
/// that R has a non-negative diagonal).
Mat orthonormal_columns(const Mat& m);

}  // namespace loci
