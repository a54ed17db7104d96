#include "loci/frame.hpp"

#include <algorithm>
#include <cmath>

namespace loci {

double symplectic_form(const Vec& a, const Vec& b) {
  if (a.size() != b.size() || a.size() % 2 != 0) throw Error("symplectic_form: dimension mismatch");
  const Eigen::Index n = a.size() / 2;
  return a.head(n).dot(b.tail(n)) - a.tail(n).dot(b.head(n));
}

double isotropy_residual(const Mat& c) {
  const Eigen::Index n = c.rows() / 2;
  // Gram matrix of sigma: H^T V - V^T H.
  const Mat s = c.topRows(n).transpose() * c.bottomRows(n) - c.bottomRows(n).transpose() * c.topRows(n);
  return s.size() == 0 ? 0.0 : s.cwiseAbs().maxCoeff();
}

LagrangianFrame::LagrangianFrame(Mat c) : columns(std::move(c)) {
  if (columns.rows() != 2 * columns.cols()) throw Error("LagrangianFrame: frame must be 2n x n");
  isotropy = isotropy_residual(columns);
}

LagrangianFrame vertical_frame(int n) {
  Mat c = Mat::Zero(2 * n, n);
  c.bottomRows(n).setIdentity();
  return LagrangianFrame(c);
}

LagrangianFrame horizontal_frame(int n) {
  Mat c = Mat::Zero(2 * n, n);
  c.topRows(n).setIdentity();
  return LagrangianFrame(c);
}

double smallest_singular_value(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues().minCoeff();
}

Mat orthonormal_columns(const Mat& m) {
  Eigen::HouseholderQR<Mat> qr(m);
  Mat q = qr.householderQ() * Mat::Identity(m.rows(), m.cols());
  const Mat r = qr.matrixQR().topRows(m.cols()).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace loci
