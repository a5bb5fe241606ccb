#include "ionsim/qlinalg.hpp"

#include <stdexcept>

namespace ionsim {

namespace {
constexpr cxd kI{0.0, 1.0};
}

Mat2 spin_x() {
  Mat2 m;
  m << 0.0, 0.5, 0.5, 0.0;
  return m;
}

Mat2 spin_y() {
  Mat2 m;
  m << 0.0, -0.5 * kI, 0.5 * kI, 0.0;
  return m;
}

Mat2 spin_z() {
  Mat2 m;
  m << 0.5, 0.0, 0.0, -0.5;
  return m;
}

Mat2 spin_plus() {
  Mat2 m = Mat2::Zero();
  m(0, 1) = 1.0;
  return m;
}

Mat2 spin_minus() { return spin_plus().adjoint(); }

Mat3 ladder_a() {
  Mat3 m = Mat3::Zero();
  m(0, 1) = 1.0;
  m(1, 2) = std::sqrt(2.0);
  return m;
}

Mat3 ladder_adag() { return ladder_a().adjoint(); }

Mat3 number_op() {
  Mat3 m = Mat3::Zero();
  m(1, 1) = 1.0;
  m(2, 2) = 2.0;
  return m;
}

Mat3 displacement_coupling(double eta) {
  Mat3 gen = eta * (ladder_a() + ladder_adag());
  return expm_hermitian3(gen, -1.0); // exp(+i*eta*(a+adag))
}

Mat6 kron(const Mat2& atomic, const Mat3& motional) {
  Mat6 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      out.block<3, 3>(3 * i, 3 * j) = atomic(i, j) * motional;
  return out;
}

Mat4 kron22(const Mat2& a, const Mat2& b) {
  Mat4 out;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      out.block<2, 2>(2 * i, 2 * j) = a(i, j) * b;
  return out;
}

Mat6 proj_S() {
  Mat6 p = Mat6::Zero();
  p(kS0, kS0) = p(kS1, kS1) = p(kS2, kS2) = 1.0;
  return p;
}

Mat6 proj_D() { return Mat6::Identity() - proj_S(); }

namespace {

template <typename M>
M expm_hermitian_impl(const M& H, double t) {
  const double scale = std::max(1.0, H.cwiseAbs().maxCoeff());
  if (((H - H.adjoint()).cwiseAbs().maxCoeff()) > 1e-12 * scale)
    throw std::invalid_argument("expm_hermitian: matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<M> es(H);
  const auto& V = es.eigenvectors();
  const auto& w = es.eigenvalues();
  M out = M::Zero();
  for (int k = 0; k < H.rows(); ++k)
    out += std::exp(cxd(0.0, -w(k) * t)) * (V.col(k) * V.col(k).adjoint());
  return out;
}

} // namespace

Mat6 expm_hermitian(const Mat6& H, double t) { return expm_hermitian_impl(H, t); }
Mat3 expm_hermitian3(const Mat3& H, double t) { return expm_hermitian_impl(H, t); }

ComputationalBlock project_computational(const Mat6& rho, bool renormalize) {
  ComputationalBlock out;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      out.rho(i, j) = rho(kComputational[i], kComputational[j]);
  out.leaked = 1.0 - out.rho.trace().real();
  if (renormalize && out.rho.trace().real() > 0.0) {
    out.rho /= out.rho.trace().real();
    out.renormalized = true;
  }
  return out;
}

} // namespace ionsim
