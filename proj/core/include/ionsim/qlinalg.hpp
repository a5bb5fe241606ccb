#pragma once

#include <Eigen/Dense>
#include <complex>

// Fixed-size linear algebra for one optical qubit ({|D>, |S>}) coupled to a
// three-level truncation of one motional mode. Basis order throughout the
// library is |D0, D1, D2, S0, S1, S2>, i.e. index = 3*atomic + n with D = 0,
// S = 1. |D> is the sigma_z = +1/2 eigenstate.

namespace ionsim {

using cxd = std::complex<double>;
using Mat2 = Eigen::Matrix2cd;
using Mat3 = Eigen::Matrix3cd;
using Mat4 = Eigen::Matrix4cd;
using Mat6 = Eigen::Matrix<cxd, 6, 6>;
using Vec3 = Eigen::Vector3cd;
using Vec4 = Eigen::Vector4cd;
using Vec6 = Eigen::Matrix<cxd, 6, 1>;

inline constexpr int kDim = 6;
inline constexpr int kD0 = 0, kD1 = 1, kD2 = 2, kS0 = 3, kS1 = 4, kS2 = 5;

// the two-qubit computational subspace, in its conventional order
inline constexpr int kComputational[4] = {kD0, kD1, kS0, kS1};

constexpr int state_index(int atomic, int n) { return 3 * atomic + n; }

// Half-spin operators (eigenvalues +-1/2) on {|D>, |S>}; sigma_plus = |D><S|.
Mat2 spin_x();
Mat2 spin_y();
Mat2 spin_z();
Mat2 spin_plus();
Mat2 spin_minus();

// Truncated motional ladder: a|n> = sqrt(n)|n-1>, and a^dag|2> = 0.
Mat3 ladder_a();
Mat3 ladder_adag();
Mat3 number_op();

// exp(i*eta*(a + a^dag)) in the truncated space; carries the laser's
// first-order sideband coupling i*eta plus the higher-order corrections.
Mat3 displacement_coupling(double eta);

// Tensor products in the declared basis order (atomic index major).
Mat6 kron(const Mat2& atomic, const Mat3& motional);
Mat4 kron22(const Mat2& a, const Mat2& b);

// Fluorescence projectors: S states scatter during detection, D states are
// shelved and stay dark.
Mat6 proj_S();
Mat6 proj_D();

// exp(-i*H*t) via Hermitian eigendecomposition, so the result is unitary up
// to rounding. Throws std::invalid_argument if H is not Hermitian (checked
// relative to the matrix scale).
Mat6 expm_hermitian(const Mat6& H, double t);
Mat3 expm_hermitian3(const Mat3& H, double t);

struct ComputationalBlock {
  Mat4 rho;            // rows/cols {D0, D1, S0, S1}
  double leaked = 0.0; // population outside the block, 1 - tr(rho) before renormalization
  bool renormalized = false;
};

// Extract the two-qubit block of a 6x6 density matrix. Renormalization is
// opt-in; callers that fold leakage into an error figure want the raw block.
ComputationalBlock project_computational(const Mat6& rho, bool renormalize = false);

} // namespace ionsim
