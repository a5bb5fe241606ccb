#include "ionsim/tomography.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>

namespace ionsim {

namespace {

constexpr double kPi = 3.14159265358979323846;

Vec4 comp_ket(const Vec6& v) {
  Vec4 out;
  for (int k = 0; k < 4; ++k) out(k) = v(kComputational[k]);
  return out;
}

Mat4 comp_op(const Mat6& m) {
  Mat4 out;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) out(r, c) = m(kComputational[r], kComputational[c]);
  return out;
}

const std::array<Mat6, 15>& measurement_ops() {
  static const std::array<Mat6, 15> ops = [] {
    std::array<Mat6, 15> a;
    const auto& basis = measurement_basis();
    for (int j = 0; j < 15; ++j) a[j] = measurement_operator(basis[j]);
    return a;
  }();
  return ops;
}

const std::array<Mat4, 15>& measurement_ops4() {
  static const std::array<Mat4, 15> ops = [] {
    std::array<Mat4, 15> a;
    for (int j = 0; j < 15; ++j) a[j] = comp_op(measurement_ops()[j]);
    return a;
  }();
  return ops;
}

const std::array<Mat4, 16>& prep_projectors() {
  static const std::array<Mat4, 16> projs = [] {
    std::array<Mat4, 16> a;
    for (int i = 0; i < 16; ++i) {
      const Vec4 psi = comp_ket(prep_state(i + 1));
      a[i] = psi * psi.adjoint();
    }
    return a;
  }();
  return projs;
}

// ----- maximum likelihood on the positive cone -----------------------------
//
// Shared solver for state and process estimation. The unknown is X =
// T^dag T / Tr(T^dag T) with T lower triangular (d*d real parameters), the
// data are cells with model probability p_k = sum_ab X_ab D^k_ab for a
// Hermitian design D^k, observed as k_k successes out of n_k draws. Cells
// with n_k = 0 carry an exact probability and enter with unit weight. The
// likelihood is normalized by the total weight so the convergence test is
// scale free, and a quadratic pin on Tr(T^dag T) = 1 removes the direction
// the normalization makes flat.

Eigen::MatrixXcd unpack_T(const double* x, int d) {
  Eigen::MatrixXcd T = Eigen::MatrixXcd::Zero(d, d);
  int k = 0;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c <= r; ++c) {
      if (c == r) {
        T(r, c) = x[k++];
      } else {
        T(r, c) = cxd(x[k], x[k + 1]);
        k += 2;
      }
    }
  return T;
}

void pack_T(const Eigen::MatrixXcd& T, double* x) {
  const int d = static_cast<int>(T.rows());
  int k = 0;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c <= r; ++c) {
      if (c == r) {
        x[k++] = T(r, c).real();
      } else {
        x[k] = T(r, c).real();
        x[k + 1] = T(r, c).imag();
        k += 2;
      }
    }
}

// Lower-triangular T with T^dag T = X, for a positive definite X: the
// Cholesky factor of the index-reversed matrix, reversed back.
Eigen::MatrixXcd lower_factor(const Eigen::MatrixXcd& X) {
  const Eigen::MatrixXcd Xr = X.reverse();
  Eigen::LLT<Eigen::MatrixXcd> llt(Xr);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("mle: initial matrix is not positive definite");
  const Eigen::MatrixXcd U = llt.matrixU();
  return U.reverse();
}

// Floor the spectrum at zero, blend in a small multiple of the identity so
// the Cholesky seed is strictly positive, and renormalize the trace.
Eigen::MatrixXcd clip_psd(const Eigen::MatrixXcd& h, double eps) {
  const Eigen::MatrixXcd H = 0.5 * (h + h.adjoint());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(H);
  const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0);
  Eigen::MatrixXcd X = es.eigenvectors() * ev.cast<cxd>().asDiagonal() *
                       es.eigenvectors().adjoint();
  X += eps * Eigen::MatrixXcd::Identity(X.rows(), X.cols());
  return X / X.trace().real();
}

class PsdMleFunction final : public ceres::FirstOrderFunction {
 public:
  PsdMleFunction(int d, const std::vector<Eigen::MatrixXcd>* design,
                 std::vector<double> shots, std::vector<double> succ)
      : d_(d), design_(design), shots_(std::move(shots)), succ_(std::move(succ)) {
    norm_ = 0.0;
    for (double n : shots_) norm_ += std::max(n, 1.0);
  }

  int NumParameters() const override { return d_ * d_; }

  bool Evaluate(const double* x, double* cost, double* grad) const override {
    const Eigen::MatrixXcd T = unpack_T(x, d_);
    const Eigen::MatrixXcd S = T.adjoint() * T;
    const double s = S.trace().real();
    if (!(s > 0.0)) return false;
    const Eigen::MatrixXcd X = S / s;
    // The log of the success probability is modified in two narrow zones so
    // that the cost stays defined and C1 for any iterate the line search
    // visits. Below a tiny floor it continues linearly (the cone keeps cell
    // values nonnegative, this is rounding protection). Near 1 its slope
    // tapers to zero so the term peaks exactly at p = 1 and bends down
    // beyond: cells with every shot bright lack the (1 - p) log term, and
    // under the plain likelihood a non-trace-preserving iterate could buy
    // unbounded credit by pushing such a cell past 1. Cost and slope always
    // come from the same expression; any mismatch (a hard clamp, say) leaves
    // zones where the promised descent never materializes and the line
    // search stalls.
    constexpr double kFloor = 1e-10;
    constexpr double kCap = 1e-4;
    const auto bright_log = [](double p, double& slope) {
      constexpr double p0 = 1.0 - kCap;
      if (p < kFloor) {
        slope = 1.0 / kFloor;
        return std::log(kFloor) + (p - kFloor) / kFloor;
      }
      if (p <= p0) {
        slope = 1.0 / p;
        return std::log(p);
      }
      const double t = (p - p0) / kCap;
      slope = (1.0 - t) / p0;
      return std::log(p0) + (kCap / p0) * (t - 0.5 * t * t);
    };
    const auto dark_log = [](double q, double& slope) {
      if (q >= kFloor) {
        slope = 1.0 / q;
        return std::log(q);
      }
      slope = 1.0 / kFloor;
      return std::log(kFloor) + (q - kFloor) / kFloor;
    };
    double nll = 0.0;
    Eigen::MatrixXcd W = Eigen::MatrixXcd::Zero(d_, d_);
    double w0 = 0.0;
    for (std::size_t k = 0; k < design_->size(); ++k) {
      const double p = (X.array() * (*design_)[k].array()).sum().real();
      const double n = shots_[k] > 0.0 ? shots_[k] : 1.0;
      const double hits = succ_[k];
      double dlo = 0.0, dhi = 0.0;
      const double llo = bright_log(p, dlo);
      const double lhi = dark_log(1.0 - p, dhi);
      nll -= hits * llo + (n - hits) * lhi;
      if (grad) {
        const double fp = -(hits * dlo - (n - hits) * dhi);
        W += fp * (*design_)[k];
        w0 += fp * p;
      }
    }
    const double slack = s - 1.0;
    *cost = nll / norm_ + 0.5 * slack * slack;
    if (grad) {
      Eigen::MatrixXcd M =
          (W - w0 * Eigen::MatrixXcd::Identity(d_, d_)) / (s * norm_);
      M += slack * Eigen::MatrixXcd::Identity(d_, d_);
      const Eigen::MatrixXcd G = T.conjugate() * M;
      int k = 0;
      for (int r = 0; r < d_; ++r)
        for (int c = 0; c <= r; ++c) {
          if (c == r) {
            grad[k++] = 2.0 * G(r, c).real();
          } else {
            grad[k] = 2.0 * G(r, c).real();
            grad[k + 1] = -2.0 * G(r, c).imag();
            k += 2;
          }
        }
    }
    return true;
  }

 private:
  int d_;
  const std::vector<Eigen::MatrixXcd>* design_;
  std::vector<double> shots_, succ_;
  double norm_ = 0.0;
};

Eigen::MatrixXcd solve_psd_mle(int d, const std::vector<Eigen::MatrixXcd>* design,
                               std::vector<double> shots,
                               std::vector<double> succ,
                               const Eigen::MatrixXcd& init, const char* who) {
  std::vector<double> x(static_cast<std::size_t>(d) * d);
  pack_T(lower_factor(init), x.data());

  ceres::GradientProblem problem(
      new PsdMleFunction(d, design, std::move(shots), std::move(succ)));
  ceres::GradientProblemSolver::Options opt;
  opt.line_search_direction_type = ceres::LBFGS;
  opt.max_num_iterations = 20000;
  opt.gradient_tolerance = 1e-8;
  opt.function_tolerance = 1e-16;
  opt.parameter_tolerance = 1e-14;
  opt.logging_type = ceres::SILENT;
  opt.minimizer_progress_to_stdout = false;

  // A restart clears the LBFGS memory, which is usually enough to resume
  // progress when the line search stalls against the boundary of the cone
  // (rank-deficient optima, e.g. exact data from a unitary).
  double cost = 0.0;
  double gnorm = 0.0;
  ceres::GradientProblemSolver::Summary summary;
  std::vector<double> g(x.size());
  for (int attempt = 0; attempt < 4; ++attempt) {
    ceres::Solve(opt, problem, x.data(), &summary);
    problem.Evaluate(x.data(), &cost, g.data());
    gnorm = 0.0;
    for (double v : g) gnorm += v * v;
    gnorm = std::sqrt(gnorm);
    if (gnorm <= 1e-6) break;
  }
  if (gnorm > 1e-6) {
    std::ostringstream msg;
    msg << who << ": likelihood optimizer stalled (|grad| = " << gnorm
        << ", cost = " << cost << "): " << summary.BriefReport();
    throw std::runtime_error(msg.str());
  }

  const Eigen::MatrixXcd T = unpack_T(x.data(), d);
  const Eigen::MatrixXcd S = T.adjoint() * T;
  return S / S.trace().real();
}

// designs for the process likelihood: C^(i,j)(m,n) = Tr(M_j E_m P_i E_n)
const std::vector<Eigen::MatrixXcd>& chi_designs() {
  static const std::vector<Eigen::MatrixXcd> designs = [] {
    std::vector<Eigen::MatrixXcd> ds;
    ds.reserve(16 * 15);
    for (int i = 0; i < 16; ++i) {
      std::array<Mat4, 16> left;  // E_m P_i
      for (int m = 0; m < 16; ++m) left[m] = pauli_element(m) * prep_projectors()[i];
      for (int j = 0; j < 15; ++j) {
        Eigen::MatrixXcd C(16, 16);
        for (int m = 0; m < 16; ++m)
          for (int n = 0; n < 16; ++n)
            C(m, n) = (measurement_ops4()[j] * left[m] * pauli_element(n)).trace();
        ds.push_back(std::move(C));
      }
    }
    return ds;
  }();
  return designs;
}

// density likelihood designs: p = Tr(M rho) = sum_ab rho_ab conj(M)_ab
const std::vector<Eigen::MatrixXcd>& density_designs() {
  static const std::vector<Eigen::MatrixXcd> designs = [] {
    std::vector<Eigen::MatrixXcd> ds;
    ds.reserve(15);
    for (int j = 0; j < 15; ++j)
      ds.push_back(measurement_ops4()[j].conjugate());
    return ds;
  }();
  return designs;
}

// linear system mapping chi to the 16 channel outputs E(P_i), factored once
const Eigen::PartialPivLU<Eigen::MatrixXcd>& chi_system() {
  static const Eigen::PartialPivLU<Eigen::MatrixXcd> lu = [] {
    Eigen::MatrixXcd K(256, 256);
    for (int i = 0; i < 16; ++i)
      for (int m = 0; m < 16; ++m)
        for (int n = 0; n < 16; ++n) {
          const Mat4 t =
              pauli_element(m) * prep_projectors()[i] * pauli_element(n);
          for (int a = 0; a < 4; ++a)
            for (int b = 0; b < 4; ++b)
              K(i * 16 + a * 4 + b, m * 16 + n) = t(a, b);
        }
    return Eigen::PartialPivLU<Eigen::MatrixXcd>(K);
  }();
  return lu;
}

ChiResult finish_chi(Mat16 chi) {
  chi = 0.5 * (chi + chi.adjoint()).eval();
  const double tr = chi.trace().real();
  if (!(tr > 0.0)) throw std::runtime_error("chi: trace is not positive");
  chi /= tr;
  ChiResult r;
  r.chi = chi;
  Eigen::SelfAdjointEigenSolver<Mat16> es(chi);
  r.min_eig = es.eigenvalues().minCoeff();
  r.physical = r.min_eig >= -1e-9;
  Mat4 tp = Mat4::Zero();
  for (int m = 0; m < 16; ++m)
    for (int n = 0; n < 16; ++n)
      tp += chi(m, n) * (pauli_element(n) * pauli_element(m));
  r.tp_violation = (tp - Mat4::Identity()).norm() / 4.0;
  return r;
}

Mat4 apply_channel(const Mat16& chi, const Mat4& rho) {
  Mat4 out = Mat4::Zero();
  for (int m = 0; m < 16; ++m) {
    const Mat4 lhs = pauli_element(m) * rho;
    for (int n = 0; n < 16; ++n) {
      if (chi(m, n) == cxd(0.0, 0.0)) continue;
      out += chi(m, n) * lhs * pauli_element(n);
    }
  }
  return out;
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

Mat6 s0_density() {
  Mat6 rho = Mat6::Zero();
  rho(kS0, kS0) = 1.0;
  return rho;
}

void append(PulseProgram& dst, const PulseProgram& src) {
  dst.instructions.insert(dst.instructions.end(), src.instructions.begin(),
                          src.instructions.end());
}

} // namespace

const std::array<MeasurementSpec, 15>& measurement_basis() {
  static const std::array<MeasurementSpec, 15> rows = [] {
    using K = MeasurementSpec::Kind;
    const OpStep yp_pi{Rot::y_plus, kPi};
    const OpStep yp_h{Rot::y_plus, kPi / 2};
    const OpStep y_pi{Rot::y, kPi};
    const OpStep y_h{Rot::y, kPi / 2};
    const OpStep x_pi{Rot::x, kPi};
    const OpStep x_h{Rot::x, kPi / 2};
    // v sequences are stored in execution order; the labels keep the
    // operator-product notation, rightmost factor first.
    std::array<MeasurementSpec, 15> a = {{
        {K::mu, {}, {}, "MU(I)"},
        {K::muv, {}, {yp_pi}, "MUV(I, Ry+(pi))"},
        {K::muv, {y_pi}, {yp_pi}, "MUV(Ry(pi), Ry+(pi))"},
        {K::mu, {y_h}, {}, "MU(Ry(pi/2))"},
        {K::mu, {x_h}, {}, "MU(Rx(pi/2))"},
        {K::muv, {}, {yp_h, y_h}, "MUV(I, Ry(pi/2) Ry+(pi/2))"},
        {K::muv, {y_pi}, {yp_h, y_h}, "MUV(Ry(pi), Ry(pi/2) Ry+(pi/2))"},
        {K::muv, {y_h}, {yp_h, y_h}, "MUV(Ry(pi/2), Ry(pi/2) Ry+(pi/2))"},
        {K::muv, {y_h}, {yp_h, x_h}, "MUV(Ry(pi/2), Rx(pi/2) Ry+(pi/2))"},
        {K::muv, {}, {yp_h, x_h}, "MUV(I, Rx(pi/2) Ry+(pi/2))"},
        {K::muv, {x_pi}, {yp_h, x_h}, "MUV(Rx(pi), Rx(pi/2) Ry+(pi/2))"},
        {K::muv, {x_h}, {yp_h, x_h}, "MUV(Rx(pi/2), Rx(pi/2) Ry+(pi/2))"},
        {K::muv, {x_h}, {yp_h, y_h}, "MUV(Rx(pi/2), Ry(pi/2) Ry+(pi/2))"},
        {K::muv, {y_h}, {yp_h}, "MUV(Ry(pi/2), Ry+(pi/2))"},
        {K::muv, {x_h}, {yp_h}, "MUV(Rx(pi/2), Ry+(pi/2))"},
    }};
    return a;
  }();
  return rows;
}

Mat6 steps_unitary(const std::vector<OpStep>& steps) {
  TrapLaserParams unit;
  unit.eta = 1.0;
  unit.Omega = 1.0;
  Mat6 U = Mat6::Identity();
  for (const auto& s : steps)
    U = pulse_unitary(rotation(s.axis, s.theta, unit)) * U;
  return U;
}

Mat6 measurement_operator(const MeasurementSpec& spec) {
  const Mat6 U = steps_unitary(spec.u);
  if (spec.kind == MeasurementSpec::Kind::mu)
    return U.adjoint() * proj_S() * U;
  const Mat6 V = steps_unitary(spec.v);
  return U.adjoint() * proj_D() * V.adjoint() * proj_S() * V * proj_D() * U;
}

PulseProgram measurement_program(const MeasurementSpec& spec,
                                 const TrapLaserParams& p) {
  PulseProgram prog;
  for (const auto& s : spec.u)
    prog.instructions.emplace_back(rotation(s.axis, s.theta, p));
  prog.instructions.emplace_back(FluorescenceMeasure{"w1"});
  if (spec.kind == MeasurementSpec::Kind::muv) {
    ConditionalBranch br;
    for (const auto& s : spec.v)
      br.body.emplace_back(rotation(s.axis, s.theta, p));
    br.body.emplace_back(FluorescenceMeasure{"w2"});
    prog.instructions.emplace_back(std::move(br));
  }
  return prog;
}

PulseProgram tomography_program(int input, const MeasurementSpec& spec,
                                const PulseProgram& gate,
                                const TrapLaserParams& p) {
  PulseProgram prog = prep_sequence(input, p);
  append(prog, gate);
  append(prog, measurement_program(spec, p));
  return prog;
}

double cell_value(const ExactRunResult& res, const MeasurementSpec& spec) {
  const char* label = spec.kind == MeasurementSpec::Kind::muv ? "w2" : "w1";
  return res.bright.at(label);
}

const DesignMatrix& build_A() {
  static const DesignMatrix dm = [] {
    DesignMatrix d;
    for (int i = 0; i < 16; ++i) {
      for (int j = 0; j < 15; ++j)
        d.a(i, j) = (measurement_ops4()[j] * prep_projectors()[i]).trace().real();
      d.a(i, 15) = 1.0;
    }
    const Eigen::JacobiSVD<Eigen::Matrix<double, 16, 16>> svd(d.a);
    const double smin = svd.singularValues().minCoeff();
    const double smax = svd.singularValues().maxCoeff();
    if (!(smin > 1e-12 * smax))
      throw std::runtime_error(
          "tomography: design matrix is singular; measurement or preparation "
          "conventions are inconsistent");
    d.condition = smax / smin;
    return d;
  }();
  return dm;
}

StateReconstruction reconstruct_rho(const VecA& m) {
  static const Eigen::PartialPivLU<Eigen::Matrix<double, 16, 16>> lu(
      build_A().a.transpose());
  const Eigen::Matrix<double, 16, 1> c = lu.solve(m);
  Mat4 rho = Mat4::Zero();
  for (int i = 0; i < 16; ++i) rho += c(i) * prep_projectors()[i];
  rho = 0.5 * (rho + rho.adjoint()).eval();
  StateReconstruction sr;
  sr.rho = rho;
  Eigen::SelfAdjointEigenSolver<Mat4> es(rho);
  sr.min_eig = es.eigenvalues().minCoeff();
  sr.physical = sr.min_eig >= -1e-12;
  return sr;
}

Mat4 mle_density(const Eigen::Matrix<double, 15, 1>& values,
                 const Eigen::Matrix<double, 15, 1>& shots) {
  VecA m;
  m.head<15>() = values;
  m(15) = 1.0;
  const Eigen::MatrixXcd init = clip_psd(reconstruct_rho(m).rho, 1e-8);
  std::vector<double> n(15), k(15);
  for (int j = 0; j < 15; ++j) {
    n[j] = shots(j);
    k[j] = n[j] > 0.0 ? values(j) * n[j] : clamp01(values(j));
  }
  const Eigen::MatrixXcd X = solve_psd_mle(4, &density_designs(), std::move(n),
                                           std::move(k), init, "mle_density");
  return Mat4(X);
}

TomographyDataset exact_dataset_from_unitary(const Mat6& gate) {
  TomographyDataset d;
  for (int i = 0; i < 16; ++i) {
    const Vec6 psi = gate * prep_state(i + 1);
    const Mat6 rho = psi * psi.adjoint();
    for (int j = 0; j < 15; ++j)
      d.value(i, j) = clamp01((measurement_ops()[j] * rho).trace().real());
  }
  return d;
}

TomographyDataset exact_dataset(const PulseProgram& gate, RunMode mode,
                                const TrapLaserParams& p, double detect_window,
                                const NoiseHook* noise) {
  TomographyDataset d;
  const auto& basis = measurement_basis();
  const Mat6 rho0 = s0_density();
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 15; ++j) {
      const PulseProgram prog = tomography_program(i + 1, basis[j], gate, p);
      const ExactRunResult res =
          run_exact(prog, rho0, mode, p, detect_window, noise);
      d.value(i, j) = clamp01(cell_value(res, basis[j]));
    }
  return d;
}

TomographyDataset sampled_dataset(const PulseProgram& gate, RunMode mode,
                                  const TrapLaserParams& p, int shots_per_cell,
                                  std::uint64_t seed, double detect_window) {
  if (shots_per_cell <= 0)
    throw std::invalid_argument("sampled_dataset: shots_per_cell must be > 0");
  TomographyDataset d;
  const auto& basis = measurement_basis();
  const Mat6 rho0 = s0_density();
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 15; ++j) {
      const PulseProgram prog = tomography_program(i + 1, basis[j], gate, p);
      const std::uint64_t cell_seed =
          Rng::stream(seed, static_cast<std::uint64_t>(i) * 15 + j).next();
      const auto tally =
          run_shots(prog, rho0, mode, p, shots_per_cell, cell_seed, detect_window);
      const char* label =
          basis[j].kind == MeasurementSpec::Kind::muv ? "w2" : "w1";
      const ShotTally& t = tally.at(label);
      d.value(i, j) = static_cast<double>(t.bright) / t.shots;
      d.shots(i, j) = shots_per_cell;
    }
  return d;
}

Mat4 pauli_element(int m) {
  static const std::array<Mat4, 16> basis = [] {
    std::array<Mat2, 4> s;
    s[0] = Mat2::Identity();
    s[1] << 0.0, 1.0, 1.0, 0.0;
    s[2] << 0.0, cxd(0.0, -1.0), cxd(0.0, 1.0), 0.0;
    s[3] << 1.0, 0.0, 0.0, -1.0;
    std::array<Mat4, 16> a;
    for (int k = 0; k < 16; ++k) a[k] = kron22(s[k / 4], s[k % 4]);
    return a;
  }();
  if (m < 0 || m > 15)
    throw std::invalid_argument("pauli_element: index out of range 0..15");
  return basis[m];
}

Mat16 chi_from_unitary(const Mat4& u) {
  Eigen::Matrix<cxd, 16, 1> c;
  for (int m = 0; m < 16; ++m) c(m) = (pauli_element(m) * u).trace() / 4.0;
  return c * c.adjoint();
}

ChiResult chi_linear(const TomographyDataset& data) {
  Eigen::VectorXcd rhs(256);
  for (int i = 0; i < 16; ++i) {
    VecA m;
    m.head<15>() = data.value.row(i).transpose();
    m(15) = 1.0;
    const StateReconstruction sr = reconstruct_rho(m);
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b) rhs(i * 16 + a * 4 + b) = sr.rho(a, b);
  }
  const Eigen::VectorXcd x = chi_system().solve(rhs);
  Mat16 chi;
  for (int m = 0; m < 16; ++m)
    for (int n = 0; n < 16; ++n) chi(m, n) = x(m * 16 + n);
  return finish_chi(chi);
}

ChiResult chi_mle(const TomographyDataset& data) {
  const Eigen::MatrixXcd init = clip_psd(chi_linear(data).chi, 1e-8);
  std::vector<double> n, k;
  n.reserve(240);
  k.reserve(240);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 15; ++j) {
      const double shots = data.shots(i, j);
      n.push_back(shots);
      k.push_back(shots > 0.0 ? data.value(i, j) * shots
                              : clamp01(data.value(i, j)));
    }
  const Eigen::MatrixXcd X = solve_psd_mle(16, &chi_designs(), std::move(n),
                                           std::move(k), init, "chi_mle");
  return finish_chi(Mat16(X));
}

ChiResult chi_from_io(const TomographyDataset& data, const std::string& method) {
  if (method == "linear") return chi_linear(data);
  if (method == "mle") return chi_mle(data);
  throw std::invalid_argument("chi_from_io: method must be 'linear' or 'mle'");
}

double process_fidelity(const Mat16& chi_expt, const Mat16& chi_id) {
  return (chi_id * chi_expt).trace().real();
}

double mean_state_fidelity(const Mat16& chi, const Mat4& u) {
  double acc = 0.0;
  for (int i = 0; i < 16; ++i) {
    const Vec4 psi_id = u * comp_ket(prep_state(i + 1));
    const Mat4 out = apply_channel(chi, prep_projectors()[i]);
    acc += (psi_id.adjoint() * out * psi_id)(0, 0).real();
  }
  return acc / 16.0;
}

Eigen::Matrix<double, 16, 1> per_state_fidelities(const TomographyDataset& data,
                                                  const Mat4& u,
                                                  const std::string& method) {
  if (method != "linear" && method != "mle")
    throw std::invalid_argument(
        "per_state_fidelities: method must be 'linear' or 'mle'");
  Eigen::Matrix<double, 16, 1> f;
  for (int i = 0; i < 16; ++i) {
    const Eigen::Matrix<double, 15, 1> values = data.value.row(i).transpose();
    Mat4 rho;
    if (method == "mle") {
      rho = mle_density(values, data.shots.row(i).transpose());
    } else {
      VecA m;
      m.head<15>() = values;
      m(15) = 1.0;
      rho = reconstruct_rho(m).rho;
    }
    const Vec4 psi_id = u * comp_ket(prep_state(i + 1));
    f(i) = (psi_id.adjoint() * rho * psi_id)(0, 0).real();
  }
  return f;
}

double mean_fidelity(const TomographyDataset& data, const Mat4& u,
                     const std::string& method) {
  return per_state_fidelities(data, u, method).mean();
}

double haar_mean_fidelity(double f_p) { return (4.0 * f_p + 1.0) / 5.0; }

FidelityErrorBars projection_noise_errorbars(const TomographyDataset& data,
                                             const Mat4& target, int resamples,
                                             std::uint64_t seed,
                                             const std::string& method) {
  if (resamples < 2)
    throw std::invalid_argument(
        "projection_noise_errorbars: need at least 2 resamples");
  const Mat16 chi_id = chi_from_unitary(target);
  const ChiResult point = chi_from_io(data, method); // also warms the caches
  FidelityErrorBars out;
  out.fp = process_fidelity(point.chi, chi_id);
  out.fmean = mean_state_fidelity(point.chi, target);

  std::vector<double> fp(resamples), fm(resamples);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int nthreads = static_cast<int>(
      std::min<unsigned>(hw, static_cast<unsigned>(resamples)));
  std::vector<std::string> errors(nthreads);
  std::vector<std::thread> pool;
  pool.reserve(nthreads);
  for (int t = 0; t < nthreads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (int r = t; r < resamples; r += nthreads) {
          Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(r));
          TomographyDataset ds = data;
          for (int i = 0; i < 16; ++i)
            for (int j = 0; j < 15; ++j) {
              const int n = static_cast<int>(ds.shots(i, j));
              if (n <= 0) continue;
              int hits = 0;
              for (int sh = 0; sh < n; ++sh)
                hits += rng.uniform01() < data.value(i, j) ? 1 : 0;
              ds.value(i, j) = static_cast<double>(hits) / n;
            }
          const ChiResult c = chi_from_io(ds, method);
          fp[r] = process_fidelity(c.chi, chi_id);
          fm[r] = mean_state_fidelity(c.chi, target);
        }
      } catch (const std::exception& e) {
        errors[t] = e.what();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (const auto& e : errors)
    if (!e.empty())
      throw std::runtime_error("projection_noise_errorbars: " + e);

  const auto stddev = [resamples](const std::vector<double>& v) {
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= resamples;
    double acc = 0.0;
    for (double x : v) acc += (x - mean) * (x - mean);
    return std::sqrt(acc / (resamples - 1));
  };
  out.fp_sigma = stddev(fp);
  out.fmean_sigma = stddev(fm);
  return out;
}

std::string write_dataset(const TomographyDataset& data) {
  std::string out =
      "# tomography dataset\n"
      "# input measurement shots successes (shots = 0: exact probability)\n";
  char line[96];
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 15; ++j) {
      const double n = data.shots(i, j);
      const double succ = n > 0.0 ? data.value(i, j) * n : data.value(i, j);
      std::snprintf(line, sizeof line, "%d %d %.17g %.17g\n", i + 1, j + 1, n,
                    succ);
      out += line;
    }
  return out;
}

TomographyDataset read_dataset(const std::string& text) {
  TomographyDataset d;
  bool seen[16][15] = {};
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto start = line.find_first_not_of(" \t\r");
    if (start == std::string::npos || line[start] == '#') continue;
    std::istringstream ls(line);
    int i = 0, j = 0;
    double n = 0.0, succ = 0.0;
    if (!(ls >> i >> j >> n >> succ))
      throw std::invalid_argument("dataset line " + std::to_string(lineno) +
                                  ": expected 'input measurement shots successes'");
    if (i < 1 || i > 16 || j < 1 || j > 15 || n < 0.0)
      throw std::invalid_argument("dataset line " + std::to_string(lineno) +
                                  ": indices out of range");
    const double v = n > 0.0 ? succ / n : succ;
    if (v < -1e-9 || v > 1.0 + 1e-9)
      throw std::invalid_argument("dataset line " + std::to_string(lineno) +
                                  ": probability outside [0, 1]");
    d.value(i - 1, j - 1) = clamp01(v);
    d.shots(i - 1, j - 1) = n;
    seen[i - 1][j - 1] = true;
  }
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 15; ++j)
      if (!seen[i][j])
        throw std::invalid_argument("dataset: missing cell (" +
                                    std::to_string(i + 1) + ", " +
                                    std::to_string(j + 1) + ")");
  return d;
}

std::string write_chi(const ChiResult& chi,
                      const std::map<std::string, double>& summary) {
  std::string out =
      "# chi matrix, pauli basis II IX IY IZ XI ... ZZ (atomic qubit first)\n";
  char num[40];
  const auto emit = [&](bool imag) {
    for (int m = 0; m < 16; ++m) {
      for (int n = 0; n < 16; ++n) {
        const double v = imag ? chi.chi(m, n).imag() : chi.chi(m, n).real();
        std::snprintf(num, sizeof num, n ? " %.17g" : "%.17g", v);
        out += num;
      }
      out += '\n';
    }
  };
  out += "# real\n";
  emit(false);
  out += "# imag\n";
  emit(true);
  out += "# summary\n";
  char line[96];
  std::snprintf(line, sizeof line, "tp_violation = %.17g\n", chi.tp_violation);
  out += line;
  std::snprintf(line, sizeof line, "min_eig = %.17g\n", chi.min_eig);
  out += line;
  for (const auto& [key, value] : summary) {
    std::snprintf(line, sizeof line, "%s = %.17g\n", key.c_str(), value);
    out += line;
  }
  return out;
}

} // namespace ionsim
