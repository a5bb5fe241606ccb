#include <ionsim/qlinalg.hpp>
#include <ionsim/rng.hpp>
#include <ionsim/sequencer.hpp>
#include <ionsim/tomography.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

using namespace ionsim;
using namespace std::complex_literals;

namespace {

TrapLaserParams paper_trap() {
  TrapLaserParams tp;
  tp.omega_sec = 2.0 * M_PI * 1.32e6;
  tp.eta = 0.0616;
  tp.Omega = 2.0 * M_PI * 125e3;
  tp.Delta0 = 0.0;
  return tp;
}

// Reference rotation matrices assembled directly from the conventions,
// independent of pulse_unitary.
Mat6 carrier_ref(double th, double ph) {
  Mat6 u = Mat6::Identity();
  const cxd od = -1i * std::exp(1i * ph) * std::sin(th / 2.0);
  for (int n = 0; n < 3; ++n) {
    u(n, n) = std::cos(th / 2.0);
    u(3 + n, 3 + n) = std::cos(th / 2.0);
    u(n, 3 + n) = od;
    u(3 + n, n) = -std::conj(od);
  }
  return u;
}

Mat6 bsb_ref(double th, double ph) {
  Mat6 u = Mat6::Identity();
  const cxd e = std::exp(1i * ph);
  u(kS0, kS0) = std::cos(th / 2.0);
  u(kD1, kD1) = std::cos(th / 2.0);
  u(kS0, kD1) = -std::conj(e) * std::sin(th / 2.0);
  u(kD1, kS0) = e * std::sin(th / 2.0);
  const double th2 = std::sqrt(2.0) * th;
  u(kS1, kS1) = std::cos(th2 / 2.0);
  u(kD2, kD2) = std::cos(th2 / 2.0);
  u(kS1, kD2) = -std::conj(e) * std::sin(th2 / 2.0);
  u(kD2, kS1) = e * std::sin(th2 / 2.0);
  return u;
}

Mat6 projS_ref() {
  Mat6 p = Mat6::Zero();
  for (int n = 0; n < 3; ++n) p(3 + n, 3 + n) = 1.0;
  return p;
}

Mat6 projD_ref() {
  Mat6 p = Mat6::Zero();
  for (int n = 0; n < 3; ++n) p(n, n) = 1.0;
  return p;
}

Vec6 ket6(int idx) {
  Vec6 v = Vec6::Zero();
  v(idx) = 1.0;
  return v;
}

Mat6 embed4(const Mat4& r) {
  Mat6 out = Mat6::Zero();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) out(kComputational[a], kComputational[b]) = r(a, b);
  return out;
}

Vec4 comp4(const Vec6& v) {
  Vec4 out;
  for (int k = 0; k < 4; ++k) out(k) = v(kComputational[k]);
  return out;
}

// measured values of a computational-subspace state under the 15 settings
VecA mvec(const Mat6& rho) {
  VecA m;
  const auto& basis = measurement_basis();
  for (int j = 0; j < 15; ++j)
    m(j) = (measurement_operator(basis[j]) * rho).trace().real();
  m(15) = 1.0;
  return m;
}

double trace_distance(const Mat4& a, const Mat4& b) {
  const Eigen::JacobiSVD<Mat4> svd(a - b);
  return 0.5 * svd.singularValues().sum();
}

Mat4 cnot_target() {
  Mat4 t = Mat4::Zero();
  t(0, 0) = 1.0;
  t(1, 1) = -1.0;
  t(3, 2) = -1.0;
  t(2, 3) = 1.0;
  return t;
}

Mat4 random_density(Rng& rng) {
  Mat4 g;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) g(r, c) = cxd(rng.normal(), rng.normal());
  Mat4 rho = g * g.adjoint();
  return rho / rho.trace().real();
}

Mat4 random_unitary(Rng& rng) {
  Mat4 g;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) g(r, c) = cxd(rng.normal(), rng.normal());
  const Eigen::HouseholderQR<Mat4> qr(g);
  return qr.householderQ();
}

Vec4 haar_state(Rng& rng) {
  Vec4 v;
  for (int k = 0; k < 4; ++k) v(k) = cxd(rng.normal(), rng.normal());
  return v / v.norm();
}

// dataset whose cells are exact probabilities of the given per-input states
TomographyDataset dataset_from_states(const std::array<Mat4, 16>& outs) {
  TomographyDataset d;
  for (int i = 0; i < 16; ++i) {
    const VecA m = mvec(embed4(outs[i]));
    for (int j = 0; j < 15; ++j) d.value(i, j) = std::clamp(m(j), 0.0, 1.0);
  }
  return d;
}

std::array<Mat4, 16> prep_projectors4() {
  std::array<Mat4, 16> p;
  for (int i = 0; i < 16; ++i) {
    const Vec4 psi = comp4(prep_state(i + 1));
    p[i] = psi * psi.adjoint();
  }
  return p;
}

}  // namespace

TEST(MeasurementBasis, CatalogShapeAndLabels) {
  const auto& basis = measurement_basis();
  int direct = 0;
  std::vector<std::string> labels;
  for (const auto& spec : basis) {
    direct += spec.kind == MeasurementSpec::Kind::mu;
    labels.push_back(spec.label);
    if (spec.kind == MeasurementSpec::Kind::mu)
      EXPECT_TRUE(spec.v.empty()) << spec.label;
    else
      EXPECT_FALSE(spec.v.empty()) << spec.label;
  }
  EXPECT_EQ(direct, 3);
  EXPECT_EQ(basis[0].label, "MU(I)");
  EXPECT_EQ(basis[3].label, "MU(Ry(pi/2))");
  EXPECT_EQ(basis[14].label, "MUV(Rx(pi/2), Ry+(pi/2))");
  std::sort(labels.begin(), labels.end());
  EXPECT_TRUE(std::adjacent_find(labels.begin(), labels.end()) == labels.end());
}

TEST(MeasurementBasis, OperatorsAreProbabilityWeights) {
  for (const auto& spec : measurement_basis()) {
    const Mat6 m = measurement_operator(spec);
    EXPECT_LT((m - m.adjoint()).norm(), 1e-14) << spec.label;
    const Eigen::SelfAdjointEigenSolver<Mat6> es(m);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12) << spec.label;
    EXPECT_LE(es.eigenvalues().maxCoeff(), 1.0 + 1e-12) << spec.label;
  }
}

TEST(MeasurementOperator, HandTracedExpectations) {
  const auto& basis = measurement_basis();
  const Mat6 m1 = measurement_operator(basis[0]);
  const Mat6 m2 = measurement_operator(basis[1]);
  const Vec6 s0 = ket6(kS0), d0 = ket6(kD0), d1 = ket6(kD1);
  EXPECT_NEAR((s0.adjoint() * m1 * s0)(0, 0).real(), 1.0, 1e-14);
  EXPECT_NEAR((d0.adjoint() * m1 * d0)(0, 0).real(), 0.0, 1e-14);
  // a D1 ion stays dark, the sideband pi pulse moves it to S0, and the
  // second window fluoresces; starting bright instead ends the sequence
  EXPECT_NEAR((d1.adjoint() * m2 * d1)(0, 0).real(), 1.0, 1e-14);
  EXPECT_NEAR((s0.adjoint() * m2 * s0)(0, 0).real(), 0.0, 1e-14);
}

TEST(MeasurementOperator, MatchesReferenceCompositions) {
  const auto& basis = measurement_basis();
  const Mat6 ps = projS_ref(), pd = projD_ref();

  const Mat6 v2 = bsb_ref(M_PI, -M_PI / 2);
  const Mat6 ref2 = pd * v2.adjoint() * ps * v2 * pd;
  EXPECT_LT((measurement_operator(basis[1]) - ref2).norm(), 1e-13);

  const Mat6 u4 = carrier_ref(M_PI / 2, -M_PI / 2);
  const Mat6 ref4 = u4.adjoint() * ps * u4;
  EXPECT_LT((measurement_operator(basis[3]) - ref4).norm(), 1e-13);

  const Mat6 v6 = carrier_ref(M_PI / 2, -M_PI / 2) * bsb_ref(M_PI / 2, -M_PI / 2);
  const Mat6 ref6 = pd * v6.adjoint() * ps * v6 * pd;
  EXPECT_LT((measurement_operator(basis[5]) - ref6).norm(), 1e-13);

  const Mat6 u15 = carrier_ref(M_PI / 2, 0.0);
  const Mat6 v15 = bsb_ref(M_PI / 2, -M_PI / 2);
  const Mat6 ref15 =
      u15.adjoint() * pd * v15.adjoint() * ps * v15 * pd * u15;
  EXPECT_LT((measurement_operator(basis[14]) - ref15).norm(), 1e-13);
}

TEST(MeasurementProgram, StructureAndLabels) {
  const auto tp = paper_trap();
  const auto& basis = measurement_basis();
  const std::string direct = dump_program(measurement_program(basis[0], tp));
  EXPECT_EQ(direct, "MEASURE w1\n");
  const std::string cond = dump_program(measurement_program(basis[1], tp));
  EXPECT_NE(cond.find("MEASURE w1\nCOND {\n"), std::string::npos);
  EXPECT_NE(cond.find("PULSE blue_sideband"), std::string::npos);
  EXPECT_NE(cond.find("MEASURE w2"), std::string::npos);
}

TEST(MeasurementProgram, CellStatisticIsTheJointProbability) {
  const auto tp = paper_trap();
  const auto& basis = measurement_basis();
  const PulseProgram prog = measurement_program(basis[1], tp);

  const Mat6 from_d1 = ket6(kD1) * ket6(kD1).adjoint();
  const ExactRunResult dark = run_exact(prog, from_d1, RunMode::idealized, tp);
  EXPECT_NEAR(dark.bright.at("w1"), 0.0, 1e-14);
  EXPECT_NEAR(cell_value(dark, basis[1]), 1.0, 1e-13);

  const Mat6 from_s0 = ket6(kS0) * ket6(kS0).adjoint();
  const ExactRunResult lit = run_exact(prog, from_s0, RunMode::idealized, tp);
  EXPECT_NEAR(lit.bright.at("w1"), 1.0, 1e-14);
  EXPECT_NEAR(cell_value(lit, basis[1]), 0.0, 1e-13);
}

TEST(DesignMatrix, KnownEntriesAndSpan) {
  const DesignMatrix& dm = build_A();
  EXPECT_NEAR(dm.a(2, 0), 1.0, 1e-13);  // third preparation is S0, bare window
  EXPECT_NEAR(dm.a(1, 1), 1.0, 1e-13);  // second is D1, flipped in and seen
  for (int i = 0; i < 16; ++i) EXPECT_DOUBLE_EQ(dm.a(i, 15), 1.0);

  const Eigen::JacobiSVD<Eigen::Matrix<double, 16, 16>> svd(dm.a);
  EXPECT_GT(svd.singularValues().minCoeff(), 1e-3);
  EXPECT_GE(dm.condition, 1.0);
  EXPECT_LT(dm.condition, 1e3);
}

TEST(Reconstruction, BasisStateRoundTrip) {
  const Mat6 rho = ket6(kD0) * ket6(kD0).adjoint();
  const StateReconstruction sr = reconstruct_rho(mvec(rho));
  Mat4 expect = Mat4::Zero();
  expect(0, 0) = 1.0;
  EXPECT_LT((sr.rho - expect).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_TRUE(sr.physical);
}

TEST(Reconstruction, EntangledRoundTrip) {
  Vec6 psi = Vec6::Zero();
  psi(kD0) = 1.0 / std::sqrt(2.0);
  psi(kS1) = 1.0 / std::sqrt(2.0);
  const Mat6 rho = psi * psi.adjoint();
  const StateReconstruction sr = reconstruct_rho(mvec(rho));
  const Mat4 expect = comp4(psi) * comp4(psi).adjoint();
  EXPECT_LT((sr.rho - expect).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Reconstruction, FiftyRandomStatesRoundTrip) {
  Rng rng(404);
  for (int trial = 0; trial < 50; ++trial) {
    const Mat4 rho = random_density(rng);
    const StateReconstruction sr = reconstruct_rho(mvec(embed4(rho)));
    EXPECT_LT(trace_distance(sr.rho, rho), 1e-9) << "trial " << trial;
  }
}

TEST(Reconstruction, ShotNoiseTripsThePositivityFlag) {
  const auto tp = paper_trap();
  const TomographyDataset d =
      sampled_dataset(PulseProgram{}, RunMode::idealized, tp, 100, 11);
  int flagged = 0;
  for (int i = 0; i < 16; ++i) {
    VecA m;
    m.head<15>() = d.value.row(i).transpose();
    m(15) = 1.0;
    flagged += !reconstruct_rho(m).physical;
  }
  // pure states sit on the boundary of the cone, so sampling noise pushes
  // some rows outside of it
  EXPECT_GT(flagged, 0);
}

TEST(MleDensity, MatchesLinearInversionOnExactData) {
  const auto projs = prep_projectors4();
  const Mat4 mixed = 0.55 * projs[4] + 0.30 * projs[15] +
                     0.15 * Mat4::Identity() / 4.0;
  const VecA m = mvec(embed4(mixed));
  const Eigen::Matrix<double, 15, 1> values = m.head<15>();
  const Eigen::Matrix<double, 15, 1> shots = Eigen::Matrix<double, 15, 1>::Zero();
  const Mat4 est = mle_density(values, shots);
  EXPECT_LT((est - reconstruct_rho(m).rho).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT(trace_distance(est, mixed), 1e-6);
}

TEST(MleDensity, RecoversTheMaximallyMixedStateFromCounts) {
  const Mat4 mm = Mat4::Identity() / 4.0;
  const VecA m = mvec(embed4(mm));
  Rng rng(2026);
  Eigen::Matrix<double, 15, 1> values, shots;
  for (int j = 0; j < 15; ++j) {
    int hits = 0;
    for (int s = 0; s < 4000; ++s) hits += rng.uniform01() < m(j) ? 1 : 0;
    values(j) = hits / 4000.0;
    shots(j) = 4000.0;
  }
  const Mat4 est = mle_density(values, shots);
  EXPECT_LT(trace_distance(est, mm), 0.1);
}

TEST(MleDensity, PathologicalCountsStayOnTheCone) {
  const auto tp = paper_trap();
  const TomographyDataset d =
      sampled_dataset(PulseProgram{}, RunMode::idealized, tp, 100, 11);
  int checked = 0;
  for (int i = 0; i < 16 && checked < 3; ++i) {
    VecA m;
    m.head<15>() = d.value.row(i).transpose();
    m(15) = 1.0;
    if (reconstruct_rho(m).physical) continue;
    ++checked;
    const Mat4 est = mle_density(d.value.row(i).transpose(),
                                 d.shots.row(i).transpose());
    const Eigen::SelfAdjointEigenSolver<Mat4> es(est);
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-12);
    EXPECT_NEAR(est.trace().real(), 1.0, 1e-12);
  }
  EXPECT_GT(checked, 0);
}

TEST(PauliBasis, OrderingAndOrthogonality) {
  EXPECT_LT((pauli_element(0) - Mat4::Identity()).norm(), 1e-15);
  Mat4 iz = Mat4::Zero();
  iz.diagonal() << 1.0, -1.0, 1.0, -1.0;
  EXPECT_LT((pauli_element(3) - iz).norm(), 1e-15);  // motional z
  Mat4 zi = Mat4::Zero();
  zi.diagonal() << 1.0, 1.0, -1.0, -1.0;
  EXPECT_LT((pauli_element(12) - zi).norm(), 1e-15);  // atomic z
  for (int m = 0; m < 16; ++m)
    for (int n = 0; n < 16; ++n) {
      const double expect = m == n ? 4.0 : 0.0;
      EXPECT_NEAR((pauli_element(m) * pauli_element(n)).trace().real(), expect,
                  1e-13);
    }
  EXPECT_THROW(pauli_element(-1), std::invalid_argument);
  EXPECT_THROW(pauli_element(16), std::invalid_argument);
}

TEST(ChiIdeal, IdentityProcessIsASingleEntry) {
  const Mat16 chi = chi_from_unitary(Mat4::Identity());
  EXPECT_NEAR(chi(0, 0).real(), 1.0, 1e-14);
  Mat16 rest = chi;
  rest(0, 0) = 0.0;
  EXPECT_LT(rest.cwiseAbs().maxCoeff(), 1e-14);
}

TEST(ChiIdeal, GateBlockPauliExpansionVerifiedBeforeUse) {
  // The gate block decomposes as (IZ + ZZ + i IY - i ZY) / 2; the expansion
  // is checked against the matrix before its coefficients back the chi test.
  Eigen::Matrix<cxd, 16, 1> u = Eigen::Matrix<cxd, 16, 1>::Zero();
  u(3) = 0.5;          // IZ
  u(15) = 0.5;         // ZZ
  u(2) = cxd(0, 0.5);  // IY
  u(14) = cxd(0, -0.5);// ZY
  Mat4 rebuilt = Mat4::Zero();
  for (int m = 0; m < 16; ++m) rebuilt += u(m) * pauli_element(m);
  EXPECT_LT((rebuilt - cnot_target()).cwiseAbs().maxCoeff(), 1e-15);

  const Mat16 chi = chi_from_unitary(cnot_target());
  const Mat16 expect = u * u.adjoint();
  EXPECT_LT((chi - expect).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(chi.trace().real(), 1.0, 1e-14);
}

TEST(ChiIdeal, GlobalPhaseInvariance) {
  const Mat4 u = cnot_target();
  const Mat4 up = std::exp(0.7i) * u;
  const Mat16 a = chi_from_unitary(u);
  const Mat16 b = chi_from_unitary(up);
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(process_fidelity(a, b), 1.0, 1e-12);
}

TEST(ChiIdeal, OrthogonalProcessesHaveZeroOverlap) {
  const Mat16 ident = chi_from_unitary(Mat4::Identity());
  const Mat16 flip = chi_from_unitary(pauli_element(4));  // atomic x
  EXPECT_NEAR(process_fidelity(ident, flip), 0.0, 1e-14);
}

TEST(ProcessTomography, IdentityExactDataRoundTrip) {
  const TomographyDataset d = exact_dataset_from_unitary(Mat6::Identity());
  const ChiResult r = chi_linear(d);
  EXPECT_NEAR(r.chi(0, 0).real(), 1.0, 1e-9);
  Mat16 rest = r.chi;
  rest(0, 0) = 0.0;
  EXPECT_LT(rest.cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(r.tp_violation, 1e-9);
  EXPECT_TRUE(r.physical);
  EXPECT_NEAR(process_fidelity(r.chi, chi_from_unitary(Mat4::Identity())), 1.0,
              1e-9);
}

TEST(ProcessTomography, GateOperatorRouteRoundTrip) {
  const auto tp = paper_trap();
  const Mat6 g = program_unitary(cnot_sequence(tp));
  const TomographyDataset d = exact_dataset_from_unitary(g);
  const ChiResult r = chi_linear(d);
  const Mat16 ideal = chi_from_unitary(cnot_target());
  EXPECT_GT(process_fidelity(r.chi, ideal), 1.0 - 1e-6);
  EXPECT_LT((r.chi - ideal).norm(), 1e-6);
  EXPECT_LT(r.tp_violation, 1e-6);
}

TEST(ProcessTomography, ProgramRouteMatchesOperatorRoute) {
  const auto tp = paper_trap();
  const PulseProgram gate = cnot_sequence(tp);
  const TomographyDataset via_programs =
      exact_dataset(gate, RunMode::idealized, tp);
  const TomographyDataset via_operators =
      exact_dataset_from_unitary(program_unitary(gate));
  EXPECT_LT((via_programs.value - via_operators.value).cwiseAbs().maxCoeff(),
            1e-9);
}

TEST(ProcessTomography, MleAgreesWithLinearInversionOnExactData) {
  const auto tp = paper_trap();
  const TomographyDataset d =
      exact_dataset_from_unitary(program_unitary(cnot_sequence(tp)));
  const ChiResult r = chi_mle(d);
  EXPECT_GT(process_fidelity(r.chi, chi_from_unitary(cnot_target())),
            1.0 - 1e-6);
  EXPECT_GE(r.min_eig, -1e-12);
  EXPECT_NEAR(r.chi.trace().real(), 1.0, 1e-12);
}

TEST(ProcessTomography, MleAgreesWithLinearAtAnInteriorPoint) {
  const auto tp = paper_trap();
  TomographyDataset d =
      exact_dataset_from_unitary(program_unitary(cnot_sequence(tp)));
  const Mat4 mm = Mat4::Identity() / 4.0;
  const VecA m_mm = mvec(embed4(mm));
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 15; ++j)
      d.value(i, j) = 0.8 * d.value(i, j) + 0.2 * m_mm(j);
  const ChiResult lin = chi_linear(d);
  const ChiResult mle = chi_mle(d);
  EXPECT_LT((lin.chi - mle.chi).cwiseAbs().maxCoeff(), 1e-5);
  EXPECT_GT(mle.min_eig, 0.0);
}

TEST(ProcessTomography, DepolarizingMixtureHasTheAnalyticOverlap) {
  TomographyDataset d = exact_dataset_from_unitary(Mat6::Identity());
  const VecA m_mm = mvec(embed4(Mat4::Identity() / 4.0));
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 15; ++j)
      d.value(i, j) = 0.5 * d.value(i, j) + 0.5 * m_mm(j);
  const ChiResult r = chi_linear(d);
  Mat16 expect = Mat16::Identity() * (0.5 / 16.0);
  expect(0, 0) += 0.5;
  EXPECT_LT((r.chi - expect).cwiseAbs().maxCoeff(), 1e-9);
  const double fp = process_fidelity(r.chi, chi_from_unitary(Mat4::Identity()));
  EXPECT_NEAR(fp, 0.5 + 0.5 / 16.0, 1e-9);
}

TEST(ProcessTomography, AmplitudeDampingMatchesTheKrausOracle) {
  const double gamma = 0.3;
  const double root = std::sqrt(1.0 - gamma);
  Mat2 k0 = Mat2::Identity();
  k0(1, 1) = root;
  Mat2 k1 = Mat2::Zero();
  k1(0, 1) = std::sqrt(gamma);
  const Mat4 K0 = kron22(Mat2::Identity(), k0);
  const Mat4 K1 = kron22(Mat2::Identity(), k1);

  std::array<Mat4, 16> outs;
  const auto projs = prep_projectors4();
  for (int i = 0; i < 16; ++i)
    outs[i] = K0 * projs[i] * K0.adjoint() + K1 * projs[i] * K1.adjoint();
  const ChiResult r = chi_linear(dataset_from_states(outs));

  Eigen::Matrix<cxd, 16, 1> c0 = Eigen::Matrix<cxd, 16, 1>::Zero();
  c0(0) = (1.0 + root) / 2.0;
  c0(3) = (1.0 - root) / 2.0;
  Eigen::Matrix<cxd, 16, 1> c1 = Eigen::Matrix<cxd, 16, 1>::Zero();
  c1(1) = std::sqrt(gamma) / 2.0;
  c1(2) = cxd(0.0, std::sqrt(gamma) / 2.0);
  const Mat16 expect = c0 * c0.adjoint() + c1 * c1.adjoint();

  EXPECT_LT((r.chi - expect).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(r.tp_violation, 1e-9);
  const double a = (1.0 + root) / 2.0;
  EXPECT_NEAR(process_fidelity(r.chi, chi_from_unitary(Mat4::Identity())),
              a * a, 1e-9);
}

TEST(ProcessTomography, PhysicalGateKeepsFidelityDespiteOffResonantKicks) {
  // Reconstruct the effective computational-block propagator of the gate
  // program from physical runs: four basis-state columns, relative phases
  // fixed by three superposition runs. The square pulses drive off-resonant
  // carrier excursions of order Omega/omega_sec per sideband pulse, which
  // is the only loss mechanism without noise.
  const auto tp = paper_trap();
  const PulseProgram prog = cnot_sequence(tp);
  const int comp[4] = {kD0, kD1, kS0, kS1};

  auto run_pure = [&](const Vec6& psi) {
    return run_exact(prog, Mat6(psi * psi.adjoint()), RunMode::physical, tp)
        .rho;
  };

  Mat4 u = Mat4::Zero();
  Vec6 e0 = Vec6::Zero();
  e0(comp[0]) = 1.0;
  Eigen::SelfAdjointEigenSolver<Mat6> es0(run_pure(e0));
  EXPECT_GT(es0.eigenvalues()(5), 1.0 - 1e-9);  // stays pure
  Vec6 col0 = es0.eigenvectors().col(5);
  int big = 0;
  double mag = 0.0;
  for (int a = 0; a < 6; ++a)
    if (std::abs(col0(a)) > mag) {
      mag = std::abs(col0(a));
      big = a;
    }
  col0 *= std::conj(col0(big)) / std::abs(col0(big));
  for (int a = 0; a < 4; ++a) u(a, 0) = col0(comp[a]);

  for (int k = 1; k < 4; ++k) {
    Vec6 ek = Vec6::Zero();
    ek(comp[k]) = 1.0;
    Eigen::SelfAdjointEigenSolver<Mat6> esk(run_pure(ek));
    Vec6 colk = esk.eigenvectors().col(5);
    const Vec6 sp = (e0 + ek) / std::sqrt(2.0);
    const Mat6 rs = run_pure(sp);
    const cxd ov = (col0.adjoint() * rs * colk)(0, 0);
    colk *= std::conj(ov) / std::abs(ov);
    // leakage out of the computational block stays at the per-mille level
    double leak = 1.0;
    for (int a = 0; a < 4; ++a) leak -= std::norm(colk(comp[a]));
    EXPECT_LT(leak, 5e-3) << "column " << k;
    for (int a = 0; a < 4; ++a) u(a, k) = colk(comp[a]);
  }

  const double fp = std::norm((cnot_target().adjoint() * u).trace() / 4.0);
  EXPECT_GT(fp, 0.97);
  EXPECT_LE(fp, 1.0);
}

TEST(ProcessTomography, PhysicalModeStaysFaithfulWithoutNoise) {
  // Full pipeline estimate: preparation and analysis pulses contribute
  // their own off-resonant errors on top of the gate's, and the linear
  // inversion folds the measurement-model mismatch into a negative
  // eigenvalue while staying trace preserving.
  const auto tp = paper_trap();
  const TomographyDataset d =
      exact_dataset(cnot_sequence(tp), RunMode::physical, tp);
  const ChiResult lin = chi_linear(d);
  const double fp_lin = process_fidelity(lin.chi, chi_from_unitary(cnot_target()));
  EXPECT_GT(fp_lin, 0.95);
  EXPECT_LT(fp_lin, 0.995);
  EXPECT_LT(lin.tp_violation, 1e-9);

  const ChiResult mle = chi_mle(d);
  EXPECT_TRUE(mle.physical);
  const double fp_mle = process_fidelity(mle.chi, chi_from_unitary(cnot_target()));
  EXPECT_GT(fp_mle, 0.88);
  EXPECT_LT(fp_mle, fp_lin);
}

TEST(MeanFidelity, IdentityDatasetGivesUnitFidelities) {
  const TomographyDataset d = exact_dataset_from_unitary(Mat6::Identity());
  const auto f = per_state_fidelities(d, Mat4::Identity(), "linear");
  for (int i = 0; i < 16; ++i) EXPECT_GT(f(i), 1.0 - 1e-9) << "input " << i + 1;
  EXPECT_NEAR(mean_fidelity(d, Mat4::Identity(), "linear"), 1.0, 1e-9);
  const ChiResult r = chi_linear(d);
  EXPECT_NEAR(mean_state_fidelity(r.chi, Mat4::Identity()), 1.0, 1e-9);
}

TEST(MeanFidelity, ChannelAndPerStateRoutesAgreeOnExactData) {
  const auto tp = paper_trap();
  const TomographyDataset d =
      exact_dataset_from_unitary(program_unitary(cnot_sequence(tp)));
  const ChiResult r = chi_linear(d);
  const double via_channel = mean_state_fidelity(r.chi, cnot_target());
  const double via_states = mean_fidelity(d, cnot_target(), "linear");
  EXPECT_NEAR(via_channel, via_states, 1e-9);
  EXPECT_NEAR(via_channel, 1.0, 1e-9);
}

TEST(MeanFidelity, HaarFormulaValues) {
  EXPECT_DOUBLE_EQ(haar_mean_fidelity(1.0), 1.0);
  EXPECT_NEAR(haar_mean_fidelity(0.85), 0.88, 1e-15);
}

TEST(MeanFidelity, HaarMonteCarloMatchesTheClosedForm) {
  Rng rng(7171);
  for (int ch = 0; ch < 6; ++ch) {
    const Mat4 v0 = random_unitary(rng);
    const Mat4 v1 = random_unitary(rng);
    const Mat4 v2 = random_unitary(rng);
    double w0 = rng.uniform(0.2, 1.0), w1 = rng.uniform(0.0, 0.4),
           w2 = rng.uniform(0.0, 0.4);
    const double wsum = w0 + w1 + w2;
    w0 /= wsum;
    w1 /= wsum;
    w2 /= wsum;

    // channel: mixture of three unitaries, targeted against the first
    Mat16 chi = w0 * chi_from_unitary(v0) + w1 * chi_from_unitary(v1) +
                w2 * chi_from_unitary(v2);
    const double fp = process_fidelity(chi, chi_from_unitary(v0));

    const Mat4 a1 = v0.adjoint() * v1;
    const Mat4 a2 = v0.adjoint() * v2;
    double acc = 0.0;
    const int nsamp = 20000;
    for (int s = 0; s < nsamp; ++s) {
      const Vec4 psi = haar_state(rng);
      acc += w0 + w1 * std::norm((psi.adjoint() * a1 * psi)(0, 0)) +
             w2 * std::norm((psi.adjoint() * a2 * psi)(0, 0));
    }
    EXPECT_NEAR(acc / nsamp, haar_mean_fidelity(fp), 0.005) << "channel " << ch;
  }
}

TEST(Bootstrap, ExactDataHasZeroSpread) {
  const auto tp = paper_trap();
  const TomographyDataset d =
      exact_dataset_from_unitary(program_unitary(cnot_sequence(tp)));
  const FidelityErrorBars eb =
      projection_noise_errorbars(d, cnot_target(), 4, 99, "linear");
  EXPECT_NEAR(eb.fp, 1.0, 1e-6);
  EXPECT_LT(eb.fp_sigma, 1e-12);
  EXPECT_LT(eb.fmean_sigma, 1e-12);
}

TEST(Bootstrap, ErrorBarScalesAsRootShots) {
  const auto tp = paper_trap();
  double sigma[3] = {};
  const int shots[3] = {100, 400, 1600};
  for (int k = 0; k < 3; ++k) {
    const TomographyDataset d = sampled_dataset(
        PulseProgram{}, RunMode::idealized, tp, shots[k], 31 + k);
    const FidelityErrorBars eb =
        projection_noise_errorbars(d, Mat4::Identity(), 48, 77, "linear");
    sigma[k] = eb.fp_sigma;
  }
  EXPECT_GT(sigma[0], 0.003);
  EXPECT_LT(sigma[0], 0.05);
  EXPECT_GT(sigma[0] / sigma[1], 1.3);
  EXPECT_LT(sigma[0] / sigma[1], 3.2);
  EXPECT_GT(sigma[1] / sigma[2], 1.3);
  EXPECT_LT(sigma[1] / sigma[2], 3.2);
}

TEST(Bootstrap, MleResamplingStaysPhysical) {
  const auto tp = paper_trap();
  const TomographyDataset d =
      sampled_dataset(PulseProgram{}, RunMode::idealized, tp, 100, 5);
  const FidelityErrorBars eb =
      projection_noise_errorbars(d, Mat4::Identity(), 8, 13, "mle");
  EXPECT_GT(eb.fp, 0.9);
  EXPECT_LE(eb.fp, 1.0 + 1e-9);
  EXPECT_GT(eb.fp_sigma, 0.0);
  EXPECT_LT(eb.fp_sigma, 0.1);
}

TEST(DatasetIo, RoundTripsExactAndSampledRecords) {
  const auto tp = paper_trap();
  const TomographyDataset exact =
      exact_dataset_from_unitary(program_unitary(cnot_sequence(tp)));
  const TomographyDataset back = read_dataset(write_dataset(exact));
  EXPECT_LT((back.value - exact.value).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ((back.shots - exact.shots).cwiseAbs().maxCoeff(), 0.0);

  const TomographyDataset counts =
      sampled_dataset(PulseProgram{}, RunMode::idealized, tp, 250, 3);
  const TomographyDataset back2 = read_dataset(write_dataset(counts));
  EXPECT_LT((back2.value - counts.value).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_EQ((back2.shots - counts.shots).cwiseAbs().maxCoeff(), 0.0);
}

TEST(DatasetIo, RejectsMalformedInput) {
  const auto tp = paper_trap();
  const std::string good = write_dataset(exact_dataset_from_unitary(Mat6::Identity()));
  EXPECT_THROW(read_dataset(good + "1 2 3\n"), std::invalid_argument);
  EXPECT_THROW(read_dataset(good + "17 1 0 0.5\n"), std::invalid_argument);
  EXPECT_THROW(read_dataset(good + "1 1 0 1.5\n"), std::invalid_argument);
  const std::string missing = good.substr(0, good.rfind("16 15"));
  EXPECT_THROW(read_dataset(missing), std::invalid_argument);
  (void)tp;
}

TEST(DatasetIo, ChiFileCarriesMatrixAndSummary) {
  const ChiResult r = chi_linear(exact_dataset_from_unitary(Mat6::Identity()));
  const std::string text = write_chi(r, {{"process_fidelity", 1.0}});
  EXPECT_NE(text.find("# real"), std::string::npos);
  EXPECT_NE(text.find("# imag"), std::string::npos);
  EXPECT_NE(text.find("# summary"), std::string::npos);
  EXPECT_NE(text.find("tp_violation = "), std::string::npos);
  EXPECT_NE(text.find("process_fidelity = 1"), std::string::npos);

  std::istringstream is(text.substr(text.find("# real") + 7));
  double first = -1.0;
  is >> first;
  EXPECT_NEAR(first, 1.0, 1e-9);
}

TEST(ChiFromIo, DispatchesAndValidates) {
  const TomographyDataset d = exact_dataset_from_unitary(Mat6::Identity());
  const ChiResult lin = chi_from_io(d, "linear");
  EXPECT_NEAR(lin.chi(0, 0).real(), 1.0, 1e-9);
  EXPECT_THROW(chi_from_io(d, "bayes"), std::invalid_argument);
}
