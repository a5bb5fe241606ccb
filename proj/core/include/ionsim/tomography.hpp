#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ionsim/qlinalg.hpp"
#include "ionsim/sequencer.hpp"

// Two-qubit tomography of the {D,S} x {n=0,1} register. State readout is
// fluorescence only, so every measurement setting is a short pulse program:
// M_U rotates and detects; M_UV rotates, detects, and conditioned on
// darkness rotates and detects again. Fifteen settings plus normalization
// determine a 4x4 density matrix; sixteen preparations determine a process.

namespace ionsim {

using Mat16 = Eigen::Matrix<cxd, 16, 16>;
using VecA = Eigen::Matrix<double, 16, 1>;  // 15 values + normalization

struct OpStep {
  Rot axis;
  double theta;
};

struct MeasurementSpec {
  enum class Kind { mu, muv };
  Kind kind = Kind::mu;
  std::vector<OpStep> u;  // applied before the first detection, program order
  std::vector<OpStep> v;  // conditioned block, program order (muv only)
  std::string label;
};

// The fifteen settings, in their catalog order.
const std::array<MeasurementSpec, 15>& measurement_basis();

// Exact product of the idealized step unitaries, program order.
Mat6 steps_unitary(const std::vector<OpStep>& steps);

// POVM element of one setting: U^dag P_S U, or for the conditioned kind
// U^dag P_D V^dag P_S V P_D U. Eigenvalues lie in [0, 1].
Mat6 measurement_operator(const MeasurementSpec& spec);

// The same setting as an executable program. Detection labels are "w1" and
// (conditioned kind) "w2"; the statistic of record is the joint probability
// of the final label: bright at w1 for mu, dark-then-bright at w2 for muv.
PulseProgram measurement_program(const MeasurementSpec& spec,
                                 const TrapLaserParams& p);

// prep(i), then the gate block, then the measurement program.
PulseProgram tomography_program(int input, const MeasurementSpec& spec,
                                const PulseProgram& gate,
                                const TrapLaserParams& p);

// The cell statistic from an exact run of tomography_program.
double cell_value(const ExactRunResult& res, const MeasurementSpec& spec);

// ----- state reconstruction ---------------------------------------------

// Design matrix D(i,j) = <psi_i| M_j |psi_i> for the 16 preparations and 15
// settings, plus the normalization column. Solving it against a measured
// 16-vector expands rho in the preparation projectors. Throws if singular.
struct DesignMatrix {
  Eigen::Matrix<double, 16, 16> a;  // a(i, j), j = 15 is the trace column
  double condition;                 // 2-norm condition number of the solve
};
const DesignMatrix& build_A();

struct StateReconstruction {
  Mat4 rho;        // Hermitian, trace 1; not guaranteed positive
  double min_eig;  // most negative eigenvalue (0 if physical)
  bool physical;   // min_eig >= -1e-12
};

// Linear inversion. m holds the 15 cell values and m(15) = 1.
StateReconstruction reconstruct_rho(const VecA& m);

// Maximum-likelihood density matrix: rho = T^dag T / Tr, binomial
// likelihood of counts round(value*shots) out of shots per cell; cells with
// shots = 0 are treated as exact probabilities (unit weight). Positive
// semidefinite and trace one by construction.
Mat4 mle_density(const Eigen::Matrix<double, 15, 1>& values,
                 const Eigen::Matrix<double, 15, 1>& shots);

// ----- process tomography -------------------------------------------------

// value(i, j): measured statistic for preparation i+1 under setting j+1.
// shots(i, j) = 0 marks an exact probability rather than a frequency.
struct TomographyDataset {
  Eigen::Matrix<double, 16, 15> value = Eigen::Matrix<double, 16, 15>::Zero();
  Eigen::Matrix<double, 16, 15> shots = Eigen::Matrix<double, 16, 15>::Zero();
};

// Exact dataset of the channel rho -> G rho G^dag via operators alone.
TomographyDataset exact_dataset_from_unitary(const Mat6& gate);

// Exact dataset by running prep + gate + measurement through the sequencer.
TomographyDataset exact_dataset(const PulseProgram& gate, RunMode mode,
                                const TrapLaserParams& p,
                                double detect_window = 0.0,
                                const NoiseHook* noise = nullptr);

// Finite-shot dataset (idealized or physical, no noise hook).
TomographyDataset sampled_dataset(const PulseProgram& gate, RunMode mode,
                                  const TrapLaserParams& p, int shots_per_cell,
                                  std::uint64_t seed,
                                  double detect_window = 0.0);

// Process matrix in the Pauli basis II, IX, IY, IZ, XI, ... ZZ (atomic
// qubit first, D = |0>): E(rho) = sum_mn chi(m,n) E_m rho E_n^dag.
Mat4 pauli_element(int m);

struct ChiResult {
  Mat16 chi;            // Hermitian, trace-normalized
  double tp_violation;  // ||sum chi(m,n) E_n^dag E_m - I||_F / 4
  double min_eig;       // most negative eigenvalue before any flooring
  bool physical;        // min_eig >= -1e-9
};

// chi of a unitary acting on the computational block.
Mat16 chi_from_unitary(const Mat4& u);

// Linear inversion: per-input state reconstruction, then the exactly
// determined linear system for chi. Hermitized and trace-normalized; may
// be unphysical for noisy data.
ChiResult chi_linear(const TomographyDataset& data);

// Direct maximum likelihood over all 240 cells with chi = T^dag T / Tr.
// Initialized from clipped linear inversion. Throws on optimizer failure.
ChiResult chi_mle(const TomographyDataset& data);

// Dispatcher: method is "linear" or "mle".
ChiResult chi_from_io(const TomographyDataset& data, const std::string& method);

double process_fidelity(const Mat16& chi_expt, const Mat16& chi_id);

// Mean output-state fidelity over the 16 preparations under the channel
// chi, against the unitary target u.
double mean_state_fidelity(const Mat16& chi, const Mat4& u);

// Output-state fidelity per preparation, reconstructing each output state
// from its own 15 dataset cells (method "linear" or "mle") and comparing
// against u applied to the preparation. mean_fidelity is their average.
Eigen::Matrix<double, 16, 1> per_state_fidelities(
    const TomographyDataset& data, const Mat4& u,
    const std::string& method = "mle");
double mean_fidelity(const TomographyDataset& data, const Mat4& u,
                     const std::string& method = "mle");

// Haar-average state fidelity from the process fidelity, d = 4.
double haar_mean_fidelity(double f_p);

// Parametric bootstrap of the fidelity estimates: resample binomial counts
// at the dataset's values, re-run the reconstruction (method "linear" or
// "mle"), and report one standard deviation. Resamples run in parallel.
struct FidelityErrorBars {
  double fp = 0.0, fp_sigma = 0.0;
  double fmean = 0.0, fmean_sigma = 0.0;
};
FidelityErrorBars projection_noise_errorbars(const TomographyDataset& data,
                                             const Mat4& target, int resamples,
                                             std::uint64_t seed,
                                             const std::string& method = "mle");

// ----- file formats --------------------------------------------------------

// Dataset: "input measurement shots successes" records; shots = 0 rows
// carry an exact probability in the successes column.
std::string write_dataset(const TomographyDataset& data);
TomographyDataset read_dataset(const std::string& text);

// Chi: 16x16 real part, then imaginary part, then "key = value" summary
// lines (trailing map). Header lines start with '#'.
std::string write_chi(const ChiResult& chi,
                      const std::map<std::string, double>& summary);

} // namespace ionsim
