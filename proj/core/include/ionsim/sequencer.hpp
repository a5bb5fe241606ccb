#pragma once

#include <functional>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "ionsim/frames.hpp"
#include "ionsim/qlinalg.hpp"
#include "ionsim/rng.hpp"
#include "ionsim/stark.hpp"

// Pulse-program representation and execution. Programs are written in
// nominal phases (the rotation the experimenter wants); lowering to command
// phases, which undo the light-shift phase slips of earlier sideband pulses,
// happens inside compile() and the physical-mode runner. Feed run_* nominal
// programs: they lower internally, and handing them a compiled program would
// apply the corrections twice.

namespace ionsim {

enum class Transition { carrier, blue_sideband };

struct Pulse {
  Transition transition = Transition::carrier;
  double theta = 0.0;    // signed rotation angle on the addressed manifold
  double phi = 0.0;      // laser phase offset
  double duration = 0.0; // s, |theta| / manifold Rabi rate
};

struct Wait {
  double duration = 0.0; // s
};

struct FluorescenceMeasure {
  std::string label; // key in the measurement record
};

struct ConditionalBranch;

using Instruction =
    std::variant<Pulse, Wait, FluorescenceMeasure, ConditionalBranch>;

// Runs when the measurement immediately before it saw no fluorescence (the
// ion was projected onto the D manifold). Must directly follow a
// FluorescenceMeasure and be the last instruction at its nesting level;
// bodies may contain one further conditioned measurement but no deeper
// branching.
struct ConditionalBranch {
  std::vector<Instruction> body;
};

struct PulseProgram {
  std::vector<Instruction> instructions;

  // Sum of durations along the longest path; detection windows count with
  // the given width.
  double total_duration(double detect_window = 0.0) const;
};

// Phase of a direct-digital-synthesis channel at time t: every frequency's
// phase is referenced to the common epoch t = 0, so switching away from a
// frequency and back later lands on the phase the channel would have had
// anyway. Returns (f*t mod 2pi) + phi, normalized to [0, 2pi).
double dds_phase(double f, double t, double phi);

// Named rotations of the measurement toolbox. x/y act on the carrier,
// x_plus/y_plus on the blue sideband with theta defined on the {S0, D1}
// manifold (the {S1, D2} manifold turns sqrt(2) faster).
enum class Rot { x, y, x_plus, y_plus };

// One nominal pulse: theta/phi per the rotation-axis convention, duration
// |theta|/Omega (carrier) or |theta|/(eta*Omega) (sideband). Throws
// std::invalid_argument if the relevant Rabi rate is zero.
Pulse rotation(Rot name, double theta, const TrapLaserParams& p);

// Exact unitary of one nominal pulse (idealized semantics).
Mat6 pulse_unitary(const Pulse& pulse);

// Product of the exact pulse unitaries of a measurement-free program; waits
// contribute nothing in idealized semantics. Throws std::invalid_argument on
// measurements or branches.
Mat6 program_unitary(const PulseProgram& prog);

// State-preparation program i in 1..16, rightmost table operator first.
PulseProgram prep_sequence(int i, const TrapLaserParams& p);

// The ket prep_sequence(i) prepares from |S0>, as designed (unit norm,
// computational subspace). Global phase chosen with the first nonzero
// amplitude positive real.
Vec6 prep_state(int i);

// Composite CNOT on (optical qubit) x (motional qubit): an alternating
// train of carrier and blue-sideband pulses whose idealized propagator,
// restricted to {D0, D1, S0, S1}, is diag-block [[1,0],[0,-1]] on D and
// [[0,1],[-1,0]] on S (S0 -> -S1, S1 -> S0) up to global phase.
PulseProgram cnot_sequence(const TrapLaserParams& p);

// Lower nominal phases to command phases with the Stark ledger; branch
// bodies fork the ledger at the measurement. The returned program is for
// inspection and dumping, not for re-execution.
PulseProgram compile(const PulseProgram& prog, const TrapLaserParams& p,
                     double detect_window = 0.0);

// Line-oriented text form, one instruction per line:
//   PULSE <carrier|blue_sideband> theta=<rad> phi=<rad> dur=<s>
//   WAIT <s>
//   MEASURE <label>
//   COND {
//     ...
//   }
std::string dump_program(const PulseProgram& prog);

enum class RunMode { idealized, physical };

// Per-pulse disturbance supplied by a noise model; queried once per executed
// pulse with the pulse ordinal and its start time.
struct PulseNoise {
  double delta_shift = 0.0; // additive laser-frequency offset, rad/s
  double phase_shift = 0.0; // additive laser-phase offset, rad
  double omega_scale = 1.0; // multiplicative Rabi-rate factor
};
using NoiseHook = std::function<PulseNoise(int pulse_ordinal, double start)>;

// Exact-probability execution. rho evolves unnormalized through conditioned
// branches, so the recorded value for a label is the joint probability of
// every earlier dark projection on its path and fluorescence at that
// measurement. Arms are merged after a branch ends. Physical runs report
// rho in the laser-referenced frame: the secular winding and the light-shift
// slip the command phases compensate are both undone at the final time.
struct ExactRunResult {
  Mat6 rho;                             // final state, trace 1
  std::map<std::string, double> bright; // label -> joint fluorescence prob.
};
ExactRunResult run_exact(const PulseProgram& prog, const Mat6& rho0,
                         RunMode mode, const TrapLaserParams& p,
                         double detect_window = 0.0,
                         const NoiseHook* noise = nullptr);

// Single-shot execution: each measurement samples one Bernoulli outcome and
// collapses the state. Labels that were never reached (bright arm taken at
// an earlier branch) are absent from the outcome map.
struct ShotRunResult {
  Mat6 rho;
  std::map<std::string, int> outcome; // label -> 1 bright / 0 dark
};
ShotRunResult run_shot(const PulseProgram& prog, const Mat6& rho0,
                       RunMode mode, const TrapLaserParams& p, Rng& rng,
                       double detect_window = 0.0,
                       const NoiseHook* noise = nullptr);

struct ShotTally {
  long bright = 0;  // shots where the label was reached and fluoresced
  long reached = 0; // shots where the label was reached at all
  long shots = 0;   // total shots of the run
};

// N independent shots from a fixed initial state; bright/shots estimates the
// joint probability run_exact reports for the same label.
std::map<std::string, ShotTally> run_shots(const PulseProgram& prog,
                                           const Mat6& rho0, RunMode mode,
                                           const TrapLaserParams& p,
                                           int nshots, std::uint64_t seed,
                                           double detect_window = 0.0);

} // namespace ionsim
