#pragma once

#include "ionsim/config.hpp"
#include "ionsim/qlinalg.hpp"

// Square-pulse propagators. A pulse of detuning delta is time independent in
// its own laser frame; the computation frame is the frame of the resonant
// carrier, and U_LQC carries states between the two. All frequencies are
// angular (rad/s).

namespace ionsim {

struct TrapLaserParams {
  double omega_sec = 0.0; // trap secular frequency
  double eta = 0.0;       // Lamb-Dicke factor
  double Omega = 0.0;     // carrier Rabi frequency
  double Delta0 = 0.0;    // detuning-independent light shift from far-off levels
};

struct PulseParams {
  double delta = 0.0; // laser detuning from the carrier
  double phi = 0.0;   // laser phase
  double t = 0.0;     // pulse duration, s
  double t0 = 0.0;    // pulse start time, s
};

TrapLaserParams trap_params_from_config(const Config& cfg);

// V_L = -delta*(sz (x) I) + omega_sec*(I (x) N)
//       + (Omega/2)*(e^{i phi} s+ (x) E(eta) + h.c.)
// The far-level shift Delta0 is not part of the six-level model; it is
// injected on request (light-shift scans) as an extra splitting term.
Mat6 laser_frame_hamiltonian(const TrapLaserParams& p, const PulseParams& q,
                             bool include_far_shift = false);

// U_LQC(t) = exp(-i*delta*(sz (x) I)*t); the motional parts of the two frame
// Hamiltonians cancel.
Mat6 frame_transform(double delta, double t);

// Propagator of one square pulse in the computation frame:
// U_LQC(t+t0) * exp(-i*V_L*t) * U_LQC(t0)^dag
Mat6 gate_propagator(const TrapLaserParams& p, const PulseParams& q,
                     bool include_far_shift = false);

} // namespace ionsim
