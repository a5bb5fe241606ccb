#pragma once

#include <array>

#include "ionsim/qlinalg.hpp"

// Light-shift bookkeeping for sideband gates. A drive detuned by delta pulls
// the qubit splitting by delta - sqrt(delta^2 + Omega^2); far-off-resonant
// levels add the detuning-independent Delta0 on top. The compiled sequence
// cancels the resulting phase slips by offsetting later laser phases, with a
// running (time, phase) ledger.

namespace ionsim {

// Delta = [delta - sqrt(delta^2 + Omega^2)] + Delta0
double stark_delta(double delta, double Omega, double Delta0);

struct GeneralizedShift {
  Mat2 R;                      // e^{+i delta sz t} e^{-i (delta sz + Omega sx) t}
  std::array<double, 3> axis;  // rotation axis (x, y, z) of the driven factor
  double angle;                // scalar correction angle [delta - sqrt(...)] t
};

GeneralizedShift generalized_shift_operator(double delta, double Omega, double t);

struct SidebandCorrections {
  double phi_s; // Z-rotation repairing the state phase picked up over the gate
  double phi_f; // laser-phase offset aligning the gate's frame at its start time
};

SidebandCorrections corrections_for_sideband_gate(double delta, double Omega,
                                                  double Delta0, double t,
                                                  double t0);

struct StarkLedger {
  double global_time = 0.0;  // s
  double global_phase = 0.0; // accumulated sum of Delta_i * t_i, rad

  void advance_wait(double dt) { global_time += dt; }
};

// Corrected laser phase for the next gate in a sequence:
// phi + Delta_n * t0_n - (accumulated phase), with t0_n the ledger time.
// Accumulates the gate afterwards. Carrier gates pass Delta_n = 0: they
// inherit the accumulated Z rotation but add nothing to it.
double nth_gate_phase(StarkLedger& ledger, double Delta_n, double phi_nominal,
                      double t_gate);

} // namespace ionsim
