#include "ionsim/stark.hpp"

#include <cmath>
#include <stdexcept>

namespace ionsim {

double stark_delta(double delta, double Omega, double Delta0) {
  return delta - std::sqrt(delta * delta + Omega * Omega) + Delta0;
}

GeneralizedShift generalized_shift_operator(double delta, double Omega,
                                            double t) {
  if (delta == 0.0)
    throw std::invalid_argument(
        "generalized_shift_operator: axis undefined at delta = 0");
  const double W = std::sqrt(delta * delta + Omega * Omega);

  // exp(-i (delta sz + Omega sx) t): half-spin generator, Bloch angle W*t
  const double half = 0.5 * W * t;
  Mat2 driven;
  const cxd c = std::cos(half);
  const cxd ms = cxd(0.0, -std::sin(half));
  driven(0, 0) = c + ms * (delta / W);
  driven(0, 1) = ms * (Omega / W);
  driven(1, 0) = ms * (Omega / W);
  driven(1, 1) = c - ms * (delta / W);

  Mat2 unwind = Mat2::Zero();
  unwind(0, 0) = std::exp(cxd(0.0, 0.5 * delta * t));
  unwind(1, 1) = std::exp(cxd(0.0, -0.5 * delta * t));

  GeneralizedShift out;
  out.R = unwind * driven;
  const double r = Omega / delta;
  const double norm = std::sqrt(1.0 + r * r);
  out.axis = {r / norm, 0.0, 1.0 / norm};
  out.angle = (delta - W) * t;
  return out;
}

SidebandCorrections corrections_for_sideband_gate(double delta, double Omega,
                                                  double Delta0, double t,
                                                  double t0) {
  const double Delta = stark_delta(delta, Omega, Delta0);
  return {-Delta * t, Delta * t0};
}

double nth_gate_phase(StarkLedger& ledger, double Delta_n, double phi_nominal,
                      double t_gate) {
  const double corrected =
      phi_nominal + Delta_n * ledger.global_time - ledger.global_phase;
  ledger.global_phase += Delta_n * t_gate;
  ledger.global_time += t_gate;
  return corrected;
}

} // namespace ionsim
