#include "ionsim/sequencer.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

namespace ionsim {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kTwoPi = 2.0 * kPi;

double wrap_angle(double a) {
  // map to (-pi, pi]
  double w = std::fmod(a + kPi, kTwoPi);
  if (w <= 0.0) w += kTwoPi;
  return w - kPi;
}

double manifold_rate(Transition tr, const TrapLaserParams& p) {
  return tr == Transition::carrier ? p.Omega : p.eta * p.Omega;
}

Pulse make_pulse(Transition tr, double theta, double phi,
                 const TrapLaserParams& p) {
  const double rate = manifold_rate(tr, p);
  if (rate <= 0.0)
    throw std::invalid_argument("rotation: zero Rabi rate");
  if (theta < 0.0) {
    theta = -theta;
    phi += kPi;
  }
  return Pulse{tr, theta, wrap_angle(phi), theta / rate};
}

// Structural checks shared by compile and the runners. A branch may only
// follow a measurement, must close its nesting level, and bodies nest once.
void validate_level(std::span<const Instruction> ins, int depth,
                    std::set<std::string>& labels, const char* who) {
  const auto fail = [who](const std::string& msg) {
    throw std::invalid_argument(std::string(who) + ": " + msg);
  };
  for (size_t i = 0; i < ins.size(); ++i) {
    if (const auto* pu = std::get_if<Pulse>(&ins[i])) {
      if (!(pu->duration >= 0.0)) fail("negative pulse duration");
    } else if (const auto* w = std::get_if<Wait>(&ins[i])) {
      if (!(w->duration >= 0.0)) fail("negative wait duration");
    } else if (const auto* m = std::get_if<FluorescenceMeasure>(&ins[i])) {
      if (!labels.insert(m->label).second)
        fail("duplicate measurement label '" + m->label + "'");
    } else if (const auto* br = std::get_if<ConditionalBranch>(&ins[i])) {
      if (i == 0 || !std::holds_alternative<FluorescenceMeasure>(ins[i - 1]))
        fail("branch without a preceding measurement");
      if (i + 1 != ins.size())
        fail("branch must be the last instruction of its level");
      if (depth >= 1) fail("branches nest at most once");
      validate_level(br->body, depth + 1, labels, who);
    }
  }
}

void validate_program(const PulseProgram& prog, const char* who) {
  std::set<std::string> labels;
  validate_level(prog.instructions, 0, labels, who);
}

double level_duration(std::span<const Instruction> ins, double window) {
  double total = 0.0;
  for (const auto& in : ins) {
    if (const auto* pu = std::get_if<Pulse>(&in))
      total += pu->duration;
    else if (const auto* w = std::get_if<Wait>(&in))
      total += w->duration;
    else if (std::holds_alternative<FluorescenceMeasure>(in))
      total += window;
    else if (const auto* br = std::get_if<ConditionalBranch>(&in))
      total += level_duration(br->body, window); // dark arm is the long one
  }
  return total;
}

Mat6 motional_phase(double omega_sec, double t, double sign) {
  Mat6 U = Mat6::Zero();
  for (int i = 0; i < kDim; ++i) {
    const int n = i % 3;
    U(i, i) = std::exp(cxd(0.0, sign * omega_sec * n * t));
  }
  return U;
}

// Readout frame for physical runs. The simulation frame keeps the secular
// winding exp(-i w n t), and each sideband pulse leaves the atomic phases
// slipped by its light shift (the quantity the ledger accumulates; command
// phases of later pulses already compensate it, so it never cancels from
// the state itself). Reporting relative to the laser phase reference means
// undoing both at the final time.
Mat6 frame_unwind(const TrapLaserParams& p, const StarkLedger& ledger) {
  Mat6 U = motional_phase(p.omega_sec, ledger.global_time, +1.0);
  for (int i = 0; i < kDim; ++i) {
    const double half = i < 3 ? +0.5 : -0.5;
    U(i, i) *= std::exp(cxd(0.0, half * ledger.global_phase));
  }
  return U;
}

// Physical execution state: wall clock and accumulated light-shift phase
// live in the ledger, ordinal numbers the executed pulses for noise hooks.
struct PhysCtx {
  StarkLedger ledger;
  int ordinal = 0;
};

Mat6 physical_pulse(const Pulse& raw, const TrapLaserParams& p, PhysCtx& ctx,
                    const NoiseHook* noise) {
  Pulse pu = raw;
  if (pu.theta < 0.0) {
    pu.theta = -pu.theta;
    pu.phi += kPi;
  }
  const double t0 = ctx.ledger.global_time;
  double delta_n = 0.0;
  double delta_set = 0.0;
  const bool sideband = pu.transition == Transition::blue_sideband;
  if (sideband) {
    delta_n = stark_delta(p.omega_sec, p.Omega, p.Delta0);
    delta_set = p.omega_sec + delta_n;
  }
  const double phi_cmd =
      nth_gate_phase(ctx.ledger, delta_n, pu.phi, pu.duration);
  PulseNoise nz;
  if (noise) nz = (*noise)(ctx.ordinal, t0);
  ++ctx.ordinal;
  TrapLaserParams pe = p;
  pe.Omega *= nz.omega_scale;
  const PulseParams q{delta_set + nz.delta_shift, phi_cmd + nz.phase_shift,
                      pu.duration, t0};
  return gate_propagator(pe, q, sideband);
}

struct ExactWalk {
  RunMode mode;
  const TrapLaserParams& p;
  double window;
  const NoiseHook* noise;
  std::map<std::string, double>& bright;
  PhysCtx ctx;

  Mat6 level(std::span<const Instruction> ins, Mat6 rho) {
    for (size_t i = 0; i < ins.size(); ++i) {
      if (const auto* pu = std::get_if<Pulse>(&ins[i])) {
        const Mat6 U = mode == RunMode::idealized
                           ? pulse_unitary(*pu)
                           : physical_pulse(*pu, p, ctx, noise);
        rho = U * rho * U.adjoint();
      } else if (const auto* w = std::get_if<Wait>(&ins[i])) {
        if (mode == RunMode::physical) {
          const Mat6 W = motional_phase(p.omega_sec, w->duration, -1.0);
          rho = W * rho * W.adjoint();
          ctx.ledger.advance_wait(w->duration);
        }
      } else if (const auto* m = std::get_if<FluorescenceMeasure>(&ins[i])) {
        bright[m->label] = (proj_S() * rho).trace().real();
        const bool branched =
            i + 1 < ins.size() &&
            std::holds_alternative<ConditionalBranch>(ins[i + 1]);
        Mat6 dark = proj_D() * rho * proj_D();
        Mat6 lit = proj_S() * rho * proj_S();
        if (mode == RunMode::physical) {
          const Mat6 W = motional_phase(p.omega_sec, window, -1.0);
          dark = W * dark * W.adjoint();
          lit = W * lit * W.adjoint();
          ctx.ledger.advance_wait(window);
        }
        if (branched) {
          const auto& body =
              std::get<ConditionalBranch>(ins[i + 1]).body;
          Mat6 after = level(body, dark);
          if (mode == RunMode::physical) {
            // the fluorescing arm idles while the branch body plays
            const double tb = level_duration(body, window);
            const Mat6 W = motional_phase(p.omega_sec, tb, -1.0);
            lit = W * lit * W.adjoint();
          }
          return after + lit; // branch closes the level
        }
        rho = dark + lit;
      }
    }
    return rho;
  }
};

struct ShotWalk {
  RunMode mode;
  const TrapLaserParams& p;
  double window;
  const NoiseHook* noise;
  Rng& rng;
  std::map<std::string, int>& outcome;
  PhysCtx ctx;

  Mat6 level(std::span<const Instruction> ins, Mat6 rho) {
    for (size_t i = 0; i < ins.size(); ++i) {
      if (const auto* pu = std::get_if<Pulse>(&ins[i])) {
        const Mat6 U = mode == RunMode::idealized
                           ? pulse_unitary(*pu)
                           : physical_pulse(*pu, p, ctx, noise);
        rho = U * rho * U.adjoint();
      } else if (const auto* w = std::get_if<Wait>(&ins[i])) {
        if (mode == RunMode::physical) {
          const Mat6 W = motional_phase(p.omega_sec, w->duration, -1.0);
          rho = W * rho * W.adjoint();
          ctx.ledger.advance_wait(w->duration);
        }
      } else if (const auto* m = std::get_if<FluorescenceMeasure>(&ins[i])) {
        const double pb = (proj_S() * rho).trace().real();
        const bool saw_bright = rng.uniform01() < pb;
        outcome[m->label] = saw_bright ? 1 : 0;
        const Mat6& P = saw_bright ? proj_S() : proj_D();
        const double norm = saw_bright ? pb : 1.0 - pb;
        rho = (P * rho * P) / norm;
        if (mode == RunMode::physical) {
          const Mat6 W = motional_phase(p.omega_sec, window, -1.0);
          rho = W * rho * W.adjoint();
          ctx.ledger.advance_wait(window);
        }
        const bool branched =
            i + 1 < ins.size() &&
            std::holds_alternative<ConditionalBranch>(ins[i + 1]);
        if (branched) {
          if (!saw_bright) {
            const auto& body =
                std::get<ConditionalBranch>(ins[i + 1]).body;
            return level(body, rho);
          }
          return rho; // bright arm: nothing further is played
        }
      }
    }
    return rho;
  }
};

void compile_level(std::span<const Instruction> ins,
                   std::vector<Instruction>& out, const TrapLaserParams& p,
                   double window, StarkLedger ledger) {
  for (size_t i = 0; i < ins.size(); ++i) {
    if (const auto* raw = std::get_if<Pulse>(&ins[i])) {
      Pulse pu = *raw;
      if (pu.theta < 0.0) {
        pu.theta = -pu.theta;
        pu.phi += kPi;
      }
      const bool sideband = pu.transition == Transition::blue_sideband;
      const double delta_n =
          sideband ? stark_delta(p.omega_sec, p.Omega, p.Delta0) : 0.0;
      pu.phi = wrap_angle(nth_gate_phase(ledger, delta_n, pu.phi, pu.duration));
      out.push_back(pu);
    } else if (const auto* w = std::get_if<Wait>(&ins[i])) {
      ledger.advance_wait(w->duration);
      out.push_back(*w);
    } else if (const auto* m = std::get_if<FluorescenceMeasure>(&ins[i])) {
      ledger.advance_wait(window);
      out.push_back(*m);
    } else if (const auto* br = std::get_if<ConditionalBranch>(&ins[i])) {
      ConditionalBranch lowered;
      compile_level(br->body, lowered.body, p, window, ledger);
      out.push_back(std::move(lowered));
    }
  }
}

void dump_level(std::span<const Instruction> ins, int indent,
                std::string& out) {
  char line[160];
  const std::string pad(2 * indent, ' ');
  for (const auto& in : ins) {
    if (const auto* pu = std::get_if<Pulse>(&in)) {
      std::snprintf(line, sizeof line,
                    "PULSE %s theta=%.12g phi=%.12g dur=%.12g\n",
                    pu->transition == Transition::carrier ? "carrier"
                                                          : "blue_sideband",
                    pu->theta, pu->phi, pu->duration);
      out += pad + line;
    } else if (const auto* w = std::get_if<Wait>(&in)) {
      std::snprintf(line, sizeof line, "WAIT %.12g\n", w->duration);
      out += pad + line;
    } else if (const auto* m = std::get_if<FluorescenceMeasure>(&in)) {
      out += pad + "MEASURE " + m->label + "\n";
    } else if (const auto* br = std::get_if<ConditionalBranch>(&in)) {
      out += pad + "COND {\n";
      dump_level(br->body, indent + 1, out);
      out += pad + "}\n";
    }
  }
}

} // namespace

double PulseProgram::total_duration(double detect_window) const {
  return level_duration(instructions, detect_window);
}

double dds_phase(double f, double t, double phi) {
  double ph = std::fmod(f * t, kTwoPi) + phi;
  ph = std::fmod(ph, kTwoPi);
  if (ph < 0.0) ph += kTwoPi;
  return ph;
}

Pulse rotation(Rot name, double theta, const TrapLaserParams& p) {
  switch (name) {
    case Rot::x:
      return make_pulse(Transition::carrier, theta, 0.0, p);
    case Rot::y:
      return make_pulse(Transition::carrier, theta, -kPi / 2.0, p);
    case Rot::x_plus:
      return make_pulse(Transition::blue_sideband, theta, 0.0, p);
    case Rot::y_plus:
      return make_pulse(Transition::blue_sideband, theta, -kPi / 2.0, p);
  }
  throw std::invalid_argument("rotation: unknown axis");
}

Mat6 pulse_unitary(const Pulse& pulse) {
  const double th = pulse.theta;
  const double phi = pulse.phi;
  Mat6 U = Mat6::Identity();
  if (pulse.transition == Transition::carrier) {
    const double c = std::cos(th / 2.0), s = std::sin(th / 2.0);
    const cxd od = -cxd(0.0, 1.0) * std::exp(cxd(0.0, phi)) * s;
    for (int n = 0; n < 3; ++n) {
      U(n, n) = c;
      U(3 + n, 3 + n) = c;
      U(n, 3 + n) = od;
      U(3 + n, n) = -std::conj(od);
    }
  } else {
    const double c1 = std::cos(th / 2.0), s1 = std::sin(th / 2.0);
    const double r2 = std::sqrt(2.0);
    const double c2 = std::cos(r2 * th / 2.0), s2 = std::sin(r2 * th / 2.0);
    const cxd e = std::exp(cxd(0.0, phi));
    U(kS0, kS0) = c1;
    U(kD1, kD1) = c1;
    U(kS0, kD1) = -std::conj(e) * s1;
    U(kD1, kS0) = e * s1;
    U(kS1, kS1) = c2;
    U(kD2, kD2) = c2;
    U(kS1, kD2) = -std::conj(e) * s2;
    U(kD2, kS1) = e * s2;
  }
  return U;
}

Mat6 program_unitary(const PulseProgram& prog) {
  validate_program(prog, "program_unitary");
  Mat6 U = Mat6::Identity();
  for (const auto& in : prog.instructions) {
    if (const auto* pu = std::get_if<Pulse>(&in))
      U = pulse_unitary(*pu) * U;
    else if (std::holds_alternative<FluorescenceMeasure>(in) ||
             std::holds_alternative<ConditionalBranch>(in))
      throw std::invalid_argument(
          "program_unitary: program measures or branches");
  }
  return U;
}

PulseProgram prep_sequence(int i, const TrapLaserParams& p) {
  using R = Rot;
  static const std::vector<std::vector<std::pair<Rot, double>>> table = {
      {{R::y, -kPi}},
      {{R::x_plus, -kPi}},
      {},
      {{R::x_plus, kPi}, {R::y, kPi}},
      {{R::y, -kPi / 2}, {R::x_plus, kPi}},
      {{R::y, -kPi / 2}, {R::y_plus, -kPi}},
      {{R::y, -kPi / 2}},
      {{R::x, kPi / 2}},
      {{R::x_plus, -kPi / 2}, {R::y, -kPi}},
      {{R::y_plus, kPi / 2}, {R::y, -kPi}},
      {{R::x_plus, kPi / 2}},
      {{R::y_plus, kPi / 2}},
      {{R::x_plus, kPi}, {R::y, kPi / 2}},
      {{R::x_plus, -kPi}, {R::x, -kPi / 2}},
      {{R::y, kPi / 2}, {R::x_plus, -kPi}, {R::y, -kPi}},
      {{R::y, kPi / 2}, {R::y_plus, kPi}, {R::y, -kPi}},
  };
  if (i < 1 || i > 16)
    throw std::invalid_argument("prep_sequence: index out of range 1..16");
  PulseProgram prog;
  for (const auto& [axis, theta] : table[i - 1])
    prog.instructions.emplace_back(rotation(axis, theta, p));
  return prog;
}

Vec6 prep_state(int i) {
  if (i < 1 || i > 16)
    throw std::invalid_argument("prep_state: index out of range 1..16");
  const double s = 1.0 / std::sqrt(2.0);
  const cxd j(0.0, 1.0);
  Vec6 v = Vec6::Zero();
  switch (i) {
    case 1: v(kD0) = 1.0; break;
    case 2: v(kD1) = 1.0; break;
    case 3: v(kS0) = 1.0; break;
    case 4: v(kS1) = 1.0; break;
    case 5: v(kD0) = s; v(kD1) = s; break;
    case 6: v(kD0) = s; v(kD1) = j * s; break;
    case 7: v(kD0) = s; v(kS0) = s; break;
    case 8: v(kD0) = s; v(kS0) = j * s; break;
    case 9: v(kD0) = s; v(kS1) = s; break;
    case 10: v(kD0) = s; v(kS1) = j * s; break;
    case 11: v(kD1) = s; v(kS0) = s; break;
    case 12: v(kD1) = s; v(kS0) = j * s; break;
    case 13: v(kD1) = s; v(kS1) = s; break;
    case 14: v(kD1) = s; v(kS1) = j * s; break;
    case 15: v(kS0) = s; v(kS1) = s; break;
    case 16: v(kS0) = s; v(kS1) = j * s; break;
  }
  return v;
}

PulseProgram cnot_sequence(const TrapLaserParams& p) {
  // Numerically synthesized realization of the gate on {D,S}x{0,1}: the
  // atomic qubit conditions a Z on |D> and an iY flip on |S> of the motional
  // qubit, exact on the computational block up to a global phase.
  //
  // Carrier/sideband pulse areas are closed-form; the three phase constants
  // below are roots of the matching conditions, accurate to full double
  // precision (residual operator error ~1e-15). The trailing pair of carrier
  // pi pulses implements the atomic-frame z rotation the alternating core
  // leaves over, so the block phases land exactly.
  const double b = 2.18886261214098;        // shared phase of the outer sidebands
  const double c0 = 2.3484598065223388;     // phase of the outer carriers
  const double c2 = -2.2763958930016654;    // phase of the inner carriers
  const double rt2 = std::sqrt(2.0);
  using T = Transition;
  const struct {
    Transition tr;
    double theta, phi;
  } steps[] = {
      {T::carrier, -kPi / rt2, c0},
      {T::blue_sideband, -kPi / rt2, b},
      {T::blue_sideband, kPi / rt2, 0.0},
      {T::carrier, -kPi / 2.0, c2},
      {T::blue_sideband, rt2 * kPi, 0.0},
      {T::carrier, -kPi / 2.0, c2 + kPi},
      {T::blue_sideband, kPi / rt2, 0.0},
      {T::blue_sideband, -kPi / rt2, b},
      {T::carrier, -kPi / rt2, c0 - kPi},
      {T::carrier, kPi, 0.0},
      {T::carrier, kPi, kPi / 2.0},
  };
  PulseProgram prog;
  for (const auto& s : steps)
    prog.instructions.emplace_back(make_pulse(s.tr, s.theta, s.phi, p));
  return prog;
}

PulseProgram compile(const PulseProgram& prog, const TrapLaserParams& p,
                     double detect_window) {
  validate_program(prog, "compile");
  PulseProgram out;
  compile_level(prog.instructions, out.instructions, p, detect_window,
                StarkLedger{});
  return out;
}

std::string dump_program(const PulseProgram& prog) {
  std::string out;
  dump_level(prog.instructions, 0, out);
  return out;
}

ExactRunResult run_exact(const PulseProgram& prog, const Mat6& rho0,
                         RunMode mode, const TrapLaserParams& p,
                         double detect_window, const NoiseHook* noise) {
  validate_program(prog, "run_exact");
  ExactRunResult res;
  ExactWalk walk{mode, p, detect_window, noise, res.bright, PhysCtx{}};
  Mat6 rho = walk.level(prog.instructions, rho0);
  if (mode == RunMode::physical) {
    const Mat6 W = frame_unwind(p, walk.ctx.ledger);
    rho = W * rho * W.adjoint();
  }
  const double tr = rho.trace().real();
  res.rho = rho / tr;
  return res;
}

ShotRunResult run_shot(const PulseProgram& prog, const Mat6& rho0,
                       RunMode mode, const TrapLaserParams& p, Rng& rng,
                       double detect_window, const NoiseHook* noise) {
  validate_program(prog, "run_shot");
  ShotRunResult res;
  ShotWalk walk{mode, p, detect_window, noise, rng, res.outcome, PhysCtx{}};
  Mat6 rho = walk.level(prog.instructions, rho0);
  if (mode == RunMode::physical) {
    const Mat6 W = frame_unwind(p, walk.ctx.ledger);
    rho = W * rho * W.adjoint();
  }
  const double tr = rho.trace().real();
  res.rho = rho / tr;
  return res;
}

std::map<std::string, ShotTally> run_shots(const PulseProgram& prog,
                                           const Mat6& rho0, RunMode mode,
                                           const TrapLaserParams& p,
                                           int nshots, std::uint64_t seed,
                                           double detect_window) {
  validate_program(prog, "run_shots");
  std::map<std::string, ShotTally> tally;
  std::set<std::string> labels;
  validate_level(prog.instructions, 0, labels, "run_shots");
  for (const auto& l : labels) tally[l] = ShotTally{0, 0, nshots};
  for (int k = 0; k < nshots; ++k) {
    Rng rng = Rng::stream(seed, static_cast<std::uint64_t>(k));
    const ShotRunResult one =
        run_shot(prog, rho0, mode, p, rng, detect_window, nullptr);
    for (const auto& [label, hit] : one.outcome) {
      auto& t = tally[label];
      ++t.reached;
      t.bright += hit;
    }
  }
  return tally;
}

} // namespace ionsim
