#include <benchmark/benchmark.h>

#include <ionsim/frames.hpp>
#include <ionsim/qlinalg.hpp>

#include <cmath>

namespace {

ionsim::TrapLaserParams trap() {
  ionsim::TrapLaserParams tp;
  tp.omega_sec = 2.0 * M_PI * 1.32e6;
  tp.eta = 0.0616;
  tp.Omega = 2.0 * M_PI * 125e3;
  return tp;
}

void BM_GatePropagator(benchmark::State& state) {
  const auto tp = trap();
  ionsim::PulseParams pp{tp.omega_sec, 0.4, 65e-6, 12e-6};
  for (auto _ : state) {
    benchmark::DoNotOptimize(ionsim::gate_propagator(tp, pp));
  }
}
BENCHMARK(BM_GatePropagator);

void BM_ExpmHermitian(benchmark::State& state) {
  const auto tp = trap();
  ionsim::PulseParams pp{tp.omega_sec, 0.4, 65e-6, 12e-6};
  const ionsim::Mat6 h = ionsim::laser_frame_hamiltonian(tp, pp);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ionsim::expm_hermitian(h, 65e-6));
  }
}
BENCHMARK(BM_ExpmHermitian);

}  // namespace

BENCHMARK_MAIN();
