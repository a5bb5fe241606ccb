// Command-line front end for the single-ion simulator.
#include <CLI11.hpp>

#include <ionsim/config.hpp>
#include <ionsim/frames.hpp>
#include <ionsim/sequencer.hpp>
#include <ionsim/version.hpp>

#include <cstdio>
#include <stdexcept>
#include <string>

namespace {

ionsim::Config load_config(const std::string& path) {
  if (path.empty()) return ionsim::Config();
  return ionsim::Config::from_file(path);
}

ionsim::PulseProgram named_sequence(const std::string& name,
                                    const ionsim::TrapLaserParams& tp) {
  if (name == "cnot") return ionsim::cnot_sequence(tp);
  if (name.rfind("prep", 0) == 0) {
    const int idx = std::stoi(name.substr(4));
    return ionsim::prep_sequence(idx, tp);
  }
  throw std::invalid_argument("unknown sequence '" + name +
                              "' (expected cnot or prep1..prep16)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single trapped-ion gate simulator and analysis toolkit"};
  app.set_version_flag("--version", std::string(ionsim::kVersion));
  app.require_subcommand(1);

  std::string config_path;
  app.add_option("--config", config_path, "configuration file (dotted keys)")
      ->check(CLI::ExistingFile);

  auto* print_cfg = app.add_subcommand(
      "print-config", "resolve the configuration and print its canonical form");

  auto* dump = app.add_subcommand(
      "dump-sequence", "print a pulse program in the sequencer text format");
  std::string seq_name;
  bool nominal = false;
  double window_us = 0.0;
  dump->add_option("sequence", seq_name, "cnot or prep1..prep16")->required();
  dump->add_flag("--nominal", nominal,
                 "print designed phases instead of compiled command phases");
  dump->add_option("--window-us", window_us,
                   "detection window assumed when compiling, microseconds");

  CLI11_PARSE(app, argc, argv);

  try {
    if (print_cfg->parsed()) {
      const auto cfg = load_config(config_path);
      std::printf("# settings hash %016llx\n",
                  static_cast<unsigned long long>(cfg.hash()));
      std::fputs(cfg.canonical_text().c_str(), stdout);
    } else if (dump->parsed()) {
      const auto cfg = load_config(config_path);
      const auto tp = ionsim::trap_params_from_config(cfg);
      auto prog = named_sequence(seq_name, tp);
      if (!nominal) prog = ionsim::compile(prog, tp, window_us * 1e-6);
      std::printf("# settings hash %016llx\n",
                  static_cast<unsigned long long>(cfg.hash()));
      std::printf("# sequence %s (%s), duration %.6g us\n", seq_name.c_str(),
                  nominal ? "nominal" : "compiled",
                  prog.total_duration(window_us * 1e-6) * 1e6);
      std::fputs(ionsim::dump_program(prog).c_str(), stdout);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
