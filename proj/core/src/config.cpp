#include "ionsim/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ionsim {

namespace {

// Every key the artifact understands, with its default value. Frequencies in
// Hz here (converted to rad/s at the parameter-struct boundary), durations in
// seconds.
const std::map<std::string, std::string>& default_entries() {
  static const std::map<std::string, std::string> defaults = {
      {"trap.omega_sec_hz", "1.32e6"},     // secular frequency
      {"laser.eta", "0.0616"},             // Lamb-Dicke factor
      {"laser.rabi_hz", "125e3"},          // carrier Rabi frequency
      {"stark.delta0_hz", "-500"},         // detuning-independent light shift, scan fit-offset sign
      {"noise.linewidth_hz", "341"},       // quasi-static laser-frequency spread; 341 Hz puts the carrier Ramsey T2* at 660 us
      {"noise.intensity_slow_pp", "0.01"}, // run-to-run intensity spread, peak-to-peak
      {"noise.intensity_fast_pp", "0.001"},// pulse-to-pulse intensity spread, peak-to-peak
      {"noise.heating_quanta_per_s", "40"},
      {"detect.window_s", "250e-6"},       // fluorescence collection window
      {"mc.trajectories", "400"},          // Monte-Carlo sample count
  };
  return defaults;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

} // namespace

Config::Config() : kv_(default_entries()) {}

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": empty key or value");
    cfg.set(key, value);
  }
  return cfg;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

void Config::set(const std::string& key, const std::string& value) {
  if (default_entries().find(key) == default_entries().end())
    throw std::runtime_error("unknown config key: " + key);
  kv_[key] = value;
}

bool Config::has(const std::string& key) const { return kv_.count(key) > 0; }

double Config::get_double(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw std::runtime_error("unknown config key: " + key);
  char* end = nullptr;
  const double v = std::strtod(it->second.c_str(), &end);
  if (end == it->second.c_str() || *end != '\0')
    throw std::runtime_error("config key " + key + ": '" + it->second +
                             "' is not a number");
  return v;
}

int Config::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v)
    throw std::runtime_error("config key " + key + ": expected an integer");
  return i;
}

std::string Config::get_string(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw std::runtime_error("unknown config key: " + key);
  return it->second;
}

std::string Config::canonical_text() const {
  std::ostringstream out;
  for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
  return out.str();
}

std::uint64_t Config::hash() const {
  // FNV-1a, 64 bit
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : canonical_text()) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

} // namespace ionsim
