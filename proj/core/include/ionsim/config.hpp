#pragma once

#include <cstdint>
#include <map>
#include <string>

// Flat dotted-key configuration ("trap.omega_sec_hz = 1.32e6"). One value
// per line, '#' comments, no nesting. Unknown keys are rejected so typos
// surface immediately; missing keys fall back to the documented defaults.

namespace ionsim {

class Config {
 public:
  // defaults only
  Config();

  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::string get_string(const std::string& key) const;

  void set(const std::string& key, const std::string& value);

  // canonical "key = value" text, sorted by key; basis for the settings hash
  std::string canonical_text() const;

  // FNV-1a over the canonical text; printed in output provenance headers
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& entries() const { return kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

} // namespace ionsim
