#pragma once

// Flat key=value configuration with per-key provenance.
//
// A config file holds one `key = value` per line; `#` starts a comment. A run
// manifest is written in the same format (each line tagged with where its
// value came from), so any manifest can be fed back through --config.

#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "npi/connectome.hpp"
#include "npi/error.hpp"

namespace npi {

enum class ValueSource { builtin, profile, config, cli };

inline std::string to_string(ValueSource s) {
  switch (s) {
    case ValueSource::builtin: return "default";
    case ValueSource::profile: return "profile";
    case ValueSource::config: return "config";
    case ValueSource::cli: return "cli";
  }
  return "?";
}

inline std::map<std::string, std::string> load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open config file " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(line.substr(0, eq));
    if (key.empty()) fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": empty key");
    kv[key] = detail::trim(line.substr(eq + 1));
  }
  return kv;
}

/// Declared options of one command, resolved as flag > config file > profile > default.
class Settings {
 public:
  explicit Settings(std::string command) : command_(std::move(command)) {}

  void declare(const std::string& key, std::string default_value) {
    if (!index_.count(key)) {
      index_[key] = entries_.size();
      entries_.push_back({key, std::move(default_value), ValueSource::builtin});
    }
  }

  void set_cli(const std::string& key, std::string value) { set(key, std::move(value), ValueSource::cli); }

  /// Replaces a built-in default with a profile default (e.g. --desk); values
  /// given on the command line or in a config file are left alone.
  void set_profile(const std::string& key, std::string value) {
    if (entry(key).source == ValueSource::builtin) set(key, std::move(value), ValueSource::profile);
  }

  /// Applies file values to keys not already set on the command line.
  /// Unknown keys are rejected so a typo cannot silently fall back to a default.
  void apply_config(const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
      if (key == "command") {
        if (value != command_)
          fail(ErrorKind::validation, "config file is for command '" + value + "', not '" + command_ + "'");
        continue;
      }
      if (!index_.count(key)) fail(ErrorKind::validation, "unknown config key '" + key + "' for " + command_);
      if (entries_[index_.at(key)].source != ValueSource::cli) set(key, value, ValueSource::config);
    }
  }

  const std::string& str(const std::string& key) const { return entry(key).value; }
  ValueSource source(const std::string& key) const { return entry(key).source; }
  bool has_value(const std::string& key) const { return !entry(key).value.empty(); }

  double real(const std::string& key) const {
    const auto& v = str(key);
    double out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      fail(ErrorKind::invalid_argument, "option " + key + ": '" + v + "' is not a number");
    return out;
  }

  std::uint64_t integer(const std::string& key) const {
    const auto& v = str(key);
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
      fail(ErrorKind::invalid_argument, "option " + key + ": '" + v + "' is not a non-negative integer");
    return out;
  }

  std::size_t size(const std::string& key) const { return static_cast<std::size_t>(integer(key)); }

  bool flag(const std::string& key) const {
    const auto& v = str(key);
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no" || v.empty()) return false;
    fail(ErrorKind::invalid_argument, "option " + key + ": '" + v + "' is not a boolean");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    for (auto& s : detail::split_csv(str(key)))
      if (auto t = detail::trim(s); !t.empty()) out.push_back(t);
    return out;
  }

  const std::string& command() const { return command_; }

  void write_manifest(const std::filesystem::path& path) const {
    std::ofstream out(path);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write manifest " + path.string());
    out << "command = " << command_ << '\n';
    for (const auto& e : entries_) out << e.key << " = " << e.value << "  # " << to_string(e.source) << '\n';
  }

 private:
  struct Entry {
    std::string key, value;
    ValueSource source;
  };

  const Entry& entry(const std::string& key) const {
    const auto it = index_.find(key);
    if (it == index_.end()) fail(ErrorKind::invalid_argument, "undeclared option " + key);
    return entries_[it->second];
  }

  void set(const std::string& key, std::string value, ValueSource src) {
    const auto it = index_.find(key);
    if (it == index_.end()) fail(ErrorKind::invalid_argument, "undeclared option " + key);
    entries_[it->second].value = std::move(value);
    entries_[it->second].source = src;
  }

  std::string command_;
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

}  // namespace npi
