#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cf/errors.hpp"
#include "cf/model.hpp"

namespace cf {

// Line-oriented `section.key = value` files. `#` starts a comment, blank
// lines are skipped. Every key must be consumed by a typed getter; leftovers
// are reported as unknown keys with their line numbers, so typos fail loudly
// instead of silently running defaults.
class ConfigFile {
 public:
  static ConfigFile parse_string(const std::string& text, const std::string& origin = "<config>") {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::stringstream ss(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(ss, line)) {
      ++line_no;
      const std::string stripped = strip(line.substr(0, line.find('#')));
      if (stripped.empty()) continue;
      const std::size_t eq = stripped.find('=');
      if (eq == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected key = value");
      }
      const std::string key = strip(stripped.substr(0, eq));
      const std::string value = strip(stripped.substr(eq + 1));
      if (key.empty() || key.find('.') == std::string::npos) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": key must look like section.name");
      }
      if (cfg.entries_.count(key)) {
        throw ConfigError(origin + ":" + std::to_string(line_no) + ": duplicate key " + key);
      }
      cfg.entries_[key] = Entry{value, line_no};
    }
    return cfg;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path);
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  std::string get_string(const std::string& key, const std::string& fallback) {
    const Entry* e = take(key);
    return e ? e->value : fallback;
  }

  bool get_bool(const std::string& key, bool fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    if (e->value == "true") return true;
    if (e->value == "false") return false;
    throw ConfigError(where(key, *e) + ": expected true or false, got " + e->value);
  }

  double get_double(const std::string& key, double fallback) {
    const Entry* e = take(key);
    return e ? to_double(key, *e, e->value) : fallback;
  }

  std::size_t get_size(const std::string& key, std::size_t fallback) {
    const Entry* e = take(key);
    return e ? to_size(key, *e, e->value) : fallback;
  }

  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    return static_cast<std::uint64_t>(to_size(key, *e, e->value));
  }

  std::vector<double> get_double_list(const std::string& key, std::vector<double> fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    std::vector<double> out;
    for (const std::string& item : split_top_level(e->value)) out.push_back(to_double(key, *e, item));
    if (out.empty()) throw ConfigError(where(key, *e) + ": empty list");
    return out;
  }

  std::vector<std::size_t> get_size_list(const std::string& key, std::vector<std::size_t> fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    std::vector<std::size_t> out;
    for (const std::string& item : split_top_level(e->value)) out.push_back(to_size(key, *e, item));
    if (out.empty()) throw ConfigError(where(key, *e) + ": empty list");
    return out;
  }

  std::vector<std::string> get_string_list(const std::string& key,
                                           std::vector<std::string> fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    const auto out = split_top_level(e->value);
    if (out.empty()) throw ConfigError(where(key, *e) + ": empty list");
    return out;
  }

  std::vector<std::uint64_t> get_u64_list(const std::string& key,
                                          std::vector<std::uint64_t> fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    std::vector<std::uint64_t> out;
    for (const std::string& item : split_top_level(e->value)) {
      out.push_back(static_cast<std::uint64_t>(to_size(key, *e, item)));
    }
    if (out.empty()) throw ConfigError(where(key, *e) + ": empty list");
    return out;
  }

  // "none" or a step count.
  std::optional<std::size_t> get_optional_size(const std::string& key,
                                               std::optional<std::size_t> fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    if (e->value == "none") return std::nullopt;
    return to_size(key, *e, e->value);
  }

  // "default" or a layer list like "dense(16,128), relu, dropout(0.5)".
  std::vector<LayerSpec> get_layers(const std::string& key) {
    const Entry* e = take(key);
    if (!e || e->value == "default") return {};
    std::vector<LayerSpec> out;
    for (const std::string& item : split_top_level(e->value)) {
      out.push_back(parse_layer(key, *e, item));
    }
    if (out.empty()) throw ConfigError(where(key, *e) + ": empty layer list");
    return out;
  }

  // Call once after all getters: any key never consumed is unknown.
  void finish() const {
    std::string complaints;
    for (const auto& [key, entry] : entries_) {
      if (consumed_.count(key)) continue;
      if (!complaints.empty()) complaints += "; ";
      complaints += "unknown key " + key + " (" + origin_ + ":" + std::to_string(entry.line) + ")";
    }
    if (!complaints.empty()) throw ConfigError(complaints);
  }

 private:
  struct Entry {
    std::string value;
    std::size_t line = 0;
  };

  static std::string strip(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  }

  // Splits on commas that are not inside parentheses.
  static std::vector<std::string> split_top_level(const std::string& s) {
    std::vector<std::string> out;
    std::string current;
    int depth = 0;
    for (const char c : s) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (c == ',' && depth == 0) {
        const std::string item = strip(current);
        if (!item.empty()) out.push_back(item);
        current.clear();
      } else {
        current += c;
      }
    }
    const std::string item = strip(current);
    if (!item.empty()) out.push_back(item);
    return out;
  }

  std::string where(const std::string& key, const Entry& e) const {
    return origin_ + ":" + std::to_string(e.line) + ": " + key;
  }

  double to_double(const std::string& key, const Entry& e, const std::string& text) const {
    try {
      std::size_t used = 0;
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(where(key, e) + ": expected a number, got " + text);
    }
  }

  std::size_t to_size(const std::string& key, const Entry& e, const std::string& text) const {
    try {
      if (!text.empty() && text[0] == '-') throw std::invalid_argument(text);
      std::size_t used = 0;
      const unsigned long long v = std::stoull(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ConfigError(where(key, e) + ": expected a non-negative integer, got " + text);
    }
  }

  LayerSpec parse_layer(const std::string& key, const Entry& e, const std::string& text) const {
    const std::size_t open = text.find('(');
    const std::string name = open == std::string::npos ? text : strip(text.substr(0, open));
    std::vector<std::string> args;
    if (open != std::string::npos) {
      if (text.back() != ')') throw ConfigError(where(key, e) + ": malformed layer " + text);
      std::stringstream ss(text.substr(open + 1, text.size() - open - 2));
      std::string cell;
      while (std::getline(ss, cell, ',')) args.push_back(strip(cell));
    }
    const auto want = [&](std::size_t lo, std::size_t hi) {
      if (args.size() < lo || args.size() > hi) {
        throw ConfigError(where(key, e) + ": layer " + name + " takes " + std::to_string(lo) +
                          (hi != lo ? "-" + std::to_string(hi) : "") + " arguments");
      }
    };
    if (name == "dense") {
      want(2, 2);
      return LayerSpec::dense(to_size(key, e, args[0]), to_size(key, e, args[1]));
    }
    if (name == "conv") {
      want(3, 5);
      return LayerSpec::conv(to_size(key, e, args[0]), to_size(key, e, args[1]),
                             to_size(key, e, args[2]),
                             args.size() > 3 ? to_size(key, e, args[3]) : 1,
                             args.size() > 4 ? to_size(key, e, args[4]) : 0);
    }
    if (name == "relu") {
      want(0, 0);
      return LayerSpec::relu();
    }
    if (name == "flatten") {
      want(0, 0);
      return LayerSpec::flatten();
    }
    if (name == "dropout") {
      want(1, 1);
      return LayerSpec::dropout(to_double(key, e, args[0]));
    }
    throw ConfigError(where(key, e) + ": unknown layer kind " + name);
  }

  const Entry* take(const std::string& key) {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    consumed_.insert(key);
    return &it->second;
  }

  std::string origin_;
  std::map<std::string, Entry> entries_;
  std::set<std::string> consumed_;
};

// Shortest decimal form that parses back to exactly the same double.
inline std::string format_double(double v) {
  for (const int precision : {1, 3, 6, 9, 12, 15, 17}) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    try {
      if (std::stod(buf) == v) return buf;
    } catch (const std::exception&) {
      break;
    }
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_layers(const std::vector<LayerSpec>& layers) {
  if (layers.empty()) return "default";
  std::string out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i) out += ", ";
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::dense:
        out += "dense(" + std::to_string(l.in) + "," + std::to_string(l.out) + ")";
        break;
      case LayerKind::conv:
        out += "conv(" + std::to_string(l.in_ch) + "," + std::to_string(l.out_ch) + "," +
               std::to_string(l.ksize) + "," + std::to_string(l.stride) + "," +
               std::to_string(l.pad) + ")";
        break;
      case LayerKind::relu:
        out += "relu";
        break;
      case LayerKind::flatten:
        out += "flatten";
        break;
      case LayerKind::dropout:
        out += "dropout(" + format_double(l.rate) + ")";
        break;
    }
  }
  return out;
}

}  // namespace cf
