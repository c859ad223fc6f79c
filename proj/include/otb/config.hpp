// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <map>
#include <string>
#include <vector>

#include "otb/common.hpp"
#include "otb/models.hpp"
#include "otb/polybasis.hpp"
#include "otb/solver.hpp"

namespace otb {

/// Sectioned key = value configuration file (a TOML subset): `[section]`
/// headers, scalar / string / boolean / flat-array values, `#` comments.
///
/// Readers mark keys as consumed; `require_all_consumed` turns every leftover
/// key into a hard error, so typos never pass silently.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse(const std::string& text, std::string origin = "<inline>");

  bool has(const std::string& key) const;

  double number(const std::string& key);
  double number_or(const std::string& key, double fallback);
  long integer(const std::string& key);
  long integer_or(const std::string& key, long fallback);
  bool boolean_or(const std::string& key, bool fallback);
  std::string str(const std::string& key);
  std::string str_or(const std::string& key, const std::string& fallback);
  /// Numeric array; a scalar reads as a one-element array.
  std::vector<double> numbers(const std::string& key);
  /// String array; a scalar string reads as a one-element array.
  std::vector<std::string> strs(const std::string& key);
  /// Array of exactly `dim` numbers, or a scalar broadcast to `dim`.
  Vec vec_broadcast(const std::string& key, int dim);

  /// ConfigError naming every key that no reader consumed.
  void require_all_consumed() const;
  /// Canonical re-rendering of the full configuration (the resolved copy
  /// written next to run outputs).
  std::string resolved() const;
  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    enum class Kind { Number, Boolean, String, NumberArray, StringArray };
    Kind kind = Kind::Number;
    double num = 0.0;
    bool flag = false;
    std::string text;
    std::vector<double> nums;
    std::vector<std::string> strs;
    int line = 0;
    bool consumed = false;
  };
  Entry& fetch(const std::string& key, Entry::Kind want);
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;

  std::string origin_ = "<inline>";
  std::map<std::string, Entry> entries_;
};

/// Builds the prior described by `[section]` (kind, dim, per-kind parameters).
PriorModel prior_from_config(Config& cfg, const std::string& section = "prior");
/// True when `[likelihood] kind` is present and not "none".
bool has_likelihood(Config& cfg);
LikelihoodModel likelihood_from_config(Config& cfg, int dim);
FitOptions solver_from_config(Config& cfg);
int basis_degree_from_config(Config& cfg);

}  // namespace otb
