// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "otb/sampleset.hpp"
#include "otb/util.hpp"

namespace otb {
namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

bool valid_name(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

/// Strips a trailing # comment, respecting double-quoted strings.
std::string strip_comment(const std::string& line) {
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == '#' && !quoted) return line.substr(0, i);
  }
  return line;
}

bool parse_number(const std::string& tok, double& out) {
  if (tok.empty()) return false;
  char* end = nullptr;
  out = std::strtod(tok.c_str(), &end);
  return end == tok.c_str() + tok.size();
}

const char* kind_name(int k) {
  switch (k) {
    case 0: return "number";
    case 1: return "boolean";
    case 2: return "string";
    case 3: return "number array";
    default: return "string array";
  }
}

}  // namespace

Config Config::parse(const std::string& text, std::string origin) {
  Config cfg;
  cfg.origin_ = std::move(origin);
  std::istringstream in(text);
  std::string raw, section;
  int line_no = 0;
  const auto die = [&](const std::string& msg) {
    throw ConfigError(cfg.origin_ + ":" + std::to_string(line_no) + ": " + msg);
  };

  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(strip_comment(raw));
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') die("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_name(section)) die("bad section name '" + section + "'");
      continue;
    }

    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) die("expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (!valid_name(key)) die("bad key name '" + key + "'");
    if (val.empty()) die("missing value for '" + key + "'");

    const std::string full = section.empty() ? key : section + "." + key;
    if (cfg.entries_.count(full)) die("duplicate key '" + full + "'");

    Entry e;
    e.line = line_no;
    if (val == "true" || val == "false") {
      e.kind = Entry::Kind::Boolean;
      e.flag = val == "true";
    } else if (val.front() == '"') {
      if (val.size() < 2 || val.back() != '"')
        die("unterminated string for '" + key + "'");
      e.kind = Entry::Kind::String;
      e.text = val.substr(1, val.size() - 2);
      if (e.text.find('"') != std::string::npos)
        die("embedded quote in string for '" + key + "'");
    } else if (val.front() == '[') {
      if (val.back() != ']') die("unterminated array for '" + key + "'");
      std::string body = val.substr(1, val.size() - 2);
      std::vector<std::string> toks;
      std::string tok;
      std::istringstream items(body);
      while (std::getline(items, tok, ',')) {
        tok = trim(tok);
        if (!tok.empty()) toks.push_back(tok);
      }
      if (!toks.empty() && toks.front().front() == '"') {
        e.kind = Entry::Kind::StringArray;
        for (const std::string& t : toks) {
          if (t.size() < 2 || t.front() != '"' || t.back() != '"')
            die("bad string element in '" + key + "'");
          e.strs.push_back(t.substr(1, t.size() - 2));
        }
      } else {
        e.kind = Entry::Kind::NumberArray;
        for (const std::string& t : toks) {
          double x;
          if (!parse_number(t, x))
            die("bad number '" + t + "' in array '" + key + "'");
          e.nums.push_back(x);
        }
      }
    } else {
      double x;
      if (!parse_number(val, x))
        die("bad value '" + val + "' for '" + key + "'");
      e.kind = Entry::Kind::Number;
      e.num = x;
    }
    cfg.entries_.emplace(full, std::move(e));
  }
  return cfg;
}

Config Config::parse_file(const std::string& path) {
  return parse(read_text_file(path), path);
}

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

void Config::fail(const std::string& key, const std::string& what) const {
  throw ConfigError(origin_ + ": key '" + key + "' " + what);
}

Config::Entry& Config::fetch(const std::string& key, Entry::Kind want) {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "is required but missing");
  Entry& e = it->second;
  if (e.kind != want)
    fail(key, std::string("has type ") + kind_name(static_cast<int>(e.kind)) +
                  ", expected " + kind_name(static_cast<int>(want)));
  e.consumed = true;
  return e;
}

double Config::number(const std::string& key) {
  return fetch(key, Entry::Kind::Number).num;
}

double Config::number_or(const std::string& key, double fallback) {
  return has(key) ? number(key) : fallback;
}

long Config::integer(const std::string& key) {
  const double x = number(key);
  const long i = static_cast<long>(x);
  if (static_cast<double>(i) != x) fail(key, "must be an integer");
  return i;
}

long Config::integer_or(const std::string& key, long fallback) {
  return has(key) ? integer(key) : fallback;
}

bool Config::boolean_or(const std::string& key, bool fallback) {
  return has(key) ? fetch(key, Entry::Kind::Boolean).flag : fallback;
}

std::string Config::str(const std::string& key) {
  return fetch(key, Entry::Kind::String).text;
}

std::string Config::str_or(const std::string& key, const std::string& fallback) {
  return has(key) ? str(key) : fallback;
}

std::vector<double> Config::numbers(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "is required but missing");
  if (it->second.kind == Entry::Kind::Number) {
    it->second.consumed = true;
    return {it->second.num};
  }
  return fetch(key, Entry::Kind::NumberArray).nums;
}

std::vector<std::string> Config::strs(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) fail(key, "is required but missing");
  if (it->second.kind == Entry::Kind::String) {
    it->second.consumed = true;
    return {it->second.text};
  }
  return fetch(key, Entry::Kind::StringArray).strs;
}

Vec Config::vec_broadcast(const std::string& key, int dim) {
  const std::vector<double> v = numbers(key);
  if (v.size() == 1) return Vec::Constant(dim, v[0]);
  if (static_cast<int>(v.size()) != dim)
    fail(key, "needs 1 or " + std::to_string(dim) + " entries, got " +
                  std::to_string(v.size()));
  return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void Config::require_all_consumed() const {
  std::string unknown;
  for (const auto& [key, e] : entries_) {
    if (e.consumed) continue;
    if (!unknown.empty()) unknown += ", ";
    unknown += key;
  }
  if (!unknown.empty())
    throw ConfigError(origin_ + ": unknown key(s): " + unknown);
}

std::string Config::resolved() const {
  // Root keys must precede every section header: a bare key rendered after a
  // header would re-parse into that section.  Map order then groups "a.b"
  // keys by section.
  std::ostringstream out;
  std::string section;
  bool first = true;
  std::vector<const std::pair<const std::string, Entry>*> ordered;
  for (const auto& kv : entries_)
    if (kv.first.find('.') == std::string::npos) ordered.push_back(&kv);
  for (const auto& kv : entries_)
    if (kv.first.find('.') != std::string::npos) ordered.push_back(&kv);
  for (const auto* kv : ordered) {
    const std::string& key = kv->first;
    const Entry& e = kv->second;
    const std::size_t dot = key.find('.');
    const std::string sec = dot == std::string::npos ? "" : key.substr(0, dot);
    const std::string name = dot == std::string::npos ? key : key.substr(dot + 1);
    if (sec != section || first) {
      if (!first) out << "\n";
      if (!sec.empty()) out << "[" << sec << "]\n";
      section = sec;
      first = false;
    }
    out << name << " = ";
    switch (e.kind) {
      case Entry::Kind::Number:
        out << format_double(e.num);
        break;
      case Entry::Kind::Boolean:
        out << (e.flag ? "true" : "false");
        break;
      case Entry::Kind::String:
        out << '"' << e.text << '"';
        break;
      case Entry::Kind::NumberArray: {
        out << "[";
        for (std::size_t i = 0; i < e.nums.size(); ++i)
          out << (i ? ", " : "") << format_double(e.nums[i]);
        out << "]";
        break;
      }
      case Entry::Kind::StringArray: {
        out << "[";
        for (std::size_t i = 0; i < e.strs.size(); ++i)
          out << (i ? ", " : "") << '"' << e.strs[i] << '"';
        out << "]";
        break;
      }
    }
    out << "\n";
  }
  return out.str();
}

// ---------------------------------------------------------------------------

PriorModel prior_from_config(Config& cfg, const std::string& section) {
  const std::string kind = cfg.str(section + ".kind");
  const int dim = static_cast<int>(cfg.integer_or(section + ".dim", 1));
  if (dim < 1) throw ConfigError(section + ".dim must be >= 1");
  if (kind == "gaussian") {
    const Vec mean = cfg.has(section + ".mean")
                         ? cfg.vec_broadcast(section + ".mean", dim)
                         : Vec::Zero(dim);
    const Vec var = cfg.vec_broadcast(section + ".var", dim);
    return PriorModel::gaussian(mean, var.asDiagonal());
  }
  if (kind == "uniform") {
    return PriorModel::uniform_box(cfg.vec_broadcast(section + ".lo", dim),
                                   cfg.vec_broadcast(section + ".hi", dim));
  }
  if (kind == "exponential") {
    return PriorModel::exponential(cfg.vec_broadcast(section + ".rate", dim));
  }
  if (kind == "laplace") {
    return PriorModel::laplace(cfg.vec_broadcast(section + ".scale", dim));
  }
  if (kind == "gamma") {
    return PriorModel::gamma(cfg.vec_broadcast(section + ".shape", dim),
                             cfg.vec_broadcast(section + ".scale", dim));
  }
  throw ConfigError(section + ".kind: unknown prior kind '" + kind + "'");
}

bool has_likelihood(Config& cfg) {
  if (!cfg.has("likelihood.kind")) return false;
  return cfg.str_or("likelihood.kind", "none") != "none";
}

LikelihoodModel likelihood_from_config(Config& cfg, int dim) {
  const std::string kind = cfg.str("likelihood.kind");
  if (kind == "poisson") {
    std::vector<long> counts;
    for (double c : cfg.numbers("likelihood.counts")) {
      if (c < 0 || c != std::floor(c))
        throw ConfigError("likelihood.counts must be non-negative integers");
      counts.push_back(static_cast<long>(c));
    }
    if (static_cast<int>(counts.size()) != dim)
      throw ConfigError("likelihood.counts must have one entry per dimension");
    return LikelihoodModel::poisson_counts(counts);
  }
  if (kind == "gaussian_linear") {
    const std::vector<double> flat = cfg.numbers("likelihood.matrix");
    if (flat.size() % static_cast<std::size_t>(dim) != 0)
      throw ConfigError("likelihood.matrix length must be a multiple of dim");
    const int m = static_cast<int>(flat.size()) / dim;
    Mat M(m, dim);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < dim; ++c)
        M(r, c) = flat[static_cast<std::size_t>(r * dim + c)];
    const Vec noise = cfg.vec_broadcast("likelihood.noise_var", m);
    const Vec y = cfg.vec_broadcast("likelihood.y", m);
    return LikelihoodModel::gaussian_linear(M, noise.asDiagonal(), y);
  }
  if (kind == "logistic") {
    if (cfg.has("likelihood.data")) {
      const ObservationTable obs = read_observations_csv(cfg.str("likelihood.data"));
      if (!obs.has_labels)
        throw ConfigError("likelihood.data needs a 'label' column");
      if (obs.features().cols() != dim)
        throw ConfigError("likelihood.data feature count must match dim");
      return LikelihoodModel::logistic(obs.features(), obs.labels,
                                       cfg.number_or("likelihood.offset", 0.0));
    }
    const std::vector<double> flat = cfg.numbers("likelihood.features");
    if (flat.size() % static_cast<std::size_t>(dim) != 0)
      throw ConfigError("likelihood.features length must be a multiple of dim");
    const int m = static_cast<int>(flat.size()) / dim;
    Mat F(m, dim);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < dim; ++c)
        F(r, c) = flat[static_cast<std::size_t>(r * dim + c)];
    std::vector<int> labels;
    for (double c : cfg.numbers("likelihood.labels")) {
      if (c != 0.0 && c != 1.0) throw ConfigError("likelihood.labels must be 0/1");
      labels.push_back(static_cast<int>(c));
    }
    if (static_cast<int>(labels.size()) != m)
      throw ConfigError("likelihood.labels must match the feature rows");
    return LikelihoodModel::logistic(F, labels,
                                     cfg.number_or("likelihood.offset", 0.0));
  }
  if (kind == "spectral") {
    const std::vector<double> sizes = cfg.numbers("likelihood.group_sizes");
    if (static_cast<int>(sizes.size()) != dim)
      throw ConfigError("likelihood.group_sizes must have one entry per dimension");
    const std::vector<double> flat = cfg.numbers("likelihood.magnitudes");
    std::vector<Vec> groups;
    std::size_t pos = 0;
    for (double sz : sizes) {
      if (sz < 1 || sz != std::floor(sz))
        throw ConfigError("likelihood.group_sizes must be positive integers");
      const std::size_t k = static_cast<std::size_t>(sz);
      if (pos + k > flat.size())
        throw ConfigError("likelihood.magnitudes shorter than group_sizes total");
      groups.push_back(Eigen::Map<const Vec>(flat.data() + pos,
                                             static_cast<Eigen::Index>(k)));
      pos += k;
    }
    if (pos != flat.size())
      throw ConfigError("likelihood.magnitudes longer than group_sizes total");
    return LikelihoodModel::spectral_magnitude(groups,
                                               cfg.number("likelihood.noise_var"));
  }
  throw ConfigError("likelihood.kind: unknown likelihood kind '" + kind + "'");
}

FitOptions solver_from_config(Config& cfg) {
  FitOptions o;
  o.max_iters = static_cast<int>(cfg.integer_or("solver.max_iters", o.max_iters));
  o.grad_tol = cfg.number_or("solver.grad_tol", o.grad_tol);
  o.shrink = cfg.number_or("solver.shrink", o.shrink);
  o.armijo_c = cfg.number_or("solver.armijo_c", o.armijo_c);
  o.eps_det = cfg.number_or("solver.eps_det", o.eps_det);
  o.newton_param_limit =
      static_cast<int>(cfg.integer_or("solver.newton_param_limit", o.newton_param_limit));
  if (o.max_iters < 1 || o.grad_tol <= 0 || o.shrink <= 0 || o.shrink >= 1 ||
      o.armijo_c <= 0 || o.eps_det <= 0)
    throw ConfigError("solver options out of range");
  return o;
}

int basis_degree_from_config(Config& cfg) {
  const int p = static_cast<int>(cfg.integer_or("basis.degree", 3));
  if (p < 1 || p > 10) throw ConfigError("basis.degree must be in [1, 10]");
  return p;
}

}  // namespace otb
