// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/sampleset.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "otb/util.hpp"

namespace otb {

using nlohmann::json;

SampleSet feasible_rows(const SampleSet& s) {
  if (s.feasible.empty() || s.n_infeasible == 0) return s;
  SampleSet out;
  out.seed = s.seed;
  out.source = s.source;
  out.map_hash = s.map_hash;
  out.X.resize(static_cast<Eigen::Index>(s.n() - s.n_infeasible), s.dim());
  Eigen::Index r = 0;
  for (std::size_t i = 0; i < s.n(); ++i)
    if (s.feasible[i]) out.X.row(r++) = s.X.row(static_cast<Eigen::Index>(i));
  return out;
}

void write_samples_csv(const SampleSet& s, const std::string& path) {
  std::ostringstream out;
  const int d = s.dim();
  for (int a = 0; a < d; ++a) out << (a ? "," : "") << "x" << (a + 1);
  if (!s.feasible.empty()) out << ",feasible";
  out << "\n";
  for (std::size_t i = 0; i < s.n(); ++i) {
    for (int a = 0; a < d; ++a) {
      if (a) out << ",";
      out << format_double(s.X(static_cast<Eigen::Index>(i), a));
    }
    if (!s.feasible.empty()) out << "," << int(s.feasible[i]);
    out << "\n";
  }
  write_text_file(path, out.str());

  json meta;
  meta["seed"] = s.seed;
  meta["source"] = s.source;
  meta["map_hash"] = s.map_hash;
  meta["n"] = s.n();
  meta["dim"] = s.dim();
  meta["n_infeasible"] = s.n_infeasible;
  write_text_file(path + ".meta.json", meta.dump(2) + "\n");
}

namespace {
std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_field(const std::string& s, const std::string& path) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0')
    throw CorruptFile("non-numeric field '" + s + "' in " + path);
  return v;
}
}  // namespace

SampleSet read_samples_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("cannot open samples file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw CorruptFile("empty samples file: " + path);
  auto header = split_csv_line(line);
  int d = 0;
  bool has_flags = false;
  for (const auto& h : header) {
    if (h == "feasible") {
      has_flags = true;
    } else if (h.size() >= 2 && h[0] == 'x') {
      ++d;
    } else {
      throw CorruptFile("unexpected column '" + h + "' in " + path);
    }
  }
  if (d == 0) throw CorruptFile("no coordinate columns in " + path);

  std::vector<std::vector<double>> rows;
  std::vector<std::uint8_t> flags;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (static_cast<int>(f.size()) != d + (has_flags ? 1 : 0))
      throw CorruptFile("ragged row in " + path);
    std::vector<double> r(d);
    for (int a = 0; a < d; ++a) r[a] = parse_field(f[a], path);
    rows.push_back(std::move(r));
    if (has_flags)
      flags.push_back(static_cast<std::uint8_t>(parse_field(f[d], path) != 0.0));
  }

  SampleSet s;
  s.X.resize(static_cast<Eigen::Index>(rows.size()), d);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (int a = 0; a < d; ++a) s.X(static_cast<Eigen::Index>(i), a) = rows[i][a];
  s.feasible = std::move(flags);
  s.n_infeasible = static_cast<std::size_t>(
      std::count(s.feasible.begin(), s.feasible.end(), std::uint8_t{0}));

  std::ifstream meta_in(path + ".meta.json");
  if (meta_in) {
    json meta = json::parse(meta_in, nullptr, false);
    if (!meta.is_discarded()) {
      s.seed = meta.value("seed", std::uint64_t{0});
      s.source = meta.value("source", std::string{});
      s.map_hash = meta.value("map_hash", std::string{});
    }
  }
  return s;
}

Mat ObservationTable::features() const {
  std::vector<int> keep;
  for (int c = 0; c < static_cast<int>(columns.size()); ++c)
    if (columns[static_cast<std::size_t>(c)] != "label") keep.push_back(c);
  Mat f(values.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j)
    f.col(static_cast<Eigen::Index>(j)) = values.col(keep[j]);
  return f;
}

ObservationTable read_observations_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw CorruptFile("cannot open observations file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw CorruptFile("empty observations file: " + path);
  ObservationTable t;
  t.columns = split_csv_line(line);
  int label_col = -1;
  for (int c = 0; c < static_cast<int>(t.columns.size()); ++c)
    if (t.columns[static_cast<std::size_t>(c)] == "label") label_col = c;
  t.has_labels = label_col >= 0;

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != t.columns.size()) throw CorruptFile("ragged row in " + path);
    std::vector<double> r(f.size());
    for (std::size_t c = 0; c < f.size(); ++c) r[c] = parse_field(f[c], path);
    rows.push_back(std::move(r));
  }
  t.values.resize(static_cast<Eigen::Index>(rows.size()),
                  static_cast<Eigen::Index>(t.columns.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      t.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i][c];
  if (t.has_labels) {
    for (Eigen::Index i = 0; i < t.values.rows(); ++i) {
      double v = t.values(i, label_col);
      if (v != 0.0 && v != 1.0)
        throw CorruptFile("label column must be 0 or 1 in " + path);
      t.labels.push_back(static_cast<int>(v));
    }
  }
  return t;
}

}  // namespace otb
