// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otb/common.hpp"

namespace otb {

/// A matrix of draws (one row per sample) plus the provenance needed to
/// reproduce it: the seed it was drawn under, a source descriptor, and the
/// fingerprint of the map it was pushed through (empty for raw prior draws).
struct SampleSet {
  Mat X;  // n x d, row-major order in serialized form
  std::uint64_t seed = 0;
  std::string source;
  std::string map_hash;
  /// Per-row feasibility flags filled in by push_samples (empty otherwise).
  std::vector<std::uint8_t> feasible;
  std::size_t n_infeasible = 0;

  std::size_t n() const { return static_cast<std::size_t>(X.rows()); }
  int dim() const { return static_cast<int>(X.cols()); }
  Vec row(std::size_t i) const { return X.row(static_cast<Eigen::Index>(i)); }
  double infeasible_fraction() const {
    return n() == 0 ? 0.0 : static_cast<double>(n_infeasible) / static_cast<double>(n());
  }
};

/// Copy keeping only rows whose feasibility flag is set; a set without flags
/// is returned unchanged.
SampleSet feasible_rows(const SampleSet& s);

/// Writes `path` with header x1,...,xd plus a `<path>.meta.json` sidecar
/// carrying seed, source, and map hash.
void write_samples_csv(const SampleSet& s, const std::string& path);
SampleSet read_samples_csv(const std::string& path);

/// Columns of an observation table; `label` is required by classifiers.
struct ObservationTable {
  std::vector<std::string> columns;
  Mat values;           // n x (#columns)
  std::vector<int> labels;  // parallel to rows when a label column exists
  bool has_labels = false;
  Mat features() const;  // all non-label columns
};

ObservationTable read_observations_csv(const std::string& path);

}  // namespace otb
