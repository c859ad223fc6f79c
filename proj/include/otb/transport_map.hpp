// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "otb/common.hpp"
#include "otb/models.hpp"
#include "otb/polybasis.hpp"
#include "otb/sampleset.hpp"

namespace otb {

/// Polynomial map S(x) = W phi(x) with W of shape d x K.
class TransportMap {
 public:
  TransportMap() = default;
  TransportMap(BasisSpec spec, Mat W, std::string fitted_for = {});

  const BasisSpec& spec() const { return spec_; }
  const Mat& W() const { return W_; }
  const std::string& fitted_for() const { return fitted_for_; }
  int dim() const { return spec_.dim(); }

  Vec apply(VecRef x) const;
  Mat jacobian(VecRef x) const;
  std::pair<Vec, Mat> apply_with_jacobian(VecRef x) const;

  /// Orientation check at x: positive Jacobian determinant and positive
  /// definite symmetric part.
  bool feasible_at(VecRef x) const;

  /// Fingerprint of the serialized map (stable across save/load).
  std::string hash() const;

 private:
  BasisSpec spec_;
  Mat W_;
  std::string fitted_for_;
};

/// The identity map expressed in the basis: W phi(x) = x, Jacobian I.
TransportMap identity_init(const BasisSpec& spec);

struct FeasibilityReport {
  std::size_t n_checked = 0;
  std::size_t n_violations = 0;
  double min_det = kPosInf;
  double min_sym_eig = kPosInf;
};

FeasibilityReport feasibility_report(const TransportMap& map, const SampleSet& samples);

/// Raised when more than 0.1% of pushed rows are infeasible; the flagged
/// output is attached so callers can still inspect it.
struct InfeasibleRegion : Error {
  InfeasibleRegion(const std::string& msg, SampleSet flagged)
      : Error(msg), result(std::move(flagged)) {}
  SampleSet result;
};

/// Applies the map row-wise; rows where the Jacobian check fails are flagged
/// but still emitted.
SampleSet push_samples(const TransportMap& map, const SampleSet& samples);

/// One or two maps applied in order, plus the base distribution they were
/// fitted from.  Two stages arise from chained fits through an intermediate.
struct MapFile {
  std::optional<PriorModel> source_prior;
  std::vector<TransportMap> stages;

  Vec apply(VecRef x) const;
  std::pair<Vec, Mat> apply_with_jacobian(VecRef x) const;
  bool feasible_at(VecRef x) const;
  std::string hash() const;
  SampleSet push(const SampleSet& samples) const;  // same 0.1% contract
};

void save_map(const TransportMap& map, const std::string& path,
              const PriorModel* source_prior = nullptr);
void save_map_chain(const std::vector<TransportMap>& stages, const std::string& path,
                    const PriorModel* source_prior = nullptr);
MapFile load_map_file(const std::string& path);
/// Loads a file that must contain exactly one stage.
TransportMap load_map(const std::string& path);

}  // namespace otb
