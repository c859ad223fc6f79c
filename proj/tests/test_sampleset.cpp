// Apache License, Version 2.0, refer to LICENSE.txt

#include "otb/sampleset.hpp"

#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "otb/common.hpp"

using namespace otb;

namespace {

std::filesystem::path tmp_dir() {
  const std::filesystem::path p =
      std::filesystem::path(OTB_TEST_TMPDIR) / "sampleset";
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("sample CSV round-trips values and provenance") {
  SampleSet s;
  s.X = Mat(3, 2);
  s.X << 0.125, -1.5, 2.0, 0.1, 1e-9, 3.25e6;
  s.seed = 4242;
  s.source = "prior:test";
  s.map_hash = "deadbeef";
  const std::string path = (tmp_dir() / "roundtrip.csv").string();
  write_samples_csv(s, path);
  CHECK(std::filesystem::exists(path + ".meta.json"));
  const SampleSet r = read_samples_csv(path);
  REQUIRE(r.n() == 3);
  REQUIRE(r.dim() == 2);
  CHECK((r.X - s.X).cwiseAbs().maxCoeff() == 0.0);  // shortest round-trip format
  CHECK(r.seed == 4242);
  CHECK(r.source == "prior:test");
  CHECK(r.map_hash == "deadbeef");
}

TEST_CASE("reading without the sidecar still yields the values") {
  SampleSet s;
  s.X = Mat::Constant(2, 1, 0.5);
  const std::string path = (tmp_dir() / "bare.csv").string();
  write_samples_csv(s, path);
  std::filesystem::remove(path + ".meta.json");
  const SampleSet r = read_samples_csv(path);
  CHECK(r.n() == 2);
  CHECK(r.seed == 0);
  CHECK(r.source.empty());
}

TEST_CASE("malformed sample CSVs are rejected") {
  const auto write_raw = [](const std::string& name, const std::string& body) {
    const std::string path = (tmp_dir() / name).string();
    std::ofstream(path) << body;
    return path;
  };
  CHECK_THROWS_AS(read_samples_csv((tmp_dir() / "missing.csv").string()), Error);
  CHECK_THROWS_AS(read_samples_csv(write_raw("ragged.csv", "x1,x2\n1,2\n3\n")),
                  CorruptFile);
  CHECK_THROWS_AS(read_samples_csv(write_raw("text.csv", "x1\n1\npotato\n")),
                  CorruptFile);
  CHECK_THROWS_AS(read_samples_csv(write_raw("empty.csv", "")), CorruptFile);
}

TEST_CASE("feasible_rows keeps flagged rows and provenance") {
  SampleSet s;
  s.X = Mat(4, 1);
  s.X << 1, 2, 3, 4;
  s.seed = 9;
  s.map_hash = "abc";
  s.feasible = {1, 0, 1, 0};
  s.n_infeasible = 2;
  const SampleSet f = feasible_rows(s);
  REQUIRE(f.n() == 2);
  CHECK(f.X(0, 0) == 1.0);
  CHECK(f.X(1, 0) == 3.0);
  CHECK(f.seed == 9);
  CHECK(f.map_hash == "abc");
  CHECK(f.n_infeasible == 0);
  CHECK(f.infeasible_fraction() == 0.0);

  SampleSet unflagged;
  unflagged.X = s.X;
  CHECK(feasible_rows(unflagged).n() == 4);
}

TEST_CASE("infeasible_fraction on an empty set is zero") {
  CHECK(SampleSet{}.infeasible_fraction() == 0.0);
}

TEST_CASE("observation tables split features from labels") {
  const std::string path = (tmp_dir() / "obs.csv").string();
  std::ofstream(path) << "f1,f2,label\n0.5,1.5,1\n-0.25,0.75,0\n";
  const ObservationTable t = read_observations_csv(path);
  REQUIRE(t.has_labels);
  REQUIRE(t.labels.size() == 2);
  CHECK(t.labels[0] == 1);
  CHECK(t.labels[1] == 0);
  const Mat f = t.features();
  REQUIRE(f.cols() == 2);
  CHECK(f(1, 0) == -0.25);
  CHECK(f(1, 1) == 0.75);
}

TEST_CASE("observation tables without a label column") {
  const std::string path = (tmp_dir() / "obs_nolabel.csv").string();
  std::ofstream(path) << "a,b\n1,2\n3,4\n";
  const ObservationTable t = read_observations_csv(path);
  CHECK(!t.has_labels);
  CHECK(t.features().cols() == 2);
}

TEST_CASE("non-binary labels are rejected") {
  const std::string path = (tmp_dir() / "obs_bad.csv").string();
  std::ofstream(path) << "a,label\n1,2\n";
  CHECK_THROWS_AS(read_observations_csv(path), CorruptFile);
}
