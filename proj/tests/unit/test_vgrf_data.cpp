#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <string>

#include "pdgait/rng.hpp"
#include "pdgait/vgrf_data.hpp"
#include "support/temp_dir.hpp"

using namespace pdgait;
using testsupport::TempDir;

namespace {

// 19-column row: time then 18 equal force values.
std::string uniform_rows(int n, double force, double t0 = 0.0, double dt = 0.01) {
  std::string out;
  char buf[64];
  for (int r = 0; r < n; ++r) {
    std::snprintf(buf, sizeof(buf), "%.2f", t0 + dt * r);
    out += buf;
    for (int c = 0; c < 18; ++c) {
      std::snprintf(buf, sizeof(buf), " %g", force);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

std::string tiny_manifest() {
  return "# id group updrs\n"
         "GaPt01 parkinson 20\n"
         "GaCo01 control -\n"
         "GaPt02 parkinson -\n";
}

}  // namespace

TEST_CASE("UPDRS to class mapping", "[vgrf]") {
  CHECK(map_updrs_to_class(0) == 1);
  CHECK(map_updrs_to_class(4) == 1);
  CHECK(map_updrs_to_class(5) == 2);
  CHECK(map_updrs_to_class(14) == 2);
  CHECK(map_updrs_to_class(15) == 3);
  CHECK(map_updrs_to_class(24) == 3);
  CHECK(map_updrs_to_class(25) == 4);
  CHECK(map_updrs_to_class(34) == 4);
  CHECK(map_updrs_to_class(35) == 5);
  CHECK(map_updrs_to_class(176) == 5);
  CHECK_THROWS_AS(map_updrs_to_class(-1), OutOfRange);
  CHECK_THROWS_AS(map_updrs_to_class(177), OutOfRange);
}

TEST_CASE("UPDRS mapping is monotone and total on its domain", "[vgrf]") {
  int prev = 1;
  for (int score = 0; score <= 176; ++score) {
    const int cls = map_updrs_to_class(score);
    CHECK(cls >= prev);
    CHECK((cls >= 1 && cls <= 5));
    prev = cls;
  }
}

TEST_CASE("severity label defaults", "[vgrf]") {
  SubjectInfo control{"c", Group::Control, std::nullopt};
  CHECK(severity_class_of(control) == 1);
  SubjectInfo scored{"p", Group::Parkinson, 30};
  CHECK(severity_class_of(scored) == 4);
  SubjectInfo unscored{"p2", Group::Parkinson, std::nullopt};
  CHECK_FALSE(severity_class_of(unscored).has_value());
}

TEST_CASE("walk file parses to a T x 18 matrix", "[vgrf]") {
  TempDir dir("walkparse");
  const auto path = dir.write("GaCo01_01.txt", uniform_rows(3, 0.0));
  const Eigen::MatrixXd m = parse_walk_samples(path);
  REQUIRE(m.rows() == 3);
  REQUIRE(m.cols() == 18);
  CHECK(m.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("walk parse errors carry file and line", "[vgrf]") {
  TempDir dir("walkerr");

  SECTION("wrong column count") {
    std::string rows = uniform_rows(1, 1.0);
    rows += "0.01 1 2 3\n";
    const auto path = dir.write("bad.txt", rows);
    CHECK_THROWS_MATCHES(parse_walk_samples(path), MalformedRow,
                         Catch::Matchers::MessageMatches(
                             Catch::Matchers::ContainsSubstring("bad.txt:2")));
  }
  SECTION("non-numeric cell") {
    std::string rows = "0.00";
    for (int c = 0; c < 17; ++c) rows += " 1.0";
    rows += " abc\n";
    CHECK_THROWS_AS(parse_walk_samples(dir.write("nan.txt", rows)), MalformedRow);
  }
  SECTION("negative force") {
    std::string rows = "0.00 -0.5";
    for (int c = 0; c < 17; ++c) rows += " 1.0";
    rows += '\n';
    CHECK_THROWS_AS(parse_walk_samples(dir.write("neg.txt", rows)), NegativeForce);
  }
  SECTION("non-monotone time") {
    std::string rows = uniform_rows(1, 1.0) + uniform_rows(1, 1.0, 0.03);
    CHECK_THROWS_AS(parse_walk_samples(dir.write("time.txt", rows)), NonMonotoneTime);
  }
  SECTION("time jitter within 1e-6 s is accepted") {
    std::string rows = uniform_rows(1, 1.0);
    rows += "0.0100005";
    for (int c = 0; c < 18; ++c) rows += " 1.0";
    rows += '\n';
    CHECK_NOTHROW(parse_walk_samples(dir.write("jitter.txt", rows)));
  }
}

TEST_CASE("walk write/parse round trip is bit exact", "[vgrf]") {
  TempDir dir("roundtrip");
  Rng rng(99);
  Eigen::MatrixXd samples(37, kNumChannels);
  for (Eigen::Index i = 0; i < samples.size(); ++i) {
    samples(i) = std::abs(rng.normal()) * 123.456;
  }
  const auto path = dir.file("rt.txt");
  write_walk_file(path, samples);
  const Eigen::MatrixXd back = parse_walk_samples(path);
  REQUIRE(back.rows() == samples.rows());
  CHECK(back == samples);
}

TEST_CASE("demographics manifest parsing", "[vgrf]") {
  TempDir dir("manifest");

  SECTION("valid manifest with comments and missing scores") {
    const auto reg = SubjectRegistry::parse_file(dir.write("demo.txt", tiny_manifest()));
    REQUIRE(reg.size() == 3);
    REQUIRE(reg.find("GaPt01") != nullptr);
    CHECK(reg.find("GaPt01")->updrs_total == 20);
    CHECK(reg.find("GaCo01")->group == Group::Control);
    CHECK_FALSE(reg.find("GaPt02")->updrs_total.has_value());
    CHECK(reg.find("nope") == nullptr);
  }
  SECTION("control subject must stay in class 1") {
    CHECK_THROWS_AS(SubjectRegistry::parse_file(dir.write("demo.txt", "A control 10\n")),
                    ConfigError);
    CHECK_NOTHROW(SubjectRegistry::parse_file(dir.write("demo2.txt", "A control 3\n")));
  }
  SECTION("duplicate subject") {
    CHECK_THROWS_AS(
        SubjectRegistry::parse_file(dir.write("demo.txt", "A control -\nA control -\n")),
        ConfigError);
  }
  SECTION("unknown group") {
    CHECK_THROWS_AS(SubjectRegistry::parse_file(dir.write("demo.txt", "A patient 10\n")),
                    MalformedRow);
  }
  SECTION("UPDRS out of range") {
    CHECK_THROWS_AS(SubjectRegistry::parse_file(dir.write("demo.txt", "A parkinson 200\n")),
                    OutOfRange);
  }
}

TEST_CASE("parse_walk_file attaches subject metadata", "[vgrf]") {
  TempDir dir("attach");
  const auto reg = SubjectRegistry::parse_file(dir.write("demo.txt", tiny_manifest()));
  const auto path = dir.write("GaPt01_02.txt", uniform_rows(5, 2.5));
  const Walk walk = parse_walk_file(path, reg);
  CHECK(walk.walk_id == "GaPt01_02");
  CHECK(walk.subject_id == "GaPt01");
  CHECK(walk.group == Group::Parkinson);
  CHECK(walk.updrs_total == 20);
  CHECK(walk.severity_class() == 3);
  CHECK(walk.samples.rows() == 5);

  const auto orphan = dir.write("Mystery_01.txt", uniform_rows(2, 1.0));
  CHECK_THROWS_AS(parse_walk_file(orphan, reg), UnknownSubject);
}

TEST_CASE("load_dataset scans, excludes, and counts", "[vgrf]") {
  TempDir dir("load");
  dir.write("demographics.txt", tiny_manifest());
  dir.write("GaPt01_01.txt", uniform_rows(4, 1.0));
  dir.write("GaPt01_02.txt", uniform_rows(4, 1.5));
  dir.write("GaCo01_01.txt", uniform_rows(4, 2.0));
  dir.write("exclude.txt", "GaPt01_02 # sensor glitch\n");

  const auto excl = dir.file("exclude.txt");
  const Dataset ds = load_dataset(dir.path(), dir.file("demographics.txt"), &excl);
  CHECK(ds.walks.size() == 2);
  REQUIRE(ds.excluded.size() == 1);
  CHECK(ds.excluded[0].walk_id == "GaPt01_02");
  CHECK(ds.excluded[0].reason == "sensor glitch");
  CHECK(ds.subject_count(Group::Parkinson) == 1);
  CHECK(ds.subject_count(Group::Control) == 1);
  CHECK(ds.walk_count(Group::Parkinson) == 1);
  REQUIRE(ds.subject("GaPt01") != nullptr);
  CHECK(ds.subject("GaPt01")->updrs_total == 20);
  // GaPt02 has no walk on disk, so it owns nothing in the dataset
  CHECK(ds.subject("GaPt02") == nullptr);
}

TEST_CASE("load_dataset on an empty directory", "[vgrf]") {
  TempDir dir("empty");
  dir.write("demographics.txt", tiny_manifest());
  CHECK_THROWS_AS(load_dataset(dir.path(), dir.file("demographics.txt")), EmptyDataset);
}
