#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "qknit/json_io.hpp"
#include "qknit/timetag_io.hpp"

using namespace qknit;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string err;
};

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("qknit_cli_" + std::to_string(::getpid())) / name;
  fs::create_directories(p);
  return p;
}

Run qknit_run(const std::string& args, const fs::path& dir) {
  const auto err = dir / "stderr.txt";
  const std::string cmd = "cd '" + dir.string() + "' && '" QKNIT_CLI_PATH "' " + args + " >/dev/null 2>'" +
                          err.string() + "'";
  const int st = std::system(cmd.c_str());
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, read_file(err.string())};
}

std::string bytes_of(const fs::path& p) { return read_file(p.string()); }

DensityMatrix result_matrix(const fs::path& p, std::size_t i = 0) {
  return density_from_json(read_json_file(p.string())["results"][i]["matrix"]);
}

// Clicks every third pulse: never inside the correlation window.
void write_gap_three_file(const fs::path& p, std::uint64_t period) {
  std::vector<DetectionEvent> ev;
  for (std::uint64_t k = 0; k < 3000; k += 3) ev.push_back({k * period + 100, static_cast<std::uint8_t>(k % 6), 0});
  write_tag_file(p.string(), period, ev);
}

const std::string kIdealConfig = std::string(QKNIT_SOURCE_DIR) + "/configs/ideal_high_efficiency.json";

}  // namespace

TEST(CliModel, IdealFig3cIsRow8) {
  const auto dir = scratch("model8");
  ASSERT_EQ(qknit_run("model --ideal --spec fig3c --out m.json", dir).code, 0);
  const auto rho = result_matrix(dir / "m.json");
  const auto ref = table_density(8);
  ASSERT_EQ(rho.labels(), ref.labels());
  EXPECT_LT((rho.matrix() - ref.matrix()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(CliModel, IdealFig2aIsMaximallyMixed) {
  const auto dir = scratch("model2");
  ASSERT_EQ(qknit_run("model --ideal --spec fig2a --out m.json", dir).code, 0);
  const auto rho = result_matrix(dir / "m.json");
  EXPECT_LT((rho.matrix() - Matrix::Identity(4, 4) / 4.0).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(CliModel, CalibratedFig3aReportsDop) {
  const auto dir = scratch("model_cal");
  const auto r = qknit_run("model --calibrated --spec fig3a --out m.json", dir);
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("dop=0.7900"), std::string::npos) << r.err;
  const auto j = read_json_file((dir / "m.json").string());
  EXPECT_NEAR(j["results"][0]["metrics"]["dop"].get<double>(), 0.79, 1e-6);
}

TEST(CliModel, SpecFileIsAccepted) {
  const auto dir = scratch("model_file");
  write_text_file((dir / "custom.json").string(), R"({"directives": ["-Z", "T", "T", "+Z"]})");
  ASSERT_EQ(qknit_run("model --ideal --spec custom.json --out m.json", dir).code, 0);
  EXPECT_LT(trace_distance(result_matrix(dir / "m.json"), table_density(8)), 1e-9);
}

TEST(CliModel, UnknownSpecFails) {
  const auto dir = scratch("model_bad");
  EXPECT_EQ(qknit_run("model --spec fig9z", dir).code, static_cast<int>(errc::invalid_argument));
}

TEST(CliSimulate, SameSeedGivesIdenticalFiles) {
  const auto dir = scratch("sim_twice");
  ASSERT_EQ(qknit_run("simulate --duration 0.01 --seed 42 --out a.bin", dir).code, 0);
  const auto first = bytes_of(dir / "a.bin");
  const auto first_manifest = bytes_of(dir / "a.bin.manifest.json");
  ASSERT_EQ(qknit_run("simulate --duration 0.01 --seed 42 --out a.bin", dir).code, 0);
  EXPECT_EQ(bytes_of(dir / "a.bin"), first);
  EXPECT_EQ(bytes_of(dir / "a.bin.manifest.json"), first_manifest);
  ASSERT_EQ(qknit_run("simulate --duration 0.01 --seed 43 --out b.bin", dir).code, 0);
  EXPECT_NE(bytes_of(dir / "b.bin"), first);
}

TEST(CliSimulate, ManifestRecordsHashAndConfig) {
  const auto dir = scratch("sim_manifest");
  ASSERT_EQ(qknit_run("simulate --duration 0.001 --seed 5 --out a.bin", dir).code, 0);
  const auto j = read_json_file((dir / "a.bin.manifest.json").string());
  EXPECT_EQ(j["manifest"]["command"], "simulate");
  EXPECT_EQ(j["manifest"]["seed"], 5);
  EXPECT_EQ(j["manifest"]["outputs"][0]["sha256"].get<std::string>().size(), 64u);
  EXPECT_EQ(j["config"]["seed"], 5);
  EXPECT_EQ(stream_config_from_json(j["config"]).duration, 0.001);
}

TEST(CliSimulate, SummaryReportsPredictedPairRate) {
  const auto dir = scratch("sim_rate");
  ASSERT_EQ(qknit_run("simulate --duration 0.001 --out a.bin", dir).code, 0);
  const auto j = read_json_file((dir / "a.bin.manifest.json").string());
  // 456 MHz pulse rate times (0.01)^2.
  EXPECT_NEAR(j["summary"]["predicted_pair_rate_hz"].get<double>(), 45.6e3, 1e-6);
}

TEST(CliSimulate, ZeroEfficiencyWritesHeaderOnly) {
  const auto dir = scratch("sim_zero");
  write_text_file((dir / "cfg.json").string(), R"({"bank": {"efficiency": 0}, "duration": 0.001})");
  ASSERT_EQ(qknit_run("simulate --config cfg.json --out a.bin", dir).code, 0);
  EXPECT_EQ(fs::file_size(dir / "a.bin"), kTagHeaderSize);
  std::ifstream is(dir / "a.bin", std::ios::binary);
  TagReader r(is);
  EXPECT_TRUE(r.read_all().empty());
}

TEST(CliCorrelate, GapThreeOnlyStoresNoPairs) {
  const auto dir = scratch("corr_gap3");
  write_gap_three_file(dir / "g.bin", StreamConfig{}.period_ps());
  ASSERT_EQ(qknit_run("correlate g.bin --pairs --events p.bin --out c.json", dir).code, 0);
  const auto j = read_json_file((dir / "c.json").string());
  EXPECT_EQ(j["correlation"]["photons"], 1000);
  EXPECT_EQ(j["correlation"]["pairs"], 0);
  EXPECT_EQ(j["counts"]["events"], 0);
  EXPECT_EQ(fs::file_size(dir / "p.bin"), 24u);
}

TEST(CliCorrelate, PeriodMismatchIsSchemaError) {
  const auto dir = scratch("corr_period");
  write_gap_three_file(dir / "g.bin", 1000);
  EXPECT_EQ(qknit_run("correlate g.bin --out c.json", dir).code, static_cast<int>(errc::schema));
}

class CliPipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(scratch("pipeline"));
    const std::string cfg = "--config '" + kIdealConfig + "'";
    ASSERT_EQ(qknit_run("simulate " + cfg + " --duration 0.01 --out t.bin", *dir_).code, 0);
    ASSERT_EQ(qknit_run("correlate t.bin --events ev.bin --out c.json", *dir_).code, 0);
    ASSERT_EQ(qknit_run("tomo c.json --spec fig3a --spec fig3c --resamples 100 --out tomo.json", *dir_).code, 0);
    ASSERT_EQ(qknit_run("fit-d c.json --resamples 100 --out d.json", *dir_).code, 0);
  }
  static void TearDownTestSuite() { delete dir_; }

  static fs::path* dir_;
};

fs::path* CliPipeline::dir_ = nullptr;

TEST_F(CliPipeline, ConditioningChainEndsInRow8) {
  const auto j = read_json_file((*dir_ / "tomo.json").string());
  ASSERT_EQ(j["results"][1]["spec"], "fig3c");
  const auto& f = j["results"][1]["metrics_vs_ideal_row"]["fidelity"];
  EXPECT_EQ(j["results"][1]["ideal_row"], 8);
  EXPECT_GT(j["results"][1]["reconstruction"]["counts_used"].get<double>(), 500);
  EXPECT_GE(f["value"].get<double>(), 0.9);
  EXPECT_GE(f["value"].get<double>() + 4 * f["error"].get<double>(), 1.0);
  const auto& f6 = j["results"][0]["metrics_vs_ideal_row"]["fidelity"];
  EXPECT_GE(f6["value"].get<double>(), 0.97);
}

TEST_F(CliPipeline, DeterministicSourceGivesHighDHat) {
  const auto j = read_json_file((*dir_ / "d.json").string());
  EXPECT_GE(j["result"]["D_hat"].get<double>(), 0.97);
  EXPECT_FALSE(j["result"]["wide_interval"].get<bool>());
  const auto r = qknit_run("report d.json --format csv --out r.csv", *dir_);
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(bytes_of(*dir_ / "r.csv").find("three-pulse,D_hat,"), std::string::npos);
}

TEST_F(CliPipeline, OutputsEchoConfigAndReferenceInputs) {
  for (const char* f : {"c.json", "tomo.json", "d.json"}) {
    const auto j = read_json_file((*dir_ / f).string());
    EXPECT_TRUE(j.contains("config")) << f;
    EXPECT_EQ(j["manifest"]["outputs"].back()["path"], f);
    EXPECT_FALSE(j["manifest"]["inputs"].empty()) << f;
  }
  EXPECT_TRUE(fs::exists(*dir_ / "ev.bin.manifest.json"));
}

TEST_F(CliPipeline, RerunningStagesIsByteIdentical) {
  const auto c = bytes_of(*dir_ / "c.json");
  const auto ev = bytes_of(*dir_ / "ev.bin");
  const auto t = bytes_of(*dir_ / "tomo.json");
  ASSERT_EQ(qknit_run("correlate t.bin --events ev.bin --out c.json", *dir_).code, 0);
  ASSERT_EQ(qknit_run("tomo c.json --spec fig3a --spec fig3c --resamples 100 --out tomo.json", *dir_).code, 0);
  EXPECT_EQ(bytes_of(*dir_ / "c.json"), c);
  EXPECT_EQ(bytes_of(*dir_ / "ev.bin"), ev);
  EXPECT_EQ(bytes_of(*dir_ / "tomo.json"), t);
}

TEST_F(CliPipeline, ReportTextListsEveryStage) {
  const auto dir = *dir_;
  ASSERT_EQ(qknit_run("model --ideal --spec fig3c --out m.json", dir).code, 0);
  ASSERT_EQ(qknit_run("report m.json tomo.json d.json --out r.txt", dir).code, 0);
  const auto text = bytes_of(dir / "r.txt");
  for (const char* s : {"model negativity", "fidelity_to_ideal_row", "D_hat", "+-"})
    EXPECT_NE(text.find(s), std::string::npos) << s;
}

TEST(CliErrors, EachFailureClassHasItsOwnExitCode) {
  const auto dir = scratch("errors");
  const auto period = StreamConfig{}.period_ps();
  write_gap_three_file(dir / "good.bin", period);
  const auto good = bytes_of(dir / "good.bin");

  auto bad_version = good;
  bad_version[6] = 9;
  write_text_file((dir / "version.bin").string(), bad_version);
  write_text_file((dir / "truncated.bin").string(), good.substr(0, good.size() - 3));
  write_text_file((dir / "magic.bin").string(), "XXXXXX" + good.substr(6));
  write_text_file((dir / "unknown_key.json").string(), R"({"bank": {"efficency": 0.1}})");
  write_text_file((dir / "bad_counts.json").string(), R"({"cells": {"gaps=1|bases=Z": 3}})");

  const int version = qknit_run("correlate version.bin --out c.json", dir).code;
  const int truncated = qknit_run("correlate truncated.bin --out c.json", dir).code;
  const int schema = qknit_run("correlate magic.bin --out c.json", dir).code;
  const int io = qknit_run("correlate missing.bin --out c.json", dir).code;
  const int usage = qknit_run("correlate", dir).code;
  EXPECT_EQ(version, static_cast<int>(errc::version_mismatch));
  EXPECT_EQ(truncated, static_cast<int>(errc::truncated_file));
  EXPECT_EQ(schema, static_cast<int>(errc::schema));
  EXPECT_EQ(io, static_cast<int>(errc::io));
  EXPECT_EQ(usage, 64);
  EXPECT_EQ(qknit_run("simulate --config unknown_key.json --out a.bin", dir).code, static_cast<int>(errc::schema));
  EXPECT_EQ(qknit_run("tomo bad_counts.json --spec fig3a", dir).code, static_cast<int>(errc::schema));
  EXPECT_EQ(qknit_run("report bad_counts.json", dir).code, static_cast<int>(errc::schema));
  const std::set<int> codes{version, truncated, schema, io, usage};
  EXPECT_EQ(codes.size(), 5u);
  EXPECT_EQ(codes.count(0), 0u);
}

TEST(CliErrors, InsufficientDataExitCode) {
  const auto dir = scratch("insufficient");
  write_gap_three_file(dir / "g.bin", StreamConfig{}.period_ps());
  ASSERT_EQ(qknit_run("correlate g.bin --out c.json", dir).code, 0);
  EXPECT_EQ(qknit_run("tomo c.json --spec fig3a", dir).code, static_cast<int>(errc::insufficient_data));
  EXPECT_EQ(qknit_run("fit-d c.json", dir).code, static_cast<int>(errc::insufficient_data));
}
