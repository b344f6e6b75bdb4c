// Copyright 2026 The PSPF Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "pspf/error.hpp"
#include "pspf/harness.hpp"

namespace pspf {
namespace {

namespace fs = std::filesystem;

class Harness : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("pspf_harness_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  std::string write_config(const std::string& name, const Json& j) const {
    std::ofstream(path(name)) << j.dump(2);
    return path(name);
  }
  static std::string slurp(const std::string& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }
  static std::vector<std::string> lines(const std::string& p) {
    std::vector<std::string> out;
    std::ifstream in(p);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
  }

  fs::path dir_;
};

Json simulate_config(int T) {
  return {{"command", "simulate"},
          {"model", {{"id", "linear_mixture"}, {"dim", 2}, {"xi", 0.01}}},
          {"T", T},
          {"seed", 42}};
}

Json small_experiment() {
  return Json::parse(R"({
    "command": "experiment",
    "model": {"id": "linear_mixture", "dim": 2, "xi": 0.1},
    "T": 5, "replications": 4, "seed": 5,
    "reference": {"type": "exact"},
    "metrics": ["loglik", "filter_rmse", "quantiles", "time"],
    "quantile_levels": [0.05, 0.2],
    "filters": [
      {"label": "PSPF", "type": "PSPF", "n": 400, "resampler": "direct"},
      {"label": "SIR", "type": "SIR", "n": 400}
    ]
  })");
}

TEST_F(Harness, SimulateShapeAndDeterminism) {
  Json c = simulate_config(10);
  c["out"] = path("a.csv");
  run_command("simulate", write_config("a.json", c));
  c["out"] = path("b.csv");
  run_command("simulate", write_config("b.json", c));
  const auto rows = lines(path("a.csv"));
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0], "x_1,x_2,y_1,y_2");
  EXPECT_EQ(slurp(path("a.csv")), slurp(path("b.csv")));
  const Json meta = read_json_file(path("a.meta.json"));
  EXPECT_EQ(meta.at("seed").get<std::uint64_t>(), 42u);
  EXPECT_EQ(meta.at("version").get<std::string>(), kVersion);
  const Dataset d = read_dataset_csv(path("a.csv"));
  EXPECT_EQ(d.states.rows(), 2);
  EXPECT_EQ(d.observations.cols(), 10);
}

TEST_F(Harness, SimulateValidation) {
  Json c = simulate_config(0);
  c["out"] = path("z.csv");
  try {
    run_command("simulate", write_config("z.json", c));
    FAIL();
  } catch (const std::exception& e) {
    EXPECT_EQ(exit_code_for(e), 2);
  }
  Json bad = simulate_config(5);
  bad["model"]["id"] = "unknown";
  bad["out"] = path("u.csv");
  EXPECT_THROW(run_command("simulate", write_config("u.json", bad)), ValidationError);
  Json extra = simulate_config(5);
  extra["out"] = path("e.csv");
  extra["bogus"] = 1;
  EXPECT_THROW(run_command("simulate", write_config("e.json", extra)), ValidationError);
  Json unwritable = simulate_config(5);
  unwritable["out"] = "/proc/no/such/dir/x.csv";
  EXPECT_THROW(run_command("simulate", write_config("w.json", unwritable)), Error);
}

TEST_F(Harness, ExperimentTableComplete) {
  const ExperimentSpec spec = ExperimentSpec::parse(small_experiment());
  const ExperimentResult res = run_experiment(spec);
  for (const char* f : {"PSPF", "SIR"}) {
    for (const char* m : {"loglik_mean", "loglik_bias", "loglik_std", "loglik_rmse", "filter_rmse", "q0.05_bias",
                          "q0.05_std", "q0.2_bias", "q0.2_std", "time_seconds", "relative_time"}) {
      const ResultRow* r = res.find(f, m);
      ASSERT_NE(r, nullptr) << f << " " << m;
      EXPECT_TRUE(r->value.has_value() || !r->note.empty()) << f << " " << m;
    }
    // Quantile errors need a reference that carries quantiles.
    EXPECT_FALSE(res.find(f, "q0.05_bias")->value.has_value());
    const double bias = *res.find(f, "loglik_bias")->value;
    const double sd = *res.find(f, "loglik_std")->value;
    const double rmse = *res.find(f, "loglik_rmse")->value;
    EXPECT_NEAR(rmse * rmse, bias * bias + sd * sd, 1e-9);
  }
  EXPECT_EQ(res.records.size(), 8u);
  EXPECT_EQ(*res.find("PSPF", "relative_time")->value, 1.0);
}

TEST_F(Harness, ExperimentReproducible) {
  auto strip_time = [](const std::string& p) {
    std::string out;
    for (const auto& l : lines(p)) {
      if (l.find("time") == std::string::npos) out += l + "\n";
    }
    return out;
  };
  Json c = small_experiment();
  c["out"] = path("r1.csv");
  run_command("experiment", write_config("r1.json", c));
  Overrides ov;
  ov.out = path("r2.csv");
  ov.threads = 1;
  run_command("experiment", write_config("r2.json", c), ov);
  EXPECT_EQ(strip_time(path("r1.csv")), strip_time(path("r2.csv")));
  EXPECT_EQ(lines(path("r1.csv"))[0], "filter,type,n,metric,value,se,replications,failures,note");
  const Json meta = read_json_file(path("r1.meta.json"));
  EXPECT_TRUE(meta.contains("config_hash"));
}

TEST_F(Harness, SingleReplicationLeavesStdEmpty) {
  Overrides ov;
  ov.replications = 1;
  const ExperimentResult res = run_experiment(ExperimentSpec::parse(small_experiment(), ov));
  const ResultRow* sd = res.find("PSPF", "loglik_std");
  ASSERT_NE(sd, nullptr);
  EXPECT_FALSE(sd->value.has_value());
  EXPECT_FALSE(sd->note.empty());
  EXPECT_TRUE(res.find("PSPF", "loglik_bias")->value.has_value());
}

TEST_F(Harness, SharedDatasetWithinReplication) {
  EXPECT_EQ(dataset_seed(7, 3), dataset_seed(7, 3));
  EXPECT_NE(dataset_seed(7, 3), dataset_seed(7, 4));
  EXPECT_NE(filter_seed(7, 3, 0), filter_seed(7, 3, 1));
  const ExperimentResult res = run_experiment(ExperimentSpec::parse(small_experiment()));
  for (std::size_t i = 0; i + 1 < res.records.size(); i += 2) {
    EXPECT_EQ(res.records[i].replication, res.records[i + 1].replication);
    EXPECT_EQ(res.records[i].reference, res.records[i + 1].reference);
  }
}

TEST_F(Harness, ExperimentValidation) {
  Json dup = small_experiment();
  dup["filters"][1]["label"] = "PSPF";
  EXPECT_THROW(ExperimentSpec::parse(dup), ValidationError);
  Json zero = small_experiment();
  zero["replications"] = 0;
  EXPECT_THROW(ExperimentSpec::parse(zero), ValidationError);
  Json badn = small_experiment();
  badn["filters"][0]["n"] = 0;
  EXPECT_THROW(ExperimentSpec::parse(badn), ValidationError);
}

TEST_F(Harness, NoReferenceMarksBiasUnsupported) {
  Json c = small_experiment();
  c.erase("reference");
  c["metrics"] = {"loglik"};
  const ExperimentResult res = run_experiment(ExperimentSpec::parse(c));
  const ResultRow* r = res.find("SIR", "loglik_bias");
  ASSERT_NE(r, nullptr);
  EXPECT_FALSE(r->value.has_value());
  EXPECT_NE(r->note.find("unsupported"), std::string::npos);
}

TEST_F(Harness, ToyEstimateMatchesAnalyticMle) {
  const Json c = read_json_file(PSPF_SOURCE_DIR "/configs/toy_kalman_estimate.json");
  Overrides ov;
  ov.out = path("toy.csv");
  const EstimateResult res = run_estimate(c, ov);
  ASSERT_EQ(res.fits.size(), 3u);
  for (std::size_t k = 0; k < res.fits.size(); ++k) {
    ASSERT_TRUE(res.analytic_mle[k].has_value());
    EXPECT_NEAR(res.fits[k].theta(0), *res.analytic_mle[k], 1e-4);
  }
  EXPECT_LT(res.summary[0].mc_se, 1e-4);
}

TEST_F(Harness, WarmStartStopsEarly) {
  Json c = read_json_file(PSPF_SOURCE_DIR "/configs/toy_kalman_estimate.json");
  c["replicates"] = 1;
  const EstimateResult first = run_estimate(c);
  c["theta0"] = {first.fits[0].theta(0)};
  const EstimateResult again = run_estimate(c);
  EXPECT_TRUE(again.fits[0].optimizer.converged);
  EXPECT_LE(again.fits[0].optimizer.iterations, 2);
  EXPECT_LT(again.fits[0].optimizer.gradient.cwiseAbs().maxCoeff(), c["bfgs"]["gradient_tolerance"].get<double>());
}

TEST_F(Harness, EstimateWritesReport) {
  Json c = read_json_file(PSPF_SOURCE_DIR "/configs/toy_kalman_estimate.json");
  c["out"] = path("est.csv");
  run_command("estimate", write_config("est.json", c));
  const auto rows = lines(path("est.csv"));
  ASSERT_GE(rows.size(), 2u);
  EXPECT_EQ(rows[0], "parameter,truth,mean_estimate,mean_se,mc_se,mc_se_ratio,analytic_mle");
  EXPECT_TRUE(fs::exists(path("est.replicates.csv")));
}

Json trace_config(std::uint64_t seed) {
  return Json{{"command", "bandwidth-trace"},
              {"model", {{"id", "cev"}}},
              {"T", 120},
              {"seed", seed},
              {"filter", {{"type", "PSPF"}, {"n", 512}, {"resampler", "continuous-1d"}}}};
}

TEST_F(Harness, TraceSchemaAndRange) {
  const auto rows = run_bandwidth_trace(trace_config(11));
  ASSERT_EQ(rows.size(), 120u);
  for (const auto& r : rows) {
    EXPECT_GE(r.b, 0.0);
    EXPECT_LE(r.b, 1.0);
    EXPECT_LE(r.band_lo, r.band_hi);
    EXPECT_GE(r.criterion, 0.0);
  }
  Json c = trace_config(11);
  c["out"] = path("t1.csv");
  run_command("bandwidth-trace", write_config("t1.json", c));
  c["seed"] = 12;
  c["out"] = path("t2.csv");
  run_command("bandwidth-trace", write_config("t2.json", c));
  const auto a = lines(path("t1.csv")), b = lines(path("t2.csv"));
  EXPECT_EQ(a[0], "t,y_1,b,criterion,bias_sq,variance,band_lo,band_hi");
  EXPECT_EQ(a[0], b[0]);
  EXPECT_EQ(a.size(), b.size());
  EXPECT_NE(a[5], b[5]);
}

TEST_F(Harness, OutlierGetsLessSmoothing) {
  Json c = trace_config(13);
  c["outlier"] = {{"t", 60}, {"shift", 0.5}};
  const auto rows = run_bandwidth_trace(c);
  std::vector<double> b;
  for (const auto& r : rows) b.push_back(r.b);
  std::vector<double> sorted = b;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  EXPECT_LT(b[59], sorted[sorted.size() / 2]);
}

TEST_F(Harness, ExitCodes) {
  EXPECT_EQ(exit_code_for(ValidationError("x")), 2);
  EXPECT_EQ(exit_code_for(FilterFailure("x")), 3);
  EXPECT_EQ(exit_code_for(SingularCovarianceError("x")), 3);
  EXPECT_THROW(run_command("simulate", path("missing.json")), Error);
  EXPECT_THROW(run_command("dance", write_config("d.json", simulate_config(3))), ValidationError);
}

TEST_F(Harness, ConfigHashStable) {
  const Json a = small_experiment();
  Json b = small_experiment();
  EXPECT_EQ(config_hash(a), config_hash(b));
  b["seed"] = 6;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST_F(Harness, ShippedConfigsParse) {
  for (const char* name : {"experiment1.json", "experiment2.json"}) {
    EXPECT_NO_THROW(ExperimentSpec::parse(read_json_file(std::string(PSPF_SOURCE_DIR "/configs/") + name))) << name;
  }
}

}  // namespace
}  // namespace pspf
