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


#ifndef PSPF_HARNESS_HPP
#define PSPF_HARNESS_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "pspf/filters.hpp"
#include "pspf/model.hpp"
#include "pspf/sml.hpp"

namespace pspf {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kSchemaVersion = 1;

using Json = nlohmann::json;

/// Command-line values that replace the matching config entries.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> threads;
  std::optional<int> replications;
};

struct Dataset {
  Matrix states;        ///< d_x x T
  Matrix observations;  ///< d_y x T
  int floor_hits = 0;   ///< steps at which a state floor was active (not stored in the CSV)
};

void write_dataset_csv(const std::string& path, const Dataset& data);
Dataset read_dataset_csv(const std::string& path);

/// Model described by a config object such as {"id": "cev", "delta": 0.004}.
struct ModelSpec {
  std::string id;
  Json params = Json::object();

  static ModelSpec parse(const Json& j);
  /// The model data are simulated from.
  [[nodiscard]] StateSpaceModel base() const;
  /// "original" or "augmented" (nonlinear measurement moved into the state).
  [[nodiscard]] StateSpaceModel build(std::string_view representation) const;
  [[nodiscard]] ModelFamily family() const;
  [[nodiscard]] std::optional<Vector> true_theta() const;
};

struct FilterSpec {
  std::string label;
  FilterKind kind = FilterKind::kPspf;
  FilterConfig config;
  std::string representation;

  static FilterSpec parse(const Json& j, const ModelSpec& model);
};

enum class ReferenceKind { kNone, kExact, kSir };

struct ReferenceSpec {
  ReferenceKind kind = ReferenceKind::kNone;
  Eigen::Index n = 1000000;
  std::string representation = "original";

  static ReferenceSpec parse(const Json& j);
};

struct ExperimentSpec {
  ModelSpec model;
  int T = 10;
  std::vector<FilterSpec> filters;
  ReferenceSpec reference;
  int replications = 1;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> metrics;
  std::vector<double> quantile_levels;
  int threads = 0;

  static ExperimentSpec parse(const Json& config, const Overrides& overrides = {});
};

/// Outcome of one filter on one replication.
struct ReplicationRecord {
  int replication = 0;
  std::string filter;
  bool failed = false;
  std::string message;
  double loglik = 0.0;
  double reference = 0.0;
  double filter_sq_error = 0.0;
  std::vector<double> quantiles;
  std::vector<double> reference_quantiles;
  double seconds = 0.0;
};

struct ResultRow {
  std::string filter;
  std::string type;
  Eigen::Index n = 0;
  std::string metric;
  std::optional<double> value;
  std::optional<double> se;
  int replications = 0;
  int failures = 0;
  std::string note;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<ReplicationRecord> records;  ///< sorted by (replication, filter order)
  double wall_seconds = 0.0;

  [[nodiscard]] const ResultRow* find(std::string_view filter, std::string_view metric) const;
};

/// Seeds derived from the base seed; identical across filters within a replication.
std::uint64_t dataset_seed(std::uint64_t base, int replication);
std::uint64_t filter_seed(std::uint64_t base, int replication, int filter_index);

Dataset simulate_dataset(const StateSpaceModel& model, int T, std::uint64_t seed);

ExperimentResult run_experiment(const ExperimentSpec& spec);
void write_result_table(const std::string& path, const std::vector<ResultRow>& rows);

struct EstimateSummaryRow {
  std::string parameter;
  std::optional<double> truth;
  double mean_estimate = 0.0;
  double mean_se = 0.0;
  double mc_se = 0.0;
  std::optional<double> analytic;
};

struct EstimateResult {
  std::vector<SmlResult> fits;  ///< one per seed replicate
  std::vector<std::string> failures;
  std::vector<std::optional<double>> analytic_mle;  ///< exact-likelihood families only
  std::vector<EstimateSummaryRow> summary;
  Dataset data;
};

EstimateResult run_estimate(const Json& config, const Overrides& overrides = {});

struct TraceRow {
  int t = 0;
  Vector y;
  double b = 0.0;
  double criterion = 0.0;
  double bias_sq = 0.0;
  double variance = 0.0;
  double band_lo = 0.0;
  double band_hi = 0.0;
};

std::vector<TraceRow> run_bandwidth_trace(const Json& config, const Overrides& overrides = {});

/// Runs "simulate", "experiment", "estimate" or "bandwidth-trace" from a config file
/// and writes the outputs. Returns a one-line summary.
std::string run_command(std::string_view command, const std::string& config_path,
                        const Overrides& overrides = {});

/// Exit code for an exception thrown by the harness: 2 for invalid input, 3 for runtime failure.
int exit_code_for(const std::exception& e);

Json read_json_file(const std::string& path);
std::uint64_t config_hash(const Json& config);

}  // namespace pspf

#endif  // PSPF_HARNESS_HPP
