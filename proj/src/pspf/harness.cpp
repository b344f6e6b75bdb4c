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


#include "pspf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "pspf/error.hpp"
#include "pspf/model_zoo.hpp"
#include "pspf/ps_update.hpp"
#include "pspf/rng.hpp"

namespace pspf {

namespace {

using Clock = std::chrono::steady_clock;

std::string fmt(double v, int digits = 10) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (const char c : s) {
    if (c == '"') q += '"';
    q += c;
  }
  return q + "\"";
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    const bool ok = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!ok) throw ValidationError(where + ": unknown key '" + key + "'");
  }
}

template <class T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError(std::string("config key '") + key + "' has the wrong type");
  }
}

Vector to_vector(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ValidationError(what + " must be an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

std::string stem_of(const std::string& out) {
  const std::string ext = ".csv";
  if (out.size() > ext.size() && out.compare(out.size() - ext.size(), ext.size(), ext) == 0) {
    return out.substr(0, out.size() - ext.size());
  }
  return out;
}

std::ofstream open_out(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write '" + path + "'");
  return f;
}

void write_text(const std::string& path, const std::string& text) {
  auto f = open_out(path);
  f << text;
  if (!f) throw IoError("write failed for '" + path + "'");
}

void write_meta(const std::string& out, const std::string& command, const Json& config,
                std::uint64_t seed, Json extra) {
  Json meta = {
      {"tool", "pspf"},
      {"version", kVersion},
      {"schema_version", kSchemaVersion},
      {"command", command},
      {"seed", seed},
      {"config_hash", config_hash(config)},
      {"config", config},
  };
  for (auto& [k, v] : extra.items()) meta[k] = v;
  write_text(stem_of(out) + ".meta.json", meta.dump(2) + "\n");
}

double population_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  double m = 0.0;
  for (const double x : v) m += x;
  m /= static_cast<double>(v.size());
  double s = 0.0;
  for (const double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

double mean_of(const std::vector<double>& v) {
  double m = 0.0;
  for (const double x : v) m += x;
  return v.empty() ? 0.0 : m / static_cast<double>(v.size());
}

double sample_sd(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double n = static_cast<double>(v.size());
  return population_sd(v) * std::sqrt(n / (n - 1.0));
}

// Runs body(i) for i in [0, count) on up to `threads` workers. The first
// exception (lowest index) is rethrown after all workers finish.
template <class F>
void parallel_for(int count, int threads, F&& body) {
  const int workers = std::max(1, std::min(threads, count));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto work = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

CevOptions cev_options(const Json& p) {
  CevOptions o;
  o.delta = get_or(p, "delta", o.delta);
  if (p.contains("x0_sd") && !p.at("x0_sd").is_null()) o.x0_sd = p.at("x0_sd").get<double>();
  o.floor = get_or(p, "floor", o.floor);
  o.substeps = get_or(p, "substeps", o.substeps);
  if (!(o.delta > 0.0)) throw ValidationError("cev: delta must be positive");
  if (o.substeps < 1) throw ValidationError("cev: substeps must be at least 1");
  return o;
}

Vector cev_theta(const Json& p) {
  if (p.contains("theta_log")) {
    const Vector th = to_vector(p.at("theta_log"), "cev theta_log");
    if (th.size() != 5) throw ValidationError("cev theta_log needs 5 entries");
    return th;
  }
  return cev_reference_params().to_log();
}

std::vector<double> quantile_levels_of(const Json& j) {
  std::vector<double> q = get_or(j, "quantile_levels", std::vector<double>{0.05, 0.2, 0.4});
  for (const double p : q) {
    if (!(p > 0.0 && p < 1.0)) throw ValidationError("quantile levels must lie in (0,1)");
  }
  return q;
}

int parse_T(const Json& j) {
  const int T = get_or(j, "T", 0);
  if (T < 1) throw ValidationError("T must be at least 1");
  return T;
}

void check_command(const Json& config, std::string_view command) {
  if (!config.is_object()) throw ValidationError("config must be a JSON object");
  const int version = get_or(config, "schema_version", kSchemaVersion);
  if (version != kSchemaVersion) {
    throw ValidationError("unsupported schema_version " + std::to_string(version));
  }
  if (config.contains("command") && config.at("command").get<std::string>() != command) {
    throw ValidationError("config is for command '" + config.at("command").get<std::string>() +
                          "', not '" + std::string(command) + "'");
  }
}

std::string quantile_name(double p) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "q%g", p);
  return buf;
}

}  // namespace

// ---------------------------------------------------------------------------
// datasets

void write_dataset_csv(const std::string& path, const Dataset& data) {
  if (data.states.cols() != data.observations.cols()) throw ShapeError("dataset: state/observation length mismatch");
  std::ostringstream os;
  std::vector<std::string> head;
  for (Eigen::Index i = 0; i < data.states.rows(); ++i) head.push_back("x_" + std::to_string(i + 1));
  for (Eigen::Index i = 0; i < data.observations.rows(); ++i) head.push_back("y_" + std::to_string(i + 1));
  for (std::size_t i = 0; i < head.size(); ++i) os << (i ? "," : "") << head[i];
  os << "\n";
  for (Eigen::Index t = 0; t < data.states.cols(); ++t) {
    bool first = true;
    auto put = [&](double v) {
      os << (first ? "" : ",") << fmt(v, 17);
      first = false;
    };
    for (Eigen::Index i = 0; i < data.states.rows(); ++i) put(data.states(i, t));
    for (Eigen::Index i = 0; i < data.observations.rows(); ++i) put(data.observations(i, t));
    os << "\n";
  }
  write_text(path, os.str());
}

Dataset read_dataset_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read '" + path + "'");
  std::string line;
  if (!std::getline(f, line)) throw ValidationError(path + ": empty dataset file");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      out.push_back(cell);
    }
    return out;
  };
  const auto head = split(line);
  int dx = 0;
  int dy = 0;
  for (const auto& h : head) {
    if (h == "x_" + std::to_string(dx + 1) && dy == 0) {
      ++dx;
    } else if (h == "y_" + std::to_string(dy + 1)) {
      ++dy;
    } else {
      throw ValidationError(path + ": unexpected column '" + h + "'");
    }
  }
  if (dy == 0) throw ValidationError(path + ": no observation columns");
  std::vector<std::vector<double>> rows;
  while (std::getline(f, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split(line);
    if (cells.size() != head.size()) throw ValidationError(path + ": ragged row");
    std::vector<double> r;
    for (const auto& c : cells) {
      char* end = nullptr;
      const double v = std::strtod(c.c_str(), &end);
      if (end == c.c_str()) throw ValidationError(path + ": non-numeric cell '" + c + "'");
      r.push_back(v);
    }
    rows.push_back(std::move(r));
  }
  if (rows.empty()) throw ValidationError(path + ": no data rows");
  Dataset d;
  const auto T = static_cast<Eigen::Index>(rows.size());
  d.states.resize(dx, T);
  d.observations.resize(dy, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& r = rows[static_cast<std::size_t>(t)];
    for (int i = 0; i < dx; ++i) d.states(i, t) = r[static_cast<std::size_t>(i)];
    for (int i = 0; i < dy; ++i) d.observations(i, t) = r[static_cast<std::size_t>(dx + i)];
  }
  return d;
}

// ---------------------------------------------------------------------------
// specs

ModelSpec ModelSpec::parse(const Json& j) {
  if (!j.is_object() || !j.contains("id")) throw ValidationError("model needs an 'id'");
  ModelSpec s;
  s.id = j.at("id").get<std::string>();
  s.params = j;
  if (s.id == "linear_mixture") {
    check_keys(j, {"id", "dim", "xi"}, "model");
  } else if (s.id == "squared_obs") {
    check_keys(j, {"id", "r"}, "model");
  } else if (s.id == "cev") {
    check_keys(j, {"id", "theta_log", "delta", "x0_sd", "floor", "substeps"}, "model");
  } else if (s.id == "iid_variance") {
    check_keys(j, {"id", "s2"}, "model");
  } else {
    throw ValidationError("unknown model id '" + s.id + "'");
  }
  (void)s.base();  // surfaces parameter errors early
  return s;
}

StateSpaceModel ModelSpec::base() const { return build("original"); }

StateSpaceModel ModelSpec::build(std::string_view representation) const {
  if (representation != "original" && representation != "augmented") {
    throw ValidationError("representation must be 'original' or 'augmented'");
  }
  StateSpaceModel m;
  if (id == "linear_mixture") {
    m = linear_mixture_model(get_or(params, "dim", 2), get_or(params, "xi", 0.01));
  } else if (id == "squared_obs") {
    if (representation == "augmented") return squared_obs_augmented(get_or(params, "r", kEvenSplit)).model;
    return squared_obs_model();
  } else if (id == "cev") {
    m = cev_model(CevParams::from_log(cev_theta(params)), cev_options(params));
  } else if (id == "iid_variance") {
    m = iid_variance_model(get_or(params, "s2", 1.0));
  } else {
    throw ValidationError("unknown model id '" + id + "'");
  }
  if (representation == "augmented" && !m.has_linear_measurement()) {
    return augment_model(m, get_or(params, "r", kEvenSplit)).model;
  }
  return m;
}

ModelFamily ModelSpec::family() const {
  if (id == "cev") return cev_family(cev_options(params));
  if (id == "iid_variance") return iid_variance_family();
  throw ValidationError("model '" + id + "' has no parameterized family for estimation");
}

std::optional<Vector> ModelSpec::true_theta() const {
  if (id == "cev") return cev_theta(params);
  if (id == "iid_variance") return Vector::Constant(1, std::log(get_or(params, "s2", 1.0)));
  return std::nullopt;
}

FilterSpec FilterSpec::parse(const Json& j, const ModelSpec& model) {
  check_keys(j,
             {"label", "type", "n", "resampler", "grid_1d", "grid_2d", "fixed_b", "mise_scale",
              "representation", "quantile_coordinate", "bandwidth"},
             "filter");
  FilterSpec s;
  s.kind = parse_filter_kind(get_or<std::string>(j, "type", "PSPF"));
  s.label = get_or<std::string>(j, "label", std::string(to_string(s.kind)));
  auto& c = s.config;
  const auto n = get_or<long long>(j, "n", 10000);
  if (n < 1) throw ValidationError("filter '" + s.label + "': n must be at least 1");
  c.n = static_cast<Eigen::Index>(n);
  c.resampler = parse_resampler_kind(get_or<std::string>(j, "resampler", "auto"));
  c.grid_1d = get_or(j, "grid_1d", c.grid_1d);
  c.grid_2d = get_or(j, "grid_2d", c.grid_2d);
  if (j.contains("fixed_b") && !j.at("fixed_b").is_null()) c.fixed_b = j.at("fixed_b").get<double>();
  c.mise_scale = get_or(j, "mise_scale", c.mise_scale);
  c.quantile_coordinate = get_or(j, "quantile_coordinate", 0);
  if (j.contains("bandwidth")) {
    const Json& b = j.at("bandwidth");
    check_keys(b, {"em_iterations", "em_subsample", "em_init", "tolerance", "max_evaluations", "check_boundaries"},
               "filter bandwidth");
    auto& o = c.bandwidth;
    o.em.iterations = get_or(b, "em_iterations", o.em.iterations);
    if (b.contains("em_subsample")) {
      const Json& sub = b.at("em_subsample");
      if (sub.is_null() || (sub.is_string() && sub.get<std::string>() == "all")) {
        o.em.subsample.reset();
      } else {
        o.em.subsample = sub.get<int>();
      }
    }
    const auto init = get_or<std::string>(b, "em_init", "principal-axis");
    if (init == "principal-axis") {
      o.em.init = EmInit::kPrincipalAxis;
    } else if (init == "random-pair") {
      o.em.init = EmInit::kRandomPair;
    } else {
      throw ValidationError("em_init must be 'principal-axis' or 'random-pair'");
    }
    o.tolerance = get_or(b, "tolerance", o.tolerance);
    o.max_evaluations = get_or(b, "max_evaluations", o.max_evaluations);
    o.check_boundaries = get_or(b, "check_boundaries", o.check_boundaries);
  }
  const bool presmoothed = s.kind == FilterKind::kPspf || s.kind == FilterKind::kEnkf ||
                           s.kind == FilterKind::kMisePre;
  const bool nonlinear = !model.base().has_linear_measurement();
  s.representation = get_or<std::string>(j, "representation", presmoothed && nonlinear ? "augmented" : "original");
  const StateSpaceModel built = model.build(s.representation);
  if (c.quantile_coordinate < 0 || c.quantile_coordinate >= built.dim_state) {
    throw ValidationError("filter '" + s.label + "': quantile_coordinate out of range");
  }
  c.validate(s.kind);
  return s;
}

ReferenceSpec ReferenceSpec::parse(const Json& j) {
  ReferenceSpec r;
  if (j.is_null()) return r;
  check_keys(j, {"type", "n", "representation"}, "reference");
  const auto type = get_or<std::string>(j, "type", "none");
  if (type == "none") {
    r.kind = ReferenceKind::kNone;
  } else if (type == "exact") {
    r.kind = ReferenceKind::kExact;
  } else if (type == "sir") {
    r.kind = ReferenceKind::kSir;
  } else {
    throw ValidationError("reference type must be 'none', 'exact' or 'sir'");
  }
  const auto n = get_or<long long>(j, "n", 1000000);
  if (n < 1) throw ValidationError("reference n must be at least 1");
  r.n = static_cast<Eigen::Index>(n);
  r.representation = get_or<std::string>(j, "representation", "original");
  return r;
}

ExperimentSpec ExperimentSpec::parse(const Json& config, const Overrides& ov) {
  check_command(config, "experiment");
  check_keys(config,
             {"schema_version", "command", "model", "T", "filters", "reference", "replications", "seed", "out",
              "metrics", "quantile_levels", "threads", "description"},
             "experiment config");
  ExperimentSpec s;
  if (!config.contains("model")) throw ValidationError("experiment config needs a 'model'");
  s.model = ModelSpec::parse(config.at("model"));
  s.T = parse_T(config);
  s.replications = ov.replications.value_or(get_or(config, "replications", 1));
  if (s.replications < 1) throw ValidationError("replications must be at least 1");
  s.seed = ov.seed.value_or(get_or<std::uint64_t>(config, "seed", 0));
  s.out = ov.out.value_or(get_or<std::string>(config, "out", ""));
  s.threads = ov.threads.value_or(get_or(config, "threads", 0));
  s.quantile_levels = quantile_levels_of(config);
  s.metrics = get_or(config, "metrics", std::vector<std::string>{"loglik", "filter_rmse", "quantiles", "time"});
  for (const auto& m : s.metrics) {
    if (m != "loglik" && m != "filter_rmse" && m != "quantiles" && m != "time") {
      throw ValidationError("unknown metric '" + m + "'");
    }
  }
  s.reference = ReferenceSpec::parse(config.contains("reference") ? config.at("reference") : Json());
  if (s.reference.kind == ReferenceKind::kExact && !s.model.base().linear_dynamics) {
    throw ValidationError("exact reference needs a linear-Gaussian model");
  }
  if (!config.contains("filters") || !config.at("filters").is_array() || config.at("filters").empty()) {
    throw ValidationError("experiment config needs a non-empty 'filters' list");
  }
  std::set<std::string> labels;
  for (const auto& f : config.at("filters")) {
    FilterSpec fs = FilterSpec::parse(f, s.model);
    fs.config.quantile_levels = s.quantile_levels;
    if (!labels.insert(fs.label).second) throw ValidationError("duplicate filter label '" + fs.label + "'");
    s.filters.push_back(std::move(fs));
  }
  return s;
}

// ---------------------------------------------------------------------------
// experiment

std::uint64_t dataset_seed(std::uint64_t base, int replication) {
  return RngStream::derive(base, StreamPurpose::kSimulation, {static_cast<std::uint64_t>(replication)})();
}

std::uint64_t filter_seed(std::uint64_t base, int replication, int filter_index) {
  return RngStream::derive(base, StreamPurpose::kMisc,
                           {static_cast<std::uint64_t>(replication), static_cast<std::uint64_t>(filter_index)})();
}

Dataset simulate_dataset(const StateSpaceModel& model, int T, std::uint64_t seed) {
  RngStream rng(seed);
  SimulationResult sim = simulate(model, T, rng);
  return {std::move(sim.states), std::move(sim.observations), sim.floor_hits};
}

const ResultRow* ExperimentResult::find(std::string_view filter, std::string_view metric) const {
  for (const auto& r : rows) {
    if (r.filter == filter && r.metric == metric) return &r;
  }
  return nullptr;
}

namespace {

constexpr int kReferenceIndex = 1 << 20;

void emit_error_stats(const std::string& prefix, const std::vector<double>& e, ResultRow base,
                      std::vector<ResultRow>& rows) {
  const auto K = e.size();
  const double Kd = static_cast<double>(K);
  ResultRow bias = base, sd = base, rmse = base;
  bias.metric = prefix + "_bias";
  sd.metric = prefix + "_std";
  rmse.metric = prefix + "_rmse";
  if (K > 0) {
    const double m = mean_of(e);
    const double s = population_sd(e);
    std::vector<double> sq;
    for (const double x : e) sq.push_back(x * x);
    const double r = std::sqrt(mean_of(sq));
    bias.value = m;
    rmse.value = r;
    if (K > 1) {
      sd.value = s;
      bias.se = s / std::sqrt(Kd);
      sd.se = s / std::sqrt(2.0 * Kd);
      if (r > 0.0) rmse.se = population_sd(sq) / (2.0 * r * std::sqrt(Kd));
    } else {
      sd.note = "single replication";
    }
  }
  rows.push_back(bias);
  rows.push_back(sd);
  rows.push_back(rmse);
}

ResultRow unsupported(ResultRow base, std::string metric, std::string reason) {
  base.metric = std::move(metric);
  base.note = "unsupported: " + reason;
  return base;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentSpec& spec) {
  const auto start = Clock::now();
  const StateSpaceModel base = spec.model.base();
  std::vector<StateSpaceModel> models;
  for (const auto& f : spec.filters) models.push_back(spec.model.build(f.representation));
  const StateSpaceModel ref_model = spec.model.build(spec.reference.representation);
  const int F = static_cast<int>(spec.filters.size());
  const int R = spec.replications;
  const bool want_quantiles =
      std::find(spec.metrics.begin(), spec.metrics.end(), "quantiles") != spec.metrics.end();

  std::vector<ReplicationRecord> records(static_cast<std::size_t>(R * F));
  parallel_for(R, resolve_threads(spec.threads), [&](int r) {
    const Dataset data = simulate_dataset(base, spec.T, dataset_seed(spec.seed, r));
    double ref = 0.0;
    std::vector<double> ref_q;
    std::string ref_error;
    try {
      if (spec.reference.kind == ReferenceKind::kExact) {
        ref = exact_loglik(ref_model, data.observations);
      } else if (spec.reference.kind == ReferenceKind::kSir) {
        const FilterRun run = reference_sir(ref_model, data.observations, spec.reference.n,
                                            filter_seed(spec.seed, r, kReferenceIndex),
                                            want_quantiles ? spec.quantile_levels : std::vector<double>{}, 0);
        ref = run.loglik;
        ref_q = run.final_quantiles;
      }
    } catch (const Error& e) {
      ref_error = std::string("reference failed: ") + e.what();
    }
    const Vector x_T = data.states.col(data.states.cols() - 1);
    for (int f = 0; f < F; ++f) {
      auto& rec = records[static_cast<std::size_t>(r * F + f)];
      rec.replication = r;
      rec.filter = spec.filters[static_cast<std::size_t>(f)].label;
      rec.reference = ref;
      rec.reference_quantiles = ref_q;
      if (!ref_error.empty()) {
        rec.failed = true;
        rec.message = ref_error;
        continue;
      }
      FilterConfig cfg = spec.filters[static_cast<std::size_t>(f)].config;
      cfg.seed = filter_seed(spec.seed, r, f);
      if (!want_quantiles) cfg.quantile_levels.clear();
      try {
        const FilterRun run =
            run_filter(spec.filters[static_cast<std::size_t>(f)].kind, models[static_cast<std::size_t>(f)],
                       data.observations, cfg);
        if (!std::isfinite(run.loglik)) throw FilterFailure("non-finite log-likelihood");
        rec.loglik = run.loglik;
        rec.filter_sq_error = (run.final_mean.head(x_T.size()) - x_T).squaredNorm();
        rec.quantiles = run.final_quantiles;
        rec.seconds = run.seconds;
      } catch (const FilterFailure& e) {
        rec.failed = true;
        rec.message = e.what();
      } catch (const SingularCovarianceError& e) {
        rec.failed = true;
        rec.message = e.what();
      } catch (const InsufficientSampleError& e) {
        rec.failed = true;
        rec.message = e.what();
      }
    }
  });

  ExperimentResult res;
  auto has = [&](const char* m) { return std::find(spec.metrics.begin(), spec.metrics.end(), m) != spec.metrics.end(); };
  double first_time = 0.0;
  for (int f = 0; f < F; ++f) {
    const auto& fs = spec.filters[static_cast<std::size_t>(f)];
    std::vector<const ReplicationRecord*> ok;
    int failures = 0;
    for (int r = 0; r < R; ++r) {
      const auto& rec = records[static_cast<std::size_t>(r * F + f)];
      if (rec.failed) {
        ++failures;
      } else {
        ok.push_back(&rec);
      }
    }
    ResultRow b;
    b.filter = fs.label;
    b.type = std::string(to_string(fs.kind));
    b.n = fs.config.n;
    b.replications = static_cast<int>(ok.size());
    b.failures = failures;
    if (ok.empty()) b.note = "all replications failed";
    const double K = static_cast<double>(ok.size());

    if (has("loglik")) {
      std::vector<double> l, e;
      for (const auto* rec : ok) {
        l.push_back(rec->loglik);
        e.push_back(rec->loglik - rec->reference);
      }
      ResultRow mean = b;
      mean.metric = "loglik_mean";
      if (!ok.empty()) mean.value = mean_of(l);
      if (ok.size() > 1) mean.se = sample_sd(l) / std::sqrt(K);
      res.rows.push_back(mean);
      if (spec.reference.kind == ReferenceKind::kNone) {
        for (const char* m : {"loglik_bias", "loglik_std", "loglik_rmse"}) {
          res.rows.push_back(unsupported(b, m, "no reference configured"));
        }
      } else {
        emit_error_stats("loglik", e, b, res.rows);
      }
    }
    if (has("filter_rmse")) {
      std::vector<double> sq;
      for (const auto* rec : ok) sq.push_back(rec->filter_sq_error);
      ResultRow row = b;
      row.metric = "filter_rmse";
      if (!ok.empty()) {
        const double r = std::sqrt(mean_of(sq));
        row.value = r;
        if (ok.size() > 1 && r > 0.0) row.se = population_sd(sq) / (2.0 * r * std::sqrt(K));
      }
      res.rows.push_back(row);
    }
    if (has("quantiles")) {
      for (std::size_t q = 0; q < spec.quantile_levels.size(); ++q) {
        const std::string name = quantile_name(spec.quantile_levels[q]);
        if (spec.reference.kind != ReferenceKind::kSir) {
          const char* why = spec.reference.kind == ReferenceKind::kExact ? "exact reference has no quantiles"
                                                                        : "no reference configured";
          res.rows.push_back(unsupported(b, name + "_bias", why));
          res.rows.push_back(unsupported(b, name + "_std", why));
          continue;
        }
        std::vector<double> e;
        for (const auto* rec : ok) e.push_back(rec->quantiles.at(q) - rec->reference_quantiles.at(q));
        std::vector<ResultRow> three;
        emit_error_stats(name, e, b, three);
        res.rows.push_back(three[0]);
        res.rows.push_back(three[1]);
      }
    }
    if (has("time")) {
      std::vector<double> s;
      for (const auto* rec : ok) s.push_back(rec->seconds);
      ResultRow t = b;
      t.metric = "time_seconds";
      if (!ok.empty()) t.value = mean_of(s);
      if (ok.size() > 1) t.se = sample_sd(s) / std::sqrt(K);
      res.rows.push_back(t);
      ResultRow rel = b;
      rel.metric = "relative_time";
      if (f == 0) first_time = t.value.value_or(0.0);
      if (t.value && first_time > 0.0) rel.value = *t.value / first_time;
      rel.note = "relative to " + spec.filters.front().label;
      res.rows.push_back(rel);
    }
  }
  res.records = std::move(records);
  res.wall_seconds = std::chrono::duration<double>(Clock::now() - start).count();
  return res;
}

void write_result_table(const std::string& path, const std::vector<ResultRow>& rows) {
  std::ostringstream os;
  os << "filter,type,n,metric,value,se,replications,failures,note\n";
  for (const auto& r : rows) {
    os << csv_field(r.filter) << ',' << r.type << ',' << r.n << ',' << r.metric << ',' << fmt_opt(r.value)
       << ',' << fmt_opt(r.se) << ',' << r.replications << ',' << r.failures << ',' << csv_field(r.note) << "\n";
  }
  write_text(path, os.str());
}

namespace {

void write_records(const std::string& path, const ExperimentSpec& spec, const std::vector<ReplicationRecord>& recs) {
  std::ostringstream os;
  os << "replication,filter,failed,loglik,reference,error,filter_sq_error";
  for (const double p : spec.quantile_levels) os << ',' << quantile_name(p) << ',' << quantile_name(p) << "_reference";
  os << ",seconds,message\n";
  for (const auto& r : recs) {
    os << r.replication << ',' << csv_field(r.filter) << ',' << (r.failed ? 1 : 0) << ',';
    if (r.failed) {
      os << ",,,";
    } else {
      os << fmt(r.loglik, 17) << ',' << fmt(r.reference, 17) << ',' << fmt(r.loglik - r.reference, 17) << ','
         << fmt(r.filter_sq_error, 17);
    }
    for (std::size_t q = 0; q < spec.quantile_levels.size(); ++q) {
      os << ',' << (q < r.quantiles.size() ? fmt(r.quantiles[q], 17) : "") << ','
         << (q < r.reference_quantiles.size() ? fmt(r.reference_quantiles[q], 17) : "");
    }
    os << ',' << fmt(r.seconds, 6) << ',' << csv_field(r.message) << "\n";
  }
  write_text(path, os.str());
}

Json effective_config(Json config, const Overrides& ov) {
  if (ov.seed) config["seed"] = *ov.seed;
  if (ov.out) config["out"] = *ov.out;
  if (ov.replications) config["replications"] = *ov.replications;
  return config;
}

std::string require_out(const Json& config, const Overrides& ov) {
  const std::string out = ov.out.value_or(get_or<std::string>(config, "out", ""));
  if (out.empty()) throw ValidationError("no output path: set 'out' in the config or pass --out");
  return out;
}

// ---------------------------------------------------------------------------
// commands

std::string cmd_simulate(const Json& config, const Overrides& ov) {
  check_command(config, "simulate");
  check_keys(config, {"schema_version", "command", "model", "T", "seed", "out", "description"}, "simulate config");
  if (!config.contains("model")) throw ValidationError("simulate config needs a 'model'");
  const ModelSpec model = ModelSpec::parse(config.at("model"));
  const int T = parse_T(config);
  const std::uint64_t seed = ov.seed.value_or(get_or<std::uint64_t>(config, "seed", 0));
  const std::string out = require_out(config, ov);
  const Dataset d = simulate_dataset(model.base(), T, dataset_seed(seed, 0));
  write_dataset_csv(out, d);
  write_meta(out, "simulate", effective_config(config, ov), seed,
             {{"T", T}, {"dim_state", d.states.rows()}, {"dim_obs", d.observations.rows()},
              {"floor_hits", d.floor_hits}});
  std::string summary = "wrote " + out + " (" + std::to_string(T) + " rows)";
  if (d.floor_hits > 0.01 * T) {
    summary += "; warning: state floor active at " + std::to_string(d.floor_hits) + " of " + std::to_string(T) +
               " steps";
  }
  return summary;
}

std::string cmd_experiment(const Json& config, const Overrides& ov) {
  const ExperimentSpec spec = ExperimentSpec::parse(config, ov);
  if (spec.out.empty()) throw ValidationError("no output path: set 'out' in the config or pass --out");
  const ExperimentResult res = run_experiment(spec);
  write_result_table(spec.out, res.rows);
  write_records(stem_of(spec.out) + ".replications.csv", spec, res.records);
  int failures = 0;
  for (const auto& r : res.records) failures += r.failed ? 1 : 0;
  write_meta(spec.out, "experiment", effective_config(config, ov), spec.seed,
             {{"replications", spec.replications},
              {"std_convention", "population standard deviation (divisor R); rmse^2 = bias^2 + std^2"},
              {"se_convention", "bias se = std/sqrt(R), std se = std/sqrt(2R), rmse se by the delta method"},
              {"timing_fields", {"time_seconds", "relative_time"}},
              {"failed_runs", failures},
              {"wall_clock_seconds", res.wall_seconds}});
  return "wrote " + spec.out + " (" + std::to_string(res.rows.size()) + " rows, " + std::to_string(failures) +
         " failed runs)";
}

std::string cmd_estimate(const Json& config, const Overrides& ov) {
  const auto start = Clock::now();
  const std::string out = require_out(config, ov);
  const EstimateResult res = run_estimate(config, ov);
  const ModelSpec model = ModelSpec::parse(config.at("model"));
  const ModelFamily fam = model.family();
  std::ostringstream os;
  os << "parameter,truth,mean_estimate,mean_se,mc_se,mc_se_ratio,analytic_mle\n";
  for (const auto& s : res.summary) {
    os << s.parameter << ',' << fmt_opt(s.truth) << ',' << fmt(s.mean_estimate) << ',' << fmt(s.mean_se) << ','
       << fmt(s.mc_se) << ',' << fmt(s.mean_se > 0.0 ? s.mc_se / s.mean_se : std::nan("")) << ','
       << fmt_opt(s.analytic) << "\n";
  }
  write_text(out, os.str());

  std::ostringstream ps;
  ps << "replicate";
  for (const auto& p : fam.parameter_names) ps << ',' << p;
  for (const auto& p : fam.parameter_names) ps << ",se_" << p;
  ps << ",loglik,iterations,converged,hessian_ok,gradient_norm,analytic_mle,message\n";
  for (std::size_t k = 0; k < res.fits.size(); ++k) {
    const auto& f = res.fits[k];
    ps << k;
    if (f.theta.size() == 0) {
      for (std::size_t i = 0; i < 2 * fam.parameter_names.size() + 5; ++i) ps << ',';
    } else {
      for (Eigen::Index i = 0; i < f.theta.size(); ++i) ps << ',' << fmt(f.theta(i), 12);
      for (Eigen::Index i = 0; i < f.std_errors.size(); ++i) ps << ',' << fmt(f.std_errors(i), 12);
      ps << ',' << fmt(f.loglik, 12) << ',' << f.optimizer.iterations << ',' << (f.optimizer.converged ? 1 : 0)
         << ',' << (f.hessian_ok ? 1 : 0) << ','
         << fmt(f.optimizer.gradient.size() ? f.optimizer.gradient.lpNorm<Eigen::Infinity>() : 0.0);
    }
    ps << ',' << fmt_opt(k < res.analytic_mle.size() ? res.analytic_mle[k] : std::nullopt) << ','
       << csv_field(res.failures[k]) << "\n";
  }
  write_text(stem_of(out) + ".replicates.csv", ps.str());
  int failed = 0;
  for (const auto& m : res.failures) failed += m.empty() ? 0 : 1;
  write_meta(out, "estimate", effective_config(config, ov), ov.seed.value_or(get_or<std::uint64_t>(config, "seed", 0)),
             {{"replicates", res.fits.size()},
              {"failed_replicates", failed},
              {"mc_se_convention", "sample standard deviation of the estimates across replicates (divisor K-1)"},
              {"wall_clock_seconds", std::chrono::duration<double>(Clock::now() - start).count()}});
  return "wrote " + out + " (" + std::to_string(res.fits.size()) + " replicates, " + std::to_string(failed) +
         " failed)";
}

std::string cmd_bandwidth_trace(const Json& config, const Overrides& ov) {
  const std::string out = require_out(config, ov);
  const auto rows = run_bandwidth_trace(config, ov);
  std::ostringstream os;
  os << "t";
  const Eigen::Index dy = rows.empty() ? 0 : rows.front().y.size();
  for (Eigen::Index i = 0; i < dy; ++i) os << ",y_" << (i + 1);
  os << ",b,criterion,bias_sq,variance,band_lo,band_hi\n";
  for (const auto& r : rows) {
    os << r.t;
    for (Eigen::Index i = 0; i < dy; ++i) os << ',' << fmt(r.y(i), 12);
    os << ',' << fmt(r.b) << ',' << fmt(r.criterion) << ',' << fmt(r.bias_sq) << ',' << fmt(r.variance) << ','
       << fmt(r.band_lo) << ',' << fmt(r.band_hi) << "\n";
  }
  write_text(out, os.str());
  write_meta(out, "bandwidth-trace", effective_config(config, ov),
             ov.seed.value_or(get_or<std::uint64_t>(config, "seed", 0)), {{"steps", rows.size()}});
  return "wrote " + out + " (" + std::to_string(rows.size()) + " steps)";
}

Dataset load_or_simulate(const Json& config, const ModelSpec& model, std::uint64_t seed) {
  if (config.contains("data") && !config.at("data").is_null()) {
    Dataset d = read_dataset_csv(config.at("data").get<std::string>());
    const StateSpaceModel base = model.base();
    if (d.observations.rows() != base.dim_obs) throw ValidationError("dataset has the wrong observation dimension");
    return d;
  }
  return simulate_dataset(model.base(), parse_T(config), dataset_seed(seed, 0));
}

}  // namespace

EstimateResult run_estimate(const Json& config, const Overrides& ov) {
  check_command(config, "estimate");
  check_keys(config,
             {"schema_version", "command", "model", "T", "data", "seed", "replicates", "theta0", "likelihood",
              "filter", "bfgs", "hessian_step", "out", "threads", "description"},
             "estimate config");
  if (!config.contains("model")) throw ValidationError("estimate config needs a 'model'");
  const ModelSpec model = ModelSpec::parse(config.at("model"));
  const ModelFamily fam = model.family();
  const std::uint64_t seed = ov.seed.value_or(get_or<std::uint64_t>(config, "seed", 0));
  const int K = ov.replications.value_or(get_or(config, "replicates", 10));
  if (K < 1) throw ValidationError("replicates must be at least 1");

  SmlConfig sml;
  const auto lk = get_or<std::string>(config, "likelihood", "pspf");
  if (lk == "pspf") {
    sml.likelihood = LikelihoodKind::kPspf;
  } else if (lk == "kalman") {
    sml.likelihood = LikelihoodKind::kKalman;
    if (!model.base().linear_dynamics) throw ValidationError("kalman likelihood needs a linear-Gaussian family");
  } else {
    throw ValidationError("likelihood must be 'pspf' or 'kalman'");
  }
  if (config.contains("filter")) {
    const FilterSpec fs = FilterSpec::parse(config.at("filter"), model);
    if (fs.kind != FilterKind::kPspf) throw ValidationError("estimation uses the PSPF filter");
    if (fs.representation != "original") throw ValidationError("estimation runs on the original representation");
    sml.filter = fs.config;
  }
  if (config.contains("bfgs")) {
    const Json& b = config.at("bfgs");
    check_keys(b, {"max_iterations", "gradient_tolerance", "function_tolerance", "fd_step", "max_step"}, "bfgs");
    sml.bfgs.max_iterations = get_or(b, "max_iterations", sml.bfgs.max_iterations);
    sml.bfgs.gradient_tolerance = get_or(b, "gradient_tolerance", sml.bfgs.gradient_tolerance);
    sml.bfgs.function_tolerance = get_or(b, "function_tolerance", sml.bfgs.function_tolerance);
    sml.bfgs.fd_step = get_or(b, "fd_step", sml.bfgs.fd_step);
    sml.bfgs.max_step = get_or(b, "max_step", sml.bfgs.max_step);
  }
  sml.hessian_step = get_or(config, "hessian_step", sml.hessian_step);
  if (!(sml.hessian_step > 0.0)) throw ValidationError("hessian_step must be positive");

  const std::optional<Vector> truth = model.true_theta();
  Vector theta0;
  if (config.contains("theta0")) {
    theta0 = to_vector(config.at("theta0"), "theta0");
  } else if (truth) {
    theta0 = *truth;
  } else {
    throw ValidationError("estimate config needs 'theta0'");
  }
  if (theta0.size() != static_cast<Eigen::Index>(fam.parameter_names.size())) {
    throw ValidationError("theta0 has " + std::to_string(theta0.size()) + " entries, the family needs " +
                          std::to_string(fam.parameter_names.size()));
  }

  EstimateResult res;
  res.data = load_or_simulate(config, model, seed);
  res.fits.resize(static_cast<std::size_t>(K));
  res.failures.assign(static_cast<std::size_t>(K), "");
  res.analytic_mle.assign(static_cast<std::size_t>(K), std::nullopt);
  const int threads = resolve_threads(ov.threads.value_or(get_or(config, "threads", 0)));
  parallel_for(K, threads, [&](int k) {
    SmlConfig c = sml;
    c.filter.seed = filter_seed(seed, k, 0);
    try {
      res.fits[static_cast<std::size_t>(k)] = estimate_sml(fam, res.data.observations, theta0, c);
    } catch (const FilterFailure& e) {
      res.failures[static_cast<std::size_t>(k)] = e.what();
    }
  });
  if (model.id == "iid_variance") {
    const double s2 = res.data.observations.array().square().mean() - 1.0;
    for (auto& a : res.analytic_mle) {
      if (s2 > 0.0) a = std::log(s2);
    }
  }
  for (std::size_t i = 0; i < fam.parameter_names.size(); ++i) {
    EstimateSummaryRow row;
    row.parameter = fam.parameter_names[i];
    if (truth) row.truth = (*truth)(static_cast<Eigen::Index>(i));
    std::vector<double> est, se;
    for (std::size_t k = 0; k < res.fits.size(); ++k) {
      if (!res.failures[k].empty()) continue;
      est.push_back(res.fits[k].theta(static_cast<Eigen::Index>(i)));
      if (res.fits[k].hessian_ok) se.push_back(res.fits[k].std_errors(static_cast<Eigen::Index>(i)));
    }
    row.mean_estimate = est.empty() ? std::nan("") : mean_of(est);
    row.mean_se = se.empty() ? std::nan("") : mean_of(se);
    row.mc_se = sample_sd(est);
    if (!res.analytic_mle.empty()) row.analytic = res.analytic_mle.front();
    res.summary.push_back(row);
  }
  return res;
}

std::vector<TraceRow> run_bandwidth_trace(const Json& config, const Overrides& ov) {
  check_command(config, "bandwidth-trace");
  check_keys(config,
             {"schema_version", "command", "model", "T", "data", "seed", "filter", "coordinate", "outlier", "out",
              "description"},
             "bandwidth-trace config");
  if (!config.contains("model")) throw ValidationError("bandwidth-trace config needs a 'model'");
  const ModelSpec model = ModelSpec::parse(config.at("model"));
  const std::uint64_t seed = ov.seed.value_or(get_or<std::uint64_t>(config, "seed", 0));
  FilterSpec fs = FilterSpec::parse(config.contains("filter") ? config.at("filter") : Json::object(), model);
  if (fs.kind != FilterKind::kPspf || fs.config.fixed_b) {
    throw ValidationError("bandwidth-trace needs a PSPF filter with adaptive b");
  }
  Dataset data = load_or_simulate(config, model, seed);
  if (config.contains("outlier")) {
    const Json& o = config.at("outlier");
    check_keys(o, {"t", "shift"}, "outlier");
    const int t = get_or(o, "t", 0);
    if (t < 1 || t > data.observations.cols()) throw ValidationError("outlier t out of range");
    data.observations.col(t - 1).array() += get_or(o, "shift", 0.0);
  }
  const StateSpaceModel m = model.build(fs.representation);
  fs.config.seed = filter_seed(seed, 0, 0);
  fs.config.keep_criterion = true;
  fs.config.band_coordinate = get_or(config, "coordinate", 0);
  if (fs.config.band_coordinate < 0 || fs.config.band_coordinate >= m.dim_state) {
    throw ValidationError("coordinate out of range");
  }
  const FilterRun run = run_pspf(m, data.observations, fs.config);
  std::vector<TraceRow> rows;
  for (std::size_t t = 0; t < run.b_trace.size(); ++t) {
    TraceRow r;
    r.t = static_cast<int>(t) + 1;
    r.y = data.observations.col(static_cast<Eigen::Index>(t));
    r.b = run.b_trace[t];
    r.criterion = run.criterion[t].total();
    r.bias_sq = run.criterion[t].bias_sq();
    r.variance = run.criterion[t].variance();
    r.band_lo = run.band[t][0];
    r.band_hi = run.band[t][1];
    rows.push_back(std::move(r));
  }
  return rows;
}

std::string run_command(std::string_view command, const std::string& config_path, const Overrides& ov) {
  const Json config = read_json_file(config_path);
  if (command == "simulate") return cmd_simulate(config, ov);
  if (command == "experiment") return cmd_experiment(config, ov);
  if (command == "estimate") return cmd_estimate(config, ov);
  if (command == "bandwidth-trace") return cmd_bandwidth_trace(config, ov);
  throw ValidationError("unknown command '" + std::string(command) + "'");
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const FilterFailure*>(&e) != nullptr) return 3;
  if (dynamic_cast<const SingularCovarianceError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const InsufficientSampleError*>(&e) != nullptr) return 3;
  if (dynamic_cast<const Error*>(&e) != nullptr) return 2;
  if (dynamic_cast<const Json::exception*>(&e) != nullptr) return 2;
  return 3;
}

Json read_json_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot read config '" + path + "'");
  try {
    return Json::parse(f);
  } catch (const Json::parse_error& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::uint64_t config_hash(const Json& config) {
  const std::string s = config.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace pspf
