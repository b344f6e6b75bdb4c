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


// pspf: command-line runner for simulation experiments and estimation.

#include <cstdint>
#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "pspf/pspf.h"

namespace {

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  int threads = 0;
  int replications = 0;
};

void add_common(CLI::App* sub, Options& o, bool with_replications) {
  sub->add_option("--config", o.config, "JSON config file")->required()->check(CLI::ExistingFile);
  sub->add_option("--seed", o.seed, "base seed (overrides the config)");
  sub->add_option("--out", o.out, "output path (overrides the config)");
  sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
  if (with_replications) {
    sub->add_option("--replications", o.replications, "replication count (overrides the config)")
        ->check(CLI::PositiveNumber);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-smoothed particle filter experiments"};
  app.set_version_flag("--version", std::string(pspf_version()));
  app.require_subcommand(1);

  Options opt;
  CLI::App* simulate = app.add_subcommand("simulate", "simulate a dataset from a model");
  CLI::App* experiment = app.add_subcommand("experiment", "run a filter bank over replications");
  CLI::App* estimate = app.add_subcommand("estimate", "simulated maximum likelihood estimation");
  CLI::App* trace = app.add_subcommand("bandwidth-trace", "per-step smoothing parameter trace");
  add_common(simulate, opt, false);
  add_common(experiment, opt, true);
  add_common(estimate, opt, true);
  add_common(trace, opt, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  pspf_overrides ov{};
  if (sub->count("--seed") > 0) {
    ov.has_seed = 1;
    ov.seed = opt.seed;
  }
  if (!opt.out.empty()) ov.out = opt.out.c_str();
  ov.threads = opt.threads;
  ov.replications = opt.replications;

  char summary[512];
  const pspf_status st = pspf_cmd_run(sub->get_name().c_str(), opt.config.c_str(), &ov, summary, sizeof summary);
  if (st != PSPF_OK) {
    std::fprintf(stderr, "pspf %s: %s: %s\n", sub->get_name().c_str(), pspf_status_name(st), pspf_last_error());
    return pspf_exit_code(st);
  }
  std::printf("%s\n", summary);
  return 0;
}
