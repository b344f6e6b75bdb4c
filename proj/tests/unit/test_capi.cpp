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


// Exercises the shared library through its C interface only.

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "pspf/pspf.h"

namespace {

struct Model {
  pspf_model* p = nullptr;
  ~Model() { pspf_model_destroy(p); }
};
struct Data {
  pspf_dataset* p = nullptr;
  ~Data() { pspf_dataset_destroy(p); }
};
struct Result {
  pspf_filter_result* p = nullptr;
  ~Result() { pspf_filter_result_destroy(p); }
};

TEST(CApi, VersionAndStatusNames) {
  EXPECT_STREQ(pspf_version(), "0.1.0");
  EXPECT_STREQ(pspf_status_name(PSPF_OK), "ok");
  EXPECT_EQ(pspf_exit_code(PSPF_OK), 0);
  EXPECT_EQ(pspf_exit_code(PSPF_ERR_VALIDATION), 2);
  EXPECT_EQ(pspf_exit_code(PSPF_ERR_FILTER_FAILURE), 3);
}

TEST(CApi, SimulateFilterAndExact) {
  Model m;
  ASSERT_EQ(pspf_model_create(R"({"id":"linear_mixture","dim":2,"xi":0.1})", &m.p), PSPF_OK);
  int ds = 0, dy = 0;
  ASSERT_EQ(pspf_model_dims(m.p, "original", &ds, &dy), PSPF_OK);
  EXPECT_EQ(ds, 2);
  EXPECT_EQ(dy, 2);
  Data d;
  ASSERT_EQ(pspf_simulate(m.p, 10, 42, &d.p), PSPF_OK);
  int T = 0;
  ASSERT_EQ(pspf_dataset_shape(d.p, &ds, &dy, &T), PSPF_OK);
  EXPECT_EQ(T, 10);

  Result r;
  ASSERT_EQ(pspf_run_filter(m.p, d.p, R"({"type":"PSPF","n":2000,"resampler":"direct"})", 7, &r.p), PSPF_OK);
  double ll = 0.0, exact = 0.0;
  ASSERT_EQ(pspf_filter_result_loglik(r.p, &ll), PSPF_OK);
  ASSERT_EQ(pspf_exact_loglik(m.p, d.p, &exact), PSPF_OK);
  EXPECT_NEAR(ll, exact, 1.0);
  std::vector<double> inc(10), b(10);
  ASSERT_EQ(pspf_filter_result_increments(r.p, inc.data(), inc.size()), PSPF_OK);
  ASSERT_EQ(pspf_filter_result_b_trace(r.p, b.data(), b.size()), PSPF_OK);
  double sum = 0.0;
  for (double v : inc) sum += v;
  EXPECT_NEAR(sum, ll, 1e-9);
  for (double v : b) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  double mean[2];
  size_t written = 0;
  ASSERT_EQ(pspf_filter_result_final_mean(r.p, mean, 2, &written), PSPF_OK);
  EXPECT_EQ(written, 2u);
  EXPECT_EQ(pspf_filter_result_increments(r.p, inc.data(), 3), PSPF_ERR_SHAPE);
}

TEST(CApi, DatasetRoundTrip) {
  const std::vector<double> x{1, 2, 3, 4, 5, 6};
  const std::vector<double> y{0.5, 1.5, 2.5};
  Data d;
  ASSERT_EQ(pspf_dataset_create(2, 1, 3, x.data(), y.data(), &d.p), PSPF_OK);
  const std::string path = ::testing::TempDir() + "pspf_capi_roundtrip.csv";
  ASSERT_EQ(pspf_dataset_write_csv(d.p, path.c_str()), PSPF_OK);
  Data e;
  ASSERT_EQ(pspf_dataset_read_csv(path.c_str(), &e.p), PSPF_OK);
  std::vector<double> xs(6), ys(3);
  ASSERT_EQ(pspf_dataset_states(e.p, xs.data(), xs.size()), PSPF_OK);
  ASSERT_EQ(pspf_dataset_observations(e.p, ys.data(), ys.size()), PSPF_OK);
  EXPECT_EQ(xs, x);
  EXPECT_EQ(ys, y);
  std::remove(path.c_str());
  EXPECT_EQ(pspf_dataset_read_csv("/nonexistent/file.csv", &e.p), PSPF_ERR_IO);
}

TEST(CApi, PsUpdateLimits) {
  const double x[4] = {-1.0, 0.0, 1.0, 2.0};
  const double y = 0.3, M = 1.0, R = 0.5;
  double lp = 0.0, w[4];
  ASSERT_EQ(pspf_ps_update(1, 4, x, 1, &y, &M, &R, 1.0, &lp, nullptr, nullptr, w), PSPF_OK);
  double expect = 0.0;
  for (double v : x) expect += std::exp(-0.5 * (y - v) * (y - v) / R) / std::sqrt(2 * M_PI * R);
  EXPECT_NEAR(lp, std::log(expect / 4.0), 1e-12);
  double wsum = 0.0;
  for (double v : w) wsum += v;
  EXPECT_NEAR(wsum, 1.0, 1e-12);
  EXPECT_EQ(pspf_ps_update(1, 4, x, 1, &y, &M, &R, 1.5, &lp, nullptr, nullptr, nullptr), PSPF_ERR_DOMAIN);
  const double bad_r = -1.0;
  EXPECT_NE(pspf_ps_update(1, 4, x, 1, &y, &M, &bad_r, 0.5, &lp, nullptr, nullptr, nullptr), PSPF_OK);
  EXPECT_NE(std::string(pspf_last_error()), "");
}

TEST(CApi, SelectBandwidth) {
  std::vector<double> x(400);
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::sin(0.7 * static_cast<double>(i)) * 2.0;
  const double y = 0.2, M = 1.0, R = 0.1;
  double b = -1.0, c = -1.0;
  ASSERT_EQ(pspf_select_bandwidth(1, 400, x.data(), 1, &y, &M, &R, 3, &b, &c), PSPF_OK);
  EXPECT_GE(b, 0.0);
  EXPECT_LE(b, 1.0);
  EXPECT_GE(c, 0.0);
  double b2 = -1.0;
  ASSERT_EQ(pspf_select_bandwidth(1, 400, x.data(), 1, &y, &M, &R, 3, &b2, nullptr), PSPF_OK);
  EXPECT_EQ(b, b2);
}

TEST(CApi, Errors) {
  Model m;
  EXPECT_EQ(pspf_model_create(R"({"id":"nope"})", &m.p), PSPF_ERR_VALIDATION);
  EXPECT_EQ(m.p, nullptr);
  EXPECT_EQ(pspf_model_create("{not json", &m.p), PSPF_ERR_VALIDATION);
  EXPECT_EQ(pspf_model_create(nullptr, &m.p), PSPF_ERR_INVALID_ARGUMENT);
  ASSERT_EQ(pspf_model_create(R"({"id":"squared_obs"})", &m.p), PSPF_OK);
  Data d;
  ASSERT_EQ(pspf_simulate(m.p, 5, 1, &d.p), PSPF_OK);
  Result r;
  EXPECT_EQ(pspf_run_filter(m.p, d.p, R"({"type":"FASIR","n":100,"representation":"original"})", 1, &r.p),
            PSPF_ERR_UNSUPPORTED_MODEL);
  EXPECT_EQ(pspf_simulate(m.p, 0, 1, &d.p), PSPF_ERR_VALIDATION);
  EXPECT_EQ(pspf_cmd_run("simulate", "/nonexistent.json", nullptr, nullptr, 0), PSPF_ERR_IO);
}

}  // namespace
