/*
 * Copyright 2026 The relugrad Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "relugrad/relugrad.h"

namespace {

struct NetGuard {
  rg_network* p = nullptr;
  ~NetGuard() { rg_network_free(p); }
};

const char* kTwoKinkNet =
    R"({"dims":[1,2],"outputs":1,"weights":[[[1],[-1]]],"biases":[[0,0.2]],"beta0":[0],"beta":[[1,1]]})";

}  // namespace

TEST_SUITE("c_api") {

TEST_CASE("version and status names") {
  CHECK(std::string(rg_version()).size() > 0);
  CHECK(std::string(rg_status_name(RG_ERR_IO)) == "io");
  CHECK(std::string(rg_command_names()).find("theorem1") != std::string::npos);
}

TEST_CASE("generate, query, forward and gradient") {
  const size_t dims[] = {3, 5, 4};
  NetGuard n;
  REQUIRE(rg_network_generate(dims, 3, 2, RG_DIST_TRUNCATED_GAUSSIAN, 1.0, 1.0, 7, &n.p) == RG_OK);
  size_t v = 0;
  CHECK(rg_network_input_dim(n.p, &v) == RG_OK);
  CHECK(v == 3);
  CHECK(rg_network_depth(n.p, &v) == RG_OK);
  CHECK(v == 2);
  CHECK(rg_network_width(n.p, 1, &v) == RG_OK);
  CHECK(v == 4);
  CHECK(rg_network_width(n.p, 2, &v) == RG_ERR_INVALID_ARGUMENT);
  CHECK(rg_network_output_count(n.p, &v) == RG_OK);
  CHECK(v == 2);

  const double x[] = {0.1, -0.2, 0.3};
  double out[2];
  CHECK(rg_network_forward(n.p, x, 3, out, 2) == RG_OK);
  CHECK(rg_network_forward(n.p, x, 2, out, 2) == RG_ERR_SHAPE_MISMATCH);
  CHECK(std::string(rg_last_error()).size() > 0);

  // Gradient against central differences.
  double g[3];
  REQUIRE(rg_network_gradient(n.p, x, 3, 1, g, 3) == RG_OK);
  for (int i = 0; i < 3; ++i) {
    double xp[3] = {x[0], x[1], x[2]}, xm[3] = {x[0], x[1], x[2]};
    xp[i] += 1e-7;
    xm[i] -= 1e-7;
    double fp[2], fm[2];
    rg_network_forward(n.p, xp, 3, fp, 2);
    rg_network_forward(n.p, xm, 3, fm, 2);
    CHECK(g[i] == doctest::Approx((fp[1] - fm[1]) / 2e-7).epsilon(1e-5));
  }
  CHECK(rg_network_gradient(n.p, x, 3, 2, g, 3) == RG_ERR_INVALID_ARGUMENT);
}

TEST_CASE("weight files through the C API") {
  NetGuard a;
  REQUIRE(rg_network_from_json(kTwoKinkNet, &a.p) == RG_OK);
  const auto path = (std::filesystem::temp_directory_path() / "relugrad_capi.json").string();
  REQUIRE(rg_network_save(a.p, path.c_str()) == RG_OK);
  NetGuard b;
  REQUIRE(rg_network_load(path.c_str(), &b.p) == RG_OK);
  char* ja = nullptr;
  char* jb = nullptr;
  rg_network_to_json(a.p, &ja);
  rg_network_to_json(b.p, &jb);
  CHECK(std::strcmp(ja, jb) == 0);
  rg_string_free(ja);
  rg_string_free(jb);
  std::filesystem::remove(path);

  NetGuard c;
  CHECK(rg_network_load("/nonexistent/net.json", &c.p) == RG_ERR_IO);
  CHECK(c.p == nullptr);
  CHECK(rg_network_from_json("{", &c.p) == RG_ERR_MALFORMED_FILE);
  CHECK(rg_network_from_json(nullptr, &c.p) == RG_ERR_INVALID_ARGUMENT);
}

TEST_CASE("tracing through the C API") {
  NetGuard n;
  REQUIRE(rg_network_from_json(kTwoKinkNet, &n.p) == RG_OK);
  const double x1[] = {-1.0}, x2[] = {1.0};
  rg_trace* t = nullptr;
  REQUIRE(rg_trace_compute(n.p, x1, x2, 1, nullptr, &t) == RG_OK);
  REQUIRE(rg_trace_event_count(t) == 2);
  CHECK(rg_trace_segment_count(t) == 3);
  CHECK(rg_trace_uncertified_segments(t) == 0);
  rg_event e;
  REQUIRE(rg_trace_event(t, 1, &e) == RG_OK);
  CHECK(e.t == doctest::Approx(0.6));
  CHECK(e.layer == 0);
  CHECK(e.node == 1);
  CHECK(e.direction == RG_ON_TO_OFF);
  CHECK(e.jump_scalar == doctest::Approx(2.0));
  CHECK(e.multi_flip == 0);
  double jv[1];
  CHECK(rg_trace_jump_vector(t, 1, jv, 1) == RG_OK);
  CHECK(jv[0] == doctest::Approx(1.0));
  CHECK(rg_trace_event(t, 2, &e) == RG_ERR_INVALID_ARGUMENT);
  double g = 0.0;
  CHECK(rg_trace_eval(t, 0.55, &g) == RG_OK);
  CHECK(g == doctest::Approx(0.2));
  char* csv = nullptr;
  REQUIRE(rg_trace_csv(t, 1, &csv) == RG_OK);
  CHECK(std::string(csv).rfind("replicate_id,event_index,", 0) == 0);
  rg_string_free(csv);
  rg_trace_free(t);

  rg_trace_options o;
  rg_trace_options_default(&o);
  o.jump_vectors = 0;
  REQUIRE(rg_trace_compute(n.p, x1, x2, 1, &o, &t) == RG_OK);
  REQUIRE(rg_trace_event(t, 0, &e) == RG_OK);
  CHECK(std::isnan(e.jump_vector_norm));
  CHECK(rg_trace_jump_vector(t, 0, jv, 1) == RG_ERR_INVALID_ARGUMENT);
  rg_trace_free(t);

  CHECK(rg_trace_compute(n.p, x1, x1, 1, nullptr, &t) == RG_ERR_INVALID_ARGUMENT);
  CHECK(t == nullptr);
  o.max_events = 1;
  CHECK(rg_trace_compute(n.p, x1, x2, 1, &o, &t) == RG_ERR_CAP_EXCEEDED);
}

TEST_CASE("commands through the C API") {
  rg_report* r = nullptr;
  REQUIRE(rg_run_command("gen", R"({"input_dim":2,"widths":[3],"seed":5})", &r) == RG_OK);
  REQUIRE(rg_report_artifact_count(r) == 1);
  CHECK(std::string(rg_report_artifact_name(r, 0)) == "network.json");
  CHECK(rg_report_artifact_size(r, 0) == std::strlen(rg_report_artifact_data(r, 0)));
  const auto summary = nlohmann::json::parse(rg_report_summary(r));
  CHECK(summary.at("command") == "gen");
  CHECK(summary.at("config").at("seed") == 5);
  CHECK(rg_report_artifact_name(r, 1) == nullptr);
  rg_report_free(r);

  CHECK(rg_run_command("nope", nullptr, &r) == RG_ERR_INVALID_ARGUMENT);
  CHECK(rg_run_command("gen", R"({"bogus":1})", &r) == RG_ERR_INVALID_ARGUMENT);
  CHECK(std::string(rg_last_error()).find("bogus") != std::string::npos);
  CHECK(rg_run_command("gen", R"({"widths":"wide"})", &r) == RG_ERR_INVALID_ARGUMENT);
  CHECK(rg_run_command("gen", "{not json", &r) == RG_ERR_INVALID_ARGUMENT);
  CHECK(rg_run_command("trace", R"({"weights":"/nonexistent.json"})", &r) == RG_ERR_IO);
  CHECK(rg_run_command("table1", R"({"input_dim":2,"widths":[3],"replicates":0})", &r) == RG_ERR_INVALID_ARGUMENT);
  CHECK(r == nullptr);

  char* resolved = nullptr;
  REQUIRE(rg_resolve_config("theorem1", R"({"bases":[4]})", &resolved) == RG_OK);
  const auto cfg = nlohmann::json::parse(resolved);
  CHECK(cfg.at("replicates") == 30);
  CHECK(cfg.at("bases").size() == 1);
  rg_string_free(resolved);
}

TEST_CASE("null handles are tolerated by accessors and free functions") {
  rg_network_free(nullptr);
  rg_trace_free(nullptr);
  rg_report_free(nullptr);
  rg_string_free(nullptr);
  CHECK(rg_trace_event_count(nullptr) == 0);
  CHECK(rg_report_artifact_count(nullptr) == 0);
  size_t v;
  CHECK(rg_network_depth(nullptr, &v) == RG_ERR_INVALID_ARGUMENT);
}

}  // TEST_SUITE
