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
#include "relugrad/relugrad.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <memory>
#include <new>
#include <string>

#include <json.hpp>

#include "relugrad/error.hpp"
#include "relugrad/network.hpp"
#include "relugrad/params_io.hpp"
#include "relugrad/tracer.hpp"
#include "runner.hpp"

struct rg_network {
  relugrad::NetworkParams params;
};

struct rg_trace {
  relugrad::PathTrace trace;
};

struct rg_report {
  std::string summary;
  std::vector<std::pair<std::string, std::string>> artifacts;
};

namespace {

thread_local std::string last_error;

rg_status status_of(relugrad::ErrorKind kind) {
  using relugrad::ErrorKind;
  switch (kind) {
    case ErrorKind::InvalidArgument: return RG_ERR_INVALID_ARGUMENT;
    case ErrorKind::ShapeMismatch: return RG_ERR_SHAPE_MISMATCH;
    case ErrorKind::MalformedFile: return RG_ERR_MALFORMED_FILE;
    case ErrorKind::Io: return RG_ERR_IO;
    case ErrorKind::Numeric: return RG_ERR_NUMERIC;
    case ErrorKind::CapExceeded: return RG_ERR_CAP_EXCEEDED;
  }
  return RG_ERR_INTERNAL;
}

template <typename Fn>
rg_status guarded(Fn&& fn) {
  last_error.clear();
  try {
    fn();
    return RG_OK;
  } catch (const relugrad::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    last_error = std::string("invalid JSON: ") + e.what();
    return RG_ERR_INVALID_ARGUMENT;
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return RG_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return RG_ERR_INTERNAL;
  }
}

void need(const void* p, const char* what) {
  relugrad::require(p != nullptr, relugrad::ErrorKind::InvalidArgument,
                    std::string(what) + " must not be NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

relugrad::Vector to_vector(const double* x, std::size_t n) {
  return Eigen::Map<const relugrad::Vector>(x, static_cast<Eigen::Index>(n));
}

nlohmann::json parse_config(const char* text) {
  if (text == nullptr || *text == '\0') return nlohmann::json::object();
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    relugrad::fail(relugrad::ErrorKind::InvalidArgument, std::string("config is not valid JSON: ") + e.what());
  }
}

}  // namespace

extern "C" {

const char* rg_version(void) { return relugrad::library_version(); }

const char* rg_last_error(void) { return last_error.c_str(); }

const char* rg_status_name(rg_status status) {
  switch (status) {
    case RG_OK: return "ok";
    case RG_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case RG_ERR_SHAPE_MISMATCH: return "shape_mismatch";
    case RG_ERR_MALFORMED_FILE: return "malformed_file";
    case RG_ERR_IO: return "io";
    case RG_ERR_NUMERIC: return "numeric";
    case RG_ERR_CAP_EXCEEDED: return "cap_exceeded";
    case RG_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void rg_string_free(char* text) { std::free(text); }

rg_status rg_network_generate(const size_t* dims, size_t dim_count, size_t outputs, rg_dist dist,
                              double tau, double variance, uint64_t seed, rg_network** out) {
  return guarded([&] {
    need(dims, "dims");
    need(out, "out");
    *out = nullptr;
    relugrad::require(dim_count >= 2, relugrad::ErrorKind::InvalidArgument,
                      "dims must hold the input dimension and at least one width");
    relugrad::ArchSpec arch;
    arch.input_dim = dims[0];
    arch.hidden_widths.assign(dims + 1, dims + dim_count);
    arch.output_count = outputs;
    relugrad::ParamDistribution d;
    if (dist == RG_DIST_TRUNCATED_GAUSSIAN) {
      d = relugrad::ParamDistribution::truncated_gaussian(variance, tau);
    } else if (dist == RG_DIST_UNIFORM) {
      d = relugrad::ParamDistribution::uniform(tau);
    } else {
      relugrad::fail(relugrad::ErrorKind::InvalidArgument, "unknown distribution");
    }
    *out = new rg_network{relugrad::generate_params(arch, d, seed)};
  });
}

rg_status rg_network_load(const char* path, rg_network** out) {
  return guarded([&] {
    need(path, "path");
    need(out, "out");
    *out = nullptr;
    *out = new rg_network{relugrad::load_params(path)};
  });
}

rg_status rg_network_from_json(const char* text, rg_network** out) {
  return guarded([&] {
    need(text, "text");
    need(out, "out");
    *out = nullptr;
    *out = new rg_network{relugrad::params_from_json(text)};
  });
}

rg_status rg_network_save(const rg_network* net, const char* path) {
  return guarded([&] {
    need(net, "net");
    need(path, "path");
    relugrad::save_params(net->params, path);
  });
}

rg_status rg_network_to_json(const rg_network* net, char** out) {
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    *out = copy_string(relugrad::params_to_json(net->params));
  });
}

void rg_network_free(rg_network* net) { delete net; }

rg_status rg_network_input_dim(const rg_network* net, size_t* out) {
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    *out = net->params.arch.input_dim;
  });
}

rg_status rg_network_depth(const rg_network* net, size_t* out) {
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    *out = net->params.arch.depth();
  });
}

rg_status rg_network_width(const rg_network* net, size_t layer, size_t* out) {
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    relugrad::require(layer < net->params.arch.depth(), relugrad::ErrorKind::InvalidArgument,
                      "layer out of range");
    *out = net->params.arch.width(layer);
  });
}

rg_status rg_network_output_count(const rg_network* net, size_t* out) {
  return guarded([&] {
    need(net, "net");
    need(out, "out");
    *out = net->params.arch.output_count;
  });
}

rg_status rg_network_forward(const rg_network* net, const double* x, size_t x_len, double* out,
                             size_t out_len) {
  return guarded([&] {
    need(net, "net");
    need(x, "x");
    need(out, "out");
    relugrad::require(out_len == net->params.arch.output_count,
                      relugrad::ErrorKind::ShapeMismatch, "output buffer length differs from K");
    const auto state = relugrad::forward(net->params, std::span<const double>(x, x_len));
    for (size_t k = 0; k < out_len; ++k) out[k] = state.output[static_cast<Eigen::Index>(k)];
  });
}

rg_status rg_network_gradient(const rg_network* net, const double* x, size_t x_len, size_t output,
                              double* grad, size_t grad_len) {
  return guarded([&] {
    need(net, "net");
    need(x, "x");
    need(grad, "grad");
    relugrad::require(grad_len == net->params.arch.input_dim, relugrad::ErrorKind::ShapeMismatch,
                      "gradient buffer length differs from the input dimension");
    relugrad::require(output < net->params.arch.output_count, relugrad::ErrorKind::InvalidArgument,
                      "output index out of range");
    const auto pattern = relugrad::activation_pattern(
        relugrad::forward(net->params, std::span<const double>(x, x_len)));
    const relugrad::Vector g =
        relugrad::gradient_of_region(net->params, pattern, relugrad::OutputSelector{output, {}});
    for (size_t i = 0; i < grad_len; ++i) grad[i] = g[static_cast<Eigen::Index>(i)];
  });
}

void rg_trace_options_default(rg_trace_options* options) {
  if (!options) return;
  const relugrad::TraceTolerances tol;
  options->t_merge = tol.t_merge;
  options->slope_floor = tol.slope_floor;
  options->step_nudge = tol.step_nudge;
  options->max_events = tol.max_events;
  options->output = 0;
  options->use_minus = 0;
  options->minus = 0;
  options->jump_vectors = 1;
}

rg_status rg_trace_compute(const rg_network* net, const double* x1, const double* x2, size_t len,
                           const rg_trace_options* options, rg_trace** out) {
  return guarded([&] {
    need(net, "net");
    need(x1, "x1");
    need(x2, "x2");
    need(out, "out");
    *out = nullptr;
    rg_trace_options o;
    rg_trace_options_default(&o);
    if (options) o = *options;
    relugrad::TraceOptions opts;
    opts.tol.t_merge = o.t_merge;
    opts.tol.slope_floor = o.slope_floor;
    opts.tol.step_nudge = o.step_nudge;
    opts.tol.max_events = o.max_events;
    opts.output.output = o.output;
    if (o.use_minus) opts.output.minus = o.minus;
    opts.jump_vectors = o.jump_vectors != 0;
    opts.keep_patterns = false;
    *out = new rg_trace{relugrad::trace_path(net->params, to_vector(x1, len), to_vector(x2, len), opts)};
  });
}

size_t rg_trace_event_count(const rg_trace* trace) { return trace ? trace->trace.events.size() : 0; }

size_t rg_trace_segment_count(const rg_trace* trace) {
  return trace ? trace->trace.segment_count() : 0;
}

size_t rg_trace_uncertified_segments(const rg_trace* trace) {
  return trace ? trace->trace.uncertified_segments : 0;
}

rg_status rg_trace_event(const rg_trace* trace, size_t index, rg_event* out) {
  return guarded([&] {
    need(trace, "trace");
    need(out, "out");
    relugrad::require(index < trace->trace.events.size(), relugrad::ErrorKind::InvalidArgument,
                      "event index out of range");
    const auto& e = trace->trace.events[index];
    out->t = e.t;
    out->layer = e.node().layer;
    out->node = e.node().index;
    out->direction =
        e.flips.front().direction == relugrad::FlipDirection::OffToOn ? RG_OFF_TO_ON : RG_ON_TO_OFF;
    out->jump_scalar = e.jump_scalar;
    out->jump_vector_norm =
        e.jump_vector.size() ? e.jump_vector.norm() : std::numeric_limits<double>::quiet_NaN();
    out->normalized_scalar = e.normalized_scalar;
    out->multi_flip = e.multi_flip ? 1 : 0;
    out->flip_count = e.flips.size();
  });
}

rg_status rg_trace_jump_vector(const rg_trace* trace, size_t index, double* out, size_t len) {
  return guarded([&] {
    need(trace, "trace");
    need(out, "out");
    relugrad::require(index < trace->trace.events.size(), relugrad::ErrorKind::InvalidArgument,
                      "event index out of range");
    const auto& v = trace->trace.events[index].jump_vector;
    relugrad::require(v.size() > 0, relugrad::ErrorKind::InvalidArgument,
                      "jump vectors were not computed for this trace");
    relugrad::require(static_cast<Eigen::Index>(len) == v.size(), relugrad::ErrorKind::ShapeMismatch,
                      "buffer length differs from the input dimension");
    for (size_t i = 0; i < len; ++i) out[i] = v[static_cast<Eigen::Index>(i)];
  });
}

rg_status rg_trace_eval(const rg_trace* trace, double t, double* out) {
  return guarded([&] {
    need(trace, "trace");
    need(out, "out");
    *out = trace->trace.g(t);
  });
}

rg_status rg_trace_csv(const rg_trace* trace, size_t replicate_id, char** out) {
  return guarded([&] {
    need(trace, "trace");
    need(out, "out");
    *out = copy_string(relugrad::trace_csv_header() + relugrad::trace_csv_rows(trace->trace, replicate_id));
  });
}

rg_status rg_trace_write_csv(const rg_trace* trace, size_t replicate_id, const char* path) {
  return guarded([&] {
    need(trace, "trace");
    need(path, "path");
    relugrad::write_text_file(path, relugrad::trace_csv_header() +
                                        relugrad::trace_csv_rows(trace->trace, replicate_id));
  });
}

void rg_trace_free(rg_trace* trace) { delete trace; }

const char* rg_command_names(void) {
  static const std::string names = [] {
    std::string s;
    for (const auto& n : relugrad::command_names()) s += (s.empty() ? "" : " ") + n;
    return s;
  }();
  return names.c_str();
}

rg_status rg_resolve_config(const char* command, const char* config_json, char** out) {
  return guarded([&] {
    need(command, "command");
    need(out, "out");
    *out = nullptr;
    *out = copy_string(relugrad::resolve_config(command, parse_config(config_json)).dump());
  });
}

rg_status rg_run_command(const char* command, const char* config_json, rg_report** out) {
  return guarded([&] {
    need(command, "command");
    need(out, "out");
    *out = nullptr;
    auto result = relugrad::run_command(command, parse_config(config_json));
    *out = new rg_report{result.summary.dump(2) + "\n", std::move(result.artifacts)};
  });
}

const char* rg_report_summary(const rg_report* report) {
  return report ? report->summary.c_str() : "";
}

size_t rg_report_artifact_count(const rg_report* report) {
  return report ? report->artifacts.size() : 0;
}

const char* rg_report_artifact_name(const rg_report* report, size_t index) {
  if (!report || index >= report->artifacts.size()) return nullptr;
  return report->artifacts[index].first.c_str();
}

const char* rg_report_artifact_data(const rg_report* report, size_t index) {
  if (!report || index >= report->artifacts.size()) return nullptr;
  return report->artifacts[index].second.c_str();
}

size_t rg_report_artifact_size(const rg_report* report, size_t index) {
  if (!report || index >= report->artifacts.size()) return 0;
  return report->artifacts[index].second.size();
}

void rg_report_free(rg_report* report) { delete report; }

}  // extern "C"
