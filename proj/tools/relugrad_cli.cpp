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
// relugrad command-line front end. Talks to the library only through the C
// API: each subcommand turns its flags into a JSON config, runs it, and
// writes the returned artifacts, a summary and a manifest to --out-dir.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relugrad/relugrad.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class Kind { Size, U64, Double, Text, SizeList, DoubleList, Flag };

struct FlagSpec {
  const char* flag;
  const char* key;
  Kind kind;
  const char* help;
};

// Flags are offered to a subcommand when its defaults contain the key.
const std::vector<FlagSpec> kFlags = {
    {"--input-dim", "input_dim", Kind::Size, "input dimension p"},
    {"--widths", "widths", Kind::SizeList, "hidden widths, comma separated"},
    {"--outputs", "outputs", Kind::Size, "number of outputs K"},
    {"--dist", "dist", Kind::Text, "parameter distribution: truncated-gaussian | uniform"},
    {"--tau", "tau", Kind::Double, "support bound of the parameter distribution"},
    {"--variance", "variance", Kind::Double, "pre-truncation variance (gaussian)"},
    {"--seed", "seed", Kind::U64, "master seed"},
    {"--weights", "weights", Kind::Text, "weight file to use instead of random draws"},
    {"--replicates", "replicates", Kind::Size, "number of replicates B"},
    {"--paths", "paths", Kind::Size, "paths per replicate M"},
    {"--endpoints", "endpoints", Kind::Text, "endpoint sampler: uniform | truncated-gaussian"},
    {"--workers", "workers", Kind::Size, "worker threads (0: RELUGRAD_WORKERS or all cores)"},
    {"--metric", "metric", Kind::Text, "jump metric: vector-norm | abs-scalar"},
    {"--t-merge", "t_merge", Kind::Double, "roots closer than this form one event"},
    {"--slope-floor", "slope_floor", Kind::Double, "slopes below this never cross"},
    {"--step-nudge", "step_nudge", Kind::Double, "offset of the post-event pattern check"},
    {"--max-events", "max_events", Kind::Size, "event budget per trace"},
    {"--output", "output", Kind::Size, "analysed output index (0-based)"},
    {"--minus", "minus", Kind::Size, "subtract this output (0-based)"},
    {"--x1", "x1", Kind::DoubleList, "path start, comma separated"},
    {"--x2", "x2", Kind::DoubleList, "path end, comma separated"},
    {"--last-widths", "last_widths", Kind::SizeList, "sweep the last hidden width over these values"},
    {"--exponents", "exponents", Kind::DoubleList, "width exponents alpha_l"},
    {"--bases", "bases", Kind::DoubleList, "width bases n"},
    {"--mode", "mode", Kind::Text, "region counting mode: line | grid2d"},
    {"--resolution", "resolution", Kind::Size, "grid points per side"},
    {"--half-width", "h", Kind::Double, "half-width of the window around each zero crossing"},
    {"--unlabeled", "unlabeled", Kind::Size, "number of random unlabeled points"},
    {"--eta", "eta", Kind::Double, "perturbation bound per coordinate"},
    {"--kind", "kind", Kind::Text, "surrogate: piecewise-constant | nodewise-linear"},
    {"--task", "task", Kind::Text, "regression | classification"},
    {"--train-points", "train_points", Kind::Size, "training sample size"},
    {"--eval-points", "eval_points", Kind::Size, "evaluation sample size"},
    {"--analytic", "analytic", Kind::Flag, "take node gradients from the network"},
    {"--step", "step", Kind::Double, "initial gradient-descent step"},
    {"--max-iterations", "max_iterations", Kind::Size, "gradient-descent iteration cap"},
    {"--gradient-tolerance", "gradient_tolerance", Kind::Double, "gradient-norm stopping rule"},
};

const std::map<std::string, std::string> kDescriptions = {
    {"gen", "draw a random network and write its weight file"},
    {"trace", "trace one path and export its kink events"},
    {"table1", "per-layer event shares and normalized jump means"},
    {"theorem1", "ratio of off-narrowest to narrowest-layer flip norms"},
    {"prop1", "fraction of events where several nodes flip at once"},
    {"regions", "count linear regions along lines or on a 2-D grid"},
    {"boundary", "event shares near zero crossings of the traced output"},
    {"sslreg", "value of the top-layer perturbation regularizer"},
    {"approx", "fit an indicator surrogate and compare it with the network"},
};

struct Failure {
  int exit_code;
  std::string kind;
  std::string message;
};

int exit_code_for(rg_status s) {
  switch (s) {
    case RG_OK: return 0;
    case RG_ERR_INVALID_ARGUMENT:
    case RG_ERR_SHAPE_MISMATCH:
    case RG_ERR_CAP_EXCEEDED: return 2;
    case RG_ERR_IO:
    case RG_ERR_MALFORMED_FILE: return 3;
    case RG_ERR_NUMERIC: return 4;
    case RG_ERR_INTERNAL: return 1;
  }
  return 1;
}

void check(rg_status s) {
  if (s != RG_OK) throw Failure{exit_code_for(s), rg_status_name(s), rg_last_error()};
}

int report_failure(const Failure& f) {
  const json err = {{"error", {{"code", f.exit_code}, {"kind", f.kind}, {"message", f.message}}}};
  std::cerr << err.dump() << "\n";
  return f.exit_code;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{3, "io", "cannot open '" + path.string() + "'"};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  out.flush();
  if (!out) throw Failure{3, "io", "cannot write '" + path.string() + "'"};
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Failure{2, "invalid_argument", what + " is not valid JSON: " + e.what()};
  }
}

template <typename T>
std::vector<T> split_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      if constexpr (std::is_same_v<T, double>) {
        out.push_back(std::stod(item, &used));
      } else {
        if (item.find('-') != std::string::npos) throw std::invalid_argument("negative");
        out.push_back(static_cast<T>(std::stoull(item, &used)));
      }
      if (used != item.size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Failure{2, "invalid_argument", flag + ": cannot parse '" + item + "'"};
    }
  }
  return out;
}

struct Subcommand {
  std::string name;
  CLI::App* app = nullptr;
  std::map<std::string, std::string> values;  // key -> raw flag text
  std::map<std::string, bool> flags;
  std::string config_file;
};

json build_config(const Subcommand& sc) {
  json cfg = json::object();
  if (!sc.config_file.empty()) {
    cfg = parse_json(read_file(sc.config_file), sc.config_file);
    if (!cfg.is_object()) throw Failure{2, "invalid_argument", "--config must hold a JSON object"};
  }
  for (const auto& spec : kFlags) {
    const std::string flag = spec.flag;
    if (spec.kind == Kind::Flag) {
      auto it = sc.flags.find(spec.key);
      if (it != sc.flags.end() && it->second) cfg[spec.key] = true;
      continue;
    }
    auto it = sc.values.find(spec.key);
    if (it == sc.values.end() || sc.app->count(flag) == 0) continue;
    const std::string& v = it->second;
    switch (spec.kind) {
      case Kind::Size:
      case Kind::U64: {
        const auto parsed = split_list<std::uint64_t>(v, flag);
        if (parsed.size() != 1) throw Failure{2, "invalid_argument", flag + " takes one integer"};
        cfg[spec.key] = parsed.front();
        break;
      }
      case Kind::Double: {
        const auto parsed = split_list<double>(v, flag);
        if (parsed.size() != 1) throw Failure{2, "invalid_argument", flag + " takes one number"};
        cfg[spec.key] = parsed.front();
        break;
      }
      case Kind::Text: cfg[spec.key] = v; break;
      case Kind::SizeList: cfg[spec.key] = split_list<std::uint64_t>(v, flag); break;
      case Kind::DoubleList: cfg[spec.key] = split_list<double>(v, flag); break;
      case Kind::Flag: break;
    }
  }
  return cfg;
}

int execute(const std::string& command, const json& config, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw Failure{3, "io", "cannot create '" + out_dir.string() + "': " + ec.message()};

  const std::string started = utc_now();
  rg_report* report = nullptr;
  check(rg_run_command(command.c_str(), config.dump().c_str(), &report));
  std::unique_ptr<rg_report, decltype(&rg_report_free)> guard(report, rg_report_free);
  const std::string finished = utc_now();

  json outputs = json::array();
  for (std::size_t i = 0; i < rg_report_artifact_count(report); ++i) {
    const fs::path path = out_dir / rg_report_artifact_name(report, i);
    write_file(path, std::string(rg_report_artifact_data(report, i), rg_report_artifact_size(report, i)));
    outputs.push_back(path.string());
  }
  const std::string summary_text = rg_report_summary(report);
  const fs::path summary_path = out_dir / (command + ".summary.json");
  write_file(summary_path, summary_text);
  outputs.push_back(summary_path.string());

  const json summary = parse_json(summary_text, "summary");
  const fs::path manifest_path = out_dir / (command + ".manifest.json");
  outputs.push_back(manifest_path.string());
  const json manifest = {{"command", command},
                         {"config", summary.at("config")},
                         {"seed", summary.at("seed")},
                         {"version", rg_version()},
                         {"started", started},
                         {"finished", finished},
                         {"outputs", outputs}};
  write_file(manifest_path, manifest.dump(2) + "\n");
  std::cout << summary.at("results").dump(2) << "\n";
  return 0;
}

std::set<std::string> keys_of(const std::string& command) {
  char* resolved = nullptr;
  check(rg_resolve_config(command.c_str(), "{}", &resolved));
  const json j = json::parse(resolved);
  rg_string_free(resolved);
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  return keys;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    CLI::App app{"relugrad: exact path tracing and gradient-difference statistics for ReLU networks"};
    app.set_version_flag("--version", std::string(rg_version()));
    app.require_subcommand(1);

    std::vector<std::unique_ptr<Subcommand>> subs;
    std::string out_dir = ".";
    for (const auto& [name, description] : kDescriptions) {
      auto sc = std::make_unique<Subcommand>();
      sc->name = name;
      sc->app = app.add_subcommand(name, description);
      sc->app->add_option("--out-dir", out_dir, "directory for outputs")->capture_default_str();
      sc->app->add_option("--config", sc->config_file, "JSON config; flags override its keys");
      const auto keys = keys_of(name);
      for (const auto& spec : kFlags) {
        if (!keys.count(spec.key)) continue;
        if (spec.kind == Kind::Flag) {
          sc->app->add_flag(spec.flag, sc->flags[spec.key], spec.help);
        } else {
          sc->app->add_option(spec.flag, sc->values[spec.key], spec.help);
        }
      }
      subs.push_back(std::move(sc));
    }

    std::string manifest_path;
    auto* replay = app.add_subcommand("replay", "rerun a command from its manifest");
    replay->add_option("manifest", manifest_path, "manifest written by an earlier run")->required();
    replay->add_option("--out-dir", out_dir, "directory for outputs")->capture_default_str();

    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e);
    } catch (const CLI::ParseError& e) {
      return report_failure(Failure{2, "invalid_argument", e.what()});
    }

    if (replay->parsed()) {
      const json manifest = parse_json(read_file(manifest_path), manifest_path);
      if (!manifest.contains("command") || !manifest.contains("config")) {
        throw Failure{3, "malformed_file", "manifest lacks 'command' or 'config'"};
      }
      return execute(manifest.at("command").get<std::string>(), manifest.at("config"), out_dir);
    }
    for (const auto& sc : subs) {
      if (sc->app->parsed()) return execute(sc->name, build_config(*sc), out_dir);
    }
    return report_failure(Failure{2, "invalid_argument", "no command given"});
  } catch (const Failure& f) {
    return report_failure(f);
  } catch (const std::exception& e) {
    return report_failure(Failure{1, "internal", e.what()});
  }
}
