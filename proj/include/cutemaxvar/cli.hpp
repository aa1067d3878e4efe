// Copyright 2026 The CuteMaxVar Authors. All Rights Reserved.
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
// =============================================================================

// Subcommand implementations behind the `cmv` tool. Each returns a process
// exit code; tools/cmv.cpp only parses flags.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cutemaxvar/config_json.hpp"
#include "cutemaxvar/datagen.hpp"
#include "cutemaxvar/matrix_io.hpp"

namespace cmv {

namespace fs = std::filesystem;

enum ExitCode : int {
  kExitOk = 0,
  kExitNotConverged = 1,
  kExitConfig = 2,
  kExitDegenerate = 3,
  kExitIo = 4,
};

inline int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigError:
    case ErrorKind::InvalidConfig: return kExitConfig;
    case ErrorKind::DegenerateUpdate: return kExitDegenerate;
    case ErrorKind::IOError:
    case ErrorKind::DecodeError: return kExitIo;
    default: return kExitNotConverged;
  }
}

// ---------------------------------------------------------------------------
// Dataset directory: manifest.json, view<i>.cmvm, optional test_view<i>.cmvm,
// labels.u32 / test_labels.u32 (little-endian u32 per row).

inline constexpr const char* kManifest = "manifest.json";

inline void write_labels(const fs::path& path, const std::vector<std::uint32_t>& labels) {
  std::vector<std::uint8_t> out;
  out.reserve(labels.size() * 4);
  for (auto y : labels) bytes::put_u32(out, y);
  bytes::write_file(path, out);
}

inline std::vector<std::uint32_t> read_labels(const fs::path& path) {
  const auto data = bytes::read_file(path);
  require(data.size() % 4 == 0, ErrorKind::IOError, "label file length is not a multiple of 4: " + path.string());
  bytes::Reader rd(data, ErrorKind::IOError);
  std::vector<std::uint32_t> out(data.size() / 4);
  for (auto& y : out) y = rd.u32();
  return out;
}

inline void write_dataset(const fs::path& dir, const Dataset& ds, const Json& spec) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorKind::IOError, "cannot create " + dir.string());
  Json m;
  m["spec"] = spec;
  m["views"] = Json::array();
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    const std::string name = "view" + std::to_string(i) + ".cmvm";
    write_matrix(dir / name, ds.views[i]);
    m["views"].push_back(name);
  }
  m["test_views"] = Json::array();
  for (std::size_t i = 0; i < ds.test_views.size(); ++i) {
    const std::string name = "test_view" + std::to_string(i) + ".cmvm";
    write_matrix(dir / name, ds.test_views[i]);
    m["test_views"].push_back(name);
  }
  if (!ds.labels.empty()) {
    write_labels(dir / "labels.u32", ds.labels);
    m["labels"] = "labels.u32";
  }
  if (!ds.test_labels.empty()) {
    write_labels(dir / "test_labels.u32", ds.test_labels);
    m["test_labels"] = "test_labels.u32";
  }
  const std::string text = m.dump(2) + "\n";
  bytes::write_file(dir / kManifest, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline Dataset read_dataset(const fs::path& dir) {
  const auto raw = bytes::read_file(dir / kManifest);
  Json m;
  try {
    m = Json::parse(raw.begin(), raw.end());
  } catch (const Json::exception&) {
    fail(ErrorKind::IOError, "malformed manifest: " + (dir / kManifest).string());
  }
  Dataset ds;
  try {
    for (const auto& v : m.at("views")) ds.views.push_back(read_matrix(dir / v.get<std::string>()));
    if (m.contains("test_views"))
      for (const auto& v : m["test_views"]) ds.test_views.push_back(read_matrix(dir / v.get<std::string>()));
    if (m.contains("labels")) ds.labels = read_labels(dir / m["labels"].get<std::string>());
    if (m.contains("test_labels")) ds.test_labels = read_labels(dir / m["test_labels"].get<std::string>());
  } catch (const Json::exception&) {
    fail(ErrorKind::IOError, "manifest is missing fields: " + (dir / kManifest).string());
  }
  require(!ds.views.empty(), ErrorKind::IOError, "dataset has no views: " + dir.string());
  return ds;
}

inline Json spec_json(const LinearGenSpec& s) {
  return {{"kind", "linear"}, {"J", s.J}, {"D", s.D}, {"I", s.I}, {"N", s.N}, {"nu", s.nu},
          {"sparse", s.sparse}, {"density", s.density}, {"center", s.center}, {"seed", s.seed}};
}

inline Json spec_json(const DeepGenSpec& s) {
  return {{"kind", "deep_toy"}, {"J", s.J}, {"I", s.I}, {"clusters", s.clusters},
          {"sigma", s.sigma}, {"test", s.test}, {"warp", s.warp}, {"seed", s.seed}};
}

// ---------------------------------------------------------------------------
// gen

struct GenArgs {
  bool deep = false;
  LinearGenSpec linear;
  DeepGenSpec toy;
  fs::path out;
};

inline std::optional<std::uint64_t> env_seed() {
  const char* s = std::getenv("CMV_SEED");
  if (s == nullptr || *s == '\0') return std::nullopt;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  require(end != nullptr && *end == '\0', ErrorKind::ConfigError, "CMV_SEED must be an integer");
  return v;
}

inline int cmd_gen(GenArgs args) {
  if (auto s = env_seed()) {
    args.linear.seed = *s;
    args.toy.seed = *s;
  }
  if (args.deep) {
    write_dataset(args.out, gen_deep_toy(args.toy), spec_json(args.toy));
  } else {
    write_dataset(args.out, gen_linear(args.linear), spec_json(args.linear));
  }
  std::cout << "wrote " << args.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run

struct RunArgs {
  fs::path dataset;
  fs::path config;  // optional JSON file
  Json overrides = Json::object();
  fs::path out = ".";
  std::string name = "run";
};

inline RunConfig resolve_config(const RunArgs& args) {
  RunConfig cfg;
  if (!args.config.empty()) {
    const auto raw = bytes::read_file(args.config);
    Json j;
    try {
      j = Json::parse(raw.begin(), raw.end());
    } catch (const Json::exception&) {
      fail(ErrorKind::ConfigError, "malformed config: " + args.config.string());
    }
    cfg = merge_config(cfg, j);
  }
  cfg = merge_config(cfg, args.overrides);
  if (auto s = env_seed()) cfg.seed = *s;
  return cfg;
}

// Average of the per-view embeddings f_i(X_i).
inline DenseMat mean_embedding(const std::vector<TransformParams>& params,
                               const std::vector<View>& views) {
  DenseMat acc = forward(params[0], views[0]);
  for (std::size_t i = 1; i < views.size(); ++i) acc += forward(params[i], views[i]);
  return acc / static_cast<double>(views.size());
}

inline Json evaluate(const Dataset& ds, const std::vector<TransformParams>& params) {
  Json e = Json::object();
  const auto& eval_views = ds.test_views.empty() ? ds.views : ds.test_views;
  if (eval_views.size() >= 2) {
    std::vector<DenseMat> emb;
    for (std::size_t i = 0; i < eval_views.size(); ++i) emb.push_back(forward(params[i], eval_views[i]));
    if (emb[0].rows() <= 10000) e["nn_freq"] = nn_freq(emb);
  }
  if (!ds.labels.empty() && !ds.test_labels.empty()) {
    const DenseMat train = mean_embedding(params, ds.views);
    const DenseMat test = mean_embedding(params, ds.test_views);
    e["centroid_accuracy"] = centroid_accuracy(train, ds.labels, test, ds.test_labels);
    e["probe_accuracy"] = linear_probe_accuracy(train, ds.labels, test, ds.test_labels);
  }
  return e;
}

inline void write_text(const fs::path& path, const std::string& text) {
  bytes::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

inline int cmd_run(const RunArgs& args) {
  const RunConfig cfg = resolve_config(args);
  const Dataset ds = read_dataset(args.dataset);
  const RunResult res = run(cfg, ds.views);

  std::error_code ec;
  fs::create_directories(args.out, ec);
  require(!ec, ErrorKind::IOError, "cannot create " + args.out.string());
  std::ostringstream csv;
  write_csv(csv, res.records);
  write_text(args.out / (args.name + ".csv"), csv.str());
  for (std::size_t i = 0; i < res.params.size(); ++i)
    bytes::write_file(args.out / (args.name + ".node" + std::to_string(i) + ".cmvp"),
                      encode_params(res.params[i]));
  write_matrix(args.out / (args.name + ".g.cmvm"), View{res.g});

  Json summary;
  summary["config"] = to_json(cfg);
  summary["rounds"] = res.rounds();
  summary["stop_reason"] = to_string(res.reason);
  if (!res.message.empty()) summary["message"] = res.message;
  summary["final_objective"] = res.records.back().objective;
  summary["v_star"] = res.v_star ? Json(*res.v_star) : Json(nullptr);
  summary["replica_violations"] = res.replica_violations;
  summary["eval"] = evaluate(ds, res.params);
  write_text(args.out / (args.name + ".summary.json"), summary.dump(2) + "\n");

  std::cout << args.name << ": " << to_string(res.reason) << " after " << res.rounds()
            << " rounds, objective " << res.records.back().objective << "\n";
  switch (res.reason) {
    case StopReason::Criterion: return kExitOk;
    case StopReason::Degenerate: return kExitDegenerate;
    default: return kExitNotConverged;
  }
}

// ---------------------------------------------------------------------------
// report

struct ReportArgs {
  fs::path baseline;
  std::vector<fs::path> runs;
  double factor = 0.0;     // threshold = factor * v_star from the baseline summary
  double threshold = 0.0;  // absolute objective threshold, used when factor == 0
  fs::path out;            // directory for report.csv and bpv.csv; empty: stdout only
};

struct ReportRow {
  std::string name;
  unsigned q = 0;
  std::optional<std::uint64_t> rounds;
  double final_objective = 0.0;
  Json eval;
};

inline std::optional<std::uint64_t> rounds_to(const std::vector<MetricsRecord>& recs, double thr) {
  for (const auto& r : recs)
    if (r.objective <= thr) return r.round;
  return std::nullopt;
}

inline Json read_summary(const fs::path& csv) {
  fs::path p = csv;
  p.replace_extension(".summary.json");
  if (!fs::exists(p)) return nullptr;
  const auto raw = bytes::read_file(p);
  try {
    return Json::parse(raw.begin(), raw.end());
  } catch (const Json::exception&) {
    fail(ErrorKind::IOError, "malformed summary: " + p.string());
  }
}

inline std::vector<MetricsRecord> read_metrics(const fs::path& p) {
  const auto raw = bytes::read_file(p);
  return parse_csv(std::string(raw.begin(), raw.end()));
}

// q per exchanged variable, recovered from BPV(1) - BPV(0).
inline unsigned infer_q(const std::vector<MetricsRecord>& recs) {
  require(recs.size() >= 2, ErrorKind::IOError, "metrics need at least two rounds to infer q");
  return static_cast<unsigned>(std::lround(recs[1].bpv - recs[0].bpv));
}

inline int cmd_report(const ReportArgs& args) {
  require(!args.baseline.empty(), ErrorKind::ConfigError, "report needs a baseline run");
  require(fs::exists(args.baseline), ErrorKind::ConfigError,
          "baseline metrics not found: " + args.baseline.string());
  const auto base = read_metrics(args.baseline);
  double thr = args.threshold;
  if (args.factor > 0.0) {
    const Json s = read_summary(args.baseline);
    require(!s.is_null() && s.contains("v_star") && s["v_star"].is_number(), ErrorKind::ConfigError,
            "factor thresholds need a baseline summary with v_star");
    thr = args.factor * s["v_star"].get<double>();
  }
  require(thr > 0.0, ErrorKind::ConfigError, "report needs --factor or --threshold");
  const auto r_a = rounds_to(base, thr);

  std::ostringstream table;
  std::ostringstream curves;
  table << "run,q,rounds,cr,final_objective,nn_freq,accuracy\n";
  curves << "run,round,bpv,objective\n";
  std::vector<fs::path> all{args.baseline};
  all.insert(all.end(), args.runs.begin(), args.runs.end());
  for (const auto& p : all) {
    const auto recs = read_metrics(p);
    const Json s = read_summary(p);
    const unsigned q = infer_q(recs);
    const auto r_c = rounds_to(recs, thr);
    std::string cr = "nan";
    if (r_a && r_c && *r_a > 0) cr = detail::fmt_real(cr_bpv(q, kFullPrecisionBits, *r_c, *r_a, 0).cr);
    auto field = [&](const char* key) -> std::string {
      if (s.is_null() || !s.contains("eval") || !s["eval"].contains(key)) return "";
      return detail::fmt_real(s["eval"][key].get<double>());
    };
    const std::string name = p.stem().string();
    table << name << ',' << q << ',' << (r_c ? std::to_string(*r_c) : "") << ',' << cr << ','
          << detail::fmt_real(recs.back().objective) << ',' << field("nn_freq") << ','
          << field("centroid_accuracy") << '\n';
    for (const auto& r : recs)
      curves << name << ',' << r.round << ',' << detail::fmt_real(r.bpv) << ','
             << detail::fmt_real(r.objective) << '\n';
  }
  std::cout << table.str();
  if (!args.out.empty()) {
    std::error_code ec;
    fs::create_directories(args.out, ec);
    require(!ec, ErrorKind::IOError, "cannot create " + args.out.string());
    write_text(args.out / "report.csv", table.str());
    write_text(args.out / "bpv.csv", curves.str());
  }
  return kExitOk;
}

// Runs a subcommand, mapping library errors to exit codes.
template <class F>
int guarded(F&& f) {
  try {
    return f();
  } catch (const Error& e) {
    std::cerr << "error (" << to_string(e.kind()) << "): " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNotConverged;
  }
}

}  // namespace cmv
