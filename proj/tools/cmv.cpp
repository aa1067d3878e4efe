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

#include <CLI11.hpp>

#include "cutemaxvar/cli.hpp"

namespace {

// Flags that map one-to-one onto RunConfig keys. Only flags given on the
// command line end up in the override object.
void add_run_flags(CLI::App* app, cmv::Json& o) {
  auto num = [&](const char* flag, const char* key, const char* help) {
    app->add_option_function<double>(flag, [&o, key](double v) { o[key] = v; }, help);
  };
  auto count = [&](const char* flag, const char* key, const char* help) {
    app->add_option_function<std::size_t>(flag, [&o, key](std::size_t v) { o[key] = v; }, help);
  };
  auto word = [&](const char* flag, const char* key, const char* help) {
    app->add_option_function<std::string>(flag, [&o, key](const std::string& v) { o[key] = v; }, help);
  };
  auto toggle = [&](const char* flag, const char* key, const char* help) {
    app->add_option_function<std::string>(flag, [&o, key](const std::string& v) {
      if (v != "on" && v != "off") throw CLI::ValidationError(key, "expected on|off");
      o[key] = v == "on";
    }, help);
  };
  count("--k", "k", "embedding dimension K");
  app->add_option_function<std::string>("--q", [&o](const std::string& v) {
    if (v == "identity") {
      o["q"] = "identity";
    } else {
      if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw CLI::ValidationError("--q", "expected an integer or 'identity'");
      o["q"] = std::stoul(v);
    }
  }, "bits per entry, or 'identity'");
  word("--quant-mode", "quant_mode", "unscaled|scaled");
  count("--T", "T", "inner steps per round");
  count("--batch", "batch", "minibatch size (0 = full view)");
  word("--optimizer", "optimizer", "sgd|adam");
  toggle("--exact", "exact", "closed-form linear solves (on|off)");
  word("--step-theta", "step_theta_kind", "node schedule kind");
  num("--alpha-theta", "step_theta_value", "node constant step");
  word("--step-g", "step_g_kind", "server schedule kind");
  num("--alpha-g", "step_g_value", "server constant step");
  word("--tau", "tau", "linear|quadratic");
  num("--delta", "delta", "compressor quality for theory schedules");
  num("--rm-a", "rm_a", "Robbins-Monro numerator");
  num("--rm-b", "rm_b", "Robbins-Monro offset");
  toggle("--zero-mean", "zero_mean", "on|off");
  toggle("--prox", "prox", "on|off");
  word("--init", "init", "random|mvlsa");
  count("--ktilde", "ktilde", "warm-start rank");
  count("--max-rounds", "max_rounds", "round budget");
  word("--stop", "stop", "rounds|objective_factor|rel_change");
  num("--stop-value", "stop_value", "stop threshold");
  app->add_option_function<std::uint64_t>("--seed", [&o](std::uint64_t v) { o["seed"] = v; }, "seed");
  word("--arch", "arch", "linear|mlp");
  app->add_option_function<std::vector<std::size_t>>(
      "--hidden", [&o](const std::vector<std::size_t>& v) { o["hidden"] = v; }, "hidden widths")
      ->delimiter(',');
  word("--activation", "activation", "relu|sigmoid");
  num("--lipschitz", "lipschitz", "Lipschitz constant override");
  word("--oracle", "oracle", "auto|on|off");
  count("--threads", "threads", "worker threads");
  toggle("--timing", "timing", "record wall time (on|off)");
  toggle("--check-replicas", "check_replicas", "on|off");
  toggle("--track-potential", "track_potential", "on|off");
}

// Folds the flat schedule flags into the nested schedule objects.
cmv::Json nest_schedules(cmv::Json o) {
  auto move = [&](const char* from, const char* sched, const char* key) {
    if (o.contains(from)) {
      o[sched][key] = o[from];
      o.erase(from);
    }
  };
  move("step_theta_kind", "step_theta", "kind");
  move("step_theta_value", "step_theta", "value");
  move("step_g_kind", "step_g", "kind");
  move("step_g_value", "step_g", "value");
  for (const char* shared : {"tau", "delta", "rm_a", "rm_b"}) {
    if (!o.contains(shared)) continue;
    const std::string key = std::string(shared) == "rm_a" ? "a" : std::string(shared) == "rm_b" ? "b" : shared;
    o["step_theta"][key] = o[shared];
    o["step_g"][key] = o[shared];
    o.erase(shared);
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantized distributed MAX-VAR GCCA"};
  app.require_subcommand(1);

  cmv::GenArgs gen;
  bool linear = false;
  std::size_t n_width = 25;
  double nu = 0.01;
  std::size_t J = 0;
  std::size_t I = 3;
  auto* g = app.add_subcommand("gen", "generate a synthetic dataset");
  auto* kind = g->add_option_group("kind");
  kind->add_flag("--linear", linear, "linear multiview data");
  kind->add_flag("--deep-toy", gen.deep, "nonlinear ring clusters");
  kind->require_option(1);
  g->add_option("--J", J, "entities");
  g->add_option("--N", n_width, "features per view (linear)");
  g->add_option("--D", gen.linear.D, "latent factors (linear)");
  g->add_option("--I", I, "views");
  g->add_option("--nu", nu, "noise level (linear)");
  g->add_flag("--sparse", gen.linear.sparse, "sparse views (linear)");
  g->add_option("--density", gen.linear.density, "entry density (sparse)");
  g->add_option("--clusters", gen.toy.clusters, "clusters (deep toy)");
  g->add_option("--sigma", gen.toy.sigma, "noise (deep toy)");
  gen.toy.test = 1000;
  g->add_option("--test", gen.toy.test, "held-out samples (deep toy)");
  g->add_option("--seed", gen.linear.seed, "seed");
  g->add_option("--out", gen.out, "output directory")->required();

  cmv::RunArgs run;
  auto* r = app.add_subcommand("run", "run the protocol on a dataset");
  r->add_option("--data", run.dataset, "dataset directory")->required();
  r->add_option("--config", run.config, "JSON run config");
  r->add_option("--out", run.out, "output directory");
  r->add_option("--name", run.name, "output file stem");
  add_run_flags(r, run.overrides);

  cmv::ReportArgs rep;
  auto* p = app.add_subcommand("report", "compression table from metrics CSVs");
  p->add_option("--baseline", rep.baseline, "identity-quantizer metrics CSV");
  p->add_option("runs", rep.runs, "quantized metrics CSVs");
  p->add_option("--factor", rep.factor, "threshold as a multiple of v*");
  p->add_option("--threshold", rep.threshold, "absolute objective threshold");
  p->add_option("--out", rep.out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cmv::kExitConfig;
  }

  if (g->parsed()) {
    if (J > 0) {
      gen.linear.J = J;
      gen.toy.J = J;
    }
    gen.linear.I = I;
    gen.toy.I = I;
    gen.linear.N = {n_width};
    gen.linear.nu = {nu};
    gen.toy.seed = gen.linear.seed;
    return cmv::guarded([&] { return cmv::cmd_gen(gen); });
  }
  if (r->parsed()) {
    run.overrides = nest_schedules(run.overrides);
    return cmv::guarded([&] { return cmv::cmd_run(run); });
  }
  return cmv::guarded([&] { return cmv::cmd_report(rep); });
}
