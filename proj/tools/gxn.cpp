#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gxn/experiments.hpp"

namespace {

using gxn::CommonOptions;

void add_common(CLI::App& cmd, CommonOptions& o, std::string& task, bool with_task = true) {
  if (with_task) cmd.add_option("--task", task, "graph | vertex")->check(CLI::IsMember({"graph", "vertex"}));
  cmd.add_option("--data", o.data, "synth:two-class[...], synth:communities[...], TU-like directory or graph file");
  cmd.add_option("--mask", o.mask, "vertex split/label sidecar (default <data>.mask)");
  cmd.add_option("--config", o.config, "run config JSON with optional \"model\" and \"train\" sections");
  cmd.add_option("--seed", o.seed, "run seed");
  cmd.add_option("--out", o.out, "output directory");

  auto& m = o.model_overrides;
  auto& t = o.train_overrides;
  cmd.add_option_function<int>("--scales", [&m](const int& v) { m["scales"] = v; }, "coarsening steps S");
  cmd.add_option_function<std::vector<double>>("--keep_ratios", [&m](const std::vector<double>& v) { m["keep_ratios"] = v; },
                                               "keep ratio per coarsening step")
      ->delimiter(',');
  cmd.add_option_function<int>("--hops", [&m](const int& v) { m["hops"] = v; }, "neighborhood hop radius R");
  cmd.add_option_function<int>("--hidden", [&m](const int& v) { m["hidden"] = v; }, "hidden width");
  cmd.add_option_function<int>("--layers_per_scale", [&m](const int& v) { m["layers_per_scale"] = v; });
  cmd.add_option_function<std::string>(
      "--crossing_positions",
      [&m](const std::string& v) {
        if (v == "all") {
          m["crossing_positions"] = nullptr;
          return;
        }
        std::vector<int> positions;
        if (v != "none")
          for (const auto& part : gxn::split_tokens(v, ','))
            positions.push_back(static_cast<int>(gxn::parse_index(part, "--crossing_positions")));
        m["crossing_positions"] = positions;
      },
      "all | none | comma-separated layer indices");
  cmd.add_option_function<std::string>("--structure_pool", [&m](const std::string& v) { m["structure_pool"] = v; },
                                       "edge-remove | kron | cluster");
  cmd.add_option_function<std::string>("--readout_mode", [&m](const std::string& v) { m["readout_mode"] = v; },
                                       "sum-align | sortpool");
  cmd.add_option_function<int>("--sortpool_k", [&m](const int& v) { m["sortpool_k"] = v; });
  cmd.add_option_function<std::string>("--selector", [&m](const std::string& v) { m["selector"] = v; }, "greedy | topk");
  cmd.add_option_function<std::string>("--affinity", [&m](const std::string& v) { m["affinity"] = v; },
                                       "bilinear | concat");
  cmd.add_option_function<bool>("--cross_boundary_scales", [&m](const bool& v) { m["cross_boundary_scales"] = v; });
  cmd.add_option_function<int>("--epochs", [&t](const int& v) { t["epochs"] = v; });
  cmd.add_option_function<double>("--learning_rate", [&t](const double& v) { t["learning_rate"] = v; });
  cmd.add_option_function<int>("--batch_size", [&t](const int& v) { t["batch_size"] = v; });
  cmd.add_option_function<int>("--folds", [&t](const int& v) { t["folds"] = v; });
  cmd.add_option_function<int>("--threads", [&t](const int& v) { t["threads"] = v; });
}

void print_metrics(const gxn::RunManifest& m) {
  std::cout << m.to_json()["metrics"].dump() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph cross network experiments"};
  app.require_subcommand(1);
  CommonOptions o;
  std::string task = "graph";

  auto* train = app.add_subcommand("train", "train with k-fold evaluation (graph) or on the split masks (vertex)");
  add_common(*train, o, task);

  gxn::PoolOptions pool_opts;
  auto* pool = app.add_subcommand("pool", "select and pool one graph; writes id, a and the pooled adjacency");
  add_common(*pool, o, task, false);
  pool->add_option("--k", pool_opts.k, "number of kept vertices");
  pool->add_option("--ratio", pool_opts.ratio, "keep ratio when --k is not given");
  pool->add_option("--checkpoint", pool_opts.checkpoint, "estimator checkpoint");
  pool->add_option("--train_steps", pool_opts.train_steps, "fit the estimator in-run for this many steps");

  gxn::CompareOptions compare_opts;
  auto* compare = app.add_subcommand("compare-selection", "criterion value of greedy vs top-K selection per ratio");
  add_common(*compare, o, task, false);
  compare->add_option("--ratios", compare_opts.ratios, "keep ratios")->delimiter(',');
  compare->add_option("--seeds", compare_opts.seeds, "number of estimator seeds");
  compare->add_option("--train_steps", compare_opts.train_steps, "estimator training steps");

  gxn::ActiveLabelOptions active_opts;
  std::vector<std::string> methods;
  auto* active = app.add_subcommand("active-label", "label-budget study: VIPool-selected vs random labels");
  add_common(*active, o, task, false);
  active->add_option("--budgets", active_opts.budgets, "label budgets")->delimiter(',');
  active->add_option("--methods", methods, "vipool,random")->delimiter(',');
  active->add_option("--seeds", active_opts.seeds, "number of seeds");
  active->add_option("--estimator_steps", active_opts.estimator_steps, "estimator training steps");

  std::string axis;
  std::vector<std::string> values;
  auto* ablate = app.add_subcommand("ablate", "sweep one config axis");
  add_common(*ablate, o, task);
  ablate->add_option("--axis", axis, "pooling-variant | crossing-positions | scales | hops")->required();
  ablate->add_option("--values", values, "axis values (default: the full sweep)")->delimiter(',');

  auto* check = app.add_subcommand("check", "run the property suites");
  check->add_option("--seed", o.seed, "seed");
  check->add_option("--out", o.out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    o.task = gxn::parse_task(task);
    const auto need_data = [&] {
      if (o.data.empty()) throw std::invalid_argument("--data is required");
    };
    if (train->parsed()) {
      need_data();
      print_metrics(gxn::cmd_train(o));
    } else if (pool->parsed()) {
      need_data();
      print_metrics(gxn::cmd_pool(o, pool_opts));
    } else if (compare->parsed()) {
      need_data();
      print_metrics(gxn::cmd_compare_selection(o, compare_opts));
    } else if (active->parsed()) {
      need_data();
      if (!methods.empty()) {
        active_opts.methods.clear();
        for (const auto& m : methods) active_opts.methods.push_back(gxn::parse_label_method(m));
      }
      // Greedy unless --selector says otherwise.
      if (o.model_overrides.contains("selector"))
        active_opts.selector = gxn::parse_selector(o.model_overrides["selector"].get<std::string>());
      print_metrics(gxn::cmd_active_label(o, active_opts));
    } else if (ablate->parsed()) {
      need_data();
      print_metrics(gxn::cmd_ablate(o, gxn::parse_axis(axis), axis, values));
    } else if (check->parsed()) {
      bool passed = false;
      gxn::cmd_check(o, passed);
      return passed ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
