#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "gxn/checkpoint.hpp"
#include "gxn/config.hpp"
#include "gxn/experiments.hpp"

namespace gxn {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("gxn-exp-" + tag + "-" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

struct CliRun {
  int status = -1;
  std::string output;
};

CliRun run_cli(const std::string& args) {
  const std::string command = std::string(GXN_CLI_PATH) + " " + args + " 2>&1";
  CliRun r;
  FILE* pipe = ::popen(command.c_str(), "r");
  if (!pipe) return r;
  char buf[512];
  while (std::fgets(buf, sizeof buf, pipe)) r.output += buf;
  const int raw = ::pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

TEST(Config, UnknownKeysRejected) {
  EXPECT_THROW(gxn_config_from_json(nlohmann::json{{"hiden", 8}}), std::invalid_argument);
  EXPECT_THROW(train_config_from_json(nlohmann::json{{"epoch", 8}}), std::invalid_argument);
  EXPECT_THROW(run_config_from_json(nlohmann::json{{"modle", nlohmann::json::object()}}), std::invalid_argument);
}

TEST(Config, TaskDefaultsAndScaleRatios) {
  EXPECT_EQ(gxn_config_from_json(nlohmann::json::object(), Task::vertex).hidden, kVertexTaskHidden);
  EXPECT_EQ(gxn_config_from_json(nlohmann::json{{"hidden", 8}}, Task::vertex).hidden, 8);
  const GxnConfig three = gxn_config_from_json(nlohmann::json{{"scales", 3}});
  EXPECT_EQ(three.keep_ratios, (std::vector<double>{0.8, 0.6, 0.5}));
  EXPECT_THROW(gxn_config_from_json(nlohmann::json{{"scales", 2}, {"keep_ratios", {0.5}}}), std::invalid_argument);
}

TEST(Config, RoundTripAndHashStability) {
  GxnConfig c;
  c.hidden = 12;
  c.crossing_positions = std::vector<int>{0, 1};
  c.structure_pool = StructurePool::kron;
  const GxnConfig back = gxn_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
  GxnConfig other = c;
  other.hops = 2;
  EXPECT_NE(config_hash(other), config_hash(c));
}

TEST(Checkpoint, RoundTripIsBitExact) {
  GxnConfig cfg;
  cfg.hidden = 5;
  GxnModel a(cfg, 3, 2, Task::graph, 1);
  const std::string hash = config_hash(cfg);
  const fs::path dir = scratch("ckpt");
  save_checkpoint(a.parameters(), (dir / "c.json").string(), hash);
  GxnModel b(cfg, 3, 2, Task::graph, 2);
  load_checkpoint((dir / "c.json").string(), b.parameters(), hash);
  for (const Parameter* p : a.parameters().all()) EXPECT_EQ(b.parameters().find(p->name())->value, p->value) << p->name();
  EXPECT_THROW(load_checkpoint((dir / "c.json").string(), b.parameters(), "0000000000000000"), std::runtime_error);
  GxnConfig wider = cfg;
  wider.hidden = 6;
  GxnModel c(wider, 3, 2, Task::graph, 1);
  EXPECT_THROW(load_checkpoint((dir / "c.json").string(), c.parameters()), std::runtime_error);
  fs::remove_all(dir);
}

TEST(Checkpoint, SpecialValuesSurvive) {
  ParameterStore store;
  Matrix m(1, 3);
  m << -0.0, 1e-300, std::numeric_limits<double>::infinity();
  store.add("w", m);
  ParameterStore back;
  back.add("w", Matrix::Zero(1, 3));
  load_checkpoint_json(checkpoint_json(store, "h"), back);
  EXPECT_TRUE(std::signbit(back.find("w")->value(0, 0)));
  EXPECT_EQ(back.find("w")->value(0, 1), 1e-300);
  EXPECT_TRUE(std::isinf(back.find("w")->value(0, 2)));
}

TEST(Csv, QuotesFieldsThatNeedIt) {
  CsvTable t({"a", "b"});
  t.add({"plain", "x,y"});
  t.add({"say \"hi\"", ""});
  EXPECT_EQ(t.str(), "a,b\nplain,\"x,y\"\n\"say \"\"hi\"\"\",\n");
  EXPECT_THROW(t.add({"one"}), std::logic_error);
}

TEST(Ablation, AxisValues) {
  const GxnConfig base;
  EXPECT_EQ(apply_axis(base, AblationAxis::scales, "1").scales, 0);
  EXPECT_EQ(apply_axis(base, AblationAxis::scales, "3").keep_ratios, (std::vector<double>{0.8, 0.6}));
  EXPECT_EQ(apply_axis(base, AblationAxis::crossing_positions, "none").crossing_positions->size(), 0u);
  EXPECT_FALSE(apply_axis(base, AblationAxis::crossing_positions, "all").crossing_positions.has_value());
  EXPECT_EQ(*apply_axis(base, AblationAxis::crossing_positions, "0+1").crossing_positions, (std::vector<int>{0, 1}));
  EXPECT_EQ(apply_axis(base, AblationAxis::pooling_variant, "kron").structure_pool, StructurePool::kron);
  EXPECT_THROW(parse_axis("depth"), std::invalid_argument);
}

TEST(DataSources, SynthSpecs) {
  EXPECT_EQ(load_graph_dataset("synth:two-class:10:6:0.5:0.2", 0).size(), 10u);
  EXPECT_THROW(load_graph_dataset("synth:two-class:10", 0), std::invalid_argument);
  EXPECT_THROW(load_graph_dataset("synth:rings", 0), std::invalid_argument);
  const VertexDataset v = load_vertex_data("synth:communities:40:4", "", 0);
  EXPECT_EQ(v.graph.size(), 40);
  // Two training and two validation vertices per community.
  const auto train = v.mask(Split::train);
  EXPECT_EQ(std::count(train.begin(), train.end(), 1), 8);
}

TEST(ActiveLabel, ChoicesAreSortedDistinctAndSeeded) {
  const VertexDataset ds = synth_community_dataset(40, 4, 0);
  GxnConfig cfg;
  cfg.hidden = 8;
  ActiveLabelOptions a;
  a.estimator_steps = 20;
  for (LabelMethod method : {LabelMethod::vipool, LabelMethod::random}) {
    const auto chosen = choose_labeled(ds, cfg, 6, method, a, 3);
    ASSERT_EQ(chosen.size(), 6u);
    EXPECT_TRUE(std::is_sorted(chosen.begin(), chosen.end()));
    EXPECT_EQ(std::adjacent_find(chosen.begin(), chosen.end()), chosen.end());
    EXPECT_EQ(chosen, choose_labeled(ds, cfg, 6, method, a, 3));
  }
  EXPECT_THROW(choose_labeled(ds, cfg, 0, LabelMethod::random, a, 0), std::out_of_range);
}

TEST(CompareSelection, FullRatioKeepsEverything) {
  const Graph g = load_single_graph("synth:communities:30:3", 0);
  GxnConfig cfg;
  cfg.hidden = 8;
  const std::vector<double> ratios{1.0, 0.5};
  const auto rows = compare_selection(g, cfg, ratios, 20, 0.01, 0);
  EXPECT_EQ(rows[0].k, 30);
  EXPECT_EQ(rows[0].greedy, rows[0].topk);
  EXPECT_EQ(rows[1].k, 15);
  const std::vector<double> bad{0.0};
  EXPECT_THROW(compare_selection(g, cfg, bad, 1, 0.01, 0), std::invalid_argument);
}

TEST(Cli, PoolOnPathKeepsEndpointsWithKronWeight) {
  const fs::path dir = scratch("cli-pool");
  std::ofstream(dir / "path.txt") << "3 1\n0\n1\n0\n0 1\n1 2\n";
  const CliRun r = run_cli("pool --data " + (dir / "path.txt").string() + " --k 2 --structure_pool kron --selector topk --out " +
                           (dir / "out").string());
  ASSERT_EQ(r.status, 0) << r.output;
  const std::string csv = slurp(dir / "out" / "pool.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "id,a,adj_0,adj_1");
  ASSERT_TRUE(fs::exists(dir / "out" / "manifest.json"));
  const auto manifest = nlohmann::json::parse(slurp(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "pool");
  EXPECT_EQ(manifest["details"]["k"], 2);
  fs::remove_all(dir);
}

TEST(Cli, PoolRejectsOversizedSelection) {
  const fs::path dir = scratch("cli-big");
  std::ofstream(dir / "path.txt") << "3 0\n0 1\n1 2\n";
  const CliRun r = run_cli("pool --data " + (dir / "path.txt").string() + " --k 5 --out " + (dir / "out").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("error:"), std::string::npos) << r.output;
  fs::remove_all(dir);
}

TEST(Cli, TrainIsDeterministicForAFixedSeed) {
  const fs::path dir = scratch("cli-train");
  const std::string args =
      "train --data synth:two-class:20:8:0.6:0.2 --epochs 2 --folds 2 --hidden 4 --seed 5 --out ";
  const CliRun a = run_cli(args + (dir / "a").string());
  const CliRun b = run_cli(args + (dir / "b").string());
  ASSERT_EQ(a.status, 0) << a.output;
  ASSERT_EQ(b.status, 0) << b.output;
  EXPECT_EQ(slurp(dir / "a" / "folds.csv"), slurp(dir / "b" / "folds.csv"));
  EXPECT_EQ(slurp(dir / "a" / "checkpoint-fold0.json"), slurp(dir / "b" / "checkpoint-fold0.json"));
  fs::remove_all(dir);
}

TEST(Cli, ConfigErrorsExitNonZero) {
  const fs::path dir = scratch("cli-config");
  std::ofstream(dir / "bad.json") << R"({"model": {"hiden": 3}})";
  const CliRun r = run_cli("train --data synth:two-class:10:6:0.5:0.2 --config " + (dir / "bad.json").string() +
                           " --out " + (dir / "out").string());
  EXPECT_EQ(r.status, 1);
  EXPECT_NE(r.output.find("hiden"), std::string::npos) << r.output;
  const CliRun budget = run_cli("active-label --data synth:communities:20:2 --budgets 0 --out " + (dir / "o2").string());
  EXPECT_EQ(budget.status, 1);
  fs::remove_all(dir);
}

TEST(Cli, CheckPasses) {
  const fs::path dir = scratch("cli-check");
  const CliRun r = run_cli("check --out " + dir.string());
  EXPECT_EQ(r.status, 0) << r.output;
  EXPECT_TRUE(fs::exists(dir / "check.csv"));
  fs::remove_all(dir);
}

}  // namespace
}  // namespace gxn
