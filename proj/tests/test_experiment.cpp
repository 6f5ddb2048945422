#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "tvq/experiment.hpp"

using namespace tvq;

namespace {

ExperimentConfig drain_config(const std::string& dir) {
  ExperimentConfig c;
  c.spec.rate = RateFunction::constant(0.0, 1.0);
  c.spec.joint = JointLaw::infinite_patience(Marginal::exponential(1.0));
  c.spec.init = InitKind::deterministic;
  c.spec.init_x = 3.0;
  c.g = CostFunction::power(1.0);
  c.mode = "busy_period";
  c.reps = 1;
  c.seed = 1;
  c.out_dir = dir;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("config round-trips through json") {
  ExperimentConfig c;
  c.spec.rate = RateFunction::sinusoid(0.4, 0.2, 1.0, 0.6, 0.1);
  c.spec.joint = JointLaw::gaussian_copula(Marginal::pareto(1.5, 1.0),
                                           Marginal::uniform(0.0, 2.0), 0.3);
  c.spec.discipline = Discipline::lcfs_pr;
  c.spec.room = 5;
  c.spec.init = InitKind::random_service;
  c.g = CostFunction::piecewise_linear({0.0, 1.0}, {1.0, 2.0});
  c.mode = "cycle";
  c.reps = 123;
  c.seed = 99;
  c.threads = 4;
  c.alpha = 0.05;
  c.tol = 1e-4;
  c.ladder = {0, 2, std::nullopt};
  c.quantiles = {0.9};
  c.out_dir = "somewhere";
  c.trace = true;

  json j = to_json(c);
  ExperimentConfig back = config_from_json(j);
  CHECK(to_json(back).dump() == j.dump());
  CHECK(config_hash(back) == config_hash(c));

  back.seed = 100;
  CHECK(config_hash(back) != config_hash(c));
}

TEST_CASE("all marginal and joint kinds survive serialization") {
  for (auto m : {Marginal::exponential(2.0), Marginal::deterministic(1.5),
                 Marginal::pareto(1.5, 1.0), Marginal::uniform(0.0, 1.0), Marginal::infinite(),
                 Marginal::exponential(1.0).with_atom_at_infinity(0.25)}) {
    json j = to_json(m);
    CHECK(to_json(marginal_from_json(j)).dump() == j.dump());
  }
  for (auto g : {CostFunction::constant(2.0), CostFunction::power(1.5),
                 CostFunction::exp_decay(0.5), CostFunction::indicator_above(1.0),
                 CostFunction::piecewise_linear({0.0, 1.0}, {0.0, 2.0})}) {
    json j = to_json(g);
    CHECK(to_json(cost_from_json(j)).dump() == j.dump());
  }
}

TEST_CASE("run_replications is schedule independent") {
  auto work = [](std::uint64_t r) { return static_cast<double>(r) * 1.5; };
  auto a = run_replications<double>(1000, 1, work);
  auto b = run_replications<double>(1000, 4, work);
  CHECK(a == b);
}

TEST_CASE("simulate subcommand writes the drain row") {
  std::filesystem::path dir = std::filesystem::temp_directory_path() / "tvq_test_sim";
  std::filesystem::remove_all(dir);
  RunContext ctx(drain_config(dir.string()), false);
  REQUIRE(cmd_simulate(ctx) == 0);
  std::string csv = slurp(dir / "samples.csv");
  CHECK(csv == "rep,duration,A,A_star,eta_star,balk_patience,balk_room\n0,3,4.5,0,0,0,0\n");
  CHECK(std::filesystem::exists(dir / "summary.json"));
  CHECK(std::filesystem::exists(dir / "manifest.json"));

  json manifest = json::parse(slurp(dir / "manifest.json"));
  CHECK(manifest["caps_exceeded"] == false);
  // every output is indexed
  for (const auto& name : manifest["outputs"]) {
    CHECK(std::filesystem::exists(dir / name.get<std::string>()));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("samples.csv is byte-identical across thread counts") {
  ExperimentConfig c;
  c.spec.rate = RateFunction::constant(0.5, 0.5);
  c.spec.joint = JointLaw::product(Marginal::exponential(1.0), Marginal::exponential(1.0));
  c.spec.init = InitKind::deterministic;
  c.spec.init_x = 1.0;
  c.mode = "busy_period";
  c.reps = 500;
  c.seed = 77;

  std::string first;
  for (unsigned threads : {1u, 4u}) {
    std::filesystem::path dir =
        std::filesystem::temp_directory_path() / ("tvq_test_threads_" + std::to_string(threads));
    std::filesystem::remove_all(dir);
    c.threads = threads;
    c.out_dir = dir.string();
    RunContext ctx(c, false);
    REQUIRE(cmd_simulate(ctx) == 0);
    std::string csv = slurp(dir / "samples.csv");
    if (first.empty()) first = csv;
    else CHECK(csv == first);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("invalid configs exit with code 2") {
  ExperimentConfig c = drain_config((std::filesystem::temp_directory_path() / "tvq_bad").string());
  c.spec.rate = RateFunction::sinusoid(0.5, 0.6, 1.0, 1.0);  // exceeds lambda_h
  RunContext ctx(c, false);
  CHECK(cmd_simulate(ctx) == 2);
  std::filesystem::remove_all(c.out_dir);
}

TEST_CASE("caps exceeded exits with code 4") {
  ExperimentConfig c;
  c.spec.rate = RateFunction::constant(0.9, 0.9);
  c.spec.joint = JointLaw::infinite_patience(Marginal::exponential(1.0));
  c.spec.init = InitKind::deterministic;
  c.spec.init_x = 1.0;
  c.mode = "busy_period";
  c.reps = 20;
  c.seed = 3;
  c.caps.max_events = 5;
  c.out_dir = (std::filesystem::temp_directory_path() / "tvq_caps").string();
  RunContext ctx(c, false);
  CHECK(cmd_simulate(ctx) == 4);
  std::filesystem::remove_all(c.out_dir);
}

TEST_CASE("strict dominance rejection exits with code 3") {
  // reversed room ladder: the infinite-room arm is claimed lower than room 0,
  // which the data contradict decisively
  ExperimentConfig c;
  c.spec.rate = RateFunction::constant(0.5, 0.5);
  c.spec.joint = JointLaw::product(Marginal::exponential(1.0), Marginal::exponential(1.0));
  c.spec.discipline = Discipline::lcfs_pr;
  c.spec.init = InitKind::deterministic;
  c.spec.init_x = 1.0;
  c.mode = "busy_period";
  c.reps = 2000;
  c.seed = 5;
  c.pair_kind = "rooms";
  c.ladder = {std::nullopt, 0};
  c.out_dir = (std::filesystem::temp_directory_path() / "tvq_strict").string();
  RunContext ctx(c, true);
  CHECK(cmd_dominance(ctx) == 3);
  std::filesystem::remove_all(c.out_dir);
}

TEST_CASE("trace emission") {
  ExperimentConfig c = drain_config((std::filesystem::temp_directory_path() / "tvq_trace").string());
  c.trace = true;
  RunContext ctx(c, false);
  REQUIRE(cmd_simulate(ctx) == 0);
  std::string trace = slurp(std::filesystem::path(c.out_dir) / "trace_0.csv");
  CHECK(trace.rfind("time,kind,W_pre,jump,L_pre\n", 0) == 0);
  std::filesystem::remove_all(c.out_dir);
}
