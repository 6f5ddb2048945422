#ifndef TVQ_EXPERIMENT_HPP
#define TVQ_EXPERIMENT_HPP

#include <atomic>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "tvq/bounds.hpp"
#include "tvq/coupling.hpp"
#include "tvq/model.hpp"
#include "tvq/sim_core.hpp"
#include "tvq/stats.hpp"

namespace tvq {

using nlohmann::json;

// ---------------------------------------------------------------------------
// JSON (de)serialization of the model vocabulary. Round-trips losslessly.

inline json to_json(const RateFunction& r) {
  json j;
  j["lambda_h"] = r.lambda_h;
  if (r.kappa) j["kappa"] = *r.kappa;
  switch (r.kind) {
    case RateFunction::Kind::constant:
      j["kind"] = "constant";
      j["level"] = r.level;
      break;
    case RateFunction::Kind::sinusoid:
      j["kind"] = "sinusoid";
      j["base"] = r.base;
      j["amplitude"] = r.amplitude;
      j["phase"] = r.phase;
      break;
    case RateFunction::Kind::piecewise_constant:
      j["kind"] = "piecewise";
      j["starts"] = r.starts;
      j["levels"] = r.levels;
      break;
  }
  return j;
}

inline RateFunction rate_from_json(const json& j) {
  std::string kind = j.at("kind");
  double lambda_h = j.at("lambda_h");
  if (kind == "constant") {
    RateFunction r = RateFunction::constant(j.at("level"), lambda_h);
    if (j.contains("kappa")) r.kappa = j.at("kappa").get<double>();
    return r;
  }
  if (kind == "sinusoid") {
    return RateFunction::sinusoid(j.at("base"), j.at("amplitude"), j.at("kappa"), lambda_h,
                                  j.value("phase", 0.0));
  }
  if (kind == "piecewise") {
    return RateFunction::piecewise(j.at("starts").get<std::vector<double>>(),
                                   j.at("levels").get<std::vector<double>>(), j.at("kappa"),
                                   lambda_h);
  }
  throw std::invalid_argument("unknown rate kind: " + kind);
}

inline json to_json(const Marginal& m) {
  json j;
  switch (m.kind) {
    case Marginal::Kind::exponential:
      j["kind"] = "exponential";
      j["rate"] = m.a;
      break;
    case Marginal::Kind::deterministic:
      j["kind"] = "deterministic";
      j["value"] = m.a;
      break;
    case Marginal::Kind::pareto:
      j["kind"] = "pareto";
      j["alpha"] = m.a;
      j["x_m"] = m.b;
      break;
    case Marginal::Kind::uniform:
      j["kind"] = "uniform";
      j["lo"] = m.a;
      j["hi"] = m.b;
      break;
    case Marginal::Kind::infinite:
      j["kind"] = "infinite";
      break;
  }
  if (m.atom_at_infinity > 0.0) j["atom_at_infinity"] = m.atom_at_infinity;
  return j;
}

inline Marginal marginal_from_json(const json& j) {
  std::string kind = j.at("kind");
  Marginal m;
  if (kind == "exponential") m = Marginal::exponential(j.at("rate"));
  else if (kind == "deterministic") m = Marginal::deterministic(j.at("value"));
  else if (kind == "pareto") m = Marginal::pareto(j.at("alpha"), j.at("x_m"));
  else if (kind == "uniform") m = Marginal::uniform(j.at("lo"), j.at("hi"));
  else if (kind == "infinite") m = Marginal::infinite();
  else throw std::invalid_argument("unknown marginal kind: " + kind);
  if (j.contains("atom_at_infinity")) m.atom_at_infinity = j.at("atom_at_infinity").get<double>();
  return m;
}

inline json to_json(const JointLaw& law) {
  json j;
  j["service"] = to_json(law.service);
  switch (law.kind) {
    case JointLaw::Kind::product:
      j["kind"] = "product";
      j["patience"] = to_json(law.patience);
      break;
    case JointLaw::Kind::comonotone:
      j["kind"] = "comonotone";
      j["patience"] = to_json(law.patience);
      break;
    case JointLaw::Kind::gaussian_copula:
      j["kind"] = "gaussian_copula";
      j["patience"] = to_json(law.patience);
      j["correlation"] = law.correlation;
      break;
    case JointLaw::Kind::infinite_patience:
      j["kind"] = "infinite_patience";
      break;
  }
  return j;
}

inline JointLaw joint_from_json(const json& j) {
  std::string kind = j.at("kind");
  Marginal s = marginal_from_json(j.at("service"));
  if (kind == "infinite_patience") return JointLaw::infinite_patience(s);
  Marginal y = marginal_from_json(j.at("patience"));
  if (kind == "product") return JointLaw::product(s, y);
  if (kind == "comonotone") return JointLaw::comonotone(s, y);
  if (kind == "gaussian_copula") return JointLaw::gaussian_copula(s, y, j.at("correlation"));
  throw std::invalid_argument("unknown joint kind: " + kind);
}

inline json to_json(const CostFunction& g) {
  json j;
  switch (g.kind) {
    case CostFunction::Kind::constant:
      j["kind"] = "constant";
      j["c"] = g.c;
      break;
    case CostFunction::Kind::power:
      j["kind"] = "power";
      j["p"] = g.p;
      break;
    case CostFunction::Kind::exp_decay:
      j["kind"] = "exp_decay";
      j["alpha"] = g.alpha;
      break;
    case CostFunction::Kind::indicator_above:
      j["kind"] = "indicator_above";
      j["s"] = g.s;
      break;
    case CostFunction::Kind::piecewise_linear:
      j["kind"] = "piecewise_linear";
      j["xs"] = g.xs;
      j["ys"] = g.ys;
      break;
  }
  return j;
}

inline CostFunction cost_from_json(const json& j) {
  std::string kind = j.at("kind");
  if (kind == "constant") return CostFunction::constant(j.at("c"));
  if (kind == "power") return CostFunction::power(j.at("p"));
  if (kind == "exp_decay") return CostFunction::exp_decay(j.at("alpha"));
  if (kind == "indicator_above") return CostFunction::indicator_above(j.at("s"));
  if (kind == "piecewise_linear") {
    return CostFunction::piecewise_linear(j.at("xs").get<std::vector<double>>(),
                                          j.at("ys").get<std::vector<double>>());
  }
  throw std::invalid_argument("unknown cost kind: " + kind);
}

inline json to_json(const QueueSpec& s) {
  json j;
  j["rate"] = to_json(s.rate);
  j["joint"] = to_json(s.joint);
  j["discipline"] = s.discipline == Discipline::fcfs ? "fcfs" : "lcfs_pr";
  if (s.room) j["room"] = *s.room;
  switch (s.init) {
    case InitKind::deterministic:
      j["init"] = {{"kind", "deterministic"}, {"x", s.init_x}};
      break;
    case InitKind::random_service:
      j["init"] = {{"kind", "random_service"}};
      break;
    case InitKind::empty:
      j["init"] = {{"kind", "empty"}};
      break;
  }
  return j;
}

inline QueueSpec spec_from_json(const json& j) {
  QueueSpec s;
  s.rate = rate_from_json(j.at("rate"));
  s.joint = joint_from_json(j.at("joint"));
  std::string d = j.value("discipline", "fcfs");
  if (d == "fcfs") s.discipline = Discipline::fcfs;
  else if (d == "lcfs_pr") s.discipline = Discipline::lcfs_pr;
  else throw std::invalid_argument("unknown discipline: " + d);
  if (j.contains("room")) s.room = j.at("room").get<std::uint64_t>();
  const json& init = j.at("init");
  std::string ik = init.at("kind");
  if (ik == "deterministic") {
    s.init = InitKind::deterministic;
    s.init_x = init.at("x");
  } else if (ik == "random_service") {
    s.init = InitKind::random_service;
  } else if (ik == "empty") {
    s.init = InitKind::empty;
  } else {
    throw std::invalid_argument("unknown init kind: " + ik);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Experiment configuration document.

struct ExperimentConfig {
  QueueSpec spec;
  CostFunction g = CostFunction::constant(1.0);

  // run section
  std::string mode = "busy_period";  // busy_period | cycle | horizon
  double horizon = 0.0;
  std::uint64_t reps = 1000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  Caps caps;
  double alpha = 0.01;
  double tol = 1e-3;
  std::string pair_kind = "rates";  // dominance: rates | rooms
  std::vector<std::optional<std::uint64_t>> ladder;
  double window = 50.0;
  std::vector<double> quantiles{0.99, 0.999};
  std::uint64_t bound_reps = 100000;
  std::vector<double> u_grid;         // explicit grid, if any
  std::uint64_t u_points = 50;        // otherwise quantile-spread grid
  int moment_order = 1;

  // output section
  std::string out_dir = "out";
  bool trace = false;
};

inline json to_json(const ExperimentConfig& c) {
  json run;
  run["mode"] = c.mode;
  if (c.horizon > 0.0) run["horizon"] = c.horizon;
  run["reps"] = c.reps;
  run["seed"] = c.seed;
  run["threads"] = c.threads;
  run["caps"] = {{"max_events", c.caps.max_events}, {"max_time", c.caps.max_time}};
  run["alpha"] = c.alpha;
  run["tol"] = c.tol;
  run["pair_kind"] = c.pair_kind;
  if (!c.ladder.empty()) {
    json l = json::array();
    for (const auto& k : c.ladder) {
      if (k) l.push_back(*k);
      else l.push_back(nullptr);
    }
    run["ladder"] = l;
  }
  run["window"] = c.window;
  run["quantiles"] = c.quantiles;
  run["bound_reps"] = c.bound_reps;
  if (!c.u_grid.empty()) run["u_grid"] = c.u_grid;
  run["u_points"] = c.u_points;
  run["moment_order"] = c.moment_order;

  json j;
  j["model"] = to_json(c.spec);
  j["model"]["cost"] = to_json(c.g);
  j["run"] = run;
  j["output"] = {{"dir", c.out_dir}, {"trace", c.trace}};
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.spec = spec_from_json(j.at("model"));
  if (j.at("model").contains("cost")) c.g = cost_from_json(j.at("model").at("cost"));
  if (j.contains("run")) {
    const json& run = j.at("run");
    c.mode = run.value("mode", c.mode);
    c.horizon = run.value("horizon", c.horizon);
    c.reps = run.value("reps", c.reps);
    c.seed = run.value("seed", c.seed);
    c.threads = run.value("threads", c.threads);
    if (run.contains("caps")) {
      c.caps.max_events = run.at("caps").value("max_events", c.caps.max_events);
      c.caps.max_time = run.at("caps").value("max_time", c.caps.max_time);
    }
    c.alpha = run.value("alpha", c.alpha);
    c.tol = run.value("tol", c.tol);
    c.pair_kind = run.value("pair_kind", c.pair_kind);
    if (run.contains("ladder")) {
      for (const auto& e : run.at("ladder")) {
        if (e.is_null()) c.ladder.push_back(std::nullopt);
        else c.ladder.push_back(e.get<std::uint64_t>());
      }
    }
    c.window = run.value("window", c.window);
    if (run.contains("quantiles")) c.quantiles = run.at("quantiles").get<std::vector<double>>();
    c.bound_reps = run.value("bound_reps", c.bound_reps);
    if (run.contains("u_grid")) c.u_grid = run.at("u_grid").get<std::vector<double>>();
    c.u_points = run.value("u_points", c.u_points);
    c.moment_order = run.value("moment_order", c.moment_order);
  }
  if (j.contains("output")) {
    c.out_dir = j.at("output").value("dir", c.out_dir);
    c.trace = j.at("output").value("trace", c.trace);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  in >> j;
  return config_from_json(j);
}

// FNV-1a over the canonical serialized form
inline std::uint64_t config_hash(const ExperimentConfig& c) {
  std::string s = to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Replication pool: results land in preallocated slots indexed by rep, so the
// output is independent of scheduling and thread count.

template <class T, class Fn>
std::vector<T> run_replications(std::uint64_t reps, unsigned threads, Fn&& fn) {
  std::vector<T> out(reps);
  if (threads <= 1) {
    for (std::uint64_t r = 0; r < reps; ++r) out[r] = fn(r);
    return out;
  }
  std::atomic<std::uint64_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::uint64_t r = next.fetch_add(1); r < reps; r = next.fetch_add(1)) out[r] = fn(r);
    });
  }
  for (auto& th : pool) th.join();
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic text formatting: shortest round-trip representation so replay
// produces byte-identical files.

inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct RunContext {
  ExperimentConfig cfg;
  std::filesystem::path out_dir;
  json manifest;
  std::vector<std::string> outputs;
  bool caps_exceeded = false;
  bool strict = false;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  explicit RunContext(ExperimentConfig c, bool strict_flag) : cfg(std::move(c)), strict(strict_flag) {
    out_dir = cfg.out_dir;
    std::filesystem::create_directories(out_dir);
  }

  std::ofstream open(const std::string& name) {
    outputs.push_back(name);
    return std::ofstream(out_dir / name, std::ios::binary);
  }

  void write_json(const std::string& name, const json& j) {
    auto f = open(name);
    f << j.dump(2) << "\n";
  }

  // exit code resolution: 4 beats 3 beats 0
  int finish(const std::string& subcommand, bool dominance_rejected = false) {
    manifest["subcommand"] = subcommand;
    manifest["config"] = to_json(cfg);
    manifest["config_hash"] = config_hash(cfg);
    manifest["seed"] = cfg.seed;
    manifest["version"] = "tvq 1.0.0";
    manifest["outputs"] = outputs;
    manifest["caps_exceeded"] = caps_exceeded;
    manifest["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    {
      auto f = std::ofstream(out_dir / "manifest.json", std::ios::binary);
      f << manifest.dump(2) << "\n";
    }
    if (caps_exceeded) return 4;
    if (dominance_rejected && strict) return 3;
    return 0;
  }
};

inline const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::join: return "join";
    case EventKind::balk_patience: return "balk-patience";
    case EventKind::balk_room: return "balk-room";
    case EventKind::service_completion: return "service-completion";
    case EventKind::empty_hit: return "empty-hit";
    case EventKind::cycle_end: return "cycle-end";
  }
  return "?";
}

inline void write_trace(RunContext& ctx, std::uint64_t rep, const WorkloadPath& path) {
  auto f = ctx.open("trace_" + std::to_string(rep) + ".csv");
  f << "time,kind,W_pre,jump,L_pre\n";
  for (const auto& e : path.events) {
    f << fmt(e.time) << ',' << event_kind_name(e.kind) << ',' << fmt(e.workload_before) << ','
      << fmt(e.jump) << ',' << e.queue_length_before << "\n";
  }
}

// ---------------------------------------------------------------------------
// Shared drivers.

inline SimOutcome run_one(const ExperimentConfig& c, std::uint64_t rep) {
  if (c.mode == "cycle") return run_cycle(c.spec, c.g, c.seed, rep, c.caps);
  if (c.mode == "horizon") return run_horizon(c.spec, c.horizon, c.g, c.seed, rep, c.caps);
  return run_busy_period(c.spec, c.g, c.seed, rep, c.caps);
}

inline json verdict_to_json(const DominanceVerdict& v) {
  json j;
  j["d_plus"] = v.d_plus;
  j["critical"] = v.critical;
  j["verdict"] = v.verdict == Verdict::consistent ? "consistent" : "rejected";
  j["n_lower"] = v.n_lower;
  j["n_upper"] = v.n_upper;
  if (v.permutation) j["permutation_p_value"] = v.p_value;
  return j;
}

// ---------------------------------------------------------------------------
// Subcommands. Each returns a process exit code.

inline int cmd_validate(RunContext& ctx);
inline int cmd_simulate(RunContext& ctx);
inline int cmd_dominance(RunContext& ctx);
inline int cmd_bound(RunContext& ctx);
inline int cmd_tail(RunContext& ctx);
inline int cmd_stability(RunContext& ctx);
inline int cmd_steady_state(RunContext& ctx);
inline int cmd_moments(RunContext& ctx);

inline HorizonKind mode_kind(const std::string& mode) {
  if (mode == "cycle") return HorizonKind::cycle;
  if (mode == "horizon") return HorizonKind::horizon;
  return HorizonKind::busy_period;
}

inline int check_config(RunContext& ctx) {
  auto violations = validate_spec(ctx.cfg.spec, mode_kind(ctx.cfg.mode), &ctx.cfg.g);
  if (!violations.empty()) {
    json j;
    j["violations"] = json::array();
    for (const auto& v : violations) j["violations"].push_back({{"code", v.code}, {"message", v.message}});
    ctx.write_json("violations.json", j);
    for (const auto& v : violations) std::fprintf(stderr, "config error: %s: %s\n", v.code.c_str(), v.message.c_str());
    return 2;
  }
  return 0;
}

inline int cmd_simulate(RunContext& ctx) {
  if (int rc = check_config(ctx)) return rc;
  const ExperimentConfig& c = ctx.cfg;
  auto results = run_replications<SimOutcome>(c.reps, c.threads,
                                             [&](std::uint64_t r) { return run_one(c, r); });
  auto f = ctx.open("samples.csv");
  f << "rep,duration,A,A_star,eta_star,balk_patience,balk_room\n";
  double sum_dur = 0.0, sum_a = 0.0, sum_as = 0.0, sum_eta = 0.0;
  for (std::uint64_t r = 0; r < c.reps; ++r) {
    const FunctionalSample& s = results[r].sample;
    if (s.capped) ctx.caps_exceeded = true;
    f << r << ',' << fmt(s.duration) << ',' << fmt(s.time_integral) << ','
      << fmt(s.join_integral) << ',' << s.joined << ',' << s.balked_patience << ','
      << s.balked_room << "\n";
    sum_dur += s.duration;
    sum_a += s.time_integral;
    sum_as += s.join_integral;
    sum_eta += static_cast<double>(s.joined);
    if (c.trace) write_trace(ctx, r, results[r].path);
  }
  double n = static_cast<double>(c.reps);
  json summary;
  summary["reps"] = c.reps;
  summary["mode"] = c.mode;
  summary["mean_duration"] = sum_dur / n;
  summary["mean_A"] = sum_a / n;
  summary["mean_A_star"] = sum_as / n;
  summary["mean_eta_star"] = sum_eta / n;
  summary["caps_exceeded"] = ctx.caps_exceeded;
  ctx.write_json("summary.json", summary);
  return ctx.finish("simulate");
}

inline int cmd_dominance(RunContext& ctx) {
  if (int rc = check_config(ctx)) return rc;
  const ExperimentConfig& c = ctx.cfg;
  EngineOptions opt;
  opt.mode = c.mode == "cycle" ? RunMode::cycle : RunMode::busy_period;
  opt.caps = c.caps;
  opt.record_events = false;

  json summary;
  bool rejected = false;
  auto pull = [](const std::vector<FunctionalSample>& v, auto proj) {
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& s : v) out.push_back(proj(s));
    return out;
  };
  auto a_of = [](const FunctionalSample& s) { return s.time_integral; };
  auto as_of = [](const FunctionalSample& s) { return s.join_integral; };

  auto f = ctx.open("paired_samples.csv");
  f << "rep,arm,duration,A,A_star,eta_star,dominance_flag\n";

  if (c.pair_kind == "rates") {
    PairedBatch batch;
    std::vector<CoupledPairSample> pairs = run_replications<CoupledPairSample>(
        c.reps, c.threads,
        [&](std::uint64_t r) { return run_coupled_rates(c.spec, c.g, c.seed, r, opt); });
    std::uint64_t violations = 0;
    for (const auto& p : pairs) {
      if (p.lo.sample.capped || p.hi.sample.capped) {
        ctx.caps_exceeded = true;
        continue;
      }
      batch.lo.push_back(p.lo.sample);
      batch.hi.push_back(p.hi.sample);
      if (p.pathwise_dominance_ok == Tristate::violated) ++violations;
      const char* flag = p.pathwise_dominance_ok == Tristate::holds
                             ? "holds"
                             : (p.pathwise_dominance_ok == Tristate::violated ? "violated"
                                                                             : "not-applicable");
      f << p.replication_id << ",lo," << fmt(p.lo.sample.duration) << ','
        << fmt(p.lo.sample.time_integral) << ',' << fmt(p.lo.sample.join_integral) << ','
        << p.lo.sample.joined << ',' << flag << "\n";
      f << p.replication_id << ",hi," << fmt(p.hi.sample.duration) << ','
        << fmt(p.hi.sample.time_integral) << ',' << fmt(p.hi.sample.join_integral) << ','
        << p.hi.sample.joined << ',' << flag << "\n";
    }
    DominanceVerdict va = test_st_dominance(pull(batch.lo, a_of), pull(batch.hi, a_of), c.alpha);
    DominanceVerdict vs = test_st_dominance(pull(batch.lo, as_of), pull(batch.hi, as_of), c.alpha);
    rejected = va.verdict == Verdict::rejected || vs.verdict == Verdict::rejected;
    summary["kind"] = "rates";
    summary["A"] = verdict_to_json(va);
    summary["A_star"] = verdict_to_json(vs);
    summary["pathwise_violations"] = violations;
  } else {
    // rooms: adjacent ladder pairs, smaller room is the stochastically larger arm
    summary["kind"] = "rooms";
    summary["pairs"] = json::array();
    for (std::size_t i = 0; i + 1 < c.ladder.size(); ++i) {
      PairedBatch batch = paired_batch_rooms(c.spec, c.ladder[i], c.ladder[i + 1], c.g, c.seed,
                                             c.reps, opt);
      if (!batch.errored_ids.empty()) ctx.caps_exceeded = true;
      for (std::size_t r = 0; r < batch.lo.size(); ++r) {
        auto row = [&](const char* arm, const FunctionalSample& s) {
          f << batch.replication_ids[r] << ',' << arm << ',' << fmt(s.duration) << ','
            << fmt(s.time_integral) << ',' << fmt(s.join_integral) << ',' << s.joined
            << ",not-applicable\n";
        };
        row(("k" + (c.ladder[i] ? std::to_string(*c.ladder[i]) : std::string("inf"))).c_str(),
            batch.lo[r]);
        row(("k" + (c.ladder[i + 1] ? std::to_string(*c.ladder[i + 1]) : std::string("inf"))).c_str(),
            batch.hi[r]);
      }
      // room k <= l implies A^{(k)} <=_st A^{(l)}: lower arm is the smaller room
      DominanceVerdict va = test_st_dominance(pull(batch.lo, a_of), pull(batch.hi, a_of), c.alpha);
      DominanceVerdict vs = test_st_dominance(pull(batch.lo, as_of), pull(batch.hi, as_of), c.alpha);
      rejected = rejected || va.verdict == Verdict::rejected || vs.verdict == Verdict::rejected;
      json p;
      p["k_lower"] = c.ladder[i] ? json(*c.ladder[i]) : json(nullptr);
      p["k_upper"] = c.ladder[i + 1] ? json(*c.ladder[i + 1]) : json(nullptr);
      p["A"] = verdict_to_json(va);
      p["A_star"] = verdict_to_json(vs);
      summary["pairs"].push_back(p);
    }
  }
  summary["alpha"] = c.alpha;
  summary["rejected"] = rejected;
  ctx.write_json("summary.json", summary);
  return ctx.finish("dominance", rejected);
}

inline int cmd_bound(RunContext& ctx) {
  ExperimentConfig& c = ctx.cfg;
  c.mode = "cycle";
  if (int rc = check_config(ctx)) return rc;

  // cycle samples of the lambda-queue
  auto cycles = run_replications<FunctionalSample>(c.reps, c.threads, [&](std::uint64_t r) {
    return run_cycle(c.spec, c.g, c.seed, r, c.caps).sample;
  });
  std::vector<double> a_cyc, as_cyc;
  for (const auto& s : cycles) {
    if (s.capped) {
      ctx.caps_exceeded = true;
      continue;
    }
    a_cyc.push_back(s.time_integral);
    as_cyc.push_back(s.join_integral);
  }

  // busy-period samples of the lambda_h-queue with x ~ G, feeding F and F*
  QueueSpec hi = c.spec;
  hi.rate = RateFunction::constant(c.spec.rate.lambda_h, c.spec.rate.lambda_h);
  hi.rate.kappa = c.spec.rate.kappa;
  hi.init = InitKind::random_service;
  std::uint64_t seed_hi = c.seed ^ 0x9e3779b97f4a7c15ull;
  auto busy = run_replications<FunctionalSample>(c.reps, c.threads, [&](std::uint64_t r) {
    return run_busy_period(hi, c.g, seed_hi, r, c.caps).sample;
  });
  std::vector<double> a_hi, as_hi;
  for (const auto& s : busy) {
    if (s.capped) {
      ctx.caps_exceeded = true;
      continue;
    }
    a_hi.push_back(s.time_integral);
    as_hi.push_back(s.join_integral);
  }
  if (a_cyc.empty() || a_hi.empty()) return ctx.finish("bound");

  double kappa = c.spec.rate.kappa.value_or(1.0);
  double lambda_h = c.spec.rate.lambda_h;
  double g0 = c.g(0.0);

  // u grid: spread over the observed cycle functionals unless given explicitly
  std::vector<double> grid = c.u_grid;
  if (grid.empty()) {
    EmpiricalDistribution d(a_cyc);
    double lo = std::max(1.0, kappa);
    double hi_u = std::max(d.max(), lo) * 1.5 + 1.0;
    for (std::uint64_t i = 0; i < c.u_points; ++i) {
      grid.push_back(lo + (hi_u - lo) * static_cast<double>(i) / static_cast<double>(c.u_points - 1));
    }
  }

  DecompoundResult J = decompound_cdf(EmpiricalDistribution(a_hi), kappa, lambda_h, grid, c.tol);
  DecompoundResult Js = decompound_cdf(EmpiricalDistribution(as_hi), kappa, lambda_h, grid, c.tol);

  // Proposition 2 Monte Carlo bound resampled from the A_{lambda_h} pool
  auto a_pool_sampler = [&](RandomStream& rng) {
    return a_hi[static_cast<std::size_t>(rng.next_u64() % a_hi.size())];
  };
  PropBoundSamples prop =
      sample_prop_bound(a_pool_sampler, kappa, lambda_h, g0, c.bound_reps, c.seed ^ 0x5151u);
  EmpiricalDistribution prop_d(prop.prop2);

  auto f = ctx.open("bound.csv");
  f << "u,J,J_star,prop2_cdf\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    f << fmt(grid[i]) << ',' << fmt(J.J[i]) << ',' << fmt(Js.J[i]) << ','
      << fmt(prop_d.ecdf(grid[i])) << "\n";
  }

  // Theorem 3 chain checks; the decompounding is evaluated once on the union
  // of grid and sample points, and probed by step lookup
  auto union_grid = [&](const std::vector<double>& samples) {
    std::vector<double> u = grid;
    u.insert(u.end(), samples.begin(), samples.end());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    return u;
  };
  auto step_lookup = [](const std::vector<double>& us, const std::vector<double>& vals) {
    return [&us, &vals](double u) {
      auto it = std::upper_bound(us.begin(), us.end(), u);
      if (it == us.begin()) return 0.0;
      return vals[static_cast<std::size_t>(it - us.begin()) - 1];
    };
  };
  std::vector<double> ug_a = union_grid(a_cyc), ug_as = union_grid(as_cyc);
  DecompoundResult J_all = decompound_cdf(EmpiricalDistribution(a_hi), kappa, lambda_h, ug_a, c.tol);
  DecompoundResult Js_all =
      decompound_cdf(EmpiricalDistribution(as_hi), kappa, lambda_h, ug_as, c.tol);

  DominanceVerdict v_prop = test_st_dominance(a_cyc, prop.prop2, c.alpha);
  DominanceVerdict v_j =
      test_st_dominance_vs_cdf(a_cyc, step_lookup(ug_a, J_all.J), ug_a, c.alpha);
  DominanceVerdict v_js =
      test_st_dominance_vs_cdf(as_cyc, step_lookup(ug_as, Js_all.J), ug_as, c.alpha);
  bool rejected = v_prop.verdict == Verdict::rejected || v_j.verdict == Verdict::rejected ||
                  v_js.verdict == Verdict::rejected;

  json summary;
  summary["p"] = J.p;
  summary["shift"] = J.shift;
  summary["lattice_width"] = J.lattice_width;
  summary["n_max"] = J.n_max;
  summary["residual"] = J.residual;
  summary["prop2_vs_cycles"] = verdict_to_json(v_prop);
  summary["J_vs_cycles"] = verdict_to_json(v_j);
  summary["J_star_vs_cycles"] = verdict_to_json(v_js);
  summary["rejected"] = rejected;
  ctx.write_json("summary.json", summary);
  return ctx.finish("bound", rejected);
}

inline int cmd_tail(RunContext& ctx) {
  ExperimentConfig& c = ctx.cfg;
  c.mode = "cycle";
  if (int rc = check_config(ctx)) return rc;
  auto cycles = run_replications<FunctionalSample>(c.reps, c.threads, [&](std::uint64_t r) {
    return run_cycle(c.spec, c.g, c.seed, r, c.caps).sample;
  });
  std::vector<double> xi, eta;
  for (const auto& s : cycles) {
    if (s.capped) {
      ctx.caps_exceeded = true;
      continue;
    }
    xi.push_back(s.duration);
    eta.push_back(static_cast<double>(s.joined));
  }
  if (xi.empty()) return ctx.finish("tail");

  double kappa = c.spec.rate.kappa.value_or(1.0);
  double lambda_h = c.spec.rate.lambda_h;
  double g0 = c.g(0.0);
  double rho_h = lambda_h * c.spec.joint.service.mean();

  TailReport rx = tail_ratio(xi, c.spec.joint.service, rho_h, kappa, lambda_h, g0, c.quantiles, false);
  TailReport re = tail_ratio(eta, c.spec.joint.service, rho_h, kappa, lambda_h, g0, c.quantiles, true);

  auto f = ctx.open("tail.csv");
  f << "u,survival,reference,ratio,bound\n";
  for (const auto& p : rx.points) {
    f << fmt(p.u) << ',' << fmt(p.survival) << ',' << fmt(p.reference) << ',' << fmt(p.ratio)
      << ',' << fmt(rx.theorem_bound) << "\n";
  }
  auto fe = ctx.open("tail_eta.csv");
  fe << "u,survival,reference,ratio,bound\n";
  for (const auto& p : re.points) {
    fe << fmt(p.u) << ',' << fmt(p.survival) << ',' << fmt(p.reference) << ',' << fmt(p.ratio)
       << ',' << fmt(re.theorem_bound) << "\n";
  }

  json summary;
  summary["label"] = "finite-quantile trend check of a limsup statement; not a limit verification";
  summary["theorem_bound"] = rx.theorem_bound;
  summary["rho_h"] = rho_h;
  ctx.write_json("summary.json", summary);
  return ctx.finish("tail");
}

inline int cmd_stability(RunContext& ctx) {
  const ExperimentConfig& c = ctx.cfg;
  StabilityReport r = stability_check(c.spec.rate.lambda_h, c.spec.joint.service,
                                      c.spec.joint.patience_marginal());
  json j;
  j["rho_h"] = r.rho_h;
  j["patience_survival_limit"] = r.patience_survival_limit;
  j["rho_eff"] = r.rho_eff;
  j["verdict"] = r.verdict == StabilityVerdict::stable
                     ? "stable"
                     : (r.verdict == StabilityVerdict::unstable ? "unstable" : "boundary");
  j["infinite_mean_service"] = r.infinite_mean_service;
  ctx.write_json("summary.json", j);
  return ctx.finish("stability");
}

inline int cmd_steady_state(RunContext& ctx) {
  ExperimentConfig& c = ctx.cfg;
  c.mode = "cycle";
  if (int rc = check_config(ctx)) return rc;
  auto cycles = run_replications<FunctionalSample>(c.reps, c.threads, [&](std::uint64_t r) {
    return run_cycle(c.spec, c.g, c.seed, r, c.caps).sample;
  });
  std::vector<double> a, xi;
  for (const auto& s : cycles) {
    if (s.capped) {
      ctx.caps_exceeded = true;
      continue;
    }
    a.push_back(s.time_integral);
    xi.push_back(s.duration);
  }
  if (a.empty()) return ctx.finish("steady-state");
  RatioEstimate ratio = ratio_estimate(a, xi, true);

  double horizon = c.horizon > 0.0 ? c.horizon : 1e5;
  QueueSpec hspec = c.spec;
  hspec.init = InitKind::empty;
  Caps hcaps = c.caps;
  SimOutcome h = run_horizon(hspec, horizon, c.g, c.seed ^ 0x4041u, 0, hcaps);
  if (h.sample.capped) ctx.caps_exceeded = true;
  double tavg = time_average(h);

  json j;
  j["ratio_estimate"] = ratio.estimate;
  j["ratio_se"] = ratio.standard_error;
  j["time_average"] = tavg;
  j["horizon"] = horizon;
  ctx.write_json("summary.json", j);
  return ctx.finish("steady-state");
}

inline int cmd_moments(RunContext& ctx) {
  ExperimentConfig& c = ctx.cfg;
  c.mode = "cycle";
  if (int rc = check_config(ctx)) return rc;
  auto cycles = run_replications<FunctionalSample>(c.reps, c.threads, [&](std::uint64_t r) {
    return run_cycle(c.spec, c.g, c.seed, r, c.caps).sample;
  });
  std::vector<double> eta;
  for (const auto& s : cycles) {
    if (s.capped) {
      ctx.caps_exceeded = true;
      continue;
    }
    eta.push_back(static_cast<double>(s.joined));
  }
  if (eta.empty()) return ctx.finish("moments");
  EtaMomentReport r = eta_moment_report(eta, c.moment_order, c.spec.joint, c.spec.rate.lambda_h);
  json j;
  j["order"] = r.estimate.order;
  j["estimate"] = r.estimate.estimate;
  j["standard_error"] = r.estimate.standard_error;
  j["running_prefix"] = r.estimate.running_prefix;
  j["product_form"] = r.product_form;
  j["stable"] = r.stable;
  j["service_moment_finite"] = r.service_moment_finite;
  j["theorem6_applicable"] = r.theorem6_applicable;
  j["note"] = r.note;
  ctx.write_json("summary.json", j);
  return ctx.finish("moments");
}

inline int cmd_validate(RunContext& ctx) {
  if (int rc = check_config(ctx)) return rc;
  // quick oracle suite: M/G/1 closed forms vs short simulations
  json j;
  j["config_valid"] = true;
  QueueSpec spec;
  spec.rate = RateFunction::constant(0.5, 0.5);
  spec.joint = JointLaw::infinite_patience(Marginal::exponential(1.0));
  spec.init = InitKind::deterministic;
  spec.init_x = 1.0;
  CostFunction one = CostFunction::constant(1.0);
  Mg1Oracles o = mg1_oracles(0.5, spec.joint.service);
  std::uint64_t n = 20000;
  auto outs = run_replications<double>(n, ctx.cfg.threads, [&](std::uint64_t r) {
    return run_busy_period(spec, one, ctx.cfg.seed, r).sample.duration;
  });
  double mean = std::accumulate(outs.begin(), outs.end(), 0.0) / static_cast<double>(n);
  double var = 0.0;
  for (double d : outs) var += (d - mean) * (d - mean);
  var /= static_cast<double>(n - 1);
  double se = std::sqrt(var / static_cast<double>(n));
  double expected = 1.0 * o.busy_period_mean_factor;
  j["mg1_busy_period"] = {{"expected", expected}, {"estimate", mean}, {"se", se},
                          {"ok", std::abs(mean - expected) <= 4.0 * se}};
  ctx.write_json("summary.json", j);
  bool ok = j["mg1_busy_period"]["ok"].get<bool>();
  int rc = ctx.finish("validate");
  return rc != 0 ? rc : (ok ? 0 : 2);
}

}  // namespace tvq

#endif
