#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "tvq/sim_core.hpp"

using namespace tvq;

namespace {

QueueSpec drain_spec(double x) {
  QueueSpec s;
  s.rate = RateFunction::constant(0.0, 1.0);
  s.joint = JointLaw::infinite_patience(Marginal::exponential(1.0));
  s.init = InitKind::deterministic;
  s.init_x = x;
  return s;
}

QueueSpec mm1_spec(double lambda, double x) {
  QueueSpec s;
  s.rate = RateFunction::constant(lambda, lambda);
  s.joint = JointLaw::infinite_patience(Marginal::exponential(1.0));
  s.init = InitKind::deterministic;
  s.init_x = x;
  return s;
}

QueueSpec sinusoid_cycle_spec() {
  QueueSpec s;
  s.rate = RateFunction::sinusoid(0.4, 0.2, 1.0, 0.6);
  s.joint = JointLaw::product(Marginal::exponential(1.0), Marginal::exponential(1.0));
  s.init = InitKind::empty;
  return s;
}

}  // namespace

TEST_CASE("segment_integral examples") {
  CHECK(segment_integral(CostFunction::power(1.0), 3.0, 0.0) == Catch::Approx(4.5));
  CHECK(segment_integral(CostFunction::indicator_above(1.0), 3.0, 0.0) == Catch::Approx(2.0));
  CHECK(segment_integral(CostFunction::exp_decay(1.0), 3.0, 0.0) ==
        Catch::Approx(1.0 - std::exp(-3.0)).epsilon(1e-9));
  CHECK_THROWS_AS(segment_integral(CostFunction::constant(1.0), 1.0, 2.0), std::invalid_argument);
}

TEST_CASE("quadrature path agrees with the exact antiderivative") {
  CostFunction g = CostFunction::exp_decay(0.7);
  CostFunction gq = g.without_antiderivative();
  for (double hi : {0.3, 1.0, 4.2, 9.9}) {
    CHECK(segment_integral(gq, hi, 0.1) == Catch::Approx(segment_integral(g, hi, 0.1)).margin(1e-8));
  }
}

TEST_CASE("deterministic drain") {
  auto out = run_busy_period(drain_spec(3.0), CostFunction::power(1.0), 1, 0);
  CHECK(out.sample.duration == Catch::Approx(3.0).margin(1e-12));
  CHECK(out.sample.time_integral == Catch::Approx(4.5).margin(1e-12));
  CHECK(out.sample.join_integral == 0.0);
  CHECK(out.sample.joined == 0);
  CHECK(out.path.end_reason == EndReason::tau_hit);
}

TEST_CASE("LCFS-PR with room 0: every arrival balks, tau equals x") {
  QueueSpec s = mm1_spec(0.8, 2.0);
  s.discipline = Discipline::lcfs_pr;
  s.room = 0;
  for (std::uint64_t rep = 0; rep < 50; ++rep) {
    auto out = run_busy_period(s, CostFunction::constant(1.0), 5, rep);
    CHECK(out.sample.duration == Catch::Approx(2.0).margin(1e-12));
    CHECK(out.sample.joined == 0);
    CHECK(out.sample.balked_room >= 0);
  }
}

TEST_CASE("M/G/1 busy period mean E tau(1) = 1/(1-rho)") {
  const int reps = 20000;
  std::vector<double> taus;
  for (int r = 0; r < reps; ++r) {
    taus.push_back(run_busy_period(mm1_spec(0.5, 1.0), CostFunction::constant(1.0), 2, r)
                       .sample.duration);
  }
  double m = oracles::mean(taus), se = oracles::stderr_of_mean(taus);
  CHECK(std::abs(m - 2.0) < 4.0 * se);
}

TEST_CASE("run_cycle with no arrivals") {
  QueueSpec s;
  s.rate = RateFunction::constant_periodic(0.0, 1.0, 2.0);
  s.joint = JointLaw::infinite_patience(Marginal::exponential(1.0));
  s.init = InitKind::empty;
  auto out = run_cycle(s, CostFunction::constant(1.0), 1, 0);
  CHECK(out.sample.duration == 2.0);
  CHECK(out.sample.time_integral == Catch::Approx(2.0).margin(1e-12));
  CHECK(out.sample.joined == 0);
  CHECK(out.path.end_reason == EndReason::cycle_end);
}

TEST_CASE("xi is an exact multiple of kappa and g identities hold") {
  QueueSpec s = sinusoid_cycle_spec();
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    auto out = run_cycle(s, CostFunction::constant(1.0), 8, rep);
    double n = out.sample.duration / 1.0;
    CHECK(std::abs(n - std::round(n)) < 1e-12);
    CHECK(std::round(n) >= 1.0);
    // g == 1: A = duration, A* = eta*
    CHECK(out.sample.time_integral ==
          Catch::Approx(out.sample.duration).epsilon(1e-9));
    CHECK(out.sample.join_integral == Catch::Approx(static_cast<double>(out.sample.joined)));
  }
}

TEST_CASE("busy/idle partition inside a cycle") {
  QueueSpec s = sinusoid_cycle_spec();
  CostFunction busy_ind = CostFunction::indicator_above(0.0);
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    auto all = run_cycle(s, CostFunction::constant(1.0), 21, rep);
    auto busy = run_cycle(s, busy_ind, 21, rep);
    // same seed, same path; busy time + idle time = xi
    REQUIRE(all.sample.duration == busy.sample.duration);
    double idle = all.sample.time_integral - busy.sample.time_integral;
    CHECK(idle >= -1e-9);
    CHECK(busy.sample.time_integral <= all.sample.duration + 1e-9);
  }
}

TEST_CASE("event log self-consistency audit") {
  QueueSpec s = sinusoid_cycle_spec();
  s.discipline = Discipline::lcfs_pr;
  s.room = 2;
  for (std::uint64_t rep = 0; rep < 100; ++rep) {
    auto out = run_cycle(s, CostFunction::constant(1.0), 33, rep);
    double prev = -1.0;
    for (const auto& e : out.path.events) {
      CHECK(e.time >= prev);
      if (e.kind != EventKind::empty_hit && e.kind != EventKind::cycle_end) CHECK(e.time > prev);
      prev = e.time;
      switch (e.kind) {
        case EventKind::join:
          CHECK(e.mark_patience >= e.workload_before);
          CHECK(e.queue_length_before < *s.room + 1);
          break;
        case EventKind::balk_patience:
          CHECK(e.mark_patience < e.workload_before);
          break;
        case EventKind::balk_room:
          CHECK(e.queue_length_before == *s.room + 1);
          break;
        default:
          break;
      }
    }
  }
}

TEST_CASE("FCFS and LCFS-PR unbounded share workload paths bitwise") {
  QueueSpec f = mm1_spec(0.7, 1.5);
  QueueSpec l = f;
  l.discipline = Discipline::lcfs_pr;  // room unset: infinite
  for (std::uint64_t rep = 0; rep < 200; ++rep) {
    auto of = run_busy_period(f, CostFunction::constant(1.0), 77, rep);
    auto ol = run_busy_period(l, CostFunction::constant(1.0), 77, rep);
    REQUIRE(of.sample.duration == ol.sample.duration);
    REQUIRE(of.sample.joined == ol.sample.joined);
    // join events coincide exactly
    std::vector<const EventRecord*> jf, jl;
    for (const auto& e : of.path.events)
      if (e.kind == EventKind::join) jf.push_back(&e);
    for (const auto& e : ol.path.events)
      if (e.kind == EventKind::join) jl.push_back(&e);
    REQUIRE(jf.size() == jl.size());
    for (std::size_t i = 0; i < jf.size(); ++i) {
      CHECK(jf[i]->time == jl[i]->time);
      CHECK(jf[i]->jump == jl[i]->jump);
      CHECK(jf[i]->workload_before == jl[i]->workload_before);
    }
  }
}

TEST_CASE("run_horizon examples") {
  auto out = run_horizon(drain_spec(1.0), 10.0, CostFunction::power(1.0), 1, 0);
  CHECK(time_average(out) == Catch::Approx(0.05).margin(1e-12));
  auto one = run_horizon(mm1_spec(0.5, 1.0), 50.0, CostFunction::constant(1.0), 1, 0);
  CHECK(time_average(one) == Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("PK mean workload over a long horizon") {
  QueueSpec s = mm1_spec(0.5, 1.0);
  s.init = InitKind::empty;
  auto out = run_horizon(s, 1e6, CostFunction::power(1.0), 12, 0);
  // lambda E S^2 / (2 (1 - rho)) = 0.5 * 2 / 1 = 1
  CHECK(time_average(out) == Catch::Approx(1.0).epsilon(0.05));
}

TEST_CASE("long idle decomposition with no arrivals") {
  QueueSpec s;
  s.rate = RateFunction::constant_periodic(0.0, 1.0, 2.0);
  s.joint = JointLaw::infinite_patience(Marginal::exponential(1.0));
  s.init = InitKind::empty;
  CostFunction g = CostFunction::constant(3.0);
  auto out = run_until_long_idle(s, g, 1, 0);
  REQUIRE(out.long_idle.has_value());
  CHECK(out.long_idle->first_long_idle == 1);
  CHECK(out.long_idle->zeta == 2.0);
  CHECK(out.long_idle->upper_time_integral == Catch::Approx(2.0 * 3.0));
  CHECK(out.long_idle->upper_join_integral == Catch::Approx(3.0));
}

TEST_CASE("A_bar dominates the cycle functional pathwise") {
  QueueSpec s = sinusoid_cycle_spec();
  CostFunction g = CostFunction::constant(1.0);
  for (std::uint64_t rep = 0; rep < 300; ++rep) {
    auto cyc = run_cycle(s, g, 99, rep);
    auto dec = run_until_long_idle(s, g, 99, rep);
    REQUIRE(dec.long_idle.has_value());
    CHECK(dec.long_idle->upper_time_integral >= cyc.sample.time_integral - 1e-9);
    CHECK(dec.long_idle->upper_join_integral >= cyc.sample.join_integral - 1e-9);
    // idle lengths before the long one are <= kappa; the long one exceeds it
    for (double len : dec.long_idle->idle_lengths) CHECK(len <= 1.0 + 1e-12);
  }
}

TEST_CASE("first long idle index is geometric for constant rates") {
  QueueSpec s;
  s.rate = RateFunction::constant_periodic(0.4, 0.4, 1.0);
  s.joint = JointLaw::infinite_patience(Marginal::exponential(2.0));
  s.init = InitKind::empty;
  const int reps = 100000;
  std::vector<double> iotas;
  for (int rep = 0; rep < reps; ++rep) {
    auto out = run_until_long_idle(s, CostFunction::constant(1.0), 13, rep);
    REQUIRE(out.long_idle.has_value());
    iotas.push_back(static_cast<double>(out.long_idle->first_long_idle));
  }
  double p = std::exp(-0.4);
  double m = oracles::mean(iotas), se = oracles::stderr_of_mean(iotas);
  CHECK(std::abs(m - 1.0 / p) < 3.0 * se);
}

TEST_CASE("drift bound E[W(1;x)] - x + 1 <= lambda_h E S (1 - H(x-1))") {
  QueueSpec s;
  s.rate = RateFunction::constant(0.8, 0.8);
  s.joint = JointLaw::product(Marginal::exponential(1.0), Marginal::exponential(0.5));
  s.init = InitKind::deterministic;
  const int reps = 20000;
  for (double x : {2.0, 5.0, 10.0}) {
    s.init_x = x;
    std::vector<double> w1;
    for (int rep = 0; rep < reps; ++rep) {
      auto out = run_horizon(s, 1.0, CostFunction::constant(1.0), 41, rep);
      w1.push_back(out.end_workload);
    }
    double lhs = oracles::mean(w1) - x + 1.0;
    double se = oracles::stderr_of_mean(w1);
    double rhs = 0.8 * 1.0 * (1.0 - s.joint.patience.cdf(x - 1.0));
    CHECK(lhs <= rhs + 3.0 * se);
  }
}

TEST_CASE("cycle mean matches the discrete-time oracle") {
  QueueSpec s = sinusoid_cycle_spec();
  const int reps = 4000;
  std::vector<double> xi_exact;
  for (int rep = 0; rep < reps; ++rep) {
    xi_exact.push_back(run_cycle(s, CostFunction::constant(1.0), 61, rep).sample.duration);
  }
  std::mt19937_64 rng(424242);
  std::vector<double> xi_disc;
  for (int rep = 0; rep < reps; ++rep) {
    xi_disc.push_back(oracles::discrete_cycle(s, CostFunction::constant(1.0), 1e-3, rng).xi);
  }
  double diff = oracles::mean(xi_exact) - oracles::mean(xi_disc);
  double joint_se = std::sqrt(std::pow(oracles::stderr_of_mean(xi_exact), 2) +
                              std::pow(oracles::stderr_of_mean(xi_disc), 2));
  // 3 SE plus a discretization slack of order dt * E[events]
  CHECK(std::abs(diff) < 3.0 * joint_se + 0.05);
}

TEST_CASE("caps flag partial runs") {
  QueueSpec s = mm1_spec(0.9, 1.0);
  Caps tiny;
  tiny.max_events = 5;
  auto out = run_busy_period(s, CostFunction::constant(1.0), 3, 1, tiny);
  CHECK(out.sample.capped);
}

TEST_CASE("balking happens iff patience falls short of workload") {
  QueueSpec s;
  s.rate = RateFunction::constant(0.8, 0.8);
  s.joint = JointLaw::product(Marginal::exponential(1.0), Marginal::deterministic(0.5));
  s.init = InitKind::deterministic;
  s.init_x = 2.0;
  auto out = run_busy_period(s, CostFunction::constant(1.0), 19, 0);
  for (const auto& e : out.path.events) {
    if (e.kind == EventKind::join && e.time > 0.0) CHECK(e.workload_before <= 0.5);
    if (e.kind == EventKind::balk_patience) CHECK(e.workload_before > 0.5);
  }
}
