#ifndef TVQ_COUPLING_HPP
#define TVQ_COUPLING_HPP

#include <algorithm>
#include <cstdint>
#include <optional>
#include <vector>

#include "tvq/model.hpp"
#include "tvq/sim_core.hpp"

namespace tvq {

enum class Tristate { holds, violated, not_applicable };

// ---------------------------------------------------------------------------
// lambda-vs-lambda_h thinning coupling: both arms consume the same candidate
// tape; the hi arm accepts every candidate, the lo arm thins. Marks are
// indexed by candidate order, so shared arrivals carry identical (S, Y).

struct CoupledPairSample {
  std::uint64_t replication_id = 0;
  SimOutcome lo, hi;
  Tristate pathwise_dominance_ok = Tristate::not_applicable;
  // raw epoch-wise W_hi >= W_lo check, evaluated regardless of patience;
  // only meaningful as a theorem check when patience is infinite
  bool pathwise_violation_observed = false;
};

namespace detail {

inline bool workload_dominates(const WorkloadPath& hi, const WorkloadPath& lo) {
  double t_end = std::min(hi.end_time, lo.end_time);
  std::vector<double> epochs;
  epochs.push_back(0.0);
  for (const auto& e : hi.events)
    if (e.time <= t_end) epochs.push_back(e.time);
  for (const auto& e : lo.events)
    if (e.time <= t_end) epochs.push_back(e.time);
  std::sort(epochs.begin(), epochs.end());
  for (double t : epochs) {
    if (hi.workload_at(t) < lo.workload_at(t) - 1e-9) return false;
  }
  return true;
}

}  // namespace detail

inline CoupledPairSample run_coupled_rates(const QueueSpec& spec_lo, const CostFunction& g,
                                           std::uint64_t seed, std::uint64_t rep,
                                           const EngineOptions& base_opt) {
  CoupledPairSample out;
  out.replication_id = rep;

  ArrivalTape tape(seed, rep, spec_lo.rate.lambda_h, spec_lo.joint);
  double x0 = resolve_initial_workload(spec_lo, seed, rep);

  EngineOptions opt_lo = base_opt;
  opt_lo.accept_all = false;
  opt_lo.record_events = true;
  out.lo = simulate(spec_lo, g, tape, x0, opt_lo);

  QueueSpec spec_hi = spec_lo;
  spec_hi.rate = RateFunction::constant(spec_lo.rate.lambda_h, spec_lo.rate.lambda_h);
  spec_hi.rate.kappa = spec_lo.rate.kappa;
  EngineOptions opt_hi = base_opt;
  opt_hi.accept_all = true;
  opt_hi.record_events = true;
  out.hi = simulate(spec_hi, g, tape, x0, opt_hi);

  out.pathwise_violation_observed = !detail::workload_dominates(out.hi.path, out.lo.path);
  if (spec_lo.joint.kind == JointLaw::Kind::infinite_patience) {
    out.pathwise_dominance_ok =
        out.pathwise_violation_observed ? Tristate::violated : Tristate::holds;
  } else {
    out.pathwise_dominance_ok = Tristate::not_applicable;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Waiting-room ladder on shared randomness: LCFS-PR members differing only in
// room size, plus the infinite-room member. K_of_u is the smallest ladder k
// whose workload path coincides with the infinite member's on [0, u].

struct RoomLadderSample {
  std::uint64_t replication_id = 0;
  std::vector<std::optional<std::uint64_t>> ks;  // nullopt = infinite room
  std::vector<SimOutcome> members;               // aligned with ks
  double window = 0.0;
  std::optional<std::uint64_t> K_of_u;           // nullopt: no ladder k matched
  std::uint64_t candidate_joins_in_window = 0;   // thinning-accepted arrivals on [0, u]
};

namespace detail {

// joins determine the workload path; two members agree on [0, u] iff their
// join sequences truncated to u agree
inline bool joins_match(const WorkloadPath& a, const WorkloadPath& b, double u) {
  auto next_join = [u](const WorkloadPath& p, std::size_t& i) -> const EventRecord* {
    while (i < p.events.size() && p.events[i].time <= u) {
      const EventRecord& e = p.events[i++];
      if (e.kind == EventKind::join) return &e;
    }
    return nullptr;
  };
  std::size_t ia = 0, ib = 0;
  while (true) {
    const EventRecord* ea = next_join(a, ia);
    const EventRecord* eb = next_join(b, ib);
    if (!ea || !eb) return !ea && !eb;
    if (ea->time != eb->time || ea->jump != eb->jump) return false;
  }
}

}  // namespace detail

inline RoomLadderSample run_room_ladder(const QueueSpec& base, const std::vector<std::optional<std::uint64_t>>& ks,
                                        const CostFunction& g, double window, std::uint64_t seed,
                                        std::uint64_t rep, const EngineOptions& base_opt) {
  RoomLadderSample out;
  out.replication_id = rep;
  out.ks = ks;
  out.window = window;

  ArrivalTape tape(seed, rep, base.rate.lambda_h, base.joint);
  double x0 = resolve_initial_workload(base, seed, rep);

  for (const auto& k : ks) {
    QueueSpec spec = base;
    spec.discipline = Discipline::lcfs_pr;
    spec.room = k;
    EngineOptions opt = base_opt;
    opt.record_events = true;
    out.members.push_back(simulate(spec, g, tape, x0, opt));
  }

  // count thinning-accepted arrivals on [0, window] by replaying the tape
  for (std::size_t i = 0;; ++i) {
    const Candidate& c = tape.at(i);
    if (c.time > window) break;
    if (c.accept_u * base.rate.lambda_h < base.rate(c.time)) ++out.candidate_joins_in_window;
  }

  // infinite member must be present to anchor the comparison
  auto inf_it = std::find(ks.begin(), ks.end(), std::optional<std::uint64_t>{});
  if (inf_it != ks.end()) {
    const WorkloadPath& ref = out.members[static_cast<std::size_t>(inf_it - ks.begin())].path;
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (!ks[i]) continue;
      if (detail::joins_match(out.members[i].path, ref, window)) {
        // the ladder is ascending, so every later member matches too once the
        // room stops binding; take the first match
        out.K_of_u = *ks[i];
        break;
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batches feeding the dominance tests. Capped replications are excluded from
// the arms and reported by id.

struct PairedBatch {
  std::vector<FunctionalSample> lo, hi;
  std::vector<std::uint64_t> replication_ids;
  std::vector<std::uint64_t> errored_ids;
};

inline PairedBatch paired_batch_rates(const QueueSpec& spec_lo, const CostFunction& g,
                                      std::uint64_t seed, std::uint64_t reps,
                                      const EngineOptions& opt) {
  PairedBatch out;
  for (std::uint64_t r = 0; r < reps; ++r) {
    CoupledPairSample s = run_coupled_rates(spec_lo, g, seed, r, opt);
    if (s.lo.sample.capped || s.hi.sample.capped) {
      out.errored_ids.push_back(r);
      continue;
    }
    out.lo.push_back(s.lo.sample);
    out.hi.push_back(s.hi.sample);
    out.replication_ids.push_back(r);
  }
  return out;
}

inline PairedBatch paired_batch_rooms(const QueueSpec& base, std::optional<std::uint64_t> k_lo,
                                      std::optional<std::uint64_t> k_hi, const CostFunction& g,
                                      std::uint64_t seed, std::uint64_t reps,
                                      const EngineOptions& opt) {
  PairedBatch out;
  for (std::uint64_t r = 0; r < reps; ++r) {
    ArrivalTape tape(seed, r, base.rate.lambda_h, base.joint);
    double x0 = resolve_initial_workload(base, seed, r);
    QueueSpec s_lo = base;
    s_lo.discipline = Discipline::lcfs_pr;
    s_lo.room = k_lo;
    QueueSpec s_hi = s_lo;
    s_hi.room = k_hi;
    SimOutcome a = simulate(s_lo, g, tape, x0, opt);
    SimOutcome b = simulate(s_hi, g, tape, x0, opt);
    if (a.sample.capped || b.sample.capped) {
      out.errored_ids.push_back(r);
      continue;
    }
    out.lo.push_back(a.sample);
    out.hi.push_back(b.sample);
    out.replication_ids.push_back(r);
  }
  return out;
}

}  // namespace tvq

#endif
