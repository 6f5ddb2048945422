#ifndef TVQ_SIM_CORE_HPP
#define TVQ_SIM_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "tvq/model.hpp"
#include "tvq/streams.hpp"

namespace tvq {

// ---------------------------------------------------------------------------
// Exact integral of g over a unit-slope drain segment: the workload runs from
// w_hi down to w_lo, so the time integral equals the integral of g on
// [w_lo, w_hi].

namespace detail {

inline double adaptive_simpson(const CostFunction& g, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  double flm = g(lm), frm = g(rm);
  double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(g, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         adaptive_simpson(g, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace detail

inline double segment_integral(const CostFunction& g, double w_hi, double w_lo) {
  if (w_lo > w_hi) throw std::invalid_argument("segment_integral: reversed bounds");
  if (w_lo == w_hi) return 0.0;
  if (g.has_antiderivative) return g.antiderivative(w_hi) - g.antiderivative(w_lo);
  double fa = g(w_lo), fb = g(w_hi), fm = g(0.5 * (w_lo + w_hi));
  double whole = (w_hi - w_lo) / 6.0 * (fa + 4.0 * fm + fb);
  return detail::adaptive_simpson(g, w_lo, w_hi, fa, fm, fb, whole, 1e-9, 48);
}

// ---------------------------------------------------------------------------
// Event log.

enum class EventKind { join, balk_patience, balk_room, service_completion, empty_hit, cycle_end };

struct EventRecord {
  double time = 0.0;
  EventKind kind = EventKind::join;
  double workload_before = 0.0;       // W(t-)
  double jump = 0.0;                  // service S for a join, else 0
  std::uint64_t queue_length_before = 0;
  double mark_patience = 0.0;         // Y of the arriving customer (joins/balks)
};

enum class EndReason { tau_hit, cycle_end, horizon, long_idle };

struct WorkloadPath {
  double initial_workload = 0.0;
  std::vector<EventRecord> events;
  double end_time = 0.0;
  EndReason end_reason = EndReason::horizon;
  bool capped = false;

  // piecewise evaluation: between events the workload drains at unit rate,
  // floored at zero
  double workload_at(double t) const {
    double anchor_t = 0.0, anchor_w = initial_workload;
    for (const auto& e : events) {
      if (e.time > t) break;
      if (e.kind == EventKind::join) {
        anchor_t = e.time;
        anchor_w = e.workload_before + e.jump;
      }
    }
    return std::max(anchor_w - (t - anchor_t), 0.0);
  }
};

struct FunctionalSample {
  HorizonKind horizon_kind = HorizonKind::busy_period;
  double duration = 0.0;            // tau, xi, or elapsed horizon
  double time_integral = 0.0;       // integral of g(W(t)) dt
  double join_integral = 0.0;       // integral of g(W(t-)) dN*
  std::uint64_t joined = 0;         // eta*
  std::uint64_t balked_patience = 0;
  std::uint64_t balked_room = 0;
  bool capped = false;
};

struct BusyPeriodStat {
  double start = 0.0, end = 0.0;
  double time_integral = 0.0;
  double join_integral = 0.0;
};

struct LongIdleDecomposition {
  std::vector<double> idle_lengths;          // idles before the long one
  std::vector<BusyPeriodStat> busy_periods;  // completed busy periods
  std::uint64_t first_long_idle = 0;         // 1-based index of the long idle
  double long_idle_start = 0.0;
  double zeta = 0.0;                         // first multiple of kappa inside it
  double upper_time_integral = 0.0;          // iota*kappa*g(0) + sum over earlier busy periods
  double upper_join_integral = 0.0;          // iota*g(0) + join-measure analogue
};

struct Caps {
  std::uint64_t max_events = 10'000'000;
  double max_time = 1e7;
};

// ---------------------------------------------------------------------------
// Replayable candidate tape: homogeneous Poisson(lambda_h) points with one
// acceptance uniform and one (S, Y) mark per candidate. Several queue arms
// consuming the same tape see identical candidates and marks by construction.

struct Candidate {
  double time = 0.0;
  double accept_u = 0.0;
  double service = 0.0;
  double patience = 0.0;
};

class ArrivalTape {
 public:
  ArrivalTape(std::uint64_t seed, std::uint64_t replication, double lambda_h, JointLaw joint)
      : arrivals_(seed, replication, Lane::arrivals),
        acceptance_(seed, replication, Lane::acceptance),
        marks_(seed, replication, Lane::marks),
        lambda_h_(lambda_h),
        joint_(std::move(joint)) {}

  const Candidate& at(std::size_t i) {
    while (buf_.size() <= i) extend();
    return buf_[i];
  }

  double lambda_h() const { return lambda_h_; }
  const JointLaw& joint() const { return joint_; }

 private:
  void extend() {
    Candidate c;
    double prev = buf_.empty() ? 0.0 : buf_.back().time;
    c.time = prev + arrivals_.next_exponential(lambda_h_);
    c.accept_u = acceptance_.next_uniform();
    auto [s, y] = joint_.sample(marks_);
    c.service = s;
    c.patience = y;
    buf_.push_back(c);
  }

  RandomStream arrivals_, acceptance_, marks_;
  double lambda_h_;
  JointLaw joint_;
  std::vector<Candidate> buf_;
};

// ---------------------------------------------------------------------------
// Event-driven engine. The workload is tracked by join-anchored drain
// arithmetic: W(t) = anchor_W - (t - anchor_t) while busy, with the anchor
// reset only at joins. Completion bookkeeping (needed for queue lengths and
// LCFS-PR room decisions) never feeds back into the workload values, so
// disciplines that share joins produce bit-identical workload paths.

enum class RunMode { busy_period, cycle, horizon, long_idle };

struct EngineOptions {
  RunMode mode = RunMode::busy_period;
  double horizon = 0.0;
  bool accept_all = false;   // lambda_h arm of a coupling: skip thinning
  bool record_events = true;
  Caps caps;
};

struct SimOutcome {
  WorkloadPath path;
  FunctionalSample sample;
  std::optional<LongIdleDecomposition> long_idle;
  double end_workload = 0.0;
};

namespace detail {

struct KahanSum {
  double s = 0.0, c = 0.0;
  void add(double v) {
    double y = v - c;
    double t = s + y;
    c = (t - s) - y;
    s = t;
  }
  double value() const { return s; }
};

}  // namespace detail

inline SimOutcome simulate(const QueueSpec& spec, const CostFunction& g, ArrivalTape& tape,
                           double x0, const EngineOptions& opt) {
  SimOutcome out;
  out.path.initial_workload = x0;

  const double lambda_h = tape.lambda_h();
  const bool lcfs = spec.discipline == Discipline::lcfs_pr;
  const bool bounded = spec.room_bounded();
  const std::uint64_t room = bounded ? *spec.room : 0;
  const double kappa = spec.rate.kappa.value_or(0.0);
  const double g0 = g(0.0);

  double t = 0.0;
  double anchor_t = 0.0, anchor_w = x0;
  std::vector<double> rem;
  std::size_t head = 0;
  if (x0 > 0.0) rem.push_back(x0);

  auto jobs = [&] { return rem.size() - head; };
  auto active = [&]() -> double& { return lcfs ? rem.back() : rem[head]; };

  detail::KahanSum acc_time, acc_join;
  std::uint64_t joined = 0, balk_p = 0, balk_r = 0;
  std::size_t ci = 0;
  std::uint64_t steps = 0;
  bool capped = false;

  std::vector<double> idle_lengths;
  std::vector<BusyPeriodStat> busy_stats;
  double busy_start = 0.0, busy_a_snap = 0.0, busy_as_snap = 0.0;

  auto record = [&](EventKind k, double time, double w_pre, double jump, std::uint64_t l_pre,
                    double y = 0.0) {
    if (opt.record_events) out.path.events.push_back({time, k, w_pre, jump, l_pre, y});
  };

  auto busy_segment = [&](double w_hi, double w_lo) {
    acc_time.add(segment_integral(g, std::max(w_hi, 0.0), std::max(w_lo, 0.0)));
  };

  auto accepted = [&](const Candidate& c) {
    return opt.accept_all || c.accept_u * lambda_h < spec.rate(c.time);
  };

  double end_time = 0.0;
  EndReason end_reason = EndReason::horizon;
  bool done = false;

  while (!done) {
    if (++steps > opt.caps.max_events) {
      capped = true;
      break;
    }

    if (jobs() == 0) {
      // idle: W == 0 from time t until the next join
      const double z = t;
      double thresh = kInfinity;
      switch (opt.mode) {
        case RunMode::busy_period:
          end_time = t;
          end_reason = EndReason::tau_hit;
          done = true;
          continue;
        case RunMode::cycle: {
          double n0 = std::max(1.0, std::ceil(z / kappa));
          thresh = kappa * n0;
          break;
        }
        case RunMode::horizon:
          thresh = opt.horizon;
          break;
        case RunMode::long_idle:
          thresh = z + kappa;
          break;
      }

      bool joined_now = false;
      while (true) {
        if (++steps > opt.caps.max_events) {
          capped = true;
          break;
        }
        const Candidate& c = tape.at(ci);
        if (c.time > thresh) break;
        if (c.time > opt.caps.max_time) {
          capped = true;
          break;
        }
        if (!accepted(c)) {
          ++ci;
          continue;
        }
        // join into an empty system: patience >= 0 = W(t-) always holds
        ++ci;
        idle_lengths.push_back(c.time - z);
        acc_time.add(g0 * (c.time - z));
        t = c.time;
        record(EventKind::join, t, 0.0, c.service, 0, c.patience);
        acc_join.add(g0);
        ++joined;
        rem.clear();
        head = 0;
        rem.push_back(c.service);
        anchor_t = t;
        anchor_w = c.service;
        busy_start = t;
        busy_a_snap = acc_time.value();
        busy_as_snap = acc_join.value();
        joined_now = true;
        break;
      }
      if (capped) break;
      if (!joined_now) {
        switch (opt.mode) {
          case RunMode::cycle:
            acc_time.add(g0 * (thresh - z));
            t = thresh;
            record(EventKind::cycle_end, t, 0.0, 0.0, 0);
            end_time = t;
            end_reason = EndReason::cycle_end;
            break;
          case RunMode::horizon:
            acc_time.add(g0 * (thresh - z));
            t = thresh;
            end_time = t;
            end_reason = EndReason::horizon;
            out.end_workload = 0.0;
            break;
          case RunMode::long_idle: {
            auto& d = out.long_idle.emplace();
            d.idle_lengths = idle_lengths;
            d.busy_periods = busy_stats;
            d.first_long_idle = idle_lengths.size() + 1;
            d.long_idle_start = z;
            d.zeta = kappa * std::max(1.0, std::ceil(z / kappa));
            end_time = d.zeta;
            end_reason = EndReason::long_idle;
            break;
          }
          default:
            break;
        }
        done = true;
      }
      continue;
    }

    // busy
    double t_comp = t + active();
    const Candidate& c = tape.at(ci);
    double t_next = std::min(t_comp, c.time);

    if (opt.mode == RunMode::horizon && opt.horizon < t_next) {
      double w_hi = anchor_w - (t - anchor_t);
      double w_lo = anchor_w - (opt.horizon - anchor_t);
      busy_segment(w_hi, w_lo);
      t = opt.horizon;
      end_time = t;
      end_reason = EndReason::horizon;
      out.end_workload = std::max(w_lo, 0.0);
      break;
    }
    if (t_next > opt.caps.max_time) {
      capped = true;
      break;
    }

    double w_hi = anchor_w - (t - anchor_t);
    double w_lo = anchor_w - (t_next - anchor_t);

    if (t_comp <= c.time) {
      // completion; ties resolve in its favour so W stays right-continuous
      busy_segment(w_hi, w_lo);
      double dt = t_comp - t;
      active() -= dt;
      std::uint64_t l_pre = jobs();
      // an emptying completion happens, canonically, at anchor_t + anchor_W:
      // the zero-hit time is identical across disciplines by construction
      t = l_pre == 1 ? anchor_t + anchor_w : t_comp;
      record(EventKind::service_completion, t, l_pre == 1 ? 0.0 : std::max(w_lo, 0.0), 0.0, l_pre);
      if (lcfs) {
        rem.pop_back();
      } else {
        ++head;
        if (head > 64 && 2 * head > rem.size()) {
          rem.erase(rem.begin(), rem.begin() + static_cast<std::ptrdiff_t>(head));
          head = 0;
        }
      }
      if (jobs() == 0) {
        // canonical zero-hit time from the anchor, identical across disciplines
        t = anchor_t + anchor_w;
        record(EventKind::empty_hit, t, 0.0, 0.0, 0);
        busy_stats.push_back(
            {busy_start, t, acc_time.value() - busy_a_snap, acc_join.value() - busy_as_snap});
        anchor_t = t;
        anchor_w = 0.0;
      }
      continue;
    }

    // candidate strictly before the next completion
    busy_segment(w_hi, w_lo);
    double dt = c.time - t;
    active() -= dt;
    t = c.time;
    if (accepted(c)) {
      double w_pre = std::max(w_lo, 0.0);
      std::uint64_t l_pre = jobs();
      if (bounded && l_pre >= room + 1) {
        ++balk_r;
        record(EventKind::balk_room, t, w_pre, 0.0, l_pre, c.patience);
      } else if (c.patience < w_pre) {
        ++balk_p;
        record(EventKind::balk_patience, t, w_pre, 0.0, l_pre, c.patience);
      } else {
        ++joined;
        acc_join.add(g(w_pre));
        record(EventKind::join, t, w_pre, c.service, l_pre, c.patience);
        rem.push_back(c.service);
        anchor_t = t;
        anchor_w = w_pre + c.service;
      }
    }
    ++ci;
  }

  if (capped) {
    end_time = t;
    end_reason = EndReason::horizon;
  }

  out.path.end_time = end_time;
  out.path.end_reason = end_reason;
  out.path.capped = capped;

  auto& s = out.sample;
  s.horizon_kind = opt.mode == RunMode::cycle || opt.mode == RunMode::long_idle
                       ? HorizonKind::cycle
                       : (opt.mode == RunMode::busy_period ? HorizonKind::busy_period
                                                           : HorizonKind::horizon);
  s.duration = end_time;
  s.time_integral = acc_time.value();
  s.join_integral = acc_join.value();
  s.joined = joined;
  s.balked_patience = balk_p;
  s.balked_room = balk_r;
  s.capped = capped;

  if (out.long_idle) {
    auto& d = *out.long_idle;
    double a_bar = static_cast<double>(d.first_long_idle) * kappa * g0;
    double as_bar = static_cast<double>(d.first_long_idle) * g0;
    for (const auto& b : d.busy_periods) {
      a_bar += b.time_integral;
      as_bar += b.join_integral;
    }
    d.upper_time_integral = a_bar;
    d.upper_join_integral = as_bar;
  }

  return out;
}

// ---------------------------------------------------------------------------
// Per-operation wrappers. Each builds the replication's tape; random initial
// workloads come from the auxiliary lane so candidate alignment is untouched.

inline double resolve_initial_workload(const QueueSpec& spec, std::uint64_t seed,
                                       std::uint64_t rep) {
  switch (spec.init) {
    case InitKind::deterministic:
      return spec.init_x;
    case InitKind::random_service: {
      RandomStream aux(seed, rep, Lane::auxiliary);
      return spec.joint.service.quantile(aux.next_uniform_open());
    }
    case InitKind::empty:
      return 0.0;
  }
  return 0.0;
}

inline SimOutcome run_busy_period(const QueueSpec& spec, const CostFunction& g,
                                  std::uint64_t seed, std::uint64_t rep, const Caps& caps = {}) {
  ArrivalTape tape(seed, rep, spec.rate.lambda_h, spec.joint);
  EngineOptions opt;
  opt.mode = RunMode::busy_period;
  opt.caps = caps;
  return simulate(spec, g, tape, resolve_initial_workload(spec, seed, rep), opt);
}

inline SimOutcome run_cycle(const QueueSpec& spec, const CostFunction& g, std::uint64_t seed,
                            std::uint64_t rep, const Caps& caps = {}) {
  if (!spec.rate.kappa) throw std::invalid_argument("run_cycle: rate has no period");
  ArrivalTape tape(seed, rep, spec.rate.lambda_h, spec.joint);
  EngineOptions opt;
  opt.mode = RunMode::cycle;
  opt.caps = caps;
  return simulate(spec, g, tape, 0.0, opt);
}

inline SimOutcome run_horizon(const QueueSpec& spec, double horizon, const CostFunction& g,
                              std::uint64_t seed, std::uint64_t rep, const Caps& caps = {}) {
  if (!(horizon > 0.0)) throw std::invalid_argument("run_horizon: horizon must be positive");
  ArrivalTape tape(seed, rep, spec.rate.lambda_h, spec.joint);
  EngineOptions opt;
  opt.mode = RunMode::horizon;
  opt.horizon = horizon;
  opt.caps = caps;
  return simulate(spec, g, tape, resolve_initial_workload(spec, seed, rep), opt);
}

inline double time_average(const SimOutcome& o) {
  return o.sample.time_integral / o.sample.duration;
}

inline SimOutcome run_until_long_idle(const QueueSpec& spec, const CostFunction& g,
                                      std::uint64_t seed, std::uint64_t rep,
                                      const Caps& caps = {}) {
  if (!spec.rate.kappa) throw std::invalid_argument("run_until_long_idle: rate has no period");
  ArrivalTape tape(seed, rep, spec.rate.lambda_h, spec.joint);
  EngineOptions opt;
  opt.mode = RunMode::long_idle;
  opt.caps = caps;
  return simulate(spec, g, tape, 0.0, opt);
}

}  // namespace tvq

#endif
