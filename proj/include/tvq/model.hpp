#ifndef TVQ_MODEL_HPP
#define TVQ_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "tvq/streams.hpp"

namespace tvq {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

// ---------------------------------------------------------------------------
// Arrival intensity lambda(t), bounded by lambda_h, optionally periodic.

struct RateFunction {
  enum class Kind { constant, sinusoid, piecewise_constant };

  Kind kind = Kind::constant;
  double lambda_h = 1.0;
  std::optional<double> kappa;  // period, when the rate is periodic

  // constant
  double level = 1.0;
  // sinusoid: base + amplitude * sin(2*pi*t/kappa + phase)
  double base = 0.0;
  double amplitude = 0.0;
  double phase = 0.0;
  // piecewise-constant on [0, kappa): starts[i] <= t < starts[i+1] -> levels[i]
  std::vector<double> starts;
  std::vector<double> levels;

  static RateFunction constant(double level, double lambda_h) {
    RateFunction r;
    r.kind = Kind::constant;
    r.level = level;
    r.lambda_h = lambda_h;
    return r;
  }

  // A constant rate that is also declared periodic, for cycle semantics.
  static RateFunction constant_periodic(double level, double lambda_h, double kappa) {
    RateFunction r = constant(level, lambda_h);
    r.kappa = kappa;
    return r;
  }

  static RateFunction sinusoid(double base, double amplitude, double kappa, double lambda_h,
                               double phase = 0.0) {
    RateFunction r;
    r.kind = Kind::sinusoid;
    r.base = base;
    r.amplitude = amplitude;
    r.kappa = kappa;
    r.lambda_h = lambda_h;
    r.phase = phase;
    return r;
  }

  static RateFunction piecewise(std::vector<double> starts, std::vector<double> levels,
                                double kappa, double lambda_h) {
    RateFunction r;
    r.kind = Kind::piecewise_constant;
    r.starts = std::move(starts);
    r.levels = std::move(levels);
    r.kappa = kappa;
    r.lambda_h = lambda_h;
    return r;
  }

  double operator()(double t) const {
    if (t < 0.0) throw std::invalid_argument("eval_rate: negative time");
    switch (kind) {
      case Kind::constant:
        return level;
      case Kind::sinusoid:
        return base + amplitude * std::sin(2.0 * 3.14159265358979323846 * t / *kappa + phase);
      case Kind::piecewise_constant: {
        double u = std::fmod(t, *kappa);
        // last interval whose start is <= u
        auto it = std::upper_bound(starts.begin(), starts.end(), u);
        std::size_t i = (it == starts.begin()) ? 0 : static_cast<std::size_t>(it - starts.begin() - 1);
        return levels[i];
      }
    }
    return 0.0;
  }

  // analytic supremum per kind, used by validation alongside the grid check
  double max_value() const {
    switch (kind) {
      case Kind::constant:
        return level;
      case Kind::sinusoid:
        return base + std::abs(amplitude);
      case Kind::piecewise_constant:
        return levels.empty() ? 0.0 : *std::max_element(levels.begin(), levels.end());
    }
    return 0.0;
  }

  double min_value() const {
    switch (kind) {
      case Kind::constant:
        return level;
      case Kind::sinusoid:
        return base - std::abs(amplitude);
      case Kind::piecewise_constant:
        return levels.empty() ? 0.0 : *std::min_element(levels.begin(), levels.end());
    }
    return 0.0;
  }
};

// ---------------------------------------------------------------------------
// Parametric marginals for service and patience times. Patience marginals may
// carry an atom at +infinity (mixing weight), making the cdf a sub-distribution.

struct Marginal {
  enum class Kind { exponential, deterministic, pareto, uniform, infinite };

  Kind kind = Kind::exponential;
  double a = 1.0;  // rate | value | alpha | lower
  double b = 0.0;  // -    | -     | x_m   | upper
  double atom_at_infinity = 0.0;

  static Marginal exponential(double rate) { return {Kind::exponential, rate, 0.0, 0.0}; }
  static Marginal deterministic(double v) { return {Kind::deterministic, v, 0.0, 0.0}; }
  static Marginal pareto(double alpha, double x_m) { return {Kind::pareto, alpha, x_m, 0.0}; }
  static Marginal uniform(double lo, double hi) { return {Kind::uniform, lo, hi, 0.0}; }
  static Marginal infinite() { return {Kind::infinite, 0.0, 0.0, 0.0}; }

  Marginal with_atom_at_infinity(double w) const {
    Marginal m = *this;
    m.atom_at_infinity = w;
    return m;
  }

  // P{X <= x}; with an atom at +infinity this tops out at 1 - atom weight
  double cdf(double x) const {
    double base_cdf;
    switch (kind) {
      case Kind::exponential:
        base_cdf = x <= 0.0 ? 0.0 : -std::expm1(-a * x);
        break;
      case Kind::deterministic:
        base_cdf = x >= a ? 1.0 : 0.0;
        break;
      case Kind::pareto:
        base_cdf = x <= b ? 0.0 : 1.0 - std::pow(x / b, -a);
        break;
      case Kind::uniform:
        base_cdf = std::clamp((x - a) / (b - a), 0.0, 1.0);
        break;
      case Kind::infinite:
        return 0.0;
    }
    return (1.0 - atom_at_infinity) * base_cdf;
  }

  double quantile(double u) const {
    if (kind == Kind::infinite) return kInfinity;
    if (atom_at_infinity > 0.0) {
      if (u >= 1.0 - atom_at_infinity) return kInfinity;
      u /= 1.0 - atom_at_infinity;
    }
    switch (kind) {
      case Kind::exponential:
        return -std::log1p(-u) / a;
      case Kind::deterministic:
        return a;
      case Kind::pareto:
        return b * std::pow(1.0 - u, -1.0 / a);
      case Kind::uniform:
        return a + (b - a) * u;
      default:
        return kInfinity;
    }
  }

  double mean() const {
    if (kind == Kind::infinite || atom_at_infinity > 0.0) return kInfinity;
    switch (kind) {
      case Kind::exponential:
        return 1.0 / a;
      case Kind::deterministic:
        return a;
      case Kind::pareto:
        return a > 1.0 ? a * b / (a - 1.0) : kInfinity;
      case Kind::uniform:
        return 0.5 * (a + b);
      default:
        return kInfinity;
    }
  }

  // raw m'th moment
  double moment(int m) const {
    if (kind == Kind::infinite || atom_at_infinity > 0.0) return kInfinity;
    switch (kind) {
      case Kind::exponential: {
        double v = 1.0;
        for (int i = 1; i <= m; ++i) v *= i / a;
        return v;
      }
      case Kind::deterministic:
        return std::pow(a, m);
      case Kind::pareto:
        return a > m ? a * std::pow(b, m) / (a - m) : kInfinity;
      case Kind::uniform:
        return (std::pow(b, m + 1) - std::pow(a, m + 1)) / ((b - a) * (m + 1));
      default:
        return kInfinity;
    }
  }

  double second_moment() const { return moment(2); }

  // lim_{x->inf} P{X > x}; nonzero only for infinite patience or an atom
  double survival_limit() const {
    if (kind == Kind::infinite) return 1.0;
    return atom_at_infinity;
  }

  double min_support() const {
    switch (kind) {
      case Kind::exponential:
        return 0.0;
      case Kind::deterministic:
        return a;
      case Kind::pareto:
        return b;
      case Kind::uniform:
        return a;
      case Kind::infinite:
        return kInfinity;
    }
    return 0.0;
  }
};

// ---------------------------------------------------------------------------
// Joint law of (service S, patience Y). The theorems hold for any coupling of
// the marginals; four concrete constructors make dependence exercisable.

struct JointLaw {
  enum class Kind { product, comonotone, gaussian_copula, infinite_patience };

  Kind kind = Kind::product;
  Marginal service = Marginal::exponential(1.0);
  Marginal patience = Marginal::exponential(1.0);
  double correlation = 0.0;  // gaussian copula only

  static JointLaw product(Marginal s, Marginal y) {
    return {Kind::product, std::move(s), std::move(y), 0.0};
  }
  // S and Y share a common uniform; Y = H^{-1}(G(S)) pointwise
  static JointLaw comonotone(Marginal s, Marginal y) {
    return {Kind::comonotone, std::move(s), std::move(y), 0.0};
  }
  static JointLaw gaussian_copula(Marginal s, Marginal y, double rho) {
    return {Kind::gaussian_copula, std::move(s), std::move(y), rho};
  }
  static JointLaw infinite_patience(Marginal s) {
    return {Kind::infinite_patience, std::move(s), Marginal::infinite(), 0.0};
  }

  Marginal patience_marginal() const {
    return kind == Kind::infinite_patience ? Marginal::infinite() : patience;
  }

  // One (S, Y) draw. Each kind consumes a fixed number of variates per call
  // so that candidate-indexed marks stay aligned across coupled arms.
  std::pair<double, double> sample(RandomStream& marks) const {
    switch (kind) {
      case Kind::product: {
        double u1 = marks.next_uniform_open();
        double u2 = marks.next_uniform_open();
        return {service.quantile(u1), patience.quantile(u2)};
      }
      case Kind::comonotone: {
        double u = marks.next_uniform_open();
        return {service.quantile(u), patience.quantile(u)};
      }
      case Kind::gaussian_copula: {
        double z1 = marks.next_normal();
        double z2 = marks.next_normal();
        double zc = correlation * z1 + std::sqrt(1.0 - correlation * correlation) * z2;
        return {service.quantile(std_normal_cdf(z1)), patience.quantile(std_normal_cdf(zc))};
      }
      case Kind::infinite_patience: {
        double u1 = marks.next_uniform_open();
        return {service.quantile(u1), kInfinity};
      }
    }
    return {0.0, 0.0};
  }

  static double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }
};

// ---------------------------------------------------------------------------
// Holding cost g >= 0, lower semi-continuous by construction for every kind.

struct CostFunction {
  enum class Kind { constant, power, exp_decay, indicator_above, piecewise_linear };

  Kind kind = Kind::constant;
  double c = 1.0;      // constant level
  double p = 1.0;      // power exponent
  double alpha = 1.0;  // exp decay rate
  double s = 0.0;      // open-ray threshold: 1_{(s,inf)}
  std::vector<double> xs, ys;  // piecewise-linear knots; constant beyond the last
  bool has_antiderivative = true;

  static CostFunction constant(double c) {
    CostFunction g;
    g.kind = Kind::constant;
    g.c = c;
    return g;
  }
  static CostFunction power(double p) {
    CostFunction g;
    g.kind = Kind::power;
    g.p = p;
    return g;
  }
  static CostFunction exp_decay(double alpha) {
    CostFunction g;
    g.kind = Kind::exp_decay;
    g.alpha = alpha;
    return g;
  }
  static CostFunction indicator_above(double s) {
    CostFunction g;
    g.kind = Kind::indicator_above;
    g.s = s;
    return g;
  }
  static CostFunction piecewise_linear(std::vector<double> xs, std::vector<double> ys) {
    CostFunction g;
    g.kind = Kind::piecewise_linear;
    g.xs = std::move(xs);
    g.ys = std::move(ys);
    return g;
  }

  // Forces the quadrature path in segment integration; the function itself
  // is unchanged.
  CostFunction without_antiderivative() const {
    CostFunction g = *this;
    g.has_antiderivative = false;
    return g;
  }

  double operator()(double w) const {
    switch (kind) {
      case Kind::constant:
        return c;
      case Kind::power:
        return std::pow(w, p);
      case Kind::exp_decay:
        return std::exp(-alpha * w);
      case Kind::indicator_above:
        return w > s ? 1.0 : 0.0;
      case Kind::piecewise_linear: {
        if (w <= xs.front()) return ys.front();
        if (w >= xs.back()) return ys.back();
        auto it = std::upper_bound(xs.begin(), xs.end(), w);
        std::size_t i = static_cast<std::size_t>(it - xs.begin()) - 1;
        double f = (w - xs[i]) / (xs[i + 1] - xs[i]);
        return ys[i] + f * (ys[i + 1] - ys[i]);
      }
    }
    return 0.0;
  }

  // exact antiderivative: integral of g over [0, w]
  double antiderivative(double w) const {
    switch (kind) {
      case Kind::constant:
        return c * w;
      case Kind::power:
        return std::pow(w, p + 1.0) / (p + 1.0);
      case Kind::exp_decay:
        return -std::expm1(-alpha * w) / alpha;
      case Kind::indicator_above:
        return std::max(0.0, w - s);
      case Kind::piecewise_linear: {
        double acc = 0.0;
        double prev_x = 0.0;
        // [0, xs.front()] is flat at ys.front()
        double first = std::min(w, xs.front());
        if (first > 0.0) acc += ys.front() * first;
        prev_x = xs.front();
        if (w <= prev_x) return acc;
        for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
          double hi = std::min(w, xs[i + 1]);
          if (hi <= xs[i]) break;
          double y_hi = (*this)(hi);
          acc += 0.5 * (ys[i] + y_hi) * (hi - xs[i]);
          if (w <= xs[i + 1]) return acc;
        }
        acc += ys.back() * (w - xs.back());
        return acc;
      }
    }
    return 0.0;
  }
};

// ---------------------------------------------------------------------------
// Queue configuration.

enum class Discipline { fcfs, lcfs_pr };

enum class InitKind { deterministic, random_service, empty };

enum class HorizonKind { busy_period, cycle, horizon };

struct QueueSpec {
  RateFunction rate = RateFunction::constant(0.5, 0.5);
  JointLaw joint;
  Discipline discipline = Discipline::fcfs;
  std::optional<std::uint64_t> room;  // waiting room size for LCFS-PR; nullopt = infinite
  InitKind init = InitKind::deterministic;
  double init_x = 1.0;

  bool room_bounded() const { return discipline == Discipline::lcfs_pr && room.has_value(); }
};

struct Violation {
  std::string code;
  std::string message;
};

// Structured validation: grid checks over one period plus per-kind analytic
// extrema. run_kind decides the init/periodicity preconditions.
inline std::vector<Violation> validate_spec(const QueueSpec& spec, HorizonKind run_kind,
                                            const CostFunction* g = nullptr) {
  std::vector<Violation> out;
  const RateFunction& r = spec.rate;

  // absolute-plus-relative slack so e.g. base + amplitude == lambda_h survives rounding
  const double rate_tol = 1e-9 * std::max(1.0, r.lambda_h);
  if (r.max_value() > r.lambda_h + rate_tol || r.min_value() < -rate_tol) {
    out.push_back({"rate-exceeds-bound", "rate leaves [0, lambda_h] (analytic extrema)"});
  } else {
    double span = r.kappa.value_or(10.0);
    for (int i = 0; i <= 10000; ++i) {
      double t = span * i / 10000.0;
      double v = r(t);
      if (v < -rate_tol || v > r.lambda_h + rate_tol) {
        out.push_back({"rate-exceeds-bound", "rate leaves [0, lambda_h] at t=" + std::to_string(t)});
        break;
      }
    }
  }
  if (r.kappa) {
    for (int i = 0; i < 64; ++i) {
      double t = *r.kappa * (i * 0.993 / 64.0);
      if (std::abs(r(t) - r(t + *r.kappa)) > 1e-9 * std::max(1.0, r.lambda_h)) {
        out.push_back({"rate-not-periodic", "declared period does not hold on grid"});
        break;
      }
    }
  }

  if (run_kind == HorizonKind::cycle) {
    if (!r.kappa) out.push_back({"non-periodic-rate-for-cycle-run", "cycle runs need a periodic rate"});
    if (spec.init != InitKind::empty)
      out.push_back({"cycle-init-not-empty", "cycle runs start from an empty system"});
  }
  if (run_kind == HorizonKind::busy_period && spec.init == InitKind::empty) {
    out.push_back({"busy-period-init-empty", "busy-period runs need a nonempty initial state"});
  }
  if (spec.init == InitKind::deterministic && !(spec.init_x > 0.0)) {
    out.push_back({"nonpositive-initial-workload", "deterministic init requires x > 0"});
  }

  const Marginal& svc = spec.joint.service;
  bool svc_ok = true;
  switch (svc.kind) {
    case Marginal::Kind::exponential:
      svc_ok = svc.a > 0.0;
      break;
    case Marginal::Kind::deterministic:
      svc_ok = svc.a > 0.0;
      break;
    case Marginal::Kind::pareto:
      svc_ok = svc.a > 0.0 && svc.b > 0.0;
      break;
    case Marginal::Kind::uniform:
      svc_ok = svc.a >= 0.0 && svc.b > svc.a;
      break;
    case Marginal::Kind::infinite:
      svc_ok = false;  // service must be finite
      break;
  }
  if (!svc_ok || svc.atom_at_infinity != 0.0) {
    out.push_back({"nonpositive-service-support", "service marginal must have support in (0,inf)"});
  }

  if (g) {
    bool neg = false;
    switch (g->kind) {
      case CostFunction::Kind::constant:
        neg = g->c < 0.0;
        break;
      case CostFunction::Kind::piecewise_linear:
        neg = std::any_of(g->ys.begin(), g->ys.end(), [](double y) { return y < 0.0; });
        break;
      default:
        break;  // power, exp-decay, indicator are nonnegative by construction
    }
    if (neg) out.push_back({"negative-cost", "cost function takes negative values"});
  }

  return out;
}

}  // namespace tvq

#endif
