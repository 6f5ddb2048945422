#ifndef TVQ_STATS_HPP
#define TVQ_STATS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace tvq {

// ---------------------------------------------------------------------------

class EmpiricalDistribution {
 public:
  explicit EmpiricalDistribution(std::vector<double> samples) : v_(std::move(samples)) {
    if (v_.empty()) throw std::invalid_argument("EmpiricalDistribution: empty sample");
    std::sort(v_.begin(), v_.end());
  }

  std::size_t size() const { return v_.size(); }
  const std::vector<double>& sorted() const { return v_; }
  double min() const { return v_.front(); }
  double max() const { return v_.back(); }

  // right-continuous ECDF: (# samples <= u) / n
  double ecdf(double u) const {
    auto it = std::upper_bound(v_.begin(), v_.end(), u);
    return static_cast<double>(it - v_.begin()) / static_cast<double>(v_.size());
  }

  // left-limit F(u-): (# samples < u) / n
  double ecdf_left(double u) const {
    auto it = std::lower_bound(v_.begin(), v_.end(), u);
    return static_cast<double>(it - v_.begin()) / static_cast<double>(v_.size());
  }

  double survival(double u) const { return 1.0 - ecdf(u); }

  // smallest sample value x with ecdf(x) >= q
  double quantile(double q) const {
    if (q <= 0.0) return v_.front();
    std::size_t i = static_cast<std::size_t>(std::ceil(q * static_cast<double>(v_.size())));
    if (i == 0) i = 1;
    if (i > v_.size()) throw std::out_of_range("quantile-beyond-sample");
    return v_[i - 1];
  }

 private:
  std::vector<double> v_;
};

inline double ecdf_eval(const EmpiricalDistribution& d, double u) { return d.ecdf(u); }

// ---------------------------------------------------------------------------
// One-sided test of X <=_st Z: dominance means F_X(u) >= F_Z(u) everywhere,
// so D+ = sup_u (F_Z(u) - F_X(u)) should be small. "consistent" never means
// proved; a finite sample cannot confirm <=_st.

enum class Verdict { consistent, rejected };

struct DominanceVerdict {
  double d_plus = 0.0;
  double critical = 0.0;
  Verdict verdict = Verdict::consistent;
  std::size_t n_lower = 0, n_upper = 0;
  bool permutation = false;
  double p_value = -1.0;  // permutation path only
};

namespace stats_detail {

inline double d_plus_statistic(const EmpiricalDistribution& lower,
                               const EmpiricalDistribution& upper) {
  double d = 0.0;
  for (double u : lower.sorted()) d = std::max(d, upper.ecdf(u) - lower.ecdf(u));
  for (double u : upper.sorted()) d = std::max(d, upper.ecdf(u) - lower.ecdf(u));
  return d;
}

}  // namespace stats_detail

inline DominanceVerdict test_st_dominance(const std::vector<double>& lower,
                                          const std::vector<double>& upper, double alpha,
                                          bool permutation_fallback = false,
                                          std::uint64_t perm_seed = 0x5eedu,
                                          std::size_t perm_rounds = 2000) {
  if (lower.empty() || upper.empty()) throw std::invalid_argument("empty-arm");
  if (!(alpha > 0.0 && alpha < 0.5)) throw std::invalid_argument("alpha out of (0, 0.5)");

  EmpiricalDistribution fl(lower), fu(upper);
  DominanceVerdict v;
  v.n_lower = fl.size();
  v.n_upper = fu.size();
  v.d_plus = stats_detail::d_plus_statistic(fl, fu);

  double n = static_cast<double>(fl.size()), m = static_cast<double>(fu.size());
  v.critical = std::sqrt(-std::log(alpha) / 2.0 * (n + m) / (n * m));

  bool small = fl.size() < 500 || fu.size() < 500;
  if (permutation_fallback && small) {
    // permutation null: exchange labels within the pooled sample
    v.permutation = true;
    std::vector<double> pool(lower);
    pool.insert(pool.end(), upper.begin(), upper.end());
    std::mt19937_64 rng(perm_seed);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < perm_rounds; ++r) {
      std::shuffle(pool.begin(), pool.end(), rng);
      EmpiricalDistribution pl(std::vector<double>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(fl.size())));
      EmpiricalDistribution pu(std::vector<double>(pool.begin() + static_cast<std::ptrdiff_t>(fl.size()), pool.end()));
      if (stats_detail::d_plus_statistic(pl, pu) >= v.d_plus) ++hits;
    }
    v.p_value = (static_cast<double>(hits) + 1.0) / (static_cast<double>(perm_rounds) + 1.0);
    v.verdict = v.p_value < alpha ? Verdict::rejected : Verdict::consistent;
  } else {
    v.verdict = v.d_plus > v.critical ? Verdict::rejected : Verdict::consistent;
  }
  return v;
}

// One-sample variant: is X <=_st Z where Z has known CDF F_Z? Dominance is
// contradicted when F_Z rises above the ECDF of X by more than the one-sample
// Smirnov allowance.
inline DominanceVerdict test_st_dominance_vs_cdf(const std::vector<double>& lower,
                                                 const std::function<double(double)>& upper_cdf,
                                                 const std::vector<double>& grid, double alpha) {
  if (lower.empty()) throw std::invalid_argument("empty-arm");
  EmpiricalDistribution fl(lower);
  DominanceVerdict v;
  v.n_lower = fl.size();
  v.n_upper = 0;
  double d = 0.0;
  auto probe = [&](double u) {
    // the ECDF can only jump up at sample points, so the supremum of
    // F_Z - F_X over each step interval is attained at a left limit
    d = std::max(d, upper_cdf(u) - fl.ecdf_left(u));
    d = std::max(d, upper_cdf(u) - fl.ecdf(u));
  };
  for (double u : fl.sorted()) probe(u);
  for (double u : grid) probe(u);
  v.d_plus = d;
  v.critical = std::sqrt(-std::log(alpha) / (2.0 * static_cast<double>(fl.size())));
  v.verdict = v.d_plus > v.critical ? Verdict::rejected : Verdict::consistent;
  return v;
}

// ---------------------------------------------------------------------------
// Moment and ratio estimation.

struct MomentEstimate {
  int order = 1;
  double estimate = 0.0;
  double standard_error = 0.0;
  double confidence = 0.95;
  std::vector<double> running_prefix;  // estimates at doubling prefix sizes
};

inline MomentEstimate moment_estimate(const std::vector<double>& samples, int m,
                                      double confidence = 0.95,
                                      std::uint64_t boot_seed = 0xb007u,
                                      std::size_t resamples = 1000) {
  if (m < 1) throw std::invalid_argument("moment order must be >= 1");
  if (samples.empty()) throw std::invalid_argument("empty sample");
  MomentEstimate out;
  out.order = m;
  out.confidence = confidence;

  std::vector<double> powers(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) powers[i] = std::pow(samples[i], m);
  double n = static_cast<double>(samples.size());
  out.estimate = std::accumulate(powers.begin(), powers.end(), 0.0) / n;

  std::mt19937_64 rng(boot_seed);
  std::uniform_int_distribution<std::size_t> pick(0, samples.size() - 1);
  double bs = 0.0, bs2 = 0.0;
  for (std::size_t r = 0; r < resamples; ++r) {
    double acc = 0.0;
    for (std::size_t i = 0; i < samples.size(); ++i) acc += powers[pick(rng)];
    double mean = acc / n;
    bs += mean;
    bs2 += mean * mean;
  }
  double rn = static_cast<double>(resamples);
  out.standard_error = std::sqrt(std::max(bs2 / rn - (bs / rn) * (bs / rn), 0.0));

  // heaviness diagnostic: instability of the running estimate over doublings
  for (std::size_t k = 16; k <= samples.size(); k *= 2) {
    double acc = std::accumulate(powers.begin(), powers.begin() + static_cast<std::ptrdiff_t>(k), 0.0);
    out.running_prefix.push_back(acc / static_cast<double>(k));
  }
  if (out.running_prefix.empty() || out.running_prefix.back() != out.estimate) {
    out.running_prefix.push_back(out.estimate);
  }
  return out;
}

struct RatioEstimate {
  double estimate = 0.0;
  double standard_error = 0.0;
  bool paired = false;
};

// ratio of means (regenerative estimator), never mean of ratios
inline RatioEstimate ratio_estimate(const std::vector<double>& num,
                                    const std::vector<double>& den, bool paired,
                                    std::uint64_t boot_seed = 0xa710u,
                                    std::size_t resamples = 1000) {
  if (num.empty() || den.empty()) throw std::invalid_argument("empty sample");
  if (paired && num.size() != den.size())
    throw std::invalid_argument("paired arms must have equal length");

  double n = static_cast<double>(num.size()), m = static_cast<double>(den.size());
  double mu_n = std::accumulate(num.begin(), num.end(), 0.0) / n;
  double mu_d = std::accumulate(den.begin(), den.end(), 0.0) / m;
  if (mu_d == 0.0) throw std::invalid_argument("zero-denominator-mean");

  RatioEstimate out;
  out.paired = paired;
  out.estimate = mu_n / mu_d;

  if (paired) {
    // bootstrap over replication indices
    std::mt19937_64 rng(boot_seed);
    std::uniform_int_distribution<std::size_t> pick(0, num.size() - 1);
    double bs = 0.0, bs2 = 0.0;
    std::size_t used = 0;
    for (std::size_t r = 0; r < resamples; ++r) {
      double an = 0.0, ad = 0.0;
      for (std::size_t i = 0; i < num.size(); ++i) {
        std::size_t j = pick(rng);
        an += num[j];
        ad += den[j];
      }
      if (ad == 0.0) continue;
      double ratio = an / ad;
      bs += ratio;
      bs2 += ratio * ratio;
      ++used;
    }
    if (used > 1) {
      double rn = static_cast<double>(used);
      out.standard_error = std::sqrt(std::max(bs2 / rn - (bs / rn) * (bs / rn), 0.0));
    }
  } else {
    // delta method for independent arms
    double vn = 0.0, vd = 0.0;
    for (double x : num) vn += (x - mu_n) * (x - mu_n);
    for (double x : den) vd += (x - mu_d) * (x - mu_d);
    vn /= std::max(n - 1.0, 1.0);
    vd /= std::max(m - 1.0, 1.0);
    out.standard_error =
        std::sqrt(vn / (n * mu_d * mu_d) + mu_n * mu_n * vd / (m * mu_d * mu_d * mu_d * mu_d));
  }
  return out;
}

}  // namespace tvq

#endif
