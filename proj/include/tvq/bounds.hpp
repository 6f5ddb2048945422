#ifndef TVQ_BOUNDS_HPP
#define TVQ_BOUNDS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

#include "tvq/model.hpp"
#include "tvq/stats.hpp"
#include "tvq/streams.hpp"

namespace tvq {

// ---------------------------------------------------------------------------
// Stability of the dominating M/G/1+H queue: effective load below one.

enum class StabilityVerdict { stable, unstable, boundary };

struct StabilityReport {
  double rho_h = 0.0;          // offered load lambda_h * E[S]
  double patience_survival_limit = 0.0;
  double rho_eff = 0.0;
  StabilityVerdict verdict = StabilityVerdict::stable;
  bool infinite_mean_service = false;
};

inline StabilityReport stability_check(double lambda_h, const Marginal& service,
                                       const Marginal& patience) {
  StabilityReport r;
  double es = service.mean();
  if (!std::isfinite(es)) {
    r.infinite_mean_service = true;
    r.rho_h = kInfinity;
    r.rho_eff = kInfinity;
    r.verdict = StabilityVerdict::unstable;
    return r;
  }
  r.rho_h = lambda_h * es;
  r.patience_survival_limit = patience.survival_limit();
  r.rho_eff = r.rho_h * r.patience_survival_limit;
  r.verdict = r.rho_eff < 1.0 ? StabilityVerdict::stable
                              : (r.rho_eff > 1.0 ? StabilityVerdict::unstable
                                                 : StabilityVerdict::boundary);
  return r;
}

// ---------------------------------------------------------------------------
// Proposition 2 / eq. (heavy-tails-bound1) Monte Carlo bound samplers. The
// geometric index iota counts trials up to and including the first success,
// success probability e^{-kappa*lambda_h}, support {1, 2, ...}.

inline std::uint64_t sample_iota(double kappa, double lambda_h, RandomStream& rng) {
  double p = std::exp(-kappa * lambda_h);
  if (p >= 1.0) return 1;
  double u = rng.next_uniform_open();
  // inverse transform: P{iota > n} = (1-p)^n
  return 1 + static_cast<std::uint64_t>(std::floor(std::log(u) / std::log1p(-p)));
}

struct PropBoundSamples {
  std::vector<double> prop2;     // iota*kappa*g0 + sum_{i<iota} A_i
  std::vector<double> variant1;  // sum_{i<=iota} (A_i + g0*max{kappa,1})
  std::vector<std::uint64_t> iota;
};

inline PropBoundSamples sample_prop_bound(const std::function<double(RandomStream&)>& a_sampler,
                                          double kappa, double lambda_h, double g0,
                                          std::uint64_t reps, std::uint64_t seed) {
  PropBoundSamples out;
  out.prop2.reserve(reps);
  out.variant1.reserve(reps);
  for (std::uint64_t r = 0; r < reps; ++r) {
    RandomStream rng(seed, r, Lane::auxiliary);
    std::uint64_t iota = sample_iota(kappa, lambda_h, rng);
    double s1 = static_cast<double>(iota) * kappa * g0;
    double s2 = static_cast<double>(iota) * g0 * std::max(kappa, 1.0);
    for (std::uint64_t i = 0; i < iota; ++i) {
      double a = a_sampler(rng);
      if (i + 1 < iota) s1 += a;  // Proposition 2 sums the first iota-1 terms
      s2 += a;
    }
    out.prop2.push_back(s1);
    out.variant1.push_back(s2);
    out.iota.push_back(iota);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Theorem 3 geometric decompounding on a lattice. Sample values are rounded
// UP onto a power-of-two lattice, which can only lower each convolution CDF,
// so the computed J is a guaranteed lower bound on the true J (the bound
// stays conservative). Convolutions run through FFTW with per-step
// truncation: discarded mass lies beyond the largest grid point and can
// never return below it.

struct DecompoundResult {
  std::vector<double> u_grid;
  std::vector<double> J;
  double shift = 0.0;           // max{1, kappa}
  double p = 0.0;               // success probability e^{-kappa*lambda_h}
  double lattice_width = 0.0;
  std::uint64_t n_max = 0;
  double residual = 0.0;        // geometric mass beyond n_max
};

namespace bounds_detail {

class FftConvolver {
 public:
  explicit FftConvolver(std::size_t n) : n_(n) {
    buf_ = fftw_alloc_real(n);
    spec_ = fftw_alloc_complex(n / 2 + 1);
    fwd_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), buf_, spec_, FFTW_ESTIMATE);
    inv_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), spec_, buf_, FFTW_ESTIMATE);
  }
  ~FftConvolver() {
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(inv_);
    fftw_free(buf_);
    fftw_free(spec_);
  }
  FftConvolver(const FftConvolver&) = delete;
  FftConvolver& operator=(const FftConvolver&) = delete;

  std::vector<std::pair<double, double>> transform(const std::vector<double>& x) {
    load(x);
    fftw_execute(fwd_);
    std::vector<std::pair<double, double>> out(n_ / 2 + 1);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = {spec_[i][0], spec_[i][1]};
    return out;
  }

  // y <- truncate(conv(y, f)) where fhat = transform(f); keep bins [0, keep)
  void convolve_with(std::vector<double>& y,
                     const std::vector<std::pair<double, double>>& fhat, std::size_t keep) {
    load(y);
    fftw_execute(fwd_);
    for (std::size_t i = 0; i < fhat.size(); ++i) {
      double re = spec_[i][0] * fhat[i].first - spec_[i][1] * fhat[i].second;
      double im = spec_[i][0] * fhat[i].second + spec_[i][1] * fhat[i].first;
      spec_[i][0] = re;
      spec_[i][1] = im;
    }
    fftw_execute(inv_);
    y.assign(keep, 0.0);
    double scale = 1.0 / static_cast<double>(n_);
    for (std::size_t i = 0; i < keep; ++i) y[i] = std::max(buf_[i] * scale, 0.0);
  }

 private:
  void load(const std::vector<double>& x) {
    std::size_t k = std::min(x.size(), n_);
    for (std::size_t i = 0; i < k; ++i) buf_[i] = x[i];
    for (std::size_t i = k; i < n_; ++i) buf_[i] = 0.0;
  }

  std::size_t n_;
  double* buf_;
  fftw_complex* spec_;
  fftw_plan fwd_, inv_;
};

}  // namespace bounds_detail

inline DecompoundResult decompound_cdf(const EmpiricalDistribution& f_hat, double kappa,
                                       double lambda_h, const std::vector<double>& u_grid,
                                       double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("tol out of (0, 1)");
  if (u_grid.empty()) throw std::invalid_argument("empty u grid");

  DecompoundResult out;
  out.u_grid = u_grid;
  out.shift = std::max(1.0, kappa);
  out.p = std::exp(-kappa * lambda_h);
  const double p = out.p;

  double u_max = *std::max_element(u_grid.begin(), u_grid.end());
  double range = std::max(u_max - out.shift, 0.0);
  if (range == 0.0) {
    out.J.assign(u_grid.size(), 0.0);
    out.lattice_width = tol;
    out.n_max = 0;
    out.residual = 1.0;
    return out;
  }

  // truncation order: residual geometric mass (1-p)^n_max <= tol/2
  std::uint64_t n_max;
  if (p >= 1.0) {
    n_max = 1;
  } else {
    n_max = static_cast<std::uint64_t>(std::ceil(std::log(tol / 2.0) / std::log1p(-p)));
    n_max = std::clamp<std::uint64_t>(n_max, 1, 4096);
  }
  out.n_max = n_max;
  out.residual = p >= 1.0 ? 0.0 : std::pow(1.0 - p, static_cast<double>(n_max));

  // power-of-two lattice width: fine enough for tol, coarse enough to cap bins
  double h = std::exp2(std::floor(std::log2(tol / 2.0)));
  const double max_bins = std::exp2(18);
  if (range / h > max_bins) h = std::exp2(std::ceil(std::log2(range / max_bins)));
  out.lattice_width = h;

  std::size_t nb = static_cast<std::size_t>(std::floor(range / h)) + 1;

  // pmf of one jump, values rounded up to the lattice; mass beyond the grid
  // parks in an overflow counter (it never contributes to any J(u))
  std::vector<double> f(nb, 0.0);
  double w = 1.0 / static_cast<double>(f_hat.size());
  for (double x : f_hat.sorted()) {
    double bin = std::ceil(x / h - 1e-12);
    if (bin < 0.0) bin = 0.0;
    if (bin < static_cast<double>(nb)) {
      f[static_cast<std::size_t>(bin)] += w;
    }
  }

  std::size_t fft_n = 1;
  while (fft_n < 2 * nb) fft_n <<= 1;
  bounds_detail::FftConvolver conv(fft_n);
  auto fhat = conv.transform(f);

  // accumulate sum_n (1-p)^{n-1} p F^{*n}(u - shift) via running convolutions
  std::vector<double> cur = f;           // pmf of the n-fold sum
  std::vector<double> coeff_cdf(u_grid.size(), 0.0);
  double geo = p;                         // (1-p)^{n-1} p
  for (std::uint64_t n = 1; n <= n_max; ++n) {
    // CDF of the n-fold sum at each shifted grid point
    std::vector<double> csum(nb + 1, 0.0);
    for (std::size_t i = 0; i < nb; ++i) csum[i + 1] = csum[i] + cur[i];
    for (std::size_t k = 0; k < u_grid.size(); ++k) {
      double arg = u_grid[k] - out.shift;
      if (arg < 0.0) continue;
      std::size_t bin = static_cast<std::size_t>(std::floor(arg / h));
      if (bin >= nb) bin = nb - 1;
      coeff_cdf[k] += geo * csum[bin + 1];
    }
    if (n < n_max) {
      conv.convolve_with(cur, fhat, nb);
      geo *= 1.0 - p;
    }
  }
  out.J = std::move(coeff_cdf);
  for (double& v : out.J) v = std::min(v, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Theorems 4/5 finite-quantile tail diagnostics. These probe a limsup
// statement at finite u; the report is a trend check, never a verified limit.

struct TailPoint {
  double level = 0.0;      // requested quantile level
  double u = 0.0;          // sample quantile
  double survival = 0.0;   // empirical P{X > u}
  double reference = 0.0;  // theorem's reference tail at u
  double ratio = 0.0;
};

struct TailReport {
  std::vector<TailPoint> points;
  double theorem_bound = 0.0;  // (1 - e^{-kappa*lambda_h}) / ((1-rho_h) e^{-kappa*lambda_h})
  bool counts = false;         // Theorem 5 (eta*) scaling vs Theorem 4 (xi)
};

inline TailReport tail_ratio(const std::vector<double>& samples, const Marginal& service_G,
                             double rho_h, double kappa, double lambda_h, double g0,
                             const std::vector<double>& quantile_levels, bool counts) {
  if (!(rho_h < 1.0)) throw std::invalid_argument("tail_ratio requires rho_h < 1");
  EmpiricalDistribution d(samples);
  TailReport out;
  out.counts = counts;
  double ekl = std::exp(-kappa * lambda_h);
  out.theorem_bound = (1.0 - ekl) / ((1.0 - rho_h) * ekl);
  for (double q : quantile_levels) {
    TailPoint pt;
    pt.level = q;
    pt.u = d.quantile(q);
    pt.survival = d.survival(pt.u);
    double arg = (pt.u - g0 * std::max(kappa, 1.0)) * (1.0 - rho_h);
    if (counts) arg /= lambda_h;
    pt.reference = 1.0 - service_G.cdf(arg);
    pt.ratio = pt.reference > 0.0 ? pt.survival / pt.reference : kInfinity;
    out.points.push_back(pt);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classical M/G/1 closed forms used as independent validation oracles.

struct Mg1Oracles {
  double rho = 0.0;
  double busy_period_mean_factor = 0.0;  // E tau(x) = x * factor
  double pk_mean_workload = 0.0;         // lambda E[S^2] / (2 (1 - rho))
  double busy_count_mean = 0.0;          // customers served per busy period
};

inline Mg1Oracles mg1_oracles(double lambda_h, const Marginal& service_G) {
  Mg1Oracles o;
  double es = service_G.mean();
  if (!std::isfinite(es)) throw std::invalid_argument("unstable-input: infinite mean service");
  o.rho = lambda_h * es;
  if (o.rho >= 1.0) throw std::invalid_argument("unstable-input: rho >= 1");
  o.busy_period_mean_factor = 1.0 / (1.0 - o.rho);
  o.pk_mean_workload = lambda_h * service_G.second_moment() / (2.0 * (1.0 - o.rho));
  o.busy_count_mean = 1.0 / (1.0 - o.rho);
  return o;
}

// ---------------------------------------------------------------------------
// Application 5 / Theorem 6: moments of the per-cycle join count.

struct EtaMomentReport {
  MomentEstimate estimate;
  bool product_form = false;
  bool stable = false;
  bool service_moment_finite = false;
  bool theorem6_applicable = false;
  std::string note;
};

inline EtaMomentReport eta_moment_report(const std::vector<double>& eta_samples, int m,
                                         const JointLaw& joint, double lambda_h) {
  EtaMomentReport r;
  r.estimate = moment_estimate(eta_samples, m);
  r.product_form =
      joint.kind == JointLaw::Kind::product || joint.kind == JointLaw::Kind::infinite_patience;
  StabilityReport st = stability_check(lambda_h, joint.service, joint.patience_marginal());
  r.stable = st.verdict == StabilityVerdict::stable;
  r.service_moment_finite = m < 2 || std::isfinite(joint.service.moment(m));
  r.theorem6_applicable = r.product_form && r.stable && r.service_moment_finite;
  if (r.theorem6_applicable) {
    r.note = m == 1 ? "Theorem hypotheses hold: E eta* finite"
                    : "Theorem hypotheses hold: E (eta*)^m finite";
  } else {
    r.note = "Theorem hypotheses not all satisfied; estimate reported without a finiteness guarantee";
  }
  return r;
}

}  // namespace tvq

#endif
