#ifndef TVQ_STREAMS_HPP
#define TVQ_STREAMS_HPP

#include <cmath>
#include <cstdint>
#include <optional>

namespace tvq {

// Independent substreams of one replication. Couplings rely on the candidate
// (arrivals) lane and the thinning (acceptance) lane being separate, so the
// same homogeneous candidate process can be shared verbatim between arms.
enum class Lane : std::uint64_t { arrivals = 0, acceptance = 1, marks = 2, auxiliary = 3 };

// Counter-based generator: the n'th variate of a (seed, replication, lane)
// stream is a pure function of those four values. Replications can therefore
// run on any thread in any order and still see identical sequences.
class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t replication, Lane lane)
      : key_(derive_key(seed, replication, lane)) {}

  std::uint64_t next_u64() { return mix(key_ + (counter_++) * kGamma); }

  // uniform on [0,1)
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0,1), endpoints excluded; used for quantile transforms
  double next_uniform_open() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  // Exp(rate); rate == 0 yields +infinity (no event, ever)
  double next_exponential(double rate) {
    return -std::log(next_uniform_open()) / rate;
  }

  // standard normal via Box-Muller; consumes exactly two variates per call
  double next_normal() {
    double u1 = next_uniform_open();
    double u2 = next_uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
  }

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t rep, Lane lane) {
    std::uint64_t k = mix(seed + kGamma);
    k = mix(k ^ mix(rep + 0xd1b54a32d192ed03ull));
    k = mix(k ^ mix(static_cast<std::uint64_t>(lane) + 0x8cb92ba72f3d8dd7ull));
    return k;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

// Addresses the lanes of one replication.
struct StreamConfig {
  std::uint64_t seed = 0;
  std::uint64_t replication = 0;

  RandomStream lane(Lane l) const { return RandomStream(seed, replication, l); }
};

// First accepted point of an inhomogeneous Poisson process after t_now, by
// thinning: candidates at rate lambda_h (arrivals lane), each kept with
// probability rate(t)/lambda_h (acceptance lane). Returns nothing if no
// accepted candidate lands in (t_now, horizon].
template <class RateFn>
std::optional<double> next_arrival(RandomStream& arrivals, RandomStream& acceptance,
                                   const RateFn& rate, double lambda_h, double t_now,
                                   double horizon) {
  if (!(lambda_h > 0.0)) return std::nullopt;
  double t = t_now;
  while (true) {
    t += arrivals.next_exponential(lambda_h);
    if (t > horizon) return std::nullopt;
    double u = acceptance.next_uniform();
    if (u * lambda_h < rate(t)) return t;
  }
}

}  // namespace tvq

#endif
