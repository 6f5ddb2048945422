#include <catch2/catch_amalgamated.hpp>

#include "tvq/experiment.hpp"

TEST_CASE("deterministic drain busy period") {
  tvq::QueueSpec spec;
  spec.rate = tvq::RateFunction::constant(0.0, 1.0);
  spec.joint = tvq::JointLaw::infinite_patience(tvq::Marginal::exponential(1.0));
  spec.init = tvq::InitKind::deterministic;
  spec.init_x = 3.0;
  tvq::CostFunction g = tvq::CostFunction::power(1.0);
  auto out = tvq::run_busy_period(spec, g, 1, 0);
  CHECK(out.sample.duration == Catch::Approx(3.0).margin(1e-12));
  CHECK(out.sample.time_integral == Catch::Approx(4.5).margin(1e-12));
  CHECK(out.sample.joined == 0);
}
