#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "impopt/signals.hpp"
#include "impopt/util.hpp"

using namespace impopt;
using signals::Polynomial;
using signals::SignalKind;
using signals::SignalSpec;

TEST_CASE("triang hits its landmark values") {
  CHECK(signals::triang(0.0) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(signals::triang(M_PI / 2.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(signals::triang(M_PI) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(signals::triang(3.0 * M_PI / 2.0) == doctest::Approx(-1.0).epsilon(1e-15));
  // rising ramp of slope 2/pi through the origin
  CHECK(signals::triang(M_PI / 4.0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(signals::triang(-M_PI / 4.0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("triang is 2 pi periodic and stays in [-1, 1]") {
  util::Rng rng(3);
  for (int i = 0; i < 1000000; ++i) {
    const double t = rng.uniform(-1e3, 1e3);
    const double v = signals::triang(t);
    CHECK(v >= -1.0 - 1e-12);
    CHECK(v <= 1.0 + 1e-12);
    CHECK(signals::triang(t + 2.0 * M_PI) == doctest::Approx(v).epsilon(1e-9));
  }
}

TEST_CASE("internal models have the expected coefficients") {
  SignalSpec constant{SignalKind::Constant, 0.0, 1.0, 1, {}};
  auto p = signals::internal_model(constant);
  REQUIRE(p.coeffs.size() == 2);
  CHECK(p.coeffs[0] == doctest::Approx(-1.0));
  CHECK(p.coeffs[1] == doctest::Approx(1.0));

  SignalSpec sine{SignalKind::Sine, M_PI / 2.0, 1.0, 1, {}};
  p = signals::internal_model(sine);
  REQUIRE(p.coeffs.size() == 3);
  CHECK(p.coeffs[0] == doctest::Approx(1.0));
  CHECK(p.coeffs[1] == doctest::Approx(0.0));
  CHECK(p.coeffs[2] == doctest::Approx(1.0));

  SignalSpec tri{SignalKind::TriangularWave, 1.0, 1.0, 1, {}};
  p = signals::internal_model(tri);
  REQUIRE(p.coeffs.size() == 3);
  CHECK(p.coeffs[0] == doctest::Approx(1.0));
  CHECK(p.coeffs[1] == doctest::Approx(-2.0));
  CHECK(p.coeffs[2] == doctest::Approx(1.0));

  SignalSpec multi{SignalKind::MultiHarmonic, 0.5, 1.0, 3, {}};
  p = signals::internal_model(multi);
  CHECK(p.degree() == 7);  // 2L + 1
  CHECK(p.monic());
  signals::validate_internal_model(p);
}

TEST_CASE("degenerate multi-harmonic specs are rejected") {
  SignalSpec multi{SignalKind::MultiHarmonic, 2.0 * M_PI / 3.0, 1.0, 3, {}};
  CHECK_THROWS_AS(signals::internal_model(multi), std::invalid_argument);
}

TEST_CASE("validation accepts repeated unit roots and rejects off-circle roots") {
  CHECK_NOTHROW(signals::validate_internal_model(Polynomial{{1.0, -2.0, 1.0}}));
  CHECK_THROWS_AS(signals::validate_internal_model(Polynomial{{-2.0, 1.0}}),
                  std::invalid_argument);  // root at z = 2
  CHECK_THROWS_AS(signals::validate_internal_model(Polynomial{{-1.0, 2.0}}),
                  std::invalid_argument);  // not monic
}

// Every waveform must be annihilated by its own internal model: the samples
// satisfy sum_i p_i wave(k + i) = 0 on any segment where the waveform is
// smooth. For the triangular wave the recurrence only holds away from the
// slope breaks at omega k = pi/2 + j pi.
TEST_CASE("waveform samples satisfy the model recurrence") {
  const double omega = 1e-4 * M_PI;
  std::vector<SignalSpec> specs = {
      {SignalKind::Constant, 0.0, 2.5, 1, {}},
      {SignalKind::Sine, omega, 1.0, 1, {}},
      {SignalKind::Sine, 0.5, 3.0, 1, {}},
      {SignalKind::TriangularWave, omega, 1.0, 1, {}},
      {SignalKind::MultiHarmonic, 0.5, 1.0, 6, {}},
  };
  for (const auto& spec : specs) {
    const Polynomial p = signals::internal_model(spec);
    const int m = p.degree();
    double coeff_mass = 0.0;
    for (double c : p.coeffs) coeff_mass += std::abs(c);
    const double tol = 1e-9 * coeff_mass * spec.amplitude;

    for (long k = 0; k < 10000; ++k) {
      if (spec.kind == SignalKind::TriangularWave) {
        // skip windows containing a slope break
        const double lo = spec.omega * static_cast<double>(k);
        const double hi = spec.omega * static_cast<double>(k + m);
        const long j_lo = static_cast<long>(std::ceil((lo - M_PI / 2.0) / M_PI - 1e-12));
        if (M_PI / 2.0 + static_cast<double>(j_lo) * M_PI <= hi + 1e-12) continue;
      }
      double acc = 0.0;
      for (int i = 0; i <= m; ++i) acc += p.coeffs[i] * signals::eval_wave(spec, k + i);
      CHECK(std::abs(acc) <= tol);
    }
  }
}

TEST_CASE("eval_signal scales the wave onto the direction") {
  SignalSpec spec{SignalKind::Sine, 0.25, 2.0, 1, linalg::Vector::Zero(3)};
  spec.direction << 1.0, -1.0, 0.5;
  const auto v = signals::eval_signal(spec, 7);
  const double w = 2.0 * std::sin(0.25 * 7.0);
  CHECK(v(0) == doctest::Approx(w));
  CHECK(v(1) == doctest::Approx(-w));
  CHECK(v(2) == doctest::Approx(0.5 * w));

  SignalSpec bare{SignalKind::Sine, 0.25, 1.0, 1, {}};
  CHECK_THROWS_AS(signals::eval_signal(bare, 0), std::invalid_argument);
}
