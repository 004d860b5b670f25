#include "roofkit/attr.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "doctest.h"

using namespace roofkit;
using namespace roofkit::attr;

namespace {

HeightScheme lognorm_default() { return HeightScheme{HeightVariant::log_normalized, 110.0, 2.06, 0.45}; }

}  // namespace

TEST_CASE("height_encode: fixed values per scheme") {
  CHECK(height_encode(110.0, HeightScheme::from_name("linear")) == doctest::Approx(1.0));
  CHECK(height_encode(std::exp(2.06), lognorm_default()) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(height_encode(std::exp(2.51), lognorm_default()) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(height_encode(7.5, HeightScheme::from_name("raw")) == 7.5);
  CHECK(height_encode(100.0, HeightScheme::from_name("log100")) == doctest::Approx(1.0));
  CHECK(height_encode(std::exp(1.0), HeightScheme::from_name("log")) == doctest::Approx(1.0));
}

TEST_CASE("height_encode: non-positive heights rejected") {
  CHECK_THROWS_AS(height_encode(0.0, lognorm_default()), InvalidInput);
  CHECK_THROWS_AS(height_encode(-3.0, HeightScheme::from_name("linear")), InvalidInput);
}

TEST_CASE("height_decode: fixed values") {
  CHECK(height_decode(0.0, lognorm_default()) == doctest::Approx(std::exp(2.06)).epsilon(1e-12));
  CHECK(height_decode(0.0, lognorm_default()) == doctest::Approx(7.8460).epsilon(1e-4));
  CHECK(height_decode(0.5, HeightScheme::from_name("linear")) == doctest::Approx(55.0));

  bool out_of_range = false;
  height_decode(-0.2, HeightScheme::from_name("linear"), &out_of_range);
  CHECK(out_of_range);
  height_decode(-0.2, lognorm_default(), &out_of_range);
  CHECK(!out_of_range);
}

TEST_CASE("height round trip and monotonicity for every scheme") {
  const char* names[] = {"raw", "linear", "log", "log100", "lognorm"};
  const double heights[] = {1.0, 3.2, 47.0, 109.0};
  for (const char* name : names) {
    const HeightScheme scheme = HeightScheme::from_name(name);
    double prev = -1e300;
    for (double h : heights) {
      const double enc = height_encode(h, scheme);
      CHECK(height_decode(enc, scheme) == doctest::Approx(h).epsilon(1e-9));
      CHECK(enc > prev);  // strictly increasing
      prev = enc;
    }
  }
}

TEST_CASE("lognorm targets of a log-normal sample standardize") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> log_height(2.06, 0.45);
  const HeightScheme scheme = lognorm_default();
  const int n = 20000;
  double sum = 0.0, sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double v = height_encode(std::exp(log_height(rng)), scheme);
    sum += v;
    sq += v * v;
  }
  const double mean = sum / n;
  const double var = sq / n - mean * mean;
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 0.02);
}

TEST_CASE("azimuth encode/decode: quadrants and wrap") {
  CHECK(azimuth_decode({1.0, 0.0}) == 0.0);
  CHECK(azimuth_decode({0.0, 1.0}) == doctest::Approx(90.0));
  CHECK(azimuth_decode(azimuth_encode(350.0)) == doctest::Approx(350.0).epsilon(1e-12));
  CHECK(azimuth_decode(azimuth_encode(-10.0)) == doctest::Approx(350.0).epsilon(1e-12));
  for (double phi : {0.0, 45.0, 123.456, 250.0, 359.9}) {
    const double back = azimuth_decode(azimuth_encode(phi));
    CHECK(back == doctest::Approx(phi).epsilon(1e-11));
    CHECK(back >= 0.0);
    CHECK(back < 360.0);
  }
  CHECK_THROWS_AS(azimuth_decode({0.0, 0.0}), InvalidInput);
}

TEST_CASE("azimuth_loss: aligned, opposite, orthogonal") {
  for (double phi : {0.0, 30.0, 275.0}) {
    CHECK(azimuth_loss(azimuth_encode(phi), phi).value == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(azimuth_loss(azimuth_encode(phi + 180.0), phi).value == doctest::Approx(2.0));
    CHECK(azimuth_loss(azimuth_encode(phi + 90.0), phi).value == doctest::Approx(1.0));
  }
  CHECK_THROWS_AS(azimuth_loss({0.0, 0.0}, 10.0), InvalidInput);
}

TEST_CASE("azimuth_loss: invariant under common rotation") {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  for (int k = 0; k < 100; ++k) {
    const double pred = angle(rng);
    const double target = angle(rng);
    const double shift = angle(rng);
    const double a = azimuth_loss(azimuth_encode(pred), target).value;
    const double b =
        azimuth_loss(azimuth_encode(std::fmod(pred + shift, 360.0)),
                     std::fmod(target + shift, 360.0))
            .value;
    CHECK(a == doctest::Approx(b).epsilon(1e-10));
  }
}

TEST_CASE("azimuth_loss: un-normalized predictions are normalized first") {
  const AzimuthVector raw{3.0, 0.0};  // same direction as (1, 0)
  CHECK(azimuth_loss(raw, 0.0).value == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(azimuth_loss(raw, 180.0).value == doctest::Approx(2.0));
}

TEST_CASE("attr_loss: gate zeroes the azimuth term for flat ground truth") {
  const HeightScheme scheme = lognorm_default();
  const LossWeights weights;
  const AttrTarget target{6.0, 10.0, 45.0};  // alpha* = 10 < 15

  AttrPrediction pred;
  pred.height_enc = height_encode(6.0, scheme);
  pred.angle_deg = 10.0;
  pred.azimuth = azimuth_encode(45.0);
  const AttrLossTerms aligned = attr_loss(pred, target, weights, scheme);

  pred.azimuth = azimuth_encode(225.0);  // opposite direction
  const AttrLossTerms opposite = attr_loss(pred, target, weights, scheme);

  CHECK(aligned.azimuth_gated);
  CHECK(aligned.azimuth_weighted == 0.0);
  CHECK(aligned.total == opposite.total);  // bit-identical
  CHECK(aligned.d_azimuth_c == 0.0);
  CHECK(aligned.d_azimuth_s == 0.0);
}

TEST_CASE("attr_loss: perfect prediction has zero loss") {
  const HeightScheme scheme = lognorm_default();
  const AttrTarget target{9.5, 40.0, 120.0};
  AttrPrediction pred;
  pred.height_enc = height_encode(9.5, scheme);
  pred.angle_deg = 40.0;
  pred.azimuth = azimuth_encode(120.0);
  const AttrLossTerms terms = attr_loss(pred, target, LossWeights{}, scheme);
  CHECK(terms.total == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("attr_loss: default-weight arithmetic example") {
  // Height residual 0.5 in encoded space, angle error 10 deg, alpha* = 5
  // (gated): total = 0.5*0.25 + 0.001*100 + 0 = 0.225.
  const HeightScheme scheme = lognorm_default();
  const AttrTarget target{6.0, 5.0, 200.0};
  AttrPrediction pred;
  pred.height_enc = height_encode(6.0, scheme) + 0.5;
  pred.angle_deg = 15.0;
  pred.azimuth = azimuth_encode(13.0);
  const AttrLossTerms terms = attr_loss(pred, target, LossWeights{}, scheme);
  CHECK(terms.total == doctest::Approx(0.225).epsilon(1e-12));
  CHECK(terms.height_weighted == doctest::Approx(0.125));
  CHECK(terms.angle_weighted == doctest::Approx(0.1));
  CHECK(terms.azimuth_weighted == 0.0);
}

TEST_CASE("attr_loss: boundary angle is gated (strict inequality)") {
  const HeightScheme scheme = lognorm_default();
  const AttrTarget at_gate{6.0, 15.0, 10.0};
  AttrPrediction pred;
  pred.height_enc = height_encode(6.0, scheme);
  pred.angle_deg = 15.0;
  pred.azimuth = azimuth_encode(190.0);
  CHECK(attr_loss(pred, at_gate, LossWeights{}, scheme).azimuth_gated);

  const AttrTarget above{6.0, 15.0 + 1e-9, 10.0};
  CHECK(!attr_loss(pred, above, LossWeights{}, scheme).azimuth_gated);
}

TEST_CASE("attr_loss_batch: mean reduction and empty batch") {
  const HeightScheme scheme = lognorm_default();
  const LossWeights weights;

  const BatchAttrLoss empty = attr_loss_batch({}, {}, weights, scheme);
  CHECK(empty.empty);
  CHECK(empty.total == 0.0);

  std::vector<AttrTarget> targets = {{6.0, 30.0, 10.0}, {3.0, 5.0, 200.0}};
  std::vector<AttrPrediction> preds(2);
  preds[0] = {height_encode(6.0, scheme) + 1.0, 30.0, azimuth_encode(10.0)};
  preds[1] = {height_encode(3.0, scheme), 5.0, azimuth_encode(200.0)};
  const BatchAttrLoss batch = attr_loss_batch(preds, targets, weights, scheme);
  CHECK(batch.count == 2);
  // Single non-zero term: lambda_h * 1 / N.
  CHECK(batch.total == doctest::Approx(0.5 / 2.0));
}

TEST_CASE("attr_loss_batch: perturbing gated azimuths is bit-identical") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  std::uniform_real_distribution<double> slope(0.0, 90.0);
  std::uniform_real_distribution<double> height(1.0, 40.0);
  const HeightScheme scheme = lognorm_default();
  const LossWeights weights;

  std::vector<AttrTarget> targets;
  std::vector<AttrPrediction> preds;
  for (int i = 0; i < 64; ++i) {
    const AttrTarget t{height(rng), slope(rng), angle(rng)};
    targets.push_back(t);
    preds.push_back({height_encode(t.height_m, scheme) + 0.1, t.angle_deg + 2.0,
                     azimuth_encode(angle(rng))});
  }
  const double before = attr_loss_batch(preds, targets, weights, scheme).total;

  std::vector<AttrPrediction> perturbed = preds;
  bool changed_any = false;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i].angle_deg <= weights.angle_gate_deg) {
      perturbed[i].azimuth = azimuth_encode(angle(rng));
      changed_any = true;
    }
  }
  REQUIRE(changed_any);
  const double after = attr_loss_batch(perturbed, targets, weights, scheme).total;
  CHECK(std::memcmp(&before, &after, sizeof(double)) == 0);
}

TEST_CASE("finite_diff_check: quadratic sanity case") {
  auto quad = [](std::span<const double> x) {
    return 3.0 * x[0] * x[0] - 2.0 * x[0] * x[1] + 0.5 * x[1] * x[1] + 4.0 * x[0];
  };
  const std::vector<double> x = {1.3, -0.7};
  const std::vector<double> grad = {6.0 * x[0] - 2.0 * x[1] + 4.0, -2.0 * x[0] + x[1]};
  CHECK(finite_diff_check(quad, x, grad, 1e-5) < 1e-8);
}

TEST_CASE("finite_diff_check: azimuth_loss gradients at random points") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> comp(-2.0, 2.0);
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    AzimuthVector v{comp(rng), comp(rng)};
    if (v.norm() < 0.2) v.c += 1.0;  // keep away from the singular origin
    const double target = angle(rng);
    const AzimuthLoss loss = azimuth_loss(v, target);
    auto fn = [&](std::span<const double> x) {
      return azimuth_loss({x[0], x[1]}, target).value;
    };
    const std::vector<double> inputs = {v.c, v.s};
    const std::vector<double> grad = {loss.d_c, loss.d_s};
    worst = std::max(worst, finite_diff_check(fn, inputs, grad, 1e-5));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("finite_diff_check: attr_loss gradients away from the gate boundary") {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> unit(-1.5, 1.5);
  std::uniform_real_distribution<double> angle(0.0, 360.0);
  std::uniform_real_distribution<double> height(1.0, 60.0);
  const HeightScheme scheme = lognorm_default();
  const LossWeights weights;

  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    double gt_angle = std::uniform_real_distribution<double>(0.0, 90.0)(rng);
    if (std::abs(gt_angle - weights.angle_gate_deg) < 1.0) gt_angle += 2.0;
    const AttrTarget target{height(rng), gt_angle, angle(rng)};
    AzimuthVector v{unit(rng), unit(rng)};
    if (v.norm() < 0.2) v.s += 1.0;
    const AttrPrediction pred{unit(rng), angle(rng) / 4.0, v};
    const AttrLossTerms terms = attr_loss(pred, target, weights, scheme);
    auto fn = [&](std::span<const double> x) {
      return attr_loss({x[0], x[1], {x[2], x[3]}}, target, weights, scheme).total;
    };
    const std::vector<double> inputs = {pred.height_enc, pred.angle_deg, v.c, v.s};
    const std::vector<double> grad = {terms.d_height, terms.d_angle, terms.d_azimuth_c,
                                      terms.d_azimuth_s};
    worst = std::max(worst, finite_diff_check(fn, inputs, grad, 1e-5));
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("finite_diff_check: argument validation") {
  auto fn = [](std::span<const double> x) { return x[0]; };
  const std::vector<double> x = {1.0};
  const std::vector<double> g = {1.0};
  CHECK_THROWS_AS(finite_diff_check(fn, x, g, 1e-2), InvalidInput);
  auto bad = [](std::span<const double>) { return std::numeric_limits<double>::infinity(); };
  CHECK_THROWS_AS(finite_diff_check(bad, x, g, 1e-5), InvalidInput);
}

TEST_CASE("scheme parsing round trip and validation") {
  for (const char* name : {"raw", "linear", "log", "log100", "lognorm"}) {
    CHECK(HeightScheme::from_name(name).name() == name);
  }
  CHECK_THROWS_AS(HeightScheme::from_name("cubic"), InvalidInput);
  HeightScheme bad;
  bad.sigma = 0.0;
  CHECK_THROWS_AS(bad.validate(), InvalidInput);
}
