#include "roofkit/attr.hpp"

#include <cmath>

namespace roofkit::attr {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kDegToRad = kPi / 180.0;
const double kLog100 = std::log(100.0);

}  // namespace

void HeightScheme::validate() const {
  if (divisor <= 0.0) throw InvalidInput("height scheme divisor must be positive");
  if (sigma <= 0.0) throw InvalidInput("height scheme sigma must be positive");
}

std::string HeightScheme::name() const {
  switch (variant) {
    case HeightVariant::raw: return "raw";
    case HeightVariant::linear: return "linear";
    case HeightVariant::log_e: return "log";
    case HeightVariant::log100: return "log100";
    case HeightVariant::log_normalized: return "lognorm";
  }
  return "unknown";
}

HeightScheme HeightScheme::from_name(const std::string& name) {
  HeightScheme s;
  if (name == "raw") s.variant = HeightVariant::raw;
  else if (name == "linear") s.variant = HeightVariant::linear;
  else if (name == "log") s.variant = HeightVariant::log_e;
  else if (name == "log100") s.variant = HeightVariant::log100;
  else if (name == "lognorm") s.variant = HeightVariant::log_normalized;
  else throw InvalidInput("unknown height scheme: " + name);
  return s;
}

double height_encode(double h_m, const HeightScheme& scheme) {
  scheme.validate();
  if (h_m <= 0.0) throw InvalidInput("height must be positive");
  switch (scheme.variant) {
    case HeightVariant::raw: return h_m;
    case HeightVariant::linear: return h_m / scheme.divisor;
    case HeightVariant::log_e: return std::log(h_m);
    case HeightVariant::log100: return std::log(h_m) / kLog100;
    case HeightVariant::log_normalized: return (std::log(h_m) - scheme.mu) / scheme.sigma;
  }
  throw InvalidInput("unknown height scheme variant");
}

double height_decode(double v, const HeightScheme& scheme, bool* out_of_range) {
  scheme.validate();
  if (out_of_range) *out_of_range = false;
  switch (scheme.variant) {
    case HeightVariant::raw:
      if (out_of_range && v <= 0.0) *out_of_range = true;
      return v;
    case HeightVariant::linear:
      if (out_of_range && v < 0.0) *out_of_range = true;
      return v * scheme.divisor;
    case HeightVariant::log_e: return std::exp(v);
    case HeightVariant::log100: return std::exp(v * kLog100);
    case HeightVariant::log_normalized: return std::exp(v * scheme.sigma + scheme.mu);
  }
  throw InvalidInput("unknown height scheme variant");
}

double AzimuthVector::norm() const { return std::hypot(c, s); }

AzimuthVector AzimuthVector::normalized() const {
  const double r = norm();
  if (r < 1e-12) throw InvalidInput("azimuth vector is (numerically) zero");
  return {c / r, s / r};
}

AzimuthVector azimuth_encode(double phi_deg) {
  const double rad = phi_deg * kDegToRad;
  return {std::cos(rad), std::sin(rad)};
}

double azimuth_decode(const AzimuthVector& v) {
  if (v.norm() < 1e-12) throw InvalidInput("cannot decode azimuth of a zero vector");
  double deg = std::atan2(v.s, v.c) / kDegToRad;
  if (deg < 0.0) deg += 360.0;
  if (deg >= 360.0) deg -= 360.0;
  return deg;
}

AzimuthLoss azimuth_loss(const AzimuthVector& raw_pred, double target_phi_deg) {
  const double r = raw_pred.norm();
  if (r < 1e-12) throw InvalidInput("azimuth loss needs a non-zero prediction vector");
  const AzimuthVector target = azimuth_encode(target_phi_deg);
  const double uc = raw_pred.c / r;
  const double us = raw_pred.s / r;
  const double dot = uc * target.c + us * target.s;

  AzimuthLoss out;
  out.value = 1.0 - dot;
  // d(1 - <v/|v|, t>)/dv = (-t + (v/|v|) <v/|v|, t>) / |v|
  out.d_c = (-target.c + uc * dot) / r;
  out.d_s = (-target.s + us * dot) / r;
  return out;
}

void AttrTarget::validate() const {
  if (height_m <= 0.0) throw InvalidInput("target height must be positive");
  if (angle_deg < 0.0 || angle_deg > 90.0) throw InvalidInput("target angle outside [0, 90]");
  if (azimuth_deg < 0.0 || azimuth_deg >= 360.0)
    throw InvalidInput("target azimuth outside [0, 360)");
}

void LossWeights::validate() const {
  if (lambda_height < 0.0 || lambda_angle < 0.0 || lambda_azimuth < 0.0 || angle_gate_deg < 0.0)
    throw InvalidInput("loss weights must be non-negative");
}

AttrLossTerms attr_loss(const AttrPrediction& pred, const AttrTarget& target,
                        const LossWeights& weights, const HeightScheme& scheme) {
  target.validate();
  weights.validate();

  AttrLossTerms out;
  const double h_residual = pred.height_enc - height_encode(target.height_m, scheme);
  const double a_residual = pred.angle_deg - target.angle_deg;

  out.height_raw = h_residual * h_residual;
  out.angle_raw = a_residual * a_residual;
  out.height_weighted = weights.lambda_height * out.height_raw;
  out.angle_weighted = weights.lambda_angle * out.angle_raw;
  out.d_height = 2.0 * weights.lambda_height * h_residual;
  out.d_angle = 2.0 * weights.lambda_angle * a_residual;

  // Strict inequality: supervision only when the ground-truth angle
  // exceeds the gate. Gated instances contribute an exact 0.
  if (target.angle_deg > weights.angle_gate_deg) {
    const AzimuthLoss az = azimuth_loss(pred.azimuth, target.azimuth_deg);
    out.azimuth_raw = az.value;
    out.azimuth_weighted = weights.lambda_azimuth * az.value;
    out.d_azimuth_c = weights.lambda_azimuth * az.d_c;
    out.d_azimuth_s = weights.lambda_azimuth * az.d_s;
  } else {
    out.azimuth_gated = true;
  }

  out.total = out.height_weighted + out.angle_weighted + out.azimuth_weighted;
  return out;
}

BatchAttrLoss attr_loss_batch(std::span<const AttrPrediction> preds,
                              std::span<const AttrTarget> targets, const LossWeights& weights,
                              const HeightScheme& scheme) {
  if (preds.size() != targets.size())
    throw InvalidInput("batch predictions and targets differ in length");

  BatchAttrLoss batch;
  batch.count = preds.size();
  batch.empty = preds.empty();
  if (batch.empty) return batch;

  // Fixed index order keeps the reduction deterministic.
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const AttrLossTerms terms = attr_loss(preds[i], targets[i], weights, scheme);
    batch.height_weighted += terms.height_weighted;
    batch.angle_weighted += terms.angle_weighted;
    batch.azimuth_weighted += terms.azimuth_weighted;
  }
  const double n = static_cast<double>(preds.size());
  batch.height_weighted /= n;
  batch.angle_weighted /= n;
  batch.azimuth_weighted /= n;
  batch.total = batch.height_weighted + batch.angle_weighted + batch.azimuth_weighted;
  return batch;
}

double finite_diff_check(const std::function<double(std::span<const double>)>& loss_fn,
                         std::span<const double> inputs, std::span<const double> analytic_grad,
                         double eps) {
  if (eps < 1e-7 || eps > 1e-3) throw InvalidInput("finite difference eps outside [1e-7, 1e-3]");
  if (inputs.size() != analytic_grad.size())
    throw InvalidInput("gradient length does not match input length");

  std::vector<double> x(inputs.begin(), inputs.end());
  double worst = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double f_plus = loss_fn(x);
    x[i] = saved - eps;
    const double f_minus = loss_fn(x);
    x[i] = saved;
    if (!std::isfinite(f_plus) || !std::isfinite(f_minus))
      throw InvalidInput("loss is non-finite near the evaluation point");
    const double fd = (f_plus - f_minus) / (2.0 * eps);
    const double g = analytic_grad[i];
    const double rel = std::abs(fd - g) / std::max(1e-8, std::abs(fd) + std::abs(g));
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace roofkit::attr
