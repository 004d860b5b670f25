#pragma once

// Attribute regression mathematics: height target transforms, sin-cos
// azimuth encoding, the gated attribute loss and its analytic gradients,
// plus a central-difference gradient checker.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "roofkit/common.hpp"

namespace roofkit::attr {

enum class HeightVariant { raw, linear, log_e, log100, log_normalized };

struct HeightScheme {
  HeightVariant variant = HeightVariant::log_normalized;
  double divisor = 110.0;  // linear
  double mu = 2.06;        // log_normalized: mean of training log-heights
  double sigma = 0.45;     // log_normalized: std of training log-heights

  void validate() const;
  std::string name() const;
  static HeightScheme from_name(const std::string& name);  // raw|linear|log|log100|lognorm
};

// Encoded regression target for a height in meters. Throws on h <= 0.
double height_encode(double h_m, const HeightScheme& scheme);

// Exact inverse of height_encode. Total for the log variants; a linear or
// raw decode of a negative value sets *out_of_range when provided.
double height_decode(double v, const HeightScheme& scheme, bool* out_of_range = nullptr);

// (cos phi, sin phi). Raw network outputs may be un-normalized.
struct AzimuthVector {
  double c = 1.0;
  double s = 0.0;

  double norm() const;
  AzimuthVector normalized() const;  // throws on zero vector
};

AzimuthVector azimuth_encode(double phi_deg);
double azimuth_decode(const AzimuthVector& v);  // atan2(s, c) mapped to [0, 360)

// 1 - <pred_normalized, (cos phi*, sin phi*)>, in [0, 2], with the gradient
// taken w.r.t. the raw (un-normalized) components.
struct AzimuthLoss {
  double value = 0.0;
  double d_c = 0.0;
  double d_s = 0.0;
};
AzimuthLoss azimuth_loss(const AzimuthVector& raw_pred, double target_phi_deg);

struct AttrTarget {
  double height_m = 0.0;    // h* > 0
  double angle_deg = 0.0;   // alpha* in [0, 90]
  double azimuth_deg = 0.0; // phi* in [0, 360)

  void validate() const;
};

struct LossWeights {
  double lambda_height = 0.5;
  double lambda_angle = 0.001;
  double lambda_azimuth = 1.0;
  double angle_gate_deg = 15.0;  // azimuth supervised only when alpha* > gate

  void validate() const;
};

struct AttrPrediction {
  double height_enc = 0.0;  // in encoded space
  double angle_deg = 0.0;
  AzimuthVector azimuth;    // raw (c, s)
};

struct AttrLossTerms {
  double total = 0.0;
  // Pre-weight residual terms; azimuth_raw is 0 when gated.
  double height_raw = 0.0;
  double angle_raw = 0.0;
  double azimuth_raw = 0.0;
  // Post-weight contributions (sum to total).
  double height_weighted = 0.0;
  double angle_weighted = 0.0;
  double azimuth_weighted = 0.0;
  bool azimuth_gated = false;  // alpha* <= gate, azimuth term skipped
  // Gradients of total w.r.t. the prediction.
  double d_height = 0.0;
  double d_angle = 0.0;
  double d_azimuth_c = 0.0;
  double d_azimuth_s = 0.0;
};

// Per-instance gated loss: lambda_h * (h - enc(h*))^2 + lambda_a * (a - a*)^2
// + lambda_phi * azimuth_loss * [alpha* > gate]. The indicator uses the
// ground-truth angle; gated instances contribute an exact 0 azimuth term.
AttrLossTerms attr_loss(const AttrPrediction& pred, const AttrTarget& target,
                        const LossWeights& weights, const HeightScheme& scheme);

struct BatchAttrLoss {
  double total = 0.0;  // mean of per-instance totals, 0 when empty
  double height_weighted = 0.0;
  double angle_weighted = 0.0;
  double azimuth_weighted = 0.0;
  std::size_t count = 0;
  bool empty = true;
};

// Arithmetic mean over instances in index order (Eq-style 1/N reduction).
BatchAttrLoss attr_loss_batch(std::span<const AttrPrediction> preds,
                              std::span<const AttrTarget> targets, const LossWeights& weights,
                              const HeightScheme& scheme);

// Central finite differences against an analytic gradient, component-wise.
// Returns the worst relative discrepancy |fd - g| / max(1e-8, |fd| + |g|).
// Throws when the loss evaluates non-finite. eps in [1e-7, 1e-3].
double finite_diff_check(const std::function<double(std::span<const double>)>& loss_fn,
                         std::span<const double> inputs, std::span<const double> analytic_grad,
                         double eps);

}  // namespace roofkit::attr
