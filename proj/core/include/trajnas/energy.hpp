#pragma once

namespace trajnas {

// Exponents of the scalarized objective. alpha must be negative (higher
// forecasting mAP lowers energy); beta and gamma must be non-negative.
struct EnergyWeights {
  double alpha = -1.0;
  double beta = 0.5;
  double gamma = 0.5;

  // Throws InvalidWeights when the sign constraints are violated.
  void validate() const;
};

// One candidate's measured (or surrogate) quality. map_det is carried for
// reporting only and never enters the energy.
struct CandidateMetrics {
  double latency_s = 0.0;
  double map_f = 0.0;
  double ade_m = 0.0;
  double fde_m = 0.0;
  double map_det = 0.0;

  // Throws InvalidMetrics on non-finite values or values outside their
  // domains (latency_s > 0, map_f/map_det in [0,1], ade_m/fde_m >= 0).
  void validate() const;
};

// Floor applied to map_f / ade_m / fde_m before exponentiation so that
// zero-error or zero-mAP candidates keep a finite, non-zero energy.
inline constexpr double kEnergyClampEpsilon = 1e-3;

// energy = latency_s * map_f^alpha * ade_m^beta * fde_m^gamma.
// Lower is better on every axis given the weight sign constraints.
double energy(const CandidateMetrics& m, const EnergyWeights& w);

}  // namespace trajnas
