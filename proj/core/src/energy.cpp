#include "trajnas/energy.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "trajnas/errors.hpp"

namespace trajnas {

namespace {

void require_finite(double v, const char* field) {
  if (!std::isfinite(v))
    throw InvalidMetrics(std::string(field) + " is not finite");
}

}  // namespace

void EnergyWeights::validate() const {
  require_finite(alpha, "alpha");
  require_finite(beta, "beta");
  require_finite(gamma, "gamma");
  if (alpha >= 0.0)
    throw InvalidWeights("alpha must be negative, got " +
                         std::to_string(alpha));
  if (beta < 0.0)
    throw InvalidWeights("beta must be >= 0, got " + std::to_string(beta));
  if (gamma < 0.0)
    throw InvalidWeights("gamma must be >= 0, got " + std::to_string(gamma));
}

void CandidateMetrics::validate() const {
  require_finite(latency_s, "latency_s");
  require_finite(map_f, "map_f");
  require_finite(ade_m, "ade_m");
  require_finite(fde_m, "fde_m");
  require_finite(map_det, "map_det");
  if (latency_s <= 0.0)
    throw InvalidMetrics("latency_s must be > 0, got " +
                         std::to_string(latency_s));
  if (map_f < 0.0 || map_f > 1.0)
    throw InvalidMetrics("map_f must be in [0,1], got " +
                         std::to_string(map_f));
  if (map_det < 0.0 || map_det > 1.0)
    throw InvalidMetrics("map_det must be in [0,1], got " +
                         std::to_string(map_det));
  if (ade_m < 0.0)
    throw InvalidMetrics("ade_m must be >= 0, got " + std::to_string(ade_m));
  if (fde_m < 0.0)
    throw InvalidMetrics("fde_m must be >= 0, got " + std::to_string(fde_m));
}

double energy(const CandidateMetrics& m, const EnergyWeights& w) {
  w.validate();
  m.validate();
  const double map_f = std::max(m.map_f, kEnergyClampEpsilon);
  const double ade = std::max(m.ade_m, kEnergyClampEpsilon);
  const double fde = std::max(m.fde_m, kEnergyClampEpsilon);
  return m.latency_s * std::pow(map_f, w.alpha) * std::pow(ade, w.beta) *
         std::pow(fde, w.gamma);
}

}  // namespace trajnas
