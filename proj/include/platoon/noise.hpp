#pragma once

#include <cstdint>
#include <random>

#include "platoon/dynamics.hpp"

namespace platoon {

/// Noise magnitudes and the master seed. All randomness in a simulation is a
/// pure function of this seed; per-vehicle substreams are derived with
/// substream() so results do not depend on evaluation order.
struct NoiseConfig {
  double dynamics_std_p = 0.0;  ///< per-step position noise std [m]
  double dynamics_std_v = 0.0;  ///< per-step velocity noise std [m/s]
  double sensing_std = 0.0;     ///< spacing measurement noise std [m]
  std::uint64_t seed = 0;
};

/// SplitMix64 finalizer; full-period 64-bit mixer.
std::uint64_t mix64(std::uint64_t z);

/// Derives an independent stream seed from (seed, id). Chain calls to build
/// hierarchical substreams, e.g. substream(substream(seed, trial), vehicle).
std::uint64_t substream(std::uint64_t seed, std::uint64_t id);

/// Deterministic Gaussian stream. Uses mt19937_64 (bit-exact across
/// platforms) and an explicit Box-Muller transform, since the distribution
/// adapters in <random> are implementation-defined.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

  /// Standard normal draw.
  double next();

 private:
  double uniform_open();  // (0, 1]

  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// step_dynamics plus independent additive Gaussian noise on each state
/// component. With zero stds the result is bit-identical to step_dynamics.
VehicleState step_dynamics_noisy(const VehicleState& x, double u,
                                 const DynamicsParams& params,
                                 const NoiseConfig& noise,
                                 GaussianStream& stream);

/// Noisy spacing measurement: (p_pred - p_ego) + N(0, sensing_std^2).
double measure_spacing(double p_pred, double p_ego, const NoiseConfig& noise,
                       GaussianStream& stream);

}  // namespace platoon
