#include "platoon/noise.hpp"

#include <cmath>

namespace platoon {

std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::uint64_t substream(std::uint64_t seed, std::uint64_t id) {
  return mix64(seed ^ mix64(id + 0x632be59bd9b4e019ull));
}

double GaussianStream::uniform_open() {
  // 53-bit mantissa draw mapped to (0, 1].
  const std::uint64_t bits = engine_() >> 11;
  return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

double GaussianStream::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open();
  const double u2 = uniform_open();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

VehicleState step_dynamics_noisy(const VehicleState& x, double u,
                                 const DynamicsParams& params,
                                 const NoiseConfig& noise,
                                 GaussianStream& stream) {
  VehicleState next = step_dynamics(x, u, params);
  if (noise.dynamics_std_p > 0.0) next.p += noise.dynamics_std_p * stream.next();
  if (noise.dynamics_std_v > 0.0) next.v += noise.dynamics_std_v * stream.next();
  return next;
}

double measure_spacing(double p_pred, double p_ego, const NoiseConfig& noise,
                       GaussianStream& stream) {
  double gap = p_pred - p_ego;
  if (noise.sensing_std > 0.0) gap += noise.sensing_std * stream.next();
  return gap;
}

}  // namespace platoon
