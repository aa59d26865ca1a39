#pragma once

#include <string>
#include <vector>

#include "platoon/engine.hpp"
#include "platoon/metrics.hpp"

namespace platoon {

inline constexpr const char* kColorLfbk = "#d62728";
inline constexpr const char* kColorDmpcQp = "#1f77b4";
inline constexpr const char* kColorDmpcLp = "#2ca02c";

const char* controller_color(ControllerKind kind);

// Deterministic SVG assembly: output bytes depend only on the drawing
// calls, never on locale or wall clock.
class SvgCanvas {
 public:
  SvgCanvas(int width, int height);

  void line(double x1, double y1, double x2, double y2,
            const std::string& stroke, double width = 1.0);
  void polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                const std::string& stroke, double width = 1.0,
                double opacity = 1.0);
  void rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none");
  void circle(double cx, double cy, double r, const std::string& fill);
  void text(double x, double y, const std::string& s, int size = 12,
            const std::string& anchor = "start",
            const std::string& fill = "#000000");

  int width() const { return width_; }
  int height() const { return height_; }
  std::string finalize() const;

 private:
  int width_;
  int height_;
  std::string body_;
};

struct ControllerTrace {
  std::string label;
  std::string color;
  const Telemetry* telemetry = nullptr;
};

// One row per controller, position and velocity panels side by side.
std::string render_trajectories(const std::vector<ControllerTrace>& panels);

struct RmseBarGroup {
  std::string label;
  std::string color;
  std::vector<VehicleStats> spacing;
  std::vector<VehicleStats> velocity;
};

// Grouped per-vehicle bars with 95% CI whiskers; spacing panel above
// velocity panel.
std::string render_rmse_bars(const std::vector<RmseBarGroup>& groups);

struct ScalingSeries {
  std::string label;
  std::string color;
  std::vector<double> per_vehicle_rmse;
};

// RMSE against vehicle index with a zoomed inset over the leading
// vehicles, where the curves are otherwise indistinguishable.
std::string render_scaling(const std::vector<ScalingSeries>& series);

}  // namespace platoon
