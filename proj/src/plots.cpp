#include "platoon/svg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace platoon {

namespace {

std::string num(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

std::string escape_text(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      default: out += c;
    }
  }
  return out;
}

// Pixel box plus data range; y grows upward in data space.
struct AxesBox {
  double x0 = 0, y0 = 0, w = 0, h = 0;
  double xmin = 0, xmax = 1, ymin = 0, ymax = 1;

  double px(double x) const { return x0 + (x - xmin) / (xmax - xmin) * w; }
  double py(double y) const { return y0 + h - (y - ymin) / (ymax - ymin) * h; }
};

void pad_range(double& lo, double& hi, double frac) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
    return;
  }
  const double pad = (hi - lo) * frac;
  lo -= pad;
  hi += pad;
}

double nice_step(double range) {
  const double raw = range / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  const double frac = raw / mag;
  double nice = 10.0;
  if (frac <= 1.5) nice = 1.0;
  else if (frac <= 3.5) nice = 2.0;
  else if (frac <= 7.5) nice = 5.0;
  return nice * mag;
}

void draw_frame(SvgCanvas& svg, const AxesBox& box, const std::string& title,
                const std::string& xlabel, const std::string& ylabel,
                bool tick_labels = true) {
  svg.rect(box.x0, box.y0, box.w, box.h, "none", "#333333");
  const int label_size = tick_labels ? 10 : 8;

  const double xstep = nice_step(box.xmax - box.xmin);
  for (double x = std::ceil(box.xmin / xstep) * xstep; x <= box.xmax + 1e-9;
       x += xstep) {
    const double p = box.px(x);
    svg.line(p, box.y0 + box.h, p, box.y0 + box.h + 4, "#333333");
    if (tick_labels) {
      svg.text(p, box.y0 + box.h + 15, num(x), label_size, "middle");
    }
  }
  const double ystep = nice_step(box.ymax - box.ymin);
  for (double y = std::ceil(box.ymin / ystep) * ystep; y <= box.ymax + 1e-9;
       y += ystep) {
    const double p = box.py(y);
    svg.line(box.x0 - 4, p, box.x0, p, "#333333");
    if (tick_labels) {
      svg.text(box.x0 - 7, p + 3, num(y), label_size, "end");
    }
  }
  if (!title.empty()) {
    svg.text(box.x0 + box.w / 2, box.y0 - 8, title, 12, "middle");
  }
  if (!xlabel.empty()) {
    svg.text(box.x0 + box.w / 2, box.y0 + box.h + 30, xlabel, 11, "middle");
  }
  if (!ylabel.empty()) {
    // Rotated y labels complicate the writer; keep it above the axis.
    svg.text(box.x0 - 34, box.y0 - 8, ylabel, 11, "start");
  }
}

void draw_series_line(SvgCanvas& svg, const AxesBox& box,
                      const std::vector<double>& xs,
                      const std::vector<double>& ys, const std::string& color,
                      double width, double opacity) {
  std::vector<double> px(xs.size());
  std::vector<double> py(ys.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    px[i] = box.px(xs[i]);
    py[i] = box.py(ys[i]);
  }
  svg.polyline(px, py, color, width, opacity);
}

}  // namespace

const char* controller_color(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::Lfbk: return kColorLfbk;
    case ControllerKind::DmpcQp: return kColorDmpcQp;
    case ControllerKind::DmpcLp: return kColorDmpcLp;
  }
  return "#000000";
}

SvgCanvas::SvgCanvas(int width, int height) : width_(width), height_(height) {}

void SvgCanvas::line(double x1, double y1, double x2, double y2,
                     const std::string& stroke, double width) {
  body_ += "<line x1=\"" + num(x1) + "\" y1=\"" + num(y1) + "\" x2=\"" +
           num(x2) + "\" y2=\"" + num(y2) + "\" stroke=\"" + stroke +
           "\" stroke-width=\"" + num(width) + "\"/>\n";
}

void SvgCanvas::polyline(const std::vector<double>& xs,
                         const std::vector<double>& ys,
                         const std::string& stroke, double width,
                         double opacity) {
  if (xs.size() != ys.size()) {
    throw std::invalid_argument("polyline: size mismatch");
  }
  if (xs.empty()) return;
  body_ += "<polyline fill=\"none\" stroke=\"" + stroke +
           "\" stroke-width=\"" + num(width) + "\"";
  if (opacity < 1.0) body_ += " stroke-opacity=\"" + num(opacity) + "\"";
  body_ += " points=\"";
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) body_ += ' ';
    body_ += num(xs[i]) + "," + num(ys[i]);
  }
  body_ += "\"/>\n";
}

void SvgCanvas::rect(double x, double y, double w, double h,
                     const std::string& fill, const std::string& stroke) {
  body_ += "<rect x=\"" + num(x) + "\" y=\"" + num(y) + "\" width=\"" +
           num(w) + "\" height=\"" + num(h) + "\" fill=\"" + fill + "\"";
  if (stroke != "none") body_ += " stroke=\"" + stroke + "\"";
  body_ += "/>\n";
}

void SvgCanvas::circle(double cx, double cy, double r,
                       const std::string& fill) {
  body_ += "<circle cx=\"" + num(cx) + "\" cy=\"" + num(cy) + "\" r=\"" +
           num(r) + "\" fill=\"" + fill + "\"/>\n";
}

void SvgCanvas::text(double x, double y, const std::string& s, int size,
                     const std::string& anchor, const std::string& fill) {
  body_ += "<text x=\"" + num(x) + "\" y=\"" + num(y) + "\" font-size=\"" +
           std::to_string(size) +
           "\" font-family=\"sans-serif\" text-anchor=\"" + anchor +
           "\" fill=\"" + fill + "\">" + escape_text(s) + "</text>\n";
}

std::string SvgCanvas::finalize() const {
  std::string out = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" +
                    std::to_string(width_) + "\" height=\"" +
                    std::to_string(height_) + "\" viewBox=\"0 0 " +
                    std::to_string(width_) + " " + std::to_string(height_) +
                    "\">\n";
  out += "<rect width=\"100%\" height=\"100%\" fill=\"#ffffff\"/>\n";
  out += body_;
  out += "</svg>\n";
  return out;
}

std::string render_trajectories(const std::vector<ControllerTrace>& panels) {
  if (panels.empty()) {
    throw std::invalid_argument("render_trajectories: no panels");
  }
  const int panel_w = 420;
  const int panel_h = 230;
  const int margin_l = 60;
  const int margin_between = 70;
  const int margin_top = 40;
  const int row_h = panel_h + 70;
  SvgCanvas svg(margin_l + 2 * panel_w + margin_between + 30,
                margin_top + row_h * static_cast<int>(panels.size()));

  for (std::size_t row = 0; row < panels.size(); ++row) {
    const ControllerTrace& panel = panels[row];
    const Telemetry& tel = *panel.telemetry;
    const int nv = tel.n_vehicles();
    const double tmax = tel.steps > 1 ? (tel.steps - 1) * tel.dt : 1.0;

    double pmin = tel.records.front().p;
    double pmax = pmin;
    double vmin = tel.records.front().v;
    double vmax = vmin;
    for (const StepRecord& r : tel.records) {
      pmin = std::min(pmin, r.p);
      pmax = std::max(pmax, r.p);
      vmin = std::min(vmin, r.v);
      vmax = std::max(vmax, r.v);
    }
    pad_range(pmin, pmax, 0.05);
    pad_range(vmin, vmax, 0.05);

    AxesBox pos{static_cast<double>(margin_l),
                static_cast<double>(margin_top + row * row_h),
                static_cast<double>(panel_w),
                static_cast<double>(panel_h),
                0.0, tmax, pmin, pmax};
    AxesBox vel = pos;
    vel.x0 = margin_l + panel_w + margin_between;
    vel.ymin = vmin;
    vel.ymax = vmax;

    draw_frame(svg, pos, panel.label + ": position", "t (s)", "p (m)");
    draw_frame(svg, vel, panel.label + ": velocity", "t (s)", "v (m/s)");

    // Cap each trace near 400 points so wide runs stay lightweight.
    const int stride = std::max(1, (tel.steps + 399) / 400);
    std::vector<double> ts, ps, vs;
    for (int i = 0; i < nv; ++i) {
      ts.clear();
      ps.clear();
      vs.clear();
      for (int k = 0; k < tel.steps; k += stride) {
        const StepRecord& r = tel.at(k, i);
        ts.push_back(r.t);
        ps.push_back(r.p);
        vs.push_back(r.v);
      }
      const bool leader = i == 0;
      const std::string color = leader ? "#000000" : panel.color;
      const double width = leader ? 1.4 : 0.8;
      const double opacity = leader ? 1.0 : 0.35;
      draw_series_line(svg, pos, ts, ps, color, width, opacity);
      draw_series_line(svg, vel, ts, vs, color, width, opacity);
    }
  }
  return svg.finalize();
}

std::string render_rmse_bars(const std::vector<RmseBarGroup>& groups) {
  if (groups.empty()) {
    throw std::invalid_argument("render_rmse_bars: no groups");
  }
  const std::size_t n = groups.front().spacing.size();
  for (const auto& g : groups) {
    if (g.spacing.size() != n || g.velocity.size() != n) {
      throw std::invalid_argument("render_rmse_bars: ragged groups");
    }
  }

  const int panel_w = 640;
  const int panel_h = 220;
  const int margin_l = 70;
  const int margin_top = 40;
  const int row_h = panel_h + 70;
  SvgCanvas svg(margin_l + panel_w + 40, margin_top + 2 * row_h);

  auto draw_panel = [&](int row, const std::string& title,
                        auto stats_of) {
    double ymax = 0.0;
    for (const auto& g : groups) {
      for (std::size_t j = 0; j < n; ++j) {
        const VehicleStats& vs = stats_of(g, j);
        ymax = std::max(ymax, vs.mean_rmse + vs.ci_half_width);
      }
    }
    if (ymax <= 0.0) ymax = 1.0;
    AxesBox box{static_cast<double>(margin_l),
                static_cast<double>(margin_top + row * row_h),
                static_cast<double>(panel_w),
                static_cast<double>(panel_h),
                0.5, static_cast<double>(n) + 0.5, 0.0, ymax * 1.08};
    draw_frame(svg, box, title, "vehicle index", "RMSE");

    const double slot = box.w / static_cast<double>(n);
    const double bw = 0.8 * slot / static_cast<double>(groups.size());
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      for (std::size_t j = 0; j < n; ++j) {
        const VehicleStats& vs = stats_of(groups[gi], j);
        const double xc = box.px(static_cast<double>(j + 1)) -
                          0.4 * slot + (static_cast<double>(gi) + 0.5) * bw;
        const double y = box.py(vs.mean_rmse);
        svg.rect(xc - bw / 2, y, bw, box.y0 + box.h - y, groups[gi].color);
        if (vs.ci_half_width > 0.0) {
          const double ylo = box.py(std::max(0.0, vs.mean_rmse - vs.ci_half_width));
          const double yhi = box.py(vs.mean_rmse + vs.ci_half_width);
          svg.line(xc, ylo, xc, yhi, "#333333", 1.0);
          svg.line(xc - bw / 4, yhi, xc + bw / 4, yhi, "#333333", 1.0);
          svg.line(xc - bw / 4, ylo, xc + bw / 4, ylo, "#333333", 1.0);
        }
      }
    }
    // Legend.
    double lx = box.x0 + box.w - 130;
    double ly = box.y0 + 14;
    for (const auto& g : groups) {
      svg.rect(lx, ly - 9, 12, 12, g.color);
      svg.text(lx + 17, ly + 1, g.label, 11);
      ly += 17;
    }
  };

  draw_panel(0, "spacing RMSE per vehicle (95% CI)",
             [](const RmseBarGroup& g, std::size_t j) -> const VehicleStats& {
               return g.spacing[j];
             });
  draw_panel(1, "velocity RMSE per vehicle (95% CI)",
             [](const RmseBarGroup& g, std::size_t j) -> const VehicleStats& {
               return g.velocity[j];
             });
  return svg.finalize();
}

std::string render_scaling(const std::vector<ScalingSeries>& series) {
  if (series.empty()) {
    throw std::invalid_argument("render_scaling: no series");
  }
  const int panel_w = 640;
  const int panel_h = 400;
  const int margin_l = 70;
  const int margin_top = 40;
  SvgCanvas svg(margin_l + panel_w + 40, margin_top + panel_h + 60);

  std::size_t n = 0;
  double ymax = 0.0;
  for (const auto& s : series) {
    n = std::max(n, s.per_vehicle_rmse.size());
    for (double y : s.per_vehicle_rmse) ymax = std::max(ymax, y);
  }
  if (ymax <= 0.0) ymax = 1.0;

  AxesBox box{static_cast<double>(margin_l),
              static_cast<double>(margin_top),
              static_cast<double>(panel_w),
              static_cast<double>(panel_h),
              1.0, static_cast<double>(n), 0.0, ymax * 1.08};
  draw_frame(svg, box, "spacing RMSE vs vehicle index", "vehicle index",
             "RMSE (m)");

  auto draw_into = [&](const AxesBox& target, std::size_t limit) {
    for (const auto& s : series) {
      std::vector<double> xs, ys;
      const std::size_t count = std::min(limit, s.per_vehicle_rmse.size());
      for (std::size_t j = 0; j < count; ++j) {
        xs.push_back(static_cast<double>(j + 1));
        ys.push_back(s.per_vehicle_rmse[j]);
      }
      draw_series_line(svg, target, xs, ys, s.color, 1.5, 1.0);
      if (count <= 30) {
        for (std::size_t j = 0; j < count; ++j) {
          svg.circle(target.px(xs[j]), target.py(ys[j]), 2.0, s.color);
        }
      }
    }
  };
  draw_into(box, n);

  // Zoom inset over the leading vehicles.
  const std::size_t zoom_n = std::min<std::size_t>(25, n);
  if (zoom_n >= 2) {
    double zmax = 0.0;
    for (const auto& s : series) {
      const std::size_t count = std::min(zoom_n, s.per_vehicle_rmse.size());
      for (std::size_t j = 0; j < count; ++j) {
        zmax = std::max(zmax, s.per_vehicle_rmse[j]);
      }
    }
    if (zmax <= 0.0) zmax = 1.0;
    AxesBox inset{box.x0 + 40, box.y0 + 20, 0.38 * panel_w, 0.38 * panel_h,
                  1.0, static_cast<double>(zoom_n), 0.0, zmax * 1.1};
    svg.rect(inset.x0, inset.y0, inset.w, inset.h, "#ffffff", "#333333");
    draw_frame(svg, inset, "vehicles 1-" + std::to_string(zoom_n), "", "",
               false);
    draw_into(inset, zoom_n);
  }

  double lx = box.x0 + box.w - 130;
  double ly = box.y0 + box.h - 14 - 17.0 * static_cast<double>(series.size());
  for (const auto& s : series) {
    svg.line(lx, ly - 4, lx + 18, ly - 4, s.color, 2.0);
    svg.text(lx + 24, ly, s.label, 11);
    ly += 17;
  }
  return svg.finalize();
}

}  // namespace platoon
