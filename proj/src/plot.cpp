// Copyright 2026 The SampleRNN-TTS Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "samplernn/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "samplernn/config.hpp"
#include "samplernn/error.hpp"

namespace samplernn::plot {

namespace {

constexpr double kPanelWidth = 460;
constexpr double kPanelHeight = 340;
constexpr double kMarginLeft = 64, kMarginRight = 16, kMarginTop = 36, kMarginBottom = 48;
constexpr const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                   "#ff7f0e", "#8c564b", "#e377c2", "#17becf"};

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::vector<double> nice_ticks(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 1.0;
    hi += 1.0;
  }
  const double raw = (hi - lo) / 5.0;
  const double mag = std::pow(10.0, std::floor(std::log10(raw)));
  double step = mag;
  for (double m : {1.0, 2.0, 5.0, 10.0}) {
    step = m * mag;
    if (raw <= step) break;
  }
  std::vector<double> ticks;
  for (double t = std::ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
    ticks.push_back(std::abs(t) < 1e-12 * step ? 0.0 : t);
  }
  return ticks;
}

void render_panel(std::ostringstream& out, const Panel& p, double x0) {
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  auto tx = [&](double x) { return p.log_x ? std::log10(x) : x; };
  for (const auto& s : p.series) {
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || !std::isfinite(s.x[i]) || (p.log_x && s.x[i] <= 0)) continue;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, s.y[i]);
      ymax = std::max(ymax, s.y[i]);
    }
  }
  if (!std::isfinite(xmin)) {
    xmin = 0;
    xmax = 1;
    ymin = 0;
    ymax = 1;
  }
  if (xmax == xmin) {
    xmin -= 0.5;
    xmax += 0.5;
  }
  const double pad = ymax > ymin ? 0.05 * (ymax - ymin) : 0.5;
  ymin -= pad;
  ymax += pad;
  const double left = x0 + kMarginLeft, right = x0 + kPanelWidth - kMarginRight;
  const double top = kMarginTop, bottom = kPanelHeight - kMarginBottom;
  auto px = [&](double x) { return left + (tx(x) - xmin) / (xmax - xmin) * (right - left); };
  auto py = [&](double y) { return bottom - (y - ymin) / (ymax - ymin) * (bottom - top); };

  out << "<text x=\"" << num((left + right) / 2) << "\" y=\"22\" text-anchor=\"middle\" "
      << "font-size=\"14\">" << escape(p.title) << "</text>\n";
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\"" << num(right - left)
      << "\" height=\"" << num(bottom - top) << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (double t : nice_ticks(ymin, ymax)) {
    if (t < ymin || t > ymax) continue;
    out << "<line x1=\"" << num(left) << "\" y1=\"" << num(py(t)) << "\" x2=\"" << num(right)
        << "\" y2=\"" << num(py(t)) << "\" stroke=\"#ddd\"/>\n";
    out << "<text x=\"" << num(left - 6) << "\" y=\"" << num(py(t) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << tick_label(t) << "</text>\n";
  }
  std::vector<double> xt;
  if (p.log_x) {
    for (const auto& s : p.series) xt.insert(xt.end(), s.x.begin(), s.x.end());
    std::sort(xt.begin(), xt.end());
    xt.erase(std::unique(xt.begin(), xt.end()), xt.end());
  } else {
    xt = nice_ticks(xmin, xmax);
  }
  for (double t : xt) {
    if (tx(t) < xmin - 1e-12 || tx(t) > xmax + 1e-12) continue;
    out << "<text x=\"" << num(px(t)) << "\" y=\"" << num(bottom + 16)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << tick_label(t) << "</text>\n";
  }
  out << "<text x=\"" << num((left + right) / 2) << "\" y=\"" << num(kPanelHeight - 10)
      << "\" text-anchor=\"middle\" font-size=\"12\">" << escape(p.x_label) << "</text>\n";
  out << "<text transform=\"translate(" << num(x0 + 16) << ',' << num((top + bottom) / 2)
      << ") rotate(-90)\" text-anchor=\"middle\" font-size=\"12\">" << escape(p.y_label)
      << "</text>\n";

  for (std::size_t k = 0; k < p.series.size(); ++k) {
    const auto& s = p.series[k];
    const char* color = kColors[k % std::size(kColors)];
    std::ostringstream pts;
    for (std::size_t i = 0; i < s.x.size() && i < s.y.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (p.log_x && s.x[i] <= 0)) continue;
      pts << num(px(s.x[i])) << ',' << num(py(s.y[i])) << ' ';
      out << "<circle cx=\"" << num(px(s.x[i])) << "\" cy=\"" << num(py(s.y[i]))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
    }
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\""
        << pts.str() << "\"/>\n";
    const double ly = top + 14 + 14 * static_cast<double>(k);
    out << "<line x1=\"" << num(right - 120) << "\" y1=\"" << num(ly - 4) << "\" x2=\""
        << num(right - 104) << "\" y2=\"" << num(ly - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    out << "<text x=\"" << num(right - 100) << "\" y=\"" << num(ly) << "\" font-size=\"10\">"
        << escape(s.label) << "</text>\n";
  }
}

}  // namespace

std::string render_svg(std::span<const Panel> panels, const std::string& title) {
  if (panels.empty()) throw UsageError("nothing to plot");
  const double width = kPanelWidth * static_cast<double>(panels.size());
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width) << "\" height=\""
      << num(kPanelHeight + 20) << "\" font-family=\"sans-serif\">\n";
  out << "<title>" << escape(title) << "</title>\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<g transform=\"translate(0,20)\">\n";
  for (std::size_t i = 0; i < panels.size(); ++i) {
    render_panel(out, panels[i], kPanelWidth * static_cast<double>(i));
  }
  out << "</g>\n</svg>\n";
  return out.str();
}

std::string loss_curves_svg(std::span<const std::pair<std::string, training::RunLog>> runs) {
  Panel p{"Negative log-likelihood", "epoch", "nats / sample", {}, false};
  for (const auto& [label, log] : runs) {
    Series train{label + " train", {}, {}}, val{label + " validation", {}, {}};
    for (const auto& e : log.epochs) {
      train.x.push_back(e.epoch);
      train.y.push_back(e.train_nll);
      val.x.push_back(e.epoch);
      val.y.push_back(e.val_nll);
    }
    p.series.push_back(std::move(train));
    p.series.push_back(std::move(val));
  }
  return render_svg(std::span<const Panel>(&p, 1), "Loss curves");
}

std::string adaptation_svg(
    std::span<const std::pair<std::string, std::vector<evaluation::CurvePoint>>> curves) {
  Panel mcd{"MCD vs. seed length", "seed length T (s)", "MCD (dB)", {}, true};
  Panel f0{"F0 RMSE vs. seed length", "seed length T (s)", "RMSE F0 (Hz)", {}, true};
  for (const auto& [label, points] : curves) {
    Series a{label, {}, {}}, b{label, {}, {}};
    for (const auto& pt : points) {
      a.x.push_back(pt.seed_seconds);
      a.y.push_back(pt.mcd_db);
      b.x.push_back(pt.seed_seconds);
      b.y.push_back(pt.rmse_f0_hz);
    }
    mcd.series.push_back(std::move(a));
    f0.series.push_back(std::move(b));
  }
  const Panel panels[] = {mcd, f0};
  return render_svg(panels, "Distortion of unseen speakers against seed length");
}

std::string epoch_distortion_csv(std::span<const EpochDistortion> rows) {
  std::ostringstream out;
  out << "epoch,mcd_db,rmse_f0_hz\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << (std::isnan(r.mcd_db) ? "nan" : format_double(r.mcd_db)) << ','
        << (std::isnan(r.rmse_f0_hz) ? "nan" : format_double(r.rmse_f0_hz)) << '\n';
  }
  return out.str();
}

std::vector<EpochDistortion> parse_epoch_distortion_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,mcd_db,rmse_f0_hz") {
    throw DataError("not a distortion-per-epoch CSV");
  }
  std::vector<EpochDistortion> out;
  auto number = [](const std::string& s) {
    return s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (f.size() != 3) throw DataError("malformed distortion row '" + line + "'");
    try {
      out.push_back({std::stoi(f[0]), number(f[1]), number(f[2])});
    } catch (const std::logic_error&) {
      throw DataError("malformed distortion row '" + line + "'");
    }
  }
  return out;
}

std::string epoch_distortion_svg(
    std::span<const std::pair<std::string, std::vector<EpochDistortion>>> runs) {
  Panel mcd{"MCD vs. epoch", "epoch", "MCD (dB)", {}, false};
  Panel f0{"F0 RMSE vs. epoch", "epoch", "RMSE F0 (Hz)", {}, false};
  for (const auto& [label, rows] : runs) {
    Series a{label, {}, {}}, b{label, {}, {}};
    for (const auto& r : rows) {
      a.x.push_back(r.epoch);
      a.y.push_back(r.mcd_db);
      b.x.push_back(r.epoch);
      b.y.push_back(r.rmse_f0_hz);
    }
    mcd.series.push_back(std::move(a));
    f0.series.push_back(std::move(b));
  }
  const Panel panels[] = {mcd, f0};
  return render_svg(panels, "Validation distortion during training");
}

}  // namespace samplernn::plot
