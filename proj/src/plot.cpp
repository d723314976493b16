#include "emotalk/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "emotalk/error.hpp"

namespace emotalk::plot {

namespace {

constexpr double kWidth = 720, kHeight = 420;
constexpr double kLeft = 70, kRight = 170, kTop = 40, kBottom = 50;

const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return palette[i % std::size(palette)];
}

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
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace

std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label, bool log_y) {
  if (series.empty()) throw LengthError("nothing to plot");
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  const auto ty = [&](double y) { return log_y ? std::log10(std::max(y, 1e-300)) : y; };
  for (const Series& s : series) {
    if (s.x.empty() || s.x.size() != s.y.size()) throw LengthError("series '" + s.label + "' is empty or ragged");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0) || !std::isfinite(y0)) throw NumericError("no finite points to plot");
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  const auto py = [&](double y) { return kTop + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kWidth / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << escape(title)
     << "</text>\n"
     << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  for (int k = 0; k <= 4; ++k) {
    const double fx = x0 + (x1 - x0) * k / 4.0, fy = y0 + (y1 - y0) * k / 4.0;
    const double gx = kLeft + pw * k / 4.0, gy = kTop + ph * (1.0 - k / 4.0);
    os << "<text x=\"" << gx << "\" y=\"" << kTop + ph + 16 << "\" text-anchor=\"middle\">" << num(fx) << "</text>\n";
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << gy + 4 << "\" text-anchor=\"end\">"
       << num(log_y ? std::pow(10.0, fy) : fy) << "</text>\n";
    os << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << gy << "\" y2=\"" << gy
       << "\" stroke=\"#ddd\"/>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kHeight - 12 << "\" text-anchor=\"middle\">" << escape(x_label)
     << "</text>\n"
     << "<text transform=\"translate(16," << kTop + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << escape(y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    const Series& s = series[i];
    os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << colour(i) << "\" points=\"";
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      if (!std::isfinite(s.x[k]) || !std::isfinite(s.y[k])) continue;
      os << num(px(s.x[k])) << ',' << num(py(s.y[k])) << ' ';
    }
    os << "\"/>\n";
    const double ly = kTop + 14.0 * static_cast<double>(i) + 8;
    os << "<line x1=\"" << kWidth - kRight + 10 << "\" x2=\"" << kWidth - kRight + 26 << "\" y1=\"" << ly
       << "\" y2=\"" << ly << "\" stroke=\"" << colour(i) << "\" stroke-width=\"2\"/>"
       << "<text x=\"" << kWidth - kRight + 30 << "\" y=\"" << ly + 4 << "\" font-size=\"10\">" << escape(s.label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::filesystem::path> plot_coefficients(const BlendshapeSequence& seq,
                                                     const std::filesystem::path& out_dir, const std::string& stem) {
  if (seq.coeffs.cols() != kNumBlendshapes || seq.frames() == 0) throw LengthError("empty blendshape sequence");
  std::vector<std::filesystem::path> written;
  for (ChannelRegion region : {ChannelRegion::kLip, ChannelRegion::kBrowEye, ChannelRegion::kOther}) {
    std::vector<Series> series;
    for (int c : channels_in_region(region)) {
      Series s{std::string(channel_names()[c]), {}, {}};
      for (Index t = 0; t < seq.frames(); ++t) {
        s.x.push_back(static_cast<double>(t) / seq.fps);
        s.y.push_back(seq.coeffs(t, c));
      }
      series.push_back(std::move(s));
    }
    const std::filesystem::path path = out_dir / (stem + "_" + std::string(region_name(region)) + ".svg");
    write_text(path, line_chart_svg(series, stem + " (" + std::string(region_name(region)) + ")", "time (s)",
                                    "coefficient"));
    written.push_back(path);
  }
  return written;
}

std::vector<Series> read_loss_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<Series> series{{"total", {}, {}}, {"cross", {}, {}}, {"self", {}, {}}, {"velocity", {}, {}},
                             {"classification", {}, {}}};
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      for (Series& s : series) {
        s.x.push_back(j.at("step").get<double>());
        s.y.push_back(j.at(s.label).get<double>());
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("bad loss log line in " + path.string() + ": " + e.what());
    }
  }
  if (series.front().x.empty()) throw LengthError(path.string() + " holds no records");
  return series;
}

std::filesystem::path plot_losses(const std::filesystem::path& log, const std::filesystem::path& out_dir,
                                  const std::string& stem) {
  const std::filesystem::path path = out_dir / (stem + ".svg");
  write_text(path, line_chart_svg(read_loss_log(log), "training loss", "step", "loss", true));
  return path;
}

}  // namespace emotalk::plot
