#include "spinorbit/svg_plot.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "spinorbit/io.hpp"

namespace spinorbit {

namespace {

std::string fixed(double x) {
  std::array<char, 48> buf{};
  const auto r = std::to_chars(buf.data(), buf.data() + buf.size(), x, std::chars_format::fixed, 2);
  return std::string(buf.data(), r.ptr);
}

const std::array<const char*, 8> kPalette{"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                          "#ff7f0e", "#17becf", "#8c564b", "#e377c2"};

std::string xml_escape(const std::string& s) {
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

}  // namespace

Projection projection_from_string(const std::string& s) {
  if (s == "yz") return Projection::YZ;
  if (s == "xy") return Projection::XY;
  if (s == "xz") return Projection::XZ;
  if (s == "time-yz") return Projection::TimeYZ;
  throw std::invalid_argument("unknown projection '" + s + "' (yz, xy, xz, time-yz)");
}

std::string plot_points_svg(const std::vector<double>& times, const std::vector<Vec3>& points, const PlotOptions& opts) {
  if (times.size() != points.size()) throw std::invalid_argument("plot: length mismatch");
  const std::size_t n = points.size();
  double t0 = n ? times.front() : 0.0, t1 = n ? times.back() : 1.0;
  for (double t : times) {
    t0 = std::min(t0, t);
    t1 = std::max(t1, t);
  }
  const double tspan = t1 > t0 ? t1 - t0 : 1.0;

  double amp = 0.0;
  for (const auto& p : points) amp = std::max(amp, p.cwiseAbs().maxCoeff());
  if (!(amp > 0.0)) amp = 0.5;

  std::vector<std::pair<double, double>> uv(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& p = points[i];
    switch (opts.projection) {
      case Projection::YZ: uv[i] = {p.y(), p.z()}; break;
      case Projection::XY: uv[i] = {p.x(), p.y()}; break;
      case Projection::XZ: uv[i] = {p.x(), p.z()}; break;
      case Projection::TimeYZ: {
        // oblique extrusion: time runs up and to the right
        const double s = 2.0 * amp * (times[i] - t0) / tspan;
        uv[i] = {p.y() + 0.7 * s, p.z() + 0.7 * s};
        break;
      }
    }
  }
  double umin = -amp, umax = amp, vmin = -amp, vmax = amp;
  for (const auto& [u, v] : uv) {
    umin = std::min(umin, u);
    umax = std::max(umax, u);
    vmin = std::min(vmin, v);
    vmax = std::max(vmax, v);
  }
  const double margin = 40.0;
  const double span = std::max(umax - umin, vmax - vmin);
  const double scale = (std::min(opts.width, opts.height) - 2.0 * margin) / (span > 0.0 ? span : 1.0);
  auto X = [&](double u) { return margin + (u - umin) * scale; };
  auto Y = [&](double v) { return opts.height - margin - (v - vmin) * scale; };

  static const char* axis_names[4][2] = {{"y", "z"}, {"x", "y"}, {"x", "z"}, {"y + t", "z + t"}};
  const int pi = static_cast<int>(opts.projection);

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << opts.width << "\" height=\"" << opts.height
     << "\" viewBox=\"0 0 " << opts.width << ' ' << opts.height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  if (!opts.title.empty()) os << "<text x=\"" << margin << "\" y=\"24\" font-size=\"14\">" << xml_escape(opts.title) << "</text>\n";
  if (opts.projection != Projection::TimeYZ) {
    os << "<line x1=\"" << fixed(X(umin)) << "\" y1=\"" << fixed(Y(0)) << "\" x2=\"" << fixed(X(umax)) << "\" y2=\""
       << fixed(Y(0)) << "\" stroke=\"#bbb\"/>\n";
    os << "<line x1=\"" << fixed(X(0)) << "\" y1=\"" << fixed(Y(vmin)) << "\" x2=\"" << fixed(X(0)) << "\" y2=\""
       << fixed(Y(vmax)) << "\" stroke=\"#bbb\"/>\n";
  }
  os << "<text x=\"" << opts.width - margin << "\" y=\"" << opts.height - 10 << "\" font-size=\"12\">"
     << axis_names[pi][0] << "</text>\n";
  os << "<text x=\"8\" y=\"" << margin << "\" font-size=\"12\">" << axis_names[pi][1] << "</text>\n";
  const int classes = std::max(1, opts.classes);
  for (int c = 0; c < classes; ++c) {
    os << "<g fill=\"" << kPalette[c % kPalette.size()] << "\">\n";
    for (std::size_t i = c; i < n; i += classes)
      os << "<circle cx=\"" << fixed(X(uv[i].first)) << "\" cy=\"" << fixed(Y(uv[i].second)) << "\" r=\"1.5\"/>\n";
    os << "</g>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string plot_csv_svg(const std::string& csv_text, const PlotOptions& opts) {
  std::istringstream is(csv_text);
  std::string header;
  std::getline(is, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  std::istringstream body(csv_text);
  std::vector<double> times;
  std::vector<Vec3> pts;
  if (header == "pulse,time,mx,my,mz,segment") {
    const TrajectoryRecord rec = read_record_csv(body);
    times = rec.times;
    for (std::size_t i = 0; i < rec.size(); ++i) pts.push_back(rec.sample(i));
  } else if (header == "time,Ix,Iy,Iz_abs,S_dec,S_osc") {
    std::string line;
    long ln = 1;
    while (std::getline(is, line)) {
      ++ln;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty()) continue;
      std::istringstream ls(line);
      std::array<double, 6> v{};
      std::string field;
      int col = 0;
      while (std::getline(ls, field, ',') && col < 6) {
        const auto r = std::from_chars(field.data(), field.data() + field.size(), v[col]);
        if (r.ec != std::errc() || r.ptr != field.data() + field.size())
          throw std::runtime_error("CSV line " + std::to_string(ln) + ": malformed number");
        ++col;
      }
      if (col != 6) throw std::runtime_error("CSV line " + std::to_string(ln) + ": expected 6 fields");
      times.push_back(v[0]);
      pts.emplace_back(v[1], v[2], v[3]);
    }
  } else {
    throw std::runtime_error("unrecognised CSV header '" + header + "'");
  }
  return plot_points_svg(times, pts, opts);
}

}  // namespace spinorbit
