#pragma once

#include <string>
#include <vector>

#include "spinorbit/drive.hpp"

namespace spinorbit {

enum class Projection { YZ, XY, XZ, TimeYZ };

Projection projection_from_string(const std::string& s);

struct PlotOptions {
  Projection projection = Projection::YZ;
  int classes = 1;  // colour samples by index mod classes
  int width = 640;
  int height = 640;
  std::string title;
};

/// Static scatter plot; identical input gives identical bytes.
std::string plot_points_svg(const std::vector<double>& times, const std::vector<Vec3>& points, const PlotOptions& opts);

/// Reads a trajectory CSV (record or reconstruction format) and plots it.
std::string plot_csv_svg(const std::string& csv_text, const PlotOptions& opts);

}  // namespace spinorbit
