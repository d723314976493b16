#pragma once

// Static SVG line charts for coefficient tracks and loss curves.

#include <filesystem>
#include <string>
#include <vector>

#include "emotalk/data_model.hpp"
#include "emotalk/losses.hpp"

namespace emotalk::plot {

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Renders every series on shared axes. Throws LengthError on an empty or
/// ragged series.
std::string line_chart_svg(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                           const std::string& y_label, bool log_y = false);

/// One chart per region (lip, brow/eye, other) with each channel against time.
std::vector<std::filesystem::path> plot_coefficients(const BlendshapeSequence& seq, const std::filesystem::path& out_dir,
                                                     const std::string& stem);

/// Parses a JSON-lines loss log into one series per loss term.
std::vector<Series> read_loss_log(const std::filesystem::path& path);
std::filesystem::path plot_losses(const std::filesystem::path& log, const std::filesystem::path& out_dir,
                                  const std::string& stem);

}  // namespace emotalk::plot
