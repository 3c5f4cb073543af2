#pragma once

// Minimal SVG charts for the report stage.

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace trafficdiff::svg {

using Series = std::map<std::string, std::vector<std::pair<double, double>>>;

std::string line_chart(const std::string& title, const std::string& x_label, const std::string& y_label,
                       const Series& series);
std::string bar_chart(const std::string& title, const std::string& y_label, const std::vector<std::string>& labels,
                      const std::vector<double>& values);
/// Histograms of raw values, one outline per population, on shared bins.
std::string histogram_overlay(const std::string& title, const std::string& x_label,
                              const std::map<std::string, std::vector<double>>& populations, int bins);
/// Pre-binned series over [0,1].
std::string binned_overlay(const std::string& title, const std::string& x_label,
                           const std::map<std::string, std::vector<double>>& series);

}  // namespace trafficdiff::svg
