#pragma once

#include <string>
#include <vector>

namespace vqclust {

struct ScatterSeries {
    std::string name;
    std::vector<double> x;
    std::vector<double> y;
};

// Fixed 800x600 scatter plot with a categorical palette and a legend.
// Output is byte-stable: no timestamps, no generated ids.
void write_scatter_svg(const std::string& path, const std::vector<ScatterSeries>& series,
                       const std::string& title, const std::string& x_label,
                       const std::string& y_label);

}  // namespace vqclust
