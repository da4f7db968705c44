#include "gridnet/decomp.hpp"

#include <string>

namespace gridnet {

std::vector<Index> GridDecomposition::cell_index(int cell) const {
  std::vector<Index> ix(static_cast<std::size_t>(axes()));
  Index rest = cell;
  for (Index a = axes() - 1; a >= 0; --a) {
    const Index count = grid_counts[static_cast<std::size_t>(a)];
    ix[static_cast<std::size_t>(a)] = rest % count;
    rest /= count;
  }
  return ix;
}

Shape GridDecomposition::cell_start(int cell) const {
  const std::vector<Index> ix = cell_index(cell);
  Shape start(static_cast<std::size_t>(axes()));
  for (Index a = 0; a < axes(); ++a) {
    start[static_cast<std::size_t>(a)] =
        cell_starts[static_cast<std::size_t>(a)][static_cast<std::size_t>(ix[static_cast<std::size_t>(a)])];
  }
  return start;
}

Shape GridDecomposition::cell_extent(int cell) const {
  const std::vector<Index> ix = cell_index(cell);
  Shape ext(static_cast<std::size_t>(axes()));
  for (Index a = 0; a < axes(); ++a) {
    ext[static_cast<std::size_t>(a)] =
        cell_sizes[static_cast<std::size_t>(a)][static_cast<std::size_t>(ix[static_cast<std::size_t>(a)])];
  }
  return ext;
}

GridDecomposition make_grid(const Shape& extents, const Shape& grid_counts) {
  if (extents.size() != grid_counts.size() || extents.empty() || extents.size() > 3) {
    throw InfeasibleGridError("make_grid: need matching 2- or 3-axis extents and counts, got " +
                              shape_str(extents) + " / " + shape_str(grid_counts));
  }
  GridDecomposition grid;
  grid.spatial_extents = extents;
  grid.grid_counts = grid_counts;
  grid.n_subimages = 1;
  for (std::size_t a = 0; a < extents.size(); ++a) {
    const Index extent = extents[a], count = grid_counts[a];
    if (count < 1) {
      throw InfeasibleGridError("make_grid: grid count must be >= 1, got " +
                                std::to_string(count));
    }
    if (count > extent) {
      throw InfeasibleGridError("make_grid: grid count " + std::to_string(count) +
                                " exceeds extent " + std::to_string(extent) + " on axis " +
                                std::to_string(a));
    }
    grid.n_subimages *= static_cast<int>(count);
    const Index base = extent / count;
    const Index remainder = extent % count;
    std::vector<Index> starts, sizes;
    Index pos = 0;
    for (Index i = 0; i < count; ++i) {
      const Index size = base + (i < remainder ? 1 : 0);
      starts.push_back(pos);
      sizes.push_back(size);
      pos += size;
    }
    grid.cell_starts.push_back(std::move(starts));
    grid.cell_sizes.push_back(std::move(sizes));
  }
  return grid;
}

Shape parse_grid_counts(const std::string& text) {
  Shape counts;
  std::string num;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i == text.size() || text[i] == 'x' || text[i] == 'X') {
      if (num.empty()) throw ConfigError("grid: malformed grid string '" + text + "'");
      counts.push_back(static_cast<Index>(std::stoll(num)));
      num.clear();
    } else if (text[i] >= '0' && text[i] <= '9') {
      num += text[i];
    } else {
      throw ConfigError("grid: unexpected character '" + std::string(1, text[i]) +
                        "' in grid string '" + text + "'");
    }
  }
  if (counts.size() < 2 || counts.size() > 3) {
    throw ConfigError("grid: expected 2 or 3 axis counts in '" + text + "'");
  }
  return counts;
}

std::string grid_string(const Shape& grid_counts) {
  std::string s;
  for (std::size_t i = 0; i < grid_counts.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(grid_counts[i]);
  }
  return s;
}

}  // namespace gridnet
