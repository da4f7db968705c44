#pragma once

#include <string>
#include <vector>

#include "gridnet/errors.hpp"
#include "gridnet/layers.hpp"
#include "gridnet/tensor.hpp"

// Type-A decomposition: rectangular, non-overlapping grid cells over the
// spatial axes; the channel axis is never subdivided.

namespace gridnet {

struct GridDecomposition {
  Shape spatial_extents;          // H, W[, D]
  Shape grid_counts;              // cells per axis
  int n_subimages = 0;            // product of grid_counts
  int overlap = 0;                // delta; fixed 0 here
  // Per-axis cell boundaries: starts[a][i], sizes[a][i] for axis a.
  std::vector<std::vector<Index>> cell_starts, cell_sizes;

  Index axes() const { return static_cast<Index>(spatial_extents.size()); }

  // Row-major cell order, last axis fastest.
  std::vector<Index> cell_index(int cell) const;
  Shape cell_start(int cell) const;
  Shape cell_extent(int cell) const;
};

// Splits each axis into `count` runs; a remainder of r pixels is given one
// each to the first r cells, so cell sizes differ by at most one.
GridDecomposition make_grid(const Shape& extents, const Shape& grid_counts);

// "2x2", "4x4x2" -> per-axis counts.
Shape parse_grid_counts(const std::string& text);
std::string grid_string(const Shape& grid_counts);

template <typename Scalar>
std::vector<Tensor<Scalar>> extract_subimages(const Tensor<Scalar>& image,
                                              const GridDecomposition& grid) {
  const Index sdims = grid.axes();
  if (image.rank() != sdims + 1) {
    throw DimensionError("extract: image " + shape_str(image.shape()) + " does not carry " +
                         std::to_string(sdims) + " spatial axes plus channels");
  }
  for (Index a = 0; a < sdims; ++a) {
    if (image.extent(a + 1) != grid.spatial_extents[a]) {
      throw DimensionError("extract: image " + shape_str(image.shape()) +
                           " does not match grid extents " + shape_str(grid.spatial_extents));
    }
  }
  std::vector<Tensor<Scalar>> cells;
  cells.reserve(static_cast<std::size_t>(grid.n_subimages));
  for (int c = 0; c < grid.n_subimages; ++c) {
    cells.push_back(slice_forward(image, grid.cell_start(c), grid.cell_extent(c)));
  }
  return cells;
}

template <typename Scalar>
Tensor<Scalar> reassemble(const std::vector<Tensor<Scalar>>& subimages,
                          const GridDecomposition& grid) {
  if (static_cast<int>(subimages.size()) != grid.n_subimages) {
    throw DimensionError("reassemble: got " + std::to_string(subimages.size()) +
                         " subimages, grid has " + std::to_string(grid.n_subimages) + " cells");
  }
  const Index channels = subimages.empty() ? 0 : subimages[0].extent(0);
  Shape full{channels};
  full.insert(full.end(), grid.spatial_extents.begin(), grid.spatial_extents.end());
  Tensor<Scalar> image(full);

  const Index sdims = grid.axes();
  const bool three = sdims == 3;
  const Index H = grid.spatial_extents[0], W = grid.spatial_extents[1],
              D = three ? grid.spatial_extents[2] : 1;
  for (int c = 0; c < grid.n_subimages; ++c) {
    const Shape start = grid.cell_start(c), ext = grid.cell_extent(c);
    const Tensor<Scalar>& cell = subimages[static_cast<std::size_t>(c)];
    Shape expect{channels};
    expect.insert(expect.end(), ext.begin(), ext.end());
    if (!same_shape(cell.shape(), expect)) {
      throw DimensionError("reassemble: cell " + std::to_string(c) + " is " +
                           shape_str(cell.shape()) + ", expected " + shape_str(expect));
    }
    const Index EH = ext[0], EW = ext[1], ED = three ? ext[2] : 1;
    const Index SY = start[0], SX = start[1], SZ = three ? start[2] : 0;
    const Scalar* src = cell.data();
    for (Index ch = 0; ch < channels; ++ch)
      for (Index y = 0; y < EH; ++y)
        for (Index x = 0; x < EW; ++x) {
          Scalar* dst = image.data() + (((ch * H + SY + y) * W + SX + x) * D + SZ);
          for (Index z = 0; z < ED; ++z) dst[z] = src[z];
          src += ED;
        }
  }
  return image;
}

}  // namespace gridnet
