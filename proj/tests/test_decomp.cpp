#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <random>
#include <set>

#include "gridnet/decomp.hpp"
#include "testutil.hpp"

using namespace gridnet;

TEST_CASE("paper grids: 32x32/2x2, 128x128x64/4x4x2, 180x180/4x4") {
  const GridDecomposition cifar = make_grid({32, 32}, {2, 2});
  CHECK(cifar.n_subimages == 4);
  for (int c = 0; c < 4; ++c) CHECK(cifar.cell_extent(c) == Shape{16, 16});

  const GridDecomposition ct = make_grid({128, 128, 64}, {4, 4, 2});
  CHECK(ct.n_subimages == 32);
  for (int c = 0; c < 32; ++c) CHECK(ct.cell_extent(c) == Shape{32, 32, 32});

  const GridDecomposition flowers = make_grid({180, 180}, {4, 4});
  CHECK(flowers.n_subimages == 16);
  for (int c = 0; c < 16; ++c) CHECK(flowers.cell_extent(c) == Shape{45, 45});

  CHECK(cifar.overlap == 0);
}

TEST_CASE("a depth count of 1 leaves that axis unsubdivided") {
  const GridDecomposition g = make_grid({32, 32, 16}, {2, 2, 1});
  CHECK(g.n_subimages == 4);
  CHECK(g.cell_extent(0) == Shape{16, 16, 16});
}

TEST_CASE("non-divisible extents hand remainder pixels to the first cells") {
  const GridDecomposition g = make_grid({7, 5}, {3, 2});
  CHECK(g.cell_sizes[0] == std::vector<Index>{3, 2, 2});
  CHECK(g.cell_sizes[1] == std::vector<Index>{3, 2});
  CHECK(g.cell_starts[0] == std::vector<Index>{0, 3, 5});
  Index total = 0;
  for (Index s : g.cell_sizes[0]) total += s;
  CHECK(total == 7);
}

TEST_CASE("infeasible grids are rejected") {
  CHECK_THROWS_AS(make_grid({4, 4}, {5, 2}), InfeasibleGridError);
  CHECK_THROWS_AS(make_grid({4, 4}, {0, 2}), InfeasibleGridError);
  CHECK_THROWS_AS(make_grid({4, 4}, {2}), InfeasibleGridError);
}

TEST_CASE("grid strings parse and print") {
  CHECK(parse_grid_counts("2x2") == Shape{2, 2});
  CHECK(parse_grid_counts("4x4x2") == Shape{4, 4, 2});
  CHECK(grid_string({4, 4, 2}) == "4x4x2");
  CHECK_THROWS_AS(parse_grid_counts("4"), ConfigError);
  CHECK_THROWS_AS(parse_grid_counts("2xx2"), ConfigError);
  CHECK_THROWS_AS(parse_grid_counts("ax2"), ConfigError);
}

TEST_CASE("single-pixel cells in row-major order") {
  const Tensor<double> img = Tensor<double>::from_values({1, 2, 2}, {1, 2, 3, 4});
  const GridDecomposition g = make_grid({2, 2}, {2, 2});
  const auto cells = extract_subimages(img, g);
  REQUIRE(cells.size() == 4);
  CHECK(cells[0][0] == 1);
  CHECK(cells[1][0] == 2);
  CHECK(cells[2][0] == 3);
  CHECK(cells[3][0] == 4);
}

TEST_CASE("constant images give constant subimages") {
  const Tensor<double> img = Tensor<double>::constant({3, 8, 6}, 2.5);
  const GridDecomposition g = make_grid({8, 6}, {2, 3});
  for (const auto& cell : extract_subimages(img, g)) {
    for (Index i = 0; i < cell.size(); ++i) CHECK(cell[i] == 2.5);
  }
}

TEST_CASE("extents must match the grid") {
  const GridDecomposition g = make_grid({8, 8}, {2, 2});
  Tensor<double> img(Shape{1, 8, 7});
  CHECK_THROWS_AS(extract_subimages(img, g), DimensionError);
}

TEST_CASE("cells tile the input: pairwise disjoint and covering") {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    const int sdims = t % 2 ? 2 : 3;
    Shape extents, counts;
    for (int a = 0; a < sdims; ++a) {
      const Index e = 2 + static_cast<Index>(rng() % 20);
      extents.push_back(e);
      counts.push_back(1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(e)));
    }
    const GridDecomposition g = make_grid(extents, counts);
    std::vector<int> hits(static_cast<std::size_t>(numel(extents)), 0);
    for (int c = 0; c < g.n_subimages; ++c) {
      const Shape start = g.cell_start(c), ext = g.cell_extent(c);
      const bool three = sdims == 3;
      const Index W = extents[1], D = three ? extents[2] : 1;
      for (Index y = start[0]; y < start[0] + ext[0]; ++y)
        for (Index x = start[1]; x < start[1] + ext[1]; ++x)
          for (Index z = (three ? start[2] : 0); z < (three ? start[2] + ext[2] : 1); ++z)
            hits[static_cast<std::size_t>((y * W + x) * D + z)]++;
    }
    for (int h : hits) CHECK(h == 1);
  }
}

TEST_CASE("property: 1000 random round-trips are bit-exact") {
  std::mt19937_64 rng(99);
  for (int t = 0; t < 1000; ++t) {
    const int sdims = rng() % 2 ? 2 : 3;
    Shape extents, counts;
    for (int a = 0; a < sdims; ++a) {
      const Index e = 1 + static_cast<Index>(rng() % (sdims == 2 ? 48 : 16));
      extents.push_back(e);
      counts.push_back(1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(e)));
    }
    const GridDecomposition g = make_grid(extents, counts);
    Shape img_shape{1 + static_cast<Index>(rng() % 3)};
    img_shape.insert(img_shape.end(), extents.begin(), extents.end());
    const Tensor<double> img = testutil::random_tensor(img_shape, rng);
    const Tensor<double> back = reassemble(extract_subimages(img, g), g);
    REQUIRE(same_shape(back.shape(), img.shape()));
    REQUIRE(std::memcmp(img.data(), back.data(),
                        sizeof(double) * static_cast<std::size_t>(img.size())) == 0);
  }
}

TEST_CASE("float32 round-trip is also bit-exact") {
  std::mt19937_64 rng(7);
  const GridDecomposition g = make_grid({9, 7}, {2, 3});
  Tensor<float> img(Shape{2, 9, 7});
  for (Index i = 0; i < img.size(); ++i) img[i] = static_cast<float>(uniform(rng, -1, 1));
  const Tensor<float> back = reassemble(extract_subimages(img, g), g);
  CHECK(std::memcmp(img.data(), back.data(), sizeof(float) * static_cast<std::size_t>(img.size())) == 0);
}

TEST_CASE("reassemble rejects wrong counts and mismatched shapes") {
  const GridDecomposition g = make_grid({4, 4}, {2, 2});
  auto cells = extract_subimages(Tensor<double>::constant({1, 4, 4}, 1.0), g);
  auto short_list = cells;
  short_list.pop_back();
  CHECK_THROWS_AS(reassemble(short_list, g), DimensionError);

  // permuted against a non-square grid: shapes no longer line up
  const GridDecomposition g2 = make_grid({4, 6}, {1, 2});
  auto cells2 = extract_subimages(Tensor<double>::constant({1, 4, 6}, 1.0), g2);
  std::swap(cells2[0], cells2[1]);
  CHECK(same_shape(cells2[0].shape(), cells2[1].shape()));  // square split would not throw
  const GridDecomposition g3 = make_grid({4, 7}, {1, 2});
  auto cells3 = extract_subimages(Tensor<double>::constant({1, 4, 7}, 1.0), g3);
  std::swap(cells3[0], cells3[1]);
  CHECK_THROWS_AS(reassemble(cells3, g3), DimensionError);
}

TEST_CASE("cell order is deterministic across calls") {
  const GridDecomposition a = make_grid({30, 20, 10}, {3, 2, 2});
  const GridDecomposition b = make_grid({30, 20, 10}, {3, 2, 2});
  REQUIRE(a.n_subimages == b.n_subimages);
  for (int c = 0; c < a.n_subimages; ++c) {
    CHECK(a.cell_start(c) == b.cell_start(c));
    CHECK(a.cell_extent(c) == b.cell_extent(c));
  }
  // row-major: last axis fastest
  CHECK(a.cell_start(0) == Shape{0, 0, 0});
  CHECK(a.cell_start(1) == Shape{0, 0, 5});
  CHECK(a.cell_start(2) == Shape{0, 10, 0});
}
