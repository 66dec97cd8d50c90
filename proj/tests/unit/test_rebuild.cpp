#include <doctest.h>

#include "oracles.hpp"
#include "proxytr/errors.hpp"
#include "proxytr/proxy.hpp"
#include "proxytr/rebuild.hpp"

using namespace proxytr;

TEST_SUITE("rebuild") {
  TEST_CASE("seed grid spans the square") {
    const auto g = seed_grid(3, 2);
    REQUIRE(g.size() == 12);
    CHECK(g[0] == -1.0);
    CHECK(g[1] == -1.0);
    CHECK(g[2] == 0.0);
    CHECK(g[4] == 1.0);
    CHECK(g[11] == 1.0);
    const auto single = seed_grid(1, 1);
    CHECK(single == std::vector<double>{0.0, 0.0});
  }

  TEST_CASE("patch grids") {
    CHECK(ModelConfig::pcn().patch_size() == 32);
    CHECK(ModelConfig::pcn().patch_grid() == std::pair<std::size_t, std::size_t>{8, 4});
    CHECK(ModelConfig::shapenet55().patch_size() == 32);
    CHECK(ModelConfig::desk().patch_size() == 64);
    auto pointr = ModelConfig::shapenet55();
    pointr.mode = CompletionMode::pointr;
    CHECK(pointr.patch_size() == 24);
  }

  TEST_CASE("zero head places every patch point on its center") {
    ParamRegistry<double> reg(1);
    FoldingHead<double> head(reg, "fold", 8, 16, {2, 2});
    head.out.weight.mutable_value().fill(0.0);
    head.out.bias.mutable_value().fill(0.0);
    Rng rng(2);
    std::vector<double> f(3 * 8);
    for (auto& v : f) v = rng.uniform(-1, 1);
    const auto centers = Tensor<double>::from({3, 3}, {0, 0, 0, 1, 2, 3, -1, 0.5, 0});
    const auto out = head(Tensor<double>::from({3, 8}, f), centers);
    CHECK(out.shape() == Shape{12, 3});
    for (std::size_t r = 0; r < 12; ++r) {
      for (std::size_t c = 0; c < 3; ++c) CHECK(out.value().at(r, c) == centers.value().at(r / 4, c));
    }
    CHECK_THROWS_AS(head(Tensor<double>::from({3, 8}, f), Tensor<double>::zeros({2, 3})), DimensionError);
  }

  TEST_CASE("folding head gradients") {
    ParamRegistry<double> reg(3);
    FoldingHead<double> head(reg, "fold", 6, 10, {3, 2});
    Rng rng(4);
    std::vector<double> f(2 * 6), c(2 * 3);
    for (auto& v : f) v = rng.uniform(-1, 1);
    for (auto& v : c) v = rng.uniform(-1, 1);
    auto feats = Tensor<double>::from({2, 6}, f, true);
    auto centers = Tensor<double>::from({2, 3}, c, true);
    auto loss = [&] {
      auto o = head(feats, centers);
      return sum_all(mul(o, o));
    };
    std::vector<Tensor<double>> params{feats, centers};
    for (const auto& p : reg.params()) params.push_back(p.tensor);
    CHECK(oracle::max_gradient_error(loss, params) < 1e-6);
  }

  TEST_CASE("assembly") {
    PointCloud input({{1, 2, 3}, {4, 5, 6}});
    const auto patches = Tensor<double>::from({3, 3}, {0, 0, 0, 1, 1, 1, 2, 2, 2});
    const auto pointr = assemble(CompletionMode::pointr, input, patches);
    CHECK(pointr.shape() == Shape{5, 3});
    CHECK(pointr.value().at(1, 2) == 6.0);
    CHECK(pointr.value().at(4, 0) == 2.0);
    CHECK(assemble(CompletionMode::adapointr, input, patches).value() == patches.value());
  }

  TEST_CASE("denoise patches anchor at the clean centers") {
    ParamRegistry<double> reg(5);
    FoldingHead<double> head(reg, "fold", 4, 8, {2, 1});
    head.out.weight.mutable_value().fill(0.0);
    head.out.bias.mutable_value().fill(0.0);
    const std::vector<Point3> gt_centers{{1, 0, 0}, {0, 1, 0}};
    const auto out = denoise_patches(head, Tensor<double>::zeros({2, 4}), gt_centers);
    CHECK(out.shape() == Shape{4, 3});
    CHECK(out.value().at(3, 1) == 1.0);
    CHECK_THROWS_AS(denoise_patches(head, Tensor<double>::zeros({3, 4}), gt_centers), UsageError);
  }

  TEST_CASE("ground-truth patches are the nearest points") {
    Rng rng(6);
    auto pts = oracle::random_points(rng, 50);
    std::vector<Point3> centers{pts[3], {0.2, 0.1, -0.3}};
    const auto patches = ground_truth_patches(PointCloud(pts), centers, 7);
    REQUIRE(patches.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
      const auto want = oracle::knn_row(pts, centers[i], 7);
      REQUIRE(patches[i].size() == 7);
      for (std::size_t j = 0; j < 7; ++j) CHECK(patches[i][j] == pts[want[j]]);
    }
  }
}
