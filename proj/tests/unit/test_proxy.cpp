#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "proxytr/errors.hpp"
#include "proxytr/proxy.hpp"

using namespace proxytr;

namespace {

// Explicit per-edge evaluation: max_j Linear([f_i, f_j - f_i]).
NDArray<double> naive_edge_pool(const NDArray<double>& f, const std::vector<std::size_t>& centers,
                                const NeighborIndex& nbrs, const Linear<double>& edge) {
  const std::size_t c = f.cols(), out = edge.out_features();
  NDArray<double> result({centers.size(), out}, -1e300);
  for (std::size_t i = 0; i < centers.size(); ++i) {
    for (std::size_t j : nbrs.row(i)) {
      for (std::size_t o = 0; o < out; ++o) {
        double v = edge.bias.value()[o];
        for (std::size_t a = 0; a < c; ++a) {
          const double fi = f.at(centers[i], a), fj = f.at(j, a);
          v += fi * edge.weight.value().at(a, o) + (fj - fi) * edge.weight.value().at(c + a, o);
        }
        result.at(i, o) = std::max(result.at(i, o), v);
      }
    }
  }
  return result;
}

}  // namespace

TEST_SUITE("proxy") {
  TEST_CASE("edge max pool equals explicit edge features") {
    Rng rng(1);
    ParamRegistry<double> reg(2);
    Linear<double> edge(reg, "edge", 10, 7);
    auto pts = oracle::random_points(rng, 40);
    std::vector<double> fv(40 * 5);
    for (auto& v : fv) v = rng.uniform(-1, 1);
    auto f = Tensor<double>::from({40, 5}, fv, true);
    const std::vector<std::size_t> centers{0, 7, 19, 33};
    std::vector<Point3> cpts;
    for (auto i : centers) cpts.push_back(pts[i]);
    const auto nbrs = knn(pts, cpts, 6);
    const auto got = edge_max_pool(f, centers, nbrs, edge);
    const auto want = naive_edge_pool(f.value(), centers, nbrs, edge);
    for (std::size_t i = 0; i < want.numel(); ++i) CHECK(got.value()[i] == doctest::Approx(want[i]).epsilon(1e-12));

    auto loss = [&] { return sum_all(mul(edge_max_pool(f, centers, nbrs, edge), edge_max_pool(f, centers, nbrs, edge))); };
    CHECK(oracle::max_gradient_error(loss, {f, edge.weight, edge.bias}) < 1e-6);
  }

  TEST_CASE("edge conv layer shapes and errors") {
    ParamRegistry<double> reg(3);
    EdgeConvLayer<double> layer(reg, "l", 4, {6, 3, 5});
    Rng rng(2);
    PointLevel<double> in{oracle::random_points(rng, 12), Tensor<double>::zeros({12, 4}), {}};
    const auto out = layer(in);
    CHECK(out.points.size() == 5);
    CHECK(out.features.shape() == Shape{5, 6});
    CHECK(out.kept.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(out.points[i] == in.points[out.kept[i]]);

    PointLevel<double> small{oracle::random_points(rng, 2), Tensor<double>::zeros({2, 4}), {}};
    CHECK_THROWS_AS(layer(small), DomainError);
    EdgeConvLayer<double> greedy(reg, "g", 4, {6, 3, 20});
    CHECK_THROWS_AS(greedy(in), DomainError);
  }

  TEST_CASE("extractor output matches the configuration") {
    const auto cfg = ModelConfig::desk();
    ParamRegistry<float> reg(4);
    ProxyExtractor<float> ex(reg, "extractor", cfg);
    Rng rng(5);
    PointCloud cloud(oracle::random_points(rng, cfg.input_points));
    const auto set = ex(cloud);
    CHECK(set.size() == cfg.proxies);
    CHECK(set.features.shape() == Shape{cfg.proxies, cfg.width});
    CHECK(set.local_features.shape() == Shape{cfg.proxies, cfg.width});
    CHECK(set.features.value().all_finite());
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(cloud[set.center_indices[i]] == set.centers[i]);
  }

  TEST_CASE("extractor is invariant to input order") {
    const auto cfg = ModelConfig::gradcheck();
    ParamRegistry<double> reg(6);
    ProxyExtractor<double> ex(reg, "extractor", cfg);
    Rng rng(7);
    for (int trial = 0; trial < 5; ++trial) {
      auto pts = oracle::random_points(rng, cfg.input_points);
      std::vector<std::size_t> perm(pts.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
      std::vector<Point3> shuffled;
      for (auto i : perm) shuffled.push_back(pts[i]);
      const auto a = ex(PointCloud(pts));
      const auto b = ex(PointCloud(shuffled));
      CHECK(a.centers == b.centers);
      for (std::size_t i = 0; i < a.features.numel(); ++i) {
        CHECK(a.features.value()[i] == doctest::Approx(b.features.value()[i]).epsilon(1e-12));
      }
    }
  }
}
