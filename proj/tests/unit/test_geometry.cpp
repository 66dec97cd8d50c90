#include <doctest.h>

#include <algorithm>
#include <sstream>

#include "oracles.hpp"
#include "proxytr/errors.hpp"
#include "proxytr/geometry.hpp"

using namespace proxytr;

TEST_SUITE("geometry") {
  TEST_CASE("point cloud rejects empty and non-finite input") {
    CHECK_THROWS_AS(PointCloud({}), DomainError);
    CHECK_THROWS_AS(PointCloud({{0, 0, std::numeric_limits<double>::infinity()}}), DomainError);
  }

  TEST_CASE("fps on a line picks the far end first") {
    std::vector<Point3> pts{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
    const auto picks = fps(pts, 3, 0);
    CHECK(picks == std::vector<std::size_t>{0, 3, 1});
    CHECK_THROWS_AS(fps(pts, 5, 0), DomainError);
    CHECK_THROWS_AS(fps(pts, 2, 4), DomainError);
  }

  TEST_CASE("fps follows the greedy definition") {
    Rng rng(3);
    for (int trial = 0; trial < 30; ++trial) {
      const std::size_t n = 1 + rng.below(128);
      auto pts = oracle::random_points(rng, n);
      const std::size_t count = 1 + rng.below(n);
      const std::size_t start = rng.below(n);
      CHECK(oracle::satisfies_fps(pts, fps(pts, count, start), start));
    }
  }

  TEST_CASE("fps with duplicate points stays on the lowest index") {
    std::vector<Point3> pts{{0, 0, 0}, {0, 0, 0}, {1, 0, 0}, {1, 0, 0}};
    CHECK(fps(pts, 4, 0) == std::vector<std::size_t>{0, 2, 1, 3});
    CHECK(oracle::satisfies_fps(pts, fps(pts, 4, 0), 0));
    CHECK(oracle::satisfies_fps(pts, fps(pts, 4, 3), 3));
  }

  TEST_CASE("knn matches brute force on both code paths") {
    Rng rng(5);
    for (int trial = 0; trial < 40; ++trial) {
      const std::size_t n = 1 + rng.below(trial % 2 ? 400 : 60);
      auto ref = oracle::random_points(rng, n);
      auto qs = oracle::random_points(rng, 1 + rng.below(50), -1.3, 1.3);
      const std::size_t k = 1 + rng.below(std::min<std::size_t>(n, 12));
      const auto got = knn(ref, qs, k);
      REQUIRE(got.queries == qs.size());
      for (std::size_t q = 0; q < qs.size(); ++q) {
        const auto want = oracle::knn_row(ref, qs[q], k);
        CHECK(std::equal(want.begin(), want.end(), got.row(q).begin()));
      }
    }
  }

  TEST_CASE("knn handles duplicates and planar sets") {
    std::vector<Point3> ref;
    for (int i = 0; i < 100; ++i) ref.push_back({static_cast<double>(i % 10), static_cast<double>(i / 10), 0.0});
    ref.insert(ref.end(), ref.begin(), ref.begin() + 30);
    const auto got = knn(ref, ref, 6);
    for (std::size_t q = 0; q < ref.size(); ++q) {
      const auto want = oracle::knn_row(ref, ref[q], 6);
      CHECK(std::equal(want.begin(), want.end(), got.row(q).begin()));
    }
  }

  TEST_CASE("knn argument checks") {
    std::vector<Point3> ref{{0, 0, 0}};
    CHECK_THROWS_AS(knn(ref, ref, 0), DomainError);
    CHECK_THROWS_AS(knn(ref, ref, 2), DomainError);
  }

  TEST_CASE("nearest squared distances") {
    Rng rng(9);
    auto ref = oracle::random_points(rng, 300);
    auto qs = oracle::random_points(rng, 40);
    const auto d = nearest_squared_distances(ref, qs);
    for (std::size_t i = 0; i < qs.size(); ++i) CHECK(d[i] == oracle::min_sq(qs[i], ref));
  }

  TEST_CASE("normalize centers and scales to unit max norm") {
    PointCloud c({{1, 1, 1}, {3, 1, 1}, {2, 4, 1}});
    auto n = normalize(c);
    double max_norm = 0.0;
    for (const auto& p : n.cloud) max_norm = std::max(max_norm, norm(p));
    CHECK(max_norm == doctest::Approx(1.0));
    CHECK(norm(n.cloud.centroid()) < 1e-12);
    CHECK(distance(n.restore(n.cloud[2]), c[2]) < 1e-12);
    CHECK_THROWS_AS(normalize(PointCloud({{1, 1, 1}, {1, 1, 1}})), DegenerateInputError);
  }

  TEST_CASE("canonical start ignores input order") {
    std::vector<Point3> a{{1, 0, 0}, {-1, 2, 0}, {-1, 1, 5}};
    std::vector<Point3> b{a[2], a[0], a[1]};
    CHECK(a[canonical_start(a)] == b[canonical_start(b)]);
  }

  TEST_CASE("xyz round trip and parse errors") {
    std::vector<Point3> pts{{0.1, -2.5, 3e-7}, {1.0 / 3.0, 2, 1e10}};
    std::istringstream in(format_xyz(pts));
    const auto back = parse_xyz(in);
    CHECK(std::equal(pts.begin(), pts.end(), back.begin()));

    std::istringstream bad("# header\n0 0 0\n1 2 x\n");
    try {
      parse_xyz(bad);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 3);
    }
    std::istringstream loose("  0\t1   2 \n\n3 4 5\r\n");
    const auto parsed = parse_xyz(loose);
    CHECK(parsed.size() == 2);
    CHECK(parsed[0] == Point3{0, 1, 2});
    std::istringstream empty("# nothing\n");
    CHECK_THROWS_AS(parse_xyz(empty), ParseError);
  }
}
