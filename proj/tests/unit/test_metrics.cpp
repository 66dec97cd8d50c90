#include <doctest.h>

#include "oracles.hpp"
#include "proxytr/errors.hpp"
#include "proxytr/metrics.hpp"

using namespace proxytr;

TEST_SUITE("metrics") {
  TEST_CASE("singleton chamfer values") {
    PointCloud p({{0, 0, 0}}), g({{1, 0, 0}});
    CHECK(chamfer(p, g, ChamferPreset::cd_l2) == 2.0);
    CHECK(chamfer(p, g, ChamferPreset::cd_l1) == 1.0);
    PointCloud diag({{1, 1, 0}});
    CHECK(chamfer(p, diag, ChamferPreset::cd_l1_literal) == 2.0);
    CHECK(chamfer(p, diag, ChamferPreset::cd_l1) == doctest::Approx(std::sqrt(2.0)));
  }

  TEST_CASE("identical clouds") {
    Rng rng(1);
    PointCloud p(oracle::random_points(rng, 50));
    CHECK(chamfer(p, p, ChamferPreset::cd_l2) == 0.0);
    CHECK(chamfer(p, p, ChamferPreset::cd_l1) == 0.0);
    CHECK(fscore(p, p) == 1.0);
    CHECK(fidelity(p, p) == 0.0);
    CHECK(mmd(p, {p}) == 0.0);
  }

  TEST_CASE("random instances equal the brute-force references") {
    Rng rng(2);
    for (int trial = 0; trial < 50; ++trial) {
      auto a = oracle::random_points(rng, 1 + rng.below(64));
      auto b = oracle::random_points(rng, 1 + rng.below(64));
      PointCloud p(a), g(b);
      CHECK(std::abs(chamfer(p, g, ChamferPreset::cd_l2) - oracle::cd_l2(a, b)) <= 1e-12);
      CHECK(std::abs(chamfer(p, g, ChamferPreset::cd_l1) - oracle::cd_l1(a, b)) <= 1e-12);
      CHECK(std::abs(fscore(p, g, 0.3) - oracle::fscore(a, b, 0.3)) <= 1e-12);
      CHECK(std::abs(fidelity(p, g) - oracle::fidelity(a, b)) <= 1e-12);
    }
  }

  TEST_CASE("chamfer is symmetric and order free") {
    Rng rng(4);
    auto a = oracle::random_points(rng, 40);
    auto b = oracle::random_points(rng, 25);
    const double ab = chamfer(PointCloud(a), PointCloud(b), ChamferPreset::cd_l2);
    CHECK(ab == doctest::Approx(chamfer(PointCloud(b), PointCloud(a), ChamferPreset::cd_l2)).epsilon(1e-14));
    std::reverse(a.begin(), a.end());
    CHECK(chamfer(PointCloud(a), PointCloud(b), ChamferPreset::cd_l2) == doctest::Approx(ab).epsilon(1e-14));
  }

  TEST_CASE("fscore edge cases") {
    PointCloud p({{0, 0, 0}, {0.1, 0, 0}});
    PointCloud far({{5, 5, 5}});
    CHECK(fscore(p, far, 0.01) == 0.0);
    CHECK_THROWS_AS(fscore(p, p, 0.0), DomainError);

    std::vector<Point3> g{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}};
    auto pred = g;
    pred.push_back({10, 10, 10});
    CHECK(fscore(PointCloud(pred), PointCloud(g), 1e-6) == doctest::Approx(10.0 / 11.0).epsilon(1e-15));
  }

  TEST_CASE("fscore grows with the threshold") {
    Rng rng(6);
    PointCloud a(oracle::random_points(rng, 30)), b(oracle::random_points(rng, 30));
    double last = 0.0;
    for (double d = 0.01; d < 2.0; d *= 1.5) {
      const double f = fscore(a, b, d);
      CHECK(f >= last);
      last = f;
    }
  }

  TEST_CASE("fidelity is one-directional") {
    PointCloud in({{0, 0, 0}}), out({{0, 0, 3}});
    CHECK(fidelity(in, out) == 3.0);
    PointCloud big({{0, 0, 0}, {0, 0, 10}});
    CHECK(fidelity(in, big) == 0.0);
    CHECK(fidelity(big, in) == 5.0);
  }

  TEST_CASE("mmd takes the best reference") {
    Rng rng(8);
    PointCloud out(oracle::random_points(rng, 20));
    std::vector<PointCloud> refs;
    double best = 1e300;
    for (int i = 0; i < 3; ++i) {
      auto pts = oracle::random_points(rng, 20);
      best = std::min(best, oracle::cd_l2(std::vector<Point3>(out.begin(), out.end()), pts));
      refs.emplace_back(pts);
    }
    CHECK(std::abs(mmd(out, refs) - best) <= 1e-12);
    CHECK(mmd(out, {refs[1]}) == chamfer(out, refs[1], ChamferPreset::cd_l2));
    CHECK_THROWS_AS(mmd(out, {}), DomainError);
  }

  TEST_CASE("batch evaluation keeps order and is thread independent") {
    Rng rng(10);
    std::vector<std::string> ids;
    std::vector<PointCloud> preds, gts;
    for (int i = 0; i < 7; ++i) {
      ids.push_back("s" + std::to_string(i));
      preds.emplace_back(oracle::random_points(rng, 30));
      gts.emplace_back(oracle::random_points(rng, 30));
    }
    const auto one = evaluate_batch(ids, preds, gts, 0.1, 1);
    const auto four = evaluate_batch(ids, preds, gts, 0.1, 4);
    REQUIRE(one.size() == 7);
    CHECK(batch_report_json(one, 0.1) == batch_report_json(four, 0.1));
    CHECK(one[3].id == "s3");
    CHECK(one[3].report.cd_l2 == chamfer(preds[3], gts[3], ChamferPreset::cd_l2));
    CHECK_THROWS_AS(evaluate_batch(ids, preds, {}, 0.1, 1), UsageError);
  }
}
