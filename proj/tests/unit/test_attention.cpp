#include <doctest.h>

#include <numeric>

#include "oracles.hpp"
#include "proxytr/attention.hpp"
#include "proxytr/errors.hpp"

using namespace proxytr;

namespace {

Tensor<double> random_features(Rng& rng, std::size_t n, std::size_t c) {
  std::vector<double> v(n * c);
  for (auto& x : v) x = rng.uniform(-1, 1);
  return Tensor<double>::from({n, c}, v);
}

void set_identity(Linear<double>& l) {
  auto& w = l.weight.mutable_value();
  w.fill(0.0);
  for (std::size_t i = 0; i < w.rows(); ++i) w.at(i, i) = 1.0;
  l.bias.mutable_value().fill(0.0);
}

std::vector<std::size_t> shuffled_indices(Rng& rng, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(perm[i - 1], perm[rng.below(i)]);
  return perm;
}

BlockConfig small_block() {
  BlockConfig b;
  b.width = 8;
  b.heads = 2;
  b.ffn_hidden = 16;
  b.k_geo = 3;
  return b;
}

}  // namespace

TEST_SUITE("attention") {
  TEST_CASE("group masks") {
    const auto m = AttentionMask::from_groups({0, 0, 1});
    const std::vector<std::uint8_t> want{1, 1, 0, 1, 1, 0, 0, 0, 1};
    CHECK(m.allowed == want);
    CHECK_NOTHROW(m.validate(3, 3));
    CHECK_THROWS_AS(m.validate(4, 4), UsageError);
    AttentionMask blocked{2, 2, {1, 1, 0, 0}};
    CHECK_THROWS_AS(blocked.validate(2, 2), DomainError);
  }

  TEST_CASE("masked knn stays inside the allowed set") {
    Rng rng(1);
    auto pts = oracle::random_points(rng, 10);
    std::vector<std::size_t> group(10, 0);
    group[7] = group[8] = group[9] = 1;
    const auto mask = AttentionMask::from_groups(group);
    const auto nbrs = masked_knn(pts, &mask, 4);
    for (std::size_t i = 0; i < 7; ++i) {
      std::vector<Point3> sub(pts.begin(), pts.begin() + 7);
      const auto want = oracle::knn_row(sub, pts[i], 4);
      CHECK(std::equal(want.begin(), want.end(), nbrs.row(i).begin()));
    }
    for (std::size_t i = 7; i < 10; ++i) {
      const auto row = nbrs.row(i);
      CHECK(row[0] == i);
      CHECK(row[3] == row[0]);
      for (auto j : row) CHECK(group[j] == 1);
    }
    CHECK_THROWS_AS(masked_knn(pts, nullptr, 11), DomainError);
  }

  TEST_CASE("identical keys give the mean of the values") {
    ParamRegistry<double> reg(2);
    MultiHeadAttention<double> mha(reg, "mha", 4, 1);
    for (auto* l : {&mha.wq, &mha.wk, &mha.wv, &mha.wo}) set_identity(*l);
    Rng rng(3);
    const auto q = random_features(rng, 3, 4);
    const auto k = Tensor<double>::from({3, 4}, {1, 2, 3, 4, 1, 2, 3, 4, 1, 2, 3, 4});
    const auto v = random_features(rng, 3, 4);
    const auto out = mha(q, k, v);
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t c = 0; c < 4; ++c) {
        const double mean = (v.value().at(0, c) + v.value().at(1, c) + v.value().at(2, c)) / 3.0;
        CHECK(out.value().at(i, c) == doctest::Approx(mean).epsilon(1e-12));
      }
    }
  }

  TEST_CASE("attention gradients") {
    ParamRegistry<double> reg(4);
    MultiHeadAttention<double> mha(reg, "mha", 6, 3);
    Rng rng(5);
    auto x = random_features(rng, 5, 6);
    auto mem = random_features(rng, 4, 6);
    const auto mask = AttentionMask::from_groups({0, 0, 1, 0, 1});
    auto loss = [&] {
      auto self = mha(x, x, x, &mask);
      auto cross = mha(self, mem, mem);
      return sum_all(mul(cross, cross));
    };
    std::vector<Tensor<double>> params;
    for (const auto& p : reg.params()) params.push_back(p.tensor);
    CHECK(oracle::max_gradient_error(loss, params) < 1e-6);
  }

  TEST_CASE("moving a far point changes only the kNN path") {
    ParamRegistry<double> reg(6);
    MultiHeadAttention<double> mha(reg, "mha", 8, 2);
    GeometryPath<double> geo(reg, "geo", 8, 2);
    Rng rng(7);
    auto feats = random_features(rng, 6, 8);
    std::vector<Point3> coords{{0, 0, 0}, {0.1, 0, 0}, {5, 5, 5}, {5.1, 5, 5}, {0, 0.3, 0}, {5, 5.3, 5}};
    const auto att = mha(feats, feats, feats);
    const auto before = geo(feats, att, coords, nullptr);
    auto moved = coords;
    moved[1] = {5, 5, 5.05};
    const auto after = geo(feats, att, moved, nullptr);
    CHECK(mha(feats, feats, feats).value() == att.value());
    bool changed = false;
    for (std::size_t i = 0; i < before.numel(); ++i) changed = changed || before.value()[i] != after.value()[i];
    CHECK(changed);
  }

  TEST_CASE("encoder is permutation equivariant") {
    ParamRegistry<double> reg(8);
    Encoder<double> enc(reg, "enc", small_block(), 2, 1);
    Rng rng(9);
    for (int trial = 0; trial < 5; ++trial) {
      ProxySequenceState<double> s{oracle::random_points(rng, 9), random_features(rng, 9, 8)};
      const auto perm = shuffled_indices(rng, 9);
      ProxySequenceState<double> p{{}, gather_rows(s.features, perm)};
      for (auto i : perm) p.coords.push_back(s.coords[i]);
      const auto a = enc(s);
      const auto b = enc(p);
      for (std::size_t r = 0; r < 9; ++r) {
        for (std::size_t c = 0; c < 8; ++c) {
          CHECK(std::abs(b.features.value().at(r, c) - a.features.value().at(perm[r], c)) < 1e-12);
        }
      }
    }
  }

  TEST_CASE("decoder rows in another mask group are isolated") {
    ParamRegistry<double> reg(10);
    Decoder<double> dec(reg, "dec", small_block(), 2, 1);
    Rng rng(11);
    ProxySequenceState<double> memory{oracle::random_points(rng, 7), random_features(rng, 7, 8)};
    ProxySequenceState<double> normal{oracle::random_points(rng, 5), random_features(rng, 5, 8)};
    const auto alone = dec(normal, memory, AttentionMask::full(5, 5));

    ProxySequenceState<double> joined = normal;
    const auto extra = oracle::random_points(rng, 4);
    joined.coords.insert(joined.coords.end(), extra.begin(), extra.end());
    joined.features = concat_rows<double>({normal.features, random_features(rng, 4, 8)});
    std::vector<std::size_t> group{0, 0, 0, 0, 0, 1, 1, 1, 1};
    const auto both = dec(joined, memory, AttentionMask::from_groups(group));
    for (std::size_t r = 0; r < 5; ++r) {
      for (std::size_t c = 0; c < 8; ++c) {
        CHECK(std::abs(both.features.value().at(r, c) - alone.features.value().at(r, c)) <= 1e-12);
      }
    }
    CHECK_THROWS_AS(dec(joined, memory, AttentionMask::full(5, 5)), UsageError);
  }

  TEST_CASE("zero depth is the identity") {
    ParamRegistry<double> reg(12);
    Encoder<double> enc(reg, "enc", small_block(), 0, 0);
    Rng rng(13);
    ProxySequenceState<double> s{oracle::random_points(rng, 4), random_features(rng, 4, 8)};
    CHECK(enc(s).features.value() == s.features.value());
    CHECK(reg.params().empty());
  }
}
