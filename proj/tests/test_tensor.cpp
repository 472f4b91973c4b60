#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "tinybit/tensor.hpp"

using namespace tinybit;

TEST_CASE("constant fills") {
  Tensor z = Tensor::zeros({2, 2});
  REQUIRE(z.shape() == std::vector<std::int64_t>{2, 2});
  for (std::int64_t i = 0; i < 4; ++i) REQUIRE(z[i] == 0.0f);

  Tensor ones = Tensor::full({3}, 1.0f);
  for (std::int64_t i = 0; i < 3; ++i) REQUIRE(ones[i] == 1.0f);
}

TEST_CASE("uniform fill consumes the generator in row-major order") {
  Prng rng(42);
  Tensor t = Tensor::uniform({4}, 0.0f, 1.0f, rng);
  Prng ref(42);
  for (std::int64_t i = 0; i < 4; ++i) REQUIRE(t[i] == ref.next_float());
}

TEST_CASE("invalid shapes are rejected") {
  REQUIRE_THROWS_AS(Tensor(std::vector<std::int64_t>{}), ShapeError);
  REQUIRE_THROWS_AS(Tensor({2, 0}), ShapeError);
  REQUIRE_THROWS_AS(Tensor({-1}), ShapeError);
  Prng rng(1);
  REQUIRE_THROWS_AS(Tensor::normal({2}, 0.0f, -1.0f, rng), RangeError);
}

TEST_CASE("elementwise ops") {
  const Tensor a({2}, {1.0f, 2.0f});
  const Tensor b({2}, {3.0f, 4.0f});
  const Tensor s = add(a, b);
  REQUIRE(s[0] == 4.0f);
  REQUIRE(s[1] == 6.0f);

  const Tensor d = sub(b, a);
  REQUIRE(d[0] == 2.0f);
  REQUIRE(d[1] == 2.0f);

  const Tensor p = mul(Tensor({2}, {2.0f, 3.0f}), Tensor({2}, {4.0f, 5.0f}));
  REQUIRE(p[0] == 8.0f);
  REQUIRE(p[1] == 15.0f);

  const Tensor sc = scale(a, 0.0f);
  REQUIRE(sc[0] == 0.0f);
  REQUIRE(sc[1] == 0.0f);

  const Tensor m = max_with_scalar(Tensor({3}, {-1.0f, 0.0f, 2.0f}), 0.0f);
  REQUIRE(m[0] == 0.0f);
  REQUIRE(m[1] == 0.0f);
  REQUIRE(m[2] == 2.0f);

  REQUIRE_THROWS_AS(add(a, Tensor({3})), ShapeError);
}

TEST_CASE("reduce_moments basics") {
  {
    const Tensor a({2}, {1.0f, 3.0f});
    const auto [mean, var] = reduce_moments(a, {0});
    REQUIRE(mean.shape() == std::vector<std::int64_t>{1});
    REQUIRE(mean[0] == 2.0f);
    REQUIRE(var[0] == 1.0f);
  }
  {
    const Tensor c = Tensor::full({5}, 3.25f);
    const auto [mean, var] = reduce_moments(c, {0});
    REQUIRE(mean[0] == 3.25f);
    REQUIRE(var[0] == 0.0f);
  }
  {
    const Tensor a({2, 2}, {1.0f, 2.0f, 3.0f, 4.0f});
    const auto [mean, var] = reduce_moments(a, {0, 1});
    REQUIRE(mean[0] == 2.5f);
    REQUIRE(var[0] == 1.25f);
  }
  {
    // empty axis set: mean = copy, var = 0
    const Tensor a({2}, {5.0f, -1.0f});
    const auto [mean, var] = reduce_moments(a, {});
    REQUIRE(mean[0] == 5.0f);
    REQUIRE(mean[1] == -1.0f);
    REQUIRE(var[0] == 0.0f);
  }
  {
    // axis subsets keep the remaining axes
    const Tensor a({2, 3}, {1, 2, 3, 4, 5, 6});
    const auto [mean, var] = reduce_moments(a, {1});
    REQUIRE(mean.shape() == std::vector<std::int64_t>{2});
    REQUIRE(mean[0] == 2.0f);
    REQUIRE(mean[1] == 5.0f);
    REQUIRE(var[0] == Catch::Approx(2.0 / 3.0));
  }
  REQUIRE_THROWS_AS(reduce_moments(Tensor({2}), {1}), ShapeError);
}

TEST_CASE("matmul") {
  const Tensor eye({2, 2}, {1, 0, 0, 1});
  const Tensor m({2, 2}, {1, 2, 3, 4});
  const Tensor r = matmul(eye, m);
  for (std::int64_t i = 0; i < 4; ++i) REQUIRE(r[i] == m[i]);

  const Tensor a({1, 2}, {1, 2});
  const Tensor b({2, 1}, {3, 4});
  REQUIRE(matmul(a, b)[0] == 11.0f);

  Prng rng(5);
  const Tensor z = matmul(Tensor::zeros({2, 3}), Tensor::uniform({3, 2}, -1, 1, rng));
  for (std::int64_t i = 0; i < z.numel(); ++i) REQUIRE(z[i] == 0.0f);

  REQUIRE_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
}

TEST_CASE("matmul associativity within tolerance on random 8x8 inputs") {
  Prng rng(2024);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor a = Tensor::uniform({8, 8}, -1, 1, rng);
    const Tensor b = Tensor::uniform({8, 8}, -1, 1, rng);
    const Tensor c = Tensor::uniform({8, 8}, -1, 1, rng);
    const Tensor left = matmul(matmul(a, b), c);
    const Tensor right = matmul(a, matmul(b, c));
    for (std::int64_t i = 0; i < left.numel(); ++i)
      REQUIRE(std::abs(left[i] - right[i]) <= 1e-4);
  }
}

TEST_CASE("reshape round-trips bitwise") {
  Prng rng(8);
  const Tensor t = Tensor::uniform({3, 4, 5}, -10, 10, rng);
  const Tensor back = t.reshaped({60}).reshaped({3, 4, 5});
  REQUIRE(back.shape() == t.shape());
  for (std::int64_t i = 0; i < t.numel(); ++i) REQUIRE(back[i] == t[i]);
  REQUIRE_THROWS_AS(t.reshaped({61}), ShapeError);
}

TEST_CASE("full reduction of a constant tensor is exact") {
  for (float v : {0.0f, -2.5f, 7.125f}) {
    const Tensor t = Tensor::full({3, 4}, v);
    const auto [mean, var] = reduce_moments(t, {0, 1});
    REQUIRE(mean[0] == v);
    REQUIRE(var[0] == 0.0f);
  }
}
