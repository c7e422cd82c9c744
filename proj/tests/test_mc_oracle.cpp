#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "pfp/mc_oracle.hpp"
#include "pfp/random.hpp"

using namespace pfp;
using namespace pfp::testing;

namespace {

ModelGraph single_weight(double mean, double var) {
  ModelGraph m;
  m.input_shape = {1};
  m.layers.push_back(DenseLayer{dense_weights(1, 1, {mean}, {var})});
  return m;
}

}  // namespace

TEST_CASE("normal stream") {
  NormalStream a(42, 0), b(42, 0), c(42, 1);
  const double x = a();
  CHECK(x == b());
  CHECK(x != c());
  for (int i = 0; i < 100; ++i) {
    const double u = a.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double v = a.uniform_open_zero();
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("sample_network") {
  Synth g(1);
  SUBCASE("zero variance gives the mean network") {
    const auto m = small_cnn(g, true);
    const auto x = g.input({2, 1, 8, 8});
    const auto a = point_forward(sample_network(m, 3, 9), x);
    const auto b = point_forward(mean_network(m), x);
    CHECK((a.values() == b.values()).all());
  }
  SUBCASE("same index, same draw") {
    const auto m = mlp(g, 4, 5, 2);
    const auto a = std::get<PointDense>(sample_network(m, 7, 1).layers[0]);
    const auto b = std::get<PointDense>(sample_network(m, 7, 1).layers[0]);
    const auto c = std::get<PointDense>(sample_network(m, 8, 1).layers[0]);
    CHECK(a.weight == b.weight);
    CHECK(a.bias == b.bias);
    CHECK(a.weight != c.weight);
  }
  SUBCASE("weight draws follow N(2, 1)") {
    const auto m = single_weight(2.0, 1.0);
    const std::size_t n = 100000;
    double sum = 0;
    for (std::size_t s = 0; s < n; ++s) sum += std::get<PointDense>(sample_network(m, s, 3).layers[0]).weight(0, 0);
    CHECK(std::abs(sum / n - 2.0) <= 4.0 / std::sqrt(double(n)));
  }
}

TEST_CASE("mc_predict") {
  Synth g(2);
  SUBCASE("zero variance") {
    const auto m = mlp(g, 4, 6, 3, true);
    const auto x = g.input({2, 4});
    const auto s = mc_predict(m, x, 5, 1);
    const auto ref = point_forward(mean_network(m), x);
    for (std::size_t k = 0; k < 5; ++k)
      for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t c = 0; c < 3; ++c) CHECK(s.at(k, b, c) == ref.values()[b * 3 + c]);
  }
  SUBCASE("single weight variance") {
    const auto mom = empirical_moments(mc_predict(single_weight(2.0, 1.0), InputTensor({1, 1}, buf({3})), 1000000, 4));
    CHECK(std::abs(mom.var[0] - 9.0) <= 4 * mom.var_standard_error(0));
  }
  SUBCASE("lenet sample set shape") {
    const auto m = lenet(g);
    const auto s = mc_predict(m, g.input({2, 1, 28, 28}), 30, 42);
    CHECK(s.n_samples == 30);
    CHECK(s.batch == 2);
    CHECK(s.classes == 10);
    CHECK(s.logits.size() == 600);
  }
  SUBCASE("thread count does not change results") {
    const auto m = small_cnn(g);
    const auto x = g.input({3, 1, 8, 8});
    const auto a = mc_predict(m, x, 17, 6, 1);
    const auto b = mc_predict(m, x, 17, 6, 4);
    CHECK((a.logits == b.logits).all());
  }
}

TEST_CASE("empirical_moments") {
  SampleSet s{2, 1, 1, 0, buf({1, 3})};
  const auto m = empirical_moments(s);
  CHECK(m.mean[0] == 2.0);
  CHECK(m.var[0] == 2.0);

  SampleSet same{3, 1, 1, 0, buf({4, 4, 4})};
  CHECK(empirical_moments(same).var[0] == 0.0);

  SampleSet one{1, 1, 1, 0, buf({4})};
  CHECK_THROWS_AS(empirical_moments(one), InsufficientSamples);

  // N(6, 29) samples.
  const std::size_t n = 1000000;
  SampleSet big{n, 1, 1, 0, Buffer<double>(n)};
  NormalStream rng(5, 0);
  for (std::size_t i = 0; i < n; ++i) big.logits[i] = 6.0 + std::sqrt(29.0) * rng();
  const auto bm = empirical_moments(big);
  CHECK(std::abs(bm.mean[0] - 6.0) <= 4 * bm.mean_standard_error(0));
  CHECK(std::abs(bm.var[0] - 29.0) <= 4 * bm.var_standard_error(0));
}
