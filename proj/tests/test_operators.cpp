#include <doctest.h>

#include <cmath>
#include <vector>

#include "fixtures.hpp"
#include "pfp/mc_oracle.hpp"
#include "pfp/moments.hpp"
#include "pfp/operators.hpp"
#include "pfp/random.hpp"

using namespace pfp;
using pfp::testing::buf;
using pfp::testing::dense_weights;
using pfp::testing::weights;

namespace {

Tensor srm_input(Shape shape, Buffer<double> mean, Buffer<double> var) {
  return convert_spread(Tensor(std::move(shape), std::move(mean), std::move(var), SpreadKind::Variance),
                        SpreadKind::SecondRawMoment);
}

ModelGraph single_layer(Shape input_shape, LayerSpec layer) {
  ModelGraph m;
  m.input_shape = std::move(input_shape);
  m.layers.push_back(std::move(layer));
  return m;
}

}  // namespace

TEST_CASE("dense_pfp") {
  SUBCASE("single neuron") {
    const auto out = dense_pfp(srm_input({1, 1}, buf({3}), buf({4})), dense_weights(1, 1, {2}, {1}));
    CHECK(out.kind() == SpreadKind::Variance);
    CHECK(out.mean()[0] == 6.0);
    CHECK(out.spread()[0] == 29.0);
  }
  SUBCASE("zero variance") {
    const auto out = dense_pfp(srm_input({1, 1}, buf({-2.5}), buf({0})), dense_weights(1, 1, {1}, {0}));
    CHECK(out.mean()[0] == -2.5);
    CHECK(out.spread()[0] == 0.0);
  }
  SUBCASE("two inputs") {
    const auto out = dense_pfp(srm_input({1, 2}, buf({1, 2}), buf({1, 1})),
                               dense_weights(1, 2, {1, 2}, {0.5, 0.25}));
    CHECK(out.mean()[0] == 5.0);
    CHECK(out.spread()[0] == 7.25);
  }
  SUBCASE("wrong input kind") {
    const Tensor t({1, 1}, buf({3}), buf({4}), SpreadKind::Variance);
    CHECK_THROWS_AS(dense_pfp(t, dense_weights(1, 1, {2}, {1})), WrongSpreadKind);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(dense_pfp(srm_input({1, 3}, buf({1, 2, 3}), buf({0, 0, 0})),
                              dense_weights(1, 2, {1, 2}, {0, 0})),
                    ShapeError);
  }
  SUBCASE("bias terms") {
    const auto w = dense_weights(1, 1, {2}, {1}, ProbabilisticBias{buf({0.5}), buf({0.25})});
    const auto out = dense_pfp(srm_input({1, 1}, buf({3}), buf({4})), w);
    CHECK(out.mean()[0] == 6.5);
    CHECK(out.spread()[0] == 29.25);
    const auto det = dense_weights(1, 1, {2}, {1}, DeterministicBias{buf({-1})});
    const auto out2 = dense_pfp(srm_input({1, 1}, buf({3}), buf({4})), det);
    CHECK(out2.mean()[0] == 5.0);
    CHECK(out2.spread()[0] == 29.0);
  }
}

TEST_CASE("dense matches sampling") {
  SUBCASE("single neuron") {
    // w x with w ~ N(2, 1), x ~ N(3, 4): sample the product directly.
    NormalStream rng(99, 0);
    const std::size_t n = 1000000;
    std::vector<double> prod(n);
    double s1 = 0;
    for (auto& p : prod) {
      const double w = 2.0 + rng();
      const double x = 3.0 + 2.0 * rng();
      p = w * x;
      s1 += p;
    }
    const double mean = s1 / n;
    double s2 = 0, s4 = 0;
    for (double p : prod) {
      const double d = (p - mean) * (p - mean);
      s2 += d;
      s4 += d * d;
    }
    const double var = s2 / n, m4 = s4 / n;
    CHECK(std::abs(mean - 6.0) <= 4 * std::sqrt(var / n));
    CHECK(std::abs(var - 29.0) <= 4 * std::sqrt((m4 - var * var) / n));
  }
}

TEST_CASE("dense_pfp_det_input") {
  SUBCASE("single neuron") {
    const auto out = dense_pfp_det_input(InputTensor({1, 1}, buf({3})), dense_weights(1, 1, {2}, {1}));
    CHECK(out.mean()[0] == 6.0);
    CHECK(out.spread()[0] == 9.0);
  }
  SUBCASE("deterministic weights") {
    const auto out = dense_pfp_det_input(InputTensor({2, 2}, buf({1, 2, -1, 0.5})),
                                         dense_weights(1, 2, {0.5, -2}, {0, 0}));
    CHECK(out.mean()[0] == 0.5 - 4.0);
    CHECK(out.mean()[1] == -0.5 - 1.0);
    CHECK(out.spread()[0] == 0.0);
    CHECK(out.spread()[1] == 0.0);
  }
  SUBCASE("zero input leaves the bias") {
    const InputTensor x({1, 2}, buf({0, 0}));
    const auto prob = dense_pfp_det_input(
        x, dense_weights(1, 2, {1, 2}, {3, 4}, ProbabilisticBias{buf({0.7}), buf({0.2})}));
    CHECK(prob.mean()[0] == 0.7);
    CHECK(prob.spread()[0] == 0.2);
    const auto det = dense_pfp_det_input(x, dense_weights(1, 2, {1, 2}, {3, 4}, DeterministicBias{buf({0.7})}));
    CHECK(det.mean()[0] == 0.7);
    CHECK(det.spread()[0] == 0.0);
    const auto none = dense_pfp_det_input(x, dense_weights(1, 2, {1, 2}, {3, 4}));
    CHECK(none.mean()[0] == 0.0);
    CHECK(none.spread()[0] == 0.0);
  }
  SUBCASE("sampled variance") {
    const auto m = single_layer({1}, DenseLayer{dense_weights(1, 1, {2}, {1})});
    const auto mom = empirical_moments(mc_predict(m, InputTensor({1, 1}, buf({3})), 1000000, 21));
    CHECK(std::abs(mom.mean[0] - 6.0) <= 4 * mom.mean_standard_error(0));
    CHECK(std::abs(mom.var[0] - 9.0) <= 4 * mom.var_standard_error(0));
  }
}

TEST_CASE("fused and separate dense paths agree bitwise") {
  pfp::testing::Synth g(5);
  const auto w = g.layer({7, 13}, 0.5, 0.1);
  const auto x = convert_spread(Tensor({3, 13}, g.array(39, -1, 1), g.array(39, 0, 0.5), SpreadKind::Variance),
                                SpreadKind::SecondRawMoment);
  const auto fused = dense_pfp(x, w);
  const auto mean = dense_mean_only(x, w);
  const auto var = dense_variance_only(x, w);
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    CHECK(fused.mean()[i] == mean[i]);
    CHECK(fused.spread()[i] == var[i]);
  }
  const auto srm_w = with_spread_kind(w, SpreadKind::SecondRawMoment);
  const auto again = dense_pfp(x, srm_w);
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    CHECK(again.mean()[i] == fused.mean()[i]);
    CHECK(again.spread()[i] == doctest::Approx(fused.spread()[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv_output_extent") {
  CHECK(conv_output_extent(28, 5, 1) == 24);
  CHECK(conv_output_extent(7, 3, 2) == 3);
  CHECK_THROWS_AS(conv_output_extent(8, 3, 2), ShapeError);
  CHECK_THROWS_AS(conv_output_extent(2, 3, 1), ShapeError);
}

TEST_CASE("conv2d_pfp") {
  const auto x = srm_input({1, 1, 2, 2}, buf({1, 2, 3, 4}), buf({0, 0, 0, 0}));
  SUBCASE("1x1 scaling") {
    const auto out = conv2d_pfp(x, weights({1, 1, 1, 1}, buf({2}), buf({0})), 1);
    CHECK(out.shape() == Shape{1, 1, 2, 2});
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(out.mean()[i] == 2.0 * (i + 1));
      CHECK(out.spread()[i] == 0.0);
    }
  }
  SUBCASE("2x2 ones") {
    const auto out = conv2d_pfp(x, weights({1, 1, 2, 2}, buf({1, 1, 1, 1}), buf({0, 0, 0, 0})), 1);
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out.mean()[0] == 10.0);
    CHECK(out.spread()[0] == 0.0);
  }
  SUBCASE("1x1 agrees with dense") {
    const auto out = conv2d_pfp(srm_input({1, 1, 1, 1}, buf({3}), buf({4})),
                                weights({1, 1, 1, 1}, buf({2}), buf({1})), 1);
    CHECK(out.mean()[0] == 6.0);
    CHECK(out.spread()[0] == 29.0);
  }
  SUBCASE("rank and channel checks") {
    CHECK_THROWS_AS(conv2d_pfp(srm_input({1, 4}, buf({1, 2, 3, 4}), buf({0, 0, 0, 0})),
                               weights({1, 1, 1, 1}, buf({2}), buf({0})), 1),
                    ShapeError);
    CHECK_THROWS_AS(conv2d_pfp(x, weights({1, 2, 1, 1}, buf({2, 2}), buf({0, 0})), 1), ShapeError);
  }
}

TEST_CASE("conv2d_pfp_det_input") {
  SUBCASE("1x1") {
    const auto out = conv2d_pfp_det_input(InputTensor({1, 1, 1, 1}, buf({3})),
                                          weights({1, 1, 1, 1}, buf({2}), buf({1})), 1);
    CHECK(out.mean()[0] == 6.0);
    CHECK(out.spread()[0] == 9.0);
  }
  SUBCASE("zero input") {
    const auto out = conv2d_pfp_det_input(
        InputTensor({1, 1, 3, 3}, Buffer<double>::Zero(9)),
        weights({2, 1, 2, 2}, Eigen::ArrayXd::Constant(8, 1.0), Eigen::ArrayXd::Constant(8, 2.0),
                ProbabilisticBias{buf({0.1, -0.2}), buf({0.3, 0.4})}),
        1);
    CHECK(out.shape() == Shape{1, 2, 2, 2});
    for (Eigen::Index i = 0; i < 4; ++i) {
      CHECK(out.mean()[i] == 0.1);
      CHECK(out.spread()[i] == 0.3);
      CHECK(out.mean()[4 + i] == -0.2);
      CHECK(out.spread()[4 + i] == 0.4);
    }
  }
  SUBCASE("deterministic weights, stride 2") {
    pfp::testing::Synth g(3);
    const auto x = g.input({2, 2, 5, 5});
    const auto mean = g.array(2 * 2 * 3 * 3, -1, 1);
    const auto w = weights({2, 2, 3, 3}, mean, Eigen::ArrayXd::Zero(mean.size()), DeterministicBias{buf({0.5, -0.5})});
    const auto out = conv2d_pfp_det_input(x, w, 2);
    REQUIRE(out.shape() == Shape{2, 2, 2, 2});
    for (std::size_t b = 0; b < 2; ++b)
      for (std::size_t u = 0; u < 2; ++u)
        for (std::size_t e = 0; e < 2; ++e)
          for (std::size_t f = 0; f < 2; ++f) {
            double acc = u == 0 ? 0.5 : -0.5;
            for (std::size_t c = 0; c < 2; ++c)
              for (std::size_t r = 0; r < 3; ++r)
                for (std::size_t s = 0; s < 3; ++s)
                  acc += mean[((u * 2 + c) * 3 + r) * 3 + s] *
                         x.values()[((b * 2 + c) * 5 + 2 * e + r) * 5 + 2 * f + s];
            const auto i = static_cast<Eigen::Index>(((b * 2 + u) * 2 + e) * 2 + f);
            CHECK(out.mean()[i] == doctest::Approx(acc).epsilon(1e-13));
            CHECK(out.spread()[i] == 0.0);
          }
  }
}

TEST_CASE("relu_moment_match") {
  const Tensor t({3}, buf({0, -10, 10}), buf({1, 1e-4, 1e-4}), SpreadKind::Variance);
  const auto out = relu_moment_match(t);
  CHECK(out.kind() == SpreadKind::SecondRawMoment);
  CHECK(std::abs(out.mean()[0] - 0.39894228040143268) <= 1e-15);
  CHECK(out.spread()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::abs(out.mean()[1]) <= 1e-12);
  CHECK(std::abs(out.spread()[1]) <= 1e-12);
  CHECK(std::abs(out.mean()[2] - 10.0) <= 1e-9 * 10.0);
  CHECK(std::abs(out.spread()[2] - 100.0001) <= 1e-9 * 100.0001);
  CHECK_THROWS_AS(relu_moment_match(convert_spread(t, SpreadKind::SecondRawMoment)), WrongSpreadKind);
}

TEST_CASE("maxpool2_pfp") {
  SUBCASE("deterministic window") {
    const auto out = maxpool2_pfp(Tensor({1, 1, 2, 2}, buf({1, 2, 3, 4}), buf({0, 0, 0, 0}), SpreadKind::Variance));
    CHECK(out.shape() == Shape{1, 1, 1, 1});
    CHECK(out.mean()[0] == 4.0);
    CHECK(out.spread()[0] == 0.0);
  }
  SUBCASE("reduction order") {
    const Tensor t({1, 1, 2, 2}, buf({0.1, -0.3, 0.4, 0.2}), buf({1.0, 0.5, 0.8, 2.0}), SpreadKind::Variance);
    const auto ab = gaussian_max_moments(0.1, 1.0, -0.3, 0.5);
    const auto cd = gaussian_max_moments(0.4, 0.8, 0.2, 2.0);
    const auto r = gaussian_max_moments(ab.mean, ab.var, cd.mean, cd.var);
    const auto out = maxpool2_pfp(t);
    CHECK(out.mean()[0] == r.mean);
    CHECK(out.spread()[0] == r.var);
  }
  SUBCASE("shape") {
    const auto out = maxpool2_pfp(Tensor::zeros({2, 3, 4, 6}, SpreadKind::Variance));
    CHECK(out.shape() == Shape{2, 3, 2, 3});
    CHECK_THROWS_AS(maxpool2_pfp(Tensor::zeros({1, 1, 3, 4}, SpreadKind::Variance)), ShapeError);
    CHECK_THROWS_AS(maxpool2_pfp(Tensor::zeros({1, 1, 2, 2}, SpreadKind::SecondRawMoment)), WrongSpreadKind);
  }
}

TEST_CASE("flatten") {
  const Tensor t({2, 1, 2, 2}, buf({0, 1, 2, 3, 4, 5, 6, 7}), Buffer<double>::Zero(8), SpreadKind::Variance);
  const auto f = flatten(t);
  CHECK(f.shape() == Shape{2, 4});
  for (Eigen::Index i = 0; i < 8; ++i) CHECK(f.mean()[i] == double(i));
  CHECK(flatten(f).shape() == Shape{2, 4});
  CHECK(flatten(f).mean().isApprox(f.mean()));
  CHECK(flatten(InputTensor({2, 3}, Buffer<double>::Zero(6))).shape() == Shape{2, 3});
}

TEST_CASE("variance form equivalence") {
  pfp::testing::Synth g(77);
  for (int i = 0; i < 1000; ++i) {
    const double wm = g.uniform(-3, 3), wv = g.uniform(0, 2), xm = g.uniform(-3, 3), xv = g.uniform(0, 2);
    const double mixed = product_variance_mixed(wm, wv, xm, xm * xm + xv);
    const double mv = product_variance_mean_var(wm, wv, xm, xv);
    CHECK(std::abs(mixed - mv) <= 1e-10 * std::max(std::abs(mv), 1e-300));
  }
}
