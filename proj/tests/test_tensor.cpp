#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ust/nn/adam.hpp"
#include "ust/nn/tensor.hpp"
#include "ust/nn/tensor_io.hpp"

using ust::nn::Tensor;

TEST_CASE("linear loss gives the weight as gradient") {
  auto x = Tensor<double>::from({3}, {1.0, 2.0, 3.0}, true);
  auto w = Tensor<double>::from({3}, {0.5, -1.0, 2.0}, false);
  auto loss = ust::nn::sum(ust::nn::mul(w, x));
  loss.backward();
  REQUIRE(x.has_grad());
  CHECK(x.grad()[0] == doctest::Approx(0.5));
  CHECK(x.grad()[1] == doctest::Approx(-1.0));
  CHECK(x.grad()[2] == doctest::Approx(2.0));
}

TEST_CASE("detach blocks gradient flow") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto d = x.detach();
  CHECK_FALSE(d.requires_grad());
  auto y = Tensor<double>::from({2}, {3.0, 4.0}, true);
  auto loss = ust::nn::sum(ust::nn::mul(d, y));
  loss.backward();
  // x took no part in the graph
  for (double g : x.grad()) CHECK(g == 0.0);
  CHECK(y.grad()[0] == doctest::Approx(1.0));
  CHECK(y.grad()[1] == doctest::Approx(2.0));
}

TEST_CASE("double backward without zeroing is an error") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  auto loss = ust::nn::sum(x);
  loss.backward();
  CHECK_THROWS_AS(loss.backward(), ust::Error);
}

TEST_CASE("backward requires a scalar on the tape") {
  auto x = Tensor<double>::from({2}, {1.0, 2.0}, true);
  CHECK_THROWS_AS(x.backward(), ust::Error);
  auto constant = Tensor<double>::from({1}, {3.0}, false);
  CHECK_THROWS_AS(constant.backward(), ust::Error);
}

TEST_CASE("gradients accumulate across branches") {
  auto x = Tensor<double>::from({1}, {3.0}, true);
  auto loss = ust::nn::sum(ust::nn::add(ust::nn::scale(x, 2.0), ust::nn::scale(x, 5.0)));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(7.0));
}

TEST_CASE("mse_loss matches hand arithmetic") {
  auto p0 = Tensor<float>::from({2}, {1.0f, 2.0f}, true);
  auto t0 = Tensor<float>::from({2}, {1.0f, 2.0f});
  CHECK(ust::nn::mse_loss(p0, t0).item() == doctest::Approx(0.0));

  auto p1 = Tensor<float>::from({4}, {2.0f, 2.0f, 2.0f, 2.0f});
  auto t1 = Tensor<float>::from({4}, {1.0f, 1.0f, 1.0f, 1.0f});
  CHECK(ust::nn::mse_loss(p1, t1).item() == doctest::Approx(1.0));

  auto p2 = Tensor<float>::from({2}, {0.0f, 2.0f});
  auto t2 = Tensor<float>::from({2}, {1.0f, 0.0f});
  CHECK(ust::nn::mse_loss(p2, t2).item() == doctest::Approx(2.5));
}

TEST_CASE("mse_loss rejects tracked targets and shape mismatches") {
  auto p = Tensor<float>::from({2}, {0.0f, 2.0f}, true);
  auto t_tracked = Tensor<float>::from({2}, {1.0f, 0.0f}, true);
  CHECK_THROWS_AS(ust::nn::mse_loss(p, t_tracked), ust::Error);
  auto t_bad = Tensor<float>::from({3}, {1.0f, 0.0f, 0.0f});
  CHECK_THROWS_AS(ust::nn::mse_loss(p, t_bad), ust::Error);
}

TEST_CASE("non-finite op results are rejected") {
  auto x = Tensor<float>::from({1}, {50.0f}, true);
  auto y = x;
  // exp-free path: drive sigmoid-softplus chains into overflow via repeated scaling
  for (int i = 0; i < 4; ++i) y = ust::nn::mul(y, y);
  CHECK_THROWS_AS(ust::nn::scale(y, std::numeric_limits<float>::max()), ust::Error);
}

TEST_CASE("no-grad mode keeps results off the tape") {
  auto x = Tensor<float>::from({2}, {1.0f, 2.0f}, true);
  ust::nn::NoGradGuard guard;
  auto y = ust::nn::scale(x, 2.0f);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("t32 round trip is exact") {
  const auto path = std::filesystem::temp_directory_path() / "ust_test_tensor.t32";
  std::vector<float> data = {0.0f, -1.5f, 3.25f, 1e-20f, 1e20f, 0.1f};
  ust::nn::write_t32(path, {2, 3}, data);
  auto back = ust::nn::read_t32(path);
  CHECK(back.shape == std::vector<int>{2, 3});
  REQUIRE(back.data.size() == data.size());
  for (size_t i = 0; i < data.size(); ++i) CHECK(back.data[i] == data[i]);
  std::filesystem::remove(path);
}

TEST_CASE("t32 rejects corrupt files") {
  const auto path = std::filesystem::temp_directory_path() / "ust_test_bad.t32";
  {
    std::ofstream out(path, std::ios::binary);
    out << "NOPE";
  }
  CHECK_THROWS_AS(ust::nn::read_t32(path), ust::Error);
  std::filesystem::remove(path);
}

TEST_CASE("adam first step magnitude is lr, bias-corrected") {
  auto p = Tensor<float>::from({3}, {1.0f, 2.0f, 3.0f}, true);
  p.raw_grad() = {0.7f, -2.0f, 31.0f};
  std::vector<Tensor<float>> params = {p};
  ust::nn::AdamState<float> st;
  st.lr = 1e-3f;
  st.init(params);
  ust::nn::adam_step(params, st);
  CHECK(st.step == 1);
  CHECK(std::abs(p.value()[0] - (1.0f - 1e-3f)) < 1e-6);
  CHECK(std::abs(p.value()[1] - (2.0f + 1e-3f)) < 1e-6);
  CHECK(std::abs(p.value()[2] - (3.0f - 1e-3f)) < 1e-6);
}

TEST_CASE("adam leaves parameters alone for zero grad or zero lr") {
  auto p = Tensor<float>::from({2}, {1.0f, -1.0f}, true);
  std::vector<Tensor<float>> params = {p};
  ust::nn::AdamState<float> st;
  st.init(params);
  ust::nn::adam_step(params, st);  // grad is zero
  CHECK(p.value()[0] == 1.0f);
  CHECK(p.value()[1] == -1.0f);

  p.raw_grad() = {5.0f, 5.0f};
  st.lr = 0.0f;
  ust::nn::adam_step(params, st);
  CHECK(p.value()[0] == 1.0f);
  CHECK(p.value()[1] == -1.0f);
}

TEST_CASE("adam rejects mismatched grads") {
  auto p = Tensor<float>::from({2}, {1.0f, -1.0f}, true);
  std::vector<Tensor<float>> params = {p};
  ust::nn::AdamState<float> st;
  st.init(params);
  p.raw_grad().resize(3);
  CHECK_THROWS_AS(ust::nn::adam_step(params, st), ust::Error);
}
