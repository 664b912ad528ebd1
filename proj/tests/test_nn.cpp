#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mmer/adam.hpp"
#include "mmer/checkpoint.hpp"
#include "mmer/grad_check.hpp"
#include "mmer/ops.hpp"
#include "mmer/rng.hpp"

using namespace mmer;
using namespace mmer::nn;

namespace {

TensorD random_tensor(Shape shape, uint64_t seed, bool requires_grad = true, double scl = 1.0) {
  auto t = TensorD::zeros(std::move(shape), requires_grad);
  Rng rng(seed);
  for (auto& v : t.data()) v = scl * rng.gauss();
  return t;
}

Tensor random_tensor_f(Shape shape, uint64_t seed, bool requires_grad = false) {
  auto t = Tensor::zeros(std::move(shape), requires_grad);
  Rng rng(seed);
  for (auto& v : t.data()) v = static_cast<float>(rng.gauss());
  return t;
}

}  // namespace

TEST_CASE("relu definition") {
  auto x = Tensor::from_vector({3}, {-1.0f, 0.0f, 2.0f});
  auto y = relu(x);
  CHECK(y.data() == std::vector<float>{0.0f, 0.0f, 2.0f});
}

TEST_CASE("softmax of equal logits is uniform and rows sum to one") {
  auto x = Tensor::filled({2, 8}, 3.25f);
  auto y = softmax_lastdim(x);
  for (float v : y.data()) CHECK(v == doctest::Approx(0.125).epsilon(1e-6));

  auto z = softmax_lastdim(random_tensor_f({5, 16}, 3));
  for (int64_t r = 0; r < 5; ++r) {
    float sum = 0;
    for (int64_t i = 0; i < 16; ++i) sum += z.data()[r * 16 + i];
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("conv2d 5x5 by 3x3 matches the nested-loop oracle") {
  auto x = random_tensor_f({1, 1, 5, 5}, 10);
  auto w = random_tensor_f({1, 1, 3, 3}, 11);
  auto y = conv2d(x, w, Tensor(), 1, 1, 0, 0);
  REQUIRE(y.shape() == Shape{1, 1, 3, 3});
  for (int oi = 0; oi < 3; ++oi)
    for (int oj = 0; oj < 3; ++oj) {
      double acc = 0;
      for (int ki = 0; ki < 3; ++ki)
        for (int kj = 0; kj < 3; ++kj)
          acc += x.data()[(oi + ki) * 5 + (oj + kj)] * w.data()[ki * 3 + kj];
      CHECK(std::abs(y.data()[oi * 3 + oj] - acc) < 1e-6);
    }
}

TEST_CASE("conv2d stride and padding shapes") {
  auto x = random_tensor_f({2, 3, 9, 7}, 12);
  auto w = random_tensor_f({4, 3, 3, 3}, 13);
  auto y = conv2d(x, w, Tensor(), 2, 2, 1, 1);
  // same padding, stride 2 -> ceil(n/2)
  CHECK(y.shape() == Shape{2, 4, 5, 4});
}

TEST_CASE("cross entropy analytic values") {
  SUBCASE("uniform logits give ln K") {
    auto logits = Tensor::filled({3, 8}, 0.0f);
    auto loss = cross_entropy(logits, {0, 3, 7});
    CHECK(loss.item() == doctest::Approx(std::log(8.0)).epsilon(1e-6));
  }
  SUBCASE("large margin drives the loss to zero") {
    auto logits = Tensor::zeros({1, 4});
    logits.data()[2] = 50.0f;
    auto loss = cross_entropy(logits, {2});
    CHECK(loss.item() < 1e-6);
  }
  SUBCASE("random case matches a 64-bit reference within 1e-5") {
    auto logits = random_tensor_f({4, 8}, 21);
    std::vector<int> labels = {1, 0, 7, 4};
    const float got = cross_entropy(logits, labels).item();

    double ref = 0;
    for (int b = 0; b < 4; ++b) {
      double mx = -1e300;
      for (int k = 0; k < 8; ++k) mx = std::max(mx, double(logits.data()[b * 8 + k]));
      double sum = 0;
      for (int k = 0; k < 8; ++k) sum += std::exp(double(logits.data()[b * 8 + k]) - mx);
      ref -= double(logits.data()[b * 8 + labels[b]]) - mx - std::log(sum);
    }
    ref /= 4;
    CHECK(std::abs(got - ref) < 1e-5);
  }
  SUBCASE("label out of range is rejected") {
    auto logits = Tensor::zeros({1, 4});
    CHECK_THROWS_AS(cross_entropy(logits, {4}), std::invalid_argument);
  }
}

TEST_CASE("adam first step follows the bias-corrected recurrence") {
  ParamStore store;
  auto& p = store.create("w", {1});
  p.data()[0] = 0.5f;
  p.grad()[0] = 1.0f;
  store.adam_step(1e-3f);
  // First step with bias correction moves by ~lr * sign(grad).
  CHECK(p.data()[0] == doctest::Approx(0.499).epsilon(1e-5));
  CHECK(store.step == 1);
}

TEST_CASE("adam with zero grad leaves the parameter unchanged while moments decay") {
  ParamStore store;
  auto& p = store.create("w", {1});
  p.data()[0] = 0.25f;
  p.grad()[0] = 0.0f;
  store.adam_step(1e-3f);
  CHECK(p.data()[0] == doctest::Approx(0.25f));
  CHECK(store.moment1["w"][0] == 0.0f);
}

TEST_CASE("adam treats identical parameters identically") {
  ParamStore store;
  auto& a = store.create("a", {3});
  auto& b = store.create("b", {3});
  for (int i = 0; i < 3; ++i) {
    a.data()[i] = b.data()[i] = 0.3f * (i + 1);
    a.grad()[i] = b.grad()[i] = 0.7f - 0.2f * i;
  }
  store.adam_step(1e-3f);
  CHECK(a.data() == b.data());
}

TEST_CASE("adam reports the missing-gradient parameter by name") {
  ParamStore store;
  auto& a = store.create("present", {2});
  store.create("absent", {2});
  a.grad()[0] = 1.0f;
  try {
    store.adam_step(1e-3f);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("absent") != std::string::npos);
  }
}

TEST_CASE("grad_check validates the checker itself on sum of squares") {
  auto x = random_tensor({7}, 31);
  auto report = grad_check([&] { return sum_all(mul(x, x)); }, {x}, 1e-6);
  CHECK(report.pass);
  // analytic gradient is exactly 2x
  auto y = sum_all(mul(x, x));
  x.zero_grad();
  y.backward();
  for (size_t i = 0; i < 7; ++i)
    CHECK(x.grad()[i] == doctest::Approx(2.0 * x.data()[i]).epsilon(1e-9));
}

TEST_CASE("every op passes gradient checks on random small shapes") {
  const double tol = 1e-4;
  for (uint64_t seed : {1ull, 2ull, 3ull}) {
    // broadcast add/mul
    {
      auto a = random_tensor({2, 3, 4}, seed);
      auto b = random_tensor({3, 1}, seed + 10);
      auto r = grad_check([&] { return sum_all(mul(add(a, b), a)); }, {a, b}, tol);
      CHECK_MESSAGE(r.pass, "add/mul: ", r.max_rel_err, " at ", r.worst);
    }
    // matmul weight + batched
    {
      auto a = random_tensor({2, 3, 4}, seed + 1);
      auto w = random_tensor({4, 5}, seed + 2);
      auto r = grad_check([&] { return sum_all(matmul(a, w)); }, {a, w}, tol);
      CHECK_MESSAGE(r.pass, "matmul weight: ", r.max_rel_err);
      auto b = random_tensor({2, 4, 3}, seed + 3);
      auto r2 = grad_check([&] { return sum_all(matmul(a, b)); }, {a, b}, tol);
      CHECK_MESSAGE(r2.pass, "matmul batched: ", r2.max_rel_err);
    }
    // activations and normalization
    {
      auto x = random_tensor({3, 6}, seed + 4);
      auto g = random_tensor({6}, seed + 5);
      auto be = random_tensor({6}, seed + 6);
      auto r = grad_check([&] { return sum_all(mul(gelu(x), x)); }, {x}, tol);
      CHECK_MESSAGE(r.pass, "gelu: ", r.max_rel_err);
      auto r2 = grad_check([&] { return sum_all(mul(softmax_lastdim(x), x)); }, {x}, tol);
      CHECK_MESSAGE(r2.pass, "softmax: ", r2.max_rel_err);
      auto r3 = grad_check(
          [&] { return sum_all(mul(layer_norm_lastdim(x, g, be, 1e-5), x)); }, {x, g, be}, tol);
      CHECK_MESSAGE(r3.pass, "layer_norm: ", r3.max_rel_err);
      auto r4 = grad_check([&] { return sum_all(mul(relu(x), x)); }, {x}, tol);
      CHECK_MESSAGE(r4.pass, "relu: ", r4.max_rel_err);
    }
    // convs
    {
      auto x = random_tensor({2, 2, 5, 4}, seed + 7);
      auto w = random_tensor({3, 2, 3, 3}, seed + 8);
      auto b = random_tensor({3}, seed + 9);
      auto r = grad_check([&] { return sum_all(conv2d(x, w, b, 2, 1, 1, 1)); }, {x, w, b}, tol);
      CHECK_MESSAGE(r.pass, "conv2d: ", r.max_rel_err);
      auto x1 = random_tensor({2, 3, 7}, seed + 11);
      auto w1 = random_tensor({4, 3, 3}, seed + 12);
      auto b1 = random_tensor({4}, seed + 13);
      auto r2 = grad_check([&] { return sum_all(conv1d(x1, w1, b1, 2, 1)); }, {x1, w1, b1}, tol);
      CHECK_MESSAGE(r2.pass, "conv1d: ", r2.max_rel_err);
    }
    // shape ops
    {
      auto x = random_tensor({2, 3, 4, 2}, seed + 14);
      auto y = random_tensor({2, 3, 4, 3}, seed + 15);
      auto r = grad_check(
          [&] {
            auto c = concat_lastdim(x, y);
            auto p = permute(c, {0, 3, 1, 2});
            auto s = slice_lastdim(reshape(p, {2, 5, 12}), 2, 7);
            return sum_all(mul(s, s));
          },
          {x, y}, tol);
      CHECK_MESSAGE(r.pass, "concat/permute/slice/reshape: ", r.max_rel_err);

      auto g = random_tensor({2, 4, 4, 3}, seed + 16);
      auto r2 = grad_check(
          [&] {
            auto rolled = roll_grid(g, -1, 2);
            auto padded = pad_grid(rolled, 2, 1);
            auto cropped = crop_grid(padded, 4, 4);
            return sum_all(mul(cropped, cropped));
          },
          {g}, tol);
      CHECK_MESSAGE(r2.pass, "roll/pad/crop: ", r2.max_rel_err);
    }
    // gather + fused bias
    {
      auto table = random_tensor({5, 3}, seed + 17);
      std::vector<int64_t> idx = {0, 4, 4, 2, 1, 0};
      auto r = grad_check(
          [&] {
            auto rows = index_rows(table, idx);
            return sum_all(mul(rows, rows));
          },
          {table}, tol);
      CHECK_MESSAGE(r.pass, "index_rows: ", r.max_rel_err);

      auto scores = random_tensor({4, 2, 3, 3}, seed + 18);
      auto bias = random_tensor({2, 3, 3}, seed + 19);
      auto mask = random_tensor({2, 3, 3}, seed + 20, false);
      auto r2 = grad_check(
          [&] {
            auto s = add_window_bias(scores, bias, mask);
            return sum_all(mul(s, s));
          },
          {scores, bias}, tol);
      CHECK_MESSAGE(r2.pass, "add_window_bias: ", r2.max_rel_err);
    }
    // reductions and loss
    {
      auto x = random_tensor({3, 5}, seed + 21);
      auto r = grad_check([&] { return sum_all(mul(mean_lastdim(x), mean_lastdim(x))); }, {x}, tol);
      CHECK_MESSAGE(r.pass, "mean_lastdim: ", r.max_rel_err);

      auto w = random_tensor({5, 4}, seed + 22);
      std::vector<int> labels = {0, 3, 1};
      auto r2 = grad_check([&] { return cross_entropy(matmul(x, w), labels); }, {x, w}, tol);
      CHECK_MESSAGE(r2.pass, "cross_entropy(linear): ", r2.max_rel_err);
    }
  }
}

TEST_CASE("layer_norm output statistics pre-affine") {
  auto x = random_tensor_f({10, 32}, 40);
  auto gamma = Tensor::filled({32}, 1.0f);
  auto beta = Tensor::zeros({32});
  auto y = layer_norm_lastdim(x, gamma, beta, 1e-5f);
  for (int r = 0; r < 10; ++r) {
    double mean = 0, var = 0;
    for (int i = 0; i < 32; ++i) mean += y.data()[r * 32 + i];
    mean /= 32;
    for (int i = 0; i < 32; ++i) {
      const double c = y.data()[r * 32 + i] - mean;
      var += c * c;
    }
    var /= 32;
    CHECK(std::abs(mean) < 1e-5);
    CHECK(std::abs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("concat backward splits gradients exactly") {
  auto a = random_tensor_f({2, 3}, 50, true);
  auto b = random_tensor_f({2, 2}, 51, true);
  auto c = concat_lastdim(a, b);
  auto loss = sum_all(mul(c, c));
  loss.backward();

  // Upstream grad of c is 2c; the two partitions must receive exactly it.
  for (int r = 0; r < 2; ++r) {
    for (int i = 0; i < 3; ++i)
      CHECK(a.grad()[r * 3 + i] == doctest::Approx(2 * c.data()[r * 5 + i]));
    for (int i = 0; i < 2; ++i)
      CHECK(b.grad()[r * 2 + i] == doctest::Approx(2 * c.data()[r * 5 + 3 + i]));
  }
}

TEST_CASE("shape errors name the op and shapes") {
  auto a = Tensor::zeros({2, 3});
  auto b = Tensor::zeros({4, 5});
  try {
    matmul(a, b);
    FAIL("expected throw");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("matmul") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(4,5)") != std::string::npos);
  }
}

TEST_CASE("forward and backward are deterministic") {
  auto run = [] {
    auto x = random_tensor_f({4, 8}, 60, true);
    auto w = random_tensor_f({8, 3}, 61, true);
    auto loss = cross_entropy(matmul(x, w), {0, 1, 2, 0});
    loss.backward();
    return std::make_pair(loss.item(), w.grad());
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("EMCK checkpoint round-trips byte-identically") {
  ParamStore store;
  Rng rng(7);
  fill_trunc_normal(store.create("audio.patch.w", {8, 4}), 0.02, rng);
  fill_normal(store.create("head.fc1.w", {4, 2}), 0.1, rng);
  // Fake a step so Adam state exists.
  for (auto& [name, p] : store.params) {
    auto& g = p.grad();
    for (auto& v : g) v = 0.01f;
  }
  store.adam_step(1e-3f);

  const auto ckpt = checkpoint_from_store(store, R"({"arch":"test"})");
  namespace fs = std::filesystem;
  const auto p1 = (fs::temp_directory_path() / "mmer_ck1.emck").string();
  const auto p2 = (fs::temp_directory_path() / "mmer_ck2.emck").string();
  checkpoint_write(p1, ckpt);
  const auto back = checkpoint_read(p1);
  CHECK(back.config_json == ckpt.config_json);
  CHECK(back.tensors.size() == 2);
  CHECK(back.tensors.at("audio.patch.w").shape == Shape{8, 4});
  CHECK(back.tensors.at("audio.patch.w").data == ckpt.tensors.at("audio.patch.w").data);
  CHECK(back.has_adam);
  CHECK(back.adam_step == 1);
  checkpoint_write(p2, back);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::vector<char> b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::vector<char> b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // Restoring into a store reproduces parameters and optimizer state.
  ParamStore restored;
  store_from_checkpoint(restored, back);
  CHECK(restored.params.at("audio.patch.w").data() == store.params.at("audio.patch.w").data());
  CHECK(restored.step == store.step);
  CHECK(restored.moment1.at("head.fc1.w") == store.moment1.at("head.fc1.w"));

  fs::remove(p1);
  fs::remove(p2);
}
