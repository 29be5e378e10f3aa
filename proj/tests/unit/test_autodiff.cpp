#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "tnas/core/checkpoint.hpp"
#include "tnas/core/errors.hpp"
#include "tnas/core/grad_check.hpp"
#include "tnas/core/ops.hpp"
#include "tnas/core/optim.hpp"
#include "tnas/core/tape.hpp"

using namespace tnas;
using namespace tnas::testing;

namespace {
DiffArray f64(Shape s, std::vector<double> v) { return DiffArray::from(std::move(s), std::move(v), DType::F64); }
DiffArray p64(Shape s, std::vector<double> v) {
  return DiffArray::parameter(std::move(s), std::move(v), DType::F64);
}
}  // namespace

TEST_CASE("matmul: identity and hand arithmetic") {
  auto eye = f64({2, 2}, {1, 0, 0, 1});
  auto b = f64({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(bit_equal(matmul(eye, b).values(), b.values()));
  auto y = matmul(f64({2, 2}, {1, 2, 3, 4}), f64({2, 1}, {1, 1}));
  CHECK(y.shape() == Shape{2, 1});
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 7.0);
  CHECK_THROWS_AS(matmul(b, b), DimensionError);
}

TEST_CASE("matmul: gradient against central differences") {
  Rng rng(1);
  auto a = random_param(rng, {4, 5});
  auto b = random_param(rng, {5, 2});
  CHECK(grad_check([&] { return project(matmul(a, b)); }, {a, b}) < 1e-6);
}

TEST_CASE("conv2d: identity kernel and border counts") {
  Rng rng(2);
  auto x = random_array(rng, {2, 3, 4, 4});
  std::vector<double> k(9, 0.0);
  k[0] = k[4] = k[8] = 1.0;  // 1x1 identity channel mix
  auto y = conv2d(x, f64({3, 3, 1, 1}, k), {});
  CHECK(bit_equal(y.values(), x.values()));

  auto ones = DiffArray::full({1, 1, 4, 4}, 1.0, DType::F64);
  auto z = conv2d(ones, DiffArray::full({1, 1, 3, 3}, 1.0, DType::F64), {.padding = 1});
  CHECK(z[0] == 4.0);    // corner
  CHECK(z[1] == 6.0);    // edge
  CHECK(z[5] == 9.0);    // interior
  CHECK(z[15] == 4.0);
}

TEST_CASE("conv2d: errors") {
  auto x = DiffArray::zeros({1, 1, 3, 3}, DType::F64);
  CHECK_THROWS_AS(conv2d(x, DiffArray::zeros({1, 1, 2, 2}, DType::F64), {}), UnsupportedKernelError);
  CHECK_THROWS_AS(conv2d(x, DiffArray::zeros({1, 1, 5, 5}, DType::F64), {}), DimensionError);
  CHECK_THROWS_AS(conv2d(x, DiffArray::zeros({1, 2, 3, 3}, DType::F64), {}), DimensionError);
}

TEST_CASE("conv2d: gradients for dense, strided, dilated and depthwise variants") {
  Rng rng(3);
  struct Case {
    Shape x, k;
    Conv2dOptions opt;
  };
  const std::vector<Case> cases = {
      {{2, 3, 5, 5}, {4, 3, 3, 3}, {.padding = 1}},
      {{1, 2, 6, 6}, {3, 2, 3, 3}, {.stride = 2, .padding = 1}},
      {{1, 2, 7, 7}, {2, 2, 3, 3}, {.dilation = 2, .padding = 2}},
      {{2, 4, 5, 5}, {4, 1, 5, 5}, {.padding = 2, .groups = 4}},
      {{1, 3, 4, 4}, {2, 3, 1, 1}, {}},
  };
  for (const auto& c : cases) {
    auto x = random_param(rng, c.x);
    auto k = random_param(rng, c.k);
    CHECK(grad_check([&] { return project(conv2d(x, k, c.opt)); }, {x, k}) < 1e-6);
  }
}

TEST_CASE("zero_pad and slice_view") {
  auto x = f64({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  const std::vector<Alignment> centered(2, Alignment::Centered);
  auto p = zero_pad(x, {5, 5}, centered);
  CHECK(p[0] == 0.0);
  CHECK(p[6] == 1.0);   // (1,1)
  CHECK(p[18] == 9.0);  // (3,3)
  CHECK(p[24] == 0.0);

  const std::vector<Alignment> lead{Alignment::Leading};
  auto v = zero_pad(f64({2}, {7, 8}), {4}, lead);
  CHECK(bit_equal(v.values(), std::vector<double>{7, 8, 0, 0}));

  CHECK_THROWS_AS(zero_pad(x, {4, 4}, centered), AlignmentError);
  CHECK_THROWS_AS(zero_pad(x, {2, 3}, centered), DimensionError);

  const std::vector<Window> full{{0, 3}, {0, 3}};
  CHECK(bit_equal(slice_view(x, full).values(), x.values()));
  const std::vector<Window> mid{{1, 3}, {1, 3}};
  CHECK(bit_equal(slice_view(p, mid).values(), x.values()));
  const std::vector<Window> bad{{2, 2}, {0, 3}};
  CHECK_THROWS_AS(slice_view(x, bad), RangeError);
}

TEST_CASE("zero_pad and slice_view are mutually adjoint") {
  Rng rng(4);
  auto x = random_param(rng, {3, 5});
  const std::vector<Alignment> al{Alignment::Centered, Alignment::Leading};
  {
    Tape tape;
    Tape::Scope scope(tape);
    auto loss = sum(zero_pad(x, {5, 7}, al));
    tape.backward(loss);
  }
  for (double g : x.adjoint()) CHECK(g == 1.0);

  auto big = random_param(rng, {5, 5});
  const std::vector<Window> w{{1, 3}, {1, 3}};
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(slice_view(big, w)));
  }
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 5; ++c) {
      const bool inside = r >= 1 && r <= 3 && c >= 1 && c <= 3;
      CHECK(big.adjoint()[static_cast<std::size_t>(r * 5 + c)] == (inside ? 1.0 : 0.0));
    }
}

TEST_CASE("softmax and cross entropy") {
  auto s = softmax(DiffArray::full({4}, 3.0, DType::F64), 0);
  for (double v : s.values()) CHECK(v == doctest::Approx(0.25));
  const std::vector<std::int32_t> labels{2};
  auto ce = cross_entropy(DiffArray::zeros({1, 5}, DType::F64), labels);
  CHECK(ce.item() == doctest::Approx(std::log(5.0)).epsilon(1e-14));
  const std::vector<std::int32_t> bad{5};
  CHECK_THROWS_AS(cross_entropy(DiffArray::zeros({1, 5}, DType::F64), bad), RangeError);
  CHECK_THROWS_AS(softmax(s, 1), RangeError);

  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    auto x = random_array(rng, {3, 6}, 30.0);
    auto y = softmax(x, 1);
    for (int r = 0; r < 3; ++r) {
      double tot = 0.0;
      for (int c = 0; c < 6; ++c) {
        CHECK(y[r * 6 + c] >= 0.0);
        tot += y[r * 6 + c];
      }
      CHECK(std::abs(tot - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("backward: hand-computed adjoints and tape lifetime") {
  auto x = p64({3}, {1, 2, 3});
  {
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(x));
  }
  for (double g : x.adjoint()) CHECK(g == 1.0);
  x.clear_adjoint();

  Tape tape;
  DiffArray loss;
  {
    Tape::Scope scope(tape);
    loss = sum(mul(x, x));
  }
  tape.backward(loss);
  CHECK(bit_equal(x.adjoint(), std::vector<double>{2, 4, 6}));
  CHECK_THROWS_AS(tape.backward(loss), StaleTapeError);
  CHECK_THROWS_AS(Tape::Scope{tape}, StaleTapeError);
}

TEST_CASE("backward: frozen inputs receive no adjoint") {
  auto x = p64({2}, {1, 2});
  auto w = p64({2}, {3, 4});
  w.set_requires_grad(false);
  Tape tape;
  {
    Tape::Scope scope(tape);
    tape.backward(sum(mul(x, w)));
  }
  CHECK(x.has_adjoint());
  CHECK_FALSE(w.has_adjoint());
}

TEST_CASE("backward: two-layer network matches finite differences") {
  Rng rng(6);
  auto x = random_array(rng, {5, 4});
  auto w1 = random_param(rng, {6, 4});
  auto b1 = random_param(rng, {6});
  auto w2 = random_param(rng, {3, 6});
  const std::vector<std::int32_t> labels{0, 1, 2, 1, 0};
  auto f = [&] { return cross_entropy(linear(gelu(linear(x, w1, b1)), w2), labels); };
  CHECK(grad_check(f, {w1, b1, w2}) < 1e-6);
}

TEST_CASE("grad_check contract") {
  auto p = p64({3}, {0.5, -1.5, 2.0});
  CHECK(grad_check([&] { return sum(mul(p, p)); }, {p}, 1e-5) < 1e-9);
  CHECK_THROWS_AS(grad_check([&] { return sum(p); }, {p}, 0.0), PreconditionError);
  auto q = p64({1}, {-1.0});
  CHECK_THROWS_AS(grad_check([&] { return scale(sum(relu(q)), 1.0 / 0.0); }, {q}), EvaluationError);
}

TEST_CASE("every primitive passes randomized gradient checks") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const std::int64_t n = 2 + rng.uniform_int(3), c = 2 + rng.uniform_int(3);
    auto a = random_param(rng, {n, c});
    auto b = random_param(rng, {n, c});
    auto col = random_param(rng, {c});
    auto vec = random_param(rng, {c});
    auto img = random_param(rng, {2, c, 3, 4});
    auto gamma = random_param(rng, {c});
    auto beta = random_param(rng, {c});
    auto pos = DiffArray::parameter({c}, [&] {
      std::vector<double> v(static_cast<std::size_t>(c));
      for (auto& x : v) x = 0.5 + rng.uniform();
      return v;
    }(), DType::F64);
    std::vector<std::int32_t> labels;
    for (std::int64_t i = 0; i < n; ++i) labels.push_back(static_cast<std::int32_t>(rng.uniform_int(c)));
    const std::vector<Alignment> al{Alignment::Leading, Alignment::Centered};
    const std::vector<Window> win{{0, n - 1}, {1, c - 1}};

    CHECK(grad_check([&] { return project(add(a, b)); }, {a, b}) < 1e-6);
    CHECK(grad_check([&] { return project(sub(a, b)); }, {a, b}) < 1e-6);
    CHECK(grad_check([&] { return project(mul(a, b)); }, {a, b}) < 1e-6);
    CHECK(grad_check([&] { return project(scale(a, -1.7)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(scale_by(a, vec, 1)); }, {a, vec}) < 1e-6);
    CHECK(grad_check([&] { return project(add_bias(a, col, 1)); }, {a, col}) < 1e-6);
    CHECK(grad_check([&] { return project(add_n({a, b, a})); }, {a, b}) < 1e-6);
    CHECK(grad_check([&] { return project(gelu(a)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(softplus(a)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(square(a)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(transpose(a)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(reshape(a, {n * c})); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(concat({a, b}, 1)); }, {a, b}) < 1e-6);
    CHECK(grad_check([&] { return project(concat({a, b}, 0)); }, {a, b}) < 1e-6);
    CHECK(grad_check([&] { return project(zero_pad(a, {n + 1, c + 2}, al)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(slice_view(a, win)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return mean(mul(a, a)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(softmax(a, 1)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(softmax(a, 0)); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return cross_entropy(a, labels); }, {a}) < 1e-6);
    CHECK(grad_check([&] { return project(normalize_sum(pos)); }, {pos}) < 1e-6);
    CHECK(grad_check([&] { return project(outer_product({vec, pos, col})); }, {vec, pos, col}) < 1e-6);
    CHECK(grad_check([&] { return project(global_avg_pool(img)); }, {img}) < 1e-6);
    CHECK(grad_check([&] { return project(normalize_features(img, gamma, beta)); }, {img, gamma, beta}) < 1e-6);
    CHECK(grad_check([&] { return project(layer_norm(a, gamma, beta)); }, {a, gamma, beta}) < 1e-6);
    auto table = random_param(rng, {c, n});
    CHECK(grad_check([&] { return project(embedding(table, labels)); }, {table}) < 1e-6);
  }
}

TEST_CASE("relu gradient away from the kink") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = random_param(rng, {4, 3});
    for (auto& v : x.mutable_values()) v += v > 0 ? 0.1 : -0.1;
    CHECK(grad_check([&] { return project(relu(x)); }, {x}) < 1e-6);
  }
}

TEST_CASE("causal attention gradients and causality") {
  Rng rng(9);
  for (int trial = 0; trial < 5; ++trial) {
    auto q = random_param(rng, {2 * 4, 6});
    auto k = random_param(rng, {2 * 4, 6});
    auto v = random_param(rng, {2 * 4, 6});
    CHECK(grad_check([&] { return project(causal_attention(q, k, v, 2, 4, 3)); }, {q, k, v}) < 1e-6);
  }
  // The first position can only attend to itself.
  auto q = random_array(rng, {3, 4});
  auto k = random_array(rng, {3, 4});
  auto v = random_array(rng, {3, 4});
  auto o = causal_attention(q, k, v, 1, 3, 2);
  for (int t = 0; t < 4; ++t) CHECK(o[t] == doctest::Approx(v[t]).epsilon(1e-15));
}

TEST_CASE("sgd and adamw updates") {
  auto p = p64({1}, {1.0});
  Sgd sgd({p}, {.lr = 0.1});
  p.mutable_adjoint()[0] = 2.0;
  sgd.step(0);
  CHECK(p[0] == doctest::Approx(0.8).epsilon(1e-15));
  CHECK_FALSE(p.has_adjoint());
  CHECK_THROWS_AS(sgd.step(0), NotReadyError);

  auto z = p64({2}, {0.3, -0.7});
  Sgd sgd2({z}, {.lr = 0.5});
  z.mutable_adjoint();  // zeros
  sgd2.step();
  CHECK(z[0] == 0.3);
  CHECK(z[1] == -0.7);

  // One AdamW step with bias correction moves each coordinate by lr * g/(|g|+eps).
  auto w = p64({3}, {0.0, 1.0, -2.0});
  AdamW adam({w}, {.lr = 0.01, .weight_decay = 0.0});
  const std::vector<double> g{0.5, -3.0, 1e-3};
  std::copy(g.begin(), g.end(), w.mutable_adjoint().begin());
  adam.step();
  const std::vector<double> start{0.0, 1.0, -2.0};
  for (int i = 0; i < 3; ++i) {
    const double expect = start[i] - 0.01 * g[i] / (std::abs(g[i]) + 1e-8);
    CHECK(w[i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("momentum and masked steps") {
  auto p = p64({2}, {1.0, 1.0});
  Sgd sgd({p}, {.lr = 0.1, .momentum = 0.9, .nesterov = true, .weight_decay = 0.01});
  for (int s = 0; s < 2; ++s) {
    std::fill(p.mutable_adjoint().begin(), p.mutable_adjoint().end(), 1.0);
    sgd.step_masked({UpdateMask{1, 0}});
  }
  CHECK(p[1] == 1.0);
  // Hand-rolled reference for the unmasked element.
  double ref = 1.0, buf = 0.0;
  for (int s = 0; s < 2; ++s) {
    const double d = 1.0 + 0.01 * ref;
    buf = s == 0 ? d : 0.9 * buf + d;
    ref -= 0.1 * (d + 0.9 * buf);
  }
  CHECK(p[0] == doctest::Approx(ref).epsilon(1e-15));
}

TEST_CASE("cosine schedule endpoints") {
  CHECK(cosine_lr(0.1, 0.001, 0, 100) == doctest::Approx(0.1));
  CHECK(cosine_lr(0.1, 0.001, 50, 100) == doctest::Approx(0.0505));
  CHECK(cosine_lr(0.1, 0.001, 500, 100) == doctest::Approx(0.001));
}

TEST_CASE("float32 arrays follow single precision") {
  auto a = DiffArray::from({1}, {0.1}, DType::F32);
  CHECK(a[0] == static_cast<double>(0.1f));
  auto b = add(a, a);
  CHECK(b.dtype() == DType::F32);
  CHECK(b[0] == static_cast<double>(0.1f + 0.1f));
}

TEST_CASE("deterministic replay of a small training loop") {
  auto run = [] {
    Rng rng(42);
    auto w = random_param(rng, {3, 4});
    auto x = random_array(rng, {6, 4});
    const std::vector<std::int32_t> labels{0, 1, 2, 0, 1, 2};
    Sgd opt({w}, {.lr = 0.05, .momentum = 0.9});
    std::vector<double> losses;
    for (int s = 0; s < 10; ++s) {
      Tape tape;
      Tape::Scope scope(tape);
      auto loss = cross_entropy(linear(x, w), labels);
      losses.push_back(loss.item());
      tape.backward(loss);
      opt.step();
    }
    return losses;
  };
  CHECK(bit_equal(run(), run()));
}

TEST_CASE("checkpoint round-trip is bit exact") {
  Rng rng(10);
  auto a = random_array(rng, {2, 3});
  auto b = DiffArray::from({4}, {0.1, -2.5, 1e-30, 3.25}, DType::F32);
  const auto path = std::filesystem::temp_directory_path() / "tnas_ckpt_test.bin";
  save_checkpoint(path, {{"layer/storage", a}, {"bias", b}});
  auto back = load_checkpoint(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].name == "layer/storage");
  CHECK(back[0].tensor.shape() == a.shape());
  CHECK(checksum(back[0].tensor) == checksum(a));
  CHECK(back[1].tensor.dtype() == DType::F32);
  CHECK(bit_equal(back[1].tensor.values(), b.values()));

  {
    std::ofstream os(path, std::ios::binary);
    os << "NOPE";
  }
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);
  std::filesystem::remove(path);
}
