#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "usad/nn.hpp"
#include "usad/ops.hpp"
#include "usad/optim.hpp"

using namespace usad;

namespace {

TensorD randn_tensor(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  TensorD t(std::move(shape));
  for (auto& v : t.data()) v = rng.normal() * scale;
  return t;
}

}  // namespace

TEST_CASE("conv1d identity kernel is the identity map") {
  TensorD x({1, 4}, {1, 2, 3, 4});
  TensorD k({1, 1, 1}, {1});
  auto out = ops::conv1d(x, k, 1, 0);
  REQUIRE(out.shape() == std::vector<int>{1, 4});
  for (int i = 0; i < 4; ++i) CHECK(out.at(i) == doctest::Approx(x.at(i)));
}

TEST_CASE("conv1d box kernel with padding") {
  // hand-convolved: x=(1,1,1), k=(1,1,1), pad 1 -> (2,3,2)
  TensorD x({1, 3}, {1, 1, 1});
  TensorD k({1, 1, 3}, {1, 1, 1});
  auto out = ops::conv1d(x, k, 1, 1);
  CHECK(out.at(0) == doctest::Approx(2));
  CHECK(out.at(1) == doctest::Approx(3));
  CHECK(out.at(2) == doctest::Approx(2));
}

TEST_CASE("conv1d matches the naive oracle on random shapes") {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int c_in = 1 + static_cast<int>(rng.uniform_int(3));
    const int c_out = 1 + static_cast<int>(rng.uniform_int(3));
    const int len = 5 + static_cast<int>(rng.uniform_int(10));
    const int k = 1 + 2 * static_cast<int>(rng.uniform_int(3));
    const int stride = 1 + static_cast<int>(rng.uniform_int(2));
    const int pad = static_cast<int>(rng.uniform_int(3));
    if (len + 2 * pad < k) continue;

    std::vector<std::vector<double>> xv(static_cast<std::size_t>(c_in),
                                        std::vector<double>(static_cast<std::size_t>(len)));
    std::vector<std::vector<std::vector<double>>> wv(
        static_cast<std::size_t>(c_out),
        std::vector<std::vector<double>>(static_cast<std::size_t>(c_in),
                                         std::vector<double>(static_cast<std::size_t>(k))));
    TensorD x({c_in, len});
    TensorD w({c_out, c_in, k});
    for (int ci = 0; ci < c_in; ++ci)
      for (int i = 0; i < len; ++i) {
        const double v = rng.normal();
        xv[static_cast<std::size_t>(ci)][static_cast<std::size_t>(i)] = v;
        x.at2(ci, i) = v;
      }
    for (int co = 0; co < c_out; ++co)
      for (int ci = 0; ci < c_in; ++ci)
        for (int u = 0; u < k; ++u) {
          const double v = rng.normal();
          wv[static_cast<std::size_t>(co)][static_cast<std::size_t>(ci)][static_cast<std::size_t>(u)] = v;
          w.at3(co, ci, u) = v;
        }
    int l_out = 0;
    const auto expect = oracles::conv1d_naive(xv, wv, stride, pad, l_out);
    auto got = ops::conv1d(x, w, stride, pad);
    REQUIRE(got.shape() == std::vector<int>{c_out, l_out});
    for (std::int64_t i = 0; i < got.numel(); ++i) {
      CHECK(got.at(i) == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("conv1d shape errors carry both shapes") {
  TensorD x({2, 8});
  TensorD w({1, 3, 3});  // C_in mismatch
  try {
    ops::conv1d(x, w, 1, 0);
    FAIL("expected a dimension error");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x8]") != std::string::npos);
    CHECK(msg.find("[1x3x3]") != std::string::npos);
  }
  TensorD w2({1, 2, 9});
  CHECK_THROWS_AS(ops::conv1d(x, w2, 1, 0), std::invalid_argument);  // L + 2p < k
}

TEST_CASE("conv parameter count formula") {
  // C_in=5, k=5, C_out=64, with bias: 64*5*5 + 64 = 1664
  Rng rng(1);
  nn::Conv1d<double> conv(5, 64, 5, 2, 2, rng);
  nn::ParamList<double> params;
  conv.collect(params, "conv");
  CHECK(nn::count_parameters(params) == 1664);
}

TEST_CASE("dense identity and sum cases") {
  TensorD x({2}, {2, 3});
  TensorD eye({2, 2}, {1, 0, 0, 1});
  TensorD zero({2});
  auto out = ops::dense(x, eye, zero);
  CHECK(out.at(0) == doctest::Approx(2));
  CHECK(out.at(1) == doctest::Approx(3));

  TensorD w({1, 2}, {1, 1});
  TensorD b({1});
  CHECK(ops::dense(x, w, b).at(0) == doctest::Approx(5));
}

TEST_CASE("dense matches naive matrix multiply") {
  Rng rng(3);
  std::vector<double> xv(3);
  std::vector<std::vector<double>> wv(3, std::vector<double>(3));
  std::vector<double> bv(3);
  TensorD x({3}), w({3, 3}), b({3});
  for (int i = 0; i < 3; ++i) {
    xv[static_cast<std::size_t>(i)] = rng.normal();
    bv[static_cast<std::size_t>(i)] = rng.normal();
    x.at(i) = xv[static_cast<std::size_t>(i)];
    b.at(i) = bv[static_cast<std::size_t>(i)];
    for (int j = 0; j < 3; ++j) {
      wv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = rng.normal();
      w.at2(i, j) = wv[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
  }
  const auto expect = oracles::dense_naive(xv, wv, bv);
  auto got = ops::dense(x, w, b);
  for (int i = 0; i < 3; ++i) {
    CHECK(got.at(i) == doctest::Approx(expect[static_cast<std::size_t>(i)]).epsilon(1e-12));
  }
  nn::ParamList<double> wb{{"w", w}, {"b", b}};
  CHECK(nn::count_parameters(wb) == 12);
}

TEST_CASE("dense 3->4 with bias counts 16 parameters") {
  Rng rng(5);
  nn::Dense<double> d(3, 4, rng);
  nn::ParamList<double> params;
  d.collect(params, "d");
  CHECK(nn::count_parameters(params) == 16);
}

TEST_CASE("activation fixed points") {
  TensorD zero = TensorD::scalar(0.0);
  CHECK(ops::sigmoid(zero).item() == doctest::Approx(0.5));
  CHECK(ops::gelu(zero).item() == doctest::Approx(0.0));
  CHECK(ops::relu(zero).item() == doctest::Approx(0.0));

  TensorD logits({4}, {1.7, 1.7, 1.7, 1.7});
  auto s = ops::softmax(logits);
  for (int i = 0; i < 4; ++i) CHECK(s.at(i) == doctest::Approx(0.25));
}

TEST_CASE("softmax outputs are a distribution along the axis") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int r = 2 + static_cast<int>(rng.uniform_int(4));
    const int c = 2 + static_cast<int>(rng.uniform_int(6));
    auto x = randn_tensor({r, c}, rng, 3.0);
    for (int axis = 0; axis < 2; ++axis) {
      auto s = ops::softmax(x, axis);
      const int slices = axis == 0 ? c : r;
      const int n = axis == 0 ? r : c;
      for (int sl = 0; sl < slices; ++sl) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) {
          const double v = axis == 0 ? s.at2(i, sl) : s.at2(sl, i);
          CHECK(v >= 0.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
    }
  }
}

TEST_CASE("pooling fixed cases and avg gradient") {
  TensorD c({1, 3}, {1, 2, 3});
  CHECK(ops::global_avg(c).at(0) == doctest::Approx(2.0));
  CHECK(ops::global_max(c).at(0) == doctest::Approx(3.0));

  TensorD flat({2, 4}, {5, 5, 5, 5, -1, -1, -1, -1});
  auto avg = ops::global_avg(flat);
  CHECK(avg.at(0) == doctest::Approx(5));
  CHECK(avg.at(1) == doctest::Approx(-1));
  auto mx = ops::global_max(flat);
  CHECK(mx.at(0) == doctest::Approx(5));
  CHECK(mx.at(1) == doctest::Approx(-1));

  // gradient of avg is uniform 1/L
  TensorD x({1, 4}, {1, 2, 3, 4});
  x.set_requires_grad(true);
  Tape tape;
  TensorD loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(ops::global_avg(x));
  }
  tape.backward(loss);
  for (int i = 0; i < 4; ++i) CHECK(x.grad()[static_cast<std::size_t>(i)] == doctest::Approx(0.25));
}

TEST_CASE("max pooling ties route gradient to the lowest index") {
  TensorD x({1, 4}, {7, 7, 7, 3});
  x.set_requires_grad(true);
  Tape tape;
  TensorD loss;
  {
    TapeScope scope(tape);
    loss = ops::sum(ops::global_max(x));
  }
  tape.backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(1.0));
  CHECK(x.grad()[1] == doctest::Approx(0.0));
  CHECK(x.grad()[2] == doctest::Approx(0.0));
}

TEST_CASE("group_norm standardizes per group") {
  Rng rng(13);
  auto x = randn_tensor({4, 8}, rng, 2.5);
  auto out = ops::group_norm(x, 2, 1e-5);

  // moment oracle per group
  for (int g = 0; g < 2; ++g) {
    std::vector<double> vals;
    for (int c = g * 2; c < (g + 1) * 2; ++c)
      for (int j = 0; j < 8; ++j) vals.push_back(out.at2(c, j));
    const auto m = oracles::moments_two_pass(vals);
    CHECK(std::abs(m.mu) < 1e-9);
    CHECK(m.sigma == doctest::Approx(1.0).epsilon(1e-4));
  }
}

TEST_CASE("group_norm degenerate and pre-standardized inputs") {
  TensorD constant = TensorD::full({2, 4}, 3.25);
  auto out = ops::group_norm(constant, 1, 1e-5);
  for (std::int64_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(0.0));

  // already standardized (mean 0, population var 1) stays put with a tiny eps
  TensorD std_in({1, 4}, {-1, 1, -1, 1});
  auto kept = ops::group_norm(std_in, 1, 1e-12);
  for (std::int64_t i = 0; i < kept.numel(); ++i) {
    CHECK(std::abs(kept.at(i) - std_in.at(i)) < 1e-9);
  }

  CHECK_THROWS_AS(ops::group_norm(std_in, 3, 1e-5), std::invalid_argument);
}

TEST_CASE("backward basics: sum and square") {
  TensorD x({3}, {1, 2, 3});
  x.set_requires_grad(true);
  {
    Tape tape;
    TensorD loss;
    {
      TapeScope scope(tape);
      loss = ops::sum(x);
    }
    tape.backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(x.grad()[static_cast<std::size_t>(i)] == doctest::Approx(1.0));
  }
  x.zero_grad();
  {
    TensorD v = TensorD::scalar(3.0);
    v.set_requires_grad(true);
    Tape tape;
    TensorD loss;
    {
      TapeScope scope(tape);
      loss = ops::mul(v, v);
    }
    tape.backward(loss);
    CHECK(v.grad()[0] == doctest::Approx(6.0));
  }
}

TEST_CASE("backward rejects non-scalar loss, detached tensors and reruns") {
  TensorD x({2}, {1, 2});
  x.set_requires_grad(true);
  Tape tape;
  TensorD y, loss;
  {
    TapeScope scope(tape);
    y = ops::mul(x, x);
    loss = ops::sum(y);
  }
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);         // non-scalar
  TensorD detached = TensorD::scalar(1.0);
  CHECK_THROWS_AS(tape.backward(detached), std::logic_error);       // not on this tape
  tape.backward(loss);
  CHECK_THROWS_AS(tape.backward(loss), std::logic_error);           // repeated backward
  tape.reset();
  CHECK(tape.size() == 0);
}

TEST_CASE("tape is linear: backward of a sum equals the sum of backwards") {
  Rng rng(17);
  auto x = randn_tensor({6}, rng);
  x.set_requires_grad(true);

  auto grad_of = [&](bool first, bool second) {
    x.zero_grad();
    Tape tape;
    TensorD loss;
    {
      TapeScope scope(tape);
      TensorD l1 = ops::sum(ops::mul(x, x));
      TensorD l2 = ops::dot(x, TensorD({6}, {1, 2, 3, 4, 5, 6}));
      if (first && second) {
        loss = ops::add(l1, l2);
      } else {
        loss = first ? l1 : l2;
      }
    }
    tape.backward(loss);
    return std::vector<double>(x.grad().begin(), x.grad().end());
  };

  const auto g_both = grad_of(true, true);
  const auto g1 = grad_of(true, false);
  const auto g2 = grad_of(false, true);
  for (std::size_t i = 0; i < g_both.size(); ++i) {
    CHECK(g_both[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
  }
}

TEST_CASE("every differentiable op passes finite-difference checks") {
  Rng rng(23);
  int failures = 0;
  for (int seedi = 0; seedi < 3; ++seedi) {
    Rng local(100 + static_cast<std::uint64_t>(seedi));
    auto x = randn_tensor({3, 8}, local);
    x.set_requires_grad(true);
    auto w = randn_tensor({2, 3, 3}, local, 0.5);
    w.set_requires_grad(true);
    auto v = randn_tensor({6}, local);
    v.set_requires_grad(true);
    auto dw = randn_tensor({4, 6}, local, 0.5);
    dw.set_requires_grad(true);
    auto db = randn_tensor({4}, local, 0.1);
    db.set_requires_grad(true);

    const std::vector<std::pair<const char*, std::function<TensorD()>>> cases = {
        {"add", [&] { return ops::sum(ops::add(x, x)); }},
        {"sub", [&] { return ops::sum(ops::mul(ops::sub(x, ops::mul_scalar(x, 0.3)), x)); }},
        {"mul", [&] { return ops::sum(ops::mul(x, x)); }},
        {"mul_scalar", [&] { return ops::sum(ops::mul_scalar(x, 1.7)); }},
        {"add_scalar", [&] { return ops::sum(ops::mul(ops::add_scalar(x, 0.4), x)); }},
        {"mean", [&] { return ops::mean(ops::mul(x, x)); }},
        {"dot", [&] { return ops::dot(v, v); }},
        {"log", [&] { return ops::sum(ops::log(ops::add_scalar(ops::mul(x, x), 1.0))); }},
        {"clamp_min", [&] { return ops::sum(ops::mul(ops::clamp_min(x, 0.25), x)); }},
        {"relu", [&] { return ops::sum(ops::mul(ops::relu(x), x)); }},
        {"sigmoid", [&] { return ops::sum(ops::mul(ops::sigmoid(x), x)); }},
        {"gelu", [&] { return ops::sum(ops::mul(ops::gelu(x), x)); }},
        {"softmax1", [&] { return ops::dot(ops::softmax(v), TensorD({6}, {1, 2, 3, 4, 5, 6})); }},
        {"softmax_rows",
         [&] { return ops::sum(ops::mul(ops::softmax(x, 1), ops::add_scalar(x, 1.0))); }},
        {"softmax_cols",
         [&] { return ops::sum(ops::mul(ops::softmax(x, 0), ops::add_scalar(x, 1.0))); }},
        {"dense", [&] { return ops::sum(ops::mul(ops::dense(v, dw, db), ops::dense(v, dw, db))); }},
        {"conv1d",
         [&] {
           auto y = ops::conv1d(x, w, 1, 1);
           return ops::sum(ops::mul(y, y));
         }},
        {"global_avg", [&] { return ops::sum(ops::mul(ops::global_avg(x), ops::global_avg(x))); }},
        {"global_max", [&] { return ops::sum(ops::global_max(x)); }},
        {"channel_avg", [&] { return ops::sum(ops::mul(ops::channel_avg(x), ops::channel_avg(x))); }},
        {"channel_max", [&] { return ops::sum(ops::channel_max(x)); }},
        {"group_norm",
         [&] {
           auto y = ops::group_norm(x, 3, 1e-5);
           return ops::sum(ops::mul(y, ops::add_scalar(x, 0.5)));
         }},
        {"reshape", [&] { return ops::sum(ops::mul(ops::reshape(x, {8, 3}), ops::reshape(x, {8, 3}))); }},
        {"concat_slice",
         [&] {
           auto c = ops::concat_rows<double>({ops::slice_rows(x, 1, 3), ops::slice_rows(x, 0, 1)});
           return ops::sum(ops::mul(c, c));
         }},
        {"slice_vec", [&] { return ops::sum(ops::mul(ops::slice_vec(v, 1, 5), ops::slice_vec(v, 1, 5))); }},
        {"concat_vecs",
         [&] {
           auto c = ops::concat_vecs<double>({ops::slice_vec(v, 0, 2), v});
           return ops::dot(c, c);
         }},
        {"stack_rows",
         [&] {
           auto s = ops::stack_rows<double>({v, ops::mul_scalar(v, 2.0)});
           return ops::sum(ops::mul(s, s));
         }},
        {"mul_rows", [&] { return ops::sum(ops::mul_rows(x, ops::slice_vec(v, 0, 3))); }},
        {"add_rows", [&] { return ops::sum(ops::mul(ops::add_rows(x, ops::slice_vec(v, 0, 3)), x)); }},
        {"mul_cols",
         [&] {
           auto m = ops::sigmoid(ops::channel_avg(x));
           return ops::sum(ops::mul_cols(x, m));
         }},
        {"row", [&] { return ops::dot(ops::row(dw, 2), ops::row(dw, 2)); }},
        {"pick", [&] { return ops::mul(ops::pick(v, 3), ops::pick(v, 3)); }},
    };

    for (const auto& [name, builder] : cases) {
      auto res = oracles::finite_difference_check({x, w, v, dw, db}, builder, rng);
      INFO("op " << name << " seed " << seedi << " rel err " << res.max_rel_err);
      if (res.max_rel_err >= 1e-3) ++failures;
      CHECK(res.max_rel_err < 1e-3);
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("dropout: identity at inference, mask-scaled in training") {
  Rng rng(31);
  auto x = randn_tensor({64}, rng);
  Rng drop(5);
  auto same = ops::dropout(x, 0.5, drop, false);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(same.at(i) == x.at(i));

  Rng drop2(5);
  auto masked = ops::dropout(x, 0.5, drop2, true);
  int zeros = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    if (masked.at(i) == 0.0) {
      ++zeros;
    } else {
      CHECK(masked.at(i) == doctest::Approx(2.0 * x.at(i)));
    }
  }
  CHECK(zeros > 10);
  CHECK(zeros < 54);
}

TEST_CASE("sgd step and zero-gradient fixed points") {
  Rng rng(37);
  auto p = randn_tensor({4}, rng);
  p.set_requires_grad(true);
  nn::ParamList<double> params{{"p", p}};

  // zero grad -> unchanged
  p.grad();  // allocate
  const auto before = std::vector<double>(p.data().begin(), p.data().end());
  optim::sgd_step(params, 0.1);
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(p.at(static_cast<std::int64_t>(i)) == before[i]);

  // lr=1: p <- p - g
  for (std::size_t i = 0; i < 4; ++i) p.grad()[i] = static_cast<double>(i);
  optim::sgd_step(params, 1.0);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(p.at(static_cast<std::int64_t>(i)) == doctest::Approx(before[i] - static_cast<double>(i)));
  }
}

TEST_CASE("adam converges on a quadratic within 500 steps") {
  TensorD p({3}, {5.0, -4.0, 2.5});
  p.set_requires_grad(true);
  nn::ParamList<double> params{{"p", p}};
  optim::AdamState<double> state;
  optim::AdamConfig<double> cfg;
  cfg.lr = 0.05;
  const std::vector<double> target = {1.0, 2.0, -3.0};
  for (int step = 0; step < 500; ++step) {
    p.zero_grad();
    Tape tape;
    TensorD loss;
    {
      TapeScope scope(tape);
      auto d = ops::sub(p, TensorD({3}, std::vector<double>(target)));
      loss = ops::sum(ops::mul(d, d));
    }
    tape.backward(loss);
    optim::adam_step(params, cfg, state);
  }
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(p.at(i) - target[static_cast<std::size_t>(i)]) < 1e-4);
  }
}

TEST_CASE("optimizers abort on non-finite gradients with the parameter name") {
  TensorD p({2}, {1.0, 2.0});
  p.set_requires_grad(true);
  nn::ParamList<double> params{{"weights.w1", p}};
  p.grad()[0] = std::nan("");
  CHECK_THROWS_WITH_AS(optim::sgd_step(params, 0.1), doctest::Contains("weights.w1"),
                       std::runtime_error);
}

TEST_CASE("activation meter tracks live tensor bytes") {
  auto& meter = ActivationMeter::instance();
  meter.begin();
  {
    TensorD a({100});
    TensorD b({50});
    CHECK(meter.current_bytes == 150 * 8);
  }
  const long long peak = meter.end();
  CHECK(peak == 150 * 8);
}
