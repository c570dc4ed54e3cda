#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

#include "dgm/error.hpp"
#include "dgm/ops.hpp"
#include "gradcheck.hpp"

namespace dgm {
namespace {

Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                     bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

std::vector<double> triple_loop(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a.at(i, p) * b.at(p, j);
      out[i * n + j] = acc;
    }
  return out;
}

TEST(Matmul, IdentityLeavesMatrix) {
  const Tensor eye = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(matmul(eye, m).to_vector(), m.to_vector());
}

TEST(Matmul, OneByOne) { EXPECT_EQ(matmul(Tensor::matrix({{2}}), Tensor::matrix({{3}})).item(), 6.0); }

TEST(Matmul, MatchesTripleLoop) {
  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  const auto got = matmul(a, b).to_vector();
  const auto want = triple_loop(a, b);
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
}

TEST(Matmul, MismatchNamesBothShapes) {
  try {
    matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kDimension);
    EXPECT_NE(std::string(e.what()).find("[2,3]"), std::string::npos) << e.what();
  }
}

TEST(Activation, ZeroCases) {
  EXPECT_EQ(elu(Tensor::scalar(0.0)).item(), 0.0);
  EXPECT_EQ(tanh(Tensor::scalar(0.0)).item(), 0.0);
}

TEST(Activation, EluNegativeOne) {
  EXPECT_NEAR(elu(Tensor::scalar(-1.0)).item(), std::exp(-1.0) - 1.0, 1e-15);
  EXPECT_NEAR(elu(Tensor::scalar(-1.0)).item(), -0.632121, 1e-6);
}

TEST(Activation, UnknownKindIsConfigError) {
  try {
    parse_activation("gelu");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
  EXPECT_EQ(parse_activation("softplus"), Activation::kSoftplus);
}

TEST(ReduceMean, Basics) {
  EXPECT_EQ(reduce_mean(Tensor::from({3}, {1, 2, 3}), 0).item(), 2.0);
  EXPECT_EQ(reduce_mean(Tensor::zeros({2, 2}), 0).to_vector(), (std::vector<double>{0, 0}));
  EXPECT_THROW(reduce_mean(Tensor::zeros({2, 2}), 2), Error);
}

TEST(ReduceMean, MatchesKahanOracle) {
  std::mt19937_64 rng(7);
  const Tensor x = random_tensor({100}, rng, 0.0, 1.0, false);
  double sum = 0.0, comp = 0.0;
  for (double v : x.data()) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  EXPECT_NEAR(reduce_mean(x, 0).item(), sum / 100.0, 1e-12);
}

TEST(ReduceMean, MiddleAxis) {
  const Tensor x = Tensor::from({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  EXPECT_EQ(reduce_mean(x, 1).to_vector(), (std::vector<double>{2, 3, 6, 7}));
}

TEST(Backward, SumGivesOnes) {
  Tensor p = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  const auto grads = backward(sum(p), {{"p", p}});
  EXPECT_EQ(grads[0].to_vector(), std::vector<double>(6, 1.0));
}

TEST(Backward, InnerProduct) {
  Tensor p = Tensor::from({1}, {3.0}, true);
  const auto grads = backward(sum(mul(p, p)), {{"p", p}});
  EXPECT_NEAR(grads[0].item(), 6.0, 1e-12);
}

TEST(Backward, NonScalarLossIsContractError) {
  Tensor p = Tensor::from({2}, {1, 2}, true);
  try {
    backward(mul(p, p));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(Backward, UnreachableParameterGetsExactZero) {
  Tensor used = Tensor::from({2}, {1, 2}, true);
  Tensor unused = Tensor::from({2}, {3, 4}, true);
  const auto grads = backward(sum(square(used)), {{"used", used}, {"unused", unused}});
  EXPECT_EQ(grads[1].to_vector(), (std::vector<double>{0, 0}));
  EXPECT_EQ(grads[0].to_vector(), (std::vector<double>{2, 4}));
}

TEST(Backward, ComposedNetworkMatchesFiniteDifferences) {
  std::mt19937_64 rng(3);
  Tensor x = random_tensor({4, 3}, rng, -1, 1, false);
  Tensor w1 = random_tensor({3, 5}, rng), w2 = random_tensor({5, 2}, rng);
  Tensor b1 = random_tensor({5}, rng);
  ParameterList params{{"w1", w1}, {"w2", w2}, {"b1", b1}};
  auto loss = [&] { return sum(square(tanh(matmul(tanh(add(matmul(x, w1), b1)), w2)))); };
  const auto r = testing::gradcheck(loss, params);
  EXPECT_TRUE(r.ok) << r.worst_where << " " << r.worst_relative;
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  Tensor p = Tensor::from({1}, {2.0}, true);
  const Tensor q = mul(p, p);
  const Tensor loss = sum(add(q, q));
  const Tape tape = Tape::record(loss);
  std::set<const detail::Node*> seen(tape.nodes().begin(), tape.nodes().end());
  EXPECT_EQ(seen.size(), tape.size());
  const auto grads = backward(loss, {{"p", p}});
  EXPECT_NEAR(grads[0].item(), 8.0, 1e-12);
}

TEST(Broadcast, TrailingVectorAndScalar) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(add(m, Tensor::from({2}, {10, 20})).to_vector(), (std::vector<double>{11, 22, 13, 24}));
  EXPECT_EQ(mul(m, Tensor::scalar(2)).to_vector(), (std::vector<double>{2, 4, 6, 8}));
  EXPECT_THROW(add(m, Tensor::zeros({3})), Error);
  EXPECT_THROW(add(Tensor::zeros({2}), m), Error);
}

TEST(Determinism, ForwardIsBitwiseRepeatable) {
  std::mt19937_64 rng(11);
  const Tensor a = random_tensor({6, 7}, rng), b = random_tensor({7, 5}, rng);
  EXPECT_EQ(softmax(matmul(a, b)).to_vector(), softmax(matmul(a, b)).to_vector());
}

TEST(MutableData, RejectedForOpResults) {
  Tensor p = Tensor::from({2}, {1, 2}, true);
  Tensor q = add(p, p);
  EXPECT_THROW(q.mutable_data(), Error);
}

TEST(NoGrad, RecordsNothing) {
  Tensor p = Tensor::from({2}, {1, 2}, true);
  NoGradGuard guard;
  EXPECT_FALSE(add(p, p).requires_grad());
}

TEST(Dropout, ZeroRateIsIdentityAndScalingPreserved) {
  std::mt19937_64 rng(5);
  const Tensor x = Tensor::full({1000}, 1.0);
  EXPECT_EQ(dropout(x, 0.0, rng).to_vector(), x.to_vector());
  const auto kept = dropout(x, 0.5, rng).to_vector();
  for (double v : kept) EXPECT_TRUE(v == 0.0 || v == 2.0);
}

TEST(LayerNorm, ZeroMeanUnitVariance) {
  const Tensor x = Tensor::matrix({{1, 2, 3, 4}});
  const auto y = layer_norm(x, Tensor::full({4}, 1.0), Tensor::zeros({4}), 0.0).to_vector();
  double mean = 0, var = 0;
  for (double v : y) mean += v / 4;
  for (double v : y) var += (v - mean) * (v - mean) / 4;
  EXPECT_NEAR(mean, 0.0, 1e-12);
  EXPECT_NEAR(var, 1.0, 1e-12);
}

TEST(CausalConv, HandExpanded) {
  // One channel, kernel [a, b]: y_t = a x_{t-1} + b x_t + bias.
  const Tensor x = Tensor::from({1, 3, 1}, {1, 2, 3});
  const Tensor w = Tensor::from({1, 2}, {0.5, 2.0});
  const Tensor b = Tensor::from({1}, {0.25});
  EXPECT_EQ(causal_depthwise_conv(x, w, b).to_vector(),
            (std::vector<double>{2.25, 4.75, 7.25}));
}

TEST(ScatterIndex, RoundTrip) {
  const Tensor x = Tensor::matrix({{1, 2}, {3, 4}, {5, 6}});
  const std::vector<std::size_t> rows{2, 0, 2};
  const Tensor picked = index_rows(x, rows);
  EXPECT_EQ(picked.to_vector(), (std::vector<double>{5, 6, 1, 2, 5, 6}));
  EXPECT_EQ(scatter_add_rows(picked, rows, 3).to_vector(),
            (std::vector<double>{1, 2, 0, 0, 10, 12}));
}

// Every primitive with a backward rule, 100 random instances each.
class PrimitiveGradients : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradients, MatchFiniteDifferences) {
  std::mt19937_64 rng(1000 + GetParam());
  Tensor a = random_tensor({2, 3}, rng), b = random_tensor({2, 3}, rng);
  Tensor v = random_tensor({3}, rng), s = random_tensor({1}, rng);
  Tensor pos = random_tensor({2, 3}, rng, 0.5, 2.0);
  Tensor m = random_tensor({3, 4}, rng);
  Tensor b3 = random_tensor({2, 3, 2}, rng), c3 = random_tensor({2, 2, 3}, rng);
  Tensor gamma = random_tensor({3}, rng), beta = random_tensor({3}, rng);
  Tensor x3 = random_tensor({2, 4, 3}, rng), cw = random_tensor({3, 2}, rng);
  Tensor r = random_tensor({2, 3}, rng);
  auto weighted = [&](const Tensor& t) {
    // Non-uniform weights so that symmetric errors cannot cancel.
    std::vector<double> w(t.numel());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i);
    return sum(mul(t, Tensor::from(t.shape(), w)));
  };
  const std::vector<std::size_t> idx{1, 0, 1};
  const std::vector<std::pair<std::string, std::function<Tensor()>>> cases{
      {"add", [&] { return weighted(add(a, b)); }},
      {"add_vec", [&] { return weighted(add(a, v)); }},
      {"sub", [&] { return weighted(sub(a, v)); }},
      {"mul", [&] { return weighted(mul(a, b)); }},
      {"mul_scalar", [&] { return weighted(mul(a, s)); }},
      {"div", [&] { return weighted(div(a, pos)); }},
      {"neg_scale", [&] { return weighted(scale(neg(add_scalar(a, 0.3)), 1.7)); }},
      {"square_log", [&] { return weighted(log(square(pos))); }},
      {"tanh", [&] { return weighted(tanh(a)); }},
      {"elu", [&] { return weighted(elu(a)); }},
      {"relu", [&] { return weighted(relu(r)); }},
      {"exp", [&] { return weighted(exp(a)); }},
      {"sigmoid", [&] { return weighted(sigmoid(a)); }},
      {"silu", [&] { return weighted(silu(a)); }},
      {"softplus", [&] { return weighted(softplus(a)); }},
      {"matmul", [&] { return weighted(matmul(a, m)); }},
      {"bmm", [&] { return weighted(bmm(b3, c3)); }},
      {"transpose", [&] { return weighted(transpose(b3)); }},
      {"sum_axis", [&] { return weighted(sum(b3, 1)); }},
      {"mean", [&] { return mean(square(a)); }},
      {"reduce_mean", [&] { return weighted(reduce_mean(b3, 2)); }},
      {"reshape", [&] { return weighted(reshape(a, {3, 2})); }},
      {"slice", [&] { return weighted(slice_last(b3, 1, 1)); }},
      {"stack", [&] {
         const Tensor parts[] = {a, b};
         return weighted(stack(parts, 1));
       }},
      {"index_rows", [&] { return weighted(index_rows(a, idx)); }},
      {"scatter", [&] { return weighted(scatter_add_rows(m, idx, 2)); }},
      {"softmax", [&] { return weighted(softmax(a)); }},
      {"layer_norm", [&] { return weighted(layer_norm(a, gamma, beta)); }},
      {"conv", [&] { return weighted(causal_depthwise_conv(x3, cw, v)); }},
  };
  const ParameterList params{{"a", a},   {"b", b},       {"v", v},       {"s", s},
                             {"pos", pos}, {"m", m},     {"b3", b3},     {"c3", c3},
                             {"gamma", gamma}, {"beta", beta}, {"x3", x3}, {"cw", cw},
                             {"r", r}};
  for (const auto& [name, fn] : cases) {
    const auto res = testing::gradcheck(fn, params);
    EXPECT_TRUE(res.ok) << name << " worst " << res.worst_where << " rel " << res.worst_relative;
  }
}

INSTANTIATE_TEST_SUITE_P(Random, PrimitiveGradients, ::testing::Range(0, 100));

}  // namespace
}  // namespace dgm
