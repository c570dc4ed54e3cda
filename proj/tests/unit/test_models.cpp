#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <tuple>

#include "dgm/error.hpp"
#include "dgm/models.hpp"
#include "dgm/ops.hpp"
#include "gradcheck.hpp"

namespace dgm {
namespace {

Tensor uniform(Shape shape, Rng& rng, double lo = -1, double hi = 1, bool grad = false) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from(std::move(shape), std::move(v), grad);
}

void fill(Tensor t, double value) {
  for (auto& v : t.mutable_data()) v = value;
}

ModelConfig small_config(ModelKind kind, std::size_t n) {
  ModelConfig c;
  c.kind = kind;
  c.n = n;
  c.d = 4;
  c.d_model = 4;
  c.d_state = 3;
  c.d_conv = 2;
  c.intermediate = 6;
  c.embed_dim = 3;
  c.lookback = 2;
  c.seed = 7;
  return c;
}

TemporalGraph small_graph(std::uint64_t seed, std::size_t n = 5, std::size_t T = 6) {
  Rng rng(seed);
  TemporalGraph g;
  g.n = n;
  std::uniform_real_distribution<double> w(0.5, 2.0);
  for (std::size_t t = 0; t < T; ++t) {
    Snapshot s;
    s.t = t;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v)
        if (rng() % 2) s.edges.push_back({u, v, w(rng)});
    g.snapshots.push_back(s);
  }
  g.train_end = T - 2;
  g.val_end = T - 1;
  return g;
}

TEST(Heads, ZeroWeightsGiveUnitVariance) {
  Rng rng(1);
  GaussianHeads heads(4, 3, kMambaSigmaOffset, rng);
  ParameterList p;
  heads.collect(p, "h");
  for (auto& param : p) fill(param.value, 0.0);
  const auto e = heads.forward(uniform({2, 4}, rng));
  for (double v : e.mu.data()) EXPECT_EQ(v, 0.0);
  for (double v : e.sigma.data()) EXPECT_EQ(v, 1.0 + 1e-14);
}

TEST(Heads, SigmaMatchesFormulaAndIsPositive) {
  Rng rng(2);
  for (double offset : {kMambaSigmaOffset, kTransformerSigmaOffset}) {
    GaussianHeads heads(4, 5, offset, rng);
    const Tensor h = uniform({6, 4}, rng, -30, 30);
    const auto e = heads.forward(h);
    const Tensor z = heads.sigma.forward(h);
    for (std::size_t i = 0; i < z.numel(); ++i) {
      const double zi = z.data()[i];
      const double want = (zi > 0 ? zi : std::expm1(zi)) + offset;
      EXPECT_NEAR(e.sigma.data()[i], want, 1e-12);
      EXPECT_GT(e.sigma.data()[i], 0.0);
    }
  }
}

TEST(Kl, OneDimensionalOracle) {
  const double v = kl_divergence(std::vector<double>{0.0}, std::vector<double>{1.0},
                                 std::vector<double>{1.0}, std::vector<double>{2.0});
  EXPECT_NEAR(v, 0.5 * (0.5 + 0.5 - 1.0 + std::log(2.0)), 1e-15);
  EXPECT_NEAR(v, 0.346574, 1e-6);
}

TEST(Kl, IdenticalIsExactlyZero) {
  Rng rng(3);
  const Tensor mu = uniform({1, 8}, rng), sigma = uniform({1, 8}, rng, 0.1, 3.0);
  EXPECT_EQ(kl_divergence(mu.data(), sigma.data(), mu.data(), sigma.data()), 0.0);
  EXPECT_EQ(kl_divergence(mu, sigma, mu, sigma).item(), 0.0);
}

TEST(Kl, NonNegativeAndAsymmetric) {
  Rng rng(4);
  bool asymmetric = false;
  for (int i = 0; i < 1000; ++i) {
    const Tensor a = uniform({6}, rng, -2, 2), sa = uniform({6}, rng, 0.05, 4.0);
    const Tensor b = uniform({6}, rng, -2, 2), sb = uniform({6}, rng, 0.05, 4.0);
    const double ab = kl_divergence(a.data(), sa.data(), b.data(), sb.data());
    const double ba = kl_divergence(b.data(), sb.data(), a.data(), sa.data());
    EXPECT_GE(ab, -1e-12);
    asymmetric |= std::abs(ab - ba) > 1e-9;
  }
  EXPECT_TRUE(asymmetric);
}

TEST(Kl, TensorFormMatchesScalarAndRejectsBadVariance) {
  Rng rng(5);
  const Tensor mi = uniform({4, 3}, rng), si = uniform({4, 3}, rng, 0.2, 2);
  const Tensor mj = uniform({4, 3}, rng), sj = uniform({4, 3}, rng, 0.2, 2);
  const Tensor kl = kl_divergence(mi, si, mj, sj);
  for (std::size_t r = 0; r < 4; ++r) {
    auto row = [&](const Tensor& t) { return t.data().subspan(r * 3, 3); };
    EXPECT_NEAR(kl.at(r), kl_divergence(row(mi), row(si), row(mj), row(sj)), 1e-14);
  }
  const Tensor bad = Tensor::from({4, 3}, std::vector<double>(12, 0.0));
  try {
    kl_divergence(mi, si, mj, bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
  EXPECT_THROW(kl_divergence(std::vector<double>{0.0}, std::vector<double>{-1.0},
                             std::vector<double>{0.0}, std::vector<double>{1.0}),
               Error);
}

TEST(Kl, GradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(600 + seed);
    Tensor mi = uniform({3, 4}, rng, -1, 1, true), si = uniform({3, 4}, rng, 0.3, 2, true);
    Tensor mj = uniform({3, 4}, rng, -1, 1, true), sj = uniform({3, 4}, rng, 0.3, 2, true);
    auto loss = [&] { return sum(square(kl_divergence(mi, si, mj, sj))); };
    const auto r = testing::gradcheck(loss, {{"mi", mi}, {"si", si}, {"mj", mj}, {"sj", sj}});
    EXPECT_TRUE(r.ok) << r.worst_where << " " << r.worst_relative;
  }
}

TEST(TripletLoss, EmptyAndKnownValue) {
  GaussianEmbeddings emb{Tensor::from({3, 1}, {0.0, std::sqrt(2.0), -std::sqrt(2.0)}),
                         Tensor::from({3, 1}, {1.0, 1.0, 1.0})};
  EXPECT_EQ(triplet_loss(TripletSet{}, emb).item(), 0.0);
  // KL between unit-variance 1-D Gaussians is (Δμ)²/2 = 1 for both pairs.
  TripletSet set;
  set.triples = {{0, 1, 2}};
  EXPECT_NEAR(triplet_loss(set, emb).item(), 1.0 + std::exp(-1.0), 1e-12);
  EXPECT_NEAR(triplet_loss(set, emb).item(), 1.367879, 1e-6);
}

TEST(TripletLoss, OptimumLimitAndMissingEmbedding) {
  GaussianEmbeddings emb{Tensor::from({3, 1}, {0.0, 0.0, 1e3}), Tensor::from({3, 1}, {1, 1, 1})};
  TripletSet set;
  set.triples = {{0, 1, 2}};
  EXPECT_LT(triplet_loss(set, emb).item(), 1e-300);
  set.triples = {{0, 1, 7}};
  try {
    triplet_loss(set, emb);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST(TripletLoss, GradientsMatchFiniteDifferences) {
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(700 + seed);
    Tensor mu = uniform({5, 3}, rng, -1, 1, true), sigma = uniform({5, 3}, rng, 0.4, 2, true);
    TripletSet set;
    set.triples = {{0, 1, 2}, {3, 4, 0}, {2, 0, 4}};
    auto loss = [&] { return triplet_loss(set, {mu, sigma}); };
    const auto r = testing::gradcheck(loss, {{"mu", mu}, {"sigma", sigma}});
    EXPECT_TRUE(r.ok) << r.worst_where << " " << r.worst_relative;
  }
}

TEST(Features, PaddingAndDegree) {
  TemporalGraph g = small_graph(8, 6, 3);
  g.snapshots[1].edges = {{0, 1, 2.5}, {1, 3, 0.5}};
  const Tensor x = node_features(g, 1);
  EXPECT_EQ(x.shape(), (Shape{6, 6}));
  for (std::size_t v = 0; v < 6; ++v) EXPECT_EQ(x.at(5, v), 0.0);
  const double deg[6] = {2.5, 3.0, 0.0, 0.5, 0.0, 0.0};
  for (std::size_t u = 0; u < 6; ++u) {
    double row = 0.0;
    for (std::size_t v = 0; v < 6; ++v) row += x.at(u, v);
    EXPECT_NEAR(row, deg[u], 1e-15);
  }
}

TEST(Config, ValidationAndRoundTrip) {
  ModelConfig c = small_config(ModelKind::kGdgMamba, 5);
  c.lr = 0.003;
  c.weight_decay = 1.02e-5;
  ModelConfig back;
  for (const auto& [k, v] : c.to_map()) ASSERT_TRUE(apply_config_key(back, k, v)) << k;
  EXPECT_EQ(back.to_map(), c.to_map());
  EXPECT_FALSE(apply_config_key(back, "colour", "red"));
  c.lookback = 6;
  EXPECT_THROW(c.validate(), Error);
  c.lookback = 0;
  EXPECT_THROW(c.validate(), Error);
  try {
    apply_config_key(back, "model", "lstm");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

class EveryModel : public ::testing::TestWithParam<ModelKind> {};

TEST_P(EveryModel, OutputShapesPositivityAndDeterminism) {
  const TemporalGraph g = small_graph(9);
  auto cfg = small_config(GetParam(), 5);
  cfg.embed_dim = 64;
  const auto model = make_model(cfg);
  const auto twin = make_model(cfg);
  for (std::size_t t = 2; t < g.num_timestamps(); ++t) {
    const auto e = model->forward(g, t);
    EXPECT_EQ(e.mu.shape(), (Shape{5, 64}));
    EXPECT_EQ(e.sigma.shape(), (Shape{5, 64}));
    for (double s : e.sigma.data()) EXPECT_GT(s, 0.0);
    const auto f = twin->forward(g, t);
    EXPECT_EQ(e.mu.to_vector(), f.mu.to_vector());
    EXPECT_EQ(e.sigma.to_vector(), f.sigma.to_vector());
  }
  try {
    model->forward(g, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kContract);
  }
}

TEST_P(EveryModel, PipelineGradientsMatchFiniteDifferences) {
  int checked = 0;
  for (std::uint64_t seed = 0; checked < 3 && seed < 20; ++seed) {
    const TemporalGraph g = small_graph(40 + seed);
    auto cfg = small_config(GetParam(), 5);
    cfg.seed = seed;
    const auto model = make_model(cfg);
    TripletSet set;
    set.t = 4;
    set.triples = {{0, 1, 2}, {3, 4, 1}, {2, 3, 0}};
    auto loss = [&] { return triplet_loss(set, model->forward(g, 4)); };
    const auto r = testing::gradcheck(loss, model->parameters());
    ++checked;
    EXPECT_TRUE(r.ok) << to_string(GetParam()) << " seed " << seed << " " << r.worst_where << " "
                      << r.worst_relative;
  }
}

TEST_P(EveryModel, CheckpointRoundTrip) {
  const TemporalGraph g = small_graph(10);
  const auto model = make_model(small_config(GetParam(), 5));
  for (auto& p : model->parameters()) {
    for (auto& v : p.value.mutable_data()) v *= 1.1;
  }
  std::stringstream buf;
  save_checkpoint(*model, buf);
  const auto back = load_checkpoint(buf);
  EXPECT_EQ(back->config().to_map(), model->config().to_map());
  EXPECT_EQ(back->forward(g, 3).mu.to_vector(), model->forward(g, 3).mu.to_vector());
}

TEST_P(EveryModel, TemporalMatricesAreSquareWindows) {
  const TemporalGraph g = small_graph(11);
  const auto model = make_model(small_config(GetParam(), 5));
  const auto mats = model->temporal_matrices(g, 4);
  ASSERT_EQ(mats.size(), 5u);
  for (const auto& m : mats) {
    EXPECT_EQ(m.shape(), (Shape{3, 3}));
    for (std::size_t i = 0; i < 3; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 3; ++j) {
        row += m.at(i, j);
        if (GetParam() != ModelKind::kStTransformerG2G && j > i) EXPECT_EQ(m.at(i, j), 0.0);
      }
      if (GetParam() == ModelKind::kStTransformerG2G) EXPECT_NEAR(row, 1.0, 1e-12);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(Kinds, EveryModel,
                         ::testing::Values(ModelKind::kStTransformerG2G, ModelKind::kDgMamba,
                                           ModelKind::kGdgMamba),
                         [](const auto& info) {
                           std::string s = to_string(info.param);
                           std::erase(s, '-');
                           return s;
                         });

TEST(StTransformer, StaticGraphWindowIsIdempotent) {
  TemporalGraph g = small_graph(12, 5, 4);
  for (auto& s : g.snapshots) s.edges = g.snapshots[0].edges;
  auto cfg = small_config(ModelKind::kStTransformerG2G, 5);
  cfg.lookback = 1;
  const auto model = make_model(cfg);
  const auto a = model->forward(g, 1), b = model->forward(g, 3);
  EXPECT_EQ(a.mu.to_vector(), b.mu.to_vector());
  EXPECT_EQ(a.sigma.to_vector(), b.sigma.to_vector());
}

TEST(DgMamba, OldestSnapshotInfluencesEmbedding) {
  TemporalGraph g = small_graph(13);
  const auto model = make_model(small_config(ModelKind::kDgMamba, 5));
  const auto base = model->forward(g, 4).mu.to_vector();
  g.snapshots[2].edges.push_back({0, 4, 3.0});
  std::sort(g.snapshots[2].edges.begin(), g.snapshots[2].edges.end(),
            [](const Edge& a, const Edge& b) { return std::tie(a.u, a.v) < std::tie(b.u, b.v); });
  const auto moved = model->forward(g, 4).mu.to_vector();
  EXPECT_NE(base, moved);
}

TEST(GdgMamba, IdentityGineOnEdgelessGraphMatchesDgMamba) {
  TemporalGraph g = small_graph(14);
  for (auto& s : g.snapshots) s.edges.clear();
  // Edgeless features are all zero, so give the projection a bias to carry signal.
  auto dg_cfg = small_config(ModelKind::kDgMamba, 5);
  auto gdg_cfg = dg_cfg;
  gdg_cfg.kind = ModelKind::kGdgMamba;
  auto dg = make_model(dg_cfg);
  auto gdg = make_model(gdg_cfg);
  auto* gdg_model = dynamic_cast<MambaEmbedder*>(gdg.get());
  ASSERT_NE(gdg_model, nullptr);
  const std::size_t d = dg_cfg.d_model;
  std::vector<double> w1(d * 2 * d, 0.0), w2(2 * d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    w1[i * 2 * d + i] = 1.0;
    w1[i * 2 * d + d + i] = -1.0;
    w2[i * d + i] = 1.0;
    w2[(d + i) * d + i] = -1.0;
  }
  std::copy(w1.begin(), w1.end(), gdg_model->gine.mlp_in.weight.mutable_data().begin());
  std::copy(w2.begin(), w2.end(), gdg_model->gine.mlp_out.weight.mutable_data().begin());
  fill(gdg_model->gine.mlp_in.bias, 0.0);
  fill(gdg_model->gine.mlp_out.bias, 0.0);
  fill(gdg_model->gine.eps, 0.0);
  const auto dg_params = dg->parameters();
  for (const auto& p : gdg->parameters()) {
    for (const auto& q : dg_params) {
      if (q.name != p.name) continue;
      Tensor dst = p.value;
      const auto src = q.value.data();
      std::copy(src.begin(), src.end(), dst.mutable_data().begin());
    }
  }
  const auto a = dg->forward(g, 3), b = gdg->forward(g, 3);
  const auto am = a.mu.to_vector(), bm = b.mu.to_vector();
  for (std::size_t i = 0; i < am.size(); ++i) EXPECT_NEAR(am[i], bm[i], 1e-15);
}

TEST(GdgMamba, EpsilonGradientThroughPipeline) {
  const TemporalGraph g = small_graph(15);
  const auto model = make_model(small_config(ModelKind::kGdgMamba, 5));
  auto* m = dynamic_cast<MambaEmbedder*>(model.get());
  fill(m->gine.eps, 0.3);
  TripletSet set;
  set.triples = {{0, 1, 2}, {4, 3, 0}};
  auto loss = [&] { return triplet_loss(set, model->forward(g, 5)); };
  const auto r = testing::gradcheck(loss, {{"eps", m->gine.eps}});
  EXPECT_TRUE(r.ok) << r.worst_relative;
  EXPECT_NE(backward(loss(), {{"eps", m->gine.eps}})[0].item(), 0.0);
}

TemporalGraph two_community_graph() {
  Rng rng(21);
  SbmParams p;
  p.n = 60;
  p.communities = 2;
  p.p_in = 0.5;
  p.p_out = 0.0;
  p.churn_min = 2;
  p.churn_max = 4;
  p.timestamps = 20;
  return generate_sbm(p, rng).graph;
}

TEST(Training, SmokeRunHalvesLossAndIsDeterministic) {
  const TemporalGraph g = two_community_graph();
  ModelConfig cfg = small_config(ModelKind::kDgMamba, g.n);
  cfg.d_model = 16;
  cfg.d_state = 8;
  cfg.d_conv = 2;
  cfg.intermediate = 16;
  cfg.embed_dim = 8;
  cfg.lr = 0.01;
  cfg.epochs = 20;
  auto model = make_model(cfg);
  const auto h = train(*model, g);
  ASSERT_FALSE(h.train_loss.empty());
  for (double v : h.train_loss) EXPECT_TRUE(std::isfinite(v));
  EXPECT_LT(h.train_loss.back(), 0.5 * h.train_loss.front());

  auto again = make_model(cfg);
  const auto h2 = train(*again, g);
  EXPECT_EQ(h.train_loss, h2.train_loss);
  EXPECT_EQ(h.val_loss, h2.val_loss);
  EXPECT_EQ(h.best_epoch, h2.best_epoch);
  EXPECT_LE(h.epochs_run, cfg.epochs);
}

TEST(Training, RequiresSplit) {
  TemporalGraph g = small_graph(16);
  g.train_end = g.val_end = 0;
  auto model = make_model(small_config(ModelKind::kDgMamba, 5));
  try {
    train(*model, g);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
  }
}

}  // namespace
}  // namespace dgm
