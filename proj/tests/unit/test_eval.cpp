#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "dgm/error.hpp"
#include "dgm/eval.hpp"

namespace dgm {
namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::kIo;
}

// Ranks given directly as a relevance pattern, best first.
RankingResult ranking_of(const std::vector<bool>& pattern, std::size_t query = 0) {
  std::vector<RankedCandidate> c;
  for (std::size_t i = 0; i < pattern.size(); ++i) {
    c.push_back({i, static_cast<double>(pattern.size() - i), pattern[i]});
  }
  return make_ranking(0, query, c);
}

// AP from its set definition: for each relevant item, the share of relevant
// items ranked no lower, divided by its rank, averaged.
double oracle_ap(const std::vector<bool>& p) {
  std::vector<std::size_t> ranks;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i]) ranks.push_back(i + 1);
  if (ranks.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t r : ranks) {
    const auto above = std::count_if(ranks.begin(), ranks.end(), [&](std::size_t s) { return s <= r; });
    total += static_cast<double>(above) / static_cast<double>(r);
  }
  return total / static_cast<double>(ranks.size());
}

double oracle_rr(const std::vector<bool>& p) {
  const auto it = std::find(p.begin(), p.end(), true);
  return it == p.end() ? 0.0 : 1.0 / static_cast<double>(it - p.begin() + 1);
}

// Every relevance pattern of length 1..5 with at most two relevant items.
std::vector<std::vector<bool>> all_patterns() {
  std::vector<std::vector<bool>> out;
  for (std::size_t n = 1; n <= 5; ++n) {
    for (std::size_t mask = 0; mask < (1u << n); ++mask) {
      if (std::popcount(mask) > 2) continue;
      std::vector<bool> p(n);
      for (std::size_t i = 0; i < n; ++i) p[i] = (mask >> i) & 1u;
      out.push_back(p);
    }
  }
  return out;
}

TemporalGraph path_graph_series(std::size_t n, std::size_t T) {
  TemporalGraph g;
  g.n = n;
  for (std::size_t t = 0; t < T; ++t) {
    Snapshot s;
    s.t = t;
    for (std::size_t u = 0; u + 1 < n; ++u) s.edges.push_back({u, u + 1, 1.0});
    g.snapshots.push_back(s);
  }
  const auto [train_end, val_end] = split_timestamps(T);
  g.train_end = train_end;
  g.val_end = val_end;
  return g;
}

TEST(LinkPairs, RatioOfNegatives) {
  TemporalGraph g = path_graph_series(30, 5);
  g.snapshots[0].edges.resize(5);
  Rng rng(1);
  const auto s = sample_link_pairs(g, 0, 10, rng);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [](auto& x) { return x.label == 1; }), 5);
  EXPECT_EQ(std::count_if(s.begin(), s.end(), [](auto& x) { return x.label == 0; }), 50);
}

TEST(LinkPairs, NegativesAreDistinctNonEdges) {
  const TemporalGraph g = path_graph_series(40, 5);
  Rng rng(2);
  const auto s = sample_link_pairs(g, 1, 10, rng);
  std::set<std::pair<std::size_t, std::size_t>> edges, seen;
  for (const auto& e : g.snapshots[1].edges) edges.insert({e.u, e.v});
  for (const auto& x : s) {
    EXPECT_NE(x.u, x.v);
    EXPECT_LT(x.u, x.v);
    EXPECT_TRUE(seen.insert({x.u, x.v}).second);
    EXPECT_EQ(edges.count({x.u, x.v}) == 1, x.label == 1);
  }
}

TEST(LinkPairs, DirectedPairsKeepOrientation) {
  TemporalGraph g;
  g.n = 12;
  g.directed = true;
  Snapshot s;
  s.edges = {{1, 3, 1.0}, {3, 1, 1.0}, {5, 2, 1.0}};
  g.snapshots.push_back(s);
  Rng rng(3);
  const auto pairs = sample_link_pairs(g, 0, 3, rng);
  EXPECT_EQ(pairs.size(), 12u);
  EXPECT_EQ(pairs[0], (LinkSample{0, 1, 3, 1}));
  EXPECT_EQ(pairs[1], (LinkSample{0, 3, 1, 1}));
  EXPECT_EQ(pairs[2], (LinkSample{0, 5, 2, 1}));
}

TEST(LinkPairs, SeedReplay) {
  const TemporalGraph g = path_graph_series(50, 5);
  Rng a(9), b(9);
  EXPECT_EQ(sample_link_pairs(g, 2, 10, a), sample_link_pairs(g, 2, 10, b));
}

TEST(LinkPairs, TooDenseIsSamplingError) {
  TemporalGraph g;
  g.n = 4;
  Snapshot s;
  for (std::size_t u = 0; u < 4; ++u)
    for (std::size_t v = u + 1; v < 4; ++v)
      if (!(u == 0 && v == 1)) s.edges.push_back({u, v, 1.0});
  g.snapshots.push_back(s);
  Rng rng(4);
  EXPECT_EQ(kind_of([&] { sample_link_pairs(g, 0, 10, rng); }), ErrorKind::kSampling);
}

TEST(LinkPairs, EmptySnapshotIsDataError) {
  TemporalGraph g;
  g.n = 4;
  g.snapshots.push_back({});
  Rng rng(4);
  EXPECT_EQ(kind_of([&] { sample_link_pairs(g, 0, 10, rng); }), ErrorKind::kData);
}

TEST(Metrics, PerfectAndForcedCases) {
  const std::vector<RankingResult> one{ranking_of({true})};
  EXPECT_EQ(compute_map(one), 1.0);
  const std::vector<RankingResult> second{ranking_of({false, true})};
  EXPECT_EQ(compute_map(second), 0.5);
  const std::vector<RankingResult> top{ranking_of({true, false, false}),
                                       ranking_of({true, true, false})};
  EXPECT_EQ(compute_mrr(top), 1.0);
  const std::vector<RankingResult> mixed{ranking_of({true, false}), ranking_of({false, true})};
  EXPECT_EQ(compute_mrr(mixed), 0.75);
}

TEST(Metrics, QueriesWithoutRelevantItems) {
  const std::vector<RankingResult> r{ranking_of({true, false}), ranking_of({false, false})};
  EXPECT_EQ(compute_map(r), 1.0);
  EXPECT_EQ(compute_mrr(r), 0.5);
}

TEST(Metrics, EmptyListIsDataError) {
  const std::vector<RankingResult> none;
  EXPECT_EQ(kind_of([&] { compute_map(none); }), ErrorKind::kData);
  EXPECT_EQ(kind_of([&] { compute_mrr(none); }), ErrorKind::kData);
}

TEST(Metrics, BruteForceEnumeration) {
  const auto patterns = all_patterns();
  for (const auto& p : patterns) {
    const std::vector<RankingResult> r{ranking_of(p)};
    if (std::find(p.begin(), p.end(), true) != p.end()) {
      EXPECT_EQ(compute_map(r), oracle_ap(p));
    }
    EXPECT_EQ(compute_mrr(r), oracle_rr(p));
  }
  // Random triples of queries against the averaged oracle.
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> pick(0, patterns.size() - 1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RankingResult> r;
    double ap = 0.0, rr = 0.0;
    std::size_t counted = 0;
    for (int q = 0; q < 3; ++q) {
      const auto& p = patterns[pick(rng)];
      r.push_back(ranking_of(p, q));
      rr += oracle_rr(p);
      if (std::find(p.begin(), p.end(), true) != p.end()) {
        ap += oracle_ap(p);
        ++counted;
      }
    }
    if (counted > 0) EXPECT_DOUBLE_EQ(compute_map(r), ap / static_cast<double>(counted));
    EXPECT_DOUBLE_EQ(compute_mrr(r), rr / 3.0);
  }
}

TEST(Metrics, MovingRelevantUpIncreases) {
  for (const auto& p : all_patterns()) {
    for (std::size_t i = 1; i < p.size(); ++i) {
      if (!p[i] || p[i - 1]) continue;
      auto q = p;
      std::swap(q[i], q[i - 1]);
      const std::vector<RankingResult> before{ranking_of(p)}, after{ranking_of(q)};
      EXPECT_GT(compute_map(after), compute_map(before));
      const bool first_relevant = std::find(p.begin(), p.end(), true) == p.begin() + i;
      if (first_relevant) {
        EXPECT_GT(compute_mrr(after), compute_mrr(before));
      } else {
        EXPECT_EQ(compute_mrr(after), compute_mrr(before));
      }
    }
  }
}

TEST(Metrics, QueryOrderInvariance) {
  Rng rng(6);
  const auto patterns = all_patterns();
  std::vector<RankingResult> r;
  for (std::size_t q = 0; q < patterns.size(); ++q) r.push_back(ranking_of(patterns[q], q));
  const double map = compute_map(r), mrr = compute_mrr(r);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(r.begin(), r.end(), rng);
    EXPECT_NEAR(compute_map(r), map, 1e-15);
    EXPECT_NEAR(compute_mrr(r), mrr, 1e-15);
  }
}

TEST(Metrics, TiesBreakByCandidateId) {
  const auto r = make_ranking(0, 0, {{4, 0.5, false}, {2, 0.5, true}, {7, 0.9, false}});
  EXPECT_EQ(r.candidates[0].id, 7u);
  EXPECT_EQ(r.candidates[1].id, 2u);
  EXPECT_EQ(r.candidates[2].id, 4u);
}

TEST(Metrics, ExpectedRandomApMatchesEnumeration) {
  for (std::size_t n = 1; n <= 6; ++n) {
    for (std::size_t rel = 1; rel <= n; ++rel) {
      std::vector<bool> p(n, false);
      std::fill(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(rel), true);
      std::sort(p.begin(), p.end());
      double total = 0.0;
      std::size_t count = 0;
      do {
        total += oracle_ap(p);
        ++count;
      } while (std::next_permutation(p.begin(), p.end()));
      EXPECT_NEAR(expected_random_ap(n, rel), total / static_cast<double>(count), 1e-12)
          << n << " " << rel;
    }
  }
}

TEST(Classifier, SeparableToySetIsFit) {
  Rng rng(7);
  std::normal_distribution<double> noise(0.0, 0.3);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 60; ++i) {
    const int label = i % 2;
    const double c = label ? 2.0 : -2.0;
    x.push_back({c + noise(rng), -c + noise(rng)});
    y.push_back(label);
  }
  const auto clf = train_logistic(x, y, {});
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double z = clf.logit(x[i]);
    EXPECT_EQ(z > 0, y[i] == 1);
    const double s = 1.0 / (1.0 + std::exp(-z));
    EXPECT_GT(s, 0.0);
    EXPECT_LT(s, 1.0);
  }
}

TEST(Classifier, MatchesPerceptronSigns) {
  const std::vector<std::vector<double>> x{{0, 0}, {1, 0}, {0, 1}, {1, 1},
                                           {3, 3}, {4, 3}, {3, 4}, {4, 4}};
  const std::vector<int> y{0, 0, 0, 0, 1, 1, 1, 1};
  // Perceptron run to convergence on the raw features.
  double w0 = 0, w1 = 0, b = 0;
  for (bool changed = true; changed;) {
    changed = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double target = y[i] ? 1.0 : -1.0;
      if (target * (w0 * x[i][0] + w1 * x[i][1] + b) <= 0) {
        w0 += target * x[i][0];
        w1 += target * x[i][1];
        b += target;
        changed = true;
      }
    }
  }
  const auto clf = train_logistic(x, y, {});
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_EQ(clf.logit(x[i]) > 0, w0 * x[i][0] + w1 * x[i][1] + b > 0) << i;
  }
}

TEST(Classifier, SingleClassIsDataError) {
  const std::vector<std::vector<double>> x{{0.0}, {1.0}};
  EXPECT_EQ(kind_of([&] { train_logistic(x, {1, 1}, {}); }), ErrorKind::kData);
}

TEST(Classifier, PairFeatureLayout) {
  GaussianEmbeddings e{Tensor::matrix({{1, 2}, {4, 6}}), Tensor::matrix({{0.5, 0.5}, {2, 3}})};
  ClassifierOptions concat;
  concat.features = PairFeatures::kConcat;
  EXPECT_EQ(pair_features(e, 0, 1, concat), (std::vector<double>{1, 2, 4, 6}));
  ClassifierOptions diff;
  EXPECT_EQ(pair_features(e, 0, 1, diff), (std::vector<double>{1, 2, 4, 6, 9, 16}));
  ClassifierOptions sigma = concat;
  sigma.use_sigma = true;
  EXPECT_EQ(pair_features(e, 1, 0, sigma), (std::vector<double>{4, 6, 2, 3, 1, 2, 0.5, 0.5}));
}

// Two-community graph whose embeddings are the community indicator.
struct Planted {
  TemporalGraph g;
  std::vector<GaussianEmbeddings> emb;
};

Planted planted(std::uint64_t seed) {
  Rng rng(seed);
  SbmParams p;
  p.n = 90;
  p.communities = 2;
  p.p_in = 0.1;
  p.p_out = 0.005;
  p.churn_min = 1;
  p.churn_max = 2;
  p.timestamps = 10;
  const SbmGraph sbm = generate_sbm(p, rng);
  Planted out{sbm.graph, {}};
  for (std::size_t t = 0; t < p.timestamps; ++t) {
    std::vector<double> mu, sigma;
    for (std::size_t v = 0; v < p.n; ++v) {
      const double side = sbm.memberships[t][v] == 0 ? 1.0 : -1.0;
      mu.insert(mu.end(), {side, -side});
      sigma.insert(sigma.end(), {1.0, 1.0});
    }
    out.emb.push_back({Tensor::from({p.n, 2}, std::move(mu)), Tensor::from({p.n, 2}, std::move(sigma))});
  }
  return out;
}

double mean_random_ap(const std::vector<RankingResult>& rankings) {
  double total = 0.0;
  for (const auto& r : rankings) {
    const auto rel = std::count_if(r.candidates.begin(), r.candidates.end(),
                                   [](const RankedCandidate& c) { return c.relevant; });
    total += expected_random_ap(r.candidates.size(), static_cast<std::size_t>(rel));
  }
  return total / static_cast<double>(rankings.size());
}

TEST(Evaluate, PlantedCommunitiesBeatChance) {
  const Planted pl = planted(11);
  std::vector<RankingResult> rankings;
  const Metrics m = evaluate(pl.emb, pl.g, 1, {}, &rankings);
  EXPECT_GT(m.queries, 0u);
  EXPECT_GE(m.map, 0.0);
  EXPECT_LE(m.map, 1.0);
  EXPECT_GE(m.mrr, 0.0);
  EXPECT_LE(m.mrr, 1.0);
  EXPECT_GT(m.map, 1.5 * mean_random_ap(rankings));
  // Recomputed from the returned rankings.
  EXPECT_EQ(compute_map(rankings), m.map);
  EXPECT_EQ(compute_mrr(rankings), m.mrr);
}

TEST(Evaluate, ShuffledEmbeddingsSitAtChance) {
  const Planted pl = planted(12);
  double map = 0.0, expected = 0.0;
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    Rng rng(100 + rep);
    const auto shuffled = shuffle_embeddings(pl.emb, rng);
    EvalOptions opt;
    opt.seed = rep;
    std::vector<RankingResult> rankings;
    map += evaluate(shuffled, pl.g, 1, opt, &rankings).map;
    expected += mean_random_ap(rankings);
  }
  EXPECT_NEAR(map / reps, expected / reps, 0.15 * expected / reps);
}

TEST(Evaluate, BitwiseRepeatable) {
  const Planted pl = planted(13);
  EvalOptions opt;
  opt.seed = 4;
  const Metrics a = evaluate(pl.emb, pl.g, 1, opt);
  const Metrics b = evaluate(pl.emb, pl.g, 1, opt);
  EXPECT_EQ(a.map, b.map);
  EXPECT_EQ(a.mrr, b.mrr);
  EXPECT_EQ(a.queries, b.queries);
}

TEST(Evaluate, RequiresSplitAndMatchingTimestamps) {
  Planted pl = planted(14);
  auto short_emb = pl.emb;
  short_emb.pop_back();
  EXPECT_EQ(kind_of([&] { evaluate(short_emb, pl.g, 1, {}); }), ErrorKind::kDimension);
  pl.g.train_end = pl.g.val_end = 0;
  EXPECT_EQ(kind_of([&] { evaluate(pl.emb, pl.g, 1, {}); }), ErrorKind::kData);
}

}  // namespace
}  // namespace dgm
