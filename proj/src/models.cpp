#include "dgm/models.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <limits>
#include <istream>
#include <ostream>
#include <sstream>

#include "dgm/error.hpp"
#include "dgm/format.hpp"
#include "dgm/ops.hpp"

namespace dgm {

namespace {

std::size_t parse_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || end != value.data() + value.size()) {
    throw config_error(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    return parse_double_exact(value);
  } catch (const Error&) {
    throw config_error(key + ": expected a number, got '" + value + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw config_error(key + ": expected true or false, got '" + value + "'");
}

Tensor ensure_positive(const Tensor& sigma, const char* what) {
  for (double v : sigma.data()) {
    if (!(v > 0.0)) throw contract_error(std::string("kl: non-positive variance in ") + what);
  }
  return sigma;
}

}  // namespace

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::kStTransformerG2G: return "st-transformerg2g";
    case ModelKind::kDgMamba: return "dg-mamba";
    case ModelKind::kGdgMamba: return "gdg-mamba";
  }
  return "?";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "st-transformerg2g") return ModelKind::kStTransformerG2G;
  if (name == "dg-mamba") return ModelKind::kDgMamba;
  if (name == "gdg-mamba") return ModelKind::kGdgMamba;
  throw config_error("model: unknown kind '" + std::string(name) +
                     "' (expected st-transformerg2g, dg-mamba or gdg-mamba)");
}

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw config_error(what);
  };
  require(n > 0, "n: must be positive");
  require(embed_dim > 0, "embed_dim: must be positive");
  require(lookback >= 1 && lookback <= 5, "lookback: must be in 1..5");
  require(intermediate > 0, "intermediate: must be positive");
  require(std::isfinite(lr) && lr > 0.0, "lr: must be positive");
  require(std::isfinite(weight_decay) && weight_decay >= 0.0, "weight_decay: must be >= 0");
  require(dropout >= 0.0 && dropout < 1.0, "dropout: must be in [0, 1)");
  require(epochs >= 1, "epochs: must be >= 1");
  require(patience >= 1, "patience: must be >= 1");
  require(k_near >= 1, "k_near: must be >= 1");
  if (kind == ModelKind::kStTransformerG2G) {
    require(d > 0 && d % 2 == 0, "d: must be positive and even");
  } else {
    require(d_model > 0, "d_model: must be positive");
    require(d_state > 0, "d_state: must be positive");
    require(d_conv >= 1, "d_conv: must be >= 1");
    require(expand >= 1, "expand: must be >= 1");
    require(depth >= 1, "depth: must be >= 1");
  }
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  return {
      {"model", to_string(kind)},
      {"n", std::to_string(n)},
      {"d", std::to_string(d)},
      {"d_model", std::to_string(d_model)},
      {"d_state", std::to_string(d_state)},
      {"d_conv", std::to_string(d_conv)},
      {"expand", std::to_string(expand)},
      {"depth", std::to_string(depth)},
      {"intermediate", std::to_string(intermediate)},
      {"embed_dim", std::to_string(embed_dim)},
      {"lookback", std::to_string(lookback)},
      {"lr", format_double(lr)},
      {"weight_decay", format_double(weight_decay)},
      {"dropout", format_double(dropout)},
      {"epochs", std::to_string(epochs)},
      {"patience", std::to_string(patience)},
      {"seed", std::to_string(seed)},
      {"k_near", std::to_string(k_near)},
      {"post_norm", post_norm ? "true" : "false"},
      {"gine_hidden", std::to_string(gine_hidden)},
  };
}

bool apply_config_key(ModelConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "model") cfg.kind = parse_model_kind(value);
  else if (key == "n") cfg.n = parse_size(key, value);
  else if (key == "d") cfg.d = parse_size(key, value);
  else if (key == "d_model") cfg.d_model = parse_size(key, value);
  else if (key == "d_state") cfg.d_state = parse_size(key, value);
  else if (key == "d_conv") cfg.d_conv = parse_size(key, value);
  else if (key == "expand") cfg.expand = parse_size(key, value);
  else if (key == "depth") cfg.depth = parse_size(key, value);
  else if (key == "intermediate") cfg.intermediate = parse_size(key, value);
  else if (key == "embed_dim") cfg.embed_dim = parse_size(key, value);
  else if (key == "lookback") cfg.lookback = parse_size(key, value);
  else if (key == "lr") cfg.lr = parse_real(key, value);
  else if (key == "weight_decay") cfg.weight_decay = parse_real(key, value);
  else if (key == "dropout") cfg.dropout = parse_real(key, value);
  else if (key == "epochs") cfg.epochs = parse_size(key, value);
  else if (key == "patience") cfg.patience = parse_size(key, value);
  else if (key == "seed") cfg.seed = parse_size(key, value);
  else if (key == "k_near") cfg.k_near = parse_size(key, value);
  else if (key == "post_norm") cfg.post_norm = parse_bool(key, value);
  else if (key == "gine_hidden") cfg.gine_hidden = parse_size(key, value);
  else return false;
  return true;
}

Tensor node_features(const TemporalGraph& g, std::size_t t) {
  if (t >= g.num_timestamps()) {
    throw contract_error("node_features: timestamp " + std::to_string(t) + " out of range");
  }
  auto adj = pad_adjacency(g.snapshots[t], g.n, g.directed);
  return Tensor::from({g.n, g.n}, std::move(adj.values));
}

GaussianHeads::GaussianHeads(std::size_t in, std::size_t out, double offset_, Rng& rng)
    : mu(in, out, rng), sigma(in, out, rng), offset(offset_) {}

GaussianEmbeddings GaussianHeads::forward(const Tensor& h) const {
  return {mu.forward(h), add_scalar(elu(sigma.forward(h)), offset)};
}

void GaussianHeads::collect(ParameterList& out, const std::string& prefix) const {
  mu.collect(out, prefix + ".mu");
  sigma.collect(out, prefix + ".sigma");
}

double kl_divergence(std::span<const double> mu_i, std::span<const double> sigma_i,
                     std::span<const double> mu_j, std::span<const double> sigma_j) {
  const std::size_t len = mu_i.size();
  if (sigma_i.size() != len || mu_j.size() != len || sigma_j.size() != len) {
    throw dimension_error("kl: operand lengths differ");
  }
  double trace = 0.0, quad = 0.0, logs = 0.0;
  for (std::size_t k = 0; k < len; ++k) {
    if (!(sigma_i[k] > 0.0) || !(sigma_j[k] > 0.0)) {
      throw contract_error("kl: non-positive variance at component " + std::to_string(k));
    }
    const double diff = mu_j[k] - mu_i[k];
    trace += sigma_i[k] / sigma_j[k];
    quad += diff * diff / sigma_j[k];
    logs += std::log(sigma_j[k]) - std::log(sigma_i[k]);
  }
  return 0.5 * (trace + quad - static_cast<double>(len) + logs);
}

Tensor kl_divergence(const Tensor& mu_i, const Tensor& sigma_i, const Tensor& mu_j,
                     const Tensor& sigma_j) {
  if (mu_i.rank() != 2 || mu_i.shape() != sigma_i.shape() || mu_i.shape() != mu_j.shape() ||
      mu_i.shape() != sigma_j.shape()) {
    throw dimension_error("kl: expected equal (K, L) operands, got " + shape_str(mu_i.shape()) +
                          " and " + shape_str(mu_j.shape()));
  }
  ensure_positive(sigma_i, "first argument");
  ensure_positive(sigma_j, "second argument");
  const double len = static_cast<double>(mu_i.dim(1));
  const Tensor trace = sum(div(sigma_i, sigma_j), 1);
  const Tensor quad = sum(div(square(sub(mu_j, mu_i)), sigma_j), 1);
  const Tensor logs = sum(sub(log(sigma_j), log(sigma_i)), 1);
  return scale(add_scalar(add(add(trace, quad), logs), -len), 0.5);
}

Tensor triplet_loss(const TripletSet& triplets, const GaussianEmbeddings& emb) {
  if (triplets.triples.empty()) return Tensor::scalar(0.0);
  const std::size_t rows = emb.mu.dim(0);
  std::vector<std::size_t> ref, near, far;
  for (const auto& tr : triplets.triples) {
    if (tr.ref >= rows || tr.near >= rows || tr.far >= rows) {
      throw contract_error("triplet_loss: node without embedding in triple (" +
                           std::to_string(tr.ref) + ", " + std::to_string(tr.near) + ", " +
                           std::to_string(tr.far) + ")");
    }
    ref.push_back(tr.ref);
    near.push_back(tr.near);
    far.push_back(tr.far);
  }
  const Tensor mu_r = index_rows(emb.mu, ref), sig_r = index_rows(emb.sigma, ref);
  const Tensor kl_near = kl_divergence(mu_r, sig_r, index_rows(emb.mu, near),
                                       index_rows(emb.sigma, near));
  const Tensor kl_far = kl_divergence(mu_r, sig_r, index_rows(emb.mu, far),
                                      index_rows(emb.sigma, far));
  return add(sum(square(kl_near)), sum(exp(neg(kl_far))));
}

void EmbeddingModel::check_window(const TemporalGraph& g, std::size_t t) const {
  if (g.n != config_.n) {
    throw dimension_error("model expects " + std::to_string(config_.n) +
                          " nodes, graph has " + std::to_string(g.n));
  }
  if (t < config_.lookback) {
    throw contract_error("timestamp " + std::to_string(t) + " precedes lookback " +
                         std::to_string(config_.lookback));
  }
  if (t >= g.num_timestamps()) {
    throw contract_error("timestamp " + std::to_string(t) + " out of range");
  }
}

Tensor EmbeddingModel::window_features(const TemporalGraph& g, std::size_t t) const {
  std::vector<Tensor> parts;
  for (std::size_t s = t - config_.lookback; s <= t; ++s) parts.push_back(node_features(g, s));
  return stack(parts, 1);
}

StTransformerG2G::StTransformerG2G(const ModelConfig& cfg, Rng& rng) : EmbeddingModel(cfg) {
  cfg.validate();
  gcn.emplace_back(cfg.n, cfg.d, cfg.dropout, rng);
  gcn.emplace_back(cfg.d, cfg.d, cfg.dropout, rng);
  gcn.emplace_back(cfg.d, cfg.d, cfg.dropout, rng);
  encoder = EncoderBlock(cfg.d, rng, cfg.post_norm);
  combine = PointwiseTemporalConv(cfg.lookback + 1, rng);
  hidden = Linear(cfg.d, cfg.intermediate, rng);
  heads = GaussianHeads(cfg.intermediate, cfg.embed_dim, kTransformerSigmaOffset, rng);
}

GaussianEmbeddings StTransformerG2G::run(const TemporalGraph& g, std::size_t t, Rng* dropout_rng,
                                         Tensor* attention) const {
  check_window(g, t);
  const ModelConfig& cfg = config();
  const std::size_t len = cfg.lookback + 1;
  std::vector<Tensor> per_snapshot;
  for (std::size_t s = t - cfg.lookback; s <= t; ++s) {
    const Tensor a_hat = gcn_normalized_adjacency(pad_adjacency(g.snapshots[s], g.n, g.directed));
    Tensor h = node_features(g, s);
    for (const auto& layer : gcn) h = layer.forward(h, a_hat, dropout_rng);
    per_snapshot.push_back(h);
  }
  // (n, L, d) plus the positional encoding, broadcast over nodes.
  const Tensor seq = stack(per_snapshot, 1);
  const Tensor pe = reshape(positional_encoding(len, cfg.d), {len * cfg.d});
  const Tensor encoded_in =
      reshape(add(reshape(seq, {g.n, len * cfg.d}), pe), {g.n, len, cfg.d});
  const Tensor encoded = encoder_forward(encoder, encoded_in, attention);
  const Tensor h = tanh(hidden.forward(pointwise_combine(combine, encoded)));
  return heads.forward(h);
}

GaussianEmbeddings StTransformerG2G::forward(const TemporalGraph& g, std::size_t t,
                                             Rng* dropout_rng) const {
  return run(g, t, dropout_rng, nullptr);
}

ParameterList StTransformerG2G::parameters() const {
  ParameterList out;
  for (std::size_t i = 0; i < gcn.size(); ++i) gcn[i].collect(out, "gcn" + std::to_string(i));
  encoder.collect(out, "encoder");
  combine.collect(out, "combine");
  hidden.collect(out, "hidden");
  heads.collect(out, "heads");
  return out;
}

std::vector<Tensor> StTransformerG2G::temporal_matrices(const TemporalGraph& g,
                                                        std::size_t t) const {
  NoGradGuard no_grad;
  Tensor weights;
  run(g, t, nullptr, &weights);
  const std::size_t len = weights.dim(1);
  std::vector<Tensor> out;
  auto v = weights.data();
  for (std::size_t i = 0; i < weights.dim(0); ++i) {
    out.push_back(Tensor::from({len, len}, std::vector<double>(v.begin() + i * len * len,
                                                               v.begin() + (i + 1) * len * len)));
  }
  return out;
}

MambaEmbedder::MambaEmbedder(const ModelConfig& cfg, Rng& rng) : EmbeddingModel(cfg) {
  cfg.validate();
  if (cfg.kind == ModelKind::kStTransformerG2G) {
    throw config_error("model: MambaEmbedder needs dg-mamba or gdg-mamba");
  }
  input_proj = Linear(cfg.n, cfg.d_model, rng);
  if (uses_gine()) {
    const std::size_t width = cfg.gine_hidden ? cfg.gine_hidden : 2 * cfg.d_model;
    gine = GINELayer(cfg.d_model, width, 1, rng);
  }
  const MambaConfig mc{cfg.d_model, cfg.d_state, cfg.d_conv, cfg.expand};
  for (std::size_t i = 0; i < cfg.depth; ++i) blocks.emplace_back(mc, rng);
  hidden = Linear(cfg.d_model, cfg.intermediate, rng);
  heads = GaussianHeads(cfg.intermediate, cfg.embed_dim, kMambaSigmaOffset, rng);
}

Tensor MambaEmbedder::sequence_input(const TemporalGraph& g, std::size_t t) const {
  check_window(g, t);
  if (!uses_gine()) return input_proj.forward(window_features(g, t));
  std::vector<Tensor> parts;
  for (std::size_t s = t - config().lookback; s <= t; ++s) {
    const Tensor x = input_proj.forward(node_features(g, s));
    parts.push_back(gine.forward(x, gine_edges(g.snapshots[s], g.directed)));
  }
  return stack(parts, 1);
}

GaussianEmbeddings MambaEmbedder::forward(const TemporalGraph& g, std::size_t t,
                                          Rng* dropout_rng) const {
  Tensor e = sequence_input(g, t);
  for (const auto& block : blocks) e = block.forward(e);
  Tensor x = tanh(hidden.forward(reduce_mean(e, 1)));
  if (dropout_rng) x = dropout(x, config().dropout, *dropout_rng);
  return heads.forward(elu(x));
}

ParameterList MambaEmbedder::parameters() const {
  ParameterList out;
  input_proj.collect(out, "input_proj");
  if (uses_gine()) gine.collect(out, "gine");
  for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].collect(out, "mamba" + std::to_string(i));
  hidden.collect(out, "hidden");
  heads.collect(out, "heads");
  return out;
}

std::vector<Tensor> MambaEmbedder::temporal_matrices(const TemporalGraph& g, std::size_t t) const {
  NoGradGuard no_grad;
  return hidden_attention(blocks.front(), sequence_input(g, t));
}

std::unique_ptr<EmbeddingModel> make_model(const ModelConfig& config) {
  config.validate();
  Rng rng(derive_seed(config.seed, 0));
  if (config.kind == ModelKind::kStTransformerG2G) {
    return std::make_unique<StTransformerG2G>(config, rng);
  }
  return std::make_unique<MambaEmbedder>(config, rng);
}

namespace {

double mean_loss(const EmbeddingModel& model, const TemporalGraph& g,
                 const std::vector<TripletSet>& sets) {
  NoGradGuard no_grad;
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& set : sets) {
    if (set.triples.empty()) continue;
    total += triplet_loss(set, model.forward(g, set.t)).item();
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainingHistory train(EmbeddingModel& model, const TemporalGraph& g) {
  const ModelConfig& cfg = model.config();
  cfg.validate();
  if (!g.has_split()) throw data_error("train: graph has no train/validation/test split");
  if (g.train_end <= cfg.lookback) {
    throw data_error("train: no training timestamp at or after lookback " +
                     std::to_string(cfg.lookback) + " (train_end " +
                     std::to_string(g.train_end) + ")");
  }
  const ParameterList params = model.parameters();
  Adam adam(params, cfg.lr, cfg.weight_decay);

  // Validation triples are drawn once; training triples are redrawn each epoch.
  std::vector<TripletSet> val_sets;
  {
    Rng rng(derive_seed(cfg.seed, 1));
    for (std::size_t t = std::max(g.train_end, cfg.lookback); t < g.val_end; ++t) {
      TripletSet set = sample_triplets(g.snapshots[t], g.n, cfg.k_near, rng);
      set.t = t;
      val_sets.push_back(std::move(set));
    }
  }
  const bool has_validation = std::any_of(val_sets.begin(), val_sets.end(),
                                          [](const TripletSet& s) { return !s.triples.empty(); });

  TrainingHistory history;
  double best = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> best_values = save_values(params);
  std::size_t since_best = 0;
  Rng dropout_rng(derive_seed(cfg.seed, 2));
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng triplet_rng(derive_seed(cfg.seed, 1000 + epoch));
    double total = 0.0;
    std::size_t steps = 0;
    for (std::size_t t = cfg.lookback; t < g.train_end; ++t) {
      TripletSet set = sample_triplets(g.snapshots[t], g.n, cfg.k_near, triplet_rng);
      set.t = t;
      if (set.triples.empty()) continue;
      adam.zero_grad();
      const std::string where = "epoch " + std::to_string(epoch) + ", timestamp " + std::to_string(t);
      Tensor loss;
      try {
        loss = triplet_loss(set, model.forward(g, t, &dropout_rng));
      } catch (const Error& e) {
        // Inputs were validated up front; a contract failure here means the
        // weights have degenerated (e.g. a collapsed variance).
        if (e.kind() != ErrorKind::kContract) throw;
        throw training_error("diverged at " + where + ": " + e.what());
      }
      const double value = loss.item();
      if (!std::isfinite(value)) throw training_error("non-finite loss at " + where);
      backward(loss);
      adam.step();
      total += value;
      ++steps;
    }
    if (steps == 0) throw data_error("train: no training timestamp yields a triple");
    const double train_loss = total / static_cast<double>(steps);
    double val_loss = train_loss;
    if (has_validation) {
      try {
        val_loss = mean_loss(model, g, val_sets);
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::kContract) throw;
        throw training_error("diverged in validation at epoch " + std::to_string(epoch) + ": " +
                             e.what());
      }
    }
    if (!std::isfinite(val_loss)) {
      throw training_error("non-finite validation loss at epoch " + std::to_string(epoch));
    }
    history.train_loss.push_back(train_loss);
    history.val_loss.push_back(val_loss);
    history.epochs_run = epoch + 1;
    if (val_loss < best) {
      best = val_loss;
      history.best_epoch = epoch;
      best_values = save_values(params);
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      history.early_stopped = true;
      break;
    }
  }
  load_values(params, best_values);
  return history;
}

void write_history(const TrainingHistory& h, std::ostream& out) {
  out << "# best_epoch=" << h.best_epoch << " epochs_run=" << h.epochs_run
      << " early_stopped=" << (h.early_stopped ? "true" : "false") << '\n';
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
    out << e << ',' << format_double(h.train_loss[e]) << ',' << format_double(h.val_loss[e])
        << '\n';
  }
}

std::vector<GaussianEmbeddings> embed_all(const EmbeddingModel& model, const TemporalGraph& g) {
  NoGradGuard no_grad;
  std::vector<GaussianEmbeddings> out(g.num_timestamps());
  for (std::size_t t = model.config().lookback; t < g.num_timestamps(); ++t) {
    out[t] = model.forward(g, t);
  }
  return out;
}

void write_embeddings_csv(const GaussianEmbeddings& emb, std::ostream& out) {
  const std::size_t n = emb.mu.dim(0), len = emb.mu.dim(1);
  out << "node_id";
  for (std::size_t k = 0; k < len; ++k) out << ",mu_" << k;
  for (std::size_t k = 0; k < len; ++k) out << ",sigma_" << k;
  out << '\n';
  auto mu = emb.mu.data();
  auto sigma = emb.sigma.data();
  for (std::size_t i = 0; i < n; ++i) {
    out << i;
    for (std::size_t k = 0; k < len; ++k) out << ',' << format_double(mu[i * len + k]);
    for (std::size_t k = 0; k < len; ++k) out << ',' << format_double(sigma[i * len + k]);
    out << '\n';
  }
}

namespace {

constexpr char kMagic[8] = {'D', 'G', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_string(std::ostream& out, const std::string& s) {
  put<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw data_error("checkpoint: truncated file");
  return value;
}

std::string get_string(std::istream& in, std::size_t limit = 1 << 20) {
  const auto len = get<std::uint64_t>(in);
  if (len > limit) throw data_error("checkpoint: corrupt string length");
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw data_error("checkpoint: truncated file");
  return s;
}

}  // namespace

void save_checkpoint(const EmbeddingModel& model, std::ostream& out) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  std::string cfg_text;
  for (const auto& [k, v] : model.config().to_map()) cfg_text += k + "=" + v + "\n";
  put_string(out, cfg_text);
  const ParameterList params = model.parameters();
  put<std::uint64_t>(out, params.size());
  for (const auto& p : params) {
    put_string(out, p.name);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) put<std::uint64_t>(out, d);
    auto data = p.value.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) throw io_error("checkpoint: write failed");
}

std::unique_ptr<EmbeddingModel> load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw data_error("checkpoint: not a model checkpoint");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw data_error("checkpoint: unsupported version " + std::to_string(version));
  }
  ModelConfig cfg;
  std::istringstream text(get_string(in));
  std::string line;
  while (std::getline(text, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos || !apply_config_key(cfg, line.substr(0, eq), line.substr(eq + 1))) {
      throw data_error("checkpoint: bad config entry '" + line + "'");
    }
  }
  auto model = make_model(cfg);
  const ParameterList params = model->parameters();
  const auto count = get<std::uint64_t>(in);
  if (count != params.size()) {
    throw data_error("checkpoint: " + std::to_string(count) + " tensors, model has " +
                     std::to_string(params.size()));
  }
  for (const auto& p : params) {
    const std::string name = get_string(in);
    if (name != p.name) throw data_error("checkpoint: expected tensor " + p.name + ", found " + name);
    const auto rank = get<std::uint32_t>(in);
    Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    if (shape != p.value.shape()) {
      throw data_error("checkpoint: tensor " + name + " has shape " + shape_str(shape) +
                       ", expected " + shape_str(p.value.shape()));
    }
    Tensor value = p.value;
    auto data = value.mutable_data();
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw data_error("checkpoint: truncated file");
  }
  return model;
}

}  // namespace dgm
