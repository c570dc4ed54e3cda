#pragma once

// Gaussian node-embedding models, the triplet KL objective and training.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dgm/graph.hpp"
#include "dgm/graph_layers.hpp"
#include "dgm/nn.hpp"
#include "dgm/seq_encoder.hpp"
#include "dgm/ssm.hpp"
#include "dgm/tensor.hpp"

namespace dgm {

enum class ModelKind { kStTransformerG2G, kDgMamba, kGdgMamba };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(std::string_view name);

struct ModelConfig {
  ModelKind kind = ModelKind::kDgMamba;
  std::size_t n = 0;              // node universe (input feature width)
  std::size_t d = 256;            // GCN / encoder width (transformer)
  std::size_t d_model = 64;       // Mamba width after the input projection
  std::size_t d_state = 16;
  std::size_t d_conv = 4;
  std::size_t expand = 2;
  std::size_t depth = 1;          // stacked Mamba blocks
  std::size_t intermediate = 64;  // width of the tanh layer before the heads
  std::size_t embed_dim = 64;     // L_o
  std::size_t lookback = 2;
  double lr = 1e-3;
  double weight_decay = 0.0;
  double dropout = 0.0;
  std::size_t epochs = 50;
  std::size_t patience = 10;
  std::uint64_t seed = 0;
  std::size_t k_near = 1;
  bool post_norm = true;
  std::size_t gine_hidden = 0;    // 0 means 2·d_model

  // Throws config_error naming the offending field.
  void validate() const;

  // Flat key=value view, one entry per field; inverse of apply_config_key.
  std::map<std::string, std::string> to_map() const;
};

// Sets one field from text. Returns false when `key` is not a model field.
bool apply_config_key(ModelConfig& cfg, const std::string& key, const std::string& value);

// Padded adjacency Ã_t as an n×n feature matrix (row u = features of u).
Tensor node_features(const TemporalGraph& g, std::size_t t);

// Row i of mu/sigma is node i's Gaussian N(mu_i, diag(sigma_i)).
struct GaussianEmbeddings {
  Tensor mu;     // n × L_o
  Tensor sigma;  // n × L_o, strictly positive
};

struct GaussianHeads {
  Linear mu;
  Linear sigma;
  double offset = 1.0;  // σ = elu(·) + offset

  GaussianHeads() = default;
  GaussianHeads(std::size_t in, std::size_t out, double offset, Rng& rng);

  GaussianEmbeddings forward(const Tensor& h) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

inline constexpr double kMambaSigmaOffset = 1.0 + 1e-14;
inline constexpr double kTransformerSigmaOffset = 1.0;

// KL(N(mu_i, diag σ_i) ‖ N(mu_j, diag σ_j)).
double kl_divergence(std::span<const double> mu_i, std::span<const double> sigma_i,
                     std::span<const double> mu_j, std::span<const double> sigma_j);
// Row-wise form over (K × L_o) operands, differentiable; returns (K).
Tensor kl_divergence(const Tensor& mu_i, const Tensor& sigma_i, const Tensor& mu_j,
                     const Tensor& sigma_j);

// Σ over triples of KL(ref‖near)² + exp(−KL(ref‖far)).
Tensor triplet_loss(const TripletSet& triplets, const GaussianEmbeddings& emb);

class EmbeddingModel {
 public:
  explicit EmbeddingModel(ModelConfig config) : config_(std::move(config)) {}
  virtual ~EmbeddingModel() = default;
  EmbeddingModel(const EmbeddingModel&) = delete;
  EmbeddingModel& operator=(const EmbeddingModel&) = delete;

  const ModelConfig& config() const { return config_; }

  // Embeddings of all n nodes at timestamp t from snapshots t-l..t.
  // A non-null `dropout_rng` selects training mode.
  virtual GaussianEmbeddings forward(const TemporalGraph& g, std::size_t t,
                                     Rng* dropout_rng = nullptr) const = 0;
  virtual ParameterList parameters() const = 0;

  // Per-node (l+1)×(l+1) temporal mixing matrices at t: hidden attention of
  // the first Mamba block, or encoder attention weights.
  virtual std::vector<Tensor> temporal_matrices(const TemporalGraph& g, std::size_t t) const = 0;

 protected:
  // Throws unless snapshots t-l..t exist and match the configured width.
  void check_window(const TemporalGraph& g, std::size_t t) const;
  // (n, l+1, n) stack of the window's feature matrices.
  Tensor window_features(const TemporalGraph& g, std::size_t t) const;

 private:
  ModelConfig config_;
};

class StTransformerG2G : public EmbeddingModel {
 public:
  StTransformerG2G(const ModelConfig& config, Rng& rng);

  GaussianEmbeddings forward(const TemporalGraph& g, std::size_t t,
                             Rng* dropout_rng = nullptr) const override;
  ParameterList parameters() const override;
  std::vector<Tensor> temporal_matrices(const TemporalGraph& g, std::size_t t) const override;

  std::vector<GCNLayer> gcn;
  EncoderBlock encoder;
  PointwiseTemporalConv combine;
  Linear hidden;
  GaussianHeads heads;

 private:
  GaussianEmbeddings run(const TemporalGraph& g, std::size_t t, Rng* dropout_rng,
                         Tensor* attention) const;
};

// DG-Mamba, and GDG-Mamba when constructed with kind kGdgMamba (a GINE layer
// refines each snapshot's projected features before the temporal model).
class MambaEmbedder : public EmbeddingModel {
 public:
  MambaEmbedder(const ModelConfig& config, Rng& rng);

  GaussianEmbeddings forward(const TemporalGraph& g, std::size_t t,
                             Rng* dropout_rng = nullptr) const override;
  ParameterList parameters() const override;
  std::vector<Tensor> temporal_matrices(const TemporalGraph& g, std::size_t t) const override;

  bool uses_gine() const { return config().kind == ModelKind::kGdgMamba; }
  // Input to the first Mamba block, (n, l+1, d_model).
  Tensor sequence_input(const TemporalGraph& g, std::size_t t) const;

  Linear input_proj;  // n -> d_model
  GINELayer gine;     // GDG-Mamba only
  std::vector<MambaBlock> blocks;
  Linear hidden;      // d_model -> intermediate
  GaussianHeads heads;
};

std::unique_ptr<EmbeddingModel> make_model(const ModelConfig& config);

struct TrainingHistory {
  std::vector<double> train_loss;  // mean over training timestamps, per epoch
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
  bool early_stopped = false;
};

// Adam on the triplet objective, one step per training timestamp, early
// stopping on validation loss; the best-validation weights are restored.
TrainingHistory train(EmbeddingModel& model, const TemporalGraph& g);

void write_history(const TrainingHistory& h, std::ostream& out);

// Embeddings for every timestamp t >= lookback (earlier entries are empty).
std::vector<GaussianEmbeddings> embed_all(const EmbeddingModel& model, const TemporalGraph& g);

void write_embeddings_csv(const GaussianEmbeddings& emb, std::ostream& out);

void save_checkpoint(const EmbeddingModel& model, std::ostream& out);
std::unique_ptr<EmbeddingModel> load_checkpoint(std::istream& in);

}  // namespace dgm
