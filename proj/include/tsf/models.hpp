#pragma once

#include "tsf/attention.hpp"
#include "tsf/index_memory.hpp"
#include "tsf/tensor.hpp"
#include "tsf/types.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace tsf {

enum class ModelKind { informer_lite, mlinear };
enum class MappingKind { sequence_mix, feature_mix };
enum class AttentionKind { sparse, full };
enum class RunMode { train, predict };

ModelKind model_kind_from_string(const std::string& name);
std::string to_string(ModelKind kind);
MappingKind mapping_kind_from_string(const std::string& name);
std::string to_string(MappingKind kind);

// Hyperparameters shared by both model families. channels doubles as the
// input and output width of the encoder/decoder model.
struct ModelConfig {
  ModelKind kind = ModelKind::mlinear;
  Index lookback = 48;   // L
  Index horizon = 24;    // S
  Index label_len = -1;  // decoder start tokens; -1 means L/2
  Index channels = 1;    // n
  Index d_model = 16;
  Index n_heads = 2;
  double u_factor = 5.0;
  double sample_factor = 5.0;
  Index p_factor = 8;  // d_k = max(1, S / P) for the mixing attention
  MappingKind mapping = MappingKind::sequence_mix;
  AttentionKind attention = AttentionKind::sparse;
  std::uint64_t seed = 1;

  Index resolved_label_len() const {
    return label_len < 0 ? std::max<Index>(Index{1}, lookback / 2) : label_len;
  }
  Index mix_d_k() const { return std::max<Index>(Index{1}, horizon / p_factor); }
  static constexpr Index mix_d_v = 2;
  void validate() const;
};

struct NamedParam {
  std::string name;
  Matrix* data;
};

// Channel-independent / channel-dependent linear forecaster with
// attention-modulated mixing and three supervised heads.
class MLinearModel {
 public:
  explicit MLinearModel(const ModelConfig& cfg);

  // Weight leaves bound into one graph; valid for that graph's lifetime.
  struct Bound {
    std::vector<Tensor> ci_w;  // n weights, each L x S
    Tensor cd_w;               // L x S, shared across channels
    Tensor w_q, w_k, w_v;      // mixing maps
    Tensor b_q, b_k, b_v;
    Tensor mix_w;              // 2S x S
    std::vector<Tensor> leaves;  // parameters() order
  };

  struct Heads {
    Tensor ci;
    Tensor cd;
    Tensor mix;
  };

  struct Forward {
    Heads heads;
    std::vector<Tensor> param_leaves;
  };

  Bound bind(Graph& g) const;

  // Column i of the output is ci_w[i]^T x[:, i]; channels never interact.
  Tensor ci_forward(const Bound& b, const Tensor& x) const;
  // One shared weight matrix across channels.
  Tensor cd_forward(const Bound& b, const Tensor& x) const;
  // concat -> efficient-attention gains -> modulate -> final linear.
  Tensor mix_forward(const Bound& b, const Tensor& x_ci, const Tensor& x_cd,
                     OpCounters& counters) const;

  // All three heads; training consumes all of them, evaluation reads mix only.
  Forward forward(Graph& g, const Matrix& x, OpCounters& counters) const;

  // Evaluation path: the mix head's value.
  Matrix forecast(const Matrix& x, OpCounters& counters) const;

  std::vector<NamedParam> parameters();
  std::vector<NamedParam> parameters() const;
  const ModelConfig& config() const { return cfg_; }

 private:
  Index rho_in_dim() const;

  ModelConfig cfg_;
  std::vector<Matrix> ci_weights_;
  Matrix cd_weight_;
  Matrix w_q_, w_k_, w_v_;
  Matrix b_q_, b_k_, b_v_;
  Matrix mix_weight_;
};

// Two encoder layers and one decoder layer around top-u sparse attention
// with index recording (train) or index reuse (predict). Cross-attention is
// dense. attention == AttentionKind::full swaps every self-attention site to
// the dense kernel, which serves as the oracle twin in tests.
class InformerLite {
 public:
  explicit InformerLite(const ModelConfig& cfg);

  struct Forward {
    Tensor output;  // S x channels
    std::vector<Tensor> param_leaves;
  };

  // Sites are (layer 0, layer 1) encoder self-attention and (layer 2)
  // decoder self-attention, each with n_heads heads.
  void register_sites(AttentionIndexMemory& memory) const;
  static constexpr int kEncoderLayers = 2;
  int attention_sites() const { return kEncoderLayers + 1; }

  // Train mode measures and selects per site, recording into `memory` when
  // provided (epoch/iteration tag the records and the sampling stream).
  // Predict mode requires a frozen memory covering every site and performs
  // no measurement.
  Forward forward(Graph& g, const Matrix& enc_in, const Matrix& dec_in,
                  RunMode mode, AttentionIndexMemory* memory, int epoch,
                  int iteration, OpCounters& counters) const;

  // Last label_len rows of the lookback plus zero placeholders.
  static Matrix make_decoder_input(const Matrix& lookback, Index label_len,
                                   Index horizon);

  // Predict-mode forecast from a lookback window.
  Matrix forecast(const Matrix& lookback, const AttentionIndexMemory& memory,
                  OpCounters& counters) const;

  std::vector<NamedParam> parameters();
  std::vector<NamedParam> parameters() const;
  const ModelConfig& config() const { return cfg_; }

 private:
  struct AttentionBlock {
    std::vector<Matrix> w_q, w_k, w_v;  // per head, d x d_h
    Matrix w_o;                         // d x d
  };
  struct FeedForward {
    Matrix w1;  // d x 4d
    Matrix w2;  // 4d x d
  };
  struct BoundAttn {
    std::vector<Tensor> q, k, v;
    Tensor o;
  };
  using BoundFfn = std::pair<Tensor, Tensor>;
  struct Bound {
    Tensor w_in;
    std::vector<BoundAttn> enc;
    std::vector<BoundFfn> enc_ffn;
    BoundAttn dec_self, dec_cross;
    BoundFfn dec_ffn;
    Tensor w_out;
    std::vector<Tensor> leaves;
  };

  Bound bind(Graph& g) const;

  ModelConfig cfg_;
  Matrix input_projection_;   // channels x d
  Matrix output_projection_;  // d x channels
  std::vector<AttentionBlock> encoder_attn_;  // 2
  std::vector<FeedForward> encoder_ffn_;      // 2
  AttentionBlock decoder_self_;
  AttentionBlock decoder_cross_;
  FeedForward decoder_ffn_;
  Matrix pe_encoder_;  // L x d, constant
  Matrix pe_decoder_;  // (label_len + S) x d, constant
};

// Sinusoidal table, rows = positions, cols = width.
Matrix positional_encoding(Index length, Index width);

}  // namespace tsf
