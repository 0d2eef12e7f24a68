#pragma once

#include "tsf/tensor.hpp"
#include "tsf/types.hpp"

#include <cstdint>
#include <optional>

namespace tsf {

struct AttentionConfig {
  Index d = 0;                  // model / head width used for the 1/sqrt(d) scale
  double u_factor = 5.0;        // u = clamp(ceil(u_factor * ln L_Q), 1, L_Q)
  double sample_factor = 5.0;   // sampled keys = min(L_K, ceil(sample_factor * ln L_K))
  bool causal = false;
  std::uint64_t seed = 0;       // key-sampling stream
};

// Multiply counters for the attention paths. Only attention work is counted:
// the sparsity measurement, score dot products, value mixing and the
// efficient-attention contractions. Linear projections outside the kernels
// are not counted, so mode-to-mode deltas have exact closed forms.
struct OpCounters {
  std::uint64_t measurement_dot_products = 0;
  std::uint64_t attention_dot_products = 0;
  std::uint64_t multiplies_total = 0;

  void add_measurement(std::uint64_t n) {
    measurement_dot_products += n;
    multiplies_total += n;
  }
  void add_attention(std::uint64_t n) {
    attention_dot_products += n;
    multiplies_total += n;
  }
  void reset() { *this = OpCounters{}; }

  OpCounters& operator+=(const OpCounters& o) {
    measurement_dot_products += o.measurement_dot_products;
    attention_dot_products += o.attention_dot_products;
    multiplies_total += o.multiplies_total;
    return *this;
  }
};

// u = clamp(ceil(u_factor * ln L_Q), 1, L_Q).
Index top_u_count(double u_factor, Index l_q);

// Sampled key count, clamped to at least one key so the measurement is
// always defined (the raw formula yields zero for L_K = 1).
Index sampled_key_count(double sample_factor, Index l_k);

// Distinct key row indices, sorted ascending, drawn without replacement from
// [0, L_K) by a partial Fisher-Yates on the seeded stream.
IndexList sample_key_indices(Index l_k, double sample_factor, std::uint64_t seed);

// Per-query max-minus-mean of scaled dot products against the sampled keys.
// Always non-negative. Value-level on purpose: the measurement only steers
// the discrete selection and carries no gradient.
Vector sparsity_measure(const Matrix& q, const Matrix& k_sampled, OpCounters& counters);

// Indices of the u largest scores, ties to the lower index, returned ascending.
IndexList top_u_select(const Vector& scores, Index u);

// Softmax(Q K^T / sqrt(d)) V on the tape. Causal mode masks j > i and
// requires L_Q == L_K.
Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      bool causal, OpCounters& counters);

struct SparseAttentionResult {
  Tensor output;           // L_Q x d_v
  IndexList used_indices;  // ascending, length u
};

// Top-u sparse attention. Without reuse indices: sample keys per the config
// seed, measure, select u queries. With reuse indices: the measurement is
// skipped entirely. Active queries get exact attention rows over all keys;
// inactive rows are filled with the column mean of V (cumulative mean of
// V[0..i] in causal mode). Active rows are bit-identical to the matching
// full_attention rows.
SparseAttentionResult prob_sparse_attention(const Tensor& q, const Tensor& k,
                                            const Tensor& v, const AttentionConfig& cfg,
                                            const std::optional<IndexList>& reuse_indices,
                                            OpCounters& counters);

// Linear-complexity attention: softmax-normalize K along its d axis and Q
// along its d_q axis, then (K_n V^T)^T Q_n. Requires d_q == d_k; never forms
// a d x d score matrix, so counted multiplies are 2 * d_k * d_v * d.
Tensor efficient_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           OpCounters& counters);

}  // namespace tsf
