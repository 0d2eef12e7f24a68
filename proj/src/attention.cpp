#include "tsf/attention.hpp"

#include "tsf/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace tsf {

Index top_u_count(double u_factor, Index l_q) {
  require(u_factor > 0, "u_factor must be positive, got ", u_factor);
  require(l_q >= 1, "top_u_count: L_Q must be >= 1, got ", l_q);
  const Index raw = static_cast<Index>(std::ceil(u_factor * std::log(static_cast<double>(l_q))));
  return std::clamp<Index>(raw, 1, l_q);
}

Index sampled_key_count(double sample_factor, Index l_k) {
  require(sample_factor > 0, "sample_factor must be positive, got ", sample_factor);
  require(l_k >= 1, "sampled_key_count: L_K must be >= 1, got ", l_k);
  const Index raw = static_cast<Index>(std::ceil(sample_factor * std::log(static_cast<double>(l_k))));
  return std::clamp<Index>(raw, 1, l_k);
}

IndexList sample_key_indices(Index l_k, double sample_factor, std::uint64_t seed) {
  const Index take = sampled_key_count(sample_factor, l_k);
  IndexList pool(static_cast<std::size_t>(l_k));
  std::iota(pool.begin(), pool.end(), Index{0});
  SplitMix64 rng(seed);
  for (Index i = 0; i < take; ++i) {
    const Index j = i + static_cast<Index>(rng.next_below(static_cast<std::uint64_t>(l_k - i)));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
  }
  pool.resize(static_cast<std::size_t>(take));
  std::sort(pool.begin(), pool.end());
  return pool;
}

Vector sparsity_measure(const Matrix& q, const Matrix& k_sampled, OpCounters& counters) {
  require(k_sampled.rows() >= 1, "sparsity_measure: empty key sample");
  require(q.cols() == k_sampled.cols(), "sparsity_measure: width mismatch (",
          shape_str(q), " vs ", shape_str(k_sampled), ")");
  const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(q.cols()));
  const Index l_hat = k_sampled.rows();
  Vector scores(q.rows());
  for (Index i = 0; i < q.rows(); ++i) {
    Scalar best = -std::numeric_limits<Scalar>::infinity();
    Scalar total = 0;
    for (Index j = 0; j < l_hat; ++j) {
      const Scalar dot = q.row(i).dot(k_sampled.row(j)) * inv_sqrt_d;
      best = std::max(best, dot);
      total += dot;
    }
    scores(i) = best - total / static_cast<Scalar>(l_hat);
  }
  counters.add_measurement(static_cast<std::uint64_t>(q.rows()) *
                           static_cast<std::uint64_t>(l_hat) *
                           static_cast<std::uint64_t>(q.cols()));
  return scores;
}

IndexList top_u_select(const Vector& scores, Index u) {
  require(u >= 1 && u <= scores.size(), "top_u_select: u = ", u,
          " out of range [1, ", scores.size(), "]");
  IndexList order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (scores(a) != scores(b)) return scores(a) > scores(b);
    return a < b;  // ties to the lower index
  });
  order.resize(static_cast<std::size_t>(u));
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

// Scores, mask, softmax, mix — shared by the dense kernel and the active-row
// path of the sparse kernel so both produce identical arithmetic per row.
Tensor attention_rows(const Tensor& q_rows, const Tensor& k, const Tensor& v,
                      bool causal, const IndexList& row_positions) {
  const Scalar inv_sqrt_d = 1.0 / std::sqrt(static_cast<Scalar>(q_rows.cols()));
  Tensor scores = scale(matmul(q_rows, transpose(k)), inv_sqrt_d);
  if (causal) scores = causal_mask(scores, row_positions);
  return matmul(softmax(scores, /*axis=*/1), v);
}

}  // namespace

Tensor full_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                      bool causal, OpCounters& counters) {
  require(q.cols() == k.cols(), "full_attention: Q/K width mismatch (",
          shape_str(q.value()), " vs ", shape_str(k.value()), ")");
  require(k.rows() == v.rows(), "full_attention: K/V length mismatch (",
          shape_str(k.value()), " vs ", shape_str(v.value()), ")");
  require(!causal || q.rows() == k.rows(),
          "full_attention: causal mode needs L_Q == L_K, got ", q.rows(), " vs ",
          k.rows());
  const auto l_q = static_cast<std::uint64_t>(q.rows());
  const auto l_k = static_cast<std::uint64_t>(k.rows());
  counters.add_attention(l_q * l_k * static_cast<std::uint64_t>(q.cols()));
  counters.add_attention(l_q * l_k * static_cast<std::uint64_t>(v.cols()));
  return attention_rows(q, k, v, causal, {});
}

SparseAttentionResult prob_sparse_attention(const Tensor& q, const Tensor& k,
                                            const Tensor& v, const AttentionConfig& cfg,
                                            const std::optional<IndexList>& reuse_indices,
                                            OpCounters& counters) {
  require(q.cols() == k.cols(), "prob_sparse_attention: Q/K width mismatch (",
          shape_str(q.value()), " vs ", shape_str(k.value()), ")");
  require(k.rows() == v.rows(), "prob_sparse_attention: K/V length mismatch (",
          shape_str(k.value()), " vs ", shape_str(v.value()), ")");
  require(!cfg.causal || q.rows() == k.rows(),
          "prob_sparse_attention: causal mode needs L_Q == L_K, got ", q.rows(),
          " vs ", k.rows());
  const Index l_q = q.rows();
  const Index l_k = k.rows();

  IndexList active;
  if (reuse_indices.has_value()) {
    require(!reuse_indices->empty(), "prob_sparse_attention: empty reuse index set");
    std::vector<bool> seen(static_cast<std::size_t>(l_q), false);
    for (Index idx : *reuse_indices) {
      require(idx >= 0 && idx < l_q, "prob_sparse_attention: reuse index ", idx,
              " out of range [0, ", l_q, ")");
      require(!seen[static_cast<std::size_t>(idx)],
              "prob_sparse_attention: duplicate reuse index ", idx);
      seen[static_cast<std::size_t>(idx)] = true;
    }
    active = *reuse_indices;
  } else {
    const IndexList sampled = sample_key_indices(l_k, cfg.sample_factor, cfg.seed);
    Matrix k_sampled(static_cast<Index>(sampled.size()), k.cols());
    for (std::size_t r = 0; r < sampled.size(); ++r) {
      k_sampled.row(static_cast<Index>(r)) = k.value().row(sampled[r]);
    }
    const Vector scores = sparsity_measure(q.value(), k_sampled, counters);
    active = top_u_select(scores, top_u_count(cfg.u_factor, l_q));
  }

  const auto u = static_cast<std::uint64_t>(active.size());
  counters.add_attention(u * static_cast<std::uint64_t>(l_k) *
                         static_cast<std::uint64_t>(q.cols()));
  counters.add_attention(u * static_cast<std::uint64_t>(l_k) *
                         static_cast<std::uint64_t>(v.cols()));

  Tensor active_out = attention_rows(gather_rows(q, active), k, v, cfg.causal, active);
  Tensor defaults = cfg.causal ? cummean_rows(v) : colmean_rows(v, l_q);
  return {scatter_rows(active_out, active, defaults), std::move(active)};
}

Tensor efficient_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                           OpCounters& counters) {
  require(k.cols() == v.cols() && k.cols() == q.cols(),
          "efficient_attention: d mismatch (K ", shape_str(k.value()), ", V ",
          shape_str(v.value()), ", Q ", shape_str(q.value()), ")");
  require(q.rows() == k.rows(), "efficient_attention: needs d_q == d_k, got ",
          q.rows(), " vs ", k.rows());
  const auto d = static_cast<std::uint64_t>(k.cols());
  const auto d_k = static_cast<std::uint64_t>(k.rows());
  const auto d_v = static_cast<std::uint64_t>(v.rows());
  counters.add_attention(d_k * d * d_v);  // K_n V^T
  counters.add_attention(d_v * d_k * d);  // (K_n V^T)^T Q_n
  Tensor k_norm = softmax(k, /*axis=*/1);
  Tensor q_norm = softmax(q, /*axis=*/0);
  Tensor context = matmul(k_norm, transpose(v));        // d_k x d_v
  return matmul(transpose(context), q_norm);            // d_v x d
}

}  // namespace tsf
