#include "tsf/models.hpp"

#include "tsf/rng.hpp"

#include <cmath>
#include <utility>

namespace tsf {

namespace {

Matrix init_uniform(Index rows, Index cols, Index fan_in, std::uint64_t seed) {
  const Scalar bound = 1.0 / std::sqrt(static_cast<Scalar>(fan_in));
  SplitMix64 rng(seed);
  Matrix m(rows, cols);
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = rng.next_uniform(-bound, bound);
  }
  return m;
}

std::uint64_t site_tag(int layer_id, int head_id) {
  return static_cast<std::uint64_t>(layer_id) * 1024u +
         static_cast<std::uint64_t>(head_id) + 1u;
}

}  // namespace

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "informer_lite") return ModelKind::informer_lite;
  if (name == "mlinear") return ModelKind::mlinear;
  fail("unknown model kind '", name, "' (expected informer_lite|mlinear)");
}

std::string to_string(ModelKind kind) {
  return kind == ModelKind::informer_lite ? "informer_lite" : "mlinear";
}

MappingKind mapping_kind_from_string(const std::string& name) {
  if (name == "sequence_mix") return MappingKind::sequence_mix;
  if (name == "feature_mix") return MappingKind::feature_mix;
  fail("unknown mapping kind '", name, "' (expected sequence_mix|feature_mix)");
}

std::string to_string(MappingKind kind) {
  return kind == MappingKind::sequence_mix ? "sequence_mix" : "feature_mix";
}

void ModelConfig::validate() const {
  require(lookback >= 1, "model config: lookback must be >= 1, got ", lookback);
  require(horizon >= 1, "model config: horizon must be >= 1, got ", horizon);
  require(channels >= 1, "model config: channels must be >= 1, got ", channels);
  require(d_model >= 1 && n_heads >= 1, "model config: d_model and n_heads must be >= 1");
  require(d_model % n_heads == 0, "model config: d_model=", d_model,
          " not divisible by n_heads=", n_heads);
  require(u_factor > 0 && sample_factor > 0,
          "model config: u_factor and sample_factor must be positive");
  require(p_factor >= 1, "model config: p_factor must be >= 1, got ", p_factor);
  const Index label = resolved_label_len();
  require(label >= 1 && label <= lookback, "model config: label_len=", label,
          " outside [1, lookback=", lookback, "]");
}

Matrix positional_encoding(Index length, Index width) {
  Matrix pe(length, width);
  for (Index pos = 0; pos < length; ++pos) {
    for (Index i = 0; i < width; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(width);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      pe(pos, i) = (i % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return pe;
}

// ---------------------------------------------------------------------------
// MLinearModel

MLinearModel::MLinearModel(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.label_len < 0) cfg_.label_len = std::max<Index>(Index{1}, cfg_.lookback / 2);
  const Index l = cfg_.lookback;
  const Index s = cfg_.horizon;
  const Index in_dim = rho_in_dim();
  const Index d_k = cfg_.mix_d_k();
  std::uint64_t p = 0;
  auto next_seed = [&]() { return derive_seed(cfg_.seed, 0xA1u, ++p); };
  for (Index c = 0; c < cfg_.channels; ++c) {
    ci_weights_.push_back(init_uniform(l, s, l, next_seed()));
  }
  cd_weight_ = init_uniform(l, s, l, next_seed());
  w_q_ = init_uniform(d_k, in_dim, in_dim, next_seed());
  w_k_ = init_uniform(d_k, in_dim, in_dim, next_seed());
  w_v_ = init_uniform(ModelConfig::mix_d_v, in_dim, in_dim, next_seed());
  b_q_ = Matrix::Zero(d_k, 1);
  b_k_ = Matrix::Zero(d_k, 1);
  b_v_ = Matrix::Zero(ModelConfig::mix_d_v, 1);
  mix_weight_ = init_uniform(2 * s, s, 2 * s, next_seed());
}

Index MLinearModel::rho_in_dim() const {
  return cfg_.mapping == MappingKind::sequence_mix ? 2 * cfg_.horizon
                                                   : cfg_.channels;
}

std::vector<NamedParam> MLinearModel::parameters() {
  std::vector<NamedParam> params;
  for (Index c = 0; c < cfg_.channels; ++c) {
    params.push_back({strcat("ci_w", c), &ci_weights_[static_cast<std::size_t>(c)]});
  }
  params.push_back({"cd_w", &cd_weight_});
  params.push_back({"w_q", &w_q_});
  params.push_back({"w_k", &w_k_});
  params.push_back({"w_v", &w_v_});
  params.push_back({"b_q", &b_q_});
  params.push_back({"b_k", &b_k_});
  params.push_back({"b_v", &b_v_});
  params.push_back({"mix_w", &mix_weight_});
  return params;
}

std::vector<NamedParam> MLinearModel::parameters() const {
  return const_cast<MLinearModel*>(this)->parameters();
}

MLinearModel::Bound MLinearModel::bind(Graph& g) const {
  Bound b;
  auto take = [&](const Matrix& m) {
    Tensor t = g.leaf(m, /*requires_grad=*/true);
    b.leaves.push_back(t);
    return t;
  };
  // Same order as parameters().
  for (const Matrix& w : ci_weights_) b.ci_w.push_back(take(w));
  b.cd_w = take(cd_weight_);
  b.w_q = take(w_q_);
  b.w_k = take(w_k_);
  b.w_v = take(w_v_);
  b.b_q = take(b_q_);
  b.b_k = take(b_k_);
  b.b_v = take(b_v_);
  b.mix_w = take(mix_weight_);
  return b;
}

Tensor MLinearModel::ci_forward(const Bound& b, const Tensor& x) const {
  require(x.cols() == cfg_.channels, "ci_forward: input has ", x.cols(),
          " channels, model is configured for ", cfg_.channels);
  require(x.rows() == cfg_.lookback, "ci_forward: input has ", x.rows(),
          " rows, expected lookback ", cfg_.lookback);
  Tensor xt = transpose(x);  // n x L
  Tensor out;
  for (Index c = 0; c < cfg_.channels; ++c) {
    Tensor column = transpose(gather_rows(xt, {c}));  // L x 1
    Tensor head = matmul(transpose(b.ci_w[static_cast<std::size_t>(c)]), column);
    out = (c == 0) ? head : concat(out, head, /*axis=*/1);
  }
  return out;
}

Tensor MLinearModel::cd_forward(const Bound& b, const Tensor& x) const {
  require(x.rows() == cfg_.lookback, "cd_forward: input has ", x.rows(),
          " rows, expected lookback ", cfg_.lookback);
  return matmul(transpose(b.cd_w), x);
}

Tensor MLinearModel::mix_forward(const Bound& b, const Tensor& x_ci,
                                 const Tensor& x_cd, OpCounters& counters) const {
  require(x_ci.rows() == x_cd.rows() && x_ci.cols() == x_cd.cols(),
          "mix_forward: head shapes differ (", shape_str(x_ci.value()), " vs ",
          shape_str(x_cd.value()), ")");
  require(x_ci.rows() == cfg_.horizon, "mix_forward: heads have ", x_ci.rows(),
          " rows, expected horizon ", cfg_.horizon);
  const Index s = cfg_.horizon;
  Tensor z = concat(x_ci, x_cd, /*axis=*/0);  // 2S x n

  // Gains come from efficient attention over the rho mappings of Z. The two
  // value rows map to the CI and CD halves; the gain column follows the axis
  // the mapping preserves (channels for sequence_mix, positions otherwise).
  Tensor z_mod;
  if (cfg_.mapping == MappingKind::sequence_mix) {
    Tensor q = add_colvec(matmul(b.w_q, z), b.b_q);
    Tensor k = add_colvec(matmul(b.w_k, z), b.b_k);
    Tensor v = add_colvec(matmul(b.w_v, z), b.b_v);
    Tensor context = efficient_attention(q, k, v, counters);  // 2 x n
    IndexList half_ids(static_cast<std::size_t>(2 * s), Index{0});
    for (Index r = s; r < 2 * s; ++r) half_ids[static_cast<std::size_t>(r)] = 1;
    z_mod = mul(z, gather_rows(context, half_ids));
  } else {
    Tensor zt = transpose(z);  // n x 2S
    Tensor q = add_colvec(matmul(b.w_q, zt), b.b_q);
    Tensor k = add_colvec(matmul(b.w_k, zt), b.b_k);
    Tensor v = add_colvec(matmul(b.w_v, zt), b.b_v);
    Tensor context = efficient_attention(q, k, v, counters);  // 2 x 2S
    Tensor ci_gain = transpose(gather_rows(context, {0}));    // 2S x 1
    Tensor cd_gain = transpose(gather_rows(context, {1}));
    IndexList top(static_cast<std::size_t>(s));
    IndexList bottom(static_cast<std::size_t>(s));
    for (Index r = 0; r < s; ++r) {
      top[static_cast<std::size_t>(r)] = r;
      bottom[static_cast<std::size_t>(r)] = s + r;
    }
    Tensor gain = concat(gather_rows(ci_gain, top), gather_rows(cd_gain, bottom),
                         /*axis=*/0);  // 2S x 1
    z_mod = mul_colvec(z, gain);
  }
  return matmul(transpose(b.mix_w), z_mod);  // S x n
}

MLinearModel::Forward MLinearModel::forward(Graph& g, const Matrix& x,
                                            OpCounters& counters) const {
  Bound b = bind(g);
  Tensor input = g.leaf(x, /*requires_grad=*/false);
  Forward fwd;
  fwd.heads.ci = ci_forward(b, input);
  fwd.heads.cd = cd_forward(b, input);
  fwd.heads.mix = mix_forward(b, fwd.heads.ci, fwd.heads.cd, counters);
  fwd.param_leaves = std::move(b.leaves);
  return fwd;
}

Matrix MLinearModel::forecast(const Matrix& x, OpCounters& counters) const {
  Graph g;
  return forward(g, x, counters).heads.mix.value();
}

// ---------------------------------------------------------------------------
// InformerLite

InformerLite::InformerLite(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.label_len < 0) cfg_.label_len = std::max<Index>(Index{1}, cfg_.lookback / 2);
  const Index n = cfg_.channels;
  const Index d = cfg_.d_model;
  const Index dh = d / cfg_.n_heads;
  const Index hidden = 4 * d;
  std::uint64_t p = 0;
  auto next_seed = [&]() { return derive_seed(cfg_.seed, 0x1F0u, ++p); };
  auto make_attn = [&]() {
    AttentionBlock blk;
    for (Index h = 0; h < cfg_.n_heads; ++h) {
      blk.w_q.push_back(init_uniform(d, dh, d, next_seed()));
      blk.w_k.push_back(init_uniform(d, dh, d, next_seed()));
      blk.w_v.push_back(init_uniform(d, dh, d, next_seed()));
    }
    blk.w_o = init_uniform(d, d, d, next_seed());
    return blk;
  };
  auto make_ffn = [&]() {
    return FeedForward{init_uniform(d, hidden, d, next_seed()),
                       init_uniform(hidden, d, hidden, next_seed())};
  };
  input_projection_ = init_uniform(n, d, n, next_seed());
  for (int l = 0; l < kEncoderLayers; ++l) {
    encoder_attn_.push_back(make_attn());
    encoder_ffn_.push_back(make_ffn());
  }
  decoder_self_ = make_attn();
  decoder_cross_ = make_attn();
  decoder_ffn_ = make_ffn();
  output_projection_ = init_uniform(d, n, d, next_seed());
  pe_encoder_ = positional_encoding(cfg_.lookback, d);
  pe_decoder_ = positional_encoding(cfg_.label_len + cfg_.horizon, d);
}

std::vector<NamedParam> InformerLite::parameters() {
  std::vector<NamedParam> params;
  params.push_back({"input_projection", &input_projection_});
  auto add_attn = [&](const std::string& prefix, AttentionBlock& blk) {
    for (Index h = 0; h < cfg_.n_heads; ++h) {
      params.push_back({strcat(prefix, ".h", h, ".w_q"), &blk.w_q[static_cast<std::size_t>(h)]});
      params.push_back({strcat(prefix, ".h", h, ".w_k"), &blk.w_k[static_cast<std::size_t>(h)]});
      params.push_back({strcat(prefix, ".h", h, ".w_v"), &blk.w_v[static_cast<std::size_t>(h)]});
    }
    params.push_back({strcat(prefix, ".w_o"), &blk.w_o});
  };
  for (int l = 0; l < kEncoderLayers; ++l) {
    add_attn(strcat("enc", l), encoder_attn_[static_cast<std::size_t>(l)]);
    params.push_back({strcat("enc", l, ".ffn_w1"), &encoder_ffn_[static_cast<std::size_t>(l)].w1});
    params.push_back({strcat("enc", l, ".ffn_w2"), &encoder_ffn_[static_cast<std::size_t>(l)].w2});
  }
  add_attn("dec.self", decoder_self_);
  add_attn("dec.cross", decoder_cross_);
  params.push_back({"dec.ffn_w1", &decoder_ffn_.w1});
  params.push_back({"dec.ffn_w2", &decoder_ffn_.w2});
  params.push_back({"output_projection", &output_projection_});
  return params;
}

std::vector<NamedParam> InformerLite::parameters() const {
  return const_cast<InformerLite*>(this)->parameters();
}

void InformerLite::register_sites(AttentionIndexMemory& memory) const {
  auto register_layer = [&](int layer, Index l_q) {
    const Index u = top_u_count(cfg_.u_factor, l_q);
    for (Index h = 0; h < cfg_.n_heads; ++h) {
      memory.register_site(layer, static_cast<int>(h), l_q, u);
    }
  };
  register_layer(0, cfg_.lookback);
  register_layer(1, cfg_.lookback);
  register_layer(2, cfg_.label_len + cfg_.horizon);
}

Matrix InformerLite::make_decoder_input(const Matrix& lookback, Index label_len,
                                        Index horizon) {
  require(label_len >= 1 && label_len <= lookback.rows(),
          "make_decoder_input: label_len=", label_len, " outside [1, ",
          lookback.rows(), "]");
  Matrix dec = Matrix::Zero(label_len + horizon, lookback.cols());
  dec.topRows(label_len) = lookback.bottomRows(label_len);
  return dec;
}

InformerLite::Forward InformerLite::forward(Graph& g, const Matrix& enc_in,
                                            const Matrix& dec_in, RunMode mode,
                                            AttentionIndexMemory* memory, int epoch,
                                            int iteration, OpCounters& counters) const {
  require(enc_in.rows() == cfg_.lookback && enc_in.cols() == cfg_.channels,
          "informer forward: encoder input is ", shape_str(enc_in), ", expected ",
          cfg_.lookback, "x", cfg_.channels);
  require(dec_in.rows() == cfg_.label_len + cfg_.horizon &&
              dec_in.cols() == cfg_.channels,
          "informer forward: decoder input is ", shape_str(dec_in), ", expected ",
          cfg_.label_len + cfg_.horizon, "x", cfg_.channels);
  const bool sparse = cfg_.attention == AttentionKind::sparse;
  if (mode == RunMode::predict && sparse) {
    require(memory != nullptr, "informer forward: predict mode needs an index memory");
    require(memory->frozen(), "informer forward: predict mode needs a frozen index memory");
    for (int layer = 0; layer <= 2; ++layer) {
      for (Index h = 0; h < cfg_.n_heads; ++h) {
        require(memory->has_site(layer, static_cast<int>(h)),
                "informer forward: index memory missing site (layer_id=", layer,
                ", head_id=", h, ")");
      }
    }
  }

  // Bind weight leaves in parameters() order.
  Bound bound = bind(g);

  Tensor enc_tokens = g.leaf(enc_in, false);
  Tensor dec_tokens = g.leaf(dec_in, false);
  Tensor x = add(matmul(enc_tokens, bound.w_in), g.leaf(pe_encoder_, false));
  Tensor y = add(matmul(dec_tokens, bound.w_in), g.leaf(pe_decoder_, false));

  // One self-attention site: per-head sparse (or dense) attention, head
  // concat, output map, residual.
  auto self_attention = [&](Tensor stream, const BoundAttn& blk, int layer,
                            bool causal) {
    Tensor cat;
    for (Index h = 0; h < cfg_.n_heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      Tensor q = matmul(stream, blk.q[hs]);
      Tensor k = matmul(stream, blk.k[hs]);
      Tensor v = matmul(stream, blk.v[hs]);
      Tensor head;
      if (!sparse) {
        head = full_attention(q, k, v, causal, counters);
      } else {
        AttentionConfig acfg;
        acfg.d = cfg_.d_model / cfg_.n_heads;
        acfg.u_factor = cfg_.u_factor;
        acfg.sample_factor = cfg_.sample_factor;
        acfg.causal = causal;
        acfg.seed = derive_seed(cfg_.seed, site_tag(layer, static_cast<int>(h)),
                                static_cast<std::uint64_t>(epoch),
                                static_cast<std::uint64_t>(iteration));
        std::optional<IndexList> reuse;
        if (mode == RunMode::predict) {
          reuse = memory->aggregate(layer, static_cast<int>(h));
        }
        SparseAttentionResult res = prob_sparse_attention(q, k, v, acfg, reuse, counters);
        if (mode == RunMode::train && memory != nullptr) {
          memory->record(layer, static_cast<int>(h), epoch, iteration,
                         res.used_indices);
        }
        head = res.output;
      }
      cat = (h == 0) ? head : concat(cat, head, /*axis=*/1);
    }
    return add(stream, matmul(cat, blk.o));
  };

  auto cross_attention = [&](Tensor queries, Tensor keys, const BoundAttn& blk) {
    Tensor cat;
    for (Index h = 0; h < cfg_.n_heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      Tensor q = matmul(queries, blk.q[hs]);
      Tensor k = matmul(keys, blk.k[hs]);
      Tensor v = matmul(keys, blk.v[hs]);
      Tensor head = full_attention(q, k, v, /*causal=*/false, counters);
      cat = (h == 0) ? head : concat(cat, head, /*axis=*/1);
    }
    return add(queries, matmul(cat, blk.o));
  };

  auto feed_forward = [&](Tensor stream, const BoundFfn& ffn) {
    Tensor hidden = gelu(matmul(stream, ffn.first));
    return add(stream, matmul(hidden, ffn.second));
  };

  for (int l = 0; l < kEncoderLayers; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    x = self_attention(x, bound.enc[ls], l, /*causal=*/false);
    x = feed_forward(x, bound.enc_ffn[ls]);
  }
  y = self_attention(y, bound.dec_self, /*layer=*/2, /*causal=*/true);
  y = cross_attention(y, x, bound.dec_cross);
  y = feed_forward(y, bound.dec_ffn);

  Tensor projected = matmul(y, bound.w_out);
  IndexList tail(static_cast<std::size_t>(cfg_.horizon));
  for (Index i = 0; i < cfg_.horizon; ++i) {
    tail[static_cast<std::size_t>(i)] = cfg_.label_len + i;
  }
  Forward fwd;
  fwd.output = gather_rows(projected, tail);
  fwd.param_leaves = std::move(bound.leaves);
  return fwd;
}

Matrix InformerLite::forecast(const Matrix& lookback,
                              const AttentionIndexMemory& memory,
                              OpCounters& counters) const {
  Graph g;
  const Matrix dec = make_decoder_input(lookback, cfg_.label_len, cfg_.horizon);
  // Predict mode only reads the memory.
  Forward fwd = forward(g, lookback, dec, RunMode::predict,
                        const_cast<AttentionIndexMemory*>(&memory), 0, 0, counters);
  return fwd.output.value();
}

InformerLite::Bound InformerLite::bind(Graph& g) const {
  Bound b;
  auto take = [&](const Matrix& m) {
    Tensor t = g.leaf(m, /*requires_grad=*/true);
    b.leaves.push_back(t);
    return t;
  };
  // Same order as parameters().
  b.w_in = take(input_projection_);
  auto take_attn = [&](const AttentionBlock& blk) {
    BoundAttn out;
    for (Index h = 0; h < cfg_.n_heads; ++h) {
      const auto hs = static_cast<std::size_t>(h);
      out.q.push_back(take(blk.w_q[hs]));
      out.k.push_back(take(blk.w_k[hs]));
      out.v.push_back(take(blk.w_v[hs]));
    }
    out.o = take(blk.w_o);
    return out;
  };
  for (int l = 0; l < kEncoderLayers; ++l) {
    const auto ls = static_cast<std::size_t>(l);
    b.enc.push_back(take_attn(encoder_attn_[ls]));
    b.enc_ffn.push_back({take(encoder_ffn_[ls].w1), take(encoder_ffn_[ls].w2)});
  }
  b.dec_self = take_attn(decoder_self_);
  b.dec_cross = take_attn(decoder_cross_);
  b.dec_ffn = {take(decoder_ffn_.w1), take(decoder_ffn_.w2)};
  b.w_out = take(output_projection_);
  return b;
}

}  // namespace tsf
