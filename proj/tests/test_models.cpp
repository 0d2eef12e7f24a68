#include "tsf/models.hpp"

#include "support/test_util.hpp"
#include "tsf/losses.hpp"

#include <doctest.h>

#include <cmath>
#include <set>

using namespace tsf;
using test::exact_eq;
using test::random_matrix;

namespace {

template <typename Model>
void set_param(Model& model, const std::string& name, const Matrix& value) {
  for (NamedParam& p : model.parameters()) {
    if (p.name == name) {
      REQUIRE(p.data->rows() == value.rows());
      REQUIRE(p.data->cols() == value.cols());
      *p.data = value;
      return;
    }
  }
  FAIL("no parameter named ", name);
}

template <typename Model>
void zero_params(Model& model) {
  for (NamedParam& p : model.parameters()) p.data->setZero();
}

// Central differences over the model's own weight matrices; the analytic
// side comes from one tape backward pass, the numeric side only ever calls
// the forward path.
double max_model_grad_error(std::vector<NamedParam> params,
                            const std::vector<Matrix>& analytic,
                            const std::function<double()>& eval_loss) {
  REQUIRE(params.size() == analytic.size());
  const double h = 1e-4;
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Matrix& w = *params[i].data;
    for (Index r = 0; r < w.rows(); ++r) {
      for (Index c = 0; c < w.cols(); ++c) {
        const Scalar saved = w(r, c);
        w(r, c) = saved + h;
        const double plus = eval_loss();
        w(r, c) = saved - h;
        const double minus = eval_loss();
        w(r, c) = saved;
        const double numeric = (plus - minus) / (2 * h);
        const double a = analytic[i](r, c);
        const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
        worst = std::max(worst, std::abs(a - numeric) / denom);
      }
    }
  }
  return worst;
}

ModelConfig tiny_mlinear(Index n = 2, MappingKind mapping = MappingKind::sequence_mix) {
  ModelConfig cfg;
  cfg.kind = ModelKind::mlinear;
  cfg.lookback = 6;
  cfg.horizon = 3;
  cfg.channels = n;
  cfg.p_factor = 2;
  cfg.mapping = mapping;
  cfg.seed = 5;
  return cfg;
}

ModelConfig tiny_informer(std::uint64_t seed = 5) {
  ModelConfig cfg;
  cfg.kind = ModelKind::informer_lite;
  cfg.lookback = 6;
  cfg.horizon = 2;
  cfg.label_len = 3;
  cfg.channels = 2;
  cfg.d_model = 4;
  cfg.n_heads = 2;
  cfg.u_factor = 1.0;  // genuinely sparse at these lengths
  cfg.sample_factor = 2.0;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("model config validation") {
  ModelConfig bad = tiny_informer();
  bad.d_model = 5;
  CHECK_THROWS_WITH_AS(InformerLite{bad}, doctest::Contains("not divisible"),
                       std::invalid_argument);
  ModelConfig neg = tiny_mlinear();
  neg.horizon = 0;
  CHECK_THROWS_AS(MLinearModel{neg}, std::invalid_argument);
}

TEST_CASE("ci_forward hand cases") {
  ModelConfig cfg = tiny_mlinear(1);
  cfg.lookback = 2;
  cfg.horizon = 1;
  cfg.p_factor = 1;
  MLinearModel model(cfg);
  set_param(model, "ci_w0", Matrix(Matrix::Constant(2, 1, 1.0)));
  Matrix x(2, 1);
  x << 3.0, 4.0;
  Graph g;
  auto bound = model.bind(g);
  Matrix out = model.ci_forward(bound, g.leaf(x)).value();
  CHECK(out.rows() == 1);
  CHECK(out.cols() == 1);
  CHECK(out(0, 0) == doctest::Approx(7.0).epsilon(1e-15));

  // All-zero weights give all-zero output.
  zero_params(model);
  Graph g2;
  auto bound2 = model.bind(g2);
  CHECK(model.ci_forward(bound2, g2.leaf(x)).value()(0, 0) == 0.0);

  Matrix wrong = Matrix::Zero(2, 3);
  Graph g3;
  auto bound3 = model.bind(g3);
  CHECK_THROWS_WITH_AS(model.ci_forward(bound3, g3.leaf(wrong)),
                       doctest::Contains("channels"), std::invalid_argument);
}

TEST_CASE("cd_forward hand case and weight sharing") {
  ModelConfig cfg = tiny_mlinear(1);
  cfg.lookback = 2;
  cfg.horizon = 1;
  cfg.p_factor = 1;
  MLinearModel model(cfg);
  Matrix w(2, 1);
  w << 2.0, 0.0;
  set_param(model, "cd_w", w);
  Matrix x(2, 1);
  x << 3.0, 4.0;
  Graph g;
  auto bound = model.bind(g);
  CHECK(model.cd_forward(bound, g.leaf(x)).value()(0, 0) == doctest::Approx(6.0));

  // Duplicated input channels produce identical output channels.
  ModelConfig cfg2 = tiny_mlinear(2);
  MLinearModel model2(cfg2);
  SplitMix64 rng(91);
  Matrix col = random_matrix(cfg2.lookback, 1, rng);
  Matrix dup(cfg2.lookback, 2);
  dup.col(0) = col;
  dup.col(1) = col;
  Graph g2;
  auto bound2 = model2.bind(g2);
  Matrix out = model2.cd_forward(bound2, g2.leaf(dup)).value();
  CHECK(exact_eq(out.col(0), out.col(1)));
}

TEST_CASE("n=1 with tied weights makes ci and cd identical") {
  ModelConfig cfg = tiny_mlinear(1);
  MLinearModel model(cfg);
  SplitMix64 rng(93);
  Matrix w = random_matrix(cfg.lookback, cfg.horizon, rng);
  set_param(model, "ci_w0", w);
  set_param(model, "cd_w", w);
  Matrix x = random_matrix(cfg.lookback, 1, rng);
  Graph g;
  auto bound = model.bind(g);
  Matrix ci = model.ci_forward(bound, g.leaf(x)).value();
  Matrix cd = model.cd_forward(bound, g.leaf(x)).value();
  CHECK(exact_eq(ci, cd));
}

TEST_CASE("ci channels are independent and permute with the weights") {
  ModelConfig cfg = tiny_mlinear(3);
  MLinearModel model(cfg);
  SplitMix64 rng(95);
  Matrix x = random_matrix(cfg.lookback, 3, rng);

  Graph g;
  auto bound = model.bind(g);
  Matrix base = model.ci_forward(bound, g.leaf(x)).value();

  // Perturb channel 1 only: the other output columns are bit-identical.
  Matrix x2 = x;
  x2.col(1).array() += 0.37;
  Graph g2;
  auto bound2 = model.bind(g2);
  Matrix moved = model.ci_forward(bound2, g2.leaf(x2)).value();
  CHECK(exact_eq(moved.col(0), base.col(0)));
  CHECK(exact_eq(moved.col(2), base.col(2)));
  CHECK(!exact_eq(moved.col(1), base.col(1)));

  // Permuting channels together with their weights permutes the output.
  MLinearModel permuted(cfg);
  for (NamedParam& p : permuted.parameters()) {
    for (NamedParam& q : model.parameters()) {
      if (q.name == p.name) *p.data = *q.data;
    }
  }
  Matrix w0, w1;
  for (NamedParam& p : model.parameters()) {
    if (p.name == "ci_w0") w0 = *p.data;
    if (p.name == "ci_w1") w1 = *p.data;
  }
  set_param(permuted, "ci_w0", w1);
  set_param(permuted, "ci_w1", w0);
  Matrix x_swapped = x;
  x_swapped.col(0) = x.col(1);
  x_swapped.col(1) = x.col(0);
  Graph g3;
  auto bound3 = permuted.bind(g3);
  Matrix swapped = permuted.ci_forward(bound3, g3.leaf(x_swapped)).value();
  CHECK(exact_eq(swapped.col(0), base.col(1)));
  CHECK(exact_eq(swapped.col(1), base.col(0)));
  CHECK(exact_eq(swapped.col(2), base.col(2)));
}

TEST_CASE("mix_forward zero weights and channel-constant symmetry") {
  ModelConfig cfg = tiny_mlinear(2);
  MLinearModel model(cfg);
  SplitMix64 rng(97);
  OpCounters c;

  // Zero final linear: zero output no matter what the attention does.
  set_param(model, "mix_w", Matrix(Matrix::Zero(2 * cfg.horizon, cfg.horizon)));
  Graph g;
  auto bound = model.bind(g);
  Tensor x_ci = g.leaf(random_matrix(cfg.horizon, 2, rng));
  Tensor x_cd = g.leaf(random_matrix(cfg.horizon, 2, rng));
  Matrix zero_out = model.mix_forward(bound, x_ci, x_cd, c).value();
  CHECK(zero_out.cwiseAbs().maxCoeff() == 0.0);

  // mix_w = [I_S; 0], X_CI == X_CD, channel-constant heads: all output
  // channels are modulated identically.
  MLinearModel model2(cfg);
  Matrix selector = Matrix::Zero(2 * cfg.horizon, cfg.horizon);
  selector.topRows(cfg.horizon) = Matrix::Identity(cfg.horizon, cfg.horizon);
  set_param(model2, "mix_w", selector);
  Matrix head_col = random_matrix(cfg.horizon, 1, rng, 0.5, 1.5);
  Matrix head(cfg.horizon, 2);
  head.col(0) = head_col;
  head.col(1) = head_col;
  Graph g2;
  auto bound2 = model2.bind(g2);
  Tensor h = g2.leaf(head);
  Matrix out = model2.mix_forward(bound2, h, h, c).value();
  CHECK(exact_eq(out.col(0), out.col(1)));

  // Shape mismatch between the two heads is rejected.
  Graph g3;
  auto bound3 = model2.bind(g3);
  CHECK_THROWS_WITH_AS(
      model2.mix_forward(bound3, g3.leaf(Matrix::Zero(cfg.horizon, 2)),
                         g3.leaf(Matrix::Zero(cfg.horizon, 1)), c),
      doctest::Contains("head shapes differ"), std::invalid_argument);
}

TEST_CASE("scalar mixing pipeline matches a hand-evaluated oracle") {
  ModelConfig cfg = tiny_mlinear(1);
  cfg.lookback = 2;
  cfg.horizon = 1;
  cfg.p_factor = 1;  // d_k = d_q = 1, d_v = 2
  MLinearModel model(cfg);

  const double wq0 = 0.3, wq1 = -0.2;
  const double wk0 = 0.5, wk1 = 0.1;
  const double wv00 = 0.25, wv01 = -0.75, wv10 = 1.5, wv11 = 0.5;
  const double bq = 0.05, bk = -0.3, bv0 = 0.2, bv1 = -0.1;
  const double m0 = 0.8, m1 = -1.1;
  Matrix wq(1, 2), wk(1, 2), wv(2, 2), b_q(1, 1), b_k(1, 1), b_v(2, 1), mix(2, 1);
  wq << wq0, wq1;
  wk << wk0, wk1;
  wv << wv00, wv01, wv10, wv11;
  b_q << bq;
  b_k << bk;
  b_v << bv0, bv1;
  mix << m0, m1;
  set_param(model, "w_q", wq);
  set_param(model, "w_k", wk);
  set_param(model, "w_v", wv);
  set_param(model, "b_q", b_q);
  set_param(model, "b_k", b_k);
  set_param(model, "b_v", b_v);
  set_param(model, "mix_w", mix);

  const double ci = 0.9, cd = -0.4;
  Graph g;
  auto bound = model.bind(g);
  OpCounters c;
  Matrix out = model
                   .mix_forward(bound, g.leaf(Matrix::Constant(1, 1, ci)),
                                g.leaf(Matrix::Constant(1, 1, cd)), c)
                   .value();

  // By hand: softmax factors over single entries are exactly one, so the
  // context rows are the affine V values and each half of Z is scaled by its
  // own context row before the final linear.
  const double v0 = wv00 * ci + wv01 * cd + bv0;
  const double v1 = wv10 * ci + wv11 * cd + bv1;
  const double expected = m0 * (ci * v0) + m1 * (cd * v1);
  CHECK(out(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("mlinear_forward returns three heads; evaluation reads the mix head") {
  ModelConfig cfg = tiny_mlinear(2);
  MLinearModel model(cfg);
  SplitMix64 rng(99);
  Matrix x = random_matrix(cfg.lookback, 2, rng);
  Graph g;
  OpCounters c;
  auto fwd = model.forward(g, x, c);
  CHECK(fwd.heads.ci.rows() == cfg.horizon);
  CHECK(fwd.heads.ci.cols() == 2);
  CHECK(fwd.heads.cd.rows() == cfg.horizon);
  CHECK(fwd.heads.mix.rows() == cfg.horizon);
  CHECK(fwd.param_leaves.size() == model.parameters().size());

  // forecast() is exactly the mix head, and is deterministic.
  OpCounters c2;
  Matrix f1 = model.forecast(x, c2);
  CHECK(exact_eq(f1, fwd.heads.mix.value()));
  CHECK(exact_eq(f1, model.forecast(x, c2)));
}

TEST_CASE("mlinear end-to-end gradients match finite differences") {
  for (MappingKind mapping : {MappingKind::sequence_mix, MappingKind::feature_mix}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ModelConfig cfg = tiny_mlinear(2, mapping);
      cfg.seed = seed;
      MLinearModel model(cfg);
      SplitMix64 rng(seed * 101);
      Matrix x = random_matrix(cfg.lookback, 2, rng);
      Matrix y = random_matrix(cfg.horizon, 2, rng);
      LossConfig loss_cfg{LossKind::mse, 1.0};

      Graph g;
      OpCounters c;
      auto fwd = model.forward(g, x, c);
      Tensor target = g.leaf(y);
      DeepSupervision ds = deep_supervised_loss(fwd.heads.ci, fwd.heads.cd,
                                                fwd.heads.mix, target, loss_cfg, true);
      g.backward(ds.total);
      std::vector<Matrix> analytic;
      for (const Tensor& leaf : fwd.param_leaves) analytic.push_back(leaf.grad());

      auto eval_loss = [&]() {
        Graph g2;
        OpCounters c2;
        auto f = model.forward(g2, x, c2);
        Tensor t = g2.leaf(y);
        return deep_supervised_loss(f.heads.ci, f.heads.cd, f.heads.mix, t,
                                    loss_cfg, true)
            .total.value()(0, 0);
      };
      INFO("mapping=", to_string(mapping), " seed=", seed);
      CHECK(max_model_grad_error(model.parameters(), analytic, eval_loss) <= 1e-4);
    }
  }
}

TEST_CASE("informer forward shapes and site registration") {
  ModelConfig cfg = tiny_informer();
  InformerLite model(cfg);
  AttentionIndexMemory memory;
  model.register_sites(memory);
  auto keys = memory.site_keys();
  CHECK(keys.size() == 6);  // 3 layers x 2 heads
  std::set<int> layers;
  for (auto [l, h] : keys) layers.insert(l);
  CHECK(layers == std::set<int>{0, 1, 2});
  CHECK(memory.site_seq_len(0, 0) == cfg.lookback);
  CHECK(memory.site_seq_len(2, 0) == cfg.label_len + cfg.horizon);

  SplitMix64 rng(103);
  Matrix enc = random_matrix(cfg.lookback, 2, rng);
  Matrix dec = InformerLite::make_decoder_input(enc, cfg.label_len, cfg.horizon);
  CHECK(dec.rows() == cfg.label_len + cfg.horizon);
  CHECK(exact_eq(dec.topRows(cfg.label_len), enc.bottomRows(cfg.label_len)));
  CHECK(dec.bottomRows(cfg.horizon).cwiseAbs().maxCoeff() == 0.0);

  Graph g;
  OpCounters c;
  auto fwd = model.forward(g, enc, dec, RunMode::train, &memory, 0, 0, c);
  CHECK(fwd.output.rows() == cfg.horizon);
  CHECK(fwd.output.cols() == 2);
  CHECK(fwd.param_leaves.size() == model.parameters().size());
  // Each sparse site recorded once.
  for (auto [l, h] : keys) CHECK(memory.record_count(l, h) == 1);
}

TEST_CASE("informer predict mode performs no measurement") {
  ModelConfig cfg = tiny_informer();
  InformerLite model(cfg);
  AttentionIndexMemory memory;
  model.register_sites(memory);
  SplitMix64 rng(105);
  Matrix enc = random_matrix(cfg.lookback, 2, rng);
  Matrix dec = InformerLite::make_decoder_input(enc, cfg.label_len, cfg.horizon);

  Graph g;
  OpCounters train_counters;
  model.forward(g, enc, dec, RunMode::train, &memory, 0, 0, train_counters);
  CHECK(train_counters.measurement_dot_products > 0);
  memory.freeze();

  OpCounters predict_counters;
  Graph g2;
  model.forward(g2, enc, dec, RunMode::predict, &memory, 0, 0, predict_counters);
  CHECK(predict_counters.measurement_dot_products == 0);
  CHECK(predict_counters.attention_dot_products > 0);
}

TEST_CASE("informer predict mode needs a frozen memory covering every site") {
  ModelConfig cfg = tiny_informer();
  InformerLite model(cfg);
  SplitMix64 rng(107);
  Matrix enc = random_matrix(cfg.lookback, 2, rng);
  Matrix dec = InformerLite::make_decoder_input(enc, cfg.label_len, cfg.horizon);
  OpCounters c;
  Graph g;

  AttentionIndexMemory unfrozen;
  model.register_sites(unfrozen);
  CHECK_THROWS_WITH_AS(
      model.forward(g, enc, dec, RunMode::predict, &unfrozen, 0, 0, c),
      doctest::Contains("frozen"), std::invalid_argument);

  // Frozen but missing the decoder site: the error names the key.
  std::vector<AttentionIndexMemory::AggregatedSite> sites;
  const Index u_enc = top_u_count(cfg.u_factor, cfg.lookback);
  for (int layer : {0, 1}) {
    for (int h = 0; h < 2; ++h) {
      AttentionIndexMemory::AggregatedSite s;
      s.layer_id = layer;
      s.head_id = h;
      s.seq_len = cfg.lookback;
      s.u = u_enc;
      for (Index i = 0; i < u_enc; ++i) s.indices.push_back(i);
      sites.push_back(s);
    }
  }
  AttentionIndexMemory partial =
      AttentionIndexMemory::from_aggregates(sites, AggregationMode::frequency);
  CHECK_THROWS_WITH_AS(
      model.forward(g, enc, dec, RunMode::predict, &partial, 0, 0, c),
      doctest::Contains("missing site (layer_id=2"), std::invalid_argument);
}

TEST_CASE("predict mode reusing a single recorded iteration is bit-identical") {
  ModelConfig cfg = tiny_informer();
  InformerLite model(cfg);
  AttentionIndexMemory memory;
  model.register_sites(memory);
  SplitMix64 rng(109);
  Matrix enc = random_matrix(cfg.lookback, 2, rng);
  Matrix dec = InformerLite::make_decoder_input(enc, cfg.label_len, cfg.horizon);

  Graph g;
  OpCounters c;
  auto train_fwd = model.forward(g, enc, dec, RunMode::train, &memory, 0, 0, c);
  memory.freeze();

  Graph g2;
  OpCounters c2;
  auto predict_fwd = model.forward(g2, enc, dec, RunMode::predict, &memory, 0, 0, c2);
  CHECK(exact_eq(predict_fwd.output.value(), train_fwd.output.value()));
}

TEST_CASE("u = L_Q everywhere matches the dense-attention twin network") {
  ModelConfig cfg = tiny_informer();
  cfg.u_factor = 1e6;       // u = L_Q at every site
  cfg.sample_factor = 1e6;  // full key sampling
  InformerLite sparse_model(cfg);

  ModelConfig twin_cfg = cfg;
  twin_cfg.attention = AttentionKind::full;
  InformerLite twin(twin_cfg);
  // Same seed, same dimensions: identical weights by construction.
  SplitMix64 rng(111);
  Matrix enc = random_matrix(cfg.lookback, 2, rng);
  Matrix dec = InformerLite::make_decoder_input(enc, cfg.label_len, cfg.horizon);

  Graph g1, g2;
  OpCounters c1, c2;
  auto a = sparse_model.forward(g1, enc, dec, RunMode::train, nullptr, 0, 0, c1);
  auto b = twin.forward(g2, enc, dec, RunMode::train, nullptr, 0, 0, c2);
  CHECK((a.output.value() - b.output.value()).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("informer end-to-end gradients match finite differences") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    ModelConfig cfg = tiny_informer(seed);
    InformerLite model(cfg);
    AttentionIndexMemory memory;
    model.register_sites(memory);
    SplitMix64 rng(seed * 113);
    Matrix enc = random_matrix(cfg.lookback, 2, rng);
    Matrix dec = InformerLite::make_decoder_input(enc, cfg.label_len, cfg.horizon);
    Matrix y = random_matrix(cfg.horizon, 2, rng);
    LossConfig loss_cfg{LossKind::mse, 1.0};

    // Freeze the index sets first so the loss surface is differentiable
    // (the discrete top-u selection is held fixed by reuse).
    {
      Graph g;
      OpCounters c;
      model.forward(g, enc, dec, RunMode::train, &memory, 0, 0, c);
      memory.freeze();
    }

    Graph g;
    OpCounters c;
    auto fwd = model.forward(g, enc, dec, RunMode::predict, &memory, 0, 0, c);
    Tensor target = g.leaf(y);
    Tensor loss = loss_value(fwd.output, target, loss_cfg);
    g.backward(loss);
    std::vector<Matrix> analytic;
    for (const Tensor& leaf : fwd.param_leaves) analytic.push_back(leaf.grad());

    auto eval_loss = [&]() {
      Graph g2;
      OpCounters c2;
      auto f = model.forward(g2, enc, dec, RunMode::predict, &memory, 0, 0, c2);
      Tensor t = g2.leaf(y);
      return loss_value(f.output, t, loss_cfg).value()(0, 0);
    };
    INFO("seed=", seed);
    CHECK(max_model_grad_error(model.parameters(), analytic, eval_loss) <= 1e-4);
  }
}
