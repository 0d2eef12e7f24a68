#include "tsf/checkpoint.hpp"

#include <json.hpp>

#include <fstream>

namespace tsf {

namespace {

using nlohmann::json;

json matrix_to_json(const Matrix& m) {
  json data = json::array();
  for (Index r = 0; r < m.rows(); ++r) {
    for (Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Matrix matrix_from_json(const json& j) {
  const Index rows = j.at("rows").get<Index>();
  const Index cols = j.at("cols").get<Index>();
  const auto& data = j.at("data");
  require(static_cast<Index>(data.size()) == rows * cols,
          "checkpoint: matrix payload has ", data.size(), " values for ", rows,
          "x", cols);
  Matrix m(rows, cols);
  std::size_t i = 0;
  for (Index r = 0; r < rows; ++r) {
    for (Index c = 0; c < cols; ++c) m(r, c) = data[i++].get<Scalar>();
  }
  return m;
}

json config_to_json(const ModelConfig& cfg) {
  return json{{"kind", to_string(cfg.kind)},
              {"lookback", cfg.lookback},
              {"horizon", cfg.horizon},
              {"label_len", cfg.label_len},
              {"channels", cfg.channels},
              {"d_model", cfg.d_model},
              {"n_heads", cfg.n_heads},
              {"u_factor", cfg.u_factor},
              {"sample_factor", cfg.sample_factor},
              {"p_factor", cfg.p_factor},
              {"mapping", to_string(cfg.mapping)},
              {"attention", cfg.attention == AttentionKind::sparse ? "sparse" : "full"},
              {"seed", cfg.seed}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.kind = model_kind_from_string(j.at("kind").get<std::string>());
  cfg.lookback = j.at("lookback").get<Index>();
  cfg.horizon = j.at("horizon").get<Index>();
  cfg.label_len = j.at("label_len").get<Index>();
  cfg.channels = j.at("channels").get<Index>();
  cfg.d_model = j.at("d_model").get<Index>();
  cfg.n_heads = j.at("n_heads").get<Index>();
  cfg.u_factor = j.at("u_factor").get<double>();
  cfg.sample_factor = j.at("sample_factor").get<double>();
  cfg.p_factor = j.at("p_factor").get<Index>();
  cfg.mapping = mapping_kind_from_string(j.at("mapping").get<std::string>());
  cfg.attention = j.at("attention").get<std::string>() == "full"
                      ? AttentionKind::full
                      : AttentionKind::sparse;
  cfg.seed = j.at("seed").get<std::uint64_t>();
  return cfg;
}

json memory_to_json(const AttentionIndexMemory& memory) {
  json sites = json::array();
  for (const auto& s : memory.aggregated_sites()) {
    sites.push_back(json{{"layer_id", s.layer_id},
                         {"head_id", s.head_id},
                         {"seq_len", s.seq_len},
                         {"u", s.u},
                         {"indices", s.indices}});
  }
  return json{{"mode", memory.mode() == AggregationMode::frequency ? "frequency"
                                                                   : "eq3_mean"},
              {"sites", std::move(sites)}};
}

AttentionIndexMemory memory_from_json(const json& j) {
  std::vector<AttentionIndexMemory::AggregatedSite> sites;
  for (const json& s : j.at("sites")) {
    AttentionIndexMemory::AggregatedSite site;
    site.layer_id = s.at("layer_id").get<int>();
    site.head_id = s.at("head_id").get<int>();
    site.seq_len = s.at("seq_len").get<Index>();
    site.u = s.at("u").get<Index>();
    site.indices = s.at("indices").get<IndexList>();
    sites.push_back(std::move(site));
  }
  const AggregationMode mode = j.at("mode").get<std::string>() == "eq3_mean"
                                   ? AggregationMode::eq3_mean
                                   : AggregationMode::frequency;
  return AttentionIndexMemory::from_aggregates(std::move(sites), mode);
}

template <typename Model>
std::map<std::string, Matrix> capture_weights(const Model& m) {
  std::map<std::string, Matrix> weights;
  for (const NamedParam& p : m.parameters()) weights.emplace(p.name, *p.data);
  return weights;
}

template <typename Model>
void restore_weights(Model& m, const std::map<std::string, Matrix>& weights) {
  for (NamedParam& p : m.parameters()) {
    auto it = weights.find(p.name);
    require(it != weights.end(), "checkpoint: missing weight '", p.name, "'");
    require(it->second.rows() == p.data->rows() && it->second.cols() == p.data->cols(),
            "checkpoint: weight '", p.name, "' is ", shape_str(it->second),
            ", model expects ", shape_str(*p.data));
    *p.data = it->second;
  }
}

}  // namespace

Checkpoint Checkpoint::capture(const MLinearModel& m, const ChannelStats& stats) {
  Checkpoint ckpt;
  ckpt.model = m.config();
  ckpt.weights = capture_weights(m);
  ckpt.stats = stats;
  return ckpt;
}

Checkpoint Checkpoint::capture(const InformerLite& m,
                               const AttentionIndexMemory& memory,
                               const ChannelStats& stats) {
  Checkpoint ckpt;
  ckpt.model = m.config();
  ckpt.weights = capture_weights(m);
  ckpt.stats = stats;
  ckpt.has_memory = true;
  ckpt.memory = AttentionIndexMemory::from_aggregates(memory.aggregated_sites(),
                                                      memory.mode());
  return ckpt;
}

MLinearModel Checkpoint::make_mlinear() const {
  require(model.kind == ModelKind::mlinear,
          "checkpoint holds a ", to_string(model.kind), " model, not mlinear");
  MLinearModel m(model);
  restore_weights(m, weights);
  return m;
}

InformerLite Checkpoint::make_informer() const {
  require(model.kind == ModelKind::informer_lite,
          "checkpoint holds a ", to_string(model.kind), " model, not informer_lite");
  InformerLite m(model);
  restore_weights(m, weights);
  return m;
}

std::string Checkpoint::to_json_text() const {
  json j;
  j["format"] = "tsforecast-checkpoint";
  j["version"] = version;
  j["model"] = config_to_json(model);
  j["stats"] = json{{"mean", std::vector<Scalar>(stats.mean.data(),
                                                 stats.mean.data() + stats.mean.size())},
                    {"std", std::vector<Scalar>(stats.std.data(),
                                                stats.std.data() + stats.std.size())}};
  json w = json::object();
  for (const auto& [name, m] : weights) w[name] = matrix_to_json(m);
  j["weights"] = std::move(w);
  j["memory"] = has_memory ? memory_to_json(memory) : json(nullptr);
  return j.dump(1);
}

Checkpoint Checkpoint::from_json_text(const std::string& text) {
  json j = json::parse(text);
  require(j.at("format").get<std::string>() == "tsforecast-checkpoint",
          "checkpoint: unrecognized format tag");
  Checkpoint ckpt;
  ckpt.version = j.at("version").get<int>();
  require(ckpt.version == 1, "checkpoint: unsupported version ", ckpt.version);
  ckpt.model = config_from_json(j.at("model"));
  const auto mean = j.at("stats").at("mean").get<std::vector<Scalar>>();
  const auto sd = j.at("stats").at("std").get<std::vector<Scalar>>();
  ckpt.stats.mean = Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size()));
  ckpt.stats.std = Eigen::Map<const Vector>(sd.data(), static_cast<Index>(sd.size()));
  for (const auto& [name, payload] : j.at("weights").items()) {
    ckpt.weights.emplace(name, matrix_from_json(payload));
  }
  if (!j.at("memory").is_null()) {
    ckpt.has_memory = true;
    ckpt.memory = memory_from_json(j.at("memory"));
  }
  return ckpt;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path);
  require(out.good(), "checkpoint: cannot open '", path, "' for writing");
  out << to_json_text() << '\n';
  require(out.good(), "checkpoint: write to '", path, "' failed");
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "checkpoint: cannot open '", path, "'");
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

}  // namespace tsf
