#pragma once

#include "tsf/data.hpp"
#include "tsf/index_memory.hpp"
#include "tsf/models.hpp"

#include <map>
#include <string>

namespace tsf {

// Self-describing container for trained weights: named arrays, the model
// config echo, the train-split normalization statistics and (for the
// encoder/decoder model) the frozen attention-index segment. Serialized as
// JSON; doubles round-trip exactly.
struct Checkpoint {
  int version = 1;
  ModelConfig model;
  std::map<std::string, Matrix> weights;
  ChannelStats stats;
  bool has_memory = false;
  AttentionIndexMemory memory;

  static Checkpoint capture(const MLinearModel& m, const ChannelStats& stats);
  static Checkpoint capture(const InformerLite& m, const AttentionIndexMemory& memory,
                            const ChannelStats& stats);

  // Reconstructs a model with the stored weights; fails when a named weight
  // is missing or has the wrong shape.
  MLinearModel make_mlinear() const;
  InformerLite make_informer() const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);

  std::string to_json_text() const;
  static Checkpoint from_json_text(const std::string& text);
};

}  // namespace tsf
