#pragma once

#include "tsf/types.hpp"

#include <map>
#include <optional>
#include <utility>
#include <vector>

namespace tsf {

// How recorded top-u index sets are reduced to one reuse set per site.
// frequency keeps the u most-selected positions; eq3_mean takes the
// element-wise mean of the sorted index vectors, rounds half-up and repairs
// collisions to the nearest unused position. frequency is the default:
// averaging positions can invent indices that were never selected.
enum class AggregationMode { eq3_mean, frequency };

struct StabilityEntry {
  int layer_id = 0;
  int head_id = 0;
  int epoch_a = 0;
  int epoch_b = 0;
  double jaccard = 0.0;
};
using StabilityTable = std::vector<StabilityEntry>;

// Per-layer, per-head store of the top-u query positions observed while
// training, with aggregation for prediction-time reuse. Single writer while
// recording; freeze() fixes the aggregates and rejects further records.
class AttentionIndexMemory {
 public:
  struct AggregatedSite {
    int layer_id = 0;
    int head_id = 0;
    Index seq_len = 0;
    Index u = 0;
    IndexList indices;
  };

  explicit AttentionIndexMemory(AggregationMode mode = AggregationMode::frequency,
                                int warmup_epochs = 1)
      : mode_(mode), warmup_epochs_(warmup_epochs) {}

  // Reconstructs a frozen memory from checkpointed aggregates.
  static AttentionIndexMemory from_aggregates(std::vector<AggregatedSite> sites,
                                              AggregationMode mode);

  // Declares an attention site before recording; seq_len bounds the indices
  // and u fixes the recorded list length.
  void register_site(int layer_id, int head_id, Index seq_len, Index u);
  bool has_site(int layer_id, int head_id) const;

  // indices must be sorted ascending, distinct, length u, within [0, seq_len).
  void record(int layer_id, int head_id, int epoch, int iteration,
              const IndexList& indices);

  // Exactly u distinct in-range indices, ascending. Records from epochs
  // below the warm-up cutoff are excluded unless a site has nothing else.
  IndexList aggregate(int layer_id, int head_id) const;

  // Jaccard overlap of per-epoch index unions for consecutive recorded
  // epochs, per site. Empty when fewer than two epochs exist anywhere.
  StabilityTable stability_report() const;

  void freeze();
  bool frozen() const { return frozen_; }

  AggregationMode mode() const { return mode_; }
  int warmup_epochs() const { return warmup_epochs_; }

  struct RecordView {
    int epoch = 0;
    int iteration = 0;
    const IndexList* indices = nullptr;
  };

  std::size_t record_count(int layer_id, int head_id) const;
  // Records in insertion order.
  std::vector<RecordView> records(int layer_id, int head_id) const;
  Index site_u(int layer_id, int head_id) const;
  Index site_seq_len(int layer_id, int head_id) const;
  std::vector<std::pair<int, int>> site_keys() const;

  // Aggregates for every recorded site, in key order (checkpoint segment).
  std::vector<AggregatedSite> aggregated_sites() const;

 private:
  struct Record {
    int epoch = 0;
    int iteration = 0;
    IndexList indices;
  };
  struct Site {
    Index seq_len = 0;
    Index u = 0;
    std::vector<Record> records;
    std::optional<IndexList> frozen_aggregate;
  };

  using Key = std::pair<int, int>;

  const Site& site_at(int layer_id, int head_id, const char* who) const;
  IndexList aggregate_records(const Site& site) const;

  std::map<Key, Site> sites_;
  AggregationMode mode_;
  int warmup_epochs_;
  bool frozen_ = false;
};

}  // namespace tsf
