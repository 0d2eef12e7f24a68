#include "tsf/index_memory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace tsf {

AttentionIndexMemory AttentionIndexMemory::from_aggregates(
    std::vector<AggregatedSite> sites, AggregationMode mode) {
  AttentionIndexMemory memory(mode);
  for (AggregatedSite& s : sites) {
    memory.register_site(s.layer_id, s.head_id, s.seq_len, s.u);
    Site& site = memory.sites_.at({s.layer_id, s.head_id});
    require(static_cast<Index>(s.indices.size()) == s.u,
            "index memory: aggregated site (", s.layer_id, ",", s.head_id,
            ") has ", s.indices.size(), " indices, expected ", s.u);
    site.frozen_aggregate = std::move(s.indices);
  }
  memory.frozen_ = true;
  return memory;
}

void AttentionIndexMemory::register_site(int layer_id, int head_id, Index seq_len,
                                         Index u) {
  require(!frozen_, "index memory is frozen");
  require(seq_len >= 1 && u >= 1 && u <= seq_len,
          "index memory: bad site extents seq_len=", seq_len, " u=", u);
  auto [it, inserted] = sites_.try_emplace({layer_id, head_id});
  if (!inserted) {
    require(it->second.seq_len == seq_len && it->second.u == u,
            "index memory: site (", layer_id, ",", head_id,
            ") re-registered with different extents");
    return;
  }
  it->second.seq_len = seq_len;
  it->second.u = u;
}

bool AttentionIndexMemory::has_site(int layer_id, int head_id) const {
  return sites_.count({layer_id, head_id}) > 0;
}

const AttentionIndexMemory::Site& AttentionIndexMemory::site_at(
    int layer_id, int head_id, const char* who) const {
  auto it = sites_.find({layer_id, head_id});
  require(it != sites_.end(), who, ": unknown site (layer_id=", layer_id,
          ", head_id=", head_id, ")");
  return it->second;
}

void AttentionIndexMemory::record(int layer_id, int head_id, int epoch,
                                  int iteration, const IndexList& indices) {
  require(!frozen_, "index memory is frozen; record() rejected");
  require(epoch >= 0 && iteration >= 0, "index memory: negative epoch/iteration");
  auto it = sites_.find({layer_id, head_id});
  require(it != sites_.end(), "record: unknown site (layer_id=", layer_id,
          ", head_id=", head_id, ")");
  Site& site = it->second;
  require(static_cast<Index>(indices.size()) == site.u, "record: got ",
          indices.size(), " indices, site expects u=", site.u);
  for (std::size_t r = 0; r < indices.size(); ++r) {
    require(indices[r] >= 0 && indices[r] < site.seq_len, "record: index ",
            indices[r], " out of range [0, ", site.seq_len, ")");
    require(r == 0 || indices[r] > indices[r - 1],
            "record: indices must be sorted ascending and distinct");
  }
  site.records.push_back({epoch, iteration, indices});
}

IndexList AttentionIndexMemory::aggregate_records(const Site& site) const {
  require(!site.records.empty(), "aggregate: no records for site");

  // Warm-up exclusion, with a fallback so a site recorded only during
  // warm-up still aggregates (single-iteration round trips rely on this).
  std::vector<const Record*> used;
  for (const Record& r : site.records) {
    if (r.epoch >= warmup_epochs_) used.push_back(&r);
  }
  if (used.empty()) {
    for (const Record& r : site.records) used.push_back(&r);
  }

  const auto u = static_cast<std::size_t>(site.u);
  IndexList out;
  if (mode_ == AggregationMode::frequency) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(site.seq_len), 0);
    for (const Record* r : used) {
      for (Index idx : r->indices) ++counts[static_cast<std::size_t>(idx)];
    }
    IndexList order(counts.size());
    std::iota(order.begin(), order.end(), Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
      const std::size_t ca = counts[static_cast<std::size_t>(a)];
      const std::size_t cb = counts[static_cast<std::size_t>(b)];
      if (ca != cb) return ca > cb;
      return a < b;  // ties to the lower index
    });
    out.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(u));
  } else {
    // Element-wise mean of the sorted index vectors, rounded half-up, then
    // collisions repaired to the nearest unused position (lower on ties).
    std::vector<bool> taken(static_cast<std::size_t>(site.seq_len), false);
    for (std::size_t pos = 0; pos < u; ++pos) {
      double total = 0;
      for (const Record* r : used) {
        total += static_cast<double>(r->indices[pos]);
      }
      const double mean_val = total / static_cast<double>(used.size());
      Index rounded = static_cast<Index>(std::floor(mean_val + 0.5));
      rounded = std::clamp<Index>(rounded, 0, site.seq_len - 1);
      Index chosen = -1;
      for (Index dist = 0; dist < site.seq_len; ++dist) {
        if (rounded - dist >= 0 && !taken[static_cast<std::size_t>(rounded - dist)]) {
          chosen = rounded - dist;
          break;
        }
        if (rounded + dist < site.seq_len &&
            !taken[static_cast<std::size_t>(rounded + dist)]) {
          chosen = rounded + dist;
          break;
        }
      }
      taken[static_cast<std::size_t>(chosen)] = true;
      out.push_back(chosen);
    }
    std::sort(out.begin(), out.end());
  }
  return out;
}

IndexList AttentionIndexMemory::aggregate(int layer_id, int head_id) const {
  const Site& site = site_at(layer_id, head_id, "aggregate");
  if (site.frozen_aggregate.has_value()) return *site.frozen_aggregate;
  return aggregate_records(site);
}

StabilityTable AttentionIndexMemory::stability_report() const {
  StabilityTable table;
  for (const auto& [key, site] : sites_) {
    std::map<int, std::set<Index>> per_epoch;
    for (const Record& r : site.records) {
      per_epoch[r.epoch].insert(r.indices.begin(), r.indices.end());
    }
    if (per_epoch.size() < 2) continue;
    auto it = per_epoch.begin();
    auto prev = it++;
    for (; it != per_epoch.end(); prev = it++) {
      const std::set<Index>& a = prev->second;
      const std::set<Index>& b = it->second;
      std::vector<Index> inter;
      std::set_intersection(a.begin(), a.end(), b.begin(), b.end(),
                            std::back_inserter(inter));
      const std::size_t uni = a.size() + b.size() - inter.size();
      table.push_back({key.first, key.second, prev->first, it->first,
                       uni == 0 ? 0.0
                                : static_cast<double>(inter.size()) /
                                      static_cast<double>(uni)});
    }
  }
  return table;
}

void AttentionIndexMemory::freeze() {
  if (frozen_) return;
  for (auto& [key, site] : sites_) {
    if (!site.records.empty() && !site.frozen_aggregate.has_value()) {
      site.frozen_aggregate = aggregate_records(site);
    }
  }
  frozen_ = true;
}

std::size_t AttentionIndexMemory::record_count(int layer_id, int head_id) const {
  return site_at(layer_id, head_id, "record_count").records.size();
}

std::vector<AttentionIndexMemory::RecordView> AttentionIndexMemory::records(
    int layer_id, int head_id) const {
  const Site& site = site_at(layer_id, head_id, "records");
  std::vector<RecordView> out;
  out.reserve(site.records.size());
  for (const Record& r : site.records) {
    out.push_back({r.epoch, r.iteration, &r.indices});
  }
  return out;
}

Index AttentionIndexMemory::site_u(int layer_id, int head_id) const {
  return site_at(layer_id, head_id, "site_u").u;
}

Index AttentionIndexMemory::site_seq_len(int layer_id, int head_id) const {
  return site_at(layer_id, head_id, "site_seq_len").seq_len;
}

std::vector<std::pair<int, int>> AttentionIndexMemory::site_keys() const {
  std::vector<std::pair<int, int>> keys;
  keys.reserve(sites_.size());
  for (const auto& [key, site] : sites_) keys.push_back(key);
  return keys;
}

std::vector<AttentionIndexMemory::AggregatedSite>
AttentionIndexMemory::aggregated_sites() const {
  std::vector<AggregatedSite> out;
  for (const auto& [key, site] : sites_) {
    if (site.records.empty() && !site.frozen_aggregate.has_value()) continue;
    out.push_back({key.first, key.second, site.seq_len, site.u,
                   aggregate(key.first, key.second)});
  }
  return out;
}

}  // namespace tsf
