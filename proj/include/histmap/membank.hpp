#pragma once

// Memory-bank retention and retrieval policies.
//
// The self-sorting bank keeps the K confident entries that are most
// dissimilar to the rest of the candidate set and samples memories with
// probability proportional to their (clamped) cosine similarity to the
// query. The FIFO bank keeps the K most recent entries.

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "histmap/error.hpp"
#include "histmap/rng.hpp"

namespace histmap {

using Vec = std::vector<double>;

enum class BankPolicy { self_sorting, fifo };
enum class RetrieveMode { weighted_sample, top_k, recent_k };

inline constexpr double kSimilarityFloor = 1e-6;

double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// D_i = sum over j != i of (1 - cos(v_i, v_j)). Each D_i is summed over its
/// terms in ascending order so that identical vectors get bit-identical scores.
std::vector<double> total_dissimilarity(std::span<const Vec> candidates);

/// Indices (ascending tick order) of the `capacity` candidates with the highest
/// total dissimilarity, older tick first on equal scores.
std::vector<size_t> select_most_dissimilar(std::span<const Vec> pooled, std::span<const uint64_t> ticks,
                                           size_t capacity);

/// Normalized max(cos(query, v_i), floor) over the given vectors.
std::vector<double> retrieval_probabilities(std::span<const Vec> pooled, std::span<const double> query,
                                            double floor = kSimilarityFloor);

/// Draws min(k, n) distinct indices, each step proportional to the remaining weights.
std::vector<size_t> sample_without_replacement(std::span<const double> weights, size_t k, Rng& rng);

template <typename Payload>
struct MemoryEntry {
  Payload tokens{};
  Vec pooled;  // unit norm
  double confidence = 0.0;
  int source_index = 0;
  uint64_t insertion_tick = 0;
};

template <typename Payload>
class MemoryBank {
 public:
  using Entry = MemoryEntry<Payload>;

  MemoryBank(BankPolicy policy, size_t capacity) : policy_(policy), capacity_(capacity) {
    require(capacity >= 1, "memory bank capacity must be >= 1");
  }

  BankPolicy policy() const noexcept { return policy_; }
  size_t capacity() const noexcept { return capacity_; }
  size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Confidence-gated self-sorting update. Returns true if the candidate was kept.
  bool update_self_sorting(Entry candidate, double conf_threshold) {
    require(policy_ == BankPolicy::self_sorting, "update_self_sorting on a FIFO bank");
    if (!(candidate.confidence > conf_threshold)) return false;
    candidate.insertion_tick = next_tick_++;
    entries_.push_back(std::move(candidate));
    if (entries_.size() <= capacity_) return true;

    std::vector<Vec> pooled;
    std::vector<uint64_t> ticks;
    for (const auto& e : entries_) {
      pooled.push_back(e.pooled);
      ticks.push_back(e.insertion_tick);
    }
    const auto keep = select_most_dissimilar(pooled, ticks, capacity_);
    std::vector<Entry> kept;
    kept.reserve(keep.size());
    bool candidate_kept = false;
    for (size_t i : keep) {
      candidate_kept |= i + 1 == entries_.size();
      kept.push_back(std::move(entries_[i]));
    }
    entries_ = std::move(kept);
    return candidate_kept;
  }

  void update_fifo(Entry candidate) {
    require(policy_ == BankPolicy::fifo, "update_fifo on a self-sorting bank");
    candidate.insertion_tick = next_tick_++;
    entries_.push_back(std::move(candidate));
    while (entries_.size() > capacity_) entries_.erase(entries_.begin());
  }

  /// Policy-appropriate update: FIFO appends, self-sorting is gated.
  bool update(Entry candidate, double conf_threshold) {
    if (policy_ == BankPolicy::fifo) {
      update_fifo(std::move(candidate));
      return true;
    }
    return update_self_sorting(std::move(candidate), conf_threshold);
  }

  /// Up to k entries, returned in insertion order. An empty bank yields nothing.
  std::vector<Entry> retrieve(std::span<const double> query, size_t k, RetrieveMode mode, Rng& rng) const {
    require(k >= 1, "retrieve: k must be >= 1");
    if (entries_.empty()) return {};
    std::vector<size_t> picked;
    const size_t n = entries_.size();
    if (k >= n) {
      for (size_t i = 0; i < n; ++i) picked.push_back(i);
    } else if (mode == RetrieveMode::recent_k) {
      for (size_t i = n - k; i < n; ++i) picked.push_back(i);
    } else {
      std::vector<Vec> pooled;
      for (const auto& e : entries_) pooled.push_back(e.pooled);
      if (mode == RetrieveMode::weighted_sample) {
        picked = sample_without_replacement(retrieval_probabilities(pooled, query), k, rng);
      } else {
        std::vector<double> sims(n);
        for (size_t i = 0; i < n; ++i) sims[i] = cosine_similarity(query, pooled[i]);
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return sims[a] > sims[b]; });
        picked.assign(order.begin(), order.begin() + static_cast<long>(k));
      }
      std::sort(picked.begin(), picked.end());
    }
    std::vector<Entry> out;
    out.reserve(picked.size());
    for (size_t i : picked) out.push_back(entries_[i]);
    return out;
  }

 private:
  BankPolicy policy_;
  size_t capacity_;
  uint64_t next_tick_ = 0;
  std::vector<Entry> entries_;  // ascending insertion_tick
};

}  // namespace histmap
