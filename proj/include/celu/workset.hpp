#ifndef CELU_WORKSET_HPP
#define CELU_WORKSET_HPP

#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <vector>

#include "celu/matrix.hpp"

namespace celu {

// One cached exchange: the stale forward activations and backward
// derivatives of a mini-batch, plus its two clocks (insertion time and
// use count) and the dataset indices the batch was drawn from.
struct CacheEntry {
  std::uint64_t batch_id = 0;
  Matrix z_stale;
  Matrix dz_stale;
  std::uint64_t insert_time = 0;
  int use_count = 0;
  std::vector<std::size_t> batch_indices;
};

struct WorksetStats {
  std::size_t inserts = 0;
  std::size_t window_evictions = 0;
  std::size_t cap_drops = 0;
  std::size_t samples = 0;
  std::size_t bubbles = 0;
  // use_count values carried by window-evicted entries, for metrics
  std::vector<int> evicted_use_counts;
};

// Bounded cache of the last W exchanged batches. Entries are dropped when
// their insertion time falls out of the [now - W + 1, now] window or when
// they reach max_uses local updates. Sampling is round-robin: oldest
// eligible entry first, and a batch id cannot repeat within any W
// consecutive samples. All operations are atomic with respect to each
// other, so one communication worker and one local worker may run
// concurrently; single-threaded use is the deterministic reference.
class WorksetTable {
 public:
  WorksetTable(std::size_t capacity, int max_uses);

  // Appends the entry (entry.insert_time must equal now, and now must be
  // strictly increasing across calls), then applies the time-window
  // eviction. Returns the window-evicted entries. Entries whose use quota
  // is already exhausted (max_uses == 0) are dropped immediately.
  std::vector<CacheEntry> insert(CacheEntry entry, std::uint64_t now);

  // Oldest-inserted eligible entry, where eligible means use_count below
  // the cap and batch id absent from the last W-1 samples. Appends the
  // choice to the recent-sample window. Empty result is a bubble.
  std::optional<CacheEntry> sample_next();

  // use_count += 1; the entry is removed once it reaches max_uses.
  // Unknown ids are a logic error.
  void mark_used(std::uint64_t batch_id);

  // sample_next + mark_used under one lock; what the training drivers use.
  std::optional<CacheEntry> take_next();

  std::size_t size() const;
  std::size_t capacity() const { return capacity_; }
  int max_uses() const { return max_uses_; }
  WorksetStats stats() const;

  // Snapshots for tests.
  std::vector<std::uint64_t> batch_ids() const;
  std::optional<int> use_count_of(std::uint64_t batch_id) const;

 private:
  std::optional<CacheEntry> sample_next_locked();
  void mark_used_locked(std::uint64_t batch_id);

  std::size_t capacity_;
  int max_uses_;
  std::deque<CacheEntry> entries_;         // ordered by insert_time
  std::deque<std::uint64_t> recent_;       // last W-1 sampled batch ids
  std::optional<std::uint64_t> last_time_;
  WorksetStats stats_;
  mutable std::mutex mu_;
};

}  // namespace celu

#endif  // CELU_WORKSET_HPP
