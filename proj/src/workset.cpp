#include "celu/workset.hpp"

#include <algorithm>
#include <string>

#include "celu/error.hpp"

namespace celu {

WorksetTable::WorksetTable(std::size_t capacity, int max_uses)
    : capacity_(capacity), max_uses_(max_uses) {
  if (capacity == 0) raise(ErrorKind::config, "WorksetTable: capacity must be >= 1");
  if (max_uses < 0) raise(ErrorKind::config, "WorksetTable: max_uses must be >= 0");
}

std::vector<CacheEntry> WorksetTable::insert(CacheEntry entry, std::uint64_t now) {
  std::lock_guard<std::mutex> lock(mu_);
  if (entry.insert_time != now) {
    raise(ErrorKind::logic, "workset insert: entry.insert_time " +
                                std::to_string(entry.insert_time) +
                                " does not equal now " + std::to_string(now));
  }
  if (last_time_ && now <= *last_time_) {
    raise(ErrorKind::logic, "workset insert: non-monotonic time " +
                                std::to_string(now) + " after " +
                                std::to_string(*last_time_));
  }
  last_time_ = now;
  stats_.inserts += 1;
  if (entry.use_count >= max_uses_) {
    // No quota left; never becomes eligible, drop eagerly.
    stats_.cap_drops += 1;
    return {};
  }
  entries_.push_back(std::move(entry));

  std::vector<CacheEntry> evicted;
  // Discard batches inserted before now - W + 1.
  const std::uint64_t horizon = now >= capacity_ - 1 ? now - capacity_ + 1 : 0;
  while (!entries_.empty() && entries_.front().insert_time < horizon) {
    stats_.window_evictions += 1;
    stats_.evicted_use_counts.push_back(entries_.front().use_count);
    evicted.push_back(std::move(entries_.front()));
    entries_.pop_front();
  }
  return evicted;
}

std::optional<CacheEntry> WorksetTable::sample_next_locked() {
  for (const CacheEntry& entry : entries_) {
    if (entry.use_count >= max_uses_) continue;
    if (std::find(recent_.begin(), recent_.end(), entry.batch_id) != recent_.end()) {
      continue;
    }
    recent_.push_back(entry.batch_id);
    while (recent_.size() > capacity_ - 1) recent_.pop_front();
    stats_.samples += 1;
    return entry;
  }
  stats_.bubbles += 1;
  return std::nullopt;
}

std::optional<CacheEntry> WorksetTable::sample_next() {
  std::lock_guard<std::mutex> lock(mu_);
  return sample_next_locked();
}

void WorksetTable::mark_used_locked(std::uint64_t batch_id) {
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (it->batch_id == batch_id) {
      it->use_count += 1;
      if (it->use_count >= max_uses_) {
        stats_.cap_drops += 1;
        entries_.erase(it);
      }
      return;
    }
  }
  raise(ErrorKind::logic, "workset mark_used: unknown batch id " + std::to_string(batch_id));
}

void WorksetTable::mark_used(std::uint64_t batch_id) {
  std::lock_guard<std::mutex> lock(mu_);
  mark_used_locked(batch_id);
}

std::optional<CacheEntry> WorksetTable::take_next() {
  std::lock_guard<std::mutex> lock(mu_);
  std::optional<CacheEntry> entry = sample_next_locked();
  if (entry) mark_used_locked(entry->batch_id);
  return entry;
}

std::size_t WorksetTable::size() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

WorksetStats WorksetTable::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  return stats_;
}

std::vector<std::uint64_t> WorksetTable::batch_ids() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<std::uint64_t> ids;
  ids.reserve(entries_.size());
  for (const CacheEntry& e : entries_) ids.push_back(e.batch_id);
  return ids;
}

std::optional<int> WorksetTable::use_count_of(std::uint64_t batch_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  for (const CacheEntry& e : entries_) {
    if (e.batch_id == batch_id) return e.use_count;
  }
  return std::nullopt;
}

}  // namespace celu
