#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <deque>
#include <map>

#include "celu/error.hpp"
#include "celu/rng.hpp"
#include "celu/workset.hpp"

using namespace celu;

namespace {

CacheEntry entry_at(std::uint64_t id, std::uint64_t time) {
  CacheEntry e;
  e.batch_id = id;
  e.z_stale = Matrix(1, 1);
  e.dz_stale = Matrix(1, 1);
  e.insert_time = time;
  e.batch_indices = {0};
  return e;
}

}  // namespace

TEST_CASE("window eviction drops entries older than now - W + 1") {
  WorksetTable table(3, 5);
  CHECK(table.insert(entry_at(1, 1), 1).empty());
  CHECK(table.insert(entry_at(2, 2), 2).empty());
  CHECK(table.insert(entry_at(3, 3), 3).empty());
  const std::vector<CacheEntry> evicted = table.insert(entry_at(4, 4), 4);
  REQUIRE(evicted.size() == 1);
  CHECK(evicted[0].batch_id == 1);
  CHECK(table.batch_ids() == std::vector<std::uint64_t>{2, 3, 4});
}

TEST_CASE("fresh entries start unused; non-monotonic time is a logic error") {
  WorksetTable table(2, 3);
  table.insert(entry_at(10, 5), 5);
  CHECK(table.use_count_of(10) == 0);
  CHECK_THROWS_AS(table.insert(entry_at(11, 5), 5), Error);
  CHECK_THROWS_AS(table.insert(entry_at(12, 4), 4), Error);
  CHECK_THROWS_AS(table.insert(entry_at(13, 7), 6), Error);  // time/now mismatch
}

TEST_CASE("capacity one holds exactly the newest entry") {
  WorksetTable table(1, 4);
  for (std::uint64_t t = 1; t <= 5; ++t) {
    table.insert(entry_at(t, t), t);
    CHECK(table.size() == 1);
    CHECK(table.batch_ids() == std::vector<std::uint64_t>{t});
  }
}

TEST_CASE("round-robin schedule at W=3, R=3 drains b1,b2,b3 three times") {
  WorksetTable table(3, 3);
  table.insert(entry_at(1, 1), 1);
  table.insert(entry_at(2, 2), 2);
  table.insert(entry_at(3, 3), 3);

  std::vector<std::uint64_t> order;
  while (auto e = table.sample_next()) {
    order.push_back(e->batch_id);
    table.mark_used(e->batch_id);
  }
  CHECK(order == std::vector<std::uint64_t>{1, 2, 3, 1, 2, 3, 1, 2, 3});
  CHECK(table.size() == 0);
  CHECK(!table.sample_next().has_value());  // exhausted
}

TEST_CASE("single cached batch bubbles inside the W-1 window") {
  WorksetTable table(3, 5);
  table.insert(entry_at(1, 1), 1);
  auto first = table.sample_next();
  REQUIRE(first.has_value());
  CHECK(first->batch_id == 1);
  table.mark_used(1);
  CHECK(!table.sample_next().has_value());
  CHECK(!table.sample_next().has_value());
  // a new insertion unblocks sampling again (window is sample-based)
  table.insert(entry_at(2, 2), 2);
  auto second = table.sample_next();
  REQUIRE(second.has_value());
  CHECK(second->batch_id == 2);
}

TEST_CASE("empty table samples none") {
  WorksetTable table(4, 2);
  CHECK(!table.sample_next().has_value());
}

TEST_CASE("mark_used increments, caps at R, and leaves other clocks alone") {
  WorksetTable table(4, 2);
  table.insert(entry_at(1, 1), 1);
  table.insert(entry_at(2, 2), 2);
  table.mark_used(1);
  CHECK(table.use_count_of(1) == 1);
  CHECK(table.use_count_of(2) == 0);
  table.mark_used(1);
  CHECK(!table.use_count_of(1).has_value());  // dropped at the cap
  CHECK(table.use_count_of(2) == 0);
  CHECK_THROWS_AS(table.mark_used(99), Error);
}

TEST_CASE("zero max_uses drops entries on insertion") {
  WorksetTable table(2, 0);
  table.insert(entry_at(1, 1), 1);
  CHECK(table.size() == 0);
  CHECK(!table.take_next().has_value());
}

TEST_CASE("take_next equals sample_next plus mark_used") {
  WorksetTable a(3, 2), b(3, 2);
  for (std::uint64_t t = 1; t <= 3; ++t) {
    a.insert(entry_at(t, t), t);
    b.insert(entry_at(t, t), t);
  }
  while (true) {
    auto ea = a.take_next();
    auto eb = b.sample_next();
    if (eb) b.mark_used(eb->batch_id);
    CHECK(ea.has_value() == eb.has_value());
    if (!ea) break;
    CHECK(ea->batch_id == eb->batch_id);
  }
}

TEST_CASE("fuzzed op sequences never violate the table invariants") {
  // Reference bookkeeping mirrors the contract: occupancy <= W, staleness
  // < W, use counts <= R, and any W consecutive samples are distinct.
  Rng rng(4242);
  for (int round = 0; round < 10; ++round) {
    const std::size_t capacity = 1 + rng.below(4);
    const int max_uses = 1 + static_cast<int>(rng.below(4));
    WorksetTable table(capacity, max_uses);
    std::uint64_t now = 0;
    std::deque<std::uint64_t> recent_samples;
    std::map<std::uint64_t, int> live_uses;
    std::map<std::uint64_t, std::uint64_t> insert_times;

    for (int op = 0; op < 1000; ++op) {
      if (rng.below(2) == 0) {
        now += 1;
        table.insert(entry_at(now, now), now);
        live_uses[now] = 0;
        insert_times[now] = now;
        for (auto it = live_uses.begin(); it != live_uses.end();) {
          if (insert_times[it->first] + capacity <= now) {
            it = live_uses.erase(it);
          } else {
            ++it;
          }
        }
      } else {
        auto sampled = table.take_next();
        if (sampled) {
          // eligibility: alive, unused quota, not among last W-1 samples
          REQUIRE(live_uses.count(sampled->batch_id) == 1);
          CHECK(live_uses[sampled->batch_id] < max_uses);
          CHECK(std::find(recent_samples.begin(), recent_samples.end(),
                          sampled->batch_id) == recent_samples.end());
          // staleness bound: now - insert_time < W
          CHECK(now - sampled->insert_time < capacity);
          CHECK(sampled->use_count < max_uses);

          live_uses[sampled->batch_id] += 1;
          if (live_uses[sampled->batch_id] >= max_uses) {
            live_uses.erase(sampled->batch_id);
          }
          recent_samples.push_back(sampled->batch_id);
          while (recent_samples.size() > capacity - 1) recent_samples.pop_front();
        }
      }
      CHECK(table.size() <= capacity);
      for (std::uint64_t id : table.batch_ids()) {
        CHECK(*table.use_count_of(id) < max_uses);
        CHECK(insert_times[id] + capacity > now);
      }
    }
  }
}

TEST_CASE("any W consecutive successful samples are distinct") {
  Rng rng(99);
  WorksetTable table(4, 3);
  std::uint64_t now = 0;
  std::deque<std::uint64_t> window;
  for (int op = 0; op < 500; ++op) {
    if (rng.below(3) == 0) {
      now += 1;
      table.insert(entry_at(now, now), now);
    } else if (auto e = table.take_next()) {
      window.push_back(e->batch_id);
      if (window.size() > 4) window.pop_front();
      for (std::size_t i = 0; i < window.size(); ++i) {
        for (std::size_t j = i + 1; j < window.size(); ++j) {
          CHECK(window[i] != window[j]);
        }
      }
    }
  }
}

TEST_CASE("fairness: with ample rounds each batch is used exactly R times") {
  // Steady-state drain of R uses per round keeps supply equal to demand.
  const int max_uses = 2;
  WorksetTable table(3, max_uses);
  std::map<std::uint64_t, int> uses;
  for (std::uint64_t t = 1; t <= 60; ++t) {
    table.insert(entry_at(t, t), t);
    for (int j = 0; j < max_uses; ++j) {
      auto e = table.take_next();
      if (!e) break;
      uses[e->batch_id] += 1;
    }
  }
  // Ignore the warm-up and tail; every batch in the middle gets exactly R.
  for (std::uint64_t id = 5; id <= 50; ++id) {
    CHECK(uses[id] == max_uses);
  }
}

TEST_CASE("conservation: inserted entries leave by exactly one route") {
  Rng rng(31337);
  WorksetTable table(3, 2);
  std::uint64_t now = 0;
  std::size_t inserted = 0, window_evicted = 0, cap_dropped = 0;
  std::map<std::uint64_t, int> live;
  for (int op = 0; op < 600; ++op) {
    if (rng.below(2) == 0) {
      now += 1;
      window_evicted += table.insert(entry_at(now, now), now).size();
      inserted += 1;
    } else if (auto e = table.take_next()) {
      if (e->use_count + 1 >= 2) cap_dropped += 1;
    }
  }
  CHECK(inserted == window_evicted + cap_dropped + table.size());
  const WorksetStats stats = table.stats();
  CHECK(stats.inserts == inserted);
  CHECK(stats.window_evictions == window_evicted);
  CHECK(stats.cap_drops == cap_dropped);
}
