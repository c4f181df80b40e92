#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

#include "asc/statevec.hpp"

namespace asc {

struct CacheEntry {
  StateVector z_p;
  StateVector z_s;
  BitMask m_r;
  BitMask m_w;
  std::uint64_t key = 0;
  std::uint64_t icount_delta = 0;
  std::uint64_t timestep_span = 1;
  // Timestep z_p was predicted for (0 if unknown); lets the engine count reuse.
  std::uint64_t origin_timestep = 0;
  bool stitched = false;
  // Ids of the unstitched entries this one is composed of (set on insertion).
  std::vector<std::size_t> parts;
};

struct CacheHit {
  StateVector z_s;
  BitMask m_w;
  std::uint64_t icount_delta;
  std::uint64_t timestep_span;
  std::uint64_t origin_timestep;
  std::size_t entry_id;
  std::vector<std::size_t> parts;
};

struct CacheStats {
  std::uint64_t adds = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t rejected_full = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t verifications_failed = 0;
  std::uint64_t stitches = 0;
  std::uint64_t stitch_checks = 0;
  std::uint64_t superseded = 0;
};

// Mask-verified cache keyed by live-register fingerprints. One coarse lock:
// lookups share it, mutations take it exclusively.
class Cache {
 public:
  // key_mask is ANDed into every fingerprint; tests use 0 to force collisions.
  explicit Cache(LiveSet live, std::size_t max_entries = 0, std::uint64_t key_mask = ~std::uint64_t{0});

  std::uint64_t key_of(const StateVector& z) const { return fingerprint(z, live_) & key_mask_; }
  LiveSet live() const { return live_; }

  // Returns the new entry's id, or nullopt when it was dropped as a duplicate
  // or the cache is full.
  std::optional<std::size_t> add(CacheEntry e);
  // Among verified matches, the one spanning the most timesteps wins; ties go
  // to the earliest inserted.
  std::optional<CacheHit> lookup(const StateVector& z_m);
  // Examines at most `budget` candidate pairs; returns the number of merges.
  std::size_t stitch_pass(std::size_t budget);

  std::size_t size() const;
  std::size_t live_entries() const;
  CacheStats stats() const;
  const CacheEntry& entry(std::size_t id) const { return entries_.at(id); }
  bool alive(std::size_t id) const { return alive_.at(id); }

  // JSON lines: one object per entry with key, mask bit counts, icount_delta.
  void write_index(std::ostream& out) const;
  void dump(const std::filesystem::path& dir) const;
  static std::unique_ptr<Cache> load(const std::filesystem::path& dir, LiveSet live);

 private:
  struct Cursor {
    std::size_t id;
    int phase = 0;
    std::size_t pos = 0;
    std::optional<std::size_t> best;
  };

  std::optional<std::size_t> add_locked(CacheEntry e);
  CacheEntry merge(const CacheEntry& x, const CacheEntry& y) const;
  bool covered(const CacheEntry& x, std::uint64_t span) const;
  void retire(std::size_t id);

  LiveSet live_;
  std::size_t max_entries_;
  std::uint64_t key_mask_;

  mutable std::shared_mutex mu_;
  std::deque<CacheEntry> entries_;
  std::vector<bool> alive_;
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> buckets_;
  // Entries grouped by the fingerprint of their speculated state, for stitching.
  std::unordered_map<std::uint64_t, std::vector<std::size_t>> successors_;
  std::deque<Cursor> frontier_;

  CacheStats stats_;
  std::atomic<std::uint64_t> hits_{0};
  std::atomic<std::uint64_t> misses_{0};
  std::atomic<std::uint64_t> failed_{0};
};

}  // namespace asc
