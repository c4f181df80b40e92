#include "asc/compcache.hpp"

#include <fstream>
#include <mutex>

#include <json.hpp>

namespace asc {
namespace {

void put_u64(std::ostream& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_u64(std::istream& in) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    int c = in.get();
    if (c == EOF) throw Error("truncated cache dump");
    v |= std::uint64_t(c & 0xff) << (8 * i);
  }
  return v;
}

}  // namespace

Cache::Cache(LiveSet live, std::size_t max_entries, std::uint64_t key_mask)
    : live_(live), max_entries_(max_entries), key_mask_(key_mask) {}

std::optional<std::size_t> Cache::add(CacheEntry e) {
  std::unique_lock lock(mu_);
  return add_locked(std::move(e));
}

std::optional<std::size_t> Cache::add_locked(CacheEntry e) {
  ++stats_.adds;
  if (auto it = buckets_.find(e.key); it != buckets_.end()) {
    for (std::size_t id : it->second) {
      const CacheEntry& q = entries_[id];
      if (alive_[id] && q.timestep_span == e.timestep_span && masked_eq(e.z_p, q.z_p, q.m_r)) {
        ++stats_.duplicates;
        return std::nullopt;
      }
    }
    if (e.stitched) {
      // A longer chain from the same start makes shorter stitched ones redundant.
      for (std::size_t id : it->second) {
        const CacheEntry& q = entries_[id];
        if (alive_[id] && q.stitched && q.timestep_span < e.timestep_span && masked_eq(e.z_p, q.z_p, q.m_r))
          retire(id);
      }
    }
  }
  if (max_entries_ != 0 && live_entries() >= max_entries_) {
    ++stats_.rejected_full;
    return std::nullopt;
  }
  std::size_t id = entries_.size();
  if (e.parts.empty()) e.parts.push_back(id);
  std::uint64_t succ = key_of(e.z_s);
  buckets_[e.key].push_back(id);
  successors_[succ].push_back(id);
  entries_.push_back(std::move(e));
  alive_.push_back(true);
  frontier_.push_back(Cursor{id, 0, 0, std::nullopt});
  return id;
}

void Cache::retire(std::size_t id) {
  alive_[id] = false;
  ++stats_.superseded;
  CacheEntry& q = entries_[id];
  q.z_p = StateVector();
  q.z_s = StateVector();
  q.m_r = BitMask();
  q.m_w = BitMask();
}

std::optional<CacheHit> Cache::lookup(const StateVector& z_m) {
  std::shared_lock lock(mu_);
  auto it = buckets_.find(key_of(z_m));
  std::optional<std::size_t> best;
  if (it != buckets_.end()) {
    for (std::size_t id : it->second) {
      if (!alive_[id]) continue;
      const CacheEntry& q = entries_[id];
      if (!masked_eq(z_m, q.z_p, q.m_r)) {
        ++failed_;
        continue;
      }
      if (!best || q.timestep_span > entries_[*best].timestep_span) best = id;
    }
  }
  if (!best) {
    ++misses_;
    return std::nullopt;
  }
  ++hits_;
  const CacheEntry& q = entries_[*best];
  return CacheHit{q.z_s, q.m_w, q.icount_delta, q.timestep_span, q.origin_timestep, *best, q.parts};
}

CacheEntry Cache::merge(const CacheEntry& x, const CacheEntry& y) const {
  CacheEntry m;
  m.z_p = x.z_p;
  m.z_s = fast_forward(x.z_s, y.z_s, y.m_w);
  m.m_r = mask_union(x.m_r, y.m_r);
  m.m_w = mask_union(x.m_w, y.m_w);
  m.key = x.key;
  m.icount_delta = x.icount_delta + y.icount_delta;
  m.timestep_span = x.timestep_span + y.timestep_span;
  m.origin_timestep = x.origin_timestep;
  m.stitched = true;
  m.parts = x.parts;
  m.parts.insert(m.parts.end(), y.parts.begin(), y.parts.end());
  return m;
}

bool Cache::covered(const CacheEntry& x, std::uint64_t span) const {
  auto it = buckets_.find(x.key);
  if (it == buckets_.end()) return false;
  for (std::size_t id : it->second) {
    const CacheEntry& q = entries_[id];
    if (alive_[id] && q.timestep_span >= span && masked_eq(x.z_p, q.z_p, q.m_r)) return true;
  }
  return false;
}

std::size_t Cache::stitch_pass(std::size_t budget) {
  std::unique_lock lock(mu_);
  std::size_t merges = 0;
  std::size_t checks = 0;
  // Newest entries first: they sit next to where the main process is heading.
  while (!frontier_.empty() && checks < budget) {
    Cursor c = frontier_.back();
    frontier_.pop_back();
    if (!alive_[c.id]) continue;
    if (c.phase == 0) {
      // The new entry as the first half: extend it by its longest successor.
      const CacheEntry& x = entries_[c.id];
      auto it = buckets_.find(key_of(x.z_s));
      std::size_t n = it == buckets_.end() ? 0 : it->second.size();
      for (; c.pos < n && checks < budget; ++c.pos) {
        std::size_t yid = it->second[c.pos];
        if (yid == c.id || !alive_[yid]) continue;
        const CacheEntry& y = entries_[yid];
        ++checks;
        if (masked_eq(x.z_s, y.z_p, y.m_r) &&
            (!c.best || y.timestep_span > entries_[*c.best].timestep_span))
          c.best = yid;
      }
      if (c.pos < n) {
        frontier_.push_back(c);
        break;
      }
      if (c.best) {
        const CacheEntry& y = entries_[*c.best];
        if (!covered(x, x.timestep_span + y.timestep_span) && add_locked(merge(x, y))) ++merges;
      }
      c.phase = 1;
      c.pos = 0;
      frontier_.push_back(c);
      continue;
    }
    // The new entry as the second half: prepend every verified predecessor.
    std::size_t id = c.id;
    while (alive_[id] && checks < budget) {
      auto it = successors_.find(entries_[id].key);
      if (it == successors_.end() || c.pos >= it->second.size()) break;
      std::size_t xid = it->second[c.pos++];
      if (xid == id || !alive_[xid]) continue;
      ++checks;
      const CacheEntry& x = entries_[xid];
      const CacheEntry& y = entries_[id];
      if (masked_eq(x.z_s, y.z_p, y.m_r) && !covered(x, x.timestep_span + y.timestep_span) &&
          add_locked(merge(x, y)))
        ++merges;
    }
    if (checks >= budget && alive_[id]) {
      auto it = successors_.find(entries_[id].key);
      if (it != successors_.end() && c.pos < it->second.size()) {
        frontier_.push_back(c);
        break;
      }
    }
  }
  stats_.stitches += merges;
  stats_.stitch_checks += checks;
  return merges;
}

std::size_t Cache::size() const {
  std::shared_lock lock(mu_);
  return entries_.size();
}

std::size_t Cache::live_entries() const {
  std::size_t n = 0;
  for (bool a : alive_) n += a;
  return n;
}

CacheStats Cache::stats() const {
  std::shared_lock lock(mu_);
  CacheStats s = stats_;
  s.hits = hits_;
  s.misses = misses_;
  s.verifications_failed = failed_;
  return s;
}

void Cache::write_index(std::ostream& out) const {
  std::shared_lock lock(mu_);
  for (std::size_t id = 0; id < entries_.size(); ++id) {
    if (!alive_[id]) continue;
    const CacheEntry& e = entries_[id];
    nlohmann::json j = {{"id", id},
                        {"key", e.key},
                        {"read_bits", e.m_r.bit_count()},
                        {"write_bits", e.m_w.bit_count()},
                        {"icount_delta", e.icount_delta},
                        {"timestep_span", e.timestep_span},
                        {"origin_timestep", e.origin_timestep},
                        {"stitched", e.stitched}};
    out << j.dump() << "\n";
  }
}

void Cache::dump(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  {
    std::ofstream idx(dir / "index.jsonl");
    write_index(idx);
  }
  std::shared_lock lock(mu_);
  std::ofstream out(dir / "entries.bin", std::ios::binary);
  out.write("ASCC", 4);
  out.put(1);
  std::uint64_t n = 0;
  for (bool a : alive_) n += a;
  put_u64(out, n);
  for (std::size_t id = 0; id < entries_.size(); ++id) {
    if (!alive_[id]) continue;
    const CacheEntry& e = entries_[id];
    put_u64(out, e.key);
    put_u64(out, e.icount_delta);
    put_u64(out, e.timestep_span);
    put_u64(out, e.origin_timestep);
    out.put(e.stitched ? 1 : 0);
    write_state(out, e.z_p);
    write_state(out, e.z_s);
    write_mask(out, e.m_r);
    write_mask(out, e.m_w);
  }
  if (!out) throw Error("failed writing cache dump to " + dir.string());
}

std::unique_ptr<Cache> Cache::load(const std::filesystem::path& dir, LiveSet live) {
  std::ifstream in(dir / "entries.bin", std::ios::binary);
  if (!in) throw Error("cannot open cache dump in " + dir.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "ASCC" || in.get() != 1) throw Error("not a cache dump");
  auto cache = std::make_unique<Cache>(live);
  std::uint64_t n = get_u64(in);
  for (std::uint64_t i = 0; i < n; ++i) {
    CacheEntry e;
    e.key = get_u64(in);
    e.icount_delta = get_u64(in);
    e.timestep_span = get_u64(in);
    e.origin_timestep = get_u64(in);
    e.stitched = in.get() == 1;
    e.z_p = read_state(in);
    e.z_s = read_state(in);
    e.m_r = read_mask(in);
    e.m_w = read_mask(in);
    cache->add(std::move(e));
  }
  return cache;
}

}  // namespace asc
