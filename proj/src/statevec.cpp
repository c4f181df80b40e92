#include "asc/statevec.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <ostream>

namespace asc {
namespace {

constexpr std::uint8_t kFormatVersion = 1;

std::uint64_t tail_mask(std::size_t universe) {
  std::size_t r = universe & 63;
  return r == 0 ? ~std::uint64_t{0} : (std::uint64_t{1} << r) - 1;
}

void require_sizes(const StateVector& a, const StateVector& b) {
  if (a.size() != b.size())
    throw StructuralError("state vectors differ in memory size (" + std::to_string(a.memsize()) +
                          " vs " + std::to_string(b.memsize()) + ")");
}

void require_universe(const StateVector& z, const BitMask& m) {
  if (m.universe() != z.size())
    throw StructuralError("mask universe " + std::to_string(m.universe()) +
                          " does not match state size " + std::to_string(z.size()));
}

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b{};
  in.read(reinterpret_cast<char*>(b.data()), 8);
  if (!in) throw Error("truncated stream");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

void put_header(std::ostream& out, const char* magic, std::uint64_t memsize) {
  out.write(magic, 4);
  out.put(static_cast<char>(kFormatVersion));
  put_u64(out, memsize);
}

std::uint64_t get_header(std::istream& in, const char* magic) {
  char m[4];
  in.read(m, 4);
  if (!in || std::memcmp(m, magic, 4) != 0)
    throw Error(std::string("bad magic, expected ") + std::string(magic, 4));
  int v = in.get();
  if (v != kFormatVersion) throw Error("unsupported format version " + std::to_string(v));
  return get_u64(in);
}

}  // namespace

BitMask BitMask::full(std::size_t universe) {
  BitMask m(universe);
  std::fill(m.words_.begin(), m.words_.end(), ~std::uint64_t{0});
  if (!m.words_.empty()) m.words_.back() &= tail_mask(universe);
  return m;
}

void BitMask::set_range(std::size_t start, std::size_t len) {
  std::size_t end = start + len;
  while (start < end && (start & 63)) set(start++);
  while (start + 64 <= end) {
    words_[start >> 6] = ~std::uint64_t{0};
    start += 64;
  }
  while (start < end) set(start++);
}

std::size_t BitMask::count() const {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

bool BitMask::empty() const {
  return std::all_of(words_.begin(), words_.end(), [](std::uint64_t w) { return w == 0; });
}

void BitMask::require_same(const BitMask& o) const {
  if (universe_ != o.universe_)
    throw StructuralError("masks over different universes (" + std::to_string(universe_) +
                          " vs " + std::to_string(o.universe_) + ")");
}

BitMask& BitMask::operator|=(const BitMask& o) {
  require_same(o);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] |= o.words_[i];
  return *this;
}

BitMask& BitMask::operator&=(const BitMask& o) {
  require_same(o);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= o.words_[i];
  return *this;
}

BitMask& BitMask::subtract(const BitMask& o) {
  require_same(o);
  for (std::size_t i = 0; i < words_.size(); ++i) words_[i] &= ~o.words_[i];
  return *this;
}

BitMask BitMask::complement() const {
  BitMask m(universe_);
  for (std::size_t i = 0; i < words_.size(); ++i) m.words_[i] = ~words_[i];
  if (!m.words_.empty()) m.words_.back() &= tail_mask(universe_);
  return m;
}

std::string LiveSet::to_string() const {
  std::string s = "{";
  for (unsigned i = 0; i <= kFlagsSlot; ++i) {
    if (!contains(i)) continue;
    if (s.size() > 1) s += ",";
    s += i == kFlagsSlot ? std::string("flags") : "r" + std::to_string(i);
  }
  return s + "}";
}

BitMask mask_union(const BitMask& a, const BitMask& b) {
  BitMask m = a;
  m |= b;
  return m;
}

BitMask mask_intersection(const BitMask& a, const BitMask& b) {
  BitMask m = a;
  m &= b;
  return m;
}

std::size_t mask_count(const BitMask& a) { return a.bit_count(); }

BitMask register_mask(LiveSet live, std::size_t universe) {
  BitMask m(universe);
  for (unsigned s = 0; s <= kFlagsSlot; ++s)
    if (live.contains(s)) m.set_range(s * 8, 8);
  return m;
}

bool masked_eq(const StateVector& a, const StateVector& b, const BitMask& m) {
  require_sizes(a, b);
  require_universe(a, m);
  const auto& words = m.words();
  const std::uint8_t* pa = a.data();
  const std::uint8_t* pb = b.data();
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::uint64_t bits = words[w];
    if (bits == 0) continue;
    std::size_t base = w * 64;
    if (bits == ~std::uint64_t{0}) {
      if (std::memcmp(pa + base, pb + base, 64) != 0) return false;
      continue;
    }
    while (bits) {
      std::size_t i = base + static_cast<std::size_t>(std::countr_zero(bits));
      if (pa[i] != pb[i]) return false;
      bits &= bits - 1;
    }
  }
  return true;
}

StateVector fast_forward(const StateVector& z_m, const StateVector& z_s, const BitMask& m_w) {
  require_sizes(z_m, z_s);
  require_universe(z_m, m_w);
  StateVector z_t = z_m;
  const auto& words = m_w.words();
  std::uint8_t* pt = z_t.data();
  const std::uint8_t* ps = z_s.data();
  for (std::size_t w = 0; w < words.size(); ++w) {
    std::uint64_t bits = words[w];
    if (bits == 0) continue;
    std::size_t base = w * 64;
    if (bits == ~std::uint64_t{0}) {
      std::memcpy(pt + base, ps + base, 64);
      continue;
    }
    while (bits) {
      std::size_t i = base + static_cast<std::size_t>(std::countr_zero(bits));
      pt[i] = ps[i];
      bits &= bits - 1;
    }
  }
  z_t.ip = z_s.ip;
  return z_t;
}

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t fingerprint(const StateVector& z, LiveSet live) {
  std::uint64_t h = mix64(0x243f6a8885a308d3ULL ^ live.bits());
  for (unsigned s = 0; s <= kFlagsSlot; ++s) {
    if (!live.contains(s)) continue;
    h = mix64(h ^ z.slot(s)) + 0x9e3779b97f4a7c15ULL * (s + 1);
  }
  return h;
}

std::uint64_t state_digest(const StateVector& z) {
  std::uint64_t h = mix64(z.size() ^ (z.ip << 32));
  const std::uint8_t* p = z.data();
  std::size_t n = z.size();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    std::uint64_t v;
    std::memcpy(&v, p + i, 8);
    h = mix64(h ^ v) + i;
  }
  for (; i < n; ++i) h = mix64(h ^ p[i]) + i;
  return h;
}

void write_state(std::ostream& out, const StateVector& z) {
  put_header(out, "ASCV", z.memsize());
  out.write(reinterpret_cast<const char*>(z.data()), static_cast<std::streamsize>(z.size()));
  put_u64(out, z.ip);
  put_u64(out, z.icount);
}

StateVector read_state(std::istream& in) {
  StateVector z(get_header(in, "ASCV"));
  in.read(reinterpret_cast<char*>(z.data()), static_cast<std::streamsize>(z.size()));
  if (!in) throw Error("truncated state vector");
  z.ip = get_u64(in);
  z.icount = get_u64(in);
  return z;
}

void write_mask(std::ostream& out, const BitMask& m) {
  if (m.universe() < kMemOffset) throw StructuralError("mask universe smaller than register file");
  put_header(out, "ASCM", m.universe() - kMemOffset);
  std::vector<char> packed((m.universe() + 7) / 8, 0);
  m.for_each([&](std::size_t i) { packed[i >> 3] = static_cast<char>(packed[i >> 3] | (1 << (i & 7))); });
  out.write(packed.data(), static_cast<std::streamsize>(packed.size()));
}

BitMask read_mask(std::istream& in) {
  std::size_t universe = kMemOffset + get_header(in, "ASCM");
  std::vector<unsigned char> packed((universe + 7) / 8, 0);
  in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(packed.size()));
  if (!in) throw Error("truncated mask");
  BitMask m(universe);
  for (std::size_t i = 0; i < universe; ++i)
    if ((packed[i >> 3] >> (i & 7)) & 1) m.set(i);
  return m;
}

}  // namespace asc
