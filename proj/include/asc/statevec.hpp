#pragma once

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "asc/error.hpp"

namespace asc {

static_assert(std::endian::native == std::endian::little,
              "state linearization assumes a little-endian host");

// Linearized state space: r0..r7 (8 bytes each), the flag word, then memory.
inline constexpr std::size_t kNumRegs = 8;
inline constexpr std::size_t kFlagsOffset = 64;
inline constexpr std::size_t kMemOffset = 72;
// LiveSet slot that stands for the flag word.
inline constexpr unsigned kFlagsSlot = 8;

class StateVector {
 public:
  StateVector() : bytes_(kMemOffset, 0) {}
  explicit StateVector(std::size_t memsize) : bytes_(kMemOffset + memsize, 0) {}

  std::size_t memsize() const { return bytes_.size() - kMemOffset; }
  // Number of bytes in the linearized state space.
  std::size_t size() const { return bytes_.size(); }

  std::uint64_t reg(unsigned r) const { return load64(r * 8); }
  void set_reg(unsigned r, std::uint64_t v) { store64(r * 8, v); }
  std::uint64_t flags() const { return load64(kFlagsOffset); }
  void set_flags(std::uint64_t v) { store64(kFlagsOffset, v); }
  // Register or flag word by LiveSet slot.
  std::uint64_t slot(unsigned s) const { return load64(s * 8); }

  std::uint8_t* mem() { return bytes_.data() + kMemOffset; }
  const std::uint8_t* mem() const { return bytes_.data() + kMemOffset; }
  std::span<std::uint8_t> memory() { return {mem(), memsize()}; }
  std::span<const std::uint8_t> memory() const { return {mem(), memsize()}; }

  std::uint64_t load_mem64(std::size_t addr) const { return load64(kMemOffset + addr); }
  void store_mem64(std::size_t addr, std::uint64_t v) { store64(kMemOffset + addr, v); }

  std::uint8_t* data() { return bytes_.data(); }
  const std::uint8_t* data() const { return bytes_.data(); }
  std::uint8_t byte(std::size_t i) const { return bytes_[i]; }
  void set_byte(std::size_t i, std::uint8_t v) { bytes_[i] = v; }

  // Registers, flags, memory and ip; icount is accounting only.
  bool same_state(const StateVector& o) const { return ip == o.ip && bytes_ == o.bytes_; }
  bool operator==(const StateVector& o) const {
    return ip == o.ip && icount == o.icount && bytes_ == o.bytes_;
  }

  std::uint64_t ip = 0;
  std::uint64_t icount = 0;

 private:
  std::uint64_t load64(std::size_t off) const {
    std::uint64_t v;
    std::memcpy(&v, bytes_.data() + off, 8);
    return v;
  }
  void store64(std::size_t off, std::uint64_t v) { std::memcpy(bytes_.data() + off, &v, 8); }

  std::vector<std::uint8_t> bytes_;
};

// Byte-granular set over the linearized state space.
class BitMask {
 public:
  BitMask() = default;
  explicit BitMask(std::size_t universe) : universe_(universe), words_((universe + 63) / 64, 0) {}
  static BitMask full(std::size_t universe);

  std::size_t universe() const { return universe_; }

  bool test(std::size_t i) const { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i) { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  void reset(std::size_t i) { words_[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
  void set_range(std::size_t start, std::size_t len);
  void clear() { std::fill(words_.begin(), words_.end(), 0); }

  // Number of selected bytes.
  std::size_t count() const;
  std::size_t bit_count() const { return count() * 8; }
  bool empty() const;

  BitMask& operator|=(const BitMask& o);
  BitMask& operator&=(const BitMask& o);
  BitMask& subtract(const BitMask& o);
  BitMask complement() const;
  bool operator==(const BitMask& o) const = default;

  template <class F>
  void for_each(F&& f) const {
    for (std::size_t w = 0; w < words_.size(); ++w) {
      std::uint64_t bits = words_[w];
      while (bits) {
        f(w * 64 + static_cast<std::size_t>(std::countr_zero(bits)));
        bits &= bits - 1;
      }
    }
  }

  const std::vector<std::uint64_t>& words() const { return words_; }
  std::uint64_t* word_data() { return words_.data(); }

 private:
  void require_same(const BitMask& o) const;

  std::size_t universe_ = 0;
  std::vector<std::uint64_t> words_;
};

// Slots 0..7 are r0..r7, slot 8 is the flag word.
class LiveSet {
 public:
  constexpr LiveSet() = default;
  constexpr explicit LiveSet(std::uint16_t bits) : bits_(bits & 0x1ff) {}

  constexpr bool contains(unsigned s) const { return (bits_ >> s) & 1u; }
  constexpr void insert(unsigned s) { bits_ |= static_cast<std::uint16_t>(1u << s); }
  constexpr void erase(unsigned s) { bits_ &= static_cast<std::uint16_t>(~(1u << s)); }
  constexpr bool empty() const { return bits_ == 0; }
  constexpr std::uint16_t bits() const { return bits_; }
  int size() const { return std::popcount(bits_); }

  constexpr LiveSet operator|(LiveSet o) const { return LiveSet(bits_ | o.bits_); }
  constexpr LiveSet operator-(LiveSet o) const { return LiveSet(bits_ & ~o.bits_); }
  constexpr bool operator==(const LiveSet&) const = default;

  std::string to_string() const;

 private:
  std::uint16_t bits_ = 0;
};

BitMask mask_union(const BitMask& a, const BitMask& b);
BitMask mask_intersection(const BitMask& a, const BitMask& b);
// Population count in bits (selected bytes × 8).
std::size_t mask_count(const BitMask& a);
// Bytes of the registers (and flag word) in `live`.
BitMask register_mask(LiveSet live, std::size_t universe);

bool masked_eq(const StateVector& a, const StateVector& b, const BitMask& m);
StateVector fast_forward(const StateVector& z_m, const StateVector& z_s, const BitMask& m_w);

std::uint64_t mix64(std::uint64_t x);
std::uint64_t fingerprint(const StateVector& z, LiveSet live);
// Hash of every byte of the state plus ip; used for traces and determinism checks.
std::uint64_t state_digest(const StateVector& z);

void write_state(std::ostream& out, const StateVector& z);
StateVector read_state(std::istream& in);
void write_mask(std::ostream& out, const BitMask& m);
BitMask read_mask(std::istream& in);

}  // namespace asc
