#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "asc/asmlang.hpp"
#include "asc/machine.hpp"
#include "asc/statevec.hpp"

namespace asc::test {

inline StateVector random_state(std::mt19937_64& rng, std::size_t memsize) {
  StateVector z(memsize);
  for (std::size_t i = 0; i < z.size(); ++i) z.set_byte(i, static_cast<std::uint8_t>(rng()));
  return z;
}

inline BitMask random_mask(std::mt19937_64& rng, std::size_t universe, double density = 0.3) {
  std::bernoulli_distribution pick(density);
  BitMask m(universe);
  for (std::size_t i = 0; i < universe; ++i)
    if (pick(rng)) m.set(i);
  return m;
}

// Independent reference interpreter. Logs every byte access in order so
// read-before-write masks can be derived without the Vm's instrumentation.
struct Access {
  std::size_t byte;
  bool write;
};

class Shadow {
 public:
  explicit Shadow(StateVector z) : s(std::move(z)) {}

  StateVector s;
  std::vector<Access> log;
  bool halted = false;

  void step(const Instruction& in) {
    std::uint64_t next = s.ip + 1;
    switch (in.op) {
      case Opcode::Li: put(in.rd, static_cast<std::uint64_t>(in.imm)); break;
      case Opcode::Mov: put(in.rd, get(in.ra)); break;
      case Opcode::Ld: {
        std::uint64_t a = get(in.ra) + static_cast<std::uint64_t>(in.imm);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{mem_read(a + i)} << (8 * i);
        put(in.rd, v);
        break;
      }
      case Opcode::Ldb: {
        std::uint64_t a = get(in.ra) + static_cast<std::uint64_t>(in.imm);
        put(in.rd, mem_read(a));
        break;
      }
      case Opcode::St: {
        std::uint64_t a = get(in.ra) + static_cast<std::uint64_t>(in.imm);
        std::uint64_t v = get(in.rb);
        for (int i = 0; i < 8; ++i) mem_write(a + i, static_cast<std::uint8_t>(v >> (8 * i)));
        break;
      }
      case Opcode::Stb: {
        std::uint64_t a = get(in.ra) + static_cast<std::uint64_t>(in.imm);
        mem_write(a, static_cast<std::uint8_t>(get(in.rb)));
        break;
      }
      case Opcode::Add: bin(in, [](std::uint64_t a, std::uint64_t b) { return a + b; }); break;
      case Opcode::Sub: bin(in, [](std::uint64_t a, std::uint64_t b) { return a - b; }); break;
      case Opcode::Mul: bin(in, [](std::uint64_t a, std::uint64_t b) { return a * b; }); break;
      case Opcode::And: bin(in, [](std::uint64_t a, std::uint64_t b) { return a & b; }); break;
      case Opcode::Or: bin(in, [](std::uint64_t a, std::uint64_t b) { return a | b; }); break;
      case Opcode::Xor: bin(in, [](std::uint64_t a, std::uint64_t b) { return a ^ b; }); break;
      case Opcode::Shl: bin(in, [](std::uint64_t a, std::uint64_t b) { return a << (b % 64); }); break;
      case Opcode::Shr: bin(in, [](std::uint64_t a, std::uint64_t b) { return a >> (b % 64); }); break;
      case Opcode::Div:
      case Opcode::Mod: {
        auto a = static_cast<__int128>(static_cast<std::int64_t>(get(in.ra)));
        auto b = static_cast<__int128>(static_cast<std::int64_t>(get(in.rb)));
        __int128 r = 0;
        if (b == 0)
          put(8, 0);
        else
          r = in.op == Opcode::Div ? a / b : a % b;
        put(in.rd, static_cast<std::uint64_t>(r));
        break;
      }
      case Opcode::Addi: put(in.rd, get(in.ra) + static_cast<std::uint64_t>(in.imm)); break;
      case Opcode::Cmp: {
        auto a = static_cast<std::int64_t>(get(in.ra));
        auto b = static_cast<std::int64_t>(get(in.rb));
        put(8, a < b ? ~std::uint64_t{0} : (a == b ? 0 : 1));
        break;
      }
      case Opcode::Jmp: next = in.target; break;
      case Opcode::Jlt:
      case Opcode::Jle:
      case Opcode::Jeq:
      case Opcode::Jne:
      case Opcode::Jge:
      case Opcode::Jgt: {
        auto f = static_cast<std::int64_t>(get(8));
        bool taken = in.op == Opcode::Jlt   ? f < 0
                     : in.op == Opcode::Jle ? f <= 0
                     : in.op == Opcode::Jeq ? f == 0
                     : in.op == Opcode::Jne ? f != 0
                     : in.op == Opcode::Jge ? f >= 0
                                            : f > 0;
        if (taken) next = in.target;
        break;
      }
      case Opcode::Hash: put(in.rd, hash_op(get(in.ra))); break;
      case Opcode::Halt:
        halted = true;
        next = s.ip;
        break;
    }
    s.ip = next;
    ++s.icount;
  }

  // Bytes whose first logged access was a read, and every written byte.
  std::pair<BitMask, BitMask> masks() const {
    BitMask r(s.size()), w(s.size());
    std::vector<bool> seen(s.size(), false);
    for (const Access& a : log) {
      if (!seen[a.byte] && !a.write) r.set(a.byte);
      seen[a.byte] = true;
      if (a.write) w.set(a.byte);
    }
    return {r, w};
  }

 private:
  std::uint64_t get(unsigned slot) {
    for (unsigned i = 0; i < 8; ++i) log.push_back({slot * 8 + i, false});
    return s.slot(slot);
  }
  void put(unsigned slot, std::uint64_t v) {
    for (unsigned i = 0; i < 8; ++i) {
      log.push_back({slot * 8 + i, true});
      s.set_byte(slot * 8 + i, static_cast<std::uint8_t>(v >> (8 * i)));
    }
  }
  std::uint8_t mem_read(std::uint64_t a) {
    log.push_back({kMemOffset + a, false});
    return s.byte(kMemOffset + a);
  }
  void mem_write(std::uint64_t a, std::uint8_t v) {
    log.push_back({kMemOffset + a, true});
    s.set_byte(kMemOffset + a, v);
  }
  template <class F>
  void bin(const Instruction& in, F f) {
    std::uint64_t a = get(in.ra);
    std::uint64_t b = get(in.rb);
    put(in.rd, f(a, b));
  }
};

// Random straight-line-and-jump programs over 64 bytes of memory. r7 is the
// memory base and is never written, so every access stays in bounds.
inline std::string random_program(std::mt19937_64& rng, int length = 24) {
  const char* alu[] = {"add", "sub", "mul", "div", "mod", "and", "or", "xor", "shl", "shr"};
  const char* jcc[] = {"jlt", "jle", "jeq", "jne", "jge", "jgt"};
  auto reg = [&](bool dest) { return "r" + std::to_string(rng() % (dest ? 7 : 8)); };
  std::string text = ".mem 64\n.input 0 64\n.output 0 64\nli r7, 0\n";
  for (int i = 0; i < length; ++i) {
    text += "L" + std::to_string(i) + ":\n";
    switch (rng() % 10) {
      case 0: text += "li " + reg(true) + ", " + std::to_string(static_cast<int>(rng() % 41) - 20); break;
      case 1: text += "mov " + reg(true) + ", " + reg(false); break;
      case 2: text += "ld " + reg(true) + ", [r7+" + std::to_string(rng() % 57) + "]"; break;
      case 3: text += "ldb " + reg(true) + ", [r7+" + std::to_string(rng() % 64) + "]"; break;
      case 4: text += "st [r7+" + std::to_string(rng() % 57) + "], " + reg(false); break;
      case 5: text += "stb [r7+" + std::to_string(rng() % 64) + "], " + reg(false); break;
      case 6:
        text += std::string(alu[rng() % 10]) + " " + reg(true) + ", " + reg(false) + ", " + reg(false);
        break;
      case 7: text += "addi " + reg(true) + ", " + reg(false) + ", " + std::to_string(static_cast<int>(rng() % 7) - 3); break;
      case 8: text += "cmp " + reg(false) + ", " + reg(false); break;
      default: text += std::string(jcc[rng() % 6]) + " L" + std::to_string(rng() % length); break;
    }
    text += "\n";
  }
  text += "halt\n";
  return text;
}

}  // namespace asc::test
