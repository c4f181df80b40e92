#include "asc/machine.hpp"

#include <array>

namespace asc {
namespace {

constexpr std::array<OpInfo, 27> kOps = {{
    {"li", Format::RegImm},     {"mov", Format::RegReg},   {"ld", Format::Load},
    {"ldb", Format::Load},     {"st", Format::Store},     {"stb", Format::Store},
    {"add", Format::Reg3},     {"sub", Format::Reg3},     {"mul", Format::Reg3},
    {"div", Format::Reg3},     {"mod", Format::Reg3},     {"and", Format::Reg3},
    {"or", Format::Reg3},      {"xor", Format::Reg3},     {"shl", Format::Reg3},
    {"shr", Format::Reg3},     {"addi", Format::RegRegImm}, {"cmp", Format::Compare},
    {"jmp", Format::Jump},     {"jlt", Format::Jump},     {"jle", Format::Jump},
    {"jeq", Format::Jump},     {"jne", Format::Jump},     {"jge", Format::Jump},
    {"jgt", Format::Jump},     {"hash", Format::RegReg},  {"halt", Format::None},
}};

constexpr std::uint64_t slot_bits(unsigned s) { return std::uint64_t{0xff} << ((s * 8) & 63); }
constexpr std::size_t slot_word(unsigned s) { return (s * 8) >> 6; }

std::string reg_name(unsigned r) { return "r" + std::to_string(r); }

std::string mem_operand(const Instruction& ins) {
  std::string s = "[" + reg_name(ins.ra);
  if (ins.imm > 0) s += "+" + std::to_string(ins.imm);
  if (ins.imm < 0) s += std::to_string(ins.imm);
  return s + "]";
}

}  // namespace

const OpInfo& op_info(Opcode op) { return kOps[static_cast<std::size_t>(op)]; }

std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOps.size(); ++i)
    if (kOps[i].name == name) return static_cast<Opcode>(i);
  return std::nullopt;
}

std::string disassemble(const Instruction& ins) {
  const OpInfo& info = op_info(ins.op);
  std::string s(info.name);
  switch (info.format) {
    case Format::RegImm: return s + " " + reg_name(ins.rd) + ", " + std::to_string(ins.imm);
    case Format::RegReg: return s + " " + reg_name(ins.rd) + ", " + reg_name(ins.ra);
    case Format::Load: return s + " " + reg_name(ins.rd) + ", " + mem_operand(ins);
    case Format::Store: return s + " " + mem_operand(ins) + ", " + reg_name(ins.rb);
    case Format::Reg3:
      return s + " " + reg_name(ins.rd) + ", " + reg_name(ins.ra) + ", " + reg_name(ins.rb);
    case Format::RegRegImm:
      return s + " " + reg_name(ins.rd) + ", " + reg_name(ins.ra) + ", " + std::to_string(ins.imm);
    case Format::Compare: return s + " " + reg_name(ins.ra) + ", " + reg_name(ins.rb);
    case Format::Jump: return s + " @" + std::to_string(ins.target);
    case Format::None: return s;
  }
  return s;
}

bool is_jump(Opcode op) { return op >= Opcode::Jmp && op <= Opcode::Jgt; }
bool is_conditional_jump(Opcode op) { return op >= Opcode::Jlt && op <= Opcode::Jgt; }

LiveSet uses(const Instruction& ins) {
  LiveSet s;
  switch (op_info(ins.op).format) {
    case Format::RegReg:
    case Format::Load:
    case Format::RegRegImm: s.insert(ins.ra); break;
    case Format::Store:
    case Format::Reg3:
    case Format::Compare:
      s.insert(ins.ra);
      s.insert(ins.rb);
      break;
    case Format::Jump:
      if (is_conditional_jump(ins.op)) s.insert(kFlagsSlot);
      break;
    case Format::RegImm:
    case Format::None: break;
  }
  return s;
}

LiveSet kills(const Instruction& ins) {
  LiveSet s;
  switch (op_info(ins.op).format) {
    case Format::RegImm:
    case Format::RegReg:
    case Format::Load:
    case Format::Reg3:
    case Format::RegRegImm: s.insert(ins.rd); break;
    case Format::Compare: s.insert(kFlagsSlot); break;
    case Format::Store:
    case Format::Jump:
    case Format::None: break;
  }
  return s;
}

std::uint64_t hash_op(std::uint64_t x) { return mix64(x + 0x9e3779b97f4a7c15ULL); }

std::string_view to_string(StopReason r) {
  switch (r) {
    case StopReason::HitRip: return "hit_rip";
    case StopReason::Halted: return "halted";
    case StopReason::BudgetExhausted: return "budget_exhausted";
  }
  return "?";
}

Vm::Vm(std::span<const Instruction> program, StateVector initial, bool tracking)
    : program_(program),
      state_(std::move(initial)),
      read_(state_.size()),
      write_(state_.size()),
      tracking_(tracking) {}

void Vm::scatter(const StateVector& z, bool clear) {
  if (z.size() != state_.size())
    throw StructuralError("scatter: state size " + std::to_string(z.size()) + " does not match " +
                          std::to_string(state_.size()));
  state_ = z;
  halted_ = false;
  if (clear) clear_masks();
}

void Vm::clear_masks() {
  read_.clear();
  write_.clear();
}

template <bool Track>
void Vm::exec(const Instruction& ins) {
  StateVector& s = state_;
  const std::uint64_t ip = s.ip;
  const std::size_t memsize = s.memsize();

  auto rd_reg = [&](unsigned r) {
    if constexpr (Track) {
      std::uint64_t* rw = read_.word_data();
      const std::uint64_t* ww = write_.words().data();
      rw[slot_word(r)] |= slot_bits(r) & ~ww[slot_word(r)];
    }
    return s.slot(r);
  };
  auto wr_slot = [&](unsigned r) {
    if constexpr (Track) write_.word_data()[slot_word(r)] |= slot_bits(r);
  };
  auto wr_reg = [&](unsigned r, std::uint64_t v) {
    wr_slot(r);
    s.set_reg(r, v);
  };
  auto wr_flags = [&](std::uint64_t v) {
    wr_slot(kFlagsSlot);
    s.set_flags(v);
  };
  auto address = [&](std::uint64_t base, std::size_t width) {
    std::uint64_t addr = base + static_cast<std::uint64_t>(ins.imm);
    if (memsize < width || addr > memsize - width) {
      s.ip = ip;
      throw ExecutionFault(ip, addr,
                           "memory access out of bounds at ip " + std::to_string(ip) +
                               ", address " + std::to_string(addr));
    }
    return static_cast<std::size_t>(addr);
  };
  auto rd_mem = [&](std::size_t addr, std::size_t width) {
    if constexpr (Track) {
      for (std::size_t i = 0; i < width; ++i) {
        std::size_t b = kMemOffset + addr + i;
        if (!write_.test(b)) read_.set(b);
      }
    }
  };
  auto wr_mem = [&](std::size_t addr, std::size_t width) {
    if constexpr (Track) {
      for (std::size_t i = 0; i < width; ++i) write_.set(kMemOffset + addr + i);
    }
  };
  auto branch = [&](bool taken) { s.ip = taken ? ins.target : ip + 1; };
  auto flag = [&]() { return static_cast<std::int64_t>(rd_reg(kFlagsSlot)); };

  s.ip = ip + 1;
  switch (ins.op) {
    case Opcode::Li: wr_reg(ins.rd, static_cast<std::uint64_t>(ins.imm)); break;
    case Opcode::Mov: wr_reg(ins.rd, rd_reg(ins.ra)); break;
    case Opcode::Ld: {
      std::size_t a = address(rd_reg(ins.ra), 8);
      rd_mem(a, 8);
      wr_reg(ins.rd, s.load_mem64(a));
      break;
    }
    case Opcode::Ldb: {
      std::size_t a = address(rd_reg(ins.ra), 1);
      rd_mem(a, 1);
      wr_reg(ins.rd, s.mem()[a]);
      break;
    }
    case Opcode::St: {
      std::size_t a = address(rd_reg(ins.ra), 8);
      std::uint64_t v = rd_reg(ins.rb);
      wr_mem(a, 8);
      s.store_mem64(a, v);
      break;
    }
    case Opcode::Stb: {
      std::size_t a = address(rd_reg(ins.ra), 1);
      std::uint64_t v = rd_reg(ins.rb);
      wr_mem(a, 1);
      s.mem()[a] = static_cast<std::uint8_t>(v);
      break;
    }
    case Opcode::Add: wr_reg(ins.rd, rd_reg(ins.ra) + rd_reg(ins.rb)); break;
    case Opcode::Sub: wr_reg(ins.rd, rd_reg(ins.ra) - rd_reg(ins.rb)); break;
    case Opcode::Mul: wr_reg(ins.rd, rd_reg(ins.ra) * rd_reg(ins.rb)); break;
    case Opcode::Div:
    case Opcode::Mod: {
      auto a = static_cast<std::int64_t>(rd_reg(ins.ra));
      auto b = static_cast<std::int64_t>(rd_reg(ins.rb));
      std::int64_t r;
      if (b == 0) {
        r = 0;
        wr_flags(0);
      } else if (b == -1) {
        // INT64_MIN / -1 overflows; wrap like the hardware would.
        r = ins.op == Opcode::Div ? static_cast<std::int64_t>(0 - static_cast<std::uint64_t>(a)) : 0;
      } else {
        r = ins.op == Opcode::Div ? a / b : a % b;
      }
      wr_reg(ins.rd, static_cast<std::uint64_t>(r));
      break;
    }
    case Opcode::And: wr_reg(ins.rd, rd_reg(ins.ra) & rd_reg(ins.rb)); break;
    case Opcode::Or: wr_reg(ins.rd, rd_reg(ins.ra) | rd_reg(ins.rb)); break;
    case Opcode::Xor: wr_reg(ins.rd, rd_reg(ins.ra) ^ rd_reg(ins.rb)); break;
    case Opcode::Shl: {
      std::uint64_t a = rd_reg(ins.ra);
      wr_reg(ins.rd, a << (rd_reg(ins.rb) & 63));
      break;
    }
    case Opcode::Shr: {
      std::uint64_t a = rd_reg(ins.ra);
      wr_reg(ins.rd, a >> (rd_reg(ins.rb) & 63));
      break;
    }
    case Opcode::Addi: wr_reg(ins.rd, rd_reg(ins.ra) + static_cast<std::uint64_t>(ins.imm)); break;
    case Opcode::Cmp: {
      auto a = static_cast<std::int64_t>(rd_reg(ins.ra));
      auto b = static_cast<std::int64_t>(rd_reg(ins.rb));
      wr_flags(static_cast<std::uint64_t>(a < b ? -1 : (a == b ? 0 : 1)));
      break;
    }
    case Opcode::Jmp: s.ip = ins.target; break;
    case Opcode::Jlt: branch(flag() < 0); break;
    case Opcode::Jle: branch(flag() <= 0); break;
    case Opcode::Jeq: branch(flag() == 0); break;
    case Opcode::Jne: branch(flag() != 0); break;
    case Opcode::Jge: branch(flag() >= 0); break;
    case Opcode::Jgt: branch(flag() > 0); break;
    case Opcode::Hash: wr_reg(ins.rd, hash_op(rd_reg(ins.ra))); break;
    case Opcode::Halt:
      s.ip = ip;
      halted_ = true;
      break;
  }
  ++s.icount;
}

void Vm::step() {
  if (halted_) throw Error("step on a halted machine");
  if (state_.ip >= program_.size())
    throw ExecutionFault(state_.ip, state_.ip,
                         "instruction pointer " + std::to_string(state_.ip) + " out of range");
  if (tracking_)
    exec<true>(program_[state_.ip]);
  else
    exec<false>(program_[state_.ip]);
}

template <bool Track>
RunResult Vm::run_impl(std::uint64_t rip, std::uint64_t period, std::uint64_t budget) {
  std::uint64_t steps = 0;
  std::uint64_t arrivals = 0;
  const std::size_t n = program_.size();
  while (steps < budget) {
    const std::uint64_t ip = state_.ip;
    if (ip >= n)
      throw ExecutionFault(ip, ip, "instruction pointer " + std::to_string(ip) + " out of range");
    exec<Track>(program_[ip]);
    ++steps;
    if (halted_) return {StopReason::Halted, steps};
    if (state_.ip == rip && ++arrivals == period) return {StopReason::HitRip, steps};
  }
  return {StopReason::BudgetExhausted, steps};
}

RunResult Vm::run_until(std::uint64_t rip, std::uint64_t period, std::uint64_t budget) {
  if (period < 1) throw Error("run_until: period must be at least 1");
  if (halted_) throw Error("run_until on a halted machine");
  return tracking_ ? run_impl<true>(rip, period, budget) : run_impl<false>(rip, period, budget);
}

RunResult Vm::run(std::uint64_t budget) { return run_until(kNoRip, 1, budget); }

}  // namespace asc
