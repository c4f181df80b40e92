#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "asc/statevec.hpp"

namespace asc {

enum class Opcode : std::uint8_t {
  Li, Mov, Ld, Ldb, St, Stb,
  Add, Sub, Mul, Div, Mod, And, Or, Xor, Shl, Shr,
  Addi, Cmp,
  Jmp, Jlt, Jle, Jeq, Jne, Jge, Jgt,
  Hash, Halt,
};

// Operand shapes, used by the assembler and the disassembler.
enum class Format : std::uint8_t {
  RegImm,     // li rd, imm
  RegReg,     // mov rd, ra / hash rd, ra
  Load,       // ld rd, [ra+imm]
  Store,      // st [ra+imm], rb
  Reg3,       // add rd, ra, rb
  RegRegImm,  // addi rd, ra, imm
  Compare,    // cmp ra, rb
  Jump,       // jmp label
  None,       // halt
};

struct OpInfo {
  std::string_view name;
  Format format;
};

const OpInfo& op_info(Opcode op);
std::optional<Opcode> opcode_from_name(std::string_view name);

struct Instruction {
  Opcode op = Opcode::Halt;
  std::uint8_t rd = 0;
  std::uint8_t ra = 0;
  std::uint8_t rb = 0;
  std::int64_t imm = 0;
  std::uint32_t target = 0;
  std::uint32_t line = 0;  // source line, 0 if synthesized
};

std::string disassemble(const Instruction& ins);

bool is_jump(Opcode op);
bool is_conditional_jump(Opcode op);

// Register/flag slots an instruction reads, and those it always overwrites.
// div and mod write the flag word only on a zero divisor, so they never kill it.
LiveSet uses(const Instruction& ins);
LiveSet kills(const Instruction& ins);

// 64-bit avalanche mix behind the `hash` opcode.
std::uint64_t hash_op(std::uint64_t x);

enum class StopReason { HitRip, Halted, BudgetExhausted };

std::string_view to_string(StopReason r);

struct RunResult {
  StopReason reason;
  std::uint64_t steps;
};

// Interpreter over a borrowed instruction list; the program must outlive the Vm.
// With tracking on, read_mask collects bytes whose first access in the current
// interval was a read, and write_mask every byte written.
class Vm {
 public:
  Vm(std::span<const Instruction> program, StateVector initial, bool tracking = true);

  const StateVector& state() const { return state_; }
  StateVector gather() const { return state_; }
  void scatter(const StateVector& z, bool clear_masks);

  void step();
  RunResult run_until(std::uint64_t rip, std::uint64_t period, std::uint64_t budget);
  // Runs until halt or budget.
  RunResult run(std::uint64_t budget);

  const BitMask& read_mask() const { return read_; }
  const BitMask& write_mask() const { return write_; }
  void clear_masks();

  bool halted() const { return halted_; }
  bool tracking() const { return tracking_; }

 private:
  template <bool Track>
  RunResult run_impl(std::uint64_t rip, std::uint64_t period, std::uint64_t budget);
  template <bool Track>
  void exec(const Instruction& ins);

  std::span<const Instruction> program_;
  StateVector state_;
  BitMask read_;
  BitMask write_;
  bool tracking_;
  bool halted_ = false;
};

// Sentinel rip that never matches, for plain runs to completion.
inline constexpr std::uint64_t kNoRip = ~std::uint64_t{0};

}  // namespace asc
