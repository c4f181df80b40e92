#include <doctest.h>

#include <array>

#include "asc/asmlang.hpp"
#include "support.hpp"

using namespace asc;

namespace {

std::vector<Diagnostic> diagnostics(const std::string& text) {
  try {
    parse(text);
  } catch (const AsmError& e) {
    return e.diagnostics();
  }
  return {};
}

LiveSet regs(std::initializer_list<unsigned> slots) {
  LiveSet s;
  for (unsigned r : slots) s.insert(r);
  return s;
}

}  // namespace

TEST_SUITE("asmlang") {
  TEST_CASE("minimal programs") {
    Program p = parse("halt");
    CHECK(p.instructions.size() == 1);
    CHECK(p.instructions[0].op == Opcode::Halt);

    Program fwd = parse("jmp end\nli r0, 1\nend: halt\n");
    CHECK(fwd.instructions[0].target == 2);
  }

  TEST_CASE("operand syntax") {
    Program p = parse(
        ".mem 32\n"
        "start: li r1, -0x10 ; comment\n"
        "  ld r2, [r1+24]\n"
        "  st [r3-8], r4\n"
        "  addi r5, r5, 7\n"
        "  halt\n");
    CHECK(p.instructions[0].imm == -16);
    CHECK(p.instructions[1].ra == 1);
    CHECK(p.instructions[1].imm == 24);
    CHECK(p.instructions[2].ra == 3);
    CHECK(p.instructions[2].rb == 4);
    CHECK(p.instructions[2].imm == -8);
    CHECK(p.memsize == 32);
    CHECK(disassemble(p.instructions[2]) == "st [r3-8], r4");
  }

  TEST_CASE("diagnostics carry line numbers") {
    auto d = diagnostics("li r0, 1\njmp nowhere\nhalt\n");
    REQUIRE(d.size() == 1);
    CHECK(d[0].line == 2);
    CHECK(d[0].message.find("nowhere") != std::string::npos);

    auto many = diagnostics("frob r0\nli r9, 1\nadd r0, r1\nx: halt\nx: halt\n.mem 8\n.input 4 8\n");
    CHECK(many.size() == 5);
  }

  TEST_CASE("directives") {
    Program p = parse(".mem 64\n.input 8 16\n.output 32 8\n.entry go\nhalt\ngo: halt\n");
    CHECK(p.entry == 1);
    CHECK(p.input.start == 8);
    CHECK(p.input.len == 16);
    CHECK(p.output.start == 32);
    std::vector<std::uint8_t> in(16, 0xab);
    StateVector z = p.initial_state(in);
    CHECK(z.mem()[8] == 0xab);
    CHECK(z.mem()[7] == 0);
    CHECK(z.ip == 1);
    CHECK(p.output_bytes(z).size() == 8);
  }

  TEST_CASE("placeholders") {
    std::map<std::string, std::string> vars = {{"N", "12"}, {"BODY", "  addi r0, r0, 1"}};
    CHECK(expand_placeholders("li r1, ${N}\n${BODY}\n", vars) == "li r1, 12\n  addi r0, r0, 1\n");
    CHECK_THROWS_AS(expand_placeholders("li r1, ${M}\n", vars), AsmError);
    CHECK_THROWS_AS(expand_placeholders("li r1, ${N\n", vars), AsmError);
  }

  TEST_CASE("liveness examples") {
    LivenessInfo a = liveness(parse("li r0, 1\nhalt\n"));
    CHECK_FALSE(a.at(0).contains(0));

    LivenessInfo b = liveness(parse("li r0, 1\nmov r1, r0\nhalt\n"));
    CHECK(b.at(1).contains(0));
    CHECK_FALSE(b.at(2).contains(0));

    Program loop = parse("L: addi r0, r0, 1\ncmp r0, r1\njlt L\nhalt\n");
    LivenessInfo c = liveness(loop);
    CHECK(c.at(0) == regs({0, 1}));
    CHECK(c.at(2) == regs({0, 1, kFlagsSlot}));
    CHECK(c.sweeps <= loop.instructions.size() * 8);
  }

  TEST_CASE("candidates are backward branch targets") {
    CHECK(candidates(parse("li r0, 1\njmp e\ne: halt\n")).empty());
    Program one = parse("L: addi r0, r0, 1\ncmp r0, r1\njlt L\nhalt\n");
    CHECK(candidates(one) == std::vector<std::uint32_t>{0});
    Program nested = parse(
        "outer: li r1, 0\n"
        "inner: addi r1, r1, 1\n"
        "  cmp r1, r2\n"
        "  jlt inner\n"
        "  addi r0, r0, 1\n"
        "  cmp r0, r3\n"
        "  jlt outer\n"
        "  halt\n");
    CHECK(candidates(nested) == std::vector<std::uint32_t>{0, 1});
  }
}

TEST_SUITE("property.asmlang") {
  TEST_CASE("registers reported dead are written before they are read") {
    std::mt19937_64 rng(30);
    std::size_t checked = 0;
    for (int iter = 0; iter < 1000; ++iter) {
      Program p = parse(test::random_program(rng));
      LivenessInfo info = liveness(p);
      REQUIRE(info.sweeps <= p.instructions.size() * 8);
      StateVector z = test::random_state(rng, 64);
      z.ip = 0;
      test::Shadow sh(z);
      // Per step: the ip it ran at and its slot accesses in order.
      std::vector<std::uint64_t> ips;
      std::vector<std::vector<std::pair<unsigned, bool>>> events;
      for (int k = 0; k < 300 && !sh.halted; ++k) {
        ips.push_back(sh.s.ip);
        std::size_t from = sh.log.size();
        sh.step(p.instructions[sh.s.ip]);
        std::vector<std::pair<unsigned, bool>> ev;
        for (std::size_t i = from; i < sh.log.size(); ++i) {
          const test::Access& a = sh.log[i];
          if (a.byte < kMemOffset && a.byte % 8 == 0) ev.push_back({static_cast<unsigned>(a.byte / 8), a.write});
        }
        events.push_back(std::move(ev));
      }
      // Walk backwards tracking the next access to each slot.
      enum Next { None, Read, Write };
      std::array<Next, 9> next{};
      next.fill(None);
      for (std::size_t k = events.size(); k-- > 0;) {
        for (auto it = events[k].rbegin(); it != events[k].rend(); ++it) next[it->first] = it->second ? Write : Read;
        LiveSet live = info.at(ips[k]);
        for (unsigned s = 0; s <= kFlagsSlot; ++s) {
          if (live.contains(s)) continue;
          ++checked;
          REQUIRE_MESSAGE(next[s] != Read, "slot " << s << " dead at ip " << ips[k] << " but read next");
        }
      }
    }
    CHECK(checked > 10000);
  }
}
