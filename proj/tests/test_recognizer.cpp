#include <doctest.h>

#include "asc/asmlang.hpp"
#include "asc/recognizer.hpp"

using namespace asc;

namespace {

// A loop whose body is `body` instructions long (including the three loop
// control instructions), run `iters` times.
Program padded_loop(int body, int iters) {
  std::string text = ".mem 0\nli r1, " + std::to_string(iters) + "\ntop:\n";
  for (int i = 0; i < body - 3; ++i) text += "addi r2, r2, 1\n";
  text += "addi r0, r0, 1\ncmp r0, r1\njlt top\nhalt\n";
  return parse(text);
}

StateVector start(const Program& p) { return p.initial_state({}); }

}  // namespace

TEST_SUITE("recognizer") {
  TEST_CASE("nested loops: the outer head is the least frequent frequent candidate") {
    Program p = parse(
        ".mem 0\n"
        "  li r3, 100\n"
        "outer:\n"
        "  li r1, 0\n"
        "inner:\n"
        "  addi r1, r1, 1\n"
        "  cmp r1, r3\n"
        "  jlt inner\n"
        "  addi r0, r0, 1\n"
        "  cmp r0, r3\n"
        "  jlt outer\n"
        "  halt\n");
    RipResult r = find_rip(p, start(p), 64);
    CHECK(r.rip == p.label("outer"));
    CHECK(r.frequencies.at(p.label("outer")) == 100);
    CHECK(r.frequencies.at(p.label("inner")) == 10000);
    // Above the outer count, only the inner loop qualifies.
    CHECK(find_rip(p, start(p), 101).rip == p.label("inner"));
  }

  TEST_CASE("straight-line code has no candidate") {
    Program p = parse("li r0, 1\nli r1, 2\nhalt\n");
    try {
      find_rip(p, start(p));
      FAIL("expected RecognitionError");
    } catch (const RecognitionError& e) {
      CHECK(e.kind() == RecognitionError::Kind::NoRecurringCandidate);
    }
  }

  TEST_CASE("a single loop run 1000 times selects its head") {
    Program p = padded_loop(3, 1000);
    RipResult r = find_rip(p, start(p));
    CHECK(r.rip == p.label("top"));
  }

  TEST_CASE("period examples") {
    Program p = padded_loop(100, 1000);
    const std::uint32_t top = p.label("top");
    PeriodResult a = find_period(p, start(p), top, 5000);
    CHECK(a.mean_interval == doctest::Approx(100));
    CHECK(a.period == 50);
    CHECK(find_period(p, start(p), top, 100).period == 1);
    CHECK(find_period(p, start(p), top, 1).period == 1);

    Program once = parse("li r0, 1\ntop: halt\n");
    try {
      find_period(once, start(once), 1, 10);
      FAIL("expected RecognitionError");
    } catch (const RecognitionError& e) {
      CHECK(e.kind() == RecognitionError::Kind::PeriodUndefined);
    }
  }

  TEST_CASE("overrides and reproducibility") {
    Program p = padded_loop(10, 500);
    RipChoice a = recognize(p, start(p)), b = recognize(p, start(p));
    CHECK(a.rip == b.rip);
    CHECK(a.period == b.period);
    CHECK(a.candidate_frequencies == b.candidate_frequencies);
    CHECK(recognition_report(a) == recognition_report(b));

    RecognizerOptions o;
    o.period = 7;
    RipChoice c = recognize(p, start(p), o);
    CHECK(c.period == 7);
    CHECK(c.mean_interval_icount == doctest::Approx(70));
  }

  TEST_CASE("profiling budget is enforced") {
    Program spin = parse("x: jmp x\n");
    RecognizerOptions o;
    o.budget = 1000;
    try {
      recognize(spin, start(spin), o);
      FAIL("expected RecognitionError");
    } catch (const RecognitionError& e) {
      CHECK(e.kind() == RecognitionError::Kind::ProfileBudget);
    }
  }
}
