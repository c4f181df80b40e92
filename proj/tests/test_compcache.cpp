#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <sstream>

#include "asc/compcache.hpp"
#include "asc/engine.hpp"
#include "asc/kernels.hpp"
#include "asc/recognizer.hpp"
#include "support.hpp"

using namespace asc;

namespace {

const LiveSet kLive(0b11);  // r0, r1

// z_s agrees with z_p outside m_w, as every real entry does.
CacheEntry make_entry(const Cache& c, const StateVector& zp, const StateVector& garbage, const BitMask& mr,
                      const BitMask& mw, std::uint64_t icount) {
  CacheEntry e;
  e.z_p = zp;
  e.z_s = fast_forward(zp, garbage, mw);
  e.m_r = mask_union(mr, register_mask(kLive, zp.size()));
  e.m_w = mw;
  e.key = c.key_of(zp);
  e.icount_delta = icount;
  return e;
}

}  // namespace

TEST_SUITE("compcache") {
  TEST_CASE("add, lookup and dedup") {
    std::mt19937_64 rng(1);
    Cache c(kLive);
    CHECK_FALSE(c.lookup(StateVector(16)).has_value());
    StateVector zp = test::random_state(rng, 16);
    BitMask mr(zp.size()), mw(zp.size());
    mw.set(kMemOffset + 3);
    CacheEntry e = make_entry(c, zp, test::random_state(rng, 16), mr, mw, 10);
    REQUIRE(c.add(e).has_value());
    CHECK_FALSE(c.add(e).has_value());
    CHECK(c.size() == 1);
    CHECK(c.stats().adds == 2);
    CHECK(c.stats().duplicates == 1);

    // Equal on live registers, different everywhere else: still a hit.
    StateVector other = test::random_state(rng, 16);
    other.set_reg(0, zp.reg(0));
    other.set_reg(1, zp.reg(1));
    auto hit = c.lookup(other);
    REQUIRE(hit.has_value());
    CHECK(hit->icount_delta == 10);
    CHECK(hit->z_s.mem()[3] == e.z_s.mem()[3]);
  }

  TEST_CASE("same key, different read memory: both kept, only the match hits") {
    Cache c(kLive);
    StateVector a(16), b(16);
    a.mem()[0] = 1;
    b.mem()[0] = 2;
    BitMask mr(a.size()), mw(a.size());
    mr.set(kMemOffset);
    mw.set(kMemOffset + 8);
    StateVector ga(16), gb(16);
    ga.mem()[8] = 11;
    gb.mem()[8] = 22;
    REQUIRE(c.add(make_entry(c, a, ga, mr, mw, 1)));
    REQUIRE(c.add(make_entry(c, b, gb, mr, mw, 1)));
    CHECK(c.size() == 2);
    StateVector q = b;
    auto hit = c.lookup(q);
    REQUIRE(hit);
    CHECK(hit->z_s.mem()[8] == 22);
    q.mem()[0] = 3;
    CHECK_FALSE(c.lookup(q));
    CHECK(c.stats().verifications_failed >= 2);
  }

  TEST_CASE("stitching a compatible pair") {
    Cache c(kLive);
    StateVector a(8);
    a.set_reg(0, 1);
    BitMask mr(a.size()), mw = register_mask(LiveSet(0b1), a.size());
    StateVector after_a = a, after_b = a;
    after_a.set_reg(0, 2);
    after_b.set_reg(0, 3);
    REQUIRE(c.add(make_entry(c, a, after_a, mr, mw, 5)));
    REQUIRE(c.add(make_entry(c, after_a, after_b, mr, mw, 7)));
    CHECK(c.stitch_pass(1000) == 1);
    auto hit = c.lookup(a);
    REQUIRE(hit);
    CHECK(hit->timestep_span == 2);
    CHECK(hit->icount_delta == 12);
    CHECK(hit->z_s.reg(0) == 3);
  }

  TEST_CASE("incompatible pair does not stitch") {
    Cache c(kLive);
    StateVector a(8);
    BitMask mr(a.size()), mw = register_mask(LiveSet(0b1), a.size());
    StateVector after_a = a;
    after_a.set_reg(0, 2);
    StateVector unrelated = a;
    unrelated.set_reg(0, 2);
    unrelated.mem()[0] = 9;
    BitMask mr2(a.size());
    mr2.set(kMemOffset);
    REQUIRE(c.add(make_entry(c, a, after_a, mr, mw, 1)));
    REQUIRE(c.add(make_entry(c, unrelated, unrelated, mr2, mw, 1)));
    CHECK(c.stitch_pass(1000) == 0);
  }

  TEST_CASE("second entry with empty write mask keeps the first result") {
    Cache c(kLive);
    std::mt19937_64 rng(3);
    StateVector a = test::random_state(rng, 8);
    BitMask mr(a.size()), mw(a.size());
    mr.set(kMemOffset + 5);
    mw.set(kMemOffset + 2);
    CacheEntry first = make_entry(c, a, test::random_state(rng, 8), mr, mw, 1);
    REQUIRE(c.add(first));
    // Reads what the first entry wrote; differs from it on a byte neither reads.
    BitMask mr2(a.size());
    mr2.set(kMemOffset + 2);
    StateVector zp2 = first.z_s;
    zp2.mem()[5] ^= 1;
    REQUIRE(c.add(make_entry(c, zp2, zp2, mr2, BitMask(a.size()), 1)));
    // The second entry also chains onto itself, so there may be more merges.
    REQUIRE(c.stitch_pass(1000) >= 1);
    auto hit = c.lookup(a);
    REQUIRE(hit);
    CHECK(hit->timestep_span >= 2);
    CHECK(masked_eq(hit->z_s, first.z_s, mw));
  }

  TEST_CASE("capacity cap drops new entries") {
    Cache c(kLive, 1);
    StateVector a(8), b(8);
    b.set_reg(0, 1);
    BitMask m(a.size());
    CHECK(c.add(make_entry(c, a, a, m, m, 1)));
    CHECK_FALSE(c.add(make_entry(c, b, b, m, m, 1)));
    CHECK(c.stats().rejected_full == 1);
  }

  TEST_CASE("dump and load round trip") {
    std::mt19937_64 rng(4);
    Cache c(kLive);
    for (int i = 0; i < 5; ++i) {
      StateVector z = test::random_state(rng, 24);
      c.add(make_entry(c, z, test::random_state(rng, 24), test::random_mask(rng, z.size()),
                       test::random_mask(rng, z.size()), static_cast<std::uint64_t>(i)));
    }
    auto dir = std::filesystem::temp_directory_path() / "asc_cache_roundtrip";
    std::filesystem::remove_all(dir);
    c.dump(dir);
    auto back = Cache::load(dir, kLive);
    REQUIRE(back->size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(back->entry(i).z_p == c.entry(i).z_p);
      CHECK(back->entry(i).m_w == c.entry(i).m_w);
      CHECK(back->entry(i).icount_delta == c.entry(i).icount_delta);
    }
    std::ostringstream idx;
    c.write_index(idx);
    const std::string text = idx.str();
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
    std::filesystem::remove_all(dir);
  }
}

TEST_SUITE("property.compcache") {
  TEST_CASE("stitched entries equal sequential application") {
    std::mt19937_64 rng(40);
    std::size_t merged = 0;
    for (int iter = 0; iter < 1000; ++iter) {
      const std::size_t mem = 8 + rng() % 32;
      Cache c(kLive);
      const std::size_t u = kMemOffset + mem;
      // A chain of 2..4 entries, each starting where the previous one ended.
      std::vector<CacheEntry> chain;
      StateVector z = test::random_state(rng, mem);
      BitMask reads(u);
      const int len = 2 + static_cast<int>(rng() % 3);
      for (int k = 0; k < len; ++k) {
        BitMask mr = test::random_mask(rng, u, 0.2), mw = test::random_mask(rng, u, 0.2);
        mw |= register_mask(LiveSet(0b1), u);  // a fresh key, so no part is a duplicate
        CacheEntry e = make_entry(c, z, test::random_state(rng, mem), mr, mw, 1 + rng() % 100);
        reads |= e.m_r;
        z = e.z_s;
        chain.push_back(std::move(e));
      }
      for (auto& e : chain) c.add(e);
      for (int pass = 0; pass < 8; ++pass) c.stitch_pass(1 << 12);

      // Agrees with the chain's start only where some part reads.
      StateVector start = fast_forward(test::random_state(rng, mem), chain[0].z_p, reads);
      auto hit = c.lookup(start);
      REQUIRE(hit);
      if (hit->timestep_span < 2) continue;
      ++merged;
      // Reference: apply the parts one at a time.
      StateVector seq = start;
      std::uint64_t icount = 0;
      for (std::uint64_t k = 0; k < hit->timestep_span; ++k) {
        const CacheEntry& e = chain[k];
        REQUIRE(masked_eq(seq, e.z_p, e.m_r));
        seq = fast_forward(seq, e.z_s, e.m_w);
        icount += e.icount_delta;
      }
      StateVector got = fast_forward(start, hit->z_s, hit->m_w);
      REQUIRE(masked_eq(got, seq, BitMask::full(u)));
      REQUIRE(hit->icount_delta == icount);
    }
    CHECK(merged == 1000);
  }

  TEST_CASE("forced fingerprint collisions never corrupt output") {
    std::mt19937_64 rng(41);
    std::uint64_t rejected = 0;
    const char* kernels[] = {"dependmap-increment", "3sum", "readmap", "collatz"};
    for (int iter = 0; iter < 100; ++iter) {
      const std::string name = kernels[iter % 4];
      KernelParams params;
      if (name == "dependmap-increment") params = {{"n", 80}};
      if (name == "3sum") params = {{"n", 12}};
      if (name == "readmap") params = {{"n", 24}};
      if (name == "collatz") params = {{"count", 6}};
      GeneratedKernel g = generate(name, 100 + iter, params);
      const KernelSpec& spec = kernel_spec(name);
      StateVector init = g.initial_state();
      RecognizerOptions opt;
      opt.threshold = spec.threshold;
      opt.min_icount = spec.min_icount;
      RipChoice choice = recognize(g.program, init, opt);
      Trajectory tr = trace_breakpoints(g.program, init, choice.rip, choice.period);
      REQUIRE(tr.breakpoints.size() >= 3);

      EngineConfig cfg;
      cfg.workers = 1 + rng() % 4;
      cfg.efficiency = rng() % 2 ? 1.0 : 0.5;
      cfg.rip = choice.rip;
      cfg.period = choice.period;
      cfg.key_mask = 0;  // every entry lands in one bucket
      cfg.iterated_lookup = rng() % 2;
      const LiveSet live = liveness(g.program).at(choice.rip);
      Cache cache(live, 0, 0);
      // Adversarial entries: a real breakpoint with one read byte flipped,
      // executed for one period. Every key collides.
      for (int k = 0; k < 20; ++k) {
        std::size_t t = rng() % (tr.breakpoints.size() - 1);
        StateVector zp = tr.breakpoints[t];
        std::vector<std::size_t> bytes;
        mask_union(tr.read_masks[t], register_mask(live, zp.size())).for_each([&](std::size_t b) {
          bytes.push_back(b);
        });
        std::size_t flip = bytes[rng() % bytes.size()];
        zp.set_byte(flip, static_cast<std::uint8_t>(zp.byte(flip) ^ (1 + rng() % 255)));
        Vm vm(g.program.instructions, zp);
        try {
          if (vm.run_until(choice.rip, choice.period, 1'000'000).reason != StopReason::HitRip) continue;
        } catch (const ExecutionFault&) {
          continue;
        }
        CacheEntry e;
        e.z_p = zp;
        e.z_s = vm.state();
        e.m_r = mask_union(vm.read_mask(), register_mask(live, zp.size()));
        e.m_w = vm.write_mask();
        e.key = 0;
        e.icount_delta = vm.state().icount - zp.icount;
        cache.add(std::move(e));
      }
      OraclePredictor oracle(g.program, init, choice.rip, choice.period);
      RunReport r = run(g.program, cfg, oracle, init, &cache);
      REQUIRE_MESSAGE(r.validated, name << " seed " << 100 + iter << ": " << r.failure);
      REQUIRE(r.output == native_run(g.program, g.input).output);
      rejected += r.verifications_failed;
    }
    CHECK(rejected > 0);
  }
}
