#include <doctest.h>

#include <algorithm>
#include <set>

#include "hpim/mapping.hpp"
#include "hpim/presets.hpp"

using namespace hpim;

TEST_SUITE("mapping") {

TEST_CASE("head allocation worked cases") {
  // 16 heads over 16 channels: one round, one channel per head.
  HeadAllocation a = allocate_qkv_heads(16, 16, 32, 16 * 64);
  REQUIRE(a.rounds.size() == 1);
  CHECK(a.rounds[0].h_p == 16);
  CHECK(a.rounds[0].n_ch == 1);
  CHECK(a.d_k == 64);

  // 16 heads over 64 channels: still one round, 4 channels per head.
  a = allocate_qkv_heads(16, 64, 32, 16 * 64);
  REQUIRE(a.rounds.size() == 1);
  CHECK(a.rounds[0].h_p == 16);
  CHECK(a.rounds[0].n_ch == 4);

  // 56 heads over 64 channels, 32 cores: the core count caps the first
  // round at 32 heads; the remainder splits 16 + 8.
  a = allocate_qkv_heads(56, 64, 32, 56 * 128);
  REQUIRE(a.rounds.size() == 3);
  CHECK(a.rounds[0].h_begin == 0);
  CHECK(a.rounds[0].h_p == 32);
  CHECK(a.rounds[0].n_ch == 2);
  CHECK(a.rounds[1].h_begin == 32);
  CHECK(a.rounds[1].h_p == 16);
  CHECK(a.rounds[1].n_ch == 4);
  CHECK(a.rounds[2].h_begin == 48);
  CHECK(a.rounds[2].h_p == 8);
  CHECK(a.rounds[2].n_ch == 8);

  // Channel formula: (h - h_begin) * n_ch + dim % n_ch.
  CHECK(a.round_of_head(35) == 1);
  CHECK(a.channel_of(35, 5) == (35 - 32) * 4 + 5 % 4);
  CHECK(a.channel_of(0, 0) == 0);
  CHECK(a.channel_of(31, 127) == 31 * 2 + 1);
}

TEST_CASE("head allocation dim placement round-trips") {
  const HeadAllocation a = allocate_qkv_heads(16, 64, 32, 16 * 64);
  // Head 3 occupies channels 12..15; channel 13 holds dims 1,5,9,...,61.
  const auto dims = a.dims_on_channel(3, 13);
  REQUIRE(dims.size() == 16);
  CHECK(dims.front() == 1);
  CHECK(dims.back() == 61);
  CHECK(a.dims_count_on_channel(3, 13) == 16);
  CHECK(a.dims_count_on_channel(3, 16) == 0);  // head 4's territory
  for (std::int64_t d : dims) CHECK(a.channel_of(3, d) == 13);
}

TEST_CASE("head allocation properties hold exhaustively") {
  for (std::int64_t heads = 1; heads <= 128; ++heads) {
    for (std::int64_t chans : {8, 16, 32, 64, 128, 256}) {
      for (std::int64_t cores : {8, 16, 32, 64, 128, 256}) {
        const std::int64_t d_k = 4;
        const HeadAllocation a = allocate_qkv_heads(heads, chans, cores, heads * d_k);

        // Totality: each head in exactly one round, rounds contiguous.
        std::int64_t next = 0;
        for (const AllocRound& r : a.rounds) {
          REQUIRE(r.h_begin == next);
          REQUIRE(r.h_p >= 1);
          REQUIRE((r.h_p & (r.h_p - 1)) == 0);  // power of two
          REQUIRE(r.h_p <= std::min(chans, cores));
          REQUIRE(r.h_p * r.n_ch == chans);
          next += r.h_p;
        }
        REQUIRE(next == heads);

        // Disjoint channel sets within a round; every dim lands where the
        // reverse lookup says it does.
        for (const AllocRound& r : a.rounds) {
          std::vector<std::int64_t> owner(static_cast<std::size_t>(chans), -1);
          for (std::int64_t h = r.h_begin; h < r.h_begin + r.h_p; ++h) {
            std::int64_t placed = 0;
            for (std::int64_t ch = 0; ch < chans; ++ch) {
              const std::int64_t cnt = a.dims_count_on_channel(h, ch);
              if (cnt == 0) continue;
              REQUIRE(owner[static_cast<std::size_t>(ch)] == -1);
              owner[static_cast<std::size_t>(ch)] = h;
              placed += cnt;
              REQUIRE(cnt <= ceil_div(d_k, r.n_ch));
              REQUIRE(cnt >= d_k / r.n_ch);
            }
            REQUIRE(placed == d_k);
            for (std::int64_t i = 0; i < d_k; ++i) {
              const std::int64_t ch = a.channel_of(h, i);
              REQUIRE(owner[static_cast<std::size_t>(ch)] == h);
            }
          }
        }
      }
    }
  }
}

TEST_CASE("fc weight slicing balances rows") {
  const WeightSlicePlan even = slice_fc_weights(5120, 5120, 64, 32, 1024);
  CHECK(even.rows_on_channel(0) == 80);
  CHECK(even.rows_on_channel(63) == 80);
  CHECK(even.bytes_on_channel(0) == 80 * 5120 * 2);

  const WeightSlicePlan odd = slice_fc_weights(100, 8, 64, 32, 1024);
  std::int64_t sum = 0, mn = 1'000'000, mx = 0;
  for (std::int64_t ch = 0; ch < 64; ++ch) {
    const std::int64_t r = odd.rows_on_channel(ch);
    sum += r;
    mn = std::min(mn, r);
    mx = std::max(mx, r);
  }
  CHECK(sum == 100);
  CHECK(mx - mn == 1);
  CHECK_THROWS_AS(slice_fc_weights(0, 8, 64, 32, 1024), ConfigError);
}

TEST_CASE("core assignment worked cases") {
  CoreAssignment a = assign_heads_to_cores(32, 32);
  REQUIRE(a.phases.size() == 1);
  CHECK(a.phases[0].tp_degree == 1);
  CHECK(a.first_core_of(17) == 17);

  a = assign_heads_to_cores(16, 32);
  REQUIRE(a.phases.size() == 1);
  CHECK(a.phases[0].tp_degree == 2);
  CHECK(a.first_core_of(5) == 10);
  CHECK(a.tp_of_head(5) == 2);

  a = assign_heads_to_cores(40, 32);
  REQUIRE(a.phases.size() == 2);
  CHECK(a.phases[0].n_heads == 32);
  CHECK(a.phases[0].tp_degree == 1);
  CHECK(a.phases[1].h_begin == 32);
  CHECK(a.phases[1].n_heads == 8);
  CHECK(a.phases[1].tp_degree == 4);
  CHECK(a.phase_of_head(36) == 1);
  CHECK(a.first_core_of(36) == 16);

  // 56 heads: the 24-head tail cannot double up, tp stays 1.
  a = assign_heads_to_cores(56, 32);
  REQUIRE(a.phases.size() == 2);
  CHECK(a.phases[1].n_heads == 24);
  CHECK(a.phases[1].tp_degree == 1);
}

TEST_CASE("mapping plans for all presets validate") {
  const HardwareConfig hw = resolve_hardware("hpim-default");
  for (const std::string& name : model_preset_names()) {
    const ModelConfig m = resolve_model(name);
    for (Phase phase : {Phase::Prefill, Phase::Decode}) {
      const MappingPlan plan = build_mapping_plan(m, hw, phase);
      const PlanCheckReport rep = validate_plan(plan);
      for (const std::string& v : rep.violations) MESSAGE(name, ": ", v);
      CHECK(rep.ok);
      // Every preset fills all 64 channels evenly in every round.
      CHECK(rep.qkv_imbalance_ratio == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("decode residency accounts every weight element") {
  const HardwareConfig hw = resolve_hardware("hpim-default");
  const ModelConfig m = resolve_model("opt-13b");
  const MappingPlan plan = build_mapping_plan(m, hw, Phase::Decode);
  REQUIRE(plan.residency_bytes.size() == 64);
  // Per channel: QKV 3*80*5120 + proj 80*5120 + ffn1 320*5120 + ffn2 80*20480
  // elements, 2 bytes each.
  for (std::int64_t b : plan.residency_bytes) CHECK(b == 9'830'400);
  std::int64_t total = 0;
  for (std::int64_t b : plan.residency_bytes) total += b;
  CHECK(total == 12 * m.d_emb * m.d_emb * m.elem_bytes);  // one layer
}

TEST_CASE("undersized dram rejects the decode plan") {
  HardwareConfig hw = resolve_hardware("hpim-default");
  hw.n_stacks = 1;
  hw.stack.dies_per_stack = 2;
  hw.stack.gbits_per_die = 1;  // 256 MiB total, 64 MiB per channel
  hw.link_map.clear();
  validate_config(hw);
  REQUIRE(hw.n_channels() == 4);
  const ModelConfig m = resolve_model("opt-13b");
  CHECK_THROWS_AS(build_mapping_plan(m, hw, Phase::Decode), CapacityError);
  // Prefill streams weights, so the same hardware still plans.
  CHECK_NOTHROW(build_mapping_plan(m, hw, Phase::Prefill));
}

TEST_CASE("allocation rejects impossible shapes") {
  CHECK_THROWS_AS(allocate_qkv_heads(0, 64, 32, 64), ConfigError);
  CHECK_THROWS_AS(allocate_qkv_heads(16, 64, 32, 100), ConfigError);  // d_emb % heads
  CHECK_THROWS_AS(assign_heads_to_cores(0, 32), ConfigError);
}

}  // TEST_SUITE
