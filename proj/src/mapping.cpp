#include "hpim/mapping.hpp"

#include <algorithm>

namespace hpim {

std::int32_t HeadAllocation::round_of_head(std::int64_t h) const {
  for (std::size_t r = 0; r < rounds.size(); ++r) {
    if (h >= rounds[r].h_begin && h < rounds[r].h_begin + rounds[r].h_p)
      return static_cast<std::int32_t>(r);
  }
  return -1;
}

std::int32_t HeadAllocation::channel_of(std::int64_t h, std::int64_t dim) const {
  const AllocRound& r = rounds[static_cast<std::size_t>(round_of_head(h))];
  return static_cast<std::int32_t>((h - r.h_begin) * r.n_ch + (dim % r.n_ch));
}

std::int64_t HeadAllocation::dims_count_on_channel(std::int64_t h, std::int64_t ch) const {
  const AllocRound& r = rounds[static_cast<std::size_t>(round_of_head(h))];
  const std::int64_t lo = (h - r.h_begin) * r.n_ch;
  if (ch < lo || ch >= lo + r.n_ch) return 0;
  const std::int64_t residue = ch - lo;
  // dims i in [0, d_k) with i % n_ch == residue
  return d_k / r.n_ch + ((d_k % r.n_ch) > residue ? 1 : 0);
}

std::vector<std::int64_t> HeadAllocation::dims_on_channel(std::int64_t h, std::int64_t ch) const {
  std::vector<std::int64_t> dims;
  const AllocRound& r = rounds[static_cast<std::size_t>(round_of_head(h))];
  const std::int64_t lo = (h - r.h_begin) * r.n_ch;
  if (ch < lo || ch >= lo + r.n_ch) return dims;
  for (std::int64_t i = ch - lo; i < d_k; i += r.n_ch) dims.push_back(i);
  return dims;
}

HeadAllocation allocate_qkv_heads(std::int64_t n_heads, std::int64_t n_channels,
                                  std::int64_t n_cores, std::int64_t d_emb) {
  if (n_heads < 1 || n_channels < 1 || n_cores < 1)
    throw ConfigError("allocate_qkv_heads requires positive head/channel/core counts");
  if (d_emb % n_heads != 0) throw ConfigError("d_emb must be divisible by n_heads");
  HeadAllocation alloc;
  alloc.n_heads = n_heads;
  alloc.n_channels = n_channels;
  alloc.d_k = d_emb / n_heads;

  std::int64_t h_idx = 0;
  while (h_idx < n_heads) {
    const std::int64_t h_rem = n_heads - h_idx;
    const std::int64_t h_r = std::min({h_rem, n_channels, n_cores});
    const std::int64_t h_p = floor_pow2(h_r);
    if (n_channels % h_p != 0) {
      throw ConfigError("channel count " + std::to_string(n_channels) +
                        " not divisible by heads placed " + std::to_string(h_p) +
                        "; the allocation's channels-per-head division must be exact "
                        "(power-of-two channel counts only)");
    }
    AllocRound round;
    round.h_begin = h_idx;
    round.h_p = h_p;
    round.n_ch = n_channels / h_p;
    alloc.rounds.push_back(round);
    h_idx += h_p;
  }
  return alloc;
}

std::int64_t WeightSlicePlan::rows_on_channel(std::int64_t ch) const {
  return rows / n_channels + ((rows % n_channels) > ch ? 1 : 0);
}

WeightSlicePlan slice_fc_weights(std::int64_t rows, std::int64_t cols, std::int64_t n_channels,
                                 std::int64_t banks_per_channel, std::int64_t page_bytes,
                                 std::int64_t elem_bytes) {
  if (rows < 1 || cols < 1) throw ConfigError("slice_fc_weights requires positive dims");
  WeightSlicePlan p;
  p.rows = rows;
  p.cols = cols;
  p.n_channels = n_channels;
  p.banks_per_channel = banks_per_channel;
  p.page_bytes = page_bytes;
  p.elem_bytes = elem_bytes;
  return p;
}

std::int32_t CoreAssignment::phase_of_head(std::int64_t h) const {
  for (std::size_t p = 0; p < phases.size(); ++p) {
    if (h >= phases[p].h_begin && h < phases[p].h_begin + phases[p].n_heads)
      return static_cast<std::int32_t>(p);
  }
  return -1;
}

std::int32_t CoreAssignment::first_core_of(std::int64_t h) const {
  const CorePhase& p = phases[static_cast<std::size_t>(phase_of_head(h))];
  return static_cast<std::int32_t>((h - p.h_begin) * p.tp_degree);
}

std::int64_t CoreAssignment::tp_of_head(std::int64_t h) const {
  return phases[static_cast<std::size_t>(phase_of_head(h))].tp_degree;
}

CoreAssignment assign_heads_to_cores(std::int64_t n_heads, std::int64_t n_cores) {
  if (n_heads < 1 || n_cores < 1)
    throw ConfigError("assign_heads_to_cores requires positive counts");
  CoreAssignment a;
  a.n_heads = n_heads;
  a.n_cores = n_cores;
  std::int64_t h = 0;
  while (h < n_heads) {
    CorePhase ph;
    ph.h_begin = h;
    ph.n_heads = std::min(n_heads - h, n_cores);
    // Power-of-two group keeps the all-gather a clean reduction tree;
    // leftover cores idle.
    ph.tp_degree = ph.n_heads >= n_cores ? 1 : floor_pow2(n_cores / ph.n_heads);
    a.phases.push_back(ph);
    h += ph.n_heads;
  }
  return a;
}

MappingPlan build_mapping_plan(const ModelConfig& m, const HardwareConfig& hw, Phase phase) {
  validate_model(m);
  MappingPlan plan;
  plan.phase = phase;
  plan.cores = assign_heads_to_cores(m.n_heads, hw.n_cores);
  plan.qkv = allocate_qkv_heads(m.n_heads, hw.n_channels(), hw.n_cores, m.d_emb);
  const std::int64_t banks_per_channel = hw.stack.bg_per_channel * hw.stack.banks_per_bg;
  plan.proj = slice_fc_weights(m.d_emb, m.d_emb, hw.n_channels(), banks_per_channel,
                               hw.stack.page_bytes_per_pch, m.elem_bytes);
  plan.ffn1 = slice_fc_weights(m.d_ffn(), m.d_emb, hw.n_channels(), banks_per_channel,
                               hw.stack.page_bytes_per_pch, m.elem_bytes);
  plan.ffn2 = slice_fc_weights(m.d_emb, m.d_ffn(), hw.n_channels(), banks_per_channel,
                               hw.stack.page_bytes_per_pch, m.elem_bytes);

  if (phase == Phase::Decode) {
    const std::int64_t n_ch = hw.n_channels();
    plan.residency_bytes.assign(static_cast<std::size_t>(n_ch), 0);
    for (std::int64_t ch = 0; ch < n_ch; ++ch) {
      std::int64_t elems = 0;
      for (std::int64_t h = 0; h < m.n_heads; ++h) {
        // Q, K and V columns of this head on this channel, d_emb rows each.
        elems += 3 * plan.qkv.dims_count_on_channel(h, ch) * m.d_emb;
      }
      elems += plan.proj.elems_on_channel(ch);
      elems += plan.ffn1.elems_on_channel(ch);
      elems += plan.ffn2.elems_on_channel(ch);
      plan.residency_bytes[static_cast<std::size_t>(ch)] = elems * m.elem_bytes;
    }
    const std::int64_t channel_capacity =
        derive_metrics(hw).dram_capacity_bytes / n_ch;
    for (std::int64_t ch = 0; ch < n_ch; ++ch) {
      if (plan.residency_bytes[static_cast<std::size_t>(ch)] > channel_capacity) {
        throw CapacityError("decode weight residency on channel " + std::to_string(ch) + " (" +
                            std::to_string(plan.residency_bytes[static_cast<std::size_t>(ch)]) +
                            " B) exceeds channel capacity (" + std::to_string(channel_capacity) +
                            " B)");
      }
    }
  }
  return plan;
}

PlanCheckReport validate_plan(const MappingPlan& plan) {
  PlanCheckReport rep;
  auto fail = [&](std::string msg) {
    rep.ok = false;
    rep.violations.push_back(std::move(msg));
  };

  const HeadAllocation& a = plan.qkv;
  if (a.n_heads == 0) return rep;  // empty plan: trivially valid

  // Totality: every head in exactly one round.
  std::vector<int> placed(static_cast<std::size_t>(a.n_heads), 0);
  for (const AllocRound& r : a.rounds) {
    if ((r.h_p & (r.h_p - 1)) != 0) fail("round h_p not a power of two");
    if (r.h_p * r.n_ch > a.n_channels) fail("round h_p * n_ch exceeds channel count");
    for (std::int64_t h = r.h_begin; h < r.h_begin + r.h_p; ++h) {
      if (h >= a.n_heads) {
        fail("round places nonexistent head " + std::to_string(h));
        continue;
      }
      if (placed[static_cast<std::size_t>(h)]++)
        fail("head " + std::to_string(h) + " placed in more than one round");
    }
  }
  for (std::int64_t h = 0; h < a.n_heads; ++h) {
    if (!placed[static_cast<std::size_t>(h)]) fail("head " + std::to_string(h) + " never placed");
  }

  // Within a round, channel sets of distinct heads are disjoint, and each
  // used channel gets floor(d_k/n_ch) or ceil(d_k/n_ch) dimensions.
  for (const AllocRound& r : a.rounds) {
    std::vector<std::int64_t> owner(static_cast<std::size_t>(a.n_channels), -1);
    for (std::int64_t h = r.h_begin; h < std::min(r.h_begin + r.h_p, a.n_heads); ++h) {
      for (std::int64_t i = 0; i < a.d_k; ++i) {
        const std::int64_t ch = a.channel_of(h, i);
        if (ch < 0 || ch >= a.n_channels) {
          fail("head " + std::to_string(h) + " dim " + std::to_string(i) +
               " maps outside channels");
          continue;
        }
        if (owner[static_cast<std::size_t>(ch)] != -1 &&
            owner[static_cast<std::size_t>(ch)] != h)
          fail("channel " + std::to_string(ch) + " shared by heads " +
               std::to_string(owner[static_cast<std::size_t>(ch)]) + " and " + std::to_string(h));
        owner[static_cast<std::size_t>(ch)] = h;
      }
      const std::int64_t lo = a.d_k / r.n_ch, hi = ceil_div(a.d_k, r.n_ch);
      for (std::int64_t c = 0; c < r.n_ch; ++c) {
        const std::int64_t cnt = a.dims_count_on_channel(h, (h - r.h_begin) * r.n_ch + c);
        if (cnt < lo || cnt > hi)
          fail("head " + std::to_string(h) + " channel slot " + std::to_string(c) +
               " holds " + std::to_string(cnt) + " dims, outside [" + std::to_string(lo) + "," +
               std::to_string(hi) + "]");
      }
    }
  }

  // Imbalance ratio over per-channel QKV element loads.
  std::vector<std::int64_t> load(static_cast<std::size_t>(a.n_channels), 0);
  for (std::int64_t h = 0; h < a.n_heads; ++h) {
    for (std::int64_t ch = 0; ch < a.n_channels; ++ch)
      load[static_cast<std::size_t>(ch)] += a.dims_count_on_channel(h, ch);
  }
  std::int64_t max_load = 0, total = 0;
  for (std::int64_t v : load) {
    max_load = std::max(max_load, v);
    total += v;
  }
  if (total > 0)
    rep.qkv_imbalance_ratio =
        static_cast<double>(max_load) * static_cast<double>(a.n_channels) / static_cast<double>(total);

  // FC slices: per-channel byte totals differ by at most one row.
  for (const WeightSlicePlan* w : {&plan.proj, &plan.ffn1, &plan.ffn2}) {
    if (w->rows == 0) continue;
    std::int64_t mn = w->rows_on_channel(0), mx = mn, sum = 0;
    for (std::int64_t ch = 0; ch < w->n_channels; ++ch) {
      const std::int64_t r = w->rows_on_channel(ch);
      mn = std::min(mn, r);
      mx = std::max(mx, r);
      sum += r;
    }
    if (mx - mn > 1) fail("fc slice rows differ by more than one across channels");
    if (sum != w->rows) fail("fc slice rows do not partition the matrix");
  }
  return rep;
}

}  // namespace hpim
