#include "hpim/engine.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <queue>

namespace hpim {

std::int32_t TaskGraph::add(Task t, std::span<const std::int32_t> task_deps) {
  const auto id = static_cast<std::int32_t>(tasks.size());
  t.deps_begin = static_cast<std::int32_t>(dep_pool.size());
  for (std::int32_t d : task_deps) {
    if (d >= 0) dep_pool.push_back(d);
  }
  t.deps_count = static_cast<std::int32_t>(dep_pool.size()) - t.deps_begin;
  tasks.push_back(t);
  return id;
}

void Timeline::reset(std::size_t n_tasks, std::size_t n_resources) {
  start.assign(n_tasks, -1);
  end.assign(n_tasks, -1);
  res_pred.assign(n_tasks, -1);
  busy.assign(n_resources, 0);
  order.clear();
  per_resource.clear();
  end_cycle = 0;
}

namespace {

// Dispatch priority: (layer, round, head, id) packed into one key.
std::uint64_t prio_key(const Task& t, std::int32_t id) {
  return (static_cast<std::uint64_t>(t.layer) << 50) |
         (static_cast<std::uint64_t>(t.round) << 43) |
         (static_cast<std::uint64_t>(t.head + 1) << 27) | static_cast<std::uint64_t>(id);
}

struct SchedScratch {
  std::vector<std::int32_t> indeg;
  std::vector<std::int32_t> succ_begin, succ_cursor, succ_pool;
  std::vector<std::vector<std::uint64_t>> heaps;
  std::vector<std::uint64_t> events;  // (time << 27) | task id
  std::vector<std::int32_t> completion_q, dirty;
  std::vector<std::uint8_t> res_busy, res_dirty;
  std::vector<std::int32_t> res_last;  // last task that ran on the resource
};

constexpr int kIdBits = 27;
constexpr std::uint64_t kIdMask = (std::uint64_t{1} << kIdBits) - 1;

}  // namespace

void schedule(const TaskGraph& g, std::int32_t n_resources, Timeline& out) {
  static thread_local SchedScratch s;
  const auto n = static_cast<std::int32_t>(g.tasks.size());
  if (static_cast<std::uint64_t>(n) > kIdMask)
    throw ConfigError("task graph too large for scheduler id space");
  out.reset(static_cast<std::size_t>(n), static_cast<std::size_t>(n_resources));

  s.indeg.assign(static_cast<std::size_t>(n), 0);
  s.succ_begin.assign(static_cast<std::size_t>(n) + 1, 0);
  for (std::int32_t i = 0; i < n; ++i) {
    const Task& t = g.tasks[static_cast<std::size_t>(i)];
    if (t.resource < -1 || t.resource >= n_resources)
      throw ConfigError("task references unknown resource " + std::to_string(t.resource));
    if (t.duration < 0) throw ConfigError("negative task duration");
    if (t.layer < 0 || t.layer >= (1 << 13) || t.round < 0 || t.round >= (1 << 7) ||
        t.head < -1 || t.head + 1 >= (1 << 16))
      throw ConfigError("task priority field out of packed range");
    s.indeg[static_cast<std::size_t>(i)] = t.deps_count;
    for (std::int32_t d : g.deps(t)) {
      if (d < 0 || d >= n) throw ConfigError("task dependency out of range");
      ++s.succ_begin[static_cast<std::size_t>(d) + 1];
    }
  }
  for (std::int32_t i = 0; i < n; ++i) s.succ_begin[static_cast<std::size_t>(i) + 1] += s.succ_begin[static_cast<std::size_t>(i)];
  s.succ_cursor.assign(s.succ_begin.begin(), s.succ_begin.end() - 1);
  s.succ_pool.resize(static_cast<std::size_t>(s.succ_begin.back()));
  for (std::int32_t i = 0; i < n; ++i) {
    for (std::int32_t d : g.deps(g.tasks[static_cast<std::size_t>(i)]))
      s.succ_pool[static_cast<std::size_t>(s.succ_cursor[static_cast<std::size_t>(d)]++)] = i;
  }

  s.heaps.resize(static_cast<std::size_t>(n_resources));
  for (auto& h : s.heaps) h.clear();
  s.events.clear();
  s.completion_q.clear();
  s.dirty.clear();
  s.res_busy.assign(static_cast<std::size_t>(n_resources), 0);
  s.res_dirty.assign(static_cast<std::size_t>(n_resources), 0);
  s.res_last.assign(static_cast<std::size_t>(n_resources), -1);

  std::int64_t now = 0;
  std::int64_t completed = 0;

  auto mark_dirty = [&](std::int32_t res) {
    if (!s.res_dirty[static_cast<std::size_t>(res)]) {
      s.res_dirty[static_cast<std::size_t>(res)] = 1;
      s.dirty.push_back(res);
    }
  };
  auto ready = [&](std::int32_t i) {
    const Task& t = g.tasks[static_cast<std::size_t>(i)];
    if (t.resource < 0) {
      // Join pseudo-task: completes the instant it is ready.
      out.start[static_cast<std::size_t>(i)] = now;
      out.end[static_cast<std::size_t>(i)] = now;
      s.completion_q.push_back(i);
    } else {
      auto& heap = s.heaps[static_cast<std::size_t>(t.resource)];
      heap.push_back(prio_key(t, i));
      std::push_heap(heap.begin(), heap.end(), std::greater<>{});
      mark_dirty(t.resource);
    }
  };

  for (std::int32_t i = 0; i < n; ++i) {
    if (s.indeg[static_cast<std::size_t>(i)] == 0) ready(i);
  }

  while (true) {
    // Drain all completions, then dispatch every affected resource against
    // the now-stable ready sets; repeat until time `now` is quiescent
    // (dispatch decisions cannot see same-wave completions).
    bool moved = true;
    while (moved) {
      moved = false;
      while (!s.events.empty() &&
             static_cast<std::int64_t>(s.events.front() >> kIdBits) == now) {
        const auto id = static_cast<std::int32_t>(s.events.front() & kIdMask);
        std::pop_heap(s.events.begin(), s.events.end(), std::greater<>{});
        s.events.pop_back();
        s.completion_q.push_back(id);
      }
      while (!s.completion_q.empty()) {
        moved = true;
        const std::int32_t c = s.completion_q.back();
        s.completion_q.pop_back();
        ++completed;
        const Task& t = g.tasks[static_cast<std::size_t>(c)];
        if (t.resource >= 0) {
          s.res_busy[static_cast<std::size_t>(t.resource)] = 0;
          mark_dirty(t.resource);
        }
        for (std::int32_t k = s.succ_begin[static_cast<std::size_t>(c)];
             k < s.succ_begin[static_cast<std::size_t>(c) + 1]; ++k) {
          const std::int32_t succ = s.succ_pool[static_cast<std::size_t>(k)];
          if (--s.indeg[static_cast<std::size_t>(succ)] == 0) ready(succ);
        }
      }
      for (std::size_t di = 0; di < s.dirty.size(); ++di) {
        const std::int32_t res = s.dirty[di];
        s.res_dirty[static_cast<std::size_t>(res)] = 0;
        auto& heap = s.heaps[static_cast<std::size_t>(res)];
        if (s.res_busy[static_cast<std::size_t>(res)] || heap.empty()) continue;
        moved = true;
        const auto id = static_cast<std::int32_t>(heap.front() & kIdMask);
        std::pop_heap(heap.begin(), heap.end(), std::greater<>{});
        heap.pop_back();
        const Task& t = g.tasks[static_cast<std::size_t>(id)];
        out.start[static_cast<std::size_t>(id)] = now;
        out.end[static_cast<std::size_t>(id)] = now + t.duration;
        out.res_pred[static_cast<std::size_t>(id)] = s.res_last[static_cast<std::size_t>(res)];
        s.res_last[static_cast<std::size_t>(res)] = id;
        out.busy[static_cast<std::size_t>(res)] += t.duration;
        if (t.duration == 0) {
          // Completion (and any re-dispatch of this resource) belongs to the
          // next wave; decisions in this wave cannot see it.
          s.completion_q.push_back(id);
        } else {
          s.res_busy[static_cast<std::size_t>(res)] = 1;
          s.events.push_back((static_cast<std::uint64_t>(now + t.duration) << kIdBits) |
                             static_cast<std::uint64_t>(id));
          std::push_heap(s.events.begin(), s.events.end(), std::greater<>{});
        }
      }
      s.dirty.clear();  // flags were cleared per-entry as the loop visited them
    }
    if (completed == n) break;
    if (s.events.empty())
      throw ConfigError("task graph contains a dependency cycle (" +
                        std::to_string(n - completed) + " tasks unreachable)");
    now = static_cast<std::int64_t>(s.events.front() >> kIdBits);
  }
  std::int64_t end_cycle = 0;
  for (std::int64_t e : out.end) end_cycle = std::max(end_cycle, e);
  out.end_cycle = end_cycle;
}

Timeline schedule(const TaskGraph& g, std::int32_t n_resources) {
  Timeline tl;
  schedule(g, n_resources, tl);
  return tl;
}

void finalize_order(const TaskGraph& g, std::int32_t n_resources, Timeline& tl) {
  const auto n = static_cast<std::int32_t>(g.tasks.size());
  std::vector<std::int32_t> count(static_cast<std::size_t>(n_resources), 0);
  for (const Task& t : g.tasks) {
    if (t.resource >= 0) ++count[static_cast<std::size_t>(t.resource)];
  }
  tl.per_resource.assign(static_cast<std::size_t>(n_resources), {});
  std::int32_t off = 0;
  for (std::int32_t r = 0; r < n_resources; ++r) {
    tl.per_resource[static_cast<std::size_t>(r)].begin = off;
    off += count[static_cast<std::size_t>(r)];
  }
  tl.order.assign(static_cast<std::size_t>(off), -1);
  std::vector<std::int32_t> cursor(static_cast<std::size_t>(n_resources));
  for (std::int32_t r = 0; r < n_resources; ++r)
    cursor[static_cast<std::size_t>(r)] = tl.per_resource[static_cast<std::size_t>(r)].begin;
  std::vector<std::int32_t> ids(static_cast<std::size_t>(n));
  for (std::int32_t i = 0; i < n; ++i) ids[static_cast<std::size_t>(i)] = i;
  std::sort(ids.begin(), ids.end(), [&](std::int32_t a, std::int32_t b) {
    return tl.start[static_cast<std::size_t>(a)] != tl.start[static_cast<std::size_t>(b)]
               ? tl.start[static_cast<std::size_t>(a)] < tl.start[static_cast<std::size_t>(b)]
               : a < b;
  });
  for (std::int32_t id : ids) {
    const Task& t = g.tasks[static_cast<std::size_t>(id)];
    if (t.resource < 0) continue;
    tl.order[static_cast<std::size_t>(cursor[static_cast<std::size_t>(t.resource)]++)] = id;
    ++tl.per_resource[static_cast<std::size_t>(t.resource)].count;
  }
}

void attribute_critical(const TaskGraph& g, const Timeline& tl, CriticalPath& out) {
  out.cycles_by_class.fill(0);
  out.cycles_by_task.assign(g.tasks.size(), 0);
  if (g.tasks.empty() || tl.end_cycle == 0) return;
  // Start from the task that reaches the global end (smallest id on ties).
  std::int32_t cur = -1;
  for (std::size_t i = 0; i < g.tasks.size(); ++i) {
    if (tl.end[i] == tl.end_cycle) {
      cur = static_cast<std::int32_t>(i);
      break;
    }
  }
  std::int64_t frontier = tl.end_cycle;
  while (cur >= 0 && frontier > 0) {
    const Task& t = g.tasks[static_cast<std::size_t>(cur)];
    const std::int64_t lo = tl.start[static_cast<std::size_t>(cur)];
    const std::int64_t span = frontier - lo;
    if (span > 0) {
      out.cycles_by_task[static_cast<std::size_t>(cur)] += span;
      out.cycles_by_class[static_cast<std::size_t>(t.op_class)] += span;
      frontier = lo;
    }
    if (frontier == 0) break;
    // Prefer the dependency finishing last (ties: smallest id); fall back to
    // the task that held the resource immediately before.
    std::int32_t next = -1;
    std::int64_t best_end = -1;
    for (std::int32_t d : g.deps(t)) {
      const std::int64_t e = tl.end[static_cast<std::size_t>(d)];
      if (e > best_end || (e == best_end && d < next)) {
        best_end = e;
        next = d;
      }
    }
    if (next >= 0 && best_end >= frontier) {
      cur = next;
    } else {
      cur = tl.res_pred[static_cast<std::size_t>(cur)];
    }
  }
}

CriticalPath attribute_critical(const TaskGraph& g, const Timeline& tl) {
  CriticalPath cp;
  attribute_critical(g, tl, cp);
  return cp;
}

Breakdown aggregate_breakdown(const TaskGraph& g, const Timeline& tl, const HardwareConfig& hw) {
  Breakdown b;
  const std::int32_t pch_lo = static_cast<std::int32_t>(hw.n_cores) * kUnitsPerCore;
  const std::int32_t pch_hi = pch_lo + static_cast<std::int32_t>(hw.n_pch());
  for (const Task& t : g.tasks) {
    if (t.resource < 0) continue;
    b.busy_cycles[static_cast<std::size_t>(t.op_class)] += t.duration;
    if (t.resource >= pch_lo && t.resource < pch_hi)
      b.hbm_busy_cycles[static_cast<std::size_t>(t.op_class)] += t.duration;
  }
  CriticalPath cp = attribute_critical(g, tl);
  b.critical_cycles = cp.cycles_by_class;
  return b;
}

// ---------------------------------------------------------------------------
// Lowering
// ---------------------------------------------------------------------------

namespace {

struct LowerCtx {
  const OperatorGraph* g = nullptr;
  const MappingPlan* plan = nullptr;
  const HardwareConfig* hw = nullptr;
  TaskGraph* tg = nullptr;

  std::int64_t d_emb = 0, d_k = 0, n_heads = 0, d_ffn = 0, eb = 2;
  std::int64_t dispatch = 0;
  std::int64_t link_bw = 0;  // milli-bytes per cycle
  std::vector<std::int32_t> channel_core;  // channel -> core with direct link

  std::int32_t join(std::span<const std::int32_t> deps, std::int32_t node, std::int32_t layer,
                    std::int32_t round, std::int32_t head) {
    std::int32_t only = -1;
    int cnt = 0;
    for (std::int32_t d : deps) {
      if (d >= 0) {
        only = d;
        ++cnt;
      }
    }
    if (cnt == 1) return only;
    Task t;
    t.node_id = node;
    t.resource = -1;
    t.duration = 0;
    t.kind = OpKind::Transfer;
    t.op_class = OpClass::DataMove;
    t.layer = layer;
    t.round = round;
    t.head = head;
    return tg->add(t, deps);
  }
  std::int32_t join(std::initializer_list<std::int32_t> deps, std::int32_t node,
                    std::int32_t layer, std::int32_t round, std::int32_t head) {
    return join(std::span<const std::int32_t>(deps.begin(), deps.size()), node, layer, round, head);
  }

  std::int32_t task(std::int32_t node, std::int32_t res, std::int64_t dur, OpKind kind,
                    OpClass cls, std::int32_t layer, std::int32_t round, std::int32_t head,
                    std::span<const std::int32_t> deps) {
    Task t;
    t.node_id = node;
    t.resource = res;
    t.duration = dur;
    t.kind = kind;
    t.op_class = cls;
    t.layer = layer;
    t.round = round;
    t.head = head;
    return tg->add(t, deps);
  }
  std::int32_t task(std::int32_t node, std::int32_t res, std::int64_t dur, OpKind kind,
                    OpClass cls, std::int32_t layer, std::int32_t round, std::int32_t head,
                    std::initializer_list<std::int32_t> deps) {
    return task(node, res, dur, kind, cls, layer, round, head,
                std::span<const std::int32_t>(deps.begin(), deps.size()));
  }
};

LowerCtx make_ctx(const OperatorGraph& g, const MappingPlan& plan, const HardwareConfig& hw,
                  TaskGraph& tg) {
  LowerCtx cx;
  cx.g = &g;
  cx.plan = &plan;
  cx.hw = &hw;
  cx.tg = &tg;
  cx.d_k = plan.qkv.d_k;
  cx.n_heads = plan.qkv.n_heads;
  cx.d_emb = cx.d_k * cx.n_heads;
  cx.d_ffn = plan.ffn1.rows;
  cx.eb = plan.proj.elem_bytes;
  cx.dispatch = hw.dispatch_overhead_cycles;
  cx.link_bw = hw.link_bw_milli_bytes_per_cycle();
  cx.channel_core.assign(static_cast<std::size_t>(hw.n_channels()), 0);
  for (std::size_t c = 0; c < hw.link_map.size(); ++c) {
    for (std::int32_t ch : hw.link_map[c])
      cx.channel_core[static_cast<std::size_t>(ch)] = static_cast<std::int32_t>(c);
  }
  return cx;
}

// Split a channel's element count across its pseudo-channels, keeping rows of
// `atom` elements intact; first pCHs take the remainder.
std::int64_t pch_share(std::int64_t total_elems, std::int64_t atom, std::int64_t n_pch,
                       std::int64_t pch_idx) {
  const std::int64_t rows = total_elems / atom;
  const std::int64_t share_rows = rows / n_pch + ((rows % n_pch) > pch_idx ? 1 : 0);
  return share_rows * atom;
}

// Decode: rows of the KV cache held by group member `idx` (tokens dealt
// round-robin across the tp group).
std::int64_t kv_rows_of(std::int64_t seq, std::int64_t tp, std::int64_t idx) {
  if (idx >= tp) return 0;
  return (seq - idx + tp - 1) / tp;
}

struct HeadIO {
  std::vector<std::int32_t> q_ready;  // per tp-group core
  std::int32_t k_ready = -1;          // at owner core
  std::int32_t v_ready = -1;
  std::int32_t out_link = -1;         // head output delivered HBM-side
};

}  // namespace

static TaskGraph lower_decode(const OperatorGraph& g, const MappingPlan& plan,
                              const HardwareConfig& hw);
static TaskGraph lower_prefill(const OperatorGraph& g, const MappingPlan& plan,
                               const HardwareConfig& hw);

TaskGraph lower_to_tasks(const OperatorGraph& graph, const MappingPlan& plan,
                         const HardwareConfig& hw) {
  return plan.phase == Phase::Decode ? lower_decode(graph, plan, hw)
                                     : lower_prefill(graph, plan, hw);
}

// --------------------------------- decode ---------------------------------

static TaskGraph lower_decode(const OperatorGraph& g, const MappingPlan& plan,
                              const HardwareConfig& hw) {
  TaskGraph tg;
  LowerCtx cx = make_ctx(g, plan, hw, tg);
  const std::int64_t seq = g.seq_len;
  const std::int64_t n_pch_per_ch = hw.stack.pch_per_channel;
  const HeadAllocation& alloc = plan.qkv;
  const CoreAssignment& cores = plan.cores;

  // Residency policy: stream a core's K/V cache slices when its per-layer
  // working set exceeds activation memory.
  std::vector<std::uint8_t> core_streams(static_cast<std::size_t>(hw.n_cores), 0);
  {
    std::vector<std::int64_t> ws(static_cast<std::size_t>(hw.n_cores), 0);
    for (std::int64_t h = 0; h < cx.n_heads; ++h) {
      const std::int64_t tp = cores.tp_of_head(h);
      const std::int32_t c0 = cores.first_core_of(h);
      for (std::int64_t j = 0; j < tp; ++j)
        ws[static_cast<std::size_t>(c0 + j)] += 2 * kv_rows_of(seq, tp, j) * cx.d_k * cx.eb;
    }
    for (std::int64_t c = 0; c < hw.n_cores; ++c)
      core_streams[static_cast<std::size_t>(c)] = ws[static_cast<std::size_t>(c)] > hw.core.act_mem_bytes;
  }

  // Per-layer node walk. Graph layout per layer (fixed by build_decode_graph):
  // ln1, k, q, v, then per head {tk,tq,tv,sk,sv_st,tr,qk,sm,sv}, then
  // proj, ra1, ln2, f1, gelu, f2, ra2.
  const std::int64_t nodes_per_layer = 11 + 9 * cx.n_heads;
  const auto n_layers = static_cast<std::int32_t>(
      static_cast<std::int64_t>(g.nodes.size()) / nodes_per_layer);

  // Layer-wide vector redistribution: shards leave each core over its link;
  // fan-in behind a join (cross-channel assembly is absorbed into the
  // downstream broadcast term).
  auto shard_out_links = [&](std::int32_t node, std::int32_t layer, std::int32_t dep,
                             std::int64_t total_bytes, std::vector<std::int32_t>& links) {
    links.clear();
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      const std::int64_t share =
          total_bytes / hw.n_cores + ((total_bytes % hw.n_cores) > c ? 1 : 0);
      if (share == 0) continue;
      links.push_back(cx.task(node, res_link(hw, static_cast<std::int32_t>(c)),
                              link_transfer_cycles(share, cx.link_bw, cx.dispatch),
                              OpKind::Transfer, OpClass::DataMove, layer, 0, -1, {dep}));
    }
  };
  // HBM-side output rows come back over the link facing their channel.
  auto pch_out_links = [&](std::int32_t node, std::int32_t layer, const WeightSlicePlan& w,
                           const std::vector<std::int32_t>& pch_tasks,
                           std::vector<std::int32_t>& links) {
    links.clear();
    for (std::int64_t core = 0; core < hw.n_cores; ++core) {
      std::int64_t bytes = 0;
      std::vector<std::int32_t> deps;
      for (std::int32_t ch : hw.link_map[static_cast<std::size_t>(core)]) {
        bytes += w.rows_on_channel(ch) * cx.eb;
        for (std::int64_t p = 0; p < n_pch_per_ch; ++p) {
          const std::int32_t t = pch_tasks[static_cast<std::size_t>(ch * n_pch_per_ch + p)];
          if (t >= 0) deps.push_back(t);
        }
      }
      if (bytes == 0 || deps.empty()) continue;
      links.push_back(cx.task(node, res_link(hw, static_cast<std::int32_t>(core)),
                              link_transfer_cycles(bytes, cx.link_bw, cx.dispatch),
                              OpKind::Transfer, OpClass::DataMove, layer, 0, -1, deps));
    }
  };

  std::vector<std::int32_t> boundary(static_cast<std::size_t>(hw.n_cores), -1);
  std::vector<std::int32_t> scratch_links, tmp;
  std::vector<std::int32_t> pch_tasks(static_cast<std::size_t>(hw.n_pch()), -1);

  for (std::int32_t layer = 0; layer < n_layers; ++layer) {
    const std::int32_t base = static_cast<std::int32_t>(layer * nodes_per_layer);
    const std::int32_t n_ln1 = base, n_k = base + 1, n_q = base + 2, n_v = base + 3;
    const std::int32_t heads_base = base + 4;
    const std::int32_t n_proj = static_cast<std::int32_t>(heads_base + 9 * cx.n_heads);
    const std::int32_t n_ra1 = n_proj + 1, n_ln2 = n_proj + 2, n_f1 = n_proj + 3,
                       n_gelu = n_proj + 4, n_f2 = n_proj + 5, n_ra2 = n_proj + 6;

    // LayerNorm shards + statistics exchange, then the normed vector leaves
    // for the HBM side.
    std::vector<std::int32_t> ln_tasks;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      ln_tasks.push_back(cx.task(
          n_ln1, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
          vcu_cycles(OpKind::LayerNorm, cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
          OpKind::LayerNorm, OpClass::NonLinear, layer, 0, -1,
          {boundary[static_cast<std::size_t>(c)]}));
    }
    std::int32_t ln_done;
    if (hw.n_cores > 1) {
      ln_done = cx.task(n_ln1, res_noc(hw), noc_allgather_cycles(hw.n_cores, 8, hw),
                        OpKind::AllGather, OpClass::NonLinear, layer, 0, -1, ln_tasks);
    } else {
      ln_done = ln_tasks[0];
    }
    shard_out_links(n_ln1, layer, ln_done, cx.d_emb * cx.eb, scratch_links);
    const std::int32_t x_ready = cx.join(scratch_links, n_ln1, layer, 0, -1);

    // QKV generation on the pCHs: one task per (matrix, round, pCH); the
    // round-0 slice carries the broadcast and the input-row activations.
    std::array<std::vector<std::int32_t>, 3> qkv_pch_task;  // [matrix][round*n_pch + pch]
    const std::int32_t qkv_nodes[3] = {n_k, n_q, n_v};
    const auto n_rounds = static_cast<std::int32_t>(alloc.rounds.size());
    for (int mtx = 0; mtx < 3; ++mtx) {
      qkv_pch_task[static_cast<std::size_t>(mtx)].assign(
          static_cast<std::size_t>(n_rounds * hw.n_pch()), -1);
      for (std::int32_t r = 0; r < n_rounds; ++r) {
        const AllocRound& round = alloc.rounds[static_cast<std::size_t>(r)];
        for (std::int64_t ch = 0; ch < hw.n_channels(); ++ch) {
          const std::int64_t h = round.h_begin + ch / round.n_ch;
          if (h >= cx.n_heads) continue;
          const std::int64_t cnt = alloc.dims_count_on_channel(h, ch);
          if (cnt == 0) continue;
          for (std::int64_t p = 0; p < n_pch_per_ch; ++p) {
            const std::int64_t elems = pch_share(cnt * cx.d_emb, cx.d_emb, n_pch_per_ch, p);
            if (elems == 0) continue;
            const HbmGemvCost cost =
                hbm_gemv_cost(elems, cx.d_emb, hw.stack, cx.eb, /*first_slice=*/r == 0);
            const auto pch = static_cast<std::int32_t>(ch * n_pch_per_ch + p);
            qkv_pch_task[static_cast<std::size_t>(mtx)]
                        [static_cast<std::size_t>(r * hw.n_pch() + pch)] =
                cx.task(qkv_nodes[mtx], res_pch(hw, pch), cost.total(), OpKind::GEMV,
                        OpClass::QKVGen, layer, r, static_cast<std::int32_t>(h), {x_ready});
          }
        }
      }
    }

    // Attention heads.
    std::vector<std::int32_t> head_out_links;
    for (std::int64_t h = 0; h < cx.n_heads; ++h) {
      const std::int32_t r = alloc.round_of_head(h);
      const std::int32_t phase = cores.phase_of_head(h);
      const std::int64_t tp = cores.tp_of_head(h);
      const std::int32_t c0 = cores.first_core_of(h);
      const std::int64_t active_tp = std::min<std::int64_t>(tp, seq);
      const std::int64_t owner_idx = seq % tp;  // newest token's row holder
      const std::int32_t owner = c0 + static_cast<std::int32_t>(owner_idx % active_tp);
      const bool streams = core_streams[static_cast<std::size_t>(owner)];
      const AllocRound& round = alloc.rounds[static_cast<std::size_t>(r)];
      const std::int64_t ch_lo = (h - round.h_begin) * round.n_ch;
      const auto nodes = heads_base + static_cast<std::int32_t>(9 * h);
      const std::int32_t n_tk = nodes, n_tq = nodes + 1, n_tv = nodes + 2, n_sk = nodes + 3,
                         n_sv_st = nodes + 4, n_tr = nodes + 5, n_qk = nodes + 6,
                         n_sm = nodes + 7, n_sv = nodes + 8;
      const std::int32_t hd = static_cast<std::int32_t>(h);

      // Fresh q/k/v column deliveries: per source channel over the facing
      // link, one NoC hop when the destination core is elsewhere, then the
      // core-side DMA.
      auto deliver = [&](std::int32_t node, int mtx, std::int32_t dst_core,
                         bool broadcast_group) -> std::int32_t {
        tmp.clear();
        bool reroute = false;
        for (std::int64_t cch = ch_lo; cch < ch_lo + round.n_ch; ++cch) {
          const std::int64_t cnt = alloc.dims_count_on_channel(h, cch);
          if (cnt == 0) continue;
          std::vector<std::int32_t> deps;
          for (std::int64_t p = 0; p < n_pch_per_ch; ++p) {
            const std::int32_t t =
                qkv_pch_task[static_cast<std::size_t>(mtx)]
                            [static_cast<std::size_t>(r * hw.n_pch() + cch * n_pch_per_ch + p)];
            if (t >= 0) deps.push_back(t);
          }
          const std::int32_t src_core = cx.channel_core[static_cast<std::size_t>(cch)];
          if (src_core != dst_core) reroute = true;
          tmp.push_back(cx.task(node, res_link(hw, src_core),
                                link_transfer_cycles(cnt * cx.eb, cx.link_bw, cx.dispatch),
                                OpKind::Transfer, OpClass::DataMove, layer, phase, hd, deps));
        }
        std::int32_t ready = cx.join(tmp, node, layer, phase, hd);
        if (broadcast_group && active_tp > 1) {
          ready = cx.task(node, res_noc(hw),
                          noc_allgather_cycles(active_tp, cx.d_k * cx.eb, hw), OpKind::AllGather,
                          OpClass::DataMove, layer, phase, hd, {ready});
        } else if (reroute) {
          ready = cx.task(node, res_noc(hw), noc_allgather_cycles(2, cx.d_k * cx.eb, hw),
                          OpKind::AllGather, OpClass::DataMove, layer, phase, hd, {ready});
        }
        return ready;
      };

      const std::int32_t k_arrived = deliver(n_tk, 0, owner, false);
      const std::int32_t k_ready =
          cx.task(n_tk, res_core_unit(hw, owner, ResourceKind::TransferUnit),
                  transfer_unit_cycles(cx.d_k * cx.eb, hw.params, cx.dispatch), OpKind::Transfer,
                  OpClass::DataMove, layer, phase, hd, {k_arrived});
      const std::int32_t q_arrived = deliver(n_tq, 1, c0, true);
      const std::int32_t v_arrived = deliver(n_tv, 2, owner, false);
      const std::int32_t v_ready =
          cx.task(n_tv, res_core_unit(hw, owner, ResourceKind::TransferUnit),
                  transfer_unit_cycles(cx.d_k * cx.eb, hw.params, cx.dispatch), OpKind::Transfer,
                  OpClass::DataMove, layer, phase, hd, {v_arrived});

      const std::int32_t transpose =
          cx.task(n_tr, res_core_unit(hw, owner, ResourceKind::TransposeUnit),
                  transpose_cycles(cx.d_k, 1, hw.params, cx.dispatch), OpKind::Transpose,
                  OpClass::DataMove, layer, phase, hd, {k_ready});

      // Per-core attention partials over the token subsets.
      struct Slot {
        std::int32_t core = -1;
        std::int64_t rows = 0;
        bool is_owner = false;
        std::int32_t v_stream = -1;
        std::int32_t sm = -1;
      };
      std::vector<Slot> slots;
      std::vector<std::int32_t> sm_tasks, sv_tasks, deps;
      for (std::int64_t j = 0; j < active_tp; ++j) {
        Slot sl;
        sl.core = c0 + static_cast<std::int32_t>(j);
        sl.rows = kv_rows_of(seq, active_tp, j);
        if (sl.rows == 0) continue;
        sl.is_owner = sl.core == owner;

        const std::int32_t q_ready =
            cx.task(n_tq, res_core_unit(hw, sl.core, ResourceKind::TransferUnit),
                    transfer_unit_cycles(cx.d_k * cx.eb, hw.params, cx.dispatch), OpKind::Transfer,
                    OpClass::DataMove, layer, phase, hd, {q_arrived});

        std::int32_t k_stream = -1;
        if (streams) {
          const std::int64_t bytes = sl.rows * cx.d_k * cx.eb;
          const std::int32_t kl = cx.task(n_sk, res_link(hw, sl.core),
                                          link_transfer_cycles(bytes, cx.link_bw, cx.dispatch),
                                          OpKind::Transfer, OpClass::DataMove, layer, phase, hd, {});
          k_stream = cx.task(n_sk, res_core_unit(hw, sl.core, ResourceKind::TransferUnit),
                             transfer_unit_cycles(bytes, hw.params, cx.dispatch), OpKind::Transfer,
                             OpClass::DataMove, layer, phase, hd, {kl});
          const std::int32_t vl = cx.task(n_sv_st, res_link(hw, sl.core),
                                          link_transfer_cycles(bytes, cx.link_bw, cx.dispatch),
                                          OpKind::Transfer, OpClass::DataMove, layer, phase, hd, {});
          sl.v_stream = cx.task(n_sv_st, res_core_unit(hw, sl.core, ResourceKind::TransferUnit),
                                transfer_unit_cycles(bytes, hw.params, cx.dispatch),
                                OpKind::Transfer, OpClass::DataMove, layer, phase, hd, {vl});
        }

        // qk: writes cover streamed re-fill or the owner's fresh column.
        const std::int64_t k_writes =
            streams ? sl.rows * cx.d_k * cx.eb : (sl.is_owner ? cx.d_k * cx.eb : 0);
        deps.clear();
        deps.push_back(q_ready);
        if (sl.is_owner) deps.push_back(transpose);
        if (k_stream >= 0) deps.push_back(k_stream);
        const std::int32_t qk = cx.task(
            n_qk, res_core_unit(hw, sl.core, ResourceKind::PIMUnit),
            pimunit_gemv_cycles(cx.d_k, sl.rows, k_writes, hw.core, hw.params, cx.dispatch, cx.eb),
            OpKind::GEMV, OpClass::Attention, layer, phase, hd, deps);

        sl.sm = cx.task(n_sm, res_core_unit(hw, sl.core, ResourceKind::VCU),
                        vcu_cycles(OpKind::Softmax, seq, active_tp, hw.core, hw.params, cx.dispatch),
                        OpKind::Softmax, OpClass::NonLinear, layer, phase, hd, {qk});
        sm_tasks.push_back(sl.sm);
        slots.push_back(sl);
      }
      std::int32_t sm_done = cx.join(sm_tasks, n_sm, layer, phase, hd);
      if (slots.size() > 1) {
        sm_done = cx.task(n_sm, res_noc(hw),
                          noc_allgather_cycles(static_cast<std::int64_t>(slots.size()), 4, hw),
                          OpKind::AllGather, OpClass::NonLinear, layer, phase, hd, {sm_done});
      }
      for (const Slot& sl : slots) {
        const std::int64_t v_writes =
            streams ? sl.rows * cx.d_k * cx.eb : (sl.is_owner ? cx.d_k * cx.eb : 0);
        deps.clear();
        deps.push_back(slots.size() > 1 ? sm_done : sl.sm);
        if (sl.is_owner) deps.push_back(v_ready);
        if (sl.v_stream >= 0) deps.push_back(sl.v_stream);
        sv_tasks.push_back(cx.task(
            n_sv, res_core_unit(hw, sl.core, ResourceKind::PIMUnit),
            pimunit_gemv_cycles(sl.rows, cx.d_k, v_writes, hw.core, hw.params, cx.dispatch, cx.eb),
            OpKind::GEMV, OpClass::Attention, layer, phase, hd, deps));
      }
      std::int32_t head_out = cx.join(sv_tasks, n_sv, layer, phase, hd);
      if (active_tp > 1) {
        head_out = cx.task(n_sv, res_noc(hw), noc_allgather_cycles(active_tp, cx.d_k * cx.eb, hw),
                           OpKind::AllGather, OpClass::Attention, layer, phase, hd, {head_out});
      }
      const std::int32_t out_core = active_tp > 1 ? c0 : owner;
      const std::int32_t out_dma =
          cx.task(n_sv, res_core_unit(hw, out_core, ResourceKind::TransferUnit),
                  transfer_unit_cycles(cx.d_k * cx.eb, hw.params, cx.dispatch), OpKind::Transfer,
                  OpClass::DataMove, layer, phase, hd, {head_out});
      head_out_links.push_back(cx.task(n_sv, res_link(hw, out_core),
                                       link_transfer_cycles(cx.d_k * cx.eb, cx.link_bw, cx.dispatch),
                                       OpKind::Transfer, OpClass::DataMove, layer, phase, hd,
                                       {out_dma}));
    }

    // Projection over all pCHs, then redistribute to the cores.
    const std::int32_t proj_x = cx.join(head_out_links, n_proj, layer, 0, -1);
    head_out_links.clear();
    auto fc_pch_tasks = [&](std::int32_t node, const WeightSlicePlan& w, OpClass cls,
                            std::int64_t input_len, std::int32_t dep) {
      for (std::int64_t ch = 0; ch < hw.n_channels(); ++ch) {
        const std::int64_t elems = w.elems_on_channel(ch);
        for (std::int64_t p = 0; p < n_pch_per_ch; ++p) {
          const std::int64_t share = pch_share(elems, w.cols, n_pch_per_ch, p);
          const auto pch = static_cast<std::int32_t>(ch * n_pch_per_ch + p);
          if (share == 0) {
            pch_tasks[static_cast<std::size_t>(pch)] = -1;
            continue;
          }
          const HbmGemvCost cost = hbm_gemv_cost(share, input_len, hw.stack, cx.eb, true);
          pch_tasks[static_cast<std::size_t>(pch)] =
              cx.task(node, res_pch(hw, pch), cost.total(), OpKind::GEMV, cls, layer, 0, -1, {dep});
        }
      }
    };

    fc_pch_tasks(n_proj, plan.proj, OpClass::Projection, cx.d_emb, proj_x);
    pch_out_links(n_proj, layer, plan.proj, pch_tasks, scratch_links);
    const std::int32_t proj_out = cx.join(scratch_links, n_proj, layer, 0, -1);

    std::vector<std::int32_t> ra1_tasks, ln2_tasks;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      ra1_tasks.push_back(
          cx.task(n_ra1, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
                  vcu_cycles(OpKind::ResAdd, cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
                  OpKind::ResAdd, OpClass::NonLinear, layer, 0, -1,
                  {proj_out, boundary[static_cast<std::size_t>(c)]}));
    }
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      ln2_tasks.push_back(cx.task(
          n_ln2, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
          vcu_cycles(OpKind::LayerNorm, cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
          OpKind::LayerNorm, OpClass::NonLinear, layer, 0, -1,
          {ra1_tasks[static_cast<std::size_t>(c)]}));
    }
    std::int32_t ln2_done;
    if (hw.n_cores > 1) {
      ln2_done = cx.task(n_ln2, res_noc(hw), noc_allgather_cycles(hw.n_cores, 8, hw),
                         OpKind::AllGather, OpClass::NonLinear, layer, 0, -1, ln2_tasks);
    } else {
      ln2_done = ln2_tasks[0];
    }
    shard_out_links(n_ln2, layer, ln2_done, cx.d_emb * cx.eb, scratch_links);
    const std::int32_t x2_ready = cx.join(scratch_links, n_ln2, layer, 0, -1);

    fc_pch_tasks(n_f1, plan.ffn1, OpClass::FFN, cx.d_emb, x2_ready);
    pch_out_links(n_f1, layer, plan.ffn1, pch_tasks, scratch_links);
    const std::int32_t f1_out = cx.join(scratch_links, n_f1, layer, 0, -1);

    std::vector<std::int32_t> gelu_tasks;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      gelu_tasks.push_back(
          cx.task(n_gelu, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
                  vcu_cycles(OpKind::GELU, cx.d_ffn, hw.n_cores, hw.core, hw.params, cx.dispatch),
                  OpKind::GELU, OpClass::NonLinear, layer, 0, -1, {f1_out}));
    }
    const std::int32_t gelu_done = cx.join(gelu_tasks, n_gelu, layer, 0, -1);
    shard_out_links(n_gelu, layer, gelu_done, cx.d_ffn * cx.eb, scratch_links);
    const std::int32_t x3_ready = cx.join(scratch_links, n_gelu, layer, 0, -1);

    fc_pch_tasks(n_f2, plan.ffn2, OpClass::FFN, cx.d_ffn, x3_ready);
    pch_out_links(n_f2, layer, plan.ffn2, pch_tasks, scratch_links);
    const std::int32_t f2_out = cx.join(scratch_links, n_f2, layer, 0, -1);

    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      boundary[static_cast<std::size_t>(c)] =
          cx.task(n_ra2, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
                  vcu_cycles(OpKind::ResAdd, cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
                  OpKind::ResAdd, OpClass::NonLinear, layer, 0, -1,
                  {f2_out, ra1_tasks[static_cast<std::size_t>(c)]});
    }
  }
  return tg;
}

// --------------------------------- prefill --------------------------------

static TaskGraph lower_prefill(const OperatorGraph& g, const MappingPlan& plan,
                               const HardwareConfig& hw) {
  TaskGraph tg;
  LowerCtx cx = make_ctx(g, plan, hw, tg);
  const std::int64_t L = g.len_in;
  const CoreAssignment& cores = plan.cores;

  // Graph layout per layer (fixed by build_prefill_graph): tw_k,tw_q,tw_v,
  // tw_p,tw_f1,tw_f2, ln1, k, q, v, per head {tr,qk,sm,sv}, proj, ra1, ln2,
  // f1, gelu, f2, ra2.
  const std::int64_t nodes_per_layer = 17 + 4 * cx.n_heads;
  const auto n_layers = static_cast<std::int32_t>(
      static_cast<std::int64_t>(g.nodes.size()) / nodes_per_layer);

  std::vector<std::int32_t> boundary(static_cast<std::size_t>(hw.n_cores), -1);
  std::vector<std::int32_t> tmp;

  // Balanced row split of the prompt across a tp group.
  auto row_share = [&](std::int64_t tp, std::int64_t j) {
    return L / tp + ((L % tp) > j ? 1 : 0);
  };

  for (std::int32_t layer = 0; layer < n_layers; ++layer) {
    const std::int32_t base = static_cast<std::int32_t>(layer * nodes_per_layer);
    const std::int32_t n_twk = base, n_twq = base + 1, n_twv = base + 2, n_twp = base + 3,
                       n_twf1 = base + 4, n_twf2 = base + 5, n_ln1 = base + 6, n_k = base + 7,
                       n_q = base + 8, n_v = base + 9;
    const std::int32_t heads_base = base + 10;
    const std::int32_t n_proj = static_cast<std::int32_t>(heads_base + 4 * cx.n_heads);
    const std::int32_t n_ra1 = n_proj + 1, n_ln2 = n_proj + 2, n_f1 = n_proj + 3,
                       n_gelu = n_proj + 4, n_f2 = n_proj + 5, n_ra2 = n_proj + 6;

    // LayerNorm shards token-split across all cores; rows are independent so
    // no exchange is needed.
    std::vector<std::int32_t> ln_tasks;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      ln_tasks.push_back(cx.task(
          n_ln1, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
          vcu_cycles(OpKind::LayerNorm, L * cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
          OpKind::LayerNorm, OpClass::NonLinear, layer, 0, -1,
          {boundary[static_cast<std::size_t>(c)]}));
    }
    const std::int32_t x_ready = cx.join(ln_tasks, n_ln1, layer, 0, -1);

    // Per-phase, per-core QKV column slices with weight streams feeding them;
    // K before Q before V on each core (prefetch pipeline order).
    struct HeadSlices {
      std::vector<std::int32_t> k, q, v, tr;  // per tp-group member
    };
    std::vector<HeadSlices> heads(static_cast<std::size_t>(cx.n_heads));
    const std::int32_t qkv_nodes[3] = {n_k, n_q, n_v};
    const std::int32_t tw_nodes[3] = {n_twk, n_twq, n_twv};
    for (std::int64_t h = 0; h < cx.n_heads; ++h) {
      const std::int32_t phase = cores.phase_of_head(h);
      const std::int64_t tp = cores.tp_of_head(h);
      const std::int32_t c0 = cores.first_core_of(h);
      const std::int64_t cols = cx.d_k / tp;
      const auto hd = static_cast<std::int32_t>(h);
      HeadSlices& hs = heads[static_cast<std::size_t>(h)];
      for (std::int64_t j = 0; j < tp; ++j) {
        const auto core = static_cast<std::int32_t>(c0 + j);
        const std::int64_t cols_j = cols + ((cx.d_k % tp) > j ? 1 : 0);
        if (cols_j == 0) continue;
        std::int32_t prev_mtx = -1;
        for (int mtx = 0; mtx < 3; ++mtx) {
          const std::int32_t w_stream =
              cx.task(tw_nodes[mtx], res_link(hw, core),
                      link_transfer_cycles(cx.d_emb * cols_j * cx.eb, cx.link_bw, cx.dispatch),
                      OpKind::Transfer, OpClass::DataMove, layer, phase, hd, {});
          tmp.clear();
          tmp.push_back(x_ready);
          tmp.push_back(w_stream);
          if (prev_mtx >= 0) tmp.push_back(prev_mtx);
          const std::int32_t gemm =
              cx.task(qkv_nodes[mtx], res_core_unit(hw, core, ResourceKind::TCU),
                      tcu_gemm_cycles(L, cx.d_emb, cols_j, hw.core, cx.dispatch), OpKind::GEMM,
                      OpClass::QKVGen, layer, phase, hd, tmp);
          prev_mtx = gemm;
          (mtx == 0 ? hs.k : mtx == 1 ? hs.q : hs.v).push_back(gemm);
          if (mtx == 0) {
            hs.tr.push_back(cx.task(
                heads_base + 4 * hd, res_core_unit(hw, core, ResourceKind::TransposeUnit),
                transpose_cycles(L, cols_j, hw.params, cx.dispatch), OpKind::Transpose,
                OpClass::DataMove, layer, phase, hd, {gemm}));
          }
        }
      }
    }

    // Attention per head: row-split qk/softmax/sv over the tp group.
    std::vector<std::int32_t> att_outs;
    for (std::int64_t h = 0; h < cx.n_heads; ++h) {
      const std::int32_t phase = cores.phase_of_head(h);
      const std::int64_t tp = cores.tp_of_head(h);
      const std::int32_t c0 = cores.first_core_of(h);
      const auto hd = static_cast<std::int32_t>(h);
      const auto nodes = heads_base + static_cast<std::int32_t>(4 * h);
      const std::int32_t n_qk = nodes + 1, n_sm = nodes + 2, n_sv = nodes + 3;
      HeadSlices& hs = heads[static_cast<std::size_t>(h)];
      const std::int32_t q_all = cx.join(hs.q, n_qk, layer, phase, hd);
      const std::int32_t kt_all = cx.join(hs.tr, n_qk, layer, phase, hd);
      const std::int32_t v_all = cx.join(hs.v, n_sv, layer, phase, hd);
      for (std::int64_t j = 0; j < tp; ++j) {
        const auto core = static_cast<std::int32_t>(c0 + j);
        const std::int64_t rows = row_share(tp, j);
        if (rows == 0) continue;
        const std::int32_t qk =
            cx.task(n_qk, res_core_unit(hw, core, ResourceKind::TCU),
                    tcu_gemm_cycles(rows, cx.d_k, L, hw.core, cx.dispatch), OpKind::GEMM,
                    OpClass::Attention, layer, phase, hd, {q_all, kt_all});
        const std::int32_t sm =
            cx.task(n_sm, res_core_unit(hw, core, ResourceKind::VCU),
                    vcu_cycles(OpKind::Softmax, L * L, tp, hw.core, hw.params, cx.dispatch),
                    OpKind::Softmax, OpClass::NonLinear, layer, phase, hd, {qk});
        att_outs.push_back(cx.task(n_sv, res_core_unit(hw, core, ResourceKind::TCU),
                                   tcu_gemm_cycles(rows, L, cx.d_k, hw.core, cx.dispatch),
                                   OpKind::GEMM, OpClass::Attention, layer, phase, hd,
                                   {sm, v_all}));
      }
    }
    const std::int32_t att_done = cx.join(att_outs, n_proj, layer, 0, -1);

    // Column-split FC layers over all cores with their weight streams.
    auto fc_tasks = [&](std::int32_t node, std::int32_t tw_node, std::int64_t K_dim,
                        std::int64_t N_dim, OpClass cls, std::int32_t dep,
                        std::vector<std::int32_t>& outs) {
      outs.clear();
      for (std::int64_t c = 0; c < hw.n_cores; ++c) {
        const std::int64_t cols_c = N_dim / hw.n_cores + ((N_dim % hw.n_cores) > c ? 1 : 0);
        if (cols_c == 0) continue;
        const auto core = static_cast<std::int32_t>(c);
        const std::int32_t w =
            cx.task(tw_node, res_link(hw, core),
                    link_transfer_cycles(K_dim * cols_c * cx.eb, cx.link_bw, cx.dispatch),
                    OpKind::Transfer, OpClass::DataMove, layer, 0, -1, {});
        outs.push_back(cx.task(node, res_core_unit(hw, core, ResourceKind::TCU),
                               tcu_gemm_cycles(L, K_dim, cols_c, hw.core, cx.dispatch),
                               OpKind::GEMM, cls, layer, 0, -1, {dep, w}));
      }
    };

    std::vector<std::int32_t> fc_outs;
    fc_tasks(n_proj, n_twp, cx.d_emb, cx.d_emb, OpClass::Projection, att_done, fc_outs);
    const std::int32_t proj_done = cx.join(fc_outs, n_proj, layer, 0, -1);

    std::vector<std::int32_t> ra1_tasks;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      ra1_tasks.push_back(cx.task(
          n_ra1, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
          vcu_cycles(OpKind::ResAdd, L * cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
          OpKind::ResAdd, OpClass::NonLinear, layer, 0, -1,
          {proj_done, boundary[static_cast<std::size_t>(c)]}));
    }
    std::vector<std::int32_t> ln2_tasks;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      ln2_tasks.push_back(cx.task(
          n_ln2, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
          vcu_cycles(OpKind::LayerNorm, L * cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
          OpKind::LayerNorm, OpClass::NonLinear, layer, 0, -1,
          {ra1_tasks[static_cast<std::size_t>(c)]}));
    }
    const std::int32_t ln2_done = cx.join(ln2_tasks, n_ln2, layer, 0, -1);

    fc_tasks(n_f1, n_twf1, cx.d_emb, cx.d_ffn, OpClass::FFN, ln2_done, fc_outs);
    const std::int32_t f1_done = cx.join(fc_outs, n_f1, layer, 0, -1);
    std::vector<std::int32_t> gelu_tasks;
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      gelu_tasks.push_back(cx.task(
          n_gelu, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
          vcu_cycles(OpKind::GELU, L * cx.d_ffn, hw.n_cores, hw.core, hw.params, cx.dispatch),
          OpKind::GELU, OpClass::NonLinear, layer, 0, -1, {f1_done}));
    }
    const std::int32_t gelu_done = cx.join(gelu_tasks, n_gelu, layer, 0, -1);
    fc_tasks(n_f2, n_twf2, cx.d_ffn, cx.d_emb, OpClass::FFN, gelu_done, fc_outs);
    const std::int32_t f2_done = cx.join(fc_outs, n_f2, layer, 0, -1);
    for (std::int64_t c = 0; c < hw.n_cores; ++c) {
      boundary[static_cast<std::size_t>(c)] = cx.task(
          n_ra2, res_core_unit(hw, static_cast<std::int32_t>(c), ResourceKind::VCU),
          vcu_cycles(OpKind::ResAdd, L * cx.d_emb, hw.n_cores, hw.core, hw.params, cx.dispatch),
          OpKind::ResAdd, OpClass::NonLinear, layer, 0, -1,
          {f2_done, ra1_tasks[static_cast<std::size_t>(c)]});
    }
  }
  return tg;
}

// ------------------------------- simulation -------------------------------

SimResult simulate_inference(const ModelConfig& m, const HardwareConfig& hw,
                             const InferenceRequest& req, const SimOptions& opts) {
  validate_model(m);
  if (req.len_in < 1) throw ConfigError("len_in must be >= 1");
  if (req.len_out < 0) throw ConfigError("len_out must be >= 0");

  const DerivedMetrics dm = derive_metrics(hw);
  const std::int64_t footprint =
      model_weight_bytes(m) + kv_cache_bytes(m, req.len_in + req.len_out);
  if (footprint > dm.dram_capacity_bytes) {
    throw CapacityError("model weights + KV cache (" + std::to_string(footprint) +
                        " B) exceed DRAM capacity (" + std::to_string(dm.dram_capacity_bytes) +
                        " B)");
  }

  SimResult res;
  LatencyReport& rep = res.report;
  rep.freq_hz = static_cast<double>(hw.core.freq_hz);
  const std::int32_t n_res = total_resources(hw);
  std::vector<std::int64_t> busy_total(static_cast<std::size_t>(n_res), 0);

  Timeline tl;
  CriticalPath cp;

  auto accumulate = [&](const TaskGraph& tg, Breakdown& into, std::int64_t time_offset,
                        std::int32_t segment) {
    schedule(tg, n_res, tl);
    attribute_critical(tg, tl, cp);
    const std::int32_t pch_lo = static_cast<std::int32_t>(hw.n_cores) * kUnitsPerCore;
    const std::int32_t pch_hi = pch_lo + static_cast<std::int32_t>(hw.n_pch());
    for (std::size_t i = 0; i < tg.tasks.size(); ++i) {
      const Task& t = tg.tasks[i];
      if (t.resource < 0) continue;
      into.busy_cycles[static_cast<std::size_t>(t.op_class)] += t.duration;
      if (t.resource >= pch_lo && t.resource < pch_hi)
        into.hbm_busy_cycles[static_cast<std::size_t>(t.op_class)] += t.duration;
    }
    for (int c = 0; c < kNumOpClasses; ++c)
      into.critical_cycles[static_cast<std::size_t>(c)] += cp.cycles_by_class[static_cast<std::size_t>(c)];
    for (std::size_t r = 0; r < busy_total.size(); ++r) busy_total[r] += tl.busy[r];
    if (opts.collect_trace && segment >= 0) {
      for (std::size_t i = 0; i < tg.tasks.size(); ++i) {
        const Task& t = tg.tasks[i];
        if (t.resource < 0) continue;
        TraceEvent ev;
        ev.resource = t.resource;
        ev.kind = t.kind;
        ev.op_class = t.op_class;
        ev.layer = t.layer;
        ev.head = t.head;
        ev.start_cycle = tl.start[i];
        ev.end_cycle = tl.end[i];
        ev.time_offset_cycles = time_offset;
        ev.segment = segment;
        res.trace.push_back(ev);
      }
    }
    return tl.end_cycle;
  };

  // Prefill.
  {
    const MappingPlan plan = build_mapping_plan(m, hw, Phase::Prefill);
    const OperatorGraph g = build_prefill_graph(m, req);
    const TaskGraph tg = lower_to_tasks(g, plan, hw);
    rep.prefill_cycles = accumulate(tg, rep.breakdown, 0, opts.collect_trace ? 0 : -1);
  }

  // Decode, strictly serialized across tokens.
  if (req.len_out > 0) {
    const MappingPlan plan = build_mapping_plan(m, hw, Phase::Decode);
    rep.decode_token_cycles.reserve(static_cast<std::size_t>(req.len_out));
    std::int64_t offset = rep.prefill_cycles;
    for (std::int64_t t = 0; t < req.len_out; ++t) {
      const bool traced =
          opts.collect_trace && (t == 0 || t == 1 || t == req.len_out - 1);
      const OperatorGraph g = build_decode_graph(m, kv_cache_state(m, req.len_in + t));
      const TaskGraph tg = lower_to_tasks(g, plan, hw);
      const std::int64_t cycles = accumulate(tg, rep.decode_breakdown, offset,
                                             traced ? static_cast<std::int32_t>(t) + 1 : -1);
      rep.decode_token_cycles.push_back(cycles);
      rep.decode_cycles += cycles;
      offset += cycles;
    }
    for (int c = 0; c < kNumOpClasses; ++c) {
      rep.breakdown.busy_cycles[static_cast<std::size_t>(c)] +=
          rep.decode_breakdown.busy_cycles[static_cast<std::size_t>(c)];
      rep.breakdown.hbm_busy_cycles[static_cast<std::size_t>(c)] +=
          rep.decode_breakdown.hbm_busy_cycles[static_cast<std::size_t>(c)];
      rep.breakdown.critical_cycles[static_cast<std::size_t>(c)] +=
          rep.decode_breakdown.critical_cycles[static_cast<std::size_t>(c)];
    }
  }

  rep.total_cycles = rep.prefill_cycles + rep.decode_cycles;
  const auto resources = enumerate_resources(hw);
  rep.utilization.reserve(resources.size());
  for (const ResourceInfo& r : resources) {
    ResourceUtil u;
    u.resource = r.id;
    u.name = r.name;
    u.busy_cycles = busy_total[static_cast<std::size_t>(r.id)];
    u.utilization = rep.total_cycles > 0 ? static_cast<double>(u.busy_cycles) /
                                               static_cast<double>(rep.total_cycles)
                                         : 0.0;
    rep.utilization.push_back(std::move(u));
  }
  return res;
}

// --------------------------------- tracing --------------------------------

std::string emit_trace(std::span<const TraceEvent> events, const HardwareConfig& hw) {
  using json = nlohmann::ordered_json;
  const auto resources = enumerate_resources(hw);
  const double cycles_per_us = static_cast<double>(hw.core.freq_hz) / 1e6;

  auto pid_of = [&](std::int32_t resource) {
    const std::int32_t pch_lo = static_cast<std::int32_t>(hw.n_cores) * kUnitsPerCore;
    const std::int32_t pch_hi = pch_lo + static_cast<std::int32_t>(hw.n_pch());
    if (resource < pch_lo) return 1;               // SRAM cores
    if (resource < pch_hi) return 2;               // HBM pCHs
    if (resource < res_noc(hw)) return 3;          // links
    return 4;                                      // NoC
  };
  static constexpr const char* pid_names[] = {"", "sram-pim", "hbm-pim", "links", "noc"};

  json out;
  out["displayTimeUnit"] = "ms";
  json& evs = out["traceEvents"] = json::array();
  for (int pid = 1; pid <= 4; ++pid) {
    json meta;
    meta["ph"] = "M";
    meta["name"] = "process_name";
    meta["pid"] = pid;
    meta["args"] = {{"name", pid_names[pid]}};
    evs.push_back(std::move(meta));
  }
  for (const ResourceInfo& r : resources) {
    json meta;
    meta["ph"] = "M";
    meta["name"] = "thread_name";
    meta["pid"] = pid_of(r.id);
    meta["tid"] = r.id;
    meta["args"] = {{"name", r.name}};
    evs.push_back(std::move(meta));
  }
  for (const TraceEvent& e : events) {
    json ev;
    std::string name = to_string(e.kind);
    name += " L" + std::to_string(e.layer);
    if (e.head >= 0) name += " H" + std::to_string(e.head);
    ev["name"] = std::move(name);
    ev["ph"] = "X";
    ev["pid"] = pid_of(e.resource);
    ev["tid"] = e.resource;
    ev["ts"] = static_cast<double>(e.time_offset_cycles + e.start_cycle) / cycles_per_us;
    ev["dur"] = static_cast<double>(e.end_cycle - e.start_cycle) / cycles_per_us;
    ev["args"] = {{"class", to_string(e.op_class)},
                  {"segment", e.segment == 0 ? std::string("prefill")
                                             : "token" + std::to_string(e.segment - 1)}};
    evs.push_back(std::move(ev));
  }
  return out.dump(1);
}

}  // namespace hpim
