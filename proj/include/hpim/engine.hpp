#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "hpim/mapping.hpp"
#include "hpim/timing.hpp"

namespace hpim {

// A schedulable unit. resource = -1 marks a zero-duration join pseudo-task
// that completes the instant its dependencies do (dependency fan-in only).
struct Task {
  std::int32_t node_id = -1;   // originating OpNode (or -1 for synthetic)
  std::int32_t resource = -1;
  std::int64_t duration = 0;
  OpKind kind = OpKind::Transfer;
  OpClass op_class = OpClass::DataMove;
  std::int32_t layer = 0;
  std::int32_t round = 0;  // allocation round / core phase
  std::int32_t head = -1;
  std::int32_t deps_begin = 0;
  std::int32_t deps_count = 0;
};

struct TaskGraph {
  std::vector<Task> tasks;
  std::vector<std::int32_t> dep_pool;

  std::span<const std::int32_t> deps(const Task& t) const {
    return {dep_pool.data() + t.deps_begin, static_cast<std::size_t>(t.deps_count)};
  }
  std::int32_t add(Task t, std::span<const std::int32_t> deps);
  std::int32_t add(Task t, std::initializer_list<std::int32_t> deps) {
    return add(t, std::span<const std::int32_t>(deps.begin(), deps.size()));
  }
  void clear() {
    tasks.clear();
    dep_pool.clear();
  }
};

struct ResourceSpan {
  std::int32_t begin = 0, count = 0;  // into Timeline::order
};

struct Timeline {
  std::vector<std::int64_t> start, end;
  std::vector<std::int32_t> res_pred;    // task that ran just before on the same resource
  std::vector<std::int32_t> order;       // task ids grouped by resource, start-sorted
  std::vector<ResourceSpan> per_resource;
  std::vector<std::int64_t> busy;        // per resource
  std::int64_t end_cycle = 0;

  void reset(std::size_t n_tasks, std::size_t n_resources);
};

// Deterministic list scheduling; ready tasks dispatch in
// (layer, round, head, task-id) priority. Throws ConfigError on cycles.
// Fills start/end/res_pred/busy/end_cycle; order stays empty until
// finalize_order is called.
void schedule(const TaskGraph& g, std::int32_t n_resources, Timeline& out);
Timeline schedule(const TaskGraph& g, std::int32_t n_resources);
void finalize_order(const TaskGraph& g, std::int32_t n_resources, Timeline& tl);

struct CriticalPath {
  std::array<std::int64_t, kNumOpClasses> cycles_by_class{};
  std::vector<std::int64_t> cycles_by_task;  // contribution of each task
};
// Walks the schedule backwards from the task reaching end_cycle; every cycle
// of the span is attributed to exactly one task (sum == end_cycle).
CriticalPath attribute_critical(const TaskGraph& g, const Timeline& tl);
void attribute_critical(const TaskGraph& g, const Timeline& tl, CriticalPath& out);

struct Breakdown {
  std::array<std::int64_t, kNumOpClasses> busy_cycles{};
  std::array<std::int64_t, kNumOpClasses> hbm_busy_cycles{};  // pCH resources only
  std::array<std::int64_t, kNumOpClasses> critical_cycles{};
};
Breakdown aggregate_breakdown(const TaskGraph& g, const Timeline& tl, const HardwareConfig& hw);

struct TraceEvent {
  std::int32_t resource = 0;
  OpKind kind = OpKind::Transfer;
  OpClass op_class = OpClass::DataMove;
  std::int32_t layer = 0;
  std::int32_t head = -1;
  std::int64_t start_cycle = 0, end_cycle = 0;
  std::int64_t time_offset_cycles = 0;  // segment base on the global axis
  std::int32_t segment = 0;             // 0 = prefill, i>0 = decode token i
};

struct ResourceUtil {
  std::int32_t resource = 0;
  std::string name;
  std::int64_t busy_cycles = 0;
  double utilization = 0.0;
};

struct LatencyReport {
  std::int64_t prefill_cycles = 0;
  std::int64_t decode_cycles = 0;
  std::int64_t total_cycles = 0;
  std::vector<std::int64_t> decode_token_cycles;
  Breakdown breakdown;  // prefill + decode combined
  Breakdown decode_breakdown;
  std::vector<ResourceUtil> utilization;
  double freq_hz = 1e9;

  double us(std::int64_t cycles) const { return static_cast<double>(cycles) / freq_hz * 1e6; }
};

struct SimOptions {
  bool collect_trace = false;
};

struct SimResult {
  LatencyReport report;
  std::vector<TraceEvent> trace;  // prefill + decode tokens {first, second, last}
};

TaskGraph lower_to_tasks(const OperatorGraph& graph, const MappingPlan& plan,
                         const HardwareConfig& hw);
SimResult simulate_inference(const ModelConfig& m, const HardwareConfig& hw,
                             const InferenceRequest& req, const SimOptions& opts = {});

// Chrome trace event JSON (ph:"X"; pid = subsystem, tid = resource).
std::string emit_trace(std::span<const TraceEvent> events, const HardwareConfig& hw);

}  // namespace hpim
