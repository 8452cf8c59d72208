#pragma once

#include <chrono>
#include <cstdint>
#include <ostream>
#include <span>
#include <string>

#include "crfgrad/corpus.hpp"
#include "crfgrad/training.hpp"

namespace crfgrad {

inline const char* engine_name(EngineKind engine) {
  switch (engine) {
    case EngineKind::kFbFull:
      return "fb-full";
    case EngineKind::kFbRecompute:
      return "fb-recompute";
    case EngineKind::kFbCheckpoint:
      return "fb-checkpoint";
    case EngineKind::kEmp:
      return "emp";
  }
  return "?";
}

inline EngineKind engine_from_name(const std::string& name) {
  if (name == "fb-full") return EngineKind::kFbFull;
  if (name == "fb-recompute") return EngineKind::kFbRecompute;
  if (name == "fb-checkpoint") return EngineKind::kFbCheckpoint;
  if (name == "emp") return EngineKind::kEmp;
  throw Error("bad-engine", "unknown engine '" + name + "'");
}

// One measured gradient run. seq_passes is position_reads / T: how many
// times the engine streamed over the input sequence.
struct BenchRecord {
  std::string engine;
  int t = 0;
  int n = 0;
  std::size_t m = 0;
  double avg_active = 0.0;
  double wall_seconds = 0.0;
  std::int64_t peak_cells = 0;
  OpCounters ops;
  double seq_passes = 0.0;
};

inline BenchRecord run_engine_bench(EngineKind engine, const CrfModel& model,
                                    const SequenceInstance& x) {
  EngineStats stats;
  const auto started = std::chrono::steady_clock::now();
  (void)sequence_gradient(model, x, engine, &stats);
  const auto finished = std::chrono::steady_clock::now();

  BenchRecord rec;
  rec.engine = engine_name(engine);
  rec.t = x.length();
  rec.n = model.label_count();
  rec.m = model.feature_count();
  Corpus one;
  one.instances.push_back(x);
  rec.avg_active = measured_avg_active(model, one);
  rec.wall_seconds = std::chrono::duration<double>(finished - started).count();
  rec.peak_cells = stats.mem.peak();
  rec.ops = stats.ops;
  rec.seq_passes = static_cast<double>(stats.position_reads) / static_cast<double>(x.length());
  return rec;
}

// Stable CSV: identical inputs give byte-identical files when wall-clock
// output is disabled.
inline void write_bench_csv(std::ostream& out, std::span<const BenchRecord> records,
                            std::uint64_t seed, bool include_wall) {
  out << "# crfgrad bench, seed=" << seed << "\n";
  out << "engine,T,N,M,A,wall_seconds,peak_cells,log_adds,adds,muls,log_evals,seq_passes\n";
  for (const auto& rec : records) {
    out << rec.engine << ',' << rec.t << ',' << rec.n << ',' << rec.m << ',' << rec.avg_active
        << ',';
    if (include_wall) {
      out << rec.wall_seconds;
    } else {
      out << 0;
    }
    out << ',' << rec.peak_cells << ',' << rec.ops.log_adds << ',' << rec.ops.adds << ','
        << rec.ops.muls << ',' << rec.ops.log_evals << ',' << rec.seq_passes << "\n";
  }
}

}  // namespace crfgrad
