// Copyright 2026 The LGD Authors.
// SPDX-License-Identifier: Apache-2.0

// Paired experiment suites. Every cell of a suite is one in-memory training
// run; arms of the same seed share the world and the batch sequence, so the
// difference between arms isolates the loss or text-bank change.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lgd/config.hpp"
#include "lgd/train.hpp"

namespace lgd {

inline constexpr std::uint64_t kForeignSeedOffset = 1000003;

struct ArmSpec {
  std::string name;
  RunConfig cfg;  // seed and world seed are overwritten per cell
};

struct CellResult {
  std::string arm;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::map<std::string, double> metrics;
};

struct SuiteResult {
  std::string suite;
  std::vector<std::string> arms;
  std::vector<std::uint64_t> seeds;
  std::vector<CellResult> cells;

  bool all_ok() const;
  const CellResult* find(const std::string& arm, std::uint64_t seed) const;
  /// Values of `metric` for `arm`, in seed order; failed cells are skipped.
  std::vector<double> values(const std::string& arm, const std::string& metric) const;
};

struct MeanSe {
  double mean = 0;
  double se = 0;  // sample standard deviation / sqrt(n); 0 for n < 2
  std::size_t n = 0;
};
MeanSe mean_se(const std::vector<double>& v);
/// Statistics of a[i] - b[i] over seeds where both arms succeeded.
MeanSe paired_difference(const SuiteResult& r, const std::string& arm_a, const std::string& arm_b,
                         const std::string& metric);

std::vector<std::string> suite_names();
/// Arms of a named suite built on top of `base`.
std::vector<ArmSpec> suite_arms(const std::string& suite, const RunConfig& base);

/// Trains a single cell and returns its metrics. Throws on failure.
std::map<std::string, double> run_cell(const std::string& suite, const ArmSpec& arm,
                                       std::uint64_t seed);

/// Runs every arm for every seed. Cell failures are recorded, not thrown.
/// `threads` = 0 reads LGD_THREADS, falling back to the hardware count.
SuiteResult run_suite(const std::string& suite, const RunConfig& base,
                      const std::vector<std::uint64_t>& seeds, unsigned threads = 0);

/// CSV with header arm,seed,metric,value (failed cells: metric "failed").
std::string suite_csv(const SuiteResult& r);
std::string suite_summary(const SuiteResult& r);

/// Held-out KL between teacher and student before (at initialization) and
/// after training, both measured against the trained visual bank.
struct AlignmentChange {
  AlignmentDiagnostics before;
  AlignmentDiagnostics after;
  double zeroshot_before = 0;
  double zeroshot_after = 0;
};
AlignmentChange alignment_before_after(const RunConfig& cfg);

/// Default vs. collapse-world settings used by the suites.
RunConfig collapse_base(const RunConfig& base);

unsigned suite_thread_count(unsigned requested);

}  // namespace lgd
