#pragma once

#include <map>
#include <string>
#include <vector>

#include "fcd/evalkit.hpp"
#include "fcd/pipeline.hpp"
#include "fcd/synthworld.hpp"

namespace fcd::evalkit {

// One detector variant evaluated on the seen-method and unseen-method test
// splits (pristine frames appear in both as the real class).
struct VariantCell {
  std::string variant;
  std::string split;  // "seen" | "unseen"
  double auc = 0;
  AccuracyReport fixed_zero;
  AccuracyReport best_on_test;
};

struct AblationReport {
  std::vector<VariantCell> cells;  // 4 variants x 2 splits
  std::map<std::string, std::vector<std::pair<double, double>>> roc_seen;    // variant -> curve
  std::map<std::string, std::vector<std::pair<double, double>>> roc_unseen;  // variant -> curve
  std::map<std::string, size_t> threshold_histogram;
  size_t frames_scored = 0;
  double frames_per_second = 0;

  double auc_of(const std::string& variant, const std::string& split) const;
};

// Scores every swap-relevant test frame once through the shared cascade,
// then applies each variant: discrepancy-only (-L1 of v_d), the standalone
// binary network, the fused frozen detector, and the fused end-to-end
// detector.
AblationReport run_ablation(const segnet::SegModel& seg, const fusion::FusionModel& frozen,
                            const fusion::FusionModel& end_to_end, const identnet::IdModel& es_pretrained,
                            const pipeline::ScorerConfig& scorer_cfg,
                            const std::vector<synthworld::StoredSample>& test_samples, int threads);

void emit_report(const AblationReport& report, const std::string& out_dir);

// Frame-level evaluation of a verdicts file joined against manifest labels.
struct EvaluationReport {
  double auc_all = -1;      // every scored frame, fake = any manipulation
  double auc_seen = -1;     // pristine vs seen-method swaps
  double auc_unseen = -1;   // pristine vs unseen-method swaps
  double auc_reenact = -1;  // pristine vs reenactment, when present
  AccuracyReport fixed_zero;
  AccuracyReport best_on_test;
  std::map<std::string, size_t> threshold_histogram;
  size_t frames_scored = 0;
  size_t unscorable = 0;
  double frames_per_second = 0;
  std::vector<std::pair<double, double>> roc_all;
};

EvaluationReport evaluate_verdicts(const std::vector<pipeline::DetectionVerdict>& verdicts,
                                   const std::vector<synthworld::ManifestRecord>& records,
                                   double frames_per_second);

void emit_report(const EvaluationReport& report, const std::string& out_dir);

}  // namespace fcd::evalkit
