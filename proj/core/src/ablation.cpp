#include "fcd/ablation.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

namespace fcd::evalkit {

namespace fs = std::filesystem;
using synthworld::Label;

double AblationReport::auc_of(const std::string& variant, const std::string& split) const {
  for (const auto& c : cells)
    if (c.variant == variant && c.split == split) return c.auc;
  throw Error("ablation report has no cell " + variant + "/" + split);
}

namespace {

constexpr const char* kVariants[4] = {"discrepancy_only", "binary_only", "fused_frozen", "fused_e2e"};

std::string histogram_key(const pipeline::DetectionVerdict& v) {
  if (v.fallback_max_pixels) return "fallback";
  return format_double(v.threshold_used);
}

}  // namespace

AblationReport run_ablation(const segnet::SegModel& seg, const fusion::FusionModel& frozen,
                            const fusion::FusionModel& end_to_end, const identnet::IdModel& es_pretrained,
                            const pipeline::ScorerConfig& scorer_cfg,
                            const std::vector<synthworld::StoredSample>& test_samples, int threads) {
  std::vector<const synthworld::StoredSample*> frames;
  for (const auto& s : test_samples) {
    if (s.meta.split != synthworld::Split::test) continue;
    if (s.meta.label == Label::reenact) continue;  // swap-generalization protocol
    frames.push_back(&s);
  }
  check(!frames.empty(), "run_ablation: no swap-relevant test samples");

  pipeline::Scorer frozen_scorer(seg, frozen, scorer_cfg);
  pipeline::Scorer e2e_scorer(seg, end_to_end, scorer_cfg);

  struct FrameScores {
    Label label = Label::pristine;
    bool unscorable = false;
    std::string hist_key;
    double score[4] = {0, 0, 0, 0};
  };
  std::vector<FrameScores> scored(frames.size());

  auto t0 = std::chrono::steady_clock::now();
  parallel_for(static_cast<int64_t>(frames.size()), threads, [&](int64_t lo, int64_t hi, int) {
    for (int64_t i = lo; i < hi; ++i) {
      const synthworld::StoredSample& s = *frames[static_cast<size_t>(i)];
      FrameScores& out = scored[static_cast<size_t>(i)];
      out.label = s.meta.label;
      pipeline::ScriptedDetector detector({pipeline::oracle_box_from_mask(s.frame.mask)});
      pipeline::PreparedFrame prepared = frozen_scorer.prepare(s.frame.image, detector);
      if (prepared.verdict.unscorable || prepared.faces.empty()) {
        out.unscorable = true;
        continue;
      }
      out.hist_key = prepared.verdict.fallback_max_pixels ? "fallback"
                                                          : format_double(prepared.verdict.threshold_used);
      auto frozen_feats = frozen_scorer.face_features(prepared);
      auto e2e_feats = e2e_scorer.face_features(prepared);
      for (size_t f = 0; f < prepared.faces.size(); ++f) {
        double disc = -fusion::l1_norm(frozen_feats[f].v_d);
        double bin = fusion::binary_forward(es_pretrained, prepared.faces[f].crop).score;
        double dfr = frozen_feats[f].d_score;
        double de2e = e2e_feats[f].d_score;
        if (f == 0) {
          out.score[0] = disc;
          out.score[1] = bin;
          out.score[2] = dfr;
          out.score[3] = de2e;
        } else {
          out.score[0] = std::min(out.score[0], disc);
          out.score[1] = std::min(out.score[1], bin);
          out.score[2] = std::min(out.score[2], dfr);
          out.score[3] = std::min(out.score[3], de2e);
        }
      }
    }
  });
  double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  AblationReport report;
  report.frames_per_second = dt > 0 ? static_cast<double>(frames.size()) / dt : 0;

  std::vector<ScoredSet> seen_sets(4), unseen_sets(4);
  for (int v = 0; v < 4; ++v) {
    seen_sets[static_cast<size_t>(v)].name = std::string(kVariants[v]) + "_seen";
    unseen_sets[static_cast<size_t>(v)].name = std::string(kVariants[v]) + "_unseen";
  }
  for (size_t i = 0; i < scored.size(); ++i) {
    const FrameScores& fsc = scored[i];
    if (fsc.unscorable) continue;
    ++report.frames_scored;
    report.threshold_histogram[fsc.hist_key] += 1;
    std::string id = "frame" + std::to_string(i);
    for (int v = 0; v < 4; ++v) {
      ScoredFrame frame{id, fsc.score[v], fsc.label != Label::pristine};
      if (fsc.label == Label::pristine) {
        seen_sets[static_cast<size_t>(v)].frames.push_back(frame);
        unseen_sets[static_cast<size_t>(v)].frames.push_back(frame);
      } else if (fsc.label == Label::swap_a) {
        seen_sets[static_cast<size_t>(v)].frames.push_back(frame);
      } else if (fsc.label == Label::swap_b) {
        unseen_sets[static_cast<size_t>(v)].frames.push_back(frame);
      }
    }
  }

  for (int v = 0; v < 4; ++v) {
    for (int split = 0; split < 2; ++split) {
      const ScoredSet& set = split == 0 ? seen_sets[static_cast<size_t>(v)] : unseen_sets[static_cast<size_t>(v)];
      VariantCell cell;
      cell.variant = kVariants[v];
      cell.split = split == 0 ? "seen" : "unseen";
      cell.auc = auc(set);
      cell.fixed_zero = accuracy_table(set, ThresholdPolicy::fixed_zero);
      cell.best_on_test = accuracy_table(set, ThresholdPolicy::best_on_test);
      report.cells.push_back(cell);
      auto& roc = split == 0 ? report.roc_seen : report.roc_unseen;
      roc[kVariants[v]] = roc_points(set);
    }
  }
  return report;
}

void emit_report(const AblationReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  MetricsFile metrics;
  metrics.put("frames_scored", static_cast<double>(report.frames_scored));
  metrics.put("frames_per_second", report.frames_per_second);
  for (const auto& [key, count] : report.threshold_histogram)
    metrics.put("threshold_used_" + key, static_cast<double>(count));
  for (const auto& c : report.cells) metrics.put("auc_" + c.variant + "_" + c.split, c.auc);

  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.cells) {
    rows.push_back({c.variant, c.split, format_double(c.auc), format_double(c.fixed_zero.fake_acc),
                    format_double(c.fixed_zero.real_acc), format_double(c.fixed_zero.total_acc),
                    format_double(c.best_on_test.fake_acc), format_double(c.best_on_test.real_acc),
                    format_double(c.best_on_test.total_acc), format_double(c.best_on_test.threshold)});
  }
  metrics.add_table("generalization",
                    {"variant", "split", "auc", "fake_acc@0", "real_acc@0", "total_acc@0", "fake_acc@best",
                     "real_acc@best", "total_acc@best", "best_threshold"},
                    rows);
  metrics.write((fs::path(out_dir) / "metrics.txt").string());

  for (int split = 0; split < 2; ++split) {
    const auto& curves_map = split == 0 ? report.roc_seen : report.roc_unseen;
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> curves;
    for (const char* v : kVariants) {
      auto it = curves_map.find(v);
      if (it != curves_map.end()) curves.emplace_back(it->first, it->second);
    }
    Image img = render_roc_image(curves);
    write_ppm(img, (fs::path(out_dir) / (split == 0 ? "roc_seen.ppm" : "roc_unseen.ppm")).string());
  }

  std::string summary;
  summary += "Generalization ablation (" + std::to_string(report.frames_scored) + " frames, " +
             format_double(report.frames_per_second) + " frames/sec)\n";
  summary += "variant            seen-AUC  unseen-AUC\n";
  for (const char* v : kVariants) {
    char line[128];
    std::snprintf(line, sizeof(line), "%-18s %8.4f  %9.4f\n", v, report.auc_of(v, "seen"),
                  report.auc_of(v, "unseen"));
    summary += line;
  }
  std::ofstream out((fs::path(out_dir) / "summary.txt").string());
  check(out.good(), "cannot write summary in " + out_dir);
  out << summary;
}

EvaluationReport evaluate_verdicts(const std::vector<pipeline::DetectionVerdict>& verdicts,
                                   const std::vector<synthworld::ManifestRecord>& records,
                                   double frames_per_second) {
  std::map<std::string, const synthworld::ManifestRecord*> by_id;
  for (const auto& r : records) by_id[std::to_string(r.sample_id)] = &r;

  EvaluationReport report;
  report.frames_per_second = frames_per_second;
  ScoredSet all{"all", {}}, seen{"seen", {}}, unseen{"unseen", {}}, reenact{"reenact", {}};
  for (const auto& v : verdicts) {
    if (v.unscorable) {
      ++report.unscorable;  // excluded from metrics
      continue;
    }
    auto it = by_id.find(v.frame_id);
    check(it != by_id.end(), "evaluate: verdict frame " + v.frame_id + " not present in the manifest");
    const synthworld::ManifestRecord& rec = *it->second;
    ++report.frames_scored;
    report.threshold_histogram[histogram_key(v)] += 1;
    ScoredFrame frame{v.frame_id, v.image_score, rec.label != Label::pristine};
    all.frames.push_back(frame);
    if (rec.label == Label::pristine) {
      seen.frames.push_back(frame);
      unseen.frames.push_back(frame);
      reenact.frames.push_back(frame);
    } else if (rec.label == Label::swap_a) {
      (rec.method_seen ? seen : unseen).frames.push_back(frame);
    } else if (rec.label == Label::swap_b) {
      (rec.method_seen ? seen : unseen).frames.push_back(frame);
    } else {
      reenact.frames.push_back(frame);
    }
  }
  check(!all.frames.empty(), "evaluate: no scorable frames");

  auto has_both = [](const ScoredSet& s) {
    bool real = false, fake = false;
    for (const auto& f : s.frames) (f.is_fake ? fake : real) = true;
    return real && fake;
  };
  if (has_both(all)) {
    report.auc_all = auc(all);
    report.fixed_zero = accuracy_table(all, ThresholdPolicy::fixed_zero);
    report.best_on_test = accuracy_table(all, ThresholdPolicy::best_on_test);
    report.roc_all = roc_points(all);
  }
  if (has_both(seen)) report.auc_seen = auc(seen);
  if (has_both(unseen)) report.auc_unseen = auc(unseen);
  if (has_both(reenact)) report.auc_reenact = auc(reenact);
  return report;
}

void emit_report(const EvaluationReport& report, const std::string& out_dir) {
  fs::create_directories(out_dir);
  MetricsFile metrics;
  metrics.put("frames_scored", static_cast<double>(report.frames_scored));
  metrics.put("frames_unscorable", static_cast<double>(report.unscorable));
  metrics.put("frames_per_second", report.frames_per_second);
  if (report.auc_all >= 0) metrics.put("auc_all", report.auc_all);
  if (report.auc_seen >= 0) metrics.put("auc_seen", report.auc_seen);
  if (report.auc_unseen >= 0) metrics.put("auc_unseen", report.auc_unseen);
  if (report.auc_reenact >= 0) metrics.put("auc_reenact", report.auc_reenact);
  metrics.put("fake_acc_fixed_zero", report.fixed_zero.fake_acc);
  metrics.put("real_acc_fixed_zero", report.fixed_zero.real_acc);
  metrics.put("total_acc_fixed_zero", report.fixed_zero.total_acc);
  metrics.put("fake_acc_best", report.best_on_test.fake_acc);
  metrics.put("real_acc_best", report.best_on_test.real_acc);
  metrics.put("total_acc_best", report.best_on_test.total_acc);
  metrics.put("best_threshold", report.best_on_test.threshold);
  for (const auto& [key, count] : report.threshold_histogram)
    metrics.put("threshold_used_" + key, static_cast<double>(count));
  metrics.write((fs::path(out_dir) / "metrics.txt").string());

  if (!report.roc_all.empty()) {
    Image img = render_roc_image({{"all", report.roc_all}});
    write_ppm(img, (fs::path(out_dir) / "roc_all.ppm").string());
  }

  std::ofstream out((fs::path(out_dir) / "summary.txt").string());
  check(out.good(), "cannot write summary in " + out_dir);
  out << "Frame-level evaluation\n";
  out << "frames scored:      " << report.frames_scored << "\n";
  out << "frames unscorable:  " << report.unscorable << "\n";
  out << "frames/sec:         " << format_double(report.frames_per_second) << "\n";
  if (report.auc_all >= 0) out << "AUC (all):          " << format_double(report.auc_all) << "\n";
  if (report.auc_seen >= 0) out << "AUC (seen swaps):   " << format_double(report.auc_seen) << "\n";
  if (report.auc_unseen >= 0) out << "AUC (unseen swaps): " << format_double(report.auc_unseen) << "\n";
  if (report.auc_reenact >= 0) out << "AUC (reenactment):  " << format_double(report.auc_reenact) << "\n";
  out << "total acc @0:       " << format_double(report.fixed_zero.total_acc) << "\n";
  out << "total acc @best:    " << format_double(report.best_on_test.total_acc) << "\n";
  for (const auto& [key, count] : report.threshold_histogram)
    out << "threshold " << key << ": " << count << " frames\n";
}

}  // namespace fcd::evalkit
