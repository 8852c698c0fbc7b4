#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fcd/image.hpp"

namespace fcd::evalkit {

// One scored frame. Scores follow the detector convention: positive means
// real, so fakes are expected to receive *lower* scores.
struct ScoredFrame {
  std::string frame_id;
  double score = 0.0;
  bool is_fake = false;
};

struct ScoredSet {
  std::string name;
  std::vector<ScoredFrame> frames;
};

// Frame-level ROC AUC, computed as the normalized Mann-Whitney U statistic
// of real-vs-fake score pairs: P(score_real > score_fake) + 0.5 P(tie).
// Throws if either class is absent.
double auc(const ScoredSet& scored);

// ROC curve points (fpr, tpr) for the rule "fake iff score <= t", swept over
// all thresholds. Starts at (0,0) and ends at (1,1).
std::vector<std::pair<double, double>> roc_points(const ScoredSet& scored);

enum class ThresholdPolicy { fixed_zero, best_on_test };

struct AccuracyReport {
  double fake_acc = 0.0;   // fraction of fakes with score <= threshold
  double real_acc = 0.0;   // fraction of reals with score >  threshold
  double total_acc = 0.0;  // class accuracies weighted by class counts
  double threshold = 0.0;
  ThresholdPolicy policy = ThresholdPolicy::fixed_zero;
};

// fixed_zero thresholds at score 0. best_on_test scans all midpoints between
// adjacent distinct scores (plus sentinels beyond both ends) and returns the
// threshold maximizing total accuracy; ties pick the smallest threshold.
AccuracyReport accuracy_table(const ScoredSet& scored, ThresholdPolicy policy);

// Renders an ROC curve (one or more) into a raster for report emission.
Image render_roc_image(const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves,
                       int size = 512);

// Line-oriented metrics file: `metric <key> <value>` records plus named table
// blocks. Emission order follows insertion order, so identical inputs yield
// byte-identical files.
class MetricsFile {
 public:
  void put(const std::string& key, double value);
  void put(const std::string& key, const std::string& value);
  void add_table(const std::string& name, const std::vector<std::string>& header,
                 const std::vector<std::vector<std::string>>& rows);
  void write(const std::string& path) const;
  std::string to_string() const;

 private:
  struct Table {
    std::string name;
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
  };
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<Table> tables_;
};

std::string format_double(double v);

}  // namespace fcd::evalkit
