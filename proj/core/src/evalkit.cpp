#include "fcd/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "fcd/common.hpp"

namespace fcd::evalkit {

namespace {

void require_both_classes(const ScoredSet& scored, const char* op) {
  size_t fakes = 0;
  for (const auto& f : scored.frames) {
    check(std::isfinite(f.score), std::string(op) + ": non-finite score for frame " + f.frame_id);
    fakes += f.is_fake;
  }
  check(!scored.frames.empty(), std::string(op) + ": empty score set");
  check(fakes > 0 && fakes < scored.frames.size(), std::string(op) + ": needs both real and fake frames");
}

}  // namespace

double auc(const ScoredSet& scored) {
  require_both_classes(scored, "auc");
  const size_t n = scored.frames.size();
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return scored.frames[a].score < scored.frames[b].score;
  });

  // Average ranks over tie groups, then the rank-sum form of Mann-Whitney U.
  std::vector<double> rank(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && scored.frames[order[j + 1]].score == scored.frames[order[i]].score) ++j;
    double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
    i = j + 1;
  }

  double rank_sum_real = 0.0;
  size_t n_real = 0;
  for (size_t k = 0; k < n; ++k) {
    if (!scored.frames[k].is_fake) {
      rank_sum_real += rank[k];
      ++n_real;
    }
  }
  size_t n_fake = n - n_real;
  double u = rank_sum_real - 0.5 * static_cast<double>(n_real) * static_cast<double>(n_real + 1);
  return u / (static_cast<double>(n_real) * static_cast<double>(n_fake));
}

std::vector<std::pair<double, double>> roc_points(const ScoredSet& scored) {
  require_both_classes(scored, "roc_points");
  std::vector<ScoredFrame> frames = scored.frames;
  std::sort(frames.begin(), frames.end(), [](const ScoredFrame& a, const ScoredFrame& b) {
    return a.score < b.score;
  });
  double n_fake = 0, n_real = 0;
  for (const auto& f : frames) (f.is_fake ? n_fake : n_real) += 1;

  std::vector<std::pair<double, double>> pts;
  pts.emplace_back(0.0, 0.0);
  double fake_below = 0, real_below = 0;
  size_t i = 0;
  while (i < frames.size()) {
    size_t j = i;
    while (j + 1 < frames.size() && frames[j + 1].score == frames[i].score) ++j;
    for (size_t k = i; k <= j; ++k) (frames[k].is_fake ? fake_below : real_below) += 1;
    pts.emplace_back(real_below / n_real, fake_below / n_fake);
    i = j + 1;
  }
  return pts;
}

namespace {

AccuracyReport report_at(const std::vector<ScoredFrame>& frames, double threshold, ThresholdPolicy policy) {
  double fake_hit = 0, fake_n = 0, real_hit = 0, real_n = 0;
  for (const auto& f : frames) {
    if (f.is_fake) {
      fake_n += 1;
      fake_hit += (f.score <= threshold);
    } else {
      real_n += 1;
      real_hit += (f.score > threshold);
    }
  }
  AccuracyReport r;
  r.fake_acc = fake_hit / fake_n;
  r.real_acc = real_hit / real_n;
  r.total_acc = (fake_hit + real_hit) / (fake_n + real_n);
  r.threshold = threshold;
  r.policy = policy;
  return r;
}

}  // namespace

AccuracyReport accuracy_table(const ScoredSet& scored, ThresholdPolicy policy) {
  require_both_classes(scored, "accuracy_table");
  if (policy == ThresholdPolicy::fixed_zero) return report_at(scored.frames, 0.0, policy);

  std::vector<double> scores;
  scores.reserve(scored.frames.size());
  for (const auto& f : scored.frames) scores.push_back(f.score);
  std::sort(scores.begin(), scores.end());
  scores.erase(std::unique(scores.begin(), scores.end()), scores.end());

  std::vector<double> candidates;
  candidates.push_back(scores.front() - 1.0);
  for (size_t i = 0; i + 1 < scores.size(); ++i) candidates.push_back(0.5 * (scores[i] + scores[i + 1]));
  candidates.push_back(scores.back() + 1.0);

  AccuracyReport best;
  bool first = true;
  for (double t : candidates) {
    AccuracyReport r = report_at(scored.frames, t, policy);
    if (first || r.total_acc > best.total_acc) {
      best = r;
      first = false;
    }
  }
  return best;
}

Image render_roc_image(const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& curves,
                       int size) {
  check_arg(size >= 64, "roc image too small");
  Image img(size, size, 3, 1.0f);
  const int margin = size / 16;
  const int span = size - 2 * margin;
  auto px = [&](double fpr) { return margin + static_cast<int>(fpr * (span - 1)); };
  auto py = [&](double tpr) { return size - 1 - margin - static_cast<int>(tpr * (span - 1)); };
  auto put = [&](int y, int x, Real r, Real g, Real b) {
    if (y < 0 || y >= size || x < 0 || x >= size) return;
    img.at(y, x, 0) = r;
    img.at(y, x, 1) = g;
    img.at(y, x, 2) = b;
  };

  for (int i = 0; i < span; ++i) {
    put(py(0.0), margin + i, 0, 0, 0);            // x axis
    put(margin + i, px(0.0), 0, 0, 0);            // y axis
    put(py(static_cast<double>(i) / (span - 1)),  // chance diagonal
        px(static_cast<double>(i) / (span - 1)), 0.8f, 0.8f, 0.8f);
  }

  const Real palette[4][3] = {{0.85f, 0.1f, 0.1f}, {0.1f, 0.3f, 0.85f}, {0.1f, 0.6f, 0.2f}, {0.7f, 0.4f, 0.0f}};
  for (size_t ci = 0; ci < curves.size(); ++ci) {
    const auto& pts = curves[ci].second;
    const Real* col = palette[ci % 4];
    for (size_t i = 0; i + 1 < pts.size(); ++i) {
      // Staircase segments drawn with dense sampling.
      double x0 = pts[i].first, y0 = pts[i].second, x1 = pts[i + 1].first, y1 = pts[i + 1].second;
      int steps = std::max(2, 2 * span / static_cast<int>(pts.size()));
      for (int s = 0; s <= steps; ++s) {
        double t = static_cast<double>(s) / steps;
        put(py(y0 + (y1 - y0) * t), px(x0 + (x1 - x0) * t), col[0], col[1], col[2]);
      }
    }
  }
  return img;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

void MetricsFile::put(const std::string& key, double value) { entries_.emplace_back(key, format_double(value)); }

void MetricsFile::put(const std::string& key, const std::string& value) { entries_.emplace_back(key, value); }

void MetricsFile::add_table(const std::string& name, const std::vector<std::string>& header,
                            const std::vector<std::vector<std::string>>& rows) {
  tables_.push_back(Table{name, header, rows});
}

std::string MetricsFile::to_string() const {
  std::string out;
  for (const auto& [k, v] : entries_) out += "metric " + k + " " + v + "\n";
  for (const auto& t : tables_) {
    out += "[table " + t.name + "]\n";
    std::string line;
    for (size_t i = 0; i < t.header.size(); ++i) line += (i ? "\t" : "") + t.header[i];
    out += line + "\n";
    for (const auto& row : t.rows) {
      line.clear();
      for (size_t i = 0; i < row.size(); ++i) line += (i ? "\t" : "") + row[i];
      out += line + "\n";
    }
    out += "[end]\n";
  }
  return out;
}

void MetricsFile::write(const std::string& path) const {
  std::ofstream out(path);
  check(out.good(), "cannot open metrics file for writing: " + path);
  out << to_string();
  check(out.good(), "metrics write failed: " + path);
}

}  // namespace fcd::evalkit
