#include <doctest.h>

#include <cmath>

#include "fcd/evalkit.hpp"
#include "fcd/rng.hpp"

using namespace fcd;
using evalkit::ScoredFrame;
using evalkit::ScoredSet;

namespace {

// Brute-force pairwise oracle: P(real > fake) with half credit for ties.
double auc_oracle(const ScoredSet& s) {
  double num = 0, pairs = 0;
  for (const auto& r : s.frames) {
    if (r.is_fake) continue;
    for (const auto& f : s.frames) {
      if (!f.is_fake) continue;
      pairs += 1;
      if (r.score > f.score)
        num += 1;
      else if (r.score == f.score)
        num += 0.5;
    }
  }
  return num / pairs;
}

// Exhaustive threshold-scan oracle over a dense grid of candidates.
evalkit::AccuracyReport best_threshold_oracle(const ScoredSet& s) {
  std::vector<double> candidates;
  for (const auto& f : s.frames) {
    candidates.push_back(f.score - 1e-9);
    candidates.push_back(f.score + 1e-9);
  }
  candidates.push_back(-1e18);
  candidates.push_back(1e18);
  evalkit::AccuracyReport best;
  double best_total = -1;
  for (double t : candidates) {
    double fh = 0, fn = 0, rh = 0, rn = 0;
    for (const auto& f : s.frames) {
      if (f.is_fake) {
        fn += 1;
        fh += f.score <= t;
      } else {
        rn += 1;
        rh += f.score > t;
      }
    }
    double total = (fh + rh) / (fn + rn);
    if (total > best_total) {
      best_total = total;
      best.fake_acc = fh / fn;
      best.real_acc = rh / rn;
      best.total_acc = total;
      best.threshold = t;
    }
  }
  return best;
}

ScoredSet random_set(Rng& rng, size_t n, bool with_ties) {
  ScoredSet s{"rand", {}};
  for (size_t i = 0; i < n; ++i) {
    double score = with_ties ? std::floor(rng.uniform(-3, 3) * 4) / 4 : rng.uniform(-3, 3);
    s.frames.push_back({std::to_string(i), score, rng.bernoulli(0.5)});
  }
  bool fake = false, real = false;
  for (auto& f : s.frames) (f.is_fake ? fake : real) = true;
  if (!fake) s.frames[0].is_fake = true;
  if (!real) s.frames[1].is_fake = false;
  return s;
}

}  // namespace

TEST_CASE("auc: separation, chance, and errors") {
  ScoredSet sep{"sep", {{"a", 2.0, false}, {"b", 1.5, false}, {"c", -1.0, true}, {"d", -0.5, true}}};
  CHECK(evalkit::auc(sep) == 1.0);

  // Shuffled labels against scores approach 0.5 for large n.
  Rng rng(11);
  ScoredSet chance{"chance", {}};
  for (int i = 0; i < 4000; ++i) chance.frames.push_back({std::to_string(i), rng.uniform(), rng.bernoulli(0.5)});
  CHECK(std::abs(evalkit::auc(chance) - 0.5) < 0.03);

  ScoredSet single{"single", {{"a", 1.0, false}, {"b", 2.0, false}}};
  CHECK_THROWS_AS(evalkit::auc(single), Error);
  ScoredSet empty{"empty", {}};
  CHECK_THROWS_AS(evalkit::auc(empty), Error);
}

TEST_CASE("auc equals the brute-force pairwise oracle, ties at half credit") {
  // 6-point fixture with a tie across classes.
  ScoredSet fixture{"fix",
                    {{"r1", 1.0, false},
                     {"r2", 0.25, false},
                     {"r3", -0.5, false},
                     {"f1", 0.25, true},
                     {"f2", -1.0, true},
                     {"f3", -0.5, true}}};
  CHECK(evalkit::auc(fixture) == doctest::Approx(auc_oracle(fixture)).epsilon(1e-12));

  Rng rng(21);
  for (int rep = 0; rep < 50; ++rep) {
    ScoredSet s = random_set(rng, 3 + rng.uniform_index(30), rep % 2 == 0);
    CHECK(evalkit::auc(s) == doctest::Approx(auc_oracle(s)).epsilon(1e-10));
  }
}

TEST_CASE("auc is invariant under strictly monotone transforms") {
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    ScoredSet s = random_set(rng, 40, rep % 2 == 0);
    double base = evalkit::auc(s);
    ScoredSet expd = s, affine = s;
    for (auto& f : expd.frames) f.score = std::exp(f.score);
    for (auto& f : affine.frames) f.score = 3.5 * f.score + 11.0;
    CHECK(evalkit::auc(expd) == doctest::Approx(base).epsilon(1e-10));
    CHECK(evalkit::auc(affine) == doctest::Approx(base).epsilon(1e-10));
  }
}

TEST_CASE("auc(scores) + auc(-scores) = 1 for tie-free scores") {
  Rng rng(41);
  for (int rep = 0; rep < 20; ++rep) {
    ScoredSet s = random_set(rng, 50, false);
    ScoredSet neg = s;
    for (auto& f : neg.frames) f.score = -f.score;
    CHECK(evalkit::auc(s) + evalkit::auc(neg) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("accuracy table: fixed zero and separation") {
  ScoredSet sep{"sep", {{"r", 1.0, false}, {"r2", 0.5, false}, {"f", -1.0, true}, {"f2", -2.0, true}}};
  auto rep = evalkit::accuracy_table(sep, evalkit::ThresholdPolicy::fixed_zero);
  CHECK(rep.fake_acc == 1.0);
  CHECK(rep.real_acc == 1.0);
  CHECK(rep.total_acc == 1.0);
  CHECK(rep.threshold == 0.0);
}

TEST_CASE("best-on-test threshold equals the exhaustive oracle on fixtures") {
  // 8-point fixture.
  ScoredSet fixture{"fix",
                    {{"a", 2.0, false},
                     {"b", 1.0, false},
                     {"c", 0.2, false},
                     {"d", -0.4, false},
                     {"e", 0.3, true},
                     {"f", -0.2, true},
                     {"g", -1.0, true},
                     {"h", -2.5, true}}};
  auto fast = evalkit::accuracy_table(fixture, evalkit::ThresholdPolicy::best_on_test);
  auto slow = best_threshold_oracle(fixture);
  CHECK(fast.total_acc == doctest::Approx(slow.total_acc).epsilon(1e-12));
  CHECK(fast.fake_acc == doctest::Approx(slow.fake_acc).epsilon(1e-12));
  CHECK(fast.real_acc == doctest::Approx(slow.real_acc).epsilon(1e-12));

  Rng rng(51);
  for (int rep2 = 0; rep2 < 40; ++rep2) {
    ScoredSet s = random_set(rng, 3 + rng.uniform_index(12), rep2 % 2 == 0);
    auto f2 = evalkit::accuracy_table(s, evalkit::ThresholdPolicy::best_on_test);
    auto s2 = best_threshold_oracle(s);
    CHECK(f2.total_acc == doctest::Approx(s2.total_acc).epsilon(1e-12));
  }
}

TEST_CASE("best-on-test dominates fixed-zero and is scale invariant") {
  Rng rng(61);
  for (int rep = 0; rep < 30; ++rep) {
    ScoredSet s = random_set(rng, 30, false);
    auto fixed = evalkit::accuracy_table(s, evalkit::ThresholdPolicy::fixed_zero);
    auto best = evalkit::accuracy_table(s, evalkit::ThresholdPolicy::best_on_test);
    CHECK(best.total_acc >= fixed.total_acc);

    ScoredSet scaled = s;
    for (auto& f : scaled.frames) f.score *= 0.125;
    auto best_scaled = evalkit::accuracy_table(scaled, evalkit::ThresholdPolicy::best_on_test);
    CHECK(best_scaled.total_acc == doctest::Approx(best.total_acc).epsilon(1e-12));
  }
}

TEST_CASE("total accuracy is the class-count weighted mean") {
  ScoredSet s{"w", {{"r1", 1.0, false}, {"r2", -1.0, false}, {"r3", 1.0, false}, {"f1", -1.0, true}}};
  auto rep = evalkit::accuracy_table(s, evalkit::ThresholdPolicy::fixed_zero);
  CHECK(rep.real_acc == doctest::Approx(2.0 / 3.0));
  CHECK(rep.fake_acc == doctest::Approx(1.0));
  CHECK(rep.total_acc == doctest::Approx((rep.real_acc * 3 + rep.fake_acc * 1) / 4.0));
}

TEST_CASE("roc points start at (0,0), end at (1,1), and are monotone") {
  Rng rng(71);
  ScoredSet s = random_set(rng, 25, true);
  auto pts = evalkit::roc_points(s);
  CHECK(pts.front() == std::pair<double, double>(0.0, 0.0));
  CHECK(pts.back() == std::pair<double, double>(1.0, 1.0));
  for (size_t i = 1; i < pts.size(); ++i) {
    CHECK(pts[i].first >= pts[i - 1].first);
    CHECK(pts[i].second >= pts[i - 1].second);
  }
}

TEST_CASE("metrics file emission is byte-stable") {
  evalkit::MetricsFile a, b;
  for (auto* m : {&a, &b}) {
    m->put("auc", 0.987654321);
    m->put("note", "fixed");
    m->add_table("t", {"col1", "col2"}, {{"1", "2"}, {"3", "4"}});
  }
  CHECK(a.to_string() == b.to_string());
  CHECK(a.to_string().find("metric auc 0.987654") != std::string::npos);
}
