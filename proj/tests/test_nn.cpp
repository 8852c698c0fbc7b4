#include <doctest.h>

#include <cmath>

#include "fcd/identnet.hpp"
#include "fcd/nn/kernels.hpp"
#include "fcd/segnet.hpp"
#include "fcd/fusion.hpp"
#include "gradcheck.hpp"

using namespace fcd;

namespace {

template <typename S>
std::vector<S> random_vec(size_t n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<S> v(n);
  for (auto& x : v) x = static_cast<S>(rng.uniform(lo, hi));
  return v;
}

}  // namespace

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    int n = rng.uniform_int(2, 64);
    std::vector<double> logits = random_vec<double>(static_cast<size_t>(n), rng, -5.0, 5.0);
    std::vector<double> p(logits.size()), q(logits.size());
    nn::softmax(logits.data(), n, p.data());
    double sum = 0;
    for (double v : p) {
      CHECK(v >= 0.0);
      sum += v;
    }
    CHECK(std::abs(sum - 1.0) < 1e-6);

    std::vector<double> shifted = logits;
    for (auto& v : shifted) v += 37.5;
    nn::softmax(shifted.data(), n, q.data());
    for (size_t i = 0; i < p.size(); ++i) CHECK(std::abs(p[i] - q[i]) < 1e-6);
  }
}

TEST_CASE("logistic loss is stable and symmetric") {
  for (double z : {-50.0, -2.0, 0.0, 1.5, 80.0}) {
    double dp, dm;
    double lp = nn::logistic_loss(z, +1, &dp, 1.0);
    double lm = nn::logistic_loss(-z, -1, &dm, 1.0);
    CHECK(std::isfinite(lp));
    CHECK(lp == doctest::Approx(lm).epsilon(1e-12));
    CHECK(dp == doctest::Approx(-dm).epsilon(1e-9));
  }
  // zero logit: loss = log 2
  CHECK(nn::logistic_loss(0.0, +1, static_cast<double*>(nullptr), 1.0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("bilinear upsample preserves constants and total mass in backward") {
  Rng rng(2);
  int c = 3, h = 4, w = 4;
  std::vector<double> in(static_cast<size_t>(c) * h * w, 0.7);
  std::vector<double> out(static_cast<size_t>(c) * 4 * h * w);
  nn::upsample2x_forward(in.data(), c, h, w, out.data());
  for (double v : out) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

  // Backward distributes each output gradient with unit total weight.
  std::vector<double> dout(out.size());
  for (auto& v : dout) v = rng.uniform();
  std::vector<double> din(in.size(), 0.0);
  nn::upsample2x_backward(dout.data(), c, h, w, din.data());
  double sum_out = 0, sum_in = 0;
  for (double v : dout) sum_out += v;
  for (double v : din) sum_in += v;
  CHECK(sum_in == doctest::Approx(sum_out).epsilon(1e-9));
}

TEST_CASE("maxpool backward routes gradient to the argmax") {
  std::vector<double> in = {1, 2, 5, 3, 4, 0, 1, 2, 9, 8, 7, 6, 0, 1, 2, 3};  // 1x4x4
  std::vector<double> out(4);
  std::vector<uint8_t> am(4);
  nn::maxpool2x2_forward(in.data(), 1, 4, 4, out.data(), am.data());
  CHECK(out[0] == 4.0);
  CHECK(out[1] == 5.0);
  CHECK(out[2] == 9.0);
  CHECK(out[3] == 7.0);
  std::vector<double> dout = {1, 1, 1, 1}, din(16, 0);
  nn::maxpool2x2_backward(dout.data(), 1, 4, 4, am.data(), din.data());
  CHECK(din[4] == 1.0);   // value 4
  CHECK(din[2] == 1.0);   // value 5
  CHECK(din[8] == 1.0);   // value 9
  CHECK(din[10] == 1.0);  // value 7
}

TEST_CASE("batch norm: training mode normalizes, eval mode uses running stats") {
  nn::BatchNorm1d<double> bn;
  bn.init("bn", 3);
  Rng rng(3);
  int n = 64;
  std::vector<double> x(static_cast<size_t>(n) * 3);
  for (auto& v : x) v = rng.uniform(2.0, 6.0);
  std::vector<double> y(x.size());
  nn::BatchNorm1d<double>::Cache cache;
  bn.forward(x.data(), n, y.data(), true, true, cache);
  for (int f = 0; f < 3; ++f) {
    double mean = 0, var = 0;
    for (int i = 0; i < n; ++i) mean += y[static_cast<size_t>(i) * 3 + f];
    mean /= n;
    for (int i = 0; i < n; ++i) {
      double d = y[static_cast<size_t>(i) * 3 + f] - mean;
      var += d * d;
    }
    var /= n;
    CHECK(std::abs(mean) < 1e-9);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-3));
  }
  // Eval mode on the same batch differs (running stats only partly updated).
  std::vector<double> ye(x.size());
  bn.forward(x.data(), n, ye.data(), false, false, cache);
  CHECK(ye != y);
}

TEST_CASE("segnet loss gradient matches central differences") {
  segnet::SegConfig cfg;
  cfg.input_size = 16;
  cfg.base_channels = 4;
  cfg.depth = 2;
  Rng rng(7);
  segnet::UNetT<double> net;
  net.init(cfg, rng);
  segnet::UNetT<double>::Workspace ws;
  net.setup(ws);

  int hw = cfg.input_size * cfg.input_size;
  std::vector<double> image = random_vec<double>(static_cast<size_t>(3) * hw, rng);
  std::vector<uint8_t> labels(static_cast<size_t>(hw));
  for (auto& l : labels) l = rng.bernoulli(0.4);

  std::vector<nn::Param<double>*> params;
  net.collect_params(params);

  auto loss_fn = [&]() {
    net.forward(image.data(), ws);
    return nn::seg_xent2<double>(ws.logits.data(), hw, labels.data(), nullptr, 1.0);
  };
  std::vector<double> dlogits(static_cast<size_t>(2) * hw);
  auto grad_fn = [&]() {
    net.forward(image.data(), ws);
    nn::seg_xent2<double>(ws.logits.data(), hw, labels.data(), dlogits.data(), 1.0);
    net.backward(image.data(), dlogits.data(), ws);
  };
  double err = testing::max_rel_grad_error<double>(params, loss_fn, grad_fn, 30, 99);
  CHECK(err < 1e-4);
}

TEST_CASE("reduced backbone gradient matches central differences") {
  identnet::BackboneConfig cfg;
  cfg.input_size = 8;
  cfg.entry_channels = 4;
  cfg.entry_stride = 2;
  cfg.block_channels = {6, 8};
  cfg.block_strides = {2, 1};
  cfg.tail_channels = 8;
  cfg.num_classes = 3;
  Rng rng(11);
  identnet::BackboneT<double> net;
  net.init(cfg, rng);
  // The zero-initialized head would hide head-input gradients; randomize it.
  for (auto& v : net.head.w.value) v = rng.normal(0.0, 0.5);
  identnet::BackboneT<double>::Workspace ws;
  net.setup(ws);

  std::vector<double> image = random_vec<double>(static_cast<size_t>(3) * 64, rng);
  const int label = 1;
  std::vector<nn::Param<double>*> params;
  net.collect_params(params);

  SUBCASE("classification loss through the head") {
    auto loss_fn = [&]() {
      net.forward(image.data(), ws);
      return nn::softmax_xent<double>(ws.logits.data(), 3, label, nullptr, 1.0);
    };
    std::vector<double> dlogits(3);
    auto grad_fn = [&]() {
      net.forward(image.data(), ws);
      nn::softmax_xent<double>(ws.logits.data(), 3, label, dlogits.data(), 1.0);
      net.backward(image.data(), dlogits.data(), nullptr, ws);
    };
    double err = testing::max_rel_grad_error<double>(params, loss_fn, grad_fn, 30, 123);
    CHECK(err < 1e-4);
  }

  SUBCASE("penultimate-vector loss (fusion fine-tune path)") {
    std::vector<double> w = random_vec<double>(static_cast<size_t>(cfg.tail_channels), rng, -1.0, 1.0);
    auto loss_fn = [&]() {
      net.forward(image.data(), ws);
      double s = 0;
      for (int i = 0; i < cfg.tail_channels; ++i) s += w[static_cast<size_t>(i)] * ws.penult[static_cast<size_t>(i)];
      return s;
    };
    auto grad_fn = [&]() {
      net.forward(image.data(), ws);
      net.backward(image.data(), nullptr, w.data(), ws);
    };
    double err = testing::max_rel_grad_error<double>(params, loss_fn, grad_fn, 30, 321);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("classifier D gradient matches central differences in both BN modes") {
  Rng rng(13);
  fusion::ClassifierDT<double> d;
  d.init(12, 8, rng);
  fusion::ClassifierDT<double>::Workspace ws;

  const int n = 5;
  std::vector<double> x = random_vec<double>(static_cast<size_t>(n) * 12, rng, -1.0, 1.0);
  std::vector<int> targets = {+1, -1, +1, -1, -1};
  std::vector<nn::Param<double>*> params;
  d.collect_params(params);

  auto make_loss = [&](bool training) {
    return [&, training]() {
      d.forward(x.data(), n, training, false, ws);
      double total = 0;
      for (int i = 0; i < n; ++i)
        total += nn::logistic_loss(ws.logits[static_cast<size_t>(i)], targets[static_cast<size_t>(i)],
                                   static_cast<double*>(nullptr), 1.0);
      return total;
    };
  };
  auto make_grad = [&](bool training) {
    return [&, training]() {
      d.forward(x.data(), n, training, false, ws);
      std::vector<double> dlogits(static_cast<size_t>(n));
      for (int i = 0; i < n; ++i)
        nn::logistic_loss(ws.logits[static_cast<size_t>(i)], targets[static_cast<size_t>(i)],
                          &dlogits[static_cast<size_t>(i)], 1.0);
      d.backward(x.data(), dlogits.data(), n, ws, nullptr);
    };
  };

  SUBCASE("training mode (batch statistics)") {
    auto loss = make_loss(true);
    auto grad = make_grad(true);
    double err = testing::max_rel_grad_error<double>(params, loss, grad, 40, 77);
    CHECK(err < 1e-4);
  }
  SUBCASE("inference mode (running statistics)") {
    for (size_t f = 0; f < d.bn.running_mean.size(); ++f) {
      d.bn.running_mean[f] = rng.uniform(-0.5, 0.5);
      d.bn.running_var[f] = rng.uniform(0.5, 2.0);
    }
    auto loss = make_loss(false);
    auto grad = make_grad(false);
    double err = testing::max_rel_grad_error<double>(params, loss, grad, 40, 78);
    CHECK(err < 1e-4);
  }
}

TEST_CASE("adam step is deterministic") {
  auto run = []() {
    Rng rng(5);
    nn::Param<float> p;
    p.resize("p", {16});
    for (auto& v : p.value) v = static_cast<float>(rng.normal(0, 1));
    std::vector<nn::Param<float>*> params = {&p};
    nn::Adam<float> adam(0.5, 0.999);
    for (int step = 0; step < 20; ++step) {
      for (size_t i = 0; i < p.size(); ++i) p.grad[i] = static_cast<float>(rng.normal(0, 1));
      adam.step(params, 1e-3);
    }
    return p.value;
  };
  CHECK(run() == run());
}

TEST_CASE("lr schedule halves every ten epochs") {
  CHECK(nn::lr_for_epoch(1e-4, 1) == doctest::Approx(1e-4));
  CHECK(nn::lr_for_epoch(1e-4, 10) == doctest::Approx(1e-4));
  CHECK(nn::lr_for_epoch(1e-4, 11) == doctest::Approx(5e-5));
  CHECK(nn::lr_for_epoch(1e-4, 21) == doctest::Approx(2.5e-5));  // initial / 4
}
