// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "volreg/descriptor_net.hpp"
#include "volreg/errors.hpp"
#include "volreg/rng.hpp"
#include "volreg/synth.hpp"

using namespace volreg;

namespace {

constexpr NetShape kReduced{7, 2, 3, 8, 6};

template <class S>
TripletMatrix<S> random_batch(int triplets, int in_dim, std::uint64_t seed) {
  TripletMatrix<S> x(3 * triplets, in_dim);
  Rng rng(seed);
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c)
      x(r, c) = static_cast<S>(rng.uniform(0.0, 1.0));
  return x;
}

// Layer-by-layer reference evaluation with plain loops; independent of the
// library's im2col/GEMM path.
Eigen::VectorXd reference_forward(const DescriptorNetT<double>& net,
                                  const std::vector<double>& input) {
  const NetShape& s = net.shape;
  const int e0 = s.in_edge, e1 = s.conv1_edge(), e2 = s.conv2_edge();

  auto conv = [](const std::vector<double>& in, int edge_in, int ch_in,
                 const Eigen::MatrixXd& w, const Eigen::VectorXd& b) {
    const int edge_out = edge_in - 2;
    const int ch_out = static_cast<int>(w.cols());
    std::vector<double> out(static_cast<std::size_t>(edge_out) * edge_out * edge_out *
                            ch_out);
    for (int z = 0; z < edge_out; ++z)
      for (int y = 0; y < edge_out; ++y)
        for (int x = 0; x < edge_out; ++x)
          for (int f = 0; f < ch_out; ++f) {
            double acc = b[f];
            for (int c = 0; c < 3; ++c)
              for (int bb = 0; bb < 3; ++bb)
                for (int a = 0; a < 3; ++a) {
                  const int tap = a + 3 * (bb + 3 * c);
                  const int src = (x + a) + edge_in * ((y + bb) + edge_in * (z + c));
                  for (int ch = 0; ch < ch_in; ++ch)
                    acc += w(tap * ch_in + ch, f) *
                           in[static_cast<std::size_t>(src) * ch_in + ch];
                }
            const int pos = x + edge_out * (y + edge_out * z);
            out[static_cast<std::size_t>(pos) * ch_out + f] = std::max(acc, 0.0);
          }
    return out;
  };

  const auto a1 = conv(input, e0, 1, net.w1, net.b1);
  const auto a2 = conv(a1, e1, s.conv1_filters, net.w2, net.b2);
  static_cast<void>(e2);

  Eigen::VectorXd a3(s.hidden);
  for (int h = 0; h < s.hidden; ++h) {
    double acc = net.b3[h];
    for (int i = 0; i < s.flat_dim(); ++i) acc += net.w3(i, h) * a2[i];
    a3[h] = std::max(acc, 0.0);
  }
  Eigen::VectorXd y4(s.out);
  for (int o = 0; o < s.out; ++o) {
    double acc = net.b4[o];
    for (int h = 0; h < s.hidden; ++h) acc += net.w4(h, o) * a3[h];
    y4[o] = acc;
  }
  return y4 / y4.norm();
}

TrainingSet cube_training_set(double angle_step) {
  SceneSpec spec;
  spec.extent = {Vec3::Zero(), Vec3::Constant(32.0)};
  Primitive box;
  box.center = Vec3::Constant(16.0);
  box.half_size = Vec3::Constant(8.0);
  spec.primitives.push_back(box);
  Primitive second;
  second.center = Vec3(16.0, 16.0, 16.0);
  second.half_size = Vec3(3.0, 5.0, 2.0);
  second.center = Vec3(16.0, 14.0, 18.0);
  second.amplitude = 1.4;
  spec.primitives.push_back(second);
  const DensityGrid g = render_scene(spec, {32, 32, 32}, 1.0);
  return synthesize_training_set({g}, HarrisConfig{}, 1, 1.0, 3, angle_step);
}

}  // namespace

TEST_CASE("a zero net with fc2 bias e1 maps everything to e1") {
  DescriptorNetT<double> net;
  net.resize(kReduced);
  net.b4[0] = 1.0;
  Neighborhood n;
  n.radius = 3;
  Rng rng(1);
  n.values.resize(343);
  for (auto& v : n.values) v = rng.uniform(0.0, 1.0);
  const Descriptor d = net_forward(net, n);
  CHECK(d[0] == 1.0);
  for (int i = 1; i < 6; ++i) CHECK(d[i] == 0.0);
}

TEST_CASE("forward pass matches the layer-by-layer reference") {
  const auto net = DescriptorNetT<double>::random_init(kReduced, 7);
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    Neighborhood n;
    n.radius = 3;
    n.values.resize(343);
    for (auto& v : n.values) v = rng.uniform(0.0, 1.0);
    const Descriptor got = net_forward(net, n);
    const Eigen::VectorXd expect = reference_forward(net, n.values);
    REQUIRE(got.size() == expect.size());
    for (int i = 0; i < got.size(); ++i)
      CHECK(got[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("float forward agrees with the double reference to 1e-5") {
  const auto net64 = DescriptorNetT<double>::random_init(kReduced, 8);
  const auto net32 = net64.cast<float>();
  Rng rng(3);
  Neighborhood n;
  n.radius = 3;
  n.values.resize(343);
  for (auto& v : n.values) v = rng.uniform(0.0, 1.0);
  const Descriptor a = net_forward(net32, n);
  const Eigen::VectorXd b = reference_forward(net64, n.values);
  for (int i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-5));
}

TEST_CASE("descriptors are unit norm for any nonzero net") {
  Rng rng(4);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto net = DescriptorNetT<double>::random_init(kReduced, 100 + seed);
    Neighborhood n;
    n.radius = 3;
    n.values.resize(343);
    for (auto& v : n.values) v = rng.uniform(0.0, 2.0);
    CHECK(is_unit_norm(net_forward(net, n)));
  }
}

TEST_CASE("wrong input size raises a shape error") {
  const auto net = DescriptorNetT<double>::random_init(kReduced, 9);
  Neighborhood n;
  n.radius = 2;
  n.values.resize(125);
  CHECK_THROWS_AS(static_cast<void>(net_forward(net, n)), ShapeError);
}

TEST_CASE("triplet loss follows the margin ranking formula") {
  Descriptor a = Descriptor::Zero(4), b = Descriptor::Zero(4), c = Descriptor::Zero(4);
  a[0] = 1.0;
  b[0] = 1.0;   // positive identical to anchor
  c[1] = 1.0;   // negative at distance sqrt(2)
  CHECK(triplet_loss(a, b, c, 0.1) == 0.0);  // 0.1 + 0 - sqrt(2) < 0

  // anchor == negative, positive at distance 0.5
  Descriptor p = a;
  p[0] = std::sqrt(1 - 0.25 / 2);  // tweak below to get |a-p| = 0.5 exactly
  p = a;
  p[0] -= 0.5;
  const double d_pos = (a - p).norm();
  CHECK(triplet_loss(a, p, a, 0.1) == doctest::Approx(0.1 + d_pos).epsilon(1e-12));

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Descriptor x(6), y(6), z(6);
    for (int i = 0; i < 6; ++i) {
      x[i] = rng.normal();
      y[i] = rng.normal();
      z[i] = rng.normal();
    }
    x /= x.norm();
    y /= y.norm();
    z /= z.norm();
    const double expect = std::max(0.0, 0.1 + (x - y).norm() - (x - z).norm());
    CHECK(triplet_loss(x, y, z, 0.1) == expect);
  }
}

TEST_CASE("zero-loss batches produce exactly zero gradients") {
  const auto net = DescriptorNetT<double>::random_init(kReduced, 11);
  // anchor == positive makes d_pos = 0; with a tiny margin the hinge stays flat
  TripletMatrix<double> x = random_batch<double>(6, kReduced.in_dim(), 12);
  for (int t = 0; t < 6; ++t) x.row(3 * t + 1) = x.row(3 * t);
  NetWorkspace<double> ws;
  NetGradientsT<double> grads;
  const double loss = net_backward(net, x, 1e-9, ws, grads);
  CHECK(loss == 0.0);
  CHECK(gradients_to_flat(grads).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  const auto net0 = DescriptorNetT<double>::random_init(kReduced, 13);
  const TripletMatrix<double> x = random_batch<double>(6, kReduced.in_dim(), 14);

  NetWorkspace<double> ws;
  NetGradientsT<double> grads;
  const double base_loss = net_backward(net0, x, 0.1, ws, grads);
  CHECK(base_loss > 0.0);  // the batch must exercise the active branch
  const Eigen::VectorXd analytic = gradients_to_flat(grads);
  const Eigen::VectorXd theta = net_to_flat(net0);

  auto net = net0;
  const double h = 1e-4;
  int checked = 0;
  for (Eigen::Index p = 0; p < theta.size(); ++p) {
    Eigen::VectorXd t = theta;
    t[p] = theta[p] + h;
    net_from_flat(net, t);
    const double lp = net_batch_loss(net, x, 0.1, ws);
    t[p] = theta[p] - h;
    net_from_flat(net, t);
    const double lm = net_batch_loss(net, x, 0.1, ws);
    const double fd = (lp - lm) / (2.0 * h);
    const double scale = std::max(std::abs(fd), std::abs(analytic[p]));
    if (scale < 1e-9) continue;  // both zero (dead units)
    CHECK(std::abs(fd - analytic[p]) <= 1e-3 * scale);
    ++checked;
  }
  CHECK(checked > 200);
}

TEST_CASE("duplicating the batch leaves the mean gradients unchanged") {
  const auto net = DescriptorNetT<double>::random_init(kReduced, 15);
  const TripletMatrix<double> x = random_batch<double>(5, kReduced.in_dim(), 16);
  TripletMatrix<double> xx(2 * x.rows(), x.cols());
  xx.topRows(x.rows()) = x;
  xx.bottomRows(x.rows()) = x;

  NetWorkspace<double> ws;
  NetGradientsT<double> g1, g2;
  const double l1 = net_backward(net, x, 0.1, ws, g1);
  const double l2 = net_backward(net, xx, 0.1, ws, g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  const Eigen::VectorXd f1 = gradients_to_flat(g1), f2 = gradients_to_flat(g2);
  for (Eigen::Index i = 0; i < f1.size(); ++i)
    CHECK(f1[i] == doctest::Approx(f2[i]).epsilon(1e-10));
}

TEST_CASE("adam with zero learning rate leaves weights unchanged") {
  auto net = DescriptorNetT<double>::random_init(kReduced, 17);
  const Eigen::VectorXd before = net_to_flat(net);
  NetWorkspace<double> ws;
  NetGradientsT<double> grads;
  AdamState<double> adam;
  adam.resize_like(net);
  AdamConfig cfg;
  cfg.lr = 0.0;
  const TripletMatrix<double> x = random_batch<double>(4, kReduced.in_dim(), 18);
  for (int it = 0; it < 3; ++it) {
    net_backward(net, x, 0.1, ws, grads);
    adam_step(net, grads, adam, cfg);
  }
  CHECK(net_to_flat(net) == before);
}

TEST_CASE("training is deterministic in the seed and reduces the loss") {
  const TrainingSet ts = cube_training_set(M_PI / 2.0);
  TrainConfig cfg;
  cfg.iterations = 60;
  cfg.batch_size = 24;
  cfg.lr = 1e-3;
  cfg.seed = 5;
  const auto run1 = train_descriptor_net<double>(ts, kReduced, cfg);
  const auto run2 = train_descriptor_net<double>(ts, kReduced, cfg);
  CHECK(run1.loss_history == run2.loss_history);

  cfg.seed = 6;
  const auto run3 = train_descriptor_net<double>(ts, kReduced, cfg);
  CHECK(run1.loss_history != run3.loss_history);

  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 15; ++i) head += run1.loss_history[i];
  for (int i = 45; i < 60; ++i) tail += run1.loss_history[i];
  CHECK(tail < head);

  // lr = 0 keeps the weights at their initialization; the per-iteration loss
  // still fluctuates with the random batches but shows no trend
  cfg.lr = 0.0;
  cfg.seed = 5;
  const auto flat = train_descriptor_net<double>(ts, kReduced, cfg);
  const auto init = DescriptorNetT<double>::random_init(kReduced, cfg.seed);
  CHECK(net_to_flat(flat.net) == net_to_flat(init));
  double flat_head = 0.0, flat_tail = 0.0;
  for (int i = 0; i < 30; ++i) flat_head += flat.loss_history[i];
  for (int i = 30; i < 60; ++i) flat_tail += flat.loss_history[i];
  CHECK(std::abs(flat_tail - flat_head) / 30.0 < 0.05);
}

TEST_CASE("eval error rate is zero for a perfect descriptor oracle") {
  const TrainingSet ts = cube_training_set(M_PI);
  const int n = ts.num_corners;
  const auto oracle = [n](const Neighborhood& nb) {
    Descriptor d = Descriptor::Zero(n);
    d[nb.corner_id] = 1.0;
    return d;
  };
  for (std::uint64_t seed = 0; seed < 10; ++seed)
    CHECK(eval_error_rate(oracle, ts, seed) == 0.0);
}

TEST_CASE("eval error rate of a constant net matches the random-guess expectation") {
  const TrainingSet ts = cube_training_set(M_PI);
  const int n = ts.num_corners;
  const auto constant = [n](const Neighborhood&) {
    Descriptor d = Descriptor::Zero(8);
    d[0] = 1.0;
    return d;
  };
  double total = 0.0;
  const int runs = 100;
  for (std::uint64_t seed = 0; seed < runs; ++seed)
    total += eval_error_rate(constant, ts, seed);
  const double mean = total / runs;
  const double p = 1.0 - 1.0 / n;
  const double se = std::sqrt(p * (1.0 - p) / (runs * n));
  CHECK(std::abs(mean - p) <= 5.0 * se);
}

TEST_CASE("eval error rate validates its inputs") {
  TrainingSet tiny;
  tiny.radius = 3;
  tiny.num_corners = 1;
  tiny.by_corner.resize(1);
  const auto fn = [](const Neighborhood&) { return Descriptor::Ones(2).normalized(); };
  CHECK_THROWS_AS(static_cast<void>(eval_error_rate(fn, tiny, 0)), ArgumentError);
}

TEST_CASE("weights round trip through the VDSC file") {
  const auto net = DescriptorNetT<float>::random_init(kReduced, 19);
  const auto path = std::filesystem::temp_directory_path() / "volreg_net.vdsc";
  save_weights(net, path);
  const auto back = load_weights<float>(path);
  CHECK(back.shape == net.shape);
  CHECK(back.w1 == net.w1);
  CHECK(back.w2 == net.w2);
  CHECK(back.w3 == net.w3);
  CHECK(back.w4 == net.w4);
  CHECK(back.b1 == net.b1);
  CHECK(back.b4 == net.b4);
  std::filesystem::remove(path);
}

TEST_CASE("corrupt weights files produce decode errors") {
  const auto net = DescriptorNetT<float>::random_init(kReduced, 21);
  const auto path = std::filesystem::temp_directory_path() / "volreg_net_bad.vdsc";
  save_weights(net, path);

  // magic
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.put('X');
  }
  CHECK_THROWS_AS(static_cast<void>(load_weights<float>(path)), DecodeError);

  // truncation
  save_weights(net, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) / 2);
  CHECK_THROWS_AS(static_cast<void>(load_weights<float>(path)), DecodeError);
  std::filesystem::remove(path);
}
