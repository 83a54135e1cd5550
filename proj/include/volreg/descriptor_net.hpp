// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <utility>
#include <vector>

#include "volreg/descriptor.hpp"
#include "volreg/errors.hpp"
#include "volreg/rng.hpp"

namespace volreg {

/// Architecture of the corner descriptor network:
///   input (in_edge^3 density cube)
///   -> valid 3x3x3 conv, conv1_filters channels, ReLU
///   -> valid 3x3x3 conv, conv2_filters channels, ReLU
///   -> flatten -> linear hidden, ReLU -> linear out -> L2 normalize.
struct NetShape {
  int in_edge = 7;
  int conv1_filters = 32;
  int conv2_filters = 64;
  int hidden = 686;   // 2 * 7^3
  int out = 343;      // 7^3

  int conv1_edge() const { return in_edge - 2; }
  int conv2_edge() const { return in_edge - 4; }
  int in_dim() const { return in_edge * in_edge * in_edge; }
  int conv1_positions() const { return conv1_edge() * conv1_edge() * conv1_edge(); }
  int conv2_positions() const { return conv2_edge() * conv2_edge() * conv2_edge(); }
  int flat_dim() const { return conv2_filters * conv2_positions(); }

  void validate() const {
    if (in_edge < 5 || in_edge % 2 == 0)
      throw ArgumentError("net input edge must be odd and >= 5");
    if (conv1_filters < 1 || conv2_filters < 1 || hidden < 1 || out < 1)
      throw ArgumentError("net layer sizes must be >= 1");
  }

  bool operator==(const NetShape&) const = default;
};

/// Weights of the descriptor network. Conv weights are stored as
/// (27 * in_channels) x out_channels matrices with row = tap * in_channels
/// + channel, tap = a + 3*(b + 3*c) over the kernel offsets (x fastest).
/// Scalar is float in production (weight files are float32) and double in
/// the gradient-check tests.
template <class Scalar>
struct DescriptorNetT {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  NetShape shape;
  Mat w1;  // 27 x c1
  Vec b1;
  Mat w2;  // 27*c1 x c2
  Vec b2;
  Mat w3;  // flat x hidden
  Vec b3;
  Mat w4;  // hidden x out
  Vec b4;

  void resize(const NetShape& s) {
    s.validate();
    shape = s;
    w1.setZero(27, s.conv1_filters);
    b1.setZero(s.conv1_filters);
    w2.setZero(27 * s.conv1_filters, s.conv2_filters);
    b2.setZero(s.conv2_filters);
    w3.setZero(s.flat_dim(), s.hidden);
    b3.setZero(s.hidden);
    w4.setZero(s.hidden, s.out);
    b4.setZero(s.out);
  }

  std::size_t parameter_count() const {
    return static_cast<std::size_t>(w1.size()) + b1.size() + w2.size() + b2.size() +
           w3.size() + b3.size() + w4.size() + b4.size();
  }

  /// Glorot-uniform weights (fan counts include the 27 kernel taps for the
  /// conv layers), zero biases, drawn in storage order from a seeded stream.
  static DescriptorNetT random_init(const NetShape& s, std::uint64_t seed);

  template <class Other>
  DescriptorNetT<Other> cast() const {
    DescriptorNetT<Other> n;
    n.resize(shape);
    n.w1 = w1.template cast<Other>();
    n.b1 = b1.template cast<Other>();
    n.w2 = w2.template cast<Other>();
    n.b2 = b2.template cast<Other>();
    n.w3 = w3.template cast<Other>();
    n.b3 = b3.template cast<Other>();
    n.w4 = w4.template cast<Other>();
    n.b4 = b4.template cast<Other>();
    return n;
  }
};

using DescriptorNet = DescriptorNetT<float>;

/// Same tensors as the net; used for both analytic gradients and Adam moments.
template <class Scalar>
struct NetGradientsT {
  using Mat = typename DescriptorNetT<Scalar>::Mat;
  using Vec = typename DescriptorNetT<Scalar>::Vec;
  Mat w1, w2, w3, w4;
  Vec b1, b2, b3, b4;

  void resize_like(const DescriptorNetT<Scalar>& net) {
    w1.setZero(net.w1.rows(), net.w1.cols());
    b1.setZero(net.b1.size());
    w2.setZero(net.w2.rows(), net.w2.cols());
    b2.setZero(net.b2.size());
    w3.setZero(net.w3.rows(), net.w3.cols());
    b3.setZero(net.b3.size());
    w4.setZero(net.w4.rows(), net.w4.cols());
    b4.setZero(net.b4.size());
  }
};

/// Scratch buffers for a batch pass; reused across iterations.
template <class Scalar>
struct NetWorkspace {
  using MatR =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  MatR col1;   // (N*P1) x 27
  MatR a1;     // (N*P1) x c1, post-ReLU
  MatR col2;   // (N*P2) x 27*c1
  MatR a2;     // (N*P2) x c2, post-ReLU; rows per sample form the flat vector
  MatR a3;     // N x hidden, post-ReLU
  MatR y4;     // N x out, pre-normalization
  MatR desc;   // N x out, unit rows
  Eigen::VectorXd norms;  // pre-normalization L2 norms (0 marks the fallback)
  // backward scratch
  MatR dy4, da3, dflat, dy2, dcol2, da1;
};

/// Batch forward pass. X holds one sample per row (N x in_edge^3, x-fastest).
/// Rows whose pre-normalization norm falls below 1e-12 get the e1 fallback
/// descriptor and are excluded from gradients.
template <class Scalar>
void net_forward_batch(const DescriptorNetT<Scalar>& net,
                       const typename NetWorkspace<Scalar>::MatR& x,
                       NetWorkspace<Scalar>& ws);

/// Single-neighborhood forward. Throws ShapeError when the neighborhood edge
/// does not match the net input. The returned descriptor is double precision
/// and exactly unit-norm up to rounding.
template <class Scalar>
Descriptor net_forward(const DescriptorNetT<Scalar>& net, const Neighborhood& n);

/// Margin ranking loss on a descriptor triplet:
///   max(0, margin + |anchor - positive| - |anchor - negative|).
double triplet_loss(const Descriptor& anchor, const Descriptor& positive,
                    const Descriptor& negative, double margin);

/// A batch of triplets packed row-wise: rows (3t, 3t+1, 3t+2) hold the
/// anchor, positive and negative of triplet t.
template <class Scalar>
using TripletMatrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Mean triplet loss of the batch (forward only).
template <class Scalar>
double net_batch_loss(const DescriptorNetT<Scalar>& net, const TripletMatrix<Scalar>& x,
                      double margin, NetWorkspace<Scalar>& ws);

/// Analytic gradients of the mean batch loss for every parameter. Zero-loss
/// triplets contribute nothing; the ReLU subgradient at 0 and the hinge
/// subgradient at the kink are both 0. Returns the mean loss.
template <class Scalar>
double net_backward(const DescriptorNetT<Scalar>& net, const TripletMatrix<Scalar>& x,
                    double margin, NetWorkspace<Scalar>& ws,
                    NetGradientsT<Scalar>& grads);

/// Flat parameter vector in the fixed order w1,b1,w2,b2,w3,b3,w4,b4
/// (column-major within each tensor). Used by the finite-difference checks.
template <class Scalar>
Eigen::VectorXd net_to_flat(const DescriptorNetT<Scalar>& net);
template <class Scalar>
void net_from_flat(DescriptorNetT<Scalar>& net, const Eigen::VectorXd& flat);
template <class Scalar>
Eigen::VectorXd gradients_to_flat(const NetGradientsT<Scalar>& grads);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class Scalar>
struct AdamState {
  NetGradientsT<Scalar> m, v;
  long step = 0;
  void resize_like(const DescriptorNetT<Scalar>& net) {
    m.resize_like(net);
    v.resize_like(net);
    step = 0;
  }
};

template <class Scalar>
void adam_step(DescriptorNetT<Scalar>& net, const NetGradientsT<Scalar>& grads,
               AdamState<Scalar>& state, const AdamConfig& cfg);

struct TrainConfig {
  int iterations = 2000;
  int batch_size = 256;
  double margin = 0.1;
  double lr = 1e-4;
  std::uint64_t seed = 1;

  void validate() const {
    if (iterations < 0) throw ArgumentError("iterations must be >= 0");
    if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
    if (!(margin > 0.0)) throw ArgumentError("margin must be > 0");
    if (lr < 0.0) throw ArgumentError("learning rate must be >= 0");
  }
};

template <class Scalar>
struct TrainOutcome {
  DescriptorNetT<Scalar> net;
  std::vector<double> loss_history;  // mean batch loss per iteration
};

/// Contrastive training: each iteration samples batch_size triplets (two
/// orientations of one corner plus one of another, uniform over corners then
/// stored orientations), runs forward/backward and one Adam step. Fully
/// deterministic given the seed (single-threaded).
template <class Scalar>
TrainOutcome<Scalar> train_descriptor_net(const TrainingSet& dataset,
                                          const NetShape& shape, const TrainConfig& cfg);

/// Matching error rate on held-out corners: one random test neighborhood and
/// one random proposal neighborhood (a different stored orientation) per
/// corner; each test descriptor matches the proposal with the highest inverse
/// angular distance, exact ties broken uniformly at random; the result is
/// wrong matches / corner count.
double eval_error_rate(const std::function<Descriptor(const Neighborhood&)>& describe,
                       const TrainingSet& holdout, std::uint64_t seed);

template <class Scalar>
double eval_error_rate(const DescriptorNetT<Scalar>& net, const TrainingSet& holdout,
                       std::uint64_t seed) {
  return eval_error_rate(
      [&net](const Neighborhood& n) { return net_forward(net, n); }, holdout, seed);
}

// Weights file "VDSC": magic, u32 version (1), u32 tensor count (8), then per
// tensor u32 rank, u32 dims..., float32 values in row-major order. Tensors
// appear in the order w1,b1,w2,b2,w3,b3,w4,b4.
template <class Scalar>
void save_weights(const DescriptorNetT<Scalar>& net, const std::filesystem::path& path);
template <class Scalar>
DescriptorNetT<Scalar> load_weights(const std::filesystem::path& path);

}  // namespace volreg
