// Copyright (c) 2026 volreg contributors
// SPDX-License-Identifier: Apache-2.0
#include "volreg/descriptor_net.hpp"

#include <cmath>
#include <limits>
#include <cstring>
#include <fstream>

#include "volreg/match.hpp"

namespace volreg {

namespace {

// src-cell index table for a valid 3x3x3 convolution: entry [pos*27 + tap]
// is the input cell feeding output position `pos` through kernel tap `tap`.
std::vector<int> conv_index_table(int in_edge) {
  const int out_edge = in_edge - 2;
  std::vector<int> table(static_cast<std::size_t>(out_edge) * out_edge * out_edge * 27);
  std::size_t w = 0;
  for (int z = 0; z < out_edge; ++z)
    for (int y = 0; y < out_edge; ++y)
      for (int x = 0; x < out_edge; ++x)
        for (int c = 0; c < 3; ++c)
          for (int b = 0; b < 3; ++b)
            for (int a = 0; a < 3; ++a)
              table[w++] = (x + a) + in_edge * ((y + b) + in_edge * (z + c));
  return table;
}

template <class Scalar>
void relu_inplace(Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>& m) {
  m = m.cwiseMax(Scalar(0));
}

}  // namespace

template <class Scalar>
DescriptorNetT<Scalar> DescriptorNetT<Scalar>::random_init(const NetShape& s,
                                                           std::uint64_t seed) {
  DescriptorNetT net;
  net.resize(s);
  Rng rng = Rng::derive(seed, 0xA11ull);
  auto fill = [&rng](auto& m, double fan_in, double fan_out) {
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    for (Eigen::Index i = 0; i < m.size(); ++i)
      m.data()[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  };
  fill(net.w1, 27.0, 27.0 * s.conv1_filters);
  fill(net.w2, 27.0 * s.conv1_filters, 27.0 * s.conv2_filters);
  fill(net.w3, s.flat_dim(), s.hidden);
  fill(net.w4, s.hidden, s.out);
  // biases stay zero
  return net;
}

template <class Scalar>
void net_forward_batch(const DescriptorNetT<Scalar>& net,
                       const typename NetWorkspace<Scalar>::MatR& x,
                       NetWorkspace<Scalar>& ws) {
  using MatR = typename NetWorkspace<Scalar>::MatR;
  const NetShape& s = net.shape;
  if (x.cols() != s.in_dim()) throw ShapeError("net input width does not match shape");
  const Eigen::Index n = x.rows();
  const int p1 = s.conv1_positions(), p2 = s.conv2_positions();
  const int c1 = s.conv1_filters, c2 = s.conv2_filters;

  const std::vector<int> tab1 = conv_index_table(s.in_edge);
  const std::vector<int> tab2 = conv_index_table(s.conv1_edge());

  // conv1 as im2col + GEMM
  ws.col1.resize(n * p1, 27);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int pos = 0; pos < p1; ++pos) {
      Scalar* dst = ws.col1.data() + (r * p1 + pos) * 27;
      const Scalar* src = x.data() + r * s.in_dim();
      const int* idx = tab1.data() + static_cast<std::size_t>(pos) * 27;
      for (int t = 0; t < 27; ++t) dst[t] = src[idx[t]];
    }
  ws.a1.noalias() = ws.col1 * net.w1;
  ws.a1.rowwise() += net.b1.transpose();
  relu_inplace(ws.a1);

  // conv2
  ws.col2.resize(n * p2, 27 * c1);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int pos = 0; pos < p2; ++pos) {
      Scalar* dst = ws.col2.data() + (r * p2 + pos) * (27 * c1);
      const int* idx = tab2.data() + static_cast<std::size_t>(pos) * 27;
      for (int t = 0; t < 27; ++t)
        std::memcpy(dst + t * c1, ws.a1.data() + (r * p1 + idx[t]) * c1,
                    sizeof(Scalar) * c1);
    }
  ws.a2.noalias() = ws.col2 * net.w2;
  ws.a2.rowwise() += net.b2.transpose();
  relu_inplace(ws.a2);

  // flatten is a reinterpretation: row r of `flat` is sample r's (pos, ch) block
  Eigen::Map<const MatR> flat(ws.a2.data(), n, static_cast<Eigen::Index>(p2) * c2);

  ws.a3.noalias() = flat * net.w3;
  ws.a3.rowwise() += net.b3.transpose();
  relu_inplace(ws.a3);

  ws.y4.noalias() = ws.a3 * net.w4;
  ws.y4.rowwise() += net.b4.transpose();

  ws.desc.resize(n, s.out);
  ws.norms.resize(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double sq = 0.0;
    const Scalar* y = ws.y4.data() + r * s.out;
    for (int i = 0; i < s.out; ++i) sq += static_cast<double>(y[i]) * y[i];
    const double nrm = std::sqrt(sq);
    Scalar* d = ws.desc.data() + r * s.out;
    if (nrm < 1e-12) {
      // Degenerate output: fall back to e1 and flag the row (norm 0) so the
      // backward pass skips it.
      ws.norms[r] = 0.0;
      for (int i = 0; i < s.out; ++i) d[i] = Scalar(0);
      d[0] = Scalar(1);
    } else {
      ws.norms[r] = nrm;
      const double inv = 1.0 / nrm;
      for (int i = 0; i < s.out; ++i) d[i] = static_cast<Scalar>(y[i] * inv);
    }
  }
}

template <class Scalar>
Descriptor net_forward(const DescriptorNetT<Scalar>& net, const Neighborhood& nb) {
  const NetShape& s = net.shape;
  if (nb.edge() != s.in_edge ||
      nb.values.size() != static_cast<std::size_t>(s.in_dim()))
    throw ShapeError("neighborhood size does not match the net input");

  typename NetWorkspace<Scalar>::MatR x(1, s.in_dim());
  for (int i = 0; i < s.in_dim(); ++i) x(0, i) = static_cast<Scalar>(nb.values[i]);
  NetWorkspace<Scalar> ws;
  net_forward_batch(net, x, ws);

  Descriptor d(s.out);
  if (ws.norms[0] == 0.0) {
    d.setZero();
    d[0] = 1.0;
    return d;
  }
  // Renormalize in double so the unit-norm contract holds to full precision.
  for (int i = 0; i < s.out; ++i) d[i] = static_cast<double>(ws.y4(0, i));
  d /= d.norm();
  return d;
}

double triplet_loss(const Descriptor& anchor, const Descriptor& positive,
                    const Descriptor& negative, double margin) {
  if (anchor.size() != positive.size() || anchor.size() != negative.size())
    throw ShapeError("triplet descriptors must have equal length");
  if (!(margin > 0.0)) throw ArgumentError("margin must be > 0");
  const double d_pos = (anchor - positive).norm();
  const double d_neg = (anchor - negative).norm();
  return std::max(0.0, margin + d_pos - d_neg);
}

namespace {

// Mean loss over the packed batch plus, optionally, gradients w.r.t. the
// descriptor rows (written as doubles into ddesc, one row per sample).
template <class Scalar>
double triplet_stage(const NetWorkspace<Scalar>& ws, double margin,
                     Eigen::MatrixXd* ddesc) {
  const Eigen::Index n = ws.desc.rows();
  const Eigen::Index t_count = n / 3;
  if (ddesc != nullptr) ddesc->setZero(n, ws.desc.cols());

  double loss_sum = 0.0;
  const double inv_t = 1.0 / static_cast<double>(t_count);
  for (Eigen::Index t = 0; t < t_count; ++t) {
    const Eigen::RowVectorXd a = ws.desc.row(3 * t).template cast<double>();
    const Eigen::RowVectorXd p = ws.desc.row(3 * t + 1).template cast<double>();
    const Eigen::RowVectorXd q = ws.desc.row(3 * t + 2).template cast<double>();
    const Eigen::RowVectorXd ap = a - p;
    const Eigen::RowVectorXd an = a - q;
    const double d_pos = ap.norm();
    const double d_neg = an.norm();
    const double pre = margin + d_pos - d_neg;
    if (pre > 0.0) loss_sum += pre;
    if (ddesc == nullptr || !(pre > 0.0)) continue;
    if (d_pos > 1e-12) {
      const Eigen::RowVectorXd g = ap * (inv_t / d_pos);
      ddesc->row(3 * t) += g;
      ddesc->row(3 * t + 1) -= g;
    }
    if (d_neg > 1e-12) {
      const Eigen::RowVectorXd g = an * (inv_t / d_neg);
      ddesc->row(3 * t) -= g;
      ddesc->row(3 * t + 2) += g;
    }
  }
  return loss_sum * inv_t;
}

}  // namespace

template <class Scalar>
double net_batch_loss(const DescriptorNetT<Scalar>& net, const TripletMatrix<Scalar>& x,
                      double margin, NetWorkspace<Scalar>& ws) {
  if (x.rows() == 0 || x.rows() % 3 != 0)
    throw ArgumentError("triplet batch must pack a positive multiple of 3 rows");
  net_forward_batch(net, x, ws);
  return triplet_stage(ws, margin, nullptr);
}

template <class Scalar>
double net_backward(const DescriptorNetT<Scalar>& net, const TripletMatrix<Scalar>& x,
                    double margin, NetWorkspace<Scalar>& ws,
                    NetGradientsT<Scalar>& grads) {
  using MatR = typename NetWorkspace<Scalar>::MatR;
  if (x.rows() == 0 || x.rows() % 3 != 0)
    throw ArgumentError("triplet batch must pack a positive multiple of 3 rows");
  net_forward_batch(net, x, ws);

  Eigen::MatrixXd ddesc;
  const double loss = triplet_stage(ws, margin, &ddesc);

  const NetShape& s = net.shape;
  const Eigen::Index n = x.rows();
  const int p1 = s.conv1_positions(), p2 = s.conv2_positions();
  const int c1 = s.conv1_filters, c2 = s.conv2_filters;
  grads.resize_like(net);

  // back through the row-wise L2 normalization: dy = (g - (g.d) d) / |y|
  ws.dy4.resize(n, s.out);
  for (Eigen::Index r = 0; r < n; ++r) {
    if (ws.norms[r] == 0.0) {
      ws.dy4.row(r).setZero();
      continue;
    }
    const Eigen::RowVectorXd d = ws.desc.row(r).template cast<double>();
    const Eigen::RowVectorXd g = ddesc.row(r);
    const Eigen::RowVectorXd dy = (g - g.dot(d) * d) / ws.norms[r];
    for (int i = 0; i < s.out; ++i) ws.dy4(r, i) = static_cast<Scalar>(dy[i]);
  }

  grads.w4.noalias() = ws.a3.transpose() * ws.dy4;
  grads.b4 = ws.dy4.colwise().sum().transpose();
  ws.da3.noalias() = ws.dy4 * net.w4.transpose();
  ws.da3 = ws.da3.cwiseProduct((ws.a3.array() > Scalar(0)).template cast<Scalar>().matrix());

  Eigen::Map<const MatR> flat(ws.a2.data(), n, static_cast<Eigen::Index>(p2) * c2);
  grads.w3.noalias() = flat.transpose() * ws.da3;
  grads.b3 = ws.da3.colwise().sum().transpose();
  ws.dflat.noalias() = ws.da3 * net.w3.transpose();

  // un-flatten: rows (sample*p2 + pos), cols c2
  Eigen::Map<MatR> dy2(ws.dflat.data(), n * p2, c2);
  dy2 = dy2.cwiseProduct((ws.a2.array() > Scalar(0)).template cast<Scalar>().matrix());

  grads.w2.noalias() = ws.col2.transpose() * dy2;
  grads.b2 = dy2.colwise().sum().transpose();
  ws.dcol2.noalias() = dy2 * net.w2.transpose();

  // col2im scatter back onto conv1 activations (fixed accumulation order)
  const std::vector<int> tab2 = conv_index_table(s.conv1_edge());
  ws.da1.setZero(n * p1, c1);
  for (Eigen::Index r = 0; r < n; ++r)
    for (int pos = 0; pos < p2; ++pos) {
      const Scalar* src = ws.dcol2.data() + (r * p2 + pos) * (27 * c1);
      const int* idx = tab2.data() + static_cast<std::size_t>(pos) * 27;
      for (int t = 0; t < 27; ++t) {
        Scalar* dst = ws.da1.data() + (r * p1 + idx[t]) * c1;
        const Scalar* col = src + t * c1;
        for (int ch = 0; ch < c1; ++ch) dst[ch] += col[ch];
      }
    }
  ws.da1 = ws.da1.cwiseProduct((ws.a1.array() > Scalar(0)).template cast<Scalar>().matrix());

  grads.w1.noalias() = ws.col1.transpose() * ws.da1;
  grads.b1 = ws.da1.colwise().sum().transpose();
  return loss;
}

namespace {

template <class Scalar, class Fn>
void visit_tensors(DescriptorNetT<Scalar>& net, NetGradientsT<Scalar>& a,
                   NetGradientsT<Scalar>& b, const NetGradientsT<Scalar>& g, Fn&& fn) {
  fn(net.w1, a.w1, b.w1, g.w1);
  fn(net.b1, a.b1, b.b1, g.b1);
  fn(net.w2, a.w2, b.w2, g.w2);
  fn(net.b2, a.b2, b.b2, g.b2);
  fn(net.w3, a.w3, b.w3, g.w3);
  fn(net.b3, a.b3, b.b3, g.b3);
  fn(net.w4, a.w4, b.w4, g.w4);
  fn(net.b4, a.b4, b.b4, g.b4);
}

}  // namespace

template <class Scalar>
void adam_step(DescriptorNetT<Scalar>& net, const NetGradientsT<Scalar>& grads,
               AdamState<Scalar>& state, const AdamConfig& cfg) {
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  visit_tensors<Scalar>(net, state.m, state.v, grads,
                        [&](auto& param, auto& m, auto& v, const auto& g) {
                          for (Eigen::Index i = 0; i < param.size(); ++i) {
                            const double gi = static_cast<double>(g.data()[i]);
                            double mi = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
                            double vi = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
                            m.data()[i] = static_cast<Scalar>(mi);
                            v.data()[i] = static_cast<Scalar>(vi);
                            const double step =
                                cfg.lr * (mi / bc1) / (std::sqrt(vi / bc2) + cfg.eps);
                            param.data()[i] =
                                static_cast<Scalar>(param.data()[i] - static_cast<Scalar>(step));
                          }
                        });
}

template <class Scalar>
TrainOutcome<Scalar> train_descriptor_net(const TrainingSet& dataset,
                                          const NetShape& shape, const TrainConfig& cfg) {
  cfg.validate();
  dataset.validate();
  if (dataset.radius * 2 + 1 != shape.in_edge)
    throw ArgumentError("dataset neighborhood edge does not match the net input");

  std::vector<int> eligible;  // corners with at least two stored orientations
  for (int c = 0; c < dataset.num_corners; ++c)
    if (dataset.by_corner[c].size() >= 2) eligible.push_back(c);
  if (eligible.empty() || dataset.num_corners < 2)
    throw DatasetError("training needs >= 2 corners and an anchor corner with >= 2 items");

  TrainOutcome<Scalar> out;
  out.net = DescriptorNetT<Scalar>::random_init(shape, cfg.seed);
  out.loss_history.reserve(cfg.iterations);

  AdamState<Scalar> adam;
  adam.resize_like(out.net);
  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  NetWorkspace<Scalar> ws;
  NetGradientsT<Scalar> grads;
  TripletMatrix<Scalar> x(3 * cfg.batch_size, shape.in_dim());

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    Rng rng = Rng::derive(cfg.seed, 0x7157ull + static_cast<std::uint64_t>(iter));
    for (int t = 0; t < cfg.batch_size; ++t) {
      const int ca = eligible[rng.uniform_int(0, static_cast<int>(eligible.size()) - 1)];
      const auto& items_a = dataset.by_corner[ca];
      const int ia = static_cast<int>(rng.uniform_int(0, static_cast<int>(items_a.size()) - 1));
      int ip = static_cast<int>(rng.uniform_int(0, static_cast<int>(items_a.size()) - 2));
      if (ip >= ia) ++ip;
      int cb = static_cast<int>(rng.uniform_int(0, dataset.num_corners - 2));
      if (cb >= ca) ++cb;
      const auto& items_b = dataset.by_corner[cb];
      const int in = static_cast<int>(rng.uniform_int(0, static_cast<int>(items_b.size()) - 1));

      const Neighborhood* rows[3] = {&dataset.items[items_a[ia]],
                                     &dataset.items[items_a[ip]],
                                     &dataset.items[items_b[in]]};
      for (int r = 0; r < 3; ++r)
        for (int i = 0; i < shape.in_dim(); ++i)
          x(3 * t + r, i) = static_cast<Scalar>(rows[r]->values[i]);
    }
    const double loss = net_backward(out.net, x, cfg.margin, ws, grads);
    adam_step(out.net, grads, adam, adam_cfg);
    out.loss_history.push_back(loss);
  }
  return out;
}

double eval_error_rate(const std::function<Descriptor(const Neighborhood&)>& describe,
                       const TrainingSet& holdout, std::uint64_t seed) {
  holdout.validate();
  if (holdout.num_corners < 2)
    throw ArgumentError("error-rate evaluation needs at least 2 corners");
  for (int c = 0; c < holdout.num_corners; ++c)
    if (holdout.by_corner[c].size() < 2)
      throw ArgumentError("every held-out corner needs at least 2 orientations");

  const int n = holdout.num_corners;
  Rng rng = Rng::derive(seed, 0xE7A1ull);
  std::vector<Descriptor> tests(n), proposals(n);
  for (int c = 0; c < n; ++c) {
    const auto& items = holdout.by_corner[c];
    const int ti = static_cast<int>(rng.uniform_int(0, static_cast<int>(items.size()) - 1));
    int pi = static_cast<int>(rng.uniform_int(0, static_cast<int>(items.size()) - 2));
    if (pi >= ti) ++pi;
    tests[c] = describe(holdout.items[items[ti]]);
    proposals[c] = describe(holdout.items[items[pi]]);
  }

  int wrong = 0;
  for (int c = 0; c < n; ++c) {
    double best = -1.0;
    std::vector<int> best_set;
    for (int p = 0; p < n; ++p) {
      const double score =
          similarity(tests[c], proposals[p], SimilarityMetric::inverse_angular);
      if (score > best) {
        best = score;
        best_set.assign(1, p);
      } else if (score == best) {
        best_set.push_back(p);
      }
    }
    int pick = best_set.front();
    if (best_set.size() > 1)
      pick = best_set[rng.uniform_int(0, static_cast<int>(best_set.size()) - 1)];
    if (pick != c) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(n);
}

template <class Scalar>
Eigen::VectorXd net_to_flat(const DescriptorNetT<Scalar>& net) {
  Eigen::VectorXd flat(net.parameter_count());
  Eigen::Index off = 0;
  auto put = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) flat[off++] = static_cast<double>(m.data()[i]);
  };
  put(net.w1);
  put(net.b1);
  put(net.w2);
  put(net.b2);
  put(net.w3);
  put(net.b3);
  put(net.w4);
  put(net.b4);
  return flat;
}

template <class Scalar>
void net_from_flat(DescriptorNetT<Scalar>& net, const Eigen::VectorXd& flat) {
  if (flat.size() != static_cast<Eigen::Index>(net.parameter_count()))
    throw ShapeError("flat parameter vector has the wrong length");
  Eigen::Index off = 0;
  auto get = [&](auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(flat[off++]);
  };
  get(net.w1);
  get(net.b1);
  get(net.w2);
  get(net.b2);
  get(net.w3);
  get(net.b3);
  get(net.w4);
  get(net.b4);
}

template <class Scalar>
Eigen::VectorXd gradients_to_flat(const NetGradientsT<Scalar>& grads) {
  Eigen::Index total = grads.w1.size() + grads.b1.size() + grads.w2.size() +
                       grads.b2.size() + grads.w3.size() + grads.b3.size() +
                       grads.w4.size() + grads.b4.size();
  Eigen::VectorXd flat(total);
  Eigen::Index off = 0;
  auto put = [&](const auto& m) {
    for (Eigen::Index i = 0; i < m.size(); ++i) flat[off++] = static_cast<double>(m.data()[i]);
  };
  put(grads.w1);
  put(grads.b1);
  put(grads.w2);
  put(grads.b2);
  put(grads.w3);
  put(grads.b3);
  put(grads.w4);
  put(grads.b4);
  return flat;
}

// --- VDSC weights file -------------------------------------------------------

namespace {

void write_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v & 0xFF),
                              static_cast<unsigned char>((v >> 8) & 0xFF),
                              static_cast<unsigned char>((v >> 16) & 0xFF),
                              static_cast<unsigned char>((v >> 24) & 0xFF)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32_checked(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw DecodeError(DecodeError::Kind::truncated, "weights file truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float read_f32_checked(std::istream& in) {
  const std::uint32_t bits = read_u32_checked(in);
  float v;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

template <class M>
void write_tensor(std::ostream& out, const M& m, bool vector_rank1) {
  if (vector_rank1) {
    write_u32(out, 1u);
    write_u32(out, static_cast<std::uint32_t>(m.size()));
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      float v = static_cast<float>(m.data()[i]);
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      write_u32(out, bits);
    }
    return;
  }
  write_u32(out, 2u);
  write_u32(out, static_cast<std::uint32_t>(m.rows()));
  write_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      float v = static_cast<float>(m(r, c));
      std::uint32_t bits;
      std::memcpy(&bits, &v, sizeof bits);
      write_u32(out, bits);
    }
}

template <class M>
void read_matrix(std::istream& in, M& m) {
  if (read_u32_checked(in) != 2u)
    throw DecodeError(DecodeError::Kind::bad_header, "expected a rank-2 tensor");
  const auto rows = read_u32_checked(in);
  const auto cols = read_u32_checked(in);
  if (rows == 0 || cols == 0 || rows > (1u << 24) || cols > (1u << 24))
    throw DecodeError(DecodeError::Kind::bad_header, "tensor dims out of range");
  m.resize(rows, cols);
  for (std::uint32_t r = 0; r < rows; ++r)
    for (std::uint32_t c = 0; c < cols; ++c) {
      const float v = read_f32_checked(in);
      if (!std::isfinite(v))
        throw DecodeError(DecodeError::Kind::non_finite, "non-finite weight value");
      m(r, c) = static_cast<typename M::Scalar>(v);
    }
}

template <class V>
void read_vector(std::istream& in, V& m) {
  if (read_u32_checked(in) != 1u)
    throw DecodeError(DecodeError::Kind::bad_header, "expected a rank-1 tensor");
  const auto n = read_u32_checked(in);
  if (n == 0 || n > (1u << 24))
    throw DecodeError(DecodeError::Kind::bad_header, "tensor dims out of range");
  m.resize(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    const float v = read_f32_checked(in);
    if (!std::isfinite(v))
      throw DecodeError(DecodeError::Kind::non_finite, "non-finite weight value");
    m[i] = static_cast<typename V::Scalar>(v);
  }
}

}  // namespace

template <class Scalar>
void save_weights(const DescriptorNetT<Scalar>& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write weights file: " + path.string());
  out.write("VDSC", 4);
  write_u32(out, 1u);
  write_u32(out, 8u);
  write_tensor(out, net.w1, false);
  write_tensor(out, net.b1, true);
  write_tensor(out, net.w2, false);
  write_tensor(out, net.b2, true);
  write_tensor(out, net.w3, false);
  write_tensor(out, net.b3, true);
  write_tensor(out, net.w4, false);
  write_tensor(out, net.b4, true);
  if (!out) throw IoError("short write to weights file: " + path.string());
}

template <class Scalar>
DescriptorNetT<Scalar> load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open weights file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "VDSC", 4) != 0)
    throw DecodeError(DecodeError::Kind::bad_magic, "bad magic bytes, expected VDSC");
  if (read_u32_checked(in) != 1u)
    throw DecodeError(DecodeError::Kind::bad_version, "unsupported VDSC version");
  if (read_u32_checked(in) != 8u)
    throw DecodeError(DecodeError::Kind::bad_header, "expected 8 tensors");

  DescriptorNetT<Scalar> net;
  read_matrix(in, net.w1);
  read_vector(in, net.b1);
  read_matrix(in, net.w2);
  read_vector(in, net.b2);
  read_matrix(in, net.w3);
  read_vector(in, net.b3);
  read_matrix(in, net.w4);
  read_vector(in, net.b4);

  NetShape s;
  if (net.w1.rows() != 27)
    throw DecodeError(DecodeError::Kind::bad_header, "conv1 weights must have 27 rows");
  s.conv1_filters = static_cast<int>(net.w1.cols());
  s.conv2_filters = static_cast<int>(net.w2.cols());
  s.hidden = static_cast<int>(net.w3.cols());
  s.out = static_cast<int>(net.w4.cols());
  const int positions = static_cast<int>(net.w3.rows()) / s.conv2_filters;
  int edge = 1;
  while (edge * edge * edge < positions) ++edge;
  s.in_edge = edge + 4;
  s.validate();
  if (net.w2.rows() != 27 * s.conv1_filters || net.w3.rows() != s.flat_dim() ||
      net.w4.rows() != s.hidden || net.b1.size() != s.conv1_filters ||
      net.b2.size() != s.conv2_filters || net.b3.size() != s.hidden ||
      net.b4.size() != s.out)
    throw DecodeError(DecodeError::Kind::bad_header, "inconsistent tensor shapes");
  net.shape = s;
  return net;
}

// explicit instantiations
template struct DescriptorNetT<float>;
template struct DescriptorNetT<double>;

#define VOLREG_INSTANTIATE(S)                                                          \
  template void net_forward_batch<S>(const DescriptorNetT<S>&,                         \
                                     const typename NetWorkspace<S>::MatR&,            \
                                     NetWorkspace<S>&);                                \
  template Descriptor net_forward<S>(const DescriptorNetT<S>&, const Neighborhood&);   \
  template double net_batch_loss<S>(const DescriptorNetT<S>&, const TripletMatrix<S>&, \
                                    double, NetWorkspace<S>&);                         \
  template double net_backward<S>(const DescriptorNetT<S>&, const TripletMatrix<S>&,   \
                                  double, NetWorkspace<S>&, NetGradientsT<S>&);        \
  template void adam_step<S>(DescriptorNetT<S>&, const NetGradientsT<S>&,              \
                             AdamState<S>&, const AdamConfig&);                        \
  template TrainOutcome<S> train_descriptor_net<S>(const TrainingSet&, const NetShape&, \
                                                   const TrainConfig&);                \
  template Eigen::VectorXd net_to_flat<S>(const DescriptorNetT<S>&);                   \
  template void net_from_flat<S>(DescriptorNetT<S>&, const Eigen::VectorXd&);          \
  template Eigen::VectorXd gradients_to_flat<S>(const NetGradientsT<S>&);              \
  template void save_weights<S>(const DescriptorNetT<S>&, const std::filesystem::path&); \
  template DescriptorNetT<S> load_weights<S>(const std::filesystem::path&);

VOLREG_INSTANTIATE(float)
VOLREG_INSTANTIATE(double)
#undef VOLREG_INSTANTIATE

}  // namespace volreg
