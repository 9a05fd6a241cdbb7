#include "wavemat/tcn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "wavemat/error.hpp"
#include "wavemat/rng.hpp"

namespace wavemat {

namespace {

using Mat = Eigen::MatrixXd;

constexpr std::string_view kTcnMagic = "wavemat-tcn";
constexpr int kTcnVersion = 1;
constexpr std::size_t kPredictChunk = 64;

bool same(const Mat& a, const Mat& b) { return a.rows() == b.rows() && a.cols() == b.cols() && a == b; }
bool same(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return a.size() == b.size() && a == b; }

// Activations of a batch are [channels x (batch * length)]: sequence b owns
// columns [b * length, (b + 1) * length).

int tap_shift(const Conv1d& c, int k) { return c.dilation * (c.kernel_size - 1 - k); }

// y = conv(x). Taps with a non-zero shift only touch the columns they reach.
void conv_forward(const Conv1d& c, const Mat& x, int length, Mat& y) {
  y.resize(c.out_channels, x.cols());
  y.noalias() = c.taps.back() * x;
  const Eigen::Index batch = x.cols() / length;
  for (int k = 0; k + 1 < c.kernel_size; ++k) {
    const int s = tap_shift(c, k);
    if (s >= length) continue;
    const Mat& w = c.taps[static_cast<std::size_t>(k)];
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Eigen::Index base = b * length;
      y.middleCols(base + s, length - s).noalias() += w * x.middleCols(base, length - s);
    }
  }
  y.colwise() += c.bias;
}

// Accumulates parameter gradients into `grad`. When `dx` is given the input
// gradient is written to it (`overwrite`) or added to it.
void conv_backward(const Conv1d& c, const Mat& x, const Mat& dy, int length, Conv1d& grad, Mat* dx,
                   bool overwrite) {
  grad.bias += dy.rowwise().sum();
  const Eigen::Index batch = x.cols() / length;
  if (dx != nullptr && overwrite) {
    if (c.kernel_size == 1) {
      dx->resize(c.in_channels, dy.cols());
      dx->noalias() = c.taps.front().transpose() * dy;
      grad.taps.front().noalias() += dy * x.transpose();
      return;
    }
    dx->setZero(c.in_channels, dy.cols());
  }
  for (int k = 0; k < c.kernel_size; ++k) {
    const int s = tap_shift(c, k);
    const auto ku = static_cast<std::size_t>(k);
    if (s == 0) {
      grad.taps[ku].noalias() += dy * x.transpose();
      if (dx != nullptr) dx->noalias() += c.taps[ku].transpose() * dy;
      continue;
    }
    if (s >= length) continue;
    for (Eigen::Index b = 0; b < batch; ++b) {
      const Eigen::Index base = b * length;
      const auto dy_part = dy.middleCols(base + s, length - s);
      grad.taps[ku].noalias() += dy_part * x.middleCols(base, length - s).transpose();
      if (dx != nullptr) dx->middleCols(base, length - s).noalias() += c.taps[ku].transpose() * dy_part;
    }
  }
}

// d = dropout(relu(a)) and gate = dd/da, which is 0, 1 or 1/(1-p). Dropout
// (when `seed` is set) keeps an entry iff its 32-bit draw is >= p * 2^32;
// each 64-bit word supplies two draws.
void relu_dropout(const Mat& a, double p, const std::optional<std::uint64_t>& seed, Mat& gate, Mat& d) {
  gate.resize(a.rows(), a.cols());
  d.resize(a.rows(), a.cols());
  const double* src = a.data();
  double* g = gate.data();
  double* out = d.data();
  const Eigen::Index n = a.size();
  if (!seed) {
    for (Eigen::Index i = 0; i < n; ++i) {
      g[i] = src[i] > 0.0 ? 1.0 : 0.0;
      out[i] = src[i] > 0.0 ? src[i] : 0.0;
    }
    return;
  }
  const double scale = 1.0 / (1.0 - p);
  const auto threshold = static_cast<std::uint64_t>(p * 4294967296.0);
  Rng rng(*seed);
  std::uint64_t word = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::uint64_t draw;
    if (i % 2 == 0) {
      word = rng.next();
      draw = word & 0xffffffffULL;
    } else {
      draw = word >> 32;
    }
    const bool on = src[i] > 0.0 && draw >= threshold;
    g[i] = on ? scale : 0.0;
    out[i] = on ? src[i] * scale : 0.0;
  }
}

struct BlockCache {
  Mat gate1;  // d(d1)/d(conv1 output)
  Mat d1;     // conv2 input
  Mat gate2;
  Mat out;    // block output, input of the next block
};

// Buffers reused across batches so that training does not allocate per step.
struct Workspace {
  int length = 0;
  Mat input;  // [1 x batch * length]
  std::vector<BlockCache> blocks;
  Mat a, d2, pooled, logits;
  Mat dout, dx, dpre, da, dd1;
};

void load_input(const TcnModel& model, std::span<const Sequence> batch, Workspace& ws) {
  if (batch.empty()) throw UsageError("forward needs a non-empty batch");
  const int length = static_cast<int>(batch.front().size());
  if (length == 0) throw UsageError("sequences must not be empty");
  ws.length = length;
  ws.input.resize(1, static_cast<Eigen::Index>(batch.size()) * length);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (static_cast<int>(batch[b].size()) != length) throw UsageError("all sequences in a batch must share a length");
    for (int t = 0; t < length; ++t) {
      ws.input(0, static_cast<Eigen::Index>(b) * length + t) = batch[b][static_cast<std::size_t>(t)] / model.input_scale;
    }
  }
}

// Fills ws.logits [n_classes x batch] and the per-block caches.
void run_forward(const TcnModel& model, std::span<const Sequence> batch, bool train_mode, std::uint64_t dropout_seed,
                 Workspace& ws) {
  load_input(model, batch, ws);
  const int length = ws.length;
  const auto n_batch = static_cast<Eigen::Index>(batch.size());
  const double p = model.params.dropout;
  const bool drop = train_mode && p > 0.0;
  const auto seed_for = [&](std::size_t i, int which) -> std::optional<std::uint64_t> {
    if (!drop) return std::nullopt;
    return hash_seed(dropout_seed, i, which);
  };

  ws.blocks.resize(model.blocks.size());
  for (std::size_t i = 0; i < model.blocks.size(); ++i) {
    const TemporalBlock& block = model.blocks[i];
    const Mat& in = i == 0 ? ws.input : ws.blocks[i - 1].out;
    BlockCache& c = ws.blocks[i];
    conv_forward(block.conv1, in, length, ws.a);
    relu_dropout(ws.a, p, seed_for(i, 1), c.gate1, c.d1);
    if (!block.has_residual()) {
      c.out = c.d1;
      continue;
    }
    conv_forward(*block.conv2, c.d1, length, ws.a);
    relu_dropout(ws.a, p, seed_for(i, 2), c.gate2, ws.d2);
    if (block.downsample) {
      conv_forward(*block.downsample, in, length, c.out);
      c.out += ws.d2;
    } else {
      c.out = in + ws.d2;
    }
    c.out = c.out.cwiseMax(0.0);
  }

  const Mat& last = ws.blocks.back().out;
  ws.pooled.resize(last.rows(), n_batch);
  for (Eigen::Index b = 0; b < n_batch; ++b) {
    if (model.params.readout == Readout::Mean) {
      ws.pooled.col(b) = last.middleCols(b * length, length).rowwise().mean();
    } else {
      ws.pooled.col(b) = last.col(b * length + length - 1);
    }
  }
  ws.logits.resize(model.n_classes, n_batch);
  ws.logits.noalias() = model.head_weight * ws.pooled;
  ws.logits.colwise() += model.head_bias;
}

// Column-wise log-softmax.
Mat log_softmax(const Mat& logits) {
  Mat out(logits.rows(), logits.cols());
  for (Eigen::Index b = 0; b < logits.cols(); ++b) {
    const double m = logits.col(b).maxCoeff();
    const double lse = m + std::log((logits.col(b).array() - m).exp().sum());
    out.col(b) = logits.col(b).array() - lse;
  }
  return out;
}

void check_labels(const TcnModel& model, std::span<const Sequence> batch, std::span<const ClassId> labels) {
  if (labels.size() != batch.size()) throw UsageError("labels and batch differ in length");
  for (ClassId y : labels) {
    if (y < 0 || y >= model.n_classes) throw DataError("label " + std::to_string(y) + " outside the model's classes");
  }
}

double mean_nll(const Mat& log_probs, std::span<const ClassId> labels) {
  double loss = 0.0;
  for (std::size_t b = 0; b < labels.size(); ++b) loss -= log_probs(labels[b], static_cast<Eigen::Index>(b));
  return loss / static_cast<double>(labels.size());
}

Conv1d make_conv(int in, int out, int kernel, int dilation) {
  Conv1d c;
  c.in_channels = in;
  c.out_channels = out;
  c.kernel_size = kernel;
  c.dilation = dilation;
  c.taps.assign(static_cast<std::size_t>(kernel), Mat::Zero(out, in));
  c.bias = Eigen::VectorXd::Zero(out);
  return c;
}

void fill_uniform(Conv1d& c, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(c.in_channels * c.kernel_size));
  for (auto& tap : c.taps) {
    for (Eigen::Index i = 0; i < tap.size(); ++i) tap.data()[i] = rng.uniform(-bound, bound);
  }
  for (Eigen::Index i = 0; i < c.bias.size(); ++i) c.bias[i] = rng.uniform(-bound, bound);
}

template <typename Model, typename SpanT>
std::vector<SpanT> collect_tensors(Model& model) {
  std::vector<SpanT> out;
  const auto add_conv = [&](auto& c) {
    for (auto& tap : c.taps) out.emplace_back(tap.data(), static_cast<std::size_t>(tap.size()));
    out.emplace_back(c.bias.data(), static_cast<std::size_t>(c.bias.size()));
  };
  for (auto& block : model.blocks) {
    add_conv(block.conv1);
    if (block.conv2) add_conv(*block.conv2);
    if (block.downsample) add_conv(*block.downsample);
  }
  out.emplace_back(model.head_weight.data(), static_cast<std::size_t>(model.head_weight.size()));
  out.emplace_back(model.head_bias.data(), static_cast<std::size_t>(model.head_bias.size()));
  return out;
}

template <typename T>
T read_value(std::istream& in, std::string_view what) {
  T v{};
  if (!(in >> v)) throw DataError("tcn checkpoint: cannot read " + std::string(what));
  return v;
}

void expect_token(std::istream& in, std::string_view token) {
  std::string got;
  if (!(in >> got) || got != token) {
    throw DataError("tcn checkpoint: expected '" + std::string(token) + "', got '" + got + "'");
  }
}

}  // namespace

// --- enums and params ---------------------------------------------------------------

Readout parse_readout(std::string_view text) {
  if (text == "mean") return Readout::Mean;
  if (text == "last") return Readout::Last;
  throw UsageError("unknown readout '" + std::string(text) + "' (expected mean, last)");
}

std::string_view to_string(Readout readout) { return readout == Readout::Mean ? "mean" : "last"; }

TcnLayout parse_layout(std::string_view text) {
  if (text == "blocks") return TcnLayout::Blocks;
  if (text == "layers") return TcnLayout::Layers;
  throw UsageError("unknown layout '" + std::string(text) + "' (expected blocks, layers)");
}

std::string_view to_string(TcnLayout layout) { return layout == TcnLayout::Blocks ? "blocks" : "layers"; }

void TcnParams::validate() const {
  if (kernel_size < 1) throw UsageError("kernel_size must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("dropout must lie in [0, 1)");
  if (channel_sizes.empty()) throw UsageError("channel_sizes must not be empty");
  for (int c : channel_sizes) {
    if (c < 1) throw UsageError("channel sizes must be positive");
  }
  if (batch_size < 1) throw UsageError("batch_size must be >= 1");
  if (iterations < 0) throw UsageError("iterations must be >= 0");
  if (!(learning_rate > 0.0)) throw UsageError("learning_rate must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) throw UsageError("adam_beta1 must lie in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) throw UsageError("adam_beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw UsageError("adam_eps must be > 0");
}

bool operator==(const Conv1d& a, const Conv1d& b) {
  if (a.in_channels != b.in_channels || a.out_channels != b.out_channels || a.kernel_size != b.kernel_size ||
      a.dilation != b.dilation || a.taps.size() != b.taps.size() || !same(a.bias, b.bias)) {
    return false;
  }
  for (std::size_t k = 0; k < a.taps.size(); ++k) {
    if (!same(a.taps[k], b.taps[k])) return false;
  }
  return true;
}

bool operator==(const TcnModel& a, const TcnModel& b) {
  return a.params == b.params && a.n_classes == b.n_classes && a.input_scale == b.input_scale &&
         a.blocks == b.blocks && same(a.head_weight, b.head_weight) && same(a.head_bias, b.head_bias) &&
         a.classes == b.classes;
}

std::vector<std::span<double>> TcnModel::tensors() { return collect_tensors<TcnModel, std::span<double>>(*this); }

std::vector<std::span<const double>> TcnModel::tensors() const {
  return collect_tensors<const TcnModel, std::span<const double>>(*this);
}

std::size_t TcnModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

// --- construction ----------------------------------------------------------------------

TcnModel init_tcn(const TcnParams& params, int n_classes, std::uint64_t seed) {
  params.validate();
  if (n_classes < 2) throw UsageError("a classifier needs at least two classes");
  TcnModel m;
  m.params = params;
  m.n_classes = n_classes;
  Rng rng(seed);
  int in = 1;
  for (std::size_t i = 0; i < params.channel_sizes.size(); ++i) {
    const int out = params.channel_sizes[i];
    const int dilation = 1 << std::min<std::size_t>(i, 20);
    TemporalBlock block;
    block.conv1 = make_conv(in, out, params.kernel_size, dilation);
    fill_uniform(block.conv1, rng);
    if (params.layout == TcnLayout::Blocks) {
      block.conv2 = make_conv(out, out, params.kernel_size, dilation);
      fill_uniform(*block.conv2, rng);
      if (in != out) {
        block.downsample = make_conv(in, out, 1, 1);
        fill_uniform(*block.downsample, rng);
      }
    }
    m.blocks.push_back(std::move(block));
    in = out;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  m.head_weight.resize(n_classes, in);
  m.head_bias.resize(n_classes);
  for (Eigen::Index i = 0; i < m.head_weight.size(); ++i) m.head_weight.data()[i] = rng.uniform(-bound, bound);
  for (Eigen::Index i = 0; i < m.head_bias.size(); ++i) m.head_bias[i] = rng.uniform(-bound, bound);
  for (int k = 0; k < n_classes; ++k) m.classes.push_back({k, "class_" + std::to_string(k)});
  return m;
}

TcnModel zeros_like(const TcnModel& model) {
  TcnModel z = model;
  for (auto t : z.tensors()) std::fill(t.begin(), t.end(), 0.0);
  return z;
}

// --- forward / backward ------------------------------------------------------------------

namespace {

void zero_grads(TcnModel& grads) {
  for (auto t : grads.tensors()) std::fill(t.begin(), t.end(), 0.0);
}

// Forward in train mode, then the exact gradient of the mean cross-entropy
// written into `g` (which must have the model's shapes).
double loss_and_grads_into(const TcnModel& model, std::span<const Sequence> batch, std::span<const ClassId> labels,
                           std::uint64_t dropout_seed, Workspace& ws, TcnModel& g) {
  check_labels(model, batch, labels);
  run_forward(model, batch, true, dropout_seed, ws);
  const Mat log_probs = log_softmax(ws.logits);
  const double loss = mean_nll(log_probs, labels);
  zero_grads(g);

  const auto n_batch = static_cast<Eigen::Index>(batch.size());
  const int length = ws.length;
  Mat dlogits = log_probs.array().exp();
  for (Eigen::Index b = 0; b < n_batch; ++b) dlogits(labels[static_cast<std::size_t>(b)], b) -= 1.0;
  dlogits /= static_cast<double>(n_batch);

  g.head_weight.noalias() = dlogits * ws.pooled.transpose();
  g.head_bias = dlogits.rowwise().sum();
  const Mat dpooled = model.head_weight.transpose() * dlogits;

  const Mat& last = ws.blocks.back().out;
  if (model.params.readout == Readout::Mean) {
    ws.dout.resize(last.rows(), last.cols());
    for (Eigen::Index b = 0; b < n_batch; ++b) {
      ws.dout.middleCols(b * length, length).colwise() = dpooled.col(b) / static_cast<double>(length);
    }
  } else {
    ws.dout.setZero(last.rows(), last.cols());
    for (Eigen::Index b = 0; b < n_batch; ++b) ws.dout.col(b * length + length - 1) = dpooled.col(b);
  }

  for (std::size_t i = model.blocks.size(); i-- > 0;) {
    const TemporalBlock& block = model.blocks[i];
    TemporalBlock& gb = g.blocks[i];
    const BlockCache& c = ws.blocks[i];
    const Mat& in = i == 0 ? ws.input : ws.blocks[i - 1].out;
    Mat* dx = i > 0 ? &ws.dx : nullptr;

    if (block.has_residual()) {
      ws.dpre.resize(c.out.rows(), c.out.cols());
      ws.dpre.array() = (c.out.array() > 0.0).select(ws.dout.array(), 0.0);
      if (block.downsample) {
        conv_backward(*block.downsample, in, ws.dpre, length, *gb.downsample, dx, true);
      } else if (dx != nullptr) {
        *dx = ws.dpre;
      }
      ws.da.resize(c.gate2.rows(), c.gate2.cols());
      ws.da.array() = ws.dpre.array() * c.gate2.array();
      conv_backward(*block.conv2, c.d1, ws.da, length, *gb.conv2, &ws.dd1, true);
      ws.da.resize(c.gate1.rows(), c.gate1.cols());
      ws.da.array() = ws.dd1.array() * c.gate1.array();
      conv_backward(block.conv1, in, ws.da, length, gb.conv1, dx, false);
    } else {
      ws.da.resize(c.gate1.rows(), c.gate1.cols());
      ws.da.array() = ws.dout.array() * c.gate1.array();
      conv_backward(block.conv1, in, ws.da, length, gb.conv1, dx, true);
    }
    if (dx != nullptr) std::swap(ws.dout, ws.dx);
  }
  return loss;
}

}  // namespace

Eigen::MatrixXd forward(const TcnModel& model, std::span<const Sequence> batch, bool train_mode,
                        std::uint64_t dropout_seed) {
  Workspace ws;
  run_forward(model, batch, train_mode, dropout_seed, ws);
  return log_softmax(ws.logits).array().exp();
}

double batch_loss(const TcnModel& model, std::span<const Sequence> batch, std::span<const ClassId> labels,
                  bool train_mode, std::uint64_t dropout_seed) {
  check_labels(model, batch, labels);
  Workspace ws;
  run_forward(model, batch, train_mode, dropout_seed, ws);
  return mean_nll(log_softmax(ws.logits), labels);
}

LossAndGrads loss_and_grads(const TcnModel& model, std::span<const Sequence> batch, std::span<const ClassId> labels,
                            std::uint64_t dropout_seed) {
  Workspace ws;
  LossAndGrads out;
  out.grads = zeros_like(model);
  out.loss = loss_and_grads_into(model, batch, labels, dropout_seed, ws, out.grads);
  return out;
}

// --- optimisation ------------------------------------------------------------------------------

AdamState::AdamState(const TcnModel& model) {
  for (const auto& t : model.tensors()) {
    first_moment.emplace_back(t.size(), 0.0);
    second_moment.emplace_back(t.size(), 0.0);
  }
}

void AdamState::apply(TcnModel& model, const TcnModel& grads) {
  const auto& p = model.params;
  ++step;
  const double correction1 = 1.0 - std::pow(p.adam_beta1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(p.adam_beta2, static_cast<double>(step));
  auto params = model.tensors();
  const auto gs = grads.tensors();
  if (params.size() != first_moment.size() || gs.size() != params.size()) {
    throw UsageError("optimizer state does not match the model");
  }
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& m = first_moment[t];
    auto& v = second_moment[t];
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double gi = gs[t][i];
      m[i] = p.adam_beta1 * m[i] + (1.0 - p.adam_beta1) * gi;
      v[i] = p.adam_beta2 * v[i] + (1.0 - p.adam_beta2) * gi * gi;
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      params[t][i] -= p.learning_rate * m_hat / (std::sqrt(v_hat) + p.adam_eps);
    }
  }
}

Sequence to_sequence(const Waveform& waveform) { return {waveform.samples().begin(), waveform.samples().end()}; }

TcnModel train_tcn(const Dataset& train, const TcnParams& params, const LossLogger& log) {
  params.validate();
  if (train.empty()) throw DataError("cannot train a TCN on an empty dataset");
  if (train.distinct_label_count() < 2) throw DataError("TCN training needs at least two classes");

  TcnModel model = init_tcn(params, static_cast<int>(train.class_count()), hash_seed(params.seed, 1));
  model.input_scale = train.amplitude_ceiling();
  model.classes = train.classes();

  std::vector<Sequence> xs;
  std::vector<ClassId> ys;
  for (const auto& s : train.samples()) {
    xs.push_back(to_sequence(s.waveform));
    ys.push_back(s.label);
  }
  const std::size_t n = xs.size();
  const auto batch_size = static_cast<std::size_t>(params.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng shuffler(hash_seed(params.seed, 2));
  std::size_t cursor = n;

  AdamState adam(model);
  Workspace ws;
  TcnModel grads = zeros_like(model);
  std::vector<Sequence> batch;
  std::vector<ClassId> labels;
  for (int it = 1; it <= params.iterations; ++it) {
    if (cursor >= n) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffler.below(i)]);
      cursor = 0;
    }
    const std::size_t end = std::min(n, cursor + batch_size);
    batch.clear();
    labels.clear();
    for (std::size_t i = cursor; i < end; ++i) {
      batch.push_back(xs[order[i]]);
      labels.push_back(ys[order[i]]);
    }
    cursor = end;
    const double loss =
        loss_and_grads_into(model, batch, labels, hash_seed(params.seed, 3, static_cast<std::uint64_t>(it)), ws, grads);
    adam.apply(model, grads);
    if (log) log(it, loss);
  }
  return model;
}

std::vector<ClassId> predict_tcn_batch(const TcnModel& model, std::span<const Sequence> xs) {
  std::vector<ClassId> out;
  out.reserve(xs.size());
  Workspace ws;
  for (std::size_t start = 0; start < xs.size(); start += kPredictChunk) {
    const auto chunk = xs.subspan(start, std::min(kPredictChunk, xs.size() - start));
    run_forward(model, chunk, false, 0, ws);
    const Mat& logits = ws.logits;
    for (Eigen::Index b = 0; b < logits.cols(); ++b) {
      Eigen::Index best = 0;
      // maxCoeff picks the first maximum, i.e. the lowest class id on ties.
      logits.col(b).maxCoeff(&best);
      out.push_back(static_cast<ClassId>(best));
    }
  }
  return out;
}

ClassId predict_tcn_id(const TcnModel& model, const Sequence& x) {
  return predict_tcn_batch(model, std::span<const Sequence>(&x, 1)).front();
}

MaterialClass predict_tcn(const TcnModel& model, const Waveform& waveform) {
  return model.classes[static_cast<std::size_t>(predict_tcn_id(model, to_sequence(waveform)))];
}

// --- checkpoints -------------------------------------------------------------------------------

void write_tcn(const TcnModel& model, std::ostream& out) {
  const auto& p = model.params;
  out << kTcnMagic << ' ' << kTcnVersion << '\n';
  out << "params " << p.kernel_size << ' ' << format_double(p.dropout) << ' ' << p.batch_size << ' ' << p.iterations
      << ' ' << format_double(p.learning_rate) << ' ' << format_double(p.adam_beta1) << ' '
      << format_double(p.adam_beta2) << ' ' << format_double(p.adam_eps) << ' ' << to_string(p.readout) << ' '
      << to_string(p.layout) << ' ' << p.seed << '\n';
  out << "channels " << p.channel_sizes.size();
  for (int c : p.channel_sizes) out << ' ' << c;
  out << '\n';
  out << "input_scale " << format_double(model.input_scale) << '\n';
  out << "classes " << model.n_classes << '\n';
  for (const auto& c : model.classes) out << "class " << c.id << ' ' << c.name << '\n';
  const auto tensors = model.tensors();
  out << "tensors " << tensors.size() << '\n';
  for (const auto& t : tensors) {
    out << t.size();
    for (double v : t) out << ' ' << format_double(v);
    out << '\n';
  }
  out << "end\n";
}

TcnModel read_tcn(std::istream& in) {
  expect_token(in, kTcnMagic);
  if (read_value<int>(in, "version") != kTcnVersion) throw DataError("tcn checkpoint: unsupported version");
  TcnParams p;
  expect_token(in, "params");
  p.kernel_size = read_value<int>(in, "kernel_size");
  p.dropout = parse_double(read_value<std::string>(in, "dropout"));
  p.batch_size = read_value<int>(in, "batch_size");
  p.iterations = read_value<int>(in, "iterations");
  p.learning_rate = parse_double(read_value<std::string>(in, "learning_rate"));
  p.adam_beta1 = parse_double(read_value<std::string>(in, "adam_beta1"));
  p.adam_beta2 = parse_double(read_value<std::string>(in, "adam_beta2"));
  p.adam_eps = parse_double(read_value<std::string>(in, "adam_eps"));
  p.readout = parse_readout(read_value<std::string>(in, "readout"));
  p.layout = parse_layout(read_value<std::string>(in, "layout"));
  p.seed = read_value<std::uint64_t>(in, "seed");
  expect_token(in, "channels");
  p.channel_sizes.resize(read_value<std::size_t>(in, "channel count"));
  for (auto& c : p.channel_sizes) c = read_value<int>(in, "channel size");
  expect_token(in, "input_scale");
  const double input_scale = parse_double(read_value<std::string>(in, "input_scale"));
  expect_token(in, "classes");
  const int n_classes = read_value<int>(in, "class count");

  TcnModel model;
  try {
    model = init_tcn(p, n_classes, 0);
  } catch (const UsageError& e) {
    throw DataError(std::string("tcn checkpoint: ") + e.what());
  }
  model.input_scale = input_scale;
  model.classes.clear();
  for (int k = 0; k < n_classes; ++k) {
    expect_token(in, "class");
    MaterialClass c;
    c.id = read_value<int>(in, "class id");
    c.name = read_value<std::string>(in, "class name");
    if (c.id != k) throw DataError("tcn checkpoint: class ids must be dense");
    model.classes.push_back(c);
  }
  auto tensors = model.tensors();
  expect_token(in, "tensors");
  if (read_value<std::size_t>(in, "tensor count") != tensors.size()) {
    throw DataError("tcn checkpoint: tensor count does not match the architecture");
  }
  for (auto& t : tensors) {
    if (read_value<std::size_t>(in, "tensor size") != t.size()) {
      throw DataError("tcn checkpoint: tensor size does not match the architecture");
    }
    for (double& v : t) v = parse_double(read_value<std::string>(in, "weight"));
  }
  expect_token(in, "end");
  return model;
}

void save_tcn(const TcnModel& model, const std::filesystem::path& path) {
  std::ostringstream text;
  write_tcn(model, text);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out << text.str();
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

TcnModel load_tcn(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open tcn checkpoint '" + path.string() + "'");
  return read_tcn(in);
}

}  // namespace wavemat
