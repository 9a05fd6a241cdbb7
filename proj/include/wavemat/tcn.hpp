#pragma once

// Temporal convolutional network classifier: stacked residual blocks of
// causal dilated 1-D convolutions, a pooled linear read-out and softmax.
// Forward and backward passes are written out by hand.

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wavemat/core.hpp"

namespace wavemat {

/// How the final block's [channels x time] output is reduced for the head.
enum class Readout {
  Mean,  // global average over time
  Last,  // final time index only
};

/// How the channel list is realised. Blocks: each entry is a residual block
/// of two convolutions. Layers: each entry is one convolution, no residual.
enum class TcnLayout { Blocks, Layers };

Readout parse_readout(std::string_view text);
std::string_view to_string(Readout readout);
TcnLayout parse_layout(std::string_view text);
std::string_view to_string(TcnLayout layout);

struct TcnParams {
  int kernel_size = 1;
  double dropout = 0.05;
  std::vector<int> channel_sizes = {32, 32, 32, 64, 64, 64, 128, 128};
  int batch_size = 32;
  int iterations = 4000;
  double learning_rate = 2e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Readout readout = Readout::Mean;
  TcnLayout layout = TcnLayout::Blocks;
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const TcnParams&, const TcnParams&) = default;
};

/// Causal convolution: y[:, t] = b + sum_k W_k x[:, t - dilation * (K - 1 - k)],
/// with x zero before the start of each sequence.
struct Conv1d {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_size = 1;
  int dilation = 1;
  std::vector<Eigen::MatrixXd> taps;  // K matrices, each [out x in]
  Eigen::VectorXd bias;

  friend bool operator==(const Conv1d& a, const Conv1d& b);
};

/// Blocks layout: relu(drop(relu(conv2(drop(relu(conv1 x))))) + residual(x)).
/// Layers layout: drop(relu(conv1 x)), with conv2 and the residual absent.
struct TemporalBlock {
  Conv1d conv1;
  std::optional<Conv1d> conv2;
  /// 1x1 projection on the residual path; present iff in != out channels.
  std::optional<Conv1d> downsample;

  bool has_residual() const noexcept { return conv2.has_value(); }
  friend bool operator==(const TemporalBlock&, const TemporalBlock&) = default;
};

struct TcnModel {
  TcnParams params;
  int n_classes = 0;
  /// Inputs are divided by this before the first block (the sensor A_sat).
  double input_scale = 1.0;
  std::vector<TemporalBlock> blocks;
  Eigen::MatrixXd head_weight;  // [n_classes x last channel count]
  Eigen::VectorXd head_bias;
  std::vector<MaterialClass> classes;

  /// Every parameter tensor in a fixed order (blocks in order, then head).
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t parameter_count() const;

  friend bool operator==(const TcnModel& a, const TcnModel& b);
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
TcnModel init_tcn(const TcnParams& params, int n_classes, std::uint64_t seed);

/// A zero-filled model with the same shapes, used as a gradient container.
TcnModel zeros_like(const TcnModel& model);

using Sequence = std::vector<double>;

/// Class probabilities [n_classes x batch]. Dropout is applied only when
/// `train_mode` is set; masks are a pure function of `dropout_seed`.
Eigen::MatrixXd forward(const TcnModel& model, std::span<const Sequence> batch, bool train_mode,
                        std::uint64_t dropout_seed = 0);

struct LossAndGrads {
  double loss = 0.0;
  TcnModel grads;
};

/// Mean cross-entropy over the batch and its exact gradient, in train mode.
LossAndGrads loss_and_grads(const TcnModel& model, std::span<const Sequence> batch, std::span<const ClassId> labels,
                            std::uint64_t dropout_seed);
/// Mean cross-entropy without gradients.
double batch_loss(const TcnModel& model, std::span<const Sequence> batch, std::span<const ClassId> labels,
                  bool train_mode, std::uint64_t dropout_seed);

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;

  explicit AdamState(const TcnModel& model);
  void apply(TcnModel& model, const TcnModel& grads);
};

/// Per-iteration callback: (iteration starting at 1, batch loss).
using LossLogger = std::function<void(int, double)>;

Sequence to_sequence(const Waveform& waveform);

/// Adam on shuffled mini-batches. Each epoch is a fresh seeded permutation cut
/// into batches of batch_size; the final batch of an epoch may be smaller.
TcnModel train_tcn(const Dataset& train, const TcnParams& params, const LossLogger& log = {});

ClassId predict_tcn_id(const TcnModel& model, const Sequence& x);
MaterialClass predict_tcn(const TcnModel& model, const Waveform& waveform);
/// Eval-mode predictions for many waveforms, batched internally.
std::vector<ClassId> predict_tcn_batch(const TcnModel& model, std::span<const Sequence> xs);

// Versioned text checkpoint; see README.
void write_tcn(const TcnModel& model, std::ostream& out);
TcnModel read_tcn(std::istream& in);
void save_tcn(const TcnModel& model, const std::filesystem::path& path);
TcnModel load_tcn(const std::filesystem::path& path);

}  // namespace wavemat
