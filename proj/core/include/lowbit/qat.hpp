#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "lowbit/formats.hpp"
#include "lowbit/kmeans.hpp"
#include "lowbit/tensor.hpp"

namespace lowbit {

/// Affine layer y = x W^T + b whose weight W may be fake-quantized. Master
/// weights stay in double precision and are never overwritten by their
/// quantized image; when active, the forward pass uses
/// dequantize(quantize(float(W))) while gradients flow straight through to W.
struct FakeQuantLayer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> master;  // [out, in]
  std::vector<double> bias;    // [out]
  QuantFormat format = QuantFormat::uniform(8);
  bool active = false;

  /// Weights seen by the forward pass.
  std::vector<double> forward_weights() const;
  Tensor master_tensor() const;
};

/// x is [batch, in]; returns [batch, out].
std::vector<double> fake_quant_forward(const FakeQuantLayer& layer, std::span<const double> x,
                                       std::size_t batch);
Tensor fake_quant_forward(const FakeQuantLayer& layer, const Tensor& x);

struct LayerGradients {
  std::vector<double> weight;  // [out, in]
  std::vector<double> bias;    // [out]
  std::vector<double> input;   // [batch, in], computed with the forward weights
};

/// Straight-through backward pass: the quantizer's Jacobian is taken as the
/// identity, so dL/dW equals the gradient of the same layer evaluated at the
/// fixed forward weights.
LayerGradients fake_quant_backward(const FakeQuantLayer& layer, std::span<const double> x,
                                   std::span<const double> upstream, std::size_t batch);

struct ToyModelConfig {
  std::size_t input = 16;
  std::size_t hidden = 64;
  std::size_t output = 4;
};

/// Two fake-quantizable affine layers with tanh in between.
struct ToyModel {
  FakeQuantLayer layer1;
  FakeQuantLayer layer2;

  static ToyModel random(const ToyModelConfig& cfg, std::uint64_t seed);
  ToyModelConfig config() const { return {layer1.in, layer1.out, layer2.out}; }
  void set_format(const QuantFormat& format);
  void set_active(bool active);

  std::vector<double> predict(std::span<const double> x, std::size_t batch) const;
};

struct ModelGradients {
  double loss = 0.0;
  std::vector<double> w1, b1, w2, b2;
};

/// Mean squared error over batch and outputs, with hand-derived gradients.
ModelGradients loss_and_gradients(const ToyModel& model, std::span<const double> x,
                                  std::span<const double> target, std::size_t batch);
double mse_loss(const ToyModel& model, std::span<const double> x, std::span<const double> target,
                std::size_t batch);

struct QatSchedule {
  std::size_t warmup_steps = 100;
  bool freeze_centroids = true;
  /// Periodic centroid refit interval once QAT is active; 0 disables refits.
  std::size_t refit_every = 0;
};

struct TrainConfig {
  std::size_t steps = 2000;
  double lr = 0.05;
  std::size_t batch = 64;
  std::uint64_t seed = 42;  // teacher, data stream and evaluation set
  double noise_std = 0.1;
  std::size_t eval_size = 1024;
  KMeansConfig kmeans{};
};

enum class TrainPhase : std::uint8_t { Warmup, Qat };

struct TrainResult {
  std::vector<double> losses;
  std::vector<TrainPhase> phases;
  double final_eval_loss = 0.0;
  ToyModel model;
  /// Layer formats in use at the end (fitted centroids for k-means).
  std::vector<QuantFormat> formats;
};

/// Teacher-student regression with plain SGD. Steps [0, warmup) train in full
/// precision; at step `warmup` k-means centroids are fitted to the current
/// weights of each layer and frozen, quantization is switched on and stays on.
/// `format == nullopt` trains the full-precision arm. Throws TrainingDiverged
/// on a non-finite loss.
TrainResult train_toy(ToyModel model, const QatSchedule& schedule,
                      const std::optional<QuantFormat>& format, const TrainConfig& cfg);

struct AblationResult {
  TrainResult absmax;
  TrainResult absmean;
};

/// Two QAT runs of the same model and data differing only in scale rule.
AblationResult ablate_scaling(const ToyModel& model, const QatSchedule& schedule,
                              const QuantFormat& format, const TrainConfig& cfg);

std::string trajectory_csv(const TrainResult& r);

}  // namespace lowbit
