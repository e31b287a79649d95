#include "lowbit/qat.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "lowbit/errors.hpp"

namespace lowbit {

std::vector<double> FakeQuantLayer::forward_weights() const {
  if (!active) return master;
  const Tensor q = fake_quantize(master_tensor(), format);
  return {q.data.begin(), q.data.end()};
}

Tensor FakeQuantLayer::master_tensor() const {
  Tensor t;
  t.shape = {out, in};
  t.data.assign(master.begin(), master.end());
  return t;
}

namespace {

// y[b, o] = sum_k x[b, k] w[o, k] + bias[o]
std::vector<double> affine(std::span<const double> w, std::span<const double> bias,
                           std::span<const double> x, std::size_t batch, std::size_t in,
                           std::size_t out) {
  std::vector<double> y(batch * out);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      double acc = bias[o];
      for (std::size_t k = 0; k < in; ++k) acc += x[b * in + k] * w[o * in + k];
      y[b * out + o] = acc;
    }
  }
  return y;
}

LayerGradients affine_backward(std::span<const double> w, std::span<const double> x,
                               std::span<const double> upstream, std::size_t batch,
                               std::size_t in, std::size_t out) {
  LayerGradients g;
  g.weight.assign(out * in, 0.0);
  g.bias.assign(out, 0.0);
  g.input.assign(batch * in, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < out; ++o) {
      const double u = upstream[b * out + o];
      g.bias[o] += u;
      for (std::size_t k = 0; k < in; ++k) {
        g.weight[o * in + k] += u * x[b * in + k];
        g.input[b * in + k] += u * w[o * in + k];
      }
    }
  }
  return g;
}

void init_layer(FakeQuantLayer& layer, std::size_t in, std::size_t out, std::mt19937_64& rng) {
  layer.in = in;
  layer.out = out;
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(in)));
  layer.master.resize(in * out);
  for (auto& v : layer.master) v = normal(rng);
  layer.bias.assign(out, 0.0);
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw DataError(std::string(what) + " contains a non-finite value");
  }
}

}  // namespace

std::vector<double> fake_quant_forward(const FakeQuantLayer& layer, std::span<const double> x,
                                       std::size_t batch) {
  if (x.size() != batch * layer.in) throw ShapeError("fake_quant_forward: input shape mismatch");
  const auto w = layer.forward_weights();
  return affine(w, layer.bias, x, batch, layer.in, layer.out);
}

Tensor fake_quant_forward(const FakeQuantLayer& layer, const Tensor& x) {
  if (x.rank() != 2 || x.shape[1] != layer.in) {
    throw ShapeError("fake_quant_forward: expected input [batch, in]");
  }
  const std::vector<double> xd(x.data.begin(), x.data.end());
  const auto batch = static_cast<std::size_t>(x.shape[0]);
  const auto y = fake_quant_forward(layer, xd, batch);
  Tensor t;
  t.shape = {batch, layer.out};
  t.data.assign(y.begin(), y.end());
  return t;
}

LayerGradients fake_quant_backward(const FakeQuantLayer& layer, std::span<const double> x,
                                   std::span<const double> upstream, std::size_t batch) {
  if (x.size() != batch * layer.in || upstream.size() != batch * layer.out) {
    throw ShapeError("fake_quant_backward: shape mismatch");
  }
  const auto w = layer.forward_weights();
  return affine_backward(w, x, upstream, batch, layer.in, layer.out);
}

ToyModel ToyModel::random(const ToyModelConfig& cfg, std::uint64_t seed) {
  if (cfg.input == 0 || cfg.hidden == 0 || cfg.output == 0) {
    throw ConfigError("toy model dimensions must be positive");
  }
  std::mt19937_64 rng(seed);
  ToyModel m;
  init_layer(m.layer1, cfg.input, cfg.hidden, rng);
  init_layer(m.layer2, cfg.hidden, cfg.output, rng);
  return m;
}

void ToyModel::set_format(const QuantFormat& format) {
  layer1.format = format;
  layer2.format = format;
}

void ToyModel::set_active(bool active) {
  layer1.active = active;
  layer2.active = active;
}

std::vector<double> ToyModel::predict(std::span<const double> x, std::size_t batch) const {
  auto h = fake_quant_forward(layer1, x, batch);
  for (auto& v : h) v = std::tanh(v);
  return fake_quant_forward(layer2, h, batch);
}

ModelGradients loss_and_gradients(const ToyModel& model, std::span<const double> x,
                                  std::span<const double> target, std::size_t batch) {
  const auto& l1 = model.layer1;
  const auto& l2 = model.layer2;
  if (x.size() != batch * l1.in || target.size() != batch * l2.out) {
    throw ShapeError("loss_and_gradients: shape mismatch");
  }
  const auto w1 = l1.forward_weights();
  const auto w2 = l2.forward_weights();
  auto h = affine(w1, l1.bias, x, batch, l1.in, l1.out);
  for (auto& v : h) v = std::tanh(v);
  const auto y = affine(w2, l2.bias, h, batch, l2.in, l2.out);

  ModelGradients g;
  const double norm = 1.0 / static_cast<double>(batch * l2.out);
  std::vector<double> dy(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double r = y[i] - target[i];
    g.loss += r * r;
    dy[i] = 2.0 * r * norm;
  }
  g.loss *= norm;

  auto g2 = affine_backward(w2, h, dy, batch, l2.in, l2.out);
  for (std::size_t i = 0; i < h.size(); ++i) g2.input[i] *= 1.0 - h[i] * h[i];
  auto g1 = affine_backward(w1, x, g2.input, batch, l1.in, l1.out);
  g.w1 = std::move(g1.weight);
  g.b1 = std::move(g1.bias);
  g.w2 = std::move(g2.weight);
  g.b2 = std::move(g2.bias);
  return g;
}

double mse_loss(const ToyModel& model, std::span<const double> x, std::span<const double> target,
                std::size_t batch) {
  const auto y = model.predict(x, batch);
  if (y.size() != target.size()) throw ShapeError("mse_loss: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - target[i]) * (y[i] - target[i]);
  return s / static_cast<double>(y.size());
}

namespace {

struct TeacherTask {
  ToyModel teacher;
  double noise_std;
  std::mt19937_64 rng;

  TeacherTask(const ToyModelConfig& dims, const TrainConfig& cfg)
      : teacher(ToyModel::random(dims, cfg.seed ^ 0x9E3779B97F4A7C15ull)),
        noise_std(cfg.noise_std),
        rng(cfg.seed) {
    // A sharper teacher so the tanh layer is exercised beyond its linear range.
    for (auto& v : teacher.layer1.master) v *= 2.0;
  }

  void sample(std::size_t batch, std::vector<double>& x, std::vector<double>& t) {
    const auto dims = teacher.config();
    std::normal_distribution<double> normal(0.0, 1.0);
    x.resize(batch * dims.input);
    for (auto& v : x) v = normal(rng);
    t = teacher.predict(x, batch);
    for (auto& v : t) v += noise_std * normal(rng);
  }
};

void fit_centroids(FakeQuantLayer& layer, const QuantFormat& format, const KMeansConfig& kc) {
  layer.format = format;
  if (format.kind == FormatKind::KMeans) {
    layer.format = fit_format_centroids(layer.master_tensor(), format, kc);
  }
}

void sgd(std::vector<double>& p, const std::vector<double>& g, double lr) {
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

}  // namespace

TrainResult train_toy(ToyModel model, const QatSchedule& schedule,
                      const std::optional<QuantFormat>& format, const TrainConfig& cfg) {
  if (format && cfg.steps <= schedule.warmup_steps) {
    throw ConfigError("QAT needs more steps than warmup steps");
  }
  if (cfg.batch == 0 || cfg.eval_size == 0) throw ConfigError("batch sizes must be positive");
  check_finite(model.layer1.master, "layer1 weights");
  check_finite(model.layer2.master, "layer2 weights");

  TeacherTask task(model.config(), cfg);
  std::vector<double> eval_x, eval_t, x, t;
  task.sample(cfg.eval_size, eval_x, eval_t);

  model.set_active(false);
  TrainResult r;
  r.losses.reserve(cfg.steps);
  r.phases.reserve(cfg.steps);
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const bool qat = format && step >= schedule.warmup_steps;
    if (qat) {
      const std::size_t since = step - schedule.warmup_steps;
      const bool onset = since == 0;
      const bool refit = !schedule.freeze_centroids || (schedule.refit_every > 0 && since > 0 &&
                                                        since % schedule.refit_every == 0);
      if (onset || refit) {
        fit_centroids(model.layer1, *format, cfg.kmeans);
        fit_centroids(model.layer2, *format, cfg.kmeans);
        model.set_active(true);
      }
    }
    task.sample(cfg.batch, x, t);
    const auto g = loss_and_gradients(model, x, t, cfg.batch);
    if (!std::isfinite(g.loss)) {
      throw TrainingDiverged(step, "toy training diverged at step " + std::to_string(step));
    }
    r.losses.push_back(g.loss);
    r.phases.push_back(qat ? TrainPhase::Qat : TrainPhase::Warmup);
    sgd(model.layer1.master, g.w1, cfg.lr);
    sgd(model.layer1.bias, g.b1, cfg.lr);
    sgd(model.layer2.master, g.w2, cfg.lr);
    sgd(model.layer2.bias, g.b2, cfg.lr);
  }
  r.final_eval_loss = mse_loss(model, eval_x, eval_t, cfg.eval_size);
  if (!std::isfinite(r.final_eval_loss)) {
    throw TrainingDiverged(cfg.steps, "toy evaluation loss is not finite");
  }
  r.formats = {model.layer1.format, model.layer2.format};
  r.model = std::move(model);
  return r;
}

AblationResult ablate_scaling(const ToyModel& model, const QatSchedule& schedule,
                              const QuantFormat& format, const TrainConfig& cfg) {
  QuantFormat absmax = format;
  absmax.scale_rule = ScaleRule::AbsMax;
  QuantFormat absmean = format;
  absmean.scale_rule = ScaleRule::AbsMean;
  return {train_toy(model, schedule, absmax, cfg), train_toy(model, schedule, absmean, cfg)};
}

std::string trajectory_csv(const TrainResult& r) {
  std::ostringstream out;
  out.precision(10);
  out << "step,phase,loss\n";
  for (std::size_t i = 0; i < r.losses.size(); ++i) {
    out << i << ',' << (r.phases[i] == TrainPhase::Warmup ? "warmup" : "qat") << ','
        << r.losses[i] << '\n';
  }
  return out.str();
}

}  // namespace lowbit
