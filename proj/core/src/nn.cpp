#include "cascade/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "cascade/error.hpp"
#include "cascade/rng.hpp"

namespace cascade::nn {

void validate(const MlpConfig& c) {
  if (c.input_dim == 0) throw InvalidArgument("MLP input_dim must be positive");
  if (c.num_layers < 1) throw InvalidArgument("MLP needs at least one layer");
  if (c.hidden_units < 1) throw InvalidArgument("MLP hidden_units must be positive");
  if (!(c.bn_epsilon > 0.0)) throw InvalidArgument("batchnorm epsilon must be positive");
  if (!(c.bn_momentum >= 0.0 && c.bn_momentum < 1.0))
    throw InvalidArgument("batchnorm momentum must lie in [0, 1)");
}

std::size_t MlpParams::num_trainable() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += l.weight.size() + l.bias.size();
    if (l.bn) n += l.bn->gamma.size() + l.bn->beta.size();
  }
  return n;
}

std::vector<std::span<double>> trainable_views(MlpParams& p) {
  std::vector<std::span<double>> out;
  for (auto& l : p.layers) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
    if (l.bn) {
      out.emplace_back(l.bn->gamma);
      out.emplace_back(l.bn->beta);
    }
  }
  return out;
}

std::vector<std::span<const double>> trainable_views(const MlpParams& p) {
  std::vector<std::span<const double>> out;
  for (const auto& l : p.layers) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
    if (l.bn) {
      out.emplace_back(l.bn->gamma);
      out.emplace_back(l.bn->beta);
    }
  }
  return out;
}

std::vector<std::span<double>> grad_views(MlpGrads& g) {
  std::vector<std::span<double>> out;
  for (auto& l : g.layers) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
    if (!l.gamma.empty()) {
      out.emplace_back(l.gamma);
      out.emplace_back(l.beta);
    }
  }
  return out;
}

std::vector<std::span<const double>> grad_views(const MlpGrads& g) {
  std::vector<std::span<const double>> out;
  for (const auto& l : g.layers) {
    out.emplace_back(l.weight.data());
    out.emplace_back(l.bias);
    if (!l.gamma.empty()) {
      out.emplace_back(l.gamma);
      out.emplace_back(l.beta);
    }
  }
  return out;
}

double init_bound(std::size_t fan_in, bool output_layer) {
  // He-uniform for ReLU layers, LeCun-uniform for the linear output.
  const double gain = output_layer ? 3.0 : 6.0;
  return std::sqrt(gain / static_cast<double>(fan_in));
}

MlpParams init(const MlpConfig& config) {
  validate(config);
  MlpParams p{config, {}};
  std::size_t in = config.input_dim;
  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const bool last = l + 1 == config.num_layers;
    const std::size_t out = last ? 1 : config.hidden_units;
    DenseLayer layer{Matrix(out, in), std::vector<double>(out, 0.0), std::nullopt};
    Rng rng(derive_seed(config.seed, l));
    const double bound = init_bound(in, last);
    for (double& w : layer.weight.data()) w = rng.uniform(-bound, bound);
    if (!last && config.use_batchnorm) {
      layer.bn = BatchNorm{std::vector<double>(out, 1.0), std::vector<double>(out, 0.0),
                           std::vector<double>(out, 0.0), std::vector<double>(out, 1.0)};
    }
    p.layers.push_back(std::move(layer));
    in = out;
  }
  return p;
}

namespace {

// out = in * W^T + b
void affine(const Matrix& in, const DenseLayer& layer, Matrix& out) {
  const std::size_t rows = in.rows(), n_in = layer.in_dim(), n_out = layer.out_dim();
  out = Matrix(rows, n_out);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* x = in.row(r).data();
    double* y = out.row(r).data();
    for (std::size_t o = 0; o < n_out; ++o) {
      const double* w = layer.weight.row(o).data();
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < n_in; ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  }
}

}  // namespace

ForwardPass forward(const MlpParams& params, const Matrix& batch, Mode mode) {
  if (batch.cols() != params.config.input_dim)
    throw InvalidArgument("batch width " + std::to_string(batch.cols()) +
                          " does not match input_dim " +
                          std::to_string(params.config.input_dim));
  if (batch.rows() == 0) throw InvalidArgument("empty batch");
  const bool any_bn = std::any_of(params.layers.begin(), params.layers.end(),
                                  [](const DenseLayer& l) { return l.bn.has_value(); });
  if (mode == Mode::kTrain && any_bn && batch.rows() < 2)
    throw InvalidArgument("train-mode batchnorm needs a batch of at least 2 rows");

  ForwardPass pass;
  pass.mode = mode;
  pass.layers.resize(params.layers.size());
  const std::size_t rows = batch.rows();
  const double eps = params.config.bn_epsilon;
  Matrix current = batch;

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    auto& cache = pass.layers[l];
    const bool last = l + 1 == params.layers.size();
    Matrix z;
    affine(current, layer, z);
    cache.input = std::move(current);

    if (layer.bn) {
      const std::size_t width = layer.out_dim();
      const auto& bn = *layer.bn;
      cache.inv_std.resize(width);
      cache.normalized = Matrix(rows, width);
      if (mode == Mode::kTrain) {
        cache.batch_mean.assign(width, 0.0);
        cache.batch_var.assign(width, 0.0);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < width; ++c) cache.batch_mean[c] += z(r, c);
        for (std::size_t c = 0; c < width; ++c) cache.batch_mean[c] /= double(rows);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < width; ++c) {
            const double d = z(r, c) - cache.batch_mean[c];
            cache.batch_var[c] += d * d;
          }
        for (std::size_t c = 0; c < width; ++c) {
          cache.batch_var[c] /= double(rows);
          cache.inv_std[c] = 1.0 / std::sqrt(cache.batch_var[c] + eps);
        }
      } else {
        for (std::size_t c = 0; c < width; ++c)
          cache.inv_std[c] = 1.0 / std::sqrt(bn.running_var[c] + eps);
      }
      const auto& mean = mode == Mode::kTrain ? cache.batch_mean : bn.running_mean;
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < width; ++c) {
          const double xhat = (z(r, c) - mean[c]) * cache.inv_std[c];
          cache.normalized(r, c) = xhat;
          z(r, c) = bn.gamma[c] * xhat + bn.beta[c];
        }
    }
    cache.output = z;
    if (!last)
      for (double& v : z.data()) v = v > 0.0 ? v : 0.0;
    current = std::move(z);
  }
  pass.outputs.assign(current.data().begin(), current.data().end());
  return pass;
}

void update_running_stats(MlpParams& params, const ForwardPass& pass) {
  if (pass.mode != Mode::kTrain) return;
  const double m = params.config.bn_momentum;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    auto& layer = params.layers[l];
    if (!layer.bn) continue;
    const auto& cache = pass.layers[l];
    const double rows = static_cast<double>(cache.input.rows());
    const double unbias = rows / (rows - 1.0);
    for (std::size_t c = 0; c < layer.out_dim(); ++c) {
      layer.bn->running_mean[c] = m * layer.bn->running_mean[c] + (1.0 - m) * cache.batch_mean[c];
      layer.bn->running_var[c] =
          m * layer.bn->running_var[c] + (1.0 - m) * cache.batch_var[c] * unbias;
    }
  }
}

ForwardPass forward_train(MlpParams& params, const Matrix& batch) {
  ForwardPass pass = forward(params, batch, Mode::kTrain);
  update_running_stats(params, pass);
  return pass;
}

std::vector<double> predict(const MlpParams& params, const Matrix& rows) {
  return forward(params, rows, Mode::kEval).outputs;
}

LossResult loss(std::span<const double> outputs, std::span<const double> targets,
                LossKind kind) {
  if (outputs.size() != targets.size())
    throw InvalidArgument("loss: outputs and targets differ in length");
  if (outputs.empty()) throw InvalidArgument("loss of an empty batch");
  const double n = static_cast<double>(outputs.size());
  LossResult res;
  res.grad.resize(outputs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const double o = outputs[i], t = targets[i];
    if (kind == LossKind::kLogistic) {
      if (t != 0.0 && t != 1.0) throw InvalidArgument("logistic loss needs targets in {0, 1}");
      const double sign = 2.0 * t - 1.0;
      const double margin = -sign * o;
      // softplus(margin), and its derivative sigmoid(margin)
      const double sp = margin > 0.0 ? margin + std::log1p(std::exp(-margin))
                                     : std::log1p(std::exp(margin));
      const double sig = margin > 0.0 ? 1.0 / (1.0 + std::exp(-margin))
                                      : std::exp(margin) / (1.0 + std::exp(margin));
      total += sp;
      res.grad[i] = -sign * sig / n;
    } else {
      const double d = o - t;
      total += d * d;
      res.grad[i] = 2.0 * d / n;
    }
  }
  res.value = total / n;
  return res;
}

MlpGrads backward(const MlpParams& params, const ForwardPass& pass,
                  std::span<const double> output_grad) {
  if (pass.layers.size() != params.layers.size())
    throw InvalidArgument("backward: cache does not match the network");
  const std::size_t rows = pass.outputs.size();
  if (output_grad.size() != rows) throw InvalidArgument("backward: output gradient size mismatch");

  MlpGrads grads;
  grads.layers.resize(params.layers.size());
  Matrix upstream(rows, 1);
  std::copy(output_grad.begin(), output_grad.end(), upstream.data().begin());

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const auto& layer = params.layers[li];
    const auto& cache = pass.layers[li];
    auto& g = grads.layers[li];
    const bool last = li + 1 == params.layers.size();
    const std::size_t n_out = layer.out_dim(), n_in = layer.in_dim();
    if (cache.input.rows() != rows || cache.input.cols() != n_in ||
        cache.output.cols() != n_out)
      throw InvalidArgument("backward: stale cache shapes");

    // upstream holds dL/d(activation); move through the ReLU.
    Matrix dz = upstream;
    if (!last)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n_out; ++c)
          if (!(cache.output(r, c) > 0.0)) dz(r, c) = 0.0;

    if (layer.bn) {
      const auto& bn = *layer.bn;
      g.gamma.assign(n_out, 0.0);
      g.beta.assign(n_out, 0.0);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n_out; ++c) {
          g.gamma[c] += dz(r, c) * cache.normalized(r, c);
          g.beta[c] += dz(r, c);
        }
      if (pass.mode == Mode::kTrain) {
        const double b = static_cast<double>(rows);
        for (std::size_t c = 0; c < n_out; ++c) {
          double sum_dx = 0.0, sum_dx_xhat = 0.0;
          for (std::size_t r = 0; r < rows; ++r) {
            const double dxhat = dz(r, c) * bn.gamma[c];
            sum_dx += dxhat;
            sum_dx_xhat += dxhat * cache.normalized(r, c);
          }
          for (std::size_t r = 0; r < rows; ++r) {
            const double dxhat = dz(r, c) * bn.gamma[c];
            dz(r, c) = cache.inv_std[c] / b *
                       (b * dxhat - sum_dx - cache.normalized(r, c) * sum_dx_xhat);
          }
        }
      } else {
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < n_out; ++c) dz(r, c) *= bn.gamma[c] * cache.inv_std[c];
      }
    }

    g.weight = Matrix(n_out, n_in);
    g.bias.assign(n_out, 0.0);
    Matrix dx(rows, n_in);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* x = cache.input.row(r).data();
      double* dxr = dx.row(r).data();
      for (std::size_t o = 0; o < n_out; ++o) {
        const double d = dz(r, o);
        if (d == 0.0) continue;
        g.bias[o] += d;
        double* gw = g.weight.row(o).data();
        const double* w = layer.weight.row(o).data();
        for (std::size_t i = 0; i < n_in; ++i) {
          gw[i] += d * x[i];
          dxr[i] += d * w[i];
        }
      }
    }
    upstream = std::move(dx);
  }
  return grads;
}

AdamState adam_init(const MlpParams& params, const AdamConfig& hp) {
  AdamState s{hp, 0, {}, {}};
  for (auto view : trainable_views(params)) {
    s.m.emplace_back(view.size(), 0.0);
    s.v.emplace_back(view.size(), 0.0);
  }
  return s;
}

void adam_update(std::span<double> params, std::span<const double> grads,
                 std::span<double> m, std::span<double> v, std::uint64_t step,
                 const AdamConfig& hp) {
  if (params.size() != grads.size() || m.size() != params.size() || v.size() != params.size())
    throw InvalidArgument("adam: buffer shapes differ");
  if (step == 0) throw InvalidArgument("adam: step count starts at 1");
  for (std::size_t i = 0; i < grads.size(); ++i)
    if (!std::isfinite(grads[i]))
      throw Error("adam: non-finite gradient at index " + std::to_string(i) + " (step " +
                  std::to_string(step) + ")");
  const double t = static_cast<double>(step);
  const double c1 = 1.0 - std::pow(hp.beta1, t);
  const double c2 = 1.0 - std::pow(hp.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    m[i] = hp.beta1 * m[i] + (1.0 - hp.beta1) * grads[i];
    v[i] = hp.beta2 * v[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
    const double m_hat = m[i] / c1;
    const double v_hat = v[i] / c2;
    params[i] -= hp.lr * m_hat / (std::sqrt(v_hat) + hp.epsilon);
  }
}

void adam_step(MlpParams& params, const MlpGrads& grads, AdamState& state) {
  auto p = trainable_views(params);
  auto g = grad_views(grads);
  if (p.size() != g.size() || p.size() != state.m.size())
    throw InvalidArgument("adam: gradient layout does not match parameters");
  for (std::size_t k = 0; k < p.size(); ++k)
    for (double x : g[k])
      if (!std::isfinite(x)) throw Error("adam: non-finite gradient in tensor " + std::to_string(k));
  ++state.step;
  for (std::size_t k = 0; k < p.size(); ++k)
    adam_update(p[k], g[k], state.m[k], state.v[k], state.step, state.hp);
}

namespace {

std::vector<bool> relu_pattern(const ForwardPass& pass) {
  std::vector<bool> mask;
  for (std::size_t l = 0; l + 1 < pass.layers.size(); ++l)
    for (double v : pass.layers[l].output.data()) mask.push_back(v > 0.0);
  return mask;
}

}  // namespace

GradCheckResult compare_gradients(const MlpParams& params, const Matrix& batch,
                                  std::span<const double> targets, LossKind kind,
                                  const MlpGrads& analytic, const GradCheckOptions& options) {
  MlpParams probe = params;
  auto views = trainable_views(probe);
  auto gviews = grad_views(analytic);
  if (views.size() != gviews.size()) throw InvalidArgument("grad_check: gradient layout mismatch");

  std::vector<std::pair<std::size_t, std::size_t>> slots;
  for (std::size_t k = 0; k < views.size(); ++k)
    for (std::size_t i = 0; i < views[k].size(); ++i) slots.emplace_back(k, i);
  Rng rng(options.seed);
  rng.shuffle(std::span(slots));

  const auto base_mask = relu_pattern(forward(params, batch, options.mode));
  auto eval_loss = [&](std::vector<bool>* mask) {
    const auto pass = forward(probe, batch, options.mode);
    if (mask) *mask = relu_pattern(pass);
    return loss(pass.outputs, targets, kind).value;
  };

  GradCheckResult res;
  std::vector<bool> mask_plus, mask_minus;
  for (const auto& [k, i] : slots) {
    if (res.checked >= options.samples) break;
    double& p = views[k][i];
    const double saved = p;
    p = saved + options.step;
    const double up = eval_loss(&mask_plus);
    p = saved - options.step;
    const double down = eval_loss(&mask_minus);
    p = saved;
    if (mask_plus != base_mask || mask_minus != base_mask) {
      ++res.skipped_kinks;
      continue;
    }
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = gviews[k][i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    res.max_rel_error = std::max(res.max_rel_error, std::abs(a - numeric) / denom);
    ++res.checked;
  }
  return res;
}

GradCheckResult grad_check(const MlpParams& params, const Matrix& batch,
                           std::span<const double> targets, LossKind kind,
                           const GradCheckOptions& options) {
  const auto pass = forward(params, batch, options.mode);
  const auto l = loss(pass.outputs, targets, kind);
  const auto grads = backward(params, pass, l.grad);
  return compare_gradients(params, batch, targets, kind, grads, options);
}

}  // namespace cascade::nn
