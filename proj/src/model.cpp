#include "xmixup/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <string>

#include "xmixup/errors.hpp"

namespace xmixup {

namespace {

std::string shape_str(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_same_shape(const ModelParams& a, const ModelParams& b, const char* what) {
  bool same = a.extractor.size() == b.extractor.size() &&
              a.head.weights.rows() == b.head.weights.rows() &&
              a.head.weights.cols() == b.head.weights.cols();
  for (std::size_t i = 0; same && i < a.extractor.size(); ++i) {
    same = a.extractor[i].weights.rows() == b.extractor[i].weights.rows() &&
           a.extractor[i].weights.cols() == b.extractor[i].weights.cols();
  }
  if (!same) throw ArgumentError(std::string(what) + ": parameter shapes differ");
}

void accumulate_outer(Matrix& g, std::span<const double> delta, std::span<const double> input) {
  for (std::size_t r = 0; r < g.rows(); ++r) {
    if (delta[r] == 0.0) continue;
    auto row = g.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += delta[r] * input[c];
  }
}

Vector transpose_times(const Matrix& w, std::span<const double> delta) {
  Vector out(w.cols(), 0.0);
  for (std::size_t r = 0; r < w.rows(); ++r) {
    if (delta[r] == 0.0) continue;
    auto row = w.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * delta[r];
  }
  return out;
}

LogitRange clamp_range(LogitRange r, std::size_t n) {
  r.end = std::min(r.end, n);
  return r;
}

}  // namespace

std::size_t ModelParams::input_dim() const {
  return extractor.empty() ? 0 : extractor.front().inputs();
}

std::size_t ModelParams::feature_dim() const {
  return extractor.empty() ? 0 : extractor.back().outputs();
}

void ModelParams::validate() const {
  if (extractor.empty()) throw ArgumentError("model: extractor needs at least one layer");
  std::size_t width = extractor.front().inputs();
  auto check_layer = [&](const Layer& l, const std::string& name) {
    if (l.inputs() != width) {
      throw ArgumentError("model: " + name + " has shape " + shape_str(l.weights) +
                          " but receives " + std::to_string(width) + " inputs");
    }
    if (l.bias.size() != l.outputs()) throw ArgumentError("model: " + name + " bias length mismatch");
    if (!all_finite(l.weights.values()) || !all_finite(l.bias)) {
      throw NumericError("model: " + name + " has non-finite entries");
    }
    width = l.outputs();
  };
  for (std::size_t i = 0; i < extractor.size(); ++i) check_layer(extractor[i], "layer " + std::to_string(i));
  check_layer(head, "head");
}

std::vector<ParamBlock> param_blocks(ModelParams& params) {
  std::vector<ParamBlock> out;
  for (auto& l : params.extractor) {
    out.push_back({l.weights.values(), true});
    out.push_back({l.bias, false});
  }
  out.push_back({params.head.weights.values(), true});
  out.push_back({params.head.bias, false});
  return out;
}

std::vector<ConstParamBlock> param_blocks(const ModelParams& params) {
  std::vector<ConstParamBlock> out;
  for (const auto& l : params.extractor) {
    out.push_back({l.weights.values(), true});
    out.push_back({l.bias, false});
  }
  out.push_back({params.head.weights.values(), true});
  out.push_back({params.head.bias, false});
  return out;
}

ModelParams zeros_like(const ModelParams& params) {
  ModelParams z;
  for (const auto& l : params.extractor) {
    z.extractor.push_back({Matrix(l.outputs(), l.inputs()), Vector(l.outputs(), 0.0)});
  }
  z.head = {Matrix(params.head.outputs(), params.head.inputs()), Vector(params.head.outputs(), 0.0)};
  return z;
}

SoftLabel SoftLabel::one_hot(std::size_t labels, std::size_t index) {
  if (index >= labels) throw ArgumentError("one_hot: index out of range");
  SoftLabel y{Vector(labels, 0.0)};
  y.p[index] = 1.0;
  return y;
}

void SoftLabel::validate() const {
  double sum = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ArgumentError("soft label has a negative or non-finite entry");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("soft label does not sum to 1");
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("train config: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train config: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ConfigError("train config: weight_decay must be >= 0");
  if (iterations < 0) throw ConfigError("train config: iterations must be >= 0");
  if (lr_drop_at < 0 || lr_drop_at > iterations) {
    throw ConfigError("train config: lr_drop_at must lie in [0, iterations]");
  }
  if (!(lr_drop_factor > 0.0)) throw ConfigError("train config: lr_drop_factor must be > 0");
  if (batch_size < 1) throw ConfigError("train config: batch_size must be >= 1");
}

Layer init_layer(std::size_t inputs, std::size_t outputs, Rng& rng) {
  const double s = std::sqrt(6.0 / static_cast<double>(inputs + outputs));
  Layer l{Matrix(outputs, inputs), Vector(outputs, 0.0)};
  for (double& w : l.weights.values()) w = rng.uniform(-s, s);
  return l;
}

ModelParams init_model(std::size_t dim, std::span<const std::size_t> hidden,
                       std::size_t labels, std::uint64_t seed) {
  if (hidden.empty()) throw ArgumentError("init_model: extractor needs at least one hidden layer");
  if (dim < 1 || labels < 1 || std::any_of(hidden.begin(), hidden.end(), [](std::size_t h) { return h < 1; })) {
    throw ArgumentError("init_model: all widths must be >= 1");
  }
  Rng rng(seed);
  ModelParams p;
  std::size_t in = dim;
  for (std::size_t h : hidden) {
    p.extractor.push_back(init_layer(in, h, rng));
    in = h;
  }
  p.head = init_layer(in, labels, rng);
  return p;
}

Vector extract_features(const ModelParams& params, std::span<const double> x) {
  if (params.extractor.empty() || x.size() != params.input_dim()) {
    throw ArgumentError("forward: input has length " + std::to_string(x.size()) + ", model expects " +
                        std::to_string(params.input_dim()));
  }
  Vector a(x.begin(), x.end());
  for (const auto& l : params.extractor) {
    a = affine(l.weights, l.bias, a);
    for (double& v : a) v = std::max(v, 0.0);
  }
  return a;
}

ForwardResult forward(const ModelParams& params, std::span<const double> x) {
  ForwardResult r;
  r.features = extract_features(params, x);
  r.logits = affine(params.head.weights, params.head.bias, r.features);
  return r;
}

SoftmaxLoss softmax_cross_entropy(std::span<const double> logits, const SoftLabel& target,
                                  LogitRange active) {
  if (target.p.size() != logits.size()) throw ArgumentError("softmax: label length differs from logits");
  active = clamp_range(active, logits.size());
  if (active.begin >= active.end) throw ArgumentError("softmax: empty logit range");
  for (std::size_t k = 0; k < logits.size(); ++k) {
    if ((k < active.begin || k >= active.end) && target.p[k] != 0.0) {
      throw ArgumentError("softmax: label mass outside the active logit range");
    }
  }
  double mx = logits[active.begin];
  for (std::size_t k = active.begin; k < active.end; ++k) mx = std::max(mx, logits[k]);
  double z = 0.0;
  for (std::size_t k = active.begin; k < active.end; ++k) z += std::exp(logits[k] - mx);
  const double log_z = std::log(z);

  SoftmaxLoss out{0.0, Vector(logits.size(), 0.0)};
  double mass = 0.0;
  for (std::size_t k = active.begin; k < active.end; ++k) mass += target.p[k];
  for (std::size_t k = active.begin; k < active.end; ++k) {
    const double log_p = logits[k] - mx - log_z;
    if (target.p[k] != 0.0) out.loss -= target.p[k] * log_p;
    out.dlogits[k] = std::exp(log_p) * mass - target.p[k];
  }
  return out;
}

LossAndGrad loss_and_grad(const ModelParams& params, std::span<const Example> batch) {
  if (batch.empty()) throw ArgumentError("loss_and_grad: empty batch");
  const std::size_t depth = params.extractor.size();
  LossAndGrad out{0.0, zeros_like(params)};
  const double scale = 1.0 / static_cast<double>(batch.size());

  std::vector<Vector> pre(depth);
  std::vector<Vector> act(depth + 1);
  for (const auto& ex : batch) {
    if (ex.x.size() != params.input_dim()) throw ArgumentError("loss_and_grad: input length mismatch");
    if (!all_finite(ex.x)) throw NumericError("loss_and_grad: non-finite input");
    act[0] = ex.x;
    for (std::size_t k = 0; k < depth; ++k) {
      const auto& l = params.extractor[k];
      pre[k] = affine(l.weights, l.bias, act[k]);
      act[k + 1] = pre[k];
      for (double& v : act[k + 1]) v = std::max(v, 0.0);
    }
    const Vector logits = affine(params.head.weights, params.head.bias, act[depth]);
    SoftmaxLoss sl = softmax_cross_entropy(logits, ex.y, ex.active);
    out.loss += sl.loss * scale;

    Vector delta = std::move(sl.dlogits);
    for (double& d : delta) d *= scale;
    accumulate_outer(out.grads.head.weights, delta, act[depth]);
    for (std::size_t r = 0; r < delta.size(); ++r) out.grads.head.bias[r] += delta[r];
    delta = transpose_times(params.head.weights, delta);
    for (std::size_t k = depth; k-- > 0;) {
      for (std::size_t r = 0; r < delta.size(); ++r) {
        if (pre[k][r] <= 0.0) delta[r] = 0.0;
      }
      auto& g = out.grads.extractor[k];
      accumulate_outer(g.weights, delta, act[k]);
      for (std::size_t r = 0; r < delta.size(); ++r) g.bias[r] += delta[r];
      if (k > 0) delta = transpose_times(params.extractor[k].weights, delta);
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("loss_and_grad: non-finite loss");
  return out;
}

double batch_loss(const ModelParams& params, std::span<const Example> batch) {
  if (batch.empty()) throw ArgumentError("batch_loss: empty batch");
  double total = 0.0;
  for (const auto& ex : batch) {
    auto r = forward(params, ex.x);
    total += softmax_cross_entropy(r.logits, ex.y, ex.active).loss;
  }
  return total / static_cast<double>(batch.size());
}

double effective_lr(const TrainConfig& cfg, int iter) {
  return iter >= cfg.lr_drop_at ? cfg.lr * cfg.lr_drop_factor : cfg.lr;
}

void sgd_step(ModelParams& params, const ModelParams& grads, ModelParams& velocity,
              const TrainConfig& cfg, int iter) {
  check_same_shape(params, grads, "sgd_step");
  check_same_shape(params, velocity, "sgd_step");
  const double lr = effective_lr(cfg, iter);
  auto p = param_blocks(params);
  auto g = param_blocks(grads);
  auto v = param_blocks(velocity);
  for (const auto& block : g) {
    if (!all_finite(block.values)) throw NumericError("sgd_step: non-finite gradient");
  }
  for (std::size_t b = 0; b < p.size(); ++b) {
    const double wd = p[b].decays ? cfg.weight_decay : 0.0;
    auto w = p[b].values;
    auto gv = g[b].values;
    auto vel = v[b].values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      vel[i] = cfg.momentum * vel[i] - lr * (gv[i] + wd * w[i]);
      w[i] += vel[i];
    }
  }
}

namespace {

constexpr char kMagic[8] = {'X', 'M', 'X', 'C', 'K', 'P', 'T', '1'};

void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

void put_layer(std::ostream& out, const Layer& l) {
  put_u64(out, l.outputs());
  put_u64(out, l.inputs());
  for (double w : l.weights.values()) put_u64(out, std::bit_cast<std::uint64_t>(w));
  for (double b : l.bias) put_u64(out, std::bit_cast<std::uint64_t>(b));
}

Layer get_layer(std::istream& in) {
  const std::uint64_t rows = get_u64(in);
  const std::uint64_t cols = get_u64(in);
  if (rows == 0 || cols == 0 || rows > (1u << 20) || cols > (1u << 20)) {
    throw DataError("checkpoint: implausible layer shape");
  }
  Layer l{Matrix(rows, cols), Vector(rows)};
  for (double& w : l.weights.values()) w = std::bit_cast<double>(get_u64(in));
  for (double& b : l.bias) b = std::bit_cast<double>(get_u64(in));
  return l;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put_u64(out, params.extractor.size());
  for (const auto& l : params.extractor) put_layer(out, l);
  put_layer(out, params.head);
  if (!out) throw DataError("write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || !std::equal(magic, magic + 8, kMagic)) {
    throw DataError("checkpoint: bad magic in " + path.string());
  }
  const std::uint64_t depth = get_u64(in);
  if (depth == 0 || depth > 64) throw DataError("checkpoint: implausible layer count");
  ModelParams p;
  for (std::uint64_t i = 0; i < depth; ++i) p.extractor.push_back(get_layer(in));
  p.head = get_layer(in);
  p.validate();
  return p;
}

}  // namespace xmixup
