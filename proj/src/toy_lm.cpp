#include "epicode/toy_lm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <set>
#include <string>

#include "epicode/error.hpp"
#include "epicode/random.hpp"

namespace epicode {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kInitStd = 0.02;

template <typename S>
using ColVector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

std::string block_prefix(int layer) { return "blocks." + std::to_string(layer) + "."; }

/// Calls f(name, member) for every parameter tensor of w.
template <typename W, typename F>
void visit_weights(W& w, F&& f) {
  f("tok_emb", w.tok_emb);
  f("pos_emb", w.pos_emb);
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    auto& b = w.blocks[l];
    const auto p = block_prefix(static_cast<int>(l));
    f(p + "ln1.gain", b.ln1_gain);
    f(p + "ln1.bias", b.ln1_bias);
    f(p + "attn.wq", b.wq);
    f(p + "attn.wk", b.wk);
    f(p + "attn.wv", b.wv);
    f(p + "attn.wo", b.wo);
    f(p + "attn.bq", b.bq);
    f(p + "attn.bk", b.bk);
    f(p + "attn.bv", b.bv);
    f(p + "attn.bo", b.bo);
    f(p + "ln2.gain", b.ln2_gain);
    f(p + "ln2.bias", b.ln2_bias);
    f(p + "mlp.w1", b.w1);
    f(p + "mlp.b1", b.b1);
    f(p + "mlp.w2", b.w2);
    f(p + "mlp.b2", b.b2);
  }
  f("ln_f.gain", w.lnf_gain);
  f("ln_f.bias", w.lnf_bias);
  f("head.w", w.head_w);
  f("head.b", w.head_b);
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

template <typename S>
struct NormCache {
  Matrix<S> xhat;
  ColVector<S> rstd;
};

template <typename S>
struct BlockCache {
  NormCache<S> ln1;
  Matrix<S> a, q, k, v;
  std::vector<Matrix<S>> probs;
  Matrix<S> o;
  NormCache<S> ln2;
  Matrix<S> b, h, g;
};

template <typename S>
struct ForwardCache {
  std::vector<BlockCache<S>> blocks;
  NormCache<S> lnf;
  Matrix<S> f;
};

template <typename S>
Matrix<S> layer_norm(const Matrix<S>& x, const RowVector<S>& gain,
                     const RowVector<S>& bias, NormCache<S>* cache) {
  const ColVector<S> mean = x.rowwise().mean();
  const Matrix<S> xc = x.colwise() - mean;
  const ColVector<S> var = xc.array().square().rowwise().mean().matrix();
  const ColVector<S> rstd = (var.array() + S(kLayerNormEps)).rsqrt().matrix();
  Matrix<S> xhat = (xc.array().colwise() * rstd.array()).matrix();
  Matrix<S> y = ((xhat.array().rowwise() * gain.array()).rowwise() + bias.array()).matrix();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = rstd;
  }
  return y;
}

template <typename S>
Matrix<S> layer_norm_backward(const Matrix<S>& dy, const NormCache<S>& c,
                              const RowVector<S>& gain, RowVector<S>& dgain,
                              RowVector<S>& dbias) {
  dgain += (dy.array() * c.xhat.array()).colwise().sum().matrix();
  dbias += dy.colwise().sum();
  const Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> dxhat =
      dy.array().rowwise() * gain.array();
  const ColVector<S> mean_d = dxhat.rowwise().mean().matrix();
  const ColVector<S> mean_dx = (dxhat * c.xhat.array()).rowwise().mean().matrix();
  Eigen::Array<S, Eigen::Dynamic, Eigen::Dynamic> dx =
      (dxhat.colwise() - mean_d.array()) - (c.xhat.array().colwise() * mean_dx.array());
  dx.colwise() *= c.rstd.array();
  return dx.matrix();
}

template <typename S>
S gelu(S x) {
  const S c = static_cast<S>(std::sqrt(2.0 / std::numbers::pi));
  return S(0.5) * x * (S(1) + std::tanh(c * (x + S(0.044715) * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
  const S c = static_cast<S>(std::sqrt(2.0 / std::numbers::pi));
  const S t = std::tanh(c * (x + S(0.044715) * x * x * x));
  return S(0.5) * (S(1) + t) +
         S(0.5) * x * (S(1) - t * t) * c * (S(1) + S(3 * 0.044715) * x * x);
}

template <typename S>
Matrix<S> activate(const Matrix<S>& h, Activation act) {
  if (act == Activation::identity) return h;
  return h.unaryExpr([](S x) { return gelu(x); });
}

template <typename S>
Matrix<S> activate_backward(const Matrix<S>& dg, const Matrix<S>& h, Activation act) {
  if (act == Activation::identity) return dg;
  return (dg.array() * h.unaryExpr([](S x) { return gelu_grad(x); }).array()).matrix();
}

void check_tokens(const ToyConfig& cfg, std::span<const Token> tokens) {
  if (tokens.empty()) throw DataError("token sequence must not be empty");
  if (static_cast<int>(tokens.size()) > cfg.max_context)
    throw DataError("context overflow: " + std::to_string(tokens.size()) +
                    " tokens exceed max_context " + std::to_string(cfg.max_context));
  for (Token t : tokens)
    if (t < 0 || t >= cfg.vocab_size)
      throw DataError("token id " + std::to_string(t) + " out of range [0, " +
                      std::to_string(cfg.vocab_size) + ")");
}

/// Runs the blocks and the final norm; returns the normalized final hidden
/// states [T, d].
template <typename S>
Matrix<S> run_trunk(const Weights<S>& w, const ToyConfig& cfg,
                    std::span<const Token> tokens, ForwardCache<S>* cache) {
  check_tokens(cfg, tokens);
  const auto T = static_cast<Eigen::Index>(tokens.size());
  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  Matrix<S> x(T, d);
  for (Eigen::Index t = 0; t < T; ++t)
    x.row(t) = w.tok_emb.row(tokens[static_cast<std::size_t>(t)]) + w.pos_emb.row(t);

  if (cache) cache->blocks.resize(w.blocks.size());
  for (std::size_t l = 0; l < w.blocks.size(); ++l) {
    const auto& bw = w.blocks[l];
    BlockCache<S>* bc = cache ? &cache->blocks[l] : nullptr;

    Matrix<S> a = layer_norm(x, bw.ln1_gain, bw.ln1_bias, bc ? &bc->ln1 : nullptr);
    Matrix<S> q = (a * bw.wq).rowwise() + bw.bq;
    Matrix<S> k = (a * bw.wk).rowwise() + bw.bk;
    Matrix<S> v = (a * bw.wv).rowwise() + bw.bv;
    Matrix<S> o(T, d);
    if (bc) bc->probs.resize(static_cast<std::size_t>(cfg.n_heads));
    for (int h = 0; h < cfg.n_heads; ++h) {
      Matrix<S> p = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * scale;
      for (Eigen::Index i = 0; i < T; ++i) {
        const S m = p.row(i).head(i + 1).maxCoeff();
        S sum = 0;
        for (Eigen::Index j = 0; j <= i; ++j) {
          p(i, j) = std::exp(p(i, j) - m);
          sum += p(i, j);
        }
        p.row(i).head(i + 1) /= sum;
        p.row(i).tail(T - i - 1).setZero();
      }
      o.middleCols(h * dh, dh) = p * v.middleCols(h * dh, dh);
      if (bc) bc->probs[static_cast<std::size_t>(h)] = std::move(p);
    }
    x += (o * bw.wo).rowwise() + bw.bo;

    Matrix<S> b = layer_norm(x, bw.ln2_gain, bw.ln2_bias, bc ? &bc->ln2 : nullptr);
    Matrix<S> hdn = (b * bw.w1).rowwise() + bw.b1;
    Matrix<S> g = activate(hdn, cfg.activation);
    x += (g * bw.w2).rowwise() + bw.b2;

    if (bc) {
      bc->a = std::move(a);
      bc->q = std::move(q);
      bc->k = std::move(k);
      bc->v = std::move(v);
      bc->o = std::move(o);
      bc->b = std::move(b);
      bc->h = std::move(hdn);
      bc->g = std::move(g);
    }
  }
  return layer_norm(x, w.lnf_gain, w.lnf_bias, cache ? &cache->lnf : nullptr);
}

template <typename S>
void backward(const Weights<S>& w, const ToyConfig& cfg, std::span<const Token> tokens,
              const ForwardCache<S>& c, const Matrix<S>& dlogits, Weights<S>& g) {
  const auto T = static_cast<Eigen::Index>(tokens.size());
  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(dh));

  g.head_w.noalias() += c.f.transpose() * dlogits;
  g.head_b += dlogits.colwise().sum();
  Matrix<S> dx = layer_norm_backward<S>(dlogits * w.head_w.transpose(), c.lnf, w.lnf_gain,
                                        g.lnf_gain, g.lnf_bias);

  for (std::size_t li = w.blocks.size(); li-- > 0;) {
    const auto& bw = w.blocks[li];
    auto& bg = g.blocks[li];
    const auto& bc = c.blocks[li];

    bg.w2.noalias() += bc.g.transpose() * dx;
    bg.b2 += dx.colwise().sum();
    const Matrix<S> dh_act = activate_backward<S>(dx * bw.w2.transpose(), bc.h, cfg.activation);
    bg.w1.noalias() += bc.b.transpose() * dh_act;
    bg.b1 += dh_act.colwise().sum();
    dx += layer_norm_backward<S>(dh_act * bw.w1.transpose(), bc.ln2, bw.ln2_gain,
                                 bg.ln2_gain, bg.ln2_bias);

    bg.wo.noalias() += bc.o.transpose() * dx;
    bg.bo += dx.colwise().sum();
    const Matrix<S> d_o = dx * bw.wo.transpose();
    Matrix<S> dq(T, d), dk(T, d), dv(T, d);
    for (int h = 0; h < cfg.n_heads; ++h) {
      const Matrix<S>& p = bc.probs[static_cast<std::size_t>(h)];
      const auto d_oh = d_o.middleCols(h * dh, dh);
      const Matrix<S> dp = d_oh * bc.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = p.transpose() * d_oh;
      const ColVector<S> row_dot = (dp.array() * p.array()).rowwise().sum().matrix();
      const Matrix<S> ds =
          (p.array() * (dp.array().colwise() - row_dot.array())).matrix() * scale;
      dq.middleCols(h * dh, dh) = ds * bc.k.middleCols(h * dh, dh);
      dk.middleCols(h * dh, dh) = ds.transpose() * bc.q.middleCols(h * dh, dh);
    }
    bg.wq.noalias() += bc.a.transpose() * dq;
    bg.wk.noalias() += bc.a.transpose() * dk;
    bg.wv.noalias() += bc.a.transpose() * dv;
    bg.bq += dq.colwise().sum();
    bg.bk += dk.colwise().sum();
    bg.bv += dv.colwise().sum();
    const Matrix<S> da =
        dq * bw.wq.transpose() + dk * bw.wk.transpose() + dv * bw.wv.transpose();
    dx += layer_norm_backward<S>(da, bc.ln1, bw.ln1_gain, bg.ln1_gain, bg.ln1_bias);
  }

  for (Eigen::Index t = 0; t < T; ++t) {
    g.tok_emb.row(tokens[static_cast<std::size_t>(t)]) += dx.row(t);
    g.pos_emb.row(t) += dx.row(t);
  }
}

}  // namespace

void validate(const ToyConfig& cfg) {
  if (cfg.vocab_size < 2) throw DataError("vocab_size must be >= 2");
  if (cfg.d_model < 1 || cfg.n_layers < 1 || cfg.n_heads < 1 || cfg.d_ff < 1)
    throw DataError("model dimensions must be >= 1");
  if (cfg.max_context < 2) throw DataError("max_context must be >= 2");
  if (cfg.d_model % cfg.n_heads != 0)
    throw DataError("d_model must be divisible by n_heads");
}

std::map<std::string, std::vector<std::int64_t>> param_shapes(const ToyConfig& cfg) {
  validate(cfg);
  const std::int64_t V = cfg.vocab_size, d = cfg.d_model, F = cfg.d_ff, C = cfg.max_context;
  std::map<std::string, std::vector<std::int64_t>> shapes{
      {"tok_emb", {V, d}}, {"pos_emb", {C, d}},       {"ln_f.gain", {d}},
      {"ln_f.bias", {d}},  {"head.w", {d, V}},        {"head.b", {V}}};
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto p = block_prefix(l);
    for (const char* n : {"ln1.gain", "ln1.bias", "ln2.gain", "ln2.bias", "attn.bq",
                          "attn.bk", "attn.bv", "attn.bo", "mlp.b2"})
      shapes[p + n] = {d};
    for (const char* n : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) shapes[p + n] = {d, d};
    shapes[p + "mlp.w1"] = {d, F};
    shapes[p + "mlp.b1"] = {F};
    shapes[p + "mlp.w2"] = {F, d};
  }
  return shapes;
}

TensorMap init(const ToyConfig& cfg) {
  TensorMap params;
  for (const auto& [name, shape] : param_shapes(cfg)) {
    Tensor t = Tensor::zeros(shape);
    if (ends_with(name, ".gain")) {
      std::fill(t.data.begin(), t.data.end(), 1.0f);
    } else if (shape.size() == 2) {
      CounterRng rng(cfg.seed, fnv1a(name));
      for (float& v : t.data) v = static_cast<float>(kInitStd * rng.normal());
    }
    params.emplace(name, std::move(t));
  }
  return params;
}

template <typename S>
Weights<S> Weights<S>::zeros_like(const ToyConfig& cfg) {
  const auto shapes = param_shapes(cfg);
  Weights<S> w;
  w.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  visit_weights(w, [&](const std::string& name, auto& member) {
    const auto& shape = shapes.at(name);
    if (shape.size() == 2)
      member.setZero(shape[0], shape[1]);
    else
      member.setZero(1, shape[0]);
  });
  return w;
}

template <typename S>
Weights<S> Weights<S>::from_tensors(const TensorMap& params, const ToyConfig& cfg) {
  const auto shapes = param_shapes(cfg);
  for (const auto& [name, shape] : shapes) {
    auto it = params.find(name);
    if (it == params.end()) throw DataError("parameter set lacks tensor '" + name + "'");
    if (it->second.shape != shape)
      throw DataError("tensor '" + name + "' has shape " + shape_string(it->second.shape) +
                      ", expected " + shape_string(shape));
    if (static_cast<std::int64_t>(it->second.data.size()) != it->second.numel())
      throw DataError("tensor '" + name + "' data length does not match its shape");
  }
  if (params.size() != shapes.size())
    for (const auto& [name, t] : params)
      if (!shapes.contains(name))
        throw DataError("unexpected tensor '" + name + "' for this model config");

  Weights<S> w;
  w.blocks.resize(static_cast<std::size_t>(cfg.n_layers));
  visit_weights(w, [&](const std::string& name, auto& member) {
    const Tensor& t = params.at(name);
    const auto rows = t.shape.size() == 2 ? t.shape[0] : 1;
    const auto cols = t.shape.size() == 2 ? t.shape[1] : t.shape[0];
    member = Eigen::Map<const Matrix<float>>(t.data.data(), rows, cols).template cast<S>();
  });
  return w;
}

template <typename S>
TensorMap Weights<S>::to_tensors() const {
  TensorMap out;
  visit_weights(*this, [&](const std::string& name, const auto& member) {
    using M = std::decay_t<decltype(member)>;
    std::vector<std::int64_t> shape;
    if constexpr (M::RowsAtCompileTime == 1)
      shape = {member.cols()};
    else
      shape = {member.rows(), member.cols()};
    Tensor t = Tensor::zeros(shape);
    Eigen::Map<Matrix<float>>(t.data.data(), member.rows(), member.cols()) =
        member.template cast<float>();
    out.emplace(name, std::move(t));
  });
  return out;
}

template <typename S>
Matrix<S> forward(const Weights<S>& w, const ToyConfig& cfg, std::span<const Token> tokens) {
  const Matrix<S> f = run_trunk<S>(w, cfg, tokens, nullptr);
  return (f * w.head_w).rowwise() + w.head_b;
}

template <typename S>
RowVector<S> forward_last(const Weights<S>& w, const ToyConfig& cfg,
                          std::span<const Token> tokens) {
  const Matrix<S> f = run_trunk<S>(w, cfg, tokens, nullptr);
  return f.row(f.rows() - 1) * w.head_w + w.head_b;
}

template <typename S>
S batch_loss(const Weights<S>& w, const ToyConfig& cfg, std::span<const Example> batch,
             Weights<S>* grad) {
  if (batch.empty()) throw DataError("empty batch");
  std::size_t count = 0;
  for (const auto& ex : batch) {
    if (ex.prompt.empty()) throw DataError("example with empty prompt");
    count += ex.answer.size();
  }
  if (count == 0) throw DataError("batch has no answer tokens");

  double total = 0.0;
  std::vector<Token> seq;
  for (const auto& ex : batch) {
    seq.assign(ex.prompt.begin(), ex.prompt.end());
    seq.insert(seq.end(), ex.answer.begin(), ex.answer.end());
    const std::span<const Token> inputs(seq.data(), seq.size() - 1);
    ForwardCache<S> cache;
    Matrix<S> f = run_trunk<S>(w, cfg, inputs, grad ? &cache : nullptr);
    const auto first = static_cast<Eigen::Index>(ex.prompt.size()) - 1;
    const auto n_ans = static_cast<Eigen::Index>(ex.answer.size());
    // Only answer positions need logits.
    const Matrix<S> logits =
        (f.middleRows(first, n_ans) * w.head_w).rowwise() + w.head_b;
    Matrix<S> dlogits;
    if (grad) dlogits.setZero(f.rows(), cfg.vocab_size);
    for (Eigen::Index r = 0; r < n_ans; ++r) {
      const auto target = seq[static_cast<std::size_t>(first + r + 1)];
      const S m = logits.row(r).maxCoeff();
      const RowVector<S> e = (logits.row(r).array() - m).exp().matrix();
      const S z = e.sum();
      total += static_cast<double>(m + std::log(z) - logits(r, target));
      if (grad) {
        dlogits.row(first + r) = e / (z * static_cast<S>(count));
        dlogits(first + r, target) -= S(1) / static_cast<S>(count);
      }
    }
    if (grad) {
      cache.f = std::move(f);
      backward<S>(w, cfg, inputs, cache, dlogits, *grad);
    }
  }
  return static_cast<S>(total / static_cast<double>(count));
}

std::vector<LogitVector> forward(const TensorMap& params, const ToyConfig& cfg,
                                 std::span<const Token> tokens) {
  const auto w = Weights<float>::from_tensors(params, cfg);
  const Matrix<float> logits = forward<float>(w, cfg, tokens);
  std::vector<LogitVector> rows;
  rows.reserve(static_cast<std::size_t>(logits.rows()));
  for (Eigen::Index t = 0; t < logits.rows(); ++t) rows.emplace_back(logits.row(t).transpose());
  return rows;
}

double loss(const TensorMap& params, const ToyConfig& cfg, std::span<const Example> batch) {
  return batch_loss<float>(Weights<float>::from_tensors(params, cfg), cfg, batch, nullptr);
}

double loss_and_grad(const TensorMap& params, const ToyConfig& cfg,
                     std::span<const Example> batch, TensorMap& grad) {
  const auto w = Weights<float>::from_tensors(params, cfg);
  auto g = Weights<float>::zeros_like(cfg);
  const double value = batch_loss<float>(w, cfg, batch, &g);
  grad = g.to_tensors();
  return value;
}

OptimizerConfig OptimizerConfig::large_model_preset() {
  OptimizerConfig opt;
  opt.learning_rate = 3e-5;
  opt.batch_size = 128;
  return opt;
}

void validate(const OptimizerConfig& opt) {
  if (!(opt.beta1 >= 0 && opt.beta1 < 1) || !(opt.beta2 >= 0 && opt.beta2 < 1))
    throw DataError("betas must lie in [0, 1)");
  if (!(opt.learning_rate >= 0) || !std::isfinite(opt.learning_rate))
    throw DataError("learning_rate must be finite and non-negative");
  if (!(opt.eps > 0)) throw DataError("eps must be positive");
  if (!(opt.weight_decay >= 0)) throw DataError("weight_decay must be non-negative");
  if (opt.batch_size < 1) throw DataError("batch_size must be >= 1");
}

TrainState TrainState::fresh(TensorMap params) {
  TrainState s;
  for (const auto& [name, t] : params) {
    s.first_moments.emplace(name, Tensor::zeros(t.shape));
    s.second_moments.emplace(name, Tensor::zeros(t.shape));
  }
  s.params = std::move(params);
  return s;
}

void adamw_step(TrainState& state, const TensorMap& grad, const OptimizerConfig& opt) {
  require_compat(state.params, grad);
  require_compat(state.params, state.first_moments);
  require_compat(state.params, state.second_moments);
  ++state.step_count;
  const auto t = static_cast<double>(state.step_count);
  const auto b1 = static_cast<float>(opt.beta1);
  const auto b2 = static_cast<float>(opt.beta2);
  const auto lr = static_cast<float>(opt.learning_rate);
  const auto decay = static_cast<float>(1.0 - opt.learning_rate * opt.weight_decay);
  const auto eps = static_cast<float>(opt.eps);
  const auto c1 = static_cast<float>(1.0 - std::pow(opt.beta1, t));
  const auto c2 = static_cast<float>(1.0 - std::pow(opt.beta2, t));
  for (auto& [name, p] : state.params) {
    auto g = grad.at(name).array();
    auto m = state.first_moments.at(name).array();
    auto v = state.second_moments.at(name).array();
    auto x = p.array();
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g.square();
    x *= decay;
    x -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

TrainOutput train_epochs(TrainState& state, const ToyConfig& cfg,
                         std::span<const Example> dataset, const OptimizerConfig& opt,
                         int epochs, std::uint64_t shuffle_seed) {
  validate(opt);
  if (dataset.empty()) throw DataError("training dataset is empty");
  if (epochs < 1) throw DataError("epochs must be >= 1");
  TrainOutput out;
  std::vector<std::size_t> order(dataset.size());
  std::vector<Example> batch;
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    CounterRng rng(shuffle_seed, static_cast<std::uint64_t>(epoch));
    shuffle(order, rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(opt.batch_size)) {
      const auto end = std::min(order.size(), start + static_cast<std::size_t>(opt.batch_size));
      batch.clear();
      for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
      TensorMap grad;
      const double value = loss_and_grad(state.params, cfg, batch, grad);
      if (!std::isfinite(value))
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", step " +
                           std::to_string(state.step_count + 1));
      adamw_step(state, grad, opt);
      out.log.push_back({epoch, state.step_count, value});
    }
    out.checkpoints.push_back(state.params);
  }
  return out;
}

GradCheckResult grad_check(const TensorMap& params, const ToyConfig& cfg,
                           std::span<const Example> batch, const GradCheckOptions& options) {
  TensorMap analytic;
  loss_and_grad(params, cfg, batch, analytic);

  std::vector<std::pair<std::string, std::size_t>> all;
  for (const auto& [name, t] : params)
    for (std::size_t i = 0; i < t.data.size(); ++i) all.emplace_back(name, i);
  CounterRng rng(options.seed, 0x67726164ULL);
  const auto wanted = std::min<std::size_t>(static_cast<std::size_t>(options.coordinates), all.size());
  // Partial Fisher-Yates: the first `wanted` slots become a uniform sample.
  for (std::size_t i = 0; i < wanted; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.below(all.size() - i));
    std::swap(all[i], all[j]);
  }

  auto base = Weights<double>::from_tensors(params, cfg);
  GradCheckResult result;
  for (std::size_t c = 0; c < wanted; ++c) {
    const auto& [name, index] = all[c];
    double* slot = nullptr;
    visit_weights(base, [&](const std::string& n, auto& member) {
      if (n == name) slot = member.data() + index;
    });
    const double saved = *slot;
    *slot = saved + options.step;
    const double up = batch_loss<double>(base, cfg, batch, nullptr);
    *slot = saved - options.step;
    const double down = batch_loss<double>(base, cfg, batch, nullptr);
    *slot = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic.at(name).data[index];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.abs_tolerance});
    result.max_relative_error = std::max(result.max_relative_error, std::abs(a - numeric) / denom);
    ++result.coordinates_checked;
  }
  return result;
}

ToyProvider::ToyProvider(const TensorMap& params, const ToyConfig& cfg)
    : cfg_(cfg), weights_(Weights<float>::from_tensors(params, cfg)) {}

LogitVector ToyProvider::next_logits(std::span<const Token> prefix) const {
  return forward_last<float>(weights_, cfg_, prefix).transpose();
}

template struct Weights<float>;
template struct Weights<double>;
template Matrix<float> forward<float>(const Weights<float>&, const ToyConfig&, std::span<const Token>);
template Matrix<double> forward<double>(const Weights<double>&, const ToyConfig&, std::span<const Token>);
template RowVector<float> forward_last<float>(const Weights<float>&, const ToyConfig&, std::span<const Token>);
template RowVector<double> forward_last<double>(const Weights<double>&, const ToyConfig&, std::span<const Token>);
template float batch_loss<float>(const Weights<float>&, const ToyConfig&, std::span<const Example>, Weights<float>*);
template double batch_loss<double>(const Weights<double>&, const ToyConfig&, std::span<const Example>, Weights<double>*);

}  // namespace epicode
