#include "clinlm/encoder.hpp"

#include <cmath>
#include <algorithm>
#include <cstring>
#include <limits>
#include <stdexcept>

namespace clinlm {

namespace {

constexpr double kInitStd = 0.02;
const double kInvSqrt2 = 1.0 / std::sqrt(2.0);
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * M_PI);

Matrix init_uniform(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  // Uniform on [-a, a] has std a / sqrt(3).
  const double half_width = kInitStd * std::sqrt(3.0);
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = uniform_symmetric(rng, half_width);
  }
  return m;
}

Linear init_linear(int in, int out, Rng& rng) {
  return {init_uniform(in, out, rng), Matrix::Zero(1, out)};
}

LayerNormParams init_norm(int dim) { return {Matrix::Ones(1, dim), Matrix::Zero(1, dim)}; }

Matrix affine(const Matrix& x, const Linear& l) {
  Matrix y = x * l.weight;
  y.rowwise() += l.bias.row(0);
  return y;
}

void affine_backward(const Matrix& x, const Matrix& dy, const Linear& l, Linear& g, Matrix* dx) {
  g.weight.noalias() += x.transpose() * dy;
  g.bias += dy.colwise().sum();
  if (dx != nullptr) *dx = dy * l.weight.transpose();
}

Matrix layer_norm(const Matrix& x, const LayerNormParams& p, double eps, LayerNormCache& cache) {
  const auto dim = static_cast<double>(x.cols());
  const Eigen::VectorXd mean = x.rowwise().mean();
  Matrix centered = x.colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().sum() / dim;
  cache.inverse_std = (var.array() + eps).rsqrt();
  cache.normalized = centered.array().colwise() * cache.inverse_std.array();
  Matrix y = cache.normalized.array().rowwise() * p.gamma.row(0).array();
  y.rowwise() += p.beta.row(0);
  return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormParams& p, const LayerNormCache& c,
                           LayerNormParams& g) {
  g.gamma += (dy.array() * c.normalized.array()).matrix().colwise().sum();
  g.beta += dy.colwise().sum();
  const Matrix dxhat = dy.array().rowwise() * p.gamma.row(0).array();
  const auto dim = static_cast<double>(dy.cols());
  const Eigen::VectorXd sum_d = dxhat.rowwise().sum();
  const Eigen::VectorXd sum_dx = (dxhat.array() * c.normalized.array()).rowwise().sum();
  Matrix dx = (dim * dxhat.array()).matrix();
  dx.colwise() -= sum_d;
  dx -= (c.normalized.array().colwise() * sum_dx.array()).matrix();
  dx = (dx.array().colwise() * (c.inverse_std.array() / dim)).matrix();
  return dx;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_grad(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

Matrix dropout_mask(Eigen::Index rows, Eigen::Index cols, double rate, Rng& rng) {
  Matrix m(rows, cols);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = uniform01(rng) < rate ? 0.0 : keep_scale;
  }
  return m;
}

void apply_mask(Matrix& x, const Matrix& mask) {
  if (mask.size() != 0) x.array() *= mask.array();
}

template <class P, class M>
std::vector<std::pair<std::string, M*>> collect_tensors(P& p) {
  std::vector<std::pair<std::string, M*>> out;
  auto add = [&](std::string name, M& m) { out.emplace_back(std::move(name), &m); };
  auto add_linear = [&](const std::string& prefix, auto& l) {
    add(prefix + ".weight", l.weight);
    add(prefix + ".bias", l.bias);
  };
  auto add_norm = [&](const std::string& prefix, auto& n) {
    add(prefix + ".gamma", n.gamma);
    add(prefix + ".beta", n.beta);
  };
  add("embeddings.token", p.token_embedding);
  add("embeddings.position", p.position_embedding);
  add("embeddings.segment", p.segment_embedding);
  add_norm("embeddings.norm", p.embedding_norm);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    const std::string prefix = "layer." + std::to_string(i);
    add_linear(prefix + ".attention.query", l.query);
    add_linear(prefix + ".attention.key", l.key);
    add_linear(prefix + ".attention.value", l.value);
    add_linear(prefix + ".attention.output", l.attention_output);
    add_norm(prefix + ".attention.norm", l.attention_norm);
    add_linear(prefix + ".ff.in", l.ff_in);
    add_linear(prefix + ".ff.out", l.ff_out);
    add_norm(prefix + ".ff.norm", l.ff_norm);
  }
  add_linear("mlm.transform", p.mlm_transform);
  add_norm("mlm.norm", p.mlm_norm);
  add_linear("mlm.output", p.mlm_output);
  for (auto& [name, head] : p.heads) add_linear("head." + name, head.projection);
  return out;
}

std::vector<Matrix> zero_like(std::span<const Matrix> hidden) {
  std::vector<Matrix> out;
  out.reserve(hidden.size());
  for (const auto& h : hidden) out.push_back(Matrix::Zero(h.rows(), h.cols()));
  return out;
}

Matrix first_positions(std::span<const Matrix> hidden) {
  if (hidden.empty()) throw std::invalid_argument("no hidden states");
  Matrix cls(static_cast<Eigen::Index>(hidden.size()), hidden.front().cols());
  for (std::size_t b = 0; b < hidden.size(); ++b) cls.row(static_cast<Eigen::Index>(b)) = hidden[b].row(0);
  return cls;
}

/// Cross-entropy of one logit row; writes softmax - onehot into grad.
using RowRef = Eigen::Ref<Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;
using ConstRowRef = Eigen::Ref<const Eigen::RowVectorXd, 0, Eigen::InnerStride<>>;

double softmax_xent(const ConstRowRef& logits, int target, RowRef grad) {
  const double mx = logits.maxCoeff();
  grad = (logits.array() - mx).exp();
  const double z = grad.sum();
  grad /= z;
  const double loss = std::log(z) + mx - logits(target);
  grad(target) -= 1.0;
  return loss;
}

void check_head(const TaskHead& head, HeadKind expected) {
  if (head.n_labels() <= 0) throw std::invalid_argument("task head needs at least one label");
  if (head.kind != expected) throw std::invalid_argument("task head kind mismatch");
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < kNumSpecials) throw std::invalid_argument("vocab_size must cover the 5 special tokens");
  if (hidden_dim <= 0 || n_layers <= 0 || n_heads <= 0 || ff_dim <= 0) {
    throw std::invalid_argument("encoder dimensions must be positive");
  }
  if (hidden_dim % n_heads != 0) throw std::invalid_argument("hidden_dim must be divisible by n_heads");
  if (max_positions < 1) throw std::invalid_argument("max_positions must be at least 1");
  if (type_vocab_size < 1) throw std::invalid_argument("type_vocab_size must be at least 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw std::invalid_argument("dropout_rate must be in [0, 1)");
  if (layernorm_epsilon <= 0.0) throw std::invalid_argument("layernorm_epsilon must be positive");
}

EncoderConfig EncoderConfig::base_preset(int vocab_size) {
  EncoderConfig c;
  c.vocab_size = vocab_size;
  c.hidden_dim = 768;
  c.n_layers = 12;
  c.n_heads = 12;
  c.ff_dim = 3072;
  c.max_positions = 512;
  c.dropout_rate = 0.1;
  return c;
}

std::string_view to_string(HeadKind kind) {
  switch (kind) {
    case HeadKind::Token:
      return "token";
    case HeadKind::Pair:
      return "pair";
    case HeadKind::MultiLabel:
      return "multilabel";
  }
  return "token";
}

HeadKind parse_head_kind(std::string_view text) {
  if (text == "token") return HeadKind::Token;
  if (text == "pair") return HeadKind::Pair;
  if (text == "multilabel") return HeadKind::MultiLabel;
  throw std::invalid_argument("unknown head kind: " + std::string(text));
}

Parameters Parameters::initialize(const EncoderConfig& config, Rng& rng) {
  config.validate();
  Parameters p;
  p.config = config;
  const int h = config.hidden_dim;
  p.token_embedding = init_uniform(config.vocab_size, h, rng);
  p.position_embedding = init_uniform(config.max_positions, h, rng);
  p.segment_embedding = init_uniform(config.type_vocab_size, h, rng);
  p.embedding_norm = init_norm(h);
  for (int i = 0; i < config.n_layers; ++i) {
    EncoderLayer l;
    l.query = init_linear(h, h, rng);
    l.key = init_linear(h, h, rng);
    l.value = init_linear(h, h, rng);
    l.attention_output = init_linear(h, h, rng);
    l.attention_norm = init_norm(h);
    l.ff_in = init_linear(h, config.ff_dim, rng);
    l.ff_out = init_linear(config.ff_dim, h, rng);
    l.ff_norm = init_norm(h);
    p.layers.push_back(std::move(l));
  }
  p.mlm_transform = init_linear(h, h, rng);
  p.mlm_norm = init_norm(h);
  p.mlm_output = init_linear(h, config.vocab_size, rng);
  return p;
}

Parameters Parameters::zeros_like(const Parameters& like) {
  Parameters p = like;
  for (auto& [name, m] : p.tensors()) m->setZero();
  return p;
}

TaskHead& Parameters::add_head(const std::string& name, HeadKind kind, int n_labels, Rng& rng) {
  if (n_labels <= 0) throw std::invalid_argument("task head '" + name + "' needs n_labels > 0");
  TaskHead head{kind, init_linear(config.hidden_dim, n_labels, rng)};
  auto [it, inserted] = heads.insert_or_assign(name, std::move(head));
  return it->second;
}

const TaskHead& Parameters::head(const std::string& name) const {
  auto it = heads.find(name);
  if (it == heads.end()) throw std::invalid_argument("no task head named '" + name + "'");
  return it->second;
}

std::vector<std::pair<std::string, Matrix*>> Parameters::tensors() {
  return collect_tensors<Parameters, Matrix>(*this);
}

std::vector<std::pair<std::string, const Matrix*>> Parameters::tensors() const {
  return collect_tensors<const Parameters, const Matrix>(*this);
}

std::size_t Parameters::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, m] : tensors()) n += static_cast<std::size_t>(m->size());
  return n;
}

void add_scaled(Parameters& dst, const Parameters& src, double factor) {
  auto d = dst.tensors();
  const auto s = src.tensors();
  if (d.size() != s.size()) throw std::invalid_argument("parameter sets differ in tensor count");
  for (std::size_t i = 0; i < d.size(); ++i) {
    if (d[i].first != s[i].first || d[i].second->rows() != s[i].second->rows() ||
        d[i].second->cols() != s[i].second->cols()) {
      throw std::invalid_argument("parameter shape mismatch at " + d[i].first);
    }
    d[i].second->noalias() += factor * *s[i].second;
  }
}

void scale(Parameters& params, double factor) {
  for (auto& [name, m] : params.tensors()) *m *= factor;
}

bool bit_identical(const Parameters& a, const Parameters& b) {
  const auto ta = a.tensors();
  const auto tb = b.tensors();
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    const Matrix& x = *ta[i].second;
    const Matrix& y = *tb[i].second;
    if (ta[i].first != tb[i].first || x.rows() != y.rows() || x.cols() != y.cols()) return false;
    if (std::memcmp(x.data(), y.data(), sizeof(double) * static_cast<std::size_t>(x.size())) != 0) return false;
  }
  return true;
}

Batch Batch::from_rows(std::span<const std::vector<TokenId>> rows, std::span<const std::vector<int>> segments) {
  if (!segments.empty() && segments.size() != rows.size()) {
    throw std::invalid_argument("segment rows do not match token rows");
  }
  Batch b;
  b.rows = static_cast<int>(rows.size());
  for (const auto& r : rows) b.length = std::max(b.length, static_cast<int>(r.size()));
  const auto n = static_cast<std::size_t>(b.rows) * static_cast<std::size_t>(b.length);
  b.ids.assign(n, kPadId);
  b.mask.assign(n, 0);
  b.segments.assign(n, 0);
  for (int i = 0; i < b.rows; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    if (!segments.empty() && segments[static_cast<std::size_t>(i)].size() != r.size()) {
      throw std::invalid_argument("segment row length differs from token row");
    }
    for (std::size_t t = 0; t < r.size(); ++t) {
      const auto k = static_cast<std::size_t>(i * b.length) + t;
      b.ids[k] = r[t];
      b.mask[k] = 1;
      if (!segments.empty()) b.segments[k] = segments[static_cast<std::size_t>(i)][t];
    }
  }
  return b;
}

void Batch::validate(const EncoderConfig& config) const {
  if (rows < 1 || length < 1) throw std::invalid_argument("batch must have at least one row and position");
  if (length > config.max_positions) {
    throw std::invalid_argument("sequence length " + std::to_string(length) + " exceeds max_positions " +
                                std::to_string(config.max_positions));
  }
  const auto n = static_cast<std::size_t>(rows) * static_cast<std::size_t>(length);
  if (ids.size() != n || mask.size() != n || segments.size() != n) {
    throw std::invalid_argument("batch arrays do not match rows x length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= config.vocab_size) throw std::invalid_argument("token id out of range");
    if (mask[i] != 0 && mask[i] != 1) throw std::invalid_argument("attention mask must be 0/1");
    if (segments[i] < 0 || segments[i] >= config.type_vocab_size) {
      throw std::invalid_argument("segment id out of range");
    }
  }
}

ForwardResult forward(const Parameters& params, const Batch& batch, bool train_mode, Rng& rng) {
  const auto& cfg = params.config;
  batch.validate(cfg);
  const int T = batch.length;
  const int H = cfg.hidden_dim;
  const int d = cfg.head_dim();
  const double scale_qk = 1.0 / std::sqrt(static_cast<double>(d));
  const bool use_dropout = train_mode && cfg.dropout_rate > 0.0;

  ForwardResult out;
  out.hidden.reserve(static_cast<std::size_t>(batch.rows));
  out.cache.resize(static_cast<std::size_t>(batch.rows));

  for (int b = 0; b < batch.rows; ++b) {
    RowCache& rc = out.cache[static_cast<std::size_t>(b)];
    Matrix x(T, H);
    for (int t = 0; t < T; ++t) {
      x.row(t) = params.token_embedding.row(batch.id(b, t)) + params.position_embedding.row(t) +
                 params.segment_embedding.row(batch.segment(b, t));
    }
    x = layer_norm(x, params.embedding_norm, cfg.layernorm_epsilon, rc.embedding_norm);
    if (use_dropout) rc.embedding_dropout = dropout_mask(T, H, cfg.dropout_rate, rng);
    apply_mask(x, rc.embedding_dropout);

    rc.layers.resize(params.layers.size());
    for (std::size_t li = 0; li < params.layers.size(); ++li) {
      const EncoderLayer& layer = params.layers[li];
      LayerCache& lc = rc.layers[li];
      lc.input = x;
      lc.query = affine(x, layer.query);
      lc.key = affine(x, layer.key);
      lc.value = affine(x, layer.value);
      lc.context = Matrix::Zero(T, H);
      lc.attention.resize(static_cast<std::size_t>(cfg.n_heads));
      for (int h = 0; h < cfg.n_heads; ++h) {
        const auto qh = lc.query.middleCols(h * d, d);
        const auto kh = lc.key.middleCols(h * d, d);
        Matrix scores = (qh * kh.transpose()) * scale_qk;
        Matrix& probs = lc.attention[static_cast<std::size_t>(h)];
        probs = Matrix::Zero(T, T);
        for (int i = 0; i < T; ++i) {
          double mx = -std::numeric_limits<double>::infinity();
          for (int j = 0; j < T; ++j) {
            if (batch.mask_at(b, j) != 0) mx = std::max(mx, scores(i, j));
          }
          if (!std::isfinite(mx)) continue;  // no visible keys
          double z = 0.0;
          for (int j = 0; j < T; ++j) {
            if (batch.mask_at(b, j) != 0) {
              probs(i, j) = std::exp(scores(i, j) - mx);
              z += probs(i, j);
            }
          }
          probs.row(i) /= z;
        }
        lc.context.middleCols(h * d, d).noalias() = probs * lc.value.middleCols(h * d, d);
      }
      Matrix attn = affine(lc.context, layer.attention_output);
      if (use_dropout) lc.attention_dropout = dropout_mask(T, H, cfg.dropout_rate, rng);
      apply_mask(attn, lc.attention_dropout);
      lc.attention_block = layer_norm(lc.input + attn, layer.attention_norm, cfg.layernorm_epsilon, lc.attention_norm);

      lc.ff_pre = affine(lc.attention_block, layer.ff_in);
      lc.ff_act = lc.ff_pre.unaryExpr([](double v) { return gelu(v); });
      Matrix ff = affine(lc.ff_act, layer.ff_out);
      if (use_dropout) lc.ff_dropout = dropout_mask(T, H, cfg.dropout_rate, rng);
      apply_mask(ff, lc.ff_dropout);
      x = layer_norm(lc.attention_block + ff, layer.ff_norm, cfg.layernorm_epsilon, lc.ff_norm);
    }
    out.hidden.push_back(std::move(x));
  }
  return out;
}

void backward(const Parameters& params, const Batch& batch, const ForwardResult& fwd,
              std::span<const Matrix> d_hidden, Parameters& grads) {
  const auto& cfg = params.config;
  const int d = cfg.head_dim();
  const double scale_qk = 1.0 / std::sqrt(static_cast<double>(d));
  if (d_hidden.size() != static_cast<std::size_t>(batch.rows)) {
    throw std::invalid_argument("hidden-state gradient does not match batch rows");
  }

  for (int b = 0; b < batch.rows; ++b) {
    const RowCache& rc = fwd.cache[static_cast<std::size_t>(b)];
    Matrix dx = d_hidden[static_cast<std::size_t>(b)];
    for (std::size_t li = params.layers.size(); li-- > 0;) {
      const EncoderLayer& layer = params.layers[li];
      EncoderLayer& g = grads.layers[li];
      const LayerCache& lc = rc.layers[li];

      const Matrix dsum2 = layer_norm_backward(dx, layer.ff_norm, lc.ff_norm, g.ff_norm);
      Matrix dff = dsum2;
      apply_mask(dff, lc.ff_dropout);
      Matrix dact;
      affine_backward(lc.ff_act, dff, layer.ff_out, g.ff_out, &dact);
      const Matrix dpre = dact.cwiseProduct(lc.ff_pre.unaryExpr([](double v) { return gelu_grad(v); }));
      Matrix dblock_ff;
      affine_backward(lc.attention_block, dpre, layer.ff_in, g.ff_in, &dblock_ff);
      const Matrix dblock = dsum2 + dblock_ff;

      const Matrix dsum1 = layer_norm_backward(dblock, layer.attention_norm, lc.attention_norm, g.attention_norm);
      Matrix dattn = dsum1;
      apply_mask(dattn, lc.attention_dropout);
      Matrix dcontext;
      affine_backward(lc.context, dattn, layer.attention_output, g.attention_output, &dcontext);

      Matrix dq = Matrix::Zero(lc.query.rows(), lc.query.cols());
      Matrix dk = Matrix::Zero(lc.key.rows(), lc.key.cols());
      Matrix dv = Matrix::Zero(lc.value.rows(), lc.value.cols());
      for (int h = 0; h < cfg.n_heads; ++h) {
        const Matrix& probs = lc.attention[static_cast<std::size_t>(h)];
        const auto dctx = dcontext.middleCols(h * d, d);
        const Matrix dprobs = dctx * lc.value.middleCols(h * d, d).transpose();
        dv.middleCols(h * d, d).noalias() += probs.transpose() * dctx;
        const Eigen::VectorXd row_dot = (dprobs.array() * probs.array()).rowwise().sum();
        const Matrix dscores = (probs.array() * (dprobs.colwise() - row_dot).array()).matrix() * scale_qk;
        dq.middleCols(h * d, d).noalias() += dscores * lc.key.middleCols(h * d, d);
        dk.middleCols(h * d, d).noalias() += dscores.transpose() * lc.query.middleCols(h * d, d);
      }
      Matrix dinput = dsum1;
      Matrix tmp;
      affine_backward(lc.input, dq, layer.query, g.query, &tmp);
      dinput += tmp;
      affine_backward(lc.input, dk, layer.key, g.key, &tmp);
      dinput += tmp;
      affine_backward(lc.input, dv, layer.value, g.value, &tmp);
      dinput += tmp;
      dx = std::move(dinput);
    }
    apply_mask(dx, rc.embedding_dropout);
    const Matrix demb = layer_norm_backward(dx, params.embedding_norm, rc.embedding_norm, grads.embedding_norm);
    for (int t = 0; t < batch.length; ++t) {
      grads.token_embedding.row(batch.id(b, t)) += demb.row(t);
      grads.position_embedding.row(t) += demb.row(t);
      grads.segment_embedding.row(batch.segment(b, t)) += demb.row(t);
    }
  }
}

namespace {

struct MlmHeadCache {
  Matrix gathered;
  Matrix pre;
  Matrix act;
  LayerNormCache norm;
  Matrix normed;
};

Matrix mlm_head_forward(const Parameters& params, std::span<const Matrix> hidden,
                        std::span<const MlmTarget> targets, MlmHeadCache& cache) {
  const int H = params.config.hidden_dim;
  cache.gathered.resize(static_cast<Eigen::Index>(targets.size()), H);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const auto& tg = targets[i];
    if (tg.row < 0 || static_cast<std::size_t>(tg.row) >= hidden.size() || tg.position < 0 ||
        tg.position >= hidden[static_cast<std::size_t>(tg.row)].rows()) {
      throw std::invalid_argument("masked-LM target position out of range");
    }
    if (tg.id < 0 || tg.id >= params.config.vocab_size) throw std::invalid_argument("masked-LM target id out of range");
    cache.gathered.row(static_cast<Eigen::Index>(i)) = hidden[static_cast<std::size_t>(tg.row)].row(tg.position);
  }
  cache.pre = affine(cache.gathered, params.mlm_transform);
  cache.act = cache.pre.unaryExpr([](double v) { return gelu(v); });
  cache.normed = layer_norm(cache.act, params.mlm_norm, params.config.layernorm_epsilon, cache.norm);
  return affine(cache.normed, params.mlm_output);
}

}  // namespace

Matrix mlm_logits(const Parameters& params, std::span<const Matrix> hidden, std::span<const MlmTarget> targets) {
  MlmHeadCache cache;
  return mlm_head_forward(params, hidden, targets, cache);
}

LossResult mlm_loss(const Parameters& params, const Batch& batch, std::span<const MlmTarget> targets,
                    bool train_mode, Rng& rng) {
  if (targets.empty()) throw std::invalid_argument("masked-LM loss needs at least one target position");
  const auto fwd = forward(params, batch, train_mode, rng);
  MlmHeadCache cache;
  const Matrix logits = mlm_head_forward(params, fwd.hidden, targets, cache);

  const auto n = static_cast<double>(targets.size());
  Matrix dlogits(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    total += softmax_xent(logits.row(i), targets[static_cast<std::size_t>(i)].id, dlogits.row(i));
  }
  dlogits /= n;

  LossResult result{total / n, Parameters::zeros_like(params), targets.size()};
  Parameters& g = result.grads;
  Matrix dnormed;
  affine_backward(cache.normed, dlogits, params.mlm_output, g.mlm_output, &dnormed);
  const Matrix dact = layer_norm_backward(dnormed, params.mlm_norm, cache.norm, g.mlm_norm);
  const Matrix dpre = dact.cwiseProduct(cache.pre.unaryExpr([](double v) { return gelu_grad(v); }));
  Matrix dgathered;
  affine_backward(cache.gathered, dpre, params.mlm_transform, g.mlm_transform, &dgathered);

  auto d_hidden = zero_like(fwd.hidden);
  for (std::size_t i = 0; i < targets.size(); ++i) {
    d_hidden[static_cast<std::size_t>(targets[i].row)].row(targets[i].position) +=
        dgathered.row(static_cast<Eigen::Index>(i));
  }
  backward(params, batch, fwd, d_hidden, g);
  return result;
}

double mlm_loss_value(const Parameters& params, const Batch& batch, std::span<const MlmTarget> targets) {
  if (targets.empty()) throw std::invalid_argument("masked-LM loss needs at least one target position");
  Rng unused(0);
  const auto fwd = forward(params, batch, false, unused);
  const Matrix logits = mlm_logits(params, fwd.hidden, targets);
  double total = 0.0;
  Eigen::RowVectorXd scratch(logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    total += softmax_xent(logits.row(i), targets[static_cast<std::size_t>(i)].id, scratch);
  }
  return total / static_cast<double>(targets.size());
}

std::vector<Matrix> head_token_classify(const TaskHead& head, std::span<const Matrix> hidden) {
  check_head(head, HeadKind::Token);
  std::vector<Matrix> out;
  out.reserve(hidden.size());
  for (const auto& h : hidden) out.push_back(affine(h, head.projection));
  return out;
}

Matrix head_pair_classify(const TaskHead& head, std::span<const Matrix> hidden) {
  check_head(head, HeadKind::Pair);
  return affine(first_positions(hidden), head.projection);
}

Matrix head_multilabel(const TaskHead& head, std::span<const Matrix> hidden) {
  check_head(head, HeadKind::MultiLabel);
  const Matrix z = affine(first_positions(hidden), head.projection);
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

LossResult token_classification_loss(const Parameters& params, const std::string& head_name, const Batch& batch,
                                      std::span<const int> labels, bool train_mode, Rng& rng) {
  const TaskHead& head = params.head(head_name);
  if (labels.size() != batch.ids.size()) throw std::invalid_argument("token labels do not match batch shape");
  const auto fwd = forward(params, batch, train_mode, rng);
  const auto logits = head_token_classify(head, fwd.hidden);

  std::size_t count = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != kIgnoreLabel && batch.mask[i] != 0) {
      if (labels[i] < 0 || labels[i] >= head.n_labels()) throw std::invalid_argument("token label out of range");
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument("token classification batch has no labeled positions");

  LossResult result{0.0, Parameters::zeros_like(params), count};
  TaskHead& g = result.grads.heads.at(head_name);
  std::vector<Matrix> d_hidden;
  double total = 0.0;
  for (int b = 0; b < batch.rows; ++b) {
    const Matrix& lg = logits[static_cast<std::size_t>(b)];
    Matrix dlogits = Matrix::Zero(lg.rows(), lg.cols());
    for (int t = 0; t < batch.length; ++t) {
      const auto k = static_cast<std::size_t>(b * batch.length + t);
      if (labels[k] == kIgnoreLabel || batch.mask[k] == 0) continue;
      total += softmax_xent(lg.row(t), labels[k], dlogits.row(t));
    }
    dlogits /= static_cast<double>(count);
    Matrix dh;
    affine_backward(fwd.hidden[static_cast<std::size_t>(b)], dlogits, head.projection, g.projection, &dh);
    d_hidden.push_back(std::move(dh));
  }
  result.loss = total / static_cast<double>(count);
  backward(params, batch, fwd, d_hidden, result.grads);
  return result;
}

LossResult pair_classification_loss(const Parameters& params, const std::string& head_name, const Batch& batch,
                                    std::span<const int> labels, bool train_mode, Rng& rng) {
  const TaskHead& head = params.head(head_name);
  if (labels.size() != static_cast<std::size_t>(batch.rows)) {
    throw std::invalid_argument("one class label per row is required");
  }
  const auto fwd = forward(params, batch, train_mode, rng);
  const Matrix cls = first_positions(fwd.hidden);
  const Matrix logits = head_pair_classify(head, fwd.hidden);
  Matrix dlogits(logits.rows(), logits.cols());
  double total = 0.0;
  for (Eigen::Index b = 0; b < logits.rows(); ++b) {
    const int y = labels[static_cast<std::size_t>(b)];
    if (y < 0 || y >= head.n_labels()) throw std::invalid_argument("class label out of range");
    total += softmax_xent(logits.row(b), y, dlogits.row(b));
  }
  const auto n = static_cast<double>(batch.rows);
  dlogits /= n;

  LossResult result{total / n, Parameters::zeros_like(params), static_cast<std::size_t>(batch.rows)};
  Matrix dcls;
  affine_backward(cls, dlogits, head.projection, result.grads.heads.at(head_name).projection, &dcls);
  auto d_hidden = zero_like(fwd.hidden);
  for (int b = 0; b < batch.rows; ++b) d_hidden[static_cast<std::size_t>(b)].row(0) = dcls.row(b);
  backward(params, batch, fwd, d_hidden, result.grads);
  return result;
}

LossResult multilabel_loss(const Parameters& params, const std::string& head_name, const Batch& batch,
                           const Matrix& targets, bool train_mode, Rng& rng) {
  const TaskHead& head = params.head(head_name);
  check_head(head, HeadKind::MultiLabel);
  if (targets.rows() != batch.rows || targets.cols() != head.n_labels()) {
    throw std::invalid_argument("multi-label targets must be rows x n_labels");
  }
  const auto fwd = forward(params, batch, train_mode, rng);
  const Matrix cls = first_positions(fwd.hidden);
  const Matrix z = affine(cls, head.projection);
  const double n = static_cast<double>(z.size());
  double total = 0.0;
  Matrix dz(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    for (Eigen::Index j = 0; j < z.cols(); ++j) {
      const double v = z(i, j);
      const double y = targets(i, j);
      // softplus(v) - y * v, evaluated stably
      total += std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))) - y * v;
      dz(i, j) = (1.0 / (1.0 + std::exp(-v)) - y) / n;
    }
  }
  LossResult result{total / n, Parameters::zeros_like(params), static_cast<std::size_t>(batch.rows)};
  Matrix dcls;
  affine_backward(cls, dz, head.projection, result.grads.heads.at(head_name).projection, &dcls);
  auto d_hidden = zero_like(fwd.hidden);
  for (int b = 0; b < batch.rows; ++b) d_hidden[static_cast<std::size_t>(b)].row(0) = dcls.row(b);
  backward(params, batch, fwd, d_hidden, result.grads);
  return result;
}

}  // namespace clinlm
