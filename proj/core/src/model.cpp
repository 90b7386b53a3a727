#include "advchar/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "advchar/error.hpp"

namespace advchar {

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
T gelu(T u) {
  return T(0.5) * u * (T(1) + std::erf(u / std::numbers::sqrt2_v<T>));
}

template <typename T>
T gelu_derivative(T u) {
  const T cdf = T(0.5) * (T(1) + std::erf(u / std::numbers::sqrt2_v<T>));
  const T pdf = std::exp(T(-0.5) * u * u) / std::sqrt(T(2) * std::numbers::pi_v<T>);
  return cdf + u * pdf;
}

std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return "[" + std::to_string(rows) + "," + std::to_string(cols) + "]";
}

bool ends_with(std::string_view s, std::string_view suffix) {
  return s.size() >= suffix.size() &&
         s.substr(s.size() - suffix.size()) == suffix;
}

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (d_model < 1) fail("d_model must be positive");
  if (heads < 1) fail("heads must be positive");
  if (d_model % heads != 0) {
    fail("d_model " + std::to_string(d_model) + " is not divisible by heads " +
         std::to_string(heads));
  }
  if (layers < 1) fail("layers must be at least 1");
  if (d_ff < 1) fail("d_ff must be positive");
  if (max_len < 2) fail("max_len must be at least 2");
  if (num_classes < 2) fail("num_classes must be at least 2");
}

std::size_t expected_parameter_count(const ModelConfig& c,
                                     std::size_t vocab_size) {
  const std::size_t d = c.d_model;
  const std::size_t ff = c.d_ff;
  const std::size_t per_layer = 2 * d             // ln1
                                + 4 * (d * d + d)  // q, k, v, o
                                + 2 * d            // ln2
                                + d * ff + ff      // ff1
                                + ff * d + d;      // ff2
  return vocab_size * d + (c.max_len + 1) * d + c.layers * per_layer +
         d * c.num_classes + c.num_classes;
}

template <typename T>
ParameterSet<T> ParameterSet<T>::zeros(const ModelConfig& c,
                                       std::size_t vocab_size) {
  const int d = c.d_model;
  ParameterSet p;
  p.token_embedding = Matrix<T>::Zero(static_cast<Eigen::Index>(vocab_size), d);
  p.position_embedding = Matrix<T>::Zero(c.max_len + 1, d);
  p.layers.resize(static_cast<std::size_t>(c.layers));
  for (auto& l : p.layers) {
    l.ln1_scale = Matrix<T>::Zero(1, d);
    l.ln1_shift = Matrix<T>::Zero(1, d);
    l.wq = Matrix<T>::Zero(d, d);
    l.bq = Matrix<T>::Zero(1, d);
    l.wk = Matrix<T>::Zero(d, d);
    l.bk = Matrix<T>::Zero(1, d);
    l.wv = Matrix<T>::Zero(d, d);
    l.bv = Matrix<T>::Zero(1, d);
    l.wo = Matrix<T>::Zero(d, d);
    l.bo = Matrix<T>::Zero(1, d);
    l.ln2_scale = Matrix<T>::Zero(1, d);
    l.ln2_shift = Matrix<T>::Zero(1, d);
    l.ff1_w = Matrix<T>::Zero(d, c.d_ff);
    l.ff1_b = Matrix<T>::Zero(1, c.d_ff);
    l.ff2_w = Matrix<T>::Zero(c.d_ff, d);
    l.ff2_b = Matrix<T>::Zero(1, d);
  }
  p.head_weight = Matrix<T>::Zero(d, c.num_classes);
  p.head_bias = Matrix<T>::Zero(1, c.num_classes);
  return p;
}

template <typename T>
std::size_t ParameterSet<T>::count() const {
  std::size_t n = 0;
  for_each([&](auto, const Matrix<T>& m) { n += static_cast<std::size_t>(m.size()); });
  return n;
}

template <typename T>
void ParameterSet<T>::set_zero() {
  for_each([](auto, Matrix<T>& m) { m.setZero(); });
}

template <typename T>
void ParameterSet<T>::add(const ParameterSet& other) {
  std::vector<const Matrix<T>*> src;
  other.for_each([&](auto, const Matrix<T>& m) { src.push_back(&m); });
  std::size_t i = 0;
  for_each([&](auto, Matrix<T>& m) { m += *src[i++]; });
}

template <typename T>
void ParameterSet<T>::scale(T factor) {
  for_each([&](auto, Matrix<T>& m) { m *= factor; });
}

namespace detail {

template <typename T>
struct LayerTrace {
  Matrix<T> x_in;
  Matrix<T> a_hat, a;
  RowVector<T> rstd1;
  Matrix<T> q, k, v;
  std::vector<Matrix<T>> probs;
  Matrix<T> o;
  Matrix<T> x1;
  Matrix<T> b_hat, b;
  RowVector<T> rstd2;
  Matrix<T> u, g;
};

template <typename T>
struct ForwardTrace {
  std::vector<LayerTrace<T>> layers;
  Matrix<T> output;
};

}  // namespace detail

namespace {

template <typename T>
void layer_norm(const Matrix<T>& x, const Matrix<T>& scale,
                const Matrix<T>& shift, Matrix<T>& x_hat, RowVector<T>& rstd,
                Matrix<T>& y) {
  const Eigen::Index n = x.rows();
  const Eigen::Index d = x.cols();
  x_hat.resize(n, d);
  rstd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const T mean = x.row(i).mean();
    const T var = (x.row(i).array() - mean).square().mean();
    rstd(i) = T(1) / std::sqrt(var + T(kLayerNormEps));
    x_hat.row(i) = (x.row(i).array() - mean) * rstd(i);
  }
  y = (x_hat.array().rowwise() * scale.row(0).array()).rowwise() +
      shift.row(0).array();
}

// Returns dx; accumulates scale/shift gradients when non-null.
template <typename T>
Matrix<T> layer_norm_backward(const Matrix<T>& dy, const Matrix<T>& x_hat,
                              const RowVector<T>& rstd, const Matrix<T>& scale,
                              Matrix<T>* d_scale, Matrix<T>* d_shift) {
  if (d_scale) d_scale->row(0) += (dy.array() * x_hat.array()).colwise().sum().matrix();
  if (d_shift) d_shift->row(0) += dy.colwise().sum();
  const Matrix<T> dx_hat = dy.array().rowwise() * scale.row(0).array();
  Matrix<T> dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_dxh = dx_hat.row(i).mean();
    const T mean_dxh_xh = (dx_hat.row(i).array() * x_hat.row(i).array()).mean();
    dx.row(i) = rstd(i) * (dx_hat.row(i).array() - mean_dxh -
                           x_hat.row(i).array() * mean_dxh_xh);
  }
  return dx;
}

template <typename T>
void softmax_rows(Matrix<T>& s) {
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const T max = s.row(i).maxCoeff();
    s.row(i) = (s.row(i).array() - max).exp();
    s.row(i) /= s.row(i).sum();
  }
}

template <typename T>
void require_finite(const Matrix<T>& m, const std::string& where) {
  if (!m.allFinite()) {
    std::ostringstream msg;
    msg << "non-finite values in " << where << " (max |x| = "
        << m.cwiseAbs().maxCoeff() << ")";
    throw NumericalError(msg.str());
  }
}

}  // namespace

template <typename T>
BasicModel<T>::BasicModel(const ModelConfig& config, std::size_t vocab_size)
    : config_(config) {
  config_.validate();
  if (vocab_size < 4) {
    throw ConfigError("vocab_size must be at least 4, got " +
                      std::to_string(vocab_size));
  }
  params_ = ParameterSet<T>::zeros(config_, vocab_size);
  std::mt19937_64 rng(config_.seed);
  params_.for_each([&](std::string_view name, Matrix<T>& m) {
    if (ends_with(name, ".scale")) {
      m.setOnes();
    } else if (ends_with(name, ".shift") || m.rows() == 1) {
      m.setZero();
    } else {
      const double s = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
      std::uniform_real_distribution<double> dist(-s, s);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(dist(rng));
    }
  });
}

template <typename T>
BasicModel<T>::BasicModel(const ModelConfig& config, ParameterSet<T> params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const std::size_t v = vocab_size();
  if (v < 4) throw ConfigError("vocab_size must be at least 4");
  const ParameterSet<T> expected = ParameterSet<T>::zeros(config_, v);
  std::vector<std::pair<std::string, std::pair<Eigen::Index, Eigen::Index>>> shapes;
  expected.for_each([&](std::string_view name, const Matrix<T>& m) {
    shapes.push_back({std::string(name), {m.rows(), m.cols()}});
  });
  if (params_.layers.size() != expected.layers.size()) {
    throw ShapeError("parameter set has " + std::to_string(params_.layers.size()) +
                     " layers, config expects " + std::to_string(config_.layers));
  }
  std::size_t i = 0;
  params_.for_each([&](std::string_view name, const Matrix<T>& m) {
    const auto& [rows, cols] = shapes[i++].second;
    if (m.rows() != rows || m.cols() != cols) {
      throw ShapeError("tensor '" + std::string(name) + "' has shape " +
                       shape_string(m.rows(), m.cols()) + ", expected " +
                       shape_string(rows, cols));
    }
  });
}

Model init_model(const ModelConfig& config, std::size_t vocab_size) {
  return Model(config, vocab_size);
}

template <typename T>
EmbeddingSeq<T> BasicModel<T>::embed(std::span<const TokenId> tokens) const {
  if (tokens.empty()) throw ShapeError("cannot embed an empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(config_.max_len) + 1) {
    throw InputTooLongError("sequence of " + std::to_string(tokens.size()) +
                            " positions exceeds max_len + 1 = " +
                            std::to_string(config_.max_len + 1));
  }
  const auto n = static_cast<Eigen::Index>(tokens.size());
  EmbeddingSeq<T> e(n, config_.d_model);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TokenId id = tokens[static_cast<std::size_t>(i)];
    if (id < 0 || static_cast<std::size_t>(id) >= vocab_size()) {
      throw InvalidTokenError("token id " + std::to_string(id) +
                              " out of range for vocab size " +
                              std::to_string(vocab_size()));
    }
    e.row(i) = params_.token_embedding.row(id) + params_.position_embedding.row(i);
  }
  return e;
}

template <typename T>
void BasicModel<T>::check_input(const EmbeddingSeq<T>& e) const {
  if (e.rows() < 1 || e.cols() != config_.d_model) {
    throw ShapeError("embedding input has shape " + shape_string(e.rows(), e.cols()) +
                     ", expected [n+1," + std::to_string(config_.d_model) + "]");
  }
}

template <typename T>
Logits<T> BasicModel<T>::run_forward(const EmbeddingSeq<T>& e,
                                     detail::ForwardTrace<T>* trace) const {
  const int heads = config_.heads;
  const int dh = config_.head_dim();
  const T att_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Eigen::Index n = e.rows();

  Matrix<T> x = e;
  detail::LayerTrace<T> scratch;
  if (trace) trace->layers.resize(params_.layers.size());
  for (std::size_t l = 0; l < params_.layers.size(); ++l) {
    const LayerParams<T>& p = params_.layers[l];
    detail::LayerTrace<T>& t = trace ? trace->layers[l] : scratch;
    t.x_in = x;
    layer_norm(x, p.ln1_scale, p.ln1_shift, t.a_hat, t.rstd1, t.a);
    t.q = (t.a * p.wq).rowwise() + p.bq.row(0);
    t.k = (t.a * p.wk).rowwise() + p.bk.row(0);
    t.v = (t.a * p.wv).rowwise() + p.bv.row(0);
    t.o.resize(n, config_.d_model);
    t.probs.resize(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      Matrix<T> s = t.q.middleCols(h * dh, dh) *
                    t.k.middleCols(h * dh, dh).transpose() * att_scale;
      softmax_rows(s);
      t.o.middleCols(h * dh, dh) = s * t.v.middleCols(h * dh, dh);
      t.probs[static_cast<std::size_t>(h)] = std::move(s);
    }
    t.x1 = x + ((t.o * p.wo).rowwise() + p.bo.row(0));
    layer_norm(t.x1, p.ln2_scale, p.ln2_shift, t.b_hat, t.rstd2, t.b);
    t.u = (t.b * p.ff1_w).rowwise() + p.ff1_b.row(0);
    t.g = t.u.unaryExpr([](T v) { return gelu(v); });
    x = t.x1 + ((t.g * p.ff2_w).rowwise() + p.ff2_b.row(0));
    if (!x.allFinite()) require_finite(x, "encoder layer " + std::to_string(l));
  }
  Logits<T> z = x.row(0) * params_.head_weight + params_.head_bias.row(0);
  if (trace) trace->output = std::move(x);
  if (!z.allFinite()) require_finite(Matrix<T>(z), "logits");
  return z;
}

template <typename T>
void BasicModel<T>::run_backward(const detail::ForwardTrace<T>& trace,
                                 const Logits<T>& dz, EmbeddingSeq<T>* d_input,
                                 ParameterSet<T>* grads) const {
  const int heads = config_.heads;
  const int dh = config_.head_dim();
  const T att_scale = T(1) / std::sqrt(static_cast<T>(dh));
  const Eigen::Index n = trace.output.rows();

  if (grads) {
    grads->head_weight += trace.output.row(0).transpose() * dz;
    grads->head_bias.row(0) += dz;
  }
  Matrix<T> dx = Matrix<T>::Zero(n, config_.d_model);
  dx.row(0) = dz * params_.head_weight.transpose();

  for (std::size_t li = params_.layers.size(); li-- > 0;) {
    const LayerParams<T>& p = params_.layers[li];
    const detail::LayerTrace<T>& t = trace.layers[li];
    LayerParams<T>* gp = grads ? &grads->layers[li] : nullptr;

    // Feed-forward block: x2 = x1 + ff2(gelu(ff1(ln2(x1)))).
    const Matrix<T>& d_ff_out = dx;
    Matrix<T> dg = d_ff_out * p.ff2_w.transpose();
    Matrix<T> du = dg.array() * t.u.unaryExpr([](T v) { return gelu_derivative(v); }).array();
    if (gp) {
      gp->ff2_w += t.g.transpose() * d_ff_out;
      gp->ff2_b.row(0) += d_ff_out.colwise().sum();
      gp->ff1_w += t.b.transpose() * du;
      gp->ff1_b.row(0) += du.colwise().sum();
    }
    Matrix<T> db = du * p.ff1_w.transpose();
    Matrix<T> dx1 = dx + layer_norm_backward(db, t.b_hat, t.rstd2, p.ln2_scale,
                                             gp ? &gp->ln2_scale : nullptr,
                                             gp ? &gp->ln2_shift : nullptr);

    // Attention block: x1 = x + wo(attn(ln1(x))).
    Matrix<T> d_o = dx1 * p.wo.transpose();
    if (gp) {
      gp->wo += t.o.transpose() * dx1;
      gp->bo.row(0) += dx1.colwise().sum();
    }
    Matrix<T> dq(n, config_.d_model), dk(n, config_.d_model), dv(n, config_.d_model);
    for (int h = 0; h < heads; ++h) {
      const Matrix<T>& prob = t.probs[static_cast<std::size_t>(h)];
      const auto d_oh = d_o.middleCols(h * dh, dh);
      Matrix<T> dp = d_oh * t.v.middleCols(h * dh, dh).transpose();
      dv.middleCols(h * dh, dh) = prob.transpose() * d_oh;
      Matrix<T> ds = prob.array() *
                     (dp.array().colwise() - (dp.array() * prob.array()).rowwise().sum());
      dq.middleCols(h * dh, dh) = ds * t.k.middleCols(h * dh, dh) * att_scale;
      dk.middleCols(h * dh, dh) = ds.transpose() * t.q.middleCols(h * dh, dh) * att_scale;
    }
    if (gp) {
      gp->wq += t.a.transpose() * dq;
      gp->bq.row(0) += dq.colwise().sum();
      gp->wk += t.a.transpose() * dk;
      gp->bk.row(0) += dk.colwise().sum();
      gp->wv += t.a.transpose() * dv;
      gp->bv.row(0) += dv.colwise().sum();
    }
    Matrix<T> da = dq * p.wq.transpose() + dk * p.wk.transpose() + dv * p.wv.transpose();
    dx = dx1 + layer_norm_backward(da, t.a_hat, t.rstd1, p.ln1_scale,
                                   gp ? &gp->ln1_scale : nullptr,
                                   gp ? &gp->ln1_shift : nullptr);
  }
  if (!dx.allFinite()) require_finite(dx, "input gradient");
  if (d_input) *d_input = std::move(dx);
}

template <typename T>
T BasicModel<T>::evaluate_objective(const Logits<T>& z,
                                    const LogitObjective<T>& objective,
                                    Logits<T>& dz) const {
  dz = Logits<T>::Zero(z.size());
  const T value = objective(z, dz);
  if (!std::isfinite(value) || !dz.allFinite()) {
    std::ostringstream msg;
    msg << "objective produced a non-finite value (" << value << ") on logits ["
        << z << "]";
    throw NumericalError(msg.str());
  }
  return value;
}

template <typename T>
Logits<T> BasicModel<T>::forward_from_embeddings(const EmbeddingSeq<T>& e) const {
  check_input(e);
  return run_forward(e, nullptr);
}

template <typename T>
Logits<T> BasicModel<T>::forward(std::span<const TokenId> tokens) const {
  return forward_from_embeddings(embed(tokens));
}

template <typename T>
int BasicModel<T>::predict(std::span<const TokenId> tokens) const {
  return argmax(forward(tokens));
}

template <typename T>
EmbeddingSeq<T> BasicModel<T>::input_gradient(const EmbeddingSeq<T>& e,
                                              const LogitObjective<T>& objective,
                                              T* value, Logits<T>* logits) const {
  check_input(e);
  detail::ForwardTrace<T> trace;
  const Logits<T> z = run_forward(e, &trace);
  Logits<T> dz;
  const T v = evaluate_objective(z, objective, dz);
  EmbeddingSeq<T> grad;
  run_backward(trace, dz, &grad, nullptr);
  if (value) *value = v;
  if (logits) *logits = z;
  return grad;
}

template <typename T>
T BasicModel<T>::accumulate_gradients_from_embeddings(
    const EmbeddingSeq<T>& e, const LogitObjective<T>& objective,
    ParameterSet<T>& grads) const {
  check_input(e);
  detail::ForwardTrace<T> trace;
  const Logits<T> z = run_forward(e, &trace);
  Logits<T> dz;
  const T v = evaluate_objective(z, objective, dz);
  EmbeddingSeq<T> d_input;
  run_backward(trace, dz, &d_input, &grads);
  return v;
}

template <typename T>
T BasicModel<T>::accumulate_gradients(std::span<const TokenId> tokens,
                                      const LogitObjective<T>& objective,
                                      ParameterSet<T>& grads) const {
  const EmbeddingSeq<T> e = embed(tokens);
  detail::ForwardTrace<T> trace;
  const Logits<T> z = run_forward(e, &trace);
  Logits<T> dz;
  const T v = evaluate_objective(z, objective, dz);
  EmbeddingSeq<T> d_input;
  run_backward(trace, dz, &d_input, &grads);
  for (Eigen::Index i = 0; i < d_input.rows(); ++i) {
    grads.token_embedding.row(tokens[static_cast<std::size_t>(i)]) += d_input.row(i);
    grads.position_embedding.row(i) += d_input.row(i);
  }
  return v;
}

template <typename T>
std::vector<std::vector<Matrix<T>>> BasicModel<T>::attention_maps(
    const EmbeddingSeq<T>& e) const {
  check_input(e);
  detail::ForwardTrace<T> trace;
  run_forward(e, &trace);
  std::vector<std::vector<Matrix<T>>> maps;
  for (auto& layer : trace.layers) maps.push_back(std::move(layer.probs));
  return maps;
}

template struct ParameterSet<float>;
template struct ParameterSet<double>;
template class BasicModel<float>;
template class BasicModel<double>;

}  // namespace advchar
