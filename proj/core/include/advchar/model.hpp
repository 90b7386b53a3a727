#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advchar/tensor.hpp"
#include "advchar/vocab.hpp"

namespace advchar {

struct ModelConfig {
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int d_ff = 128;
  // Longest text (in characters) the model accepts; positions 0..max_len.
  int max_len = 64;
  int num_classes = 2;
  std::uint64_t seed = 0;

  // Throws ConfigError when an invariant is violated.
  void validate() const;
  int head_dim() const { return d_model / heads; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
struct LayerParams {
  Matrix<T> ln1_scale, ln1_shift;
  Matrix<T> wq, bq, wk, bk, wv, bv, wo, bo;
  Matrix<T> ln2_scale, ln2_shift;
  Matrix<T> ff1_w, ff1_b, ff2_w, ff2_b;
};

// Every trainable tensor, in a fixed order. Biases and layer-norm vectors are
// stored as 1 x k matrices.
template <typename T>
struct ParameterSet {
  Matrix<T> token_embedding;     // |V| x d
  Matrix<T> position_embedding;  // (max_len + 1) x d
  std::vector<LayerParams<T>> layers;
  Matrix<T> head_weight;  // d x C
  Matrix<T> head_bias;    // 1 x C

  static ParameterSet zeros(const ModelConfig& config, std::size_t vocab_size);

  // f(name, tensor) for each tensor in canonical order.
  template <typename F>
  void for_each(F&& f) {
    for_each_impl(*this, f);
  }
  template <typename F>
  void for_each(F&& f) const {
    for_each_impl(*this, f);
  }

  std::size_t count() const;
  void set_zero();
  // this += other (shapes must agree).
  void add(const ParameterSet& other);
  void scale(T factor);

 private:
  template <typename Self, typename F>
  static void for_each_impl(Self& self, F& f) {
    f(std::string_view("token_embedding"), self.token_embedding);
    f(std::string_view("position_embedding"), self.position_embedding);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& p = self.layers[l];
      const std::string prefix = "layers." + std::to_string(l) + ".";
      f(prefix + "ln1.scale", p.ln1_scale);
      f(prefix + "ln1.shift", p.ln1_shift);
      f(prefix + "attn.wq", p.wq);
      f(prefix + "attn.bq", p.bq);
      f(prefix + "attn.wk", p.wk);
      f(prefix + "attn.bk", p.bk);
      f(prefix + "attn.wv", p.wv);
      f(prefix + "attn.bv", p.bv);
      f(prefix + "attn.wo", p.wo);
      f(prefix + "attn.bo", p.bo);
      f(prefix + "ln2.scale", p.ln2_scale);
      f(prefix + "ln2.shift", p.ln2_shift);
      f(prefix + "ff1.w", p.ff1_w);
      f(prefix + "ff1.b", p.ff1_b);
      f(prefix + "ff2.w", p.ff2_w);
      f(prefix + "ff2.b", p.ff2_b);
    }
    f(std::string_view("head.weight"), self.head_weight);
    f(std::string_view("head.bias"), self.head_bias);
  }
};

// Scalar loss on logits. Returns the value and writes dloss/dz into grad
// (already sized to C).
template <typename T>
using LogitObjective = std::function<T(const Logits<T>& z, Logits<T>& grad)>;

namespace detail {
template <typename T>
struct ForwardTrace;
}

// Character-level classifier: token + position embeddings, a pre-layer-norm
// transformer encoder, and a linear head on the final [CLS] state h_0.
//
// All const member functions are safe to call concurrently; activations live
// in per-call workspaces.
template <typename T>
class BasicModel {
 public:
  // Xavier-uniform weights (s = sqrt(6 / (fan_in + fan_out))), zero biases,
  // unit layer-norm scale, all drawn from config.seed.
  BasicModel(const ModelConfig& config, std::size_t vocab_size);
  // Adopts existing parameters; throws ShapeError on any mismatch.
  BasicModel(const ModelConfig& config, ParameterSet<T> params);

  const ModelConfig& config() const { return config_; }
  std::size_t vocab_size() const {
    return static_cast<std::size_t>(params_.token_embedding.rows());
  }
  int num_classes() const { return config_.num_classes; }
  const ParameterSet<T>& params() const { return params_; }
  ParameterSet<T>& mutable_params() { return params_; }
  std::size_t parameter_count() const { return params_.count(); }

  // Row i = token_embedding[tokens[i]] + position_embedding[i].
  EmbeddingSeq<T> embed(std::span<const TokenId> tokens) const;

  Logits<T> forward_from_embeddings(const EmbeddingSeq<T>& e) const;
  Logits<T> forward(std::span<const TokenId> tokens) const;
  int predict(std::span<const TokenId> tokens) const;

  // d objective(forward_from_embeddings(e)) / d e. Stores the objective value
  // in *value when non-null. Throws NumericalError on non-finite values.
  EmbeddingSeq<T> input_gradient(const EmbeddingSeq<T>& e,
                                 const LogitObjective<T>& objective,
                                 T* value = nullptr,
                                 Logits<T>* logits = nullptr) const;

  // Accumulates d objective / d params into grads for one token sequence and
  // returns the objective value.
  T accumulate_gradients(std::span<const TokenId> tokens,
                         const LogitObjective<T>& objective,
                         ParameterSet<T>& grads) const;

  // Weight gradients for a continuous input (embedding tables receive none).
  T accumulate_gradients_from_embeddings(const EmbeddingSeq<T>& e,
                                         const LogitObjective<T>& objective,
                                         ParameterSet<T>& grads) const;

  // Attention probabilities (per layer, per head) for e; used by checks.
  std::vector<std::vector<Matrix<T>>> attention_maps(
      const EmbeddingSeq<T>& e) const;

  template <typename U>
  BasicModel<U> cast() const {
    ParameterSet<U> out = ParameterSet<U>::zeros(config_, vocab_size());
    std::vector<const Matrix<T>*> src;
    params_.for_each([&](auto, const Matrix<T>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.for_each([&](auto, Matrix<U>& m) { m = src[i++]->template cast<U>(); });
    return BasicModel<U>(config_, std::move(out));
  }

 private:
  void check_input(const EmbeddingSeq<T>& e) const;
  Logits<T> run_forward(const EmbeddingSeq<T>& e,
                        detail::ForwardTrace<T>* trace) const;
  // Backpropagates dz through a recorded trace. Either output may be null.
  void run_backward(const detail::ForwardTrace<T>& trace, const Logits<T>& dz,
                    EmbeddingSeq<T>* d_input, ParameterSet<T>* grads) const;
  T evaluate_objective(const Logits<T>& z, const LogitObjective<T>& objective,
                       Logits<T>& dz) const;

  ModelConfig config_;
  ParameterSet<T> params_;
};

using Model = BasicModel<Real>;

// Same as constructing a Model; kept as a named entry point.
Model init_model(const ModelConfig& config, std::size_t vocab_size);

// Closed-form trainable parameter count.
std::size_t expected_parameter_count(const ModelConfig& config,
                                     std::size_t vocab_size);

}  // namespace advchar
