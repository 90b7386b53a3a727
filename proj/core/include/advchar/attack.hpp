#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "advchar/error.hpp"
#include "advchar/model.hpp"
#include "advchar/tensor.hpp"
#include "advchar/vocab.hpp"

namespace advchar {

enum class Norm { kL1, kL2 };
enum class AttackMode { kUntargeted, kTargeted };

// How the false class is picked in targeted mode.
struct TargetStrategy {
  enum class Kind { kFixed, kNextClass };
  Kind kind = Kind::kNextClass;
  int fixed_class = 0;

  static TargetStrategy fixed(int cls) { return {Kind::kFixed, cls}; }
  static TargetStrategy next_class() { return {Kind::kNextClass, 0}; }
};

struct AttackConfig {
  double c = 5.0;      // weight of the attack objective against the norm term
  double kappa = 5.0;  // confidence margin
  Norm norm = Norm::kL2;
  int max_steps = 100;
  double alpha = 0.05;  // Adam step size on the perturbation
  AttackMode mode = AttackMode::kUntargeted;
  TargetStrategy strategy;
  // Return the successful candidate with the fewest modified characters seen
  // over all steps. When false, the last discretized sequence is returned.
  bool keep_best = true;
  // With keep_best, stop as soon as a success touching <= 1 character is
  // found; no later step can modify fewer.
  bool early_stop = true;

  void validate(int num_classes) const;
};

struct AttackResult {
  TokenSequence x_prime;
  bool succeeded = false;
  std::vector<int> modified_positions;
  int steps_used = 0;
  double final_loss = 0.0;
  double norm_of_best = 0.0;
  Logits<Real> logits_of_best;
  // Class the objective was computed against (the true label when untargeted).
  int target = 0;
  // ||e*||_p at the start of each executed step; entry 0 is always 0.
  std::vector<double> norm_trace;
};

namespace detail {

template <typename T>
int argmax_excluding(const Logits<T>& z, int excluded) {
  int best = -1;
  for (int i = 0; i < z.size(); ++i) {
    if (i == excluded) continue;
    if (best < 0 || z(i) > z(best)) best = i;
  }
  return best;
}

template <typename T>
void check_objective_args(const Logits<T>& z, int t) {
  if (z.size() < 2) throw ConfigError("attack objective needs at least 2 classes");
  if (t < 0 || t >= z.size()) {
    throw ConfigError("class " + std::to_string(t) + " out of range for " +
                      std::to_string(z.size()) + " logits");
  }
}

}  // namespace detail

// max(max_{i != t} z_i - z_t, -kappa). When grad is non-null it receives the
// subgradient; on the kink the clamp branch (zero gradient) is used.
template <typename T>
T g_targeted(const Logits<T>& z, int t, T kappa, Logits<T>* grad = nullptr) {
  detail::check_objective_args(z, t);
  const int other = detail::argmax_excluding(z, t);
  const T margin = z(other) - z(t);
  if (grad) {
    grad->setZero(z.size());
    if (margin > -kappa) {
      (*grad)(other) = T(1);
      (*grad)(t) = T(-1);
    }
  }
  return std::max(margin, -kappa);
}

// max(z_t - max_{i != t} z_i, -kappa) with t the true class.
template <typename T>
T g_untargeted(const Logits<T>& z, int t, T kappa, Logits<T>* grad = nullptr) {
  detail::check_objective_args(z, t);
  const int other = detail::argmax_excluding(z, t);
  const T margin = z(t) - z(other);
  if (grad) {
    grad->setZero(z.size());
    if (margin > -kappa) {
      (*grad)(t) = T(1);
      (*grad)(other) = T(-1);
    }
  }
  return std::max(margin, -kappa);
}

// l2: sqrt of the sum of squares over all entries; l1: sum of |x|.
double perturbation_norm(const Matrix<Real>& e_star, Norm norm);

// ||e_star||_p + c * g(z, t, kappa), g picked by cfg.mode.
double attack_loss(const Matrix<Real>& e_star, const Logits<Real>& z,
                   const AttackConfig& cfg, int t);

// Maps each row i >= 1 of e_prime to the non-special id v minimizing
// ||e_prime_i - (token_embedding[v] + position_embedding[i])||_2, lowest id
// on ties. Row 0 becomes CLS. With a source sequence, positions holding a
// special id there are copied unchanged.
TokenSequence substitute(const Model& model, const EmbeddingSeq<Real>& e_prime);
TokenSequence substitute(const Model& model, const EmbeddingSeq<Real>& e_prime,
                         std::span<const TokenId> source);

// The class the objective aims at: y when untargeted, (y + 1) mod C for the
// next-class strategy, the fixed class otherwise (switched to a uniformly
// random other class when it equals y).
int resolve_target(int y, const AttackConfig& cfg, int num_classes,
                   std::mt19937_64& rng);

bool is_attack_success(int predicted, int y, int target, AttackMode mode);

// {i >= 1 : a_i != b_i}. Throws InvariantViolationError on length mismatch.
std::vector<int> modified_positions(std::span<const TokenId> a,
                                    std::span<const TokenId> b);

// Optimizes a perturbation of the character embeddings with Adam, maps it
// back to characters each step, and judges success on the discretized text.
// The loss gradient flows through the continuous perturbed embeddings. seed
// only drives the random target switch.
AttackResult attack(const Model& model, std::span<const TokenId> x, int y,
                    const AttackConfig& cfg, std::uint64_t seed);

}  // namespace advchar
