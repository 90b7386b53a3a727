#include "advchar/attack.hpp"

#include <cmath>
#include <optional>

#include "advchar/adam.hpp"

namespace advchar {

void AttackConfig::validate(int num_classes) const {
  if (max_steps < 1) throw ConfigError("attack: max_steps must be at least 1");
  if (!(c > 0.0) || !std::isfinite(c)) throw ConfigError("attack: c must be > 0");
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw ConfigError("attack: kappa must be >= 0");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("attack: alpha must be > 0");
  if (num_classes < 2) throw ConfigError("attack: model needs at least 2 classes");
  if (mode == AttackMode::kTargeted && strategy.kind == TargetStrategy::Kind::kFixed &&
      (strategy.fixed_class < 0 || strategy.fixed_class >= num_classes)) {
    throw ConfigError("attack: fixed target class " + std::to_string(strategy.fixed_class) +
                      " out of range for " + std::to_string(num_classes) + " classes");
  }
}

double perturbation_norm(const Matrix<Real>& e_star, Norm norm) {
  if (norm == Norm::kL1) return e_star.cast<double>().cwiseAbs().sum();
  return std::sqrt(e_star.cast<double>().squaredNorm());
}

double attack_loss(const Matrix<Real>& e_star, const Logits<Real>& z,
                   const AttackConfig& cfg, int t) {
  const Logits<double> zd = z.cast<double>();
  const double g = cfg.mode == AttackMode::kTargeted ? g_targeted(zd, t, cfg.kappa)
                                                     : g_untargeted(zd, t, cfg.kappa);
  return perturbation_norm(e_star, cfg.norm) + cfg.c * g;
}

TokenSequence substitute(const Model& model, const EmbeddingSeq<Real>& e_prime,
                         std::span<const TokenId> source) {
  const auto& table = model.params().token_embedding;
  const auto& pos = model.params().position_embedding;
  if (e_prime.cols() != table.cols() || e_prime.rows() < 1 || e_prime.rows() > pos.rows()) {
    throw ShapeError("substitute: perturbed embeddings have shape [" +
                     std::to_string(e_prime.rows()) + "," + std::to_string(e_prime.cols()) +
                     "]");
  }
  if (!source.empty() && static_cast<Eigen::Index>(source.size()) != e_prime.rows()) {
    throw ShapeError("substitute: source length differs from embedding rows");
  }
  const Eigen::Index rows = table.rows();
  TokenSequence out(static_cast<std::size_t>(e_prime.rows()));
  out[0] = kClsId;
  RowVector<Real> candidate(table.cols());
  for (Eigen::Index i = 1; i < e_prime.rows(); ++i) {
    const auto idx = static_cast<std::size_t>(i);
    if (!source.empty() && is_special(source[idx])) {
      out[idx] = source[idx];
      continue;
    }
    // Candidates are built exactly as embed() builds rows, so an unperturbed
    // row matches its own token at distance zero.
    TokenId best = -1;
    Real best_dist = std::numeric_limits<Real>::infinity();
    for (Eigen::Index v = kNumSpecials; v < rows; ++v) {
      candidate = table.row(v) + pos.row(i);
      const Real dist = (candidate - e_prime.row(i)).squaredNorm();
      if (dist < best_dist) {
        best_dist = dist;
        best = static_cast<TokenId>(v);
      }
    }
    if (best < 0) throw NumericalError("substitute: no finite distance at position " +
                                       std::to_string(i));
    out[idx] = best;
  }
  return out;
}

TokenSequence substitute(const Model& model, const EmbeddingSeq<Real>& e_prime) {
  return substitute(model, e_prime, {});
}

int resolve_target(int y, const AttackConfig& cfg, int num_classes,
                   std::mt19937_64& rng) {
  if (y < 0 || y >= num_classes) {
    throw DataError("label " + std::to_string(y) + " out of range for " +
                    std::to_string(num_classes) + " classes");
  }
  if (cfg.mode == AttackMode::kUntargeted) return y;
  if (cfg.strategy.kind == TargetStrategy::Kind::kNextClass) return (y + 1) % num_classes;
  const int t = cfg.strategy.fixed_class;
  if (t != y) return t;
  std::uniform_int_distribution<int> pick(0, num_classes - 2);
  const int r = pick(rng);
  return r < y ? r : r + 1;
}

bool is_attack_success(int predicted, int y, int target, AttackMode mode) {
  return mode == AttackMode::kTargeted ? predicted == target : predicted != y;
}

std::vector<int> modified_positions(std::span<const TokenId> a,
                                    std::span<const TokenId> b) {
  if (a.size() != b.size()) {
    throw InvariantViolationError("sequences differ in length (" + std::to_string(a.size()) +
                                  " vs " + std::to_string(b.size()) + ")");
  }
  std::vector<int> out;
  for (std::size_t i = 1; i < a.size(); ++i) {
    if (a[i] != b[i]) out.push_back(static_cast<int>(i));
  }
  return out;
}

namespace {

struct Candidate {
  TokenSequence tokens;
  bool succeeded = false;
  std::size_t modified = 0;
  double norm = 0.0;
  double loss = 0.0;
  int step = 0;
  Logits<Real> logits;
};

// Fewest modified characters, then smallest perturbation norm, then earliest.
bool better(const Candidate& a, const Candidate& b) {
  if (a.modified != b.modified) return a.modified < b.modified;
  if (a.norm != b.norm) return a.norm < b.norm;
  return a.step < b.step;
}

}  // namespace

AttackResult attack(const Model& model, std::span<const TokenId> x, int y,
                    const AttackConfig& cfg, std::uint64_t seed) {
  const int num_classes = model.num_classes();
  cfg.validate(num_classes);
  std::mt19937_64 rng(seed);
  const int target = resolve_target(y, cfg, num_classes, rng);

  const EmbeddingSeq<Real> e = model.embed(x);
  const Eigen::Index n = e.rows() - 1;
  const Eigen::Index d = e.cols();
  Matrix<Real> e_star = Matrix<Real>::Zero(n, d);
  Matrix<Real> step_grad(n, d);
  AdamState<Real> adam;
  Matrix<Real>* adam_params[] = {&e_star};
  const Matrix<Real>* adam_grads[] = {&step_grad};

  const Real c = static_cast<Real>(cfg.c);
  const Real kappa = static_cast<Real>(cfg.kappa);
  const LogitObjective<Real> objective = [&](const Logits<Real>& z, Logits<Real>& grad) {
    const Real g = cfg.mode == AttackMode::kTargeted ? g_targeted(z, target, kappa, &grad)
                                                     : g_untargeted(z, target, kappa, &grad);
    grad *= c;
    return c * g;
  };

  std::optional<Candidate> best;
  Candidate last;
  TokenSequence prev_tokens;
  Logits<Real> discrete_logits;
  EmbeddingSeq<Real> e_prime(e.rows(), d);
  int steps = 0;
  std::vector<double> norm_trace;
  norm_trace.reserve(static_cast<std::size_t>(cfg.max_steps));
  for (int k = 0; k < cfg.max_steps; ++k) {
    e_prime = e;
    e_prime.bottomRows(n) += e_star;

    // Phase I: discretize.
    TokenSequence tokens = substitute(model, e_prime, x);
    if (k == 0 || tokens != prev_tokens) {
      discrete_logits = model.forward(tokens);
      prev_tokens = tokens;
    }
    const bool success =
        is_attack_success(argmax(discrete_logits), y, target, cfg.mode);

    // Phase II: loss and gradient through the continuous perturbed input.
    Real objective_value = 0;
    const EmbeddingSeq<Real> grad = model.input_gradient(e_prime, objective, &objective_value);
    const double norm = perturbation_norm(e_star, cfg.norm);
    norm_trace.push_back(norm);
    steps = k + 1;

    last.tokens = std::move(tokens);
    last.succeeded = success;
    last.modified = modified_positions(x, last.tokens).size();
    last.norm = norm;
    last.loss = norm + static_cast<double>(objective_value);
    last.step = k;
    last.logits = discrete_logits;
    if (cfg.keep_best && success && (!best || better(last, *best))) best = last;
    if (cfg.keep_best && cfg.early_stop && best && best->modified <= 1) break;
    if (k + 1 == cfg.max_steps) break;

    step_grad = grad.bottomRows(n);
    if (cfg.norm == Norm::kL2) {
      if (norm > 0.0) step_grad += e_star / static_cast<Real>(norm);
    } else {
      step_grad += e_star.unaryExpr([](Real v) { return Real((v > 0) - (v < 0)); });
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (is_special(x[static_cast<std::size_t>(i + 1)])) step_grad.row(i).setZero();
    }
    adam_step<Real>(adam, adam_params, adam_grads, cfg.alpha);
  }

  const Candidate& chosen = (cfg.keep_best && best) ? *best : last;
  AttackResult result;
  result.x_prime = chosen.tokens;
  result.succeeded = chosen.succeeded;
  result.modified_positions = modified_positions(x, chosen.tokens);
  result.steps_used = steps;
  result.final_loss = chosen.loss;
  result.norm_of_best = chosen.norm;
  result.logits_of_best = chosen.logits;
  result.target = target;
  result.norm_trace = std::move(norm_trace);
  return result;
}

}  // namespace advchar
