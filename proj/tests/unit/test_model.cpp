#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "advchar/error.hpp"
#include "advchar/model.hpp"
#include "gradient_check.hpp"
#include "support.hpp"

namespace advchar {
namespace {

using testing::jitter;
using testing::linear_objective;
using testing::random_tokens;
using testing::small_config;

using Grid = std::vector<std::vector<double>>;

Grid to_grid(const Matrix<double>& m) {
  Grid g(static_cast<std::size_t>(m.rows()), std::vector<double>(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

Grid matmul(const Grid& a, const Grid& b) {
  Grid out(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) out[i][j] += a[i][k] * b[k][j];
  return out;
}

Grid add_bias(Grid x, const Matrix<double>& b) {
  for (auto& row : x)
    for (std::size_t j = 0; j < row.size(); ++j) row[j] += b(0, static_cast<Eigen::Index>(j));
  return x;
}

Grid layer_norm(const Grid& x, const Matrix<double>& scale, const Matrix<double>& shift) {
  Grid out = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double mean = 0.0;
    for (double v : x[i]) mean += v;
    mean /= static_cast<double>(x[i].size());
    double var = 0.0;
    for (double v : x[i]) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x[i].size());
    for (std::size_t j = 0; j < x[i].size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      out[i][j] = (x[i][j] - mean) / std::sqrt(var + 1e-5) * scale(0, jj) + shift(0, jj);
    }
  }
  return out;
}

// Plain-loop forward pass used as an oracle for the Eigen implementation.
std::vector<double> naive_forward(const BasicModel<double>& model, const TokenSequence& x) {
  const auto& p = model.params();
  const auto& cfg = model.config();
  const std::size_t n = x.size();
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto dh = static_cast<std::size_t>(cfg.d_model / cfg.heads);
  Grid h(n, std::vector<double>(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      h[i][j] = p.token_embedding(x[i], static_cast<Eigen::Index>(j)) +
                p.position_embedding(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));

  for (const auto& lp : p.layers) {
    const Grid a = layer_norm(h, lp.ln1_scale, lp.ln1_shift);
    const Grid q = add_bias(matmul(a, to_grid(lp.wq)), lp.bq);
    const Grid k = add_bias(matmul(a, to_grid(lp.wk)), lp.bk);
    const Grid v = add_bias(matmul(a, to_grid(lp.wv)), lp.bv);
    Grid o(n, std::vector<double>(d, 0.0));
    for (int head = 0; head < cfg.heads; ++head) {
      const std::size_t off = static_cast<std::size_t>(head) * dh;
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> s(n);
        double mx = -1e300;
        for (std::size_t j = 0; j < n; ++j) {
          double dot = 0.0;
          for (std::size_t c = 0; c < dh; ++c) dot += q[i][off + c] * k[j][off + c];
          s[j] = dot / std::sqrt(static_cast<double>(dh));
          mx = std::max(mx, s[j]);
        }
        double z = 0.0;
        for (double& sj : s) z += (sj = std::exp(sj - mx));
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t c = 0; c < dh; ++c) o[i][off + c] += s[j] / z * v[j][off + c];
      }
    }
    const Grid attn = add_bias(matmul(o, to_grid(lp.wo)), lp.bo);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) h[i][j] += attn[i][j];

    const Grid b = layer_norm(h, lp.ln2_scale, lp.ln2_shift);
    Grid f = add_bias(matmul(b, to_grid(lp.ff1_w)), lp.ff1_b);
    for (auto& row : f)
      for (double& u : row) u = 0.5 * u * (1.0 + std::erf(u / std::sqrt(2.0)));
    const Grid ff = add_bias(matmul(f, to_grid(lp.ff2_w)), lp.ff2_b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) h[i][j] += ff[i][j];
  }
  const Grid z = add_bias(matmul(Grid{h[0]}, to_grid(p.head_weight)), p.head_bias);
  return z[0];
}

template <typename T>
T objective_value(const BasicModel<T>& model, const EmbeddingSeq<T>& e, const LogitObjective<T>& f) {
  Logits<T> g;
  return f(model.forward_from_embeddings(e), g);
}

TEST(ModelConfig, Validation) {
  EXPECT_THROW(small_config(16, 2, 3, 4, 0).validate(), ConfigError);
  EXPECT_THROW(small_config(16, 0, 2, 4, 0).validate(), ConfigError);
  EXPECT_THROW(small_config(16, 2, 2, 1, 0).validate(), ConfigError);
  EXPECT_THROW(small_config(16, 2, 2, 4, 0, 1).validate(), ConfigError);
  EXPECT_NO_THROW(small_config(16, 2, 2, 4, 0).validate());
  EXPECT_THROW(Model(small_config(16, 2, 3, 4, 0), 50), ConfigError);
}

TEST(Model, InitIsDeterministic) {
  const auto cfg = small_config(16, 2, 2, 4, 42);
  const Model a(cfg, 50), b(cfg, 50);
  std::vector<const Matrix<Real>*> pb;
  b.params().for_each([&](auto, const Matrix<Real>& m) { pb.push_back(&m); });
  std::size_t i = 0;
  a.params().for_each([&](auto name, const Matrix<Real>& m) {
    EXPECT_TRUE(m == *pb[i++]) << name;
  });
  const Model c(small_config(16, 2, 2, 4, 43), 50);
  EXPECT_FALSE(a.params().token_embedding == c.params().token_embedding);
}

TEST(Model, ParameterCountMatchesClosedForm) {
  // d=16, L=2, H=2, C=4, |V|=50, max_len=64, d_ff=128:
  //   token 50*16 = 800, position 65*16 = 1040,
  //   per layer: ln 2*16 + attn 4*(256+16) + ln 2*16 + ff1 16*128+128 + ff2 128*16+16 = 5392,
  //   head 16*4 + 4 = 68.
  const auto cfg = small_config(16, 2, 2, 4, 0, 64, 128);
  const Model m(cfg, 50);
  EXPECT_EQ(m.parameter_count(), 800u + 1040u + 2u * 5392u + 68u);
  EXPECT_EQ(expected_parameter_count(cfg, 50), m.parameter_count());
}

TEST(Embed, SingleClsRow) {
  const Model m(small_config(8, 1, 2, 2, 1), 10);
  const auto e = m.embed(TokenSequence{kClsId});
  ASSERT_EQ(e.rows(), 1);
  ASSERT_EQ(e.cols(), 8);
  EXPECT_TRUE(e.row(0) == m.params().token_embedding.row(0) + m.params().position_embedding.row(0));
}

TEST(Embed, Errors) {
  const Model m(small_config(8, 1, 2, 2, 1, 4), 10);
  EXPECT_THROW(m.embed(TokenSequence{}), ShapeError);
  EXPECT_THROW(m.embed(TokenSequence{0, 3, 3, 3, 3, 3}), InputTooLongError);
  EXPECT_NO_THROW(m.embed(TokenSequence{0, 3, 3, 3, 3}));
  EXPECT_THROW(m.embed(TokenSequence{0, 10}), InvalidTokenError);
  EXPECT_THROW(m.forward_from_embeddings(EmbeddingSeq<Real>::Zero(2, 7)), ShapeError);
}

TEST(Forward, ZeroHeadGivesZeroLogits) {
  ParameterSet<Real> p = jitter(Model(small_config(8, 2, 2, 3, 5), 12), 1, 0.1).params();
  p.head_weight.setZero();
  p.head_bias.setZero();
  const Model m(small_config(8, 2, 2, 3, 5), p);
  std::mt19937_64 rng(3);
  const auto z = m.forward(random_tokens(rng, 6, 12));
  EXPECT_TRUE(z.isZero(0.0));
}

TEST(Forward, IsCompositionOfEmbedAndForwardFromEmbeddings) {
  const Model m = jitter(Model(small_config(16, 2, 2, 4, 9), 30), 2, 0.05);
  std::mt19937_64 rng(4);
  for (int s = 0; s < 20; ++s) {
    const auto x = random_tokens(rng, 1 + s % 10, 30);
    const auto z = m.forward(x);
    EXPECT_TRUE(z == m.forward_from_embeddings(m.embed(x)));
    EXPECT_TRUE(z == m.forward(x));
    EXPECT_EQ(z.size(), 4);
    EXPECT_EQ(m.predict(x), argmax(z));
  }
}

TEST(Argmax, TiesGoToLowestIndex) {
  Logits<Real> z(4);
  z << 1.0f, 3.0f, 3.0f, 2.0f;
  EXPECT_EQ(argmax(z), 1);
}

TEST(Forward, MatchesNaiveOracle) {
  struct Case { int d, layers, heads, n; };
  for (const Case c : {Case{4, 1, 1, 1}, Case{4, 1, 1, 3}, Case{8, 2, 2, 5}}) {
    const BasicModel<double> m =
        jitter(BasicModel<double>(small_config(c.d, c.layers, c.heads, 3, 17), 9), 5, 0.2);
    std::mt19937_64 rng(static_cast<std::uint64_t>(c.n));
    const auto x = random_tokens(rng, static_cast<std::size_t>(c.n - 1), 9);
    const auto z = m.forward(x);
    const auto expect = naive_forward(m, x);
    for (std::size_t j = 0; j < expect.size(); ++j) {
      EXPECT_NEAR(z(static_cast<Eigen::Index>(j)), expect[j], 1e-12)
          << "d=" << c.d << " n=" << c.n << " class " << j;
    }
  }
}

TEST(Attention, RowsAreConvexWeights) {
  const Model m = jitter(Model(small_config(16, 2, 4, 2, 3), 20), 8, 0.3);
  std::mt19937_64 rng(5);
  const auto maps = m.attention_maps(m.embed(random_tokens(rng, 11, 20)));
  ASSERT_EQ(maps.size(), 2u);
  for (const auto& layer : maps) {
    ASSERT_EQ(layer.size(), 4u);
    for (const auto& head : layer) {
      EXPECT_GE(head.minCoeff(), 0.0f);
      for (Eigen::Index i = 0; i < head.rows(); ++i) EXPECT_NEAR(head.row(i).sum(), 1.0f, 1e-5f);
    }
  }
}

TEST(InputGradient, ConstantObjectiveHasZeroGradient) {
  const Model m(small_config(8, 1, 2, 2, 3), 10);
  std::mt19937_64 rng(1);
  const auto e = m.embed(random_tokens(rng, 4, 10));
  const LogitObjective<Real> constant = [](const Logits<Real>& z, Logits<Real>& g) {
    g = Logits<Real>::Zero(z.size());
    return 7.0f;
  };
  Real value = 0;
  const auto grad = m.input_gradient(e, constant, &value);
  EXPECT_EQ(value, 7.0f);
  EXPECT_EQ(grad.rows(), e.rows());
  EXPECT_EQ(grad.cols(), e.cols());
  EXPECT_TRUE(grad.isZero(0.0));
}

TEST(InputGradient, IdentityEncoderGivesHeadColumnOnRowZero) {
  // Zeroed output projections make every residual branch vanish, so the
  // encoder is the identity and z = e_0 W + b.
  const auto cfg = small_config(8, 1, 2, 3, 4);
  ParameterSet<Real> p = jitter(Model(cfg, 10), 3, 0.1).params();
  for (auto& lp : p.layers) {
    lp.wo.setZero();
    lp.bo.setZero();
    lp.ff2_w.setZero();
    lp.ff2_b.setZero();
  }
  const Model m(cfg, p);
  std::mt19937_64 rng(2);
  const auto e = m.embed(random_tokens(rng, 5, 10));
  for (int j = 0; j < 3; ++j) {
    std::vector<double> w(3, 0.0);
    w[static_cast<std::size_t>(j)] = 1.0;
    const auto grad = m.input_gradient(e, linear_objective<Real>(w));
    EXPECT_TRUE(grad.row(0) == p.head_weight.col(j).transpose());
    EXPECT_TRUE(grad.bottomRows(grad.rows() - 1).isZero(0.0));
  }
}

TEST(Gradients, FiniteDifferencesDouble) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = testing::check_gradients<double>(seed);
    EXPECT_LT(r.worst, 1e-6) << r.worst_at;
    EXPECT_LT(r.key_bias_max, 1e-14);
  }
}

TEST(Gradients, FiniteDifferencesSingle) {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto r = testing::check_gradients<float>(seed);
    EXPECT_LT(r.worst, 1e-3) << r.worst_at;
    EXPECT_LT(r.key_bias_max, 1e-6);
  }
}

TEST(InputGradient, NonFiniteInputIsNumericalError) {
  const Model m(small_config(8, 1, 2, 2, 3), 10);
  auto e = m.embed(TokenSequence{0, 3, 4});
  e(1, 2) = std::numeric_limits<Real>::infinity();
  const auto f = linear_objective<Real>({1.0, 0.0});
  EXPECT_THROW(m.input_gradient(e, f), NumericalError);
}

TEST(Model, CastPreservesOutputs) {
  const Model m = jitter(Model(small_config(8, 2, 2, 3, 6), 12), 7, 0.1);
  const auto md = m.cast<double>();
  std::mt19937_64 rng(8);
  const auto x = random_tokens(rng, 6, 12);
  EXPECT_TRUE(md.forward(x).cast<float>().isApprox(m.forward(x), 1e-5f));
}

TEST(Model, RejectsMismatchedParameters) {
  ParameterSet<Real> p = Model(small_config(8, 1, 2, 2, 1), 10).params();
  p.layers[0].wq.resize(8, 4);
  EXPECT_THROW(Model(small_config(8, 1, 2, 2, 1), p), ShapeError);
}

}  // namespace
}  // namespace advchar
