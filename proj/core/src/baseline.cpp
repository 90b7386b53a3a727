#include "advchar/baseline.hpp"

#include <algorithm>
#include <limits>

#include "advchar/error.hpp"

namespace advchar {

int default_cluster_count(std::size_t vocab_size) {
  const std::size_t chars = vocab_size > kNumSpecials ? vocab_size - kNumSpecials : 0;
  return static_cast<int>(std::max<std::size_t>(2, std::min<std::size_t>(1000, chars / 2)));
}

namespace {

int nearest_centroid(const Matrix<double>& points, Eigen::Index row,
                     const Matrix<double>& centroids, double* dist_out) {
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double dist = (points.row(row) - centroids.row(c)).squaredNorm();
    if (dist < best_dist) {
      best_dist = dist;
      best = static_cast<int>(c);
    }
  }
  if (dist_out) *dist_out = best_dist;
  return best;
}

Matrix<double> seed_plus_plus(const Matrix<double>& points, int k, std::mt19937_64& rng) {
  const Eigen::Index n = points.rows();
  Matrix<double> centroids(k, points.cols());
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  centroids.row(0) = points.row(first(rng));
  std::vector<double> d2(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    d2[static_cast<std::size_t>(i)] = (points.row(i) - centroids.row(0)).squaredNorm();
  }
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (double v : d2) total += v;
    Eigen::Index chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      chosen = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        r -= d2[static_cast<std::size_t>(i)];
        if (r < 0.0 && d2[static_cast<std::size_t>(i)] > 0.0) {
          chosen = i;
          break;
        }
      }
      // Rounding can leave r >= 0 at the end; fall back to the last point
      // with positive weight.
      while (d2[static_cast<std::size_t>(chosen)] == 0.0 && chosen > 0) --chosen;
    } else {
      chosen = first(rng);  // all remaining points coincide with a centroid
    }
    centroids.row(c) = points.row(chosen);
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& v = d2[static_cast<std::size_t>(i)];
      v = std::min(v, (points.row(i) - centroids.row(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

ClusterAssignment cluster_embeddings(const Matrix<Real>& token_embedding, int k,
                                     std::uint64_t seed, int max_iters) {
  const Eigen::Index n = token_embedding.rows() - kNumSpecials;
  if (n < 2 || k < 2 || k > n) {
    throw ConfigError("k-means: k=" + std::to_string(k) + " must lie in [2, " +
                      std::to_string(std::max<Eigen::Index>(n, 0)) + "]");
  }
  if (max_iters < 1) throw ConfigError("k-means: max_iters must be at least 1");
  const Matrix<double> points = token_embedding.bottomRows(n).cast<double>();
  std::mt19937_64 rng(seed);

  ClusterAssignment out;
  out.k = k;
  out.centroids = seed_plus_plus(points, k, rng);
  std::vector<int> assign(static_cast<std::size_t>(n), -1);
  std::vector<double> dist(static_cast<std::size_t>(n));

  for (int iter = 1; iter <= max_iters; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int c = nearest_centroid(points, i, out.centroids, &dist[static_cast<std::size_t>(i)]);
      if (c != assign[static_cast<std::size_t>(i)]) {
        assign[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }
    // Repair empty clusters.
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int c : assign) ++sizes[static_cast<std::size_t>(c)];
    for (int c = 0; c < k; ++c) {
      if (sizes[static_cast<std::size_t>(c)] > 0) continue;
      const int largest = static_cast<int>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      Eigen::Index far = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (assign[static_cast<std::size_t>(i)] != largest) continue;
        if (far < 0 || dist[static_cast<std::size_t>(i)] > dist[static_cast<std::size_t>(far)]) far = i;
      }
      assign[static_cast<std::size_t>(far)] = c;
      dist[static_cast<std::size_t>(far)] = 0.0;
      --sizes[static_cast<std::size_t>(largest)];
      ++sizes[static_cast<std::size_t>(c)];
      out.centroids.row(c) = points.row(far);
      changed = true;
    }
    // Update step.
    Matrix<double> sums = Matrix<double>::Zero(k, points.cols());
    for (Eigen::Index i = 0; i < n; ++i) sums.row(assign[static_cast<std::size_t>(i)]) += points.row(i);
    for (int c = 0; c < k; ++c) out.centroids.row(c) = sums.row(c) / sizes[static_cast<std::size_t>(c)];
    out.iterations = iter;
    if (!changed) break;
  }

  out.cluster_of.assign(static_cast<std::size_t>(token_embedding.rows()), -1);
  out.members.assign(static_cast<std::size_t>(k), {});
  out.inertia = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = assign[static_cast<std::size_t>(i)];
    const auto id = static_cast<TokenId>(i + kNumSpecials);
    out.cluster_of[static_cast<std::size_t>(id)] = c;
    out.members[static_cast<std::size_t>(c)].push_back(id);
    out.inertia += (points.row(i) - out.centroids.row(c)).squaredNorm();
  }
  return out;
}

TokenSequence baseline_attack(std::span<const TokenId> x,
                              const ClusterAssignment& clusters,
                              std::mt19937_64& rng) {
  if (clusters.k < 2) throw ConfigError("baseline needs at least two clusters");
  std::vector<std::size_t> positions;
  for (std::size_t i = 1; i < x.size(); ++i) {
    if (is_special(x[i])) continue;
    if (static_cast<std::size_t>(x[i]) >= clusters.cluster_of.size() ||
        clusters.cluster_of[static_cast<std::size_t>(x[i])] < 0) {
      throw DataError("token " + std::to_string(x[i]) + " has no cluster");
    }
    positions.push_back(i);
  }
  if (positions.empty()) throw DataError("baseline: sequence has no perturbable position");

  std::uniform_int_distribution<int> two_or_three(2, 3);
  const std::size_t r = std::min<std::size_t>(static_cast<std::size_t>(two_or_three(rng)),
                                              positions.size());
  // Partial Fisher-Yates: the first r entries are a uniform r-subset.
  for (std::size_t i = 0; i < r; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, positions.size() - 1);
    std::swap(positions[i], positions[pick(rng)]);
  }

  TokenSequence out(x.begin(), x.end());
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t pos = positions[i];
    const int own = clusters.cluster_of[static_cast<std::size_t>(x[pos])];
    std::uniform_int_distribution<int> other(0, clusters.k - 2);
    int c = other(rng);
    if (c >= own) ++c;
    const auto& members = clusters.members[static_cast<std::size_t>(c)];
    std::uniform_int_distribution<std::size_t> member(0, members.size() - 1);
    out[pos] = members[member(rng)];
  }
  return out;
}

}  // namespace advchar
