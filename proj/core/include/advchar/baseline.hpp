#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "advchar/tensor.hpp"
#include "advchar/vocab.hpp"

namespace advchar {

// K-means partition of the non-special character embeddings.
struct ClusterAssignment {
  int k = 0;
  Matrix<double> centroids;              // k x d
  std::vector<int> cluster_of;           // by vocab id; -1 for specials
  std::vector<std::vector<TokenId>> members;  // ascending ids per cluster
  double inertia = 0.0;
  int iterations = 0;
};

// min(1000, floor(non-special rows / 2)), at least 2.
int default_cluster_count(std::size_t vocab_size);

// Lloyd iterations from k-means++ seeding. Only rows >= 3 of the token
// embedding table take part (no positional term). An emptied cluster takes
// the point farthest from its centroid in the currently largest cluster.
ClusterAssignment cluster_embeddings(const Matrix<Real>& token_embedding, int k,
                                     std::uint64_t seed, int max_iters = 100);

// Picks r ~ U{2,3} distinct perturbable positions (capped at the number
// available) and replaces each with a uniform member of a uniformly chosen
// cluster other than the character's own. Throws DataError if x has no
// perturbable position.
TokenSequence baseline_attack(std::span<const TokenId> x,
                              const ClusterAssignment& clusters,
                              std::mt19937_64& rng);

}  // namespace advchar
