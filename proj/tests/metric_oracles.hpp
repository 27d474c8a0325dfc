#pragma once

// Independent brute-force metric references shared by the unit and acceptance suites.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include "gfn4rec/autograd.hpp"
#include "gfn4rec/domain.hpp"
#include "gfn4rec/metrics.hpp"
#include "gfn4rec/rng.hpp"

namespace gfn4rec::testing {

// Rank = 1 + #users that beat u: strictly higher score, or equal score and lower index.
inline std::size_t count_rank(const Matrix& scores, ag::Index u, ag::Index k) {
  std::size_t rank = 1;
  for (ag::Index v = 0; v < scores.rows(); ++v) {
    if (scores(v, k) > scores(u, k) || (scores(v, k) == scores(u, k) && v < u)) ++rank;
  }
  return rank;
}

// Ideal DCG as the maximum over every assignment of ranks to users.
inline double max_dcg(std::vector<double> rewards) {
  std::sort(rewards.begin(), rewards.end());
  double best = -std::numeric_limits<double>::infinity();
  do {
    double d = 0.0;
    for (std::size_t j = 0; j < rewards.size(); ++j) d += rewards[j] * std::pow(2.0, 1.0 - static_cast<double>(j + 1));
    best = std::max(best, d);
  } while (std::next_permutation(rewards.begin(), rewards.end()));
  return best;
}

inline double brute_r_ndcg(const Matrix& rewards, const Matrix& scores) {
  double total = 0.0;
  int used = 0;
  for (ag::Index k = 0; k < rewards.cols(); ++k) {
    std::vector<double> col;
    double dcg = 0.0;
    for (ag::Index u = 0; u < rewards.rows(); ++u) {
      col.push_back(rewards(u, k));
      dcg += rewards(u, k) * std::pow(2.0, 1.0 - static_cast<double>(count_rank(scores, u, k)));
    }
    const double idcg = max_dcg(col);
    if (idcg <= 0.0) continue;
    total += dcg / idcg;
    ++used;
  }
  return used ? total / used : std::numeric_limits<double>::quiet_NaN();
}

inline double brute_r_mrr(const Matrix& rewards, const Matrix& scores) {
  double total = 0.0;
  for (ag::Index k = 0; k < rewards.cols(); ++k) {
    for (ag::Index u = 0; u < rewards.rows(); ++u) {
      total += rewards(u, k) / static_cast<double>(count_rank(scores, u, k)) / static_cast<double>(rewards.rows());
    }
  }
  return total / static_cast<double>(rewards.cols());
}

inline double brute_ild(const Slate& s, const ItemSimilarity& sim) {
  double total = 0.0;
  const std::size_t k = s.size();
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < k; ++j)
      if (i != j) total += 1.0 - sim(s.items[i], s.items[j]);
  return total / static_cast<double>(k * (k - 1));
}

inline std::size_t brute_coverage(const std::vector<Slate>& slates) {
  std::vector<ItemId> all;
  for (const auto& s : slates) all.insert(all.end(), s.items.begin(), s.items.end());
  std::sort(all.begin(), all.end());
  return static_cast<std::size_t>(std::unique(all.begin(), all.end()) - all.begin());
}

/// (1 + cos) / 2 over rows of `emb`, item i at row i-1.
inline ItemSimilarity cosine_similarity01(Matrix emb) {
  return [emb = std::move(emb)](ItemId a, ItemId b) {
    const auto x = emb.row(a - 1), y = emb.row(b - 1);
    return (1.0 + x.dot(y) / (x.norm() * y.norm())) / 2.0;
  };
}

inline Matrix nn_like_random(int rows, int cols, Rng& rng) {
  Matrix m(rows, cols);
  for (ag::Index i = 0; i < m.size(); ++i) m.data()[i] = standard_normal(rng);
  return m;
}

inline Slate random_slate(int n_items, std::size_t k, Rng& rng) {
  std::vector<ItemId> pool(static_cast<std::size_t>(n_items));
  std::iota(pool.begin(), pool.end(), 1);
  for (std::size_t i = 0; i < k; ++i) std::swap(pool[i], pool[i + uniform_index(rng, pool.size() - i)]);
  pool.resize(k);
  return Slate{pool};
}

}  // namespace gfn4rec::testing
