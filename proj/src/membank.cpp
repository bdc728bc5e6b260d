#include "histmap/membank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace histmap {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "cosine similarity: dimension mismatch");
  double dot = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0 && nb > 0, "cosine similarity of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> total_dissimilarity(std::span<const Vec> candidates) {
  require(!candidates.empty(), "total_dissimilarity needs at least one candidate");
  const size_t n = candidates.size();
  for (const auto& c : candidates)
    require(std::any_of(c.begin(), c.end(), [](double v) { return v != 0.0; }),
            "total_dissimilarity: zero vector");
  std::vector<double> sim(n * n, 1.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j) sim[i * n + j] = sim[j * n + i] = cosine_similarity(candidates[i], candidates[j]);
  std::vector<double> d(n, 0.0);
  std::vector<double> terms;
  for (size_t i = 0; i < n; ++i) {
    terms.clear();
    for (size_t j = 0; j < n; ++j)
      if (j != i) terms.push_back(1.0 - sim[i * n + j]);
    std::sort(terms.begin(), terms.end());
    d[i] = std::accumulate(terms.begin(), terms.end(), 0.0);
  }
  return d;
}

std::vector<size_t> select_most_dissimilar(std::span<const Vec> pooled, std::span<const uint64_t> ticks,
                                           size_t capacity) {
  require(pooled.size() == ticks.size(), "pooled/tick count mismatch");
  std::vector<size_t> idx(pooled.size());
  std::iota(idx.begin(), idx.end(), size_t{0});
  if (pooled.size() <= capacity) return idx;
  const auto d = total_dissimilarity(pooled);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
    if (d[a] != d[b]) return d[a] > d[b];
    return ticks[a] < ticks[b];
  });
  idx.resize(capacity);
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return ticks[a] < ticks[b]; });
  return idx;
}

std::vector<double> retrieval_probabilities(std::span<const Vec> pooled, std::span<const double> query,
                                            double floor) {
  std::vector<double> p(pooled.size());
  double total = 0;
  for (size_t i = 0; i < pooled.size(); ++i) {
    p[i] = std::max(cosine_similarity(query, pooled[i]), floor);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

std::vector<size_t> sample_without_replacement(std::span<const double> weights, size_t k, Rng& rng) {
  std::vector<double> w(weights.begin(), weights.end());
  std::vector<size_t> out;
  k = std::min(k, w.size());
  while (out.size() < k) {
    double total = 0;
    for (double v : w) total += v;
    double r = rng.uniform01() * total;
    size_t pick = w.size();
    for (size_t i = 0; i < w.size(); ++i) {
      if (w[i] <= 0) continue;
      pick = i;
      if (r < w[i]) break;
      r -= w[i];
    }
    out.push_back(pick);
    w[pick] = 0;
  }
  return out;
}

}  // namespace histmap
