#include "fedsim/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "fedsim/error.hpp"

namespace fedsim {

namespace {

struct DisjointSets {
  explicit DisjointSets(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) { parent[find(a)] = find(b); }
  std::vector<std::size_t> parent;
};

void require_agents(std::size_t n) {
  if (n == 0) throw Error(ErrorCode::kInvalidArgument, "topology needs at least one agent");
}

}  // namespace

Topology Topology::from_edges(std::size_t n, std::span<const Edge> edges) {
  require_agents(n);
  Topology topo;
  topo.neighbors_.resize(n);
  std::set<Edge> seen;
  for (auto [a, b] : edges) {
    if (a >= n || b >= n) {
      throw Error(ErrorCode::kOutOfRange, "edge (" + std::to_string(a) + "," + std::to_string(b) +
                                              ") references an agent outside 0.." +
                                              std::to_string(n - 1));
    }
    if (a == b) throw Error(ErrorCode::kInvalidArgument, "self-loop on agent " + std::to_string(a));
    const Edge key{std::min(a, b), std::max(a, b)};
    if (!seen.insert(key).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate edge (" + std::to_string(key.first) +
                                                   "," + std::to_string(key.second) + ")");
    }
    topo.edges_.push_back(key);
    topo.neighbors_[a].push_back(b);
    topo.neighbors_[b].push_back(a);
  }
  for (auto& adj : topo.neighbors_) std::sort(adj.begin(), adj.end());
  return topo;
}

Topology Topology::path(std::size_t n) {
  require_agents(n);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.emplace_back(i, i + 1);
  return from_edges(n, edges);
}

Topology Topology::ring(std::size_t n) {
  require_agents(n);
  if (n < 3) return path(n);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) edges.emplace_back(i, (i + 1) % n);
  return from_edges(n, edges);
}

Topology Topology::complete(std::size_t n) {
  require_agents(n);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.emplace_back(i, j);
  return from_edges(n, edges);
}

Topology Topology::random_connections(std::size_t n, std::size_t k_lo, std::size_t k_hi,
                                      RngStream& rng) {
  require_agents(n);
  if (n == 1) return from_edges(1, {});
  if (k_lo == 0 || k_lo > k_hi) {
    throw Error(ErrorCode::kInvalidArgument, "random topology needs 1 <= k_lo <= k_hi");
  }
  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::set<Edge> unique;
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t k = std::min(k_lo + rng.below(k_hi - k_lo + 1), n - 1);
      others.clear();
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) others.push_back(j);
      // Partial Fisher-Yates: the first k slots become the partners.
      for (std::size_t slot = 0; slot < k; ++slot) {
        const std::size_t pick = slot + rng.below(others.size() - slot);
        std::swap(others[slot], others[pick]);
        unique.emplace(std::min(i, others[slot]), std::max(i, others[slot]));
      }
    }
    std::vector<Edge> edges(unique.begin(), unique.end());
    Topology topo = from_edges(n, edges);
    if (topo.is_connected()) return topo;
  }
  throw Error(ErrorCode::kDisconnected, "random topology stayed disconnected after retries");
}

std::size_t Topology::max_degree_plus_one() const noexcept {
  std::size_t max_degree = 0;
  for (const auto& adj : neighbors_) max_degree = std::max(max_degree, adj.size());
  return max_degree + 1;
}

bool Topology::is_connected() const {
  if (size() == 0) return false;
  DisjointSets sets(size());
  for (auto [a, b] : edges_) sets.unite(a, b);
  const std::size_t root = sets.find(0);
  for (std::size_t i = 1; i < size(); ++i)
    if (sets.find(i) != root) return false;
  return true;
}

Topology make_topology(const TopologySpec& spec, std::size_t n) {
  switch (spec.kind) {
    case TopologyKind::kNone:
      throw Error(ErrorCode::kInvalidArgument, "no topology configured");
    case TopologyKind::kEdges: return Topology::from_edges(n, spec.edges);
    case TopologyKind::kPath: return Topology::path(n);
    case TopologyKind::kRing: return Topology::ring(n);
    case TopologyKind::kComplete: return Topology::complete(n);
    case TopologyKind::kRandom: {
      RngStream rng(spec.seed, streams::kTopology);
      return Topology::random_connections(n, spec.k_lo, spec.k_hi, rng);
    }
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown topology kind");
}

std::vector<double> symmetric_eigenvalues(std::vector<double> a, std::size_t n,
                                          double tolerance) {
  if (a.size() != n * n) {
    throw Error(ErrorCode::kLengthMismatch, "matrix storage does not match n x n");
  }
  for (double v : a)
    if (!std::isfinite(v)) throw Error(ErrorCode::kNonFinite, "matrix has a non-finite entry");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (a[i * n + j] != a[j * n + i])
        throw Error(ErrorCode::kInvalidArgument, "matrix is not symmetric");

  auto at = [&](std::size_t i, std::size_t j) -> double& { return a[i * n + j]; };
  auto max_off_diagonal = [&] {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) m = std::max(m, std::abs(at(i, j)));
    return m;
  };

  constexpr int kMaxSweeps = 100;
  int sweep = 0;
  for (; sweep < kMaxSweeps && max_off_diagonal() >= tolerance; ++sweep) {
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = at(p, q);
        if (apq == 0.0) continue;
        const double theta = (at(q, q) - at(p, p)) / (2.0 * apq);
        const double t = std::copysign(1.0, theta) / (std::abs(theta) + std::hypot(theta, 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = at(k, p);
          const double akq = at(k, q);
          at(k, p) = c * akp - s * akq;
          at(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = at(p, k);
          const double aqk = at(q, k);
          at(p, k) = c * apk - s * aqk;
          at(q, k) = s * apk + c * aqk;
        }
        at(p, q) = 0.0;
        at(q, p) = 0.0;
      }
    }
  }
  if (sweep == kMaxSweeps && max_off_diagonal() >= tolerance) {
    throw Error(ErrorCode::kInvalidArgument, "Jacobi eigensolver did not converge");
  }

  std::vector<double> eigenvalues(n);
  for (std::size_t i = 0; i < n; ++i) eigenvalues[i] = at(i, i);
  std::sort(eigenvalues.begin(), eigenvalues.end());
  return eigenvalues;
}

LaplaceSpectrum build_laplacian(const Topology& topo) {
  const std::size_t n = topo.size();
  if (n < 2) {
    throw Error(ErrorCode::kInvalidArgument, "algebraic connectivity needs at least two agents");
  }
  if (!topo.is_connected()) {
    throw Error(ErrorCode::kDisconnected, "agent graph is disconnected");
  }
  LaplaceSpectrum spec;
  spec.n = n;
  spec.laplacian.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    spec.laplacian[i * n + i] = static_cast<double>(topo.degree(i));
    for (std::size_t l : topo.neighbors(i)) spec.laplacian[i * n + l] = -1.0;
  }
  spec.eigenvalues = symmetric_eigenvalues(spec.laplacian, n);
  spec.mu2 = spec.eigenvalues[1];
  if (spec.mu2 < 1e-9) {
    throw Error(ErrorCode::kDisconnected, "algebraic connectivity is zero");
  }
  return spec;
}

void require_gossip_step_size(const Topology& topo, double eps) {
  const double limit = 1.0 / static_cast<double>(topo.max_degree_plus_one());
  if (!(eps > 0.0 && eps < limit)) {
    throw Error(ErrorCode::kOutOfRange, "gossip step size must satisfy 0 < eps < 1/Delta = " +
                                            std::to_string(limit));
  }
}

std::vector<ParamVector> gossip_step(std::span<const ParamVector> grads, const Topology& topo,
                                     double eps) {
  require_gossip_step_size(topo, eps);
  if (grads.size() != topo.size()) {
    throw Error(ErrorCode::kLengthMismatch, "need one gradient per agent in the topology");
  }
  const std::size_t d = grads.empty() ? 0 : grads[0].size();
  for (const auto& g : grads)
    if (g.size() != d) throw Error(ErrorCode::kLengthMismatch, "gradient lengths differ");

  std::vector<ParamVector> out(grads.begin(), grads.end());
  std::vector<double> disagreement(d);
  for (std::size_t i = 0; i < grads.size(); ++i) {
    std::fill(disagreement.begin(), disagreement.end(), 0.0);
    for (std::size_t l : topo.neighbors(i))
      for (std::size_t c = 0; c < d; ++c) disagreement[c] += grads[l][c] - grads[i][c];
    for (std::size_t c = 0; c < d; ++c) out[i][c] = grads[i][c] + eps * disagreement[c];
    require_finite(out[i], "gossip output");
  }
  return out;
}

std::vector<ParamVector> gossip_rounds(std::span<const ParamVector> grads, const Topology& topo,
                                       double eps, std::size_t rounds) {
  require_gossip_step_size(topo, eps);
  std::vector<ParamVector> current(grads.begin(), grads.end());
  for (std::size_t e = 0; e < rounds; ++e) current = gossip_step(current, topo, eps);
  return current;
}

double contraction_factor(const LaplaceSpectrum& spec, double eps, std::size_t rounds) {
  double rho = 0.0;
  for (std::size_t i = 1; i < spec.eigenvalues.size(); ++i)
    rho = std::max(rho, std::abs(std::fma(-eps, spec.eigenvalues[i], 1.0)));
  return std::pow(rho, 2.0 * static_cast<double>(rounds));
}

double connectivity_factor(double mu2, double eps, std::size_t rounds) {
  return std::pow(std::fma(-eps, mu2, 1.0), 2.0 * static_cast<double>(rounds));
}

}  // namespace fedsim
