#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "fedsim/config.hpp"
#include "fedsim/param_vector.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

/// Undirected simple graph over agents 0..n-1.
class Topology {
 public:
  using Edge = std::pair<std::size_t, std::size_t>;

  /// Validates: endpoints in range, no self-loops, no duplicate edges.
  /// Connectivity is not required here; build_laplacian enforces it.
  static Topology from_edges(std::size_t n, std::span<const Edge> edges);
  static Topology path(std::size_t n);
  static Topology ring(std::size_t n);
  static Topology complete(std::size_t n);
  /// Every agent draws between k_lo and k_hi partners; duplicates merge. The
  /// draw repeats until the graph is connected.
  static Topology random_connections(std::size_t n, std::size_t k_lo, std::size_t k_hi,
                                     RngStream& rng);

  std::size_t size() const noexcept { return neighbors_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  std::size_t degree(std::size_t i) const { return neighbors_.at(i).size(); }
  /// Sum of |Omega_i| over agents, i.e. twice the edge count.
  std::size_t total_degree() const noexcept { return 2 * edges_.size(); }
  /// Delta := max_i |Omega_i| + 1; a valid gossip step needs eps < 1 / Delta.
  std::size_t max_degree_plus_one() const noexcept;
  bool is_connected() const;

 private:
  std::vector<Edge> edges_;
  std::vector<std::vector<std::size_t>> neighbors_;
};

/// Builds the topology a run config asks for over `n` agents.
Topology make_topology(const TopologySpec& spec, std::size_t n);

/// Eigenvalues (ascending) of a dense symmetric n x n row-major matrix by
/// cyclic Jacobi rotations; sweeps until every off-diagonal entry is below
/// `tolerance` in magnitude.
std::vector<double> symmetric_eigenvalues(std::vector<double> matrix, std::size_t n,
                                          double tolerance = 1e-12);

struct LaplaceSpectrum {
  std::size_t n = 0;
  std::vector<double> laplacian;    // row-major n x n
  std::vector<double> eigenvalues;  // ascending
  double mu2 = 0.0;

  double mu_max() const { return eigenvalues.back(); }
};

/// Laplace matrix (degree minus adjacency) and its spectrum. Throws
/// kDisconnected for disconnected graphs and kInvalidArgument for n = 1.
LaplaceSpectrum build_laplacian(const Topology& topo);

/// One synchronous gossip round g'_i = g_i + eps * sum_{l in Omega_i} (g_l - g_i).
std::vector<ParamVector> gossip_step(std::span<const ParamVector> grads, const Topology& topo,
                                     double eps);

/// `rounds` successive gossip steps; zero rounds returns the input.
std::vector<ParamVector> gossip_rounds(std::span<const ParamVector> grads, const Topology& topo,
                                       double eps, std::size_t rounds);

/// rho^(2E) with rho = max_{i>=2} |1 - eps * mu_i|: the squared operator-norm
/// contraction of E rounds on the deviation from the agent mean.
double contraction_factor(const LaplaceSpectrum& spec, double eps, std::size_t rounds);

/// (1 - eps * mu2)^(2E), the factor that appears in the consensus bound.
double connectivity_factor(double mu2, double eps, std::size_t rounds);

/// Throws kOutOfRange unless 0 < eps < 1 / Delta.
void require_gossip_step_size(const Topology& topo, double eps);

}  // namespace fedsim
