#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wbfc {

// Bounds with magnitude at or above this sentinel are treated as infinite.
inline constexpr double kInfinityBound = 1e19;

// Dense inequality-constrained least squares:
//   minimize 0.5*||A tau - b||^2_W + 0.5*epsilon*||tau||^2
//   subject to lower <= G tau <= upper   (entries may be +-infinity)
struct QPProblem {
  Eigen::MatrixXd A;      // m x n
  Eigen::VectorXd b;      // m
  Eigen::MatrixXd W;      // m x m, symmetric PSD
  Eigen::MatrixXd G;      // p x n
  Eigen::VectorXd lower;  // p
  Eigen::VectorXd upper;  // p
  double epsilon = 1e-10;

  void validate() const;  // throws on invariant violations
  double cost(const Eigen::VectorXd& tau) const;
};

enum class QPStatus { Optimal, MaxIterations, Infeasible };

const char* to_string(QPStatus status);

struct QPSolution {
  Eigen::VectorXd tau;
  QPStatus status = QPStatus::Optimal;
  double kkt_residual = 0.0;
  int iterations = 0;
  // Active one-sided constraints: index i is row i at its lower bound, p + i is
  // row i at its upper bound.
  std::vector<int> active_constraints;
  // Original rows implicated in an infeasibility certificate (empty otherwise).
  std::vector<int> violated_rows;
};

// Dual active-set solve. Deterministic: the most violated constraint is added
// first, ties broken toward the lowest index.
QPSolution solve(const QPProblem& problem, int max_iterations = 200);

// Max of stationarity norm (over least-squares multiplier estimates on the
// near-active rows), primal violation, and complementarity violation.
double kkt_residual(const QPProblem& problem, const Eigen::VectorXd& tau);

// Debug-dump format used by the CLI; infinite bounds serialize as +-1e30.
std::string qp_to_json(const QPProblem& problem);
QPProblem qp_from_json(const std::string& text);

}  // namespace wbfc
