#include "wbfc/qp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace wbfc {
namespace {

struct OneSided {
  Eigen::VectorXd n;  // unit-norm normal, constraint is n^T x >= rhs
  double rhs = 0.0;
  int split_index = 0;  // row i lower -> i, row i upper -> p + i
};

// Two-sided rows split into unit-norm one-sided constraints; rows with both
// bounds infinite are dropped.
std::vector<OneSided> split_constraints(const QPProblem& qp) {
  const int p = static_cast<int>(qp.G.rows());
  std::vector<OneSided> out;
  out.reserve(2 * p);
  for (int i = 0; i < p; ++i) {
    const double norm = qp.G.row(i).norm();
    if (norm == 0.0) {
      if (qp.lower(i) > 0.0 || qp.upper(i) < 0.0)
        throw std::runtime_error("qp_solver: zero constraint row with unsatisfiable bounds");
      continue;
    }
    if (qp.lower(i) > -kInfinityBound) {
      OneSided c;
      c.n = qp.G.row(i).transpose() / norm;
      c.rhs = qp.lower(i) / norm;
      c.split_index = i;
      out.push_back(std::move(c));
    }
    if (qp.upper(i) < kInfinityBound) {
      OneSided c;
      c.n = -qp.G.row(i).transpose() / norm;
      c.rhs = -qp.upper(i) / norm;
      c.split_index = p + i;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace

void QPProblem::validate() const {
  const auto m = A.rows();
  const auto n = A.cols();
  if (b.size() != m) throw std::invalid_argument("QPProblem: b size mismatch");
  if (W.rows() != m || W.cols() != m) throw std::invalid_argument("QPProblem: W shape mismatch");
  if ((W - W.transpose()).cwiseAbs().maxCoeff() > 1e-10) throw std::invalid_argument("QPProblem: W not symmetric");
  if (G.size() > 0 && G.cols() != n) throw std::invalid_argument("QPProblem: G column mismatch");
  if (lower.size() != G.rows() || upper.size() != G.rows())
    throw std::invalid_argument("QPProblem: bound size mismatch");
  for (int i = 0; i < lower.size(); ++i)
    if (lower(i) > upper(i)) throw std::invalid_argument("QPProblem: lower > upper at row " + std::to_string(i));
  if (!(epsilon > 0.0)) throw std::invalid_argument("QPProblem: epsilon must be positive");
}

double QPProblem::cost(const Eigen::VectorXd& tau) const {
  const Eigen::VectorXd r = A * tau - b;
  return 0.5 * r.dot(W * r) + 0.5 * epsilon * tau.squaredNorm();
}

const char* to_string(QPStatus status) {
  switch (status) {
    case QPStatus::Optimal: return "optimal";
    case QPStatus::MaxIterations: return "max-iterations";
    case QPStatus::Infeasible: return "infeasible";
  }
  return "unknown";
}

QPSolution solve(const QPProblem& qp, int max_iterations) {
  qp.validate();
  const int n = static_cast<int>(qp.A.cols());
  const int p = static_cast<int>(qp.G.rows());

  Eigen::MatrixXd H = qp.A.transpose() * qp.W * qp.A;
  H = 0.5 * (H + H.transpose());
  H.diagonal().array() += qp.epsilon;
  const Eigen::VectorXd g = -qp.A.transpose() * (qp.W * qp.b);
  Eigen::LDLT<Eigen::MatrixXd> hfac(H);

  const auto cons = split_constraints(qp);

  QPSolution sol;
  sol.tau = hfac.solve(-g);

  std::vector<int> active;       // indices into cons
  Eigen::VectorXd mu(0);         // multipliers aligned with `active`
  std::vector<char> is_active(cons.size(), 0);

  auto finish = [&](QPStatus status) {
    sol.status = status;
    sol.active_constraints.clear();
    for (int a : active) sol.active_constraints.push_back(cons[a].split_index);
    std::sort(sol.active_constraints.begin(), sol.active_constraints.end());
    sol.kkt_residual = kkt_residual(qp, sol.tau);
    if (sol.status == QPStatus::Optimal) {
      // Certify primal feasibility; a degenerate active set can corrupt the
      // iterate without tripping the violation scan.
      for (const auto& c : cons) {
        if (c.n.dot(sol.tau) - c.rhs < -(1e-7 + 1e-12 * std::abs(c.rhs))) {
          sol.status = QPStatus::MaxIterations;
          break;
        }
      }
    }
    return sol;
  };

  while (true) {
    // Most violated inactive constraint; ties go to the lowest index.
    int pick = -1;
    double worst = 0.0;
    for (size_t i = 0; i < cons.size(); ++i) {
      if (is_active[i]) continue;
      const double slack = cons[i].n.dot(sol.tau) - cons[i].rhs;
      // Near-absolute feasibility; the relative part only concedes what double
      // arithmetic cannot resolve on badly scaled bounds.
      const double tol = 1e-9 + 1e-12 * std::abs(cons[i].rhs);
      if (slack < -tol && -slack > worst + 1e-15) {
        worst = -slack;
        pick = static_cast<int>(i);
      }
    }
    if (pick < 0) return finish(QPStatus::Optimal);

    double mu_new = 0.0;
    while (true) {
      if (++sol.iterations > max_iterations) return finish(QPStatus::MaxIterations);

      const int na = static_cast<int>(active.size());
      Eigen::MatrixXd N(n, na);
      for (int k = 0; k < na; ++k) N.col(k) = cons[active[k]].n;

      // Step direction z and dual rates r from the active-set KKT system.
      Eigen::VectorXd z(n), r(na);
      bool degenerate = false;
      if (na == 0) {
        z = hfac.solve(cons[pick].n);
      } else {
        Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(n + na, n + na);
        kkt.topLeftCorner(n, n) = H;
        kkt.topRightCorner(n, na) = N;
        kkt.bottomLeftCorner(na, n) = N.transpose();
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + na);
        rhs.head(n) = cons[pick].n;
        Eigen::FullPivLU<Eigen::MatrixXd> lu(kkt);
        degenerate = !lu.isInvertible();
        const Eigen::VectorXd zr = lu.solve(rhs);
        z = zr.head(n);
        r = zr.tail(na);
        // A valid primal direction keeps the active rows stationary.
        if ((N.transpose() * z).lpNorm<Eigen::Infinity>() >
            1e-8 * std::max(1.0, z.lpNorm<Eigen::Infinity>()))
          degenerate = true;
      }
      if (degenerate) z.setZero();

      // Blocking active constraint (lowest index on ties).
      double t1 = std::numeric_limits<double>::infinity();
      int block = -1;
      for (int k = 0; k < na; ++k) {
        if (r(k) > 1e-13) {
          const double t = mu(k) / r(k);
          if (t < t1 - 1e-15) {
            t1 = t;
            block = k;
          }
        }
      }

      const double denom = cons[pick].n.dot(z);
      if (denom <= 1e-13) {
        // No primal progress possible along this constraint.
        if (block < 0) {
          sol.violated_rows.push_back(cons[pick].split_index % std::max(p, 1));
          for (int a : active) sol.violated_rows.push_back(cons[a].split_index % std::max(p, 1));
          std::sort(sol.violated_rows.begin(), sol.violated_rows.end());
          sol.violated_rows.erase(std::unique(sol.violated_rows.begin(), sol.violated_rows.end()),
                                  sol.violated_rows.end());
          return finish(QPStatus::Infeasible);
        }
        mu -= t1 * r;
        mu_new += t1;
        is_active[active[block]] = 0;
        active.erase(active.begin() + block);
        Eigen::VectorXd mu2(mu.size() - 1);
        mu2 << mu.head(block), mu.tail(mu.size() - block - 1);
        mu = mu2;
        continue;
      }

      const double slack = cons[pick].n.dot(sol.tau) - cons[pick].rhs;
      const double t2 = -slack / denom;
      const double t = std::min(t1, t2);

      sol.tau += t * z;
      if (na > 0) mu -= t * r;
      mu_new += t;

      if (t2 <= t1) {
        active.push_back(pick);
        is_active[pick] = 1;
        Eigen::VectorXd mu2(mu.size() + 1);
        mu2 << mu, mu_new;
        mu = mu2;
        break;
      }
      is_active[active[block]] = 0;
      active.erase(active.begin() + block);
      Eigen::VectorXd mu2(mu.size() - 1);
      mu2 << mu.head(block), mu.tail(mu.size() - block - 1);
      mu = mu2;
    }
  }
}

double kkt_residual(const QPProblem& qp, const Eigen::VectorXd& tau) {
  qp.validate();
  if (tau.size() != qp.A.cols()) throw std::invalid_argument("kkt_residual: tau size mismatch");

  Eigen::MatrixXd H = qp.A.transpose() * qp.W * qp.A;
  H = 0.5 * (H + H.transpose());
  H.diagonal().array() += qp.epsilon;
  const Eigen::VectorXd grad = H * tau - qp.A.transpose() * (qp.W * qp.b);

  double primal = 0.0;
  for (int i = 0; i < qp.G.rows(); ++i) {
    const double v = qp.G.row(i).dot(tau);
    if (qp.lower(i) > -kInfinityBound) primal = std::max(primal, qp.lower(i) - v);
    if (qp.upper(i) < kInfinityBound) primal = std::max(primal, v - qp.upper(i));
  }

  const auto cons = split_constraints(qp);
  std::vector<int> near_active;
  for (size_t i = 0; i < cons.size(); ++i) {
    const double slack = cons[i].n.dot(tau) - cons[i].rhs;
    if (std::abs(slack) <= 1e-6 * (1.0 + std::abs(cons[i].rhs))) near_active.push_back(static_cast<int>(i));
  }

  double stationarity;
  double dual = 0.0;
  double complementarity = 0.0;
  if (near_active.empty()) {
    stationarity = grad.lpNorm<Eigen::Infinity>();
  } else {
    Eigen::MatrixXd N(tau.size(), near_active.size());
    for (size_t k = 0; k < near_active.size(); ++k) N.col(k) = cons[near_active[k]].n;
    const Eigen::VectorXd mu = N.colPivHouseholderQr().solve(grad);
    stationarity = (grad - N * mu).lpNorm<Eigen::Infinity>();
    for (int k = 0; k < mu.size(); ++k) {
      dual = std::max(dual, -mu(k));
      const double slack = cons[near_active[k]].n.dot(tau) - cons[near_active[k]].rhs;
      complementarity = std::max(complementarity, std::abs(mu(k) * slack));
    }
  }
  return std::max({primal, stationarity, dual, complementarity});
}

namespace {

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const int rows = static_cast<int>(j.size());
  const int cols = rows > 0 ? static_cast<int>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  return m;
}

nlohmann::json bounds_to_json(const Eigen::VectorXd& v) {
  nlohmann::json out = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) {
    double x = v(i);
    if (x > kInfinityBound) x = 1e30;
    if (x < -kInfinityBound) x = -1e30;
    out.push_back(x);
  }
  return out;
}

Eigen::VectorXd vector_from_json(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = j[i].get<double>();
  return v;
}

}  // namespace

std::string qp_to_json(const QPProblem& qp) {
  nlohmann::json j;
  j["A"] = matrix_to_json(qp.A);
  j["b"] = bounds_to_json(qp.b);
  j["W"] = matrix_to_json(qp.W);
  j["G"] = matrix_to_json(qp.G);
  j["lower"] = bounds_to_json(qp.lower);
  j["upper"] = bounds_to_json(qp.upper);
  j["epsilon"] = qp.epsilon;
  return j.dump(2);
}

QPProblem qp_from_json(const std::string& text) {
  const nlohmann::json j = nlohmann::json::parse(text);
  QPProblem qp;
  qp.A = matrix_from_json(j.at("A"));
  qp.b = vector_from_json(j.at("b"));
  qp.W = matrix_from_json(j.at("W"));
  qp.G = matrix_from_json(j.at("G"));
  if (qp.G.size() == 0) qp.G.resize(0, qp.A.cols());
  qp.lower = vector_from_json(j.at("lower"));
  qp.upper = vector_from_json(j.at("upper"));
  qp.epsilon = j.at("epsilon").get<double>();
  qp.validate();
  return qp;
}

}  // namespace wbfc
