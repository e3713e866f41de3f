#include "ccbf/qp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ccbf {

void QuadraticProgram::validate() const {
  if (hessian.rows() != hessian.cols())
    throw std::invalid_argument("hessian is not square");
  if (linear.size() != hessian.rows())
    throw std::invalid_argument("linear term dimension mismatch");
  if (ineq_rows.rows() != ineq_consts.size())
    throw std::invalid_argument("row/constant count mismatch");
  if (ineq_rows.rows() > 0 && ineq_rows.cols() != hessian.rows())
    throw std::invalid_argument("row dimension mismatch");
  if ((hessian - hessian.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw std::invalid_argument("hessian is not symmetric");
  if (hessian.rows() > 0) {
    Eigen::SelfAdjointEigenSolver<Mat> es(hessian);
    if (es.eigenvalues().minCoeff() < -1e-10)
      throw std::invalid_argument("hessian is not positive semidefinite");
  }
}

std::string QuadraticProgram::to_text() const {
  std::ostringstream os;
  os << "qp dim=" << dim() << " rows=" << rows() << "\n";
  os << "H =\n" << hessian << "\nf = " << linear.transpose() << "\n";
  os << "A =\n" << ineq_rows << "\nc = " << ineq_consts.transpose() << "\n";
  return os.str();
}

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kDualTol = 1e-9;
constexpr double kDirTol = 1e-12;

struct ActiveSetCore {
  const Mat& H;
  const Vec& f;
  const Mat& A;
  const Vec& c;
  int cap;

  // z must be feasible on entry; W holds active row indices (sorted)
  QpSolution run(Vec z, std::vector<int> W) {
    const int d = static_cast<int>(z.size());
    const int m = static_cast<int>(A.rows());
    QpSolution sol;
    int it = 0;
    while (true) {
      if (++it > cap) throw QpMaxIterationsError(cap);
      const Vec grad = H * z + f;

      Mat Z;  // null basis of the active rows
      if (W.empty()) {
        Z = Mat::Identity(d, d);
      } else {
        Mat Aw(W.size(), d);
        for (size_t r = 0; r < W.size(); ++r) Aw.row(r) = A.row(W[r]);
        Eigen::FullPivLU<Mat> lu(Aw);
        lu.setThreshold(1e-10);
        Z = lu.kernel();
        if (lu.dimensionOfKernel() == 0) Z = Mat::Zero(d, 0);
      }

      Vec p = Vec::Zero(d);
      bool ray = false;
      if (Z.cols() > 0) {
        const Mat Hr = Z.transpose() * H * Z;
        const Vec gr = Z.transpose() * grad;
        Eigen::SelfAdjointEigenSolver<Mat> es(Hr);
        const Vec lam = es.eigenvalues();
        const Mat V = es.eigenvectors();
        const double eig_tol = std::max(1e-12, 1e-10 * std::abs(lam.maxCoeff()));

        Vec g_flat = Vec::Zero(gr.size());
        for (int k = 0; k < lam.size(); ++k)
          if (lam(k) <= eig_tol) g_flat += V.col(k).dot(gr) * V.col(k);

        if (g_flat.norm() > 1e-9 * (1.0 + gr.norm())) {
          // objective decreases linearly along this direction
          p = Z * (-g_flat / g_flat.norm());
          ray = true;
        } else {
          Vec pz = Vec::Zero(gr.size());
          for (int k = 0; k < lam.size(); ++k)
            if (lam(k) > eig_tol) pz -= V.col(k).dot(gr) / lam(k) * V.col(k);
          p = Z * pz;
        }
      }

      if (!ray && p.norm() <= 1e-11 * (1.0 + z.norm())) {
        // stationary on the working set; check multipliers
        if (W.empty()) {
          sol.z = z;
          sol.multipliers = Vec::Zero(m);
          sol.status = QpStatus::Optimal;
          sol.iterations = it;
          return sol;
        }
        Mat Aw(W.size(), d);
        for (size_t r = 0; r < W.size(); ++r) Aw.row(r) = A.row(W[r]);
        Eigen::CompleteOrthogonalDecomposition<Mat> cod(Aw.transpose());
        const Vec lam_w = cod.solve(grad);
        int drop = -1;
        for (size_t r = 0; r < W.size(); ++r) {
          if (lam_w(r) < -kDualTol) {
            drop = static_cast<int>(r);
            break;  // lowest row position first
          }
        }
        if (drop < 0) {
          sol.z = z;
          sol.multipliers = Vec::Zero(m);
          for (size_t r = 0; r < W.size(); ++r)
            sol.multipliers(W[r]) = std::max(0.0, lam_w(r));
          sol.status = QpStatus::Optimal;
          sol.iterations = it;
          return sol;
        }
        W.erase(W.begin() + drop);
        continue;
      }

      // ratio test against the inactive rows
      double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
      int blocker = -1;
      for (int r = 0; r < m; ++r) {
        if (std::binary_search(W.begin(), W.end(), r)) continue;
        const double dir = A.row(r).dot(p);
        if (dir < -kDirTol) {
          const double val = A.row(r).dot(z) + c(r);
          const double am = std::max(0.0, val / (-dir));
          if (am < alpha - 1e-15) {
            alpha = am;
            blocker = r;
          }
        }
      }
      if (ray && blocker < 0) {
        sol.z = z;
        sol.multipliers = Vec::Zero(m);
        sol.status = QpStatus::Unbounded;
        sol.iterations = it;
        return sol;
      }
      z += alpha * p;
      if (blocker >= 0) {
        W.insert(std::upper_bound(W.begin(), W.end(), blocker), blocker);
      }
    }
  }
};

std::vector<int> active_rows_at(const Mat& A, const Vec& c, const Vec& z,
                                double tol) {
  std::vector<int> W;
  for (int r = 0; r < A.rows(); ++r)
    if (std::abs(A.row(r).dot(z) + c(r)) <= tol) W.push_back(r);
  return W;
}

}  // namespace

QpSolution solve_qp(const QuadraticProgram& p, const QpWarmStart* warm) {
  p.validate();
  const int d = p.dim();
  const int m = p.rows();
  const int cap = 100 * std::max(d + 1, 1);

  if (d == 0) {
    QpSolution sol;
    sol.z = Vec(0);
    sol.multipliers = Vec::Zero(m);
    sol.status = QpStatus::Optimal;
    for (int r = 0; r < m; ++r)
      if (p.ineq_consts(r) < -kFeasTol) {
        sol.status = QpStatus::Infeasible;
        sol.infeasible_rows.push_back(r);
      }
    return sol;
  }

  Vec z0;
  bool have_start = false;
  if (warm && warm->z.size() == d) {
    bool ok = true;
    for (int r = 0; r < m; ++r)
      if (p.ineq_rows.row(r).dot(warm->z) + p.ineq_consts(r) < -kFeasTol) {
        ok = false;
        break;
      }
    if (ok) {
      z0 = warm->z;
      have_start = true;
    }
  }

  if (!have_start) {
    // phase 1: minimize the common slack s with rows A z + c + s >= 0, s >= 0
    Vec zp = Vec::Zero(d + 1);
    double worst = 0.0;
    for (int r = 0; r < m; ++r) worst = std::max(worst, -p.ineq_consts(r));
    zp(d) = worst + 1.0;

    Mat A1(m + 1, d + 1);
    Vec c1(m + 1);
    A1.setZero();
    if (m > 0) {
      A1.block(0, 0, m, d) = p.ineq_rows;
      A1.block(0, d, m, 1).setOnes();
      c1.head(m) = p.ineq_consts;
    }
    A1(m, d) = 1.0;
    c1(m) = 0.0;

    Mat H1 = Mat::Zero(d + 1, d + 1);
    Vec f1 = Vec::Zero(d + 1);
    f1(d) = 1.0;

    ActiveSetCore core1{H1, f1, A1, c1, cap};
    QpSolution s1 = core1.run(zp, {});
    if (s1.status != QpStatus::Optimal || s1.z(d) > 1e-8) {
      QpSolution sol;
      sol.z = s1.z.head(d);
      sol.multipliers = Vec::Zero(m);
      sol.status = QpStatus::Infeasible;
      sol.iterations = s1.iterations;
      for (int r = 0; r < m; ++r)
        if (p.ineq_rows.row(r).dot(sol.z) + p.ineq_consts(r) < -kFeasTol)
          sol.infeasible_rows.push_back(r);
      return sol;
    }
    z0 = s1.z.head(d);
  }

  std::vector<int> W;
  if (warm && have_start) {
    for (int r : warm->active)
      if (r >= 0 && r < m &&
          std::abs(p.ineq_rows.row(r).dot(z0) + p.ineq_consts(r)) <= 1e-9)
        W.push_back(r);
    std::sort(W.begin(), W.end());
    W.erase(std::unique(W.begin(), W.end()), W.end());
  } else {
    W = active_rows_at(p.ineq_rows, p.ineq_consts, z0, 1e-9);
  }

  ActiveSetCore core{p.hessian, p.linear, p.ineq_rows, p.ineq_consts, cap};
  return core.run(z0, W);
}

KktResiduals kkt_residuals(const QuadraticProgram& p, const QpSolution& s) {
  KktResiduals r;
  if (s.status != QpStatus::Optimal) return r;
  Vec stat = p.hessian * s.z + p.linear;
  if (p.rows() > 0) stat -= p.ineq_rows.transpose() * s.multipliers;
  r.stationarity = p.dim() > 0 ? stat.cwiseAbs().maxCoeff() : 0.0;
  for (int i = 0; i < p.rows(); ++i) {
    const double v = p.ineq_rows.row(i).dot(s.z) + p.ineq_consts(i);
    r.primal = std::max(r.primal, -v);
    r.complementarity =
        std::max(r.complementarity, std::abs(s.multipliers(i) * v));
    r.dual = std::max(r.dual, -s.multipliers(i));
  }
  r.primal = std::max(0.0, r.primal);
  r.dual = std::max(0.0, r.dual);
  return r;
}

std::vector<int> input_offsets(const std::vector<AgentModel>& models) {
  std::vector<int> off(models.size() + 1, 0);
  for (size_t i = 0; i < models.size(); ++i)
    off[i + 1] = off[i] + models[i].dynamics.input_dim;
  return off;
}

QuadraticProgram assemble_centralized(const std::vector<AgentModel>& models,
                                      const CouplingGraph& g,
                                      const SystemState& x,
                                      const std::vector<Vec>& u_nom) {
  const int n = g.size();
  const auto off = input_offsets(models);
  const int dim = off[n];
  const auto coeffs = assemble_all(models, g, x);

  QuadraticProgram p;
  p.hessian = Mat::Identity(dim, dim);
  p.linear = Vec::Zero(dim);
  for (int i = 0; i < n; ++i) {
    if (u_nom[i].size() != models[i].dynamics.input_dim)
      throw std::invalid_argument("nominal input dimension mismatch");
    p.linear.segment(off[i], models[i].dynamics.input_dim) = -u_nom[i];
  }

  p.ineq_rows = Mat::Zero(2 * n, dim);
  p.ineq_consts = Vec::Zero(2 * n);
  for (int i = 0; i < n; ++i) {
    double b_sum = 0.0;
    for (const auto& [j, a_ij] : coeffs[i].a) {
      p.ineq_rows.row(i).segment(off[j], a_ij.size()) = a_ij.transpose();
      b_sum += coeffs[i].b.at(j);
    }
    p.ineq_consts(i) = b_sum;
  }
  for (int i = 0; i < n; ++i) {
    auto [xs, xin] = gather_in_states(g, i, x);
    auto [row, s] = first_order_condition_row(models[i], xs, xin);
    p.ineq_rows.row(n + i).segment(off[i], row.size()) = row;
    p.ineq_consts(n + i) = s;
  }
  return p;
}

QuadraticProgram assemble_centralized_aux(const std::vector<AgentModel>& models,
                                          const CouplingGraph& g,
                                          const SystemState& x,
                                          const std::vector<Vec>& u_nom) {
  const int n = g.size();
  const auto off = input_offsets(models);
  const int u_dim = off[n];
  const auto coeffs = assemble_all(models, g, x);

  // allocation variable offsets: condition index m ascending, contributor
  // j ascending within the condition
  std::map<std::pair<int, int>, int> yoff;
  int dim = u_dim;
  for (int m = 0; m < n; ++m)
    for (int j : g.in_neighbors(m)) yoff[{m, j}] = dim++;

  QuadraticProgram p;
  p.hessian = Mat::Zero(dim, dim);
  p.hessian.topLeftCorner(u_dim, u_dim).setIdentity();
  p.linear = Vec::Zero(dim);
  for (int i = 0; i < n; ++i)
    p.linear.segment(off[i], models[i].dynamics.input_dim) = -u_nom[i];

  int n_split = 0;
  for (int m = 0; m < n; ++m)
    n_split += static_cast<int>(g.in_neighbors(m).size());

  p.ineq_rows = Mat::Zero(n_split + n, dim);
  p.ineq_consts = Vec::Zero(n_split + n);
  int r = 0;
  for (int m = 0; m < n; ++m) {
    const auto& contributors = g.in_neighbors(m);
    for (int j : contributors) {
      const Vec& a_mj = coeffs[m].a.at(j);
      p.ineq_rows.row(r).segment(off[j], a_mj.size()) = a_mj.transpose();
      for (int k : contributors) {
        p.ineq_rows(r, yoff[{m, j}]) += 1.0;
        p.ineq_rows(r, yoff[{m, k}]) -= 1.0;
      }
      p.ineq_consts(r) = coeffs[m].b.at(j);
      ++r;
    }
  }
  for (int i = 0; i < n; ++i) {
    auto [xs, xin] = gather_in_states(g, i, x);
    auto [row, s] = first_order_condition_row(models[i], xs, xin);
    p.ineq_rows.row(r).segment(off[i], row.size()) = row;
    p.ineq_consts(r) = s;
    ++r;
  }
  return p;
}

}  // namespace ccbf
