#include "softguide/eigs.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <random>
#include <vector>

#include "softguide/errors.hpp"

namespace softguide {

EigResult lanczos_top(const LinearOp& op, Eigen::Index n, int k, double tol, int max_iter, std::uint64_t seed) {
    if (k < 1 || k > n) throw InputError("lanczos_top: invalid number of eigenpairs");
    max_iter = static_cast<int>(std::min<Eigen::Index>(max_iter, n));
    std::mt19937_64 gen(seed);
    std::normal_distribution<double> nd;
    Eigen::VectorXd q(n);
    for (Eigen::Index i = 0; i < n; ++i) q[i] = nd(gen);
    q.normalize();

    std::vector<Eigen::VectorXd> Q;
    std::vector<double> alpha, beta;
    Eigen::VectorXd w(n);
    EigResult res;
    for (int j = 0; j < max_iter; ++j) {
        Q.push_back(q);
        op(q, w);
        const double a = q.dot(w);
        alpha.push_back(a);
        // Two passes of classical Gram-Schmidt against the whole basis.
        for (int pass = 0; pass < 2; ++pass)
            for (const auto& v : Q) w -= v.dot(w) * v;
        const double b = w.norm();

        const int m = j + 1;
        const bool check = (m >= k) && (m % 5 == 0 || m == max_iter || b < 1e-14 * std::abs(a) || m == n);
        if (check) {
            Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
            for (int i = 0; i < m; ++i) {
                T(i, i) = alpha[i];
                if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = beta[i];
            }
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
            const Eigen::VectorXd& ev = es.eigenvalues();
            const double scale = std::max(std::abs(ev[m - 1]), std::abs(ev[0]));
            double worst = 0.0;
            for (int i = 0; i < k; ++i) worst = std::max(worst, std::abs(b * es.eigenvectors()(m - 1, m - 1 - i)));
            if (worst <= tol * std::max(scale, 1e-300) || b < 1e-14 * std::max(scale, 1e-300) || m == n) {
                res.values.resize(k);
                res.vectors = Eigen::MatrixXd::Zero(n, k);
                for (int i = 0; i < k; ++i) {
                    res.values[i] = ev[m - 1 - i];
                    const Eigen::VectorXd y = es.eigenvectors().col(m - 1 - i);
                    for (int l = 0; l < m; ++l) res.vectors.col(i) += y[l] * Q[l];
                    res.vectors.col(i).normalize();
                }
                res.iterations = m;
                res.residual = worst;
                return res;
            }
        }
        if (b < 1e-300) break;
        beta.push_back(b);
        q = w / b;
    }
    throw ConvergenceError("Lanczos iteration did not reach the residual tolerance");
}

EigResult top_eigenpairs(const Eigen::MatrixXd& A, int k, double tol) {
    const Eigen::Index n = A.rows();
    if (n <= 400) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
        EigResult r;
        r.values.resize(k);
        r.vectors.resize(n, k);
        for (int i = 0; i < k; ++i) {
            r.values[i] = es.eigenvalues()[n - 1 - i];
            r.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
        }
        return r;
    }
    return lanczos_top([&A](const Eigen::VectorXd& x, Eigen::VectorXd& y) { y.noalias() = A.selfadjointView<Eigen::Lower>() * x; },
                       n, k, tol);
}

}  // namespace softguide
