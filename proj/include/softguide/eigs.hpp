#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>

namespace softguide {

using LinearOp = std::function<void(const Eigen::VectorXd& in, Eigen::VectorXd& out)>;

struct EigResult {
    Eigen::VectorXd values;   // descending
    Eigen::MatrixXd vectors;  // columns, unit norm
    int iterations = 0;
    double residual = 0.0;    // largest residual norm among the returned pairs
};

// Largest k eigenpairs of a symmetric operator by Lanczos with full reorthogonalisation.
// The start vector is drawn from a fixed-seed generator, so results are reproducible.
// Throws ConvergenceError when the residual tolerance is not met within max_iter steps.
EigResult lanczos_top(const LinearOp& op, Eigen::Index n, int k, double tol = 1e-10, int max_iter = 300,
                      std::uint64_t seed = 12345);

// Dense symmetric convenience wrapper: small matrices use a direct solver.
EigResult top_eigenpairs(const Eigen::MatrixXd& A, int k, double tol = 1e-10);

}  // namespace softguide
