#include "softguide/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <utility>

#include "softguide/errors.hpp"
#include "softguide/specfun.hpp"

namespace softguide {

namespace {

// Nodes and weights on [-1, 1] by Newton iteration on the Legendre recurrence.
std::pair<std::vector<double>, std::vector<double>> reference_rule(int n) {
    static std::mutex mutex;
    static std::map<int, std::pair<std::vector<double>, std::vector<double>>> cache;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    std::vector<double> x(n), w(n);
    for (int i = 0; i < (n + 1) / 2; ++i) {
        double z = std::cos(specfun::kPi * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0, p1 = z;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            if (n == 1) {
                p1 = z;
                p0 = 1.0;
            }
            dp = n * (z * p1 - p0) / (z * z - 1.0);
            const double dz = p1 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        if (n == 1) {
            z = 0.0;
            dp = 1.0;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = w[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
    if (n == 1) w[0] = 2.0;
    cache.emplace(n, std::make_pair(x, w));
    return {x, w};
}

}  // namespace

Rule1D gauss_legendre(int n, double a, double b) {
    if (n < 1) throw InputError("gauss_legendre: need at least one node");
    auto [x, w] = reference_rule(n);
    Rule1D r;
    r.x.resize(n);
    r.w.resize(n);
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    for (int i = 0; i < n; ++i) {
        r.x[i] = c + h * x[i];
        r.w[i] = h * w[i];
    }
    return r;
}

Rule1D composite_gauss(const std::vector<double>& breaks, int n) {
    Rule1D r;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        Rule1D p = gauss_legendre(n, breaks[k], breaks[k + 1]);
        r.x.insert(r.x.end(), p.x.begin(), p.x.end());
        r.w.insert(r.w.end(), p.w.begin(), p.w.end());
    }
    return r;
}

}  // namespace softguide
