#pragma once

#include <vector>

namespace softguide {

struct Rule1D {
    std::vector<double> x;
    std::vector<double> w;
};

// n-point Gauss-Legendre rule on [a, b].
Rule1D gauss_legendre(int n, double a, double b);

// Composite Gauss-Legendre rule: n points on each panel [breaks[k], breaks[k+1]].
Rule1D composite_gauss(const std::vector<double>& breaks, int n);

}  // namespace softguide
