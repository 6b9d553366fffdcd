#pragma once

#include "bsmp/linalg.hpp"
#include "bsmp/sampling.hpp"

#include <vector>

namespace bsmp {

enum class BasisKind {
    polynomial,          // monomials in W_{t_i} up to total degree q
    piecewise_constant,  // K cells per axis on W_{t_i}
};

struct RegressionBasis {
    BasisKind kind = BasisKind::polynomial;
    int degree_or_cells = 3;
    double ridge = 1e-8;

    void validate() const;
};

/// Multi-indices of total degree 1..degree in `dim` variables, graded order.
std::vector<std::vector<int>> monomial_exponents(int dim, int degree);

/// A fitted conditional expectation E[. | W_{t_i}] and its in-sample values.
///
/// Polynomial fits are computed in the scaled variable W / sqrt(t_i) with the
/// intercept left unpenalized and the other coefficients ridge-regularized on
/// centred features. `coefficients` is reported in raw monomials of W_{t_i}:
/// row 0 is the intercept, row b + 1 multiplies W^exponents[b].
class RegressionFit {
public:
    int step = 0;
    BasisKind kind = BasisKind::polynomial;
    std::vector<std::vector<int>> exponents;
    double scale = 1.0;
    std::vector<double> cell_edges;   // piecewise-constant interior edges
    int cells_per_axis = 1;
    Matrix coefficients;              // basis x k
    RowArray fitted;                  // P x k
    double condition = 1.0;

    /// Evaluate the fitted function at new Brownian states (Q x d).
    RowArray operator()(const RowArray& w) const;
};

/// Least-squares projection of `samples` (P x k) on the basis at step i.
/// At t_0 the basis is the constant only, so the fit is the cross-path mean.
/// Constant columns are reproduced exactly.
RegressionFit regress(const PathEnsemble& ensemble, int step, const RowArray& samples, const RegressionBasis& basis);

}  // namespace bsmp
