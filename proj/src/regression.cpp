#include "bsmp/regression.hpp"

#include "bsmp/parallel.hpp"

#include <cmath>
#include <sstream>

namespace bsmp {

void RegressionBasis::validate() const
{
    if (kind == BasisKind::polynomial && degree_or_cells < 0)
        throw std::invalid_argument("polynomial degree must be >= 0");
    if (kind == BasisKind::piecewise_constant && degree_or_cells < 1)
        throw std::invalid_argument("piecewise-constant basis needs >= 1 cell per axis");
    if (!(ridge >= 0.0))
        throw std::invalid_argument("ridge must be >= 0");
}

std::vector<std::vector<int>> monomial_exponents(int dim, int degree)
{
    std::vector<std::vector<int>> out;
    std::vector<int> current(static_cast<std::size_t>(dim), 0);
    // Enumerate compositions of each total degree, lexicographically.
    auto fill = [&](auto&& self, int index, int remaining) -> void {
        if (index == dim - 1) {
            current[static_cast<std::size_t>(index)] = remaining;
            out.push_back(current);
            return;
        }
        for (int e = remaining; e >= 0; --e) {
            current[static_cast<std::size_t>(index)] = e;
            self(self, index + 1, remaining - e);
        }
    };
    for (int total = 1; total <= degree; ++total)
        fill(fill, 0, total);
    return out;
}

namespace {

double monomial(const double* x, const std::vector<int>& e)
{
    double v = 1.0;
    for (std::size_t j = 0; j < e.size(); ++j)
        for (int k = 0; k < e[j]; ++k)
            v *= x[j];
    return v;
}

// Cross-path mean computed as s_0 + mean(s - s_0): exact for constant columns.
Eigen::RowVectorXd shifted_mean(const RowArray& samples)
{
    const Eigen::Index k = samples.cols();
    const Eigen::Index P = samples.rows();
    const Eigen::RowVectorXd anchor = samples.row(0);
    std::vector<Eigen::RowVectorXd> partial(static_cast<std::size_t>(block_count(P)));
    for_each_block(P, [&](std::ptrdiff_t b, std::ptrdiff_t begin, std::ptrdiff_t end) {
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(k);
        for (std::ptrdiff_t p = begin; p < end; ++p)
            sum += samples.row(p) - anchor;
        partial[static_cast<std::size_t>(b)] = sum;
    });
    Eigen::RowVectorXd total = Eigen::RowVectorXd::Zero(k);
    for (const auto& s : partial)
        total += s;
    return anchor + total / static_cast<double>(P);
}

int cell_index(const double* w, int dim, const std::vector<double>& edges, int cells)
{
    int index = 0;
    for (int j = dim - 1; j >= 0; --j) {
        int c = 0;
        while (c < cells - 1 && w[j] >= edges[static_cast<std::size_t>(c)])
            ++c;
        index = index * cells + c;
    }
    return index;
}

RegressionFit constant_fit(int step, const RowArray& samples)
{
    RegressionFit fit;
    fit.step = step;
    fit.kind = BasisKind::polynomial;
    const Eigen::RowVectorXd mean = shifted_mean(samples);
    fit.coefficients = mean;
    fit.fitted = mean.replicate(samples.rows(), 1);
    return fit;
}

RegressionFit polynomial_fit(const PathEnsemble& ensemble, int step, const RowArray& samples,
                             const RegressionBasis& basis)
{
    const RowArray& w = ensemble.brownian(step);
    const Eigen::Index P = samples.rows();
    const Eigen::Index k = samples.cols();
    const int dim = ensemble.brownian_dim();

    RegressionFit fit;
    fit.step = step;
    fit.kind = BasisKind::polynomial;
    fit.exponents = monomial_exponents(dim, basis.degree_or_cells);
    fit.scale = std::sqrt(ensemble.grid()[step]);
    const auto B = static_cast<Eigen::Index>(fit.exponents.size());

    RowArray features(P, B);
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        std::vector<double> x(static_cast<std::size_t>(dim));
        for (std::ptrdiff_t p = begin; p < end; ++p) {
            for (int j = 0; j < dim; ++j)
                x[static_cast<std::size_t>(j)] = w(p, j) / fit.scale;
            for (Eigen::Index b = 0; b < B; ++b)
                features(p, b) = monomial(x.data(), fit.exponents[static_cast<std::size_t>(b)]);
        }
    });

    const Eigen::RowVectorXd feature_mean = shifted_mean(features);
    const Eigen::RowVectorXd sample_mean = shifted_mean(samples);

    std::vector<Matrix> gram_part(static_cast<std::size_t>(block_count(P)));
    std::vector<Matrix> rhs_part(gram_part.size());
    for_each_block(P, [&](std::ptrdiff_t b, std::ptrdiff_t begin, std::ptrdiff_t end) {
        const auto rows = end - begin;
        const Matrix fc = features.middleRows(begin, rows).rowwise() - feature_mean;
        const Matrix sc = samples.middleRows(begin, rows).rowwise() - sample_mean;
        gram_part[static_cast<std::size_t>(b)] = fc.transpose() * fc;
        rhs_part[static_cast<std::size_t>(b)] = fc.transpose() * sc;
    });
    Matrix gram = Matrix::Zero(B, B);
    Matrix rhs = Matrix::Zero(B, k);
    for (std::size_t b = 0; b < gram_part.size(); ++b) {
        gram += gram_part[b];
        rhs += rhs_part[b];
    }
    gram /= static_cast<double>(P);
    rhs /= static_cast<double>(P);
    gram.diagonal().array() += basis.ridge;

    const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    fit.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!std::isfinite(fit.condition) || fit.condition > 1e13) {
        std::ostringstream os;
        os << "regression at step " << step << " is rank deficient beyond ridge repair (condition estimate "
           << fit.condition << ")";
        throw NumericalError(os.str());
    }
    const Eigen::LDLT<Matrix> ldlt(gram);
    const Matrix coef = ldlt.solve(rhs);

    fit.fitted.resize(P, k);
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        const auto rows = end - begin;
        const Matrix fc = features.middleRows(begin, rows).rowwise() - feature_mean;
        fit.fitted.middleRows(begin, rows) = (fc * coef).rowwise() + sample_mean;
    });

    fit.coefficients.resize(B + 1, k);
    fit.coefficients.row(0) = sample_mean - feature_mean * coef;
    for (Eigen::Index b = 0; b < B; ++b) {
        int total = 0;
        for (int e : fit.exponents[static_cast<std::size_t>(b)])
            total += e;
        fit.coefficients.row(b + 1) = coef.row(b) / std::pow(fit.scale, total);
    }
    return fit;
}

RegressionFit piecewise_fit(const PathEnsemble& ensemble, int step, const RowArray& samples, int cells)
{
    const RowArray& w = ensemble.brownian(step);
    const Eigen::Index P = samples.rows();
    const Eigen::Index k = samples.cols();
    const int dim = ensemble.brownian_dim();

    RegressionFit fit;
    fit.step = step;
    fit.kind = BasisKind::piecewise_constant;
    fit.cells_per_axis = cells;
    fit.scale = std::sqrt(ensemble.grid()[step]);
    // Equal-width cells on [-3 sigma, 3 sigma]; the outer cells are unbounded.
    for (int j = 1; j < cells; ++j)
        fit.cell_edges.push_back(fit.scale * (-3.0 + 6.0 * j / cells));

    int total_cells = 1;
    for (int j = 0; j < dim; ++j)
        total_cells *= cells;

    std::vector<int> index(static_cast<std::size_t>(P));
    for_each_block(P, [&](std::ptrdiff_t, std::ptrdiff_t begin, std::ptrdiff_t end) {
        for (std::ptrdiff_t p = begin; p < end; ++p)
            index[static_cast<std::size_t>(p)] = cell_index(w.row(p).data(), dim, fit.cell_edges, cells);
    });

    const Eigen::RowVectorXd mean = shifted_mean(samples);
    std::vector<Eigen::RowVectorXd> anchor(static_cast<std::size_t>(total_cells));
    std::vector<Eigen::RowVectorXd> sum(static_cast<std::size_t>(total_cells), Eigen::RowVectorXd::Zero(k));
    std::vector<double> count(static_cast<std::size_t>(total_cells), 0.0);
    for (Eigen::Index p = 0; p < P; ++p) {
        const auto c = static_cast<std::size_t>(index[static_cast<std::size_t>(p)]);
        if (count[c] == 0.0)
            anchor[c] = samples.row(p);
        sum[c] += samples.row(p) - anchor[c];
        count[c] += 1.0;
    }
    fit.coefficients.resize(total_cells, k);
    for (std::size_t c = 0; c < count.size(); ++c)
        fit.coefficients.row(static_cast<Eigen::Index>(c)) =
            count[c] > 0.0 ? Eigen::RowVectorXd(anchor[c] + sum[c] / count[c]) : mean;

    fit.fitted.resize(P, k);
    for (Eigen::Index p = 0; p < P; ++p)
        fit.fitted.row(p) = fit.coefficients.row(index[static_cast<std::size_t>(p)]);
    return fit;
}

}  // namespace

RowArray RegressionFit::operator()(const RowArray& w) const
{
    const Eigen::Index Q = w.rows();
    const auto dim = static_cast<int>(w.cols());
    RowArray out(Q, coefficients.cols());
    for (Eigen::Index q = 0; q < Q; ++q) {
        if (kind == BasisKind::piecewise_constant) {
            out.row(q) = coefficients.row(cell_index(w.row(q).data(), dim, cell_edges, cells_per_axis));
            continue;
        }
        Eigen::RowVectorXd value = coefficients.row(0);
        for (std::size_t b = 0; b < exponents.size(); ++b)
            value += monomial(w.row(q).data(), exponents[b]) * coefficients.row(static_cast<Eigen::Index>(b) + 1);
        out.row(q) = value;
    }
    return out;
}

RegressionFit regress(const PathEnsemble& ensemble, int step, const RowArray& samples, const RegressionBasis& basis)
{
    basis.validate();
    if (step < 0 || step > ensemble.grid().steps())
        throw std::out_of_range("regression step outside the grid");
    if (samples.rows() != ensemble.paths())
        throw std::invalid_argument("regression samples must have one row per path");
    if (!samples.allFinite()) {
        std::ostringstream os;
        os << "non-finite regression samples at step " << step;
        throw NumericalError(os.str());
    }

    // F_0 is trivial: only constants are measurable.
    if (ensemble.grid()[step] == 0.0 || (basis.kind == BasisKind::polynomial && basis.degree_or_cells == 0))
        return constant_fit(step, samples);
    if (basis.kind == BasisKind::piecewise_constant)
        return piecewise_fit(ensemble, step, samples, basis.degree_or_cells);
    return polynomial_fit(ensemble, step, samples, basis);
}

}  // namespace bsmp
