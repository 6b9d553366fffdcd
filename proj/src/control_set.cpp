#include "bsmp/control_set.hpp"

#include <cmath>

namespace bsmp {
namespace {

Vector project_halfspace(const Halfspace& h, const Vector& x)
{
    const double excess = h.normal.dot(x) - h.offset;
    if (excess <= 0.0)
        return x;
    return x - (excess / h.normal.squaredNorm()) * h.normal;
}

int kind_dim(const ControlSet::Kind& kind)
{
    return std::visit(
        [](const auto& k) -> int {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Box>) {
                if (k.lo.size() != k.hi.size() || k.lo.size() == 0)
                    throw std::invalid_argument("box bounds must be non-empty and of equal size");
                if ((k.lo.array() > k.hi.array()).any())
                    throw std::invalid_argument("box requires lo <= hi");
                return static_cast<int>(k.lo.size());
            } else if constexpr (std::is_same_v<K, Ball>) {
                if (k.center.size() == 0 || !(k.radius > 0.0))
                    throw std::invalid_argument("ball requires a centre and radius > 0");
                return static_cast<int>(k.center.size());
            } else {
                if (k.faces.empty())
                    throw std::invalid_argument("halfspace intersection needs at least one face");
                const auto m = k.faces.front().normal.size();
                for (const auto& f : k.faces)
                    if (f.normal.size() != m || f.normal.squaredNorm() == 0.0)
                        throw std::invalid_argument("halfspace normals must be non-zero and equal-sized");
                return static_cast<int>(m);
            }
        },
        kind);
}

}  // namespace

ControlSet::ControlSet(Kind kind) : kind_(std::move(kind)), dim_(kind_dim(kind_)) {}

ControlSet ControlSet::box(Vector lo, Vector hi)
{
    return ControlSet(Box{std::move(lo), std::move(hi)});
}

ControlSet ControlSet::interval(double lo, double hi)
{
    return box(Vector::Constant(1, lo), Vector::Constant(1, hi));
}

ControlSet ControlSet::ball(Vector center, double radius)
{
    return ControlSet(Ball{std::move(center), radius});
}

ControlSet ControlSet::halfspaces(std::vector<Halfspace> faces)
{
    return ControlSet(HalfspaceIntersection{std::move(faces)});
}

Vector ControlSet::project(const VecRef& x) const
{
    if (x.size() != dim_)
        throw std::invalid_argument("control dimension mismatch in projection");
    return std::visit(
        [&](const auto& k) -> Vector {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Box>) {
                return x.cwiseMax(k.lo).cwiseMin(k.hi);
            } else if constexpr (std::is_same_v<K, Ball>) {
                const Vector offset = x - k.center;
                const double r = offset.norm();
                if (r <= k.radius)
                    return x;
                return k.center + (k.radius / r) * offset;
            } else {
                Vector current = x;
                if (k.faces.size() == 1)
                    return project_halfspace(k.faces.front(), current);
                if (contains(x))
                    return x;
                // Dykstra: correction terms make the limit the true projection,
                // not just some point of the intersection.
                std::vector<Vector> corrections(k.faces.size(), Vector::Zero(x.size()));
                for (int sweep = 0; sweep < 10000; ++sweep) {
                    const Vector before = current;
                    for (std::size_t f = 0; f < k.faces.size(); ++f) {
                        const Vector shifted = current + corrections[f];
                        current = project_halfspace(k.faces[f], shifted);
                        corrections[f] = shifted - current;
                    }
                    if ((current - before).norm() <= 1e-15 * (1.0 + current.norm()))
                        break;
                }
                return current;
            }
        },
        kind_);
}

bool ControlSet::contains(const VecRef& x, double tol) const
{
    if (x.size() != dim_)
        return false;
    return std::visit(
        [&](const auto& k) -> bool {
            using K = std::decay_t<decltype(k)>;
            if constexpr (std::is_same_v<K, Box>) {
                return (x.array() >= k.lo.array() - tol).all() && (x.array() <= k.hi.array() + tol).all();
            } else if constexpr (std::is_same_v<K, Ball>) {
                return (x - k.center).norm() <= k.radius + tol;
            } else {
                for (const auto& f : k.faces)
                    if (f.normal.dot(x) > f.offset + tol * (1.0 + f.normal.norm()))
                        return false;
                return true;
            }
        },
        kind_);
}

}  // namespace bsmp
