#pragma once

#include "bsmp/linalg.hpp"

#include <variant>
#include <vector>

namespace bsmp {

struct Box {
    Vector lo;
    Vector hi;
};

struct Ball {
    Vector center;
    double radius = 1.0;
};

struct Halfspace {
    Vector normal;   // a in a.x <= offset
    double offset = 0.0;
};

struct HalfspaceIntersection {
    std::vector<Halfspace> faces;
};

/// Closed convex control domain U with its Euclidean projector.
class ControlSet {
public:
    using Kind = std::variant<Box, Ball, HalfspaceIntersection>;

    ControlSet() = default;
    explicit ControlSet(Kind kind);

    static ControlSet box(Vector lo, Vector hi);
    static ControlSet interval(double lo, double hi);
    static ControlSet ball(Vector center, double radius);
    static ControlSet halfspaces(std::vector<Halfspace> faces);

    int dim() const { return dim_; }
    const Kind& kind() const { return kind_; }

    /// argmin over U of |u - x|. Halfspace intersections use Dykstra's
    /// alternating projections.
    Vector project(const VecRef& x) const;

    bool contains(const VecRef& x, double tol = 1e-12) const;

private:
    Kind kind_;
    int dim_ = 0;
};

inline Vector project_control(const ControlSet& cs, const VecRef& x)
{
    return cs.project(x);
}

}  // namespace bsmp
