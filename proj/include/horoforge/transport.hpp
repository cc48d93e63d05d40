#pragma once

#include <functional>
#include <vector>

#include "horoforge/lin_hyp.hpp"
#include "horoforge/surface_model.hpp"

namespace horoforge {

struct Segment {
    enum class Kind { Line, Arc, LogLine };
    Kind kind = Kind::Line;
    ChartId chart;
    // Line: endpoints. LogLine: endpoints of u with z = exp(u).
    cplx z0{0.0}, z1{0.0};
    // Arc: z = center + radius e^{i theta}.
    cplx center{0.0};
    double radius = 1.0, th0 = 0.0, th1 = 0.0;

    static Segment line(ChartId c, cplx a, cplx b);
    static Segment arc(ChartId c, cplx center, double radius, double th0, double th1);
    static Segment log_line(ChartId c, cplx u0, cplx u1);

    cplx point(double x) const;
    // dz/dx on [0, 1].
    cplx velocity(double x) const;
    cplx start() const { return point(0.0); }
    cplx end() const { return point(1.0); }
    Segment reversed() const;
    double length() const;
};

struct PathSpec {
    std::vector<Segment> segs;
    PathSpec reversed() const;
    void append(const PathSpec& o) { segs.insert(segs.end(), o.segs.begin(), o.segs.end()); }
};

// Straight route from a to b in a plane chart, going around unit disks
// centered at the obstacles along their shorter arc (counterclockwise on ties).
PathSpec route_in_plane(ChartId chart, cplx a, cplx b, const std::vector<cplx>& obstacles, double radius = 1.0);

// Checks |v w - t| at every chart change of a path.
double transition_mismatch(const SurfaceModel& M, const PathSpec& path);

using FieldFn = std::function<Mat2C(const ChartId&, cplx)>;

struct TransportOptions {
    double rel_tol = 1e-10;
    double abs_tol = 1e-15;
    int min_steps = 8;
    int max_steps = 1 << 18;
    // When non-empty, one step count per segment and no adaptivity.
    std::vector<int> fixed_steps;
};

struct Transport {
    Mat2C matrix;
    double error = 0.0;
    std::vector<int> steps;
};

// Principal solution of dY = A Y dz along the path, Y(start) = I.
Transport transport(const FieldFn& A, const PathSpec& path, const TransportOptions& opt = {});

// Interaction picture about E(z) = I + z N for a constant nilpotent N:
// returns V with Y(end) = E(z_end) (I + V) E(z_start)^{-1}, where delta = A - N.
// All segments must lie in one plane chart.
Transport transport_interaction(const FieldFn& delta, const Mat2C& N, const PathSpec& path,
                                const TransportOptions& opt = {});

// Pi_0(gamma) times the integral of Pi_0^{-1} dA Pi_0 along the loop.
Mat2C monodromy_derivative(const FieldFn& A0, const FieldFn& dA, const PathSpec& loop,
                           const TransportOptions& opt = {});

Mat2C monodromy_of(const Mat2C& Y0, const Mat2C& Pi);

} // namespace horoforge
