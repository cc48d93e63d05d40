#include "horoforge/transport.hpp"

#include <algorithm>
#include <cmath>

namespace horoforge {

Segment Segment::line(ChartId c, cplx a, cplx b) {
    Segment s;
    s.kind = Kind::Line;
    s.chart = c;
    s.z0 = a;
    s.z1 = b;
    return s;
}

Segment Segment::arc(ChartId c, cplx center, double radius, double th0, double th1) {
    Segment s;
    s.kind = Kind::Arc;
    s.chart = c;
    s.center = center;
    s.radius = radius;
    s.th0 = th0;
    s.th1 = th1;
    return s;
}

Segment Segment::log_line(ChartId c, cplx u0, cplx u1) {
    Segment s;
    s.kind = Kind::LogLine;
    s.chart = c;
    s.z0 = u0;
    s.z1 = u1;
    return s;
}

cplx Segment::point(double x) const {
    switch (kind) {
    case Kind::Line: return z0 + x * (z1 - z0);
    case Kind::Arc: return center + std::polar(radius, th0 + x * (th1 - th0));
    default: return std::exp(z0 + x * (z1 - z0));
    }
}

cplx Segment::velocity(double x) const {
    switch (kind) {
    case Kind::Line: return z1 - z0;
    case Kind::Arc: return cplx(0.0, th1 - th0) * std::polar(radius, th0 + x * (th1 - th0));
    default: return std::exp(z0 + x * (z1 - z0)) * (z1 - z0);
    }
}

Segment Segment::reversed() const {
    Segment s = *this;
    std::swap(s.z0, s.z1);
    std::swap(s.th0, s.th1);
    return s;
}

double Segment::length() const {
    switch (kind) {
    case Kind::Line: return std::abs(z1 - z0);
    case Kind::Arc: return radius * std::abs(th1 - th0);
    default: return std::abs(z1 - z0);
    }
}

PathSpec PathSpec::reversed() const {
    PathSpec p;
    for (auto it = segs.rbegin(); it != segs.rend(); ++it) p.segs.push_back(it->reversed());
    return p;
}

PathSpec route_in_plane(ChartId chart, cplx a, cplx b, const std::vector<cplx>& obstacles, double radius) {
    PathSpec path;
    cplx cur = a;
    for (std::size_t guard = 0; guard <= obstacles.size() + 2; ++guard) {
        const cplx d = b - cur;
        const double L2 = std::norm(d);
        if (L2 == 0.0) return path;
        double best = 2.0, s_exit = 0.0;
        int hit = -1;
        for (std::size_t k = 0; k < obstacles.size(); ++k) {
            const cplx f = cur - obstacles[k];
            const double B = 2.0 * (std::conj(f) * d).real();
            const double C = std::norm(f) - radius * radius;
            const double disc = B * B - 4.0 * L2 * C;
            if (disc <= 0) continue;
            const double sq = std::sqrt(disc);
            const double s1 = (-B - sq) / (2.0 * L2), s2 = (-B + sq) / (2.0 * L2);
            if (s2 <= 1e-9 || s1 >= 1.0 - 1e-9 || s2 - s1 <= 1e-9) continue;
            if (s1 < -1e-9) throw GeometryError("route starts inside an excluded disk");
            if (s1 < best) {
                best = s1;
                s_exit = s2;
                hit = static_cast<int>(k);
            }
        }
        if (hit < 0) {
            path.segs.push_back(Segment::line(chart, cur, b));
            return path;
        }
        const cplx c = obstacles[hit];
        const cplx E = cur + std::max(best, 0.0) * d;
        const cplx X = s_exit >= 1.0 - 1e-12 ? b : cur + s_exit * d;
        const double tE = std::arg(E - c);
        double dt = std::arg(X - c) - tE;
        while (dt > kPi) dt -= 2 * kPi;
        while (dt <= -kPi) dt += 2 * kPi;
        if (std::abs(std::abs(dt) - kPi) < 1e-12) dt = kPi;
        if (std::abs(E - cur) > 1e-14) path.segs.push_back(Segment::line(chart, cur, E));
        path.segs.push_back(Segment::arc(chart, c, radius, tE, tE + dt));
        cur = X;
        if (cur == b) return path;
    }
    throw GeometryError("detour routing did not terminate");
}

double transition_mismatch(const SurfaceModel& M, const PathSpec& path) {
    double worst = 0.0;
    for (std::size_t k = 1; k < path.segs.size(); ++k) {
        const Segment& A = path.segs[k - 1];
        const Segment& B = path.segs[k];
        if (A.chart == B.chart) {
            worst = std::max(worst, std::abs(A.end() - B.start()));
            continue;
        }
        const Segment& pl = A.chart.is_plane() ? A : B;
        const Segment& nk = A.chart.is_plane() ? B : A;
        const cplx zp = A.chart.is_plane() ? A.end() : B.start();
        const cplx zn = A.chart.is_plane() ? B.start() : A.end();
        const int pair = nk.chart.index;
        const auto& P = M.pairs[pair];
        double mis;
        if (pl.chart.index == P.i)
            mis = std::abs((zp - M.p_ij(pair)) * zn - M.t_ij(pair));
        else
            mis = std::abs((zp - M.p_ji(pair)) / zn - M.t_ji(pair));
        worst = std::max(worst, mis);
    }
    return worst;
}

namespace {

Mat2C rk4_direct(const FieldFn& A, const Segment& s, int N, const Mat2C& Y0) {
    Mat2C Y = Y0;
    const double h = 1.0 / N;
    auto f = [&](double x) { return A(s.chart, s.point(x)) * s.velocity(x); };
    Mat2C fa = f(0.0);
    for (int n = 0; n < N; ++n) {
        const double x = n * h;
        const Mat2C fm = f(x + 0.5 * h);
        const Mat2C fb = f(x + h);
        const Mat2C k1 = fa * Y;
        const Mat2C k2 = fm * (Y + (0.5 * h) * k1);
        const Mat2C k3 = fm * (Y + (0.5 * h) * k2);
        const Mat2C k4 = fb * (Y + h * k3);
        Y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        fa = fb;
    }
    return Y;
}

// V' = B (I + V) with B = E(-z) delta E(z) z'.
Mat2C rk4_interaction(const FieldFn& delta, const Mat2C& N0, const Segment& s, int N) {
    const double h = 1.0 / N;
    auto f = [&](double x) {
        const cplx z = s.point(x);
        const Mat2C E{1.0 + z * N0.m11, z * N0.m12, z * N0.m21, 1.0 + z * N0.m22};
        const Mat2C Em{1.0 - z * N0.m11, -z * N0.m12, -z * N0.m21, 1.0 - z * N0.m22};
        return Em * delta(s.chart, z) * E * s.velocity(x);
    };
    Mat2C V = Mat2C::zero();
    const Mat2C I = Mat2C::identity();
    Mat2C fa = f(0.0);
    for (int n = 0; n < N; ++n) {
        const double x = n * h;
        const Mat2C fm = f(x + 0.5 * h);
        const Mat2C fb = f(x + h);
        const Mat2C k1 = fa * (I + V);
        const Mat2C k2 = fm * (I + V + (0.5 * h) * k1);
        const Mat2C k3 = fm * (I + V + (0.5 * h) * k2);
        const Mat2C k4 = fb * (I + V + h * k3);
        V += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        fa = fb;
    }
    return V;
}

template <class Run>
Mat2C adaptive(Run run, const TransportOptions& opt, std::size_t idx, int& steps, double& err) {
    if (!opt.fixed_steps.empty()) {
        steps = opt.fixed_steps.at(idx);
        err = 0.0;
        return run(steps);
    }
    int N = opt.min_steps;
    Mat2C Yn = run(N);
    while (true) {
        if (2 * N > opt.max_steps) throw StepError("step budget exhausted before reaching the ODE tolerance");
        const Mat2C Y2 = run(2 * N);
        err = (Y2 - Yn).max_abs() / 15.0;
        if (!std::isfinite(err)) throw StepError("non-finite transport");
        if (err <= opt.rel_tol * Y2.max_abs() + opt.abs_tol) {
            steps = 2 * N;
            return Y2;
        }
        N *= 2;
        Yn = Y2;
    }
}

} // namespace

Transport transport(const FieldFn& A, const PathSpec& path, const TransportOptions& opt) {
    Transport T;
    T.matrix = Mat2C::identity();
    for (std::size_t k = 0; k < path.segs.size(); ++k) {
        const Segment& s = path.segs[k];
        int steps = 0;
        double err = 0.0;
        const Mat2C Ys = adaptive([&](int N) { return rk4_direct(A, s, N, Mat2C::identity()); }, opt, k, steps, err);
        T.matrix = Ys * T.matrix;
        T.error += err;
        T.steps.push_back(steps);
    }
    return T;
}

Transport transport_interaction(const FieldFn& delta, const Mat2C& N0, const PathSpec& path,
                                const TransportOptions& opt) {
    Transport T;
    T.matrix = Mat2C::zero();
    for (std::size_t k = 0; k < path.segs.size(); ++k) {
        const Segment& s = path.segs[k];
        if (!s.chart.is_plane() || !(s.chart == path.segs.front().chart))
            throw ValidationError("interaction-picture transport needs a single plane chart");
        int steps = 0;
        double err = 0.0;
        const Mat2C Vs = adaptive([&](int N) { return rk4_interaction(delta, N0, s, N); }, opt, k, steps, err);
        T.matrix = Vs + T.matrix + Vs * T.matrix;
        T.error += err;
        T.steps.push_back(steps);
    }
    return T;
}

Mat2C monodromy_derivative(const FieldFn& A0, const FieldFn& dA, const PathSpec& loop, const TransportOptions& opt) {
    Mat2C Y = Mat2C::identity();
    Mat2C J = Mat2C::zero();
    for (std::size_t k = 0; k < loop.segs.size(); ++k) {
        const Segment& s = loop.segs[k];
        auto run = [&](int N, Mat2C& Yo, Mat2C& Jo) {
            const double h = 1.0 / N;
            Mat2C y = Y, j = J;
            auto fy = [&](double x, const Mat2C& yy) { return A0(s.chart, s.point(x)) * s.velocity(x) * yy; };
            auto fj = [&](double x, const Mat2C& yy) {
                return yy.inverse() * dA(s.chart, s.point(x)) * yy * s.velocity(x);
            };
            for (int n = 0; n < N; ++n) {
                const double x = n * h;
                const Mat2C ky1 = fy(x, y), kj1 = fj(x, y);
                const Mat2C y2 = y + (0.5 * h) * ky1;
                const Mat2C ky2 = fy(x + 0.5 * h, y2), kj2 = fj(x + 0.5 * h, y2);
                const Mat2C y3 = y + (0.5 * h) * ky2;
                const Mat2C ky3 = fy(x + 0.5 * h, y3), kj3 = fj(x + 0.5 * h, y3);
                const Mat2C y4 = y + h * ky3;
                const Mat2C ky4 = fy(x + h, y4), kj4 = fj(x + h, y4);
                y += (h / 6.0) * (ky1 + 2.0 * ky2 + 2.0 * ky3 + ky4);
                j += (h / 6.0) * (kj1 + 2.0 * kj2 + 2.0 * kj3 + kj4);
            }
            Yo = y;
            Jo = j;
        };
        int N = opt.fixed_steps.empty() ? opt.min_steps : opt.fixed_steps.at(k);
        Mat2C Yn, Jn;
        run(N, Yn, Jn);
        if (opt.fixed_steps.empty()) {
            while (true) {
                if (2 * N > opt.max_steps) throw StepError("step budget exhausted in derivative transport");
                Mat2C Y2, J2;
                run(2 * N, Y2, J2);
                const double err = std::max((Y2 - Yn).max_abs(), (J2 - Jn).max_abs()) / 15.0;
                const double scale = std::max(Y2.max_abs(), J2.max_abs());
                Yn = Y2;
                Jn = J2;
                N *= 2;
                if (err <= opt.rel_tol * scale + opt.abs_tol) break;
            }
        }
        Y = Yn;
        J = Jn;
    }
    return Y * J;
}

Mat2C monodromy_of(const Mat2C& Y0, const Mat2C& Pi) { return Y0.inverse() * Pi * Y0; }

} // namespace horoforge
