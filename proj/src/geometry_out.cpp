#include "horoforge/geometry_out.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>
#include <sstream>

namespace horoforge {

namespace {

cplx homography(const Mat2C& H, cplx z) { return (H.m11 * z + H.m12) / (H.m21 * z + H.m22); }

std::vector<cplx> node_positions(const SurfaceModel& M, int i) {
    std::vector<cplx> out;
    for (const auto& r : M.nodes[i]) out.push_back(M.node_pos(r));
    return out;
}

TransportOptions edge_options(double rel_tol) {
    TransportOptions to;
    to.rel_tol = rel_tol;
    to.abs_tol = 1e-15;
    to.min_steps = 2;
    return to;
}

Mat2C run(const FieldFn& A, const Segment& s, double rel_tol) {
    PathSpec p;
    p.segs.push_back(s);
    return transport(A, p, edge_options(rel_tol)).matrix;
}

FieldFn plane_fn(const PlaneField& f) {
    return [&f](const ChartId&, cplx z) { return f.full(z); };
}

FieldFn neck_fn(const NeckField& f) {
    return [&f](const ChartId&, cplx z) { return f(z); };
}

// Branch of log z closest to the reference.
cplx log_near(cplx z, cplx ref) {
    cplx u = std::log(z);
    const double turns = std::round((ref.imag() - u.imag()) / (2 * kPi));
    return u + cplx(0.0, 2 * kPi * turns);
}

} // namespace

BaseFrames base_frames(const SurfaceModel& M, double rel_tol) {
    const int n = M.n();
    BaseFrames B;
    B.F0.assign(n, Mat2C::identity());
    B.via_pair.assign(n, -1);
    if (!(M.tau > 0)) {
        for (int i = 0; i < n; ++i) B.F0[i] = M.M_base(i, 0.0);
        return B;
    }
    B.F0[0] = M.M_base(0, M.s());
    std::vector<bool> seen(n, false);
    seen[0] = true;
    std::deque<int> queue{0};
    MonodromyOptions mo;
    mo.rel_tol = rel_tol;
    while (!queue.empty()) {
        const int i = queue.front();
        queue.pop_front();
        for (int k = 0; k < M.m(); ++k) {
            const auto& P = M.pairs[k];
            if (P.i != i && P.j != i) continue;
            const int other = P.i == i ? P.j : P.i;
            if (seen[other]) continue;
            const PairFrame F = pair_frame(M, k);
            const Mat2C Pi = F.Hinv * pair_monodromy(M, k, mo).Pi_Gamma * F.H;
            B.F0[other] = P.i == i ? Pi * B.F0[i] : Pi.inverse() * B.F0[i];
            B.via_pair[other] = k;
            seen[other] = true;
            queue.push_back(other);
        }
    }
    return B;
}

HalfSpacePoint frame_to_point(const SurfaceModel& M, const Mat2C& F) { return immerse(M.Hg.adjugate() * F); }

Mat2C evaluate_frame(const SurfaceModel& M, const BaseFrames& B, const ChartId& chart, cplx z, double rel_tol) {
    const auto a = M.a_vector();
    TransportOptions to = edge_options(rel_tol);
    to.min_steps = 8;
    if (chart.is_plane()) {
        const int i = chart.index;
        if (!(M.tau > 0)) return M.F_plane0(i, z) * xi_mat(0.0);
        const auto obst = node_positions(M, i);
        PathSpec path;
        cplx inner{0.0};
        bool inside = false;
        for (const cplx& p : obst) {
            if (std::abs(z - p) < 1.0) {
                if (std::abs(z - p) < r_min) throw PoleError("evaluation within r_min of a node");
                inner = p + (z - p) / std::abs(z - p);
                inside = true;
            }
        }
        path = route_in_plane(chart, 0.0, inside ? inner : z, obst);
        if (inside) path.segs.push_back(Segment::line(chart, inner, z));
        const PlaneField f(M, i, a);
        return transport(plane_fn(f), path, to).matrix * B.F0[i];
    }
    const int k = chart.index;
    if (!(M.tau > 0)) throw DomainError("neck charts are empty at tau = 0");
    const auto& P = M.pairs[k];
    const Mat2C Fi = evaluate_frame(M, B, ChartId::plane(P.i), M.p_ij(k) + 1.0, rel_tol);
    const cplx u0 = M.log_t_ij(k);
    PathSpec path;
    path.segs.push_back(Segment::log_line(chart, u0, log_near(z, u0)));
    const NeckField f(M, k, a);
    return transport(neck_fn(f), path, to).matrix * Fi;
}

HalfSpacePoint evaluate_immersion(const SurfaceModel& M, const BaseFrames& B, const ChartId& chart, cplx z,
                                  double rel_tol) {
    return frame_to_point(M, evaluate_frame(M, B, chart, z, rel_tol));
}

Mat2C side_frame(const SurfaceModel& M, int k, int side) {
    const auto& P = M.pairs[k];
    const int own = side == 0 ? P.i : P.j, other = side == 0 ? P.j : P.i;
    const Mat2C Kinv = M.K[own].adjugate();
    const cplx w = homography(Kinv, M.c[other]);
    return Mat2C{1.0, -w, 0.0, 1.0} * Kinv;
}

Mat2C end_frame(const SurfaceModel& M, int i) { return Mat2C{1.0, -M.nu[i], 0.0, 1.0} * M.K[i].adjugate(); }

std::pair<cplx, double> catenoid_point(cplx rho, double size, cplx z) {
    const cplx r2 = rho * rho;
    const cplx h = -(size / 2.0) * (r2 * (1.0 / z - 1.0) + std::conj((z - 1.0) / r2));
    return {h, -size * std::log(std::abs(z))};
}

namespace {

struct Builder {
    const SurfaceModel& M;
    MeshOptions opt;
    BaseFrames B;
    std::vector<cplx> a;
    long next_gid = 0;
    double cap_radius = 0.0;

    struct Ring {
        int patch = -1;
        std::vector<int> local;
    };
    // rings[k][side]
    std::vector<std::array<Ring, 2>> rings;
    SurfaceMesh S;

    Builder(const SurfaceModel& model, const MeshOptions& o) : M(model), opt(o), a(model.a_vector()) {
        if (opt.grid < 4) throw ValidationError("grid must be at least 4");
        if (!(opt.eps > 0 && opt.eps < 1)) throw ValidationError("eps must lie in (0, 1)");
        if (!(opt.R > 0)) throw ValidationError("R must be positive");
        B = base_frames(M);
        rings.resize(M.m());
        double far = 0.0;
        for (int k = 0; k < M.m(); ++k) far = std::max({far, std::abs(M.p_ij(k)), std::abs(M.p_ji(k))});
        cap_radius = std::max(opt.R, far + 2.0);
    }

    int add_patch(MeshPatch p, std::vector<Mat2C> F) {
        S.patches.push_back(std::move(p));
        S.frames.push_back(std::move(F));
        return static_cast<int>(S.patches.size()) - 1;
    }

    void build_cap(int i) {
        const int g = opt.grid;
        const double h = 2 * kPi / g;
        const auto obst = node_positions(M, i);
        std::vector<cplx> pts{0.0};
        std::mt19937_64 rng(1234567u + static_cast<unsigned>(i));
        std::uniform_real_distribution<double> jit(-0.05 * h, 0.05 * h);
        const double Rc = cap_radius;
        const int nmax = static_cast<int>(std::ceil(Rc / h)) + 1;
        const double dy = h * std::sqrt(3.0) / 2.0;
        for (int r = -nmax * 2; r <= nmax * 2; ++r) {
            for (int c = -nmax; c <= nmax; ++c) {
                if (r == 0 && c == 0) continue;
                cplx z(h * (c + 0.5 * (r & 1)), dy * r);
                z += cplx(jit(rng), jit(rng));
                if (std::abs(z) > Rc - 0.7 * h) continue;
                bool ok = std::abs(z) > 0.5 * h;
                for (const cplx& p : obst)
                    if (std::abs(z - p) < 1.0 + 0.7 * h) ok = false;
                if (ok) pts.push_back(z);
            }
        }
        const int nout = static_cast<int>(std::ceil(2 * kPi * Rc / h));
        for (int q = 0; q < nout; ++q) pts.push_back(std::polar(Rc, 2 * kPi * q / nout));
        std::vector<int> ring_start;
        for (const cplx& p : obst) {
            ring_start.push_back(static_cast<int>(pts.size()));
            for (int q = 0; q < g; ++q) pts.push_back(p + std::polar(1.0, 2 * kPi * q / g));
        }
        std::vector<Tri> tris;
        for (const auto& t : delaunay(pts)) {
            const cplx cen = (pts[t[0]] + pts[t[1]] + pts[t[2]]) / 3.0;
            bool keep = std::abs(cen) < Rc;
            for (const cplx& p : obst)
                if (std::abs(cen - p) < 1.0) keep = false;
            if (keep) tris.push_back(t);
        }
        MeshPatch P;
        P.name = "cap_" + std::to_string(i);
        P.chart = ChartId::plane(i);
        P.params = pts;
        P.triangles = tris;
        P.gid.resize(pts.size());
        for (auto& x : P.gid) x = next_gid++;
        const auto F = evaluate_cap(i, pts, tris);
        P.vertices.resize(pts.size());
        for (std::size_t v = 0; v < pts.size(); ++v) P.vertices[v] = frame_to_point(M, F[v]);
        const int id = add_patch(std::move(P), F);
        for (std::size_t n = 0; n < obst.size(); ++n) {
            const auto& r = M.nodes[i][n];
            Ring& R = rings[r.pair][r.side];
            R.patch = id;
            R.local.resize(g);
            std::iota(R.local.begin(), R.local.end(), ring_start[n]);
        }
    }

    std::vector<Mat2C> evaluate_cap(int i, const std::vector<cplx>& pts, const std::vector<Tri>& tris) {
        std::vector<Mat2C> F(pts.size());
        if (!(M.tau > 0)) {
            for (std::size_t v = 0; v < pts.size(); ++v) F[v] = M.F_plane0(i, pts[v]);
            return F;
        }
        std::vector<std::vector<int>> adj(pts.size());
        for (const auto& t : tris)
            for (int k = 0; k < 3; ++k) {
                adj[t[k]].push_back(t[(k + 1) % 3]);
                adj[t[k]].push_back(t[(k + 2) % 3]);
            }
        const PlaneField f(M, i, a);
        const FieldFn fn = plane_fn(f);
        std::vector<bool> done(pts.size(), false);
        F[0] = B.F0[i];
        done[0] = true;
        std::deque<int> queue{0};
        while (!queue.empty()) {
            const int v = queue.front();
            queue.pop_front();
            for (int w : adj[v]) {
                if (done[w]) continue;
                F[w] = run(fn, Segment::line(ChartId::plane(i), pts[v], pts[w]), opt.rel_tol) * F[v];
                done[w] = true;
                queue.push_back(w);
            }
        }
        for (std::size_t v = 0; v < pts.size(); ++v)
            if (!done[v]) throw GeometryError("cap mesh of plane " + std::to_string(i) + " is not connected");
        return F;
    }

    // Collars at tau = 0, evaluated in the plane chart.
    void build_collars_degenerate(int k) {
        const int g = opt.grid;
        const auto& P = M.pairs[k];
        for (int side = 0; side < 2; ++side) {
            const int plane = side == 0 ? P.i : P.j;
            const cplx p = side == 0 ? M.p_ij(k) : M.p_ji(k);
            const Ring& R = rings[k][side];
            MeshPatch C;
            C.name = "collar_" + std::to_string(k) + "_" + std::to_string(side);
            C.chart = ChartId::plane(plane);
            std::vector<Mat2C> F;
            const auto& cap = S.patches[R.patch];
            for (int row = 0; row <= g; ++row) {
                const double rad = std::exp(std::log(opt.eps) * row / g);
                for (int q = 0; q < g; ++q) {
                    if (row == 0) {
                        C.params.push_back(cap.params[R.local[q]]);
                        C.gid.push_back(cap.gid[R.local[q]]);
                        F.push_back(S.frames[R.patch][R.local[q]]);
                    } else {
                        const cplx z = p + std::polar(rad, 2 * kPi * q / g);
                        C.params.push_back(z);
                        C.gid.push_back(next_gid++);
                        F.push_back(M.F_plane0(plane, z));
                    }
                    C.vertices.push_back(frame_to_point(M, F.back()));
                }
            }
            grid_triangles(C.triangles, g, g);
            add_patch(std::move(C), std::move(F));
        }
    }

    static void grid_triangles(std::vector<Tri>& out, int rows, int g) {
        for (int r = 0; r < rows; ++r)
            for (int q = 0; q < g; ++q) {
                const int a0 = r * g + q, a1 = r * g + (q + 1) % g;
                const int b0 = (r + 1) * g + q, b1 = (r + 1) * g + (q + 1) % g;
                out.push_back({a0, b0, b1});
                out.push_back({a0, b1, a1});
            }
    }

    void build_strip(int k) {
        const int g = opt.grid;
        const auto& P = M.pairs[k];
        const cplx li = M.log_t_ij(k), lj = M.log_t_ji(k);
        const double Li = li.real(), Lj = lj.real(), le = std::log(opt.eps);
        const double span = -Lj - Li;
        std::array<double, 6> xb{0.0, (Li - le - Li) / span, (le - Li) / span, (-le - Li) / span,
                                 (-Lj + le - Li) / span, 1.0};
        for (int q = 0; q < 5; ++q)
            if (!(xb[q + 1] > xb[q]))
                throw GeometryError("tau is too large for eps: the neck sections overlap; reduce tau or eps");
        const int rows = 5 * g;
        std::vector<double> xr(rows + 1);
        for (int s = 0; s < 5; ++s)
            for (int r = 0; r <= g; ++r) xr[s * g + r] = xb[s] + (xb[s + 1] - xb[s]) * r / g;
        auto u_of = [&](int row, int q) {
            const double x = xr[row];
            return (1.0 - x) * li + x * (-lj) - cplx(0.0, 2 * kPi * q / g);
        };

        const Ring& Ri = rings[k][0];
        const Ring& Rj = rings[k][1];
        const NeckField nf(M, k, a);
        const FieldFn fn = neck_fn(nf);
        std::vector<std::vector<Mat2C>> F(rows + 1, std::vector<Mat2C>(g));
        std::vector<std::vector<long>> G(rows + 1, std::vector<long>(g));
        for (int q = 0; q < g; ++q) {
            F[0][q] = S.frames[Ri.patch][Ri.local[q]];
            G[0][q] = S.patches[Ri.patch].gid[Ri.local[q]];
            // z = w_j / t_ji on the j side, so the ring runs the other way.
            G[rows][q] = S.patches[Rj.patch].gid[Rj.local[(g - q) % g]];
        }
        for (int r = 1; r < rows; ++r)
            for (int q = 0; q < g; ++q) G[r][q] = next_gid++;
        auto radial = [&](int r0, int r1) {
            parallel_for(g, opt.threads, [&](int q) {
                for (int r = r0 + 1; r <= r1; ++r)
                    F[r][q] = run(fn, Segment::log_line(ChartId::neck(k), u_of(r - 1, q), u_of(r, q)),
                                  opt.rel_tol) *
                              F[r - 1][q];
            });
        };
        radial(0, g);
        // The collar rows come from the plane chart. From the transition on,
        // rotate in the neck chart so the neck agrees with the direct route.
        for (int q = 1; q < g; ++q)
            F[g][q] = run(fn, Segment::log_line(ChartId::neck(k), u_of(g, q - 1), u_of(g, q)), opt.rel_tol) *
                      F[g][q - 1];
        radial(g, rows);
        for (int q = 0; q < g; ++q) {
            const HalfSpacePoint a1 = frame_to_point(M, F[rows][q]);
            const int qj = Rj.local[(g - q) % g];
            const HalfSpacePoint a2 = S.patches[Rj.patch].vertices[qj];
            const double d = std::hypot(a1.x1 - a2.x1, a1.x2 - a2.x2, a1.x3 - a2.x3);
            S.diag.seam_mismatch = std::max(S.diag.seam_mismatch, d);
            F[rows][q] = S.frames[Rj.patch][qj];
        }
        static const char* names[5] = {"collar_", "transition_", "neck_", "transition_", "collar_"};
        for (int s = 0; s < 5; ++s) {
            MeshPatch C;
            C.name = std::string(names[s]) + std::to_string(k) + (s == 2 ? "" : (s < 2 ? "_0" : "_1"));
            C.chart = (s == 0) ? ChartId::plane(P.i) : (s == 4 ? ChartId::plane(P.j) : ChartId::neck(k));
            std::vector<Mat2C> FF;
            for (int r = s * g; r <= (s + 1) * g; ++r)
                for (int q = 0; q < g; ++q) {
                    C.params.push_back(std::exp(u_of(r, q)));
                    C.gid.push_back(G[r][q]);
                    FF.push_back(F[r][q]);
                    C.vertices.push_back(frame_to_point(M, F[r][q]));
                }
            grid_triangles(C.triangles, g, g);
            add_patch(std::move(C), std::move(FF));
        }
        neck_diagnostics(k, F, u_of);
        transition_diagnostics(k, F, u_of);
    }

    template <class U>
    void neck_diagnostics(int k, const std::vector<std::vector<Mat2C>>& F, U&& u_of) {
        const int g = opt.grid;
        const auto& P = M.pairs[k];
        const PairFrame PF = pair_frame(M, k);
        NeckDiagnostics d;
        d.pair = k;
        // Centre 1_ij, reached from the first strip line.
        const cplx u_mid = u_of(2 * g + g / 2, 0);
        const cplx u_c(0.0, 2 * kPi * std::round(u_mid.imag() / (2 * kPi)));
        const NeckField nf(M, k, a);
        const Mat2C Fc = run(neck_fn(nf), Segment::log_line(ChartId::neck(k), u_of(2 * g, 0), u_c), opt.rel_tol) *
                         F[2 * g][0];
        const HalfSpacePoint c = immerse(PF.H * Fc);
        d.center_height = c.x3;
        d.expected_center_height = 1.0 + M.s() * (M.xi[P.i] - M.xi[P.j]) / 2.0;
        const double size0 = M.b0(k), sizeb = std::abs(P.b);
        d.expected_necksize = size0;
        d.necksize = std::numeric_limits<double>::infinity();
        double top = 0, bottom = 0;
        for (int r = 2 * g; r <= 3 * g; ++r) {
            cplx mean = 0.0;
            std::vector<cplx> hz(g);
            for (int q = 0; q < g; ++q) {
                const HalfSpacePoint x = immerse(PF.H * F[r][q]);
                const cplx z = std::exp(u_of(r, q));
                const cplx Xh = cplx(x.x1 - c.x1, x.x2 - c.x2) / M.tau;
                const double Xv = (x.x3 - c.x3) / M.tau;
                const auto [h0, v0] = catenoid_point(PF.rho, size0, z);
                const auto [hb, vb] = catenoid_point(PF.rho, sizeb, z);
                d.deviation_b0 = std::max(d.deviation_b0, std::hypot(std::abs(Xh - h0), Xv - v0));
                d.deviation_b = std::max(d.deviation_b, std::hypot(std::abs(Xh - hb), Xv - vb));
                hz[q] = Xh;
                mean += Xh;
                if (r == 2 * g) top += x.x3;
                if (r == 3 * g) bottom += x.x3;
            }
            mean /= static_cast<double>(g);
            double rad = 0;
            for (const cplx& h : hz) rad += std::abs(h - mean);
            d.necksize = std::min(d.necksize, rad / g);
        }
        d.rings_ordered = top > bottom;
        S.diag.necks.push_back(d);
    }

    template <class U>
    void transition_diagnostics(int k, const std::vector<std::vector<Mat2C>>& F, U&& u_of) {
        const int g = opt.grid;
        const auto& P = M.pairs[k];
        for (int side = 0; side < 2; ++side) {
            const Mat2C H = side_frame(M, k, side);
            const int r0 = side == 0 ? g : 3 * g;
            for (int r = r0; r <= r0 + g; ++r)
                for (int q = 0; q < g; ++q) {
                    const HalfSpacePoint x = immerse(H * F[r][q]);
                    const cplx z = std::exp(u_of(r, q));
                    const BoundaryPoint G0 = gauss_map_G0(M, ChartId::neck(k), z);
                    const BoundaryPoint Gh = act_boundary(H, G0);
                    const double proxy = Gh.infinite ? 0.0 : x.x3 / std::abs(Gh.z - cplx(x.x1, x.x2));
                    S.diag.max_angle_proxy = std::max(S.diag.max_angle_proxy, proxy);
                    S.diag.max_transition_dev = std::max(S.diag.max_transition_dev, std::abs(x.x3 - 1.0));
                }
        }
        (void)P;
    }

    void cap_diagnostics() {
        S.diag.min_cap_height = std::numeric_limits<double>::infinity();
        S.diag.base_height.assign(M.n(), 0.0);
        for (int i = 0; i < M.n(); ++i) {
            const Mat2C Kinv = M.K[i].adjugate();
            S.diag.base_height[i] = immerse(Kinv * B.F0[i]).x3;
        }
        S.diag.min_x3 = std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < S.patches.size(); ++p) {
            const auto& P = S.patches[p];
            S.diag.degenerate += count_degenerate(P);
            for (const auto& v : P.vertices) S.diag.min_x3 = std::min(S.diag.min_x3, v.x3);
            if (P.name.rfind("cap_", 0) != 0 && P.name.rfind("collar_", 0) != 0) continue;
            int plane = P.chart.index;
            if (P.name.rfind("collar_", 0) == 0) {
                // collar_<k>_<side>
                const auto us = P.name.rfind('_');
                const int k = std::stoi(P.name.substr(7, us - 7));
                plane = P.name.back() == '0' ? M.pairs[k].i : M.pairs[k].j;
            }
            const Mat2C Kinv = M.K[plane].adjugate();
            for (const auto& F : S.frames[p]) S.diag.min_cap_height = std::min(S.diag.min_cap_height, immerse(Kinv * F).x3);
        }
    }

    SurfaceMesh build() {
        for (int i = 0; i < M.n(); ++i) build_cap(i);
        for (int k = 0; k < M.m(); ++k) {
            if (M.tau > 0)
                build_strip(k);
            else
                build_collars_degenerate(k);
        }
        cap_diagnostics();
        S.cap_radius = cap_radius;
        return std::move(S);
    }
};

} // namespace

SurfaceMesh build_surface(const SurfaceModel& M, const MeshOptions& opt) { return Builder(M, opt).build(); }

const MeshPatch& find_patch(const SurfaceMesh& S, const std::string& name) {
    for (const auto& p : S.patches)
        if (p.name == name) return p;
    throw ValidationError("no patch named '" + name + "'");
}

MeshPatch build_horosphere_cap(const SurfaceModel& M, int i, const MeshOptions& opt) {
    if (i < 0 || i >= M.n()) throw ValidationError("horosphere index out of range");
    const SurfaceMesh S = build_surface(M, opt);
    std::vector<MeshPatch> parts{find_patch(S, "cap_" + std::to_string(i))};
    for (const auto& r : M.nodes[i]) parts.push_back(find_patch(S, "collar_" + std::to_string(r.pair) + "_" + std::to_string(r.side)));
    MeshPatch out = merge_patches(parts, "cap_" + std::to_string(i));
    out.chart = ChartId::plane(i);
    return out;
}

MeshPatch build_neck(const SurfaceModel& M, int k, const MeshOptions& opt) {
    if (k < 0 || k >= M.m()) throw ValidationError("pair index out of range");
    if (!(M.tau > 0)) throw DomainError("the neck is closed at tau = 0");
    return find_patch(build_surface(M, opt), "neck_" + std::to_string(k));
}

MeshPatch build_transition(const SurfaceModel& M, int k, int side, const MeshOptions& opt) {
    if (k < 0 || k >= M.m() || (side != 0 && side != 1)) throw ValidationError("pair index or side out of range");
    if (!(M.tau > 0)) throw DomainError("transition regions are empty at tau = 0");
    return find_patch(build_surface(M, opt), "transition_" + std::to_string(k) + "_" + std::to_string(side));
}

double cap_horosphere_error(const SurfaceModel& M, const SurfaceMesh& S) {
    double worst = 0.0;
    for (const auto& P : S.patches) {
        if (!P.chart.is_plane()) continue;
        const Horosphere& h = M.original[P.chart.index];
        for (const auto& v : P.vertices) {
            double e;
            if (h.is_plane()) {
                e = std::abs(v.x3 - h.h);
            } else {
                const double dx = v.x1 - h.p.real(), dy = v.x2 - h.p.imag(), dz = v.x3 - h.R;
                e = std::abs(std::sqrt(dx * dx + dy * dy + dz * dz) - h.R);
            }
            worst = std::max(worst, e);
        }
    }
    return worst;
}

void end_spectrum(EndAnalysis& e) {
    const cplx ab = e.alpha * e.beta;
    e.delta = 1.0 + 4.0 * ab;
    const cplx sq = std::sqrt(e.delta);
    e.eig1 = (-1.0 + sq) / 2.0;
    e.eig2 = (-1.0 - sq) / 2.0;
    e.exponent = (1.0 - sq).real();
    const double nearest = std::round(sq.real());
    e.resonant = nearest != 0.0 && std::abs(sq - cplx(nearest, 0.0)) < 1e-6;
}

MeshPatch build_end_patch(const SurfaceModel& M, const BaseFrames& B, int i, double r_lo, double r_hi, int n_ang,
                          int n_rad, std::vector<Mat2C>* frames, long gid_base) {
    if (!(r_hi > r_lo && r_lo > 0)) throw ValidationError("end radii must satisfy 0 < r_lo < r_hi");
    const double mu = std::abs(M.mu[i]);
    const double z_lo = r_lo / mu, z_hi = r_hi / mu;
    const auto obst = node_positions(M, i);
    for (const cplx& p : obst)
        if (std::abs(p) + 1.0 >= z_lo) throw GeometryError("end annulus overlaps the node disks; raise r_lo");
    const auto a = M.a_vector();
    const PlaneField f(M, i, a);
    const FieldFn fn = plane_fn(f);
    const ChartId ch = ChartId::plane(i);
    TransportOptions to = edge_options(1e-9);
    const Mat2C F_start = transport(fn, route_in_plane(ch, 0.0, z_lo, obst), to).matrix * B.F0[i];
    std::vector<Mat2C> ring(n_ang);
    ring[0] = F_start;
    for (int q = 1; q < n_ang; ++q)
        ring[q] = run(fn, Segment::arc(ch, 0.0, z_lo, 2 * kPi * (q - 1) / n_ang, 2 * kPi * q / n_ang), 1e-9) *
                  ring[q - 1];
    MeshPatch P;
    P.name = "end_" + std::to_string(i);
    P.chart = ch;
    std::vector<Mat2C> Fs;
    const double L0 = std::log(z_lo), L1 = std::log(z_hi);
    std::vector<Mat2C> cur = ring;
    for (int r = 0; r <= n_rad; ++r) {
        const double L = L0 + (L1 - L0) * r / n_rad;
        for (int q = 0; q < n_ang; ++q) {
            const double th = 2 * kPi * q / n_ang;
            if (r > 0) {
                const double Lp = L0 + (L1 - L0) * (r - 1) / n_rad;
                cur[q] = run(fn, Segment::log_line(ch, cplx(Lp, th), cplx(L, th)), 1e-9) * cur[q];
            }
            P.params.push_back(std::polar(std::exp(L), th));
            P.gid.push_back(gid_base++);
            Fs.push_back(cur[q]);
            P.vertices.push_back(frame_to_point(M, cur[q]));
        }
    }
    for (int r = 0; r < n_rad; ++r)
        for (int q = 0; q < n_ang; ++q) {
            const int a0 = r * n_ang + q, a1 = r * n_ang + (q + 1) % n_ang;
            const int b0 = (r + 1) * n_ang + q, b1 = (r + 1) * n_ang + (q + 1) % n_ang;
            P.triangles.push_back({a0, b0, b1});
            P.triangles.push_back({a0, b1, a1});
        }
    if (frames) *frames = std::move(Fs);
    return P;
}

EndAnalysis analyze_end(const SurfaceModel& M, const BaseFrames& B, int i, double r_lo, double r_hi, int n_ang,
                        int n_rad) {
    if (i < 0 || i >= M.n()) throw ValidationError("end index out of range");
    EndAnalysis e;
    e.end = i;
    const Mat2C He = end_frame(M, i);
    const auto a = M.a_vector();
    double zeta_model = 0.0, zeta = 0.0;
    for (const auto& r : M.nodes[i]) {
        zeta_model += M.pairs[r.pair].b.real();
        zeta += M.b0(r.pair);
    }
    e.tau_zeta_model = M.tau * zeta_model;
    e.tau_zeta = M.tau * zeta;
    if (!(M.tau > 0)) {
        e.alpha = 0.0;
        e.beta = 0.0;
        end_spectrum(e);
        return e;
    }
    // G - c_i summed directly to avoid cancellation near the end.
    auto delta_G = [&](cplx z) {
        cplx d = 0.0;
        for (const auto& r : M.nodes[i]) {
            const auto& P = M.pairs[r.pair];
            d += a[r.pair] * (M.c[P.j] - M.c[P.i]) / (2.0 * M.lambda[i]) / (z - M.node_pos(r));
        }
        return d;
    };
    auto G_hat = [&](cplx z) {
        const cplx d = delta_G(z);
        return (He.m11 * M.c[i] + He.m12 + He.m11 * d) / (He.m21 * d);
    };
    double far = 0.0;
    for (const auto& r : M.nodes[i]) far = std::max(far, std::abs(M.node_pos(r)));
    const double Z = 1e4 * (far + 1.0);
    e.alpha = (G_hat(Z) - G_hat(-Z)) / (2.0 * Z);
    const Mat2C Hinv = He.adjugate();
    const Mat2C A1 = He * connection_A(M, ChartId::plane(i), Z) * Hinv;
    const Mat2C A2 = He * connection_A(M, ChartId::plane(i), -Z) * Hinv;
    e.lam_hat = 0.5 * (A1.m12 + A2.m12);
    e.beta = e.lam_hat / (e.alpha * e.alpha);
    end_spectrum(e);

    std::vector<Mat2C> F;
    build_end_patch(M, B, i, r_lo, r_hi, n_ang, n_rad, &F);
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(F.size());
    for (const auto& Fv : F) {
        const HalfSpacePoint x = immerse(He * Fv);
        const double lx = std::log(std::hypot(x.x1, x.x2)), ly = std::log(x.x3);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    e.fitted = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return e;
}

nlohmann::json diagnostics_json(const GeometryDiagnostics& d) {
    nlohmann::json necks = nlohmann::json::array();
    for (const auto& n : d.necks)
        necks.push_back({{"pair", n.pair},
                         {"center_height", n.center_height},
                         {"expected_center_height", n.expected_center_height},
                         {"blowup_deviation_b0", n.deviation_b0},
                         {"blowup_deviation_b", n.deviation_b},
                         {"necksize", n.necksize},
                         {"expected_necksize", n.expected_necksize},
                         {"rings_ordered", n.rings_ordered}});
    return {{"seam_mismatch", d.seam_mismatch},  {"min_cap_height", d.min_cap_height},
            {"base_height", d.base_height},      {"max_angle_proxy", d.max_angle_proxy},
            {"max_transition_dev", d.max_transition_dev}, {"degenerate_triangles", d.degenerate},
            {"min_x3", d.min_x3},                {"necks", necks}};
}

nlohmann::json end_json(const EndAnalysis& e) {
    return {{"end", e.end},
            {"alpha", cplx_json(e.alpha)},
            {"beta", cplx_json(e.beta)},
            {"lambda_hat", cplx_json(e.lam_hat)},
            {"delta", cplx_json(e.delta)},
            {"eigenvalues", {cplx_json(e.eig1), cplx_json(e.eig2)}},
            {"exponent", e.exponent},
            {"fitted", e.fitted},
            {"tau_zeta", e.tau_zeta},
            {"tau_zeta_model", e.tau_zeta_model},
            {"resonant", e.resonant}};
}

std::string ends_csv(const std::vector<EndAnalysis>& ends) {
    std::ostringstream os;
    os.precision(12);
    os << "i,alpha_re,alpha_im,beta_re,beta_im,delta_re,delta_im,exponent,fitted,tau_zeta\n";
    for (const auto& e : ends)
        os << e.end << ',' << e.alpha.real() << ',' << e.alpha.imag() << ',' << e.beta.real() << ','
           << e.beta.imag() << ',' << e.delta.real() << ',' << e.delta.imag() << ',' << e.exponent << ','
           << e.fitted << ',' << e.tau_zeta << '\n';
    return os.str();
}

} // namespace horoforge
