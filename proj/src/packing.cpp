#include "horoforge/packing.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace horoforge {

Horosphere Horosphere::sphere(cplx p, double R) {
    if (!(R > 0)) throw ValidationError("sphere horosphere needs R > 0");
    Horosphere s;
    s.kind = Kind::Sphere;
    s.p = p;
    s.R = R;
    return s;
}

Horosphere Horosphere::plane(double h) {
    if (!(h > 0)) throw ValidationError("plane horosphere needs h > 0");
    Horosphere s;
    s.kind = Kind::Plane;
    s.h = h;
    return s;
}

BoundaryPoint Horosphere::limit_point() const {
    return is_plane() ? BoundaryPoint::at_infinity() : BoundaryPoint::finite(p);
}

std::array<cplx, 2> Horosphere::null_vector() const {
    if (is_plane()) return {cplx(std::sqrt(2.0 * h)), cplx(0.0)};
    const double r = 1.0 / std::sqrt(R);
    return {p * r, cplx(r)};
}

Horosphere Horosphere::from_null(cplx v1, cplx v2) {
    const double n1 = std::norm(v1), n2 = std::norm(v2);
    if (n2 <= 1e-28 * (n1 + n2)) return plane(n1 / 2.0);
    return sphere(v1 / v2, 1.0 / n2);
}

Horosphere Horosphere::transformed(const Mat2C& H) const {
    const auto v = null_vector();
    return from_null(H.m11 * v[0] + H.m12 * v[1], H.m21 * v[0] + H.m22 * v[1]);
}

Mat2C frame_matrix(const Horosphere& S) {
    const auto v = S.null_vector();
    const double r2 = std::sqrt(2.0);
    Mat2C K;
    K.m11 = v[0] / r2;
    K.m21 = v[1] / r2;
    if (std::abs(v[0]) >= std::abs(v[1])) {
        K.m12 = 0.0;
        K.m22 = r2 / v[0];
    } else {
        K.m12 = -r2 / v[1];
        K.m22 = 0.0;
    }
    return K;
}

const char* to_string(Tangency t) {
    switch (t) {
    case Tangency::Tangent: return "Tangent";
    case Tangency::Disjoint: return "Disjoint";
    default: return "Overlapping";
    }
}

Tangency tangency_test(const Horosphere& a, const Horosphere& b, double tol) {
    if (a.is_plane() && b.is_plane()) {
        return std::abs(a.h - b.h) <= tol * std::max(a.h, b.h) ? Tangency::Overlapping : Tangency::Disjoint;
    }
    if (!a.is_plane() && !b.is_plane()) {
        const double d2 = std::norm(a.p - b.p);
        const double q = 4.0 * a.R * b.R;
        if (d2 <= tol * q) {
            // Same limit point: nested unless identical.
            return std::abs(a.R - b.R) <= tol * std::max(a.R, b.R) ? Tangency::Overlapping : Tangency::Disjoint;
        }
        if (std::abs(d2 - q) <= tol * q) return Tangency::Tangent;
        return d2 > q ? Tangency::Disjoint : Tangency::Overlapping;
    }
    const Horosphere& s = a.is_plane() ? b : a;
    const Horosphere& pl = a.is_plane() ? a : b;
    const double d = 2.0 * s.R;
    if (std::abs(d - pl.h) <= tol * pl.h) return Tangency::Tangent;
    return d < pl.h ? Tangency::Disjoint : Tangency::Overlapping;
}

std::vector<Edge> compute_tangencies(const std::vector<Horosphere>& hs) {
    std::vector<Edge> out;
    const int n = static_cast<int>(hs.size());
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (tangency_test(hs[i], hs[j]) == Tangency::Tangent) out.emplace_back(i, j);
    return out;
}

Packing make_packing(std::vector<Horosphere> hs) {
    Packing P;
    P.tangencies = compute_tangencies(hs);
    P.horospheres = std::move(hs);
    return P;
}

void validate_packing(const Packing& P) {
    const int n = P.n();
    std::vector<Edge> listed = P.tangencies;
    for (auto& e : listed) {
        if (e.first > e.second) std::swap(e.first, e.second);
        if (e.first < 0 || e.second >= n || e.first == e.second)
            throw ValidationError("tangency index out of range");
    }
    std::sort(listed.begin(), listed.end());
    if (std::adjacent_find(listed.begin(), listed.end()) != listed.end())
        throw ValidationError("duplicate tangency entry");
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const Tangency t = tangency_test(P.horospheres[i], P.horospheres[j]);
            const bool in_list = std::binary_search(listed.begin(), listed.end(), Edge{i, j});
            if (t == Tangency::Overlapping)
                throw ValidationError("horospheres " + std::to_string(i) + " and " + std::to_string(j) + " overlap");
            if ((t == Tangency::Tangent) != in_list)
                throw ValidationError("tangency list disagrees with geometry at pair (" + std::to_string(i) + "," +
                                      std::to_string(j) + ")");
        }
    }
}

int count_components(int n, const std::vector<Edge>& edges) {
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    int comps = n;
    for (const auto& [a, b] : edges) {
        const int ra = find(a), rb = find(b);
        if (ra != rb) {
            parent[ra] = rb;
            --comps;
        }
    }
    return comps;
}

bool is_connected(const Packing& P) {
    return P.n() > 0 && count_components(P.n(), P.tangencies) == 1;
}

Packing build_lattice_packing(double R) {
    if (!(R >= 0)) throw ValidationError("lattice radius must be >= 0");
    const double s3 = std::sqrt(3.0) / 2.0;
    const int N = static_cast<int>(std::ceil(R / s3)) + 1;
    std::vector<std::pair<int, int>> idx;
    for (int b = -N; b <= N; ++b) {
        for (int a = -2 * N - 1; a <= 2 * N + 1; ++a) {
            const cplx p(a + 0.5 * b, s3 * b);
            if (std::abs(p) <= R + 1e-9) idx.emplace_back(b, a);
        }
    }
    std::sort(idx.begin(), idx.end());
    std::vector<Horosphere> hs{Horosphere::plane(1.0)};
    for (const auto& [b, a] : idx) hs.push_back(Horosphere::sphere(cplx(a + 0.5 * b, s3 * b), 0.5));
    return make_packing(std::move(hs));
}

std::pair<Horosphere, Horosphere> solve_apollonius_tangent(const Horosphere& S1, const Horosphere& S2,
                                                           const Horosphere& S3) {
    if (tangency_test(S1, S2) != Tangency::Tangent || tangency_test(S1, S3) != Tangency::Tangent ||
        tangency_test(S2, S3) != Tangency::Tangent)
        throw DegenerateError("Apollonius inputs are not pairwise tangent");
    const Mat2C K = frame_matrix(S1);
    const Mat2C Kinv = K.adjugate();
    const Horosphere T2 = S2.transformed(Kinv);
    const Horosphere T3 = S3.transformed(Kinv);
    if (T2.is_plane() || T3.is_plane()) throw DegenerateError("Apollonius normalization failed");
    const cplx u = T3.p - T2.p;
    const cplx rot = std::polar(1.0, kPi / 3.0);
    Horosphere a = Horosphere::sphere(T2.p + u * rot, 0.5).transformed(K);
    Horosphere b = Horosphere::sphere(T2.p + u * std::conj(rot), 0.5).transformed(K);
    auto key = [](const Horosphere& h) {
        return std::make_tuple(h.is_plane() ? 1 : 0, h.is_plane() ? 0.0 : h.p.real(), h.is_plane() ? 0.0 : h.p.imag());
    };
    if (key(b) < key(a)) std::swap(a, b);
    return {a, b};
}

Packing build_apollonian_packing(int steps, std::uint64_t choice_seed) {
    if (steps < 0) throw ValidationError("steps must be >= 0");
    std::vector<Horosphere> hs{Horosphere::plane(1.0), Horosphere::sphere(0.0, 0.5), Horosphere::sphere(1.0, 0.5)};
    std::vector<Edge> edges{{0, 1}, {0, 2}, {1, 2}};
    struct Face {
        std::array<int, 3> v;
        std::array<Horosphere, 2> sol;
        std::array<bool, 2> used;
    };
    auto make_face = [&](int a, int b, int c) {
        auto [x, y] = solve_apollonius_tangent(hs[a], hs[b], hs[c]);
        return Face{{a, b, c}, {x, y}, {false, false}};
    };
    // Admissible: overlaps nothing and touches only the three horospheres of its face.
    auto fits = [&](const Face& f, const Horosphere& cand) {
        for (int i = 0; i < static_cast<int>(hs.size()); ++i) {
            const Tangency t = tangency_test(cand, hs[i]);
            if (t == Tangency::Overlapping) return false;
            if (t == Tangency::Tangent && std::find(f.v.begin(), f.v.end(), i) == f.v.end()) return false;
        }
        return true;
    };
    std::vector<Face> faces{make_face(0, 1, 2)};
    std::mt19937_64 rng(choice_seed);
    for (int step = 0; step < steps; ++step) {
        // Faces whose open solutions are all filled are dropped lazily.
        for (auto& f : faces)
            for (int k = 0; k < 2; ++k)
                if (!f.used[k] && !fits(f, f.sol[k])) f.used[k] = true;
        faces.erase(std::remove_if(faces.begin(), faces.end(), [](const Face& f) { return f.used[0] && f.used[1]; }),
                    faces.end());
        if (faces.empty()) throw GeometryError("no open interstice left");
        const std::size_t fi = std::uniform_int_distribution<std::size_t>(0, faces.size() - 1)(rng);
        const int first = static_cast<int>(rng() & 1u);
        Face& f = faces[fi];
        int pick = -1;
        for (int k : {first, 1 - first}) {
            if (!f.used[k] && fits(f, f.sol[k])) {
                pick = k;
                break;
            }
        }
        if (pick < 0) throw GeometryError("both Apollonius solutions overlap the packing");
        const Horosphere X = f.sol[pick];
        f.used[pick] = true;
        const auto v = f.v;
        const int xi = static_cast<int>(hs.size());
        hs.push_back(X);
        for (int a : v) edges.emplace_back(a, xi);
        faces.push_back(make_face(v[0], v[1], xi));
        faces.push_back(make_face(v[0], v[2], xi));
        faces.push_back(make_face(v[1], v[2], xi));
    }
    Packing P;
    P.horospheres = std::move(hs);
    P.tangencies = compute_tangencies(P.horospheres);
    std::sort(edges.begin(), edges.end());
    if (edges != P.tangencies) throw InvariantViolation("Apollonian tangency bookkeeping disagrees with geometry");
    return P;
}

namespace {

Horocycle circle_through(cplx a, cplx b, cplx c) {
    const cplx ab = b - a, ac = c - a;
    const double d = 2.0 * (ab.real() * ac.imag() - ab.imag() * ac.real());
    const double nb = std::norm(ab), nc = std::norm(ac);
    const cplx center = a + cplx((ac.imag() * nb - ab.imag() * nc) / d, (ab.real() * nc - ac.real() * nb) / d);
    return {center, std::abs(center - a)};
}

cplx cayley(cplx z) { return (z - cplx(0, 1)) / (z + cplx(0, 1)); }

bool horocycles_tangent(const Horocycle& a, const Horocycle& b) {
    const double d = std::abs(a.center - b.center), s = a.r + b.r;
    return std::abs(d - s) <= 1e-9 * s;
}

} // namespace

Packing2D build_horocycle_chain(int n) {
    if (n < 2) throw ValidationError("horocycle chain needs n >= 2");
    Packing2D P;
    // The line y = 1 through the point at infinity, which maps to 1.
    P.horocycles.push_back(circle_through(cayley(cplx(-1, 1)), cayley(cplx(0, 1)), cayley(cplx(1, 1))));
    const double shift = 0.5 * (n - 2);
    for (int k = 0; k < n - 1; ++k) {
        const double x = k - shift;
        P.horocycles.push_back(
            circle_through(cayley(cplx(x, 0)), cayley(cplx(x + 0.5, 0.5)), cayley(cplx(x, 1))));
    }
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (horocycles_tangent(P.horocycles[i], P.horocycles[j])) P.tangencies.emplace_back(i, j);
    return P;
}

BoundsReport verify_packing_bounds(const Packing& P, std::uint64_t seed) {
    validate_packing(P);
    BoundsReport r;
    r.n = P.n();
    r.m = P.m();
    r.seed = seed;
    r.genus = r.m - r.n + 1;
    r.components = count_components(r.n, P.tangencies);
    r.cycle_rank = r.m - r.n + r.components;
    if (r.components == 1 && r.genus != r.cycle_rank) throw InvariantViolation("genus differs from cycle rank");
    r.bound_3d_applies = r.n >= 5;
    r.bound_3d = 5 * r.n - 16;
    r.bound_3d_ok = !r.bound_3d_applies || r.m <= r.bound_3d;

    // Move to a generic position where no horosphere is a plane and radii are distinct.
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<double> radii;
    bool generic = false;
    for (int attempt = 0; attempt < 100 && !generic; ++attempt) {
        Mat2C H{cplx(g(rng), g(rng)), cplx(g(rng), g(rng)), cplx(g(rng), g(rng)), cplx(g(rng), g(rng))};
        H = (1.0 / std::sqrt(H.det())) * H;
        radii.clear();
        generic = true;
        for (const auto& h : P.horospheres) {
            const Horosphere t = h.transformed(H);
            if (t.is_plane()) {
                generic = false;
                break;
            }
            radii.push_back(t.R);
        }
        if (!generic) continue;
        std::vector<double> sorted = radii;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 1; k < sorted.size(); ++k)
            if (sorted[k] - sorted[k - 1] <= 1e-9 * sorted[k]) generic = false;
    }
    if (!generic) throw NumericalError("could not find a generic isometry");

    // Peel off the smallest horosphere repeatedly; each must touch at most 5 of the rest.
    std::vector<std::vector<int>> adj(r.n);
    for (const auto& [a, b] : P.tangencies) {
        adj[a].push_back(b);
        adj[b].push_back(a);
    }
    std::vector<int> order(r.n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return radii[a] < radii[b]; });
    std::vector<bool> removed(r.n, false);
    for (int v : order) {
        int deg = 0;
        for (int w : adj[v])
            if (!removed[w]) ++deg;
        r.lemma_max_degree = std::max(r.lemma_max_degree, deg);
        removed[v] = true;
    }
    r.lemma_ok = r.lemma_max_degree <= 5;
    if (!r.bound_3d_ok) throw InvariantViolation("m > 5n - 16");
    if (!r.lemma_ok) throw InvariantViolation("smallest horosphere has more than 5 tangencies");
    return r;
}

BoundsReport2D verify_packing_bounds(const Packing2D& P) {
    BoundsReport2D r;
    r.n = P.n();
    r.m = P.m();
    for (const auto& h : P.horocycles)
        if (std::abs(std::abs(h.center) + h.r - 1.0) > 1e-9) throw ValidationError("horocycle not tangent to the unit circle");
    r.bound_2d = 2 * r.n - 3;
    r.bound_2d_ok = r.m <= r.bound_2d;
    // Boundary point of each horocycle joined to an extra vertex gives a planar graph.
    r.planar_vertices = r.n + 1;
    r.planar_edges = r.m + r.n;
    r.planar_ok = r.planar_vertices < 3 || r.planar_edges <= 3 * r.planar_vertices - 6;
    if (!r.bound_2d_ok || !r.planar_ok) throw InvariantViolation("2D packing bound violated");
    return r;
}

std::string bounds_csv(const BoundsReport& r) {
    std::ostringstream os;
    os << "n,m,genus,cycle_rank,components,bound_3d_applies,bound_3d,bound_3d_ok,lemma_max_degree,lemma_ok,seed\n"
       << r.n << ',' << r.m << ',' << r.genus << ',' << r.cycle_rank << ',' << r.components << ','
       << r.bound_3d_applies << ',' << r.bound_3d << ',' << r.bound_3d_ok << ',' << r.lemma_max_degree << ','
       << r.lemma_ok << ',' << r.seed << '\n';
    return os.str();
}

double angle_check(const Horosphere& S1, const Horosphere& S2, const Horosphere& S3) {
    if (S1.is_plane() || S2.is_plane() || S3.is_plane()) throw PreconditionError("angle check needs three spheres");
    if (!(S1.R < S2.R && S2.R <= S3.R)) throw PreconditionError("need R1 < R2 <= R3");
    if (tangency_test(S1, S2) != Tangency::Tangent || tangency_test(S1, S3) != Tangency::Tangent ||
        tangency_test(S2, S3) == Tangency::Overlapping)
        throw PreconditionError("angle check tangency pattern not met");
    const double theta = std::abs(std::arg((S3.p - S1.p) / (S2.p - S1.p)));
    if (!(theta > kPi / 3.0)) throw InvariantViolation("angle at the smallest horosphere is not above pi/3");
    return theta;
}

ScanReport lattice_ratio_scan(double R_max) {
    if (!(R_max >= 1)) throw ValidationError("R_max must be >= 1");
    ScanReport s;
    double prev = 0.0;
    for (int R = 1; R <= static_cast<int>(std::floor(R_max + 1e-9)); ++R) {
        const Packing P = build_lattice_packing(R);
        ScanRow row{R, P.n(), P.m(), static_cast<double>(P.m()) / P.n(), P.m() <= 4 * (P.n() - 1)};
        s.upper_ok = s.upper_ok && row.upper_ok;
        s.monotone = s.monotone && row.ratio >= prev;
        prev = row.ratio;
        s.fitted_C = std::max(s.fitted_C, (4.0 * row.n - row.m) / std::sqrt(static_cast<double>(row.n)));
        s.rows.push_back(row);
    }
    return s;
}

std::string scan_csv(const ScanReport& s) {
    std::ostringstream os;
    os << "R,n,m,ratio,upper_ok\n";
    os.precision(10);
    for (const auto& r : s.rows) os << r.R << ',' << r.n << ',' << r.m << ',' << r.ratio << ',' << r.upper_ok << '\n';
    os << "# fitted_C=" << s.fitted_C << " monotone=" << s.monotone << '\n';
    return os.str();
}

nlohmann::json packing_to_json(const Packing& P) {
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& h : P.horospheres) {
        if (h.is_plane())
            hs.push_back({{"kind", "plane"}, {"h", h.h}});
        else
            hs.push_back({{"kind", "sphere"}, {"p", {h.p.real(), h.p.imag()}}, {"R", h.R}});
    }
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& [a, b] : P.tangencies) ts.push_back({a, b});
    return {{"horospheres", hs}, {"tangencies", ts}};
}

Packing packing_from_json(const nlohmann::json& j) {
    try {
        std::vector<Horosphere> hs;
        for (const auto& e : j.at("horospheres")) {
            const std::string kind = e.at("kind").get<std::string>();
            if (kind == "plane")
                hs.push_back(Horosphere::plane(e.at("h").get<double>()));
            else if (kind == "sphere")
                hs.push_back(Horosphere::sphere(cplx(e.at("p").at(0).get<double>(), e.at("p").at(1).get<double>()),
                                                e.at("R").get<double>()));
            else
                throw ValidationError("unknown horosphere kind '" + kind + "'");
        }
        Packing P;
        if (j.contains("tangencies")) {
            for (const auto& t : j.at("tangencies")) {
                int a = t.at(0).get<int>(), b = t.at(1).get<int>();
                if (a > b) std::swap(a, b);
                P.tangencies.emplace_back(a, b);
            }
            std::sort(P.tangencies.begin(), P.tangencies.end());
            P.horospheres = std::move(hs);
        } else {
            P = make_packing(std::move(hs));
        }
        return P;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed packing JSON: ") + e.what());
    }
}

nlohmann::json packing2d_to_json(const Packing2D& P) {
    nlohmann::json hs = nlohmann::json::array();
    for (const auto& h : P.horocycles) hs.push_back({{"center", {h.center.real(), h.center.imag()}}, {"r", h.r}});
    nlohmann::json ts = nlohmann::json::array();
    for (const auto& [a, b] : P.tangencies) ts.push_back({a, b});
    return {{"horocycles", hs}, {"tangencies", ts}};
}

Packing2D packing2d_from_json(const nlohmann::json& j) {
    try {
        Packing2D P;
        for (const auto& e : j.at("horocycles"))
            P.horocycles.push_back({cplx(e.at("center").at(0).get<double>(), e.at("center").at(1).get<double>()),
                                    e.at("r").get<double>()});
        for (const auto& t : j.at("tangencies")) P.tangencies.emplace_back(t.at(0).get<int>(), t.at(1).get<int>());
        return P;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed 2D packing JSON: ") + e.what());
    }
}

} // namespace horoforge
