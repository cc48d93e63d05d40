#include "horoforge/surface_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace horoforge {

double s_of_tau(double tau) { return tau > 0 ? -tau * std::log(tau) : 0.0; }
double tau_of_t(double t) { return t > 0 ? std::exp(-1.0 / (t * t)) : 0.0; }
double t_of_tau(double tau) { return tau > 0 ? 1.0 / std::sqrt(-std::log(tau)) : 0.0; }

double SurfaceModel::s() const { return s_of_tau(tau); }

cplx SurfaceModel::a(int k) const {
    const auto& P = pairs[k];
    return tau * P.b / (c[P.i] - c[P.j]);
}

cplx SurfaceModel::t_ij(int k) const { return -a(k) / (2.0 * lambda[pairs[k].i]); }
cplx SurfaceModel::t_ji(int k) const { return a(k) / (2.0 * lambda[pairs[k].j]); }

cplx SurfaceModel::log_t_ij(int k) const {
    if (!(tau > 0)) throw DomainError("log t undefined at tau = 0");
    const auto& P = pairs[k];
    const double b0v = b0(k);
    const cplx base = -b0v / (2.0 * lambda[P.i] * (c[P.i] - c[P.j]));
    return std::log(tau) + std::log(base) + std::log(P.b / b0v) + cplx(0.0, 2.0 * kPi * P.arg_turns);
}

cplx SurfaceModel::log_t_ji(int k) const {
    if (!(tau > 0)) throw DomainError("log t undefined at tau = 0");
    const auto& P = pairs[k];
    const double b0v = b0(k);
    const cplx base = b0v / (2.0 * lambda[P.j] * (c[P.i] - c[P.j]));
    return std::log(tau) + std::log(base) + std::log(P.b / b0v) + cplx(0.0, 2.0 * kPi * P.arg_turns);
}

cplx SurfaceModel::p_ij(int k) const { return pairs[k].p0_ij + s() * pairs[k].q_ij; }
cplx SurfaceModel::p_ji(int k) const { return pairs[k].p0_ji + s() * pairs[k].q_ji; }

std::vector<cplx> SurfaceModel::a_vector() const {
    std::vector<cplx> out(pairs.size());
    for (int k = 0; k < m(); ++k) out[k] = a(k);
    return out;
}

Mat2C SurfaceModel::A_plane0(int i) const {
    const cplx ci = c[i];
    return lambda[i] * Mat2C{ci, -ci * ci, 1.0, -ci};
}

Mat2C SurfaceModel::F_plane0(int i, cplx z) const {
    return K[i] * Mat2C{1.0, mu[i] * z + nu[i], 0.0, 1.0};
}

Mat2C SurfaceModel::F_base(int i) const { return F_plane0(i, 0.0); }

Mat2C SurfaceModel::M_base(int i, double sv) const { return F_base(i) * xi_mat(xi[i] * sv); }

void SurfaceModel::set_tau(double t) {
    if (!(t >= 0) || t >= 1e-2) throw ValidationError("tau must lie in [0, 1e-2)");
    tau = t;
}

namespace {

double balance(const std::vector<Horosphere>& hs, cplx w) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (const auto& h : hs) {
        double r;
        if (h.is_plane()) {
            r = 0.5 / h.h;
        } else {
            const double d2 = std::norm(w - h.p);
            if (d2 < 1e-18) return -1.0;
            r = h.R / d2;
        }
        lo = std::min(lo, r);
        hi = std::max(hi, r);
    }
    return lo / hi;
}

// Chooses w* so that the isometry sending w* to infinity balances the radii.
Mat2C balancing_isometry(const std::vector<Horosphere>& hs) {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    bool first = true;
    for (const auto& h : hs) {
        if (h.is_plane()) continue;
        if (first) {
            xmin = xmax = h.p.real();
            ymin = ymax = h.p.imag();
            first = false;
        }
        xmin = std::min(xmin, h.p.real());
        xmax = std::max(xmax, h.p.real());
        ymin = std::min(ymin, h.p.imag());
        ymax = std::max(ymax, h.p.imag());
    }
    xmin -= 2; xmax += 2; ymin -= 2; ymax += 2;
    const int G = 61;
    cplx best(xmin, ymin);
    double fbest = -2.0;
    for (int a = 0; a < G; ++a) {
        for (int b = 0; b < G; ++b) {
            const cplx w(xmin + (xmax - xmin) * a / (G - 1), ymin + (ymax - ymin) * b / (G - 1));
            const double f = balance(hs, w);
            if (f > fbest) {
                fbest = f;
                best = w;
            }
        }
    }
    double step = (xmax - xmin) / (G - 1);
    const cplx dirs[8] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    for (int it = 0; it < 2000 && step > 1e-13; ++it) {
        bool moved = false;
        for (const cplx& d : dirs) {
            const cplx w = best + step * d;
            const double f = balance(hs, w);
            if (f > fbest) {
                fbest = f;
                best = w;
                moved = true;
                break;
            }
        }
        if (!moved) step *= 0.5;
    }
    return Mat2C{0.0, 1.0, -1.0, best};
}

cplx homography(const Mat2C& H, cplx z) { return (H.m11 * z + H.m12) / (H.m21 * z + H.m22); }

} // namespace

SurfaceModel from_packing(const Packing& P, const std::vector<double>& xi, double tau) {
    validate_packing(P);
    if (!is_connected(P)) throw ValidationError("tangency graph is not connected");
    if (P.n() < 2) throw ValidationError("need at least two horospheres");
    if (static_cast<int>(xi.size()) != P.n())
        throw ValidationError("expected " + std::to_string(P.n()) + " deflation speeds, got " + std::to_string(xi.size()));
    for (double x : xi)
        if (!(x > 0)) throw ValidationError("deflation speeds must be positive");

    SurfaceModel M;
    M.set_tau(tau);
    M.original = P.horospheres;
    M.xi = xi;
    const bool has_plane =
        std::any_of(P.horospheres.begin(), P.horospheres.end(), [](const Horosphere& h) { return h.is_plane(); });
    M.Hg = has_plane ? balancing_isometry(P.horospheres) : Mat2C::identity();
    for (const auto& h : P.horospheres) {
        const Horosphere t = h.transformed(M.Hg);
        if (t.is_plane()) throw GeometryError("normalizing isometry left a plane horosphere");
        M.spheres.push_back(t);
    }
    const int n = P.n();
    M.c.resize(n);
    M.K.resize(n);
    M.lambda.assign(n, 1.0);
    M.mu.resize(n);
    M.nu.resize(n);
    M.nodes.assign(n, {});
    for (int i = 0; i < n; ++i) {
        M.c[i] = M.spheres[i].p;
        M.K[i] = frame_matrix(M.spheres[i]);
    }
    for (int k = 0; k < P.m(); ++k) {
        PairData d;
        d.i = P.tangencies[k].first;
        d.j = P.tangencies[k].second;
        d.b = 0.5 * (xi[d.i] + xi[d.j]);
        M.pairs.push_back(d);
        M.nodes[d.i].push_back({k, 0});
        M.nodes[d.j].push_back({k, 1});
    }
    for (int i = 0; i < n; ++i) {
        const Mat2C Kinv = M.K[i].adjugate();
        std::vector<cplx> w;
        for (const auto& r : M.nodes[i]) {
            const auto& pd = M.pairs[r.pair];
            w.push_back(homography(Kinv, M.c[r.side == 0 ? pd.j : pd.i]));
        }
        const double R = M.spheres[i].R;
        double dmin = std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < w.size(); ++a)
            for (std::size_t b = a + 1; b < w.size(); ++b) dmin = std::min(dmin, std::abs(w[a] - w[b]));
        double sigma = 1.0;
        if (w.size() >= 2) {
            if (!(dmin > 1e-9)) throw GeometryError("coincident tangency points on horosphere " + std::to_string(i));
            sigma = std::min(1.0, dmin / (2.0 * R * node_separation));
        }
        M.lambda[i] = sigma;
        M.mu[i] = -2.0 * R * sigma;
        std::vector<cplx> u;
        for (const cplx& x : w) u.push_back(x / M.mu[i]);
        auto clearance = [&](cplx o) {
            double d = std::numeric_limits<double>::infinity();
            for (const cplx& x : u) d = std::min(d, std::abs(x - o));
            return d;
        };
        cplx origin;
        if (u.size() == 1) {
            origin = u[0] - node_separation;
        } else {
            cplx cen = 0.0;
            for (const cplx& x : u) cen += x;
            cen /= static_cast<double>(u.size());
            bool found = false;
            for (int ring = 0; ring <= 400 && !found; ++ring) {
                const double r = 0.25 * ring;
                const int na = ring == 0 ? 1 : static_cast<int>(std::ceil(2 * kPi * r / 0.25));
                for (int q = 0; q < na; ++q) {
                    const cplx o = cen + std::polar(r, 2 * kPi * q / na);
                    if (clearance(o) >= node_separation - 1e-12) {
                        origin = o;
                        found = true;
                        break;
                    }
                }
            }
            if (!found) throw GeometryError("no base point with disjoint unit disks on horosphere " + std::to_string(i));
        }
        M.nu[i] = M.mu[i] * origin;
        for (std::size_t a = 0; a < M.nodes[i].size(); ++a) {
            const auto& r = M.nodes[i][a];
            const cplx p0 = u[a] - origin;
            if (r.side == 0)
                M.pairs[r.pair].p0_ij = p0;
            else
                M.pairs[r.pair].p0_ji = p0;
        }
    }
    return M;
}

BoundaryPoint gauss_map_G0(const SurfaceModel& M, const ChartId& chart, cplx z) {
    if (chart.is_plane()) return BoundaryPoint::finite(M.c[chart.index]);
    const auto& P = M.pairs[chart.index];
    if (z == cplx(1.0)) return BoundaryPoint::at_infinity();
    return BoundaryPoint::finite(M.c[P.j] + (M.c[P.j] - M.c[P.i]) / (z - 1.0));
}

namespace {

void plane_sums(const SurfaceModel& M, const std::vector<cplx>& a, int i, cplx z, cplx& g, cplx& w) {
    g = 0.0;
    w = 0.0;
    for (const auto& r : M.nodes[i]) {
        const cplx dz = z - M.node_pos(r);
        if (std::abs(dz) < r_min) throw PoleError("evaluation within r_min of a node");
        const auto& P = M.pairs[r.pair];
        const cplx ak = a[r.pair];
        g += ak * (M.c[P.j] - M.c[P.i]) / (2.0 * M.lambda[i]) / dz;
        w += (r.side == 0 ? ak : -ak) / dz;
    }
}

Mat2C neck_field(cplx a, cplx ci, cplx cj, cplx z) {
    if (std::abs(z) < 1e-300) throw PoleError("neck chart evaluated at z = 0");
    const cplx N = cj * z - ci;
    const cplx zm = z - 1.0;
    const cplx f = a / (2.0 * z * z);
    return f * Mat2C{N * zm, -N * N, zm * zm, -N * zm};
}

} // namespace

cplx gauss_map_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z) {
    if (!chart.is_plane()) {
        const BoundaryPoint g = gauss_map_G0(M, chart, z);
        if (g.infinite) throw PoleError("Gauss map pole at z = 1");
        return g.z;
    }
    cplx g, w;
    plane_sums(M, a, chart.index, z, g, w);
    return M.c[chart.index] + g;
}

cplx omega_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z) {
    if (!chart.is_plane()) {
        const cplx zm = 1.0 - z;
        return a[chart.index] * zm * zm / (2.0 * z * z);
    }
    cplx g, w;
    plane_sums(M, a, chart.index, z, g, w);
    return M.lambda[chart.index] + w;
}

cplx gauss_map(const SurfaceModel& M, const ChartId& chart, cplx z) { return gauss_map_a(M, M.a_vector(), chart, z); }
cplx omega_first_order(const SurfaceModel& M, const ChartId& chart, cplx z) {
    return omega_a(M, M.a_vector(), chart, z);
}

Mat2C connection_A_delta_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z) {
    if (!chart.is_plane()) {
        const auto& P = M.pairs[chart.index];
        return neck_field(a[chart.index], M.c[P.i], M.c[P.j], z);
    }
    const int i = chart.index;
    cplx g, w;
    plane_sums(M, a, i, z, g, w);
    const cplx ci = M.c[i];
    const cplx Om = M.lambda[i] + w;
    const cplx d11 = ci * w + g * Om;
    const cplx d12 = -(ci * ci * w + (2.0 * ci * g + g * g) * Om);
    return {d11, d12, w, -d11};
}

Mat2C connection_A_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z) {
    Mat2C A = connection_A_delta_a(M, a, chart, z);
    if (chart.is_plane()) A += M.A_plane0(chart.index);
    return A;
}

Mat2C connection_A(const SurfaceModel& M, const ChartId& chart, cplx z) {
    return connection_A_a(M, M.a_vector(), chart, z);
}

Mat2C connection_A_delta(const SurfaceModel& M, const ChartId& chart, cplx z) {
    return connection_A_delta_a(M, M.a_vector(), chart, z);
}

Mat2C connection_A_derivative(const SurfaceModel& M, int k, const ChartId& chart, cplx z) {
    if (!chart.is_plane()) throw ValidationError("a-derivative only defined on plane charts");
    const int i = chart.index;
    const auto& P = M.pairs[k];
    cplx g1 = 0.0, w1 = 0.0;
    for (const auto& r : M.nodes[i]) {
        if (r.pair != k) continue;
        const cplx dz = z - M.node_pos(r);
        if (std::abs(dz) < r_min) throw PoleError("evaluation within r_min of a node");
        g1 += (M.c[P.j] - M.c[P.i]) / (2.0 * M.lambda[i]) / dz;
        w1 += (r.side == 0 ? 1.0 : -1.0) / dz;
    }
    const cplx ci = M.c[i], li = M.lambda[i];
    const cplx d11 = g1 * li + ci * w1;
    return {d11, -(2.0 * ci * g1 * li + ci * ci * w1), w1, -d11};
}

PairFrame pair_frame(const SurfaceModel& M, int k) {
    const auto& P = M.pairs[k];
    const cplx ci = M.c[P.i], cj = M.c[P.j];
    if (std::abs(ci - cj) == 0.0) throw DegenerateError("pair with coincident limit points");
    const Mat2C Kinv = M.K[P.i].adjugate();
    const cplx wj = homography(Kinv, cj);
    PairFrame F;
    F.pair = k;
    F.H = Mat2C{1.0, -wj, 0.0, 1.0} * Kinv;
    F.Hinv = F.H.adjugate();
    F.rho = F.H.m11 * std::sqrt(cj - ci);
    F.lam_i_hat = F.rho * F.rho * M.lambda[P.i] * (ci - cj);
    F.lam_j_hat = M.lambda[P.j] * (cj - ci) / (F.rho * F.rho);
    F.Ai_hat = Mat2C{0.0, F.lam_i_hat, 0.0, 0.0};
    F.Aj_hat = Mat2C{0.0, 0.0, F.lam_j_hat, 0.0};
    return F;
}

Mat2C connection_A_hat(const PairFrame& F, const SurfaceModel& M, const ChartId& chart, cplx z) {
    const auto& P = M.pairs[F.pair];
    const cplx ci = M.c[P.i], cj = M.c[P.j], d = cj - ci;
    const cplx r2 = F.rho * F.rho;
    if (!chart.is_plane() && chart.index == F.pair) {
        const cplx f = M.a(F.pair) * d / 2.0;
        return f * Mat2C{1.0 / z, -r2 / (z * z), 1.0 / r2, -1.0 / z};
    }
    if (!chart.is_plane()) return F.conj(connection_A(M, chart, z));
    const auto a = M.a_vector();
    const cplx G = gauss_map_a(M, a, chart, z);
    const cplx Om = omega_a(M, a, chart, z);
    const cplx gi = G - ci, gj = G - cj;
    return (Om / d) * Mat2C{gi * gj, -r2 * gj * gj, gi * gi / r2, -gi * gj};
}

Mat2C connection_A_hat_delta(const PairFrame& F, const SurfaceModel& M, const ChartId& chart, cplx z) {
    if (!chart.is_plane() && chart.index == F.pair) return connection_A_hat(F, M, chart, z);
    return F.conj(connection_A_delta(M, chart, z));
}

std::pair<Mat2C, Mat2C> m_hat_matrices(const PairFrame& F, const SurfaceModel& M, double sv) {
    const auto& P = M.pairs[F.pair];
    const Mat2C Mi = Mat2C{1.0, -P.p0_ij * F.lam_i_hat, 0.0, 1.0} * xi_mat(M.xi[P.i] * sv);
    const Mat2C Mj = Mat2C{1.0, 0.0, -P.p0_ji * F.lam_j_hat, 1.0} * xi_mat(-M.xi[P.j] * sv);
    return {Mi, Mj};
}

PlaneField::PlaneField(const SurfaceModel& M, int plane, const std::vector<cplx>& a, const Mat2C& H)
    : ci_(M.c[plane]), li_(M.lambda[plane]), H_(H), Hinv_(H.adjugate()) {
    for (const auto& r : M.nodes[plane]) {
        const auto& P = M.pairs[r.pair];
        const cplx ak = a[r.pair];
        nodes_.push_back({M.node_pos(r), ak * (M.c[P.j] - M.c[P.i]) / (2.0 * li_), r.side == 0 ? ak : -ak});
    }
    base_ = H_ * M.A_plane0(plane) * Hinv_;
}

Mat2C PlaneField::delta(cplx z) const {
    cplx g = 0.0, w = 0.0;
    for (const auto& n : nodes_) {
        const cplx dz = z - n.pos;
        if (std::abs(dz) < r_min) throw PoleError("evaluation within r_min of a node");
        const cplx inv = 1.0 / dz;
        g += n.cg * inv;
        w += n.cw * inv;
    }
    const cplx Om = li_ + w;
    const cplx d11 = ci_ * w + g * Om;
    const cplx d12 = -(ci_ * ci_ * w + (2.0 * ci_ * g + g * g) * Om);
    return H_ * Mat2C{d11, d12, w, -d11} * Hinv_;
}

NeckField::NeckField(const SurfaceModel& M, int k, const std::vector<cplx>& a, const Mat2C& H)
    : a_(a[k]), ci_(M.c[M.pairs[k].i]), cj_(M.c[M.pairs[k].j]), H_(H), Hinv_(H.adjugate()) {}

Mat2C NeckField::operator()(cplx z) const { return H_ * neck_field(a_, ci_, cj_, z) * Hinv_; }

nlohmann::json cplx_json(cplx z) { return {z.real(), z.imag()}; }
cplx json_cplx(const nlohmann::json& j) { return {j.at(0).get<double>(), j.at(1).get<double>()}; }
nlohmann::json mat_json(const Mat2C& m) { return {cplx_json(m.m11), cplx_json(m.m12), cplx_json(m.m21), cplx_json(m.m22)}; }
Mat2C json_mat(const nlohmann::json& j) { return {json_cplx(j.at(0)), json_cplx(j.at(1)), json_cplx(j.at(2)), json_cplx(j.at(3))}; }

nlohmann::json model_to_json(const SurfaceModel& M) {
    nlohmann::json hs = nlohmann::json::array();
    for (int i = 0; i < M.n(); ++i) {
        hs.push_back({{"c", cplx_json(M.c[i])},
                      {"R", M.spheres[i].R},
                      {"lambda", cplx_json(M.lambda[i])},
                      {"xi", M.xi[i]},
                      {"K", mat_json(M.K[i])},
                      {"mu", cplx_json(M.mu[i])},
                      {"nu", cplx_json(M.nu[i])}});
    }
    nlohmann::json ps = nlohmann::json::array();
    for (int k = 0; k < M.m(); ++k) {
        const auto& P = M.pairs[k];
        nlohmann::json e = {{"i", P.i},
                            {"j", P.j},
                            {"p0_ij", cplx_json(P.p0_ij)},
                            {"p0_ji", cplx_json(P.p0_ji)},
                            {"b", cplx_json(P.b)},
                            {"q_ij", cplx_json(P.q_ij)},
                            {"q_ji", cplx_json(P.q_ji)},
                            {"arg_turns", P.arg_turns},
                            {"a", cplx_json(M.a(k))},
                            {"t_ij", cplx_json(M.t_ij(k))},
                            {"t_ji", cplx_json(M.t_ji(k))}};
        ps.push_back(e);
    }
    Packing orig;
    orig.horospheres = M.original;
    for (const auto& P : M.pairs) orig.tangencies.emplace_back(P.i, P.j);
    return {{"packing", packing_to_json(orig)},
            {"isometry", mat_json(M.Hg)},
            {"tau", M.tau},
            {"s", M.s()},
            {"horospheres", hs},
            {"pairs", ps}};
}

SurfaceModel model_from_json(const nlohmann::json& j) {
    try {
        SurfaceModel M;
        const Packing orig = packing_from_json(j.at("packing"));
        M.original = orig.horospheres;
        M.Hg = json_mat(j.at("isometry"));
        M.set_tau(j.at("tau").get<double>());
        for (const auto& h : j.at("horospheres")) {
            M.c.push_back(json_cplx(h.at("c")));
            M.spheres.push_back(Horosphere::sphere(M.c.back(), h.at("R").get<double>()));
            M.lambda.push_back(json_cplx(h.at("lambda")));
            M.xi.push_back(h.at("xi").get<double>());
            M.K.push_back(json_mat(h.at("K")));
            M.mu.push_back(json_cplx(h.at("mu")));
            M.nu.push_back(json_cplx(h.at("nu")));
        }
        M.nodes.assign(M.c.size(), {});
        for (const auto& e : j.at("pairs")) {
            PairData P;
            P.i = e.at("i").get<int>();
            P.j = e.at("j").get<int>();
            P.p0_ij = json_cplx(e.at("p0_ij"));
            P.p0_ji = json_cplx(e.at("p0_ji"));
            P.b = json_cplx(e.at("b"));
            P.q_ij = json_cplx(e.at("q_ij"));
            P.q_ji = json_cplx(e.at("q_ji"));
            P.arg_turns = e.value("arg_turns", 0);
            if (P.i < 0 || P.j >= static_cast<int>(M.c.size()) || P.i >= P.j)
                throw ValidationError("bad pair indices in model");
            const int k = static_cast<int>(M.pairs.size());
            M.pairs.push_back(P);
            M.nodes[P.i].push_back({k, 0});
            M.nodes[P.j].push_back({k, 1});
        }
        if (M.original.size() != M.c.size()) throw ValidationError("model packing size mismatch");
        return M;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed model JSON: ") + e.what());
    }
}

} // namespace horoforge
