#include "doctest.h"

#include <cmath>
#include <random>

#include "horoforge/cli.hpp"
#include "horoforge/surface_model.hpp"

using namespace horoforge;

namespace {

double rel(const Mat2C& a, const Mat2C& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

// Trapezoid rule on a circle; spectrally accurate for analytic integrands.
template <class F>
cplx contour(F f, cplx center, double r, int N = 256) {
    cplx sum = 0.0;
    for (int q = 0; q < N; ++q) {
        const cplx e = std::polar(1.0, 2 * kPi * q / N);
        sum += f(center + r * e) * cplx(0.0, r) * e;
    }
    return sum * (2 * kPi / N);
}

// [[G, -G^2], [1, -G]] Omega.
Mat2C bryant_form(cplx G, cplx Om) { return Om * Mat2C{G, -G * G, 1.0, -G}; }

SurfaceModel two_model(double tau, std::vector<double> xi = {1.0, 1.0}) {
    return from_packing(two_horosphere_packing(), xi, tau);
}

} // namespace

TEST_SUITE("surface_model") {

TEST_CASE("node disks are disjoint from each other and from the base disk") {
    for (const Packing& P : {two_horosphere_packing(), triangle_packing(), build_lattice_packing(1.0),
                             build_apollonian_packing(6, 2)}) {
        const SurfaceModel M = from_packing(P, std::vector<double>(P.n(), 1.0), 1e-4);
        CHECK(M.n() == P.n());
        CHECK(M.m() == P.m());
        for (int i = 0; i < M.n(); ++i) {
            const auto& nodes = M.nodes[i];
            for (std::size_t a = 0; a < nodes.size(); ++a) {
                CHECK(std::abs(M.node_pos(nodes[a])) > 2.0);
                for (std::size_t b = a + 1; b < nodes.size(); ++b)
                    CHECK(std::abs(M.node_pos(nodes[a]) - M.node_pos(nodes[b])) > 2.0);
            }
        }
    }
}

TEST_CASE("lattice R=1 distributes 19 nodes over 8 planes") {
    const Packing P = build_lattice_packing(1.0);
    const SurfaceModel M = from_packing(P, std::vector<double>(8, 1.0), 0.0);
    CHECK(M.m() == 19);
    std::size_t total = 0;
    for (int i = 0; i < 8; ++i) total += M.nodes[i].size();
    CHECK(total == 38);
}

TEST_CASE("model preconditions") {
    Packing far = make_packing({Horosphere::sphere(0.0, 0.5), Horosphere::sphere(5.0, 0.5)});
    CHECK_THROWS_AS(from_packing(far, {1.0, 1.0}, 1e-4), ValidationError);
    CHECK_THROWS_AS(from_packing(two_horosphere_packing(), {1.0, 0.0}, 1e-4), ValidationError);
    CHECK_THROWS_AS(from_packing(two_horosphere_packing(), {1.0, -1.0}, 1e-4), ValidationError);
    CHECK_THROWS_AS(from_packing(two_horosphere_packing(), {1.0}, 1e-4), ValidationError);
    CHECK_THROWS_AS(from_packing(two_horosphere_packing(), {1.0, 1.0}, 0.5), ValidationError);
    CHECK_NOTHROW(from_packing(two_horosphere_packing(), {1.0, 3.5}, 1e-4));
}

TEST_CASE("the model lives in a frame without plane horospheres") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 0.0);
    for (int i = 0; i < M.n(); ++i) {
        CHECK(!M.spheres[i].is_plane());
        const Horosphere back = M.original[i].transformed(M.Hg);
        CHECK(std::abs(back.p - M.spheres[i].p) < 1e-10);
        CHECK(std::abs(back.R - M.spheres[i].R) < 1e-10 * M.spheres[i].R);
    }
}

TEST_CASE("plane charts parametrize their horospheres") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 0.0);
    for (int i = 0; i < M.n(); ++i) {
        const auto& S = M.spheres[i];
        for (cplx z : {cplx(0.0), cplx(1.5, -0.3), cplx(-4.0, 2.0)}) {
            const HalfSpacePoint x = immerse(M.F_plane0(i, z));
            const double d = std::hypot(std::abs(cplx(x.x1, x.x2) - S.p), x.x3 - S.R);
            CHECK(std::abs(d - S.R) < 1e-10 * (1.0 + S.R));
        }
        // Tangency points sit at the node positions.
        for (const auto& r : M.nodes[i]) {
            const auto& pd = M.pairs[r.pair];
            const int other = r.side == 0 ? pd.j : pd.i;
            const HalfSpacePoint x = immerse(M.F_plane0(i, r.side == 0 ? pd.p0_ij : pd.p0_ji));
            const auto& T = M.spheres[other];
            const double d = std::hypot(std::abs(cplx(x.x1, x.x2) - T.p), x.x3 - T.R);
            CHECK(std::abs(d - T.R) < 1e-9 * (1.0 + T.R));
        }
    }
}

TEST_CASE("derived parameters") {
    SurfaceModel M = two_model(1e-4, {1.0, 2.0});
    M.pairs[0].q_ij = cplx(0.3, -0.2);
    M.pairs[0].q_ji = cplx(-1.0, 0.5);
    const double tau = 1e-4;
    CHECK(M.s() == doctest::Approx(-tau * std::log(tau)).epsilon(1e-15));
    CHECK(M.b0(0) == doctest::Approx(1.5));
    const auto& P = M.pairs[0];
    const cplx a = tau * P.b / (M.c[P.i] - M.c[P.j]);
    CHECK(std::abs(M.a(0) - a) < 1e-15 * std::abs(a));
    CHECK(std::abs(M.t_ij(0) + a / (2.0 * M.lambda[P.i])) < 1e-15 * std::abs(a));
    CHECK(std::abs(M.t_ji(0) - a / (2.0 * M.lambda[P.j])) < 1e-15 * std::abs(a));
    CHECK(std::abs(M.p_ij(0) - (P.p0_ij + M.s() * P.q_ij)) < 1e-15);
    CHECK(std::abs(M.p_ji(0) - (P.p0_ji + M.s() * P.q_ji)) < 1e-15);
    CHECK(std::abs(std::exp(M.log_t_ij(0)) - M.t_ij(0)) < 1e-12 * std::abs(M.t_ij(0)));
    CHECK(std::abs(std::exp(M.log_t_ji(0)) - M.t_ji(0)) < 1e-12 * std::abs(M.t_ji(0)));
    for (double t : {1e-3, 1e-6, 1e-9}) CHECK(tau_of_t(t_of_tau(t)) == doctest::Approx(t).epsilon(1e-12));
    CHECK(s_of_tau(0.0) == 0.0);
    CHECK(t_of_tau(0.0) == 0.0);
    CHECK_THROWS_AS(M.set_tau(1e-2), ValidationError);
    CHECK_THROWS_AS(M.set_tau(-1e-5), ValidationError);
    M.set_tau(0.0);
    CHECK(M.a(0) == cplx(0.0));
    CHECK_THROWS_AS(M.log_t_ij(0), DomainError);
}

TEST_CASE("Gauss map at t = 0") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 0.0);
    for (int i = 0; i < M.n(); ++i) {
        const BoundaryPoint g = gauss_map_G0(M, ChartId::plane(i), cplx(0.7, 0.1));
        CHECK(!g.infinite);
        CHECK(g.z == M.c[i]);
    }
    for (int k = 0; k < M.m(); ++k) {
        const cplx ci = M.c[M.pairs[k].i], cj = M.c[M.pairs[k].j];
        CHECK(std::abs(gauss_map_G0(M, ChartId::neck(k), 0.0).z - ci) < 1e-14);
        CHECK(std::abs(gauss_map_G0(M, ChartId::neck(k), 1e12).z - cj) < 1e-10);
        CHECK(gauss_map_G0(M, ChartId::neck(k), 1.0).infinite);
        // Across the node both sides agree.
        CHECK(std::abs(gauss_map_G0(M, ChartId::neck(k), 1e-9).z - ci) < 1e-8);
    }
}

TEST_CASE("Gauss map derivative in a matches its closed form") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 1e-4);
    const auto a0 = M.a_vector();
    for (int k = 0; k < M.m(); ++k) {
        const auto& P = M.pairs[k];
        for (int side = 0; side < 2; ++side) {
            const int i = side == 0 ? P.i : P.j;
            const cplx p = side == 0 ? M.p_ij(k) : M.p_ji(k);
            for (cplx z : {cplx(0.5, 0.5), cplx(-1.0, 2.0)}) {
                const double h = 1e-7;
                auto ap = a0, am = a0;
                ap[k] += h;
                am[k] -= h;
                const cplx fd = (gauss_map_a(M, ap, ChartId::plane(i), z) - gauss_map_a(M, am, ChartId::plane(i), z)) / (2 * h);
                const cplx closed = (M.c[P.j] - M.c[P.i]) / (2.0 * M.lambda[i] * (z - p));
                CHECK(std::abs(fd - closed) < 1e-8 * std::abs(closed));
            }
        }
    }
}

TEST_CASE("first-order Omega") {
    const SurfaceModel M0 = two_model(0.0);
    CHECK(omega_first_order(M0, ChartId::plane(0), cplx(0.3, 0.4)) == M0.lambda[0]);
    CHECK(omega_first_order(M0, ChartId::plane(1), cplx(-2.0, 0.4)) == M0.lambda[1]);

    const SurfaceModel M = two_model(1e-4);
    const cplx a = M.a(0);
    const ChartId neck = ChartId::neck(0);
    CHECK(std::abs(omega_first_order(M, neck, 1.0)) == 0.0);
    const double h = 1e-5;
    const cplx d1 = (omega_first_order(M, neck, 1.0 + h) - omega_first_order(M, neck, 1.0 - h)) / (2 * h);
    CHECK(std::abs(d1) < 1e-9 * std::abs(a));
    const cplx d2 = (omega_first_order(M, neck, 1.0 + h) - 2.0 * omega_first_order(M, neck, 1.0) +
                     omega_first_order(M, neck, 1.0 - h)) / (h * h);
    CHECK(std::abs(d2 - a) < 1e-4 * std::abs(a));
    // (1 - z)^2 / (2 z^2) at z = -1 is 2.
    CHECK(std::abs(omega_first_order(M, neck, -1.0) - 2.0 * a) < 1e-15 * std::abs(a));
}

TEST_CASE("residues of Omega balance") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.5, 2.0}, 1e-4);
    const ChartId pl = ChartId::plane(0);
    for (int i = 0; i < M.n(); ++i) {
        const ChartId ch = ChartId::plane(i);
        cplx expected_total = 0.0;
        for (const auto& r : M.nodes[i]) {
            const cplx a = M.a(r.pair);
            const cplx res = contour([&](cplx z) { return omega_first_order(M, ch, z); }, M.node_pos(r), 0.5) /
                             cplx(0.0, 2 * kPi);
            CHECK(std::abs(res - (r.side == 0 ? a : -a)) < 1e-12 * std::abs(a));
            expected_total += r.side == 0 ? a : -a;
        }
        // Everything inside a large circle: the residue at infinity cancels the node residues.
        double big = 0.0;
        for (const auto& r : M.nodes[i]) big = std::max(big, std::abs(M.node_pos(r)));
        const cplx inner = contour([&](cplx z) { return omega_first_order(M, ch, z) - M.lambda[i]; }, 0.0,
                                   big + 2.0, 1024) / cplx(0.0, 2 * kPi);
        CHECK(std::abs(inner - expected_total) < 1e-11 * std::abs(M.a(0)));
    }
    CHECK_THROWS_AS(omega_first_order(M, pl, M.node_pos(M.nodes[0][0]) + 1e-4), PoleError);
}

TEST_CASE("connection A") {
    const SurfaceModel M0 = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 0.0);
    for (int i = 0; i < M0.n(); ++i) {
        const cplx c = M0.c[i];
        const Mat2C expect = M0.lambda[i] * Mat2C{c, -c * c, 1.0, -c};
        CHECK(rel(connection_A(M0, ChartId::plane(i), cplx(0.2, -0.9)), expect) < 1e-15);
    }

    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.5, 2.0}, 1e-4);
    for (int k = 0; k < M.m(); ++k) {
        const Mat2C A1 = connection_A(M, ChartId::neck(k), 1.0);
        CHECK(std::isfinite(A1.norm()));
        // Continuous through the pole of G.
        const Mat2C A1e = connection_A(M, ChartId::neck(k), 1.0 + 1e-7);
        CHECK((A1 - A1e).norm() < 1e-5 * std::abs(M.a(k)) + 1e-20);
    }

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-6.0, 6.0);
    double worst = 0.0, worst_bryant = 0.0;
    for (int i = 0; i < M.n(); ++i) {
        const ChartId ch = ChartId::plane(i);
        for (int q = 0; q < 10000; ++q) {
            const cplx z(U(rng), U(rng));
            bool near = false;
            for (const auto& r : M.nodes[i]) near = near || std::abs(z - M.node_pos(r)) < 0.01;
            if (near) continue;
            const Mat2C A = connection_A(M, ch, z);
            worst = std::max(worst, std::abs(A.trace()) / std::max(1.0, A.norm()));
            if (q % 100 == 0) {
                const Mat2C B = bryant_form(gauss_map(M, ch, z), omega_first_order(M, ch, z));
                worst_bryant = std::max(worst_bryant, rel(A, B));
            }
        }
    }
    for (int k = 0; k < M.m(); ++k) {
        const ChartId ch = ChartId::neck(k);
        for (int q = 0; q < 10000; ++q) {
            const cplx z = std::polar(std::exp(U(rng)), U(rng));
            const Mat2C A = connection_A(M, ch, z);
            worst = std::max(worst, std::abs(A.trace()) / std::max(1.0, A.norm()));
            if (q % 100 == 0 && std::abs(z - 1.0) > 0.1) {
                const Mat2C B = bryant_form(gauss_map(M, ch, z), omega_first_order(M, ch, z));
                worst_bryant = std::max(worst_bryant, rel(A, B));
            }
        }
    }
    CHECK(worst < 1e-12);
    CHECK(worst_bryant < 1e-12);
}

TEST_CASE("a-derivative of the connection matches finite differences") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 0.0);
    const std::vector<cplx> zero(M.m(), 0.0);
    for (int k = 0; k < M.m(); ++k)
        for (int i = 0; i < M.n(); ++i)
            for (cplx z : {cplx(0.4, -0.2), cplx(2.0, 1.0)}) {
                const ChartId ch = ChartId::plane(i);
                bool near = false;
                for (const auto& r : M.nodes[i]) near = near || std::abs(z - M.node_pos(r)) < 0.1;
                if (near) continue;
                const double h = 1e-6;
                auto ap = zero, am = zero;
                ap[k] = h;
                am[k] = -h;
                const Mat2C fd = (1.0 / (2 * h)) * (connection_A_a(M, ap, ch, z) - connection_A_a(M, am, ch, z));
                const Mat2C d = connection_A_derivative(M, k, ch, z);
                CHECK((fd - d).norm() <= 1e-8 * std::max(1.0, d.norm()));
            }
    CHECK_THROWS_AS(connection_A_derivative(M, 0, ChartId::neck(0), 2.0), ValidationError);
}

TEST_CASE("pair frame") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 1e-4);
    for (int k = 0; k < M.m(); ++k) {
        const PairFrame F = pair_frame(M, k);
        const cplx ci = M.c[M.pairs[k].i], cj = M.c[M.pairs[k].j];
        CHECK(std::abs(F.H.det() - 1.0) < 1e-12);
        CHECK(act_boundary(F.H, BoundaryPoint::finite(ci)).infinite);
        const BoundaryPoint zj = act_boundary(F.H, BoundaryPoint::finite(cj));
        CHECK(!zj.infinite);
        CHECK(std::abs(zj.z) < 1e-12);
        CHECK(approx_equal(F.H * F.Hinv, Mat2C::identity(), 1e-12));
        // The closed form of H for this rho.
        const cplx sq = std::sqrt(cj - ci);
        const Mat2C Hf = (1.0 / sq) * Mat2C{F.rho, -F.rho * cj, 1.0 / F.rho, -ci / F.rho};
        CHECK((approx_equal(F.H, Hf, 1e-10) || approx_equal(F.H, -Hf, 1e-10)));
        const cplx r2 = F.rho * F.rho;
        CHECK(std::abs(F.lam_i_hat - r2 * M.lambda[M.pairs[k].i] * (ci - cj)) < 1e-12 * std::abs(F.lam_i_hat));
        CHECK(std::abs(F.lam_j_hat - M.lambda[M.pairs[k].j] * (cj - ci) / r2) < 1e-12 * std::abs(F.lam_j_hat));
        CHECK((F.Ai_hat * F.Ai_hat).norm() == 0.0);
        CHECK((F.Aj_hat * F.Aj_hat).norm() == 0.0);
        CHECK(F.Ai_hat.m21 == cplx(0.0));
        CHECK(F.Aj_hat.m12 == cplx(0.0));
        // H F_i(p0_ij) is the identity up to sign.
        const Mat2C Fp = F.H * M.F_plane0(M.pairs[k].i, M.pairs[k].p0_ij);
        CHECK((approx_equal(Fp, Mat2C::identity(), 1e-10) || approx_equal(Fp, -Mat2C::identity(), 1e-10)));
    }
}

TEST_CASE("conjugated connection agrees with H A H^{-1}") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.5, 2.0}, 1e-4);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-4.0, 4.0);
    for (int k = 0; k < M.m(); ++k) {
        const PairFrame F = pair_frame(M, k);
        std::vector<ChartId> charts;
        for (int i = 0; i < M.n(); ++i) charts.push_back(ChartId::plane(i));
        for (int l = 0; l < M.m(); ++l) charts.push_back(ChartId::neck(l));
        for (const ChartId& ch : charts)
            for (int q = 0; q < 50; ++q) {
                const cplx z = ch.is_plane() ? cplx(U(rng), U(rng)) : std::polar(std::exp(U(rng)), U(rng));
                bool near = false;
                if (ch.is_plane())
                    for (const auto& r : M.nodes[ch.index]) near = near || std::abs(z - M.node_pos(r)) < 0.01;
                if (near) continue;
                const Mat2C expect = F.conj(connection_A(M, ch, z));
                const Mat2C got = connection_A_hat(F, M, ch, z);
                CHECK((got - expect).norm() <= 1e-9 * std::max(1.0, expect.norm()));
            }
    }
}

TEST_CASE("conjugated connection at a = 0") {
    const SurfaceModel M = two_model(0.0);
    const PairFrame F = pair_frame(M, 0);
    CHECK(approx_equal(connection_A_hat(F, M, ChartId::plane(0), cplx(0.3, 1.0)), F.Ai_hat, 1e-12));
    CHECK(approx_equal(connection_A_hat(F, M, ChartId::plane(1), cplx(-0.3, 1.0)), F.Aj_hat, 1e-12));
    CHECK(connection_A_hat(F, M, ChartId::neck(0), cplx(0.3, 1.0)).norm() == 0.0);
}

TEST_CASE("first-order coefficients of the conjugated connection") {
    SurfaceModel M = two_model(0.0);
    const auto& P = M.pairs[0];
    const cplx ci = M.c[P.i], cj = M.c[P.j];
    // tau chosen so that |a| = 1e-6.
    M.set_tau(1e-6 * std::abs(ci - cj) / std::abs(P.b));
    const cplx a = M.a(0);
    CHECK(std::abs(std::abs(a) - 1e-6) < 1e-18);
    const PairFrame F = pair_frame(M, 0);
    SurfaceModel M0 = M;
    M0.set_tau(0.0);
    const cplx r2 = F.rho * F.rho;
    for (cplx z : {cplx(0.5, 0.5), cplx(-1.0, 3.0), cplx(2.0, -0.1)}) {
        const Mat2C d_plane = (1.0 / a) * (connection_A_hat(F, M, ChartId::plane(P.i), z) -
                                           connection_A_hat(F, M0, ChartId::plane(P.i), z));
        const Mat2C c_plane = ((ci - cj) / (2.0 * (z - M.p_ij(0)))) * Mat2C::diag(1.0, -1.0);
        CHECK(rel(d_plane, c_plane) < 1e-5);
        const Mat2C d_neck = (1.0 / a) * (connection_A_hat(F, M, ChartId::neck(0), z) -
                                          connection_A_hat(F, M0, ChartId::neck(0), z));
        const Mat2C c_neck = ((cj - ci) / (2.0 * z * z)) * Mat2C{z, -r2, z * z / r2, -z};
        CHECK(rel(d_neck, c_neck) < 1e-5);
    }
}

TEST_CASE("base matrices in the pair frame") {
    const SurfaceModel M = two_model(1e-4, {1.0, 2.0});
    const PairFrame F = pair_frame(M, 0);
    const auto [Mi0, Mj0] = m_hat_matrices(F, M, 0.0);
    for (const Mat2C& U0 : {Mi0, Mj0}) {
        CHECK(std::abs(U0.trace() - 2.0) < 1e-14);
        const Mat2C N = U0 - Mat2C::identity();
        CHECK((N * N).norm() < 1e-14 * std::max(1.0, N.norm() * N.norm()));
    }
    CHECK(approx_equal(Mi0, exp_mat(-M.pairs[0].p0_ij * F.Ai_hat), 1e-12));
    CHECK(approx_equal(Mj0, exp_mat(-M.pairs[0].p0_ji * F.Aj_hat), 1e-12));
    for (double s : {0.01, 0.1, 0.5}) {
        const auto [Mi, Mj] = m_hat_matrices(F, M, s);
        CHECK(std::abs(Mi.det() - 1.0) < 1e-12);
        CHECK(std::abs(Mj.det() - 1.0) < 1e-12);
        // Moving along the normal geodesic at the deflation speed.
        const double di = hyperbolic_distance(immerse(F.Hinv * Mi), immerse(F.Hinv * Mi0));
        const double dj = hyperbolic_distance(immerse(F.Hinv * Mj), immerse(F.Hinv * Mj0));
        CHECK(di == doctest::Approx(M.xi[0] * s).epsilon(1e-9));
        CHECK(dj == doctest::Approx(M.xi[1] * s).epsilon(1e-9));
        // Inward on the i side, outward on the j side, seen from the tangency point.
        const double h = 1e-6;
        const auto [Mih, Mjh] = m_hat_matrices(F, M, s + h);
        const double vi = (hyperbolic_distance(immerse(F.Hinv * Mih), immerse(F.Hinv * Mi0)) - di) / h;
        CHECK(vi == doctest::Approx(M.xi[0]).epsilon(1e-5));
    }
    // At s = 0 the base points lie on the horospheres, the i side at f_i(0).
    const HalfSpacePoint xi0 = immerse(F.Hinv * Mi0), xj0 = immerse(F.Hinv * Mj0);
    CHECK(hyperbolic_distance(xi0, immerse(M.F_base(0))) < 1e-7);
    const auto& Sj = M.spheres[1];
    CHECK(std::abs(std::hypot(std::abs(cplx(xj0.x1, xj0.x2) - Sj.p), xj0.x3 - Sj.R) - Sj.R) < 1e-10);
}

TEST_CASE("model JSON round trip") {
    SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.5, 2.0}, 1e-4);
    M.pairs[1].b = cplx(1.2, -0.1);
    M.pairs[2].q_ji = cplx(0.01, 0.02);
    M.pairs[0].arg_turns = 1;
    const nlohmann::json j = model_to_json(M);
    const SurfaceModel R = model_from_json(nlohmann::json::parse(j.dump()));
    CHECK(R.n() == M.n());
    CHECK(R.m() == M.m());
    CHECK(R.tau == M.tau);
    for (int i = 0; i < M.n(); ++i) {
        CHECK(R.c[i] == M.c[i]);
        CHECK(R.lambda[i] == M.lambda[i]);
        CHECK(R.xi[i] == M.xi[i]);
        CHECK(approx_equal(R.K[i], M.K[i], 0.0));
    }
    for (int k = 0; k < M.m(); ++k) {
        CHECK(R.pairs[k].b == M.pairs[k].b);
        CHECK(R.pairs[k].q_ij == M.pairs[k].q_ij);
        CHECK(R.pairs[k].q_ji == M.pairs[k].q_ji);
        CHECK(R.pairs[k].p0_ij == M.pairs[k].p0_ij);
        CHECK(R.pairs[k].arg_turns == M.pairs[k].arg_turns);
    }
    CHECK(model_to_json(R).dump() == j.dump());
    CHECK_THROWS_AS(model_from_json(nlohmann::json::parse(R"({"tau": 1e-4})")), ValidationError);
}

} // TEST_SUITE
