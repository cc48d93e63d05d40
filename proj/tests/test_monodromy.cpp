#include "doctest.h"

#include <cmath>
#include <random>

#include "horoforge/cli.hpp"
#include "horoforge/monodromy.hpp"

using namespace horoforge;

namespace {

double rel(const Mat2C& a, const Mat2C& b) { return (a - b).norm() / std::max(1e-300, b.norm()); }

FieldFn full_field(const SurfaceModel& M) {
    return [&M](const ChartId& c, cplx z) { return connection_A(M, c, z); };
}

PathSpec unit_circle() {
    PathSpec p;
    p.segs.push_back(Segment::arc(ChartId::plane(0), 0.0, 1.0, 0.0, 2 * kPi));
    return p;
}

TransportOptions fixed(std::size_t nseg, int steps) {
    TransportOptions o;
    o.fixed_steps.assign(nseg, steps);
    return o;
}

SurfaceModel two_model(double tau, std::vector<double> xi = {1.0, 1.0}) {
    return from_packing(two_horosphere_packing(), xi, tau);
}

} // namespace

TEST_SUITE("monodromy") {

TEST_CASE("constant nilpotent field transports to its exponential") {
    const Mat2C N{0.0, cplx(0.7, -0.2), 0.0, 0.0};
    PathSpec p;
    const cplx z(1.3, 0.4);
    p.segs.push_back(Segment::line(ChartId::plane(0), 0.0, z));
    const Transport T = transport([&](const ChartId&, cplx) { return N; }, p);
    CHECK(approx_equal(T.matrix, exp_mat(z * N), 1e-13));
    const Mat2C D{cplx(0.2, 0.1), 0.5, cplx(-0.3, 0.0), cplx(-0.2, -0.1)};
    const Transport T2 = transport([&](const ChartId&, cplx) { return D; }, p);
    CHECK(rel(T2.matrix, exp_mat(z * D)) < 1e-10);
}

TEST_CASE("scalar test problem around the unit circle") {
    for (cplx lam : {cplx(0.0), cplx(0.3), cplx(0.25, -0.1), cplx(1.0)}) {
        const Transport T = transport([&](const ChartId&, cplx z) { return (lam / z) * Mat2C::identity(); }, unit_circle());
        const cplx e = std::exp(cplx(0.0, 2 * kPi) * lam);
        CHECK(approx_equal(T.matrix, Mat2C::diag(e, e), 1e-10 * std::abs(e)));
    }
    // Trace-free variant: diag(lambda, -lambda)/z.
    const cplx lam(0.4, 0.05);
    const Transport T = transport([&](const ChartId&, cplx z) { return (1.0 / z) * Mat2C::diag(lam, -lam); }, unit_circle());
    const cplx e = std::exp(cplx(0.0, 2 * kPi) * lam);
    CHECK(approx_equal(T.matrix, Mat2C::diag(e, 1.0 / e), 1e-10));
}

TEST_CASE("transport composes, inverts, and keeps det 1") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.5, 2.0}, 1e-4);
    const FieldFn A = full_field(M);
    for (int k = 0; k < M.m(); ++k) {
        const PathSpec G = big_gamma_path(M, k);
        CHECK(transition_mismatch(M, G) < 1e-12);
        const Transport whole = transport(A, G);
        CHECK(std::abs(whole.matrix.det() - 1.0) < 1e-10);
        // Random split points.
        std::mt19937_64 rng(k + 1);
        for (int rep = 0; rep < 3; ++rep) {
            const std::size_t cut = 1 + rng() % (G.segs.size() - 1);
            PathSpec a, b;
            a.segs.assign(G.segs.begin(), G.segs.begin() + cut);
            b.segs.assign(G.segs.begin() + cut, G.segs.end());
            const Mat2C prod = transport(A, b).matrix * transport(A, a).matrix;
            CHECK(rel(prod, whole.matrix) < 1e-9);
        }
        const Transport back = transport(A, G.reversed());
        CHECK(approx_equal(back.matrix * whole.matrix, Mat2C::identity(), 1e-9 * whole.matrix.norm()));
        CHECK(approx_equal(back.matrix, whole.matrix.inverse(), 1e-9 * whole.matrix.norm()));
    }
}

TEST_CASE("det drift per unit length") {
    const SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 1e-3);
    for (int k = 0; k < M.m(); ++k) {
        const PathSpec g = gamma_path(M, k);
        double len = 0.0;
        for (const auto& s : g.segs) len += s.length();
        const Transport T = transport(full_field(M), g);
        CHECK(std::abs(T.matrix.det() - 1.0) < 1e-10 * len);
    }
}

TEST_CASE("monodromy_of") {
    const Mat2C Pi{cplx(0.8, 0.1), 0.3, cplx(-0.2, 0.4), 0.0};
    const Mat2C P = (1.0 / std::sqrt(Pi.det())) * Pi;
    CHECK(approx_equal(monodromy_of(Mat2C::identity(), P), P, 1e-15));
    const Mat2C Y{1.0, cplx(0.5, 0.5), 0.0, 1.0};
    const Mat2C C = monodromy_of(Y, P);
    CHECK(std::abs(C.trace() - P.trace()) < 1e-14);
    CHECK(std::abs(C.det() - P.det()) < 1e-14);
    // SU(2) stays SU(2).
    const Mat2C U = exp_mat(Mat2C{cplx(0.0, 0.3), cplx(0.2, 0.1), cplx(-0.2, 0.1), cplx(0.0, -0.3)});
    const Mat2C V = exp_mat(Mat2C{cplx(0.0, -0.7), cplx(0.1, 0.9), cplx(-0.1, 0.9), cplx(0.0, 0.7)});
    CHECK(su2_defect(monodromy_of(V, U)) < 1e-14);
}

TEST_CASE("monodromy derivative") {
    const FieldFn zero = [](const ChartId&, cplx) { return Mat2C::zero(); };
    const FieldFn inv_z = [](const ChartId&, cplx z) { return (1.0 / z) * Mat2C::identity(); };
    CHECK(monodromy_derivative(zero, zero, unit_circle()).norm() == 0.0);
    const Mat2C d = monodromy_derivative(zero, inv_z, unit_circle());
    CHECK(approx_equal(d, cplx(0.0, 2 * kPi) * Mat2C::identity(), 1e-10));
    // Finite differences of the scalar family, with frozen step counts.
    const double h = 1e-6;
    const auto fam = [](double lam) {
        return FieldFn([lam](const ChartId&, cplx z) { return (lam / z) * Mat2C::identity(); });
    };
    const TransportOptions fo = fixed(1, 2048);
    const Mat2C fd = (1.0 / (2 * h)) * (transport(fam(h), unit_circle(), fo).matrix - transport(fam(-h), unit_circle(), fo).matrix);
    CHECK(rel(fd, d) < 1e-5);
    // At lambda = 0.2 the exact derivative is 2 pi i e^{2 pi i lambda}.
    const Mat2C d2 = monodromy_derivative(fam(0.2), inv_z, unit_circle());
    const cplx e = cplx(0.0, 2 * kPi) * std::exp(cplx(0.0, 0.4 * kPi));
    CHECK(approx_equal(d2, Mat2C::diag(e, e), 1e-9));
}

TEST_CASE("monodromy derivative along gamma_ij") {
    const SurfaceModel M = two_model(0.0);
    const int i = M.pairs[0].i;
    const PathSpec loop = gamma_path(M, 0);
    const std::vector<cplx> zero(M.m(), 0.0);
    const auto fam = [&](cplx lam) {
        std::vector<cplx> a = zero;
        a[0] = lam;
        return FieldFn([&M, a](const ChartId& c, cplx z) { return connection_A_a(M, a, c, z); });
    };
    const FieldFn dA = [&](const ChartId& c, cplx z) { return connection_A_derivative(M, 0, c, z); };
    const Mat2C d = monodromy_derivative(fam(0.0), dA, loop);
    const double h = 1e-6;
    const TransportOptions fo = fixed(loop.segs.size(), 4096);
    const Mat2C fd = (1.0 / (2 * h)) * (transport(fam(h), loop, fo).matrix - transport(fam(-h), loop, fo).matrix);
    CHECK(rel(fd, d) < 1e-5);
    // Forward difference as well.
    const Mat2C fwd = (1.0 / h) * (transport(fam(h), loop, fo).matrix - transport(fam(0.0), loop, fo).matrix);
    CHECK(rel(fwd, d) < 1e-5);

    // Residue closed form in the pair frame.
    const PairFrame F = pair_frame(M, 0);
    const FieldFn A0h = [&](const ChartId&, cplx) { return F.Ai_hat; };
    const FieldFn dAh = [&](const ChartId& c, cplx z) { return F.conj(connection_A_derivative(M, 0, c, z)); };
    const Mat2C dh = monodromy_derivative(A0h, dAh, loop);
    const cplx p = M.p_ij(0);
    const Mat2C closed = cplx(0.0, kPi) * (M.c[M.pairs[0].i] - M.c[M.pairs[0].j]) *
                         (exp_mat(-p * F.Ai_hat) * Mat2C::diag(1.0, -1.0) * exp_mat(p * F.Ai_hat));
    CHECK(rel(dh, closed) < 1e-6);
    CHECK(i == 0);
}

TEST_CASE("gamma_ij monodromy and its expansion") {
    SurfaceModel M = two_model(0.0);
    CHECK(approx_equal(pi_gamma_numeric(M, 0), Mat2C::identity(), 1e-14));
    std::vector<double> taus{1e-3, 5e-4, 2.5e-4}, errs;
    for (double tau : taus) {
        M.set_tau(tau);
        const Mat2C num = pi_gamma_numeric(M, 0);
        const Mat2C cf = pi_gamma_closed_form(M, 0);
        CHECK(std::abs(num.det() - 1.0) < 1e-10);
        // The first-order term is resolved.
        CHECK((num - Mat2C::identity()).norm() > 100 * (num - cf).norm());
        errs.push_back((num - cf).norm());
    }
    CHECK(loglog_slope(taus, errs) == doctest::Approx(2.0).epsilon(0.1));
}

TEST_CASE("closed-form P and Q") {
    SurfaceModel M = two_model(1e-4, {1.0, 2.0});
    const PairFrame F = pair_frame(M, 0);
    CHECK(M.b0(0) == 1.5);
    CHECK(qij_closed_form(F, M).norm() == 0.0);
    const Mat2C P = pij_closed_form(F, M);
    CHECK(approx_equal(P, cplx(0.0, kPi) * 1e-4 * 1.5 * Mat2C::diag(1.0, -1.0), 1e-18));
    M.pairs[0].q_ij = 0.1;
    const Mat2C Pq = pij_closed_form(F, M), Qq = qij_closed_form(F, M);
    CHECK(Pq.m11 == P.m11);
    CHECK(Pq.m22 == P.m22);
    CHECK(std::abs(Pq.m12) > 0.0);
    CHECK(Qq.m11 == cplx(0.0));
    CHECK(std::abs(Qq.m12 - M.s() * F.lam_i_hat * 0.1) < 1e-15);
    CHECK(two_model(0.0).b0(0) == 1.0);
}

TEST_CASE("paths") {
    const SurfaceModel M = from_packing(build_lattice_packing(1.0), std::vector<double>(8, 1.0), 1e-4);
    for (int k = 0; k < M.m(); ++k) {
        const PathSpec G = big_gamma_path(M, k);
        CHECK(transition_mismatch(M, G) < 1e-12);
        // Plane pieces stay clear of every node disk.
        for (const auto& s : G.segs) {
            if (!s.chart.is_plane()) continue;
            for (int q = 0; q <= 64; ++q) {
                const cplx z = s.point(q / 64.0);
                for (const auto& r : M.nodes[s.chart.index]) CHECK(std::abs(z - M.node_pos(r)) > 1.0 - 1e-9);
            }
        }
        const PathSpec g = gamma_path(M, k);
        CHECK(std::abs(g.segs.front().start()) < 1e-15);
        CHECK(std::abs(g.segs.back().end()) < 1e-12);
    }
    SurfaceModel M0 = M;
    M0.set_tau(0.0);
    CHECK_THROWS_AS(big_gamma_path(M0, 0), DomainError);
}

TEST_CASE("an extra turn of arg a multiplies Gamma by gamma squared") {
    SurfaceModel M = two_model(1e-4);
    const PairMonodromy R0 = pair_monodromy(M, 0);
    M.pairs[0].arg_turns = 1;
    const PairMonodromy R1 = pair_monodromy(M, 0);
    const Mat2C g = Mat2C::identity() + R0.V_gamma;
    CHECK((R1.Pi_Gamma - R0.Pi_Gamma).norm() > 1e-4);
    CHECK(rel(R1.Pi_Gamma, R0.Pi_Gamma * g * g) < 1e-6);
}

TEST_CASE("residual at t = 0") {
    SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.5, 2.0}, 0.0);
    const auto r0 = residual_t0(M);
    CHECK(r0.size() == 6u * M.m());
    for (double v : r0) CHECK(v == 0.0);
    CHECK(residual_F(M).norm() == 0.0);
    const double eps = 1e-3;
    M.pairs[1].b += cplx(0.0, eps);
    auto r = residual_t0(M);
    CHECK(r[6] == doctest::Approx(-kPi * eps));
    M.pairs[1].b -= cplx(0.0, eps);
    M.pairs[2].q_ij = eps;
    r = residual_t0(M);
    const cplx l = pair_frame(M, 2).lam_i_hat * eps;
    CHECK(r[12 + 4] == doctest::Approx(l.real()));
    CHECK(r[12 + 5] == doctest::Approx(l.imag()));
}

TEST_CASE("Jacobian at t = 0 matches finite differences") {
    SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.5, 2.0}, 0.0);
    M.pairs[0].b = cplx(1.1, 0.2);
    M.pairs[1].q_ij = cplx(0.3, -0.1);
    M.pairs[2].q_ji = cplx(-0.2, 0.4);
    const auto J = jacobian_t0(M);
    const auto x = pack_unknowns(M);
    const double h = 1e-6;
    double worst = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
        SurfaceModel Mp = M, Mm = M;
        auto xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        unpack_unknowns(Mp, xp);
        unpack_unknowns(Mm, xm);
        const auto rp = residual_t0(Mp), rm = residual_t0(Mm);
        for (std::size_t r = 0; r < x.size(); ++r) worst = std::max(worst, std::abs((rp[r] - rm[r]) / (2 * h) - J[r][c]));
    }
    CHECK(worst < 1e-7);
}

TEST_CASE("Jacobian at t = 0 is invertible") {
    for (const Packing& P : {two_horosphere_packing(), triangle_packing(), build_lattice_packing(1.0)}) {
        const SurfaceModel M = from_packing(P, std::vector<double>(P.n(), 1.0), 1e-4);
        CHECK(sigma_min_t0(M) > 1e-3);
    }
}

TEST_CASE("unknowns pack and unpack") {
    SurfaceModel M = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 1e-4);
    M.pairs[2].q_ji = cplx(0.5, -0.25);
    const auto x = pack_unknowns(M);
    CHECK(x.size() == 18u);
    SurfaceModel R = from_packing(triangle_packing(), {1.0, 1.0, 1.0}, 1e-4);
    unpack_unknowns(R, x);
    CHECK(pack_unknowns(R) == x);
    auto bad = x;
    bad[0] = bad[1] = 0.0;
    CHECK_THROWS_AS(unpack_unknowns(R, bad), DomainError);
    CHECK(residual_F(M).residual.size() == 18u);
}

TEST_CASE("Newton solve on two horospheres") {
    SurfaceModel M = two_model(1e-4);
    const SolveReport r = newton_solve(M);
    CHECK(r.converged);
    CHECK(r.iterations <= 8);
    CHECK(r.residual < 1e-9);
    CHECK(r.history.front() > r.history.back());
    CHECK(std::abs(M.pairs[0].b - 1.0) < 0.5);
    CHECK(r.max_solved_defect < 1e-9);
    CHECK(r.defects.size() == 1u);
    const std::string csv = convergence_csv(r);
    CHECK(csv.rfind("iteration,residual_norm,max_su2_defect\n", 0) == 0);
    const auto j = solve_report_json(r);
    CHECK(j.at("converged").get<bool>());
    CHECK(j.at("iterations").get<int>() == r.iterations);

    // The solved generators lie in SU(2), and so do words in them.
    const PairMonodromy pm = pair_monodromy(M, 0);
    const Mat2C g1 = exp_mat(pm.P), g2 = exp_mat(pm.Q);
    const double base = std::max(su2_defect(g1), su2_defect(g2));
    std::mt19937_64 rng(3);
    const Mat2C gens[4] = {g1, g1.inverse(), g2, g2.inverse()};
    for (int w = 0; w < 50; ++w) {
        Mat2C W = Mat2C::identity();
        const int len = 1 + static_cast<int>(rng() % 6);
        for (int q = 0; q < len; ++q) W = W * gens[rng() % 4];
        CHECK(su2_defect(W) <= 2.0 * len * base + 1e-12);
    }
}

TEST_CASE("Newton failures") {
    SurfaceModel M = two_model(1e-4);
    SolveOptions o;
    o.max_iter = 1;
    CHECK_THROWS_AS(newton_solve(M, o), NoConvergence);
    SurfaceModel Z = two_model(1e-4);
    Z.pairs[0].b = 0.0;
    CHECK_THROWS_AS(newton_solve(Z), DomainError);
}

TEST_CASE("ladder report") {
    const LadderReport L = run_ladder(two_model(1e-3), {1e-3, 5e-4});
    REQUIRE(L.rows.size() == 2u);
    for (const auto& row : L.rows) {
        CHECK(row.residual < 1e-9);
        CHECK(row.s == doctest::Approx(s_of_tau(row.tau)));
    }
    CHECK(L.rows[1].max_db < L.rows[0].max_db);
    CHECK(ladder_csv(L).find('\n') != std::string::npos);
    CHECK(ladder_json(L).at("rows").size() == 2u);
}

} // TEST_SUITE
