#include "horoforge/monodromy.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <iostream>
#include <sstream>
#include <thread>

namespace horoforge {

int thread_count(int requested) {
    int n = requested;
    if (n <= 0) {
        if (const char* env = std::getenv("HOROFORGE_THREADS")) n = std::atoi(env);
    }
    if (n <= 0) n = static_cast<int>(std::thread::hardware_concurrency());
    return std::max(1, n);
}

void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    const int T = std::min(thread_count(threads), n);
    if (T <= 1) {
        for (int k = 0; k < n; ++k) fn(k);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex fail_mu;
    std::vector<std::thread> pool;
    for (int t = 0; t < T; ++t) {
        pool.emplace_back([&] {
            for (int k = next++; k < n; k = next++) {
                try {
                    fn(k);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(fail_mu);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

bool StepCache::lookup(const std::string& key, std::size_t nseg, std::vector<int>& out) const {
    std::lock_guard<std::mutex> lock(mu_);
    const auto it = map_.find(key);
    if (it == map_.end() || it->second.size() != nseg) return false;
    out = it->second;
    return true;
}

void StepCache::store(const std::string& key, const std::vector<int>& steps) {
    std::lock_guard<std::mutex> lock(mu_);
    map_[key] = steps;
}

void StepCache::clear() {
    std::lock_guard<std::mutex> lock(mu_);
    map_.clear();
}

PathSpec base_route(const SurfaceModel& M, int plane, cplx target) {
    std::vector<cplx> obstacles;
    for (const auto& r : M.nodes[plane]) obstacles.push_back(M.node_pos(r));
    return route_in_plane(ChartId::plane(plane), 0.0, target, obstacles);
}

PathSpec gamma_path(const SurfaceModel& M, int k) {
    const int i = M.pairs[k].i;
    const cplx p = M.p_ij(k);
    PathSpec out = base_route(M, i, p + 1.0);
    PathSpec loop = out;
    loop.segs.push_back(Segment::arc(ChartId::plane(i), p, 1.0, 0.0, 2 * kPi));
    loop.append(out.reversed());
    return loop;
}

PathSpec gamma_ji_path(const SurfaceModel& M, int k) {
    const int j = M.pairs[k].j;
    const cplx p = M.p_ji(k);
    PathSpec out = base_route(M, j, p + 1.0);
    PathSpec loop = out;
    loop.segs.push_back(Segment::arc(ChartId::plane(j), p, 1.0, 0.0, 2 * kPi));
    loop.append(out.reversed());
    return loop;
}

PathSpec big_gamma_path(const SurfaceModel& M, int k) {
    if (!(M.tau > 0)) throw DomainError("the neck is closed at tau = 0");
    const auto& P = M.pairs[k];
    PathSpec path = base_route(M, P.i, M.p_ij(k) + 1.0);
    path.segs.push_back(Segment::log_line(ChartId::neck(k), M.log_t_ij(k), -M.log_t_ji(k)));
    path.append(base_route(M, P.j, M.p_ji(k) + 1.0).reversed());
    return path;
}

namespace {

TransportOptions make_topts(const MonodromyOptions& opt, const std::string& key, std::size_t nseg) {
    TransportOptions to;
    to.rel_tol = opt.rel_tol;
    to.abs_tol = opt.abs_tol;
    to.min_steps = 16;
    if (opt.cache) opt.cache->lookup(key, nseg, to.fixed_steps);
    return to;
}

Mat2C run_plane(const PlaneField& f, const PathSpec& p, const std::string& key, const MonodromyOptions& opt,
                double& err) {
    const TransportOptions to = make_topts(opt, key, p.segs.size());
    const Transport T = transport_interaction([&f](const ChartId&, cplx z) { return f.delta(z); }, f.base(), p, to);
    if (opt.cache && to.fixed_steps.empty()) opt.cache->store(key, T.steps);
    err += T.error;
    return T.matrix;
}

Mat2C run_neck(const NeckField& f, const PathSpec& p, const std::string& key, const MonodromyOptions& opt,
               double& err) {
    const TransportOptions to = make_topts(opt, key, p.segs.size());
    const Transport T = transport([&f](const ChartId&, cplx z) { return f(z); }, p, to);
    if (opt.cache && to.fixed_steps.empty()) opt.cache->store(key, T.steps);
    err += T.error;
    return T.matrix;
}

Mat2C unipotent(const Mat2C& N, cplx z) {
    return {1.0 + z * N.m11, z * N.m12, z * N.m21, 1.0 + z * N.m22};
}

} // namespace

PairMonodromy pair_monodromy(const SurfaceModel& M, int k, const MonodromyOptions& opt) {
    const auto& P = M.pairs[k];
    const PairFrame F = pair_frame(M, k);
    const auto a = M.a_vector();
    const double s = M.s();
    PairMonodromy R;
    std::tie(R.M_i, R.M_j) = m_hat_matrices(F, M, s);
    const PlaneField fi(M, P.i, a, F.H), fj(M, P.j, a, F.H);
    const std::string tag = std::to_string(k) + ":";
    const cplx pi = M.p_ij(k), pj = M.p_ji(k);

    const PathSpec out_i = base_route(M, P.i, pi + 1.0);
    const Mat2C V_oi = run_plane(fi, out_i, tag + "out_i", opt, R.error);
    PathSpec circ_i;
    circ_i.segs.push_back(Segment::arc(ChartId::plane(P.i), pi, 1.0, 0.0, 2 * kPi));
    const Mat2C V_ci = run_plane(fi, circ_i, tag + "circ_i", opt, R.error);
    const Mat2C U_oi = Mat2C::identity() + V_oi;
    R.V_gamma = U_oi.inverse() * V_ci * U_oi;
    R.P = log_near_identity(R.M_i.inverse() * R.V_gamma * R.M_i);

    const PathSpec out_j = base_route(M, P.j, pj + 1.0);
    const Mat2C V_oj = run_plane(fj, out_j, tag + "out_j", opt, R.error);
    const Mat2C U_oj = Mat2C::identity() + V_oj;
    Mat2C Y_neck = Mat2C::identity();
    if (M.tau > 0) {
        PathSpec neck;
        neck.segs.push_back(Segment::log_line(ChartId::neck(k), M.log_t_ij(k), -M.log_t_ji(k)));
        Y_neck = run_neck(NeckField(M, k, a, F.H), neck, tag + "neck", opt, R.error);
    }
    R.Pi_Gamma = (unipotent(F.Aj_hat, pj + 1.0) * U_oj).inverse() * Y_neck * unipotent(F.Ai_hat, pi + 1.0) * U_oi;
    const Mat2C X = R.M_j.inverse() * R.Pi_Gamma * R.M_i;
    try {
        R.Q = log_mat(X);
    } catch (const DomainError& e) {
        throw LogBranchError(std::string("Gamma monodromy outside the log domain; reduce tau (") + e.what() + ")");
    }

    R.V_gamma_ji = Mat2C::zero();
    if (opt.with_gamma_ji) {
        PathSpec circ_j;
        circ_j.segs.push_back(Segment::arc(ChartId::plane(P.j), pj, 1.0, 0.0, 2 * kPi));
        const Mat2C V_cj = run_plane(fj, circ_j, tag + "circ_j", opt, R.error);
        R.V_gamma_ji = U_oj.inverse() * V_cj * U_oj;
    }
    return R;
}

Mat2C pi_gamma_numeric(const SurfaceModel& M, int k, const MonodromyOptions& opt) {
    const auto& P = M.pairs[k];
    const PairFrame F = pair_frame(M, k);
    const PlaneField fi(M, P.i, M.a_vector(), F.H);
    const PathSpec loop = gamma_path(M, k);
    TransportOptions to;
    to.rel_tol = opt.rel_tol;
    to.abs_tol = opt.abs_tol;
    const Transport T =
        transport_interaction([&fi](const ChartId&, cplx z) { return fi.delta(z); }, fi.base(), loop, to);
    return Mat2C::identity() + T.matrix;
}

Mat2C pi_gamma_closed_form(const SurfaceModel& M, int k) {
    const auto& P = M.pairs[k];
    const PairFrame F = pair_frame(M, k);
    const cplx p = M.p_ij(k);
    const Mat2C E = unipotent(F.Ai_hat, p), Em = unipotent(F.Ai_hat, -p);
    const cplx coef = M.a(k) * cplx(0.0, kPi) * (M.c[P.i] - M.c[P.j]);
    return Mat2C::identity() + coef * (Em * Mat2C::diag(1.0, -1.0) * E);
}

Mat2C pij_closed_form(const PairFrame& F, const SurfaceModel& M) {
    const auto& P = M.pairs[F.pair];
    const double s = M.s();
    return cplx(0.0, kPi) * M.tau * P.b * Mat2C{1.0, 2.0 * F.lam_i_hat * s * P.q_ij, 0.0, -1.0};
}

Mat2C qij_closed_form(const PairFrame& F, const SurfaceModel& M) {
    const auto& P = M.pairs[F.pair];
    const double s = M.s();
    const cplx d = M.b0(F.pair) - P.b;
    return s * Mat2C{d, F.lam_i_hat * P.q_ij, -F.lam_j_hat * P.q_ji, -d};
}

std::vector<double> pack_unknowns(const SurfaceModel& M) {
    std::vector<double> x;
    for (const auto& P : M.pairs) {
        x.insert(x.end(), {P.b.real(), P.b.imag(), P.q_ij.real(), P.q_ij.imag(), P.q_ji.real(), P.q_ji.imag()});
    }
    return x;
}

void unpack_unknowns(SurfaceModel& M, const std::vector<double>& x) {
    for (int k = 0; k < M.m(); ++k) {
        auto& P = M.pairs[k];
        P.b = {x[6 * k], x[6 * k + 1]};
        P.q_ij = {x[6 * k + 2], x[6 * k + 3]};
        P.q_ji = {x[6 * k + 4], x[6 * k + 5]};
        if (std::abs(P.b) < 1e-12) throw DomainError("b = 0 is outside the solver domain");
    }
}

double ResidualState::norm() const {
    double s = 0;
    for (double r : residual) s += r * r;
    return std::sqrt(s);
}

namespace {

void residual_block(const SurfaceModel& M, const PairMonodromy& R, double* out) {
    const double tau = M.tau, s = M.s();
    out[0] = R.P.m11.real() / tau;
    const cplx p2 = (R.P.m12 + std::conj(R.P.m21)) / (tau * s);
    out[1] = p2.real();
    out[2] = p2.imag();
    out[3] = R.Q.m11.real() / s;
    const cplx q2 = (R.Q.m12 + std::conj(R.Q.m21)) / s;
    out[4] = q2.real();
    out[5] = q2.imag();
}

} // namespace

std::vector<double> residual_t0(const SurfaceModel& M) {
    std::vector<double> r;
    for (int k = 0; k < M.m(); ++k) {
        const auto& P = M.pairs[k];
        const PairFrame F = pair_frame(M, k);
        const cplx f2 = cplx(0.0, 2 * kPi) * P.b * F.lam_i_hat * P.q_ij;
        const cplx f4 = F.lam_i_hat * P.q_ij - std::conj(F.lam_j_hat * P.q_ji);
        r.insert(r.end(), {-kPi * P.b.imag(), f2.real(), f2.imag(), M.b0(k) - P.b.real(), f4.real(), f4.imag()});
    }
    return r;
}

ResidualState residual_F(const SurfaceModel& M, const MonodromyOptions& opt) {
    ResidualState st;
    st.t = t_of_tau(M.tau);
    if (!(M.tau > 0)) {
        st.residual = residual_t0(M);
        return st;
    }
    if (M.tau >= tau_max) throw ValidationError("tau must be below 1e-2");
    st.pairs.resize(M.m());
    parallel_for(M.m(), 0, [&](int k) { st.pairs[k] = pair_monodromy(M, k, opt); });
    st.residual.assign(6 * M.m(), 0.0);
    for (int k = 0; k < M.m(); ++k) residual_block(M, st.pairs[k], &st.residual[6 * k]);
    return st;
}

std::vector<std::vector<double>> jacobian_t0(const SurfaceModel& M) {
    const int n = 6 * M.m();
    std::vector<std::vector<double>> J(n, std::vector<double>(n, 0.0));
    for (int k = 0; k < M.m(); ++k) {
        const auto& P = M.pairs[k];
        const PairFrame F = pair_frame(M, k);
        const int o = 6 * k;
        J[o + 0][o + 1] = -kPi;
        const cplx c2 = cplx(0.0, 2 * kPi) * P.b * F.lam_i_hat;
        const cplx c2b = cplx(0.0, 2 * kPi) * F.lam_i_hat * P.q_ij;
        J[o + 1][o + 0] = c2b.real();
        J[o + 1][o + 1] = -c2b.imag();
        J[o + 2][o + 0] = c2b.imag();
        J[o + 2][o + 1] = c2b.real();
        J[o + 1][o + 2] = c2.real();
        J[o + 1][o + 3] = -c2.imag();
        J[o + 2][o + 2] = c2.imag();
        J[o + 2][o + 3] = c2.real();
        J[o + 3][o + 0] = -1.0;
        const cplx li = F.lam_i_hat, lj = std::conj(F.lam_j_hat);
        J[o + 4][o + 2] = li.real();
        J[o + 4][o + 3] = -li.imag();
        J[o + 5][o + 2] = li.imag();
        J[o + 5][o + 3] = li.real();
        // -conj(lj_hat q): d/dRe q = -conj(lj_hat), d/dIm q = i conj(lj_hat).
        J[o + 4][o + 4] = -lj.real();
        J[o + 5][o + 4] = -lj.imag();
        J[o + 4][o + 5] = -lj.imag();
        J[o + 5][o + 5] = lj.real();
    }
    return J;
}

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& J) {
    const int n = static_cast<int>(J.size());
    Eigen::MatrixXd E(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) E(r, c) = J[r][c];
    return E;
}

} // namespace

double sigma_min_t0(const SurfaceModel& M) {
    SurfaceModel base = M;
    for (int k = 0; k < base.m(); ++k) {
        base.pairs[k].b = base.b0(k);
        base.pairs[k].q_ij = base.pairs[k].q_ji = 0.0;
    }
    const Eigen::MatrixXd J = to_eigen(jacobian_t0(base));
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(J);
    return svd.singularValues().minCoeff();
}

std::vector<GeneratorDefect> generator_defects(const SurfaceModel& M, double rel_tol) {
    std::vector<GeneratorDefect> out(M.m());
    MonodromyOptions mo;
    mo.rel_tol = rel_tol;
    mo.with_gamma_ji = true;
    parallel_for(M.m(), 0, [&](int k) {
        const PairMonodromy R = pair_monodromy(M, k, mo);
        GeneratorDefect d;
        d.pair = k;
        d.gamma_ij = su2_algebra_defect(R.P);
        d.Gamma_ji = su2_algebra_defect(R.Q);
        d.gamma_ji = su2_defect_near_identity(R.M_j.inverse() * R.V_gamma_ji * R.M_j);
        out[k] = d;
    });
    return out;
}

SolveReport newton_solve(SurfaceModel& M, const SolveOptions& opt) {
    if (!(M.tau >= 0) || M.tau >= tau_max) throw ValidationError("tau must lie in [0, 1e-2); reduce tau");
    SolveReport rep;
    rep.sigma_min = sigma_min_t0(M);
    if (rep.sigma_min <= 1e-3) throw NumericalError("Jacobian at t = 0 is numerically singular");
    StepCache cache;
    MonodromyOptions mo;
    mo.rel_tol = opt.rel_tol;
    mo.cache = &cache;
    const int m = M.m(), n = 6 * m;

    // Pairs whose residual block can depend on the unknowns of pair k.
    std::vector<std::vector<int>> affected(m);
    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
            const auto &A = M.pairs[k], &B = M.pairs[l];
            if (A.i == B.i || A.i == B.j || A.j == B.i || A.j == B.j) affected[k].push_back(l);
        }

    std::vector<double> x = pack_unknowns(M);
    auto eval = [&](const std::vector<double>& xv) {
        SurfaceModel T = M;
        unpack_unknowns(T, xv);
        return residual_F(T, mo).residual;
    };
    std::vector<double> F = eval(x);
    double fn = 0;
    for (double v : F) fn += v * v;
    fn = std::sqrt(fn);
    rep.history.push_back(fn);

    Eigen::MatrixXd J(n, n);
    bool have_J = false;
    double last_ratio = 1.0;
    while (fn >= opt.tol_res && rep.iterations < opt.max_iter) {
        if (!have_J || last_ratio > 0.05) {
            J.setZero();
            if (M.tau > 0) {
                std::vector<Eigen::VectorXd> cols(n);
                parallel_for(n, opt.threads, [&](int c) {
                    const int k = c / 6;
                    const double h = opt.fd_step * std::max(1.0, std::abs(x[c]));
                    Eigen::VectorXd col = Eigen::VectorXd::Zero(n);
                    SurfaceModel Tp = M, Tm = M;
                    std::vector<double> xp = x, xm = x;
                    xp[c] += h;
                    xm[c] -= h;
                    unpack_unknowns(Tp, xp);
                    unpack_unknowns(Tm, xm);
                    for (int l : affected[k]) {
                        double rp[6], rm[6];
                        residual_block(Tp, pair_monodromy(Tp, l, mo), rp);
                        residual_block(Tm, pair_monodromy(Tm, l, mo), rm);
                        for (int r = 0; r < 6; ++r) col(6 * l + r) = (rp[r] - rm[r]) / (2 * h);
                    }
                    cols[c] = col;
                });
                for (int c = 0; c < n; ++c) J.col(c) = cols[c];
            } else {
                SurfaceModel T = M;
                unpack_unknowns(T, x);
                J = to_eigen(jacobian_t0(T));
            }
            have_J = true;
        }
        SurfaceModel T = M;
        unpack_unknowns(T, x);
        const Eigen::MatrixXd P0 = to_eigen(jacobian_t0(T)).inverse();
        Eigen::VectorXd Fv(n);
        for (int r = 0; r < n; ++r) Fv(r) = F[r];
        const Eigen::VectorXd delta = (P0 * J).colPivHouseholderQr().solve(-(P0 * Fv));
        double step = 1.0;
        std::vector<double> xn;
        std::vector<double> Fn;
        double fnn = 0;
        for (int ls = 0; ls < 12; ++ls) {
            xn = x;
            for (int r = 0; r < n; ++r) xn[r] += step * delta(r);
            try {
                Fn = eval(xn);
                fnn = 0;
                for (double v : Fn) fnn += v * v;
                fnn = std::sqrt(fnn);
            } catch (const DomainError&) {
                fnn = std::numeric_limits<double>::infinity();
            } catch (const LogBranchError&) {
                fnn = std::numeric_limits<double>::infinity();
            }
            if (fnn < fn) break;
            step *= 0.5;
        }
        ++rep.iterations;
        if (!(fnn < fn)) {
            if (have_J && last_ratio <= 0.05) {
                // Stale Jacobian: refresh and retry.
                last_ratio = 1.0;
                continue;
            }
            break;
        }
        last_ratio = fnn / fn;
        x = xn;
        F = Fn;
        fn = fnn;
        rep.history.push_back(fn);
        if (opt.verbose) std::cerr << "newton iter " << rep.iterations << " residual " << fn << "\n";
    }
    unpack_unknowns(M, x);
    rep.residual = fn;
    rep.converged = fn < opt.tol_res;
    // Fresh adaptive evaluation, no frozen step counts.
    MonodromyOptions fresh;
    fresh.rel_tol = opt.rel_tol;
    rep.verified_residual = residual_F(M, fresh).norm();
    rep.defects = generator_defects(M, opt.rel_tol);
    for (const auto& d : rep.defects) {
        rep.max_defect = std::max({rep.max_defect, d.gamma_ij, d.Gamma_ji, d.gamma_ji});
        rep.max_solved_defect = std::max({rep.max_solved_defect, d.gamma_ij, d.Gamma_ji});
    }
    if (!rep.converged) {
        std::ostringstream os;
        os << "Newton did not converge in " << rep.iterations << " iterations, residual " << fn;
        throw NoConvergence(os.str());
    }
    return rep;
}

nlohmann::json solve_report_json(const SolveReport& r) {
    nlohmann::json d = nlohmann::json::array();
    for (const auto& g : r.defects)
        d.push_back({{"pair", g.pair}, {"gamma_ij", g.gamma_ij}, {"Gamma_ji", g.Gamma_ji}, {"gamma_ji", g.gamma_ji}});
    return {{"converged", r.converged},
            {"iterations", r.iterations},
            {"residual", r.residual},
            {"verified_residual", r.verified_residual},
            {"history", r.history},
            {"sigma_min_t0", r.sigma_min},
            {"max_defect", r.max_defect},
            {"defects", d}};
}

std::string convergence_csv(const SolveReport& r) {
    std::ostringstream os;
    os.precision(12);
    os << "iteration,residual_norm,max_su2_defect\n";
    for (std::size_t k = 0; k < r.history.size(); ++k) {
        os << k << ',' << r.history[k] << ',';
        // Defects are only measured at the final iterate.
        if (k + 1 == r.history.size()) os << r.max_defect;
        os << '\n';
    }
    return os.str();
}

} // namespace horoforge
