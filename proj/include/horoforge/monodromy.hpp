#pragma once

#include <map>
#include <mutex>
#include <string>
#include <vector>

#include "horoforge/surface_model.hpp"
#include "horoforge/transport.hpp"

namespace horoforge {

inline constexpr double tau_max = 1e-2;

// Route from the base point 0 of a plane chart to node + 1, avoiding all node disks.
PathSpec base_route(const SurfaceModel& M, int plane, cplx target);
// gamma_ij: out to p_ij + 1, once around p_ij, and back, in Plane(i).
PathSpec gamma_path(const SurfaceModel& M, int k);
// The analogous loop around p_ji in Plane(j).
PathSpec gamma_ji_path(const SurfaceModel& M, int k);
// Gamma_ji: 0_i to 0_j through the neck chart of pair k.
PathSpec big_gamma_path(const SurfaceModel& M, int k);

struct PairMonodromy {
    // Pair-frame transports: Pi(gamma_ij) = I + V_gamma, Pi(gamma_ji) = I + V_gamma_ji.
    Mat2C V_gamma, V_gamma_ji;
    Mat2C Pi_Gamma;
    Mat2C M_i, M_j;
    // P = log(M_i^{-1} Pi(gamma_ij) M_i), Q = log(M_j^{-1} Pi(Gamma_ji) M_i).
    Mat2C P, Q;
    double error = 0.0;
};

// Step counts frozen per path piece so that repeated evaluations are smooth in the parameters.
class StepCache {
public:
    bool lookup(const std::string& key, std::size_t nseg, std::vector<int>& out) const;
    void store(const std::string& key, const std::vector<int>& steps);
    void clear();

private:
    mutable std::mutex mu_;
    std::map<std::string, std::vector<int>> map_;
};

struct MonodromyOptions {
    double rel_tol = 1e-12;
    double abs_tol = 1e-18;
    bool with_gamma_ji = false;
    StepCache* cache = nullptr;
};

PairMonodromy pair_monodromy(const SurfaceModel& M, int k, const MonodromyOptions& opt = {});

// Pair-frame transport of gamma_ij.
Mat2C pi_gamma_numeric(const SurfaceModel& M, int k, const MonodromyOptions& opt = {});
// First-order residue expansion of the same loop.
Mat2C pi_gamma_closed_form(const SurfaceModel& M, int k);
Mat2C pij_closed_form(const PairFrame& F, const SurfaceModel& M);
Mat2C qij_closed_form(const PairFrame& F, const SurfaceModel& M);

// Unknowns per pair: Re b, Im b, Re q_ij, Im q_ij, Re q_ji, Im q_ji.
std::vector<double> pack_unknowns(const SurfaceModel& M);
void unpack_unknowns(SurfaceModel& M, const std::vector<double>& x);

struct ResidualState {
    double t = 0.0;
    std::vector<double> residual;
    std::vector<PairMonodromy> pairs;
    double norm() const;
};

// The scaled residual; at t = 0 the closed-form limit.
ResidualState residual_F(const SurfaceModel& M, const MonodromyOptions& opt = {});
std::vector<double> residual_t0(const SurfaceModel& M);
// d residual / d unknowns at t = 0, block diagonal.
std::vector<std::vector<double>> jacobian_t0(const SurfaceModel& M);
double sigma_min_t0(const SurfaceModel& M);

struct GeneratorDefect {
    int pair = 0;
    double gamma_ij = 0.0;
    double Gamma_ji = 0.0;
    double gamma_ji = 0.0;
};

struct SolveOptions {
    int max_iter = 12;
    double tol_res = 1e-9;
    double fd_step = 1e-6;
    double rel_tol = 1e-12;
    int threads = 0;
    bool verbose = false;
};

struct SolveReport {
    bool converged = false;
    int iterations = 0;
    std::vector<double> history;
    double residual = 0.0;
    double verified_residual = 0.0;
    double sigma_min = 0.0;
    std::vector<GeneratorDefect> defects;
    double max_defect = 0.0;
    double max_solved_defect = 0.0;
};

SolveReport newton_solve(SurfaceModel& M, const SolveOptions& opt = {});
std::vector<GeneratorDefect> generator_defects(const SurfaceModel& M, double rel_tol = 1e-12);
nlohmann::json solve_report_json(const SolveReport& r);
std::string convergence_csv(const SolveReport& r);

int thread_count(int requested);
void parallel_for(int n, int threads, const std::function<void(int)>& fn);

} // namespace horoforge
