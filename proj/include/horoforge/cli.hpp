#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"

#include "horoforge/geometry_out.hpp"
#include "horoforge/monodromy.hpp"
#include "horoforge/packing.hpp"

namespace horoforge {

inline constexpr const char* kVersion = "0.1.0";

// Entry point of the horoforge binary. Returns 0, 2 (bad input) or 3 (numerical failure).
int run(int argc, char** argv);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// A plane at height 1 with a sphere of radius 1/2 under it.
Packing two_horosphere_packing();
// The plane and two spheres of radius 1/2 touching it and each other.
Packing triangle_packing();
// "two", "triangle" or "lattice" (lattice packing with R = 1).
Packing demo_packing(const std::string& name);

std::uint64_t fnv1a(const std::string& data);
std::string hex64(std::uint64_t h);

// "start:count" halves start count - 1 times; otherwise a comma-separated list.
std::vector<double> parse_ladder(const std::string& spec);
std::vector<double> parse_doubles(const std::string& csv);

// Least-squares slope of log y against log x.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

struct LadderRow {
    double tau = 0.0;
    double s = 0.0;
    int iterations = 0;
    double residual = 0.0;
    double verified_residual = 0.0;
    std::vector<cplx> b;
    double max_db = 0.0;
    double max_q = 0.0;
    // Over gamma_ij and Gamma_ji, and over all three generators.
    double max_solved_defect = 0.0;
    double max_defect = 0.0;
    // Largest distance between the numeric gamma_ij transport and its first-order expansion.
    double closed_form_err = 0.0;
};

struct LadderReport {
    std::vector<LadderRow> rows;
    double slope_defect = 0.0;
    double slope_solved_defect = 0.0;
    double slope_closed_form = 0.0;
    // Slope of |b - b0| against tau |log tau|, and the largest ratio between them.
    double slope_db = 0.0;
    double C_db = 0.0;
    double slope_q = 0.0;
};

// Solves at each tau in turn, continuing from the previous solution.
LadderReport run_ladder(SurfaceModel M, const std::vector<double>& taus, const SolveOptions& opt = {});
nlohmann::json ladder_json(const LadderReport& r);
std::string ladder_csv(const LadderReport& r);

} // namespace horoforge
