#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "horoforge/lin_hyp.hpp"

namespace horoforge {

inline constexpr double tol_tang = 1e-9;

// A horizontal plane at height h, or a euclidean sphere of radius R
// touching the boundary at p.
struct Horosphere {
    enum class Kind { Sphere, Plane };
    Kind kind = Kind::Plane;
    cplx p{0.0};
    double R = 0.0;
    double h = 1.0;

    static Horosphere sphere(cplx p, double R);
    static Horosphere plane(double h);
    bool is_plane() const { return kind == Kind::Plane; }
    BoundaryPoint limit_point() const;

    // v with v v* the null vector of the horosphere; v -> Hv under isometries.
    std::array<cplx, 2> null_vector() const;
    static Horosphere from_null(cplx v1, cplx v2);
    Horosphere transformed(const Mat2C& H) const;
};

// K in SL(2,C) taking the plane x3 = 1 to S.
Mat2C frame_matrix(const Horosphere& S);

enum class Tangency { Tangent, Disjoint, Overlapping };
const char* to_string(Tangency t);
Tangency tangency_test(const Horosphere& a, const Horosphere& b, double tol = tol_tang);

using Edge = std::pair<int, int>;

struct Packing {
    std::vector<Horosphere> horospheres;
    std::vector<Edge> tangencies;
    int n() const { return static_cast<int>(horospheres.size()); }
    int m() const { return static_cast<int>(tangencies.size()); }
};

std::vector<Edge> compute_tangencies(const std::vector<Horosphere>& hs);
Packing make_packing(std::vector<Horosphere> hs);
// Throws ValidationError on overlaps or inconsistent tangency lists.
void validate_packing(const Packing& P);
int count_components(int n, const std::vector<Edge>& edges);
bool is_connected(const Packing& P);

Packing build_lattice_packing(double R);
Packing build_apollonian_packing(int steps, std::uint64_t choice_seed);
std::pair<Horosphere, Horosphere> solve_apollonius_tangent(const Horosphere& S1, const Horosphere& S2,
                                                           const Horosphere& S3);

struct Horocycle {
    cplx center{0.0};
    double r = 0.0;
};

struct Packing2D {
    std::vector<Horocycle> horocycles;
    std::vector<Edge> tangencies;
    int n() const { return static_cast<int>(horocycles.size()); }
    int m() const { return static_cast<int>(tangencies.size()); }
};

Packing2D build_horocycle_chain(int n);

struct BoundsReport {
    int n = 0;
    int m = 0;
    int genus = 0;
    int cycle_rank = 0;
    int components = 0;
    bool bound_3d_applies = false;
    int bound_3d = 0;
    bool bound_3d_ok = true;
    int lemma_max_degree = 0;
    bool lemma_ok = true;
    std::uint64_t seed = 0;
};

struct BoundsReport2D {
    int n = 0;
    int m = 0;
    int bound_2d = 0;
    bool bound_2d_ok = true;
    int planar_vertices = 0;
    int planar_edges = 0;
    bool planar_ok = true;
};

BoundsReport verify_packing_bounds(const Packing& P, std::uint64_t seed = 1);
BoundsReport2D verify_packing_bounds(const Packing2D& P);
std::string bounds_csv(const BoundsReport& r);

double angle_check(const Horosphere& S1, const Horosphere& S2, const Horosphere& S3);

struct ScanRow {
    int R = 0;
    int n = 0;
    int m = 0;
    double ratio = 0.0;
    bool upper_ok = true;
};

struct ScanReport {
    std::vector<ScanRow> rows;
    double fitted_C = 0.0;
    bool upper_ok = true;
    bool monotone = true;
};

ScanReport lattice_ratio_scan(double R_max);
std::string scan_csv(const ScanReport& s);

nlohmann::json packing_to_json(const Packing& P);
Packing packing_from_json(const nlohmann::json& j);
nlohmann::json packing2d_to_json(const Packing2D& P);
Packing2D packing2d_from_json(const nlohmann::json& j);

} // namespace horoforge
