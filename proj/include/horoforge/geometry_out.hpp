#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "horoforge/mesh.hpp"
#include "horoforge/monodromy.hpp"
#include "horoforge/surface_model.hpp"

namespace horoforge {

// F(0_i) for every plane, propagated from F(0_0) = M_0(s) along a spanning
// tree of the tangency graph. Model frame.
struct BaseFrames {
    std::vector<Mat2C> F0;
    // Tree edge used to reach plane i (-1 for the root).
    std::vector<int> via_pair;
};

BaseFrames base_frames(const SurfaceModel& M, double rel_tol = 1e-12);

// Frame at a chart point, reached by the canonical route from the base point.
// Neck points are reached through Plane(i) of the pair.
Mat2C evaluate_frame(const SurfaceModel& M, const BaseFrames& B, const ChartId& chart, cplx z,
                     double rel_tol = 1e-11);
// Immersion in the coordinates of the input packing.
HalfSpacePoint evaluate_immersion(const SurfaceModel& M, const BaseFrames& B, const ChartId& chart, cplx z,
                                  double rel_tol = 1e-11);
// Frame and point in the original packing frame.
HalfSpacePoint frame_to_point(const SurfaceModel& M, const Mat2C& F);

// Frame in which horosphere i is x3 = 1 and the other horosphere of pair k
// touches it at the origin; side 1 swaps the roles.
Mat2C side_frame(const SurfaceModel& M, int k, int side);
// Frame in which horosphere i is x3 = 1 and f_i(z) sits over mu_i z.
Mat2C end_frame(const SurfaceModel& M, int i);

struct MeshOptions {
    double eps = 0.2;
    double R = 5.0;
    int grid = 64;
    double rel_tol = 1e-10;
    int threads = 0;
};

struct NeckDiagnostics {
    int pair = 0;
    double center_height = 0.0;
    double expected_center_height = 0.0;
    double deviation_b0 = 0.0;
    double deviation_b = 0.0;
    double necksize = 0.0;
    double expected_necksize = 0.0;
    bool rings_ordered = true;
};

struct GeometryDiagnostics {
    double seam_mismatch = 0.0;
    double min_cap_height = 0.0;
    std::vector<double> base_height;
    double max_angle_proxy = 0.0;
    double max_transition_dev = 0.0;
    int degenerate = 0;
    double min_x3 = 0.0;
    std::vector<NeckDiagnostics> necks;
};

struct SurfaceMesh {
    std::vector<MeshPatch> patches;
    // Model-frame F at each vertex, parallel to patches.
    std::vector<std::vector<Mat2C>> frames;
    GeometryDiagnostics diag;
    double cap_radius = 0.0;
};

// Caps over |z| < R minus unit disks at the nodes, and for each pair a
// log-polar strip: collar, transition, neck, transition, collar.
SurfaceMesh build_surface(const SurfaceModel& M, const MeshOptions& opt = {});

// The mesh of C_i^{eps,R}: cap i merged with its collars.
MeshPatch build_horosphere_cap(const SurfaceModel& M, int i, const MeshOptions& opt = {});
MeshPatch build_neck(const SurfaceModel& M, int k, const MeshOptions& opt = {});
MeshPatch build_transition(const SurfaceModel& M, int k, int side, const MeshOptions& opt = {});
const MeshPatch& find_patch(const SurfaceMesh& S, const std::string& name);

// Distance of each cap vertex from its input horosphere (used at tau = 0).
double cap_horosphere_error(const SurfaceModel& M, const SurfaceMesh& S);

// Catenoid limit of the blown-up neck, horizontal and vertical parts.
std::pair<cplx, double> catenoid_point(cplx rho, double size, cplx z);

struct EndAnalysis {
    int end = 0;
    cplx alpha{0.0};
    cplx beta{0.0};
    cplx lam_hat{0.0};
    cplx delta{1.0};
    cplx eig1{0.0}, eig2{-1.0};
    double exponent = 0.0;
    double fitted = 0.0;
    // tau * zeta with zeta from the solved b, and from b0.
    double tau_zeta_model = 0.0;
    double tau_zeta = 0.0;
    bool resonant = false;
};

// Spectral data for a given alpha * beta.
void end_spectrum(EndAnalysis& e);
EndAnalysis analyze_end(const SurfaceModel& M, const BaseFrames& B, int i, double r_lo = 1e2, double r_hi = 1e5,
                        int n_ang = 16, int n_rad = 24);
// Far-field patch of end i on the log-polar annulus r_lo < |mu_i z| < r_hi.
MeshPatch build_end_patch(const SurfaceModel& M, const BaseFrames& B, int i, double r_lo, double r_hi, int n_ang,
                          int n_rad, std::vector<Mat2C>* frames = nullptr, long gid_base = 0);

nlohmann::json diagnostics_json(const GeometryDiagnostics& d);
nlohmann::json end_json(const EndAnalysis& e);
std::string ends_csv(const std::vector<EndAnalysis>& ends);

} // namespace horoforge
