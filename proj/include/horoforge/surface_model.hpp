#pragma once

#include <vector>

#include "json.hpp"

#include "horoforge/lin_hyp.hpp"
#include "horoforge/packing.hpp"

namespace horoforge {

inline constexpr double r_min = 1e-3;
// Minimum center distance between node disks (and the base point) in a plane chart.
inline constexpr double node_separation = 3.0;

struct ChartId {
    enum class Kind { Plane, Neck };
    Kind kind = Kind::Plane;
    int index = 0; // horosphere index, or pair index for necks

    static ChartId plane(int i) { return {Kind::Plane, i}; }
    static ChartId neck(int k) { return {Kind::Neck, k}; }
    bool is_plane() const { return kind == Kind::Plane; }
    bool operator==(const ChartId& o) const { return kind == o.kind && index == o.index; }
};

// Node of pair k seen from one of its two planes: side 0 is the first
// horosphere of the pair, side 1 the second.
struct NodeRef {
    int pair = 0;
    int side = 0;
};

struct PairData {
    int i = 0, j = 0;
    cplx p0_ij{0.0}, p0_ji{0.0};
    cplx b{1.0};
    cplx q_ij{0.0}, q_ji{0.0};
    // Extra turns added to arg(a) when fixing the branch of log t.
    int arg_turns = 0;
};

struct SurfaceModel {
    std::vector<Horosphere> original;
    // Isometry taking the original packing to the model frame.
    Mat2C Hg;
    std::vector<Horosphere> spheres;
    std::vector<cplx> c;
    std::vector<cplx> lambda;
    std::vector<double> xi;
    // f_i(z) = K_i (mu_i z + nu_i, 1) parametrizes horosphere i.
    std::vector<Mat2C> K;
    std::vector<cplx> mu, nu;
    std::vector<PairData> pairs;
    std::vector<std::vector<NodeRef>> nodes;
    double tau = 0.0;

    int n() const { return static_cast<int>(c.size()); }
    int m() const { return static_cast<int>(pairs.size()); }
    double s() const;
    double b0(int k) const { return 0.5 * (xi[pairs[k].i] + xi[pairs[k].j]); }
    cplx a(int k) const;
    cplx t_ij(int k) const;
    cplx t_ji(int k) const;
    cplx log_t_ij(int k) const;
    cplx log_t_ji(int k) const;
    cplx p_ij(int k) const;
    cplx p_ji(int k) const;
    int plane_of(const NodeRef& r) const { return r.side == 0 ? pairs[r.pair].i : pairs[r.pair].j; }
    cplx node_pos(const NodeRef& r) const { return r.side == 0 ? p_ij(r.pair) : p_ji(r.pair); }
    std::vector<cplx> a_vector() const;
    // A_i = lambda_i [[c, -c^2], [1, -c]], the field at a = 0.
    Mat2C A_plane0(int i) const;
    // F_i(0), the unperturbed frame at the base point of plane i.
    Mat2C F_base(int i) const;
    // M_i(s) = F_i(0) Xi(xi_i s).
    Mat2C M_base(int i, double s) const;
    // Horosphere-intrinsic point f_i(z) at a = 0.
    Mat2C F_plane0(int i, cplx z) const;
    void set_tau(double t);
};

double s_of_tau(double tau);
double tau_of_t(double t);
double t_of_tau(double tau);

SurfaceModel from_packing(const Packing& P, const std::vector<double>& xi, double tau);

// Gauss map at t = 0; infinite at the neck pole z = 1.
BoundaryPoint gauss_map_G0(const SurfaceModel& M, const ChartId& chart, cplx z);
// First-order Gauss map.
cplx gauss_map(const SurfaceModel& M, const ChartId& chart, cplx z);
cplx omega_first_order(const SurfaceModel& M, const ChartId& chart, cplx z);
// Variants with an explicit vector of node parameters a_k.
cplx gauss_map_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z);
cplx omega_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z);

Mat2C connection_A(const SurfaceModel& M, const ChartId& chart, cplx z);
Mat2C connection_A_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z);
// A - A_i on Plane(i) without cancellation; A itself on necks.
Mat2C connection_A_delta(const SurfaceModel& M, const ChartId& chart, cplx z);
Mat2C connection_A_delta_a(const SurfaceModel& M, const std::vector<cplx>& a, const ChartId& chart, cplx z);
// dA/da_k at a = 0 on a plane chart.
Mat2C connection_A_derivative(const SurfaceModel& M, int k, const ChartId& chart, cplx z);

struct PairFrame {
    int pair = 0;
    cplx rho{1.0};
    Mat2C H, Hinv;
    cplx lam_i_hat{0.0}, lam_j_hat{0.0};
    Mat2C Ai_hat, Aj_hat;

    Mat2C conj(const Mat2C& X) const { return H * X * Hinv; }
};

PairFrame pair_frame(const SurfaceModel& M, int k);
// Closed form in the pair frame; equals H A H^{-1}.
Mat2C connection_A_hat(const PairFrame& F, const SurfaceModel& M, const ChartId& chart, cplx z);
// Pair-frame field minus the constant nilpotent part of the chart (zero on necks).
Mat2C connection_A_hat_delta(const PairFrame& F, const SurfaceModel& M, const ChartId& chart, cplx z);
std::pair<Mat2C, Mat2C> m_hat_matrices(const PairFrame& F, const SurfaceModel& M, double s);

// Fast evaluator of a plane-chart field, optionally conjugated by a fixed H.
class PlaneField {
public:
    PlaneField(const SurfaceModel& M, int plane, const std::vector<cplx>& a, const Mat2C& H = Mat2C::identity());
    // H (A - A_i) H^{-1}.
    Mat2C delta(cplx z) const;
    // H A H^{-1}.
    Mat2C full(cplx z) const { return delta(z) + base_; }
    // H A_i H^{-1}, nilpotent.
    const Mat2C& base() const { return base_; }

private:
    struct Node {
        cplx pos, cg, cw;
    };
    std::vector<Node> nodes_;
    cplx ci_, li_;
    Mat2C H_, Hinv_, base_;
};

// Neck-chart field conjugated by H.
class NeckField {
public:
    NeckField(const SurfaceModel& M, int k, const std::vector<cplx>& a, const Mat2C& H = Mat2C::identity());
    Mat2C operator()(cplx z) const;

private:
    cplx a_, ci_, cj_;
    Mat2C H_, Hinv_;
};

nlohmann::json cplx_json(cplx z);
cplx json_cplx(const nlohmann::json& j);
nlohmann::json mat_json(const Mat2C& m);
Mat2C json_mat(const nlohmann::json& j);
nlohmann::json model_to_json(const SurfaceModel& M);
SurfaceModel model_from_json(const nlohmann::json& j);

} // namespace horoforge
