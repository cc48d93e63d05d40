#pragma once

#include <complex>
#include <string>

#include "horoforge/errors.hpp"

namespace horoforge {

using cplx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double tol_det = 1e-9;
inline constexpr double tol_general = 1e-8;

struct Mat2C {
    cplx m11{1.0}, m12{0.0}, m21{0.0}, m22{1.0};

    static Mat2C identity() { return {}; }
    static Mat2C zero() { return {0.0, 0.0, 0.0, 0.0}; }
    static Mat2C diag(cplx a, cplx d) { return {a, 0.0, 0.0, d}; }

    cplx det() const { return m11 * m22 - m12 * m21; }
    cplx trace() const { return m11 + m22; }
    // Frobenius norm.
    double norm() const;
    double max_abs() const;
    Mat2C adjoint() const { return {std::conj(m11), std::conj(m21), std::conj(m12), std::conj(m22)}; }
    // Adjugate; equals the inverse when det = 1.
    Mat2C adjugate() const { return {m22, -m12, -m21, m11}; }
    Mat2C inverse() const;

    Mat2C& operator+=(const Mat2C& o);
    Mat2C& operator-=(const Mat2C& o);
    Mat2C& operator*=(cplx k);
};

Mat2C operator+(Mat2C a, const Mat2C& b);
Mat2C operator-(Mat2C a, const Mat2C& b);
Mat2C operator-(const Mat2C& a);
Mat2C operator*(const Mat2C& a, const Mat2C& b);
Mat2C operator*(cplx k, Mat2C a);
Mat2C operator*(Mat2C a, cplx k);
bool approx_equal(const Mat2C& a, const Mat2C& b, double tol);
std::string to_string(const Mat2C& m);

// Ξ(s) = diag(e^{s/2}, e^{-s/2}).
Mat2C xi_mat(double s);

Mat2C exp_mat(const Mat2C& M);
// log(I + Y), accurate when Y is tiny. Requires ‖Y‖ < 1.
Mat2C log_near_identity(const Mat2C& Y);
Mat2C log_mat(const Mat2C& M);
Mat2C mat_pow(const Mat2C& M, cplx lambda);

struct HermitianPoint {
    double x0 = 1, x1 = 0, x2 = 0, x3 = 0;
    double minkowski_norm() const { return -x0 * x0 + x1 * x1 + x2 * x2 + x3 * x3; }
    Mat2C to_matrix() const;
    static HermitianPoint from_matrix(const Mat2C& X);
};

struct HalfSpacePoint {
    double x1 = 0, x2 = 0, x3 = 1;
};

HalfSpacePoint minkowski_to_half_space(const HermitianPoint& x);
HermitianPoint half_space_to_minkowski(const HalfSpacePoint& p);
HalfSpacePoint immerse(const Mat2C& F);
// Poincaré ball image of a half-space point.
void half_space_to_ball(const HalfSpacePoint& p, double out[3]);
double hyperbolic_distance(const HalfSpacePoint& a, const HalfSpacePoint& b);

struct BoundaryPoint {
    bool infinite = false;
    cplx z{0.0};
    static BoundaryPoint at_infinity() { return {true, 0.0}; }
    static BoundaryPoint finite(cplx w) { return {false, w}; }
};

HermitianPoint act_isometry(const Mat2C& H, const HermitianPoint& x);
BoundaryPoint act_boundary(const Mat2C& H, const BoundaryPoint& z);

// |Re L11| + |L12 + conj L21| for L = log(±M); sign chosen with Re tr ≥ 0.
double su2_defect(const Mat2C& M);
// Same quantity for I + Y, computed without forming I + Y.
double su2_defect_near_identity(const Mat2C& Y);
// Defect of a Lie-algebra element from su(2).
double su2_algebra_defect(const Mat2C& L);

} // namespace horoforge
