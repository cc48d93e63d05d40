#include "horoforge/lin_hyp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace horoforge {

double Mat2C::norm() const {
    return std::sqrt(std::norm(m11) + std::norm(m12) + std::norm(m21) + std::norm(m22));
}

double Mat2C::max_abs() const {
    return std::max({std::abs(m11), std::abs(m12), std::abs(m21), std::abs(m22)});
}

Mat2C Mat2C::inverse() const {
    const cplx d = det();
    if (std::abs(d) == 0.0) throw NumericalError("singular 2x2 matrix");
    return {m22 / d, -m12 / d, -m21 / d, m11 / d};
}

Mat2C& Mat2C::operator+=(const Mat2C& o) {
    m11 += o.m11; m12 += o.m12; m21 += o.m21; m22 += o.m22;
    return *this;
}

Mat2C& Mat2C::operator-=(const Mat2C& o) {
    m11 -= o.m11; m12 -= o.m12; m21 -= o.m21; m22 -= o.m22;
    return *this;
}

Mat2C& Mat2C::operator*=(cplx k) {
    m11 *= k; m12 *= k; m21 *= k; m22 *= k;
    return *this;
}

Mat2C operator+(Mat2C a, const Mat2C& b) { return a += b; }
Mat2C operator-(Mat2C a, const Mat2C& b) { return a -= b; }
Mat2C operator-(const Mat2C& a) { return {-a.m11, -a.m12, -a.m21, -a.m22}; }
Mat2C operator*(cplx k, Mat2C a) { return a *= k; }
Mat2C operator*(Mat2C a, cplx k) { return a *= k; }

Mat2C operator*(const Mat2C& a, const Mat2C& b) {
    return {a.m11 * b.m11 + a.m12 * b.m21, a.m11 * b.m12 + a.m12 * b.m22,
            a.m21 * b.m11 + a.m22 * b.m21, a.m21 * b.m12 + a.m22 * b.m22};
}

bool approx_equal(const Mat2C& a, const Mat2C& b, double tol) {
    return (a - b).max_abs() <= tol;
}

std::string to_string(const Mat2C& m) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "[[%.6g%+.6gi, %.6g%+.6gi], [%.6g%+.6gi, %.6g%+.6gi]]",
                  m.m11.real(), m.m11.imag(), m.m12.real(), m.m12.imag(),
                  m.m21.real(), m.m21.imag(), m.m22.real(), m.m22.imag());
    return buf;
}

Mat2C xi_mat(double s) {
    return Mat2C::diag(std::exp(s / 2), std::exp(-s / 2));
}

namespace {

// cosh(μ) and sinh(μ)/μ as functions of μ².
void cosh_sinhc(cplx mu2, cplx& ch, cplx& shc) {
    if (std::abs(mu2) < 1e-6) {
        ch = 1.0 + mu2 / 2.0 + mu2 * mu2 / 24.0 + mu2 * mu2 * mu2 / 720.0;
        shc = 1.0 + mu2 / 6.0 + mu2 * mu2 / 120.0 + mu2 * mu2 * mu2 / 5040.0;
        return;
    }
    const cplx mu = std::sqrt(mu2);
    ch = std::cosh(mu);
    shc = std::sinh(mu) / mu;
}

// atanh(x)/x as a function of x².
cplx atanhc(cplx x2) {
    if (std::abs(x2) < 1e-4) {
        return 1.0 + x2 / 3.0 + x2 * x2 / 5.0 + x2 * x2 * x2 / 7.0 + x2 * x2 * x2 * x2 / 9.0;
    }
    const cplx x = std::sqrt(x2);
    return std::atanh(x) / x;
}

// log(1 + w), accurate for small w.
cplx log1p_c(cplx w) {
    const double re = 0.5 * std::log1p(2.0 * w.real() + std::norm(w));
    const double im = std::atan2(w.imag(), 1.0 + w.real());
    return {re, im};
}

} // namespace

Mat2C exp_mat(const Mat2C& M) {
    const cplx half = M.trace() / 2.0;
    Mat2C N = M;
    N.m11 -= half;
    N.m22 -= half;
    cplx ch, shc;
    cosh_sinhc(-N.det(), ch, shc);
    Mat2C R = shc * N;
    R.m11 += ch;
    R.m22 += ch;
    return std::exp(half) * R;
}

Mat2C log_near_identity(const Mat2C& Y) {
    if (!(Y.norm() < 1.0)) throw DomainError("log outside principal neighborhood, |M - I| = " + std::to_string(Y.norm()));
    const cplx trY = Y.trace();
    const cplx sigma = 0.5 * log1p_c(trY + Y.det());
    Mat2C N = Y;
    N.m11 -= trY / 2.0;
    N.m22 -= trY / 2.0;
    const cplx m = 1.0 + trY / 2.0;
    const cplx nu2 = -N.det();
    Mat2C L = (atanhc(nu2 / (m * m)) / m) * N;
    L.m11 += sigma;
    L.m22 += sigma;
    return L;
}

Mat2C log_mat(const Mat2C& M) {
    return log_near_identity(M - Mat2C::identity());
}

Mat2C mat_pow(const Mat2C& M, cplx lambda) {
    return exp_mat(lambda * log_mat(M));
}

Mat2C HermitianPoint::to_matrix() const {
    return {cplx(x0 + x3), cplx(x1, x2), cplx(x1, -x2), cplx(x0 - x3)};
}

HermitianPoint HermitianPoint::from_matrix(const Mat2C& X) {
    HermitianPoint p;
    p.x0 = 0.5 * (X.m11.real() + X.m22.real());
    p.x3 = 0.5 * (X.m11.real() - X.m22.real());
    p.x1 = X.m12.real();
    p.x2 = X.m12.imag();
    return p;
}

HalfSpacePoint minkowski_to_half_space(const HermitianPoint& x) {
    const double d = x.x0 - x.x3;
    if (d <= 1e-8) throw DegenerateError("point at ideal boundary (x0 - x3 <= tol)");
    return {x.x1 / d, x.x2 / d, 1.0 / d};
}

HermitianPoint half_space_to_minkowski(const HalfSpacePoint& p) {
    if (!(p.x3 > 0)) throw DegenerateError("half-space point with x3 <= 0");
    const double r2 = p.x1 * p.x1 + p.x2 * p.x2 + p.x3 * p.x3;
    HermitianPoint x;
    x.x0 = (r2 + 1.0) / (2.0 * p.x3);
    x.x3 = (r2 - 1.0) / (2.0 * p.x3);
    x.x1 = p.x1 / p.x3;
    x.x2 = p.x2 / p.x3;
    return x;
}

HalfSpacePoint immerse(const Mat2C& F) {
    const double den = std::norm(F.m21) + std::norm(F.m22);
    if (den < 1e-300) throw NumericalError("immersion denominator vanishes");
    const cplx num = F.m11 * std::conj(F.m21) + F.m12 * std::conj(F.m22);
    return {num.real() / den, num.imag() / den, 1.0 / den};
}

void half_space_to_ball(const HalfSpacePoint& p, double out[3]) {
    const HermitianPoint x = half_space_to_minkowski(p);
    out[0] = x.x1 / (1.0 + x.x0);
    out[1] = x.x2 / (1.0 + x.x0);
    out[2] = x.x3 / (1.0 + x.x0);
}

double hyperbolic_distance(const HalfSpacePoint& a, const HalfSpacePoint& b) {
    const double dx = a.x1 - b.x1, dy = a.x2 - b.x2, dz = a.x3 - b.x3;
    const double e2 = dx * dx + dy * dy + dz * dz;
    // acosh(1 + u) with u small handled through log1p.
    const double u = e2 / (2.0 * a.x3 * b.x3);
    return std::log1p(u + std::sqrt(u * (u + 2.0)));
}

HermitianPoint act_isometry(const Mat2C& H, const HermitianPoint& x) {
    return HermitianPoint::from_matrix(H * x.to_matrix() * H.adjoint());
}

BoundaryPoint act_boundary(const Mat2C& H, const BoundaryPoint& z) {
    cplx num, den;
    if (z.infinite) {
        num = H.m11;
        den = H.m21;
    } else {
        num = H.m11 * z.z + H.m12;
        den = H.m21 * z.z + H.m22;
    }
    const double scale = z.infinite ? std::abs(H.m21) + std::abs(H.m11)
                                    : std::abs(H.m21 * z.z) + std::abs(H.m22);
    if (std::abs(den) <= 1e-13 * scale) return BoundaryPoint::at_infinity();
    return BoundaryPoint::finite(num / den);
}

double su2_algebra_defect(const Mat2C& L) {
    return std::abs(L.m11.real()) + std::abs(L.m12 + std::conj(L.m21));
}

double su2_defect(const Mat2C& M) {
    const Mat2C S = M.trace().real() < 0 ? -M : M;
    return su2_algebra_defect(log_mat(S));
}

double su2_defect_near_identity(const Mat2C& Y) {
    return su2_algebra_defect(log_near_identity(Y));
}

} // namespace horoforge
