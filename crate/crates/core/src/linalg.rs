//! Small fixed-size complex linear algebra used throughout the crate.
//!
//! Everything here is closed form: 2×2 spectral quantities, the 2×2 propagator,
//! Kronecker products onto the electron ⊗ nuclear space and a generic RK4 step.

use std::ops::{Add, Mul};

use crate::{Mat2, Mat4, Vec2, C64};

pub const I: C64 = C64::new(0.0, 1.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn sigma_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn sigma_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn sigma_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// `|1><1|` in the convention where the first basis vector carries label 1.
pub fn proj_first() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, ZERO)
}

/// `|0><0|`, the second basis vector.
pub fn proj_second() -> Mat2 {
    Mat2::new(ZERO, ZERO, ZERO, ONE)
}

/// Kronecker product `a ⊗ b` with `a` acting on the major index.
pub fn kron(a: &Mat2, b: &Mat2) -> Mat4 {
    Mat4::from_fn(|i, j| a[(i / 2, j / 2)] * b[(i % 2, j % 2)])
}

/// Frobenius norm of `a - a†`.
pub fn hermitian_residual2(a: &Mat2) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn hermitian_residual4(a: &Mat4) -> f64 {
    (a - a.adjoint()).norm()
}

pub fn hermitian_part2(a: &Mat2) -> Mat2 {
    (a + a.adjoint()) * r(0.5)
}

pub fn hermitian_part4(a: &Mat4) -> Mat4 {
    (a + a.adjoint()) * r(0.5)
}

/// Eigenvalues (ascending) of the Hermitian part of a 2×2 matrix.
pub fn hermitian_eigenvalues2(a: &Mat2) -> [f64; 2] {
    let h = hermitian_part2(a);
    let p = h[(0, 0)].re;
    let q = h[(1, 1)].re;
    let off = h[(0, 1)].norm();
    let mean = 0.5 * (p + q);
    let rad = (0.25 * (p - q) * (p - q) + off * off).sqrt();
    [mean - rad, mean + rad]
}

/// Largest singular value of a 2×2 matrix.
pub fn spectral_norm2(a: &Mat2) -> f64 {
    let f2 = a.norm_squared();
    let det = a.determinant().norm();
    let disc = (f2 * f2 - 4.0 * det * det).max(0.0);
    (0.5 * (f2 + disc.sqrt())).sqrt()
}

/// Positive square root of a positive semidefinite Hermitian 2×2 matrix.
///
/// Uses `sqrt(A) = (A + sqrt(det A) I) / sqrt(tr A + 2 sqrt(det A))`.
/// Returns `None` if `a` is not positive semidefinite.
pub fn sqrt_psd2(a: &Mat2) -> Option<Mat2> {
    let h = hermitian_part2(a);
    let [lo, _] = hermitian_eigenvalues2(&h);
    if lo < -1e-14 * h.norm().max(1.0) {
        return None;
    }
    let det = h.determinant().re.max(0.0);
    let s = det.sqrt();
    let t = h.trace().re + 2.0 * s;
    if t <= 0.0 {
        return Some(Mat2::zeros());
    }
    Some((h + Mat2::identity() * r(s)) * r(1.0 / t.sqrt()))
}

/// Exact propagator `exp(-i H t)` of a constant 2×2 matrix.
///
/// Writing `H = c I + K` with `K` traceless, `K² = w² I` and
/// `exp(-iKt) = cos(wt) I - i t sinc(wt) K`; the sinc form stays finite at
/// exceptional points where `w = 0`.
pub fn propagator2(h: &Mat2, t: f64) -> Mat2 {
    let center = h.trace() * 0.5;
    let k = h - Mat2::identity() * center;
    let w2 = -k.determinant();
    let w = w2.sqrt();
    let wt = w * t;
    let (cos, sinc_t) = if wt.norm() < 1e-4 {
        let x2 = wt * wt;
        (
            ONE - x2 * 0.5 + x2 * x2 / 24.0,
            (ONE - x2 / 6.0 + x2 * x2 / 120.0) * t,
        )
    } else {
        (wt.cos(), wt.sin() / w)
    };
    let phase = (-I * center * t).exp();
    (Mat2::identity() * cos - k * (I * sinc_t)) * phase
}

/// Multiply the vector by a unit phase so its largest-magnitude component is real positive.
pub fn fix_phase_largest(v: &Vec2) -> Vec2 {
    let idx = if v[0].norm() >= v[1].norm() { 0 } else { 1 };
    let a = v[idx];
    if a.norm() == 0.0 {
        return *v;
    }
    v * (a.conj() / a.norm())
}

/// Multiply the vector by a unit phase so its first component is real non-negative.
/// Vectors whose first component vanishes are returned unchanged.
pub fn fix_phase_first(v: &Vec2) -> Vec2 {
    let a = v[0];
    if a.norm() < 1e-300 {
        return *v;
    }
    v * (a.conj() / a.norm())
}

/// Left partner of `psi` given the other band's right eigenvector.
///
/// For a nondegenerate 2×2 matrix the left eigenvector of one band is the
/// vector orthogonal to the right eigenvector of the other band.
pub fn left_partner(psi: &Vec2, psi_other: &Vec2) -> Vec2 {
    let w = Vec2::new(-psi_other[1].conj(), psi_other[0].conj());
    let s = w.dotc(psi);
    w / s.conj()
}

/// `|<a|b>|²` for unit vectors.
pub fn overlap_sq2(a: &Vec2, b: &Vec2) -> f64 {
    a.dotc(b).norm_sqr()
}

/// Trace distance `½‖ρ − σ‖₁` between two Hermitian 2×2 matrices.
pub fn trace_distance2(rho: &Mat2, sigma: &Mat2) -> f64 {
    let [a, b] = hermitian_eigenvalues2(&(rho - sigma));
    0.5 * (a.abs() + b.abs())
}

pub fn projector2(v: &Vec2) -> Mat2 {
    v * v.adjoint()
}

/// Bloch vector `(<σx>, <σy>, <σz>)` of a 2×2 density matrix (not renormalized).
pub fn bloch_vector(rho: &Mat2) -> [f64; 3] {
    [
        (rho * sigma_x()).trace().re,
        (rho * sigma_y()).trace().re,
        (rho * sigma_z()).trace().re,
    ]
}

/// One classical fourth-order Runge–Kutta step for `y' = f(t, y)`.
pub fn rk4_step<S, F>(y: &S, t: f64, h: f64, f: F) -> S
where
    S: Clone + Add<Output = S> + Mul<C64, Output = S>,
    F: Fn(f64, &S) -> S,
{
    let k1 = f(t, y);
    let k2 = f(t + 0.5 * h, &(y.clone() + k1.clone() * r(0.5 * h)));
    let k3 = f(t + 0.5 * h, &(y.clone() + k2.clone() * r(0.5 * h)));
    let k4 = f(t + h, &(y.clone() + k3.clone() * r(h)));
    y.clone() + (k1 + k2 * r(2.0) + k3 * r(2.0) + k4) * r(h / 6.0)
}

/// RK4 step whose stage times are supplied as pre-evaluated generators
/// `(f(t), f(t + h/2), f(t + h))` for a linear ODE `y' = G(t) y`.
pub fn rk4_linear_step<S, G>(y: &S, h: f64, g0: &G, g_mid: &G, g1: &G) -> S
where
    S: Clone + Add<Output = S> + Mul<C64, Output = S>,
    for<'a> &'a G: Mul<&'a S, Output = S>,
{
    let k1 = g0 * y;
    let y2 = y.clone() + k1.clone() * r(0.5 * h);
    let k2 = g_mid * &y2;
    let y3 = y.clone() + k2.clone() * r(0.5 * h);
    let k3 = g_mid * &y3;
    let y4 = y.clone() + k3.clone() * r(h);
    let k4 = g1 * &y4;
    y.clone() + (k1 + k2 * r(2.0) + k3 * r(2.0) + k4) * r(h / 6.0)
}

/// Wrap an angle into `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::{PI, TAU};
    let mut y = x.rem_euclid(TAU);
    if y > PI {
        y -= TAU;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn kron_ordering_is_major_first() {
        let k = kron(&sigma_z(), &identity2());
        assert_eq!(k[(0, 0)], ONE);
        assert_eq!(k[(1, 1)], ONE);
        assert_eq!(k[(2, 2)], -ONE);
        let k = kron(&identity2(), &sigma_z());
        assert_eq!(k[(1, 1)], -ONE);
        assert_eq!(k[(2, 2)], ONE);
    }

    #[test]
    fn propagator_matches_rabi_flop() {
        let u = propagator2(&sigma_x(), PI / 2.0);
        let v = u * Vec2::new(ONE, ZERO);
        assert!(v[0].norm() < 1e-14);
        assert!((v[1].norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn propagator_at_exceptional_point_is_finite() {
        // Nilpotent: exp(-iNt) = I - iNt.
        let n = Mat2::new(ZERO, ONE, ZERO, ZERO);
        let u = propagator2(&n, 2.0);
        assert!((u[(0, 1)] - c(0.0, -2.0)).norm() < 1e-12);
        assert!((u[(0, 0)] - ONE).norm() < 1e-12);
    }

    #[test]
    fn propagator_composes() {
        let h = Mat2::new(c(0.3, 0.1), c(-0.2, 0.5), c(0.7, -0.4), c(-0.1, 0.2));
        let a = propagator2(&h, 0.7) * propagator2(&h, 1.1);
        let b = propagator2(&h, 1.8);
        assert!((a - b).norm() < 1e-12);
    }

    #[test]
    fn psd_sqrt_squares_back() {
        let a = Mat2::new(r(2.0), c(0.3, -0.4), c(0.3, 0.4), r(1.0));
        let s = sqrt_psd2(&a).unwrap();
        assert!((s * s - a).norm() < 1e-13);
        assert!(hermitian_residual2(&s) < 1e-14);
        assert!(hermitian_eigenvalues2(&s)[0] > 0.0);
        assert!(sqrt_psd2(&(Mat2::identity() * r(-1.0))).is_none());
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = Mat2::new(r(3.0), ZERO, ZERO, c(0.0, -4.0));
        assert!((spectral_norm2(&a) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert_eq!(wrap_angle(0.25), 0.25);
    }
}
