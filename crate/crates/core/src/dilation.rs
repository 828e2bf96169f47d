//! Dilation of a 2×2 non-Hermitian Hamiltonian into a Hermitian two-qubit
//! Hamiltonian, and its translation into two-tone microwave pulse parameters.
//!
//! The system lives on the electron (major tensor factor) and the ancilla on
//! the nucleus. With the metric `M(t)` solving `i dM/dt = H†M − MH` and
//! `η = √(M − I)`, the state `|ψ⟩|−⟩ + η|ψ⟩|+⟩` evolves unitarily under
//! `H_sa = Γ ⊗ I + Λ ⊗ σ_z` whenever `ψ` follows `i dψ/dt = H ψ`.

use std::f64::consts::{FRAC_PI_2, PI};

use serde::Serialize;

use crate::linalg::{
    c, hermitian_eigenvalues2, hermitian_part2, hermitian_residual2, identity2, kron, r, sigma_x,
    sigma_y, sigma_z, sqrt_psd2, I, ONE, ZERO,
};
use crate::nvsim::NvParams;
use crate::spectra::eigensolve2;
use crate::{Error, Mat2, Mat4, Result, Vec2, Vec4};

/// Default positivity margin `δ` on `M − I`.
pub const DEFAULT_MARGIN: f64 = 0.1;

/// Default rate scale `λ = 2π × 0.085` rad/µs.
pub const DEFAULT_LAMBDA: f64 = 2.0 * PI * 0.085;

/// Largest `η₀` tried by [`choose_eta0`].
pub const ETA0_CAP: f64 = 1e3;

const SUBSTEP_BOUND: f64 = 0.005;

/// Relative headroom added to the bisected `η₀`.
pub const ETA0_HEADROOM: f64 = 1e-6;

/// Shift `H` by `−iκ` with `κ` the largest imaginary part of its spectrum.
///
/// This leaves normalized dynamics unchanged but makes the dominant band
/// neutral, so the metric never has to shrink and a small `η₀` suffices.
pub fn neutralize_gain(h: &Mat2) -> (Mat2, f64) {
    let e = eigensolve2(h);
    let kappa = e.values[0].im.max(e.values[1].im);
    (h - identity2() * c(0.0, kappa), kappa)
}

/// `dM/dt = −i (H†M − MH)`.
pub fn metric_rate(h: &Mat2, m: &Mat2) -> Mat2 {
    (h.adjoint() * m - m * h) * (-I)
}

/// `min eig(M − I)`.
pub fn metric_margin(m: &Mat2) -> f64 {
    hermitian_eigenvalues2(m)[0] - 1.0
}

/// Integrate the metric equation on `t_grid` from `M(t₀) = m0`.
///
/// Each grid interval is split into RK4 substeps with `dt·‖H‖ ≤ 0.005`; the
/// result is re-symmetrized after every substep and the positivity margin is
/// checked at every grid point.
pub fn solve_m<F>(h: F, m0: &Mat2, t_grid: &[f64], margin: f64) -> Result<Vec<Mat2>>
where
    F: Fn(f64) -> Mat2,
{
    if hermitian_residual2(m0) > 1e-12 {
        return Err(Error::InvalidInput(
            "initial metric is not Hermitian".into(),
        ));
    }
    let mut m = *m0;
    let mut out = Vec::with_capacity(t_grid.len());
    let Some(&t0) = t_grid.first() else {
        return Ok(out);
    };
    let check = |m: &Mat2, t: f64| -> Result<()> {
        let min_eig = metric_margin(m);
        if min_eig < margin {
            return Err(Error::DilationInfeasible { t, min_eig });
        }
        Ok(())
    };
    check(&m, t0)?;
    out.push(m);
    for w in t_grid.windows(2) {
        let (ta, tb) = (w[0], w[1]);
        let span = tb - ta;
        let norm = crate::linalg::spectral_norm2(&h(ta)).max(crate::linalg::spectral_norm2(&h(tb)));
        let subs = ((span * norm / SUBSTEP_BOUND).ceil() as usize).max(1);
        let dt = span / subs as f64;
        for j in 0..subs {
            let t = ta + j as f64 * dt;
            m = crate::linalg::rk4_step(&m, t, dt, |s, y: &Mat2| metric_rate(&h(s), y));
            m = hermitian_part2(&m);
        }
        check(&m, tb)?;
        out.push(m);
    }
    Ok(out)
}

/// `η = √(M − I)`, the Hermitian positive square root.
pub fn eta_from_metric(m: &Mat2) -> Result<Mat2> {
    sqrt_psd2(&(m - identity2())).ok_or_else(|| {
        Error::NumericalConsistency(format!(
            "M − I not positive (min eig {:.3e})",
            metric_margin(m)
        ))
    })
}

/// Solve the Sylvester equation `η X + X η = Ṁ` for Hermitian positive `η`.
///
/// This is the exact derivative of `η = √(M − I)` given `Ṁ`.
pub fn sqrt_derivative(eta: &Mat2, m_dot: &Mat2) -> Result<Mat2> {
    let id = identity2();
    let op = kron(&id, eta) + kron(&eta.transpose(), &id);
    let rhs = Vec4::new(m_dot[(0, 0)], m_dot[(1, 0)], m_dot[(0, 1)], m_dot[(1, 1)]);
    let x = op.lu().solve(&rhs).ok_or_else(|| {
        Error::NumericalConsistency("singular Sylvester operator for dη/dt".into())
    })?;
    Ok(Mat2::new(x[0], x[2], x[1], x[3]))
}

/// Central finite differences of a matrix series (one-sided at the ends).
pub fn finite_difference(values: &[Mat2], t_grid: &[f64]) -> Vec<Mat2> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1.min(n - 1)),
                _ if i + 1 == n => (i - 1, i),
                _ => (i - 1, i + 1),
            };
            if a == b {
                Mat2::zeros()
            } else {
                (values[b] - values[a]) / r(t_grid[b] - t_grid[a])
            }
        })
        .collect()
}

/// Hermiticity residuals of `(Λ, Γ)` before symmetrization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Generators {
    pub lambda: Mat2,
    pub gamma: Mat2,
    pub residual: f64,
}

/// `Γ = {H + [i η̇ + η H] η} M⁻¹` and `Λ = i [H η − η H − i η̇] M⁻¹` with `M = η†η + I`.
pub fn dilated_generators(h: &Mat2, eta: &Mat2, eta_dot: &Mat2) -> Result<Generators> {
    let m = eta.adjoint() * eta + identity2();
    let m_inv = m
        .try_inverse()
        .ok_or_else(|| Error::NumericalConsistency("metric not invertible".into()))?;
    let gamma = (h + (eta_dot * I + eta * h) * eta) * m_inv;
    let lambda = (h * eta - eta * h - eta_dot * I) * m_inv * I;
    let scale = 1.0 + h.norm() + eta_dot.norm();
    let residual = hermitian_residual2(&gamma).max(hermitian_residual2(&lambda)) / scale;
    if residual > 1e-6 {
        return Err(Error::NumericalConsistency(format!(
            "dilated generators not Hermitian (residual {residual:.3e}); η and M out of sync"
        )));
    }
    Ok(Generators {
        lambda: hermitian_part2(&lambda),
        gamma: hermitian_part2(&gamma),
        residual,
    })
}

/// `H_sa = Γ ⊗ I + Λ ⊗ σ_z`.
pub fn dilated_hamiltonian(lambda: &Mat2, gamma: &Mat2) -> Mat4 {
    kron(gamma, &identity2()) + kron(lambda, &sigma_z())
}

/// Real coefficients of `H_sa` in the basis `{I, σx, σy, σz} ⊗ {I, σz}`.
///
/// `A₁ σx⊗I + A₂ I⊗σz + A₃ σy⊗σz + A₄ σz⊗σz + B₁ I⊗I + B₂ σy⊗I + B₃ σz⊗I + B₄ σx⊗σz`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct PauliCoeffs {
    pub a: [f64; 4],
    pub b: [f64; 4],
}

fn basis() -> [(Mat4, bool, usize); 8] {
    let (id, sx, sy, sz) = (identity2(), sigma_x(), sigma_y(), sigma_z());
    [
        (kron(&sx, &id), true, 0),
        (kron(&id, &sz), true, 1),
        (kron(&sy, &sz), true, 2),
        (kron(&sz, &sz), true, 3),
        (kron(&id, &id), false, 0),
        (kron(&sy, &id), false, 1),
        (kron(&sz, &id), false, 2),
        (kron(&sx, &sz), false, 3),
    ]
}

impl PauliCoeffs {
    pub fn recompose(&self) -> Mat4 {
        basis().iter().fold(Mat4::zeros(), |acc, (p, is_a, i)| {
            let v = if *is_a { self.a[*i] } else { self.b[*i] };
            acc + p * r(v)
        })
    }
}

/// Project a 4×4 Hermitian matrix onto the eight-element basis.
pub fn pauli_decompose(h: &Mat4) -> Result<PauliCoeffs> {
    let mut out = PauliCoeffs::default();
    for (p, is_a, i) in basis() {
        let v = (p * h).trace().re / 4.0;
        if is_a {
            out.a[i] = v;
        } else {
            out.b[i] = v;
        }
    }
    let residual = (out.recompose() - h).norm();
    if residual > 1e-8 * (1.0 + h.norm()) {
        return Err(Error::NotDecomposable(residual));
    }
    Ok(out)
}

/// Two-tone drive parameters on a time grid.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PulseSchedule {
    /// µs.
    pub t: Vec<f64>,
    /// Rabi amplitudes in MHz.
    pub amplitude: [Vec<f64>; 2],
    /// Phases in `(−π, π]`.
    pub phase: [Vec<f64>; 2],
    /// Drive angular frequencies in rad/µs.
    pub frequency: [Vec<f64>; 2],
}

impl PulseSchedule {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

fn amplitude_phase(x: f64, y: f64) -> (f64, f64) {
    let amp = x.hypot(y) / PI;
    if amp <= 1e-14 {
        (0.0, 0.0)
    } else {
        (amp, crate::linalg::wrap_angle(y.atan2(x)))
    }
}

/// Closed-form amplitudes, phases and frequencies of the two tones at one point.
///
/// `transitions` are the bare electron transition frequencies `(ω̃₁, ω̃₂)` in
/// the `m_I = 1` and `m_I = 0` subspaces.
pub fn pulse_point(k: &PauliCoeffs, transitions: (f64, f64)) -> [(f64, f64, f64); 2] {
    let [a1, _a2, a3, a4] = k.a;
    let [_b1, b2, b3, b4] = k.b;
    let (amp1, ph1) = amplitude_phase(a1 + b4, -b2 - a3);
    let (amp2, ph2) = amplitude_phase(a1 - b4, a3 - b2);
    [
        (amp1, ph1, transitions.0 + 2.0 * b3 + 2.0 * a4),
        (amp2, ph2, transitions.1 + 2.0 * b3 - 2.0 * a4),
    ]
}

/// Pulse parameters for every point of a coefficient series.
pub fn pulse_schedule(t: &[f64], coeffs: &[PauliCoeffs], nv: &NvParams) -> PulseSchedule {
    let transitions = nv.transition_frequencies();
    let mut s = PulseSchedule {
        t: t.to_vec(),
        ..Default::default()
    };
    for k in coeffs {
        let p = pulse_point(k, transitions);
        for i in 0..2 {
            s.amplitude[i].push(p[i].0);
            s.phase[i].push(p[i].1);
            s.frequency[i].push(p[i].2);
        }
    }
    s
}

/// Ancilla states `|−⟩ = (|1⟩ − i|0⟩)/√2` and `|+⟩ = (|0⟩ − i|1⟩)/√2` in the
/// `(|1⟩ₙ, |0⟩ₙ)` basis; with this phase choice `σ_z|−⟩ = i|+⟩`.
pub fn ancilla_minus() -> Vec2 {
    Vec2::new(ONE, -I) / r(2f64.sqrt())
}

pub fn ancilla_plus() -> Vec2 {
    Vec2::new(-I, ONE) / r(2f64.sqrt())
}

/// Embed a system state as `|ψ⟩|−⟩ + η|ψ⟩|+⟩` (not normalized).
pub fn embed(psi: &Vec2, eta: &Mat2) -> Vec4 {
    let eta_psi = eta * psi;
    let (minus, plus) = (ancilla_minus(), ancilla_plus());
    Vec4::from_fn(|i, _| psi[i / 2] * minus[i % 2] + eta_psi[i / 2] * plus[i % 2])
}

/// System component `(I ⊗ ⟨−|) Ψ`.
pub fn project_minus(state: &Vec4) -> Vec2 {
    let minus = ancilla_minus();
    Vec2::from_fn(|s, _| minus[0].conj() * state[2 * s] + minus[1].conj() * state[2 * s + 1])
}

/// RF phase and dilated initial state for `η(0) = η₀ I`.
///
/// The nuclear part `(|−⟩ + η₀|+⟩)/√(1 + η₀²)` is reached from `|1⟩ₙ` by a
/// π/2 rotation about the axis `cos φ σx + sin φ σy` with
/// `φ = atan[(η₀² − 1)/2η₀] + π/2`.
pub fn prepare_initial(eta0: f64) -> Result<(f64, Vec4)> {
    if !(eta0 > 0.0 && eta0.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "eta0 must be positive, got {eta0}"
        )));
    }
    let phi = ((eta0 * eta0 - 1.0) / (2.0 * eta0)).atan() + FRAC_PI_2;
    let psi = Vec2::new(ONE, ZERO);
    let state = embed(&psi, &(identity2() * r(eta0))) / r((1.0 + eta0 * eta0).sqrt());
    Ok((phi, state))
}

/// Smallest `η₀` keeping `min eig(M − I) ≥ margin` on `t_grid`, by doubling
/// from `√margin` and then bisecting.
pub fn choose_eta0<F>(h: F, t_grid: &[f64], margin: f64) -> Result<f64>
where
    F: Fn(f64) -> Mat2 + Copy,
{
    if !(margin > 0.0) || t_grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidInput(
            "margin must be positive and the grid finite".into(),
        ));
    }
    let feasible = |eta0: f64| {
        let m0 = identity2() * r(eta0 * eta0 + 1.0);
        solve_m(h, &m0, t_grid, margin).is_ok()
    };
    let mut lo = margin.sqrt();
    let mut hi = lo * (1.0 + 1e-9);
    if feasible(hi) {
        return Ok(hi);
    }
    loop {
        lo = hi;
        hi *= 2.0;
        if hi > ETA0_CAP {
            if feasible(ETA0_CAP) {
                hi = ETA0_CAP;
                break;
            }
            return Err(Error::Eta0NotFound { cap: ETA0_CAP });
        }
        if feasible(hi) {
            break;
        }
    }
    while hi - lo > 1e-9 * hi {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // Headroom so the same η₀ stays feasible when the grid is refined.
    Ok(hi * (1.0 + ETA0_HEADROOM))
}

/// Residual diagnostics of a compiled schedule.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Residuals {
    /// `max ‖M − M†‖`.
    pub metric_hermiticity: f64,
    /// `min eig(M − I)` over the grid.
    pub min_margin: f64,
    /// `max ‖η†η + I − M‖ / ‖M‖`.
    pub eta_reconstruction: f64,
    /// Largest relative anti-Hermitian part of `Λ`, `Γ` before symmetrization.
    pub generator_hermiticity: f64,
    /// `max ‖Σ coeff · basis − H_sa‖`.
    pub recomposition: f64,
}

/// Everything produced by compiling one non-Hermitian schedule.
#[derive(Debug, Clone)]
pub struct DilationSchedule {
    /// µs, uniform with an odd number of points.
    pub t: Vec<f64>,
    pub m: Vec<Mat2>,
    pub eta: Vec<Mat2>,
    pub eta_dot: Vec<Mat2>,
    pub lambda: Vec<Mat2>,
    pub gamma: Vec<Mat2>,
    pub coeffs: Vec<PauliCoeffs>,
    pub eta0: f64,
    pub margin: f64,
    pub residuals: Residuals,
}

impl DilationSchedule {
    pub fn dilated(&self, i: usize) -> Mat4 {
        dilated_hamiltonian(&self.lambda[i], &self.gamma[i])
    }

    pub fn duration(&self) -> f64 {
        *self.t.last().unwrap_or(&0.0)
    }
}

/// Options for [`compile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompileOptions {
    /// Number of grid intervals (rounded up to an even number).
    pub intervals: usize,
    pub margin: f64,
    /// Fixed `η₀`; chosen by [`choose_eta0`] when `None`.
    pub eta0: Option<f64>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            intervals: 2000,
            margin: DEFAULT_MARGIN,
            eta0: None,
        }
    }
}

/// Compile `H(t)` on `[0, T]` into a dilation schedule.
pub fn compile<F>(h: F, duration: f64, opts: &CompileOptions) -> Result<DilationSchedule>
where
    F: Fn(f64) -> Mat2 + Copy,
{
    if !(duration > 0.0) || opts.intervals == 0 {
        return Err(Error::InvalidInput(
            "duration and interval count must be positive".into(),
        ));
    }
    let n = opts.intervals + opts.intervals % 2;
    let t: Vec<f64> = (0..=n).map(|i| duration * i as f64 / n as f64).collect();
    let eta0 = match opts.eta0 {
        Some(e) => e,
        None => choose_eta0(h, &t, opts.margin)?,
    };
    let m0 = identity2() * r(eta0 * eta0 + 1.0);
    let m = solve_m(h, &m0, &t, opts.margin)?;

    let mut res = Residuals {
        min_margin: f64::INFINITY,
        ..Default::default()
    };
    let mut eta = Vec::with_capacity(t.len());
    let mut eta_dot = Vec::with_capacity(t.len());
    let mut lambda = Vec::with_capacity(t.len());
    let mut gamma = Vec::with_capacity(t.len());
    let mut coeffs = Vec::with_capacity(t.len());
    for (i, mi) in m.iter().enumerate() {
        let hi = h(t[i]);
        let e = eta_from_metric(mi)?;
        let ed = sqrt_derivative(&e, &metric_rate(&hi, mi))?;
        let g = dilated_generators(&hi, &e, &ed)?;
        let hsa = dilated_hamiltonian(&g.lambda, &g.gamma);
        let k = pauli_decompose(&hsa)?;

        res.metric_hermiticity = res.metric_hermiticity.max(hermitian_residual2(mi));
        res.min_margin = res.min_margin.min(metric_margin(mi));
        res.eta_reconstruction = res
            .eta_reconstruction
            .max((e.adjoint() * e + identity2() - mi).norm() / mi.norm());
        res.generator_hermiticity = res.generator_hermiticity.max(g.residual);
        res.recomposition = res.recomposition.max((k.recompose() - hsa).norm());

        eta.push(e);
        eta_dot.push(ed);
        lambda.push(g.lambda);
        gamma.push(g.gamma);
        coeffs.push(k);
    }
    Ok(DilationSchedule {
        t,
        m,
        eta,
        eta_dot,
        lambda,
        gamma,
        coeffs,
        eta0,
        margin: opts.margin,
        residuals: res,
    })
}

/// Evolve a 4-level state under the sampled schedule `H(tᵢ)` with RK4 steps
/// spanning two grid intervals (the odd node is the midpoint stage).
///
/// Returns the state at every even grid point.
pub fn evolve_sampled(h: &[Mat4], t: &[f64], psi0: &Vec4) -> Vec<Vec4> {
    let mut psi = *psi0;
    let mut out = vec![psi];
    let minus_i = -I;
    for j in (0..h.len().saturating_sub(2)).step_by(2) {
        let step = t[j + 2] - t[j];
        let g = |m: &Mat4| m * minus_i;
        psi = crate::linalg::rk4_linear_step(&psi, step, &g(&h[j]), &g(&h[j + 1]), &g(&h[j + 2]));
        psi /= r(psi.norm());
        out.push(psi);
    }
    out
}

/// Number of odd-grid RK4 steps needed for a 4×4 Hamiltonian of the given norm.
pub fn intervals_for(norm: f64, duration: f64, bound: f64) -> usize {
    let steps = (duration * norm / bound).ceil() as usize;
    2 * steps.max(1)
}
