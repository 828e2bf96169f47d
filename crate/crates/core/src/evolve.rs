//! Non-Hermitian evolution, steady-state eigenstate extraction and k-fitting.

use std::f64::consts::TAU;

use argmin::core::{CostFunction, Executor};
use argmin::solver::brent::BrentOpt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::{
    fix_phase_largest, left_partner, overlap_sq2, propagator2, rk4_step, spectral_norm2, ONE, ZERO,
};
use crate::model::{BlochFamily, ModelParams};
use crate::spectra::eigensolve2;
use crate::{Error, Mat2, Result, Vec2};

/// Largest allowed `dt · ‖H‖`.
pub const STEP_BOUND: f64 = 0.01;

/// `(ΔIm E) · T` required before the steady state is trusted.
pub const CONVERGENCE_WINDOW: f64 = 14.0;

/// Ray change per unit time below which evolution counts as stationary.
pub const STATIONARY_RATE: f64 = 1e-10;

const MAX_WINDOW: f64 = 80.0;

/// Evolution under `i ∂ψ/∂t = H ψ` with per-step renormalization.
#[derive(Debug, Clone, Default)]
pub struct NhTrajectory {
    pub t: Vec<f64>,
    /// Normalized states.
    pub states: Vec<Vec2>,
    /// `ln ‖ψ(t)‖` of the unnormalized solution.
    pub log_norms: Vec<f64>,
    /// `|ψ(t)₀|²` of the normalized states.
    pub populations: Vec<f64>,
}

impl NhTrajectory {
    fn push(&mut self, t: f64, psi: Vec2, log_norm: f64) {
        self.t.push(t);
        self.populations.push(psi[0].norm_sqr());
        self.states.push(psi);
        self.log_norms.push(log_norm);
    }

    pub fn final_state(&self) -> Vec2 {
        *self
            .states
            .last()
            .expect("trajectories hold at least the initial point")
    }
}

/// Overall rate coefficient applied to dimensionless Hamiltonians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LambdaScale(f64);

impl LambdaScale {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "rate scale must be positive, got {lambda}"
            )));
        }
        Ok(Self(lambda))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl Default for LambdaScale {
    fn default() -> Self {
        Self(1.0)
    }
}

fn check_unit(psi: &Vec2) -> Result<()> {
    if (psi.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "initial state has norm {}",
            psi.norm()
        )));
    }
    Ok(())
}

/// The largest step allowed for `h`.
pub fn max_step(h: &Mat2) -> f64 {
    let norm = spectral_norm2(h);
    if norm == 0.0 {
        f64::INFINITY
    } else {
        STEP_BOUND / norm
    }
}

/// Integrate a time-dependent non-Hermitian Hamiltonian with fixed RK4 steps.
///
/// `bound` is an upper estimate of `‖H(t)‖` used for the step guard. The step
/// is shrunk so that it divides `t_total` exactly.
pub fn integrate_nh_with<F>(
    h: F,
    bound: f64,
    psi0: &Vec2,
    t_total: f64,
    dt: f64,
) -> Result<NhTrajectory>
where
    F: Fn(f64) -> Mat2,
{
    check_unit(psi0)?;
    if !(t_total >= 0.0 && dt > 0.0) {
        return Err(Error::InvalidInput(format!(
            "need T >= 0 and dt > 0, got T = {t_total}, dt = {dt}"
        )));
    }
    let limit = if bound > 0.0 {
        STEP_BOUND / bound
    } else {
        f64::INFINITY
    };
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepTooLarge {
            dt,
            suggested: limit,
        });
    }
    let steps = (t_total / dt - 1e-9).ceil().max(0.0) as usize;
    let h_step = if steps == 0 {
        0.0
    } else {
        t_total / steps as f64
    };

    let mut traj = NhTrajectory::default();
    let mut psi = *psi0;
    let mut log_norm = 0.0;
    traj.push(0.0, psi, log_norm);
    for i in 0..steps {
        let t = i as f64 * h_step;
        let next = rk4_step(&psi, t, h_step, |s, y: &Vec2| {
            h(s) * y * (-crate::linalg::I)
        });
        let norm = next.norm();
        log_norm += norm.ln();
        psi = next / crate::linalg::r(norm);
        traj.push((i + 1) as f64 * h_step, psi, log_norm);
    }
    Ok(traj)
}

/// Integrate `i ∂ψ/∂t = H ψ` for constant `H` from `psi0` over `[0, T]`.
pub fn integrate_nh(h: &Mat2, psi0: &Vec2, t_total: f64, dt: f64) -> Result<NhTrajectory> {
    let m = *h;
    integrate_nh_with(move |_| m, spectral_norm2(h), psi0, t_total, dt)
}

/// `P₁(t)` of a trajectory: the first-component population of the normalized state.
pub fn renormalized_population(traj: &NhTrajectory) -> Vec<f64> {
    traj.states
        .iter()
        .map(|s| s[0].norm_sqr() / s.norm_squared())
        .collect()
}

/// Exact `P₁(t)` from `psi0` under constant `H`.
pub fn population_exact(h: &Mat2, psi0: &Vec2, t: f64) -> f64 {
    let psi = propagator2(h, t) * psi0;
    psi[0].norm_sqr() / psi.norm_squared()
}

impl std::str::FromStr for BandSelector {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dominant" | "+" => Ok(Self::Dominant),
            "subdominant" | "-" => Ok(Self::Subdominant),
            _ => Err(Error::InvalidInput(format!(
                "unknown band selector '{s}' (dominant, subdominant)"
            ))),
        }
    }
}

/// Which eigenstate the evolution should converge to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandSelector {
    /// Evolve under `+H`: the eigenstate with the larger `Im E` survives.
    Dominant,
    /// Evolve under `−H`: the eigenstate with the smaller `Im E` survives.
    Subdominant,
}

impl BandSelector {
    pub fn name(self) -> &'static str {
        match self {
            BandSelector::Dominant => "dominant",
            BandSelector::Subdominant => "subdominant",
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            BandSelector::Dominant => 1.0,
            BandSelector::Subdominant => -1.0,
        }
    }

    /// Index (in `eigensolve2` order) of the eigenvalue this selector picks.
    pub fn pick(self, values: &[crate::C64; 2]) -> usize {
        let upper = if values[0].im >= values[1].im { 0 } else { 1 };
        match self {
            BandSelector::Dominant => upper,
            BandSelector::Subdominant => 1 - upper,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    pub state: Vec2,
    /// `|⟨exact|state⟩|²` against the diagonalized eigenstate.
    pub fidelity: f64,
    /// Evolution time actually used.
    pub time: f64,
    pub eigenvalue: crate::C64,
    /// `|Im E₁ − Im E₂|`.
    pub imaginary_gap: f64,
}

/// Initial state for steady-state extraction: `(1, 0)` unless it has no
/// component along the target eigenstate.
pub fn generic_initial(eig_target: &Vec2, eig_other: &Vec2) -> Vec2 {
    let first = Vec2::new(ONE, ZERO);
    let chi = left_partner(eig_target, eig_other);
    if chi.dotc(&first).norm() * eig_target.norm() < 1e-6 {
        Vec2::new(ONE, ONE) / crate::linalg::r(2f64.sqrt())
    } else {
        first
    }
}

/// Extract an eigenstate of `h` by evolving under `±h` until stationary.
pub fn steady_eigenstate(h: &Mat2, which: BandSelector) -> Result<SteadyState> {
    let eig = eigensolve2(h);
    let gap = (eig.values[0].im - eig.values[1].im).abs();
    if gap < 1e-6 {
        return Err(Error::NoDominantBand { gap });
    }
    let target = which.pick(&eig.values);
    let exact = eig.vectors[target];
    let psi0 = generic_initial(&exact, &eig.vectors[1 - target]);

    let h_eff = h * crate::linalg::r(which.sign());
    let dt = max_step(&h_eff).min(0.1 / gap);
    let chunk = 1.0 / gap;

    let mut psi = psi0;
    let mut elapsed = 0.0;
    let window = CONVERGENCE_WINDOW / gap;
    let first = integrate_nh(&h_eff, &psi, window, dt)?;
    psi = first.final_state();
    elapsed += window;
    loop {
        let seg = integrate_nh(&h_eff, &psi, chunk, dt)?;
        let next = seg.final_state();
        let change = (1.0 - overlap_sq2(&psi, &next)).max(0.0).sqrt() / chunk;
        psi = next;
        elapsed += chunk;
        if change < STATIONARY_RATE || elapsed * gap > MAX_WINDOW {
            break;
        }
    }
    let state = fix_phase_largest(&psi);
    Ok(SteadyState {
        state,
        fidelity: overlap_sq2(&exact, &state),
        time: elapsed,
        eigenvalue: eig.values[target],
        imaginary_gap: gap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KFit {
    pub k_fit: f64,
    pub stderr: f64,
    /// Residual sum of squares at the optimum.
    pub objective: f64,
}

/// Model `P₁(t; k)` under `λ H(k)` from `(1, 0)`.
pub fn model_population<F: BlochFamily + ?Sized>(
    family: &F,
    lambda: LambdaScale,
    k: f64,
    t: f64,
) -> f64 {
    let h = family.matrix(k) * crate::linalg::r(lambda.value());
    population_exact(&h, &Vec2::new(ONE, ZERO), t)
}

/// `n` samples `(tᵢ, P₁(tᵢ) + noise)` at `tᵢ = t_max·i/n` with Gaussian noise of width `sigma`.
pub fn synthetic_samples<F: BlochFamily + ?Sized>(
    family: &F,
    lambda: LambdaScale,
    k: f64,
    t_max: f64,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let noise = Normal::new(0.0, sigma)
        .map_err(|e| Error::InvalidInput(format!("noise width {sigma}: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|i| {
            let t = t_max * i as f64 / n as f64;
            (
                t,
                model_population(family, lambda, k, t) + noise.sample(&mut rng),
            )
        })
        .collect())
}

struct Objective<'a, F: ?Sized> {
    family: &'a F,
    lambda: LambdaScale,
    samples: &'a [(f64, f64)],
}

impl<F: BlochFamily + ?Sized> Objective<'_, F> {
    fn value(&self, k: f64) -> f64 {
        self.samples
            .iter()
            .map(|&(t, p)| {
                let d = model_population(self.family, self.lambda, k, t) - p;
                d * d
            })
            .sum()
    }
}

impl<F: BlochFamily + ?Sized> CostFunction for Objective<'_, F> {
    type Param = f64;
    type Output = f64;

    fn cost(&self, k: &f64) -> std::result::Result<f64, argmin::core::Error> {
        Ok(self.value(*k))
    }
}

const COARSE_SCAN: usize = 64;
const REFINED_BASINS: usize = 4;

/// Number of scan points: at least 64, and dense enough that the objective
/// cannot hide a basin between neighbours. The model phase varies with `k` at a
/// rate of about `λ t_max ‖∂H/∂k‖`, so the spacing is kept below a quarter of
/// the inverse of that rate.
fn scan_size<F: BlochFamily + ?Sized>(
    family: &F,
    lambda: LambdaScale,
    samples: &[(f64, f64)],
    range: (f64, f64),
) -> usize {
    let t_max = samples.iter().map(|s| s.0.abs()).fold(0.0, f64::max);
    let delta = 1e-6;
    let slope = (0..COARSE_SCAN)
        .map(|i| range.0 + (range.1 - range.0) * i as f64 / COARSE_SCAN as f64)
        .map(|k| (family.matrix(k + delta) - family.matrix(k)).norm() / delta)
        .fold(0.0, f64::max);
    let needed = 4.0 * (range.1 - range.0) * lambda.value() * t_max * slope;
    COARSE_SCAN.max(needed.ceil() as usize).min(1 << 16)
}

/// Least-squares fit of `k` over the full Brillouin zone.
pub fn fit_k(samples: &[(f64, f64)], params: &ModelParams, lambda: LambdaScale) -> Result<KFit> {
    fit_k_in(samples, params, lambda, (0.0, TAU))
}

/// Least-squares fit of `k` restricted to `range`.
///
/// A scan of at least 64 points locates the basins, Brent's method refines the
/// deepest few, and the standard error comes from the curvature of the
/// objective at the optimum.
pub fn fit_k_in<F: BlochFamily + ?Sized>(
    samples: &[(f64, f64)],
    family: &F,
    lambda: LambdaScale,
    range: (f64, f64),
) -> Result<KFit> {
    if samples.len() < 8 {
        return Err(Error::InvalidInput(format!(
            "need at least 8 samples, got {}",
            samples.len()
        )));
    }
    let (lo, hi) = range;
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!("empty k range [{lo}, {hi}]")));
    }
    let periodic = (hi - lo - TAU).abs() < 1e-12;
    let obj = Objective {
        family,
        lambda,
        samples,
    };

    let count = scan_size(family, lambda, samples, range);
    let nodes = if periodic { count } else { count - 1 };
    let spacing = (hi - lo) / nodes as f64;
    let scan: Vec<(f64, f64)> = (0..count)
        .map(|i| lo + i as f64 * spacing)
        .map(|k| (k, obj.value(k)))
        .collect();

    // Refine the deepest few basins of the scan and keep the best.
    let mut basins: Vec<usize> = (0..count)
        .filter(|&i| {
            let left = if i > 0 {
                Some(i - 1)
            } else if periodic {
                Some(count - 1)
            } else {
                None
            };
            let right = if i + 1 < count {
                Some(i + 1)
            } else if periodic {
                Some(0)
            } else {
                None
            };
            left.map_or(true, |j| scan[i].1 <= scan[j].1)
                && right.map_or(true, |j| scan[i].1 <= scan[j].1)
        })
        .collect();
    basins.sort_by(|&i, &j| scan[i].1.total_cmp(&scan[j].1));
    basins.truncate(REFINED_BASINS);

    let mut k = scan[basins[0]].0;
    let mut best = scan[basins[0]].1;
    for &i in &basins {
        let k0 = scan[i].0;
        let (a, b) = if periodic {
            (k0 - spacing, k0 + spacing)
        } else {
            ((k0 - spacing).max(lo), (k0 + spacing).min(hi))
        };
        let solver = BrentOpt::new(a, b).set_tolerance(1e-12, 1e-13);
        let problem = Objective {
            family,
            lambda,
            samples,
        };
        let res = Executor::new(problem, solver)
            .configure(|s| s.max_iters(200))
            .run()
            .map_err(|e| Error::OptimizationFailed(e.to_string()))?;
        if let Some(kb) = res.state.best_param {
            let v = obj.value(kb);
            if v < best {
                k = kb;
                best = v;
            }
        }
    }

    let n = samples.len() as f64;
    let s2 = best / (n - 1.0);
    let floor = s2.max(1e-14);
    let spread = model_spread(&obj, &scan);
    if spread * n < floor {
        return Err(Error::Unidentifiable { spread, floor });
    }

    let step = 1e-4;
    let curvature = (obj.value(k + step) - 2.0 * best + obj.value(k - step)) / (step * step);
    let stderr = if curvature > 0.0 {
        (2.0 * s2 / curvature).sqrt()
    } else {
        f64::INFINITY
    };
    let k_fit = if periodic { k.rem_euclid(TAU) } else { k };
    Ok(KFit {
        k_fit,
        stderr,
        objective: best,
    })
}

/// Mean over sample times of the variance of the model over the scanned `k`.
fn model_spread<F: BlochFamily + ?Sized>(obj: &Objective<'_, F>, scan: &[(f64, f64)]) -> f64 {
    let m = scan.len() as f64;
    obj.samples
        .iter()
        .map(|&(t, _)| {
            let vals: Vec<f64> = scan
                .iter()
                .map(|&(k, _)| model_population(obj.family, obj.lambda, k, t))
                .collect();
            let mean = vals.iter().sum::<f64>() / m;
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m
        })
        .sum::<f64>()
        / obj.samples.len() as f64
}

/// Distance between two quasi-momenta on the circle.
pub fn k_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}
