//! Nine-sequence photoluminescence count model and maximum-likelihood
//! reconstruction of pure electron–nuclear states.
//!
//! Levels are numbered `1 = |0,1⟩`, `2 = |−1,1⟩`, `3 = |0,0⟩`, `4 = |−1,0⟩`
//! in `|m_S, m_I⟩` labels. Sequence `3r + p + 1` applies readout rotation `r`
//! (`I`, `R_{−y}(π/2)`, `R_{−x}(π/2)` on the electron in both nuclear
//! subspaces) followed by population permutation `p` (`I`, electron π pulse
//! in the `|1⟩ₙ` subspace, nuclear π pulse in the `m_S = 0` subspace).

use std::f64::consts::FRAC_PI_4;

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::{c, identity2, kron, r, sigma_x, sigma_y, wrap_angle, I, ZERO};
use crate::{Error, Mat2, Mat4, Result, Vec2, Vec4};

/// Default number of optimizer starts.
pub const DEFAULT_STARTS: usize = 16;

/// Default shots per sequence for synthetic data.
pub const DEFAULT_SHOTS: u64 = 30_000;

/// Product-basis index of each level 1..4.
const LEVEL_INDEX: [usize; 4] = [0, 2, 1, 3];

/// `(α|0⟩ₑ + βe^{iγ}|−1⟩ₑ)|1⟩ₙ + (δ|0⟩ₑ + εe^{iζ}|−1⟩ₑ)|0⟩ₙ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PureStateParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub zeta: f64,
}

impl PureStateParams {
    pub fn norm_sq(&self) -> f64 {
        self.alpha.powi(2) + self.beta.powi(2) + self.delta.powi(2) + self.epsilon.powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let amps = [self.alpha, self.beta, self.delta, self.epsilon];
        if amps.iter().any(|a| !a.is_finite() || *a < 0.0)
            || !self.gamma.is_finite()
            || !self.zeta.is_finite()
        {
            return Err(Error::InvalidInput(
                "state amplitudes must be finite and non-negative".into(),
            ));
        }
        if (self.norm_sq() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "state not normalized (norm² = {})",
                self.norm_sq()
            )));
        }
        Ok(())
    }

    /// 4-vector in the `{|0,1⟩, |0,0⟩, |−1,1⟩, |−1,0⟩}` product basis.
    pub fn to_vector(&self) -> Vec4 {
        Vec4::new(
            r(self.alpha),
            r(self.delta),
            crate::C64::from_polar(self.beta, self.gamma),
            crate::C64::from_polar(self.epsilon, self.zeta),
        )
    }

    /// Canonical parameters of a 4-vector: normalized, with real non-negative
    /// `|0⟩ₑ` coefficients in each nuclear subspace.
    pub fn from_vector(v: &Vec4) -> Result<Self> {
        let n = v.norm();
        if !(n > 0.0) {
            return Err(Error::InvalidInput("zero state vector".into()));
        }
        let v = v / r(n);
        let rel = |a: crate::C64, b: crate::C64| {
            if b.norm() == 0.0 {
                0.0
            } else {
                wrap_angle(b.arg() - a.arg())
            }
        };
        Ok(Self {
            alpha: v[0].norm(),
            beta: v[2].norm(),
            gamma: rel(v[0], v[2]),
            delta: v[1].norm(),
            epsilon: v[3].norm(),
            zeta: rel(v[1], v[3]),
        })
    }

    /// Normalized electron state in the `|1⟩ₙ` subspace.
    pub fn subspace_state(&self) -> Result<Vec2> {
        let v = Vec2::new(r(self.alpha), crate::C64::from_polar(self.beta, self.gamma));
        let n = v.norm();
        if n < 1e-12 {
            return Err(Error::NumericalConsistency(
                "no weight in the |1⟩ₙ subspace".into(),
            ));
        }
        Ok(v / r(n))
    }
}

/// Photoluminescence rate per shot of each level 1..4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlRates(pub [f64; 4]);

impl Default for PlRates {
    fn default() -> Self {
        Self([1.0, 0.7, 1.0, 0.7])
    }
}

impl PlRates {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().any(|p| !(*p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidInput("PL rates must be positive".into()));
        }
        Ok(())
    }
}

/// Nine expected or sampled counts per shot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountVector {
    pub counts: [f64; 9],
    pub rates: PlRates,
    pub shots: Option<u64>,
}

fn readouts() -> [Mat4; 3] {
    let rot = |s: Mat2| identity2() * r(FRAC_PI_4.cos()) + s * I * r(FRAC_PI_4.sin());
    [
        Mat4::identity(),
        kron(&rot(sigma_y()), &identity2()),
        kron(&rot(sigma_x()), &identity2()),
    ]
}

/// Level populations 1..4 of a density matrix.
fn level_populations(rho: &Mat4) -> [f64; 4] {
    std::array::from_fn(|l| rho[(LEVEL_INDEX[l], LEVEL_INDEX[l])].re)
}

/// Permutations of the levels applied by the three population pulses.
const PERMUTATIONS: [[usize; 4]; 3] = [[0, 1, 2, 3], [1, 0, 2, 3], [2, 1, 0, 3]];

/// Expected counts of a (possibly mixed) 4×4 density matrix.
pub fn expected_counts_rho(rho: &Mat4, rates: &PlRates) -> CountVector {
    let mut counts = [0.0; 9];
    for (ri, u) in readouts().iter().enumerate() {
        let pops = level_populations(&(u * rho * u.adjoint()));
        for (pi, perm) in PERMUTATIONS.iter().enumerate() {
            // After the pulse, level l holds the population previously in perm[l].
            counts[3 * ri + pi] = (0..4).map(|l| rates.0[l] * pops[perm[l]]).sum();
        }
    }
    CountVector {
        counts,
        rates: *rates,
        shots: None,
    }
}

/// Expected counts of a normalized pure state.
pub fn expected_counts(state: &PureStateParams, rates: &PlRates) -> Result<CountVector> {
    state.validate()?;
    rates.validate()?;
    let v = state.to_vector();
    Ok(expected_counts_rho(&(v * v.adjoint()), rates))
}

/// Poisson shot noise: each count is drawn with mean `shots·C̃` and divided by `shots`.
pub fn sample_counts(expected: &CountVector, shots: u64, seed: u64) -> Result<CountVector> {
    if shots == 0 {
        return Err(Error::InvalidInput("shots must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = *expected;
    for c in out.counts.iter_mut() {
        let mean = *c * shots as f64;
        *c = if mean > 0.0 {
            let d = Poisson::new(mean)
                .map_err(|e| Error::InvalidInput(format!("Poisson mean {mean}: {e}")))?;
            d.sample(&mut rng) / shots as f64
        } else {
            0.0
        };
    }
    out.shots = Some(shots);
    Ok(out)
}

/// Unconstrained coordinates: three hyperspherical angles and two phases.
fn params_from(x: &[f64]) -> PureStateParams {
    let (s1, s2) = (x[0].sin(), x[1].sin());
    PureStateParams {
        alpha: x[0].cos().abs(),
        beta: (s1 * x[1].cos()).abs(),
        delta: (s1 * s2 * x[2].cos()).abs(),
        epsilon: (s1 * s2 * x[2].sin()).abs(),
        gamma: wrap_angle(x[3]),
        zeta: wrap_angle(x[4]),
    }
}

/// `L = Σᵢ (Cᵢ − C̃ᵢ)²`.
pub fn loss(counts: &CountVector, state: &PureStateParams) -> f64 {
    let v = state.to_vector() / r(state.norm_sq().sqrt());
    let model = expected_counts_rho(&(v * v.adjoint()), &counts.rates);
    counts
        .counts
        .iter()
        .zip(&model.counts)
        .map(|(a, b)| (a - b).powi(2))
        .sum()
}

struct Loss<'a>(&'a CountVector);

impl CostFunction for Loss<'_> {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, x: &Vec<f64>) -> std::result::Result<f64, argmin::core::Error> {
        Ok(loss(self.0, &params_from(x)))
    }
}

fn nelder_mead(counts: &CountVector, x0: Vec<f64>, step: f64) -> Option<(Vec<f64>, f64)> {
    let mut simplex = vec![x0.clone()];
    for i in 0..x0.len() {
        let mut v = x0.clone();
        v[i] += step;
        simplex.push(v);
    }
    let solver = NelderMead::new(simplex).with_sd_tolerance(1e-16).ok()?;
    let res = Executor::new(Loss(counts), solver)
        .configure(|s| s.max_iters(4000))
        .run()
        .ok()?;
    let best = res.state.best_param?;
    Some((best, res.state.best_cost))
}

/// Reconstruction result.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reconstruction {
    pub params: PureStateParams,
    pub loss: f64,
    /// Normalized `|1⟩ₙ`-subspace state `(α, βe^{iγ})`.
    #[serde(skip)]
    pub state: Vec2,
}

/// Multi-start Nelder–Mead minimization of the count loss.
pub fn mle_reconstruct(counts: &CountVector, starts: usize, seed: u64) -> Result<Reconstruction> {
    counts.rates.validate()?;
    if counts.counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
        return Err(Error::InvalidInput(
            "counts must be finite and non-negative".into(),
        ));
    }
    let starts = starts.max(DEFAULT_STARTS);
    let runs: Vec<Option<(Vec<f64>, f64)>> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            // Uniform on S³ for the amplitudes, uniform phases.
            let g: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            let x0 = angles_from(&g);
            let x0 = vec![
                x0[0],
                x0[1],
                x0[2],
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
                rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
            ];
            let (x, _) = nelder_mead(counts, x0, 0.3)?;
            // Restart from the optimum to shake off a collapsed simplex.
            nelder_mead(counts, x, 0.01)
        })
        .collect();
    let best = runs
        .into_iter()
        .flatten()
        .filter(|(_, l)| l.is_finite())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .ok_or_else(|| Error::OptimizationFailed("no optimizer start converged".into()))?;
    let raw = params_from(&best.0);
    let params = PureStateParams::from_vector(&raw.to_vector())?;
    Ok(Reconstruction {
        params,
        loss: best.1,
        state: params.subspace_state()?,
    })
}

/// Hyperspherical angles of the absolute values of a 4-vector.
fn angles_from(g: &[f64; 4]) -> [f64; 3] {
    let a: Vec<f64> = g.iter().map(|x| x.abs()).collect();
    let n = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(f64::MIN_POSITIVE);
    let t1 = (a[0] / n).clamp(-1.0, 1.0).acos();
    let t2 = a[2].hypot(a[3]).atan2(a[1]);
    let t3 = a[3].atan2(a[2]);
    [t1, t2, t3]
}

/// `|⟨reference|state⟩|²` for normalized 2-vectors.
pub fn fidelity(state: &Vec2, reference: &Vec2) -> Result<f64> {
    let (a, b) = (state.norm(), reference.norm());
    if a == 0.0 || b == 0.0 {
        return Err(Error::InvalidInput("fidelity of a zero vector".into()));
    }
    Ok((reference.dotc(state).norm_sqr() / (a * a * b * b)).clamp(0.0, 1.0))
}

/// `⟨ψ|ρ|ψ⟩` of a normalized 2-vector against a 2×2 density matrix.
pub fn fidelity_mixed(rho: &Mat2, reference: &Vec2) -> f64 {
    let v = reference / r(reference.norm());
    (v.adjoint() * rho * v)[(0, 0)].re
}

/// Embed a `|1⟩ₙ`-subspace electron state as a full product-basis vector.
pub fn embed_subspace(e: &Vec2) -> Vec4 {
    Vec4::new(e[0], ZERO, e[1], ZERO)
}

/// Random normalized 4-vector (test and benchmark helper).
pub fn random_state(rng: &mut impl Rng) -> Vec4 {
    let v = Vec4::from_fn(|_, _| c(StandardNormal.sample(rng), StandardNormal.sample(rng)));
    v / r(v.norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn basis_state(alpha: f64, beta: f64, gamma: f64) -> PureStateParams {
        PureStateParams {
            alpha,
            beta,
            gamma,
            delta: 0.0,
            epsilon: 0.0,
            zeta: 0.0,
        }
    }

    #[test]
    fn count_examples() {
        let rates = PlRates([1.0, 0.7, 0.9, 0.6]);
        let c = expected_counts(&basis_state(1.0, 0.0, 0.0), &rates).unwrap();
        assert!((c.counts[0] - 1.0).abs() < 1e-15);
        assert!((c.counts[1] - 0.7).abs() < 1e-15);
        assert!((c.counts[2] - 0.9).abs() < 1e-15);

        let s = PureStateParams {
            alpha: 0.5,
            beta: 0.5,
            gamma: 0.4,
            delta: 0.5,
            epsilon: 0.5,
            zeta: -1.0,
        };
        let c = expected_counts(&s, &rates).unwrap();
        let p = rates.0;
        let want1 = 0.25 * (p[0] + p[1] + p[2] + p[3]);
        assert!((c.counts[0] - want1).abs() < 1e-15 && (c.counts[1] - want1).abs() < 1e-15);

        assert!(expected_counts(&basis_state(1.0, 1.0, 0.0), &rates).is_err());
    }

    #[test]
    fn rotated_readout_oracle() {
        // (|0⟩ + |−1⟩)/√2 has Bloch vector +x; R_{−y}(π/2) maps +x to +z (all in |0⟩ₑ),
        // R_{−x}(π/2) leaves +x unchanged.
        let rates = PlRates([1.0, 0.7, 1.0, 0.7]);
        let s = basis_state(0.5f64.sqrt(), 0.5f64.sqrt(), 0.0);
        let c = expected_counts(&s, &rates).unwrap();
        let u = readouts()[1];
        let v = u * s.to_vector();
        let (p1, p2) = (v[0].norm_sqr(), v[2].norm_sqr());
        assert!((c.counts[3] - (p1 * 1.0 + p2 * 0.7)).abs() < 1e-15);
        assert!((p1 - 1.0).abs() < 1e-12 || (p2 - 1.0).abs() < 1e-12);
        assert!((c.counts[6] - 0.85).abs() < 1e-12);
        // +y state is mapped to a pole by R_{−x}(π/2).
        let y = basis_state(0.5f64.sqrt(), 0.5f64.sqrt(), std::f64::consts::FRAC_PI_2);
        let c = expected_counts(&y, &rates).unwrap();
        assert!((c.counts[6] - 1.0).abs() < 1e-12 || (c.counts[6] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn sampling_statistics() {
        let e = expected_counts(&basis_state(0.6, 0.8, 0.3), &PlRates::default()).unwrap();
        let a = sample_counts(&e, 10_000_000, 1).unwrap();
        for (x, y) in a.counts.iter().zip(&e.counts) {
            assert!((x / y - 1.0).abs() < 1e-3);
        }
        assert_eq!(a, sample_counts(&e, 10_000_000, 1).unwrap());

        let shots = 100_000;
        let draws: Vec<f64> = (0..1000)
            .map(|s| sample_counts(&e, shots, s).unwrap().counts[0])
            .collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws.len() - 1) as f64)
            .sqrt();
        let want = (shots as f64 * e.counts[0]).powf(-0.5);
        assert!(
            (sd / mean / want - 1.0).abs() < 0.1,
            "{} vs {want}",
            sd / mean
        );
        assert!(sample_counts(&e, 0, 1).is_err());
    }

    #[test]
    fn fidelity_examples() {
        let a = Vec2::new(r(1.0), ZERO);
        assert!((fidelity(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fidelity(&a, &Vec2::new(ZERO, r(1.0))).unwrap(), 0.0);
        let h = Vec2::new(r(1.0), r(1.0)) / r(2f64.sqrt());
        assert!((fidelity(&a, &h).unwrap() - 0.5).abs() < 1e-15);
        assert!(fidelity(&Vec2::zeros(), &a).is_err());
    }

    #[test]
    fn noiseless_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let v = random_state(&mut rng);
            let truth = PureStateParams::from_vector(&v).unwrap();
            let counts = expected_counts(&truth, &PlRates::default()).unwrap();
            assert!(loss(&counts, &truth) < 1e-20);
            let rec = mle_reconstruct(&counts, 16, trial).unwrap();
            let f = fidelity(&rec.state, &truth.subspace_state().unwrap()).unwrap();
            assert!(f > 1.0 - 1e-6, "trial {trial}: {f} (loss {})", rec.loss);
        }
    }

    #[test]
    fn consistency_with_shots() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let states: Vec<PureStateParams> = (0..50)
            .map(|_| PureStateParams::from_vector(&random_state(&mut rng)).unwrap())
            .collect();
        let mut last = 0.0;
        for shots in [1_000u64, 10_000, 100_000, 1_000_000] {
            let mut f: Vec<f64> = states
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let e = expected_counts(s, &PlRates::default()).unwrap();
                    let rec = mle_reconstruct(&sample_counts(&e, shots, i as u64).unwrap(), 16, 0)
                        .unwrap();
                    fidelity(&rec.state, &s.subspace_state().unwrap()).unwrap()
                })
                .collect();
            f.sort_by(f64::total_cmp);
            let median = f[f.len() / 2];
            assert!(median >= last, "shots {shots}: median {median} < {last}");
            last = median;
        }
        assert!(last > 0.999);
    }

    #[test]
    fn identifiable_on_subspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let rates = PlRates::default();
        let mut checked = 0;
        while checked < 1000 {
            let a = PureStateParams::from_vector(&random_state(&mut rng)).unwrap();
            let b = PureStateParams::from_vector(&random_state(&mut rng)).unwrap();
            let (sa, sb) = (a.subspace_state().unwrap(), b.subspace_state().unwrap());
            let ba = crate::linalg::bloch_vector(&crate::linalg::projector2(&sa));
            let bb = crate::linalg::bloch_vector(&crate::linalg::projector2(&sb));
            let dist = (0..3).map(|i| (ba[i] - bb[i]).powi(2)).sum::<f64>().sqrt();
            if dist <= 1e-3 {
                continue;
            }
            let (ca, cb) = (
                expected_counts(&a, &rates).unwrap(),
                expected_counts(&b, &rates).unwrap(),
            );
            let diff = ca
                .counts
                .iter()
                .zip(&cb.counts)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(diff > 1e-6);
            checked += 1;
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn global_phase_changes_nothing(seed in any::<u64>(), phase in -3.0f64..3.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = random_state(&mut rng);
            let w = v * crate::C64::from_polar(1.0, phase);
            let (a, b) = (PureStateParams::from_vector(&v).unwrap(), PureStateParams::from_vector(&w).unwrap());
            let (ca, cb) = (expected_counts(&a, &PlRates::default()).unwrap(), expected_counts(&b, &PlRates::default()).unwrap());
            for (x, y) in ca.counts.iter().zip(&cb.counts) {
                prop_assert!((x - y).abs() < 1e-14);
            }
            prop_assert!(fidelity(&a.subspace_state().unwrap(), &b.subspace_state().unwrap()).unwrap() > 1.0 - 1e-14);
        }
    }
}
