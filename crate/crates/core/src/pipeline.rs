//! End-to-end synthetic experiment: for every quasi-momentum on a grid,
//! compile both band-selecting schedules, simulate the NV hardware with
//! noise, reconstruct the steady states from photoluminescence counts, and
//! aggregate the global Berry phase, winding number and a k fit.

use std::f64::consts::{PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::berry::{berry_phase_from_states, in_units_of_pi, left_partner};
use crate::dilation::{
    compile, neutralize_gain, prepare_initial, pulse_schedule, CompileOptions, DilationSchedule,
    DEFAULT_MARGIN,
};
use crate::evolve::{fit_k_in, BandSelector, KFit, LambdaScale};
use crate::linalg::{bloch_vector, fix_phase_first, projector2, r};
use crate::model::{bloch_hamiltonian, ModelParams};
use crate::nvsim::{
    coherence_metric, deviation, ideal_final_state, readout_rotation, required_intervals, simulate,
    Dephasing, NvParams, SimConfig,
};
use crate::spectra::{band_structure_from, eigensolve2, GAP_TOLERANCE};
use crate::tomo::{expected_counts_rho, fidelity, mle_reconstruct, sample_counts, PlRates};
use crate::{Error, Mat2, Result, Vec2, C64};

/// Steady-state window `gap·T` in units of the inverse imaginary gap.
pub const STEADY_WINDOW: f64 = 8.0;
/// Upper bound on the dimensionless evolution time `λT`.
pub const MAX_SCALED_DURATION: f64 = 24.0;
/// Fine tracking points per pipeline point used to label bands.
const LABEL_REFINEMENT: usize = 64;

/// Noise and acquisition settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    pub dephasing: Dephasing,
    pub ensemble: usize,
    pub selective: bool,
    pub rwa: bool,
    /// Shots per sequence; exact expected counts when `None`.
    pub shots: Option<u64>,
    /// Standard deviation of the noise added to sampled populations for the k fit.
    pub population_sigma: f64,
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            dephasing: Dephasing::None,
            ensemble: 1,
            selective: true,
            rwa: true,
            shots: None,
            population_sigma: 0.0,
        }
    }

    /// Dephasing, crosstalk, shot noise and population noise at the scale of the experiment.
    pub fn experiment_scale() -> Self {
        Self {
            dephasing: Dephasing::Quasistatic,
            ensemble: 200,
            selective: false,
            rwa: true,
            shots: Some(crate::tomo::DEFAULT_SHOTS),
            population_sigma: 0.03,
        }
    }
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::experiment_scale()
    }
}

/// Pipeline scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Number of quasi-momenta `kᵢ = 2π(i + ½)/N`.
    pub k_points: usize,
    pub nv: NvParams,
    pub noise: NoiseConfig,
    pub rates: PlRates,
    pub margin: f64,
    pub starts: usize,
    /// Population samples per trace for the k fit.
    pub fit_samples: usize,
    /// Half width of the k-fit window around the programmed k.
    pub fit_window: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_points: 20,
            nv: NvParams::purified(),
            noise: NoiseConfig::experiment_scale(),
            rates: PlRates::default(),
            margin: DEFAULT_MARGIN,
            starts: crate::tomo::DEFAULT_STARTS,
            fit_samples: 20,
            fit_window: 0.25 * PI,
            seed: 0,
        }
    }
}

/// Evenly spaced grid offset by half a step from `k = 0`.
pub fn offset_grid(n: usize) -> Vec<f64> {
    (0..n).map(|i| TAU * (i as f64 + 0.5) / n as f64).collect()
}

/// Deterministic per-job seed.
pub fn derive_seed(root: u64, a: u64, b: u64) -> u64 {
    let mut x =
        root ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    x ^= x >> 31;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^ (x >> 29)
}

/// Reconstruction of one steady state.
#[derive(Debug, Clone, Serialize)]
pub struct BandRun {
    pub selector: &'static str,
    /// µs.
    pub duration: f64,
    pub eta0: f64,
    pub fidelity: f64,
    pub loss: f64,
    /// Final coherence `⟨σx⟩² + ⟨σy⟩²` of the simulated electron.
    pub coherence: f64,
    /// `[Re ψ₁, Im ψ₁, Re ψ₂, Im ψ₂]` with the first component real.
    pub state: [f64; 4],
    #[serde(skip)]
    pub vector: Vec2,
    /// Sampled `(t, P₁)` of the trace.
    #[serde(skip)]
    pub trace: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KPoint {
    pub k: f64,
    /// Exact tracked eigenvalues (dimensionless) per band label.
    pub eigenvalues: [[f64; 2]; 2],
    /// Eigenvalues estimated from the reconstructed states.
    pub estimated: Option<[[f64; 2]; 2]>,
    /// Runs indexed by tracked band label.
    pub bands: [Option<BandRun>; 2],
    pub k_fit: Option<KFit>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineReport {
    pub k_points: usize,
    pub points: Vec<KPoint>,
    pub permutation: [usize; 2],
    /// Berry phase of the exact eigenstates on the same grid.
    pub q_exact: f64,
    /// Berry phase of the reconstructed states.
    pub q_raw: Option<f64>,
    pub q_raw_over_pi: Option<f64>,
    pub nu_exact: i64,
    pub nu: Option<i64>,
    pub min_fidelity: Option<f64>,
    pub median_fidelity: Option<f64>,
    /// Fraction of successful k fits within `0.07π` of the programmed k.
    pub fit_hit_rate: Option<f64>,
}

/// Band-selecting schedule `±λ H(k)` and its evolution time in µs.
pub fn selected_hamiltonian(
    params: &ModelParams,
    k: f64,
    lambda: f64,
    which: BandSelector,
) -> (Mat2, f64) {
    let h = bloch_hamiltonian(params, k).entries * r(which.sign() * lambda);
    let e = eigensolve2(&h);
    let gap = (e.values[0].im - e.values[1].im).abs() / lambda;
    let scaled = if gap > 0.0 {
        (STEADY_WINDOW / gap).min(MAX_SCALED_DURATION)
    } else {
        MAX_SCALED_DURATION
    };
    (h, scaled / lambda)
}

/// Compile on a coarse grid to bound the generator norm, then on a grid fine
/// enough for the hardware simulation.
pub fn compile_for_hardware(
    h: &Mat2,
    duration: f64,
    nv: &NvParams,
    sim: &SimConfig,
    margin: f64,
) -> Result<DilationSchedule> {
    let coarse = compile(
        |_| *h,
        duration,
        &CompileOptions {
            intervals: 400,
            margin,
            eta0: None,
        },
    )?;
    let norm = (0..coarse.t.len())
        .map(|i| coarse.dilated(i).norm())
        .fold(0.0, f64::max);
    let intervals = required_intervals(norm, duration, nv, sim);
    compile(
        |_| *h,
        duration,
        &CompileOptions {
            intervals,
            margin,
            eta0: None,
        },
    )
}

/// Outcome of one hardware-noise study run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseStudy {
    /// µs.
    pub duration: f64,
    pub eta0: f64,
    /// Coherence of the ideal final electron state.
    pub ideal_coherence: f64,
    /// Coherence of the simulated final electron state.
    pub coherence: f64,
    /// `1 − ⟨ψ_ideal|ρ|ψ_ideal⟩`.
    pub deviation: f64,
}

/// Run `λH(k)` for `8/λ` on the hardware model and compare with the ideal
/// dilated evolution. With `gain_offset` the Hamiltonian is first shifted by
/// `−iκ` so that its dominant eigenvalue has zero imaginary part.
pub fn noise_study(
    params: &ModelParams,
    k: f64,
    nv: &NvParams,
    sim: &SimConfig,
    gain_offset: bool,
) -> Result<NoiseStudy> {
    let raw = bloch_hamiltonian(params, k).entries * r(nv.lambda);
    let h = if gain_offset {
        neutralize_gain(&raw).0
    } else {
        raw
    };
    let duration = STEADY_WINDOW / nv.lambda;
    let dil = compile_for_hardware(&h, duration, nv, sim, DEFAULT_MARGIN)?;
    let pulses = pulse_schedule(&dil.t, &dil.coeffs, nv);
    let (_, psi0) = prepare_initial(dil.eta0)?;
    let ideal = ideal_final_state(&dil, &psi0);
    let res = simulate(nv, &dil, &pulses, &psi0, sim)?;
    let b = bloch_vector(&projector2(&ideal));
    Ok(NoiseStudy {
        duration,
        eta0: dil.eta0,
        ideal_coherence: coherence_metric(b[0], b[1]),
        coherence: *res.c.last().unwrap_or(&0.0),
        deviation: deviation(&res.final_electron(), &ideal),
    })
}

/// Compile, simulate and reconstruct the steady state of `±λH(k)`.
pub fn run_band(
    params: &ModelParams,
    k: f64,
    which: BandSelector,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<BandRun> {
    let nv = &cfg.nv;
    let (raw, duration) = selected_hamiltonian(params, k, nv.lambda, which);
    let (h, _) = neutralize_gain(&raw);
    let sim = SimConfig {
        dephasing: cfg.noise.dephasing,
        ensemble: cfg.noise.ensemble,
        selective: cfg.noise.selective,
        rwa: cfg.noise.rwa,
        seed: derive_seed(seed, 1, 0),
    };
    let dil = compile_for_hardware(&h, duration, nv, &sim, cfg.margin)?;
    let pulses = pulse_schedule(&dil.t, &dil.coeffs, nv);
    let (_, psi0) = prepare_initial(dil.eta0)?;
    let res = simulate(nv, &dil, &pulses, &psi0, &sim)?;

    let rot = readout_rotation();
    let expected = expected_counts_rho(&(rot * res.final_rho * rot.adjoint()), &cfg.rates);
    let counts = match cfg.noise.shots {
        Some(shots) => sample_counts(&expected, shots, derive_seed(seed, 2, 0))?,
        None => expected,
    };
    let rec = mle_reconstruct(&counts, cfg.starts, derive_seed(seed, 3, 0))?;

    let exact = eigensolve2(&raw);
    let target = exact.vectors[BandSelector::Dominant.pick(&exact.values)];
    let vector = fix_phase_first(&rec.state);

    let n = cfg.fit_samples.max(1);
    let noise = Normal::new(0.0, cfg.noise.population_sigma.max(0.0))
        .map_err(|e| Error::InvalidInput(format!("population noise: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 4, 0));
    let dt = res.t.get(1).copied().unwrap_or(duration);
    let trace = (0..n)
        .map(|i| {
            let t = duration * i as f64 / n as f64;
            let j = ((t / dt).round() as usize).min(res.t.len() - 1);
            let p1 = 0.5 * (1.0 + res.sz[j]);
            (res.t[j], p1 + noise.sample(&mut rng))
        })
        .collect();

    Ok(BandRun {
        selector: which.name(),
        duration,
        eta0: dil.eta0,
        fidelity: fidelity(&rec.state, &target)?,
        loss: rec.loss,
        coherence: *res.c.last().unwrap_or(&0.0),
        state: [vector[0].re, vector[0].im, vector[1].re, vector[1].im],
        vector,
        trace,
    })
}

/// `E = ⟨χ|H|ψ⟩` with `χ` the biorthogonal partner built from the other state.
pub fn eigenvalue_estimate(h: &Mat2, psi: &Vec2, other: &Vec2) -> C64 {
    let chi = left_partner(psi, other);
    chi.dotc(&(h * psi))
}

/// Winding of `f = −(E₁ − E₂)²/4` sampled around a closed loop.
pub fn winding_of_samples(f: &[C64]) -> Result<i64> {
    if f.len() < 3 || f.iter().any(|x| x.norm() < 1e-12) {
        return Err(Error::NumericalConsistency(
            "degenerate eigenvalue samples".into(),
        ));
    }
    let total: f64 = (0..f.len())
        .map(|i| (f[(i + 1) % f.len()] / f[i]).arg())
        .sum();
    Ok((total / TAU).round() as i64)
}

/// Track bands on a fine grid containing the pipeline grid and return, per
/// pipeline point, the exact eigenvalues and right eigenvectors by tracked
/// label, plus the seam permutation.
pub fn tracked_labels(
    params: &ModelParams,
    k: &[f64],
) -> Result<(Vec<[C64; 2]>, Vec<[Vec2; 2]>, [usize; 2])> {
    let n = k.len();
    let fine = band_structure_from(params, n * LABEL_REFINEMENT, k[0], GAP_TOLERANCE)?;
    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    for &ki in k {
        let idx = fine
            .k_grid
            .iter()
            .position(|&x| (x - ki).abs() < 1e-9)
            .ok_or_else(|| {
                Error::NumericalConsistency(format!("k = {ki} missing from the tracking grid"))
            })?;
        values.push([fine.bands[0][idx], fine.bands[1][idx]]);
        vectors.push([fine.vectors[0][idx], fine.vectors[1][idx]]);
    }
    Ok((values, vectors, fine.permutation))
}

fn label_of(values: &[C64; 2], e: C64) -> usize {
    if (values[0] - e).norm() <= (values[1] - e).norm() {
        0
    } else {
        1
    }
}

/// Run the full pipeline over the offset k grid.
pub fn run_pipeline(params: &ModelParams, cfg: &PipelineConfig) -> Result<PipelineReport> {
    params.validate()?;
    cfg.nv.validate()?;
    if cfg.k_points < 16 {
        return Err(Error::InvalidInput(
            "the pipeline needs at least 16 k points".into(),
        ));
    }
    let ks = offset_grid(cfg.k_points);
    let (values, exact_vectors, permutation) = tracked_labels(params, &ks)?;
    let lambda = LambdaScale::new(cfg.nv.lambda)?;

    let jobs: Vec<(usize, BandSelector)> = (0..ks.len())
        .flat_map(|i| [(i, BandSelector::Dominant), (i, BandSelector::Subdominant)])
        .collect();
    let runs: Vec<Result<BandRun>> = jobs
        .par_iter()
        .map(|&(i, which)| {
            run_band(
                params,
                ks[i],
                which,
                cfg,
                derive_seed(cfg.seed, i as u64, which.sign() as i64 as u64),
            )
        })
        .collect();

    let mut points: Vec<KPoint> = ks
        .iter()
        .zip(&values)
        .map(|(&k, v)| KPoint {
            k,
            eigenvalues: [[v[0].re, v[0].im], [v[1].re, v[1].im]],
            estimated: None,
            bands: [None, None],
            k_fit: None,
            errors: Vec::new(),
        })
        .collect();
    for (&(i, which), run) in jobs.iter().zip(runs) {
        let label = label_of(&values[i], values[i][which.pick(&values[i])]);
        match run {
            Ok(b) => points[i].bands[label] = Some(b),
            Err(e) => points[i].errors.push(format!("{}: {e}", which.name())),
        }
    }

    // k fit from the dominant-band population trace.
    let fits: Vec<Option<std::result::Result<KFit, String>>> = points
        .par_iter()
        .map(|p| {
            let dom = label_of(
                &values_at(p),
                values_at(p)[BandSelector::Dominant.pick(&values_at(p))],
            );
            let run = p.bands[dom].as_ref()?;
            let range = (p.k - cfg.fit_window, p.k + cfg.fit_window);
            Some(fit_k_in(&run.trace, params, lambda, range).map_err(|e| e.to_string()))
        })
        .collect();
    for (p, f) in points.iter_mut().zip(fits) {
        match f {
            Some(Ok(fit)) => p.k_fit = Some(fit),
            Some(Err(e)) => p.errors.push(format!("k fit: {e}")),
            None => {}
        }
    }

    for p in points.iter_mut() {
        if let [Some(a), Some(b)] = &p.bands {
            let h = bloch_hamiltonian(params, p.k).entries;
            let ea = eigenvalue_estimate(&h, &a.vector, &b.vector);
            let eb = eigenvalue_estimate(&h, &b.vector, &a.vector);
            p.estimated = Some([[ea.re, ea.im], [eb.re, eb.im]]);
        }
    }

    let exact_states: [Vec<Vec2>; 2] = [0, 1].map(|n| exact_vectors.iter().map(|v| v[n]).collect());
    let q_exact = berry_phase_from_states(&exact_states, permutation)?;
    let exact_f: Vec<C64> = values
        .iter()
        .map(|v| -(v[0] - v[1]).powi(2) * 0.25)
        .collect();
    let nu_exact = winding_of_samples(&exact_f)?;

    let complete = points.iter().all(|p| p.bands.iter().all(Option::is_some));
    let (q_raw, nu) = if complete {
        let states: [Vec<Vec2>; 2] = [0, 1].map(|n| {
            points
                .iter()
                .map(|p| p.bands[n].as_ref().map(|b| b.vector).unwrap_or_default())
                .collect()
        });
        let q = berry_phase_from_states(&states, permutation).ok();
        let f: Vec<C64> = points
            .iter()
            .filter_map(|p| {
                p.estimated.map(|e| {
                    -(C64::new(e[0][0], e[0][1]) - C64::new(e[1][0], e[1][1])).powi(2) * 0.25
                })
            })
            .collect();
        (q, winding_of_samples(&f).ok())
    } else {
        (None, None)
    };

    let mut fids: Vec<f64> = points
        .iter()
        .flat_map(|p| p.bands.iter().flatten().map(|b| b.fidelity))
        .collect();
    fids.sort_by(f64::total_cmp);
    let fitted: Vec<&KPoint> = points.iter().filter(|p| p.k_fit.is_some()).collect();
    let fit_hit_rate = (!fitted.is_empty()).then(|| {
        let hits = fitted
            .iter()
            .filter(|p| {
                crate::evolve::k_distance(
                    p.k_fit.as_ref().map(|f| f.k_fit).unwrap_or(f64::NAN),
                    p.k,
                ) <= 0.07 * PI
            })
            .count();
        hits as f64 / fitted.len() as f64
    });

    Ok(PipelineReport {
        k_points: cfg.k_points,
        permutation,
        q_exact,
        q_raw,
        q_raw_over_pi: q_raw.map(in_units_of_pi),
        nu_exact,
        nu,
        min_fidelity: fids.first().copied(),
        median_fidelity: (!fids.is_empty()).then(|| fids[fids.len() / 2]),
        fit_hit_rate,
        points,
    })
}

fn values_at(p: &KPoint) -> [C64; 2] {
    [
        C64::new(p.eigenvalues[0][0], p.eigenvalues[0][1]),
        C64::new(p.eigenvalues[1][0], p.eigenvalues[1][1]),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Preset;

    #[test]
    fn grid_and_seeds() {
        let g = offset_grid(4);
        assert!((g[0] - PI / 4.0).abs() < 1e-15 && (g[3] - 7.0 * PI / 4.0).abs() < 1e-15);
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 2));
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
    }

    #[test]
    fn sample_winding() {
        let f: Vec<C64> = (0..20)
            .map(|i| C64::from_polar(1.0, 2.0 * TAU * i as f64 / 20.0))
            .collect();
        assert_eq!(winding_of_samples(&f).unwrap(), 2);
        let g: Vec<C64> = f.iter().map(|x| x.conj()).collect();
        assert_eq!(winding_of_samples(&g).unwrap(), -2);
    }

    #[test]
    fn exact_eigenvalue_estimate() {
        let h = bloch_hamiltonian(&Preset::HopfLink.params(), 1.1).entries;
        let e = eigensolve2(&h);
        let est = eigenvalue_estimate(&h, &e.vectors[0], &e.vectors[1]);
        assert!((est - e.values[0]).norm() < 1e-12);
    }

    #[test]
    fn labels_follow_tracking() {
        for p in Preset::ALL {
            let ks = offset_grid(20);
            let (values, vectors, perm) = tracked_labels(&p.params(), &ks).unwrap();
            let states: [Vec<Vec2>; 2] = [0, 1].map(|n| vectors.iter().map(|v| v[n]).collect());
            let q = berry_phase_from_states(&states, perm).unwrap();
            let want = match p {
                Preset::Unlink => 0.0,
                Preset::Unknot => PI,
                Preset::HopfLink => TAU,
            };
            assert!((q - want).abs() < 1e-6, "{p}: {q}");
            assert_eq!(values.len(), 20);
        }
    }

    #[test]
    fn noiseless_pipeline_recovers_topology() {
        let cfg = PipelineConfig {
            noise: NoiseConfig::noiseless(),
            ..Default::default()
        };
        let rep = run_pipeline(&Preset::HopfLink.params(), &cfg).unwrap();
        for p in &rep.points {
            assert!(p.errors.is_empty(), "{:?}", p.errors);
        }
        let q = rep.q_raw.unwrap();
        assert!((q - TAU).abs() < 0.01 * PI, "{q}");
        assert_eq!(rep.nu, Some(2));
        assert!(
            rep.min_fidelity.unwrap() > 0.999,
            "{:?} {:?}",
            rep.min_fidelity,
            rep.points
                .iter()
                .map(|p| (
                    p.k,
                    p.bands
                        .iter()
                        .flatten()
                        .map(|b| b.fidelity)
                        .collect::<Vec<_>>()
                ))
                .collect::<Vec<_>>()
        );
    }
}
