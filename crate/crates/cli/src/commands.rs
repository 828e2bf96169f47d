//! Subcommand implementations.

use knotspin::berry::global_berry_phase;
use knotspin::dilation::{
    compile, neutralize_gain, prepare_initial, pulse_schedule, CompileOptions, DilationSchedule,
};
use knotspin::evolve::{
    fit_k, fit_k_in, integrate_nh, steady_eigenstate, synthetic_samples, LambdaScale,
};
use knotspin::linalg::{bloch_vector, projector2, r, ONE, ZERO};
use knotspin::model::{bloch_hamiltonian, load_model, ModelParams};
use knotspin::nvsim::{
    coherence_metric, deviation, ideal_final_state, required_intervals, simulate, NvParams,
    SimConfig,
};
use knotspin::pipeline::{run_pipeline, PipelineConfig};
use knotspin::spectra::{
    band_structure, classify_on, eigensolve2, winding_number, PhaseTag, DEFAULT_GRID,
};
use knotspin::tomo::{
    embed_subspace, expected_counts_rho, fidelity, mle_reconstruct, sample_counts, CountVector,
    PlRates, PureStateParams,
};
use knotspin::{Mat2, Vec2};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::Scenario;
use crate::output::OutDir;
use crate::{CliError, Common};

/// Scenario with command-line overrides applied.
pub struct Context {
    pub scenario: Scenario,
    pub params: ModelParams,
    pub grid: usize,
    pub seed: u64,
    pub nv: NvParams,
    pub flags: Common,
}

impl Context {
    pub fn new(scenario: Scenario, flags: Common) -> Result<Self, CliError> {
        let spec = flags
            .preset
            .clone()
            .or_else(|| scenario.model.clone())
            .unwrap_or_else(|| "hopf_link".into());
        let params = load_model(&spec).map_err(|e| CliError::Usage(e.to_string()))?;
        let grid = flags.grid.or(scenario.grid).unwrap_or(DEFAULT_GRID);
        if grid < 2 {
            return Err(CliError::Usage(format!("grid size {grid} too small")));
        }
        let seed = flags.seed.or(scenario.seed).unwrap_or(0);
        let nv = scenario.nv.resolve()?;
        nv.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self {
            scenario,
            params,
            grid,
            seed,
            nv,
            flags,
        })
    }

    fn sim_config(&self) -> SimConfig {
        let s = &self.scenario.simulate;
        SimConfig {
            dephasing: s.dephasing,
            ensemble: self.flags.ensemble.unwrap_or(s.ensemble),
            selective: self.flags.selective.unwrap_or(s.selective),
            rwa: self.flags.rwa.unwrap_or(s.rwa),
            seed: self.seed,
        }
    }
}

fn state_row(v: &Vec2) -> Vec<f64> {
    vec![v[0].re, v[0].im, v[1].re, v[1].im]
}

pub fn bands(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let bs = band_structure(&ctx.params, ctx.grid)?;
    for n in 0..2 {
        let rows = (0..bs.len()).map(|i| {
            let mut row = vec![bs.k_grid[i], bs.bands[n][i].re, bs.bands[n][i].im];
            row.extend(state_row(&bs.vectors[n][i]));
            row
        });
        out.csv(
            &format!("band_{}.csv", n + 1),
            &["k", "re_e", "im_e", "re_v1", "im_v1", "re_v2", "im_v2"],
            rows,
        )?;
    }
    out.json("classification.json", &classify_on(&ctx.params, ctx.grid)?)
}

pub fn winding(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let w = winding_number(&ctx.params, ctx.grid)?;
    out.json(
        "winding.json",
        &json!({
            "nu": w.nu,
            "tag": PhaseTag::from_nu(w.nu),
            "raw": w.raw,
            "residue": w.residue,
            "grid_size": w.grid_size,
        }),
    )
}

pub fn berry(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let bs = band_structure(&ctx.params, ctx.grid)?;
    let res = global_berry_phase(&bs)?;
    let rows = (0..2).flat_map(|n| {
        bs.vectors[n].iter().zip(&bs.k_grid).map(move |(v, &k)| {
            let b = bloch_vector(&projector2(&v.normalize()));
            vec![k, (n + 1) as f64, b[0], b[1]]
        })
    });
    out.csv("projections.csv", &["k", "band", "sx", "sy"], rows)?;
    out.json(
        "berry.json",
        &json!({
            "Q_raw": res.q_raw,
            "Q_mod_2pi": res.q_mod_2pi,
            "parity": res.parity,
            "discretization_error": res.discretization_error,
            "N": ctx.grid,
        }),
    )
}

pub fn evolve(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let e = &ctx.scenario.evolve;
    let lambda = LambdaScale::new(e.lambda)?;
    let h = bloch_hamiltonian(&ctx.params, e.k).entries * r(e.lambda);
    let traj = integrate_nh(
        &(h * r(e.band.sign())),
        &Vec2::new(ONE, ZERO),
        e.duration,
        e.dt,
    )?;
    let rows = (0..traj.t.len()).map(|i| {
        let mut row = vec![traj.t[i], traj.populations[i]];
        row.extend(state_row(&traj.states[i]));
        row.push(traj.log_norms[i]);
        row
    });
    out.csv(
        "trace.csv",
        &[
            "t", "p1", "re_psi1", "im_psi1", "re_psi2", "im_psi2", "log_norm",
        ],
        rows,
    )?;

    let steady = steady_eigenstate(&h, e.band)?;
    out.json(
        "steady_state.json",
        &json!({
            "band": e.band,
            "state": state_row(&steady.state),
            "eigenvalue": [steady.eigenvalue.re, steady.eigenvalue.im],
            "fidelity": steady.fidelity,
            "time": steady.time,
        }),
    )?;

    let samples = synthetic_samples(
        &ctx.params,
        lambda,
        e.k,
        e.duration,
        e.samples,
        e.noise,
        ctx.seed,
    )?;
    out.csv(
        "samples.csv",
        &["t", "p1"],
        samples.iter().map(|&(t, p)| vec![t, p]),
    )?;
    let fit = match e.fit_window {
        Some([a, b]) => fit_k_in(&samples, &ctx.params, lambda, (a, b))?,
        None => fit_k(&samples, &ctx.params, lambda)?,
    };
    out.json("fit.json", &fit)
}

fn selected_hamiltonian(ctx: &Context) -> (Mat2, f64) {
    let d = &ctx.scenario.dilate;
    let raw = bloch_hamiltonian(&ctx.params, d.k).entries * r(d.band.sign() * ctx.nv.lambda);
    if d.gain_offset {
        neutralize_gain(&raw)
    } else {
        (raw, 0.0)
    }
}

fn duration(ctx: &Context) -> f64 {
    ctx.scenario.dilate.duration.unwrap_or(8.0 / ctx.nv.lambda)
}

fn compile_with(ctx: &Context, h: &Mat2, intervals: usize) -> Result<DilationSchedule, CliError> {
    let d = &ctx.scenario.dilate;
    Ok(compile(
        |_| *h,
        duration(ctx),
        &CompileOptions {
            intervals,
            margin: d.margin,
            eta0: d.eta0,
        },
    )?)
}

pub fn dilate(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let (h, kappa) = selected_hamiltonian(ctx);
    let s = compile_with(ctx, &h, ctx.scenario.dilate.intervals)?;
    let p = pulse_schedule(&s.t, &s.coeffs, &ctx.nv);
    let rows = (0..p.t.len()).map(|i| {
        vec![
            p.t[i],
            p.amplitude[0][i],
            p.phase[0][i],
            p.frequency[0][i],
            p.amplitude[1][i],
            p.phase[1][i],
            p.frequency[1][i],
        ]
    });
    let header = [
        "t_us",
        "Omega1_MHz",
        "phi1_rad",
        "omega1_radperus",
        "Omega2_MHz",
        "phi2_rad",
        "omega2_radperus",
    ];
    out.csv("pulses.csv", &header, rows)?;
    let (rf_phase, _) = prepare_initial(s.eta0)?;
    out.json(
        "dilation.json",
        &json!({
            "eta0": s.eta0,
            "margin": s.margin,
            "grid": s.t.len(),
            "duration": s.duration(),
            "gain_offset": kappa,
            "rf_phase": rf_phase,
            "max_residuals": s.residuals,
        }),
    )
}

pub fn simulate_nv(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let (h, _) = selected_hamiltonian(ctx);
    let sim = ctx.sim_config();
    let mut s = compile_with(ctx, &h, ctx.scenario.dilate.intervals)?;
    let norm = (0..s.t.len())
        .map(|i| s.dilated(i).norm())
        .fold(0.0, f64::max);
    let needed = required_intervals(norm, s.duration(), &ctx.nv, &sim);
    if needed > s.t.len() - 1 {
        s = compile_with(ctx, &h, needed)?;
    }
    let pulses = pulse_schedule(&s.t, &s.coeffs, &ctx.nv);
    let (_, psi0) = prepare_initial(s.eta0)?;
    let res = simulate(&ctx.nv, &s, &pulses, &psi0, &sim)?;
    let rows = (0..res.t.len()).map(|i| {
        let p = res.populations[i];
        vec![
            res.t[i], p[0], p[1], p[2], p[3], res.sx[i], res.sy[i], res.sz[i], res.c[i],
        ]
    });
    out.csv(
        "results.csv",
        &["t", "p1", "p2", "p3", "p4", "sx", "sy", "sz", "c"],
        rows,
    )?;
    let ideal = ideal_final_state(&s, &psi0);
    let b = bloch_vector(&projector2(&ideal));
    out.json(
        "summary.json",
        &json!({
            "config": sim,
            "nv": ctx.nv,
            "intervals": s.t.len() - 1,
            "eta0": s.eta0,
            "coherence": res.c.last(),
            "ideal_coherence": coherence_metric(b[0], b[1]),
            "deviation": deviation(&res.final_electron(), &ideal),
            "norm_drift": res.norm_drift,
        }),
    )
}

/// Counts file: raw counts per sequence plus acquisition metadata.
#[derive(Debug, Serialize, Deserialize)]
struct CountsFile {
    counts: [f64; 9],
    shots: Option<u64>,
    rates: Option<PlRates>,
    seed: Option<u64>,
}

pub fn tomo(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let t = &ctx.scenario.tomo;
    let shots = ctx.flags.shots.unwrap_or(t.shots);
    let (counts, reference) = match &t.counts_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {path}: {e}")))?;
            let file: CountsFile = serde_json::from_str(&text)
                .map_err(|e| CliError::Usage(format!("invalid counts file {path}: {e}")))?;
            let scale = file.shots.map_or(1.0, |s| s as f64);
            let counts = CountVector {
                counts: file.counts.map(|c| c / scale),
                rates: file.rates.unwrap_or(t.rates),
                shots: file.shots,
            };
            (counts, None)
        }
        None => {
            let e = eigensolve2(&bloch_hamiltonian(&ctx.params, t.k).entries);
            let target = e.vectors[t.band.pick(&e.values)];
            let psi = embed_subspace(&target);
            let exact = expected_counts_rho(&(psi * psi.adjoint()), &t.rates);
            let counts = if shots > 0 {
                sample_counts(&exact, shots, ctx.seed)?
            } else {
                exact
            };
            let scale = counts.shots.map_or(1.0, |s| s as f64);
            out.json(
                "counts.json",
                &CountsFile {
                    counts: counts.counts.map(|c| c * scale),
                    shots: counts.shots,
                    rates: Some(t.rates),
                    seed: Some(ctx.seed),
                },
            )?;
            (counts, Some(target))
        }
    };
    let rec = mle_reconstruct(&counts, t.starts, ctx.seed)?;
    let fid = reference.map(|r| fidelity(&rec.state, &r)).transpose()?;
    let PureStateParams {
        alpha,
        beta,
        gamma,
        delta,
        epsilon,
        zeta,
    } = rec.params;
    out.json(
        "reconstruction.json",
        &json!({
            "alpha": alpha, "beta": beta, "gamma": gamma,
            "delta": delta, "epsilon": epsilon, "zeta": zeta,
            "loss": rec.loss,
            "fidelity_vs_reference": fid,
        }),
    )
}

pub fn pipeline(ctx: &Context, out: &OutDir) -> Result<(), CliError> {
    let p = &ctx.scenario.pipeline;
    let mut noise = p.noise.resolve()?;
    if let Some(e) = ctx.flags.ensemble {
        noise.ensemble = e;
    }
    if let Some(s) = ctx.flags.shots {
        noise.shots = (s > 0).then_some(s);
    }
    if let Some(s) = ctx.flags.selective {
        noise.selective = s;
    }
    if let Some(r) = ctx.flags.rwa {
        noise.rwa = r;
    }
    let cfg = PipelineConfig {
        k_points: ctx.flags.grid.unwrap_or(p.k_points),
        nv: ctx.nv,
        noise,
        rates: p.rates,
        margin: p.margin,
        starts: p.starts,
        fit_samples: p.fit_samples,
        fit_window: p.fit_window,
        seed: ctx.seed,
    };
    let report = run_pipeline(&ctx.params, &cfg)?;
    out.json("report.json", &json!({ "config": cfg, "report": report }))
}
