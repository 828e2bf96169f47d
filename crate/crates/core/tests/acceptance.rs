//! Acceptance run: one pass/fail line per criterion.

use std::f64::consts::{PI, TAU};
use std::time::{Duration, Instant};

use knotspin::berry::{global_berry_phase, parity_mismatch};
use knotspin::dilation::{
    compile, evolve_sampled, neutralize_gain, prepare_initial, project_minus, CompileOptions,
    DEFAULT_LAMBDA, DEFAULT_MARGIN,
};
use knotspin::evolve::{
    fit_k, fit_k_in, integrate_nh, k_distance, steady_eigenstate, synthetic_samples, BandSelector,
    LambdaScale,
};
use knotspin::linalg::{projector2, r, trace_distance2, ONE, ZERO};
use knotspin::model::{bloch_hamiltonian, Coupling, ModelParams, Preset};
use knotspin::nvsim::{Dephasing, NvParams, SimConfig};
use knotspin::pipeline::{
    noise_study, offset_grid, run_band, run_pipeline, NoiseConfig, PipelineConfig,
};
use knotspin::spectra::{band_structure, eigensolve2, winding_number};
use knotspin::tomo::{
    embed_subspace, expected_counts_rho, fidelity, mle_reconstruct, sample_counts, PlRates,
    DEFAULT_SHOTS,
};
use knotspin::{Mat4, Vec2, C64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let elapsed = start.elapsed();
    let in_time = limit.map_or(true, |l| elapsed <= l);
    let pass = out.pass && in_time;
    let budget = limit.map_or(String::new(), |l| format!(" / {:.0}s", l.as_secs_f64()));
    println!(
        "[{}] {id:>2}. {name}: {} ({:.1}s{budget})",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn ideal_q(p: Preset) -> f64 {
    match p {
        Preset::Unlink => 0.0,
        Preset::Unknot => PI,
        Preset::HopfLink => TAU,
    }
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    let mut c = || C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let gamma0 = Coupling::new(c(), c());
    let shells = 1 + (c().re > 0.0) as usize;
    let mut gamma1 = Vec::new();
    let mut gamma2 = Vec::new();
    for _ in 0..shells {
        gamma1.push(Coupling::new(c(), c()));
        gamma2.push(Coupling::new(c(), c()));
    }
    ModelParams {
        gamma0,
        gamma1,
        gamma2,
    }
}

fn random_ks(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_range(0.0..TAU)).collect()
}

fn winding() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (p, want) in Preset::ALL.iter().zip([0, 1, 2]) {
        let start = Instant::now();
        match winding_number(&p.params(), 1024) {
            Ok(w) => {
                let t = start.elapsed();
                ok &= w.nu == want && w.residue < 0.01 && t < Duration::from_secs(1);
                parts.push(format!("{p} nu={} residue={:.1e}", w.nu, w.residue));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{p} error: {e}"));
            }
        }
    }
    Outcome {
        pass: ok,
        detail: parts.join(", "),
    }
}

fn berry() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in Preset::ALL {
        let start = Instant::now();
        let res = band_structure(&p.params(), 2048).and_then(|b| global_berry_phase(&b));
        match res {
            Ok(b) => {
                let err = (b.q_raw - ideal_q(p)).abs() / PI;
                ok &= err < 1e-4 && start.elapsed() < Duration::from_secs(5);
                parts.push(format!("{p} Q/pi={:.6}", b.q_raw / PI));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{p} error: {e}"));
            }
        }
    }
    Outcome {
        pass: ok,
        detail: parts.join(", "),
    }
}

fn parity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut accepted = 0;
    let mut drawn = 0;
    while accepted < 100 && drawn < 10_000 {
        drawn += 1;
        let p = random_params(&mut rng);
        let Ok(bs) = band_structure(&p, 2048) else {
            continue;
        };
        if bs.min_gap <= 0.05 {
            continue;
        }
        accepted += 1;
        match global_berry_phase(&bs) {
            Ok(res) => worst = worst.max(parity_mismatch(res.q_raw, res.parity)),
            Err(_) => worst = f64::INFINITY,
        }
    }
    Outcome {
        pass: accepted == 100 && worst < 1e-3,
        detail: format!("{accepted} gapped sets (min gap > 0.05) of {drawn} drawn, max |e^iQ - (-1)^P| = {worst:.2e}"),
    }
}

fn steady_state() -> Outcome {
    let mut worst: f64 = 1.0;
    let mut failures = 0;
    for (i, p) in Preset::ALL.iter().enumerate() {
        for k in random_ks(40 + i as u64, 10) {
            let h = bloch_hamiltonian(&p.params(), k).entries;
            match steady_eigenstate(&h, BandSelector::Dominant) {
                Ok(s) => worst = worst.min(s.fidelity),
                Err(_) => failures += 1,
            }
        }
    }
    Outcome {
        pass: failures == 0 && worst > 1.0 - 1e-6,
        detail: format!("min fidelity 1 - {:.1e}, {failures} failures", 1.0 - worst),
    }
}

fn dilation_equivalence(schedules: &mut Vec<(f64, f64)>) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (i, p) in Preset::ALL.iter().enumerate() {
        for k in random_ks(50 + i as u64, 10) {
            let raw = bloch_hamiltonian(&p.params(), k).entries * r(DEFAULT_LAMBDA);
            let (h, _) = neutralize_gain(&raw);
            let duration = 8.0 / DEFAULT_LAMBDA;
            let s = match compile(
                |_| h,
                duration,
                &CompileOptions {
                    intervals: 2000,
                    ..Default::default()
                },
            ) {
                Ok(s) => s,
                Err(e) => {
                    failures.push(format!("{p} k={k:.3}: {e}"));
                    continue;
                }
            };
            schedules.push((s.residuals.metric_hermiticity, s.residuals.min_margin));
            let hs: Vec<Mat4> = (0..s.t.len()).map(|i| s.dilated(i)).collect();
            let Ok((_, psi0)) = prepare_initial(s.eta0) else {
                failures.push(format!("{p} k={k:.3}: initial state"));
                continue;
            };
            let states = evolve_sampled(&hs, &s.t, &psi0);
            let nh = match integrate_nh(&raw, &Vec2::new(ONE, ZERO), duration, duration / 1000.0) {
                Ok(t) => t,
                Err(e) => {
                    failures.push(format!("{p} k={k:.3}: {e}"));
                    continue;
                }
            };
            for (st, direct) in states.iter().zip(&nh.states) {
                let sys = project_minus(st);
                let sys = sys / r(sys.norm());
                worst = worst.max(trace_distance2(&projector2(&sys), &projector2(direct)));
            }
        }
    }
    Outcome {
        pass: failures.is_empty() && worst < 1e-4,
        detail: format!("30 schedules, max trace distance {worst:.1e}, failures {failures:?}"),
    }
}

fn metric_integrity(schedules: &[(f64, f64)]) -> Outcome {
    let herm = schedules.iter().map(|s| s.0).fold(0.0, f64::max);
    let margin = schedules.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    Outcome {
        pass: !schedules.is_empty() && herm < 1e-10 && margin >= DEFAULT_MARGIN / 2.0,
        detail: format!(
            "{} schedules, max |M - M^dag| = {herm:.1e}, min eig(M - I) = {margin:.4} (bound {:.3})",
            schedules.len(),
            DEFAULT_MARGIN / 2.0
        ),
    }
}

fn hardware_noise() -> Outcome {
    let params = Preset::HopfLink.params();
    let k = 0.85 * PI;
    let sim = SimConfig {
        dephasing: Dephasing::Quasistatic,
        ensemble: 1000,
        selective: false,
        rwa: true,
        seed: 7,
    };
    let run = |nv: NvParams, offset: bool| noise_study(&params, k, &nv, &sim, offset);
    let results = (
        run(NvParams::purified(), true),
        run(NvParams::natural_abundance(), true),
        run(NvParams::purified(), false),
        run(NvParams::natural_abundance(), false),
    );
    match results {
        (Ok(pur), Ok(nat), Ok(pur0), Ok(nat0)) => {
            let dev_ok = (pur.deviation - 0.03).abs() <= 0.02;
            let c_ok = (nat.coherence - 0.65).abs() <= 0.08;
            let ideal_ok = (nat.ideal_coherence - 0.97).abs() <= 0.02;
            Outcome {
                pass: dev_ok && c_ok && ideal_ok,
                detail: format!(
                    "purified deviation {:.4} (0.03 +- 0.02), natural c {:.3} (0.65 +- 0.08), ideal c {:.3} (0.97 +- 0.02); \
                     without gain offset: deviation {:.4}, c {:.3}",
                    pur.deviation, nat.coherence, nat.ideal_coherence, pur0.deviation, nat0.coherence
                ),
            }
        }
        (a, b, c, d) => Outcome {
            pass: false,
            detail: format!(
                "errors: {:?}",
                [a.err(), b.err(), c.err(), d.err()].map(|e| e.map(|e| e.to_string()))
            ),
        },
    }
}

fn tomography() -> Outcome {
    let rates = PlRates::default();
    let mut noiseless_worst: f64 = 1.0;
    let mut medians = Vec::new();
    for (pi, p) in Preset::ALL.iter().enumerate() {
        let mut fids = Vec::new();
        for (i, k) in offset_grid(20).into_iter().enumerate() {
            let e = eigensolve2(&bloch_hamiltonian(&p.params(), k).entries);
            for (n, v) in e.vectors.iter().enumerate() {
                let psi = embed_subspace(v);
                let rho = psi * psi.adjoint();
                let exact = expected_counts_rho(&rho, &rates);
                let seed = (pi * 1000 + i * 2 + n) as u64;
                if let Ok(rec) = mle_reconstruct(&exact, 16, seed) {
                    noiseless_worst = noiseless_worst.min(fidelity(&rec.state, v).unwrap_or(0.0));
                } else {
                    noiseless_worst = 0.0;
                }
                let noisy = sample_counts(&exact, DEFAULT_SHOTS, seed)
                    .and_then(|c| mle_reconstruct(&c, 16, seed));
                fids.push(noisy.and_then(|rec| fidelity(&rec.state, v)).unwrap_or(0.0));
            }
        }
        fids.sort_by(f64::total_cmp);
        medians.push((*p, fids[fids.len() / 2]));
    }
    let cfg = PipelineConfig::default();
    let steady = run_band(
        &Preset::HopfLink.params(),
        0.6 * PI,
        BandSelector::Dominant,
        &cfg,
        11,
    );
    let (steady_ok, steady_detail) = match steady {
        Ok(b) => (
            (b.fidelity - 0.99).abs() <= 0.01,
            format!("{:.4}", b.fidelity),
        ),
        Err(e) => (false, e.to_string()),
    };
    let med_ok = medians.iter().all(|m| m.1 >= 0.97);
    Outcome {
        pass: noiseless_worst > 1.0 - 1e-6 && med_ok && steady_ok,
        detail: format!(
            "noiseless min fidelity 1 - {:.1e}; median fidelity at {DEFAULT_SHOTS} shots: {}; hopf k=0.6pi steady state through hardware noise: {steady_detail}",
            1.0 - noiseless_worst,
            medians.iter().map(|(p, m)| format!("{p} {m:.4}")).collect::<Vec<_>>().join(", ")
        ),
    }
}

fn k_fitting() -> Outcome {
    let params = Preset::HopfLink.params();
    let lambda = LambdaScale::new(1.0).expect("positive");
    let k_true = 0.6 * PI;
    let mut windowed = 0;
    let mut full = 0;
    for trial in 0..100u64 {
        let noisy = synthetic_samples(&params, lambda, k_true, 8.0, 20, 0.03, 1000 + trial)
            .expect("valid noise");
        if let Ok(f) = fit_k_in(&noisy, &params, lambda, (0.1 * PI, 1.1 * PI)) {
            windowed += (k_distance(f.k_fit, k_true) <= 0.07 * PI) as usize;
        }
        if let Ok(f) = fit_k(&noisy, &params, lambda) {
            full += (k_distance(f.k_fit, k_true) <= 0.07 * PI) as usize;
        }
    }
    Outcome {
        pass: windowed >= 95,
        detail: format!("{windowed}/100 within 0.07pi (search window [0.1pi, 1.1pi]); full-zone search {full}/100"),
    }
}

fn end_to_end() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for p in Preset::ALL {
        let cfg = PipelineConfig {
            noise: NoiseConfig::experiment_scale(),
            seed: 5,
            ..Default::default()
        };
        match run_pipeline(&p.params(), &cfg) {
            Ok(rep) => {
                let q = rep.q_raw;
                let good = q.is_some_and(|q| (q - ideal_q(p)).abs() <= 0.05 * PI);
                ok &= good;
                let failed: usize = rep.points.iter().map(|x| x.errors.len()).sum();
                parts.push(format!(
                    "{p} Q/pi={} nu={:?} min F={:.4} ({failed} stage errors)",
                    q.map_or("n/a".into(), |q| format!("{:.4}", q / PI)),
                    rep.nu,
                    rep.min_fidelity.unwrap_or(f64::NAN)
                ));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{p} error: {e}"));
            }
        }
    }
    Outcome {
        pass: ok,
        detail: parts.join(", "),
    }
}

fn main() {
    let secs = |s| Some(Duration::from_secs(s));
    let mut schedules = Vec::new();
    let results = [
        report(1, "winding numbers", Some(Duration::from_secs(3)), winding),
        report(2, "global Berry phase", secs(15), berry),
        report(3, "parity identity", secs(120), parity),
        report(4, "steady-state extraction", secs(30), steady_state),
        report(5, "dilation equivalence", secs(120), || {
            dilation_equivalence(&mut schedules)
        }),
        report(6, "metric integrity", None, || metric_integrity(&schedules)),
        report(
            7,
            "hardware noise (purified / natural abundance)",
            secs(600),
            hardware_noise,
        ),
        report(8, "tomography", secs(300), tomography),
        report(9, "k fitting", None, k_fitting),
        report(10, "end-to-end pipeline", secs(900), end_to_end),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
}
