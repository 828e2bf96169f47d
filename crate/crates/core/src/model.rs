//! The two-band non-Hermitian lattice model and its momentum-space Bloch matrices.
//!
//! With on-site couplings `Γ⁰±` and range-`n` hoppings `Γ₁ⁿ±`, `Γ₂ⁿ±` the Bloch
//! matrix is off-diagonal:
//!
//! ```text
//! H(k)₀₁ = Γ⁰⁻ + Σₙ (Γ₁ⁿ⁻ e^{ink} + Γ₂ⁿ⁺ e^{-ink})
//! H(k)₁₀ = Γ⁰⁺ + Σₙ (Γ₁ⁿ⁺ e^{-ink} + Γ₂ⁿ⁻ e^{ink})
//! ```

use std::f64::consts::TAU;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::linalg::{c, ZERO};
use crate::{Error, Mat2, Result, C64};

/// A `(minus, plus)` pair of complex couplings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub minus: C64,
    pub plus: C64,
}

impl Coupling {
    pub fn new(minus: C64, plus: C64) -> Self {
        Self { minus, plus }
    }

    fn is_finite(&self) -> bool {
        self.minus.is_finite() && self.plus.is_finite()
    }
}

/// Coupling constants of the lattice model. The range `m` is the number of hopping shells.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub gamma0: Coupling,
    /// `gamma1[n - 1]` holds `(Γ₁ⁿ⁻, Γ₁ⁿ⁺)`.
    pub gamma1: Vec<Coupling>,
    /// `gamma2[n - 1]` holds `(Γ₂ⁿ⁻, Γ₂ⁿ⁺)`.
    pub gamma2: Vec<Coupling>,
}

/// Named parameter sets for the three phases of the two-band model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    Unlink,
    Unknot,
    HopfLink,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::Unlink, Preset::Unknot, Preset::HopfLink];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Unlink => "unlink",
            Preset::Unknot => "unknot",
            Preset::HopfLink => "hopf_link",
        }
    }

    pub fn params(self) -> ModelParams {
        let im = |x: f64| c(0.0, x);
        let re = |x: f64| c(x, 0.0);
        match self {
            Preset::Unlink => ModelParams {
                gamma0: Coupling::new(re(-0.45), re(0.79)),
                gamma1: vec![Coupling::new(im(-0.30), ZERO)],
                gamma2: vec![Coupling::new(im(0.08), ZERO)],
            },
            Preset::Unknot => ModelParams {
                gamma0: Coupling::new(re(-0.21), re(0.70)),
                ..Preset::Unlink.params()
            },
            Preset::HopfLink => ModelParams {
                gamma0: Coupling::new(re(0.04), re(0.49)),
                gamma1: vec![
                    Coupling::new(im(-0.13), im(0.02)),
                    Coupling::new(im(-0.58), im(0.03)),
                ],
                gamma2: vec![
                    Coupling::new(im(0.02), im(-0.13)),
                    Coupling::new(im(0.09), im(-0.21)),
                ],
            },
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "unlink" => Ok(Preset::Unlink),
            "unknot" => Ok(Preset::Unknot),
            "hopf_link" | "hopf" => Ok(Preset::HopfLink),
            other => Err(Error::UnknownPreset(other.to_string())),
        }
    }
}

/// Look up the published coefficient set of a phase by name.
pub fn preset_params(tag: &str) -> Result<ModelParams> {
    Ok(tag.parse::<Preset>()?.params())
}

impl ModelParams {
    pub fn new(gamma0: Coupling, gamma1: Vec<Coupling>, gamma2: Vec<Coupling>) -> Result<Self> {
        let p = Self {
            gamma0,
            gamma1,
            gamma2,
        };
        p.validate()?;
        Ok(p)
    }

    /// Coupling range `m`.
    pub fn m(&self) -> usize {
        self.gamma1.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma1.len() != self.gamma2.len() {
            return Err(Error::InvalidInput(format!(
                "gamma1 has {} shells but gamma2 has {}",
                self.gamma1.len(),
                self.gamma2.len()
            )));
        }
        let finite = self.gamma0.is_finite()
            && self.gamma1.iter().all(Coupling::is_finite)
            && self.gamma2.iter().all(Coupling::is_finite);
        if !finite {
            return Err(Error::InvalidInput(
                "coupling constants must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Every coupling multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let s = |cp: &Coupling| Coupling::new(cp.minus * factor, cp.plus * factor);
        Self {
            gamma0: s(&self.gamma0),
            gamma1: self.gamma1.iter().map(s).collect(),
            gamma2: self.gamma2.iter().map(s).collect(),
        }
    }

    /// Off-diagonal entries `(H₀₁, H₁₀)` at quasi-momentum `k`.
    pub fn off_diagonal(&self, k: f64) -> (C64, C64) {
        let k = fold_k(k);
        let mut upper = self.gamma0.minus;
        let mut lower = self.gamma0.plus;
        for (idx, (g1, g2)) in self.gamma1.iter().zip(&self.gamma2).enumerate() {
            let phase = C64::from_polar(1.0, (idx + 1) as f64 * k);
            let conj = phase.conj();
            upper += g1.minus * phase + g2.plus * conj;
            lower += g1.plus * conj + g2.minus * phase;
        }
        (upper, lower)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let file: ModelFile = serde_json::from_str(s)?;
        file.try_into()
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelFile::from(self))?)
    }
}

/// Accept either a preset name or a path to a JSON parameter file.
pub fn load_model(spec: &str) -> Result<ModelParams> {
    if let Ok(p) = spec.parse::<Preset>() {
        return Ok(p.params());
    }
    let path = Path::new(spec);
    if !path.exists() {
        return Err(Error::UnknownPreset(spec.to_string()));
    }
    ModelParams::from_json_str(&std::fs::read_to_string(path)?)
}

/// Fold `k` into `[0, 2π)`.
pub fn fold_k(k: f64) -> f64 {
    let f = k.rem_euclid(TAU);
    if f >= TAU {
        0.0
    } else {
        f
    }
}

/// A Bloch matrix at a given quasi-momentum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochMatrix {
    pub k: f64,
    pub entries: Mat2,
}

pub fn bloch_hamiltonian(params: &ModelParams, k: f64) -> BlochMatrix {
    let (upper, lower) = params.off_diagonal(k);
    BlochMatrix {
        k,
        entries: Mat2::new(ZERO, upper, lower, ZERO),
    }
}

/// Anything that yields a 2×2 Bloch matrix as a function of quasi-momentum.
///
/// Implemented for [`ModelParams`] and for plain closures, so band tracking and
/// winding numbers also work for matrices with nonzero diagonals.
pub trait BlochFamily: Sync {
    fn matrix(&self, k: f64) -> Mat2;
}

impl BlochFamily for ModelParams {
    fn matrix(&self, k: f64) -> Mat2 {
        bloch_hamiltonian(self, k).entries
    }
}

impl<F> BlochFamily for F
where
    F: Fn(f64) -> Mat2 + Sync,
{
    fn matrix(&self, k: f64) -> Mat2 {
        self(k)
    }
}

type Pair = [[f64; 2]; 2];

/// On-disk layout: complex numbers as `[re, im]`, each coupling as `[minus, plus]`.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    m: usize,
    gamma0: Pair,
    gamma1: Vec<Pair>,
    gamma2: Vec<Pair>,
}

fn pair_to_coupling(p: &Pair) -> Coupling {
    Coupling::new(c(p[0][0], p[0][1]), c(p[1][0], p[1][1]))
}

fn coupling_to_pair(cp: &Coupling) -> Pair {
    [[cp.minus.re, cp.minus.im], [cp.plus.re, cp.plus.im]]
}

impl TryFrom<ModelFile> for ModelParams {
    type Error = Error;

    fn try_from(f: ModelFile) -> Result<Self> {
        if f.gamma1.len() != f.m || f.gamma2.len() != f.m {
            return Err(Error::InvalidInput(format!(
                "m = {} but gamma1/gamma2 have {}/{} entries",
                f.m,
                f.gamma1.len(),
                f.gamma2.len()
            )));
        }
        ModelParams::new(
            pair_to_coupling(&f.gamma0),
            f.gamma1.iter().map(pair_to_coupling).collect(),
            f.gamma2.iter().map(pair_to_coupling).collect(),
        )
    }
}

impl From<&ModelParams> for ModelFile {
    fn from(p: &ModelParams) -> Self {
        Self {
            m: p.m(),
            gamma0: coupling_to_pair(&p.gamma0),
            gamma1: p.gamma1.iter().map(coupling_to_pair).collect(),
            gamma2: p.gamma2.iter().map(coupling_to_pair).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn close(a: C64, b: C64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn presets_hold_published_values() {
        let p = preset_params("unlink").unwrap();
        assert_eq!(p.m(), 1);
        assert_eq!(p.gamma0, Coupling::new(c(-0.45, 0.0), c(0.79, 0.0)));
        assert_eq!(p.gamma1[0], Coupling::new(c(0.0, -0.30), ZERO));
        assert_eq!(p.gamma2[0], Coupling::new(c(0.0, 0.08), ZERO));

        let q = preset_params("unknot").unwrap();
        assert_eq!(q.gamma0, Coupling::new(c(-0.21, 0.0), c(0.70, 0.0)));
        assert_eq!(q.gamma1, p.gamma1);
        assert_eq!(q.gamma2, p.gamma2);

        let h = preset_params("hopf_link").unwrap();
        assert_eq!(h.m(), 2);
        assert_eq!(h.gamma0, Coupling::new(c(0.04, 0.0), c(0.49, 0.0)));
        // Γ₁¹⁻ = Γ₂¹⁺ = −0.13i, Γ₂¹⁻ = Γ₁¹⁺ = 0.02i
        assert_eq!(h.gamma1[0].minus, c(0.0, -0.13));
        assert_eq!(h.gamma2[0].plus, c(0.0, -0.13));
        assert_eq!(h.gamma2[0].minus, c(0.0, 0.02));
        assert_eq!(h.gamma1[0].plus, c(0.0, 0.02));
        // Γ₁²⁻ = −0.58i, Γ₂²⁺ = −0.21i, Γ₁²⁺ = 0.03i, Γ₂²⁻ = 0.09i
        assert_eq!(h.gamma1[1].minus, c(0.0, -0.58));
        assert_eq!(h.gamma2[1].plus, c(0.0, -0.21));
        assert_eq!(h.gamma1[1].plus, c(0.0, 0.03));
        assert_eq!(h.gamma2[1].minus, c(0.0, 0.09));
    }

    #[test]
    fn unknown_preset_names_valid_tags() {
        let err = preset_params("trefoil").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unlink") && msg.contains("unknot") && msg.contains("hopf_link"));
    }

    #[test]
    fn unlink_at_k0() {
        let h = bloch_hamiltonian(&Preset::Unlink.params(), 0.0).entries;
        assert!(close(h[(0, 1)], c(-0.45, -0.30)));
        assert!(close(h[(1, 0)], c(0.79, 0.08)));
        assert_eq!(h[(0, 0)], ZERO);
        assert_eq!(h[(1, 1)], ZERO);
    }

    #[test]
    fn hopf_link_at_pi() {
        // e^{±iπ} = −1, e^{±2iπ} = 1.
        let h = bloch_hamiltonian(&Preset::HopfLink.params(), PI).entries;
        let upper = c(0.04, 0.0) - c(0.0, -0.13) - c(0.0, -0.13) + c(0.0, -0.58) + c(0.0, -0.21);
        let lower = c(0.49, 0.0) - c(0.0, 0.02) - c(0.0, 0.02) + c(0.0, 0.03) + c(0.0, 0.09);
        assert!(close(h[(0, 1)], upper), "{} vs {}", h[(0, 1)], upper);
        assert!(close(h[(1, 0)], lower));
    }

    #[test]
    fn general_range_supported() {
        let mut p = Preset::HopfLink.params();
        p.gamma1.push(Coupling::new(c(0.0, 0.1), ZERO));
        p.gamma2.push(Coupling::new(ZERO, c(0.2, 0.0)));
        assert_eq!(p.m(), 3);
        let k = 0.3;
        let base = bloch_hamiltonian(&Preset::HopfLink.params(), k).entries;
        let h = bloch_hamiltonian(&p, k).entries;
        let extra = c(0.0, 0.1) * C64::from_polar(1.0, 3.0 * k)
            + c(0.2, 0.0) * C64::from_polar(1.0, -3.0 * k);
        assert!(close(h[(0, 1)] - base[(0, 1)], extra));
        assert!(close(h[(1, 0)], base[(1, 0)]));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let p = Preset::HopfLink.params();
        let s = p.to_json_string().unwrap();
        assert_eq!(ModelParams::from_json_str(&s).unwrap(), p);

        let bad = r#"{"m": 2, "gamma0": [[0,0],[1,0]], "gamma1": [[[0,0],[0,0]]], "gamma2": []}"#;
        assert!(matches!(
            ModelParams::from_json_str(bad),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn non_finite_rejected() {
        let r = ModelParams::new(Coupling::new(c(f64::NAN, 0.0), ZERO), vec![], vec![]);
        assert!(r.is_err());
    }

    #[test]
    fn hermitian_limit_has_real_spectrum() {
        let g = c(0.4, 0.3);
        let p = ModelParams::new(Coupling::new(g, g.conj()), vec![], vec![]).unwrap();
        for i in 0..32 {
            let h = bloch_hamiltonian(&p, i as f64 * 0.2).entries;
            let e2 = h[(0, 1)] * h[(1, 0)];
            assert!(e2.im.abs() < 1e-14 && e2.re >= 0.0);
        }
    }

    fn arb_c64() -> impl Strategy<Value = C64> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b))
    }

    fn arb_params() -> impl Strategy<Value = ModelParams> {
        (1usize..4).prop_flat_map(|m| {
            (
                arb_c64(),
                arb_c64(),
                proptest::collection::vec((arb_c64(), arb_c64(), arb_c64(), arb_c64()), m),
            )
                .prop_map(|(a, b, shells)| ModelParams {
                    gamma0: Coupling::new(a, b),
                    gamma1: shells.iter().map(|s| Coupling::new(s.0, s.1)).collect(),
                    gamma2: shells.iter().map(|s| Coupling::new(s.2, s.3)).collect(),
                })
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn periodic_in_k(p in arb_params(), k in -10.0..10.0f64) {
            let a = bloch_hamiltonian(&p, k).entries;
            let b = bloch_hamiltonian(&p, k + TAU).entries;
            prop_assert!((a - b).norm() < 1e-12);
        }

        #[test]
        fn linear_in_couplings(p in arb_params(), k in 0.0..TAU, lam in -3.0..3.0f64) {
            let a = bloch_hamiltonian(&p, k).entries * C64::from(lam);
            let b = bloch_hamiltonian(&p.scaled(lam), k).entries;
            prop_assert!((a - b).norm() < 1e-12);
        }
    }
}
