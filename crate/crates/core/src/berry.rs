//! Biorthogonal eigenpairs and the discretized global Berry phase.
//!
//! The global Berry phase of a closed loop of tracked bands is accumulated from
//! link phases `Im ln⟨χₙ(kᵢ₊₁)|ψₙ(kᵢ)⟩`, with the seam link closing band `n`
//! onto band `σ(n)` at the first grid point.
//!
//! For non-Hermitian bands the forward link phase alone converges only to first
//! order in the step: the gauge-invariant product
//! `w = ⟨χₙ(kᵢ₊₁)|ψₙ(kᵢ)⟩⟨χₙ(kᵢ)|ψₙ(kᵢ₊₁)⟩` acquires a phase of order `δk²`
//! per link that does not cancel around the loop. Each link therefore uses
//! `Im ln⟨χₙ(kᵢ₊₁)|ψₙ(kᵢ)⟩ − ½ arg w`, the average of the forward and reversed
//! orientations, which has the same continuum limit and second-order error.

use std::f64::consts::{PI, TAU};

use serde::Serialize;

use crate::linalg::fix_phase_first;
pub use crate::linalg::left_partner;
use crate::model::BlochMatrix;
use crate::spectra::{eigensolve2, BandStructure};
use crate::{Error, Result, Vec2, C64};

/// Overlaps below this magnitude mean neighbouring grid points are too far apart.
pub const OVERLAP_FLOOR: f64 = 1e-8;

/// Right and left eigenvectors of one band, normalized so that `⟨χ|ψ⟩ = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiorthogonalPair {
    pub psi: Vec2,
    pub chi: Vec2,
    pub eigenvalue: C64,
}

/// Biorthogonal pairs of both bands of `h`, in the order returned by the eigensolver.
pub fn biorthogonal_pairs(h: &BlochMatrix) -> Result<[BiorthogonalPair; 2]> {
    let e = eigensolve2(&h.entries);
    if e.exceptional {
        return Err(Error::ExceptionalPoint {
            k: h.k,
            detail: "eigenvectors coalesce".into(),
        });
    }
    let pair = |n: usize| BiorthogonalPair {
        psi: e.vectors[n],
        chi: left_partner(&e.vectors[n], &e.vectors[1 - n]),
        eigenvalue: e.values[n],
    };
    Ok([pair(0), pair(1)])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerryResult {
    /// Accumulated phase, not reduced.
    pub q_raw: f64,
    /// `q_raw` reduced to `[0, 2π)`.
    pub q_mod_2pi: f64,
    /// Per-link contributions; the last entry of each band is the seam.
    pub terms: [Vec<f64>; 2],
    /// `(−1)^P(σ)`.
    pub parity: i32,
    /// `|Q(grid) − Q(every other grid point)|`.
    pub discretization_error: f64,
    pub n: usize,
}

/// Per-band link phases of a closed loop of right eigenvectors.
///
/// `psi[n][i]` is band `n` at the `i`-th point; `permutation[n]` names the band
/// that `n` continues into at the first point after one loop. Vectors are moved
/// into the gauge where their first component is real and non-negative, so the
/// result does not depend on the phases of the inputs.
pub fn link_phases(psi: &[Vec<Vec2>; 2], permutation: [usize; 2]) -> Result<[Vec<f64>; 2]> {
    let len = psi[0].len();
    if len < 2 || psi[1].len() != len {
        return Err(Error::InvalidInput(
            "need at least two points per band, equal for both".into(),
        ));
    }
    let gauged: Vec<[Vec2; 2]> = (0..len)
        .map(|i| {
            [
                fix_phase_first(&psi[0][i].normalize()),
                fix_phase_first(&psi[1][i].normalize()),
            ]
        })
        .collect();
    let chi: Vec<[Vec2; 2]> = gauged
        .iter()
        .map(|p| [left_partner(&p[0], &p[1]), left_partner(&p[1], &p[0])])
        .collect();

    let mut terms = [Vec::with_capacity(len), Vec::with_capacity(len)];
    for n in 0..2 {
        for i in 0..len {
            let (next, band) = if i + 1 < len {
                (i + 1, n)
            } else {
                (0, permutation[n])
            };
            let forward = chi[next][band].dotc(&gauged[i][n]);
            let backward = chi[i][n].dotc(&gauged[next][band]);
            let smallest = forward.norm().min(backward.norm());
            if smallest < OVERLAP_FLOOR {
                return Err(Error::GridTooCoarse {
                    overlap: smallest,
                    link: i,
                });
            }
            terms[n].push(forward.arg() - 0.5 * (forward * backward).arg());
        }
    }
    Ok(terms)
}

/// Global Berry phase from right eigenvectors on a closed loop.
pub fn berry_phase_from_states(psi: &[Vec<Vec2>; 2], permutation: [usize; 2]) -> Result<f64> {
    let terms = link_phases(psi, permutation)?;
    Ok(terms.iter().flatten().sum())
}

/// Global Berry phase of a tracked band structure.
pub fn global_berry_phase(structure: &BandStructure) -> Result<BerryResult> {
    let terms = link_phases(&structure.vectors, structure.permutation)?;
    let q_raw: f64 = terms.iter().flatten().sum();

    let half: [Vec<Vec2>; 2] = [0, 1].map(|n| {
        structure.vectors[n]
            .iter()
            .step_by(2)
            .copied()
            .collect::<Vec<_>>()
    });
    let discretization_error = match berry_phase_from_states(&half, structure.permutation) {
        Ok(q_half) => (q_raw - q_half).abs(),
        Err(_) => f64::INFINITY,
    };

    Ok(BerryResult {
        q_raw,
        q_mod_2pi: q_raw.rem_euclid(TAU),
        terms,
        parity: parity_check(structure),
        discretization_error,
        n: structure.len(),
    })
}

/// `(−1)^P(σ)` of the band permutation.
pub fn parity_check(structure: &BandStructure) -> i32 {
    if structure.is_swap() {
        -1
    } else {
        1
    }
}

/// Distance on the unit circle between `e^{iQ}` and the permutation parity.
pub fn parity_mismatch(q: f64, parity: i32) -> f64 {
    (C64::from_polar(1.0, q) - parity as f64).norm()
}

/// `Q / π`, convenient for reports.
pub fn in_units_of_pi(q: f64) -> f64 {
    q / PI
}
