//! Band structures, continuation tracking and the braid winding number.

use std::f64::consts::{PI, TAU};
use std::fmt;

use serde::{Serialize, Serializer};

use crate::linalg::{fix_phase_largest, left_partner, ONE, ZERO};
use crate::model::BlochFamily;
use crate::{Error, Mat2, Result, Vec2, C64};

/// Default separability tolerance on `|E₁ − E₂|`.
pub const GAP_TOLERANCE: f64 = 1e-8;

/// Default grid size for band structures and winding numbers.
pub const DEFAULT_GRID: usize = 1024;

const MAX_REFINE_DEPTH: usize = 40;

/// Refinement bound on `|w − 1|` for the gauge-invariant link product
/// `w = ⟨χₙ(kᵢ₊₁)|ψₙ(kᵢ)⟩⟨χₙ(kᵢ)|ψₙ(kᵢ₊₁)⟩` of neighbouring stored points,
/// which measures how far the biorthogonal eigenvectors turn. The bound
/// tightens with the nominal step so the grid keeps converging as `N` grows.
const MAX_VECTOR_STEP: f64 = 1e-3;
const TURN_PER_STEP: f64 = 0.1;
const MAX_WINDING_GRID: usize = 1 << 24;

/// Eigen-decomposition of a 2×2 matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigen2 {
    pub values: [C64; 2],
    /// Unit right eigenvectors with the largest-magnitude component real positive.
    pub vectors: [Vec2; 2],
    /// Set when the matrix is defective (both roots coincide, one eigenvector).
    pub exceptional: bool,
}

/// Closed-form eigenvalues and right eigenvectors of a 2×2 complex matrix.
pub fn eigensolve2(h: &Mat2) -> Eigen2 {
    let (a, b, cc, d) = (h[(0, 0)], h[(0, 1)], h[(1, 0)], h[(1, 1)]);
    let center = (a + d) * 0.5;
    let half = (a - d) * 0.5;
    let disc = half * half + b * cc;
    let root = disc.sqrt();
    let values = [center + root, center - root];

    let scale = h.norm().max(f64::MIN_POSITIVE);
    let coincide = root.norm() <= 1e-10 * scale;
    let off = b.norm().max(cc.norm()).max(half.norm());
    let scalar = off <= 1e-14 * scale;

    if scalar {
        let e0 = Vec2::new(ONE, ZERO);
        let e1 = Vec2::new(ZERO, ONE);
        return Eigen2 {
            values,
            vectors: [e0, e1],
            exceptional: false,
        };
    }

    let vector = |e: C64| -> Vec2 {
        let u = Vec2::new(b, e - a);
        let w = Vec2::new(e - d, cc);
        let v = if u.norm() >= w.norm() { u } else { w };
        fix_phase_largest(&v.normalize())
    };
    Eigen2 {
        values,
        vectors: [vector(values[0]), vector(values[1])],
        exceptional: coincide,
    }
}

/// Continuation-tracked bands over a closed k-loop.
#[derive(Debug, Clone)]
pub struct BandStructure {
    /// Ordered quasi-momenta covering `[k₀, k₀ + 2π)`; refinement may add points.
    pub k_grid: Vec<f64>,
    pub bands: [Vec<C64>; 2],
    pub vectors: [Vec<Vec2>; 2],
    /// `permutation[n]` is the label at `k₀` that band `n` reaches after one loop.
    pub permutation: [usize; 2],
    pub min_gap: f64,
}

impl BandStructure {
    pub fn len(&self) -> usize {
        self.k_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_grid.is_empty()
    }

    pub fn is_swap(&self) -> bool {
        self.permutation == [1, 0]
    }
}

struct Tracker<'a, F: ?Sized> {
    family: &'a F,
    tolerance: f64,
    max_turn: f64,
    k: Vec<f64>,
    bands: [Vec<C64>; 2],
    vectors: [Vec<Vec2>; 2],
    min_gap: f64,
}

#[derive(Clone, Copy)]
struct Point {
    values: [C64; 2],
    vectors: [Vec2; 2],
}

impl<'a, F: BlochFamily + ?Sized> Tracker<'a, F> {
    fn eigen_at(&mut self, k: f64) -> Result<Eigen2> {
        let e = eigensolve2(&self.family.matrix(k));
        let gap = (e.values[0] - e.values[1]).norm();
        self.min_gap = self.min_gap.min(gap);
        if gap < self.tolerance {
            return Err(Error::BandsInseparable {
                min_gap: gap,
                tolerance: self.tolerance,
            });
        }
        Ok(e)
    }

    fn push(&mut self, k: f64, p: &Point) {
        self.k.push(k);
        for n in 0..2 {
            self.bands[n].push(p.values[n]);
            self.vectors[n].push(p.vectors[n]);
        }
    }

    /// Continue the tracked pair from `ka` to `kb`, storing intermediate points
    /// (and `kb` itself if `store_end`).
    fn advance(
        &mut self,
        ka: f64,
        pa: Point,
        kb: f64,
        store_end: bool,
        depth: usize,
    ) -> Result<Point> {
        let e = self.eigen_at(kb)?;
        let direct = (e.values[0] - pa.values[0]).norm() + (e.values[1] - pa.values[1]).norm();
        let crossed = (e.values[1] - pa.values[0]).norm() + (e.values[0] - pa.values[1]).norm();
        let order = if direct <= crossed { [0, 1] } else { [1, 0] };
        let pb = Point {
            values: [e.values[order[0]], e.values[order[1]]],
            vectors: [e.vectors[order[0]], e.vectors[order[1]]],
        };

        let gap = (pa.values[0] - pa.values[1])
            .norm()
            .min((pb.values[0] - pb.values[1]).norm());
        let step = (0..2)
            .map(|n| (pb.values[n] - pa.values[n]).norm())
            .fold(0.0, f64::max);
        let nearest_ok = (0..2).all(|n| {
            (pb.values[n] - pa.values[n]).norm() <= (pb.values[1 - n] - pa.values[n]).norm()
        });
        let turn = (0..2)
            .map(|n| {
                let chi_a = left_partner(&pa.vectors[n], &pa.vectors[1 - n]);
                let chi_b = left_partner(&pb.vectors[n], &pb.vectors[1 - n]);
                (chi_b.dotc(&pa.vectors[n]) * chi_a.dotc(&pb.vectors[n]) - 1.0).norm()
            })
            .fold(0.0, f64::max);
        if step > 0.5 * gap || !nearest_ok || turn > self.max_turn {
            if depth >= MAX_REFINE_DEPTH {
                // Steps that cannot be resolved by bisection only occur next to a
                // band touching, where eigenvalues move like the square root of δk.
                return Err(Error::BandsInseparable {
                    min_gap: gap,
                    tolerance: self.tolerance,
                });
            }
            let mid = 0.5 * (ka + kb);
            let pm = self.advance(ka, pa, mid, true, depth + 1)?;
            return self.advance(mid, pm, kb, store_end, depth + 1);
        }
        if store_end {
            self.push(kb, &pb);
        }
        Ok(pb)
    }
}

/// Track both bands of `family` over `N` uniform points starting at `k₀ = 0`.
///
/// An interval is bisected whenever an eigenvalue moves by more than half the
/// local gap or the eigenvectors change too much between neighbours, so the
/// stored grid can be finer than `N` where the bands approach each other.
pub fn band_structure<F: BlochFamily + ?Sized>(family: &F, n: usize) -> Result<BandStructure> {
    band_structure_from(family, n, 0.0, GAP_TOLERANCE)
}

/// Track both bands over the uniform grid `k₀ + 2πi/N`, `i = 0..N`.
pub fn band_structure_from<F: BlochFamily + ?Sized>(
    family: &F,
    n: usize,
    k0: f64,
    tolerance: f64,
) -> Result<BandStructure> {
    if n < 16 {
        return Err(Error::InvalidInput(format!(
            "grid size {n} below the minimum of 16"
        )));
    }
    let mut t = Tracker {
        family,
        tolerance,
        max_turn: MAX_VECTOR_STEP.min(TURN_PER_STEP * TAU / n as f64),
        k: Vec::with_capacity(n),
        bands: [Vec::with_capacity(n), Vec::with_capacity(n)],
        vectors: [Vec::with_capacity(n), Vec::with_capacity(n)],
        min_gap: f64::INFINITY,
    };
    let e0 = t.eigen_at(k0)?;
    let first = Point {
        values: e0.values,
        vectors: e0.vectors,
    };
    t.push(k0, &first);

    let step = TAU / n as f64;
    let mut p = first;
    for i in 1..n {
        let ka = k0 + (i - 1) as f64 * step;
        p = t.advance(ka, p, k0 + i as f64 * step, true, 0)?;
    }
    let end = t.advance(k0 + (n - 1) as f64 * step, p, k0 + TAU, false, 0)?;

    // Relabel across the seam: which starting label does each tracked band reach?
    let same = (end.values[0] - first.values[0]).norm() + (end.values[1] - first.values[1]).norm();
    let cross = (end.values[0] - first.values[1]).norm() + (end.values[1] - first.values[0]).norm();
    let permutation = if same <= cross { [0, 1] } else { [1, 0] };

    Ok(BandStructure {
        k_grid: t.k,
        bands: t.bands,
        vectors: t.vectors,
        permutation,
        min_gap: t.min_gap,
    })
}

/// `f(k) = det(H − ½ tr H · I)`, whose phase winding defines ν.
pub fn braid_discriminant(h: &Mat2) -> C64 {
    let center = h.trace() * 0.5;
    (h - Mat2::identity() * center).determinant()
}

/// Winding number together with its diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Winding {
    pub nu: i64,
    /// Accumulated phase divided by 2π, before rounding.
    pub raw: f64,
    pub residue: f64,
    /// Grid size actually used after refinement.
    pub grid_size: usize,
}

/// Braid winding number from the unwrapped phase of `det(H − ½ tr H)` over one loop.
///
/// The grid starts at `N` points and is doubled until every phase increment is
/// below π/2.
pub fn winding_number<F: BlochFamily + ?Sized>(family: &F, n: usize) -> Result<Winding> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("grid size {n} too small")));
    }
    let mut size = n;
    'refine: loop {
        let step = TAU / size as f64;
        let first = braid_discriminant(&family.matrix(0.0));
        check_nonzero(first, 0.0)?;
        let mut prev = first;
        let mut total = 0.0;
        for i in 1..=size {
            let k = i as f64 * step;
            let f = if i == size {
                first
            } else {
                braid_discriminant(&family.matrix(k))
            };
            check_nonzero(f, k)?;
            let inc = (f / prev).arg();
            if inc.abs() >= 0.5 * PI {
                if size >= MAX_WINDING_GRID {
                    return Err(Error::RefinementFailed(format!(
                        "phase increment {inc:.3} at k = {k:.6} with {size} points"
                    )));
                }
                size *= 2;
                continue 'refine;
            }
            total += inc;
            prev = f;
        }
        let raw = total / TAU;
        let nu = raw.round();
        let residue = (raw - nu).abs();
        if residue >= 0.01 {
            return Err(Error::NumericalConsistency(format!(
                "winding residue {residue:.3e} exceeds 0.01"
            )));
        }
        return Ok(Winding {
            nu: nu as i64,
            raw,
            residue,
            grid_size: size,
        });
    }
}

fn check_nonzero(f: C64, k: f64) -> Result<()> {
    if f.norm() < 1e-12 {
        return Err(Error::ExceptionalPoint {
            k,
            detail: format!("|det(H - tr/2)| = {:.3e}", f.norm()),
        });
    }
    Ok(())
}

/// Knot/braid name attached to a winding number.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseTag {
    Unlink,
    Unknot,
    HopfLink,
    Braid(i64),
}

impl PhaseTag {
    pub fn from_nu(nu: i64) -> Self {
        match nu {
            0 => PhaseTag::Unlink,
            1 => PhaseTag::Unknot,
            2 => PhaseTag::HopfLink,
            other => PhaseTag::Braid(other),
        }
    }
}

impl fmt::Display for PhaseTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhaseTag::Unlink => f.write_str("unlink"),
            PhaseTag::Unknot => f.write_str("unknot"),
            PhaseTag::HopfLink => f.write_str("hopf_link"),
            PhaseTag::Braid(nu) => write!(f, "braid({nu})"),
        }
    }
}

impl Serialize for PhaseTag {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseLabel {
    pub nu: i64,
    pub tag: PhaseTag,
    pub min_gap: f64,
    pub grid_size: usize,
}

/// Classify the knot phase on an `N`-point grid.
pub fn classify_on<F: BlochFamily + ?Sized>(family: &F, n: usize) -> Result<PhaseLabel> {
    let bands = band_structure(family, n)?;
    let w = winding_number(family, n)?;
    Ok(PhaseLabel {
        nu: w.nu,
        tag: PhaseTag::from_nu(w.nu),
        min_gap: bands.min_gap,
        grid_size: w.grid_size,
    })
}

pub fn classify<F: BlochFamily + ?Sized>(family: &F) -> Result<PhaseLabel> {
    classify_on(family, DEFAULT_GRID)
}
