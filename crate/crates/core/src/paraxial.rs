//! Transverse-mode bookkeeping and the phase-matching condition.
//!
//! In the paraxial limit without diffraction every transverse wavevector `k`
//! obeys the same 1-D equations, so a 3-D run is a relabeling of one 1-D
//! map. The labels are traced through the sequence:
//!
//! - inverted medium: field `k` couples to atoms labeled `-k`;
//! - rephasing pi pulse with wavevector `k_pi`: atom label `q -> q + 2 k_pi`;
//! - absorbing medium: field `k` couples to atoms labeled `k`.
//!
//! ASE in mode `k` is therefore correlated with RASE in mode `2 k_pi - k`.
//! Wavevectors live on an integer lattice so the label arithmetic is exact.
//! The phase of the first pi pulse drops out and is not modeled.

use std::collections::HashMap;

use ndarray::{Array2, Array4};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlators::{cauchy_schwartz_r, second_moments, MomentSet, ScanSpec};
use crate::kernel::compose_rase;
use crate::model::{build_grid, PhysicalParams};
use crate::{Error, Result};

pub type KIndex = [i64; 2];

/// Largest number of transverse modes in a correlation tensor.
pub const MAX_TRANSVERSE_MODES: usize = 1024;

/// Field modes on an integer wavevector lattice with spacing `k_unit`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransverseGrid {
    pub k_bins: Vec<KIndex>,
    /// Lattice spacing (1/length).
    pub k_unit: f64,
    pub k_pi: KIndex,
}

impl TransverseGrid {
    /// Square `(2 n + 1)^2` lattice centered on `k_pi`, which is closed under
    /// `k -> 2 k_pi - k`.
    pub fn centered(n: i64, k_unit: f64, k_pi: KIndex) -> Self {
        let mut k_bins = Vec::new();
        for dx in -n..=n {
            for dy in -n..=n {
                k_bins.push([k_pi[0] + dx, k_pi[1] + dy]);
            }
        }
        TransverseGrid { k_bins, k_unit, k_pi }
    }

    pub fn len(&self) -> usize {
        self.k_bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k_bins.is_empty()
    }

    pub fn index_of(&self, k: KIndex) -> Option<usize> {
        self.k_bins.iter().position(|&q| q == k)
    }

    /// Wavevector of a lattice point in physical units.
    pub fn wavevector(&self, k: KIndex) -> [f64; 2] {
        [k[0] as f64 * self.k_unit, k[1] as f64 * self.k_unit]
    }
}

/// Atom label coupled to field mode `k` in the inverted medium.
pub fn excited_coupling(k: KIndex) -> KIndex {
    [-k[0], -k[1]]
}

/// Atom label after a pi pulse with transverse wavevector `k_pi`.
pub fn pi_shift(q: KIndex, k_pi: KIndex) -> KIndex {
    [q[0] + 2 * k_pi[0], q[1] + 2 * k_pi[1]]
}

/// Field mode coupled to atom label `q` in the absorbing medium.
pub fn ground_coupling(q: KIndex) -> KIndex {
    q
}

/// RASE mode correlated with ASE mode `k`.
pub fn partner(k: KIndex, k_pi: KIndex) -> KIndex {
    ground_coupling(pi_shift(excited_coupling(k), k_pi))
}

/// ASE/RASE mode pairs as indices into the transverse grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModePairing {
    pub pairs: Vec<(usize, usize)>,
    pub unmatched: Vec<usize>,
}

impl ModePairing {
    /// Pairs every mode whose partner is on the grid; others are listed as
    /// unmatched.
    pub fn partial(grid: &TransverseGrid) -> Self {
        let lookup: HashMap<KIndex, usize> = grid.k_bins.iter().enumerate().map(|(i, &k)| (k, i)).collect();
        let mut pairs = Vec::new();
        let mut unmatched = Vec::new();
        for (i, &k) in grid.k_bins.iter().enumerate() {
            match lookup.get(&partner(k, grid.k_pi)) {
                Some(&j) => pairs.push((i, j)),
                None => unmatched.push(i),
            }
        }
        ModePairing { pairs, unmatched }
    }

    pub fn partner_of(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == i).map(|p| p.1)
    }
}

/// Pairing of a grid closed under `k -> 2 k_pi - k`.
pub fn build_pairing(grid: &TransverseGrid) -> Result<ModePairing> {
    let p = ModePairing::partial(grid);
    if !p.unmatched.is_empty() {
        return Err(Error::NotClosed(p.unmatched.len()));
    }
    Ok(p)
}

/// Source of a 3-D input column block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Label {
    Field(KIndex),
    Atoms(KIndex),
}

/// A 3-D output row: segments of the 1-D row, each assigned to a label.
struct LabeledRow<'a> {
    particle: &'a [C64],
    conjugate: &'a [C64],
    segments: Vec<(Label, std::ops::Range<usize>)>,
}

/// `(sum C1 S2, sum conj(S1) S2)` over inputs the two rows share.
fn shared_moments(r1: &LabeledRow, r2: &LabeledRow) -> (C64, C64) {
    let mut m = C64::new(0.0, 0.0);
    let mut g = C64::new(0.0, 0.0);
    for (label, range1) in &r1.segments {
        for (_, range2) in r2.segments.iter().filter(|(l, _)| l == label) {
            let lo = range1.start.max(range2.start);
            let hi = range1.end.min(range2.end);
            for x in lo..hi {
                m += r1.particle[x] * r2.conjugate[x];
                g += r1.conjugate[x].conj() * r2.conjugate[x];
            }
        }
    }
    (m, g)
}

/// Per-pair Cauchy-Schwartz result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub k_ase: KIndex,
    pub k_rase: KIndex,
    pub anomalous: f64,
    pub r: f64,
}

/// Anomalous correlations between ASE bins (`t < 0`) and RASE bins (`t > 0`)
/// over all pairs of transverse modes.
#[derive(Clone, Debug)]
pub struct KSpaceCorrelations {
    pub grid: TransverseGrid,
    pub pairing: ModePairing,
    pub ase_bins: Vec<usize>,
    pub rase_bins: Vec<usize>,
    /// `<a(k1, t1) a(k2, t2)>` indexed `[k1, t1, k2, t2]`.
    pub anomalous: Array4<C64>,
    /// Mirror-bin report per pair.
    pub pairs: Vec<PairReport>,
    /// Mirror-bin ratio of the 1-D run.
    pub scalar_r: f64,
    /// Largest `|m|` on an entry off the pairing.
    pub max_off_pairing: f64,
}

/// Builds the 3-D RASE output map by relabeling one 1-D map and evaluates
/// the cross-mode anomalous correlations.
pub fn kspace_rase_correlations(
    params: &PhysicalParams,
    grid: &TransverseGrid,
    spec: &ScanSpec,
) -> Result<KSpaceCorrelations> {
    let pairing = build_pairing(grid)?;
    if grid.len() > MAX_TRANSVERSE_MODES {
        return Err(Error::CapExceeded(format!(
            "{} transverse modes exceed {MAX_TRANSVERSE_MODES}",
            grid.len()
        )));
    }
    let alpha_l = params.alpha_l();
    let grid_1d = build_grid(params, &spec.grid_spec())?;
    let map = compose_rase(&grid_1d, params, grid_1d.t_start, 0.0)?;
    let (t1, t2) = spec.mirror_bins();
    let scalar_r = cauchy_schwartz_r(&second_moments(&map, spec.symplectic_bound)?, t1, t2, alpha_l)?.r;
    let n_half = spec.n_half;
    let n_t = grid_1d.n_t();
    let n_cols = map.n_inputs();

    let row = |k: KIndex, m: usize| -> LabeledRow {
        let particle = map.particle.row(m).to_slice().expect("row-major map");
        let conjugate = map.conjugate.row(m).to_slice().expect("row-major map");
        let segments = if m < n_half {
            vec![(Label::Field(k), 0..n_t), (Label::Atoms(excited_coupling(k)), n_t..n_cols)]
        } else {
            let k_ase = partner(k, grid.k_pi);
            vec![
                (Label::Field(k_ase), 0..n_half),
                (Label::Field(k), n_half..n_t),
                (Label::Atoms(excited_coupling(k_ase)), n_t..n_cols),
            ]
        };
        LabeledRow { particle, conjugate, segments }
    };

    let nk = grid.len();
    let ase_bins: Vec<usize> = (0..n_half).collect();
    let rase_bins: Vec<usize> = (n_half..n_t).collect();
    let blocks: Vec<Vec<C64>> = (0..nk)
        .into_par_iter()
        .map(|i1| {
            let mut out = Vec::with_capacity(n_half * nk * rase_bins.len());
            for &t1 in &ase_bins {
                let r1 = row(grid.k_bins[i1], t1);
                for i2 in 0..nk {
                    for &t2 in &rase_bins {
                        out.push(shared_moments(&r1, &row(grid.k_bins[i2], t2)).0);
                    }
                }
            }
            out
        })
        .collect();
    let anomalous = Array4::from_shape_vec(
        (nk, ase_bins.len(), nk, rase_bins.len()),
        blocks.into_iter().flatten().collect(),
    )
    .map_err(|e| Error::InvalidGrid(e.to_string()))?;

    let mut max_off = 0.0f64;
    for i1 in 0..nk {
        let p = pairing.partner_of(i1);
        for i2 in 0..nk {
            if Some(i2) != p {
                for z in anomalous.slice(ndarray::s![i1, .., i2, ..]).iter() {
                    max_off = max_off.max(z.norm());
                }
            }
        }
    }

    let pairs = pairing
        .pairs
        .iter()
        .map(|&(i, j)| {
            let (ka, kr) = (grid.k_bins[i], grid.k_bins[j]);
            let rows = [row(ka, t1), row(kr, t2)];
            let mut coherence = Array2::zeros((2, 2));
            let mut anom = Array2::zeros((2, 2));
            for a in 0..2 {
                for b in 0..2 {
                    let (m, g) = shared_moments(&rows[a], &rows[b]);
                    anom[[a, b]] = m;
                    coherence[[a, b]] = g;
                }
            }
            let moments = MomentSet {
                bins: vec![t1, t2],
                flux: vec![coherence[[0, 0]].re, coherence[[1, 1]].re],
                coherence,
                anomalous: anom,
            };
            let rep = cauchy_schwartz_r(&moments, 0, 1, alpha_l)?;
            Ok(PairReport { k_ase: ka, k_rase: kr, anomalous: moments.anomalous[[0, 1]].norm(), r: rep.r })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(KSpaceCorrelations {
        grid: grid.clone(),
        pairing,
        ase_bins,
        rase_bins,
        anomalous,
        pairs,
        scalar_r,
        max_off_pairing: max_off,
    })
}
