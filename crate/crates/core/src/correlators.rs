//! Gaussian moments, intensity correlations and the Cauchy-Schwartz ratio.
//!
//! All inputs are in the vacuum, so the output state is zero-mean Gaussian
//! and fully described by, per pair of output bins,
//!
//! - `n_i = <a_i^dagger a_i>`,
//! - `g_ij = <a_i^dagger a_j> = sum_k conj(S_ik) S_jk`,
//! - `m_ij = <a_i a_j> = sum_k C_ik S_jk`.
//!
//! Intensity correlations are normally ordered throughout, so a thermal bin
//! has `p(t, t) = 2 n^2` and the equal-time shot-noise term never appears.

use ndarray::Array2;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::kernel::{anomalous_residual, compose_rase, verify_symplectic, BogoliubovMap};
use crate::model::{build_grid, GridSpec, PhysicalParams};
use crate::{Error, Result};

/// Default refusal threshold for the commutator residual of a map.
pub const SYMPLECTIC_BOUND: f64 = 1e-8;

/// Second moments of the output bins of a map over vacuum inputs.
#[derive(Clone, Debug)]
pub struct MomentSet {
    /// Time-bin index of each moment row.
    pub bins: Vec<usize>,
    pub flux: Vec<f64>,
    pub coherence: Array2<C64>,
    pub anomalous: Array2<C64>,
}

impl MomentSet {
    /// Moments of `a = particle . b + conjugate . b^dagger` with `b` in vacuum.
    pub fn from_blocks(particle: &Array2<C64>, conjugate: &Array2<C64>, bins: Vec<usize>) -> Self {
        let n = particle.nrows();
        assert_eq!(bins.len(), n);
        let s_conj = conjugate.mapv(|z| z.conj());
        let coherence = s_conj.dot(&conjugate.t());
        let anomalous = particle.dot(&conjugate.t());
        let flux = (0..n).map(|i| coherence[[i, i]].re).collect();
        MomentSet { bins, flux, coherence, anomalous }
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    /// Row of the given output time bin.
    pub fn row_of(&self, bin: usize) -> Option<usize> {
        self.bins.iter().position(|&b| b == bin)
    }
}

/// Moments of a map's output bins. Refuses maps whose commutators are off by
/// more than `bound`, since their moments need not describe a physical state.
pub fn second_moments(map: &BogoliubovMap, bound: f64) -> Result<MomentSet> {
    let residual = verify_symplectic(map).max(anomalous_residual(map));
    if !(residual <= bound) {
        return Err(Error::NotSymplectic { residual, bound });
    }
    Ok(MomentSet::from_blocks(&map.particle, &map.conjugate, map.output_bins.clone()))
}

/// Normally ordered `<a_i^dagger a_j^dagger a_j a_i>` for moment rows `i`, `j`.
pub fn intensity_correlation(m: &MomentSet, i: usize, j: usize) -> f64 {
    let (ni, nj) = (m.flux[i], m.flux[j]);
    if i == j {
        2.0 * ni * ni + m.anomalous[[i, i]].norm_sqr()
    } else {
        ni * nj + m.coherence[[i, j]].norm_sqr() + m.anomalous[[i, j]].norm_sqr()
    }
}

/// Cauchy-Schwartz report for two moment rows. Classical light has `r <= 1`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct CorrelationReport {
    pub p11: f64,
    pub p22: f64,
    pub p12: f64,
    pub r: f64,
    pub alpha_l: f64,
    pub classical_bound: f64,
    /// `|g_12|`, reported rather than assumed zero.
    pub cross_coherence: f64,
}

pub fn cauchy_schwartz_r(m: &MomentSet, i: usize, j: usize, alpha_l: f64) -> Result<CorrelationReport> {
    let p11 = intensity_correlation(m, i, i);
    let p22 = intensity_correlation(m, j, j);
    let p12 = intensity_correlation(m, i, j);
    if p11 <= 0.0 || p22 <= 0.0 {
        return Err(Error::Degenerate(format!(
            "zero auto-correlation (p11 = {p11:e}, p22 = {p22:e})"
        )));
    }
    Ok(CorrelationReport {
        p11,
        p22,
        p12,
        r: p12 * p12 / (p11 * p22),
        alpha_l,
        classical_bound: 1.0,
        cross_coherence: m.coherence[[i, j]].norm(),
    })
}

/// Reference closed form of the mirror-bin ratio:
/// `[1/2 + (x + cosh x) / (4 sinh(x/2) (e^x - 1))]^2`.
pub fn closed_form_r(alpha_l: f64) -> Result<f64> {
    if !(alpha_l > 0.0) {
        return Err(Error::Divergent(alpha_l));
    }
    let x = alpha_l;
    let t = (x + x.cosh()) / (4.0 * (0.5 * x).sinh() * x.exp_m1());
    Ok((0.5 + t).powi(2))
}

/// Reference two-pulse echo efficiency `sinh^2(x/2)`.
pub fn closed_form_efficiency(alpha_l: f64) -> f64 {
    (0.5 * alpha_l).sinh().powi(2)
}

/// ASE photon number per mode, `e^x - 1`.
pub fn closed_form_ase_flux(alpha_l: f64) -> f64 {
    alpha_l.exp_m1()
}

/// Echo efficiency of the commutator-preserving model, `4 sinh^2(x/2)`.
///
/// Ground-state absorption and inverted-state gain give amplitude factors
/// `exp(-x/2)` and `exp(x/2)`; the rephased amplitude is their difference.
pub fn model_echo_efficiency(alpha_l: f64) -> f64 {
    4.0 * closed_form_efficiency(alpha_l)
}

/// Mirror-bin ratio of the commutator-preserving model,
/// `[1 + 1 / (2 (e^x - 1))]^2`.
///
/// This saturates the operator Cauchy-Schwartz bound `|m| <= sqrt(n (n + 1))`
/// for an ASE bin with `n = e^x - 1`.
pub fn model_r(alpha_l: f64) -> Result<f64> {
    if !(alpha_l > 0.0) {
        return Err(Error::Divergent(alpha_l));
    }
    Ok((1.0 + 0.5 / alpha_l.exp_m1()).powi(2))
}

/// Largest ratio any state allows for two bins with occupations `n1`, `n2`
/// and no cross-coherence. `|m|^2 <= n1 (n2 + 1)` and `|m|^2 <= n2 (n1 + 1)`
/// give `R <= [1 + 1 / (2 max(n1, n2))]^2`.
pub fn r_upper_bound(n1: f64, n2: f64) -> f64 {
    (1.0 + 0.5 / n1.max(n2)).powi(2)
}

/// Bisection root of `f` in `[lo, hi]` to absolute tolerance `tol`.
pub fn bisect<F: Fn(f64) -> Result<f64>>(f: F, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let (mut a, mut b) = (lo, hi);
    let (mut fa, fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::NoRoot(lo, hi));
    }
    while b - a > tol {
        let mid = 0.5 * (a + b);
        let fm = f(mid)?;
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

/// Optical depth at which the reference ratio crosses the classical bound.
pub fn closed_form_r_crossing() -> Result<f64> {
    bisect(|x| Ok(closed_form_r(x)? - 1.0), 0.5, 5.0, 1e-13)
}

/// Grid used to evaluate one point of an R scan.
///
/// The window holds `n_half` ASE bins before the second pi pulse at `t = 0`
/// and `n_half` RASE bins after it; the first pi pulse sits at the window
/// start. Mirror bins `-(k + 1/2) dt` and `+(k + 1/2) dt` are compared, with
/// `k = mirror_offset`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScanSpec {
    pub n_half: usize,
    pub dt: f64,
    pub w_dt: f64,
    pub n_delta: usize,
    pub n_z: usize,
    pub mirror_offset: usize,
    #[serde(default = "default_bound")]
    pub symplectic_bound: f64,
}

fn default_bound() -> f64 {
    SYMPLECTIC_BOUND
}

impl ScanSpec {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::with_bins(
            -(self.n_half as f64) * self.dt,
            self.dt,
            2 * self.n_half,
            self.w_dt,
            self.n_delta,
            self.n_z,
        )
    }

    /// ASE and RASE moment rows of the mirror pair.
    pub fn mirror_bins(&self) -> (usize, usize) {
        (self.n_half - 1 - self.mirror_offset, self.n_half + self.mirror_offset)
    }
}

/// One row of the scan table.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScanRow {
    pub alpha_l: f64,
    pub r_numeric: f64,
    pub r_closed: f64,
    pub rel_err: f64,
    pub r_model: f64,
    pub n_ase: f64,
    pub n_rase: f64,
    pub anomalous: f64,
    pub symplectic_residual: f64,
}

/// Full RASE run at one optical depth.
pub fn rase_point(alpha_l: f64, spec: &ScanSpec) -> Result<(ScanRow, MomentSet)> {
    if spec.n_half == 0 || spec.mirror_offset >= spec.n_half {
        return Err(Error::InvalidParameter("mirror bin outside the window".into()));
    }
    let params = PhysicalParams::from_alpha_l(alpha_l)?;
    let grid = build_grid(&params, &spec.grid_spec())?;
    let map = compose_rase(&grid, &params, grid.t_start, 0.0)?;
    let residual = verify_symplectic(&map);
    let moments = second_moments(&map, spec.symplectic_bound)?;
    drop(map);
    let (i, j) = spec.mirror_bins();
    let report = cauchy_schwartz_r(&moments, i, j, alpha_l)?;
    let r_closed = closed_form_r(alpha_l)?;
    Ok((
        ScanRow {
            alpha_l,
            r_numeric: report.r,
            r_closed,
            rel_err: (report.r - r_closed).abs() / r_closed,
            r_model: model_r(alpha_l)?,
            n_ase: moments.flux[i],
            n_rase: moments.flux[j],
            anomalous: moments.anomalous[[i, j]].norm(),
            symplectic_residual: residual,
        },
        moments,
    ))
}

/// Scan of the mirror-bin ratio over optical depths, in input order.
///
/// Points run one after another; each point parallelizes internally over
/// map rows, which keeps peak memory at a single map.
pub fn scan_r(alpha_ls: &[f64], spec: &ScanSpec) -> Result<Vec<ScanRow>> {
    if let Some(&bad) = alpha_ls.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::InvalidParameter(format!("scan point alpha_l = {bad} must be > 0")));
    }
    alpha_ls.iter().map(|&x| rase_point(x, spec).map(|(row, _)| row)).collect()
}

/// One row of a moment dump.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MomentRow {
    pub t_i: f64,
    pub t_j: f64,
    pub g_re: f64,
    pub g_im: f64,
    pub m_re: f64,
    pub m_im: f64,
    pub n_i: f64,
}

/// Flattens a moment set into dump rows; `times[k]` is the center of bin `k`.
pub fn moment_rows(m: &MomentSet, times: &[f64]) -> Vec<MomentRow> {
    let mut out = Vec::with_capacity(m.len() * m.len());
    for i in 0..m.len() {
        for j in 0..m.len() {
            let (g, a) = (m.coherence[[i, j]], m.anomalous[[i, j]]);
            out.push(MomentRow {
                t_i: times[m.bins[i]],
                t_j: times[m.bins[j]],
                g_re: g.re,
                g_im: g.im,
                m_re: a.re,
                m_im: a.im,
                n_i: m.flux[i],
            });
        }
    }
    out
}
