//! Bogoliubov input-output maps of the linearized Maxwell-Bloch equations.
//!
//! The continuum model is discretized as a time-bin cascade. Each time bin
//! carries one unit-commutator field mode; each `(z slice, detuning bin)`
//! cell carries one unit-commutator atomic mode. For every bin and slice the
//! atoms precess freely over the bin and then exchange excitation with the
//! field mode through the collective atomic mode the bin couples to:
//!
//! - ground regime: a beamsplitter with `cos(theta) = exp(-alpha dz / 2)`,
//! - excited regime: a two-mode squeezer with `cosh(theta) = exp(alpha dz / 2)`.
//!
//! The collective mode has weights proportional to the response of an atom
//! detuned by `D` to a flat field bin, `exp(i D dt / 2) sinc(D dt / 2)`, folded
//! into the detuning band (see [`folded_response`]).
//! Every elementary step is symplectic, so the composed maps preserve the
//! commutators to rounding error, and the amplitude transmission through the
//! sample is exactly `exp(-+alpha l / 2)`.
//!
//! Maps are built row by row in the Heisenberg picture: each output operator
//! is pulled back through the steps in reverse order until it is expressed in
//! terms of input field bins and the initial atomic modes. Rows are
//! independent, so they are computed in parallel with a fixed summation order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::model::{
    build_sequence, ModeLedger, PhysicalParams, PulseEvent, PulseSequence, Regime, Region,
    SimulationGrid,
};
use crate::{Error, Result};

/// Largest number of atomic modes for which [`KernelSet`] materializes the
/// dense atom-to-atom block.
pub const MAX_KERNEL_ATOMS: usize = 2048;

/// Largest dense map, in complex entries per block (about 1 GB for both blocks).
pub const MAX_MAP_ENTRIES: usize = 1 << 25;

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Linear map from input modes to output field bins:
/// `a_out = particle . x + conjugate . x^dagger`.
#[derive(Clone, Debug)]
pub struct BogoliubovMap {
    pub particle: Array2<C64>,
    pub conjugate: Array2<C64>,
    pub ledger: ModeLedger,
    /// Time-bin index of each output row.
    pub output_bins: Vec<usize>,
    /// Regime the atoms are left in at the end of the map.
    pub atom_regime: Regime,
}

impl BogoliubovMap {
    pub fn n_outputs(&self) -> usize {
        self.particle.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.particle.ncols()
    }

    /// Mean output for coherent inputs with the given amplitudes.
    pub fn mean_response(&self, input: &[C64]) -> Vec<C64> {
        assert_eq!(input.len(), self.n_inputs());
        self.particle
            .outer_iter()
            .zip(self.conjugate.outer_iter())
            .map(|(c, s)| {
                c.iter()
                    .zip(s.iter())
                    .zip(input)
                    .fold(C64::new(0.0, 0.0), |acc, ((c, s), x)| acc + c * x + s * x.conj())
            })
            .collect()
    }

    /// Frobenius norm of the conjugate block.
    pub fn conjugate_norm(&self) -> f64 {
        self.conjugate.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// One block of a [`KernelSet`], with its particle and conjugate parts.
#[derive(Clone, Debug)]
pub struct KernelBlock {
    pub particle: Array2<C64>,
    pub conjugate: Array2<C64>,
}

/// Full input-output transformation of a single regime region.
///
/// Rows are outputs (field bins of the region, then atomic modes at the end
/// of the region); columns are inputs (field bins at `z = 0`, then atomic
/// modes at the start of the region).
#[derive(Clone, Debug)]
pub struct KernelSet {
    pub regime: Regime,
    pub first_bin: usize,
    pub n_bins: usize,
    pub field_to_field: KernelBlock,
    pub atom_to_field: KernelBlock,
    pub field_to_atom: KernelBlock,
    pub atom_to_atom: KernelBlock,
}

#[derive(Clone, Copy)]
enum RowStart {
    /// Field bin (local index) at the sample output.
    Field(usize),
    /// Atomic mode (local atom index) at the end of the cascade.
    Atom(usize),
}

/// The elementary steps over a contiguous range of time bins.
struct Cascade {
    n_t: usize,
    n_z: usize,
    n_delta: usize,
    regimes: Vec<Regime>,
    /// Interaction-picture collective-mode vector of every bin.
    kicks: Vec<Vec<C64>>,
    /// `exp(i phi_j)` at the end of the range, to convert back from the
    /// interaction picture.
    end_phase: Vec<C64>,
    ground: (f64, f64),
    excited: (f64, f64),
}

impl Cascade {
    fn new(grid: &SimulationGrid, params: &PhysicalParams, regimes: Vec<Regime>) -> Self {
        let dt = grid.dt;
        let weights = collective_weights(grid);

        // Net precession count: +1 per ground bin, -1 per excited bin.
        let mut net = 0i64;
        let mut kicks = Vec::with_capacity(regimes.len());
        for &r in &regimes {
            net += match r {
                Regime::Ground => 1,
                Regime::Excited => -1,
            };
            let turns = net as f64 * dt;
            kicks.push(
                grid.delta_centers
                    .iter()
                    .zip(&weights)
                    .map(|(&d, &w)| {
                        let w = match r {
                            Regime::Ground => w,
                            Regime::Excited => w.conj(),
                        };
                        w * C64::from_polar(1.0, -d * turns)
                    })
                    .collect(),
            );
        }
        let end_phase = grid
            .delta_centers
            .iter()
            .map(|&d| C64::from_polar(1.0, d * net as f64 * dt))
            .collect();

        let x = params.alpha * grid.dz();
        Cascade {
            n_t: regimes.len(),
            n_z: grid.n_z(),
            n_delta: grid.n_delta(),
            regimes,
            kicks,
            end_phase,
            ground: ((-0.5 * x).exp(), (-(-x).exp_m1()).sqrt()),
            excited: ((0.5 * x).exp(), x.exp_m1().sqrt()),
        }
    }

    fn n_cols(&self) -> usize {
        self.n_t + self.n_z * self.n_delta
    }

    /// Pulls one output operator back to the inputs of the cascade, writing
    /// its particle and conjugate coefficients into `alpha` and `beta`.
    fn pull_back(&self, start: RowStart, alpha: &mut [C64], beta: &mut [C64]) {
        let zero = C64::new(0.0, 0.0);
        alpha.fill(zero);
        beta.fill(zero);
        let last_bin = match start {
            RowStart::Field(m) => {
                alpha[m] = C64::new(1.0, 0.0);
                m
            }
            RowStart::Atom(a) => {
                alpha[self.n_t + a] = self.end_phase[a % self.n_delta];
                self.n_t - 1
            }
        };
        if self.n_t == 0 {
            return;
        }
        for n in (0..=last_bin).rev() {
            let v = &self.kicks[n];
            let regime = self.regimes[n];
            for k in (0..self.n_z).rev() {
                let lo = self.n_t + k * self.n_delta;
                let hi = lo + self.n_delta;
                let (a_field, a_atoms) = split_field_atoms(alpha, n, lo, hi);
                let (b_field, b_atoms) = split_field_atoms(beta, n, lo, hi);
                self.step(regime, v, a_field, b_field, a_atoms, b_atoms);
            }
        }
    }

    #[inline]
    fn step(
        &self,
        regime: Regime,
        v: &[C64],
        a_field: &mut C64,
        b_field: &mut C64,
        a_atoms: &mut [C64],
        b_atoms: &mut [C64],
    ) {
        let mut ac = C64::new(0.0, 0.0);
        let mut bc = C64::new(0.0, 0.0);
        for ((a, b), v) in a_atoms.iter().zip(b_atoms.iter()).zip(v) {
            ac += a * v;
            bc += b * v.conj();
        }
        let (fa, fb) = (*a_field, *b_field);
        let (new_a, new_b, c_coef, cd_coef) = match regime {
            Regime::Ground => {
                let (c, s) = self.ground;
                (
                    fa * c + ac * I * s,
                    fb * c - bc * I * s,
                    fa * I * s + ac * c,
                    -fb * I * s + bc * c,
                )
            }
            Regime::Excited => {
                let (c, s) = self.excited;
                (
                    fa * c - bc * I * s,
                    fb * c + ac * I * s,
                    -fb * I * s + ac * c,
                    fa * I * s + bc * c,
                )
            }
        };
        *a_field = new_a;
        *b_field = new_b;
        let da = c_coef - ac;
        let db = cd_coef - bc;
        if da == C64::new(0.0, 0.0) && db == C64::new(0.0, 0.0) {
            return;
        }
        for ((a, b), v) in a_atoms.iter_mut().zip(b_atoms.iter_mut()).zip(v) {
            *a += v.conj() * da;
            *b += v * db;
        }
    }

    fn rows(&self, starts: &[RowStart]) -> (Array2<C64>, Array2<C64>) {
        let n_cols = self.n_cols();
        let mut particle = Array2::<C64>::zeros((starts.len(), n_cols));
        let mut conjugate = Array2::<C64>::zeros((starts.len(), n_cols));
        Zip::from(particle.axis_iter_mut(Axis(0)))
            .and(conjugate.axis_iter_mut(Axis(0)))
            .and(starts)
            .par_for_each(|mut c, mut s, &start| {
                let c = c.as_slice_mut().expect("row-major row");
                let s = s.as_slice_mut().expect("row-major row");
                self.pull_back(start, c, s);
            });
        (particle, conjugate)
    }
}

/// Normalized lab-frame weights of the atomic mode a field bin couples to in
/// the ground regime (the excited regime couples to their conjugates).
pub fn collective_weights(grid: &SimulationGrid) -> Vec<C64> {
    let dt = grid.dt;
    let k = grid.half_span * dt / std::f64::consts::PI;
    let weights: Vec<C64> = grid
        .delta_centers
        .iter()
        .map(|&d| C64::from_polar(folded_response(d * dt, k), 0.5 * d * dt))
        .collect();
    let norm = weights.iter().map(|w| w.norm_sqr()).sum::<f64>().sqrt();
    weights.into_iter().map(|w| w / norm).collect()
}

/// Response of an atom with phase `x = D dt` over one bin, with the whole
/// detuning line folded into a band `|x| < k pi`.
///
/// Detunings that differ by `2 pi / dt` are indistinguishable in the cascade,
/// so summing the `sinc` response over all images spaced by the band width
/// gives `sin(x/2) / (k sin(x/(2k)))`. For integer `k` the collective modes of
/// distinct bins are then exactly orthogonal, which is the white-noise limit
/// of a flat line; truncating instead of folding leaves an `O(1/(W dt))`
/// overlap between bins.
fn folded_response(x: f64, k: f64) -> f64 {
    let s = (0.5 * x / k).sin();
    if s.abs() < 1e-300 {
        1.0
    } else {
        (0.5 * x).sin() / (k * s)
    }
}

/// Splits a row into the field entry `n` and the atom slice `lo..hi`
/// (`n < lo` always holds).
fn split_field_atoms(row: &mut [C64], n: usize, lo: usize, hi: usize) -> (&mut C64, &mut [C64]) {
    let (head, tail) = row.split_at_mut(lo);
    (&mut head[n], &mut tail[..hi - lo])
}

fn check_size(rows: usize, cols: usize) -> Result<()> {
    if rows.saturating_mul(cols) > MAX_MAP_ENTRIES {
        return Err(Error::CapExceeded(format!(
            "{rows} x {cols} map exceeds {MAX_MAP_ENTRIES} entries per block"
        )));
    }
    Ok(())
}

/// Builds the map from all input modes to every output field bin of the
/// grid window for an arbitrary sequence of ideal pi pulses.
pub fn propagate(
    grid: &SimulationGrid,
    params: &PhysicalParams,
    sequence: &PulseSequence,
) -> Result<BogoliubovMap> {
    params.validate()?;
    let regimes = sequence.bin_regimes(grid);
    let cascade = Cascade::new(grid, params, regimes.clone());
    check_size(grid.n_t(), cascade.n_cols())?;
    let starts: Vec<RowStart> = (0..grid.n_t()).map(RowStart::Field).collect();
    let (particle, conjugate) = cascade.rows(&starts);
    let initial = sequence.regime_at(grid.t_start);
    Ok(BogoliubovMap {
        particle,
        conjugate,
        ledger: ModeLedger::for_grid(grid, params, initial),
        output_bins: (0..grid.n_t()).collect(),
        atom_regime: regimes.last().copied().unwrap_or(initial),
    })
}

fn region_bins(grid: &SimulationGrid, region: &Region) -> Result<(usize, usize)> {
    let start = grid.t_start.max(region.start);
    let b0 = grid
        .boundary_index(start)
        .ok_or_else(|| Error::InvalidSequence(format!("region start {} off grid", region.start)))?;
    let b1 = if region.end >= grid.t_end() {
        grid.n_t()
    } else {
        grid.boundary_index(region.end)
            .ok_or_else(|| Error::InvalidSequence(format!("region end {} off grid", region.end)))?
    };
    if b1 <= b0 {
        return Err(Error::InvalidSequence(format!(
            "region [{}, {}) contains no time bins",
            region.start, region.end
        )));
    }
    Ok((b0, b1))
}

fn region_kernels(
    grid: &SimulationGrid,
    params: &PhysicalParams,
    region: &Region,
    expected: Regime,
) -> Result<KernelSet> {
    params.validate()?;
    if region.regime != expected {
        return Err(Error::RegimeMismatch {
            start: region.start,
            end: region.end,
            expected: expected.name(),
        });
    }
    let (b0, b1) = region_bins(grid, region)?;
    let n_bins = b1 - b0;
    let n_atoms = grid.n_z() * grid.n_delta();
    if n_atoms > MAX_KERNEL_ATOMS {
        return Err(Error::CapExceeded(format!(
            "{n_atoms} atomic modes exceed the kernel cap of {MAX_KERNEL_ATOMS}"
        )));
    }
    let cascade = Cascade::new(grid, params, vec![expected; n_bins]);
    let starts: Vec<RowStart> = (0..n_bins)
        .map(RowStart::Field)
        .chain((0..n_atoms).map(RowStart::Atom))
        .collect();
    let (c, s) = cascade.rows(&starts);
    let block = |rows: std::ops::Range<usize>, cols: std::ops::Range<usize>| KernelBlock {
        particle: c.slice(ndarray::s![rows.clone(), cols.clone()]).to_owned(),
        conjugate: s.slice(ndarray::s![rows, cols]).to_owned(),
    };
    let (f, a) = (0..n_bins, n_bins..n_bins + n_atoms);
    Ok(KernelSet {
        regime: expected,
        first_bin: b0,
        n_bins,
        field_to_field: block(f.clone(), f.clone()),
        atom_to_field: block(f.clone(), a.clone()),
        field_to_atom: block(a.clone(), f),
        atom_to_atom: block(a.clone(), a),
    })
}

/// Region transformation of an absorbing (ground-state) ensemble.
pub fn ground_kernels(grid: &SimulationGrid, params: &PhysicalParams, region: &Region) -> Result<KernelSet> {
    region_kernels(grid, params, region, Regime::Ground)
}

/// Region transformation of an inverted ensemble.
pub fn excited_kernels(grid: &SimulationGrid, params: &PhysicalParams, region: &Region) -> Result<KernelSet> {
    region_kernels(grid, params, region, Regime::Excited)
}

/// Applies an ideal instantaneous pi pulse to the atoms at the end of `map`.
///
/// The atomic annihilation operator of the new regime equals that of the old
/// one (`D_e <- D_g` and back), so only the regime label changes; subsequent
/// propagation uses the other regime's coupling. Transverse wavevectors only
/// matter in the paraxial bookkeeping and are ignored here.
pub fn apply_ideal_pi(mut map: BogoliubovMap, pulse: &PulseEvent) -> Result<BogoliubovMap> {
    if !pulse.is_pi() {
        return Err(Error::InvalidSequence("apply_ideal_pi needs a pi pulse".into()));
    }
    map.atom_regime = map.atom_regime.toggled();
    Ok(map)
}

/// Weak input in the ground regime, rephased by a pi pulse at `t_pi`.
pub fn compose_two_pulse_echo(
    grid: &SimulationGrid,
    params: &PhysicalParams,
    t_pi: f64,
) -> Result<BogoliubovMap> {
    if t_pi <= grid.t_start {
        return Err(Error::InvalidSequence("pi pulse must follow the input region".into()));
    }
    let echo = 2.0 * t_pi - grid.t_start;
    if echo > grid.t_end() * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::WindowTooShort(format!(
            "echo of the first input bin at {echo} lies beyond the window end {}",
            grid.t_end()
        )));
    }
    let seq = build_sequence(grid, vec![PulseEvent::pi(t_pi)])?;
    propagate(grid, params, &seq)
}

/// Rephased amplified spontaneous emission: pi pulses at `t_pi1` and `t_pi2`.
///
/// Region 1 (between the pulses) is inverted and emits ASE from vacuum;
/// region 2 is absorbing and re-emits the rephased atomic excitation.
pub fn compose_rase(
    grid: &SimulationGrid,
    params: &PhysicalParams,
    t_pi1: f64,
    t_pi2: f64,
) -> Result<BogoliubovMap> {
    if t_pi1 >= t_pi2 {
        return Err(Error::InvalidSequence(format!(
            "regions overlap: first pi at {t_pi1} is not before second pi at {t_pi2}"
        )));
    }
    if grid.boundary_index(t_pi2).is_none() {
        return Err(Error::InvalidSequence(format!("second pi at {t_pi2} is not a bin boundary")));
    }
    if t_pi1 < grid.t_start {
        return Err(Error::InvalidSequence("first pi precedes the grid window".into()));
    }
    let seq = build_sequence(grid, vec![PulseEvent::pi(t_pi1), PulseEvent::pi(t_pi2)])?;
    propagate(grid, params, &seq)
}

/// Max-norm of `C C^dagger - S S^dagger - I` over the output bins.
pub fn verify_symplectic(map: &BogoliubovMap) -> f64 {
    let n = map.n_outputs();
    let c = &map.particle;
    let s = &map.conjugate;
    (0..n)
        .into_par_iter()
        .map(|i| {
            let (ci, si) = (c.row(i), s.row(i));
            (0..n)
                .map(|j| {
                    let (cj, sj) = (c.row(j), s.row(j));
                    let mut acc = C64::new(0.0, 0.0);
                    for ((a, b), (x, y)) in ci.iter().zip(si.iter()).zip(cj.iter().zip(sj.iter())) {
                        acc += a * x.conj() - b * y.conj();
                    }
                    if i == j {
                        acc -= 1.0;
                    }
                    acc.norm()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Max-norm of `C S^T - S C^T`, the vanishing `[a_i, a_j]` commutators.
pub fn anomalous_residual(map: &BogoliubovMap) -> f64 {
    let n = map.n_outputs();
    let c = &map.particle;
    let s = &map.conjugate;
    (0..n)
        .into_par_iter()
        .map(|i| {
            (0..n)
                .map(|j| {
                    let mut acc = C64::new(0.0, 0.0);
                    for ((a, b), (x, y)) in c.row(i).iter().zip(s.row(i).iter()).zip(c.row(j).iter().zip(s.row(j).iter())) {
                        acc += a * y - b * x;
                    }
                    acc.norm()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Mean-field two-pulse echo efficiency: energy emitted after the pi pulse
/// divided by the input energy, for coherent input bin amplitudes.
pub fn linear_echo_efficiency(map: &BogoliubovMap, input: &[f64], first_echo_bin: usize) -> f64 {
    let n_field = map.ledger.n_field();
    let mut x = vec![C64::new(0.0, 0.0); map.n_inputs()];
    for (xi, &a) in x.iter_mut().zip(input).take(n_field) {
        *xi = C64::new(a, 0.0);
    }
    let out = map.mean_response(&x);
    let e_out: f64 = map
        .output_bins
        .iter()
        .zip(&out)
        .filter(|(&b, _)| b >= first_echo_bin)
        .map(|(_, z)| z.norm_sqr())
        .sum();
    let e_in: f64 = input.iter().map(|a| a * a).sum();
    e_out / e_in
}

/// Metadata written next to a binary map container.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MapMetadata {
    pub rows: usize,
    pub cols: usize,
    pub n_field_inputs: usize,
    pub n_atomic_inputs: usize,
    pub output_bins: Vec<usize>,
    pub atom_regime: Regime,
    pub symplectic_residual: f64,
    pub layout: String,
}

const MAGIC: &[u8; 8] = b"BOGOMAP1";

/// Writes `map` as: 8-byte magic `BOGOMAP1`, `u64` rows, `u64` cols (little
/// endian), then the particle block and the conjugate block, each row-major
/// as interleaved little-endian `f64` (re, im) pairs.
pub fn write_container(map: &BogoliubovMap, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(map.n_outputs() as u64).to_le_bytes())?;
    w.write_all(&(map.n_inputs() as u64).to_le_bytes())?;
    for block in [&map.particle, &map.conjugate] {
        for z in block.iter() {
            w.write_all(&z.re.to_le_bytes())?;
            w.write_all(&z.im.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the two blocks written by [`write_container`].
pub fn read_container(path: &Path) -> Result<(Array2<C64>, Array2<C64>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Container("bad magic".into()));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let cols = u64::from_le_bytes(word) as usize;
    check_size(rows, cols)?;
    let mut read_block = || -> Result<Array2<C64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut word)?;
            let re = f64::from_le_bytes(word);
            r.read_exact(&mut word)?;
            data.push(C64::new(re, f64::from_le_bytes(word)));
        }
        Array2::from_shape_vec((rows, cols), data).map_err(|e| Error::Container(e.to_string()))
    };
    let c = read_block()?;
    let s = read_block()?;
    Ok((c, s))
}

pub fn metadata(map: &BogoliubovMap) -> MapMetadata {
    let n_field = map.ledger.n_field();
    MapMetadata {
        rows: map.n_outputs(),
        cols: map.n_inputs(),
        n_field_inputs: n_field,
        n_atomic_inputs: map.n_inputs() - n_field,
        output_bins: map.output_bins.clone(),
        atom_regime: map.atom_regime,
        symplectic_residual: verify_symplectic(map),
        layout: "BOGOMAP1 magic, u64 LE rows, u64 LE cols, particle then conjugate block, row-major (re, im) f64 LE".into(),
    }
}
