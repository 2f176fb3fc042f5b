//! Physical parameters, discretization grids, pulse sequences and the input
//! mode ledger shared by the rest of the crate.
//!
//! Times are in units of a user-chosen reference `T`; detunings in `1/T`.
//! Everything observable depends only on the dimensionless products
//! `alpha * length`, `W * dt` and `d_delta * T_total`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Relative slack used when checking that times fall on bin boundaries.
const BOUNDARY_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParams {
    /// Optical depth per unit length (intensity absorption coefficient).
    pub alpha: f64,
    /// Sample length `l`.
    pub length: f64,
}

impl PhysicalParams {
    pub fn new(alpha: f64, length: f64) -> Result<Self> {
        let p = PhysicalParams { alpha, length };
        p.validate()?;
        Ok(p)
    }

    /// Unit-length sample with the given optical depth.
    pub fn from_alpha_l(alpha_l: f64) -> Result<Self> {
        Self::new(alpha_l, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "length must be finite and > 0, got {}",
                self.length
            )));
        }
        Ok(())
    }

    /// Dimensionless optical depth `alpha * l`.
    pub fn alpha_l(&self) -> f64 {
        self.alpha * self.length
    }
}

fn default_white_noise_threshold() -> f64 {
    20.0
}

fn default_detuning_threshold() -> f64 {
    0.5
}

/// Requested resolutions for [`build_grid`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    /// Start of the simulated window.
    pub t_start: f64,
    /// Full window length `T_total`; must be an integer multiple of `dt`.
    pub window: f64,
    /// Time-bin width.
    pub dt: f64,
    /// Half span `W` of the flat detuning profile.
    pub half_span: f64,
    pub n_delta: usize,
    pub n_z: usize,
    #[serde(default = "default_white_noise_threshold")]
    pub white_noise_threshold: f64,
    #[serde(default = "default_detuning_threshold")]
    pub detuning_threshold: f64,
}

impl GridSpec {
    /// Window of `n_t` bins of width `dt` starting at `t_start`, with the
    /// detuning span set so that `W * dt = w_dt`.
    pub fn with_bins(t_start: f64, dt: f64, n_t: usize, w_dt: f64, n_delta: usize, n_z: usize) -> Self {
        GridSpec {
            t_start,
            window: dt * n_t as f64,
            dt,
            half_span: w_dt / dt,
            n_delta,
            n_z,
            white_noise_threshold: default_white_noise_threshold(),
            detuning_threshold: default_detuning_threshold(),
        }
    }
}

/// Validity flags; violations are reported, never silently accepted.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridFlags {
    /// `W * dt`.
    pub w_dt: f64,
    /// `d_delta * T_total`.
    pub d_delta_t: f64,
    pub white_noise_valid: bool,
    pub detuning_resolved: bool,
}

impl GridFlags {
    pub fn valid(&self) -> bool {
        self.white_noise_valid && self.detuning_resolved
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationGrid {
    pub t_start: f64,
    pub dt: f64,
    pub t_centers: Vec<f64>,
    pub half_span: f64,
    pub d_delta: f64,
    pub delta_centers: Vec<f64>,
    pub length: f64,
    /// Slice boundaries `0 = z_0 < ... < z_n = l`.
    pub z_bounds: Vec<f64>,
    pub flags: GridFlags,
}

impl SimulationGrid {
    pub fn n_t(&self) -> usize {
        self.t_centers.len()
    }

    pub fn n_delta(&self) -> usize {
        self.delta_centers.len()
    }

    pub fn n_z(&self) -> usize {
        self.z_bounds.len() - 1
    }

    pub fn dz(&self) -> f64 {
        self.length / self.n_z() as f64
    }

    pub fn t_end(&self) -> f64 {
        self.t_start + self.dt * self.n_t() as f64
    }

    pub fn window(&self) -> f64 {
        self.dt * self.n_t() as f64
    }

    /// Left edge of time bin `n`.
    pub fn bin_start(&self, n: usize) -> f64 {
        self.t_start + self.dt * n as f64
    }

    /// Index of the bin boundary at `t`, if `t` lies on one.
    pub fn boundary_index(&self, t: f64) -> Option<usize> {
        let x = (t - self.t_start) / self.dt;
        let k = x.round();
        if (x - k).abs() <= BOUNDARY_EPS * x.abs().max(1.0) && k >= 0.0 && k <= self.n_t() as f64 {
            Some(k as usize)
        } else {
            None
        }
    }

    /// Bin containing `t` (left-closed).
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if t < self.t_start || t >= self.t_end() {
            return None;
        }
        Some((((t - self.t_start) / self.dt).floor() as usize).min(self.n_t() - 1))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Builds the uniform simulation grid along all three axes.
///
/// Threshold violations only clear the corresponding flag.
pub fn build_grid(params: &PhysicalParams, spec: &GridSpec) -> Result<SimulationGrid> {
    params.validate()?;
    let positive = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidGrid(format!("{name} must be positive, got {v}")))
        }
    };
    positive("dt", spec.dt)?;
    positive("window", spec.window)?;
    positive("half_span", spec.half_span)?;
    if !spec.t_start.is_finite() {
        return Err(Error::InvalidGrid("t_start must be finite".into()));
    }
    if spec.n_delta == 0 || spec.n_z == 0 {
        return Err(Error::InvalidGrid("n_delta and n_z must be positive".into()));
    }
    let ratio = spec.window / spec.dt;
    let n_t = ratio.round();
    if n_t < 1.0 || (ratio - n_t).abs() > BOUNDARY_EPS * ratio {
        return Err(Error::InvalidGrid(format!(
            "window {} is not a whole number of bins of width {}",
            spec.window, spec.dt
        )));
    }
    let n_t = n_t as usize;

    let t_centers = (0..n_t)
        .map(|n| spec.t_start + spec.dt * (n as f64 + 0.5))
        .collect();
    let d_delta = 2.0 * spec.half_span / spec.n_delta as f64;
    let delta_centers = (0..spec.n_delta)
        .map(|j| -spec.half_span + d_delta * (j as f64 + 0.5))
        .collect();
    let dz = params.length / spec.n_z as f64;
    let z_bounds = (0..=spec.n_z)
        .map(|k| if k == spec.n_z { params.length } else { dz * k as f64 })
        .collect();

    let window = spec.dt * n_t as f64;
    let w_dt = spec.half_span * spec.dt;
    let d_delta_t = d_delta * window;
    let flags = GridFlags {
        w_dt,
        d_delta_t,
        white_noise_valid: w_dt >= spec.white_noise_threshold * (1.0 - 1e-12),
        detuning_resolved: d_delta_t <= spec.detuning_threshold * (1.0 + 1e-12),
    };

    Ok(SimulationGrid {
        t_start: spec.t_start,
        dt: spec.dt,
        t_centers,
        half_span: spec.half_span,
        d_delta,
        delta_centers,
        length: params.length,
        z_bounds,
        flags,
    })
}

/// Population regime of the ensemble between pulses.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Ground,
    Excited,
}

impl Regime {
    pub fn toggled(self) -> Regime {
        match self {
            Regime::Ground => Regime::Excited,
            Regime::Excited => Regime::Ground,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Ground => "ground",
            Regime::Excited => "excited",
        }
    }
}

/// Envelope of a weak probe, in field amplitude units (`sqrt(photons / T)`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "kebab-case")]
pub enum InputProfile {
    /// Constant amplitude for `duration` starting at the event time.
    Square { amplitude: f64, duration: f64 },
}

impl InputProfile {
    pub fn duration(&self) -> f64 {
        match self {
            InputProfile::Square { duration, .. } => *duration,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EventKind {
    Pi,
    WeakInput { profile: InputProfile },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseEvent {
    pub time: f64,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Transverse wavevector; zero in one-dimensional runs.
    #[serde(default)]
    pub transverse_k: [f64; 2],
}

impl PulseEvent {
    pub fn pi(time: f64) -> Self {
        PulseEvent {
            time,
            kind: EventKind::Pi,
            transverse_k: [0.0, 0.0],
        }
    }

    pub fn weak_square(time: f64, amplitude: f64, duration: f64) -> Self {
        PulseEvent {
            time,
            kind: EventKind::WeakInput {
                profile: InputProfile::Square { amplitude, duration },
            },
            transverse_k: [0.0, 0.0],
        }
    }

    pub fn is_pi(&self) -> bool {
        matches!(self.kind, EventKind::Pi)
    }

    fn end(&self) -> f64 {
        match &self.kind {
            EventKind::Pi => self.time,
            EventKind::WeakInput { profile } => self.time + profile.duration(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub start: f64,
    /// `f64::INFINITY` for the final region.
    pub end: f64,
    pub regime: Regime,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSequence {
    pub events: Vec<PulseEvent>,
    pub regions: Vec<Region>,
}

impl PulseSequence {
    pub fn pi_events(&self) -> impl Iterator<Item = &PulseEvent> {
        self.events.iter().filter(|e| e.is_pi())
    }

    pub fn regime_at(&self, t: f64) -> Regime {
        self.regions
            .iter()
            .find(|r| t >= r.start && t < r.end)
            .map(|r| r.regime)
            .unwrap_or(Regime::Ground)
    }

    /// Regime of every time bin of `grid`.
    pub fn bin_regimes(&self, grid: &SimulationGrid) -> Vec<Regime> {
        grid.t_centers.iter().map(|&t| self.regime_at(t)).collect()
    }

    /// Coherent amplitude of each bin mode `(1/sqrt(dt)) * integral over the bin`.
    pub fn input_amplitudes(&self, grid: &SimulationGrid) -> Vec<f64> {
        let mut amps = vec![0.0; grid.n_t()];
        for ev in &self.events {
            let EventKind::WeakInput { profile } = &ev.kind else {
                continue;
            };
            let InputProfile::Square { amplitude, duration } = profile;
            let (a, b) = (ev.time, ev.time + duration);
            for (n, amp) in amps.iter_mut().enumerate() {
                let lo = grid.bin_start(n).max(a);
                let hi = (grid.bin_start(n) + grid.dt).min(b);
                if hi > lo {
                    *amp += amplitude * (hi - lo) / grid.dt.sqrt();
                }
            }
        }
        amps
    }
}

/// Orders events and labels the inter-pulse regions.
///
/// Regions start at the grid window; each ideal pi pulse toggles the regime.
/// Empty regions (a pulse exactly at the window start) are dropped.
pub fn build_sequence(grid: &SimulationGrid, events: Vec<PulseEvent>) -> Result<PulseSequence> {
    for w in events.windows(2) {
        if !(w[1].time > w[0].time) {
            return Err(Error::InvalidSequence(format!(
                "event times must be strictly increasing ({} then {})",
                w[0].time, w[1].time
            )));
        }
        if w[0].end() > w[1].time {
            return Err(Error::InvalidSequence(format!(
                "event at {} overlaps event at {}",
                w[0].time, w[1].time
            )));
        }
    }
    for ev in &events {
        if !ev.time.is_finite() {
            return Err(Error::InvalidSequence("non-finite event time".into()));
        }
        if ev.is_pi() && grid.boundary_index(ev.time).is_none() {
            return Err(Error::InvalidSequence(format!(
                "pi pulse at {} is not on a time-bin boundary",
                ev.time
            )));
        }
    }

    let mut regions = Vec::new();
    let mut start = grid.t_start;
    let mut regime = Regime::Ground;
    for ev in events.iter().filter(|e| e.is_pi()) {
        if ev.time > start {
            regions.push(Region {
                start,
                end: ev.time,
                regime,
            });
        }
        start = start.max(ev.time);
        regime = regime.toggled();
    }
    regions.push(Region {
        start,
        end: f64::INFINITY,
        regime,
    });
    Ok(PulseSequence { events, regions })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeKind {
    InputFieldBin,
    InitialGroundAtomic,
    InitialExcitedAtomic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeCoords {
    TimeBin(usize),
    Atomic { z_slice: usize, delta_bin: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub id: usize,
    pub kind: ModeKind,
    pub coords: ModeCoords,
    /// Lattice index of the transverse wavevector, for paraxial maps.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transverse: Option<[i64; 2]>,
    /// Factor turning the continuum operator integrated over the bin into a
    /// unit-commutator mode.
    pub normalization: f64,
    /// Measure of the bin in commutator units: `dt` for field bins,
    /// `dz * d_delta * 2 pi / alpha` for atomic bins.
    pub measure: f64,
}

/// Input modes of a map: field bins first, then atomic bins z-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeLedger {
    pub entries: Vec<ModeEntry>,
}

impl ModeLedger {
    pub fn for_grid(grid: &SimulationGrid, params: &PhysicalParams, initial: Regime) -> Self {
        let n_t = grid.n_t();
        let mut entries = Vec::with_capacity(n_t + grid.n_z() * grid.n_delta());
        for n in 0..n_t {
            entries.push(ModeEntry {
                id: n,
                kind: ModeKind::InputFieldBin,
                coords: ModeCoords::TimeBin(n),
                transverse: None,
                normalization: 1.0 / grid.dt.sqrt(),
                measure: grid.dt,
            });
        }
        // The commutator scale 2 pi / alpha is undefined for an empty medium;
        // the atoms are decoupled there and we fall back to the bare measure.
        let scale = if params.alpha > 0.0 { 2.0 * PI / params.alpha } else { 1.0 };
        let measure = grid.dz() * grid.d_delta * scale;
        let kind = match initial {
            Regime::Ground => ModeKind::InitialGroundAtomic,
            Regime::Excited => ModeKind::InitialExcitedAtomic,
        };
        for z_slice in 0..grid.n_z() {
            for delta_bin in 0..grid.n_delta() {
                entries.push(ModeEntry {
                    id: entries.len(),
                    kind,
                    coords: ModeCoords::Atomic { z_slice, delta_bin },
                    transverse: None,
                    normalization: 1.0 / measure.sqrt(),
                    measure,
                });
            }
        }
        ModeLedger { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn n_field(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.kind == ModeKind::InputFieldBin)
            .count()
    }

    pub fn find(&self, kind: ModeKind, coords: ModeCoords) -> Option<&ModeEntry> {
        self.entries.iter().find(|e| e.kind == kind && e.coords == coords)
    }

    /// Ids are unique and equal to the position in the ledger.
    pub fn ids_consistent(&self) -> bool {
        self.entries.iter().enumerate().all(|(i, e)| e.id == i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> PhysicalParams {
        PhysicalParams::from_alpha_l(1.0).unwrap()
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(PhysicalParams::new(-1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 0.0).is_err());
        assert!(PhysicalParams::new(f64::NAN, 1.0).is_err());
        let p = PhysicalParams::new(0.5, 4.0).unwrap();
        assert_eq!(p.alpha_l(), 2.0);
    }

    #[test]
    fn white_noise_boundary_is_valid() {
        // dt = 0.05 T, W = 400 / T over a window T.
        let spec = GridSpec {
            t_start: 0.0,
            window: 1.0,
            dt: 0.05,
            half_span: 400.0,
            n_delta: 1600,
            n_z: 16,
            white_noise_threshold: 20.0,
            detuning_threshold: 0.5,
        };
        let g = build_grid(&unit(), &spec).unwrap();
        assert_eq!(g.n_t(), 20);
        assert!((g.flags.w_dt - 20.0).abs() < 1e-12);
        assert!(g.flags.white_noise_valid);
        assert!(g.flags.detuning_resolved);
    }

    #[test]
    fn narrow_span_is_flagged() {
        let spec = GridSpec {
            half_span: 10.0,
            ..GridSpec::with_bins(0.0, 0.05, 20, 20.0, 64, 4)
        };
        let g = build_grid(&unit(), &spec).unwrap();
        assert!(!g.flags.white_noise_valid);
        assert!((g.flags.w_dt - 0.5).abs() < 1e-12);
    }

    #[test]
    fn z_slices_uniform() {
        let g = build_grid(&unit(), &GridSpec::with_bins(0.0, 1.0, 4, 20.0, 8, 64)).unwrap();
        assert_eq!(g.n_z(), 64);
        for w in g.z_bounds.windows(2) {
            assert!((w[1] - w[0] - 1.0 / 64.0).abs() < 1e-15);
        }
        assert_eq!(*g.z_bounds.last().unwrap(), 1.0);
    }

    #[test]
    fn grid_rejects_bad_requests() {
        let p = unit();
        let mut s = GridSpec::with_bins(0.0, 1.0, 4, 20.0, 8, 4);
        s.dt = 0.0;
        assert!(build_grid(&p, &s).is_err());
        let mut s = GridSpec::with_bins(0.0, 1.0, 4, 20.0, 8, 4);
        s.window = 3.5;
        assert!(build_grid(&p, &s).is_err());
        let mut s = GridSpec::with_bins(0.0, 1.0, 4, 20.0, 8, 4);
        s.n_z = 0;
        assert!(build_grid(&p, &s).is_err());
    }

    #[test]
    fn grid_is_deterministic() {
        let s = GridSpec::with_bins(-2.0, 0.25, 16, 20.0, 33, 5);
        assert_eq!(build_grid(&unit(), &s).unwrap(), build_grid(&unit(), &s).unwrap());
    }

    fn grid(t_start: f64, n_t: usize) -> SimulationGrid {
        build_grid(&unit(), &GridSpec::with_bins(t_start, 1.0, n_t, 20.0, 8, 2)).unwrap()
    }

    #[test]
    fn rase_sequence_regions() {
        let g = grid(-4.0, 8);
        let seq = build_sequence(&g, vec![PulseEvent::pi(-4.0), PulseEvent::pi(0.0)]).unwrap();
        assert_eq!(
            seq.regions,
            vec![
                Region { start: -4.0, end: 0.0, regime: Regime::Excited },
                Region { start: 0.0, end: f64::INFINITY, regime: Regime::Ground },
            ]
        );
    }

    #[test]
    fn echo_sequence_regions() {
        let g = grid(0.0, 8);
        let seq = build_sequence(&g, vec![PulseEvent::weak_square(0.0, 1.0, 1.0), PulseEvent::pi(4.0)]).unwrap();
        assert_eq!(
            seq.regions,
            vec![
                Region { start: 0.0, end: 4.0, regime: Regime::Ground },
                Region { start: 4.0, end: f64::INFINITY, regime: Regime::Excited },
            ]
        );
    }

    #[test]
    fn empty_sequence_is_ground() {
        let seq = build_sequence(&grid(0.0, 4), vec![]).unwrap();
        assert_eq!(seq.regions.len(), 1);
        assert_eq!(seq.regions[0].regime, Regime::Ground);
    }

    #[test]
    fn sequence_errors() {
        let g = grid(0.0, 8);
        assert!(build_sequence(&g, vec![PulseEvent::pi(2.5)]).is_err());
        assert!(build_sequence(&g, vec![PulseEvent::pi(3.0), PulseEvent::pi(2.0)]).is_err());
        assert!(build_sequence(&g, vec![PulseEvent::weak_square(0.0, 1.0, 3.0), PulseEvent::pi(2.0)]).is_err());
    }

    #[test]
    fn regimes_alternate() {
        for n in 0..=5 {
            let g = grid(0.0, 8);
            let events = (1..=n).map(|k| PulseEvent::pi(k as f64)).collect();
            let seq = build_sequence(&g, events).unwrap();
            assert_eq!(seq.regions.len(), n + 1);
            for (i, r) in seq.regions.iter().enumerate() {
                let want = if i % 2 == 0 { Regime::Ground } else { Regime::Excited };
                assert_eq!(r.regime, want);
            }
        }
    }

    #[test]
    fn square_input_bin_amplitudes() {
        let g = grid(0.0, 4);
        let seq = build_sequence(&g, vec![PulseEvent::weak_square(0.5, 2.0, 2.0)]).unwrap();
        assert_eq!(seq.input_amplitudes(&g), vec![1.0, 2.0, 1.0, 0.0]);
    }

    #[test]
    fn ledger_unit_commutator() {
        let p = PhysicalParams::new(0.7, 2.0).unwrap();
        let g = build_grid(&p, &GridSpec::with_bins(0.0, 0.3, 5, 20.0, 7, 3)).unwrap();
        let ledger = ModeLedger::for_grid(&g, &p, Regime::Excited);
        assert_eq!(ledger.len(), 5 + 21);
        assert!(ledger.ids_consistent());
        for e in &ledger.entries {
            let x = e.normalization * e.normalization * e.measure;
            assert!((x - 1.0).abs() < 1e-12, "{e:?}");
        }
        let a = ledger
            .find(ModeKind::InitialExcitedAtomic, ModeCoords::Atomic { z_slice: 2, delta_bin: 6 })
            .unwrap();
        assert_eq!(a.id, ledger.len() - 1);
    }
}
