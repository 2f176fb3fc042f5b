//! Semiclassical Maxwell-Bloch solver and linear ODE oracle.
//!
//! The nonlinear solver treats the atoms as c-number Bloch vectors on a
//! `(z node, detuning bin)` lattice and the field as a Rabi frequency
//! `Omega = 2 a`:
//!
//! - `d sigma_-/dt = i D sigma_- - (i/2) Omega sigma_z`
//! - `d sigma_z/dt = i (Omega conj(sigma_-) - conj(Omega) sigma_-)`
//! - `d Omega/dz = (i alpha / pi) * integral of sigma_- over D`
//!
//! These conserve `|2 sigma_-|^2 + sigma_z^2` and linearize around
//! `sigma_z = -1` to the ground-regime equations used by the kernel engine.
//! Time stepping is classical RK4; at every stage the field is rebuilt from
//! the polarization by a cumulative trapezoid in `z`.

use ndarray::{Array2, Axis, Zip};
use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::kernel::{collective_weights, BogoliubovMap};
use crate::model::{ModeLedger, PhysicalParams, PulseSequence, Regime, SimulationGrid};
use crate::{Error, Result};

const I: C64 = C64 { re: 0.0, im: 1.0 };

/// Envelope of an input pulse.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PulseShape {
    /// `amplitude * sech((t - center) / duration)`.
    Sech,
    /// `amplitude * exp(-(t - center)^2 / (2 duration^2))`.
    Gaussian,
    /// `amplitude` on `[center - duration/2, center + duration/2)`.
    Square,
}

/// Real input envelope at `z = 0`, in Rabi-frequency units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseProfile {
    pub shape: PulseShape,
    pub amplitude: f64,
    pub center: f64,
    pub duration: f64,
}

impl PulseProfile {
    /// Sech pulse of the given area and duration.
    pub fn sech_with_area(area: f64, center: f64, duration: f64) -> Self {
        PulseProfile {
            shape: PulseShape::Sech,
            amplitude: area / (std::f64::consts::PI * duration),
            center,
            duration,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        let x = (t - self.center) / self.duration;
        match self.shape {
            PulseShape::Sech => self.amplitude / x.cosh(),
            PulseShape::Gaussian => self.amplitude * (-0.5 * x * x).exp(),
            PulseShape::Square => {
                if (-0.5..0.5).contains(&x) {
                    self.amplitude
                } else {
                    0.0
                }
            }
        }
    }

    /// Area of the untruncated envelope.
    pub fn analytic_area(&self) -> f64 {
        let d = self.duration;
        self.amplitude
            * match self.shape {
                PulseShape::Sech => std::f64::consts::PI * d,
                PulseShape::Gaussian => (2.0 * std::f64::consts::PI).sqrt() * d,
                PulseShape::Square => d,
            }
    }

    /// Area on the integrator's time grid, by the same trapezoid rule that
    /// [`pulse_area`] applies to the propagated field.
    pub fn sampled_area(&self, t_start: f64, dt: f64, n_steps: usize) -> f64 {
        trapezoid((0..=n_steps).map(|s| C64::new(self.value(t_start + dt * s as f64), 0.0)), dt).norm()
    }
}

fn trapezoid<It: Iterator<Item = C64>>(samples: It, dt: f64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    let mut prev: Option<C64> = None;
    for v in samples {
        if let Some(p) = prev {
            acc += 0.5 * dt * (p + v);
        }
        prev = Some(v);
    }
    acc
}

/// Discretization of the nonlinear solver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MbGrid {
    /// Half span `W` of the flat detuning profile.
    pub half_span: f64,
    pub n_delta: usize,
    /// Number of slices; the solver keeps `n_z + 1` nodes including both faces.
    pub n_z: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Full-`z` snapshots are kept every `record_stride` steps.
    pub record_stride: usize,
}

impl MbGrid {
    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    pub fn d_delta(&self) -> f64 {
        2.0 * self.half_span / self.n_delta as f64
    }

    pub fn deltas(&self) -> Vec<f64> {
        let dd = self.d_delta();
        (0..self.n_delta).map(|j| -self.half_span + dd * (j as f64 + 0.5)).collect()
    }

    fn validate(&self) -> Result<()> {
        if !(self.half_span > 0.0 && self.dt > 0.0 && self.t_end > self.t_start) {
            return Err(Error::InvalidGrid("need W > 0, dt > 0 and t_end > t_start".into()));
        }
        if self.n_delta == 0 || self.n_z == 0 || self.record_stride == 0 {
            return Err(Error::InvalidGrid("n_delta, n_z and record_stride must be positive".into()));
        }
        Ok(())
    }
}

/// Atomic state on the `(z node, detuning)` lattice plus the field at each node.
#[derive(Clone, Debug, PartialEq)]
pub struct BlochState {
    pub sigma_minus: Array2<C64>,
    pub sigma_z: Array2<f64>,
    pub field: Vec<C64>,
}

impl BlochState {
    pub fn ground(n_nodes: usize, n_delta: usize) -> Self {
        BlochState {
            sigma_minus: Array2::zeros((n_nodes, n_delta)),
            sigma_z: Array2::from_elem((n_nodes, n_delta), -1.0),
            field: vec![C64::new(0.0, 0.0); n_nodes],
        }
    }

    pub fn excited(n_nodes: usize, n_delta: usize) -> Self {
        let mut s = Self::ground(n_nodes, n_delta);
        s.sigma_z.fill(1.0);
        s
    }

    /// Instantaneous rotation by `pi` about the x axis:
    /// `sigma_- -> conj(sigma_-)`, `sigma_z -> -sigma_z`.
    pub fn apply_ideal_pi(&mut self) {
        self.sigma_minus.mapv_inplace(|z| z.conj());
        self.sigma_z.mapv_inplace(|z| -z);
    }

    /// Largest deviation of `|2 sigma_-|^2 + sigma_z^2` from one.
    pub fn bloch_drift(&self) -> f64 {
        self.sigma_minus
            .iter()
            .zip(self.sigma_z.iter())
            .map(|(m, z)| (4.0 * m.norm_sqr() + z * z - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Result of [`integrate`].
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub dt: f64,
    /// Step times `t_start + s dt`, `s = 0..=n_steps`.
    pub times: Vec<f64>,
    /// Field at the sample exit at every step time.
    pub output: Vec<C64>,
    /// Node positions.
    pub z: Vec<f64>,
    /// Snapshot times. The arrays below are indexed `[snapshot, node]`.
    pub snapshot_times: Vec<f64>,
    pub field: Array2<C64>,
    pub sigma_z_mean: Array2<f64>,
    /// `integral of sigma_- dD`.
    pub polarization: Array2<C64>,
    /// Trapezoid integral of the field over the whole run, per node.
    pub field_integral: Vec<C64>,
    pub max_bloch_drift: f64,
    pub final_state: BlochState,
}

/// `|integral of Omega(z, t) dt|` at node `z`.
pub fn pulse_area(trajectory: &Trajectory, z: usize) -> f64 {
    trajectory.field_integral[z].norm()
}

struct Rhs<'a> {
    deltas: &'a [f64],
    d_delta: f64,
    dz: f64,
    alpha: f64,
}

impl Rhs<'_> {
    /// Field at every node from the polarization and the input `omega0`.
    fn field(&self, sm: &Array2<C64>, omega0: C64) -> Vec<C64> {
        let pol: Vec<C64> = sm.outer_iter().map(|r| r.sum() * self.d_delta).collect();
        let mut out = Vec::with_capacity(pol.len());
        out.push(omega0);
        let mut acc = C64::new(0.0, 0.0);
        for k in 1..pol.len() {
            acc += 0.5 * self.dz * (pol[k - 1] + pol[k]);
            out.push(omega0 + I * (self.alpha / std::f64::consts::PI) * acc);
        }
        out
    }

    fn eval(&self, sm: &Array2<C64>, sz: &Array2<f64>, omega0: C64, dsm: &mut Array2<C64>, dsz: &mut Array2<f64>) -> Vec<C64> {
        let field = self.field(sm, omega0);
        Zip::from(dsm.axis_iter_mut(Axis(0)))
            .and(dsz.axis_iter_mut(Axis(0)))
            .and(sm.axis_iter(Axis(0)))
            .and(sz.axis_iter(Axis(0)))
            .and(&field)
            .par_for_each(|mut dm, mut dz, m, z, &om| {
                for j in 0..self.deltas.len() {
                    let (mj, zj) = (m[j], z[j]);
                    dm[j] = I * self.deltas[j] * mj - 0.5 * I * om * zj;
                    dz[j] = (I * (om * mj.conj() - om.conj() * mj)).re;
                }
            });
        field
    }
}

/// Integrates the nonlinear equations from `initial` with the summed input
/// envelopes driving the `z = 0` face.
pub fn integrate(
    params: &PhysicalParams,
    grid: &MbGrid,
    input: &[PulseProfile],
    initial: &BlochState,
) -> Result<Trajectory> {
    params.validate()?;
    grid.validate()?;
    let n_nodes = grid.n_z + 1;
    if initial.sigma_minus.dim() != (n_nodes, grid.n_delta) || initial.sigma_z.dim() != (n_nodes, grid.n_delta) {
        return Err(Error::InvalidGrid("initial state does not match the grid".into()));
    }
    let peak: f64 = input.iter().map(|p| p.amplitude.abs()).sum();
    let limit = 0.1 / grid.half_span.max(peak);
    if grid.dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepCondition { dt: grid.dt, limit });
    }

    let deltas = grid.deltas();
    let rhs = Rhs { deltas: &deltas, d_delta: grid.d_delta(), dz: params.length / grid.n_z as f64, alpha: params.alpha };
    let omega0 = |t: f64| C64::new(input.iter().map(|p| p.value(t)).sum(), 0.0);
    let n_steps = grid.n_steps();
    let dt = grid.dt;

    let mut sm = initial.sigma_minus.clone();
    let mut sz = initial.sigma_z.clone();
    let shape = sm.dim();
    let mut k_m: [Array2<C64>; 4] = std::array::from_fn(|_| Array2::zeros(shape));
    let mut k_z: [Array2<f64>; 4] = std::array::from_fn(|_| Array2::zeros(shape));

    let mut times = Vec::with_capacity(n_steps + 1);
    let mut output = Vec::with_capacity(n_steps + 1);
    let mut snap_t = Vec::new();
    let mut snap_field = Vec::new();
    let mut snap_sz = Vec::new();
    let mut snap_pol = Vec::new();
    let mut integral = vec![C64::new(0.0, 0.0); n_nodes];
    let mut prev_field: Option<Vec<C64>> = None;
    let mut drift = initial.bloch_drift();

    let mut record = |s: usize, t: f64, field: &[C64], sm: &Array2<C64>, sz: &Array2<f64>| {
        if s.is_multiple_of(grid.record_stride) || s == n_steps {
            snap_t.push(t);
            snap_field.extend_from_slice(field);
            snap_sz.extend(sz.outer_iter().map(|r| r.mean().unwrap_or(0.0)));
            snap_pol.extend(sm.outer_iter().map(|r| r.sum() * rhs.d_delta));
        }
    };

    for s in 0..=n_steps {
        let t = grid.t_start + dt * s as f64;
        let field = if s < n_steps {
            let [k1m, k2m, k3m, k4m] = &mut k_m;
            let [k1z, k2z, k3z, k4z] = &mut k_z;
            let f = rhs.eval(&sm, &sz, omega0(t), k1m, k1z);
            let om_half = omega0(t + 0.5 * dt);
            rhs.eval(&(&sm + &(&*k1m * (0.5 * dt))), &(&sz + &(&*k1z * (0.5 * dt))), om_half, k2m, k2z);
            rhs.eval(&(&sm + &(&*k2m * (0.5 * dt))), &(&sz + &(&*k2z * (0.5 * dt))), om_half, k3m, k3z);
            rhs.eval(&(&sm + &(&*k3m * dt)), &(&sz + &(&*k3z * dt)), omega0(t + dt), k4m, k4z);
            Zip::from(&mut sm).and(&*k1m).and(&*k2m).and(&*k3m).and(&*k4m).for_each(|y, a, b, c, d| {
                *y += (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d);
            });
            Zip::from(&mut sz).and(&*k1z).and(&*k2z).and(&*k3z).and(&*k4z).for_each(|y, a, b, c, d| {
                *y += (dt / 6.0) * (a + 2.0 * b + 2.0 * c + d);
            });
            f
        } else {
            rhs.field(&sm, omega0(t))
        };
        if field.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite { step: s, time: t });
        }
        if let Some(p) = &prev_field {
            for ((acc, a), b) in integral.iter_mut().zip(p).zip(&field) {
                *acc += 0.5 * dt * (a + b);
            }
        }
        times.push(t);
        output.push(field[n_nodes - 1]);
        // Snapshot of the state at time t uses the pre-step atoms; the field
        // was evaluated from them.
        record(s, t, &field, &sm, &sz);
        prev_field = Some(field);
        if s < n_steps {
            let step_drift = sm
                .iter()
                .zip(sz.iter())
                .map(|(m, z)| (4.0 * m.norm_sqr() + z * z - 1.0).abs())
                .fold(0.0, f64::max);
            if !step_drift.is_finite() {
                return Err(Error::NonFinite { step: s, time: t + dt });
            }
            drift = drift.max(step_drift);
        }
    }

    let n_snap = snap_t.len();
    let final_field = prev_field.unwrap_or_default();
    Ok(Trajectory {
        dt,
        times,
        output,
        z: (0..n_nodes).map(|k| params.length * k as f64 / grid.n_z as f64).collect(),
        snapshot_times: snap_t,
        field: Array2::from_shape_vec((n_snap, n_nodes), snap_field).expect("snapshot shape"),
        sigma_z_mean: Array2::from_shape_vec((n_snap, n_nodes), snap_sz).expect("snapshot shape"),
        polarization: Array2::from_shape_vec((n_snap, n_nodes), snap_pol).expect("snapshot shape"),
        field_integral: integral,
        max_bloch_drift: drift,
        final_state: BlochState { sigma_minus: sm, sigma_z: sz, field: final_field },
    })
}

/// Setup of [`imperfect_pi_residual`]: a flat detuning profile of half span
/// `W`, a first pulse at `t = 0`, an optional second pulse, and sampling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSpec {
    pub half_span: f64,
    pub n_delta: usize,
    pub t_end: f64,
    pub dt: f64,
    pub second_pulse: Option<f64>,
}

/// Residual transverse polarization after pulses of area `pi + eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub times: Vec<f64>,
    /// `|<2 sigma_->|`, averaged over the detuning profile.
    pub polarization: Vec<f64>,
}

/// Ground-state atoms hit at `t = 0` by a resonant pulse of area `pi + eps`
/// (a rotation about x, instantaneous on the scale `1/W`), then precessing
/// freely with no field feedback. With a second pulse the same rotation is
/// applied again at that time.
///
/// The residual `|<2 sigma_->| = |sin(eps)| |sinc(W t)|` dephases within a
/// few `1/W` and only reappears as an echo at `2 t_2` after a second pulse.
pub fn imperfect_pi_residual(eps: f64, spec: &ResidualSpec) -> Result<ResidualSeries> {
    if !(spec.half_span > 0.0 && spec.dt > 0.0 && spec.t_end > 0.0) || spec.n_delta == 0 {
        return Err(Error::InvalidParameter("residual spec needs W, dt, t_end > 0".into()));
    }
    let dd = 2.0 * spec.half_span / spec.n_delta as f64;
    let deltas: Vec<f64> = (0..spec.n_delta).map(|j| -spec.half_span + dd * (j as f64 + 0.5)).collect();
    let theta = std::f64::consts::PI + eps;
    // Bloch vector (u, v, w) with sigma_- = (u - i v) / 2, starting at (0, 0, -1).
    type Bloch = (f64, f64, f64);
    let rotate = |u: f64, v: f64, w: f64| (u, v * theta.cos() - w * theta.sin(), v * theta.sin() + w * theta.cos());
    let after_first: Vec<Bloch> = deltas.iter().map(|_| rotate(0.0, 0.0, -1.0)).collect();
    let precess = |(u, v, w): Bloch, d: f64, t: f64| {
        // sigma_- picks up exp(i D t).
        let m = C64::new(u, -v) * C64::from_polar(1.0, d * t);
        (m.re, -m.im, w)
    };
    let after_second: Option<(f64, Vec<Bloch>)> = spec.second_pulse.map(|t2| {
        let states = after_first
            .iter()
            .zip(&deltas)
            .map(|(&s, &d)| {
                let (u, v, w) = precess(s, d, t2);
                rotate(u, v, w)
            })
            .collect();
        (t2, states)
    });
    let n = (spec.t_end / spec.dt).round() as usize;
    let times: Vec<f64> = (0..=n).map(|s| spec.dt * s as f64).collect();
    let polarization = times
        .par_iter()
        .map(|&t| {
            let sum: C64 = match &after_second {
                Some((t2, states)) if t >= *t2 => states
                    .iter()
                    .zip(&deltas)
                    .map(|(&s, &d)| {
                        let (u, v, _) = precess(s, d, t - t2);
                        C64::new(u, -v)
                    })
                    .sum(),
                _ => after_first
                    .iter()
                    .zip(&deltas)
                    .map(|(&s, &d)| {
                        let (u, v, _) = precess(s, d, t);
                        C64::new(u, -v)
                    })
                    .sum(),
            };
            sum.norm() / spec.n_delta as f64
        })
        .collect();
    Ok(ResidualSeries { times, polarization })
}

/// Largest oracle problem: time bins and detuning bins.
pub const ORACLE_MAX_BINS: usize = 16;
pub const ORACLE_MAX_DELTA: usize = 50;
/// RK4 substeps per elementary coupling.
const ORACLE_SUBSTEPS: usize = 64;

/// Field-output map of the linearized equations, built column by column by
/// propagating c-number unit excitations forward in time.
///
/// Atoms are kept in the lab frame: during every bin they precess by
/// `exp(+-i D dt)` and then, slice by slice, exchange amplitude with the field
/// bin through the coupling flow
///
/// - ground: `dA/ds = i theta u^dagger b`, `db/ds = i theta u A`,
/// - excited: `dA/ds = i theta conj(u^dagger b)`, `db/ds = i theta u conj(A)`,
///
/// integrated by RK4 over `s in [0, 1]` in the full atomic space. The map is
/// real-linear, so each column needs two runs: `C = (out(1) - i out(i)) / 2`
/// and `S = (out(1) + i out(i)) / 2`.
pub fn linear_ode_oracle(
    params: &PhysicalParams,
    grid: &SimulationGrid,
    sequence: &PulseSequence,
) -> Result<BogoliubovMap> {
    params.validate()?;
    if grid.n_t() > ORACLE_MAX_BINS || grid.n_delta() > ORACLE_MAX_DELTA {
        return Err(Error::CapExceeded(format!(
            "oracle handles at most {ORACLE_MAX_BINS} time bins and {ORACLE_MAX_DELTA} detuning bins"
        )));
    }
    let regimes = sequence.bin_regimes(grid);
    let w = collective_weights(grid);
    let x = params.alpha * grid.dz();
    let theta_g = (-0.5 * x).exp().acos();
    let theta_e = (0.5 * x).exp().acosh();
    let (n_t, n_z, n_d) = (grid.n_t(), grid.n_z(), grid.n_delta());
    let n_in = n_t + n_z * n_d;

    let run = |col: usize, value: C64| -> Vec<C64> {
        let mut field = vec![C64::new(0.0, 0.0); n_t];
        let mut atoms = vec![C64::new(0.0, 0.0); n_z * n_d];
        if col < n_t {
            field[col] = value;
        } else {
            atoms[col - n_t] = value;
        }
        for (n, &regime) in regimes.iter().enumerate() {
            let sign = match regime {
                Regime::Ground => 1.0,
                Regime::Excited => -1.0,
            };
            for (a, d) in atoms.iter_mut().zip(grid.delta_centers.iter().cycle()) {
                *a *= C64::from_polar(1.0, sign * d * grid.dt);
            }
            let u: Vec<C64> = match regime {
                Regime::Ground => w.clone(),
                Regime::Excited => w.iter().map(|z| z.conj()).collect(),
            };
            let theta = match regime {
                Regime::Ground => theta_g,
                Regime::Excited => theta_e,
            };
            let mut a = field[n];
            for k in 0..n_z {
                let b = &mut atoms[k * n_d..(k + 1) * n_d];
                coupling_flow(regime, theta, &u, &mut a, b);
            }
            field[n] = a;
        }
        field
    };

    let columns: Vec<(Vec<C64>, Vec<C64>)> = (0..n_in)
        .into_par_iter()
        .map(|j| (run(j, C64::new(1.0, 0.0)), run(j, I)))
        .collect();
    let mut particle = Array2::zeros((n_t, n_in));
    let mut conjugate = Array2::zeros((n_t, n_in));
    for (j, (o1, oi)) in columns.iter().enumerate() {
        for m in 0..n_t {
            particle[[m, j]] = 0.5 * (o1[m] - I * oi[m]);
            conjugate[[m, j]] = 0.5 * (o1[m] + I * oi[m]);
        }
    }
    let initial = sequence.regime_at(grid.t_start);
    Ok(BogoliubovMap {
        particle,
        conjugate,
        ledger: ModeLedger::for_grid(grid, params, initial),
        output_bins: (0..n_t).collect(),
        atom_regime: regimes.last().copied().unwrap_or(initial),
    })
}

fn coupling_flow(regime: Regime, theta: f64, u: &[C64], a: &mut C64, b: &mut [C64]) {
    let deriv = |a: C64, b: &[C64]| -> (C64, Vec<C64>) {
        let c: C64 = u.iter().zip(b).map(|(u, b)| u.conj() * b).sum();
        match regime {
            Regime::Ground => (I * theta * c, u.iter().map(|u| I * theta * u * a).collect()),
            Regime::Excited => (I * theta * c.conj(), u.iter().map(|u| I * theta * u * a.conj()).collect()),
        }
    };
    let h = 1.0 / ORACLE_SUBSTEPS as f64;
    let axpy = |b: &[C64], k: &[C64], s: f64| -> Vec<C64> { b.iter().zip(k).map(|(b, k)| b + k * s).collect() };
    for _ in 0..ORACLE_SUBSTEPS {
        let (ka1, kb1) = deriv(*a, b);
        let (ka2, kb2) = deriv(*a + ka1 * (0.5 * h), &axpy(b, &kb1, 0.5 * h));
        let (ka3, kb3) = deriv(*a + ka2 * (0.5 * h), &axpy(b, &kb2, 0.5 * h));
        let (ka4, kb4) = deriv(*a + ka3 * h, &axpy(b, &kb3, h));
        *a += (ka1 + 2.0 * ka2 + 2.0 * ka3 + ka4) * (h / 6.0);
        for (j, bj) in b.iter_mut().enumerate() {
            *bj += (kb1[j] + 2.0 * kb2[j] + 2.0 * kb3[j] + kb4[j]) * (h / 6.0);
        }
    }
}
