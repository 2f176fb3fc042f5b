//! The named experiments. Each returns checks and tables plus a JSON result blob.

use num_complex::Complex64 as C64;
use rase_core::correlators::{
    closed_form_ase_flux, closed_form_efficiency, closed_form_r, closed_form_r_crossing, model_echo_efficiency,
    model_r, moment_rows, rase_point, scan_r, second_moments,
};
use rase_core::integrator::{
    imperfect_pi_residual, integrate, linear_ode_oracle, pulse_area, BlochState, ORACLE_MAX_BINS, ORACLE_MAX_DELTA,
};
use rase_core::kernel::{
    anomalous_residual, compose_two_pulse_echo, linear_echo_efficiency, propagate, verify_symplectic, BogoliubovMap,
};
use rase_core::model::{build_grid, build_sequence, PhysicalParams, PulseEvent, PulseSequence, SimulationGrid};
use rase_core::paraxial::{kspace_rase_correlations, TransverseGrid};
use rase_core::tolerances::{CROSSING, CROSSING_ABS};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig};

/// Failure while running an experiment.
#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Core(rase_core::Error),
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<rase_core::Error> for RunError {
    fn from(e: rase_core::Error) -> Self {
        RunError::Core(e)
    }
}

type Run<T> = Result<T, RunError>;

/// One numeric comparison.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub reference: f64,
    /// `relative`, `absolute` or `upper-bound`.
    pub kind: &'static str,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    pub fn relative(name: &str, value: f64, reference: f64, tolerance: f64) -> Self {
        let pass = ((value - reference) / reference).abs() <= tolerance;
        Check { name: name.into(), value, reference, kind: "relative", tolerance, pass }
    }

    pub fn absolute(name: &str, value: f64, reference: f64, tolerance: f64) -> Self {
        let pass = (value - reference).abs() <= tolerance;
        Check { name: name.into(), value, reference, kind: "absolute", tolerance, pass }
    }

    /// Passes when `value <= bound`; `reference` is the bound.
    pub fn upper(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, reference: bound, kind: "upper-bound", tolerance: 0.0, pass: value <= bound }
    }

    /// Passes when `value > bound`.
    pub fn lower(name: &str, value: f64, bound: f64) -> Self {
        Check { name: name.into(), value, reference: bound, kind: "lower-bound", tolerance: 0.0, pass: value > bound }
    }
}

/// A CSV table.
#[derive(Clone, Debug)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(name: &str, header: &[&'static str]) -> Self {
        Table { name: name.into(), header: header.to_vec(), rows: Vec::new() }
    }
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
    pub results: Value,
}

pub fn run(cfg: &ExperimentConfig, verify: bool) -> Run<Outcome> {
    cfg.params.validate()?;
    let mut out = match cfg.experiment.as_str() {
        "absorb" => absorb(cfg),
        "echo" => echo(cfg),
        "ase" => ase(cfg),
        "rase" => rase(cfg),
        "cs-scan" => cs_scan(cfg),
        "area" => area(cfg),
        "imperfect-pi" => imperfect_pi(cfg),
        "phasematch" => phasematch(cfg),
        "oracle-check" => oracle_check(cfg),
        other => Err(ConfigError::new("unknown-experiment", format!("unknown experiment {other:?}")).into()),
    }?;
    if verify && matches!(cfg.experiment.as_str(), "absorb" | "echo" | "ase") {
        let (grid, seq) = engine_setup(cfg)?;
        let map = propagate(&grid, &cfg.params, &seq)?;
        out.checks.extend(verify_map(cfg, &grid, &seq, &map)?);
    }
    Ok(out)
}

fn engine_setup(cfg: &ExperimentConfig) -> Run<(SimulationGrid, PulseSequence)> {
    let grid = build_grid(&cfg.params, cfg.require(&cfg.grid, "grid")?)?;
    let mut events = cfg.sequence.clone();
    if cfg.experiment == "ase" && !events.iter().any(|e| e.is_pi()) {
        events.insert(0, PulseEvent::pi(grid.t_start));
    }
    let seq = build_sequence(&grid, events)?;
    Ok((grid, seq))
}

/// Commutator residuals, and the ODE oracle when the grid is small enough.
fn verify_map(cfg: &ExperimentConfig, grid: &SimulationGrid, seq: &PulseSequence, map: &BogoliubovMap) -> Run<Vec<Check>> {
    let tol = &cfg.tolerances;
    let mut checks = vec![
        Check::upper("symplectic_residual", verify_symplectic(map), tol.symplectic_max),
        Check::upper("anomalous_commutator_residual", anomalous_residual(map), tol.symplectic_max),
    ];
    if grid.n_t() <= ORACLE_MAX_BINS && grid.n_delta() <= ORACLE_MAX_DELTA {
        let oracle = linear_ode_oracle(&cfg.params, grid, seq)?;
        checks.push(Check::upper("oracle_relative_distance", relative_distance(map, &oracle), tol.oracle_rel));
    }
    Ok(checks)
}

/// `max |A - B| / max |A|` over both blocks.
pub fn relative_distance(a: &BogoliubovMap, b: &BogoliubovMap) -> f64 {
    let diff = a
        .particle
        .iter()
        .zip(b.particle.iter())
        .chain(a.conjugate.iter().zip(b.conjugate.iter()))
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max);
    let scale = a.particle.iter().chain(a.conjugate.iter()).map(|x| x.norm()).fold(0.0, f64::max);
    diff / scale
}

fn padded_input(map: &BogoliubovMap, amplitudes: &[f64]) -> Vec<C64> {
    let mut x = vec![C64::new(0.0, 0.0); map.n_inputs()];
    for (xi, &a) in x.iter_mut().zip(amplitudes) {
        xi.re = a;
    }
    x
}

fn absorb(cfg: &ExperimentConfig) -> Run<Outcome> {
    let (grid, seq) = engine_setup(cfg)?;
    if seq.pi_events().next().is_some() {
        return Err(ConfigError::new("invalid-sequence", "absorb takes weak inputs only").into());
    }
    let amps = seq.input_amplitudes(&grid);
    let e_in: f64 = amps.iter().map(|a| a * a).sum();
    if e_in == 0.0 {
        return Err(ConfigError::new("invalid-sequence", "absorb needs a weak input").into());
    }
    let map = propagate(&grid, &cfg.params, &seq)?;
    let y = map.mean_response(&padded_input(&map, &amps));
    let overlap: C64 = amps.iter().zip(&y).map(|(a, z)| z * *a).sum();
    let transmission = overlap.re / e_in;
    let expected = (-0.5 * cfg.params.alpha_l()).exp();
    let tol = cfg.tolerances.transmission_rel;
    let mut table = Table::new("absorb", &["bin", "t", "input", "out_re", "out_im"]);
    for (n, (a, z)) in amps.iter().zip(&y).enumerate() {
        table.rows.push(vec![n as f64, grid.t_centers[n], *a, z.re, z.im]);
    }
    let mut out = Outcome {
        checks: vec![Check::relative("engine_transmission", transmission, expected, tol)],
        tables: vec![table],
        results: json!({ "engine_transmission": transmission, "expected": expected }),
    };
    if let Some(ic) = &cfg.integrator {
        let init = initial_state(ic);
        let tr = integrate(&cfg.params, &ic.grid, &ic.pulses, &init)?;
        let e_in: f64 = tr.times.iter().map(|&t| input_field(ic, t).powi(2)).sum();
        let e_out: f64 = tr.output.iter().map(|z| z.norm_sqr()).sum();
        let t_nl = (e_out / e_in).sqrt();
        out.checks.push(Check::relative("integrator_transmission", t_nl, expected, tol));
        out.results["integrator_transmission"] = json!(t_nl);
        out.results["integrator_bloch_drift"] = json!(tr.max_bloch_drift);
        let mut t = Table::new("absorb_integrator", &["t", "input", "out_re", "out_im"]);
        for (&time, z) in tr.times.iter().zip(&tr.output) {
            t.rows.push(vec![time, input_field(ic, time), z.re, z.im]);
        }
        out.tables.push(t);
    }
    Ok(out)
}

fn initial_state(ic: &crate::config::IntegratorConfig) -> BlochState {
    if ic.excited {
        BlochState::excited(ic.grid.n_z + 1, ic.grid.n_delta)
    } else {
        BlochState::ground(ic.grid.n_z + 1, ic.grid.n_delta)
    }
}

fn input_field(ic: &crate::config::IntegratorConfig, t: f64) -> f64 {
    ic.pulses.iter().map(|p| p.value(t)).sum()
}

fn echo(cfg: &ExperimentConfig) -> Run<Outcome> {
    let (grid, seq) = engine_setup(cfg)?;
    let pis: Vec<f64> = seq.pi_events().map(|e| e.time).collect();
    if pis.len() != 1 {
        return Err(ConfigError::new("invalid-sequence", "echo needs exactly one pi pulse").into());
    }
    let t_pi = pis[0];
    let amps = seq.input_amplitudes(&grid);
    let first_echo = grid.boundary_index(t_pi).expect("validated by build_sequence");
    if amps[first_echo..].iter().any(|&a| a != 0.0) || amps.iter().all(|&a| a == 0.0) {
        return Err(ConfigError::new("invalid-sequence", "echo needs a weak input before the pi pulse").into());
    }
    let map = compose_two_pulse_echo(&grid, &cfg.params, t_pi)?;
    let eff = linear_echo_efficiency(&map, &amps, first_echo);
    let x = cfg.params.alpha_l();
    let y = map.mean_response(&padded_input(&map, &amps));
    let mut table = Table::new("echo", &["bin", "t", "input", "out_energy"]);
    for (n, (a, z)) in amps.iter().zip(&y).enumerate() {
        table.rows.push(vec![n as f64, grid.t_centers[n], *a, z.norm_sqr()]);
    }
    Ok(Outcome {
        checks: vec![Check::relative("echo_efficiency", eff, closed_form_efficiency(x), cfg.tolerances.echo_rel)],
        tables: vec![table],
        results: json!({
            "echo_efficiency": eff,
            "closed_form_efficiency": closed_form_efficiency(x),
            "model_echo_efficiency": model_echo_efficiency(x),
        }),
    })
}

fn ase(cfg: &ExperimentConfig) -> Run<Outcome> {
    let (grid, seq) = engine_setup(cfg)?;
    let map = propagate(&grid, &cfg.params, &seq)?;
    let moments = second_moments(&map, cfg.tolerances.symplectic_max)?;
    let expected = closed_form_ase_flux(cfg.params.alpha_l());
    let regimes = seq.bin_regimes(&grid);
    let mut table = Table::new("ase", &["bin", "t", "n"]);
    let mut worst: Option<f64> = None;
    for (n, &flux) in moments.flux.iter().enumerate() {
        table.rows.push(vec![n as f64, grid.t_centers[n], flux]);
        if regimes[n] == rase_core::model::Regime::Excited {
            let w = worst.get_or_insert(flux);
            if (flux - expected).abs() > (*w - expected).abs() {
                *w = flux;
            }
        }
    }
    let worst = worst.ok_or_else(|| ConfigError::new("invalid-sequence", "no inverted bins in the window"))?;
    Ok(Outcome {
        checks: vec![Check::relative("ase_occupation_worst_bin", worst, expected, cfg.tolerances.ase_rel)],
        tables: vec![table],
        results: json!({ "worst_bin_occupation": worst, "closed_form_ase_flux": expected }),
    })
}

fn rase(cfg: &ExperimentConfig) -> Run<Outcome> {
    let spec = cfg.require(&cfg.scan, "scan")?;
    let x = cfg.params.alpha_l();
    let (row, moments) = rase_point(x, spec)?;
    let grid = build_grid(&PhysicalParams::from_alpha_l(x)?, &spec.grid_spec())?;
    let tol = &cfg.tolerances;
    let mut table = Table::new("rase_moments", &["t_i", "t_j", "g_re", "g_im", "m_re", "m_im", "n_i"]);
    for r in moment_rows(&moments, &grid.t_centers) {
        table.rows.push(vec![r.t_i, r.t_j, r.g_re, r.g_im, r.m_re, r.m_im, r.n_i]);
    }
    Ok(Outcome {
        checks: vec![
            Check::relative("mirror_r", row.r_numeric, row.r_closed, tol.r_rel),
            Check::relative("ase_occupation", row.n_ase, closed_form_ase_flux(x), tol.ase_rel),
            Check::upper("symplectic_residual", row.symplectic_residual, tol.symplectic_max),
        ],
        tables: vec![table],
        results: serde_json::to_value(&row).expect("row serializes"),
    })
}

const DEFAULT_SCAN: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];

fn cs_scan(cfg: &ExperimentConfig) -> Run<Outcome> {
    let spec = cfg.require(&cfg.scan, "scan")?;
    let alphas = if cfg.alpha_ls.is_empty() { DEFAULT_SCAN.to_vec() } else { cfg.alpha_ls.clone() };
    let rows = scan_r(&alphas, spec)?;
    let tol = &cfg.tolerances;
    let mut checks = Vec::new();
    let mut table = Table::new(
        "cs_scan",
        &["alpha_l", "r_numeric", "r_closed", "rel_err", "r_model", "n_ase", "n_rase", "anomalous", "symplectic_residual"],
    );
    for r in &rows {
        table.rows.push(vec![
            r.alpha_l,
            r.r_numeric,
            r.r_closed,
            r.rel_err,
            r.r_model,
            r.n_ase,
            r.n_rase,
            r.anomalous,
            r.symplectic_residual,
        ]);
        checks.push(Check::relative(&format!("r_at_{}", r.alpha_l), r.r_numeric, r.r_closed, tol.r_rel));
        if r.alpha_l <= 1.0 {
            checks.push(Check::lower(&format!("nonclassical_at_{}", r.alpha_l), r.r_numeric, 1.0));
        } else if r.alpha_l >= 1.5 {
            checks.push(Check::upper(&format!("classical_at_{}", r.alpha_l), r.r_numeric, 1.0));
        }
    }
    let crossing = closed_form_r_crossing()?;
    checks.push(Check::absolute("closed_form_crossing", crossing, CROSSING, CROSSING_ABS));
    Ok(Outcome {
        checks,
        tables: vec![table],
        results: json!({ "rows": rows, "closed_form_crossing": crossing }),
    })
}

fn area(cfg: &ExperimentConfig) -> Run<Outcome> {
    let ic = cfg.require(&cfg.integrator, "integrator")?;
    let tr = integrate(&cfg.params, &ic.grid, &ic.pulses, &initial_state(ic))?;
    let n_z = ic.grid.n_z;
    let theta0 = pulse_area(&tr, 0);
    let theta_l = pulse_area(&tr, n_z);
    let mut areas = Table::new("area", &["z", "area"]);
    for (k, &z) in tr.z.iter().enumerate() {
        areas.rows.push(vec![z, pulse_area(&tr, k)]);
    }
    let mut traj = Table::new("trajectory", &["t", "z", "field_re", "field_im", "sigma_z_mean"]);
    for (s, &t) in tr.snapshot_times.iter().enumerate() {
        for (k, &z) in tr.z.iter().enumerate() {
            let f = tr.field[[s, k]];
            traj.rows.push(vec![t, z, f.re, f.im, tr.sigma_z_mean[[s, k]]]);
        }
    }
    Ok(Outcome {
        checks: vec![Check::relative("exit_area", theta_l, theta0, cfg.tolerances.area_rel)],
        tables: vec![areas, traj],
        results: json!({
            "input_area": theta0,
            "exit_area": theta_l,
            "max_bloch_drift": tr.max_bloch_drift,
        }),
    })
}

fn imperfect_pi(cfg: &ExperimentConfig) -> Run<Outcome> {
    let ip = cfg.require(&cfg.imperfect_pi, "imperfect_pi")?;
    let series = imperfect_pi_residual(ip.eps, &ip.spec)?;
    let tol = &cfg.tolerances;
    let t_check = tol.imperfect_pi_time / ip.spec.half_span;
    let t_stop = ip.spec.second_pulse.unwrap_or(f64::INFINITY);
    let late = series
        .times
        .iter()
        .zip(&series.polarization)
        .filter(|(&t, _)| t >= t_check && t < t_stop)
        .map(|(_, &p)| p)
        .fold(0.0, f64::max);
    let mut checks = vec![Check::upper("residual_after_dephasing", late, ip.eps.abs() * tol.imperfect_pi_fraction)];
    let mut results = json!({ "max_residual_after_dephasing": late, "check_time": t_check });
    if let Some(t2) = ip.spec.second_pulse {
        let (t_peak, peak) = series
            .times
            .iter()
            .zip(&series.polarization)
            .filter(|(&t, _)| t >= t2)
            .fold((t2, 0.0), |acc, (&t, &p)| if p > acc.1 { (t, p) } else { acc });
        checks.push(Check::lower("rephased_burst_after_second_pulse", peak, ip.eps.abs() * tol.imperfect_pi_fraction));
        results["burst_peak"] = json!(peak);
        results["burst_time"] = json!(t_peak);
    }
    let mut table = Table::new("imperfect_pi", &["t", "polarization"]);
    for (&t, &p) in series.times.iter().zip(&series.polarization) {
        table.rows.push(vec![t, p]);
    }
    Ok(Outcome { checks, tables: vec![table], results })
}

fn phasematch(cfg: &ExperimentConfig) -> Run<Outcome> {
    let spec = cfg.require(&cfg.scan, "scan")?;
    let tc = cfg.require(&cfg.transverse, "transverse")?;
    let grid = TransverseGrid::centered(tc.half_width, tc.k_unit, tc.k_pi);
    let c = kspace_rase_correlations(&cfg.params, &grid, spec)?;
    let mut pairing = Table::new("pairing", &["kx1", "ky1", "kx2", "ky2"]);
    let mut pairs = Table::new("pair_correlations", &["kx1", "ky1", "kx2", "ky2", "anomalous", "r"]);
    let mut worst = 0.0f64;
    for p in &c.pairs {
        let k = [p.k_ase[0] as f64, p.k_ase[1] as f64, p.k_rase[0] as f64, p.k_rase[1] as f64];
        pairing.rows.push(k.to_vec());
        pairs.rows.push(vec![k[0], k[1], k[2], k[3], p.anomalous, p.r]);
        worst = worst.max((p.r - c.scalar_r).abs() / c.scalar_r);
    }
    Ok(Outcome {
        checks: vec![
            Check::upper("max_off_pairing_anomalous", c.max_off_pairing, 0.0),
            Check::upper("pair_r_relative_spread", worst, cfg.tolerances.pair_r_rel),
        ],
        tables: vec![pairing, pairs],
        results: json!({ "scalar_r": c.scalar_r, "n_modes": grid.len(), "n_pairs": c.pairs.len() }),
    })
}

fn oracle_check(cfg: &ExperimentConfig) -> Run<Outcome> {
    let (grid, seq) = engine_setup(cfg)?;
    let a = propagate(&grid, &cfg.params, &seq)?;
    let b = linear_ode_oracle(&cfg.params, &grid, &seq)?;
    let d = relative_distance(&a, &b);
    let mut table = Table::new("oracle", &["row", "col", "engine_c_re", "engine_c_im", "oracle_c_re", "oracle_c_im", "engine_s_re", "engine_s_im", "oracle_s_re", "oracle_s_im"]);
    for ((i, j), c) in a.particle.indexed_iter() {
        let (oc, s, os) = (b.particle[[i, j]], a.conjugate[[i, j]], b.conjugate[[i, j]]);
        table.rows.push(vec![i as f64, j as f64, c.re, c.im, oc.re, oc.im, s.re, s.im, os.re, os.im]);
    }
    Ok(Outcome {
        checks: vec![
            Check::upper("oracle_relative_distance", d, cfg.tolerances.oracle_rel),
            Check::upper("symplectic_residual", verify_symplectic(&a), cfg.tolerances.symplectic_max),
        ],
        tables: vec![table],
        results: json!({ "relative_distance": d }),
    })
}

/// Closed-form references recorded in every metadata file.
pub fn references(alpha_l: f64) -> Value {
    json!({
        "alpha_l": alpha_l,
        "closed_form_r": closed_form_r(alpha_l).ok(),
        "model_r": model_r(alpha_l).ok(),
        "closed_form_efficiency": closed_form_efficiency(alpha_l),
        "model_echo_efficiency": model_echo_efficiency(alpha_l),
        "closed_form_ase_flux": closed_form_ase_flux(alpha_l),
        "amplitude_transmission": (-0.5 * alpha_l).exp(),
    })
}
