//! Acceptance suite. Runs every criterion in order, prints one PASS/FAIL line
//! each, and exits non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- 4 7` runs only criteria 4 and 7.

mod common;

use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ndarray::Array2;
use num_complex::Complex64 as C64;
use rase_core::correlators::{
    cauchy_schwartz_r, closed_form_ase_flux, closed_form_efficiency, closed_form_r, closed_form_r_crossing,
    intensity_correlation, model_echo_efficiency, rase_point, scan_r, second_moments, MomentSet, ScanRow, ScanSpec,
};
use rase_core::integrator::{
    imperfect_pi_residual, integrate, pulse_area, BlochState, MbGrid, PulseProfile, PulseShape, ResidualSpec,
};
use rase_core::kernel::{
    anomalous_residual, compose_rase, compose_two_pulse_echo, linear_echo_efficiency, propagate, verify_symplectic,
    BogoliubovMap,
};
use rase_core::integrator::linear_ode_oracle;
use rase_core::model::{build_grid, build_sequence, GridSpec, PhysicalParams, PulseEvent, Regime};
use rase_core::paraxial::{kspace_rase_correlations, TransverseGrid};
use rase_core::tolerances::{
    AREA_REL, ASE_REL, CROSSING, CROSSING_ABS, ECHO_REL, IMPERFECT_PI_FRACTION, IMPERFECT_PI_TIME, ORACLE_REL,
    PAIR_R_REL, R_REL, SYMPLECTIC_MAX, TRANSMISSION_REL, WICK_ABS,
};

use common::{random_map, Fock, W_DT};

/// Optical depths of the mirror-bin scan.
const SCAN: [f64; 5] = [0.25, 0.5, 1.0, 1.5, 2.0];
/// Optical depths of the echo and ASE checks.
const DEPTHS: [f64; 3] = [0.5, 1.0, 2.0];
/// Wall-clock budget of the reference scan.
const SCAN_BUDGET: Duration = Duration::from_secs(600);
/// Tabulated closed-form values at alpha_l = 1 and 2.
const TABULATED_R: [(f64, f64); 2] = [(1.0, 1.46412), (2.0, 0.47868)];

/// 64 time bins, W dt = 7 pi, 5632 detuning bins (d_delta * T = 0.5), 64 slices.
fn reference_scan() -> ScanSpec {
    ScanSpec { n_half: 32, dt: 1.0, w_dt: W_DT, n_delta: 5632, n_z: 64, mirror_offset: 15, symplectic_bound: SYMPLECTIC_MAX }
}

/// 16 bins with the same detuning resolution as the reference scan.
fn engine_grid() -> GridSpec {
    GridSpec::with_bins(0.0, 1.0, 16, W_DT, 1408, 32)
}

fn rel(value: f64, reference: f64) -> f64 {
    ((value - reference) / reference).abs()
}

type Criterion = (&'static str, fn(&mut Context) -> Verdict);

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: String) -> Self {
        Verdict { pass, detail }
    }
}

/// Results shared between criteria.
#[derive(Default)]
struct Context {
    scan: Option<(Vec<ScanRow>, Duration)>,
}

impl Context {
    fn scan(&mut self) -> &(Vec<ScanRow>, Duration) {
        self.scan.get_or_insert_with(|| {
            let start = Instant::now();
            let rows = scan_r(&SCAN, &reference_scan()).expect("reference scan");
            (rows, start.elapsed())
        })
    }
}

fn main() -> ExitCode {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        ("mirror-bin ratio on the reference grid", mirror_ratio),
        ("classical threshold", classical_threshold),
        ("two-pulse echo efficiency", echo_efficiency),
        ("ASE occupation", ase_occupation),
        ("mean-field transmission", transmission),
        ("commutator preservation", commutators),
        ("ODE oracle", oracle),
        ("Wick factorization", wick),
        ("pulse area and imperfect pi", area_and_dephasing),
        ("transverse phase matching", phase_matching),
    ];
    let mut ctx = Context::default();
    let mut failed = 0;
    for (n, (name, f)) in criteria.iter().enumerate() {
        let id = n + 1;
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(|| f(&mut ctx))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::new(false, format!("panicked: {msg}"))
        });
        if !verdict.pass {
            failed += 1;
        }
        println!(
            "{} acceptance #{id} {name} ({:.1}s): {}",
            if verdict.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            verdict.detail
        );
    }
    println!("acceptance: {failed} criteria failed");
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

/// Numeric mirror-bin R against the closed form within 2% at every scan
/// point, with the whole scan inside the time budget.
fn mirror_ratio(ctx: &mut Context) -> Verdict {
    let (rows, elapsed) = ctx.scan();
    let mut pass = *elapsed <= SCAN_BUDGET;
    let mut parts = vec![format!("scan {:.0}s", elapsed.as_secs_f64())];
    for r in rows {
        pass &= r.rel_err <= R_REL;
        parts.push(format!("R({})={:.5} vs {:.5} ({:.1}%)", r.alpha_l, r.r_numeric, r.r_closed, 100.0 * r.rel_err));
    }
    for (x, tabulated) in TABULATED_R {
        let r = closed_form_r(x).expect("finite");
        pass &= rel(r, tabulated) <= R_REL;
        parts.push(format!("closed form R({x})={r:.5} tabulated {tabulated}"));
    }
    Verdict::new(pass, parts.join(", "))
}

/// Numeric R above 1 up to alpha_l = 1, below 1 from 1.5, and the closed
/// form's root at 1.21 +- 0.01.
fn classical_threshold(ctx: &mut Context) -> Verdict {
    let (rows, _) = ctx.scan();
    let mut pass = true;
    let mut parts = Vec::new();
    for r in rows {
        let ok = if r.alpha_l <= 1.0 {
            r.r_numeric > 1.0
        } else if r.alpha_l >= 1.5 {
            r.r_numeric < 1.0
        } else {
            true
        };
        pass &= ok;
        parts.push(format!("R({})={:.5}{}", r.alpha_l, r.r_numeric, if ok { "" } else { " wrong side" }));
    }
    let root = closed_form_r_crossing().expect("bracketed root");
    pass &= (root - CROSSING).abs() <= CROSSING_ABS;
    parts.push(format!("closed-form root {root:.5}"));
    Verdict::new(pass, parts.join(", "))
}

/// Echo energy over input energy against sinh^2(alpha_l / 2) within 2%.
fn echo_efficiency(_: &mut Context) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for x in DEPTHS {
        let p = PhysicalParams::from_alpha_l(x).unwrap();
        let g = build_grid(&p, &engine_grid()).unwrap();
        let map = compose_two_pulse_echo(&g, &p, 8.0).unwrap();
        let seq = build_sequence(&g, vec![PulseEvent::weak_square(0.0, 1.0, 2.0), PulseEvent::pi(8.0)]).unwrap();
        let eff = linear_echo_efficiency(&map, &seq.input_amplitudes(&g), 8);
        let expected = closed_form_efficiency(x);
        pass &= rel(eff, expected) <= ECHO_REL;
        parts.push(format!(
            "eta({x})={eff:.5} vs {expected:.5} (4 sinh^2 = {:.5})",
            model_echo_efficiency(x)
        ));
    }
    Verdict::new(pass, parts.join(", "))
}

/// Vacuum-driven occupation of every inverted bin against e^(alpha_l) - 1.
fn ase_occupation(_: &mut Context) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for x in DEPTHS {
        let p = PhysicalParams::from_alpha_l(x).unwrap();
        let g = build_grid(&p, &engine_grid()).unwrap();
        let seq = build_sequence(&g, vec![PulseEvent::pi(0.0)]).unwrap();
        let map = propagate(&g, &p, &seq).unwrap();
        let m = second_moments(&map, SYMPLECTIC_MAX).unwrap();
        let expected = closed_form_ase_flux(x);
        let regimes = seq.bin_regimes(&g);
        let worst = m
            .flux
            .iter()
            .zip(&regimes)
            .filter(|(_, &r)| r == Regime::Excited)
            .map(|(&n, _)| rel(n, expected))
            .fold(0.0, f64::max);
        pass &= worst <= ASE_REL && regimes.iter().all(|&r| r == Regime::Excited);
        parts.push(format!("n({x}) worst bin {:.2e} off {expected:.5}", worst));
    }
    Verdict::new(pass, parts.join(", "))
}

/// Weak-pulse amplitude transmission e^(-alpha_l / 2) at alpha_l = 2 from
/// both the linear engine and the nonlinear integrator.
fn transmission(_: &mut Context) -> Verdict {
    let x = 2.0f64;
    let expected = (-0.5 * x).exp();
    let p = PhysicalParams::from_alpha_l(x).unwrap();

    let g = build_grid(&p, &engine_grid()).unwrap();
    let seq = build_sequence(&g, vec![PulseEvent::weak_square(2.0, 1.0, 6.0)]).unwrap();
    let map = propagate(&g, &p, &seq).unwrap();
    let amps = seq.input_amplitudes(&g);
    let mut input = vec![C64::new(0.0, 0.0); map.n_inputs()];
    for (z, &a) in input.iter_mut().zip(&amps) {
        z.re = a;
    }
    let y = map.mean_response(&input);
    let overlap: f64 = amps.iter().zip(&y).map(|(a, z)| a * z.re).sum();
    let engine = overlap / amps.iter().map(|a| a * a).sum::<f64>();

    let mb = MbGrid { half_span: 1.0, n_delta: 128, n_z: 64, t_start: 0.0, t_end: 45.0, dt: 0.05, record_stride: 20 };
    let pulse = PulseProfile { shape: PulseShape::Gaussian, amplitude: 1e-3, center: 20.0, duration: 4.0 };
    let tr = integrate(&p, &mb, std::slice::from_ref(&pulse), &BlochState::ground(mb.n_z + 1, mb.n_delta)).unwrap();
    let e_in: f64 = tr.times.iter().map(|&t| pulse.value(t).powi(2)).sum();
    let e_out: f64 = tr.output.iter().map(|z| z.norm_sqr()).sum();
    let nonlinear = (e_out / e_in).sqrt();

    let pass = rel(engine, expected) <= TRANSMISSION_REL && rel(nonlinear, expected) <= TRANSMISSION_REL;
    Verdict::new(pass, format!("engine {engine:.6}, integrator {nonlinear:.6}, expected {expected:.6}"))
}

fn rase_residual(spec: &ScanSpec, alpha_l: f64) -> f64 {
    let p = PhysicalParams::from_alpha_l(alpha_l).unwrap();
    let g = build_grid(&p, &spec.grid_spec()).unwrap();
    let map = compose_rase(&g, &p, g.t_start, 0.0).unwrap();
    verify_symplectic(&map).max(anomalous_residual(&map))
}

/// Residual below 1e-8 on the reference grids and strictly decreasing under
/// 2x refinement of each axis.
fn commutators(ctx: &mut Context) -> Verdict {
    let (rows, _) = ctx.scan();
    let worst_ref = rows.iter().map(|r| r.symplectic_residual).fold(0.0, f64::max);
    let mut pass = worst_ref < SYMPLECTIC_MAX;
    let mut parts = vec![format!("reference RASE maps max {worst_ref:.2e}")];

    let p = PhysicalParams::from_alpha_l(1.0).unwrap();
    let g = build_grid(&p, &engine_grid()).unwrap();
    let echo = compose_two_pulse_echo(&g, &p, 8.0).unwrap();
    let echo_res = verify_symplectic(&echo).max(anomalous_residual(&echo));
    pass &= echo_res < SYMPLECTIC_MAX;
    parts.push(format!("echo map {echo_res:.2e}"));

    // A 2x refinement of the full reference grid needs more memory than a
    // reference machine has, so the study refines a smaller base grid that
    // keeps W dt and d_delta * T fixed.
    let base = ScanSpec { n_half: 4, dt: 1.0, w_dt: W_DT, n_delta: 704, n_z: 16, mirror_offset: 1, symplectic_bound: SYMPLECTIC_MAX };
    let r0 = rase_residual(&base, 1.0);
    parts.push(format!("base {r0:.2e}"));
    let refined = [
        ("t", ScanSpec { n_half: 8, dt: 0.5, n_delta: 1408, mirror_offset: 3, ..base.clone() }),
        ("delta", ScanSpec { n_delta: 1408, ..base.clone() }),
        ("z", ScanSpec { n_z: 32, ..base.clone() }),
    ];
    for (axis, spec) in refined {
        let r = rase_residual(&spec, 1.0);
        pass &= r < r0 && r < SYMPLECTIC_MAX;
        parts.push(format!("{axis} x2 {r:.2e}"));
    }
    Verdict::new(pass, parts.join(", "))
}

/// `max |A - B| / max |A|` over both blocks.
fn relative_distance(a: &BogoliubovMap, b: &BogoliubovMap) -> f64 {
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

/// Engine maps against the forward ODE oracle on small grids.
fn oracle(_: &mut Context) -> Verdict {
    let p = PhysicalParams::from_alpha_l(1.0).unwrap();
    let g = build_grid(&p, &GridSpec::with_bins(0.0, 1.0, 8, W_DT, 50, 4)).unwrap();
    let cases = [
        ("ground", vec![]),
        ("inverted", vec![PulseEvent::pi(0.0)]),
        ("echo", vec![PulseEvent::pi(3.0)]),
        ("rase", vec![PulseEvent::pi(0.0), PulseEvent::pi(4.0)]),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, events) in cases {
        let seq = build_sequence(&g, events).unwrap();
        let d = relative_distance(&propagate(&g, &p, &seq).unwrap(), &linear_ode_oracle(&p, &g, &seq).unwrap());
        pass &= d <= ORACLE_REL;
        parts.push(format!("{name} {d:.2e}"));
    }
    Verdict::new(pass, parts.join(", "))
}

/// Wick fourth moments against brute-force Fock states, and R = 1/4 for two
/// independent thermal modes.
fn wick(_: &mut Context) -> Verdict {
    let modes = 4;
    let fock = Fock { modes, levels: 3 };
    let mut worst = 0.0f64;
    for seed in 0..24 {
        let map = random_map(modes, 10, seed);
        let m = MomentSet::from_blocks(&map.0, &map.1, (0..modes).collect());
        for i in 0..modes {
            for j in 0..modes {
                let brute = fock.normally_ordered_pair(&map, i, j);
                worst = worst.max((intensity_correlation(&m, i, j) - brute).abs());
            }
        }
    }

    // Modes 0 and 1 are each squeezed against their own ancilla (2 and 3).
    let (r0, r1) = (0.4f64, 0.9f64);
    let mut c = Array2::<C64>::zeros((2, 4));
    let mut s = Array2::<C64>::zeros((2, 4));
    c[[0, 0]] = r0.cosh().into();
    s[[0, 2]] = r0.sinh().into();
    c[[1, 1]] = r1.cosh().into();
    s[[1, 3]] = r1.sinh().into();
    let thermal = cauchy_schwartz_r(&MomentSet::from_blocks(&c, &s, vec![0, 1]), 0, 1, 0.0).unwrap().r;

    let pass = worst <= WICK_ABS && (thermal - 0.25).abs() <= f64::EPSILON;
    Verdict::new(pass, format!("max |wick - fock| {worst:.2e}, thermal R {thermal}"))
}

/// Exit area of a sech pi pulse at alpha_l = 5, and the dephasing of the
/// residual polarization after a pi(1 + eps) pulse.
fn area_and_dephasing(_: &mut Context) -> Verdict {
    let p = PhysicalParams::from_alpha_l(5.0).unwrap();
    let mb = MbGrid { half_span: 1.0, n_delta: 256, n_z: 64, t_start: 0.0, t_end: 30.0, dt: 0.005, record_stride: 200 };
    let pulse = PulseProfile::sech_with_area(PI, 1.0, 0.05);
    let tr = integrate(&p, &mb, &[pulse], &BlochState::ground(mb.n_z + 1, mb.n_delta)).unwrap();
    let exit = pulse_area(&tr, mb.n_z);
    let mut pass = rel(exit, PI) <= AREA_REL;

    let eps = 0.1;
    let spec = ResidualSpec { half_span: 1.0, n_delta: 4096, t_end: 40.0, dt: 0.05, second_pulse: None };
    let series = imperfect_pi_residual(eps, &spec).unwrap();
    let t_check = IMPERFECT_PI_TIME / spec.half_span;
    let late = series
        .times
        .iter()
        .zip(&series.polarization)
        .filter(|(&t, _)| t >= t_check)
        .map(|(_, &v)| v)
        .fold(0.0, f64::max);
    pass &= late < eps * IMPERFECT_PI_FRACTION;
    Verdict::new(
        pass,
        format!(
            "exit area {exit:.5} (pi = {PI:.5}, bloch drift {:.1e}), residual after {t_check} = {late:.2e} (bound {:.0e})",
            tr.max_bloch_drift,
            eps * IMPERFECT_PI_FRACTION
        ),
    )
}

/// Anomalous moments vanish off the phase-matched pairing and every pair
/// reproduces the one-dimensional R.
fn phase_matching(_: &mut Context) -> Verdict {
    let p = PhysicalParams::from_alpha_l(1.0).unwrap();
    let grid = TransverseGrid::centered(2, 0.1, [1, 0]);
    let spec = ScanSpec { n_half: 4, dt: 1.0, w_dt: W_DT, n_delta: 704, n_z: 16, mirror_offset: 1, symplectic_bound: SYMPLECTIC_MAX };
    let c = kspace_rase_correlations(&p, &grid, &spec).unwrap();
    let scalar = rase_point(1.0, &spec).unwrap().0.r_numeric;
    let spread = c.pairs.iter().map(|pr| rel(pr.r, c.scalar_r)).fold(0.0, f64::max);
    let pass = c.max_off_pairing == 0.0
        && spread <= PAIR_R_REL
        && !c.pairs.is_empty()
        && rel(c.scalar_r, scalar) <= PAIR_R_REL;
    Verdict::new(
        pass,
        format!(
            "{} pairs, max off-pairing |m| {:.1e}, pair R spread {spread:.1e} around {:.5} (1-D {scalar:.5})",
            c.pairs.len(),
            c.max_off_pairing,
            c.scalar_r
        ),
    )
}
