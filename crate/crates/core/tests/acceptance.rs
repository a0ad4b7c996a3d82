//! Acceptance criteria A1 to A8. Runs without the libtest harness so that
//! every criterion prints one PASS/FAIL line even when others fail.
//!
//! `cargo test --test acceptance -- A3 A5` runs a subset.

use std::process::ExitCode;
use std::time::Instant;

use vadose_rbf::cloud::{Face, Side};
use vadose_rbf::diagnostics::rmse;
use vadose_rbf::linalg::SparseSolver;
use vadose_rbf::operators::{interface_coefficients, LocalFactorization};
use vadose_rbf::root_uptake::feddes_alpha;
use vadose_rbf::scenario::{
    build_scenario, convergence_study, load_preset, preset_names, simulate, RunResult, Scenario, ScenarioConfig,
    StudyReport,
};
use vadose_rbf::stepper::{advance_with, Scheme, SimulationState, Uptake};
use vadose_rbf::{build_stencils, NodeCloud, RbfKernel, StencilSystem};

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn preset(name: &str) -> ScenarioConfig {
    load_preset(name).unwrap_or_else(|e| panic!("preset {name}: {e}")).normalized()
}

fn run(cfg: &ScenarioConfig) -> Result<RunResult, String> {
    let sc = build_scenario::<f64>(cfg).map_err(|e| e.to_string())?;
    simulate(&sc).map_err(|f| format!("{} (after {} steps)", f.error, f.partial.steps_done))
}

fn a1(study: &Result<StudyReport, String>) -> Verdict {
    let r = study.as_ref().map_err(Clone::clone)?;
    let o2 = r.order(Scheme::Bdf2).unwrap_or(f64::NAN);
    let o1 = r.order(Scheme::Bdf1).unwrap_or(f64::NAN);
    check(
        (1.7..=2.2).contains(&o2) && (0.8..=1.2).contains(&o1),
        format!("fitted order bdf2 {o2:.3} (want 1.7..2.2), bdf1 {o1:.3} (want 0.8..1.2)"),
    )
}

/// BDF2 at dt = 0.1 h against BDF1 at the step that reaches the same RMSE.
/// The BDF1 step comes from the study's power-law fit and is shrunk until
/// the RMSE is actually matched.
fn a2(cfg: &ScenarioConfig, study: &Result<StudyReport, String>) -> Verdict {
    let r = study.as_ref().map_err(Clone::clone)?;
    let bdf2 = r
        .rows
        .iter()
        .find(|row| row.scheme == Scheme::Bdf2 && (row.dt - 0.1).abs() < 1e-12)
        .ok_or("study has no bdf2 row at dt = 0.1 h")?;
    let target = bdf2.rmse;
    if target.is_nan() || target > 1e-4 {
        return Err(format!("bdf2 RMSE at dt = 0.1 h is {target:.3e}, above 1e-4"));
    }
    let p = r.order(Scheme::Bdf1).ok_or("no bdf1 order")?;
    let last = r.rows.iter().rfind(|row| row.scheme == Scheme::Bdf1).ok_or("no bdf1 rows")?;
    let t_final = cfg.numerics.t_final;
    let mut dt = last.dt * (target / last.rmse).powf(1.0 / p);
    for _ in 0..6 {
        let steps = (t_final / dt).ceil();
        dt = t_final / steps;
        let mut c = cfg.clone();
        c.numerics.scheme = Scheme::Bdf1;
        c.numerics.dt = dt;
        c.numerics.output_stride = usize::MAX;
        c.outputs.profile_times.clear();
        let out = run(&c)?;
        let e = rmse(&out.final_theta, &r.reference.theta).map_err(|e| e.to_string())?;
        if e <= target {
            return check(
                bdf2.wall_seconds < out.wall_seconds,
                format!(
                    "RMSE {target:.3e}: bdf2 dt 0.1 h {:.2} s, bdf1 dt {dt:.3e} h ({e:.3e}) {:.2} s",
                    bdf2.wall_seconds, out.wall_seconds
                ),
            );
        }
        dt *= 0.8 * (target / e).powf(1.0 / p);
    }
    Err(format!("bdf1 never reached RMSE {target:.3e}"))
}

fn a3(runs: &[(&str, Result<RunResult, String>)]) -> Verdict {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for (name, r) in runs {
        let r = r.as_ref().map_err(|e| format!("{name}: {e}"))?;
        let at_outputs = r.series.samples.iter().map(|s| s.balance_residual).fold(0.0, f64::max);
        let w = at_outputs.max(r.max_balance_residual);
        worst = worst.max(w);
        parts.push(format!("{name} {w:.1e}"));
    }
    check(worst <= 1e-3, format!("max residual {worst:.2e} (limit 1e-3): {}", parts.join(", ")))
}

fn a4() -> Verdict {
    let sc = build_scenario::<f64>(&preset("hydrostatic_loam")).map_err(|e| e.to_string())?;
    let p = &sc.problem;
    let hydro: Vec<f64> = (0..p.len()).map(|i| -p.cloud.z(i)).collect();
    let start = sc.psi0.iter().zip(&hydro).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    if start > 1e-14 {
        return Err(format!("initial profile is not psi = -z (off by {start:.1e})"));
    }
    let mut state = SimulationState::new(p, sc.psi0.clone(), 0.0);
    let mut solver = SparseSolver::new();
    let mut drift = 0.0f64;
    for n in 1..=100 {
        advance_with(Scheme::Bdf2, p, &mut state, sc.dt, &sc.controls, &mut solver)
            .map_err(|e| format!("step {n}: {e}"))?;
        let d = state.psi_n.iter().zip(&sc.psi0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        drift = drift.max(d);
    }
    check(drift <= 1e-10, format!("max nodal drift over 100 BDF2 steps {drift:.2e} m (limit 1e-10)"))
}

fn cumulative(r: &RunResult, f: impl Fn(&vadose_rbf::diagnostics::FluxSample) -> f64) -> f64 {
    r.series.samples.windows(2).map(|w| 0.5 * (w[1].t - w[0].t) * (f(&w[0]) + f(&w[1]))).sum()
}

fn a5(pasture: &Result<RunResult, String>, wheat: &Result<RunResult, String>) -> Verdict {
    let sc = build_scenario::<f64>(&preset("test2_pasture")).map_err(|e| e.to_string())?;
    let Uptake::Feddes { params, roots, psi3 } = &sc.problem.uptake else {
        return Err("test2_pasture has no Feddes uptake".into());
    };
    let stressed = sc
        .psi0
        .iter()
        .zip(&roots.nodal)
        .filter(|(_, &b)| b > 0.0)
        .filter(|(&h, _)| feddes_alpha(params, h, *psi3) != 1.0)
        .count();
    if stressed > 0 {
        return Err(format!("{stressed} rooted nodes are off the alpha plateau at t = 0"));
    }
    let mut notes = vec!["alpha = 1 on every rooted node at t = 0".to_string()];
    for (name, r) in [("pasture", pasture), ("wheat", wheat)] {
        let r = r.as_ref().map_err(|e| format!("{name}: {e}"))?;
        let s = &r.series.samples;
        if name == "pasture" {
            for x in s.iter().take(2) {
                let rel = (x.ta - x.tp).abs() / x.tp;
                if rel > 1e-6 {
                    return Err(format!("pasture Ta/Tp - 1 = {rel:.1e} at t = {} h", x.t));
                }
            }
        }
        if let Some(x) = s.iter().find(|x| !(x.ta >= 0.0 && x.ta <= x.tp)) {
            return Err(format!("{name}: Ta = {:e} outside [0, Tp = {:e}] at t = {} h", x.ta, x.tp, x.t));
        }
        let (ta, tp) = (cumulative(r, |x| x.ta), cumulative(r, |x| x.tp));
        if ta > tp {
            return Err(format!("{name}: cumulative Ta {ta:e} exceeds cumulative Tp {tp:e}"));
        }
        notes.push(format!("{name} cumulative Ta/Tp {:.4}", ta / tp));
    }
    Ok(notes.join(", "))
}

fn a6() -> Verdict {
    // (i) SPD factorizations on every preset cloud
    let mut stencils_checked = 0;
    let mut clouds = Vec::new();
    for name in preset_names() {
        let sc = build_scenario::<f64>(&preset(name)).map_err(|e| format!("{name}: {e}"))?;
        let k = *sc.problem.system.kernel();
        for s in sc.problem.system.stencils() {
            LocalFactorization::new(&k, &sc.problem.cloud, s).map_err(|e| format!("{name}: {e}"))?;
            stencils_checked += 1;
        }
        clouds.push((name, sc));
    }

    // (ii) flat-limit weights on uniform 1-D stencils
    let mut flat = 0.0f64;
    for (h, eps, k0) in [(0.01, 0.1, 0.0104), (1e-3, 0.5, 1.0), (0.002, 0.2, 3.7e-4)] {
        let line = flat_line(11, h);
        let sys = StencilSystem::new(RbfKernel::new(eps).unwrap(), &line, build_stencils(&line, 3).unwrap(), false)
            .map_err(|e| e.to_string())?;
        let kn = vec![k0; 11];
        for c in 1..10 {
            let row = sys.interior_row(&line, c, &kn, 0.0, 0.0).map_err(|e| e.to_string())?;
            for (j, w) in [(c - 1, 1.0), (c, -2.0), (c + 1, 1.0)] {
                let want = -k0 * w / (h * h);
                flat = flat.max((row.get(j) - want).abs() / want.abs());
            }
        }
    }

    // (iii) Λ rows reproduce L on the RBF space
    let mut worst = 0.0f64;
    for (_, sc) in &clouds {
        let p = &sc.problem;
        let k = p.system.kernel();
        let kn: Vec<f64> = sc.psi0.iter().map(|&h| p.model.conductivity(h)).collect();
        for (i, s) in p.system.stencils().iter().enumerate() {
            if !p.cloud.tag(i).is_interior() {
                continue;
            }
            let row = p.system.operator_row(&p.cloud, i, &kn).map_err(|e| e.to_string())?;
            let coeffs = interface_coefficients(&p.cloud, i, &kn, p.system.is_axisymmetric()).unwrap();
            for &j in &s.neighbors {
                let phi = |q: usize| gaussian(k.epsilon(), p.cloud.point(q), p.cloud.point(j));
                let (lhs, lhs_abs) = row
                    .cols
                    .iter()
                    .zip(&row.vals)
                    .fold((0.0, 0.0), |(a, b), (&q, &w)| (a + w * phi(q), b + (w * phi(q)).abs()));
                let (rhs, rhs_abs) =
                    coeffs.iter().fold((0.0, 0.0), |(a, b), &(q, c)| (a + c * phi(q), b + (c * phi(q)).abs()));
                worst = worst.max((lhs - rhs).abs() / (lhs_abs + rhs_abs));
            }
        }
    }
    check(
        flat <= 1e-6 && worst <= 1e-10,
        format!(
            "{stencils_checked} SPD factorizations; flat-limit rel. error {flat:.1e} (limit 1e-6); \
             exactness residual {worst:.1e} (limit 1e-10)"
        ),
    )
}

fn gaussian(eps: f64, a: &[f64], b: &[f64]) -> f64 {
    let r2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-(eps * eps) * r2).exp()
}

fn flat_line(n: usize, h: f64) -> NodeCloud<f64> {
    use vadose_rbf::cloud::{SegmentKind, SegmentSpec};
    let segs = [Side::Low, Side::High].map(|side| SegmentSpec {
        face: Face::new(0, side),
        range: None,
        kind: SegmentKind::Dirichlet,
    });
    NodeCloud::tensor_grid(&[h * (n - 1) as f64], &[n], &segs).unwrap()
}

fn a7() -> Verdict {
    // stencils against a brute-force sort
    let mut clouds = 0;
    for name in preset_names() {
        let cfg = preset(name);
        let sc = build_scenario::<f64>(&cfg).map_err(|e| format!("{name}: {e}"))?;
        let cloud = &sc.problem.cloud;
        let n_s = cfg.numerics.n_s;
        for (i, s) in sc.problem.system.stencils().iter().enumerate() {
            let mut all: Vec<(f64, usize)> = (0..cloud.len())
                .map(|j| {
                    let d: f64 = cloud.point(i).iter().zip(cloud.point(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d, j)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let brute: Vec<usize> = all.iter().take(n_s).map(|x| x.1).collect();
            if brute != s.neighbors {
                return Err(format!("{name}: stencil of node {i} is {:?}, brute force {brute:?}", s.neighbors));
            }
        }
        clouds += 1;
    }

    // one increment system per 1-D preset against a dense LU
    let mut solve_err = 0.0f64;
    for name in ["test1_constant_flux", "test2_pasture", "hydrostatic_loam"] {
        let sc = build_scenario::<f64>(&preset(name)).map_err(|e| e.to_string())?;
        solve_err = solve_err.max(dense_gap(&sc)?);
    }

    // moisture capacity against a centred difference of θ; below C ~ 1e-3 the
    // cancellation in θ(ψ ± h) swamps 1e-6 relative accuracy
    let mut cap = 0.0f64;
    for name in ["test1_constant_flux", "test1_constant_flux_alpha01", "test2_pasture"] {
        let sc = build_scenario::<f64>(&preset(name)).map_err(|e| e.to_string())?;
        let m = sc.problem.model;
        for k in 0..200 {
            let psi = -(0.01f64).powf(1.0 - k as f64 / 199.0) * 5f64.powf(k as f64 / 199.0);
            let h = 1e-6;
            let fd = (m.water_content(psi + h) - m.water_content(psi - h)) / (2.0 * h);
            let c = m.moisture_capacity(psi);
            if c >= 1e-3 {
                cap = cap.max((c - fd).abs() / c);
            }
        }
    }
    check(
        solve_err <= 1e-12 && cap <= 1e-6,
        format!(
            "stencils equal brute force on {clouds} preset clouds; sparse vs dense solve {solve_err:.1e} \
             (limit 1e-12); capacity vs FD rel. {cap:.1e} (limit 1e-6)"
        ),
    )
}

/// Largest difference between the sparse and a dense LU solution of the
/// first Picard system of a scenario.
fn dense_gap(sc: &Scenario<f64>) -> Result<f64, String> {
    let p = &sc.problem;
    let state = SimulationState::new(p, sc.psi0.clone(), 0.0);
    let coeffs = vadose_rbf::stepper::bdf_coefficients(Scheme::Bdf1, sc.dt, None);
    let (a, b) = vadose_rbf::stepper::assemble_increment_system(p, &state, &state.psi_n, coeffs, sc.dt)
        .map_err(|e| e.to_string())?;
    let x = SparseSolver::new().solve(&a, &b).map_err(|e| e.to_string())?;
    let n = b.len();
    let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
    let xd = dense.lu().solve(&nalgebra::DVector::from_vec(b)).ok_or("dense LU failed")?;
    Ok(x.iter().zip(xd.iter()).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max))
}

fn a8() -> Verdict {
    let cfg = preset("test3");
    if cfg.geometry.counts != [50, 100] || (cfg.numerics.dt - 0.01).abs() > 1e-15 || cfg.numerics.t_final != 24.0 {
        return Err("test3 preset is not 50x100 nodes, dt 0.01 h, T 24 h".into());
    }
    if cfg.numerics.max_halvings != 0 {
        return Err("test3 preset allows step halving".into());
    }
    let start = Instant::now();
    let r = run(&cfg)?;
    let secs = start.elapsed().as_secs_f64();
    if let Some(x) = r.series.samples.iter().find(|x| !(x.tp > 0.0 && x.ta >= 0.0 && x.ta <= x.tp)) {
        return Err(format!("Ta/Tp = {:e} at t = {} h", x.ta / x.tp, x.t));
    }
    let lo = r.series.samples.iter().map(|x| x.ta / x.tp).fold(1.0, f64::min);
    check(
        secs < 600.0 && r.steps_done == 2400,
        format!(
            "{} steps, {} Picard iterations, {secs:.0} s (limit 600 s), min Ta/Tp {lo:.4}",
            r.steps_done, r.picard_total
        ),
    )
}

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.iter().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let filters: Vec<String> = args.iter().filter(|a| !a.starts_with('-')).map(|a| a.to_uppercase()).collect();
    let wanted = |id: &str| filters.is_empty() || filters.iter().any(|f| id.contains(f.as_str()));

    let mut results: Vec<(&str, &str, Verdict)> = Vec::new();
    let mut report = |id: &'static str, what: &'static str, v: Verdict| {
        let (tag, text) = match &v {
            Ok(t) => ("PASS", t),
            Err(t) => ("FAIL", t),
        };
        println!("{id} {tag} {what}: {text}");
        results.push((id, what, v));
    };

    if wanted("A1") || wanted("A2") {
        let cfg = preset("test1_constant_flux");
        let study = convergence_study(&cfg, &[0.4, 0.2, 0.1, 0.05], &[Scheme::Bdf1, Scheme::Bdf2], 16)
            .map_err(|e| e.to_string());
        if wanted("A1") {
            report("A1", "temporal order", a1(&study));
        }
        if wanted("A2") {
            report("A2", "BDF2 beats BDF1 at matched RMSE", a2(&cfg, &study));
        }
    }
    if wanted("A3") || wanted("A5") {
        let names =
            ["test1_constant_flux", "test1_constant_flux_alpha01", "test1_varying_flux", "test1_varying_flux_alpha01"];
        let mut runs: Vec<(&str, Result<RunResult, String>)> = Vec::new();
        if wanted("A3") {
            for n in names {
                runs.push((n, run(&preset(n))));
            }
        }
        let pasture = run(&preset("test2_pasture"));
        let wheat = run(&preset("test2_wheat"));
        if wanted("A3") {
            runs.push(("test2_pasture", pasture.clone()));
            runs.push(("test2_wheat", wheat.clone()));
            report("A3", "mass conservation", a3(&runs));
        }
        if wanted("A4") {
            report("A4", "hydrostatic steady state", a4());
        }
        if wanted("A5") {
            report("A5", "transpiration bounds", a5(&pasture, &wheat));
        }
    } else if wanted("A4") {
        report("A4", "hydrostatic steady state", a4());
    }
    if wanted("A6") {
        report("A6", "operator correctness", a6());
    }
    if wanted("A7") {
        report("A7", "oracle equivalences", a7());
    }
    if wanted("A8") {
        report("A8", "desk-scale 2-D run", a8());
    }

    let failed = results.iter().filter(|r| r.2.is_err()).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
