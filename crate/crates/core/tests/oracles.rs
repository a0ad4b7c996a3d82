//! Independent oracles: high-precision constants, refined quadrature, dense
//! solvers and least-squares derivatives.

// reference values are quoted to more digits than f64 holds
#![allow(clippy::excessive_precision)]

use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use vadose_rbf::cloud::{BoundaryTag, Face, SegmentKind, SegmentSpec, Side};
use vadose_rbf::diagnostics::{boundary_flux, rmse, total_mass};
use vadose_rbf::linalg::{CsrMatrix, SparseRow, SparseSolver};
use vadose_rbf::operators::BoundaryRowKind;
use vadose_rbf::root_uptake::{actual_transpiration, interpolate_psi3, RootDistribution, RootProfile};
use vadose_rbf::scenario::{build_scenario, load_preset, ScenarioConfig};
use vadose_rbf::stepper::{assemble_increment_system, bdf_coefficients, Scheme, SimulationState, Uptake};
use vadose_rbf::{build_stencils, NodeCloud, RbfKernel, SoilModel, StencilSystem, VanGenuchten};

fn loam() -> VanGenuchten<f64> {
    VanGenuchten::new(0.078, 0.43, 3.6, 1.56, 0.2496 / 24.0).unwrap()
}

fn preset(name: &str) -> ScenarioConfig {
    load_preset(name).unwrap().normalized()
}

fn column(n: usize, len: f64) -> NodeCloud<f64> {
    let segs = [Side::Low, Side::High].map(|side| SegmentSpec {
        face: Face::new(0, side),
        range: None,
        kind: SegmentKind::Dirichlet,
    });
    NodeCloud::tensor_grid(&[len], &[n], &segs).unwrap()
}

// 40-digit evaluations of the closed forms with m = 1 - 1/n.
#[test]
fn van_genuchten_matches_high_precision_values() {
    let s = loam();
    let table = [
        (-1.0, 0.24213178471815216097, 1.4134383477200478145e-5, 0.080940572287630743892),
        (-0.25, 0.36033638246147814596, 5.5391148401224732494e-4, 0.29028802159794193803),
        (-8.0, 0.1315131521929059014, 1.4511107579949833287e-8, 0.0037262138812094160227),
    ];
    for (psi, theta, k, c) in table {
        assert_relative_eq!(s.water_content(psi), theta, max_relative = 1e-14);
        assert_relative_eq!(s.conductivity(psi), k, max_relative = 1e-12);
        assert_relative_eq!(s.moisture_capacity(psi), c, max_relative = 1e-12);
    }
}

#[test]
fn capacity_matches_centred_difference() {
    let s = loam();
    let h = 1e-6;
    let fd = (s.water_content(-1.0 + h) - s.water_content(-1.0 - h)) / (2.0 * h);
    assert_relative_eq!(s.moisture_capacity(-1.0), fd, max_relative = 1e-6);
}

/// Composite trapezoid with `k` sub-intervals per grid interval.
fn refined_trapezoid(f: impl Fn(f64) -> f64, len: f64, intervals: usize, k: usize) -> f64 {
    let m = intervals * k;
    let h = len / m as f64;
    (0..=m).map(|i| if i == 0 || i == m { 0.5 * f(i as f64 * h) } else { f(i as f64 * h) }).sum::<f64>() * h
}

#[test]
fn stored_water_matches_refined_quadrature() {
    let cloud = column(1001, 1.2);
    let w = cloud.quadrature_weights();
    let theta = |z: f64| 0.25 + 0.1 * (3.0 * z).sin() * (-z).exp();
    let nodal: Vec<f64> = (0..cloud.len()).map(|i| theta(cloud.z(i))).collect();
    let coarse = total_mass(&nodal, &w).unwrap();
    let fine = refined_trapezoid(theta, 1.2, 1000, 10);
    assert_relative_eq!(coarse, fine, max_relative = 1e-4);
}

#[test]
fn transpiration_matches_refined_quadrature() {
    let sc = build_scenario::<f64>(&preset("test2_pasture")).unwrap();
    let Uptake::Feddes { params, .. } = sc.problem.uptake.clone() else { panic!("pasture uses Feddes") };
    let psi3 = interpolate_psi3(&params);
    // crosses the anaerobic ramp, the plateau and the dry ramp
    let head = |depth: f64| 0.05 - 75.0 * (0.9 - depth).powi(2);
    let ta = |n: usize| {
        let cloud = column(n, 1.2);
        let w = cloud.quadrature_weights();
        let depth: Vec<f64> = (0..n).map(|i| 1.2 - cloud.z(i)).collect();
        let b = RootDistribution::new(RootProfile::Linear, 0.9, &depth, &w).unwrap();
        let psi: Vec<f64> = depth.iter().map(|&d| head(d)).collect();
        actual_transpiration(&params, &b, &psi, psi3, &w)
    };
    let (coarse, fine) = (ta(1001), ta(10001));
    assert!(
        coarse > 0.1 * params.tp && coarse < 0.9 * params.tp,
        "profile should be partly stressed, Ta/Tp {}",
        coarse / params.tp
    );
    assert_relative_eq!(coarse, fine, max_relative = 1e-3);
}

#[test]
fn boundary_flux_converges_at_second_order() {
    let model = SoilModel::VanGenuchten(loam());
    let psi = |z: f64| -z - 0.3 + 0.2 * (2.0 * z).sin();
    let dpsi = |z: f64| -1.0 + 0.4 * (2.0 * z).cos();
    let exact = |z: f64| -model.conductivity(psi(z)) * (dpsi(z) + 1.0);
    let mut errors = Vec::new();
    for n in [51, 101, 201] {
        let cloud = column(n, 1.0);
        let nodal: Vec<f64> = (0..n).map(|i| psi(cloud.z(i))).collect();
        let top = boundary_flux(&cloud, &model, &nodal, Face::new(0, Side::High));
        let bottom = boundary_flux(&cloud, &model, &nodal, Face::new(0, Side::Low));
        errors.push(((top - exact(1.0)).abs(), (bottom - exact(0.0)).abs()));
    }
    for w in errors.windows(2) {
        assert!(w[0].0 / w[1].0 > 3.5, "top ratio {}", w[0].0 / w[1].0);
        assert!(w[0].1 / w[1].1 > 3.5, "bottom ratio {}", w[0].1 / w[1].1);
    }
}

#[test]
fn rmse_matches_two_pass_recomputation() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for len in [1, 2, 17, 1000] {
        let a: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let sq: Vec<f64> = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).collect();
        let mean = sq.iter().sum::<f64>() / len as f64;
        assert_relative_eq!(rmse(&a, &b).unwrap(), mean.sqrt(), max_relative = 1e-14);
    }
}

/// Dense LU on the row-equilibrated system. Flux rows on dry soil carry a
/// factor K ~ 1e-7, and unscaled partial pivoting loses ~8 digits on them.
fn dense_solve(a: &CsrMatrix<f64>, b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let s: Vec<f64> = (0..n).map(|i| 1.0 / a.row(i).1.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
    let m = DMatrix::from_fn(n, n, |i, j| a.get(i, j) * s[i]);
    let rhs = DVector::from_iterator(n, b.iter().zip(&s).map(|(v, s)| v * s));
    m.lu().solve(&rhs).expect("nonsingular").iter().copied().collect()
}

fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn dirichlet_laplacian_matches_dense_solve() {
    let n = 60;
    let h = 1.0 / (n - 1) as f64;
    let rows: Vec<SparseRow<f64>> = (0..n)
        .map(|i| {
            if i == 0 || i == n - 1 {
                SparseRow::unit(i)
            } else {
                SparseRow::new(vec![i - 1, i, i + 1], vec![-1.0 / (h * h), 2.0 / (h * h), -1.0 / (h * h)])
            }
        })
        .collect();
    let a = CsrMatrix::from_rows(&rows, n);
    let b: Vec<f64> = (0..n)
        .map(|i| {
            if i == 0 {
                1.0
            } else if i == n - 1 {
                -0.5
            } else {
                (i as f64 * h).sin()
            }
        })
        .collect();
    let x = SparseSolver::new().solve(&a, &b).unwrap();
    assert!(max_gap(&x, &dense_solve(&a, &b)) <= 1e-12);
}

/// First Picard system of a scenario, solved sparse and dense.
fn first_system_gap(cfg: &ScenarioConfig) -> f64 {
    let sc = build_scenario::<f64>(cfg).unwrap();
    let p = &sc.problem;
    let state = SimulationState::new(p, sc.psi0.clone(), 0.0);
    let coeffs = bdf_coefficients(Scheme::Bdf1, sc.dt, None);
    let (a, b) = assemble_increment_system(p, &state, &state.psi_n, coeffs, sc.dt).unwrap();
    let x = SparseSolver::new().solve(&a, &b).unwrap();
    max_gap(&x, &dense_solve(&a, &b))
}

#[test]
fn diffusion_surrogate_step_matches_dense_solve() {
    // Gardner with a tiny α: C and K are constant to ~1e-6 over the column
    let mut cfg = preset("test1_constant_flux");
    cfg.geometry.counts = vec![81];
    if let vadose_rbf::scenario::SoilConfig::Gardner { alpha, .. } = &mut cfg.soil {
        *alpha = 1e-6;
    }
    cfg.uptake = vadose_rbf::scenario::UptakeConfig::None;
    assert!(first_system_gap(&cfg) <= 1e-12);
}

#[test]
fn two_dimensional_step_matches_dense_solve() {
    let mut cfg = preset("test3");
    cfg.geometry.counts = vec![10, 20];
    assert!(first_system_gap(&cfg) <= 1e-12);
}

fn quadratic_rank(cloud: &NodeCloud<f64>, nodes: &[usize]) -> usize {
    let basis = |p: &[f64]| [1.0, p[0], p[1], p[0] * p[0], p[0] * p[1], p[1] * p[1]];
    DMatrix::from_fn(nodes.len(), 6, |r, k| basis(cloud.point(nodes[r]))[k]).rank(1e-10)
}

#[test]
fn flux_rows_are_exact_on_resolved_quadratics() {
    let segs = [
        SegmentSpec { face: Face::new(1, Side::High), range: None, kind: SegmentKind::Neumann },
        SegmentSpec { face: Face::new(1, Side::Low), range: None, kind: SegmentKind::Dirichlet },
        SegmentSpec { face: Face::new(0, Side::Low), range: None, kind: SegmentKind::Neumann },
        SegmentSpec { face: Face::new(0, Side::High), range: None, kind: SegmentKind::Neumann },
    ];
    let cloud = NodeCloud::tensor_grid(&[1.0, 1.0], &[10, 20], &segs).unwrap();
    let stencils = build_stencils(&cloud, 7).unwrap();
    let sys = StencilSystem::new(RbfKernel::new(0.2).unwrap(), &cloud, stencils, false).unwrap();
    let f = |x: f64, z: f64| 0.3 - 0.7 * x + 1.1 * z + 0.4 * x * x - 0.9 * x * z + 0.6 * z * z;
    let grad = |x: f64, z: f64| [-0.7 + 0.8 * x - 0.9 * z, 1.1 - 0.9 * x + 1.2 * z];
    let quad: Vec<f64> = cloud.points().map(|p| f(p[0], p[1])).collect();
    let (mut linear_checked, mut quad_checked) = (0, 0);
    for i in 0..cloud.len() {
        if !matches!(cloud.tag(i), BoundaryTag::Neumann(_)) {
            continue;
        }
        let normal = cloud.outward_normal(i).unwrap();
        let n = [normal[0], normal[1]];
        let k = 0.37;
        let row = sys.boundary_row(i, k, BoundaryRowKind::Flux).unwrap();

        // exact on fields linear along the normal, every node
        let slope = 2.5;
        let linear: Vec<f64> = cloud.points().map(|p| slope * (p[0] * n[0] + p[1] * n[1])).collect();
        assert_relative_eq!(row.dot(&linear), -k * slope, max_relative = 1e-10);
        linear_checked += 1;

        let used: Vec<usize> = row.cols.iter().zip(&row.vals).filter(|(_, v)| **v != 0.0).map(|(&j, _)| j).collect();
        if quadratic_rank(&cloud, &used) < 6 {
            continue;
        }
        let p = cloud.point(i);
        let g = grad(p[0], p[1]);
        let exact = g[0] * n[0] + g[1] * n[1];
        let got = -row.dot(&quad) / k;
        assert!((got - exact).abs() <= 1e-6 * (1.0 + exact.abs()), "node {i}: {got} vs {exact}");
        quad_checked += 1;
    }
    assert_eq!(linear_checked, 10 + 2 * 18);
    assert!(quad_checked >= 8, "only {quad_checked} nodes resolve quadratics");
}

#[test]
fn assembled_rows_stay_inside_their_stencils() {
    let mut cfg = preset("test3");
    cfg.geometry.counts = vec![10, 20];
    let sc = build_scenario::<f64>(&cfg).unwrap();
    let p = &sc.problem;
    let state = SimulationState::new(p, sc.psi0.clone(), 0.0);
    let coeffs = bdf_coefficients(Scheme::Bdf1, sc.dt, None);
    let (a, _) = assemble_increment_system(p, &state, &state.psi_n, coeffs, sc.dt).unwrap();
    assert!(a.nnz() <= p.len() * 7);
    for i in 0..p.len() {
        let stencil = &p.system.stencils()[i].neighbors;
        assert!(a.row(i).0.iter().all(|j| stencil.contains(j)), "row {i} leaves its stencil");
    }
}
