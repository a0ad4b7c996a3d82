//! Mass balance, error norms, convergence-order fits and boundary fluxes.

use crate::cloud::{Face, NodeCloud, Side};
use crate::constitutive::SoilModel;
use crate::error::DiagnosticsError;
use crate::scalar::Real;
use crate::stepper::{evaluate_surface_flux, BoundaryCondition, Problem};

/// `I = Σ w_i θ_i`: stored water per unit surface width [m].
pub fn total_mass<T: Real>(theta: &[T], weights: &[T]) -> Result<T, DiagnosticsError> {
    if theta.len() != weights.len() {
        return Err(DiagnosticsError::Length(theta.len(), weights.len()));
    }
    Ok(theta.iter().zip(weights).fold(T::zero(), |acc, (&t, &w)| acc + t * w))
}

pub fn rmse<T: Real>(a: &[T], b: &[T]) -> Result<T, DiagnosticsError> {
    if a.len() != b.len() {
        return Err(DiagnosticsError::Length(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(DiagnosticsError::TooFew { needed: 1, got: 0 });
    }
    let s = a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + (x - y) * (x - y));
    Ok((s / T::lit(a.len() as f64)).sqrt())
}

/// Least-squares slope of `log(error)` against `log(dt)`.
pub fn estimate_order(errors: &[f64], dts: &[f64]) -> Result<f64, DiagnosticsError> {
    if errors.len() != dts.len() {
        return Err(DiagnosticsError::Length(errors.len(), dts.len()));
    }
    if dts.len() < 3 {
        return Err(DiagnosticsError::TooFew { needed: 3, got: dts.len() });
    }
    if dts.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(DiagnosticsError::NotDecreasing);
    }
    if let Some(&e) = errors.iter().chain(dts).find(|&&e| !(e > 0.0)) {
        return Err(DiagnosticsError::NonPositive(e));
    }
    let x: Vec<f64> = dts.iter().map(|d| d.ln()).collect();
    let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    Ok(sxy / sxx)
}

/// `∂ψ/∂n` at boundary node `i` of `face` by a one-sided second-order
/// difference (first order when the axis has only two nodes).
fn normal_derivative<T: Real>(cloud: &NodeCloud<T>, psi: &[T], i: usize, face: Face) -> T {
    let inward = match face.side {
        Side::Low => Side::High,
        Side::High => Side::Low,
    };
    let h = cloud.spacing()[face.axis];
    let n1 = cloud.axis_neighbor(i, face.axis, inward).expect("boundary node has an inward neighbour");
    match cloud.axis_neighbor(n1, face.axis, inward) {
        Some(n2) => (T::lit(3.0) * psi[i] - T::lit(4.0) * psi[n1] + psi[n2]) / (T::lit(2.0) * h),
        None => (psi[i] - psi[n1]) / h,
    }
}

/// Trapezoid weights along the face, divided by the horizontal extent.
fn face_weights<T: Real>(cloud: &NodeCloud<T>, face: Face, nodes: &[usize]) -> Vec<T> {
    let mut horizontal = T::one();
    for a in 0..cloud.dim() - 1 {
        horizontal = horizontal * cloud.extents()[a];
    }
    nodes
        .iter()
        .map(|&i| {
            let g = cloud.grid_index(i);
            let mut w = T::one();
            for a in (0..cloud.dim()).filter(|&a| a != face.axis) {
                let h = cloud.spacing()[a];
                w = w * if g[a] == 0 || g[a] + 1 == cloud.counts()[a] { h * T::lit(0.5) } else { h };
            }
            w / horizontal
        })
        .collect()
}

/// Darcy flux component `−K(∂ψ/∂x_a + δ_{a,z})` along the face's axis,
/// averaged over the face. On the bottom and top faces this is the vertical
/// flux, positive upward.
pub fn boundary_flux<T: Real>(cloud: &NodeCloud<T>, model: &SoilModel<T>, psi: &[T], face: Face) -> T {
    let nodes = cloud.face_nodes(face);
    let w = face_weights(cloud, face, &nodes);
    let total = w.iter().fold(T::zero(), |acc, &v| acc + v);
    let sign = T::lit(face.outward_sign());
    let gravity = if face.axis == cloud.vertical_axis() { T::one() } else { T::zero() };
    let integral = nodes.iter().zip(&w).fold(T::zero(), |acc, (&i, &wi)| {
        let d = sign * normal_derivative(cloud, psi, i, face);
        acc + wi * (-model.conductivity(psi[i]) * (d + gravity))
    });
    integral / total
}

/// Net water entering the domain per unit surface width [m/h] at time `t`,
/// using the prescribed data wherever a flux condition is imposed and the
/// interface flux on Dirichlet faces.
pub fn net_inflow<T: Real>(problem: &Problem<T>, psi: &[T], t: T) -> T {
    let cloud = &problem.cloud;
    let mut inflow = T::zero();
    for axis in 0..cloud.dim() {
        for side in [Side::Low, Side::High] {
            let face = Face::new(axis, side);
            let n_z = if axis == cloud.vertical_axis() { T::lit(face.outward_sign()) } else { T::zero() };
            let nodes = cloud.face_nodes(face);
            let w = face_weights(cloud, face, &nodes);
            for (&i, &wi) in nodes.iter().zip(&w) {
                let k = problem.model.conductivity(psi[i]);
                let own = cloud
                    .tag(i)
                    .segment()
                    .filter(|&s| cloud.segments()[s].face == face)
                    .or_else(|| segment_covering(cloud, face, i));
                let outward = match own.map(|s| &problem.bc.segments[s]) {
                    Some(BoundaryCondition::Flux(q)) => evaluate_surface_flux(q, t),
                    Some(BoundaryCondition::FreeDrainage) => -k * n_z,
                    _ => interface_flux(problem, psi, i, face, n_z),
                };
                inflow = inflow - wi * outward;
            }
        }
    }
    inflow
}

/// Outward flux across the first grid interval behind a boundary node, with
/// the arithmetic-mean conductivity the interior operator uses. This is the
/// flux the discrete equations actually transport, so it stays consistent
/// even where K(ψ) is not smooth (van Genuchten near saturation).
fn interface_flux<T: Real>(problem: &Problem<T>, psi: &[T], i: usize, face: Face, n_z: T) -> T {
    let cloud = &problem.cloud;
    let inward = match face.side {
        Side::Low => Side::High,
        Side::High => Side::Low,
    };
    let j = cloud.axis_neighbor(i, face.axis, inward).expect("boundary node has an inward neighbour");
    let k = (problem.model.conductivity(psi[i]) + problem.model.conductivity(psi[j])) * T::lit(0.5);
    -k * ((psi[i] - psi[j]) / cloud.spacing()[face.axis] + n_z)
}

fn segment_covering<T: Real>(cloud: &NodeCloud<T>, face: Face, i: usize) -> Option<usize> {
    cloud.segments().iter().position(|s| {
        s.face == face
            && s.range.is_none_or(|(axis, lo, hi)| {
                let c = cloud.point(i)[axis];
                let tol = cloud.spacing()[axis] * T::lit(1e-9);
                c >= lo - tol && c <= hi + tol
            })
    })
}

/// Running water budget.
#[derive(Debug, Clone, PartialEq)]
pub struct MassReport {
    pub t: f64,
    pub total_mass: f64,
    pub cumulative_boundary_influx: f64,
    pub cumulative_sink: f64,
    pub balance_residual: f64,
}

/// Accumulates boundary inflow and uptake with the trapezoid rule in time.
#[derive(Debug, Clone)]
pub struct MassTracker {
    initial_mass: f64,
    last_t: f64,
    last_inflow: f64,
    last_sink: f64,
    report: MassReport,
}

impl MassTracker {
    pub fn new(t0: f64, mass0: f64, inflow0: f64, sink0: f64) -> Self {
        Self {
            initial_mass: mass0,
            last_t: t0,
            last_inflow: inflow0,
            last_sink: sink0,
            report: MassReport {
                t: t0,
                total_mass: mass0,
                cumulative_boundary_influx: 0.0,
                cumulative_sink: 0.0,
                balance_residual: 0.0,
            },
        }
    }

    pub fn record(&mut self, t: f64, mass: f64, inflow: f64, sink: f64) -> &MassReport {
        let dt = t - self.last_t;
        let r = &mut self.report;
        r.cumulative_boundary_influx += 0.5 * dt * (self.last_inflow + inflow);
        r.cumulative_sink += 0.5 * dt * (self.last_sink + sink);
        r.t = t;
        r.total_mass = mass;
        let imbalance = mass - self.initial_mass - (r.cumulative_boundary_influx - r.cumulative_sink);
        r.balance_residual = imbalance.abs() / self.initial_mass.max(f64::MIN_POSITIVE);
        self.last_t = t;
        self.last_inflow = inflow;
        self.last_sink = sink;
        &self.report
    }

    pub fn report(&self) -> &MassReport {
        &self.report
    }
}

/// One diagnostics sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FluxSample {
    pub t: f64,
    pub mass: f64,
    pub top_flux: f64,
    pub bottom_flux: f64,
    pub tp: f64,
    pub ta: f64,
    pub picard_iters: usize,
    pub balance_residual: f64,
}

/// Time series of diagnostics samples.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FluxSeries {
    pub samples: Vec<FluxSample>,
}
