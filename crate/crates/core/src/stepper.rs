//! Time integration of the mixed-form Richards equation: BDF1/BDF2 in time,
//! modified Picard linearization in the pressure-head increment.

use rayon::prelude::*;

use crate::cloud::{BoundaryTag, NodeCloud};
use crate::constitutive::SoilModel;
use crate::error::{OperatorError, StepError};
use crate::linalg::{CsrMatrix, SparseRow, SparseSolver};
use crate::operators::{gravity_term, BoundaryRowKind, StencilSystem};
use crate::root_uptake::{actual_transpiration, feddes_sink, FeddesParams, RootDistribution, SimplifiedSink};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Bdf1,
    Bdf2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IncrementNorm {
    #[default]
    Max,
    Rms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialGuess {
    #[default]
    PreviousStep,
    LinearExtrapolation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardControls<T> {
    /// Increment tolerance [m].
    pub tol: T,
    pub max_iters: usize,
    pub norm: IncrementNorm,
    pub initial_guess: InitialGuess,
    /// Successive step halvings allowed after a non-converged step; 0 fails
    /// immediately.
    pub max_halvings: usize,
}

impl<T: Real> Default for PicardControls<T> {
    fn default() -> Self {
        Self {
            tol: T::lit(1e-6),
            max_iters: 50,
            norm: IncrementNorm::Max,
            initial_guess: InitialGuess::PreviousStep,
            max_halvings: 0,
        }
    }
}

impl<T: Real> PicardControls<T> {
    pub fn validate(&self) -> Result<(), crate::error::ParamError> {
        if !(self.tol > T::zero()) {
            return Err(crate::error::ParamError::new("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iters == 0 {
            return Err(crate::error::ParamError::new("max_iters", "must be at least 1"));
        }
        Ok(())
    }
}

/// Outward boundary flux `Q` [m/h]; negative values enter the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FluxSpec<T> {
    Constant(T),
    /// `q0 + delta·exp(k1·t)`.
    Exponential {
        q0: T,
        delta: T,
        k1: T,
    },
}

pub fn evaluate_surface_flux<T: Real>(spec: &FluxSpec<T>, t: T) -> T {
    match *spec {
        FluxSpec::Constant(q) => q,
        FluxSpec::Exponential { q0, delta, k1 } => q0 + delta * (k1 * t).exp(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundaryCondition<T> {
    /// Prescribed pressure head [m].
    Dirichlet(T),
    /// Prescribed outward Darcy flux `−K∇(ψ + z)·n`.
    Flux(FluxSpec<T>),
    /// Unit gradient: `∂ψ/∂n = 0`, water leaves under gravity alone.
    FreeDrainage,
}

/// One condition per boundary segment of the cloud, in segment order.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryData<T> {
    pub segments: Vec<BoundaryCondition<T>>,
}

impl<T: Real> BoundaryData<T> {
    pub fn condition(&self, tag: BoundaryTag) -> Option<&BoundaryCondition<T>> {
        tag.segment().map(|s| &self.segments[s])
    }

    /// Checks that each segment's condition matches the cloud's tag kind.
    pub fn check(&self, cloud: &NodeCloud<T>) -> Result<(), crate::error::ParamError> {
        use crate::cloud::SegmentKind;
        if self.segments.len() != cloud.segments().len() {
            return Err(crate::error::ParamError::new("boundaries", "one condition per segment required"));
        }
        for (spec, bc) in cloud.segments().iter().zip(&self.segments) {
            let ok = matches!(
                (spec.kind, bc),
                (SegmentKind::Dirichlet, BoundaryCondition::Dirichlet(_))
                    | (SegmentKind::Neumann, BoundaryCondition::Flux(_) | BoundaryCondition::FreeDrainage)
            );
            if !ok {
                return Err(crate::error::ParamError::new("boundaries", "segment kind and condition disagree"));
            }
        }
        Ok(())
    }
}

/// Root water uptake model.
#[derive(Debug, Clone, PartialEq)]
pub enum Uptake<T> {
    None,
    Feddes { params: FeddesParams<T>, roots: RootDistribution<T>, psi3: T },
    Simplified(SimplifiedSink<T>),
}

impl<T: Real> Uptake<T> {
    /// Nodal sink [1/h].
    pub fn sink(&self, cloud: &NodeCloud<T>, psi: &[T]) -> Vec<T> {
        match self {
            Uptake::None => vec![T::zero(); psi.len()],
            Uptake::Feddes { params, roots, psi3 } => feddes_sink(params, roots, psi, *psi3),
            Uptake::Simplified(s) => (0..psi.len()).map(|i| s.rate(cloud.z(i))).collect(),
        }
    }

    /// `(Tp, Ta)` [m/h]; simplified sinks report their integral for both.
    pub fn transpiration(&self, cloud: &NodeCloud<T>, psi: &[T], weights: &[T]) -> (T, T) {
        match self {
            Uptake::None => (T::zero(), T::zero()),
            Uptake::Feddes { params, roots, psi3 } => {
                (params.tp, actual_transpiration(params, roots, psi, *psi3, weights))
            }
            Uptake::Simplified(_) => {
                let s = self.sink(cloud, psi);
                let total = s.iter().zip(weights).fold(T::zero(), |acc, (&a, &w)| acc + a * w);
                (total, total)
            }
        }
    }
}

/// The static part of a simulation.
#[derive(Debug, Clone)]
pub struct Problem<T> {
    pub cloud: NodeCloud<T>,
    pub system: StencilSystem<T>,
    pub model: SoilModel<T>,
    pub uptake: Uptake<T>,
    pub bc: BoundaryData<T>,
    pub weights: Vec<T>,
}

impl<T: Real> Problem<T> {
    pub fn new(
        cloud: NodeCloud<T>,
        system: StencilSystem<T>,
        model: SoilModel<T>,
        uptake: Uptake<T>,
        bc: BoundaryData<T>,
    ) -> Result<Self, crate::error::ParamError> {
        bc.check(&cloud)?;
        if system.len() != cloud.len() {
            return Err(crate::error::ParamError::new("stencils", "one stencil per node required"));
        }
        let weights = cloud.quadrature_weights();
        Ok(Self { cloud, system, model, uptake, bc, weights })
    }

    pub fn len(&self) -> usize {
        self.cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cloud.is_empty()
    }

    pub fn water_content(&self, psi: &[T]) -> Vec<T> {
        psi.iter().map(|&h| self.model.water_content(h)).collect()
    }

    /// Pins Dirichlet nodes of `psi` to their prescribed heads.
    pub fn apply_dirichlet(&self, psi: &mut [T]) {
        for (i, h) in psi.iter_mut().enumerate() {
            if let Some(BoundaryCondition::Dirichlet(v)) = self.bc.condition(self.cloud.tag(i)) {
                *h = *v;
            }
        }
    }
}

/// Committed time levels.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState<T> {
    pub psi_n: Vec<T>,
    pub psi_nm1: Option<Vec<T>>,
    pub theta_n: Vec<T>,
    pub theta_nm1: Option<Vec<T>>,
    pub t: T,
    /// Size of the step that produced level `n`.
    pub dt_prev: Option<T>,
    pub step_index: usize,
}

impl<T: Real> SimulationState<T> {
    pub fn new(problem: &Problem<T>, mut psi0: Vec<T>, t0: T) -> Self {
        problem.apply_dirichlet(&mut psi0);
        let theta = problem.water_content(&psi0);
        Self { psi_n: psi0, psi_nm1: None, theta_n: theta, theta_nm1: None, t: t0, dt_prev: None, step_index: 0 }
    }
}

/// Coefficients `(a0, a1, a2)` of `a0 θ^{n+1} + a1 θ^n + a2 θ^{n−1}`.
pub fn bdf_coefficients<T: Real>(scheme: Scheme, dt: T, dt_prev: Option<T>) -> (T, T, T) {
    match (scheme, dt_prev) {
        (Scheme::Bdf2, Some(prev)) => {
            let w = dt / prev;
            let one = T::one();
            let two = T::lit(2.0);
            ((one + two * w) / ((one + w) * dt), -(one + w) / dt, w * w / ((one + w) * dt))
        }
        _ => (T::one() / dt, -T::one() / dt, T::zero()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardOutcome<T> {
    pub psi: Vec<T>,
    pub iterations: usize,
    pub increment_norm: T,
    pub history: Vec<T>,
}

fn increment_norm<T: Real>(d: &[T], norm: IncrementNorm) -> T {
    match norm {
        IncrementNorm::Max => d.iter().fold(T::zero(), |m, v| m.max(v.abs())),
        IncrementNorm::Rms => {
            let s = d.iter().fold(T::zero(), |acc, &v| acc + v * v);
            (s / T::lit(d.len().max(1) as f64)).sqrt()
        }
    }
}

/// Linear system `A δ = b` of one Picard iteration at iterate `psi`.
pub fn assemble_increment_system<T: Real>(
    problem: &Problem<T>,
    state: &SimulationState<T>,
    psi: &[T],
    coeffs: (T, T, T),
    t_next: T,
) -> Result<(CsrMatrix<T>, Vec<T>), OperatorError> {
    let cloud = &problem.cloud;
    let model = &problem.model;
    let k: Vec<T> = psi.iter().map(|&h| model.conductivity(h)).collect();
    let sink = problem.uptake.sink(cloud, psi);
    let (a0, a1, a2) = coeffs;
    let rows: Vec<(SparseRow<T>, T)> = (0..cloud.len())
        .into_par_iter()
        .map(|i| -> Result<(SparseRow<T>, T), OperatorError> {
            let tag = cloud.tag(i);
            match problem.bc.condition(tag) {
                None => {
                    let op = problem.system.operator_row(cloud, i, &k)?;
                    let l_psi = op.dot(psi);
                    let g = gravity_term(cloud, i, &k)?;
                    let mut row = op;
                    for v in row.vals.iter_mut() {
                        *v = -*v;
                    }
                    row.vals[0] = row.vals[0] + a0 * model.moisture_capacity(psi[i]);
                    let theta_prev = state.theta_nm1.as_ref().map_or(T::zero(), |t| t[i]);
                    let storage = a0 * model.water_content(psi[i]) + a1 * state.theta_n[i] + a2 * theta_prev;
                    Ok((row, l_psi + g - storage - sink[i]))
                }
                Some(BoundaryCondition::Dirichlet(v)) => {
                    Ok((problem.system.boundary_row(i, k[i], BoundaryRowKind::Dirichlet)?, *v - psi[i]))
                }
                Some(bc) => {
                    let mut row = problem.system.boundary_row(i, k[i], BoundaryRowKind::Flux)?;
                    let (g, nz) = problem.system.normal_derivative(i).ok_or(OperatorError::ZeroNormal { node: i })?;
                    let stencil = &problem.system.stencils()[i].neighbors;
                    let dpsi = stencil.iter().zip(g).fold(T::zero(), |acc, (&j, &w)| acc + w * psi[j]);
                    let centre = stencil.iter().position(|&j| j == i);
                    let rhs = match bc {
                        BoundaryCondition::Flux(q) => {
                            let q = evaluate_surface_flux(q, t_next);
                            let drive = dpsi + nz;
                            match centre {
                                // Inflow: ∂ψ/∂n + n_z + Q/K(ψ_i) = 0 with K(ψ_i) linearized.
                                // The left side is concave and increasing in ψ_i, so
                                // the iteration cannot cycle the way the lagged-K row
                                // does on dry soil.
                                Some(c) if q < T::zero() && k[i] > T::min_positive_value() => {
                                    let dk = model.conductivity_derivative(psi[i]);
                                    row = SparseRow::new(stencil.clone(), g.to_vec());
                                    row.vals[c] = row.vals[c] - q * dk / (k[i] * k[i]);
                                    -(drive + q / k[i])
                                }
                                _ => q + k[i] * drive,
                            }
                        }
                        _ => k[i] * dpsi,
                    };
                    Ok((row, rhs))
                }
            }
        })
        .collect::<Result<_, _>>()?;
    let (rows, rhs): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    Ok((CsrMatrix::from_rows(&rows, cloud.len()), rhs))
}

/// Modified Picard iteration for one time level.
pub fn picard_solve<T: Real>(
    problem: &Problem<T>,
    state: &SimulationState<T>,
    scheme: Scheme,
    dt: T,
    controls: &PicardControls<T>,
    solver: &mut SparseSolver,
) -> Result<PicardOutcome<T>, StepError> {
    if !(dt > T::zero() && dt.is_finite()) {
        return Err(StepError::TimeStep(dt.as_f64()));
    }
    let t_next = state.t + dt;
    let coeffs = bdf_coefficients(scheme, dt, if scheme == Scheme::Bdf2 { state.dt_prev } else { None });
    let mut psi = match (controls.initial_guess, &state.psi_nm1, state.dt_prev) {
        (InitialGuess::LinearExtrapolation, Some(prev), Some(dtp)) => {
            let r = dt / dtp;
            state.psi_n.iter().zip(prev).map(|(&a, &b)| a + r * (a - b)).collect()
        }
        _ => state.psi_n.clone(),
    };
    problem.apply_dirichlet(&mut psi);
    let mut history = Vec::new();
    for m in 1..=controls.max_iters {
        let (a, b) = assemble_increment_system(problem, state, &psi, coeffs, t_next)?;
        let delta = solver.solve(&a, &b).map_err(|source| StepError::LinearSolve {
            t: t_next.as_f64(),
            iteration: m,
            source,
        })?;
        for (h, d) in psi.iter_mut().zip(&delta) {
            *h = *h + *d;
        }
        if let Some(node) = psi.iter().position(|v| !v.is_finite()) {
            return Err(StepError::NonFinite { node, t: t_next.as_f64() });
        }
        let norm = increment_norm(&delta, controls.norm);
        history.push(norm);
        if norm <= controls.tol {
            return Ok(PicardOutcome { psi, iterations: m, increment_norm: norm, history });
        }
    }
    Err(StepError::NonConvergence {
        t: t_next.as_f64(),
        iterations: controls.max_iters,
        history: history.iter().map(|v| v.as_f64()).collect(),
    })
}

fn commit<T: Real>(problem: &Problem<T>, state: &mut SimulationState<T>, psi: Vec<T>, dt: T) {
    let theta = problem.water_content(&psi);
    state.psi_nm1 = Some(std::mem::replace(&mut state.psi_n, psi));
    state.theta_nm1 = Some(std::mem::replace(&mut state.theta_n, theta));
    state.t = state.t + dt;
    state.dt_prev = Some(dt);
    state.step_index += 1;
}

/// Summary of one committed step (possibly made of halved sub-steps).
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iterations: usize,
    pub substeps: usize,
}

fn advance<T: Real>(
    problem: &Problem<T>,
    state: &mut SimulationState<T>,
    scheme: Scheme,
    dt: T,
    controls: &PicardControls<T>,
    solver: &mut SparseSolver,
    halvings_left: usize,
) -> Result<StepReport, StepError> {
    match picard_solve(problem, state, scheme, dt, controls, solver) {
        Ok(out) => {
            commit(problem, state, out.psi, dt);
            Ok(StepReport { iterations: out.iterations, substeps: 1 })
        }
        Err(e) if e.is_non_convergence() && halvings_left > 0 => {
            let half = dt * T::lit(0.5);
            let a = advance(problem, state, scheme, half, controls, solver, halvings_left - 1)?;
            let b = advance(problem, state, scheme, half, controls, solver, halvings_left - 1)?;
            Ok(StepReport { iterations: a.iterations + b.iterations, substeps: a.substeps + b.substeps })
        }
        Err(e) => Err(e),
    }
}

/// One BDF2 step; the first step of a run uses backward Euler.
pub fn bdf2_advance<T: Real>(
    problem: &Problem<T>,
    state: &mut SimulationState<T>,
    dt: T,
    controls: &PicardControls<T>,
    solver: &mut SparseSolver,
) -> Result<StepReport, StepError> {
    advance(problem, state, Scheme::Bdf2, dt, controls, solver, controls.max_halvings)
}

/// One backward Euler step.
pub fn bdf1_advance<T: Real>(
    problem: &Problem<T>,
    state: &mut SimulationState<T>,
    dt: T,
    controls: &PicardControls<T>,
    solver: &mut SparseSolver,
) -> Result<StepReport, StepError> {
    advance(problem, state, Scheme::Bdf1, dt, controls, solver, controls.max_halvings)
}

pub fn advance_with<T: Real>(
    scheme: Scheme,
    problem: &Problem<T>,
    state: &mut SimulationState<T>,
    dt: T,
    controls: &PicardControls<T>,
    solver: &mut SparseSolver,
) -> Result<StepReport, StepError> {
    advance(problem, state, scheme, dt, controls, solver, controls.max_halvings)
}
