//! Gaussian RBF kernel, local interpolation systems and the sparse rows of
//! the linearized operator.
//!
//! The conductivity operator `L` is the interface-averaged second difference
//! along each axis. Applied to basis function `φ_j` it only samples `φ_j` at
//! the center and its axis neighbours `x_p`, so the RBF row
//! `Λ = ϑ Φ⁻¹` factors as `Σ_p c_p(K) · w_p` with transfer rows
//! `w_p = Φ⁻¹ φ(x_p)`. The transfer rows depend only on geometry and ε and are
//! computed once, in extended precision, per simulation.

use rayon::prelude::*;

use crate::cloud::{BoundaryTag, NodeCloud, Side, StencilIndex, MAX_DIM};
use crate::error::OperatorError;
use crate::linalg::{cholesky_in_place, cholesky_solve, CsrMatrix, SparseRow};
use num_traits::{One, Zero};

use crate::scalar::{Real, Wide};

/// Gaussian kernel `φ(r) = exp(−ε² r²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbfKernel<T> {
    epsilon: T,
}

impl<T: Real> RbfKernel<T> {
    pub fn new(epsilon: T) -> Result<Self, OperatorError> {
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(OperatorError::ShapeParameter(epsilon.as_f64()));
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    fn eval_wide(&self, a: &[T], b: &[T]) -> T::Wide {
        let e = self.epsilon.to_wide();
        let r2 = dist2_wide(a, b);
        (-(e * e) * r2).exp_full()
    }
}

fn dist2_wide<T: Real>(a: &[T], b: &[T]) -> T::Wide {
    a.iter().zip(b).fold(T::Wide::zero(), |acc, (&x, &y)| {
        let d = x.to_wide() - y.to_wide();
        acc + d * d
    })
}

pub fn kernel_eval<T: Real>(k: &RbfKernel<T>, r: T) -> T {
    let er = k.epsilon * r;
    (-(er * er)).exp()
}

/// Gradient of `φ(‖x − x_k‖)` with respect to `x = point`, for the kernel
/// centered at `center`.
pub fn kernel_gradient<T: Real>(k: &RbfKernel<T>, center: &[T], point: &[T]) -> [T; MAX_DIM] {
    let r2 = center.iter().zip(point).fold(T::zero(), |acc, (&c, &p)| acc + (p - c) * (p - c));
    let e2 = k.epsilon * k.epsilon;
    let phi = (-(e2 * r2)).exp();
    let mut g = [T::zero(); MAX_DIM];
    for (d, (&c, &p)) in center.iter().zip(point).enumerate() {
        g[d] = -T::lit(2.0) * e2 * (p - c) * phi;
    }
    g
}

/// Entries `φ(‖x_i − x_j‖)` over the stencil, row-major.
pub fn local_interpolation_matrix<T: Real>(k: &RbfKernel<T>, cloud: &NodeCloud<T>, stencil: &StencilIndex) -> Vec<T> {
    let n = stencil.neighbors.len();
    let mut m = vec![T::zero(); n * n];
    for (a, &i) in stencil.neighbors.iter().enumerate() {
        for (b, &j) in stencil.neighbors.iter().enumerate() {
            m[a * n + b] = T::from_wide(k.eval_wide(cloud.point(i), cloud.point(j)));
        }
    }
    m
}

/// Cholesky factor of a local interpolation matrix in extended precision.
#[derive(Debug, Clone)]
pub struct LocalFactorization<T: Real> {
    nodes: Vec<usize>,
    factor: Vec<T::Wide>,
}

impl<T: Real> LocalFactorization<T> {
    pub fn new(k: &RbfKernel<T>, cloud: &NodeCloud<T>, stencil: &StencilIndex) -> Result<Self, OperatorError> {
        let nodes = stencil.neighbors.clone();
        let n = nodes.len();
        let mut a = vec![T::Wide::zero(); n * n];
        for (r, &i) in nodes.iter().enumerate() {
            for (c, &j) in nodes.iter().enumerate().take(r + 1) {
                let v = k.eval_wide(cloud.point(i), cloud.point(j));
                a[r * n + c] = v;
                a[c * n + r] = v;
            }
        }
        cholesky_in_place(&mut a, n)
            .map_err(|pivot| OperatorError::NotPositiveDefinite { stencil: stencil.center, pivot })?;
        Ok(Self { nodes, factor: a })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    fn solve_wide(&self, rhs: &[T::Wide]) -> Vec<T::Wide> {
        let mut x = rhs.to_vec();
        cholesky_solve(&self.factor, self.nodes.len(), &mut x);
        x
    }

    /// Solves `Φ w = rhs` and rounds to the working precision.
    pub fn solve(&self, rhs: &[T::Wide]) -> Vec<T> {
        self.solve_wide(rhs).into_iter().map(T::from_wide).collect()
    }

    /// Weights reproducing the value of the interpolant at `point`.
    pub fn evaluation_weights(&self, k: &RbfKernel<T>, cloud: &NodeCloud<T>, point: &[T]) -> Vec<T> {
        let rhs: Vec<T::Wide> = self.nodes.iter().map(|&j| k.eval_wide(point, cloud.point(j))).collect();
        self.solve(&rhs)
    }

    /// Weights for the derivative along `dir` at `point`: the RBF weights,
    /// corrected by the smallest change that makes them exact on constant and
    /// linear fields.
    pub fn directional_weights(
        &self,
        k: &RbfKernel<T>,
        cloud: &NodeCloud<T>,
        point: &[T],
        dir: &[T],
    ) -> Result<Vec<T>, OperatorError> {
        let e = k.epsilon.to_wide();
        let two = T::Wide::lit(2.0);
        let rhs: Vec<T::Wide> =
            self.nodes
                .iter()
                .map(|&j| {
                    let xj = cloud.point(j);
                    let phi = k.eval_wide(point, xj);
                    let proj =
                        point.iter().zip(xj).zip(dir).fold(T::Wide::zero(), |acc, ((&p, &q), &d)| {
                            acc + (p.to_wide() - q.to_wide()) * d.to_wide()
                        });
                    -two * e * e * proj * phi
                })
                .collect();
        let mut g = self.solve_wide(&rhs);

        let dim = point.len();
        let m = dim + 1;
        let p_row = |r: usize, j: usize| -> T::Wide {
            if r == 0 {
                T::Wide::one()
            } else {
                cloud.point(j)[r - 1].to_wide() - point[r - 1].to_wide()
            }
        };
        let mut gram = vec![T::Wide::zero(); m * m];
        let mut resid = vec![T::Wide::zero(); m];
        for r in 0..m {
            for c in 0..m {
                gram[r * m + c] = self.nodes.iter().fold(T::Wide::zero(), |acc, &j| acc + p_row(r, j) * p_row(c, j));
            }
            let target = if r == 0 { T::Wide::zero() } else { dir[r - 1].to_wide() };
            resid[r] = self.nodes.iter().zip(&g).fold(T::Wide::zero(), |acc, (&j, &w)| acc + p_row(r, j) * w) - target;
        }
        let center = self.nodes[0];
        cholesky_in_place(&mut gram, m)
            .map_err(|pivot| OperatorError::NotPositiveDefinite { stencil: center, pivot })?;
        cholesky_solve(&gram, m, &mut resid);
        for (w, &j) in g.iter_mut().zip(&self.nodes) {
            for (r, &y) in resid.iter().enumerate() {
                *w = *w - p_row(r, j) * y;
            }
        }
        Ok(g.into_iter().map(T::from_wide).collect())
    }
}

/// Interface-averaged coefficients `c_p` such that `L g (x_i) = Σ_p c_p g_p`
/// over the center and its axis neighbours. With `axisymmetric`, axis 0 is the
/// radius and carries the `(1/r) ∂_r (r K ∂_r ·)` metric.
pub fn interface_coefficients<T: Real>(
    cloud: &NodeCloud<T>,
    center: usize,
    k_nodal: &[T],
    axisymmetric: bool,
) -> Result<Vec<(usize, T)>, OperatorError> {
    let half = T::lit(0.5);
    let mut out = Vec::with_capacity(2 * cloud.dim() + 1);
    let mut diag = T::zero();
    for axis in 0..cloud.dim() {
        let lo = cloud
            .axis_neighbor(center, axis, Side::Low)
            .ok_or(OperatorError::MissingNeighbor { node: center, axis })?;
        let hi = cloud
            .axis_neighbor(center, axis, Side::High)
            .ok_or(OperatorError::MissingNeighbor { node: center, axis })?;
        let h = cloud.spacing()[axis];
        let h2 = h * h;
        let mut k_lo = half * (k_nodal[center] + k_nodal[lo]) / h2;
        let mut k_hi = half * (k_nodal[center] + k_nodal[hi]) / h2;
        if axisymmetric && axis == 0 && cloud.dim() > 1 {
            let r = cloud.point(center)[0];
            k_lo = k_lo * (r - half * h) / r;
            k_hi = k_hi * (r + half * h) / r;
        }
        out.push((lo, k_lo));
        out.push((hi, k_hi));
        diag = diag - k_lo - k_hi;
    }
    out.push((center, diag));
    Ok(out)
}

/// `L g` at `center` for a nodal field `g`.
pub fn apply_interface_operator<T: Real>(
    cloud: &NodeCloud<T>,
    center: usize,
    k_nodal: &[T],
    g: &[T],
) -> Result<T, OperatorError> {
    let c = interface_coefficients(cloud, center, k_nodal, false)?;
    Ok(c.iter().fold(T::zero(), |acc, &(p, w)| acc + w * g[p]))
}

/// Gravity term `(K_{i+½} − K_{i−½})/Δz = (K_up − K_down)/(2Δz)`.
pub fn gravity_term<T: Real>(cloud: &NodeCloud<T>, node: usize, k_nodal: &[T]) -> Result<T, OperatorError> {
    let axis = cloud.vertical_axis();
    let up = cloud.axis_neighbor(node, axis, Side::High).ok_or(OperatorError::MissingNeighbor { node, axis })?;
    let down = cloud.axis_neighbor(node, axis, Side::Low).ok_or(OperatorError::MissingNeighbor { node, axis })?;
    Ok((k_nodal[up] - k_nodal[down]) / (T::lit(2.0) * cloud.spacing()[axis]))
}

/// Boundary condition type at a boundary row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryRowKind {
    Dirichlet,
    /// Any condition on `−K ∂ψ/∂n` (prescribed flux or free drainage).
    Flux,
}

#[derive(Debug, Clone)]
enum NodeOperator<T> {
    Interior {
        /// `(node, transfer row over the stencil)` for center and axis neighbours.
        transfer: Vec<(usize, Vec<T>)>,
    },
    Dirichlet,
    Flux {
        normal_weights: Vec<T>,
        normal_z: T,
    },
}

/// Per-node stencils, factorized local systems and the geometric part of
/// every operator row.
#[derive(Debug, Clone)]
pub struct StencilSystem<T> {
    kernel: RbfKernel<T>,
    stencils: Vec<StencilIndex>,
    nodes: Vec<NodeOperator<T>>,
    axisymmetric: bool,
}

impl<T: Real> StencilSystem<T> {
    /// Factorizes every local matrix and precomputes transfer and
    /// normal-derivative rows.
    pub fn new(
        kernel: RbfKernel<T>,
        cloud: &NodeCloud<T>,
        stencils: Vec<StencilIndex>,
        axisymmetric: bool,
    ) -> Result<Self, OperatorError> {
        Self::with_flux_layers(kernel, cloud, stencils, axisymmetric, 2)
    }

    /// As [`StencilSystem::new`], with flux-face normal derivatives drawn from
    /// stencil nodes at most `flux_layers` grid layers inside the face.
    pub fn with_flux_layers(
        kernel: RbfKernel<T>,
        cloud: &NodeCloud<T>,
        stencils: Vec<StencilIndex>,
        axisymmetric: bool,
        flux_layers: usize,
    ) -> Result<Self, OperatorError> {
        if stencils.len() != cloud.len() {
            return Err(OperatorError::DimensionMismatch { expected: cloud.len(), got: stencils.len() });
        }
        let nodes =
            stencils.par_iter().map(|s| build_node(&kernel, cloud, s, flux_layers)).collect::<Result<Vec<_>, _>>()?;
        Ok(Self { kernel, stencils, nodes, axisymmetric })
    }

    pub fn kernel(&self) -> &RbfKernel<T> {
        &self.kernel
    }

    pub fn stencils(&self) -> &[StencilIndex] {
        &self.stencils
    }

    pub fn len(&self) -> usize {
        self.stencils.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stencils.is_empty()
    }

    pub fn is_axisymmetric(&self) -> bool {
        self.axisymmetric
    }

    /// Row `Λ` approximating `L` at an interior node.
    pub fn operator_row(
        &self,
        cloud: &NodeCloud<T>,
        node: usize,
        k_nodal: &[T],
    ) -> Result<SparseRow<T>, OperatorError> {
        let NodeOperator::Interior { transfer } = &self.nodes[node] else {
            return Err(OperatorError::MissingNeighbor { node, axis: cloud.vertical_axis() });
        };
        let coeffs = interface_coefficients(cloud, node, k_nodal, self.axisymmetric)?;
        let n = self.stencils[node].neighbors.len();
        let mut vals = vec![T::zero(); n];
        for (p, c) in coeffs {
            let w = &transfer.iter().find(|(q, _)| *q == p).expect("transfer row per axis neighbour").1;
            for (v, &wj) in vals.iter_mut().zip(w) {
                *v = *v + c * wj;
            }
        }
        Ok(SparseRow::new(self.stencils[node].neighbors.clone(), vals))
    }

    /// `reaction·C·e_center − Λ`.
    pub fn interior_row(
        &self,
        cloud: &NodeCloud<T>,
        node: usize,
        k_nodal: &[T],
        capacity: T,
        reaction: T,
    ) -> Result<SparseRow<T>, OperatorError> {
        let mut row = self.operator_row(cloud, node, k_nodal)?;
        for v in row.vals.iter_mut() {
            *v = -*v;
        }
        row.vals[0] = row.vals[0] + reaction * capacity;
        Ok(row)
    }

    /// Weights `g` with `g·ψ|stencil ≈ ∂ψ/∂n` at a flux boundary node, and
    /// the vertical component of its outward normal.
    pub fn normal_derivative(&self, node: usize) -> Option<(&[T], T)> {
        match &self.nodes[node] {
            NodeOperator::Flux { normal_weights, normal_z } => Some((normal_weights, *normal_z)),
            _ => None,
        }
    }

    /// Dirichlet: unit row. Flux: `−K ∂/∂n`.
    pub fn boundary_row(&self, node: usize, k_center: T, kind: BoundaryRowKind) -> Result<SparseRow<T>, OperatorError> {
        match kind {
            BoundaryRowKind::Dirichlet => Ok(SparseRow::unit(node)),
            BoundaryRowKind::Flux => {
                let (g, _) = self.normal_derivative(node).ok_or(OperatorError::ZeroNormal { node })?;
                let vals = g.iter().map(|&w| -k_center * w).collect();
                Ok(SparseRow::new(self.stencils[node].neighbors.clone(), vals))
            }
        }
    }
}

fn build_node<T: Real>(
    k: &RbfKernel<T>,
    cloud: &NodeCloud<T>,
    s: &StencilIndex,
    flux_layers: usize,
) -> Result<NodeOperator<T>, OperatorError> {
    let factor = LocalFactorization::new(k, cloud, s)?;
    let center = s.center;
    match cloud.tag(center) {
        BoundaryTag::Dirichlet(_) => Ok(NodeOperator::Dirichlet),
        BoundaryTag::Neumann(_) => {
            let normal = cloud.outward_normal(center).ok_or(OperatorError::ZeroNormal { node: center })?;
            let dir = &normal[..cloud.dim()];
            if dir.iter().all(|v| v.is_zero()) {
                return Err(OperatorError::ZeroNormal { node: center });
            }
            let normal_weights = normal_weights(k, cloud, s, &factor, dir, flux_layers)?;
            Ok(NodeOperator::Flux { normal_weights, normal_z: normal[cloud.vertical_axis()] })
        }
        BoundaryTag::Interior => {
            let mut points = vec![center];
            for axis in 0..cloud.dim() {
                for side in [Side::Low, Side::High] {
                    let p = cloud
                        .axis_neighbor(center, axis, side)
                        .ok_or(OperatorError::MissingNeighbor { node: center, axis })?;
                    if !s.neighbors.contains(&p) {
                        return Err(OperatorError::NeighborOutsideStencil { node: center, neighbor: p });
                    }
                    points.push(p);
                }
            }
            let transfer =
                points.into_iter().map(|p| (p, factor.evaluation_weights(k, cloud, cloud.point(p)))).collect();
            Ok(NodeOperator::Interior { transfer })
        }
    }
}

/// Normal-derivative weights from the stencil nodes at most `layers` grid
/// layers inside the face. A corner's nearest neighbours reach deeper along
/// one face than a regular boundary node's do, and higher-order one-sided
/// formulas swing wildly across a steep, barely resolved wetting front; one
/// layer gives the monotone two-point difference. Dropped nodes get zero
/// weight so the row keeps the stencil's pattern.
fn normal_weights<T: Real>(
    k: &RbfKernel<T>,
    cloud: &NodeCloud<T>,
    s: &StencilIndex,
    factor: &LocalFactorization<T>,
    dir: &[T],
    layers: usize,
) -> Result<Vec<T>, OperatorError> {
    let centre = cloud.point(s.center);
    let layer = dir.iter().zip(cloud.spacing()).fold(T::zero(), |acc, (&d, &h)| acc + d.abs() * h);
    let limit = layer * T::lit(layers as f64 + 1e-6);
    let keep: Vec<bool> = s
        .neighbors
        .iter()
        .map(|&j| {
            let depth =
                centre.iter().zip(cloud.point(j)).zip(dir).fold(T::zero(), |acc, ((&c, &x), &d)| acc + (c - x) * d);
            depth <= limit
        })
        .collect();
    if keep.iter().all(|&b| b) {
        return factor.directional_weights(k, cloud, centre, dir);
    }
    let sub = StencilIndex {
        center: s.center,
        neighbors: s.neighbors.iter().zip(&keep).filter(|(_, &b)| b).map(|(&j, _)| j).collect(),
    };
    let g = LocalFactorization::new(k, cloud, &sub)?.directional_weights(k, cloud, centre, dir)?;
    let mut g = g.into_iter();
    Ok(keep.iter().map(|&b| if b { g.next().unwrap_or_else(T::zero) } else { T::zero() }).collect())
}

/// Stacks one row per node into the global sparse matrix.
pub fn assemble_global<T: Real>(rows: &[SparseRow<T>], cloud: &NodeCloud<T>) -> Result<CsrMatrix<T>, OperatorError> {
    if rows.len() != cloud.len() {
        return Err(OperatorError::DimensionMismatch { expected: cloud.len(), got: rows.len() });
    }
    Ok(CsrMatrix::from_rows(rows, cloud.len()))
}
