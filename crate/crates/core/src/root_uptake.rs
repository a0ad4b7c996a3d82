//! Macroscopic root water uptake.
//!
//! Two families are supported: the Feddes stress-response model, where the
//! sink is `α(ψ)·b(x)·Tp` with a normalized root distribution `b`, and the
//! ψ-independent stepwise and exponential sink profiles used for
//! verification runs.

use crate::error::ParamError;
use crate::scalar::Real;

/// Feddes stress-response breakpoints and transpiration demand.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeddesParams<T> {
    /// Anaerobiosis point: no uptake at or above this head [m].
    pub psi1: T,
    /// Start of optimal uptake [m].
    pub psi2: T,
    pub psi3_low: T,
    pub psi3_high: T,
    /// Wilting point [m].
    pub psi4: T,
    /// Transpiration rate at which `psi3_low` applies [m/h].
    pub r2_low: T,
    /// Transpiration rate at which `psi3_high` applies [m/h].
    pub r2_high: T,
    /// Potential transpiration [m/h].
    pub tp: T,
}

impl<T: Real> FeddesParams<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        let ordered = self.psi4 < self.psi3_high
            && self.psi3_high <= self.psi3_low
            && self.psi3_low < self.psi2
            && self.psi2 <= self.psi1;
        if !ordered {
            return Err(ParamError::new(
                "psi1..psi4",
                format!(
                    "need psi4 < psi3_high <= psi3_low < psi2 <= psi1, got {} {} {} {} {}",
                    self.psi4, self.psi3_high, self.psi3_low, self.psi2, self.psi1
                ),
            ));
        }
        if !(self.r2_low > T::zero() && self.r2_low < self.r2_high) {
            return Err(ParamError::new(
                "r2_low/r2_high",
                format!("need 0 < r2_low < r2_high, got {} and {}", self.r2_low, self.r2_high),
            ));
        }
        if !(self.tp >= T::zero() && self.tp.is_finite()) {
            return Err(ParamError::new("tp", format!("must be non-negative, got {}", self.tp)));
        }
        Ok(())
    }
}

/// Stress reduction factor α(ψ) ∈ [0, 1], with ψ₃ supplied by the caller.
///
/// When `psi1 == psi2` the upper ramp collapses to a step: α = 1 at ψ₂ and
/// 0 above it.
pub fn feddes_alpha<T: Real>(p: &FeddesParams<T>, psi: T, psi3: T) -> T {
    if psi <= p.psi4 {
        T::zero()
    } else if psi <= psi3 {
        (psi - p.psi4) / (psi3 - p.psi4)
    } else if psi <= p.psi2 {
        T::one()
    } else if psi < p.psi1 {
        (psi - p.psi1) / (p.psi2 - p.psi1)
    } else {
        T::zero()
    }
}

/// ψ₃ as a function of the transpiration demand: `psi3_low` for low demand,
/// `psi3_high` for high demand, linear in between.
pub fn interpolate_psi3<T: Real>(p: &FeddesParams<T>) -> T {
    if p.tp <= p.r2_low {
        p.psi3_low
    } else if p.tp >= p.r2_high {
        p.psi3_high
    } else {
        p.psi3_low + (p.psi3_high - p.psi3_low) * (p.tp - p.r2_low) / (p.r2_high - p.r2_low)
    }
}

/// Shape of the root density as a function of depth below the surface.
#[derive(Debug, Clone, PartialEq)]
pub enum RootProfile<T> {
    Uniform,
    /// Maximum at the surface, zero at the root depth.
    Linear,
    /// `(depth [m], relative density)` pairs, interpolated linearly.
    Tabulated(Vec<(T, T)>),
}

/// Root density `b` sampled at the nodes and normalized so that its
/// quadrature over the root zone equals one (per unit surface width).
#[derive(Debug, Clone, PartialEq)]
pub struct RootDistribution<T> {
    pub profile: RootProfile<T>,
    pub root_depth: T,
    /// Nodal density [1/m].
    pub nodal: Vec<T>,
}

impl<T: Real> RootDistribution<T> {
    /// `depth[i]` is the depth of node `i` below the soil surface and
    /// `weights[i]` its quadrature weight.
    pub fn new(profile: RootProfile<T>, root_depth: T, depth: &[T], weights: &[T]) -> Result<Self, ParamError> {
        if !(root_depth > T::zero()) {
            return Err(ParamError::new("root_depth", format!("must be positive, got {root_depth}")));
        }
        if depth.len() != weights.len() {
            return Err(ParamError::new("weights", "one quadrature weight per node required"));
        }
        if let RootProfile::Tabulated(table) = &profile {
            if table.len() < 2 || table.windows(2).any(|w| !(w[0].0 < w[1].0)) {
                return Err(ParamError::new("root_table", "need at least two rows with strictly increasing depth"));
            }
            if table.iter().any(|&(_, v)| v < T::zero()) {
                return Err(ParamError::new("root_table", "densities must be non-negative"));
            }
        }
        // Inclusive membership at the root tip, up to rounding of node coordinates.
        let slack = root_depth * T::lit(1e-12);
        let raw: Vec<T> = depth
            .iter()
            .map(|&d| {
                if d < -slack || d > root_depth + slack {
                    return T::zero();
                }
                let tip = (d - root_depth).abs() <= slack;
                let d = d.max(T::zero()).min(root_depth);
                let v = match &profile {
                    RootProfile::Uniform => T::one(),
                    RootProfile::Linear => T::one() - d / root_depth,
                    RootProfile::Tabulated(table) => interp_table(table, d),
                };
                // the density jumps to zero at the tip; take the mean of both sides
                if tip {
                    v * T::lit(0.5)
                } else {
                    v
                }
            })
            .collect();
        let total = raw.iter().zip(weights).fold(T::zero(), |acc, (&b, &w)| acc + b * w);
        if !(total > T::zero()) {
            return Err(ParamError::new("root_depth", "root zone contains no nodes with positive density"));
        }
        let nodal = raw.into_iter().map(|b| b / total).collect();
        Ok(Self { profile, root_depth, nodal })
    }
}

fn interp_table<T: Real>(table: &[(T, T)], d: T) -> T {
    let first = table[0];
    let last = table[table.len() - 1];
    if d <= first.0 {
        return first.1;
    }
    if d >= last.0 {
        return last.1;
    }
    for w in table.windows(2) {
        let (d0, v0) = w[0];
        let (d1, v1) = w[1];
        if d <= d1 {
            return v0 + (v1 - v0) * (d - d0) / (d1 - d0);
        }
    }
    last.1
}

/// Nodal Feddes sink `s_i = α(ψ_i)·b_i·Tp` [1/h].
pub fn feddes_sink<T: Real>(p: &FeddesParams<T>, b: &RootDistribution<T>, psi: &[T], psi3: T) -> Vec<T> {
    psi.iter()
        .zip(&b.nodal)
        .map(|(&h, &bi)| if bi > T::zero() { feddes_alpha(p, h, psi3) * bi * p.tp } else { T::zero() })
        .collect()
}

/// Actual transpiration `Ta = Tp·Σ w_i α(ψ_i) b_i` [m/h].
pub fn actual_transpiration<T: Real>(
    p: &FeddesParams<T>,
    b: &RootDistribution<T>,
    psi: &[T],
    psi3: T,
    weights: &[T],
) -> T {
    let integral = psi.iter().zip(&b.nodal).zip(weights).fold(T::zero(), |acc, ((&h, &bi), &w)| {
        if bi > T::zero() {
            acc + w * bi * feddes_alpha(p, h, psi3)
        } else {
            acc
        }
    });
    // Quadrature rounding can push a fully unstressed integral a hair above one.
    p.tp * integral.min(T::one())
}

/// ψ-independent sink profiles along the vertical.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimplifiedSink<T> {
    /// `r0` on `l1 ≤ z ≤ l`, zero below.
    Stepwise { r0: T, l1: T, l: T },
    /// `r0·exp(β(z − top))`.
    Exponential { r0: T, beta: T, top: T },
}

impl<T: Real> SimplifiedSink<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        match *self {
            SimplifiedSink::Stepwise { r0, l1, l } => {
                if !(r0 >= T::zero()) {
                    return Err(ParamError::new("r0", format!("must be non-negative, got {r0}")));
                }
                if !(l1 >= T::zero() && l1 <= l) {
                    return Err(ParamError::new("l1", format!("need 0 <= l1 <= l, got l1={l1}, l={l}")));
                }
            }
            SimplifiedSink::Exponential { r0, beta, .. } => {
                if !(r0 >= T::zero()) {
                    return Err(ParamError::new("r0", format!("must be non-negative, got {r0}")));
                }
                if !(beta > T::zero()) {
                    return Err(ParamError::new("beta", format!("must be positive, got {beta}")));
                }
            }
        }
        Ok(())
    }

    /// Sink rate at elevation `z` [1/h].
    pub fn rate(&self, z: T) -> T {
        match *self {
            SimplifiedSink::Stepwise { r0, l1, l } => {
                if z >= l1 && z <= l {
                    r0
                } else {
                    T::zero()
                }
            }
            SimplifiedSink::Exponential { r0, beta, top } => r0 * (beta * (z - top)).exp(),
        }
    }

    /// `∫_z^top s(ζ) dζ`, the uptake above elevation `z` [m/h].
    pub fn integral_above(&self, z: T, top: T) -> T {
        match *self {
            SimplifiedSink::Stepwise { r0, l1, l } => {
                let hi = l.min(top);
                let lo = z.max(l1);
                if hi > lo {
                    r0 * (hi - lo)
                } else {
                    T::zero()
                }
            }
            SimplifiedSink::Exponential { r0, beta, top: ref_top } => {
                let f = |x: T| r0 / beta * (beta * (x - ref_top)).exp();
                f(top) - f(z)
            }
        }
    }
}

/// Sink rate of a simplified profile at elevation `z`.
pub fn simplified_sink<T: Real>(s: &SimplifiedSink<T>, z: T) -> T {
    s.rate(z)
}
