//! Soil hydraulic closures: water retention θ(ψ), conductivity K(ψ) and the
//! specific moisture capacity C(ψ) = dθ/dψ.
//!
//! Lengths are in metres and times in hours throughout. Pressure head ψ is
//! negative in unsaturated soil; every closure short-circuits to its
//! saturated branch for ψ ≥ 0.

use serde::{Deserialize, Serialize};

use crate::error::ParamError;
use crate::scalar::Real;

/// van Genuchten retention with the Mualem conductivity model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VanGenuchten<T> {
    pub theta_r: T,
    pub theta_s: T,
    /// Inverse air-entry head [1/m].
    pub alpha: T,
    pub n: T,
    /// Stored explicitly so configurations may quote published values; must
    /// agree with `1 - 1/n`.
    pub m: T,
    /// Saturated conductivity [m/h].
    pub k_s: T,
}

/// Exponential (Gardner) closures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gardner<T> {
    pub theta_r: T,
    pub theta_s: T,
    /// Inverse capillary length [1/m].
    pub alpha: T,
    /// Saturated conductivity [m/h].
    pub k_s: T,
}

/// The active closure family of a material.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SoilModel<T> {
    VanGenuchten(VanGenuchten<T>),
    Gardner(Gardner<T>),
}

const M_TOLERANCE: f64 = 1e-12;

fn check_contents<T: Real>(theta_r: T, theta_s: T) -> Result<(), ParamError> {
    if !(theta_r >= T::zero() && theta_r < theta_s && theta_s <= T::one()) {
        return Err(ParamError::new(
            "theta_r/theta_s",
            format!("need 0 <= theta_r < theta_s <= 1, got theta_r={theta_r}, theta_s={theta_s}"),
        ));
    }
    Ok(())
}

fn check_positive<T: Real>(name: &'static str, v: T) -> Result<(), ParamError> {
    if !(v > T::zero() && v.is_finite()) {
        return Err(ParamError::new(name, format!("must be positive and finite, got {v}")));
    }
    Ok(())
}

impl<T: Real> VanGenuchten<T> {
    /// Builds a parameter set with `m = 1 - 1/n`.
    pub fn new(theta_r: T, theta_s: T, alpha: T, n: T, k_s: T) -> Result<Self, ParamError> {
        Self::with_m(theta_r, theta_s, alpha, n, T::one() - T::one() / n, k_s)
    }

    pub fn with_m(theta_r: T, theta_s: T, alpha: T, n: T, m: T, k_s: T) -> Result<Self, ParamError> {
        let p = Self { theta_r, theta_s, alpha, n, m, k_s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check_contents(self.theta_r, self.theta_s)?;
        check_positive("alpha", self.alpha)?;
        check_positive("k_s", self.k_s)?;
        if !(self.n > T::one()) {
            return Err(ParamError::new("n", format!("must exceed 1, got {}", self.n)));
        }
        let expected = T::one() - T::one() / self.n;
        if (self.m - expected).abs() > T::lit(M_TOLERANCE) {
            return Err(ParamError::new(
                "m",
                format!("must equal 1 - 1/n = {expected} within {M_TOLERANCE:e}, got {}", self.m),
            ));
        }
        Ok(())
    }

    /// `1 + (α|ψ|)^n` for ψ < 0.
    #[inline]
    fn base(&self, psi: T) -> (T, T) {
        let u = self.alpha * psi.abs();
        let un = u.powf(self.n);
        (u, T::one() + un)
    }

    pub fn water_content(&self, psi: T) -> T {
        if psi >= T::zero() {
            return self.theta_s;
        }
        let (_, b) = self.base(psi);
        self.theta_r + (self.theta_s - self.theta_r) / b.powf(self.m)
    }

    pub fn conductivity(&self, psi: T) -> T {
        if psi >= T::zero() {
            return self.k_s;
        }
        let (u, b) = self.base(psi);
        let inner = T::one() - u.powf(self.n - T::one()) * b.powf(-self.m);
        let half = T::lit(0.5);
        self.k_s * inner * inner / b.powf(self.m * half)
    }

    /// `dK/dψ`; unbounded as ψ → 0⁻ when n < 2.
    pub fn conductivity_derivative(&self, psi: T) -> T {
        if psi >= T::zero() {
            return T::zero();
        }
        let (u, b) = self.base(psi);
        let one = T::one();
        let half = T::lit(0.5);
        let inner = one - u.powf(self.n - one) * b.powf(-self.m);
        // d/du of inner and of b
        let d_inner = -u.powf(self.n - T::lit(2.0))
            * b.powf(-self.m - one)
            * ((self.n - one) * b - self.m * self.n * u.powf(self.n));
        let d_b = self.n * u.powf(self.n - one);
        let dk_du = self.k_s
            * b.powf(-self.m * half)
            * (T::lit(2.0) * inner * d_inner - half * self.m * inner * inner * d_b / b);
        -self.alpha * dk_du
    }

    pub fn moisture_capacity(&self, psi: T) -> T {
        if psi >= T::zero() {
            return T::zero();
        }
        let (u, b) = self.base(psi);
        (self.theta_s - self.theta_r) * self.m * self.n * self.alpha * u.powf(self.n - T::one())
            / b.powf(self.m + T::one())
    }
}

impl<T: Real> Gardner<T> {
    pub fn new(theta_r: T, theta_s: T, alpha: T, k_s: T) -> Result<Self, ParamError> {
        let p = Self { theta_r, theta_s, alpha, k_s };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        check_contents(self.theta_r, self.theta_s)?;
        check_positive("alpha", self.alpha)?;
        check_positive("k_s", self.k_s)
    }

    pub fn water_content(&self, psi: T) -> T {
        if psi >= T::zero() {
            return self.theta_s;
        }
        self.theta_r + (self.theta_s - self.theta_r) * (self.alpha * psi).exp()
    }

    pub fn conductivity(&self, psi: T) -> T {
        if psi >= T::zero() {
            return self.k_s;
        }
        self.k_s * (self.alpha * psi).exp()
    }

    pub fn conductivity_derivative(&self, psi: T) -> T {
        if psi >= T::zero() {
            return T::zero();
        }
        self.alpha * self.k_s * (self.alpha * psi).exp()
    }

    pub fn moisture_capacity(&self, psi: T) -> T {
        if psi >= T::zero() {
            return T::zero();
        }
        (self.theta_s - self.theta_r) * self.alpha * (self.alpha * psi).exp()
    }
}

impl<T: Real> SoilModel<T> {
    pub fn validate(&self) -> Result<(), ParamError> {
        match self {
            SoilModel::VanGenuchten(p) => p.validate(),
            SoilModel::Gardner(p) => p.validate(),
        }
    }

    #[inline]
    pub fn water_content(&self, psi: T) -> T {
        match self {
            SoilModel::VanGenuchten(p) => p.water_content(psi),
            SoilModel::Gardner(p) => p.water_content(psi),
        }
    }

    #[inline]
    pub fn conductivity(&self, psi: T) -> T {
        match self {
            SoilModel::VanGenuchten(p) => p.conductivity(psi),
            SoilModel::Gardner(p) => p.conductivity(psi),
        }
    }

    #[inline]
    pub fn conductivity_derivative(&self, psi: T) -> T {
        match self {
            SoilModel::VanGenuchten(p) => p.conductivity_derivative(psi),
            SoilModel::Gardner(p) => p.conductivity_derivative(psi),
        }
    }

    #[inline]
    pub fn moisture_capacity(&self, psi: T) -> T {
        match self {
            SoilModel::VanGenuchten(p) => p.moisture_capacity(psi),
            SoilModel::Gardner(p) => p.moisture_capacity(psi),
        }
    }

    pub fn theta_r(&self) -> T {
        match self {
            SoilModel::VanGenuchten(p) => p.theta_r,
            SoilModel::Gardner(p) => p.theta_r,
        }
    }

    pub fn theta_s(&self) -> T {
        match self {
            SoilModel::VanGenuchten(p) => p.theta_s,
            SoilModel::Gardner(p) => p.theta_s,
        }
    }

    pub fn k_s(&self) -> T {
        match self {
            SoilModel::VanGenuchten(p) => p.k_s,
            SoilModel::Gardner(p) => p.k_s,
        }
    }
}

/// θ(ψ) for the given closure.
pub fn water_content<T: Real>(model: &SoilModel<T>, psi: T) -> T {
    model.water_content(psi)
}

/// K(ψ) for the given closure.
pub fn conductivity<T: Real>(model: &SoilModel<T>, psi: T) -> T {
    model.conductivity(psi)
}

/// C(ψ) = dθ/dψ from the analytic derivative of the retention curve.
pub fn moisture_capacity<T: Real>(model: &SoilModel<T>, psi: T) -> T {
    model.moisture_capacity(psi)
}
