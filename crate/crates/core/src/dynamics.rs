//! The pinched skew product F_κ(θ,x) = (θ+ρ, tanh(κx)·(1/D)·Σ sin(πθ_i)).

use std::f64::consts::PI;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::CompensatedSum;
use crate::torus::{default_rotation, golden_mean, Angle, TorusPoint};

pub const DEFAULT_C: f64 = 0.2;
pub const DEFAULT_D: f64 = 1.1;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SystemParams {
    kappa: f64,
    #[serde(rename = "D")]
    dim: usize,
    rho: TorusPoint,
    c: f64,
    d: f64,
    theta_star: TorusPoint,
}

impl SystemParams {
    /// θ* defaults to the origin.
    pub fn new(kappa: f64, rho: TorusPoint, c: f64, d: f64) -> Result<SystemParams> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::OutOfRange { name: "kappa", value: kappa, range: "(0, ∞)" });
        }
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::OutOfRange { name: "c", value: c, range: "(0, ∞)" });
        }
        if !(d > 1.0 && d.is_finite()) {
            return Err(Error::OutOfRange { name: "d", value: d, range: "(1, ∞)" });
        }
        let dim = rho.dim();
        Ok(SystemParams { kappa, dim, rho, c, d, theta_star: TorusPoint::zeros(dim)? })
    }

    /// D = 1, golden-mean rotation, c = 0.2, d = 1.1.
    pub fn golden(kappa: f64) -> Result<SystemParams> {
        SystemParams::new(kappa, TorusPoint::new(vec![golden_mean()])?, DEFAULT_C, DEFAULT_D)
    }

    /// Default rotation for the given dimension with c = 0.2, d = 1.1.
    pub fn standard(kappa: f64, dim: usize) -> Result<SystemParams> {
        SystemParams::new(kappa, default_rotation(dim)?, DEFAULT_C, DEFAULT_D)
    }

    pub fn with_theta_star(mut self, theta_star: TorusPoint) -> Result<SystemParams> {
        if theta_star.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: theta_star.dim() });
        }
        self.theta_star = theta_star;
        Ok(self)
    }

    pub fn with_kappa(&self, kappa: f64) -> Result<SystemParams> {
        let p = SystemParams::new(kappa, self.rho.clone(), self.c, self.d)?;
        p.with_theta_star(self.theta_star.clone())
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rho(&self) -> &TorusPoint {
        &self.rho
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn d(&self) -> f64 {
        self.d
    }

    pub fn theta_star(&self) -> &TorusPoint {
        &self.theta_star
    }

    /// (1/D)·Σ sin(π·δ_i) with δ_i the wrap distance from θ_i to θ*_i.
    /// Equals (1/D)·Σ sin(πθ_i) when θ* = 0, and is never negative.
    #[inline]
    pub fn forcing(&self, theta: &[Angle]) -> f64 {
        if self.dim == 1 {
            return (PI * theta[0].distance(self.theta_star.coords()[0])).sin();
        }
        let s: f64 = theta
            .iter()
            .zip(self.theta_star.coords())
            .map(|(t, s)| (PI * t.distance(*s)).sin())
            .sum();
        s / self.dim as f64
    }

    /// tanh(κx)·g for a precomputed forcing value g.
    #[inline]
    pub fn apply(&self, forcing: f64, x: f64) -> f64 {
        (self.kappa * x).tanh() * forcing
    }

    /// κ·sech²(κx)·g, i.e. 4κ/(e^{κx}+e^{−κx})²·g.
    #[inline]
    pub fn slope(&self, forcing: f64, x: f64) -> f64 {
        let c = (self.kappa * x).cosh();
        self.kappa * forcing / (c * c)
    }

    pub(crate) fn check_theta(&self, theta: &TorusPoint) -> Result<()> {
        if theta.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: theta.dim() });
        }
        Ok(())
    }

    /// Short stable identifier of the parameter set.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.kappa.to_bits().to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        for a in self.rho.coords().iter().chain(self.theta_star.coords()) {
            h.update(a.bits().to_le_bytes());
        }
        h.update(self.c.to_bits().to_le_bytes());
        h.update(self.d.to_bits().to_le_bytes());
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhasePoint {
    pub theta: TorusPoint,
    pub x: f64,
}

impl PhasePoint {
    pub fn new(theta: TorusPoint, x: f64) -> Result<PhasePoint> {
        check_fiber(x)?;
        Ok(PhasePoint { theta, x })
    }
}

fn check_fiber(x: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&x) {
        return Err(Error::OutOfRange { name: "x", value: x, range: "[0, 1]" });
    }
    Ok(())
}

pub fn fiber_map(params: &SystemParams, theta: &TorusPoint, x: f64) -> Result<f64> {
    params.check_theta(theta)?;
    check_fiber(x)?;
    Ok(params.apply(params.forcing(theta.coords()), x))
}

pub fn fiber_derivative(params: &SystemParams, theta: &TorusPoint, x: f64) -> Result<f64> {
    params.check_theta(theta)?;
    check_fiber(x)?;
    Ok(params.slope(params.forcing(theta.coords()), x))
}

pub fn step(params: &SystemParams, p: &PhasePoint) -> Result<PhasePoint> {
    let x = fiber_map(params, &p.theta, p.x)?;
    let mut coords = p.theta.coords().to_vec();
    for (c, r) in coords.iter_mut().zip(params.rho().coords()) {
        *c = c.wrapping_add(*r);
    }
    Ok(PhasePoint { theta: TorusPoint::new(coords)?, x })
}

/// (1/N)·Σ_{k<N} log T'_{θ₀+kρ}(0).
pub fn zero_line_lyapunov(params: &SystemParams, theta0: &TorusPoint, n: u64) -> Result<f64> {
    params.check_theta(theta0)?;
    if n == 0 {
        return Err(Error::Precondition("N must be at least 1".into()));
    }
    let rho = params.rho().coords();
    let mut theta = theta0.coords().to_vec();
    let mut sum = CompensatedSum::new();
    for k in 0..n {
        let g = params.forcing(&theta);
        if g == 0.0 {
            return Err(Error::PinchedOrbit { index: k });
        }
        sum.add(g.ln());
        for (t, r) in theta.iter_mut().zip(rho) {
            *t = t.wrapping_add(*r);
        }
    }
    Ok(params.kappa().ln() + sum.value() / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn golden(kappa: f64) -> SystemParams {
        SystemParams::golden(kappa).unwrap()
    }

    fn pt(x: f64) -> TorusPoint {
        TorusPoint::from_f64s(&[x]).unwrap()
    }

    #[test]
    fn fiber_map_examples() {
        let p = golden(3.0);
        assert_eq!(fiber_map(&p, &pt(0.0), 0.7).unwrap(), 0.0);
        assert_eq!(fiber_map(&p, &pt(0.37), 0.0).unwrap(), 0.0);
        let v = fiber_map(&p, &pt(0.5), 1.0).unwrap();
        assert!((v - 0.995_054_753_686_730_5).abs() < 1e-15);
        assert!(fiber_map(&p, &pt(0.5), 1.5).is_err());
        assert!(fiber_map(&p, &pt(0.5), -1e-300).is_err());
    }

    #[test]
    fn derivative_examples() {
        let p = golden(3.0);
        assert_eq!(fiber_derivative(&p, &pt(0.5), 0.0).unwrap(), 3.0);
        assert_eq!(fiber_derivative(&p, &pt(0.0), 0.4).unwrap(), 0.0);
        let e3 = 3f64.exp();
        let expect = 12.0 / (e3 + 1.0 / e3).powi(2);
        let v = fiber_derivative(&p, &pt(0.5), 1.0).unwrap();
        assert!((v - expect).abs() < 1e-16);
        assert!((v - 0.0295).abs() < 1e-4);
    }

    #[test]
    fn forcing_in_two_dimensions() {
        let p = SystemParams::standard(3.0, 2).unwrap();
        let theta = TorusPoint::from_f64s(&[0.5, 0.25]).unwrap();
        let g = p.forcing(theta.coords());
        assert!((g - 0.5 * (1.0 + (PI / 4.0).sin())).abs() < 1e-15);
    }

    #[test]
    fn shifted_pinching_point() {
        let star = pt(0.3);
        let p = golden(3.0).with_theta_star(star.clone()).unwrap();
        assert_eq!(fiber_map(&p, &star, 1.0).unwrap(), 0.0);
        let v = fiber_map(&p, &pt(0.8), 1.0).unwrap();
        assert!((v - 3f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn step_examples() {
        let p = golden(3.0);
        let q = step(&p, &PhasePoint::new(pt(0.5), 0.0).unwrap()).unwrap();
        assert_eq!(q.x, 0.0);
        assert!((q.theta.to_f64s()[0] - (0.5 + 0.618_033_988_749_894_9 - 1.0)).abs() < 1e-15);
        let q = step(&p, &PhasePoint::new(pt(0.0), 0.9).unwrap()).unwrap();
        assert_eq!(q.x, 0.0);
        let q = step(&p, &PhasePoint::new(pt(0.5), 1.0).unwrap()).unwrap();
        assert!((q.x - 3f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn zero_line_lyapunov_pinched_start() {
        let p = golden(3.0);
        match zero_line_lyapunov(&p, &pt(0.0), 10) {
            Err(Error::PinchedOrbit { index: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_line_lyapunov_short_run() {
        let p = golden(3.0);
        let v = zero_line_lyapunov(&p, &pt(0.5), 100_000).unwrap();
        assert!((v - 1.5f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::golden(0.0).is_err());
        assert!(SystemParams::new(3.0, pt(0.1), 0.2, 1.0).is_err());
        assert!(SystemParams::new(3.0, pt(0.1), -0.2, 1.1).is_err());
        assert!(golden(3.0).with_theta_star(TorusPoint::zeros(2).unwrap()).is_err());
        assert_ne!(golden(3.0).fingerprint(), golden(4.0).fingerprint());
        assert_eq!(golden(3.0).fingerprint(), golden(3.0).fingerprint());
    }
}
