//! Points and rotations on the torus 𝕋^D = ℝ^D/ℤ^D.
//!
//! Coordinates are stored in 128-bit fixed point: an [`Angle`] holds
//! `θ·2^128` as a `u128`, so addition modulo 1 is a wrapping add and the
//! orbit `θ + kρ` is exact for every `k`.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

const TWO_POW_128: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0;
const TWO_POW_NEG_128: f64 = 1.0 / TWO_POW_128;

/// A single coordinate in [0,1), stored as `θ·2^128`.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Angle(u128);

impl Angle {
    pub const ZERO: Angle = Angle(0);
    pub const HALF: Angle = Angle(1 << 127);

    pub const fn from_bits(bits: u128) -> Angle {
        Angle(bits)
    }

    pub const fn bits(self) -> u128 {
        self.0
    }

    /// Reduces `x` modulo 1. Values below 2^-128 that are not exactly
    /// representable are truncated.
    pub fn from_f64(x: f64) -> Angle {
        let r = x.rem_euclid(1.0);
        if !(0.0..1.0).contains(&r) {
            return Angle::ZERO;
        }
        Angle((r * TWO_POW_128) as u128)
    }

    /// Nearest fixed-point value to `num/den` modulo 1.
    pub fn from_ratio(num: &BigInt, den: &BigUint) -> Result<Angle> {
        if den.bits() == 0 {
            return Err(Error::InvalidParameter("zero denominator".into()));
        }
        let den = BigInt::from_biguint(Sign::Plus, den.clone());
        let scaled: BigInt = (num << 129u32) / &den;
        // scaled = floor(2^129·num/den); round half up to 2^-128 resolution.
        let rounded: BigInt = (scaled + 1) >> 1u32;
        let modulus = BigInt::from(1u8) << 128u32;
        let r = ((rounded % &modulus) + &modulus) % &modulus;
        let (_, digits) = r.to_u64_digits();
        let mut bits = 0u128;
        for (i, d) in digits.iter().enumerate() {
            bits |= (*d as u128) << (64 * i);
        }
        Ok(Angle(bits))
    }

    /// Representative in [0,1). Values within 2^-129 of 1 round to 0.
    pub fn to_f64(self) -> f64 {
        let v = self.0 as f64 * TWO_POW_NEG_128;
        if v >= 1.0 {
            0.0
        } else {
            v
        }
    }

    /// Wrap-around distance `min(|Δ|, 1−|Δ|)` in fixed point.
    pub fn distance_bits(self, other: Angle) -> u128 {
        let diff = self.0.wrapping_sub(other.0);
        diff.min(diff.wrapping_neg())
    }

    /// Wrap-around distance in [0, 1/2].
    pub fn distance(self, other: Angle) -> f64 {
        self.distance_bits(other) as f64 * TWO_POW_NEG_128
    }

    pub fn wrapping_add(self, other: Angle) -> Angle {
        Angle(self.0.wrapping_add(other.0))
    }

    pub fn wrapping_sub(self, other: Angle) -> Angle {
        Angle(self.0.wrapping_sub(other.0))
    }

    /// `k·self` modulo 1, exact.
    pub fn times(self, k: i64) -> Angle {
        let m = Angle(self.0.wrapping_mul(k.unsigned_abs() as u128));
        if k < 0 {
            Angle(m.0.wrapping_neg())
        } else {
            m
        }
    }
}

impl fmt::Debug for Angle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Angle({})", self.to_f64())
    }
}

impl Serialize for Angle {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.to_f64())
    }
}

/// A point of 𝕋^D, D ≥ 1.
#[derive(Clone, PartialEq, Eq, Hash, Debug, Serialize)]
#[serde(transparent)]
pub struct TorusPoint {
    coords: Vec<Angle>,
}

impl TorusPoint {
    pub fn new(coords: Vec<Angle>) -> Result<TorusPoint> {
        if coords.is_empty() {
            return Err(Error::InvalidParameter("torus dimension must be at least 1".into()));
        }
        Ok(TorusPoint { coords })
    }

    pub fn from_f64s(xs: &[f64]) -> Result<TorusPoint> {
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("non-finite torus coordinate".into()));
        }
        TorusPoint::new(xs.iter().map(|&x| Angle::from_f64(x)).collect())
    }

    pub fn zeros(dim: usize) -> Result<TorusPoint> {
        TorusPoint::new(vec![Angle::ZERO; dim])
    }

    pub fn splat(dim: usize, a: Angle) -> Result<TorusPoint> {
        TorusPoint::new(vec![a; dim])
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[Angle] {
        &self.coords
    }

    pub fn to_f64s(&self) -> Vec<f64> {
        self.coords.iter().map(|a| a.to_f64()).collect()
    }
}

fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Max over coordinates of the wrap-around distance, in fixed point.
pub(crate) fn max_distance_bits(p: &[Angle], q: &[Angle]) -> u128 {
    p.iter().zip(q).map(|(a, b)| a.distance_bits(*b)).max().unwrap_or(0)
}

/// Max-metric distance on 𝕋^D.
pub fn torus_distance(p: &TorusPoint, q: &TorusPoint) -> Result<f64> {
    check_dims(p.dim(), q.dim())?;
    Ok(max_distance_bits(&p.coords, &q.coords) as f64 * TWO_POW_NEG_128)
}

pub(crate) fn add_scaled(theta: &[Angle], k: i64, rho: &[Angle], out: &mut [Angle]) {
    for ((o, t), r) in out.iter_mut().zip(theta).zip(rho) {
        *o = t.wrapping_add(r.times(k));
    }
}

/// θ + kρ mod 1, exact in the fixed-point representation.
pub fn rotate(theta: &TorusPoint, k: i64, rho: &TorusPoint) -> Result<TorusPoint> {
    check_dims(theta.dim(), rho.dim())?;
    let mut coords = vec![Angle::ZERO; theta.dim()];
    add_scaled(&theta.coords, k, &rho.coords, &mut coords);
    Ok(TorusPoint { coords })
}

/// floor(√n · 2^129), the integer square root of n·2^258.
fn sqrt_scaled(n: u32) -> BigUint {
    (BigUint::from(n) << 258u32).sqrt()
}

fn angle_from_scaled_129(v: &BigUint) -> Angle {
    let mask = (BigUint::from(1u8) << 129u32) - 1u8;
    let frac: BigUint = ((v & &mask) + 1u8) >> 1u32;
    let frac = frac & ((BigUint::from(1u8) << 128u32) - 1u8);
    let mut bits = 0u128;
    for (i, d) in frac.to_u64_digits().iter().enumerate() {
        bits |= (*d as u128) << (64 * i);
    }
    Angle(bits)
}

/// The golden mean (√5−1)/2, correctly rounded to 2^-128.
pub fn golden_mean() -> Angle {
    // floor((√5 − 1)·2^128) = floor(√5·2^128) − 2^128, a 2^-129-scaled value.
    let v = (BigUint::from(5u8) << 256u32).sqrt() - (BigUint::from(1u8) << 128u32);
    angle_from_scaled_129(&v)
}

/// frac(√n), correctly rounded to 2^-128.
pub fn sqrt_frac(n: u32) -> Angle {
    angle_from_scaled_129(&sqrt_scaled(n))
}

fn first_primes(count: usize) -> Vec<u32> {
    let mut primes = Vec::with_capacity(count);
    let mut n = 2u32;
    while primes.len() < count {
        if primes.iter().take_while(|&&p| p * p <= n).all(|&p| !n.is_multiple_of(p)) {
            primes.push(n);
        }
        n += 1;
    }
    primes
}

/// Golden mean for D = 1; frac(√p) over the first D primes otherwise.
pub fn default_rotation(dim: usize) -> Result<TorusPoint> {
    if dim == 1 {
        return TorusPoint::new(vec![golden_mean()]);
    }
    TorusPoint::new(first_primes(dim).into_iter().map(sqrt_frac).collect())
}

/// Parses a decimal such as `0.6180339887` exactly and rounds it to the
/// fixed-point grid. Scientific notation falls back to f64 parsing.
pub fn parse_angle(text: &str) -> Result<Angle> {
    let t = text.trim();
    let bad = || Error::InvalidParameter(format!("cannot parse angle {text:?}"));
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    if body.contains(['e', 'E']) {
        let x: f64 = t.parse().map_err(|_| bad())?;
        if !x.is_finite() {
            return Err(bad());
        }
        return Ok(Angle::from_f64(x));
    }
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let mut num = BigInt::parse_bytes(digits.as_bytes(), 10).ok_or_else(bad)?;
    if neg {
        num = -num;
    }
    let den = BigUint::from(10u8).pow(frac_part.len() as u32);
    Angle::from_ratio(&num, &den)
}
