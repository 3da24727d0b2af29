//! Peak balls B_{r_j}(τ_j), the threshold v(j), the offset j₀ and the
//! partition of 𝕋^D into Ω₀, Ω_j and Ω_∞ candidates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::constants::DerivedConstants;
use crate::dynamics::SystemParams;
use crate::error::{Error, Result};
use crate::torus::{max_distance_bits, Angle, TorusPoint};

const TWO_POW_128: f64 = 340_282_366_920_938_463_463_374_607_431_768_211_456.0;
/// Beyond this many balls the classifier abstains instead of scanning.
const SCAN_CAP: u64 = 1 << 22;
/// Orbit indices are sought below this bound; the fixed-point orbit is
/// periodic with a period ≥ 2^64 for irrational-looking ρ.
const ORBIT_INDEX_BOUND: u128 = 1 << 63;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PeakBall {
    pub j: u64,
    pub center: TorusPoint,
    pub radius: f64,
}

/// r_j = (b/2)·a^{−(j−1)/m}.
pub fn radius(consts: &DerivedConstants, j: u64) -> f64 {
    0.5 * consts.b * consts.a.powf(-((j - 1) as f64) / consts.m as f64)
}

/// Lebesgue measure of the max-metric ball: (2r)^D.
pub fn ball_volume(r: f64, dim: usize) -> f64 {
    (2.0 * r).powi(dim as i32)
}

/// a^{−D/m}, the ratio of consecutive ball volumes.
fn volume_ratio(consts: &DerivedConstants) -> f64 {
    consts.a.powf(-(consts.dim as f64) / consts.m as f64)
}

/// Σ_{k ≥ from} Leb(B_{r_k}), in closed form.
pub fn volume_tail(consts: &DerivedConstants, from: u64) -> f64 {
    let q = volume_ratio(consts);
    if q >= 1.0 {
        return f64::INFINITY;
    }
    ball_volume(radius(consts, from.max(1)), consts.dim) / (1.0 - q)
}

pub fn peak_ball(params: &SystemParams, consts: &DerivedConstants, j: u64) -> Result<PeakBall> {
    if j < 1 {
        return Err(Error::Precondition("peak index j must be at least 1".into()));
    }
    let center = crate::torus::rotate(params.theta_star(), j as i64, params.rho())?;
    Ok(PeakBall { j, center, radius: radius(consts, j) })
}

/// v(j) = a^{(j−1)/(dm)} + j.
pub fn v_threshold(consts: &DerivedConstants, j: u64) -> f64 {
    consts.a.powf((j - 1) as f64 / (consts.d * consts.m as f64)) + j as f64
}

/// Criterion (ii) at J: Leb(B_{r_J}) > Σ_{j′ ≥ v(J)} Leb(B_{r_{j′}}).
pub fn j0_criterion(consts: &DerivedConstants, big_j: u64) -> bool {
    let v = v_threshold(consts, big_j).ceil();
    let q = volume_ratio(consts);
    if !(q < 1.0) {
        return false;
    }
    // Leb(B_{r_k}) = b^D q^{k−1}; compare exponents to avoid underflow.
    let lhs = (big_j - 1) as f64 * q.ln();
    let rhs = (v - 1.0) * q.ln() - (1.0 - q).ln();
    lhs > rhs
}

/// Smallest j₀ with Σ_{k≥j₀} Leb(B_{r_k}) < 1 and criterion (ii) for every
/// j. The gap ⌈v(J)⌉ − J = ⌈a^{(J−1)/(dm)}⌉ is nondecreasing in J, so (ii)
/// for all j is equivalent to (ii) at J = j₀.
pub fn choose_j0(consts: &DerivedConstants) -> Result<u64> {
    if !(consts.a > 1.0) {
        return Err(Error::NonDecayingRadii { a: consts.a });
    }
    let mut j0 = 1u64;
    loop {
        if volume_tail(consts, j0) < 1.0 && j0_criterion(consts, j0) {
            return Ok(j0);
        }
        j0 += 1;
        if j0 > SCAN_CAP {
            return Err(Error::NonDecayingRadii { a: consts.a });
        }
    }
}

fn radius_bits(r: f64) -> u128 {
    // d < r ⇔ d < ⌈r·2^128⌉ for integer d
    let s = (r * TWO_POW_128).ceil();
    if s >= TWO_POW_128 {
        u128::MAX
    } else {
        s as u128
    }
}

/// Centers and fixed-point radii of B_{r_k}(τ_k) for 1 ≤ k ≤ k_max.
#[derive(Clone, Debug)]
pub struct PeakTable {
    dim: usize,
    centers: Vec<Angle>,
    radii: Vec<u128>,
}

impl PeakTable {
    pub fn new(params: &SystemParams, consts: &DerivedConstants, k_max: u64) -> PeakTable {
        let dim = params.dim();
        let rho = params.rho().coords();
        let mut tau = params.theta_star().coords().to_vec();
        let mut centers = Vec::with_capacity(k_max as usize * dim);
        let mut radii = Vec::with_capacity(k_max as usize);
        for k in 1..=k_max {
            for (t, r) in tau.iter_mut().zip(rho) {
                *t = t.wrapping_add(*r);
            }
            centers.extend_from_slice(&tau);
            radii.push(radius_bits(radius(consts, k)));
        }
        PeakTable { dim, centers, radii }
    }

    pub fn len(&self) -> u64 {
        self.radii.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn contains(&self, k: u64, theta: &[Angle]) -> bool {
        let i = (k - 1) as usize;
        let c = &self.centers[i * self.dim..(i + 1) * self.dim];
        max_distance_bits(theta, c) < self.radii[i]
    }

    /// Smallest k in `from..=to` whose ball contains θ.
    pub fn first_containing(&self, theta: &[Angle], from: u64, to: u64) -> Option<u64> {
        (from.max(1)..=to.min(self.len())).find(|&k| self.contains(k, theta))
    }

    /// Largest k in `from..=to` whose ball contains θ.
    pub fn deepest_containing(&self, theta: &[Angle], from: u64, to: u64) -> Option<u64> {
        (from.max(1)..=to.min(self.len())).rev().find(|&k| self.contains(k, theta))
    }
}

/// First index k with r_k < 2^-128; from there on, membership means θ = τ_k.
pub fn quantum_index(consts: &DerivedConstants) -> u64 {
    let m = consts.m as f64;
    let need = (0.5 * consts.b).log2() + 128.0;
    let steps = need * m / consts.a.log2();
    let mut k = steps.max(0.0).floor() as u64 + 1;
    while radius_bits(radius(consts, k)) > 1 {
        k += 1;
    }
    while k > 1 && radius_bits(radius(consts, k - 1)) <= 1 {
        k -= 1;
    }
    k
}

/// The k in [1, 2^63) with θ = θ* + kρ exactly, if one exists.
pub fn orbit_index(params: &SystemParams, theta: &[Angle]) -> Option<u64> {
    let rho = params.rho().coords();
    let star = params.theta_star().coords();
    let (pivot, r) = rho.iter().enumerate().find(|(_, r)| r.bits() != 0)?;
    let delta = theta[pivot].wrapping_sub(star[pivot]).bits();
    let s = r.bits().trailing_zeros();
    if delta & ((1u128 << s) - 1) != 0 {
        return None;
    }
    let odd = r.bits() >> s;
    let inv = inverse_mod_pow2(odd);
    let modulus_mask = if s == 0 { u128::MAX } else { (1u128 << (128 - s)) - 1 };
    let k = (delta >> s).wrapping_mul(inv) & modulus_mask;
    if k == 0 || k >= ORBIT_INDEX_BOUND {
        return None;
    }
    let k = k as u64;
    let hits = theta
        .iter()
        .zip(star)
        .zip(rho)
        .all(|((t, s), r)| *t == s.wrapping_add(r.times(k as i64)));
    hits.then_some(k)
}

/// Multiplicative inverse of an odd number modulo 2^128 (Newton iteration).
fn inverse_mod_pow2(odd: u128) -> u128 {
    let mut x = odd; // correct to 3 bits
    for _ in 0..7 {
        x = x.wrapping_mul(2u128.wrapping_sub(odd.wrapping_mul(x)));
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionIndex {
    Omega0,
    OmegaJ { j: u64 },
    OmegaInfinityCandidate { horizon: u64 },
}

/// Classifies θ against the balls k ≥ j₀ with the table-backed scan.
pub struct Classifier<'a> {
    params: &'a SystemParams,
    j0: u64,
    table: PeakTable,
    quantum: u64,
}

impl<'a> Classifier<'a> {
    pub fn new(params: &'a SystemParams, consts: &DerivedConstants) -> Result<Classifier<'a>> {
        let j0 = consts.j0.map_or_else(|| choose_j0(consts), Ok)?;
        let quantum = quantum_index(consts);
        let table_len = quantum.saturating_sub(1).min(SCAN_CAP).max(j0);
        Ok(Classifier { params, j0, table: PeakTable::new(params, consts, table_len), quantum })
    }

    pub fn j0(&self) -> u64 {
        self.j0
    }

    /// Deepest k ≥ j₀ with θ ∈ B_{r_k}(τ_k); `Err(())` if not decidable.
    fn deepest(&self, theta: &[Angle]) -> std::result::Result<Option<u64>, ()> {
        let scanned = self.table.deepest_containing(theta, self.j0, self.table.len());
        if self.quantum - 1 > self.table.len() {
            // balls between the table end and the quantum index are not scanned
            return Err(());
        }
        let exact = orbit_index(self.params, theta).filter(|&k| k >= self.quantum.max(self.j0));
        Ok(match (scanned, exact) {
            (_, Some(k)) => Some(k),
            (s, None) => s,
        })
    }

    pub fn classify(&self, theta: &[Angle], horizon: u64) -> Result<PartitionIndex> {
        if horizon < self.j0 {
            return Err(Error::Precondition(format!("horizon {horizon} < j0 = {}", self.j0)));
        }
        Ok(match self.deepest(theta) {
            Err(()) => PartitionIndex::OmegaInfinityCandidate { horizon },
            Ok(None) => PartitionIndex::Omega0,
            Ok(Some(k)) if k <= horizon => PartitionIndex::OmegaJ { j: k - self.j0 + 1 },
            Ok(Some(_)) => PartitionIndex::OmegaInfinityCandidate { horizon },
        })
    }
}

pub fn classify(
    params: &SystemParams,
    consts: &DerivedConstants,
    theta: &TorusPoint,
    horizon: u64,
) -> Result<PartitionIndex> {
    params.check_theta(theta)?;
    Classifier::new(params, consts)?.classify(theta.coords(), horizon)
}

/// min over i ≤ horizon of Σ_{k>i} Leb(B_{r_k}); the minimum is at i = horizon.
pub fn omega_infinity_mass(consts: &DerivedConstants, horizon: u64) -> f64 {
    volume_tail(consts, horizon + 1)
}

pub(crate) fn uniform_angle<R: Rng>(rng: &mut R) -> Angle {
    Angle::from_bits(rng.random::<u128>())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CensusRow {
    pub j: u64,
    pub tau: Vec<f64>,
    pub radius: f64,
    pub leb_estimate: f64,
    pub count: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Census {
    pub j0: u64,
    pub horizon: u64,
    pub samples: u64,
    pub seed: u64,
    pub omega0: u64,
    pub candidates: u64,
    /// One row per j = 1..=horizon−j₀+1.
    pub rows: Vec<CensusRow>,
}

/// Monte-Carlo Lebesgue masses of the partition pieces.
pub fn census(
    params: &SystemParams,
    consts: &DerivedConstants,
    samples: u64,
    horizon: u64,
    seed: u64,
) -> Result<Census> {
    let classifier = Classifier::new(params, consts)?;
    let j0 = classifier.j0();
    if horizon < j0 {
        return Err(Error::Precondition(format!("horizon {horizon} < j0 = {j0}")));
    }
    let dim = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let thetas: Vec<Angle> = (0..samples as usize * dim).map(|_| uniform_angle(&mut rng)).collect();
    let kinds: Vec<PartitionIndex> = thetas
        .par_chunks(dim)
        .map(|t| classifier.classify(t, horizon))
        .collect::<Result<_>>()?;
    let rows_len = (horizon - j0 + 1) as usize;
    let mut counts = vec![0u64; rows_len];
    let (mut omega0, mut candidates) = (0u64, 0u64);
    for k in kinds {
        match k {
            PartitionIndex::Omega0 => omega0 += 1,
            PartitionIndex::OmegaJ { j } => counts[(j - 1) as usize] += 1,
            PartitionIndex::OmegaInfinityCandidate { .. } => candidates += 1,
        }
    }
    let rows = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| {
            let j = i as u64 + 1;
            let k = j + j0 - 1;
            let ball = peak_ball(params, consts, k)?;
            Ok(CensusRow {
                j,
                tau: ball.center.to_f64s(),
                radius: ball.radius,
                leb_estimate: count as f64 / samples as f64,
                count,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Census { j0, horizon, samples, seed, omega0, candidates, rows })
}

/// Monte-Carlo estimate of Leb(Ω_j) with its standard error, sampling
/// uniformly inside B_{r_{j+j₀−1}}(τ_{j+j₀−1}).
pub fn omega_j_mass(
    params: &SystemParams,
    consts: &DerivedConstants,
    j: u64,
    samples: u64,
    seed: u64,
) -> Result<(f64, f64)> {
    let classifier = Classifier::new(params, consts)?;
    let k = j + classifier.j0() - 1;
    let ball = peak_ball(params, consts, k)?;
    let r = radius_bits(ball.radius).saturating_sub(1).max(1);
    let dim = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut theta = vec![Angle::ZERO; dim];
    let mut hits = 0u64;
    for _ in 0..samples {
        for (t, c) in theta.iter_mut().zip(ball.center.coords()) {
            let off = rng.random_range(0..2 * r) as i128 - r as i128;
            *t = c.wrapping_add(Angle::from_bits(off as u128));
        }
        if classifier.classify(&theta, u64::MAX)? == (PartitionIndex::OmegaJ { j }) {
            hits += 1;
        }
    }
    let p = hits as f64 / samples as f64;
    let vol = ball_volume(ball.radius, dim);
    Ok((p * vol, vol * (p * (1.0 - p) / samples as f64).sqrt()))
}
