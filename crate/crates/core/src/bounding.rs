//! Iterated upper bounding lines φ_n(θ) = T^n_{θ−nρ}(1), their decrements,
//! backward-orbit statistics and the empirical verifiers built on them.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::constants::DerivedConstants;
use crate::dynamics::SystemParams;
use crate::error::{Error, Result};
use crate::numerics::{ln_cosh, ln_sinh_from_ln, log_add_exp};
use crate::partition::{quantum_index, uniform_angle, PeakTable};
use crate::report::{ConditionEntry, ConditionReport};
use crate::torus::{add_scaled, max_distance_bits, Angle, TorusPoint};

const TWO_POW_NEG_128: f64 = 1.0 / 340_282_366_920_938_463_463_374_607_431_768_211_456.0;

fn advance(theta: &mut [Angle], rho: &[Angle]) {
    for (t, r) in theta.iter_mut().zip(rho) {
        *t = t.wrapping_add(*r);
    }
}

/// φ_n at a raw coordinate slice (dimension already checked).
pub(crate) fn phi_at(params: &SystemParams, theta: &[Angle], n: u64) -> f64 {
    let rho = params.rho().coords();
    if theta.len() == 1 {
        let mut t = theta[0].wrapping_sub(rho[0].times(n as i64));
        let mut x = 1.0;
        for _ in 0..n {
            x = params.apply(params.forcing(std::slice::from_ref(&t)), x);
            if x == 0.0 {
                return 0.0;
            }
            t = t.wrapping_add(rho[0]);
        }
        return x;
    }
    let mut t = theta.to_vec();
    add_scaled(theta, -(n as i64), rho, &mut t);
    let mut x = 1.0;
    for _ in 0..n {
        x = params.apply(params.forcing(&t), x);
        if x == 0.0 {
            return 0.0;
        }
        advance(&mut t, rho);
    }
    x
}

const LANES: usize = 4;

/// φ_n at up to four points, stepping the independent orbits together.
/// Bitwise equal to [`phi_at`] per point.
fn phi_lanes(params: &SystemParams, thetas: &[Angle], n: u64, out: &mut [f64]) {
    let dim = params.dim();
    let rho = params.rho().coords();
    let lanes = out.len();
    let mut pos: Vec<Angle> = vec![Angle::ZERO; lanes * dim];
    for l in 0..lanes {
        add_scaled(&thetas[l * dim..(l + 1) * dim], -(n as i64), rho, &mut pos[l * dim..(l + 1) * dim]);
    }
    let mut x = [1.0f64; LANES];
    for _ in 0..n {
        for l in 0..lanes {
            let p = &mut pos[l * dim..(l + 1) * dim];
            x[l] = params.apply(params.forcing(p), x[l]);
            advance(p, rho);
        }
    }
    out.copy_from_slice(&x[..lanes]);
}

/// φ_n at every point of a flat coordinate list, in parallel.
pub(crate) fn phi_batch(params: &SystemParams, thetas: &[Angle], n: u64) -> Vec<f64> {
    let dim = params.dim();
    let mut out = vec![0.0; thetas.len() / dim];
    out.par_chunks_mut(LANES)
        .zip(thetas.par_chunks(LANES * dim))
        .for_each(|(o, t)| phi_lanes(params, t, n, o));
    out
}

pub fn phi_n(params: &SystemParams, theta: &TorusPoint, n: u64) -> Result<f64> {
    params.check_theta(theta)?;
    Ok(phi_at(params, theta.coords(), n))
}

/// Forcing values g_j = g(θ − jρ) for j = 1..=n.
fn backward_forcings(params: &SystemParams, theta: &[Angle], n: u64) -> Vec<f64> {
    let rho = params.rho().coords();
    let mut t = theta.to_vec();
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        for (c, r) in t.iter_mut().zip(rho) {
            *c = c.wrapping_sub(*r);
        }
        out.push(params.forcing(&t));
    }
    out
}

/// 1 − g(θ), accurate when g is close to 1.
fn one_minus_forcing(params: &SystemParams, theta: &[Angle]) -> f64 {
    let star = params.theta_star().coords();
    let s: f64 = theta
        .iter()
        .zip(star)
        .map(|(t, s)| {
            let gap = (Angle::HALF.bits() - t.distance_bits(*s)) as f64 * TWO_POW_NEG_128;
            let h = (std::f64::consts::PI * gap / 2.0).sin();
            2.0 * h * h
        })
        .sum();
    s / theta.len() as f64
}

/// (φ_n(θ), ln(φ_{n−1}(θ) − φ_n(θ))) for n ≥ 1.
///
/// The decrement is propagated in log space along the orbit using
/// tanh(u) − tanh(v) = sinh(u−v)/(cosh u·cosh v), so it stays accurate long
/// after it drops below the resolution of φ itself.
pub(crate) fn phi_and_log_decrement(params: &SystemParams, theta: &[Angle], n: u64) -> (f64, f64) {
    debug_assert!(n >= 1);
    let kappa = params.kappa();
    let rho = params.rho().coords();
    let mut t = theta.to_vec();
    add_scaled(theta, -(n as i64), rho, &mut t);
    let g = params.forcing(&t);
    let mut y = params.apply(g, 1.0);
    // 1 − tanh(κ)·g = (1 − g) + g·(1 − tanh κ), with 1 − tanh κ = 2/(e^{2κ}+1)
    let ln_tail = std::f64::consts::LN_2 - log_add_exp(2.0 * kappa, 0.0);
    let mut ln_delta = log_add_exp(one_minus_forcing(params, &t).ln(), g.ln() + ln_tail);
    advance(&mut t, rho);
    let ln_kappa = kappa.ln();
    for _ in 1..n {
        let g = params.forcing(&t);
        let z = y + ln_delta.exp();
        ln_delta = g.ln() + ln_sinh_from_ln(ln_kappa + ln_delta) - ln_cosh(kappa * z) - ln_cosh(kappa * y);
        y = params.apply(g, y);
        advance(&mut t, rho);
    }
    (y, ln_delta)
}

/// ln(φ_{n−1}(θ) − φ_n(θ)); −∞ when the decrement is exactly zero.
pub fn log_decrement(params: &SystemParams, theta: &TorusPoint, n: u64) -> Result<f64> {
    params.check_theta(theta)?;
    if n == 0 {
        return Err(Error::Precondition("decrement needs depth n ≥ 1".into()));
    }
    Ok(phi_and_log_decrement(params, theta.coords(), n).1)
}

/// floor(i·2^128/M) as an angle.
pub(crate) fn grid_angle(i: u64, m: u64) -> Angle {
    let m128 = m as u128;
    let (mut q, mut r) = (u128::MAX / m128, u128::MAX % m128 + 1);
    if r == m128 {
        q += 1;
        r = 0;
    }
    let i = i as u128;
    Angle::from_bits(i.wrapping_mul(q).wrapping_add(i * r / m128))
}

/// Uniform lattice with `per_axis` points per coordinate, first axis fastest.
pub(crate) fn lattice(dim: usize, per_axis: u64) -> Vec<Angle> {
    let total = per_axis.pow(dim as u32);
    let mut out = Vec::with_capacity((total as usize) * dim);
    for idx in 0..total {
        let mut rem = idx;
        for _ in 0..dim {
            out.push(grid_angle(rem % per_axis, per_axis));
            rem /= per_axis;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphSample {
    pub dim: usize,
    /// Flattened grid coordinates, `dim` angles per point.
    pub grid: Vec<Angle>,
    pub values: Vec<f64>,
    pub n: u64,
    pub params_hash: String,
    /// Set when some values were carried over by [`incremental_update`].
    pub approximate: bool,
    /// Accumulated carried-over error bound.
    pub error_budget: f64,
}

impl GraphSample {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn point(&self, i: usize) -> &[Angle] {
        &self.grid[i * self.dim..(i + 1) * self.dim]
    }

    pub fn csv_header(dim: usize) -> String {
        let mut cols: Vec<String> = (1..=dim).map(|i| format!("theta_{i}")).collect();
        cols.push("phi".into());
        cols.push("n".into());
        cols.join(",")
    }

    /// Rows `theta_1,...,theta_D,phi,n` with shortest round-trip floats.
    pub fn write_csv_rows<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (i, v) in self.values.iter().enumerate() {
            for a in self.point(i) {
                write!(w, "{},", a.to_f64())?;
            }
            writeln!(w, "{v},{}", self.n)?;
        }
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "{}", Self::csv_header(self.dim))?;
        self.write_csv_rows(w)
    }
}

fn eval_grid(params: &SystemParams, grid: &[Angle], n: u64) -> Vec<f64> {
    phi_batch(params, grid, n)
}

/// φ_n on the uniform grid {i/M} (a lattice of M points per axis for D > 1).
pub fn phi_grid(params: &SystemParams, m: u64, n: u64) -> Result<GraphSample> {
    if m < 2 {
        return Err(Error::Precondition("grid size M must be at least 2".into()));
    }
    let grid = lattice(params.dim(), m);
    let values = eval_grid(params, &grid, n);
    Ok(GraphSample {
        dim: params.dim(),
        grid,
        values,
        n,
        params_hash: params.fingerprint(),
        approximate: false,
        error_budget: 0.0,
    })
}

/// φ_k on the grid for every k in `depths` (ascending or not), sharing the
/// backward forcing sequence per point.
pub fn phi_grid_depths(params: &SystemParams, m: u64, depths: &[u64]) -> Result<Vec<GraphSample>> {
    if m < 2 {
        return Err(Error::Precondition("grid size M must be at least 2".into()));
    }
    let dim = params.dim();
    let grid = lattice(dim, m);
    let n_max = depths.iter().copied().max().unwrap_or(0);
    let per_point: Vec<Vec<f64>> = grid
        .par_chunks(dim)
        .map(|t| {
            let g = backward_forcings(params, t, n_max);
            let mut out = Vec::with_capacity(depths.len());
            // four independent chains at a time keep the pipeline busy
            for chunk in depths.chunks(4) {
                let mut x = [1.0f64; 4];
                let k_max = chunk.iter().copied().max().unwrap_or(0) as usize;
                for j in (0..k_max).rev() {
                    for (lane, &k) in chunk.iter().enumerate() {
                        if j < k as usize {
                            x[lane] = params.apply(g[j], x[lane]);
                        }
                    }
                }
                out.extend_from_slice(&x[..chunk.len()]);
            }
            out
        })
        .collect();
    Ok(depths
        .iter()
        .enumerate()
        .map(|(di, &n)| GraphSample {
            dim,
            grid: grid.clone(),
            values: per_point.iter().map(|v| v[di]).collect(),
            n,
            params_hash: params.fingerprint(),
            approximate: false,
            error_budget: 0.0,
        })
        .collect())
}

/// Depth n → n+1, recomputing only grid points inside ⋃_{j=q}^{n+1}
/// B_{r_j}(τ_j). Returns the new sample and the step budget α^{−λ·n}.
pub fn incremental_update(
    params: &SystemParams,
    consts: &DerivedConstants,
    prev: &GraphSample,
    q: u64,
) -> Result<(GraphSample, f64)> {
    let need = consts.m as u64 * q + 1;
    if prev.n < need {
        return Err(Error::Precondition(format!("depth {} < m·q + 1 = {need}", prev.n)));
    }
    if prev.params_hash != params.fingerprint() {
        return Err(Error::Precondition("sample was generated with different parameters".into()));
    }
    let n1 = prev.n + 1;
    let table = PeakTable::new(params, consts, n1);
    let values: Vec<f64> = prev
        .grid
        .par_chunks(prev.dim)
        .zip(prev.values.par_iter())
        .map(|(t, &v)| match table.first_containing(t, q, n1) {
            Some(_) => phi_at(params, t, n1),
            None => v,
        })
        .collect();
    let budget = consts.alpha.powf(-consts.lambda_rate * prev.n as f64);
    Ok((
        GraphSample {
            dim: prev.dim,
            grid: prev.grid.clone(),
            values,
            n: n1,
            params_hash: prev.params_hash.clone(),
            approximate: true,
            error_budget: prev.error_budget + budget,
        },
        budget,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrbitStats {
    pub theta: TorusPoint,
    pub n: u64,
    pub q: u64,
    /// x_k = φ_k(θ − (n−k)ρ) for k = 0..=n.
    pub orbit: Vec<f64>,
    /// s^n_k for k = 0..=n.
    pub s_counts: Vec<u64>,
    /// Maximal blocks (l, p) of {1 ≤ k < n−q : x_k < L₀}.
    pub blocks: Vec<(u64, u64)>,
}

impl OrbitStats {
    pub fn s(&self, k: u64) -> u64 {
        self.s_counts[k as usize]
    }
}

pub fn orbit_stats(
    params: &SystemParams,
    consts: &DerivedConstants,
    theta: &TorusPoint,
    n: u64,
    q: u64,
) -> Result<OrbitStats> {
    params.check_theta(theta)?;
    if n < 1 {
        return Err(Error::Precondition("orbit_stats needs n ≥ 1".into()));
    }
    let rho = params.rho().coords();
    let mut t = theta.coords().to_vec();
    add_scaled(theta.coords(), -(n as i64), rho, &mut t);
    let mut orbit = Vec::with_capacity(n as usize + 1);
    let mut x = 1.0;
    orbit.push(x);
    for _ in 0..n {
        x = params.apply(params.forcing(&t), x);
        orbit.push(x);
        advance(&mut t, rho);
    }
    let l0 = consts.l0;
    let mut s_counts = vec![0u64; n as usize + 1];
    for k in (0..n as usize).rev() {
        s_counts[k] = s_counts[k + 1] + u64::from(orbit[k] < l0);
    }
    let blocks = block_decomposition(&orbit, l0, consts.a, n.saturating_sub(q));
    Ok(OrbitStats { theta: theta.clone(), n, q, orbit, s_counts, blocks })
}

/// Blocks {l+1..p} with x_l ≥ L₀/a, x_k < L₀/a on (l,p), x_p < L₀, ending
/// where x_p ≥ L₀/a, x_{p+1} ≥ L₀ or p+1 = end.
fn block_decomposition(x: &[f64], l0: f64, a: f64, end: u64) -> Vec<(u64, u64)> {
    let deep = l0 / a;
    let end = end as usize;
    let mut blocks = Vec::new();
    let mut k = 1usize;
    while k < end {
        if x[k] >= l0 {
            k += 1;
            continue;
        }
        let l = k - 1;
        let mut p = k;
        while x[p] < deep && p + 1 < end && x[p + 1] < l0 {
            p += 1;
        }
        blocks.push((l as u64, p as u64));
        k = p + 1;
    }
    blocks
}

/// ε = min_{k=1..t} T^k_{θ−kρ}(L₀), a lower bound for φ⁺(θ) when θ avoids
/// the peak balls from q on.
pub fn pinched_lower_bound(
    params: &SystemParams,
    consts: &DerivedConstants,
    theta: &TorusPoint,
    q: u64,
    t: u64,
) -> Result<f64> {
    params.check_theta(theta)?;
    let mq = consts.m as u64 * q;
    if t < mq {
        return Err(Error::Precondition(format!("t = {t} < m·q = {mq}")));
    }
    let th = theta.coords();
    if let Some(k) = crate::partition::orbit_index(params, th).filter(|&k| k <= t) {
        return Err(Error::PinchedOrbit { index: k });
    }
    let horizon = quantum_index(consts).max(t).min(1 << 20);
    let table = PeakTable::new(params, consts, horizon);
    if let Some(j) = table.first_containing(th, q, horizon) {
        return Err(Error::Precondition(format!("θ lies in the peak ball B_(r_{j})(τ_{j})")));
    }
    let rho = params.rho().coords();
    let mut eps = f64::INFINITY;
    for k in 1..=t {
        let mut s = th.to_vec();
        add_scaled(th, -(k as i64), rho, &mut s);
        let mut x = consts.l0;
        for _ in 0..k {
            x = params.apply(params.forcing(&s), x);
            advance(&mut s, rho);
        }
        eps = eps.min(x);
    }
    if eps <= 0.0 {
        return Err(Error::PinchedOrbit { index: 0 });
    }
    Ok(eps)
}

/// Probe points for sup-norm decrement estimates: a lattice of about
/// `count` points.
pub fn probe_lattice(dim: usize, count: u64) -> Vec<Angle> {
    let per_axis = ((count as f64).powf(1.0 / dim as f64).round() as u64).max(2);
    lattice(dim, per_axis)
}

/// ln sup of φ_{n−1} − φ_n over probe points outside ⋃_{j=q}^{n} B_{r_j}(τ_j),
/// with the number of probes that qualified.
pub fn sup_offpeak_log_decrement(
    params: &SystemParams,
    consts: &DerivedConstants,
    probes: &[Angle],
    n: u64,
    q: u64,
) -> (f64, usize) {
    let table = PeakTable::new(params, consts, n);
    let vals: Vec<Option<f64>> = probes
        .par_chunks(params.dim())
        .map(|t| match table.first_containing(t, q, n) {
            Some(_) => None,
            None => Some(phi_and_log_decrement(params, t, n).1),
        })
        .collect();
    let used = vals.iter().flatten().count();
    let sup = vals.into_iter().flatten().fold(f64::NEG_INFINITY, f64::max);
    (sup, used)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AutoDepth {
    pub n: u64,
    /// Achieved sup off-peak decrement at depth n.
    pub sup_decrement: f64,
    pub tolerance: f64,
    pub converged: bool,
}

pub const DEFAULT_N_MAX: u64 = 5000;
pub const DEFAULT_PROBES: u64 = 4096;

/// Smallest depth found (doubling, then bisection) whose sup off-peak
/// decrement (q = 1) is below `tol`, capped at `n_max`.
pub fn auto_depth(
    params: &SystemParams,
    consts: &DerivedConstants,
    tol: f64,
    n_max: u64,
) -> Result<AutoDepth> {
    if !(tol > 0.0) || n_max < 1 {
        return Err(Error::Precondition("auto depth needs tol > 0 and n_max ≥ 1".into()));
    }
    let probes = probe_lattice(params.dim(), DEFAULT_PROBES);
    let ln_tol = tol.ln();
    let sup = |n: u64| sup_offpeak_log_decrement(params, consts, &probes, n, 1).0;
    let mut lo = 0u64;
    let mut hi = 8u64.min(n_max);
    let mut hi_val = sup(hi);
    while hi_val >= ln_tol {
        if hi == n_max {
            return Ok(AutoDepth { n: hi, sup_decrement: hi_val.exp(), tolerance: tol, converged: false });
        }
        lo = hi;
        hi = (2 * hi).min(n_max);
        hi_val = sup(hi);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let v = sup(mid);
        if v < ln_tol {
            hi = mid;
            hi_val = v;
        } else {
            lo = mid;
        }
    }
    Ok(AutoDepth { n: hi, sup_decrement: hi_val.exp(), tolerance: tol, converged: true })
}

/// (n, ln sup off-peak decrement) for each requested depth.
pub fn offpeak_decrement_profile(
    params: &SystemParams,
    consts: &DerivedConstants,
    depths: &[u64],
    q: u64,
    probes: u64,
) -> Vec<(u64, f64)> {
    let pts = probe_lattice(params.dim(), probes);
    depths
        .iter()
        .map(|&n| (n, sup_offpeak_log_decrement(params, consts, &pts, n, q).0))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Prop41Part {
    #[serde(rename = "41i")]
    Lipschitz,
    #[serde(rename = "41ii")]
    Decrement,
    #[serde(rename = "41iii")]
    OffPeakLipschitz,
}

impl Prop41Part {
    pub const ALL: [Prop41Part; 3] =
        [Prop41Part::Lipschitz, Prop41Part::Decrement, Prop41Part::OffPeakLipschitz];

    pub fn id(self) -> &'static str {
        match self {
            Prop41Part::Lipschitz => "41i",
            Prop41Part::Decrement => "41ii",
            Prop41Part::OffPeakLipschitz => "41iii",
        }
    }
}

fn desk_note(consts: &DerivedConstants, notes: &mut Vec<String>) {
    if consts.kappa < consts.kappa0 {
        notes.push(format!(
            "desk mode: κ = {} < κ0 = {}; failing entries are findings, not contradictions",
            consts.kappa, consts.kappa0
        ));
    }
    if consts.desk {
        notes.push(format!("a floored to (m+1)^d = {}", consts.a));
    }
}

fn max_entry(id: &str, what: &str, ln_ratios: &[f64], total: usize) -> ConditionEntry {
    if ln_ratios.is_empty() {
        return ConditionEntry::at_most(
            id,
            format!("{what}: vacuous, no sample satisfies the hypothesis (count 0 of {total})"),
            0.0,
            1.0,
        )
        .sampled();
    }
    let max = ln_ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let violations = ln_ratios.iter().filter(|&&r| r > 0.0).count();
    ConditionEntry::at_most(
        id,
        format!(
            "{what}: max observed ratio to the bound over {} of {total} samples; {violations} violations",
            ln_ratios.len()
        ),
        max.exp(),
        1.0,
    )
    .sampled()
}

/// Empirical check of Prop. 4.1 (i)–(iii) on seeded random pairs.
pub fn verify_prop41(
    params: &SystemParams,
    consts: &DerivedConstants,
    n: u64,
    q: u64,
    pairs: u64,
    seed: u64,
    parts: &[Prop41Part],
) -> Result<ConditionReport> {
    let need = consts.m as u64 * q + 1;
    if n < need && parts.iter().any(|p| *p != Prop41Part::Lipschitz) {
        return Err(Error::Precondition(format!("parts (ii)/(iii) need n ≥ m·q + 1 = {need}")));
    }
    let dim = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut thetas = Vec::with_capacity(pairs as usize * dim);
    let mut primes = Vec::with_capacity(pairs as usize * dim);
    for _ in 0..pairs {
        let delta = 10f64.powf(rng.random_range(-12.0..0.5f64.log10()));
        for _ in 0..dim {
            let t = uniform_angle(&mut rng);
            let off = rng.random_range(-delta..=delta);
            thetas.push(t);
            primes.push(t.wrapping_add(Angle::from_f64(off)));
        }
    }
    let table = PeakTable::new(params, consts, n);
    let ln_alpha = consts.alpha.ln();
    let kq = consts.k_for(q as u32);
    struct PairResult {
        lip: Option<f64>,
        dec: Option<f64>,
        off: Option<f64>,
    }
    let results: Vec<PairResult> = thetas
        .par_chunks(dim)
        .zip(primes.par_chunks(dim))
        .map(|(t, s)| {
            let dist = max_distance_bits(t, s) as f64 * TWO_POW_NEG_128;
            let off_t = table.first_containing(t, q, n).is_none();
            let off_s = table.first_containing(s, q, n).is_none();
            let (phi_t, ln_dec) = phi_and_log_decrement(params, t, n);
            let phi_s = phi_at(params, s, n);
            let ln_diff = (phi_t - phi_s).abs().ln();
            let lip = (dist > 0.0).then_some(ln_diff - consts.beta.ln() - n as f64 * ln_alpha - dist.ln());
            let dec = off_t.then_some(ln_dec + consts.lambda_rate * (n as f64 - 1.0) * ln_alpha);
            let off = (dist > 0.0 && off_t && off_s)
                .then(|| ln_diff - kq.ln() - (consts.m as u64 * q) as f64 * ln_alpha - dist.ln());
            PairResult { lip, dec, off }
        })
        .collect();
    let total = results.len();
    let mut entries = Vec::new();
    for part in parts {
        let (ratios, what): (Vec<f64>, &str) = match part {
            Prop41Part::Lipschitz => (
                results.iter().filter_map(|r| r.lip).collect(),
                "(i) |φ_n(θ)−φ_n(θ′)| ≤ β·α^n·d(θ,θ′)",
            ),
            Prop41Part::Decrement => (
                results.iter().filter_map(|r| r.dec).collect(),
                "(ii) θ off-peak: φ_(n−1)(θ) − φ_n(θ) ≤ α^(−λ(n−1))",
            ),
            Prop41Part::OffPeakLipschitz => (
                results.iter().filter_map(|r| r.off).collect(),
                "(iii) θ,θ′ off-peak: |φ_n(θ)−φ_n(θ′)| ≤ K(q)·α^(mq)·d(θ,θ′)",
            ),
        };
        entries.push(max_entry(part.id(), what, &ratios, total));
    }
    let mut notes = vec![
        format!("seed = {seed}, pairs = {pairs}, n = {n}, q = {q}"),
        format!(
            "off-peak means outside the union of B_(r_j)(τ_j) for q ≤ j ≤ n, with the same n as the bound"
        ),
    ];
    desk_note(consts, &mut notes);
    Ok(ConditionReport::new(entries, notes, consts.clone()))
}

/// Draws `count` points uniformly among those outside ⋃_{j=q}^{n} B_{r_j}(τ_j).
pub fn sample_offpeak(
    params: &SystemParams,
    consts: &DerivedConstants,
    n: u64,
    q: u64,
    count: u64,
    seed: u64,
) -> Result<Vec<TorusPoint>> {
    let table = PeakTable::new(params, consts, n);
    let dim = params.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count as usize);
    let mut attempts = 0u64;
    while (out.len() as u64) < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::Precondition("peak balls cover almost the whole torus".into()));
        }
        let t: Vec<Angle> = (0..dim).map(|_| uniform_angle(&mut rng)).collect();
        if table.first_containing(&t, q, n).is_none() {
            out.push(TorusPoint::new(t)?);
        }
    }
    Ok(out)
}

/// Checks s^n_{n−t}(θ) ≤ 11t/m for all mq ≤ t ≤ n on sampled off-peak θ.
pub fn verify_s_bound(
    params: &SystemParams,
    consts: &DerivedConstants,
    n: u64,
    q: u64,
    samples: u64,
    seed: u64,
) -> Result<ConditionReport> {
    let mq = consts.m as u64 * q;
    if n < mq {
        return Err(Error::Precondition(format!("n = {n} < m·q = {mq}")));
    }
    let thetas = sample_offpeak(params, consts, n, q, samples, seed)?;
    let m = consts.m as f64;
    let per: Vec<(f64, u64)> = thetas
        .par_iter()
        .map(|t| {
            let st = orbit_stats(params, consts, t, n, q).expect("dimension checked");
            let mut worst = 0.0f64;
            let mut bad = 0u64;
            for tt in mq.max(1)..=n {
                let ratio = st.s(n - tt) as f64 / (11.0 * tt as f64 / m);
                worst = worst.max(ratio);
                bad += u64::from(ratio > 1.0);
            }
            (worst, bad)
        })
        .collect();
    let worst = per.iter().map(|p| p.0).fold(0.0, f64::max);
    let bad_points = per.iter().filter(|p| p.1 > 0).count();
    let bad_pairs: u64 = per.iter().map(|p| p.1).sum();
    let entry = ConditionEntry::at_most(
        "sbound",
        format!(
            "s^n_(n−t)(θ) ≤ 11t/m for mq ≤ t ≤ n: max ratio over {samples} off-peak θ; {bad_points} points with violations ({bad_pairs} (θ,t) pairs)"
        ),
        worst,
        1.0,
    )
    .sampled();
    let mut notes = vec![format!("seed = {seed}, n = {n}, q = {q}")];
    desk_note(consts, &mut notes);
    Ok(ConditionReport::new(vec![entry], notes, consts.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::desk_constants;
    use crate::torus::rotate;

    fn golden() -> SystemParams {
        SystemParams::golden(3.0).unwrap()
    }

    fn pt(x: f64) -> TorusPoint {
        TorusPoint::from_f64s(&[x]).unwrap()
    }

    #[test]
    fn depth_zero_is_one() {
        let p = golden();
        assert_eq!(phi_n(&p, &pt(0.3), 0).unwrap(), 1.0);
        let g = phi_grid(&p, 16, 0).unwrap();
        assert!(g.values.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn batch_matches_pointwise_bitwise() {
        for p in [golden(), SystemParams::standard(3.0, 2).unwrap()] {
            let pts = lattice(p.dim(), 7);
            let batch = phi_batch(&p, &pts, 40);
            for (i, v) in batch.iter().enumerate() {
                let t = &pts[i * p.dim()..(i + 1) * p.dim()];
                assert_eq!(v.to_bits(), phi_at(&p, t, 40).to_bits());
            }
        }
    }

    #[test]
    fn first_line_closed_form() {
        let p = golden();
        let rho = p.rho().to_f64s()[0];
        let theta = rotate(&pt(0.5), 1, p.rho()).unwrap();
        assert!((phi_n(&p, &theta, 1).unwrap() - 3f64.tanh()).abs() < 1e-15);
        for x in [0.1, 0.37, 0.8] {
            let v = phi_n(&p, &pt(x), 1).unwrap();
            let expect = 3f64.tanh() * (std::f64::consts::PI * (x - rho)).sin().abs();
            assert!((v - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn pinched_orbit_is_zero() {
        let p = golden();
        for k in 1..=40 {
            let tau = rotate(p.theta_star(), k, p.rho()).unwrap();
            for n in k as u64..=45 {
                assert_eq!(phi_n(&p, &tau, n).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn grid_angle_is_exact() {
        assert_eq!(grid_angle(1, 2), Angle::HALF);
        assert_eq!(grid_angle(0, 7), Angle::ZERO);
        assert_eq!(grid_angle(1, 4).to_f64(), 0.25);
        let a = grid_angle(1, 3).bits();
        assert_eq!(a, u128::MAX / 3);
        assert!((grid_angle(999_999, 1_000_000).to_f64() - 0.999_999).abs() < 1e-16);
    }

    #[test]
    fn grid_depths_match_direct() {
        let p = golden();
        let all = phi_grid_depths(&p, 64, &[1, 2, 3, 6]).unwrap();
        let direct = phi_grid(&p, 64, 6).unwrap();
        assert_eq!(all[3].values, direct.values);
        for w in all.windows(2) {
            for (a, b) in w[0].values.iter().zip(&w[1].values) {
                assert!(b <= a);
            }
        }
    }

    #[test]
    fn peak_near_tau5() {
        let p = golden();
        let g = phi_grid(&p, 10_000, 30).unwrap();
        let tau5 = rotate(p.theta_star(), 5, p.rho()).unwrap().to_f64s()[0];
        let i = (tau5 * 10_000.0).round() as usize % 10_000;
        let oracle = phi_n(&p, &pt(i as f64 / 10_000.0), 30).unwrap();
        assert!(g.values[i] < 1e-2);
        assert!((g.values[i] - oracle).abs() < 1e-15);
    }

    #[test]
    fn log_decrement_matches_subtraction() {
        let p = golden();
        for x in [0.05, 0.3, 0.71] {
            for n in 1..12 {
                let direct = phi_n(&p, &pt(x), n - 1).unwrap() - phi_n(&p, &pt(x), n).unwrap();
                let ld = log_decrement(&p, &pt(x), n).unwrap();
                if direct > 1e-6 {
                    assert!((ld.exp() / direct - 1.0).abs() < 1e-8, "x={x} n={n}");
                }
            }
        }
    }

    #[test]
    fn log_decrement_on_pinched_orbit() {
        let p = golden();
        let tau = rotate(p.theta_star(), 3, p.rho()).unwrap();
        assert_eq!(log_decrement(&p, &tau, 5).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn block_decomposition_small_cases() {
        // x: 0..=7, L0 = 0.5, a = 10 → deep threshold 0.05
        let x = [1.0, 0.9, 0.01, 0.02, 0.3, 0.01, 0.9, 0.4];
        let b = block_decomposition(&x, 0.5, 10.0, 7);
        assert_eq!(b, vec![(1, 4), (4, 5)]);
        let none = block_decomposition(&[1.0, 0.9, 0.8], 0.5, 10.0, 3);
        assert!(none.is_empty());
        // the block is cut at p + 1 = end
        let cut = block_decomposition(&[1.0, 0.9, 0.01, 0.01, 0.01], 0.5, 10.0, 4);
        assert_eq!(cut, vec![(1, 3)]);
    }

    #[test]
    fn orbit_stats_basic() {
        let p = golden();
        let c = desk_constants(&p);
        let st = orbit_stats(&p, &c, &pt(0.42), 300, 1).unwrap();
        assert_eq!(st.s(300), 0);
        for k in 1..=300 {
            assert!(st.s(k) <= st.s(k - 1));
        }
        let last = phi_n(&p, &pt(0.42), 300).unwrap();
        assert_eq!(st.orbit[300], last);
    }

    #[test]
    fn incremental_requires_depth() {
        let p = golden();
        let c = desk_constants(&p);
        let g = phi_grid(&p, 100, 10).unwrap();
        assert!(incremental_update(&p, &c, &g, 1).is_err());
    }

    #[test]
    fn incremental_budget_plugin() {
        let p = golden();
        let c = desk_constants(&p);
        let g = phi_grid(&p, 100, 100).unwrap();
        let (_, budget) = incremental_update(&p, &c, &g, 1).unwrap();
        assert!((budget - 3f64.powf(-c.lambda_rate * 100.0)).abs() < 1e-25);
        assert!((budget / 7.9e-13 - 1.0).abs() < 0.02);
    }

    #[test]
    fn pinched_bound_rejects_orbit_points() {
        let p = golden();
        let c = desk_constants(&p);
        let tau = rotate(p.theta_star(), 10, p.rho()).unwrap();
        assert!(pinched_lower_bound(&p, &c, &tau, 1, 200).is_err());
        assert!(pinched_lower_bound(&p, &c, &pt(0.5), 1, 10).is_err());
    }

    #[test]
    fn pinched_bound_example() {
        let p = golden();
        let c = desk_constants(&p);
        let eps = pinched_lower_bound(&p, &c, &pt(0.5), 1, 200).unwrap();
        assert!(eps > 0.0);
        assert!(phi_n(&p, &pt(0.5), 500).unwrap() >= eps);
    }

    #[test]
    fn csv_layout() {
        let p = golden();
        let g = phi_grid(&p, 4, 0).unwrap();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s, "theta_1,phi,n\n0,1,0\n0.25,1,0\n0.5,1,0\n0.75,1,0\n");
    }
}
