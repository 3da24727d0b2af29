//! Box, information and pointwise dimension estimators, density profiles,
//! Lyapunov exponents of the bounding graph, Hausdorff cover costs and the
//! variation-growth proxy.

use std::io::{self, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounding::{auto_depth, grid_angle, lattice, phi_batch, DEFAULT_N_MAX};
use crate::constants::{desk_constants, DerivedConstants};
use crate::dynamics::SystemParams;
use crate::error::{Error, Result};
use crate::numerics::{log_add_exp, CompensatedSum, LinearFit};
use crate::partition::uniform_angle;
use crate::torus::{Angle, TorusPoint};

/// Depth used for the φ⁺ proxy.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum Depth {
    Fixed(u64),
    /// Stopping rule with the given sup-norm decrement tolerance.
    Auto { tolerance: f64 },
}

/// Points (θ_i, x_i) on 𝕋^D × [0,1].
#[derive(Clone, Debug, PartialEq)]
pub struct MeasureSample {
    pub dim: usize,
    /// Flattened base coordinates, `dim` per point.
    pub thetas: Vec<Angle>,
    pub values: Vec<f64>,
    /// Depth n of the φ⁺ proxy, if the sample comes from the dynamics.
    pub n: Option<u64>,
    /// Sup-norm decrement achieved at depth n (proxy error indicator).
    pub tolerance: Option<f64>,
    pub seed: Option<u64>,
    /// Typical spacing of the base points: 1/M for a grid, N^{−1/D} for
    /// N random points.
    pub resolution: f64,
}

impl MeasureSample {
    pub fn from_points(dim: usize, thetas: Vec<Angle>, values: Vec<f64>, resolution: f64) -> Result<Self> {
        if dim == 0 || thetas.len() != values.len() * dim {
            return Err(Error::InvalidParameter("coordinate count does not match values".into()));
        }
        if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidParameter("fiber values must lie in [0, 1]".into()));
        }
        Ok(MeasureSample { dim, thetas, values, n: None, tolerance: None, seed: None, resolution })
    }

    /// θ uniform (seeded) and x = φ_n(θ), so points are μ_{φ_n}-distributed.
    pub fn uniform(params: &SystemParams, count: u64, depth: Depth, seed: u64) -> Result<Self> {
        if count == 0 {
            return Err(Error::Precondition("sample size must be positive".into()));
        }
        let (n, tolerance) = resolve_depth(params, depth)?;
        let dim = params.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let thetas: Vec<Angle> = (0..count as usize * dim).map(|_| uniform_angle(&mut rng)).collect();
        let values = phi_batch(params, &thetas, n);
        Ok(MeasureSample {
            dim,
            thetas,
            values,
            n: Some(n),
            tolerance,
            seed: Some(seed),
            resolution: (count as f64).powf(-1.0 / dim as f64),
        })
    }

    /// Uniform grid {i/M} (lattice for D > 1).
    pub fn grid(params: &SystemParams, m: u64, depth: Depth) -> Result<Self> {
        if m < 2 {
            return Err(Error::Precondition("grid size M must be at least 2".into()));
        }
        let (n, tolerance) = resolve_depth(params, depth)?;
        let dim = params.dim();
        let thetas = lattice(dim, m);
        let values = phi_batch(params, &thetas, n);
        Ok(MeasureSample {
            dim,
            thetas,
            values,
            n: Some(n),
            tolerance,
            seed: None,
            resolution: 1.0 / m as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn theta(&self, i: usize) -> &[Angle] {
        &self.thetas[i * self.dim..(i + 1) * self.dim]
    }
}

fn resolve_depth(params: &SystemParams, depth: Depth) -> Result<(u64, Option<f64>)> {
    match depth {
        Depth::Fixed(n) => Ok((n, None)),
        Depth::Auto { tolerance } => {
            let consts = desk_constants(params);
            let ad = auto_depth(params, &consts, tolerance, DEFAULT_N_MAX)?;
            Ok((ad.n, Some(ad.sup_decrement)))
        }
    }
}

/// Strictly decreasing list of scales.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Ladder {
    eps: Vec<f64>,
}

impl Ladder {
    pub fn new(eps: Vec<f64>) -> Result<Ladder> {
        if eps.is_empty() || eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidParameter("ladder scales must be positive".into()));
        }
        if eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidParameter("ladder must be strictly decreasing".into()));
        }
        Ok(Ladder { eps })
    }

    /// coarse, coarse·ratio, … down to (and including, up to rounding) fine.
    pub fn geometric(coarse: f64, fine: f64, ratio: f64) -> Result<Ladder> {
        if !(ratio > 0.0 && ratio < 1.0) || !(fine > 0.0) || fine > coarse {
            return Err(Error::InvalidParameter(format!(
                "ladder {coarse}:{fine}:{ratio} needs 0 < fine ≤ coarse and 0 < ratio < 1"
            )));
        }
        let mut eps = vec![coarse];
        let mut k = 1;
        loop {
            let e = coarse * ratio.powi(k);
            if e < fine * (1.0 - 1e-9) {
                break;
            }
            eps.push(e);
            k += 1;
        }
        Ladder::new(eps)
    }

    /// 2^-3 down to max(2^-14, 4/M), ratio 1/2.
    pub fn default_for(resolution: f64) -> Result<Ladder> {
        let fine = (2f64.powi(-14)).max(4.0 * resolution);
        Ladder::geometric(0.125, fine, 0.5)
    }

    pub fn eps(&self) -> &[f64] {
        &self.eps
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    /// Index range of rungs with coarse ≥ ε ≥ fine.
    pub fn window_between(&self, coarse: f64, fine: f64) -> Result<FitWindow> {
        let tol = 1e-9;
        let idx: Vec<usize> = (0..self.len())
            .filter(|&i| self.eps[i] <= coarse * (1.0 + tol) && self.eps[i] >= fine * (1.0 - tol))
            .collect();
        match (idx.first(), idx.last()) {
            (Some(&a), Some(&b)) if b > a => Ok(FitWindow { start: a, end: b }),
            _ => Err(Error::InvalidParameter(format!("no two ladder rungs in [{fine}, {coarse}]"))),
        }
    }

    /// Drops the coarsest 2 and finest 2 rungs when at least 6 remain.
    pub fn default_window(&self) -> FitWindow {
        let n = self.len();
        if n >= 6 {
            FitWindow { start: 2, end: n - 3 }
        } else {
            FitWindow { start: 0, end: n - 1 }
        }
    }
}

/// Inclusive rung index range used for the fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FitWindow {
    pub start: usize,
    pub end: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Box,
    Information,
    Pointwise,
    Density,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DimensionEstimate {
    pub method: Method,
    pub ladder: Vec<f64>,
    /// N(ε) for box; mean log μ(B_ε) for information; log μ(B_ε(x)) for
    /// pointwise (NaN where the ball was empty).
    pub stats: Vec<f64>,
    pub slope: f64,
    pub stderr: f64,
    pub r2: f64,
    pub window: FitWindow,
    pub seed: Option<u64>,
    pub proxy_depth_n: Option<u64>,
    pub proxy_tolerance: Option<f64>,
    /// Per rung: anchors whose ball was empty and were left out.
    pub excluded: Vec<u64>,
    pub anchor: Option<Vec<f64>>,
    pub flags: Vec<String>,
}

impl DimensionEstimate {
    /// `eps,stat` rows.
    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "eps,stat")?;
        for (e, s) in self.ladder.iter().zip(&self.stats) {
            writeln!(w, "{e},{s}")?;
        }
        Ok(())
    }
}

fn check_window(ladder: &Ladder, window: FitWindow) -> Result<()> {
    if window.end >= ladder.len() || window.end <= window.start {
        return Err(Error::InvalidParameter(format!(
            "fit window {}..={} does not fit a ladder of {} rungs",
            window.start,
            window.end,
            ladder.len()
        )));
    }
    Ok(())
}

fn check_resolution(sample: &MeasureSample, ladder: &Ladder) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::Precondition("empty sample".into()));
    }
    let finest = *ladder.eps().last().unwrap();
    if finest < sample.resolution {
        return Err(Error::Undersampled { finest, resolution: sample.resolution });
    }
    Ok(())
}

fn fit_window(xs: &[f64], ys: &[f64], window: FitWindow) -> Result<LinearFit> {
    let (mut fx, mut fy) = (Vec::new(), Vec::new());
    for i in window.start..=window.end {
        if ys[i].is_finite() {
            fx.push(xs[i]);
            fy.push(ys[i]);
        }
    }
    LinearFit::fit(&fx, &fy).ok_or_else(|| Error::DegenerateFit("fewer than two usable rungs".into()))
}

fn base_estimate(method: Method, sample: &MeasureSample, ladder: &Ladder, window: FitWindow) -> DimensionEstimate {
    DimensionEstimate {
        method,
        ladder: ladder.eps().to_vec(),
        stats: vec![],
        slope: f64::NAN,
        stderr: f64::NAN,
        r2: f64::NAN,
        window,
        seed: sample.seed,
        proxy_depth_n: sample.n,
        proxy_tolerance: sample.tolerance,
        excluded: vec![0; ladder.len()],
        anchor: None,
        flags: vec![],
    }
}

/// Number of occupied cells of side ε in 𝕋^D × [0,1].
pub fn occupied_cells(sample: &MeasureSample, eps: f64) -> Result<u64> {
    let per_axis = (1.0 / eps).ceil() as u128 + 1;
    let bits = 128 - per_axis.leading_zeros();
    if bits as usize * (sample.dim + 1) > 128 {
        return Err(Error::InvalidParameter("too many cells to key in 128 bits".into()));
    }
    let dim = sample.dim;
    let mut keys: Vec<u128> = (0..sample.len())
        .into_par_iter()
        .map(|i| {
            let mut key = (sample.values[i] / eps).floor() as u128;
            for a in sample.theta(i) {
                key = key * per_axis + (a.to_f64() / eps).floor() as u128;
            }
            key
        })
        .collect();
    let _ = dim;
    keys.par_sort_unstable();
    keys.dedup();
    Ok(keys.len() as u64)
}

/// Slope of log N(ε) against −log ε over the window.
pub fn box_dimension(sample: &MeasureSample, ladder: &Ladder, window: FitWindow) -> Result<DimensionEstimate> {
    check_resolution(sample, ladder)?;
    check_window(ladder, window)?;
    let counts: Vec<f64> = ladder
        .eps()
        .iter()
        .map(|&e| occupied_cells(sample, e).map(|c| c as f64))
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = ladder.eps().iter().map(|e| -e.ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|c| c.ln()).collect();
    let fit = fit_window(&xs, &ys, window)?;
    let mut est = base_estimate(Method::Box, sample, ladder, window);
    est.stats = counts;
    est.slope = fit.slope;
    est.stderr = fit.stderr;
    est.r2 = fit.r2;
    Ok(est)
}

/// Neighbour counts #{j ≠ anchor : |z_j − z_anchor|_max < ε} for every rung.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborCounts {
    pub ladder: Ladder,
    /// Sample indices of the anchors, or `None` for an external anchor.
    pub anchors: Vec<Option<usize>>,
    pub counts: Vec<Vec<u64>>,
    /// Denominator for the empirical measure (N − 1 for sample anchors).
    pub denominators: Vec<u64>,
}

struct SortedSample<'a> {
    sample: &'a MeasureSample,
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl<'a> SortedSample<'a> {
    fn new(sample: &'a MeasureSample) -> Self {
        let mut order: Vec<usize> = (0..sample.len()).collect();
        order.par_sort_unstable_by_key(|&i| (sample.theta(i)[0], i));
        let keys = order.iter().map(|&i| sample.theta(i)[0].to_f64()).collect();
        SortedSample { sample, order, keys }
    }

    /// Histogram of neighbours by the first rung they fall outside of.
    fn count(&self, theta: &[Angle], x: f64, skip: Option<usize>, ladder: &Ladder) -> Vec<u64> {
        let eps = ladder.eps();
        let reach = eps[0];
        let n = self.keys.len();
        let mut hist = vec![0u64; eps.len() + 1];
        let t0 = theta[0].to_f64();
        let mut visit = |pos: usize| {
            let j = self.order[pos];
            if Some(j) == skip {
                return;
            }
            let other = self.sample.theta(j);
            let mut d = (self.sample.values[j] - x).abs();
            for (a, b) in theta.iter().zip(other) {
                d = d.max(a.distance(*b));
            }
            if d < reach {
                // number of rungs with d < ε_k
                let k = eps.partition_point(|&e| d < e);
                hist[k] += 1;
            }
        };
        if 2.0 * reach >= 1.0 {
            (0..n).for_each(&mut visit);
        } else {
            let lo = t0 - reach;
            let hi = t0 + reach;
            let range = |a: f64, b: f64| {
                let s = self.keys.partition_point(|&k| k < a);
                let e = self.keys.partition_point(|&k| k <= b);
                s..e
            };
            if lo < 0.0 {
                range(lo + 1.0, 1.0).for_each(&mut visit);
                range(0.0, hi).for_each(&mut visit);
            } else if hi > 1.0 {
                range(lo, 1.0).for_each(&mut visit);
                range(0.0, hi - 1.0).for_each(&mut visit);
            } else {
                range(lo, hi).for_each(&mut visit);
            }
        }
        // counts[k] = #neighbours with d < ε_k = Σ_{h > k} hist[h]
        let mut out = vec![0u64; eps.len()];
        let mut acc = 0u64;
        for k in (0..eps.len()).rev() {
            acc += hist[k + 1];
            out[k] = acc;
        }
        out
    }
}

impl NeighborCounts {
    /// Counts for `anchors` sample points drawn without replacement (seeded).
    pub fn at_random_anchors(sample: &MeasureSample, ladder: &Ladder, anchors: usize, seed: u64) -> Result<Self> {
        if anchors == 0 || anchors > sample.len() {
            return Err(Error::Precondition(format!(
                "anchors = {anchors} must lie in 1..={}",
                sample.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let idx = rand::seq::index::sample(&mut rng, sample.len(), anchors).into_vec();
        Ok(Self::at_indices(sample, ladder, &idx))
    }

    pub fn at_indices(sample: &MeasureSample, ladder: &Ladder, idx: &[usize]) -> Self {
        let sorted = SortedSample::new(sample);
        let counts: Vec<Vec<u64>> = idx
            .par_iter()
            .map(|&i| sorted.count(sample.theta(i), sample.values[i], Some(i), ladder))
            .collect();
        NeighborCounts {
            ladder: ladder.clone(),
            anchors: idx.iter().map(|&i| Some(i)).collect(),
            counts,
            denominators: vec![sample.len() as u64 - 1; idx.len()],
        }
    }

    pub fn at_point(sample: &MeasureSample, ladder: &Ladder, theta: &[Angle], x: f64) -> Self {
        let sorted = SortedSample::new(sample);
        NeighborCounts {
            ladder: ladder.clone(),
            anchors: vec![None],
            counts: vec![sorted.count(theta, x, None, ladder)],
            denominators: vec![sample.len() as u64],
        }
    }

    /// log μ(B_ε(anchor)), NaN for an empty ball.
    pub fn log_mass(&self, anchor: usize, rung: usize) -> f64 {
        let c = self.counts[anchor][rung];
        if c == 0 {
            f64::NAN
        } else {
            (c as f64 / self.denominators[anchor] as f64).ln()
        }
    }
}

/// Slope of the μ-average of log μ(B_ε(x)) against log ε.
pub fn information_dimension(
    sample: &MeasureSample,
    ladder: &Ladder,
    window: FitWindow,
    anchors: usize,
    seed: u64,
) -> Result<DimensionEstimate> {
    check_resolution(sample, ladder)?;
    check_window(ladder, window)?;
    let nc = NeighborCounts::at_random_anchors(sample, ladder, anchors, seed)?;
    information_from_counts(sample, &nc, window, seed)
}

pub fn information_from_counts(
    sample: &MeasureSample,
    nc: &NeighborCounts,
    window: FitWindow,
    seed: u64,
) -> Result<DimensionEstimate> {
    let ladder = &nc.ladder;
    let mut est = base_estimate(Method::Information, sample, ladder, window);
    est.seed = Some(seed);
    let mut stats = Vec::with_capacity(ladder.len());
    for k in 0..ladder.len() {
        let mut sum = CompensatedSum::new();
        let mut used = 0u64;
        for a in 0..nc.anchors.len() {
            let v = nc.log_mass(a, k);
            if v.is_finite() {
                sum.add(v);
                used += 1;
            } else {
                est.excluded[k] += 1;
            }
        }
        stats.push(if used == 0 { f64::NAN } else { sum.value() / used as f64 });
    }
    let xs: Vec<f64> = ladder.eps().iter().map(|e| e.ln()).collect();
    let fit = fit_window(&xs, &stats, window)?;
    if est.excluded.iter().any(|&e| e > 0) {
        est.flags.push("some (anchor, ε) pairs had empty balls and were excluded".into());
    }
    est.stats = stats;
    est.slope = fit.slope;
    est.stderr = fit.stderr;
    est.r2 = fit.r2;
    Ok(est)
}

fn pointwise_from_counts(
    sample: &MeasureSample,
    nc: &NeighborCounts,
    a: usize,
    window: FitWindow,
    anchor: (&[Angle], f64),
) -> Result<DimensionEstimate> {
    let ladder = &nc.ladder;
    let mut est = base_estimate(Method::Pointwise, sample, ladder, window);
    est.stats = (0..ladder.len()).map(|k| nc.log_mass(a, k)).collect();
    for (k, s) in est.stats.iter().enumerate() {
        if !s.is_finite() {
            est.excluded[k] = 1;
        }
    }
    est.anchor = Some(anchor.0.iter().map(|t| t.to_f64()).chain([anchor.1]).collect());
    if anchor.1 == 0.0 {
        est.flags.push("atypical point: anchor lies on the zero set of the graph".into());
    }
    let xs: Vec<f64> = ladder.eps().iter().map(|e| e.ln()).collect();
    let fit = fit_window(&xs, &est.stats, window)?;
    est.slope = fit.slope;
    est.stderr = fit.stderr;
    est.r2 = fit.r2;
    Ok(est)
}

/// Single-anchor slope of log μ(B_ε(anchor)) against log ε.
pub fn pointwise_dimension(
    sample: &MeasureSample,
    anchor: (&TorusPoint, f64),
    ladder: &Ladder,
    window: FitWindow,
) -> Result<DimensionEstimate> {
    check_resolution(sample, ladder)?;
    check_window(ladder, window)?;
    if anchor.0.dim() != sample.dim {
        return Err(Error::DimensionMismatch { expected: sample.dim, found: anchor.0.dim() });
    }
    let nc = NeighborCounts::at_point(sample, ladder, anchor.0.coords(), anchor.1);
    pointwise_from_counts(sample, &nc, 0, window, (anchor.0.coords(), anchor.1))
}

/// Pointwise estimates at the anchors of `nc` (sample anchors exclude
/// themselves).
pub fn pointwise_from_neighbor_counts(
    sample: &MeasureSample,
    nc: &NeighborCounts,
    window: FitWindow,
) -> Result<Vec<DimensionEstimate>> {
    nc.anchors
        .iter()
        .enumerate()
        .map(|(a, idx)| {
            let i = idx.ok_or_else(|| Error::Precondition("external anchor in batch".into()))?;
            pointwise_from_counts(sample, nc, a, window, (sample.theta(i), sample.values[i]))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SlopeSummary {
    pub count: usize,
    pub median: f64,
    pub p10: f64,
    pub p25: f64,
    pub p75: f64,
    pub p90: f64,
    pub iqr: f64,
}

/// Linear-interpolation quantiles of the finite slopes.
pub fn summarize_slopes(estimates: &[DimensionEstimate]) -> Option<SlopeSummary> {
    let mut s: Vec<f64> = estimates.iter().map(|e| e.slope).filter(|v| v.is_finite()).collect();
    if s.is_empty() {
        return None;
    }
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (s.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        s[lo] + (s[hi] - s[lo]) * (pos - lo as f64)
    };
    Some(SlopeSummary {
        count: s.len(),
        median: q(0.5),
        p10: q(0.1),
        p25: q(0.25),
        p75: q(0.75),
        p90: q(0.9),
        iqr: q(0.75) - q(0.25),
    })
}

pub const DENSITY_CONVENTION: &str = "max metric: V_D·ε^D := (2ε)^D";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityProfile {
    pub convention: &'static str,
    pub anchor: Vec<f64>,
    /// (ε, μ(B_ε)/(2ε)^D) for rungs with a nonempty ball.
    pub profile: Vec<(f64, f64)>,
    pub excluded: usize,
    /// (max − min)/mean over the last three retained rungs.
    pub tail_spread: f64,
    pub flags: Vec<String>,
}

fn density_from_counts(nc: &NeighborCounts, a: usize, dim: usize, anchor: Vec<f64>, x: f64) -> DensityProfile {
    let mut profile = Vec::new();
    let mut excluded = 0;
    for (k, &e) in nc.ladder.eps().iter().enumerate() {
        let c = nc.counts[a][k];
        if c == 0 {
            excluded += 1;
            continue;
        }
        let mass = c as f64 / nc.denominators[a] as f64;
        profile.push((e, mass / (2.0 * e).powi(dim as i32)));
    }
    let tail: Vec<f64> = profile.iter().rev().take(3).map(|p| p.1).collect();
    let tail_spread = if tail.len() == 3 {
        let mean = tail.iter().sum::<f64>() / 3.0;
        let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
        (hi - lo) / mean
    } else {
        f64::NAN
    };
    let mut flags = Vec::new();
    if x == 0.0 {
        flags.push("atypical: anchor lies on the zero set of the graph".into());
    }
    if excluded > 0 {
        flags.push(format!("{excluded} rungs with empty balls excluded"));
    }
    DensityProfile { convention: DENSITY_CONVENTION, anchor, profile, excluded, tail_spread, flags }
}

/// μ(B_ε(anchor))/(2ε)^D along the ladder; `dim` is the base dimension D.
pub fn density_profile(
    sample: &MeasureSample,
    anchor: (&TorusPoint, f64),
    ladder: &Ladder,
    dim: usize,
) -> Result<DensityProfile> {
    check_resolution(sample, ladder)?;
    if anchor.0.dim() != sample.dim {
        return Err(Error::DimensionMismatch { expected: sample.dim, found: anchor.0.dim() });
    }
    let nc = NeighborCounts::at_point(sample, ladder, anchor.0.coords(), anchor.1);
    let coords = anchor.0.to_f64s().into_iter().chain([anchor.1]).collect();
    Ok(density_from_counts(&nc, 0, dim, coords, anchor.1))
}

/// Density profiles at the sample anchors of `nc`.
pub fn density_from_neighbor_counts(sample: &MeasureSample, nc: &NeighborCounts, dim: usize) -> Vec<DensityProfile> {
    nc.anchors
        .iter()
        .enumerate()
        .map(|(a, idx)| {
            let i = idx.expect("sample anchor");
            let coords = sample.theta(i).iter().map(|t| t.to_f64()).chain([sample.values[i]]).collect();
            density_from_counts(nc, a, dim, coords, sample.values[i])
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LyapunovEstimate {
    pub value: f64,
    pub excluded: usize,
    pub total: usize,
    pub n: Option<u64>,
}

fn lyapunov_grid(params: &SystemParams, m: u64) -> Vec<Angle> {
    let dim = params.dim();
    let per_axis = if dim == 1 { m } else { ((m as f64).powf(1.0 / dim as f64).round() as u64).max(2) };
    lattice(dim, per_axis)
}

fn average_log_slope(params: &SystemParams, grid: &[Angle], n: Option<u64>) -> Result<LyapunovEstimate> {
    let dim = params.dim();
    let values = match n {
        Some(n) => phi_batch(params, grid, n),
        None => vec![0.0; grid.len() / dim],
    };
    let logs: Vec<f64> = grid
        .par_chunks(dim)
        .zip(values.par_iter())
        .map(|(t, &x)| params.slope(params.forcing(t), x).ln())
        .collect();
    let total = logs.len();
    let mut sum = CompensatedSum::new();
    let mut excluded = 0;
    for v in logs {
        if v.is_finite() {
            sum.add(v);
        } else {
            excluded += 1;
        }
    }
    if excluded * 100 > total {
        return Err(Error::TooCloseToPinchedSet { excluded, total });
    }
    Ok(LyapunovEstimate { value: sum.value() / (total - excluded) as f64, excluded, total, n })
}

/// (1/M)·Σ log T'_{θ_i}(φ_n(θ_i)) over the uniform grid, zero-derivative
/// points excluded and counted.
pub fn graph_lyapunov(params: &SystemParams, n: u64, m: u64) -> Result<LyapunovEstimate> {
    if n < 1 || m < 1 {
        return Err(Error::Precondition("graph_lyapunov needs n, M ≥ 1".into()));
    }
    average_log_slope(params, &lyapunov_grid(params, m), Some(n))
}

/// The same grid average along the zero line x = 0.
pub fn zero_line_grid_lyapunov(params: &SystemParams, m: u64) -> Result<LyapunovEstimate> {
    if m < 1 {
        return Err(Error::Precondition("M must be at least 1".into()));
    }
    average_log_slope(params, &lyapunov_grid(params, m), None)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverCost {
    pub s: f64,
    pub j0: u64,
    /// ln of √(1+(Kα^{(j+j₀)m+1})²)·(2r_{j+j₀−1})^s for j = 0..=j_max.
    pub log_summands: Vec<f64>,
    pub log_partial_sums: Vec<f64>,
    /// exp of the log partial sums (may overflow to ∞).
    pub partial_sums: Vec<f64>,
    /// log-ratio of the last two summands.
    pub tail_log_ratio: f64,
    pub convergent: bool,
    /// m²·log(α/a) and whether D exceeds it.
    pub threshold: f64,
    pub exceeds_threshold: bool,
    pub notes: Vec<String>,
}

/// Partial sums of the Hausdorff cover-cost series, in log space.
pub fn cover_cost(consts: &DerivedConstants, s: f64, j_max: u64, dim: usize) -> Result<CoverCost> {
    if !(s > 0.0) || j_max < 1 {
        return Err(Error::Precondition("cover_cost needs s > 0 and j_max ≥ 1".into()));
    }
    let mut notes = Vec::new();
    let j0 = match consts.j0 {
        Some(j) => j,
        None => {
            notes.push("j0 undefined for these constants; using j0 = 1".into());
            1
        }
    };
    let (ln_k, ln_alpha, ln_a, ln_b) = (consts.k.ln(), consts.alpha.ln(), consts.a.ln(), consts.b.ln());
    let m = consts.m as f64;
    let log_summands: Vec<f64> = (0..=j_max)
        .map(|j| {
            let jj = (j + j0) as f64;
            let ln_y = ln_k + (jj * m + 1.0) * ln_alpha;
            let ln_root = if ln_y > 0.0 {
                ln_y + 0.5 * (-2.0 * ln_y).exp().ln_1p()
            } else {
                0.5 * (2.0 * ln_y).exp().ln_1p()
            };
            // 2r_{j+j₀−1} = b·a^{−(j+j₀−2)/m}
            ln_root + s * (ln_b - (jj - 2.0) / m * ln_a)
        })
        .collect();
    let mut log_partial_sums = Vec::with_capacity(log_summands.len());
    let mut acc = f64::NEG_INFINITY;
    for &l in &log_summands {
        acc = log_add_exp(acc, l);
        log_partial_sums.push(acc);
    }
    let partial_sums = log_partial_sums.iter().map(|l| l.exp()).collect();
    let n = log_summands.len();
    let tail_log_ratio = log_summands[n - 1] - log_summands[n - 2];
    let th = crate::constants::hausdorff_finiteness_threshold(consts);
    if let Some(note) = th.note {
        notes.push(note);
    }
    Ok(CoverCost {
        s,
        j0,
        log_summands,
        log_partial_sums,
        partial_sums,
        tail_log_ratio,
        convergent: tail_log_ratio < 0.0,
        threshold: th.value,
        exceeds_threshold: dim as f64 > th.value,
        notes,
    })
}

/// Geometric-series test for the cover-cost summands: ratio α^m·a^{−s/m} < 1.
pub fn cover_cost_converges(consts: &DerivedConstants, s: f64) -> bool {
    s * consts.a.ln() / consts.m as f64 > consts.m as f64 * consts.alpha.ln()
}

/// Total variation Σ|φ_n(θ_{i+1}) − φ_n(θ_i)| of the closed polyline over
/// the uniform M-grid on 𝕋¹.
pub fn graph_variation(params: &SystemParams, n: u64, m: u64) -> Result<f64> {
    if params.dim() != 1 {
        return Err(Error::Precondition("graph_variation needs D = 1".into()));
    }
    if m < 2 {
        return Err(Error::Precondition("grid size M must be at least 2".into()));
    }
    let grid: Vec<Angle> = (0..m).map(|i| grid_angle(i, m)).collect();
    let values = phi_batch(params, &grid, n);
    Ok(closed_variation(&values))
}

fn closed_variation(values: &[f64]) -> f64 {
    let n = values.len();
    (0..n).map(|i| (values[(i + 1) % n] - values[i]).abs()).collect::<CompensatedSum>().value()
}

/// Variation over the uniform M-grid with the pinching-orbit points
/// τ_1..τ_n added as nodes (φ_n vanishes exactly there).
pub fn graph_variation_with_orbit_nodes(params: &SystemParams, n: u64, m: u64) -> Result<f64> {
    if params.dim() != 1 {
        return Err(Error::Precondition("graph_variation needs D = 1".into()));
    }
    if m < 2 {
        return Err(Error::Precondition("grid size M must be at least 2".into()));
    }
    let rho = params.rho().coords()[0];
    let star = params.theta_star().coords()[0];
    let mut nodes: Vec<Angle> = (0..m).map(|i| grid_angle(i, m)).collect();
    nodes.extend((1..=n).map(|k| star.wrapping_add(rho.times(k as i64))));
    nodes.sort_unstable();
    nodes.dedup();
    let values = phi_batch(params, &nodes, n);
    Ok(closed_variation(&values))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_sample(count: usize) -> MeasureSample {
        let thetas: Vec<Angle> = (0..count as u64).map(|i| grid_angle(i, count as u64)).collect();
        MeasureSample::from_points(1, thetas, vec![0.5; count], 1.0 / count as f64).unwrap()
    }

    #[test]
    fn ladder_construction() {
        let l = Ladder::geometric(0.125, 2f64.powi(-12), 0.5).unwrap();
        assert_eq!(l.len(), 10);
        assert_eq!(l.eps()[9], 2f64.powi(-12));
        assert_eq!(l.default_window(), FitWindow { start: 2, end: 7 });
        let w = l.window_between(2f64.powi(-4), 2f64.powi(-7)).unwrap();
        assert_eq!(w, FitWindow { start: 1, end: 4 });
        assert!(Ladder::new(vec![0.1, 0.2]).is_err());
        assert!(Ladder::geometric(0.1, 0.2, 0.5).is_err());
        let d = Ladder::default_for(1e-7).unwrap();
        assert_eq!(*d.eps().last().unwrap(), 2f64.powi(-14));
        let d = Ladder::default_for(1e-3).unwrap();
        assert!(*d.eps().last().unwrap() >= 4e-3);
    }

    #[test]
    fn single_point_box_slope_zero() {
        let s = MeasureSample::from_points(1, vec![Angle::from_f64(0.3)], vec![0.4], 1e-6).unwrap();
        let l = Ladder::geometric(0.125, 2f64.powi(-10), 0.5).unwrap();
        let e = box_dimension(&s, &l, l.default_window()).unwrap();
        assert!(e.slope.abs() < 1e-12);
        assert!(e.stats.iter().all(|&c| c == 1.0));
    }

    #[test]
    fn box_undersampled_errors() {
        let s = line_sample(100);
        let l = Ladder::geometric(0.125, 2f64.powi(-10), 0.5).unwrap();
        assert!(matches!(box_dimension(&s, &l, l.default_window()), Err(Error::Undersampled { .. })));
    }

    #[test]
    fn line_dimensions_are_one() {
        let s = line_sample(1 << 16);
        let l = Ladder::geometric(0.125, 2f64.powi(-10), 0.5).unwrap();
        let w = l.default_window();
        let b = box_dimension(&s, &l, w).unwrap();
        assert!((b.slope - 1.0).abs() < 0.02, "{}", b.slope);
        let i = information_dimension(&s, &l, w, 200, 3).unwrap();
        assert!((i.slope - 1.0).abs() < 0.02, "{}", i.slope);
        let anchor = TorusPoint::from_f64s(&[0.37]).unwrap();
        let p = pointwise_dimension(&s, (&anchor, 0.5), &l, w).unwrap();
        assert!((p.slope - 1.0).abs() < 0.02);
    }

    #[test]
    fn line_density_is_constant() {
        let s = line_sample(1 << 16);
        let l = Ladder::geometric(0.125, 2f64.powi(-10), 0.5).unwrap();
        let anchor = TorusPoint::from_f64s(&[0.37]).unwrap();
        let d = density_profile(&s, (&anchor, 0.5), &l, 1).unwrap();
        for (_, v) in &d.profile {
            assert!((v - 1.0).abs() < 1e-3, "{v}");
        }
        assert!(d.tail_spread < 1e-3);
        assert_eq!(d.convention, DENSITY_CONVENTION);
    }

    #[test]
    fn neighbor_counts_match_brute_force() {
        let p = SystemParams::golden(3.0).unwrap();
        let s = MeasureSample::uniform(&p, 3000, Depth::Fixed(20), 11).unwrap();
        let l = Ladder::geometric(0.4, 0.01, 0.5).unwrap();
        let nc = NeighborCounts::at_random_anchors(&s, &l, 25, 5).unwrap();
        for (a, idx) in nc.anchors.iter().enumerate() {
            let i = idx.unwrap();
            for (k, &e) in l.eps().iter().enumerate() {
                let brute = (0..s.len())
                    .filter(|&j| j != i)
                    .filter(|&j| {
                        let d = s.theta(i)[0].distance(s.theta(j)[0]).max((s.values[i] - s.values[j]).abs());
                        d < e
                    })
                    .count() as u64;
                assert_eq!(nc.counts[a][k], brute);
            }
        }
    }

    #[test]
    fn occupied_cells_brute_force() {
        let p = SystemParams::golden(3.0).unwrap();
        let s = MeasureSample::uniform(&p, 5000, Depth::Fixed(15), 2).unwrap();
        let eps = 1.0 / 37.0;
        let mut set = std::collections::BTreeSet::new();
        for i in 0..s.len() {
            set.insert(((s.theta(i)[0].to_f64() / eps) as u64, (s.values[i] / eps) as u64));
        }
        assert_eq!(occupied_cells(&s, eps).unwrap(), set.len() as u64);
    }

    #[test]
    fn summary_quantiles() {
        let mk = |v: f64| DimensionEstimate {
            method: Method::Pointwise,
            ladder: vec![],
            stats: vec![],
            slope: v,
            stderr: 0.0,
            r2: 1.0,
            window: FitWindow { start: 0, end: 1 },
            seed: None,
            proxy_depth_n: None,
            proxy_tolerance: None,
            excluded: vec![],
            anchor: None,
            flags: vec![],
        };
        let est: Vec<_> = (1..=5).map(|v| mk(v as f64)).collect();
        let s = summarize_slopes(&est).unwrap();
        assert_eq!(s.median, 3.0);
        assert_eq!(s.iqr, 2.0);
        assert!((s.p10 - 1.4).abs() < 1e-12);
    }

    #[test]
    fn cover_cost_desk_diverges() {
        let p = SystemParams::golden(3.0).unwrap();
        let c = desk_constants(&p);
        let cc = cover_cost(&c, 1.0, 50, 1).unwrap();
        assert!(!cc.convergent);
        assert!(!cover_cost_converges(&c, 1.0));
        assert_eq!(cc.log_summands.len(), 51);
        let expect = 67.0 * 3f64.ln() - c.a.ln() / 67.0;
        assert!((cc.tail_log_ratio - expect).abs() < 1e-9);
        for w in cc.log_partial_sums.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn cover_cost_large_s_converges() {
        let p = SystemParams::golden(3.0).unwrap();
        let c = desk_constants(&p);
        let s = 67.0 * 67.0 * 3f64.ln() / c.a.ln() * 1.01;
        let cc = cover_cost(&c, s, 50, 1).unwrap();
        assert!(cc.convergent);
        assert!(cover_cost_converges(&c, s));
    }

    #[test]
    fn variation_of_constant_line_is_zero() {
        let p = SystemParams::golden(3.0).unwrap();
        assert_eq!(graph_variation(&p, 0, 1000).unwrap(), 0.0);
        let v1 = graph_variation(&p, 8, 1000).unwrap();
        let v2 = graph_variation(&p, 8, 4000).unwrap();
        assert!(v2 >= v1);
        assert!(graph_variation(&SystemParams::standard(3.0, 2).unwrap(), 5, 100).is_err());
    }

    #[test]
    fn orbit_nodes_add_variation() {
        let p = SystemParams::golden(3.0).unwrap();
        let plain = graph_variation(&p, 60, 2000).unwrap();
        let with_nodes = graph_variation_with_orbit_nodes(&p, 60, 2000).unwrap();
        assert!(with_nodes >= plain);
    }

    #[test]
    fn lyapunov_zero_line_grid() {
        let p = SystemParams::golden(3.0).unwrap();
        let z = zero_line_grid_lyapunov(&p, 100_000).unwrap();
        assert_eq!(z.excluded, 1);
        assert!((z.value - 1.5f64.ln()).abs() < 1e-3);
        let g = graph_lyapunov(&p, 200, 20_000).unwrap();
        assert!(g.value < 0.0);
    }
}
