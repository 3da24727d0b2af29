//! Command implementations.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use serde_json::{json, Value};

use sna_core::bounding::{
    phi_grid_depths, phi_n, pinched_lower_bound, sample_offpeak, verify_prop41, verify_s_bound, GraphSample,
    Prop41Part,
};
use sna_core::constants::{
    check_conditions, derive_constants, desk_constants, diophantine_scan, DerivedConstants, GridOptions,
};
use sna_core::dimension::{
    box_dimension, cover_cost, density_from_neighbor_counts, density_profile, graph_lyapunov, graph_variation,
    graph_variation_with_orbit_nodes, information_from_counts, pointwise_dimension, pointwise_from_neighbor_counts,
    summarize_slopes, zero_line_grid_lyapunov, Depth, DimensionEstimate, FitWindow, Ladder, MeasureSample,
    NeighborCounts,
};
use sna_core::dynamics::{zero_line_lyapunov, SystemParams};
use sna_core::partition::{census, classify, quantum_index, Classifier};
use sna_core::report::ConditionReport;
use sna_core::torus::{default_rotation, golden_mean, parse_angle, TorusPoint};

use crate::config::{ConstMode, DimsMethod, Format, Knobs, LyapMode, Prop};
use crate::output::{emit, json_bytes, Manifest};
use crate::CliError;

/// Knob access that records every resolved value for the manifest.
pub struct Ctx {
    pub command: &'static str,
    knobs: Knobs,
    resolved: BTreeMap<String, Value>,
    proxy: BTreeMap<String, Value>,
}

impl Ctx {
    pub fn new(command: &'static str, knobs: Knobs) -> Ctx {
        Ctx { command, knobs, resolved: BTreeMap::new(), proxy: BTreeMap::new() }
    }

    fn record<T: Serialize>(&mut self, key: &str, v: T) -> T {
        self.resolved.insert(key.into(), serde_json::to_value(&v).expect("knob serializes"));
        v
    }

    fn proxy<T: Serialize>(&mut self, key: &str, v: T) {
        self.proxy.insert(key.into(), serde_json::to_value(&v).expect("proxy serializes"));
    }

    fn seed(&mut self) -> u64 {
        let s = self.knobs.seed.unwrap_or(0);
        self.record("seed", s)
    }

    fn format(&mut self, default: Format) -> Format {
        let f = self.knobs.format.unwrap_or(default);
        self.record("format", f)
    }

    fn params(&mut self) -> Result<SystemParams, CliError> {
        let kappa = self.knobs.kappa.unwrap_or(3.0);
        let dim = self.knobs.dim.unwrap_or(1);
        let c = self.knobs.c.unwrap_or(sna_core::dynamics::DEFAULT_C);
        let d = self.knobs.d.unwrap_or(sna_core::dynamics::DEFAULT_D);
        if dim == 0 {
            return Err(CliError::Config("--D must be at least 1".into()));
        }
        let spec = self.knobs.rho.clone().unwrap_or_else(|| if dim == 1 { "golden".into() } else { "default".into() });
        let rho = match spec.as_str() {
            "golden" if dim == 1 => TorusPoint::new(vec![golden_mean()])?,
            "golden" => return Err(CliError::Config("--rho golden needs --D 1".into())),
            "default" => default_rotation(dim)?,
            list => {
                let coords = list.split(',').map(|s| parse_angle(s.trim())).collect::<Result<Vec<_>, _>>()?;
                if coords.len() != dim {
                    return Err(CliError::Config(format!(
                        "--rho has {} coordinates but D = {dim}",
                        coords.len()
                    )));
                }
                eprintln!("warning: --rho {list}: validity is governed by the Diophantine check");
                TorusPoint::new(coords)?
            }
        };
        self.record("kappa", kappa);
        self.record("D", dim);
        self.record("rho", &spec);
        self.record("c", c);
        self.record("d", d);
        let params = SystemParams::new(kappa, rho, c, d)?;
        if !matches!(spec.as_str(), "golden" | "default") && self.command != "check" {
            if let Err(e) = diophantine_scan(&params, 100_000) {
                eprintln!("warning: {e}");
            }
        }
        Ok(params)
    }

    fn constants(&mut self, params: &SystemParams, default: ConstMode) -> DerivedConstants {
        match self.record("constants", self.knobs.constants.unwrap_or(default)) {
            ConstMode::Desk => desk_constants(params),
            ConstMode::Recipe => derive_constants(params),
        }
    }

    fn theta(&mut self, dim: usize) -> Result<Option<TorusPoint>, CliError> {
        let Some(text) = self.knobs.theta.clone() else { return Ok(None) };
        let coords = text.split(',').map(|s| parse_angle(s.trim())).collect::<Result<Vec<_>, _>>()?;
        if coords.len() != dim {
            return Err(CliError::Config(format!("--theta has {} coordinates but D = {dim}", coords.len())));
        }
        self.record("theta", &text);
        Ok(Some(TorusPoint::new(coords)?))
    }

    fn finish(&self, artifact: &[u8]) -> Result<(), CliError> {
        let config = Value::Object(self.resolved.clone().into_iter().collect());
        let proxy = Value::Object(self.proxy.clone().into_iter().collect());
        let out = self.knobs.out.as_deref();
        let manifest = Manifest {
            tool: "sna",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.resolved.get("seed").and_then(Value::as_u64).unwrap_or(0),
            config: &config,
            proxy: &proxy,
            artifact: out.map(|p| p.display().to_string()),
        };
        emit(out, artifact, &manifest)
    }
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new())
}

fn csv_done(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>, CliError> {
    w.into_inner().map_err(|e| CliError::Io(e.to_string()))
}

fn csv_err(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

fn report_bytes(report: &ConditionReport, format: Format) -> Result<Vec<u8>, CliError> {
    match format {
        Format::Json => Ok(json_bytes(report)),
        Format::Csv => {
            let mut w = csv_writer();
            w.write_record(["id", "description", "lhs", "rhs", "pass", "margin", "closed_form"]).map_err(csv_err)?;
            for e in &report.entries {
                w.write_record([
                    e.id.clone(),
                    e.description.clone(),
                    e.lhs.to_string(),
                    e.rhs.to_string(),
                    e.pass.to_string(),
                    e.margin.to_string(),
                    e.closed_form.to_string(),
                ])
                .map_err(csv_err)?;
            }
            csv_done(w)
        }
    }
}

pub fn check(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.params()?;
    let format = ctx.format(Format::Json);
    ctx.seed();
    let horizon = ctx.record("horizon", ctx.knobs.horizon.unwrap_or(1_000_000));
    let pitch = ctx.knobs.pitch;
    if let Some(p) = pitch {
        ctx.record("pitch", p);
    }
    let consts = ctx.constants(&params, ConstMode::Recipe);
    let report = check_conditions(&params, &consts, horizon, GridOptions { pitch })?;
    ctx.finish(&report_bytes(&report, format)?)
}

fn parse_depths(text: &str, n: u64) -> Result<Vec<u64>, CliError> {
    match text {
        "all" => Ok((1..=n).collect()),
        "final" => Ok(vec![n]),
        list => list
            .split(',')
            .map(|s| s.trim().parse::<u64>().map_err(|_| CliError::Config(format!("--depths: bad depth `{s}`"))))
            .collect(),
    }
}

pub fn graph(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.params()?;
    let format = ctx.format(Format::Csv);
    ctx.seed();
    let n = ctx.record("n", ctx.knobs.n.unwrap_or(6));
    let m = ctx.record("grid", ctx.knobs.grid.unwrap_or(4096));
    let depths_text = ctx.record("depths", ctx.knobs.depths.clone().unwrap_or_else(|| "all".into()));
    let depths = parse_depths(&depths_text, n)?;
    ctx.proxy("depths", &depths);
    let samples = phi_grid_depths(&params, m, &depths)?;
    let bytes = match format {
        Format::Json => json_bytes(&samples),
        Format::Csv => {
            let mut buf = Vec::new();
            writeln!(buf, "{}", GraphSample::csv_header(params.dim())).expect("in-memory write");
            for s in &samples {
                s.write_csv_rows(&mut buf).expect("in-memory write");
            }
            buf
        }
    };
    ctx.finish(&bytes)
}

fn parse_ladder(text: &str) -> Result<Ladder, CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Config(format!("--ladder `{text}` is not coarse:fine:ratio")))?;
    if nums.len() != 3 {
        return Err(CliError::Config(format!("--ladder `{text}` is not coarse:fine:ratio")));
    }
    Ok(Ladder::geometric(nums[0], nums[1], nums[2])?)
}

fn parse_window(text: &str, ladder: &Ladder) -> Result<FitWindow, CliError> {
    let bad = || CliError::Config(format!("--window `{text}` is not start:end"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let start = a.trim().parse().map_err(|_| bad())?;
    let end = b.trim().parse().map_err(|_| bad())?;
    if end >= ladder.len() || end <= start {
        return Err(CliError::Config(format!("--window {start}:{end} does not fit {} ladder rungs", ladder.len())));
    }
    Ok(FitWindow { start, end })
}

fn estimate_csv(e: &DimensionEstimate) -> Vec<u8> {
    let mut buf = Vec::new();
    e.write_csv(&mut buf).expect("in-memory write");
    buf
}

pub fn dims(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.params()?;
    let format = ctx.format(Format::Json);
    let seed = ctx.seed();
    let method = ctx.record("method", ctx.knobs.method.unwrap_or(DimsMethod::Info));
    match method {
        DimsMethod::Cover => return dims_cover(ctx, &params, format),
        DimsMethod::Variation => return dims_variation(ctx, &params, format),
        _ => {}
    }
    let samples = ctx.record("samples", ctx.knobs.samples.unwrap_or(1_000_000));
    if samples < 2 {
        return Err(CliError::Config("--samples must be at least 2".into()));
    }
    let resolution = (samples as f64).powf(-1.0 / params.dim() as f64);
    let ladder = match ctx.knobs.ladder.clone() {
        Some(t) => {
            ctx.record("ladder", &t);
            parse_ladder(&t)?
        }
        None => {
            let l = Ladder::default_for(resolution)?;
            ctx.record("ladder", l.eps());
            l
        }
    };
    let window = match ctx.knobs.window.clone() {
        Some(t) => parse_window(&t, &ladder)?,
        None => ladder.default_window(),
    };
    ctx.record("window", window);
    let depth_text = ctx.record("depth", ctx.knobs.depth.clone().unwrap_or_else(|| "auto".into()));
    let finest = *ladder.eps().last().expect("nonempty ladder");
    let depth = match depth_text.as_str() {
        "auto" => Depth::Auto { tolerance: finest / 10.0 },
        t => Depth::Fixed(t.parse().map_err(|_| CliError::Config(format!("--depth `{t}` is not an integer or auto")))?),
    };
    let sample = MeasureSample::uniform(&params, samples, depth, seed)?;
    ctx.proxy("proxy_depth_n", sample.n);
    ctx.proxy("proxy_tolerance", sample.tolerance);
    if let Depth::Auto { tolerance } = depth {
        ctx.proxy("requested_tolerance", tolerance);
    }
    let anchors = ctx.knobs.anchors.unwrap_or(1000).min(samples);
    let bytes = match method {
        DimsMethod::Box => {
            let e = box_dimension(&sample, &ladder, window)?;
            match format {
                Format::Json => json_bytes(&e),
                Format::Csv => estimate_csv(&e),
            }
        }
        DimsMethod::Info => {
            ctx.record("anchors", anchors);
            let nc = NeighborCounts::at_random_anchors(&sample, &ladder, anchors as usize, seed)?;
            let e = information_from_counts(&sample, &nc, window, seed)?;
            match format {
                Format::Json => json_bytes(&e),
                Format::Csv => estimate_csv(&e),
            }
        }
        DimsMethod::Pointwise | DimsMethod::Density => {
            let anchor = ctx.theta(params.dim())?;
            match anchor {
                Some(theta) => {
                    let x = match ctx.knobs.x {
                        Some(x) => x,
                        None => phi_n(&params, &theta, sample.n.unwrap_or(0))?,
                    };
                    ctx.record("x", x);
                    single_anchor(&sample, &ladder, window, &theta, x, method, format, params.dim())?
                }
                None => {
                    ctx.record("anchors", anchors);
                    let nc = NeighborCounts::at_random_anchors(&sample, &ladder, anchors as usize, seed)?;
                    batch_anchors(&sample, &nc, window, method, format, params.dim(), seed)?
                }
            }
        }
        DimsMethod::Cover | DimsMethod::Variation => unreachable!(),
    };
    ctx.finish(&bytes)
}

#[allow(clippy::too_many_arguments)]
fn single_anchor(
    sample: &MeasureSample,
    ladder: &Ladder,
    window: FitWindow,
    theta: &TorusPoint,
    x: f64,
    method: DimsMethod,
    format: Format,
    dim: usize,
) -> Result<Vec<u8>, CliError> {
    if method == DimsMethod::Pointwise {
        let e = pointwise_dimension(sample, (theta, x), ladder, window)?;
        return Ok(match format {
            Format::Json => json_bytes(&e),
            Format::Csv => estimate_csv(&e),
        });
    }
    let d = density_profile(sample, (theta, x), ladder, dim)?;
    Ok(match format {
        Format::Json => json_bytes(&d),
        Format::Csv => {
            let mut buf = b"eps,density\n".to_vec();
            for (e, v) in &d.profile {
                writeln!(buf, "{e},{v}").expect("in-memory write");
            }
            buf
        }
    })
}

fn batch_anchors(
    sample: &MeasureSample,
    nc: &NeighborCounts,
    window: FitWindow,
    method: DimsMethod,
    format: Format,
    dim: usize,
    seed: u64,
) -> Result<Vec<u8>, CliError> {
    if method == DimsMethod::Pointwise {
        let est = pointwise_from_neighbor_counts(sample, nc, window)?;
        let info = information_from_counts(sample, nc, window, seed)?;
        return Ok(match format {
            Format::Json => json_bytes(&json!({
                "summary": summarize_slopes(&est),
                "information_slope": info.slope,
                "estimates": est,
            })),
            Format::Csv => {
                let mut buf = b"anchor,eps,stat\n".to_vec();
                for (a, e) in est.iter().enumerate() {
                    for (eps, s) in e.ladder.iter().zip(&e.stats) {
                        writeln!(buf, "{a},{eps},{s}").expect("in-memory write");
                    }
                }
                buf
            }
        });
    }
    let profiles = density_from_neighbor_counts(sample, nc, dim);
    let mut spreads: Vec<f64> = profiles.iter().map(|p| p.tail_spread).filter(|v| v.is_finite()).collect();
    spreads.sort_by(f64::total_cmp);
    let median = spreads.get(spreads.len() / 2).copied();
    Ok(match format {
        Format::Json => json_bytes(&json!({ "median_tail_spread": median, "profiles": profiles })),
        Format::Csv => {
            let mut buf = b"anchor,eps,density\n".to_vec();
            for (a, p) in profiles.iter().enumerate() {
                for (e, v) in &p.profile {
                    writeln!(buf, "{a},{e},{v}").expect("in-memory write");
                }
            }
            buf
        }
    })
}

fn dims_cover(ctx: &mut Ctx, params: &SystemParams, format: Format) -> Result<(), CliError> {
    let consts = ctx.constants(params, ConstMode::Desk);
    let s = ctx.record("s", ctx.knobs.s.unwrap_or(params.dim() as f64));
    let j_max = ctx.record("j_max", ctx.knobs.j_max.unwrap_or(60));
    let cc = cover_cost(&consts, s, j_max, params.dim())?;
    let bytes = match format {
        Format::Json => json_bytes(&cc),
        Format::Csv => {
            let mut buf = b"j,log_summand,log_partial_sum\n".to_vec();
            for (j, (a, b)) in cc.log_summands.iter().zip(&cc.log_partial_sums).enumerate() {
                writeln!(buf, "{j},{a},{b}").expect("in-memory write");
            }
            buf
        }
    };
    ctx.finish(&bytes)
}

fn dims_variation(ctx: &mut Ctx, params: &SystemParams, format: Format) -> Result<(), CliError> {
    let n = ctx.record("n", ctx.knobs.n.unwrap_or(400));
    let m = ctx.record("grid", ctx.knobs.grid.unwrap_or(1_000_000));
    ctx.proxy("n", n);
    let v = graph_variation(params, n, m)?;
    let nodes = graph_variation_with_orbit_nodes(params, n, m)?;
    let bytes = match format {
        Format::Json => json_bytes(&json!({ "n": n, "grid": m, "variation": v, "variation_with_orbit_nodes": nodes })),
        Format::Csv => format!("n,grid,variation,variation_with_orbit_nodes\n{n},{m},{v},{nodes}\n").into_bytes(),
    };
    ctx.finish(&bytes)
}

pub fn lyapunov(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.params()?;
    let format = ctx.format(Format::Json);
    ctx.seed();
    let mode = ctx.record("mode", ctx.knobs.mode.unwrap_or(LyapMode::Graph));
    let (n, m, value, excluded, total) = match mode {
        LyapMode::Graph => {
            let n = ctx.record("n", ctx.knobs.n.unwrap_or(2000));
            let m = ctx.record("grid", ctx.knobs.grid.unwrap_or(1_000_000));
            ctx.proxy("n", n);
            let e = graph_lyapunov(&params, n, m)?;
            (Some(n), Some(m), e.value, Some(e.excluded), Some(e.total))
        }
        LyapMode::ZeroLine => {
            let m = ctx.record("grid", ctx.knobs.grid.unwrap_or(10_000_000));
            let e = zero_line_grid_lyapunov(&params, m)?;
            (None, Some(m), e.value, Some(e.excluded), Some(e.total))
        }
        LyapMode::Orbit => {
            let n = ctx.record("n", ctx.knobs.n.unwrap_or(10_000_000));
            let theta = match ctx.theta(params.dim())? {
                Some(t) => t,
                None => {
                    let t = TorusPoint::splat(params.dim(), parse_angle("0.1")?)?;
                    ctx.record("theta", t.to_f64s());
                    t
                }
            };
            let v = zero_line_lyapunov(&params, &theta, n)?;
            (Some(n), None, v, None, None)
        }
    };
    let reference = params.kappa().ln() - 2f64.ln();
    let bytes = match format {
        Format::Json => json_bytes(&json!({
            "mode": mode,
            "n": n,
            "grid": m,
            "value": value,
            "excluded": excluded,
            "total": total,
            "zero_line_reference_D1": reference,
        })),
        Format::Csv => {
            let opt = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
            let opt_us = |v: Option<usize>| v.map(|x| x.to_string()).unwrap_or_default();
            let mode_name = serde_json::to_value(mode).expect("mode serializes");
            format!(
                "mode,n,grid,value,excluded,total\n{},{},{},{value},{},{}\n",
                mode_name.as_str().unwrap_or_default(),
                opt(n),
                opt(m),
                opt_us(excluded),
                opt_us(total)
            )
            .into_bytes()
        }
    };
    ctx.finish(&bytes)
}

pub fn partition(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.params()?;
    let seed = ctx.seed();
    let consts = ctx.constants(&params, ConstMode::Desk);
    let horizon = ctx.record("horizon", ctx.knobs.horizon.unwrap_or(200));
    if let Some(theta) = ctx.theta(params.dim())? {
        let format = ctx.format(Format::Json);
        let class = classify(&params, &consts, &theta, horizon)?;
        let j0 = Classifier::new(&params, &consts)?.j0();
        ctx.proxy("j0", j0);
        let bytes = match format {
            Format::Json => json_bytes(&json!({ "theta": theta, "j0": j0, "horizon": horizon, "class": class })),
            Format::Csv => {
                let v = serde_json::to_value(class).expect("class serializes");
                let kind = v["kind"].as_str().unwrap_or_default().to_string();
                let j = v.get("j").map(|j| j.to_string()).unwrap_or_default();
                format!("kind,j,j0,horizon\n{kind},{j},{j0},{horizon}\n").into_bytes()
            }
        };
        return ctx.finish(&bytes);
    }
    let format = ctx.format(Format::Csv);
    let samples = ctx.record("samples", ctx.knobs.samples.unwrap_or(100_000));
    let c = census(&params, &consts, samples, horizon, seed)?;
    ctx.proxy("j0", c.j0);
    let bytes = match format {
        Format::Json => json_bytes(&c),
        Format::Csv => {
            let mut buf = Vec::new();
            let taus: Vec<String> = (1..=params.dim()).map(|i| format!("tau_{i}")).collect();
            writeln!(buf, "j,{},r_j,leb_estimate,count", taus.join(",")).expect("in-memory write");
            for r in &c.rows {
                let t: Vec<String> = r.tau.iter().map(|v| v.to_string()).collect();
                writeln!(buf, "{},{},{},{},{}", r.j, t.join(","), r.radius, r.leb_estimate, r.count)
                    .expect("in-memory write");
            }
            buf
        }
    };
    ctx.finish(&bytes)
}

#[derive(Serialize)]
struct PinchedRow {
    theta: Vec<f64>,
    eps: f64,
    n: u64,
    phi_n: f64,
    holds: bool,
}

pub fn pinched(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.params()?;
    let format = ctx.format(Format::Json);
    let seed = ctx.seed();
    let consts = ctx.constants(&params, ConstMode::Desk);
    let q = ctx.record("q", ctx.knobs.q.unwrap_or(1));
    let t = ctx.record("t", ctx.knobs.t.unwrap_or(consts.m as u64 * q));
    let thetas = match ctx.theta(params.dim())? {
        Some(th) => vec![th],
        None => {
            let count = ctx.record("samples", ctx.knobs.samples.unwrap_or(100));
            let horizon = quantum_index(&consts).clamp(t, 1 << 20);
            sample_offpeak(&params, &consts, horizon, q, count, seed)?
        }
    };
    let n = 10 * t;
    ctx.proxy("n", n);
    let mut rows = Vec::with_capacity(thetas.len());
    for th in &thetas {
        let eps = pinched_lower_bound(&params, &consts, th, q, t)?;
        let phi = phi_n(&params, th, n)?;
        rows.push(PinchedRow { theta: th.to_f64s(), eps, n, phi_n: phi, holds: phi >= eps });
    }
    let bytes = match format {
        Format::Json => json_bytes(&rows),
        Format::Csv => {
            let mut buf = Vec::new();
            let cols: Vec<String> = (1..=params.dim()).map(|i| format!("theta_{i}")).collect();
            writeln!(buf, "{},eps,n,phi_n,holds", cols.join(",")).expect("in-memory write");
            for r in &rows {
                let t: Vec<String> = r.theta.iter().map(|v| v.to_string()).collect();
                writeln!(buf, "{},{},{},{},{}", t.join(","), r.eps, r.n, r.phi_n, r.holds).expect("in-memory write");
            }
            buf
        }
    };
    ctx.finish(&bytes)
}

pub fn verify(ctx: &mut Ctx) -> Result<(), CliError> {
    let params = ctx.params()?;
    let format = ctx.format(Format::Json);
    let seed = ctx.seed();
    let prop = ctx.knobs.prop.ok_or_else(|| CliError::Config("verify needs --prop 41i|41ii|41iii|sbound".into()))?;
    ctx.record("prop", prop);
    let consts = ctx.constants(&params, ConstMode::Desk);
    let n = ctx.record("n", ctx.knobs.n.unwrap_or(200));
    let q = ctx.record("q", ctx.knobs.q.unwrap_or(1));
    let default_pairs = if prop == Prop::SBound { 1000 } else { 10_000 };
    let pairs = ctx.record("pairs", ctx.knobs.pairs.unwrap_or(default_pairs));
    ctx.proxy("n", n);
    let report = match prop {
        Prop::P41i => verify_prop41(&params, &consts, n, q, pairs, seed, &[Prop41Part::Lipschitz])?,
        Prop::P41ii => verify_prop41(&params, &consts, n, q, pairs, seed, &[Prop41Part::Decrement])?,
        Prop::P41iii => verify_prop41(&params, &consts, n, q, pairs, seed, &[Prop41Part::OffPeakLipschitz])?,
        Prop::SBound => verify_s_bound(&params, &consts, n, q, pairs, seed)?,
    };
    ctx.finish(&report_bytes(&report, format)?)
}
