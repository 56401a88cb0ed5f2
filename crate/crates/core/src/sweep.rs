//! Parameter sweeps and single-variable constrained optimisation.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{evaluate, AnalyticContext, PerformanceReport};
use crate::beam::GridCache;
use crate::config::LinkConfig;
use crate::error::{Error, Result};
use crate::montecarlo;

/// Parameters that can be swept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Wz,
    SigmaThetaE,
    SigmaAoa,
    ThetaFov,
    BLambda,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] =
        [SweepAxis::Wz, SweepAxis::SigmaThetaE, SweepAxis::SigmaAoa, SweepAxis::ThetaFov, SweepAxis::BLambda];

    /// Configuration key of the parameter.
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::Wz => "w_z",
            SweepAxis::SigmaThetaE => "sigma_theta_e",
            SweepAxis::SigmaAoa => "sigma_aoa",
            SweepAxis::ThetaFov => "theta_fov",
            SweepAxis::BLambda => "b_lambda",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Wz => "wz",
            SweepAxis::SigmaThetaE => "sigma_theta_e",
            SweepAxis::SigmaAoa => "sigma_aoa",
            SweepAxis::ThetaFov => "theta_fov",
            SweepAxis::BLambda => "B_lambda",
        }
    }

    /// Sets the parameter on a configuration.
    pub fn apply(self, cfg: &mut LinkConfig, value: f64) {
        match self {
            SweepAxis::Wz => {
                cfg.wz = value;
                cfg.w0 = None;
            }
            SweepAxis::SigmaThetaE => cfg.sigma_theta_e = value,
            SweepAxis::SigmaAoa => cfg.sigma_aoa = value,
            SweepAxis::ThetaFov => cfg.theta_fov = Some(value),
            SweepAxis::BLambda => cfg.b_lambda = value,
        }
    }

    pub fn get(self, cfg: &LinkConfig) -> f64 {
        match self {
            SweepAxis::Wz => cfg.wz,
            SweepAxis::SigmaThetaE => cfg.sigma_theta_e,
            SweepAxis::SigmaAoa => cfg.sigma_aoa,
            SweepAxis::ThetaFov => cfg.theta_fov(),
            SweepAxis::BLambda => cfg.b_lambda,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let l = s.to_ascii_lowercase();
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.key() == l || a.name().eq_ignore_ascii_case(&l))
            .ok_or_else(|| {
                Error::domain(format!(
                    "unknown sweep axis `{s}` (expected wz, sigma_theta_e, sigma_aoa, theta_fov or B_lambda)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Analytic,
    MonteCarlo,
    Both,
}

impl FromStr for Engine {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "analytic" => Ok(Engine::Analytic),
            "monte_carlo" | "mc" => Ok(Engine::MonteCarlo),
            "both" => Ok(Engine::Both),
            _ => Err(Error::domain(format!("unknown engine `{s}` (expected analytic, monte_carlo or both)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub overlay: Option<Overlay>,
    pub engine: Engine,
}

fn check_values(axis: SweepAxis, values: &[f64]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::domain(format!("sweep over {axis} has no values")));
    }
    if values.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::domain(format!("sweep values for {axis} must be strictly increasing")));
    }
    Ok(())
}

impl SweepSpec {
    pub fn new(axis: SweepAxis, values: Vec<f64>) -> Result<Self> {
        check_values(axis, &values)?;
        Ok(SweepSpec { axis, values, overlay: None, engine: Engine::Analytic })
    }

    pub fn with_overlay(mut self, axis: SweepAxis, values: Vec<f64>) -> Result<Self> {
        check_values(axis, &values)?;
        if axis == self.axis {
            return Err(Error::domain("overlay axis must differ from the sweep axis"));
        }
        self.overlay = Some(Overlay { axis, values });
        Ok(self)
    }

    pub fn with_engine(mut self, engine: Engine) -> Self {
        self.engine = engine;
        self
    }

    /// `n` evenly spaced values from `start` to `stop` inclusive.
    pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
        match n {
            0 => vec![],
            1 => vec![start],
            _ => (0..n).map(|i| start + (stop - start) * i as f64 / (n - 1) as f64).collect(),
        }
    }

    /// `(axis value, overlay value)` pairs, overlay-major.
    pub fn points(&self) -> Vec<(f64, Option<f64>)> {
        match &self.overlay {
            None => self.values.iter().map(|&v| (v, None)).collect(),
            Some(o) => o
                .values
                .iter()
                .flat_map(|&ov| self.values.iter().map(move |&v| (v, Some(ov))))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis_value: f64,
    pub overlay_value: Option<f64>,
    pub report: PerformanceReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub spec: SweepSpec,
    /// Analytic and Monte Carlo rows interleaved by point when both engines run.
    pub rows: Vec<SweepRow>,
}

/// Configuration of one sweep point, validated.
pub fn point_config(base: &LinkConfig, spec: &SweepSpec, value: f64, overlay: Option<f64>) -> Result<LinkConfig> {
    let mut cfg = base.clone();
    let wrap = |axis: SweepAxis, value: f64| {
        move |e: Error| Error::SweepPoint { axis: axis.name().into(), value, source: Box::new(e) }
    };
    spec.axis.apply(&mut cfg, value);
    cfg.validate().map_err(wrap(spec.axis, value))?;
    if let (Some(o), Some(ov)) = (&spec.overlay, overlay) {
        o.axis.apply(&mut cfg, ov);
        cfg.validate().map_err(wrap(o.axis, ov))?;
    }
    Ok(cfg)
}

/// Evaluates every point of `spec` on top of `base`.
///
/// Monte Carlo points use `base.mc_slots` and the seed `base.seed + point index`.
pub fn sweep(base: &LinkConfig, spec: &SweepSpec) -> Result<SweepResult> {
    check_values(spec.axis, &spec.values)?;
    let cache = GridCache::new();
    let points = spec.points();
    let reports: Vec<Result<Vec<PerformanceReport>>> = points
        .par_iter()
        .enumerate()
        .map(|(i, &(v, ov))| {
            let cfg = point_config(base, spec, v, ov)?;
            let wrap = |e: Error| Error::SweepPoint { axis: spec.axis.name().into(), value: v, source: Box::new(e) };
            let ctx = AnalyticContext::new(&cfg, &cache).map_err(wrap)?;
            let mut out = Vec::with_capacity(2);
            if matches!(spec.engine, Engine::Analytic | Engine::Both) {
                out.push(evaluate(&ctx).map_err(wrap)?.report);
            }
            if matches!(spec.engine, Engine::MonteCarlo | Engine::Both) {
                let seed = cfg.seed.wrapping_add(i as u64);
                out.push(montecarlo::run(&ctx, cfg.mc_slots, seed).map_err(wrap)?.report);
            }
            Ok(out)
        })
        .collect();
    let mut rows = Vec::with_capacity(points.len() * 2);
    for (&(v, ov), r) in points.iter().zip(reports) {
        for report in r? {
            rows.push(SweepRow { axis_value: v, overlay_value: ov, report });
        }
    }
    Ok(SweepResult { spec: spec.clone(), rows })
}

/// Variables the optimiser can tune.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptVar {
    Wz,
    ThetaFov,
}

impl OptVar {
    pub fn axis(self) -> SweepAxis {
        match self {
            OptVar::Wz => SweepAxis::Wz,
            OptVar::ThetaFov => SweepAxis::ThetaFov,
        }
    }
    /// Default search interval (swept range of the parameter).
    pub fn default_bounds(self) -> (f64, f64) {
        match self {
            OptVar::Wz => (0.05, 1.0),
            OptVar::ThetaFov => (5e-6, 200e-6),
        }
    }
}

impl FromStr for OptVar {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wz" | "w_z" => Ok(OptVar::Wz),
            "theta_fov" => Ok(OptVar::ThetaFov),
            _ => Err(Error::domain(format!("cannot optimise `{s}` (expected wz or theta_fov)"))),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    /// Points of the initial global grid.
    pub grid_points: usize,
    /// Relative bracket width at which refinement stops.
    pub x_tol: f64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions { grid_points: 64, x_tol: 1e-9 }
    }
}

/// Optimiser output.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub var: OptVar,
    /// Maximiser, or the minimum-QBER point when `feasible` is false.
    pub value: f64,
    pub report: PerformanceReport,
    pub feasible: bool,
    pub evaluations: usize,
}

struct Objective<'a> {
    base: &'a LinkConfig,
    axis: SweepAxis,
    q_max: f64,
    cache: GridCache,
    evaluations: std::cell::Cell<usize>,
}

#[derive(Clone, Copy)]
struct Probe {
    x: f64,
    report: PerformanceReport,
}

impl Probe {
    fn qber(&self) -> f64 {
        self.report.qber.unwrap_or(f64::INFINITY)
    }
}

impl Objective<'_> {
    fn eval(&self, x: f64) -> Result<Probe> {
        let mut cfg = self.base.clone();
        self.axis.apply(&mut cfg, x);
        let wrap = |e: Error| Error::SweepPoint { axis: self.axis.name().into(), value: x, source: Box::new(e) };
        cfg.validate().map_err(wrap)?;
        let ctx = AnalyticContext::new(&cfg, &self.cache).map_err(wrap)?;
        self.evaluations.set(self.evaluations.get() + 1);
        Ok(Probe { x, report: evaluate(&ctx).map_err(wrap)?.report })
    }

    fn feasible(&self, p: &Probe) -> bool {
        p.qber() <= self.q_max
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search maximising `score` on `[a, b]`; returns the best probe seen.
fn golden<F: Fn(&Probe) -> f64>(obj: &Objective, mut a: f64, mut b: f64, tol: f64, score: F) -> Result<Option<Probe>> {
    let mut best: Option<Probe> = None;
    let keep = |p: Probe, best: &mut Option<Probe>| {
        if score(&p) > best.map_or(f64::NEG_INFINITY, |q| score(&q)) {
            *best = Some(p);
        }
        p
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut pc = keep(obj.eval(c)?, &mut best);
    let mut pd = keep(obj.eval(d)?, &mut best);
    while b - a > tol {
        if score(&pc) >= score(&pd) {
            b = d;
            d = c;
            pd = pc;
            c = b - INV_PHI * (b - a);
            pc = keep(obj.eval(c)?, &mut best);
        } else {
            a = c;
            c = d;
            pc = pd;
            d = a + INV_PHI * (b - a);
            pd = keep(obj.eval(d)?, &mut best);
        }
    }
    Ok(best)
}

/// Maximises the analytic key rate over one variable subject to `qber <= q_max`.
///
/// A global grid locates the best feasible point; the bracket around it is
/// cut at the constraint boundary by bisection and refined by golden-section
/// search. Without feasible points the minimum-QBER point is returned, marked
/// infeasible.
pub fn optimize(
    base: &LinkConfig,
    var: OptVar,
    q_max: f64,
    bounds: (f64, f64),
    opts: OptimizeOptions,
) -> Result<Optimum> {
    let (lo, hi) = bounds;
    if !(q_max > 0.0 && q_max <= 0.5) {
        return Err(Error::domain(format!("qber limit must lie in (0, 0.5] (got {q_max:e})")));
    }
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::domain("optimisation bounds must satisfy lo < hi"));
    }
    if opts.grid_points < 3 {
        return Err(Error::domain("optimisation grid needs at least 3 points"));
    }
    let obj = Objective { base, axis: var.axis(), q_max, cache: GridCache::new(), evaluations: 0.into() };
    let xs = SweepSpec::linspace(lo, hi, opts.grid_points);
    let grid: Vec<Probe> = xs.iter().map(|&x| obj.eval(x)).collect::<Result<_>>()?;
    let tol = opts.x_tol * (hi - lo);
    let key = |p: &Probe| p.report.key_rate;

    let best_idx = (0..grid.len())
        .filter(|&i| obj.feasible(&grid[i]))
        .max_by(|&i, &j| key(&grid[i]).total_cmp(&key(&grid[j])));

    let Some(k) = best_idx else {
        let k = (0..grid.len()).min_by(|&i, &j| grid[i].qber().total_cmp(&grid[j].qber())).expect("non-empty grid");
        let a = xs[k.saturating_sub(1)];
        let b = xs[(k + 1).min(xs.len() - 1)];
        let refined = golden(&obj, a, b, tol, |p| -p.qber())?;
        let best = match refined {
            Some(p) if p.qber() < grid[k].qber() => p,
            _ => grid[k],
        };
        return Ok(Optimum {
            var,
            value: best.x,
            report: best.report,
            feasible: false,
            evaluations: obj.evaluations.get(),
        });
    };

    // Feasible bracket around the best grid point.
    let edge = |neighbour: usize| -> Result<f64> {
        let inner = grid[k];
        let outer = grid[neighbour];
        if obj.feasible(&outer) {
            return Ok(outer.x);
        }
        let (mut f, mut g) = (inner.x, outer.x);
        while (g - f).abs() > tol {
            let m = 0.5 * (f + g);
            if obj.feasible(&obj.eval(m)?) {
                f = m;
            } else {
                g = m;
            }
        }
        Ok(f)
    };
    let a = if k > 0 { edge(k - 1)? } else { xs[0] };
    let b = if k + 1 < grid.len() { edge(k + 1)? } else { xs[xs.len() - 1] };
    let mut best = grid[k];
    for x in [a, b] {
        if x != best.x {
            let p = obj.eval(x)?;
            if obj.feasible(&p) && key(&p) > key(&best) {
                best = p;
            }
        }
    }
    if b - a > tol {
        let refined = golden(&obj, a, b, tol, |p| if obj.feasible(p) { key(p) } else { f64::NEG_INFINITY })?;
        if let Some(p) = refined {
            if obj.feasible(&p) && key(&p) > key(&best) {
                best = p;
            }
        }
    }
    Ok(Optimum { var, value: best.x, report: best.report, feasible: true, evaluations: obj.evaluations.get() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fov_base(b: f64) -> LinkConfig {
        LinkConfig { sigma_theta_e: 100e-6, sigma_aoa: 50e-6, b_lambda: b, ..LinkConfig::default() }
    }

    #[test]
    fn spec_validation() {
        assert!(SweepSpec::new(SweepAxis::Wz, vec![]).is_err());
        assert!(SweepSpec::new(SweepAxis::Wz, vec![0.1, 0.1]).is_err());
        assert!(SweepSpec::new(SweepAxis::Wz, vec![0.2, 0.1]).is_err());
        let s = SweepSpec::new(SweepAxis::Wz, vec![0.1, 0.2]).unwrap();
        assert!(s.clone().with_overlay(SweepAxis::Wz, vec![0.1]).is_err());
        let s = s.with_overlay(SweepAxis::SigmaThetaE, vec![50e-6, 150e-6]).unwrap();
        assert_eq!(s.points().len(), 4);
        assert_eq!(s.points()[1], (0.2, Some(50e-6)));
        assert_eq!("B_lambda".parse::<SweepAxis>().unwrap(), SweepAxis::BLambda);
        assert_eq!("w_z".parse::<SweepAxis>().unwrap(), SweepAxis::Wz);
        assert!("mu_t".parse::<SweepAxis>().is_err());
        assert_eq!(SweepSpec::linspace(1.0, 2.0, 3), vec![1.0, 1.5, 2.0]);
    }

    #[test]
    fn single_point_matches_direct() {
        let base = LinkConfig { theta_fov: Some(80e-6), ..LinkConfig::default() };
        let r = sweep(&base, &SweepSpec::new(SweepAxis::Wz, vec![0.07]).unwrap()).unwrap();
        let mut cfg = base.clone();
        cfg.wz = 0.07;
        let direct = evaluate(&AnalyticContext::new(&cfg, &GridCache::new()).unwrap()).unwrap().report;
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].report, direct);
    }

    #[test]
    fn bad_point_reports_coordinate() {
        let r = sweep(&LinkConfig::default(), &SweepSpec::new(SweepAxis::Wz, vec![0.1, 50.0]).unwrap());
        match r.unwrap_err() {
            Error::SweepPoint { axis, value, source } => {
                assert_eq!(axis, "wz");
                assert_eq!(value, 50.0);
                assert!(source.is_validation());
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn both_engines_interleave() {
        let base = LinkConfig { mc_slots: 20_000, ..LinkConfig::default() };
        let spec = SweepSpec::new(SweepAxis::SigmaAoa, vec![50e-6, 100e-6, 200e-6]).unwrap().with_engine(Engine::Both);
        let r = sweep(&base, &spec).unwrap();
        assert_eq!(r.rows.len(), 6);
        for pair in r.rows.chunks(2) {
            assert_eq!(pair[0].axis_value, pair[1].axis_value);
            assert_eq!(pair[0].report.method, crate::analytics::Method::Analytic);
            assert_eq!(pair[1].report.method, crate::analytics::Method::MonteCarlo);
        }
        assert_eq!(sweep(&base, &spec).unwrap(), r);
    }

    #[test]
    fn qber_rises_with_fov_in_daylight() {
        let spec = SweepSpec::new(SweepAxis::ThetaFov, SweepSpec::linspace(5e-6, 200e-6, 40)).unwrap();
        let r = sweep(&fov_base(1e-4), &spec).unwrap();
        for w in r.rows.windows(2) {
            assert!(w[1].report.qber.unwrap() > w[0].report.qber.unwrap());
        }
    }

    #[test]
    fn dark_optimum_is_unconstrained() {
        let base = LinkConfig { b_lambda: 0.0, ..fov_base(0.0) };
        let o = optimize(&base, OptVar::ThetaFov, 1e-3, (5e-6, 200e-6), OptimizeOptions::default()).unwrap();
        assert!(o.feasible);
        assert_eq!(o.report.qber, Some(0.0));
        assert_eq!(o.value, 200e-6);
    }

    #[test]
    fn optimum_is_feasible_and_matches_brute_force() {
        let base = fov_base(1e-6);
        let (lo, hi) = (5e-6, 200e-6);
        let o = optimize(&base, OptVar::ThetaFov, 1e-3, (lo, hi), OptimizeOptions::default()).unwrap();
        assert!(o.feasible);
        assert!(o.report.qber.unwrap() <= 1e-3 + 1e-12);
        // brute force at resolution 1e-3 of the interval
        let n = 1001;
        let xs = SweepSpec::linspace(lo, hi, n);
        let r = sweep(&base, &SweepSpec::new(SweepAxis::ThetaFov, xs.clone()).unwrap()).unwrap();
        let (bx, _) = r
            .rows
            .iter()
            .filter(|row| row.report.qber.unwrap() <= 1e-3)
            .map(|row| (row.axis_value, row.report.key_rate))
            .max_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert!((bx - o.value).abs() <= (hi - lo) / (n - 1) as f64, "{bx} vs {}", o.value);
    }

    #[test]
    fn infeasible_returns_min_qber_point() {
        let o = optimize(&fov_base(1e-4), OptVar::ThetaFov, 1e-3, (5e-6, 200e-6), OptimizeOptions::default())
            .unwrap();
        assert!(!o.feasible);
        assert!(o.report.qber.unwrap() > 1e-3);
        assert!(o.value < 10e-6);
    }

    #[test]
    fn finer_grid_never_worse() {
        let base = fov_base(1e-6);
        let coarse = optimize(&base, OptVar::Wz, 1e-3, (0.05, 1.0), OptimizeOptions::default()).unwrap();
        let fine =
            optimize(&base, OptVar::Wz, 1e-3, (0.05, 1.0), OptimizeOptions { grid_points: 256, ..Default::default() })
                .unwrap();
        assert!(fine.report.key_rate >= coarse.report.key_rate * (1.0 - 1e-9));
    }

    #[test]
    fn optimizer_argument_checks() {
        let b = LinkConfig::default();
        assert!(optimize(&b, OptVar::Wz, 0.7, (0.05, 1.0), OptimizeOptions::default()).is_err());
        assert!(optimize(&b, OptVar::Wz, 1e-3, (1.0, 0.05), OptimizeOptions::default()).is_err());
        assert_eq!("theta_fov".parse::<OptVar>().unwrap(), OptVar::ThetaFov);
    }
}
