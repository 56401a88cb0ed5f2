//! Analytic detection probability, key-state probabilities, raw key rate and QBER.
//!
//! The detection probability averages the linearised single-photon
//! transmissivity `c_pt * P_fov * mu_p(r_d)` over the Rayleigh-distributed
//! beam displacement. Turbulence drops out through its unit mean.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::beam::{
    capture_centered, capture_classical, capture_exact, ApertureSpec, BeamGeometry, CaptureGrid,
    GridCache,
};
use crate::channel::{
    gg_pdf_unchecked, rayleigh_pdf, BackgroundModel, FovModel, PointingModel, Turbulence,
};
use crate::config::LinkConfig;
use crate::error::{Error, Result};
use crate::quadrature::{integrate_breaks, QuadOptions};

/// Threshold on `c_pt * mu_p(0)` above which the linearised detection
/// probability overstates the Poisson one by more than about 5%.
pub const LINEARIZATION_LIMIT: f64 = 0.1;

/// Rayleigh truncation point in units of `sigma_rd`.
pub const RAYLEIGH_CUTOFF: f64 = 8.0;

/// Capture model used inside the detection integral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptureMode {
    /// Segment-sum grid.
    #[default]
    Grid,
    /// Adaptive quadrature of the aperture integral.
    Exact,
    /// Wide-beam formula.
    Classical,
}

impl CaptureMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CaptureMode::Grid => "grid",
            CaptureMode::Exact => "exact",
            CaptureMode::Classical => "classical",
        }
    }
}

/// Everything the analytic and Monte Carlo evaluators need, with all
/// derived quantities resolved.
#[derive(Debug, Clone)]
pub struct AnalyticContext {
    mu_t: f64,
    eta_atm: f64,
    mu_d: f64,
    t_qs: f64,
    beam: BeamGeometry,
    aperture: ApertureSpec,
    grid: Arc<CaptureGrid>,
    pointing: PointingModel,
    fov: FovModel,
    turbulence: Turbulence,
    mu_b: f64,
    mode: CaptureMode,
    quad_tol: f64,
}

impl AnalyticContext {
    /// Resolves a configuration in the order geometry, grid, FoV, `mu_b`, `c_pt`.
    pub fn new(cfg: &LinkConfig, cache: &GridCache) -> Result<Self> {
        let beam = cfg.beam()?;
        let aperture = ApertureSpec::new(cfg.ra)?;
        let grid = cache.get(cfg.ra, beam.wz(), cfg.ng)?;
        let fov = match cfg.theta_fov {
            Some(theta) => FovModel::with_half_angle(theta, cfg.sigma_aoa)?,
            None => FovModel::from_optics(cfg.r_f, cfg.l_f, cfg.sigma_aoa)?,
        };
        if !(cfg.t_qs > 0.0) || !(cfg.delta_lambda_nm > 0.0) || !(cfg.b_lambda >= 0.0) {
            return Err(Error::domain("T_qs and delta_lambda must be > 0, B_lambda >= 0"));
        }
        let mu_b = match cfg.mu_b {
            Some(m) => m,
            None => BackgroundModel {
                a_r: aperture.area(),
                omega_fov: fov.solid_angle(),
                delta_lambda_nm: cfg.delta_lambda_nm,
                t_qs: cfg.t_qs,
                lambda: cfg.lambda,
                energy_convention: cfg.energy_convention,
            }
            .mean(cfg.b_lambda),
        };
        if !(mu_b >= 0.0) || !mu_b.is_finite() {
            return Err(Error::domain(format!("background mean must be >= 0 (got {mu_b:e})")));
        }
        if !(cfg.mu_t >= 0.0) || !(cfg.mu_d > 0.0 && cfg.mu_d <= 1.0) {
            return Err(Error::domain("need mu_t >= 0 and 0 < mu_d <= 1"));
        }
        if !(cfg.quad_tol > 0.0) {
            return Err(Error::domain("quadrature tolerance must be > 0"));
        }
        Ok(AnalyticContext {
            mu_t: cfg.mu_t,
            eta_atm: cfg.eta_atm()?,
            mu_d: cfg.mu_d,
            t_qs: cfg.t_qs,
            beam,
            aperture,
            grid,
            pointing: PointingModel::new(cfg.sigma_theta_e, cfg.lz)?,
            fov,
            turbulence: Turbulence::new(cfg.alpha, cfg.beta)?,
            mu_b,
            mode: cfg.capture_mode,
            quad_tol: cfg.quad_tol,
        })
    }

    /// Same link with a frozen background mean.
    pub fn with_mu_b(mut self, mu_b: f64) -> Self {
        self.mu_b = mu_b;
        self
    }

    pub fn with_capture_mode(mut self, mode: CaptureMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_quad_tol(mut self, tol: f64) -> Self {
        self.quad_tol = tol;
        self
    }

    /// Composite deterministic transmissivity `mu_t * eta_atm * mu_d`.
    pub fn c_pt(&self) -> f64 {
        self.mu_t * self.eta_atm * self.mu_d
    }
    /// Slot rate `1 / T_qs`.
    pub fn r_q(&self) -> f64 {
        1.0 / self.t_qs
    }
    pub fn mu_t(&self) -> f64 {
        self.mu_t
    }
    pub fn eta_atm(&self) -> f64 {
        self.eta_atm
    }
    pub fn mu_d(&self) -> f64 {
        self.mu_d
    }
    pub fn t_qs(&self) -> f64 {
        self.t_qs
    }
    pub fn beam(&self) -> &BeamGeometry {
        &self.beam
    }
    pub fn wz(&self) -> f64 {
        self.beam.wz()
    }
    pub fn ra(&self) -> f64 {
        self.aperture.radius()
    }
    pub fn grid(&self) -> &Arc<CaptureGrid> {
        &self.grid
    }
    pub fn pointing(&self) -> &PointingModel {
        &self.pointing
    }
    pub fn fov(&self) -> &FovModel {
        &self.fov
    }
    pub fn turbulence(&self) -> Turbulence {
        self.turbulence
    }
    pub fn mu_b(&self) -> f64 {
        self.mu_b
    }
    pub fn capture_mode(&self) -> CaptureMode {
        self.mode
    }

    /// `mu_p(rd)` under the selected capture model.
    pub fn capture(&self, rd: f64) -> Result<f64> {
        match self.mode {
            CaptureMode::Grid => Ok(self.grid.capture(rd)),
            CaptureMode::Exact => capture_exact(rd, self.wz(), self.ra()),
            CaptureMode::Classical => Ok(capture_classical(rd, self.wz(), self.ra()).value),
        }
    }

    /// True when `c_pt * mu_p(0)` is large enough for the linearisation to matter.
    pub fn linearization_warning(&self) -> bool {
        self.c_pt() * capture_centered(self.wz(), self.ra()) > LINEARIZATION_LIMIT
    }
}

/// Mixed law of the per-slot mean detected count `mu_q` given `rd`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuQDensity {
    /// Probability that the FoV test fails and `mu_q = 0`.
    pub point_mass_at_zero: f64,
    /// Density of the continuous part at `u`.
    pub continuous_density: f64,
}

/// Conditional law of `mu_q = c_pt * mu_p(rd) * eta_turb * 1{fov}` at `u`.
pub fn mu_q_conditional_pdf(u: f64, rd: f64, ctx: &AnalyticContext) -> Result<MuQDensity> {
    if !(u >= 0.0) || !(rd >= 0.0) {
        return Err(Error::domain("mu_q density needs u >= 0 and rd >= 0"));
    }
    let accept = ctx.fov.accept_prob();
    let scale = ctx.c_pt() * ctx.capture(rd)?;
    if !(scale > 0.0) {
        return Ok(MuQDensity { point_mass_at_zero: 1.0, continuous_density: 0.0 });
    }
    let continuous_density = if u > 0.0 {
        accept * gg_pdf_unchecked(u / scale, &ctx.turbulence) / scale
    } else {
        0.0
    };
    Ok(MuQDensity { point_mass_at_zero: ctx.fov.reject_prob(), continuous_density })
}

/// Linearised probability of at least one detected signal photon at displacement `rd`.
pub fn detect_prob_given_rd(rd: f64, ctx: &AnalyticContext) -> Result<f64> {
    Ok(ctx.c_pt() * ctx.fov.accept_prob() * ctx.capture(rd)?)
}

/// Detection probability with its quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectProb {
    pub value: f64,
    pub error: f64,
}

/// `P(n_q >= 1)` averaged over the Rayleigh displacement.
pub fn detect_prob(ctx: &AnalyticContext) -> Result<DetectProb> {
    let sigma = ctx.pointing.sigma_rd();
    let upper = RAYLEIGH_CUTOFF * sigma;
    let (wz, ra) = (ctx.wz(), ctx.ra());
    let mut pts = vec![0.0, sigma];
    pts.extend(
        [ra - wz, ra, ra + wz, ra + 4.0 * wz, ra + 9.0 * wz]
            .into_iter()
            .filter(|&p| p > sigma && p < upper),
    );
    pts.push(upper);
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    let scale = ctx.c_pt() * ctx.fov.accept_prob();
    if scale == 0.0 {
        return Ok(DetectProb { value: 0.0, error: 0.0 });
    }
    // Integrate the unit-scale capture average, then rescale.
    let failure = std::cell::Cell::new(None);
    let f = |r: f64| match ctx.capture(r) {
        Ok(v) => v * rayleigh_pdf(r, sigma),
        Err(e) => {
            failure.set(Some(e.to_string()));
            0.0
        }
    };
    let opts = QuadOptions { abs_tol: ctx.quad_tol, rel_tol: 0.0, max_intervals: 4000 };
    let r = integrate_breaks(f, &pts, opts)?;
    if let Some(what) = failure.take() {
        return Err(Error::Numeric { what, residual: f64::NAN });
    }
    Ok(DetectProb { value: scale * r.value, error: scale * r.error })
}

/// State probabilities `(p_s1, p_s2, p_s3)` from the detection probability and `mu_b`.
pub fn states_from(i: f64, mu_b: f64) -> (f64, f64, f64) {
    let e = (-mu_b).exp();
    (e * i, mu_b * e * (1.0 - i), 0.5 * mu_b * e * i)
}

/// `P(n_eff = 1)` from the detection probability and `mu_b`.
pub fn p_eff_one_from(i: f64, mu_b: f64) -> f64 {
    let e = (-mu_b).exp();
    mu_b * e + (e - 0.5 * mu_b * e) * i
}

/// QBER from the detection probability and `mu_b`; undefined without raw key.
pub fn qber_from(i: f64, mu_b: f64) -> Result<f64> {
    let p = p_eff_one_from(i, mu_b);
    if !(p > 0.0) {
        return Err(Error::UndefinedRate);
    }
    Ok(0.5 * states_from(i, mu_b).1 / p)
}

pub fn state_probs(ctx: &AnalyticContext) -> Result<(f64, f64, f64)> {
    Ok(states_from(detect_prob(ctx)?.value, ctx.mu_b))
}

pub fn p_eff_one(ctx: &AnalyticContext) -> Result<f64> {
    Ok(p_eff_one_from(detect_prob(ctx)?.value, ctx.mu_b))
}

/// Raw key rate in bits per second.
pub fn key_rate(ctx: &AnalyticContext) -> Result<f64> {
    Ok(ctx.r_q() * p_eff_one(ctx)?)
}

pub fn qber(ctx: &AnalyticContext) -> Result<f64> {
    qber_from(detect_prob(ctx)?.value, ctx.mu_b)
}

/// How a report was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    MonteCarlo,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::MonteCarlo => "monte_carlo",
        }
    }
}

/// Per-metric standard errors of a Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardErrors {
    pub p_detect: f64,
    pub p_s1: f64,
    pub p_s2: f64,
    pub p_s3: f64,
    pub p_eff_one: f64,
    pub key_rate: f64,
    pub qber: f64,
}

impl StandardErrors {
    /// 95% normal-approximation half-widths.
    pub fn ci_halfwidth(&self) -> StandardErrors {
        let z = 1.959_963_984_540_054;
        StandardErrors {
            p_detect: z * self.p_detect,
            p_s1: z * self.p_s1,
            p_s2: z * self.p_s2,
            p_s3: z * self.p_s3,
            p_eff_one: z * self.p_eff_one,
            key_rate: z * self.key_rate,
            qber: z * self.qber,
        }
    }
}

/// Link performance figures.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerformanceReport {
    pub p_detect: f64,
    pub p_s1: f64,
    pub p_s2: f64,
    pub p_s3: f64,
    pub p_eff_one: f64,
    /// Bits per second.
    pub key_rate: f64,
    /// `None` when no raw key is produced.
    pub qber: Option<f64>,
    pub method: Method,
    /// Monte Carlo standard errors.
    pub se: Option<StandardErrors>,
}

impl PerformanceReport {
    pub fn ci_halfwidth(&self) -> Option<StandardErrors> {
        self.se.map(|s| s.ci_halfwidth())
    }
}

/// Analytic report together with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticEvaluation {
    pub report: PerformanceReport,
    /// Quadrature error estimate of `p_detect`.
    pub p_detect_error: f64,
    pub linearization_warning: bool,
}

/// Evaluates every analytic figure for one context.
pub fn evaluate(ctx: &AnalyticContext) -> Result<AnalyticEvaluation> {
    let d = detect_prob(ctx)?;
    let (p_s1, p_s2, p_s3) = states_from(d.value, ctx.mu_b);
    let p_eff_one = p_eff_one_from(d.value, ctx.mu_b);
    let report = PerformanceReport {
        p_detect: d.value,
        p_s1,
        p_s2,
        p_s3,
        p_eff_one,
        key_rate: ctx.r_q() * p_eff_one,
        qber: qber_from(d.value, ctx.mu_b).ok(),
        method: Method::Analytic,
        se: None,
    };
    Ok(AnalyticEvaluation {
        report,
        p_detect_error: d.error,
        linearization_warning: ctx.linearization_warning(),
    })
}
