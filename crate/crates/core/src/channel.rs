//! Atmospheric, turbulence, pointing, field-of-view and background models.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};
use crate::special::{ln_bessel_k, ln_gamma};

/// Planck constant (J s).
pub const PLANCK_H: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J s).
pub const PLANCK_HBAR: f64 = PLANCK_H / (2.0 * PI);
/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Beer–Lambert transmittance `exp(-alpha_a Lz)`.
pub fn atm_transmittance(alpha_a: f64, lz: f64) -> Result<f64> {
    if !(alpha_a >= 0.0) || !(lz > 0.0) {
        return Err(Error::domain(format!(
            "transmittance needs alpha_a >= 0 and Lz > 0 (got {alpha_a:e}, {lz:e})"
        )));
    }
    Ok((-alpha_a * lz).exp())
}

/// Gamma-Gamma turbulence parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Turbulence {
    pub alpha: f64,
    pub beta: f64,
}

impl Turbulence {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() {
            Ok(Turbulence { alpha, beta })
        } else {
            Err(Error::domain(format!(
                "Gamma-Gamma parameters must be > 0 (got {alpha}, {beta})"
            )))
        }
    }

    /// Variance of the unit-mean irradiance, `(1 + 1/alpha)(1 + 1/beta) - 1`.
    pub fn scintillation_index(&self) -> f64 {
        (1.0 + 1.0 / self.alpha) * (1.0 + 1.0 / self.beta) - 1.0
    }

    fn ln_norm(&self) -> f64 {
        let (a, b) = (self.alpha, self.beta);
        std::f64::consts::LN_2 + 0.5 * (a + b) * (a * b).ln() - ln_gamma(a) - ln_gamma(b)
    }
}

/// Deterministic channel parameters and background radiance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Direct transmittance; takes precedence over `alpha_a`.
    pub eta_atm: Option<f64>,
    /// Attenuation coefficient (1/m).
    pub alpha_a: Option<f64>,
    pub turbulence: Turbulence,
    /// Background spectral radiance (W/m^2/sr/nm).
    pub b_lambda: f64,
}

impl ChannelParams {
    /// Resolved atmospheric transmittance over `lz`.
    pub fn transmittance(&self, lz: f64) -> Result<f64> {
        let eta = match (self.eta_atm, self.alpha_a) {
            (Some(eta), _) => eta,
            (None, Some(alpha_a)) => atm_transmittance(alpha_a, lz)?,
            (None, None) => return Err(Error::domain("neither eta_atm nor alpha_a given")),
        };
        if eta > 0.0 && eta <= 1.0 {
            Ok(eta)
        } else {
            Err(Error::domain(format!("eta_atm must be in (0, 1] (got {eta})")))
        }
    }
}

/// Gamma-Gamma density of the turbulence-induced transmittance.
pub fn gg_pdf(eta: f64, alpha: f64, beta: f64) -> Result<f64> {
    if !(eta > 0.0) {
        return Err(Error::domain(format!("Gamma-Gamma density needs eta > 0 (got {eta:e})")));
    }
    let t = Turbulence::new(alpha, beta)?;
    Ok(gg_pdf_unchecked(eta, &t))
}

pub(crate) fn gg_pdf_unchecked(eta: f64, t: &Turbulence) -> f64 {
    let (a, b) = (t.alpha, t.beta);
    let arg = 2.0 * (a * b * eta).sqrt();
    let ln = t.ln_norm() + (0.5 * (a + b) - 1.0) * eta.ln() + ln_bessel_k(a - b, arg);
    ln.exp()
}

/// Gamma-Gamma CDF by quadrature of [`gg_pdf`].
pub fn gg_cdf(eta: f64, alpha: f64, beta: f64) -> Result<f64> {
    let t = Turbulence::new(alpha, beta)?;
    if eta <= 0.0 {
        return Ok(0.0);
    }
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: 4000 };
    let r = integrate(|x| if x > 0.0 { gg_pdf_unchecked(x, &t) } else { 0.0 }, 0.0, eta, opts)?;
    Ok(r.value.min(1.0))
}

/// `int_0^inf eta^k f(eta) d eta` by quadrature.
pub fn gg_moment(k: i32, alpha: f64, beta: f64) -> Result<f64> {
    let t = Turbulence::new(alpha, beta)?;
    let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 1e-12, max_intervals: 4000 };
    let f = |x: f64| if x > 0.0 { x.powi(k) * gg_pdf_unchecked(x, &t) } else { 0.0 };
    let head = integrate(f, 0.0, 1.0, opts)?;
    let tail = integrate_to_infinity(f, 1.0, 2.0, opts)?;
    Ok(head.value + tail.value)
}

/// Samples of the Gamma-Gamma law as the product of two unit-mean Gamma variates.
#[derive(Debug, Clone, Copy)]
pub struct GammaGammaSampler {
    small: Gamma<f64>,
    large: Gamma<f64>,
}

impl GammaGammaSampler {
    pub fn new(t: Turbulence) -> Self {
        GammaGammaSampler {
            small: Gamma::new(t.alpha, 1.0 / t.alpha).expect("alpha > 0"),
            large: Gamma::new(t.beta, 1.0 / t.beta).expect("beta > 0"),
        }
    }
}

impl Distribution<f64> for GammaGammaSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.small.sample(rng) * self.large.sample(rng)
    }
}

/// One Gamma-Gamma draw.
pub fn gg_sample<R: Rng + ?Sized>(rng: &mut R, alpha: f64, beta: f64) -> Result<f64> {
    Ok(GammaGammaSampler::new(Turbulence::new(alpha, beta)?).sample(rng))
}

/// Transmitter pointing jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointingModel {
    sigma_theta_e: f64,
    sigma_rd: f64,
}

impl PointingModel {
    pub fn new(sigma_theta_e: f64, lz: f64) -> Result<Self> {
        if !(sigma_theta_e > 0.0) || !(lz > 0.0) {
            return Err(Error::domain("pointing model needs sigma_theta_e > 0 and Lz > 0"));
        }
        Ok(PointingModel { sigma_theta_e, sigma_rd: sigma_theta_e * lz })
    }
    pub fn sigma_theta_e(&self) -> f64 {
        self.sigma_theta_e
    }
    /// Lateral displacement standard deviation per axis (m).
    pub fn sigma_rd(&self) -> f64 {
        self.sigma_rd
    }

    /// `|r_d|` from two independent Gaussian axes.
    pub fn sample_displacement<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let gx: f64 = rng.sample(StandardNormal);
        let gy: f64 = rng.sample(StandardNormal);
        self.sigma_rd * gx.hypot(gy)
    }
}

/// Rayleigh density of `|r_d|`.
pub fn rayleigh_pdf(r: f64, sigma_rd: f64) -> f64 {
    if r < 0.0 {
        return 0.0;
    }
    let s2 = sigma_rd * sigma_rd;
    r / s2 * (-r * r / (2.0 * s2)).exp()
}

pub fn rayleigh_cdf(r: f64, sigma_rd: f64) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    -(-r * r / (2.0 * sigma_rd * sigma_rd)).exp_m1()
}

/// Probability that a bivariate Gaussian AoA falls inside the acceptance cone.
pub fn fov_accept_prob(theta_fov: f64, sigma_aoa: f64) -> f64 {
    -(-theta_fov * theta_fov / (2.0 * sigma_aoa * sigma_aoa)).exp_m1()
}

/// Half-angle and solid-angle field of view of a fibre-coupled lens.
pub fn fov_geometry(r_f: f64, l_f: f64) -> (f64, f64) {
    let theta = (r_f / l_f).atan();
    (theta, solid_angle(theta))
}

/// `2 pi (1 - cos theta)`, computed without cancellation.
pub fn solid_angle(theta_fov: f64) -> f64 {
    let s = (0.5 * theta_fov).sin();
    4.0 * PI * s * s
}

/// Receiver field of view and angle-of-arrival jitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovModel {
    pub r_f: Option<f64>,
    pub l_f: Option<f64>,
    theta_fov: f64,
    sigma_aoa: f64,
}

impl FovModel {
    /// FoV set by the fibre core and focal length.
    pub fn from_optics(r_f: f64, l_f: f64, sigma_aoa: f64) -> Result<Self> {
        if !(r_f > 0.0) || !(l_f > 0.0) {
            return Err(Error::domain("fibre radius and focal length must be > 0"));
        }
        let (theta, _) = fov_geometry(r_f, l_f);
        Self::checked(Some(r_f), Some(l_f), theta, sigma_aoa)
    }

    /// FoV half-angle given directly.
    pub fn with_half_angle(theta_fov: f64, sigma_aoa: f64) -> Result<Self> {
        Self::checked(None, None, theta_fov, sigma_aoa)
    }

    fn checked(r_f: Option<f64>, l_f: Option<f64>, theta_fov: f64, sigma_aoa: f64) -> Result<Self> {
        if !(theta_fov > 0.0) || !(sigma_aoa > 0.0) {
            return Err(Error::domain(format!(
                "FoV model needs theta_fov > 0 and sigma_aoa > 0 (got {theta_fov:e}, {sigma_aoa:e})"
            )));
        }
        Ok(FovModel { r_f, l_f, theta_fov, sigma_aoa })
    }

    pub fn theta_fov(&self) -> f64 {
        self.theta_fov
    }
    pub fn sigma_aoa(&self) -> f64 {
        self.sigma_aoa
    }
    pub fn solid_angle(&self) -> f64 {
        solid_angle(self.theta_fov)
    }
    pub fn accept_prob(&self) -> f64 {
        fov_accept_prob(self.theta_fov, self.sigma_aoa)
    }
    /// `1 - accept_prob()`, computed directly.
    pub fn reject_prob(&self) -> f64 {
        (-self.theta_fov * self.theta_fov / (2.0 * self.sigma_aoa * self.sigma_aoa)).exp()
    }

    /// Draws an AoA pair and applies the `|theta_AoA| <= theta_FOV` test.
    pub fn sample_accept<R: Rng + ?Sized>(&self, rng: &mut R) -> bool {
        let tx: f64 = rng.sample(StandardNormal);
        let ty: f64 = rng.sample(StandardNormal);
        self.sigma_aoa * tx.hypot(ty) <= self.theta_fov
    }
}

/// Which constant divides `c / lambda` in the photon energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyConvention {
    /// `E = h c / lambda`.
    #[default]
    PlanckH,
    /// `E = hbar c / lambda`, the form printed in the original background formula.
    PlanckHbar,
}

impl EnergyConvention {
    pub fn photon_energy(self, lambda: f64) -> f64 {
        let h = match self {
            EnergyConvention::PlanckH => PLANCK_H,
            EnergyConvention::PlanckHbar => PLANCK_HBAR,
        };
        h * SPEED_OF_LIGHT / lambda
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EnergyConvention::PlanckH => "planck_h",
            EnergyConvention::PlanckHbar => "planck_hbar",
        }
    }
}

/// Mean background photon count per slot.
///
/// `b_lambda` in W/m^2/sr/nm and `delta_lambda_nm` in nm; everything else SI.
pub fn background_mean(
    b_lambda: f64,
    a_r: f64,
    omega_fov: f64,
    delta_lambda_nm: f64,
    t_qs: f64,
    lambda: f64,
    convention: EnergyConvention,
) -> f64 {
    b_lambda * a_r * omega_fov * delta_lambda_nm * t_qs / convention.photon_energy(lambda)
}

/// Geometry and optics entering the background count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundModel {
    pub a_r: f64,
    pub omega_fov: f64,
    pub delta_lambda_nm: f64,
    pub t_qs: f64,
    pub lambda: f64,
    pub energy_convention: EnergyConvention,
}

impl BackgroundModel {
    pub fn mean(&self, b_lambda: f64) -> f64 {
        background_mean(
            b_lambda,
            self.a_r,
            self.omega_fov,
            self.delta_lambda_nm,
            self.t_qs,
            self.lambda,
            self.energy_convention,
        )
    }
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic of `samples` against `cdf`.
/// Sorts `samples` in place.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    samples
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical value at significance `alpha` for `n` samples.
pub fn ks_critical(alpha: f64, n: usize) -> f64 {
    (-(0.5 * alpha).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// Gamma-Gamma CDF evaluated at every element of an ascending slice, by
/// integrating the density between consecutive points.
pub fn gg_cdf_sorted(points: &[f64], t: Turbulence) -> Result<Vec<f64>> {
    let opts = QuadOptions { abs_tol: 1e-13, rel_tol: 0.0, max_intervals: 2000 };
    let f = |x: f64| if x > 0.0 { gg_pdf_unchecked(x, &t) } else { 0.0 };
    let mut acc = 0.0;
    let mut prev = 0.0;
    let mut out = Vec::with_capacity(points.len());
    for &p in points {
        if p > prev {
            acc += integrate(f, prev, p, opts)?.value;
            prev = p;
        }
        out.push(acc.min(1.0));
    }
    Ok(out)
}
