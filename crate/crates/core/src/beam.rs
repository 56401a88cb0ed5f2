//! Gaussian beam geometry and photon-capture probability.
//!
//! Three evaluators of the probability `mu_p` that a photon lands inside a
//! circular aperture of radius `ra` when the beam centre is displaced by `rd`:
//!
//! * [`capture_exact`]: adaptive quadrature of the one-dimensional erf form
//!   of the aperture integral.
//! * [`capture_classical`]: the wide-beam formula `2 ra^2 / wz^2 exp(-2 rd^2 / wz^2)`,
//!   valid only when `wz >> ra`.
//! * [`CaptureGrid`]: the segment-sum approximation with `Ng` midpoint strips.
//!
//! All displacements are scalar: the aperture is rotationally symmetric, so
//! only `|r_d|` matters.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_breaks, Integral, QuadOptions};
use crate::special::erf;

/// Absolute tolerance used by [`capture_exact`].
pub const CAPTURE_ABS_TOL: f64 = 1e-9;

/// Beam radius `w(Lz) = w0 sqrt(1 + (lambda Lz / (pi w0^2))^2)` at distance `lz`.
pub fn beam_radius(w0: f64, lambda: f64, lz: f64) -> Result<f64> {
    if !(w0 > 0.0) || !(lambda > 0.0) || !(lz >= 0.0) || !lz.is_finite() {
        return Err(Error::domain(format!(
            "beam_radius needs w0 > 0, lambda > 0, Lz >= 0 (got {w0:e}, {lambda:e}, {lz:e})"
        )));
    }
    let t = lambda * lz / (PI * w0 * w0);
    Ok(w0 * (1.0 + t * t).sqrt())
}

/// Beam geometry at the receiver plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamGeometry {
    w0: Option<f64>,
    wz: f64,
    lambda: f64,
    lz: f64,
}

impl BeamGeometry {
    /// Geometry from the transmitter waist; `wz` follows from propagation.
    pub fn from_waist(w0: f64, lambda: f64, lz: f64) -> Result<Self> {
        let wz = beam_radius(w0, lambda, lz)?;
        Self::check(wz, lambda, lz)?;
        Ok(BeamGeometry { w0: Some(w0), wz, lambda, lz })
    }

    /// Geometry with the receiver-plane radius given directly.
    pub fn from_receiver_radius(wz: f64, lambda: f64, lz: f64) -> Result<Self> {
        Self::check(wz, lambda, lz)?;
        Ok(BeamGeometry { w0: None, wz, lambda, lz })
    }

    fn check(wz: f64, lambda: f64, lz: f64) -> Result<()> {
        if wz > 0.0 && lambda > 0.0 && lz > 0.0 && wz.is_finite() && lz.is_finite() {
            Ok(())
        } else {
            Err(Error::domain("beam geometry needs wz, lambda, Lz > 0"))
        }
    }

    pub fn w0(&self) -> Option<f64> {
        self.w0
    }
    pub fn wz(&self) -> f64 {
        self.wz
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn lz(&self) -> f64 {
        self.lz
    }
}

/// Receiver aperture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApertureSpec {
    ra: f64,
}

impl ApertureSpec {
    pub fn new(ra: f64) -> Result<Self> {
        if ra > 0.0 && ra.is_finite() {
            Ok(ApertureSpec { ra })
        } else {
            Err(Error::domain(format!("aperture radius must be > 0 (got {ra:e})")))
        }
    }
    pub fn radius(&self) -> f64 {
        self.ra
    }
    pub fn area(&self) -> f64 {
        PI * self.ra * self.ra
    }
}

/// Transverse photon probability density of a Gaussian beam centred at `rd`.
pub fn photon_density(x: f64, y: f64, wz: f64, rd: (f64, f64)) -> f64 {
    let dx = x - rd.0;
    let dy = y - rd.1;
    2.0 / (PI * wz * wz) * (-2.0 * (dx * dx + dy * dy) / (wz * wz)).exp()
}

fn check_capture_args(rd: f64, wz: f64, ra: f64) -> Result<()> {
    if !(wz > 0.0) || !(ra > 0.0) || !(rd >= 0.0) || !rd.is_finite() {
        return Err(Error::domain(format!(
            "capture needs wz > 0, ra > 0, rd >= 0 (got rd={rd:e}, wz={wz:e}, ra={ra:e})"
        )));
    }
    Ok(())
}

/// Exact capture probability by quadrature, with the adaptive error estimate.
///
/// The erf form is integrated in `x = ra sin(phi)`, which removes the square-root
/// behaviour at the aperture rim.
pub fn capture_exact_with(rd: f64, wz: f64, ra: f64, opts: QuadOptions) -> Result<Integral> {
    check_capture_args(rd, wz, ra)?;
    // Beyond ~40 beam radii from the rim the integrand underflows.
    if rd > ra + 40.0 * wz {
        return Ok(Integral { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let k = 2.0 / (wz * wz);
    let root_k = k.sqrt();
    let pref = 2.0 / ((2.0 * PI).sqrt() * wz) * ra;
    let f = |phi: f64| {
        let (s, c) = phi.sin_cos();
        let c = c.max(0.0);
        let d = ra * s - rd;
        pref * (-k * d * d).exp() * erf(root_k * ra * c) * c
    };
    let peak = (rd / ra).min(1.0).asin();
    let mut pts = vec![-FRAC_PI_2];
    if peak < FRAC_PI_2 {
        pts.push(peak);
    }
    pts.push(FRAC_PI_2);
    let mut r = integrate_breaks(f, &pts, opts)?;
    r.value = r.value.clamp(0.0, 1.0);
    Ok(r)
}

/// Exact capture probability `mu_p(rd)` to absolute tolerance [`CAPTURE_ABS_TOL`].
pub fn capture_exact(rd: f64, wz: f64, ra: f64) -> Result<f64> {
    capture_exact_with(rd, wz, ra, QuadOptions::abs(CAPTURE_ABS_TOL)).map(|r| r.value)
}

/// Closed form of the centred-beam capture probability.
pub fn capture_centered(wz: f64, ra: f64) -> f64 {
    -(-2.0 * ra * ra / (wz * wz)).exp_m1()
}

/// Wide-beam capture value together with a flag telling whether the
/// approximation is in its validity regime (`wz >= 4 ra`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalCapture {
    /// Unclamped value; exceeds 1 for narrow beams.
    pub value: f64,
    pub valid: bool,
}

pub fn capture_classical(rd: f64, wz: f64, ra: f64) -> ClassicalCapture {
    let value = 2.0 * ra * ra / (wz * wz) * (-2.0 * rd * rd / (wz * wz)).exp();
    ClassicalCapture { value, valid: wz >= 4.0 * ra }
}

/// Segment centres and weights of the grid capture approximation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureGrid {
    ng: usize,
    dx: f64,
    ra: f64,
    wz: f64,
    centers: Vec<f64>,
    weights: Vec<f64>,
}

/// Grid capture value and whether it overshot unity by more than `1e-6`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCapture {
    pub value: f64,
    pub exceeds_unity: bool,
}

/// Builds the `ng`-segment grid over `[-ra, ra]` for beam radius `wz`.
pub fn build_grid(ra: f64, wz: f64, ng: usize) -> Result<CaptureGrid> {
    if ng < 2 {
        return Err(Error::domain(format!("grid needs at least 2 segments (got {ng})")));
    }
    if !(ra > 0.0) || !(wz > 0.0) {
        return Err(Error::domain("grid needs ra > 0 and wz > 0"));
    }
    let dx = 2.0 * ra / ng as f64;
    let scale = 2.0 * dx / ((2.0 * PI).sqrt() * wz);
    let root_k = (2.0 / (wz * wz)).sqrt();
    let mut centers = Vec::with_capacity(ng);
    let mut weights = Vec::with_capacity(ng);
    for i in 0..ng {
        // Midpoint of segment i, mirrored so the grid is exactly symmetric.
        let j = ng - 1 - i;
        let x = if i == j {
            0.0
        } else if i < j {
            -ra + dx * (i as f64 + 0.5)
        } else {
            ra - dx * (j as f64 + 0.5)
        };
        let half_chord = (ra * ra - x * x).max(0.0).sqrt();
        centers.push(x);
        weights.push(scale * erf(root_k * half_chord));
    }
    Ok(CaptureGrid { ng, dx, ra, wz, centers, weights })
}

impl CaptureGrid {
    pub fn segments(&self) -> usize {
        self.ng
    }
    pub fn dx(&self) -> f64 {
        self.dx
    }
    pub fn ra(&self) -> f64 {
        self.ra
    }
    pub fn wz(&self) -> f64 {
        self.wz
    }
    pub fn centers(&self) -> &[f64] {
        &self.centers
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `sum_i c_i exp(-2 (x_i - rd)^2 / wz^2)`, unclamped.
    pub fn capture(&self, rd: f64) -> f64 {
        let k = 2.0 / (self.wz * self.wz);
        self.centers
            .iter()
            .zip(&self.weights)
            .map(|(&x, &c)| {
                let d = x - rd;
                c * (-k * d * d).exp()
            })
            .sum()
    }
}

/// Grid capture probability; `wz` must be the radius the grid was built for.
pub fn capture_grid(grid: &CaptureGrid, rd: f64, wz: f64) -> Result<GridCapture> {
    if (wz - grid.wz).abs() > 1e-12 * grid.wz {
        return Err(Error::domain(format!(
            "grid built for wz = {:e}, evaluated with wz = {wz:e}",
            grid.wz
        )));
    }
    let value = grid.capture(rd);
    Ok(GridCapture { value, exceeds_unity: value > 1.0 + 1e-6 })
}

/// Cache of grids keyed by `(ra, wz, Ng)`.
#[derive(Debug, Default)]
pub struct GridCache {
    grids: Mutex<HashMap<(u64, u64, usize), Arc<CaptureGrid>>>,
}

impl GridCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, ra: f64, wz: f64, ng: usize) -> Result<Arc<CaptureGrid>> {
        let key = (ra.to_bits(), wz.to_bits(), ng);
        if let Some(g) = self.grids.lock().expect("grid cache poisoned").get(&key) {
            return Ok(Arc::clone(g));
        }
        let grid = Arc::new(build_grid(ra, wz, ng)?);
        self.grids
            .lock()
            .expect("grid cache poisoned")
            .entry(key)
            .or_insert_with(|| Arc::clone(&grid));
        Ok(grid)
    }

    pub fn len(&self) -> usize {
        self.grids.lock().expect("grid cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Tabulated [`capture_exact`] for fast repeated lookup, with four-point
/// Lagrange interpolation. Zero past `ra + 9 wz`, where `mu_p < 1e-35`.
#[derive(Debug, Clone)]
pub struct CaptureTable {
    step: f64,
    r_max: f64,
    values: Vec<f64>,
}

impl CaptureTable {
    pub const INTERVALS: usize = 2048;

    pub fn new(wz: f64, ra: f64) -> Result<Self> {
        let r_max = ra + 9.0 * wz;
        let step = r_max / Self::INTERVALS as f64;
        let opts = QuadOptions { abs_tol: 1e-12, rel_tol: 0.0, max_intervals: 2000 };
        let values = (0..=Self::INTERVALS + 2)
            .map(|i| capture_exact_with(i as f64 * step, wz, ra, opts).map(|r| r.value))
            .collect::<Result<Vec<_>>>()?;
        Ok(CaptureTable { step, r_max, values })
    }

    pub fn eval(&self, rd: f64) -> f64 {
        if rd >= self.r_max {
            return 0.0;
        }
        let t = rd / self.step;
        let i = (t as usize).clamp(1, Self::INTERVALS - 1);
        let u = t - i as f64;
        let (p0, p1, p2, p3) = (
            self.values[i - 1],
            self.values[i],
            self.values[i + 1],
            self.values[i + 2],
        );
        // Lagrange cubic through nodes -1, 0, 1, 2
        let v = -p0 * u * (u - 1.0) * (u - 2.0) / 6.0
            + p1 * (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0
            - p2 * (u + 1.0) * u * (u - 2.0) / 2.0
            + p3 * (u + 1.0) * u * (u - 1.0) / 6.0;
        v.clamp(0.0, 1.0)
    }
}
