//! Slot-level Monte Carlo simulation of the link.
//!
//! Slots are grouped into batches of [`BATCH_SLOTS`]. Batch `k` draws from
//! `ChaCha8Rng::seed_from_u64(seed)` on stream `k`, so results depend only on
//! `(seed, n_slots)` and never on the thread count.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::analytics::{AnalyticContext, CaptureMode, Method, PerformanceReport, StandardErrors};
use crate::beam::{CaptureGrid, CaptureTable};
use crate::channel::{FovModel, GammaGammaSampler, PointingModel};
use crate::error::{Error, Result};

/// Slots per batch (and per random stream).
pub const BATCH_SLOTS: u64 = 65_536;

/// Classification of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    NoBit,
    BitOk,
    BitError,
    /// Several photons, or a coexisting signal and background photon that
    /// did not yield a bit.
    DiscardedMulti,
}

/// Which single-count state produced a bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KeyState {
    /// Signal only.
    Signal,
    /// One background photon, no signal.
    Background,
    /// Signal with one background photon, kept.
    Coexisting,
}

/// Channel draws of one slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realizations {
    pub r_d: f64,
    pub eta_turb: f64,
    pub fov_accept: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotSample {
    pub n_t: u64,
    pub n_q: u64,
    pub n_b: u64,
    pub outcome: Outcome,
    pub state: Option<KeyState>,
    pub realizations: Realizations,
    /// Whether the per-photon survival probability was clamped at 1.
    pub clamped: bool,
}

#[derive(Debug, Clone)]
enum CaptureSource {
    Table(Arc<CaptureTable>),
    Grid(Arc<CaptureGrid>),
}

/// Sampling model derived from an [`AnalyticContext`].
#[derive(Debug, Clone)]
pub struct SlotModel {
    eta_det: f64,
    pointing: PointingModel,
    fov: FovModel,
    turbulence: GammaGammaSampler,
    capture: CaptureSource,
    mode: CaptureMode,
    /// Draws skipped by the channel switches.
    fixed_pointing: bool,
    fixed_turbulence: bool,
    fixed_fov: bool,
    signal: Option<Poisson<f64>>,
    background: Option<Poisson<f64>>,
}

fn poisson(mean: f64) -> Result<Option<Poisson<f64>>> {
    if mean == 0.0 {
        return Ok(None);
    }
    Poisson::new(mean)
        .map(Some)
        .map_err(|e| Error::domain(format!("Poisson mean {mean:e}: {e}")))
}

impl SlotModel {
    /// Model using tabulated exact capture.
    pub fn new(ctx: &AnalyticContext) -> Result<Self> {
        Self::with_capture(ctx, CaptureMode::Exact)
    }

    /// Model with an explicit capture evaluator (`Exact` or `Grid`).
    pub fn with_capture(ctx: &AnalyticContext, mode: CaptureMode) -> Result<Self> {
        let capture = match mode {
            CaptureMode::Exact => CaptureSource::Table(Arc::new(CaptureTable::new(ctx.wz(), ctx.ra())?)),
            CaptureMode::Grid => CaptureSource::Grid(Arc::clone(ctx.grid())),
            CaptureMode::Classical => {
                return Err(Error::domain("Monte Carlo supports exact or grid capture only"))
            }
        };
        Ok(SlotModel {
            eta_det: ctx.eta_atm() * ctx.mu_d(),
            pointing: *ctx.pointing(),
            fov: *ctx.fov(),
            turbulence: GammaGammaSampler::new(ctx.turbulence()),
            capture,
            mode,
            fixed_pointing: false,
            fixed_turbulence: false,
            fixed_fov: false,
            signal: poisson(ctx.mu_t())?,
            background: poisson(ctx.mu_b())?,
        })
    }

    /// Fixes `r_d = 0`, `eta_turb = 1` and FoV acceptance, leaving pure Poisson thinning.
    pub fn without_channel_randomness(mut self) -> Self {
        self.fixed_pointing = true;
        self.fixed_turbulence = true;
        self.fixed_fov = true;
        self
    }

    pub fn capture_mode(&self) -> CaptureMode {
        self.mode
    }

    fn capture(&self, rd: f64) -> f64 {
        match &self.capture {
            CaptureSource::Table(t) => t.eval(rd),
            CaptureSource::Grid(g) => g.capture(rd).clamp(0.0, 1.0),
        }
    }
}

/// Simulates one slot.
pub fn simulate_slot<R: Rng + ?Sized>(rng: &mut R, model: &SlotModel) -> SlotSample {
    let n_t = model.signal.map_or(0, |p| p.sample(rng) as u64);
    let r_d = if model.fixed_pointing { 0.0 } else { model.pointing.sample_displacement(rng) };
    let eta_turb = if model.fixed_turbulence { 1.0 } else { model.turbulence.sample(rng) };
    let fov_accept = model.fixed_fov || model.fov.sample_accept(rng);
    let raw = model.eta_det * model.capture(r_d) * eta_turb;
    let clamped = raw > 1.0;
    let survive = if fov_accept { raw.min(1.0) } else { 0.0 };
    let n_q = if survive > 0.0 { (0..n_t).filter(|_| rng.random::<f64>() < survive).count() as u64 } else { 0 };
    let n_b = model.background.map_or(0, |p| p.sample(rng) as u64);

    let (outcome, state) = match (n_q, n_b) {
        (0, 0) => (Outcome::NoBit, None),
        (_, 0) => (Outcome::BitOk, Some(KeyState::Signal)),
        (0, 1) => {
            let wrong = rng.random::<bool>();
            (if wrong { Outcome::BitError } else { Outcome::BitOk }, Some(KeyState::Background))
        }
        (_, 1) => {
            if rng.random::<bool>() {
                (Outcome::BitOk, Some(KeyState::Coexisting))
            } else {
                (Outcome::DiscardedMulti, None)
            }
        }
        _ => (Outcome::DiscardedMulti, None),
    };
    SlotSample {
        n_t,
        n_q,
        n_b,
        outcome,
        state,
        realizations: Realizations { r_d, eta_turb, fov_accept },
        clamped,
    }
}

/// Integer slot counts; summing tallies is exact and order-free.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Tally {
    pub slots: u64,
    pub detected: u64,
    pub s1: u64,
    pub s2: u64,
    pub s3: u64,
    pub bit_ok: u64,
    pub bit_error: u64,
    pub discarded: u64,
    pub clamped: u64,
}

impl Tally {
    fn add(&mut self, s: &SlotSample) {
        self.slots += 1;
        self.detected += (s.n_q >= 1) as u64;
        match s.state {
            Some(KeyState::Signal) => self.s1 += 1,
            Some(KeyState::Background) => self.s2 += 1,
            Some(KeyState::Coexisting) => self.s3 += 1,
            None => {}
        }
        match s.outcome {
            Outcome::BitOk => self.bit_ok += 1,
            Outcome::BitError => self.bit_error += 1,
            Outcome::DiscardedMulti => self.discarded += 1,
            Outcome::NoBit => {}
        }
        self.clamped += s.clamped as u64;
    }

    fn merge(mut self, o: &Tally) -> Tally {
        self.slots += o.slots;
        self.detected += o.detected;
        self.s1 += o.s1;
        self.s2 += o.s2;
        self.s3 += o.s3;
        self.bit_ok += o.bit_ok;
        self.bit_error += o.bit_error;
        self.discarded += o.discarded;
        self.clamped += o.clamped;
        self
    }

    pub fn bits(&self) -> u64 {
        self.bit_ok + self.bit_error
    }
}

/// Result of a Monte Carlo run.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub n_slots: u64,
    pub seed: u64,
    pub batch_slots: u64,
    pub capture_mode: CaptureMode,
    pub tally: Tally,
    pub report: PerformanceReport,
}

impl McReport {
    /// Fraction of slots whose survival probability hit the clamp at 1.
    pub fn clamp_rate(&self) -> f64 {
        self.tally.clamped as f64 / self.n_slots as f64
    }
}

fn run_batch(model: &SlotModel, seed: u64, batch: u64, slots: u64) -> Tally {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(batch);
    let mut t = Tally::default();
    for _ in 0..slots {
        t.add(&simulate_slot(&mut rng, model));
    }
    t
}

/// Runs `n_slots` slots on the current rayon pool.
pub fn run_model(model: &SlotModel, r_q: f64, n_slots: u64, seed: u64) -> Result<McReport> {
    if n_slots == 0 {
        return Err(Error::domain("Monte Carlo needs at least one slot"));
    }
    let batches = n_slots.div_ceil(BATCH_SLOTS);
    let parts: Vec<Tally> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let slots = BATCH_SLOTS.min(n_slots - b * BATCH_SLOTS);
            run_batch(model, seed, b, slots)
        })
        .collect();
    let tally = parts.iter().fold(Tally::default(), |a, t| a.merge(t));
    Ok(McReport {
        n_slots,
        seed,
        batch_slots: BATCH_SLOTS,
        capture_mode: model.mode,
        tally,
        report: estimates(&tally, r_q),
    })
}

/// Runs with exact capture on the current rayon pool.
pub fn run(ctx: &AnalyticContext, n_slots: u64, seed: u64) -> Result<McReport> {
    run_model(&SlotModel::new(ctx)?, ctx.r_q(), n_slots, seed)
}

/// Same as [`run`] on a dedicated pool of `threads` workers.
pub fn run_with_threads(ctx: &AnalyticContext, n_slots: u64, seed: u64, threads: usize) -> Result<McReport> {
    let model = SlotModel::new(ctx)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    pool.install(|| run_model(&model, ctx.r_q(), n_slots, seed))
}

fn binomial(k: u64, n: u64) -> (f64, f64) {
    let p = k as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

fn estimates(t: &Tally, r_q: f64) -> PerformanceReport {
    let n = t.slots;
    let (p_detect, se_detect) = binomial(t.detected, n);
    let (p_s1, se1) = binomial(t.s1, n);
    let (p_s2, se2) = binomial(t.s2, n);
    let (p_s3, se3) = binomial(t.s3, n);
    let (p_eff, se_eff) = binomial(t.bits(), n);
    let (qber, se_q) = if t.bits() > 0 { binomial(t.bit_error, t.bits()) } else { (f64::NAN, f64::NAN) };
    let qber = (t.bits() > 0).then_some(qber);
    PerformanceReport {
        p_detect,
        p_s1,
        p_s2,
        p_s3,
        p_eff_one: p_eff,
        key_rate: r_q * p_eff,
        qber,
        method: Method::MonteCarlo,
        se: Some(StandardErrors {
            p_detect: se_detect,
            p_s1: se1,
            p_s2: se2,
            p_s3: se3,
            p_eff_one: se_eff,
            key_rate: r_q * se_eff,
            qber: if qber.is_some() { se_q } else { 0.0 },
        }),
    }
}
