//! Column sets for the figure families.

use qlink_core::analytics::{evaluate, AnalyticContext, CaptureMode};
use qlink_core::beam::{build_grid, capture_classical, capture_exact, GridCache};
use qlink_core::emit::{Cell, Table};
use qlink_core::sweep::{sweep, Engine, SweepAxis, SweepSpec};
use qlink_core::{Error, LinkConfig, Result};

pub enum PlotError {
    Unknown(String),
    Model(Error),
}

impl From<Error> for PlotError {
    fn from(e: Error) -> Self {
        PlotError::Model(e)
    }
}

/// Exact, grid and wide-beam capture over `points` displacements in `[0, rd_max]`.
pub fn capture_comparison(cfg: &LinkConfig, wz: &[f64], rd_max: f64, points: usize) -> Result<Table> {
    let mut t = Table::new(["wz", "rd", "exact", "grid", "classical", "classical_valid", "grid_abs_error"]);
    for &w in wz {
        let grid = build_grid(cfg.ra, w, cfg.ng)?;
        for rd in SweepSpec::linspace(0.0, rd_max, points) {
            let exact = capture_exact(rd, w, cfg.ra)?;
            let g = grid.capture(rd);
            let c = capture_classical(rd, w, cfg.ra);
            t.push(vec![
                w.into(),
                rd.into(),
                exact.into(),
                g.into(),
                c.value.into(),
                c.valid.into(),
                (g - exact).abs().into(),
            ]);
        }
    }
    Ok(t)
}

fn figure_sweep(
    cfg: &LinkConfig,
    axis: SweepAxis,
    values: Vec<f64>,
    overlay: SweepAxis,
    overlay_values: Vec<f64>,
    with_classical: bool,
) -> Result<Table> {
    let spec = SweepSpec::new(axis, values)?.with_overlay(overlay, overlay_values)?.with_engine(Engine::Both);
    let res = sweep(cfg, &spec)?;
    let mut cols = vec![axis.name(), overlay.name(), "p_detect", "key_rate_bps", "qber"];
    if with_classical {
        cols.push("p_detect_classical");
    }
    cols.extend(["p_detect_mc", "key_rate_bps_mc", "qber_mc"]);
    let mut t = Table::new(cols);
    let cache = GridCache::new();
    for pair in res.rows.chunks(2) {
        let (a, m) = (&pair[0], &pair[1]);
        let mut row: Vec<Cell> = vec![
            a.axis_value.into(),
            a.overlay_value.into(),
            a.report.p_detect.into(),
            a.report.key_rate.into(),
            a.report.qber.into(),
        ];
        if with_classical {
            let mut c = cfg.clone();
            axis.apply(&mut c, a.axis_value);
            if let Some(ov) = a.overlay_value {
                overlay.apply(&mut c, ov);
            }
            let ctx = AnalyticContext::new(&c, &cache)?.with_capture_mode(CaptureMode::Classical);
            row.push(evaluate(&ctx)?.report.p_detect.into());
        }
        row.extend([m.report.p_detect.into(), m.report.key_rate.into(), m.report.qber.into()]);
        t.push(row);
    }
    Ok(t)
}

/// Data of one figure family, on top of `base`.
pub fn figure(base: &LinkConfig, name: &str) -> std::result::Result<Table, PlotError> {
    let urad = |v: &[f64]| v.iter().map(|x| x * 1e-6).collect::<Vec<_>>();
    let wz = SweepSpec::linspace(0.05, 1.0, 40);
    let theta = SweepSpec::linspace(5e-6, 200e-6, 40);
    let table = match name.to_ascii_lowercase().as_str() {
        "fig2" => capture_comparison(base, &[0.05, 0.10], 0.2, 50)?,
        "fig3" => figure_sweep(base, SweepAxis::Wz, wz, SweepAxis::SigmaThetaE, urad(&[50.0, 150.0]), true)?,
        "fig4" => {
            let cfg = LinkConfig { sigma_aoa: 50e-6, b_lambda: 1e-6, ..base.clone() };
            figure_sweep(&cfg, SweepAxis::Wz, wz, SweepAxis::SigmaThetaE, urad(&[50.0, 200.0, 2000.0]), false)?
        }
        "fig5" => {
            let cfg = LinkConfig { sigma_theta_e: 100e-6, b_lambda: 1e-6, ..base.clone() };
            figure_sweep(&cfg, SweepAxis::ThetaFov, theta, SweepAxis::SigmaAoa, urad(&[50.0, 100.0, 200.0]), false)?
        }
        "fig6" => {
            let cfg = LinkConfig { sigma_theta_e: 100e-6, sigma_aoa: 50e-6, ..base.clone() };
            figure_sweep(&cfg, SweepAxis::ThetaFov, theta, SweepAxis::BLambda, vec![1e-6, 1e-5, 1e-4], false)?
        }
        other => return Err(PlotError::Unknown(other.to_string())),
    };
    Ok(table)
}
