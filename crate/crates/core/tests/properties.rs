use proptest::prelude::*;

use qlink_core::analytics::{detect_prob, evaluate, p_eff_one_from, qber_from, states_from, AnalyticContext};
use qlink_core::beam::{beam_radius, build_grid, capture_centered, capture_exact, GridCache};
use qlink_core::channel::{
    background_mean, fov_accept_prob, solid_angle, EnergyConvention, FovModel, PointingModel,
};
use qlink_core::emit::{parse_csv, parse_json, to_csv, to_json, Cell, Table};
use qlink_core::montecarlo::run_with_threads;
use qlink_core::LinkConfig;

#[derive(Debug, Clone)]
struct Link {
    wz: f64,
    sigma_theta_e: f64,
    sigma_aoa: f64,
    theta_fov: f64,
    b_lambda: f64,
    mu_t: f64,
    eta_atm: f64,
    mu_d: f64,
    alpha: f64,
    beta: f64,
}

impl Link {
    fn config(&self) -> LinkConfig {
        LinkConfig {
            wz: self.wz,
            sigma_theta_e: self.sigma_theta_e,
            sigma_aoa: self.sigma_aoa,
            theta_fov: Some(self.theta_fov),
            b_lambda: self.b_lambda,
            mu_t: self.mu_t,
            eta_atm: Some(self.eta_atm),
            mu_d: self.mu_d,
            alpha: self.alpha,
            beta: self.beta,
            ..LinkConfig::default()
        }
    }
}

fn link() -> impl Strategy<Value = Link> {
    (
        (0.05f64..1.0, 5e-6f64..2e-3, 5e-6f64..2e-4, 5e-6f64..2e-4, 0.0f64..1e-4),
        (0.1f64..1.0, 0.4f64..1.0, 0.1f64..1.0, 1.1f64..8.0, 1.1f64..8.0),
    )
        .prop_map(|((wz, ste, aoa, theta, b), (mu_t, eta, mu_d, alpha, beta))| Link {
            wz,
            sigma_theta_e: ste,
            sigma_aoa: aoa,
            theta_fov: theta,
            b_lambda: b,
            mu_t,
            eta_atm: eta,
            mu_d,
            alpha,
            beta,
        })
}

fn ctx(cfg: &LinkConfig) -> AnalyticContext {
    AnalyticContext::new(cfg, &GridCache::new()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exact_capture_bounded_and_non_increasing(wz in 0.01f64..2.0, ra in 0.02f64..1.0) {
        let mut prev = f64::INFINITY;
        for k in 0..=24 {
            let rd = 3.0 * ra * k as f64 / 24.0;
            let v = capture_exact(rd, wz, ra).unwrap();
            prop_assert!((0.0..=1.0 + 1e-6).contains(&v));
            prop_assert!(v <= prev + 1e-12, "rd={rd} {v} > {prev}");
            prev = v;
        }
    }

    #[test]
    fn grid_capture_non_increasing(wz in 0.02f64..2.0, ra in 0.02f64..1.0, extra in 0usize..40) {
        // Coarse segments relative to wz leave separate lobes, so the grid must resolve wz.
        let ng = (8.0 * ra / wz).ceil().max(2.0) as usize + extra;
        let g = build_grid(ra, wz, ng).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..=24 {
            let v = g.capture(3.0 * ra * k as f64 / 24.0);
            prop_assert!(v >= 0.0);
            prop_assert!(v <= prev + 1e-12);
            prev = v;
        }
    }

    #[test]
    fn centered_capture_oracle(wz in 0.005f64..5.0, ra in 0.015f64..1.5) {
        let want = -(-2.0 * ra * ra / (wz * wz)).exp_m1();
        prop_assert!((capture_exact(0.0, wz, ra).unwrap() - want).abs() < 1e-9);
        prop_assert!((capture_centered(wz, ra) - want).abs() < 1e-15);
    }

    #[test]
    fn grid_structure(ra in 0.015f64..1.5, ratio in 0.05f64..20.0, ng in 2usize..300) {
        let wz = ra * ratio;
        let g = build_grid(ra, wz, ng).unwrap();
        prop_assert_eq!(g.centers().len(), ng);
        prop_assert_eq!(g.weights().len(), ng);
        prop_assert!((g.dx() - 2.0 * ra / ng as f64).abs() <= 4.0 * f64::EPSILON * ra);
        for i in 0..ng {
            prop_assert!(g.weights()[i] > 0.0);
            prop_assert_eq!(g.centers()[i], -g.centers()[ng - 1 - i]);
            prop_assert!((g.weights()[i] - g.weights()[ng - 1 - i]).abs() <= 1e-15);
            if i > 0 {
                prop_assert!(g.centers()[i] > g.centers()[i - 1]);
            }
        }
        // The weights form a sub-unit mass only once the beam is wider than the aperture.
        if wz >= 2.0 * ra {
            prop_assert!(g.weights().iter().sum::<f64>() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn waist_propagation(w0 in 1e-3f64..0.1, lz in 100.0f64..1e4, lambda in 5e-7f64..2e-6) {
        let wz = beam_radius(w0, lambda, lz).unwrap();
        let zr = std::f64::consts::PI * w0 * w0 / lambda;
        let want = w0 * (1.0 + (lz / zr).powi(2)).sqrt();
        prop_assert!(((wz - want) / want).abs() < 1e-12);
    }

    #[test]
    fn fov_monotone(s in 5e-6f64..1e-3, r in 0.01f64..5.0, dr in 1e-6f64..1.0, ds in 1e-6f64..1.0) {
        let t1 = r * s;
        let (dt, ds) = (dr * t1, ds * s);
        prop_assert!(fov_accept_prob(t1 + dt, s) > fov_accept_prob(t1, s));
        prop_assert!(fov_accept_prob(t1, s + ds) < fov_accept_prob(t1, s));
    }

    #[test]
    fn fov_optics_and_solid_angle(r_f in 5e-7f64..5e-5, l_f in 0.015f64..1.5, aoa in 5e-6f64..2e-3) {
        let f = FovModel::from_optics(r_f, l_f, aoa).unwrap();
        prop_assert!((f.theta_fov() - (r_f / l_f).atan()).abs() <= 1e-12 * f.theta_fov());
        let t2 = f.theta_fov().powi(2);
        let cap = std::f64::consts::PI * t2 * (1.0 - t2 / 12.0 + t2 * t2 / 360.0);
        prop_assert!((solid_angle(f.theta_fov()) - cap).abs() <= 1e-12 * cap);
        prop_assert!((f.accept_prob() + f.reject_prob() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn background_linear_in_radiance(b in 0.0f64..1e-3, k in 0.0f64..100.0) {
        let (ar, omega, dl, t, lambda) = (0.0707, 1e-9, 1.0, 1e-8, 1.55e-6);
        let one = background_mean(b, ar, omega, dl, t, lambda, EnergyConvention::PlanckH);
        let scaled = background_mean(k * b, ar, omega, dl, t, lambda, EnergyConvention::PlanckH);
        prop_assert!((scaled - k * one).abs() <= 1e-12 * scaled.abs().max(1e-300));
        prop_assert!(one >= 0.0);
    }

    #[test]
    fn pointing_scale(ste in 5e-6f64..2e-2, lz in 100.0f64..1e4) {
        let p = PointingModel::new(ste, lz).unwrap();
        prop_assert!((p.sigma_rd() - ste * lz).abs() <= 1e-12 * ste * lz);
    }

    #[test]
    fn state_decomposition(i in 0.0f64..1.0, mu_b in 0.0f64..10.0) {
        let (s1, s2, s3) = states_from(i, mu_b);
        let p = p_eff_one_from(i, mu_b);
        prop_assert!((s1 + s2 + s3 - p).abs() <= 1e-15);
        prop_assert!(s1 + s2 + s3 <= 1.0 + 1e-15);
        if p > 0.0 {
            let q = qber_from(i, mu_b).unwrap();
            prop_assert!((0.0..=0.5).contains(&q));
        }
    }

    #[test]
    fn json_and_csv_round_trip(values in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..40)) {
        let mut t = Table::new(["x", "tag", "flag"]);
        for (k, v) in values.iter().enumerate() {
            let tag: Cell = if k % 3 == 0 { Cell::Empty } else { "row".into() };
            t.push(vec![(*v).into(), tag, (k % 2 == 0).into()]);
        }
        let back = parse_json(&to_json(&t)).unwrap();
        prop_assert_eq!(&back.columns, &t.columns);
        for (a, b) in t.rows.iter().flatten().zip(back.rows.iter().flatten()) {
            match (a, b) {
                (Cell::Num(x), Cell::Num(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                _ => prop_assert_eq!(a, b),
            }
        }
        let back = parse_csv(&to_csv(&t)).unwrap();
        for (a, b) in t.rows.iter().flatten().zip(back.rows.iter().flatten()) {
            match (a, b) {
                (Cell::Num(x), Cell::Num(y)) => prop_assert_eq!(x.to_bits(), y.to_bits()),
                _ => prop_assert_eq!(a, b),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn grid_converges_along_doubling(wz in 0.03f64..1.5) {
        let ra = 0.15;
        let err = |ng| {
            let g = build_grid(ra, wz, ng).unwrap();
            (0..=60)
                .map(|k| {
                    let rd = 2.0 * ra * k as f64 / 60.0;
                    (g.capture(rd) - capture_exact(rd, wz, ra).unwrap()).abs()
                })
                .fold(0.0, f64::max)
        };
        let errs: Vec<f64> = [5usize, 10, 20, 40, 80].iter().map(|&n| err(n)).collect();
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-12, "{errs:?}");
        }
    }

    #[test]
    fn report_invariants(l in link()) {
        let c = ctx(&l.config());
        prop_assert!((c.c_pt() - l.mu_t * l.eta_atm * l.mu_d).abs() <= 1e-12 * c.c_pt());
        prop_assert!(c.c_pt() > 0.0 && c.c_pt() <= 1.0);
        prop_assert!((c.r_q() * c.t_qs() - 1.0).abs() < 1e-12);
        let r = evaluate(&c).unwrap().report;
        for p in [r.p_detect, r.p_s1, r.p_s2, r.p_s3, r.p_eff_one] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        prop_assert!(r.p_s1 + r.p_s2 + r.p_s3 <= 1.0 + 1e-15);
        prop_assert!((r.p_s1 + r.p_s2 + r.p_s3 - r.p_eff_one).abs() <= 1e-15);
        prop_assert!((r.key_rate - c.r_q() * r.p_eff_one).abs() <= 1e-12 * r.key_rate.max(1e-300));
        let q = r.qber.unwrap();
        prop_assert!((0.0..=0.5).contains(&q), "qber {q}");
    }

    #[test]
    fn fov_ratio_invariance(l in link(), k in 0.2f64..5.0) {
        let mut a = l.config();
        let mut b = a.clone();
        b.theta_fov = Some(l.theta_fov * k);
        b.sigma_aoa = l.sigma_aoa * k;
        a.mu_b = Some(1e-3);
        b.mu_b = Some(1e-3);
        let (ra, rb) = (evaluate(&ctx(&a)).unwrap().report, evaluate(&ctx(&b)).unwrap().report);
        prop_assert!((ra.p_detect - rb.p_detect).abs() <= 1e-10 * ra.p_detect.max(1e-300));
        prop_assert!((ra.key_rate - rb.key_rate).abs() <= 1e-10 * ra.key_rate.max(1e-300));
    }

    #[test]
    fn detection_falls_with_jitter(l in link()) {
        let mut prev = f64::INFINITY;
        for ste in [10e-6, 30e-6, 100e-6, 300e-6, 1e-3] {
            let cfg = LinkConfig { sigma_theta_e: ste, ..l.config() };
            let p = detect_prob(&ctx(&cfg)).unwrap().value;
            prop_assert!(p < prev, "sigma {ste}: {p} >= {prev}");
            prev = p;
        }
    }

    #[test]
    fn tolerance_halving_within_estimate(l in link()) {
        let c = ctx(&l.config()).with_quad_tol(1e-10);
        let coarse = detect_prob(&c).unwrap();
        let fine = detect_prob(&c.clone().with_quad_tol(5e-11)).unwrap();
        prop_assert!((coarse.value - fine.value).abs() <= coarse.error.max(1e-15));
    }

    #[test]
    fn config_dump_round_trip(l in link(), seed in any::<u64>(), slots in 1u64..10_000_000_000) {
        let cfg = LinkConfig { seed, mc_slots: slots, ..l.config() };
        let back = LinkConfig::parse(&cfg.dump()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn mc_independent_of_thread_count(l in link(), n in 1u64..150_000, seed in any::<u64>()) {
        let c = ctx(&l.config());
        let one = run_with_threads(&c, n, seed, 1).unwrap();
        let three = run_with_threads(&c, n, seed, 3).unwrap();
        prop_assert_eq!(one.tally, three.tally);
        let r = one.report;
        for p in [r.p_detect, r.p_s1, r.p_s2, r.p_s3, r.p_eff_one] {
            prop_assert!((0.0..=1.0).contains(&p));
        }
        let se = r.se.unwrap();
        let want = (r.p_detect * (1.0 - r.p_detect) / n as f64).sqrt();
        prop_assert!((se.p_detect - want).abs() <= 1e-15);
    }
}
