use fecap_core::montecarlo::{
    analytic_offset_yield, disturb_onset, read_window_sweep, run_yield, sweep_yield, Variability, YieldSetup,
    DEFAULT_READ_DURATION, WINDOW_READ_DURATION,
};
use fecap_core::MacroConfig;

fn grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + step * i as f64).collect()
}

#[test]
fn offset_only_yield_matches_gaussian_prediction() {
    let config = MacroConfig::default();
    let quiet = YieldSetup::new(config.clone()).with_variability(Variability {
        device: false,
        sense_amp: false,
    });
    let noisy = YieldSetup::new(config.clone()).with_variability(Variability {
        device: false,
        sense_amp: true,
    });
    let n = 200;
    for v_read in [0.075, 0.1] {
        let nominal = run_yield(&quiet, v_read, 1, 0).unwrap();
        let v_bl = nominal.bit1.mean_v_bl;
        let expected = analytic_offset_yield(
            v_bl,
            config.circuit.sa_threshold_mean,
            config.circuit.sa_offset_sigma * 1e-3,
            1,
        );
        let measured = run_yield(&noisy, v_read, n, 11).unwrap().yield_bit1();
        let half_width = 1.96 * (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (measured - expected).abs() <= half_width,
            "{v_read} V: measured {measured}, expected {expected} +- {half_width}"
        );
    }
}

#[test]
fn identical_seed_identical_report() {
    let setup = YieldSetup::new(MacroConfig::default());
    let a = run_yield(&setup, 0.1, 24, 5).unwrap();
    let b = run_yield(&setup, 0.1, 24, 5).unwrap();
    assert_eq!(a, b);
    let c = run_yield(&setup, 0.1, 24, 6).unwrap();
    assert_ne!(a.trials, c.trials);
}

#[test]
fn histograms_are_complete() {
    let report = run_yield(&YieldSetup::new(MacroConfig::default()), 0.1, 40, 2).unwrap();
    for stats in [&report.bit0, &report.bit1] {
        assert_eq!(stats.histogram.iter().map(|b| b.count).sum::<usize>(), 40);
        assert!(stats.histogram.windows(2).all(|w| w[0].lower_mv < w[1].lower_mv));
        assert!(stats.mean_v_bl.is_finite() && stats.sigma_v_bl.is_finite());
    }
}

#[test]
fn sweep_keeps_input_order_and_count() {
    let setup = YieldSetup::new(MacroConfig::default());
    let v = [0.25, 0.05, 0.15];
    let reports = sweep_yield(&setup, &v, 8, 3).unwrap();
    assert_eq!(reports.len(), 3);
    for (r, v) in reports.iter().zip(v) {
        assert_eq!(r.v_read, v);
    }
}

#[test]
fn small_reads_do_not_disturb() {
    let points = read_window_sweep(&MacroConfig::default(), &grid(-0.1, 0.1, 0.025), WINDOW_READ_DURATION).unwrap();
    for p in &points {
        assert!(!p.disturb_flag, "{p:?}");
    }
    let zero = points.iter().find(|p| p.v_read.abs() < 1e-12).unwrap();
    assert!((zero.v_bl_bit0 - 0.9).abs() < 1e-12 && (zero.v_bl_bit1 - 0.9).abs() < 1e-12);
}

#[test]
fn long_pulses_disturb_no_later_than_short_ones() {
    let config = MacroConfig::default();
    let v = grid(0.0, 0.8, 0.025);
    let long = disturb_onset(&read_window_sweep(&config, &v, WINDOW_READ_DURATION).unwrap());
    let short = disturb_onset(&read_window_sweep(&config, &v, DEFAULT_READ_DURATION).unwrap());
    let (long, short) = (long.expect("4 us onset"), short.expect("40 ns onset"));
    assert!(long <= short, "4 us onset {long} V, 40 ns onset {short} V");
}

#[test]
fn flag_persists_beyond_onset() {
    let points = read_window_sweep(&MacroConfig::default(), &grid(0.0, 1.0, 0.05), WINDOW_READ_DURATION).unwrap();
    let onset = disturb_onset(&points).expect("finite onset");
    assert!(points.iter().filter(|p| p.v_read >= onset).all(|p| p.disturb_flag));
}
