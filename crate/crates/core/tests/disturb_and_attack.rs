use fecap_core::montecarlo::Variability;
use fecap_core::security::{
    disturb_trajectory, run_attack, AttackScenario, MonitorAction, MonitorPolicy, DEFAULT_POPULATION, DISTURB_DURATION,
};
use fecap_core::MacroConfig;

fn nominal_macro() -> fecap_core::MacroState {
    let mut state = MacroConfig::default().nominal_macro().unwrap();
    state.program_reference(0.1).unwrap();
    state
}

#[test]
fn reads_erode_bit1_and_reinforce_bit0() {
    for (bit, v_read) in [(0u8, 0.3), (1, 0.3), (0, 0.1), (1, 0.1)] {
        let mut state = nominal_macro();
        state.write_bit(0, bit).unwrap();
        let mut last = state.cell(0).unwrap().polarization();
        let start = last;
        for _ in 0..50 {
            state.read_bit(0, v_read, DISTURB_DURATION).unwrap();
            let p = state.cell(0).unwrap().polarization();
            assert!(p <= last, "bit {bit} at {v_read} V: {last} -> {p}");
            last = p;
        }
        if bit == 0 {
            assert!((last - start).abs() < 1e-9);
        }
    }
}

#[test]
fn reading_one_word_line_leaves_others_alone() {
    let config = MacroConfig::default();
    let cell = fecap_core::HysteronEnsemble::nominal(&config.device).unwrap();
    let mut state = fecap_core::MacroState::new(
        vec![cell.clone(), cell.clone(), cell.clone()],
        cell,
        fecap_core::SenseAmpInstance::ideal(&config.circuit),
        config.circuit.clone(),
        config.device.clone(),
        config.protocol.clone(),
    )
    .unwrap();
    state.program_reference(0.1).unwrap();
    for wl in 0..3 {
        state.write_bit(wl, (wl % 2) as u8).unwrap();
    }
    let before = state.cells.clone();
    for _ in 0..10 {
        state.read_bit(1, 0.35, DISTURB_DURATION).unwrap();
    }
    assert_eq!(state.cells[0], before[0]);
    assert_eq!(state.cells[2], before[2]);
    assert_ne!(state.cells[1], before[1]);
}

#[test]
fn bit1_capacitance_never_rises_under_repeated_reads() {
    for v_read in [0.1, 0.25, 0.3, 0.35] {
        let trace = disturb_trajectory(&MacroConfig::default(), v_read, DISTURB_DURATION, 300).unwrap();
        for (i, pair) in trace.records.windows(2).enumerate() {
            assert!(pair[1].c_cell <= pair[0].c_cell, "{v_read} V, read {}", i + 2);
            assert!(pair[1].read_index == pair[0].read_index + 1);
        }
    }
}

#[test]
fn stable_amplitude_holds_capacitance() {
    let trace = disturb_trajectory(&MacroConfig::default(), 0.1, DISTURB_DURATION, 1000).unwrap();
    assert!(trace.relative_change().abs() < 0.01);
    assert_eq!(trace.first_flip(), None);
}

fn scenario(attacker: f64, population: usize, max_reads: usize) -> AttackScenario {
    AttackScenario {
        attacker_v_read: attacker,
        population,
        max_reads,
        ..AttackScenario::default()
    }
}

#[test]
fn blocking_monitor_reproduces_the_quiet_trajectory() {
    let config = MacroConfig::default();
    let mut attacked = scenario(0.35, 6, 200);
    attacked.monitor = Some(MonitorPolicy {
        v_read_band: (0.09, 0.11),
        action: MonitorAction::Block,
    });
    let quiet = scenario(0.1, 6, 200);
    let a = run_attack(&attacked, &config, 9).unwrap();
    let q = run_attack(&quiet, &config, 9).unwrap();
    assert!(a.detected && !q.detected);
    assert_eq!(a.yield_trajectory, q.yield_trajectory);
    assert_eq!(a.device_first_flips, q.device_first_flips);
    assert_eq!(a.final_polarizations, q.final_polarizations);
}

#[test]
fn nominal_reads_never_flip_the_median_device() {
    let mut quiet = scenario(0.1, 5, 1000);
    quiet.variability = Variability {
        device: true,
        sense_amp: false,
    };
    let report = run_attack(&quiet, &MacroConfig::default(), 4).unwrap();
    assert_eq!(report.reads_to_first_bitflip, None);
}

/// Known to fail at the top of the grid: once both the cell and the
/// reference are eroded, the sense-amplifier offset decides most reads and
/// the median device no longer flips within the read budget.
#[test]
fn higher_attack_amplitude_flips_no_later() {
    let config = MacroConfig::default();
    let reads: Vec<Option<usize>> = [0.3, 0.35, 0.4]
        .iter()
        .map(|&v| run_attack(&scenario(v, DEFAULT_POPULATION, 1000), &config, 1).unwrap().reads_to_first_bitflip)
        .collect();
    let as_count = |r: &Option<usize>| r.unwrap_or(usize::MAX);
    assert!(
        reads.windows(2).all(|w| as_count(&w[1]) <= as_count(&w[0])),
        "reads to first flip at 300/350/400 mV: {reads:?}"
    );
}
