//! Sizing the aggregate batteries: find each region's highest charging cap
//! whose implied state of charge stays inside the fleet's energy window,
//! together with the round-trip loss that cap produces.
//!
//! Two searches nest here. The outer one raises the cap step by step and
//! keeps the last value whose reconstructed state of charge fit the
//! window. The inner one is a fixed point: guess the day's charging loss,
//! dispatch with the guess folded into the demand-side energy budget, read
//! the implied battery schedule, recompute the loss, and nudge the guess
//! up until recomputation stops exceeding it.
//!
//!     cargo run --example calibrate_storage

use gridflex::fixtures::{self, Uptake};
use gridflex::scenario::{standard_substitutions, DrMode, ScenarioSpec, TraceSource};
use gridflex::storage::CalibrationConfig;

fn main() {
    // Calibration works on a representative day of a scenario. This spec
    // is the medium-uptake anticipator study with default search knobs:
    // the cap grid alpha defaults to 1% of each region's peak responsive
    // load, the loss increment beta to 0.5% of its daily responsive
    // energy, so small regions get proportionally fine searches.
    let spec = ScenarioSpec {
        name: "PADR2".into(),
        dr_mode: DrMode::Anticipator,
        uptake: Some(Uptake::Medium),
        substitutions: standard_substitutions(),
        csp_shift: 12,
        traces: TraceSource::Synthetic {
            seed: fixtures::DEFAULT_SEED,
        },
        days: Some(vec![20]),
        calibration_days: Some(vec![20]),
        calibration: CalibrationConfig::default(),
        loadability_region: "QLD".into(),
        loadability_step: 100.0,
    };

    let calibration = gridflex::scenario::calibrate_only(&spec)
        .expect("calibration should run")
        .expect("DR scenarios calibrate");

    println!("region  cap (MW)  loss (MWh/day)  steps  window use");
    for (region, c) in &calibration.aggregators {
        let row = fixtures::uptake_row(region, Uptake::Medium).unwrap();
        let hi = c.soc_trajectory.iter().cloned().fold(f64::MIN, f64::max);
        let lo = c.soc_trajectory.iter().cloned().fold(f64::MAX, f64::min);
        println!(
            "  {:4} {:>8.0} {:>15.0} {:>6} {:>9}",
            region,
            c.charge_cap,
            c.battery_loss,
            c.iterations,
            format!(
                "{:.0}-{:.0}%",
                100.0 * (lo - row.soc_min) / (row.soc_max - row.soc_min),
                100.0 * (hi - row.soc_min) / (row.soc_max - row.soc_min),
            ),
        );
        assert!(c.converged, "{region}: next cap step was never refuted");
        assert!(lo >= row.soc_min - 1e-6 && hi <= row.soc_max + 1e-6);
    }

    // The caps follow overnight arithmetic. Each day starts at the middle
    // of the energy window, charging concentrates in the cheap pre-dawn
    // hours, and the cap search stops once filling the remaining headroom
    // at full rate would spill over the top. The ratio below is therefore
    // roughly the length of each region's cheap charging run; regions with
    // overnight wind sustain longer, gentler runs.
    println!("\nheadroom above the starting level, in hours at the cap:");
    for (region, c) in &calibration.aggregators {
        let row = fixtures::uptake_row(region, Uptake::Medium).unwrap();
        let headroom = 0.5 * (row.soc_max - row.soc_min);
        println!("  {:4} {:>5.1}", region, headroom / c.charge_cap);
    }
}
