//! One day of economic dispatch, twice: first with every megawatt of
//! demand rigid, then with one region's households allowed to shift their
//! flexible share. Shows how to build a problem, read prices and flows off
//! the solution, and what the demand-side coupling does to a load profile.
//!
//!     cargo run --example dispatch_day

use gridflex::dispatch::{solve, DispatchProblem};
use gridflex::fixtures::{self, Uptake};
use gridflex::grid::{AggregatorProfile, Horizon, StorageParams};

fn main() {
    let horizon = Horizon::new(24, 1.0);
    let day = 20;
    let traces = fixtures::synthetic_traces_for(fixtures::DEFAULT_SEED, 24 * (day + 1));
    let slice = |series: &[f64]| series[day * 24..(day + 1) * 24].to_vec();

    // --- Pass 1: all demand rigid -----------------------------------------
    let aggregators: Vec<AggregatorProfile> = fixtures::REGION_IDS
        .iter()
        .map(|&r| AggregatorProfile::rigid(r, slice(&traces.demand[r])))
        .collect();
    let rigid = DispatchProblem::new(fixtures::network(aggregators), horizon.clone());
    let base = solve(&rigid).unwrap();

    println!("rigid dispatch cost: ${:.0}", base.objective);
    let peak_hour = (0..24)
        .max_by(|&a, &b| {
            base.system_demand(a)
                .partial_cmp(&base.system_demand(b))
                .unwrap()
        })
        .unwrap();
    println!(
        "system peak {:.0} MW at hour {peak_hour}",
        base.system_demand(peak_hour)
    );

    println!("\nnodal prices at the peak hour ($/MWh):");
    for (r, region) in base.regions.iter().enumerate() {
        println!("  {:4} {:>7.2}", region, base.nodal_price[r][peak_hour]);
    }

    println!("\ninterconnector flows at the peak hour (MW, from -> to):");
    for (l, (from, to)) in base.lines.iter().enumerate() {
        println!("  {from} -> {to:4} {:>8.1}", base.line_flows[l][peak_hour]);
    }

    // Slacks exist so every instance is feasible, but a healthy fleet
    // never uses them.
    let unserved: f64 = base.unserved.iter().flatten().sum();
    let spill: f64 = base.spill.iter().flatten().sum();
    println!("\nunserved {unserved:.3} MW, spill {spill:.3} MW across all hours");

    // --- Pass 2: NSW households become flexible ---------------------------
    // 60% of the region's demand comes from users with rooftop PV and a
    // shared battery. Their grid draw becomes a decision variable bounded
    // by the charging cap, tied to a day-energy budget. The cap is
    // hand-set here; the calibrate_storage example shows how to size it.
    let row = fixtures::uptake_row("NSW", Uptake::Medium).unwrap();
    let aggregators: Vec<AggregatorProfile> = fixtures::REGION_IDS
        .iter()
        .map(|&r| {
            if r != "NSW" {
                return AggregatorProfile::rigid(r, slice(&traces.demand[r]));
            }
            let demand = slice(&traces.demand[r]);
            AggregatorProfile {
                region: r.into(),
                inflexible_load: demand
                    .iter()
                    .map(|d| (1.0 - fixtures::RESPONSIVE_SHARE) * d)
                    .collect(),
                responsive_load: demand
                    .iter()
                    .map(|d| fixtures::RESPONSIVE_SHARE * d)
                    .collect(),
                pv: slice(&traces.solar[r])
                    .iter()
                    .map(|s| s * row.pv_capacity)
                    .collect(),
                storage: StorageParams::midpoint(
                    row.soc_min,
                    row.soc_max,
                    fixtures::BATTERY_EFFICIENCY,
                ),
                flex_min: vec![0.0; 24],
                charge_cap: 650.0,
            }
        })
        .collect();
    let flexible = DispatchProblem::new(fixtures::network(aggregators), horizon);
    let flex = solve(&flexible).unwrap();

    println!("\nflexible dispatch cost: ${:.0}", flex.objective);
    println!(
        "saving from demand response: ${:.0}",
        base.objective - flex.objective
    );

    // nett_demand is what the region pulls from the grid; battery_power is
    // the implied charge (+) / discharge (-) behind the meter.
    println!("\nNSW hour by hour (MW):");
    println!("  hour   rigid draw    flex draw      battery");
    for h in 0..24 {
        let rigid_draw = base.nett_demand("NSW", h).unwrap();
        let flex_draw = flex.nett_demand("NSW", h).unwrap();
        let battery = flex.battery_power("NSW", h).unwrap();
        println!("  {h:>4} {rigid_draw:>12.0} {flex_draw:>12.0} {battery:>12.1}");
    }

    let budget: f64 = (0..24)
        .map(|h| flex.battery_power("NSW", h).unwrap())
        .sum();
    println!(
        "\nbattery power sums to {budget:.6} MWh over the day — the energy \
         budget keeps the users whole (round-trip losses enter once the \
         storage is calibrated)"
    );
}
