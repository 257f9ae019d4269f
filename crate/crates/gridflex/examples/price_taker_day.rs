//! Price-anticipating vs price-taking demand response on the same day.
//!
//! The anticipator model co-optimizes flexible demand inside the dispatch,
//! as if users could foresee their own price impact. The taker model runs
//! a three-stage pipeline instead: dispatch once with flexibility disabled,
//! post the resulting prices, let every aggregator independently re-time
//! its draw against them (cheapest hours first), then re-dispatch with
//! those draws frozen to see what physically happens.
//!
//! Takers herd: facing the same posted curve, they all vacate the few
//! expensive hours and fill every other hour to the rim of their
//! flexibility, so the re-dispatched system swings far harder than the
//! profile the prices were computed from. The anticipator spreads the
//! same energy out because it accounts for its own price impact.
//!
//!     cargo run --example price_taker_day

use gridflex::dispatch::{solve, DispatchProblem};
use gridflex::fixtures::{self, Uptake};
use gridflex::grid::{AggregatorProfile, Horizon, StorageParams};
use gridflex::storage::{calibrate_charge_cap, CalibrationConfig};
use gridflex::taker::{run_price_taker, PriceMode};

/// Medium-uptake flexible aggregators in every region for one day.
fn day_problem(day: usize) -> DispatchProblem {
    let traces = fixtures::synthetic_traces_for(fixtures::DEFAULT_SEED, 24 * (day + 1));
    let slice = |series: &[f64]| series[day * 24..(day + 1) * 24].to_vec();
    let aggregators: Vec<AggregatorProfile> = fixtures::REGION_IDS
        .iter()
        .map(|&r| {
            let row = fixtures::uptake_row(r, Uptake::Medium).unwrap();
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
                charge_cap: 0.0,
            }
        })
        .collect();
    DispatchProblem::new(fixtures::network(aggregators), Horizon::new(24, 1.0))
}

fn main() {
    let template = day_problem(20);

    // Both models need calibrated charging caps and losses. The default
    // search grid is 1% of each region's peak responsive load, fine enough
    // that every region lands on a meaningful cap.
    let calibration = calibrate_charge_cap(&template, &CalibrationConfig::default()).unwrap();
    let mut problem = template;
    calibration.apply_to(&mut problem);

    let anticipator = solve(&problem).unwrap();
    let taker = run_price_taker(&problem, PriceMode::Nodal).unwrap();

    println!("dispatch cost:");
    println!("  anticipator ${:>12.0}", anticipator.objective);
    println!("  taker       ${:>12.0}", taker.dispatch.objective);
    println!(
        "  anticipation is worth ${:.0} on this day",
        taker.dispatch.objective - anticipator.objective
    );

    // The posted signal is what takers react to — the baseline's prices,
    // not the prices their reaction will create.
    let nsw_signal = taker.signal.price("NSW").unwrap();
    let posted_max = nsw_signal.iter().cloned().fold(f64::MIN, f64::max);
    let dodged: Vec<usize> = (0..24)
        .filter(|&h| nsw_signal[h] > posted_max - 1e-9)
        .collect();
    println!(
        "\nposted prices (NSW): min ${:.2}, max ${:.2} across hours {dodged:?}",
        nsw_signal.iter().cloned().fold(f64::MAX, f64::min),
        posted_max,
    );

    // Herding, taker style: everyone dodges the posted-price peak and fills
    // the rest of the day to the rim of their box, so the system swings
    // where the anticipator holds it flat.
    let system = |sol: &gridflex::dispatch::DispatchSolution, h: usize| sol.system_demand(h);
    let swing = |sol: &gridflex::dispatch::DispatchSolution| {
        let draws = (0..24).map(|h| system(sol, h));
        (
            draws.clone().fold(f64::MAX, f64::min),
            draws.fold(f64::MIN, f64::max),
        )
    };
    let peak_hour = (0..24)
        .max_by(|&a, &b| {
            system(&taker.dispatch, a)
                .partial_cmp(&system(&taker.dispatch, b))
                .unwrap()
        })
        .unwrap();
    let (a_min, a_max) = swing(&anticipator);
    let (t_min, t_max) = swing(&taker.dispatch);
    println!("\nsystem draw (MW):");
    println!("  anticipator swings {a_min:>6.0}..{a_max:>6.0}");
    println!("  taker       swings {t_min:>6.0}..{t_max:>6.0}, peaking at hour {peak_hour}");

    // The shoulder hour the herd landed on was priced as unremarkable; the
    // re-dispatch shows what their arrival did to it.
    let nsw = taker
        .dispatch
        .regions
        .iter()
        .position(|r| r == "NSW")
        .unwrap();
    println!(
        "  NSW price at hour {peak_hour}: posted ${:.2}, realized ${:.2}",
        nsw_signal[peak_hour],
        taker.dispatch.nodal_price[nsw][peak_hour],
    );

    // Count region-hours pinned at the charging cap: takers sit flat at
    // their caps for most of the day, the anticipator tapers off.
    let cap_hours = |sol: &gridflex::dispatch::DispatchSolution| {
        fixtures::REGION_IDS
            .iter()
            .filter(|&&r| calibration.aggregators[r].charge_cap > 0.0)
            .flat_map(|&r| (0..24).map(move |h| (r, h)))
            .filter(|&(r, h)| {
                let cap = calibration.aggregators[r].charge_cap;
                sol.battery_power(r, h).unwrap() > 0.95 * cap
            })
            .count()
    };
    println!(
        "\nregion-hours charging at >95% of cap: anticipator {}, taker {}",
        cap_hours(&anticipator),
        cap_hours(&taker.dispatch),
    );

    // Frozen draws can leave physical imbalances for the slacks. Takers
    // occasionally need backup; the anticipator never does.
    let unserved = |sol: &gridflex::dispatch::DispatchSolution| -> f64 {
        sol.unserved.iter().flatten().sum()
    };
    println!(
        "\nunserved energy: anticipator {:.1} MWh, taker {:.1} MWh",
        unserved(&anticipator),
        unserved(&taker.dispatch),
    );
}
