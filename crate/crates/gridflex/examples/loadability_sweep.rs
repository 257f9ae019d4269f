//! How much extra demand one region could take before the network gives
//! out. For every hour of a solved day, the sweep grows the target
//! region's load step by step — local generators pick it up first, the
//! rest of the system backs them up — and checks DC feasibility against
//! line limits after each step. The margin is the total system demand at
//! the last feasible step.
//!
//!     cargo run --example loadability_sweep

use gridflex::analysis::loadability;
use gridflex::dispatch::{solve, DispatchProblem};
use gridflex::fixtures;
use gridflex::grid::{AggregatorProfile, Horizon};

fn main() {
    let day = 20;
    let traces = fixtures::synthetic_traces_for(fixtures::DEFAULT_SEED, 24 * (day + 1));
    let aggregators: Vec<AggregatorProfile> = fixtures::REGION_IDS
        .iter()
        .map(|&r| {
            AggregatorProfile::rigid(r, traces.demand[r][day * 24..(day + 1) * 24].to_vec())
        })
        .collect();
    let model = fixtures::network(aggregators);
    let problem = DispatchProblem::new(model.clone(), Horizon::new(24, 1.0));
    let solution = solve(&problem).unwrap();

    let result = loadability(&model, &solution, "QLD", 50.0).unwrap();
    println!(
        "QLD loadability, 50 MW probe steps: average {:.0} MW ({:.2} GW)",
        result.average,
        result.average / 1e3
    );

    // Loadable demand tracks available supply, so it crests with the solar
    // fleet at midday; what matters operationally is the headroom left
    // after the hour's own demand is netted off.
    let headroom = |h: usize| result.per_hour[h] - solution.system_demand(h);
    let tightest = (0..24)
        .min_by(|&a, &b| headroom(a).partial_cmp(&headroom(b)).unwrap())
        .unwrap();
    let loosest = (0..24)
        .max_by(|&a, &b| headroom(a).partial_cmp(&headroom(b)).unwrap())
        .unwrap();
    println!("\nhour  system demand  loadable demand  headroom");
    for h in 0..24 {
        let tag = if h == tightest {
            "  <- tightest"
        } else if h == loosest {
            "  <- loosest"
        } else {
            ""
        };
        println!(
            "  {h:>2} {:>13.0} {:>16.0} {:>9.0}{tag}",
            solution.system_demand(h),
            result.per_hour[h],
            headroom(h)
        );
    }

    // The margin is a network property as much as a fleet property:
    // squeeze the two lines into QLD and the loadable demand drops with
    // them, hour for hour.
    let mut squeezed_model = model.clone();
    for line in &mut squeezed_model.lines {
        if line.from == "NSW" && line.to == "QLD" {
            line.flow_max *= 0.5;
            line.flow_min *= 0.5;
        }
    }
    let squeezed = loadability(&squeezed_model, &solution, "QLD", 50.0).unwrap();
    println!(
        "\nhalving the NSW->QLD import limit: average {:.0} MW -> {:.0} MW",
        result.average, squeezed.average
    );
    for h in 0..24 {
        assert!(
            squeezed.per_hour[h] <= result.per_hour[h] + 1e-9,
            "tightening a line must never raise the margin"
        );
    }

    // Sweeping a small region instead: the limit binds sooner because the
    // local fleet is thin and every increment leans on imports.
    let sa = loadability(&model, &solution, "SA", 50.0).unwrap();
    println!(
        "sweeping SA instead of QLD: average {:.0} MW ({:.2} GW)",
        sa.average,
        sa.average / 1e3
    );
}
