//! Tour of the data model: the bundled four-region test system, what each
//! piece means, and what `grid::validate` catches before any solve.
//!
//!     cargo run --example validate_network

use gridflex::fixtures;
use gridflex::grid::{self, AggregatorProfile, Horizon};

fn main() {
    // A model is regions + interconnectors + a generator fleet + one demand
    // aggregator per region. The bundled system is a mainland-scale grid in
    // miniature: a north-to-south chain of four regions.
    let horizon = Horizon::new(24, 1.0);
    let traces = fixtures::synthetic_traces_for(fixtures::DEFAULT_SEED, 24);
    let aggregators: Vec<AggregatorProfile> = fixtures::REGION_IDS
        .iter()
        .map(|&r| AggregatorProfile::rigid(r, traces.demand[r].clone()))
        .collect();
    let model = fixtures::network(aggregators);

    println!("regions:");
    for region in &model.regions {
        println!("  {:4} {}", region.id, region.name);
    }

    println!("\ninterconnectors (MW limits, directed):");
    for line in &model.lines {
        println!(
            "  {} -> {:4} [{:>6.0}, {:>5.0}]  susceptance {:.0} MW/rad",
            line.from, line.to, line.flow_min, line.flow_max, line.susceptance
        );
    }

    println!("\ngenerator fleet (block-bid supply curves):");
    for g in &model.generators {
        let ladder: Vec<String> = g
            .blocks
            .iter()
            .map(|b| format!("{:.0} MW at ${:.2}", b.capacity, b.price))
            .collect();
        println!(
            "  {:6} {:4} {:10} {:>6.0} MW  [{}]",
            g.id,
            g.region,
            format!("{:?}", g.kind),
            g.p_max,
            ladder.join(", ")
        );
    }

    println!("\ndemand (rigid aggregators, one per region):");
    for agg in &model.aggregators {
        let peak = agg
            .inflexible_load
            .iter()
            .cloned()
            .fold(f64::MIN, f64::max);
        println!("  {:4} peak draw {:>7.0} MW", agg.region, peak);
    }

    // validate() returns the full list of structural violations; an empty
    // list is the precondition every other entry point assumes.
    let violations = grid::validate(&model, &horizon);
    assert!(violations.is_empty(), "fixture must be well-formed");
    println!("\nvalidate: ok, no violations");

    // Break the model on purpose to show the diagnostics: a bid ladder
    // that no longer sums to the unit's capacity, and a line referencing
    // a region that does not exist.
    let mut broken = model.clone();
    broken.generators[0].p_max += 500.0;
    broken.lines[0].to = "TAS".into();
    println!("\nafter corrupting the model, validate reports:");
    for v in grid::validate(&broken, &horizon) {
        println!("  - {v}");
    }
}
