//! The full eight-scenario study in miniature: a rigid baseline, a
//! centrally scheduled variant, and three uptake tiers each of
//! price-anticipating and price-taking demand response, all compared on
//! the same balancing table.
//!
//! Every simulated day is persisted as it completes, so a second run over
//! the same output directory resumes instead of recomputing. This example
//! runs the batch twice to show both paths. Delete the directory named
//! below to start fresh.
//!
//!     cargo run --example run_scenarios

use std::path::PathBuf;
use std::time::Instant;

use gridflex::report::render_table_txt;
use gridflex::scenario::{run_batch, standard_scenarios, RunOptions};

fn main() {
    // A midsummer week instead of the full year, and calibration sampled
    // on the window's first day with a coarse 200 MW cap grid, so the
    // demo finishes in under a minute. Everything else is the standard
    // study definition.
    let window = (150, 157);
    let mut specs = standard_scenarios();
    for spec in &mut specs {
        spec.calibration_days = Some(vec![window.0]);
        spec.calibration.alpha = Some(200.0);
    }

    let out_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../target/examples/run_scenarios");
    let options = RunOptions {
        out_dir: Some(out_dir.clone()),
        day_window: Some(window),
        ..Default::default()
    };

    println!(
        "running {} scenarios over days {}..{} into {}",
        specs.len(),
        window.0,
        window.1,
        out_dir.display()
    );
    let start = Instant::now();
    let results = run_batch(&specs, &options).unwrap();
    let first = start.elapsed();
    println!("first pass: {:.1} s", first.as_secs_f64());

    // Same batch, same directory: every day summary is already on disk,
    // so this pass only loads and re-aggregates.
    let start = Instant::now();
    let resumed = run_batch(&specs, &options).unwrap();
    let second = start.elapsed();
    println!("resumed pass: {:.2} s", second.as_secs_f64());
    assert_eq!(results, resumed, "a resumed run must reproduce the original");

    // What the persistence looks like for one scenario.
    let days = std::fs::read_dir(out_dir.join("PADR2/days")).unwrap().count();
    println!(
        "on disk: PADR2/calibration.json plus {days} day summaries under PADR2/days/"
    );

    println!("\n{}", render_table_txt(&results));
}
