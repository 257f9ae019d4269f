//! Price-taker baseline: aggregators schedule against a posted price
//! signal instead of being co-optimized inside the dispatch.
//!
//! Three stages make up one day:
//!
//!  1. [`baseline_problem`] + [`derive_price_signal`] — solve the day with
//!     flexibility disabled (every draw frozen at its passive value) and
//!     read the posted prices off that solution;
//!  2. [`taker_response`] — each aggregator independently shifts its
//!     flexible energy into the cheapest posted hours;
//!  3. [`taker_dispatch`] — the network is re-solved with every draw
//!     frozen at its response, yielding the physical flows and cost.
//!
//! Every taker sees the same signal and the same tie-break (earlier steps
//! win at equal prices), so responses synchronize: a cheap hour fills to
//! the brim before the next-cheapest hour receives anything. That herding
//! is the point of the baseline — it is what a co-optimizing operator
//! avoids, and the cost gap between the two is the value of anticipation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dispatch::{solve, DispatchError, DispatchProblem, DispatchSolution};
use crate::grid::{AggregatorProfile, Horizon};

/// How the posted signal is read off the baseline dispatch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceMode {
    /// Each region is posted its own balance dual.
    #[default]
    Nodal,
    /// One shared series: the demand-weighted average across regions.
    System,
}

/// Posted $/MWh series per region. Prices are finite and nonnegative by
/// construction (negative duals are floored at zero before posting).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSignal {
    pub steps: usize,
    pub prices: BTreeMap<String, Vec<f64>>,
}

impl PriceSignal {
    pub fn price(&self, region: &str) -> Option<&[f64]> {
        self.prices.get(region).map(|v| v.as_slice())
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TakerError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error("price signal for {region} is invalid: {reason}")]
    InvalidSignal { region: String, reason: String },
    #[error("no price series posted for region {region}")]
    MissingRegion { region: String },
    #[error(
        "taker budget for {region} needs {required} MWh but flex bounds only admit \
         [{reachable_min}, {reachable_max}] MWh"
    )]
    BudgetUnsatisfiable {
        region: String,
        required: f64,
        reachable_min: f64,
        reachable_max: f64,
    },
}

/// The passive draw an aggregator presents when nobody schedules it:
/// appliance demand offset by PV, clipped into the flex box. Whatever the
/// clip cuts off is implicitly absorbed (or supplied) by the battery.
pub fn passive_draw(agg: &AggregatorProfile, steps: usize) -> Vec<f64> {
    (0..steps)
        .map(|h| {
            let lo = agg.flex_min[h].min(agg.flex_max(h));
            let hi = agg.flex_max(h).max(agg.flex_min[h]);
            (agg.responsive_load[h] - agg.pv[h]).clamp(lo, hi)
        })
        .collect()
}

/// The same day with flexibility disabled: every aggregator pinned to its
/// passive draw. Solving this yields the prices a taker is shown.
pub fn baseline_problem(problem: &DispatchProblem) -> DispatchProblem {
    let mut pinned = problem.clone();
    for agg in &problem.model.aggregators {
        pinned
            .pinned_flex
            .insert(agg.region.clone(), passive_draw(agg, problem.horizon.steps));
    }
    pinned
}

/// Read the posted signal off a solved baseline. Nodal mode posts each
/// region its own series; system mode posts one shared series, weighting
/// each region's price by its nett demand in that step.
pub fn derive_price_signal(solution: &DispatchSolution, mode: PriceMode) -> PriceSignal {
    let steps = solution.horizon.steps;
    let mut prices = BTreeMap::new();
    match mode {
        PriceMode::Nodal => {
            for (r, region) in solution.regions.iter().enumerate() {
                let series: Vec<f64> =
                    (0..steps).map(|h| solution.nodal_price[r][h].max(0.0)).collect();
                prices.insert(region.clone(), series);
            }
        }
        PriceMode::System => {
            let mut shared = Vec::with_capacity(steps);
            for h in 0..steps {
                let mut weighted = 0.0;
                let mut weight = 0.0;
                let mut plain = 0.0;
                for (r, region) in solution.regions.iter().enumerate() {
                    let p = solution.nodal_price[r][h].max(0.0);
                    let w = solution.nett_demand(region, h).unwrap_or(0.0).max(0.0);
                    weighted += w * p;
                    weight += w;
                    plain += p;
                }
                shared.push(if weight > 1e-9 {
                    weighted / weight
                } else {
                    plain / solution.regions.len() as f64
                });
            }
            for region in &solution.regions {
                prices.insert(region.clone(), shared.clone());
            }
        }
    }
    PriceSignal { steps, prices }
}

/// One aggregator's bill-minimizing draw against a posted series: start
/// from the floor, then pour the remaining energy budget into steps in
/// order of ascending price, earlier steps first on ties. For a linear
/// bill with box bounds and one energy budget this greedy fill is an
/// exact optimum, and the tie-break makes it deterministic.
pub fn taker_response(
    agg: &AggregatorProfile,
    horizon: &Horizon,
    prices: &[f64],
    battery_loss: f64,
) -> Result<Vec<f64>, TakerError> {
    let steps = horizon.steps;
    let dh = horizon.step_length;
    if prices.len() != steps {
        return Err(TakerError::InvalidSignal {
            region: agg.region.clone(),
            reason: format!("{} prices for {} steps", prices.len(), steps),
        });
    }
    if let Some(p) = prices.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(TakerError::InvalidSignal {
            region: agg.region.clone(),
            reason: format!("price {p} is not a finite nonnegative number"),
        });
    }

    let lo: Vec<f64> = (0..steps).map(|h| agg.flex_min[h].min(agg.flex_max(h))).collect();
    let hi: Vec<f64> = (0..steps).map(|h| agg.flex_max(h).max(agg.flex_min[h])).collect();
    let required: f64 = (0..steps)
        .map(|h| (agg.responsive_load[h] - agg.pv[h]) * dh)
        .sum::<f64>()
        + battery_loss;
    let reachable_min: f64 = lo.iter().map(|v| v * dh).sum();
    let reachable_max: f64 = hi.iter().map(|v| v * dh).sum();
    if required < reachable_min - 1e-6 || required > reachable_max + 1e-6 {
        return Err(TakerError::BudgetUnsatisfiable {
            region: agg.region.clone(),
            required,
            reachable_min,
            reachable_max,
        });
    }

    let mut order: Vec<usize> = (0..steps).collect();
    order.sort_by(|&a, &b| prices[a].partial_cmp(&prices[b]).unwrap().then(a.cmp(&b)));

    let mut draw = lo.clone();
    let mut remaining = (required - reachable_min).max(0.0);
    for &h in &order {
        if remaining <= 0.0 {
            break;
        }
        let room = (hi[h] - lo[h]) * dh;
        let take = room.min(remaining);
        draw[h] += take / dh;
        remaining -= take;
    }
    Ok(draw)
}

/// Responses for every aggregator in the model, keyed by region.
pub fn taker_responses(
    problem: &DispatchProblem,
    signal: &PriceSignal,
) -> Result<BTreeMap<String, Vec<f64>>, TakerError> {
    let mut responses = BTreeMap::new();
    for agg in &problem.model.aggregators {
        let prices = signal
            .price(&agg.region)
            .ok_or_else(|| TakerError::MissingRegion {
                region: agg.region.clone(),
            })?;
        let draw = taker_response(agg, &problem.horizon, prices, problem.loss_for(&agg.region))?;
        responses.insert(agg.region.clone(), draw);
    }
    Ok(responses)
}

/// Re-solve the network with every draw frozen at its response. The
/// dispatch can no longer reshuffle demand; it just prices and routes
/// what the takers committed to.
pub fn taker_dispatch(
    problem: &DispatchProblem,
    responses: &BTreeMap<String, Vec<f64>>,
) -> Result<DispatchSolution, DispatchError> {
    let mut frozen = problem.clone();
    frozen.pinned_flex = responses.clone();
    solve(&frozen)
}

/// All three stages of one price-taker day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceTakerRun {
    /// Flexibility-disabled dispatch the signal was read from.
    pub baseline: DispatchSolution,
    pub signal: PriceSignal,
    /// MW per step each aggregator committed to, keyed by region.
    pub responses: BTreeMap<String, Vec<f64>>,
    /// Physical outcome with all draws frozen at their responses.
    pub dispatch: DispatchSolution,
}

/// Run the full baseline → signal → response → re-dispatch pipeline.
pub fn run_price_taker(
    problem: &DispatchProblem,
    mode: PriceMode,
) -> Result<PriceTakerRun, TakerError> {
    let baseline = solve(&baseline_problem(problem))?;
    let signal = derive_price_signal(&baseline, mode);
    let responses = taker_responses(problem, &signal)?;
    let dispatch = taker_dispatch(problem, &responses)?;
    Ok(PriceTakerRun {
        baseline,
        signal,
        responses,
        dispatch,
    })
}

/// Retail bill for one aggregator: posted price times grid draw.
pub fn retail_cost(prices: &[f64], inflexible: &[f64], draw: &[f64], step_length: f64) -> f64 {
    prices
        .iter()
        .zip(inflexible)
        .zip(draw)
        .map(|((p, l), f)| p * (l + f) * step_length)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{
        BidBlock, Generator, GeneratorKind, NetworkModel, Region, StorageParams,
    };
    use crate::lp::LinearProgram;
    use crate::simplex::{self, SimplexOptions};

    fn flex_agg(region: &str, responsive: Vec<f64>, pv: Vec<f64>, charge_cap: f64) -> AggregatorProfile {
        let steps = responsive.len();
        AggregatorProfile {
            region: region.into(),
            inflexible_load: vec![50.0; steps],
            responsive_load: responsive,
            pv,
            storage: StorageParams::midpoint(0.0, 10_000.0, 0.9),
            flex_min: vec![0.0; steps],
            charge_cap,
        }
    }

    fn one_region_problem(agg: AggregatorProfile, blocks: Vec<BidBlock>) -> DispatchProblem {
        let steps = agg.responsive_load.len();
        let p_max: f64 = blocks.iter().map(|b| b.capacity).sum();
        let model = NetworkModel {
            regions: vec![Region { id: "R".into(), name: String::new() }],
            lines: vec![],
            generators: vec![Generator {
                id: "g".into(),
                region: "R".into(),
                p_min: 0.0,
                p_max,
                blocks,
                kind: GeneratorKind::Coal,
                availability: None,
            }],
            aggregators: vec![agg],
            reference_region: "R".into(),
        };
        DispatchProblem::new(model, Horizon::new(steps, 1.0))
    }

    #[test]
    fn passive_draw_clips_pv_surplus_into_the_flex_box() {
        let agg = flex_agg("R", vec![30.0, 30.0], vec![0.0, 50.0], 300.0);
        // Step 1 would go negative (30 - 50); the floor of 0 catches it.
        assert_eq!(passive_draw(&agg, 2), vec![30.0, 0.0]);
    }

    #[test]
    fn baseline_problem_pins_every_aggregator() {
        let agg = flex_agg("R", vec![30.0, 40.0], vec![0.0, 0.0], 300.0);
        let problem = one_region_problem(agg, vec![BidBlock { price: 10.0, capacity: 500.0 }]);
        let pinned = baseline_problem(&problem);
        assert_eq!(pinned.pinned_flex["R"], vec![30.0, 40.0]);
        // Pinned draws drop the energy-budget coupling entirely.
        let built = crate::dispatch::build(&pinned).unwrap();
        assert!(built.layout.coupled_aggs.is_empty());
    }

    #[test]
    fn derived_signal_steps_up_when_demand_crosses_into_a_dearer_block() {
        // Demand of 80 sits in the first block; 350 needs the second.
        let agg = flex_agg("R", vec![30.0, 300.0], vec![0.0, 0.0], 0.0);
        let problem = one_region_problem(
            agg,
            vec![
                BidBlock { price: 10.0, capacity: 300.0 },
                BidBlock { price: 100.0, capacity: 300.0 },
            ],
        );
        let baseline = solve(&baseline_problem(&problem)).unwrap();
        let signal = derive_price_signal(&baseline, PriceMode::Nodal);
        assert_eq!(signal.price("R").unwrap(), &[10.0, 100.0]);
    }

    #[test]
    fn negative_duals_are_floored_at_zero_before_posting() {
        let agg = flex_agg("R", vec![30.0], vec![0.0], 0.0);
        let problem = one_region_problem(agg, vec![BidBlock { price: 10.0, capacity: 100.0 }]);
        let mut solution = solve(&problem).unwrap();
        solution.nodal_price[0][0] = -25.0;
        let signal = derive_price_signal(&solution, PriceMode::Nodal);
        assert_eq!(signal.price("R").unwrap(), &[0.0]);
    }

    #[test]
    fn system_mode_posts_one_demand_weighted_series_everywhere() {
        let solution = {
            let agg = flex_agg("R", vec![30.0], vec![0.0], 0.0);
            let problem =
                one_region_problem(agg, vec![BidBlock { price: 10.0, capacity: 100.0 }]);
            let mut s = solve(&problem).unwrap();
            // Fake a second region so the average is non-trivial: prices
            // 10 and 40 with nett demands 80 and 20 -> weighted 16.
            s.regions.push("S".into());
            s.nodal_price = vec![vec![10.0], vec![40.0]];
            s.aggregators.push(crate::dispatch::AggregatorContext {
                region: "S".into(),
                inflexible_load: vec![15.0],
                responsive_load: vec![5.0],
                pv: vec![0.0],
                storage: StorageParams::none(),
                battery_loss: 0.0,
            });
            s.flexible_demand.push(vec![5.0]);
            s
        };
        let signal = derive_price_signal(&solution, PriceMode::System);
        assert_eq!(signal.price("R").unwrap(), &[16.0]);
        assert_eq!(signal.price("S").unwrap(), &[16.0]);
    }

    #[test]
    fn flat_prices_fill_earliest_steps_first() {
        let agg = flex_agg("R", vec![50.0, 50.0, 50.0], vec![0.0; 3], 50.0);
        let horizon = Horizon::new(3, 1.0);
        // Budget 150 MWh, every step admits 100 MW: the earliest two
        // hours take everything, the third stays empty.
        let draw = taker_response(&agg, &horizon, &[5.0, 5.0, 5.0], 0.0).unwrap();
        assert_eq!(draw, vec![100.0, 50.0, 0.0]);
    }

    #[test]
    fn cheaper_later_hour_wins_over_an_earlier_dear_one() {
        let mut agg = flex_agg("R", vec![20.0, 80.0], vec![0.0, 0.0], 0.0);
        agg.flex_min = vec![20.0, 0.0];
        let horizon = Horizon::new(2, 1.0);
        // Floor holds 20 MW in step 0; the remaining 80 MWh all lands in
        // the cheaper step 1.
        let draw = taker_response(&agg, &horizon, &[5.0, 1.0], 0.0).unwrap();
        assert_eq!(draw, vec![20.0, 80.0]);
    }

    #[test]
    fn full_flexibility_piles_everything_into_the_cheapest_step() {
        let agg = flex_agg("R", vec![75.0, 75.0], vec![0.0, 0.0], 75.0);
        let horizon = Horizon::new(2, 1.0);
        let draw = taker_response(&agg, &horizon, &[10.0, 20.0], 0.0).unwrap();
        assert_eq!(draw, vec![150.0, 0.0]);
    }

    #[test]
    fn battery_loss_inflates_the_energy_poured_into_cheap_hours() {
        let agg = flex_agg("R", vec![50.0, 50.0], vec![0.0, 0.0], 100.0);
        let horizon = Horizon::new(2, 1.0);
        let plain = taker_response(&agg, &horizon, &[10.0, 20.0], 0.0).unwrap();
        let lossy = taker_response(&agg, &horizon, &[10.0, 20.0], 30.0).unwrap();
        assert_eq!(plain, vec![100.0, 0.0]);
        assert_eq!(lossy, vec![130.0, 0.0]);
    }

    #[test]
    fn budget_outside_the_flex_box_is_rejected() {
        let agg = flex_agg("R", vec![50.0, 50.0], vec![0.0, 0.0], 10.0);
        let horizon = Horizon::new(2, 1.0);
        // Box tops out at 60+60 = 120 MWh; the loss pushes demand to 130.
        let err = taker_response(&agg, &horizon, &[10.0, 20.0], 30.0).unwrap_err();
        assert!(matches!(err, TakerError::BudgetUnsatisfiable { .. }));
    }

    #[test]
    fn malformed_signals_are_rejected() {
        let agg = flex_agg("R", vec![50.0, 50.0], vec![0.0, 0.0], 10.0);
        let horizon = Horizon::new(2, 1.0);
        let short = taker_response(&agg, &horizon, &[10.0], 0.0).unwrap_err();
        assert!(matches!(short, TakerError::InvalidSignal { .. }));
        let negative = taker_response(&agg, &horizon, &[10.0, -1.0], 0.0).unwrap_err();
        assert!(matches!(negative, TakerError::InvalidSignal { .. }));
        let nan = taker_response(&agg, &horizon, &[10.0, f64::NAN], 0.0).unwrap_err();
        assert!(matches!(nan, TakerError::InvalidSignal { .. }));
    }

    /// The greedy fill must reproduce LP-optimal bills. Random boxes,
    /// prices and budgets, checked against the simplex on the same
    /// single-budget program.
    #[test]
    fn greedy_fill_matches_the_lp_optimum_on_random_instances() {
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..40 {
            let steps = 2 + (next() * 5.0) as usize;
            let responsive: Vec<f64> = (0..steps).map(|_| 10.0 + next() * 90.0).collect();
            let prices: Vec<f64> = (0..steps).map(|_| (next() * 50.0).round()).collect();
            let mut agg = flex_agg("R", responsive, vec![0.0; steps], 20.0 + next() * 80.0);
            agg.flex_min = (0..steps).map(|_| next() * 10.0).collect();
            let horizon = Horizon::new(steps, 1.0);
            let draw = taker_response(&agg, &horizon, &prices, next() * 5.0).unwrap();

            let mut lp = LinearProgram::new();
            for h in 0..steps {
                lp.add_variable(format!("x{h}"), prices[h], agg.flex_min[h], agg.flex_max(h));
            }
            let budget: f64 = draw.iter().sum();
            let coeffs: Vec<(usize, f64)> = (0..steps).map(|h| (h, 1.0)).collect();
            lp.add_row("budget", budget, budget, &coeffs);
            let best = simplex::solve(&lp, &SimplexOptions::default()).unwrap();

            let greedy_bill: f64 = prices.iter().zip(&draw).map(|(p, d)| p * d).sum();
            assert!(
                (greedy_bill - best.objective).abs() < 1e-7,
                "greedy {greedy_bill} vs lp {:?}",
                best.objective,
            );
        }
    }

    #[test]
    fn identical_signals_synchronize_independent_takers() {
        let a = flex_agg("A", vec![40.0, 40.0, 40.0], vec![0.0; 3], 80.0);
        let b = flex_agg("B", vec![20.0, 20.0, 20.0], vec![0.0; 3], 40.0);
        let horizon = Horizon::new(3, 1.0);
        let prices = [30.0, 10.0, 30.0];
        let da = taker_response(&a, &horizon, &prices, 0.0).unwrap();
        let db = taker_response(&b, &horizon, &prices, 0.0).unwrap();
        // Both pile into the same cheap hour, at their own scale.
        assert_eq!(da, vec![0.0, 120.0, 0.0]);
        assert_eq!(db, vec![0.0, 60.0, 0.0]);
    }

    /// Herding into the cheap hours pushes the taker re-dispatch into
    /// dearer bid blocks, so the co-optimized day can only be cheaper.
    #[test]
    fn co_optimized_dispatch_never_costs_more_than_the_taker_pipeline() {
        let agg = flex_agg(
            "R",
            vec![30.0, 30.0, 30.0, 300.0, 300.0, 30.0],
            vec![0.0; 6],
            300.0,
        );
        let problem = one_region_problem(
            agg,
            vec![
                BidBlock { price: 10.0, capacity: 300.0 },
                BidBlock { price: 100.0, capacity: 300.0 },
                BidBlock { price: 250.0, capacity: 300.0 },
            ],
        );
        let anticipator = solve(&problem).unwrap();
        let taker = run_price_taker(&problem, PriceMode::Nodal).unwrap();
        assert!(anticipator.objective <= taker.dispatch.objective + 1e-6);
        // This instance has real spread, so the gap must be strict.
        assert!(
            taker.dispatch.objective - anticipator.objective > 1.0,
            "expected a strict gap, got {} vs {}",
            anticipator.objective,
            taker.dispatch.objective,
        );
    }

    #[test]
    fn pipeline_responses_respect_the_energy_budget() {
        let agg = flex_agg(
            "R",
            vec![30.0, 30.0, 30.0, 300.0, 300.0, 30.0],
            vec![0.0, 0.0, 80.0, 80.0, 0.0, 0.0],
            300.0,
        );
        let problem = one_region_problem(
            agg.clone(),
            vec![
                BidBlock { price: 10.0, capacity: 300.0 },
                BidBlock { price: 100.0, capacity: 300.0 },
                BidBlock { price: 250.0, capacity: 300.0 },
            ],
        );
        let run = run_price_taker(&problem, PriceMode::Nodal).unwrap();
        let drawn: f64 = run.responses["R"].iter().sum();
        let required: f64 = (0..6).map(|h| agg.responsive_load[h] - agg.pv[h]).sum();
        assert!((drawn - required).abs() < 1e-9);
        // The frozen re-dispatch hands back exactly the committed draws.
        assert_eq!(run.dispatch.flexible_demand[0], run.responses["R"]);
    }
}
