//! Multi-period economic dispatch as a linear program.
//!
//! One solve covers the whole horizon at once: block-bid generation, each
//! aggregator's flexible grid draw, DC voltage angles, and per-region
//! unserved/spill slacks are co-optimised under nodal balance, line limits
//! and a per-aggregator energy budget that couples all steps.
//!
//! Layout (step-major; flows are row expressions, not variables):
//!
//! ```text
//! per step:   one variable per bid block   [0 or p_min share, capacity]
//!             one flex draw per aggregator [flex_min(h), flex_max(h)]
//!             one angle per region         (reference fixed to 0)
//!             one unserved + one spill slack per region  [0, inf)
//! rows:       per step/region  balance: gen + unserved - spill - flex
//!                              - net line outflow = inflexible load
//!             per step/line    flow_min <= B (th_from - th_to) <= flow_max
//!             per aggregator   sum_h flex(h) dh  =  sum_h (responsive(h)
//!                              - pv(h)) dh + battery_loss   (omitted when
//!                              the aggregator is fully pinned)
//! ```
//!
//! The energy budget row is the identity "flexible purchases over the day
//! equal the users' demand nett of PV plus the battery's round-trip loss";
//! with it, the implied battery schedule nets out to exactly the loss.
//!
//! Variable renewables (wind, CSP) are must-run: their single block is
//! fixed at available output, so any surplus lands in the spill slack and
//! is visible as dumped energy rather than silently turned down.
//!
//! Because the loss enters the budget as a fixed term, charge/discharge
//! churn between equal-price hours is invisible to the objective, and a
//! vertex solution may carry arbitrarily much of it — corrupting every
//! quantity reconstructed from the schedule (state of charge, implied
//! losses). [`solve`] therefore runs a second pass over the optimal face:
//! total cost is capped at the optimum and summed battery charging is
//! minimised, which removes gratuitous cycling while leaving genuinely
//! profitable arbitrage untouched. Duals and the reported objective come
//! from the first pass; fully pinned problems skip the second.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::grid::{total_required_energy, validate, Horizon, NetworkModel};
use crate::lp::LinearProgram;
use crate::simplex::{self, SimplexOptions, SolveError};

/// Penalty price for unserved energy, $/MWh.
pub const DEFAULT_VALUE_OF_LOST_LOAD: f64 = 14_500.0;

/// A dispatch instance: the static model plus the per-aggregator battery
/// loss injected into the energy-budget rows.
#[derive(Debug, Clone)]
pub struct DispatchProblem {
    pub model: NetworkModel,
    pub horizon: Horizon,
    /// Battery round-trip loss per aggregator region, MWh over the horizon.
    pub battery_loss: BTreeMap<String, f64>,
    pub value_of_lost_load: f64,
    /// Price on dumped surplus, $/MWh (0 keeps prices nonnegative).
    pub spill_price: f64,
    /// Solve-scoped overrides freezing an aggregator's draw to a fixed
    /// series (flex_min = flex_max = value). Pinned aggregators get no
    /// energy-budget row: the pin either satisfies it already or records a
    /// deliberate deviation (e.g. a clamped no-flexibility baseline).
    pub pinned_flex: BTreeMap<String, Vec<f64>>,
}

impl DispatchProblem {
    pub fn new(model: NetworkModel, horizon: Horizon) -> Self {
        DispatchProblem {
            model,
            horizon,
            battery_loss: BTreeMap::new(),
            value_of_lost_load: DEFAULT_VALUE_OF_LOST_LOAD,
            spill_price: 0.0,
            pinned_flex: BTreeMap::new(),
        }
    }

    pub fn loss_for(&self, region: &str) -> f64 {
        self.battery_loss.get(region).copied().unwrap_or(0.0)
    }
}

/// Construction-time rejection.
#[derive(Debug, Clone, thiserror::Error)]
pub enum BuildError {
    #[error("model is invalid: {0:?}")]
    InvalidModel(Vec<String>),
    #[error("battery loss for {region} is negative: {loss}")]
    NegativeLoss { region: String, loss: f64 },
    #[error("value of lost load {voll} does not exceed the highest bid {highest_bid}")]
    LostLoadNotDominant { voll: f64, highest_bid: f64 },
    #[error("spill price {0} is negative")]
    NegativeSpillPrice(f64),
    #[error(
        "energy budget for {region} needs {required} MWh but flex bounds only admit \
         [{reachable_min}, {reachable_max}] MWh"
    )]
    EnergyBudgetUnsatisfiable {
        region: String,
        required: f64,
        reachable_min: f64,
        reachable_max: f64,
    },
    #[error("pinned flex series for {region} is invalid: {reason}")]
    PinnedSeriesInvalid { region: String, reason: String },
}

/// Solve-time failure.
#[derive(Debug, Clone, thiserror::Error)]
pub enum DispatchError {
    #[error(transparent)]
    Build(#[from] BuildError),
    /// Slacks make every well-formed instance feasible, so this signals a
    /// construction bug rather than bad data.
    #[error("dispatch LP infeasible: {0}")]
    Infeasible(String),
    #[error("solver failed: {0}")]
    SolverFailure(String),
}

/// Index bookkeeping for the assembled LP. Generators are laid out in
/// lexicographic id order so that equal-price ties resolve by generator id,
/// then block index (the solver enters the lowest-index candidate first).
#[derive(Debug, Clone)]
pub struct Layout {
    pub steps: usize,
    pub regions: Vec<String>,
    /// Generator ids in LP (lexicographic) order.
    pub generators: Vec<String>,
    /// Map from LP generator order into `model.generators`.
    pub gen_model_index: Vec<usize>,
    /// First variable of each generator's block group within a step.
    block_offset: Vec<usize>,
    blocks_per_gen: Vec<usize>,
    total_blocks: usize,
    n_aggs: usize,
    n_lines: usize,
    per_step: usize,
    /// Aggregators that received an energy-budget row, as indexes into
    /// `model.aggregators`, in model order.
    pub coupled_aggs: Vec<usize>,
}

impl Layout {
    fn vars(&self) -> usize {
        self.per_step * self.steps
    }

    pub fn block(&self, gen: usize, block: usize, step: usize) -> usize {
        step * self.per_step + self.block_offset[gen] + block
    }

    pub fn flex(&self, agg: usize, step: usize) -> usize {
        step * self.per_step + self.total_blocks + agg
    }

    pub fn angle(&self, region: usize, step: usize) -> usize {
        step * self.per_step + self.total_blocks + self.n_aggs + region
    }

    pub fn unserved(&self, region: usize, step: usize) -> usize {
        step * self.per_step + self.total_blocks + self.n_aggs + self.regions.len() + region
    }

    pub fn spill(&self, region: usize, step: usize) -> usize {
        step * self.per_step + self.total_blocks + self.n_aggs + 2 * self.regions.len() + region
    }

    pub fn balance_row(&self, region: usize, step: usize) -> usize {
        step * (self.regions.len() + self.n_lines) + region
    }

    pub fn flow_row(&self, line: usize, step: usize) -> usize {
        step * (self.regions.len() + self.n_lines) + self.regions.len() + line
    }

    pub fn coupling_row(&self, coupled_pos: usize) -> usize {
        self.steps * (self.regions.len() + self.n_lines) + coupled_pos
    }
}

/// The assembled LP plus its index map.
#[derive(Debug, Clone)]
pub struct DispatchLp {
    pub lp: LinearProgram,
    pub layout: Layout,
}

/// Solved dispatch. Carries copies of the demand-side inputs so derived
/// quantities (battery power, nett demand, metrics) need no model handle,
/// and serialises for per-day persistence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispatchSolution {
    pub horizon: Horizon,
    pub regions: Vec<String>,
    /// Generator ids in LP order, aligned with `generation`.
    pub generators: Vec<String>,
    /// Marker per generator: true for gas turbines (backup accounting).
    pub is_backup: Vec<bool>,
    /// MW per generator per step.
    pub generation: Vec<Vec<f64>>,
    /// MW per aggregator per step (grid draw of the flexible users).
    pub flexible_demand: Vec<Vec<f64>>,
    /// Radians per region per step; reference region pinned to zero.
    pub angles: Vec<Vec<f64>>,
    /// Line endpoints as region ids, aligned with `line_flows`.
    pub lines: Vec<(String, String)>,
    /// MW per line per step, positive from -> to.
    pub line_flows: Vec<Vec<f64>>,
    /// MW per region per step.
    pub unserved: Vec<Vec<f64>>,
    pub spill: Vec<Vec<f64>>,
    /// $/MWh per region per step (duals of the balance rows).
    pub nodal_price: Vec<Vec<f64>>,
    /// Total dispatch cost, $.
    pub objective: f64,
    /// Demand-side context per aggregator, model order.
    pub aggregators: Vec<AggregatorContext>,
}

/// Per-aggregator inputs frozen into the solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorContext {
    pub region: String,
    pub inflexible_load: Vec<f64>,
    pub responsive_load: Vec<f64>,
    pub pv: Vec<f64>,
    pub storage: crate::grid::StorageParams,
    pub battery_loss: f64,
}

impl DispatchSolution {
    fn agg(&self, region: &str) -> Result<(usize, &AggregatorContext), UnknownAggregator> {
        self.aggregators
            .iter()
            .enumerate()
            .find(|(_, a)| a.region == region)
            .ok_or_else(|| UnknownAggregator {
                region: region.to_string(),
            })
    }

    /// Total demand seen by the grid in one region at one step: inflexible
    /// load plus the flexible users' draw.
    pub fn nett_demand(&self, region: &str, step: usize) -> Result<f64, UnknownAggregator> {
        let (i, ctx) = self.agg(region)?;
        Ok(ctx.inflexible_load[step] + self.flexible_demand[i][step])
    }

    /// Implied battery power at a step: grid draw minus appliance demand
    /// plus behind-the-meter PV. Positive = charging.
    pub fn battery_power(&self, region: &str, step: usize) -> Result<f64, UnknownAggregator> {
        let (i, ctx) = self.agg(region)?;
        Ok(self.flexible_demand[i][step] - ctx.responsive_load[step] + ctx.pv[step])
    }

    /// System-wide demand at a step (all regions' nett demand).
    pub fn system_demand(&self, step: usize) -> f64 {
        self.aggregators
            .iter()
            .enumerate()
            .map(|(i, a)| a.inflexible_load[step] + self.flexible_demand[i][step])
            .sum()
    }
}

/// Lookup of a region with no aggregator in the solution.
#[derive(Debug, Clone, thiserror::Error)]
#[error("no aggregator for region {region}")]
pub struct UnknownAggregator {
    pub region: String,
}

/// Assemble the LP. Rejects models whose fixed data cannot satisfy the
/// per-aggregator energy budget (interval arithmetic before any solve).
pub fn build(problem: &DispatchProblem) -> Result<DispatchLp, BuildError> {
    let model = &problem.model;
    let horizon = &problem.horizon;
    let violations = validate(model, horizon);
    if !violations.is_empty() {
        return Err(BuildError::InvalidModel(
            violations.iter().map(|v| v.to_string()).collect(),
        ));
    }
    let highest_bid = model
        .generators
        .iter()
        .flat_map(|g| g.blocks.iter().map(|b| b.price))
        .fold(0.0_f64, f64::max);
    if problem.value_of_lost_load <= highest_bid {
        return Err(BuildError::LostLoadNotDominant {
            voll: problem.value_of_lost_load,
            highest_bid,
        });
    }
    if problem.spill_price < 0.0 {
        return Err(BuildError::NegativeSpillPrice(problem.spill_price));
    }
    for (region, &loss) in &problem.battery_loss {
        if loss < 0.0 {
            return Err(BuildError::NegativeLoss {
                region: region.clone(),
                loss,
            });
        }
    }

    let steps = horizon.steps;
    let dh = horizon.step_length;

    for (region, series) in &problem.pinned_flex {
        let reason = if !model.aggregators.iter().any(|a| &a.region == region) {
            Some("no aggregator in that region".to_string())
        } else if series.len() != steps {
            Some(format!("{} values for {} steps", series.len(), steps))
        } else if series.iter().any(|v| !v.is_finite()) {
            Some("contains a non-finite value".to_string())
        } else {
            None
        };
        if let Some(reason) = reason {
            return Err(BuildError::PinnedSeriesInvalid {
                region: region.clone(),
                reason,
            });
        }
    }

    let mut gen_order: Vec<usize> = (0..model.generators.len()).collect();
    gen_order.sort_by(|&a, &b| model.generators[a].id.cmp(&model.generators[b].id));

    let mut block_offset = Vec::with_capacity(gen_order.len());
    let mut blocks_per_gen = Vec::with_capacity(gen_order.len());
    let mut total_blocks = 0usize;
    for &gi in &gen_order {
        block_offset.push(total_blocks);
        blocks_per_gen.push(model.generators[gi].blocks.len());
        total_blocks += model.generators[gi].blocks.len();
    }

    let coupled_aggs: Vec<usize> = model
        .aggregators
        .iter()
        .enumerate()
        .filter(|(_, a)| !a.is_pinned() && !problem.pinned_flex.contains_key(&a.region))
        .map(|(i, _)| i)
        .collect();

    let layout = Layout {
        steps,
        regions: model.regions.iter().map(|r| r.id.clone()).collect(),
        generators: gen_order
            .iter()
            .map(|&gi| model.generators[gi].id.clone())
            .collect(),
        gen_model_index: gen_order.clone(),
        block_offset,
        blocks_per_gen,
        total_blocks,
        n_aggs: model.aggregators.len(),
        n_lines: model.lines.len(),
        per_step: total_blocks + model.aggregators.len() + 3 * model.regions.len(),
        coupled_aggs: coupled_aggs.clone(),
    };

    // Energy-budget satisfiability against the flex box, per aggregator.
    for &ai in &coupled_aggs {
        let agg = &model.aggregators[ai];
        let required: f64 = (0..steps)
            .map(|h| (agg.responsive_load[h] - agg.pv[h]) * dh)
            .sum::<f64>()
            + problem.loss_for(&agg.region);
        let reachable_min: f64 = (0..steps).map(|h| agg.flex_min[h] * dh).sum();
        let reachable_max: f64 = (0..steps).map(|h| agg.flex_max(h) * dh).sum();
        if required < reachable_min - 1e-6 || required > reachable_max + 1e-6 {
            return Err(BuildError::EnergyBudgetUnsatisfiable {
                region: agg.region.clone(),
                required,
                reachable_min,
                reachable_max,
            });
        }
    }

    let mut lp = LinearProgram::new();

    for h in 0..steps {
        for (k, &gi) in gen_order.iter().enumerate() {
            let g = &model.generators[gi];
            let avail = match &g.availability {
                Some(a) => a[h % a.len()],
                None => 1.0,
            };
            // p_min fills the cheapest blocks first; availability derates
            // every block proportionally.
            let mut min_left = g.p_min * avail;
            for (b, blk) in g.blocks.iter().enumerate() {
                let cap = blk.capacity * avail;
                let (lo, hi) = if g.kind.is_renewable() {
                    (cap, cap) // must-run at available output
                } else {
                    let lo = min_left.min(cap);
                    min_left -= lo;
                    (lo, cap)
                };
                let idx = lp.add_variable(
                    format!("pg_{}_{}_{}", g.id, b, h),
                    blk.price * dh,
                    lo,
                    hi,
                );
                debug_assert_eq!(idx, layout.block(k, b, h));
            }
        }
        for (a, agg) in model.aggregators.iter().enumerate() {
            let (lo, hi) = match problem.pinned_flex.get(&agg.region) {
                Some(series) => (series[h], series[h]),
                None => (
                    agg.flex_min[h].min(agg.flex_max(h)),
                    agg.flex_max(h).max(agg.flex_min[h]),
                ),
            };
            let idx = lp.add_variable(format!("pf_{}_{}", agg.region, h), 0.0, lo, hi);
            debug_assert_eq!(idx, layout.flex(a, h));
        }
        for (r, region) in model.regions.iter().enumerate() {
            let (lo, hi) = if region.id == model.reference_region {
                (0.0, 0.0)
            } else {
                (f64::NEG_INFINITY, f64::INFINITY)
            };
            let idx = lp.add_variable(format!("th_{}_{}", region.id, h), 0.0, lo, hi);
            debug_assert_eq!(idx, layout.angle(r, h));
        }
        for (r, region) in model.regions.iter().enumerate() {
            let idx = lp.add_variable(
                format!("us_{}_{}", region.id, h),
                problem.value_of_lost_load * dh,
                0.0,
                f64::INFINITY,
            );
            debug_assert_eq!(idx, layout.unserved(r, h));
        }
        for (r, region) in model.regions.iter().enumerate() {
            let idx = lp.add_variable(
                format!("sp_{}_{}", region.id, h),
                problem.spill_price * dh,
                0.0,
                f64::INFINITY,
            );
            debug_assert_eq!(idx, layout.spill(r, h));
        }
    }

    for h in 0..steps {
        for (r, region) in model.regions.iter().enumerate() {
            let mut coeffs: Vec<(usize, f64)> = Vec::new();
            for (k, &gi) in gen_order.iter().enumerate() {
                if model.generators[gi].region == region.id {
                    for b in 0..layout.blocks_per_gen[k] {
                        coeffs.push((layout.block(k, b, h), 1.0));
                    }
                }
            }
            let mut rhs = 0.0;
            for (a, agg) in model.aggregators.iter().enumerate() {
                if agg.region == region.id {
                    coeffs.push((layout.flex(a, h), -1.0));
                    rhs += agg.inflexible_load[h];
                }
            }
            coeffs.push((layout.unserved(r, h), 1.0));
            coeffs.push((layout.spill(r, h), -1.0));
            for line in &model.lines {
                let from = model.region_index(&line.from).unwrap();
                let to = model.region_index(&line.to).unwrap();
                // Outflow on lines leaving r, inflow on lines entering r.
                if from == r {
                    coeffs.push((layout.angle(from, h), -line.susceptance));
                    coeffs.push((layout.angle(to, h), line.susceptance));
                } else if to == r {
                    coeffs.push((layout.angle(from, h), line.susceptance));
                    coeffs.push((layout.angle(to, h), -line.susceptance));
                }
            }
            let idx = lp.add_row(format!("bal_{}_{}", region.id, h), rhs, rhs, &coeffs);
            debug_assert_eq!(idx, layout.balance_row(r, h));
        }
        for (l, line) in model.lines.iter().enumerate() {
            let from = model.region_index(&line.from).unwrap();
            let to = model.region_index(&line.to).unwrap();
            let idx = lp.add_row(
                format!("flow_{}_{}_{}", line.from, line.to, h),
                line.flow_min,
                line.flow_max,
                &[
                    (layout.angle(from, h), line.susceptance),
                    (layout.angle(to, h), -line.susceptance),
                ],
            );
            debug_assert_eq!(idx, layout.flow_row(l, h));
        }
    }

    for (pos, &ai) in coupled_aggs.iter().enumerate() {
        let agg = &model.aggregators[ai];
        let rhs: f64 = (0..steps)
            .map(|h| (agg.responsive_load[h] - agg.pv[h]) * dh)
            .sum::<f64>()
            + problem.loss_for(&agg.region);
        let coeffs: Vec<(usize, f64)> = (0..steps).map(|h| (layout.flex(ai, h), dh)).collect();
        let idx = lp.add_row(format!("energy_{}", agg.region), rhs, rhs, &coeffs);
        debug_assert_eq!(idx, layout.coupling_row(pos));
    }

    Ok(DispatchLp { lp, layout })
}

/// Among cost-optimal dispatches, find one with the least total battery
/// charging: re-solve with the objective replaced by summed charging
/// proxies (`c ≥ flex − responsive + pv`, `c ≥ 0`) and a row capping the
/// original cost at the phase-one optimum. `None` when the refinement
/// solve fails; the caller then falls back to the phase-one vertex.
fn refine_battery_schedule(
    lp: &LinearProgram,
    layout: &Layout,
    problem: &DispatchProblem,
    optimal_cost: f64,
) -> Option<simplex::LpSolution> {
    let mut refined = lp.clone();
    debug_assert_eq!(refined.num_vars(), layout.vars());
    let cost_coeffs: Vec<(usize, f64)> = lp
        .objective
        .iter()
        .enumerate()
        .filter(|&(_, &c)| c != 0.0)
        .map(|(j, &c)| (j, c))
        .collect();
    let slack = 1e-7 * (1.0 + optimal_cost.abs());
    refined.add_row(
        "cost_cap",
        f64::NEG_INFINITY,
        optimal_cost + slack,
        &cost_coeffs,
    );
    for c in refined.objective.iter_mut() {
        *c = 0.0;
    }
    let dh = problem.horizon.step_length;
    for &ai in &layout.coupled_aggs {
        let agg = &problem.model.aggregators[ai];
        for h in 0..layout.steps {
            let c = refined.add_variable(
                format!("charge_{}_{h}", agg.region),
                dh,
                0.0,
                f64::INFINITY,
            );
            refined.add_row(
                format!("charge_floor_{}_{h}", agg.region),
                agg.pv[h] - agg.responsive_load[h],
                f64::INFINITY,
                &[(c, 1.0), (layout.flex(ai, h), -1.0)],
            );
        }
    }
    simplex::solve(&refined, &SimplexOptions::default()).ok()
}

/// Build, solve, and unpack into a [`DispatchSolution`]. Deterministic:
/// identical problems give identical solutions, including tie-breaking.
pub fn solve(problem: &DispatchProblem) -> Result<DispatchSolution, DispatchError> {
    let DispatchLp { lp, layout } = build(problem)?;
    let first = simplex::solve(&lp, &SimplexOptions::default()).map_err(|e| match e {
        SolveError::Infeasible { .. } => DispatchError::Infeasible(e.to_string()),
        other => DispatchError::SolverFailure(other.to_string()),
    })?;
    let refined = if layout.coupled_aggs.is_empty() {
        None
    } else {
        refine_battery_schedule(&lp, &layout, problem, first.objective)
    };
    // Primal values come from the refined schedule when there is one;
    // duals and the objective always describe the first-pass optimum.
    let sol = refined.as_ref().unwrap_or(&first);

    let model = &problem.model;
    let steps = layout.steps;
    let dh = problem.horizon.step_length;
    let n_regions = model.regions.len();

    let generation: Vec<Vec<f64>> = (0..layout.generators.len())
        .map(|k| {
            (0..steps)
                .map(|h| {
                    (0..layout.blocks_per_gen[k])
                        .map(|b| sol.x[layout.block(k, b, h)])
                        .sum()
                })
                .collect()
        })
        .collect();
    let flexible_demand: Vec<Vec<f64>> = (0..layout.n_aggs)
        .map(|a| (0..steps).map(|h| sol.x[layout.flex(a, h)]).collect())
        .collect();
    let angles: Vec<Vec<f64>> = (0..n_regions)
        .map(|r| (0..steps).map(|h| sol.x[layout.angle(r, h)]).collect())
        .collect();
    let line_flows: Vec<Vec<f64>> = (0..model.lines.len())
        .map(|l| {
            (0..steps)
                .map(|h| sol.row_activity[layout.flow_row(l, h)])
                .collect()
        })
        .collect();
    let unserved: Vec<Vec<f64>> = (0..n_regions)
        .map(|r| (0..steps).map(|h| sol.x[layout.unserved(r, h)]).collect())
        .collect();
    let spill: Vec<Vec<f64>> = (0..n_regions)
        .map(|r| (0..steps).map(|h| sol.x[layout.spill(r, h)]).collect())
        .collect();
    let nodal_price: Vec<Vec<f64>> = (0..n_regions)
        .map(|r| {
            (0..steps)
                .map(|h| first.duals[layout.balance_row(r, h)] / dh)
                .collect()
        })
        .collect();
    let aggregators: Vec<AggregatorContext> = model
        .aggregators
        .iter()
        .map(|a| AggregatorContext {
            region: a.region.clone(),
            inflexible_load: a.inflexible_load.clone(),
            responsive_load: a.responsive_load.clone(),
            pv: a.pv.clone(),
            storage: a.storage,
            battery_loss: problem.loss_for(&a.region),
        })
        .collect();
    let is_backup: Vec<bool> = layout
        .gen_model_index
        .iter()
        .map(|&gi| model.generators[gi].kind == crate::grid::GeneratorKind::GasTurbine)
        .collect();

    Ok(DispatchSolution {
        horizon: problem.horizon,
        regions: layout.regions.clone(),
        generators: layout.generators.clone(),
        is_backup,
        generation,
        flexible_demand,
        angles,
        lines: model
            .lines
            .iter()
            .map(|l| (l.from.clone(), l.to.clone()))
            .collect(),
        line_flows,
        unserved,
        spill,
        nodal_price,
        objective: first.objective,
        aggregators,
    })
}

/// Σ (inflexible + responsive) · Δh for every aggregator — the fixed energy
/// requirement that the budget row tops up with PV credit and loss.
pub fn required_energy_by_region(model: &NetworkModel, horizon: &Horizon) -> BTreeMap<String, f64> {
    model
        .aggregators
        .iter()
        .map(|a| (a.region.clone(), total_required_energy(a, horizon)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::*;

    fn single_region_model(steps: usize, load: f64) -> NetworkModel {
        NetworkModel {
            regions: vec![Region { id: "R".into(), name: String::new() }],
            lines: vec![],
            generators: vec![Generator {
                id: "g".into(),
                region: "R".into(),
                p_min: 0.0,
                p_max: 300.0,
                blocks: vec![
                    BidBlock { price: 10.0, capacity: 100.0 },
                    BidBlock { price: 20.0, capacity: 100.0 },
                    BidBlock { price: 30.0, capacity: 100.0 },
                ],
                kind: GeneratorKind::Coal,
                availability: None,
            }],
            aggregators: vec![AggregatorProfile::rigid("R", vec![load; steps])],
            reference_region: "R".into(),
        }
    }

    #[test]
    fn fills_blocks_in_merit_order() {
        let problem = DispatchProblem::new(single_region_model(3, 150.0), Horizon::new(3, 1.0));
        let sol = solve(&problem).unwrap();
        for h in 0..3 {
            assert!((sol.generation[0][h] - 150.0).abs() < 1e-7);
        }
        // 100 MW at 10 plus 50 MW at 20, each of three steps.
        assert!((sol.objective - 3.0 * 2000.0).abs() < 1e-6);
        assert!((sol.nodal_price[0][0] - 20.0).abs() < 1e-7);
    }

    #[test]
    fn shortfall_lands_in_unserved_at_penalty_price() {
        let problem = DispatchProblem::new(single_region_model(2, 350.0), Horizon::new(2, 1.0));
        let sol = solve(&problem).unwrap();
        for h in 0..2 {
            assert!((sol.unserved[0][h] - 50.0).abs() < 1e-7);
            assert!((sol.generation[0][h] - 300.0).abs() < 1e-7);
            assert!((sol.nodal_price[0][h] - DEFAULT_VALUE_OF_LOST_LOAD).abs() < 1e-6);
        }
    }

    #[test]
    fn surplus_must_run_wind_spills_at_zero_price() {
        let mut model = single_region_model(2, 80.0);
        model.generators.push(Generator {
            id: "w".into(),
            region: "R".into(),
            p_min: 0.0,
            p_max: 200.0,
            blocks: vec![BidBlock { price: 0.0, capacity: 200.0 }],
            kind: GeneratorKind::Wind,
            availability: Some(vec![1.0, 0.25]),
        });
        let problem = DispatchProblem::new(model, Horizon::new(2, 1.0));
        let sol = solve(&problem).unwrap();
        // Step 0: 200 MW of wind against 80 MW of load spills 120 MW free.
        assert!((sol.spill[0][0] - 120.0).abs() < 1e-7);
        assert!(sol.nodal_price[0][0].abs() < 1e-9);
        // Step 1: 50 MW of wind, thermal covers the remaining 30 MW.
        assert!(sol.spill[0][1].abs() < 1e-9);
        assert!((sol.nodal_price[0][1] - 10.0).abs() < 1e-7);
    }

    fn flexible_two_step_model() -> (NetworkModel, Horizon) {
        let horizon = Horizon::new(2, 1.0);
        let mut model = single_region_model(2, 100.0);
        model.aggregators[0] = AggregatorProfile {
            region: "R".into(),
            inflexible_load: vec![100.0, 100.0],
            responsive_load: vec![30.0, 90.0],
            pv: vec![20.0, 0.0],
            storage: StorageParams::midpoint(0.0, 1000.0, 0.9),
            flex_min: vec![0.0, 0.0],
            charge_cap: 200.0,
            };
        (model, horizon)
    }

    #[test]
    fn energy_budget_row_holds_exactly() {
        let (model, horizon) = flexible_two_step_model();
        let mut problem = DispatchProblem::new(model, horizon);
        problem.battery_loss.insert("R".into(), 7.5);
        let sol = solve(&problem).unwrap();
        let drawn: f64 = (0..2).map(|h| sol.flexible_demand[0][h]).sum();
        let target: f64 = (30.0 - 20.0) + 90.0 + 7.5;
        assert!((drawn - target).abs() < 1e-7, "{drawn} vs {target}");
        // Implied battery power nets out to exactly the loss.
        let net: f64 = (0..2).map(|h| sol.battery_power("R", h).unwrap()).sum();
        assert!((net - 7.5).abs() < 1e-7);
    }

    #[test]
    fn rejects_budget_outside_flex_box() {
        let (model, horizon) = flexible_two_step_model();
        let mut problem = DispatchProblem::new(model, horizon);
        // Loss so large the box [0, flex_max] cannot absorb it.
        problem.battery_loss.insert("R".into(), 1e6);
        match build(&problem) {
            Err(BuildError::EnergyBudgetUnsatisfiable { region, .. }) => assert_eq!(region, "R"),
            other => panic!("expected budget rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejects_weak_lost_load_penalty() {
        let (model, horizon) = flexible_two_step_model();
        let mut problem = DispatchProblem::new(model, horizon);
        problem.value_of_lost_load = 25.0;
        assert!(matches!(
            build(&problem),
            Err(BuildError::LostLoadNotDominant { .. })
        ));
    }

    #[test]
    fn variable_count_matches_model_size_formula() {
        // Two regions, one line, two aggregators, one 3-block generator:
        // per step 3 + 2 + 2 + 2 + 2 = 11 variables; rows 2 balance + 1
        // flow per step plus 1 energy-budget row for the flexible side.
        let (mut model, _) = flexible_two_step_model();
        model.regions.push(Region { id: "S".into(), name: String::new() });
        model.lines.push(Line {
            from: "R".into(),
            to: "S".into(),
            susceptance: 100.0,
            flow_min: -50.0,
            flow_max: 50.0,
        });
        model.aggregators.push(AggregatorProfile::rigid("S", vec![10.0, 10.0]));
        let problem = DispatchProblem::new(model, Horizon::new(2, 1.0));
        let built = build(&problem).unwrap();
        assert_eq!(built.lp.num_vars(), 2 * 11);
        assert_eq!(built.lp.num_rows(), 2 * 3 + 1);
        assert_eq!(built.layout.coupled_aggs, vec![0]);
    }

    #[test]
    fn two_region_flow_respects_line_limit() {
        // Cheap north, expensive south, 50 MW line: the line saturates and
        // the south generator covers the remainder at its own price.
        let mut model = single_region_model(1, 100.0);
        model.regions.push(Region { id: "S".into(), name: String::new() });
        model.lines.push(Line {
            from: "R".into(),
            to: "S".into(),
            susceptance: 100.0,
            flow_min: -50.0,
            flow_max: 50.0,
        });
        model.generators.push(Generator {
            id: "h".into(),
            region: "S".into(),
            p_min: 0.0,
            p_max: 300.0,
            blocks: vec![
                BidBlock { price: 50.0, capacity: 100.0 },
                BidBlock { price: 60.0, capacity: 100.0 },
                BidBlock { price: 70.0, capacity: 100.0 },
            ],
            kind: GeneratorKind::Hydro,
            availability: None,
        });
        model.aggregators.push(AggregatorProfile::rigid("S", vec![120.0]));
        let problem = DispatchProblem::new(model, Horizon::new(1, 1.0));
        let sol = solve(&problem).unwrap();
        assert!((sol.line_flows[0][0] - 50.0).abs() < 1e-7);
        assert!((sol.generation[0][0] - 150.0).abs() < 1e-7); // g: 100 local + 50 export
        assert!((sol.generation[1][0] - 70.0).abs() < 1e-7); // h covers the rest
        // Congestion separates prices: south pays its own marginal block.
        assert!((sol.nodal_price[1][0] - 50.0).abs() < 1e-7);
        assert!((sol.nodal_price[0][0] - 20.0).abs() < 1e-7);
        // Reference angle stays pinned.
        assert_eq!(sol.angles[0][0], 0.0);
    }

    #[test]
    fn balance_residuals_vanish_with_reported_flows() {
        let (model, horizon) = flexible_two_step_model();
        let mut problem = DispatchProblem::new(model, horizon);
        problem.battery_loss.insert("R".into(), 5.0);
        let sol = solve(&problem).unwrap();
        for h in 0..sol.horizon.steps {
            let residual = sol.generation.iter().map(|g| g[h]).sum::<f64>()
                + sol.unserved[0][h]
                - sol.spill[0][h]
                - sol.nett_demand("R", h).unwrap();
            assert!(residual.abs() < 1e-7, "step {h}: residual {residual}");
        }
    }

    #[test]
    fn widening_flex_never_costs_more() {
        let (model, horizon) = flexible_two_step_model();
        let problem = DispatchProblem::new(model.clone(), horizon);
        let tight = solve(&problem).unwrap().objective;
        let mut wide_model = model;
        wide_model.aggregators[0].charge_cap += 150.0;
        let wide = solve(&DispatchProblem::new(wide_model, horizon))
            .unwrap()
            .objective;
        assert!(wide <= tight + 1e-7, "widened flex raised cost: {wide} > {tight}");
    }

    #[test]
    fn price_scaling_preserves_the_argmin() {
        let (model, horizon) = flexible_two_step_model();
        let base = solve(&DispatchProblem::new(model.clone(), horizon)).unwrap();
        let mut scaled_model = model;
        for g in &mut scaled_model.generators {
            for b in &mut g.blocks {
                b.price *= 3.0;
            }
        }
        let mut scaled_problem = DispatchProblem::new(scaled_model, horizon);
        scaled_problem.value_of_lost_load *= 3.0;
        let scaled = solve(&scaled_problem).unwrap();
        assert!((scaled.objective - 3.0 * base.objective).abs() < 1e-6);
        for (a, b) in base.flexible_demand[0].iter().zip(&scaled.flexible_demand[0]) {
            assert!((a - b).abs() < 1e-9);
        }
        for (a, b) in base.generation[0].iter().zip(&scaled.generation[0]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn battery_power_and_nett_demand_read_off_the_solution() {
        let (model, horizon) = flexible_two_step_model();
        let sol = solve(&DispatchProblem::new(model, horizon)).unwrap();
        let pf = sol.flexible_demand[0][0];
        assert!((sol.nett_demand("R", 0).unwrap() - (100.0 + pf)).abs() < 1e-12);
        assert!(
            (sol.battery_power("R", 0).unwrap() - (pf - 30.0 + 20.0)).abs() < 1e-12
        );
        assert!(sol.nett_demand("missing", 0).is_err());
    }

    #[test]
    fn mps_dump_includes_named_dispatch_rows() {
        let (model, horizon) = flexible_two_step_model();
        let built = build(&DispatchProblem::new(model, horizon)).unwrap();
        let mps = built.lp.to_mps("dispatch");
        assert!(mps.contains("bal_R_0"));
        assert!(mps.contains("energy_R"));
        assert!(mps.contains("pg_g_0_1"));
    }
}
