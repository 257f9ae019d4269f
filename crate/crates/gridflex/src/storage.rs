//! Battery sizing by heuristic search over repeated dispatches.
//!
//! The dispatch LP never sees an explicit battery: storage acts through the
//! flexible-demand ceiling (`charge_cap`) and the round-trip loss added to
//! the energy-budget row. Both parameters are found here:
//!
//! - the *loss* is a fixed point — assume a loss, dispatch, read the
//!   implied battery schedule, recompute the loss it causes, and nudge the
//!   assumption upward until recomputation stops exceeding it
//!   ([`calibrate_loss`], a one-sided search that only ever raises the
//!   guess);
//! - the *charging cap* is an outer stepping search — raise the cap while
//!   the implied state of charge stays inside the battery's energy window,
//!   and keep the last cap that did ([`calibrate_charge_cap`]).
//!
//! The state of charge is reconstructed after the fact by integrating
//! implied battery power ([`soc_trajectory`]); the recursion carries no
//! efficiency term — losses enter only through the energy-budget row.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::dispatch::{self, DispatchError, DispatchProblem, DispatchSolution, UnknownAggregator};
use crate::grid::AggregatorProfile;

/// How the outer cap search treats multiple aggregators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    /// All caps step up together; an aggregator whose SOC breaks its window
    /// falls back one step and freezes while the others continue.
    #[default]
    Joint,
    /// Aggregators are calibrated one at a time in model order, earlier
    /// results frozen into the model for later ones.
    Sequential,
}

/// Tuning for the two searches. `alpha`/`beta` default (when `None`) to
/// per-aggregator scale-free values: 1% of peak responsive load and 0.5% of
/// daily responsive energy respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    /// Cap increment, MW.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Loss increment, MWh.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Loss fixed-point tolerance, MWh.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_outer")]
    pub max_outer_iters: usize,
    #[serde(default = "default_inner")]
    pub max_inner_iters: usize,
    #[serde(default)]
    pub mode: CalibrationMode,
}

fn default_epsilon() -> f64 {
    1.0
}
fn default_outer() -> usize {
    200
}
fn default_inner() -> usize {
    60
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            alpha: None,
            beta: None,
            epsilon: default_epsilon(),
            max_outer_iters: default_outer(),
            max_inner_iters: default_inner(),
            mode: CalibrationMode::default(),
        }
    }
}

impl CalibrationConfig {
    fn alpha_for(&self, agg: &AggregatorProfile) -> f64 {
        self.alpha.unwrap_or_else(|| {
            0.01 * agg
                .responsive_load
                .iter()
                .fold(0.0_f64, |acc, &v| acc.max(v))
        })
    }

    fn beta_for(&self, agg: &AggregatorProfile, dh: f64) -> f64 {
        let derived = 0.005 * agg.responsive_load.iter().sum::<f64>() * dh;
        let beta = self.beta.unwrap_or(derived);
        // A zero increment would stall the one-sided search; the tolerance
        // itself is the smallest meaningful step.
        if beta > 0.0 {
            beta
        } else {
            self.epsilon
        }
    }
}

/// Result for one aggregator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorCalibration {
    /// Highest charging cap whose implied SOC stayed within the window, MW.
    pub charge_cap: f64,
    /// Self-consistent round-trip loss at that cap, MWh per horizon.
    pub battery_loss: f64,
    /// SOC at every step under the final solution, MWh.
    pub soc_trajectory: Vec<f64>,
    /// True when the next cap step was tried and refuted (or the battery is
    /// degenerate); false when the outer iteration cap ended the search.
    pub converged: bool,
    /// Outer steps this aggregator's cap actually took.
    pub iterations: usize,
}

/// Calibration output for a whole model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StorageCalibration {
    pub aggregators: BTreeMap<String, AggregatorCalibration>,
}

impl StorageCalibration {
    /// Per-region losses, ready for [`DispatchProblem::battery_loss`].
    pub fn losses(&self) -> BTreeMap<String, f64> {
        self.aggregators
            .iter()
            .map(|(r, c)| (r.clone(), c.battery_loss))
            .collect()
    }

    /// Write caps and losses back into a problem.
    pub fn apply_to(&self, problem: &mut DispatchProblem) {
        for agg in &mut problem.model.aggregators {
            if let Some(cal) = self.aggregators.get(&agg.region) {
                agg.charge_cap = cal.charge_cap;
                problem
                    .battery_loss
                    .insert(agg.region.clone(), cal.battery_loss);
            }
        }
    }
}

/// Calibration failure.
#[derive(Debug, Clone, thiserror::Error)]
pub enum CalibrationError {
    #[error(transparent)]
    Dispatch(#[from] DispatchError),
    #[error(transparent)]
    UnknownAggregator(#[from] UnknownAggregator),
    #[error(
        "loss search for {region} did not settle after {iterations} iterations (last gap {gap} MWh)"
    )]
    LossNonConvergence {
        region: String,
        gap: f64,
        iterations: usize,
    },
}

/// Integrate implied battery power into a state-of-charge series: the first
/// entry is the initial charge; each later entry adds the previous step's
/// battery power times the step length.
pub fn soc_from_power(soc_initial: f64, battery_power: &[f64], step_length: f64) -> Vec<f64> {
    let mut soc = Vec::with_capacity(battery_power.len());
    let mut level = soc_initial;
    for (h, &p) in battery_power.iter().enumerate() {
        if h > 0 {
            level += battery_power[h - 1] * step_length;
        }
        soc.push(level);
        let _ = p;
    }
    soc
}

/// SOC series for one aggregator of a solved dispatch.
pub fn soc_trajectory(
    solution: &DispatchSolution,
    region: &str,
) -> Result<Vec<f64>, UnknownAggregator> {
    let steps = solution.horizon.steps;
    let powers: Vec<f64> = (0..steps)
        .map(|h| solution.battery_power(region, h))
        .collect::<Result<_, _>>()?;
    let ctx = solution
        .aggregators
        .iter()
        .find(|a| a.region == region)
        .expect("battery_power already resolved the region");
    Ok(soc_from_power(
        ctx.storage.soc_initial,
        &powers,
        solution.horizon.step_length,
    ))
}

/// Round-trip loss implied by a solution: the non-recoverable share of all
/// charging energy, `(1 − η) · Σ max(battery_power, 0) · Δh`.
pub fn battery_energy_loss(
    solution: &DispatchSolution,
    region: &str,
) -> Result<f64, UnknownAggregator> {
    let steps = solution.horizon.steps;
    let ctx = solution
        .aggregators
        .iter()
        .find(|a| a.region == region)
        .ok_or_else(|| UnknownAggregator {
            region: region.to_string(),
        })?;
    let mut charged = 0.0;
    for h in 0..steps {
        charged += solution.battery_power(region, h)?.max(0.0) * solution.horizon.step_length;
    }
    Ok((1.0 - ctx.storage.round_trip_efficiency) * charged)
}

fn within_window(soc: &[f64], agg: &AggregatorProfile) -> bool {
    const SOC_TOL: f64 = 1e-6;
    soc.iter().all(|&v| {
        v >= agg.storage.soc_min - SOC_TOL && v <= agg.storage.soc_max + SOC_TOL
    })
}

/// One-sided fixed-point search for a single aggregator's loss at a given
/// charging cap; other aggregators keep the template's losses. Returns the
/// first guess whose recomputed loss no longer exceeds it by more than
/// epsilon, together with the dispatch solved at that guess.
pub fn calibrate_loss(
    template: &DispatchProblem,
    region: &str,
    charge_cap: f64,
    config: &CalibrationConfig,
) -> Result<(f64, DispatchSolution), CalibrationError> {
    let mut problem = template.clone();
    let agg = problem
        .model
        .aggregators
        .iter_mut()
        .find(|a| a.region == region)
        .ok_or_else(|| UnknownAggregator {
            region: region.to_string(),
        })?;
    agg.charge_cap = charge_cap;
    let beta = config.beta_for(
        problem.model.aggregator(region).unwrap(),
        problem.horizon.step_length,
    );

    let mut guess = 0.0;
    for _ in 0..config.max_inner_iters {
        problem.battery_loss.insert(region.to_string(), guess);
        let solution = dispatch::solve(&problem)?;
        let recomputed = battery_energy_loss(&solution, region)?;
        if recomputed - guess <= config.epsilon {
            return Ok((guess, solution));
        }
        guess += beta;
    }
    problem.battery_loss.insert(region.to_string(), guess);
    let solution = dispatch::solve(&problem)?;
    let gap = battery_energy_loss(&solution, region)? - guess;
    if gap <= config.epsilon {
        return Ok((guess, solution));
    }
    Err(CalibrationError::LossNonConvergence {
        region: region.to_string(),
        gap,
        iterations: config.max_inner_iters,
    })
}

/// Joint loss fixed point: every listed aggregator's guess starts at zero
/// and steps up until its recomputed loss stops exceeding it. Aggregators
/// not listed keep the template's losses.
fn joint_losses(
    template: &DispatchProblem,
    regions: &[String],
    config: &CalibrationConfig,
) -> Result<(BTreeMap<String, f64>, DispatchSolution), CalibrationError> {
    let mut problem = template.clone();
    let dh = problem.horizon.step_length;
    let betas: BTreeMap<String, f64> = regions
        .iter()
        .map(|r| {
            let agg = problem.model.aggregator(r).expect("validated");
            (r.clone(), config.beta_for(agg, dh))
        })
        .collect();
    let mut guesses: BTreeMap<String, f64> = regions.iter().map(|r| (r.clone(), 0.0)).collect();

    for _ in 0..config.max_inner_iters {
        for (r, g) in &guesses {
            problem.battery_loss.insert(r.clone(), *g);
        }
        let solution = dispatch::solve(&problem)?;
        let mut worst: Option<(String, f64)> = None;
        for r in regions {
            let gap = battery_energy_loss(&solution, r)? - guesses[r];
            if gap > config.epsilon {
                guesses.insert(r.clone(), guesses[r] + betas[r]);
                if worst.as_ref().map_or(true, |(_, wg)| gap > *wg) {
                    worst = Some((r.clone(), gap));
                }
            }
        }
        if worst.is_none() {
            return Ok((guesses, solution));
        }
    }
    // Report the widest remaining gap.
    for (r, g) in &guesses {
        problem.battery_loss.insert(r.clone(), *g);
    }
    let solution = dispatch::solve(&problem)?;
    let mut worst = ("".to_string(), f64::NEG_INFINITY);
    for r in regions {
        let gap = battery_energy_loss(&solution, r)? - guesses[r];
        if gap > worst.1 {
            worst = (r.clone(), gap);
        }
    }
    if worst.1 <= config.epsilon {
        return Ok((guesses, solution));
    }
    Err(CalibrationError::LossNonConvergence {
        region: worst.0,
        gap: worst.1,
        iterations: config.max_inner_iters,
    })
}

/// Outer stepping search for every aggregator's charging cap (and the loss
/// that goes with it). Aggregators with a degenerate energy window
/// (`soc_min == soc_max`) stay at cap 0.
pub fn calibrate_charge_cap(
    template: &DispatchProblem,
    config: &CalibrationConfig,
) -> Result<StorageCalibration, CalibrationError> {
    match config.mode {
        CalibrationMode::Joint => calibrate_joint(template, config),
        CalibrationMode::Sequential => calibrate_sequential(template, config),
    }
}

fn calibrate_joint(
    template: &DispatchProblem,
    config: &CalibrationConfig,
) -> Result<StorageCalibration, CalibrationError> {
    let mut problem = template.clone();
    let regions: Vec<String> = problem
        .model
        .aggregators
        .iter()
        .map(|a| a.region.clone())
        .collect();

    let mut caps: BTreeMap<String, f64> = regions.iter().map(|r| (r.clone(), 0.0)).collect();
    let mut iterations: BTreeMap<String, usize> =
        regions.iter().map(|r| (r.clone(), 0)).collect();
    // Degenerate windows and zero step sizes can never move off zero.
    let mut active: Vec<String> = regions
        .iter()
        .filter(|r| {
            let agg = problem.model.aggregator(r).expect("validated");
            agg.storage.soc_max > agg.storage.soc_min && config.alpha_for(agg) > 0.0
        })
        .cloned()
        .collect();
    let mut refuted: BTreeMap<String, bool> =
        regions.iter().map(|r| (r.clone(), !active.contains(r))).collect();

    // Evaluate the starting point (all caps 0); keep its artefacts in case
    // no step is ever admissible.
    let searched: Vec<String> = active.clone();
    set_caps(&mut problem, &caps);
    let (mut losses, mut solution) = joint_losses(&problem, &searched, config)?;
    let mut trajectories = trajectories_for(&solution, &regions)?;
    // A cap-0 window violation means no feasible cap exists at all; the
    // offending aggregator simply stays frozen at zero.
    for r in &regions {
        let agg = problem.model.aggregator(r).expect("validated");
        if !within_window(&trajectories[r], agg) {
            active.retain(|a| a != r);
            refuted.insert(r.clone(), true);
        }
    }

    for _ in 0..config.max_outer_iters {
        if active.is_empty() {
            break;
        }
        let mut candidate_caps = caps.clone();
        for r in &active {
            let agg = problem.model.aggregator(r).expect("validated");
            candidate_caps.insert(r.clone(), caps[r] + config.alpha_for(agg));
        }
        let mut candidate = problem.clone();
        set_caps(&mut candidate, &candidate_caps);
        let (cand_losses, cand_solution) = joint_losses(&candidate, &searched, config)?;
        let cand_traj = trajectories_for(&cand_solution, &regions)?;

        let mut violators = Vec::new();
        for r in &active {
            let agg = candidate.model.aggregator(r).expect("validated");
            if !within_window(&cand_traj[r], agg) {
                violators.push(r.clone());
            }
        }
        if violators.is_empty() {
            caps = candidate_caps;
            losses = cand_losses;
            solution = cand_solution;
            trajectories = cand_traj;
            for r in &active {
                *iterations.get_mut(r).unwrap() += 1;
            }
        } else {
            // Freeze violators one step back; the accepted state already
            // reflects their last good cap.
            for r in &violators {
                refuted.insert(r.clone(), true);
                active.retain(|a| a != r);
            }
            if active.is_empty() {
                break;
            }
        }
    }

    let mut out = BTreeMap::new();
    for r in &regions {
        out.insert(
            r.clone(),
            AggregatorCalibration {
                charge_cap: caps[r],
                battery_loss: losses.get(r).copied().unwrap_or(0.0),
                soc_trajectory: trajectories[r].clone(),
                converged: refuted[r],
                iterations: iterations[r],
            },
        );
    }
    let _ = solution;
    Ok(StorageCalibration { aggregators: out })
}

fn calibrate_sequential(
    template: &DispatchProblem,
    config: &CalibrationConfig,
) -> Result<StorageCalibration, CalibrationError> {
    let mut problem = template.clone();
    let regions: Vec<String> = problem
        .model
        .aggregators
        .iter()
        .map(|a| a.region.clone())
        .collect();
    let mut out = BTreeMap::new();

    for region in &regions {
        let agg = problem.model.aggregator(region).expect("validated").clone();
        let alpha = config.alpha_for(&agg);
        if agg.storage.soc_max <= agg.storage.soc_min || alpha <= 0.0 {
            let (loss, solution) = calibrate_loss(&problem, region, 0.0, config)?;
            let soc = soc_trajectory(&solution, region)?;
            freeze(&mut problem, region, 0.0, loss);
            out.insert(
                region.clone(),
                AggregatorCalibration {
                    charge_cap: 0.0,
                    battery_loss: loss,
                    soc_trajectory: soc,
                    converged: true,
                    iterations: 0,
                },
            );
            continue;
        }

        let mut accepted: Option<(f64, f64, Vec<f64>)> = None;
        let mut converged = false;
        let mut steps_taken = 0usize;
        for k in 0..=config.max_outer_iters {
            let cap = alpha * k as f64;
            let (loss, solution) = calibrate_loss(&problem, region, cap, config)?;
            let soc = soc_trajectory(&solution, region)?;
            if within_window(&soc, &agg) {
                accepted = Some((cap, loss, soc));
                steps_taken = k;
            } else {
                converged = true;
                break;
            }
        }
        // A violation at cap 0 leaves nothing feasible; zero is final.
        if accepted.is_none() {
            converged = true;
        }
        let (cap, loss, soc) = accepted.unwrap_or((0.0, 0.0, Vec::new()));
        freeze(&mut problem, region, cap, loss);
        out.insert(
            region.clone(),
            AggregatorCalibration {
                charge_cap: cap,
                battery_loss: loss,
                soc_trajectory: soc,
                converged,
                iterations: steps_taken,
            },
        );
    }
    Ok(StorageCalibration { aggregators: out })
}

fn set_caps(problem: &mut DispatchProblem, caps: &BTreeMap<String, f64>) {
    for agg in &mut problem.model.aggregators {
        if let Some(&cap) = caps.get(&agg.region) {
            agg.charge_cap = cap;
        }
    }
}

fn freeze(problem: &mut DispatchProblem, region: &str, cap: f64, loss: f64) {
    for agg in &mut problem.model.aggregators {
        if agg.region == region {
            agg.charge_cap = cap;
        }
    }
    problem.battery_loss.insert(region.to_string(), loss);
}

fn trajectories_for(
    solution: &DispatchSolution,
    regions: &[String],
) -> Result<BTreeMap<String, Vec<f64>>, UnknownAggregator> {
    regions
        .iter()
        .map(|r| soc_trajectory(solution, r).map(|t| (r.clone(), t)))
        .collect()
}
