//! Post-dispatch analysis: balancing metrics read off solved days, and
//! the loadability margin — how much extra demand a region could take at
//! each solved operating point before generation or the network gives out.

use serde::{Deserialize, Serialize};

use crate::dispatch::DispatchSolution;
use crate::grid::NetworkModel;
use crate::linalg::{DenseMatrix, LuFactors, SingularMatrix};

/// A slack above this many MW marks the hour as spilled / unserved.
pub const SLACK_HOUR_THRESHOLD: f64 = 1e-3;

/// Aggregate balancing outcomes. Additive across days, so a year is the
/// running merge of its daily metrics.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BalancingMetrics {
    /// MWh dumped because must-run output exceeded what the grid could absorb.
    pub spilled_energy: f64,
    /// Hours in which any region spilled more than the threshold.
    pub spilled_hours: usize,
    /// MWh of demand no generator could cover.
    pub unserved_energy: f64,
    pub unserved_hours: usize,
    /// MWh produced by gas turbines (the backup fleet).
    pub backup_energy: f64,
    /// Total dispatch cost, $.
    pub dispatch_cost: f64,
    pub total_hours: usize,
}

impl BalancingMetrics {
    pub fn from_solution(solution: &DispatchSolution) -> Self {
        let steps = solution.horizon.steps;
        let dh = solution.horizon.step_length;
        let mut m = BalancingMetrics {
            dispatch_cost: solution.objective,
            total_hours: steps,
            ..Default::default()
        };
        for h in 0..steps {
            let spill: f64 = solution.spill.iter().map(|s| s[h]).sum();
            let unserved: f64 = solution.unserved.iter().map(|u| u[h]).sum();
            m.spilled_energy += spill * dh;
            m.unserved_energy += unserved * dh;
            if solution.spill.iter().any(|s| s[h] > SLACK_HOUR_THRESHOLD) {
                m.spilled_hours += 1;
            }
            if solution.unserved.iter().any(|u| u[h] > SLACK_HOUR_THRESHOLD) {
                m.unserved_hours += 1;
            }
            for (g, series) in solution.generation.iter().enumerate() {
                if solution.is_backup[g] {
                    m.backup_energy += series[h] * dh;
                }
            }
        }
        m
    }

    /// Fold another period into this one.
    pub fn merge(&mut self, other: &BalancingMetrics) {
        self.spilled_energy += other.spilled_energy;
        self.spilled_hours += other.spilled_hours;
        self.unserved_energy += other.unserved_energy;
        self.unserved_hours += other.unserved_hours;
        self.backup_energy += other.backup_energy;
        self.dispatch_cost += other.dispatch_cost;
        self.total_hours += other.total_hours;
    }

    pub fn spilled_hours_pct(&self) -> f64 {
        if self.total_hours == 0 {
            0.0
        } else {
            100.0 * self.spilled_hours as f64 / self.total_hours as f64
        }
    }
}

/// Loadability margins for one region over one solved horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadabilityResult {
    pub target_region: String,
    /// MW added per probe step.
    pub step_size: f64,
    /// Total served consumption (MW) at the last feasible probe, per step.
    /// Counts rooftop-supplied load alongside grid draw: the question is
    /// how much load the system can sustain, not who happens to serve it.
    pub per_hour: Vec<f64>,
    pub average: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum LoadabilityError {
    #[error("region {0} is not in the model")]
    UnknownRegion(String),
    #[error("region {region} has no generators to pick up local load growth")]
    NoGeneratorsInRegion { region: String },
    #[error("probe step size must be positive, got {0}")]
    InvalidStepSize(f64),
    #[error("solution does not match the model: {reason}")]
    MismatchedSolution { reason: String },
    #[error("susceptance matrix is singular; is the network connected?")]
    SingularNetwork,
}

/// Network flow oracle: the reduced nodal susceptance matrix factored once,
/// then reused for every probe's injections.
struct FlowSolver {
    region_count: usize,
    reference: usize,
    /// LU of the susceptance matrix with the reference row/column dropped;
    /// `None` for a single-region model (no flows to check).
    reduced: Option<LuFactors>,
    /// from, to, susceptance, flow_min, flow_max per line.
    lines: Vec<(usize, usize, f64, f64, f64)>,
}

impl FlowSolver {
    fn new(model: &NetworkModel) -> Result<Self, SingularMatrix> {
        let n = model.regions.len();
        let reference = model
            .regions
            .iter()
            .position(|r| r.id == model.reference_region)
            .unwrap_or(0);
        let lines: Vec<(usize, usize, f64, f64, f64)> = model
            .lines
            .iter()
            .map(|l| {
                (
                    model.region_index(&l.from).unwrap(),
                    model.region_index(&l.to).unwrap(),
                    l.susceptance,
                    l.flow_min,
                    l.flow_max,
                )
            })
            .collect();
        let reduced = if n > 1 {
            let mut b = DenseMatrix::zeros(n);
            for &(a, c, s, _, _) in &lines {
                b.add(a, a, s);
                b.add(c, c, s);
                b.add(a, c, -s);
                b.add(c, a, -s);
            }
            let keep: Vec<usize> = (0..n).filter(|&r| r != reference).collect();
            let mut r = DenseMatrix::zeros(n - 1);
            for (i, &ri) in keep.iter().enumerate() {
                for (j, &rj) in keep.iter().enumerate() {
                    r.set(i, j, b.get(ri, rj));
                }
            }
            Some(LuFactors::factor(r)?)
        } else {
            None
        };
        Ok(FlowSolver {
            region_count: n,
            reference,
            reduced,
            lines,
        })
    }

    /// Line flows for the given net injections (MW per region). Angles come
    /// from the reduced solve with the reference pinned at zero.
    fn flows(&self, injections: &[f64]) -> Vec<f64> {
        let theta: Vec<f64> = match &self.reduced {
            None => vec![0.0; self.region_count],
            Some(lu) => {
                let rhs: Vec<f64> = (0..self.region_count)
                    .filter(|&r| r != self.reference)
                    .map(|r| injections[r])
                    .collect();
                let reduced_theta = lu.solve(&rhs);
                let mut full = vec![0.0; self.region_count];
                let mut k = 0;
                for (r, slot) in full.iter_mut().enumerate() {
                    if r != self.reference {
                        *slot = reduced_theta[k];
                        k += 1;
                    }
                }
                full
            }
        };
        self.lines
            .iter()
            .map(|&(a, c, s, _, _)| s * (theta[a] - theta[c]))
            .collect()
    }

    fn within_limits(&self, flows: &[f64]) -> bool {
        self.lines
            .iter()
            .zip(flows)
            .all(|(&(_, _, _, lo, hi), &f)| f >= lo - 1e-6 && f <= hi + 1e-6)
    }
}

/// Spread `amount` across members with the given headrooms: equal shares,
/// re-spreading the overflow of capped members until everything is placed.
/// Returns `None` when the combined headroom cannot absorb the amount.
fn spread_equally(headroom: &[f64], amount: f64) -> Option<Vec<f64>> {
    let total: f64 = headroom.iter().sum();
    if amount > total + 1e-9 {
        return None;
    }
    let mut alloc = vec![0.0; headroom.len()];
    let mut remaining = amount;
    let mut active: Vec<usize> = (0..headroom.len()).filter(|&i| headroom[i] > 0.0).collect();
    while remaining > 1e-9 && !active.is_empty() {
        let share = remaining / active.len() as f64;
        let mut still = Vec::with_capacity(active.len());
        for &i in &active {
            let take = (headroom[i] - alloc[i]).min(share);
            alloc[i] += take;
            remaining -= take;
            if headroom[i] - alloc[i] > 1e-12 {
                still.push(i);
            }
        }
        active = still;
    }
    Some(alloc)
}

/// How far one region's demand can grow from each solved operating point.
///
/// Probe k adds `k * step_size` MW to the target region's demand. Local
/// generators pick it up first, sharing equally and capping out at their
/// availability-adjusted limits; once the region is exhausted the rest of
/// the fleet shares the remainder the same way. Slack injections from the
/// solved day (unserved, spill) are held fixed. The probe stops when no
/// headroom is left or a line limit breaks; the margin recorded for the
/// hour is the total consumption — grid demand plus rooftop output — at
/// the last feasible probe.
pub fn loadability(
    model: &NetworkModel,
    solution: &DispatchSolution,
    target_region: &str,
    step_size: f64,
) -> Result<LoadabilityResult, LoadabilityError> {
    if step_size <= 0.0 || !step_size.is_finite() {
        return Err(LoadabilityError::InvalidStepSize(step_size));
    }
    if model.region_index(target_region).is_none() {
        return Err(LoadabilityError::UnknownRegion(target_region.to_string()));
    }
    let model_regions: Vec<&str> = model.regions.iter().map(|r| r.id.as_str()).collect();
    let solution_regions: Vec<&str> = solution.regions.iter().map(|s| s.as_str()).collect();
    if model_regions != solution_regions {
        return Err(LoadabilityError::MismatchedSolution {
            reason: format!(
                "model regions {model_regions:?} vs solution regions {solution_regions:?}"
            ),
        });
    }

    // Generators in solution order, with their model data and region index.
    let mut gens = Vec::with_capacity(solution.generators.len());
    for id in &solution.generators {
        let g = model
            .generators
            .iter()
            .find(|g| &g.id == id)
            .ok_or_else(|| LoadabilityError::MismatchedSolution {
                reason: format!("generator {id} missing from the model"),
            })?;
        let region = model.region_index(&g.region).unwrap();
        gens.push((g, region));
    }
    if !gens.iter().any(|(g, _)| g.region == target_region) {
        return Err(LoadabilityError::NoGeneratorsInRegion {
            region: target_region.to_string(),
        });
    }

    let solver = FlowSolver::new(model).map_err(|_| LoadabilityError::SingularNetwork)?;
    let n = model.regions.len();
    let target = model.region_index(target_region).unwrap();
    let local: Vec<usize> = (0..gens.len()).filter(|&i| gens[i].1 == target).collect();
    let remote: Vec<usize> = (0..gens.len()).filter(|&i| gens[i].1 != target).collect();

    let steps = solution.horizon.steps;
    let mut per_hour = Vec::with_capacity(steps);
    for h in 0..steps {
        // Net injection per region at the solved point, slacks included.
        let mut base_inj = vec![0.0; n];
        for (i, &(_, r)) in gens.iter().enumerate() {
            base_inj[r] += solution.generation[i][h];
        }
        for r in 0..n {
            base_inj[r] += solution.unserved[r][h] - solution.spill[r][h];
        }
        for (r, region) in model.regions.iter().enumerate() {
            base_inj[r] -= solution
                .nett_demand(&region.id, h)
                .map_err(|e| LoadabilityError::MismatchedSolution {
                    reason: e.to_string(),
                })?;
        }

        let headroom: Vec<f64> = gens
            .iter()
            .enumerate()
            .map(|(i, (g, _))| (g.effective_p_max(h) - solution.generation[i][h]).max(0.0))
            .collect();
        let local_room: f64 = local.iter().map(|&i| headroom[i]).sum();
        let remote_room: f64 = remote.iter().map(|&i| headroom[i]).sum();
        let max_probes = ((local_room + remote_room) / step_size).floor() as usize + 1;

        let mut feasible_probes = 0usize;
        for k in 1..=max_probes {
            let extra = k as f64 * step_size;
            // Tier 1: the target region's own generators.
            let local_take = extra.min(local_room);
            let local_alloc =
                spread_equally(&local.iter().map(|&i| headroom[i]).collect::<Vec<_>>(), local_take)
                    .expect("capped at the summed headroom");
            // Tier 2: everyone else shares what is left.
            let overflow = extra - local_take;
            let remote_alloc = match spread_equally(
                &remote.iter().map(|&i| headroom[i]).collect::<Vec<_>>(),
                overflow,
            ) {
                Some(a) => a,
                None => break, // the whole fleet is exhausted
            };

            let mut inj = base_inj.clone();
            inj[target] -= extra;
            for (pos, &i) in local.iter().enumerate() {
                inj[gens[i].1] += local_alloc[pos];
            }
            for (pos, &i) in remote.iter().enumerate() {
                inj[gens[i].1] += remote_alloc[pos];
            }
            if !solver.within_limits(&solver.flows(&inj)) {
                break;
            }
            feasible_probes = k;
        }

        let rooftop: f64 = solution.aggregators.iter().map(|a| a.pv[h]).sum();
        let base_consumption = solution.system_demand(h) + rooftop;
        per_hour.push(base_consumption + feasible_probes as f64 * step_size);
    }

    let average = per_hour.iter().sum::<f64>() / per_hour.len().max(1) as f64;
    Ok(LoadabilityResult {
        target_region: target_region.to_string(),
        step_size,
        per_hour,
        average,
    })
}
