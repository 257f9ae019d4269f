//! Static domain types: network topology, generators with block bids,
//! aggregator demand profiles, and the time axis, plus their validation.
//!
//! Units are MW, MWh and $/MWh throughout; ingestion converts GW/GWh inputs
//! at the boundary. All types are plain immutable data — safe to share
//! across worker threads once constructed.

use serde::{Deserialize, Serialize};

/// Discrete dispatch horizon: `steps` intervals of `step_length` hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Horizon {
    pub steps: usize,
    /// Interval length in hours (Δh).
    pub step_length: f64,
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon {
            steps: 24,
            step_length: 1.0,
        }
    }
}

impl Horizon {
    pub fn new(steps: usize, step_length: f64) -> Self {
        Horizon { steps, step_length }
    }
}

/// A dispatch region (network node).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    #[serde(default)]
    pub name: String,
}

/// DC interconnector between two regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: String,
    pub to: String,
    /// Flow per radian of angle difference, MW.
    pub susceptance: f64,
    /// Directed flow limits in MW (negative lower bound = reverse capacity).
    pub flow_min: f64,
    pub flow_max: f64,
}

/// One step of a piecewise-linear supply bid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidBlock {
    /// $/MWh offered for this block.
    pub price: f64,
    /// Block width in MW.
    pub capacity: f64,
}

/// Generation technology; drives renewable handling and backup accounting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Coal,
    GasTurbine,
    Hydro,
    Biomass,
    Wind,
    Csp,
}

impl GeneratorKind {
    /// Variable-output sources that bid at zero cost and must run at their
    /// available output (surplus shows up as spill, not as a turn-down).
    pub fn is_renewable(self) -> bool {
        matches!(self, GeneratorKind::Wind | GeneratorKind::Csp)
    }
}

/// A dispatchable unit with a block bid curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub id: String,
    pub region: String,
    #[serde(default)]
    pub p_min: f64,
    pub p_max: f64,
    pub blocks: Vec<BidBlock>,
    pub kind: GeneratorKind,
    /// Optional per-step multipliers on `p_max` (variable resources). May
    /// cover one horizon or a whole multi-day trace sliced by the harness.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub availability: Option<Vec<f64>>,
}

impl Generator {
    /// Upper output limit at a step, after availability derating.
    pub fn effective_p_max(&self, step: usize) -> f64 {
        match &self.availability {
            Some(a) => self.p_max * a[step % a.len()],
            None => self.p_max,
        }
    }

    /// Cost of producing `output` MW for one hour, filling blocks in order.
    pub fn cost_at(&self, output: f64) -> f64 {
        let mut remaining = output;
        let mut cost = 0.0;
        for b in &self.blocks {
            let take = remaining.min(b.capacity).max(0.0);
            cost += take * b.price;
            remaining -= take;
        }
        cost
    }

    /// Convenience builder: three equal blocks of `p_max / 3` at the given
    /// prices — the standard completion when only prices are known.
    pub fn with_equal_blocks(
        id: impl Into<String>,
        region: impl Into<String>,
        kind: GeneratorKind,
        p_max: f64,
        prices: [f64; 3],
    ) -> Self {
        Generator {
            id: id.into(),
            region: region.into(),
            p_min: 0.0,
            p_max,
            blocks: prices
                .iter()
                .map(|&price| BidBlock {
                    price,
                    capacity: p_max / 3.0,
                })
                .collect(),
            kind,
            availability: None,
        }
    }
}

/// Aggregate battery envelope behind one demand aggregator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageParams {
    /// Stored-energy floor, MWh.
    pub soc_min: f64,
    /// Stored-energy ceiling, MWh.
    pub soc_max: f64,
    /// Stored energy at the first step, MWh.
    pub soc_initial: f64,
    /// Fraction of charged energy recoverable on discharge, in (0, 1].
    pub round_trip_efficiency: f64,
}

impl StorageParams {
    /// A zero-capacity battery (no flexibility from storage).
    pub fn none() -> Self {
        StorageParams {
            soc_min: 0.0,
            soc_max: 0.0,
            soc_initial: 0.0,
            round_trip_efficiency: 1.0,
        }
    }

    /// Battery with the given energy window, starting at the midpoint.
    pub fn midpoint(soc_min: f64, soc_max: f64, round_trip_efficiency: f64) -> Self {
        StorageParams {
            soc_min,
            soc_max,
            soc_initial: 0.5 * (soc_min + soc_max),
            round_trip_efficiency,
        }
    }
}

/// One region's demand side: inflexible load, the price-responsive users'
/// unmodified consumption, their PV output, and the storage envelope that
/// determines how far actual grid draw may deviate from that baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorProfile {
    pub region: String,
    /// Load that must be served as given, MW per step.
    pub inflexible_load: Vec<f64>,
    /// Responsive users' pre-shift consumption, MW per step.
    pub responsive_load: Vec<f64>,
    /// Behind-the-meter PV output, MW per step.
    pub pv: Vec<f64>,
    pub storage: StorageParams,
    /// Per-step floor on flexible grid draw (0 = users never export).
    pub flex_min: Vec<f64>,
    /// Battery charging-rate parameter, MW; set by calibration.
    pub charge_cap: f64,
}

impl AggregatorProfile {
    /// Ceiling on flexible grid draw at a step: the users' unmodified
    /// consumption plus whatever the battery can absorb.
    pub fn flex_max(&self, step: usize) -> f64 {
        self.charge_cap + self.responsive_load[step]
    }

    /// True when the flex interval is a single point at every step, i.e.
    /// the aggregator has no scheduling freedom.
    pub fn is_pinned(&self) -> bool {
        (0..self.flex_min.len()).all(|h| self.flex_min[h] >= self.flex_max(h))
    }

    /// An aggregator with no flexibility, PV or storage: the whole demand
    /// is served as given.
    pub fn rigid(region: impl Into<String>, inflexible_load: Vec<f64>) -> Self {
        let steps = inflexible_load.len();
        AggregatorProfile {
            region: region.into(),
            inflexible_load,
            responsive_load: vec![0.0; steps],
            pv: vec![0.0; steps],
            storage: StorageParams::none(),
            flex_min: vec![0.0; steps],
            charge_cap: 0.0,
        }
    }
}

/// The complete static model: topology, fleet, demand side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkModel {
    pub regions: Vec<Region>,
    pub lines: Vec<Line>,
    pub generators: Vec<Generator>,
    /// Exactly one profile per region.
    pub aggregators: Vec<AggregatorProfile>,
    /// Region whose voltage angle is fixed to zero.
    pub reference_region: String,
}

impl NetworkModel {
    pub fn region_index(&self, id: &str) -> Option<usize> {
        self.regions.iter().position(|r| r.id == id)
    }

    pub fn aggregator(&self, region: &str) -> Option<&AggregatorProfile> {
        self.aggregators.iter().find(|a| a.region == region)
    }
}

/// A broken invariant, naming the offending entity and the rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

const BLOCK_SUM_TOL: f64 = 1e-6;

/// Check every structural invariant; an empty list means the model is
/// well-formed for the given horizon. Pure and idempotent.
pub fn validate(model: &NetworkModel, horizon: &Horizon) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |entity: &str, rule: String| {
        out.push(Violation {
            entity: entity.to_string(),
            rule,
        });
    };

    if horizon.steps == 0 {
        push("horizon", "steps must be at least 1".into());
    }
    if horizon.step_length <= 0.0 {
        push("horizon", "step_length must be positive".into());
    }

    for (i, r) in model.regions.iter().enumerate() {
        if model.regions[..i].iter().any(|p| p.id == r.id) {
            push(&r.id, "duplicate region id".into());
        }
    }
    if model.region_index(&model.reference_region).is_none() {
        push(
            &model.reference_region,
            "reference region is not in the region list".into(),
        );
    }

    for (i, line) in model.lines.iter().enumerate() {
        let entity = format!("line {} -> {}", line.from, line.to);
        if line.from == line.to {
            push(&entity, "endpoints must differ".into());
        }
        if model.region_index(&line.from).is_none() {
            push(&entity, format!("unknown endpoint region {}", line.from));
        }
        if model.region_index(&line.to).is_none() {
            push(&entity, format!("unknown endpoint region {}", line.to));
        }
        if line.flow_min > line.flow_max {
            push(&entity, "flow_min exceeds flow_max".into());
        }
        if line.susceptance <= 0.0 {
            push(&entity, "susceptance must be positive".into());
        }
        let _ = i;
    }

    // Connectivity over the undirected line graph.
    if !model.regions.is_empty() {
        let n = model.regions.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(r) = stack.pop() {
            for line in &model.lines {
                let (a, b) = (
                    model.region_index(&line.from),
                    model.region_index(&line.to),
                );
                if let (Some(a), Some(b)) = (a, b) {
                    let next = if a == r {
                        b
                    } else if b == r {
                        a
                    } else {
                        continue;
                    };
                    if !seen[next] {
                        seen[next] = true;
                        stack.push(next);
                    }
                }
            }
        }
        if n > 1 && seen.iter().any(|s| !s) {
            push("network", "line graph is not connected".into());
        }
    }

    for (i, g) in model.generators.iter().enumerate() {
        if model.generators[..i].iter().any(|p| p.id == g.id) {
            push(&g.id, "duplicate generator id".into());
        }
        if model.region_index(&g.region).is_none() {
            push(&g.id, format!("unknown region {}", g.region));
        }
        if g.p_min < 0.0 || g.p_min > g.p_max {
            push(&g.id, format!("p_min {} outside [0, p_max = {}]", g.p_min, g.p_max));
        }
        let block_sum: f64 = g.blocks.iter().map(|b| b.capacity).sum();
        if (block_sum - g.p_max).abs() > BLOCK_SUM_TOL {
            push(
                &g.id,
                format!("block capacities sum to {block_sum} MW, expected p_max = {} MW", g.p_max),
            );
        }
        for pair in g.blocks.windows(2) {
            if pair[1].price < pair[0].price {
                push(&g.id, "block prices must be nondecreasing".into());
                break;
            }
        }
        for b in &g.blocks {
            if b.price < 0.0 {
                push(&g.id, format!("negative block price {}", b.price));
            }
            if b.capacity < 0.0 {
                push(&g.id, format!("negative block capacity {}", b.capacity));
            }
        }
        if g.kind.is_renewable() && (g.blocks.len() != 1 || g.blocks[0].price != 0.0) {
            push(&g.id, "variable renewables must bid a single zero-price block".into());
        }
        if let Some(avail) = &g.availability {
            if avail.is_empty() || avail.len() % horizon.steps.max(1) != 0 {
                push(
                    &g.id,
                    format!(
                        "availability length {} is not a multiple of {} steps",
                        avail.len(),
                        horizon.steps
                    ),
                );
            }
            if avail.iter().any(|&v| !(0.0..=1.0 + 1e-9).contains(&v)) {
                push(&g.id, "availability values must lie in [0, 1]".into());
            }
        }
    }

    for region in &model.regions {
        let count = model
            .aggregators
            .iter()
            .filter(|a| a.region == region.id)
            .count();
        if count != 1 {
            push(
                &region.id,
                format!("region must have exactly one aggregator, found {count}"),
            );
        }
    }
    for a in &model.aggregators {
        let entity = format!("aggregator {}", a.region);
        if model.region_index(&a.region).is_none() {
            push(&entity, format!("unknown region {}", a.region));
        }
        for (series, name) in [
            (&a.inflexible_load, "inflexible_load"),
            (&a.responsive_load, "responsive_load"),
            (&a.pv, "pv"),
            (&a.flex_min, "flex_min"),
        ] {
            if series.len() != horizon.steps {
                push(
                    &entity,
                    format!("{name} has {} entries, expected {}", series.len(), horizon.steps),
                );
            }
        }
        for (series, name) in [
            (&a.inflexible_load, "inflexible_load"),
            (&a.responsive_load, "responsive_load"),
            (&a.pv, "pv"),
        ] {
            if series.iter().any(|&v| v < 0.0) {
                push(&entity, format!("{name} contains negative values"));
            }
        }
        let s = &a.storage;
        if !(0.0 <= s.soc_min && s.soc_min <= s.soc_initial && s.soc_initial <= s.soc_max) {
            push(
                &entity,
                format!(
                    "storage bounds must satisfy 0 <= soc_min <= soc_initial <= soc_max, got ({}, {}, {})",
                    s.soc_min, s.soc_initial, s.soc_max
                ),
            );
        }
        if !(s.round_trip_efficiency > 0.0 && s.round_trip_efficiency <= 1.0) {
            push(
                &entity,
                format!("round_trip_efficiency {} outside (0, 1]", s.round_trip_efficiency),
            );
        }
        if a.charge_cap < 0.0 {
            push(&entity, format!("negative charge_cap {}", a.charge_cap));
        }
        let steps = a.flex_min.len().min(a.responsive_load.len());
        for h in 0..steps {
            if a.flex_min[h] > a.flex_max(h) + 1e-9 {
                push(
                    &entity,
                    format!(
                        "flex_min {} exceeds flex_max {} at step {h}",
                        a.flex_min[h],
                        a.flex_max(h)
                    ),
                );
                break;
            }
        }
    }

    out
}

/// Total energy the aggregator's users need over the horizon, regardless of
/// when it is drawn: Σ (inflexible + responsive) · Δh.
pub fn total_required_energy(agg: &AggregatorProfile, horizon: &Horizon) -> f64 {
    (0..horizon.steps)
        .map(|h| (agg.inflexible_load[h] + agg.responsive_load[h]) * horizon.step_length)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_region_model() -> NetworkModel {
        let steps = 4;
        NetworkModel {
            regions: vec![
                Region { id: "N".into(), name: "North".into() },
                Region { id: "S".into(), name: "South".into() },
            ],
            lines: vec![Line {
                from: "N".into(),
                to: "S".into(),
                susceptance: 1000.0,
                flow_min: -400.0,
                flow_max: 400.0,
            }],
            generators: vec![
                Generator::with_equal_blocks("g_n", "N", GeneratorKind::Coal, 900.0, [20.0, 30.0, 40.0]),
                Generator::with_equal_blocks("g_s", "S", GeneratorKind::GasTurbine, 300.0, [70.0, 90.0, 110.0]),
            ],
            aggregators: vec![
                AggregatorProfile::rigid("N", vec![500.0; steps]),
                AggregatorProfile::rigid("S", vec![200.0; steps]),
            ],
            reference_region: "N".into(),
        }
    }

    #[test]
    fn well_formed_model_passes() {
        let model = two_region_model();
        let horizon = Horizon::new(4, 1.0);
        assert_eq!(validate(&model, &horizon), vec![]);
    }

    #[test]
    fn flags_block_sum_mismatch_by_generator() {
        let mut model = two_region_model();
        model.generators[0].blocks[2].capacity -= 1.0;
        let v = validate(&model, &Horizon::new(4, 1.0));
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].entity, "g_n");
        assert!(v[0].rule.contains("sum"), "rule: {}", v[0].rule);
    }

    #[test]
    fn accepts_ascending_block_prices_and_flags_descending() {
        let mut model = two_region_model();
        // Ascending coal curve is fine as-is.
        assert!(validate(&model, &Horizon::new(4, 1.0)).is_empty());
        model.generators[0].blocks[1].price = 10.0; // now 20, 10, 40
        let v = validate(&model, &Horizon::new(4, 1.0));
        assert!(v.iter().any(|v| v.entity == "g_n" && v.rule.contains("nondecreasing")));
    }

    #[test]
    fn flags_disconnected_network_and_missing_aggregator() {
        let mut model = two_region_model();
        model.lines.clear();
        model.aggregators.pop();
        let v = validate(&model, &Horizon::new(4, 1.0));
        assert!(v.iter().any(|v| v.rule.contains("not connected")));
        assert!(v.iter().any(|v| v.entity == "S" && v.rule.contains("exactly one aggregator")));
    }

    #[test]
    fn flags_renewable_with_priced_blocks() {
        let mut model = two_region_model();
        model.generators[1] = Generator::with_equal_blocks("w", "S", GeneratorKind::Wind, 300.0, [0.0, 0.0, 0.0]);
        let v = validate(&model, &Horizon::new(4, 1.0));
        assert!(v.iter().any(|v| v.entity == "w" && v.rule.contains("single zero-price block")));
    }

    #[test]
    fn required_energy_is_zero_for_empty_profiles() {
        let agg = AggregatorProfile::rigid("N", vec![0.0; 24]);
        assert_eq!(total_required_energy(&agg, &Horizon::default()), 0.0);
    }

    #[test]
    fn required_energy_sums_both_load_components() {
        let mut agg = AggregatorProfile::rigid("N", vec![1000.0; 24]);
        agg.responsive_load = vec![500.0; 24];
        let e = total_required_energy(&agg, &Horizon::default());
        assert_eq!(e, 36_000.0);
    }

    #[test]
    fn required_energy_scales_with_step_length() {
        let mut agg = AggregatorProfile::rigid("N", vec![1000.0; 48]);
        agg.responsive_load = vec![500.0; 48];
        agg.flex_min = vec![0.0; 48];
        agg.pv = vec![0.0; 48];
        // 48 half-hour steps carry the same energy as 24 hourly ones.
        let e = total_required_energy(&agg, &Horizon::new(48, 0.5));
        assert_eq!(e, 36_000.0);
    }

    #[test]
    fn bid_cost_is_convex_and_caps_at_total_block_value() {
        let g = Generator::with_equal_blocks("g", "N", GeneratorKind::Coal, 900.0, [20.0, 30.0, 40.0]);
        let full: f64 = g.blocks.iter().map(|b| b.price * b.capacity).sum();
        assert!((g.cost_at(900.0) - full).abs() < 1e-9);
        // Convexity: marginal cost of successive 100 MW slices never drops.
        let mut last = 0.0;
        for k in 1..=9 {
            let lo = g.cost_at(100.0 * (k - 1) as f64);
            let hi = g.cost_at(100.0 * k as f64);
            assert!(hi - lo >= last - 1e-9);
            last = hi - lo;
        }
    }

    #[test]
    fn effective_p_max_derates_and_wraps() {
        let mut g = Generator::with_equal_blocks("w", "S", GeneratorKind::Wind, 300.0, [0.0, 0.0, 0.0]);
        g.blocks = vec![BidBlock { price: 0.0, capacity: 300.0 }];
        g.availability = Some(vec![0.5, 1.0]);
        assert_eq!(g.effective_p_max(0), 150.0);
        assert_eq!(g.effective_p_max(1), 300.0);
        assert_eq!(g.effective_p_max(2), 150.0);
    }

    #[test]
    fn pinned_profile_detection() {
        let mut agg = AggregatorProfile::rigid("N", vec![10.0; 4]);
        assert!(agg.is_pinned());
        agg.responsive_load = vec![5.0; 4];
        agg.flex_min = vec![5.0; 4];
        assert!(agg.is_pinned());
        agg.charge_cap = 1.0;
        assert!(!agg.is_pinned());
    }
}
