//! Bundled four-region study system, loosely shaped like the Australian
//! east-coast grid: a QLD–NSW–VIC–SA chain with thirteen thermal units,
//! plus deterministic synthetic year traces for demand, solar and wind.
//!
//! Bid prices follow published per-technology estimates; capacities, line
//! ratings and susceptances are synthetic — chosen so that the northern
//! interconnector is the scarce resource and the scenario suite produces
//! distinct, stable outcomes. Demand is two-tiered (cheap flat night,
//! broad working-day plateau) with a midday cooling crest that covers the
//! largest rooftop-solar tier, so household batteries profit from
//! night-to-day shifting at their charging cap while midday solar simply
//! offsets the crest. Every trace is generated from a seed, so fixture
//! runs are reproducible byte for byte.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{Generator, GeneratorKind, Line, NetworkModel, Region};

pub const HOURS_PER_YEAR: usize = 8760;
pub const REGION_IDS: [&str; 4] = ["QLD", "NSW", "VIC", "SA"];

/// Fraction of each region's demand owned by price-responsive users
/// (residential plus commercial); the rest, industry included, is rigid.
pub const RESPONSIVE_SHARE: f64 = 0.6;

/// Round-trip efficiency of the aggregated household batteries.
pub const BATTERY_EFFICIENCY: f64 = 0.9;

pub fn regions() -> Vec<Region> {
    let names = [
        ("QLD", "Queensland"),
        ("NSW", "New South Wales"),
        ("VIC", "Victoria"),
        ("SA", "South Australia"),
    ];
    names
        .iter()
        .map(|(id, name)| Region {
            id: (*id).into(),
            name: (*name).into(),
        })
        .collect()
}

/// The three interconnectors of the chain, rated well below regional
/// fleet sizes so imports saturate before generation does.
pub fn interconnectors() -> Vec<Line> {
    let data = [
        ("NSW", "QLD", 12_000.0, 1_200.0),
        ("VIC", "NSW", 19_000.0, 1_900.0),
        ("VIC", "SA", 6_800.0, 680.0),
    ];
    data.iter()
        .map(|&(from, to, susceptance, cap)| Line {
            from: from.into(),
            to: to.into(),
            susceptance,
            flow_min: -cap,
            flow_max: cap,
        })
        .collect()
}

/// The thirteen-unit thermal fleet. Three equal-width bid blocks per unit.
pub fn thermal_fleet() -> Vec<Generator> {
    let rows: [(&str, &str, GeneratorKind, f64, [f64; 3]); 13] = [
        ("BPS_2", "NSW", GeneratorKind::Coal, 2640.0, [28.45, 42.66, 56.90]),
        ("EPS_2", "NSW", GeneratorKind::GasTurbine, 3400.0, [69.20, 346.0, 692.0]),
        ("MPS_2", "NSW", GeneratorKind::Coal, 2600.0, [27.43, 41.15, 54.86]),
        ("VPS_2", "NSW", GeneratorKind::Coal, 3000.0, [26.40, 39.60, 52.80]),
        ("LPS_3", "VIC", GeneratorKind::Biomass, 1100.0, [39.50, 59.25, 79.00]),
        ("YPS_3", "VIC", GeneratorKind::Coal, 3400.0, [21.88, 32.82, 43.76]),
        ("CPS_4", "QLD", GeneratorKind::Coal, 2400.0, [26.14, 39.21, 52.28]),
        ("GPS_4", "QLD", GeneratorKind::Coal, 2000.0, [26.14, 39.21, 52.28]),
        ("SPS_4", "QLD", GeneratorKind::Coal, 2200.0, [32.74, 49.11, 65.48]),
        ("TPS_4", "QLD", GeneratorKind::GasTurbine, 3200.0, [73.84, 369.2, 738.4]),
        ("NPS_5", "SA", GeneratorKind::Coal, 1600.0, [30.89, 46.34, 61.78]),
        ("PPS_5", "SA", GeneratorKind::Coal, 1300.0, [30.89, 46.34, 61.78]),
        ("TPS_5", "SA", GeneratorKind::GasTurbine, 1800.0, [69.20, 346.0, 692.0]),
    ];
    rows.iter()
        .map(|&(id, region, kind, p_max, prices)| {
            Generator::with_equal_blocks(id, region, kind, p_max, prices)
        })
        .collect()
}

/// Assemble a model from the fixture fleet and the given demand side.
pub fn network(aggregators: Vec<crate::grid::AggregatorProfile>) -> NetworkModel {
    NetworkModel {
        regions: regions(),
        lines: interconnectors(),
        generators: thermal_fleet(),
        aggregators,
        reference_region: "NSW".into(),
    }
}

/// Annual average demand per region, MW.
pub fn average_demand(region: &str) -> f64 {
    match region {
        "QLD" => 4_000.0,
        "NSW" => 6_000.0,
        "VIC" => 3_600.0,
        "SA" => 1_300.0,
        _ => 0.0,
    }
}

/// Household PV and storage uptake tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uptake {
    Low,
    Medium,
    High,
}

impl Uptake {
    pub fn label(&self) -> &'static str {
        match self {
            Uptake::Low => "low",
            Uptake::Medium => "medium",
            Uptake::High => "high",
        }
    }
}

/// Aggregated storage window and rooftop-PV capacity for one region at
/// one uptake tier. Internal units: MWh and MW.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UptakeRow {
    pub soc_min: f64,
    pub soc_max: f64,
    pub pv_capacity: f64,
}

/// Storage windows (GWh) and PV capacities (GW) per region and tier,
/// converted to MWh / MW.
pub fn uptake_row(region: &str, uptake: Uptake) -> Option<UptakeRow> {
    let gw = |soc_min: f64, soc_max: f64, pv: f64| {
        Some(UptakeRow {
            soc_min: soc_min * 1_000.0,
            soc_max: soc_max * 1_000.0,
            pv_capacity: pv * 1_000.0,
        })
    };
    match (region, uptake) {
        ("QLD", Uptake::Low) => gw(0.4, 4.3, 1.3),
        ("QLD", Uptake::Medium) => gw(0.6, 6.4, 1.9),
        ("QLD", Uptake::High) => gw(0.9, 8.5, 2.6),
        ("NSW", Uptake::Low) => gw(0.7, 6.7, 2.0),
        ("NSW", Uptake::Medium) => gw(1.0, 10.1, 3.0),
        ("NSW", Uptake::High) => gw(1.4, 13.5, 4.1),
        ("VIC", Uptake::Low) => gw(0.5, 5.0, 1.5),
        ("VIC", Uptake::Medium) => gw(0.8, 7.5, 2.3),
        ("VIC", Uptake::High) => gw(1.0, 10.0, 3.0),
        ("SA", Uptake::Low) => gw(0.1, 1.2, 0.3),
        ("SA", Uptake::Medium) => gw(0.2, 1.7, 0.5),
        ("SA", Uptake::High) => gw(0.2, 2.3, 0.7),
        _ => None,
    }
}

/// A year of hourly series: regional demand in MW, plus solar and wind
/// availability factors (0..1) per named site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearTraces {
    pub hours: usize,
    pub demand: BTreeMap<String, Vec<f64>>,
    pub solar: BTreeMap<String, Vec<f64>>,
    pub wind: BTreeMap<String, Vec<f64>>,
}

impl YearTraces {
    pub fn days(&self) -> usize {
        self.hours / 24
    }
}

fn site_rng(seed: u64, label: &str) -> ChaCha8Rng {
    // djb2 over the label, folded into the base seed, so each series gets
    // an independent, stable stream.
    let mut h: u64 = 5381;
    for b in label.bytes() {
        h = h.wrapping_mul(33).wrapping_add(b as u64);
    }
    ChaCha8Rng::seed_from_u64(seed ^ h)
}

/// Hour-of-day base demand multipliers: a flat cheap night, a fast
/// morning ramp, a broad daytime plateau and an evening rundown. The
/// flat plateau keeps one bid block marginal through the working day,
/// so intra-day load shifting carries no arbitrage value on its own.
const BASE_SHAPE: [f64; 24] = [
    0.72, 0.72, 0.72, 0.72, 0.72, // 00–04 night
    0.76, 0.88, 0.99, // 05–07 morning ramp
    1.04, 1.04, 1.04, 1.04, 1.04, 1.04, 1.04, // 08–14
    1.04, 1.04, 1.04, 1.04, 1.04, 1.04, 1.04, // 15–21
    0.93, 0.80, // 22–23 rundown
];

fn base_shape(hour_of_day: usize) -> f64 {
    let mean: f64 = BASE_SHAPE.iter().sum::<f64>() / 24.0;
    BASE_SHAPE[hour_of_day] / mean
}

/// Daylight production bell on 07:30–16:30, peaking at noon.
fn solar_shape(hour_of_day: f64) -> f64 {
    let x = (hour_of_day - 7.5) / 9.0;
    if (0.0..=1.0).contains(&x) {
        (std::f64::consts::PI * x).sin().powi(2)
    } else {
        0.0
    }
}

fn solar_shape_mean() -> f64 {
    (0..24).map(|h| solar_shape(h as f64)).sum::<f64>() / 24.0
}

/// Midday cooling load per region, MW at the crest. Sized to the
/// highest-uptake rooftop-PV capacity so that behind-the-meter solar
/// never pushes midday net demand below the working-day plateau: solar
/// carves the cooling crest, not the price floor.
pub fn cooling_peak(region: &str) -> f64 {
    match region {
        "QLD" => 2_600.0,
        "NSW" => 4_100.0,
        "VIC" => 3_000.0,
        "SA" => 700.0,
        _ => 0.0,
    }
}

fn demand_series(seed: u64, region: &str, hours: usize) -> Vec<f64> {
    let avg = average_demand(region);
    let mut rng = site_rng(seed, &format!("demand/{region}"));
    // Victoria peaks in winter; the others in summer.
    let (season_amp, season_phase) = if region == "VIC" {
        (0.05, 0.5)
    } else {
        (0.04, 0.0)
    };
    let cooling = cooling_peak(region);
    // The base component is scaled so the annual mean lands on `avg`
    // with the cooling crest included.
    let base_level = avg - cooling * solar_shape_mean();
    (0..hours)
        .map(|h| {
            let hod = h % 24;
            let doy = (h / 24) as f64;
            let season =
                (std::f64::consts::TAU * (doy - 25.0) / 365.0 + season_phase * std::f64::consts::TAU)
                    .cos();
            let noise = rng.random_range(-1.0..1.0);
            base_level * base_shape(hod) * (1.0 + season_amp * season + 0.01 * noise)
                + cooling * solar_shape(hod as f64)
        })
        .collect()
}

fn solar_series(seed: u64, site: &str, hours: usize) -> Vec<f64> {
    let mut rng = site_rng(seed, &format!("solar/{site}"));
    // Northern sites see a little more sun.
    let site_gain = match site {
        "NQ" | "CQ" | "QLD" => 1.05,
        "SA" => 1.0,
        _ => 0.95,
    };
    let mut series = Vec::with_capacity(hours);
    let mut cloud = 1.0;
    for h in 0..hours {
        let hod = (h % 24) as f64;
        if h % 24 == 0 {
            // One cloudiness draw per day keeps intra-day shape smooth.
            cloud = rng.random_range(0.72..1.0);
        }
        let doy = (h / 24) as f64;
        let season = 1.0 + 0.12 * (std::f64::consts::TAU * (doy - 10.0) / 365.0).cos();
        let jitter = 1.0 + 0.03 * rng.random_range(-1.0..1.0f64);
        // The combined sky factor never exceeds 1, so output stays under
        // capacity × bell at every hour, brightest days included.
        let sky = (site_gain * season * cloud * jitter).min(1.0);
        series.push(solar_shape(hod) * sky);
    }
    series
}

fn wind_series(seed: u64, site: &str, hours: usize) -> Vec<f64> {
    let mut rng = site_rng(seed, &format!("wind/{site}"));
    let phase1: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let phase2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let mut ar = 0.0f64; // slow persistent weather component
    (0..hours)
        .map(|h| {
            let t = h as f64;
            ar = 0.92 * ar + 0.39 * rng.random_range(-1.0..1.0f64);
            let v = 0.38
                + 0.20 * (std::f64::consts::TAU * t / 67.0 + phase1).sin()
                + 0.14 * (std::f64::consts::TAU * t / 11.3 + phase2).sin()
                + 0.16 * ar;
            // Onshore wind lulls in the middle of the day.
            (v * (1.0 - 0.30 * solar_shape(t % 24.0))).clamp(0.02, 0.97)
        })
        .collect()
}

/// Generate the full deterministic trace set for one seed.
pub fn synthetic_traces(seed: u64) -> YearTraces {
    synthetic_traces_for(seed, HOURS_PER_YEAR)
}

/// Same generators, arbitrary horizon length (multiples of 24 are
/// expected; shorter sets are handy in tests).
pub fn synthetic_traces_for(seed: u64, hours: usize) -> YearTraces {
    let mut demand = BTreeMap::new();
    for region in REGION_IDS {
        demand.insert(region.to_string(), demand_series(seed, region, hours));
    }
    let mut solar = BTreeMap::new();
    for site in ["QLD", "NSW", "VIC", "SA", "NQ", "CQ"] {
        solar.insert(site.to_string(), solar_series(seed, site, hours));
    }
    let mut wind = BTreeMap::new();
    wind.insert("NSA".to_string(), wind_series(seed, "NSA", hours));
    YearTraces {
        hours,
        demand,
        solar,
        wind,
    }
}

/// Default seed for the shipped study.
pub const DEFAULT_SEED: u64 = 2020;
