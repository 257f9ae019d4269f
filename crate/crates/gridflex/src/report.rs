//! Result rendering: a fixed-column summary table over scenarios, and
//! per-series time-series exports (CSV and static SVG line charts).
//!
//! Rendering is a pure function of result structs — identical inputs give
//! byte-identical artifacts — and every numeric cell comes straight from
//! a result field, converted for display only (MW to GW, MWh to TWh,
//! hour counts to percentages). Internally everything stays in MW/MWh.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::io::{atomic_write, IoError};
use crate::scenario::ScenarioResult;
use crate::storage::soc_trajectory;

/// Table header, in rendering order.
pub const TABLE_COLUMNS: [&str; 6] = [
    "scenario",
    "spilled_energy",
    "spilled_hours_pct",
    "unserved_hours",
    "backup_energy",
    "avg_loadability",
];

/// Time series that can be exported from a scenario result.
pub const SERIES_NAMES: [&str; 6] = [
    "demand",
    "flexible_demand",
    "pv",
    "battery_power",
    "soc",
    "prices",
];

/// Output formats for rendered artifacts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ReportFormat {
    Csv,
    Txt,
    Svg,
}

/// What to render: which scenarios, which series, which formats.
#[derive(Debug, Clone)]
pub struct ReportSpec {
    /// Scenario names to include; empty = all available.
    pub scenarios: Vec<String>,
    /// Series names from [`SERIES_NAMES`].
    pub series: Vec<String>,
    pub formats: Vec<ReportFormat>,
}

impl Default for ReportSpec {
    fn default() -> Self {
        ReportSpec {
            scenarios: vec![],
            series: SERIES_NAMES.iter().map(|s| s.to_string()).collect(),
            formats: vec![ReportFormat::Csv, ReportFormat::Txt, ReportFormat::Svg],
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("unknown series {name}; expected one of demand, flexible_demand, pv, battery_power, soc, prices")]
    UnknownSeries { name: String },
    #[error("region {region} not in result {result}")]
    UnknownRegion { region: String, result: String },
    #[error("a report needs at least one scenario and one output format")]
    EmptyReport,
    #[error(transparent)]
    Io(#[from] IoError),
}

/// One table row, display units: TWh for energies, GW for loadability.
/// Spilled cells render as "-" for fleets with no renewables.
struct TableRow {
    scenario: String,
    spilled_energy: Option<f64>,
    spilled_hours_pct: Option<f64>,
    unserved_hours: usize,
    backup_energy: f64,
    avg_loadability: f64,
}

fn table_row(result: &ScenarioResult) -> TableRow {
    let hours = result.metrics.total_hours;
    let pct = if hours == 0 {
        0.0
    } else {
        100.0 * result.metrics.spilled_hours as f64 / hours as f64
    };
    TableRow {
        scenario: result.name.clone(),
        spilled_energy: result
            .has_renewables
            .then_some(result.metrics.spilled_energy / 1e6),
        spilled_hours_pct: result.has_renewables.then_some(pct),
        unserved_hours: result.metrics.unserved_hours,
        backup_energy: result.metrics.backup_energy / 1e6,
        avg_loadability: result.loadability.average / 1e3,
    }
}

fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:.2}"),
        None => "-".to_string(),
    }
}

fn row_cells(row: &TableRow) -> [String; 6] {
    [
        row.scenario.clone(),
        cell(row.spilled_energy),
        cell(row.spilled_hours_pct),
        row.unserved_hours.to_string(),
        cell(Some(row.backup_energy)),
        cell(Some(row.avg_loadability)),
    ]
}

/// The summary table as CSV, one row per result in input order.
pub fn render_table_csv(results: &[ScenarioResult]) -> String {
    let mut out = TABLE_COLUMNS.join(",");
    out.push('\n');
    for result in results {
        out.push_str(&row_cells(&table_row(result)).join(","));
        out.push('\n');
    }
    out
}

/// The summary table as aligned plain text.
pub fn render_table_txt(results: &[ScenarioResult]) -> String {
    let rows: Vec<[String; 6]> = results
        .iter()
        .map(|r| row_cells(&table_row(r)))
        .collect();
    let mut widths: Vec<usize> = TABLE_COLUMNS.iter().map(|c| c.len()).collect();
    for row in &rows {
        for (w, cell) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    let mut write_row = |cells: &[String]| {
        let line: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i == 0 {
                    format!("{c:<width$}", width = widths[i])
                } else {
                    format!("{c:>width$}", width = widths[i])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    };
    let header: Vec<String> = TABLE_COLUMNS.iter().map(|c| c.to_string()).collect();
    write_row(&header);
    for row in &rows {
        write_row(row);
    }
    out
}

/// Hour-by-hour loadability margins, all scenarios stacked:
/// `scenario,hour,loadability` (MW).
pub fn render_loadability_csv(results: &[ScenarioResult]) -> String {
    let mut out = String::from("scenario,hour,loadability\n");
    for result in results {
        for (hour, v) in result.loadability.per_hour.iter().enumerate() {
            let _ = writeln!(out, "{},{hour},{v}", result.name);
        }
    }
    out
}

/// A named time series: one labeled column per region (or per scenario
/// for overlays), all the same length, hourly.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesData {
    pub name: String,
    /// Display unit for the y axis.
    pub unit: &'static str,
    pub columns: BTreeMap<String, Vec<f64>>,
}

impl SeriesData {
    pub fn len(&self) -> usize {
        self.columns.values().next().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn series_unit(name: &str) -> Result<&'static str, ReportError> {
    match name {
        "demand" | "flexible_demand" | "pv" | "battery_power" => Ok("MW"),
        "soc" => Ok("MWh"),
        "prices" => Ok("$/MWh"),
        _ => Err(ReportError::UnknownSeries {
            name: name.to_string(),
        }),
    }
}

/// Pull one series out of a result, concatenating days in order. Columns
/// are keyed by region id.
pub fn extract_series(result: &ScenarioResult, name: &str) -> Result<SeriesData, ReportError> {
    let unit = series_unit(name)?;
    let mut columns: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for day in &result.days {
        let solution = &day.solution;
        let steps = solution.horizon.steps;
        for (r, region) in solution.regions.iter().enumerate() {
            let missing = || ReportError::UnknownRegion {
                region: region.clone(),
                result: result.name.clone(),
            };
            let agg = solution
                .aggregators
                .iter()
                .position(|a| &a.region == region)
                .ok_or_else(missing)?;
            let ctx = &solution.aggregators[agg];
            let column = columns.entry(region.clone()).or_default();
            match name {
                "prices" => column.extend_from_slice(&solution.nodal_price[r]),
                "flexible_demand" => column.extend_from_slice(&solution.flexible_demand[agg]),
                "pv" => column.extend_from_slice(&ctx.pv),
                "soc" => {
                    let trajectory = soc_trajectory(solution, region).map_err(|_| missing())?;
                    column.extend_from_slice(&trajectory);
                }
                "demand" => {
                    for h in 0..steps {
                        column.push(ctx.inflexible_load[h] + solution.flexible_demand[agg][h]);
                    }
                }
                "battery_power" => {
                    for h in 0..steps {
                        column.push(
                            solution.flexible_demand[agg][h] - ctx.responsive_load[h] + ctx.pv[h],
                        );
                    }
                }
                _ => unreachable!("series_unit vetted the name"),
            }
        }
    }
    Ok(SeriesData {
        name: name.to_string(),
        unit,
        columns,
    })
}

/// One region's series across several results, labeled by scenario name —
/// for side-by-side comparisons such as anticipator vs taker demand.
pub fn overlay_series(
    results: &[&ScenarioResult],
    name: &str,
    region: &str,
) -> Result<SeriesData, ReportError> {
    let unit = series_unit(name)?;
    let mut columns = BTreeMap::new();
    for result in results {
        let data = extract_series(result, name)?;
        let column = data
            .columns
            .get(region)
            .ok_or_else(|| ReportError::UnknownRegion {
                region: region.to_string(),
                result: result.name.clone(),
            })?;
        columns.insert(result.name.clone(), column.clone());
    }
    Ok(SeriesData {
        name: format!("{name}_{region}"),
        unit,
        columns,
    })
}

/// Series as CSV: `step` column plus one column per label.
pub fn series_csv(data: &SeriesData) -> String {
    let mut out = String::from("step");
    for label in data.columns.keys() {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for step in 0..data.len() {
        let _ = write!(out, "{step}");
        for column in data.columns.values() {
            let _ = write!(out, ",{}", column[step]);
        }
        out.push('\n');
    }
    out
}

const SVG_PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

const SVG_WIDTH: f64 = 860.0;
const SVG_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 34.0;
const MARGIN_BOTTOM: f64 = 52.0;

/// Series as a static SVG line chart: hours on x, values on y, one
/// polyline per column, labeled axes, legend in the top margin.
pub fn series_svg(data: &SeriesData) -> String {
    let steps = data.len();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for column in data.columns.values() {
        for &v in column {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        // Flat series still deserve a visible line in mid-plot.
        lo -= 1.0;
        hi += 1.0;
    }
    let pad = 0.05 * (hi - lo);
    let (lo, hi) = (lo - pad, hi + pad);

    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let x = |step: usize| -> f64 {
        if steps <= 1 {
            MARGIN_LEFT + plot_w / 2.0
        } else {
            MARGIN_LEFT + plot_w * step as f64 / (steps - 1) as f64
        }
    };
    let y = |v: f64| -> f64 { MARGIN_TOP + plot_h * (1.0 - (v - lo) / (hi - lo)) };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<rect x="0" y="0" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="white"/>"#
    );

    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = SVG_WIDTH - MARGIN_RIGHT;
    let y0 = SVG_HEIGHT - MARGIN_BOTTOM;
    let y1 = MARGIN_TOP;
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="black"/>"#
    );

    // Ticks: five per axis, value labels at fixed precision.
    for t in 0..=4 {
        let frac = t as f64 / 4.0;
        let tx = x0 + frac * plot_w;
        let step_label = if steps <= 1 {
            0.0
        } else {
            frac * (steps - 1) as f64
        };
        let _ = writeln!(
            svg,
            r#"<line x1="{tx:.2}" y1="{y0:.2}" x2="{tx:.2}" y2="{:.2}" stroke="black"/>"#,
            y0 + 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{tx:.2}" y="{:.2}" text-anchor="middle">{step_label:.0}</text>"#,
            y0 + 20.0
        );
        let ty = y0 - frac * plot_h;
        let value_label = lo + frac * (hi - lo);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ty:.2}" x2="{x0:.2}" y2="{ty:.2}" stroke="black"/>"#,
            x0 - 5.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{value_label:.1}</text>"#,
            x0 - 8.0,
            ty + 4.0
        );
    }

    // Axis titles.
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">hour</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 12.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{} ({})</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        data.name,
        data.unit
    );

    // Legend across the top, then one polyline per column.
    let mut legend_x = MARGIN_LEFT;
    for (k, label) in data.columns.keys().enumerate() {
        let color = SVG_PALETTE[k % SVG_PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<rect x="{legend_x:.2}" y="10" width="12" height="12" fill="{color}"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="20">{label}</text>"#,
            legend_x + 16.0
        );
        legend_x += 16.0 + 9.0 * label.len() as f64 + 18.0;
    }
    for (k, (_, column)) in data.columns.iter().enumerate() {
        let color = SVG_PALETTE[k % SVG_PALETTE.len()];
        let points: Vec<String> = column
            .iter()
            .enumerate()
            .map(|(step, &v)| format!("{:.2},{:.2}", x(step), y(v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Render the selected series of one result to files named
/// `<scenario>_<series>.<ext>`; returns the paths written.
pub fn render_series(
    result: &ScenarioResult,
    spec: &ReportSpec,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    let mut written = Vec::new();
    for name in &spec.series {
        let data = extract_series(result, name)?;
        if spec.formats.contains(&ReportFormat::Csv) {
            let path = out_dir.join(format!("{}_{}.csv", result.name, name));
            atomic_write(&path, series_csv(&data).as_bytes())?;
            written.push(path);
        }
        if spec.formats.contains(&ReportFormat::Svg) {
            let path = out_dir.join(format!("{}_{}.svg", result.name, name));
            atomic_write(&path, series_svg(&data).as_bytes())?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Render the summary table and all selected series for a set of results.
pub fn render_report(
    results: &[ScenarioResult],
    spec: &ReportSpec,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, ReportError> {
    if results.is_empty() || spec.formats.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let selected: Vec<&ScenarioResult> = if spec.scenarios.is_empty() {
        results.iter().collect()
    } else {
        results
            .iter()
            .filter(|r| spec.scenarios.contains(&r.name))
            .collect()
    };
    if selected.is_empty() {
        return Err(ReportError::EmptyReport);
    }
    let owned: Vec<ScenarioResult> = selected.iter().map(|r| (*r).clone()).collect();
    let mut written = Vec::new();
    if spec.formats.contains(&ReportFormat::Txt) {
        let path = out_dir.join("report.txt");
        atomic_write(&path, render_table_txt(&owned).as_bytes())?;
        written.push(path);
    }
    if spec.formats.contains(&ReportFormat::Csv) {
        let path = out_dir.join("metrics.csv");
        atomic_write(&path, render_table_csv(&owned).as_bytes())?;
        written.push(path);
    }
    for result in &owned {
        written.extend(render_series(result, spec, out_dir)?);
    }
    Ok(written)
}
