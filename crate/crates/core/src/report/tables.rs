//! Margin table, influence table, heatmap and line comparison.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::format::{fmt_sig9, opt_sig9, to_csv};
use super::ReportError;
use crate::hopf::{scan_plan, scan_to_hopf, Direction, HopfError, ScanOptions, ScanPlan, TABLE_PARAMS};
use crate::model::{LineModel, Param, ParameterSet};
use crate::normal::{display_sensitivity, SensitivityReport, CAUSE_ROWS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum MarginStatus {
    Hopf {
        direction: Direction,
        value: f64,
        margin: f64,
        omega_star: f64,
    },
    /// No Hopf in the searched direction(s).
    NoBifurcation { reason: String },
    /// Not scanned by policy.
    Excluded,
    /// The scan broke down numerically.
    Failed { error: String },
}

impl MarginStatus {
    pub fn value(&self) -> Option<f64> {
        match self {
            MarginStatus::Hopf { value, .. } => Some(*value),
            _ => None,
        }
    }

    pub fn margin(&self) -> Option<f64> {
        match self {
            MarginStatus::Hopf { margin, .. } => Some(*margin),
            _ => None,
        }
    }
}

/// Values are stored in p.u. (rad/s for the filter cut-offs).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginEntry {
    pub param: Param,
    pub nominal: f64,
    pub status: MarginStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub line: LineModel,
    pub entries: Vec<MarginEntry>,
}

impl MarginReport {
    pub fn entry(&self, p: Param) -> Option<&MarginEntry> {
        self.entries.iter().find(|e| e.param == p)
    }
}

fn status_of(result: Result<crate::hopf::HopfPoint, HopfError>) -> MarginStatus {
    match result {
        Ok(h) => MarginStatus::Hopf {
            direction: h.direction,
            value: h.value(),
            margin: h.margin(),
            omega_star: h.omega_star,
        },
        Err(e @ HopfError::NoBifurcation { .. }) => MarginStatus::NoBifurcation { reason: e.to_string() },
        Err(e) => MarginStatus::Failed { error: e.to_string() },
    }
}

/// Margin of one parameter following its scan plan. With both directions
/// searched, the nearer bifurcation wins.
pub fn margin_entry(params: &ParameterSet, line: LineModel, param: Param, opts: &ScanOptions) -> MarginEntry {
    let status = match scan_plan(param) {
        ScanPlan::Excluded => MarginStatus::Excluded,
        ScanPlan::Single(d) => status_of(scan_to_hopf(params, line, param, d, opts)),
        ScanPlan::Both => {
            let up = status_of(scan_to_hopf(params, line, param, Direction::Up, opts));
            let down = status_of(scan_to_hopf(params, line, param, Direction::Down, opts));
            match (up.margin(), down.margin()) {
                (Some(a), Some(b)) => {
                    if a <= b {
                        up
                    } else {
                        down
                    }
                }
                (Some(_), None) => up,
                (None, Some(_)) => down,
                (None, None) => match (&up, &down) {
                    (MarginStatus::Failed { .. }, _) => up,
                    (_, MarginStatus::Failed { .. }) => down,
                    (MarginStatus::NoBifurcation { reason: a }, MarginStatus::NoBifurcation { reason: b }) => {
                        MarginStatus::NoBifurcation {
                            reason: format!("{a}; {b}"),
                        }
                    }
                    _ => up,
                },
            }
        }
    };
    MarginEntry {
        param,
        nominal: params.get(param),
        status,
    }
}

/// Margins of every table parameter, scanned in parallel.
pub fn margin_report(params: &ParameterSet, line: LineModel, opts: &ScanOptions) -> MarginReport {
    let entries = TABLE_PARAMS
        .par_iter()
        .map(|&p| margin_entry(params, line, p, opts))
        .collect();
    MarginReport { line, entries }
}

fn display_cell(param: Param, status: &MarginStatus, pick: fn(&MarginStatus) -> Option<f64>) -> String {
    match status {
        MarginStatus::Excluded => "-".into(),
        MarginStatus::Failed { .. } => "error".into(),
        s => opt_sig9(pick(s).map(|v| v * param.unit().scale())),
    }
}

pub const TABLE1_HEADER: [&str; 6] = [
    "parameter",
    "nominal",
    "hopf_static",
    "hopf_dynamic",
    "margin_static",
    "margin_dynamic",
];

/// Margin table in reporting units (K_P, K_Q in percent). Empty cells mark
/// parameters without a bifurcation, `-` parameters excluded from scans.
pub fn table1_csv(stat: &MarginReport, dyn_: &MarginReport) -> Result<String, ReportError> {
    check_pair(stat, dyn_)?;
    let rows: Vec<Vec<String>> = stat
        .entries
        .iter()
        .map(|s| {
            let d = dyn_.entry(s.param).expect("checked pair");
            vec![
                s.param.name().to_string(),
                fmt_sig9(s.nominal * s.param.unit().scale()),
                display_cell(s.param, &s.status, MarginStatus::value),
                display_cell(s.param, &d.status, MarginStatus::value),
                display_cell(s.param, &s.status, MarginStatus::margin),
                display_cell(s.param, &d.status, MarginStatus::margin),
            ]
        })
        .collect();
    Ok(to_csv(&TABLE1_HEADER, &rows))
}

fn check_pair(stat: &MarginReport, dyn_: &MarginReport) -> Result<(), ReportError> {
    if stat.line == dyn_.line {
        return Err(ReportError::MismatchedReports(format!(
            "both reports use the {} line",
            stat.line
        )));
    }
    let a: Vec<Param> = stat.entries.iter().map(|e| e.param).collect();
    let b: Vec<Param> = dyn_.entries.iter().map(|e| e.param).collect();
    let mut sa = a.clone();
    let mut sb = b.clone();
    sa.sort();
    sb.sort();
    if sa != sb {
        return Err(ReportError::MismatchedReports("parameter sets differ".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineGap {
    pub param: Param,
    pub margin_static: Option<f64>,
    pub margin_dynamic: Option<f64>,
    /// margin_static − margin_dynamic; positive when the line dynamics
    /// shrink the margin.
    pub delta: Option<f64>,
    pub relative_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineComparison {
    pub rows: Vec<LineGap>,
    /// Every parameter with a Hopf in both variants has delta ≥ 0.
    pub uniform_reduction: bool,
    /// Parameters with the largest positive delta and relative delta.
    pub largest_absolute_gap: Option<Param>,
    pub largest_relative_gap: Option<Param>,
}

/// Per-parameter margin deltas between a static- and a dynamic-line report.
/// Argument order does not matter; the reports are matched by line model.
pub fn compare_lines(a: &MarginReport, b: &MarginReport) -> Result<LineComparison, ReportError> {
    let (stat, dyn_) = if a.line == LineModel::Static { (a, b) } else { (b, a) };
    check_pair(stat, dyn_)?;
    let rows: Vec<LineGap> = stat
        .entries
        .iter()
        .map(|s| {
            let d = dyn_.entry(s.param).expect("checked pair");
            let (ms, md) = (s.status.margin(), d.status.margin());
            let delta = ms.zip(md).map(|(x, y)| x - y);
            LineGap {
                param: s.param,
                margin_static: ms,
                margin_dynamic: md,
                delta,
                relative_gap: delta.zip(ms).map(|(dl, x)| if x == 0.0 { 0.0 } else { dl / x }),
            }
        })
        .collect();
    let both: Vec<&LineGap> = rows.iter().filter(|r| r.delta.is_some()).collect();
    let uniform_reduction = both.iter().all(|r| r.delta.unwrap() >= 0.0);
    let argmax = |f: fn(&LineGap) -> f64| {
        both.iter()
            .filter(|r| f(r) > 0.0)
            .max_by(|x, y| f(x).total_cmp(&f(y)))
            .map(|r| r.param)
    };
    Ok(LineComparison {
        uniform_reduction,
        largest_absolute_gap: argmax(|r| r.delta.unwrap()),
        largest_relative_gap: argmax(|r| r.relative_gap.unwrap()),
        rows,
    })
}

pub fn comparison_csv(c: &LineComparison) -> String {
    let rows: Vec<Vec<String>> = c
        .rows
        .iter()
        .map(|r| {
            let s = r.param.unit().scale();
            vec![
                r.param.name().to_string(),
                opt_sig9(r.margin_static.map(|v| v * s)),
                opt_sig9(r.margin_dynamic.map(|v| v * s)),
                opt_sig9(r.delta.map(|v| v * s)),
                opt_sig9(r.relative_gap),
            ]
        })
        .collect();
    to_csv(
        &["parameter", "margin_static", "margin_dynamic", "delta", "relative_gap"],
        &rows,
    )
}

/// Row-normalized heatmap: one row per cause with a bifurcation, one column
/// per parameter.
pub fn heatmap_csv(r: &SensitivityReport) -> String {
    let mut header = vec!["cause"];
    header.extend(r.columns.iter().map(|p| p.name()));
    let rows: Vec<Vec<String>> = r
        .rows
        .iter()
        .filter_map(|row| {
            let h = row.heatmap.as_ref()?;
            let mut cells = vec![row.cause.name().to_string()];
            cells.extend(h.iter().map(|v| fmt_sig9(*v)));
            Some(cells)
        })
        .collect();
    to_csv(&header, &rows)
}

pub const TABLE4_HEADER: [&str; 6] = [
    "cause",
    "direction",
    "control_static",
    "sensitivity_static",
    "control_dynamic",
    "sensitivity_dynamic",
];

/// Most influential control per cause in reporting units. Causes without a
/// bifurcation have empty cells.
pub fn table4_csv(stat: &SensitivityReport, dyn_: &SensitivityReport) -> String {
    let cell = |r: &SensitivityReport, p: Param| -> (String, String) {
        match r.row(p) {
            Some(row) => match (row.best_control, row.best_sensitivity) {
                (Some(c), Some(s)) => (c.name().to_string(), fmt_sig9(display_sensitivity(p, c, s))),
                _ => (String::new(), String::new()),
            },
            None => (String::new(), String::new()),
        }
    };
    let rows: Vec<Vec<String>> = CAUSE_ROWS
        .iter()
        .map(|&(p, dir)| {
            let (cs, ss) = cell(stat, p);
            let (cd, sd) = cell(dyn_, p);
            vec![
                p.name().to_string(),
                dir.map(|d| d.name().to_string()).unwrap_or_default(),
                cs,
                ss,
                cd,
                sd,
            ]
        })
        .collect();
    to_csv(&TABLE4_HEADER, &rows)
}
