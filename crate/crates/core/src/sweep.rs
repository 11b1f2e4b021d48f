//! Parameter sweeps of the analytical expressions, written as CSV.
//!
//! Cells are printed with 17 significant digits; points where an expression
//! is 0/0 or singular print the token `degenerate`.

use std::f64::consts::PI;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::closed_form::{self as cf, ProtocolConfig, SINGULARITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::grid::{Axis, GridPoint, Param, SweepGrid};

pub const DEGENERATE: &str = "degenerate";

/// Parse an angle: a plain number, or a rational multiple of `pi` such as
/// `pi`, `-pi/2`, `3pi/4` or `3*pi/4`.
pub fn parse_angle(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || Error::Parse(format!("cannot parse angle `{s}`"));
    let Some(at) = s.find("pi") else {
        return s.parse::<f64>().map_err(|_| bad());
    };
    let (head, tail) = (&s[..at], &s[at + 2..]);
    let head = head.trim_end_matches('*');
    let coeff = match head {
        "" | "+" => 1.0,
        "-" => -1.0,
        h => h.parse::<f64>().map_err(|_| bad())?,
    };
    let denom = match tail {
        "" => 1.0,
        t => t.strip_prefix('/').ok_or_else(bad)?.parse::<f64>().map_err(|_| bad())?,
    };
    let v = coeff * PI / denom;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(bad())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Cell {
    Value(f64),
    Degenerate,
}

impl Cell {
    pub fn value(self) -> Option<f64> {
        match self {
            Cell::Value(v) => Some(v),
            Cell::Degenerate => None,
        }
    }
}

pub fn format_number(v: f64) -> String {
    format!("{v:.16e}")
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::Value(v) => f.write_str(&format_number(*v)),
            Cell::Degenerate => f.write_str(DEGENERATE),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    HD,
    HWva,
    Q,
    AFactor,
    QHWva,
    OneMinusQHPerp,
    HTotal,
    HAnc,
    HWvaOverHD,
    HDOverHWva,
    /// `q H_wva / H_d`
    RatioDirect,
    /// `q H_wva / H_anc`
    RatioAnc,
}

impl Output {
    pub const ALL: [Output; 12] = [
        Output::HD,
        Output::HWva,
        Output::Q,
        Output::AFactor,
        Output::QHWva,
        Output::OneMinusQHPerp,
        Output::HTotal,
        Output::HAnc,
        Output::HWvaOverHD,
        Output::HDOverHWva,
        Output::RatioDirect,
        Output::RatioAnc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Output::HD => "h_d",
            Output::HWva => "h_wva",
            Output::Q => "q",
            Output::AFactor => "a_factor",
            Output::QHWva => "q_h_wva",
            Output::OneMinusQHPerp => "one_minus_q_h_perp",
            Output::HTotal => "h_total",
            Output::HAnc => "h_anc",
            Output::HWvaOverHD => "h_wva_over_h_d",
            Output::HDOverHWva => "h_d_over_h_wva",
            Output::RatioDirect => "q_h_wva_over_h_d",
            Output::RatioAnc => "q_h_wva_over_h_anc",
        }
    }

    /// Parameters that must be bound to evaluate this output.
    pub fn requires(self) -> &'static [Param] {
        match self {
            Output::HD => &[Param::T],
            Output::HAnc => &[Param::G, Param::T],
            Output::HWvaOverHD | Output::HDOverHWva | Output::RatioDirect | Output::RatioAnc | Output::Q | Output::AFactor => {
                &[Param::G, Param::Theta]
            }
            _ => &[Param::G, Param::Theta, Param::T],
        }
    }

    pub fn evaluate(self, cfg: &ProtocolConfig) -> Result<Cell> {
        let s2 = (cfg.g * PI / 2.0).sin().powi(2);
        let value = match self {
            Output::HD => Ok(cf::h_direct(cfg.t, cfg.xi)),
            Output::HAnc => cf::h_anc_optimal(cfg),
            _ => cf::wva_report(cfg).and_then(|r| match self {
                Output::HWva => Ok(r.h_wva),
                Output::Q => Ok(r.q),
                Output::AFactor => Ok(r.a_factor),
                Output::QHWva => Ok(r.q_h_wva),
                Output::OneMinusQHPerp => Ok((1.0 - r.q) * r.h_perp),
                Output::HTotal => Ok(r.h_total),
                Output::HWvaOverHD => Ok(s2 * r.a_factor),
                Output::HDOverHWva => {
                    let gain = s2 * r.a_factor;
                    if gain <= SINGULARITY_THRESHOLD {
                        Err(Error::Degenerate { what: "H_d/H_wva", denominator: gain })
                    } else {
                        Ok(1.0 / gain)
                    }
                }
                Output::RatioDirect => {
                    if s2 <= SINGULARITY_THRESHOLD {
                        Err(Error::Degenerate { what: "ratio", denominator: s2 })
                    } else {
                        Ok(r.ratio_direct)
                    }
                }
                Output::RatioAnc => {
                    if s2 * cfg.xi * cfg.xi <= SINGULARITY_THRESHOLD {
                        Err(Error::Degenerate { what: "ratio", denominator: s2 })
                    } else {
                        Ok(r.ratio_anc)
                    }
                }
                Output::HD | Output::HAnc => unreachable!(),
            }),
        };
        match value {
            Ok(v) => Ok(Cell::Value(v)),
            Err(Error::Degenerate { .. } | Error::Singular { .. }) => Ok(Cell::Degenerate),
            Err(e) => Err(e),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axes: Vec<f64>,
    pub values: Vec<Cell>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<SweepRow>,
}

impl Table {
    fn axis_count(&self) -> usize {
        self.rows.first().map_or(0, |r| r.axes.len())
    }

    /// Values of a named output column.
    pub fn column(&self, name: &str) -> Option<Vec<Cell>> {
        let k = self.columns.iter().position(|c| c == name)?;
        let a = self.axis_count();
        Some(
            self.rows
                .iter()
                .map(|r| if k < a { Cell::Value(r.axes[k]) } else { r.values[k - a] })
                .collect(),
        )
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(&self.columns)?;
        for row in &self.rows {
            let cells = row
                .axes
                .iter()
                .map(|v| format_number(*v))
                .chain(row.values.iter().map(Cell::to_string));
            wtr.write_record(cells)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Io(e.to_string()))
    }
}

/// Evaluate `outputs` at every grid point, in axis-major order.
pub fn sweep(grid: &SweepGrid, outputs: &[Output]) -> Result<Table> {
    grid.validate()?;
    for out in outputs {
        grid.require(out.requires())?;
    }
    if !grid.has(Param::Xi) && !grid.has(Param::Gamma) {
        return Err(Error::Grid("grid binds neither `xi` nor `gamma`".into()));
    }
    if grid.has(Param::Gamma) {
        grid.require(&[Param::T])?;
    }
    let points = grid.points();
    let rows = points
        .par_iter()
        .map(|p| evaluate_row(grid, p, outputs))
        .collect::<Result<Vec<_>>>()?;
    let columns = grid
        .axes
        .iter()
        .map(|a| a.name.name().to_string())
        .chain(outputs.iter().map(|o| o.name().to_string()))
        .collect();
    Ok(Table { columns, rows })
}

fn evaluate_row(grid: &SweepGrid, p: &GridPoint, outputs: &[Output]) -> Result<SweepRow> {
    let mut point = p.clone();
    // placeholders for parameters none of the requested outputs depend on
    for (param, default) in [(Param::G, 1.0), (Param::Theta, PI), (Param::T, 1.0)] {
        if !grid.has(param) {
            point.0.insert(param, default);
        }
    }
    let cfg = point.protocol_config()?;
    let values = outputs.iter().map(|o| o.evaluate(&cfg)).collect::<Result<Vec<_>>>()?;
    Ok(SweepRow {
        axes: grid.axes.iter().map(|a| p.0[&a.name]).collect(),
        values,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig2,
    Fig3,
    Fig4,
    Fig5,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2" => Ok(Figure::Fig2),
            "fig3" => Ok(Figure::Fig3),
            "fig4" => Ok(Figure::Fig4),
            "fig5" => Ok(Figure::Fig5),
            _ => Err(Error::Parse(format!("unknown figure `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FigureOptions {
    /// Attenuation for the contour figures.
    pub xi: f64,
    pub t: f64,
    /// Steps per axis of the two-dimensional grids.
    pub resolution: usize,
    /// Attenuation curves for the strength scan.
    pub xi_list: Vec<f64>,
    /// Measurement strength for the time/decay-rate surfaces.
    pub g: f64,
    pub t_max: f64,
    pub gamma_max: f64,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions {
            xi: 1.0,
            t: 1.0,
            resolution: 101,
            xi_list: vec![1.0, 0.999, 0.99, 0.9, 0.5],
            g: 0.02,
            t_max: 5.0,
            gamma_max: 2.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FigureTable {
    pub file_name: String,
    pub table: Table,
}

fn strength_angle_grid(opts: &FigureOptions, xi: f64) -> Result<SweepGrid> {
    SweepGrid::new(
        vec![
            Axis::new(Param::G, 0.0, 1.0, opts.resolution),
            Axis::new(Param::Theta, 0.0, 2.0 * PI, opts.resolution),
        ],
        [(Param::Xi, xi), (Param::T, opts.t)].into_iter().collect(),
    )
}

/// Compute the tables behind one figure.
pub fn figure_tables(fig: Figure, opts: &FigureOptions) -> Result<Vec<FigureTable>> {
    let named = |file: &str, table: Table| FigureTable {
        file_name: file.to_string(),
        table,
    };
    match fig {
        Figure::Fig2 => {
            let grid = strength_angle_grid(opts, opts.xi)?;
            [Output::HWvaOverHD, Output::HDOverHWva, Output::Q, Output::RatioDirect]
                .iter()
                .map(|&o| Ok(named(&format!("fig2_{}.csv", o.name()), sweep(&grid, &[o])?)))
                .collect()
        }
        Figure::Fig3 => {
            if opts.xi_list.is_empty() {
                return Err(Error::Grid("empty attenuation list".into()));
            }
            let mut rows = Vec::new();
            for &xi in &opts.xi_list {
                let grid = SweepGrid::new(
                    vec![Axis::new(Param::G, 0.0, 1.0, 101)],
                    [(Param::Xi, xi), (Param::T, opts.t), (Param::Theta, PI)].into_iter().collect(),
                )?;
                for row in sweep(&grid, &[Output::RatioDirect])?.rows {
                    rows.push(SweepRow {
                        axes: vec![xi, row.axes[0]],
                        values: row.values,
                    });
                }
            }
            let columns = vec!["xi".into(), "G".into(), Output::RatioDirect.name().into()];
            Ok(vec![named("fig3.csv", Table { columns, rows })])
        }
        Figure::Fig4 => {
            let grid = SweepGrid::new(
                vec![
                    Axis::new(Param::T, 0.0, opts.t_max, opts.resolution),
                    Axis::new(Param::Gamma, 0.0, opts.gamma_max, opts.resolution),
                ],
                [(Param::G, opts.g), (Param::Theta, PI)].into_iter().collect(),
            )?;
            let table = sweep(&grid, &[Output::HD, Output::QHWva, Output::RatioDirect])?;
            Ok(vec![named("fig4.csv", table)])
        }
        Figure::Fig5 => {
            let grid = strength_angle_grid(opts, 1.0)?;
            let table = sweep(&grid, &[Output::QHWva, Output::OneMinusQHPerp, Output::HTotal])?;
            Ok(vec![named("fig5.csv", table)])
        }
    }
}

/// Write a figure's tables into `dir`, returning the paths written.
pub fn write_figure(fig: Figure, opts: &FigureOptions, dir: &Path) -> Result<Vec<PathBuf>> {
    let tables = figure_tables(fig, opts)?;
    fs::create_dir_all(dir)?;
    let mut paths = Vec::new();
    for t in tables {
        let path = dir.join(&t.file_name);
        t.table.write_csv(fs::File::create(&path)?)?;
        paths.push(path);
    }
    Ok(paths)
}
