//! CSV and JSON writers.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use pepbcd::analysis::BoundReport;
use pepbcd::Result;
use serde::Serialize;

use crate::config::Format;

/// One CSV line per worst-case solve.
#[derive(Debug, Clone, Serialize)]
pub struct BoundRow {
    pub method: String,
    pub p: usize,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub order: String,
    #[serde(rename = "L")]
    pub lipschitz: String,
    pub gamma: String,
    pub setting: String,
    #[serde(rename = "R")]
    pub radius: Option<f64>,
    pub criterion: String,
    pub bound: f64,
    pub beck_bound: Option<f64>,
    pub lower_bound: Option<f64>,
    pub solver_status: String,
    pub solve_seconds: f64,
    pub tol: f64,
}

pub fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(";")
}

impl From<&BoundReport> for BoundRow {
    fn from(r: &BoundReport) -> Self {
        Self {
            method: r.method.to_string(),
            p: r.p,
            k: r.cycles,
            order: r.order.clone(),
            lipschitz: join(&r.lipschitz),
            gamma: r.gamma.as_deref().map(join).unwrap_or_default(),
            setting: r.setting.clone(),
            radius: r.radius,
            criterion: r.criterion.to_string(),
            bound: r.bound,
            beck_bound: r.beck_bound,
            lower_bound: r.lower_bound,
            solver_status: r.solver_status.to_string(),
            solve_seconds: r.solve_seconds,
            tol: r.tol,
        }
    }
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(File::create(p)?),
        None => Box::new(io::stdout().lock()),
    })
}

fn csv_error(e: csv::Error) -> pepbcd::PepError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => e.into(),
        other => pepbcd::PepError::InvalidInput(format!("csv: {other:?}")),
    }
}

/// Writes `rows` as CSV, or `json` as pretty JSON.
pub fn emit<R: Serialize, J: Serialize + ?Sized>(
    format: Format,
    out: Option<&Path>,
    rows: &[R],
    json: &J,
) -> Result<()> {
    let mut w = sink(out)?;
    match format {
        Format::Csv => {
            let mut c = csv::Writer::from_writer(&mut w);
            for r in rows {
                c.serialize(r).map_err(csv_error)?;
            }
            c.flush()?;
        }
        Format::Json => {
            serde_json::to_writer_pretty(&mut w, json)?;
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn emit_json<J: Serialize + ?Sized>(out: Option<&Path>, json: &J) -> Result<()> {
    emit::<(), J>(Format::Json, out, &[], json)
}
