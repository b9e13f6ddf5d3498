use std::path::Path;

use monovo_core::evaluation::{CumulativeDistribution, DriftReport};

use crate::error::{Error, Result};

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(Error::csv(path))
}

fn finish(path: &Path, mut w: csv::Writer<std::fs::File>) -> Result<()> {
    w.flush().map_err(Error::io(path))
}

/// `step,energy` rows.
pub fn write_energy_trace(path: &Path, trace: &[f64]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["step", "energy"]).map_err(Error::csv(path))?;
    for (i, e) in trace.iter().enumerate() {
        w.write_record([i.to_string(), e.to_string()])
            .map_err(Error::csv(path))?;
    }
    finish(path, w)
}

/// Report columns; `e_s_sym` is derived and ignored on read.
pub const REPORT_COLUMNS: [&str; 10] = [
    "sequence",
    "e_s",
    "e_s_sym",
    "e_r",
    "e_t",
    "e_align",
    "e_rmse",
    "rmse_start",
    "rmse_end",
    "unmatched",
];

/// Writes one row per named report. Failed runs serialize as `inf`.
pub fn write_reports(path: &Path, reports: &[(String, DriftReport)]) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(REPORT_COLUMNS).map_err(Error::csv(path))?;
    for (name, r) in reports {
        w.write_record([
            name.clone(),
            r.e_s.to_string(),
            r.e_s_sym().to_string(),
            r.e_r.to_string(),
            r.e_t.to_string(),
            r.e_align.to_string(),
            r.e_rmse.to_string(),
            r.rmse_start.to_string(),
            r.rmse_end.to_string(),
            r.unmatched.to_string(),
        ])
        .map_err(Error::csv(path))?;
    }
    finish(path, w)
}

pub fn read_reports(path: &Path) -> Result<Vec<(String, DriftReport)>> {
    let mut r = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let header = r.headers().map_err(Error::csv(path))?.clone();
    if header.iter().ne(REPORT_COLUMNS) {
        return Err(Error::parse(
            path,
            1,
            format!("expected header '{}'", REPORT_COLUMNS.join(",")),
        ));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(Error::csv(path))?;
        let num = |k: usize| -> Result<f64> {
            let s = rec.get(k).unwrap_or("");
            s.parse()
                .map_err(|_| Error::parse(path, line, format!("invalid {} '{s}'", REPORT_COLUMNS[k])))
        };
        let unmatched = rec.get(9).unwrap_or("");
        out.push((
            rec.get(0).unwrap_or("").to_owned(),
            DriftReport {
                e_s: num(1)?,
                e_r: num(3)?,
                e_t: num(4)?,
                e_align: num(5)?,
                e_rmse: num(6)?,
                rmse_start: num(7)?,
                rmse_end: num(8)?,
                unmatched: unmatched
                    .parse()
                    .map_err(|_| Error::parse(path, line, format!("invalid unmatched '{unmatched}'")))?,
            },
        ));
    }
    Ok(out)
}

/// `threshold,count` rows.
pub fn write_cumulative(path: &Path, cd: &CumulativeDistribution) -> Result<()> {
    let mut w = writer(path)?;
    w.write_record(["threshold", "count"]).map_err(Error::csv(path))?;
    for (x, n) in &cd.points {
        w.write_record([x.to_string(), n.to_string()])
            .map_err(Error::csv(path))?;
    }
    finish(path, w)
}
