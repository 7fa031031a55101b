//! Run records as CSV: one row per `(step, channel)`, columns
//! `step,time,channel,truth` then `<filter>_mean,<filter>_std` per filter.
//! Floats are written in shortest round-trip form, so loading an emitted
//! file gives back the identical record.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{HarnessError, Result};
use crate::experiment::{Estimate, FilterSummary, RunRecord, RunRow};

const FIXED: [&str; 4] = ["step", "time", "channel", "truth"];

fn float(v: f64) -> String {
    format!("{v:?}")
}

pub fn write_record<W: Write>(record: &RunRecord, out: W) -> std::result::Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = FIXED.iter().map(|s| s.to_string()).collect();
    for f in &record.filters {
        header.push(format!("{f}_mean"));
        header.push(format!("{f}_std"));
    }
    w.write_record(&header)?;
    for row in &record.rows {
        let mut fields = vec![
            row.step.to_string(),
            float(row.time),
            row.channel.clone(),
            float(row.truth),
        ];
        for e in &row.estimates {
            fields.push(float(e.mean));
            fields.push(float(e.std));
        }
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(record: &RunRecord, path: &Path) -> Result<()> {
    if record
        .rows
        .iter()
        .any(|r| r.estimates.len() != record.filters.len())
    {
        return Err(HarnessError::data(
            path,
            "row estimates do not match the filter list",
        ));
    }
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    write_record(record, file).map_err(|e| csv_error(path, e))
}

pub fn read_record<R: Read>(input: R, path: &Path) -> Result<RunRecord> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = r.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.len() < FIXED.len() || header.iter().take(4).ne(FIXED) || (header.len() - 4) % 2 != 0
    {
        return Err(HarnessError::data(path, "not a run record header"));
    }
    let mut filters = Vec::new();
    for pair in header.iter().skip(4).collect::<Vec<_>>().chunks(2) {
        let name = pair[0]
            .strip_suffix("_mean")
            .filter(|n| pair[1].strip_suffix("_std") == Some(*n))
            .ok_or_else(|| HarnessError::data(path, format!("unexpected columns {pair:?}")))?;
        filters.push(name.to_string());
    }
    let mut record = RunRecord {
        filters,
        channels: Vec::new(),
        rows: Vec::new(),
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = i + 2;
        let num = |k: usize| -> Result<f64> {
            rec[k].parse().map_err(|_| {
                HarnessError::data(path, format!("line {line}: bad number '{}'", &rec[k]))
            })
        };
        let step = rec[0].parse().map_err(|_| {
            HarnessError::data(path, format!("line {line}: bad step '{}'", &rec[0]))
        })?;
        let channel = rec[2].to_string();
        if !record.channels.contains(&channel) {
            record.channels.push(channel.clone());
        }
        let estimates = (0..record.filters.len())
            .map(|f| {
                Ok(Estimate {
                    mean: num(4 + 2 * f)?,
                    std: num(5 + 2 * f)?,
                })
            })
            .collect::<Result<_>>()?;
        record.rows.push(RunRow {
            step,
            time: num(1)?,
            channel,
            truth: num(3)?,
            estimates,
        });
    }
    Ok(record)
}

/// Reads a file written by [`emit_csv`]. Channels are recovered in order of
/// first appearance.
pub fn load_csv(path: &Path) -> Result<RunRecord> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    read_record(file, path)
}

/// `filter,channel,rmse` for every filter and channel.
pub fn emit_summary(record: &RunRecord, summaries: &[FilterSummary], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut write = || -> std::result::Result<(), csv::Error> {
        w.write_record(["filter", "channel", "rmse"])?;
        for s in summaries {
            for (c, v) in record.channels.iter().zip(&s.rmse) {
                w.write_record([s.filter.as_str(), c.as_str(), &float(*v)])?;
            }
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| csv_error(path, e))
}

/// Wall-clock seconds per filter. Kept apart from the other outputs because
/// it is the only one that changes between identical runs.
pub fn emit_timing(summaries: &[FilterSummary], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let mut write = || -> std::result::Result<(), csv::Error> {
        w.write_record(["filter", "wall_time_s"])?;
        for s in summaries {
            w.write_record([s.filter.as_str(), &float(s.wall_time_s)])?;
        }
        w.flush()?;
        Ok(())
    };
    write().map_err(|e| csv_error(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> HarnessError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::data(path, format!("{other:?}")),
    }
}
