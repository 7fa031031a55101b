//! Twin datasets on disk, so that a run can be repeated against fixed data.
//!
//! A dataset directory holds three CSV files:
//! `truth.csv` (`step,time,<channel>...`, steps `0..=M`),
//! `measurements.csv` (`step,time,y1..yq`, steps `1..=M`) and
//! `noise_std.csv` (`channel,noise_std`, one row per measurement channel).

use std::fs::{self, File};
use std::path::Path;

use enks_core::problems::{TwinData, TwinProblem};
use enks_core::{MeasurementSeries, TimeGrid};
use nalgebra::{DMatrix, DVector};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

fn float(v: f64) -> String {
    format!("{v:?}")
}

fn wrap(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => HarnessError::io(path, io),
        other => HarnessError::data(path, format!("{other:?}")),
    }
}

fn write_table(
    path: &Path,
    header: &[String],
    rows: impl Iterator<Item = Vec<String>>,
) -> Result<()> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header).map_err(wrap(path))?;
    for r in rows {
        w.write_record(&r).map_err(wrap(path))?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

fn read_table(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let file = File::open(path).map_err(|e| HarnessError::io(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let header = r
        .headers()
        .map_err(wrap(path))?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| {
            rec.map(|rec| rec.iter().map(String::from).collect())
                .map_err(wrap(path))
        })
        .collect::<Result<_>>()?;
    Ok((header, rows))
}

fn parse(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| HarnessError::data(path, format!("line {line}: bad number '{s}'")))
}

pub fn write_dataset(dir: &Path, problem: &TwinProblem, data: &TwinData) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let times = data.grid.times();
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend(problem.channels.iter().cloned());
    write_table(
        &dir.join("truth.csv"),
        &header,
        (0..times.len()).map(|i| {
            let mut row = vec![i.to_string(), float(times[i])];
            row.extend(data.truth.column(i).iter().map(|&v| float(v)));
            row
        }),
    )?;
    let q = data.series.meas_dim();
    let mut header = vec!["step".to_string(), "time".to_string()];
    header.extend((1..=q).map(|i| format!("y{i}")));
    write_table(
        &dir.join("measurements.csv"),
        &header,
        (0..data.series.len()).map(|i| {
            let mut row = vec![(i + 1).to_string(), float(data.series.times()[i])];
            row.extend(data.series.values().column(i).iter().map(|&v| float(v)));
            row
        }),
    )?;
    write_table(
        &dir.join("noise_std.csv"),
        &["channel".to_string(), "noise_std".to_string()],
        data.noise_std
            .iter()
            .enumerate()
            .map(|(i, &s)| vec![format!("y{}", i + 1), float(s)]),
    )
}

pub fn load_dataset(dir: &Path) -> Result<TwinData> {
    let truth_path = dir.join("truth.csv");
    let (header, rows) = read_table(&truth_path)?;
    let n = header.len().saturating_sub(2);
    if n == 0 || rows.is_empty() {
        return Err(HarnessError::data(
            &truth_path,
            "no state channels or no samples",
        ));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut truth = DMatrix::zeros(n, rows.len());
    for (i, row) in rows.iter().enumerate() {
        times.push(parse(&truth_path, i + 2, &row[1])?);
        for c in 0..n {
            truth[(c, i)] = parse(&truth_path, i + 2, &row[2 + c])?;
        }
    }
    let grid =
        TimeGrid::new(times.clone()).map_err(|e| HarnessError::data(&truth_path, e.to_string()))?;

    let meas_path = dir.join("measurements.csv");
    let (header, rows) = read_table(&meas_path)?;
    let q = header.len().saturating_sub(2);
    if q == 0 || rows.len() + 1 != times.len() {
        return Err(HarnessError::data(
            &meas_path,
            format!(
                "expected {} measurements of at least one channel",
                times.len() - 1
            ),
        ));
    }
    let mut values = DMatrix::zeros(q, rows.len());
    let mut meas_times = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let t = parse(&meas_path, i + 2, &row[1])?;
        if t != times[i + 1] {
            return Err(HarnessError::data(
                &meas_path,
                format!("line {}: time differs from truth.csv", i + 2),
            ));
        }
        meas_times.push(t);
        for c in 0..q {
            values[(c, i)] = parse(&meas_path, i + 2, &row[2 + c])?;
        }
    }
    let series = MeasurementSeries::new(meas_times, values)
        .map_err(|e| HarnessError::data(&meas_path, e.to_string()))?;

    let noise_path = dir.join("noise_std.csv");
    let (_, rows) = read_table(&noise_path)?;
    if rows.len() != q {
        return Err(HarnessError::data(
            &noise_path,
            format!("expected {q} noise levels"),
        ));
    }
    let noise_std = rows
        .iter()
        .enumerate()
        .map(|(i, r)| parse(&noise_path, i + 2, &r[1]))
        .collect::<Result<Vec<_>>>()?;
    if noise_std.iter().any(|s| !(*s > 0.0)) {
        return Err(HarnessError::data(
            &noise_path,
            "noise levels must be positive",
        ));
    }
    Ok(TwinData {
        grid,
        truth,
        series,
        noise_std: DVector::from_vec(noise_std),
    })
}

/// Checks a loaded dataset against the problem and step size it will be
/// filtered with.
pub fn check_compatible(
    dir: &Path,
    data: &TwinData,
    problem: &TwinProblem,
    cfg: &ExperimentConfig,
) -> Result<()> {
    if data.truth.nrows() != problem.state_dim() {
        return Err(HarnessError::data(
            dir,
            format!(
                "dataset has {} state channels, {} expects {}",
                data.truth.nrows(),
                problem.name,
                problem.state_dim()
            ),
        ));
    }
    if data.series.meas_dim() != problem.measurement.meas_dim() {
        return Err(HarnessError::data(
            dir,
            "measurement dimension does not match the problem",
        ));
    }
    let tol = 1e-9 * cfg.dt.max(1.0);
    if data
        .grid
        .times()
        .windows(2)
        .any(|w| ((w[1] - w[0]) - cfg.dt).abs() > tol)
    {
        return Err(HarnessError::config(format!(
            "dataset spacing does not match dt = {}",
            cfg.dt
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ProblemId;
    use crate::experiment::build_problem;

    #[test]
    fn dataset_round_trip() {
        let mut cfg = ExperimentConfig::for_problem(ProblemId::Pendulum);
        cfg.horizon = 0.1;
        let problem = build_problem(&cfg).unwrap();
        let data = problem.generate(cfg.dt, cfg.steps(), 4).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_dataset(dir.path(), &problem, &data).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        assert_eq!(back, data);
        check_compatible(dir.path(), &back, &problem, &cfg).unwrap();
        cfg.dt = 0.02;
        assert_eq!(
            check_compatible(dir.path(), &back, &problem, &cfg)
                .unwrap_err()
                .exit_code(),
            2
        );
    }

    #[test]
    fn missing_files_are_io_errors() {
        let dir = tempfile::tempdir().unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap_err().exit_code(), 1);
    }
}
