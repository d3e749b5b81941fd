//! File formats: trace CSV, instance and parameter JSON, benchmark CSVs,
//! and run metadata.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use erl_core::bench::{BenchRow, Histogram};
use erl_core::cost::Instance;
use erl_core::energy::WeatherRecord;
use erl_core::experts::CrReport;
use erl_core::policy::PolicyParams;
use erl_core::trainer::TrainLogEntry;
use sha2::{Digest, Sha256};

/// Write hourly weather records; the header is part of the format.
pub fn write_trace_csv(path: &Path, records: &[WeatherRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Read hourly weather records; rows with missing or malformed values are
/// rejected outright.
pub fn read_trace_csv(path: &Path) -> Result<Vec<WeatherRecord>> {
    let mut r = csv::Reader::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let expected = ["timestamp", "wind_speed_ms", "solar_rad_kwm2", "temp_c", "base_demand_kw"];
    let headers = r.headers()?;
    if headers.iter().ne(expected) {
        bail!("unexpected trace header {:?}, want {:?}", headers, expected);
    }
    let mut out = Vec::new();
    for row in r.deserialize() {
        let rec: WeatherRecord = row.context("malformed trace row")?;
        rec.validate().map_err(|e| anyhow::anyhow!("{e}"))?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_instances(path: &Path, instances: &[Instance]) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer(f, instances)?;
    Ok(())
}

pub fn read_instances(path: &Path) -> Result<Vec<Instance>> {
    let f = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    let instances: Vec<Instance> = serde_json::from_reader(f)?;
    if instances.is_empty() {
        bail!("{} holds no instances", path.display());
    }
    Ok(instances)
}

pub fn write_params(path: &Path, params: &PolicyParams) -> Result<()> {
    let f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(f, params)?;
    Ok(())
}

pub fn read_params(path: &Path) -> Result<PolicyParams> {
    let f = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    Ok(serde_json::from_reader(f)?)
}

pub fn write_train_log(path: &Path, log: &[TrainLogEntry]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_cost", "val_cost"])?;
    for e in log {
        w.write_record(&[e.epoch.to_string(), e.train_cost.to_string(), e.val_cost.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["algorithm", "avg_cost_norm", "emp_cr", "n_instances"])?;
    for r in rows {
        w.write_record(&[
            r.algorithm.clone(),
            r.avg_cost_norm.to_string(),
            r.emp_cr.to_string(),
            r.n_instances.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv(path: &Path, hist: &Histogram) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["bin_left", "density"])?;
    for (i, d) in hist.densities.iter().enumerate() {
        w.write_record(&[hist.bin_left(i).to_string(), d.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One audit row per instance, CR-report schema.
pub fn write_audit_csv(path: &Path, rows: &[(usize, String, CrReport)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["instance_id", "algorithm", "cost", "opt_cost", "ratio", "bound", "satisfied"])?;
    for (id, alg, r) in rows {
        w.write_record(&[
            id.to_string(),
            alg.clone(),
            r.cost_alg.to_string(),
            r.cost_ref.to_string(),
            r.ratio.to_string(),
            r.bound.to_string(),
            r.satisfied.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Run metadata: the resolved configuration and input digests that make a
/// run reproducible.
pub fn write_metadata(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn sha256_hex(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
