//! Persistence of run records: a JSON-lines file (one header line, then
//! one record per line) and a per-member summary CSV.
//!
//! Files are keyed by the config hash recorded in their header line, so a
//! resumed sweep can refuse to mix records from different configurations.
//! Record payloads are deterministic for identical (config, seed) runs
//! once the wall-clock field is masked; [`RunRecord::payload_json`] does
//! exactly that.

use crate::dynamics::{DynamicsTrace, KeyQuantities};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

/// One completed (or diverged) training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    /// Hash of the full experiment config that produced this run.
    pub config_hash: String,
    /// Sweep-axis value of this run.
    pub sweep_value: f64,
    /// Ensemble member index.
    pub member: usize,
    /// Canonical per-member seed (mixes the master seed and member index).
    pub seed: u64,
    /// True when training diverged; the trace then stops at the last
    /// finite epoch and the run is excluded from aggregates.
    pub failed: bool,
    /// Full loss and observable series.
    pub trace: DynamicsTrace,
    /// Headline scalars.
    pub key_quantities: KeyQuantities,
    /// Wall-clock duration of the run (masked in payload comparisons).
    pub wall_clock_seconds: f64,
    /// Software version that wrote the record.
    pub version: String,
}

impl RunRecord {
    /// Deterministic JSON payload: the record with wall-clock zeroed, so
    /// identical (config, seed) runs compare byte-identical.
    pub fn payload_json(&self) -> Result<String> {
        let mut masked = self.clone();
        masked.wall_clock_seconds = 0.0;
        Ok(serde_json::to_string(&masked)?)
    }

    /// Test loss at the minimum-test-loss epoch.
    pub fn min_test_loss(&self) -> Option<f64> {
        let epoch = self.trace.min_test_loss.epoch;
        self.trace
            .losses
            .iter()
            .find(|p| p.epoch == epoch)
            .map(|p| p.test_loss)
    }
}

/// First line of a records file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordsFileHeader {
    /// Always the literal `"header"`.
    pub kind: String,
    /// Config hash all records in the file must share.
    pub config_hash: String,
    /// Software version that created the file.
    pub version: String,
}

/// Write a records file from scratch: header line plus one JSON line per
/// record, in the order given.
///
/// # Errors
/// Fails on I/O or serialization errors.
pub fn write_records(path: &Path, config_hash: &str, records: &[RunRecord]) -> Result<()> {
    let mut out: Vec<u8> = Vec::new();
    let header = RecordsFileHeader {
        kind: "header".to_string(),
        config_hash: config_hash.to_string(),
        version: crate::VERSION.to_string(),
    };
    serde_json::to_writer(&mut out, &header)?;
    out.push(b'\n');
    for record in records {
        serde_json::to_writer(&mut out, record)?;
        out.push(b'\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.to_path_buf(), e))
}

/// Append one record to an existing records file whose header must carry
/// the same config hash.
///
/// # Errors
/// Fails on I/O errors or a header/config-hash mismatch.
pub fn append_record(path: &Path, config_hash: &str, record: &RunRecord) -> Result<()> {
    let (header, _) = read_records(path)?;
    if header.config_hash != config_hash {
        return Err(Error::Records {
            message: format!(
                "config hash mismatch: file {} carries {}, run uses {}",
                path.display(),
                header.config_hash,
                config_hash
            ),
        });
    }
    let mut file = fs::OpenOptions::new()
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut line = serde_json::to_string(record)?;
    line.push('\n');
    file.write_all(line.as_bytes())
        .map_err(|e| Error::io(path.to_path_buf(), e))
}

/// Read a records file back into its header and record list.
///
/// # Errors
/// Fails on I/O errors, a malformed header, or malformed record lines.
pub fn read_records(path: &Path) -> Result<(RecordsFileHeader, Vec<RunRecord>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.to_path_buf(), e))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header_line = lines.next().ok_or_else(|| Error::Records {
        message: format!("{}: empty records file", path.display()),
    })?;
    let header: RecordsFileHeader =
        serde_json::from_str(header_line).map_err(|e| Error::Records {
            message: format!("{}: malformed header line: {e}", path.display()),
        })?;
    if header.kind != "header" {
        return Err(Error::Records {
            message: format!("{}: first line is not a header", path.display()),
        });
    }
    let mut records = Vec::new();
    for (i, line) in lines.enumerate() {
        let record: RunRecord = serde_json::from_str(line).map_err(|e| Error::Records {
            message: format!("{}: malformed record on line {}: {e}", path.display(), i + 2),
        })?;
        records.push(record);
    }
    Ok((header, records))
}

/// Column order of the summary CSV.
pub const SUMMARY_COLUMNS: [&str; 10] = [
    "sweep_value",
    "seed",
    "min_test_loss",
    "trace_init",
    "trace_min",
    "beta",
    "gamma_min",
    "chi_min",
    "label_alignment_min",
    "epochs_to_min",
];

/// Write the per-member summary CSV: a comment line carrying config hash
/// and version, the column header, and one row per record, sorted by
/// (sweep value, member). Floats use shortest round-trip formatting; a
/// missing adaptation rate leaves its field empty.
///
/// # Errors
/// Fails on I/O errors.
pub fn write_summary_csv(path: &Path, config_hash: &str, records: &[RunRecord]) -> Result<()> {
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by(|a, b| {
        a.sweep_value
            .total_cmp(&b.sweep_value)
            .then(a.member.cmp(&b.member))
    });
    let mut out = String::new();
    out.push_str(&format!(
        "# config_hash={} version={}\n",
        config_hash,
        crate::VERSION
    ));
    out.push_str(&SUMMARY_COLUMNS.join(","));
    out.push('\n');
    for record in sorted {
        let q = &record.key_quantities;
        let chi = q
            .adaptation_rate_min
            .map_or(String::new(), |v| format!("{v}"));
        let min_loss = record
            .min_test_loss()
            .map_or(String::new(), |v| format!("{v}"));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            record.sweep_value,
            record.seed,
            min_loss,
            q.trace_init,
            q.trace_min,
            q.trace_ratio,
            q.effective_rank_min,
            chi,
            record.trace.min_test_loss.label_alignment,
            record.trace.min_test_loss.epoch,
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path.to_path_buf(), e))
}

/// Hand-built record for tests that exercise aggregation and persistence
/// without running any training.
#[cfg(test)]
pub(crate) fn sample_record(sweep_value: f64, member: usize, seed: u64) -> RunRecord {
    use crate::dynamics::{LossPoint, NtkObservation, SnapshotSummary};
    let losses = vec![
        LossPoint {
            epoch: 0,
            train_loss: 1.0,
            test_loss: 1.1,
        },
        LossPoint {
            epoch: 1,
            train_loss: 0.5,
            test_loss: 0.6,
        },
    ];
    let observations = vec![NtkObservation {
        epoch: 0,
        train_loss: 1.0,
        test_loss: 1.1,
        trace: 10.0,
        effective_rank: 2.5,
        label_alignment: 0.3,
        misalignment: 0.0,
    }];
    let init = SnapshotSummary {
        epoch: 0,
        epoch_tag: "init".to_string(),
        trace: 10.0,
        effective_rank_raw: 2.0,
        effective_rank: 2.5,
        label_alignment: 0.3,
    };
    let min = SnapshotSummary {
        epoch: 1,
        epoch_tag: "min_test_loss".to_string(),
        trace: 12.0,
        effective_rank_raw: 2.1,
        effective_rank: 2.6,
        label_alignment: 0.4,
    };
    RunRecord {
        config_hash: "abc123".to_string(),
        sweep_value,
        member,
        seed,
        failed: false,
        trace: DynamicsTrace {
            losses,
            observations,
            init,
            min_test_loss: min,
        },
        key_quantities: KeyQuantities {
            trace_init: 10.0,
            adaptation_rate_min: Some(-5.0),
            effective_rank_min: 2.6,
            trace_min: 12.0,
            trace_ratio: 0.2,
        },
        wall_clock_seconds: 3.25,
        version: crate::VERSION.to_string(),
    }
}
