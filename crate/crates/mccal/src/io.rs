//! File formats tying the pipeline together.
//!
//! Three interchange formats, all versioned:
//!
//! - logit dumps: UTF-8 line-delimited JSON, one record per line, holding
//!   the `N x C` logit stack and true label for one input;
//! - single-document JSON for fitted temperatures, calibration reports,
//!   and model checkpoints;
//! - CSV (header row, LF line endings) for reliability tables and
//!   rejection curves.
//!
//! Floats are written in shortest round-trip form, so identical inputs
//! produce byte-identical files and every value re-parses exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::binning::{reliability_table, BinStats, BinnedReport, BinningAxis, PredictionRecord};
use crate::error::{Error, Result};
use crate::prob::{nll, LogitSampleSet, LogitVector, TemperatureParam};
use crate::rejection::RejectionCurve;
use crate::tempfit::FitConfig;
use crate::toynet::ToyNet;

pub const DUMP_FORMAT_VERSION: u32 = 1;
pub const REPORT_FORMAT_VERSION: u32 = 1;
pub const TEMPERATURE_FORMAT_VERSION: u32 = 1;
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const CSV_FORMAT_VERSION: u32 = 1;

fn dump_format_version() -> u32 {
    DUMP_FORMAT_VERSION
}

/// One line of a logit dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitDumpRecord {
    #[serde(default = "dump_format_version")]
    pub format_version: u32,
    pub id: String,
    pub label: usize,
    /// `N x C`, one row per stochastic forward pass.
    pub logits: Vec<Vec<f64>>,
}

impl LogitDumpRecord {
    /// Validate the record and convert it into a sample set; any violation
    /// becomes a schema error naming this record.
    pub fn to_sample_set(&self) -> Result<LogitSampleSet> {
        let schema_err = |message: String| Error::Schema {
            id: self.id.clone(),
            message,
        };
        if self.format_version != DUMP_FORMAT_VERSION {
            return Err(schema_err(format!(
                "unsupported format_version {}, expected {DUMP_FORMAT_VERSION}",
                self.format_version
            )));
        }
        let first_len = self
            .logits
            .first()
            .ok_or_else(|| schema_err("record has no logit rows".into()))?
            .len();
        for row in &self.logits {
            if row.len() != first_len {
                return Err(schema_err(format!(
                    "ragged logits: row of length {} in a record of width {first_len}",
                    row.len()
                )));
            }
        }
        let samples = self
            .logits
            .iter()
            .map(|row| LogitVector::new(row.clone()))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| schema_err(e.to_string()))?;
        LogitSampleSet::new(samples, self.label).map_err(|e| schema_err(e.to_string()))
    }

    pub fn from_sample_set(set: &LogitSampleSet, id: String) -> Self {
        Self {
            format_version: DUMP_FORMAT_VERSION,
            id,
            label: set.label(),
            logits: set.samples().iter().map(|s| s.values().to_vec()).collect(),
        }
    }
}

/// Build dump records from sample sets with sequential `prefix-NNNNN` ids.
pub fn records_from_sets(sets: &[LogitSampleSet], prefix: &str) -> Vec<LogitDumpRecord> {
    sets.iter()
        .enumerate()
        .map(|(i, set)| LogitDumpRecord::from_sample_set(set, format!("{prefix}-{i:05}")))
        .collect()
}

/// Stream-read a logit dump, enforcing one class count and one pass count
/// across the whole file.
pub fn read_logit_dump_from<R: BufRead>(reader: R) -> Result<Vec<LogitSampleSet>> {
    let mut sets = Vec::new();
    let mut expected_classes: Option<usize> = None;
    let mut expected_passes: Option<usize> = None;
    for (line_idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let record: LogitDumpRecord = serde_json::from_str(trimmed).map_err(|e| Error::Parse {
            line: line_idx + 1,
            message: e.to_string(),
        })?;
        let set = record.to_sample_set()?;
        if let Some(classes) = expected_classes {
            if set.classes() != classes {
                return Err(Error::Schema {
                    id: record.id,
                    message: format!(
                        "class count {} differs from {} used earlier in the file",
                        set.classes(),
                        classes
                    ),
                });
            }
        } else {
            expected_classes = Some(set.classes());
        }
        if let Some(passes) = expected_passes {
            if set.passes() != passes {
                return Err(Error::Schema {
                    id: record.id,
                    message: format!(
                        "pass count {} differs from {} used earlier in the file",
                        set.passes(),
                        passes
                    ),
                });
            }
        } else {
            expected_passes = Some(set.passes());
        }
        sets.push(set);
    }
    Ok(sets)
}

/// Read a logit dump from disk.
pub fn read_logit_dump(path: impl AsRef<Path>) -> Result<Vec<LogitSampleSet>> {
    read_logit_dump_from(BufReader::new(File::open(path)?))
}

pub fn write_logit_dump_to<W: Write>(mut writer: W, records: &[LogitDumpRecord]) -> Result<()> {
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_logit_dump(path: impl AsRef<Path>, records: &[LogitDumpRecord]) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_logit_dump_to(&mut writer, records)?;
    writer.flush()?;
    Ok(())
}

/// Serialized form of a fitted temperature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureFile {
    pub format_version: u32,
    pub temperature: f64,
    pub fit_nll: f64,
    pub fit_iterations: usize,
    pub config: FitConfigEcho,
}

/// Echo of the fit configuration, for reproducibility audits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfigEcho {
    pub t_min: f64,
    pub t_max: f64,
    pub grid_points: usize,
    pub refine_tolerance: f64,
    pub max_refine_iters: usize,
}

impl From<&FitConfig> for FitConfigEcho {
    fn from(cfg: &FitConfig) -> Self {
        Self {
            t_min: cfg.t_min,
            t_max: cfg.t_max,
            grid_points: cfg.grid_points,
            refine_tolerance: cfg.refine_tolerance,
            max_refine_iters: cfg.max_refine_iters,
        }
    }
}

impl TemperatureFile {
    pub fn new(param: &TemperatureParam, cfg: &FitConfig) -> Self {
        Self {
            format_version: TEMPERATURE_FORMAT_VERSION,
            temperature: param.t,
            fit_nll: param.fit_nll,
            fit_iterations: param.fit_iterations,
            config: cfg.into(),
        }
    }
}

pub fn write_temperature(path: impl AsRef<Path>, file: &TemperatureFile) -> Result<()> {
    write_json(path, file)
}

pub fn read_temperature(path: impl AsRef<Path>) -> Result<TemperatureFile> {
    let file: TemperatureFile = read_json(path)?;
    if file.format_version != TEMPERATURE_FORMAT_VERSION {
        return Err(Error::Parse {
            line: 0,
            message: format!(
                "unsupported temperature format_version {}, expected {TEMPERATURE_FORMAT_VERSION}",
                file.format_version
            ),
        });
    }
    if !file.temperature.is_finite() || file.temperature <= 0.0 {
        return Err(Error::InvalidTemperature(file.temperature));
    }
    Ok(file)
}

/// The four reliability tables of a report: both axes, before and after
/// scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityTables {
    pub confidence_uncalibrated: BinnedReport,
    pub confidence_calibrated: BinnedReport,
    pub uncertainty_uncalibrated: BinnedReport,
    pub uncertainty_calibrated: BinnedReport,
}

/// Echo of the evaluate invocation that produced a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportConfigEcho {
    pub input: String,
    pub bins: usize,
    pub temperature: f64,
}

/// Everything `evaluate` knows, in one machine-readable document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub format_version: u32,
    pub tool_version: String,
    pub temperature: f64,
    pub n: usize,
    pub m_bins: usize,
    pub n_passes: usize,
    pub ece_uncalibrated: f64,
    pub ece_calibrated: f64,
    pub uce_uncalibrated: f64,
    pub uce_calibrated: f64,
    pub nll_uncalibrated: f64,
    pub nll_calibrated: f64,
    pub reliability: ReliabilityTables,
    pub config: ReportConfigEcho,
}

impl CalibrationReport {
    /// Score a test dump at `T = 1` and at the given temperature and
    /// assemble the full report.
    pub fn compute(
        sets: &[LogitSampleSet],
        temperature: f64,
        bins: usize,
        config: ReportConfigEcho,
    ) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::EmptyInput("report needs at least one sample set"));
        }
        if !temperature.is_finite() || temperature <= 0.0 {
            return Err(Error::InvalidTemperature(temperature));
        }
        let uncalibrated: Vec<PredictionRecord> = sets
            .iter()
            .map(|s| PredictionRecord::from_samples(s, 1.0))
            .collect::<Result<_>>()?;
        let calibrated: Vec<PredictionRecord> = sets
            .iter()
            .map(|s| PredictionRecord::from_samples(s, temperature))
            .collect::<Result<_>>()?;
        let reliability = ReliabilityTables {
            confidence_uncalibrated: reliability_table(
                &uncalibrated,
                bins,
                BinningAxis::Confidence,
            )?,
            confidence_calibrated: reliability_table(&calibrated, bins, BinningAxis::Confidence)?,
            uncertainty_uncalibrated: reliability_table(
                &uncalibrated,
                bins,
                BinningAxis::Uncertainty,
            )?,
            uncertainty_calibrated: reliability_table(&calibrated, bins, BinningAxis::Uncertainty)?,
        };
        Ok(Self {
            format_version: REPORT_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            temperature,
            n: sets.len(),
            m_bins: bins,
            n_passes: sets[0].passes(),
            ece_uncalibrated: reliability.confidence_uncalibrated.ece,
            ece_calibrated: reliability.confidence_calibrated.ece,
            uce_uncalibrated: reliability.uncertainty_uncalibrated.uce,
            uce_calibrated: reliability.uncertainty_calibrated.uce,
            nll_uncalibrated: nll(sets, 1.0)?,
            nll_calibrated: nll(sets, temperature)?,
            reliability,
            config,
        })
    }

    /// Prediction records for one temperature, shared by the reliability
    /// and rejection commands.
    pub fn score_records(
        sets: &[LogitSampleSet],
        temperature: f64,
    ) -> Result<Vec<PredictionRecord>> {
        sets.iter()
            .map(|s| PredictionRecord::from_samples(s, temperature))
            .collect()
    }
}

pub fn write_report(path: impl AsRef<Path>, report: &CalibrationReport) -> Result<()> {
    write_json(path, report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<CalibrationReport> {
    read_json(path)
}

/// Model checkpoint: dimensions, dropout probability, and row-major weight
/// arrays (`w1` is `hidden x input`, `w2` is `classes x hidden`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointFile {
    pub format_version: u32,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub dropout_p: f64,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

impl CheckpointFile {
    pub fn from_net(net: &ToyNet) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            input_dim: net.input_dim(),
            hidden_dim: net.hidden_dim(),
            classes: net.classes(),
            dropout_p: net.dropout_p(),
            w1: net.w1().to_vec(),
            b1: net.b1().to_vec(),
            w2: net.w2().to_vec(),
            b2: net.b2().to_vec(),
        }
    }

    pub fn into_net(self) -> Result<ToyNet> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Parse {
                line: 0,
                message: format!(
                    "unsupported checkpoint format_version {}, expected {CHECKPOINT_FORMAT_VERSION}",
                    self.format_version
                ),
            });
        }
        ToyNet::from_parts(
            self.input_dim,
            self.hidden_dim,
            self.classes,
            self.dropout_p,
            self.w1,
            self.b1,
            self.w2,
            self.b2,
        )
    }
}

pub fn write_checkpoint(path: impl AsRef<Path>, net: &ToyNet) -> Result<()> {
    write_json(path, &CheckpointFile::from_net(net))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<ToyNet> {
    let file: CheckpointFile = read_json(path)?;
    file.into_net()
}

fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut writer, value).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: impl AsRef<Path>) -> Result<T> {
    let mut contents = String::new();
    File::open(path)?.read_to_string(&mut contents)?;
    serde_json::from_str(&contents).map_err(|e| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    })
}

/// JSON alternative to the reliability CSV: both tables for one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityDoc {
    pub format_version: u32,
    pub axis: BinningAxis,
    pub temperature: f64,
    pub uncalibrated: BinnedReport,
    pub calibrated: BinnedReport,
}

pub fn write_reliability_json(path: impl AsRef<Path>, doc: &ReliabilityDoc) -> Result<()> {
    write_json(path, doc)
}

/// JSON alternative to the rejection CSV. The calibrated curve is present
/// only when a temperature was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionDoc {
    pub format_version: u32,
    pub temperature: Option<f64>,
    pub uncalibrated: RejectionCurve,
    pub calibrated: Option<RejectionCurve>,
}

pub fn write_rejection_json(path: impl AsRef<Path>, doc: &RejectionDoc) -> Result<()> {
    write_json(path, doc)
}

const RELIABILITY_CSV_HEADER: &str = "format_version,axis,calibrated,bin_index,bin_lower,bin_upper,count,mean_confidence,accuracy,mean_uncertainty,error_rate";

fn fmt_opt(value: Option<f64>) -> String {
    value.map(|v| v.to_string()).unwrap_or_default()
}

/// Write reliability tables (typically the uncalibrated and calibrated pair
/// for one axis) as CSV, one data row per bin per table.
pub fn write_reliability_csv_to<W: Write>(
    mut writer: W,
    tables: &[(bool, &BinnedReport)],
) -> Result<()> {
    writeln!(writer, "{RELIABILITY_CSV_HEADER}")?;
    for (calibrated, report) in tables {
        let axis = match report.axis {
            BinningAxis::Confidence => "confidence",
            BinningAxis::Uncertainty => "uncertainty",
        };
        let m = report.m_bins as f64;
        for (index, bin) in report.bins.iter().enumerate() {
            writeln!(
                writer,
                "{},{},{},{},{},{},{},{},{},{},{}",
                CSV_FORMAT_VERSION,
                axis,
                calibrated,
                index,
                index as f64 / m,
                (index + 1) as f64 / m,
                bin.count,
                fmt_opt(bin.mean_confidence),
                fmt_opt(bin.accuracy),
                fmt_opt(bin.mean_uncertainty),
                fmt_opt(bin.error_rate),
            )?;
        }
    }
    Ok(())
}

pub fn write_reliability_csv(
    path: impl AsRef<Path>,
    tables: &[(bool, &BinnedReport)],
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_reliability_csv_to(&mut writer, tables)?;
    writer.flush()?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(field: &str, line: usize, what: &str) -> Result<T> {
    field.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {what} from {field:?}"),
    })
}

fn parse_opt_field(field: &str, line: usize, what: &str) -> Result<Option<f64>> {
    if field.is_empty() {
        return Ok(None);
    }
    parse_field(field, line, what).map(Some)
}

/// Re-parse a reliability CSV into per-table `BinnedReport`s with the gap
/// scalars recomputed from the parsed bin statistics.
pub fn read_reliability_csv_from<R: BufRead>(reader: R) -> Result<Vec<(bool, BinnedReport)>> {
    let mut lines = reader.lines().enumerate();
    let header = lines
        .next()
        .ok_or(Error::Parse {
            line: 1,
            message: "missing CSV header".into(),
        })?
        .1?;
    if header.trim_end() != RELIABILITY_CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: "unexpected reliability CSV header".into(),
        });
    }

    let mut tables: Vec<(bool, BinningAxis, Vec<BinStats>)> = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 11 fields, found {}", fields.len()),
            });
        }
        let version: u32 = parse_field(fields[0], line_no, "format_version")?;
        if version != CSV_FORMAT_VERSION {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unsupported csv format_version {version}"),
            });
        }
        let axis = match fields[1] {
            "confidence" => BinningAxis::Confidence,
            "uncertainty" => BinningAxis::Uncertainty,
            other => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("unknown axis {other:?}"),
                })
            }
        };
        let calibrated: bool = parse_field(fields[2], line_no, "calibrated")?;
        let bin_index: usize = parse_field(fields[3], line_no, "bin_index")?;
        let stats = BinStats {
            count: parse_field(fields[6], line_no, "count")?,
            mean_confidence: parse_opt_field(fields[7], line_no, "mean_confidence")?,
            accuracy: parse_opt_field(fields[8], line_no, "accuracy")?,
            mean_uncertainty: parse_opt_field(fields[9], line_no, "mean_uncertainty")?,
            error_rate: parse_opt_field(fields[10], line_no, "error_rate")?,
        };
        if bin_index == 0 {
            tables.push((calibrated, axis, Vec::new()));
        }
        let current = tables.last_mut().ok_or(Error::Parse {
            line: line_no,
            message: "first data row must start a table at bin_index 0".into(),
        })?;
        if current.2.len() != bin_index {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "bin_index {bin_index} out of order, expected {}",
                    current.2.len()
                ),
            });
        }
        current.2.push(stats);
    }

    tables
        .into_iter()
        .map(|(calibrated, axis, bins)| {
            let total_n: usize = bins.iter().map(|b| b.count).sum();
            if total_n == 0 {
                return Err(Error::Parse {
                    line: 0,
                    message: "table has no occupied bins".into(),
                });
            }
            let mut report = BinnedReport {
                axis,
                m_bins: bins.len(),
                total_n,
                ece: 0.0,
                uce: 0.0,
                bins,
            };
            let (ece, uce) = report.recompute_gaps();
            report.ece = ece;
            report.uce = uce;
            Ok((calibrated, report))
        })
        .collect()
}

pub fn read_reliability_csv(path: impl AsRef<Path>) -> Result<Vec<(bool, BinnedReport)>> {
    read_reliability_csv_from(BufReader::new(File::open(path)?))
}

const REJECTION_CSV_HEADER: &str =
    "format_version,calibrated,h_max,retained_count,retained_fraction,top1_error";

/// Write rejection curves as CSV, one data row per threshold per curve.
pub fn write_rejection_csv_to<W: Write>(
    mut writer: W,
    curves: &[(bool, &RejectionCurve)],
) -> Result<()> {
    writeln!(writer, "{REJECTION_CSV_HEADER}")?;
    for (calibrated, curve) in curves {
        for point in &curve.points {
            writeln!(
                writer,
                "{},{},{},{},{},{}",
                CSV_FORMAT_VERSION,
                calibrated,
                point.h_max,
                point.retained_count,
                point.retained_fraction,
                fmt_opt(point.top1_error),
            )?;
        }
    }
    Ok(())
}

pub fn write_rejection_csv(
    path: impl AsRef<Path>,
    curves: &[(bool, &RejectionCurve)],
) -> Result<()> {
    let mut writer = BufWriter::new(File::create(path)?);
    write_rejection_csv_to(&mut writer, curves)?;
    writer.flush()?;
    Ok(())
}
