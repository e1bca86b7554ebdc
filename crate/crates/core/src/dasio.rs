//! On-disk data model: `.das` trial payloads, JSON metadata sidecars and
//! per-window anomaly reports.
//!
//! `.das` layout, all little-endian:
//!
//! | offset | size | field                         |
//! |-------:|-----:|-------------------------------|
//! | 0      | 4    | magic `b"DAS1"`               |
//! | 4      | 2    | format version (u16, = 1)     |
//! | 6      | 4    | n_channels (u32)              |
//! | 10     | 8    | n_samples (u64)               |
//! | 18     | 8    | fs, Hz (f64)                  |
//! | 26     | 8    | channel_spacing, m (f64)      |
//! | 34     | 8    | first_channel_position, m (f64)|
//! | 42     | ...  | samples, f32, time-major      |

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"DAS1";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 42;

/// Time x channel strain-rate samples with their sampling geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DasRecord {
    /// `n_samples x n_channels`, time-major.
    pub samples: Array2<f32>,
    /// Sampling frequency in Hz.
    pub fs: f64,
    /// Distance between adjacent channels in m.
    pub channel_spacing: f64,
    /// Position of channel 0 along the cable in m.
    pub first_channel_position: f64,
}

impl DasRecord {
    /// Builds a record after checking every invariant.
    pub fn new(
        samples: Array2<f32>,
        fs: f64,
        channel_spacing: f64,
        first_channel_position: f64,
    ) -> Result<Self> {
        let rec = DasRecord {
            samples,
            fs,
            channel_spacing,
            first_channel_position,
        };
        rec.validate()?;
        Ok(rec)
    }

    pub fn n_samples(&self) -> usize {
        self.samples.nrows()
    }

    pub fn n_channels(&self) -> usize {
        self.samples.ncols()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_samples() as f64 / self.fs
    }

    pub fn channel_position(&self, channel: usize) -> f64 {
        self.first_channel_position + channel as f64 * self.channel_spacing
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_samples() == 0 || self.n_channels() == 0 {
            return Err(Error::InvalidRecord("record has no samples or no channels".into()));
        }
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::InvalidRecord(format!("fs must be positive, got {}", self.fs)));
        }
        if !(self.channel_spacing > 0.0 && self.channel_spacing.is_finite()) {
            return Err(Error::InvalidRecord(format!(
                "channel_spacing must be positive, got {}",
                self.channel_spacing
            )));
        }
        if !self.first_channel_position.is_finite() {
            return Err(Error::InvalidRecord("first_channel_position is not finite".into()));
        }
        for ((row, channel), v) in self.samples.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteSample { row, channel });
            }
        }
        Ok(())
    }
}

/// Ground-truth sidecar for one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetadata {
    pub trial_id: String,
    pub section_id: String,
    pub exposure_length_m: f64,
    pub wave_height_m: f64,
    pub wave_period_s: f64,
    pub trial_index: u32,
    pub duration_s: f64,
}

impl TrialMetadata {
    /// Checks the field invariants, and the duration against `record` when given.
    pub fn validate(&self, record: Option<&DasRecord>) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMetadata(msg));
        if self.trial_id.is_empty() || self.section_id.is_empty() {
            return bad("trial_id and section_id must be non-empty".into());
        }
        if !(self.exposure_length_m > 0.0 && self.exposure_length_m.is_finite()) {
            return bad(format!("exposure_length_m must be positive, got {}", self.exposure_length_m));
        }
        if !(self.wave_period_s > 0.0 && self.wave_period_s.is_finite()) {
            return bad(format!("wave_period_s must be positive, got {}", self.wave_period_s));
        }
        if !self.wave_height_m.is_finite() || self.wave_height_m < 0.0 {
            return bad(format!("wave_height_m must be non-negative, got {}", self.wave_height_m));
        }
        if self.trial_index < 1 {
            return bad("trial_index must be >= 1".into());
        }
        if let Some(rec) = record {
            let expected = rec.duration_s();
            if (self.duration_s - expected).abs() > 1.0 / rec.fs {
                return bad(format!(
                    "duration_s {} disagrees with record duration {}",
                    self.duration_s, expected
                ));
            }
        }
        Ok(())
    }
}

fn with_ext(base: &Path, ext: &str) -> PathBuf {
    let mut s = base.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

/// Path of the `.das` payload for a trial base path.
pub fn das_path(base: &Path) -> PathBuf {
    with_ext(base, "das")
}

/// Path of the JSON sidecar for a trial base path.
pub fn meta_path(base: &Path) -> PathBuf {
    with_ext(base, "json")
}

/// Writes `bytes` to `path` through a sibling temp file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Serializes a record into the `.das` byte layout.
pub fn encode_record(record: &DasRecord) -> Vec<u8> {
    let n = record.n_samples();
    let c = record.n_channels();
    let mut out = Vec::with_capacity(HEADER_LEN + n * c * 4);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(c as u32).to_le_bytes());
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&record.fs.to_le_bytes());
    out.extend_from_slice(&record.channel_spacing.to_le_bytes());
    out.extend_from_slice(&record.first_channel_position.to_le_bytes());
    for v in record.samples.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses the `.das` byte layout.
pub fn decode_record(bytes: &[u8]) -> Result<DasRecord> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(Error::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::LengthMismatch {
            expected: HEADER_LEN as u64,
            found: bytes.len() as u64,
        });
    }
    let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());

    let version = u16_at(4);
    if version != FORMAT_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let n_channels = u32_at(6) as u64;
    let n_samples = u64_at(10);
    let fs = f64_at(18);
    let channel_spacing = f64_at(26);
    let first_channel_position = f64_at(34);

    let payload = (bytes.len() - HEADER_LEN) as u64;
    let expected = n_samples
        .checked_mul(n_channels)
        .and_then(|v| v.checked_mul(4))
        .ok_or(Error::LengthMismatch {
            expected: u64::MAX,
            found: payload,
        })?;
    if expected != payload {
        return Err(Error::LengthMismatch {
            expected,
            found: payload,
        });
    }
    let data: Vec<f32> = bytes[HEADER_LEN..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let samples = Array2::from_shape_vec((n_samples as usize, n_channels as usize), data)
        .map_err(|e| Error::InvalidRecord(e.to_string()))?;
    DasRecord::new(samples, fs, channel_spacing, first_channel_position)
}

/// Writes `<base>.das` and `<base>.json`.
pub fn write_trial(record: &DasRecord, meta: &TrialMetadata, base: &Path) -> Result<()> {
    record.validate()?;
    meta.validate(Some(record))?;
    write_atomic(&das_path(base), &encode_record(record))?;
    let json = serde_json::to_string_pretty(meta)?;
    write_atomic(&meta_path(base), json.as_bytes())
}

/// Reads a trial previously written by [`write_trial`].
pub fn read_trial(base: &Path) -> Result<(DasRecord, TrialMetadata)> {
    let meta = read_metadata(base)?;
    let dp = das_path(base);
    let bytes = fs::read(&dp).map_err(|e| Error::io(&dp, e))?;
    let record = decode_record(&bytes)?;
    meta.validate(Some(&record))?;
    Ok((record, meta))
}

/// Reads and validates only the JSON sidecar.
pub fn read_metadata(base: &Path) -> Result<TrialMetadata> {
    let mp = meta_path(base);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    let meta: TrialMetadata =
        serde_json::from_str(&text).map_err(|e| Error::InvalidMetadata(e.to_string()))?;
    meta.validate(None)?;
    Ok(meta)
}

/// Lists trial base paths in `dir` (every `<base>.das` with a matching `<base>.json`), sorted.
pub fn list_trials(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) == Some("das") {
            let base = path.with_extension("");
            if meta_path(&base).exists() {
                out.push(base);
            }
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Anomalous,
}

impl Label {
    /// Sign rule: strictly negative scores are anomalous, zero is normal.
    pub fn from_score(score: f64) -> Self {
        if score < 0.0 {
            Label::Anomalous
        } else {
            Label::Normal
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Normal => "normal",
            Label::Anomalous => "anomalous",
        }
    }
}

/// One scored window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub trial_id: String,
    pub section_id: String,
    pub window_index: usize,
    pub anomaly_score: f64,
    pub label: Label,
    pub delta_l_m: f64,
    /// Ground-truth exposure length of the trial.
    pub exposure_length_m: f64,
    /// Exposure length estimated by the PLS regression for this window.
    pub estimated_exposure_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub delta_l_m: f64,
    pub n_windows: usize,
    pub mean_score: f64,
    pub fraction_anomalous: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub n_windows: usize,
    pub mean_score: Option<f64>,
    pub fraction_anomalous: Option<f64>,
    pub by_delta_l: Vec<DeltaSummary>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AnomalyReport {
    pub rows: Vec<ReportRow>,
}

const REPORT_HEADER: [&str; 8] = [
    "trial_id",
    "section_id",
    "window_index",
    "anomaly_score",
    "label",
    "delta_l_m",
    "exposure_length_m",
    "estimated_exposure_m",
];

impl AnomalyReport {
    pub fn extend(&mut self, other: AnomalyReport) {
        self.rows.extend(other.rows);
    }

    pub fn summary(&self) -> ReportSummary {
        let n = self.rows.len();
        let mean = |rows: &[&ReportRow]| rows.iter().map(|r| r.anomaly_score).sum::<f64>() / rows.len() as f64;
        let frac = |rows: &[&ReportRow]| {
            rows.iter().filter(|r| r.label == Label::Anomalous).count() as f64 / rows.len() as f64
        };
        let all: Vec<&ReportRow> = self.rows.iter().collect();
        // keyed by the bit pattern of the (normalized) delta so levels sort numerically
        let mut groups: BTreeMap<OrderedDelta, Vec<&ReportRow>> = BTreeMap::new();
        for r in &self.rows {
            groups.entry(OrderedDelta(r.delta_l_m + 0.0)).or_default().push(r);
        }
        ReportSummary {
            n_windows: n,
            mean_score: (n > 0).then(|| mean(&all)),
            fraction_anomalous: (n > 0).then(|| frac(&all)),
            by_delta_l: groups
                .into_iter()
                .map(|(k, rows)| DeltaSummary {
                    delta_l_m: k.0,
                    n_windows: rows.len(),
                    mean_score: mean(&rows),
                    fraction_anomalous: frac(&rows),
                })
                .collect(),
        }
    }

    /// CSV with a header row, comma separated, LF line endings.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(REPORT_HEADER).map_err(|e| Error::Csv(e.to_string()))?;
        for r in &self.rows {
            w.write_record([
                r.trial_id.clone(),
                r.section_id.clone(),
                r.window_index.to_string(),
                r.anomaly_score.to_string(),
                r.label.as_str().to_string(),
                r.delta_l_m.to_string(),
                r.exposure_length_m.to_string(),
                r.estimated_exposure_m.to_string(),
            ])
            .map_err(|e| Error::Csv(e.to_string()))?;
        }
        w.into_inner().map_err(|e| Error::Csv(e.to_string()))
    }

    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let headers = rdr.headers().map_err(|e| Error::Csv(e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != REPORT_HEADER {
            return Err(Error::Csv(format!("unexpected report header: {:?}", headers)));
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Csv(e.to_string()))?;
            let num = |i: usize| -> Result<f64> {
                rec[i]
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("column {}: {e}", REPORT_HEADER[i])))
            };
            let label = match &rec[4] {
                "normal" => Label::Normal,
                "anomalous" => Label::Anomalous,
                other => return Err(Error::Csv(format!("unknown label {other:?}"))),
            };
            rows.push(ReportRow {
                trial_id: rec[0].to_string(),
                section_id: rec[1].to_string(),
                window_index: rec[2]
                    .parse()
                    .map_err(|e| Error::Csv(format!("window_index: {e}")))?,
                anomaly_score: num(3)?,
                label,
                delta_l_m: num(5)?,
                exposure_length_m: num(6)?,
                estimated_exposure_m: num(7)?,
            });
        }
        Ok(AnomalyReport { rows })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OrderedDelta(f64);

impl Eq for OrderedDelta {}

impl PartialOrd for OrderedDelta {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for OrderedDelta {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}
