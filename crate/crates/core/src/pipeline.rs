//! Two-stage workflow: a shared PLS feature extractor, then one one-class SVM
//! per free-span section trained on its baseline windows.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::dasio::{AnomalyReport, DasRecord, Label, ReportRow, TrialMetadata};
use crate::error::{Error, Result};
use crate::ocsvm::{default_gamma, fit_ocsvm, SectionModel, DEFAULT_NU};
use crate::par::Exec;
use crate::pls::{fit_pls, select_components_by_fold, PlsModel};
use crate::preprocess::{
    apply_scaler, build_feature_matrix, fit_scaler, select_segment, spectrogram_rows, stft_band, Spectrogram, Taper,
};
use crate::simulator::SimConfig;
use crate::stats::{binary_metrics, cliffs_delta, holm_correct, mae, mann_whitney_u, pearson_r, BinaryMetrics, TestMethod};

/// Lengths closer than this are treated as equal.
pub const LENGTH_TOLERANCE_M: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectionSpec {
    pub section_id: String,
    pub baseline_exposure_m: f64,
    /// Multiplier on the simulated bending stiffness of this section.
    #[serde(default = "one")]
    pub bending_stiffness_scale: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveCondition {
    pub height_m: f64,
    pub period_s: f64,
}

/// Experimental grid generated by the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub exposure_lengths_m: Vec<f64>,
    pub wave_conditions: Vec<WaveCondition>,
    pub n_trials: u32,
    /// Template for every trial; per-trial fields are overwritten.
    pub simulation: SimConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        let wave_conditions = [0.15, 0.30]
            .iter()
            .flat_map(|&h| [1.25, 2.5].map(|p| WaveCondition { height_m: h, period_s: p }))
            .collect();
        GridSpec {
            exposure_lengths_m: vec![2.0, 4.0, 6.0, 8.0, 10.0],
            wave_conditions,
            n_trials: 3,
            simulation: SimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub segment_start_m: f64,
    pub segment_length_m: f64,
    pub window_s: f64,
    pub hop_s: f64,
    pub f_max_hz: f64,
    /// Number of PLS components; chosen by cross-validation when absent.
    pub pls_k: Option<usize>,
    pub pls_k_max: usize,
    pub pls_folds: usize,
    pub nu: f64,
    pub gamma: Option<f64>,
    pub train_trial_index: u32,
    pub sections: Vec<SectionSpec>,
    pub grid: GridSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            segment_start_m: 4.0,
            segment_length_m: 12.0,
            window_s: 50.0,
            hop_s: 5.0,
            f_max_hz: 4.0,
            pls_k: None,
            pls_k_max: 10,
            pls_folds: 5,
            nu: DEFAULT_NU,
            gamma: None,
            train_trial_index: 2,
            sections: vec![
                SectionSpec {
                    section_id: "S1".into(),
                    baseline_exposure_m: 6.0,
                    bending_stiffness_scale: 1.0,
                },
                SectionSpec {
                    section_id: "S2".into(),
                    baseline_exposure_m: 6.0,
                    bending_stiffness_scale: 1.05,
                },
            ],
            grid: GridSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        for (name, v) in [
            ("segment_length_m", self.segment_length_m),
            ("window_s", self.window_s),
            ("hop_s", self.hop_s),
            ("f_max_hz", self.f_max_hz),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive"));
            }
        }
        if !self.segment_start_m.is_finite() {
            return bad("segment_start_m must be finite".into());
        }
        if self.train_trial_index < 1 {
            return bad("train_trial_index must be >= 1".into());
        }
        if !(self.nu > 0.0 && self.nu <= 1.0) {
            return Err(Error::InvalidNu(self.nu));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::InvalidGamma(g));
            }
        }
        if self.pls_k == Some(0) || self.pls_k_max == 0 {
            return bad("PLS component counts must be >= 1".into());
        }
        if self.pls_folds < 2 {
            return bad("pls_folds must be >= 2".into());
        }
        if self.sections.is_empty() {
            return bad("at least one section is required".into());
        }
        for (i, s) in self.sections.iter().enumerate() {
            if s.section_id.is_empty() || !(s.baseline_exposure_m > 0.0) || !(s.bending_stiffness_scale > 0.0) {
                return bad(format!("section {i} needs an id, a positive baseline and a positive stiffness scale"));
            }
            if self.sections[..i].iter().any(|o| o.section_id == s.section_id) {
                return bad(format!("duplicate section id {}", s.section_id));
            }
        }
        Ok(())
    }

    pub fn section(&self, section_id: &str) -> Option<&SectionSpec> {
        self.sections.iter().find(|s| s.section_id == section_id)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulator configurations for the whole grid: sections x lengths x waves x trials.
pub fn grid_jobs(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<SimConfig>> {
    cfg.validate()?;
    let g = &cfg.grid;
    if g.exposure_lengths_m.is_empty() || g.wave_conditions.is_empty() || g.n_trials == 0 {
        return Err(Error::InvalidConfig("grid must have lengths, wave conditions and trials".into()));
    }
    let mut jobs = Vec::new();
    for s in &cfg.sections {
        for &length in &g.exposure_lengths_m {
            for w in &g.wave_conditions {
                for t in 1..=g.n_trials {
                    let job = SimConfig {
                        section_id: s.section_id.clone(),
                        trial_index: t,
                        exposure_length_m: length,
                        wave_height_m: w.height_m,
                        wave_period_s: w.period_s,
                        bending_stiffness: g.simulation.bending_stiffness * s.bending_stiffness_scale,
                        seed: splitmix64(seed ^ splitmix64(jobs.len() as u64)),
                        ..g.simulation.clone()
                    };
                    job.validate()?;
                    jobs.push(job);
                }
            }
        }
    }
    Ok(jobs)
}

/// A trial reduced to its band-limited spectrogram over the analysis segment.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTrial {
    pub meta: TrialMetadata,
    pub spectrogram: Spectrogram,
}

pub fn prepare_trial(exec: Exec, record: &DasRecord, meta: TrialMetadata, cfg: &ExperimentConfig) -> Result<PreparedTrial> {
    meta.validate(Some(record))?;
    let segment = select_segment(record, cfg.segment_start_m, cfg.segment_length_m)?;
    let spectrogram = stft_band(exec, &segment, cfg.window_s, cfg.hop_s, Taper::Hann, cfg.f_max_hz)?;
    Ok(PreparedTrial { meta, spectrogram })
}

/// Anything carrying trial metadata.
pub trait HasMetadata {
    fn metadata(&self) -> &TrialMetadata;
}

impl HasMetadata for PreparedTrial {
    fn metadata(&self) -> &TrialMetadata {
        &self.meta
    }
}

impl HasMetadata for (DasRecord, TrialMetadata) {
    fn metadata(&self) -> &TrialMetadata {
        &self.1
    }
}

impl HasMetadata for TrialMetadata {
    fn metadata(&self) -> &TrialMetadata {
        self
    }
}

type GroupKey = (String, u64, u64, u64);

fn group_key(m: &TrialMetadata) -> GroupKey {
    (
        m.section_id.clone(),
        m.wave_height_m.to_bits(),
        m.wave_period_s.to_bits(),
        m.exposure_length_m.to_bits(),
    )
}

/// Splits each (section, wave condition, exposure length) group into the trial
/// with `trial_index == train_index` and the rest. Input order is kept within
/// each output.
pub fn split_trials<T: HasMetadata>(trials: Vec<T>, train_index: u32) -> Result<(Vec<T>, Vec<T>)> {
    let mut groups: BTreeMap<GroupKey, (usize, bool)> = BTreeMap::new();
    for t in &trials {
        let m = t.metadata();
        let e = groups.entry(group_key(m)).or_default();
        e.0 += 1;
        e.1 |= m.trial_index == train_index;
    }
    if let Some(((section, h, p, l), _)) = groups.iter().find(|(_, (n, has))| *n < 2 || !has) {
        return Err(Error::MissingTrainingTrial(format!(
            "section {section}, H = {} m, T = {} s, L = {} m",
            f64::from_bits(*h),
            f64::from_bits(*p),
            f64::from_bits(*l)
        )));
    }
    Ok(trials.into_iter().partition(|t| t.metadata().trial_index == train_index))
}

fn condition_order(a: &TrialMetadata, b: &TrialMetadata) -> Ordering {
    a.wave_height_m
        .total_cmp(&b.wave_height_m)
        .then(a.wave_period_s.total_cmp(&b.wave_period_s))
        .then(a.section_id.cmp(&b.section_id))
        .then(a.exposure_length_m.total_cmp(&b.exposure_length_m))
        .then(a.trial_id.cmp(&b.trial_id))
}

/// Fits the shared PLS regression from spectral features to exposure length.
///
/// Trials are ordered by wave condition, then section and length, and
/// cross-validation folds take contiguous runs of whole trials, so each fold
/// spans the range of lengths.
pub fn train_feature_extractor(train: &[PreparedTrial], cfg: &ExperimentConfig) -> Result<PlsModel> {
    let mut ordered: Vec<&PreparedTrial> = train.iter().collect();
    ordered.sort_by(|a, b| condition_order(&a.meta, &b.meta));
    let fm = build_feature_matrix(ordered.iter().map(|t| (&t.spectrogram, &t.meta)))?;
    let first = fm.y[0];
    if fm.y.iter().all(|&v| v == first) {
        return Err(Error::DegenerateTarget);
    }
    let k = match cfg.pls_k {
        Some(k) => k,
        None => {
            // whole trials per fold: overlapping windows of one trial never straddle a split
            let m = ordered.len();
            let n_folds = cfg.pls_folds.min(m);
            let fold_of: Vec<usize> = ordered
                .iter()
                .enumerate()
                .flat_map(|(j, t)| std::iter::repeat_n(j * n_folds / m, t.spectrogram.n_frames()))
                .collect();
            let k = select_components_by_fold(&fm.x, &fm.y, cfg.pls_k_max, &fold_of)?;
            log::info!("cross-validation selected {k} PLS components");
            k
        }
    };
    fit_pls(&fm.x, &fm.y, k)
}

/// Stable fingerprint of a PLS model, stored in each section model.
pub fn pls_fingerprint(pls: &PlsModel) -> Result<String> {
    let digest = Sha256::digest(pls.to_json()?.as_bytes());
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(format!("sha256:{hex}"))
}

fn latent_rows(pls: &PlsModel, trials: &[&PreparedTrial]) -> Result<Array2<f64>> {
    let fm = build_feature_matrix(trials.iter().map(|t| (&t.spectrogram, &t.meta)))?;
    pls.transform(&fm.x)
}

/// Trains the detector of one section on the union of its baseline windows.
pub fn train_section(section_trials: &[&PreparedTrial], pls: &PlsModel, cfg: &ExperimentConfig) -> Result<SectionModel> {
    let Some(first) = section_trials.first() else {
        return Err(Error::InsufficientData("no baseline trials for section".into()));
    };
    let section_id = first.meta.section_id.clone();
    let baseline = first.meta.exposure_length_m;
    for t in section_trials {
        if t.meta.section_id != section_id {
            return Err(Error::WrongSection {
                expected: section_id,
                found: t.meta.section_id.clone(),
                trial_id: t.meta.trial_id.clone(),
            });
        }
        if (t.meta.exposure_length_m - baseline).abs() > LENGTH_TOLERANCE_M {
            return Err(Error::InconsistentBaseline(format!(
                "section {section_id} mixes {baseline} m and {} m",
                t.meta.exposure_length_m
            )));
        }
    }
    let latent = latent_rows(pls, section_trials)?;
    let scaler = fit_scaler(&latent)?;
    let z = apply_scaler(&scaler, &latent)?;
    let gamma = cfg.gamma.unwrap_or_else(|| default_gamma(&z));
    let ocsvm = fit_ocsvm(&z, cfg.nu, gamma)?;
    Ok(SectionModel {
        section_id,
        baseline_exposure_m: baseline,
        scaler,
        ocsvm,
        pls_ref: pls_fingerprint(pls)?,
    })
}

/// Signed exposure-length change; positive means the span grew.
pub fn delta_l(l0: f64, le: f64) -> f64 {
    le - l0
}

/// Scores every window of the evaluation trials with one section's detector.
pub fn score_trials(
    exec: Exec,
    model: &SectionModel,
    pls: &PlsModel,
    eval_trials: &[&PreparedTrial],
) -> Result<AnomalyReport> {
    if let Some(t) = eval_trials.iter().find(|t| t.meta.section_id != model.section_id) {
        return Err(Error::WrongSection {
            expected: model.section_id.clone(),
            found: t.meta.section_id.clone(),
            trial_id: t.meta.trial_id.clone(),
        });
    }
    if eval_trials.is_empty() {
        return Ok(AnomalyReport::default());
    }
    if model.pls_ref != pls_fingerprint(pls)? {
        return Err(Error::InvalidConfig(format!(
            "section {} was trained against a different PLS model",
            model.section_id
        )));
    }
    let per_trial = exec.try_map_range(eval_trials.len(), |i| {
        let t = eval_trials[i];
        let x = spectrogram_rows(&t.spectrogram);
        let latent = pls.transform(&x)?;
        let scores = model.score_latent(Exec::Sequential, &latent)?;
        let estimates = pls.predict(&x)?;
        let dl = delta_l(model.baseline_exposure_m, t.meta.exposure_length_m);
        Ok::<_, Error>(
            scores
                .iter()
                .zip(estimates.iter())
                .enumerate()
                .map(|(w, (&s, &e))| ReportRow {
                    trial_id: t.meta.trial_id.clone(),
                    section_id: t.meta.section_id.clone(),
                    window_index: w,
                    anomaly_score: s,
                    label: Label::from_score(s),
                    delta_l_m: dl,
                    exposure_length_m: t.meta.exposure_length_m,
                    estimated_exposure_m: e,
                })
                .collect::<Vec<_>>(),
        )
    })?;
    Ok(AnomalyReport {
        rows: per_trial.into_iter().flatten().collect(),
    })
}

/// Everything produced by training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModels {
    pub pls: PlsModel,
    pub sections: Vec<SectionModel>,
}

/// Trains the shared extractor and one detector per configured section.
pub fn train_all(train: &[PreparedTrial], cfg: &ExperimentConfig) -> Result<TrainedModels> {
    cfg.validate()?;
    let pls = train_feature_extractor(train, cfg)?;
    let sections = cfg
        .sections
        .iter()
        .map(|spec| {
            let mut baseline: Vec<&PreparedTrial> = train
                .iter()
                .filter(|t| {
                    t.meta.section_id == spec.section_id
                        && (t.meta.exposure_length_m - spec.baseline_exposure_m).abs() <= LENGTH_TOLERANCE_M
                })
                .collect();
            baseline.sort_by(|a, b| condition_order(&a.meta, &b.meta));
            if baseline.is_empty() {
                return Err(Error::InsufficientData(format!(
                    "no training trial of section {} at {} m",
                    spec.section_id, spec.baseline_exposure_m
                )));
            }
            train_section(&baseline, &pls, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainedModels { pls, sections })
}

/// Scores evaluation trials section by section, in configuration order.
/// Trials of sections without a model are rejected.
pub fn score_all(exec: Exec, models: &TrainedModels, eval: &[PreparedTrial]) -> Result<AnomalyReport> {
    if let Some(t) = eval
        .iter()
        .find(|t| !models.sections.iter().any(|m| m.section_id == t.meta.section_id))
    {
        return Err(Error::InvalidConfig(format!(
            "no model for section {} (trial {})",
            t.meta.section_id, t.meta.trial_id
        )));
    }
    let mut report = AnomalyReport::default();
    for model in &models.sections {
        let mut trials: Vec<&PreparedTrial> = eval.iter().filter(|t| t.meta.section_id == model.section_id).collect();
        trials.sort_by(|a, b| a.meta.trial_id.cmp(&b.meta.trial_id));
        report.extend(score_trials(exec, model, &models.pls, &trials)?);
    }
    Ok(report)
}

/// A metric that may be undefined, serialized as a number or `"undefined"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Metric {
    Value(f64),
    Undefined,
}

impl Metric {
    pub fn value(self) -> Option<f64> {
        match self {
            Metric::Value(v) => Some(v),
            Metric::Undefined => None,
        }
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Metric::Value(v) => s.serialize_f64(*v),
            Metric::Undefined => s.serialize_str("undefined"),
        }
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Metric::Value(v)),
            Raw::Text(t) if t == "undefined" => Ok(Metric::Undefined),
            Raw::Text(t) => Err(serde::de::Error::custom(format!("unexpected metric value {t:?}"))),
        }
    }
}

fn metric(r: Result<f64>) -> Result<Metric> {
    match r {
        Ok(v) => Ok(Metric::Value(v)),
        Err(Error::UndefinedCorrelation) => Ok(Metric::Undefined),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    /// Pearson r between |delta L| and the anomaly score.
    pub abs_delta_l_vs_score: Metric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelTest {
    pub delta_l_m: f64,
    pub n_baseline: usize,
    pub n_level: usize,
    pub u_statistic: f64,
    pub p_value: f64,
    pub method: TestMethod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolmResult {
    pub delta_l_m: f64,
    pub p_adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectSize {
    pub delta_l_m: f64,
    /// Positive when baseline windows score higher than the level's windows.
    pub cliffs_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub pearson_r: Metric,
    pub mae_m: f64,
}

/// Evaluation of an anomaly report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub n_windows: usize,
    pub correlation: CorrelationResult,
    pub mann_whitney: Vec<LevelTest>,
    pub holm: Vec<HolmResult>,
    pub cliffs_delta: Vec<EffectSize>,
    pub classification: BinaryMetrics,
    pub regression: RegressionResult,
}

fn is_baseline(dl: f64) -> bool {
    dl.abs() <= LENGTH_TOLERANCE_M
}

/// Computes the evaluation protocol over per-window scores pooled across trials.
pub fn evaluate(report: &AnomalyReport) -> Result<Evaluation> {
    let rows = &report.rows;
    if rows.is_empty() {
        return Err(Error::EmptySample);
    }
    let scores: Vec<f64> = rows.iter().map(|r| r.anomaly_score).collect();
    let abs_dl: Vec<f64> = rows.iter().map(|r| r.delta_l_m.abs()).collect();
    let correlation = CorrelationResult {
        abs_delta_l_vs_score: metric(pearson_r(&abs_dl, &scores))?,
    };

    let baseline: Vec<f64> = rows
        .iter()
        .filter(|r| is_baseline(r.delta_l_m))
        .map(|r| r.anomaly_score)
        .collect();
    let mut levels: Vec<f64> = rows
        .iter()
        .map(|r| r.delta_l_m)
        .filter(|d| !is_baseline(*d))
        .collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() <= LENGTH_TOLERANCE_M);

    let mut mann_whitney = Vec::new();
    let mut effects = Vec::new();
    if !baseline.is_empty() {
        for &level in &levels {
            let sample: Vec<f64> = rows
                .iter()
                .filter(|r| (r.delta_l_m - level).abs() <= LENGTH_TOLERANCE_M)
                .map(|r| r.anomaly_score)
                .collect();
            let test = mann_whitney_u(&baseline, &sample)?;
            mann_whitney.push(LevelTest {
                delta_l_m: level,
                n_baseline: baseline.len(),
                n_level: sample.len(),
                u_statistic: test.statistic,
                p_value: test.p_value,
                method: test.method,
            });
            effects.push(EffectSize {
                delta_l_m: level,
                cliffs_delta: cliffs_delta(&baseline, &sample)?,
            });
        }
    }
    let adjusted = holm_correct(&mann_whitney.iter().map(|t| t.p_value).collect::<Vec<_>>());
    let holm = mann_whitney
        .iter()
        .zip(adjusted)
        .map(|(t, p)| HolmResult {
            delta_l_m: t.delta_l_m,
            p_adjusted: p,
        })
        .collect();

    let predicted: Vec<Label> = rows.iter().map(|r| Label::from_score(r.anomaly_score)).collect();
    let truth: Vec<Label> = rows
        .iter()
        .map(|r| {
            if is_baseline(r.delta_l_m) {
                Label::Normal
            } else {
                Label::Anomalous
            }
        })
        .collect();
    let classification = binary_metrics(&predicted, &truth)?;

    let true_len: Vec<f64> = rows.iter().map(|r| r.exposure_length_m).collect();
    let est_len: Vec<f64> = rows.iter().map(|r| r.estimated_exposure_m).collect();
    let regression = RegressionResult {
        pearson_r: metric(pearson_r(&true_len, &est_len))?,
        mae_m: mae(&true_len, &est_len)?,
    };

    Ok(Evaluation {
        n_windows: rows.len(),
        correlation,
        mann_whitney,
        holm,
        cliffs_delta: effects,
        classification,
        regression,
    })
}

/// Simulates the configured grid in memory and returns prepared trials,
/// dropping each raw record as soon as its spectrogram is computed.
pub fn simulate_prepared(exec: Exec, cfg: &ExperimentConfig, seed: u64) -> Result<Vec<PreparedTrial>> {
    let jobs = grid_jobs(cfg, seed)?;
    exec.try_map_range(jobs.len(), |i| {
        let (record, meta) = crate::simulator::simulate_trial_with(Exec::Sequential, &jobs[i])?;
        prepare_trial(Exec::Sequential, &record, meta, cfg)
    })
}
