//! From raw records to the frequency x distance feature matrix.
//!
//! The chain is `select_segment` -> `stft_frames` -> `band_limit` ->
//! `build_feature_matrix`. [`stft_band`] fuses the middle two steps so long
//! trials never materialize their full one-sided spectrum.

use std::fmt::Write as _;
use std::ops::Range;

use ndarray::{s, Array1, Array2, Array3};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dasio::{DasRecord, TrialMetadata};
use crate::error::{Error, Result};
use crate::linalg::column_moments;
use crate::par::Exec;

/// Floor applied to column standard deviations.
pub const STD_FLOOR: f64 = 1e-12;

/// Returns the channels of `record` whose positions fall in `[start_m, start_m + length_m)`.
pub fn select_segment(record: &DasRecord, start_m: f64, length_m: f64) -> Result<DasRecord> {
    if !(length_m > 0.0) || !start_m.is_finite() || !length_m.is_finite() {
        return Err(Error::SegmentOutsideRecord);
    }
    let tol = 1e-9 * record.channel_spacing;
    let end_m = start_m + length_m;
    let channels: Vec<usize> = (0..record.n_channels())
        .filter(|&c| {
            let x = record.channel_position(c);
            x >= start_m - tol && x < end_m - tol
        })
        .collect();
    let (Some(&first), Some(&last)) = (channels.first(), channels.last()) else {
        return Err(Error::SegmentOutsideRecord);
    };
    let samples = record.samples.slice(s![.., first..=last]).to_owned();
    Ok(DasRecord {
        samples,
        fs: record.fs,
        channel_spacing: record.channel_spacing,
        first_channel_position: record.channel_position(first),
    })
}

/// Analysis window applied to each frame before the DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Taper {
    #[default]
    Hann,
    Rectangular,
}

impl Taper {
    /// Periodic window coefficients of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Taper::Rectangular => vec![1.0; n],
            Taper::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

/// Magnitude STFT of every channel of a record.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    /// `n_frames x n_bins x n_channels`, unnormalized DFT magnitudes.
    pub magnitudes: Array3<f64>,
    pub bin_width_hz: f64,
    /// DFT index of the first stored bin.
    pub first_bin: usize,
    pub window_len: usize,
    pub frame_times_s: Vec<f64>,
    pub channel_positions_m: Vec<f64>,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.magnitudes.shape()[0]
    }

    pub fn n_bins(&self) -> usize {
        self.magnitudes.shape()[1]
    }

    pub fn n_channels(&self) -> usize {
        self.magnitudes.shape()[2]
    }

    /// Frequency in Hz of the stored bin `j`.
    pub fn frequency(&self, j: usize) -> f64 {
        (self.first_bin + j) as f64 * self.bin_width_hz
    }
}

fn frame_geometry(record: &DasRecord, window_s: f64, hop_s: f64) -> Result<(usize, usize, usize)> {
    if !(hop_s > 0.0) || !(window_s > 0.0) {
        return Err(Error::InvalidWindow(format!("window {window_s} s, hop {hop_s} s")));
    }
    let win = (window_s * record.fs).round() as usize;
    let hop = (hop_s * record.fs).round() as usize;
    if win < 2 {
        return Err(Error::InvalidWindow(format!("window of {win} samples")));
    }
    if hop == 0 {
        return Err(Error::InvalidWindow("hop shorter than one sample".into()));
    }
    let n = record.n_samples();
    if n < win {
        return Err(Error::RecordTooShort { samples: n, window: win });
    }
    Ok((win, hop, (n - win) / hop + 1))
}

/// Full one-sided magnitude STFT (bins `0..=win/2`).
pub fn stft_frames(record: &DasRecord, window_s: f64, hop_s: f64, taper: Taper) -> Result<Spectrogram> {
    stft_frames_with(Exec::default(), record, window_s, hop_s, taper)
}

pub fn stft_frames_with(
    exec: Exec,
    record: &DasRecord,
    window_s: f64,
    hop_s: f64,
    taper: Taper,
) -> Result<Spectrogram> {
    let (win, _, _) = frame_geometry(record, window_s, hop_s)?;
    stft_bins(exec, record, window_s, hop_s, taper, 0..win / 2 + 1)
}

/// STFT restricted to the bins [`band_limit`] would keep for `f_max`.
pub fn stft_band(
    exec: Exec,
    record: &DasRecord,
    window_s: f64,
    hop_s: f64,
    taper: Taper,
    f_max: f64,
) -> Result<Spectrogram> {
    let (win, _, _) = frame_geometry(record, window_s, hop_s)?;
    let bins = band_bins(record.fs / win as f64, win / 2 + 1, f_max)?;
    stft_bins(exec, record, window_s, hop_s, taper, bins)
}

fn stft_bins(
    exec: Exec,
    record: &DasRecord,
    window_s: f64,
    hop_s: f64,
    taper: Taper,
    bins: Range<usize>,
) -> Result<Spectrogram> {
    let (win, hop, n_frames) = frame_geometry(record, window_s, hop_s)?;
    let fft = FftPlanner::<f64>::new().plan_fft_forward(win);
    let w = taper.coefficients(win);
    let n_bins = bins.len();

    // Two real channels share one complex transform: channel a in the real
    // part, channel b in the imaginary part, separated by conjugate symmetry.
    let n_channels = record.n_channels();
    let per_pair: Vec<[Vec<f64>; 2]> = exec.map_range(n_channels.div_ceil(2), |p| {
        let a = record.samples.column(2 * p);
        let b = (2 * p + 1 < n_channels).then(|| record.samples.column(2 * p + 1));
        let mut buf = vec![Complex::new(0.0, 0.0); win];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut out_a = Vec::with_capacity(n_frames * n_bins);
        let mut out_b = Vec::with_capacity(if b.is_some() { n_frames * n_bins } else { 0 });
        for f in 0..n_frames {
            let start = f * hop;
            for (i, z) in buf.iter_mut().enumerate() {
                let im = b.as_ref().map_or(0.0, |b| b[start + i] as f64 * w[i]);
                *z = Complex::new(a[start + i] as f64 * w[i], im);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for k in bins.clone() {
                let z = buf[k];
                let zc = buf[(win - k) % win].conj();
                out_a.push(0.5 * (z + zc).norm());
                if b.is_some() {
                    out_b.push(0.5 * (z - zc).norm());
                }
            }
        }
        [out_a, out_b]
    });
    let per_channel: Vec<&Vec<f64>> = (0..n_channels).map(|c| &per_pair[c / 2][c % 2]).collect();

    let mut magnitudes = Array3::<f64>::zeros((n_frames, n_bins, record.n_channels()));
    for (c, mags) in per_channel.iter().enumerate() {
        for f in 0..n_frames {
            for b in 0..n_bins {
                magnitudes[[f, b, c]] = mags[f * n_bins + b];
            }
        }
    }
    Ok(Spectrogram {
        magnitudes,
        bin_width_hz: record.fs / win as f64,
        first_bin: bins.start,
        window_len: win,
        frame_times_s: (0..n_frames).map(|f| (f * hop) as f64 / record.fs).collect(),
        channel_positions_m: (0..record.n_channels()).map(|c| record.channel_position(c)).collect(),
    })
}

/// DFT indices `k` with `0 < k * bin_width < f_max`, clipped to `0..n_bins_total`.
fn band_bins(bin_width: f64, n_bins_total: usize, f_max: f64) -> Result<Range<usize>> {
    let keep = |k: usize| k > 0 && (k as f64) * bin_width < f_max * (1.0 - 1e-12);
    let end = (1..n_bins_total).take_while(|&k| keep(k)).last();
    match end {
        Some(last) => Ok(1..last + 1),
        None => Err(Error::EmptyBand),
    }
}

/// Keeps the bins strictly inside `(0, f_max)`; the DC bin is always dropped.
pub fn band_limit(spec: &Spectrogram, f_max: f64) -> Result<Spectrogram> {
    let total = spec.first_bin + spec.n_bins();
    let wanted = band_bins(spec.bin_width_hz, total, f_max)?;
    let lo = wanted.start.max(spec.first_bin);
    let hi = wanted.end;
    if lo >= hi {
        return Err(Error::EmptyBand);
    }
    let rel = (lo - spec.first_bin)..(hi - spec.first_bin);
    Ok(Spectrogram {
        magnitudes: spec.magnitudes.slice(s![.., rel, ..]).to_owned(),
        first_bin: lo,
        ..spec.clone()
    })
}

/// Windows x (channel, frequency) features with exposure-length targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    /// `(channel_position_m, frequency_hz)` per column, channel-major.
    pub feature_layout: Vec<(f64, f64)>,
    /// `(trial_id, window_index)` per row.
    pub window_ids: Vec<(String, usize)>,
}

impl FeatureMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    /// Debug export: header `L<pos>_F<freq>,...,y`.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (pos, freq) in &self.feature_layout {
            let _ = write!(out, "L{pos}_F{freq},");
        }
        out.push_str("y\n");
        for (row, y) in self.x.rows().into_iter().zip(self.y.iter()) {
            for v in row {
                let _ = write!(out, "{v},");
            }
            let _ = writeln!(out, "{y}");
        }
        out
    }
}

fn layout_of(spec: &Spectrogram) -> Vec<(f64, f64)> {
    let mut layout = Vec::with_capacity(spec.n_channels() * spec.n_bins());
    for &pos in &spec.channel_positions_m {
        for b in 0..spec.n_bins() {
            layout.push((pos, spec.frequency(b)));
        }
    }
    layout
}

/// Feature rows of one spectrogram, channel-major.
pub fn spectrogram_rows(spec: &Spectrogram) -> Array2<f64> {
    let (nf, nb, nc) = spec.magnitudes.dim();
    Array2::from_shape_fn((nf, nb * nc), |(f, col)| spec.magnitudes[[f, col % nb, col / nb]])
}

fn check_compatible(a: &Spectrogram, b: &Spectrogram) -> Result<()> {
    let same_positions = a.channel_positions_m.len() == b.channel_positions_m.len()
        && a
            .channel_positions_m
            .iter()
            .zip(&b.channel_positions_m)
            .all(|(x, y)| (x - y).abs() <= 1e-9 * x.abs().max(1.0));
    if a.bin_width_hz != b.bin_width_hz || a.first_bin != b.first_bin || a.n_bins() != b.n_bins() {
        return Err(Error::IncompatibleSpectrograms("frequency bins differ".into()));
    }
    if !same_positions {
        return Err(Error::IncompatibleSpectrograms("channel layouts differ".into()));
    }
    Ok(())
}

/// Stacks the frames of every spectrogram into one matrix, in input order.
pub fn build_feature_matrix<'a, I>(specs: I) -> Result<FeatureMatrix>
where
    I: IntoIterator<Item = (&'a Spectrogram, &'a TrialMetadata)>,
{
    let specs: Vec<_> = specs.into_iter().collect();
    let Some((first, _)) = specs.first() else {
        return Err(Error::InsufficientData("no spectrograms".into()));
    };
    for (s, _) in &specs[1..] {
        check_compatible(first, s)?;
    }
    let d = first.n_bins() * first.n_channels();
    let n: usize = specs.iter().map(|(s, _)| s.n_frames()).sum();
    let mut x = Array2::<f64>::zeros((n, d));
    let mut y = Array1::<f64>::zeros(n);
    let mut window_ids = Vec::with_capacity(n);
    let mut row = 0;
    for (spec, meta) in &specs {
        let rows = spectrogram_rows(spec);
        let nf = rows.nrows();
        x.slice_mut(s![row..row + nf, ..]).assign(&rows);
        y.slice_mut(s![row..row + nf]).fill(meta.exposure_length_m);
        window_ids.extend((0..nf).map(|w| (meta.trial_id.clone(), w)));
        row += nf;
    }
    Ok(FeatureMatrix {
        x,
        y,
        feature_layout: layout_of(first),
        window_ids,
    })
}

/// Column standardization state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

pub fn fit_scaler(x: &Array2<f64>) -> Result<Scaler> {
    if x.nrows() < 2 {
        return Err(Error::InsufficientData(format!(
            "scaler needs at least 2 rows, got {}",
            x.nrows()
        )));
    }
    let (means, stds) = column_moments(x);
    Ok(Scaler {
        means: means.to_vec(),
        stds: stds.iter().map(|s| s.max(STD_FLOOR)).collect(),
    })
}

pub fn apply_scaler(scaler: &Scaler, x: &Array2<f64>) -> Result<Array2<f64>> {
    if x.ncols() != scaler.means.len() {
        return Err(Error::DimensionMismatch {
            expected: scaler.means.len(),
            got: x.ncols(),
        });
    }
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - scaler.means[j]) / scaler.stds[j];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn record(n: usize, c: usize, fs: f64, f: impl Fn(usize, usize) -> f32) -> DasRecord {
        DasRecord::new(Array2::from_shape_fn((n, c), |(t, ch)| f(t, ch)), fs, 0.8, 0.0).unwrap()
    }

    #[test]
    fn twelve_metre_segment_is_fifteen_channels() {
        let rec = record(4, 40, 10.0, |_, _| 0.0);
        let seg = select_segment(&rec, 4.0, 12.0).unwrap();
        assert_eq!(seg.n_channels(), 15);
        assert!((seg.first_channel_position - 4.0).abs() < 1e-12);
    }

    #[test]
    fn zero_length_segment_is_rejected() {
        let rec = record(4, 40, 10.0, |_, _| 0.0);
        assert!(matches!(select_segment(&rec, 4.0, 0.0), Err(Error::SegmentOutsideRecord)));
        assert!(matches!(select_segment(&rec, 100.0, 12.0), Err(Error::SegmentOutsideRecord)));
    }

    #[test]
    fn full_extent_selection_is_identity() {
        let rec = record(6, 5, 10.0, |t, c| (t * 10 + c) as f32);
        let seg = select_segment(&rec, 0.0, 5.0 * 0.8).unwrap();
        assert_eq!(seg, rec);
    }

    #[test]
    fn frame_count_for_two_minute_trial() {
        // small fs keeps the test quick; frame count depends only on durations
        let rec = record(1200, 1, 10.0, |t, _| (t as f32 * 0.1).sin());
        let spec = stft_frames(&rec, 50.0, 5.0, Taper::Hann).unwrap();
        assert_eq!(spec.n_frames(), 15);
        assert_eq!(spec.frame_times_s[14], 70.0);
        assert!((spec.bin_width_hz - 0.02).abs() < 1e-15);
    }

    #[test]
    fn all_zero_record_gives_zero_magnitudes() {
        let rec = record(64, 2, 8.0, |_, _| 0.0);
        let spec = stft_frames(&rec, 2.0, 1.0, Taper::Hann).unwrap();
        assert!(spec.magnitudes.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn record_shorter_than_window() {
        let rec = record(10, 1, 10.0, |_, _| 0.0);
        assert!(matches!(
            stft_frames(&rec, 50.0, 5.0, Taper::Hann),
            Err(Error::RecordTooShort { .. })
        ));
    }

    #[test]
    fn band_limit_counts() {
        let rec = record(1000, 1, 10.0, |t, _| (t as f32).cos());
        // window 50 s at 10 Hz -> 500 samples, bin width 0.02 Hz, bins 0..=250
        let spec = stft_frames(&rec, 50.0, 5.0, Taper::Hann).unwrap();
        let b = band_limit(&spec, 4.0).unwrap();
        assert_eq!(b.n_bins(), 199);
        assert_eq!(b.first_bin, 1);
        let all = band_limit(&spec, 1e6).unwrap();
        assert_eq!(all.n_bins(), 250);
        assert!(matches!(band_limit(&spec, 0.01), Err(Error::EmptyBand)));
    }

    #[test]
    fn fused_band_matches_full_then_limit() {
        let rec = record(900, 3, 10.0, |t, c| ((t * (c + 1)) as f32 * 0.37).sin());
        let full = band_limit(&stft_frames(&rec, 50.0, 5.0, Taper::Hann).unwrap(), 4.0).unwrap();
        let fused = stft_band(Exec::Sequential, &rec, 50.0, 5.0, Taper::Hann, 4.0).unwrap();
        assert_eq!(full, fused);
    }

    #[test]
    fn sequential_and_parallel_stft_agree_bitwise() {
        let rec = record(300, 6, 10.0, |t, c| ((t + 7 * c) as f32 * 0.13).cos());
        let a = stft_frames_with(Exec::Sequential, &rec, 10.0, 3.0, Taper::Hann).unwrap();
        let b = stft_frames_with(Exec::Parallel, &rec, 10.0, 3.0, Taper::Hann).unwrap();
        assert_eq!(a, b);
    }

    fn meta(id: &str, l: f64) -> TrialMetadata {
        TrialMetadata {
            trial_id: id.into(),
            section_id: "S1".into(),
            exposure_length_m: l,
            wave_height_m: 0.15,
            wave_period_s: 1.25,
            trial_index: 1,
            duration_s: 1.0,
        }
    }

    #[test]
    fn feature_matrix_dimensions_and_order() {
        let rec = record(1200, 15, 10.0, |t, c| ((t + c) as f32 * 0.05).sin());
        let spec = stft_band(Exec::default(), &rec, 50.0, 5.0, Taper::Hann, 4.0).unwrap();
        let m1 = meta("a", 4.0);
        let m2 = meta("b", 8.0);
        let fm = build_feature_matrix([(&spec, &m1), (&spec, &m2)]).unwrap();
        assert_eq!(fm.x.ncols(), 2985);
        assert_eq!(fm.n_rows(), 30);
        assert_eq!(fm.window_ids[0], ("a".to_string(), 0));
        assert_eq!(fm.window_ids[15], ("b".to_string(), 0));
        assert_eq!(fm.y[14], 4.0);
        assert_eq!(fm.y[15], 8.0);
        // channel-major: column 199 is channel 1, first retained bin
        assert_eq!(fm.feature_layout[199].1, fm.feature_layout[0].1);
        assert!(fm.feature_layout[199].0 > fm.feature_layout[0].0);
        assert_eq!(fm.x[[3, 199 + 5]], spec.magnitudes[[3, 5, 1]]);
        let mut cols = fm.feature_layout.clone();
        cols.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cols.dedup();
        assert_eq!(cols.len(), 2985);
    }

    #[test]
    fn single_frame_single_channel_row_is_the_frame() {
        let rec = record(20, 1, 10.0, |t, _| t as f32);
        let spec = stft_frames(&rec, 2.0, 1.0, Taper::Rectangular).unwrap();
        assert_eq!(spec.n_frames(), 1);
        let m = meta("a", 3.0);
        let fm = build_feature_matrix([(&spec, &m)]).unwrap();
        let frame: Vec<f64> = spec.magnitudes.slice(s![0, .., 0]).to_vec();
        assert_eq!(fm.x.row(0).to_vec(), frame);
    }

    #[test]
    fn mismatched_spectrograms() {
        let a = stft_frames(&record(100, 2, 10.0, |t, _| t as f32), 2.0, 1.0, Taper::Hann).unwrap();
        let b = stft_frames(&record(100, 3, 10.0, |t, _| t as f32), 2.0, 1.0, Taper::Hann).unwrap();
        let m = meta("a", 3.0);
        assert!(matches!(
            build_feature_matrix([(&a, &m), (&b, &m)]),
            Err(Error::IncompatibleSpectrograms(_))
        ));
    }

    #[test]
    fn csv_header_names_columns() {
        let fm = FeatureMatrix {
            x: array![[1.0, 2.0]],
            y: array![6.0],
            feature_layout: vec![(4.0, 0.02), (4.8, 0.02)],
            window_ids: vec![("a".into(), 0)],
        };
        assert_eq!(fm.to_csv(), "L4_F0.02,L4.8_F0.02,y\n1,2,6\n");
    }

    #[test]
    fn scaler_hand_example() {
        let x = array![[1.0, 7.0], [3.0, 7.0]];
        let sc = fit_scaler(&x).unwrap();
        assert_eq!(sc.means, vec![2.0, 7.0]);
        assert_eq!(sc.stds, vec![1.0, STD_FLOOR]);
        let z = apply_scaler(&sc, &x).unwrap();
        assert_eq!(z, array![[-1.0, 0.0], [1.0, 0.0]]);
    }

    #[test]
    fn scaler_is_idempotent_on_standardized_data() {
        let x = array![[-1.0, 1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]];
        let sc = fit_scaler(&x).unwrap();
        let z = apply_scaler(&sc, &x).unwrap();
        for (a, b) in z.iter().zip(x.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn scaler_needs_two_rows() {
        assert!(matches!(fit_scaler(&array![[1.0, 2.0]]), Err(Error::InsufficientData(_))));
    }
}
