use freespan_core::dasio::DasRecord;
use freespan_core::preprocess::{stft_band, Spectrogram, Taper};
use freespan_core::simulator::{natural_frequencies, simulate_trial, SimConfig};
use freespan_core::Exec;
use ndarray::s;

/// Channel closest to the middle of the span.
fn mid_span_channel(cfg: &SimConfig) -> usize {
    let mid = cfg.span_start_m + 0.5 * cfg.exposure_length_m;
    ((mid - cfg.first_channel_position) / cfg.channel_spacing).round() as usize
}

fn mean_spectrum(rec: &DasRecord, channel: usize, f_max: f64) -> (Spectrogram, Vec<f64>) {
    let one = rec.samples.slice(s![.., channel..channel + 1]).to_owned();
    let single = DasRecord::new(one, rec.fs, rec.channel_spacing, rec.channel_position(channel)).unwrap();
    let spec = stft_band(Exec::Parallel, &single, 50.0, 5.0, Taper::Hann, f_max).unwrap();
    let mean = (0..spec.n_bins())
        .map(|j| (0..spec.n_frames()).map(|f| spec.magnitudes[[f, j, 0]]).sum::<f64>() / spec.n_frames() as f64)
        .collect();
    (spec, mean)
}

fn bin_of(spec: &Spectrogram, f: f64) -> i64 {
    (f / spec.bin_width_hz).round() as i64 - spec.first_bin as i64
}

#[test]
fn default_record_shape() {
    let (rec, meta) = simulate_trial(&SimConfig::default()).unwrap();
    assert_eq!(rec.samples.dim(), (240_000, 40));
    assert_eq!(meta.duration_s, 120.0);
}

#[test]
fn mid_span_peaks_at_wave_and_fundamental() {
    let cfg = SimConfig {
        seed: 4,
        ..SimConfig::default()
    };
    let (rec, _) = simulate_trial(&cfg).unwrap();
    let (spec, mean) = mean_spectrum(&rec, mid_span_channel(&cfg), 4.0);
    let f1 = natural_frequencies(cfg.exposure_length_m, cfg.bending_stiffness, cfg.linear_mass, 1)[0];
    let fw = 1.0 / cfg.wave_period_s;

    // the two largest local maxima of the band
    let mut peaks: Vec<usize> = (1..mean.len() - 1)
        .filter(|&j| mean[j] > mean[j - 1] && mean[j] >= mean[j + 1])
        .collect();
    peaks.sort_by(|&a, &b| mean[b].total_cmp(&mean[a]));
    let mut top: Vec<i64> = peaks[..2].iter().map(|&j| j as i64).collect();
    top.sort_unstable();
    let mut expected = [bin_of(&spec, fw), bin_of(&spec, f1)];
    expected.sort_unstable();
    for (got, want) in top.iter().zip(expected) {
        assert!((got - want).abs() <= 1, "peak bin {got}, expected {want}");
    }
}

#[test]
fn resonant_peak_falls_with_length() {
    let mut last = f64::INFINITY;
    for length in [2.0, 4.0, 6.0, 8.0, 10.0] {
        let cfg = SimConfig {
            exposure_length_m: length,
            wave_period_s: 2.5,
            seed: 8,
            ..SimConfig::default()
        };
        let (rec, _) = simulate_trial(&cfg).unwrap();
        let (spec, mean) = mean_spectrum(&rec, mid_span_channel(&cfg), 20.0);
        let fw = 1.0 / cfg.wave_period_s;
        let peak = (0..mean.len())
            .filter(|&j| (spec.frequency(j) - fw).abs() > 0.1)
            .max_by(|&a, &b| mean[a].total_cmp(&mean[b]))
            .unwrap();
        let f = spec.frequency(peak);
        let f1 = natural_frequencies(length, cfg.bending_stiffness, cfg.linear_mass, 1)[0];
        assert!((f - f1).abs() <= spec.bin_width_hz, "L = {length}: peak {f} Hz, f1 {f1} Hz");
        assert!(f < last, "L = {length}: {f} Hz is not below {last} Hz");
        last = f;
    }
}

#[test]
fn span_channels_dominate() {
    let cfg = SimConfig {
        seed: 12,
        ..SimConfig::default()
    };
    let (rec, _) = simulate_trial(&cfg).unwrap();
    let (mut inside, mut outside) = (Vec::new(), Vec::new());
    for c in 0..rec.n_channels() {
        let x = rec.channel_position(c) - cfg.span_start_m;
        let col = rec.samples.column(c);
        let rms = (col.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
        if (0.0..=cfg.exposure_length_m).contains(&x) {
            inside.push(rms);
        } else {
            outside.push(rms);
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let db = 20.0 * (mean(&inside) / mean(&outside)).log10();
    assert!(db >= 6.0, "{db} dB");
}

#[test]
fn identical_configs_give_identical_records() {
    let cfg = SimConfig {
        duration_s: 20.0,
        seed: 77,
        ..SimConfig::default()
    };
    let a = simulate_trial(&cfg).unwrap();
    let b = simulate_trial(&cfg).unwrap();
    assert_eq!(a, b);
}
