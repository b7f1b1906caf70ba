use super::*;
use crate::features::{band_powers, pleth_features, segment_features};
use crate::model::{validate_recording, Segment};
use crate::preprocess::{preprocess_recording, segment, PreprocessConfig};

fn no_ica() -> PreprocessConfig {
    let mut cfg = PreprocessConfig::default();
    cfg.ica.enabled = false;
    cfg
}

fn segments_of(data: &SynthDataset, cfg: &PreprocessConfig) -> Vec<Segment> {
    data.set
        .recordings
        .iter()
        .flat_map(|r| segment(&preprocess_recording(r, cfg).unwrap(), cfg).unwrap())
        .collect()
}

#[test]
fn oracle_identities() {
    let white = OracleComponent::White { variance: 1.0 };
    assert!((oracle_band_power(&white, Band::Alpha) - 6.0 / 129.0).abs() < 1e-15);
    let tone = OracleComponent::Sinusoid {
        frequency_hz: 10.0,
        amplitude: 3.0,
    };
    assert_eq!(oracle_band_power(&tone, Band::Alpha), 4.5);
    assert_eq!(oracle_band_power(&tone, Band::Beta), 0.0);
    let sum = OracleComponent::Sum(vec![white.clone(), tone.clone()]);
    for b in Band::ALL {
        let parts = oracle_band_power(&white, b) + oracle_band_power(&tone, b);
        assert!((oracle_band_power(&sum, b) - parts).abs() < 1e-15);
    }
}

#[test]
fn default_layout_gives_28_segments_and_valid_recordings() {
    let layout = SynthLayout::default();
    assert_eq!(layout.segments_per_subject(), 28);
    let data = generate_dataset(1, &layout, &EffectSpec::default()).unwrap();
    let rec = &data.set.recordings[0];
    assert!(validate_recording(rec).is_empty(), "{:?}", validate_recording(rec));
    let stimulus_s: f64 = rec
        .stimuli()
        .map(|m| m.duration() - 2.0 * layout.trim_s)
        .sum();
    assert!((stimulus_s - 280.0).abs() < 1e-9);
    let segs = segments_of(&data, &no_ica());
    assert_eq!(segs.len(), 28);
    assert_eq!(data.truth.subjects[0].segments.len(), 28);
    assert_eq!(data.set.ratings.len(), 8);
    for s in &segs {
        assert!(data.truth.segment(&s.reference().to_string()).is_some());
    }
}

#[test]
fn generation_is_deterministic() {
    let layout = SynthLayout {
        stimuli: vec![StimulusSlot {
            content: Content::Sky,
            duration_s: 10.0,
        }],
        ..SynthLayout::default()
    };
    let effect = EffectSpec::default().with_seed(9);
    let a = generate_dataset(2, &layout, &effect).unwrap();
    let b = generate_dataset_with(2, &layout, &effect, Execution::Sequential).unwrap();
    assert_eq!(a.set.recordings, b.set.recordings);
    assert_eq!(a.set.ratings, b.set.ratings);
    assert_eq!(a.truth, b.truth);
    let c = generate_dataset(2, &layout, &effect.with_seed(10)).unwrap();
    assert_ne!(a.set.recordings[0].samples[0], c.set.recordings[0].samples[0]);
}

#[test]
fn infeasible_specs_are_rejected() {
    let layout = SynthLayout {
        band_density: [0.1, -0.2, 0.0, 0.0],
        ..SynthLayout::default()
    };
    assert!(generate_dataset(1, &layout, &EffectSpec::default()).is_err());
    let effect = EffectSpec {
        electrodes: vec!["X9".into()],
        ..EffectSpec::default()
    };
    assert!(generate_dataset(1, &SynthLayout::default(), &effect).is_err());
    let effect = EffectSpec {
        power_ratio_db: f64::INFINITY,
        ..EffectSpec::default()
    };
    assert!(generate_dataset(1, &SynthLayout::default(), &effect).is_err());
}

#[test]
fn heart_rate_is_recoverable_across_range() {
    for bpm in [50.0, 65.0, 80.0, 100.0, 120.0] {
        for start in [0.05, 0.37] {
            let beats: Vec<f64> = (0..20).map(|k| start - 1.0 + k as f64 * 60.0 / bpm).collect();
            let x = pleth_signal(&beats, 256.0, 2560);
            let f = pleth_features(&x, 256.0).unwrap();
            assert!((f[0] - bpm).abs() <= 1.0, "{bpm}: {f:?}");
        }
    }
}

#[test]
fn measured_band_powers_match_oracle() {
    let layout = SynthLayout {
        blink_amplitude: 0.0,
        with_eog: false,
        ..SynthLayout::default()
    };
    let effect = EffectSpec::default().with_seed(21);
    let data = generate_dataset(1, &layout, &effect).unwrap();
    let segs = segments_of(&data, &no_ica());
    let measured_mean = |class: DynamicRange, electrode: &str| -> [f64; 4] {
        let of_class: Vec<&Segment> = segs.iter().filter(|s| s.labels.dynamic_range == class).collect();
        assert_eq!(of_class.len(), 14);
        let mut m = [0.0; 4];
        for s in &of_class {
            let i = s.channel_index(electrode).unwrap();
            for (acc, v) in m.iter_mut().zip(band_powers(&s.samples[i], 256.0).unwrap()) {
                *acc += v / of_class.len() as f64;
            }
        }
        m
    };
    for class in [DynamicRange::Ldr, DynamicRange::Tmhdr] {
        // Class-conditional power averaged over segments and electrodes.
        let mut ratio = [0.0; 4];
        for e in crate::model::EEG_ELECTRODES {
            let m = measured_mean(class, e);
            for (j, b) in Band::ALL.iter().enumerate() {
                let expected = expected_band_power(&layout, &effect, "s01", e, Some(class), *b, true);
                ratio[j] += m[j] / expected / 31.0;
            }
        }
        for (b, r) in Band::ALL.iter().zip(ratio) {
            assert!((r - 1.0).abs() < 0.10, "{b:?} {class:?}: ratio {r}");
        }
        for e in DEFAULT_EFFECT_ELECTRODES {
            let m = measured_mean(class, e)[3];
            let expected = expected_band_power(&layout, &effect, "s01", e, Some(class), Band::Gamma, true);
            assert!((m / expected - 1.0).abs() < 0.10, "{e} gamma {class:?}: {m} vs {expected}");
        }
    }
}

#[test]
fn peripheral_features_match_ground_truth() {
    let layout = SynthLayout::default();
    let data = generate_dataset(1, &layout, &EffectSpec::default().with_seed(5)).unwrap();
    let segs = segments_of(&data, &no_ica());
    // Absolute floors for quantities whose expectation can be near zero.
    let floor = |name: &str| match name {
        "GSR_derM" => 2e-3,
        "Resp_derM" => 2e-3,
        "Temp_derM" => 2e-5,
        "Plet_HRStd" | "Plet_HRVM" | "Plet_HRVStd" => 0.3,
        _ => 0.0,
    };
    for s in &segs {
        let f = segment_features(s).unwrap();
        let p = f.peripheral.unwrap();
        let truth = data.truth.segment(&s.reference().to_string()).unwrap();
        for (name, v) in p.entries() {
            let t = truth.peripheral[name];
            let tol = 0.02 * t.abs() + floor(name);
            assert!((v - t).abs() <= tol, "{} {name}: {v} vs {t}", s.reference());
        }
    }
}

#[test]
fn ocular_mixture_is_correlated_with_eog() {
    let m = ocular_mixture(1, 4096);
    assert_eq!(m.eeg.len(), 4);
    let r = crate::stats::pearson(&m.eeg[0], &m.eog[0]).unwrap();
    assert!(r.abs() > 0.6, "{r}");
}



