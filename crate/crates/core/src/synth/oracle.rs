//! Analytic band powers of generated signals.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{eeg_density, EffectSpec, SynthLayout};
use crate::model::{eeg_feature_name, Band, DynamicRange, EEG_ELECTRODES, REFERENCE_CHANNEL};

/// Number of 1-Hz bins from 0 Hz to Nyquist at 256 Hz.
const GRID_BINS: f64 = 129.0;

/// A signal component whose band power is known in closed form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum OracleComponent {
    /// White noise with this variance spread uniformly over the 1-Hz grid.
    White { variance: f64 },
    Sinusoid { frequency_hz: f64, amplitude: f64 },
    /// Density per 1-Hz bin, index = frequency in Hz.
    Binned(Vec<f64>),
    Sum(Vec<OracleComponent>),
}

fn bins_in(band: Band) -> std::ops::RangeInclusive<i64> {
    let (lo, hi) = band.range();
    (lo.ceil() as i64)..=(hi.floor() as i64)
}

/// Expected power of `component` in `band` on the 1-Hz grid.
pub fn oracle_band_power(component: &OracleComponent, band: Band) -> f64 {
    let (lo, hi) = band.range();
    match component {
        OracleComponent::White { variance } => {
            variance * bins_in(band).count() as f64 / GRID_BINS
        }
        OracleComponent::Sinusoid {
            frequency_hz,
            amplitude,
        } => {
            if *frequency_hz >= lo && *frequency_hz <= hi {
                amplitude * amplitude / 2.0
            } else {
                0.0
            }
        }
        OracleComponent::Binned(levels) => bins_in(band)
            .filter_map(|k| levels.get(k as usize))
            .sum(),
        OracleComponent::Sum(parts) => parts.iter().map(|p| oracle_band_power(p, band)).sum(),
    }
}

/// Expected band power of one generated EEG electrode in a period of the
/// given class (`None` for baseline). With `rereferenced`, the independent
/// Cz contribution is included, as after subtracting Cz.
pub fn expected_band_power(
    layout: &SynthLayout,
    effect: &EffectSpec,
    subject_id: &str,
    electrode: &str,
    class: Option<DynamicRange>,
    band: Band,
    rereferenced: bool,
) -> f64 {
    let own: f64 = bins_in(band)
        .map(|k| eeg_density(layout, effect, subject_id, electrode, class, k))
        .sum();
    if rereferenced && electrode != REFERENCE_CHANNEL {
        own + expected_band_power(layout, effect, subject_id, REFERENCE_CHANNEL, class, band, false)
    } else {
        own
    }
}

/// Expected baseline-corrected EEG features of a stimulus of `class`.
pub fn expected_eeg_features(
    layout: &SynthLayout,
    effect: &EffectSpec,
    subject_id: &str,
    class: DynamicRange,
) -> BTreeMap<String, f64> {
    let mut out = BTreeMap::new();
    for e in EEG_ELECTRODES {
        for b in Band::ALL {
            let stim = expected_band_power(layout, effect, subject_id, e, Some(class), b, true);
            let base = expected_band_power(layout, effect, subject_id, e, None, b, true);
            out.insert(eeg_feature_name(e, b), stim - base);
        }
    }
    out
}
