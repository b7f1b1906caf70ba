//! On-disk dataset layout.
//!
//! ```text
//! <root>/<subject>/manifest.json   subject id, channel table, marker/rating file names
//! <root>/<subject>/markers.csv     start_s,end_s,kind,content,dynamic_range,stimulus_id
//! <root>/<subject>/ratings.csv     subject_id,content,dynamic_range,q1,q2,q3,comp_q1,comp_q2
//! <root>/<subject>/<channel>.f32   headerless little-endian float32 samples
//! ```
//!
//! Writing is canonical: loading a set and saving it again reproduces the
//! files byte for byte.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_recording, ChannelSpec, Content, DynamicRange, MarkerKind, Modality, RatingRecord,
    Recording, StimulusMarker, Violation,
};

pub const MANIFEST_FILE: &str = "manifest.json";
const MARKER_HEADER: [&str; 6] = ["start_s", "end_s", "kind", "content", "dynamic_range", "stimulus_id"];
const RATING_HEADER: [&str; 8] = [
    "subject_id", "content", "dynamic_range", "q1", "q2", "q3", "comp_q1", "comp_q2",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestChannel {
    pub name: String,
    pub modality: Modality,
    pub sample_rate: f64,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub subject_id: String,
    pub channels: Vec<ManifestChannel>,
    pub markers_file: String,
    #[serde(default)]
    pub ratings_file: Option<String>,
}

/// A loaded dataset: one recording per subject plus all rating rows.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhysioSet {
    pub recordings: Vec<Recording>,
    pub ratings: Vec<RatingRecord>,
}

impl PhysioSet {
    pub fn ratings_for(&self, subject_id: &str) -> impl Iterator<Item = &RatingRecord> {
        let id = subject_id.to_string();
        self.ratings.iter().filter(move |r| r.subject_id == id)
    }

    pub fn rating(
        &self,
        subject_id: &str,
        content: Content,
        dynamic_range: DynamicRange,
    ) -> Option<&RatingRecord> {
        self.ratings.iter().find(|r| {
            r.subject_id == subject_id && r.content == content && r.dynamic_range == dynamic_range
        })
    }
}

/// Subject directories under `root`, or `root` itself when it holds a manifest.
pub fn subject_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(MANIFEST_FILE).is_file() {
        return Ok(vec![root.to_path_buf()]);
    }
    if !root.is_dir() {
        return Err(Error::ManifestMissing(root.join(MANIFEST_FILE)));
    }
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::ManifestMissing(root.join(MANIFEST_FILE)));
    }
    Ok(dirs)
}

/// A subject directory parsed without invariant checks.
pub struct RawSubject {
    pub dir: PathBuf,
    pub recording: Recording,
    pub ratings: Vec<RatingRecord>,
}

pub fn read_subject(dir: &Path) -> Result<RawSubject> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(Error::ManifestMissing(manifest_path));
    }
    let manifest: Manifest = serde_json::from_slice(&fs::read(&manifest_path)?).map_err(|e| {
        Error::Format {
            file: manifest_path.clone(),
            message: e.to_string(),
        }
    })?;

    let mut channels = Vec::with_capacity(manifest.channels.len());
    let mut samples = Vec::with_capacity(manifest.channels.len());
    for ch in &manifest.channels {
        let path = dir.join(&ch.file);
        let bytes = fs::read(&path).map_err(|e| Error::Format {
            file: path.clone(),
            message: format!("cannot read channel `{}`: {e}", ch.name),
        })?;
        if bytes.len() % 4 != 0 {
            return Err(Error::Format {
                file: path,
                message: format!("length {} is not a multiple of 4 bytes", bytes.len()),
            });
        }
        samples.push(
            bytes
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect::<Vec<f32>>(),
        );
        channels.push(ChannelSpec::new(ch.name.clone(), ch.modality, ch.sample_rate));
    }

    let markers = read_markers(&dir.join(&manifest.markers_file))?;
    let ratings = match &manifest.ratings_file {
        Some(f) => read_ratings(&dir.join(f))?,
        None => Vec::new(),
    };

    Ok(RawSubject {
        dir: dir.to_path_buf(),
        recording: Recording {
            subject_id: manifest.subject_id,
            channels,
            samples,
            markers,
        },
        ratings,
    })
}

fn field_err(file: &Path, row: usize, field: &str, message: impl std::fmt::Display) -> Error {
    Error::Field {
        file: file.to_path_buf(),
        field: field.to_string(),
        message: format!("row {row}: {message}"),
    }
}

fn open_csv(path: &Path, header: &[&str]) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::Format {
        file: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let got: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(Error::Format {
            file: path.to_path_buf(),
            message: format!("expected columns {header:?}, found {got:?}"),
        });
    }
    Ok(rdr)
}

fn parse_at<T: std::str::FromStr>(path: &Path, row: usize, rec: &csv::StringRecord, col: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let raw = rec.get(col).unwrap_or("");
    raw.parse::<T>()
        .map_err(|e| field_err(path, row, name, format!("`{raw}`: {e}")))
}

pub fn read_markers(path: &Path) -> Result<Vec<StimulusMarker>> {
    let mut rdr = open_csv(path, &MARKER_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        out.push(StimulusMarker {
            start_s: parse_at(path, row, &rec, 0, "start_s")?,
            end_s: parse_at(path, row, &rec, 1, "end_s")?,
            kind: parse_at::<MarkerKind>(path, row, &rec, 2, "kind")?,
            content: parse_at::<Content>(path, row, &rec, 3, "content")?,
            dynamic_range: parse_at::<DynamicRange>(path, row, &rec, 4, "dynamic_range")?,
            stimulus_id: rec.get(5).unwrap_or("").to_string(),
        });
    }
    Ok(out)
}

pub fn read_ratings(path: &Path) -> Result<Vec<RatingRecord>> {
    let mut rdr = open_csv(path, &RATING_HEADER)?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let r = RatingRecord {
            subject_id: rec.get(0).unwrap_or("").to_string(),
            content: parse_at(path, row, &rec, 1, "content")?,
            dynamic_range: parse_at(path, row, &rec, 2, "dynamic_range")?,
            q1: parse_at(path, row, &rec, 3, "q1")?,
            q2: parse_at(path, row, &rec, 4, "q2")?,
            q3: parse_at(path, row, &rec, 5, "q3")?,
            comp_q1: parse_at(path, row, &rec, 6, "comp_q1")?,
            comp_q2: parse_at(path, row, &rec, 7, "comp_q2")?,
        };
        r.check().map_err(|(field, msg)| field_err(path, row, field, msg))?;
        out.push(r);
    }
    Ok(out)
}

/// Parse every subject without failing on invariant violations.
pub fn inspect_physioset(root: &Path) -> Result<Vec<(RawSubject, Vec<Violation>)>> {
    subject_dirs(root)?
        .iter()
        .map(|d| {
            let raw = read_subject(d)?;
            let v = validate_recording(&raw.recording);
            Ok((raw, v))
        })
        .collect()
}

/// Load and fully validate a dataset.
pub fn load_physioset(root: &Path) -> Result<PhysioSet> {
    let mut set = PhysioSet::default();
    let mut subjects = BTreeSet::new();
    for (raw, violations) in inspect_physioset(root)? {
        let rec = raw.recording;
        if !violations.is_empty() {
            let text: Vec<String> = violations.iter().map(ToString::to_string).collect();
            return Err(Error::InvalidRecording {
                subject: format!("{} ({})", rec.subject_id, raw.dir.display()),
                violations: text.join("; "),
            });
        }
        if !subjects.insert(rec.subject_id.clone()) {
            return Err(Error::Format {
                file: raw.dir.join(MANIFEST_FILE),
                message: format!("subject `{}` appears twice", rec.subject_id),
            });
        }
        let mut keys = BTreeSet::new();
        for (row, r) in raw.ratings.iter().enumerate() {
            let file = raw.dir.join("ratings.csv");
            if r.subject_id != rec.subject_id {
                return Err(field_err(
                    &file,
                    row + 1,
                    "subject_id",
                    format!("`{}` does not match manifest subject `{}`", r.subject_id, rec.subject_id),
                ));
            }
            if !keys.insert((r.content, r.dynamic_range)) {
                return Err(field_err(
                    &file,
                    row + 1,
                    "content",
                    format!("duplicate rating for {} {}", r.content.as_str(), r.dynamic_range.as_str()),
                ));
            }
        }
        set.ratings.extend(raw.ratings);
        set.recordings.push(rec);
    }
    Ok(set)
}

/// File name used for a channel; names are sanitized to stay inside the directory.
pub fn channel_file_name(name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    format!("{clean}.f32")
}

pub fn save_physioset(set: &PhysioSet, root: &Path) -> Result<()> {
    fs::create_dir_all(root)?;
    for rec in &set.recordings {
        let ratings: Vec<&RatingRecord> = set.ratings_for(&rec.subject_id).collect();
        save_subject(rec, &ratings, &root.join(&rec.subject_id))?;
    }
    Ok(())
}

pub fn save_subject(rec: &Recording, ratings: &[&RatingRecord], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        subject_id: rec.subject_id.clone(),
        channels: rec
            .channels
            .iter()
            .map(|c| ManifestChannel {
                name: c.name.clone(),
                modality: c.modality,
                sample_rate: c.sample_rate,
                file: channel_file_name(&c.name),
            })
            .collect(),
        markers_file: "markers.csv".into(),
        ratings_file: (!ratings.is_empty()).then(|| "ratings.csv".into()),
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(dir.join(MANIFEST_FILE), json)?;

    for (c, s) in manifest.channels.iter().zip(&rec.samples) {
        let mut bytes = Vec::with_capacity(s.len() * 4);
        for v in s {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(dir.join(&c.file), bytes)?;
    }

    let mut w = csv::Writer::from_path(dir.join("markers.csv"))?;
    w.write_record(MARKER_HEADER)?;
    for m in &rec.markers {
        let kind = match m.kind {
            MarkerKind::Baseline => "BASELINE",
            MarkerKind::Stimulus => "STIMULUS",
        };
        w.write_record([
            m.start_s.to_string().as_str(),
            m.end_s.to_string().as_str(),
            kind,
            m.content.as_str(),
            m.dynamic_range.as_str(),
            m.stimulus_id.as_str(),
        ])?;
    }
    w.flush()?;

    if !ratings.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("ratings.csv"))?;
        w.write_record(RATING_HEADER)?;
        for r in ratings {
            w.write_record([
                r.subject_id.clone(),
                r.content.as_str().to_string(),
                r.dynamic_range.as_str().to_string(),
                r.q1.to_string(),
                r.q2.to_string(),
                r.q3.to_string(),
                r.comp_q1.to_string(),
                r.comp_q2.to_string(),
            ])?;
        }
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> PhysioSet {
        let rate = 8.0;
        let n = 30 * 8;
        PhysioSet {
            recordings: vec![Recording {
                subject_id: "s01".into(),
                channels: vec![
                    ChannelSpec::new("GSR", Modality::Gsr, rate),
                    ChannelSpec::new("Temp", Modality::Temp, rate),
                ],
                samples: vec![
                    (0..n).map(|i| i as f32 * 0.25).collect(),
                    (0..n).map(|i| 33.0 + (i as f32).sin()).collect(),
                ],
                markers: vec![
                    StimulusMarker {
                        start_s: 0.5,
                        end_s: 10.5,
                        kind: MarkerKind::Baseline,
                        content: Content::Sky,
                        dynamic_range: DynamicRange::Tmhdr,
                        stimulus_id: "sky_TMHDR".into(),
                    },
                    StimulusMarker {
                        start_s: 10.5,
                        end_s: 29.125,
                        kind: MarkerKind::Stimulus,
                        content: Content::Sky,
                        dynamic_range: DynamicRange::Tmhdr,
                        stimulus_id: "sky_TMHDR".into(),
                    },
                ],
            }],
            ratings: vec![RatingRecord {
                subject_id: "s01".into(),
                content: Content::Sky,
                dynamic_range: DynamicRange::Tmhdr,
                q1: 7,
                q2: 6,
                q3: 8,
                comp_q1: 2,
                comp_q2: -1,
            }],
        }
    }

    #[test]
    fn write_then_read_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let set = tiny();
        save_physioset(&set, dir.path()).unwrap();
        let back = load_physioset(dir.path()).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn save_of_load_is_byte_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        save_physioset(&tiny(), a.path()).unwrap();
        save_physioset(&load_physioset(a.path()).unwrap(), b.path()).unwrap();
        for f in ["manifest.json", "markers.csv", "ratings.csv", "GSR.f32", "Temp.f32"] {
            let x = fs::read(a.path().join("s01").join(f)).unwrap();
            let y = fs::read(b.path().join("s01").join(f)).unwrap();
            assert_eq!(x, y, "{f}");
        }
    }

    #[test]
    fn missing_channel_file_is_named() {
        let dir = tempfile::tempdir().unwrap();
        save_physioset(&tiny(), dir.path()).unwrap();
        fs::remove_file(dir.path().join("s01/Temp.f32")).unwrap();
        let err = load_physioset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("Temp.f32"), "{err}");
    }

    #[test]
    fn empty_directory_reports_missing_manifest() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_physioset(dir.path()),
            Err(Error::ManifestMissing(_))
        ));
    }

    #[test]
    fn out_of_range_rating_names_field() {
        let dir = tempfile::tempdir().unwrap();
        save_physioset(&tiny(), dir.path()).unwrap();
        let p = dir.path().join("s01/ratings.csv");
        let text = fs::read_to_string(&p).unwrap().replace(",7,6,8,", ",7,6,12,");
        fs::write(&p, text).unwrap();
        match load_physioset(dir.path()) {
            Err(Error::Field { field, file, .. }) => {
                assert_eq!(field, "q3");
                assert!(file.ends_with("ratings.csv"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_channel_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let mut set = tiny();
        set.recordings[0].samples[0].truncate(100);
        save_physioset(&set, dir.path()).unwrap();
        let err = load_physioset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("CHANNEL_LENGTH"), "{err}");
    }

    #[test]
    fn odd_byte_length_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        save_physioset(&tiny(), dir.path()).unwrap();
        fs::write(dir.path().join("s01/GSR.f32"), [0u8; 7]).unwrap();
        let err = load_physioset(dir.path()).unwrap_err().to_string();
        assert!(err.contains("GSR.f32") && err.contains("multiple of 4"), "{err}");
    }
}
