//! Statistics of explicit subjective ratings: per-question summaries with
//! two-sample t-tests, inter-question correlations and paired comparisons.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Content, DynamicRange, RatingRecord};
use crate::stats::{mean, pearson, sample_std, t_two_tailed};

/// Groups smaller than this are flagged in reports.
pub const SMALL_N: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub n: usize,
    pub mean: f64,
    /// Unbiased standard deviation.
    pub std: f64,
}

impl GroupSummary {
    pub fn new(n: usize, mean: f64, std: f64) -> Self {
        Self { n, mean, std }
    }

    pub fn of(values: &[f64]) -> Self {
        Self {
            n: values.len(),
            mean: mean(values),
            std: sample_std(values),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestVariant {
    /// Unequal variances, Welch-Satterthwaite degrees of freedom.
    #[default]
    Welch,
    /// Pooled variance, n_a + n_b - 2 degrees of freedom.
    Student,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    pub p: f64,
}

fn check_groups(a: &GroupSummary, b: &GroupSummary) -> Result<()> {
    if a.n < 2 || b.n < 2 {
        return Err(Error::invalid(format!(
            "t-test needs two samples per group, got {} and {}",
            a.n, b.n
        )));
    }
    if a.std < 0.0 || b.std < 0.0 || !a.std.is_finite() || !b.std.is_finite() {
        return Err(Error::invalid("standard deviations must be finite and non-negative"));
    }
    Ok(())
}

fn degenerate(diff: f64, df: f64) -> TTest {
    if diff == 0.0 {
        TTest { t: 0.0, df, p: 1.0 }
    } else {
        TTest { t: diff.signum() * f64::INFINITY, df, p: 0.0 }
    }
}

/// Two-tailed two-sample t-test of `a` against `b` from summary statistics.
pub fn welch_t_test(a: &GroupSummary, b: &GroupSummary) -> Result<TTest> {
    check_groups(a, b)?;
    let (va, vb) = (a.std * a.std / a.n as f64, b.std * b.std / b.n as f64);
    let diff = a.mean - b.mean;
    let se2 = va + vb;
    if se2 == 0.0 {
        return Ok(degenerate(diff, (a.n + b.n - 2) as f64));
    }
    let t = diff / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.n - 1) as f64 + vb * vb / (b.n - 1) as f64);
    Ok(TTest { t, df, p: t_two_tailed(t, df) })
}

pub fn student_t_test(a: &GroupSummary, b: &GroupSummary) -> Result<TTest> {
    check_groups(a, b)?;
    let df = (a.n + b.n - 2) as f64;
    let pooled = ((a.n - 1) as f64 * a.std * a.std + (b.n - 1) as f64 * b.std * b.std) / df;
    let diff = a.mean - b.mean;
    let se2 = pooled * (1.0 / a.n as f64 + 1.0 / b.n as f64);
    if se2 == 0.0 {
        return Ok(degenerate(diff, df));
    }
    let t = diff / se2.sqrt();
    Ok(TTest { t, df, p: t_two_tailed(t, df) })
}

pub fn t_test(variant: TestVariant, a: &GroupSummary, b: &GroupSummary) -> Result<TTest> {
    match variant {
        TestVariant::Welch => welch_t_test(a, b),
        TestVariant::Student => student_t_test(a, b),
    }
}

/// Sample Pearson correlation; errors on length mismatch or zero variance.
pub fn pcc(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("PCC needs two equal-length series of at least 2 values"));
    }
    pearson(x, y).ok_or_else(|| Error::Degenerate("PCC of a constant series".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Position {
    First,
    Second,
}

impl Position {
    fn other(self) -> Self {
        match self {
            Position::First => Position::Second,
            Position::Second => Position::First,
        }
    }
}

/// Paired-comparison answer on the seven-level scale.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PairedLabel {
    Same,
    /// Preferred video and strength 1 (slightly), 2 (better) or 3 (significantly).
    Better(Position, u8),
}

impl PairedLabel {
    pub fn mirror(self) -> Self {
        match self {
            PairedLabel::Same => PairedLabel::Same,
            PairedLabel::Better(p, s) => PairedLabel::Better(p.other(), s),
        }
    }

    pub fn all() -> Vec<PairedLabel> {
        let mut v = vec![PairedLabel::Same];
        for p in [Position::First, Position::Second] {
            for s in 1..=3 {
                v.push(PairedLabel::Better(p, s));
            }
        }
        v
    }
}

impl FromStr for PairedLabel {
    type Err = Error;

    /// Accepts e.g. "the first video is significantly better" or "same".
    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        let words: Vec<&str> = t.split_whitespace().collect();
        if words.contains(&"same") {
            return Ok(PairedLabel::Same);
        }
        let position = match (words.contains(&"first"), words.contains(&"second")) {
            (true, false) => Position::First,
            (false, true) => Position::Second,
            _ => return Err(Error::invalid(format!("unknown paired-comparison label `{s}`"))),
        };
        if !words.contains(&"better") {
            return Err(Error::invalid(format!("unknown paired-comparison label `{s}`")));
        }
        let strength = if words.contains(&"significantly") {
            3
        } else if words.contains(&"slightly") {
            1
        } else {
            2
        };
        Ok(PairedLabel::Better(position, strength))
    }
}

/// Signed preference: positive when the tone-mapped HDR video wins.
pub fn convert_paired(label: PairedLabel, hdr_position: Position) -> i8 {
    match label {
        PairedLabel::Same => 0,
        PairedLabel::Better(p, s) => {
            let s = s.clamp(1, 3) as i8;
            if p == hdr_position {
                s
            } else {
                -s
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuestionSummary {
    pub question: String,
    pub ldr: GroupSummary,
    pub hdr: GroupSummary,
    /// HDR against LDR; `None` when a group has fewer than two ratings.
    pub test: Option<TTest>,
    pub small_n: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub a: String,
    pub b: String,
    pub n: usize,
    /// `None` when either series is constant.
    pub pcc: Option<f64>,
    pub undefined: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatingsReport {
    pub variant: TestVariant,
    pub subjects: usize,
    pub questions: Vec<QuestionSummary>,
    pub question_pcc: Vec<Correlation>,
    pub paired: Vec<GroupSummary>,
    pub paired_pcc: Correlation,
    pub small_n: bool,
}

fn correlation(a: &str, b: &str, x: &[f64], y: &[f64]) -> Correlation {
    let r = pcc(x, y).ok();
    Correlation {
        a: a.into(),
        b: b.into(),
        n: x.len(),
        pcc: r,
        undefined: r.is_none(),
    }
}

pub fn ratings_report(records: &[RatingRecord], variant: TestVariant) -> Result<RatingsReport> {
    let mut subjects: Vec<&str> = records.iter().map(|r| r.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    let contents: BTreeMap<(&str, Content), &RatingRecord> = records
        .iter()
        .map(|r| ((r.subject_id.as_str(), r.content), r))
        .rev()
        .collect();
    if subjects.len() < 2 && contents.len() < 2 {
        return Err(Error::invalid("ratings report needs at least two subjects or contents"));
    }
    let score = |r: &RatingRecord, q: usize| [r.q1, r.q2, r.q3][q] as f64;
    let mut questions = Vec::new();
    for q in 0..3 {
        let pick = |dr: DynamicRange| -> Vec<f64> {
            records.iter().filter(|r| r.dynamic_range == dr).map(|r| score(r, q)).collect()
        };
        let (ldr, hdr) = (GroupSummary::of(&pick(DynamicRange::Ldr)), GroupSummary::of(&pick(DynamicRange::Tmhdr)));
        if ldr.n == 0 || hdr.n == 0 {
            return Err(Error::invalid("ratings for both LDR and TMHDR videos are required"));
        }
        let test = if ldr.n >= 2 && hdr.n >= 2 { Some(t_test(variant, &hdr, &ldr)?) } else { None };
        questions.push(QuestionSummary {
            question: format!("Q{}", q + 1),
            ldr,
            hdr,
            test,
            small_n: ldr.n.min(hdr.n) < SMALL_N,
        });
    }
    let series: Vec<Vec<f64>> = (0..3).map(|q| records.iter().map(|r| score(r, q)).collect()).collect();
    let question_pcc = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(a, b)| correlation(&format!("Q{}", a + 1), &format!("Q{}", b + 1), &series[a], &series[b]))
        .collect();
    let comp: Vec<Vec<f64>> = vec![
        contents.values().map(|r| r.comp_q1 as f64).collect(),
        contents.values().map(|r| r.comp_q2 as f64).collect(),
    ];
    let paired: Vec<GroupSummary> = comp.iter().map(|c| GroupSummary::of(c)).collect();
    let small_n = questions.iter().any(|q| q.small_n) || paired[0].n < SMALL_N;
    Ok(RatingsReport {
        variant,
        subjects: subjects.len(),
        questions,
        question_pcc,
        paired_pcc: correlation("compQ1", "compQ2", &comp[0], &comp[1]),
        paired,
        small_n,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| x.to_string())
}

/// Three CSV tables separated by blank lines: question summaries,
/// question correlations, paired comparisons.
pub fn write_ratings_csv<W: Write>(mut out: W, report: &RatingsReport) -> Result<()> {
    writeln!(out, "question,ldr_n,ldr_mean,ldr_std,hdr_n,hdr_mean,hdr_std,t,df,p,small_n")?;
    for q in &report.questions {
        let (t, df, p) = q.test.map_or((None, None, None), |t| (Some(t.t), Some(t.df), Some(t.p)));
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
            q.question, q.ldr.n, q.ldr.mean, q.ldr.std, q.hdr.n, q.hdr.mean, q.hdr.std,
            opt(t), opt(df), opt(p), q.small_n
        )?;
    }
    writeln!(out)?;
    writeln!(out, "a,b,n,pcc")?;
    for c in report.question_pcc.iter().chain(std::iter::once(&report.paired_pcc)) {
        writeln!(out, "{},{},{},{}", c.a, c.b, c.n, opt(c.pcc))?;
    }
    writeln!(out)?;
    writeln!(out, "comparison,n,mean,std")?;
    for (name, g) in ["compQ1", "compQ2"].iter().zip(&report.paired) {
        writeln!(out, "{name},{},{},{}", g.n, g.mean, g.std)?;
    }
    Ok(())
}
