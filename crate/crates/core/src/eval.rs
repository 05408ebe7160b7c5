//! FAR/FRR curves, the equal error rate, and report export.
//!
//! A probe is accepted at threshold `t` when its distance is `≤ t`, so
//!
//! ```text
//! FAR(t) = |{impostor ≤ t}| / |impostor|
//! FRR(t) = |{genuine  > t}| / |genuine|
//! ```
//!
//! The EER is reported as `(FAR + FRR) / 2` at the candidate threshold that
//! minimizes `|FAR - FRR|`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};
use crate::fsutil;
use crate::gallery::Gallery;
use crate::template::batch_mahalanobis;

/// Genuine and impostor distances.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreSet {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
}

impl ScoreSet {
    pub fn new(genuine: Vec<f64>, impostor: Vec<f64>) -> Self {
        Self { genuine, impostor }
    }

    fn validate(&self) -> Result<()> {
        if self.genuine.is_empty() || self.impostor.is_empty() {
            return Err(Error::InsufficientScores(format!(
                "need genuine and impostor scores, have {} and {}",
                self.genuine.len(),
                self.impostor.len()
            )));
        }
        for &s in self.genuine.iter().chain(&self.impostor) {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::InvalidScore(format!("{s} is not a finite distance")));
            }
        }
        Ok(())
    }
}

/// One threshold of a FAR/FRR sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// The selected EER operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    pub eer: f64,
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub eer: f64,
    pub threshold_at_eer: f64,
    pub far_at_threshold: f64,
    pub frr_at_threshold: f64,
    pub curve: Vec<CurvePoint>,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

/// Scores every labeled probe against every enrolled template.
///
/// Output order is probe index, then identity order within a probe.
pub fn score_matrix(gallery: &Gallery, probes: &EmbeddingSet) -> Result<ScoreSet> {
    let labels = probes.source_labels().ok_or(Error::MissingLabel(0))?;
    if gallery.is_empty() {
        return Err(Error::EmptyGallery);
    }
    let ids: Vec<&str> = gallery.identities().collect();
    let own: Vec<usize> = labels
        .iter()
        .map(|l| {
            ids.binary_search(&l.as_str())
                .map_err(|_| Error::UnknownIdentity(l.clone()))
        })
        .collect::<Result<_>>()?;

    // distances[k][i]: probe i against template k
    let distances = gallery
        .templates()
        .map(|t| batch_mahalanobis(t, probes))
        .collect::<Result<Vec<_>>>()?;

    let n = probes.count();
    let mut scores = ScoreSet {
        genuine: Vec::with_capacity(n),
        impostor: Vec::with_capacity(n * (ids.len() - 1)),
    };
    for (i, &k_own) in own.iter().enumerate() {
        for (k, row) in distances.iter().enumerate() {
            if k == k_own {
                scores.genuine.push(row[i]);
            } else {
                scores.impostor.push(row[i]);
            }
        }
    }
    Ok(scores)
}

/// Sweeps every threshold that yields a distinct (FAR, FRR) pair: one below
/// the smallest score, the midpoints between consecutive distinct pooled
/// scores, and one above the largest.
pub fn far_frr_curve(scores: &ScoreSet) -> Result<Vec<CurvePoint>> {
    scores.validate()?;
    let mut genuine = scores.genuine.clone();
    let mut impostor = scores.impostor.clone();
    genuine.sort_by(f64::total_cmp);
    impostor.sort_by(f64::total_cmp);

    let mut pooled: Vec<f64> = genuine.iter().chain(&impostor).copied().collect();
    pooled.sort_by(f64::total_cmp);
    pooled.dedup();

    let mut thresholds = Vec::with_capacity(pooled.len() + 1);
    thresholds.push(pooled[0] - 1.0);
    for w in pooled.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mid = a + (b - a) / 2.0;
        // adjacent floats: the midpoint can round onto b
        thresholds.push(if a < mid && mid < b { mid } else { a });
    }
    thresholds.push(pooled[pooled.len() - 1] + 1.0);

    let (ng, ni) = (genuine.len() as f64, impostor.len() as f64);
    Ok(thresholds
        .into_iter()
        .map(|t| {
            let accepted_impostors = impostor.partition_point(|&s| s <= t);
            let accepted_genuine = genuine.partition_point(|&s| s <= t);
            CurvePoint {
                threshold: t,
                far: accepted_impostors as f64 / ni,
                frr: (genuine.len() - accepted_genuine) as f64 / ng,
            }
        })
        .collect())
}

fn validate_curve(curve: &[CurvePoint]) -> Result<()> {
    if curve.is_empty() {
        return Err(Error::InvalidCurve("curve is empty".into()));
    }
    for (i, p) in curve.iter().enumerate() {
        let rate_ok = |r: f64| (0.0..=1.0).contains(&r);
        if !p.threshold.is_finite() || !rate_ok(p.far) || !rate_ok(p.frr) {
            return Err(Error::InvalidCurve(format!("point {i} is out of range: {p:?}")));
        }
    }
    for (i, w) in curve.windows(2).enumerate() {
        let (a, b) = (w[0], w[1]);
        if b.threshold <= a.threshold {
            return Err(Error::InvalidCurve(format!("thresholds not increasing at {}", i + 1)));
        }
        if b.far < a.far || b.frr > a.frr {
            return Err(Error::InvalidCurve(format!("rates not monotone at {}", i + 1)));
        }
    }
    Ok(())
}

/// Picks the threshold minimizing `|FAR - FRR|`; ties go to the smaller
/// `(FAR + FRR) / 2`, then to the smaller threshold.
pub fn eer(curve: &[CurvePoint]) -> Result<OperatingPoint> {
    validate_curve(curve)?;
    let key = |p: &CurvePoint| ((p.far - p.frr).abs(), (p.far + p.frr) / 2.0);
    let mut best = curve[0];
    for p in &curve[1..] {
        let (gap, mean) = key(p);
        let (best_gap, best_mean) = key(&best);
        // strict comparison keeps the earlier (smaller) threshold on full ties
        if gap < best_gap || (gap == best_gap && mean < best_mean) {
            best = *p;
        }
    }
    Ok(operating_point(best))
}

fn operating_point(p: CurvePoint) -> OperatingPoint {
    OperatingPoint {
        eer: (p.far + p.frr) / 2.0,
        threshold: p.threshold,
        far: p.far,
        frr: p.frr,
    }
}

/// Full curve plus EER operating point for a score set.
pub fn evaluate(scores: &ScoreSet) -> Result<EvalReport> {
    let curve = far_frr_curve(scores)?;
    let op = eer(&curve)?;
    Ok(EvalReport {
        eer: op.eer,
        threshold_at_eer: op.threshold,
        far_at_threshold: op.far,
        frr_at_threshold: op.frr,
        curve,
        n_genuine: scores.genuine.len(),
        n_impostor: scores.impostor.len(),
    })
}

/// Summary written next to the curve CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub eer: f64,
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
    pub n_genuine: usize,
    pub n_impostor: usize,
}

impl From<&EvalReport> for ReportSummary {
    fn from(r: &EvalReport) -> Self {
        Self {
            eer: r.eer,
            threshold: r.threshold_at_eer,
            far: r.far_at_threshold,
            frr: r.frr_at_threshold,
            n_genuine: r.n_genuine,
            n_impostor: r.n_impostor,
        }
    }
}

/// `report.csv` → `report.summary.json`.
pub fn summary_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("summary.json")
}

/// Writes the curve as `threshold,far,frr` CSV plus a JSON summary at
/// [`summary_path`]. Values are printed in shortest round-trip form.
pub fn export_report(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut csv = String::from("threshold,far,frr\n");
    for p in &report.curve {
        csv.push_str(&format!("{},{},{}\n", p.threshold, p.far, p.frr));
    }
    fsutil::atomic_write(path, csv.as_bytes())?;
    let summary = serde_json::to_string_pretty(&ReportSummary::from(report))
        .expect("summary serializes");
    fsutil::atomic_write(&summary_path(path), summary.as_bytes())
}

/// Parses a curve CSV written by [`export_report`].
pub fn read_curve_csv(path: impl AsRef<Path>) -> Result<Vec<CurvePoint>> {
    let bytes = fsutil::read(path.as_ref())?;
    let mut reader = csv::Reader::from_reader(bytes.as_slice());
    let headers = reader.headers().map_err(|e| Error::Format(e.to_string()))?;
    if headers != vec!["threshold", "far", "frr"] {
        return Err(Error::Format(format!("unexpected header {headers:?}")));
    }
    let mut curve = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let f = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| Error::Parse(format!("{:?}: {e}", &rec[i])))
        };
        curve.push(CurvePoint {
            threshold: f(0)?,
            far: f(1)?,
            frr: f(2)?,
        });
    }
    Ok(curve)
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<ReportSummary> {
    let bytes = fsutil::read(path.as_ref())?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Parse(e.to_string()))
}
