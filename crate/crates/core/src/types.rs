//! Domain types shared by every stage of the pipeline.
//!
//! All temporal quantities are snippet indices. Intervals are half-open
//! `[start, end)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Which feature stream a sequence belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stream {
    Appearance,
    Motion,
}

impl Stream {
    pub fn file_name(self) -> &'static str {
        match self {
            Stream::Appearance => "appearance.csv",
            Stream::Motion => "motion.csv",
        }
    }
}

/// Per-video `T x D` snippet feature matrix for one stream.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSequence {
    video_id: String,
    stream: Stream,
    data: Array2<f64>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, stream: Stream, data: Array2<f64>) -> Result<Self> {
        let video_id = video_id.into();
        let (t, d) = data.dim();
        if t == 0 || d == 0 {
            return Err(Error::Validation(format!(
                "{video_id}/{}: feature matrix must be non-empty, got {t}x{d}",
                stream.file_name()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "{video_id}/{}: non-finite value at row {}",
                stream.file_name(),
                pos / d
            )));
        }
        Ok(Self {
            video_id,
            stream,
            data,
        })
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn stream(&self) -> Stream {
        self.stream
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    /// Number of snippets `T`.
    pub fn len(&self) -> usize {
        self.data.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.data.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }
}

/// A single labelled timestamp.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PointAnnotation {
    pub t: usize,
    pub category: usize,
}

impl PointAnnotation {
    pub fn new(t: usize, category: usize) -> Self {
        Self { t, category }
    }
}

/// Checks the per-video ordering rule: strictly increasing and inside `[0, len)`.
pub fn validate_points(points: &[PointAnnotation], len: usize) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        if p.t >= len {
            return Err(Error::Validation(format!(
                "point {i} at t={} lies outside a video of {len} snippets",
                p.t
            )));
        }
        if i > 0 && points[i - 1].t >= p.t {
            return Err(Error::Validation(format!(
                "points must be strictly increasing in t (t={} follows t={})",
                p.t,
                points[i - 1].t
            )));
        }
    }
    Ok(())
}

fn default_confidence() -> f64 {
    1.0
}

/// A half-open snippet interval with a category and a confidence.
///
/// Used both for ground-truth instances (confidence 1) and for proposals.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub category: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl Segment {
    pub fn new(start: usize, end: usize, category: usize, confidence: f64) -> Result<Self> {
        if start >= end {
            return Err(Error::Validation(format!(
                "segment [{start}, {end}) is empty"
            )));
        }
        Ok(Self {
            start,
            end,
            category,
            confidence,
        })
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }

    pub fn contains(&self, t: usize) -> bool {
        self.start <= t && t < self.end
    }

    pub fn overlaps(&self, other: &Segment) -> bool {
        self.start < other.end && other.start < self.end
    }
}

/// Temporal intersection-over-union of two snippet intervals.
pub fn tiou(a: &Segment, b: &Segment) -> f64 {
    let inter = a.end.min(b.end).saturating_sub(a.start.max(b.start));
    if inter == 0 {
        return 0.0;
    }
    let union = a.end.max(b.end) - a.start.min(b.start);
    inter as f64 / union as f64
}

/// Temporal class activation sequence, `T x (C + 1)`, background in the last column.
#[derive(Clone, Debug, PartialEq)]
pub struct Tcas {
    scores: Array2<f64>,
}

impl Tcas {
    pub fn new(scores: Array2<f64>) -> Result<Self> {
        if scores.ncols() < 2 || scores.nrows() == 0 {
            return Err(Error::Shape(format!(
                "TCAS needs at least one snippet and one action column, got {:?}",
                scores.dim()
            )));
        }
        if scores.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Validation("TCAS scores must lie in [0, 1]".into()));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> ArrayView2<'_, f64> {
        self.scores.view()
    }

    pub fn len(&self) -> usize {
        self.scores.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.nrows() == 0
    }

    pub fn num_categories(&self) -> usize {
        self.scores.ncols() - 1
    }

    pub fn background(&self) -> ArrayView1<'_, f64> {
        self.scores.column(self.num_categories())
    }

    pub fn category(&self, c: usize) -> ArrayView1<'_, f64> {
        self.scores.column(c)
    }
}

/// Per-snippet pseudo label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PseudoLabel {
    Positive(usize),
    Negative,
    Unlabeled,
}

impl fmt::Display for PseudoLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PseudoLabel::Positive(c) => write!(f, "P:{c}"),
            PseudoLabel::Negative => f.write_str("N"),
            PseudoLabel::Unlabeled => f.write_str("U"),
        }
    }
}

impl FromStr for PseudoLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "N" => Ok(PseudoLabel::Negative),
            "U" => Ok(PseudoLabel::Unlabeled),
            _ => s
                .strip_prefix("P:")
                .and_then(|c| c.parse().ok())
                .map(PseudoLabel::Positive)
                .ok_or_else(|| Error::Validation(format!("unknown pseudo label {s:?}"))),
        }
    }
}

impl Serialize for PseudoLabel {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PseudoLabel {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Pseudo labels for every snippet of one video.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PseudoLabelSeq(pub Vec<PseudoLabel>);

impl PseudoLabelSeq {
    pub fn unlabeled(len: usize) -> Self {
        Self(vec![PseudoLabel::Unlabeled; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn labels(&self) -> &[PseudoLabel] {
        &self.0
    }

    /// Maximal runs of `Positive(c)` as segments.
    pub fn positive_runs(&self) -> Vec<Segment> {
        let mut runs = Vec::new();
        let mut t = 0;
        while t < self.0.len() {
            if let PseudoLabel::Positive(c) = self.0[t] {
                let start = t;
                while t < self.0.len() && self.0[t] == PseudoLabel::Positive(c) {
                    t += 1;
                }
                runs.push(Segment {
                    start,
                    end: t,
                    category: c,
                    confidence: 1.0,
                });
            } else {
                t += 1;
            }
        }
        runs
    }
}

/// One video of a corpus: two feature streams, point labels, optional ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Video {
    pub appearance: FeatureSequence,
    pub motion: FeatureSequence,
    pub points: Vec<PointAnnotation>,
    pub ground_truth: Option<Vec<Segment>>,
}

impl Video {
    pub fn new(
        appearance: FeatureSequence,
        motion: FeatureSequence,
        points: Vec<PointAnnotation>,
        ground_truth: Option<Vec<Segment>>,
    ) -> Result<Self> {
        let id = appearance.video_id().to_owned();
        if appearance.video_id() != motion.video_id() {
            return Err(Error::Validation(format!(
                "stream ids differ: {id} vs {}",
                motion.video_id()
            )));
        }
        if appearance.dim() != motion.dim() || appearance.len() != motion.len() {
            return Err(Error::Shape(format!(
                "{id}: appearance is {}x{} but motion is {}x{}",
                appearance.len(),
                appearance.dim(),
                motion.len(),
                motion.dim()
            )));
        }
        validate_points(&points, appearance.len())
            .map_err(|e| Error::Validation(format!("{id}: {e}")))?;
        if let Some(gt) = &ground_truth {
            for s in gt {
                if s.start >= s.end || s.end > appearance.len() {
                    return Err(Error::Validation(format!(
                        "{id}: ground-truth segment [{}, {}) is invalid for {} snippets",
                        s.start,
                        s.end,
                        appearance.len()
                    )));
                }
            }
        }
        Ok(Self {
            appearance,
            motion,
            points,
            ground_truth,
        })
    }

    pub fn id(&self) -> &str {
        self.appearance.video_id()
    }

    pub fn len(&self) -> usize {
        self.appearance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.appearance.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.appearance.dim()
    }

    /// Categories named by the point annotations, ascending and deduplicated.
    pub fn categories(&self) -> Vec<usize> {
        let mut cats: Vec<usize> = self.points.iter().map(|p| p.category).collect();
        cats.sort_unstable();
        cats.dedup();
        cats
    }
}

/// A validated set of videos sharing one feature dimension, sorted by id.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    videos: Vec<Video>,
}

impl Corpus {
    pub fn new(mut videos: Vec<Video>) -> Result<Self> {
        if videos.is_empty() {
            return Err(Error::Validation("corpus has no videos".into()));
        }
        videos.sort_by(|a, b| a.id().cmp(b.id()));
        let dim = videos[0].dim();
        for w in videos.windows(2) {
            if w[0].id() == w[1].id() {
                return Err(Error::Validation(format!("duplicate video id {}", w[0].id())));
            }
        }
        if let Some(v) = videos.iter().find(|v| v.dim() != dim) {
            return Err(Error::Validation(format!(
                "{}: feature dimension {} differs from corpus dimension {dim}",
                v.id(),
                v.dim()
            )));
        }
        Ok(Self { videos })
    }

    pub fn videos(&self) -> &[Video] {
        &self.videos
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.videos[0].dim()
    }

    /// One more than the largest category index seen in points or ground truth.
    pub fn num_categories(&self) -> usize {
        self.videos
            .iter()
            .flat_map(|v| {
                v.points
                    .iter()
                    .map(|p| p.category)
                    .chain(v.ground_truth.iter().flatten().map(|s| s.category))
            })
            .max()
            .map_or(0, |c| c + 1)
    }

    /// Splits off the last `n` videos (by id order) as a second corpus.
    pub fn split_tail(mut self, n: usize) -> Result<(Corpus, Corpus)> {
        if n == 0 || n >= self.videos.len() {
            return Err(Error::Validation(format!(
                "cannot split {n} videos from a corpus of {}",
                self.videos.len()
            )));
        }
        let tail = self.videos.split_off(self.videos.len() - n);
        Ok((Corpus::new(self.videos)?, Corpus::new(tail)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(start: usize, end: usize) -> Segment {
        Segment::new(start, end, 0, 1.0).unwrap()
    }

    #[test]
    fn tiou_identity_disjoint_and_partial() {
        assert_eq!(tiou(&seg(0, 10), &seg(0, 10)), 1.0);
        assert_eq!(tiou(&seg(0, 10), &seg(10, 20)), 0.0);
        assert!((tiou(&seg(0, 10), &seg(5, 15)) - 5.0 / 15.0).abs() < 1e-12);
    }

    #[test]
    fn empty_segment_rejected() {
        assert!(Segment::new(3, 3, 0, 1.0).is_err());
    }

    #[test]
    fn pseudo_label_text_form() {
        for (label, text) in [
            (PseudoLabel::Positive(3), "P:3"),
            (PseudoLabel::Negative, "N"),
            (PseudoLabel::Unlabeled, "U"),
        ] {
            assert_eq!(label.to_string(), text);
            assert_eq!(text.parse::<PseudoLabel>().unwrap(), label);
        }
        assert!("P:x".parse::<PseudoLabel>().is_err());
        let seq = PseudoLabelSeq(vec![PseudoLabel::Negative, PseudoLabel::Positive(1)]);
        assert_eq!(serde_json::to_string(&seq).unwrap(), r#"["N","P:1"]"#);
    }

    #[test]
    fn positive_runs_split_on_category_change() {
        use PseudoLabel::*;
        let seq = PseudoLabelSeq(vec![Negative, Positive(0), Positive(0), Positive(1), Unlabeled]);
        let runs = seq.positive_runs();
        assert_eq!(runs.len(), 2);
        assert_eq!((runs[0].start, runs[0].end, runs[0].category), (1, 3, 0));
        assert_eq!((runs[1].start, runs[1].end, runs[1].category), (3, 4, 1));
    }

    #[test]
    fn points_must_be_strictly_increasing() {
        let pts = [PointAnnotation::new(2, 0), PointAnnotation::new(2, 1)];
        assert!(validate_points(&pts, 10).is_err());
        assert!(validate_points(&[PointAnnotation::new(10, 0)], 10).is_err());
        assert!(validate_points(&[PointAnnotation::new(9, 0)], 10).is_ok());
    }

    #[test]
    fn non_finite_features_rejected() {
        let mut data = Array2::zeros((2, 2));
        data[[1, 0]] = f64::NAN;
        assert!(FeatureSequence::new("v", Stream::Motion, data).is_err());
    }

    #[test]
    fn tcas_range_checked() {
        assert!(Tcas::new(Array2::from_elem((2, 3), 1.2)).is_err());
        let tcas = Tcas::new(Array2::from_elem((2, 3), 0.5)).unwrap();
        assert_eq!(tcas.num_categories(), 2);
    }
}
