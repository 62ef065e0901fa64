//! On-disk corpus layout and result reports.
//!
//! A corpus directory holds one sub-directory per video:
//!
//! ```text
//! <corpus>/<video_id>/appearance.csv   T rows x D comma-separated reals
//! <corpus>/<video_id>/motion.csv       same shape
//! <corpus>/<video_id>/points.json      [{"t": 4, "category": 1}, ...]
//! <corpus>/<video_id>/gt.json          optional, [{"start": 2, "end": 9, "category": 1}, ...]
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{
    Corpus, FeatureSequence, PointAnnotation, PseudoLabelSeq, Segment, Stream, Video,
};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_owned(),
        line: e.line() as u64,
        message: e.to_string(),
    })
}

fn write_json<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Error::json(path, e))?;
    w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_json_file<T: DeserializeOwned>(path: &Path) -> Result<T> {
    read_json(path)
}

pub fn write_json_file<T: Serialize + ?Sized>(value: &T, path: &Path) -> Result<()> {
    write_json(value, path)
}

/// Reads a headerless `T x D` CSV matrix, reporting the offending line on error.
pub fn read_matrix_csv(path: &Path) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::Parse {
                path: path.to_owned(),
                line: 0,
                message: format!("{other:?}"),
            },
        })?;
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_owned(),
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(rows as u64 + 1, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: format!("expected {c} columns, found {}", record.len()),
                })
            }
            _ => {}
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.to_owned(),
                line,
                message: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    path: path.to_owned(),
                    line,
                    message: format!("non-finite value {field:?}"),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Parse {
        path: path.to_owned(),
        line: 1,
        message: "empty feature file".into(),
    })?;
    Array2::from_shape_vec((rows, cols), values).map_err(|e| Error::Shape(e.to_string()))
}

pub fn write_matrix_csv(data: &Array2<f64>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for row in data.rows() {
        let mut first = true;
        for v in row {
            if !first {
                w.write_all(b",").map_err(|e| Error::io(path, e))?;
            }
            write!(w, "{v:?}").map_err(|e| Error::io(path, e))?;
            first = false;
        }
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize, Deserialize)]
struct GtEntry {
    start: usize,
    end: usize,
    category: usize,
}

fn load_video(dir: &Path, id: &str) -> Result<Video> {
    let stream = |s: Stream| -> Result<FeatureSequence> {
        let data = read_matrix_csv(&dir.join(s.file_name()))?;
        FeatureSequence::new(id, s, data)
    };
    let appearance = stream(Stream::Appearance)?;
    let motion = stream(Stream::Motion)?;
    let points: Vec<PointAnnotation> = read_json(&dir.join("points.json"))?;
    let gt_path = dir.join("gt.json");
    let ground_truth = if gt_path.exists() {
        let entries: Vec<GtEntry> = read_json(&gt_path)?;
        Some(
            entries
                .into_iter()
                .map(|g| Segment::new(g.start, g.end, g.category, 1.0))
                .collect::<Result<Vec<_>>>()
                .map_err(|e| Error::Validation(format!("{}: {e}", gt_path.display())))?,
        )
    } else {
        None
    };
    Video::new(appearance, motion, points, ground_truth)
}

/// Loads and validates every video directory under `path`.
pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut dirs = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let entry = entry.map_err(|e| Error::io(path, e))?;
        let p = entry.path();
        if p.is_dir() && p.join(Stream::Appearance.file_name()).exists() {
            dirs.push(p);
        }
    }
    if dirs.is_empty() {
        return Err(Error::NoVideos(path.to_owned()));
    }
    dirs.sort();
    let videos = dirs
        .iter()
        .map(|d| {
            let id = d
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Validation(format!("bad directory name {}", d.display())))?;
            load_video(d, id)
        })
        .collect::<Result<Vec<_>>>()?;
    Corpus::new(videos)
}

/// Writes `corpus` in the directory layout read by [`load_corpus`].
pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for video in corpus.videos() {
        let dir = path.join(video.id());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_matrix_csv(
            &video.appearance.data().to_owned(),
            &dir.join(Stream::Appearance.file_name()),
        )?;
        write_matrix_csv(
            &video.motion.data().to_owned(),
            &dir.join(Stream::Motion.file_name()),
        )?;
        write_json(&video.points, &dir.join("points.json"))?;
        if let Some(gt) = &video.ground_truth {
            let entries: Vec<GtEntry> = gt
                .iter()
                .map(|s| GtEntry {
                    start: s.start,
                    end: s.end,
                    category: s.category,
                })
                .collect();
            write_json(&entries, &dir.join("gt.json"))?;
        }
    }
    Ok(())
}

/// Detections for one video in a results report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoResults {
    pub video_id: String,
    pub proposals: Vec<Segment>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultsReport {
    pub videos: Vec<VideoResults>,
}

impl ResultsReport {
    /// Builds a report in canonical order: videos by id, proposals by confidence descending.
    pub fn new(per_video: BTreeMap<String, Vec<Segment>>) -> Self {
        let videos = per_video
            .into_iter()
            .map(|(video_id, mut proposals)| {
                proposals.sort_by(|a, b| {
                    b.confidence
                        .total_cmp(&a.confidence)
                        .then(a.start.cmp(&b.start))
                        .then(a.end.cmp(&b.end))
                        .then(a.category.cmp(&b.category))
                });
                VideoResults { video_id, proposals }
            })
            .collect();
        Self { videos }
    }

    pub fn get(&self, video_id: &str) -> Option<&[Segment]> {
        self.videos
            .iter()
            .find(|v| v.video_id == video_id)
            .map(|v| v.proposals.as_slice())
    }
}

pub fn dump_results(
    per_video: BTreeMap<String, Vec<Segment>>,
    path: impl AsRef<Path>,
) -> Result<ResultsReport> {
    let report = ResultsReport::new(per_video);
    write_json(&report, path.as_ref())?;
    Ok(report)
}

pub fn load_results(path: impl AsRef<Path>) -> Result<ResultsReport> {
    let report: ResultsReport = read_json(path.as_ref())?;
    for v in &report.videos {
        for p in &v.proposals {
            if p.start >= p.end {
                return Err(Error::Validation(format!(
                    "{}: proposal [{}, {}) is empty",
                    v.video_id, p.start, p.end
                )));
            }
        }
    }
    Ok(report)
}

/// Writes `{video_id: ["N", "P:2", "U", ...]}`.
pub fn dump_pseudo_labels(
    labels: &BTreeMap<String, PseudoLabelSeq>,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_json(labels, path.as_ref())
}

pub fn load_pseudo_labels(path: impl AsRef<Path>) -> Result<BTreeMap<String, PseudoLabelSeq>> {
    read_json(path.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn write(path: &Path, text: &str) {
        fs::write(path, text).unwrap();
    }

    fn tiny_video(root: &Path, id: &str, rows: usize, dim: usize, points: &str) {
        let dir = root.join(id);
        fs::create_dir_all(&dir).unwrap();
        let row = vec!["0.5"; dim].join(",");
        let body: String = (0..rows).map(|_| format!("{row}\n")).collect();
        write(&dir.join("appearance.csv"), &body);
        write(&dir.join("motion.csv"), &body);
        write(&dir.join("points.json"), points);
    }

    #[test]
    fn empty_directory_has_no_videos() {
        let dir = tempdir().unwrap();
        let err = load_corpus(dir.path()).unwrap_err();
        assert!(err.to_string().contains("no videos found"), "{err}");
    }

    #[test]
    fn single_video_loads() {
        let dir = tempdir().unwrap();
        tiny_video(dir.path(), "v0", 8, 4, r#"[{"t": 3, "category": 0}]"#);
        let corpus = load_corpus(dir.path()).unwrap();
        assert_eq!(corpus.len(), 1);
        assert_eq!(corpus.dim(), 4);
        assert_eq!(corpus.videos()[0].len(), 8);
        assert!(corpus.videos()[0].ground_truth.is_none());
    }

    #[test]
    fn annotation_beyond_video_is_rejected() {
        let dir = tempdir().unwrap();
        tiny_video(dir.path(), "v0", 8, 4, r#"[{"t": 8, "category": 0}]"#);
        assert!(matches!(load_corpus(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn dimension_mismatch_across_videos() {
        let dir = tempdir().unwrap();
        tiny_video(dir.path(), "a", 8, 4, "[]");
        tiny_video(dir.path(), "b", 8, 5, "[]");
        assert!(matches!(load_corpus(dir.path()), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_csv_reports_line() {
        let dir = tempdir().unwrap();
        tiny_video(dir.path(), "v0", 4, 2, "[]");
        write(&dir.path().join("v0/motion.csv"), "1,2\n3,4\n5,oops\n7,8\n");
        match load_corpus(dir.path()) {
            Err(Error::Parse { path, line, .. }) => {
                assert!(path.ends_with("motion.csv"));
                assert_eq!(line, 3);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_points_json_is_parse_error() {
        let dir = tempdir().unwrap();
        tiny_video(dir.path(), "v0", 4, 2, "[{\"t\": 1,\n \"category\": }]");
        match load_corpus(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn results_sorted_and_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("results.json");
        let mut map = BTreeMap::new();
        map.insert(
            "b".to_string(),
            vec![
                Segment::new(0, 4, 0, 0.25).unwrap(),
                Segment::new(5, 9, 1, 0.75).unwrap(),
            ],
        );
        map.insert("a".to_string(), vec![]);
        let report = dump_results(map, &path).unwrap();
        assert_eq!(report.videos[0].video_id, "a");
        assert!(report.videos[0].proposals.is_empty());
        assert_eq!(report.videos[1].proposals[0].confidence, 0.75);
        assert_eq!(load_results(&path).unwrap(), report);
    }

    #[test]
    fn empty_report_writes_empty_list() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("r.json");
        dump_results(BTreeMap::new(), &path).unwrap();
        assert!(load_results(&path).unwrap().videos.is_empty());
    }

    #[test]
    fn unwritable_results_path_names_the_path() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("missing/dir/results.json");
        let err = dump_results(BTreeMap::new(), &path).unwrap_err();
        assert!(err.to_string().contains("missing/dir"), "{err}");
    }
}
