//! Line-delimited JSON formats for detections, ground truth and fused
//! results, plus the evaluation report document.
//!
//! Detection line: `{"image_id", "model_id", "cx", "cy", "r", "score"}`.
//! GT line: `{"image_id", "cx", "cy", "r"}`.
//! Fused line: `{"image_id", "cx", "cy", "r", "mean_score", "count", "source_models"}`.
//!
//! Floats are written in shortest round-trip form, so reading a written
//! file reproduces every value bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::evaluation::{EvalReport, GroundTruth, ThresholdAp};
use crate::fusion::{Detection, FusedCircle};
use crate::geometry::Circle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub model_id: String,
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub score: f64,
}

impl From<&Detection> for DetectionRecord {
    fn from(d: &Detection) -> Self {
        DetectionRecord {
            image_id: d.image_id.clone(),
            model_id: d.model_id.clone(),
            cx: d.circle.cx(),
            cy: d.circle.cy(),
            r: d.circle.r(),
            score: d.score(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedRecord {
    pub image_id: String,
    pub cx: f64,
    pub cy: f64,
    pub r: f64,
    pub mean_score: f64,
    pub count: usize,
    pub source_models: Vec<String>,
}

impl From<&FusedCircle> for FusedRecord {
    fn from(f: &FusedCircle) -> Self {
        FusedRecord {
            image_id: f.image_id().to_string(),
            cx: f.circle().cx(),
            cy: f.circle().cy(),
            r: f.circle().r(),
            mean_score: f.mean_score(),
            count: f.count(),
            source_models: f.source_models().map(str::to_string).collect(),
        }
    }
}

/// Report document with fixed key names and order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRecord {
    pub map_50_95: f64,
    pub map_50: f64,
    pub map_75: f64,
    pub ar_50_95: f64,
    pub per_threshold_ap: Vec<ThresholdAp>,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl From<&EvalReport> for ReportRecord {
    fn from(r: &EvalReport) -> Self {
        ReportRecord {
            map_50_95: r.map_50_95,
            map_50: r.map_50,
            map_75: r.map_75,
            ar_50_95: r.ar_50_95,
            per_threshold_ap: r.per_threshold_ap.clone(),
            tp: r.matched_counts.tp,
            fp: r.matched_counts.fp,
            fn_: r.matched_counts.fn_,
        }
    }
}

/// Detections grouped by image, then by model.
///
/// Models are ordered by first appearance; detections keep their line
/// order within each (image, model) group.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionSet {
    models: Vec<String>,
    images: BTreeMap<String, BTreeMap<usize, Vec<Detection>>>,
}

impl DetectionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, d: Detection) {
        let model = match self.models.iter().position(|m| *m == d.model_id) {
            Some(i) => i,
            None => {
                self.models.push(d.model_id.clone());
                self.models.len() - 1
            }
        };
        self.images
            .entry(d.image_id.clone())
            .or_default()
            .entry(model)
            .or_default()
            .push(d);
    }

    /// Appends every detection of `other`, after those already held.
    pub fn extend(&mut self, other: DetectionSet) {
        for d in other.into_detections() {
            self.push(d);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn len(&self) -> usize {
        self.images.values().flat_map(|m| m.values()).map(Vec::len).sum()
    }

    pub fn model_order(&self) -> &[String] {
        &self.models
    }

    pub fn image_ids(&self) -> impl Iterator<Item = &str> {
        self.images.keys().map(String::as_str)
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    /// One detection list per known model, in model order; models with no
    /// detections on this image contribute an empty list.
    pub fn model_sets(&self, image_id: &str) -> Vec<Vec<Detection>> {
        let per_model = self.images.get(image_id);
        (0..self.models.len())
            .map(|m| {
                per_model
                    .and_then(|pm| pm.get(&m))
                    .cloned()
                    .unwrap_or_default()
            })
            .collect()
    }

    /// All detections on one image, model by model.
    pub fn pooled(&self, image_id: &str) -> Vec<Detection> {
        self.model_sets(image_id).into_iter().flatten().collect()
    }

    /// Every detection, by image then model.
    pub fn detections(&self) -> impl Iterator<Item = &Detection> {
        self.images.values().flat_map(|m| m.values()).flatten()
    }

    pub fn into_detections(self) -> impl Iterator<Item = Detection> {
        self.images.into_values().flat_map(|m| m.into_values()).flatten()
    }
}

impl FromIterator<Detection> for DetectionSet {
    fn from_iter<I: IntoIterator<Item = Detection>>(iter: I) -> Self {
        let mut set = DetectionSet::new();
        for d in iter {
            set.push(d);
        }
        set
    }
}

/// Field access over one parsed line, reporting the line and field on
/// failure.
struct Line<'a> {
    path: &'a Path,
    number: usize,
    object: Map<String, Value>,
}

impl<'a> Line<'a> {
    fn parse(path: &'a Path, number: usize, text: &str) -> Result<Self> {
        let object = match serde_json::from_str::<Value>(text) {
            Ok(Value::Object(object)) => object,
            Ok(_) => return Err(parse_error(path, number, "<line>", "expected a JSON object".into())),
            Err(e) => return Err(parse_error(path, number, "<line>", e.to_string())),
        };
        Ok(Line { path, number, object })
    }

    fn error(&self, field: &str, message: impl Into<String>) -> Error {
        parse_error(self.path, self.number, field, message.into())
    }

    fn get(&self, field: &str) -> Result<&Value> {
        self.object
            .get(field)
            .ok_or_else(|| self.error(field, "missing field"))
    }

    fn has(&self, field: &str) -> bool {
        self.object.contains_key(field)
    }

    fn string(&self, field: &str) -> Result<String> {
        match self.get(field)? {
            Value::String(s) => Ok(s.clone()),
            other => Err(self.error(field, format!("expected a string, found {other}"))),
        }
    }

    fn number(&self, field: &str) -> Result<f64> {
        match self.get(field)? {
            Value::Number(n) => n
                .as_f64()
                .filter(|v| v.is_finite())
                .ok_or_else(|| self.error(field, format!("{n} is not a finite number"))),
            other => Err(self.error(field, format!("expected a number, found {other}"))),
        }
    }

    fn count(&self, field: &str) -> Result<usize> {
        match self.get(field)? {
            Value::Number(n) => n
                .as_u64()
                .and_then(|v| usize::try_from(v).ok())
                .ok_or_else(|| self.error(field, format!("{n} is not a non-negative integer"))),
            other => Err(self.error(field, format!("expected an integer, found {other}"))),
        }
    }

    fn strings(&self, field: &str) -> Result<Vec<String>> {
        match self.get(field)? {
            Value::Array(items) => items
                .iter()
                .map(|v| match v {
                    Value::String(s) => Ok(s.clone()),
                    other => Err(self.error(field, format!("expected strings, found {other}"))),
                })
                .collect(),
            other => Err(self.error(field, format!("expected an array, found {other}"))),
        }
    }

    fn circle(&self) -> Result<Circle> {
        let cx = self.number("cx")?;
        let cy = self.number("cy")?;
        let r = self.number("r")?;
        if r <= 0.0 {
            return Err(self.error("r", format!("radius {r} must be positive")));
        }
        Circle::new(cx, cy, r).map_err(|e| self.error("r", e.to_string()))
    }

    fn score(&self, field: &str) -> Result<f64> {
        let s = self.number(field)?;
        if s > 0.0 && s <= 1.0 {
            Ok(s)
        } else {
            Err(self.error(field, format!("{s} outside (0, 1]")))
        }
    }

    fn detection(&self) -> Result<Detection> {
        let image_id = self.string("image_id")?;
        let model_id = self.string("model_id")?;
        let circle = self.circle()?;
        let score = self.score("score")?;
        Detection::new(circle, score, model_id, image_id).map_err(|e| self.error("score", e.to_string()))
    }

    fn fused(&self) -> Result<FusedRecord> {
        let image_id = self.string("image_id")?;
        let circle = self.circle()?;
        let mean_score = self.score("mean_score")?;
        let count = self.count("count")?;
        let source_models = self.strings("source_models")?;
        if count == 0 {
            return Err(self.error("count", "must be at least 1"));
        }
        if !source_models.is_empty() && source_models.len() != count {
            return Err(self.error(
                "source_models",
                format!("{} models listed for count {count}", source_models.len()),
            ));
        }
        Ok(FusedRecord {
            image_id,
            cx: circle.cx(),
            cy: circle.cy(),
            r: circle.r(),
            mean_score,
            count,
            source_models,
        })
    }
}

fn parse_error(path: &Path, line: usize, field: &str, message: String) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        field: field.to_string(),
        message,
    }
}

/// Calls `f` on every non-blank line with its 1-based line number.
fn for_each_line(path: &Path, mut f: impl FnMut(Line<'_>) -> Result<()>) -> Result<()> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    for (i, text) in BufReader::new(file).lines().enumerate() {
        let text = text.map_err(|e| Error::io(path, e))?;
        if text.trim().is_empty() {
            continue;
        }
        f(Line::parse(path, i + 1, &text)?)?;
    }
    Ok(())
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionSet> {
    let path = path.as_ref();
    let mut set = DetectionSet::new();
    for_each_line(path, |line| {
        set.push(line.detection()?);
        Ok(())
    })?;
    Ok(set)
}

/// Ground truth grouped by image, sorted by image id; circles keep their
/// line order.
pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GroundTruth>> {
    let path = path.as_ref();
    let mut images: BTreeMap<String, Vec<Circle>> = BTreeMap::new();
    for_each_line(path, |line| {
        let image_id = line.string("image_id")?;
        let circle = line.circle()?;
        images.entry(image_id).or_default().push(circle);
        Ok(())
    })?;
    Ok(images
        .into_iter()
        .map(|(id, circles)| GroundTruth::new(id, circles))
        .collect())
}

pub fn load_fused(path: impl AsRef<Path>) -> Result<Vec<FusedRecord>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_line(path, |line| {
        out.push(line.fused()?);
        Ok(())
    })?;
    Ok(out)
}

/// Loads scored circles for evaluation from either a detection file or a
/// fused file, decided per line by the presence of `mean_score`. Fused
/// lines are attributed to `model_id` "fused".
pub fn load_scored(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for_each_line(path, |line| {
        let d = if line.has("mean_score") && !line.has("score") {
            let f = line.fused()?;
            let circle = Circle::new(f.cx, f.cy, f.r).map_err(|e| line.error("r", e.to_string()))?;
            Detection::new(circle, f.mean_score, "fused", f.image_id)
                .map_err(|e| line.error("mean_score", e.to_string()))?
        } else {
            line.detection()?
        };
        out.push(d);
        Ok(())
    })?;
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, &record).map_err(|e| Error::io(path, e.into()))?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_detections<'a>(path: impl AsRef<Path>, dets: impl IntoIterator<Item = &'a Detection>) -> Result<()> {
    write_lines(path.as_ref(), dets.into_iter().map(DetectionRecord::from))
}

pub fn write_ground_truth(path: impl AsRef<Path>, gts: &[GroundTruth]) -> Result<()> {
    let records = gts.iter().flat_map(|g| {
        g.circles.iter().map(|c| GroundTruthRecord {
            image_id: g.image_id.clone(),
            cx: c.cx(),
            cy: c.cy(),
            r: c.r(),
        })
    });
    write_lines(path.as_ref(), records)
}

pub fn write_fused<'a>(path: impl AsRef<Path>, results: impl IntoIterator<Item = &'a FusedCircle>) -> Result<()> {
    write_lines(path.as_ref(), results.into_iter().map(FusedRecord::from))
}

pub fn report_json(report: &EvalReport) -> String {
    let mut text = serde_json::to_string_pretty(&ReportRecord::from(report)).expect("report serializes");
    text.push('\n');
    text
}

pub fn write_report(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, report_json(report)).map_err(|e| Error::io(path, e))
}
