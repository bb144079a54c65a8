//! JSONL benchmark samples and the ScreenSpot-Pro annotation shim.
//!
//! One object per line:
//!
//! ```json
//! {"id": "a1", "image": "imgs/a1.png", "instruction": "open settings",
//!  "bbox": [x, y, w, h], "tags": {"group": "CAD"}, "width": 3840, "height": 2160}
//! ```
//!
//! `width`/`height` are optional when the image file exists. A sample whose
//! image is missing but whose size is given is kept as a synthetic sample:
//! only simulated backends can run it.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::backend::Screenshot;
use crate::geometry::{ImageDims, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingSample {
    pub id: String,
    pub image_path: PathBuf,
    pub instruction: String,
    pub gt_bbox: Rect,
    pub tags: BTreeMap<String, String>,
    pub dims: ImageDims,
}

impl GroundingSample {
    pub fn screenshot(&self) -> Result<Screenshot, HarnessError> {
        if self.image_path.is_file() {
            let shot = Screenshot::open(&self.image_path)
                .map_err(|e| HarnessError::Image { id: self.id.clone(), message: e.to_string() })?;
            if shot.dims() != self.dims {
                return Err(HarnessError::Image {
                    id: self.id.clone(),
                    message: format!(
                        "image is {}x{}, annotation says {}x{}",
                        shot.dims().width,
                        shot.dims().height,
                        self.dims.width,
                        self.dims.height
                    ),
                });
            }
            Ok(shot)
        } else {
            Ok(Screenshot::synthetic(self.dims, &format!("{}\0{}", self.id, self.instruction)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub samples: Vec<GroundingSample>,
    pub rejects: Vec<Reject>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Line {
    id: String,
    image: String,
    instruction: String,
    bbox: [f64; 4],
    #[serde(default)]
    tags: BTreeMap<String, serde_json::Value>,
    width: Option<u32>,
    height: Option<u32>,
}

fn tag_string(v: serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s,
        other => other.to_string(),
    }
}

/// Rounds a float box to whole pixels, rejecting negative or empty boxes.
fn to_rect(b: [f64; 4]) -> Result<Rect, String> {
    if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(format!("bbox {b:?} has negative or non-finite values"));
    }
    let x0 = b[0].floor();
    let y0 = b[1].floor();
    let x1 = (b[0] + b[2]).ceil();
    let y1 = (b[1] + b[3]).ceil();
    if b[2] <= 0.0 || b[3] <= 0.0 {
        return Err(format!("bbox {b:?} is empty"));
    }
    Ok(Rect::new(x0 as u32, y0 as u32, (x1 - x0) as u32, (y1 - y0) as u32))
}

fn resolve(base: &Path, image: &str) -> PathBuf {
    let p = Path::new(image);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build_sample(
    base: &Path,
    id: String,
    image: &str,
    instruction: String,
    bbox: [f64; 4],
    tags: BTreeMap<String, String>,
    size: Option<(u32, u32)>,
) -> Result<GroundingSample, String> {
    if instruction.trim().is_empty() {
        return Err("empty instruction".into());
    }
    let image_path = resolve(base, image);
    let (w, h) = match size {
        Some(wh) => wh,
        None => image::image_dimensions(&image_path)
            .map_err(|e| format!("no width/height given and {} unreadable: {e}", image_path.display()))?,
    };
    let dims = ImageDims::new(w, h).map_err(|e| e.to_string())?;
    let gt_bbox = to_rect(bbox)?;
    if !gt_bbox.fits_in(dims) {
        return Err(format!("bbox {bbox:?} lies outside the {w}x{h} image"));
    }
    Ok(GroundingSample { id, image_path, instruction, gt_bbox, tags, dims })
}

fn finish(samples: Vec<GroundingSample>, rejects: Vec<Reject>, path: &Path) -> Result<Dataset, HarnessError> {
    if samples.is_empty() {
        return Err(HarnessError::EmptyDataset { path: path.to_path_buf(), rejects: rejects.len() });
    }
    Ok(Dataset { samples, rejects })
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset, HarnessError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let parsed: Line = match serde_json::from_str(raw) {
            Ok(l) => l,
            Err(e) => {
                rejects.push(Reject { line, reason: format!("malformed: {e}") });
                continue;
            }
        };
        if !seen.insert(parsed.id.clone()) {
            rejects.push(Reject { line, reason: format!("duplicate id {:?}", parsed.id) });
            continue;
        }
        let size = match (parsed.width, parsed.height) {
            (Some(w), Some(h)) => Some((w, h)),
            (None, None) => None,
            _ => {
                rejects.push(Reject { line, reason: "width and height must be given together".into() });
                continue;
            }
        };
        let tags = parsed.tags.into_iter().map(|(k, v)| (k, tag_string(v))).collect();
        match build_sample(base, parsed.id, &parsed.image, parsed.instruction, parsed.bbox, tags, size) {
            Ok(s) => samples.push(s),
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }
    for r in &rejects {
        log::warn!("{}:{}: rejected: {}", path.display(), r.line, r.reason);
    }
    finish(samples, rejects, path)
}

#[derive(Debug, Deserialize)]
struct ScreenSpotEntry {
    #[serde(default)]
    id: Option<String>,
    img_filename: String,
    instruction: String,
    /// Corner form: [x1, y1, x2, y2].
    bbox: [f64; 4],
    #[serde(default)]
    img_size: Option<[u32; 2]>,
    #[serde(default)]
    ui_type: Option<String>,
    #[serde(default)]
    group: Option<String>,
    #[serde(default)]
    platform: Option<String>,
    #[serde(default)]
    application: Option<String>,
}

/// Reads a ScreenSpot-Pro style annotation file (a JSON array with corner
/// boxes) and maps it onto [`GroundingSample`]s. Image paths resolve
/// against `image_root`. Array positions stand in for line numbers in
/// rejects (1-based).
pub fn load_screenspot_pro(path: impl AsRef<Path>, image_root: impl AsRef<Path>) -> Result<Dataset, HarnessError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let entries: Vec<serde_json::Value> =
        serde_json::from_str(&text).map_err(|e| HarnessError::Format { path: path.to_path_buf(), message: e.to_string() })?;
    let mut samples = Vec::new();
    let mut rejects = Vec::new();
    let mut seen = HashSet::new();
    for (i, value) in entries.into_iter().enumerate() {
        let line = i + 1;
        let e: ScreenSpotEntry = match serde_json::from_value(value) {
            Ok(e) => e,
            Err(err) => {
                rejects.push(Reject { line, reason: format!("malformed: {err}") });
                continue;
            }
        };
        let id = e.id.unwrap_or_else(|| format!("{}#{line}", e.img_filename));
        if !seen.insert(id.clone()) {
            rejects.push(Reject { line, reason: format!("duplicate id {id:?}") });
            continue;
        }
        let [x1, y1, x2, y2] = e.bbox;
        let mut tags = BTreeMap::new();
        for (k, v) in [("ui_type", e.ui_type), ("group", e.group), ("platform", e.platform), ("application", e.application)] {
            if let Some(v) = v {
                tags.insert(k.to_string(), v);
            }
        }
        let size = e.img_size.map(|[w, h]| (w, h));
        match build_sample(image_root.as_ref(), id, &e.img_filename, e.instruction, [x1, y1, x2 - x1, y2 - y1], tags, size) {
            Ok(s) => samples.push(s),
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }
    finish(samples, rejects, path)
}

/// Writes samples back out in the JSONL format `load_dataset` reads.
pub fn write_dataset(path: impl AsRef<Path>, samples: &[GroundingSample]) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let mut out = String::new();
    for s in samples {
        let line = serde_json::json!({
            "id": s.id,
            "image": s.image_path.to_string_lossy(),
            "instruction": s.instruction,
            "bbox": [s.gt_bbox.x, s.gt_bbox.y, s.gt_bbox.w, s.gt_bbox.h],
            "tags": s.tags,
            "width": s.dims.width,
            "height": s.dims.height,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| HarnessError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn file(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_valid_lines() {
        let f = file(concat!(
            r#"{"id":"a","image":"a.png","instruction":"click ok","bbox":[10,10,20,20],"width":1920,"height":1080}"#, "\n",
            r#"{"id":"b","image":"b.png","instruction":"close","bbox":[0,0,5,5],"tags":{"group":"Dev","level":2},"width":1920,"height":1080}"#, "\n",
            "\n",
            r#"{"id":"c","image":"c.png","instruction":"save","bbox":[1900.5,1070,10,5],"width":1920,"height":1080}"#, "\n",
        ));
        let ds = load_dataset(f.path()).unwrap();
        assert_eq!(ds.samples.len(), 3);
        assert!(ds.rejects.is_empty());
        assert_eq!(ds.samples[1].tags["level"], "2");
        assert_eq!(ds.samples[2].gt_bbox, Rect::new(1900, 1070, 11, 5));
    }

    #[test]
    fn rejects_bad_lines_with_line_numbers() {
        let f = file(concat!(
            r#"{"id":"a","image":"a.png","instruction":"ok","bbox":[10,10,20,20],"width":100,"height":100}"#, "\n",
            r#"{"id":"b","image":"b.png","instruction":"ok","bbox":[90,90,20,20],"width":100,"height":100}"#, "\n",
            "not json\n",
            r#"{"id":"a","image":"a.png","instruction":"dup","bbox":[1,1,2,2],"width":100,"height":100}"#, "\n",
            r#"{"id":"d","image":"d.png","instruction":"  ","bbox":[1,1,2,2],"width":100,"height":100}"#, "\n",
            r#"{"id":"e","image":"missing.png","instruction":"x","bbox":[1,1,2,2]}"#, "\n",
        ));
        let ds = load_dataset(f.path()).unwrap();
        assert_eq!(ds.samples.len(), 1);
        let lines: Vec<usize> = ds.rejects.iter().map(|r| r.line).collect();
        assert_eq!(lines, vec![2, 3, 4, 5, 6]);
        assert!(ds.rejects[0].reason.contains("outside"));
    }

    #[test]
    fn empty_file_is_an_error() {
        let f = file("");
        assert!(matches!(load_dataset(f.path()), Err(HarnessError::EmptyDataset { .. })));
        assert!(matches!(load_dataset("/definitely/not/here.jsonl"), Err(HarnessError::Io { .. })));
    }

    #[test]
    fn reads_image_header_when_size_missing() {
        let dir = tempfile::tempdir().unwrap();
        image::RgbImage::new(64, 48).save(dir.path().join("s.png")).unwrap();
        let ds_path = dir.path().join("d.jsonl");
        fs::write(&ds_path, r#"{"id":"s","image":"s.png","instruction":"go","bbox":[1,1,4,4]}"#).unwrap();
        let ds = load_dataset(&ds_path).unwrap();
        assert_eq!(ds.samples[0].dims, ImageDims { width: 64, height: 48 });
        let shot = ds.samples[0].screenshot().unwrap();
        assert!(shot.pixels().is_some());
    }

    #[test]
    fn screenspot_shim() {
        let f = file(
            r#"[{"img_filename":"x.png","instruction":"open file","bbox":[100,200,130,220],
                 "img_size":[3840,2160],"ui_type":"icon","group":"CAD","platform":"windows","application":"inventor"},
                {"img_filename":"y.png","instruction":"bad","bbox":[3830,2150,3850,2170],"img_size":[3840,2160]}]"#,
        );
        let ds = load_screenspot_pro(f.path(), "/imgs").unwrap();
        assert_eq!(ds.samples.len(), 1);
        let s = &ds.samples[0];
        assert_eq!(s.gt_bbox, Rect::new(100, 200, 30, 20));
        assert_eq!(s.tags["group"], "CAD");
        assert_eq!(s.image_path, PathBuf::from("/imgs/x.png"));
        assert_eq!(ds.rejects[0].line, 2);
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let f = file(r#"{"id":"a","image":"a.png","instruction":"click","bbox":[10,10,20,20],"tags":{"g":"x"},"width":300,"height":200}"#);
        let ds = load_dataset(f.path()).unwrap();
        let out = dir.path().join("out.jsonl");
        write_dataset(&out, &ds.samples).unwrap();
        let back = load_dataset(&out).unwrap();
        assert_eq!(back.samples[0].gt_bbox, ds.samples[0].gt_bbox);
        assert_eq!(back.samples[0].tags, ds.samples[0].tags);
    }
}
