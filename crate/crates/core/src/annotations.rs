//! Annotation records and their text formats.
//!
//! The canonical interchange format is JSON lines, one image per line:
//!
//! ```text
//! {"image": "img_1", "size": [h, w], "instances": [{"polygon": [[x, y], ...], "ignore": false}]}
//! ```
//!
//! ICDAR 2015 ground-truth text (`x1,y1,...,x4,y4,transcription`) is accepted
//! as an input adapter; transcription `###` marks a don't-care region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Polygon};
use crate::labelgen::AnnotatedInstance;

/// Parse failure with its 1-based line number and, for JSON, the path of
/// the offending value.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}{}: {message}", path.as_ref().map(|p| format!(" at {p}")).unwrap_or_default())]
pub struct ParseError {
    pub line: usize,
    pub path: Option<String>,
    pub message: String,
}

impl ParseError {
    fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            path: None,
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub height: usize,
    pub width: usize,
    pub instances: Vec<AnnotatedInstance>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceJson {
    polygon: Vec<[f64; 2]>,
    ignore: bool,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordJson {
    image: String,
    size: [usize; 2],
    instances: Vec<InstanceJson>,
}

pub(crate) fn polygon_to_json(p: &Polygon) -> Vec<[f64; 2]> {
    p.vertices().iter().map(|v| [v.x, v.y]).collect()
}

pub(crate) fn polygon_from_json(v: &[[f64; 2]]) -> Result<Polygon, String> {
    Polygon::new(v.iter().map(|&[x, y]| Point2::new(x, y)).collect()).map_err(|e| e.to_string())
}

impl AnnotationRecord {
    /// One JSON line, without the trailing newline.
    pub fn to_json_line(&self) -> String {
        let rec = RecordJson {
            image: self.image_id.clone(),
            size: [self.height, self.width],
            instances: self
                .instances
                .iter()
                .map(|i| InstanceJson {
                    polygon: polygon_to_json(&i.polygon),
                    ignore: i.ignore,
                })
                .collect(),
        };
        serde_json::to_string(&rec).expect("record serializes")
    }
}

/// Serializes records as JSON lines, each terminated by a newline.
pub fn to_jsonl(records: &[AnnotationRecord]) -> String {
    records.iter().map(|r| r.to_json_line() + "\n").collect()
}

/// Parses one ICDAR 2015 ground-truth file for image `image_id`.
pub fn parse_icdar(
    image_id: &str,
    height: usize,
    width: usize,
    text: &str,
) -> Result<AnnotationRecord, ParseError> {
    if image_id.is_empty() {
        return Err(ParseError::at(0, "empty image id"));
    }
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let mut instances = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim_end_matches('\r');
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.splitn(9, ',').collect();
        if fields.len() < 9 {
            return Err(ParseError::at(
                line,
                format!(
                    "expected 8 coordinates and a transcription, found {} fields",
                    fields.len()
                ),
            ));
        }
        let mut coords = [0.0f64; 8];
        for (slot, f) in coords.iter_mut().zip(&fields[..8]) {
            *slot = f
                .trim()
                .parse()
                .map_err(|_| ParseError::at(line, format!("bad coordinate {:?}", f.trim())))?;
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(ParseError::at(line, "non-finite coordinate"));
        }
        let pts = coords.chunks(2).map(|c| Point2::new(c[0], c[1])).collect();
        let polygon = Polygon::new(pts).map_err(|e| ParseError::at(line, e.to_string()))?;
        let ignore = fields[8].trim() == "###";
        instances.push(AnnotatedInstance { polygon, ignore });
    }
    Ok(AnnotationRecord {
        image_id: image_id.to_string(),
        height,
        width,
        instances,
    })
}

/// Parsed JSON-lines annotations plus non-fatal warnings.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyJson {
    pub records: Vec<AnnotationRecord>,
    pub warnings: Vec<String>,
}

/// Parses JSON-lines annotations. Blank lines are skipped; a repeated image
/// id keeps both records and adds a warning.
pub fn parse_polyjson(text: &str) -> Result<PolyJson, ParseError> {
    let mut records = Vec::new();
    let mut warnings = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: RecordJson = parse_json_line(raw, line)?;
        records.push(record_from_json(rec, line)?);
        let id = &records.last().expect("just pushed").image_id;
        if let Some(first) = seen.insert(id.clone(), line) {
            let msg = format!("line {line}: image id {id:?} already used on line {first}");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    Ok(PolyJson { records, warnings })
}

pub(crate) fn parse_json_line<T: serde::de::DeserializeOwned>(
    raw: &str,
    line: usize,
) -> Result<T, ParseError> {
    let de = &mut serde_json::Deserializer::from_str(raw);
    serde_path_to_error::deserialize(de).map_err(|e| ParseError {
        line,
        path: Some(e.path().to_string()),
        message: e.inner().to_string(),
    })
}

fn record_from_json(rec: RecordJson, line: usize) -> Result<AnnotationRecord, ParseError> {
    let located = |path: String, message: String| ParseError {
        line,
        path: Some(path),
        message,
    };
    if rec.image.is_empty() {
        return Err(located("image".into(), "empty image id".into()));
    }
    let [height, width] = rec.size;
    if height == 0 || width == 0 {
        return Err(located(
            "size".into(),
            format!("zero image size {height}x{width}"),
        ));
    }
    let mut instances = Vec::with_capacity(rec.instances.len());
    for (i, inst) in rec.instances.into_iter().enumerate() {
        let polygon = polygon_from_json(&inst.polygon)
            .map_err(|m| located(format!("instances[{i}].polygon"), m))?;
        instances.push(AnnotatedInstance {
            polygon,
            ignore: inst.ignore,
        });
    }
    Ok(AnnotationRecord {
        image_id: rec.image,
        height,
        width,
        instances,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icdar_quad_and_ignore() {
        let r = parse_icdar(
            "a",
            20,
            20,
            "0,0,10,0,10,10,0,10,word\n0,0,10,0,10,10,0,10,###\n",
        )
        .unwrap();
        assert_eq!(r.instances.len(), 2);
        assert_eq!(r.instances[0].polygon.len(), 4);
        assert!(!r.instances[0].ignore);
        assert!(r.instances[1].ignore);
    }

    #[test]
    fn icdar_transcription_with_commas_and_bom() {
        let r = parse_icdar("a", 20, 20, "\u{feff}1,2,3,4,5,6,7,9,a,b\r\n").unwrap();
        assert_eq!(r.instances[0].polygon.vertices()[3], Point2::new(7.0, 9.0));
    }

    #[test]
    fn icdar_short_line_reports_line_number() {
        let err = parse_icdar(
            "a",
            20,
            20,
            "0,0,10,0,10,10,0,10,ok\n\n0,0,10,0,10,10,0,word\n",
        )
        .unwrap_err();
        assert_eq!(err.line, 3);
        let err = parse_icdar("a", 20, 20, "0,0,x,0,10,10,0,10,w\n").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn polyjson_fourteen_vertices() {
        let poly: Vec<String> = (0..14)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 14.0;
                format!("[{},{}]", 50.0 + 20.0 * t.cos(), 50.0 + 10.0 * t.sin())
            })
            .collect();
        let line = format!(
            r#"{{"image":"c1","size":[100,100],"instances":[{{"polygon":[{}],"ignore":false}}]}}"#,
            poly.join(",")
        );
        let parsed = parse_polyjson(&line).unwrap();
        assert_eq!(parsed.records[0].instances[0].polygon.len(), 14);
        assert!(parsed.warnings.is_empty());
    }

    #[test]
    fn polyjson_empty_and_duplicates() {
        assert!(parse_polyjson("").unwrap().records.is_empty());
        let l = r#"{"image":"x","size":[10,10],"instances":[]}"#;
        let parsed = parse_polyjson(&format!("{l}\n{l}\n")).unwrap();
        assert_eq!(parsed.records.len(), 2);
        assert_eq!(parsed.warnings.len(), 1);
    }

    #[test]
    fn polyjson_errors_carry_line_and_path() {
        let text = "{\"image\":\"a\",\"size\":[10,10],\"instances\":[]}\n{\"image\":\"b\",\"size\":[10,10],\"instances\":[{\"polygon\":[[0,0],[1,\"x\"]],\"ignore\":false}]}";
        let err = parse_polyjson(text).unwrap_err();
        assert_eq!(err.line, 2);
        assert!(
            err.path
                .as_deref()
                .unwrap()
                .starts_with("instances[0].polygon"),
            "{err:?}"
        );

        let missing =
            r#"{"image":"a","size":[10,10],"instances":[{"polygon":[[0,0],[1,0],[1,1]]}]}"#;
        assert!(parse_polyjson(missing)
            .unwrap_err()
            .message
            .contains("ignore"));

        let two =
            r#"{"image":"a","size":[10,10],"instances":[{"polygon":[[0,0],[1,0]],"ignore":true}]}"#;
        let err = parse_polyjson(two).unwrap_err();
        assert_eq!(err.path.as_deref(), Some("instances[0].polygon"));
    }

    #[test]
    fn jsonl_round_trip() {
        let r = parse_icdar(
            "img",
            30,
            40,
            "0,0,10,0,10,10,0,10,w\n1.5,0,10,0,10,10,0,10,###",
        )
        .unwrap();
        let text = to_jsonl(std::slice::from_ref(&r));
        let back = parse_polyjson(&text).unwrap();
        assert_eq!(back.records, vec![r]);
    }
}
