//! JSON-lines reader and writer for annotation files.
//!
//! One frame per line:
//!
//! ```text
//! {"frame_id":"f1","image_width":1280,"image_height":960,"annotations":[
//!   {"x_min":10.0,"y_min":20.0,"x_max":30.0,"y_max":60.0,"status":"on","color":"red",
//!    "directional":false,"occlusion":"none","salient":true}]}
//! ```
//!
//! (shown wrapped; a record never spans lines). Unknown fields are rejected.
//! Blank lines are skipped.

use serde::{Deserialize, Serialize};

use super::{validate, Annotation, Color, Dataset, Frame, Occlusion, Rule, Status};
use crate::bbox::BBox;
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    frame_id: String,
    image_width: u32,
    image_height: u32,
    annotations: Vec<RawAnnotation>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnnotation {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
    status: String,
    color: String,
    directional: bool,
    occlusion: String,
    salient: bool,
}

fn parse_enum<T: std::str::FromStr<Err = String>>(
    line: usize,
    field: &'static str,
    value: &str,
) -> Result<T> {
    value
        .parse()
        .map_err(|value| Error::UnknownEnum { line, field, value })
}

fn decode_frame(line: usize, text: &str) -> Result<Frame> {
    let raw: RawFrame = serde_json::from_str(text).map_err(|e| Error::Malformed {
        line,
        message: e.to_string(),
    })?;
    let annotations = raw
        .annotations
        .into_iter()
        .map(|a| {
            Ok(Annotation {
                bbox: BBox::new(a.x_min, a.y_min, a.x_max, a.y_max),
                status: parse_enum(line, Status::FIELD, &a.status)?,
                color: parse_enum(line, Color::FIELD, &a.color)?,
                directional: a.directional,
                occlusion: parse_enum(line, Occlusion::FIELD, &a.occlusion)?,
                salient: a.salient,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Frame {
        frame_id: raw.frame_id,
        image_width: raw.image_width,
        image_height: raw.image_height,
        annotations,
    })
}

/// Decodes records without checking cross-field invariants.
///
/// Returns the dataset and, per frame, the 1-based source line it came from.
/// Use [`super::validate`] on the result to list every structural problem.
pub fn parse_dataset_lenient(text: &str) -> Result<(Dataset, Vec<usize>)> {
    let mut frames = Vec::new();
    let mut lines = Vec::new();
    for (i, raw_line) in text.lines().enumerate() {
        if raw_line.trim().is_empty() {
            continue;
        }
        frames.push(decode_frame(i + 1, raw_line)?);
        lines.push(i + 1);
    }
    Ok((Dataset { frames }, lines))
}

/// Parses an annotation file, rejecting any record that breaks an invariant.
///
/// Errors carry the 1-based line of the offending record.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let (dataset, lines) = parse_dataset_lenient(text)?;
    if let Some(v) = validate(&dataset).into_iter().next() {
        let line = lines[v.frame_index];
        let message = match v.annotation {
            Some(i) => format!("annotation {i}: {}", v.message),
            None => v.message,
        };
        return Err(match v.rule {
            Rule::BoxGeometry | Rule::BoxInImage => Error::InvalidBox { line, message },
            Rule::DuplicateFrameId => Error::DuplicateFrame {
                line,
                frame_id: v.frame_id,
            },
            rule => Error::Invariant {
                line,
                rule: rule.name(),
                message,
            },
        });
    }
    Ok(dataset)
}

/// Writes one JSON record per frame, each terminated by `\n`.
pub fn serialize_dataset(d: &Dataset) -> String {
    let mut out = String::new();
    for frame in &d.frames {
        let raw = RawFrame {
            frame_id: frame.frame_id.clone(),
            image_width: frame.image_width,
            image_height: frame.image_height,
            annotations: frame
                .annotations
                .iter()
                .map(|a| RawAnnotation {
                    x_min: a.bbox.x_min,
                    y_min: a.bbox.y_min,
                    x_max: a.bbox.x_max,
                    y_max: a.bbox.y_max,
                    status: a.status.as_str().to_string(),
                    color: a.color.as_str().to_string(),
                    directional: a.directional,
                    occlusion: a.occlusion.as_str().to_string(),
                    salient: a.salient,
                })
                .collect(),
        };
        // Finite floats, strings and bools always encode.
        out.push_str(&serde_json::to_string(&raw).expect("frame record encodes"));
        out.push('\n');
    }
    out
}
