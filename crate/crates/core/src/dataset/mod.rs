//! Salience-annotated traffic-light dataset.
//!
//! A [`Dataset`] is a sequence of [`Frame`]s, each carrying pixel-space
//! [`Annotation`]s with status, color, directionality, occlusion and the
//! boolean salience flag. A light is salient when it directly bears on the
//! ego vehicle's next maneuver.
//!
//! Validation here is structural. Semantic salience rules (lane context) need
//! scene knowledge the schema does not carry; annotator consistency is checked
//! instead with [`salience_diff`] between two independent labelings.

mod io;
mod split;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};

pub use io::{parse_dataset, parse_dataset_lenient, serialize_dataset};
pub use split::{split, SplitRatios};

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident, $field:literal { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];
            pub const FIELD: &'static str = $field;

            pub fn as_str(&self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                match s {
                    $($text => Ok($name::$variant),)+
                    other => Err(other.to_string()),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

string_enum!(
    /// Whether the light is lit.
    Status, "status" { On => "on", Off => "off", Undefined => "undefined" }
);
string_enum!(
    /// Lit color; `Undefined` whenever the light is not on.
    Color, "color" { Red => "red", Yellow => "yellow", Green => "green", Undefined => "undefined" }
);
string_enum!(
    Occlusion, "occlusion" { None => "none", Partial => "partial", Major => "major" }
);

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub bbox: BBox,
    pub status: Status,
    pub color: Color,
    pub directional: bool,
    pub occlusion: Occlusion,
    pub salient: bool,
}

impl Annotation {
    /// An unlit, non-directional, unoccluded light.
    pub fn unlit(bbox: BBox, salient: bool) -> Self {
        Self {
            bbox,
            status: Status::Undefined,
            color: Color::Undefined,
            directional: false,
            occlusion: Occlusion::None,
            salient,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub frame_id: String,
    pub image_width: u32,
    pub image_height: u32,
    pub annotations: Vec<Annotation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub frames: Vec<Frame>,
}

impl Dataset {
    pub fn new(frames: Vec<Frame>) -> Self {
        Self { frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn annotation_count(&self) -> usize {
        self.frames.iter().map(|f| f.annotations.len()).sum()
    }
}

/// Which structural rule a [`Violation`] breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rule {
    /// Image width and height must be positive.
    ImageSize,
    /// frame_id must be unique within the dataset.
    DuplicateFrameId,
    /// Coordinates finite, non-negative, `min < max` on both axes.
    BoxGeometry,
    /// Box must lie within the image.
    BoxInImage,
    /// An unlit (`off`/`undefined`) light must have `undefined` color.
    StatusColor,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::ImageSize => "image_size",
            Rule::DuplicateFrameId => "duplicate_frame_id",
            Rule::BoxGeometry => "box_geometry",
            Rule::BoxInImage => "box_in_image",
            Rule::StatusColor => "status_color",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    /// Position of the offending frame in the dataset.
    pub frame_index: usize,
    pub frame_id: String,
    /// `None` for frame-level rules.
    pub annotation: Option<usize>,
    pub rule: Rule,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.annotation {
            Some(i) => write!(
                f,
                "frame {:?} annotation {}: {}: {}",
                self.frame_id, i, self.rule, self.message
            ),
            None => write!(
                f,
                "frame {:?}: {}: {}",
                self.frame_id, self.rule, self.message
            ),
        }
    }
}

fn frame_violations(frame_index: usize, frame: &Frame, out: &mut Vec<Violation>) {
    let mut push = |annotation, rule, message| {
        out.push(Violation {
            frame_index,
            frame_id: frame.frame_id.clone(),
            annotation,
            rule,
            message,
        })
    };
    if frame.image_width == 0 || frame.image_height == 0 {
        push(
            None,
            Rule::ImageSize,
            format!(
                "image size {}x{} must be positive",
                frame.image_width, frame.image_height
            ),
        );
    }
    let (w, h) = (frame.image_width as f64, frame.image_height as f64);
    for (i, ann) in frame.annotations.iter().enumerate() {
        if let Err(message) = ann.bbox.check() {
            push(Some(i), Rule::BoxGeometry, message);
        } else if !ann.bbox.within(w, h) {
            push(
                Some(i),
                Rule::BoxInImage,
                format!("box {} exceeds image {}x{}", ann.bbox, w, h),
            );
        }
        if ann.status != Status::On && ann.color != Color::Undefined {
            push(
                Some(i),
                Rule::StatusColor,
                format!(
                    "status {} requires color undefined, got {}",
                    ann.status, ann.color
                ),
            );
        }
    }
}

/// Lists every broken structural invariant. Empty iff the dataset is valid.
pub fn validate(d: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (index, frame) in d.frames.iter().enumerate() {
        if !seen.insert(frame.frame_id.as_str()) {
            out.push(Violation {
                frame_index: index,
                frame_id: frame.frame_id.clone(),
                annotation: None,
                rule: Rule::DuplicateFrameId,
                message: "frame_id already used by an earlier frame".to_string(),
            });
        }
        frame_violations(index, frame, &mut out);
    }
    out
}

/// Light-type key used for the per-category frequency table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CategoryKey {
    pub salient: bool,
    pub color: Color,
    pub status: Status,
    pub directional: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetStats {
    pub total_annotations: usize,
    pub salient_count: usize,
    pub non_salient_count: usize,
    pub per_category: BTreeMap<CategoryKey, usize>,
}

impl DatasetStats {
    /// Folds `other` into `self`.
    pub fn merge(&mut self, other: &DatasetStats) {
        self.total_annotations += other.total_annotations;
        self.salient_count += other.salient_count;
        self.non_salient_count += other.non_salient_count;
        for (k, v) in &other.per_category {
            *self.per_category.entry(*k).or_default() += v;
        }
    }
}

pub fn stats(d: &Dataset) -> DatasetStats {
    let mut s = DatasetStats::default();
    for ann in d.frames.iter().flat_map(|f| &f.annotations) {
        s.total_annotations += 1;
        if ann.salient {
            s.salient_count += 1;
        } else {
            s.non_salient_count += 1;
        }
        let key = CategoryKey {
            salient: ann.salient,
            color: ann.color,
            status: ann.status,
            directional: ann.directional,
        };
        *s.per_category.entry(key).or_default() += 1;
    }
    s
}

/// Header of the stats CSV; `*` in a key column means "any".
pub const STATS_HEADER: [&str; 5] = ["salient", "color", "status", "directional", "count"];

/// Stats as CSV: three summary rows (all, salient, non-salient) followed by
/// one row per light category.
pub fn write_stats_csv(s: &DatasetStats) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(STATS_HEADER).expect("in-memory write");
    let summary = [
        ("*", s.total_annotations),
        ("true", s.salient_count),
        ("false", s.non_salient_count),
    ];
    for (salient, n) in summary {
        w.write_record([salient, "*", "*", "*", &n.to_string()])
            .expect("in-memory write");
    }
    for (k, n) in &s.per_category {
        w.write_record([
            &k.salient.to_string(),
            k.color.as_str(),
            k.status.as_str(),
            &k.directional.to_string(),
            &n.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Disagreement {
    pub frame_id: String,
    pub annotation: usize,
    pub salient_a: bool,
    pub salient_b: bool,
}

/// Compares the salience flags of two labelings of the same frames.
///
/// Frames are matched by `frame_id`; annotations within a frame are matched by
/// position, so both labelings must list boxes in the same order. Output
/// follows the frame order of `a`.
pub fn salience_diff(a: &Dataset, b: &Dataset) -> Result<Vec<Disagreement>> {
    let by_id: HashMap<&str, &Frame> = b.frames.iter().map(|f| (f.frame_id.as_str(), f)).collect();
    if a.frames.len() != b.frames.len() || by_id.len() != b.frames.len() {
        return Err(Error::FrameMismatch(format!(
            "{} frames vs {} frames",
            a.frames.len(),
            b.frames.len()
        )));
    }
    let mut out = Vec::new();
    for fa in &a.frames {
        let fb = by_id.get(fa.frame_id.as_str()).ok_or_else(|| {
            Error::FrameMismatch(format!(
                "frame {:?} missing from second dataset",
                fa.frame_id
            ))
        })?;
        if fa.annotations.len() != fb.annotations.len() {
            return Err(Error::FrameMismatch(format!(
                "frame {:?} has {} annotations vs {}",
                fa.frame_id,
                fa.annotations.len(),
                fb.annotations.len()
            )));
        }
        for (i, (x, y)) in fa.annotations.iter().zip(&fb.annotations).enumerate() {
            if x.salient != y.salient {
                out.push(Disagreement {
                    frame_id: fa.frame_id.clone(),
                    annotation: i,
                    salient_a: x.salient,
                    salient_b: y.salient,
                });
            }
        }
    }
    Ok(out)
}
