use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Box3D, Point3};

/// One line of a KITTI object label file.
///
/// `location` is the bottom-face center in the camera frame; dims are
/// stored KITTI-ordered as (h, w, l). DontCare rows keep their -1 sentinels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub kind: String,
    pub truncated: f64,
    pub occluded: i32,
    pub alpha: f64,
    /// left, top, right, bottom
    pub bbox: [f64; 4],
    /// h, w, l
    pub dims: [f64; 3],
    pub location: [f64; 3],
    pub rotation_y: f64,
    pub score: Option<f64>,
}

const FIELDS: [&str; 16] = [
    "type",
    "truncated",
    "occluded",
    "alpha",
    "bbox_left",
    "bbox_top",
    "bbox_right",
    "bbox_bottom",
    "height",
    "width",
    "length",
    "x",
    "y",
    "z",
    "rotation_y",
    "score",
];

impl LabelRecord {
    pub fn bbox_height(&self) -> f64 {
        self.bbox[3] - self.bbox[1]
    }

    pub fn is_dont_care(&self) -> bool {
        self.kind == "DontCare"
    }

    /// Oriented box with a volumetric center. Fails on non-positive dims
    /// (e.g. DontCare rows).
    pub fn to_box(&self) -> Result<Box3D> {
        let [h, w, l] = self.dims;
        let [x, y, z] = self.location;
        let b = Box3D::new(Point3::new(x, y - h / 2.0, z), l, w, h, self.rotation_y)?;
        Ok(b.with_score(self.score.unwrap_or(1.0)))
    }

    /// Label for a box; `bbox` and the observation fields are left to the caller.
    pub fn from_box(kind: &str, b: &Box3D, bbox: [f64; 4], score: Option<f64>) -> Self {
        Self {
            kind: kind.to_owned(),
            truncated: 0.0,
            occluded: 0,
            alpha: crate::geometry::normalize_angle(b.theta - b.cx.atan2(b.cz)),
            bbox,
            dims: [b.h, b.w, b.l],
            location: [b.cx, b.bottom_y(), b.cz],
            rotation_y: b.theta,
            score,
        }
    }
}

fn field_err(line: usize, field: usize, msg: impl Into<String>) -> Error {
    Error::Label {
        line,
        field: FIELDS[field],
        msg: msg.into(),
    }
}

fn parse_f64(tok: &str, line: usize, field: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| field_err(line, field, format!("not a number: {tok:?}")))
}

/// Parses a KITTI label file. Blank lines are skipped; line numbers in
/// errors are 1-based.
pub fn parse_label_file(text: &str) -> Result<Vec<LabelRecord>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks: Vec<&str> = raw.split_whitespace().collect();
        if toks.is_empty() {
            continue;
        }
        if toks.len() != 15 && toks.len() != 16 {
            return Err(Error::Label {
                line,
                field: if toks.len() < 15 { FIELDS[toks.len()] } else { "score" },
                msg: format!("expected 15 or 16 fields, found {}", toks.len()),
            });
        }
        let num = |k: usize| parse_f64(toks[k], line, k);
        let occluded = match toks[2].parse::<i32>() {
            Ok(v) => v,
            // some exporters write the occlusion level as a float
            Err(_) => {
                let v = num(2)?;
                if v.fract() != 0.0 {
                    return Err(field_err(line, 2, format!("not an integer: {:?}", toks[2])));
                }
                v as i32
            }
        };
        let rec = LabelRecord {
            kind: toks[0].to_owned(),
            truncated: num(1)?,
            occluded,
            alpha: num(3)?,
            bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
            dims: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if toks.len() == 16 { Some(num(15)?) } else { None },
        };
        if rec.bbox[2].is_nan() || rec.bbox[2] <= rec.bbox[0] {
            return Err(field_err(line, 6, "right edge must exceed left edge"));
        }
        if rec.bbox[3].is_nan() || rec.bbox[3] <= rec.bbox[1] {
            return Err(field_err(line, 7, "bottom edge must exceed top edge"));
        }
        out.push(rec);
    }
    Ok(out)
}

/// Serializes labels with the devkit's two-decimal convention. Scores are
/// written with the shortest representation that parses back exactly.
pub fn write_label_file(records: &[LabelRecord]) -> String {
    let mut s = String::new();
    for r in records {
        let _ = write!(
            s,
            "{} {:.2} {} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2} {:.2}",
            r.kind,
            r.truncated,
            r.occluded,
            r.alpha,
            r.bbox[0],
            r.bbox[1],
            r.bbox[2],
            r.bbox[3],
            r.dims[0],
            r.dims[1],
            r.dims[2],
            r.location[0],
            r.location[1],
            r.location[2],
            r.rotation_y,
        );
        if let Some(score) = r.score {
            let _ = write!(s, " {score}");
        }
        s.push('\n');
    }
    s
}

/// Rounds to the two-decimal grid used by the label format.
pub(crate) fn round2(v: f64) -> f64 {
    format!("{v:.2}").parse().unwrap_or(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIXTURE: &str = include_str!("../../tests/fixtures/000000.txt");

    #[test]
    fn parses_fixture_line() {
        let recs = parse_label_file(FIXTURE).unwrap();
        assert_eq!(recs.len(), 1);
        let r = &recs[0];
        assert_eq!(r.kind, "Pedestrian");
        assert_eq!(r.location, [1.84, 1.47, 8.41]);
        assert_eq!(r.dims, [1.89, 0.48, 1.20]);
        assert_eq!(r.bbox, [712.40, 143.00, 810.73, 307.92]);
        assert_eq!(r.rotation_y, 0.01);
        assert_eq!(r.score, None);
        assert_eq!(write_label_file(&recs), FIXTURE);
    }

    #[test]
    fn empty_and_scored() {
        assert!(parse_label_file("").unwrap().is_empty());
        assert!(parse_label_file("\n\n").unwrap().is_empty());
        assert_eq!(write_label_file(&[]), "");
        let r = parse_label_file("Car 0.00 0 1.00 1 2 3 4 1.5 1.6 3.9 0 1.7 20 0.5 0.8734123")
            .unwrap();
        assert_eq!(r[0].score, Some(0.8734123));
        assert_eq!(parse_label_file(&write_label_file(&r)).unwrap(), r);
    }

    #[test]
    fn dont_care_sentinels_preserved() {
        let text = "DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n";
        let recs = parse_label_file(text).unwrap();
        assert_eq!(recs[0].dims, [-1.0, -1.0, -1.0]);
        assert_eq!(recs[0].occluded, -1);
        assert!(recs[0].to_box().is_err());
        let written = write_label_file(&recs);
        assert!(written.contains(" -1.00 -1.00 -1.00 -1000.00"), "{written}");
        assert_eq!(parse_label_file(&written).unwrap(), recs);
    }

    #[test]
    fn malformed_lines_name_line_and_field() {
        let err = parse_label_file("Car 0 0 0 1 2 3 4 1 1 1 0 0 5 0\nCar 0 0 x 1 2 3 4 1 1 1 0 0 5 0")
            .unwrap_err();
        match err {
            Error::Label { line, field, .. } => {
                assert_eq!(line, 2);
                assert_eq!(field, "alpha");
            }
            e => panic!("unexpected {e}"),
        }
        let err = parse_label_file("Car 0 0 0 1 2 3").unwrap_err();
        assert!(matches!(err, Error::Label { line: 1, field: "bbox_bottom", .. }), "{err}");
        let err = parse_label_file("Car 0 0 0 5 2 3 4 1 1 1 0 0 5 0").unwrap_err();
        assert!(matches!(err, Error::Label { field: "bbox_right", .. }));
    }

    #[test]
    fn box_conversion_uses_bottom_face() {
        let r = &parse_label_file(FIXTURE).unwrap()[0];
        let b = r.to_box().unwrap();
        assert!((b.cy - (1.47 - 1.89 / 2.0)).abs() < 1e-12);
        assert!((b.bottom_y() - 1.47).abs() < 1e-12);
        assert_eq!((b.l, b.w, b.h), (1.20, 0.48, 1.89));
    }
}
