use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix3x4};

use crate::error::{Error, Result};
use crate::geometry::Calibration;

/// Image size assumed when a calibration file does not declare one.
pub const DEFAULT_IMAGE_WIDTH: u32 = 1242;
pub const DEFAULT_IMAGE_HEIGHT: u32 = 375;

const IMAGE_SIZE_KEY: &str = "image_size";

fn parse_floats(key: &str, value: &str, arity: usize) -> Result<Vec<f64>> {
    let vals = value
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| Error::Calib(format!("{key}: malformed float {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    if vals.len() != arity {
        return Err(Error::Calib(format!(
            "{key}: expected {arity} values, found {}",
            vals.len()
        )));
    }
    Ok(vals)
}

/// Parses the calibration and reports whether the file declared its own
/// image size (a non-KITTI `image_size: W H` line).
pub(crate) fn parse_calib_with_size(text: &str) -> Result<(Calibration, Option<(u32, u32)>)> {
    let mut p2 = None;
    let mut r0 = None;
    let mut tr = None;
    let mut size = None;
    for line in text.lines() {
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        let key = key.trim();
        match key {
            "P2" => p2 = Some(Matrix3x4::from_row_slice(&parse_floats(key, value, 12)?)),
            "R0_rect" => r0 = Some(Matrix3::from_row_slice(&parse_floats(key, value, 9)?)),
            "Tr_velo_to_cam" => {
                tr = Some(Matrix3x4::from_row_slice(&parse_floats(key, value, 12)?))
            }
            IMAGE_SIZE_KEY => {
                let v = parse_floats(key, value, 2)?;
                if v.iter().any(|d| d.fract() != 0.0 || *d < 1.0 || *d > u32::MAX as f64) {
                    return Err(Error::Calib(format!("{key}: invalid image size")));
                }
                size = Some((v[0] as u32, v[1] as u32));
            }
            _ => {}
        }
    }
    let missing = |k: &str| Error::Calib(format!("missing key {k}"));
    let (w, h) = size.unwrap_or((DEFAULT_IMAGE_WIDTH, DEFAULT_IMAGE_HEIGHT));
    let calib = Calibration::new(
        p2.ok_or_else(|| missing("P2"))?,
        r0.ok_or_else(|| missing("R0_rect"))?,
        tr.ok_or_else(|| missing("Tr_velo_to_cam"))?,
        w,
        h,
    )?;
    Ok((calib, size))
}

/// Parses a KITTI object calibration file (keys `P2`, `R0_rect`,
/// `Tr_velo_to_cam`; other keys are ignored).
pub fn parse_calib(text: &str) -> Result<Calibration> {
    parse_calib_with_size(text).map(|(c, _)| c)
}

/// KITTI writes `%.12e`; values that need more digits fall back to the
/// shortest exact representation.
fn format_sci(v: f64) -> String {
    let fixed = format!("{v:.12e}");
    let s = if fixed.parse::<f64>().ok() == Some(v) {
        fixed
    } else {
        format!("{v:e}")
    };
    let (mantissa, exp) = s.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

fn write_row(out: &mut String, key: &str, vals: impl Iterator<Item = f64>) {
    out.push_str(key);
    out.push(':');
    for v in vals {
        out.push(' ');
        out.push_str(&format_sci(v));
    }
    out.push('\n');
}

/// Writes `P2`, `R0_rect`, `Tr_velo_to_cam` and the image size.
pub fn write_calib(calib: &Calibration) -> String {
    let mut s = String::new();
    // nalgebra iterates column-major; KITTI rows are row-major
    write_row(&mut s, "P2", calib.p2.transpose().iter().copied());
    write_row(&mut s, "R0_rect", calib.r0_rect.transpose().iter().copied());
    write_row(
        &mut s,
        "Tr_velo_to_cam",
        calib.tr_velo_to_cam.transpose().iter().copied(),
    );
    let _ = writeln!(
        s,
        "{IMAGE_SIZE_KEY}: {} {}",
        calib.image_width, calib.image_height
    );
    s
}
