use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// 8-bit binary PGM with linear min–max scaling. Returns the bytes and the
/// `(min, max)` used.
pub fn encode_pgm(image: &Tensor) -> Result<(Vec<u8>, f64, f64)> {
    let (h, w) = match image.shape() {
        &[h, w] => (h, w),
        other => {
            return Err(Error::Shape(format!(
                "PGM needs an H×W image, got {other:?}"
            )))
        }
    };
    let lo = image.data().iter().copied().fold(f64::INFINITY, f64::min);
    let hi = image
        .data()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Numerical("cannot preview a non-finite image".into()));
    }
    let span = hi - lo;
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend(image.data().iter().map(|&v| {
        if span > 0.0 {
            ((v - lo) / span * 255.0).round() as u8
        } else {
            0
        }
    }));
    Ok((out, lo, hi))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".range");
    PathBuf::from(s)
}

/// Write `path` as PGM and `path.range` holding `min max` of the image.
pub fn write_pgm(path: &Path, image: &Tensor) -> Result<()> {
    let (bytes, lo, hi) = encode_pgm(image)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let side = sidecar(path);
    fs::write(&side, format!("min {lo:e}\nmax {hi:e}\n")).map_err(|e| Error::io(&side, e))
}
