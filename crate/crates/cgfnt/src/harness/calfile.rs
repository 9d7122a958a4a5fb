//! Self-describing binary calibration files.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic    9 bytes  "CGFNT-CAL"
//! version  u32      currently 1
//! kind     u8       0 = multivariate, 1 = univariate
//! n, p, s_reps, seed, redraw_count   u64 each
//! point set: seed u64, radius f64, dim u64, count u64,
//!            count * dim f64 (point-major)
//! mean_h, sd_h, mean_d, sd_d         f64 each
//! null_t   s_reps * f64              sorted ascending
//! sha256   32 bytes                  over everything above
//! ```
//!
//! The embedded point set is what makes a calibration transferable: the
//! null distribution is conditional on the evaluation points, so a file
//! that did not carry them could silently calibrate the wrong statistic.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::calibration::{CalKind, NullCalibration};
use crate::ecgf::EvalPointSet;
use crate::error::{Error, Result};

const MAGIC: &[u8; 9] = b"CGFNT-CAL";
const VERSION: u32 = 1;

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

/// Serialize a calibration to its byte representation.
pub fn calibration_to_bytes(cal: &NullCalibration) -> Vec<u8> {
    let mut buf = Vec::with_capacity(128 + 8 * cal.null_t.len() + 8 * cal.p * cal.point_set.len());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match cal.kind {
        CalKind::Multivariate => 0,
        CalKind::Univariate => 1,
    });
    put_u64(&mut buf, cal.n as u64);
    put_u64(&mut buf, cal.p as u64);
    put_u64(&mut buf, cal.s_reps as u64);
    put_u64(&mut buf, cal.seed);
    put_u64(&mut buf, cal.redraw_count as u64);
    put_u64(&mut buf, cal.point_set.seed());
    put_f64(&mut buf, cal.point_set.radius());
    put_u64(&mut buf, cal.point_set.dim() as u64);
    put_u64(&mut buf, cal.point_set.len() as u64);
    for t in cal.point_set.points() {
        for &c in t.iter() {
            put_f64(&mut buf, c);
        }
    }
    put_f64(&mut buf, cal.mean_h);
    put_f64(&mut buf, cal.sd_h);
    put_f64(&mut buf, cal.mean_d);
    put_f64(&mut buf, cal.sd_d);
    for &v in &cal.null_t {
        put_f64(&mut buf, v);
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.pos + len > self.buf.len() {
            return Err(Error::CorruptCalibration("truncated calibration file".into()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Deserialize a calibration, validating magic, version, checksum, and
/// internal sizes.
pub fn calibration_from_bytes(buf: &[u8]) -> Result<NullCalibration> {
    if buf.len() < MAGIC.len() + 4 + 32 {
        return Err(Error::CorruptCalibration("file too short".into()));
    }
    let (body, stored_digest) = buf.split_at(buf.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != stored_digest {
        return Err(Error::CorruptCalibration("checksum mismatch".into()));
    }
    let mut r = Reader { buf: body, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::CorruptCalibration("bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(Error::CorruptCalibration(format!(
            "unsupported calibration format version {version} (expected {VERSION})"
        )));
    }
    let kind = match r.take(1)?[0] {
        0 => CalKind::Multivariate,
        1 => CalKind::Univariate,
        k => return Err(Error::CorruptCalibration(format!("unknown kind byte {k}"))),
    };
    let n = r.u64()? as usize;
    let p = r.u64()? as usize;
    let s_reps = r.u64()? as usize;
    let seed = r.u64()?;
    let redraw_count = r.u64()? as usize;
    let pts_seed = r.u64()?;
    let radius = r.f64()?;
    let dim = r.u64()? as usize;
    let count = r.u64()? as usize;
    if dim != p || dim == 0 || count == 0 || count > 1 << 30 || s_reps > 1 << 30 {
        return Err(Error::CorruptCalibration("implausible header sizes".into()));
    }
    let mut points = Vec::with_capacity(count);
    for _ in 0..count {
        let mut t = nalgebra::DVector::zeros(dim);
        for j in 0..dim {
            t[j] = r.f64()?;
        }
        points.push(t);
    }
    let point_set = EvalPointSet::from_points(points, radius, pts_seed)?;
    let mean_h = r.f64()?;
    let sd_h = r.f64()?;
    let mean_d = r.f64()?;
    let sd_d = r.f64()?;
    let mut null_t = Vec::with_capacity(s_reps);
    for _ in 0..s_reps {
        null_t.push(r.f64()?);
    }
    if r.pos != body.len() {
        return Err(Error::CorruptCalibration("trailing bytes".into()));
    }
    if null_t.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::CorruptCalibration("null sample not sorted".into()));
    }
    Ok(NullCalibration {
        n,
        p,
        point_set,
        s_reps,
        mean_h,
        sd_h,
        mean_d,
        sd_d,
        null_t,
        kind,
        seed,
        redraw_count,
    })
}

/// Write a calibration file.
pub fn write_calibration(path: &Path, cal: &NullCalibration) -> Result<()> {
    std::fs::write(path, calibration_to_bytes(cal))?;
    Ok(())
}

/// Read a calibration file.
pub fn read_calibration(path: &Path) -> Result<NullCalibration> {
    let buf = std::fs::read(path)?;
    calibration_from_bytes(&buf)
}
