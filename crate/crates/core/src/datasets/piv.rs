//! DaVis text parsing and vorticity preprocessing for planar PIV snapshots.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::numerics::SampleMatrix;

pub const PIV_NY: usize = 740;
pub const PIV_NX: usize = 545;
/// Snapshots are divided by this constant before centring.
pub const PIV_SCALE: f64 = 2.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RejectReason {
    ParseFailure,
    WrongCount,
    ContainsNan,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ParseFailure => "parse-failure",
            Self::WrongCount => "wrong-count",
            Self::ContainsNan => "contains-nan",
        })
    }
}

fn reject(reason: RejectReason, detail: impl Into<String>) -> Error {
    Error::FrameRejected {
        reason,
        detail: detail.into(),
    }
}

/// Velocity components on the `(ny, nx)` grid, `x` along axis 1.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityFrame {
    pub vx: Array2<f64>,
    pub vy: Array2<f64>,
}

/// Parses a full-resolution `740 x 545` DaVis export.
pub fn parse_davis(text: &[u8]) -> Result<VelocityFrame> {
    parse_davis_with_shape(text, PIV_NY, PIV_NX)
}

/// Parses `x;y;Vx;Vy` rows into `(ny, nx)` grids. Blank lines and `#`
/// comment lines are ignored; coordinates are discarded.
pub fn parse_davis_with_shape(text: &[u8], ny: usize, nx: usize) -> Result<VelocityFrame> {
    let text = std::str::from_utf8(text)
        .map_err(|e| reject(RejectReason::ParseFailure, format!("not UTF-8: {e}")))?;
    let expected = ny * nx;
    let mut vx = Vec::with_capacity(expected);
    let mut vy = Vec::with_capacity(expected);
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(';');
        let mut next = |name: &str| -> Result<f64> {
            let f = fields.next().ok_or_else(|| {
                reject(
                    RejectReason::ParseFailure,
                    format!("line {}: missing {name}", lineno + 1),
                )
            })?;
            f.trim().parse::<f64>().map_err(|e| {
                reject(
                    RejectReason::ParseFailure,
                    format!("line {}: {name} {f:?}: {e}", lineno + 1),
                )
            })
        };
        next("x")?;
        next("y")?;
        let u = next("Vx")?;
        let v = next("Vy")?;
        if fields.next().is_some() {
            return Err(reject(
                RejectReason::ParseFailure,
                format!("line {}: more than four fields", lineno + 1),
            ));
        }
        vx.push(u);
        vy.push(v);
    }
    if vx.len() != expected {
        return Err(reject(
            RejectReason::WrongCount,
            format!("{} points, expected {expected}", vx.len()),
        ));
    }
    if vx.iter().chain(&vy).any(|v| v.is_nan()) {
        return Err(reject(RejectReason::ContainsNan, "NaN in Vx or Vy"));
    }
    Ok(VelocityFrame {
        vx: Array2::from_shape_vec((ny, nx), vx).expect("count checked"),
        vy: Array2::from_shape_vec((ny, nx), vy).expect("count checked"),
    })
}

/// Writes a frame as `x;y;Vx;Vy` rows with integer pixel coordinates.
pub fn write_davis(mut w: impl Write, frame: &VelocityFrame) -> Result<()> {
    let (ny, nx) = frame.vx.dim();
    let mut line = String::new();
    for i in 0..ny {
        for j in 0..nx {
            line.clear();
            use std::fmt::Write as _;
            let _ = writeln!(line, "{j};{i};{};{}", frame.vx[[i, j]], frame.vy[[i, j]]);
            w.write_all(line.as_bytes())?;
        }
    }
    Ok(())
}

/// Unit-spacing derivative along `axis`: central differences inside,
/// one-sided first differences at the two boundaries.
fn gradient(f: &Array2<f64>, axis: usize) -> Result<Array2<f64>> {
    let n = f.len_of(Axis(axis));
    if n < 2 {
        return Err(domain("gradient needs at least two points along each axis"));
    }
    let mut g = Array2::zeros(f.dim());
    for (src, mut dst) in f.lanes(Axis(axis)).into_iter().zip(g.lanes_mut(Axis(axis))) {
        dst[0] = src[1] - src[0];
        dst[n - 1] = src[n - 1] - src[n - 2];
        for k in 1..n - 1 {
            dst[k] = 0.5 * (src[k + 1] - src[k - 1]);
        }
    }
    Ok(g)
}

/// `omega = dVy/dx - dVx/dy` with `x` along axis 1 and `y` along axis 0.
pub fn vorticity(vx: &Array2<f64>, vy: &Array2<f64>) -> Result<Array2<f64>> {
    if vx.dim() != vy.dim() {
        return Err(crate::error::dim_mismatch(format!(
            "vorticity of {:?} and {:?} grids",
            vx.dim(),
            vy.dim()
        )));
    }
    Ok(gradient(vy, 1)? - gradient(vx, 0)?)
}

/// `numpy.linspace(0, last, count)` cast to integers (truncation).
pub fn subsample_indices(last: usize, count: usize) -> Vec<usize> {
    if count == 1 {
        return vec![0];
    }
    let step = last as f64 / (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i == count - 1 {
                last
            } else {
                (i as f64 * step) as usize
            }
        })
        .collect()
}

/// Values at the `ny x nx` index grid over the full field, row-major.
pub fn subsample_grid(omega: &Array2<f64>, ny: usize, nx: usize) -> Result<Vec<f64>> {
    let (h, w) = omega.dim();
    if ny == 0 || nx == 0 || ny > h || nx > w {
        return Err(domain(format!("cannot subsample {h}x{w} to {ny}x{nx}")));
    }
    let rows = subsample_indices(h - 1, ny);
    let cols = subsample_indices(w - 1, nx);
    let mut out = Vec::with_capacity(ny * nx);
    for &i in &rows {
        for &j in &cols {
            out.push(omega[[i, j]]);
        }
    }
    Ok(out)
}

/// Result of preprocessing a directory of snapshots.
#[derive(Clone, Debug)]
pub struct PivPrepared {
    /// One matrix per requested grid, scaled and centred over all frames.
    pub matrices: Vec<((usize, usize), SampleMatrix)>,
    pub retained: Vec<String>,
    pub skipped: Vec<(String, RejectReason)>,
}

fn snapshot_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("Serie_") && n.ends_with(".txt"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Reads every `Serie_*.txt` under `dir` (sorted by name), rejects invalid
/// frames, computes vorticity on the full grid, subsamples to each grid,
/// stacks, divides by [`PIV_SCALE`] and centres each column over all frames.
pub fn prepare_piv(dir: &Path, grids: &[(usize, usize)], shape: (usize, usize)) -> Result<PivPrepared> {
    let files = snapshot_files(dir)?;
    let mut rows: Vec<Vec<Vec<f64>>> = vec![Vec::new(); grids.len()];
    let mut retained = Vec::new();
    let mut skipped = Vec::new();
    for path in &files {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let bytes = std::fs::read(path)?;
        let frame = match parse_davis_with_shape(&bytes, shape.0, shape.1) {
            Ok(f) => f,
            Err(Error::FrameRejected { reason, .. }) => {
                skipped.push((name, reason));
                continue;
            }
            Err(e) => return Err(e),
        };
        let omega = vorticity(&frame.vx, &frame.vy)?;
        for (g, &(ny, nx)) in grids.iter().enumerate() {
            rows[g].push(subsample_grid(&omega, ny, nx)?);
        }
        retained.push(name);
    }
    if retained.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no valid snapshots in {} ({} rejected)",
            dir.display(),
            skipped.len()
        )));
    }
    let n = retained.len();
    let matrices = grids
        .iter()
        .zip(rows)
        .map(|(&(ny, nx), r)| {
            let flat: Vec<f64> = r.into_iter().flatten().map(|v| v / PIV_SCALE).collect();
            let mut m = SampleMatrix::from_vec(n, ny * nx, flat)?;
            m.center_columns();
            Ok(((ny, nx), m))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PivPrepared {
        matrices,
        retained,
        skipped,
    })
}

/// Single-grid pipeline with optional truncation to the first `trunc`
/// coordinates (re-centred afterwards).
pub fn piv_pipeline(
    dir: &Path,
    grid: (usize, usize),
    trunc: Option<usize>,
    shape: (usize, usize),
) -> Result<SampleMatrix> {
    let mut prepared = prepare_piv(dir, &[grid], shape)?;
    let (_, m) = prepared.matrices.pop().expect("one grid");
    match trunc {
        None => Ok(m),
        Some(d) => {
            let mut t = m.truncate_cols(d)?;
            t.center_columns();
            Ok(t)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_frame(ny: usize, nx: usize, f: impl Fn(f64, f64) -> (f64, f64)) -> VelocityFrame {
        let mut vx = Array2::zeros((ny, nx));
        let mut vy = Array2::zeros((ny, nx));
        for i in 0..ny {
            for j in 0..nx {
                let (u, v) = f(j as f64, i as f64);
                vx[[i, j]] = u;
                vy[[i, j]] = v;
            }
        }
        VelocityFrame { vx, vy }
    }

    fn davis_text(frame: &VelocityFrame) -> Vec<u8> {
        let mut buf = Vec::new();
        write_davis(&mut buf, frame).unwrap();
        buf
    }

    #[test]
    fn parse_round_trip_small() {
        let frame = linear_frame(3, 4, |x, y| (0.5 * x - y, 1.25 * y));
        let parsed = parse_davis_with_shape(&davis_text(&frame), 3, 4).unwrap();
        assert_eq!(parsed, frame);
    }

    #[test]
    fn parse_skips_header_and_blank_lines() {
        let text = b"#DaVis header\n0;0;1;2\n\n1;0;3;4\n";
        let f = parse_davis_with_shape(text, 1, 2).unwrap();
        assert_eq!(f.vx, ndarray::array![[1.0, 3.0]]);
        assert_eq!(f.vy, ndarray::array![[2.0, 4.0]]);
    }

    fn reason(r: Result<VelocityFrame>) -> RejectReason {
        match r {
            Err(Error::FrameRejected { reason, .. }) => reason,
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn rejection_reasons() {
        assert_eq!(reason(parse_davis_with_shape(b"0;0;1;x\n", 1, 1)), RejectReason::ParseFailure);
        assert_eq!(reason(parse_davis_with_shape(b"0;0;1\n", 1, 1)), RejectReason::ParseFailure);
        assert_eq!(reason(parse_davis_with_shape(b"0;0;1;2;3\n", 1, 1)), RejectReason::ParseFailure);
        assert_eq!(reason(parse_davis_with_shape(b"0;0;1;2\n", 1, 2)), RejectReason::WrongCount);
        assert_eq!(reason(parse_davis_with_shape(b"0;0;NaN;2\n", 1, 1)), RejectReason::ContainsNan);
        // NaN coordinates are tolerated; only velocities are screened
        assert!(parse_davis_with_shape(b"NaN;0;1;2\n", 1, 1).is_ok());
    }

    #[test]
    fn vorticity_of_linear_fields() {
        let shear = linear_frame(5, 7, |_, y| (y, 0.0));
        let w = vorticity(&shear.vx, &shear.vy).unwrap();
        assert!(w.iter().all(|v| *v == -1.0));
        let other = linear_frame(5, 7, |x, _| (0.0, x));
        let w = vorticity(&other.vx, &other.vy).unwrap();
        assert!(w.iter().all(|v| *v == 1.0));
        let rot = linear_frame(5, 7, |x, y| (-y, x));
        let w = vorticity(&rot.vx, &rot.vy).unwrap();
        assert!(w.iter().all(|v| *v == 2.0));
        assert!(vorticity(&Array2::zeros((2, 2)), &Array2::zeros((2, 3))).is_err());
    }

    #[test]
    fn gradient_matches_numpy_convention() {
        let f = ndarray::array![[1.0, 2.0, 4.0, 7.0]];
        let g = gradient(&f, 1).unwrap();
        assert_eq!(g, ndarray::array![[1.0, 1.5, 2.5, 3.0]]);
    }

    #[test]
    fn subsample_corners() {
        let mut omega = Array2::zeros((PIV_NY, PIV_NX));
        omega[[0, 0]] = 1.0;
        omega[[0, 544]] = 2.0;
        omega[[739, 0]] = 3.0;
        omega[[739, 544]] = 4.0;
        assert_eq!(subsample_grid(&omega, 1, 1).unwrap(), vec![1.0]);
        assert_eq!(subsample_grid(&omega, 2, 2).unwrap(), vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(subsample_grid(&omega, 8, 8).unwrap().len(), 64);
        assert!(subsample_grid(&omega, 0, 3).is_err());
    }

    #[test]
    fn linspace_truncation() {
        // numpy.linspace(0, 739, 8, dtype=int)
        assert_eq!(subsample_indices(739, 8), vec![0, 105, 211, 316, 422, 527, 633, 739]);
        // numpy.linspace(0, 544, 4, dtype=int)
        assert_eq!(subsample_indices(544, 4), vec![0, 181, 362, 544]);
    }

    #[test]
    fn pipeline_centres_columns() {
        let dir = tempfile::tempdir().unwrap();
        for k in 0..3 {
            let frame = linear_frame(12, 10, |x, y| {
                let s = k as f64 + 1.0;
                (s * (x * y).sin(), s * (0.3 * x).cos() + y * y * 0.01 * s)
            });
            std::fs::write(dir.path().join(format!("Serie_{k:05}.txt")), davis_text(&frame)).unwrap();
        }
        std::fs::write(dir.path().join("Serie_bad.txt"), b"0;0;NaN;1\n").unwrap();
        std::fs::write(dir.path().join("notes.txt"), b"ignored").unwrap();
        let m = piv_pipeline(dir.path(), (4, 4), None, (12, 10)).unwrap();
        assert_eq!((m.n(), m.d()), (3, 16));
        assert!(m.column_means().iter().all(|v| v.abs() <= 1e-6));
        let t = piv_pipeline(dir.path(), (4, 4), Some(5), (12, 10)).unwrap();
        assert_eq!(t.d(), 5);
        assert!(t.column_means().iter().all(|v| v.abs() <= 1e-6));
        let p = prepare_piv(dir.path(), &[(2, 2)], (12, 10)).unwrap();
        assert_eq!(p.retained.len(), 3);
        assert_eq!(p.skipped, vec![("Serie_bad.txt".to_string(), RejectReason::WrongCount)]);
    }

    #[test]
    fn pipeline_all_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("Serie_1.txt"), b"garbage\n").unwrap();
        assert!(matches!(
            piv_pipeline(dir.path(), (1, 1), None, (1, 1)),
            Err(Error::EmptyDataset(_))
        ));
    }
}
