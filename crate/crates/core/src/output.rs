//! Density frames on disk and the frame-set comparison.
//!
//! A frame file holds one raster of interior cells: a header line
//! `t nx ny dx dy`, then `ny` comma-separated rows, southernmost first.
//! Files are named `frame_<k>_<N|E|W|S|sum>.csv` with a five-digit output
//! index `k`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::direction::Dir;
use crate::error::{Error, Result};
use crate::solver::DensityState;

pub const FRAME_LAYERS: [&str; 5] = ["N", "E", "W", "S", "sum"];

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
    /// Row-major interior values, `j = 0` is the southern row.
    pub values: Vec<f64>,
}

impl Frame {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Integral over the frame, `sum * dx * dy`.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.dx * self.dy
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{} {} {} {} {}\n",
            self.t, self.nx, self.ny, self.dx, self.dy
        );
        for row in self.values.chunks(self.nx) {
            for (n, v) in row.iter().enumerate() {
                if n > 0 {
                    out.push(',');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty frame"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 5 {
            return Err(Error::parse(origin, 1, "expected header `t nx ny dx dy`"));
        }
        let bad = |what: &str| Error::parse(origin, 1, format!("bad {what} in header"));
        let t: f64 = h[0].parse().map_err(|_| bad("t"))?;
        let nx: usize = h[1].parse().map_err(|_| bad("nx"))?;
        let ny: usize = h[2].parse().map_err(|_| bad("ny"))?;
        let dx: f64 = h[3].parse().map_err(|_| bad("dx"))?;
        let dy: f64 = h[4].parse().map_err(|_| bad("dy"))?;
        let mut values = Vec::with_capacity(nx * ny);
        let mut rows = 0;
        for (n, line) in lines {
            let row: Vec<f64> = line
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(origin, n + 1, "bad value"))?;
            if row.len() != nx {
                return Err(Error::parse(
                    origin,
                    n + 1,
                    format!("expected {nx} values, found {}", row.len()),
                ));
            }
            values.extend(row);
            rows += 1;
        }
        if rows != ny {
            return Err(Error::parse(
                origin,
                1,
                format!("expected {ny} rows, found {rows}"),
            ));
        }
        Ok(Frame {
            t,
            nx,
            ny,
            dx,
            dy,
            values,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Interior raster of one layer of `state`; `None` is the summed density.
pub fn frame_of(state: &DensityState, layer: Option<Dir>) -> Frame {
    let g = &state.grid;
    let values = g
        .interior()
        .map(|(i, j)| {
            let r = state.at(i, j);
            match layer {
                Some(d) => r[d.index()],
                None => r.iter().sum(),
            }
        })
        .collect();
    Frame {
        t: state.t,
        nx: g.nx,
        ny: g.ny,
        dx: g.dx,
        dy: g.dy,
        values,
    }
}

pub fn frame_name(index: usize, layer: &str) -> String {
    format!("frame_{index:05}_{layer}.csv")
}

/// Write the four partial layers and the sum for output number `index`.
pub fn write_frames(dir: &Path, index: usize, state: &DensityState) -> Result<()> {
    let layers = Dir::ALL
        .iter()
        .map(|&d| Some(d))
        .chain(std::iter::once(None));
    for (name, layer) in FRAME_LAYERS.iter().zip(layers) {
        let path = dir.join(frame_name(index, name));
        std::fs::write(&path, frame_of(state, layer).to_text()).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Frame files in `dir`, sorted by name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name.starts_with("frame_") && name.ends_with(".csv") {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameDiff {
    pub name: String,
    pub t: f64,
    /// `sum |A - B| * dx * dy`
    pub l1: f64,
    pub linf: f64,
    pub max_a: f64,
    /// `max |A - B| / max |A|`; zero when both frames vanish.
    pub relative: f64,
}

pub fn diff_frames(name: &str, a: &Frame, b: &Frame) -> Result<(FrameDiff, Frame)> {
    if (a.nx, a.ny) != (b.nx, b.ny) || a.dx != b.dx || a.dy != b.dy {
        return Err(Error::Shape(format!(
            "{name}: {}x{} cells of {}x{} m against {}x{} cells of {}x{} m",
            a.nx, a.ny, a.dx, a.dy, b.nx, b.ny, b.dx, b.dy
        )));
    }
    if a.t != b.t {
        return Err(Error::Shape(format!(
            "{name}: frame times {} and {} differ",
            a.t, b.t
        )));
    }
    let values: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x - y).collect();
    let d = Frame {
        values,
        ..a.clone()
    };
    let linf = d.max_abs();
    let max_a = a.max_abs();
    let relative = if linf == 0.0 { 0.0 } else { linf / max_a };
    let l1 = d.values.iter().map(|v| v.abs()).sum::<f64>() * a.dx * a.dy;
    Ok((
        FrameDiff {
            name: name.to_string(),
            t: a.t,
            l1,
            linf,
            max_a,
            relative,
        },
        d,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareReport {
    pub frames: Vec<FrameDiff>,
}

impl CompareReport {
    pub fn max_relative(&self) -> f64 {
        self.frames.iter().fold(0.0, |m, f| m.max(f.relative))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("# frame t l1 linf max_a relative\n");
        for f in &self.frames {
            let _ = writeln!(
                out,
                "{} {} {:e} {:e} {:e} {:e}",
                f.name, f.t, f.l1, f.linf, f.max_a, f.relative
            );
        }
        let _ = writeln!(out, "max_relative = {:e}", self.max_relative());
        out
    }
}

/// Compare every frame of `a` with the same-named frame of `b`. Difference
/// rasters `diff_<name>` and `report.txt` go to `out` when given.
pub fn compare_dirs(a: &Path, b: &Path, out: Option<&Path>) -> Result<CompareReport> {
    let left = list_frames(a)?;
    let right = list_frames(b)?;
    let names = |v: &[PathBuf]| -> Vec<String> {
        v.iter()
            .map(|p| p.file_name().unwrap().to_string_lossy().into_owned())
            .collect()
    };
    let (ln, rn) = (names(&left), names(&right));
    if ln != rn {
        return Err(Error::Shape(format!(
            "frame sets differ: {} frames in {}, {} in {}",
            ln.len(),
            a.display(),
            rn.len(),
            b.display()
        )));
    }
    if ln.is_empty() {
        return Err(Error::Shape(format!("no frames in {}", a.display())));
    }
    if let Some(o) = out {
        std::fs::create_dir_all(o).map_err(|e| Error::io(o, e))?;
    }
    let mut frames = Vec::new();
    for ((pa, pb), name) in left.iter().zip(&right).zip(&ln) {
        let (d, raster) = diff_frames(name, &Frame::load(pa)?, &Frame::load(pb)?)?;
        if let Some(o) = out {
            let p = o.join(format!("diff_{name}"));
            std::fs::write(&p, raster.to_text()).map_err(|e| Error::io(&p, e))?;
        }
        frames.push(d);
    }
    let report = CompareReport { frames };
    if let Some(o) = out {
        let p = o.join("report.txt");
        std::fs::write(&p, report.to_text()).map_err(|e| Error::io(&p, e))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridding::Grid;

    fn frame(values: Vec<f64>) -> Frame {
        Frame {
            t: 900.0,
            nx: 3,
            ny: 2,
            dx: 10.0,
            dy: 20.0,
            values,
        }
    }

    #[test]
    fn text_round_trip_is_exact() {
        let f = frame(vec![0.1, 1.0 / 3.0, 2e-300, 0.0, 7.25, 1e-17]);
        assert_eq!(Frame::parse(&f.to_text(), Path::new("f")).unwrap(), f);
        assert!(Frame::parse("1 2 2 1 1\n1,2\n", Path::new("f")).is_err());
        assert!(Frame::parse("1 2 1 1 1\n1,2,3\n", Path::new("f")).is_err());
    }

    #[test]
    fn diff_examples() {
        let a = frame(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let (d, _) = diff_frames("x", &a, &a).unwrap();
        assert_eq!((d.l1, d.linf, d.relative), (0.0, 0.0, 0.0));
        let b = frame(a.values.iter().map(|v| v / 2.0).collect());
        let (d, r) = diff_frames("x", &a, &b).unwrap();
        assert_eq!(d.relative, 0.5);
        assert_eq!(r.values[5], 3.0);
        assert_eq!(d.l1, 10.5 * 200.0);
        let c = Frame {
            nx: 2,
            ny: 3,
            ..a.clone()
        };
        assert!(matches!(diff_frames("x", &a, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn frames_of_state() {
        let g = Grid::new(3, 2, 10.0, 20.0, 0.0, 0.0, 1, 0).unwrap();
        let mut s = DensityState::zeros(g);
        *s.at_mut(1, 1) = [1.0, 2.0, 3.0, 4.0];
        *s.at_mut(3, 2) = [0.5, 0.0, 0.0, 0.0];
        let sum = frame_of(&s, None);
        assert_eq!(sum.values, vec![10.0, 0.0, 0.0, 0.0, 0.0, 0.5]);
        assert_eq!(frame_of(&s, Some(Dir::W)).values[0], 3.0);
        assert_eq!(sum.integral(), s.total_vehicles());
    }

    #[test]
    fn compare_directories() {
        let g = Grid::new(3, 2, 10.0, 20.0, 0.0, 0.0, 1, 0).unwrap();
        let (a, b, o) = (
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
            tempfile::tempdir().unwrap(),
        );
        let mut s = DensityState::zeros(g);
        *s.at_mut(2, 1) = [1.0, 0.0, 0.0, 1.0];
        write_frames(a.path(), 0, &s).unwrap();
        s.at_mut(2, 1)[0] = 0.5;
        write_frames(b.path(), 0, &s).unwrap();
        let r = compare_dirs(a.path(), b.path(), Some(o.path())).unwrap();
        assert_eq!(r.frames.len(), 5);
        assert_eq!(r.max_relative(), 0.5);
        assert!(o.path().join("report.txt").is_file());
        assert!(o.path().join("diff_frame_00000_sum.csv").is_file());
        write_frames(a.path(), 1, &s).unwrap();
        assert!(compare_dirs(a.path(), b.path(), None).is_err());
    }
}
