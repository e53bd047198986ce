//! Gridded numerical reference solutions.
//!
//! File layout: the header line `nt,nx,tmin,tmax,xmin,xmax,components`, one
//! line with those values, then `nt` rows (increasing t), each holding
//! `nx·components` values with the components of a node adjacent. Nodes sit
//! on `linspace(tmin, tmax, nt) × linspace(xmin, xmax, nx)`, so the grid
//! covers the problem rectangle including its edges.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use super::ProblemError;
use crate::sampling::{Point2, Rect};

#[derive(Clone, Debug, PartialEq)]
pub struct GridReference {
    pub nt: usize,
    pub nx: usize,
    /// `xmin..xmax` horizontally, `tmin..tmax` vertically.
    pub rect: Rect,
    pub components: usize,
    /// Row-major over `(t, x, component)`.
    pub values: Vec<f64>,
    pub source: Option<PathBuf>,
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    let step = if n > 1 { (hi - lo) / (n - 1) as f64 } else { 0.0 };
    (0..n).map(move |i| if i + 1 == n && n > 1 { hi } else { lo + i as f64 * step })
}

impl GridReference {
    /// Grid node `(i, j)` at time index `i` and space index `j`.
    pub fn node(&self, i: usize, j: usize) -> Point2 {
        let t = linspace(self.rect.ymin, self.rect.ymax, self.nt).nth(i).unwrap();
        let x = linspace(self.rect.xmin, self.rect.xmax, self.nx).nth(j).unwrap();
        Point2::new(x, t)
    }

    /// Every node in storage order.
    pub fn nodes(&self) -> Vec<Point2> {
        let ts: Vec<f64> = linspace(self.rect.ymin, self.rect.ymax, self.nt).collect();
        let xs: Vec<f64> = linspace(self.rect.xmin, self.rect.xmax, self.nx).collect();
        ts.iter()
            .flat_map(|&t| xs.iter().map(move |&x| Point2::new(x, t)))
            .collect()
    }

    pub fn value(&self, i: usize, j: usize, comp: usize) -> f64 {
        self.values[(i * self.nx + j) * self.components + comp]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "nt,nx,tmin,tmax,xmin,xmax,components")?;
        writeln!(
            out,
            "{},{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
            self.nt,
            self.nx,
            self.rect.ymin,
            self.rect.ymax,
            self.rect.xmin,
            self.rect.xmax,
            self.components
        )?;
        for row in self.values.chunks(self.nx * self.components) {
            let line: Vec<String> = row.iter().map(|v| format!("{v:.17e}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Parses a reference grid and checks it against the expected rectangle
    /// (tolerance 1e-9) and component count.
    pub fn read_csv<R: BufRead>(
        input: R,
        expected: Rect,
        components: usize,
    ) -> Result<Self, ProblemError> {
        let parse_err = |msg: String| ProblemError::Parse(msg);
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| parse_err("empty reference file".into()))??;
        if header.trim() != "nt,nx,tmin,tmax,xmin,xmax,components" {
            return Err(parse_err(format!("bad header `{header}`")));
        }
        let meta = lines
            .next()
            .ok_or_else(|| parse_err("missing dimension line".into()))??;
        let f: Vec<&str> = meta.split(',').map(str::trim).collect();
        if f.len() != 7 {
            return Err(parse_err("dimension line needs 7 fields".into()));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| parse_err(format!("bad count `{s}`")));
        let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(format!("bad number `{s}`")));
        let (nt, nx) = (int(f[0])?, int(f[1])?);
        let (tmin, tmax, xmin, xmax) = (num(f[2])?, num(f[3])?, num(f[4])?, num(f[5])?);
        let comps = int(f[6])?;
        let rect = Rect::new(xmin, xmax, tmin, tmax).map_err(|e| parse_err(e.to_string()))?;
        if !rect.approx_eq(&expected, 1e-9) {
            return Err(ProblemError::RectMismatch {
                expected,
                found: rect,
            });
        }
        if comps != components {
            return Err(parse_err(format!(
                "expected {components} components, file has {comps}"
            )));
        }
        if nt < 2 || nx < 2 {
            return Err(parse_err(format!("grid {nt}x{nx} is too small")));
        }
        let mut values = Vec::with_capacity(nt * nx * comps);
        let mut row = 0;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let before = values.len();
            for field in line.split(',') {
                let v = num(field.trim())?;
                if !v.is_finite() {
                    return Err(ProblemError::NonFiniteReference { row });
                }
                values.push(v);
            }
            if values.len() - before != nx * comps {
                return Err(parse_err(format!(
                    "row {row} has {} values, expected {}",
                    values.len() - before,
                    nx * comps
                )));
            }
            row += 1;
        }
        if row != nt {
            return Err(parse_err(format!("expected {nt} rows, found {row}")));
        }
        Ok(Self {
            nt,
            nx,
            rect,
            components: comps,
            values,
            source: None,
        })
    }
}

pub fn load_grid_reference(
    path: &Path,
    expected: Rect,
    components: usize,
) -> Result<GridReference, ProblemError> {
    let file = std::fs::File::open(path)
        .map_err(|_| ProblemError::MissingReference(path.to_path_buf()))?;
    let mut grid = GridReference::read_csv(std::io::BufReader::new(file), expected, components)?;
    grid.source = Some(path.to_path_buf());
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect() -> Rect {
        Rect::new(-1.0, 1.0, 0.0, 1.0).unwrap()
    }

    fn sample() -> GridReference {
        GridReference {
            nt: 3,
            nx: 4,
            rect: rect(),
            components: 2,
            values: (0..24).map(|v| v as f64 * 0.5).collect(),
            source: None,
        }
    }

    #[test]
    fn round_trip() {
        let g = sample();
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let back = GridReference::read_csv(&buf[..], rect(), 2).unwrap();
        assert_eq!(back, g);
        assert_eq!((back.nt, back.nx), (3, 4));
        assert_eq!(back.value(2, 1, 1), g.values[(2 * 4 + 1) * 2 + 1]);
        assert_eq!(back.node(2, 3), Point2::new(1.0, 1.0));
        assert_eq!(back.node(1, 0), Point2::new(-1.0, 0.5));
    }

    #[test]
    fn rect_mismatch_reports_both() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let other = Rect::new(-5.0, 5.0, 0.0, 1.0).unwrap();
        let err = GridReference::read_csv(&buf[..], other, 2).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("-5") && msg.contains("-1"), "{msg}");
    }

    #[test]
    fn nan_row_is_named() {
        let text = "nt,nx,tmin,tmax,xmin,xmax,components\n2,2,0,1,-1,1,1\n0.0,1.0\n2.0,NaN\n";
        let err = GridReference::read_csv(text.as_bytes(), rect(), 1).unwrap_err();
        assert!(matches!(err, ProblemError::NonFiniteReference { row: 1 }));
    }

    #[test]
    fn missing_file() {
        let err = load_grid_reference(Path::new("/nonexistent/ref.csv"), rect(), 1).unwrap_err();
        assert!(matches!(err, ProblemError::MissingReference(_)));
    }

    #[test]
    fn linspace_hits_endpoints() {
        let v: Vec<f64> = linspace(-4.0, 4.0, 7).collect();
        assert_eq!(v[0], -4.0);
        assert_eq!(v[6], 4.0);
        assert_eq!(v.len(), 7);
    }
}
