use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular grid of cells; each dimension is split into `bins` equal cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub bins: Vec<usize>,
}

impl GridSpec {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, bins: Vec<usize>) -> Result<Self> {
        let g = Self { lower, upper, bins };
        g.validate()?;
        Ok(g)
    }

    /// `[−2, 4] × [−4, 4]` with 240 × 320 cells.
    pub fn benchmark() -> Self {
        Self {
            lower: vec![-2.0, -4.0],
            upper: vec![4.0, 4.0],
            bins: vec![240, 320],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.lower.len();
        if d == 0 || self.upper.len() != d || self.bins.len() != d {
            return Err(Error::config(
                "grid bounds and bin counts must have matching, non-zero length",
            ));
        }
        for k in 0..d {
            let (lo, hi) = (self.lower[k], self.upper[k]);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::config(format!(
                    "grid dimension {k}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
            if self.bins[k] < 2 {
                return Err(Error::config(format!(
                    "grid dimension {k}: need at least 2 bins"
                )));
            }
        }
        Ok(())
    }

    pub fn dims(&self) -> usize {
        self.bins.len()
    }

    pub fn width(&self, dim: usize) -> f64 {
        (self.upper[dim] - self.lower[dim]) / self.bins[dim] as f64
    }

    pub fn center(&self, dim: usize, i: usize) -> f64 {
        self.lower[dim] + (i as f64 + 0.5) * self.width(dim)
    }

    pub fn n_cells(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn cell_area(&self) -> f64 {
        (0..self.dims()).map(|k| self.width(k)).product()
    }

    /// Flat index of the 2-D cell `(i, j)`; row-major with the first dimension outer.
    pub fn flat(&self, i: usize, j: usize) -> usize {
        i * self.bins[1] + j
    }

    /// Cell containing a 2-D point, or `None` outside the grid.
    pub fn locate(&self, theta: &[f64]) -> Option<usize> {
        let mut idx = [0usize; 2];
        for k in 0..2 {
            let u = (theta[k] - self.lower[k]) / self.width(k);
            if !(u >= 0.0 && u < self.bins[k] as f64) {
                return None;
            }
            idx[k] = (u as usize).min(self.bins[k] - 1);
        }
        Some(self.flat(idx[0], idx[1]))
    }

    /// Equal bin counts and bounds equal up to rounding.
    pub fn matches(&self, other: &GridSpec) -> bool {
        if self.bins != other.bins || self.lower.len() != other.lower.len() {
            return false;
        }
        let close = |a: f64, b: f64, w: f64| (a - b).abs() <= 1e-9 * w.max(1.0);
        (0..self.dims()).all(|k| {
            let w = self.upper[k] - self.lower[k];
            close(self.lower[k], other.lower[k], w) && close(self.upper[k], other.upper[k], w)
        })
    }
}

/// Cell masses on a 2-D grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    pub grid: GridSpec,
    pub masses: Vec<f64>,
}

impl GridDensity {
    pub fn new(grid: GridSpec, masses: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        if masses.len() != grid.n_cells() {
            return Err(Error::usage(format!(
                "{} masses for a grid of {} cells",
                masses.len(),
                grid.n_cells()
            )));
        }
        if masses.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::usage("grid masses must be finite and non-negative"));
        }
        Ok(Self { grid, masses })
    }

    pub fn total(&self) -> f64 {
        pairwise_sum(&self.masses)
    }

    /// Copy rescaled to unit total mass.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.total();
        if total.is_nan() || total <= 0.0 {
            return Err(Error::diagnostic("density has zero total mass"));
        }
        Ok(Self {
            grid: self.grid.clone(),
            masses: self.masses.iter().map(|m| m / total).collect(),
        })
    }

    /// Mass divided by cell area.
    pub fn density(&self, cell: usize) -> f64 {
        self.masses[cell] / self.grid.cell_area()
    }

    /// Indices of cells strictly greater than their 8 neighbours, sorted by mass, largest first.
    pub fn local_maxima(&self) -> Vec<usize> {
        let (n1, n2) = (self.grid.bins[0], self.grid.bins[1]);
        let mut out = Vec::new();
        for i in 0..n1 {
            for j in 0..n2 {
                let m = self.masses[self.grid.flat(i, j)];
                let mut is_max = m > 0.0;
                for di in -1i64..=1 {
                    for dj in -1i64..=1 {
                        if di == 0 && dj == 0 {
                            continue;
                        }
                        let (a, b) = (i as i64 + di, j as i64 + dj);
                        if a < 0 || b < 0 || a >= n1 as i64 || b >= n2 as i64 {
                            continue;
                        }
                        if self.masses[self.grid.flat(a as usize, b as usize)] >= m {
                            is_max = false;
                        }
                    }
                }
                if is_max {
                    out.push(self.grid.flat(i, j));
                }
            }
        }
        out.sort_by(|&a, &b| self.masses[b].total_cmp(&self.masses[a]));
        out
    }

    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let n2 = self.grid.bins[1];
        [
            self.grid.center(0, cell / n2),
            self.grid.center(1, cell % n2),
        ]
    }

    /// Writes `theta1,theta2,density` at cell centres.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "theta1,theta2,density")?;
        let mut line = String::with_capacity(64);
        for cell in 0..self.masses.len() {
            let [a, b] = self.cell_center(cell);
            line.clear();
            let _ = writeln!(line, "{a},{b},{}", self.density(cell));
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads the CSV form back, reconstructing the grid from the cell centres.
    pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(origin, e.to_string()))?
            .clone();
        if headers.iter().ne(["theta1", "theta2", "density"]) {
            return Err(Error::parse(
                origin,
                "expected header `theta1,theta2,density`",
            ));
        }
        let mut rows = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
            let parse = |k: usize| -> Result<f64> {
                rec[k]
                    .parse()
                    .map_err(|_| Error::parse(origin, format!("row {}: bad number", line + 2)))
            };
            rows.push([parse(0)?, parse(1)?, parse(2)?]);
        }
        let n2 = rows.iter().take_while(|r| r[0] == rows[0][0]).count();
        if rows.len() < 4 || n2 < 2 || rows.len() % n2 != 0 {
            return Err(Error::parse(origin, "rows do not form a rectangular grid"));
        }
        let n1 = rows.len() / n2;
        let axis = |first: f64, last: f64, n: usize| {
            let h = (last - first) / (n - 1) as f64;
            (first - 0.5 * h, last + 0.5 * h)
        };
        let (lo1, hi1) = axis(rows[0][0], rows[rows.len() - 1][0], n1);
        let (lo2, hi2) = axis(rows[0][1], rows[n2 - 1][1], n2);
        let grid = GridSpec::new(vec![lo1, lo2], vec![hi1, hi2], vec![n1, n2])
            .map_err(|e| Error::parse(origin, e.to_string()))?;
        let area = grid.cell_area();
        for i in 0..n1 {
            for j in 0..n2 {
                let r = rows[i * n2 + j];
                let expect = [grid.center(0, i), grid.center(1, j)];
                if (r[0] - expect[0]).abs() > 1e-6 * grid.width(0)
                    || (r[1] - expect[1]).abs() > 1e-6 * grid.width(1)
                {
                    return Err(Error::parse(
                        origin,
                        format!("row {} is off the grid", i * n2 + j + 2),
                    ));
                }
            }
        }
        let masses = rows.iter().map(|r| r[2] * area).collect();
        GridDensity::new(grid, masses).map_err(|e| Error::parse(origin, e.to_string()))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}

/// Pairwise (cascade) summation; fixed reduction order, O(log n) error growth.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if xs.len() <= LEAF {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn locate_and_centres() {
        let g = GridSpec::new(vec![0.0, 0.0], vec![1.0, 2.0], vec![2, 4]).unwrap();
        assert_eq!(g.locate(&[0.1, 0.1]), Some(0));
        assert_eq!(g.locate(&[0.6, 1.9]), Some(g.flat(1, 3)));
        assert_eq!(g.locate(&[1.0, 0.5]), None);
        assert_eq!(g.locate(&[-0.01, 0.5]), None);
        assert_eq!(g.center(1, 0), 0.25);
        assert!((g.cell_area() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(GridSpec::new(vec![0.0], vec![0.0], vec![3]).is_err());
        assert!(GridSpec::new(vec![0.0], vec![1.0], vec![1]).is_err());
        assert!(GridSpec::new(vec![0.0, 0.0], vec![1.0], vec![3, 3]).is_err());
        assert!(GridSpec::new(vec![f64::NAN], vec![1.0], vec![3]).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_grid() {
        let g = GridSpec::new(vec![-2.0, -4.0], vec![4.0, 4.0], vec![24, 32]).unwrap();
        let masses: Vec<f64> = (0..g.n_cells()).map(|i| (i % 7) as f64 + 0.5).collect();
        let d = GridDensity::new(g.clone(), masses)
            .unwrap()
            .normalized()
            .unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back = GridDensity::read_csv(buf.as_slice(), Path::new("mem")).unwrap();
        assert!(back.grid.matches(&g));
        for (a, b) in back.masses.iter().zip(&d.masses) {
            assert!((a - b).abs() <= 1e-12 * b.abs());
        }
    }

    #[test]
    fn pairwise_sum_matches_naive() {
        let xs: Vec<f64> = (0..10_000).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let naive: f64 = xs.iter().sum();
        assert!((pairwise_sum(&xs) - naive).abs() < 1e-12);
    }
}
