use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::RunConfig;

/// Step at which a replica left the finite range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceEvent {
    pub step: u64,
    pub replica: usize,
    pub dt: f64,
    /// State before the failing update.
    pub last_finite_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceMeta {
    pub config: RunConfig,
    pub dim: usize,
    pub replicas: usize,
    pub divergence: Option<DivergenceEvent>,
    pub wall_time_secs: f64,
}

/// One recorded sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow<'a> {
    pub step: u64,
    pub replica: usize,
    pub dt: f64,
    pub theta: &'a [f64],
}

/// Recorded samples of a run, stored column-wise.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    dim: usize,
    replicas: usize,
    steps: Vec<u64>,
    replica_ids: Vec<usize>,
    dts: Vec<f64>,
    thetas: Vec<f64>,
    pub meta: Option<TraceMeta>,
}

pub const TRACE_HEADER_PREFIX: &str = "step,replica,dt";

impl Trace {
    pub fn new(dim: usize, replicas: usize) -> Self {
        Self {
            dim,
            replicas,
            ..Default::default()
        }
    }

    pub fn with_capacity(dim: usize, replicas: usize, rows: usize) -> Self {
        Self {
            dim,
            replicas,
            steps: Vec::with_capacity(rows),
            replica_ids: Vec::with_capacity(rows),
            dts: Vec::with_capacity(rows),
            thetas: Vec::with_capacity(rows * dim),
            meta: None,
        }
    }

    pub fn push(&mut self, step: u64, replica: usize, dt: f64, theta: &[f64]) {
        debug_assert_eq!(theta.len(), self.dim);
        self.steps.push(step);
        self.replica_ids.push(replica);
        self.dts.push(dt);
        self.thetas.extend_from_slice(theta);
        self.replicas = self.replicas.max(replica + 1);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn row(&self, i: usize) -> TraceRow<'_> {
        TraceRow {
            step: self.steps[i],
            replica: self.replica_ids[i],
            dt: self.dts[i],
            theta: &self.thetas[i * self.dim..(i + 1) * self.dim],
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = TraceRow<'_>> + '_ {
        (0..self.len()).map(move |i| self.row(i))
    }

    pub fn diverged(&self) -> bool {
        self.meta.as_ref().is_some_and(|m| m.divergence.is_some())
    }

    /// Component `component` of replica `replica`, for rows with `step >= burn_in`.
    pub fn series(&self, replica: usize, component: usize, burn_in: u64) -> Vec<f64> {
        self.rows()
            .filter(|r| r.replica == replica && r.step >= burn_in)
            .map(|r| r.theta[component])
            .collect()
    }

    pub fn header(&self) -> String {
        let mut h = TRACE_HEADER_PREFIX.to_string();
        for k in 1..=self.dim {
            let _ = write!(h, ",theta{k}");
        }
        h
    }

    /// Writes `step,replica,dt,theta1,...,thetaN` with shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut line = String::with_capacity(96);
        writeln!(w, "{}", self.header())?;
        for r in self.rows() {
            line.clear();
            let _ = write!(line, "{},{},{}", r.step, r.replica, r.dt);
            for t in r.theta {
                let _ = write!(line, ",{t}");
            }
            line.push('\n');
            w.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)
            .expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("trace CSV is ASCII")
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_csv(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    pub fn read_csv<R: Read>(reader: R, origin: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| Error::parse(origin, e.to_string()))?
            .clone();
        let dim = headers.len().saturating_sub(3);
        let expected: Vec<String> = ["step", "replica", "dt"]
            .into_iter()
            .map(String::from)
            .chain((1..=dim).map(|k| format!("theta{k}")))
            .collect();
        if dim == 0 || headers.iter().ne(expected.iter().map(String::as_str)) {
            return Err(Error::parse(
                origin,
                format!("expected header `{}`", expected.join(",")),
            ));
        }
        let mut trace = Trace::new(dim, 0);
        let mut theta = vec![0.0; dim];
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
            let bad = |field: &str| Error::parse(origin, format!("row {}: bad {field}", line + 2));
            let step: u64 = rec[0].parse().map_err(|_| bad("step"))?;
            let replica: usize = rec[1].parse().map_err(|_| bad("replica"))?;
            let dt: f64 = rec[2].parse().map_err(|_| bad("dt"))?;
            for (k, t) in theta.iter_mut().enumerate() {
                *t = rec[3 + k].parse().map_err(|_| bad("theta"))?;
            }
            trace.push(step, replica, dt, &theta);
        }
        Ok(trace)
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path)
    }
}
