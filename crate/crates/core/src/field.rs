//! Gridded spatiotemporal fields and their on-disk format.
//!
//! Values are stored row-major with time as the fastest-varying index, so a
//! 1D field is laid out as `values[ix * nt + it]`.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform grid axis.
///
/// Periodic axes exclude the right endpoint (`hi` is the image of `lo`);
/// non-periodic axes include both endpoints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub n: usize,
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub periodic: bool,
}

impl Axis {
    /// Closed interval `[lo, hi]` with `n` points.
    pub fn closed(n: usize, lo: f64, hi: f64) -> Self {
        Axis { n, lo, hi, periodic: false }
    }

    /// Periodic interval `[lo, hi)` with `n` points.
    pub fn periodic(n: usize, lo: f64, hi: f64) -> Self {
        Axis { n, lo, hi, periodic: true }
    }

    /// Grid spacing.
    pub fn step(&self) -> f64 {
        if self.periodic {
            (self.hi - self.lo) / self.n as f64
        } else {
            (self.hi - self.lo) / (self.n.max(2) - 1) as f64
        }
    }

    /// Coordinate of grid point `i`.
    pub fn point(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }

    /// All grid coordinates.
    pub fn points(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.point(i)).collect()
    }

    fn check(&self, what: &str, min_points: usize) -> Result<()> {
        if self.n < min_points {
            return Err(Error::Config(format!("{what} axis needs at least {min_points} points, got {}", self.n)));
        }
        if !(self.hi > self.lo) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(Error::Config(format!("{what} axis needs finite hi > lo, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }
}

/// Observation data on a tensor grid (space axes first, then time).
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    space: Vec<Axis>,
    time: Axis,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    name: String,
    axes: Vec<Axis>,
    t: Axis,
    order: String,
}

const ORDER: &str = "row-major, time fastest";

impl Field {
    /// Build a field, validating the axes and the tensor size.
    pub fn new(name: impl Into<String>, space: Vec<Axis>, time: Axis, values: Vec<f64>) -> Result<Self> {
        if space.is_empty() || space.len() > 2 {
            return Err(Error::Config(format!("fields need one or two space axes, got {}", space.len())));
        }
        for a in &space {
            a.check("space", 8)?;
        }
        time.check("time", 2)?;
        let expected = space.iter().map(|a| a.n).product::<usize>() * time.n;
        if values.len() != expected {
            return Err(Error::Config(format!("tensor has {} values but the axes declare {expected}", values.len())));
        }
        Ok(Field { name: name.into(), space, time, values })
    }

    /// Field of the same shape with new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Field::new(self.name.clone(), self.space.clone(), self.time, values)
    }

    pub fn space_axes(&self) -> &[Axis] {
        &self.space
    }

    pub fn time_axis(&self) -> &Axis {
        &self.time
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Tensor shape `[n_space..., n_time]`.
    pub fn shape(&self) -> Vec<usize> {
        let mut s: Vec<usize> = self.space.iter().map(|a| a.n).collect();
        s.push(self.time.n);
        s
    }

    /// Flat index of a (space..., time) multi-index.
    pub fn index(&self, space: &[usize], t: usize) -> usize {
        let mut idx = 0;
        for (a, &i) in self.space.iter().zip(space) {
            idx = idx * a.n + i;
        }
        idx * self.time.n + t
    }

    /// Whether two fields share a grid.
    pub fn same_grid(&self, other: &Field) -> bool {
        self.space == other.space && self.time == other.time
    }

    /// Write `<stem>.bin` (little-endian f64) and `<stem>.json` sidecar.
    pub fn save(&self, stem: &Path) -> Result<()> {
        let mut bytes = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(stem.with_extension("bin"), bytes)?;
        let side = Sidecar { name: self.name.clone(), axes: self.space.clone(), t: self.time, order: ORDER.into() };
        fs::write(stem.with_extension("json"), serde_json::to_string_pretty(&side)? + "\n")?;
        Ok(())
    }

    /// Read a field written by [`Field::save`]. `stem` may name either file.
    pub fn load(stem: &Path) -> Result<Self> {
        let side: Sidecar = serde_json::from_str(&fs::read_to_string(stem.with_extension("json"))?)?;
        if side.order != ORDER {
            return Err(Error::Config(format!("unsupported value order `{}`", side.order)));
        }
        let bytes = fs::read(stem.with_extension("bin"))?;
        if bytes.len() % 8 != 0 {
            return Err(Error::Config("binary payload length is not a multiple of 8".into()));
        }
        let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect();
        Field::new(side.name, side.axes, side.t, values)
    }

    /// CSV export of `(x, t, value)` triples for 1D fields.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.space.len() != 1 {
            return Err(Error::Config("CSV export is only defined for 1D fields".into()));
        }
        let mut out = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(out, "x,t,value")?;
        let xs = self.space[0].points();
        let ts = self.time.points();
        for (ix, x) in xs.iter().enumerate() {
            for (it, t) in ts.iter().enumerate() {
                writeln!(out, "{x},{t},{}", self.values[ix * self.time.n + it])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}
