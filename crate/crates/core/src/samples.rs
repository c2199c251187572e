//! Sample sets and their CSV format.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::bases::Basis;
use crate::error::{Error, Result};

/// `n x d` observations, row-major. Categorical values are 0-based here and
/// 1-based in files.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    d: usize,
    points: Vec<f64>,
}

impl SampleSet {
    pub fn new(d: usize, points: Vec<f64>) -> Result<Self> {
        if d == 0 || points.len() % d != 0 {
            return Err(Error::ShapeMismatch(format!("{} values do not form rows of length {d}", points.len())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfDomain("non-finite sample value".into()));
        }
        Ok(Self { d, points })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map(|r| r.len()).ok_or(Error::EmptySample)?;
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::ShapeMismatch("ragged rows".into()));
        }
        Self::new(d, rows.concat())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.points.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn column(&self, nu: usize) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().skip(nu).step_by(self.d).copied()
    }

    pub fn subset(&self, idx: &[usize]) -> SampleSet {
        let mut points = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            points.extend_from_slice(self.point(i));
        }
        SampleSet { d: self.d, points }
    }

    /// Random split into `(rest, held_out)` with `round(fraction · n)` held
    /// out (at least one of each when `n ≥ 2`).
    pub fn split<R: Rng + ?Sized>(&self, fraction: f64, rng: &mut R) -> (SampleSet, SampleSet) {
        let n = self.n();
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(rng);
        let mut k = (fraction * n as f64).round() as usize;
        if n >= 2 {
            k = k.clamp(1, n - 1);
        } else {
            k = 0;
        }
        let (held, rest) = idx.split_at(k);
        (self.subset(rest), self.subset(held))
    }

    /// Checks every value against the bases' domains.
    pub fn check_domain(&self, bases: &[Basis]) -> Result<()> {
        if bases.len() != self.d {
            return Err(Error::ShapeMismatch(format!("{} bases for d = {}", bases.len(), self.d)));
        }
        let mut buf: Vec<Vec<f64>> = bases.iter().map(|b| vec![0.0; b.size()]).collect();
        for i in 0..self.n() {
            for (nu, b) in bases.iter().enumerate() {
                b.eval_into(self.point(i)[nu], &mut buf[nu])?;
            }
        }
        Ok(())
    }

    /// Writes a CSV with header `x1,…,xd`; dimensions with canonical bases
    /// are written 1-based.
    pub fn write_csv<W: std::io::Write>(&self, w: W, discrete: &[bool]) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record((1..=self.d).map(|k| format!("x{k}")))?;
        for i in 0..self.n() {
            let rec: Vec<String> = self
                .point(i)
                .iter()
                .enumerate()
                .map(|(nu, &v)| if discrete.get(nu).copied().unwrap_or(false) { format!("{}", v as i64 + 1) } else { format!("{v}") })
                .collect();
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, discrete: &[bool]) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let d = rd.headers()?.len();
        let mut points = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            if rec.len() != d {
                return Err(Error::ShapeMismatch("ragged CSV row".into()));
            }
            for (nu, field) in rec.iter().enumerate() {
                let v: f64 = field
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("cannot parse '{field}' as a number")))?;
                points.push(if discrete.get(nu).copied().unwrap_or(false) { v - 1.0 } else { v });
            }
        }
        if points.is_empty() {
            return Err(Error::EmptySample);
        }
        Self::new(d, points)
    }

    pub fn read_csv_path(path: &Path, discrete: &[bool]) -> Result<Self> {
        Self::read_csv(std::fs::File::open(path)?, discrete)
    }
}
