use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Point observations, optionally with covariates and replicate labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ObservationSet {
    pub locations: Vec<[f64; 2]>,
    pub values: Vec<f64>,
    /// `n × p` covariates; `None` means no fixed effects.
    pub design: Option<DMatrix<f64>>,
    pub replicate: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    x: f64,
    y: f64,
    value: f64,
    #[serde(default)]
    replicate: Option<usize>,
}

impl ObservationSet {
    pub fn new(locations: Vec<[f64; 2]>, values: Vec<f64>, design: Option<DMatrix<f64>>, replicate: Option<Vec<usize>>) -> Result<Self> {
        let n = values.len();
        if locations.len() != n {
            return Err(Error::Shape(format!("{} locations for {} values", locations.len(), n)));
        }
        if let Some(d) = &design {
            if d.nrows() != n {
                return Err(Error::Shape(format!("design has {} rows for {} values", d.nrows(), n)));
            }
            if d.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite covariate".into()));
            }
        }
        let replicate = replicate.unwrap_or_else(|| vec![0; n]);
        if replicate.len() != n {
            return Err(Error::Shape(format!("{} replicate ids for {} values", replicate.len(), n)));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value in row {i}")));
        }
        if let Some(i) = locations.iter().position(|p| !(p[0].is_finite() && p[1].is_finite())) {
            return Err(Error::InvalidArgument(format!("non-finite location in row {i}")));
        }
        Ok(Self { locations, values, design, replicate })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    /// Single-replicate set without covariates.
    pub fn simple(locations: Vec<[f64; 2]>, values: Vec<f64>) -> Result<Self> {
        Self::new(locations, values, None, None)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Row indices per replicate, ordered by replicate id.
    pub fn replicate_rows(&self) -> Vec<Vec<usize>> {
        let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (i, &r) in self.replicate.iter().enumerate() {
            m.entry(r).or_default().push(i);
        }
        m.into_values().collect()
    }

    /// Subset of rows, preserving order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            locations: rows.iter().map(|&i| self.locations[i]).collect(),
            values: rows.iter().map(|&i| self.values[i]).collect(),
            design: self.design.as_ref().map(|d| d.select_rows(rows)),
            replicate: rows.iter().map(|&i| self.replicate[i]).collect(),
        }
    }

    /// Reads `x,y,value[,replicate]`.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let (mut locs, mut vals, mut reps) = (Vec::new(), Vec::new(), Vec::new());
        for row in rdr.deserialize() {
            let r: Row = row?;
            locs.push([r.x, r.y]);
            vals.push(r.value);
            reps.push(r.replicate.unwrap_or(0));
        }
        Self::new(locs, vals, None, Some(reps))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for i in 0..self.len() {
            w.serialize(Row {
                x: self.locations[i][0],
                y: self.locations[i][1],
                value: self.values[i],
                replicate: Some(self.replicate[i]),
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
