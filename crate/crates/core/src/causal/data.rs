use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::CausalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataMode {
    LinearGaussian,
    MultinomialDirichlet,
}

#[derive(Clone, Debug, PartialEq)]
pub enum DataValues {
    /// Row-major real observations.
    Continuous(Vec<Vec<f64>>),
    /// Row-major category indices with declared arities.
    Discrete {
        rows: Vec<Vec<usize>>,
        arities: Vec<usize>,
    },
}

/// Rectangular observational/interventional dataset. `intervened[r]` names
/// the variable clamped in row `r`, if any.
#[derive(Clone, Debug, PartialEq)]
pub struct ObsDataset {
    pub columns: Vec<String>,
    pub values: DataValues,
    pub intervened: Vec<Option<usize>>,
}

impl ObsDataset {
    pub fn continuous(columns: Vec<String>, rows: Vec<Vec<f64>>) -> Result<Self, CausalError> {
        let n = rows.len();
        let ds = Self {
            columns,
            values: DataValues::Continuous(rows),
            intervened: vec![None; n],
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn discrete(columns: Vec<String>, rows: Vec<Vec<usize>>, arities: Vec<usize>) -> Result<Self, CausalError> {
        let n = rows.len();
        let ds = Self {
            columns,
            values: DataValues::Discrete { rows, arities },
            intervened: vec![None; n],
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn with_interventions(mut self, intervened: Vec<Option<usize>>) -> Result<Self, CausalError> {
        self.intervened = intervened;
        self.validate()?;
        Ok(self)
    }

    pub fn mode(&self) -> DataMode {
        match self.values {
            DataValues::Continuous(_) => DataMode::LinearGaussian,
            DataValues::Discrete { .. } => DataMode::MultinomialDirichlet,
        }
    }

    pub fn num_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn num_rows(&self) -> usize {
        self.intervened.len()
    }

    pub fn validate(&self) -> Result<(), CausalError> {
        let d = self.columns.len();
        let malformed = |m: String| Err(CausalError::Malformed(m));
        let n = match &self.values {
            DataValues::Continuous(rows) => {
                for (r, row) in rows.iter().enumerate() {
                    if row.len() != d {
                        return malformed(format!("row {r} has {} cells, expected {d}", row.len()));
                    }
                    if row.iter().any(|x| !x.is_finite()) {
                        return malformed(format!("row {r} has a non-finite cell"));
                    }
                }
                rows.len()
            }
            DataValues::Discrete { rows, arities } => {
                if arities.len() != d {
                    return Err(CausalError::ArityMismatch(format!(
                        "{} arities declared for {d} variables",
                        arities.len()
                    )));
                }
                for (r, row) in rows.iter().enumerate() {
                    if row.len() != d {
                        return malformed(format!("row {r} has {} cells, expected {d}", row.len()));
                    }
                    for (v, (&x, &k)) in row.iter().zip(arities).enumerate() {
                        if x >= k {
                            return Err(CausalError::ArityMismatch(format!(
                                "row {r}, variable {v}: value {x} outside arity {k}"
                            )));
                        }
                    }
                }
                rows.len()
            }
        };
        if self.intervened.len() != n {
            return malformed("intervention tags do not match row count".into());
        }
        if self.intervened.iter().flatten().any(|&v| v >= d) {
            return malformed("intervention tag names an unknown variable".into());
        }
        Ok(())
    }

    /// Rows repeated `k` times.
    pub fn duplicated(&self, k: usize) -> Self {
        let rep = |n: usize| (0..k).flat_map(move |_| 0..n);
        let n = self.num_rows();
        let values = match &self.values {
            DataValues::Continuous(rows) => DataValues::Continuous(rep(n).map(|i| rows[i].clone()).collect()),
            DataValues::Discrete { rows, arities } => DataValues::Discrete {
                rows: rep(n).map(|i| rows[i].clone()).collect(),
                arities: arities.clone(),
            },
        };
        Self {
            columns: self.columns.clone(),
            values,
            intervened: rep(n).map(|i| self.intervened[i]).collect(),
        }
    }

    /// Reads a CSV with a header of variable names and an optional
    /// `intervened` column holding the clamped variable's name (or empty).
    /// Discrete mode requires `arities`.
    pub fn from_csv(path: &Path, mode: DataMode, arities: Option<Vec<usize>>) -> Result<Self, CausalError> {
        let mut reader = csv::Reader::from_path(path).map_err(|e| CausalError::Malformed(e.to_string()))?;
        Self::from_reader(&mut reader, mode, arities)
    }

    pub fn from_csv_str(text: &str, mode: DataMode, arities: Option<Vec<usize>>) -> Result<Self, CausalError> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        Self::from_reader(&mut reader, mode, arities)
    }

    fn from_reader<R: std::io::Read>(
        reader: &mut csv::Reader<R>,
        mode: DataMode,
        arities: Option<Vec<usize>>,
    ) -> Result<Self, CausalError> {
        let bad = |e: csv::Error| CausalError::Malformed(e.to_string());
        let header = reader.headers().map_err(bad)?.clone();
        let tag_col = header.iter().position(|h| h == "intervened");
        let columns: Vec<String> = header
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != tag_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let mut cont = Vec::new();
        let mut disc = Vec::new();
        let mut intervened = Vec::new();
        for (r, rec) in reader.records().enumerate() {
            let rec = rec.map_err(bad)?;
            let mut cells = Vec::with_capacity(columns.len());
            for (i, cell) in rec.iter().enumerate() {
                if Some(i) == tag_col {
                    let cell = cell.trim();
                    intervened.push(if cell.is_empty() {
                        None
                    } else {
                        Some(columns.iter().position(|c| c == cell).ok_or_else(|| {
                            CausalError::Malformed(format!("row {r}: unknown intervened variable `{cell}`"))
                        })?)
                    });
                } else {
                    cells.push(cell.trim());
                }
            }
            if tag_col.is_none() {
                intervened.push(None);
            }
            if cells.len() != columns.len() {
                return Err(CausalError::Malformed(format!("row {r} is not rectangular")));
            }
            match mode {
                DataMode::LinearGaussian => cont.push(
                    cells
                        .iter()
                        .map(|c| c.parse::<f64>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| CausalError::Malformed(format!("row {r}: {e}")))?,
                ),
                DataMode::MultinomialDirichlet => disc.push(
                    cells
                        .iter()
                        .map(|c| c.parse::<usize>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|e| CausalError::Malformed(format!("row {r}: {e}")))?,
                ),
            }
        }
        let values = match mode {
            DataMode::LinearGaussian => DataValues::Continuous(cont),
            DataMode::MultinomialDirichlet => DataValues::Discrete {
                rows: disc,
                arities: arities.ok_or_else(|| CausalError::ArityMismatch("discrete data needs declared arities".into()))?,
            },
        };
        let ds = Self {
            columns,
            values,
            intervened,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = self.columns.join(",");
        let tagged = self.intervened.iter().any(|t| t.is_some());
        if tagged {
            out.push_str(",intervened");
        }
        out.push('\n');
        for r in 0..self.num_rows() {
            let cells: Vec<String> = match &self.values {
                DataValues::Continuous(rows) => rows[r].iter().map(|x| format!("{x}")).collect(),
                DataValues::Discrete { rows, .. } => rows[r].iter().map(|x| x.to_string()).collect(),
            };
            out.push_str(&cells.join(","));
            if tagged {
                out.push(',');
                if let Some(v) = self.intervened[r] {
                    out.push_str(&self.columns[v]);
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Samples a linear-Gaussian chain `X0 → X1 → … → X_{d−1}` where every
/// variable has noise standard deviation `noise_std` and `X_{i+1}` has
/// weight `weights[i]` on `X_i`.
pub fn linear_gaussian_chain<R: Rng + ?Sized>(
    rows: usize,
    weights: &[f64],
    noise_std: f64,
    rng: &mut R,
) -> ObsDataset {
    let d = weights.len() + 1;
    let noise = Normal::new(0.0, noise_std).expect("valid noise");
    let data: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            let mut row = vec![0.0; d];
            row[0] = noise.sample(rng);
            for i in 1..d {
                row[i] = weights[i - 1] * row[i - 1] + noise.sample(rng);
            }
            row
        })
        .collect();
    let columns = (0..d).map(|i| ((b'A' + i as u8) as char).to_string()).collect();
    ObsDataset::continuous(columns, data).expect("generated data is rectangular")
}
