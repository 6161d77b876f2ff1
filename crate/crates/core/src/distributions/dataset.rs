use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Discrete,
    Continuous,
}

/// A sample of `(x, y)` pairs with a shared covariate dimension and
/// nonnegative integer outcomes.
///
/// Covariates are stored row-major in a single buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<u64>,
    support_hint: Option<Vec<u64>>,
    kind: CovariateKind,
    covariate_names: Vec<String>,
    outcome_name: String,
}

impl Dataset {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<u64>, kind: CovariateKind) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::InvalidData("dataset must contain at least one row".into()));
        }
        if x.len() != dim * y.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * y.len(),
                got: x.len(),
                context: "covariate buffer length",
            });
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite covariate in row {}",
                i / dim.max(1)
            )));
        }
        Ok(Self {
            dim,
            x,
            y,
            support_hint: None,
            kind,
            covariate_names: (1..=dim).map(|j| format!("x{j}")).collect(),
            outcome_name: "y".into(),
        })
    }

    pub fn from_rows(rows: &[(Vec<f64>, u64)], kind: CovariateKind) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.0.len());
        let mut x = Vec::with_capacity(dim * rows.len());
        for (i, (xi, _)) in rows.iter().enumerate() {
            if xi.len() != dim {
                return Err(Error::InvalidData(format!(
                    "row {i} has {} covariates, expected {dim}",
                    xi.len()
                )));
            }
            x.extend_from_slice(xi);
        }
        Self::new(dim, x, rows.iter().map(|r| r.1).collect(), kind)
    }

    /// Outcomes only, no covariates.
    pub fn from_outcomes(y: Vec<u64>) -> Result<Self> {
        Self::new(0, Vec::new(), y, CovariateKind::Discrete)
    }

    pub fn with_support_hint(mut self, mut support: Vec<u64>) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        if let Some(bad) = self.y.iter().find(|y| support.binary_search(y).is_err()) {
            return Err(Error::InvalidData(format!(
                "outcome {bad} lies outside the declared support"
            )));
        }
        self.support_hint = Some(support);
        Ok(self)
    }

    pub fn with_names(mut self, covariates: Vec<String>, outcome: String) -> Result<Self> {
        if covariates.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: covariates.len(),
                context: "covariate names",
            });
        }
        self.covariate_names = covariates;
        self.outcome_name = outcome;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> CovariateKind {
        self.kind
    }

    pub fn support_hint(&self) -> Option<&[u64]> {
        self.support_hint.as_deref()
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn x(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn y(&self, i: usize) -> u64 {
        self.y[i]
    }

    pub fn outcomes(&self) -> &[u64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], u64)> + '_ {
        (0..self.len()).map(move |i| (self.x(i), self.y[i]))
    }

    /// Rows at `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(idx.len() * self.dim);
        let mut y = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.len() {
                return Err(Error::InvalidData(format!("row index {i} out of range")));
            }
            x.extend_from_slice(self.x(i));
            y.push(self.y[i]);
        }
        let mut out = Self::new(self.dim, x, y, self.kind)?;
        out.covariate_names = self.covariate_names.clone();
        out.outcome_name = self.outcome_name.clone();
        Ok(out)
    }

    /// Appends the rows of `other`. The support hint is dropped.
    pub fn concat(&self, other: &Dataset) -> Result<Self> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
                context: "concatenated dataset",
            });
        }
        let mut out = self.clone();
        out.x.extend_from_slice(&other.x);
        out.y.extend_from_slice(&other.y);
        out.support_hint = None;
        Ok(out)
    }

    /// Largest observed outcome.
    pub fn max_outcome(&self) -> u64 {
        self.y.iter().copied().max().unwrap_or(0)
    }

    /// Replaces categorical column `col` (integer codes `0..levels`) by
    /// `levels - 1` indicator columns; level 0 is the baseline.
    pub fn one_hot(&self, col: usize, levels: usize) -> Result<Self> {
        if col >= self.dim {
            return Err(Error::InvalidData(format!("no covariate column {col}")));
        }
        if levels < 2 {
            return Err(Error::InvalidData("one-hot encoding needs at least two levels".into()));
        }
        let new_dim = self.dim - 1 + (levels - 1);
        let mut x = Vec::with_capacity(new_dim * self.len());
        for i in 0..self.len() {
            let row = self.x(i);
            let code = row[col];
            if code < 0.0 || code.fract() != 0.0 || code as usize >= levels {
                return Err(Error::InvalidData(format!(
                    "row {i}: {code} is not a level code in 0..{levels}"
                )));
            }
            x.extend_from_slice(&row[..col]);
            x.extend((1..levels).map(|l| if code as usize == l { 1.0 } else { 0.0 }));
            x.extend_from_slice(&row[col + 1..]);
        }
        let mut names: Vec<String> = self.covariate_names[..col].to_vec();
        names.extend((1..levels).map(|l| format!("{}_{l}", self.covariate_names[col])));
        names.extend_from_slice(&self.covariate_names[col + 1..]);
        Self::new(new_dim, x, self.y.clone(), CovariateKind::Discrete)?
            .with_names(names, self.outcome_name.clone())
    }

    /// Reads comma-separated text with a header row. `outcome` names the
    /// outcome column; every other column is a numeric covariate.
    pub fn read_csv(path: impl AsRef<Path>, outcome: &str, kind: CovariateKind) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, path, outcome, kind)
    }

    pub fn from_reader<R: Read>(
        reader: R,
        origin: &Path,
        outcome: &str,
        kind: CovariateKind,
    ) -> Result<Self> {
        let parse_err = |line: u64, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            msg,
        };
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr
            .headers()
            .map_err(|e| parse_err(1, e.to_string()))?
            .clone();
        let outcome_col = headers
            .iter()
            .position(|h| h == outcome)
            .ok_or_else(|| parse_err(1, format!("no outcome column named {outcome:?}")))?;
        let covariate_names: Vec<String> = headers
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != outcome_col)
            .map(|(_, h)| h.to_string())
            .collect();
        let dim = covariate_names.len();
        let mut x = Vec::new();
        let mut y = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| {
                let line = e.position().map_or(0, |p| p.line());
                parse_err(line, e.to_string())
            })?;
            let line = record.position().map_or(0, |p| p.line());
            for (j, field) in record.iter().enumerate() {
                if j == outcome_col {
                    let v: u64 = field.parse().map_err(|_| {
                        parse_err(line, format!("outcome {field:?} is not a nonnegative integer"))
                    })?;
                    y.push(v);
                } else {
                    let v: f64 = field
                        .parse()
                        .map_err(|_| parse_err(line, format!("covariate {field:?} is not a number")))?;
                    if !v.is_finite() {
                        return Err(parse_err(line, format!("covariate {field:?} is not finite")));
                    }
                    x.push(v);
                }
            }
        }
        if y.is_empty() {
            return Err(parse_err(1, "no data rows".into()));
        }
        Self::new(dim, x, y, kind)?.with_names(covariate_names, outcome.to_string())
    }

    /// Writes the header-plus-rows format read by [`Dataset::read_csv`].
    /// Covariates use the shortest round-trip float representation.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let to_io = |e: csv::Error| Error::io("<csv>", std::io::Error::other(e));
        let mut header: Vec<&str> = self.covariate_names.iter().map(String::as_str).collect();
        header.push(&self.outcome_name);
        wtr.write_record(&header).map_err(to_io)?;
        for (x, y) in self.rows() {
            let mut rec: Vec<String> = x.iter().map(|v| format!("{v:?}")).collect();
            rec.push(y.to_string());
            wtr.write_record(&rec).map_err(to_io)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(Dataset::from_outcomes(vec![]).is_err());
        let rows = vec![(vec![1.0], 0), (vec![1.0, 2.0], 1)];
        assert!(Dataset::from_rows(&rows, CovariateKind::Continuous).is_err());
    }

    #[test]
    fn support_hint_must_cover_outcomes() {
        let d = Dataset::from_outcomes(vec![0, 1, 3]).unwrap();
        assert!(d.clone().with_support_hint(vec![0, 1]).is_err());
        assert!(d.with_support_hint(vec![0, 1, 2, 3]).is_ok());
    }

    #[test]
    fn csv_round_trip_and_line_numbers() {
        let text = "a,y,b\n0.5,1,2\n-1,0,3.25\n";
        let d = Dataset::from_reader(text.as_bytes(), Path::new("t.csv"), "y", CovariateKind::Continuous)
            .unwrap();
        assert_eq!(d.dim(), 2);
        assert_eq!(d.x(1), &[-1.0, 3.25]);
        assert_eq!(d.outcomes(), &[1, 0]);

        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let back =
            Dataset::from_reader(buf.as_slice(), Path::new("t.csv"), "y", CovariateKind::Continuous)
                .unwrap();
        assert_eq!(back.x(0), d.x(0));
        assert_eq!(back.outcomes(), d.outcomes());

        let bad = "a,y\n0.5,1\n0.1,-2\n";
        match Dataset::from_reader(bad.as_bytes(), Path::new("b.csv"), "y", CovariateKind::Continuous) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn one_hot_first_level_baseline() {
        let rows = vec![(vec![0.0], 1), (vec![2.0], 0), (vec![3.0], 4)];
        let d = Dataset::from_rows(&rows, CovariateKind::Discrete).unwrap();
        let h = d.one_hot(0, 4).unwrap();
        assert_eq!(h.dim(), 3);
        assert_eq!(h.x(0), &[0.0, 0.0, 0.0]);
        assert_eq!(h.x(1), &[0.0, 1.0, 0.0]);
        assert_eq!(h.x(2), &[0.0, 0.0, 1.0]);
        assert!(d.one_hot(0, 3).is_err());
    }
}
