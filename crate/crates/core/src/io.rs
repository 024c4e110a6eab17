//! JSON encodings: complex matrices as nested `[re, im]` pairs (row-major
//! rows), model files and measurement-setup files.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::deviation::MeasurementSetup;
use crate::error::{Error, Result};
use crate::lindblad::{GeneratorContext, Lindbladian};
use crate::spectral::{CMatrix, DensityOperator};

/// A matrix entry; plain numbers are accepted as real entries on input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Pair([f64; 2]),
    Real(f64),
}

impl Entry {
    fn value(self) -> Complex64 {
        match self {
            Entry::Pair([re, im]) => Complex64::new(re, im),
            Entry::Real(re) => Complex64::from(re),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MatrixJson(pub Vec<Vec<Entry>>);

impl MatrixJson {
    pub fn from_matrix(m: &CMatrix) -> Self {
        // + 0.0 turns −0.0 into 0.0
        let entry = |z: Complex64| Entry::Pair([z.re + 0.0, z.im + 0.0]);
        Self((0..m.nrows()).map(|i| (0..m.ncols()).map(|j| entry(m[(i, j)])).collect()).collect())
    }

    /// `field` names the JSON location for error messages.
    pub fn to_matrix(&self, field: &str) -> Result<CMatrix> {
        let rows = self.0.len();
        let cols = self.0.first().map_or(0, Vec::len);
        if rows == 0 || cols != rows {
            return Err(Error::InvalidInput(format!("{field}: expected a nonempty square matrix, got {rows}×{cols}")));
        }
        for (i, row) in self.0.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::InvalidInput(format!("{field}[{i}]: row has {} entries, expected {cols}", row.len())));
            }
        }
        let m = CMatrix::from_fn(rows, cols, |i, j| self.0[i][j].value());
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput(format!("{field}: non-finite entry")));
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    #[serde(default)]
    pub name: Option<String>,
    /// Defaults to zero.
    #[serde(default)]
    pub hamiltonian: Option<MatrixJson>,
    pub jumps: Vec<MatrixJson>,
    /// Free-form template parameters, carried along for provenance.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<serde_json::Value>,
}

impl ModelFile {
    pub fn from_lindbladian(name: &str, l: &Lindbladian, template: Option<serde_json::Value>) -> Self {
        Self {
            name: Some(name.to_string()),
            hamiltonian: Some(MatrixJson::from_matrix(l.hamiltonian())),
            jumps: l.jumps().iter().map(MatrixJson::from_matrix).collect(),
            template,
        }
    }

    pub fn to_lindbladian(&self) -> Result<Lindbladian> {
        let jumps = self
            .jumps
            .iter()
            .enumerate()
            .map(|(i, m)| m.to_matrix(&format!("jumps[{i}]")))
            .collect::<Result<Vec<_>>>()?;
        if jumps.is_empty() {
            return Err(Error::InvalidInput("jumps: at least one jump operator is required".into()));
        }
        match &self.hamiltonian {
            Some(h) => Lindbladian::new(h.to_matrix("hamiltonian")?, jumps),
            None => Lindbladian::from_jumps(jumps),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetupFile {
    /// Explicit unit vectors in R^k.
    #[serde(default)]
    pub directions: Option<Vec<Vec<f64>>>,
    /// Shorthand: one standard basis vector per listed jump index.
    #[serde(default)]
    pub jumps: Option<Vec<usize>>,
    pub q: usize,
}

impl SetupFile {
    pub fn to_setup(&self, ctx: GeneratorContext) -> Result<MeasurementSetup> {
        let k = ctx.lindbladian().num_jumps();
        let directions = match (&self.directions, &self.jumps) {
            (Some(d), None) => d.clone(),
            (None, Some(js)) => js
                .iter()
                .map(|&j| {
                    if j >= k {
                        Err(Error::InvalidInput(format!("jumps: index {j} out of range for k = {k}")))
                    } else {
                        Ok(MeasurementSetup::unit_direction(k, j))
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            _ => return Err(Error::InvalidInput("setup: give exactly one of `directions` or `jumps`".into())),
        };
        MeasurementSetup::new(ctx, directions, self.q)
    }
}

/// Parse JSON into `T`, reporting the field path of schema violations.
pub fn parse_json<T: serde::de::DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::InvalidInput(format!("{what}: at `{path}`: {}", e.inner()))
    })
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidInput(format!("cannot read {}: {e}", path.display())))?;
    parse_json(&text, &path.display().to_string())
}

pub fn read_density(path: &std::path::Path) -> Result<DensityOperator> {
    let m: MatrixJson = read_json(path)?;
    DensityOperator::new(m.to_matrix("state")?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{pauli_y, I};

    #[test]
    fn matrix_round_trip() {
        let m = pauli_y() * I;
        let json = serde_json::to_string(&MatrixJson::from_matrix(&m)).unwrap();
        assert_eq!(json, "[[[0.0,0.0],[1.0,0.0]],[[-1.0,0.0],[0.0,0.0]]]");
        let back: MatrixJson = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_matrix("m").unwrap(), m);
        let real: MatrixJson = serde_json::from_str("[[1, 0], [0, 2.5]]").unwrap();
        assert_eq!(real.to_matrix("m").unwrap()[(1, 1)], Complex64::from(2.5));
    }

    #[test]
    fn schema_errors_name_the_field() {
        let err = parse_json::<ModelFile>(r#"{"jumps": [[[1, 2]]], "hamiltonian": [["x"]]}"#, "model").unwrap_err();
        assert!(err.to_string().contains("hamiltonian"), "{err}");
        let model: ModelFile = parse_json(r#"{"jumps": [[[1, 0], [0]]]}"#, "model").unwrap();
        let err = model.to_lindbladian().unwrap_err();
        assert!(err.to_string().contains("jumps[0][1]"), "{err}");
    }
}
