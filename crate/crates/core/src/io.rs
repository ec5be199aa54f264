//! JSON instance files.
//!
//! ```json
//! { "n": 1, "k": 2, "name": "x^2 - 1",
//!   "coefficients": [ [[[-1.0, 0.0]]], [[[0.0, 0.0]]], [[[1.0, 0.0]]] ] }
//! ```
//!
//! Entries are `[re, im]` pairs; plain numbers are accepted on input as real
//! entries. Output always uses pairs.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::linalg::{CMat, C64};
use crate::polyalg::MatrixPolynomial;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
enum EntryIn {
    Pair([f64; 2]),
    Real(f64),
}

type Coefficients = Vec<Vec<Vec<[f64; 2]>>>;

fn de_coefficients<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Coefficients, D::Error> {
    let raw: Vec<Vec<Vec<EntryIn>>> = Vec::deserialize(d)?;
    Ok(raw
        .into_iter()
        .map(|m| {
            m.into_iter()
                .map(|row| {
                    row.into_iter()
                        .map(|e| match e {
                            EntryIn::Pair(p) => p,
                            EntryIn::Real(x) => [x, 0.0],
                        })
                        .collect()
                })
                .collect()
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub n: usize,
    pub k: usize,
    /// `k + 1` row-major `n × n` matrices of `[re, im]` pairs.
    #[serde(deserialize_with = "de_coefficients")]
    pub coefficients: Coefficients,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl InstanceFile {
    pub fn from_polynomial(poly: &MatrixPolynomial) -> Self {
        let n = poly.n();
        let coefficients = poly
            .coeffs()
            .iter()
            .map(|a| (0..n).map(|i| (0..n).map(|j| [a[(i, j)].re, a[(i, j)].im]).collect()).collect())
            .collect();
        InstanceFile { n, k: poly.degree(), coefficients, name: None, source: None }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    pub fn to_polynomial(&self) -> Result<MatrixPolynomial> {
        if self.coefficients.len() != self.k + 1 {
            return Err(Error::Parse(format!(
                "expected k + 1 = {} coefficient matrices, found {}",
                self.k + 1,
                self.coefficients.len()
            )));
        }
        let mut coeffs = Vec::with_capacity(self.k + 1);
        for (idx, m) in self.coefficients.iter().enumerate() {
            if m.len() != self.n || m.iter().any(|row| row.len() != self.n) {
                return Err(Error::Parse(format!("coefficient A_{idx} is not {0}×{0}", self.n)));
            }
            coeffs.push(CMat::from_fn(self.n, self.n, |i, j| {
                let [re, im] = m[i][j];
                C64::new(re, im)
            }));
        }
        MatrixPolynomial::new(coeffs).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance files always serialize")
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }
}

pub fn read_polynomial(path: &Path) -> Result<MatrixPolynomial> {
    InstanceFile::read(path)?.to_polynomial()
}

/// Parses `RE` or `RE,IM`.
pub fn parse_complex(s: &str) -> Result<C64> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let num = |t: &str| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}' in '{s}'")));
    match parts.as_slice() {
        [re] => Ok(C64::new(num(re)?, 0.0)),
        [re, im] => Ok(C64::new(num(re)?, num(im)?)),
        _ => Err(Error::Parse(format!("expected RE or RE,IM, got '{s}'"))),
    }
}
