//! JSON and CSV encodings shared by the library and the command line.
//!
//! Complex scalars are `[re, im]`; matrices are arrays of rows of such
//! pairs; vectors are arrays of pairs.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linops::{CMat, CVec};

pub fn c64_to_pair(c: Complex64) -> [f64; 2] {
    [c.re, c.im]
}

pub fn pair_to_c64(p: [f64; 2]) -> Complex64 {
    Complex64::new(p[0], p[1])
}

pub fn cmat_to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| c64_to_pair(m[(i, j)])).collect())
        .collect()
}

pub fn rows_to_cmat(rows: &[Vec<[f64; 2]>]) -> Result<CMat, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    let mut m = DMatrix::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, p) in row.iter().enumerate() {
            if !p[0].is_finite() || !p[1].is_finite() {
                return Err(format!("non-finite matrix entry at ({i}, {j})"));
            }
            m[(i, j)] = pair_to_c64(*p);
        }
    }
    Ok(m)
}

pub fn cvec_to_pairs(v: &CVec) -> Vec<[f64; 2]> {
    v.iter().copied().map(c64_to_pair).collect()
}

pub fn pairs_to_cvec(p: &[[f64; 2]]) -> CVec {
    CVec::from_iterator(p.len(), p.iter().copied().map(pair_to_c64))
}

pub mod serde_c64 {
    use super::*;

    pub fn serialize<S: Serializer>(c: &Complex64, s: S) -> Result<S::Ok, S::Error> {
        c64_to_pair(*c).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Complex64, D::Error> {
        Ok(pair_to_c64(<[f64; 2]>::deserialize(d)?))
    }
}

pub mod serde_c64_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Complex64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().copied().map(c64_to_pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Complex64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(d)?
            .into_iter()
            .map(pair_to_c64)
            .collect())
    }
}

pub mod serde_cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        cmat_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        rows_to_cmat(&rows).map_err(D::Error::custom)
    }
}

pub mod serde_cmat_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(cmat_to_rows).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?
            .iter()
            .map(|r| rows_to_cmat(r).map_err(D::Error::custom))
            .collect()
    }
}

pub mod serde_cvec_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CVec], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(cvec_to_pairs).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVec>, D::Error> {
        Ok(Vec::<Vec<[f64; 2]>>::deserialize(d)?
            .iter()
            .map(|p| pairs_to_cvec(p))
            .collect())
    }
}

/// Minimal CSV writer: comma separated, header row, LF line endings.
#[derive(Debug, Clone)]
pub struct Csv {
    out: String,
    width: usize,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        let mut out = String::new();
        let cols: Vec<&str> = header.iter().map(AsRef::as_ref).collect();
        out.push_str(&cols.join(","));
        out.push('\n');
        Csv {
            out,
            width: header.len(),
        }
    }

    pub fn row(&mut self, values: &[f64]) {
        debug_assert_eq!(values.len(), self.width);
        let mut line = String::new();
        for (k, v) in values.iter().enumerate() {
            if k > 0 {
                line.push(',');
            }
            // `{:?}` keeps a round-trippable shortest representation.
            let _ = write!(line, "{v:?}");
        }
        self.out.push_str(&line);
        self.out.push('\n');
    }

    pub fn finish(self) -> String {
        self.out
    }
}

/// Header `re_i_j,im_i_j` for every entry of an `rows x cols` matrix.
pub fn matrix_header(rows: usize, cols: usize) -> Vec<String> {
    let mut h = Vec::with_capacity(2 * rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            h.push(format!("re_{i}_{j}"));
            h.push(format!("im_{i}_{j}"));
        }
    }
    h
}

pub fn matrix_entries(m: &CMat) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)].re);
            v.push(m[(i, j)].im);
        }
    }
    v
}

/// A square matrix dumped as one CSV row per matrix row.
pub fn matrix_csv(m: &CMat) -> String {
    let header: Vec<String> = (0..m.ncols())
        .flat_map(|j| [format!("re_{j}"), format!("im_{j}")])
        .collect();
    let mut csv = Csv::new(&header);
    for i in 0..m.nrows() {
        let row: Vec<f64> = (0..m.ncols())
            .flat_map(|j| [m[(i, j)].re, m[(i, j)].im])
            .collect();
        csv.row(&row);
    }
    csv.finish()
}
