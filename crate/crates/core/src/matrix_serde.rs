//! Dense matrices serialized as `{ "rows", "cols", "data" }` with `data` in
//! row-major order.

use nalgebra::DMatrix;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
struct RowMajor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

pub fn to_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        out.extend(m.row(i).iter().copied());
    }
    out
}

pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    RowMajor {
        rows: m.nrows(),
        cols: m.ncols(),
        data: to_row_major(m),
    }
    .serialize(s)
}

pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
    let r = RowMajor::deserialize(d)?;
    if r.rows * r.cols != r.data.len() {
        return Err(serde::de::Error::custom(format!(
            "matrix {}x{} has {} entries",
            r.rows,
            r.cols,
            r.data.len()
        )));
    }
    Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
}

pub mod option {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref()
            .map(|m| RowMajor {
                rows: m.nrows(),
                cols: m.ncols(),
                data: to_row_major(m),
            })
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        Option::<RowMajor>::deserialize(d)?
            .map(|r| {
                if r.rows * r.cols != r.data.len() {
                    return Err(serde::de::Error::custom("matrix shape does not match data"));
                }
                Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
            })
            .transpose()
    }
}

pub mod vec {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[DMatrix<f64>], s: S) -> Result<S::Ok, S::Error> {
        ms.iter()
            .map(|m| RowMajor {
                rows: m.nrows(),
                cols: m.ncols(),
                data: to_row_major(m),
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<DMatrix<f64>>, D::Error> {
        Vec::<RowMajor>::deserialize(d)?
            .into_iter()
            .map(|r| {
                if r.rows * r.cols != r.data.len() {
                    return Err(serde::de::Error::custom("matrix shape does not match data"));
                }
                Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
            })
            .collect()
    }
}
