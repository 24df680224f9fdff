//! Serialize `DMatrix` as an array of rows and `DVector` as a flat array.

pub mod matrix {
    use nalgebra::DMatrix;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        if m.nrows() == 0 {
            // keep the column count for empty matrices
            return (Vec::<Vec<f64>>::new(), m.ncols()).serialize(s);
        }
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Rows(Vec<Vec<f64>>),
            Empty(serde::de::IgnoredAny, usize),
        }
        match Repr::deserialize(d)? {
            Repr::Empty(_, cols) => Ok(DMatrix::zeros(0, cols)),
            Repr::Rows(rows) => super::from_rows(&rows).map_err(D::Error::custom),
        }
    }
}

pub mod vector {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        Ok(DVector::from_vec(Vec::<f64>::deserialize(d)?))
    }
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<nalgebra::DMatrix<f64>, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    Ok(nalgebra::DMatrix::from_fn(nrows, ncols, |r, c| rows[r][c]))
}
