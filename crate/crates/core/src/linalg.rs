//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Numerical rank via singular values with the usual `max(m,n)·eps·σ_max` cutoff.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let tol = (a.nrows().max(a.ncols()) as f64) * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Cholesky factorization of a symmetric positive-definite matrix, or
/// `RankDeficient` naming the numerical rank when it fails.
pub fn spd_factor(a: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!(
            "expected a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix passed to Cholesky".into()));
    }
    match a.clone().cholesky() {
        Some(c) => Ok(c),
        None => Err(Error::RankDeficient {
            rank: numerical_rank(a),
            cols: a.ncols(),
        }),
    }
}

/// Solve `A x = b` for SPD `A`.
pub fn spd_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    Ok(spd_factor(a)?.solve(b))
}

/// `A⁻¹` for SPD `A`, obtained by back-substitution against the identity
/// through the Cholesky factor. The result is symmetrized.
pub fn spd_inverse_from(chol: &Cholesky<f64, Dyn>) -> DMatrix<f64> {
    let n = chol.l_dirty().nrows();
    let inv = chol.solve(&DMatrix::identity(n, n));
    symmetrize(&inv)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut out = a.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// `X' diag(d) X`, filled from the upper triangle so the result is exactly symmetric.
pub fn weighted_gram(x: &DMatrix<f64>, d: &DVector<f64>) -> DMatrix<f64> {
    let p = x.ncols();
    let mut g = DMatrix::zeros(p, p);
    for i in 0..p {
        let ci = x.column(i);
        for j in i..p {
            let cj = x.column(j);
            let mut s = 0.0;
            for k in 0..x.nrows() {
                s += d[k] * ci[k] * cj[k];
            }
            g[(i, j)] = s;
            g[(j, i)] = s;
        }
    }
    g
}

/// `X' diag(d) y`.
pub fn weighted_cross(x: &DMatrix<f64>, d: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
    let dy = d.component_mul(y);
    x.tr_mul(&dy)
}

/// Rows of a matrix as `Vec<Vec<f64>>` (row-major), for serialization.
pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().cloned().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    let p = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != p) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Serde adapter storing a `DMatrix` as a list of rows.
pub mod serde_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        super::to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        super::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Serde adapter storing a `DVector` as a plain list.
pub mod serde_vec {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}
