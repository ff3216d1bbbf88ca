//! Small dense complex linear-algebra helpers shared by the state and
//! dynamics modules.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// Largest elementwise `|A - A†|`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn require_square(m: &CMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Eigen-decomposition of a Hermitian matrix: ascending real eigenvalues and
/// the unitary whose columns are the eigenvectors.
pub fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    (values, vectors)
}

/// `V diag(f(λ)) V†`.
pub fn spectral_map(values: &[f64], vectors: &CMatrix, f: impl Fn(f64) -> C64) -> CMatrix {
    let n = vectors.nrows();
    let mut scaled = vectors.clone();
    for (j, &l) in values.iter().enumerate() {
        let s = f(l);
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    scaled * vectors.adjoint()
}

/// Singular values of a complex matrix, descending, from the spectrum of the
/// smaller Gram matrix. Squared values are accurate to machine precision.
///
/// nalgebra's complex SVD loses accuracy on some 2x2 inputs, so it is avoided.
pub fn singular_values(m: &CMatrix) -> Vec<f64> {
    let gram = if m.nrows() <= m.ncols() {
        m * m.adjoint()
    } else {
        m.adjoint() * m
    };
    let (vals, _) = hermitian_eigen(&gram);
    vals.into_iter().rev().map(|l| l.max(0.0).sqrt()).collect()
}

/// Thin SVD `M = U diag(s) V†` from the Hermitian dilation `[[0, M], [M†, 0]]`,
/// whose eigenvalues are `±s`. Small singular values keep absolute accuracy.
pub struct Svd {
    /// Descending, length `min(rows, cols)`.
    pub values: Vec<f64>,
    pub u: CMatrix,
    pub v: CMatrix,
}

pub fn svd(m: &CMatrix) -> Svd {
    let (r, c) = (m.nrows(), m.ncols());
    let mut h = CMatrix::zeros(r + c, r + c);
    h.view_mut((0, r), (r, c)).copy_from(m);
    h.view_mut((r, 0), (c, r)).copy_from(&m.adjoint());
    let (vals, vecs) = hermitian_eigen(&h);
    let k = r.min(c);
    let top: Vec<usize> = (0..vals.len()).rev().take(k).collect();
    let sq2 = std::f64::consts::SQRT_2;
    let u = CMatrix::from_fn(r, k, |i, j| vecs[(i, top[j])] * sq2);
    let v = CMatrix::from_fn(c, k, |i, j| vecs[(r + i, top[j])] * sq2);
    Svd {
        values: top.iter().map(|&j| vals[j].max(0.0)).collect(),
        u,
        v,
    }
}

pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

pub fn trace(m: &CMatrix) -> C64 {
    (0..m.nrows()).map(|i| m[(i, i)]).sum()
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn outer(v: &[C64]) -> CMatrix {
    let col = DVector::from_column_slice(v);
    &col * col.adjoint()
}

/// Standard complex normal sample (Box-Muller).
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R) -> C64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random::<f64>();
    let r = (-2.0 * u1.ln()).sqrt();
    let th = std::f64::consts::TAU * u2;
    C64::new(r * th.cos(), r * th.sin()) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-ish random unitary: Gram-Schmidt on a complex Gaussian matrix.
pub fn random_unitary<R: rand::Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let mut q = CMatrix::from_fn(d, d, |_, _| complex_gaussian(rng));
    for j in 0..d {
        for k in 0..j {
            let proj: C64 = (0..d).map(|i| q[(i, k)].conj() * q[(i, j)]).sum();
            for i in 0..d {
                let v = q[(i, k)];
                q[(i, j)] -= proj * v;
            }
        }
        let norm = (0..d).map(|i| q[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..d {
            q[(i, j)] /= norm;
        }
    }
    q
}

/// `max |U† U - I|`.
pub fn unitarity_error(u: &CMatrix) -> f64 {
    if u.nrows() != u.ncols() {
        return f64::INFINITY;
    }
    max_abs_diff(&(u.adjoint() * u), &identity(u.nrows()))
}

/// Serde adapter: a complex vector as `[[re, im], ...]`.
pub mod complex_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        let pairs: Vec<[f64; 2]> = v.iter().map(|z| [z.re, z.im]).collect();
        pairs.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let pairs = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(pairs.into_iter().map(|[re, im]| C64::new(re, im)).collect())
    }
}

/// Serde adapter: a complex matrix as rows of `[re, im]` pairs.
pub mod complex_matrix {
    use super::*;
    use serde::de::Error as _;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .map(|j| [m[(i, j)].re, m[(i, j)].im])
                    .collect()
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        from_rows(&rows).map_err(D::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<CMatrix, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err("ragged matrix rows".into());
        }
        Ok(CMatrix::from_fn(nrows, ncols, |i, j| {
            let [re, im] = rows[i][j];
            C64::new(re, im)
        }))
    }
}

/// Serde adapter for `Vec<CMatrix>`.
pub mod complex_matrices {
    use super::*;
    use serde::de::Error as _;

    pub fn serialize<S: Serializer>(ms: &[CMatrix], s: S) -> Result<S::Ok, S::Error> {
        let all: Vec<Vec<Vec<[f64; 2]>>> = ms
            .iter()
            .map(|m| {
                (0..m.nrows())
                    .map(|i| {
                        (0..m.ncols())
                            .map(|j| [m[(i, j)].re, m[(i, j)].im])
                            .collect()
                    })
                    .collect()
            })
            .collect();
        all.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMatrix>, D::Error> {
        let all = Vec::<Vec<Vec<[f64; 2]>>>::deserialize(d)?;
        all.iter()
            .map(|rows| complex_matrix::from_rows(rows).map_err(D::Error::custom))
            .collect()
    }
}
