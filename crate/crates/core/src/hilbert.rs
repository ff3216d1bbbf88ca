//! Finitely fine-grained Hilbert space: quantized amplitudes, tensor-product
//! states, density matrices, partial traces, entanglement entropy and the
//! block (factorization) structure that state information is charged on.
//!
//! Subsystem indices are zero-based. Amplitudes are laid out in mixed radix
//! over `dims` with subsystem 0 the most significant digit.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, C64, ONE, ZERO};
use crate::magnitude::{LogQuantity, Unit};

/// Dense states are capped at `2^22` amplitudes.
pub const MAX_LOG2_DIM: u32 = 22;
pub const MAX_AMPLITUDES: usize = 1 << MAX_LOG2_DIM;

/// Normalization tolerance for [`PureState::new`].
pub const NORM_TOLERANCE: f64 = 1e-12;

/// Default singular-value cutoff below which a cut counts as separable.
pub const SEPARABILITY_TOLERANCE: f64 = 1e-10;

/// Bits per complex amplitude; `mu/2` bits per real component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FineGraining {
    mu: u32,
}

impl FineGraining {
    pub fn new(mu: u32) -> Result<Self> {
        if mu < 4 || !mu.is_multiple_of(2) {
            return Err(Error::Domain(format!("mu must be even and >= 4, got {mu}")));
        }
        if mu / 2 > 52 {
            return Err(Error::Domain(format!(
                "mu = {mu} resolves below f64 precision; at most 104 bits are supported"
            )));
        }
        Ok(Self { mu })
    }

    pub fn mu(&self) -> u32 {
        self.mu
    }

    pub fn half(&self) -> u32 {
        self.mu / 2
    }

    /// Grid step per real component, `2^(-mu/2)`.
    pub fn step(&self) -> f64 {
        (-(self.half() as f64)).exp2()
    }

    /// Smallest resolvable Fubini-Study angle, `2^(-mu/2)`.
    pub fn min_resolvable_angle(&self) -> f64 {
        self.step()
    }
}

impl TryFrom<u32> for FineGraining {
    type Error = Error;
    fn try_from(mu: u32) -> Result<Self> {
        Self::new(mu)
    }
}

impl From<FineGraining> for u32 {
    fn from(g: FineGraining) -> u32 {
        g.mu
    }
}

pub fn total_dim(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::Dimension(format!(
            "invalid subsystem dimensions {dims:?}"
        )));
    }
    dims.iter().try_fold(1usize, |acc, &d| {
        acc.checked_mul(d)
            .filter(|&t| t <= MAX_AMPLITUDES)
            .ok_or(Error::TooLarge(acc.saturating_mul(d)))
    })
}

/// Digits of `index` in mixed radix over `dims`.
pub fn digits(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = index % d;
        index /= d;
    }
    out
}

pub fn index_of(digits: &[usize], dims: &[usize]) -> usize {
    digits.iter().zip(dims).fold(0, |acc, (&x, &d)| acc * d + x)
}

fn validate_subset(subset: &[usize], n: usize) -> Result<Vec<usize>> {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.len() != subset.len() || s.iter().any(|&i| i >= n) {
        return Err(Error::Subsystem(format!(
            "{subset:?} is not a set of distinct indices below {n}"
        )));
    }
    Ok(s)
}

fn complement(subset: &[usize], n: usize) -> Vec<usize> {
    (0..n).filter(|i| !subset.contains(i)).collect()
}

/// A normalized state vector over a tensor product of subsystems.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawState")]
pub struct PureState {
    dims: Vec<usize>,
    #[serde(with = "linalg::complex_vec")]
    amps: Vec<C64>,
}

#[derive(Deserialize)]
struct RawState {
    dims: Vec<usize>,
    #[serde(with = "linalg::complex_vec")]
    amps: Vec<C64>,
}

impl TryFrom<RawState> for PureState {
    type Error = Error;
    fn try_from(raw: RawState) -> Result<Self> {
        PureState::new(raw.dims, raw.amps)
    }
}

impl PureState {
    /// Validating constructor: length must match and the norm must be one to
    /// within [`NORM_TOLERANCE`].
    pub fn new(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let state = Self::from_parts(dims, amps)?;
        let n = state.norm_sqr();
        if (n - 1.0).abs() > NORM_TOLERANCE {
            return Err(Error::Domain(format!("state norm^2 is {n}, expected 1")));
        }
        Ok(state)
    }

    /// Rescales `amps` to unit norm.
    pub fn normalized(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let mut state = Self::from_parts(dims, amps)?;
        let n = state.norm_sqr().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::Domain("cannot normalize a zero vector".into()));
        }
        state.amps.iter_mut().for_each(|a| *a /= n);
        Ok(state)
    }

    fn from_parts(dims: Vec<usize>, amps: Vec<C64>) -> Result<Self> {
        let d = total_dim(&dims)?;
        if amps.len() != d {
            return Err(Error::Dimension(format!(
                "{} amplitudes for dims {dims:?} (expected {d})",
                amps.len()
            )));
        }
        Ok(Self { dims, amps })
    }

    /// For results of norm-preserving operations; skips the norm check.
    pub(crate) fn from_parts_unchecked(dims: Vec<usize>, amps: Vec<C64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), amps.len());
        Self { dims, amps }
    }

    pub fn basis(dims: Vec<usize>, index: usize) -> Result<Self> {
        let d = total_dim(&dims)?;
        if index >= d {
            return Err(Error::Dimension(format!("basis index {index} >= {d}")));
        }
        let mut amps = vec![ZERO; d];
        amps[index] = ONE;
        Ok(Self { dims, amps })
    }

    pub fn from_real(dims: Vec<usize>, amps: &[f64]) -> Result<Self> {
        Self::new(dims, amps.iter().map(|&x| C64::new(x, 0.0)).collect())
    }

    /// Tensor product of single-factor states in order.
    pub fn product(factors: &[PureState]) -> Result<Self> {
        let (first, rest) = factors
            .split_first()
            .ok_or_else(|| Error::Dimension("empty product".into()))?;
        rest.iter()
            .try_fold(first.clone(), |acc, f| tensor(&acc, f))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn n_subsystems(&self) -> usize {
        self.dims.len()
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<C64> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(self
            .amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    pub fn fidelity(&self, other: &PureState) -> Result<f64> {
        Ok(self.inner(other)?.norm_sqr())
    }

    pub fn density(&self) -> DensityMatrix {
        DensityMatrix {
            dims: self.dims.clone(),
            mat: linalg::outer(&self.amps),
        }
    }

    /// Amplitudes reshaped as a `d_A x d_B` matrix for the cut
    /// `part_a | complement`; rows and columns in ascending subsystem order.
    pub fn amplitude_matrix(&self, part_a: &[usize]) -> Result<CMatrix> {
        let n = self.n_subsystems();
        let a = validate_subset(part_a, n)?;
        let b = complement(&a, n);
        let dims_a: Vec<usize> = a.iter().map(|&i| self.dims[i]).collect();
        let dims_b: Vec<usize> = b.iter().map(|&i| self.dims[i]).collect();
        let da: usize = dims_a.iter().product();
        let db: usize = dims_b.iter().product();
        let mut m = CMatrix::zeros(da, db);
        // Row/column contribution of each subsystem digit, so an index maps in O(n).
        let n_sub = self.dims.len();
        let mut row_weight = vec![0usize; n_sub];
        let mut col_weight = vec![0usize; n_sub];
        let mut w = 1;
        for &s in a.iter().rev() {
            row_weight[s] = w;
            w *= self.dims[s];
        }
        w = 1;
        for &s in b.iter().rev() {
            col_weight[s] = w;
            w *= self.dims[s];
        }
        let mut dg = vec![0usize; n_sub];
        let (mut r, mut c) = (0usize, 0usize);
        for &amp in self.amps.iter() {
            m[(r, c)] = amp;
            // Odometer increment, least significant subsystem last.
            for s in (0..n_sub).rev() {
                dg[s] += 1;
                r += row_weight[s];
                c += col_weight[s];
                if dg[s] < self.dims[s] {
                    break;
                }
                r -= row_weight[s] * self.dims[s];
                c -= col_weight[s] * self.dims[s];
                dg[s] = 0;
            }
        }
        Ok(m)
    }

    /// Reduced density operator on `keep` (ascending order).
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let keep = validate_subset(keep, self.n_subsystems())?;
        if keep.is_empty() {
            return Err(Error::Subsystem("keep set is empty".into()));
        }
        let m = self.amplitude_matrix(&keep)?;
        Ok(DensityMatrix {
            dims: keep.iter().map(|&i| self.dims[i]).collect(),
            mat: &m * m.adjoint(),
        })
    }

    /// Schmidt coefficients across `part_a | rest`, descending.
    pub fn schmidt_coefficients(&self, part_a: &[usize]) -> Result<Vec<f64>> {
        Ok(linalg::singular_values(&self.amplitude_matrix(part_a)?))
    }

    /// Apply a single-subsystem operator in place of identity on `site`.
    pub fn apply_local(&self, site: usize, op: &CMatrix) -> Result<PureState> {
        if site >= self.n_subsystems()
            || op.nrows() != self.dims[site]
            || op.ncols() != self.dims[site]
        {
            return Err(Error::Dimension(format!(
                "local operator {}x{} on site {site} of {:?}",
                op.nrows(),
                op.ncols(),
                self.dims
            )));
        }
        let d = self.dims[site];
        let inner: usize = self.dims[site + 1..].iter().product();
        let mut out = vec![ZERO; self.amps.len()];
        for (idx, slot) in out.iter_mut().enumerate() {
            let x = (idx / inner) % d;
            let base = idx - x * inner;
            *slot = (0..d)
                .map(|y| op[(x, y)] * self.amps[base + y * inner])
                .sum();
        }
        Ok(PureState::from_parts_unchecked(self.dims.clone(), out))
    }
}

/// A density operator over a tensor product of subsystems.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    dims: Vec<usize>,
    mat: CMatrix,
}

impl DensityMatrix {
    /// Validating constructor: Hermitian and unit trace to 1e-10, eigenvalues
    /// no lower than -1e-10.
    pub fn new(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        let rho = Self::from_parts(dims, mat)?;
        let herm = linalg::hermiticity_error(&rho.mat);
        if herm > 1e-10 {
            return Err(Error::NotHermitian(herm));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("density trace is {tr}, expected 1")));
        }
        let min_eig = rho.min_eigenvalue();
        if min_eig < -1e-10 {
            return Err(Error::Domain(format!("negative eigenvalue {min_eig}")));
        }
        Ok(rho)
    }

    pub(crate) fn from_parts(dims: Vec<usize>, mat: CMatrix) -> Result<Self> {
        let d = total_dim(&dims)?;
        if mat.nrows() != d || mat.ncols() != d {
            return Err(Error::Dimension(format!(
                "{}x{} matrix for dims {dims:?}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        Ok(Self { dims, mat })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    pub fn into_matrix(self) -> CMatrix {
        self.mat
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.mat).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigen(&self.mat).0
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    /// Base-2 von Neumann entropy.
    pub fn von_neumann_entropy(&self) -> f64 {
        entropy_bits(self.eigenvalues())
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "{:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(linalg::max_abs_diff(&self.mat, &other.mat))
    }
}

/// `-sum p log2 p` over the positive weights.
pub fn entropy_bits(weights: impl IntoIterator<Item = f64>) -> f64 {
    weights
        .into_iter()
        .filter(|&p| p > 1e-300)
        .map(|p| -p * p.log2())
        .sum::<f64>()
        .max(0.0)
}

pub fn tensor(a: &PureState, b: &PureState) -> Result<PureState> {
    let mut dims = a.dims.clone();
    dims.extend_from_slice(&b.dims);
    total_dim(&dims)?;
    let amps = a
        .amps
        .iter()
        .flat_map(|x| b.amps.iter().map(move |y| x * y))
        .collect();
    Ok(PureState::from_parts_unchecked(dims, amps))
}

/// Trace out everything except `keep`. The result's subsystems are in
/// ascending index order.
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    let n = rho.dims.len();
    let keep = validate_subset(keep, n)?;
    if keep.is_empty() {
        return Err(Error::Subsystem("keep set is empty".into()));
    }
    let discard = complement(&keep, n);
    let dims_k: Vec<usize> = keep.iter().map(|&i| rho.dims[i]).collect();
    let dims_d: Vec<usize> = discard.iter().map(|&i| rho.dims[i]).collect();
    let dk: usize = dims_k.iter().product();
    let dd: usize = dims_d.iter().product();

    // full index of (kept, discarded) multi-index pair
    let mut full = vec![0usize; dk * dd];
    let mut dg = vec![0; n];
    for ki in 0..dk {
        let kd = digits(ki, &dims_k);
        for di in 0..dd {
            let ddg = digits(di, &dims_d);
            for (k, &s) in keep.iter().enumerate() {
                dg[s] = kd[k];
            }
            for (k, &s) in discard.iter().enumerate() {
                dg[s] = ddg[k];
            }
            full[ki * dd + di] = index_of(&dg, &rho.dims);
        }
    }
    let out = DMatrix::from_fn(dk, dk, |a, b| {
        (0..dd)
            .map(|r| rho.mat[(full[a * dd + r], full[b * dd + r])])
            .sum()
    });
    Ok(DensityMatrix {
        dims: dims_k,
        mat: out,
    })
}

/// Fubini-Study angle `arccos |<a|b>|` in `[0, pi/2]`.
pub fn fubini_study_angle(a: &PureState, b: &PureState) -> Result<f64> {
    Ok(a.inner(b)?.norm().min(1.0).acos())
}

/// Von Neumann entropy (bits) of the reduced state on `cut`.
pub fn entanglement_entropy(state: &PureState, cut: &[usize]) -> Result<f64> {
    let s = state.schmidt_coefficients(cut)?;
    Ok(entropy_bits(s.iter().map(|x| x * x)))
}

/// Shannon state information `(D - 1) mu` of a `D`-dimensional system.
pub fn shannon_state_information(d: u64, mu: u64) -> Result<f64> {
    if d < 1 || mu < 2 {
        return Err(Error::Domain(format!(
            "need D >= 1 and mu >= 2, got D={d}, mu={mu}"
        )));
    }
    Ok((d - 1) as f64 * mu as f64)
}

/// Result of snapping a state onto the amplitude grid.
#[derive(Debug, Clone)]
pub struct Quantized {
    pub state: PureState,
    /// Largest per-component rounding error before renormalization.
    pub max_component_error: f64,
    /// Norm of the snapped vector before renormalization.
    pub pre_norm: f64,
}

/// Round each real and imaginary component to the nearest multiple of
/// `2^(-mu/2)` in `[-1, 1]`, ties away from zero.
pub fn snap_to_grid(amps: &[C64], g: FineGraining) -> Vec<C64> {
    let step = g.step();
    let snap = |x: f64| ((x / step).round() * step).clamp(-1.0, 1.0);
    amps.iter()
        .map(|a| C64::new(snap(a.re), snap(a.im)))
        .collect()
}

pub fn quantize_report(state: &PureState, g: FineGraining) -> Result<Quantized> {
    let snapped = snap_to_grid(&state.amps, g);
    let max_component_error = state
        .amps
        .iter()
        .zip(&snapped)
        .map(|(a, q)| (a.re - q.re).abs().max((a.im - q.im).abs()))
        .fold(0.0, f64::max);
    let pre_norm = snapped.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
    if pre_norm == 0.0 {
        return Err(Error::QuantizedToZero(g.mu()));
    }
    let amps = snapped.into_iter().map(|a| a / pre_norm).collect();
    Ok(Quantized {
        state: PureState::from_parts_unchecked(state.dims.clone(), amps),
        max_component_error,
        pre_norm,
    })
}

/// Snap to the `mu` grid and renormalize.
pub fn quantize(state: &PureState, g: FineGraining) -> Result<PureState> {
    quantize_report(state, g).map(|q| q.state)
}

/// Partition of the subsystems into irreducible tensor factors.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorizationStructure {
    /// Blocks of subsystem indices, each ascending, ordered by first index.
    pub blocks: Vec<Vec<usize>>,
    pub block_dims: Vec<usize>,
}

impl FactorizationStructure {
    pub fn singletons(dims: &[usize]) -> Self {
        Self {
            blocks: (0..dims.len()).map(|i| vec![i]).collect(),
            block_dims: dims.to_vec(),
        }
    }

    pub fn is_fully_separable(&self) -> bool {
        self.blocks.iter().all(|b| b.len() == 1)
    }

    pub fn largest_block_dim(&self) -> usize {
        self.block_dims.iter().copied().max().unwrap_or(1)
    }

    pub fn largest_block_len(&self) -> usize {
        self.blocks.iter().map(Vec::len).max().unwrap_or(0)
    }

    /// `mu * sum over blocks of prod D_i`.
    pub fn state_information(&self, mu: f64) -> Result<LogQuantity> {
        let cells: f64 = self.block_dims.iter().map(|&d| d as f64).sum();
        LogQuantity::from_linear(mu * cells, Unit::Bits)
    }

    /// `mu * prod D_i` of the largest block.
    pub fn largest_block_information(&self, mu: f64) -> Result<LogQuantity> {
        LogQuantity::from_linear(mu * self.largest_block_dim() as f64, Unit::Bits)
    }
}

/// Block structure plus one normalized state per block.
#[derive(Debug, Clone)]
pub struct Factorization {
    pub structure: FactorizationStructure,
    pub factors: Vec<PureState>,
}

impl Factorization {
    /// Reassemble the full state in the original subsystem order.
    pub fn reassemble(&self, dims: &[usize]) -> Result<PureState> {
        let d = total_dim(dims)?;
        let mut amps = vec![ZERO; d];
        for (idx, slot) in amps.iter_mut().enumerate() {
            let dg = digits(idx, dims);
            let mut z = ONE;
            for (block, factor) in self.structure.blocks.iter().zip(&self.factors) {
                let local: Vec<usize> = block.iter().map(|&s| dg[s]).collect();
                z *= factor.amps[index_of(&local, factor.dims())];
            }
            *slot = z;
        }
        Ok(PureState::from_parts_unchecked(dims.to_vec(), amps))
    }
}

/// Finest product partition of `state`: a cut counts as separable when its
/// second Schmidt coefficient is below `tol`.
pub fn factorize(state: &PureState, tol: f64) -> FactorizationStructure {
    factorize_full(state, tol).structure
}

pub fn factorize_full(state: &PureState, tol: f64) -> Factorization {
    let all: Vec<usize> = (0..state.n_subsystems()).collect();
    let mut parts = Vec::new();
    split_block(state.clone(), all, tol, &mut parts);
    parts.sort_by_key(|(block, _)| block[0]);
    let structure = FactorizationStructure {
        blocks: parts.iter().map(|(b, _)| b.clone()).collect(),
        block_dims: parts.iter().map(|(_, s)| s.dim()).collect(),
    };
    Factorization {
        structure,
        factors: parts.into_iter().map(|(_, s)| s).collect(),
    }
}

/// `local` is the block state over `labels` (global subsystem indices).
fn split_block(
    local: PureState,
    labels: Vec<usize>,
    tol: f64,
    out: &mut Vec<(Vec<usize>, PureState)>,
) {
    let k = labels.len();
    if k == 1 {
        out.push((labels, local));
        return;
    }
    for size in 1..=k / 2 {
        for subset in combinations(k, size) {
            // halves of an even split are visited twice; keep the one holding 0
            if 2 * size == k && subset[0] != 0 {
                continue;
            }
            let m = local.amplitude_matrix(&subset).expect("valid subset");
            if !rank_one_candidate(&m, tol) {
                continue;
            }
            let svd = linalg::svd(&m);
            if svd.values.get(1).copied().unwrap_or(0.0) >= tol {
                continue;
            }
            let rest = complement(&subset, k);
            let dims_a: Vec<usize> = subset.iter().map(|&i| local.dims[i]).collect();
            let dims_b: Vec<usize> = rest.iter().map(|&i| local.dims[i]).collect();
            // amps ≈ s0 u0 ⊗ conj(v0); s0 is 1 up to rounding
            let amps_a: Vec<C64> = svd.u.column(0).iter().copied().collect();
            let amps_b: Vec<C64> = svd.v.column(0).iter().map(|z| z.conj()).collect();
            let fa = PureState::normalized(dims_a, amps_a).expect("nonzero factor");
            let fb = PureState::normalized(dims_b, amps_b).expect("nonzero factor");
            let labels_a: Vec<usize> = subset.iter().map(|&i| labels[i]).collect();
            let labels_b: Vec<usize> = rest.iter().map(|&i| labels[i]).collect();
            split_block(fa, labels_a, tol, out);
            split_block(fb, labels_b, tol, out);
            return;
        }
    }
    out.push((labels, local));
}

/// Cheap screen: a rank-one matrix equals the outer product through its largest entry.
fn rank_one_candidate(m: &CMatrix, tol: f64) -> bool {
    let mut best = (0, 0, 0.0);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let a = m[(i, j)].norm();
            if a > best.2 {
                best = (i, j, a);
            }
        }
    }
    if best.2 == 0.0 {
        return true;
    }
    let (pi, pj, _) = best;
    let pivot = m[(pi, pj)];
    let slack = 10.0 * tol + 1e-6;
    for j in 0..m.ncols() {
        let cj = m[(pi, j)] / pivot;
        for i in 0..m.nrows() {
            if (m[(i, j)] - m[(i, pj)] * cj).norm() > slack {
                return false;
            }
        }
    }
    true
}

/// All `size`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..size).collect();
    if size > n {
        return out;
    }
    loop {
        out.push(cur.clone());
        let mut i = size;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] != i + n - size {
                break;
            }
            if i == 0 {
                return out;
            }
        }
        cur[i] += 1;
        for j in i + 1..size {
            cur[j] = cur[j - 1] + 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_3, FRAC_PI_4};

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn bell() -> PureState {
        PureState::from_real(vec![2, 2], &[FRAC_1_SQRT_2, 0.0, 0.0, FRAC_1_SQRT_2]).unwrap()
    }

    fn ghz3() -> PureState {
        let mut a = vec![0.0; 8];
        a[0] = FRAC_1_SQRT_2;
        a[7] = FRAC_1_SQRT_2;
        PureState::from_real(vec![2, 2, 2], &a).unwrap()
    }

    fn plus() -> PureState {
        PureState::from_real(vec![2], &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]).unwrap()
    }

    #[test]
    fn fine_graining_validation() {
        assert!(FineGraining::new(2).is_err());
        assert!(FineGraining::new(7).is_err());
        let g = FineGraining::new(16).unwrap();
        assert_eq!(g.half(), 8);
        assert_eq!(g.min_resolvable_angle(), 1.0 / 256.0);
    }

    #[test]
    fn state_validation() {
        assert!(matches!(
            PureState::new(vec![2], vec![ONE, ONE]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            PureState::new(vec![3], vec![ONE, ZERO]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(total_dim(&[2; 23]), Err(Error::TooLarge(_))));
        let s: std::result::Result<PureState, _> =
            serde_json::from_str(r#"{"dims":[2],"amps":[[1,0],[1,0]]}"#);
        assert!(s.is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = bell();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.starts_with(r#"{"dims":[2,2],"amps":[["#));
        let back: PureState = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn quantize_grid_points_unchanged() {
        for mu in [4, 8, 32] {
            let g = FineGraining::new(mu).unwrap();
            let s = PureState::basis(vec![2, 3], 4).unwrap();
            assert_eq!(quantize(&s, g).unwrap(), s);
        }
    }

    #[test]
    fn quantize_equal_superposition_mu8() {
        // oracle: sqrt(2)/2 = 0.7071 -> nearest k/16 is 11/16
        let g = FineGraining::new(8).unwrap();
        let q = quantize_report(&plus(), g).unwrap();
        let k = (FRAC_1_SQRT_2 * 16.0).round();
        assert_eq!(k, 11.0);
        assert!((q.pre_norm - (2.0f64).sqrt() * 11.0 / 16.0).abs() < 1e-15);
        assert!((q.max_component_error - (11.0 / 16.0 - FRAC_1_SQRT_2).abs()).abs() < 1e-15);
        for a in q.state.amps() {
            assert!((a.re - FRAC_1_SQRT_2).abs() < 1e-15);
        }
    }

    #[test]
    fn uniform_superposition_below_resolution() {
        // 2^10 amplitudes of 2^-5 sit exactly on the mu=16 grid (step 2^-8)
        let d = 1 << 10;
        let amp = 1.0 / (d as f64).sqrt();
        let s = PureState::new(vec![2; 10], vec![c(amp, 0.0); d]).unwrap();
        let g = FineGraining::new(16).unwrap();
        assert_eq!(quantize(&s, g).unwrap(), s);
        // 2^20 amplitudes of 2^-10 fall under half a grid step and vanish
        let d = 1 << 20;
        let amp = 1.0 / (d as f64).sqrt();
        let s = PureState::new(vec![2; 20], vec![c(amp, 0.0); d]).unwrap();
        assert!(matches!(quantize(&s, g), Err(Error::QuantizedToZero(16))));
    }

    #[test]
    fn fubini_study_examples() {
        let zero = PureState::basis(vec![2], 0).unwrap();
        let one = PureState::basis(vec![2], 1).unwrap();
        assert_eq!(fubini_study_angle(&zero, &zero).unwrap(), 0.0);
        assert!((fubini_study_angle(&zero, &one).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let rot = PureState::from_real(vec![2], &[0.3f64.cos(), 0.3f64.sin()]).unwrap();
        assert!((fubini_study_angle(&zero, &rot).unwrap() - 0.3).abs() < 1e-12);
        let other = PureState::basis(vec![3], 0).unwrap();
        assert!(matches!(
            fubini_study_angle(&zero, &other),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn partial_trace_examples() {
        let r = partial_trace(&bell().density(), &[0]).unwrap();
        let half = CMatrix::identity(2, 2) * c(0.5, 0.0);
        assert!(linalg::max_abs_diff(r.matrix(), &half) < 1e-15);

        // GHZ keep {0,1}: index-contraction oracle
        let psi = ghz3();
        let mut oracle = CMatrix::zeros(4, 4);
        for a in 0..4 {
            for b in 0..4 {
                for r in 0..2 {
                    oracle[(a, b)] += psi.amps()[a * 2 + r] * psi.amps()[b * 2 + r].conj();
                }
            }
        }
        let r = partial_trace(&psi.density(), &[0, 1]).unwrap();
        assert!(linalg::max_abs_diff(r.matrix(), &oracle) < 1e-15);
        assert!((oracle[(0, 0)].re - 0.5).abs() < 1e-15 && (oracle[(3, 3)].re - 0.5).abs() < 1e-15);

        let a = PureState::from_real(vec![2], &[0.6, 0.8]).unwrap();
        let b = PureState::from_real(vec![3], &[0.0, 0.6, 0.8]).unwrap();
        let r = partial_trace(&tensor(&a, &b).unwrap().density(), &[0]).unwrap();
        assert!(r.max_abs_diff(&a.density()).unwrap() < 1e-15);

        assert!(matches!(
            partial_trace(&a.density(), &[]),
            Err(Error::Subsystem(_))
        ));
        assert!(matches!(
            partial_trace(&a.density(), &[1]),
            Err(Error::Subsystem(_))
        ));
    }

    #[test]
    fn entropy_examples() {
        assert!((entanglement_entropy(&bell(), &[0]).unwrap() - 1.0).abs() < 1e-12);
        let prod = tensor(&plus(), &PureState::basis(vec![2], 1).unwrap()).unwrap();
        assert!(entanglement_entropy(&prod, &[0]).unwrap().abs() < 1e-12);

        let (t1, t2, t3) = (FRAC_PI_3, FRAC_PI_4, -FRAC_PI_4);
        let s = PureState::from_real(
            vec![2, 2],
            &[
                t1.cos() * t2.cos(),
                t1.cos() * t2.sin(),
                t1.sin() * t3.cos(),
                t1.sin() * t3.sin(),
            ],
        )
        .unwrap();
        // oracle: 2x2 SVD by hand. Rows are orthogonal with norms cos t1, sin t1,
        // so the Schmidt weights are cos^2 = 0.25 and sin^2 = 0.75.
        let w = [t1.cos().powi(2), t1.sin().powi(2)];
        let oracle = -w.iter().map(|p| p * p.log2()).sum::<f64>();
        assert!((oracle - 0.811_278_124_459_132_8).abs() < 1e-15);
        assert!((entanglement_entropy(&s, &[1]).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn factorize_examples() {
        let zero = PureState::basis(vec![2], 0).unwrap();
        let one = PureState::basis(vec![2], 1).unwrap();
        let p = PureState::product(&[zero.clone(), plus(), one]).unwrap();
        assert_eq!(factorize(&p, 1e-10).blocks, vec![vec![0], vec![1], vec![2]]);

        let s = tensor(&bell(), &zero).unwrap();
        let f = factorize(&s, 1e-10);
        assert_eq!(f.blocks, vec![vec![0, 1], vec![2]]);
        assert_eq!(f.block_dims, vec![4, 2]);

        assert_eq!(factorize(&ghz3(), 1e-10).blocks, vec![vec![0, 1, 2]]);

        // non-adjacent pair: Bell on (0,2) with a spectator on 1
        let mut amps = vec![ZERO; 8];
        amps[0b000] = c(FRAC_1_SQRT_2, 0.0);
        amps[0b101] = c(FRAC_1_SQRT_2, 0.0);
        let s = PureState::new(vec![2, 2, 2], amps).unwrap();
        assert_eq!(factorize(&s, 1e-10).blocks, vec![vec![0, 2], vec![1]]);
    }

    #[test]
    fn shannon_examples() {
        assert_eq!(shannon_state_information(2, 16).unwrap(), 16.0);
        assert_eq!(shannon_state_information(4, 64).unwrap(), 192.0);
        assert_eq!(shannon_state_information(1, 64).unwrap(), 0.0);
        assert!(shannon_state_information(0, 64).is_err());
    }

    #[test]
    fn combinations_enumerate() {
        assert_eq!(combinations(4, 2).len(), 6);
        assert_eq!(combinations(3, 3), vec![vec![0, 1, 2]]);
        assert_eq!(combinations(5, 1).len(), 5);
    }

    fn arb_state(dims: Vec<usize>) -> impl Strategy<Value = PureState> {
        let d: usize = dims.iter().product();
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d).prop_filter_map(
            "nonzero",
            move |v| {
                PureState::normalized(dims.clone(), v.into_iter().map(|(r, i)| c(r, i)).collect())
                    .ok()
            },
        )
    }

    fn arb_dims() -> impl Strategy<Value = Vec<usize>> {
        prop::collection::vec(2usize..=3, 1..=4)
    }

    fn arb_unitary(d: usize) -> impl Strategy<Value = CMatrix> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), d * d).prop_map(move |v| {
            let h = CMatrix::from_fn(d, d, |i, j| c(v[i * d + j].0, v[i * d + j].1));
            let h = &h + h.adjoint();
            let (vals, vecs) = linalg::hermitian_eigen(&h);
            linalg::spectral_map(&vals, &vecs, |l| C64::from_polar(1.0, l))
        })
    }

    proptest! {
        #[test]
        fn quantize_idempotent_and_within_ball(
            s in arb_dims().prop_flat_map(arb_state),
            mu in prop::sample::select(vec![8u32, 16, 32]),
        ) {
            let g = FineGraining::new(mu).unwrap();
            let q = quantize_report(&s, g);
            prop_assume!(q.is_ok());
            let q = q.unwrap();
            prop_assert!(q.max_component_error <= g.step() / 2.0 + 1e-15);
            let snapped = snap_to_grid(s.amps(), g);
            prop_assert_eq!(snap_to_grid(&snapped, g), snapped.clone());
            let again = quantize(&PureState::from_parts_unchecked(s.dims().to_vec(), snapped), g).unwrap();
            prop_assert!(linalg::max_abs_diff(
                &CMatrix::from_column_slice(again.dim(), 1, again.amps()),
                &CMatrix::from_column_slice(q.state.dim(), 1, q.state.amps()),
            ) < 1e-12);
            let bound = ((s.dim() as f64).sqrt() * g.step()).min(1.0).asin();
            prop_assert!(fubini_study_angle(&s, &q.state).unwrap() <= bound + 1e-12);
        }

        #[test]
        fn local_ops_on_discarded_side_keep_reduced_state(
            s in arb_state(vec![2, 3, 2]),
            u in arb_unitary(2),
        ) {
            let before = s.reduced_density(&[0, 1]).unwrap();
            let moved = s.apply_local(2, &u).unwrap();
            let after = partial_trace(&moved.density(), &[0, 1]).unwrap();
            prop_assert!(before.max_abs_diff(&after).unwrap() < 1e-10);
        }

        #[test]
        fn entropy_invariant_under_local_unitaries(
            s in arb_state(vec![2, 3]),
            ua in arb_unitary(2),
            ub in arb_unitary(3),
        ) {
            let e0 = entanglement_entropy(&s, &[0]).unwrap();
            let t = s.apply_local(0, &ua).unwrap().apply_local(1, &ub).unwrap();
            prop_assert!((entanglement_entropy(&t, &[0]).unwrap() - e0).abs() < 1e-9);
            prop_assert!((entanglement_entropy(&t, &[1]).unwrap() - e0).abs() < 1e-9);
        }

        #[test]
        fn factorize_recovers_product_blocks(
            dims in prop::collection::vec(2usize..=3, 1..=6),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let factors: Vec<PureState> = dims.iter().map(|&d| {
                let v: Vec<C64> = (0..d).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
                PureState::normalized(vec![d], v).unwrap()
            }).collect();
            let s = PureState::product(&factors).unwrap();
            let f = factorize_full(&s, 1e-10);
            prop_assert!(f.structure.is_fully_separable());
            let back = f.reassemble(s.dims()).unwrap();
            prop_assert!(back.fidelity(&s).unwrap() > 1.0 - 1e-10);
        }
    }
}
