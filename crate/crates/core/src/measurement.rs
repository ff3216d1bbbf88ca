//! Measurement chain, ensembles and threshold-triggered transitions.
//!
//! Chain layout: subsystem 0 is the system `S` (dimension `D`), subsystem 1
//! the apparatus `M` (index `i*m + xi`), subsystem 2 the environment `Q`
//! (index `(i*m + xi)*q + eta`, plus one shared ancilla level at `D*m*q` that
//! carries the overlap between sectors when `theta_env < 1`).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::HamiltonianSpec;
use crate::error::{Error, Result};
use crate::hilbert::{
    digits, factorize_full, index_of, total_dim, DensityMatrix, FactorizationStructure, PureState,
    SEPARABILITY_TOLERANCE,
};
use crate::linalg::{self, CMatrix, C64, ONE, ZERO};
use crate::magnitude::{LogQuantity, Unit};
use crate::resources::{memory_limit_chaos, memory_limit_completeness, Scenario, StabilityVerdict};

/// Outcomes lighter than this are left out of ensembles.
pub const PROBABILITY_FLOOR: f64 = 1e-14;

/// Tolerance on ensemble weight sums and chain normalizations.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Tolerance for accepting a candidate factor basis as unitary.
pub const UNITARY_TOLERANCE: f64 = 1e-10;

/// Identifier of the auto-included computational (extended pointer) basis.
pub const COMPUTATIONAL_ID: &str = "computational";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApparatusSpec {
    pub micro_dim: usize,
    /// `weights[i][xi]`.
    pub weights: Vec<Vec<C64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSpec {
    pub micro_dim: usize,
    /// `weights[i][xi][eta]`.
    pub weights: Vec<Vec<Vec<C64>>>,
    /// 1 makes the environment sectors orthogonal; sectors overlap by `1 - theta_env`.
    pub theta_env: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSpec {
    pub system_dim: usize,
    pub apparatus: ApparatusSpec,
    pub environment: EnvironmentSpec,
}

fn normalize(v: &mut [C64]) {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    v.iter_mut().for_each(|z| *z /= n);
}

impl ChainSpec {
    /// Flat weight profiles.
    pub fn uniform(d: usize, m: usize, q: usize, theta_env: f64) -> Result<Self> {
        let wm = C64::new(1.0 / (m as f64).sqrt(), 0.0);
        let wq = C64::new(1.0 / (q as f64).sqrt(), 0.0);
        let spec = Self {
            system_dim: d,
            apparatus: ApparatusSpec {
                micro_dim: m,
                weights: vec![vec![wm; m]; d],
            },
            environment: EnvironmentSpec {
                micro_dim: q,
                weights: vec![vec![vec![wq; q]; m]; d],
                theta_env,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Random complex weight profiles.
    pub fn random<R: Rng + ?Sized>(
        d: usize,
        m: usize,
        q: usize,
        theta_env: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut am = Vec::with_capacity(d);
        let mut aq = Vec::with_capacity(d);
        for _ in 0..d {
            let mut row: Vec<C64> = (0..m).map(|_| linalg::complex_gaussian(rng)).collect();
            normalize(&mut row);
            am.push(row);
            let mut sect = Vec::with_capacity(m);
            for _ in 0..m {
                let mut w: Vec<C64> = (0..q).map(|_| linalg::complex_gaussian(rng)).collect();
                normalize(&mut w);
                sect.push(w);
            }
            aq.push(sect);
        }
        let spec = Self {
            system_dim: d,
            apparatus: ApparatusSpec {
                micro_dim: m,
                weights: am,
            },
            environment: EnvironmentSpec {
                micro_dim: q,
                weights: aq,
                theta_env,
            },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let (d, m, q) = (
            self.system_dim,
            self.apparatus.micro_dim,
            self.environment.micro_dim,
        );
        if d == 0 || m == 0 || q == 0 {
            return Err(Error::Domain("chain dimensions must be positive".into()));
        }
        let theta = self.environment.theta_env;
        if !(0.0..=1.0).contains(&theta) {
            return Err(Error::Domain(format!(
                "theta_env must lie in [0, 1], got {theta}"
            )));
        }
        if self.apparatus.weights.len() != d || self.apparatus.weights.iter().any(|r| r.len() != m)
        {
            return Err(Error::Dimension(format!(
                "apparatus weights must be {d} x {m}"
            )));
        }
        let env = &self.environment.weights;
        if env.len() != d
            || env
                .iter()
                .any(|s| s.len() != m || s.iter().any(|w| w.len() != q))
        {
            return Err(Error::Dimension(format!(
                "environment weights must be {d} x {m} x {q}"
            )));
        }
        for (i, row) in self.apparatus.weights.iter().enumerate() {
            let n: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            if (n - 1.0).abs() > WEIGHT_TOLERANCE {
                return Err(Error::Domain(format!(
                    "apparatus weights for pointer {i} sum to {n}, not 1"
                )));
            }
        }
        for (i, sect) in env.iter().enumerate() {
            for (xi, w) in sect.iter().enumerate() {
                let n: f64 = w.iter().map(|z| z.norm_sqr()).sum();
                if (n - 1.0).abs() > WEIGHT_TOLERANCE {
                    return Err(Error::Domain(format!(
                        "environment weights for ({i}, {xi}) sum to {n}, not 1"
                    )));
                }
            }
        }
        total_dim(&self.dims())?;
        Ok(())
    }

    /// `[D, D m, D m q + 1]`.
    pub fn dims(&self) -> Vec<usize> {
        let (d, m, q) = (
            self.system_dim,
            self.apparatus.micro_dim,
            self.environment.micro_dim,
        );
        vec![d, d * m, d * m * q + 1]
    }

    fn ancilla(&self) -> usize {
        self.system_dim * self.apparatus.micro_dim * self.environment.micro_dim
    }
}

/// Correlate `sys` with apparatus and environment.
pub fn premeasure(sys: &PureState, chain: &ChainSpec) -> Result<PureState> {
    chain.validate()?;
    if sys.dims() != [chain.system_dim] {
        return Err(Error::Dimension(format!(
            "system state dims {:?} do not match chain dimension {}",
            sys.dims(),
            chain.system_dim
        )));
    }
    let dims = chain.dims();
    let total = total_dim(&dims)?;
    let (m, q) = (chain.apparatus.micro_dim, chain.environment.micro_dim);
    let overlap = 1.0 - chain.environment.theta_env;
    let (c_anc, c_env) = (overlap.sqrt(), (1.0 - overlap).sqrt());
    let anc = chain.ancilla();
    let mut amps = vec![ZERO; total];
    for (i, &a) in sys.amps().iter().enumerate() {
        for xi in 0..m {
            let mi = i * m + xi;
            let base = a * chain.apparatus.weights[i][xi];
            if c_anc > 0.0 {
                amps[index_of(&[i, mi, anc], &dims)] += base * c_anc;
            }
            for eta in 0..q {
                let e = chain.environment.weights[i][xi][eta];
                amps[index_of(&[i, mi, mi * q + eta], &dims)] += base * e * c_env;
            }
        }
    }
    PureState::new(dims, amps)
}

/// Member of an ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub weight: f64,
    pub state: PureState,
    pub factorization: FactorizationStructure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<EnsembleMember>,
    /// True when the mixture reflects an actual transition rather than ignorance
    /// about a subsystem of a pure state.
    pub proper: bool,
}

impl Ensemble {
    /// Validates weights and member dimensions.
    pub fn new(members: Vec<EnsembleMember>, proper: bool) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::Domain("ensemble has no members".into()));
        };
        let dims = first.state.dims().to_vec();
        if members.iter().any(|m| m.state.dims() != dims.as_slice()) {
            return Err(Error::Dimension(
                "ensemble members live in different spaces".into(),
            ));
        }
        if members.iter().any(|m| !(m.weight >= 0.0)) {
            return Err(Error::Domain(
                "ensemble weights must be non-negative".into(),
            ));
        }
        let sum: f64 = members.iter().map(|m| m.weight).sum();
        if (sum - 1.0).abs() > WEIGHT_TOLERANCE {
            return Err(Error::Domain(format!(
                "ensemble weights sum to {sum}, not 1"
            )));
        }
        Ok(Self { members, proper })
    }

    /// Build members with their factorizations.
    pub fn from_states(weighted: Vec<(f64, PureState)>, proper: bool, tol: f64) -> Result<Self> {
        let members = weighted
            .into_iter()
            .map(|(weight, state)| {
                let factorization = factorize_full(&state, tol).structure;
                EnsembleMember {
                    weight,
                    state,
                    factorization,
                }
            })
            .collect();
        Self::new(members, proper)
    }

    /// Eigen-decomposition of the reduced state of `state` on `keep`: the
    /// improper mixture an observer without access to the rest would assign.
    pub fn improper(state: &PureState, keep: &[usize], tol: f64) -> Result<Self> {
        let rho = state.reduced_density(keep)?;
        let (vals, vecs) = linalg::hermitian_eigen(rho.matrix());
        let dims = rho.dims().to_vec();
        let mut weighted = Vec::new();
        for (j, &w) in vals.iter().enumerate() {
            if w > PROBABILITY_FLOOR {
                let v: Vec<C64> = vecs.column(j).iter().copied().collect();
                weighted.push((w, PureState::normalized(dims.clone(), v)?));
            }
        }
        let total: f64 = weighted.iter().map(|(w, _)| w).sum();
        weighted.iter_mut().for_each(|(w, _)| *w /= total);
        Self::from_states(weighted, false, tol)
    }

    pub fn dims(&self) -> &[usize] {
        self.members[0].state.dims()
    }

    /// `sum_k w_k |psi_k><psi_k|`.
    pub fn density(&self) -> Result<DensityMatrix> {
        let d = self.members[0].state.dim();
        let mut mat = CMatrix::zeros(d, d);
        for m in &self.members {
            mat += linalg::outer(m.state.amps()) * C64::new(m.weight, 0.0);
        }
        DensityMatrix::new(self.dims().to_vec(), mat)
    }

    /// `sum_k w_k Tr_rest |psi_k><psi_k|` on `keep`.
    pub fn reduced_density(&self, keep: &[usize]) -> Result<DensityMatrix> {
        let mut acc: Option<CMatrix> = None;
        let mut dims = Vec::new();
        for m in &self.members {
            let r = m.state.reduced_density(keep)?;
            dims = r.dims().to_vec();
            let term = r.into_matrix() * C64::new(m.weight, 0.0);
            acc = Some(match acc {
                Some(a) => a + term,
                None => term,
            });
        }
        DensityMatrix::new(dims, acc.expect("ensembles are non-empty"))
    }
}

/// Largest member cost `mu * sum_blocks prod D`.
pub fn ensemble_state_information(e: &Ensemble, mu: f64) -> Result<LogQuantity> {
    let cells = e
        .members
        .iter()
        .map(|m| block_cells(&m.factorization))
        .fold(0.0, f64::max);
    LogQuantity::from_linear(mu * cells, Unit::Bits)
}

/// Weighted mean member cost, reported alongside the maximum.
pub fn ensemble_state_information_mean(e: &Ensemble, mu: f64) -> Result<LogQuantity> {
    let cells: f64 = e
        .members
        .iter()
        .map(|m| m.weight * block_cells(&m.factorization))
        .sum();
    LogQuantity::from_linear(mu * cells, Unit::Bits)
}

fn block_cells(s: &FactorizationStructure) -> f64 {
    s.block_dims.iter().map(|&d| d as f64).sum()
}

/// Basis chosen for one subsystem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorBasis {
    Computational,
    /// Basis vectors are the columns.
    Unitary {
        #[serde(with = "linalg::complex_matrix")]
        matrix: CMatrix,
    },
    /// Left alone: members keep the conditional state of this factor.
    Unmeasured,
}

impl FactorBasis {
    fn is_measured(&self) -> bool {
        !matches!(self, FactorBasis::Unmeasured)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductBasis {
    pub id: String,
    pub factors: Vec<FactorBasis>,
}

impl ProductBasis {
    pub fn computational(n_subsystems: usize) -> Self {
        Self {
            id: COMPUTATIONAL_ID.into(),
            factors: vec![FactorBasis::Computational; n_subsystems],
        }
    }

    /// Every factor measured.
    pub fn is_complete(&self) -> bool {
        self.factors.iter().all(FactorBasis::is_measured)
    }

    fn is_computational(&self) -> bool {
        self.factors
            .iter()
            .all(|f| matches!(f, FactorBasis::Computational))
    }

    pub fn validate(&self, dims: &[usize]) -> Result<()> {
        if self.factors.len() != dims.len() {
            return Err(Error::Dimension(format!(
                "basis '{}' has {} factors for {} subsystems",
                self.id,
                self.factors.len(),
                dims.len()
            )));
        }
        if !self.factors.iter().any(FactorBasis::is_measured) {
            return Err(Error::Domain(format!(
                "basis '{}' measures no subsystem",
                self.id
            )));
        }
        for (k, (f, &d)) in self.factors.iter().zip(dims).enumerate() {
            if let FactorBasis::Unitary { matrix } = f {
                if matrix.nrows() != d || matrix.ncols() != d {
                    return Err(Error::Dimension(format!(
                        "basis '{}' factor {k} is {}x{}, subsystem has dimension {d}",
                        self.id,
                        matrix.nrows(),
                        matrix.ncols()
                    )));
                }
                let err = linalg::unitarity_error(matrix);
                if err > UNITARY_TOLERANCE {
                    return Err(Error::Domain(format!(
                        "basis '{}' factor {k} is not orthonormal (deviation {err:.2e})",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Candidate transition basis. Only product bases are admissible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CandidateBasis {
    Product(ProductBasis),
    /// A basis of the joint space; always rejected.
    Joint {
        id: String,
        #[serde(with = "linalg::complex_matrix")]
        matrix: CMatrix,
    },
}

impl CandidateBasis {
    pub fn id(&self) -> &str {
        match self {
            CandidateBasis::Product(p) => &p.id,
            CandidateBasis::Joint { id, .. } => id,
        }
    }
}

impl From<ProductBasis> for CandidateBasis {
    fn from(p: ProductBasis) -> Self {
        CandidateBasis::Product(p)
    }
}

/// One outcome of projecting a state onto a product basis.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// Mixed-radix index over the measured factors, in subsystem order.
    pub index: usize,
    pub digits: Vec<usize>,
    pub probability: f64,
    /// Normalized conditional state of the unmeasured factors.
    pub conditional: Option<PureState>,
    pub structure: FactorizationStructure,
}

/// Projection of a state onto the members of a product basis.
#[derive(Debug, Clone)]
pub struct Projection {
    dims: Vec<usize>,
    basis: ProductBasis,
    measured: Vec<usize>,
    unmeasured: Vec<usize>,
    pub outcomes: Vec<Outcome>,
}

impl Projection {
    pub fn new(state: &PureState, basis: &ProductBasis, tol: f64) -> Result<Self> {
        let dims = state.dims().to_vec();
        basis.validate(&dims)?;
        let mut rotated = state.clone();
        for (k, f) in basis.factors.iter().enumerate() {
            if let FactorBasis::Unitary { matrix } = f {
                rotated = rotated.apply_local(k, &matrix.adjoint())?;
            }
        }
        let measured: Vec<usize> = (0..dims.len())
            .filter(|&k| basis.factors[k].is_measured())
            .collect();
        let unmeasured: Vec<usize> = (0..dims.len())
            .filter(|&k| !basis.factors[k].is_measured())
            .collect();
        let m_dims: Vec<usize> = measured.iter().map(|&k| dims[k]).collect();
        let u_dims: Vec<usize> = unmeasured.iter().map(|&k| dims[k]).collect();
        let amat = rotated.amplitude_matrix(&measured)?;
        let mut outcomes = Vec::new();
        for r in 0..amat.nrows() {
            let row: Vec<C64> = amat.row(r).iter().copied().collect();
            let p: f64 = row.iter().map(|z| z.norm_sqr()).sum();
            if p <= PROBABILITY_FLOOR {
                continue;
            }
            let (conditional, structure) = if unmeasured.is_empty() {
                (None, FactorizationStructure::singletons(&dims))
            } else {
                let cond = PureState::normalized(u_dims.clone(), row)?;
                let local = factorize_full(&cond, tol).structure;
                (
                    Some(cond),
                    merge_structure(&dims, &measured, &unmeasured, &local),
                )
            };
            outcomes.push(Outcome {
                index: r,
                digits: digits(r, &m_dims),
                probability: p,
                conditional,
                structure,
            });
        }
        Ok(Self {
            dims,
            basis: basis.clone(),
            measured,
            unmeasured,
            outcomes,
        })
    }

    pub fn basis(&self) -> &ProductBasis {
        &self.basis
    }

    pub fn total_probability(&self) -> f64 {
        self.outcomes.iter().map(|o| o.probability).sum()
    }

    /// Largest member cost in units of `mu`.
    pub fn max_cells(&self) -> f64 {
        self.outcomes
            .iter()
            .map(|o| block_cells(&o.structure))
            .fold(0.0, f64::max)
    }

    pub fn mean_cells(&self) -> f64 {
        let total = self.total_probability();
        self.outcomes
            .iter()
            .map(|o| o.probability * block_cells(&o.structure))
            .sum::<f64>()
            / total
    }

    /// Full post-projection state for outcome `k` (position in `outcomes`).
    pub fn member_state(&self, k: usize) -> Result<PureState> {
        let o = &self.outcomes[k];
        let u_dims: Vec<usize> = self.unmeasured.iter().map(|&s| self.dims[s]).collect();
        let total = total_dim(&self.dims)?;
        let mut amps = vec![ZERO; total];
        let mut local = vec![0usize; self.unmeasured.len()];
        for (idx, slot) in amps.iter_mut().enumerate() {
            let dg = digits(idx, &self.dims);
            let mut z = ONE;
            for (j, &s) in self.measured.iter().enumerate() {
                let b = o.digits[j];
                z *= match &self.basis.factors[s] {
                    FactorBasis::Computational => {
                        if dg[s] == b {
                            ONE
                        } else {
                            ZERO
                        }
                    }
                    FactorBasis::Unitary { matrix } => matrix[(dg[s], b)],
                    FactorBasis::Unmeasured => unreachable!("measured factor"),
                };
                if z == ZERO {
                    break;
                }
            }
            if z == ZERO {
                continue;
            }
            if let Some(cond) = &o.conditional {
                for (j, &s) in self.unmeasured.iter().enumerate() {
                    local[j] = dg[s];
                }
                z *= cond.amps()[index_of(&local, &u_dims)];
            }
            *slot = z;
        }
        PureState::normalized(self.dims.clone(), amps)
    }

    /// Proper ensemble over all outcomes.
    pub fn ensemble(&self) -> Result<Ensemble> {
        let total = self.total_probability();
        let mut members = Vec::with_capacity(self.outcomes.len());
        for (k, o) in self.outcomes.iter().enumerate() {
            members.push(EnsembleMember {
                weight: o.probability / total,
                state: self.member_state(k)?,
                factorization: o.structure.clone(),
            });
        }
        Ensemble::new(members, true)
    }
}

/// Measured factors become singletons; unmeasured blocks are relabelled.
fn merge_structure(
    dims: &[usize],
    measured: &[usize],
    unmeasured: &[usize],
    local: &FactorizationStructure,
) -> FactorizationStructure {
    let mut blocks: Vec<Vec<usize>> = measured.iter().map(|&s| vec![s]).collect();
    for b in &local.blocks {
        blocks.push(b.iter().map(|&j| unmeasured[j]).collect());
    }
    blocks.sort_by_key(|b| b[0]);
    let block_dims = blocks
        .iter()
        .map(|b| b.iter().map(|&s| dims[s]).product())
        .collect();
    FactorizationStructure { blocks, block_dims }
}

/// How the memory limit is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ThresholdMode {
    /// `2^(mu/2) E / J`, chaos scenario.
    M1 {
        energy_e: f64,
        coupling_j: f64,
    },
    /// `mu 2^(mu/2)`, completeness scenario.
    M2,
    Explicit {
        limit: LogQuantity,
    },
}

fn default_tol() -> f64 {
    SEPARABILITY_TOLERANCE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionConfig {
    pub threshold: ThresholdMode,
    pub mu: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub candidate_bases: Vec<CandidateBasis>,
    #[serde(default = "default_tol")]
    pub separability_tol: f64,
}

impl TransitionConfig {
    pub fn new(threshold: ThresholdMode, mu: f64, rng_seed: u64) -> Self {
        Self {
            threshold,
            mu,
            rng_seed,
            candidate_bases: Vec::new(),
            separability_tol: SEPARABILITY_TOLERANCE,
        }
    }

    pub fn with_candidates(mut self, candidates: Vec<CandidateBasis>) -> Self {
        self.candidate_bases = candidates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu.is_finite() && self.mu > 0.0) {
            return Err(Error::Domain(format!(
                "mu must be positive, got {}",
                self.mu
            )));
        }
        if !(self.separability_tol > 0.0) {
            return Err(Error::Domain(
                "separability tolerance must be positive".into(),
            ));
        }
        match self.threshold {
            ThresholdMode::Explicit { limit } if limit.unit() != Unit::Bits => Err(Error::Unit {
                op: "threshold",
                lhs: limit.unit().as_str(),
                rhs: Unit::Bits.as_str(),
            }),
            ThresholdMode::Explicit { limit } if !limit.log10().is_finite() => Err(Error::Domain(
                "explicit threshold must be positive and finite".into(),
            )),
            ThresholdMode::M1 {
                energy_e,
                coupling_j,
            } if !(energy_e > 0.0 && coupling_j > 0.0) => {
                Err(Error::Domain("M1 threshold needs positive E and J".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn scenario(&self) -> Scenario {
        match self.threshold {
            ThresholdMode::M1 { .. } => Scenario::Chaos,
            ThresholdMode::M2 => Scenario::Completeness,
            ThresholdMode::Explicit { .. } => Scenario::Explicit,
        }
    }

    pub fn limit(&self) -> Result<LogQuantity> {
        match self.threshold {
            ThresholdMode::M1 {
                energy_e,
                coupling_j,
            } => memory_limit_chaos(energy_e, coupling_j, self.mu),
            ThresholdMode::M2 => memory_limit_completeness(self.mu),
            ThresholdMode::Explicit { limit } => Ok(limit),
        }
    }

    /// Declared candidates with the computational basis prepended when absent.
    pub fn candidates_for(&self, n_subsystems: usize) -> Vec<CandidateBasis> {
        let has_comp = self.candidate_bases.iter().any(|c| match c {
            CandidateBasis::Product(p) => p.factors.len() == n_subsystems && p.is_computational(),
            CandidateBasis::Joint { .. } => false,
        });
        let mut out = Vec::with_capacity(self.candidate_bases.len() + 1);
        if !has_comp {
            out.push(ProductBasis::computational(n_subsystems).into());
        }
        out.extend(self.candidate_bases.iter().cloned());
        out
    }
}

/// Stability of a state: the largest entangled block, `mu prod D`, against the
/// configured limit.
pub fn state_stability(
    state: &PureState,
    cfg: &TransitionConfig,
) -> Result<(StabilityVerdict, FactorizationStructure)> {
    cfg.validate()?;
    let structure = factorize_full(state, cfg.separability_tol).structure;
    let required = structure.largest_block_information(cfg.mu)?;
    Ok((
        StabilityVerdict::from_sides(cfg.scenario(), required, cfg.limit()?),
        structure,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateCost {
    pub id: String,
    pub admissible: bool,
    /// Why an inadmissible candidate was dropped.
    pub reason: Option<String>,
    pub max_bits: Option<f64>,
    pub mean_bits: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct BasisSelection {
    /// Position in the candidate list (after the computational basis is added).
    pub index: usize,
    pub basis_id: String,
    pub cost: LogQuantity,
    pub diagnostics: Vec<CandidateCost>,
    pub projection: Projection,
}

/// Pick the admissible candidate whose projection ensemble has the smallest
/// maximal member cost; ties go to the lowest index.
pub fn select_transition_basis(
    state: &PureState,
    cfg: &TransitionConfig,
) -> Result<BasisSelection> {
    select_among(state, cfg, false)
}

fn select_among(
    state: &PureState,
    cfg: &TransitionConfig,
    complete_only: bool,
) -> Result<BasisSelection> {
    cfg.validate()?;
    let candidates = cfg.candidates_for(state.n_subsystems());
    let mut diagnostics = Vec::with_capacity(candidates.len());
    let mut best: Option<(usize, f64, Projection)> = None;
    for (i, cand) in candidates.iter().enumerate() {
        let reject = |reason: String| CandidateCost {
            id: cand.id().to_string(),
            admissible: false,
            reason: Some(reason),
            max_bits: None,
            mean_bits: None,
        };
        let basis = match cand {
            CandidateBasis::Joint { .. } => {
                diagnostics.push(reject("not a product basis".into()));
                continue;
            }
            CandidateBasis::Product(p) => p,
        };
        if complete_only && !basis.is_complete() {
            diagnostics.push(reject("leaves factors unmeasured".into()));
            continue;
        }
        let proj = match Projection::new(state, basis, cfg.separability_tol) {
            Ok(p) => p,
            Err(e) => {
                diagnostics.push(reject(e.to_string()));
                continue;
            }
        };
        let cells = proj.max_cells();
        diagnostics.push(CandidateCost {
            id: basis.id.clone(),
            admissible: true,
            reason: None,
            max_bits: Some(cfg.mu * cells),
            mean_bits: Some(cfg.mu * proj.mean_cells()),
        });
        if best.as_ref().is_none_or(|(_, c, _)| cells < *c) {
            best = Some((i, cells, proj));
        }
    }
    let (index, cells, projection) = best.ok_or(Error::EmptyCandidates)?;
    Ok(BasisSelection {
        index,
        basis_id: candidates[index].id().to_string(),
        cost: LogQuantity::from_linear(cfg.mu * cells, Unit::Bits)?,
        diagnostics,
        projection,
    })
}

/// Generator position sufficient to replay a draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedState {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

/// ChaCha20 generator keyed by a master seed, one stream per trajectory.
#[derive(Debug, Clone)]
pub struct TransitionRng {
    rng: ChaCha20Rng,
    seed: u64,
    stream: u64,
}

impl TransitionRng {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, seed, stream }
    }

    /// Resume at a recorded position.
    pub fn replay(state: SeedState) -> Self {
        let mut r = Self::new(state.seed, state.stream);
        r.rng.set_word_pos(state.word_pos);
        r
    }

    pub fn state(&self) -> SeedState {
        SeedState {
            seed: self.seed,
            stream: self.stream,
            word_pos: self.rng.get_word_pos(),
        }
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub time: f64,
    pub trigger: StabilityVerdict,
    pub forced: bool,
    pub basis_id: String,
    pub outcome_index: usize,
    pub outcome_digits: Vec<usize>,
    pub probability: f64,
    #[serde(rename = "pre_M")]
    pub pre_m: LogQuantity,
    #[serde(rename = "post_M")]
    pub post_m: LogQuantity,
    /// Generator position before the draw.
    pub seed_state: SeedState,
}

/// Born-sample one member of the minimal complete product basis.
///
/// Refuses with [`Error::StableRefusal`] on a stable state unless `force`.
pub fn information_transition(
    state: &PureState,
    cfg: &TransitionConfig,
    t: f64,
    force: bool,
    rng: &mut TransitionRng,
) -> Result<(PureState, TransitionRecord)> {
    let (verdict, structure) = state_stability(state, cfg)?;
    if verdict.stable && !force {
        return Err(Error::StableRefusal);
    }
    let sel = select_among(state, cfg, true)?;
    let seed_state = rng.state();
    let u = rng.uniform();
    let proj = &sel.projection;
    let target = u * proj.total_probability();
    let mut acc = 0.0;
    let mut k = proj.outcomes.len() - 1;
    for (j, o) in proj.outcomes.iter().enumerate() {
        acc += o.probability;
        if target < acc {
            k = j;
            break;
        }
    }
    let post = proj.member_state(k)?;
    let o = &proj.outcomes[k];
    let record = TransitionRecord {
        time: t,
        trigger: verdict,
        forced: force,
        basis_id: sel.basis_id.clone(),
        outcome_index: o.index,
        outcome_digits: o.digits.clone(),
        probability: o.probability,
        pre_m: structure.state_information(cfg.mu)?,
        post_m: o.structure.state_information(cfg.mu)?,
        seed_state,
    };
    Ok((post, record))
}

/// Full projection ensemble in `basis`.
pub fn nonselective_transition(
    state: &PureState,
    basis: &ProductBasis,
    tol: f64,
) -> Result<Ensemble> {
    Projection::new(state, basis, tol)?.ensemble()
}

/// `max |Tr_discard |Psi><Psi| - Tr_discard rho'|` with `rho'` the
/// nonselective ensemble in `basis`.
pub fn verify_reduced_invariance(
    state: &PureState,
    basis: &ProductBasis,
    discard: &[usize],
) -> Result<f64> {
    let n = state.n_subsystems();
    if discard.iter().any(|&k| k >= n) {
        return Err(Error::Subsystem(format!(
            "discard set {discard:?} out of range for {n} subsystems"
        )));
    }
    let keep: Vec<usize> = (0..n).filter(|k| !discard.contains(k)).collect();
    let before = state.reduced_density(&keep)?;
    let after =
        nonselective_transition(state, basis, SEPARABILITY_TOLERANCE)?.reduced_density(&keep)?;
    before.max_abs_diff(&after)
}

/// True when every member is a computational basis state on `keep`.
pub fn pointer_diagonal(e: &Ensemble, keep: &[usize], tol: f64) -> Result<bool> {
    for m in &e.members {
        let r = m.state.reduced_density(keep)?;
        let mat = r.matrix();
        let peak = (0..mat.nrows()).map(|i| mat[(i, i)].re).fold(0.0, f64::max);
        if peak < 1.0 - tol {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryOptions {
    pub t_total: f64,
    pub dt: f64,
    /// Force a transition every this many steps even when stable.
    #[serde(default)]
    pub force_every: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub records: Vec<TransitionRecord>,
    pub final_state: PureState,
    /// Unitary-phase durations: start or previous transition to each transition.
    pub intervals: Vec<f64>,
    pub steps: usize,
}

/// Alternate unitary steps with stability checks, transitioning on instability.
pub fn run_trajectory(
    initial: &PureState,
    h: &HamiltonianSpec,
    cfg: &TransitionConfig,
    opts: &TrajectoryOptions,
    hbar: f64,
    stream: u64,
) -> Result<Trajectory> {
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::Domain(format!(
            "dt must be positive, got {}",
            opts.dt
        )));
    }
    if !(opts.t_total >= 0.0) {
        return Err(Error::Domain("t_total must be non-negative".into()));
    }
    if opts.force_every == Some(0) {
        return Err(Error::Domain("force_every must be at least 1".into()));
    }
    if h.dims() != initial.dims() {
        return Err(Error::Dimension(format!(
            "Hamiltonian dims {:?} do not match state dims {:?}",
            h.dims(),
            initial.dims()
        )));
    }
    cfg.validate()?;
    let steps = (opts.t_total / opts.dt).round() as usize;
    let prop = h.propagator(opts.dt, hbar)?;
    let mut rng = TransitionRng::new(cfg.rng_seed, stream);
    let mut state = initial.clone();
    let mut records = Vec::new();
    let mut intervals = Vec::new();
    let mut last = 0.0;
    for i in 1..=steps {
        state = prop.apply(&state)?;
        let t = i as f64 * opts.dt;
        let (verdict, _) = state_stability(&state, cfg)?;
        let forced = opts.force_every.is_some_and(|f| i % f == 0);
        if !verdict.stable || forced {
            let (post, rec) = information_transition(&state, cfg, t, verdict.stable, &mut rng)?;
            state = post;
            intervals.push(t - last);
            last = t;
            records.push(rec);
        }
    }
    Ok(Trajectory {
        records,
        final_state: state,
        intervals,
        steps,
    })
}

/// The two-sector cat-and-environment state over `[2m, 2mq + 1]`.
pub fn cat_state(chain: &ChainSpec) -> Result<PureState> {
    if chain.system_dim != 2 {
        return Err(Error::Dimension(format!(
            "cat needs two macro sectors, got {}",
            chain.system_dim
        )));
    }
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let plus = PureState::from_real(vec![2], &[h, h])?;
    let full = premeasure(&plus, chain)?;
    let dims = full.dims().to_vec();
    let (dm, dq) = (dims[1], dims[2]);
    let mut amps = vec![ZERO; dm * dq];
    for (idx, &a) in full.amps().iter().enumerate() {
        if a != ZERO {
            let dg = digits(idx, &dims);
            amps[dg[1] * dq + dg[2]] += a;
        }
    }
    PureState::new(vec![dm, dq], amps)
}

/// Proper mixture of cat-sector states after the environment transition.
pub fn cat_mixture(chain: &ChainSpec) -> Result<Ensemble> {
    let upsilon = cat_state(chain)?;
    let basis = ProductBasis {
        id: "cat-pointer".into(),
        factors: vec![FactorBasis::Computational, FactorBasis::Unmeasured],
    };
    let proj = Projection::new(&upsilon, &basis, SEPARABILITY_TOLERANCE)?;
    let dm = upsilon.dims()[0];
    let total = proj.total_probability();
    let weighted = proj
        .outcomes
        .iter()
        .map(|o| Ok((o.probability / total, PureState::basis(vec![dm], o.index)?)))
        .collect::<Result<Vec<_>>>()?;
    Ensemble::from_states(weighted, true, SEPARABILITY_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;

    const H: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn explicit(bits: f64) -> ThresholdMode {
        ThresholdMode::Explicit {
            limit: LogQuantity::from_linear(bits, Unit::Bits).unwrap(),
        }
    }

    fn rotated(id: &str, factors: Vec<FactorBasis>) -> CandidateBasis {
        ProductBasis {
            id: id.into(),
            factors,
        }
        .into()
    }

    fn unitary(d: usize, rng: &mut ChaCha20Rng) -> FactorBasis {
        FactorBasis::Unitary {
            matrix: linalg::random_unitary(d, rng),
        }
    }

    #[test]
    fn premeasure_basis_input_is_product() {
        let chain = ChainSpec::uniform(3, 2, 2, 1.0).unwrap();
        let psi = premeasure(&PureState::basis(vec![3], 0).unwrap(), &chain).unwrap();
        let s = factorize_full(&psi, 1e-10).structure;
        assert!(s.blocks.contains(&vec![0]));
        let rho_m = psi.reduced_density(&[1]).unwrap();
        assert!((rho_m.matrix()[(0, 0)].re - 0.5).abs() < 1e-12);
        assert!((rho_m.matrix()[(1, 1)].re - 0.5).abs() < 1e-12);
    }

    #[test]
    fn premeasure_qubit_bell_correlation() {
        let chain = ChainSpec::uniform(2, 1, 1, 1.0).unwrap();
        let psi = premeasure(&PureState::from_real(vec![2], &[H, H]).unwrap(), &chain).unwrap();
        // |000> and |111> in layout [2, 2, 3].
        assert!((psi.amps()[index_of(&[0, 0, 0], psi.dims())].re - H).abs() < 1e-12);
        assert!((psi.amps()[index_of(&[1, 1, 1], psi.dims())].re - H).abs() < 1e-12);
        assert!((psi.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn premeasure_system_reduced_is_diagonal() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let chain = ChainSpec::random(3, 2, 2, 1.0, &mut rng).unwrap();
        let sys = PureState::normalized(
            vec![3],
            (0..3).map(|_| linalg::complex_gaussian(&mut rng)).collect(),
        )
        .unwrap();
        let psi = premeasure(&sys, &chain).unwrap();
        let rho = psi.reduced_density(&[0]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j {
                    sys.amps()[i].norm_sqr()
                } else {
                    0.0
                };
                assert!((rho.matrix()[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn partial_overlap_keeps_coherence() {
        let chain = ChainSpec::uniform(2, 1, 1, 0.25).unwrap();
        let psi = premeasure(&PureState::from_real(vec![2], &[H, H]).unwrap(), &chain).unwrap();
        // Apparatus pointers are orthogonal, so coherence survives only on S x M.
        let rho = psi.reduced_density(&[0, 1]).unwrap();
        assert!((rho.matrix()[(0, 3)].re - 0.5 * 0.75).abs() < 1e-12);
    }

    #[test]
    fn chain_validation() {
        assert!(ChainSpec::uniform(2, 1, 1, 1.5).is_err());
        let mut c = ChainSpec::uniform(2, 2, 1, 1.0).unwrap();
        c.apparatus.weights[0][0] = C64::new(1.0, 0.0);
        assert!(c.validate().is_err());
    }

    fn e1_e2() -> (Ensemble, Ensemble) {
        let e1 = (0..4)
            .map(|i| (0.25, PureState::basis(vec![4, 4], i * 4 + i).unwrap()))
            .collect();
        let e1 = Ensemble::from_states(e1, true, 1e-10).unwrap();
        let mut e2 = Vec::new();
        for k in 0..4 {
            let mut amps = vec![ZERO; 16];
            for i in 0..4 {
                let phase = std::f64::consts::TAU * (i * k) as f64 / 4.0;
                amps[i * 4 + i] = C64::from_polar(0.5, phase);
            }
            e2.push((0.25, PureState::new(vec![4, 4], amps).unwrap()));
        }
        (e1, Ensemble::from_states(e2, true, 1e-10).unwrap())
    }

    #[test]
    fn ensemble_information_examples() {
        let (e1, e2) = e1_e2();
        let mu = 64.0;
        assert!(
            (ensemble_state_information(&e1, mu)
                .unwrap()
                .to_linear()
                .unwrap()
                - 8.0 * mu)
                .abs()
                < 1e-9
        );
        assert!(
            (ensemble_state_information(&e2, mu)
                .unwrap()
                .to_linear()
                .unwrap()
                - 16.0 * mu)
                .abs()
                < 1e-9
        );
        // Same density operator, different memory.
        assert!(
            e1.density()
                .unwrap()
                .max_abs_diff(&e2.density().unwrap())
                .unwrap()
                < 1e-12
        );
        let ghz =
            PureState::from_real(vec![2, 2, 2], &[H, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, H]).unwrap();
        let single = Ensemble::from_states(vec![(1.0, ghz)], true, 1e-10).unwrap();
        assert!(
            (ensemble_state_information(&single, mu)
                .unwrap()
                .to_linear()
                .unwrap()
                - 8.0 * mu)
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn ensemble_rejects_bad_weights() {
        let s = PureState::basis(vec![2], 0).unwrap();
        assert!(Ensemble::from_states(vec![(0.6, s.clone()), (0.6, s)], true, 1e-10).is_err());
    }

    #[test]
    fn improper_ensemble_matches_reduced() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let chain = ChainSpec::random(2, 2, 2, 1.0, &mut rng).unwrap();
        let psi = premeasure(&PureState::from_real(vec![2], &[0.6, 0.8]).unwrap(), &chain).unwrap();
        let e = Ensemble::improper(&psi, &[0, 1], 1e-10).unwrap();
        assert!(!e.proper);
        let rho = psi.reduced_density(&[0, 1]).unwrap();
        assert!(e.density().unwrap().max_abs_diff(&rho).unwrap() < 1e-10);
    }

    #[test]
    fn bell_selects_computational_and_rejects_joint() {
        let bell = PureState::from_real(vec![2, 2], &[H, 0.0, 0.0, H]).unwrap();
        let joint = CandidateBasis::Joint {
            id: "bell".into(),
            matrix: CMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 0.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0, 0.0,
                    -1.0,
                ]
                .map(|x| C64::new(x * H, 0.0)),
            ),
        };
        let cfg = TransitionConfig::new(explicit(1.0), 4.0, 0).with_candidates(vec![joint]);
        let sel = select_transition_basis(&bell, &cfg).unwrap();
        assert_eq!(sel.basis_id, COMPUTATIONAL_ID);
        assert_eq!(sel.index, 0);
        assert!(sel
            .diagnostics
            .iter()
            .any(|d| d.id == "bell" && !d.admissible));
        assert!((sel.cost.to_linear().unwrap() - 16.0).abs() < 1e-9);
    }

    #[test]
    fn product_state_selects_its_own_basis() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let u0 = linalg::random_unitary(2, &mut rng);
        let u1 = linalg::random_unitary(3, &mut rng);
        let a = PureState::new(vec![2], u0.column(1).iter().copied().collect()).unwrap();
        let b = PureState::new(vec![3], u1.column(2).iter().copied().collect()).unwrap();
        let psi = PureState::product(&[a, b]).unwrap();
        let own = rotated(
            "own",
            vec![
                FactorBasis::Unitary { matrix: u0 },
                FactorBasis::Unitary { matrix: u1 },
            ],
        );
        let cfg = TransitionConfig::new(explicit(1.0), 4.0, 0).with_candidates(vec![own]);
        let e = nonselective_transition(
            &psi,
            match &cfg.candidate_bases[0] {
                CandidateBasis::Product(p) => p,
                _ => unreachable!(),
            },
            1e-10,
        )
        .unwrap();
        assert_eq!(e.members.len(), 1);
        assert!((e.members[0].weight - 1.0).abs() < 1e-12);
        // Both bases cost mu * (2 + 3); the tie goes to index 0.
        let sel = select_transition_basis(&psi, &cfg).unwrap();
        assert_eq!(sel.index, 0);
        assert!((sel.cost.to_linear().unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn empty_candidates_error() {
        let psi = PureState::basis(vec![2, 2], 0).unwrap();
        let bad = rotated(
            "none",
            vec![FactorBasis::Unmeasured, FactorBasis::Unmeasured],
        );
        let cfg = TransitionConfig::new(explicit(1.0), 4.0, 0)
            .with_candidates(vec![bad, ProductBasis::computational(2).into()]);
        assert!(select_transition_basis(&psi, &cfg).is_ok());
        let mut cfg = cfg;
        cfg.candidate_bases = vec![CandidateBasis::Joint {
            id: "j".into(),
            matrix: linalg::identity(4),
        }];
        // Computational still gets added.
        assert!(select_transition_basis(&psi, &cfg).is_ok());
    }

    #[test]
    fn pointer_wins_over_rotated_environment() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let chain = ChainSpec::uniform(4, 1, 1, 1.0).unwrap();
        let psi = premeasure(&PureState::from_real(vec![4], &[0.5; 4]).unwrap(), &chain).unwrap();
        let dq = chain.dims()[2];
        let e2 = rotated(
            "rotated-env",
            vec![
                FactorBasis::Unmeasured,
                FactorBasis::Unmeasured,
                unitary(dq, &mut rng),
            ],
        );
        let cfg = TransitionConfig::new(explicit(1.0), 8.0, 0).with_candidates(vec![e2]);
        let sel = select_transition_basis(&psi, &cfg).unwrap();
        assert_eq!(sel.basis_id, COMPUTATIONAL_ID);
        let rot = sel
            .diagnostics
            .iter()
            .find(|d| d.id == "rotated-env")
            .unwrap();
        assert!(rot.max_bits.unwrap() > sel.cost.to_linear().unwrap());
    }

    #[test]
    fn transition_on_basis_state_is_certain() {
        let psi = PureState::basis(vec![2, 3], 4).unwrap();
        let cfg = TransitionConfig::new(explicit(1.0), 4.0, 9);
        let mut rng = TransitionRng::new(9, 0);
        let (post, rec) = information_transition(&psi, &cfg, 0.5, false, &mut rng).unwrap();
        assert_eq!(post, psi);
        assert_eq!(rec.outcome_index, 4);
        assert_eq!(rec.outcome_digits, vec![1, 1]);
        assert!((rec.probability - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stable_state_refuses_without_force() {
        let psi = PureState::basis(vec![2, 2], 0).unwrap();
        let cfg = TransitionConfig::new(explicit(1e6), 4.0, 0);
        let mut rng = TransitionRng::new(0, 0);
        assert!(matches!(
            information_transition(&psi, &cfg, 0.0, false, &mut rng),
            Err(Error::StableRefusal)
        ));
        assert!(information_transition(&psi, &cfg, 0.0, true, &mut rng).is_ok());
    }

    #[test]
    fn replay_reproduces_draw() {
        let psi = PureState::from_real(vec![2, 2], &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let cfg = TransitionConfig::new(explicit(1.0), 4.0, 77);
        let mut rng = TransitionRng::new(77, 3);
        for _ in 0..5 {
            rng.uniform();
        }
        let (_, rec) = information_transition(&psi, &cfg, 0.0, true, &mut rng).unwrap();
        let mut again = TransitionRng::replay(rec.seed_state);
        let (_, rec2) = information_transition(&psi, &cfg, 0.0, true, &mut again).unwrap();
        assert_eq!(rec, rec2);
    }

    #[test]
    fn born_frequencies_two_outcomes() {
        let psi = PureState::from_real(vec![2, 2], &[0.5, 0.0, 0.0, 0.75f64.sqrt()]).unwrap();
        let cfg = TransitionConfig::new(explicit(1.0), 4.0, 2024);
        let mut rng = TransitionRng::new(2024, 0);
        let n = 10_000;
        let mut ones = 0;
        for _ in 0..n {
            let (_, rec) = information_transition(&psi, &cfg, 0.0, false, &mut rng).unwrap();
            assert!(rec.outcome_index == 0 || rec.outcome_index == 3);
            let want = if rec.outcome_index == 0 { 0.25 } else { 0.75 };
            assert!((rec.probability - want).abs() < 1e-12);
            assert!(rec.post_m.log10() <= rec.pre_m.log10() + 1e-12);
            ones += usize::from(rec.outcome_index == 3);
        }
        let sigma = (n as f64 * 0.75 * 0.25).sqrt();
        assert!((ones as f64 - 0.75 * n as f64).abs() < 3.0 * sigma);
    }

    #[test]
    fn nonselective_density_matches_projector_sum() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let chain = ChainSpec::random(2, 2, 1, 1.0, &mut rng).unwrap();
        let psi = premeasure(&PureState::from_real(vec![2], &[0.6, 0.8]).unwrap(), &chain).unwrap();
        let basis = ProductBasis::computational(3);
        let e = nonselective_transition(&psi, &basis, 1e-10).unwrap();
        assert!(e.proper);
        let rho = psi.density();
        let d = psi.dim();
        // Oracle: sum_k P_k rho P_k with P_k computational projectors = diagonal part.
        let mut oracle = CMatrix::zeros(d, d);
        for k in 0..d {
            oracle[(k, k)] = rho.matrix()[(k, k)];
        }
        assert!(max_abs_diff(e.density().unwrap().matrix(), &oracle) < 1e-12);
        // System block: diag(0.36, 0.64).
        let rs = e.reduced_density(&[0]).unwrap();
        assert!((rs.matrix()[(0, 0)].re - 0.36).abs() < 1e-12);
        assert!(rs.matrix()[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn crux_examples() {
        let mut rng = ChaCha20Rng::seed_from_u64(12);
        let chain = ChainSpec::random(3, 2, 2, 1.0, &mut rng).unwrap();
        let sys = PureState::normalized(
            vec![3],
            (0..3).map(|_| linalg::complex_gaussian(&mut rng)).collect(),
        )
        .unwrap();
        let psi = premeasure(&sys, &chain).unwrap();
        let dq = chain.dims()[2];
        let pointer_q = ProductBasis {
            id: "q".into(),
            factors: vec![
                FactorBasis::Unmeasured,
                FactorBasis::Unmeasured,
                FactorBasis::Computational,
            ],
        };
        assert!(verify_reduced_invariance(&psi, &pointer_q, &[2]).unwrap() < 1e-10);
        let rot_q = ProductBasis {
            id: "rq".into(),
            factors: vec![
                FactorBasis::Unmeasured,
                FactorBasis::Unmeasured,
                unitary(dq, &mut rng),
            ],
        };
        assert!(verify_reduced_invariance(&psi, &rot_q, &[2]).unwrap() < 1e-10);
        let prod = PureState::basis(vec![2, 2], 1).unwrap();
        assert_eq!(
            verify_reduced_invariance(&prod, &ProductBasis::computational(2), &[1]).unwrap(),
            0.0
        );
    }

    #[test]
    fn superselection_orthogonal_environment() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for trial in 0..20 {
            // D = 2 with m = 1 makes an entangled S x M member cost the same as the pointer product.
            let (d, m, q) = (3 + trial % 2, 1 + trial % 3, 1 + (trial / 3) % 3);
            let chain = ChainSpec::random(d, m, q, 1.0, &mut rng).unwrap();
            let sys = PureState::normalized(
                vec![d],
                (0..d).map(|_| linalg::complex_gaussian(&mut rng)).collect(),
            )
            .unwrap();
            let psi = premeasure(&sys, &chain).unwrap();
            let dims = chain.dims();
            let mut cands = vec![
                rotated(COMPUTATIONAL_ID, vec![FactorBasis::Computational; 3]),
                rotated(
                    "rot-q",
                    vec![
                        FactorBasis::Unmeasured,
                        FactorBasis::Unmeasured,
                        unitary(dims[2], &mut rng),
                    ],
                ),
                rotated(
                    "rot-s",
                    vec![
                        unitary(dims[0], &mut rng),
                        FactorBasis::Unmeasured,
                        FactorBasis::Unmeasured,
                    ],
                ),
                rotated(
                    "rot-m",
                    vec![
                        FactorBasis::Unmeasured,
                        unitary(dims[1], &mut rng),
                        FactorBasis::Unmeasured,
                    ],
                ),
            ];
            cands.shuffle(&mut rng);
            let cfg = TransitionConfig::new(explicit(1.0), 8.0, 0).with_candidates(cands);
            let sel = select_transition_basis(&psi, &cfg).unwrap();
            assert_eq!(sel.basis_id, COMPUTATIONAL_ID, "trial {trial}");
        }
    }

    #[test]
    fn superselection_partial_environment() {
        let mut rng = ChaCha20Rng::seed_from_u64(22);
        let chain = ChainSpec::random(2, 2, 2, 0.6, &mut rng).unwrap();
        let psi = premeasure(&PureState::from_real(vec![2], &[0.6, 0.8]).unwrap(), &chain).unwrap();
        let dims = chain.dims();
        let cands = vec![
            rotated(
                "sm-pointer",
                vec![
                    FactorBasis::Computational,
                    FactorBasis::Computational,
                    FactorBasis::Unmeasured,
                ],
            ),
            rotated(
                "rot-q",
                vec![
                    FactorBasis::Unmeasured,
                    FactorBasis::Unmeasured,
                    unitary(dims[2], &mut rng),
                ],
            ),
            rotated(COMPUTATIONAL_ID, vec![FactorBasis::Computational; 3]),
        ];
        let cfg = TransitionConfig::new(explicit(1.0), 8.0, 0).with_candidates(cands);
        let sel = select_transition_basis(&psi, &cfg).unwrap();
        assert_eq!(sel.basis_id, "sm-pointer");
        let e = sel.projection.ensemble().unwrap();
        assert!(pointer_diagonal(&e, &[0, 1], 1e-10).unwrap());
    }

    #[test]
    fn trajectory_huge_threshold_is_unitary() {
        let h = HamiltonianSpec::XChain {
            omegas: vec![1.0, 0.7, 0.3],
        };
        let psi = PureState::basis(vec![2, 2, 2], 0).unwrap();
        let cfg = TransitionConfig::new(explicit(1e30), 8.0, 1);
        let opts = TrajectoryOptions {
            t_total: 2.0,
            dt: 0.05,
            force_every: None,
        };
        let tr = run_trajectory(&psi, &h, &cfg, &opts, 1.0, 0).unwrap();
        assert!(tr.records.is_empty());
        let closed = crate::dynamics::x_chain_closed_form(&[1.0, 0.7, 0.3], 2.0).unwrap();
        assert!(tr.final_state.fidelity(&closed).unwrap() > 1.0 - 1e-10);
    }

    #[test]
    fn trajectory_block_watchdog() {
        let omegas = vec![1.3, 0.9, 1.1, 0.7, 1.7, 0.5];
        let h = HamiltonianSpec::XChain { omegas };
        let psi = PureState::basis(vec![2; 6], 0).unwrap();
        let mu = 8.0;
        let cfg = TransitionConfig::new(explicit(mu * 8.0), mu, 5);
        let opts = TrajectoryOptions {
            t_total: 10.0,
            dt: 0.05,
            force_every: None,
        };
        let tr = run_trajectory(&psi, &h, &cfg, &opts, 1.0, 0).unwrap();
        assert!(!tr.records.is_empty());
        for r in &tr.records {
            assert!(!r.trigger.stable);
            assert!(r.trigger.required.to_linear().unwrap() > mu * 8.0);
            assert!(r.post_m.log10() <= r.pre_m.log10() + 1e-12);
        }
        assert_eq!(tr.intervals.len(), tr.records.len());
        let again = run_trajectory(&psi, &h, &cfg, &opts, 1.0, 0).unwrap();
        assert_eq!(tr.records, again.records);
    }

    #[test]
    fn cat_mixture_weights() {
        let chain = ChainSpec::uniform(2, 1, 1, 1.0).unwrap();
        let e = cat_mixture(&chain).unwrap();
        assert!(e.proper);
        assert_eq!(e.members.len(), 2);
        for m in &e.members {
            assert!((m.weight - 0.5).abs() < 1e-12);
        }
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let chain = ChainSpec::random(2, 3, 2, 1.0, &mut rng).unwrap();
        let e = cat_mixture(&chain).unwrap();
        let here: f64 = e
            .members
            .iter()
            .filter(|m| m.state.amps()[..3].iter().any(|z| z.norm() > 0.5))
            .map(|m| m.weight)
            .sum();
        assert!((here - 0.5).abs() < 1e-12);
        let ups = cat_state(&chain).unwrap();
        let rho = ups.reduced_density(&[0]).unwrap();
        assert!(e.density().unwrap().max_abs_diff(&rho).unwrap() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn crux_holds_for_random_chains(seed in any::<u64>(), d in 2usize..4, m in 1usize..3, q in 1usize..3, theta in 0.0f64..=1.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let chain = ChainSpec::random(d, m, q, theta, &mut rng).unwrap();
            let sys = PureState::normalized(vec![d], (0..d).map(|_| linalg::complex_gaussian(&mut rng)).collect()).unwrap();
            let psi = premeasure(&sys, &chain).unwrap();
            let dq = chain.dims()[2];
            let basis = ProductBasis { id: "q".into(), factors: vec![FactorBasis::Unmeasured, FactorBasis::Unmeasured, unitary(dq, &mut rng)] };
            prop_assert!(verify_reduced_invariance(&psi, &basis, &[2]).unwrap() < 1e-10);
        }

        #[test]
        fn nonselective_is_proper_and_normalized(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let amps: Vec<C64> = (0..12).map(|_| linalg::complex_gaussian(&mut rng)).collect();
            let psi = PureState::normalized(vec![2, 2, 3], amps).unwrap();
            let basis = ProductBasis { id: "r".into(), factors: vec![unitary(2, &mut rng), FactorBasis::Computational, unitary(3, &mut rng)] };
            let e = nonselective_transition(&psi, &basis, 1e-10).unwrap();
            prop_assert!(e.proper);
            let sum: f64 = e.members.iter().map(|m| m.weight).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(e.members.iter().all(|m| m.factorization.is_fully_separable()));
        }

        #[test]
        fn transition_probability_is_born(seed in any::<u64>()) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let amps: Vec<C64> = (0..8).map(|_| linalg::complex_gaussian(&mut rng)).collect();
            let psi = PureState::normalized(vec![2, 2, 2], amps).unwrap();
            let cfg = TransitionConfig::new(explicit(1.0), 4.0, seed);
            let mut trng = TransitionRng::new(seed, 0);
            let (post, rec) = information_transition(&psi, &cfg, 0.0, false, &mut trng).unwrap();
            prop_assert!((rec.probability - psi.amps()[rec.outcome_index].norm_sqr()).abs() < 1e-12);
            prop_assert!(rec.post_m.log10() <= rec.pre_m.log10() + 1e-12);
            prop_assert!(factorize_full(&post, 1e-10).structure.is_fully_separable());
        }
    }
}
