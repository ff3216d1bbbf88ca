//! Time evolution: spectral unitary propagation, the `sum_j hbar w_j X_1..X_j`
//! chain, fixed-step RK4 Lindblad integration and position-lattice
//! decoherence.
//!
//! Every routine takes `hbar` explicitly so the same code serves SI and
//! natural (`hbar = 1`) units; [`UnitMode`] resolves it.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{DensityMatrix, PureState};
use crate::linalg::{self, CMatrix, C64, ONE, ZERO};
use crate::resources::PhysicalConstants;

/// Largest chain handled by the closed form and the X-basis propagator.
pub const MAX_CHAIN_QUBITS: usize = 12;

/// Largest admissible intermediate trace drift in [`lindblad_evolve`].
pub const TRACE_WATCHDOG: f64 = 1e-6;

/// RK4 stays stable on the imaginary axis up to about 2.83; keep a margin.
pub const STEP_BOUND: f64 = 2.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitMode {
    #[default]
    Si,
    /// `hbar = 1`.
    Natural,
}

impl UnitMode {
    pub fn hbar(self, c: &PhysicalConstants) -> f64 {
        match self {
            Self::Si => c.hbar,
            Self::Natural => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    Dense {
        dims: Vec<usize>,
        #[serde(with = "linalg::complex_matrix")]
        matrix: CMatrix,
    },
    /// `E0 |+><+| + E1 |-><-|`.
    QubitFlip { e0: f64, e1: f64 },
    /// `sum_j hbar omega_j X_1 X_2 .. X_j` on `omegas.len()` qubits.
    XChain { omegas: Vec<f64> },
    /// `p^2 / 2m` on a hard-walled lattice, three-point Laplacian.
    FreeParticle { mass: f64, points: usize, dx: f64 },
}

impl HamiltonianSpec {
    pub fn dims(&self) -> Vec<usize> {
        match self {
            Self::Dense { dims, .. } => dims.clone(),
            Self::QubitFlip { .. } => vec![2],
            Self::XChain { omegas } => vec![2; omegas.len()],
            Self::FreeParticle { points, .. } => vec![*points],
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Dense { dims, matrix } => {
                let d = crate::hilbert::total_dim(dims)?;
                if matrix.nrows() != d || matrix.ncols() != d {
                    return Err(Error::Dimension(format!(
                        "{}x{} Hamiltonian for dims {dims:?}",
                        matrix.nrows(),
                        matrix.ncols()
                    )));
                }
                check_hermitian(matrix)
            }
            Self::QubitFlip { e0, e1 } if e0.is_finite() && e1.is_finite() => Ok(()),
            Self::QubitFlip { .. } => Err(Error::Domain("non-finite qubit energies".into())),
            Self::XChain { omegas } => {
                if omegas.is_empty() || omegas.len() > MAX_CHAIN_QUBITS {
                    return Err(Error::Domain(format!(
                        "x_chain needs 1..={MAX_CHAIN_QUBITS} qubits, got {}",
                        omegas.len()
                    )));
                }
                if omegas.iter().any(|w| !w.is_finite()) {
                    return Err(Error::Domain("non-finite chain frequency".into()));
                }
                Ok(())
            }
            Self::FreeParticle { mass, points, dx } => {
                if !(*mass > 0.0) || !(*dx > 0.0) || *points < 2 {
                    return Err(Error::Domain(
                        "free particle needs mass > 0, dx > 0, points >= 2".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Dense matrix in joules (or natural energy units).
    pub fn matrix(&self, hbar: f64) -> Result<CMatrix> {
        self.validate()?;
        Ok(match self {
            Self::Dense { matrix, .. } => matrix.clone(),
            Self::QubitFlip { e0, e1 } => {
                let s = std::f64::consts::FRAC_1_SQRT_2;
                let plus = [C64::new(s, 0.0), C64::new(s, 0.0)];
                let minus = [C64::new(s, 0.0), C64::new(-s, 0.0)];
                linalg::outer(&plus) * C64::new(*e0, 0.0)
                    + linalg::outer(&minus) * C64::new(*e1, 0.0)
            }
            Self::XChain { omegas } => x_chain_matrix(omegas, hbar),
            Self::FreeParticle { mass, points, dx } => {
                let k = kinetic_coefficient(*mass, *dx, hbar);
                laplacian(*points) * C64::new(-k, 0.0)
            }
        })
    }

    /// `exp(-i H t / hbar)` as an applicable operator.
    pub fn propagator(&self, t: f64, hbar: f64) -> Result<Propagator> {
        self.validate()?;
        if let Self::XChain { omegas } = self {
            let n = omegas.len();
            let phases = (0..1usize << n)
                .map(|k| C64::from_polar(1.0, -t * chain_eigenvalue(omegas, k)))
                .collect();
            return Ok(Propagator::XChain { n, phases });
        }
        let h = self.matrix(hbar)?;
        let (vals, vecs) = linalg::hermitian_eigen(&h);
        let u = linalg::spectral_map(&vals, &vecs, |e| C64::from_polar(1.0, -e * t / hbar));
        Ok(Propagator::Dense {
            dims: self.dims(),
            u,
        })
    }
}

fn check_hermitian(m: &CMatrix) -> Result<()> {
    // relative to the largest entry so SI-scale energies are judged fairly
    let scale = m.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let err = linalg::hermiticity_error(m);
    if err > 1e-10 * scale {
        return Err(Error::NotHermitian(err));
    }
    Ok(())
}

/// `hbar^2 / (2 m dx^2)`; zero for infinite mass.
fn kinetic_coefficient(mass: f64, dx: f64, hbar: f64) -> f64 {
    if mass.is_infinite() {
        0.0
    } else {
        hbar * hbar / (2.0 * mass * dx * dx)
    }
}

/// Tridiagonal `(1, -2, 1)` with hard walls.
fn laplacian(n: usize) -> CMatrix {
    CMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => C64::new(-2.0, 0.0),
        1 => ONE,
        _ => ZERO,
    })
}

/// Parity of the first `j` qubits of `k` (qubit 0 is the top bit).
fn prefix_parity(k: usize, j: usize, n: usize) -> i32 {
    ((k >> (n - j)).count_ones() & 1) as i32
}

/// Eigenvalue of `sum_j omega_j X_1..X_j` on X-basis label `k`.
fn chain_eigenvalue(omegas: &[f64], k: usize) -> f64 {
    let n = omegas.len();
    omegas
        .iter()
        .enumerate()
        .map(|(j, w)| w * f64::from(1 - 2 * prefix_parity(k, j + 1, n)))
        .sum()
}

fn x_chain_matrix(omegas: &[f64], hbar: f64) -> CMatrix {
    let n = omegas.len();
    let x = CMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
    let i2 = linalg::identity(2);
    let mut h = CMatrix::zeros(1 << n, 1 << n);
    for (j, w) in omegas.iter().enumerate() {
        let term = (0..n)
            .map(|q| if q <= j { &x } else { &i2 })
            .fold(linalg::identity(1), |acc, f| linalg::kron(&acc, f));
        h += term * C64::new(hbar * w, 0.0);
    }
    h
}

/// Normalized Walsh-Hadamard transform in place; its own inverse.
pub fn walsh_hadamard(v: &mut [C64]) {
    let n = v.len();
    assert!(n.is_power_of_two());
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = (a + b) * s;
                v[i + h] = (a - b) * s;
            }
        }
        h *= 2;
    }
}

#[derive(Debug, Clone)]
pub enum Propagator {
    Dense {
        dims: Vec<usize>,
        u: CMatrix,
    },
    /// Diagonal in the X-product basis.
    XChain {
        n: usize,
        phases: Vec<C64>,
    },
}

impl Propagator {
    pub fn apply(&self, state: &PureState) -> Result<PureState> {
        match self {
            Self::Dense { dims, u } => {
                if state.dims() != dims.as_slice() {
                    return Err(Error::Dimension(format!(
                        "state {:?} vs H {:?}",
                        state.dims(),
                        dims
                    )));
                }
                let v = nalgebra::DVector::from_column_slice(state.amps());
                let out = u * v;
                Ok(PureState::from_parts_unchecked(
                    dims.clone(),
                    out.iter().copied().collect(),
                ))
            }
            Self::XChain { n, phases } => {
                if state.dims() != vec![2; *n].as_slice() {
                    return Err(Error::Dimension(format!(
                        "state {:?} vs {n}-qubit chain",
                        state.dims()
                    )));
                }
                let mut a = state.amps().to_vec();
                walsh_hadamard(&mut a);
                a.iter_mut().zip(phases).for_each(|(z, p)| *z *= p);
                walsh_hadamard(&mut a);
                Ok(PureState::from_parts_unchecked(vec![2; *n], a))
            }
        }
    }
}

/// `exp(-i H t / hbar) |psi>`.
pub fn evolve_unitary(
    state: &PureState,
    h: &HamiltonianSpec,
    t: f64,
    hbar: f64,
) -> Result<PureState> {
    h.propagator(t, hbar)?.apply(state)
}

/// Chain state at time `t` from `|0..0>`, built in the X-product eigenbasis
/// and mapped back with a Walsh-Hadamard transform.
pub fn x_chain_closed_form(omegas: &[f64], t: f64) -> Result<PureState> {
    HamiltonianSpec::XChain {
        omegas: omegas.to_vec(),
    }
    .validate()?;
    let n = omegas.len();
    let norm = (-(n as f64) / 2.0).exp2();
    let mut a: Vec<C64> = (0..1usize << n)
        .map(|k| C64::from_polar(norm, -t * chain_eigenvalue(omegas, k)))
        .collect();
    walsh_hadamard(&mut a);
    Ok(PureState::from_parts_unchecked(vec![2; n], a))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladSpec {
    pub h0: HamiltonianSpec,
    #[serde(with = "linalg::complex_matrices")]
    pub collapse_ops: Vec<CMatrix>,
}

impl LindbladSpec {
    pub fn validate(&self) -> Result<()> {
        self.h0.validate()?;
        let d: usize = self.h0.dims().iter().product();
        for (k, l) in self.collapse_ops.iter().enumerate() {
            if l.nrows() != d || l.ncols() != d {
                return Err(Error::Dimension(format!(
                    "collapse operator {k} is {}x{}, expected {d}x{d}",
                    l.nrows(),
                    l.ncols()
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct LindbladRun {
    pub rho: DensityMatrix,
    pub steps: usize,
    /// Largest `|tr(rho) - 1|` seen at any stage.
    pub max_trace_drift: f64,
    /// `max_trace_drift / t`.
    pub trace_drift_per_time: f64,
}

/// Number of equal steps of length at most `dt` covering `t`.
fn step_count(t: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t >= 0.0) || !t.is_finite() {
        return Err(Error::Domain(format!(
            "need dt > 0 and t >= 0, got dt={dt}, t={t}"
        )));
    }
    if t > 0.0 && dt > t * (1.0 + 1e-12) {
        return Err(Error::Domain(format!("dt = {dt} exceeds t = {t}")));
    }
    Ok((t / dt * (1.0 - 1e-12)).ceil() as usize)
}

fn rk4(
    mut y: CMatrix,
    steps: usize,
    h: f64,
    f: impl Fn(&CMatrix) -> CMatrix,
    mut check: impl FnMut(&CMatrix) -> Result<()>,
) -> Result<CMatrix> {
    let c = |x: f64| C64::new(x, 0.0);
    for _ in 0..steps {
        let k1 = f(&y);
        let k2 = f(&(&y + &k1 * c(h / 2.0)));
        let k3 = f(&(&y + &k2 * c(h / 2.0)));
        let k4 = f(&(&y + &k3 * c(h)));
        y += (k1 + k2 * c(2.0) + k3 * c(2.0) + k4) * c(h / 6.0);
        y = (&y + y.adjoint()) * c(0.5);
        check(&y)?;
    }
    Ok(y)
}

/// Fixed-step RK4 integration of
/// `drho/dt = -(i/hbar)[H,rho] - (1/2hbar) sum_k (L†L rho + rho L†L - 2 L rho L†)`.
pub fn lindblad_evolve(
    rho: &DensityMatrix,
    spec: &LindbladSpec,
    t: f64,
    dt: f64,
    hbar: f64,
) -> Result<LindbladRun> {
    spec.validate()?;
    if rho.dims().iter().product::<usize>() != spec.h0.dims().iter().product::<usize>() {
        return Err(Error::Dimension(format!(
            "rho {:?} vs H {:?}",
            rho.dims(),
            spec.h0.dims()
        )));
    }
    let steps = step_count(t, dt)?;
    let h = spec.h0.matrix(hbar)?;
    let d = h.nrows();
    let k_sum = spec
        .collapse_ops
        .iter()
        .fold(CMatrix::zeros(d, d), |acc, l| acc + l.adjoint() * l);
    let adj: Vec<CMatrix> = spec.collapse_ops.iter().map(|l| l.adjoint()).collect();
    let minus_i_over_hbar = C64::new(0.0, -1.0 / hbar);
    let half_over_hbar = C64::new(0.5 / hbar, 0.0);
    let one_over_hbar = C64::new(1.0 / hbar, 0.0);
    let f = |r: &CMatrix| -> CMatrix {
        let mut out =
            (&h * r - r * &h) * minus_i_over_hbar - (&k_sum * r + r * &k_sum) * half_over_hbar;
        for (l, ld) in spec.collapse_ops.iter().zip(&adj) {
            out += l * r * ld * one_over_hbar;
        }
        out
    };
    let tr0 = rho.trace();
    let mut max_drift = 0.0f64;
    let out = rk4(
        rho.matrix().clone(),
        steps,
        if steps == 0 { 0.0 } else { t / steps as f64 },
        f,
        |y| {
            let drift = (linalg::trace(y).re - tr0).abs();
            max_drift = max_drift.max(drift);
            if drift > TRACE_WATCHDOG {
                return Err(Error::Watchdog(format!(
                    "trace drift {drift:.3e} exceeds {TRACE_WATCHDOG:e}"
                )));
            }
            Ok(())
        },
    )?;
    Ok(LindbladRun {
        rho: DensityMatrix::from_parts(rho.dims().to_vec(), out)?,
        steps,
        max_trace_drift: max_drift,
        trace_drift_per_time: if t > 0.0 { max_drift / t } else { 0.0 },
    })
}

/// Density matrix `rho(x, x')` on a centred 1-D lattice,
/// `x_i = (i - (N-1)/2) dx`, normalized so `sum_i rho(x_i, x_i) dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeState {
    dx: f64,
    rho: CMatrix,
}

impl LatticeState {
    pub fn new(dx: f64, rho: CMatrix) -> Result<Self> {
        if !(dx > 0.0) {
            return Err(Error::Domain(format!("dx must be positive, got {dx}")));
        }
        linalg::require_square(&rho, "lattice density")?;
        let s = Self { dx, rho };
        let herm = linalg::hermiticity_error(&s.rho) * dx;
        if herm > 1e-10 {
            return Err(Error::NotHermitian(herm));
        }
        let tr = s.trace();
        if (tr - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!("lattice trace is {tr}, expected 1")));
        }
        Ok(s)
    }

    /// Pure Gaussian packet of position spread `sigma` centred at `x0`.
    pub fn gaussian(points: usize, dx: f64, sigma: f64, x0: f64) -> Result<Self> {
        if points < 2 || !(sigma > 0.0) {
            return Err(Error::Domain("need points >= 2 and sigma > 0".into()));
        }
        let xs = positions(points, dx);
        let psi: Vec<C64> = xs
            .iter()
            .map(|x| C64::new((-(x - x0).powi(2) / (4.0 * sigma * sigma)).exp(), 0.0))
            .collect();
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * dx;
        let rho = linalg::outer(&psi) / C64::new(norm, 0.0);
        Self::new(dx, rho)
    }

    /// From a density operator on the lattice basis (`rho_op = rho dx`).
    pub fn from_density(rho: &DensityMatrix, dx: f64) -> Result<Self> {
        Self::new(dx, rho.matrix() / C64::new(dx, 0.0))
    }

    pub fn to_density(&self) -> Result<DensityMatrix> {
        DensityMatrix::from_parts(vec![self.points()], &self.rho * C64::new(self.dx, 0.0))
    }

    pub fn points(&self) -> usize {
        self.rho.nrows()
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn rho(&self) -> &CMatrix {
        &self.rho
    }

    pub fn positions(&self) -> Vec<f64> {
        positions(self.points(), self.dx)
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.rho).re * self.dx
    }

    /// Position standard deviation from the diagonal.
    pub fn width(&self) -> f64 {
        let xs = self.positions();
        let p: Vec<f64> = (0..self.points())
            .map(|i| self.rho[(i, i)].re * self.dx)
            .collect();
        let total: f64 = p.iter().sum();
        let mean = xs.iter().zip(&p).map(|(x, w)| x * w).sum::<f64>() / total;
        (xs.iter()
            .zip(&p)
            .map(|(x, w)| (x - mean).powi(2) * w)
            .sum::<f64>()
            / total)
            .sqrt()
    }

    /// Separation `|x - x'|` along the central row at which `|rho|` first
    /// falls below `1/e` of the diagonal, linearly interpolated.
    pub fn coherence_length(&self) -> f64 {
        let n = self.points();
        let i = n / 2;
        let diag = self.rho[(i, i)].norm();
        let target = diag / std::f64::consts::E;
        let mut prev = diag;
        for s in 1..n - i {
            let cur = self.rho[(i, i + s)].norm();
            if cur <= target {
                let frac = (prev - target) / (prev - cur);
                return (s as f64 - 1.0 + frac) * self.dx;
            }
            prev = cur;
        }
        ((n - i - 1) as f64) * self.dx
    }

    /// `x,x',re,im` rows.
    pub fn to_csv(&self) -> String {
        let xs = self.positions();
        let mut out = String::from("x,x_prime,re,im\n");
        for (i, x) in xs.iter().enumerate() {
            for (j, y) in xs.iter().enumerate() {
                let z = self.rho[(i, j)];
                let _ = writeln!(out, "{x:e},{y:e},{:e},{:e}", z.re, z.im);
            }
        }
        out
    }
}

pub fn positions(points: usize, dx: f64) -> Vec<f64> {
    let mid = (points as f64 - 1.0) / 2.0;
    (0..points).map(|i| (i as f64 - mid) * dx).collect()
}

/// `rho(x,x') exp(-Lambda t (x - x')^2)`.
pub fn scattering_damping(state: &LatticeState, lambda: f64, t: f64) -> Result<LatticeState> {
    if !(lambda >= 0.0) || !(t >= 0.0) {
        return Err(Error::Domain("need Lambda >= 0 and t >= 0".into()));
    }
    let xs = state.positions();
    let rho = CMatrix::from_fn(state.points(), state.points(), |i, j| {
        state.rho[(i, j)] * (-lambda * t * (xs[i] - xs[j]).powi(2)).exp()
    });
    Ok(LatticeState { dx: state.dx, rho })
}

/// Largest `dt` allowed by [`STEP_BOUND`] for the combined kinetic and
/// damping generator.
pub fn lattice_step_limit(points: usize, dx: f64, mass: f64, lambda: f64, hbar: f64) -> f64 {
    let kinetic = if mass.is_infinite() {
        0.0
    } else {
        2.0 * hbar / (mass * dx * dx)
    };
    let span = (points as f64 - 1.0) * dx;
    let rate = kinetic + lambda * span * span;
    if rate == 0.0 {
        f64::INFINITY
    } else {
        STEP_BOUND / rate
    }
}

/// RK4 integration of
/// `d rho/dt = (i hbar / 2m)(d2/dx2 - d2/dx'2) rho - Lambda (x - x')^2 rho`
/// with three-point Laplacians and hard walls.
pub fn decohered_free_evolution(
    state: &LatticeState,
    mass: f64,
    lambda: f64,
    t: f64,
    dt: f64,
    hbar: f64,
) -> Result<LatticeState> {
    if !(mass > 0.0) || !(lambda >= 0.0) {
        return Err(Error::Domain("need mass > 0 and Lambda >= 0".into()));
    }
    let steps = step_count(t, dt)?;
    let n = state.points();
    let limit = lattice_step_limit(n, state.dx, mass, lambda, hbar);
    let h = if steps == 0 { 0.0 } else { t / steps as f64 };
    if h > limit {
        return Err(Error::StepBound { dt: h, limit });
    }
    let xs = state.positions();
    let damp = CMatrix::from_fn(n, n, |i, j| {
        C64::new(-lambda * (xs[i] - xs[j]).powi(2), 0.0)
    });
    let lap = laplacian(n);
    let kin = C64::new(0.0, kinetic_coefficient(mass, state.dx, hbar) / hbar);
    let f = |r: &CMatrix| -> CMatrix { (&lap * r - r * &lap) * kin + damp.component_mul(r) };
    let tr0 = linalg::trace(&state.rho).re;
    let rho = rk4(state.rho.clone(), steps, h, f, |y| {
        let drift = (linalg::trace(y).re - tr0).abs() * state.dx;
        if drift > TRACE_WATCHDOG {
            return Err(Error::Watchdog(format!("lattice trace drift {drift:.3e}")));
        }
        Ok(())
    })?;
    Ok(LatticeState { dx: state.dx, rho })
}

/// Free-particle Lindblad spec with `L = sqrt(2 Lambda hbar) x`, which is
/// `sqrt(2 Lambda) x` in natural units and reproduces the damping term of
/// [`decohered_free_evolution`] in either unit system.
pub fn lindblad_position_generator(
    points: usize,
    dx: f64,
    mass: f64,
    lambda: f64,
    hbar: f64,
) -> Result<LindbladSpec> {
    if !(lambda >= 0.0) {
        return Err(Error::Domain(format!(
            "Lambda must be non-negative, got {lambda}"
        )));
    }
    let xs = positions(points, dx);
    let g = (2.0 * lambda * hbar).sqrt();
    let l = CMatrix::from_fn(points, points, |i, j| {
        if i == j {
            C64::new(g * xs[i], 0.0)
        } else {
            ZERO
        }
    });
    Ok(LindbladSpec {
        h0: HamiltonianSpec::FreeParticle { mass, points, dx },
        collapse_ops: if lambda > 0.0 { vec![l] } else { vec![] },
    })
}
