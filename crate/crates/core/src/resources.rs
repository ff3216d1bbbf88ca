//! Resource accounting: state information, operation rates, the two memory
//! thresholds, stability verdicts and the information length and time scales.
//!
//! Every threshold comparison happens on log10 exponents.

use std::f64::consts::{LN_10, LN_2, LOG10_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magnitude::{LogQuantity, Unit};

/// Exponent tolerance for "required <= limit" decisions.
pub const VERDICT_TOLERANCE: f64 = 1e-9;

/// Decades of `D` per elementary degree of freedom in the Planck-cell electron
/// model, `D ≈ 10^182`.
pub const DECADES_PER_DOF: f64 = 182.0;

/// Coefficient printed in the length-scale formula, `182 * 7`.
pub const LENGTH_COEFFICIENT: f64 = 1274.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    pub version: String,
    /// J s
    pub hbar: f64,
    /// J s
    pub h: f64,
    /// s
    pub t_p: f64,
    /// m/s
    pub c: f64,
    /// J/K
    pub k_b: f64,
    /// kg
    pub m_p: f64,
    /// kg
    pub m_e: f64,
    /// s
    pub t_u: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            version: "codata-rounded-1".into(),
            hbar: 1.0546e-34,
            h: 6.626e-34,
            t_p: 5.391e-44,
            c: 2.998e8,
            k_b: 1.381e-23,
            m_p: 1.673e-27,
            m_e: 9.109e-31,
            t_u: 1e17,
        }
    }
}

impl PhysicalConstants {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let all = [
            self.hbar, self.h, self.t_p, self.c, self.k_b, self.m_p, self.m_e, self.t_u,
        ];
        if all.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
            return Err(Error::Schema(
                "every physical constant must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Planck length `c t_P`.
    pub fn l_p(&self) -> f64 {
        self.c * self.t_p
    }
}

/// Resource-formula input for `n` elementary objects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    /// Object count; real-valued so astronomical counts fit.
    pub n: f64,
    /// One entry for a uniform dimension, or one per object.
    pub dims: Vec<f64>,
    /// Mean energy per object, J.
    pub energy_e: f64,
    /// Coupling energy, J.
    pub coupling_j: f64,
    pub mu: f64,
    #[serde(default)]
    pub separable: bool,
}

impl SystemSpec {
    pub fn uniform(n: f64, d: f64, energy_e: f64, coupling_j: f64, mu: f64) -> Result<Self> {
        let s = Self {
            n,
            dims: vec![d],
            energy_e,
            coupling_j,
            mu,
            separable: false,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn separable(mut self, separable: bool) -> Self {
        self.separable = separable;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.n >= 1.0) || !self.n.is_finite() {
            return Err(Error::Domain(format!("n must be >= 1, got {}", self.n)));
        }
        if self.dims.is_empty() || self.dims.iter().any(|&d| !(d >= 1.0) || !d.is_finite()) {
            return Err(Error::Domain(format!("invalid dims {:?}", self.dims)));
        }
        if self.dims.len() > 1 && self.dims.len() as f64 != self.n {
            return Err(Error::Domain(format!(
                "{} dims listed for n = {}",
                self.dims.len(),
                self.n
            )));
        }
        if !(self.energy_e > 0.0) || !(self.coupling_j > 0.0) {
            return Err(Error::Domain("energies must be positive".into()));
        }
        validate_mu(self.mu)
    }

    /// `log10 prod D_i`.
    pub fn log10_dim_product(&self) -> f64 {
        match self.dims.as_slice() {
            [d] => self.n * d.log10(),
            ds => ds.iter().map(|d| d.log10()).sum(),
        }
    }

    /// `sum D_i` as a magnitude.
    pub fn dim_sum(&self) -> LogQuantity {
        let lq = |x: f64| LogQuantity::from_log10(x, Unit::Count).expect("finite");
        match self.dims.as_slice() {
            [d] => lq(self.n.log10() + d.log10()),
            ds => ds
                .iter()
                .map(|d| lq(d.log10()))
                .reduce(|a, b| a.add(b).expect("same unit"))
                .expect("nonempty"),
        }
    }

    pub fn max_dim(&self) -> f64 {
        self.dims.iter().copied().fold(1.0, f64::max)
    }
}

pub(crate) fn validate_mu(mu: f64) -> Result<()> {
    if !(mu >= 4.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("mu must be >= 4, got {mu}")));
    }
    if mu < 1e15 && mu % 2.0 != 0.0 {
        return Err(Error::Domain(format!("mu must be even, got {mu}")));
    }
    Ok(())
}

fn lq(log10: f64, unit: Unit) -> LogQuantity {
    LogQuantity::from_log10(log10, unit).expect("finite exponent")
}

/// `mu prod D_i` when entangled, `mu sum D_i` when separable.
pub fn state_information(spec: &SystemSpec) -> Result<LogQuantity> {
    spec.validate()?;
    let cells = if spec.separable {
        spec.dim_sum().log10()
    } else {
        spec.log10_dim_product()
    };
    Ok(lq(spec.mu.log10() + cells, Unit::Bits))
}

/// Margolus-Levitin rate `2E / (pi hbar)`.
pub fn classical_op_rate(energy: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(energy > 0.0) {
        return Err(Error::Domain(format!(
            "energy must be positive, got {energy}"
        )));
    }
    Ok(2.0 * energy / (PI * c.hbar))
}

/// `2^(mu/2) prod D_i n E / hbar`.
pub fn quantum_op_rate(spec: &SystemSpec, c: &PhysicalConstants) -> Result<LogQuantity> {
    spec.validate()?;
    Ok(lq(
        spec.mu / 2.0 * LOG10_2 + spec.log10_dim_product() + spec.n.log10() + spec.energy_e.log10()
            - c.hbar.log10(),
        Unit::OpsPerSec,
    ))
}

/// Operations per second per bit, `2^(mu/2) n E / (mu hbar)`.
pub fn clock_rate(spec: &SystemSpec, c: &PhysicalConstants) -> Result<LogQuantity> {
    spec.validate()?;
    Ok(lq(
        spec.mu / 2.0 * LOG10_2 + spec.n.log10() + spec.energy_e.log10()
            - spec.mu.log10()
            - c.hbar.log10(),
        Unit::OpsPerSecPerBit,
    ))
}

/// `hbar / (n J)`.
pub fn chaos_timescale(n: f64, coupling_j: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(n >= 1.0) || !(coupling_j > 0.0) {
        return Err(Error::Domain(format!(
            "need n >= 1 and J > 0, got n={n}, J={coupling_j}"
        )));
    }
    Ok(c.hbar / (n * coupling_j))
}

/// `M1 = 2^(mu/2) E / J`.
pub fn memory_limit_chaos(energy_e: f64, coupling_j: f64, mu: f64) -> Result<LogQuantity> {
    if !(energy_e > 0.0) || !(coupling_j > 0.0) {
        return Err(Error::Domain("energies must be positive".into()));
    }
    validate_mu(mu)?;
    Ok(lq(
        mu / 2.0 * LOG10_2 + energy_e.log10() - coupling_j.log10(),
        Unit::Bits,
    ))
}

/// `M2 = mu 2^(mu/2)`.
pub fn memory_limit_completeness(mu: f64) -> Result<LogQuantity> {
    validate_mu(mu)?;
    Ok(lq(mu.log10() + mu / 2.0 * LOG10_2, Unit::Bits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Chaos,
    Completeness,
    /// A caller-supplied limit in bits.
    Explicit,
}

/// Parameters of the chaos-scenario inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChaosParams {
    /// Lyapunov rate, rad/s; defaults to `n J / hbar`.
    pub omega_chi: Option<f64>,
    /// Exponent `x` on the error-correction code rate; 1 by default.
    pub code_rate_exponent: f64,
}

impl Default for ChaosParams {
    fn default() -> Self {
        Self {
            omega_chi: None,
            code_rate_exponent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityVerdict {
    pub stable: bool,
    pub scenario: Scenario,
    pub required: LogQuantity,
    pub limit: LogQuantity,
    /// `log10(limit) - log10(required)`; non-negative when stable.
    pub margin_log10: f64,
}

impl StabilityVerdict {
    pub fn from_sides(scenario: Scenario, required: LogQuantity, limit: LogQuantity) -> Self {
        let margin_log10 = limit.log10() - required.log10();
        Self {
            stable: margin_log10 >= -VERDICT_TOLERANCE,
            scenario,
            required,
            limit,
            margin_log10,
        }
    }
}

/// Stability of `spec` under either scenario, expressed in bits.
///
/// Chaos: `2^(mu/2) n E >= hbar omega_chi mu (D^n)^x`, rearranged as
/// `mu (D^n)^x <= 2^(mu/2) n E / (hbar omega_chi)`, which is `M1` at the
/// default `omega_chi`. Completeness: `mu D^n <= M2`, i.e. `mu >= 2 n log2 D`.
/// A separable spec is judged object by object (`n = 1`, largest `D`).
pub fn stability_check(
    spec: &SystemSpec,
    scenario: Scenario,
    chaos: ChaosParams,
    c: &PhysicalConstants,
) -> Result<StabilityVerdict> {
    spec.validate()?;
    let (n, log10_dims) = if spec.separable {
        (1.0, spec.max_dim().log10())
    } else {
        (spec.n, spec.log10_dim_product())
    };
    match scenario {
        Scenario::Explicit => Err(Error::Domain(
            "explicit scenario has no physical limit to evaluate".into(),
        )),
        Scenario::Completeness => {
            let required = lq(spec.mu.log10() + log10_dims, Unit::Bits);
            Ok(StabilityVerdict::from_sides(
                scenario,
                required,
                memory_limit_completeness(spec.mu)?,
            ))
        }
        Scenario::Chaos => {
            let omega = match chaos.omega_chi {
                Some(w) if w > 0.0 => w,
                Some(w) => {
                    return Err(Error::Domain(format!(
                        "omega_chi must be positive, got {w}"
                    )))
                }
                None => n * spec.coupling_j / c.hbar,
            };
            if !(chaos.code_rate_exponent > 0.0) {
                return Err(Error::Domain("code-rate exponent must be positive".into()));
            }
            let required = lq(
                spec.mu.log10() + chaos.code_rate_exponent * log10_dims,
                Unit::Bits,
            );
            let limit = lq(
                spec.mu / 2.0 * LOG10_2 + n.log10() + spec.energy_e.log10()
                    - c.hbar.log10()
                    - omega.log10(),
                Unit::Bits,
            );
            Ok(StabilityVerdict::from_sides(scenario, required, limit))
        }
    }
}

/// `floor(mu / (2 log2 D))`.
pub fn max_entangled_objects(mu: f64, d: f64) -> Result<u64> {
    validate_mu(mu)?;
    if !(d >= 2.0) {
        return Err(Error::Domain(format!("D must be >= 2, got {d}")));
    }
    let x = mu / (2.0 * d.log2());
    Ok((x * (1.0 + 1e-12)).floor() as u64)
}

/// Solve `M = mu D^n` for `n`.
pub fn max_objects_for_memory(memory: LogQuantity, mu: f64, d: f64) -> Result<f64> {
    if memory.unit() != Unit::Bits {
        return Err(Error::Unit {
            op: "max_objects_for_memory",
            lhs: memory.unit().as_str(),
            rhs: "bits",
        });
    }
    if !(mu > 0.0) || !(d >= 2.0) {
        return Err(Error::Domain(format!(
            "need mu > 0 and D >= 2, got mu={mu}, D={d}"
        )));
    }
    Ok((memory.log2() - mu.log2()) / d.log2())
}

/// How the length-scale coefficient converts decades to bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LengthConvention {
    /// `1274 ln 10`, as printed.
    Printed,
    /// `1274 log2 10`, from `182 * 7 N_a n log2(10) = mu / 2`.
    Derived,
}

impl LengthConvention {
    pub fn coefficient(self) -> f64 {
        match self {
            Self::Printed => LENGTH_COEFFICIENT * LN_10,
            Self::Derived => LENGTH_COEFFICIENT / LN_2 * LN_10,
        }
    }
}

/// `lambda_u = [mu m_p / (1274 ln10 rho)]^(1/3)`.
pub fn info_length_scale(mu: f64, rho: f64, c: &PhysicalConstants) -> Result<f64> {
    info_length_scale_with(mu, rho, LengthConvention::Printed, c)
}

pub fn info_length_scale_with(
    mu: f64,
    rho: f64,
    convention: LengthConvention,
    c: &PhysicalConstants,
) -> Result<f64> {
    if !(mu > 0.0) || !(rho > 0.0) {
        return Err(Error::Domain(format!(
            "need mu > 0 and rho > 0, got mu={mu}, rho={rho}"
        )));
    }
    Ok((mu * c.m_p / (convention.coefficient() * rho)).cbrt())
}

/// Thermodynamic route: convert `rho` to blackbody photons at temperature
/// `k_B T = (15 hbar^3 c^5 rho / pi^2)^(1/4)` and solve
/// `(4 pi^2/45)(k_B T lambda / hbar c)^3 = ln(M2/mu)` for `lambda`.
pub fn info_length_scale_thermo(
    m2: LogQuantity,
    mu: f64,
    rho: f64,
    c: &PhysicalConstants,
) -> Result<f64> {
    if !(mu > 0.0) || !(rho > 0.0) {
        return Err(Error::Domain(format!(
            "need mu > 0 and rho > 0, got mu={mu}, rho={rho}"
        )));
    }
    let ln_ratio = (m2.log10() - mu.log10()) * LN_10;
    if !(ln_ratio > 0.0) {
        return Err(Error::Domain("M2 must exceed mu".into()));
    }
    let kt = (15.0 * c.hbar.powi(3) * c.c.powi(5) * rho / (PI * PI)).powf(0.25);
    Ok(c.hbar * c.c / kt * (45.0 * ln_ratio / (4.0 * PI * PI)).cbrt())
}

/// `tau_u = lambda_u / c_s`.
pub fn unitary_phase_duration(lambda_u: f64, c_s: f64) -> Result<f64> {
    if !(lambda_u > 0.0) || !(c_s > 0.0) {
        return Err(Error::Domain("length and speed must be positive".into()));
    }
    Ok(lambda_u / c_s)
}

/// `dx(t) = dx0 + h t / (m dx0)`.
pub fn wavepacket_spread(dx0: f64, mass: f64, t: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(dx0 > 0.0) || !(mass > 0.0) || !(t >= 0.0) {
        return Err(Error::Domain("need dx0 > 0, mass > 0, t >= 0".into()));
    }
    Ok(dx0 + c.h * t / (mass * dx0))
}

/// Thermal position spread `h / sqrt(m k_B T)`.
pub fn thermal_wavelength(mass: f64, temperature: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(mass > 0.0) || !(temperature > 0.0) {
        return Err(Error::Domain(
            "mass and temperature must be positive".into(),
        ));
    }
    Ok(c.h / (mass * c.k_b * temperature).sqrt())
}
