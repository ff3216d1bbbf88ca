//! Named calculators for the worked numeric estimates.
//!
//! Each estimator is a pure function of [`PhysicalConstants`] and its inputs.
//! Double-exponential quantities (`M = 10^X mu`) are reported through their
//! exponent `X`, and agreement is measured on that exponent.

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, LOG10_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::magnitude::{LogQuantity, Unit};
use crate::resources::{
    self, classical_op_rate, max_objects_for_memory, quantum_op_rate, LengthConvention,
    PhysicalConstants, SystemSpec, DECADES_PER_DOF,
};

/// Elementary degrees of freedom per atom of atomic number `N_a`: `N_a`
/// electrons plus `6 N_a` quarks.
pub const DOF_PER_PROTON: f64 = 7.0;

/// `(4 pi / 3)(c t_U / l_P)^3`.
pub fn planck_cells(c: &PhysicalConstants) -> Result<LogQuantity> {
    let r = c.c * c.t_u / c.l_p();
    LogQuantity::from_log10((4.0 * PI / 3.0).log10() + 3.0 * r.log10(), Unit::Count)
}

/// Spinor electron dimension `2 N`.
pub fn electron_dimension(c: &PhysicalConstants) -> Result<LogQuantity> {
    planck_cells(c)?.scale(2.0)
}

/// `M = 2 N mu`.
pub fn electron_state_info(mu: f64, c: &PhysicalConstants) -> Result<LogQuantity> {
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("mu must be positive, got {mu}")));
    }
    Ok(electron_dimension(c)?.scale(mu)?.with_unit(Unit::Bits))
}

/// Smallest `mu` with `2^mu >= D` for the spinor electron.
pub fn electron_min_mu(c: &PhysicalConstants) -> Result<f64> {
    Ok(electron_dimension(c)?.log2())
}

/// Photons from converting `mass` in `volume` to blackbody radiation:
/// `(2 / 3 ln2)(pi^2 V / 15 hbar^3 c^3)^(1/4) E^(3/4)`.
pub fn blackbody_photon_count(mass: f64, volume: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(mass > 0.0) || !(volume > 0.0) {
        return Err(Error::Domain("mass and volume must be positive".into()));
    }
    let e = mass * c.c * c.c;
    let hc3 = (c.hbar * c.c).powi(3);
    Ok(2.0 / (3.0 * LN_2) * (PI * PI * volume / (15.0 * hc3)).powf(0.25) * e.powf(0.75))
}

/// Blackbody temperature `k_B T = (15 hbar^3 c^5 rho / pi^2)^(1/4)`, in joules.
pub fn blackbody_kt(rho: f64, c: &PhysicalConstants) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain("density must be positive".into()));
    }
    Ok((15.0 * c.hbar.powi(3) * c.c.powi(5) * rho / (PI * PI)).powf(0.25))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectInfo {
    pub atoms: f64,
    pub dof: f64,
    /// `X` in `M = 10^X mu`.
    pub exponent: f64,
    pub bits: LogQuantity,
}

/// Atoms `mass / (2 N_a m_p)`, each carrying `7 N_a` degrees of freedom unless
/// `dof_per_atom` overrides it; `log10(M / mu) = 182 dof`.
pub fn object_state_info(
    mass: f64,
    mean_atomic_number: f64,
    mu: f64,
    dof_per_atom: Option<f64>,
    c: &PhysicalConstants,
) -> Result<ObjectInfo> {
    if !(mass > 0.0) || !(mean_atomic_number > 0.0) || !(mu > 0.0) {
        return Err(Error::Domain(
            "mass, atomic number and mu must be positive".into(),
        ));
    }
    let atoms = mass / (2.0 * mean_atomic_number * c.m_p);
    let per_atom = dof_per_atom.unwrap_or(DOF_PER_PROTON * mean_atomic_number);
    if !(per_atom > 0.0) {
        return Err(Error::Domain(
            "degrees of freedom per atom must be positive".into(),
        ));
    }
    let dof = per_atom * atoms;
    let exponent = DECADES_PER_DOF * dof;
    Ok(ObjectInfo {
        atoms,
        dof,
        exponent,
        bits: LogQuantity::from_log10(exponent + mu.log10(), Unit::Bits)?,
    })
}

/// Atoms in the largest object that stays below `M2`: `mu log10(2) / (2 * 182 dof)`.
pub fn largest_coherent_object(mu: f64, dof_per_atom: f64) -> Result<f64> {
    if !(mu > 0.0) || !(dof_per_atom > 0.0) {
        return Err(Error::Domain("mu and dof must be positive".into()));
    }
    Ok(mu * LOG10_2 / (2.0 * DECADES_PER_DOF * dof_per_atom))
}

/// Inverse of [`largest_coherent_object`].
pub fn mu_from_coherent_object(atoms: f64, dof_per_atom: f64) -> Result<f64> {
    if !(atoms > 0.0) || !(dof_per_atom > 0.0) {
        return Err(Error::Domain("atoms and dof must be positive".into()));
    }
    Ok(2.0 * DECADES_PER_DOF * dof_per_atom * atoms / LOG10_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniverseBudget {
    /// `(t_U / t_P)^3`.
    pub ops: LogQuantity,
    /// `c^2 t_U^2 / l_P^2`.
    pub bits: LogQuantity,
}

pub fn universe_budget(c: &PhysicalConstants) -> Result<UniverseBudget> {
    let ratio = (c.t_u / c.t_p).log10();
    Ok(UniverseBudget {
        ops: LogQuantity::from_log10(3.0 * ratio, Unit::Count)?,
        bits: LogQuantity::from_log10(2.0 * (c.c * c.t_u / c.l_p()).log10(), Unit::Bits)?,
    })
}

/// Particle-horizon volume `(4 pi / 3)(3 c t_U)^3` of a matter-dominated universe.
pub fn horizon_volume(c: &PhysicalConstants) -> f64 {
    4.0 * PI / 3.0 * (3.0 * c.c * c.t_u).powi(3)
}

/// A condensate is one object: `10^182 mu` whatever its particle count.
pub fn condensate_state_info(mu: f64) -> Result<LogQuantity> {
    LogQuantity::from_log10(DECADES_PER_DOF + mu.log10(), Unit::Bits)
}

/// `n 10^182 mu`.
pub fn separable_particles_state_info(n: f64, mu: f64) -> Result<LogQuantity> {
    LogQuantity::from_log10(DECADES_PER_DOF + n.log10() + mu.log10(), Unit::Bits)
}

/// `10^(182 n) mu`.
pub fn entangled_particles_state_info(n: f64, mu: f64) -> Result<LogQuantity> {
    LogQuantity::from_log10(DECADES_PER_DOF * n + mu.log10(), Unit::Bits)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EstimateValue {
    Log(LogQuantity),
    Real { value: f64, unit: Unit },
}

impl EstimateValue {
    fn real(value: f64, unit: Unit) -> Self {
        Self::Real { value, unit }
    }

    pub fn log10(&self) -> f64 {
        match self {
            Self::Log(q) => q.log10(),
            Self::Real { value, .. } => value.abs().log10(),
        }
    }

    pub fn unit(&self) -> Unit {
        match self {
            Self::Log(q) => q.unit(),
            Self::Real { unit, .. } => *unit,
        }
    }
}

impl std::fmt::Display for EstimateValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Log(q) => write!(f, "{q}"),
            Self::Real { value, unit } => write!(f, "{value:.4e} {}", unit.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub name: String,
    pub value: f64,
    pub unit: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub inputs: Vec<Input>,
    pub formula: String,
    pub value: EstimateValue,
    pub published_value: Option<EstimateValue>,
    /// `log10(value) - log10(published_value)`.
    pub agreement: Option<f64>,
    /// Known inconsistency in the published figure.
    pub flag: Option<String>,
}

impl EstimateReport {
    fn new(name: &str, formula: &str, value: EstimateValue) -> Self {
        Self {
            name: name.into(),
            inputs: Vec::new(),
            formula: formula.into(),
            value,
            published_value: None,
            agreement: None,
            flag: None,
        }
    }

    fn input(mut self, name: &str, value: f64, unit: &str) -> Self {
        self.inputs.push(Input {
            name: name.into(),
            value,
            unit: unit.into(),
        });
        self
    }

    fn published(mut self, v: EstimateValue) -> Self {
        self.agreement = Some(self.value.log10() - v.log10());
        self.published_value = Some(v);
        self
    }

    fn flagged(mut self, why: &str) -> Self {
        self.flag = Some(why.into());
        self
    }

    /// Within one decade of the published value, or flagged.
    pub fn acceptable(&self) -> bool {
        self.flag.is_some() || self.agreement.is_none_or(|a| a.abs() <= 1.0)
    }
}

fn param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

/// Every estimator name accepted by [`estimate`].
pub const ESTIMATOR_NAMES: &[&str] = &[
    "planck_cells",
    "electron_dimension",
    "electron_state_info",
    "electron_min_mu",
    "electron_classical_rate",
    "electron_qubit_rate",
    "electron_spinor_rate",
    "laptop_qubit_memory",
    "laptop_state_info",
    "ultimate_laptop_photons",
    "ultimate_laptop_state_info",
    "universe_photons",
    "universe_state_info",
    "universe_ops",
    "universe_bits",
    "qubit_capacity_universe",
    "qubit_capacity_baryons",
    "cat_state_info",
    "largest_coherent_object",
    "mu_from_coherent_object",
    "info_length_scale",
    "info_length_scale_derived",
    "info_length_scale_thermo",
    "unitary_phase_duration",
    "wavepacket_growth",
    "condensate_state_info",
];

fn real(v: f64, u: Unit) -> EstimateValue {
    EstimateValue::real(v, u)
}

fn lq(log10: f64, u: Unit) -> EstimateValue {
    EstimateValue::Log(LogQuantity::from_log10(log10, u).expect("finite literal"))
}

/// Run one named estimator. Unknown parameters are ignored; unknown names are
/// a domain error.
pub fn estimate(
    name: &str,
    params: &BTreeMap<String, f64>,
    c: &PhysicalConstants,
) -> Result<EstimateReport> {
    c.validate()?;
    let p = |k: &str, d: f64| param(params, k, d);
    let electron_energy = c.m_e * c.c * c.c;
    let r = match name {
        "planck_cells" => EstimateReport::new(
            "planck_cells",
            "(4 pi/3)(c t_U / l_P)^3",
            EstimateValue::Log(planck_cells(c)?),
        )
        .input("t_U", c.t_u, "s")
        .published(lq(2.8e181f64.log10(), Unit::Count)),
        "electron_dimension" => EstimateReport::new(
            "electron_dimension",
            "D = 2 N",
            EstimateValue::Log(electron_dimension(c)?),
        )
        .published(lq(182.0, Unit::Count)),
        "electron_state_info" => {
            let mu = p("mu", 600.0);
            EstimateReport::new(
                "electron_state_info",
                "M = 2 N mu",
                EstimateValue::Log(electron_state_info(mu, c)?),
            )
            .input("mu", mu, "bits")
        }
        "electron_min_mu" => EstimateReport::new(
            "electron_min_mu",
            "mu >= log2(2 N)",
            real(electron_min_mu(c)?, Unit::Bits),
        )
        .published(real(600.0, Unit::Bits)),
        "electron_classical_rate" => EstimateReport::new(
            "electron_classical_rate",
            "f = 2E/(pi hbar), E = m_e c^2",
            real(classical_op_rate(electron_energy, c)?, Unit::OpsPerSec),
        )
        .input("E", electron_energy, "J")
        .published(real(8.6e20, Unit::OpsPerSec)),
        "electron_qubit_rate" => {
            let mu = p("mu", 64.0);
            let spec = SystemSpec::uniform(1.0, 2.0, electron_energy, 1.0, mu)?;
            EstimateReport::new(
                "electron_qubit_rate",
                "f_q = 2^(mu/2) D E / hbar, D = 2",
                EstimateValue::Log(quantum_op_rate(&spec, c)?),
            )
            .input("mu", mu, "bits")
            .published(real(3e30, Unit::OpsPerSec))
        }
        "electron_spinor_rate" => {
            let mu = p("mu", 600.0);
            let rate = LogQuantity::from_log10(
                mu / 2.0 * LOG10_2 + electron_dimension(c)?.log10() + electron_energy.log10()
                    - c.hbar.log10(),
                Unit::OpsPerSec,
            )?;
            EstimateReport::new("electron_spinor_rate", "f_q = 2^(mu/2) (2 N) E / hbar", EstimateValue::Log(rate))
                .input("mu", mu, "bits")
                .published(lq(292.0, Unit::OpsPerSec))
                .flagged("published prefactor is written 10^(mu/2) and hbar as 6.1e-34; the formula value is reported")
        }
        "laptop_qubit_memory" => {
            let mass = p("mass", 1.0);
            let n = mass / c.m_p;
            EstimateReport::new(
                "laptop_qubit_memory",
                "log10(M/mu) = n log10 2, n = m / m_p",
                real(n * LOG10_2, Unit::Dimensionless),
            )
            .input("mass", mass, "kg")
            .published(real(1.81e26, Unit::Dimensionless))
        }
        "laptop_state_info" => {
            let mass = p("mass", 1.0);
            let n = mass / c.m_p;
            let particles = 4.0 * n;
            EstimateReport::new(
                "laptop_state_info",
                "log10(M/mu) = 182 * 4 n, n = m / m_p",
                real(DECADES_PER_DOF * particles, Unit::Dimensionless),
            )
            .input("mass", mass, "kg")
            .published(real(1.82e29, Unit::Dimensionless))
            .flagged("182 * 4 * 6e26 = 4.4e29; the published 1.82e29 drops the factor 4 n")
        }
        "ultimate_laptop_photons" => {
            let (mass, volume) = (p("mass", 1.0), p("volume", 1e-3));
            EstimateReport::new(
                "ultimate_laptop_photons",
                "n = (2/3 ln2)(pi^2 V / 15 hbar^3 c^3)^(1/4) E^(3/4)",
                real(blackbody_photon_count(mass, volume, c)?, Unit::Count),
            )
            .input("mass", mass, "kg")
            .input("volume", volume, "m^3")
            .published(real(1.6e31, Unit::Count))
        }
        "ultimate_laptop_state_info" => {
            let (mass, volume) = (p("mass", 1.0), p("volume", 1e-3));
            let n = blackbody_photon_count(mass, volume, c)?;
            EstimateReport::new(
                "ultimate_laptop_state_info",
                "log10(M/mu) = 182 n",
                real(DECADES_PER_DOF * n, Unit::Dimensionless),
            )
            .input("photons", n, "count")
            .published(real(4.4e33, Unit::Dimensionless))
        }
        "universe_photons" => {
            let rho = p("rho", 1e-27);
            let v = horizon_volume(c);
            EstimateReport::new(
                "universe_photons",
                "blackbody count for rho over the particle horizon (4 pi/3)(3 c t_U)^3",
                real(blackbody_photon_count(rho * v, v, c)?, Unit::Count),
            )
            .input("rho", rho, "kg/m^3")
            .published(lq(90.0, Unit::Count))
        }
        "universe_state_info" => {
            let rho = p("rho", 1e-27);
            let v = horizon_volume(c);
            let n = blackbody_photon_count(rho * v, v, c)?;
            EstimateReport::new(
                "universe_state_info",
                "log10(M/mu) = 182 n",
                real(DECADES_PER_DOF * n, Unit::Dimensionless),
            )
            .input("photons", n, "count")
            .published(real(1.82e92, Unit::Dimensionless))
        }
        "universe_ops" => EstimateReport::new(
            "universe_ops",
            "(t_U / t_P)^3",
            EstimateValue::Log(universe_budget(c)?.ops),
        )
        .published(lq(120.0, Unit::Count))
        .flagged(
            "(1e17 / 5.391e-44)^3 is 10^180.8; the published 10^120 corresponds to the square",
        ),
        "universe_bits" => EstimateReport::new(
            "universe_bits",
            "c^2 t_U^2 / l_P^2",
            EstimateValue::Log(universe_budget(c)?.bits),
        )
        .published(lq(120.0, Unit::Bits)),
        "qubit_capacity_universe" => {
            let (m, mu) = (p("memory_log10", 120.0), p("mu", 64.0));
            let n = max_objects_for_memory(LogQuantity::from_log10(m, Unit::Bits)?, mu, 2.0)?;
            EstimateReport::new(
                "qubit_capacity_universe",
                "n = log2(M / mu) / log2 D",
                real(n, Unit::Count),
            )
            .input("memory_log10", m, "bits")
            .input("mu", mu, "bits")
            .published(real(398.6, Unit::Count))
            .flagged("398.6 = log2(1e120) omits the division by mu; log2(1e120 / 64) = 392.6")
        }
        "qubit_capacity_baryons" => {
            let (m, mu) = (p("memory_log10", 76.0), p("mu", 64.0));
            let n = max_objects_for_memory(LogQuantity::from_log10(m, Unit::Bits)?, mu, 2.0)?;
            EstimateReport::new(
                "qubit_capacity_baryons",
                "n = log2(M / mu) / log2 D",
                real(n, Unit::Count),
            )
            .input("memory_log10", m, "bits")
            .input("mu", mu, "bits")
            .published(real(246.0, Unit::Count))
        }
        "cat_state_info" => {
            let (mass, z, dof) = (
                p("mass", 1.4),
                p("atomic_number", 7.0),
                p("dof_per_atom", 7.0),
            );
            let info = object_state_info(mass, z, p("mu", 64.0), Some(dof), c)?;
            EstimateReport::new(
                "cat_state_info",
                "log10(M/mu) = 182 dof, atoms = m / (2 N_a m_p)",
                real(info.exponent, Unit::Dimensionless),
            )
            .input("mass", mass, "kg")
            .input("atomic_number", z, "count")
            .input("dof_per_atom", dof, "count")
            .published(real(1.2e29, Unit::Dimensionless))
        }
        "largest_coherent_object" => {
            let (mu, dof) = (p("mu", 1e12), p("dof_per_atom", 84.0));
            EstimateReport::new(
                "largest_coherent_object",
                "atoms = mu log10(2) / (2 * 182 dof)",
                real(largest_coherent_object(mu, dof)?, Unit::Count),
            )
            .input("mu", mu, "bits")
            .input("dof_per_atom", dof, "count")
            .published(real(1e7, Unit::Count))
        }
        "mu_from_coherent_object" => {
            let (atoms, dof) = (p("atoms", 1000.0), p("dof_per_atom", 50.0));
            EstimateReport::new(
                "mu_from_coherent_object",
                "mu = 2 * 182 dof atoms / log10(2)",
                real(mu_from_coherent_object(atoms, dof)?, Unit::Bits),
            )
            .input("atoms", atoms, "count")
            .input("dof_per_atom", dof, "count")
            .published(real(6.0e7, Unit::Bits))
        }
        "info_length_scale" | "info_length_scale_derived" => {
            let (mu, rho) = (p("mu", 1e12), p("rho", 1000.0));
            let conv = if name == "info_length_scale" {
                LengthConvention::Printed
            } else {
                LengthConvention::Derived
            };
            let formula = if name == "info_length_scale" {
                "lambda_u = [mu m_p / (1274 ln10 rho)]^(1/3)"
            } else {
                "lambda_u = [mu m_p / (1274 log2(10) rho)]^(1/3)"
            };
            EstimateReport::new(
                name,
                formula,
                real(
                    resources::info_length_scale_with(mu, rho, conv, c)?,
                    Unit::Meters,
                ),
            )
            .input("mu", mu, "bits")
            .input("rho", rho, "kg/m^3")
            .published(real(1e-7, Unit::Meters))
        }
        "info_length_scale_thermo" => {
            let (mu, rho) = (p("mu", 1e12), p("rho", 1000.0));
            let m2 = resources::memory_limit_completeness(mu)?;
            EstimateReport::new(
                "info_length_scale_thermo",
                "(4 pi^2/45)(k_B T lambda / hbar c)^3 = ln(M2 / mu)",
                real(
                    resources::info_length_scale_thermo(m2, mu, rho, c)?,
                    Unit::Meters,
                ),
            )
            .input("mu", mu, "bits")
            .input("rho", rho, "kg/m^3")
            .published(real(1e-7, Unit::Meters))
        }
        "unitary_phase_duration" => {
            let (mu, rho) = (p("mu", 1e12), p("rho", 1000.0));
            let lambda = resources::info_length_scale(mu, rho, c)?;
            EstimateReport::new(
                "unitary_phase_duration",
                "tau_u = lambda_u / c",
                real(
                    resources::unitary_phase_duration(lambda, c.c)?,
                    Unit::Seconds,
                ),
            )
            .input("lambda_u", lambda, "m")
            .published(real(1e-16, Unit::Seconds))
        }
        "wavepacket_growth" => {
            let (t, temp) = (p("t", 1e-16), p("temperature", 300.0));
            let dx0 = resources::thermal_wavelength(c.m_e, temp, c)?;
            let grown = resources::wavepacket_spread(dx0, c.m_e, t, c)? - dx0;
            EstimateReport::new(
                "wavepacket_growth",
                "h t / (m_e dx0), dx0 = h / sqrt(m_e k_B T)",
                real(grown, Unit::Meters),
            )
            .input("t", t, "s")
            .input("temperature", temp, "K")
            .input("dx0", dx0, "m")
            .published(real(1e-11, Unit::Meters))
        }
        "condensate_state_info" => {
            let mu = p("mu", 64.0);
            EstimateReport::new(
                "condensate_state_info",
                "M = 10^182 mu for any particle count",
                EstimateValue::Log(condensate_state_info(mu)?),
            )
            .input("mu", mu, "bits")
            .published(lq(DECADES_PER_DOF + mu.log10(), Unit::Bits))
        }
        other => return Err(Error::Domain(format!("unknown estimator '{other}'"))),
    };
    Ok(r)
}

/// Every estimator at its default inputs.
pub fn all_estimates(c: &PhysicalConstants) -> Result<Vec<EstimateReport>> {
    let none = BTreeMap::new();
    ESTIMATOR_NAMES
        .iter()
        .map(|n| estimate(n, &none, c))
        .collect()
}

/// Aligned text table.
pub fn format_table(reports: &[EstimateReport]) -> String {
    let mut out = format!(
        "{:<28} {:>24} {:>24} {:>9}  {}\n",
        "name", "value", "published", "log10gap", "flag"
    );
    for r in reports {
        let published = r
            .published_value
            .map(|v| v.to_string())
            .unwrap_or_else(|| "-".into());
        let gap = r
            .agreement
            .map(|a| format!("{a:+.3}"))
            .unwrap_or_else(|| "-".into());
        let flag = if r.flag.is_some() { "flagged" } else { "" };
        out.push_str(&format!(
            "{:<28} {:>24} {:>24} {:>9}  {}\n",
            r.name,
            r.value.to_string(),
            published,
            gap,
            flag
        ));
    }
    out
}
