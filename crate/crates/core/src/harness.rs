//! Scenario files, the trajectory runner, run statistics and manifests.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::statistics::Statistics;

use crate::dynamics::{self, HamiltonianSpec, LatticeState, LindbladSpec, UnitMode};
use crate::error::{Error, Result};
use crate::estimators::{self, EstimateReport};
use crate::hilbert::PureState;
use crate::linalg::{self, CMatrix};
use crate::measurement::{
    information_transition, premeasure, run_trajectory, state_stability, ChainSpec,
    TrajectoryOptions, TransitionConfig, TransitionRecord, TransitionRng,
};
use crate::resources::PhysicalConstants;

pub const SCENARIO_SCHEMA: &str = "infocollapse.scenario/1";
pub const RECORD_SCHEMA: &str = "infocollapse.record/1";
pub const REPORT_SCHEMA: &str = "infocollapse.estimate/1";
pub const MANIFEST_SCHEMA: &str = "infocollapse.manifest/1";
pub const LINDBLAD_SCHEMA: &str = "infocollapse.lindblad/1";

/// Environment variable naming the default constants file.
pub const CONSTANTS_ENV: &str = "INFOCOLLAPSE_CONSTANTS";

/// Smallest expected count per outcome for the chi-squared test.
pub const MIN_EXPECTED_COUNT: f64 = 5.0;

fn one() -> usize {
    1
}

fn default_bins() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub schema: String,
    pub id: String,
    /// Master seed; trajectory `k` draws from stream `k` of this seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub trajectory_count: usize,
    #[serde(default)]
    pub units: UnitMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(flatten)]
    pub mode: ModeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ModeSpec {
    Estimate {
        /// Empty means every estimator.
        #[serde(default)]
        estimators: Vec<String>,
        #[serde(default)]
        params: BTreeMap<String, f64>,
    },
    Simulate {
        initial: PureState,
        hamiltonian: HamiltonianSpec,
        transition: TransitionConfig,
        t_total: f64,
        dt: f64,
        #[serde(default)]
        force_every: Option<usize>,
        #[serde(default = "default_bins")]
        bins: usize,
    },
    Lindblad {
        initial: PureState,
        lindblad: LindbladSpec,
        t_total: f64,
        dt: f64,
    },
    Lattice {
        points: usize,
        dx: f64,
        sigma: f64,
        #[serde(default)]
        x0: f64,
        mass: f64,
        lambda: f64,
        t_total: f64,
        dt: f64,
    },
    Measure {
        system: PureState,
        chain: ChainSpec,
        transition: TransitionConfig,
    },
}

impl ModeSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Estimate { .. } => "estimate",
            Self::Simulate { .. } => "simulate",
            Self::Lindblad { .. } => "lindblad",
            Self::Lattice { .. } => "lattice",
            Self::Measure { .. } => "measure",
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Schema checks plus resolution of the referenced specs.
    pub fn validate(&self) -> Result<()> {
        if self.schema != SCENARIO_SCHEMA {
            return Err(Error::Schema(format!(
                "expected schema '{SCENARIO_SCHEMA}', got '{}'",
                self.schema
            )));
        }
        if self.trajectory_count == 0 {
            return Err(Error::Schema("trajectory_count must be at least 1".into()));
        }
        match &self.mode {
            ModeSpec::Estimate {
                estimators: names, ..
            } => {
                if let Some(bad) = names
                    .iter()
                    .find(|n| !estimators::ESTIMATOR_NAMES.contains(&n.as_str()))
                {
                    return Err(Error::Schema(format!("unknown estimator '{bad}'")));
                }
            }
            ModeSpec::Simulate {
                initial,
                hamiltonian,
                transition,
                dt,
                bins,
                ..
            } => {
                hamiltonian.validate()?;
                transition.validate()?;
                if hamiltonian.dims() != initial.dims() {
                    return Err(Error::Dimension(format!(
                        "Hamiltonian dims {:?} do not match initial state dims {:?}",
                        hamiltonian.dims(),
                        initial.dims()
                    )));
                }
                if !(*dt > 0.0) || *bins == 0 {
                    return Err(Error::Domain(
                        "need dt > 0 and at least one histogram bin".into(),
                    ));
                }
            }
            ModeSpec::Lindblad {
                initial, lindblad, ..
            } => {
                lindblad.validate()?;
                if lindblad.h0.dims().iter().product::<usize>() != initial.dim() {
                    return Err(Error::Dimension(
                        "Lindblad operators do not match the initial state".into(),
                    ));
                }
            }
            ModeSpec::Lattice {
                points, dx, sigma, ..
            } => {
                if *points < 2 || !(*dx > 0.0) || !(*sigma > 0.0) {
                    return Err(Error::Domain(
                        "lattice needs points >= 2, dx > 0, sigma > 0".into(),
                    ));
                }
            }
            ModeSpec::Measure {
                system,
                chain,
                transition,
            } => {
                chain.validate()?;
                transition.validate()?;
                if system.dims() != [chain.system_dim] {
                    return Err(Error::Dimension(format!(
                        "system dims {:?} do not match chain dimension {}",
                        system.dims(),
                        chain.system_dim
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One JSON-lines row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub schema: String,
    pub trajectory: usize,
    pub record: TransitionRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ReportLine<'a> {
    schema: &'a str,
    report: EstimateReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectorySeed {
    pub trajectory: usize,
    pub seed: u64,
    pub stream: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub scenario_id: String,
    pub tool_version: String,
    pub constants_version: String,
    pub constants: PhysicalConstants,
    pub master_seed: u64,
    pub trajectory_seeds: Vec<TrajectorySeed>,
    pub started_at_unix_ms: u128,
    pub finished_at_unix_ms: u128,
    pub outputs: Vec<OutputDigest>,
    /// The scenario as run, with the effective seed.
    pub scenario: Scenario,
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Self = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Schema(e.to_string()))?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Schema(format!(
                "expected schema '{MANIFEST_SCHEMA}', got '{}'",
                m.schema
            )));
        }
        Ok(m)
    }
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

/// Constants from `explicit`, else the environment variable, else defaults.
pub fn resolve_constants(explicit: Option<&Path>) -> Result<PhysicalConstants> {
    if let Some(p) = explicit {
        return PhysicalConstants::load(p);
    }
    match std::env::var_os(CONSTANTS_ENV) {
        Some(p) if !p.is_empty() => PhysicalConstants::load(Path::new(&p)),
        _ => Ok(PhysicalConstants::default()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquaredTest {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

/// Pearson goodness of fit of `counts` against probabilities `expected`.
pub fn born_chi_squared(counts: &[u64], expected: &[f64]) -> Result<ChiSquaredTest> {
    if counts.len() != expected.len() || counts.len() < 2 {
        return Err(Error::Dimension(format!(
            "need matching outcome lists of length >= 2, got {} counts and {} probabilities",
            counts.len(),
            expected.len()
        )));
    }
    if expected.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::Domain(
            "expected probabilities must be positive".into(),
        ));
    }
    let psum: f64 = expected.iter().sum();
    if (psum - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!(
            "expected probabilities sum to {psum}"
        )));
    }
    let n: u64 = counts.iter().sum();
    let mut statistic = 0.0;
    for (index, (&c, &p)) in counts.iter().zip(expected).enumerate() {
        let e = n as f64 * p;
        if e < MIN_EXPECTED_COUNT {
            return Err(Error::Undersampled { index, expected: e });
        }
        statistic += (c as f64 - e).powi(2) / e;
    }
    let dof = counts.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(ChiSquaredTest {
        statistic,
        p_value: dist.sf(statistic),
        dof,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `counts.len() + 1` edges; empty when there are no samples.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n: usize,
    pub mean: Option<f64>,
    /// Sample variance; `None` below two samples.
    pub variance: Option<f64>,
}

/// Equal-width histogram of unitary-phase durations.
pub fn tau_u_histogram(intervals: &[f64], bins: usize) -> Histogram {
    if intervals.is_empty() || bins == 0 {
        return Histogram {
            edges: Vec::new(),
            counts: Vec::new(),
            n: 0,
            mean: None,
            variance: None,
        };
    }
    let lo = intervals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = intervals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // Relative spread below rounding noise collapses to a single bin.
    let (edges, counts) = if hi - lo <= 1e-9 * hi.abs().max(f64::MIN_POSITIVE) {
        (vec![lo, hi], vec![intervals.len() as u64])
    } else {
        let w = (hi - lo) / bins as f64;
        let mut counts = vec![0u64; bins];
        for &x in intervals {
            let k = (((x - lo) / w) as usize).min(bins - 1);
            counts[k] += 1;
        }
        ((0..=bins).map(|k| lo + w * k as f64).collect(), counts)
    };
    let mean = intervals.mean();
    let var = intervals.variance();
    Histogram {
        edges,
        counts,
        n: intervals.len(),
        mean: Some(mean),
        variance: var.is_finite().then_some(var),
    }
}

/// Inter-transition intervals per trajectory, the first measured from `t = 0`.
pub fn intervals_from_records(lines: &[RecordLine]) -> Vec<f64> {
    let mut by_traj: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for l in lines {
        by_traj.entry(l.trajectory).or_default().push(l.record.time);
    }
    let mut out = Vec::new();
    for (_, mut times) in by_traj {
        times.sort_by(f64::total_cmp);
        let mut last = 0.0;
        for t in times {
            out.push(t - last);
            last = t;
        }
    }
    out
}

/// Counts of the leading outcome digit (the system outcome for a chain).
pub fn system_outcome_counts(lines: &[RecordLine], outcomes: usize) -> Vec<u64> {
    let mut counts = vec![0u64; outcomes];
    for l in lines {
        if let Some(&d) = l.record.outcome_digits.first() {
            if d < outcomes {
                counts[d] += 1;
            }
        }
    }
    counts
}

pub fn read_records(path: &Path) -> Result<Vec<RecordLine>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let l: RecordLine = serde_json::from_str(line)
            .map_err(|e| Error::Schema(format!("line {}: {e}", i + 1)))?;
        if l.schema != RECORD_SCHEMA {
            return Err(Error::Schema(format!(
                "line {}: unexpected schema '{}'",
                i + 1,
                l.schema
            )));
        }
        out.push(l);
    }
    Ok(out)
}

#[derive(Serialize)]
struct LindbladOutput<'a> {
    schema: &'a str,
    steps: usize,
    max_trace_drift: f64,
    trace_drift_per_time: f64,
    #[serde(with = "linalg::complex_matrix")]
    rho: &'a CMatrix,
}

/// Rendered outputs, file name to bytes, in write order.
type Outputs = Vec<(String, Vec<u8>)>;

fn jsonl<T: Serialize>(rows: impl IntoIterator<Item = T>) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, &r)?;
        buf.push(b'\n');
    }
    Ok(buf)
}

fn metrics_csv(rows: &[(&str, String)]) -> Vec<u8> {
    let mut s = String::from("metric,value\n");
    for (k, v) in rows {
        let _ = writeln!(s, "{k},{v}");
    }
    s.into_bytes()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn record_lines(per_traj: Vec<Vec<TransitionRecord>>) -> Vec<RecordLine> {
    per_traj
        .into_iter()
        .enumerate()
        .flat_map(|(k, recs)| {
            recs.into_iter().map(move |record| RecordLine {
                schema: RECORD_SCHEMA.into(),
                trajectory: k,
                record,
            })
        })
        .collect()
}

fn map_trajectories<T: Send>(
    count: usize,
    parallel: bool,
    f: impl Fn(usize) -> Result<T> + Sync + Send,
) -> Result<Vec<T>> {
    if parallel {
        (0..count).into_par_iter().map(f).collect()
    } else {
        (0..count).map(f).collect()
    }
}

/// Execute a scenario and render its outputs without touching the disk.
pub fn execute(scenario: &Scenario, c: &PhysicalConstants, parallel: bool) -> Result<Outputs> {
    scenario.validate()?;
    let hbar = scenario.units.hbar(c);
    let seed = scenario.seed;
    let count = scenario.trajectory_count;
    let mut out: Outputs = Vec::new();
    match &scenario.mode {
        ModeSpec::Estimate {
            estimators: names,
            params,
        } => {
            let names: Vec<&str> = if names.is_empty() {
                estimators::ESTIMATOR_NAMES.to_vec()
            } else {
                names.iter().map(String::as_str).collect()
            };
            let reports = names
                .iter()
                .map(|n| estimators::estimate(n, params, c))
                .collect::<Result<Vec<_>>>()?;
            let mut csv = String::from("name,value_log10,published_log10,agreement,flagged\n");
            for r in &reports {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{}",
                    r.name,
                    r.value.log10(),
                    opt(r.published_value.map(|v| v.log10())),
                    opt(r.agreement),
                    r.flag.is_some()
                );
            }
            out.push((
                "reports.jsonl".into(),
                jsonl(reports.iter().cloned().map(|report| ReportLine {
                    schema: REPORT_SCHEMA,
                    report,
                }))?,
            ));
            out.push(("stats.csv".into(), csv.into_bytes()));
            out.push((
                "estimates.txt".into(),
                estimators::format_table(&reports).into_bytes(),
            ));
        }
        ModeSpec::Simulate {
            initial,
            hamiltonian,
            transition,
            t_total,
            dt,
            force_every,
            bins,
        } => {
            let mut cfg = transition.clone();
            cfg.rng_seed = seed;
            let opts = TrajectoryOptions {
                t_total: *t_total,
                dt: *dt,
                force_every: *force_every,
            };
            let runs = map_trajectories(count, parallel, |k| {
                run_trajectory(initial, hamiltonian, &cfg, &opts, hbar, k as u64)
            })?;
            let intervals: Vec<f64> = runs
                .iter()
                .flat_map(|r| r.intervals.iter().copied())
                .collect();
            let lines = record_lines(runs.into_iter().map(|r| r.records).collect());
            let hist = tau_u_histogram(&intervals, *bins);
            let mut h = String::from("bin_lo,bin_hi,count\n");
            for (k, cnt) in hist.counts.iter().enumerate() {
                let _ = writeln!(h, "{},{},{}", hist.edges[k], hist.edges[k + 1], cnt);
            }
            out.push(("records.jsonl".into(), jsonl(&lines)?));
            out.push(("tau_u.csv".into(), h.into_bytes()));
            out.push((
                "stats.csv".into(),
                metrics_csv(&[
                    ("trajectories", count.to_string()),
                    ("transitions", lines.len().to_string()),
                    ("mean_tau_u", opt(hist.mean)),
                    ("variance_tau_u", opt(hist.variance)),
                ]),
            ));
        }
        ModeSpec::Measure {
            system,
            chain,
            transition,
        } => {
            let mut cfg = transition.clone();
            cfg.rng_seed = seed;
            let psi = premeasure(system, chain)?;
            let (verdict, _) = state_stability(&psi, &cfg)?;
            let runs = map_trajectories(count, parallel, |k| {
                let mut rng = TransitionRng::new(seed, k as u64);
                information_transition(&psi, &cfg, 0.0, verdict.stable, &mut rng)
                    .map(|(_, r)| vec![r])
            })?;
            let lines = record_lines(runs);
            let expected: Vec<f64> = system.amps().iter().map(|a| a.norm_sqr()).collect();
            let counts = system_outcome_counts(&lines, expected.len());
            let mut o = String::from("outcome,count,expected_probability\n");
            for (i, (cnt, p)) in counts.iter().zip(&expected).enumerate() {
                let _ = writeln!(o, "{i},{cnt},{p}");
            }
            // Outcomes with zero amplitude never occur and carry no test information.
            let (kc, kp): (Vec<u64>, Vec<f64>) = counts
                .iter()
                .zip(&expected)
                .filter(|(_, &p)| p > 0.0)
                .map(|(&c, &p)| (c, p))
                .unzip();
            let psum: f64 = kp.iter().sum();
            let kp: Vec<f64> = kp.iter().map(|p| p / psum).collect();
            let mut metrics = vec![("trajectories", count.to_string())];
            match born_chi_squared(&kc, &kp) {
                Ok(t) => {
                    metrics.push(("chi_squared", t.statistic.to_string()));
                    metrics.push(("p_value", t.p_value.to_string()));
                    metrics.push(("dof", t.dof.to_string()));
                }
                Err(Error::Undersampled { .. } | Error::Dimension(_)) => {
                    metrics.push(("chi_squared", "undersampled".into()));
                }
                Err(e) => return Err(e),
            }
            out.push(("records.jsonl".into(), jsonl(&lines)?));
            out.push(("outcomes.csv".into(), o.into_bytes()));
            out.push(("stats.csv".into(), metrics_csv(&metrics)));
        }
        ModeSpec::Lindblad {
            initial,
            lindblad,
            t_total,
            dt,
        } => {
            let rho0 = initial.density();
            let run = dynamics::lindblad_evolve(&rho0, lindblad, *t_total, *dt, hbar)?;
            let body = LindbladOutput {
                schema: LINDBLAD_SCHEMA,
                steps: run.steps,
                max_trace_drift: run.max_trace_drift,
                trace_drift_per_time: run.trace_drift_per_time,
                rho: run.rho.matrix(),
            };
            let mut json = serde_json::to_vec(&body)?;
            json.push(b'\n');
            out.push(("lindblad.json".into(), json));
            out.push((
                "stats.csv".into(),
                metrics_csv(&[
                    ("steps", run.steps.to_string()),
                    ("max_trace_drift", run.max_trace_drift.to_string()),
                    ("trace_drift_per_time", run.trace_drift_per_time.to_string()),
                    ("purity", run.rho.purity().to_string()),
                ]),
            ));
        }
        ModeSpec::Lattice {
            points,
            dx,
            sigma,
            x0,
            mass,
            lambda,
            t_total,
            dt,
        } => {
            let s0 = LatticeState::gaussian(*points, *dx, *sigma, *x0)?;
            let s1 = dynamics::decohered_free_evolution(&s0, *mass, *lambda, *t_total, *dt, hbar)?;
            out.push(("lattice.csv".into(), s1.to_csv().into_bytes()));
            out.push((
                "stats.csv".into(),
                metrics_csv(&[
                    ("initial_width", s0.width().to_string()),
                    ("final_width", s1.width().to_string()),
                    (
                        "initial_coherence_length",
                        s0.coherence_length().to_string(),
                    ),
                    ("final_coherence_length", s1.coherence_length().to_string()),
                    ("final_trace", s1.trace().to_string()),
                ]),
            ));
        }
    }
    Ok(out)
}

/// Run a scenario into `out_dir`, writing the outputs and `manifest.json`.
pub fn run_scenario(
    scenario: &Scenario,
    c: &PhysicalConstants,
    out_dir: &Path,
    parallel: bool,
) -> Result<RunManifest> {
    let started = now_ms();
    let outputs = execute(scenario, c, parallel)?;
    std::fs::create_dir_all(out_dir)?;
    let mut digests = Vec::with_capacity(outputs.len());
    for (name, bytes) in &outputs {
        std::fs::write(out_dir.join(name), bytes)?;
        digests.push(OutputDigest {
            path: name.clone(),
            sha256: sha256_hex(bytes),
        });
    }
    let seeded = matches!(
        scenario.mode,
        ModeSpec::Simulate { .. } | ModeSpec::Measure { .. }
    );
    let trajectory_seeds = if seeded {
        (0..scenario.trajectory_count)
            .map(|k| TrajectorySeed {
                trajectory: k,
                seed: scenario.seed,
                stream: k as u64,
            })
            .collect()
    } else {
        Vec::new()
    };
    let manifest = RunManifest {
        schema: MANIFEST_SCHEMA.into(),
        scenario_id: scenario.id.clone(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        constants_version: c.version.clone(),
        constants: c.clone(),
        master_seed: scenario.seed,
        trajectory_seeds,
        started_at_unix_ms: started,
        finished_at_unix_ms: now_ms(),
        outputs: digests,
        scenario: Scenario {
            out: None,
            ..scenario.clone()
        },
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    std::fs::write(out_dir.join("manifest.json"), json)?;
    Ok(manifest)
}

/// Load a scenario file, apply overrides and run it.
pub fn run_scenario_file(
    path: &Path,
    seed: Option<u64>,
    out: Option<&Path>,
    c: &PhysicalConstants,
) -> Result<RunManifest> {
    let mut scenario = Scenario::load(path)?;
    if let Some(s) = seed {
        scenario.seed = s;
    }
    let out_dir = match (out, &scenario.out) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => path.parent().unwrap_or(Path::new(".")).join(o),
        (None, None) => PathBuf::from(format!("out/{}", scenario.id)),
    };
    run_scenario(&scenario, c, &out_dir, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub identical: bool,
    /// Output names whose digests differ or are missing.
    pub mismatches: Vec<String>,
    pub manifest: RunManifest,
}

/// Re-run the manifest's scenario with its constants and compare digests.
pub fn replay(manifest: &RunManifest, out_dir: &Path) -> Result<ReplayReport> {
    let fresh = run_scenario(&manifest.scenario, &manifest.constants, out_dir, true)?;
    let now: BTreeMap<&str, &str> = fresh
        .outputs
        .iter()
        .map(|o| (o.path.as_str(), o.sha256.as_str()))
        .collect();
    let mut mismatches: Vec<String> = manifest
        .outputs
        .iter()
        .filter(|o| now.get(o.path.as_str()) != Some(&o.sha256.as_str()))
        .map(|o| o.path.clone())
        .collect();
    if fresh.outputs.len() != manifest.outputs.len() {
        mismatches.push("output set differs".into());
    }
    Ok(ReplayReport {
        identical: mismatches.is_empty(),
        mismatches,
        manifest: fresh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnitude::{LogQuantity, Unit};
    use crate::measurement::ThresholdMode;

    fn cfg(bits: f64) -> TransitionConfig {
        TransitionConfig::new(
            ThresholdMode::Explicit {
                limit: LogQuantity::from_linear(bits, Unit::Bits).unwrap(),
            },
            8.0,
            0,
        )
    }

    fn measure_scenario(count: usize) -> Scenario {
        Scenario {
            schema: SCENARIO_SCHEMA.into(),
            id: "born3".into(),
            seed: 42,
            trajectory_count: count,
            units: UnitMode::Natural,
            out: None,
            mode: ModeSpec::Measure {
                system: PureState::from_real(
                    vec![3],
                    &[0.5f64.sqrt(), 0.3f64.sqrt(), 0.2f64.sqrt()],
                )
                .unwrap(),
                chain: ChainSpec::uniform(3, 2, 1, 1.0).unwrap(),
                transition: cfg(1.0),
            },
        }
    }

    #[test]
    fn chi_squared_exact_counts() {
        let t = born_chi_squared(&[50, 30, 20], &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(t.statistic, 0.0);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        assert_eq!(t.dof, 2);
    }

    #[test]
    fn chi_squared_oracle_and_power() {
        // Oracle: 2 outcomes, statistic (60-50)^2/50 * 2 = 4, p = erfc(sqrt(2)) for 1 dof.
        let t = born_chi_squared(&[60, 40], &[0.5, 0.5]).unwrap();
        assert!((t.statistic - 4.0).abs() < 1e-12);
        assert!((t.p_value - 0.0455002638963584).abs() < 1e-9);
        let t = born_chi_squared(&[5000, 5000], &[0.9, 0.1]).unwrap();
        assert!(t.p_value < 1e-6);
    }

    #[test]
    fn chi_squared_undersampled() {
        assert!(matches!(
            born_chi_squared(&[9, 1], &[0.95, 0.05]),
            Err(Error::Undersampled { index: 1, .. })
        ));
    }

    #[test]
    fn histogram_cases() {
        let h = tau_u_histogram(&[], 10);
        assert_eq!(h.n, 0);
        assert!(h.counts.is_empty() && h.mean.is_none());
        let h = tau_u_histogram(&[0.3; 7], 10);
        assert_eq!(h.counts, vec![7]);
        assert!((h.mean.unwrap() - 0.3).abs() < 1e-15);
        let h = tau_u_histogram(&[0.0, 1.0, 2.0, 3.0], 3);
        assert_eq!(h.counts, vec![1, 1, 2]);
        assert!((h.variance.unwrap() - 5.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn scenario_schema_errors() {
        assert!(matches!(Scenario::from_json("{}"), Err(Error::Schema(_))));
        let mut s = serde_json::to_value(measure_scenario(1)).unwrap();
        s["schema"] = "other/1".into();
        assert!(matches!(
            Scenario::from_json(&s.to_string()),
            Err(Error::Schema(_))
        ));
        let mut s = serde_json::to_value(measure_scenario(1)).unwrap();
        s["trajectory_count"] = 0.into();
        assert!(matches!(
            Scenario::from_json(&s.to_string()),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn scenario_round_trip() {
        let s = measure_scenario(3);
        let text = serde_json::to_string(&s).unwrap();
        assert_eq!(Scenario::from_json(&text).unwrap(), s);
    }

    #[test]
    fn measure_parallel_equals_sequential() {
        let s = measure_scenario(200);
        let c = PhysicalConstants::default();
        assert_eq!(
            execute(&s, &c, true).unwrap(),
            execute(&s, &c, false).unwrap()
        );
    }

    #[test]
    fn forced_transitions_give_delta_histogram() {
        let s = Scenario {
            schema: SCENARIO_SCHEMA.into(),
            id: "forced".into(),
            seed: 1,
            trajectory_count: 3,
            units: UnitMode::Natural,
            out: None,
            mode: ModeSpec::Simulate {
                initial: PureState::basis(vec![2, 2], 0).unwrap(),
                hamiltonian: HamiltonianSpec::XChain {
                    omegas: vec![0.1, 0.2],
                },
                transition: cfg(1e9),
                t_total: 1.0,
                dt: 0.01,
                force_every: Some(10),
                bins: 5,
            },
        };
        let outs = execute(&s, &PhysicalConstants::default(), true).unwrap();
        let tau = String::from_utf8(
            outs.iter()
                .find(|(n, _)| n == "tau_u.csv")
                .unwrap()
                .1
                .clone(),
        )
        .unwrap();
        let rows: Vec<&str> = tau.lines().skip(1).collect();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].ends_with(",30"));
        let lo: f64 = rows[0].split(',').next().unwrap().parse().unwrap();
        assert!((lo - 0.1).abs() < 1e-12);
    }

    #[test]
    fn estimate_scenario_outputs() {
        let s = Scenario {
            schema: SCENARIO_SCHEMA.into(),
            id: "est".into(),
            seed: 0,
            trajectory_count: 1,
            units: UnitMode::Si,
            out: None,
            mode: ModeSpec::Estimate {
                estimators: vec!["planck_cells".into()],
                params: BTreeMap::new(),
            },
        };
        let outs = execute(&s, &PhysicalConstants::default(), false).unwrap();
        let names: Vec<&str> = outs.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["reports.jsonl", "stats.csv", "estimates.txt"]);
    }

    #[test]
    fn run_and_replay_are_identical() {
        let dir = tempfile::tempdir().unwrap();
        let s = measure_scenario(300);
        let c = PhysicalConstants::default();
        let m = run_scenario(&s, &c, &dir.path().join("a"), true).unwrap();
        let loaded = RunManifest::load(&dir.path().join("a/manifest.json")).unwrap();
        assert_eq!(loaded.outputs, m.outputs);
        let r = replay(&loaded, &dir.path().join("b")).unwrap();
        assert!(r.identical, "{:?}", r.mismatches);
        let a = std::fs::read(dir.path().join("a/records.jsonl")).unwrap();
        let b = std::fs::read(dir.path().join("b/records.jsonl")).unwrap();
        assert_eq!(a, b);
        let lines = read_records(&dir.path().join("a/records.jsonl")).unwrap();
        assert_eq!(lines.len(), 300);
    }
}
