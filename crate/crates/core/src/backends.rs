//! Generation backends.
//!
//! * [`BackendKind::Deterministic`] runs the SIMP optimizer from the uniform
//!   start and is the reference result for a problem.
//! * [`BackendKind::Stochastic`] regenerates from a previous result the way
//!   image-to-image diffusion does: blend the base field with seeded noise
//!   in proportion to `strength`, then re-optimize for a budget that also
//!   scales with `strength`.
//! * [`BackendKind::Remote`] posts the problem to an external generation
//!   service and validates what comes back.
//!
//! Whatever the backend, compliance and volume fraction are recomputed
//! locally by the FEA solver; numbers from a remote service are never
//! trusted.
//!
//! # Noise generator
//!
//! The noise for element `e` under seed `s` is the `(e + 1)`-th output of
//! SplitMix64 started at state `s`, i.e. `mix(s + (e + 1) * 0x9E3779B97F4A7C15)`
//! with the standard SplitMix64 finalizer, mapped to `[0, 1)` by taking the
//! top 53 bits. Any element's value can be computed independently, so the
//! field is identical however the work is split.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use url::Url;

use crate::domain::{validate_problem, DensityField, GenerationResult, GridDims, Passivity, ProblemSpec, ValidationIssue};
use crate::fea::{analyze, FeaError};
use crate::simp::{optimize, FilterKernel, OcParams, SimpError};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("remote backend unavailable: {0}")]
    RemoteUnavailable(String),
    #[error("remote backend returned an invalid field: {0}")]
    RemoteInvalidField(String),
    #[error("invalid problem: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidProblem(Vec<ValidationIssue>),
    #[error("base density grid {found} does not match problem grid {expected}")]
    DimensionMismatch { expected: GridDims, found: GridDims },
    #[error("no results to compare")]
    EmptyResults,
    #[error(transparent)]
    Simp(#[from] SimpError),
    #[error(transparent)]
    Fea(#[from] FeaError),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Deterministic,
    Stochastic,
    Remote(Url),
}

impl BackendKind {
    /// Short name used in reports and CLI flags.
    pub fn label(&self) -> &'static str {
        match self {
            Self::Deterministic => "det",
            Self::Stochastic => "stoch",
            Self::Remote(_) => "remote",
        }
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Remote(url) => write!(f, "remote({url})"),
            other => f.write_str(other.label()),
        }
    }
}

impl FromStr for BackendKind {
    type Err = String;

    /// Accepts `det`, `deterministic`, `stoch`, `stochastic` or a URL for
    /// the remote backend.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "det" | "deterministic" => Ok(Self::Deterministic),
            "stoch" | "stochastic" => Ok(Self::Stochastic),
            other => Url::parse(other)
                .map(Self::Remote)
                .map_err(|_| format!("unknown backend `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StochasticParams {
    pub strength: f64,
    pub seed: u64,
    /// Outer-iteration budget for the re-optimization.
    pub budget: usize,
}

impl StochasticParams {
    /// Budget `max(10, ceil(strength · max_outer))`, capped at `max_outer`.
    pub fn new(strength: f64, seed: u64, max_outer: usize) -> Self {
        let scaled = (strength.clamp(0.0, 1.0) * max_outer as f64).ceil() as usize;
        Self {
            strength,
            seed,
            budget: scaled.max(10).min(max_outer),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerateOptions {
    pub oc: OcParams,
    pub remote_timeout: Duration,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            oc: OcParams::default(),
            remote_timeout: Duration::from_secs(60),
        }
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform noise in `[0, 1)` for one element.
pub fn element_noise(seed: u64, element: usize) -> f64 {
    let state = seed.wrapping_add((element as u64 + 1).wrapping_mul(GOLDEN_GAMMA));
    (splitmix64_mix(state) >> 11) as f64 / (1u64 << 53) as f64
}

pub fn noise_field(seed: u64, len: usize) -> Vec<f64> {
    (0..len).map(|e| element_noise(seed, e)).collect()
}

/// Generates one result. `base` is the previous result to regenerate from;
/// it is ignored by the deterministic backend.
pub fn generate(
    spec: &ProblemSpec,
    kind: &BackendKind,
    base: Option<&DensityField>,
    opts: &GenerateOptions,
) -> Result<GenerationResult, BackendError> {
    let issues = validate_problem(spec);
    if !issues.is_empty() {
        return Err(BackendError::InvalidProblem(issues));
    }
    if let Some(b) = base {
        if b.dims() != spec.dims {
            return Err(BackendError::DimensionMismatch {
                expected: spec.dims,
                found: b.dims(),
            });
        }
    }
    match kind {
        BackendKind::Deterministic => Ok(optimize(spec, &opts.oc, None)?),
        BackendKind::Stochastic => stochastic(spec, base, opts),
        BackendKind::Remote(url) => remote(spec, url, base, opts),
    }
}

fn stochastic(
    spec: &ProblemSpec,
    base: Option<&DensityField>,
    opts: &GenerateOptions,
) -> Result<GenerationResult, BackendError> {
    let params = StochasticParams::new(spec.strength, spec.seed, opts.oc.max_outer_iterations);
    let passive = spec.passivity();
    let base_values: Vec<f64> = match base {
        Some(b) => b.values().to_vec(),
        None => spec.shape.iter().map(|&s| if s { 1.0 } else { 0.0 }).collect(),
    };

    // Zero strength adds no noise and takes no denoising steps: a base that
    // already honours the passive regions comes back unchanged.
    if params.strength == 0.0 {
        if let Some(b) = base {
            if honours_passivity(b.values(), &passive, 0.0).is_ok() {
                return evaluate(spec, b.clone(), 0, true);
            }
        }
    }

    let kernel = FilterKernel::new(spec.dims, spec.material.rmin);
    let smoothed_noise = kernel.apply(&noise_field(params.seed, base_values.len()));
    let s = params.strength;
    let initial: Vec<f64> = base_values
        .iter()
        .zip(&smoothed_noise)
        .zip(&passive)
        .map(|((&b, &n), p)| match p {
            Passivity::Solid => 1.0,
            Passivity::Void => 0.0,
            Passivity::Free => ((1.0 - s) * b + s * n).clamp(0.0, 1.0),
        })
        .collect();
    let initial = DensityField::new(spec.dims, initial).expect("blend stays in [0, 1]");
    let oc = OcParams {
        max_outer_iterations: params.budget,
        ..opts.oc
    };
    let mut result = optimize(spec, &oc, Some(&initial))?;
    result.seed = params.seed;
    Ok(result)
}

/// Compliance and volume recomputed locally for a field.
pub fn evaluate(
    spec: &ProblemSpec,
    density: DensityField,
    iterations: usize,
    converged: bool,
) -> Result<GenerationResult, BackendError> {
    let sol = analyze(&density, spec, &Default::default())?;
    Ok(GenerationResult {
        achieved_volfrac: density.volume_fraction(&spec.shape),
        compliance: sol.compliance,
        density,
        iterations,
        seed: spec.seed,
        converged,
    })
}

fn honours_passivity(values: &[f64], passive: &[Passivity], tol: f64) -> Result<(), String> {
    for (e, (&v, p)) in values.iter().zip(passive).enumerate() {
        match p {
            Passivity::Solid if (v - 1.0).abs() > tol => {
                return Err(format!("preserved element {e} has density {v}"))
            }
            Passivity::Void if v.abs() > tol => {
                return Err(format!("element {e} outside the shape has density {v}"))
            }
            _ => {}
        }
    }
    Ok(())
}

/// Request body for the remote protocol: the problem JSON plus an optional
/// base field.
#[derive(Serialize)]
struct RemoteRequest<'a> {
    #[serde(flatten)]
    spec: &'a ProblemSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    base: Option<&'a [f64]>,
}

#[derive(Deserialize)]
struct RemoteResponse {
    density: Vec<f64>,
    dims: serde_json::Value,
}

/// Validates a field returned by a remote service. Nothing is clamped.
pub fn check_remote_field(spec: &ProblemSpec, dims: GridDims, values: Vec<f64>) -> Result<DensityField, BackendError> {
    if dims != spec.dims {
        return Err(BackendError::RemoteInvalidField(format!(
            "grid {dims} does not match problem grid {}",
            spec.dims
        )));
    }
    if let Some((e, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(BackendError::RemoteInvalidField(format!(
            "density {v} at element {e} outside [0, 1]"
        )));
    }
    honours_passivity(&values, &spec.passivity(), 1e-9).map_err(BackendError::RemoteInvalidField)?;
    DensityField::new(dims, values).map_err(|e| BackendError::RemoteInvalidField(e.to_string()))
}

fn remote(
    spec: &ProblemSpec,
    url: &Url,
    base: Option<&DensityField>,
    opts: &GenerateOptions,
) -> Result<GenerationResult, BackendError> {
    let endpoint = format!("{}/generate", url.as_str().trim_end_matches('/'));
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.remote_timeout))
        .build()
        .into();
    let request = RemoteRequest {
        spec,
        base: base.map(DensityField::values),
    };
    let response = agent
        .post(&endpoint)
        .send_json(&request)
        .map_err(|e| BackendError::RemoteUnavailable(e.to_string()))?;
    let body: RemoteResponse = response
        .into_body()
        .read_json()
        .map_err(|e| BackendError::RemoteInvalidField(format!("malformed response: {e}")))?;
    let dims: GridDims = serde_json::from_value(body.dims)
        .map_err(|e| BackendError::RemoteInvalidField(format!("bad dims: {e}")))?;
    let field = check_remote_field(spec, dims, body.density)?;
    evaluate(spec, field, 0, true)
}

/// Runs one generation per seed and returns results in seed order.
///
/// Work is spread over the available cores; the output order never depends
/// on scheduling.
pub fn generate_batch(
    spec: &ProblemSpec,
    kind: &BackendKind,
    base: Option<&DensityField>,
    seeds: &[u64],
    opts: &GenerateOptions,
) -> Vec<Result<GenerationResult, BackendError>> {
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(seeds.len().max(1));
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<GenerationResult, BackendError>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&seed) = seeds.get(i) else { break };
                let seeded = ProblemSpec {
                    seed,
                    ..spec.clone()
                };
                let out = generate(&seeded, kind, base, opts);
                slots.lock().expect("no worker panicked")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("no worker panicked")
        .into_iter()
        .map(|r| r.expect("every seed processed"))
        .collect()
}

/// Counts distinct topologies among `results`.
///
/// Fields are binarized at 0.5. Two results belong to the same class when
/// their binary fields disagree on at most `threshold` of the `shape`
/// elements. Classes are formed greedily in input order: each result joins
/// the first representative it matches or starts a new class.
pub fn diversity_report(
    results: &[GenerationResult],
    shape: &[bool],
    threshold: f64,
) -> Result<usize, BackendError> {
    let first = results.first().ok_or(BackendError::EmptyResults)?;
    let dims = first.density.dims();
    if let Some(r) = results.iter().find(|r| r.density.dims() != dims) {
        return Err(BackendError::DimensionMismatch {
            expected: dims,
            found: r.density.dims(),
        });
    }
    let region: Vec<usize> = (0..dims.element_count())
        .filter(|&e| shape.get(e).copied().unwrap_or(true))
        .collect();
    let denom = region.len().max(1) as f64;
    let binary = |r: &GenerationResult| -> Vec<bool> {
        region.iter().map(|&e| r.density.values()[e] >= 0.5).collect()
    };
    let mut representatives: Vec<Vec<bool>> = Vec::new();
    for r in results {
        let b = binary(r);
        let matches = representatives.iter().any(|rep| {
            let diff = rep.iter().zip(&b).filter(|(x, y)| x != y).count();
            diff as f64 / denom <= threshold
        });
        if !matches {
            representatives.push(b);
        }
    }
    Ok(representatives.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn fast() -> GenerateOptions {
        GenerateOptions::default()
    }

    #[test]
    fn splitmix_reference_values() {
        // SplitMix64 seeded with 0: first outputs of the reference generator.
        let mix = |k: u64| splitmix64_mix(k.wrapping_mul(GOLDEN_GAMMA));
        assert_eq!(mix(1), 0xE220_A839_7B1D_CDAF);
        assert_eq!(mix(2), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(mix(3), 0x06C4_5D18_8009_454F);
        let n = element_noise(0, 0);
        assert_eq!(n, (0xE220_A839_7B1D_CDAFu64 >> 11) as f64 / (1u64 << 53) as f64);
    }

    #[test]
    fn noise_in_unit_interval() {
        let field = noise_field(42, 10_000);
        assert!(field.iter().all(|&v| (0.0..1.0).contains(&v)));
        let mean = field.iter().sum::<f64>() / field.len() as f64;
        assert!((mean - 0.5).abs() < 0.02);
        assert_ne!(noise_field(1, 10), noise_field(2, 10));
    }

    #[test]
    fn budget_scales_with_strength() {
        assert_eq!(StochasticParams::new(0.0, 0, 200).budget, 10);
        assert_eq!(StochasticParams::new(0.8, 0, 200).budget, 160);
        assert_eq!(StochasticParams::new(1.0, 0, 200).budget, 200);
        assert_eq!(StochasticParams::new(0.01, 0, 200).budget, 10);
    }

    #[test]
    fn backend_names_parse() {
        assert_eq!("det".parse::<BackendKind>().unwrap(), BackendKind::Deterministic);
        assert_eq!("stochastic".parse::<BackendKind>().unwrap(), BackendKind::Stochastic);
        assert!(matches!("http://localhost:9/".parse::<BackendKind>().unwrap(), BackendKind::Remote(_)));
        assert!("bogus".parse::<BackendKind>().is_err());
    }

    #[test]
    fn zero_strength_returns_converged_base() {
        let spec = fixtures::cantilever(30, 10, 0.5);
        let base = generate(&spec, &BackendKind::Deterministic, None, &fast()).unwrap();
        assert!(base.converged);
        let again = generate(&spec, &BackendKind::Stochastic, Some(&base.density), &fast()).unwrap();
        for (a, b) in again.density.values().iter().zip(base.density.values()) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!((again.compliance - base.compliance).abs() <= 1e-9 * base.compliance);
    }

    #[test]
    fn same_seed_same_result() {
        let mut spec = fixtures::cantilever(24, 12, 0.4);
        spec.strength = 0.6;
        spec.seed = 11;
        let a = generate(&spec, &BackendKind::Stochastic, None, &fast()).unwrap();
        let b = generate(&spec, &BackendKind::Stochastic, None, &fast()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, 11);
    }

    #[test]
    fn batch_preserves_seed_order() {
        let mut spec = fixtures::cantilever(16, 8, 0.4);
        spec.strength = 0.5;
        let seeds = [3, 1, 2];
        let out = generate_batch(&spec, &BackendKind::Stochastic, None, &seeds, &fast());
        let got: Vec<u64> = out.iter().map(|r| r.as_ref().unwrap().seed).collect();
        assert_eq!(got, seeds);
    }

    #[test]
    fn invalid_problem_rejected() {
        let mut spec = fixtures::cantilever(8, 4, 0.4);
        spec.supports.clear();
        assert!(matches!(
            generate(&spec, &BackendKind::Deterministic, None, &fast()),
            Err(BackendError::InvalidProblem(_))
        ));
    }

    #[test]
    fn diversity_counts() {
        let d = GridDims::new(4, 4).unwrap();
        let mk = |v: f64| GenerationResult {
            density: DensityField::uniform(d, v).unwrap(),
            compliance: 1.0,
            achieved_volfrac: v,
            iterations: 1,
            seed: 0,
            converged: true,
        };
        let shape = vec![true; 16];
        assert_eq!(diversity_report(&vec![mk(1.0); 5], &shape, 0.03).unwrap(), 1);
        assert_eq!(diversity_report(&[mk(1.0), mk(0.0)], &shape, 0.03).unwrap(), 2);
        assert!(matches!(diversity_report(&[], &shape, 0.03), Err(BackendError::EmptyResults)));
    }

    #[test]
    fn remote_field_checks() {
        let mut spec = fixtures::cantilever(4, 2, 0.5);
        spec.mask[0] = true;
        spec.shape[7] = false;
        let d = spec.dims;
        let mut ok = vec![0.5; 8];
        ok[0] = 1.0;
        ok[7] = 0.0;
        assert!(check_remote_field(&spec, d, ok.clone()).is_ok());
        let mut high = ok.clone();
        high[3] = 1.2;
        assert!(matches!(check_remote_field(&spec, d, high), Err(BackendError::RemoteInvalidField(_))));
        let mut unmasked = ok.clone();
        unmasked[0] = 0.9;
        assert!(matches!(check_remote_field(&spec, d, unmasked), Err(BackendError::RemoteInvalidField(_))));
        let other = GridDims::new(2, 4).unwrap();
        assert!(check_remote_field(&spec, other, ok).is_err());
    }

    #[test]
    fn unreachable_remote_is_unavailable() {
        let spec = fixtures::cantilever(8, 4, 0.4);
        let kind: BackendKind = "http://127.0.0.1:9/".parse().unwrap();
        let opts = GenerateOptions {
            remote_timeout: Duration::from_secs(2),
            ..fast()
        };
        assert!(matches!(
            generate(&spec, &kind, None, &opts),
            Err(BackendError::RemoteUnavailable(_))
        ));
    }
}
