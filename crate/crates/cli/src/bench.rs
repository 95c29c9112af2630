//! Repeated-sampling benchmark over a suite of problems.
//!
//! A suite is JSON:
//!
//! ```json
//! {
//!   "tasks": ["task1", {"name": "mine", "spec": { "dims": [8, 4], "...": "..." }}],
//!   "backends": ["det", "stoch"],
//!   "strength": 0.8
//! }
//! ```
//!
//! Tasks are fixture names or inline problems. Sample `i` uses seed
//! `first_seed + i`.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use topostudio::backends::{generate_batch, BackendError};
use topostudio::{fixtures, validate_problem, BackendKind, GenerateOptions, GenerationResult, ProblemSpec};
use url::Url;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid suite: {0}")]
    InvalidSuite(String),
    #[error("{task}/{backend}: {source}")]
    Generation {
        task: String,
        backend: String,
        source: BackendError,
    },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub tasks: Vec<TaskEntry>,
    #[serde(default = "default_backends")]
    pub backends: Vec<String>,
    /// Strength used for stochastic rows.
    #[serde(default = "default_strength")]
    pub strength: f64,
    #[serde(default)]
    pub first_seed: u64,
}

fn default_backends() -> Vec<String> {
    vec!["det".into(), "stoch".into()]
}

fn default_strength() -> f64 {
    0.8
}

#[derive(Clone, Debug, Deserialize)]
#[serde(untagged)]
pub enum TaskEntry {
    Fixture(String),
    Inline { name: String, spec: ProblemSpec },
}

/// One CSV line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub task: String,
    pub backend: String,
    pub mean_compliance: f64,
    pub std_compliance: f64,
    pub mean_vf: f64,
    pub std_vf: f64,
}

/// Mean and sample standard deviation (zero for fewer than two values).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    // identical samples (the deterministic backend) must report exactly
    // their value and zero spread, free of summation rounding
    if xs.iter().all(|x| x.to_bits() == xs[0].to_bits()) {
        return (xs[0], 0.0);
    }
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

struct Task {
    name: String,
    spec: ProblemSpec,
}

impl Suite {
    fn resolve(&self, remote: Option<&Url>) -> Result<(Vec<Task>, Vec<BackendKind>), BenchError> {
        if self.tasks.is_empty() {
            return Err(BenchError::InvalidSuite("no tasks".into()));
        }
        if self.backends.is_empty() {
            return Err(BenchError::InvalidSuite("no backends".into()));
        }
        if !(0.0..=1.0).contains(&self.strength) {
            return Err(BenchError::InvalidSuite(format!("strength {} outside [0, 1]", self.strength)));
        }
        let mut tasks = Vec::new();
        for entry in &self.tasks {
            let (name, spec) = match entry {
                TaskEntry::Fixture(name) => {
                    let spec = fixtures::by_name(name).ok_or_else(|| {
                        BenchError::InvalidSuite(format!(
                            "unknown fixture `{name}` (known: {})",
                            fixtures::NAMES.join(", ")
                        ))
                    })?;
                    (name.clone(), spec)
                }
                TaskEntry::Inline { name, spec } => (name.clone(), spec.clone()),
            };
            let issues = validate_problem(&spec);
            if !issues.is_empty() {
                let list: Vec<String> = issues.iter().map(ToString::to_string).collect();
                return Err(BenchError::InvalidSuite(format!("task `{name}`: {}", list.join("; "))));
            }
            tasks.push(Task { name, spec });
        }
        let backends = self
            .backends
            .iter()
            .map(|b| parse_backend(b, remote))
            .collect::<Result<Vec<_>, _>>()?;
        Ok((tasks, backends))
    }
}

/// Maps `det`, `stoch` or `remote` to a backend; `remote` needs a URL.
pub fn parse_backend(name: &str, remote: Option<&Url>) -> Result<BackendKind, BenchError> {
    match name {
        "remote" => remote
            .cloned()
            .map(BackendKind::Remote)
            .ok_or_else(|| BenchError::InvalidSuite("remote backend needs --remote-url".into())),
        "det" | "deterministic" => Ok(BackendKind::Deterministic),
        "stoch" | "stochastic" => Ok(BackendKind::Stochastic),
        other => Err(BenchError::InvalidSuite(format!("unknown backend `{other}`"))),
    }
}

/// Runs every (task, backend) pair for `samples` seeds. Rows come out in
/// suite order, tasks first.
pub fn run(suite: &Suite, samples: usize, remote: Option<&Url>) -> Result<Vec<Row>, BenchError> {
    if samples == 0 {
        return Err(BenchError::InvalidSuite("samples must be positive".into()));
    }
    let (tasks, backends) = suite.resolve(remote)?;
    let opts = GenerateOptions::default();
    let seeds: Vec<u64> = (0..samples as u64).map(|i| suite.first_seed + i).collect();
    let mut rows = Vec::new();
    for task in &tasks {
        for backend in &backends {
            let spec = ProblemSpec {
                strength: suite.strength,
                ..task.spec.clone()
            };
            // The deterministic backend ignores the seed, so one run stands
            // for every sample.
            let run_seeds = if *backend == BackendKind::Deterministic {
                &seeds[..1]
            } else {
                &seeds[..]
            };
            let results = generate_batch(&spec, backend, None, run_seeds, &opts)
                .into_iter()
                .collect::<Result<Vec<GenerationResult>, _>>()
                .map_err(|source| BenchError::Generation {
                    task: task.name.clone(),
                    backend: backend.label().into(),
                    source,
                })?;
            let pick = |f: fn(&GenerationResult) -> f64| -> Vec<f64> {
                (0..samples).map(|i| f(&results[i.min(results.len() - 1)])).collect()
            };
            let (mean_compliance, std_compliance) = mean_std(&pick(|r| r.compliance));
            let (mean_vf, std_vf) = mean_std(&pick(|r| r.achieved_volfrac));
            rows.push(Row {
                task: task.name.clone(),
                backend: backend.label().into(),
                mean_compliance,
                std_compliance,
                mean_vf,
                std_vf,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[Row], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        assert_eq!(mean_std(&[2.0]), (2.0, 0.0));
        assert_eq!(mean_std(&[0.1; 20]), (0.1, 0.0));
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]);
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn suite_parsing() {
        let s: Suite = serde_json::from_str(r#"{"tasks": ["task1"]}"#).unwrap();
        assert_eq!(s.backends, ["det", "stoch"]);
        assert_eq!(s.strength, 0.8);
        let spec = serde_json::to_value(fixtures::cantilever(6, 4, 0.5)).unwrap();
        let s: Suite = serde_json::from_value(serde_json::json!({
            "tasks": [{"name": "small", "spec": spec}],
            "backends": ["det"]
        }))
        .unwrap();
        assert!(matches!(&s.tasks[0], TaskEntry::Inline { name, .. } if name == "small"));
        assert!(serde_json::from_str::<Suite>(r#"{"tasks": [], "extra": 1}"#).is_err());
    }

    #[test]
    fn invalid_suites() {
        let suite = |json: &str| serde_json::from_str::<Suite>(json).unwrap();
        for bad in [
            r#"{"tasks": []}"#,
            r#"{"tasks": ["nope"]}"#,
            r#"{"tasks": ["task1"], "backends": ["gan"]}"#,
            r#"{"tasks": ["task1"], "backends": ["remote"]}"#,
            r#"{"tasks": ["task1"], "strength": 2}"#,
        ] {
            assert!(matches!(run(&suite(bad), 1, None), Err(BenchError::InvalidSuite(_))), "{bad}");
        }
        assert!(run(&suite(r#"{"tasks": ["task1"]}"#), 0, None).is_err());
    }

    #[test]
    fn csv_layout() {
        let row = Row {
            task: "t".into(),
            backend: "det".into(),
            mean_compliance: 1.5,
            std_compliance: 0.0,
            mean_vf: 0.3,
            std_vf: 0.0,
        };
        let mut out = Vec::new();
        write_csv(&[row], &mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "task,backend,mean_compliance,std_compliance,mean_vf,std_vf\nt,det,1.5,0.0,0.3,0.0\n"
        );
    }
}
