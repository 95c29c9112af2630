//! The four files produced for every finished generation.

use serde::{Deserialize, Serialize};
use topostudio::backends::BackendError;
use topostudio::export::{self, ExportError, DEFAULT_ISO};
use topostudio::{generate, BackendKind, DensityField, GenerateOptions, GenerationResult, ProblemSpec};

pub const DENSITY: &str = "density.json";
pub const PREVIEW: &str = "preview.png";
pub const MODEL: &str = "model.stl";
pub const METRICS: &str = "metrics.json";

pub const NAMES: [&str; 4] = [DENSITY, PREVIEW, MODEL, METRICS];

/// Pixels per element in `preview.png`.
pub const PREVIEW_SCALE: u32 = 4;

pub fn content_type(name: &str) -> &'static str {
    match name {
        PREVIEW => "image/png",
        MODEL => "model/stl",
        _ => "application/json",
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Artifact {
    pub name: &'static str,
    pub bytes: Vec<u8>,
}

/// Contents of `metrics.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub compliance: f64,
    pub achieved_volfrac: f64,
    pub iterations: usize,
    pub seed: u64,
    pub backend: String,
}

impl Metrics {
    pub fn new(result: &GenerationResult, backend: &BackendKind) -> Self {
        Self {
            compliance: result.compliance,
            achieved_volfrac: result.achieved_volfrac,
            iterations: result.iterations,
            seed: result.seed,
            backend: backend.label().to_string(),
        }
    }
}

/// Serializes a result into its artifacts. Deterministic: the same result
/// always gives the same bytes.
pub fn render(
    spec: &ProblemSpec,
    backend: &BackendKind,
    result: &GenerationResult,
    stl_height: f64,
) -> Result<Vec<Artifact>, ExportError> {
    let density = serde_json::to_vec(&result.density).expect("density serializes");
    let preview = export::render_preview(&result.density, Some(&spec.mask), PREVIEW_SCALE)?;
    let mesh = export::density_to_mesh(&result.density, DEFAULT_ISO, stl_height)?;
    let mut metrics = serde_json::to_vec_pretty(&Metrics::new(result, backend)).expect("metrics serialize");
    metrics.push(b'\n');
    Ok(vec![
        Artifact { name: DENSITY, bytes: density },
        Artifact { name: PREVIEW, bytes: preview },
        Artifact { name: MODEL, bytes: export::write_stl(&mesh) },
        Artifact { name: METRICS, bytes: metrics },
    ])
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("export failed: {0}")]
    Export(#[from] ExportError),
}

/// Generates and renders one job.
pub fn run(
    spec: &ProblemSpec,
    backend: &BackendKind,
    base: Option<&DensityField>,
    stl_height: f64,
) -> Result<(GenerationResult, Vec<Artifact>), RunError> {
    let result = generate(spec, backend, base, &GenerateOptions::default())?;
    let artifacts = render(spec, backend, &result, stl_height)?;
    Ok((result, artifacts))
}
