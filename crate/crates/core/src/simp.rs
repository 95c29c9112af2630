//! Deterministic SIMP topology optimizer.
//!
//! Each outer iteration solves the elastic problem, filters the compliance
//! sensitivities over a cone of radius `rmin` and applies an
//! optimality-criteria update whose Lagrange multiplier is bisected so the
//! mean density over the shape matches the target volume fraction.
//! Passive elements (mask solid, outside-shape void) are pinned in every
//! iterate.

use thiserror::Error;

use crate::domain::{
    validate_problem, DensityField, GenerationResult, GridDims, Passivity, ProblemSpec,
    ValidationIssue,
};
use crate::fea::{compliance_sensitivities, solve, Assembler, FeaError, SolveOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimpError {
    #[error("infeasible volume: passive solid fraction {passive:.4} exceeds target {volfrac:.4}")]
    InfeasibleVolume { passive: f64, volfrac: f64 },
    #[error("invalid problem: {}", join(.0))]
    InvalidProblem(Vec<ValidationIssue>),
    #[error("initial density grid {found} does not match problem grid {expected}")]
    DimensionMismatch { expected: GridDims, found: GridDims },
    #[error(transparent)]
    Fea(#[from] FeaError),
}

fn join(issues: &[ValidationIssue]) -> String {
    issues
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

/// Cone-weighted neighbourhood filter, `w(e, i) = max(0, rmin - dist(e, i))`.
#[derive(Clone, Debug)]
pub struct FilterKernel {
    dims: GridDims,
    rmin: f64,
    offsets: Vec<usize>,
    neighbours: Vec<usize>,
    weights: Vec<f64>,
    weight_sums: Vec<f64>,
}

impl FilterKernel {
    pub fn new(dims: GridDims, rmin: f64) -> Self {
        let (nelx, nely) = (dims.nelx() as isize, dims.nely() as isize);
        let reach = (rmin.ceil() as isize - 1).max(0);
        let mut offsets = vec![0];
        let mut neighbours = Vec::new();
        let mut weights = Vec::new();
        let mut weight_sums = Vec::with_capacity(dims.element_count());
        for ey in 0..nely {
            for ex in 0..nelx {
                let mut sum = 0.0;
                for ny in (ey - reach).max(0)..=(ey + reach).min(nely - 1) {
                    for nx in (ex - reach).max(0)..=(ex + reach).min(nelx - 1) {
                        let dist = (((ex - nx).pow(2) + (ey - ny).pow(2)) as f64).sqrt();
                        let w = rmin - dist;
                        if w > 0.0 {
                            neighbours.push((ny * nelx + nx) as usize);
                            weights.push(w);
                            sum += w;
                        }
                    }
                }
                weight_sums.push(sum);
                offsets.push(neighbours.len());
            }
        }
        Self {
            dims,
            rmin,
            offsets,
            neighbours,
            weights,
            weight_sums,
        }
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn rmin(&self) -> f64 {
        self.rmin
    }

    /// `(neighbour, weight)` pairs of an element, self included.
    pub fn neighbours(&self, element: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.offsets[element]..self.offsets[element + 1];
        self.neighbours[range.clone()]
            .iter()
            .copied()
            .zip(self.weights[range].iter().copied())
    }

    pub fn weight_sum(&self, element: usize) -> f64 {
        self.weight_sums[element]
    }

    /// Weighted average of `field` over each element's neighbourhood.
    pub fn apply(&self, field: &[f64]) -> Vec<f64> {
        (0..self.weight_sums.len())
            .map(|e| {
                let s: f64 = self.neighbours(e).map(|(i, w)| w * field[i]).sum();
                s / self.weight_sums[e]
            })
            .collect()
    }

    /// Transpose of [`FilterKernel::apply`], used for the density-filter chain rule.
    fn apply_transpose(&self, field: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; field.len()];
        for (e, &v) in field.iter().enumerate() {
            let scaled = v / self.weight_sums[e];
            for (i, w) in self.neighbours(e) {
                out[i] += w * scaled;
            }
        }
        out
    }

    /// Classic density-weighted sensitivity filter:
    /// `Σ w ρ_i dc_i / (Σ w · max(1e-3, ρ_e))`.
    pub fn filter_sensitivities(&self, density: &[f64], dc: &[f64]) -> Vec<f64> {
        (0..self.weight_sums.len())
            .map(|e| {
                let s: f64 = self
                    .neighbours(e)
                    .map(|(i, w)| w * density[i] * dc[i])
                    .sum();
                s / (self.weight_sums[e] * density[e].max(1e-3))
            })
            .collect()
    }
}

/// Filter the sensitivities (default) or the densities.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FilterMode {
    #[default]
    Sensitivity,
    Density,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OcParams {
    pub move_limit: f64,
    /// Damping exponent on the optimality ratio.
    pub eta: f64,
    /// Tolerance on the bisected volume; larger misses mark the step infeasible.
    pub bisection_tol: f64,
    pub max_outer_iterations: usize,
    /// Stop once the largest elementwise change falls below this.
    pub change_tol: f64,
    pub filter: FilterMode,
    pub solver: SolveOptions,
}

impl Default for OcParams {
    fn default() -> Self {
        Self {
            move_limit: 0.2,
            eta: 0.5,
            bisection_tol: 1e-6,
            max_outer_iterations: 200,
            change_tol: 0.01,
            filter: FilterMode::Sensitivity,
            solver: SolveOptions::default(),
        }
    }
}

const LAMBDA_BRACKET: (f64, f64) = (1e-9, 1e9);
const BISECTION_STEPS: usize = 60;

/// Outcome of one optimality-criteria update.
#[derive(Clone, Debug, PartialEq)]
pub struct OcStep {
    /// New design variables.
    pub density: Vec<f64>,
    /// Physical densities (equal to `density` under sensitivity filtering).
    pub physical: Vec<f64>,
    pub lambda: f64,
    /// Mean physical density over the shape.
    pub volume: f64,
    /// Whether the bisection met the volume target within tolerance.
    pub feasible: bool,
}

/// One optimality-criteria update with bisection on the volume multiplier.
///
/// `sensitivities` are the raw compliance derivatives with respect to the
/// physical densities; filtering happens here according to `params.filter`.
pub fn oc_update(
    density: &[f64],
    sensitivities: &[f64],
    spec: &ProblemSpec,
    params: &OcParams,
    kernel: &FilterKernel,
) -> Result<OcStep, SimpError> {
    let passive = spec.passivity();
    check_feasible(spec)?;
    let shape_count = spec.shape_count().max(1) as f64;

    let dc = match params.filter {
        FilterMode::Sensitivity => kernel.filter_sensitivities(density, sensitivities),
        FilterMode::Density => kernel.apply_transpose(sensitivities),
    };
    let dv: Vec<f64> = match params.filter {
        FilterMode::Sensitivity => vec![1.0; density.len()],
        FilterMode::Density => {
            let shape_ind: Vec<f64> = spec.shape.iter().map(|&s| f64::from(u8::from(s))).collect();
            kernel.apply_transpose(&shape_ind)
        }
    };

    let update = |lambda: f64| -> Vec<f64> {
        density
            .iter()
            .zip(&dc)
            .zip(&dv)
            .zip(&passive)
            .map(|(((&x, &g), &v), p)| match p {
                Passivity::Solid => 1.0,
                Passivity::Void => 0.0,
                Passivity::Free => {
                    let ratio = (-g / (v.max(1e-12) * lambda)).max(0.0);
                    let target = x * ratio.powf(params.eta);
                    let lo = (x - params.move_limit).max(0.0);
                    let hi = (x + params.move_limit).min(1.0);
                    target.clamp(lo, hi)
                }
            })
            .collect()
    };
    let physical_of = |x: &[f64]| -> Vec<f64> {
        match params.filter {
            FilterMode::Sensitivity => x.to_vec(),
            FilterMode::Density => pin(&kernel.apply(x), &passive),
        }
    };
    let volume_of = |phys: &[f64]| -> f64 {
        phys.iter()
            .zip(&spec.shape)
            .filter(|(_, &s)| s)
            .map(|(v, _)| v)
            .sum::<f64>()
            / shape_count
    };

    // Bisection in log space over a fixed bracket with a fixed number of
    // halvings: deterministic and independent of the sensitivity scale.
    let (mut lo, mut hi) = (LAMBDA_BRACKET.0.ln(), LAMBDA_BRACKET.1.ln());
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let phys = physical_of(&update(mid.exp()));
        if volume_of(&phys) > spec.volfrac {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = (0.5 * (lo + hi)).exp();
    let new = update(lambda);
    let physical = physical_of(&new);
    let volume = volume_of(&physical);
    Ok(OcStep {
        density: new,
        physical,
        lambda,
        volume,
        feasible: (volume - spec.volfrac).abs() <= params.bisection_tol,
    })
}

fn check_feasible(spec: &ProblemSpec) -> Result<(), SimpError> {
    let passive = spec.passive_solid_fraction();
    if passive > spec.volfrac + 1e-12 {
        return Err(SimpError::InfeasibleVolume {
            passive,
            volfrac: spec.volfrac,
        });
    }
    Ok(())
}

fn pin(values: &[f64], passive: &[Passivity]) -> Vec<f64> {
    values
        .iter()
        .zip(passive)
        .map(|(&v, p)| match p {
            Passivity::Solid => 1.0,
            Passivity::Void => 0.0,
            Passivity::Free => v.clamp(0.0, 1.0),
        })
        .collect()
}

/// Uniform start: passives pinned, free elements set so the shape volume
/// equals the target.
pub fn uniform_start(spec: &ProblemSpec) -> Result<DensityField, SimpError> {
    let passive = spec.passivity();
    let shape = spec.shape_count() as f64;
    let solid = passive.iter().filter(|p| **p == Passivity::Solid).count() as f64;
    let free = passive.iter().filter(|p| **p == Passivity::Free).count() as f64;
    let value = if free > 0.0 {
        ((spec.volfrac * shape - solid) / free).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let values = passive
        .iter()
        .map(|p| match p {
            Passivity::Solid => 1.0,
            Passivity::Void => 0.0,
            Passivity::Free => value,
        })
        .collect();
    DensityField::new(spec.dims, values).map_err(|_| SimpError::DimensionMismatch {
        expected: spec.dims,
        found: spec.dims,
    })
}

/// Snapshot handed to [`optimize_with`] observers after each FEA solve.
#[derive(Clone, Copy, Debug)]
pub struct IterationRecord<'a> {
    pub iteration: usize,
    /// Physical densities that were just analysed.
    pub density: &'a [f64],
    pub compliance: f64,
    pub volume: f64,
    /// Largest elementwise change of the update computed from this iterate.
    pub change: f64,
}

/// Runs the optimizer from `initial` (or the uniform start).
pub fn optimize(
    spec: &ProblemSpec,
    params: &OcParams,
    initial: Option<&DensityField>,
) -> Result<GenerationResult, SimpError> {
    optimize_with(spec, params, initial, |_| {})
}

/// Like [`optimize`], calling `observer` once per outer iteration.
///
/// The returned field is the last analysed iterate, so the reported
/// compliance is exactly its compliance. On convergence that is the iterate
/// whose update moved no element by more than `change_tol`.
pub fn optimize_with<F>(
    spec: &ProblemSpec,
    params: &OcParams,
    initial: Option<&DensityField>,
    mut observer: F,
) -> Result<GenerationResult, SimpError>
where
    F: FnMut(&IterationRecord<'_>),
{
    let issues = validate_problem(spec);
    if let Some(ValidationIssue::InfeasibleVolume { passive, volfrac }) = issues
        .iter()
        .find(|i| matches!(i, ValidationIssue::InfeasibleVolume { .. }))
    {
        return Err(SimpError::InfeasibleVolume {
            passive: *passive,
            volfrac: *volfrac,
        });
    }
    if !issues.is_empty() {
        return Err(SimpError::InvalidProblem(issues));
    }
    let passive = spec.passivity();
    let mut design = match initial {
        Some(field) => {
            if field.dims() != spec.dims {
                return Err(SimpError::DimensionMismatch {
                    expected: spec.dims,
                    found: field.dims(),
                });
            }
            pin(field.values(), &passive)
        }
        None => uniform_start(spec)?.into_values(),
    };

    let kernel = FilterKernel::new(spec.dims, spec.material.rmin);
    let assembler = Assembler::for_spec(spec)?;
    let load = spec.load_vector();
    let material = spec.material;

    let mut iterations = 0;
    let mut converged = false;
    let mut last = None;
    while iterations < params.max_outer_iterations {
        iterations += 1;
        let physical = match params.filter {
            FilterMode::Sensitivity => design.clone(),
            FilterMode::Density => pin(&kernel.apply(&design), &passive),
        };
        let moduli: Vec<f64> = physical.iter().map(|&r| material.modulus(r)).collect();
        let system = assembler.assemble_moduli(&moduli, &load);
        let sol = solve(&system, &params.solver)?;
        let field = DensityField::new(spec.dims, physical.clone())
            .expect("pinned densities stay in [0, 1]");
        let dc = compliance_sensitivities(&field, spec, &sol);
        let step = oc_update(&design, &dc, spec, params, &kernel)?;
        let change = step
            .density
            .iter()
            .zip(&design)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        observer(&IterationRecord {
            iteration: iterations,
            density: &physical,
            compliance: sol.compliance,
            volume: field.volume_fraction(&spec.shape),
            change,
        });
        last = Some((field, sol.compliance));
        if change < params.change_tol {
            converged = true;
            break;
        }
        design = step.density;
    }

    let (density, compliance) = match last {
        Some(last) => last,
        None => {
            let field = DensityField::new(spec.dims, pin(&design, &passive))
                .expect("pinned densities stay in [0, 1]");
            let system = assembler.assemble(&field, spec)?;
            let c = solve(&system, &params.solver)?.compliance;
            (field, c)
        }
    };
    Ok(GenerationResult {
        achieved_volfrac: density.volume_fraction(&spec.shape),
        density,
        compliance,
        iterations,
        seed: spec.seed,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Load, Support};

    fn dims(nelx: usize, nely: usize) -> GridDims {
        GridDims::new(nelx, nely).unwrap()
    }

    fn cantilever(nelx: usize, nely: usize, volfrac: f64) -> ProblemSpec {
        let d = dims(nelx, nely);
        let mut spec = ProblemSpec::new(d, volfrac);
        for iy in 0..=nely {
            spec.supports.push(Support::pinned(d.node_at(0, iy).unwrap()));
        }
        spec.loads
            .push(Load::new(d.node_at(nelx, nely / 2).unwrap(), 0.0, 1.0).unwrap());
        spec
    }

    #[test]
    fn constant_field_is_fixed_point() {
        let k = FilterKernel::new(dims(9, 7), 2.0);
        let out = k.apply(&vec![0.4; 63]);
        assert!(out.iter().all(|v| (v - 0.4).abs() < 1e-12));
    }

    #[test]
    fn unit_radius_is_identity() {
        let k = FilterKernel::new(dims(5, 4), 1.0);
        let field: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        assert_eq!(k.apply(&field), field);
    }

    #[test]
    fn impulse_spreads_into_cone() {
        // Oracle: evaluate the weight formula directly for an impulse at (3, 3).
        let d = dims(7, 7);
        let k = FilterKernel::new(d, 2.0);
        let mut field = vec![0.0; 49];
        field[3 * 7 + 3] = 1.0;
        let out = k.apply(&field);
        for ey in 0..7i32 {
            for ex in 0..7i32 {
                let e = (ey * 7 + ex) as usize;
                let dist = (((ex - 3).pow(2) + (ey - 3).pow(2)) as f64).sqrt();
                let w = (2.0 - dist).max(0.0);
                let expected = w / k.weight_sum(e);
                assert!((out[e] - expected).abs() < 1e-15);
                assert_eq!(out[e] > 0.0, dist < 2.0);
                let mirrored = ((6 - ey) * 7 + (6 - ex)) as usize;
                assert!((out[e] - out[mirrored]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn uniform_sensitivity_gives_uniform_volfrac() {
        let spec = {
            let mut s = cantilever(8, 6, 0.3);
            s.volfrac = 0.3;
            s
        };
        let k = FilterKernel::new(spec.dims, 2.0);
        let x = vec![0.4; 48];
        let dc = vec![-1.0; 48];
        let step = oc_update(&x, &dc, &spec, &OcParams::default(), &k).unwrap();
        assert!(step.feasible);
        assert!(step.density.iter().all(|v| (v - 0.3).abs() < 1e-6));
    }

    #[test]
    fn volume_decreases_in_lambda() {
        // Oracle for the bisection: scan λ on a log grid and check the
        // unclamped update shrinks the volume monotonically.
        let x: Vec<f64> = (0..40).map(|i| 0.1 + 0.02 * i as f64).collect();
        let dc: Vec<f64> = (0..40).map(|i| -0.5 - (i % 7) as f64).collect();
        let mut prev = f64::INFINITY;
        for k in -40..40 {
            let lambda = 10f64.powf(k as f64 / 8.0);
            let vol: f64 = x
                .iter()
                .zip(&dc)
                .map(|(x, g)| x * (-g / lambda).sqrt())
                .sum();
            assert!(vol < prev);
            prev = vol;
        }
    }

    #[test]
    fn masked_update_hits_target_volume() {
        let mut spec = cantilever(10, 10, 0.3);
        for e in 0..10 {
            spec.mask[e] = true; // top row: 10% of the shape
        }
        let k = FilterKernel::new(spec.dims, 2.0);
        let x = uniform_start(&spec).unwrap().into_values();
        let dc: Vec<f64> = (0..100).map(|e| -1.0 - ((e * 13) % 17) as f64 / 4.0).collect();
        let step = oc_update(&x, &dc, &spec, &OcParams::default(), &k).unwrap();
        assert!((step.volume - 0.3).abs() <= 1e-6, "{}", step.volume);
        for e in 0..10 {
            assert_eq!(step.density[e], 1.0);
        }
        for (new, old) in step.density.iter().zip(&x).skip(10) {
            assert!((new - old).abs() <= 0.2 + 1e-12);
        }
        // bisection oracle: scanning λ over a fine grid brackets the target
        let vol_at = |lambda: f64| {
            let passive = spec.passivity();
            let filtered = k.filter_sensitivities(&x, &dc);
            x.iter()
                .zip(&filtered)
                .zip(&passive)
                .map(|((&x, &g), p)| match p {
                    Passivity::Solid => 1.0,
                    _ => (x * (-g / lambda).sqrt()).clamp((x - 0.2).max(0.0), (x + 0.2).min(1.0)),
                })
                .sum::<f64>()
                / 100.0
        };
        let grid: Vec<f64> = (0..=400).map(|i| 10f64.powf(-4.0 + i as f64 / 50.0)).collect();
        let vols: Vec<f64> = grid.iter().map(|&l| vol_at(l)).collect();
        assert!(vols.windows(2).all(|w| w[1] <= w[0] + 1e-15));
        let idx = vols.iter().position(|&v| v <= 0.3).unwrap();
        assert!(grid[idx - 1] <= step.lambda && step.lambda <= grid[idx]);
    }

    #[test]
    fn infeasible_mask_is_an_error() {
        let mut spec = cantilever(10, 10, 0.05);
        for e in 0..10 {
            spec.mask[e] = true;
        }
        let k = FilterKernel::new(spec.dims, 2.0);
        let err = oc_update(&vec![0.5; 100], &vec![-1.0; 100], &spec, &OcParams::default(), &k);
        assert!(matches!(err, Err(SimpError::InfeasibleVolume { .. })));
        assert!(matches!(
            optimize(&spec, &OcParams::default(), None),
            Err(SimpError::InfeasibleVolume { .. })
        ));
    }

    #[test]
    fn fully_passive_problem_returns_mask() {
        let mut spec = cantilever(6, 4, 1.0);
        spec.shape = vec![true; 24];
        spec.mask = vec![true; 24];
        let res = optimize(&spec, &OcParams::default(), None).unwrap();
        assert!(res.density.values().iter().all(|&v| v == 1.0));
        assert!(res.converged);
        assert_eq!(res.iterations, 1);
    }

    #[test]
    fn passives_pinned_in_every_iterate() {
        let mut spec = cantilever(16, 8, 0.4);
        spec.shape[14] = false;
        spec.shape[15] = false;
        spec.mask[8 * 16 - 1] = true;
        spec.mask[5 * 16 + 8] = true;
        let params = OcParams {
            max_outer_iterations: 15,
            ..Default::default()
        };
        let mut seen = 0;
        optimize_with(&spec, &params, None, |rec| {
            seen += 1;
            assert_eq!(rec.density[14], 0.0);
            assert_eq!(rec.density[15], 0.0);
            assert_eq!(rec.density[8 * 16 - 1], 1.0);
            assert_eq!(rec.density[5 * 16 + 8], 1.0);
        })
        .unwrap();
        assert!(seen > 0);
    }

    #[test]
    fn density_filter_variant_runs() {
        let spec = cantilever(20, 10, 0.5);
        let params = OcParams {
            filter: FilterMode::Density,
            ..Default::default()
        };
        let res = optimize(&spec, &params, None).unwrap();
        assert!((res.achieved_volfrac - 0.5).abs() < 1e-3);
        let uniform = optimize(&spec, &OcParams { max_outer_iterations: 1, ..params }, None).unwrap();
        assert!(res.compliance < uniform.compliance);
    }

    #[test]
    fn optimize_is_deterministic() {
        let spec = cantilever(20, 10, 0.4);
        let a = optimize(&spec, &OcParams::default(), None).unwrap();
        let b = optimize(&spec, &OcParams::default(), None).unwrap();
        assert_eq!(a, b);
    }
}
