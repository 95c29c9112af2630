//! Plane-stress finite element analysis on the regular bilinear quad grid.
//!
//! Elements are unit squares of unit thickness. The element modulus follows
//! the SIMP interpolation `E(ρ) = Emin + ρ^p (E0 - Emin)`, so fully void
//! regions keep a tiny stiffness and the reduced system stays positive
//! definite.

use thiserror::Error;

use crate::domain::{DensityField, FeaSolution, GridDims, ProblemSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeaError {
    #[error("Poisson's ratio {0} outside (0, 0.5)")]
    InvalidPoisson(f64),
    #[error("density grid {found} does not match problem grid {expected}")]
    DimensionMismatch { expected: GridDims, found: GridDims },
    #[error("conjugate gradient did not converge: relative residual {residual:.3e} after {iterations} iterations")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("stiffness matrix is not positive definite (pivot {row})")]
    NotPositiveDefinite { row: usize },
}

/// Stiffness of a unit square Q4 element at `E = 1`.
///
/// DOFs are ordered `[u, v]` per corner, corners ordered top-left,
/// top-right, bottom-right, bottom-left.
#[derive(Clone, Debug, PartialEq)]
pub struct ElementStiffness {
    pub k0: [[f64; 8]; 8],
}

impl ElementStiffness {
    /// `u^T k0 u` for an element displacement vector.
    pub fn energy(&self, u: &[f64; 8]) -> f64 {
        let mut sum = 0.0;
        for (i, row) in self.k0.iter().enumerate() {
            let ku: f64 = row.iter().zip(u).map(|(k, x)| k * x).sum();
            sum += u[i] * ku;
        }
        sum
    }
}

/// Closed-form Q4 plane-stress stiffness for a unit element.
pub fn element_stiffness(nu: f64) -> Result<ElementStiffness, FeaError> {
    if !(nu > 0.0 && nu < 0.5) {
        return Err(FeaError::InvalidPoisson(nu));
    }
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    // coefficient pattern, 0-based indices into `k`
    const PATTERN: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = 1.0 / (1.0 - nu * nu);
    let mut k0 = [[0.0; 8]; 8];
    for (i, row) in PATTERN.iter().enumerate() {
        for (j, &idx) in row.iter().enumerate() {
            k0[i][j] = scale * k[idx];
        }
    }
    Ok(ElementStiffness { k0 })
}

/// Compressed sparse row matrix with full (not triangular) storage.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let cols = &self.col_idx[self.row_ptr[row]..self.row_ptr[row + 1]];
        match cols.binary_search(&col) {
            Ok(k) => self.values[self.row_ptr[row] + k],
            Err(_) => 0.0,
        }
    }

    pub fn row(&self, row: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[row]..self.row_ptr[row + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *o = s;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest `row - col` over stored entries.
    pub fn half_bandwidth(&self) -> usize {
        (0..self.n)
            .filter_map(|i| {
                let first = self.col_idx.get(self.row_ptr[i])?;
                (self.row_ptr[i] < self.row_ptr[i + 1]).then(|| i.saturating_sub(*first))
            })
            .max()
            .unwrap_or(0)
    }

    /// Row-major dense copy, for small systems and tests.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n]; self.n];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }
}

/// Mapping between global DOFs and the reduced (free) system.
#[derive(Clone, Debug, PartialEq)]
pub struct FreeDofMap {
    full_to_free: Vec<Option<usize>>,
    free_to_full: Vec<usize>,
}

impl FreeDofMap {
    pub fn free(&self, full: usize) -> Option<usize> {
        self.full_to_free[full]
    }

    pub fn full(&self, free: usize) -> usize {
        self.free_to_full[free]
    }

    pub fn free_count(&self) -> usize {
        self.free_to_full.len()
    }

    pub fn full_count(&self) -> usize {
        self.full_to_free.len()
    }
}

/// Sparsity pattern and scatter plan for one grid and support layout.
///
/// Building the pattern is the expensive part of assembly; the optimizer
/// builds it once and re-fills the values every iteration.
#[derive(Clone, Debug)]
pub struct Assembler {
    dims: GridDims,
    k0: ElementStiffness,
    dofs: FreeDofMap,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    /// For each element, the 64 value slots its stiffness lands in
    /// (`usize::MAX` for constrained rows or columns).
    scatter: Vec<[usize; 64]>,
}

impl Assembler {
    pub fn new(dims: GridDims, fixed_dofs: &[usize], nu: f64) -> Result<Self, FeaError> {
        let k0 = element_stiffness(nu)?;
        let dofs = free_dof_order(dims, fixed_dofs);
        let n = dofs.free_count();

        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
        for e in 0..dims.element_count() {
            let ed = dims.element_dofs(e);
            for &a in &ed {
                let Some(fa) = dofs.free(a) else { continue };
                neighbours[fa].extend(ed.iter().filter_map(|&b| dofs.free(b)));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for cols in &mut neighbours {
            cols.sort_unstable();
            cols.dedup();
            col_idx.extend_from_slice(cols);
            row_ptr.push(col_idx.len());
        }

        let scatter = (0..dims.element_count())
            .map(|e| {
                let ed = dims.element_dofs(e);
                let mut slots = [usize::MAX; 64];
                for (a, &ga) in ed.iter().enumerate() {
                    let Some(fa) = dofs.free(ga) else { continue };
                    let cols = &col_idx[row_ptr[fa]..row_ptr[fa + 1]];
                    for (b, &gb) in ed.iter().enumerate() {
                        if let Some(fb) = dofs.free(gb) {
                            let k = cols.binary_search(&fb).expect("pattern covers element");
                            slots[a * 8 + b] = row_ptr[fa] + k;
                        }
                    }
                }
                slots
            })
            .collect();

        Ok(Self {
            dims,
            k0,
            dofs,
            row_ptr,
            col_idx,
            scatter,
        })
    }

    pub fn for_spec(spec: &ProblemSpec) -> Result<Self, FeaError> {
        Self::new(spec.dims, &spec.fixed_dofs(), spec.material.nu)
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn element_stiffness(&self) -> &ElementStiffness {
        &self.k0
    }

    /// Assembles `K = Σ E_e · k0` over free DOFs and scatters `full_load`.
    pub fn assemble_moduli(&self, moduli: &[f64], full_load: &[f64]) -> AssembledSystem {
        let mut values = vec![0.0; self.col_idx.len()];
        for (slots, &e_mod) in self.scatter.iter().zip(moduli) {
            for (slot, k) in slots.iter().zip(self.k0.k0.iter().flatten()) {
                if *slot != usize::MAX {
                    values[*slot] += e_mod * k;
                }
            }
        }
        let load_vector = (0..self.dofs.free_count())
            .map(|i| full_load[self.dofs.full(i)])
            .collect();
        AssembledSystem {
            dims: self.dims,
            k0: self.k0.clone(),
            moduli: moduli.to_vec(),
            full_load: full_load.to_vec(),
            stiffness: CsrMatrix {
                n: self.dofs.free_count(),
                row_ptr: self.row_ptr.clone(),
                col_idx: self.col_idx.clone(),
                values,
            },
            load_vector,
            free_dof_map: self.dofs.clone(),
        }
    }

    pub fn assemble(
        &self,
        density: &DensityField,
        spec: &ProblemSpec,
    ) -> Result<AssembledSystem, FeaError> {
        check_dims(density, spec)?;
        let moduli: Vec<f64> = density
            .values()
            .iter()
            .map(|&rho| spec.material.modulus(rho))
            .collect();
        Ok(self.assemble_moduli(&moduli, &spec.load_vector()))
    }
}

/// Numbers free DOFs node by node along the shorter grid direction so the
/// reduced matrix has the smallest possible band.
fn free_dof_order(dims: GridDims, fixed_dofs: &[usize]) -> FreeDofMap {
    let (nx, ny) = (dims.nelx() + 1, dims.nely() + 1);
    let nodes: Vec<usize> = if nx <= ny {
        (0..nx * ny).collect()
    } else {
        (0..nx)
            .flat_map(|ix| (0..ny).map(move |iy| iy * nx + ix))
            .collect()
    };
    let mut fixed = vec![false; dims.dof_count()];
    for &d in fixed_dofs {
        if d < fixed.len() {
            fixed[d] = true;
        }
    }
    let mut full_to_free = vec![None; dims.dof_count()];
    let mut free_to_full = Vec::with_capacity(dims.dof_count());
    for node in nodes {
        for dof in [2 * node, 2 * node + 1] {
            if !fixed[dof] {
                full_to_free[dof] = Some(free_to_full.len());
                free_to_full.push(dof);
            }
        }
    }
    FreeDofMap {
        full_to_free,
        free_to_full,
    }
}

fn check_dims(density: &DensityField, spec: &ProblemSpec) -> Result<(), FeaError> {
    if density.dims() != spec.dims {
        return Err(FeaError::DimensionMismatch {
            expected: spec.dims,
            found: density.dims(),
        });
    }
    Ok(())
}

/// Reduced linear system `K u = f` over free DOFs.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    pub dims: GridDims,
    pub k0: ElementStiffness,
    /// Element moduli used for assembly.
    pub moduli: Vec<f64>,
    /// Load over all DOFs, including constrained ones.
    pub full_load: Vec<f64>,
    pub stiffness: CsrMatrix,
    pub load_vector: Vec<f64>,
    pub free_dof_map: FreeDofMap,
}

/// Assembles the reduced stiffness system for a density field.
pub fn assemble(density: &DensityField, spec: &ProblemSpec) -> Result<AssembledSystem, FeaError> {
    check_dims(density, spec)?;
    Assembler::for_spec(spec)?.assemble(density, spec)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SolverMethod {
    /// Banded Cholesky for every system size.
    #[default]
    Auto,
    /// Jacobi-preconditioned conjugate gradient.
    ConjugateGradient,
    /// Banded Cholesky.
    Direct,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveOptions {
    /// Relative residual target for the iterative solver.
    pub tol: f64,
    pub max_iter: usize,
    pub method: SolverMethod,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            method: SolverMethod::Auto,
        }
    }
}

/// Solves the reduced system and post-processes compliance and element energies.
pub fn solve(system: &AssembledSystem, opts: &SolveOptions) -> Result<FeaSolution, FeaError> {
    let f = &system.load_vector;
    let reduced = if f.iter().all(|&v| v == 0.0) {
        vec![0.0; f.len()]
    } else {
        match opts.method {
            SolverMethod::ConjugateGradient => {
                pcg(&system.stiffness, f, opts.tol, opts.max_iter)?
            }
            SolverMethod::Auto | SolverMethod::Direct => {
                BandedCholesky::factor(&system.stiffness)?.solve(f)
            }
        }
    };
    Ok(post_process(system, &reduced))
}

fn post_process(system: &AssembledSystem, reduced: &[f64]) -> FeaSolution {
    let map = &system.free_dof_map;
    let mut u = vec![0.0; map.full_count()];
    for (i, &v) in reduced.iter().enumerate() {
        u[map.full(i)] = v;
    }
    let compliance: f64 = system.full_load.iter().zip(&u).map(|(f, x)| f * x).sum();
    let element_energy = (0..system.dims.element_count())
        .map(|e| {
            let dofs = system.dims.element_dofs(e);
            let ue = dofs.map(|d| u[d]);
            system.k0.energy(&ue).max(0.0)
        })
        .collect();
    FeaSolution {
        displacements: u,
        compliance,
        element_energy,
    }
}

/// Jacobi-preconditioned conjugate gradient from a zero initial guess.
pub fn pcg(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>, FeaError> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let b_norm = norm(b);
    let mut x = vec![0.0; n];
    if b_norm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        a.mul_vec(&p, &mut ap);
        let alpha = rz / dot(&p, &ap);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let res = norm(&r) / b_norm;
        if res <= tol {
            return Ok(x);
        }
        if !res.is_finite() {
            return Err(FeaError::NotConverged {
                iterations: it + 1,
                residual: res,
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(FeaError::NotConverged {
        iterations: max_iter,
        residual: norm(&r) / b_norm,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `L L^T` factorization of a symmetric banded matrix.
///
/// Row `i` stores `L[i][i-band ..= i]` contiguously.
pub struct BandedCholesky {
    n: usize,
    band: usize,
    rows: Vec<f64>,
}

impl BandedCholesky {
    pub fn factor(a: &CsrMatrix) -> Result<Self, FeaError> {
        let n = a.dim();
        let band = a.half_bandwidth();
        let w = band + 1;
        let mut rows = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    rows[i * w + (j + band - i)] = v;
                }
            }
        }
        for i in 0..n {
            let lo_i = i.saturating_sub(band);
            for j in lo_i..=i {
                let lo = lo_i.max(j.saturating_sub(band));
                // L[i][k] for k in lo..j sits at i*w + k + band - i
                let ri = i * w + band - i;
                let rj = j * w + band - j;
                let mut s = rows[ri + j];
                let (li, lj) = (&rows[ri + lo..ri + j], &rows[rj + lo..rj + j]);
                s -= li.iter().zip(lj).map(|(x, y)| x * y).sum::<f64>();
                if i == j {
                    if !(s > 0.0) {
                        return Err(FeaError::NotPositiveDefinite { row: i });
                    }
                    rows[ri + i] = s.sqrt();
                } else {
                    rows[ri + j] = s / rows[rj + j];
                }
            }
        }
        Ok(Self { n, band, rows })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, band, w) = (self.n, self.band, self.band + 1);
        let at = |i: usize, j: usize| self.rows[i * w + j + band - i];
        let mut y = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(band);
            let s: f64 = (lo..i).map(|k| at(i, k) * y[k]).sum();
            y[i] = (y[i] - s) / at(i, i);
        }
        for i in (0..n).rev() {
            y[i] /= at(i, i);
            let yi = y[i];
            for k in i.saturating_sub(band)..i {
                y[k] -= at(i, k) * yi;
            }
        }
        y
    }
}

/// `∂c/∂ρ_e = -p ρ_e^(p-1) (E0 - Emin) u_e^T k0 u_e`.
pub fn compliance_sensitivities(
    density: &DensityField,
    spec: &ProblemSpec,
    sol: &FeaSolution,
) -> Vec<f64> {
    let m = &spec.material;
    density
        .values()
        .iter()
        .zip(&sol.element_energy)
        .map(|(&rho, &energy)| {
            if energy == 0.0 {
                0.0
            } else {
                -m.penal * rho.powf(m.penal - 1.0) * (m.e0 - m.emin) * energy
            }
        })
        .collect()
}

/// Convenience: assemble and solve in one step.
pub fn analyze(
    density: &DensityField,
    spec: &ProblemSpec,
    opts: &SolveOptions,
) -> Result<FeaSolution, FeaError> {
    solve(&assemble(density, spec)?, opts)
}
