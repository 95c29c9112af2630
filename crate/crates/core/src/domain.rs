//! Shared domain types: grid geometry, density fields, loads, supports and
//! the full problem description handed to the solver.
//!
//! Grids follow the image convention: origin at the top-left corner, `x` to
//! the right and `y` downwards. Elements and nodes are both numbered
//! row-major, so element `(ex, ey)` is `ey * nelx + ex` and node `(ix, iy)`
//! is `iy * (nelx + 1) + ix`. A positive `fy` therefore points down.

use std::fmt;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("grid dimensions must be positive, got {nelx}x{nely}")]
    InvalidDims { nelx: usize, nely: usize },
    #[error("node ({ix}, {iy}) is outside a {nelx}x{nely} element grid")]
    NodeOutOfRange {
        ix: usize,
        iy: usize,
        nelx: usize,
        nely: usize,
    },
    #[error("node index {0} is outside the grid")]
    NodeIndexOutOfRange(usize),
    #[error("element index {0} is outside the grid")]
    ElementIndexOutOfRange(usize),
    #[error("expected {expected} values, found {found}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("density {value} at element {index} is outside [0, 1]")]
    DensityOutOfRange { index: usize, value: f64 },
    #[error("load vector must be non-zero")]
    ZeroLoad,
    #[error("support at node {0} constrains no direction")]
    EmptySupport(usize),
    #[error("expected a 0/1 flag, found {0}")]
    InvalidFlag(u8),
}

/// Element counts along `x` and `y`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawDims")]
pub struct GridDims {
    nelx: usize,
    nely: usize,
}

#[derive(Deserialize)]
struct RawDims {
    nelx: usize,
    nely: usize,
}

impl TryFrom<RawDims> for GridDims {
    type Error = DomainError;

    fn try_from(raw: RawDims) -> Result<Self, Self::Error> {
        GridDims::new(raw.nelx, raw.nely)
    }
}

impl GridDims {
    pub fn new(nelx: usize, nely: usize) -> Result<Self, DomainError> {
        if nelx == 0 || nely == 0 {
            return Err(DomainError::InvalidDims { nelx, nely });
        }
        Ok(Self { nelx, nely })
    }

    pub fn nelx(&self) -> usize {
        self.nelx
    }

    pub fn nely(&self) -> usize {
        self.nely
    }

    pub fn element_count(&self) -> usize {
        self.nelx * self.nely
    }

    pub fn node_count(&self) -> usize {
        (self.nelx + 1) * (self.nely + 1)
    }

    pub fn dof_count(&self) -> usize {
        2 * self.node_count()
    }

    /// Row-major node index of the grid point `(ix, iy)`.
    pub fn node_at(&self, ix: usize, iy: usize) -> Result<usize, DomainError> {
        if ix > self.nelx || iy > self.nely {
            return Err(DomainError::NodeOutOfRange {
                ix,
                iy,
                nelx: self.nelx,
                nely: self.nely,
            });
        }
        Ok(iy * (self.nelx + 1) + ix)
    }

    /// Inverse of [`GridDims::node_at`].
    pub fn node_coords(&self, node: usize) -> Result<(usize, usize), DomainError> {
        if node >= self.node_count() {
            return Err(DomainError::NodeIndexOutOfRange(node));
        }
        Ok((node % (self.nelx + 1), node / (self.nelx + 1)))
    }

    pub fn element_at(&self, ex: usize, ey: usize) -> Option<usize> {
        (ex < self.nelx && ey < self.nely).then(|| ey * self.nelx + ex)
    }

    pub fn element_coords(&self, element: usize) -> Result<(usize, usize), DomainError> {
        if element >= self.element_count() {
            return Err(DomainError::ElementIndexOutOfRange(element));
        }
        Ok((element % self.nelx, element / self.nelx))
    }

    /// Corner nodes of an element in the order top-left, top-right,
    /// bottom-right, bottom-left (counter-clockwise in the y-down frame's
    /// local coordinates, matching the element stiffness layout).
    pub fn element_nodes(&self, element: usize) -> [usize; 4] {
        let (ex, ey) = (element % self.nelx, element / self.nelx);
        let row = self.nelx + 1;
        let tl = ey * row + ex;
        let bl = (ey + 1) * row + ex;
        [tl, tl + 1, bl + 1, bl]
    }

    /// The eight degrees of freedom of an element, `[u0, v0, u1, v1, ...]`.
    pub fn element_dofs(&self, element: usize) -> [usize; 8] {
        let n = self.element_nodes(element);
        [
            2 * n[0],
            2 * n[0] + 1,
            2 * n[1],
            2 * n[1] + 1,
            2 * n[2],
            2 * n[2] + 1,
            2 * n[3],
            2 * n[3] + 1,
        ]
    }

    /// Elements touching a node (up to four).
    pub fn node_elements(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let (ix, iy) = (node % (self.nelx + 1), node / (self.nelx + 1));
        let candidates = [
            (ix.checked_sub(1), iy.checked_sub(1)),
            (Some(ix), iy.checked_sub(1)),
            (ix.checked_sub(1), Some(iy)),
            (Some(ix), Some(iy)),
        ];
        candidates.into_iter().filter_map(move |(ex, ey)| match (ex, ey) {
            (Some(ex), Some(ey)) => self.element_at(ex, ey),
            _ => None,
        })
    }
}

impl Default for GridDims {
    fn default() -> Self {
        Self { nelx: 64, nely: 64 }
    }
}

impl fmt::Display for GridDims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nelx, self.nely)
    }
}

/// Element pseudo-densities in `[0, 1]`, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDensity")]
pub struct DensityField {
    dims: GridDims,
    #[serde(rename = "density")]
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDensity {
    dims: GridDims,
    density: Vec<f64>,
}

impl TryFrom<RawDensity> for DensityField {
    type Error = DomainError;

    fn try_from(raw: RawDensity) -> Result<Self, Self::Error> {
        DensityField::new(raw.dims, raw.density)
    }
}

impl DensityField {
    pub fn new(dims: GridDims, values: Vec<f64>) -> Result<Self, DomainError> {
        if values.len() != dims.element_count() {
            return Err(DomainError::LengthMismatch {
                expected: dims.element_count(),
                found: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(DomainError::DensityOutOfRange { index, value });
        }
        Ok(Self { dims, values })
    }

    pub fn uniform(dims: GridDims, value: f64) -> Result<Self, DomainError> {
        Self::new(dims, vec![value; dims.element_count()])
    }

    pub fn dims(&self) -> GridDims {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, ex: usize, ey: usize) -> Option<f64> {
        self.dims.element_at(ex, ey).map(|e| self.values[e])
    }

    /// Mean density over the elements flagged in `region`.
    pub fn volume_fraction(&self, region: &[bool]) -> f64 {
        let (sum, count) = self
            .values
            .iter()
            .zip(region)
            .filter(|(_, &inside)| inside)
            .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// A point force. The magnitude is always normalized to one.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Load {
    pub node: usize,
    pub fx: f64,
    pub fy: f64,
}

impl Load {
    pub fn new(node: usize, fx: f64, fy: f64) -> Result<Self, DomainError> {
        let norm = fx.hypot(fy);
        if !norm.is_finite() || norm == 0.0 {
            return Err(DomainError::ZeroLoad);
        }
        Ok(Self {
            node,
            fx: fx / norm,
            fy: fy / norm,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Support {
    pub node: usize,
    pub fix_x: bool,
    pub fix_y: bool,
}

impl Support {
    pub fn new(node: usize, fix_x: bool, fix_y: bool) -> Result<Self, DomainError> {
        if !fix_x && !fix_y {
            return Err(DomainError::EmptySupport(node));
        }
        Ok(Self { node, fix_x, fix_y })
    }

    pub fn pinned(node: usize) -> Self {
        Self {
            node,
            fix_x: true,
            fix_y: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaterialParams {
    pub e0: f64,
    pub emin: f64,
    pub nu: f64,
    pub penal: f64,
    pub rmin: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        Self {
            e0: 1.0,
            emin: 1e-9,
            nu: 0.3,
            penal: 3.0,
            rmin: 2.0,
        }
    }
}

impl MaterialParams {
    /// Describes every violated range constraint.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.emin > 0.0 && self.emin < self.e0) {
            out.push(format!("require 0 < emin < e0 (emin={}, e0={})", self.emin, self.e0));
        }
        if !(self.nu > 0.0 && self.nu < 0.5) {
            out.push(format!("require 0 < nu < 0.5 (nu={})", self.nu));
        }
        if !(self.penal >= 1.0) {
            out.push(format!("require penal >= 1 (penal={})", self.penal));
        }
        if !(self.rmin >= 1.0) {
            out.push(format!("require rmin >= 1 (rmin={})", self.rmin));
        }
        out
    }

    /// SIMP-interpolated Young's modulus for a pseudo-density.
    pub fn modulus(&self, density: f64) -> f64 {
        self.emin + density.powf(self.penal) * (self.e0 - self.emin)
    }
}

/// How the mask layer constrains the optimizer.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Masked elements are kept solid.
    #[default]
    Preserve,
    /// Only masked elements are optimized; the rest of the shape stays solid.
    /// An empty mask leaves the whole shape free.
    OptimizeOnly,
}

/// Role of an element in the optimization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Passivity {
    Free,
    Solid,
    Void,
}

/// Everything needed for one generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec", into = "RawSpec")]
pub struct ProblemSpec {
    pub dims: GridDims,
    /// Elements belonging to the design part.
    pub shape: Vec<bool>,
    /// Elements the mask layer covers; must be a subset of `shape`.
    pub mask: Vec<bool>,
    pub mask_mode: MaskMode,
    pub loads: Vec<Load>,
    pub supports: Vec<Support>,
    pub volfrac: f64,
    pub strength: f64,
    pub seed: u64,
    pub material: MaterialParams,
}

impl ProblemSpec {
    /// A full rectangular shape with no mask, loads or supports.
    pub fn new(dims: GridDims, volfrac: f64) -> Self {
        let n = dims.element_count();
        Self {
            dims,
            shape: vec![true; n],
            mask: vec![false; n],
            mask_mode: MaskMode::Preserve,
            loads: Vec::new(),
            supports: Vec::new(),
            volfrac,
            strength: 0.0,
            seed: 0,
            material: MaterialParams::default(),
        }
    }

    pub fn shape_count(&self) -> usize {
        self.shape.iter().filter(|&&s| s).count()
    }

    pub fn mask_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Per-element role under the current mask mode.
    pub fn passivity(&self) -> Vec<Passivity> {
        let any_mask = self.mask.iter().any(|&m| m);
        self.shape
            .iter()
            .zip(&self.mask)
            .map(|(&shape, &mask)| match (shape, self.mask_mode) {
                (false, _) => Passivity::Void,
                (true, MaskMode::Preserve) if mask => Passivity::Solid,
                (true, MaskMode::Preserve) => Passivity::Free,
                (true, MaskMode::OptimizeOnly) if mask || !any_mask => Passivity::Free,
                (true, MaskMode::OptimizeOnly) => Passivity::Solid,
            })
            .collect()
    }

    /// Fraction of the shape pinned solid.
    pub fn passive_solid_fraction(&self) -> f64 {
        let shape = self.shape_count();
        if shape == 0 {
            return 0.0;
        }
        let solid = self
            .passivity()
            .iter()
            .filter(|p| **p == Passivity::Solid)
            .count();
        solid as f64 / shape as f64
    }

    /// Constrained global DOFs, sorted and deduplicated.
    pub fn fixed_dofs(&self) -> Vec<usize> {
        let mut dofs: Vec<usize> = self
            .supports
            .iter()
            .flat_map(|s| {
                let x = s.fix_x.then_some(2 * s.node);
                let y = s.fix_y.then_some(2 * s.node + 1);
                x.into_iter().chain(y)
            })
            .collect();
        dofs.sort_unstable();
        dofs.dedup();
        dofs
    }

    /// Global load vector over all DOFs.
    pub fn load_vector(&self) -> Vec<f64> {
        let mut f = vec![0.0; self.dims.dof_count()];
        for load in &self.loads {
            if load.node < self.dims.node_count() {
                f[2 * load.node] += load.fx;
                f[2 * load.node + 1] += load.fy;
            }
        }
        f
    }
}

/// A violated problem invariant. Rendered as a short human-readable message.
#[derive(Clone, Debug, PartialEq)]
pub enum ValidationIssue {
    EmptyShape,
    ShapeLength { expected: usize, found: usize },
    MaskLength { expected: usize, found: usize },
    MaskExceedsShape { elements: usize },
    NodeOutOfRange { what: &'static str, node: usize },
    DetachedNode { what: &'static str, node: usize },
    NoLoads,
    RigidBodyMotion,
    VolfracOutOfRange(f64),
    StrengthOutOfRange(f64),
    InfeasibleVolume { passive: f64, volfrac: f64 },
    Material(String),
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::EmptyShape => write!(f, "empty shape"),
            Self::ShapeLength { expected, found } => {
                write!(f, "shape has {found} entries, grid has {expected} elements")
            }
            Self::MaskLength { expected, found } => {
                write!(f, "mask has {found} entries, grid has {expected} elements")
            }
            Self::MaskExceedsShape { .. } => write!(f, "mask exceeds shape"),
            Self::NodeOutOfRange { what, node } => write!(f, "{what} node {node} outside grid"),
            Self::DetachedNode { what, node } => {
                write!(f, "{what} node {node} is not adjacent to the shape")
            }
            Self::NoLoads => write!(f, "no loads"),
            Self::RigidBodyMotion => write!(f, "unconstrained rigid body motion"),
            Self::VolfracOutOfRange(v) => write!(f, "volume fraction {v} outside (0, 1]"),
            Self::StrengthOutOfRange(s) => write!(f, "strength {s} outside [0, 1]"),
            Self::InfeasibleVolume { .. } => {
                write!(f, "infeasible volume: mask alone exceeds target")
            }
            Self::Material(msg) => write!(f, "invalid material: {msg}"),
        }
    }
}

impl Serialize for ValidationIssue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

/// Checks every [`ProblemSpec`] invariant and returns one issue per violation.
pub fn validate_problem(spec: &ProblemSpec) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    let dims = spec.dims;
    let n = dims.element_count();

    let shape_ok = spec.shape.len() == n;
    let mask_ok = spec.mask.len() == n;
    if !shape_ok {
        issues.push(ValidationIssue::ShapeLength {
            expected: n,
            found: spec.shape.len(),
        });
    }
    if !mask_ok {
        issues.push(ValidationIssue::MaskLength {
            expected: n,
            found: spec.mask.len(),
        });
    }
    if !(spec.volfrac > 0.0 && spec.volfrac <= 1.0) {
        issues.push(ValidationIssue::VolfracOutOfRange(spec.volfrac));
    }
    if !(0.0..=1.0).contains(&spec.strength) {
        issues.push(ValidationIssue::StrengthOutOfRange(spec.strength));
    }
    issues.extend(spec.material.problems().into_iter().map(ValidationIssue::Material));

    if shape_ok && spec.shape_count() == 0 {
        issues.push(ValidationIssue::EmptyShape);
    }
    if shape_ok && mask_ok {
        let outside = spec
            .shape
            .iter()
            .zip(&spec.mask)
            .filter(|(&s, &m)| m && !s)
            .count();
        if outside > 0 {
            issues.push(ValidationIssue::MaskExceedsShape { elements: outside });
        } else if spec.shape_count() > 0 && spec.volfrac > 0.0 {
            let passive = spec.passive_solid_fraction();
            if passive > spec.volfrac + 1e-12 {
                issues.push(ValidationIssue::InfeasibleVolume {
                    passive,
                    volfrac: spec.volfrac,
                });
            }
        }
    }

    let nodes = spec
        .loads
        .iter()
        .map(|l| ("load", l.node))
        .chain(spec.supports.iter().map(|s| ("support", s.node)));
    for (what, node) in nodes {
        if node >= dims.node_count() {
            issues.push(ValidationIssue::NodeOutOfRange { what, node });
        } else if shape_ok && !dims.node_elements(node).any(|e| spec.shape[e]) {
            issues.push(ValidationIssue::DetachedNode { what, node });
        }
    }
    if spec.loads.is_empty() {
        issues.push(ValidationIssue::NoLoads);
    }
    if !restrains_rigid_motion(spec) {
        issues.push(ValidationIssue::RigidBodyMotion);
    }
    issues
}

/// True when the supports remove both translations and the rotation.
///
/// A rigid motion is `u = a - θ y`, `v = b + θ x`. Each fixed x-DOF contributes
/// the row `[1, 0, -y]` and each fixed y-DOF `[0, 1, x]`; the motion is
/// prevented iff those rows have rank 3.
fn restrains_rigid_motion(spec: &ProblemSpec) -> bool {
    let dims = spec.dims;
    let mut rows: Vec<[f64; 3]> = Vec::new();
    for s in &spec.supports {
        let Ok((ix, iy)) = dims.node_coords(s.node) else {
            continue;
        };
        let (x, y) = (ix as f64, iy as f64);
        if s.fix_x {
            rows.push([1.0, 0.0, -y]);
        }
        if s.fix_y {
            rows.push([0.0, 1.0, x]);
        }
    }
    if rows.len() < 3 {
        return false;
    }
    // Gram matrix is 3x3 PSD; full rank iff its determinant is positive.
    let mut g = [[0.0f64; 3]; 3];
    for r in &rows {
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += r[i] * r[j];
            }
        }
    }
    let det = g[0][0] * (g[1][1] * g[2][2] - g[1][2] * g[2][1])
        - g[0][1] * (g[1][0] * g[2][2] - g[1][2] * g[2][0])
        + g[0][2] * (g[1][0] * g[2][1] - g[1][1] * g[2][0]);
    let scale = (g[0][0] + g[1][1] + g[2][2]).powi(3);
    det > 1e-10 * scale.max(1.0)
}

/// Result of one linear elastic analysis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeaSolution {
    /// Two entries per node: `[u0, v0, u1, v1, ...]`.
    pub displacements: Vec<f64>,
    pub compliance: f64,
    /// `u_e^T k0 u_e` per element, before scaling by the element modulus.
    pub element_energy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub density: DensityField,
    pub compliance: f64,
    pub achieved_volfrac: f64,
    pub iterations: usize,
    pub seed: u64,
    pub converged: bool,
}

// ---------------------------------------------------------------------------
// JSON representation

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum NodeRef {
    Index(usize),
    Coords([usize; 2]),
}

impl NodeRef {
    fn resolve(&self, dims: &GridDims) -> Result<usize, DomainError> {
        match *self {
            NodeRef::Index(n) => Ok(n),
            NodeRef::Coords([ix, iy]) => dims.node_at(ix, iy),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawLoad {
    node: NodeRef,
    fx: f64,
    fy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSupport {
    node: NodeRef,
    #[serde(default)]
    fix_x: bool,
    #[serde(default)]
    fix_y: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawSpec {
    dims: GridDims,
    shape: Vec<u8>,
    #[serde(default)]
    mask: Option<Vec<u8>>,
    #[serde(default)]
    mask_mode: MaskMode,
    #[serde(default)]
    loads: Vec<RawLoad>,
    #[serde(default)]
    supports: Vec<RawSupport>,
    volfrac: f64,
    #[serde(default)]
    strength: f64,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    material: MaterialParams,
}

fn flags(raw: Vec<u8>) -> Result<Vec<bool>, DomainError> {
    raw.into_iter()
        .map(|v| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(DomainError::InvalidFlag(other)),
        })
        .collect()
}

impl TryFrom<RawSpec> for ProblemSpec {
    type Error = DomainError;

    fn try_from(raw: RawSpec) -> Result<Self, Self::Error> {
        let dims = raw.dims;
        let shape = flags(raw.shape)?;
        let mask = match raw.mask {
            Some(m) => flags(m)?,
            None => vec![false; shape.len()],
        };
        let loads = raw
            .loads
            .iter()
            .map(|l| Load::new(l.node.resolve(&dims)?, l.fx, l.fy))
            .collect::<Result<_, _>>()?;
        let supports = raw
            .supports
            .iter()
            .map(|s| Support::new(s.node.resolve(&dims)?, s.fix_x, s.fix_y))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            dims,
            shape,
            mask,
            mask_mode: raw.mask_mode,
            loads,
            supports,
            volfrac: raw.volfrac,
            strength: raw.strength,
            seed: raw.seed,
            material: raw.material,
        })
    }
}

impl From<ProblemSpec> for RawSpec {
    fn from(spec: ProblemSpec) -> Self {
        let to_flags = |v: &[bool]| v.iter().map(|&b| u8::from(b)).collect::<Vec<_>>();
        Self {
            dims: spec.dims,
            shape: to_flags(&spec.shape),
            mask: Some(to_flags(&spec.mask)),
            mask_mode: spec.mask_mode,
            loads: spec
                .loads
                .iter()
                .map(|l| RawLoad {
                    node: NodeRef::Index(l.node),
                    fx: l.fx,
                    fy: l.fy,
                })
                .collect(),
            supports: spec
                .supports
                .iter()
                .map(|s| RawSupport {
                    node: NodeRef::Index(s.node),
                    fix_x: s.fix_x,
                    fix_y: s.fix_y,
                })
                .collect(),
            volfrac: spec.volfrac,
            strength: spec.strength,
            seed: spec.seed,
            material: spec.material,
        }
    }
}
