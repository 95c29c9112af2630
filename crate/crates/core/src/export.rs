//! 2.5D export: contours, extrusion, STL/OBJ and preview images.
//!
//! Contours are traced with marching squares over element centres. The
//! sample lattice is padded by a clamped copy of the border plus a ring of
//! zeros at the same coordinates, so material touching the grid edge closes
//! exactly on the edge. Contours live in grid coordinates (y down); meshes
//! are y-up with `y' = height - y`, so the picture is not mirrored.

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::domain::DensityField;

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("degenerate contour with {0} vertices")]
    DegenerateContour(usize),
    #[error("extrusion height must be positive, got {0}")]
    InvalidHeight(f64),
    #[error("iso level must be in (0, 1), got {0}")]
    InvalidIso(f64),
    #[error("obj line {line}: {message}")]
    ObjParse { line: usize, message: String },
    #[error("mask has {got} entries, field has {expected}")]
    MaskLength { expected: usize, got: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PolygonKind {
    Outer,
    Hole,
}

/// Closed polygon; `vertices.first() == vertices.last()`.
#[derive(Clone, Debug, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<(f64, f64)>,
    pub kind: PolygonKind,
}

impl Polygon {
    /// Area with y pointing up: positive for outer boundaries, negative for
    /// holes.
    pub fn signed_area(&self) -> f64 {
        -shoelace(&self.vertices)
    }

    /// Number of distinct vertices.
    pub fn len(&self) -> usize {
        self.vertices.len().saturating_sub(1)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Shoelace area of a closed vertex list, in the frame given.
fn shoelace(v: &[(f64, f64)]) -> f64 {
    0.5 * v
        .windows(2)
        .map(|w| w[0].0 * w[1].1 - w[1].0 * w[0].1)
        .sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContourSet {
    pub polygons: Vec<Polygon>,
    /// Grid extent `(nelx, nely)` the contours were traced in.
    pub extent: (f64, f64),
}

impl ContourSet {
    pub fn is_empty(&self) -> bool {
        self.polygons.is_empty()
    }

    /// Outer area minus hole area.
    pub fn net_area(&self) -> f64 {
        self.polygons.iter().map(Polygon::signed_area).sum()
    }
}

pub const DEFAULT_ISO: f64 = 0.5;

/// Traces the `iso` level set of a density field.
pub fn extract_contours(density: &DensityField, iso: f64) -> Result<ContourSet, ExportError> {
    if !(iso > 0.0 && iso < 1.0) {
        return Err(ExportError::InvalidIso(iso));
    }
    let dims = density.dims();
    let (nelx, nely) = (dims.nelx(), dims.nely());
    let (w, h) = (nelx + 4, nely + 4);
    let coord = |i: usize, n: usize| match i {
        0 | 1 => 0.0,
        i if i >= n + 2 => n as f64,
        i => i as f64 - 1.5,
    };
    let xs: Vec<f64> = (0..w).map(|i| coord(i, nelx)).collect();
    let ys: Vec<f64> = (0..h).map(|j| coord(j, nely)).collect();
    let vals = density.values();
    let value = |i: usize, j: usize| {
        if i == 0 || j == 0 || i == w - 1 || j == h - 1 {
            return 0.0;
        }
        let ex = (i.max(2) - 2).min(nelx - 1);
        let ey = (j.max(2) - 2).min(nely - 1);
        vals[ey * nelx + ex]
    };
    let inside = |i: usize, j: usize| value(i, j) >= iso;

    // edge key: (lattice point of the top/left end, 0 = horizontal, 1 = vertical)
    type Key = (usize, u8);
    let crossing = |(p, dir): Key| {
        let (i0, j0) = (p % w, p / w);
        let (i1, j1) = if dir == 0 { (i0 + 1, j0) } else { (i0, j0 + 1) };
        let (v0, v1) = (value(i0, j0), value(i1, j1));
        let t = (iso - v0) / (v1 - v0);
        (
            xs[i0] + t * (xs[i1] - xs[i0]),
            ys[j0] + t * (ys[j1] - ys[j0]),
        )
    };

    let mut next: HashMap<Key, Key> = HashMap::new();
    let mut starts: Vec<Key> = Vec::new();
    for j in 0..h - 1 {
        for i in 0..w - 1 {
            let corners = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let ins = corners.map(|(a, b)| inside(a, b));
            if ins.iter().all(|&b| b) || ins.iter().all(|&b| !b) {
                continue;
            }
            let edges: [Key; 4] = [
                (j * w + i, 0),
                (j * w + i + 1, 1),
                ((j + 1) * w + i, 0),
                (j * w + i, 1),
            ];
            // walking the cell clockwise on screen, edge k joins corner k to k+1
            let exit = |k: usize| ins[k] && !ins[(k + 1) % 4];
            let entry = |k: usize| !ins[k] && ins[(k + 1) % 4];
            let saddle = ins[0] == ins[2] && ins[1] == ins[3];
            let center_inside =
                corners.iter().map(|&(a, b)| value(a, b)).sum::<f64>() / 4.0 >= iso;
            for k in 0..4 {
                let pair = if saddle && center_inside {
                    // join each exit to the entry right after it, cutting off
                    // the outside corners
                    exit(k).then(|| ((k + 1) % 4, k)).filter(|&(e, _)| entry(e))
                } else if saddle {
                    entry(k).then(|| (k, (k + 1) % 4)).filter(|&(_, x)| exit(x))
                } else {
                    entry(k).then(|| (k, (k..k + 4).map(|m| m % 4).find(|&m| exit(m)).unwrap()))
                };
                if let Some((a, b)) = pair {
                    next.insert(edges[a], edges[b]);
                    starts.push(edges[a]);
                }
            }
        }
    }

    let mut polygons = Vec::new();
    for start in starts {
        if !next.contains_key(&start) {
            continue;
        }
        let mut ring = Vec::new();
        let mut key = start;
        while let Some(k) = next.remove(&key) {
            ring.push(crossing(key));
            key = k;
        }
        let ring = simplify(ring);
        if ring.len() < 3 {
            continue;
        }
        let mut vertices = ring;
        vertices.push(vertices[0]);
        let kind = if shoelace(&vertices) < 0.0 {
            PolygonKind::Outer
        } else {
            PolygonKind::Hole
        };
        polygons.push(Polygon { vertices, kind });
    }
    Ok(ContourSet {
        polygons,
        extent: (nelx as f64, nely as f64),
    })
}

/// Drops repeated and collinear vertices from an open ring.
fn simplify(mut ring: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    loop {
        let n = ring.len();
        if n < 3 {
            return ring;
        }
        let keep: Vec<bool> = (0..n)
            .map(|i| {
                let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
                b != a && orient(a, b, c).abs() > 1e-12
            })
            .collect();
        if keep.iter().all(|&k| k) {
            return ring;
        }
        // remove one vertex at a time from each run so spikes collapse cleanly
        let first = keep.iter().position(|&k| !k).unwrap();
        ring.remove(first);
    }
}

fn orient(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Indexed triangle mesh with counter-clockwise (outward) winding.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl Mesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Signed volume by the divergence theorem; positive for outward winding.
    pub fn volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|i| self.vertices[i as usize]);
                (a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0])
                    + a[2] * (b[0] * c[1] - b[1] * c[0]))
                    / 6.0
            })
            .sum()
    }

    /// Every undirected edge is shared by exactly two triangles, and each
    /// directed edge appears once (consistent orientation).
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(u32, u32), usize> = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }

    fn normal(&self, t: &[u32; 3]) -> [f64; 3] {
        let [a, b, c] = t.map(|i| self.vertices[i as usize]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if len == 0.0 {
            [0.0; 3]
        } else {
            n.map(|x| x / len)
        }
    }
}

/// Extrudes the contours into a closed prism of the given height.
pub fn extrude(contours: &ContourSet, height: f64) -> Result<Mesh, ExportError> {
    if !(height > 0.0 && height.is_finite()) {
        return Err(ExportError::InvalidHeight(height));
    }
    for p in &contours.polygons {
        if p.len() < 3 {
            return Err(ExportError::DegenerateContour(p.len()));
        }
    }
    let flip = |&(x, y): &(f64, f64)| (x, contours.extent.1 - y);
    let rings: Vec<Vec<(f64, f64)>> = contours
        .polygons
        .iter()
        .map(|p| p.vertices[..p.len()].iter().map(flip).collect())
        .collect();

    let mut mesh = Mesh::default();
    let mut base = Vec::with_capacity(rings.len());
    for ring in &rings {
        base.push(mesh.vertices.len() as u32);
        for &(x, y) in ring {
            mesh.vertices.push([x, y, 0.0]);
            mesh.vertices.push([x, y, height]);
        }
    }
    let bottom = |r: usize, i: usize| base[r] + 2 * i as u32;

    // side walls: material lies left of each ring edge, so the outward side
    // is on the right
    for (r, ring) in rings.iter().enumerate() {
        let n = ring.len();
        for i in 0..n {
            let (a0, b0) = (bottom(r, i), bottom(r, (i + 1) % n));
            mesh.triangles.push([a0, b0, b0 + 1]);
            mesh.triangles.push([a0, b0 + 1, a0 + 1]);
        }
    }

    // caps: each hole goes with the smallest outer ring containing it
    let outers: Vec<usize> = (0..rings.len())
        .filter(|&r| contours.polygons[r].kind == PolygonKind::Outer)
        .collect();
    let mut holes_of: HashMap<usize, Vec<usize>> = HashMap::new();
    for r in (0..rings.len()).filter(|&r| contours.polygons[r].kind == PolygonKind::Hole) {
        let probe = rings[r][0];
        let owner = outers
            .iter()
            .copied()
            .filter(|&o| point_in_ring(probe, &rings[o]))
            .min_by(|&a, &b| {
                shoelace_open(&rings[a]).total_cmp(&shoelace_open(&rings[b]))
            });
        if let Some(o) = owner {
            holes_of.entry(o).or_default().push(r);
        }
    }
    for &o in &outers {
        let holes = holes_of.remove(&o).unwrap_or_default();
        let ids: Vec<(usize, usize)> = bridge_holes(&rings, o, &holes);
        let pts: Vec<(f64, f64)> = ids.iter().map(|&(r, i)| rings[r][i]).collect();
        for [a, b, c] in ear_clip(&pts) {
            let [a, b, c] = [ids[a], ids[b], ids[c]].map(|(r, i)| bottom(r, i));
            mesh.triangles.push([a + 1, b + 1, c + 1]);
            mesh.triangles.push([a, c, b]);
        }
    }
    Ok(mesh)
}

fn shoelace_open(ring: &[(f64, f64)]) -> f64 {
    let n = ring.len();
    0.5 * (0..n)
        .map(|i| {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            a.0 * b.1 - b.0 * a.1
        })
        .sum::<f64>()
}

fn point_in_ring(p: (f64, f64), ring: &[(f64, f64)]) -> bool {
    let n = ring.len();
    let mut inside = false;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a.1 > p.1) != (b.1 > p.1) {
            let x = a.0 + (p.1 - a.1) / (b.1 - a.1) * (b.0 - a.0);
            if p.0 < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Splices holes into the outer ring through bridge edges, returning
/// `(ring, vertex)` references. Outer rings are counter-clockwise and holes
/// clockwise, so the interior stays on the left throughout.
///
/// Every vertex is kept, even where a bridge runs collinear with contour
/// edges, so the caps share each boundary edge with exactly one wall quad.
fn bridge_holes(rings: &[Vec<(f64, f64)>], outer: usize, holes: &[usize]) -> Vec<(usize, usize)> {
    let mut poly: Vec<(usize, usize)> = (0..rings[outer].len()).map(|i| (outer, i)).collect();
    let at = |(r, i): (usize, usize)| rings[r][i];
    let mut pending: Vec<usize> = holes.to_vec();
    pending.sort_by(|&a, &b| {
        let max_x = |r: usize| rings[r].iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
        max_x(b).total_cmp(&max_x(a))
    });
    while !pending.is_empty() {
        let h = pending.remove(0);
        let hole = &rings[h];
        let m = (0..hole.len())
            .max_by(|&a, &b| hole[a].0.total_cmp(&hole[b].0).then(hole[b].1.total_cmp(&hole[a].1)))
            .unwrap();
        let mp = hole[m];
        let hn = hole.len();
        let (hprev, hnext) = (hole[(m + hn - 1) % hn], hole[(m + 1) % hn]);

        let mut candidates: Vec<usize> = (0..poly.len()).collect();
        candidates.sort_by(|&a, &b| dist2(at(poly[a]), mp).total_cmp(&dist2(at(poly[b]), mp)));
        let blocked = |p: (f64, f64)| {
            let edges = poly
                .iter()
                .enumerate()
                .map(|(i, &v)| (at(v), at(poly[(i + 1) % poly.len()])))
                .chain(pending.iter().chain(std::iter::once(&h)).flat_map(|&r| {
                    let ring = &rings[r];
                    (0..ring.len()).map(move |i| (ring[i], ring[(i + 1) % ring.len()]))
                }));
            edges
                .filter(|&(a, b)| a != mp && b != mp && a != p && b != p)
                .any(|(a, b)| segments_touch(mp, p, a, b))
        };
        let pick = candidates
            .iter()
            .copied()
            .find(|&c| {
                let n = poly.len();
                let p = at(poly[c]);
                p != mp
                    && in_cone(at(poly[(c + n - 1) % n]), p, at(poly[(c + 1) % n]), mp)
                    && in_cone(hprev, mp, hnext, p)
                    && !blocked(p)
            })
            // should not happen on traced contours; fall back to the nearest
            .unwrap_or(candidates[0]);
        let mut spliced = Vec::with_capacity(poly.len() + hn + 2);
        spliced.extend_from_slice(&poly[..=pick]);
        spliced.extend((0..=hn).map(|k| (h, (m + k) % hn)));
        spliced.extend_from_slice(&poly[pick..]);
        poly = spliced;
    }
    poly
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

/// Whether the direction `p -> q` starts into the interior at vertex `p`
/// (interior on the left of `prev -> p -> next`).
fn in_cone(prev: (f64, f64), p: (f64, f64), next: (f64, f64), q: (f64, f64)) -> bool {
    if orient(prev, p, next) > 0.0 {
        orient(p, q, prev) > 0.0 && orient(q, p, next) > 0.0
    } else {
        !(orient(p, q, next) >= 0.0 && orient(q, p, prev) >= 0.0)
    }
}

fn segments_touch(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return true;
    }
    let on = |p: (f64, f64), q: (f64, f64), r: (f64, f64), o: f64| {
        o == 0.0 && r.0 >= p.0.min(q.0) && r.0 <= p.0.max(q.0) && r.1 >= p.1.min(q.1) && r.1 <= p.1.max(q.1)
    };
    on(a, b, c, o1) || on(a, b, d, o2) || on(c, d, a, o3) || on(c, d, b, o4)
}

/// Triangulates a simple (possibly bridged) counter-clockwise polygon.
fn ear_clip(pts: &[(f64, f64)]) -> Vec<[usize; 3]> {
    let mut idx: Vec<usize> = (0..pts.len()).collect();
    let mut out = Vec::with_capacity(pts.len().saturating_sub(2));
    let mut i = 0;
    let mut misses = 0;
    while idx.len() > 3 {
        let n = idx.len();
        let (a, b, c) = (idx[(i + n - 1) % n], idx[i % n], idx[(i + 1) % n]);
        let (pa, pb, pc) = (pts[a], pts[b], pts[c]);
        let is_ear = orient(pa, pb, pc) > 0.0
            && !idx.iter().any(|&k| {
                let p = pts[k];
                p != pa && p != pb && p != pc && in_triangle(p, pa, pb, pc)
            });
        // after a full fruitless lap, clip anyway so the loop terminates;
        // prefer degenerate (zero-area) vertices, which add no area
        let forced = misses >= n && (orient(pa, pb, pc) == 0.0 || misses >= 2 * n);
        if is_ear || forced {
            out.push([a, b, c]);
            idx.remove(i % n);
            misses = 0;
            i %= idx.len();
        } else {
            i = (i + 1) % n;
            misses += 1;
        }
    }
    if idx.len() == 3 {
        out.push([idx[0], idx[1], idx[2]]);
    }
    out
}

fn in_triangle(p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> bool {
    orient(a, b, p) >= 0.0 && orient(b, c, p) >= 0.0 && orient(c, a, p) >= 0.0
}

pub const STL_HEADER: &[u8] = b"topostudio binary STL";

/// Binary STL: 80-byte header, u32 count, 50 bytes per triangle.
pub fn write_stl(mesh: &Mesh) -> Vec<u8> {
    let mut out = Vec::with_capacity(84 + 50 * mesh.triangles.len());
    let mut header = [0u8; 80];
    header[..STL_HEADER.len()].copy_from_slice(STL_HEADER);
    out.extend_from_slice(&header);
    out.extend_from_slice(&(mesh.triangles.len() as u32).to_le_bytes());
    for t in &mesh.triangles {
        let n = mesh.normal(t);
        let corners = t.map(|i| mesh.vertices[i as usize]);
        for x in n.iter().chain(corners.iter().flatten()) {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        out.extend_from_slice(&0u16.to_le_bytes());
    }
    out
}

pub fn write_obj(mesh: &Mesh) -> String {
    let mut out = String::from("# topostudio\n");
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {} {} {}", v[0], v[1], v[2]);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    out
}

/// Reads `v` and `f` records; polygons are fan-triangulated and texture or
/// normal indices are ignored.
pub fn read_obj(text: &str) -> Result<Mesh, ExportError> {
    let mut mesh = Mesh::default();
    for (lineno, line) in text.lines().enumerate() {
        let err = |message: String| ExportError::ObjParse {
            line: lineno + 1,
            message,
        };
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|s| s.parse::<f64>().map_err(|e| err(e.to_string())))
                    .collect::<Result<_, _>>()?;
                if coords.len() != 3 {
                    return Err(err("vertex needs three coordinates".into()));
                }
                mesh.vertices.push([coords[0], coords[1], coords[2]]);
            }
            Some("f") => {
                let count = mesh.vertices.len() as i64;
                let ids: Vec<u32> = parts
                    .map(|s| {
                        let raw: i64 = s
                            .split('/')
                            .next()
                            .unwrap_or("")
                            .parse()
                            .map_err(|e: std::num::ParseIntError| err(e.to_string()))?;
                        let id = if raw < 0 { count + raw } else { raw - 1 };
                        if id < 0 || id >= count {
                            return Err(err(format!("index {raw} out of range")));
                        }
                        Ok(id as u32)
                    })
                    .collect::<Result<_, _>>()?;
                if ids.len() < 3 {
                    return Err(err("face needs at least three vertices".into()));
                }
                for k in 1..ids.len() - 1 {
                    mesh.triangles.push([ids[0], ids[k], ids[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok(mesh)
}

const MASK_TINT: [u8; 3] = [0, 160, 220];

/// Grayscale preview (0 white, 1 black), `scale` pixels per element, with
/// masked elements blended toward cyan.
pub fn render_preview(
    density: &DensityField,
    mask: Option<&[bool]>,
    scale: u32,
) -> Result<Vec<u8>, ExportError> {
    let dims = density.dims();
    if let Some(m) = mask {
        if m.len() != dims.element_count() {
            return Err(ExportError::MaskLength {
                expected: dims.element_count(),
                got: m.len(),
            });
        }
    }
    let scale = scale.max(1);
    let (w, h) = (dims.nelx() as u32 * scale, dims.nely() as u32 * scale);
    let img = image::RgbImage::from_fn(w, h, |x, y| {
        let e = (y / scale) as usize * dims.nelx() + (x / scale) as usize;
        let g = (255.0 * (1.0 - density.values()[e].clamp(0.0, 1.0))).round() as u8;
        let px = if mask.is_some_and(|m| m[e]) {
            MASK_TINT.map(|t| ((u16::from(g) + u16::from(t)) / 2) as u8)
        } else {
            [g; 3]
        };
        image::Rgb(px)
    });
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(out.into_inner())
}

/// Contours at `iso`, extruded to `height`.
pub fn density_to_mesh(density: &DensityField, iso: f64, height: f64) -> Result<Mesh, ExportError> {
    extrude(&extract_contours(density, iso)?, height)
}
