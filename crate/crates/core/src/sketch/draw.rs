//! Vector sketches in grid units, rasterized at any resolution.
//!
//! Useful for building test sketches and for checking that the raster
//! parser recovers what was drawn.

use std::collections::BTreeMap;

use super::{ColorClass, Raster};
use crate::domain::{GridDims, Load, ProblemSpec, Support};

#[derive(Clone, Debug, PartialEq)]
pub enum Mark {
    /// Axis-aligned rectangle `[min, max)`.
    Rect {
        class: ColorClass,
        min: (f64, f64),
        max: (f64, f64),
    },
    Disc {
        class: ColorClass,
        center: (f64, f64),
        radius: f64,
    },
    /// Load arrow with a triangular head at `head`.
    Arrow { tail: (f64, f64), head: (f64, f64) },
}

impl Mark {
    pub fn rect(class: ColorClass, min: (f64, f64), max: (f64, f64)) -> Self {
        Mark::Rect { class, min, max }
    }

    pub fn disc(class: ColorClass, center: (f64, f64), radius: f64) -> Self {
        Mark::Disc {
            class,
            center,
            radius,
        }
    }

    pub fn arrow(tail: (f64, f64), head: (f64, f64)) -> Self {
        Mark::Arrow { tail, head }
    }

    fn class(&self) -> ColorClass {
        match self {
            Mark::Rect { class, .. } | Mark::Disc { class, .. } => *class,
            Mark::Arrow { .. } => ColorClass::Load,
        }
    }

    fn contains(&self, x: f64, y: f64) -> bool {
        match *self {
            Mark::Rect { min, max, .. } => (min.0..max.0).contains(&x) && (min.1..max.1).contains(&y),
            Mark::Disc { center, radius, .. } => {
                (x - center.0).powi(2) + (y - center.1).powi(2) <= radius * radius
            }
            Mark::Arrow { tail, head } => {
                let (dx, dy) = (head.0 - tail.0, head.1 - tail.1);
                let len = dx.hypot(dy);
                if len == 0.0 {
                    return false;
                }
                let (ux, uy) = (dx / len, dy / len);
                let (px, py) = (x - tail.0, y - tail.1);
                let t = px * ux + py * uy;
                let d = (py * ux - px * uy).abs();
                let head_len = 0.35 * len;
                let head_half = (0.25 * len).max(1.2);
                if (0.0..len - head_len).contains(&t) {
                    d <= SHAFT_HALF_WIDTH
                } else if (len - head_len..=len).contains(&t) {
                    d <= head_half * (len - t) / head_len
                } else {
                    false
                }
            }
        }
    }
}

const SHAFT_HALF_WIDTH: f64 = 0.4;

/// An ordered list of marks over a grid; later marks paint over earlier ones.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorSketch {
    pub dims: GridDims,
    pub marks: Vec<Mark>,
}

impl VectorSketch {
    pub fn new(dims: GridDims) -> Self {
        Self {
            dims,
            marks: Vec::new(),
        }
    }

    pub fn with(mut self, mark: Mark) -> Self {
        self.marks.push(mark);
        self
    }

    /// Rasterizes at `scale` pixels per element by testing pixel centres.
    pub fn render(&self, scale: u32) -> Raster {
        let w = self.dims.nelx() as u32 * scale;
        let h = self.dims.nely() as u32 * scale;
        let mut raster = Raster::filled(w, h, ColorClass::Background.rgb());
        let s = f64::from(scale);
        for y in 0..h {
            for x in 0..w {
                let (gx, gy) = ((f64::from(x) + 0.5) / s, (f64::from(y) + 0.5) / s);
                if let Some(mark) = self.marks.iter().rev().find(|m| m.contains(gx, gy)) {
                    raster.set(x, y, mark.class().rgb());
                }
            }
        }
        raster
    }

    /// The problem the sketch describes, read directly from the marks:
    /// element centres decide shape and mask, supports sit at the node
    /// nearest each disc centre and loads at the node nearest each tail.
    pub fn to_problem(&self, volfrac: f64) -> ProblemSpec {
        let d = self.dims;
        let top_class = |x: f64, y: f64| {
            self.marks
                .iter()
                .rev()
                .find(|m| m.contains(x, y))
                .map_or(ColorClass::Background, Mark::class)
        };
        let classes: Vec<ColorClass> = (0..d.element_count())
            .map(|e| {
                let (ex, ey) = (e % d.nelx(), e / d.nelx());
                top_class(ex as f64 + 0.5, ey as f64 + 0.5)
            })
            .collect();
        let nearest = |(x, y): (f64, f64)| {
            let ix = x.round().clamp(0.0, d.nelx() as f64) as usize;
            let iy = y.round().clamp(0.0, d.nely() as f64) as usize;
            d.node_at(ix, iy).expect("clamped into grid")
        };
        let mut flags: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
        let mut loads = Vec::new();
        for mark in &self.marks {
            match *mark {
                Mark::Disc { class, center, .. } => {
                    if let Some((fx, fy)) = class.support_flags() {
                        let f = flags.entry(nearest(center)).or_default();
                        f.0 |= fx;
                        f.1 |= fy;
                    }
                }
                Mark::Arrow { tail, head } => {
                    if let Ok(load) = Load::new(nearest(tail), head.0 - tail.0, head.1 - tail.1) {
                        loads.push(load);
                    }
                }
                Mark::Rect { .. } => {}
            }
        }
        ProblemSpec {
            shape: classes.iter().map(|&c| c != ColorClass::Background).collect(),
            mask: classes.iter().map(|&c| c == ColorClass::Mask).collect(),
            loads,
            supports: flags
                .into_iter()
                .map(|(node, (fix_x, fix_y))| Support { node, fix_x, fix_y })
                .collect(),
            ..ProblemSpec::new(d, volfrac)
        }
    }
}

/// A reproducible example sketch on a grid of at least 24×16 elements: a
/// rectangular part (sometimes with a second block), an optional mask
/// block, two supports on the left edge and one arrow pushing into the
/// right edge.
pub fn sample(dims: GridDims, seed: u64) -> VectorSketch {
    let mut k = 0;
    let mut uniform = || {
        k += 1;
        crate::backends::element_noise(seed, k)
    };
    let mut pick = |lo: usize, hi: usize| lo + ((hi - lo + 1) as f64 * uniform()) as usize;
    let (nx, ny) = (dims.nelx(), dims.nely());
    let (x0, x1) = (pick(0, nx / 8), nx - pick(0, nx / 8));
    let (y0, y1) = (pick(0, ny / 8), ny - pick(0, ny / 8));
    let f = |v: usize| v as f64;
    let mut sketch =
        VectorSketch::new(dims).with(Mark::rect(ColorClass::Shape, (f(x0), f(y0)), (f(x1), f(y1))));
    if pick(0, 1) == 1 {
        // a foot block under the left half
        let w = pick(3, (x1 - x0) / 2);
        sketch = sketch.with(Mark::rect(ColorClass::Shape, (f(x0), f(y1 - 2)), (f(x0 + w), f(ny))));
    }
    if pick(0, 1) == 1 {
        let mx = pick(x0 + 2, x0 + (x1 - x0) / 3);
        let my = pick(y0 + 2, y1 - 5);
        sketch = sketch.with(Mark::rect(ColorClass::Mask, (f(mx), f(my)), (f(mx + 3), f(my + 3))));
    }
    let classes = [ColorClass::FixX, ColorClass::FixY, ColorClass::FixXY];
    let ya = pick(y0, y0 + (y1 - y0) / 2 - 2);
    let yb = pick(ya + 3, y1);
    for y in [ya, yb] {
        let class = classes[pick(0, 2).min(2)];
        sketch = sketch.with(Mark::disc(class, (f(x0), f(y)), 0.7));
    }
    let ty = pick(y0 + 5, y1 - 5);
    let angle = std::f64::consts::PI + (uniform() - 0.5) * 1.6;
    let tail = (f(x1), f(ty));
    sketch.with(Mark::arrow(tail, (tail.0 + 6.0 * angle.cos(), tail.1 + 6.0 * angle.sin())))
}
