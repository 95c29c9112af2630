//! Raster sketch parsing.
//!
//! A sketch is a colour-coded drawing: black for the part, cyan for the
//! preserved mask, red arrows for loads and coloured dots for supports
//! (yellow fixes x, blue fixes y, green fixes both). Pixels are snapped to
//! the nearest palette colour, grouped into 4-connected components per
//! colour, and quantized onto the element grid.
//!
//! The whole image maps uniformly onto the grid; when the aspect ratios
//! differ the grid is centred and the margins are treated as background.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{validate_problem, GridDims, Load, ProblemSpec, Support, ValidationIssue};

pub mod draw;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SketchError {
    #[error("unsupported pixel format: {0}")]
    UnsupportedFormat(String),
    #[error("image is empty")]
    EmptyImage,
    #[error("sketch has no shape pixels")]
    EmptyShape,
    #[error("degenerate arrow at ({x:.1}, {y:.1}): {reason}")]
    DegenerateArrow { x: f64, y: f64, reason: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorClass {
    Shape,
    Load,
    FixX,
    FixY,
    FixXY,
    Mask,
    Background,
}

impl ColorClass {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            ColorClass::Shape => [0, 0, 0],
            ColorClass::Load => [255, 0, 0],
            ColorClass::FixX => [255, 255, 0],
            ColorClass::FixY => [0, 0, 255],
            ColorClass::FixXY => [0, 255, 0],
            ColorClass::Mask => [0, 255, 255],
            ColorClass::Background => [255, 255, 255],
        }
    }

    /// Support flags `(fix_x, fix_y)` for the support colours.
    pub fn support_flags(self) -> Option<(bool, bool)> {
        match self {
            ColorClass::FixX => Some((true, false)),
            ColorClass::FixY => Some((false, true)),
            ColorClass::FixXY => Some((true, true)),
            _ => None,
        }
    }
}

const PALETTE: [ColorClass; 7] = [
    ColorClass::Shape,
    ColorClass::Load,
    ColorClass::FixX,
    ColorClass::FixY,
    ColorClass::FixXY,
    ColorClass::Mask,
    ColorClass::Background,
];

/// Largest per-channel deviation still snapped to a palette colour.
pub const COLOR_TOLERANCE: u8 = 60;

/// Nearest palette class by maximum channel deviation, or background when
/// nothing is within [`COLOR_TOLERANCE`].
pub fn classify_color(rgb: [u8; 3]) -> ColorClass {
    let deviation = |c: ColorClass| {
        c.rgb()
            .iter()
            .zip(rgb)
            .map(|(&a, b)| a.abs_diff(b))
            .max()
            .unwrap_or(0)
    };
    PALETTE
        .into_iter()
        .map(|c| (deviation(c), c))
        .min()
        .filter(|(d, _)| *d <= COLOR_TOLERANCE)
        .map_or(ColorClass::Background, |(_, c)| c)
}

/// 8-bit RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Raster {
    width: u32,
    height: u32,
    pixels: Vec<[u8; 3]>,
}

impl Raster {
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![rgb; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        self.pixels[(y * self.width + x) as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        self.pixels[(y * self.width + x) as usize] = rgb;
    }

    /// Width and height from the PNG header, without decoding pixels.
    pub fn png_dimensions(bytes: &[u8]) -> Result<(u32, u32), SketchError> {
        image::ImageReader::with_format(std::io::Cursor::new(bytes), image::ImageFormat::Png)
            .into_dimensions()
            .map_err(|e| SketchError::UnsupportedFormat(e.to_string()))
    }

    /// Decodes an 8-bit RGB or RGBA PNG; alpha is composited over white.
    pub fn from_png(bytes: &[u8]) -> Result<Self, SketchError> {
        let img = image::load_from_memory_with_format(bytes, image::ImageFormat::Png)
            .map_err(|e| SketchError::UnsupportedFormat(e.to_string()))?;
        let (width, height) = (img.width(), img.height());
        if width == 0 || height == 0 {
            return Err(SketchError::EmptyImage);
        }
        let pixels = match img {
            image::DynamicImage::ImageRgb8(buf) => buf.pixels().map(|p| p.0).collect(),
            image::DynamicImage::ImageRgba8(buf) => buf
                .pixels()
                .map(|p| {
                    let [r, g, b, a] = p.0;
                    let over = |c: u8| {
                        ((u32::from(c) * u32::from(a) + 255 * (255 - u32::from(a)) + 127) / 255) as u8
                    };
                    [over(r), over(g), over(b)]
                })
                .collect(),
            other => {
                return Err(SketchError::UnsupportedFormat(format!(
                    "{:?} (expected 8-bit RGB or RGBA)",
                    other.color()
                )))
            }
        };
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn to_png(&self) -> Vec<u8> {
        let flat: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        let buf = image::RgbImage::from_raw(self.width, self.height, flat)
            .expect("buffer matches dimensions");
        let mut out = std::io::Cursor::new(Vec::new());
        buf.write_to(&mut out, image::ImageFormat::Png)
            .expect("in-memory PNG encoding");
        out.into_inner()
    }
}

/// A 4-connected group of same-class pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub class: ColorClass,
    pub pixels: Vec<(u32, u32)>,
    /// Mean pixel centre, in pixel coordinates.
    pub centroid: (f64, f64),
    /// Unit eigenvector of the largest covariance eigenvalue.
    pub principal_axis: (f64, f64),
    /// Largest over smallest covariance eigenvalue (infinite for a line).
    pub axis_ratio: f64,
}

impl Component {
    fn new(class: ColorClass, pixels: Vec<(u32, u32)>) -> Self {
        let n = pixels.len() as f64;
        let centres = pixels
            .iter()
            .map(|&(x, y)| (f64::from(x) + 0.5, f64::from(y) + 0.5));
        let (sx, sy) = centres.clone().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
        let (cx, cy) = (sx / n, sy / n);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in centres {
            let (dx, dy) = (x - cx, y - cy);
            sxx += dx * dx;
            sxy += dx * dy;
            syy += dy * dy;
        }
        let (sxx, sxy, syy) = (sxx / n, sxy / n, syy / n);
        let mean = 0.5 * (sxx + syy);
        let spread = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
        let (l1, l2) = (mean + spread, mean - spread);
        let theta = 0.5 * (2.0 * sxy).atan2(sxx - syy);
        let axis_ratio = if l2 <= 1e-12 * l1.max(1e-300) {
            if l1 > 0.0 {
                f64::INFINITY
            } else {
                1.0
            }
        } else {
            l1 / l2
        };
        Self {
            class,
            pixels,
            centroid: (cx, cy),
            principal_axis: (theta.cos(), theta.sin()),
            axis_ratio,
        }
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Classified pixels and their connected components.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSketch {
    pub width: u32,
    pub height: u32,
    /// One class per pixel, row-major.
    pub classes: Vec<ColorClass>,
    /// Components of every non-background class, in scan order.
    pub components: Vec<Component>,
}

impl ConstraintSketch {
    pub fn class_at(&self, x: u32, y: u32) -> ColorClass {
        self.classes[(y * self.width + x) as usize]
    }

    pub fn count(&self, class: ColorClass) -> usize {
        self.classes.iter().filter(|&&c| c == class).count()
    }

    pub fn components_of(&self, class: ColorClass) -> impl Iterator<Item = &Component> {
        self.components.iter().filter(move |c| c.class == class)
    }
}

pub fn classify_pixels(raster: &Raster) -> Result<ConstraintSketch, SketchError> {
    let (w, h) = (raster.width, raster.height);
    if w == 0 || h == 0 {
        return Err(SketchError::EmptyImage);
    }
    let classes: Vec<ColorClass> = raster.pixels.iter().map(|&p| classify_color(p)).collect();
    let mut seen = vec![false; classes.len()];
    let mut components = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..classes.len() {
        let class = classes[start];
        if seen[start] || class == ColorClass::Background {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (x, y) = ((i as u32) % w, (i as u32) / w);
            pixels.push((x, y));
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w as usize),
                (y + 1 < h).then(|| i + w as usize),
            ];
            for j in neighbours.into_iter().flatten() {
                if !seen[j] && classes[j] == class {
                    seen[j] = true;
                    queue.push_back(j);
                }
            }
        }
        components.push(Component::new(class, pixels));
    }
    Ok(ConstraintSketch {
        width: w,
        height: h,
        classes,
        components,
    })
}

/// Uniform scaling from pixel coordinates to grid coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CanvasMapping {
    /// Pixels per element.
    pub scale: f64,
    pub offset_x: f64,
    pub offset_y: f64,
}

impl CanvasMapping {
    pub fn new(width: u32, height: u32, dims: GridDims) -> Self {
        let scale = (f64::from(width) / dims.nelx() as f64).min(f64::from(height) / dims.nely() as f64);
        Self {
            scale,
            offset_x: 0.5 * (f64::from(width) - scale * dims.nelx() as f64),
            offset_y: 0.5 * (f64::from(height) - scale * dims.nely() as f64),
        }
    }

    /// Pixel-space point to grid coordinates.
    pub fn to_grid(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.offset_x) / self.scale, (y - self.offset_y) / self.scale)
    }

    pub fn nearest_node(&self, dims: GridDims, x: f64, y: f64) -> usize {
        let (gx, gy) = self.to_grid(x, y);
        let ix = gx.round().clamp(0.0, dims.nelx() as f64) as usize;
        let iy = gy.round().clamp(0.0, dims.nely() as f64) as usize;
        dims.node_at(ix, iy).expect("clamped into grid")
    }

    /// Pixel index range whose centres fall in `[lo, hi)` along one axis.
    fn pixel_span(lo: f64, hi: f64, limit: u32) -> std::ops::Range<u32> {
        let first = (lo - 0.5).ceil().max(0.0) as u32;
        let end = ((hi - 0.5).ceil().max(0.0) as u32).min(limit);
        first.min(end)..end
    }
}

/// Which end of an arrow is the load application point.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrowPoint {
    #[default]
    Tail,
    Tip,
}

impl std::str::FromStr for ArrowPoint {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tail" => Ok(Self::Tail),
            "tip" => Ok(Self::Tip),
            other => Err(format!("expected `tail` or `tip`, got `{other}`")),
        }
    }
}

/// Minimum elongation for a component to count as an arrow.
const MIN_AXIS_RATIO: f64 = 1.5;
const MIN_ARROW_PIXELS: usize = 8;

/// Converts a red component into a unit load.
///
/// Both ends of the principal axis are compared by how many pixels lie in
/// an end window (a quarter of the arrow length, at least 3 px); the heavier
/// end carries the arrowhead. The load direction is the principal axis
/// oriented from tail to tip.
pub fn arrow_to_load(
    component: &Component,
    dims: GridDims,
    mapping: &CanvasMapping,
    point: ArrowPoint,
) -> Result<Load, SketchError> {
    let (cx, cy) = component.centroid;
    let degenerate = |reason: &str| SketchError::DegenerateArrow {
        x: cx,
        y: cy,
        reason: reason.to_string(),
    };
    if component.len() < MIN_ARROW_PIXELS {
        return Err(degenerate("fewer than 8 pixels"));
    }
    if component.axis_ratio < MIN_AXIS_RATIO {
        return Err(degenerate("no dominant axis"));
    }
    let (vx, vy) = component.principal_axis;
    let proj: Vec<f64> = component
        .pixels
        .iter()
        .map(|&(x, y)| (f64::from(x) + 0.5 - cx) * vx + (f64::from(y) + 0.5 - cy) * vy)
        .collect();
    let t_min = proj.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let window = (0.25 * (t_max - t_min)).max(3.0);
    let high = proj.iter().filter(|&&t| t >= t_max - window).count() as i64;
    let low = proj.iter().filter(|&&t| t <= t_min + window).count() as i64;
    if (high - low).abs() <= 1 {
        return Err(degenerate("both ends carry the same mass"));
    }
    let (t_tail, t_tip, sign) = if high > low {
        (t_min, t_max, 1.0)
    } else {
        (t_max, t_min, -1.0)
    };
    let t_point = match point {
        ArrowPoint::Tail => t_tail,
        ArrowPoint::Tip => t_tip,
    };
    let node = mapping.nearest_node(dims, cx + t_point * vx, cy + t_point * vy);
    Load::new(node, sign * vx, sign * vy).map_err(|_| degenerate("zero direction"))
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SketchOptions {
    pub arrow_point: ArrowPoint,
}

/// A problem recovered from a sketch plus any validation issues it has.
#[derive(Clone, Debug, PartialEq)]
pub struct ParsedSketch {
    pub spec: ProblemSpec,
    pub issues: Vec<ValidationIssue>,
}

/// Quantizes a classified sketch onto the element grid.
pub fn sketch_to_problem(
    sketch: &ConstraintSketch,
    dims: GridDims,
    volfrac: f64,
    strength: f64,
    seed: u64,
    opts: &SketchOptions,
) -> Result<ParsedSketch, SketchError> {
    if sketch.count(ColorClass::Shape) == 0 {
        return Err(SketchError::EmptyShape);
    }
    let mapping = CanvasMapping::new(sketch.width, sketch.height, dims);
    let n = dims.element_count();
    let mut shape = vec![false; n];
    let mut mask = vec![false; n];
    for e in 0..n {
        let (ex, ey) = (e % dims.nelx(), e / dims.nelx());
        let x0 = mapping.offset_x + ex as f64 * mapping.scale;
        let y0 = mapping.offset_y + ey as f64 * mapping.scale;
        let xs = CanvasMapping::pixel_span(x0, x0 + mapping.scale, sketch.width);
        let ys = CanvasMapping::pixel_span(y0, y0 + mapping.scale, sketch.height);
        let (mut total, mut marked, mut masked) = (0usize, 0usize, 0usize);
        let mut tally = |class: ColorClass| {
            total += 1;
            if class != ColorClass::Background {
                marked += 1;
            }
            if class == ColorClass::Mask {
                masked += 1;
            }
        };
        if xs.is_empty() || ys.is_empty() {
            // grid finer than the image: sample the pixel under the centre
            let px = ((x0 + 0.5 * mapping.scale) as u32).min(sketch.width - 1);
            let py = ((y0 + 0.5 * mapping.scale) as u32).min(sketch.height - 1);
            tally(sketch.class_at(px, py));
        } else {
            for y in ys {
                for x in xs.clone() {
                    tally(sketch.class_at(x, y));
                }
            }
        }
        shape[e] = 2 * marked > total;
        mask[e] = 2 * masked > total;
    }

    let mut support_flags: BTreeMap<usize, (bool, bool)> = BTreeMap::new();
    for comp in &sketch.components {
        if let Some((fx, fy)) = comp.class.support_flags() {
            let node = mapping.nearest_node(dims, comp.centroid.0, comp.centroid.1);
            let entry = support_flags.entry(node).or_insert((false, false));
            entry.0 |= fx;
            entry.1 |= fy;
        }
    }
    let supports = support_flags
        .into_iter()
        .map(|(node, (fix_x, fix_y))| Support { node, fix_x, fix_y })
        .collect();
    let loads = sketch
        .components_of(ColorClass::Load)
        .map(|c| arrow_to_load(c, dims, &mapping, opts.arrow_point))
        .collect::<Result<Vec<_>, _>>()?;

    let spec = ProblemSpec {
        shape,
        mask,
        loads,
        supports,
        strength,
        seed,
        ..ProblemSpec::new(dims, volfrac)
    };
    let issues = validate_problem(&spec);
    Ok(ParsedSketch { spec, issues })
}

/// Decodes, classifies and quantizes a PNG sketch in one step.
pub fn parse_png(
    bytes: &[u8],
    dims: GridDims,
    volfrac: f64,
    strength: f64,
    seed: u64,
    opts: &SketchOptions,
) -> Result<ParsedSketch, SketchError> {
    let raster = Raster::from_png(bytes)?;
    let sketch = classify_pixels(&raster)?;
    sketch_to_problem(&sketch, dims, volfrac, strength, seed, opts)
}

#[cfg(test)]
mod tests {
    use super::draw::{Mark, VectorSketch};
    use super::*;

    #[test]
    fn palette_snapping() {
        assert_eq!(classify_color([250, 10, 5]), ColorClass::Load);
        assert_eq!(classify_color([0, 255, 0]), ColorClass::FixXY);
        assert_eq!(classify_color([40, 40, 40]), ColorClass::Shape);
        assert_eq!(classify_color([128, 128, 128]), ColorClass::Background);
        assert_eq!(classify_color([20, 230, 240]), ColorClass::Mask);
        assert_eq!(classify_color([255, 255, 255]), ColorClass::Background);
        assert_eq!(classify_color([255, 128, 128]), ColorClass::Background);
    }

    #[test]
    fn white_image_has_no_components() {
        let s = classify_pixels(&Raster::filled(16, 9, [255; 3])).unwrap();
        assert!(s.components.is_empty());
        assert!(s.classes.iter().all(|&c| c == ColorClass::Background));
    }

    #[test]
    fn green_blob_component() {
        let mut r = Raster::filled(10, 10, [255; 3]);
        for (x, y) in [(4, 5), (5, 5), (6, 5), (5, 4), (5, 6)] {
            r.set(x, y, [0, 255, 0]);
        }
        let s = classify_pixels(&r).unwrap();
        assert_eq!(s.components.len(), 1);
        let c = &s.components[0];
        assert_eq!(c.class, ColorClass::FixXY);
        assert_eq!(c.len(), 5);
        assert_eq!(c.centroid, (5.5, 5.5));
    }

    #[test]
    fn diagonal_pixels_are_separate_components() {
        let mut r = Raster::filled(4, 4, [255; 3]);
        r.set(0, 0, [0, 0, 255]);
        r.set(1, 1, [0, 0, 255]);
        assert_eq!(classify_pixels(&r).unwrap().components.len(), 2);
    }

    fn arrow_load(tail: (f64, f64), head: (f64, f64)) -> Result<Load, SketchError> {
        let dims = GridDims::new(16, 16).unwrap();
        let sketch = VectorSketch::new(dims).with(Mark::arrow(tail, head));
        let raster = sketch.render(8);
        let parsed = classify_pixels(&raster).unwrap();
        let comp = parsed.components_of(ColorClass::Load).next().unwrap();
        let mapping = CanvasMapping::new(raster.width(), raster.height(), dims);
        arrow_to_load(comp, dims, &mapping, ArrowPoint::Tail)
    }

    #[test]
    fn horizontal_arrow() {
        let dims = GridDims::new(16, 16).unwrap();
        let load = arrow_load((3.0, 8.0), (11.0, 8.0)).unwrap();
        assert!((load.fx - 1.0).abs() < 0.05 && load.fy.abs() < 0.05);
        assert_eq!(load.node, dims.node_at(3, 8).unwrap());
    }

    #[test]
    fn rotated_arrow_points_down() {
        let dims = GridDims::new(16, 16).unwrap();
        let load = arrow_load((8.0, 3.0), (8.0, 11.0)).unwrap();
        assert!(load.fx.abs() < 0.05 && (load.fy - 1.0).abs() < 0.05);
        assert_eq!(load.node, dims.node_at(8, 3).unwrap());
        let left = arrow_load((12.0, 5.0), (4.0, 5.0)).unwrap();
        assert!((left.fx + 1.0).abs() < 0.05);
        assert_eq!(left.node, dims.node_at(12, 5).unwrap());
    }

    #[test]
    fn disc_is_degenerate_arrow() {
        let dims = GridDims::new(8, 8).unwrap();
        let raster = VectorSketch::new(dims)
            .with(Mark::disc(ColorClass::Load, (4.0, 4.0), 2.0))
            .render(8);
        let parsed = classify_pixels(&raster).unwrap();
        let comp = &parsed.components[0];
        let mapping = CanvasMapping::new(64, 64, dims);
        assert!(matches!(
            arrow_to_load(comp, dims, &mapping, ArrowPoint::Tail),
            Err(SketchError::DegenerateArrow { .. })
        ));
    }

    #[test]
    fn headless_bar_is_degenerate_arrow() {
        let dims = GridDims::new(8, 8).unwrap();
        let raster = VectorSketch::new(dims)
            .with(Mark::rect(ColorClass::Load, (1.0, 3.5), (7.0, 4.5)))
            .render(8);
        let parsed = classify_pixels(&raster).unwrap();
        let mapping = CanvasMapping::new(64, 64, dims);
        assert!(matches!(
            arrow_to_load(&parsed.components[0], dims, &mapping, ArrowPoint::Tail),
            Err(SketchError::DegenerateArrow { .. })
        ));
    }

    #[test]
    fn tip_option_moves_the_node() {
        let dims = GridDims::new(16, 16).unwrap();
        let raster = VectorSketch::new(dims)
            .with(Mark::arrow((3.0, 8.0), (11.0, 8.0)))
            .render(8);
        let parsed = classify_pixels(&raster).unwrap();
        let comp = parsed.components_of(ColorClass::Load).next().unwrap();
        let mapping = CanvasMapping::new(128, 128, dims);
        let tip = arrow_to_load(comp, dims, &mapping, ArrowPoint::Tip).unwrap();
        assert_eq!(tip.node, dims.node_at(11, 8).unwrap());
    }

    #[test]
    fn left_half_square_problem() {
        let dims = GridDims::new(64, 64).unwrap();
        let sketch = VectorSketch::new(dims)
            .with(Mark::rect(ColorClass::Shape, (0.0, 0.0), (32.0, 64.0)))
            .with(Mark::disc(ColorClass::FixXY, (0.0, 0.0), 0.8))
            .with(Mark::arrow((32.0, 32.0), (40.0, 32.0)));
        let raster = sketch.render(4);
        let parsed = sketch_to_problem(
            &classify_pixels(&raster).unwrap(),
            dims,
            0.3,
            0.5,
            7,
            &SketchOptions::default(),
        )
        .unwrap();
        let spec = parsed.spec;
        // the arrow hanging off the right edge adds a few elements
        assert!((2048..2048 + 16).contains(&spec.shape_count()), "{}", spec.shape_count());
        assert_eq!(spec.supports, vec![Support::pinned(0)]);
        assert_eq!(spec.loads.len(), 1);
        assert_eq!(spec.loads[0].node, dims.node_at(32, 32).unwrap());
        assert_eq!((spec.volfrac, spec.strength, spec.seed), (0.3, 0.5, 7));
        // a single pinned point leaves rotation free
        assert_eq!(parsed.issues, vec![ValidationIssue::RigidBodyMotion]);
    }

    #[test]
    fn no_black_pixels_is_empty_shape() {
        let dims = GridDims::new(8, 8).unwrap();
        let sketch = classify_pixels(&Raster::filled(32, 32, [255; 3])).unwrap();
        assert_eq!(
            sketch_to_problem(&sketch, dims, 0.3, 0.0, 0, &SketchOptions::default()),
            Err(SketchError::EmptyShape)
        );
    }

    #[test]
    fn cyan_inside_black_is_mask_subset() {
        let dims = GridDims::new(16, 16).unwrap();
        let sketch = VectorSketch::new(dims)
            .with(Mark::rect(ColorClass::Shape, (2.0, 2.0), (14.0, 14.0)))
            .with(Mark::disc(ColorClass::Mask, (8.0, 8.0), 3.0));
        let parsed = sketch_to_problem(
            &classify_pixels(&sketch.render(6)).unwrap(),
            dims,
            0.5,
            0.0,
            0,
            &SketchOptions::default(),
        )
        .unwrap();
        let spec = parsed.spec;
        assert!(spec.mask_count() > 0);
        assert!(spec.mask.iter().zip(&spec.shape).all(|(&m, &s)| !m || s));
    }

    #[test]
    fn letterboxed_canvas() {
        let dims = GridDims::new(8, 8).unwrap();
        let m = CanvasMapping::new(200, 100, dims);
        assert_eq!(m.scale, 12.5);
        assert_eq!(m.offset_x, 50.0);
        assert_eq!(m.offset_y, 0.0);
        assert_eq!(m.nearest_node(dims, 50.0, 0.0), 0);
    }

    #[test]
    fn rgba_composited_over_white() {
        let mut img = image::RgbaImage::new(2, 1);
        img.put_pixel(0, 0, image::Rgba([0, 0, 0, 0]));
        img.put_pixel(1, 0, image::Rgba([255, 0, 0, 255]));
        let mut png = std::io::Cursor::new(Vec::new());
        img.write_to(&mut png, image::ImageFormat::Png).unwrap();
        let r = Raster::from_png(png.get_ref()).unwrap();
        assert_eq!(r.get(0, 0), [255, 255, 255]);
        assert_eq!(r.get(1, 0), [255, 0, 0]);
    }

    #[test]
    fn grayscale_png_rejected() {
        let img = image::GrayImage::new(2, 2);
        let mut png = std::io::Cursor::new(Vec::new());
        img.write_to(&mut png, image::ImageFormat::Png).unwrap();
        assert!(matches!(Raster::from_png(png.get_ref()), Err(SketchError::UnsupportedFormat(_))));
        assert!(matches!(Raster::from_png(b"not a png"), Err(SketchError::UnsupportedFormat(_))));
    }

    #[test]
    fn png_round_trip() {
        let dims = GridDims::new(8, 8).unwrap();
        let raster = VectorSketch::new(dims)
            .with(Mark::rect(ColorClass::Shape, (0.0, 0.0), (8.0, 4.0)))
            .render(3);
        assert_eq!(Raster::from_png(&raster.to_png()).unwrap(), raster);
        assert_eq!(Raster::png_dimensions(&raster.to_png()).unwrap(), (24, 24));
        assert!(Raster::png_dimensions(b"GIF89a").is_err());
    }
}
