//! Reference problems shipped with the crate.
//!
//! The `task*` problems are small analogues of classic benchmark setups
//! (a simply supported beam, a two-load bridge and a shape-restricted
//! bracket); `chair`, `gripper` and `wall_hook` exercise masks and
//! non-rectangular design regions. The JSON copies under `fixtures/` are
//! generated from these builders.

use crate::domain::{GridDims, Load, ProblemSpec, Support};

/// Names accepted by [`by_name`].
pub const NAMES: &[&str] = &[
    "cantilever",
    "cantilever64",
    "task1",
    "task2",
    "task3",
    "task1_masked",
    "task2_masked",
    "task3_masked",
    "chair",
    "gripper",
    "wall_hook",
];

pub fn by_name(name: &str) -> Option<ProblemSpec> {
    Some(match name {
        "cantilever" => cantilever(60, 20, 0.5),
        "cantilever64" => cantilever(64, 64, 0.4),
        "task1" => task1(),
        "task2" => task2(),
        "task3" => task3(),
        "task1_masked" => with_mask(task1(), mask_rect(task1().dims, 28, 0, 36, 2)),
        "task2_masked" => with_mask(task2(), mask_rect(task2().dims, 0, 28, 6, 32)),
        "task3_masked" => with_mask(task3(), mask_rect(task3().dims, 0, 0, 20, 3)),
        "chair" => chair(),
        "gripper" => gripper(),
        "wall_hook" => wall_hook(),
        _ => return None,
    })
}

fn dims(nelx: usize, nely: usize) -> GridDims {
    GridDims::new(nelx, nely).expect("fixture dims are positive")
}

fn node(d: GridDims, ix: usize, iy: usize) -> usize {
    d.node_at(ix, iy).expect("fixture node inside grid")
}

fn load(d: GridDims, ix: usize, iy: usize, fx: f64, fy: f64) -> Load {
    Load::new(node(d, ix, iy), fx, fy).expect("fixture load is non-zero")
}

fn roller_y(d: GridDims, ix: usize, iy: usize) -> Support {
    Support {
        node: node(d, ix, iy),
        fix_x: false,
        fix_y: true,
    }
}

/// Rectangle of elements `[x0, x1) × [y0, y1)`.
fn mask_rect(d: GridDims, x0: usize, y0: usize, x1: usize, y1: usize) -> Vec<bool> {
    (0..d.element_count())
        .map(|e| {
            let (ex, ey) = (e % d.nelx(), e / d.nelx());
            (x0..x1).contains(&ex) && (y0..y1).contains(&ey)
        })
        .collect()
}

fn with_mask(mut spec: ProblemSpec, mask: Vec<bool>) -> ProblemSpec {
    spec.mask = mask.iter().zip(&spec.shape).map(|(&m, &s)| m && s).collect();
    spec
}

/// Left edge clamped, unit downward load at the middle of the right edge.
pub fn cantilever(nelx: usize, nely: usize, volfrac: f64) -> ProblemSpec {
    let d = dims(nelx, nely);
    let mut spec = ProblemSpec::new(d, volfrac);
    spec.supports = (0..=nely).map(|iy| Support::pinned(node(d, 0, iy))).collect();
    spec.loads = vec![load(d, nelx, nely / 2, 0.0, 1.0)];
    spec
}

/// Simply supported beam with a central top load and an extra pinned point
/// on the far left of the top edge.
pub fn task1() -> ProblemSpec {
    let d = dims(64, 32);
    let mut spec = ProblemSpec::new(d, 0.3);
    spec.supports = vec![
        Support::pinned(node(d, 0, 32)),
        roller_y(d, 64, 32),
        Support::pinned(node(d, 0, 0)),
    ];
    spec.loads = vec![load(d, 32, 0, 0.0, 1.0)];
    spec
}

/// Bridge with two top loads, pinned bottom corners.
pub fn task2() -> ProblemSpec {
    let d = dims(64, 32);
    let mut spec = ProblemSpec::new(d, 0.2);
    spec.supports = vec![Support::pinned(node(d, 0, 32)), Support::pinned(node(d, 64, 32))];
    spec.loads = vec![load(d, 20, 0, 0.0, 1.0), load(d, 44, 0, 0.0, 1.0)];
    spec
}

/// L-shaped wall bracket: left edge clamped, the lower right quadrant is
/// outside the part, load at the lower corner of the arm tip.
pub fn task3() -> ProblemSpec {
    let d = dims(48, 48);
    let mut spec = ProblemSpec::new(d, 0.2);
    spec.shape = (0..d.element_count())
        .map(|e| {
            let (ex, ey) = (e % 48, e / 48);
            ex < 16 || ey < 24
        })
        .collect();
    spec.supports = (0..=48).map(|iy| Support::pinned(node(d, 0, iy))).collect();
    spec.loads = vec![load(d, 48, 24, 0.0, 1.0)];
    spec
}

/// Chair side profile: backrest column plus seat, seat surface preserved,
/// loaded on the seat and pushed back on the backrest.
pub fn chair() -> ProblemSpec {
    let d = dims(48, 48);
    let mut spec = ProblemSpec::new(d, 0.35);
    spec.shape = (0..d.element_count())
        .map(|e| {
            let (ex, ey) = (e % 48, e / 48);
            ex < 10 || ey >= 20
        })
        .collect();
    spec.mask = mask_rect(d, 10, 20, 48, 23);
    spec.supports = vec![
        Support::pinned(node(d, 2, 48)),
        Support::pinned(node(d, 8, 48)),
        Support::pinned(node(d, 40, 48)),
        Support::pinned(node(d, 46, 48)),
    ];
    spec.loads = vec![
        load(d, 30, 20, 0.0, 1.0),
        load(d, 0, 4, -1.0, 0.0),
    ];
    spec
}

/// Gripper finger: base clamped, contact pad preserved, squeezed sideways at
/// the tip.
pub fn gripper() -> ProblemSpec {
    let d = dims(32, 64);
    let mut spec = ProblemSpec::new(d, 0.4);
    spec.shape = (0..d.element_count())
        .map(|e| {
            let (ex, ey) = (e % 32, e / 32);
            // tapering finger: width shrinks from 32 at the base to 12 at the tip
            let width = 12 + (20 * ey) / 64;
            ex < width
        })
        .collect();
    spec.mask = mask_rect(d, 9, 2, 12, 12);
    spec.supports = (0..=31).map(|ix| Support::pinned(node(d, ix, 64))).collect();
    spec.loads = vec![load(d, 12, 4, -1.0, 0.0), load(d, 12, 10, -1.0, 0.0)];
    spec
}

/// Wall hook: wall-mounted on the left, load at the hook tip, outer contour
/// of the hook preserved.
pub fn wall_hook() -> ProblemSpec {
    let d = dims(48, 32);
    let mut spec = ProblemSpec::new(d, 0.5);
    let inside = |ex: usize, ey: usize| ex < 48 && ey < 32 && (ey >= 20 || ex < 8 || (ex >= 40 && ey >= 8));
    spec.shape = (0..d.element_count())
        .map(|e| inside(e % 48, e / 48))
        .collect();
    // contour: shape elements with a 4-neighbour outside the shape or grid
    spec.mask = (0..d.element_count())
        .map(|e| {
            let (ex, ey) = (e % 48, e / 48);
            inside(ex, ey)
                && (ex == 0
                    || ey == 0
                    || ex == 47
                    || ey == 31
                    || !inside(ex - 1, ey)
                    || !inside(ex + 1, ey)
                    || !inside(ex, ey - 1)
                    || !inside(ex, ey + 1))
        })
        .collect();
    spec.supports = (0..=32).map(|iy| Support::pinned(node(d, 0, iy))).collect();
    spec.loads = vec![load(d, 44, 8, 0.0, 1.0)];
    spec
}
