use topostudio::fea::{analyze, SolveOptions};
use topostudio::simp::{optimize, optimize_with, uniform_start, OcParams};
use topostudio::{fixtures, GridDims, Load, ProblemSpec, Support};

fn params() -> OcParams {
    OcParams::default()
}

#[test]
fn volume_contract_on_reference_problems() {
    for name in ["cantilever", "task1", "task2", "task3"] {
        let spec = fixtures::by_name(name).unwrap();
        let res = optimize(&spec, &params(), None).unwrap();
        assert!(res.converged, "{name} did not converge in {}", res.iterations);
        assert!(res.iterations <= 200);
        assert!((res.achieved_volfrac - spec.volfrac).abs() <= 1e-3, "{name}: {}", res.achieved_volfrac);
    }
}

#[test]
fn optimized_beats_uniform_start() {
    for name in ["cantilever", "task1_masked", "chair", "gripper", "wall_hook"] {
        let spec = fixtures::by_name(name).unwrap();
        let start = uniform_start(&spec).unwrap();
        let c0 = analyze(&start, &spec, &SolveOptions::default()).unwrap().compliance;
        let res = optimize(&spec, &params(), None).unwrap();
        assert!(res.compliance <= c0, "{name}: {} > {c0}", res.compliance);
    }
}

#[test]
fn compliance_settles_after_five_iterations() {
    let spec = fixtures::cantilever(60, 20, 0.5);
    let mut history = Vec::new();
    optimize_with(&spec, &params(), None, |rec| history.push(rec.compliance)).unwrap();
    for (i, w) in history.windows(2).enumerate().skip(5) {
        assert!(w[1] <= w[0] * 1.01, "iteration {}: {} -> {}", i + 2, w[0], w[1]);
    }
}

#[test]
fn symmetric_problem_gives_symmetric_layout() {
    let d = GridDims::new(32, 16).unwrap();
    let node = |ix, iy| d.node_at(ix, iy).unwrap();
    let mut spec = ProblemSpec::new(d, 0.3);
    spec.supports = vec![Support::pinned(node(0, 16)), Support::pinned(node(32, 16))];
    spec.loads = vec![Load::new(node(16, 0), 0.0, 1.0).unwrap()];
    let res = optimize(&spec, &params(), None).unwrap();
    let v = res.density.values();
    for ey in 0..16 {
        for ex in 0..16 {
            let (a, b) = (v[ey * 32 + ex], v[ey * 32 + 31 - ex]);
            assert!((a - b).abs() <= 1e-6, "({ex},{ey}): {a} vs {b}");
        }
    }
}

#[test]
fn mask_costs_stiffness() {
    let free = fixtures::task1();
    let mut masked = free.clone();
    // 10% of the shape: a band along the bottom edge between the supports
    let d = free.dims;
    let target = d.element_count() / 10;
    let mut count = 0;
    for e in (0..d.element_count()).rev() {
        let (ex, _) = (e % d.nelx(), e / d.nelx());
        if count < target && (8..56).contains(&ex) {
            masked.mask[e] = true;
            count += 1;
        }
    }
    assert!((masked.mask_count() as f64 / masked.shape_count() as f64 - 0.1).abs() < 0.01);
    let mut seen = 0;
    let with_mask = optimize_with(&masked, &params(), None, |rec| {
        seen += 1;
        for (e, &m) in masked.mask.iter().enumerate() {
            if m {
                assert_eq!(rec.density[e], 1.0);
            }
        }
    })
    .unwrap();
    let without = optimize(&free, &params(), None).unwrap();
    assert!(seen > 1);
    assert!(with_mask.compliance >= without.compliance, "{} < {}", with_mask.compliance, without.compliance);
}

#[test]
fn bitwise_deterministic() {
    let spec = fixtures::task3();
    let p = OcParams {
        max_outer_iterations: 20,
        ..params()
    };
    assert_eq!(optimize(&spec, &p, None).unwrap(), optimize(&spec, &p, None).unwrap());
}
