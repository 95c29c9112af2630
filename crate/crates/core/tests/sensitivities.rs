use topostudio::fea::{analyze, compliance_sensitivities, SolveOptions, SolverMethod};
use topostudio::fixtures;
use topostudio::DensityField;

#[test]
fn analytic_matches_central_differences() {
    let spec = fixtures::cantilever(6, 4, 0.5);
    let opts = SolveOptions {
        method: SolverMethod::Direct,
        ..Default::default()
    };
    let values: Vec<f64> = (0..24).map(|e| 0.3 + 0.6 * ((e * 7 % 13) as f64 / 12.0)).collect();
    let rho = DensityField::new(spec.dims, values.clone()).unwrap();
    let sol = analyze(&rho, &spec, &opts).unwrap();
    let dc = compliance_sensitivities(&rho, &spec, &sol);
    let h = 1e-5;
    let mut checked = 0;
    for e in 0..24 {
        if dc[e].abs() <= 1e-10 {
            continue;
        }
        let at = |delta: f64| {
            let mut v = values.clone();
            v[e] += delta;
            analyze(&DensityField::new(spec.dims, v).unwrap(), &spec, &opts)
                .unwrap()
                .compliance
        };
        let fd = (at(h) - at(-h)) / (2.0 * h);
        assert!((dc[e] - fd).abs() <= 1e-4 * fd.abs(), "element {e}: {} vs {fd}", dc[e]);
        checked += 1;
    }
    assert!(checked > 20);
}

#[test]
fn zero_energy_elements_have_zero_sensitivity() {
    // without loads nothing is strained
    let mut spec = fixtures::cantilever(3, 2, 0.5);
    spec.loads.clear();
    let rho = DensityField::uniform(spec.dims, 0.5).unwrap();
    let sol = analyze(&rho, &spec, &SolveOptions::default()).unwrap();
    assert!(compliance_sensitivities(&rho, &spec, &sol).iter().all(|&v| v == 0.0));
}
