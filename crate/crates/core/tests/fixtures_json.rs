//! The JSON copies under `fixtures/` must match the builders.
//! Regenerate with `UPDATE_FIXTURES=1 cargo test --test fixtures_json`.

use std::path::PathBuf;

use topostudio::{fixtures, ProblemSpec};

fn path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(format!("{name}.json"))
}

#[test]
fn json_fixtures_in_sync() {
    let update = std::env::var_os("UPDATE_FIXTURES").is_some();
    for name in fixtures::NAMES {
        let spec = fixtures::by_name(name).unwrap();
        let file = path(name);
        if update {
            std::fs::write(&file, serde_json::to_string(&spec).unwrap() + "\n").unwrap();
        }
        let text = std::fs::read_to_string(&file).unwrap_or_else(|e| panic!("{}: {e}", file.display()));
        let parsed: ProblemSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(parsed, spec, "{name}");
    }
}

proptest::proptest! {
    // stored density.json files are reloaded as warm starts, so the text
    // form must reproduce every bit
    #[test]
    fn density_json_round_trips_exactly(bits in proptest::collection::vec(0u64..(1 << 62), 12)) {
        let dims = topostudio::GridDims::new(4, 3).unwrap();
        let values: Vec<f64> = bits.iter().map(|&b| (f64::from_bits(b) % 1.0).abs()).collect();
        let field = topostudio::DensityField::new(dims, values).unwrap();
        let text = serde_json::to_string(&field).unwrap();
        let back: topostudio::DensityField = serde_json::from_str(&text).unwrap();
        proptest::prop_assert_eq!(back, field);
    }
}
