use std::path::Path;

use densify_core::harness::Scenario;

#[test]
fn shipped_scenarios_load_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let s = Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            s.validate().unwrap();
            s.reference().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
