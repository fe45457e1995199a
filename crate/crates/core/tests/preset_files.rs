//! The preset files checked into presets/ must stay identical to the
//! built-in definitions the binary and tests use.

use manetsim::scenario::{preset, ScenarioSpec, PRESET_NAMES};

#[test]
fn committed_preset_files_match_builtins() {
    let presets_dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("..")
        .join("..")
        .join("presets");
    for name in PRESET_NAMES {
        let path = presets_dir.join(format!("{name}.toml"));
        let text = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let parsed = ScenarioSpec::from_toml(&text).unwrap();
        assert_eq!(parsed, preset(name).unwrap(), "{name}");
    }
}
