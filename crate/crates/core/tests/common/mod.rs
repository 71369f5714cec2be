#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::Arc;

use semsearch::scenario::{generate_scenario, load_scenario_dir, GeneratorConfig, Scenario};

pub fn fixture_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn fixtures() -> Vec<Arc<Scenario>> {
    load_scenario_dir(fixture_dir())
        .expect("fixtures load")
        .into_iter()
        .map(Arc::new)
        .collect()
}

pub fn small_config() -> GeneratorConfig {
    GeneratorConfig {
        grid_size: 60,
        min_room_side: 9,
        ..GeneratorConfig::default()
    }
}

pub fn small(seed: u64) -> Arc<Scenario> {
    Arc::new(generate_scenario(seed, &small_config()).expect("generator settles"))
}
