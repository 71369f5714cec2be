//! Runs the room-type oracle over a few floorplans and writes the resulting
//! intervention dataset as JSON lines.
//!
//! `cargo run --release --example collect_interventions -- [out.jsonl]`

use std::sync::Arc;

use semsearch::eval::{collect_dataset, EvalConfig};
use semsearch::expert::{OracleConfig, OraclePolicy};
use semsearch::scenario::{generate_scenario, GeneratorConfig};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "interventions.jsonl".into());
    let gen = GeneratorConfig::default();
    let scenarios: Vec<_> = (0..5).map(|s| Arc::new(generate_scenario(s, &gen).unwrap())).collect();
    let oracle = OraclePolicy::RoomTypes(OracleConfig::default());
    let ds = collect_dataset(&scenarios, &oracle, &EvalConfig::default());
    for s in &scenarios {
        let n = ds.records.iter().filter(|r| r.scenario_id == s.id).count();
        println!("{}: {n} interventions", s.id);
    }
    println!("{} records, {} pairs, hash {}", ds.records.len(), ds.pair_count(), &ds.content_hash()[..12]);
    ds.save(&out).expect("dataset written");
    println!("wrote {out}");
}
