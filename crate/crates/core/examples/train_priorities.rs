//! Fits priority weights to oracle interventions and prints the strongest
//! features of each seed.

use std::sync::Arc;

use semsearch::eval::{collect_dataset, EvalConfig};
use semsearch::expert::{OracleConfig, OraclePolicy};
use semsearch::learn::{train_all, TrainConfig};
use semsearch::scenario::{generate_scenario, GeneratorConfig};

fn main() {
    let gen = GeneratorConfig::default();
    let scenarios: Vec<_> = (0..10).map(|s| Arc::new(generate_scenario(s, &gen).unwrap())).collect();
    let ds = collect_dataset(&scenarios, &OraclePolicy::RoomTypes(OracleConfig::default()), &EvalConfig::default());
    let cfg = TrainConfig {
        seeds: (0..3).collect(),
        ..TrainConfig::default()
    };
    let mut names = ds.header.class_names.clone();
    names.push("novelty".into());
    for o in train_all(&ds, &cfg).expect("dataset has choices") {
        let mut w: Vec<(&String, f64)> = names.iter().zip(o.model.w.iter().copied()).collect();
        w.sort_by(|a, b| b.1.total_cmp(&a.1));
        let top: Vec<String> = w.iter().take(5).map(|(n, v)| format!("{n}={v:.2}")).collect();
        println!(
            "seed {}: nll {:.1} -> {:.1}, w_I {:.3}, top {}",
            o.seed,
            o.initial_nll,
            o.final_nll,
            o.model.w_coverage,
            top.join(" ")
        );
    }
}
