//! Trains on oracle data, then compares learned, oracle and coverage
//! planners on held-out floorplans.
//!
//! `cargo run --release --example compare_planners -- [eval scenarios]`

use std::sync::Arc;

use semsearch::eval::{collect_dataset, curate, run_suite, CurationConfig, EvalConfig};
use semsearch::expert::OraclePolicy;
use semsearch::learn::{train_all, TrainConfig};
use semsearch::planner::PlannerMode;
use semsearch::scenario::{generate_scenario, GeneratorConfig};

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let gen = GeneratorConfig::default();
    let cfg = EvalConfig::default();
    let train: Vec<_> = (0..20).map(|s| Arc::new(generate_scenario(s, &gen).unwrap())).collect();
    let pool: Vec<_> = (1000..1000 + 2 * n).map(|s| Arc::new(generate_scenario(s, &gen).unwrap())).collect();
    let mut test = curate(pool, &CurationConfig::default(), &cfg);
    test.truncate(n as usize);

    let ds = collect_dataset(&train, &OraclePolicy::RoomTypes(cfg.oracle.clone()), &cfg);
    let tc = TrainConfig {
        seeds: (0..3).collect(),
        ..TrainConfig::default()
    };
    let models: Vec<_> = train_all(&ds, &tc).unwrap().into_iter().map(|o| (o.seed, o.model)).collect();
    let modes = [PlannerMode::Coverage, PlannerMode::Learned, PlannerMode::OraclePriorities];
    let report = run_suite(&test, &modes, &models, &cfg);
    println!("{:<18} {:>6} {:>8} {:>7} {:>7} {:>12}", "mode", "found", "medPLR", "PLR<1", "PLR<1.3", "SPL");
    for m in &report.summary.modes {
        let med = m.plr.as_ref().map_or(f64::NAN, |b| b.median);
        println!(
            "{:<18} {:>3}/{:<2} {:>8.3} {:>7.2} {:>7.2} {:>6.3}±{:.3}",
            m.mode.as_str(),
            m.found,
            m.episodes,
            med,
            m.plr_below_1.unwrap_or(f64::NAN),
            m.plr_below_1_3.unwrap_or(f64::NAN),
            m.spl_mean,
            m.spl_std
        );
    }
}
