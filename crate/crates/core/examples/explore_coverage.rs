//! Explores a targetless floorplan with the coverage planner and reports
//! how much of the reachable free space was seen.

use std::sync::Arc;

use semsearch::episode::{Episode, EpisodeConfig, PrioritySource};
use semsearch::scenario::{generate_scenario, GeneratorConfig};

fn main() {
    let s = generate_scenario(3, &GeneratorConfig::default()).expect("generator settles");
    let world = Arc::new(s.without_target().0);
    let mut e = Episode::new(world.clone(), EpisodeConfig::default(), PrioritySource::Coverage, None).unwrap();
    let mut replans = 0;
    let outcome = e
        .run_with(|r| {
            if r.trace.replanned {
                replans += 1;
            }
        })
        .unwrap();
    let reachable = world.free_cells().count();
    let seen = world.free_cells().filter(|&c| e.belief().is_free(c)).count();
    println!("outcome {outcome:?} after {} steps, {replans} replans", e.steps());
    println!("traveled {:.1} m, graph nodes {}", e.belief().traveled(), e.graph().nodes().len());
    println!("free cells seen {seen}/{reachable}");
}
