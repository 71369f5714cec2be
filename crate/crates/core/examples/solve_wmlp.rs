//! Solves a random weighted minimum-latency instance with LNS and compares
//! against exhaustive search and the greedy start.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semsearch::planner::{greedy_tour, solve_exact, solve_lns, tour_cost, LnsConfig};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 9;
    let pts: Vec<(f64, f64)> = (0..n).map(|_| (rng.gen_range(0.0..10.0), rng.gen_range(0.0..10.0))).collect();
    let d: Vec<Vec<f64>> = pts
        .iter()
        .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
        .collect();
    let mut p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
    p[0] = 0.0;

    let greedy = greedy_tour(&d, &p);
    let lns = solve_lns(&d, &p, &LnsConfig::default(), &mut rng, None);
    let exact = solve_exact(&d, &p);
    println!("greedy {:?} cost {:.3}", greedy, tour_cost(&greedy, &d, &p));
    println!("lns    {:?} cost {:.3}", lns.order, lns.cost);
    println!("exact  {:?} cost {:.3}", exact.order, exact.cost);
    assert!((tour_cost(&lns.order, &d, &p) - lns.cost).abs() < 1e-9);
}
