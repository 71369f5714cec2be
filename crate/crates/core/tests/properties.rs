mod common;

use proptest::prelude::*;

use semsearch::expert::{choice_probability, sigma_rho};
use semsearch::planner::{planner_priorities, tour_cost};
use semsearch::semantics::{feature_vector, priority, FeatureConfig, PriorityModel};
use semsearch::sim::{BeliefDelta, WorldBelief, FREE, OCCUPIED};
use semsearch::topo::Frontier;

fn latency_sum(order: &[usize], d: &[Vec<f64>], p: &[f64]) -> f64 {
    let mut t = 0.0;
    let mut sum = 0.0;
    for w in order.windows(2) {
        t += d[w[0]][w[1]];
        sum += p[w[1]] * t;
    }
    sum
}

proptest! {
    #[test]
    fn priority_is_linear_in_features(
        w in prop::collection::vec(0.0..=1.0f64, 8),
        a in prop::collection::vec(0.0..=1.0f64, 8),
        b in prop::collection::vec(0.0..=1.0f64, 8),
        t in 0.0..=1.0f64,
    ) {
        let m = PriorityModel { w, w_coverage: 0.0 };
        let mix: Vec<f64> = a.iter().zip(&b).map(|(x, y)| t * x + (1.0 - t) * y).collect();
        let lhs = priority(&m, &mix);
        let rhs = t * priority(&m, &a) + (1.0 - t) * priority(&m, &b);
        prop_assert!((lhs - rhs).abs() < 1e-12);
        prop_assert!(lhs >= 0.0 && lhs <= 8.0);
    }

    #[test]
    fn sigma_rho_identities(x in -50.0..50.0f64, rho in 0.0..0.5f64) {
        let s = sigma_rho(x, rho);
        prop_assert!(s >= rho - 1e-15 && s <= 1.0 - rho + 1e-15);
        prop_assert!((s + sigma_rho(-x, rho) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn swapping_choice_complements(
        e in prop::collection::vec(0.0..1.0f64, 4),
        f in prop::collection::vec(0.0..1.0f64, 4),
        w in prop::collection::vec(0.0..1.0f64, 4),
        beta in 0.1..30.0f64,
        rho in 0.0..0.5f64,
    ) {
        let p = choice_probability(&e, &f, &w, beta, rho);
        let q = choice_probability(&f, &e, &w, beta, rho);
        prop_assert!((p + q - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tour_cost_is_latency_sum(
        pts in prop::collection::vec((0.0..10.0f64, 0.0..10.0f64), 2..9),
        p in prop::collection::vec(0.0..2.0f64, 9),
        perm_seed in any::<u64>(),
    ) {
        let n = pts.len();
        let d: Vec<Vec<f64>> = pts.iter()
            .map(|a| pts.iter().map(|b| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()).collect())
            .collect();
        let mut rest: Vec<usize> = (1..n).collect();
        let mut s = perm_seed;
        for i in (1..rest.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            rest.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut order = vec![0];
        order.extend(rest);
        let c = tour_cost(&order, &d, &p[..n]);
        prop_assert!((c - latency_sum(&order, &d, &p[..n])).abs() < 1e-9);
    }

    #[test]
    fn planner_priority_bounds(
        p in prop::collection::vec(0.0..5.0f64, 1..10),
        alpha in 0.0..=1.0f64,
    ) {
        let gains: Vec<f64> = p.iter().map(|x| 1.0 + x).collect();
        let out = planner_priorities(&p, &gains, alpha);
        let p_max = p.iter().copied().fold(0.0, f64::max);
        for ((o, g), pi) in out.iter().zip(&gains).zip(&p) {
            prop_assert!(*o >= alpha * g - 1e-12 && *o <= (1.0 + alpha) * g + 1e-12);
            if *pi == p_max && p_max > 0.0 {
                prop_assert!((o - (1.0 + alpha) * g).abs() < 1e-12);
            }
        }
    }
}

/// Reveals the whole map, then observes objects one at a time. No blended
/// class component of any free cell may drop.
#[test]
fn semantic_features_never_decrease_as_objects_appear() {
    let cfg = FeatureConfig::default();
    for seed in 0..4 {
        let s = common::small(seed);
        let mut b = WorldBelief::new(&s);
        let cells = s
            .occupancy
            .cells()
            .map(|c| (c, if s.occupancy[c] { OCCUPIED } else { FREE }, s.region_at(c)))
            .collect();
        b.integrate(&s, &BeliefDelta { cells, objects: vec![] });
        let probes: Vec<Frontier> = s
            .free_cells()
            .step_by(37)
            .enumerate()
            .map(|(i, c)| Frontier {
                node_id: i as u32,
                cell: c,
                region_id: s.region_at(c).unwrap(),
                coverage_gain: 1.0,
            })
            .collect();
        let classes = s.class_names.len();
        let feats = |b: &WorldBelief| -> Vec<Vec<f64>> {
            probes.iter().map(|f| feature_vector(b, f, classes, 6.0, &cfg).semantic).collect()
        };
        let mut before = feats(&b);
        let mut order: Vec<usize> = (0..s.objects.len()).collect();
        order.reverse();
        for i in order {
            b.integrate(&s, &BeliefDelta { cells: vec![], objects: vec![i] });
            let after = feats(&b);
            for (x, y) in before.iter().flatten().zip(after.iter().flatten()) {
                assert!(y >= x, "seed {seed}: component fell from {x} to {y}");
            }
            for v in after.iter().flatten() {
                assert!([0.0, 0.3, 0.7, 1.0].iter().any(|a| (v - a).abs() < 1e-12));
            }
            before = after;
        }
        assert!(!probes.is_empty());
    }
}
