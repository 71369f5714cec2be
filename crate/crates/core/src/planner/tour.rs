//! Weighted minimum-latency tours over a small distance matrix.
//!
//! Index 0 of the matrix is the robot; indices `1..n` are frontiers. A tour
//! visits every index once starting at 0 and its cost is
//! `sum_i P(T(i)) * latency(T(i))`, where the latency of a node is the path
//! length from the robot to it along the tour.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub cost: f64,
}

impl Tour {
    pub fn new(order: Vec<usize>, d: &[Vec<f64>], p: &[f64]) -> Self {
        let cost = tour_cost(&order, d, p);
        Self { order, cost }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LnsConfig {
    pub max_iters: usize,
    /// Largest share of the tour removed in one destroy step.
    pub destroy_fraction_max: f64,
    /// Wall-clock cap per solve; `None` makes results depend only on the seed.
    pub time_budget_ms: Option<u64>,
}

impl Default for LnsConfig {
    fn default() -> Self {
        Self {
            max_iters: 200,
            destroy_fraction_max: 0.3,
            time_budget_ms: Some(50),
        }
    }
}

pub fn tour_cost(order: &[usize], d: &[Vec<f64>], p: &[f64]) -> f64 {
    let mut latency = 0.0;
    let mut cost = 0.0;
    for w in order.windows(2) {
        latency += d[w[0]][w[1]];
        cost += p[w[1]] * latency;
    }
    cost
}

/// Running sums over a tour used for O(1) insertion deltas.
struct Prefix {
    /// Arrival latency at each position.
    latency: Vec<f64>,
    /// Sum of priorities from each position to the end.
    suffix_p: Vec<f64>,
}

impl Prefix {
    fn new(order: &[usize], d: &[Vec<f64>], p: &[f64]) -> Self {
        let n = order.len();
        let mut latency = vec![0.0; n];
        for i in 1..n {
            latency[i] = latency[i - 1] + d[order[i - 1]][order[i]];
        }
        let mut suffix_p = vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix_p[i] = suffix_p[i + 1] + p[order[i]];
        }
        Self { latency, suffix_p }
    }
}

/// Position (1..=len) whose insertion of `x` raises the cost least, and the
/// increase. Ties go to the earliest position.
fn cheapest_position(order: &[usize], x: usize, d: &[Vec<f64>], p: &[f64]) -> (usize, f64) {
    let pre = Prefix::new(order, d, p);
    let mut best = (order.len(), f64::INFINITY);
    for pos in 1..=order.len() {
        let a = order[pos - 1];
        let arrive = pre.latency[pos - 1] + d[a][x];
        let delta = if pos < order.len() {
            let b = order[pos];
            let detour = d[a][x] + d[x][b] - d[a][b];
            p[x] * arrive + detour * pre.suffix_p[pos]
        } else {
            p[x] * arrive
        };
        if delta < best.1 {
            best = (pos, delta);
        }
    }
    best
}

pub(crate) fn insert_cheapest(order: &mut Vec<usize>, x: usize, d: &[Vec<f64>], p: &[f64]) {
    let (pos, _) = cheapest_position(order, x, d, p);
    order.insert(pos, x);
}

/// Inserts frontiers by decreasing priority (ties by index), each at its
/// cheapest position.
pub fn greedy_tour(d: &[Vec<f64>], p: &[f64]) -> Vec<usize> {
    let mut rest: Vec<usize> = (1..d.len()).collect();
    rest.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
    let mut order = vec![0];
    for x in rest {
        insert_cheapest(&mut order, x, d, p);
    }
    order
}

/// Reverses tour segments while any reversal lowers the cost. Moves are
/// scanned in lexicographic `(i, j)` order and the first improving one is
/// applied. Assumes a symmetric matrix.
pub fn two_opt(order: &mut [usize], d: &[Vec<f64>], p: &[f64]) {
    let n = order.len();
    if n < 3 {
        return;
    }
    let mut improved = true;
    while improved {
        improved = false;
        let pre = Prefix::new(order, d, p);
        'scan: for i in 1..n - 1 {
            for j in i + 1..n {
                if reversal_gain(order, &pre, i, j, d, p) > 1e-12 {
                    order[i..=j].reverse();
                    improved = true;
                    break 'scan;
                }
            }
        }
    }
}

/// Cost decrease from reversing `order[i..=j]`.
fn reversal_gain(order: &[usize], pre: &Prefix, i: usize, j: usize, d: &[Vec<f64>], p: &[f64]) -> f64 {
    let a = order[i - 1];
    let start = pre.latency[i - 1];
    let mut old = 0.0;
    for k in i..=j {
        old += p[order[k]] * pre.latency[k];
    }
    let mut new = 0.0;
    let mut lat = start + d[a][order[j]];
    new += p[order[j]] * lat;
    for k in (i..j).rev() {
        lat += d[order[k + 1]][order[k]];
        new += p[order[k]] * lat;
    }
    let shift = if j + 1 < order.len() {
        let b = order[j + 1];
        (lat + d[order[i]][b]) - (pre.latency[j] + d[order[j]][b])
    } else {
        0.0
    };
    old - new - shift * pre.suffix_p[j + 1]
}

/// Whether any single segment reversal lowers the cost.
pub fn is_two_opt_optimal(order: &[usize], d: &[Vec<f64>], p: &[f64]) -> bool {
    let base = tour_cost(order, d, p);
    let n = order.len();
    for i in 1..n.saturating_sub(1) {
        for j in i + 1..n {
            let mut o = order.to_vec();
            o[i..=j].reverse();
            if tour_cost(&o, d, p) < base - 1e-9 {
                return false;
            }
        }
    }
    true
}

/// Globally optimal tour by depth-first enumeration with pruning. Among
/// optimal tours the lexicographically smallest order is returned.
pub fn solve_exact(d: &[Vec<f64>], p: &[f64]) -> Tour {
    let n = d.len();
    assert!(n <= 12, "exact solver is meant for small instances");
    let min_in: Vec<f64> = (0..n)
        .map(|j| {
            (0..n)
                .filter(|&k| k != j)
                .map(|k| d[k][j])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    struct Search<'a> {
        d: &'a [Vec<f64>],
        p: &'a [f64],
        min_in: Vec<f64>,
        best_cost: f64,
        best: Vec<usize>,
        order: Vec<usize>,
        used: Vec<bool>,
    }
    impl Search<'_> {
        fn go(&mut self, latency: f64, cost: f64) {
            let n = self.d.len();
            if self.order.len() == n {
                if cost < self.best_cost {
                    self.best_cost = cost;
                    self.best = self.order.clone();
                }
                return;
            }
            let bound: f64 = (0..n)
                .filter(|&j| !self.used[j])
                .map(|j| self.p[j] * (latency + self.min_in[j]))
                .sum();
            if cost + bound >= self.best_cost {
                return;
            }
            let last = *self.order.last().unwrap();
            for j in 1..n {
                if self.used[j] {
                    continue;
                }
                let lat = latency + self.d[last][j];
                self.used[j] = true;
                self.order.push(j);
                self.go(lat, cost + self.p[j] * lat);
                self.order.pop();
                self.used[j] = false;
            }
        }
    }
    let mut s = Search {
        d,
        p,
        min_in,
        best_cost: f64::INFINITY,
        best: (0..n).collect(),
        order: vec![0],
        used: vec![false; n],
    };
    if n > 0 {
        s.used[0] = true;
        s.go(0.0, 0.0);
    }
    Tour::new(s.best, d, p)
}

fn valid_order(order: &[usize], n: usize) -> bool {
    if order.len() != n || order.first() != Some(&0) {
        return false;
    }
    let mut seen = vec![false; n];
    order.iter().all(|&i| i < n && !std::mem::replace(&mut seen[i], true))
}

/// Large neighbourhood search: random destruction of up to the configured
/// share of the tour, cheapest-insertion repair, then 2-opt. Starts from the
/// better of the greedy tour and `warm_start` (both 2-opt polished) and
/// only accepts improvements.
pub fn solve_lns(
    d: &[Vec<f64>],
    p: &[f64],
    config: &LnsConfig,
    rng: &mut impl Rng,
    warm_start: Option<&[usize]>,
) -> Tour {
    let n = d.len();
    if n <= 2 {
        return Tour::new((0..n).collect(), d, p);
    }
    let deadline = config.time_budget_ms.map(|ms| Instant::now() + Duration::from_millis(ms));
    let mut best = greedy_tour(d, p);
    two_opt(&mut best, d, p);
    let mut best_cost = tour_cost(&best, d, p);
    if let Some(w) = warm_start.filter(|w| valid_order(w, n)) {
        let mut w = w.to_vec();
        two_opt(&mut w, d, p);
        let c = tour_cost(&w, d, p);
        if c <= best_cost {
            best = w;
            best_cost = c;
        }
    }
    let max_remove = ((config.destroy_fraction_max * (n - 1) as f64).floor() as usize).max(1);
    for _ in 0..config.max_iters {
        if deadline.is_some_and(|t| Instant::now() >= t) {
            break;
        }
        let k = rng.gen_range(1..=max_remove);
        let mut cand = best.clone();
        let mut removed = Vec::with_capacity(k);
        for _ in 0..k {
            let pos = rng.gen_range(1..cand.len());
            removed.push(cand.remove(pos));
        }
        removed.shuffle(rng);
        for x in removed {
            insert_cheapest(&mut cand, x, d, p);
        }
        two_opt(&mut cand, d, p);
        let c = tour_cost(&cand, d, p);
        if c < best_cost {
            best = cand;
            best_cost = c;
        }
    }
    Tour { order: best, cost: best_cost }
}
