//! Prioritized frontier planner.
//!
//! Frontier priorities blend normalized semantic priority with coverage
//! gain, `P(f) = (p(f) / p_max + alpha) * I(f)`, and the subgoal is the first
//! frontier of a tour minimizing priority-weighted arrival latency.

pub mod tour;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use tour::{
    greedy_tour, is_two_opt_optimal, solve_exact, solve_lns, tour_cost, two_opt, LnsConfig, Tour,
};

use crate::topo::{Frontier, NodeId, TopoGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerMode {
    Learned,
    Coverage,
    OraclePriorities,
    LinearOracle,
    OracleInterventions,
}

impl PlannerMode {
    pub const ALL: [PlannerMode; 5] = [
        PlannerMode::Learned,
        PlannerMode::Coverage,
        PlannerMode::OraclePriorities,
        PlannerMode::LinearOracle,
        PlannerMode::OracleInterventions,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PlannerMode::Learned => "learned",
            PlannerMode::Coverage => "coverage",
            PlannerMode::OraclePriorities => "oracle_priorities",
            PlannerMode::LinearOracle => "linear_oracle",
            PlannerMode::OracleInterventions => "oracle_interventions",
        }
    }

    /// Accepts the canonical names plus `oracle` for oracle priorities.
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "oracle" => Some(PlannerMode::OraclePriorities),
            _ => Self::ALL.into_iter().find(|m| m.as_str() == s),
        }
    }
}

impl fmt::Display for PlannerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Weight of pure coverage relative to normalized semantic priority.
    pub alpha: f64,
    pub mode: PlannerMode,
    pub lns: LnsConfig,
    /// Relative coverage-gain change that triggers a new tour.
    pub replan_gain_change: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            mode: PlannerMode::Learned,
            lns: LnsConfig::default(),
            replan_gain_change: 0.05,
        }
    }
}

/// Planner priorities from semantic priorities `p` and gains. When every
/// `p` is zero this is `alpha * I`.
pub fn planner_priorities(p: &[f64], gains: &[f64], alpha: f64) -> Vec<f64> {
    let p_max = p.iter().copied().fold(0.0, f64::max);
    p.iter()
        .zip(gains)
        .map(|(&pi, &g)| {
            let norm = if p_max > 0.0 { pi / p_max } else { 0.0 };
            (norm + alpha) * g
        })
        .collect()
}

/// What one call to [`Planner::step`] decided.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepDecision {
    pub subgoal: Option<NodeId>,
    pub replanned: bool,
    /// Frontier order of the new tour, present after a replan.
    pub tour: Option<Vec<NodeId>>,
    /// Semantic priority per frontier in tour-input order, after a replan.
    pub semantic: Option<Vec<f64>>,
    /// Planner priority per frontier, after a replan.
    pub weights: Option<Vec<f64>>,
}

/// Execution state of the tour planner across steps.
#[derive(Clone, Debug)]
pub struct Planner {
    config: PlannerConfig,
    rng: ChaCha8Rng,
    tour: Vec<NodeId>,
    last_ids: Vec<NodeId>,
    last_gains: Vec<f64>,
    subgoal: Option<NodeId>,
    override_goal: Option<NodeId>,
}

impl Planner {
    pub fn new(config: PlannerConfig, seed: u64) -> Self {
        Self {
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
            tour: Vec::new(),
            last_ids: Vec::new(),
            last_gains: Vec::new(),
            subgoal: None,
            override_goal: None,
        }
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn tour(&self) -> &[NodeId] {
        &self.tour
    }

    pub fn subgoal(&self) -> Option<NodeId> {
        self.override_goal.or(self.subgoal)
    }

    pub fn override_goal(&self) -> Option<NodeId> {
        self.override_goal
    }

    /// Forces the subgoal to `id` until it is reached or stops being a
    /// frontier.
    pub fn set_override(&mut self, id: NodeId) {
        self.override_goal = Some(id);
    }

    /// Forgets the last tour inputs so the next step replans.
    pub fn invalidate(&mut self) {
        self.last_ids.clear();
        self.last_gains.clear();
    }

    pub fn set_mode(&mut self, mode: PlannerMode) {
        self.config.mode = mode;
    }

    /// True when the frontier set differs from the last tour's, or some gain
    /// moved by more than the configured relative amount.
    pub fn needs_replan(&self, frontiers: &[Frontier]) -> bool {
        if frontiers.len() != self.last_ids.len() {
            return true;
        }
        let tol = self.config.replan_gain_change;
        frontiers.iter().zip(&self.last_ids).zip(&self.last_gains).any(|((f, &id), &g)| {
            f.node_id != id || (f.coverage_gain - g).abs() > tol * g.abs()
        })
    }

    /// One pass of the execution policy. `semantic` is evaluated only when
    /// a new tour is needed and returns `None` for pure coverage.
    pub fn step(
        &mut self,
        graph: &TopoGraph,
        frontiers: &[Frontier],
        semantic: impl FnOnce() -> Option<Vec<f64>>,
    ) -> StepDecision {
        let robot = graph.robot();
        let ids: Vec<NodeId> = frontiers.iter().map(|f| f.node_id).collect();
        if let Some(o) = self.override_goal {
            if o == robot || !ids.contains(&o) {
                self.override_goal = None;
            }
        }
        let mut decision = StepDecision {
            subgoal: None,
            replanned: false,
            tour: None,
            semantic: None,
            weights: None,
        };
        if frontiers.is_empty() {
            self.subgoal = None;
            self.tour.clear();
            self.last_ids.clear();
            self.last_gains.clear();
            return decision;
        }
        if self.needs_replan(frontiers) {
            let gains: Vec<f64> = frontiers.iter().map(|f| f.coverage_gain).collect();
            let p = semantic();
            let weights = match &p {
                Some(p) if p.iter().any(|&x| x > 0.0) => planner_priorities(p, &gains, self.config.alpha),
                // with no semantic signal the planner is the coverage baseline
                _ => gains.clone(),
            };
            self.solve(graph, &ids, &weights);
            self.last_ids = ids;
            self.last_gains = gains;
            self.subgoal = self.tour.first().copied();
            decision.replanned = true;
            decision.tour = Some(self.tour.clone());
            decision.semantic = p;
            decision.weights = Some(weights);
        } else if self.subgoal == Some(robot) || self.subgoal.is_none() {
            let pos = self.tour.iter().position(|&n| Some(n) == self.subgoal);
            self.subgoal = match pos {
                Some(i) => self.tour.get(i + 1).copied(),
                None => self.tour.first().copied(),
            };
        }
        decision.subgoal = self.subgoal();
        decision
    }

    fn solve(&mut self, graph: &TopoGraph, ids: &[NodeId], weights: &[f64]) {
        let mut nodes = Vec::with_capacity(ids.len() + 1);
        nodes.push(graph.robot());
        nodes.extend_from_slice(ids);
        let mut d = graph.distance_matrix(&nodes);
        let finite_max = d.iter().flatten().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
        for row in &mut d {
            for x in row.iter_mut().filter(|x| !x.is_finite()) {
                *x = 10.0 * finite_max + 1.0;
            }
        }
        let mut p = Vec::with_capacity(nodes.len());
        p.push(0.0);
        p.extend_from_slice(weights);
        // previous order with vanished frontiers dropped and new ones
        // inserted at their cheapest positions
        let index_of = |id: NodeId| ids.iter().position(|&x| x == id).map(|i| i + 1);
        let mut warm: Vec<usize> = vec![0];
        warm.extend(self.tour.iter().filter_map(|&id| index_of(id)));
        let mut fresh: Vec<usize> = (1..nodes.len()).filter(|i| !warm.contains(i)).collect();
        fresh.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        for x in fresh {
            tour::insert_cheapest(&mut warm, x, &d, &p);
        }
        let t = solve_lns(&d, &p, &self.config.lns, &mut self.rng, Some(&warm));
        self.tour = t.order[1..].iter().map(|&i| nodes[i]).collect();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Cell;

    fn frontier(id: NodeId, gain: f64) -> Frontier {
        Frontier {
            node_id: id,
            cell: Cell::new(0, 0),
            region_id: 0,
            coverage_gain: gain,
        }
    }

    fn line_graph() -> TopoGraph {
        let cells: Vec<Cell> = (0..5).map(|i| Cell::new(4 * i, 0)).collect();
        TopoGraph::from_edges(&cells, &[(0, 1), (1, 2), (2, 3), (3, 4)], 0.25, 30)
    }

    #[test]
    fn zero_semantic_priority_scales_gain() {
        let p = planner_priorities(&[0.0, 0.0], &[4.0, 6.0], 0.5);
        assert_eq!(p, vec![2.0, 3.0]);
    }

    #[test]
    fn top_priority_gets_one_plus_alpha() {
        let p = planner_priorities(&[0.2, 0.8, 0.4], &[2.0, 3.0, 5.0], 0.25);
        assert!((p[1] - 1.25 * 3.0).abs() < 1e-12);
        // hand-normalized: 0.2/0.8 = 0.25, 0.4/0.8 = 0.5
        assert!((p[0] - 0.5 * 2.0).abs() < 1e-12);
        assert!((p[2] - 0.75 * 5.0).abs() < 1e-12);
    }

    #[test]
    fn unchanged_frontiers_do_not_replan() {
        let g = line_graph();
        let mut pl = Planner::new(PlannerConfig::default(), 0);
        let f = vec![frontier(2, 5.0), frontier(4, 5.0)];
        let first = pl.step(&g, &f, || None);
        assert!(first.replanned);
        let mut called = false;
        let second = pl.step(&g, &f, || {
            called = true;
            None
        });
        assert!(!second.replanned && !called);
        assert_eq!(second.subgoal, first.subgoal);
        // a small gain change stays below the threshold
        let f2 = vec![frontier(2, 5.1), frontier(4, 5.0)];
        assert!(!pl.needs_replan(&f2));
        let f3 = vec![frontier(2, 4.0), frontier(4, 5.0)];
        assert!(pl.needs_replan(&f3));
    }

    #[test]
    fn reaching_subgoal_advances_along_tour() {
        let mut g = line_graph();
        let mut pl = Planner::new(PlannerConfig::default(), 0);
        let f = vec![frontier(2, 5.0), frontier(4, 5.0)];
        let d = pl.step(&g, &f, || None);
        assert_eq!(d.subgoal, Some(2));
        g.set_robot(2);
        let d = pl.step(&g, &f, || None);
        assert!(!d.replanned);
        assert_eq!(d.subgoal, Some(4));
    }

    #[test]
    fn empty_frontier_set_has_no_subgoal() {
        let g = line_graph();
        let mut pl = Planner::new(PlannerConfig::default(), 0);
        assert_eq!(pl.step(&g, &[], || None).subgoal, None);
    }

    #[test]
    fn override_holds_until_frontier_vanishes() {
        let g = line_graph();
        let mut pl = Planner::new(PlannerConfig::default(), 0);
        let f = vec![frontier(2, 5.0), frontier(4, 5.0)];
        pl.step(&g, &f, || None);
        pl.set_override(4);
        assert_eq!(pl.step(&g, &f, || None).subgoal, Some(4));
        let f = vec![frontier(2, 5.0)];
        assert_eq!(pl.step(&g, &f, || None).subgoal, Some(2));
        assert_eq!(pl.override_goal(), None);
    }

    #[test]
    fn mode_names_round_trip() {
        for m in PlannerMode::ALL {
            assert_eq!(PlannerMode::parse(m.as_str()), Some(m));
        }
        assert_eq!(PlannerMode::parse("oracle"), Some(PlannerMode::OraclePriorities));
    }
}
