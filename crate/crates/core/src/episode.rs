//! One search episode: sensing, graph upkeep, planning and motion.
//!
//! A step is one traversal of a graph edge. Edges longer than the motion
//! bound are split into equal straight sub-moves, and the robot senses after
//! each sub-move, so an episode may end part-way along an edge.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::expert::{oracle_decide, record_choice, Candidate, ChoiceRecord, ExpertError, ExpertParams, OraclePolicy, Provenance};
use crate::grid::{Cell, Point};
use crate::planner::{planner_priorities, Planner, PlannerConfig, PlannerMode, StepDecision};
use crate::scenario::Scenario;
use crate::semantics::{priority, FeatureCache, FeatureConfig, PriorityModel};
use crate::sim::{check_termination, BeliefDelta, Sensor, SimConfig, SimError, Termination, WorldBelief, FREE};
use crate::topo::{Frontier, NodeId, TopoConfig, TopoGraph};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub sim: SimConfig,
    pub topo: TopoConfig,
    pub features: FeatureConfig,
    pub planner: PlannerConfig,
    /// Discount model used when snapshotting choice records.
    pub record_model: ExpertParams,
    pub seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            topo: TopoConfig::default(),
            features: FeatureConfig::default(),
            planner: PlannerConfig::default(),
            record_model: ExpertParams::default(),
            seed: 0,
        }
    }
}

/// Where the semantic part of the planner priority comes from.
#[derive(Clone, Debug, PartialEq)]
pub enum PrioritySource {
    /// Pure coverage, `P(f) = I(f)`.
    Coverage,
    /// Linear model over frontier features.
    Linear(PriorityModel),
    /// Priorities of an oracle expert.
    Oracle(OraclePolicy),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Found,
    Exhausted,
    Budget,
}

#[derive(Debug, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no path from node {from} to subgoal {to}")]
    NoPath { from: NodeId, to: NodeId },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierPriority {
    pub id: NodeId,
    pub gain: f64,
    /// Semantic priority; absent for coverage planning.
    pub semantic: Option<f64>,
    pub planner: f64,
}

/// Append-only trace line for one step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub position: [f64; 2],
    pub traveled: f64,
    pub new_cells: usize,
    pub new_objects: Vec<usize>,
    pub subgoal: Option<NodeId>,
    pub replanned: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tour: Option<Vec<NodeId>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priorities: Option<Vec<FrontierPriority>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intervention: Option<NodeId>,
}

/// Result of advancing the episode by one step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub trace: TraceRecord,
    pub delta: BeliefDelta,
    pub outcome: Option<Outcome>,
}

#[derive(Clone, Debug)]
pub struct Episode {
    scenario: Arc<Scenario>,
    config: EpisodeConfig,
    belief: WorldBelief,
    graph: TopoGraph,
    sensor: Sensor,
    planner: Planner,
    source: PrioritySource,
    oracle: Option<OraclePolicy>,
    topo_rng: ChaCha8Rng,
    oracle_rng: ChaCha8Rng,
    cache: FeatureCache,
    local_radius: f64,
    steps: usize,
    outcome: Option<Outcome>,
    interventions: usize,
    records: Vec<ChoiceRecord>,
    initial_delta: BeliefDelta,
}

const TOPO_STREAM: u64 = 0x746f706f;
const ORACLE_STREAM: u64 = 0x6f72636c;

fn stream(seed: u64, salt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(salt);
    rng
}

impl Episode {
    /// Starts an episode: senses at the start cell and builds the initial
    /// graph. `oracle`, when given, may override subgoals at replans.
    pub fn new(
        scenario: Arc<Scenario>,
        config: EpisodeConfig,
        source: PrioritySource,
        oracle: Option<OraclePolicy>,
    ) -> Result<Self, EpisodeError> {
        config.sim.validate(scenario.cell_size)?;
        let sensor = Sensor::for_scenario(&config.sim, &scenario);
        let mut belief = WorldBelief::new(&scenario);
        let delta = sensor.sense(&scenario, &belief, scenario.start_cell);
        belief.integrate(&scenario, &delta);
        let range = sensor.range_cells();
        let mut graph = TopoGraph::new(&belief, config.topo.clone(), range);
        let mut topo_rng = stream(config.seed, TOPO_STREAM);
        let new_cells: Vec<Cell> = delta.cells.iter().map(|c| c.0).collect();
        let new_free: Vec<Cell> = delta.cells.iter().filter(|c| c.1 == FREE).map(|c| c.0).collect();
        graph.expand(&belief, &new_free, &mut topo_rng);
        graph.update_gains(&belief, &new_cells);
        let start = graph.robot();
        graph.set_robot(start);
        let outcome = match check_termination(&scenario, &belief, usize::MAX) {
            Termination::Found => Some(Outcome::Found),
            _ => None,
        };
        Ok(Self {
            planner: Planner::new(config.planner.clone(), config.seed),
            oracle_rng: stream(config.seed, ORACLE_STREAM),
            local_radius: range * config.features.local_radius_fraction,
            scenario,
            config,
            belief,
            graph,
            sensor,
            source,
            oracle,
            topo_rng,
            cache: FeatureCache::default(),
            steps: 0,
            outcome,
            interventions: 0,
            records: Vec::new(),
            initial_delta: delta,
        })
    }

    pub fn scenario(&self) -> &Arc<Scenario> {
        &self.scenario
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.config
    }

    pub fn belief(&self) -> &WorldBelief {
        &self.belief
    }

    pub fn graph(&self) -> &TopoGraph {
        &self.graph
    }

    pub fn planner(&self) -> &Planner {
        &self.planner
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    pub fn interventions(&self) -> usize {
        self.interventions
    }

    /// Choice records gathered from interventions so far.
    pub fn records(&self) -> &[ChoiceRecord] {
        &self.records
    }

    pub fn take_records(&mut self) -> Vec<ChoiceRecord> {
        std::mem::take(&mut self.records)
    }

    /// What the first sensing pass revealed.
    pub fn initial_delta(&self) -> &BeliefDelta {
        &self.initial_delta
    }

    pub fn frontiers(&self) -> Vec<Frontier> {
        self.graph.frontiers(&self.belief)
    }

    /// Features, gains and graph distances of the current frontiers.
    pub fn candidates(&mut self) -> Vec<Candidate> {
        let frontiers = self.frontiers();
        self.candidates_for(&frontiers)
    }

    fn candidates_for(&mut self, frontiers: &[Frontier]) -> Vec<Candidate> {
        let dist = self.graph.dijkstra(self.graph.robot());
        let classes = self.scenario.class_names.len();
        frontiers
            .iter()
            .map(|f| Candidate {
                frontier_id: f.node_id,
                cell: f.cell,
                region_id: f.region_id,
                features: self.cache.get(&self.belief, f, classes, self.local_radius, &self.config.features),
                gain: f.coverage_gain,
                distance: dist[f.node_id as usize],
            })
            .collect()
    }

    fn semantic_priorities(&mut self, frontiers: &[Frontier]) -> Option<Vec<f64>> {
        if self.source == PrioritySource::Coverage {
            return None;
        }
        let c = self.candidates_for(frontiers);
        self.semantic_for(&c)
    }

    fn semantic_for(&self, c: &[Candidate]) -> Option<Vec<f64>> {
        match &self.source {
            PrioritySource::Coverage => None,
            PrioritySource::Linear(model) => Some(c.iter().map(|c| priority(model, &c.features.values())).collect()),
            PrioritySource::Oracle(policy) => Some(policy.priorities(&self.scenario, &self.belief, c)),
        }
    }

    /// Current semantic priorities (absent for coverage) and planner
    /// priorities, aligned with `candidates`.
    pub fn frontier_priorities(&mut self, candidates: &[Candidate]) -> (Option<Vec<f64>>, Vec<f64>) {
        let frontiers = self.frontiers();
        let semantic = self.semantic_for(candidates);
        let gains: Vec<f64> = frontiers.iter().map(|f| f.coverage_gain).collect();
        let weights = match &semantic {
            Some(p) if p.iter().any(|&x| x > 0.0) => planner_priorities(p, &gains, self.config.planner.alpha),
            _ => gains,
        };
        (semantic, weights)
    }

    pub fn source(&self) -> &PrioritySource {
        &self.source
    }

    /// Swaps the priority source; the next step plans a fresh tour.
    pub fn set_source(&mut self, source: PrioritySource, mode: PlannerMode) {
        self.source = source;
        self.config.planner.mode = mode;
        self.planner.set_mode(mode);
        self.planner.invalidate();
    }

    /// Applies an external choice of subgoal and records it. The record is
    /// `None` when fewer than two frontiers were available.
    pub fn intervene(
        &mut self,
        frontier: NodeId,
        provenance: Provenance,
        revision: Option<u64>,
    ) -> Result<Option<ChoiceRecord>, ExpertError> {
        let candidates = self.candidates();
        if !candidates.iter().any(|c| c.frontier_id == frontier) {
            return Err(ExpertError::InvalidIntervention(format!(
                "node {frontier} is not a current frontier"
            )));
        }
        self.planner.set_override(frontier);
        self.interventions += 1;
        if candidates.len() < 2 {
            return Ok(None);
        }
        let mut rec = record_choice(
            &self.scenario.id,
            self.steps,
            frontier,
            &candidates,
            &self.config.record_model,
            provenance,
        )?;
        rec.revision = revision;
        self.records.push(rec.clone());
        Ok(Some(rec))
    }

    fn finish(&mut self, outcome: Outcome) -> Option<Outcome> {
        self.outcome = Some(outcome);
        self.outcome
    }

    /// Checks termination and, while running, plans and traverses one edge.
    pub fn step(&mut self) -> Result<StepReport, EpisodeError> {
        let mut trace = TraceRecord {
            step: self.steps,
            position: [self.belief.position().x, self.belief.position().y],
            traveled: self.belief.traveled(),
            new_cells: 0,
            new_objects: Vec::new(),
            subgoal: None,
            replanned: false,
            tour: None,
            priorities: None,
            intervention: None,
        };
        let mut delta = BeliefDelta::default();
        if self.outcome.is_some() {
            return Ok(StepReport {
                trace,
                delta,
                outcome: self.outcome,
            });
        }
        let mut frontiers = self.frontiers();
        if frontiers.is_empty() && self.graph.promote_residual(&self.belief) > 0 {
            frontiers = self.frontiers();
        }
        match check_termination(&self.scenario, &self.belief, frontiers.len()) {
            Termination::Found => {
                let outcome = self.finish(Outcome::Found);
                return Ok(StepReport { trace, delta, outcome });
            }
            Termination::Exhausted => {
                let outcome = self.finish(Outcome::Exhausted);
                return Ok(StepReport { trace, delta, outcome });
            }
            Termination::Running => {}
        }
        if self.steps >= self.config.sim.max_steps {
            let outcome = self.finish(Outcome::Budget);
            return Ok(StepReport { trace, delta, outcome });
        }

        let semantic = if self.planner.needs_replan(&frontiers) {
            self.semantic_priorities(&frontiers)
        } else {
            None
        };
        let decision: StepDecision = self.planner.step(&self.graph, &frontiers, || semantic);
        trace.replanned = decision.replanned;
        trace.tour = decision.tour.clone();
        if let Some(weights) = &decision.weights {
            trace.priorities = Some(
                frontiers
                    .iter()
                    .enumerate()
                    .map(|(i, f)| FrontierPriority {
                        id: f.node_id,
                        gain: f.coverage_gain,
                        semantic: decision.semantic.as_ref().map(|s| s[i]),
                        planner: weights[i],
                    })
                    .collect(),
            );
        }
        if decision.replanned {
            if let (Some(policy), Some(current)) = (self.oracle.clone(), self.planner.subgoal()) {
                let candidates = self.candidates_for(&frontiers);
                let d = oracle_decide(&policy, &self.scenario, &self.belief, &candidates, current, &mut self.oracle_rng);
                if let Some(id) = d.intervention {
                    self.intervene(id, Provenance::Oracle, None)
                        .expect("oracle picks among current frontiers");
                    trace.intervention = Some(id);
                }
            }
        }
        let subgoal = self.planner.subgoal().expect("frontiers exist, so a subgoal exists");
        trace.subgoal = Some(subgoal);

        let robot = self.graph.robot();
        let (path, _) = self
            .graph
            .shortest_path(robot, subgoal)
            .map_err(|_| EpisodeError::NoPath { from: robot, to: subgoal })?;
        let next = path[1];
        let target = self.graph.node(next).cell.center();
        let found = self.traverse(target, &mut delta)?;
        if !found {
            self.graph.set_robot(next);
        }
        let new_cells: Vec<Cell> = delta.cells.iter().map(|c| c.0).collect();
        let new_free: Vec<Cell> = delta.cells.iter().filter(|c| c.1 == FREE).map(|c| c.0).collect();
        self.graph.expand(&self.belief, &new_free, &mut self.topo_rng);
        self.graph.update_gains(&self.belief, &new_cells);
        self.steps += 1;

        trace.new_cells = delta.cells.len();
        trace.new_objects = delta.objects.clone();
        trace.position = [self.belief.position().x, self.belief.position().y];
        trace.traveled = self.belief.traveled();
        let outcome = if found { self.finish(Outcome::Found) } else { None };
        Ok(StepReport { trace, delta, outcome })
    }

    /// Moves in equal straight sub-steps to `target`, sensing after each.
    /// Stops early once the target object has been observed.
    fn traverse(&mut self, target: Point, acc: &mut BeliefDelta) -> Result<bool, EpisodeError> {
        let start = self.belief.position();
        let cs = self.scenario.cell_size;
        let length = start.dist(target) * cs;
        let parts = (length / self.config.sim.step_bound).floor() as usize + 1;
        for k in 1..=parts {
            let goal = start.lerp(target, k as f64 / parts as f64);
            let here = self.belief.position();
            self.belief
                .apply_action([(goal.x - here.x) * cs, (goal.y - here.y) * cs], &self.config.sim)?;
            let d = self.sensor.sense(&self.scenario, &self.belief, self.belief.robot_cell());
            self.belief.integrate(&self.scenario, &d);
            acc.cells.extend(d.cells);
            acc.objects.extend(d.objects);
            if check_termination(&self.scenario, &self.belief, 1) == Termination::Found {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Steps until the episode ends, passing every report to `on_step`.
    pub fn run_with(&mut self, mut on_step: impl FnMut(&StepReport)) -> Result<Outcome, EpisodeError> {
        loop {
            let r = self.step()?;
            on_step(&r);
            if let Some(o) = r.outcome {
                return Ok(o);
            }
        }
    }

    pub fn run(&mut self) -> Result<Outcome, EpisodeError> {
        self.run_with(|_| {})
    }
}
