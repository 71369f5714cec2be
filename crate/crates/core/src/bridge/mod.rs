//! Live episode sessions and their newline-delimited JSON protocol.
//!
//! A client first receives a `snapshot`, then one `delta` per step. Every
//! message carries the session revision, which grows with each state
//! change. Commands are applied in arrival order by the session owner.

pub mod server;

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::episode::{Episode, EpisodeConfig, EpisodeError, Outcome, PrioritySource};
use crate::expert::{ChoiceRecord, Dataset, DatasetHeader, OracleConfig, OraclePolicy, Provenance, DATASET_FORMAT_VERSION};
use crate::grid::Cell;
use crate::planner::PlannerMode;
use crate::scenario::Scenario;
use crate::semantics::PriorityModel;
use crate::sim::{BeliefDelta, UNEXPLORED};
use crate::topo::{GraphSnapshot, NodeId};

pub use server::{bind, serve, ServeConfig, ServeSummary};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum BridgeError {
    #[error("frontier {frontier_id} is not available at revision {revision}")]
    InvalidIntervention { frontier_id: NodeId, revision: u64 },
    #[error("{command} not allowed: {reason}")]
    IllegalCommand { command: String, reason: String },
    #[error("port unavailable: {0}")]
    PortUnavailable(String),
    #[error("invalid scenario: {0}")]
    ScenarioInvalid(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    InvalidIntervention,
    IllegalCommand,
    BadMessage,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    Paused,
    Stepping,
    FreeRunning,
}

/// Horizontal run of equally-valued cells in row `y` starting at `x`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub y: i32,
    pub x: i32,
    pub len: u32,
    pub state: i8,
}

/// Run-length encodes cells in row-major order.
pub fn encode_spans(cells: impl IntoIterator<Item = (Cell, i8)>) -> Vec<Span> {
    let mut v: Vec<(Cell, i8)> = cells.into_iter().collect();
    v.sort_by_key(|(c, _)| (c.y, c.x));
    let mut out: Vec<Span> = Vec::new();
    for (c, s) in v {
        match out.last_mut() {
            Some(sp) if sp.y == c.y && sp.state == s && sp.x + sp.len as i32 == c.x => sp.len += 1,
            _ => out.push(Span {
                y: c.y,
                x: c.x,
                len: 1,
                state: s,
            }),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectView {
    pub index: usize,
    pub class_index: usize,
    pub x: i32,
    pub y: i32,
    pub region: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontierView {
    pub id: NodeId,
    pub x: i32,
    pub y: i32,
    pub region: u32,
    pub gain: f64,
    /// Feature vector `[phi_s, phi_n]`.
    pub phi: Vec<f64>,
    /// Semantic priority, absent for coverage planning.
    pub p: Option<f64>,
    /// Planner priority.
    pub priority: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub traveled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Message {
    Snapshot {
        revision: u64,
        format_version: u32,
        session_id: String,
        scenario_id: String,
        grid_size: usize,
        cell_size: f64,
        class_names: Vec<String>,
        run_mode: RunMode,
        planner_mode: PlannerMode,
        step: usize,
        spans: Vec<Span>,
        objects: Vec<ObjectView>,
        graph: GraphSnapshot,
        frontiers: Vec<FrontierView>,
        pose: Pose,
        tour: Vec<NodeId>,
    },
    Delta {
        revision: u64,
        step: usize,
        spans: Vec<Span>,
        objects: Vec<ObjectView>,
        graph: GraphSnapshot,
        frontiers: Vec<FrontierView>,
        pose: Pose,
        subgoal: Option<NodeId>,
        replanned: bool,
        intervention: Option<NodeId>,
    },
    Tour {
        revision: u64,
        tour: Vec<NodeId>,
        subgoal: Option<NodeId>,
    },
    Ack {
        revision: u64,
        command: String,
    },
    Error {
        revision: u64,
        code: ErrorCode,
        message: String,
    },
    EpisodeEnd {
        revision: u64,
        outcome: Outcome,
        steps: usize,
        path_length: f64,
        interventions: usize,
        checksum: String,
    },
}

impl Message {
    pub fn revision(&self) -> u64 {
        match self {
            Message::Snapshot { revision, .. }
            | Message::Delta { revision, .. }
            | Message::Tour { revision, .. }
            | Message::Ack { revision, .. }
            | Message::Error { revision, .. }
            | Message::EpisodeEnd { revision, .. } => *revision,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("message serializes");
        s.push('\n');
        s
    }
}

fn default_steps() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum Command {
    Pause,
    Resume,
    Step {
        #[serde(default = "default_steps")]
        n: usize,
    },
    Reset {
        seed: u64,
    },
    /// `revision` names the state the client saw; defaults to the current one.
    Intervene {
        frontier_id: NodeId,
        #[serde(default)]
        revision: Option<u64>,
    },
    SetMode {
        mode: PlannerMode,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Step { .. } => "step",
            Command::Reset { .. } => "reset",
            Command::Intervene { .. } => "intervene",
            Command::SetMode { .. } => "set_mode",
        }
    }
}

/// Digest of an occupancy grid and a set of observed object indices.
pub fn belief_checksum(occupancy: &[i8], objects: impl IntoIterator<Item = usize>) -> String {
    let mut h = Sha256::new();
    h.update(occupancy.iter().map(|&v| v as u8).collect::<Vec<u8>>());
    let mut objs: Vec<usize> = objects.into_iter().collect();
    objs.sort_unstable();
    for o in objs {
        h.update((o as u64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionConfig {
    pub episode: EpisodeConfig,
    pub mode: PlannerMode,
    /// Weights for learned mode.
    pub model: Option<PriorityModel>,
    pub oracle: OracleConfig,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            episode: EpisodeConfig::default(),
            mode: PlannerMode::Coverage,
            model: None,
            oracle: OracleConfig::default(),
        }
    }
}

impl SessionConfig {
    fn source(&self, mode: PlannerMode) -> Option<(PrioritySource, Option<OraclePolicy>)> {
        let room = || OraclePolicy::RoomTypes(self.oracle.clone());
        Some(match mode {
            PlannerMode::Coverage => (PrioritySource::Coverage, None),
            PlannerMode::Learned => (PrioritySource::Linear(self.model.clone()?), None),
            PlannerMode::OraclePriorities => (PrioritySource::Oracle(room()), None),
            PlannerMode::LinearOracle => (
                PrioritySource::Oracle(OraclePolicy::Linear {
                    model: self.model.clone()?,
                    params: self.oracle.params.clone(),
                }),
                None,
            ),
            PlannerMode::OracleInterventions => (PrioritySource::Coverage, Some(room())),
        })
    }
}

/// One live episode plus its protocol state.
#[derive(Debug)]
pub struct Session {
    id: String,
    scenario: Arc<Scenario>,
    config: SessionConfig,
    episode: Episode,
    revision: u64,
    run_mode: RunMode,
    steps_left: usize,
    pending: Option<NodeId>,
    frontier_ids: Vec<NodeId>,
    frontier_revision: u64,
    records: Vec<ChoiceRecord>,
    ended: bool,
}

impl Session {
    /// Starts a paused session.
    pub fn new(id: impl Into<String>, scenario: Arc<Scenario>, config: SessionConfig) -> Result<Self, BridgeError> {
        scenario.validate().map_err(|e| BridgeError::ScenarioInvalid(e.to_string()))?;
        let episode = Self::start(&scenario, &config, config.mode)?;
        let mut s = Self {
            id: id.into(),
            scenario,
            config,
            episode,
            revision: 0,
            run_mode: RunMode::Paused,
            steps_left: 0,
            pending: None,
            frontier_ids: Vec::new(),
            frontier_revision: 0,
            records: Vec::new(),
            ended: false,
        };
        s.frontier_ids = s.current_frontier_ids();
        Ok(s)
    }

    fn start(scenario: &Arc<Scenario>, config: &SessionConfig, mode: PlannerMode) -> Result<Episode, BridgeError> {
        let (source, oracle) = config.source(mode).ok_or_else(|| BridgeError::IllegalCommand {
            command: "start".into(),
            reason: format!("{mode} mode needs weights"),
        })?;
        let mut cfg = config.episode.clone();
        cfg.planner.mode = mode;
        Episode::new(scenario.clone(), cfg, source, oracle).map_err(|e| BridgeError::ScenarioInvalid(e.to_string()))
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn revision(&self) -> u64 {
        self.revision
    }

    pub fn run_mode(&self) -> RunMode {
        self.run_mode
    }

    pub fn pending_intervention(&self) -> Option<NodeId> {
        self.pending
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }

    pub fn is_ended(&self) -> bool {
        self.ended
    }

    /// True while the session wants to advance without further commands.
    pub fn is_running(&self) -> bool {
        !self.ended && self.run_mode != RunMode::Paused
    }

    pub fn set_run_mode(&mut self, mode: RunMode) {
        self.run_mode = mode;
        self.revision += 1;
    }

    fn current_frontier_ids(&self) -> Vec<NodeId> {
        self.episode.frontiers().iter().map(|f| f.node_id).collect()
    }

    /// Human choice records gathered so far, across resets.
    pub fn records(&self) -> Vec<ChoiceRecord> {
        let mut v = self.records.clone();
        v.extend(self.episode.records().iter().cloned());
        v
    }

    pub fn dataset(&self) -> Dataset {
        let mut ds = Dataset::new(DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            class_names: self.scenario.class_names.clone(),
            lambda: self.config.episode.features.lambda,
            discount: self.config.episode.record_model.clone(),
        });
        ds.records = self.records();
        ds
    }

    pub fn checksum(&self) -> String {
        let b = self.episode.belief();
        belief_checksum(b.occupancy().values(), b.observed().iter().map(|o| o.index))
    }

    fn object_views(&self, indices: &[usize]) -> Vec<ObjectView> {
        let b = self.episode.belief();
        indices
            .iter()
            .filter_map(|i| b.observed().iter().find(|o| o.index == *i))
            .map(|o| ObjectView {
                index: o.index,
                class_index: o.class_index,
                x: o.position.x,
                y: o.position.y,
                region: o.region,
            })
            .collect()
    }

    fn frontier_views(&mut self) -> Vec<FrontierView> {
        let candidates = self.episode.candidates();
        let (semantic, weights) = self.episode.frontier_priorities(&candidates);
        candidates
            .iter()
            .enumerate()
            .map(|(i, c)| FrontierView {
                id: c.frontier_id,
                x: c.cell.x,
                y: c.cell.y,
                region: c.region_id,
                gain: c.gain,
                phi: c.features.values(),
                p: semantic.as_ref().map(|s| s[i]),
                priority: weights[i],
            })
            .collect()
    }

    fn pose(&self) -> Pose {
        let b = self.episode.belief();
        Pose {
            x: b.position().x,
            y: b.position().y,
            traveled: b.traveled(),
        }
    }

    /// Full state at the current revision.
    pub fn snapshot(&mut self) -> Message {
        let b = self.episode.belief();
        let occ = b.occupancy();
        let spans = encode_spans(occ.cells().map(|c| (c, occ[c])).filter(|&(_, s)| s != UNEXPLORED));
        let observed: Vec<usize> = b.observed().iter().map(|o| o.index).collect();
        let objects = self.object_views(&observed);
        Message::Snapshot {
            revision: self.revision,
            format_version: PROTOCOL_VERSION,
            session_id: self.id.clone(),
            scenario_id: self.scenario.id.clone(),
            grid_size: self.scenario.grid_size(),
            cell_size: self.scenario.cell_size,
            class_names: self.scenario.class_names.clone(),
            run_mode: self.run_mode,
            planner_mode: self.episode.config().planner.mode,
            step: self.episode.steps(),
            spans,
            objects,
            graph: self.episode.graph().snapshot(),
            frontiers: self.frontier_views(),
            pose: self.pose(),
            tour: self.episode.planner().tour().to_vec(),
        }
    }

    fn error(&self, e: BridgeError) -> Message {
        let code = match e {
            BridgeError::InvalidIntervention { .. } => ErrorCode::InvalidIntervention,
            _ => ErrorCode::IllegalCommand,
        };
        Message::Error {
            revision: self.revision,
            code,
            message: e.to_string(),
        }
    }

    fn illegal(command: &Command, reason: &str) -> BridgeError {
        BridgeError::IllegalCommand {
            command: command.name().into(),
            reason: reason.into(),
        }
    }

    fn ack(&mut self, command: &Command) -> Message {
        self.revision += 1;
        Message::Ack {
            revision: self.revision,
            command: command.name().into(),
        }
    }

    /// Applies a command. The first message is always an `ack` or an
    /// `error`; state-changing commands may append more.
    pub fn handle(&mut self, command: Command) -> Vec<Message> {
        match self.apply(&command) {
            Ok(mut extra) => {
                let mut out = vec![self.ack(&command)];
                for m in &mut extra {
                    self.revision += 1;
                    set_revision(m, self.revision);
                }
                out.extend(extra);
                out
            }
            Err(e) => vec![self.error(e)],
        }
    }

    fn apply(&mut self, command: &Command) -> Result<Vec<Message>, BridgeError> {
        match *command {
            Command::Pause => {
                if self.run_mode == RunMode::Paused {
                    return Err(Self::illegal(command, "already paused"));
                }
                self.run_mode = RunMode::Paused;
                self.steps_left = 0;
                Ok(Vec::new())
            }
            Command::Resume => {
                if self.ended {
                    return Err(Self::illegal(command, "episode ended"));
                }
                if self.run_mode == RunMode::FreeRunning {
                    return Err(Self::illegal(command, "already running"));
                }
                self.run_mode = RunMode::FreeRunning;
                Ok(Vec::new())
            }
            Command::Step { n } => {
                if self.ended {
                    return Err(Self::illegal(command, "episode ended"));
                }
                if self.run_mode != RunMode::Paused {
                    return Err(Self::illegal(command, "pause first"));
                }
                if n == 0 {
                    return Err(Self::illegal(command, "n must be positive"));
                }
                self.run_mode = RunMode::Stepping;
                self.steps_left = n;
                Ok(Vec::new())
            }
            Command::Reset { seed } => {
                let mut cfg = self.config.clone();
                cfg.episode.seed = seed;
                let mode = self.episode.config().planner.mode;
                let episode = Self::start(&self.scenario, &cfg, mode)?;
                let old = std::mem::replace(&mut self.episode, episode);
                self.records.extend(old.records().iter().cloned());
                self.config = cfg;
                self.run_mode = RunMode::Paused;
                self.steps_left = 0;
                self.pending = None;
                self.ended = false;
                self.frontier_ids = self.current_frontier_ids();
                self.frontier_revision = self.revision + 1;
                Ok(vec![self.snapshot()])
            }
            Command::Intervene { frontier_id, revision } => {
                if self.ended {
                    return Err(Self::illegal(command, "episode ended"));
                }
                let seen = revision.unwrap_or(self.revision);
                let invalid = BridgeError::InvalidIntervention {
                    frontier_id,
                    revision: self.revision,
                };
                if seen > self.revision || seen < self.frontier_revision || !self.frontier_ids.contains(&frontier_id) {
                    return Err(invalid);
                }
                self.episode
                    .intervene(frontier_id, Provenance::Human, Some(seen))
                    .map_err(|_| invalid)?;
                self.pending = Some(frontier_id);
                Ok(vec![Message::Tour {
                    revision: 0,
                    tour: self.episode.planner().tour().to_vec(),
                    subgoal: self.episode.planner().subgoal(),
                }])
            }
            Command::SetMode { mode } => {
                if self.run_mode != RunMode::Paused {
                    return Err(Self::illegal(command, "pause first"));
                }
                let (source, oracle) = self
                    .config
                    .source(mode)
                    .ok_or_else(|| Self::illegal(command, "mode needs weights"))?;
                if oracle.is_some() || self.config.source(self.episode.config().planner.mode).and_then(|s| s.1).is_some() {
                    return Err(Self::illegal(command, "oracle interventions mode is fixed at start"));
                }
                self.episode.set_source(source, mode);
                Ok(Vec::new())
            }
        }
    }

    /// Advances one step when running and returns the resulting messages.
    pub fn tick(&mut self) -> Result<Vec<Message>, EpisodeError> {
        if !self.is_running() {
            return Ok(Vec::new());
        }
        let report = self.episode.step()?;
        self.pending = None;
        let mut out = Vec::new();
        let stepped = report.outcome.is_none() || !report.delta.is_empty() || report.trace.subgoal.is_some();
        if stepped {
            self.revision += 1;
            out.push(self.delta(&report.delta, &report.trace));
            let ids = self.current_frontier_ids();
            if ids != self.frontier_ids {
                self.frontier_ids = ids;
                self.frontier_revision = self.revision;
            }
        }
        if let Some(outcome) = report.outcome {
            self.ended = true;
            self.run_mode = RunMode::Paused;
            self.steps_left = 0;
            self.revision += 1;
            out.push(Message::EpisodeEnd {
                revision: self.revision,
                outcome,
                steps: self.episode.steps(),
                path_length: self.episode.belief().traveled(),
                interventions: self.episode.interventions(),
                checksum: self.checksum(),
            });
        } else if self.run_mode == RunMode::Stepping {
            self.steps_left -= 1;
            if self.steps_left == 0 {
                self.run_mode = RunMode::Paused;
            }
        }
        Ok(out)
    }

    fn delta(&mut self, delta: &BeliefDelta, trace: &crate::episode::TraceRecord) -> Message {
        Message::Delta {
            revision: self.revision,
            step: self.episode.steps(),
            spans: encode_spans(delta.cells.iter().map(|&(c, s, _)| (c, s))),
            objects: self.object_views(&delta.objects),
            graph: self.episode.graph().snapshot(),
            frontiers: self.frontier_views(),
            pose: self.pose(),
            subgoal: trace.subgoal,
            replanned: trace.replanned,
            intervention: trace.intervention,
        }
    }

    /// Ticks until the session pauses or the episode ends.
    pub fn run_until_idle(&mut self) -> Result<Vec<Message>, EpisodeError> {
        let mut out = Vec::new();
        while self.is_running() {
            out.extend(self.tick()?);
        }
        Ok(out)
    }
}

fn set_revision(m: &mut Message, r: u64) {
    match m {
        Message::Snapshot { revision, .. }
        | Message::Delta { revision, .. }
        | Message::Tour { revision, .. }
        | Message::Ack { revision, .. }
        | Message::Error { revision, .. }
        | Message::EpisodeEnd { revision, .. } => *revision = r,
    }
}

/// Client-side reconstruction of the map from a message stream.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mirror {
    pub grid_size: usize,
    pub occupancy: Vec<i8>,
    pub objects: BTreeSet<usize>,
    pub revision: u64,
    pub frontiers: Vec<NodeId>,
    pub ended: Option<String>,
}

impl Mirror {
    fn paint(&mut self, spans: &[Span]) {
        for s in spans {
            for k in 0..s.len as i32 {
                let i = s.y as usize * self.grid_size + (s.x + k) as usize;
                self.occupancy[i] = s.state;
            }
        }
    }

    /// Applies one message; a snapshot replaces all state.
    pub fn apply(&mut self, m: &Message) {
        self.revision = self.revision.max(m.revision());
        match m {
            Message::Snapshot {
                grid_size,
                spans,
                objects,
                frontiers,
                ..
            } => {
                self.grid_size = *grid_size;
                self.occupancy = vec![UNEXPLORED; grid_size * grid_size];
                self.objects = objects.iter().map(|o| o.index).collect();
                self.frontiers = frontiers.iter().map(|f| f.id).collect();
                self.ended = None;
                self.paint(spans);
            }
            Message::Delta {
                spans,
                objects,
                frontiers,
                ..
            } => {
                self.paint(spans);
                self.objects.extend(objects.iter().map(|o| o.index));
                self.frontiers = frontiers.iter().map(|f| f.id).collect();
            }
            Message::EpisodeEnd { checksum, .. } => self.ended = Some(checksum.clone()),
            _ => {}
        }
    }

    pub fn checksum(&self) -> String {
        belief_checksum(&self.occupancy, self.objects.iter().copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::open_room;
    use crate::scenario::{generate_scenario, GeneratorConfig};

    fn small() -> Arc<Scenario> {
        let gen = GeneratorConfig {
            grid_size: 60,
            min_room_side: 9,
            ..GeneratorConfig::default()
        };
        Arc::new(generate_scenario(3, &gen).unwrap())
    }

    #[test]
    fn spans_merge_runs_per_row() {
        let cells = [
            (Cell::new(2, 0), 1),
            (Cell::new(0, 0), 1),
            (Cell::new(1, 0), 1),
            (Cell::new(3, 0), -1),
            (Cell::new(0, 1), 1),
            (Cell::new(2, 1), 1),
        ];
        let s = encode_spans(cells);
        assert_eq!(
            s,
            vec![
                Span { y: 0, x: 0, len: 3, state: 1 },
                Span { y: 0, x: 3, len: 1, state: -1 },
                Span { y: 1, x: 0, len: 1, state: 1 },
                Span { y: 1, x: 2, len: 1, state: 1 },
            ]
        );
    }

    #[test]
    fn commands_parse_from_json() {
        let c: Command = serde_json::from_str(r#"{"cmd":"step"}"#).unwrap();
        assert_eq!(c, Command::Step { n: 1 });
        let c: Command = serde_json::from_str(r#"{"cmd":"intervene","frontier_id":4}"#).unwrap();
        assert_eq!(c, Command::Intervene { frontier_id: 4, revision: None });
        let c: Command = serde_json::from_str(r#"{"cmd":"set_mode","mode":"coverage"}"#).unwrap();
        assert_eq!(c, Command::SetMode { mode: PlannerMode::Coverage });
    }

    #[test]
    fn snapshot_carries_protocol_header() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        let m = s.snapshot();
        let v: serde_json::Value = serde_json::from_str(&m.to_line()).unwrap();
        assert_eq!(v["type"], "snapshot");
        assert_eq!(v["format_version"], PROTOCOL_VERSION);
        assert_eq!(v["grid_size"], 60);
        assert!(v["class_names"].as_array().unwrap().len() > 3);
        assert_eq!(v["run_mode"], "paused");
    }

    #[test]
    fn paused_session_does_not_step() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        assert!(s.tick().unwrap().is_empty());
        let r = s.handle(Command::Pause);
        assert!(matches!(r[0], Message::Error { code: ErrorCode::IllegalCommand, .. }));
        assert!(s.tick().unwrap().is_empty());
        assert_eq!(s.episode().steps(), 0);
    }

    #[test]
    fn step_n_then_pauses_and_revisions_increase() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        let mut log = vec![s.snapshot()];
        log.extend(s.handle(Command::Step { n: 3 }));
        log.extend(s.run_until_idle().unwrap());
        assert_eq!(s.episode().steps(), 3);
        assert_eq!(s.run_mode(), RunMode::Paused);
        let deltas = log.iter().filter(|m| matches!(m, Message::Delta { .. })).count();
        assert_eq!(deltas, 3);
        assert!(log.windows(2).all(|w| w[0].revision() < w[1].revision()));
        let r = s.handle(Command::Resume);
        assert!(matches!(r[0], Message::Ack { .. }));
        let r = s.handle(Command::Step { n: 1 });
        assert!(matches!(r[0], Message::Error { code: ErrorCode::IllegalCommand, .. }));
    }

    #[test]
    fn replay_reconstructs_final_checksum() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        let mut log = vec![s.snapshot()];
        log.extend(s.handle(Command::Resume));
        log.extend(s.run_until_idle().unwrap());
        assert!(s.is_ended());
        let mut mirror = Mirror::default();
        for line in log.iter().map(Message::to_line) {
            mirror.apply(&serde_json::from_str(&line).unwrap());
        }
        let published = mirror.ended.clone().unwrap();
        assert_eq!(mirror.checksum(), published);
        assert_eq!(published, s.checksum());
    }

    #[test]
    fn interventions_record_human_choices_at_named_revision() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        s.handle(Command::Step { n: 2 });
        s.run_until_idle().unwrap();
        let snap = s.snapshot();
        let Message::Snapshot { frontiers, revision, .. } = snap else { unreachable!() };
        assert!(frontiers.len() >= 2);
        let ids: Vec<NodeId> = frontiers.iter().map(|f| f.id).collect();
        let current = *s.episode().planner().tour().iter().find(|id| ids.contains(id)).unwrap();
        let r = s.handle(Command::Intervene {
            frontier_id: current,
            revision: Some(revision),
        });
        assert!(matches!(r[0], Message::Ack { .. }));
        assert!(matches!(r[1], Message::Tour { .. }));
        assert_eq!(s.pending_intervention(), Some(current));
        let recs = s.records();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].provenance, Provenance::Human);
        assert_eq!(recs[0].revision, Some(revision));
        let ids: Vec<NodeId> = recs[0].candidates.iter().map(|c| c.frontier_id).collect();
        assert_eq!(ids, frontiers.iter().map(|f| f.id).collect::<Vec<_>>());

        let r = s.handle(Command::Intervene {
            frontier_id: 9999,
            revision: None,
        });
        match &r[0] {
            Message::Error { code, message, .. } => {
                assert_eq!(*code, ErrorCode::InvalidIntervention);
                assert!(message.contains(&format!("revision {}", s.revision())));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn stale_intervention_is_rejected() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        let rev = s.revision();
        let first: Vec<NodeId> = s.episode().frontiers().iter().map(|f| f.node_id).collect();
        s.handle(Command::Step { n: 5 });
        s.run_until_idle().unwrap();
        let now: Vec<NodeId> = s.episode().frontiers().iter().map(|f| f.node_id).collect();
        assert_ne!(first, now);
        let gone = first.iter().find(|id| !now.contains(id)).copied().unwrap_or(first[0]);
        let r = s.handle(Command::Intervene {
            frontier_id: gone,
            revision: Some(rev),
        });
        assert!(matches!(r[0], Message::Error { code: ErrorCode::InvalidIntervention, .. }));
        assert!(s.records().is_empty());
    }

    #[test]
    fn reset_restarts_paused_with_snapshot() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        s.handle(Command::Step { n: 2 });
        s.run_until_idle().unwrap();
        let before = s.revision();
        let r = s.handle(Command::Reset { seed: 7 });
        assert!(matches!(r[1], Message::Snapshot { .. }));
        assert!(r[1].revision() > before);
        assert_eq!(s.episode().steps(), 0);
        assert_eq!(s.run_mode(), RunMode::Paused);
    }

    #[test]
    fn set_mode_requires_weights_for_learned() {
        let mut s = Session::new("t", small(), SessionConfig::default()).unwrap();
        let r = s.handle(Command::SetMode { mode: PlannerMode::Learned });
        assert!(matches!(r[0], Message::Error { code: ErrorCode::IllegalCommand, .. }));
        let r = s.handle(Command::SetMode { mode: PlannerMode::OraclePriorities });
        assert!(matches!(r[0], Message::Ack { .. }));
        assert_eq!(s.episode().config().planner.mode, PlannerMode::OraclePriorities);
    }

    #[test]
    fn ended_episode_rejects_stepping() {
        let room = Arc::new(open_room(20, Cell::new(3, 3), Cell::new(6, 3)));
        let mut s = Session::new("t", room, SessionConfig::default()).unwrap();
        s.handle(Command::Step { n: 1 });
        let out = s.run_until_idle().unwrap();
        assert!(matches!(out.last(), Some(Message::EpisodeEnd { outcome: Outcome::Found, .. })));
        let r = s.handle(Command::Step { n: 1 });
        assert!(matches!(r[0], Message::Error { code: ErrorCode::IllegalCommand, .. }));
    }
}
