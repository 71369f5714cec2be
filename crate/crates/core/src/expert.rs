//! Expert choice model, the synthetic oracle, and intervention datasets.
//!
//! An expert is assumed to value frontier `f` at
//! `u(f) = delta(f) * (p(f) + w_I * I(f))` where `delta` discounts by graph
//! distance from the robot, and to prefer `f_e` over `f` with probability
//! `sigma_rho(beta * (u(f_e) - u(f)))`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write as _};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::grid::Cell;
use crate::scenario::{CategoryObjects, RoomCategory, Scenario};
use crate::semantics::{priority, FeatureVector, PriorityModel};
use crate::sim::WorldBelief;
use crate::topo::NodeId;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountKind {
    #[default]
    Linear,
    Exponential,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpertParams {
    /// Rationality.
    pub beta: f64,
    /// Residual error probability floor.
    pub rho: f64,
    /// Minimum linear discount.
    pub epsilon: f64,
    /// Utility gap required before the oracle intervenes.
    pub tau: f64,
    pub discount: DiscountKind,
    /// Rate of the exponential discount.
    pub gamma: f64,
}

impl Default for ExpertParams {
    fn default() -> Self {
        Self {
            beta: 25.0,
            rho: 0.0,
            epsilon: 0.2,
            tau: 0.05,
            discount: DiscountKind::Linear,
            gamma: 0.1,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ExpertError {
    #[error("invalid expert parameters: {0}")]
    Params(String),
    #[error("invalid intervention: {0}")]
    InvalidIntervention(String),
}

impl ExpertParams {
    pub fn validate(&self) -> Result<(), ExpertError> {
        let bad = |m: &str| Err(ExpertError::Params(m.into()));
        if !(self.beta > 0.0) {
            return bad("beta must be positive");
        }
        if !(0.0..=0.5).contains(&self.rho) {
            return bad("rho must lie in [0, 0.5]");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.tau >= 0.0) {
            return bad("tau must be non-negative");
        }
        if self.discount == DiscountKind::Exponential && !(self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        Ok(())
    }
}

/// Distance discounts for a whole frontier set, given each frontier's graph
/// distance from the robot. When every distance is zero all frontiers get
/// the undiscounted value `1 + epsilon` (linear) or `1` (exponential).
pub fn discounts(distances: &[f64], params: &ExpertParams) -> Vec<f64> {
    let d_max = distances.iter().copied().fold(0.0, f64::max);
    distances
        .iter()
        .map(|&d| {
            let rel = if d_max > 0.0 { d / d_max } else { 0.0 };
            match params.discount {
                DiscountKind::Linear => 1.0 - rel + params.epsilon,
                DiscountKind::Exponential => (-params.gamma * rel).exp(),
            }
        })
        .collect()
}

pub fn utility(discount: f64, priority: f64, w_coverage: f64, gain: f64) -> f64 {
    discount * (priority + w_coverage * gain)
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn sigma_rho(x: f64, rho: f64) -> f64 {
    (1.0 - 2.0 * rho) * sigmoid(x) + rho
}

/// Probability that an expert with augmented weights `w_aug` prefers the
/// frontier with augmented features `phi_e` over the one with `phi_f`.
pub fn choice_probability(phi_e: &[f64], phi_f: &[f64], w_aug: &[f64], beta: f64, rho: f64) -> f64 {
    let gap: f64 = w_aug
        .iter()
        .zip(phi_e.iter().zip(phi_f))
        .map(|(w, (a, b))| w * (a - b))
        .sum();
    sigma_rho(beta * gap, rho)
}

/// Everything the expert model needs about one frontier at decision time.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub frontier_id: NodeId,
    pub cell: Cell,
    pub region_id: u32,
    pub features: FeatureVector,
    pub gain: f64,
    /// Graph distance from the robot, meters.
    pub distance: f64,
}

/// Room-type priorities of the synthetic oracle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomPriorityTable {
    /// Region recognised as the room type that holds the target.
    pub target_room: f64,
    /// Region without any observed characteristic object.
    pub unseen_room: f64,
    /// Added when a door is visible near the frontier.
    pub door_bonus: f64,
    /// Recognised rooms of any other type.
    pub other: f64,
    /// Per-category values that take precedence over `other`.
    pub overrides: BTreeMap<RoomCategory, f64>,
}

impl Default for RoomPriorityTable {
    fn default() -> Self {
        Self {
            target_room: 1.0,
            unseen_room: 0.6,
            door_bonus: 0.3,
            other: 0.0,
            overrides: BTreeMap::from([(RoomCategory::LivingRoom, 0.4)]),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OracleConfig {
    pub params: ExpertParams,
    pub rooms: RoomPriorityTable,
    pub target_room: RoomCategory,
    pub characteristic: CategoryObjects,
    pub door_class: String,
    /// Coverage weight in the oracle utility.
    pub w_coverage: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            params: ExpertParams::default(),
            rooms: RoomPriorityTable::default(),
            target_room: RoomCategory::Bedroom,
            characteristic: CategoryObjects::default_characteristic(),
            door_class: "door".into(),
            w_coverage: 0.02,
        }
    }
}

impl OracleConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExpertError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ExpertError::Params(e.to_string()))?;
        cfg.params.validate()?;
        Ok(cfg)
    }
}

/// How the oracle scores frontiers.
#[derive(Clone, Debug, PartialEq)]
pub enum OraclePolicy {
    /// Room-type table driven by observed characteristic objects.
    RoomTypes(OracleConfig),
    /// A fixed linear priority model over the learner's own features.
    Linear { model: PriorityModel, params: ExpertParams },
}

impl OraclePolicy {
    pub fn params(&self) -> &ExpertParams {
        match self {
            OraclePolicy::RoomTypes(c) => &c.params,
            OraclePolicy::Linear { params, .. } => params,
        }
    }

    pub fn params_mut(&mut self) -> &mut ExpertParams {
        match self {
            OraclePolicy::RoomTypes(c) => &mut c.params,
            OraclePolicy::Linear { params, .. } => params,
        }
    }

    /// Semantic priority the oracle assigns to each candidate.
    pub fn priorities(&self, scenario: &Scenario, belief: &WorldBelief, candidates: &[Candidate]) -> Vec<f64> {
        match self {
            OraclePolicy::RoomTypes(cfg) => {
                let rooms = RoomClassifier::new(scenario, cfg);
                candidates.iter().map(|c| rooms.priority(belief, c)).collect()
            }
            OraclePolicy::Linear { model, .. } => candidates
                .iter()
                .map(|c| priority(model, &c.features.values()))
                .collect(),
        }
    }

    pub fn w_coverage(&self) -> f64 {
        match self {
            OraclePolicy::RoomTypes(c) => c.w_coverage,
            OraclePolicy::Linear { model, .. } => model.w_coverage,
        }
    }

    pub fn utilities(&self, scenario: &Scenario, belief: &WorldBelief, candidates: &[Candidate]) -> Vec<f64> {
        let dist: Vec<f64> = candidates.iter().map(|c| c.distance).collect();
        let delta = discounts(&dist, self.params());
        let w_i = self.w_coverage();
        self.priorities(scenario, belief, candidates)
            .into_iter()
            .zip(candidates)
            .zip(delta)
            .map(|((p, c), d)| utility(d, p, w_i, c.gain))
            .collect()
    }
}

/// Recognises rooms from the characteristic objects observed in them.
struct RoomClassifier<'a> {
    cfg: &'a OracleConfig,
    category_of_class: Vec<Option<RoomCategory>>,
    door: Option<usize>,
}

impl<'a> RoomClassifier<'a> {
    fn new(scenario: &Scenario, cfg: &'a OracleConfig) -> Self {
        let mut category_of_class = vec![None; scenario.class_names.len()];
        for cat in RoomCategory::ALL {
            for name in cfg.characteristic.get(cat) {
                if let Some(i) = scenario.class_index(name) {
                    category_of_class[i].get_or_insert(cat);
                }
            }
        }
        Self {
            cfg,
            category_of_class,
            door: scenario.class_index(&cfg.door_class),
        }
    }

    /// Category with the most observed characteristic objects in `region`;
    /// ties go to the earlier category.
    fn classify(&self, belief: &WorldBelief, region: u32) -> Option<RoomCategory> {
        let mut votes: BTreeMap<RoomCategory, usize> = BTreeMap::new();
        for o in belief.observed().iter().filter(|o| o.region == Some(region)) {
            if let Some(cat) = self.category_of_class.get(o.class_index).copied().flatten() {
                *votes.entry(cat).or_default() += 1;
            }
        }
        let best = votes.values().copied().max()?;
        votes.into_iter().find(|&(_, n)| n == best).map(|(c, _)| c)
    }

    fn priority(&self, belief: &WorldBelief, c: &Candidate) -> f64 {
        let t = &self.cfg.rooms;
        let base = match self.classify(belief, c.region_id) {
            None => t.unseen_room,
            Some(cat) if cat == self.cfg.target_room => t.target_room,
            Some(cat) => t.overrides.get(&cat).copied().unwrap_or(t.other),
        };
        let door_near = self
            .door
            .and_then(|d| c.features.local.get(d).copied())
            .unwrap_or(false);
        base + if door_near { t.door_bonus } else { 0.0 }
    }
}

/// Outcome of one oracle evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleDecision {
    /// Index into the candidate list of the sampled preferred frontier.
    pub sampled: usize,
    pub utilities: Vec<f64>,
    /// Set when the oracle overrides the planner.
    pub intervention: Option<NodeId>,
}

/// Samples the expert's preferred frontier: with probability `2 rho` a
/// uniformly random one, otherwise from `softmax(beta * u)`. For two
/// candidates this reproduces the pairwise choice model exactly.
/// Exactly two uniform draws are consumed per call.
pub fn sample_choice(utilities: &[f64], params: &ExpertParams, rng: &mut impl Rng) -> usize {
    let n = utilities.len();
    let noise: f64 = rng.gen();
    let pick: f64 = rng.gen();
    if n <= 1 {
        return 0;
    }
    if noise < 2.0 * params.rho {
        return ((pick * n as f64) as usize).min(n - 1);
    }
    let u_max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if params.beta.is_infinite() {
        return utilities.iter().position(|&u| u == u_max).unwrap_or(0);
    }
    let weights: Vec<f64> = utilities.iter().map(|u| (params.beta * (u - u_max)).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w / total;
        if pick < acc {
            return i;
        }
    }
    n - 1
}

/// Decides whether the oracle overrides the planner's subgoal. The oracle
/// samples its preferred frontier and intervenes iff that frontier differs
/// from the planner's and beats it in utility by more than `tau`.
pub fn oracle_decide(
    policy: &OraclePolicy,
    scenario: &Scenario,
    belief: &WorldBelief,
    candidates: &[Candidate],
    planner_choice: NodeId,
    rng: &mut impl Rng,
) -> OracleDecision {
    let utilities = policy.utilities(scenario, belief, candidates);
    let sampled = sample_choice(&utilities, policy.params(), rng);
    let planned = candidates.iter().position(|c| c.frontier_id == planner_choice);
    let intervention = match planned {
        _ if candidates.len() < 2 => None,
        Some(p) if p == sampled => None,
        Some(p) if utilities[sampled] - utilities[p] <= policy.params().tau => None,
        _ => Some(candidates[sampled].frontier_id),
    };
    OracleDecision {
        sampled,
        utilities,
        intervention,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Oracle,
    Human,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub frontier_id: NodeId,
    pub position: [i32; 2],
    /// `[phi_s, phi_n]`.
    pub features: Vec<f64>,
    pub gain: f64,
    pub distance: f64,
    /// `delta * [phi_s, phi_n, gain]` under the dataset's discount model.
    pub augmented: Vec<f64>,
}

/// One expert choice among the frontiers available at that moment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChoiceRecord {
    pub scenario_id: String,
    pub timestep: usize,
    /// Bridge revision the choice referred to, for live sessions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revision: Option<u64>,
    pub chosen_frontier_id: NodeId,
    pub candidates: Vec<CandidateRecord>,
    pub provenance: Provenance,
}

impl ChoiceRecord {
    pub fn chosen(&self) -> Option<&CandidateRecord> {
        self.candidates.iter().find(|c| c.frontier_id == self.chosen_frontier_id)
    }

    /// `(chosen, other)` augmented-feature pairs, one per other candidate.
    pub fn pairs(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        let chosen = self.chosen().map(|c| c.augmented.as_slice());
        self.candidates
            .iter()
            .filter(move |c| c.frontier_id != self.chosen_frontier_id)
            .filter_map(move |c| chosen.map(|e| (e, c.augmented.as_slice())))
    }
}

/// Snapshots every candidate's features at decision time.
pub fn record_choice(
    scenario_id: &str,
    timestep: usize,
    chosen: NodeId,
    candidates: &[Candidate],
    discount_model: &ExpertParams,
    provenance: Provenance,
) -> Result<ChoiceRecord, ExpertError> {
    if !candidates.iter().any(|c| c.frontier_id == chosen) {
        return Err(ExpertError::InvalidIntervention(format!("{chosen} is not a current frontier")));
    }
    if candidates.len() < 2 {
        return Err(ExpertError::InvalidIntervention(
            "a choice needs at least two candidate frontiers".into(),
        ));
    }
    let dist: Vec<f64> = candidates.iter().map(|c| c.distance).collect();
    let delta = discounts(&dist, discount_model);
    Ok(ChoiceRecord {
        scenario_id: scenario_id.to_string(),
        timestep,
        revision: None,
        chosen_frontier_id: chosen,
        candidates: candidates
            .iter()
            .zip(delta)
            .map(|(c, d)| CandidateRecord {
                frontier_id: c.frontier_id,
                position: [c.cell.x, c.cell.y],
                features: c.features.values(),
                gain: c.gain,
                distance: c.distance,
                augmented: c.features.augmented(d, c.gain),
            })
            .collect(),
        provenance,
    })
}

pub const DATASET_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub class_names: Vec<String>,
    pub lambda: f64,
    /// Discount model used for the augmented features.
    pub discount: ExpertParams,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum Line {
    Header(DatasetHeader),
    Choice(ChoiceRecord),
}

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Intervention dataset stored as JSON lines: one header, then one line
/// per choice.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub records: Vec<ChoiceRecord>,
}

impl Dataset {
    pub fn new(header: DatasetHeader) -> Self {
        Self {
            header,
            records: Vec::new(),
        }
    }

    pub fn pair_count(&self) -> usize {
        self.records.iter().map(|r| r.pairs().count()).sum()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Line::Header(self.header.clone())).expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(&Line::Choice(r.clone())).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_reader(reader: impl BufRead) -> Result<Self, DatasetError> {
        let mut header = None;
        let mut records = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let err = |message: String| DatasetError::Format { line: i + 1, message };
            match serde_json::from_str::<Line>(&line).map_err(|e| err(e.to_string()))? {
                Line::Header(h) => {
                    if header.is_some() {
                        return Err(err("second header".into()));
                    }
                    if h.format_version != DATASET_FORMAT_VERSION {
                        return Err(err(format!("unsupported format version {}", h.format_version)));
                    }
                    header = Some(h);
                }
                Line::Choice(r) => {
                    let Some(h) = &header else {
                        return Err(err("choice before header".into()));
                    };
                    let dim = h.class_names.len() + 2;
                    if r.chosen().is_none() {
                        return Err(err("chosen frontier missing from candidates".into()));
                    }
                    if let Some(c) = r.candidates.iter().find(|c| c.augmented.len() != dim) {
                        return Err(err(format!(
                            "candidate {} has {} augmented features, expected {dim}",
                            c.frontier_id,
                            c.augmented.len()
                        )));
                    }
                    records.push(r);
                }
            }
        }
        let header = header.ok_or(DatasetError::Format {
            line: 0,
            message: "missing header".into(),
        })?;
        Ok(Self { header, records })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(self.to_jsonl().as_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        let f = std::fs::File::open(path)?;
        Self::from_reader(std::io::BufReader::new(f))
    }

    /// Hex SHA-256 of the serialized dataset.
    pub fn content_hash(&self) -> String {
        Sha256::digest(self.to_jsonl().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::open_room;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn features(semantic: Vec<f64>, novelty: f64) -> FeatureVector {
        FeatureVector {
            local: semantic.iter().map(|&x| x > 0.0).collect(),
            region: semantic.iter().map(|&x| x > 0.0).collect(),
            semantic,
            novelty,
        }
    }

    fn cand(id: NodeId, phi: Vec<f64>, gain: f64, distance: f64) -> Candidate {
        Candidate {
            frontier_id: id,
            cell: Cell::new(id as i32, 1),
            region_id: 0,
            features: features(phi, 0.0),
            gain,
            distance,
        }
    }

    #[test]
    fn linear_discount_endpoints() {
        let p = ExpertParams::default();
        let d = discounts(&[0.0, 2.0, 4.0], &p);
        assert!((d[0] - 1.2).abs() < 1e-12);
        assert!((d[1] - 0.7).abs() < 1e-12);
        assert!((d[2] - 0.2).abs() < 1e-12);
        assert_eq!(discounts(&[0.0, 0.0], &p), vec![1.2, 1.2]);
        // a single frontier is also the farthest one
        assert!((discounts(&[3.0], &p)[0] - 0.2).abs() < 1e-12);
    }

    #[test]
    fn exponential_discount_uses_normalized_distance() {
        let p = ExpertParams {
            discount: DiscountKind::Exponential,
            ..Default::default()
        };
        let d = discounts(&[0.0, 5.0, 10.0], &p);
        assert_eq!(d[0], 1.0);
        assert!((d[1] - (-0.05f64).exp()).abs() < 1e-12);
        assert!((d[2] - (-0.1f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn utility_is_the_discounted_sum() {
        assert_eq!(utility(1.3, 0.0, 0.0, 5.0), 0.0);
        assert_eq!(utility(1.0, 1.0, 0.5, 0.0), 1.0);
        assert!((utility(0.7, 0.4, 0.1, 3.0) - 0.7 * (0.4 + 0.3)).abs() < 1e-12);
    }

    #[test]
    fn utility_equals_augmented_dot_product() {
        let model = PriorityModel {
            w: vec![0.3, 0.9, 0.5],
            w_coverage: 0.05,
        };
        let f = features(vec![0.7, 0.3], 1.0);
        let (delta, gain) = (0.8, 4.0);
        let p = priority(&model, &f.values());
        let direct = utility(delta, p, model.w_coverage, gain);
        let dot: f64 = model.augmented().iter().zip(f.augmented(delta, gain)).map(|(a, b)| a * b).sum();
        assert!((direct - dot).abs() < 1e-12);
    }

    #[test]
    fn choice_probability_closed_form() {
        let w = [1.0, 0.0];
        let p = choice_probability(&[0.5, 0.0], &[0.0, 0.0], &w, 10.0, 0.1);
        let expect = 0.8 / (1.0 + (-5.0f64).exp()) + 0.1;
        assert!((p - expect).abs() < 1e-12);
        let q = choice_probability(&[0.0, 0.0], &[0.5, 0.0], &w, 10.0, 0.1);
        assert!((p + q - 1.0).abs() < 1e-12);
        assert_eq!(choice_probability(&[0.2, 0.2], &[0.2, 0.2], &w, 10.0, 0.1), 0.5);
    }

    #[test]
    fn sampling_frequency_matches_pairwise_model() {
        let params = ExpertParams {
            beta: 10.0,
            rho: 0.1,
            ..Default::default()
        };
        let u = [0.55, 0.45];
        let p = sigma_rho(params.beta * (u[0] - u[1]), params.rho);
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let hits = (0..n).filter(|_| sample_choice(&u, &params, &mut rng) == 0).count();
        let sd = (p * (1.0 - p) / n as f64).sqrt();
        let freq = hits as f64 / n as f64;
        assert!((freq - p).abs() < 3.0 * sd, "{freq} vs {p}");
    }

    fn linear_policy(tau: f64) -> OraclePolicy {
        OraclePolicy::Linear {
            model: PriorityModel {
                w: vec![1.0, 0.0, 0.0],
                w_coverage: 0.0,
            },
            params: ExpertParams {
                beta: f64::INFINITY,
                tau,
                ..Default::default()
            },
        }
    }

    #[test]
    fn no_intervention_when_planner_matches_argmax() {
        let s = open_room(10, Cell::new(2, 2), Cell::new(7, 7));
        let b = WorldBelief::new(&s);
        let c = vec![cand(0, vec![0.0, 0.0], 3.0, 1.0), cand(1, vec![1.0, 0.0], 3.0, 1.0)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = oracle_decide(&linear_policy(0.05), &s, &b, &c, 1, &mut rng);
        assert_eq!(d.intervention, None);
        let d = oracle_decide(&linear_policy(0.05), &s, &b, &c, 0, &mut rng);
        assert_eq!(d.intervention, Some(1));
        let d = oracle_decide(&linear_policy(10.0), &s, &b, &c, 0, &mut rng);
        assert_eq!(d.intervention, None);
    }

    #[test]
    fn target_room_frontier_wins_in_room_fixture() {
        use crate::scenario::{ObjectRef, Region, SemanticObject};
        use crate::sim::BeliefDelta;
        // two rooms side by side; a wardrobe marks the right one as a bedroom
        let base = open_room(20, Cell::new(3, 10), Cell::new(17, 17));
        let mut occ = base.occupancy.clone();
        for y in 0..20 {
            occ.set(Cell::new(10, y), true);
        }
        occ.set(Cell::new(10, 10), false);
        let left: Vec<Cell> = occ.cells().filter(|&c| !occ[c] && c.x <= 10).collect();
        let right: Vec<Cell> = occ.cells().filter(|&c| !occ[c] && c.x > 10).collect();
        let names: Vec<String> = ["bed", "door", "wardrobe", "sink"].map(String::from).to_vec();
        let s = Scenario::new(
            "rooms".into(),
            0.25,
            occ,
            vec![
                Region {
                    id: 0,
                    category: RoomCategory::Kitchen,
                    cells: left,
                },
                Region {
                    id: 1,
                    category: RoomCategory::Bedroom,
                    cells: right,
                },
            ],
            vec![
                SemanticObject {
                    position: Cell::new(17, 17),
                    class_index: 0,
                },
                SemanticObject {
                    position: Cell::new(13, 4),
                    class_index: 2,
                },
                SemanticObject {
                    position: Cell::new(5, 4),
                    class_index: 3,
                },
            ],
            Cell::new(3, 10),
            ObjectRef {
                class_index: 0,
                instance: 0,
            },
            names,
        )
        .unwrap();
        let mut b = WorldBelief::new(&s);
        let cells = s
            .occupancy
            .cells()
            .filter(|c| c.x < 14)
            .map(|c| (c, if s.occupancy[c] { -1 } else { 1 }, s.region_at(c)))
            .collect();
        b.integrate(&s, &BeliefDelta { cells, objects: vec![1, 2] });
        let mut cfg = OracleConfig::default();
        cfg.characteristic.kitchen = vec!["sink".into()];
        cfg.characteristic.bedroom = vec!["wardrobe".into()];
        let policy = OraclePolicy::RoomTypes(cfg);
        let mk = |id, x, region| Candidate {
            frontier_id: id,
            cell: Cell::new(x, 8),
            region_id: region,
            features: features(vec![0.0; 4], 0.0),
            gain: 4.0,
            distance: 2.0,
        };
        let c = vec![mk(0, 4, 0), mk(1, 13, 1)];
        let u = policy.utilities(&s, &b, &c);
        // equal distances: delta = 0.2 for both, kitchen priority 0, bedroom 1
        assert!((u[0] - 0.2 * (0.0 + 0.02 * 4.0)).abs() < 1e-12);
        assert!((u[1] - 0.2 * (1.0 + 0.02 * 4.0)).abs() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = oracle_decide(&policy, &s, &b, &c, 0, &mut rng);
        assert_eq!(d.intervention, Some(1));
    }

    #[test]
    fn record_validation() {
        let c = vec![cand(3, vec![0.0, 0.0], 3.0, 1.0), cand(5, vec![1.0, 0.0], 3.0, 2.0)];
        let p = ExpertParams::default();
        assert!(matches!(
            record_choice("s", 0, 4, &c, &p, Provenance::Human),
            Err(ExpertError::InvalidIntervention(_))
        ));
        assert!(record_choice("s", 0, 3, &c[..1], &p, Provenance::Human).is_err());
        let r = record_choice("s", 0, 5, &c, &p, Provenance::Oracle).unwrap();
        assert_eq!(r.pairs().count(), 1);
        assert_eq!(r.candidates[0].augmented.len(), 4);
    }

    #[test]
    fn five_candidates_expand_to_four_pairs() {
        let c: Vec<Candidate> = (0..5).map(|i| cand(i, vec![0.0, 0.0], 3.0, i as f64)).collect();
        let r = record_choice("s", 2, 3, &c, &ExpertParams::default(), Provenance::Oracle).unwrap();
        assert_eq!(r.candidates.len(), 5);
        assert_eq!(r.pairs().count(), 4);
    }

    #[test]
    fn dataset_round_trip_and_errors() {
        let c = vec![cand(3, vec![0.0, 0.7], 3.0, 1.0), cand(5, vec![1.0, 0.0], 3.0, 2.0)];
        let mut ds = Dataset::new(DatasetHeader {
            format_version: DATASET_FORMAT_VERSION,
            class_names: vec!["a".into(), "b".into()],
            lambda: 0.7,
            discount: ExpertParams::default(),
        });
        ds.records
            .push(record_choice("s", 0, 5, &c, &ExpertParams::default(), Provenance::Oracle).unwrap());
        let text = ds.to_jsonl();
        let back = Dataset::from_reader(text.as_bytes()).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.content_hash(), ds.content_hash());
        let no_header = text.lines().nth(1).unwrap();
        assert!(Dataset::from_reader(no_header.as_bytes()).is_err());
    }
}
