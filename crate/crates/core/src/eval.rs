//! Batch evaluation: paired episodes per scenario, path-length metrics and
//! report files.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::episode::{Episode, EpisodeConfig, Outcome, PrioritySource};
use crate::expert::{Dataset, DatasetHeader, ExpertParams, OracleConfig, OraclePolicy, DATASET_FORMAT_VERSION};
use crate::grid::{line_of_sight, Cell, Grid};
use crate::learn::{train_all, TrainConfig, TrainError};
use crate::planner::PlannerMode;
use crate::scenario::Scenario;
use crate::semantics::PriorityModel;
use crate::sim::Sensor;

pub const SUMMARY_FORMAT_VERSION: u32 = 1;

/// Path length ratio of a semantic run to the coverage run.
pub fn plr(l_sem: f64, l_cov: f64) -> f64 {
    l_sem / l_cov
}

/// Success weighted by path length.
pub fn spl(found: bool, l: f64, l_star: f64) -> f64 {
    if !found {
        return 0.0;
    }
    let denom = l.max(l_star);
    if denom > 0.0 {
        l_star / denom
    } else {
        1.0
    }
}

/// Cells from whose center the target object is within sensing range and
/// in line of sight.
pub fn observation_cells(scenario: &Scenario, range_cells: f64) -> Grid<bool> {
    let sensor = Sensor::new(range_cells);
    let target = scenario.target_object().position;
    let mut out = Grid::new(scenario.grid_size(), false);
    let r = range_cells.ceil() as i32;
    for dy in -r..=r {
        for dx in -r..=r {
            let c = target.offset(dx, dy);
            if scenario.is_free(c) && sensor.sees(scenario, c, target) {
                out.set(c, true);
            }
        }
    }
    out
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Offsets with coprime components and length at most `radius`: the
/// straight moves of the any-angle distance search.
pub fn sight_offsets(radius: i32) -> Vec<Cell> {
    let mut v = Vec::new();
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            if (dx, dy) != (0, 0) && dx * dx + dy * dy <= radius * radius && gcd(dx, dy) == 1 {
                v.push(Cell::new(dx, dy));
            }
        }
    }
    v
}

pub const SIGHT_RADIUS: i32 = 6;

#[derive(Clone, Copy, PartialEq)]
struct Entry(f64, Cell);

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest distance in meters from the start to any cell from which the
/// target is observable. Moves are straight segments between free cell
/// centers along [`sight_offsets`] whose supercover is free. `None` when no
/// observation cell is reachable.
pub fn shortest_observation_distance(scenario: &Scenario, range_cells: f64) -> Option<f64> {
    let goal = observation_cells(scenario, range_cells);
    let offsets = sight_offsets(SIGHT_RADIUS);
    let blocked = |c: Cell| !scenario.is_free(c);
    let mut dist = Grid::new(scenario.grid_size(), f64::INFINITY);
    let start = scenario.start_cell;
    dist.set(start, 0.0);
    let mut heap = BinaryHeap::from([Entry(0.0, start)]);
    while let Some(Entry(d, c)) = heap.pop() {
        if d > dist[c] {
            continue;
        }
        if goal[c] {
            return Some(d * scenario.cell_size);
        }
        for o in &offsets {
            let n = c.offset(o.x, o.y);
            if !scenario.is_free(n) {
                continue;
            }
            let nd = d + ((o.x * o.x + o.y * o.y) as f64).sqrt();
            if nd < dist[n] && line_of_sight(c, n, blocked) {
                dist.set(n, nd);
                heap.push(Entry(nd, n));
            }
        }
    }
    None
}

/// Scenario keep-rule: the coverage planner must travel at least
/// `min_ratio` times the shortest observation distance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationConfig {
    pub min_ratio: f64,
}

impl Default for CurationConfig {
    fn default() -> Self {
        Self { min_ratio: 2.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub episode: EpisodeConfig,
    /// Episode cap as a multiple of the coverage planner's full-exploration
    /// step count on the same scenario.
    pub budget_factor: f64,
    /// Worker threads; `None` uses all cores.
    pub jobs: Option<usize>,
    pub oracle: OracleConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        let mut episode = EpisodeConfig::default();
        episode.planner.lns.time_budget_ms = None;
        Self {
            episode,
            budget_factor: 4.0,
            jobs: None,
            oracle: OracleConfig::default(),
        }
    }
}

impl EvalConfig {
    fn pool(&self) -> rayon::ThreadPool {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs.unwrap_or(0))
            .build()
            .expect("thread pool")
    }
}

/// Episode seed shared by every planner on one scenario.
pub fn scenario_seed(base: u64, scenario_id: &str) -> u64 {
    let h = Sha256::digest(scenario_id.as_bytes());
    base ^ u64::from_le_bytes(h[..8].try_into().expect("8 bytes"))
}

/// Per-scenario quantities shared by all of its episodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioInfo {
    pub scenario_id: String,
    pub seed: u64,
    /// Steps the coverage planner needs to explore the targetless scenario.
    pub coverage_steps: usize,
    pub max_steps: usize,
    /// Shortest observation distance, meters.
    pub shortest: Option<f64>,
}

pub fn scenario_info(scenario: &Scenario, config: &EvalConfig) -> Result<ScenarioInfo, String> {
    let seed = scenario_seed(config.episode.seed, &scenario.id);
    let mut cfg = config.episode.clone();
    cfg.seed = seed;
    cfg.sim.max_steps = usize::MAX;
    let targetless = Arc::new(scenario.without_target().0);
    let mut e = Episode::new(targetless, cfg, PrioritySource::Coverage, None).map_err(|e| e.to_string())?;
    e.run().map_err(|e| e.to_string())?;
    let coverage_steps = e.steps();
    let range = config.episode.sim.range_cells(scenario.cell_size);
    Ok(ScenarioInfo {
        scenario_id: scenario.id.clone(),
        seed,
        coverage_steps,
        max_steps: ((coverage_steps.max(1) as f64) * config.budget_factor).ceil() as usize,
        shortest: shortest_observation_distance(scenario, range),
    })
}

/// One planner configuration in a suite.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeRun {
    pub mode: PlannerMode,
    /// Training seed of the model, for learned runs.
    pub training_seed: Option<u64>,
    pub source: PrioritySource,
    pub oracle: Option<OraclePolicy>,
}

/// Expands planner modes into runs. Learned mode yields one run per model.
pub fn mode_runs(
    modes: &[PlannerMode],
    models: &[(u64, PriorityModel)],
    oracle: &OracleConfig,
    class_names: &[String],
) -> Vec<ModeRun> {
    let mut runs = Vec::new();
    for &mode in modes {
        let run = |source, oracle| ModeRun {
            mode,
            training_seed: None,
            source,
            oracle,
        };
        match mode {
            PlannerMode::Learned => runs.extend(models.iter().map(|(seed, m)| ModeRun {
                mode,
                training_seed: Some(*seed),
                source: PrioritySource::Linear(m.clone()),
                oracle: None,
            })),
            PlannerMode::Coverage => runs.push(run(PrioritySource::Coverage, None)),
            PlannerMode::OraclePriorities => {
                runs.push(run(PrioritySource::Oracle(OraclePolicy::RoomTypes(oracle.clone())), None))
            }
            PlannerMode::LinearOracle => runs.push(run(
                PrioritySource::Oracle(OraclePolicy::Linear {
                    model: linear_oracle_model(class_names),
                    params: oracle.params.clone(),
                }),
                None,
            )),
            PlannerMode::OracleInterventions => runs.push(run(
                PrioritySource::Coverage,
                Some(OraclePolicy::RoomTypes(oracle.clone())),
            )),
        }
    }
    runs
}

/// A hand-set linear model over the generator's classes that favours the
/// bedroom and unseen rooms.
pub fn linear_oracle_model(class_names: &[String]) -> PriorityModel {
    let n = class_names.len();
    let mut m = PriorityModel::zeros(n + 1);
    for (i, name) in class_names.iter().enumerate() {
        m.w[i] = match name.as_str() {
            "bed" | "wardrobe" => 1.0,
            "sofa" | "tv" => 0.4,
            "door" => 0.3,
            _ => 0.0,
        };
    }
    m.w[n] = 0.6;
    m.w_coverage = 0.02;
    m
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario_id: String,
    pub mode: PlannerMode,
    pub training_seed: Option<u64>,
    pub seed: u64,
    pub outcome: Option<Outcome>,
    /// Meters traveled until the episode ended.
    pub path_length: f64,
    /// Shortest observation distance, meters.
    pub shortest: Option<f64>,
    pub steps: usize,
    pub interventions: usize,
    pub spl: f64,
    /// Ratio to the coverage run on the same scenario when both found the target.
    pub plr: Option<f64>,
    pub error: Option<String>,
}

impl EpisodeResult {
    pub fn found(&self) -> bool {
        self.outcome == Some(Outcome::Found)
    }
}

fn run_one(scenario: &Arc<Scenario>, info: &Result<ScenarioInfo, String>, run: &ModeRun, config: &EvalConfig) -> EpisodeResult {
    let mut r = EpisodeResult {
        scenario_id: scenario.id.clone(),
        mode: run.mode,
        training_seed: run.training_seed,
        seed: 0,
        outcome: None,
        path_length: 0.0,
        shortest: None,
        steps: 0,
        interventions: 0,
        spl: 0.0,
        plr: None,
        error: None,
    };
    let info = match info {
        Ok(i) => i,
        Err(e) => {
            r.error = Some(e.clone());
            return r;
        }
    };
    r.seed = info.seed;
    r.shortest = info.shortest;
    let mut cfg = config.episode.clone();
    cfg.seed = info.seed;
    cfg.sim.max_steps = info.max_steps;
    cfg.planner.mode = run.mode;
    let result = Episode::new(scenario.clone(), cfg, run.source.clone(), run.oracle.clone())
        .and_then(|mut e| e.run().map(|o| (o, e)));
    match result {
        Ok((outcome, e)) => {
            r.outcome = Some(outcome);
            r.path_length = e.belief().traveled();
            r.steps = e.steps();
            r.interventions = e.interventions();
            r.spl = match info.shortest {
                Some(s) => spl(outcome == Outcome::Found, r.path_length, s),
                None => 0.0,
            };
        }
        Err(e) => r.error = Some(e.to_string()),
    }
    r
}

/// Order statistics of one sample, for box plots.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxStats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            n: v.len(),
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: PlannerMode,
    pub episodes: usize,
    pub found: usize,
    pub budget: usize,
    pub errors: usize,
    pub interventions: usize,
    pub plr: Option<BoxStats>,
    pub plr_mean: Option<f64>,
    pub plr_below_1: Option<f64>,
    pub plr_below_1_3: Option<f64>,
    pub spl_mean: f64,
    pub spl_std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteSummary {
    pub format_version: u32,
    pub scenarios: usize,
    pub modes: Vec<ModeSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub scenarios: Vec<ScenarioInfo>,
    pub results: Vec<EpisodeResult>,
    pub summary: SuiteSummary,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Aggregates per mode, in first-appearance order.
pub fn summarize(results: &[EpisodeResult], scenarios: usize) -> SuiteSummary {
    let mut order: Vec<PlannerMode> = Vec::new();
    for r in results {
        if !order.contains(&r.mode) {
            order.push(r.mode);
        }
    }
    let modes = order
        .into_iter()
        .map(|mode| {
            let rs: Vec<&EpisodeResult> = results.iter().filter(|r| r.mode == mode).collect();
            let plrs: Vec<f64> = rs.iter().filter_map(|r| r.plr).collect();
            let spls: Vec<f64> = rs.iter().filter(|r| r.error.is_none()).map(|r| r.spl).collect();
            let (spl_mean, spl_std) = mean_std(&spls);
            let frac = |t: f64| {
                (!plrs.is_empty()).then(|| plrs.iter().filter(|&&x| x < t).count() as f64 / plrs.len() as f64)
            };
            ModeSummary {
                mode,
                episodes: rs.len(),
                found: rs.iter().filter(|r| r.found()).count(),
                budget: rs.iter().filter(|r| r.outcome == Some(Outcome::Budget)).count(),
                errors: rs.iter().filter(|r| r.error.is_some()).count(),
                interventions: rs.iter().map(|r| r.interventions).sum(),
                plr: BoxStats::of(&plrs),
                plr_mean: (!plrs.is_empty()).then(|| mean_std(&plrs).0),
                plr_below_1: frac(1.0),
                plr_below_1_3: frac(1.3),
                spl_mean,
                spl_std,
            }
        })
        .collect();
    SuiteSummary {
        format_version: SUMMARY_FORMAT_VERSION,
        scenarios,
        modes,
    }
}

/// Fills `plr` against the coverage run of the same scenario.
fn pair_with_coverage(results: &mut [EpisodeResult], coverage: &BTreeMap<String, f64>) {
    for r in results.iter_mut() {
        if r.found() {
            if let Some(&l_cov) = coverage.get(&r.scenario_id) {
                if l_cov > 0.0 {
                    r.plr = Some(plr(r.path_length, l_cov));
                }
            }
        }
    }
}

/// Runs every (scenario, run) pair. A coverage run is always executed per
/// scenario to pair PLR, but only reported when `Coverage` is requested.
pub fn run_suite(scenarios: &[Arc<Scenario>], modes: &[PlannerMode], models: &[(u64, PriorityModel)], config: &EvalConfig) -> SuiteReport {
    let pool = config.pool();
    pool.install(|| {
        let infos: Vec<Result<ScenarioInfo, String>> =
            scenarios.par_iter().map(|s| scenario_info(s, config)).collect();
        let classes = scenarios.first().map(|s| s.class_names.clone()).unwrap_or_default();
        let mut runs = mode_runs(modes, models, &config.oracle, &classes);
        let report_coverage = modes.contains(&PlannerMode::Coverage);
        if !modes.is_empty() && !report_coverage {
            runs.push(mode_runs(&[PlannerMode::Coverage], &[], &config.oracle, &classes).remove(0));
        }
        let jobs: Vec<(usize, usize)> = (0..scenarios.len())
            .flat_map(|s| (0..runs.len()).map(move |r| (s, r)))
            .collect();
        let mut results: Vec<EpisodeResult> = jobs
            .par_iter()
            .map(|&(s, r)| run_one(&scenarios[s], &infos[s], &runs[r], config))
            .collect();
        let coverage: BTreeMap<String, f64> = results
            .iter()
            .filter(|r| r.mode == PlannerMode::Coverage && r.found())
            .map(|r| (r.scenario_id.clone(), r.path_length))
            .collect();
        pair_with_coverage(&mut results, &coverage);
        if !report_coverage {
            results.retain(|r| r.mode != PlannerMode::Coverage);
        }
        let summary = summarize(&results, scenarios.len());
        SuiteReport {
            scenarios: infos.into_iter().filter_map(Result::ok).collect(),
            results,
            summary,
        }
    })
}

/// Writes `results.jsonl`, `summary.json`, `plr_boxplot.csv` and
/// `plr_values.csv` into `dir`.
pub fn write_report(report: &SuiteReport, dir: impl AsRef<Path>) -> std::io::Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("results.jsonl"), results_jsonl(&report.results))?;
    fs::write(
        dir.join("summary.json"),
        serde_json::to_string_pretty(&report.summary).expect("summary serializes"),
    )?;
    let mut f = fs::File::create(dir.join("plr_boxplot.csv"))?;
    writeln!(f, "mode,n,min,q1,median,q3,max")?;
    for m in &report.summary.modes {
        if let Some(b) = &m.plr {
            writeln!(f, "{},{},{},{},{},{},{}", m.mode, b.n, b.min, b.q1, b.median, b.q3, b.max)?;
        }
    }
    let mut f = fs::File::create(dir.join("plr_values.csv"))?;
    writeln!(f, "mode,scenario_id,training_seed,plr")?;
    for r in &report.results {
        if let Some(p) = r.plr {
            let seed = r.training_seed.map(|s| s.to_string()).unwrap_or_default();
            writeln!(f, "{},{},{},{}", r.mode, r.scenario_id, seed, p)?;
        }
    }
    Ok(())
}

pub fn results_jsonl(results: &[EpisodeResult]) -> String {
    let mut out = String::new();
    for r in results {
        out.push_str(&serde_json::to_string(r).expect("result serializes"));
        out.push('\n');
    }
    out
}

/// Keeps scenarios on which coverage exploration is long relative to the
/// shortest observation distance.
pub fn curate(scenarios: Vec<Arc<Scenario>>, curation: &CurationConfig, config: &EvalConfig) -> Vec<Arc<Scenario>> {
    let report = run_suite(&scenarios, &[PlannerMode::Coverage], &[], config);
    let keep: BTreeMap<&str, bool> = report
        .results
        .iter()
        .map(|r| {
            let ok = r.found() && r.shortest.is_some_and(|s| r.path_length >= curation.min_ratio * s);
            (r.scenario_id.as_str(), ok)
        })
        .collect();
    scenarios
        .into_iter()
        .filter(|s| keep.get(s.id.as_str()).copied().unwrap_or(false))
        .collect()
}

/// Collects an intervention dataset: the coverage planner runs on each
/// scenario while `oracle` intervenes.
pub fn collect_dataset(scenarios: &[Arc<Scenario>], oracle: &OraclePolicy, config: &EvalConfig) -> Dataset {
    let class_names = scenarios.first().map(|s| s.class_names.clone()).unwrap_or_default();
    let mut ds = Dataset::new(DatasetHeader {
        format_version: DATASET_FORMAT_VERSION,
        class_names,
        lambda: config.episode.features.lambda,
        discount: oracle.params().clone(),
    });
    let per: Vec<Vec<_>> = config.pool().install(|| {
        scenarios
            .par_iter()
            .map(|s| {
                let mut cfg = config.episode.clone();
                cfg.seed = scenario_seed(config.episode.seed, &s.id);
                cfg.record_model = oracle.params().clone();
                cfg.planner.mode = PlannerMode::OracleInterventions;
                match Episode::new(s.clone(), cfg, PrioritySource::Coverage, Some(oracle.clone())) {
                    Ok(mut e) => {
                        let _ = e.run();
                        e.take_records()
                    }
                    Err(_) => Vec::new(),
                }
            })
            .collect()
    });
    ds.records = per.into_iter().flatten().collect();
    ds
}

/// One dataset variant of the robustness study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationVariant {
    pub name: String,
    pub episodes: usize,
    pub params: ExpertParams,
}

/// Dataset sizes {5, 10, 20, 30} at default oracle parameters plus the
/// exponential-discount, lowered-rationality and high-threshold oracles at
/// `base_episodes`.
pub fn default_ablation(base_episodes: usize) -> Vec<AblationVariant> {
    let base = ExpertParams::default();
    let mut v: Vec<AblationVariant> = [5, 10, 20, 30]
        .into_iter()
        .map(|n| AblationVariant {
            name: format!("n_eps_{n}"),
            episodes: n,
            params: base.clone(),
        })
        .collect();
    let variant = |name: &str, params: ExpertParams| AblationVariant {
        name: name.into(),
        episodes: base_episodes,
        params,
    };
    v.push(variant(
        "exponential",
        ExpertParams {
            discount: crate::expert::DiscountKind::Exponential,
            gamma: 0.1,
            ..base.clone()
        },
    ));
    v.push(variant("low_beta", ExpertParams { beta: 5.0, ..base.clone() }));
    v.push(variant("tau_0.2", ExpertParams { tau: 0.2, ..base }));
    v
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub episodes: usize,
    pub interventions: usize,
    pub pairs: usize,
    pub summary: ModeSummary,
}

/// Collects, trains and evaluates every variant. Training data comes from
/// the first `episodes` of `train_scenarios`.
pub fn ablation_sweep(
    variants: &[AblationVariant],
    train_scenarios: &[Arc<Scenario>],
    eval_scenarios: &[Arc<Scenario>],
    train: &TrainConfig,
    config: &EvalConfig,
) -> Result<Vec<AblationRow>, TrainError> {
    let mut rows = Vec::new();
    for v in variants {
        let mut oracle_cfg = config.oracle.clone();
        oracle_cfg.params = v.params.clone();
        let n = v.episodes.min(train_scenarios.len());
        let ds = collect_dataset(&train_scenarios[..n], &OraclePolicy::RoomTypes(oracle_cfg), config);
        let interventions = ds.records.len();
        let models: Vec<(u64, PriorityModel)> = train_all(&ds, train)?
            .into_iter()
            .map(|o| (o.seed, o.model))
            .collect();
        let report = run_suite(eval_scenarios, &[PlannerMode::Learned], &models, config);
        let summary = report
            .summary
            .modes
            .into_iter()
            .next()
            .expect("learned mode summarized");
        rows.push(AblationRow {
            variant: v.name.clone(),
            episodes: n,
            interventions,
            pairs: ds.pair_count(),
            summary,
        });
    }
    Ok(rows)
}
