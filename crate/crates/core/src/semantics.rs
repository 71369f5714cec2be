//! Semantic frontier features and the linear priority model.
//!
//! A frontier's feature vector has one component per semantic class plus a
//! trailing region-novelty component. Class components blend a regional
//! indicator (class observed anywhere in the frontier's region) with a local
//! one (class observed within a small radius with line of sight):
//! `phi_s = lambda * region + (1 - lambda) * local`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::grid::{line_of_sight, Cell};
use crate::sim::WorldBelief;
use crate::topo::{Frontier, NodeId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// Weight of the regional indicator in the blend.
    pub lambda: f64,
    /// Local radius as a fraction of the sensing range.
    pub local_radius_fraction: f64,
    /// A region stays novel while fewer than this many objects are observed in it.
    pub novelty_count: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            lambda: 0.7,
            local_radius_fraction: 0.5,
            novelty_count: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub local: Vec<bool>,
    pub region: Vec<bool>,
    /// Blended class components, each in {0, lambda, 1 - lambda, 1}.
    pub semantic: Vec<f64>,
    pub novelty: f64,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.semantic.len() + 1
    }

    /// `[phi_s, phi_n]`.
    pub fn values(&self) -> Vec<f64> {
        let mut v = self.semantic.clone();
        v.push(self.novelty);
        v
    }

    /// `discount * [phi_s, phi_n, gain]`.
    pub fn augmented(&self, discount: f64, gain: f64) -> Vec<f64> {
        let mut v: Vec<f64> = self.semantic.iter().map(|x| discount * x).collect();
        v.push(discount * self.novelty);
        v.push(discount * gain);
        v
    }
}

/// Class indicators for objects within `radius` cells of `at` with a line of
/// sight through the believed map.
pub fn local_semantic(belief: &WorldBelief, at: Cell, radius: f64, classes: usize) -> Vec<bool> {
    let mut out = vec![false; classes];
    for o in belief.observed() {
        if o.class_index < classes
            && !out[o.class_index]
            && o.position.dist(at) <= radius
            && line_of_sight(at, o.position, |c| belief.is_occupied(c))
        {
            out[o.class_index] = true;
        }
    }
    out
}

/// Class indicators for objects observed in `region`.
pub fn region_semantic(belief: &WorldBelief, region: u32, classes: usize) -> Vec<bool> {
    let mut out = vec![false; classes];
    for o in belief.observed() {
        if o.region == Some(region) && o.class_index < classes {
            out[o.class_index] = true;
        }
    }
    out
}

pub fn feature_vector(
    belief: &WorldBelief,
    frontier: &Frontier,
    classes: usize,
    local_radius: f64,
    config: &FeatureConfig,
) -> FeatureVector {
    let local = local_semantic(belief, frontier.cell, local_radius, classes);
    let region = region_semantic(belief, frontier.region_id, classes);
    let lambda = config.lambda;
    let semantic = region
        .iter()
        .zip(&local)
        .map(|(&r, &l)| lambda * f64::from(u8::from(r)) + (1.0 - lambda) * f64::from(u8::from(l)))
        .collect();
    let novelty = if belief.objects_in_region(frontier.region_id) < config.novelty_count {
        1.0
    } else {
        0.0
    };
    FeatureVector {
        local,
        region,
        semantic,
        novelty,
    }
}

/// Memoizes feature vectors per planner cycle. An entry stays valid while
/// the observed-object count and the known-wall count are unchanged.
#[derive(Clone, Debug, Default)]
pub struct FeatureCache {
    key: (usize, usize),
    entries: HashMap<NodeId, FeatureVector>,
}

impl FeatureCache {
    pub fn get(
        &mut self,
        belief: &WorldBelief,
        frontier: &Frontier,
        classes: usize,
        local_radius: f64,
        config: &FeatureConfig,
    ) -> FeatureVector {
        let key = (belief.observed().len(), belief.occupied_count());
        if key != self.key {
            self.entries.clear();
            self.key = key;
        }
        self.entries
            .entry(frontier.node_id)
            .or_insert_with(|| feature_vector(belief, frontier, classes, local_radius, config))
            .clone()
    }
}

/// Linear semantic priority `p = w . phi` plus the coverage weight used by
/// the expert utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorityModel {
    pub w: Vec<f64>,
    pub w_coverage: f64,
}

impl PriorityModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            w: vec![0.0; dim],
            w_coverage: 0.0,
        }
    }

    /// Feature dimension (classes + novelty).
    pub fn dim(&self) -> usize {
        self.w.len()
    }

    /// `[w, w_coverage]`.
    pub fn augmented(&self) -> Vec<f64> {
        let mut v = self.w.clone();
        v.push(self.w_coverage);
        v
    }

    pub fn from_augmented(v: &[f64]) -> Self {
        let (w, last) = v.split_at(v.len() - 1);
        Self {
            w: w.to_vec(),
            w_coverage: last[0],
        }
    }

    /// Projects onto the model domain: `w` in `[0, 1]`, `w_coverage >= 0`.
    pub fn clamp(&mut self) {
        for x in &mut self.w {
            *x = x.clamp(0.0, 1.0);
        }
        self.w_coverage = self.w_coverage.max(0.0);
    }
}

pub fn priority(model: &PriorityModel, features: &[f64]) -> f64 {
    model.w.iter().zip(features).map(|(w, x)| w * x).sum()
}

pub const WEIGHTS_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub dataset_hash: String,
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub rho: f64,
    pub lambda: f64,
    pub records: usize,
    pub pairs: usize,
    pub initial_nll: f64,
    pub final_nll: f64,
}

/// On-disk priority weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub format_version: u32,
    pub class_names: Vec<String>,
    /// Named feature weights: one per class, then `novelty`.
    pub weights: Vec<NamedWeight>,
    pub w_coverage: f64,
    pub metadata: Option<TrainingMetadata>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedWeight {
    pub feature: String,
    pub weight: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum WeightsError {
    #[error("weights file: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("weights do not match class list: {0}")]
    Mismatch(String),
}

impl WeightsFile {
    pub fn new(class_names: &[String], model: &PriorityModel, metadata: Option<TrainingMetadata>) -> Self {
        let names = class_names.iter().cloned().chain(std::iter::once("novelty".to_string()));
        Self {
            format_version: WEIGHTS_FORMAT_VERSION,
            class_names: class_names.to_vec(),
            weights: names
                .zip(&model.w)
                .map(|(feature, &weight)| NamedWeight { feature, weight })
                .collect(),
            w_coverage: model.w_coverage,
            metadata,
        }
    }

    pub fn model(&self) -> PriorityModel {
        PriorityModel {
            w: self.weights.iter().map(|w| w.weight).collect(),
            w_coverage: self.w_coverage,
        }
    }

    /// The model, checked against the scenario class list.
    pub fn model_for(&self, class_names: &[String]) -> Result<PriorityModel, WeightsError> {
        if self.class_names != class_names {
            return Err(WeightsError::Mismatch(format!(
                "file has {} classes, scenario has {}",
                self.class_names.len(),
                class_names.len()
            )));
        }
        if self.weights.len() != class_names.len() + 1 {
            return Err(WeightsError::Mismatch(format!(
                "expected {} weights, found {}",
                class_names.len() + 1,
                self.weights.len()
            )));
        }
        Ok(self.model())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, WeightsError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    /// Loads every `.json` file in `dir`, ordered by file name.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<Self>, WeightsError> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths.iter().map(Self::load).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::open_room;
    use crate::sim::{BeliefDelta, Sensor};

    fn frontier_at(c: Cell) -> Frontier {
        Frontier {
            node_id: 0,
            cell: c,
            region_id: 0,
            coverage_gain: 3.0,
        }
    }

    #[test]
    fn nothing_observed_gives_zero_semantics_and_novelty() {
        let s = open_room(12, Cell::new(2, 2), Cell::new(9, 9));
        let b = WorldBelief::new(&s);
        let f = feature_vector(&b, &frontier_at(Cell::new(2, 2)), 2, 3.0, &FeatureConfig::default());
        assert_eq!(f.semantic, vec![0.0, 0.0]);
        assert_eq!(f.novelty, 1.0);
    }

    #[test]
    fn region_only_gives_lambda_and_both_give_one() {
        let s = open_room(20, Cell::new(2, 2), Cell::new(15, 15));
        let mut b = WorldBelief::new(&s);
        let d = Sensor::new(40.0).sense(&s, &b, s.start_cell);
        b.integrate(&s, &d);
        let cfg = FeatureConfig::default();
        let far = feature_vector(&b, &frontier_at(Cell::new(2, 2)), 2, 3.0, &cfg);
        assert!((far.semantic[0] - 0.7).abs() < 1e-12);
        let near = feature_vector(&b, &frontier_at(Cell::new(14, 15)), 2, 3.0, &cfg);
        assert!((near.semantic[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn local_radius_boundary() {
        let s = open_room(20, Cell::new(2, 2), Cell::new(10, 10));
        let mut b = WorldBelief::new(&s);
        b.integrate(
            &s,
            &BeliefDelta {
                cells: vec![],
                objects: vec![0],
            },
        );
        assert_eq!(local_semantic(&b, Cell::new(10, 7), 3.0, 2), vec![true, false]);
        assert_eq!(local_semantic(&b, Cell::new(10, 6), 3.0, 2), vec![false, false]);
    }

    #[test]
    fn priority_examples() {
        let phi = [1.0, 0.0, 0.7, 1.0];
        assert_eq!(priority(&PriorityModel::zeros(4), &phi), 0.0);
        let e0 = PriorityModel {
            w: vec![1.0, 0.0, 0.0, 0.0],
            w_coverage: 0.0,
        };
        assert_eq!(priority(&e0, &phi), 1.0);
        let w = PriorityModel {
            w: vec![0.5, 0.2, 0.1, 0.3],
            w_coverage: 0.0,
        };
        // hand-summed: 0.5*1 + 0.2*0 + 0.1*0.7 + 0.3*1
        assert!((priority(&w, &phi) - 0.87).abs() < 1e-12);
    }

    #[test]
    fn weights_file_checks_class_list() {
        let names = vec!["a".to_string(), "b".to_string()];
        let f = WeightsFile::new(&names, &PriorityModel::zeros(3), None);
        assert_eq!(f.weights[2].feature, "novelty");
        assert!(f.model_for(&names).is_ok());
        assert!(f.model_for(&names[..1]).is_err());
    }
}
