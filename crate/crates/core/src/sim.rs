//! Robot belief, ray-cast sensing, motion and termination.

use serde::{Deserialize, Serialize};

use crate::grid::{disc_offsets, line_of_sight, Cell, Grid, Point};
use crate::scenario::Scenario;

pub const OCCUPIED: i8 = -1;
pub const UNEXPLORED: i8 = 0;
pub const FREE: i8 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Sensing radius in meters.
    pub sensing_range: f64,
    /// Strict upper bound on one motion step, meters.
    pub step_bound: f64,
    /// Episode cap in graph-edge traversals.
    pub max_steps: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sensing_range: 3.0,
            step_bound: 0.5,
            max_steps: 5000,
        }
    }
}

impl SimConfig {
    pub fn range_cells(&self, cell_size: f64) -> f64 {
        self.sensing_range / cell_size
    }

    pub fn validate(&self, cell_size: f64) -> Result<(), SimError> {
        if !(self.sensing_range > 0.0) {
            return Err(SimError::Config("sensing range must be positive".into()));
        }
        if self.step_bound < cell_size * std::f64::consts::SQRT_2 {
            return Err(SimError::Config("step bound must be at least one cell diagonal".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SimError {
    #[error("illegal move: {0}")]
    IllegalMove(String),
    #[error("bad sim config: {0}")]
    Config(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservedObject {
    /// Index into the scenario object list.
    pub index: usize,
    pub position: Cell,
    pub class_index: usize,
    pub region: Option<u32>,
}

/// What one sensing pass adds to the belief.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BeliefDelta {
    /// Newly explored cells with their state and (for free cells) region.
    pub cells: Vec<(Cell, i8, Option<u32>)>,
    /// Newly observed object indices, ascending.
    pub objects: Vec<usize>,
}

impl BeliefDelta {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty() && self.objects.is_empty()
    }
}

#[derive(Clone, Debug)]
pub struct WorldBelief {
    occupancy: Grid<i8>,
    region_of: Grid<Option<u32>>,
    observed: Vec<ObservedObject>,
    observed_mask: Vec<bool>,
    objects_per_region: Vec<usize>,
    position: Point,
    path_log: Vec<Point>,
    traveled: f64,
    cell_size: f64,
    explored: usize,
    occupied: usize,
}

impl WorldBelief {
    /// Fresh belief with nothing explored but the start cell.
    pub fn new(scenario: &Scenario) -> Self {
        let m = scenario.grid_size();
        let start = scenario.start_cell;
        let mut b = Self {
            occupancy: Grid::new(m, UNEXPLORED),
            region_of: Grid::new(m, None),
            observed: Vec::new(),
            observed_mask: vec![false; scenario.objects.len()],
            objects_per_region: vec![0; scenario.regions.iter().map(|r| r.id as usize + 1).max().unwrap_or(0)],
            position: start.center(),
            path_log: vec![start.center()],
            traveled: 0.0,
            cell_size: scenario.cell_size,
            explored: 0,
            occupied: 0,
        };
        b.integrate(
            scenario,
            &BeliefDelta {
                cells: vec![(start, FREE, scenario.region_at(start))],
                objects: Vec::new(),
            },
        );
        b
    }

    pub fn grid_size(&self) -> usize {
        self.occupancy.size()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn state(&self, c: Cell) -> i8 {
        self.occupancy.get(c).copied().unwrap_or(OCCUPIED)
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.state(c) == FREE
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.state(c) == OCCUPIED
    }

    pub fn occupancy(&self) -> &Grid<i8> {
        &self.occupancy
    }

    pub fn region_of(&self, c: Cell) -> Option<u32> {
        self.region_of.get(c).copied().flatten()
    }

    pub fn observed(&self) -> &[ObservedObject] {
        &self.observed
    }

    pub fn has_observed(&self, index: usize) -> bool {
        self.observed_mask.get(index).copied().unwrap_or(false)
    }

    pub fn objects_in_region(&self, region: u32) -> usize {
        self.objects_per_region.get(region as usize).copied().unwrap_or(0)
    }

    pub fn position(&self) -> Point {
        self.position
    }

    pub fn robot_cell(&self) -> Cell {
        self.position.cell()
    }

    pub fn path_log(&self) -> &[Point] {
        &self.path_log
    }

    /// Meters traveled so far.
    pub fn traveled(&self) -> f64 {
        self.traveled
    }

    pub fn explored_count(&self) -> usize {
        self.explored
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied
    }

    /// Merges a sensing result. Already-explored cells and already-observed
    /// objects are ignored, so knowledge never regresses.
    pub fn integrate(&mut self, scenario: &Scenario, delta: &BeliefDelta) {
        for &(c, state, region) in &delta.cells {
            if self.occupancy[c] != UNEXPLORED || state == UNEXPLORED {
                continue;
            }
            self.occupancy.set(c, state);
            self.explored += 1;
            if state == OCCUPIED {
                self.occupied += 1;
            } else {
                self.region_of.set(c, region);
            }
        }
        for &i in &delta.objects {
            if self.observed_mask[i] {
                continue;
            }
            self.observed_mask[i] = true;
            let o = scenario.objects[i];
            let region = self.region_of(o.position).or_else(|| scenario.region_at(o.position));
            if let Some(r) = region {
                if let Some(n) = self.objects_per_region.get_mut(r as usize) {
                    *n += 1;
                }
            }
            self.observed.push(ObservedObject {
                index: i,
                position: o.position,
                class_index: o.class_index,
                region,
            });
        }
    }

    /// Moves by `action` (meters). The bound on the step length is strict and
    /// the destination must be known free.
    pub fn apply_action(&mut self, action: [f64; 2], config: &SimConfig) -> Result<Point, SimError> {
        let len = action[0].hypot(action[1]);
        if len >= config.step_bound {
            return Err(SimError::IllegalMove(format!(
                "step of {len:.3} m is not below the bound {:.3} m",
                config.step_bound
            )));
        }
        if len == 0.0 {
            return Ok(self.position);
        }
        let next = Point::new(
            self.position.x + action[0] / self.cell_size,
            self.position.y + action[1] / self.cell_size,
        );
        if !self.is_free(next.cell()) {
            return Err(SimError::IllegalMove(format!(
                "destination {:?} is not known free",
                next.cell()
            )));
        }
        self.position = next;
        self.path_log.push(next);
        self.traveled += len;
        Ok(next)
    }
}

/// Range-limited sensor with occlusion by truth obstacles.
#[derive(Clone, Debug)]
pub struct Sensor {
    range_cells: f64,
    disc: Vec<Cell>,
}

impl Sensor {
    pub fn new(range_cells: f64) -> Self {
        Self {
            range_cells,
            disc: disc_offsets(range_cells),
        }
    }

    pub fn for_scenario(config: &SimConfig, scenario: &Scenario) -> Self {
        Self::new(config.range_cells(scenario.cell_size))
    }

    pub fn range_cells(&self) -> f64 {
        self.range_cells
    }

    pub fn sees(&self, scenario: &Scenario, from: Cell, to: Cell) -> bool {
        from.dist(to) <= self.range_cells + 1e-9
            && line_of_sight(from, to, |c| scenario.occupancy.get(c).copied().unwrap_or(true))
    }

    /// Everything newly visible from `position`: every unexplored cell within
    /// range with a clear line of sight, plus every unobserved object that
    /// passes the same test.
    pub fn sense(&self, scenario: &Scenario, belief: &WorldBelief, position: Cell) -> BeliefDelta {
        let mut delta = BeliefDelta::default();
        let blocks = |c: Cell| scenario.occupancy.get(c).copied().unwrap_or(true);
        for off in &self.disc {
            let c = position.offset(off.x, off.y);
            if !scenario.occupancy.contains(c) || belief.state(c) != UNEXPLORED {
                continue;
            }
            if line_of_sight(position, c, blocks) {
                let occupied = scenario.occupancy[c];
                delta.cells.push((
                    c,
                    if occupied { OCCUPIED } else { FREE },
                    if occupied { None } else { scenario.region_at(c) },
                ));
            }
        }
        for (i, o) in scenario.objects.iter().enumerate() {
            if !belief.has_observed(i) && self.sees(scenario, position, o.position) {
                delta.objects.push(i);
            }
        }
        delta
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Found,
    Exhausted,
    Running,
}

/// `found` once the target has been observed; `exhausted` when no frontier
/// remains; otherwise `running`.
pub fn check_termination(scenario: &Scenario, belief: &WorldBelief, frontier_count: usize) -> Termination {
    let found = scenario.target_index().is_some_and(|t| belief.has_observed(t));
    if found {
        Termination::Found
    } else if frontier_count == 0 {
        Termination::Exhausted
    } else {
        Termination::Running
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::fixtures::open_room;

    fn sensed(s: &Scenario, range: f64, at: Cell) -> (WorldBelief, BeliefDelta) {
        let mut b = WorldBelief::new(s);
        let d = Sensor::new(range).sense(s, &b, at);
        b.integrate(s, &d);
        (b, d)
    }

    #[test]
    fn object_just_outside_range_is_not_observed() {
        let s = open_room(30, Cell::new(5, 15), Cell::new(5 + 9, 15));
        let (b, _) = sensed(&s, 8.0, s.start_cell);
        assert!(b.observed().is_empty());
        let (b, _) = sensed(&s, 9.0, s.start_cell);
        assert_eq!(b.observed().len(), 1);
    }

    #[test]
    fn object_behind_wall_is_not_observed() {
        let s = open_room(20, Cell::new(3, 10), Cell::new(9, 10));
        let mut occ = s.occupancy.clone();
        for y in 7..=13 {
            occ.set(Cell::new(6, y), true);
        }
        let cells = occ.cells().filter(|&c| !occ[c]).collect();
        let s = Scenario::new(
            "wall".into(),
            s.cell_size,
            occ,
            vec![crate::scenario::Region {
                id: 0,
                category: crate::scenario::RoomCategory::LivingRoom,
                cells,
            }],
            s.objects.clone(),
            s.start_cell,
            s.target,
            s.class_names.clone(),
        )
        .unwrap();
        let (b, _) = sensed(&s, 10.0, s.start_cell);
        assert!(b.observed().is_empty());
        assert!(b.is_occupied(Cell::new(6, 10)));
        assert_eq!(b.state(Cell::new(7, 10)), UNEXPLORED);
    }

    #[test]
    fn open_disc_matches_brute_force() {
        let s = open_room(41, Cell::new(20, 20), Cell::new(1, 1));
        let r = 7.5;
        let (b, _) = sensed(&s, r, s.start_cell);
        for c in s.occupancy.cells() {
            let expect = c.dist(s.start_cell) <= r;
            assert_eq!(b.state(c) != UNEXPLORED, expect, "{c:?}");
        }
    }

    #[test]
    fn zero_action_is_a_no_op() {
        let s = open_room(10, Cell::new(3, 3), Cell::new(7, 7));
        let mut b = WorldBelief::new(&s);
        let cfg = SimConfig::default();
        let p = b.apply_action([0.0, 0.0], &cfg).unwrap();
        assert_eq!(p, s.start_cell.center());
        assert_eq!(b.traveled(), 0.0);
        assert_eq!(b.path_log().len(), 1);
    }

    #[test]
    fn step_at_the_bound_is_illegal() {
        let s = open_room(10, Cell::new(3, 3), Cell::new(7, 7));
        let (mut b, _) = sensed(&s, 5.0, s.start_cell);
        let cfg = SimConfig::default();
        let err = b.apply_action([cfg.step_bound, 0.0], &cfg).unwrap_err();
        assert!(matches!(err, SimError::IllegalMove(_)));
        assert!(b.apply_action([cfg.step_bound * 0.99, 0.0], &cfg).is_ok());
        assert!((b.traveled() - cfg.step_bound * 0.99).abs() < 1e-12);
    }

    #[test]
    fn moving_into_unknown_is_illegal() {
        let s = open_room(10, Cell::new(3, 3), Cell::new(7, 7));
        let mut b = WorldBelief::new(&s);
        let cfg = SimConfig::default();
        let err = b.apply_action([0.25, 0.0], &cfg).unwrap_err();
        assert!(matches!(err, SimError::IllegalMove(_)));
    }

    #[test]
    fn termination_states() {
        let s = open_room(12, Cell::new(2, 2), Cell::new(9, 9));
        let b = WorldBelief::new(&s);
        assert_eq!(check_termination(&s, &b, 3), Termination::Running);
        assert_eq!(check_termination(&s, &b, 0), Termination::Exhausted);
        let (b, _) = sensed(&s, 20.0, s.start_cell);
        assert_eq!(check_termination(&s, &b, 3), Termination::Found);
    }

    #[test]
    fn integrate_never_reverts_cells() {
        let s = open_room(12, Cell::new(2, 2), Cell::new(9, 9));
        let (mut b, d) = sensed(&s, 4.0, s.start_cell);
        let before = b.explored_count();
        b.integrate(&s, &d);
        assert_eq!(b.explored_count(), before);
        let bogus = BeliefDelta {
            cells: vec![(Cell::new(2, 3), UNEXPLORED, None)],
            objects: vec![],
        };
        b.integrate(&s, &bogus);
        assert_eq!(b.state(Cell::new(2, 3)), FREE);
    }
}
