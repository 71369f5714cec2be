//! Static world truth for one search task.

mod format;
mod generator;

pub use format::{load_scenario, load_scenario_dir, save_scenario, FORMAT_VERSION};
pub use generator::{category_counts, generate_scenario, CategoryObjects, GeneratorConfig, RoomCounts};

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{Cell, Grid};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid scenario: {0}")]
    Validation(String),
    #[error("scenario generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomCategory {
    Kitchen,
    Bathroom,
    LivingRoom,
    Bedroom,
    Corridor,
}

impl RoomCategory {
    pub const ALL: [RoomCategory; 5] = [
        RoomCategory::Kitchen,
        RoomCategory::Bathroom,
        RoomCategory::LivingRoom,
        RoomCategory::Bedroom,
        RoomCategory::Corridor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoomCategory::Kitchen => "kitchen",
            RoomCategory::Bathroom => "bathroom",
            RoomCategory::LivingRoom => "living_room",
            RoomCategory::Bedroom => "bedroom",
            RoomCategory::Corridor => "corridor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

impl fmt::Display for RoomCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    pub id: u32,
    pub category: RoomCategory,
    /// Sorted, duplicate-free.
    pub cells: Vec<Cell>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticObject {
    pub position: Cell,
    pub class_index: usize,
}

/// A class plus the index among objects of that class, in list order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectRef {
    pub class_index: usize,
    pub instance: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub cell_size: f64,
    /// `true` where the truth cell is occupied.
    pub occupancy: Grid<bool>,
    pub regions: Vec<Region>,
    pub objects: Vec<SemanticObject>,
    pub start_cell: Cell,
    pub target: ObjectRef,
    pub class_names: Vec<String>,
    region_lookup: Grid<Option<u32>>,
}

impl Scenario {
    /// Assembles a scenario and checks every invariant.
    pub fn new(
        id: String,
        cell_size: f64,
        occupancy: Grid<bool>,
        mut regions: Vec<Region>,
        objects: Vec<SemanticObject>,
        start_cell: Cell,
        target: ObjectRef,
        class_names: Vec<String>,
    ) -> Result<Self, ScenarioError> {
        for r in &mut regions {
            r.cells.sort();
            r.cells.dedup();
        }
        let mut region_lookup = Grid::new(occupancy.size(), None);
        for r in &regions {
            for &c in &r.cells {
                if !occupancy.contains(c) {
                    return Err(invalid(format!("region {} cell {c:?} outside the grid", r.id)));
                }
                if let Some(other) = region_lookup[c] {
                    return Err(invalid(format!(
                        "regions {other} and {} overlap at {c:?}",
                        r.id
                    )));
                }
                region_lookup.set(c, Some(r.id));
            }
        }
        let s = Self {
            id,
            cell_size,
            occupancy,
            regions,
            objects,
            start_cell,
            target,
            class_names,
            region_lookup,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn grid_size(&self) -> usize {
        self.occupancy.size()
    }

    pub fn is_free(&self, c: Cell) -> bool {
        matches!(self.occupancy.get(c), Some(false))
    }

    pub fn region_at(&self, c: Cell) -> Option<u32> {
        self.region_lookup.get(c).copied().flatten()
    }

    pub fn region(&self, id: u32) -> Option<&Region> {
        self.regions.iter().find(|r| r.id == id)
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }

    /// Index into `objects` of the target.
    pub fn target_index(&self) -> Option<usize> {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.class_index == self.target.class_index)
            .nth(self.target.instance)
            .map(|(i, _)| i)
    }

    pub fn target_object(&self) -> &SemanticObject {
        &self.objects[self.target_index().expect("validated scenario has a target")]
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.occupancy.cells().filter(move |&c| !self.occupancy[c])
    }

    /// Cells reachable from `from` through free cells (4-neighbourhood),
    /// optionally treating `blocked` cells as walls.
    pub fn flood_fill(&self, from: Cell, blocked: impl Fn(Cell) -> bool) -> Grid<bool> {
        let mut seen = Grid::new(self.grid_size(), false);
        if !self.is_free(from) || blocked(from) {
            return seen;
        }
        let mut queue = VecDeque::from([from]);
        seen.set(from, true);
        while let Some(c) = queue.pop_front() {
            for n in c.neighbors4() {
                if self.is_free(n) && !seen[n] && !blocked(n) {
                    seen.set(n, true);
                    queue.push_back(n);
                }
            }
        }
        seen
    }

    /// Copy of the scenario with the target object removed, used for full
    /// exploration runs. The target reference no longer resolves, so
    /// episodes can never report `found`.
    pub fn without_target(&self) -> TargetlessScenario {
        let ti = self.target_index().expect("validated");
        let mut objects = self.objects.clone();
        objects.remove(ti);
        TargetlessScenario(Scenario {
            objects,
            target: ObjectRef {
                instance: usize::MAX,
                ..self.target
            },
            ..self.clone()
        })
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let m = self.grid_size();
        if m == 0 {
            return Err(invalid("grid size must be positive".into()));
        }
        if !(self.cell_size > 0.0) {
            return Err(invalid("cell size must be positive".into()));
        }
        let mut names = BTreeSet::new();
        for n in &self.class_names {
            if !names.insert(n.as_str()) {
                return Err(invalid(format!("duplicate class name {n:?}")));
            }
        }
        if !self.is_free(self.start_cell) {
            return Err(invalid("start cell is not free".into()));
        }
        let mut ids = BTreeSet::new();
        for r in &self.regions {
            if !ids.insert(r.id) {
                return Err(invalid(format!("duplicate region id {}", r.id)));
            }
        }
        for c in self.occupancy.cells() {
            let free = !self.occupancy[c];
            match (free, self.region_lookup[c]) {
                (true, None) => {
                    return Err(invalid(format!("free cell {c:?} belongs to no region")));
                }
                (false, Some(r)) => {
                    return Err(invalid(format!("region {r} contains occupied cell {c:?}")));
                }
                _ => {}
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.class_index >= self.class_names.len() {
                return Err(invalid(format!("object {i} has unknown class index {}", o.class_index)));
            }
            if !self.occupancy.contains(o.position) {
                return Err(invalid(format!("object {i} outside the grid")));
            }
            if self.occupancy[o.position] {
                return Err(invalid("object in occupied cell".into()));
            }
        }
        if self.target_index().is_none() {
            return Err(invalid("target does not resolve to an object".into()));
        }
        let reach = self.flood_fill(self.start_cell, |_| false);
        if let Some(c) = self.free_cells().find(|&c| !reach[c]) {
            return Err(invalid(format!("free cell {c:?} unreachable from start")));
        }
        Ok(())
    }
}

/// A scenario whose target has been removed. Kept as a distinct type
/// because it intentionally violates the target invariant.
#[derive(Clone, Debug)]
pub struct TargetlessScenario(pub Scenario);

impl std::ops::Deref for TargetlessScenario {
    type Target = Scenario;
    fn deref(&self) -> &Scenario {
        &self.0
    }
}

fn invalid(msg: String) -> ScenarioError {
    ScenarioError::Validation(msg)
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    /// A single `w x h` room with walls around it, one object of class 0 at
    /// `object` and the start at `start`.
    pub fn open_room(size: usize, start: Cell, object: Cell) -> Scenario {
        let mut occ = Grid::new(size, true);
        let mut cells = Vec::new();
        for y in 1..size as i32 - 1 {
            for x in 1..size as i32 - 1 {
                occ.set(Cell::new(x, y), false);
                cells.push(Cell::new(x, y));
            }
        }
        Scenario::new(
            "fixture".into(),
            0.25,
            occ,
            vec![Region {
                id: 0,
                category: RoomCategory::LivingRoom,
                cells,
            }],
            vec![SemanticObject {
                position: object,
                class_index: 0,
            }],
            start,
            ObjectRef {
                class_index: 0,
                instance: 0,
            },
            vec!["bed".into(), "door".into()],
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::fixtures::open_room;
    use super::*;

    #[test]
    fn fixture_is_valid() {
        let s = open_room(10, Cell::new(2, 2), Cell::new(7, 7));
        assert_eq!(s.target_object().position, Cell::new(7, 7));
        assert_eq!(s.region_at(Cell::new(3, 3)), Some(0));
        assert_eq!(s.region_at(Cell::new(0, 0)), None);
    }

    #[test]
    fn object_on_wall_is_rejected() {
        let s = open_room(10, Cell::new(2, 2), Cell::new(7, 7));
        let mut objects = s.objects.clone();
        objects[0].position = Cell::new(0, 5);
        let err = Scenario::new(
            s.id.clone(),
            s.cell_size,
            s.occupancy.clone(),
            s.regions.clone(),
            objects,
            s.start_cell,
            s.target,
            s.class_names.clone(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("object in occupied cell"), "{err}");
    }

    #[test]
    fn unreachable_free_cell_is_rejected() {
        let s = open_room(10, Cell::new(2, 2), Cell::new(7, 7));
        let mut occ = s.occupancy.clone();
        // wall off column 5 entirely
        for y in 0..10 {
            occ.set(Cell::new(5, y), true);
        }
        let regions = vec![Region {
            id: 0,
            category: RoomCategory::LivingRoom,
            cells: occ.cells().filter(|&c| !occ[c]).collect(),
        }];
        let err = Scenario::new(
            "x".into(),
            0.25,
            occ,
            regions,
            s.objects.clone(),
            s.start_cell,
            s.target,
            s.class_names.clone(),
        )
        .unwrap_err();
        assert!(err.to_string().contains("unreachable"), "{err}");
    }

    #[test]
    fn duplicate_class_names_rejected() {
        let s = open_room(6, Cell::new(2, 2), Cell::new(3, 3));
        let mut bad = s.clone();
        bad.class_names = vec!["bed".into(), "bed".into()];
        assert!(bad.validate().is_err());
    }
}
