//! Procedural multi-room floorplans.
//!
//! The interior is split into rectangular rooms by recursive binary
//! partitioning, room categories are assigned so the connectivity rules
//! hold, and doors are cut along a spanning tree of the room adjacency:
//!
//! * bedrooms open only into a living room,
//! * kitchens (and corridors) connect to a living room directly or through
//!   other kitchens,
//! * bathrooms open only into a kitchen.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ObjectRef, Region, RoomCategory, Scenario, ScenarioError, SemanticObject};
use crate::grid::{Cell, Grid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoomCounts {
    pub kitchen: usize,
    pub bathroom: usize,
    pub living_room: usize,
    pub bedroom: usize,
    pub corridor: usize,
}

impl Default for RoomCounts {
    fn default() -> Self {
        Self {
            kitchen: 3,
            bathroom: 3,
            living_room: 1,
            bedroom: 1,
            corridor: 0,
        }
    }
}

impl RoomCounts {
    pub fn total(&self) -> usize {
        self.kitchen + self.bathroom + self.living_room + self.bedroom + self.corridor
    }

    fn multiset(&self) -> Vec<RoomCategory> {
        let mut v = Vec::with_capacity(self.total());
        for (cat, n) in [
            (RoomCategory::Kitchen, self.kitchen),
            (RoomCategory::Bathroom, self.bathroom),
            (RoomCategory::LivingRoom, self.living_room),
            (RoomCategory::Bedroom, self.bedroom),
            (RoomCategory::Corridor, self.corridor),
        ] {
            v.extend(std::iter::repeat(cat).take(n));
        }
        v
    }
}

/// Object class lists keyed by room category.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CategoryObjects {
    pub kitchen: Vec<String>,
    pub bathroom: Vec<String>,
    pub living_room: Vec<String>,
    pub bedroom: Vec<String>,
    pub corridor: Vec<String>,
}

impl CategoryObjects {
    pub fn get(&self, cat: RoomCategory) -> &[String] {
        match cat {
            RoomCategory::Kitchen => &self.kitchen,
            RoomCategory::Bathroom => &self.bathroom,
            RoomCategory::LivingRoom => &self.living_room,
            RoomCategory::Bedroom => &self.bedroom,
            RoomCategory::Corridor => &self.corridor,
        }
    }

    fn from_lists(lists: [&[&str]; 5]) -> Self {
        let own = |l: &[&str]| l.iter().map(|s| s.to_string()).collect();
        Self {
            kitchen: own(lists[0]),
            bathroom: own(lists[1]),
            living_room: own(lists[2]),
            bedroom: own(lists[3]),
            corridor: own(lists[4]),
        }
    }

    pub fn default_characteristic() -> Self {
        Self::from_lists([
            &["fridge", "sink", "countertop"],
            &["toilet", "shower"],
            &["sofa", "tv"],
            &["bed", "wardrobe"],
            &[],
        ])
    }

    pub fn default_small() -> Self {
        Self::from_lists([
            &["pan", "bowl"],
            &["towel", "soap"],
            &["plant", "book"],
            &["pillow", "lamp"],
            &[],
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub grid_size: usize,
    pub cell_size: f64,
    pub rooms: RoomCounts,
    pub min_room_side: usize,
    pub door_width: usize,
    /// Placed once in every room of the category.
    pub characteristic: CategoryObjects,
    /// Extra small objects that favour a room category.
    pub small_objects: CategoryObjects,
    /// Extra small objects that appear anywhere.
    pub generic_small_objects: Vec<String>,
    /// Inclusive range of extra small objects per room.
    pub small_objects_per_room: [usize; 2],
    /// Probability that an extra object is drawn from the room's own list.
    pub small_object_affinity: f64,
    pub door_class: String,
    pub start_room: RoomCategory,
    pub target_class: String,
    pub max_attempts: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            grid_size: 100,
            cell_size: 0.25,
            rooms: RoomCounts::default(),
            min_room_side: 12,
            door_width: 2,
            characteristic: CategoryObjects::default_characteristic(),
            small_objects: CategoryObjects::default_small(),
            generic_small_objects: vec!["chair".into(), "box".into()],
            small_objects_per_room: [2, 4],
            small_object_affinity: 0.7,
            door_class: "door".into(),
            start_room: RoomCategory::Kitchen,
            target_class: "bed".into(),
            max_attempts: 200,
        }
    }
}

impl GeneratorConfig {
    /// The ordered class list every scenario from this config shares.
    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = vec![self.door_class.clone()];
        for list in [&self.characteristic, &self.small_objects] {
            for cat in RoomCategory::ALL {
                names.extend(list.get(cat).iter().cloned());
            }
        }
        names.extend(self.generic_small_objects.iter().cloned());
        let mut seen = BTreeSet::new();
        names.retain(|n| seen.insert(n.clone()));
        names
    }
}

/// Inclusive rectangle of free interior cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

impl Rect {
    fn w(&self) -> i32 {
        self.x1 - self.x0 + 1
    }
    fn h(&self) -> i32 {
        self.y1 - self.y0 + 1
    }
    fn area(&self) -> i32 {
        self.w() * self.h()
    }
    fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.y0..=self.y1).flat_map(move |y| (self.x0..=self.x1).map(move |x| Cell::new(x, y)))
    }
}

/// A wall stretch two rooms share: the wall line coordinate and the
/// inclusive range along it.
#[derive(Clone, Copy, Debug)]
struct SharedWall {
    vertical: bool,
    line: i32,
    lo: i32,
    hi: i32,
}

fn shared_wall(a: &Rect, b: &Rect) -> Option<SharedWall> {
    if a.x1 + 2 == b.x0 || b.x1 + 2 == a.x0 {
        let line = if a.x1 + 2 == b.x0 { a.x1 + 1 } else { b.x1 + 1 };
        let lo = a.y0.max(b.y0);
        let hi = a.y1.min(b.y1);
        if lo <= hi {
            return Some(SharedWall {
                vertical: true,
                line,
                lo,
                hi,
            });
        }
    }
    if a.y1 + 2 == b.y0 || b.y1 + 2 == a.y0 {
        let line = if a.y1 + 2 == b.y0 { a.y1 + 1 } else { b.y1 + 1 };
        let lo = a.x0.max(b.x0);
        let hi = a.x1.min(b.x1);
        if lo <= hi {
            return Some(SharedWall {
                vertical: false,
                line,
                lo,
                hi,
            });
        }
    }
    None
}

fn partition(
    interior: Rect,
    rooms: usize,
    min_side: i32,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<Rect>> {
    let mut leaves = vec![interior];
    while leaves.len() < rooms {
        // split the largest leaf that can still be split
        let mut order: Vec<usize> = (0..leaves.len()).collect();
        order.sort_by_key(|&i| std::cmp::Reverse(leaves[i].area()));
        let mut done = false;
        for i in order {
            let r = leaves[i];
            let can_v = r.w() >= 2 * min_side + 1;
            let can_h = r.h() >= 2 * min_side + 1;
            let vertical = match (can_v, can_h) {
                (false, false) => continue,
                (true, false) => true,
                (false, true) => false,
                (true, true) => {
                    if r.w() as f64 > 1.25 * r.h() as f64 {
                        true
                    } else if r.h() as f64 > 1.25 * r.w() as f64 {
                        false
                    } else {
                        rng.gen_bool(0.5)
                    }
                }
            };
            let (lo, hi, len) = if vertical {
                (r.x0, r.x1, r.w())
            } else {
                (r.y0, r.y1, r.h())
            };
            // wall coordinate keeping both halves >= min_side, biased to the middle
            let min_wall = lo + min_side;
            let max_wall = hi - min_side;
            let mid_lo = lo + (len as f64 * 0.35) as i32;
            let mid_hi = lo + (len as f64 * 0.65) as i32;
            let a = min_wall.max(mid_lo);
            let b = max_wall.min(mid_hi);
            let wall = if a <= b {
                rng.gen_range(a..=b)
            } else {
                rng.gen_range(min_wall..=max_wall)
            };
            let (first, second) = if vertical {
                (
                    Rect { x1: wall - 1, ..r },
                    Rect { x0: wall + 1, ..r },
                )
            } else {
                (
                    Rect { y1: wall - 1, ..r },
                    Rect { y0: wall + 1, ..r },
                )
            };
            leaves[i] = first;
            leaves.push(second);
            done = true;
            break;
        }
        if !done {
            return None;
        }
    }
    Some(leaves)
}

/// Per-room door connections for an assignment, or `None` when the
/// connectivity rules cannot be met.
fn door_tree(
    cats: &[RoomCategory],
    adj: &[Vec<usize>],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<(usize, usize)>> {
    use RoomCategory::*;
    let n = cats.len();
    let mut doors = Vec::new();
    let mut connected = vec![false; n];
    let mut queue = VecDeque::new();
    for i in 0..n {
        if cats[i] == LivingRoom {
            connected[i] = true;
            queue.push_back(i);
        }
    }
    if queue.is_empty() {
        return None;
    }
    // kitchens and corridors hang off living rooms, possibly chained
    while let Some(p) = queue.pop_front() {
        let mut nbrs = adj[p].clone();
        nbrs.shuffle(rng);
        for c in nbrs {
            if !connected[c] && matches!(cats[c], Kitchen | Corridor) {
                connected[c] = true;
                doors.push((p, c));
                queue.push_back(c);
            }
        }
    }
    for i in 0..n {
        match cats[i] {
            Kitchen | Corridor if !connected[i] => return None,
            Bedroom => {
                let opts: Vec<usize> =
                    adj[i].iter().copied().filter(|&j| cats[j] == LivingRoom).collect();
                let &p = opts.choose(rng)?;
                doors.push((p, i));
            }
            Bathroom => {
                let opts: Vec<usize> =
                    adj[i].iter().copied().filter(|&j| cats[j] == Kitchen).collect();
                let &p = opts.choose(rng)?;
                doors.push((p, i));
            }
            _ => {}
        }
    }
    Some(doors)
}

fn place_objects(
    rect: &Rect,
    classes: impl IntoIterator<Item = usize>,
    blocked: &BTreeSet<Cell>,
    used: &mut BTreeSet<Cell>,
    rng: &mut ChaCha8Rng,
    out: &mut Vec<SemanticObject>,
) -> bool {
    let mut free: Vec<Cell> = rect
        .cells()
        .filter(|c| !blocked.contains(c) && !used.contains(c))
        .collect();
    for class_index in classes {
        if free.is_empty() {
            return false;
        }
        let i = rng.gen_range(0..free.len());
        let c = free.swap_remove(i);
        used.insert(c);
        out.push(SemanticObject {
            position: c,
            class_index,
        });
    }
    true
}

/// Deterministic procedural scenario for `(seed, config)`.
pub fn generate_scenario(seed: u64, config: &GeneratorConfig) -> Result<Scenario, ScenarioError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut last_reason = String::from("no attempt made");
    for _ in 0..config.max_attempts.max(1) {
        match attempt(seed, config, &mut rng) {
            Ok(s) => return Ok(s),
            Err(reason) => last_reason = reason,
        }
    }
    Err(ScenarioError::GenerationFailed {
        attempts: config.max_attempts.max(1),
        reason: last_reason,
    })
}

fn attempt(seed: u64, config: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Result<Scenario, String> {
    let m = config.grid_size as i32;
    let dw = config.door_width.max(1) as i32;
    let class_names = config.class_names();
    let class_of = |name: &str| class_names.iter().position(|n| n == name);
    let target_class = class_of(&config.target_class).ok_or("target class is not produced")?;
    let door_class = class_of(&config.door_class).expect("door class always listed");

    let interior = Rect {
        x0: 1,
        y0: 1,
        x1: m - 2,
        y1: m - 2,
    };
    let n = config.rooms.total();
    let rects = partition(interior, n, config.min_room_side as i32, rng)
        .ok_or("rooms do not fit the grid")?;

    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                if let Some(w) = shared_wall(&rects[i], &rects[j]) {
                    if w.hi - w.lo + 1 >= dw + 2 {
                        adj[i].push(j);
                    }
                }
            }
        }
    }

    // sample category permutations, keep the valid one whose living room is
    // best connected
    let mut cats = config.rooms.multiset();
    let mut best: Option<(usize, Vec<RoomCategory>, Vec<(usize, usize)>)> = None;
    for _ in 0..400 {
        cats.shuffle(rng);
        if let Some(doors) = door_tree(&cats, &adj, rng) {
            let hub_degree = (0..n)
                .filter(|&i| cats[i] == RoomCategory::LivingRoom)
                .map(|i| adj[i].len())
                .max()
                .unwrap_or(0);
            if best.as_ref().map_or(true, |b| hub_degree > b.0) {
                best = Some((hub_degree, cats.clone(), doors));
            }
        }
    }
    let (_, cats, doors) = best.ok_or("no category assignment satisfies connectivity")?;

    let mut occupancy = Grid::new(config.grid_size, true);
    let mut region_cells: Vec<Vec<Cell>> = rects.iter().map(|r| r.cells().collect()).collect();
    for r in &rects {
        for c in r.cells() {
            occupancy.set(c, false);
        }
    }

    let mut objects = Vec::new();
    let mut door_cells = BTreeSet::new();
    for &(parent, child) in &doors {
        let w = shared_wall(&rects[parent], &rects[child]).expect("adjacent");
        let start = rng.gen_range(w.lo + 1..=w.hi - dw);
        let cells: Vec<Cell> = (start..start + dw)
            .map(|k| {
                if w.vertical {
                    Cell::new(w.line, k)
                } else {
                    Cell::new(k, w.line)
                }
            })
            .collect();
        for &c in &cells {
            occupancy.set(c, false);
            door_cells.insert(c);
            region_cells[parent].push(c);
        }
        objects.push(SemanticObject {
            position: cells[0],
            class_index: door_class,
        });
    }

    // keep the cells next to doorways clear of clutter
    let mut near_door = BTreeSet::new();
    for c in &door_cells {
        for dy in -1..=1 {
            for dx in -1..=1 {
                near_door.insert(c.offset(dx, dy));
            }
        }
    }

    let mut used: BTreeSet<Cell> = door_cells.clone();
    let [lo, hi] = config.small_objects_per_room;
    // characteristic objects first so the target instance index is stable
    for (i, rect) in rects.iter().enumerate() {
        let classes: Vec<usize> = config
            .characteristic
            .get(cats[i])
            .iter()
            .filter_map(|c| class_of(c))
            .collect();
        if !place_objects(rect, classes, &near_door, &mut used, rng, &mut objects) {
            return Err("room too small for its objects".into());
        }
    }
    for (i, rect) in rects.iter().enumerate() {
        let count = rng.gen_range(lo.min(hi)..=hi.max(lo));
        let own = config.small_objects.get(cats[i]);
        let generic = &config.generic_small_objects;
        let mut classes = Vec::with_capacity(count);
        for _ in 0..count {
            let pick_own = !own.is_empty() && (generic.is_empty() || rng.gen_bool(config.small_object_affinity));
            let list = if pick_own { own } else { generic };
            if let Some(name) = list.choose(rng) {
                classes.extend(class_of(name));
            }
        }
        if !place_objects(rect, classes, &near_door, &mut used, rng, &mut objects) {
            return Err("room too small for its objects".into());
        }
    }

    let target_instance = 0;
    if !objects.iter().any(|o| o.class_index == target_class) {
        return Err("no room produces the target class".into());
    }

    let start_rooms: Vec<usize> = (0..n).filter(|&i| cats[i] == config.start_room).collect();
    let &room = start_rooms.choose(rng).ok_or("no room of the start category")?;
    let r = rects[room];
    let inner = Rect {
        x0: r.x0 + 2,
        y0: r.y0 + 2,
        x1: r.x1 - 2,
        y1: r.y1 - 2,
    };
    let candidates: Vec<Cell> = inner.cells().filter(|c| !used.contains(c)).collect();
    let &start_cell = candidates.choose(rng).ok_or("start room has no free interior")?;

    let regions = region_cells
        .into_iter()
        .enumerate()
        .map(|(i, cells)| Region {
            id: i as u32,
            category: cats[i],
            cells,
        })
        .collect();

    Scenario::new(
        format!("scn-{seed:06}"),
        config.cell_size,
        occupancy,
        regions,
        objects,
        start_cell,
        ObjectRef {
            class_index: target_class,
            instance: target_instance,
        },
        class_names,
    )
    .map_err(|e| e.to_string())
}

/// Counts of each room category in a scenario.
pub fn category_counts(s: &Scenario) -> BTreeMap<RoomCategory, usize> {
    let mut m = BTreeMap::new();
    for r in &s.regions {
        *m.entry(r.category).or_insert(0) += 1;
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_yields_three_kitchens_three_bathrooms() {
        let s = generate_scenario(7, &GeneratorConfig::default()).unwrap();
        let counts = category_counts(&s);
        assert_eq!(counts[&RoomCategory::Kitchen], 3);
        assert_eq!(counts[&RoomCategory::Bathroom], 3);
        assert_eq!(counts[&RoomCategory::LivingRoom], 1);
        assert_eq!(counts[&RoomCategory::Bedroom], 1);
    }

    #[test]
    fn start_is_in_a_kitchen() {
        let s = generate_scenario(11, &GeneratorConfig::default()).unwrap();
        let r = s.region_at(s.start_cell).unwrap();
        assert_eq!(s.region(r).unwrap().category, RoomCategory::Kitchen);
    }

    #[test]
    fn infeasible_grid_fails_generation() {
        let cfg = GeneratorConfig {
            grid_size: 30,
            max_attempts: 5,
            ..Default::default()
        };
        let err = generate_scenario(1, &cfg).unwrap_err();
        assert!(matches!(err, ScenarioError::GenerationFailed { attempts: 5, .. }));
    }

    #[test]
    fn class_list_is_stable_and_unique() {
        let names = GeneratorConfig::default().class_names();
        assert_eq!(names[0], "door");
        let set: BTreeSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert!(names.contains(&"bed".to_string()));
    }
}
