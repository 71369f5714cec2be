//! Sparse topological graph over known free space, frontier viewpoints,
//! and graph shortest paths.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::grid::{disc_offsets, march_ray, walk_supercover, Cell, Grid};
use crate::sim::{WorldBelief, UNEXPLORED};

pub type NodeId = u32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TopoConfig {
    /// Rays cast per coverage-gain estimate.
    pub rays: usize,
    /// Mean unexplored cells per ray above which a node is a frontier.
    pub gain_threshold: f64,
    /// Minimum spacing between nodes, cells.
    pub separation: f64,
    /// Maximum edges created per new node.
    pub neighbors: usize,
    /// Longest edge considered when connecting a new node, cells.
    pub connect_radius: f64,
    /// Extra distance, cells, around new observations within which gains
    /// are recomputed.
    pub gain_margin: f64,
}

impl Default for TopoConfig {
    fn default() -> Self {
        Self {
            rays: 36,
            gain_threshold: 2.0,
            separation: 4.0,
            neighbors: 5,
            connect_radius: 12.0,
            gain_margin: 2.0,
        }
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TopoError {
    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: NodeId, to: NodeId },
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub cell: Cell,
    pub gain: f64,
    pub frontier: bool,
    pub visited: bool,
    /// Promoted to a frontier to clear leftover unexplored pockets.
    #[serde(default)]
    pub residual: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frontier {
    pub node_id: NodeId,
    pub cell: Cell,
    pub region_id: u32,
    pub coverage_gain: f64,
}

/// Mean count of unexplored cells along `rays` equally spaced rays of
/// length `range` (cells). A ray ends at the first known-occupied cell or
/// the grid edge.
pub fn coverage_gain(belief: &WorldBelief, at: Cell, rays: usize, range: f64) -> f64 {
    if rays == 0 {
        return 0.0;
    }
    let mut total = 0usize;
    for k in 0..rays {
        let angle = std::f64::consts::TAU * k as f64 / rays as f64;
        march_ray(at, angle, range, |c| {
            if belief.is_occupied(c) {
                return false;
            }
            if belief.state(c) == UNEXPLORED {
                total += 1;
            }
            true
        });
    }
    total as f64 / rays as f64
}

#[derive(Clone, Debug)]
pub struct TopoGraph {
    config: TopoConfig,
    range_cells: f64,
    cell_size: f64,
    nodes: Vec<Node>,
    adj: Vec<Vec<(NodeId, f64)>>,
    by_cell: HashMap<Cell, NodeId>,
    buckets: HashMap<(i32, i32), Vec<NodeId>>,
    covered: Grid<bool>,
    separation_disc: Vec<Cell>,
    pending: BTreeSet<Cell>,
    robot: NodeId,
}

impl TopoGraph {
    /// Graph holding a single node at the robot cell.
    pub fn new(belief: &WorldBelief, config: TopoConfig, range_cells: f64) -> Self {
        let separation_disc = disc_offsets(config.separation)
            .into_iter()
            .filter(|c| ((c.x * c.x + c.y * c.y) as f64) < config.separation * config.separation)
            .collect();
        let mut g = Self {
            covered: Grid::new(belief.grid_size(), false),
            cell_size: belief.cell_size(),
            config,
            range_cells,
            nodes: Vec::new(),
            adj: Vec::new(),
            by_cell: HashMap::new(),
            buckets: HashMap::new(),
            separation_disc,
            pending: BTreeSet::new(),
            robot: 0,
        };
        let id = g.push_node(belief.robot_cell(), Vec::new());
        g.refresh_gain(belief, id);
        g.robot = id;
        g
    }

    /// Builds a graph from explicit positions and undirected edges. Edge
    /// weights are Euclidean lengths in meters; no collision check is made.
    pub fn from_edges(cells: &[Cell], edges: &[(NodeId, NodeId)], cell_size: f64, grid_size: usize) -> Self {
        let mut g = Self {
            config: TopoConfig::default(),
            range_cells: 0.0,
            cell_size,
            nodes: Vec::new(),
            adj: Vec::new(),
            by_cell: HashMap::new(),
            buckets: HashMap::new(),
            covered: Grid::new(grid_size, false),
            separation_disc: Vec::new(),
            pending: BTreeSet::new(),
            robot: 0,
        };
        for &c in cells {
            g.push_node(c, Vec::new());
        }
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    pub fn config(&self) -> &TopoConfig {
        &self.config
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, f64)] {
        &self.adj[id as usize]
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn robot(&self) -> NodeId {
        self.robot
    }

    pub fn node_at(&self, c: Cell) -> Option<NodeId> {
        self.by_cell.get(&c).copied()
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    fn bucket_key(&self, c: Cell) -> (i32, i32) {
        let s = self.config.connect_radius.max(1.0) as i32;
        (c.x.div_euclid(s), c.y.div_euclid(s))
    }

    fn push_node(&mut self, cell: Cell, edges: Vec<NodeId>) -> NodeId {
        let id = self.nodes.len() as NodeId;
        self.nodes.push(Node {
            id,
            cell,
            gain: 0.0,
            frontier: false,
            visited: false,
            residual: false,
        });
        self.adj.push(Vec::new());
        self.by_cell.insert(cell, id);
        let key = self.bucket_key(cell);
        self.buckets.entry(key).or_default().push(id);
        for &off in &self.separation_disc {
            let c = cell.offset(off.x, off.y);
            if let Some(v) = self.covered.get_mut(c) {
                *v = true;
            }
        }
        for e in edges {
            self.add_edge(id, e);
        }
        id
    }

    fn add_edge(&mut self, a: NodeId, b: NodeId) {
        let len = self.nodes[a as usize].cell.dist(self.nodes[b as usize].cell) * self.cell_size;
        self.adj[a as usize].push((b, len));
        self.adj[b as usize].push((a, len));
    }

    fn segment_free(belief: &WorldBelief, a: Cell, b: Cell) -> bool {
        walk_supercover(a, b, |c| belief.is_free(c))
    }

    /// Up to `neighbors` existing nodes reachable by a collision-free straight
    /// segment from `c`, nearest first (ties by id).
    fn connectable(&self, belief: &WorldBelief, c: Cell) -> Vec<NodeId> {
        let r = self.config.connect_radius;
        let (bx, by) = self.bucket_key(c);
        let mut near: Vec<(i64, NodeId)> = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(ids) = self.buckets.get(&(bx + dx, by + dy)) {
                    for &id in ids {
                        let d2 = self.nodes[id as usize].cell.dist_sq(c);
                        if (d2 as f64) <= r * r {
                            near.push((d2, id));
                        }
                    }
                }
            }
        }
        near.sort_unstable();
        near.into_iter()
            .filter(|&(_, id)| Self::segment_free(belief, c, self.nodes[id as usize].cell))
            .map(|(_, id)| id)
            .take(self.config.neighbors)
            .collect()
    }

    /// Samples new nodes in explored free space not yet within the separation
    /// distance of a node, connecting each to nearby nodes by collision-free
    /// segments. Candidates that cannot be connected yet are kept for later
    /// calls. Returns the ids of the nodes added.
    pub fn expand(&mut self, belief: &WorldBelief, new_free: &[Cell], rng: &mut impl Rng) -> Vec<NodeId> {
        for &c in new_free {
            if belief.is_free(c) && !self.covered[c] {
                self.pending.insert(c);
            }
        }
        let mut added = Vec::new();
        loop {
            let mut candidates: Vec<Cell> = self.pending.iter().copied().collect();
            candidates.shuffle(rng);
            let before = added.len();
            for c in candidates {
                if self.covered[c] {
                    self.pending.remove(&c);
                    continue;
                }
                let edges = self.connectable(belief, c);
                if edges.is_empty() {
                    continue;
                }
                let id = self.push_node(c, edges);
                self.refresh_gain(belief, id);
                self.pending.remove(&c);
                added.push(id);
            }
            if added.len() == before {
                break;
            }
        }
        added
    }

    /// Adds a node at `cell` (which must be known free) if none exists and
    /// returns its id. Used to keep the robot's cell in the graph.
    pub fn ensure_node(&mut self, belief: &WorldBelief, cell: Cell) -> Option<NodeId> {
        if let Some(id) = self.node_at(cell) {
            return Some(id);
        }
        let edges = self.connectable(belief, cell);
        if edges.is_empty() {
            return None;
        }
        let id = self.push_node(cell, edges);
        self.refresh_gain(belief, id);
        self.pending.remove(&cell);
        Some(id)
    }

    fn refresh_gain(&mut self, belief: &WorldBelief, id: NodeId) {
        let n = &mut self.nodes[id as usize];
        if n.visited {
            return;
        }
        let g = coverage_gain(belief, n.cell, self.config.rays, self.range_cells);
        // gains only ever shrink as the map fills in
        n.gain = g.min(if n.gain > 0.0 { n.gain } else { f64::INFINITY });
        n.frontier = n.gain > self.config.gain_threshold;
    }

    /// Recomputes gains of unvisited nodes near newly explored cells.
    pub fn update_gains(&mut self, belief: &WorldBelief, new_cells: &[Cell]) {
        if new_cells.is_empty() {
            return;
        }
        let (mut x0, mut y0, mut x1, mut y1) = (i32::MAX, i32::MAX, i32::MIN, i32::MIN);
        for c in new_cells {
            x0 = x0.min(c.x);
            y0 = y0.min(c.y);
            x1 = x1.max(c.x);
            y1 = y1.max(c.y);
        }
        let reach = self.range_cells + self.config.gain_margin;
        for id in 0..self.nodes.len() {
            let c = self.nodes[id].cell;
            let dx = (x0 - c.x).max(0).max(c.x - x1) as f64;
            let dy = (y0 - c.y).max(0).max(c.y - y1) as f64;
            if dx.hypot(dy) <= reach && self.nodes[id].gain > 0.0 {
                self.refresh_gain(belief, id as NodeId);
            }
        }
    }

    /// The robot has observed everything observable from a visited node.
    pub fn mark_visited(&mut self, id: NodeId) {
        let n = &mut self.nodes[id as usize];
        n.visited = true;
        n.gain = 0.0;
        n.frontier = false;
        n.residual = false;
    }

    pub fn set_robot(&mut self, id: NodeId) {
        self.robot = id;
        self.mark_visited(id);
    }

    /// Current frontier viewpoints, ascending by node id.
    pub fn frontiers(&self, belief: &WorldBelief) -> Vec<Frontier> {
        self.nodes
            .iter()
            .filter(|n| n.frontier || n.residual)
            .filter_map(|n| {
                belief.region_of(n.cell).map(|region_id| Frontier {
                    node_id: n.id,
                    cell: n.cell,
                    region_id,
                    coverage_gain: n.gain,
                })
            })
            .collect()
    }

    /// Promotes nodes beside the remaining boundary between explored free
    /// space and unexplored cells to frontiers, whatever their gain. Small
    /// pockets along walls can otherwise stay below the gain threshold from
    /// every node. Boundary cells are handled in row-major order and one
    /// node serves all boundary cells within two cells of it. Returns the
    /// number of nodes promoted.
    pub fn promote_residual(&mut self, belief: &WorldBelief) -> usize {
        let m = belief.grid_size() as i32;
        let mut served: Vec<Cell> = Vec::new();
        let mut promoted = 0;
        for y in 0..m {
            for x in 0..m {
                let b = Cell::new(x, y);
                if belief.state(b) != UNEXPLORED || served.iter().any(|s| s.dist_sq(b) <= 4) {
                    continue;
                }
                let Some(id) = b
                    .neighbors4()
                    .into_iter()
                    .filter(|&c| belief.is_free(c))
                    .find_map(|c| self.ensure_node(belief, c))
                else {
                    continue;
                };
                let n = &mut self.nodes[id as usize];
                if n.visited {
                    continue;
                }
                n.residual = true;
                served.push(n.cell);
                promoted += 1;
            }
        }
        promoted
    }

    /// Single-source shortest path lengths (meters); unreachable nodes get
    /// `f64::INFINITY`.
    pub fn dijkstra(&self, from: NodeId) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes.len()];
        let mut heap = BinaryHeap::new();
        dist[from as usize] = 0.0;
        heap.push(Entry(0.0, from));
        while let Some(Entry(d, u)) = heap.pop() {
            if d > dist[u as usize] {
                continue;
            }
            for &(v, w) in &self.adj[u as usize] {
                let nd = d + w;
                if nd < dist[v as usize] {
                    dist[v as usize] = nd;
                    heap.push(Entry(nd, v));
                }
            }
        }
        dist
    }

    /// A* shortest path with the straight-line heuristic. Returns the node
    /// sequence (both ends included) and its length in meters.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Result<(Vec<NodeId>, f64), TopoError> {
        let n = self.nodes.len() as NodeId;
        if from >= n {
            return Err(TopoError::UnknownNode(from));
        }
        if to >= n {
            return Err(TopoError::UnknownNode(to));
        }
        let goal = self.nodes[to as usize].cell;
        let h = |id: NodeId| self.nodes[id as usize].cell.dist(goal) * self.cell_size;
        let mut g = vec![f64::INFINITY; n as usize];
        let mut parent = vec![NodeId::MAX; n as usize];
        let mut closed = vec![false; n as usize];
        let mut heap = BinaryHeap::new();
        g[from as usize] = 0.0;
        heap.push(Entry(h(from), from));
        while let Some(Entry(_, u)) = heap.pop() {
            if closed[u as usize] {
                continue;
            }
            if u == to {
                let mut path = vec![to];
                let mut cur = to;
                while cur != from {
                    cur = parent[cur as usize];
                    path.push(cur);
                }
                path.reverse();
                return Ok((path, g[to as usize]));
            }
            closed[u as usize] = true;
            for &(v, w) in &self.adj[u as usize] {
                let ng = g[u as usize] + w;
                if ng < g[v as usize] {
                    g[v as usize] = ng;
                    parent[v as usize] = u;
                    heap.push(Entry(ng + h(v), v));
                }
            }
        }
        Err(TopoError::Unreachable { from, to })
    }

    /// Pairwise graph distances between `ids`; symmetric with a zero diagonal.
    pub fn distance_matrix(&self, ids: &[NodeId]) -> Vec<Vec<f64>> {
        let k = ids.len();
        let mut d = vec![vec![0.0; k]; k];
        for i in 0..k {
            let from = self.dijkstra(ids[i]);
            for j in i + 1..k {
                let v = from[ids[j] as usize];
                d[i][j] = v;
                d[j][i] = v;
            }
        }
        d
    }

    pub fn snapshot(&self) -> GraphSnapshot {
        let mut edges = Vec::with_capacity(self.edge_count());
        for (a, list) in self.adj.iter().enumerate() {
            for &(b, w) in list {
                if (a as NodeId) < b {
                    edges.push(EdgeView { a: a as NodeId, b, length: w });
                }
            }
        }
        GraphSnapshot {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeView {
                    id: n.id,
                    x: n.cell.x,
                    y: n.cell.y,
                    frontier: n.frontier,
                    gain: n.gain,
                })
                .collect(),
            edges,
            robot: self.robot,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeView {
    pub id: NodeId,
    pub x: i32,
    pub y: i32,
    pub frontier: bool,
    pub gain: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeView {
    pub a: NodeId,
    pub b: NodeId,
    pub length: f64,
}

/// Serializable view of the graph for replay and UI streaming.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphSnapshot {
    pub nodes: Vec<NodeView>,
    pub edges: Vec<EdgeView>,
    pub robot: NodeId,
}

/// Min-heap entry ordered by cost, then node id.
#[derive(PartialEq)]
struct Entry(f64, NodeId);

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
