//! Square occupancy-grid geometry: cells, continuous points, and the two
//! line-walking primitives everything else is built on.
//!
//! Coordinates are in cell units. Cell `(x, y)` covers the half-open square
//! `[x - 0.5, x + 0.5) x [y - 0.5, y + 0.5)`, so its center is the integer
//! point itself.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn dist(self, other: Cell) -> f64 {
        let dx = (self.x - other.x) as f64;
        let dy = (self.y - other.y) as f64;
        dx.hypot(dy)
    }

    pub fn dist_sq(self, other: Cell) -> i64 {
        let dx = (self.x - other.x) as i64;
        let dy = (self.y - other.y) as i64;
        dx * dx + dy * dy
    }

    pub fn center(self) -> Point {
        Point::new(self.x as f64, self.y as f64)
    }

    pub fn offset(self, dx: i32, dy: i32) -> Cell {
        Cell::new(self.x + dx, self.y + dy)
    }

    pub fn neighbors4(self) -> [Cell; 4] {
        [
            self.offset(1, 0),
            self.offset(-1, 0),
            self.offset(0, 1),
            self.offset(0, -1),
        ]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// The cell containing this point.
    pub fn cell(self) -> Cell {
        Cell::new((self.x + 0.5).floor() as i32, (self.y + 0.5).floor() as i32)
    }

    pub fn dist(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

/// Dense row-major square grid.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid<T> {
    size: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid<T> {
    pub fn new(size: usize, fill: T) -> Self {
        Self {
            size,
            data: vec![fill; size * size],
        }
    }
}

impl<T> Grid<T> {
    pub fn from_vec(size: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), size * size, "grid data length mismatch");
        Self { size, data }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn contains(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.size && (c.y as usize) < self.size
    }

    fn index(&self, c: Cell) -> usize {
        c.y as usize * self.size + c.x as usize
    }

    pub fn get(&self, c: Cell) -> Option<&T> {
        if self.contains(c) {
            Some(&self.data[self.index(c)])
        } else {
            None
        }
    }

    pub fn get_mut(&mut self, c: Cell) -> Option<&mut T> {
        if self.contains(c) {
            let i = self.index(c);
            Some(&mut self.data[i])
        } else {
            None
        }
    }

    pub fn set(&mut self, c: Cell, value: T) {
        let i = self.index(c);
        self.data[i] = value;
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        let m = self.size as i32;
        (0..m).flat_map(move |y| (0..m).map(move |x| Cell::new(x, y)))
    }

    pub fn values(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.size..(y + 1) * self.size]
    }
}

impl<T> std::ops::Index<Cell> for Grid<T> {
    type Output = T;
    fn index(&self, c: Cell) -> &T {
        &self.data[Grid::index(self, c)]
    }
}

/// Visits every cell touched by the segment between the centers of `a` and
/// `b`, in order from `a` to `b` inclusive. Where the segment passes exactly
/// through a cell corner both side cells are visited, so a line can never
/// slip diagonally between two blocked cells. The walk stops early when
/// `visit` returns `false`; the return value reports whether it completed.
pub fn walk_supercover(a: Cell, b: Cell, mut visit: impl FnMut(Cell) -> bool) -> bool {
    let dx = b.x - a.x;
    let dy = b.y - a.y;
    let nx = dx.unsigned_abs() as i64;
    let ny = dy.unsigned_abs() as i64;
    let sx = dx.signum();
    let sy = dy.signum();
    let mut p = a;
    if !visit(p) {
        return false;
    }
    let (mut ix, mut iy) = (0i64, 0i64);
    while ix < nx || iy < ny {
        let decision = (1 + 2 * ix) * ny - (1 + 2 * iy) * nx;
        if decision == 0 {
            if !visit(p.offset(sx, 0)) || !visit(p.offset(0, sy)) {
                return false;
            }
            p = p.offset(sx, sy);
            ix += 1;
            iy += 1;
        } else if decision < 0 {
            p = p.offset(sx, 0);
            ix += 1;
        } else {
            p = p.offset(0, sy);
            iy += 1;
        }
        if !visit(p) {
            return false;
        }
    }
    true
}

/// True when no cell strictly between `a` and `b` on the supercover line is
/// blocking. The endpoints themselves are never tested.
pub fn line_of_sight(a: Cell, b: Cell, blocks: impl Fn(Cell) -> bool) -> bool {
    walk_supercover(a, b, |c| c == a || c == b || !blocks(c))
}

/// Marches a ray from the center of `origin` in direction `angle` (radians)
/// for `length` cell units, calling `visit` on each cell entered after the
/// origin. A cell is entered when the ray crosses into it at parameter
/// `t <= length`. Exact corner crossings visit both side cells and then
/// step diagonally. Stops early when `visit` returns `false`.
pub fn march_ray(origin: Cell, angle: f64, length: f64, mut visit: impl FnMut(Cell) -> bool) {
    let (dy, dx) = angle.sin_cos();
    let dx = if dx.abs() < 1e-12 { 0.0 } else { dx };
    let dy = if dy.abs() < 1e-12 { 0.0 } else { dy };
    let step_x = if dx > 0.0 { 1 } else { -1 };
    let step_y = if dy > 0.0 { 1 } else { -1 };
    let delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
    let delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
    let mut t_x = 0.5 * delta_x;
    let mut t_y = 0.5 * delta_y;
    let mut cell = origin;
    loop {
        let t = t_x.min(t_y);
        if t > length {
            return;
        }
        if (t_x - t_y).abs() < 1e-9 {
            // exact corner crossing: both side cells are touched, as in
            // `walk_supercover`
            if !visit(cell.offset(step_x, 0)) || !visit(cell.offset(0, step_y)) {
                return;
            }
            cell = cell.offset(step_x, step_y);
            t_x += delta_x;
            t_y += delta_y;
        } else if t_x < t_y {
            cell = cell.offset(step_x, 0);
            t_x += delta_x;
        } else {
            cell = cell.offset(0, step_y);
            t_y += delta_y;
        }
        if !visit(cell) {
            return;
        }
    }
}

/// Offsets of all cells whose center lies within `radius` of the origin
/// center, sorted by distance then row then column.
pub fn disc_offsets(radius: f64) -> Vec<Cell> {
    let r = radius.floor() as i32;
    let r2 = radius * radius;
    let mut out: Vec<Cell> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| Cell::new(dx, dy)))
        .filter(|c| ((c.x * c.x + c.y * c.y) as f64) <= r2 + 1e-9)
        .collect();
    out.sort_by_key(|c| (c.x * c.x + c.y * c.y, c.y, c.x));
    out
}
