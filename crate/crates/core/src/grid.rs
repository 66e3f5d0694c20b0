//! The torus world: occupancy, robot poses, motion with collision blocking,
//! sensor models and sensor noise.
//!
//! Coordinates: `x` is the column and grows towards East, `y` is the row and
//! grows towards South. Moving North decreases `y`.

use std::fmt;

use rand::seq::index;
use rand::Rng;

use crate::error::{parse_err, Error, Result};

/// Sentinel stored in empty cells.
const EMPTY: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Heading {
        Self::ALL[index % 4]
    }

    pub fn rotate_right(self) -> Heading {
        Self::from_index(self.index() + 1)
    }

    pub fn rotate_left(self) -> Heading {
        Self::from_index(self.index() + 3)
    }

    pub fn opposite(self) -> Heading {
        Self::from_index(self.index() + 2)
    }

    /// Unit step in world coordinates.
    pub fn delta(self) -> (i64, i64) {
        match self {
            Heading::North => (0, -1),
            Heading::East => (1, 0),
            Heading::South => (0, 1),
            Heading::West => (-1, 0),
        }
    }

    pub fn is_horizontal(self) -> bool {
        matches!(self, Heading::East | Heading::West)
    }

    /// Maps an offset given in the robot's frame (`dx` to its right, `dy`
    /// negative ahead) into world coordinates.
    pub fn to_world(self, (dx, dy): (i64, i64)) -> (i64, i64) {
        match self {
            Heading::North => (dx, dy),
            Heading::East => (-dy, dx),
            Heading::South => (-dx, -dy),
            Heading::West => (dy, -dx),
        }
    }

    pub fn glyph(self) -> char {
        match self {
            Heading::North => '^',
            Heading::East => '>',
            Heading::South => 'v',
            Heading::West => '<',
        }
    }

    pub fn from_glyph(glyph: char) -> Option<Heading> {
        match glyph {
            '^' => Some(Heading::North),
            '>' => Some(Heading::East),
            'v' => Some(Heading::South),
            '<' => Some(Heading::West),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Turn {
    Left,
    Right,
}

/// What a robot does in one time step. There is no idle action: a robot
/// either attempts to move forward or rotates by 90 degrees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub move_forward: bool,
    pub turn: Turn,
}

impl Action {
    pub const FORWARD: Action = Action {
        move_forward: true,
        turn: Turn::Right,
    };

    pub fn rotate(turn: Turn) -> Action {
        Action {
            move_forward: false,
            turn,
        }
    }

    /// The action value fed back into the networks: 1 for forward, 0 for rotation.
    pub fn value(self) -> bool {
        self.move_forward
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pose {
    pub x: usize,
    pub y: usize,
    pub heading: Heading,
}

impl Pose {
    pub fn new(x: usize, y: usize, heading: Heading) -> Pose {
        Pose { x, y, heading }
    }

    pub fn cell(&self) -> (usize, usize) {
        (self.x, self.y)
    }
}

/// Reduces `coord` onto the ring `0..extent`.
pub fn wrap(coord: i64, extent: usize) -> usize {
    debug_assert!(extent > 0);
    coord.rem_euclid(extent as i64) as usize
}

/// Minimal displacement between two coordinates on a ring of size `extent`.
pub fn torus_distance(a: usize, b: usize, extent: usize) -> usize {
    let d = a.abs_diff(b);
    d.min(extent - d)
}

/// Sensor layouts. Offsets are `(dx, dy)` in the robot frame: `dx` to the
/// robot's right, `dy = -1` is the cell directly ahead.
///
/// | model | cells | layout |
/// |-------|-------|--------|
/// | A | 8 | Moore neighbourhood, clockwise from ahead |
/// | B | 6 | the 3x2 block directly ahead |
/// | C | 14 | Moore neighbourhood plus the 3x2 block two rows ahead |
///
/// Model C indices (`S0`..`S13`):
///
/// ```text
///          S6  S8  S7        dy = -3
///          S4  S3  S2        dy = -2
///          S5  S0  S1        dy = -1
///         S13  ^   S9        dy =  0
///         S12 S11 S10        dy = +1
/// ```
///
/// The column through the robot (`S0`, `S3`, `S8`, `S11`) holds the cells in
/// front of and behind it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SensorModel {
    A,
    B,
    C,
}

const MODEL_A: [(i64, i64); 8] = [
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
];

const MODEL_B: [(i64, i64); 6] = [(0, -1), (1, -1), (-1, -1), (0, -2), (1, -2), (-1, -2)];

const MODEL_C: [(i64, i64); 14] = [
    (0, -1),
    (1, -1),
    (1, -2),
    (0, -2),
    (-1, -2),
    (-1, -1),
    (-1, -3),
    (1, -3),
    (0, -3),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
];

impl SensorModel {
    pub fn offsets(self) -> &'static [(i64, i64)] {
        match self {
            SensorModel::A => &MODEL_A,
            SensorModel::B => &MODEL_B,
            SensorModel::C => &MODEL_C,
        }
    }

    /// Number of sensors `R`.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        self.offsets().len()
    }

    /// Indices of the sensors on the robot's own column (ahead and behind).
    pub fn axial_sensors(self) -> impl Iterator<Item = usize> {
        self.offsets()
            .iter()
            .enumerate()
            .filter(|(_, &(dx, _))| dx == 0)
            .map(|(i, _)| i)
    }

    pub fn name(self) -> &'static str {
        match self {
            SensorModel::A => "A",
            SensorModel::B => "B",
            SensorModel::C => "C",
        }
    }

    pub fn parse(name: &str) -> Option<SensorModel> {
        match name.trim() {
            "A" | "a" => Some(SensorModel::A),
            "B" | "b" => Some(SensorModel::B),
            "C" | "c" => Some(SensorModel::C),
            _ => None,
        }
    }
}

impl fmt::Display for SensorModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Binary sensor values packed into the low `len` bits; bit `r` is sensor `r`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SensorReading {
    bits: u32,
    len: u8,
}

impl SensorReading {
    pub fn new(bits: u32, len: usize) -> SensorReading {
        debug_assert!(len <= 32);
        let mask = Self::full_mask(len);
        SensorReading {
            bits: bits & mask,
            len: len as u8,
        }
    }

    pub fn from_bits(values: &[bool]) -> SensorReading {
        let bits = values
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &b)| acc | (u32::from(b) << i));
        SensorReading::new(bits, values.len())
    }

    fn full_mask(len: usize) -> u32 {
        if len >= 32 {
            u32::MAX
        } else {
            (1u32 << len) - 1
        }
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    pub fn len(self) -> usize {
        self.len as usize
    }

    pub fn is_empty(self) -> bool {
        self.len == 0
    }

    pub fn get(self, index: usize) -> bool {
        self.bits >> index & 1 == 1
    }

    pub fn to_vec(self) -> Vec<bool> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    pub fn complement(self) -> SensorReading {
        SensorReading::new(!self.bits, self.len())
    }

    /// Number of positions where the two readings agree.
    pub fn matches(self, other: SensorReading) -> u32 {
        self.len as u32 - ((self.bits ^ other.bits) & Self::full_mask(self.len())).count_ones()
    }
}

/// Independent bit flips on every sensed value.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseModel {
    flip_probability: f64,
}

impl NoiseModel {
    pub const NONE: NoiseModel = NoiseModel {
        flip_probability: 0.0,
    };

    pub fn new(flip_probability: f64) -> Result<NoiseModel> {
        if !(0.0..=1.0).contains(&flip_probability) {
            return Err(Error::InvalidConfig(format!(
                "flip probability {flip_probability} outside [0, 1]"
            )));
        }
        Ok(NoiseModel { flip_probability })
    }

    pub fn flip_probability(&self) -> f64 {
        self.flip_probability
    }

    pub fn is_noiseless(&self) -> bool {
        self.flip_probability == 0.0
    }

    /// Flips each bit independently. Draws nothing from `rng` when noiseless
    /// or when every bit flips with certainty.
    pub fn apply<R: Rng + ?Sized>(&self, reading: SensorReading, rng: &mut R) -> SensorReading {
        if self.flip_probability <= 0.0 {
            return reading;
        }
        if self.flip_probability >= 1.0 {
            return reading.complement();
        }
        let flips = (0..reading.len()).fold(0u32, |acc, r| {
            acc | (u32::from(rng.gen_bool(self.flip_probability)) << r)
        });
        SensorReading::new(reading.bits ^ flips, reading.len())
    }
}

/// Occupancy and poses of one swarm on a `width x height` torus.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TorusGrid {
    width: usize,
    height: usize,
    cells: Vec<u32>,
    robots: Vec<Pose>,
}

impl TorusGrid {
    pub fn new(width: usize, height: usize) -> Result<TorusGrid> {
        if width == 0 || height == 0 || width.checked_mul(height).is_none() {
            return Err(Error::InvalidGrid { width, height });
        }
        Ok(TorusGrid {
            width,
            height,
            cells: vec![EMPTY; width * height],
            robots: Vec::new(),
        })
    }

    /// Builds a grid whose robot ids follow the order of `poses`.
    pub fn from_poses(width: usize, height: usize, poses: &[Pose]) -> Result<TorusGrid> {
        let mut grid = TorusGrid::new(width, height)?;
        for &pose in poses {
            grid.add_robot(pose)?;
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn area(&self) -> usize {
        self.width * self.height
    }

    pub fn robots(&self) -> &[Pose] {
        &self.robots
    }

    pub fn len(&self) -> usize {
        self.robots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.robots.is_empty()
    }

    pub fn pose(&self, id: usize) -> Pose {
        self.robots[id]
    }

    fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    fn check_bounds(&self, x: usize, y: usize) -> Result<()> {
        if x >= self.width || y >= self.height {
            return Err(Error::OutOfBounds {
                x,
                y,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }

    /// Appends a robot and returns its id.
    pub fn add_robot(&mut self, pose: Pose) -> Result<usize> {
        self.check_bounds(pose.x, pose.y)?;
        let idx = self.index(pose.x, pose.y);
        if self.cells[idx] != EMPTY {
            return Err(Error::CellOccupied {
                x: pose.x,
                y: pose.y,
            });
        }
        let id = self.robots.len();
        self.cells[idx] = id as u32;
        self.robots.push(pose);
        Ok(id)
    }

    pub fn robot_at(&self, x: usize, y: usize) -> Option<usize> {
        match self.cells[self.index(x, y)] {
            EMPTY => None,
            id => Some(id as usize),
        }
    }

    pub fn is_occupied(&self, x: usize, y: usize) -> bool {
        self.cells[self.index(x, y)] != EMPTY
    }

    /// Occupancy at a signed offset from `(x, y)`, wrapping around the torus.
    pub fn is_occupied_rel(&self, x: usize, y: usize, dx: i64, dy: i64) -> bool {
        let nx = wrap(x as i64 + dx, self.width);
        let ny = wrap(y as i64 + dy, self.height);
        self.is_occupied(nx, ny)
    }

    /// Robot id at a signed offset from `(x, y)`, wrapping around the torus.
    pub fn robot_at_rel(&self, x: usize, y: usize, dx: i64, dy: i64) -> Option<usize> {
        let nx = wrap(x as i64 + dx, self.width);
        let ny = wrap(y as i64 + dy, self.height);
        self.robot_at(nx, ny)
    }

    pub fn cell_ahead(&self, pose: &Pose) -> (usize, usize) {
        let (dx, dy) = pose.heading.delta();
        (
            wrap(pose.x as i64 + dx, self.width),
            wrap(pose.y as i64 + dy, self.height),
        )
    }

    /// Executes one robot's action and returns its new pose. A forward move
    /// into an occupied cell leaves the pose unchanged.
    pub fn apply_action(&mut self, id: usize, action: Action) -> Pose {
        let pose = self.robots[id];
        let next = if action.move_forward {
            let (nx, ny) = self.cell_ahead(&pose);
            let target = self.index(nx, ny);
            if self.cells[target] == EMPTY {
                let source = self.index(pose.x, pose.y);
                self.cells[source] = EMPTY;
                self.cells[target] = id as u32;
                Pose::new(nx, ny, pose.heading)
            } else {
                pose
            }
        } else {
            let heading = match action.turn {
                Turn::Left => pose.heading.rotate_left(),
                Turn::Right => pose.heading.rotate_right(),
            };
            Pose { heading, ..pose }
        };
        self.robots[id] = next;
        next
    }

    /// Advances the whole swarm by one time step. Robots act one after the
    /// other in ascending id order, so a forward move sees the occupancy left
    /// by every lower id in the same step.
    pub fn step_swarm(&mut self, actions: &[Action]) -> Result<()> {
        if actions.len() != self.robots.len() {
            return Err(Error::DimensionMismatch {
                what: "actions per step",
                expected: self.robots.len(),
                found: actions.len(),
            });
        }
        for (id, &action) in actions.iter().enumerate() {
            self.apply_action(id, action);
        }
        Ok(())
    }

    /// Moves robot `id` to an empty cell, keeping its heading.
    pub fn relocate(&mut self, id: usize, x: usize, y: usize) -> Result<()> {
        self.check_bounds(x, y)?;
        let pose = self.robots[id];
        if (pose.x, pose.y) == (x, y) {
            return Ok(());
        }
        let target = self.index(x, y);
        if self.cells[target] != EMPTY {
            return Err(Error::CellOccupied { x, y });
        }
        let source = self.index(pose.x, pose.y);
        self.cells[source] = EMPTY;
        self.cells[target] = id as u32;
        self.robots[id] = Pose { x, y, ..pose };
        Ok(())
    }

    /// Deletes every robot for which `keep` is false. Surviving robots keep
    /// their relative id order. Returns the number removed.
    pub fn retain(&mut self, mut keep: impl FnMut(&Pose) -> bool) -> usize {
        let before = self.robots.len();
        self.robots.retain(|p| keep(p));
        self.cells.fill(EMPTY);
        for (id, pose) in self.robots.iter().enumerate() {
            let idx = pose.y * self.width + pose.x;
            self.cells[idx] = id as u32;
        }
        before - self.robots.len()
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.iter().filter(|&&c| c != EMPTY).count()
    }

    /// Consistency check between the occupancy map and the pose list.
    pub fn is_consistent(&self) -> bool {
        self.occupied_cells() == self.robots.len()
            && self
                .robots
                .iter()
                .enumerate()
                .all(|(id, p)| self.cells[self.index(p.x, p.y)] == id as u32)
    }

    /// Renders the grid as one text row per line: `.` for an empty cell,
    /// `^ > v <` for a robot heading North, East, South or West.
    pub fn to_ascii(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(match self.robot_at(x, y) {
                    Some(id) => self.robots[id].heading.glyph(),
                    None => '.',
                });
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`TorusGrid::to_ascii`]. Robot ids are
    /// assigned in row-major order. Blank lines are ignored.
    pub fn from_ascii(text: &str) -> Result<TorusGrid> {
        let rows: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let Some(&(_, first)) = rows.first() else {
            return Err(parse_err(1, "empty snapshot"));
        };
        let width = first.chars().count();
        let mut grid = TorusGrid::new(width, rows.len())?;
        for (y, &(line_no, row)) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(parse_err(
                    line_no,
                    format!("row has {} cells, expected {width}", row.chars().count()),
                ));
            }
            for (x, c) in row.chars().enumerate() {
                if c == '.' {
                    continue;
                }
                let heading = Heading::from_glyph(c)
                    .ok_or_else(|| parse_err(line_no, format!("unexpected character {c:?}")))?;
                grid.add_robot(Pose::new(x, y, heading))?;
            }
        }
        Ok(grid)
    }
}

impl fmt::Display for TorusGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_ascii())
    }
}

/// Places `count` robots on distinct cells drawn uniformly without
/// replacement, each with a uniformly random heading.
pub fn random_placement<R: Rng + ?Sized>(
    width: usize,
    height: usize,
    count: usize,
    rng: &mut R,
) -> Result<TorusGrid> {
    let mut grid = TorusGrid::new(width, height)?;
    let capacity = grid.area();
    if count > capacity {
        return Err(Error::Overcrowded {
            requested: count,
            capacity,
        });
    }
    let cells = index::sample(rng, capacity, count);
    for cell in cells.iter() {
        let heading = Heading::from_index(rng.gen_range(0..4));
        grid.add_robot(Pose::new(cell % width, cell / width, heading))?;
    }
    Ok(grid)
}

/// Reads the sensors of the robot at `pose` and applies noise.
pub fn sense<R: Rng + ?Sized>(
    grid: &TorusGrid,
    pose: &Pose,
    model: SensorModel,
    noise: &NoiseModel,
    rng: &mut R,
) -> SensorReading {
    let bits = model
        .offsets()
        .iter()
        .enumerate()
        .fold(0u32, |acc, (r, &offset)| {
            let (dx, dy) = pose.heading.to_world(offset);
            acc | (u32::from(grid.is_occupied_rel(pose.x, pose.y, dx, dy)) << r)
        });
    noise.apply(SensorReading::new(bits, model.len()), rng)
}

/// Precomputed world-frame cell indices of every sensor, for every cell and
/// heading of one grid size. Produces the same readings as [`sense`].
#[derive(Debug, Clone)]
pub struct SensorTable {
    width: usize,
    height: usize,
    model: SensorModel,
    cells: Vec<u32>,
}

impl SensorTable {
    pub fn new(width: usize, height: usize, model: SensorModel) -> SensorTable {
        let r = model.len();
        let mut cells = Vec::with_capacity(width * height * 4 * r);
        for y in 0..height {
            for x in 0..width {
                for heading in Heading::ALL {
                    for &offset in model.offsets() {
                        let (dx, dy) = heading.to_world(offset);
                        let nx = wrap(x as i64 + dx, width);
                        let ny = wrap(y as i64 + dy, height);
                        cells.push((ny * width + nx) as u32);
                    }
                }
            }
        }
        SensorTable {
            width,
            height,
            model,
            cells,
        }
    }

    pub fn model(&self) -> SensorModel {
        self.model
    }

    pub fn fits(&self, grid: &TorusGrid) -> bool {
        grid.width == self.width && grid.height == self.height
    }

    /// Noiseless reading for `pose` on `grid`.
    #[inline]
    pub fn read(&self, grid: &TorusGrid, pose: &Pose) -> SensorReading {
        debug_assert!(self.fits(grid));
        let r = self.model.len();
        let base = ((pose.y * self.width + pose.x) * 4 + pose.heading.index()) * r;
        let bits = self.cells[base..base + r]
            .iter()
            .enumerate()
            .fold(0u32, |acc, (i, &c)| {
                acc | (u32::from(grid.cells[c as usize] != EMPTY) << i)
            });
        SensorReading::new(bits, r)
    }
}
