//! Structure detection on a final configuration.
//!
//! Eight patterns are scored by the fraction of robots that belong to them;
//! the configuration is labelled with the best-scoring one.
//!
//! * Line / pair: a run of adjacent robots in one row (or column) whose
//!   headings all lie along the run, with both end robots facing inwards (not
//!   required for a run closing a ring around the torus). Each side of the run
//!   may hold at most `len / 2` (rounded down) robots and no two of them on
//!   adjacent cells. Three or more robots form a line, two a pair. A run is
//!   split wherever two robots face away from each other.
//! * Aggregation / clustering / loose grouping: a core robot has at least six
//!   occupied Moore cells and at least three occupied von Neumann cells.
//!   Moore-adjacent cores form one cluster; every Moore neighbour of a core is
//!   a member. One cluster is an aggregation. Several clusters that are all
//!   linked (directly or transitively) through shared member robots form a
//!   loose grouping, otherwise a clustering.
//! * Random dispersion: at most one occupied Moore cell.
//! * Square: the four diagonal cells occupied and every other cell of the
//!   centred 5x5 window empty; the centre and its four diagonal robots are
//!   members.
//! * Triangular lattice: the four diagonal cells occupied and the four von
//!   Neumann cells empty (a local checkerboard); the centre and its diagonal
//!   robots are members.

use std::fmt;

use crate::grid::{Heading, TorusGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PatternLabel {
    Line,
    Pair,
    Aggregation,
    Clustering,
    LooseGrouping,
    RandomDispersion,
    Square,
    TriangularLattice,
}

impl PatternLabel {
    pub const ALL: [PatternLabel; 8] = [
        PatternLabel::Line,
        PatternLabel::Pair,
        PatternLabel::Aggregation,
        PatternLabel::Clustering,
        PatternLabel::LooseGrouping,
        PatternLabel::RandomDispersion,
        PatternLabel::Square,
        PatternLabel::TriangularLattice,
    ];

    /// Tie-break order, strongest first.
    pub const PRECEDENCE: [PatternLabel; 8] = [
        PatternLabel::Square,
        PatternLabel::TriangularLattice,
        PatternLabel::Line,
        PatternLabel::Pair,
        PatternLabel::Aggregation,
        PatternLabel::LooseGrouping,
        PatternLabel::Clustering,
        PatternLabel::RandomDispersion,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PatternLabel::Line => "line",
            PatternLabel::Pair => "pair",
            PatternLabel::Aggregation => "aggregation",
            PatternLabel::Clustering => "clustering",
            PatternLabel::LooseGrouping => "loose-grouping",
            PatternLabel::RandomDispersion => "random-dispersion",
            PatternLabel::Square => "square",
            PatternLabel::TriangularLattice => "triangular-lattice",
        }
    }

    pub fn parse(name: &str) -> Option<PatternLabel> {
        Self::ALL.into_iter().find(|l| l.name() == name)
    }
}

impl fmt::Display for PatternLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LineOrientation {
    Horizontal,
    Vertical,
    MazeLike,
}

impl LineOrientation {
    /// Mostly horizontal (vertical) when more than two thirds of the lines
    /// are horizontal (vertical); maze-like otherwise.
    pub fn from_tally(horizontal: usize, vertical: usize) -> Option<LineOrientation> {
        let total = horizontal + vertical;
        if total == 0 {
            None
        } else if 3 * horizontal > 2 * total {
            Some(LineOrientation::Horizontal)
        } else if 3 * vertical > 2 * total {
            Some(LineOrientation::Vertical)
        } else {
            Some(LineOrientation::MazeLike)
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LineOrientation::Horizontal => "horizontal",
            LineOrientation::Vertical => "vertical",
            LineOrientation::MazeLike => "maze-like",
        }
    }
}

impl fmt::Display for LineOrientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A run of robots accepted as a line or pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    /// Robot ids ordered along the run.
    pub robots: Vec<usize>,
    pub horizontal: bool,
    /// Closes a ring around the torus.
    pub ring: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LineDetection {
    pub lines: Vec<Segment>,
    pub pairs: Vec<Segment>,
}

impl LineDetection {
    pub fn horizontal_lines(&self) -> usize {
        self.lines.iter().filter(|s| s.horizontal).count()
    }

    pub fn vertical_lines(&self) -> usize {
        self.lines.iter().filter(|s| !s.horizontal).count()
    }
}

/// Lane view over rows (horizontal) or columns (vertical).
struct Lanes<'a> {
    grid: &'a TorusGrid,
    horizontal: bool,
}

impl Lanes<'_> {
    fn count(&self) -> usize {
        if self.horizontal {
            self.grid.height()
        } else {
            self.grid.width()
        }
    }

    fn length(&self) -> usize {
        if self.horizontal {
            self.grid.width()
        } else {
            self.grid.height()
        }
    }

    fn cell(&self, lane: usize, pos: usize) -> (usize, usize) {
        if self.horizontal {
            (pos, lane)
        } else {
            (lane, pos)
        }
    }

    /// +1 facing towards increasing position, -1 towards decreasing, 0 if
    /// the cell is empty or the robot is not aligned with the lane.
    fn direction(&self, lane: usize, pos: usize) -> i8 {
        let (x, y) = self.cell(lane, pos);
        let Some(id) = self.grid.robot_at(x, y) else {
            return 0;
        };
        match (self.horizontal, self.grid.pose(id).heading) {
            (true, Heading::East) | (false, Heading::South) => 1,
            (true, Heading::West) | (false, Heading::North) => -1,
            _ => 0,
        }
    }

    fn side_occupied(&self, lane: usize, pos: usize, side: i64) -> bool {
        let (x, y) = self.cell(lane, pos);
        if self.horizontal {
            self.grid.is_occupied_rel(x, y, 0, side)
        } else {
            self.grid.is_occupied_rel(x, y, side, 0)
        }
    }

    fn robot(&self, lane: usize, pos: usize) -> usize {
        let (x, y) = self.cell(lane, pos);
        self.grid.robot_at(x, y).expect("run positions are occupied")
    }

    /// Side-neighbour rule for a run of positions (in order along the lane).
    fn sides_clear(&self, lane: usize, positions: &[usize], ring: bool) -> bool {
        let allowed = positions.len() / 2;
        [-1i64, 1].into_iter().all(|side| {
            let occupied: Vec<bool> = positions
                .iter()
                .map(|&p| self.side_occupied(lane, p, side))
                .collect();
            let count = occupied.iter().filter(|&&o| o).count();
            let adjacent = occupied.windows(2).any(|w| w[0] && w[1])
                || (ring && occupied.len() > 2 && occupied[0] && occupied[occupied.len() - 1]);
            count <= allowed && !adjacent
        })
    }

    fn scan(&self, out: &mut LineDetection) {
        let len = self.length();
        for lane in 0..self.count() {
            let dirs: Vec<i8> = (0..len).map(|p| self.direction(lane, p)).collect();
            let runs = aligned_runs(&dirs);
            for run in runs {
                let ring = run.len() == len && dirs.iter().all(|&d| d != 0);
                for piece in split_facing_away(&run, &dirs, ring) {
                    if piece.positions.len() < 2 {
                        continue;
                    }
                    let first = dirs[piece.positions[0]];
                    let last = dirs[*piece.positions.last().unwrap()];
                    let terminated = piece.closed || (first == 1 && last == -1);
                    if !terminated || !self.sides_clear(lane, &piece.positions, piece.closed) {
                        continue;
                    }
                    let segment = Segment {
                        robots: piece.positions.iter().map(|&p| self.robot(lane, p)).collect(),
                        horizontal: self.horizontal,
                        ring: piece.closed,
                    };
                    if segment.robots.len() >= 3 {
                        out.lines.push(segment);
                    } else {
                        out.pairs.push(segment);
                    }
                }
            }
        }
    }
}

struct Piece {
    positions: Vec<usize>,
    /// The piece is the whole ring with no facing-away break: rule 2 waived.
    closed: bool,
}

/// Maximal cyclic runs of aligned robots, each listed in lane order.
fn aligned_runs(dirs: &[i8]) -> Vec<Vec<usize>> {
    let len = dirs.len();
    let Some(gap) = dirs.iter().position(|&d| d == 0) else {
        return vec![(0..len).collect()];
    };
    let mut runs = Vec::new();
    let mut current = Vec::new();
    for step in 1..=len {
        let p = (gap + step) % len;
        if dirs[p] == 0 {
            if !current.is_empty() {
                runs.push(std::mem::take(&mut current));
            }
        } else {
            current.push(p);
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }
    runs
}

/// Splits a run between neighbours facing away from each other.
fn split_facing_away(run: &[usize], dirs: &[i8], ring: bool) -> Vec<Piece> {
    let breaks_after: Vec<usize> = (0..run.len())
        .filter(|&i| {
            let next = if i + 1 < run.len() {
                Some(run[i + 1])
            } else if ring {
                Some(run[0])
            } else {
                None
            };
            next.is_some_and(|n| dirs[run[i]] == -1 && dirs[n] == 1)
        })
        .collect();
    if ring {
        if breaks_after.is_empty() {
            return vec![Piece {
                positions: run.to_vec(),
                closed: true,
            }];
        }
        // rotate so the sequence starts right after a break
        let start = (breaks_after[0] + 1) % run.len();
        let rotated: Vec<usize> = run[start..].iter().chain(&run[..start]).copied().collect();
        return split_facing_away(&rotated, dirs, false);
    }
    let mut pieces = Vec::new();
    let mut begin = 0;
    for &b in &breaks_after {
        pieces.push(Piece {
            positions: run[begin..=b].to_vec(),
            closed: false,
        });
        begin = b + 1;
    }
    if begin < run.len() {
        pieces.push(Piece {
            positions: run[begin..].to_vec(),
            closed: false,
        });
    }
    pieces
}

/// Finds all lines and pairs, in rows first and then in columns.
pub fn detect_lines_and_pairs(grid: &TorusGrid) -> LineDetection {
    let mut out = LineDetection::default();
    Lanes {
        grid,
        horizontal: true,
    }
    .scan(&mut out);
    Lanes {
        grid,
        horizontal: false,
    }
    .scan(&mut out);
    out
}

const MOORE: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];
const VON_NEUMANN: [(i64, i64); 4] = [(0, -1), (1, 0), (0, 1), (-1, 0)];
const DIAGONAL: [(i64, i64); 4] = [(-1, -1), (1, -1), (1, 1), (-1, 1)];

fn count_occupied(grid: &TorusGrid, id: usize, offsets: &[(i64, i64)]) -> usize {
    let p = grid.pose(id);
    offsets
        .iter()
        .filter(|&&(dx, dy)| grid.is_occupied_rel(p.x, p.y, dx, dy))
        .count()
}

fn neighbours(grid: &TorusGrid, id: usize, offsets: &[(i64, i64)]) -> Vec<usize> {
    let p = grid.pose(id);
    offsets
        .iter()
        .filter_map(|&(dx, dy)| grid.robot_at_rel(p.x, p.y, dx, dy))
        .collect()
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn union(parent: &mut [usize], a: usize, b: usize) {
    let (ra, rb) = (find(parent, a), find(parent, b));
    if ra != rb {
        parent[ra.max(rb)] = ra.min(rb);
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub cores: Vec<usize>,
    /// Cores and all of their Moore neighbours, sorted.
    pub members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterDetection {
    pub clusters: Vec<Cluster>,
    /// `None` when there is no core robot at all.
    pub label: Option<PatternLabel>,
    pub members: Vec<bool>,
}

pub fn detect_clusters(grid: &TorusGrid) -> ClusterDetection {
    let n = grid.len();
    let is_core: Vec<bool> = (0..n)
        .map(|id| count_occupied(grid, id, &MOORE) >= 6 && count_occupied(grid, id, &VON_NEUMANN) >= 3)
        .collect();

    let mut parent: Vec<usize> = (0..n).collect();
    for id in (0..n).filter(|&i| is_core[i]) {
        for nb in neighbours(grid, id, &MOORE) {
            if is_core[nb] {
                union(&mut parent, id, nb);
            }
        }
    }

    let mut roots: Vec<usize> = Vec::new();
    let mut clusters: Vec<Cluster> = Vec::new();
    for id in (0..n).filter(|&i| is_core[i]) {
        let root = find(&mut parent, id);
        let k = match roots.iter().position(|&r| r == root) {
            Some(k) => k,
            None => {
                roots.push(root);
                clusters.push(Cluster {
                    cores: Vec::new(),
                    members: Vec::new(),
                });
                roots.len() - 1
            }
        };
        clusters[k].cores.push(id);
        clusters[k].members.push(id);
        clusters[k].members.extend(neighbours(grid, id, &MOORE));
    }
    for c in &mut clusters {
        c.members.sort_unstable();
        c.members.dedup();
    }

    let mut members = vec![false; n];
    let mut owner: Vec<Option<usize>> = vec![None; n];
    let mut links: Vec<usize> = (0..clusters.len()).collect();
    for (k, c) in clusters.iter().enumerate() {
        for &m in &c.members {
            members[m] = true;
            match owner[m] {
                Some(other) => union(&mut links, other, k),
                None => owner[m] = Some(k),
            }
        }
    }

    let label = match clusters.len() {
        0 => None,
        1 => Some(PatternLabel::Aggregation),
        count => {
            let components = (0..count).filter(|&k| find(&mut links, k) == k).count();
            if components == 1 {
                Some(PatternLabel::LooseGrouping)
            } else {
                Some(PatternLabel::Clustering)
            }
        }
    };
    ClusterDetection {
        clusters,
        label,
        members,
    }
}

/// Robots with at most one occupied Moore cell.
pub fn detect_random_dispersion(grid: &TorusGrid) -> Vec<bool> {
    (0..grid.len())
        .map(|id| count_occupied(grid, id, &MOORE) <= 1)
        .collect()
}

pub fn detect_squares(grid: &TorusGrid) -> Vec<bool> {
    let mut members = vec![false; grid.len()];
    for id in 0..grid.len() {
        let p = grid.pose(id);
        if count_occupied(grid, id, &DIAGONAL) != 4 {
            continue;
        }
        let others_empty = (-2i64..=2)
            .flat_map(|dy| (-2i64..=2).map(move |dx| (dx, dy)))
            .filter(|&(dx, dy)| !(dx == 0 && dy == 0) && !(dx.abs() == 1 && dy.abs() == 1))
            .all(|(dx, dy)| !grid.is_occupied_rel(p.x, p.y, dx, dy));
        if others_empty {
            members[id] = true;
            for nb in neighbours(grid, id, &DIAGONAL) {
                members[nb] = true;
            }
        }
    }
    members
}

pub fn detect_triangular_lattice(grid: &TorusGrid) -> Vec<bool> {
    let mut members = vec![false; grid.len()];
    for id in 0..grid.len() {
        if count_occupied(grid, id, &DIAGONAL) == 4 && count_occupied(grid, id, &VON_NEUMANN) == 0 {
            members[id] = true;
            for nb in neighbours(grid, id, &DIAGONAL) {
                members[nb] = true;
            }
        }
    }
    members
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    /// Member fraction per label, indexed by [`PatternLabel::index`].
    pub fractions: [f64; 8],
    pub winner: PatternLabel,
    pub horizontal_lines: usize,
    pub vertical_lines: usize,
    /// Set when the winner is [`PatternLabel::Line`].
    pub line_orientation: Option<LineOrientation>,
}

impl StructureReport {
    pub fn fraction(&self, label: PatternLabel) -> f64 {
        self.fractions[label.index()]
    }

    /// Fraction of robots in the winning structure.
    pub fn winner_fraction(&self) -> f64 {
        self.fraction(self.winner)
    }

    /// Winner name with the orientation appended for lines, e.g. `line/vertical`.
    pub fn detailed_label(&self) -> String {
        match self.line_orientation {
            Some(o) => format!("{}/{}", self.winner, o),
            None => self.winner.to_string(),
        }
    }

    pub fn summary(&self) -> String {
        let mut out = format!("structure: {}\n", self.detailed_label());
        for label in PatternLabel::ALL {
            out.push_str(&format!("  {:<20} {:>6.1}%\n", label.name(), 100.0 * self.fraction(label)));
        }
        out.push_str(&format!(
            "  lines: {} horizontal, {} vertical\n",
            self.horizontal_lines, self.vertical_lines
        ));
        out
    }
}

fn share(members: &[bool], n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        members.iter().filter(|&&m| m).count() as f64 / n as f64
    }
}

/// Scores every pattern and picks the winner. Ties go to the earlier label in
/// [`PatternLabel::PRECEDENCE`]; a configuration matching nothing is reported
/// as random dispersion.
pub fn classify(grid: &TorusGrid) -> StructureReport {
    let n = grid.len();
    let lines = detect_lines_and_pairs(grid);
    let mut line_members = vec![false; n];
    let mut pair_members = vec![false; n];
    for s in &lines.lines {
        for &id in &s.robots {
            line_members[id] = true;
        }
    }
    for s in &lines.pairs {
        for &id in &s.robots {
            pair_members[id] = true;
        }
    }
    let clusters = detect_clusters(grid);

    let mut fractions = [0.0; 8];
    fractions[PatternLabel::Line.index()] = share(&line_members, n);
    fractions[PatternLabel::Pair.index()] = share(&pair_members, n);
    if let Some(label) = clusters.label {
        fractions[label.index()] = share(&clusters.members, n);
    }
    fractions[PatternLabel::RandomDispersion.index()] = share(&detect_random_dispersion(grid), n);
    fractions[PatternLabel::Square.index()] = share(&detect_squares(grid), n);
    fractions[PatternLabel::TriangularLattice.index()] = share(&detect_triangular_lattice(grid), n);

    let best = fractions.iter().copied().fold(0.0, f64::max);
    let winner = if best == 0.0 {
        PatternLabel::RandomDispersion
    } else {
        PatternLabel::PRECEDENCE
            .into_iter()
            .find(|l| fractions[l.index()] == best)
            .expect("maximum is attained")
    };
    let (h, v) = (lines.horizontal_lines(), lines.vertical_lines());
    StructureReport {
        fractions,
        winner,
        horizontal_lines: h,
        vertical_lines: v,
        line_orientation: if winner == PatternLabel::Line {
            LineOrientation::from_tally(h, v)
        } else {
            None
        },
    }
}
