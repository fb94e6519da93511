//! Building blueprints: parsing, validation and grid geometry.
//!
//! A blueprint is an ASCII grid followed by an optional `---` separator and a
//! TOML metadata block. The first text line is the top row of the building;
//! cell coordinates use `y` pointing up, so the last text line is `y = 0`.
//!
//! Legend: `#` wall, `.` floor, `D` door, `E` exit, `P` spawn (floor),
//! `0`-`9` sign anchors (floor).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use glam::DVec2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hazard::HazardField;

pub const DEFAULT_CELL_SIZE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error on line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("blueprint has no exit cells")]
    NoExit,
    #[error("blueprint has no spawn cells")]
    NoSpawn,
    #[error("bad metadata: {0}")]
    BadMetadata(String),
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("cell ({x}, {y}) is outside the {width}x{height} map")]
    OutOfBounds {
        x: i32,
        y: i32,
        width: usize,
        height: usize,
    },
    #[error("cannot read scenario {path}: {message}")]
    Io { path: String, message: String },
}

/// Integer cell coordinate, `y` up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[i32; 2]", into = "[i32; 2]")]
pub struct Cell {
    pub x: i32,
    pub y: i32,
}

impl Cell {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn offset(self, dx: i32, dy: i32) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    pub fn is_orthogonal_neighbor(self, other: Cell) -> bool {
        (self.x - other.x).abs() + (self.y - other.y).abs() == 1
    }
}

impl From<[i32; 2]> for Cell {
    fn from(v: [i32; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Cell> for [i32; 2] {
    fn from(c: Cell) -> Self {
        [c.x, c.y]
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub const ORTHOGONAL: [(i32, i32); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
pub const DIAGONAL: [(i32, i32); 4] = [(1, 1), (1, -1), (-1, 1), (-1, -1)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CellKind {
    Wall,
    Floor,
    Door,
    Exit,
}

impl CellKind {
    pub fn is_walkable(self) -> bool {
        !matches!(self, CellKind::Wall)
    }

    pub fn symbol(self) -> char {
        match self {
            CellKind::Wall => '#',
            CellKind::Floor => '.',
            CellKind::Door => 'D',
            CellKind::Exit => 'E',
        }
    }
}

/// The eight canonical sign directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Compass {
    N,
    NE,
    E,
    SE,
    S,
    SW,
    W,
    NW,
}

impl Compass {
    pub const ALL: [Compass; 8] = [
        Compass::N,
        Compass::NE,
        Compass::E,
        Compass::SE,
        Compass::S,
        Compass::SW,
        Compass::W,
        Compass::NW,
    ];

    pub fn unit(self) -> DVec2 {
        let d = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Compass::N => DVec2::new(0.0, 1.0),
            Compass::NE => DVec2::new(d, d),
            Compass::E => DVec2::new(1.0, 0.0),
            Compass::SE => DVec2::new(d, -d),
            Compass::S => DVec2::new(0.0, -1.0),
            Compass::SW => DVec2::new(-d, -d),
            Compass::W => DVec2::new(-1.0, 0.0),
            Compass::NW => DVec2::new(-d, d),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignDef {
    /// Legend digit the sign was drawn with.
    pub label: u8,
    pub cell: Cell,
    pub pointed_direction: Compass,
    /// Meters.
    pub visibility_range: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExitDef {
    pub id: u32,
    pub cells: Vec<Cell>,
}

/// Named rectangular region, corners inclusive.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Room {
    pub name: String,
    pub min: Cell,
    pub max: Cell,
    #[serde(default)]
    pub spawn: bool,
}

impl Room {
    pub fn contains(&self, cell: Cell) -> bool {
        cell.x >= self.min.x && cell.x <= self.max.x && cell.y >= self.min.y && cell.y <= self.max.y
    }

    pub fn cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (self.min.y..=self.max.y)
            .flat_map(move |y| (self.min.x..=self.max.x).map(move |x| Cell::new(x, y)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub cells: Vec<CellKind>,
    pub exits: Vec<ExitDef>,
    pub signs: Vec<SignDef>,
    pub rooms: Vec<Room>,
    pub spawn_cells: Vec<Cell>,
    /// Room the player starts in; defaults to the first spawn room.
    pub start_room: Option<String>,
}

#[derive(Debug, Default, Serialize, Deserialize)]
struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cell_size: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_room: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    rooms: Vec<Room>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    signs: BTreeMap<String, SignMeta>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    exits: Vec<ExitDef>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SignMeta {
    direction: Compass,
    range: f64,
}

/// Parse and validate a blueprint document.
pub fn parse_blueprint(text: &str) -> Result<GridMap, ScenarioError> {
    let mut grid_lines = Vec::new();
    let mut meta_text = String::new();
    let mut in_meta = false;
    for (i, line) in text.lines().enumerate() {
        if in_meta {
            meta_text.push_str(line);
            meta_text.push('\n');
        } else if line.trim() == "---" {
            in_meta = true;
        } else if line.trim().is_empty() && grid_lines.is_empty() {
            continue;
        } else {
            grid_lines.push((i + 1, line.trim_end_matches('\r')));
        }
    }
    while grid_lines.last().is_some_and(|(_, l)| l.trim().is_empty()) {
        grid_lines.pop();
    }
    if grid_lines.is_empty() {
        return Err(ScenarioError::Syntax {
            line: 1,
            message: "empty grid".into(),
        });
    }

    let meta: Metadata = if meta_text.trim().is_empty() {
        Metadata::default()
    } else {
        toml::from_str(&meta_text).map_err(|e| ScenarioError::BadMetadata(e.to_string()))?
    };

    let width = grid_lines[0].1.chars().count();
    let height = grid_lines.len();
    let mut cells = vec![CellKind::Wall; width * height];
    let mut spawn_cells = Vec::new();
    let mut sign_anchors: Vec<(u8, Cell)> = Vec::new();

    for (row, (line_no, line)) in grid_lines.iter().enumerate() {
        if line.chars().count() != width {
            return Err(ScenarioError::Syntax {
                line: *line_no,
                message: format!(
                    "ragged row: expected {width} cells, found {}",
                    line.chars().count()
                ),
            });
        }
        let y = (height - 1 - row) as i32;
        for (x, ch) in line.chars().enumerate() {
            let cell = Cell::new(x as i32, y);
            let kind = match ch {
                '#' => CellKind::Wall,
                '.' => CellKind::Floor,
                'D' => CellKind::Door,
                'E' => CellKind::Exit,
                'P' => {
                    spawn_cells.push(cell);
                    CellKind::Floor
                }
                '0'..='9' => {
                    sign_anchors.push((ch as u8 - b'0', cell));
                    CellKind::Floor
                }
                other => {
                    return Err(ScenarioError::Syntax {
                        line: *line_no,
                        message: format!("unknown symbol {other:?} at column {}", x + 1),
                    })
                }
            };
            cells[(y as usize) * width + x] = kind;
        }
    }
    // Scan order is top row first; keep spawn cells in (y, x) order so they
    // are independent of text layout.
    spawn_cells.sort_by_key(|c| (c.y, c.x));
    sign_anchors.sort_by_key(|(_, c)| (c.y, c.x));

    let cell_size = meta.cell_size.unwrap_or(DEFAULT_CELL_SIZE);
    if !(cell_size.is_finite() && cell_size > 0.0) {
        return Err(ScenarioError::BadMetadata(format!(
            "cell_size must be positive, got {cell_size}"
        )));
    }

    let mut map = GridMap {
        width,
        height,
        cell_size,
        cells,
        exits: Vec::new(),
        signs: Vec::new(),
        rooms: meta.rooms,
        spawn_cells,
        start_room: meta.start_room,
    };

    let mut signs = Vec::with_capacity(sign_anchors.len());
    for (label, cell) in sign_anchors {
        let sm = meta.signs.get(&label.to_string()).ok_or_else(|| {
            ScenarioError::BadMetadata(format!("sign digit {label} at {cell} has no metadata"))
        })?;
        signs.push(SignDef {
            label,
            cell,
            pointed_direction: sm.direction,
            visibility_range: sm.range,
        });
    }
    map.signs = signs;

    let exit_cells: Vec<Cell> = map
        .all_cells()
        .filter(|c| map.kind(*c) == CellKind::Exit)
        .collect();
    if exit_cells.is_empty() {
        return Err(ScenarioError::NoExit);
    }
    map.exits = if meta.exits.is_empty() {
        map.group_exit_cells(&exit_cells)
    } else {
        meta.exits
    };
    if map.spawn_cells.is_empty() {
        return Err(ScenarioError::NoSpawn);
    }
    map.validate()?;
    Ok(map)
}

/// Read and parse a blueprint file.
pub fn load_blueprint(path: &std::path::Path) -> Result<GridMap, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_blueprint(&text)
}

impl GridMap {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < self.width && (c.y as usize) < self.height
    }

    pub fn check_bounds(&self, c: Cell) -> Result<(), ScenarioError> {
        if self.in_bounds(c) {
            Ok(())
        } else {
            Err(ScenarioError::OutOfBounds {
                x: c.x,
                y: c.y,
                width: self.width,
                height: self.height,
            })
        }
    }

    /// Row-major index. Panics when out of bounds.
    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.in_bounds(c), "{c} out of bounds");
        c.y as usize * self.width + c.x as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new((index % self.width) as i32, (index / self.width) as i32)
    }

    /// Out-of-bounds cells read as walls.
    pub fn kind(&self, c: Cell) -> CellKind {
        if self.in_bounds(c) {
            self.cells[self.index(c)]
        } else {
            CellKind::Wall
        }
    }

    pub fn is_walkable(&self, c: Cell) -> bool {
        self.kind(c).is_walkable()
    }

    pub fn all_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cells.len()).map(|i| self.cell_at(i))
    }

    pub fn walkable_count(&self) -> usize {
        self.cells.iter().filter(|k| k.is_walkable()).count()
    }

    pub fn cell_center(&self, c: Cell) -> DVec2 {
        DVec2::new(
            (c.x as f64 + 0.5) * self.cell_size,
            (c.y as f64 + 0.5) * self.cell_size,
        )
    }

    pub fn cell_of(&self, pos: DVec2) -> Cell {
        Cell::new(
            (pos.x / self.cell_size).floor() as i32,
            (pos.y / self.cell_size).floor() as i32,
        )
    }

    pub fn exit_id_at(&self, c: Cell) -> Option<u32> {
        if self.kind(c) != CellKind::Exit {
            return None;
        }
        self.exits
            .iter()
            .find(|e| e.cells.contains(&c))
            .map(|e| e.id)
    }

    pub fn exit(&self, id: u32) -> Option<&ExitDef> {
        self.exits.iter().find(|e| e.id == id)
    }

    pub fn exit_ids(&self) -> BTreeSet<u32> {
        self.exits.iter().map(|e| e.id).collect()
    }

    pub fn room(&self, name: &str) -> Option<&Room> {
        self.rooms.iter().find(|r| r.name == name)
    }

    pub fn room_of(&self, c: Cell) -> Option<&Room> {
        self.rooms.iter().find(|r| r.contains(c))
    }

    /// The room the player starts in.
    pub fn start_room(&self) -> Option<&Room> {
        match &self.start_room {
            Some(name) => self.room(name),
            None => self.rooms.iter().find(|r| r.spawn),
        }
    }

    /// Player start cell: first spawn cell inside the start room, else the
    /// first spawn cell overall.
    pub fn start_cell(&self) -> Cell {
        self.start_room()
            .and_then(|room| self.spawn_cells.iter().copied().find(|c| room.contains(*c)))
            .unwrap_or(self.spawn_cells[0])
    }

    pub fn orthogonal_neighbors(&self, c: Cell) -> impl Iterator<Item = Cell> + '_ {
        ORTHOGONAL
            .iter()
            .map(move |&(dx, dy)| c.offset(dx, dy))
            .filter(move |n| self.is_walkable(*n))
    }

    /// Walkable 8-neighbourhood with step length in cells (1 or sqrt 2).
    /// A diagonal is allowed only if both orthogonal cells it passes are
    /// walkable. `blocked` marks extra impassable cells (by index).
    pub fn walkable_neighbors<'a>(
        &'a self,
        c: Cell,
        blocked: Option<&'a [bool]>,
    ) -> impl Iterator<Item = (Cell, f64)> + 'a {
        let open = move |n: Cell| {
            self.is_walkable(n) && blocked.is_none_or(|b| !b[self.index(n)])
        };
        let orth = ORTHOGONAL
            .iter()
            .map(move |&(dx, dy)| (c.offset(dx, dy), 1.0));
        let diag = DIAGONAL.iter().filter_map(move |&(dx, dy)| {
            (open(c.offset(dx, 0)) && open(c.offset(0, dy)))
                .then_some((c.offset(dx, dy), std::f64::consts::SQRT_2))
        });
        orth.chain(diag).filter(move |(n, _)| open(*n))
    }

    fn group_exit_cells(&self, exit_cells: &[Cell]) -> Vec<ExitDef> {
        let pending: BTreeSet<Cell> = exit_cells.iter().copied().collect();
        let mut seen = BTreeSet::new();
        let mut exits = Vec::new();
        // Deterministic: components discovered in (y, x) order.
        let mut ordered: Vec<Cell> = pending.iter().copied().collect();
        ordered.sort_by_key(|c| (c.y, c.x));
        for start in ordered {
            if !seen.insert(start) {
                continue;
            }
            let mut group = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(c) = queue.pop_front() {
                for (dx, dy) in ORTHOGONAL {
                    let n = c.offset(dx, dy);
                    if pending.contains(&n) && seen.insert(n) {
                        group.push(n);
                        queue.push_back(n);
                    }
                }
            }
            group.sort_by_key(|c| (c.y, c.x));
            exits.push(ExitDef {
                id: exits.len() as u32 + 1,
                cells: group,
            });
        }
        exits
    }

    fn validate(&self) -> Result<(), ScenarioError> {
        if self.width * self.height != self.cells.len() {
            return Err(ScenarioError::InvalidGeometry("cell count mismatch".into()));
        }
        let mut ids = BTreeSet::new();
        let mut covered = BTreeSet::new();
        for exit in &self.exits {
            if !ids.insert(exit.id) {
                return Err(ScenarioError::BadMetadata(format!(
                    "duplicate exit id {}",
                    exit.id
                )));
            }
            if exit.cells.is_empty() {
                return Err(ScenarioError::BadMetadata(format!(
                    "exit {} has no cells",
                    exit.id
                )));
            }
            for &c in &exit.cells {
                if self.kind(c) != CellKind::Exit {
                    return Err(ScenarioError::BadMetadata(format!(
                        "exit {} lists {c}, which is not an E cell",
                        exit.id
                    )));
                }
                if !covered.insert(c) {
                    return Err(ScenarioError::BadMetadata(format!(
                        "{c} belongs to more than one exit"
                    )));
                }
                let on_boundary = c.x == 0
                    || c.y == 0
                    || c.x as usize == self.width - 1
                    || c.y as usize == self.height - 1;
                let by_wall = ORTHOGONAL
                    .iter()
                    .any(|&(dx, dy)| self.kind(c.offset(dx, dy)) == CellKind::Wall);
                if !(on_boundary || by_wall) {
                    return Err(ScenarioError::InvalidGeometry(format!(
                        "exit cell {c} is neither on the boundary nor in a wall gap"
                    )));
                }
            }
            if !cells_connected(&exit.cells) {
                return Err(ScenarioError::BadMetadata(format!(
                    "exit {} cells are not contiguous",
                    exit.id
                )));
            }
        }
        let all_exit_cells = self
            .all_cells()
            .filter(|c| self.kind(*c) == CellKind::Exit)
            .count();
        if all_exit_cells != covered.len() {
            return Err(ScenarioError::BadMetadata(
                "some E cells are not assigned to an exit".into(),
            ));
        }

        for &c in &self.spawn_cells {
            if !self.is_walkable(c) {
                return Err(ScenarioError::InvalidGeometry(format!(
                    "spawn cell {c} is not walkable"
                )));
            }
        }
        for s in &self.signs {
            if !self.is_walkable(s.cell) {
                return Err(ScenarioError::InvalidGeometry(format!(
                    "sign at {} is not walkable",
                    s.cell
                )));
            }
            if !(s.visibility_range.is_finite() && s.visibility_range > 0.0) {
                return Err(ScenarioError::BadMetadata(format!(
                    "sign {} visibility range must be positive",
                    s.label
                )));
            }
        }
        let mut names = BTreeSet::new();
        for r in &self.rooms {
            if !names.insert(r.name.as_str()) {
                return Err(ScenarioError::BadMetadata(format!(
                    "duplicate room name {:?}",
                    r.name
                )));
            }
            if !self.in_bounds(r.min) || !self.in_bounds(r.max) || r.min.x > r.max.x || r.min.y > r.max.y
            {
                return Err(ScenarioError::BadMetadata(format!(
                    "room {:?} rectangle is invalid or out of bounds",
                    r.name
                )));
            }
        }
        if let Some(name) = &self.start_room {
            if self.room(name).is_none() {
                return Err(ScenarioError::BadMetadata(format!(
                    "start_room {name:?} is not a declared room"
                )));
            }
        }
        Ok(())
    }

    /// Render back into blueprint text. `parse_blueprint(map.to_blueprint())`
    /// reproduces `map`.
    pub fn to_blueprint(&self) -> String {
        let mut out = String::new();
        for y in (0..self.height as i32).rev() {
            for x in 0..self.width as i32 {
                let c = Cell::new(x, y);
                let ch = if let Some(s) = self.signs.iter().find(|s| s.cell == c) {
                    (b'0' + s.label) as char
                } else if self.spawn_cells.contains(&c) {
                    'P'
                } else {
                    self.kind(c).symbol()
                };
                out.push(ch);
            }
            out.push('\n');
        }
        let mut signs = BTreeMap::new();
        for s in &self.signs {
            signs.insert(
                s.label.to_string(),
                SignMeta {
                    direction: s.pointed_direction,
                    range: s.visibility_range,
                },
            );
        }
        let meta = Metadata {
            cell_size: Some(self.cell_size),
            start_room: self.start_room.clone(),
            rooms: self.rooms.clone(),
            signs,
            exits: self.exits.clone(),
        };
        out.push_str("---\n");
        out.push_str(&toml::to_string(&meta).expect("metadata serializes"));
        out
    }

    /// Cells touched by the segment between two cell centres, with the
    /// fraction of the segment length lying inside each cell.
    ///
    /// Supercover traversal: when the segment passes exactly through a
    /// lattice corner both side cells are reported (with zero length), so a
    /// ray can never slip diagonally between two walls.
    pub fn supercover(from: Cell, to: Cell) -> Vec<(Cell, f64)> {
        let dx = (to.x - from.x) as i64;
        let dy = (to.y - from.y) as i64;
        let (nx, ny) = (dx.abs(), dy.abs());
        let (sx, sy) = (dx.signum() as i32, dy.signum() as i32);
        let mut out = Vec::with_capacity((nx + ny + 1) as usize);
        let (mut i, mut j) = (0i64, 0i64);
        let mut cur = from;
        let mut t_prev = 0.0;
        while i < nx || j < ny {
            // x-crossing i at t = (2i+1)/(2nx); y-crossing j at (2j+1)/(2ny).
            let order = if i >= nx {
                std::cmp::Ordering::Greater
            } else if j >= ny {
                std::cmp::Ordering::Less
            } else {
                ((2 * i + 1) * ny).cmp(&((2 * j + 1) * nx))
            };
            let t = match order {
                std::cmp::Ordering::Greater => (2 * j + 1) as f64 / (2 * ny) as f64,
                _ => (2 * i + 1) as f64 / (2 * nx) as f64,
            };
            out.push((cur, t - t_prev));
            match order {
                std::cmp::Ordering::Less => {
                    cur.x += sx;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    cur.y += sy;
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push((Cell::new(cur.x + sx, cur.y), 0.0));
                    out.push((Cell::new(cur.x, cur.y + sy), 0.0));
                    cur = cur.offset(sx, sy);
                    i += 1;
                    j += 1;
                }
            }
            t_prev = t;
        }
        out.push((cur, 1.0 - t_prev));
        out
    }

    /// Smoke optical depth along the ray between two cell centres, or `None`
    /// when a wall occludes it.
    pub fn optical_depth(
        &self,
        from: Cell,
        to: Cell,
        smoke: &HazardField,
        opacity_coeff: f64,
    ) -> Result<Option<f64>, ScenarioError> {
        self.check_bounds(from)?;
        self.check_bounds(to)?;
        let dx = (to.x - from.x) as f64;
        let dy = (to.y - from.y) as f64;
        let length = (dx * dx + dy * dy).sqrt() * self.cell_size;
        let mut depth = 0.0;
        for (c, frac) in Self::supercover(from, to) {
            if !self.is_walkable(c) {
                return Ok(None);
            }
            depth += smoke.smoke_at(self, c) * frac * length * opacity_coeff;
        }
        Ok(Some(depth))
    }

    /// True iff no wall lies on the ray and the smoke optical depth is below 1.
    pub fn line_of_sight(
        &self,
        from: Cell,
        to: Cell,
        smoke: &HazardField,
        opacity_coeff: f64,
    ) -> Result<bool, ScenarioError> {
        Ok(self
            .optical_depth(from, to, smoke, opacity_coeff)?
            .is_some_and(|d| d < 1.0))
    }

    /// Copy of the map with every door on the start room's perimeter walled
    /// off. Used to confine a player to the start room.
    pub fn with_start_room_sealed(&self) -> GridMap {
        let mut sealed = self.clone();
        if let Some(room) = self.start_room() {
            let ring = Room {
                name: String::new(),
                min: room.min.offset(-1, -1),
                max: room.max.offset(1, 1),
                spawn: false,
            };
            for c in ring.cells() {
                if self.in_bounds(c) && self.kind(c) == CellKind::Door {
                    let i = self.index(c);
                    sealed.cells[i] = CellKind::Wall;
                }
            }
        }
        sealed
    }
}

fn cells_connected(cells: &[Cell]) -> bool {
    let set: BTreeSet<Cell> = cells.iter().copied().collect();
    let mut seen = BTreeSet::from([cells[0]]);
    let mut queue = VecDeque::from([cells[0]]);
    while let Some(c) = queue.pop_front() {
        for (dx, dy) in ORTHOGONAL.iter().chain(DIAGONAL.iter()) {
            let n = c.offset(*dx, *dy);
            if set.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len() == set.len()
}
