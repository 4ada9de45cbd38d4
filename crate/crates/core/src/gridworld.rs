//! Seedable 2D grid environment.
//!
//! The world is the only holder of ground truth: static obstacles, dynamic
//! obstacle sites that toggle in Hard mode, the three object (goal) sites and
//! the agents' positions. Agents interact with it through [`GridWorld::observe`]
//! (a Chebyshev window) and [`GridWorld::apply_action`].

mod layout;

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layout::Layout;

/// Grid coordinate. `x` is the column, `y` the row (row 0 is the top).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    pub fn chebyshev(self, other: Cell) -> usize {
        self.x.abs_diff(other.x).max(self.y.abs_diff(other.y))
    }

    pub fn manhattan(self, other: Cell) -> usize {
        self.x.abs_diff(other.x) + self.y.abs_diff(other.y)
    }

    /// Neighbor reached by `action`, or `None` when it would leave the grid.
    pub fn step(self, action: Action, width: usize, height: usize) -> Option<Cell> {
        let (dx, dy) = action.delta();
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        if x < 0 || y < 0 || x >= width as i64 || y >= height as i64 {
            None
        } else {
            Some(Cell::new(x as usize, y as usize))
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Belief category of a cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MaskLabel {
    Empty,
    Obstacle,
    Object,
    Agent,
    Unknown,
}

impl MaskLabel {
    pub const ALL: [MaskLabel; 5] = [
        MaskLabel::Empty,
        MaskLabel::Obstacle,
        MaskLabel::Object,
        MaskLabel::Agent,
        MaskLabel::Unknown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_known(self) -> bool {
        self != MaskLabel::Unknown
    }

    /// Known and passable: empty ground, an object site, or a cell some agent stands on.
    pub fn is_traversable(self) -> bool {
        matches!(
            self,
            MaskLabel::Empty | MaskLabel::Agent | MaskLabel::Object
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MaskLabel::Empty => "empty",
            MaskLabel::Obstacle => "obstacle",
            MaskLabel::Object => "object",
            MaskLabel::Agent => "agent",
            MaskLabel::Unknown => "unknown",
        }
    }
}

impl FromStr for MaskLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MaskLabel::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Domain(format!("unknown mask label `{s}`")))
    }
}

/// The five discrete moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Left,
    Right,
    Up,
    Down,
    Stay,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::Left,
        Action::Right,
        Action::Up,
        Action::Down,
        Action::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Action::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i64, i64) {
        match self {
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Stay => (0, 0),
        }
    }
}

/// Result of [`GridWorld::apply_action`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MoveOutcome {
    Moved(Cell),
    DeliberateStay,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

/// Goal assignment: one shared goal (G3) or two goals (G1 for all but the
/// last agent, G2 for the last).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GoalScenario {
    #[serde(rename = "1")]
    SharedGoal,
    #[serde(rename = "2")]
    SplitGoals,
}

impl GoalScenario {
    /// Object index (0-based: G1 = 0) pursued by each of `n_agents` agents.
    pub fn goal_indices(self, n_agents: usize) -> Result<Vec<usize>> {
        match self {
            GoalScenario::SharedGoal => Ok(vec![2; n_agents]),
            GoalScenario::SplitGoals => {
                if n_agents < 3 {
                    return Err(Error::config(
                        "scenario 2 needs at least 3 agents (two on G1, the rest on G2)",
                    ));
                }
                let mut goals = vec![0; n_agents];
                goals[n_agents - 1] = 1;
                Ok(goals)
            }
        }
    }
}

/// Everything needed to instantiate a world besides the seed.
#[derive(Debug, Clone)]
pub struct WorldConfig {
    pub layout: Layout,
    pub difficulty: Difficulty,
    pub scenario: GoalScenario,
    pub n_agents: usize,
    pub p_toggle: f64,
}

/// Labelled cells inside an agent's observation window.
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub center: Cell,
    pub records: Vec<(Cell, MaskLabel)>,
}

#[derive(Debug, Clone)]
pub struct GridWorld {
    width: usize,
    height: usize,
    static_obstacles: Vec<bool>,
    dynamic_obstacles: BTreeMap<Cell, bool>,
    objects: Vec<Cell>,
    starts: Vec<Cell>,
    positions: Vec<Cell>,
    goals: Vec<Cell>,
    difficulty: Difficulty,
    p_toggle: f64,
    step_counter: u64,
    rng: ChaCha8Rng,
}

impl GridWorld {
    pub fn build(config: &WorldConfig, seed: u64) -> Result<GridWorld> {
        let layout = &config.layout;
        layout.validate()?;
        if !(0.0..=1.0).contains(&config.p_toggle) {
            return Err(Error::config(format!(
                "p_toggle must lie in [0, 1], got {}",
                config.p_toggle
            )));
        }
        if config.n_agents == 0 {
            return Err(Error::config("at least one agent is required"));
        }
        if config.n_agents > layout.starts.len() {
            return Err(Error::config(format!(
                "layout has {} agent starts, {} agents requested",
                layout.starts.len(),
                config.n_agents
            )));
        }
        let goals = config
            .scenario
            .goal_indices(config.n_agents)?
            .into_iter()
            .map(|g| layout.objects[g])
            .collect::<Vec<_>>();

        let mut static_obstacles = vec![false; layout.width * layout.height];
        for c in &layout.static_obstacles {
            static_obstacles[c.y * layout.width + c.x] = true;
        }
        let starts = layout.starts[..config.n_agents].to_vec();
        Ok(GridWorld {
            width: layout.width,
            height: layout.height,
            static_obstacles,
            dynamic_obstacles: layout.dynamic_sites.iter().map(|&c| (c, false)).collect(),
            objects: layout.objects.clone(),
            positions: starts.clone(),
            starts,
            goals,
            difficulty: config.difficulty,
            p_toggle: config.p_toggle,
            step_counter: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_agents(&self) -> usize {
        self.positions.len()
    }

    pub fn step_counter(&self) -> u64 {
        self.step_counter
    }

    pub fn difficulty(&self) -> Difficulty {
        self.difficulty
    }

    /// Object sites in layout order (G1, G2, G3).
    pub fn objects(&self) -> &[Cell] {
        &self.objects
    }

    pub fn position(&self, agent: usize) -> Cell {
        self.positions[agent]
    }

    pub fn positions(&self) -> &[Cell] {
        &self.positions
    }

    pub fn goal(&self, agent: usize) -> Cell {
        self.goals[agent]
    }

    pub fn at_goal(&self, agent: usize) -> bool {
        self.positions[agent] == self.goals[agent]
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x < self.width && c.y < self.height
    }

    pub fn is_static_obstacle(&self, c: Cell) -> bool {
        self.static_obstacles[c.y * self.width + c.x]
    }

    /// Static obstacle or an active dynamic one.
    pub fn is_obstacle(&self, c: Cell) -> bool {
        self.is_static_obstacle(c) || self.dynamic_obstacles.get(&c).copied().unwrap_or(false)
    }

    pub fn is_object(&self, c: Cell) -> bool {
        self.objects.contains(&c)
    }

    pub fn is_occupied(&self, c: Cell) -> bool {
        self.positions.contains(&c)
    }

    /// Dynamic obstacle sites with their current activity flag, in cell order.
    pub fn dynamic_obstacles(&self) -> impl Iterator<Item = (Cell, bool)> + '_ {
        self.dynamic_obstacles.iter().map(|(&c, &a)| (c, a))
    }

    /// All obstacle cells currently active, in cell order.
    pub fn active_obstacles(&self) -> Vec<Cell> {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| Cell::new(x, y)))
            .filter(|&c| self.is_obstacle(c))
            .collect()
    }

    /// Ground-truth label of a cell. Agents take precedence over objects,
    /// objects over obstacles.
    pub fn label_at(&self, c: Cell) -> MaskLabel {
        if self.is_occupied(c) {
            MaskLabel::Agent
        } else if self.is_object(c) {
            MaskLabel::Object
        } else if self.is_obstacle(c) {
            MaskLabel::Obstacle
        } else {
            MaskLabel::Empty
        }
    }

    /// Advance the obstacle process by one tick.
    ///
    /// Hard mode draws one uniform per dynamic site (in cell order) whether or
    /// not the toggle is applied, so the random stream does not depend on
    /// agent positions.
    pub fn step_dynamics(&mut self) {
        if self.difficulty == Difficulty::Hard {
            let sites: Vec<Cell> = self.dynamic_obstacles.keys().copied().collect();
            for c in sites {
                let draw: f64 = self.rng.gen();
                if draw >= self.p_toggle {
                    continue;
                }
                let active = self.dynamic_obstacles[&c];
                if !active && (self.is_occupied(c) || self.is_object(c)) {
                    continue;
                }
                self.dynamic_obstacles.insert(c, !active);
            }
        }
        self.step_counter += 1;
    }

    pub fn apply_action(&mut self, agent: usize, action: Action) -> MoveOutcome {
        if self.at_goal(agent) || action == Action::Stay {
            return MoveOutcome::DeliberateStay;
        }
        match self.positions[agent].step(action, self.width, self.height) {
            Some(next) if !self.is_obstacle(next) => {
                self.positions[agent] = next;
                MoveOutcome::Moved(next)
            }
            _ => MoveOutcome::Blocked,
        }
    }

    pub fn observe(&self, agent: usize, radius: usize) -> Observation {
        let center = self.positions[agent];
        let records = window(center, radius, self.width, self.height)
            .map(|c| (c, self.label_at(c)))
            .collect();
        Observation { center, records }
    }

    /// Other agents within Chebyshev distance `radius`, in index order.
    pub fn contacts_in_range(&self, agent: usize, radius: usize) -> Vec<usize> {
        let me = self.positions[agent];
        self.positions
            .iter()
            .enumerate()
            .filter(|&(j, &p)| j != agent && me.chebyshev(p) <= radius)
            .map(|(j, _)| j)
            .collect()
    }

    /// Hop count of the shortest 4-connected obstacle-free path on the
    /// current ground-truth map.
    pub fn true_shortest_path_len(&self, from: Cell, to: Cell) -> Option<usize> {
        shortest_path(self.width, self.height, from, to, |c| !self.is_obstacle(c))
            .map(|p| p.len() - 1)
    }

    /// Episode boundary: agents return to their starts, dynamic obstacles
    /// deactivate, the tick counter restarts. The RNG stream continues.
    pub fn reset_episode(&mut self) {
        self.positions.clone_from(&self.starts);
        for active in self.dynamic_obstacles.values_mut() {
            *active = false;
        }
        self.step_counter = 0;
    }

    /// Place an agent directly (scripted fixtures).
    pub fn set_position(&mut self, agent: usize, cell: Cell) -> Result<()> {
        if !self.in_bounds(cell) || self.is_obstacle(cell) {
            return Err(Error::config(format!(
                "cannot place agent {agent} on {cell}"
            )));
        }
        self.positions[agent] = cell;
        Ok(())
    }

    /// Force a dynamic site's flag (scripted fixtures). Activation is refused
    /// on occupied or object cells.
    pub fn set_dynamic_active(&mut self, cell: Cell, active: bool) -> Result<()> {
        if !self.dynamic_obstacles.contains_key(&cell) {
            return Err(Error::config(format!(
                "{cell} is not a dynamic obstacle site"
            )));
        }
        if active && (self.is_occupied(cell) || self.is_object(cell)) {
            return Err(Error::config(format!("{cell} is occupied")));
        }
        self.dynamic_obstacles.insert(cell, active);
        Ok(())
    }

    pub fn set_p_toggle(&mut self, p: f64) {
        self.p_toggle = p;
    }
}

/// In-bounds cells within Chebyshev distance `radius` of `center`, row-major.
pub fn window(
    center: Cell,
    radius: usize,
    width: usize,
    height: usize,
) -> impl Iterator<Item = Cell> {
    let x0 = center.x.saturating_sub(radius);
    let x1 = (center.x + radius).min(width - 1);
    let y0 = center.y.saturating_sub(radius);
    let y1 = (center.y + radius).min(height - 1);
    (y0..=y1).flat_map(move |y| (x0..=x1).map(move |x| Cell::new(x, y)))
}

/// Breadth-first search over 4-connected cells accepted by `passable`.
///
/// Returns the path including both endpoints. Both endpoints must be
/// passable; neighbors expand in action order (left, right, up, down).
pub fn shortest_path(
    width: usize,
    height: usize,
    from: Cell,
    to: Cell,
    passable: impl Fn(Cell) -> bool,
) -> Option<Vec<Cell>> {
    if !passable(from) || !passable(to) {
        return None;
    }
    let idx = |c: Cell| c.y * width + c.x;
    let mut parent: Vec<Option<Cell>> = vec![None; width * height];
    let mut seen = vec![false; width * height];
    let mut queue = VecDeque::new();
    seen[idx(from)] = true;
    queue.push_back(from);
    while let Some(c) = queue.pop_front() {
        if c == to {
            let mut path = vec![c];
            let mut cur = c;
            while let Some(p) = parent[idx(cur)] {
                path.push(p);
                cur = p;
            }
            path.reverse();
            return Some(path);
        }
        for a in &Action::ALL[..4] {
            if let Some(n) = c.step(*a, width, height) {
                if !seen[idx(n)] && passable(n) {
                    seen[idx(n)] = true;
                    parent[idx(n)] = Some(c);
                    queue.push_back(n);
                }
            }
        }
    }
    None
}
