//! Plain-text layout files.
//!
//! ```text
//! 4 3
//! 1.#O
//! .~.O
//! 2..O
//! ```
//!
//! The header is `width height`; each following row has one character per
//! cell: `.` empty, `#` static obstacle, `~` dynamic obstacle site, `O`
//! object, `1`..`9` agent start. Objects are numbered G1, G2, G3 in
//! row-major order.

use std::collections::BTreeSet;
use std::path::Path;

use super::Cell;
use crate::error::{Error, Result};

const BASE: &str = include_str!("../../layouts/base.txt");
const LARGE: &str = include_str!("../../layouts/large.txt");

/// Number of object sites every layout must carry.
pub const OBJECT_COUNT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub width: usize,
    pub height: usize,
    pub static_obstacles: Vec<Cell>,
    pub dynamic_sites: Vec<Cell>,
    /// G1, G2, G3.
    pub objects: Vec<Cell>,
    /// Agent starts, indexed by agent (digit 1 first).
    pub starts: Vec<Cell>,
}

impl Layout {
    /// The shipped 10x10 map.
    pub fn base() -> Layout {
        Layout::parse(BASE).expect("built-in base layout is valid")
    }

    /// The shipped 20x20 map.
    pub fn large() -> Layout {
        Layout::parse(LARGE).expect("built-in large layout is valid")
    }

    /// An obstacle-free map with no objects or starts; fixtures fill it in.
    pub fn empty(width: usize, height: usize) -> Layout {
        Layout {
            width,
            height,
            static_obstacles: Vec::new(),
            dynamic_sites: Vec::new(),
            objects: Vec::new(),
            starts: Vec::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Layout> {
        let text = std::fs::read_to_string(path)?;
        Layout::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Layout> {
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "empty layout".into(),
        })?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse {
                line: hline + 1,
                msg: format!("bad header: {e}"),
            })?;
        let [width, height] = dims[..] else {
            return Err(Error::Parse {
                line: hline + 1,
                msg: "header must be `width height`".into(),
            });
        };
        if width == 0 || height == 0 {
            return Err(Error::Parse {
                line: hline + 1,
                msg: "dimensions must be positive".into(),
            });
        }

        let mut layout = Layout::empty(width, height);
        let mut starts: Vec<(u32, Cell)> = Vec::new();
        let mut rows = 0;
        for (y, (lno, row)) in lines.enumerate() {
            let row = row.trim_end();
            if y >= height {
                return Err(Error::Parse {
                    line: lno + 1,
                    msg: format!("more than {height} rows"),
                });
            }
            if row.chars().count() != width {
                return Err(Error::Parse {
                    line: lno + 1,
                    msg: format!("row has {} cells, expected {width}", row.chars().count()),
                });
            }
            for (x, ch) in row.chars().enumerate() {
                let c = Cell::new(x, y);
                match ch {
                    '.' => {}
                    '#' => layout.static_obstacles.push(c),
                    '~' => layout.dynamic_sites.push(c),
                    'O' => layout.objects.push(c),
                    '1'..='9' => {
                        let d = ch.to_digit(10).unwrap_or_default();
                        if starts.iter().any(|(k, _)| *k == d) {
                            return Err(Error::Parse {
                                line: lno + 1,
                                msg: format!("agent {d} placed twice"),
                            });
                        }
                        starts.push((d, c));
                    }
                    other => {
                        return Err(Error::Parse {
                            line: lno + 1,
                            msg: format!("unexpected character `{other}`"),
                        })
                    }
                }
            }
            rows += 1;
        }
        if rows != height {
            return Err(Error::Parse {
                line: rows + 2,
                msg: format!("expected {height} rows, found {rows}"),
            });
        }
        starts.sort_by_key(|(d, _)| *d);
        for (i, (d, _)) in starts.iter().enumerate() {
            if *d as usize != i + 1 {
                return Err(Error::config(format!(
                    "agent starts must be numbered 1..n, missing {}",
                    i + 1
                )));
            }
        }
        layout.starts = starts.into_iter().map(|(_, c)| c).collect();
        layout.validate()?;
        Ok(layout)
    }

    /// Structural checks shared by parsed and hand-built layouts.
    pub fn validate(&self) -> Result<()> {
        let in_bounds = |c: &Cell| c.x < self.width && c.y < self.height;
        let all = self
            .static_obstacles
            .iter()
            .chain(&self.dynamic_sites)
            .chain(&self.objects)
            .chain(&self.starts);
        if let Some(c) = all.clone().find(|c| !in_bounds(c)) {
            return Err(Error::config(format!(
                "{c} lies outside the {}x{} grid",
                self.width, self.height
            )));
        }
        if self.objects.len() != OBJECT_COUNT {
            return Err(Error::config(format!(
                "layout must contain exactly {OBJECT_COUNT} objects, found {}",
                self.objects.len()
            )));
        }
        let blocked: BTreeSet<Cell> = self
            .static_obstacles
            .iter()
            .chain(&self.dynamic_sites)
            .copied()
            .collect();
        if let Some(c) = self.starts.iter().find(|c| blocked.contains(c)) {
            return Err(Error::config(format!("agent start {c} is on an obstacle")));
        }
        if let Some(c) = self.objects.iter().find(|c| blocked.contains(c)) {
            return Err(Error::config(format!("object {c} is on an obstacle")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_layouts_parse() {
        let base = Layout::base();
        assert_eq!((base.width, base.height), (10, 10));
        assert_eq!(base.starts.len(), 3);
        assert_eq!(base.objects.len(), 3);
        let large = Layout::large();
        assert_eq!((large.width, large.height), (20, 20));
        assert_eq!(large.starts.len(), 3);
    }

    #[test]
    fn small_layout_roundtrip() {
        let l = Layout::parse("4 3\n1.#O\n.~.O\n2..O\n").unwrap();
        assert_eq!(l.static_obstacles, vec![Cell::new(2, 0)]);
        assert_eq!(l.dynamic_sites, vec![Cell::new(1, 1)]);
        assert_eq!(
            l.objects,
            vec![Cell::new(3, 0), Cell::new(3, 1), Cell::new(3, 2)]
        );
        assert_eq!(l.starts, vec![Cell::new(0, 0), Cell::new(0, 2)]);
    }

    #[test]
    fn malformed_layouts_are_rejected() {
        assert!(Layout::parse("").is_err());
        assert!(Layout::parse("3 1\n1OO\n").is_err()); // two objects
        assert!(Layout::parse("4 1\n1OOO\n2").is_err()); // too many rows
        assert!(Layout::parse("4 2\n1OOO\n").is_err()); // too few rows
        assert!(Layout::parse("4 1\n1OOX\n").is_err());
        assert!(Layout::parse("5 1\n1OOO1\n").is_err());
        assert!(Layout::parse("4 1\n2OOO\n").is_err()); // digits must start at 1
    }
}
