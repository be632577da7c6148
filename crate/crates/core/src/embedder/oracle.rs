//! Exhaustive optimum for tiny instances, used to bound the heuristics.
//!
//! Branches on the first undecided cell in row-major order: either some
//! unplaced request takes that cell as its top-left corner, or the cell is
//! left empty for good. Every packing is reached exactly once this way.

use super::{priority_objective, EmbedError, QueueEntry};
use crate::grid::Rect;
use crate::requests::{Shape, VrrId};

pub const ORACLE_MAX_CELLS: usize = 36;
pub const ORACLE_MAX_REQUESTS: usize = 6;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleSolution {
    pub placements: Vec<(VrrId, Rect)>,
    /// Embedded area per priority level, highest first.
    pub objective: Vec<usize>,
}

struct Item {
    shapes: Vec<Shape>,
    area: usize,
    level: usize,
    /// Index of the previous identical item, placed first to break symmetry.
    twin_of: Option<usize>,
}

struct Search {
    f: usize,
    t: usize,
    items: Vec<Item>,
    /// 0 undecided, 1 occupied, 2 left empty
    cells: Vec<u8>,
    placed: Vec<Option<Rect>>,
    current: Vec<usize>,
    best: Vec<usize>,
    best_placed: Vec<Option<Rect>>,
    ceiling: Vec<usize>,
}

impl Search {
    fn fits(&self, rect: &Rect) -> bool {
        rect.f_end() <= self.f && rect.t_end() <= self.t && rect.cells().all(|(f, t)| self.cells[t * self.f + f] == 0)
    }

    fn fill(&mut self, rect: &Rect, value: u8) {
        for (f, t) in rect.cells() {
            self.cells[t * self.f + f] = value;
        }
    }

    fn upper_bound(&self) -> Vec<usize> {
        let room = self.cells.iter().filter(|&&c| c == 0).count();
        let mut bound = self.current.clone();
        for (item, placed) in self.items.iter().zip(&self.placed) {
            if placed.is_none() && item.area <= room {
                bound[item.level] += item.area;
            }
        }
        bound
    }

    fn run(&mut self, from: usize) {
        if self.best == self.ceiling {
            return;
        }
        if self.upper_bound() <= self.best {
            return;
        }
        let Some(cell) = (from..self.cells.len()).find(|&i| self.cells[i] == 0) else {
            if self.current > self.best {
                self.best = self.current.clone();
                self.best_placed = self.placed.clone();
            }
            return;
        };
        let (f0, t0) = (cell % self.f, cell / self.f);

        for i in 0..self.items.len() {
            if self.placed[i].is_some() {
                continue;
            }
            if self.items[i].twin_of.is_some_and(|j| self.placed[j].is_none()) {
                continue;
            }
            for s in 0..self.items[i].shapes.len() {
                let shape = self.items[i].shapes[s];
                let rect = Rect::new(f0, t0, shape.f, shape.t);
                if !self.fits(&rect) {
                    continue;
                }
                self.fill(&rect, 1);
                self.placed[i] = Some(rect);
                self.current[self.items[i].level] += self.items[i].area;
                self.run(cell + 1);
                self.current[self.items[i].level] -= self.items[i].area;
                self.placed[i] = None;
                self.fill(&rect, 0);
            }
        }

        self.cells[cell] = 2;
        self.run(cell + 1);
        self.cells[cell] = 0;
    }
}

/// Best lexicographic (area per priority level) packing of `entries` on an
/// empty `dims` substrate.
pub fn embed_oracle(entries: &[QueueEntry], dims: (usize, usize)) -> Result<OracleSolution, EmbedError> {
    let (f, t) = dims;
    if f * t > ORACLE_MAX_CELLS || entries.len() > ORACLE_MAX_REQUESTS {
        return Err(EmbedError::TooLarge {
            cells: f * t,
            requests: entries.len(),
            max_cells: ORACLE_MAX_CELLS,
            max_requests: ORACLE_MAX_REQUESTS,
        });
    }

    let mut level_values: Vec<u32> = entries.iter().map(|e| e.priority).collect();
    level_values.sort_unstable_by(|a, b| b.cmp(a));
    level_values.dedup();

    let mut items: Vec<Item> = Vec::with_capacity(entries.len());
    for (i, e) in entries.iter().enumerate() {
        let mut shapes = e.vrr.shapes.clone();
        shapes.dedup();
        let level = level_values.iter().position(|&l| l == e.priority).unwrap();
        let twin_of = (0..i)
            .rev()
            .find(|&j| entries[j].priority == e.priority && entries[j].vrr.shapes == e.vrr.shapes);
        items.push(Item {
            area: e.vrr.area(),
            shapes,
            level,
            twin_of,
        });
    }

    let mut ceiling = vec![0; level_values.len()];
    for item in &items {
        ceiling[item.level] += item.area;
    }

    let mut search = Search {
        f,
        t,
        cells: vec![0; f * t],
        placed: vec![None; items.len()],
        current: vec![0; level_values.len()],
        best: vec![0; level_values.len()],
        best_placed: vec![None; items.len()],
        ceiling,
        items,
    };
    search.run(0);

    let placements: Vec<(VrrId, Rect)> = entries
        .iter()
        .zip(&search.best_placed)
        .filter_map(|(e, r)| r.map(|r| (e.vrr.id, r)))
        .collect();
    let objective = priority_objective(entries, |id| placements.iter().any(|(p, _)| *p == id));
    debug_assert_eq!(objective, search.best);
    Ok(OracleSolution { placements, objective })
}
