//! The frequency x time resource substrate.
//!
//! Columns are frequency (`f`), rows are time (`t`), origin top-left. A
//! [`Substrate`] keeps a per-cell owner map next to the registry of placed
//! rectangles so the two can be audited against each other.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Axis-aligned block of PRBs: origin `(f0, t0)`, width `f`, height `t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rect {
    pub f0: usize,
    pub t0: usize,
    pub f: usize,
    pub t: usize,
}

impl Rect {
    pub const fn new(f0: usize, t0: usize, f: usize, t: usize) -> Self {
        Rect { f0, t0, f, t }
    }

    #[inline]
    pub fn area(&self) -> usize {
        self.f * self.t
    }

    #[inline]
    pub fn f_end(&self) -> usize {
        self.f0 + self.f
    }

    #[inline]
    pub fn t_end(&self) -> usize {
        self.t0 + self.t
    }

    pub fn contains(&self, other: &Rect) -> bool {
        other.f0 >= self.f0 && other.t0 >= self.t0 && other.f_end() <= self.f_end() && other.t_end() <= self.t_end()
    }

    pub fn intersects(&self, other: &Rect) -> bool {
        self.f0 < other.f_end() && other.f0 < self.f_end() && self.t0 < other.t_end() && other.t0 < self.t_end()
    }

    /// Cells covered, row-major, as `(f, t)` pairs.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.t0..self.t_end()).flat_map(move |t| (self.f0..self.f_end()).map(move |f| (f, t)))
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fmt, "{}:{}:{}:{}", self.f0, self.t0, self.f, self.t)
    }
}

/// Registry key of a placement. The hypervisor uses the VRR id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlacementId(pub u64);

impl fmt::Display for PlacementId {
    fn fmt(&self, fmt: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(fmt, "#{}", self.0)
    }
}

/// How the substrate edge is treated by the Embedding Density Index.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdiBorder {
    /// The border contributes no edges.
    #[default]
    Ignored,
    /// The border behaves like a ring of occupied cells.
    Occupied,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GridError {
    #[error("rectangle {rect} lies outside the {f}x{t} substrate")]
    OutOfBounds { rect: Rect, f: usize, t: usize },
    #[error("rectangle {rect} has zero extent")]
    Degenerate { rect: Rect },
    #[error("rectangle {rect} overlaps placement {other}")]
    Overlap { rect: Rect, other: PlacementId },
    #[error("placement {0} is already registered")]
    DuplicateId(PlacementId),
    #[error("placement {0} is not registered")]
    UnknownId(PlacementId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Substrate {
    f: usize,
    t: usize,
    cells: Vec<Option<PlacementId>>,
    placements: BTreeMap<PlacementId, Rect>,
    border: EdiBorder,
}

impl Substrate {
    /// Empty `f x t` substrate with the default border rule.
    ///
    /// Panics if either dimension is zero.
    pub fn new(f: usize, t: usize) -> Self {
        Self::with_border(f, t, EdiBorder::default())
    }

    pub fn with_border(f: usize, t: usize, border: EdiBorder) -> Self {
        assert!(f >= 1 && t >= 1, "substrate dimensions must be positive");
        Substrate {
            f,
            t,
            cells: vec![None; f * t],
            placements: BTreeMap::new(),
            border,
        }
    }

    /// Empty substrate with the same dimensions and border rule.
    pub fn cleared(&self) -> Self {
        Self::with_border(self.f, self.t, self.border)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.f
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.t
    }

    #[inline]
    pub fn capacity(&self) -> usize {
        self.f * self.t
    }

    pub fn border(&self) -> EdiBorder {
        self.border
    }

    #[inline]
    fn index(&self, f: usize, t: usize) -> usize {
        t * self.f + f
    }

    #[inline]
    pub fn owner(&self, f: usize, t: usize) -> Option<PlacementId> {
        self.cells[self.index(f, t)]
    }

    #[inline]
    pub fn is_occupied(&self, f: usize, t: usize) -> bool {
        self.owner(f, t).is_some()
    }

    pub fn occupied_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }

    pub fn placements(&self) -> impl Iterator<Item = (PlacementId, Rect)> + '_ {
        self.placements.iter().map(|(id, rect)| (*id, *rect))
    }

    pub fn placement(&self, id: PlacementId) -> Option<Rect> {
        self.placements.get(&id).copied()
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    fn check_free(&self, rect: &Rect) -> Result<(), GridError> {
        if rect.f == 0 || rect.t == 0 {
            return Err(GridError::Degenerate { rect: *rect });
        }
        if rect.f_end() > self.f || rect.t_end() > self.t {
            return Err(GridError::OutOfBounds {
                rect: *rect,
                f: self.f,
                t: self.t,
            });
        }
        match rect.cells().find_map(|(f, t)| self.owner(f, t)) {
            Some(other) => Err(GridError::Overlap { rect: *rect, other }),
            None => Ok(()),
        }
    }

    pub fn place(&mut self, rect: Rect, id: PlacementId) -> Result<(), GridError> {
        self.check_free(&rect)?;
        if self.placements.contains_key(&id) {
            return Err(GridError::DuplicateId(id));
        }
        for t in rect.t0..rect.t_end() {
            let row = self.index(rect.f0, t);
            self.cells[row..row + rect.f].fill(Some(id));
        }
        self.placements.insert(id, rect);
        Ok(())
    }

    pub fn remove(&mut self, id: PlacementId) -> Result<Rect, GridError> {
        let rect = self.placements.remove(&id).ok_or(GridError::UnknownId(id))?;
        for t in rect.t0..rect.t_end() {
            let row = self.index(rect.f0, t);
            self.cells[row..row + rect.f].fill(None);
        }
        Ok(rect)
    }

    /// Embedding Density Index: number of 4-neighbour cell pairs with exactly
    /// one occupied cell, plus free border-adjacent sides under
    /// [`EdiBorder::Occupied`].
    pub fn edi(&self) -> u64 {
        let mut edges = 0u64;
        for t in 0..self.t {
            for f in 0..self.f {
                let occ = self.is_occupied(f, t);
                if f + 1 < self.f && occ != self.is_occupied(f + 1, t) {
                    edges += 1;
                }
                if t + 1 < self.t && occ != self.is_occupied(f, t + 1) {
                    edges += 1;
                }
            }
        }
        if self.border == EdiBorder::Occupied {
            edges += self.free_border_sides();
        }
        edges
    }

    fn free_border_sides(&self) -> u64 {
        let mut sides = 0u64;
        for f in 0..self.f {
            sides += u64::from(!self.is_occupied(f, 0));
            sides += u64::from(!self.is_occupied(f, self.t - 1));
        }
        for t in 0..self.t {
            sides += u64::from(!self.is_occupied(0, t));
            sides += u64::from(!self.is_occupied(self.f - 1, t));
        }
        sides
    }

    /// Change in EDI if `rect` (assumed free and in bounds) were occupied.
    ///
    /// Only the perimeter matters: pairs inside the rectangle go from
    /// free/free to occupied/occupied.
    pub(crate) fn edi_delta(&self, rect: &Rect) -> i64 {
        let border = match self.border {
            EdiBorder::Ignored => 0,
            EdiBorder::Occupied => -1,
        };
        let side = |inside: bool, f: usize, t: usize| -> i64 {
            if !inside {
                border
            } else if self.is_occupied(f, t) {
                -1
            } else {
                1
            }
        };
        let mut delta = 0i64;
        for f in rect.f0..rect.f_end() {
            delta += if rect.t0 > 0 {
                side(true, f, rect.t0 - 1)
            } else {
                side(false, 0, 0)
            };
            delta += if rect.t_end() < self.t {
                side(true, f, rect.t_end())
            } else {
                side(false, 0, 0)
            };
        }
        for t in rect.t0..rect.t_end() {
            delta += if rect.f0 > 0 {
                side(true, rect.f0 - 1, t)
            } else {
                side(false, 0, 0)
            };
            delta += if rect.f_end() < self.f {
                side(true, rect.f_end(), t)
            } else {
                side(false, 0, 0)
            };
        }
        delta
    }

    /// EDI of the substrate with `rect` additionally occupied. Does not mutate.
    pub fn edi_if_placed(&self, rect: &Rect) -> Result<u64, GridError> {
        self.check_free(rect)?;
        let after = self.edi() as i64 + self.edi_delta(rect);
        debug_assert!(after >= 0);
        Ok(after as u64)
    }

    /// Every all-free rectangle not contained in a larger all-free rectangle,
    /// ordered by `(t0, f0, f, t)`.
    ///
    /// Sweeps rows as the bottom edge with a histogram of free-run heights.
    /// For each column the widest span at its height gives a rectangle that is
    /// maximal leftwards, rightwards and upwards; it is kept when the row
    /// below blocks it too.
    pub fn maximal_free_rectangles(&self) -> Vec<Rect> {
        let (width, height) = (self.f, self.t);
        let mut heights = vec![0usize; width];
        let mut left = vec![0usize; width];
        let mut right = vec![0usize; width];
        let mut leftmost = vec![false; width];
        let mut stack: Vec<usize> = Vec::with_capacity(width);
        // occupied-cell prefix sums of the row below the current bottom row
        let mut below = vec![0usize; width + 1];
        let mut out = Vec::new();

        for t in 0..height {
            for (f, h) in heights.iter_mut().enumerate() {
                *h = if self.is_occupied(f, t) { 0 } else { *h + 1 };
            }
            if t + 1 < height {
                for f in 0..width {
                    below[f + 1] = below[f] + usize::from(self.is_occupied(f, t + 1));
                }
            }

            stack.clear();
            for f in 0..width {
                while stack.last().is_some_and(|&s| heights[s] > heights[f]) {
                    stack.pop();
                }
                match stack.last() {
                    Some(&s) if heights[s] == heights[f] => leftmost[f] = false,
                    Some(&s) => {
                        leftmost[f] = true;
                        left[f] = s + 1;
                    }
                    None => {
                        leftmost[f] = true;
                        left[f] = 0;
                    }
                }
                stack.push(f);
            }
            stack.clear();
            for f in (0..width).rev() {
                while stack.last().is_some_and(|&s| heights[s] >= heights[f]) {
                    stack.pop();
                }
                right[f] = stack.last().map_or(width, |&s| s);
                stack.push(f);
            }

            for f in 0..width {
                let h = heights[f];
                if h == 0 || !leftmost[f] {
                    continue;
                }
                let (l, r) = (left[f], right[f]);
                let blocked_below = t + 1 == height || below[r] - below[l] > 0;
                if blocked_below {
                    out.push(Rect::new(l, t + 1 - h, r - l, h));
                }
            }
        }
        out.sort_by_key(|r| (r.t0, r.f0, r.f, r.t));
        out
    }

    /// Occupied cells grouped by the key `owner` assigns to each placement.
    pub fn occupancy_split<K, F>(&self, mut owner: F) -> Result<OccupancySplit<K>, GridError>
    where
        K: Ord + Copy,
        F: FnMut(PlacementId) -> Option<K>,
    {
        let mut per_key = BTreeMap::new();
        let mut occupied = 0;
        for (id, rect) in &self.placements {
            let key = owner(*id).ok_or(GridError::UnknownId(*id))?;
            *per_key.entry(key).or_insert(0) += rect.area();
            occupied += rect.area();
        }
        Ok(OccupancySplit {
            per_key,
            occupied,
            capacity: self.capacity(),
        })
    }
}

/// Cell counts per owner key. Fractions are derived from integer counts so
/// the per-key parts always sum to the total.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancySplit<K: Ord> {
    pub per_key: BTreeMap<K, usize>,
    pub occupied: usize,
    pub capacity: usize,
}

impl<K: Ord> OccupancySplit<K> {
    pub fn fraction(&self, key: &K) -> f64 {
        self.per_key.get(key).copied().unwrap_or(0) as f64 / self.capacity as f64
    }

    pub fn total(&self) -> f64 {
        self.occupied as f64 / self.capacity as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_edi(s: &Substrate) -> u64 {
        let mut n = 0;
        for t in 0..s.height() {
            for f in 0..s.width() {
                for (df, dt) in [(1usize, 0usize), (0, 1)] {
                    let (g, u) = (f + df, t + dt);
                    if g < s.width() && u < s.height() && s.is_occupied(f, t) != s.is_occupied(g, u) {
                        n += 1;
                    }
                }
            }
        }
        n
    }

    #[test]
    fn place_counts_cells() {
        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(0, 0, 2, 3), PlacementId(1)).unwrap();
        assert_eq!(s.occupied_cells(), 6);
        assert_eq!(s.capacity(), 400);
    }

    #[test]
    fn place_errors() {
        let mut s = Substrate::new(20, 20);
        assert!(matches!(
            s.place(Rect::new(19, 19, 2, 1), PlacementId(1)),
            Err(GridError::OutOfBounds { .. })
        ));
        s.place(Rect::new(0, 0, 2, 2), PlacementId(1)).unwrap();
        assert_eq!(
            s.place(Rect::new(1, 1, 2, 2), PlacementId(2)),
            Err(GridError::Overlap {
                rect: Rect::new(1, 1, 2, 2),
                other: PlacementId(1)
            })
        );
        assert_eq!(
            s.place(Rect::new(5, 5, 1, 1), PlacementId(1)),
            Err(GridError::DuplicateId(PlacementId(1)))
        );
        assert!(matches!(
            s.place(Rect::new(5, 5, 0, 1), PlacementId(3)),
            Err(GridError::Degenerate { .. })
        ));
    }

    #[test]
    fn remove_restores() {
        let empty = Substrate::new(20, 20);
        let mut s = empty.clone();
        s.place(Rect::new(3, 4, 5, 2), PlacementId(7)).unwrap();
        s.remove(PlacementId(7)).unwrap();
        assert_eq!(s, empty);
        assert_eq!(
            Substrate::new(20, 20).remove(PlacementId(1)),
            Err(GridError::UnknownId(PlacementId(1)))
        );

        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(0, 0, 2, 2), PlacementId(1)).unwrap();
        s.place(Rect::new(5, 5, 1, 3), PlacementId(2)).unwrap();
        s.remove(PlacementId(1)).unwrap();
        assert_eq!(s.occupied_cells(), 3);
        assert!(Rect::new(5, 5, 1, 3)
            .cells()
            .all(|(f, t)| s.owner(f, t) == Some(PlacementId(2))));
    }

    #[test]
    fn edi_examples() {
        assert_eq!(Substrate::new(20, 20).edi(), 0);

        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(5, 5, 1, 1), PlacementId(1)).unwrap();
        assert_eq!(s.edi(), 4);

        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(0, 0, 2, 2), PlacementId(1)).unwrap();
        assert_eq!(brute_edi(&s), 4);
        assert_eq!(s.edi(), 4);

        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(7, 9, 2, 2), PlacementId(1)).unwrap();
        assert_eq!(brute_edi(&s), 8);
        assert_eq!(s.edi(), 8);
    }

    #[test]
    fn edi_if_placed_examples() {
        let s = Substrate::new(20, 20);
        assert_eq!(s.edi_if_placed(&Rect::new(0, 0, 1, 1)), Ok(2));

        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(0, 0, 2, 2), PlacementId(1)).unwrap();
        let mut merged = Substrate::new(20, 20);
        merged.place(Rect::new(0, 0, 4, 2), PlacementId(1)).unwrap();
        assert_eq!(brute_edi(&merged), 6);
        assert_eq!(s.edi_if_placed(&Rect::new(2, 0, 2, 2)), Ok(6));
        assert!(matches!(
            s.edi_if_placed(&Rect::new(1, 1, 2, 2)),
            Err(GridError::Overlap { .. })
        ));
        // no mutation
        assert_eq!(s.occupied_cells(), 4);
    }

    #[test]
    fn edi_with_occupied_border() {
        let s = Substrate::with_border(4, 3, EdiBorder::Occupied);
        // perimeter sides of a free 4x3 grid
        assert_eq!(s.edi(), 2 * 4 + 2 * 3);
        let r = Rect::new(0, 0, 1, 1);
        let mut placed = s.clone();
        placed.place(r, PlacementId(1)).unwrap();
        assert_eq!(s.edi_if_placed(&r).unwrap(), placed.edi());
        assert_eq!(placed.edi(), 14 - 2 + 2);
    }

    #[test]
    fn maximal_free_rectangles_examples() {
        assert_eq!(
            Substrate::new(20, 20).maximal_free_rectangles(),
            vec![Rect::new(0, 0, 20, 20)]
        );

        let mut full = Substrate::new(5, 3);
        full.place(Rect::new(0, 0, 5, 3), PlacementId(1)).unwrap();
        assert!(full.maximal_free_rectangles().is_empty());

        let mut s = Substrate::new(4, 4);
        s.place(Rect::new(1, 1, 1, 1), PlacementId(1)).unwrap();
        assert_eq!(
            s.maximal_free_rectangles(),
            vec![
                Rect::new(0, 0, 1, 4),
                Rect::new(0, 0, 4, 1),
                Rect::new(2, 0, 2, 4),
                Rect::new(0, 2, 4, 2),
            ]
        );
    }

    #[test]
    fn occupancy_split_examples() {
        let s = Substrate::new(20, 20);
        let split = s.occupancy_split(|_| Some(0u8)).unwrap();
        assert_eq!(split.total(), 0.0);

        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(0, 0, 10, 20), PlacementId(1)).unwrap();
        let split = s.occupancy_split(|_| Some("ps-voice")).unwrap();
        assert_eq!(split.fraction(&"ps-voice"), 0.5);
        assert_eq!(split.total(), 0.5);

        let mut s = Substrate::new(20, 20);
        s.place(Rect::new(0, 0, 2, 3), PlacementId(1)).unwrap();
        s.place(Rect::new(5, 5, 1, 4), PlacementId(2)).unwrap();
        let split = s.occupancy_split(|id| Some(id.0 % 2)).unwrap();
        assert_eq!(split.total(), 10.0 / 400.0);
        assert_eq!(split.per_key.values().sum::<usize>(), 10);
        assert_eq!(
            s.occupancy_split(|id| (id.0 == 1).then_some(0)),
            Err(GridError::UnknownId(PlacementId(2)))
        );
    }
}
