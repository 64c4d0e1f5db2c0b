//! Adaptive quadrilateral meshes: a forest of quadtrees over a rectangular
//! domain with one-irregular local refinement.
//!
//! Cell geometry lives on an integer lattice (each root cell spans
//! [`ROOT_SIZE`] lattice units per direction), so corner coordinates, node
//! identities and neighbor relations are exact at every refinement level;
//! physical coordinates are produced only at evaluation time.

use std::collections::{BTreeSet, HashMap, HashSet};

use crate::{Error, Result};

/// Lattice units spanned by one unrefined root cell. The factor 3 keeps the
/// lattice coordinates of every Lagrange node of degree ≤ 3 integral through
/// 40 levels of quadrisection.
pub const ROOT_SIZE: i64 = 3 << 40;

/// Axis-aligned rectangle in physical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        assert!(x1 > x0 && y1 > y0, "rectangle must have positive extent");
        Self { x0, y0, x1, y1 }
    }

    /// The unit square (0,1)².
    pub fn unit() -> Self {
        Self::new(0.0, 0.0, 1.0, 1.0)
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    /// Length of the diagonal.
    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }
}

/// The four edge directions of an axis-aligned cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dir {
    West,
    East,
    South,
    North,
}

impl Dir {
    pub const ALL: [Dir; 4] = [Dir::West, Dir::East, Dir::South, Dir::North];
}

/// Identity of a (leaf or interior) quadtree cell: refinement level and the
/// lattice coordinates of its lower-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub level: u8,
    pub x: i64,
    pub y: i64,
}

impl CellKey {
    /// Lattice edge length of a cell at this level.
    pub fn size(&self) -> i64 {
        ROOT_SIZE >> self.level
    }

    /// The four children produced by quadrisection, in (y, x) order.
    pub fn children(&self) -> [CellKey; 4] {
        let h = self.size() / 2;
        let l = self.level + 1;
        [
            CellKey { level: l, x: self.x, y: self.y },
            CellKey { level: l, x: self.x + h, y: self.y },
            CellKey { level: l, x: self.x, y: self.y + h },
            CellKey { level: l, x: self.x + h, y: self.y + h },
        ]
    }
}

/// A leaf cell: its lattice identity plus the derived physical rectangle.
#[derive(Debug, Clone)]
pub struct Cell {
    pub key: CellKey,
    pub rect: Rect,
}

impl Cell {
    /// Cell diameter h_K (Euclidean length of the diagonal).
    pub fn diameter(&self) -> f64 {
        self.rect.diameter()
    }

    /// The four corner points, counterclockwise from the lower left.
    pub fn corners(&self) -> [(f64, f64); 4] {
        let r = &self.rect;
        [(r.x0, r.y0), (r.x1, r.y0), (r.x1, r.y1), (r.x0, r.y1)]
    }
}

/// A conforming-with-hanging-nodes quadrilateral mesh: the leaves of a
/// quadtree forest over an `nx × ny` grid of root cells. Immutable once
/// built; refinement produces a new mesh.
#[derive(Debug)]
pub struct SpatialMesh {
    domain: Rect,
    nx: usize,
    ny: usize,
    cells: Vec<Cell>,
    index: HashMap<CellKey, usize>,
    /// Per-level sets of leaf origins, for O(1) neighbor probes.
    levels: Vec<HashSet<(i64, i64)>>,
    max_level: u8,
}

impl SpatialMesh {
    /// Uniform mesh of `nx × ny` congruent level-0 cells.
    pub fn uniform(domain: Rect, nx: usize, ny: usize) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidInput(format!(
                "cell counts must be positive, got {nx} × {ny}"
            )));
        }
        let mut leaves = HashSet::new();
        for jy in 0..ny {
            for jx in 0..nx {
                leaves.insert(CellKey {
                    level: 0,
                    x: jx as i64 * ROOT_SIZE,
                    y: jy as i64 * ROOT_SIZE,
                });
            }
        }
        Ok(Self::from_leaves(domain, nx, ny, leaves))
    }

    fn from_leaves(domain: Rect, nx: usize, ny: usize, leaves: HashSet<CellKey>) -> Self {
        let mut keys: Vec<CellKey> = leaves.into_iter().collect();
        keys.sort_by_key(|k| (k.y, k.x));
        let max_level = keys.iter().map(|k| k.level).max().unwrap_or(0);
        let mut levels = vec![HashSet::new(); max_level as usize + 1];
        let mut index = HashMap::with_capacity(keys.len());
        let mut cells = Vec::with_capacity(keys.len());
        let scale_x = domain.width() / (nx as f64 * ROOT_SIZE as f64);
        let scale_y = domain.height() / (ny as f64 * ROOT_SIZE as f64);
        for (i, key) in keys.iter().enumerate() {
            levels[key.level as usize].insert((key.x, key.y));
            index.insert(*key, i);
            let s = key.size();
            cells.push(Cell {
                key: *key,
                rect: Rect::new(
                    domain.x0 + key.x as f64 * scale_x,
                    domain.y0 + key.y as f64 * scale_y,
                    domain.x0 + (key.x + s) as f64 * scale_x,
                    domain.y0 + (key.y + s) as f64 * scale_y,
                ),
            });
        }
        Self { domain, nx, ny, cells, index, levels, max_level }
    }

    pub fn domain(&self) -> Rect {
        self.domain
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn cell(&self, idx: usize) -> &Cell {
        &self.cells[idx]
    }

    pub fn max_level(&self) -> u8 {
        self.max_level
    }

    /// Largest cell diameter in the mesh.
    pub fn max_diameter(&self) -> f64 {
        self.cells
            .iter()
            .map(Cell::diameter)
            .fold(0.0, f64::max)
    }

    /// Total lattice extent in x and y.
    fn lattice_extent(&self) -> (i64, i64) {
        (self.nx as i64 * ROOT_SIZE, self.ny as i64 * ROOT_SIZE)
    }

    /// Physical coordinates of a lattice point.
    pub fn lattice_to_point(&self, x: i64, y: i64) -> (f64, f64) {
        let (ex, ey) = self.lattice_extent();
        (
            self.domain.x0 + self.domain.width() * (x as f64 / ex as f64),
            self.domain.y0 + self.domain.height() * (y as f64 / ey as f64),
        )
    }

    /// Whether a lattice point lies on the domain boundary.
    pub fn lattice_on_boundary(&self, x: i64, y: i64) -> bool {
        let (ex, ey) = self.lattice_extent();
        x == 0 || y == 0 || x == ex || y == ey
    }

    /// Index of the leaf cell containing the lattice point, with points on
    /// cell boundaries resolved to the cell on their lower-left side and
    /// points on the domain's upper boundary clamped inward.
    pub fn locate_lattice(&self, x: i64, y: i64) -> usize {
        let (ex, ey) = self.lattice_extent();
        let cx = x.clamp(0, ex - 1);
        let cy = y.clamp(0, ey - 1);
        for level in 0..=self.max_level {
            let s = ROOT_SIZE >> level;
            let origin = (cx.div_euclid(s) * s, cy.div_euclid(s) * s);
            if self.levels[level as usize].contains(&origin) {
                return self.index[&CellKey { level, x: origin.0, y: origin.1 }];
            }
        }
        unreachable!("leaves tile the domain, so every lattice point lies in a cell")
    }

    /// Index of the leaf cell containing a physical point, with points on
    /// cell boundaries resolved to the lower-left cell and points outside
    /// the domain clamped to the nearest cell.
    pub fn locate_point(&self, x: f64, y: f64) -> usize {
        let (ex, ey) = self.lattice_extent();
        let fx = ((x - self.domain.x0) / self.domain.width()).clamp(0.0, 1.0);
        let fy = ((y - self.domain.y0) / self.domain.height()).clamp(0.0, 1.0);
        self.locate_lattice(
            (fx * ex as f64).floor() as i64,
            (fy * ey as f64).floor() as i64,
        )
    }

    /// Leaf cells sharing an edge segment with cell `idx` in direction `dir`,
    /// ordered by their origin. Empty on the domain boundary.
    pub fn edge_neighbors(&self, idx: usize, dir: Dir) -> Vec<usize> {
        let key = self.cells[idx].key;
        let s = key.size();
        let mut found = Vec::new();
        for level in 0..=self.max_level {
            let s2 = ROOT_SIZE >> level;
            // Origin coordinate of a touching neighbor at this level in the
            // probe direction, if the alignment admits one.
            let (fixed_ok, fixed, lo, hi) = match dir {
                Dir::East => (((key.x + s) % s2) == 0, key.x + s, key.y, key.y + s),
                Dir::West => ((key.x % s2) == 0, key.x - s2, key.y, key.y + s),
                Dir::North => (((key.y + s) % s2) == 0, key.y + s, key.x, key.x + s),
                Dir::South => ((key.y % s2) == 0, key.y - s2, key.x, key.x + s),
            };
            if !fixed_ok {
                continue;
            }
            // Running coordinates of candidate origins along the shared edge.
            let first = lo.div_euclid(s2) * s2;
            let mut run = first;
            while run < hi {
                let (cx, cy) = match dir {
                    Dir::East | Dir::West => (fixed, run),
                    Dir::North | Dir::South => (run, fixed),
                };
                if self.levels[level as usize].contains(&(cx, cy)) {
                    // Reject pure corner contact: the overlap of the edge
                    // intervals must have positive length.
                    let overlap = (hi.min(run + s2) - lo.max(run)).max(0);
                    if overlap > 0 {
                        found.push(self.index[&CellKey { level, x: cx, y: cy }]);
                    }
                }
                run += s2;
            }
        }
        found.sort_unstable();
        found
    }

    /// New mesh with every marked leaf quadrisected, plus whatever further
    /// quadrisections are needed to keep edge-adjacent leaves within one
    /// refinement level of each other.
    pub fn refined(&self, marks: &BTreeSet<usize>) -> Result<SpatialMesh> {
        if let Some(&bad) = marks.iter().find(|&&m| m >= self.n_cells()) {
            return Err(Error::InvalidInput(format!(
                "cell index {bad} out of range (have {} cells)",
                self.n_cells()
            )));
        }
        let mut leaves: HashSet<CellKey> = self.cells.iter().map(|c| c.key).collect();
        let mut pending: Vec<CellKey> = marks.iter().map(|&m| self.cells[m].key).collect();
        while !pending.is_empty() {
            for key in pending.drain(..) {
                if leaves.remove(&key) {
                    for child in key.children() {
                        leaves.insert(child);
                    }
                }
            }
            pending = one_irregularity_violations(&leaves);
        }
        Ok(Self::from_leaves(self.domain, self.nx, self.ny, leaves))
    }

    /// Plain-text dump: one line per leaf cell, `level x0 y0 x1 y1`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for cell in &self.cells {
            let r = &cell.rect;
            out.push_str(&format!(
                "{} {:.12e} {:.12e} {:.12e} {:.12e}\n",
                cell.key.level, r.x0, r.y0, r.x1, r.y1
            ));
        }
        out
    }
}

/// Leaves that violate one-irregularity, i.e. have an edge-adjacent leaf at
/// least two levels deeper.
fn one_irregularity_violations(leaves: &HashSet<CellKey>) -> Vec<CellKey> {
    let mut by_level: HashMap<u8, HashSet<(i64, i64)>> = HashMap::new();
    let mut max_level = 0;
    for key in leaves {
        by_level.entry(key.level).or_default().insert((key.x, key.y));
        max_level = max_level.max(key.level);
    }
    let mut violations = Vec::new();
    'leaf: for key in leaves {
        let s = key.size();
        for deeper in (key.level + 2)..=max_level {
            let Some(origins) = by_level.get(&deeper) else { continue };
            let s2 = ROOT_SIZE >> deeper;
            for dir in Dir::ALL {
                let (fixed, lo, hi) = match dir {
                    Dir::East => (key.x + s, key.y, key.y + s),
                    Dir::West => (key.x - s2, key.y, key.y + s),
                    Dir::North => (key.y + s, key.x, key.x + s),
                    Dir::South => (key.y - s2, key.x, key.x + s),
                };
                let mut run = lo.div_euclid(s2) * s2;
                while run < hi {
                    let candidate = match dir {
                        Dir::East | Dir::West => (fixed, run),
                        Dir::North | Dir::South => (run, fixed),
                    };
                    if (hi.min(run + s2) - lo.max(run)) > 0 && origins.contains(&candidate) {
                        violations.push(*key);
                        continue 'leaf;
                    }
                    run += s2;
                }
            }
        }
    }
    violations
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    /// Check every structural mesh invariant: exact tiling of the domain and
    /// one-irregularity of edge-adjacent leaves.
    fn assert_valid(mesh: &SpatialMesh) {
        // Exact lattice areas sum to the lattice extent.
        let (ex, ey) = (mesh.nx as i128 * ROOT_SIZE as i128, mesh.ny as i128 * ROOT_SIZE as i128);
        let total: i128 = mesh
            .cells()
            .iter()
            .map(|c| (c.key.size() as i128) * (c.key.size() as i128))
            .sum();
        assert_eq!(total, ex * ey, "leaves must tile the domain exactly");

        // Physical areas agree to rounding.
        let area: f64 = mesh.cells().iter().map(|c| c.rect.area()).sum();
        assert_relative_eq!(area, mesh.domain().area(), max_relative = 1e-12);

        // One-irregularity across every edge.
        for idx in 0..mesh.n_cells() {
            let level = mesh.cell(idx).key.level as i32;
            for dir in Dir::ALL {
                for nb in mesh.edge_neighbors(idx, dir) {
                    let other = mesh.cell(nb).key.level as i32;
                    assert!(
                        (level - other).abs() <= 1,
                        "cells {idx} (level {level}) and {nb} (level {other}) break one-irregularity"
                    );
                }
            }
        }

        // Leaves are sorted by (y, x) origin.
        for win in mesh.cells().windows(2) {
            assert!((win[0].key.y, win[0].key.x) < (win[1].key.y, win[1].key.x));
        }
    }

    #[test]
    fn uniform_mesh_geometry() {
        let mesh = SpatialMesh::uniform(Rect::unit(), 4, 4).unwrap();
        assert_eq!(mesh.n_cells(), 16);
        for cell in mesh.cells() {
            assert_eq!(cell.key.level, 0);
            assert_relative_eq!(cell.diameter(), 2.0_f64.sqrt() / 4.0, max_relative = 1e-14);
        }
        assert_valid(&mesh);

        let one = SpatialMesh::uniform(Rect::unit(), 1, 1).unwrap();
        assert_eq!(one.n_cells(), 1);
        assert_relative_eq!(one.max_diameter(), 2.0_f64.sqrt(), max_relative = 1e-15);

        assert!(SpatialMesh::uniform(Rect::unit(), 0, 3).is_err());
    }

    #[test]
    fn single_cell_refinement_has_no_hanging_structure() {
        let mesh = SpatialMesh::uniform(Rect::unit(), 1, 1).unwrap();
        let refined = mesh.refined(&BTreeSet::from([0])).unwrap();
        assert_eq!(refined.n_cells(), 4);
        assert_valid(&refined);
        for cell in refined.cells() {
            assert_eq!(cell.key.level, 1);
        }
    }

    #[test]
    fn local_refinement_of_one_cell_in_a_grid() {
        let mesh = SpatialMesh::uniform(Rect::unit(), 4, 4).unwrap();
        // Mark one cell: 16 - 1 + 4 = 19 leaves, still one-irregular.
        let refined = mesh.refined(&BTreeSet::from([1])).unwrap();
        assert_eq!(refined.n_cells(), 19);
        assert_valid(&refined);
        assert_eq!(refined.max_level(), 1);

        assert!(mesh.refined(&BTreeSet::from([16])).is_err());
    }

    #[test]
    fn uniform_refinement_quadruples_cells_and_halves_diameters() {
        let mesh = SpatialMesh::uniform(Rect::unit(), 2, 2).unwrap();
        let h = mesh.max_diameter();
        let all: BTreeSet<usize> = (0..mesh.n_cells()).collect();
        let refined = mesh.refined(&all).unwrap();
        assert_eq!(refined.n_cells(), 16);
        assert_valid(&refined);
        assert_relative_eq!(refined.max_diameter(), 0.5 * h, max_relative = 1e-14);
    }

    #[test]
    fn closure_restores_one_irregularity() {
        // Refine one cell of a 2×2 mesh, then its north-east child. The two
        // level-0 neighbors of that child must be split by the closure.
        let mesh = SpatialMesh::uniform(Rect::unit(), 2, 2).unwrap();
        let once = mesh.refined(&BTreeSet::from([0])).unwrap();
        assert_eq!(once.n_cells(), 7);
        assert_valid(&once);

        let ne_child = once
            .cells()
            .iter()
            .position(|c| c.key.level == 1 && c.key.x == ROOT_SIZE / 2 && c.key.y == ROOT_SIZE / 2)
            .unwrap();
        let twice = once.refined(&BTreeSet::from([ne_child])).unwrap();
        // 3 remaining children + 4 grandchildren + 2×4 split neighbors + 1
        // untouched diagonal root cell.
        assert_eq!(twice.n_cells(), 16);
        assert_valid(&twice);
        assert_eq!(twice.max_level(), 2);
    }

    #[test]
    fn neighbor_queries_see_finer_and_coarser_cells() {
        let mesh = SpatialMesh::uniform(Rect::unit(), 2, 1).unwrap();
        let refined = mesh.refined(&BTreeSet::from([0])).unwrap();
        // The unrefined right cell sees both east children of the left cell.
        let coarse = refined
            .cells()
            .iter()
            .position(|c| c.key.level == 0)
            .unwrap();
        let west = refined.edge_neighbors(coarse, Dir::West);
        assert_eq!(west.len(), 2);
        for &nb in &west {
            assert_eq!(refined.cell(nb).key.level, 1);
            let east_back = refined.edge_neighbors(nb, Dir::East);
            assert_eq!(east_back, vec![coarse]);
        }
        // Boundary edges have no neighbors.
        assert!(refined.edge_neighbors(coarse, Dir::East).is_empty());
    }

    #[test]
    fn corner_contact_is_not_adjacency() {
        let mesh = SpatialMesh::uniform(Rect::unit(), 2, 2).unwrap();
        // Cells 0 and 3 touch only at the center point.
        let n0 = mesh.edge_neighbors(0, Dir::East);
        assert_eq!(n0.len(), 1);
        assert_eq!(mesh.cell(n0[0]).key.y, 0);
        let n = mesh.edge_neighbors(0, Dir::North);
        assert_eq!(n.len(), 1);
        assert_eq!(mesh.cell(n[0]).key.x, 0);
    }

    #[test]
    fn dump_lists_level_and_corners() {
        let mesh = SpatialMesh::uniform(Rect::unit(), 1, 2).unwrap();
        let dump = mesh.dump();
        let lines: Vec<&str> = dump.lines().collect();
        assert_eq!(lines.len(), 2);
        let fields: Vec<f64> = lines[1]
            .split_whitespace()
            .map(|f| f.parse().unwrap())
            .collect();
        assert_eq!(fields[0], 0.0);
        assert_relative_eq!(fields[2], 0.5); // y0 of the upper cell
        assert_relative_eq!(fields[4], 1.0); // y1
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Random refinement sequences preserve every mesh invariant, and
        /// each new leaf nests inside exactly one previous leaf.
        #[test]
        fn random_refinement_preserves_invariants(
            seed_cells in prop::collection::vec(0usize..64, 1..5),
            rounds in 1usize..4,
        ) {
            let mut mesh = SpatialMesh::uniform(Rect::unit(), 3, 2).unwrap();
            for round in 0..rounds {
                let marks: BTreeSet<usize> = seed_cells
                    .iter()
                    .map(|&c| (c * (round + 3) + round) % mesh.n_cells())
                    .collect();
                let next = mesh.refined(&marks).unwrap();
                assert_valid(&next);
                // Monotone refinement: every new leaf lies inside a previous leaf.
                for cell in next.cells() {
                    let mut anc = cell.key;
                    let contained = loop {
                        if mesh.index.contains_key(&anc) {
                            break true;
                        }
                        if anc.level == 0 {
                            break false;
                        }
                        let s_parent = ROOT_SIZE >> (anc.level - 1);
                        anc = CellKey {
                            level: anc.level - 1,
                            x: anc.x.div_euclid(s_parent) * s_parent,
                            y: anc.y.div_euclid(s_parent) * s_parent,
                        };
                    };
                    prop_assert!(contained, "leaf without ancestor in the previous mesh");
                }
                mesh = next;
            }
        }
    }
}
