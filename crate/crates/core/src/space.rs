//! Continuous Lagrange element spaces on adaptive quadrilateral meshes:
//! global degree-of-freedom maps, hanging-node constraints, Dirichlet
//! boundary classification, nodal interpolation and inter-mesh transfer, and
//! the per-cell degree restriction used by the error estimator.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use crate::mesh::{Dir, SpatialMesh};
use crate::quadrature::LagrangeBasis;
use crate::sparse::CsrMatrix;
use crate::{Error, Result};

/// Global lattice coordinates identifying a Lagrange node.
pub type NodeKey = (i64, i64);

/// Classification of a global degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofClass {
    /// Interior unconstrained node: a true unknown.
    Free,
    /// Node on the Dirichlet boundary: value prescribed by data.
    Boundary,
    /// Hanging node on a refined edge: value slaved to master nodes.
    Hanging,
}

/// Index of an unconstrained degree of freedom after reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    /// Position in the free-unknown vector.
    Free(usize),
    /// Position in the prescribed boundary-value vector.
    Fixed(usize),
}

/// Tensor-product Lagrange shape functions of the given degree on the
/// reference square [0,1]², with nodes in row-major (y-outer) order.
#[derive(Debug, Clone)]
pub struct RefShapes {
    degree: usize,
    basis: LagrangeBasis,
}

impl RefShapes {
    pub fn new(degree: usize) -> Self {
        Self { degree, basis: LagrangeBasis::equispaced_unit(degree) }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Number of local shape functions, (degree + 1)².
    pub fn n_local(&self) -> usize {
        (self.degree + 1) * (self.degree + 1)
    }

    fn split(&self, j: usize) -> (usize, usize) {
        (j % (self.degree + 1), j / (self.degree + 1))
    }

    /// Reference coordinates of local node `j`.
    pub fn node(&self, j: usize) -> (f64, f64) {
        let (jx, jy) = self.split(j);
        (self.basis.nodes()[jx], self.basis.nodes()[jy])
    }

    pub fn value(&self, j: usize, x: f64, y: f64) -> f64 {
        let (jx, jy) = self.split(j);
        self.basis.eval(jx, x) * self.basis.eval(jy, y)
    }

    /// Gradient in reference coordinates.
    pub fn grad(&self, j: usize, x: f64, y: f64) -> (f64, f64) {
        let (jx, jy) = self.split(j);
        (
            self.basis.eval_deriv(jx, x) * self.basis.eval(jy, y),
            self.basis.eval(jx, x) * self.basis.eval_deriv(jy, y),
        )
    }

    /// Pure second derivatives (∂²/∂x̂², ∂²/∂ŷ²) in reference coordinates.
    pub fn second(&self, j: usize, x: f64, y: f64) -> (f64, f64) {
        let (jx, jy) = self.split(j);
        (
            self.basis.eval_deriv2(jx, x) * self.basis.eval(jy, y),
            self.basis.eval(jx, x) * self.basis.eval_deriv2(jy, y),
        )
    }
}

/// A continuous Lagrange space of degree `p ∈ {1, 2, 3}` over a mesh.
///
/// All nodes (free, boundary, hanging) carry a global index; fields are
/// stored as full nodal vectors. Linear systems are reduced to the free
/// unknowns with hanging values eliminated through their constraint rows and
/// boundary values moved to the right-hand side.
#[derive(Debug)]
pub struct Space {
    mesh: Arc<SpatialMesh>,
    degree: usize,
    shapes: RefShapes,
    keys: Vec<NodeKey>,
    positions: Vec<(f64, f64)>,
    class: Vec<DofClass>,
    cell_dofs: Vec<Vec<usize>>,
    key_index: HashMap<NodeKey, usize>,
    /// Hanging dof → resolved master combination (masters never hanging).
    constraints: HashMap<usize, Vec<(usize, f64)>>,
    /// Per-dof expansion into unconstrained slots.
    expansions: Vec<Vec<(Slot, f64)>>,
    free: Vec<usize>,
    fixed: Vec<usize>,
}

impl Space {
    pub fn new(mesh: Arc<SpatialMesh>, degree: usize) -> Result<Self> {
        if !(1..=3).contains(&degree) {
            return Err(Error::InvalidInput(format!(
                "element degree must be 1, 2 or 3, got {degree}"
            )));
        }
        let shapes = RefShapes::new(degree);
        let p = degree as i64;

        // Collect the unique node keys of all cells, then number them in
        // (y, x) lattice order for a deterministic map.
        let mut keys: Vec<NodeKey> = Vec::new();
        let mut key_index: HashMap<NodeKey, usize> = HashMap::new();
        let mut raw_cell_nodes: Vec<Vec<NodeKey>> = Vec::with_capacity(mesh.n_cells());
        for cell in mesh.cells() {
            let step = cell.key.size() / p;
            let mut local = Vec::with_capacity(shapes.n_local());
            for jy in 0..=p {
                for jx in 0..=p {
                    let key = (cell.key.x + jx * step, cell.key.y + jy * step);
                    key_index.entry(key).or_insert_with(|| {
                        keys.push(key);
                        keys.len() - 1
                    });
                    local.push(key);
                }
            }
            raw_cell_nodes.push(local);
        }
        keys.sort_by_key(|&(x, y)| (y, x));
        key_index.clear();
        for (i, &key) in keys.iter().enumerate() {
            key_index.insert(key, i);
        }
        let cell_dofs: Vec<Vec<usize>> = raw_cell_nodes
            .into_iter()
            .map(|local| local.into_iter().map(|k| key_index[&k]).collect())
            .collect();

        let constraints = build_constraints(&mesh, degree, &key_index)?;

        let positions: Vec<(f64, f64)> =
            keys.iter().map(|&(x, y)| mesh.lattice_to_point(x, y)).collect();
        let class: Vec<DofClass> = keys
            .iter()
            .enumerate()
            .map(|(i, &(x, y))| {
                if constraints.contains_key(&i) {
                    debug_assert!(
                        !mesh.lattice_on_boundary(x, y),
                        "hanging nodes sit on interior edges"
                    );
                    DofClass::Hanging
                } else if mesh.lattice_on_boundary(x, y) {
                    DofClass::Boundary
                } else {
                    DofClass::Free
                }
            })
            .collect();

        let mut free = Vec::new();
        let mut fixed = Vec::new();
        let mut slot = vec![None; keys.len()];
        for (i, c) in class.iter().enumerate() {
            match c {
                DofClass::Free => {
                    slot[i] = Some(Slot::Free(free.len()));
                    free.push(i);
                }
                DofClass::Boundary => {
                    slot[i] = Some(Slot::Fixed(fixed.len()));
                    fixed.push(i);
                }
                DofClass::Hanging => {}
            }
        }
        let expansions: Vec<Vec<(Slot, f64)>> = (0..keys.len())
            .map(|i| match class[i] {
                DofClass::Hanging => constraints[&i]
                    .iter()
                    .map(|&(m, w)| {
                        (slot[m].expect("constraint masters are never hanging"), w)
                    })
                    .collect(),
                _ => vec![(slot[i].unwrap(), 1.0)],
            })
            .collect();

        Ok(Self {
            mesh,
            degree,
            shapes,
            keys,
            positions,
            class,
            cell_dofs,
            key_index,
            constraints,
            expansions,
            free,
            fixed,
        })
    }

    pub fn mesh(&self) -> &Arc<SpatialMesh> {
        &self.mesh
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn shapes(&self) -> &RefShapes {
        &self.shapes
    }

    /// Total number of nodes, hanging nodes included.
    pub fn n_nodes(&self) -> usize {
        self.keys.len()
    }

    /// Mathematical dimension of the space: free plus boundary nodes.
    pub fn dimension(&self) -> usize {
        self.free.len() + self.fixed.len()
    }

    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    pub fn n_fixed(&self) -> usize {
        self.fixed.len()
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed_dofs(&self) -> &[usize] {
        &self.fixed
    }

    pub fn class(&self, dof: usize) -> DofClass {
        self.class[dof]
    }

    pub fn node_key(&self, dof: usize) -> NodeKey {
        self.keys[dof]
    }

    pub fn node_position(&self, dof: usize) -> (f64, f64) {
        self.positions[dof]
    }

    pub fn cell_dofs(&self, cell: usize) -> &[usize] {
        &self.cell_dofs[cell]
    }

    pub fn constraints(&self) -> &HashMap<usize, Vec<(usize, f64)>> {
        &self.constraints
    }

    /// Fill hanging-node entries from their masters, making the nodal vector
    /// a valid (continuous) member of the space.
    pub fn distribute(&self, full: &mut [f64]) {
        assert_eq!(full.len(), self.n_nodes());
        for (&h, row) in &self.constraints {
            full[h] = row.iter().map(|&(m, w)| w * full[m]).sum();
        }
    }

    /// Nodal interpolant of a function: values at free and boundary nodes,
    /// hanging nodes distributed from their masters.
    pub fn interpolate(&self, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        let mut full = vec![0.0; self.n_nodes()];
        for i in 0..self.n_nodes() {
            if self.class[i] != DofClass::Hanging {
                let (x, y) = self.positions[i];
                full[i] = f(x, y);
            }
        }
        self.distribute(&mut full);
        full
    }

    /// Assemble a full nodal vector from reduced free values and prescribed
    /// boundary values.
    pub fn complete(&self, free_values: &[f64], boundary_values: &[f64]) -> Vec<f64> {
        assert_eq!(free_values.len(), self.n_free());
        assert_eq!(boundary_values.len(), self.n_fixed());
        let mut full = vec![0.0; self.n_nodes()];
        for (k, &dof) in self.free.iter().enumerate() {
            full[dof] = free_values[k];
        }
        for (k, &dof) in self.fixed.iter().enumerate() {
            full[dof] = boundary_values[k];
        }
        self.distribute(&mut full);
        full
    }

    /// Values of a function at the boundary nodes, in `fixed_dofs` order.
    pub fn boundary_values(&self, g: impl Fn(f64, f64) -> f64) -> Vec<f64> {
        self.fixed
            .iter()
            .map(|&dof| {
                let (x, y) = self.positions[dof];
                g(x, y)
            })
            .collect()
    }

    /// Reduce a bilinear form assembled over all nodes: returns the
    /// free × free system matrix and the free × boundary coupling matrix
    /// (for moving Dirichlet data to the right-hand side). Hanging rows and
    /// columns are eliminated through their constraints.
    pub fn reduce_matrix(&self, triplets: &[(usize, usize, f64)]) -> (CsrMatrix, CsrMatrix) {
        let mut ff = Vec::with_capacity(triplets.len());
        let mut fd = Vec::new();
        for &(i, j, v) in triplets {
            for &(si, wi) in &self.expansions[i] {
                let Slot::Free(a) = si else { continue };
                for &(sj, wj) in &self.expansions[j] {
                    match sj {
                        Slot::Free(b) => ff.push((a, b, wi * wj * v)),
                        Slot::Fixed(b) => fd.push((a, b, wi * wj * v)),
                    }
                }
            }
        }
        (
            CsrMatrix::from_triplets(self.n_free(), self.n_free(), &ff),
            CsrMatrix::from_triplets(self.n_free(), self.n_fixed(), &fd),
        )
    }

    /// Reduce a linear functional assembled over all nodes to the free
    /// unknowns (test functions carry the hanging tails).
    pub fn reduce_vector(&self, full: &[f64]) -> Vec<f64> {
        assert_eq!(full.len(), self.n_nodes());
        let mut out = vec![0.0; self.n_free()];
        for (i, &v) in full.iter().enumerate() {
            for &(slot, w) in &self.expansions[i] {
                if let Slot::Free(a) = slot {
                    out[a] += w * v;
                }
            }
        }
        out
    }

    /// Evaluate a full nodal vector inside a cell at reference coordinates.
    pub fn eval_in_cell(&self, full: &[f64], cell: usize, xr: f64, yr: f64) -> f64 {
        self.cell_dofs[cell]
            .iter()
            .enumerate()
            .map(|(j, &dof)| full[dof] * self.shapes.value(j, xr, yr))
            .sum()
    }

    /// Evaluate a full nodal vector at a lattice point anywhere in the mesh.
    pub fn value_at_key(&self, full: &[f64], key: NodeKey) -> f64 {
        if let Some(&dof) = self.key_index.get(&key) {
            return full[dof];
        }
        let cell = self.mesh.locate_lattice(key.0, key.1);
        let ck = self.mesh.cell(cell).key;
        let s = ck.size() as f64;
        let xr = (key.0 - ck.x) as f64 / s;
        let yr = (key.1 - ck.y) as f64 / s;
        self.eval_in_cell(full, cell, xr, yr)
    }

    /// Transfer a field from another space of the same domain by nodal
    /// interpolation: every non-hanging node of `self` takes the source
    /// field's value at that point; hanging nodes are then distributed.
    pub fn interpolate_from(&self, source: &Space, source_full: &[f64]) -> Vec<f64> {
        assert_eq!(source_full.len(), source.n_nodes());
        assert_eq!(
            self.mesh.domain(),
            source.mesh.domain(),
            "transfer requires a common domain"
        );
        let mut full = vec![0.0; self.n_nodes()];
        for i in 0..self.n_nodes() {
            if self.class[i] != DofClass::Hanging {
                full[i] = source.value_at_key(source_full, self.keys[i]);
            }
        }
        self.distribute(&mut full);
        full
    }

    /// Per-cell nodal values of a conforming field (a broken view of it).
    pub fn to_broken(&self, full: &[f64]) -> BrokenField {
        assert_eq!(full.len(), self.n_nodes());
        BrokenField {
            degree: self.degree,
            values: self
                .cell_dofs
                .iter()
                .map(|dofs| dofs.iter().map(|&d| full[d]).collect())
                .collect(),
        }
    }
}

/// A discontinuous per-cell nodal field: one value vector per leaf cell, in
/// the row-major reference node order of `RefShapes`.
#[derive(Debug, Clone)]
pub struct BrokenField {
    degree: usize,
    values: Vec<Vec<f64>>,
}

impl BrokenField {
    pub fn new(degree: usize, values: Vec<Vec<f64>>) -> Self {
        let n = (degree + 1) * (degree + 1);
        assert!(values.iter().all(|v| v.len() == n), "cell block size mismatch");
        Self { degree, values }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn n_cells(&self) -> usize {
        self.values.len()
    }

    pub fn cell(&self, idx: usize) -> &[f64] {
        &self.values[idx]
    }

    /// Evaluate on one cell at reference coordinates.
    pub fn eval_in_cell(&self, shapes: &RefShapes, cell: usize, xr: f64, yr: f64) -> f64 {
        debug_assert_eq!(shapes.degree(), self.degree);
        self.values[cell]
            .iter()
            .enumerate()
            .map(|(j, &v)| v * shapes.value(j, xr, yr))
            .sum()
    }

    /// Cell-by-cell interpolation onto the lower degree `target`: on each
    /// cell the result matches this field at the target-degree reference
    /// nodes. Exact whenever the input is a polynomial of per-direction
    /// degree ≤ `target` on that cell.
    pub fn restricted(&self, target: usize) -> Result<BrokenField> {
        if target >= self.degree {
            return Err(Error::InvalidInput(format!(
                "restriction target degree {target} must be below the field degree {}",
                self.degree
            )));
        }
        let from = RefShapes::new(self.degree);
        let to = RefShapes::new(target);
        // Interpolation matrix: value of each source shape at each target node.
        let table: Vec<Vec<f64>> = (0..to.n_local())
            .map(|i| {
                let (x, y) = to.node(i);
                (0..from.n_local()).map(|j| from.value(j, x, y)).collect()
            })
            .collect();
        let values = self
            .values
            .iter()
            .map(|cell| {
                table
                    .iter()
                    .map(|row| row.iter().zip(cell).map(|(t, v)| t * v).sum())
                    .collect()
            })
            .collect();
        Ok(BrokenField { degree: target, values })
    }
}

/// Build hanging-node constraint rows: on every refined edge, the fine-side
/// nodes that are not nodes of the coarse side interpolate the coarse edge's
/// one-dimensional Lagrange basis. Chains (a master that is itself hanging)
/// are resolved by substitution, which terminates because master levels
/// strictly decrease.
fn build_constraints(
    mesh: &SpatialMesh,
    degree: usize,
    key_index: &HashMap<NodeKey, usize>,
) -> Result<HashMap<usize, Vec<(usize, f64)>>> {
    let p = degree as i64;
    let edge_basis = LagrangeBasis::equispaced_unit(degree);
    let mut raw: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();

    for (ci, cell) in mesh.cells().iter().enumerate() {
        for dir in Dir::ALL {
            let neighbors = mesh.edge_neighbors(ci, dir);
            if neighbors.len() != 2 {
                continue; // edge is conforming, coarser-sided, or on the boundary
            }
            // `cell` is the coarse side of a refined edge.
            let s = cell.key.size();
            let step = s / p;
            // Edge anchor and axis: nodes run along the edge in ascending
            // coordinate order, matching the 1-D basis nodes k/p.
            let (anchor, axis): (NodeKey, (i64, i64)) = match dir {
                Dir::East => ((cell.key.x + s, cell.key.y), (0, 1)),
                Dir::West => ((cell.key.x, cell.key.y), (0, 1)),
                Dir::North => ((cell.key.x, cell.key.y + s), (1, 0)),
                Dir::South => ((cell.key.x, cell.key.y), (1, 0)),
            };
            let coarse_nodes: Vec<usize> = (0..=p)
                .map(|k| {
                    key_index[&(anchor.0 + axis.0 * k * step, anchor.1 + axis.1 * k * step)]
                })
                .collect();
            // Fine nodes along the same edge: the two neighbors are one
            // level deeper, so their edge nodes step at half the pitch.
            let fine_step = step / 2;
            for m in 0..=2 * p {
                let key = (
                    anchor.0 + axis.0 * m * fine_step,
                    anchor.1 + axis.1 * m * fine_step,
                );
                if m % 2 == 0 {
                    continue; // coincides with a coarse node
                }
                let dof = key_index[&key];
                let xi = m as f64 / (2 * p) as f64;
                let row: Vec<(usize, f64)> = coarse_nodes
                    .iter()
                    .enumerate()
                    .filter_map(|(k, &master)| {
                        let w = edge_basis.eval(k, xi);
                        (w.abs() > 1e-14).then_some((master, w))
                    })
                    .collect();
                raw.insert(dof, row);
            }
        }
    }

    // Resolve chained constraints.
    loop {
        let mut changed = false;
        let snapshot = raw.clone();
        for row in raw.values_mut() {
            if row.iter().any(|(m, _)| snapshot.contains_key(m)) {
                let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
                for &(m, w) in row.iter() {
                    if let Some(master_row) = snapshot.get(&m) {
                        for &(mm, ww) in master_row {
                            *merged.entry(mm).or_insert(0.0) += w * ww;
                        }
                    } else {
                        *merged.entry(m).or_insert(0.0) += w;
                    }
                }
                *row = merged
                    .into_iter()
                    .filter(|&(_, w)| w.abs() > 1e-14)
                    .collect();
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    Ok(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Rect;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn unit_mesh(nx: usize, ny: usize) -> Arc<SpatialMesh> {
        Arc::new(SpatialMesh::uniform(Rect::unit(), nx, ny).unwrap())
    }

    #[test]
    fn uniform_dof_counts_by_degree() {
        let mesh = unit_mesh(4, 4);
        let q1 = Space::new(mesh.clone(), 1).unwrap();
        assert_eq!(q1.n_nodes(), 25);
        assert_eq!(q1.dimension(), 25);
        assert_eq!(q1.n_fixed(), 16);
        assert_eq!(q1.n_free(), 9);
        assert!(q1.constraints().is_empty());

        let q2 = Space::new(mesh.clone(), 2).unwrap();
        assert_eq!(q2.n_nodes(), 81);
        assert_eq!(q2.n_fixed(), 32);
        assert_eq!(q2.n_free(), 49);

        assert!(Space::new(mesh, 0).is_err());
    }

    #[test]
    fn one_refined_cell_produces_three_hanging_vertices() {
        // Refining a cell with one boundary edge leaves three refined
        // interior edges, each with one hanging midpoint at degree 1.
        let mesh = unit_mesh(4, 4);
        let refined = Arc::new(mesh.refined(&BTreeSet::from([1])).unwrap());
        let space = Space::new(refined, 1).unwrap();
        assert_eq!(space.constraints().len(), 3);
        assert_eq!(space.n_nodes(), 30);
        assert_eq!(space.n_fixed(), 17);
        assert_eq!(space.dimension(), 27);
        for row in space.constraints().values() {
            assert_eq!(row.len(), 2);
            let sum: f64 = row.iter().map(|&(_, w)| w).sum();
            assert_relative_eq!(sum, 1.0, max_relative = 1e-14);
            for &(_, w) in row {
                assert_relative_eq!(w, 0.5, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn quadratic_hanging_weights_on_a_half_edge() {
        // Left cell of a 2×1 mesh refined: the right cell's west edge is
        // split, constraining the fine nodes at edge parameters 1/4 and 3/4
        // to the three coarse-edge basis values there.
        let mesh = unit_mesh(2, 1);
        let refined = Arc::new(mesh.refined(&BTreeSet::from([0])).unwrap());
        let space = Space::new(refined, 2).unwrap();
        assert_eq!(space.constraints().len(), 2);

        let mut rows: Vec<(f64, Vec<f64>)> = space
            .constraints()
            .iter()
            .map(|(&h, row)| {
                let (_, y) = space.node_position(h);
                let mut by_master = row.clone();
                by_master.sort_by_key(|&(m, _)| space.node_key(m).1);
                (y, by_master.into_iter().map(|(_, w)| w).collect())
            })
            .collect();
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

        // Parameter 1/4 (lower node): weights of the coarse edge basis.
        assert_abs_diff_eq!(rows[0].1[0], 0.375, epsilon = 1e-14);
        assert_abs_diff_eq!(rows[0].1[1], 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(rows[0].1[2], -0.125, epsilon = 1e-14);
        // Parameter 3/4 mirrors it.
        assert_abs_diff_eq!(rows[1].1[0], -0.125, epsilon = 1e-14);
        assert_abs_diff_eq!(rows[1].1[1], 0.75, epsilon = 1e-14);
        assert_abs_diff_eq!(rows[1].1[2], 0.375, epsilon = 1e-14);
        for (_, weights) in &rows {
            assert_relative_eq!(weights.iter().sum::<f64>(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn uniform_meshes_have_no_constraints() {
        for degree in 1..=3 {
            let space = Space::new(unit_mesh(3, 3), degree).unwrap();
            assert!(space.constraints().is_empty());
        }
    }

    #[test]
    fn constraints_reproduce_polynomials_of_matching_degree() {
        // Interpolating a global polynomial of total degree ≤ p and then
        // distributing the hanging nodes must reproduce its nodal values.
        let base = unit_mesh(2, 2);
        let refined = Arc::new(base.refined(&BTreeSet::from([0, 3])).unwrap());
        let deeper = {
            let idx = refined
                .cells()
                .iter()
                .position(|c| c.key.level == 1 && c.key.x == 0 && c.key.y == 0)
                .unwrap();
            Arc::new(refined.refined(&BTreeSet::from([idx])).unwrap())
        };
        let polys: [(usize, Box<dyn Fn(f64, f64) -> f64>); 3] = [
            (1, Box::new(|x, y| 2.0 * x - 3.0 * y + 1.0)),
            (2, Box::new(|x, y| x * x - 2.0 * x * y + 0.5 * y * y + x - 1.0)),
            (3, Box::new(|x, y| x * x * x - x * x * y + 2.0 * y * y - 0.25)),
        ];
        for (degree, f) in &polys {
            let space = Space::new(deeper.clone(), *degree).unwrap();
            assert!(!space.constraints().is_empty());
            let field = space.interpolate(f);
            for dof in 0..space.n_nodes() {
                let (x, y) = space.node_position(dof);
                assert_abs_diff_eq!(field[dof], f(x, y), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fields_are_continuous_across_hanging_edges() {
        // A conforming field with random nodal values must evaluate equally
        // from both sides of every refined edge.
        let base = unit_mesh(2, 2);
        let refined = Arc::new(base.refined(&BTreeSet::from([1, 2])).unwrap());
        for degree in 1..=3 {
            let space = Space::new(refined.clone(), degree).unwrap();
            let mut field: Vec<f64> = (0..space.n_nodes())
                .map(|i| ((i * 2654435761) % 1000) as f64 / 317.0 - 1.2)
                .collect();
            space.distribute(&mut field);

            for (ci, cell) in refined.cells().iter().enumerate() {
                for dir in Dir::ALL {
                    let neighbors = refined.edge_neighbors(ci, dir);
                    if neighbors.len() != 2 {
                        continue;
                    }
                    for &nb in &neighbors {
                        let nk = refined.cell(nb).key;
                        for step in 1..5 {
                            let u = step as f64 / 5.0; // parameter on the fine edge
                            // Point in fine-cell reference coordinates, on
                            // the edge facing the coarse cell.
                            let (fxr, fyr) = match dir {
                                Dir::East => (0.0, u),
                                Dir::West => (1.0, u),
                                Dir::North => (u, 0.0),
                                Dir::South => (u, 1.0),
                            };
                            // Same physical point in coarse reference coords.
                            let s = cell.key.size() as f64;
                            let fx = nk.x as f64 + fxr * nk.size() as f64;
                            let fy = nk.y as f64 + fyr * nk.size() as f64;
                            let cxr = (fx - cell.key.x as f64) / s;
                            let cyr = (fy - cell.key.y as f64) / s;
                            let coarse = space.eval_in_cell(&field, ci, cxr, cyr);
                            let fine = space.eval_in_cell(&field, nb, fxr, fyr);
                            assert_abs_diff_eq!(coarse, fine, epsilon = 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn restriction_examples_on_the_reference_cell() {
        let mesh = unit_mesh(1, 1);
        let space = Space::new(mesh, 2).unwrap();

        // Constants restrict to themselves.
        let constant = space.to_broken(&vec![3.25; space.n_nodes()]);
        let down = constant.restricted(1).unwrap();
        for v in down.cell(0) {
            assert_relative_eq!(*v, 3.25, max_relative = 1e-14);
        }

        // The edge bubble x(1-x) vanishes at all four corners.
        let bubble = space.interpolate(|x, _| x * (1.0 - x));
        let down = space.to_broken(&bubble).restricted(1).unwrap();
        for v in down.cell(0) {
            assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-14);
        }

        // The bilinear xy is reproduced exactly.
        let xy = space.interpolate(|x, y| x * y);
        let down = space.to_broken(&xy).restricted(1).unwrap();
        let shapes = RefShapes::new(1);
        for &(x, y) in &[(0.3, 0.7), (0.5, 0.5), (1.0, 0.25)] {
            assert_relative_eq!(
                down.eval_in_cell(&shapes, 0, x, y),
                x * y,
                max_relative = 1e-13
            );
        }

        // Invalid target degrees are rejected.
        assert!(space.to_broken(&bubble).restricted(2).is_err());
        assert!(space.to_broken(&bubble).restricted(5).is_err());
    }

    #[test]
    fn restriction_is_idempotent_after_reembedding() {
        let mesh = unit_mesh(2, 2);
        let space = Space::new(mesh, 3).unwrap();
        let field = space.interpolate(|x, y| (3.0 * x).sin() * (2.0 * y).cos());
        let broken = space.to_broken(&field);
        let once = broken.restricted(1).unwrap();
        // Re-embed the degree-1 result in the degree-3 nodal basis.
        let shapes1 = RefShapes::new(1);
        let shapes3 = RefShapes::new(3);
        let re = BrokenField::new(
            3,
            (0..once.n_cells())
                .map(|c| {
                    (0..shapes3.n_local())
                        .map(|j| {
                            let (x, y) = shapes3.node(j);
                            once.eval_in_cell(&shapes1, c, x, y)
                        })
                        .collect()
                })
                .collect(),
        );
        let twice = re.restricted(1).unwrap();
        for c in 0..once.n_cells() {
            for (a, b) in once.cell(c).iter().zip(twice.cell(c)) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn transfer_between_meshes_preserves_shared_polynomials() {
        let coarse_mesh = unit_mesh(2, 2);
        let fine_mesh = Arc::new(coarse_mesh.refined(&BTreeSet::from([0, 2])).unwrap());
        let f = |x: f64, y: f64| 2.0 * x - 3.0 * y + 0.75;

        let coarse = Space::new(coarse_mesh, 1).unwrap();
        let fine = Space::new(fine_mesh, 1).unwrap();

        let on_coarse = coarse.interpolate(f);
        let moved = fine.interpolate_from(&coarse, &on_coarse);
        for dof in 0..fine.n_nodes() {
            let (x, y) = fine.node_position(dof);
            assert_abs_diff_eq!(moved[dof], f(x, y), epsilon = 1e-13);
        }

        // And back: coarse nodes are a subset of fine nodes.
        let back = coarse.interpolate_from(&fine, &moved);
        for (a, b) in back.iter().zip(&on_coarse) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn matrix_reduction_routes_weights_to_free_and_fixed_blocks() {
        let mesh = unit_mesh(2, 2);
        let refined = Arc::new(mesh.refined(&BTreeSet::from([0])).unwrap());
        let space = Space::new(refined, 1).unwrap();
        // Pick a hanging dof and one of its masters.
        let (&h, row) = space.constraints().iter().next().unwrap();
        let masters: Vec<(usize, f64)> = row.clone();
        // A matrix with a single unit entry at (h, h) reduces to the outer
        // product of the constraint weights, split by master class.
        let (ff, fd) = space.reduce_matrix(&[(h, h, 1.0)]);
        let mut total = 0.0;
        for (_, _, v) in ff.entries() {
            total += v;
        }
        for (_, _, v) in fd.entries() {
            total += v;
        }
        // Σ_{a,b} w_a w_b = (Σ w)² = 1, and fixed-row contributions are
        // dropped (test functions are free), so the retained mass is
        // Σ_{a free} w_a · Σ_b w_b = Σ_{a free} w_a.
        let free_weight: f64 = masters
            .iter()
            .filter(|&&(m, _)| space.class(m) == DofClass::Free)
            .map(|&(_, w)| w)
            .sum();
        assert_relative_eq!(total, free_weight, max_relative = 1e-13);

        // Vector reduction gathers hanging contributions into the masters.
        let mut full = vec![0.0; space.n_nodes()];
        full[h] = 2.0;
        let reduced = space.reduce_vector(&full);
        let sum: f64 = reduced.iter().sum();
        assert_relative_eq!(sum, 2.0 * free_weight, max_relative = 1e-13);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        /// Hanging-edge continuity holds on randomly refined meshes for all
        /// supported degrees.
        #[test]
        fn random_meshes_stay_continuous(
            marks in prop::collection::vec(0usize..32, 1..4),
            degree in 1usize..4,
        ) {
            let mut mesh = unit_mesh(2, 2);
            for (round, &m) in marks.iter().enumerate() {
                let idx = (m * (round + 2) + round) % mesh.n_cells();
                mesh = Arc::new(mesh.refined(&BTreeSet::from([idx])).unwrap());
            }
            let space = Space::new(mesh.clone(), degree).unwrap();
            let mut field: Vec<f64> = (0..space.n_nodes())
                .map(|i| ((i * 1103515245 + 12345) % 2048) as f64 / 400.0 - 2.5)
                .collect();
            space.distribute(&mut field);

            for (ci, cell) in mesh.cells().iter().enumerate() {
                for dir in Dir::ALL {
                    let neighbors = mesh.edge_neighbors(ci, dir);
                    if neighbors.len() != 2 { continue; }
                    for &nb in &neighbors {
                        let nk = mesh.cell(nb).key;
                        for step in 1..4 {
                            let u = step as f64 / 4.0;
                            let (fxr, fyr) = match dir {
                                Dir::East => (0.0, u),
                                Dir::West => (1.0, u),
                                Dir::North => (u, 0.0),
                                Dir::South => (u, 1.0),
                            };
                            let s = cell.key.size() as f64;
                            let fx = nk.x as f64 + fxr * nk.size() as f64;
                            let fy = nk.y as f64 + fyr * nk.size() as f64;
                            let cxr = (fx - cell.key.x as f64) / s;
                            let cyr = (fy - cell.key.y as f64) / s;
                            let coarse = space.eval_in_cell(&field, ci, cxr, cyr);
                            let fine = space.eval_in_cell(&field, nb, fxr, fyr);
                            prop_assert!((coarse - fine).abs() < 1e-11);
                        }
                    }
                }
            }
        }
    }
}
