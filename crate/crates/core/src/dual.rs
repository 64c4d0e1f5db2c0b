//! Backward-in-time solve of the adjoint problem in enriched spaces. The
//! problem is linear, so the adjoint slab operator is the transpose of the
//! stabilized primal block operator, assembled here in the (richer) dual
//! spaces. The goal functional's derivative drives the right-hand side and
//! slabs couple backward through the transposed jump term.

use std::cell::RefCell;
use std::sync::Arc;

use crate::primal::{
    assemble_spatial, build_block_matrix, solve_slab, temporal_coupling, Coefficients, QuadSpec,
    SlabSystem, TemporalCoupling, Trajectory,
};
use crate::problem::{GoalKind, Problem};
use crate::quadrature::{gauss_legendre, LagrangeBasis};
use crate::sparse::CsrMatrix;
use crate::space::Space;
use crate::time::{gauss_rule_on, SlabPoly, TimePartition};
use crate::{Error, Result};

/// Pointwise space-time density. The assembly passes the active cell and
/// reference coordinates along so densities built from discrete fields on
/// the same mesh can evaluate without point location; analytic closures
/// ignore them.
pub trait SpaceTimeDensity {
    fn at(&self, x: f64, y: f64, t: f64, cell: usize, xr: f64, yr: f64) -> f64;
}

impl<F: Fn(f64, f64, f64) -> f64> SpaceTimeDensity for F {
    fn at(&self, x: f64, y: f64, t: f64, _: usize, _: f64, _: f64) -> f64 {
        self(x, y, t)
    }
}

/// Pointwise spatial density at a fixed time, with the same cell-aware
/// interface as [`SpaceTimeDensity`].
pub trait SpatialDensity {
    fn at(&self, x: f64, y: f64, cell: usize, xr: f64, yr: f64) -> f64;
}

impl<F: Fn(f64, f64) -> f64> SpatialDensity for F {
    fn at(&self, x: f64, y: f64, _: usize, _: f64, _: f64) -> f64 {
        self(x, y)
    }
}

/// A space-time density frozen at one time.
struct AtTime<'a> {
    density: &'a dyn SpaceTimeDensity,
    t: f64,
}

impl SpatialDensity for AtTime<'_> {
    fn at(&self, x: f64, y: f64, cell: usize, xr: f64, yr: f64) -> f64 {
        self.density.at(x, y, self.t, cell, xr, yr)
    }
}

/// Spatial functional (density, φ_i) for every node i of the space.
pub fn spatial_functional(space: &Space, n_qp: usize, density: &dyn SpatialDensity) -> Vec<f64> {
    let (qx, qw) = gauss_legendre(n_qp);
    let shapes = space.shapes();
    let n_local = shapes.n_local();
    let mut out = vec![0.0; space.n_nodes()];
    for (ci, cell) in space.mesh().cells().iter().enumerate() {
        let (w, h) = (cell.rect.width(), cell.rect.height());
        let jac = w * h;
        let dofs = space.cell_dofs(ci);
        for (ix, &xr) in qx.iter().enumerate() {
            for (iy, &yr) in qx.iter().enumerate() {
                let wq = qw[ix] * qw[iy] * jac;
                let d = density.at(cell.rect.x0 + xr * w, cell.rect.y0 + yr * h, ci, xr, yr);
                for i in 0..n_local {
                    out[dofs[i]] += wq * d * shapes.value(i, xr, yr);
                }
            }
        }
    }
    out
}

/// ∫_Ω d² for a cell-aware pointwise density.
fn spatial_l2_sq(space: &Space, n_qp: usize, density: &dyn SpatialDensity) -> f64 {
    let (qx, qw) = gauss_legendre(n_qp);
    let mut total = 0.0;
    for (ci, cell) in space.mesh().cells().iter().enumerate() {
        let (w, h) = (cell.rect.width(), cell.rect.height());
        for (ix, &xr) in qx.iter().enumerate() {
            for (iy, &yr) in qx.iter().enumerate() {
                let x = cell.rect.x0 + xr * w;
                let y = cell.rect.y0 + yr * h;
                let d = density.at(x, y, ci, xr, yr);
                total += qw[ix] * qw[iy] * w * h * d * d;
            }
        }
    }
    total
}

/// Adapts a cell-aware closure to the [`SpatialDensity`] trait (the blanket
/// impl covers only the plain (x, y) signature).
struct CellAware<'a>(&'a dyn Fn(f64, f64, usize, f64, f64) -> f64);

impl SpatialDensity for CellAware<'_> {
    fn at(&self, x: f64, y: f64, cell: usize, xr: f64, yr: f64) -> f64 {
        (self.0)(x, y, cell, xr, yr)
    }
}

fn wrap2<'a>(f: &'a dyn Fn(f64, f64, usize, f64, f64) -> f64) -> CellAware<'a> {
    CellAware(f)
}

/// The exactly computable goal error J(u) − J(u_τh) of the normalized
/// benchmark goals: the L² norm of the error over the space-time cylinder
/// (space-time goal) or over the domain at the final time (terminal goal).
pub fn goal_error(kind: GoalKind, problem: &Problem, u: &Trajectory, quad: QuadSpec) -> f64 {
    match kind {
        GoalKind::SpaceTimeError => {
            let mut total = 0.0;
            for n in 0..u.n_slabs() {
                let span = u.partition.span(n);
                let (tq, tw) = gauss_rule_on(span, quad.time_points);
                for (&t, &wt) in tq.iter().zip(&tw) {
                    let full = u.slabs[n].eval(t);
                    let space = &u.spaces[n];
                    let density = |x: f64, y: f64, ci: usize, xr: f64, yr: f64| {
                        problem.exact(x, y, t) - space.eval_in_cell(&full, ci, xr, yr)
                    };
                    total += wt * spatial_l2_sq(space, quad.space_points, &wrap2(&density));
                }
            }
            total.sqrt()
        }
        GoalKind::FinalTimeError => {
            let t_end = u.partition.final_time();
            let last = u.n_slabs() - 1;
            let full = u.end_value(last);
            let space = &u.spaces[last];
            let density = |x: f64, y: f64, ci: usize, xr: f64, yr: f64| {
                problem.exact(x, y, t_end) - space.eval_in_cell(&full, ci, xr, yr)
            };
            spatial_l2_sq(space, quad.space_points, &wrap2(&density)).sqrt()
        }
    }
}

/// Per-mesh spatial data for the backward sweep: the transposed reduced
/// operators for the slab blocks and the transposed full weighted mass
/// matrix for the jump coupling.
struct DualOps {
    key: usize,
    mbar_t: CsrMatrix,
    mbar_ff_t: CsrMatrix,
    afull_ff_t: CsrMatrix,
}

/// Block system matrix of one dual slab: the transpose of the primal slab
/// operator on the same space and span. Callers supply the transposed
/// spatial operators; the temporal derivative indices are swapped here,
/// while the temporal mass matrix and the endpoint trace product
/// ψ_l(t)ψ_k(t) are symmetric and carry over unchanged.
pub fn dual_block_matrix(
    mbar_ff_t: &CsrMatrix,
    afull_ff_t: &CsrMatrix,
    coupling: &TemporalCoupling,
) -> CsrMatrix {
    let m = coupling.nodes.len();
    let mut stiff_t = vec![vec![0.0; m]; m];
    for l in 0..m {
        for k in 0..m {
            stiff_t[l][k] = coupling.stiff[k][l];
        }
    }
    let transposed = TemporalCoupling {
        stiff: stiff_t,
        mass: coupling.mass.clone(),
        left: coupling.left.clone(),
        nodes: coupling.nodes.clone(),
    };
    build_block_matrix(mbar_ff_t, afull_ff_t, &transposed)
}

/// Backward sweep driven by explicit goal densities: `volume` is the
/// space-time density of the goal derivative (None for purely terminal
/// goals), `terminal` the density paired with the solution's final-time
/// left limit (applied on the last slab only). Dual boundary conditions
/// are homogeneous.
pub fn solve_dual_raw(
    partition: &TimePartition,
    spaces: &[Arc<Space>],
    coeffs: Coefficients,
    s: usize,
    quad: QuadSpec,
    volume: Option<&dyn SpaceTimeDensity>,
    terminal: Option<&dyn SpatialDensity>,
) -> Result<Trajectory> {
    let n_slabs = partition.n_slabs();
    if spaces.len() != n_slabs {
        return Err(Error::InvalidInput(format!(
            "{} spaces provided for {} slabs",
            spaces.len(),
            n_slabs
        )));
    }

    let mut slabs_rev: Vec<SlabPoly> = Vec::with_capacity(n_slabs);
    let mut z_incoming: Option<Vec<f64>> = None;
    let mut ops_cache: Option<DualOps> = None;
    let m = s + 1;

    for n in (0..n_slabs).rev() {
        let space = &spaces[n];
        let key = Arc::as_ptr(space) as usize;
        let ops = match &ops_cache {
            Some(ops) if ops.key == key => ops,
            _ => {
                let fresh = assemble_spatial(space, coeffs, quad.space_points);
                ops_cache = Some(DualOps {
                    key,
                    mbar_t: fresh.mbar.transposed(),
                    mbar_ff_t: fresh.mbar_ff.transposed(),
                    afull_ff_t: fresh.afull_ff.transposed(),
                });
                ops_cache.as_ref().unwrap()
            }
        };

        let span = partition.span(n);
        let coupling = temporal_coupling(span, s, quad.time_points);
        let basis = LagrangeBasis::new(coupling.nodes.clone());
        let nf = space.n_free();
        let matrix = dual_block_matrix(&ops.mbar_ff_t, &ops.afull_ff_t, &coupling);

        let mut rhs = vec![0.0; m * nf];

        if let Some(density) = volume {
            let (tq, tw) = gauss_rule_on(span, quad.time_points);
            for (&t, &wt) in tq.iter().zip(&tw) {
                let frozen = AtTime { density, t };
                let func = spatial_functional(space, quad.space_points, &frozen);
                let func_free = space.reduce_vector(&func);
                let psi = basis.eval_all(t);
                for k in 0..m {
                    let c = wt * psi[k];
                    for i in 0..nf {
                        rhs[k * nf + i] += c * func_free[i];
                    }
                }
            }
        }

        if n == n_slabs - 1 {
            if let Some(density) = terminal {
                let func = spatial_functional(space, quad.space_points, density);
                let func_free = space.reduce_vector(&func);
                let psi = basis.eval_all(span.1);
                for k in 0..m {
                    for i in 0..nf {
                        rhs[k * nf + i] += psi[k] * func_free[i];
                    }
                }
            }
        }

        // Transposed jump coupling: the next slab's left limit z⁺ enters
        // against ψ_k evaluated at this slab's right endpoint, through this
        // slab's own (transposed) weighted mass matrix.
        if let Some(z_plus) = &z_incoming {
            let z_here = if Arc::ptr_eq(&spaces[n + 1], space) {
                z_plus.clone()
            } else {
                space.interpolate_from(&spaces[n + 1], z_plus)
            };
            let mv = ops.mbar_t.matvec(&z_here);
            let mv_free = space.reduce_vector(&mv);
            let psi = basis.eval_all(span.1);
            for k in 0..m {
                for i in 0..nf {
                    rhs[k * nf + i] += psi[k] * mv_free[i];
                }
            }
        }

        let sys = SlabSystem {
            slab: n,
            matrix,
            rhs,
            t_nodes: coupling.nodes.clone(),
            fixed_blocks: vec![vec![0.0; space.n_fixed()]; m],
        };
        let blocks = solve_slab(space, &sys)?;
        let poly = SlabPoly::from_nodes(span, sys.t_nodes, blocks);
        z_incoming = Some(poly.limits().0);
        slabs_rev.push(poly);
    }

    slabs_rev.reverse();
    let initial = slabs_rev[0].limits().0;
    Ok(Trajectory {
        partition: partition.clone(),
        spaces: spaces.to_vec(),
        initial,
        slabs: slabs_rev,
    })
}

/// Normalized trajectory mismatch (u − u_τh)/‖e‖ as a space-time density.
/// The discrete field is evaluated once per quadrature time and reused for
/// every spatial point at that time.
struct TrajectoryMismatch<'a> {
    problem: &'a Problem,
    u: &'a Trajectory,
    inv_norm: f64,
    cache: RefCell<Option<(u64, usize, Vec<f64>)>>,
}

impl SpaceTimeDensity for TrajectoryMismatch<'_> {
    fn at(&self, x: f64, y: f64, t: f64, cell: usize, xr: f64, yr: f64) -> f64 {
        let mut cache = self.cache.borrow_mut();
        let stale = match &*cache {
            Some((bits, _, _)) => *bits != t.to_bits(),
            None => true,
        };
        if stale {
            let n = self.u.locate(t);
            *cache = Some((t.to_bits(), n, self.u.slabs[n].eval(t)));
        }
        let (_, n, full) = cache.as_ref().unwrap();
        let approx = self.u.spaces[*n].eval_in_cell(full, cell, xr, yr);
        self.inv_norm * (self.problem.exact(x, y, t) - approx)
    }
}

/// Normalized final-time mismatch (u(·,T) − u_τh(T⁻))/‖e_N‖ as a spatial
/// density.
struct TerminalMismatch<'a> {
    problem: &'a Problem,
    space: &'a Space,
    t_end: f64,
    full: Vec<f64>,
    inv_norm: f64,
}

impl SpatialDensity for TerminalMismatch<'_> {
    fn at(&self, x: f64, y: f64, cell: usize, xr: f64, yr: f64) -> f64 {
        let approx = self.space.eval_in_cell(&self.full, cell, xr, yr);
        self.inv_norm * (self.problem.exact(x, y, self.t_end) - approx)
    }
}

/// Backward solve for a benchmark goal: the density is the normalized error
/// e/‖e‖ of the given primal trajectory (space-time for the L²(Q) goal, at
/// the final time for the terminal goal). A vanishing normalization means
/// the goal is already exact; the dual is then identically zero. Each dual
/// space must live on the same mesh as the primal space of its slab so that
/// densities and, later, estimator weights transfer cell by cell.
pub fn solve_dual(
    problem: &Problem,
    u: &Trajectory,
    spaces: &[Arc<Space>],
    kind: GoalKind,
    s: usize,
    quad: QuadSpec,
) -> Result<Trajectory> {
    if spaces.len() != u.n_slabs() {
        return Err(Error::InvalidInput(format!(
            "{} dual spaces provided for {} slabs",
            spaces.len(),
            u.n_slabs()
        )));
    }
    for (n, sp) in spaces.iter().enumerate() {
        if !Arc::ptr_eq(sp.mesh(), u.spaces[n].mesh()) {
            return Err(Error::InvalidInput(format!(
                "dual space on slab {n} does not share the primal mesh"
            )));
        }
    }
    let norm = goal_error(kind, problem, u, quad);
    let inv_norm = if norm > 0.0 { 1.0 / norm } else { 0.0 };
    let coeffs = Coefficients::from(problem);

    match kind {
        GoalKind::SpaceTimeError => {
            let density = TrajectoryMismatch {
                problem,
                u,
                inv_norm,
                cache: RefCell::new(None),
            };
            solve_dual_raw(&u.partition, spaces, coeffs, s, quad, Some(&density), None)
        }
        GoalKind::FinalTimeError => {
            let last = u.n_slabs() - 1;
            let density = TerminalMismatch {
                problem,
                space: &u.spaces[last],
                t_end: u.partition.final_time(),
                full: u.end_value(last),
                inv_norm,
            };
            solve_dual_raw(&u.partition, spaces, coeffs, s, quad, None, Some(&density))
        }
    }
}
