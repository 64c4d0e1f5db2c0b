//! Forward-in-time solver for the stabilized space-time scheme: on each slab
//! I_n the trial function is a tensor product of a spatial nodal basis and a
//! temporal Lagrange basis (discontinuous across slab boundaries), coupled to
//! the previous slab through an upwind jump term. Streamline-diffusion (SUPG)
//! stabilization tests the strong residual against δ_K·b·∇φ.

use std::sync::Arc;

use crate::mesh::Cell;
use crate::problem::Problem;
use crate::quadrature::gauss_legendre;
use crate::space::Space;
use crate::sparse::{solve_lu, CsrMatrix};
use crate::time::{gauss_rule_on, SlabPoly, TimePartition};
use crate::{Error, Result};

/// Data function of space and time, used for forcing and boundary values.
pub type SpaceTimeFn<'a> = &'a dyn Fn(f64, f64, f64) -> f64;

/// Quadrature point counts shared by assembly, dual solve, and error
/// estimation. Using one rule everywhere makes the discrete Galerkin
/// orthogonality of the solved system carry over exactly to the residual
/// functionals evaluated later.
#[derive(Debug, Clone, Copy)]
pub struct QuadSpec {
    /// Gauss points per spatial direction on each cell.
    pub space_points: usize,
    /// Gauss points per slab in time.
    pub time_points: usize,
}

impl QuadSpec {
    /// Rule covering both the solution spaces (p, r) and the weight spaces
    /// (q, s): p+q+2 points per spatial direction, max(r,s)+2 in time.
    pub fn unified(p: usize, r: usize, q: usize, s: usize) -> Self {
        QuadSpec {
            space_points: p + q + 2,
            time_points: r.max(s) + 2,
        }
    }

    /// Rule for a standalone solve in the spaces (p, r) only.
    pub fn primal(p: usize, r: usize) -> Self {
        QuadSpec {
            space_points: p + 2,
            time_points: r + 2,
        }
    }
}

/// PDE coefficients seen by the assembly (the equation is
/// ∂_t u − ε∆u + b·∇u + αu = f).
#[derive(Debug, Clone, Copy)]
pub struct Coefficients {
    pub epsilon: f64,
    pub convection: (f64, f64),
    pub reaction: f64,
    /// Stabilization scale δ₀; the per-cell parameter is δ_K = δ₀·h_K.
    pub delta0: f64,
}

impl From<&Problem> for Coefficients {
    fn from(p: &Problem) -> Self {
        Coefficients {
            epsilon: p.epsilon,
            convection: p.convection,
            reaction: p.reaction,
            delta0: p.delta0,
        }
    }
}

/// Per-cell stabilization parameter δ_K = δ₀·h_K (h_K = cell diameter).
pub fn supg_parameter(cell: &Cell, delta0: f64) -> f64 {
    delta0 * cell.diameter()
}

/// Spatial operators of one slab, assembled on the full DoF set and reduced
/// to free unknowns (ff) with the Dirichlet coupling split off (fd):
/// `mbar` = mass + streamline mass (multiplies time derivatives and jumps),
/// `afull` = ε·stiffness + convection + reaction·mass + all streamline terms
/// of the stationary operator.
pub struct SpatialOps {
    pub mbar: CsrMatrix,
    pub afull: CsrMatrix,
    pub mbar_ff: CsrMatrix,
    pub mbar_fd: CsrMatrix,
    pub afull_ff: CsrMatrix,
    pub afull_fd: CsrMatrix,
}

/// Assembles the spatial operators with `n_qp`² Gauss points per cell.
pub fn assemble_spatial(space: &Space, coeffs: Coefficients, n_qp: usize) -> SpatialOps {
    let (qx, qw) = gauss_legendre(n_qp);
    let shapes = space.shapes();
    let n_local = shapes.n_local();
    let (bx, by) = coeffs.convection;
    let dim = space.n_nodes();

    let mut mbar_t: Vec<(usize, usize, f64)> = Vec::new();
    let mut afull_t: Vec<(usize, usize, f64)> = Vec::new();

    let mut vals = vec![0.0; n_local];
    let mut gradx = vec![0.0; n_local];
    let mut grady = vec![0.0; n_local];
    let mut lap = vec![0.0; n_local];

    for (ci, cell) in space.mesh().cells().iter().enumerate() {
        let w = cell.rect.width();
        let h = cell.rect.height();
        let jac = w * h;
        let delta = supg_parameter(cell, coeffs.delta0);
        let dofs = space.cell_dofs(ci);
        let mut mbar_loc = vec![0.0; n_local * n_local];
        let mut afull_loc = vec![0.0; n_local * n_local];

        for (ix, &xr) in qx.iter().enumerate() {
            for (iy, &yr) in qx.iter().enumerate() {
                let wq = qw[ix] * qw[iy] * jac;
                for j in 0..n_local {
                    vals[j] = shapes.value(j, xr, yr);
                    let (gx, gy) = shapes.grad(j, xr, yr);
                    gradx[j] = gx / w;
                    grady[j] = gy / h;
                    let (sxx, syy) = shapes.second(j, xr, yr);
                    lap[j] = sxx / (w * w) + syy / (h * h);
                }
                for i in 0..n_local {
                    let stream_i = bx * gradx[i] + by * grady[i];
                    for j in 0..n_local {
                        let stream_j = bx * gradx[j] + by * grady[j];
                        let mass = vals[j] * vals[i];
                        let stiff = gradx[j] * gradx[i] + grady[j] * grady[i];
                        let conv = stream_j * vals[i];
                        let s_m = delta * vals[j] * stream_i;
                        let s_c = delta * stream_j * stream_i;
                        let s_d = delta * (-coeffs.epsilon * lap[j]) * stream_i;
                        mbar_loc[i * n_local + j] += wq * (mass + s_m);
                        afull_loc[i * n_local + j] += wq * (coeffs.epsilon * stiff
                            + conv
                            + coeffs.reaction * (mass + s_m)
                            + s_c
                            + s_d);
                    }
                }
            }
        }

        for i in 0..n_local {
            for j in 0..n_local {
                let (gi, gj) = (dofs[i], dofs[j]);
                mbar_t.push((gi, gj, mbar_loc[i * n_local + j]));
                afull_t.push((gi, gj, afull_loc[i * n_local + j]));
            }
        }
    }

    let (mbar_ff, mbar_fd) = space.reduce_matrix(&mbar_t);
    let (afull_ff, afull_fd) = space.reduce_matrix(&afull_t);
    SpatialOps {
        mbar: CsrMatrix::from_triplets(dim, dim, &mbar_t),
        afull: CsrMatrix::from_triplets(dim, dim, &afull_t),
        mbar_ff,
        mbar_fd,
        afull_ff,
        afull_fd,
    }
}

/// Functional vector F_i = Σ_K ∫_K f(·,t)·(φ_i + δ_K b·∇φ_i) on the full
/// DoF set (the SUPG-modified load at one time).
pub fn assemble_forcing(
    space: &Space,
    coeffs: Coefficients,
    n_qp: usize,
    f: SpaceTimeFn,
    t: f64,
) -> Vec<f64> {
    let (qx, qw) = gauss_legendre(n_qp);
    let shapes = space.shapes();
    let n_local = shapes.n_local();
    let (bx, by) = coeffs.convection;
    let mut out = vec![0.0; space.n_nodes()];

    for (ci, cell) in space.mesh().cells().iter().enumerate() {
        let w = cell.rect.width();
        let h = cell.rect.height();
        let jac = w * h;
        let delta = supg_parameter(cell, coeffs.delta0);
        let dofs = space.cell_dofs(ci);
        for (ix, &xr) in qx.iter().enumerate() {
            for (iy, &yr) in qx.iter().enumerate() {
                let wq = qw[ix] * qw[iy] * jac;
                let x = cell.rect.x0 + xr * w;
                let y = cell.rect.y0 + yr * h;
                let fv = f(x, y, t);
                for i in 0..n_local {
                    let (gx, gy) = shapes.grad(i, xr, yr);
                    let stream = bx * gx / w + by * gy / h;
                    out[dofs[i]] += wq * fv * (shapes.value(i, xr, yr) + delta * stream);
                }
            }
        }
    }
    out
}

/// Temporal coupling data of one slab for polynomial degree `r`:
/// `stiff[l][k]` = ∫ ψ_k' ψ_l, `mass[l][k]` = ∫ ψ_k ψ_l, and `left[k]` =
/// ψ_k at the slab's left endpoint, for the Lagrange basis on `r+1` Gauss
/// nodes. `n_tq` Gauss points integrate both products exactly when
/// `n_tq ≥ r+1`.
pub struct TemporalCoupling {
    pub stiff: Vec<Vec<f64>>,
    pub mass: Vec<Vec<f64>>,
    pub left: Vec<f64>,
    pub nodes: Vec<f64>,
}

pub fn temporal_coupling(span: (f64, f64), r: usize, n_tq: usize) -> TemporalCoupling {
    let nodes = crate::time::gauss_nodes_on(span, r + 1);
    let basis = crate::quadrature::LagrangeBasis::new(nodes.clone());
    let (tq, tw) = gauss_rule_on(span, n_tq);
    let m = r + 1;
    let mut stiff = vec![vec![0.0; m]; m];
    let mut mass = vec![vec![0.0; m]; m];
    for (&t, &w) in tq.iter().zip(&tw) {
        let v = basis.eval_all(t);
        let d = basis.deriv_all(t);
        for l in 0..m {
            for k in 0..m {
                stiff[l][k] += w * d[k] * v[l];
                mass[l][k] += w * v[k] * v[l];
            }
        }
    }
    let left = basis.eval_all(span.0);
    TemporalCoupling {
        stiff,
        mass,
        left,
        nodes,
    }
}

/// Assembles the coupled block matrix of one slab over free unknowns:
/// Block(l,k) = (stiff[l][k] + left[l]·left[k])·Mbar + mass[l][k]·Afull,
/// where l indexes test and k trial temporal basis functions.
pub fn build_block_matrix(
    mbar_ff: &CsrMatrix,
    afull_ff: &CsrMatrix,
    coupling: &TemporalCoupling,
) -> CsrMatrix {
    let m = coupling.left.len();
    let nf = mbar_ff.nrows();
    let mut triplets = Vec::with_capacity(m * m * (mbar_ff.nnz() + afull_ff.nnz()));
    for l in 0..m {
        for k in 0..m {
            let cm = coupling.stiff[l][k] + coupling.left[l] * coupling.left[k];
            let ca = coupling.mass[l][k];
            if cm != 0.0 {
                for (i, j, v) in mbar_ff.entries() {
                    triplets.push((l * nf + i, k * nf + j, cm * v));
                }
            }
            if ca != 0.0 {
                for (i, j, v) in afull_ff.entries() {
                    triplets.push((l * nf + i, k * nf + j, ca * v));
                }
            }
        }
    }
    CsrMatrix::from_triplets(m * nf, m * nf, &triplets)
}

/// One slab's linear system over free unknowns, plus the boundary values at
/// the temporal nodes needed to complete the solution blocks.
pub struct SlabSystem {
    pub slab: usize,
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub t_nodes: Vec<f64>,
    pub fixed_blocks: Vec<Vec<f64>>,
}

/// Assembles the system of slab `slab` on `span`. `u_prev_full` is the end
/// value of the previous slab (or the interpolated initial value for the
/// first slab) as a full-DoF vector on this slab's space.
#[allow(clippy::too_many_arguments)]
pub fn assemble_slab(
    slab: usize,
    span: (f64, f64),
    space: &Space,
    ops: &SpatialOps,
    coeffs: Coefficients,
    f: SpaceTimeFn,
    g: SpaceTimeFn,
    r: usize,
    quad: QuadSpec,
    u_prev_full: &[f64],
) -> SlabSystem {
    let coupling = temporal_coupling(span, r, quad.time_points);
    let m = r + 1;
    let nf = space.n_free();
    let matrix = build_block_matrix(&ops.mbar_ff, &ops.afull_ff, &coupling);

    let mut rhs = vec![0.0; m * nf];

    // Load term ∫ ψ_l (f, φ + δ b·∇φ) dt at the shared temporal rule.
    let (tq, tw) = gauss_rule_on(span, quad.time_points);
    let basis = crate::quadrature::LagrangeBasis::new(coupling.nodes.clone());
    for (&t, &w) in tq.iter().zip(&tw) {
        let load = assemble_forcing(space, coeffs, quad.space_points, f, t);
        let load_free = space.reduce_vector(&load);
        let psi = basis.eval_all(t);
        for l in 0..m {
            let c = w * psi[l];
            for i in 0..nf {
                rhs[l * nf + i] += c * load_free[i];
            }
        }
    }

    // Upwind coupling to the previous slab: +ψ_l(t_left)·(Mbar u_prev, φ).
    let mut mbar_uprev = vec![0.0; space.n_nodes()];
    ops.mbar.matvec_add(u_prev_full, 1.0, &mut mbar_uprev);
    let mbar_uprev_free = space.reduce_vector(&mbar_uprev);
    for l in 0..m {
        let c = coupling.left[l];
        for i in 0..nf {
            rhs[l * nf + i] += c * mbar_uprev_free[i];
        }
    }

    // Dirichlet lifting: subtract the columns of prescribed boundary values
    // g(·, t_k) at the temporal nodes.
    let fixed_blocks: Vec<Vec<f64>> = coupling
        .nodes
        .iter()
        .map(|&t| space.boundary_values(|x, y| g(x, y, t)))
        .collect();
    for k in 0..m {
        let gb = &fixed_blocks[k];
        let mb = ops.mbar_fd.matvec(gb);
        let ab = ops.afull_fd.matvec(gb);
        for l in 0..m {
            let cm = coupling.stiff[l][k] + coupling.left[l] * coupling.left[k];
            let ca = coupling.mass[l][k];
            for i in 0..nf {
                rhs[l * nf + i] -= cm * mb[i] + ca * ab[i];
            }
        }
    }

    SlabSystem {
        slab,
        matrix,
        rhs,
        t_nodes: coupling.nodes,
        fixed_blocks,
    }
}

/// Solves one slab system and returns the full-DoF solution block per
/// temporal node (boundary values substituted, hanging values distributed).
/// Fails if the direct solve leaves a relative residual above 1e-10.
pub fn solve_slab(space: &Space, sys: &SlabSystem) -> Result<Vec<Vec<f64>>> {
    let nf = space.n_free();
    let m = sys.t_nodes.len();
    let x = if nf == 0 {
        vec![0.0; 0]
    } else {
        solve_lu(&sys.matrix, &sys.rhs, sys.slab)?
    };

    let residual_ok = {
        let ax = sys.matrix.matvec(&x);
        let mut r2 = 0.0;
        let mut b2 = 0.0;
        let mut ax2 = 0.0;
        for i in 0..sys.rhs.len() {
            r2 += (ax[i] - sys.rhs[i]).powi(2);
            b2 += sys.rhs[i].powi(2);
            ax2 += ax[i].powi(2);
        }
        r2.sqrt() <= 1e-10 * (b2.sqrt() + ax2.sqrt() + 1e-30)
    };
    if !residual_ok {
        return Err(Error::Solve {
            slab: sys.slab,
            message: "direct solve exceeded the relative residual bound".into(),
        });
    }

    Ok((0..m)
        .map(|k| space.complete(&x[k * nf..(k + 1) * nf], &sys.fixed_blocks[k]))
        .collect())
}

/// The fully discrete solution: one spatial space and one temporal
/// polynomial block per slab, plus the discrete initial value (the nodal
/// interpolant of u₀ on the first slab's space).
pub struct Trajectory {
    pub partition: TimePartition,
    pub spaces: Vec<Arc<Space>>,
    pub initial: Vec<f64>,
    pub slabs: Vec<SlabPoly>,
}

impl Trajectory {
    pub fn n_slabs(&self) -> usize {
        self.slabs.len()
    }

    /// Index of the slab whose half-open interval (t_{n-1}, t_n] contains
    /// `t` (t ≤ 0 maps to the first slab).
    pub fn locate(&self, t: f64) -> usize {
        let pts = self.partition.points();
        let mut n = 0;
        while n + 1 < self.slabs.len() && t > pts[n + 1] {
            n += 1;
        }
        n
    }

    /// Full-DoF spatial vector of the solution at time `t` (within slab
    /// `locate(t)`).
    pub fn eval_at(&self, t: f64) -> Vec<f64> {
        self.slabs[self.locate(t)].eval(t)
    }

    /// Left limit u(t_n⁻) of slab `n` as a full-DoF vector on its space.
    pub fn end_value(&self, n: usize) -> Vec<f64> {
        self.slabs[n].limits().1
    }

    /// Right limit u(t_{n-1}⁺) of slab `n`.
    pub fn start_value(&self, n: usize) -> Vec<f64> {
        self.slabs[n].limits().0
    }

    /// The trajectory value entering slab `n` from the left: the previous
    /// slab's end value (or the discrete initial value for n = 0),
    /// interpolated onto slab n's space if the meshes differ.
    pub fn incoming(&self, n: usize) -> Vec<f64> {
        let (prev, prev_space): (Vec<f64>, &Arc<Space>) = if n == 0 {
            (self.initial.clone(), &self.spaces[0])
        } else {
            (self.end_value(n - 1), &self.spaces[n - 1])
        };
        if Arc::ptr_eq(prev_space, &self.spaces[n]) {
            prev
        } else {
            self.spaces[n].interpolate_from(prev_space, &prev)
        }
    }
}

/// Forward sweep over all slabs with explicit data functions; `u0` is
/// interpolated on the first slab's space to form the discrete initial
/// value.
#[allow(clippy::too_many_arguments)]
pub fn solve_primal_raw(
    partition: &TimePartition,
    spaces: &[Arc<Space>],
    coeffs: Coefficients,
    f: SpaceTimeFn,
    g: SpaceTimeFn,
    u0: &dyn Fn(f64, f64) -> f64,
    r: usize,
    quad: QuadSpec,
) -> Result<Trajectory> {
    if spaces.len() != partition.n_slabs() {
        return Err(Error::InvalidInput(format!(
            "{} spaces provided for {} slabs",
            spaces.len(),
            partition.n_slabs()
        )));
    }

    let initial = spaces[0].interpolate(u0);
    let mut slabs: Vec<SlabPoly> = Vec::with_capacity(partition.n_slabs());
    let mut u_prev = initial.clone();
    let mut ops_cache: Option<(usize, SpatialOps)> = None;

    for n in 0..partition.n_slabs() {
        let space = &spaces[n];
        if n > 0 && !Arc::ptr_eq(&spaces[n - 1], space) {
            u_prev = space.interpolate_from(&spaces[n - 1], &u_prev);
        }
        let key = Arc::as_ptr(space) as usize;
        let ops = match &ops_cache {
            Some((k, ops)) if *k == key => ops,
            _ => {
                ops_cache = Some((key, assemble_spatial(space, coeffs, quad.space_points)));
                &ops_cache.as_ref().unwrap().1
            }
        };

        let span = partition.span(n);
        let sys = assemble_slab(n, span, space, ops, coeffs, f, g, r, quad, &u_prev);
        let blocks = solve_slab(space, &sys)?;
        let poly = SlabPoly::from_nodes(span, sys.t_nodes.clone(), blocks);
        u_prev = poly.limits().1;
        slabs.push(poly);
    }

    Ok(Trajectory {
        partition: partition.clone(),
        spaces: spaces.to_vec(),
        initial,
        slabs,
    })
}

/// Forward sweep for a built-in problem: forcing, boundary trace, and
/// initial value come from its manufactured solution.
pub fn solve_primal(
    partition: &TimePartition,
    spaces: &[Arc<Space>],
    problem: &Problem,
    r: usize,
    quad: QuadSpec,
) -> Result<Trajectory> {
    let f = |x: f64, y: f64, t: f64| problem.forcing(x, y, t);
    let g = |x: f64, y: f64, t: f64| problem.trace(x, y, t);
    let u0 = |x: f64, y: f64| problem.initial(x, y);
    solve_primal_raw(
        partition,
        spaces,
        Coefficients::from(problem),
        &f,
        &g,
        &u0,
        r,
        quad,
    )
}
