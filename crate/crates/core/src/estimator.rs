//! Dual-weighted residual error estimation. The goal-error identity is
//! evaluated in its weighted-residual form — no integration by parts, so
//! every contribution localizes over cells — and split into a temporal part
//! (residual paired with a purely-temporal weight) and a spatial part
//! (residual paired with the spatial defect of the dual solution, plus the
//! stabilization offset that restores consistency of the stabilized
//! scheme).

use std::sync::Arc;

use crate::primal::{Coefficients, QuadSpec, SpaceTimeFn, Trajectory};
use crate::problem::Problem;
use crate::quadrature::gauss_legendre;
use crate::space::{BrokenField, RefShapes, Space};
use crate::time::{gauss_rule_on, SlabPoly};
use crate::{Error, Result};

/// How the temporal weight is produced from the dual solution: by raising
/// the dual's temporal degree through reconstruction from its own jumps
/// (requires equal primal/dual temporal degrees), or by solving the dual in
/// a temporally richer space and restricting (requires a strictly higher
/// dual temporal degree).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalWeight {
    Reconstruction,
    EnrichedSpace,
}

impl TemporalWeight {
    /// The dual temporal degree this mode requires for primal degree `r`.
    pub fn dual_degree(self, r: usize) -> usize {
        match self {
            TemporalWeight::Reconstruction => r,
            TemporalWeight::EnrichedSpace => r + 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TemporalWeight::Reconstruction => "hoRe",
            TemporalWeight::EnrichedSpace => "hoFE",
        }
    }
}

/// Parsed error indicators: signed totals, their per-slab decomposition,
/// and the per-cell decomposition of the spatial part on each slab.
#[derive(Debug, Clone)]
pub struct IndicatorSet {
    pub eta_tau: f64,
    pub eta_h: f64,
    pub slab_tau: Vec<f64>,
    pub slab_h: Vec<f64>,
    pub cell_h: Vec<Vec<f64>>,
}

impl IndicatorSet {
    /// Signed sum of both parts — the estimate of J(u) − J(u_τh).
    pub fn total(&self) -> f64 {
        self.eta_tau + self.eta_h
    }
}

/// Effectivity of an estimate against the exactly computed goal error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Effectivity {
    /// The goal error vanishes; the index is undefined.
    Exact,
    Index(f64),
}

/// |estimate / goal error|, or [`Effectivity::Exact`] for a zero error.
pub fn effectivity(estimate: f64, goal_error: f64) -> Effectivity {
    if goal_error == 0.0 {
        Effectivity::Exact
    } else {
        Effectivity::Index((estimate / goal_error).abs())
    }
}

/// Reference shape data tabulated at the tensor quadrature points:
/// `val[q][l]` etc., with q = ix · n_qp + iy.
struct ShapeTable {
    n_local: usize,
    val: Vec<Vec<f64>>,
    gx: Vec<Vec<f64>>,
    gy: Vec<Vec<f64>>,
    sxx: Vec<Vec<f64>>,
    syy: Vec<Vec<f64>>,
}

impl ShapeTable {
    fn new(shapes: &RefShapes, qx: &[f64]) -> Self {
        let n_local = shapes.n_local();
        let mut val = Vec::new();
        let mut gx = Vec::new();
        let mut gy = Vec::new();
        let mut sxx = Vec::new();
        let mut syy = Vec::new();
        for &x in qx {
            for &y in qx {
                let mut v = Vec::with_capacity(n_local);
                let mut dx = Vec::with_capacity(n_local);
                let mut dy = Vec::with_capacity(n_local);
                let mut dxx = Vec::with_capacity(n_local);
                let mut dyy = Vec::with_capacity(n_local);
                for l in 0..n_local {
                    v.push(shapes.value(l, x, y));
                    let g = shapes.grad(l, x, y);
                    dx.push(g.0);
                    dy.push(g.1);
                    let s = shapes.second(l, x, y);
                    dxx.push(s.0);
                    dyy.push(s.1);
                }
                val.push(v);
                gx.push(dx);
                gy.push(dy);
                sxx.push(dxx);
                syy.push(dyy);
            }
        }
        Self { n_local, val, gx, gy, sxx, syy }
    }
}

/// One additive piece of a (possibly discontinuous) weight field: per-cell
/// nodal values at every temporal quadrature point and at the slab's left
/// endpoint, with its own local basis.
struct WeightLayer {
    sign: f64,
    table: ShapeTable,
    at_times: Vec<BrokenField>,
    at_left: BrokenField,
}

impl WeightLayer {
    fn from_poly(space: &Space, poly: &SlabPoly, times: &[f64], left: f64, qx: &[f64]) -> Self {
        Self {
            sign: 1.0,
            table: ShapeTable::new(space.shapes(), qx),
            at_times: times.iter().map(|&t| space.to_broken(&poly.eval(t))).collect(),
            at_left: space.to_broken(&poly.eval(left)),
        }
    }

    /// Weight value and physical gradient at quadrature point `q` of `cell`
    /// at temporal index `j` (`None` = the left-endpoint sample).
    fn sample(&self, j: Option<usize>, cell: usize, q: usize, inv_w: f64, inv_h: f64) -> (f64, f64, f64) {
        let field = match j {
            Some(j) => &self.at_times[j],
            None => &self.at_left,
        };
        let vals = field.cell(cell);
        let (mut v, mut dx, mut dy) = (0.0, 0.0, 0.0);
        for l in 0..self.table.n_local {
            v += vals[l] * self.table.val[q][l];
            dx += vals[l] * self.table.gx[q][l];
            dy += vals[l] * self.table.gy[q][l];
        }
        (self.sign * v, self.sign * dx * inv_w, self.sign * dy * inv_h)
    }
}

/// Everything about the discrete solution on one slab that the pairings
/// need: temporal rule, nodal samples of u and ∂_t u per quadrature time,
/// and the weak-continuity jump against the incoming state.
struct SlabData<'a> {
    space: &'a Space,
    coeffs: Coefficients,
    span: (f64, f64),
    tq: Vec<f64>,
    tw: Vec<f64>,
    qx: Vec<f64>,
    qw: Vec<f64>,
    p_table: ShapeTable,
    u_at: Vec<BrokenField>,
    du_at: Vec<BrokenField>,
    jump: BrokenField,
}

fn slab_data<'a>(u: &'a Trajectory, n: usize, coeffs: Coefficients, quad: QuadSpec) -> SlabData<'a> {
    let space = u.spaces[n].as_ref();
    let span = u.partition.span(n);
    let (tq, tw) = gauss_rule_on(span, quad.time_points);
    let (qx, qw) = gauss_legendre(quad.space_points);
    let poly = &u.slabs[n];
    let u_at = tq.iter().map(|&t| space.to_broken(&poly.eval(t))).collect();
    let du_at = tq.iter().map(|&t| space.to_broken(&poly.eval_deriv(t))).collect();
    let incoming = u.incoming(n);
    let plus = poly.eval(span.0);
    let jump_full: Vec<f64> = plus.iter().zip(&incoming).map(|(a, b)| a - b).collect();
    SlabData {
        space,
        coeffs,
        span,
        tq,
        tw,
        p_table: ShapeTable::new(space.shapes(), &qx),
        qx,
        qw,
        u_at,
        du_at,
        jump: space.to_broken(&jump_full),
    }
}

/// Per-cell contributions of the slab residual pairing
/// ρ_n(u)(w) = ∫_{I_n} (f − ∂_t u − b·∇u − αu, w) − ε(∇u, ∇w) dt
///           − ([u]_{n−1}, w⁺_{n−1}),
/// with the weight given as a sum of layers.
fn pairing_cells(data: &SlabData, f: SpaceTimeFn, layers: &[WeightLayer]) -> Vec<f64> {
    let (bx, by) = data.coeffs.convection;
    let (eps, alpha) = (data.coeffs.epsilon, data.coeffs.reaction);
    let nq = data.qx.len();
    let n_local = data.p_table.n_local;
    let mut out = vec![0.0; data.space.mesh().n_cells()];

    for (ci, cell) in data.space.mesh().cells().iter().enumerate() {
        let (w, h) = (cell.rect.width(), cell.rect.height());
        let (inv_w, inv_h) = (1.0 / w, 1.0 / h);
        let jac = w * h;
        let mut acc = 0.0;

        for (j, (&t, &wt)) in data.tq.iter().zip(&data.tw).enumerate() {
            let uc = data.u_at[j].cell(ci);
            let duc = data.du_at[j].cell(ci);
            for (iq, &xq) in data.qx.iter().enumerate() {
                for (jq, &yq) in data.qx.iter().enumerate() {
                    let q = iq * nq + jq;
                    let wq = data.qw[iq] * data.qw[jq] * jac;
                    let (mut u, mut du, mut ux, mut uy) = (0.0, 0.0, 0.0, 0.0);
                    for l in 0..n_local {
                        u += uc[l] * data.p_table.val[q][l];
                        du += duc[l] * data.p_table.val[q][l];
                        ux += uc[l] * data.p_table.gx[q][l];
                        uy += uc[l] * data.p_table.gy[q][l];
                    }
                    ux *= inv_w;
                    uy *= inv_h;
                    let (mut wv, mut wx, mut wy) = (0.0, 0.0, 0.0);
                    for layer in layers {
                        let (v, dx, dy) = layer.sample(Some(j), ci, q, inv_w, inv_h);
                        wv += v;
                        wx += dx;
                        wy += dy;
                    }
                    let x = cell.rect.x0 + xq * w;
                    let y = cell.rect.y0 + yq * h;
                    let fv = f(x, y, t);
                    acc += wt
                        * wq
                        * ((fv - du - bx * ux - by * uy - alpha * u) * wv
                            - eps * (ux * wx + uy * wy));
                }
            }
        }

        // Jump term −([u]_{n−1}, w⁺).
        let jc = data.jump.cell(ci);
        for (iq, _) in data.qx.iter().enumerate() {
            for (jq, _) in data.qx.iter().enumerate() {
                let q = iq * nq + jq;
                let wq = data.qw[iq] * data.qw[jq] * jac;
                let mut jmp = 0.0;
                for l in 0..n_local {
                    jmp += jc[l] * data.p_table.val[q][l];
                }
                let mut wv = 0.0;
                for layer in layers {
                    wv += layer.sample(None, ci, q, inv_w, inv_h).0;
                }
                acc -= wq * jmp * wv;
            }
        }

        out[ci] = acc;
    }
    out
}

/// Per-cell contributions of the slab stabilization pairing
/// S_{A,n}(u)(w) = ∫_{I_n} Σ_K δ_K (∂_t u + b·∇u − ε∆u + αu − f, b·∇w)_K dt
///              + Σ_K δ_K ([u]_{n−1}, b·∇w⁺)_K,
/// with the broken (cell-wise) Laplacian of u.
fn stabilization_cells(data: &SlabData, f: SpaceTimeFn, layers: &[WeightLayer]) -> Vec<f64> {
    let (bx, by) = data.coeffs.convection;
    let (eps, alpha) = (data.coeffs.epsilon, data.coeffs.reaction);
    let nq = data.qx.len();
    let n_local = data.p_table.n_local;
    let mut out = vec![0.0; data.space.mesh().n_cells()];
    if data.coeffs.delta0 == 0.0 {
        return out;
    }

    for (ci, cell) in data.space.mesh().cells().iter().enumerate() {
        let (w, h) = (cell.rect.width(), cell.rect.height());
        let (inv_w, inv_h) = (1.0 / w, 1.0 / h);
        let jac = w * h;
        let delta = crate::primal::supg_parameter(cell, data.coeffs.delta0);
        let mut acc = 0.0;

        for (j, (&t, &wt)) in data.tq.iter().zip(&data.tw).enumerate() {
            let uc = data.u_at[j].cell(ci);
            let duc = data.du_at[j].cell(ci);
            for (iq, &xq) in data.qx.iter().enumerate() {
                for (jq, &yq) in data.qx.iter().enumerate() {
                    let q = iq * nq + jq;
                    let wq = data.qw[iq] * data.qw[jq] * jac;
                    let (mut u, mut du, mut ux, mut uy, mut lap) = (0.0, 0.0, 0.0, 0.0, 0.0);
                    for l in 0..n_local {
                        u += uc[l] * data.p_table.val[q][l];
                        du += duc[l] * data.p_table.val[q][l];
                        ux += uc[l] * data.p_table.gx[q][l];
                        uy += uc[l] * data.p_table.gy[q][l];
                        lap += uc[l]
                            * (data.p_table.sxx[q][l] * inv_w * inv_w
                                + data.p_table.syy[q][l] * inv_h * inv_h);
                    }
                    ux *= inv_w;
                    uy *= inv_h;
                    let mut sw = 0.0;
                    for layer in layers {
                        let (_, dx, dy) = layer.sample(Some(j), ci, q, inv_w, inv_h);
                        sw += bx * dx + by * dy;
                    }
                    let x = cell.rect.x0 + xq * w;
                    let y = cell.rect.y0 + yq * h;
                    let fv = f(x, y, t);
                    let resid = du + bx * ux + by * uy - eps * lap + alpha * u - fv;
                    acc += wt * wq * delta * resid * sw;
                }
            }
        }

        // Jump term +δ_K ([u]_{n−1}, b·∇w⁺)_K.
        let jc = data.jump.cell(ci);
        for (iq, _) in data.qx.iter().enumerate() {
            for (jq, _) in data.qx.iter().enumerate() {
                let q = iq * nq + jq;
                let wq = data.qw[iq] * data.qw[jq] * jac;
                let mut jmp = 0.0;
                for l in 0..n_local {
                    jmp += jc[l] * data.p_table.val[q][l];
                }
                let mut sw = 0.0;
                for layer in layers {
                    let (_, dx, dy) = layer.sample(None, ci, q, inv_w, inv_h);
                    sw += bx * dx + by * dy;
                }
                acc += wq * delta * jmp * sw;
            }
        }

        out[ci] = acc;
    }
    out
}

fn check_aligned(u: &Trajectory, w: &Trajectory) -> Result<()> {
    if u.partition != w.partition {
        return Err(Error::InvalidInput(
            "solution and weight live on different time partitions".into(),
        ));
    }
    for n in 0..u.n_slabs() {
        if !Arc::ptr_eq(u.spaces[n].mesh(), w.spaces[n].mesh()) {
            return Err(Error::InvalidInput(format!(
                "weight space on slab {n} does not share the solution mesh"
            )));
        }
    }
    Ok(())
}

/// Per-slab residual pairing ρ_n(u)(w) and stabilization S_{A,n}(u)(w)
/// against a conforming weight trajectory, with explicit coefficients and
/// forcing.
pub fn residual_and_stabilization_raw(
    coeffs: Coefficients,
    f: SpaceTimeFn,
    u: &Trajectory,
    w: &Trajectory,
    quad: QuadSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    check_aligned(u, w)?;
    let mut rho = Vec::with_capacity(u.n_slabs());
    let mut sa = Vec::with_capacity(u.n_slabs());
    for n in 0..u.n_slabs() {
        let data = slab_data(u, n, coeffs, quad);
        let layer = WeightLayer::from_poly(
            w.spaces[n].as_ref(),
            &w.slabs[n],
            &data.tq,
            data.span.0,
            &data.qx,
        );
        let layers = [layer];
        rho.push(pairing_cells(&data, f, &layers).iter().sum());
        sa.push(stabilization_cells(&data, f, &layers).iter().sum());
    }
    Ok((rho, sa))
}

/// [`residual_and_stabilization_raw`] with the coefficients and forcing of
/// a benchmark problem.
pub fn residual_and_stabilization(
    problem: &Problem,
    u: &Trajectory,
    w: &Trajectory,
    quad: QuadSpec,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let f = |x: f64, y: f64, t: f64| problem.forcing(x, y, t);
    residual_and_stabilization_raw(Coefficients::from(problem), &f, u, w, quad)
}

/// ρ(u)(w) − S_A(u)(w) summed over all slabs. For the solved discrete
/// trajectory and any discrete test trajectory on the same spaces this
/// vanishes to solver precision — the stabilized Galerkin orthogonality the
/// estimator is built on.
pub fn galerkin_defect(
    problem: &Problem,
    u: &Trajectory,
    w: &Trajectory,
    quad: QuadSpec,
) -> Result<f64> {
    let (rho, sa) = residual_and_stabilization(problem, u, w, quad)?;
    Ok(rho.iter().sum::<f64>() - sa.iter().sum::<f64>())
}

/// Difference a − b as a slab polynomial nodal at `a`'s temporal nodes
/// (exact when b's degree does not exceed a's).
fn poly_difference(a: &SlabPoly, b: &SlabPoly) -> SlabPoly {
    let blocks = a
        .nodes()
        .iter()
        .zip(a.blocks())
        .map(|(&t, block)| {
            let bv = b.eval(t);
            block.iter().zip(&bv).map(|(x, y)| x - y).collect()
        })
        .collect();
    SlabPoly::from_nodes(a.span(), a.nodes().to_vec(), blocks)
}

/// Dual-weighted error indicators for a primal/dual solution pair: the
/// temporal part pairs the residual with the temporal defect of the dual
/// solution (reconstruction or restriction, by mode), the spatial part
/// pairs it with the cell-wise spatial defect and adds the stabilization
/// offset evaluated at the spatially restricted dual.
pub fn estimate(
    problem: &Problem,
    u: &Trajectory,
    z: &Trajectory,
    mode: TemporalWeight,
    quad: QuadSpec,
) -> Result<IndicatorSet> {
    check_aligned(u, z)?;
    let coeffs = Coefficients::from(problem);
    let f = |x: f64, y: f64, t: f64| problem.forcing(x, y, t);
    let n_slabs = u.n_slabs();

    let mut slab_tau = Vec::with_capacity(n_slabs);
    let mut slab_h = Vec::with_capacity(n_slabs);
    let mut cell_h = Vec::with_capacity(n_slabs);

    for n in 0..n_slabs {
        let p = u.spaces[n].degree();
        let q = z.spaces[n].degree();
        if q <= p {
            return Err(Error::InvalidInput(format!(
                "spatial weights need a dual degree above the primal ({q} ≤ {p} on slab {n})"
            )));
        }
        let r = u.slabs[n].degree();
        let s = z.slabs[n].degree();
        match mode {
            TemporalWeight::Reconstruction if s != r => {
                return Err(Error::InvalidInput(format!(
                    "reconstruction weights need equal temporal degrees (r = {r}, dual {s})"
                )));
            }
            TemporalWeight::EnrichedSpace if s <= r => {
                return Err(Error::InvalidInput(format!(
                    "enriched-space weights need a higher dual temporal degree (r = {r}, dual {s})"
                )));
            }
            _ => {}
        }

        let data = slab_data(u, n, coeffs, quad);
        let z_space = z.spaces[n].as_ref();

        // Temporal weight: E z − z (reconstruction) or z − R_τ z
        // (restriction to the primal degree).
        let w_tau = match mode {
            TemporalWeight::Reconstruction => {
                let anchor = z.incoming(n);
                let raised = z.slabs[n].reconstructed(&anchor);
                poly_difference(&raised, &z.slabs[n])
            }
            TemporalWeight::EnrichedSpace => {
                let restricted = z.slabs[n].restricted(r)?;
                poly_difference(&z.slabs[n], &restricted)
            }
        };
        let tau_layer = WeightLayer::from_poly(z_space, &w_tau, &data.tq, data.span.0, &data.qx);
        let tau_cells = pairing_cells(&data, &f, &[tau_layer]);
        slab_tau.push(tau_cells.iter().sum());

        // Spatial weight: z − R_h z cell-wise, plus the stabilization
        // offset S_A(u)(R_h z).
        let z_table = ShapeTable::new(z_space.shapes(), &data.qx);
        let p_shapes = RefShapes::new(p);
        let p_table = ShapeTable::new(&p_shapes, &data.qx);
        let mut z_at = Vec::with_capacity(data.tq.len());
        let mut rz_at = Vec::with_capacity(data.tq.len());
        for &t in &data.tq {
            let full = z.slabs[n].eval(t);
            let broken = z_space.to_broken(&full);
            rz_at.push(broken.restricted(p)?);
            z_at.push(broken);
        }
        let left_full = z.slabs[n].eval(data.span.0);
        let left_broken = z_space.to_broken(&left_full);
        let left_restricted = left_broken.restricted(p)?;

        let zh_layers = [
            WeightLayer {
                sign: 1.0,
                table: z_table,
                at_times: z_at,
                at_left: left_broken,
            },
            WeightLayer {
                sign: -1.0,
                table: ShapeTable::new(&p_shapes, &data.qx),
                at_times: rz_at.clone(),
                at_left: left_restricted.clone(),
            },
        ];
        let mut h_cells = pairing_cells(&data, &f, &zh_layers);

        let rh_layer = [WeightLayer {
            sign: 1.0,
            table: p_table,
            at_times: rz_at,
            at_left: left_restricted,
        }];
        let sa_cells = stabilization_cells(&data, &f, &rh_layer);
        for (hc, sc) in h_cells.iter_mut().zip(&sa_cells) {
            *hc += sc;
        }
        slab_h.push(h_cells.iter().sum());
        cell_h.push(h_cells);
    }

    Ok(IndicatorSet {
        eta_tau: slab_tau.iter().sum(),
        eta_h: slab_h.iter().sum(),
        slab_tau,
        slab_h,
        cell_h,
    })
}
