//! The adaptive loop: solve primal and dual, evaluate indicators, decide
//! between temporal, spatial, or combined refinement by equilibration,
//! mark by fixed fraction, refine, repeat. Every slab owns its spatial
//! mesh; temporal bisection duplicates the mesh of the split slab.

use std::collections::BTreeSet;
use std::sync::Arc;

use crate::dual::{goal_error, solve_dual};
use crate::estimator::{effectivity, estimate, Effectivity, TemporalWeight};
use crate::mesh::SpatialMesh;
use crate::primal::{solve_primal, QuadSpec};
use crate::problem::Problem;
use crate::space::Space;
use crate::time::TimePartition;
use crate::{Error, Result};

/// Which grids the next refinement step touches.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RefinementDecision {
    TemporalOnly,
    SpatialOnly,
    Both,
}

/// Equilibration test: refine only the time grid when the temporal
/// indicator dominates by more than the factor `omega`, only the spatial
/// meshes in the mirrored case, and both otherwise.
pub fn decide(eta_tau: f64, eta_h: f64, omega: f64) -> RefinementDecision {
    if eta_tau.abs() > omega * eta_h.abs() {
        RefinementDecision::TemporalOnly
    } else if eta_h.abs() > omega * eta_tau.abs() {
        RefinementDecision::SpatialOnly
    } else {
        RefinementDecision::Both
    }
}

/// Fixed-fraction marking: the indices of the `round(fraction · len)`
/// (at least one) largest indicators by absolute value, ties broken toward
/// the lower index. Deterministic; an empty list is rejected.
pub fn mark(indicators: &[f64], fraction: f64) -> Result<BTreeSet<usize>> {
    if indicators.is_empty() {
        return Err(Error::InvalidInput("nothing to mark: empty indicator list".into()));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidInput(format!(
            "marking fraction must lie in (0, 1], got {fraction}"
        )));
    }
    let n = indicators.len();
    let k = ((fraction * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        indicators[b]
            .abs()
            .partial_cmp(&indicators[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    Ok(order.into_iter().take(k).collect())
}

/// Knobs of the adaptive loop.
#[derive(Debug, Clone)]
pub struct AdaptConfig {
    /// Temporal-weight strategy; also fixes the dual temporal degree.
    pub mode: TemporalWeight,
    /// Primal spatial degree.
    pub p: usize,
    /// Primal temporal degree.
    pub r: usize,
    /// Dual spatial degree (must exceed p).
    pub q: usize,
    /// Dual temporal degree (must match the mode's requirement).
    pub s: usize,
    /// Equilibration factor, in [1.5, 3.5].
    pub omega: f64,
    /// Slab marking fraction, in (0, 1].
    pub theta_tau: f64,
    /// Cell marking fraction, in (0, 1].
    pub theta_h: f64,
    /// Number of solve-estimate-refine rounds.
    pub max_loops: usize,
    /// Stop before a refinement would push the space-time DoF count of the
    /// next loop beyond this bound.
    pub max_total_dof: Option<usize>,
}

impl AdaptConfig {
    /// A config with the conventional defaults for the given degrees and
    /// mode: ω = 1.5, θ_τ = θ_h = 0.3, dual degree from the mode.
    pub fn new(mode: TemporalWeight, p: usize, r: usize, q: usize, max_loops: usize) -> Self {
        Self {
            mode,
            p,
            r,
            q,
            s: mode.dual_degree(r),
            omega: 1.5,
            theta_tau: 0.3,
            theta_h: 0.3,
            max_loops,
            max_total_dof: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega >= 1.5 && self.omega <= 3.5) {
            return Err(Error::InvalidInput(format!(
                "equilibration factor must lie in [1.5, 3.5], got {}",
                self.omega
            )));
        }
        for (name, theta) in [("slab", self.theta_tau), ("cell", self.theta_h)] {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name} marking fraction must lie in (0, 1], got {theta}"
                )));
            }
        }
        if self.q <= self.p {
            return Err(Error::InvalidInput(format!(
                "dual spatial degree must exceed the primal ({} ≤ {})",
                self.q, self.p
            )));
        }
        if self.s != self.mode.dual_degree(self.r) {
            return Err(Error::InvalidInput(format!(
                "dual temporal degree {} does not match mode {} at primal degree {}",
                self.s,
                self.mode.name(),
                self.r
            )));
        }
        if self.max_loops == 0 {
            return Err(Error::InvalidInput("need at least one loop".into()));
        }
        Ok(())
    }
}

/// One adaptive-loop row: grid sizes, exactly computed goal error, both
/// indicator totals, and the resulting effectivity.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRecord {
    /// 1-based loop counter.
    pub loop_index: usize,
    /// Number of slabs N.
    pub n_slabs: usize,
    /// Largest per-slab cell count.
    pub max_cells: usize,
    /// Space-time DoF count: Σ_n (r+1)·M_n plus the initial-value vector.
    pub total_dofs: usize,
    /// Exactly computed goal error J(e).
    pub goal_error: f64,
    /// Spatial indicator total η̃_h.
    pub eta_h: f64,
    /// Temporal indicator total η̃_τ.
    pub eta_tau: f64,
    /// |estimate / goal error|.
    pub effectivity: Effectivity,
}

/// Space-time DoF count of a trajectory's grids: Σ_n (r+1)·M_n + M_1,
/// where M_n is the dimension of slab n's spatial space and the trailing
/// term counts the discrete initial value.
pub fn total_dofs(spaces: &[Arc<Space>], r: usize) -> usize {
    let sum: usize = spaces.iter().map(|s| (r + 1) * s.dimension()).sum();
    sum + spaces.first().map_or(0, |s| s.dimension())
}

/// Apply one marking/refinement step to the grids. Cell indicators are
/// consumed per slab (`indicators.cell_h[n]` marks cells of slab n's own
/// mesh); temporal bisection duplicates the (possibly just refined) mesh of
/// the split slab. Grids untouched by the decision are returned
/// object-identical.
pub fn refine_grids(
    partition: &TimePartition,
    meshes: &[Arc<SpatialMesh>],
    indicators: &crate::estimator::IndicatorSet,
    decision: RefinementDecision,
    theta_tau: f64,
    theta_h: f64,
) -> Result<(TimePartition, Vec<Arc<SpatialMesh>>)> {
    if meshes.len() != partition.n_slabs() {
        return Err(Error::InvalidInput(format!(
            "{} meshes for {} slabs",
            meshes.len(),
            partition.n_slabs()
        )));
    }
    let refine_space = decision != RefinementDecision::TemporalOnly;
    let refine_time = decision != RefinementDecision::SpatialOnly;

    let mut new_meshes: Vec<Arc<SpatialMesh>> = Vec::with_capacity(meshes.len());
    for (n, mesh) in meshes.iter().enumerate() {
        if refine_space {
            let marks = mark(&indicators.cell_h[n], theta_h)?;
            new_meshes.push(Arc::new(mesh.refined(&marks)?));
        } else {
            new_meshes.push(mesh.clone());
        }
    }

    if refine_time {
        let marks = mark(&indicators.slab_tau, theta_tau)?;
        let new_partition = partition.refined(&marks)?;
        let mut expanded = Vec::with_capacity(new_partition.n_slabs());
        for (n, mesh) in new_meshes.iter().enumerate() {
            expanded.push(mesh.clone());
            if marks.contains(&n) {
                expanded.push(mesh.clone());
            }
        }
        Ok((new_partition, expanded))
    } else {
        Ok((partition.clone(), new_meshes))
    }
}

/// Final state of an adaptive run: all records, the grids of the last loop
/// that was solved, and the failure that ended the run early, if any.
#[derive(Debug)]
pub struct AdaptOutcome {
    pub records: Vec<ConvergenceRecord>,
    pub partition: TimePartition,
    pub meshes: Vec<Arc<SpatialMesh>>,
    pub failure: Option<Error>,
}

fn build_spaces(meshes: &[Arc<SpatialMesh>], degree: usize) -> Result<Vec<Arc<Space>>> {
    // Slabs that share a mesh object share the space object, so downstream
    // pointer-equality fast paths (jump transfer, estimator checks) fire.
    let mut cache: Vec<(*const SpatialMesh, Arc<Space>)> = Vec::new();
    let mut out = Vec::with_capacity(meshes.len());
    for mesh in meshes {
        let key = Arc::as_ptr(mesh);
        if let Some((_, space)) = cache.iter().find(|(k, _)| *k == key) {
            out.push(space.clone());
            continue;
        }
        let space = Arc::new(Space::new(mesh.clone(), degree)?);
        cache.push((key, space.clone()));
        out.push(space);
    }
    Ok(out)
}

/// Run the adaptive loop from the given initial grids. Records accumulate
/// one row per completed loop; `on_record` sees each row together with the
/// full indicator breakdown as soon as the loop's estimate is complete
/// (for incremental output). Solver failures end the run early with the
/// rows recorded so far.
pub fn adaptive_loop(
    problem: &Problem,
    config: &AdaptConfig,
    partition: TimePartition,
    mesh: Arc<SpatialMesh>,
    mut on_record: impl FnMut(&ConvergenceRecord, &crate::estimator::IndicatorSet),
) -> AdaptOutcome {
    let mut meshes: Vec<Arc<SpatialMesh>> = vec![mesh; partition.n_slabs()];
    let mut partition = partition;
    let mut records = Vec::new();

    if let Err(e) = config.validate() {
        return AdaptOutcome { records, partition, meshes, failure: Some(e) };
    }
    let goal = problem.default_goal();
    let quad = QuadSpec::unified(config.p, config.r, config.q, config.s);

    let mut loop_index = 0;
    let failure = loop {
        loop_index += 1;
        let step = (|| -> Result<Option<(TimePartition, Vec<Arc<SpatialMesh>>)>> {
            let spaces_p = build_spaces(&meshes, config.p)?;
            let spaces_q = build_spaces(&meshes, config.q)?;

            let u = solve_primal(&partition, &spaces_p, problem, config.r, quad)?;
            let je = goal_error(goal, problem, &u, quad);
            let z = solve_dual(problem, &u, &spaces_q, goal, config.s, quad)?;
            let ind = estimate(problem, &u, &z, config.mode, quad)?;

            let record = ConvergenceRecord {
                loop_index,
                n_slabs: partition.n_slabs(),
                max_cells: meshes.iter().map(|m| m.n_cells()).max().unwrap_or(0),
                total_dofs: total_dofs(&spaces_p, config.r),
                goal_error: je,
                eta_h: ind.eta_h,
                eta_tau: ind.eta_tau,
                effectivity: effectivity(ind.total(), je),
            };
            on_record(&record, &ind);
            records.push(record);

            if loop_index == config.max_loops {
                return Ok(None);
            }
            let decision = decide(ind.eta_tau, ind.eta_h, config.omega);
            let (next_partition, next_meshes) = refine_grids(
                &partition,
                &meshes,
                &ind,
                decision,
                config.theta_tau,
                config.theta_h,
            )?;
            if let Some(cap) = config.max_total_dof {
                let next_spaces = build_spaces(&next_meshes, config.p)?;
                if total_dofs(&next_spaces, config.r) > cap {
                    return Ok(None);
                }
            }
            Ok(Some((next_partition, next_meshes)))
        })();

        match step {
            Ok(Some((next_partition, next_meshes))) => {
                partition = next_partition;
                meshes = next_meshes;
            }
            Ok(None) => break None,
            Err(e) => break Some(e),
        }
    };

    AdaptOutcome { records, partition, meshes, failure }
}
