//! Run configuration: a flat `key=value` text format describing one
//! experiment — which benchmark problem, which discretization degrees and
//! weight strategy, the adaptivity knobs, and the initial grids. Unknown
//! keys are hard errors so that typos cannot silently fall back to
//! defaults.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::adapt::AdaptConfig;
use crate::estimator::TemporalWeight;
use crate::mesh::{Rect, SpatialMesh};
use crate::problem::{Preset, Problem};
use crate::time::TimePartition;
use crate::{Error, Result};

/// A fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub preset: Preset,
    pub mode: TemporalWeight,
    pub p: usize,
    pub r: usize,
    pub q: usize,
    pub s: usize,
    pub omega: f64,
    pub theta_tau: f64,
    pub theta_h: f64,
    pub eps: f64,
    pub delta0: f64,
    /// Initial number of slabs.
    pub n_slabs: usize,
    /// Initial mesh subdivisions.
    pub nx: usize,
    pub ny: usize,
    pub max_loops: usize,
    pub max_total_dof: Option<usize>,
    /// Output directory from the config file (flags and the environment
    /// can override it).
    pub out_dir: Option<PathBuf>,
    /// Write per-loop indicator breakdowns next to the record CSV.
    pub dump_indicators: bool,
}

fn preset_from_name(value: &str) -> Result<Preset> {
    match value {
        "ex1" | "ex1-rotating-hill" => Ok(Preset::RotatingHill),
        "ex2" | "ex2-moving-hump" => Ok(Preset::MovingHump),
        other => Err(Error::InvalidInput(format!(
            "preset: unknown preset '{other}' (expected ex1[-rotating-hill] or ex2[-moving-hump])"
        ))),
    }
}

fn mode_from_name(value: &str) -> Result<TemporalWeight> {
    match value {
        "hoRe" => Ok(TemporalWeight::Reconstruction),
        "hoFE" => Ok(TemporalWeight::EnrichedSpace),
        other => Err(Error::InvalidInput(format!(
            "mode: unknown mode '{other}' (expected hoRe or hoFE)"
        ))),
    }
}

impl RunConfig {
    /// Preset defaults: the initial grids, stabilization, and equilibration
    /// factor each benchmark is conventionally run with.
    pub fn defaults(preset: Preset) -> Self {
        let (omega, eps, delta0, n_slabs, nx) = match preset {
            Preset::RotatingHill => (1.5, 1.0, 0.0, 25, 4),
            Preset::MovingHump => (2.0, 1e-3, 1.0, 10, 8),
        };
        Self {
            preset,
            mode: TemporalWeight::Reconstruction,
            p: 1,
            r: 0,
            q: 2,
            s: 0,
            omega,
            theta_tau: 0.3,
            theta_h: 0.3,
            eps,
            delta0,
            n_slabs,
            nx,
            ny: nx,
            max_loops: 1,
            max_total_dof: None,
            out_dir: None,
            dump_indicators: false,
        }
    }

    /// Parse the flat `key=value` format. Lines may be blank or start with
    /// `#`; every other line must be `key=value` with a known key. Keys:
    /// preset, mode, p, r, q, s, omega, theta_tau, theta_h, eps, delta0,
    /// N, nx, ny, max_loops, max_total_dof, out_dir, dump_indicators.
    /// `s` defaults to the mode's required dual degree when absent.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs: Vec<(String, String)> = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(idx) => &raw[..idx],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidInput(format!(
                    "config line {}: expected key=value, got '{}'",
                    lineno + 1,
                    line
                ))
            })?;
            let key = key.trim().to_string();
            if pairs.iter().any(|(k, _)| *k == key) {
                return Err(Error::InvalidInput(format!(
                    "{key}: duplicate key (line {})",
                    lineno + 1
                )));
            }
            pairs.push((key, value.trim().to_string()));
        }

        let preset_value = pairs
            .iter()
            .find(|(k, _)| k == "preset")
            .map(|(_, v)| v.clone())
            .ok_or_else(|| Error::InvalidInput("preset: missing required key".into()))?;
        let mut cfg = Self::defaults(preset_from_name(&preset_value)?);

        fn num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::InvalidInput(format!("{key}: cannot parse '{value}'"))
            })
        }

        let mut s_given = false;
        for (key, value) in &pairs {
            match key.as_str() {
                "preset" => {}
                "mode" => cfg.mode = mode_from_name(value)?,
                "p" => cfg.p = num(key, value)?,
                "r" => cfg.r = num(key, value)?,
                "q" => cfg.q = num(key, value)?,
                "s" => {
                    cfg.s = num(key, value)?;
                    s_given = true;
                }
                "omega" => cfg.omega = num(key, value)?,
                "theta_tau" => cfg.theta_tau = num(key, value)?,
                "theta_h" => cfg.theta_h = num(key, value)?,
                "eps" => cfg.eps = num(key, value)?,
                "delta0" => cfg.delta0 = num(key, value)?,
                "N" => cfg.n_slabs = num(key, value)?,
                "nx" => cfg.nx = num(key, value)?,
                "ny" => cfg.ny = num(key, value)?,
                "max_loops" => cfg.max_loops = num(key, value)?,
                "max_total_dof" => {
                    cfg.max_total_dof = if value == "none" {
                        None
                    } else {
                        Some(num(key, value)?)
                    }
                }
                "out_dir" => cfg.out_dir = Some(PathBuf::from(value)),
                "dump_indicators" => {
                    cfg.dump_indicators = match value.as_str() {
                        "true" => true,
                        "false" => false,
                        other => {
                            return Err(Error::InvalidInput(format!(
                                "dump_indicators: expected true or false, got '{other}'"
                            )))
                        }
                    }
                }
                other => {
                    return Err(Error::InvalidInput(format!(
                        "{other}: unknown config key"
                    )))
                }
            }
        }
        if !s_given {
            cfg.s = cfg.mode.dual_degree(cfg.r);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidInput(format!("config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Range checks beyond what parsing enforces; every message names the
    /// offending key.
    pub fn validate(&self) -> Result<()> {
        if !(self.eps > 0.0) {
            return Err(Error::InvalidInput(format!(
                "eps: diffusion coefficient must be positive, got {}",
                self.eps
            )));
        }
        if !(self.delta0 >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "delta0: stabilization scale must be nonnegative, got {}",
                self.delta0
            )));
        }
        if self.n_slabs == 0 {
            return Err(Error::InvalidInput("N: need at least one slab".into()));
        }
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidInput(format!(
                "nx/ny: mesh subdivisions must be positive, got {}×{}",
                self.nx, self.ny
            )));
        }
        if self.p == 0 || self.p > 3 || self.q > 3 {
            return Err(Error::InvalidInput(format!(
                "p/q: spatial degrees must lie in 1..=3, got p={} q={}",
                self.p, self.q
            )));
        }
        if self.q <= self.p {
            return Err(Error::InvalidInput(format!(
                "q: dual spatial degree must exceed p ({} ≤ {})",
                self.q, self.p
            )));
        }
        if !(self.omega >= 1.5 && self.omega <= 3.5) {
            return Err(Error::InvalidInput(format!(
                "omega: equilibration factor must lie in [1.5, 3.5], got {}",
                self.omega
            )));
        }
        for (name, theta) in [("theta_tau", self.theta_tau), ("theta_h", self.theta_h)] {
            if !(theta > 0.0 && theta <= 1.0) {
                return Err(Error::InvalidInput(format!(
                    "{name}: marking fraction must lie in (0, 1], got {theta}"
                )));
            }
        }
        if self.s != self.mode.dual_degree(self.r) {
            return Err(Error::InvalidInput(format!(
                "s: mode {} at r={} needs s={}, got {}",
                self.mode.name(),
                self.r,
                self.mode.dual_degree(self.r),
                self.s
            )));
        }
        Ok(())
    }

    /// The problem instance this config describes, with its diffusion and
    /// stabilization overrides applied.
    pub fn problem(&self) -> Result<Problem> {
        let mut problem = match self.preset {
            Preset::RotatingHill => Problem::rotating_hill(),
            Preset::MovingHump => Problem::moving_hump(self.eps)?,
        };
        problem.epsilon = self.eps;
        problem.delta0 = self.delta0;
        Ok(problem)
    }

    /// The initial time partition. The rotating-hill solution has a
    /// temporal slope kink at T/2, so its partition splits the slab count
    /// into two uniform halves aligned with the kink (for even N this
    /// coincides with the uniform partition); the hump preset is uniform.
    pub fn initial_partition(&self) -> Result<TimePartition> {
        let final_time = match self.preset {
            Preset::RotatingHill => 1.0,
            Preset::MovingHump => 0.5,
        };
        match self.preset {
            Preset::RotatingHill if self.n_slabs >= 2 => {
                let half = final_time / 2.0;
                let first = self.n_slabs.div_ceil(2);
                let second = self.n_slabs - first;
                let mut points = Vec::with_capacity(self.n_slabs + 1);
                for i in 0..=first {
                    points.push(half * i as f64 / first as f64);
                }
                for j in 1..=second {
                    points.push(half + half * j as f64 / second as f64);
                }
                TimePartition::from_points(points)
            }
            _ => TimePartition::uniform(final_time, self.n_slabs),
        }
    }

    pub fn initial_mesh(&self) -> Result<Arc<SpatialMesh>> {
        Ok(Arc::new(SpatialMesh::uniform(Rect::unit(), self.nx, self.ny)?))
    }

    pub fn adapt_config(&self) -> AdaptConfig {
        AdaptConfig {
            mode: self.mode,
            p: self.p,
            r: self.r,
            q: self.q,
            s: self.s,
            omega: self.omega,
            theta_tau: self.theta_tau,
            theta_h: self.theta_h,
            max_loops: self.max_loops,
            max_total_dof: self.max_total_dof,
        }
    }

    /// File-name stem identifying this run: preset, mode, and diffusion.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_eps{:e}",
            match self.preset {
                Preset::RotatingHill => "ex1-rotating-hill",
                Preset::MovingHump => "ex2-moving-hump",
            },
            self.mode.name(),
            self.eps
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn benchmark_setup_line_parses_to_the_reported_grid() {
        let cfg = RunConfig::parse(
            "preset=ex1\nmode=hoRe\np=1\nr=0\nq=2\ns=0\nomega=1.5\ndelta0=0\nN=25\nnx=4\nny=4\n",
        )
        .unwrap();
        assert_eq!(cfg.preset, Preset::RotatingHill);
        assert_eq!(cfg.mode, TemporalWeight::Reconstruction);
        assert_eq!((cfg.p, cfg.r, cfg.q, cfg.s), (1, 0, 2, 0));
        assert_eq!(cfg.omega, 1.5);
        assert_eq!(cfg.delta0, 0.0);
        assert_eq!(cfg.eps, 1.0);
        assert_eq!(cfg.n_slabs, 25);
        assert_eq!((cfg.nx, cfg.ny), (4, 4));
        let partition = cfg.initial_partition().unwrap();
        assert_eq!(partition.n_slabs(), 25);
        assert_eq!(cfg.initial_mesh().unwrap().n_cells(), 16);
    }

    #[test]
    fn out_of_range_equilibration_is_rejected_by_key() {
        let err = RunConfig::parse("preset=ex1\nomega=1.0\n").unwrap_err();
        assert!(err.to_string().contains("omega"), "{err}");
        let err = RunConfig::parse("preset=ex1\nomega=3.6\n").unwrap_err();
        assert!(err.to_string().contains("omega"), "{err}");
    }

    #[test]
    fn enriched_space_mode_with_matching_degrees_is_rejected() {
        let err = RunConfig::parse("preset=ex1\nmode=hoFE\nr=0\ns=0\n").unwrap_err();
        assert!(err.to_string().contains('s'), "{err}");
        // Without an explicit s the mode's requirement fills in.
        let ok = RunConfig::parse("preset=ex1\nmode=hoFE\nr=0\n").unwrap();
        assert_eq!(ok.s, 1);
    }

    #[test]
    fn unknown_and_duplicate_keys_are_hard_errors() {
        let err = RunConfig::parse("preset=ex1\nspeling=4\n").unwrap_err();
        assert!(err.to_string().contains("speling"), "{err}");
        let err = RunConfig::parse("preset=ex1\nnx=4\nnx=5\n").unwrap_err();
        assert!(err.to_string().contains("nx"), "{err}");
        let err = RunConfig::parse("nx=4\n").unwrap_err();
        assert!(err.to_string().contains("preset"), "{err}");
        let err = RunConfig::parse("preset=ex1\nnx four\n").unwrap_err();
        assert!(err.to_string().contains("key=value"), "{err}");
        let err = RunConfig::parse("preset=ex1\nnx=four\n").unwrap_err();
        assert!(err.to_string().contains("nx"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let cfg = RunConfig::parse(
            "# benchmark\n\npreset = ex2   # hump\n  eps = 1e-4\nmax_loops=3\n",
        )
        .unwrap();
        assert_eq!(cfg.preset, Preset::MovingHump);
        assert_eq!(cfg.eps, 1e-4);
        assert_eq!(cfg.max_loops, 3);
    }

    #[test]
    fn hump_defaults_follow_its_benchmark_convention() {
        let cfg = RunConfig::parse("preset=ex2-moving-hump\n").unwrap();
        assert_eq!(cfg.omega, 2.0);
        assert_eq!(cfg.delta0, 1.0);
        assert_eq!(cfg.eps, 1e-3);
        assert_eq!(cfg.n_slabs, 10);
        assert_eq!((cfg.nx, cfg.ny), (8, 8));
        assert_eq!(cfg.max_loops, 1);
        assert!(cfg.max_total_dof.is_none());
        assert!(!cfg.dump_indicators);
        let partition = cfg.initial_partition().unwrap();
        assert_eq!(partition.n_slabs(), 10);
        assert_relative_eq!(partition.final_time(), 0.5);
        for n in 0..10 {
            assert_relative_eq!(partition.width(n), 0.05, max_relative = 1e-12);
        }
        let problem = cfg.problem().unwrap();
        assert_eq!(problem.epsilon, 1e-3);
        assert_eq!(problem.delta0, 1.0);
        assert_eq!(cfg.stem(), "ex2-moving-hump_hoRe_eps1e-3");
    }

    #[test]
    fn hill_partition_aligns_with_the_data_kink() {
        let cfg = RunConfig::parse("preset=ex1\nN=25\n").unwrap();
        let partition = cfg.initial_partition().unwrap();
        assert_eq!(partition.n_slabs(), 25);
        let points = partition.points();
        assert_relative_eq!(points[13], 0.5, max_relative = 1e-15);
        for n in 0..13 {
            assert_relative_eq!(partition.width(n), 0.5 / 13.0, max_relative = 1e-12);
        }
        for n in 13..25 {
            assert_relative_eq!(partition.width(n), 0.5 / 12.0, max_relative = 1e-12);
        }
        // Even split degenerates to the uniform partition.
        let cfg = RunConfig::parse("preset=ex1\nN=20\n").unwrap();
        let partition = cfg.initial_partition().unwrap();
        for n in 0..20 {
            assert_relative_eq!(partition.width(n), 0.05, max_relative = 1e-12);
        }
        // A single slab cannot align with the kink.
        let cfg = RunConfig::parse("preset=ex1\nN=1\n").unwrap();
        assert_eq!(cfg.initial_partition().unwrap().n_slabs(), 1);
    }

    #[test]
    fn coefficient_overrides_reach_the_problem() {
        let cfg = RunConfig::parse("preset=ex1\neps=0.5\ndelta0=0.25\n").unwrap();
        let problem = cfg.problem().unwrap();
        assert_eq!(problem.epsilon, 0.5);
        assert_eq!(problem.delta0, 0.25);
        assert_eq!(problem.final_time, 1.0);
        let err = RunConfig::parse("preset=ex2\neps=0\n").unwrap_err();
        assert!(err.to_string().contains("eps"), "{err}");
    }

    #[test]
    fn adapt_config_carries_the_loop_knobs() {
        let cfg = RunConfig::parse(
            "preset=ex2\nmode=hoFE\nmax_loops=4\nmax_total_dof=200000\ntheta_tau=0.4\n",
        )
        .unwrap();
        let ac = cfg.adapt_config();
        assert!(ac.validate().is_ok());
        assert_eq!(ac.mode, TemporalWeight::EnrichedSpace);
        assert_eq!(ac.s, 1);
        assert_eq!(ac.max_loops, 4);
        assert_eq!(ac.max_total_dof, Some(200_000));
        assert_eq!(ac.theta_tau, 0.4);
        assert_eq!(ac.theta_h, 0.3);
        let none = RunConfig::parse("preset=ex2\nmax_total_dof=none\n").unwrap();
        assert!(none.max_total_dof.is_none());
    }
}
