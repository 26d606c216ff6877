//! End-to-end run: quadrature, reference kernel, split, RS assembly, delta
//! split, long-range solve, composition and oracle comparison.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{BcMode, RunConfig};
use crate::delta::{build_delta_split, compose_total};
use crate::error::{Error, Result};
use crate::field::GridFunction3;
use crate::grid::Grid3;
use crate::kernel::{assemble_reference_tensor, count_split_gamma, split_reference, split_reference_at, KernelSplit};
use crate::laplacian::DiscreteLaplacian;
use crate::molecule::Molecule;
use crate::poisson::{poisson_solve, Boundary, SolveReport};
use crate::quadrature::{build_quadrature, build_quadrature_for_tolerance, SincQuadrature};
use crate::rs::{assemble_uncompressed, RsTensor};
use crate::scalar::Real;
use crate::validation::{compare, compare_skipping, direct_sum_oracle, ErrorReport, OracleKernel, SingularPolicy};

/// Oracle comparisons run only up to this many atoms.
pub const ORACLE_MAX_ATOMS: usize = 2000;

/// Ordered `key=value` metrics. Contains no timings, so identical inputs
/// give byte-identical text.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Metrics {
    entries: Vec<(String, String)>,
}

impl Metrics {
    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct Artifacts<T> {
    pub grid: Grid3<T>,
    pub quadrature: SincQuadrature<T>,
    pub rs: RsTensor<T>,
    pub long: GridFunction3<T>,
    pub short: GridFunction3<T>,
    pub total: GridFunction3<T>,
    pub solve: SolveReport,
    pub oracle: Option<ErrorReport>,
    pub exact: Option<ErrorReport>,
    pub metrics: Metrics,
    /// Wall seconds per stage.
    pub timings: Vec<(&'static str, f64)>,
}

struct Clock {
    laps: Vec<(&'static str, f64)>,
    last: Instant,
}

impl Clock {
    fn new() -> Self {
        Self { laps: Vec::new(), last: Instant::now() }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        self.laps.push((stage, (now - self.last).as_secs_f64()));
        self.last = now;
    }
}

fn cache_file(dir: &Path, n: usize, rank: Option<usize>, tol: f64) -> PathBuf {
    match rank {
        Some(r) => dir.join(format!("quad_n{n}_R{r}.txt")),
        None => dir.join(format!("quad_n{n}_tol{tol:e}.txt")),
    }
}

/// Quadrature in grid units, on `[1, √3 n]`: the fit for a grid of spacing
/// `h` is this rule rescaled by `h`. With a cache directory the fit is read
/// from, or written to, a text file keyed by `n` and the rank or tolerance.
pub fn normalized_quadrature<T: Real>(n: usize, rank: Option<usize>, tol: f64, cache: Option<&Path>) -> Result<SincQuadrature<T>> {
    let path = cache.map(|d| cache_file(d, n, rank, tol));
    if let Some(p) = &path {
        if let Ok(text) = fs::read_to_string(p) {
            if let Ok(q) = SincQuadrature::from_text(&text) {
                return Ok(q);
            }
        }
    }
    let hi = T::of(3f64.sqrt() * n as f64);
    let q = match rank {
        Some(r) => build_quadrature(r, T::one(), hi)?,
        None => build_quadrature_for_tolerance(T::of(tol), T::one(), hi)?,
    };
    if let Some(p) = &path {
        if let Some(dir) = p.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(p, q.to_text())?;
    }
    Ok(q)
}

/// Dense `δ_l` of an RS tensor, the right-hand side of the long-range solve.
///
/// The delta split is built (checking grids), and its long part is
/// materialized as `-Δ_h` applied to the dense long field: the same grid
/// function as the rank-`3R_L` tensor at a third of the cost.
pub fn long_rhs<T: Real>(rs: &RsTensor<T>, lap: &DiscreteLaplacian<T>) -> Result<GridFunction3<T>> {
    let delta = build_delta_split(rs, lap)?;
    debug_assert_eq!(delta.delta_long().rank(), 3 * rs.long_rank());
    let grid = *rs.grid();
    let mut v = DiscreteLaplacian::unscreened(grid).apply_dense(&rs.long().to_dense());
    v.iter_mut().for_each(|x| *x = -*x);
    GridFunction3::new(grid, v)
}

/// Output of the front half of the pipeline: grid, kernel and compressed RS
/// tensor of a molecule.
#[derive(Clone, Debug)]
pub struct Assembled<T> {
    /// Box half-width in Å.
    pub b: f64,
    pub grid: Grid3<T>,
    /// Quadrature rescaled to the grid.
    pub quadrature: SincQuadrature<T>,
    pub split: KernelSplit<T>,
    pub short_columns: usize,
    pub rs: RsTensor<T>,
}

/// Validates `cfg`, resolves the box and assembles the compressed RS tensor.
pub fn assemble_for<T: Real>(cfg: &RunConfig, m: &Molecule) -> Result<Assembled<T>> {
    cfg.validate().map_err(|e| Error::from(e).in_stage("config"))?;
    assemble_timed(cfg, m, &mut Clock::new())
}

fn assemble_timed<T: Real>(cfg: &RunConfig, m: &Molecule, clock: &mut Clock) -> Result<Assembled<T>> {
    let q_norm: SincQuadrature<T> = normalized_quadrature(cfg.n, cfg.rank, cfg.eps_kernel, cfg.cache_dir.as_deref())
        .map_err(|e| e.in_stage("quadrature"))?;
    if let Some(rl) = cfg.long_rank {
        if rl > q_norm.rank() {
            return Err(Error::from(crate::config::ConfigError::LongRank { long_rank: rl, rank: q_norm.rank() }).in_stage("config"));
        }
    }
    // Threshold splits use the configured gamma; count splits imply one.
    let gamma = match cfg.long_rank {
        Some(rl) if rl < q_norm.rank() => count_split_gamma(q_norm.nodes()[rl], T::of(cfg.eps_support)),
        Some(_) => 1,
        None => cfg.gamma,
    };
    let b = cfg.resolve_box(m, gamma).map_err(|e| Error::from(e).in_stage("config"))?;
    cfg.check_margin(m, b, gamma).map_err(|e| Error::from(e).in_stage("config"))?;
    let grid = Grid3::new(T::of(b), cfg.n).map_err(|e| e.in_stage("config"))?;
    let q = q_norm.rescaled(grid.h()).map_err(|e| e.in_stage("quadrature"))?;
    clock.lap("quadrature");

    let kernel = assemble_reference_tensor(&q, &grid).map_err(|e| e.in_stage("kernel"))?;
    let eps_support = T::of(cfg.eps_support);
    let kernel = match cfg.long_rank {
        Some(rl) => split_reference_at(&kernel, rl, eps_support),
        None => split_reference(&kernel, gamma, eps_support),
    }
    .map_err(|e| e.in_stage("split"))?;
    let split = *kernel.require_split()?;
    let short_columns = kernel.rank() - split.long_rank;
    clock.lap("kernel");

    let rs = assemble_uncompressed(m, &kernel).map_err(|e| e.in_stage("assemble"))?;
    clock.lap("assemble");
    let rs = rs.compressed(T::of(cfg.eps_c2t)).map_err(|e| e.in_stage("compress"))?;
    clock.lap("compress");
    Ok(Assembled { b, grid, quadrature: q, split, short_columns, rs })

}

/// Runs the full pipeline and, when `cfg.out_dir` is set, writes artifacts.
pub fn run_pipeline<T: Real>(cfg: &RunConfig, m: &Molecule) -> Result<Artifacts<T>> {
    let mut clock = Clock::new();
    cfg.validate().map_err(|e| Error::from(e).in_stage("config"))?;

    let Assembled { b, grid, quadrature: q, split, short_columns, rs } = assemble_timed(cfg, m, &mut clock)?;

    let lap = DiscreteLaplacian::new(grid, T::of(cfg.kappa)).map_err(|e| e.in_stage("delta"))?;
    let rhs = long_rhs(&rs, &lap).map_err(|e| e.in_stage("delta"))?;
    clock.lap("delta");

    let bc = match cfg.bc {
        BcMode::Homogeneous => Boundary::Homogeneous,
        BcMode::Analytic => Boundary::analytic(m, &grid, cfg.kappa),
    };
    let (long, solve) = poisson_solve(&rhs, &lap, &bc, cfg.solver).map_err(|e| e.in_stage("solve"))?;
    drop(rhs);
    clock.lap("solve");

    let short = GridFunction3::new(grid, rs.short_dense()).map_err(|e| e.in_stage("compose"))?;
    let total = compose_total(&long, &rs).map_err(|e| e.in_stage("compose"))?;
    clock.lap("compose");

    let (oracle, exact) = if m.len() <= ORACLE_MAX_ATOMS {
        let o = direct_sum_oracle(m, &grid, OracleKernel::GaussianSum(&q), SingularPolicy::Error)
            .map_err(|e| e.in_stage("oracle"))?;
        let report = compare(&total, &o.field, Some(m)).map_err(|e| e.in_stage("oracle"))?;
        let exact = if cfg.exact_check {
            let o = direct_sum_oracle(m, &grid, OracleKernel::ExactNewton, SingularPolicy::Exclude)
                .map_err(|e| e.in_stage("oracle"))?;
            Some(compare_skipping(&total, &o.field, Some(m), &o.singular).map_err(|e| e.in_stage("oracle"))?)
        } else {
            None
        };
        (Some(report), exact)
    } else {
        (None, None)
    };
    clock.lap("oracle");

    let mut metrics = Metrics::default();
    metrics.push("molecule", m.name());
    metrics.push("atoms", m.len());
    metrics.push("net_charge", format!("{:e}", m.net_charge()));
    metrics.push("scalar", T::NAME);
    metrics.push("n", cfg.n);
    metrics.push("b", format!("{:e}", b));
    metrics.push("h", format!("{:e}", grid.h().to_f64_lossy()));
    metrics.push("rank", q.rank());
    metrics.push("quadrature_error", format!("{:e}", q.achieved_relative_error().to_f64_lossy()));
    metrics.push("split", if cfg.long_rank.is_some() { "count" } else { "threshold" });
    metrics.push("gamma", split.gamma);
    metrics.push("eps_support", format!("{:e}", cfg.eps_support));
    metrics.push("long_columns", split.long_rank);
    metrics.push("short_columns", short_columns);
    metrics.push("eps_c2t", format!("{:e}", cfg.eps_c2t));
    metrics.push("pre_compression_rank", rs.pre_compression_rank());
    metrics.push("long_rank", rs.long_rank());
    metrics.push("short_radius", rs.short_radius());
    metrics.push("storage", rs.storage());
    metrics.push("solver", solve.method);
    metrics.push("bc", cfg.bc.name());
    metrics.push("kappa", format!("{:e}", cfg.kappa));
    metrics.push("solver_residual", format!("{:e}", solve.residual));
    metrics.push("solver_iterations", solve.iterations);
    metrics.push("total_max_abs", format!("{:e}", total.max_abs().to_f64_lossy()));
    for (tag, rep) in [("oracle", &oracle), ("exact", &exact)] {
        if let Some(r) = rep {
            metrics.push(&format!("{tag}_discrete_l2"), format!("{:e}", r.discrete_l2));
            metrics.push(&format!("{tag}_rss"), format!("{:e}", r.rss));
            metrics.push(&format!("{tag}_relative_l2"), format!("{:e}", r.relative_l2));
            metrics.push(&format!("{tag}_max_abs"), format!("{:e}", r.max_abs));
            metrics.push(&format!("{tag}_max_abs_excluding_cores"), format!("{:e}", r.max_abs_excluding_cores));
        }
    }
    if oracle.is_none() {
        metrics.push("oracle", format!("skipped (more than {ORACLE_MAX_ATOMS} atoms)"));
    }

    let mut art = Artifacts {
        grid,
        quadrature: q,
        rs,
        long,
        short,
        total,
        solve,
        oracle,
        exact,
        metrics,
        timings: Vec::new(),
    };
    if let Some(dir) = &cfg.out_dir {
        write_artifacts(&art, dir).map_err(|e| e.in_stage("write"))?;
        clock.lap("write");
        write_timings(&clock.laps, dir).map_err(|e| e.in_stage("write"))?;
    }
    art.timings = clock.laps;
    Ok(art)
}

fn write_artifacts<T: Real>(art: &Artifacts<T>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let side = |what: &str| {
        vec![
            ("component", what.to_string()),
            ("bc", art.solve.boundary.to_string()),
            ("solver", art.solve.method.to_string()),
            ("solver_residual", format!("{:e}", art.solve.residual)),
        ]
    };
    art.total.dump(dir, "total", &side("total"))?;
    art.long.dump(dir, "long", &side("long"))?;
    art.short.dump(dir, "short", &side("short"))?;
    art.rs.save(&dir.join("rs"))?;
    fs::write(dir.join("quadrature.txt"), art.quadrature.to_text())?;
    fs::write(dir.join("metrics.txt"), art.metrics.to_text())?;
    if let Some(r) = &art.oracle {
        r.write(&dir.join("oracle_report.txt"))?;
    }
    if let Some(r) = &art.exact {
        r.write(&dir.join("exact_report.txt"))?;
    }
    Ok(())
}

fn write_timings(laps: &[(&'static str, f64)], dir: &Path) -> Result<()> {
    let mut s = String::new();
    for (k, v) in laps {
        let _ = writeln!(s, "{k}_seconds={v:.6}");
    }
    fs::write(dir.join("timings.txt"), s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BoxSpec;
    use crate::molecule::{acetazolamide18, born_ion};

    fn small_cfg() -> RunConfig {
        RunConfig { n: 33, box_spec: BoxSpec::Fixed(8.0), rank: Some(16), gamma: 4, ..RunConfig::default() }
    }

    #[test]
    fn born_ion_small_run() {
        let art = run_pipeline::<f64>(&small_cfg(), &born_ion()).unwrap();
        let r = art.oracle.as_ref().unwrap();
        assert!(r.relative_l2 < 1e-9, "{r}");
        assert!(art.solve.residual < 1e-12);
        assert_eq!(art.metrics.get("atoms"), Some("1"));
    }

    #[test]
    fn metrics_are_deterministic_and_written() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { out_dir: Some(dir.path().join("a")), ..small_cfg() };
        let a = run_pipeline::<f64>(&cfg, &acetazolamide18()).unwrap();
        let cfg2 = RunConfig { out_dir: Some(dir.path().join("b")), ..small_cfg() };
        run_pipeline::<f64>(&cfg2, &acetazolamide18()).unwrap();
        let ma = fs::read(dir.path().join("a/metrics.txt")).unwrap();
        let mb = fs::read(dir.path().join("b/metrics.txt")).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(String::from_utf8(ma).unwrap(), a.metrics.to_text());
        for f in ["total.f64", "total.txt", "long.f64", "short.f64", "timings.txt", "rs/rs.txt", "oracle_report.txt"] {
            assert!(dir.path().join("a").join(f).exists(), "{f}");
        }
        let back = GridFunction3::<f64>::load_dump(&dir.path().join("a"), "total").unwrap();
        assert_eq!(back, a.total);
    }

    #[test]
    fn margin_violation_aborts_in_config_stage() {
        let cfg = RunConfig { box_spec: BoxSpec::Fixed(4.0), ..small_cfg() };
        let e = run_pipeline::<f64>(&cfg, &acetazolamide18()).unwrap_err();
        assert!(matches!(&e, Error::Stage { stage: "config", .. }), "{e}");
        assert_eq!(e.class(), crate::error::ErrorClass::Config);
    }

    #[test]
    fn quadrature_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let a: SincQuadrature<f64> = normalized_quadrature(33, Some(8), 1e-6, Some(dir.path())).unwrap();
        assert!(dir.path().join("quad_n33_R8.txt").exists());
        let b: SincQuadrature<f64> = normalized_quadrature(33, Some(8), 1e-6, Some(dir.path())).unwrap();
        assert_eq!(a, b);
    }
}
