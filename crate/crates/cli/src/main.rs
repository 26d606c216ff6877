//! `rspbe`: range-separated tensor electrostatics from the command line.
//!
//! Exit codes: 0 on success, 2 for usage and configuration errors, 3 for
//! numerical failures, 4 for I/O and input-format errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rspbe::config::MIN_RUN_N;
use rspbe::molecule::{acetazolamide18, born_ion, cluster1228, cluster782, fixed_density_cloud};
use rspbe::pipeline::normalized_quadrature;
use rspbe::validation::{compare_skipping, OracleField};
use rspbe::{
    assemble_for, compose_total, direct_sum_oracle, export_slice, long_rhs, parse_pqr, poisson_solve, run_pipeline,
    BcMode, Boundary, BoxSpec, DiscreteLaplacian, Error, ErrorClass, ExportFormat, GridFunction3, Molecule,
    OracleKernel, Result, RsTensor, RunConfig, SincQuadrature, SingularPolicy, SolverMethod,
};

#[derive(Parser)]
#[command(name = "rspbe", version, about = "Range-separated tensor solver for molecular electrostatics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the Gaussian-sum quadrature for a grid size and report it.
    Kernel(KernelArgs),
    /// Assemble and compress the RS tensor of a molecule.
    Assemble {
        #[command(flatten)]
        mol: MolArgs,
        #[command(flatten)]
        run: RunArgs,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve for the long-range potential of an assembled RS tensor and
    /// compose the total potential.
    Solve {
        /// Directory written by `assemble`.
        #[arg(long)]
        rs: PathBuf,
        #[command(flatten)]
        solve: SolveArgs,
        /// Molecule, needed only for analytic boundary values.
        #[command(flatten)]
        mol: MolArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline: assemble, solve, compose and compare with the oracle.
    Run {
        #[command(flatten)]
        mol: MolArgs,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also compare against the exact point-charge sum.
        #[arg(long)]
        exact_check: bool,
    },
    /// Compare a dumped field with the direct-sum oracle.
    Validate {
        /// Directory holding the dumped field.
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value = "total")]
        stem: String,
        #[command(flatten)]
        mol: MolArgs,
        /// Quadrature file (default: FIELD/quadrature.txt).
        #[arg(long)]
        quadrature: Option<PathBuf>,
        /// Compare against the exact point-charge sum instead.
        #[arg(long)]
        exact: bool,
        /// Report path (default: FIELD/validate_report.txt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a slice (CSV or VTK) or the whole volume (VTK) of a dumped field.
    Export {
        #[arg(long)]
        field: PathBuf,
        #[arg(long, default_value = "total")]
        stem: String,
        /// Axis normal to the slice, 1..=3. VTK without an axis writes the volume.
        #[arg(long)]
        axis: Option<usize>,
        /// Slice index (default: mid-plane).
        #[arg(long)]
        index: Option<usize>,
        #[arg(long, value_enum)]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct KernelArgs {
    #[arg(long, default_value_t = 129)]
    n: usize,
    /// Fixed quadrature rank; otherwise the smallest rank meeting --eps-kernel.
    #[arg(long)]
    rank: Option<usize>,
    #[arg(long, default_value_t = 1e-7)]
    eps_kernel: f64,
    #[arg(long, env = "RSPBE_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    /// Also write the normalized quadrature to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(multiple = false)]
struct MolArgs {
    /// PQR file.
    #[arg(long)]
    pqr: Option<PathBuf>,
    /// Built-in molecule.
    #[arg(long, value_enum)]
    fixture: Option<Fixture>,
    /// Synthetic cloud of this many charges at fixed density.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Seed for --synthetic.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Fixture {
    Born,
    Acetazolamide18,
    Cluster782,
    Cluster1228,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 129)]
    n: usize,
    /// Box half-width in Å, or `auto`.
    #[arg(long = "box", default_value = "auto", value_parser = parse_box)]
    box_spec: BoxSpec,
    #[arg(long)]
    rank: Option<usize>,
    /// Separation parameter in grid units (threshold split).
    #[arg(long, default_value_t = 8)]
    gamma: usize,
    #[arg(long, default_value_t = 1e-7)]
    eps_kernel: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps_c2t: f64,
    #[arg(long, default_value_t = 1e-8)]
    eps_support: f64,
    /// Count split: the first LONG_RANK columns are long-range.
    #[arg(long)]
    long_rank: Option<usize>,
    #[arg(long, env = "RSPBE_CACHE_DIR")]
    cache_dir: Option<PathBuf>,
    #[command(flatten)]
    solve: SolveArgs,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long, value_enum, default_value_t = Solver::Spectral)]
    solver: Solver,
    #[arg(long, default_value_t = 1e-10)]
    cg_tol: f64,
    #[arg(long, default_value_t = 2000)]
    cg_max_iter: usize,
    #[arg(long, value_enum, default_value_t = Bc::Homogeneous)]
    bc: Bc,
    /// Inverse Debye length in 1/Å.
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Solver {
    Spectral,
    Cg,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bc {
    Homogeneous,
    Analytic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Vtk,
}

fn parse_box(s: &str) -> std::result::Result<BoxSpec, String> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(BoxSpec::Auto);
    }
    s.parse::<f64>().map(BoxSpec::Fixed).map_err(|_| format!("expected `auto` or a half-width in Å, got {s:?}"))
}

impl MolArgs {
    fn load(&self) -> Result<Option<Molecule>> {
        if let Some(p) = &self.pqr {
            return parse_pqr(p).map(Some);
        }
        if let Some(f) = self.fixture {
            return Ok(Some(match f {
                Fixture::Born => born_ion(),
                Fixture::Acetazolamide18 => acetazolamide18(),
                Fixture::Cluster782 => cluster782(),
                Fixture::Cluster1228 => cluster1228(),
            }));
        }
        match self.synthetic {
            Some(k) => fixed_density_cloud(k, self.seed).map(Some),
            None => Ok(None),
        }
    }

    fn require(&self) -> Result<Molecule> {
        self.load()?
            .ok_or_else(|| Error::InvalidArgument("a molecule is required: pass --pqr, --fixture or --synthetic".into()))
    }
}

impl SolveArgs {
    fn method(&self) -> SolverMethod {
        match self.solver {
            Solver::Spectral => SolverMethod::Spectral,
            Solver::Cg => SolverMethod::Cg { tol: self.cg_tol, max_iter: self.cg_max_iter },
        }
    }

    fn bc(&self) -> BcMode {
        match self.bc {
            Bc::Homogeneous => BcMode::Homogeneous,
            Bc::Analytic => BcMode::Analytic,
        }
    }
}

impl RunArgs {
    fn config(&self, seed: u64) -> RunConfig {
        RunConfig {
            n: self.n,
            box_spec: self.box_spec,
            rank: self.rank,
            gamma: self.gamma,
            eps_kernel: self.eps_kernel,
            eps_c2t: self.eps_c2t,
            eps_support: self.eps_support,
            long_rank: self.long_rank,
            solver: self.solve.method(),
            bc: self.solve.bc(),
            kappa: self.solve.kappa,
            out_dir: None,
            seed,
            exact_check: false,
            cache_dir: self.cache_dir.clone(),
        }
    }
}

fn kernel(a: &KernelArgs) -> Result<()> {
    if a.n < MIN_RUN_N {
        return Err(rspbe::ConfigError::GridTooSmall { n: a.n }.into());
    }
    if !(a.eps_kernel > 0.0 && a.eps_kernel < 1.0) {
        return Err(rspbe::ConfigError::Tolerance { name: "eps_kernel", value: a.eps_kernel }.into());
    }
    let q: SincQuadrature<f64> = normalized_quadrature(a.n, a.rank, a.eps_kernel, a.cache_dir.as_deref())?;
    if let Some(p) = &a.out {
        write_file(p, &q.to_text())?;
    }
    let (lo, hi) = q.interval();
    println!("n={}", a.n);
    println!("rank={}", q.rank());
    println!("rho_min={lo:e}");
    println!("rho_max={hi:e}");
    println!("achieved_relative_error={:e}", q.achieved_relative_error());
    Ok(())
}

fn assemble(mol: &MolArgs, run: &RunArgs, out: &Path) -> Result<()> {
    let m = mol.require()?;
    let a = assemble_for::<f64>(&run.config(mol.seed), &m)?;
    a.rs.save(&out.join("rs"))?;
    write_file(&out.join("quadrature.txt"), &a.quadrature.to_text())?;
    let summary = format!(
        "molecule={}\natoms={}\nn={}\nb={:e}\nh={:e}\nrank={}\ngamma={}\nlong_columns={}\nshort_columns={}\npre_compression_rank={}\nlong_rank={}\nshort_radius={}\nstorage={}\n",
        m.name(),
        m.len(),
        a.grid.n(),
        a.b,
        a.grid.h(),
        a.quadrature.rank(),
        a.split.gamma,
        a.split.long_rank,
        a.short_columns,
        a.rs.pre_compression_rank(),
        a.rs.long_rank(),
        a.rs.short_radius(),
        a.rs.storage(),
    );
    write_file(&out.join("assemble.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

fn solve(rs_dir: &Path, s: &SolveArgs, mol: &MolArgs, out: &Path) -> Result<()> {
    let rs = RsTensor::<f64>::load(&rs_dir.join("rs"))?;
    let grid = *rs.grid();
    let lap = DiscreteLaplacian::new(grid, s.kappa)?;
    let method = s.method();
    if let SolverMethod::Cg { tol, max_iter } = method {
        if !(tol > 0.0 && tol < 1.0) || max_iter == 0 {
            return Err(rspbe::ConfigError::CgParameters { tol, max_iter }.into());
        }
    }
    let bc = match s.bc() {
        BcMode::Homogeneous => Boundary::Homogeneous,
        BcMode::Analytic => {
            let m = mol.load()?.ok_or_else(|| {
                Error::InvalidArgument("analytic boundary values need the molecule (--pqr, --fixture or --synthetic)".into())
            })?;
            Boundary::analytic(&m, &grid, s.kappa)
        }
    };
    let rhs = long_rhs(&rs, &lap).map_err(|e| e.in_stage("delta"))?;
    let (long, report) = poisson_solve(&rhs, &lap, &bc, method).map_err(|e| e.in_stage("solve"))?;
    let total = compose_total(&long, &rs)?;
    let short = GridFunction3::new(grid, rs.short_dense())?;
    let side = |what: &str| {
        vec![
            ("component", what.to_string()),
            ("bc", report.boundary.to_string()),
            ("solver", report.method.to_string()),
            ("solver_residual", format!("{:e}", report.residual)),
        ]
    };
    total.dump(out, "total", &side("total"))?;
    long.dump(out, "long", &side("long"))?;
    short.dump(out, "short", &side("short"))?;
    let q = rs_dir.join("quadrature.txt");
    if q.exists() {
        fs::copy(&q, out.join("quadrature.txt"))?;
    }
    println!("solver={}", report.method);
    println!("bc={}", report.boundary);
    println!("solver_residual={:e}", report.residual);
    println!("solver_iterations={}", report.iterations);
    println!("total_max_abs={:e}", total.max_abs());
    Ok(())
}

fn run(mol: &MolArgs, r: &RunArgs, out: Option<&Path>, exact_check: bool) -> Result<()> {
    let m = mol.require()?;
    let cfg = RunConfig { out_dir: out.map(Path::to_path_buf), exact_check, ..r.config(mol.seed) };
    let art = run_pipeline::<f64>(&cfg, &m)?;
    print!("{}", art.metrics.to_text());
    Ok(())
}

fn validate(field: &Path, stem: &str, mol: &MolArgs, quad: Option<&Path>, exact: bool, out: Option<&Path>) -> Result<()> {
    let m = mol.require()?;
    let f = GridFunction3::<f64>::load_dump(field, stem)?;
    let grid = *f.grid();
    let OracleField { field: o, singular } = if exact {
        direct_sum_oracle(&m, &grid, OracleKernel::ExactNewton, SingularPolicy::Exclude)?
    } else {
        let qp = quad.map(Path::to_path_buf).unwrap_or_else(|| field.join("quadrature.txt"));
        let q = SincQuadrature::<f64>::from_text(&fs::read_to_string(&qp)?)?;
        direct_sum_oracle(&m, &grid, OracleKernel::GaussianSum(&q), SingularPolicy::Error)?
    };
    let report = compare_skipping(&f, &o, Some(&m), &singular)?
        .with_echo("molecule", m.name())
        .with_echo("oracle", if exact { "exact_newton" } else { "gaussian_sum" });
    let path = out.map(Path::to_path_buf).unwrap_or_else(|| field.join("validate_report.txt"));
    report.write(&path)?;
    print!("{}", report.to_key_values());
    Ok(())
}

fn export(field: &Path, stem: &str, axis: Option<usize>, index: Option<usize>, format: Format, out: &Path) -> Result<()> {
    let f = GridFunction3::<f64>::load_dump(field, stem)?;
    let index = index.unwrap_or(f.grid().n() / 2);
    let format = match format {
        Format::Csv => ExportFormat::Csv,
        Format::Vtk => ExportFormat::Vtk,
    };
    export_slice(&f, axis, index, format, out)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        if !d.as_os_str().is_empty() {
            fs::create_dir_all(d)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Kernel(a) => kernel(&a),
        Command::Assemble { mol, run, out } => assemble(&mol, &run, &out),
        Command::Solve { rs, solve: s, mol, out } => solve(&rs, &s, &mol, &out),
        Command::Run { mol, run: r, out, exact_check } => run(&mol, &r, out.as_deref(), exact_check),
        Command::Validate { field, stem, mol, quadrature, exact, out } => {
            validate(&field, &stem, &mol, quadrature.as_deref(), exact, out.as_deref())
        }
        Command::Export { field, stem, axis, index, format, out } => export(&field, &stem, axis, index, format, &out),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e.class() {
                ErrorClass::Config => 2,
                ErrorClass::Numeric => 3,
                ErrorClass::Io => 4,
            })
        }
    }
}
