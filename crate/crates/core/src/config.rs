//! Run configuration and its validation.

use std::path::PathBuf;

use crate::molecule::Molecule;
use crate::poisson::SolverMethod;

/// Smallest grid accepted for molecule runs.
pub const MIN_RUN_N: usize = 33;

/// Each violated invariant has its own variant and stable code.
#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("[{}] {name} must lie in (0, 1), got {value}", self.code())]
    Tolerance { name: &'static str, value: f64 },
    #[error("[{}] grid size n={n} is below the minimum {MIN_RUN_N}", self.code())]
    GridTooSmall { n: usize },
    #[error("[{}] box half-width must be positive and finite, got {b}", self.code())]
    BoxWidth { b: f64 },
    #[error("[{}] gamma must be at least 1", self.code())]
    GammaZero,
    #[error("[{}] screening kappa must be finite and >= 0, got {kappa}", self.code())]
    Kappa { kappa: f64 },
    #[error("[{}] quadrature rank must be in 1..={max}, got {rank}", self.code())]
    Rank { rank: usize, max: usize },
    #[error("[{}] long rank {long_rank} exceeds the quadrature rank {rank}", self.code())]
    LongRank { long_rank: usize, rank: usize },
    #[error("[{}] cg needs tol in (0, 1) and max_iter > 0, got tol={tol}, max_iter={max_iter}", self.code())]
    CgParameters { tol: f64, max_iter: usize },
    #[error("[{}] atom {atom} is {distance} Å from a face, the margin rule needs {required} Å", self.code())]
    Margin { atom: usize, distance: f64, required: f64 },
    #[error("[{}] no box satisfies the margin: gamma={gamma} leaves no room on an n={n} grid", self.code())]
    AutoBox { gamma: usize, n: usize },
}

impl ConfigError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::Tolerance { .. } => "C01-tolerance",
            Self::GridTooSmall { .. } => "C02-grid",
            Self::BoxWidth { .. } => "C03-box",
            Self::GammaZero => "C04-gamma",
            Self::Kappa { .. } => "C05-kappa",
            Self::Rank { .. } => "C06-rank",
            Self::LongRank { .. } => "C07-long-rank",
            Self::CgParameters { .. } => "C08-cg",
            Self::Margin { .. } => "C09-margin",
            Self::AutoBox { .. } => "C10-auto-box",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BoxSpec {
    /// Fixed half-width in Å.
    Fixed(f64),
    /// Smallest box meeting the margin rule.
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BcMode {
    Homogeneous,
    /// Screened Coulomb sum of the molecule on the faces.
    Analytic,
}

impl BcMode {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Homogeneous => "homogeneous",
            Self::Analytic => "analytic",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n: usize,
    pub box_spec: BoxSpec,
    /// Quadrature rank; `None` picks the smallest rank meeting `eps_kernel`.
    pub rank: Option<usize>,
    /// Separation parameter in grid units.
    pub gamma: usize,
    pub eps_kernel: f64,
    pub eps_c2t: f64,
    /// Support tolerance of the threshold split.
    pub eps_support: f64,
    /// Count split: the first `long_rank` columns are long-range and the
    /// effective gamma is derived from the kernel.
    pub long_rank: Option<usize>,
    pub solver: SolverMethod,
    pub bc: BcMode,
    pub kappa: f64,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    /// Also compare against the exact Newton sum.
    pub exact_check: bool,
    /// Directory for cached quadrature fits.
    pub cache_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n: 129,
            box_spec: BoxSpec::Auto,
            rank: None,
            gamma: 8,
            eps_kernel: 1e-7,
            eps_c2t: 1e-8,
            eps_support: 1e-8,
            long_rank: None,
            solver: SolverMethod::Spectral,
            bc: BcMode::Homogeneous,
            kappa: 0.0,
            out_dir: None,
            seed: 0,
            exact_check: false,
            cache_dir: None,
        }
    }
}

fn check_tol(name: &'static str, value: f64) -> Result<(), ConfigError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(ConfigError::Tolerance { name, value })
    }
}

impl RunConfig {
    /// Checks every invariant that does not depend on the molecule.
    pub fn validate(&self) -> Result<(), ConfigError> {
        check_tol("eps_kernel", self.eps_kernel)?;
        check_tol("eps_c2t", self.eps_c2t)?;
        check_tol("eps_support", self.eps_support)?;
        if self.n < MIN_RUN_N {
            return Err(ConfigError::GridTooSmall { n: self.n });
        }
        if let BoxSpec::Fixed(b) = self.box_spec {
            if !(b > 0.0 && b.is_finite()) {
                return Err(ConfigError::BoxWidth { b });
            }
        }
        if self.gamma == 0 {
            return Err(ConfigError::GammaZero);
        }
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(ConfigError::Kappa { kappa: self.kappa });
        }
        if let Some(rank) = self.rank {
            if rank == 0 || rank > crate::quadrature::MAX_RANK {
                return Err(ConfigError::Rank { rank, max: crate::quadrature::MAX_RANK });
            }
            if let Some(long_rank) = self.long_rank {
                if long_rank > rank {
                    return Err(ConfigError::LongRank { long_rank, rank });
                }
            }
        }
        if let SolverMethod::Cg { tol, max_iter } = self.solver {
            if !(tol > 0.0 && tol < 1.0) || max_iter == 0 {
                return Err(ConfigError::CgParameters { tol, max_iter });
            }
        }
        Ok(())
    }

    /// Box half-width for molecule `m` with separation `gamma`.
    ///
    /// In auto mode the margin `(γ/2 + 2) h` with `h = 2b/(n-1)` is met with
    /// equality by the outermost coordinate `M`:
    /// `b = M / (1 - (γ + 4)/(n - 1))`. A molecule sitting at the origin uses
    /// its largest radius (at least 1 Å) as `M`.
    pub fn resolve_box(&self, m: &Molecule, gamma: usize) -> Result<f64, ConfigError> {
        match self.box_spec {
            BoxSpec::Fixed(b) => Ok(b),
            BoxSpec::Auto => {
                let ratio = (gamma + 4) as f64 / (self.n - 1) as f64;
                if ratio >= 1.0 {
                    return Err(ConfigError::AutoBox { gamma, n: self.n });
                }
                let mut big = m.max_abs_coord();
                if big <= 0.0 {
                    big = m.atoms().iter().fold(1.0f64, |a, x| a.max(x.radius));
                }
                Ok(big / (1.0 - ratio))
            }
        }
    }

    /// Margin rule: every atom at least `γh/2 + 2h` from each face.
    pub fn check_margin(&self, m: &Molecule, b: f64, gamma: usize) -> Result<(), ConfigError> {
        let h = 2.0 * b / (self.n - 1) as f64;
        let required = (gamma as f64 / 2.0 + 2.0) * h;
        // Relative slack absorbs the rounding of the auto box.
        let slack = 1e-9 * b;
        for (atom, a) in m.atoms().iter().enumerate() {
            let distance = a.position.iter().map(|x| b - x.abs()).fold(f64::INFINITY, f64::min);
            if distance + slack < required {
                return Err(ConfigError::Margin { atom, distance, required });
            }
        }
        Ok(())
    }
}
