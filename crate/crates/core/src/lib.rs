//! Range-separated tensor solver for the linearized Poisson–Boltzmann
//! equation on uniform Cartesian grids.
//!
//! The Newton kernel `1/‖x‖` is approximated by a sum of Gaussians, sampled
//! as a low-rank canonical tensor and split into long- and short-range
//! columns. The collective potential of a molecule is a range-separated (RS)
//! tensor: one compressed long-range canonical tensor plus shifted copies of
//! a compact short-range reference. Applying the discrete Laplacian to the
//! long part gives a smooth right-hand side whose solution, added to the
//! short part, is the total potential.
//!
//! Everything numerical is generic over [`Real`] (`f32`, `f64`); the
//! aliases below fix the scalar for common use.

pub mod canonical;
pub mod config;
pub mod delta;
pub mod error;
pub mod export;
pub mod field;
pub mod grid;
pub mod kernel;
pub mod laplacian;
pub mod linalg;
pub mod molecule;
pub mod pipeline;
pub mod poisson;
pub mod quadrature;
pub mod rs;
pub mod scalar;
pub mod tucker;
pub mod validation;

pub use canonical::CanonicalTensor3;
pub use config::{BcMode, BoxSpec, ConfigError, RunConfig};
pub use delta::{build_delta_split, compose_total, DeltaScaling, DeltaSplit};
pub use error::{Error, ErrorClass, Result};
pub use export::{export_slice, ExportFormat};
pub use field::GridFunction3;
pub use grid::Grid3;
pub use kernel::{assemble_reference_tensor, split_reference, split_reference_at, KernelSplit, ReferenceKernel};
pub use laplacian::{apply_kron_laplacian, DiscreteLaplacian};
pub use molecule::{parse_pqr, parse_pqr_str, Atom, Molecule};
pub use pipeline::{assemble_for, long_rhs, run_pipeline, Artifacts, Assembled, Metrics};
pub use poisson::{poisson_solve, poisson_solve_canonical, Boundary, SolveReport, SolverMethod};
pub use quadrature::{build_quadrature, build_quadrature_for_tolerance, SincQuadrature};
pub use rs::{assemble_collective, assemble_uncompressed, shift_and_window, snap_to_grid, RsTensor};
pub use scalar::Real;
pub use tucker::{c2t_rhosvd, reduce_rank, t2c, TuckerTensor3};
pub use validation::{compare, direct_sum_oracle, ErrorReport, OracleKernel, SingularPolicy};

pub type Grid3f64 = Grid3<f64>;
pub type Grid3f32 = Grid3<f32>;
pub type CanonicalTensor3f64 = CanonicalTensor3<f64>;
pub type CanonicalTensor3f32 = CanonicalTensor3<f32>;
pub type TuckerTensor3f64 = TuckerTensor3<f64>;
pub type TuckerTensor3f32 = TuckerTensor3<f32>;
pub type SincQuadraturef64 = SincQuadrature<f64>;
pub type SincQuadraturef32 = SincQuadrature<f32>;
pub type ReferenceKernelf64 = ReferenceKernel<f64>;
pub type ReferenceKernelf32 = ReferenceKernel<f32>;
pub type RsTensorf64 = RsTensor<f64>;
pub type RsTensorf32 = RsTensor<f32>;
pub type GridFunction3f64 = GridFunction3<f64>;
pub type GridFunction3f32 = GridFunction3<f32>;
pub type DiscreteLaplacianf64 = DiscreteLaplacian<f64>;
pub type DiscreteLaplacianf32 = DiscreteLaplacian<f32>;
pub type DeltaSplitf64 = DeltaSplit<f64>;
pub type DeltaSplitf32 = DeltaSplit<f32>;
