//! Sparse signal recovery from underdetermined linear measurements.
//!
//! The crate is organised bottom-up:
//!
//! * [`linalg`]: dense matrices, pivoted QR, rank, least squares.
//! * [`lp`]: exact weighted-l1 minimisation under `A x = y` (two-phase
//!   revised simplex) and a vertex-enumeration oracle.
//! * [`decoders`]: l0 search, plain l1, reweighted l1, alternating
//!   (thresholded) l1, and the two-stage l1 decoder.
//! * [`verify`]: support extraction, recovery verdicts, and the
//!   `2s`-column rank condition for unique l0 decoding.
//! * [`experiment`]: seeded Monte Carlo sweeps over sparsity and CSV/JSON
//!   persistence of the resulting success curves.
//! * [`io`]: CSV matrix/vector files.

pub mod combinations;
pub mod decoders;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod lp;
pub mod verify;

pub use decoders::{DecodeError, DecodeResult, DecoderKind, DecoderParams, StageRecord};
pub use linalg::{DenseMatrix, IndexSet, LinalgError};
pub use lp::{LpError, LpSolution, LpStatus, SolverOptions, WeightVector};
pub use verify::{RecoveryVerdict, SparseSignal};
