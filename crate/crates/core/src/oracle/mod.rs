//! Ground truth and batch checks: exact lattice pmfs, path simulation, the
//! factorization verifier, finite-difference derivative checks and INAR
//! fitting.

mod exact;
pub mod fd;
mod fit;
mod simulate;
mod verify;
pub mod zoo;

pub use exact::{exact_path_logpmf, exact_step_pmf, ExactLogPmf};
pub use fit::{fit_inar, inar_log_likelihood, FitConfig, FitResult, InnovationFamily, LikelihoodRoute};
pub use simulate::{path_rng, simulate_path, simulate_paths, simulate_with};
pub use verify::{
    fmt_opt, select_paths, summarize, tail_path, verify_factorization, verify_path, VerificationRecord,
    VerificationSummary, VerifyConfig,
};
pub use zoo::{extended_zoo, standard_zoo, ZooModel};
