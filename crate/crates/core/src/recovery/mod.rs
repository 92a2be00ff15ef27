//! Sparse recovery with iterative thresholding and inversion, dictionary
//! coherence, and planted test problems.

mod coherence;
mod diagnostic;
mod iti;
mod synth;
mod trials;

pub use coherence::{
    check_unit_norm, donoho_max_k, donoho_uniqueness, gram_offdiagonal, max_offdiagonal_abs, mutual_coherence, normalize_columns,
    one_step_condition, one_step_condition_with_mu, OutOfScope, OneStepCheck, UNIT_NORM_TOLERANCE,
};
pub use diagnostic::{ksae_vs_iti_diagnostic, DiagnosticReport};
pub use iti::{iti_inversion_step, iti_noise_trace, iti_recover, iti_support_step, Inversion, ItiOptions, ItiResult};
pub use synth::{
    make_synth_problem, pseudo_inverse_values, random_orthonormal, synth_with_dictionary, SynthProblem, SynthSpec,
};
pub use trials::{run_recovery_trials, run_recovery_trials_on, trials_csv, TrialRecord, TRIALS_CSV_HEADER};
