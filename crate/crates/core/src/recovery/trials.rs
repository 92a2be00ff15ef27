//! Seeded Monte-Carlo recovery trials.

use rayon::prelude::*;

use super::coherence::{mutual_coherence, normalize_columns, one_step_condition_with_mu};
use super::iti::{iti_recover, ItiOptions};
use super::synth::{make_synth_problem, synth_with_dictionary, SynthSpec};
use crate::error::Result;
use crate::tensor::{Matrix, Rng};

#[derive(Clone, Debug, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub k: usize,
    pub mu: f64,
    pub condition_holds: bool,
    pub support_recovered: bool,
    pub iterations: usize,
    pub residual: f64,
}

/// Runs `n_trials` independent single-sample planted problems. Trial `t`
/// draws everything from `Rng::stream(master_seed, t)`, so results do not
/// depend on scheduling.
pub fn run_recovery_trials(master_seed: u64, n_trials: usize, spec: &SynthSpec, opts: ItiOptions) -> Result<Vec<TrialRecord>> {
    run_trials(master_seed, n_trials, spec, opts, None)
}

/// Like [`run_recovery_trials`], but every trial plants its code in the
/// same dictionary (columns are normalised first).
pub fn run_recovery_trials_on(
    master_seed: u64,
    n_trials: usize,
    spec: &SynthSpec,
    opts: ItiOptions,
    dictionary: &Matrix,
) -> Result<Vec<TrialRecord>> {
    let w = normalize_columns(dictionary)?;
    let mu = mutual_coherence(&w)?;
    run_trials(master_seed, n_trials, spec, opts, Some((&w, mu)))
}

fn run_trials(
    master_seed: u64,
    n_trials: usize,
    spec: &SynthSpec,
    opts: ItiOptions,
    fixed: Option<(&Matrix, f64)>,
) -> Result<Vec<TrialRecord>> {
    let one = SynthSpec {
        n_samples: 1,
        ..spec.clone()
    };
    (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let seed = Rng::derive_seed(master_seed, trial as u64);
            let mut rng = Rng::new(seed);
            let (p, mu) = match fixed {
                Some((w, mu)) => (synth_with_dictionary(&mut rng, w.clone(), &one)?, mu),
                None => {
                    let p = make_synth_problem(&mut rng, &one)?;
                    let mu = mutual_coherence(&p.w0)?;
                    (p, mu)
                }
            };
            let z0 = &p.codes[0];
            let res = iti_recover(&p.w0, p.x.row(0), spec.k, opts)?;
            Ok(TrialRecord {
                trial,
                seed,
                k: spec.k,
                mu,
                condition_holds: one_step_condition_with_mu(mu, z0).holds,
                support_recovered: res.code.support() == z0.support(),
                iterations: res.iterations,
                residual: res.residual_norm,
            })
        })
        .collect()
}

pub const TRIALS_CSV_HEADER: &str = "trial,seed,k,mu,condition_holds,support_recovered,iterations,residual";

pub fn trials_csv(records: &[TrialRecord]) -> String {
    let mut out = String::from(TRIALS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{:.17e},{},{},{},{:.17e}\n",
            r.trial, r.seed, r.k, r.mu, r.condition_holds as u8, r.support_recovered as u8, r.iterations, r.residual
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trials_are_reproducible() {
        let spec = SynthSpec::new(16, 32, 1, 2);
        let a = run_recovery_trials(5, 8, &spec, ItiOptions::default()).unwrap();
        let b = run_recovery_trials(5, 8, &spec, ItiOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 8);
        let csv = trials_csv(&a);
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.starts_with(TRIALS_CSV_HEADER));
    }

    #[test]
    fn orthonormal_dictionary_always_recovers() {
        let w = crate::recovery::random_orthonormal(12, &mut Rng::new(1));
        for k in 1..=12 {
            let spec = SynthSpec::new(12, 12, 1, k);
            let r = run_recovery_trials_on(3, 10, &spec, ItiOptions::default(), &w).unwrap();
            assert!(r.iter().all(|t| t.support_recovered), "k = {k}");
            assert!(r.iter().all(|t| t.mu < 1e-12));
        }
    }
}
