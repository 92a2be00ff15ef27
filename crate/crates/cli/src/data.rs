use anyhow::{Context, Result};
use ksae_core::datasets::{load_idx, split, synthetic_digits, DigitSpec, LabeledDataset};
use ksae_core::format::load_stats;
use ksae_core::recovery::{make_synth_problem, SynthSpec};
use ksae_core::tensor::{Matrix, Rng};

use crate::args::{DataArgs, EvalDataArgs};
use crate::manifest::RunManifest;
use crate::UsageError;

/// Stream of the run seed used to draw synthetic data. Streams 0 and 1 are
/// weight initialisation and shuffling inside training.
pub const DATA_STREAM: u64 = 2;
/// Stream used to draw random dictionaries.
pub const DICTIONARY_STREAM: u64 = 3;

pub struct Loaded {
    pub x: Matrix,
    /// Present for labelled sources.
    pub labelled: Option<LabeledDataset>,
    pub name: &'static str,
}

impl Loaded {
    pub fn require_labels(self) -> Result<(LabeledDataset, &'static str)> {
        match self.labelled {
            Some(d) => Ok((d, self.name)),
            None => Err(UsageError(format!("`{}` data has no labels; use --digits or --images/--labels", self.name)).into()),
        }
    }
}

pub fn load(args: &DataArgs, seed: u64, manifest: &mut RunManifest) -> Result<Loaded> {
    let chosen = [args.synthetic.is_some(), args.digits.is_some(), args.images.is_some()]
        .iter()
        .filter(|&&b| b)
        .count();
    if chosen != 1 {
        return Err(UsageError("choose exactly one data source: --synthetic, --digits or --images/--labels".into()).into());
    }
    let mut loaded = if let Some(shape) = args.synthetic {
        let spec = SynthSpec::new(shape.input_dim, shape.hidden_dim, args.samples, shape.k).noise(args.data_noise);
        let p = make_synth_problem(&mut Rng::stream(seed, DATA_STREAM), &spec).context("generating synthetic data")?;
        Loaded {
            x: p.x,
            labelled: None,
            name: "synthetic",
        }
    } else if let Some(n) = args.digits {
        let d = synthetic_digits(&DigitSpec::new(n, seed)).context("drawing digits")?;
        Loaded {
            x: d.x.clone(),
            labelled: Some(d),
            name: "digits",
        }
    } else {
        let (ip, lp) = (args.images.as_ref().expect("checked"), args.labels.as_ref().expect("clap requires both"));
        manifest.input(ip)?;
        manifest.input(lp)?;
        let d = load_idx(ip, lp).context("loading IDX data")?;
        Loaded {
            x: d.x.clone(),
            labelled: Some(d),
            name: "idx",
        }
    };
    if let Some(path) = &args.stats {
        manifest.input(path)?;
        let stats = load_stats(path).with_context(|| format!("loading {}", path.display()))?;
        loaded.x = stats.apply(&loaded.x).context("applying preprocessing statistics")?;
        if let Some(d) = &loaded.labelled {
            loaded.labelled = Some(d.with_features(loaded.x.clone())?);
        }
    }
    Ok(loaded)
}

/// Train and test sets: a separate IDX test pair when given, otherwise a
/// seeded split of the loaded data.
pub fn load_eval(args: &EvalDataArgs, seed: u64, manifest: &mut RunManifest) -> Result<(LabeledDataset, LabeledDataset, &'static str)> {
    let (data, name) = load(&args.data, seed, manifest)?.require_labels()?;
    if let (Some(ip), Some(lp)) = (&args.test_images, &args.test_labels) {
        manifest.input(ip)?;
        manifest.input(lp)?;
        let mut test = load_idx(ip, lp).context("loading IDX test data")?;
        if let Some(path) = &args.data.stats {
            let stats = load_stats(path)?;
            test = test.with_features(stats.apply(&test.x)?)?;
        }
        return Ok((data, test, name));
    }
    let n_train = args.train_size.unwrap_or(data.len() - data.len() / 6);
    if n_train == 0 || n_train >= data.len() {
        return Err(UsageError(format!("--train-size must be in 1..{}, got {n_train}", data.len())).into());
    }
    manifest.resolved("train_size", n_train);
    let (train, test) = split(&data, n_train, seed)?;
    Ok((train, test, name))
}
