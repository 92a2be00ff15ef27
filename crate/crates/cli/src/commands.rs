use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;

use ksae_core::datasets::{standardize, LabeledDataset};
use ksae_core::format::{codes_from_bytes, codes_to_bytes, codes_to_csv, load_model, model_to_bytes, stats_to_bytes};
use ksae_core::heads::{
    eval_csv, evaluate, finetune_deep, finetune_shallow, pretrain_stack, stack_features, train_head,
    DeepFinetuneConfig, EvalRecord, SoftmaxHead, StackLayer, SupervisedConfig,
};
use ksae_core::ksae::{
    effective_k, encode_features, init_model, loss_history_csv, train, KsaeModel, LinearSchedule, SparseCode,
    TrainConfig, VelocityRule,
};
use ksae_core::recovery::{
    donoho_max_k, max_offdiagonal_abs, mutual_coherence, normalize_columns, random_orthonormal, run_recovery_trials,
    run_recovery_trials_on, one_step_condition_with_mu, trials_csv, ItiOptions, SynthSpec, UNIT_NORM_TOLERANCE,
};
use ksae_core::tensor::{Matrix, Rng};

use crate::args::*;
use crate::data::{load, load_eval, DICTIONARY_STREAM};
use crate::hist::{activation_histogram, hist_csv};
use crate::manifest::RunManifest;
use crate::pgm::{filter_grid, square_shape};
use crate::UsageError;

pub fn dispatch(command: &Command, flags: Vec<(String, String)>) -> Result<()> {
    let common = match command {
        Command::Train(a) => &a.common,
        Command::Encode(a) => &a.common,
        Command::Recover(a) => &a.common,
        Command::Coherence(a) => &a.common,
        Command::Visualize(a) => &a.common,
        Command::Hist(a) => &a.common,
        Command::Eval(a) => &a.common,
        Command::Finetune(a) => &a.common,
        Command::PretrainDeep(a) => &a.common,
    };
    let mut m = RunManifest::new(command.name(), flags, common.seed, &common.out)?;
    let seed = common.seed;
    match command {
        Command::Train(a) => cmd_train(a, seed, &mut m)?,
        Command::Encode(a) => cmd_encode(a, seed, &mut m)?,
        Command::Recover(a) => cmd_recover(a, seed, &mut m)?,
        Command::Coherence(a) => cmd_coherence(a, seed, &mut m)?,
        Command::Visualize(a) => cmd_visualize(a, &mut m)?,
        Command::Hist(a) => cmd_hist(a, seed, &mut m)?,
        Command::Eval(a) => cmd_eval(a, seed, &mut m)?,
        Command::Finetune(a) => cmd_finetune(a, seed, &mut m)?,
        Command::PretrainDeep(a) => cmd_pretrain_deep(a, seed, &mut m)?,
    }
    m.finish()?;
    Ok(())
}

fn train_config(hidden: usize, k: usize, o: &OptimArgs, seed: u64) -> TrainConfig {
    let mut c = TrainConfig::new(hidden, k);
    c.alpha = o.alpha;
    c.epochs = o.epochs;
    c.batch_size = o.batch as usize;
    c.init_sigma = o.sigma;
    c.momentum = LinearSchedule::constant(o.momentum);
    c.learning_rate = match o.lr_final {
        Some(f) => LinearSchedule::linear(o.lr, f, o.epochs),
        None => LinearSchedule::constant(o.lr),
    };
    c.k_schedule_enabled = !o.no_schedule_k;
    if let Some(ki) = o.k_initial {
        c.k_initial = ki;
    }
    c.velocity_rule = match o.velocity_rule {
        VelocityRuleArg::Updated => VelocityRule::Updated,
        VelocityRuleArg::Literal => VelocityRule::Literal,
    };
    c.seed = seed;
    c
}

fn head_config(h: &HeadArgs, seed: u64) -> SupervisedConfig {
    SupervisedConfig {
        epochs: h.head_epochs,
        batch_size: h.head_batch as usize,
        learning_rate: LinearSchedule::linear(h.head_lr, h.head_lr_final, h.head_epochs),
        momentum: LinearSchedule::constant(h.head_momentum),
        velocity_rule: VelocityRule::Updated,
        seed,
    }
}

fn finetune_config(f: &FinetuneOptArgs, batch: u64, seed: u64) -> SupervisedConfig {
    SupervisedConfig {
        epochs: f.ft_epochs,
        batch_size: batch as usize,
        learning_rate: LinearSchedule::linear(f.ft_lr, f.ft_lr_final, f.ft_epochs),
        momentum: LinearSchedule::constant(f.ft_momentum),
        velocity_rule: VelocityRule::Updated,
        seed,
    }
}

fn read_model(path: &std::path::Path, m: &mut RunManifest) -> Result<KsaeModel> {
    m.input(path)?;
    load_model(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn check_input_dim(model: &KsaeModel, x: &Matrix) -> Result<()> {
    ensure!(
        model.input_dim() == x.cols(),
        "dimension mismatch: checkpoint expects {} inputs, data has {}",
        model.input_dim(),
        x.cols()
    );
    Ok(())
}

fn encode_all(model: &KsaeModel, x: &Matrix, k: usize, alpha: f64) -> Result<Vec<SparseCode>> {
    let rows: Vec<&[f64]> = x.row_iter().collect();
    Ok(rows
        .par_iter()
        .map(|r| encode_features(model, r, k, alpha))
        .collect::<ksae_core::Result<Vec<_>>>()?)
}

fn csv_series(header: &str, values: &[f64]) -> String {
    let mut s = format!("epoch,{header}\n");
    for (i, v) in values.iter().enumerate() {
        s.push_str(&format!("{i},{v:e}\n"));
    }
    s
}

fn cmd_train(a: &TrainArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    let mut x = load(&a.data, seed, m)?.x;
    if a.standardize {
        let (xs, stats) = standardize(&x)?;
        x = xs;
        m.write("stats.kpre", &stats_to_bytes(&stats))?;
    }
    let cfg = train_config(a.hidden, a.k, &a.optim, seed);
    m.resolved("k_schedule", cfg.k_schedule_enabled);
    m.resolved("k_initial", cfg.k_initial);
    let out = train(init_model(x.cols(), &cfg), &x, &cfg).context("training failed")?;
    m.write("model.ksae", &model_to_bytes(&out.model))?;
    m.write("loss.csv", loss_history_csv(&out.history).as_bytes())?;
    if let Some(last) = out.history.last() {
        println!("epochs={}", out.history.len());
        println!("final_loss={:e}", last.mean_loss);
        println!("dead_units={}", last.dead_units());
    }
    Ok(())
}

fn cmd_encode(a: &EncodeArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    let model = read_model(&a.model, m)?;
    let x = load(&a.data, seed, m)?.x;
    check_input_dim(&model, &x)?;
    let k_test = effective_k(a.k, a.alpha, model.hidden_dim())?;
    let codes = encode_all(&model, &x, a.k, a.alpha)?;
    match a.format {
        CodesFormat::Csv => m.write("codes.csv", codes_to_csv(&codes).as_bytes())?,
        CodesFormat::Binary => m.write("codes.kcod", &codes_to_bytes(&codes, model.hidden_dim()))?,
    };
    m.resolved("k_test", k_test);
    println!("samples={}", codes.len());
    println!("k_test={k_test}");
    Ok(())
}

/// A square dictionary of the requested kind; Gaussian is handled per trial.
fn square_dictionary(kind: DictionaryKind, n: usize, h: usize, seed: u64) -> Result<Option<Matrix>> {
    let square = |what: &str| -> Result<()> {
        if n != h {
            return Err(UsageError(format!("{what} dictionary needs input == atoms, got {n}x{h}")).into());
        }
        Ok(())
    };
    Ok(match kind {
        DictionaryKind::Gaussian => None,
        DictionaryKind::Orthonormal => {
            square("orthonormal")?;
            Some(random_orthonormal(n, &mut Rng::stream(seed, DICTIONARY_STREAM)))
        }
        DictionaryKind::Identity => {
            square("identity")?;
            Some(Matrix::identity(n))
        }
    })
}

fn cmd_recover(a: &RecoverArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    let (fixed, n, h, default_k) = match (&a.model, a.synthetic) {
        (Some(path), _) => {
            let model = read_model(path, m)?;
            let (n, h) = model.w.shape();
            (Some(model.w), n, h, None)
        }
        (None, Some(s)) => (
            square_dictionary(a.dictionary, s.input_dim, s.hidden_dim, seed)?,
            s.input_dim,
            s.hidden_dim,
            Some(s.k),
        ),
        (None, None) => unreachable!("clap requires --synthetic or --model"),
    };
    let ks: Vec<usize> = match a.kmax_sweep {
        Some(kmax) => (1..=kmax).collect(),
        None => vec![a.k.or(default_k).expect("clap requires --k with --model")],
    };
    let opts = ItiOptions {
        max_iters: a.max_iters,
        tol: a.tol,
    };
    let mut records = Vec::new();
    let mut summary = String::from("k,trials,recovered,rate,mean_iterations\n");
    for &k in &ks {
        let spec = SynthSpec::new(n, h, 1, k).noise(a.noise);
        let r = match &fixed {
            Some(w) => run_recovery_trials_on(seed, a.trials as usize, &spec, opts, w),
            None => run_recovery_trials(seed, a.trials as usize, &spec, opts),
        }
        .with_context(|| format!("recovery trials at k = {k}"))?;
        let ok = r.iter().filter(|t| t.support_recovered).count();
        let rate = ok as f64 / r.len() as f64;
        let iters = r.iter().map(|t| t.iterations as f64).sum::<f64>() / r.len() as f64;
        summary.push_str(&format!("{k},{},{ok},{rate:.6},{iters:.6}\n", r.len()));
        println!("k={k} recovered={ok}/{} rate={rate:.4}", r.len());
        records.extend(r);
    }
    m.write("recovery.csv", trials_csv(&records).as_bytes())?;
    m.write("recovery_summary.csv", summary.as_bytes())?;
    Ok(())
}

fn cmd_coherence(a: &CoherenceArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    let w = match (&a.model, a.synthetic) {
        (Some(path), _) => read_model(path, m)?.w,
        (None, Some(s)) => match square_dictionary(a.dictionary, s.input_dim, s.hidden_dim, seed)? {
            Some(w) => w,
            None => {
                let mut rng = Rng::stream(seed, DICTIONARY_STREAM);
                Matrix::from_vec(s.input_dim, s.hidden_dim, rng.gaussian_vec(s.input_dim * s.hidden_dim, 1.0))?
            }
        },
        (None, None) => unreachable!("clap requires --model or --synthetic"),
    };
    let mut report: Vec<(String, String)> = Vec::new();
    let mut put = |k: &str, v: String| report.push((k.to_string(), v));
    put("input_dim", w.rows().to_string());
    put("atoms", w.cols().to_string());
    let deviation = w.column_norms().iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
    let unit = deviation <= UNIT_NORM_TOLERANCE;
    put("unit_norm", unit.to_string());
    put("max_norm_deviation", format!("{deviation:e}"));
    if !unit {
        log::warn!("dictionary atoms are not unit-norm (max deviation {deviation:e}); normalising");
        put("mu_unnormalized", max_offdiagonal_abs(&w.gram()).to_string());
    }
    let wn = normalize_columns(&w).context("normalising atoms")?;
    let mu = mutual_coherence(&wn)?;
    put("mu", mu.to_string());
    put(
        "donoho_max_k",
        donoho_max_k(mu).map_or("unbounded".to_string(), |k| k.to_string()),
    );
    if a.model.is_some() {
        let mut rng = Rng::stream(seed, DICTIONARY_STREAM);
        let random = Matrix::from_vec(w.rows(), w.cols(), rng.gaussian_vec(w.rows() * w.cols(), 1.0))?;
        put("mu_random_same_shape", mutual_coherence(&normalize_columns(&random)?)?.to_string());
    }
    if let Some(path) = &a.codes {
        m.input(path)?;
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let (codes, dim) = codes_from_bytes(&bytes, path)?;
        ensure!(dim == w.cols(), "codes have dimension {dim}, dictionary has {} atoms", w.cols());
        let checks: Vec<_> = codes.iter().map(|c| one_step_condition_with_mu(mu, c)).collect();
        let holds = checks.iter().filter(|c| c.holds).count();
        let out_of_scope = checks.iter().filter(|c| c.out_of_scope.is_some()).count();
        put("one_step_samples", checks.len().to_string());
        put("one_step_holds", holds.to_string());
        put("one_step_out_of_scope", out_of_scope.to_string());
        put(
            "one_step_fraction",
            format!("{:.6}", holds as f64 / checks.len().max(1) as f64),
        );
    }
    let text: String = report.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
    print!("{text}");
    m.write("coherence.txt", text.as_bytes())?;
    Ok(())
}

fn cmd_visualize(a: &VisualizeArgs, m: &mut RunManifest) -> Result<()> {
    let model = read_model(&a.model, m)?;
    let shape = match a.shape.or_else(|| square_shape(model.input_dim())) {
        Some(s) => s,
        None => bail!(
            "filters of length {} are not square; pass --shape HxW",
            model.input_dim()
        ),
    };
    let bytes = filter_grid(&model.w, shape)?;
    m.resolved("shape", format!("{}x{}", shape.rows, shape.cols));
    m.write(&a.name, &bytes)?;
    println!("filters={}", model.hidden_dim());
    Ok(())
}

fn cmd_hist(a: &HistArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    let model = read_model(&a.model, m)?;
    let x = load(&a.data, seed, m)?.x;
    check_input_dim(&model, &x)?;
    let codes = encode_all(&model, &x, a.k, a.alpha)?;
    let bins = activation_histogram(&codes, model.hidden_dim(), a.bins as usize);
    let total: u64 = bins.iter().map(|b| b.count).sum();
    m.write("hist.csv", hist_csv(&bins).as_bytes())?;
    println!("values={total}");
    println!("zero_fraction={:.6}", bins[0].count as f64 / total.max(1) as f64);
    Ok(())
}

/// `layer` is `(hidden, k, alpha)` of the top layer; raw pixels count as a
/// dense layer of the input size.
fn record(run_id: &str, dataset: &str, n_train: usize, layer: (usize, usize, f64), stage: &str, error_rate: f64) -> EvalRecord {
    let (hidden, k, alpha) = layer;
    EvalRecord {
        run_id: run_id.to_string(),
        dataset: dataset.to_string(),
        n_train,
        hidden,
        k,
        alpha,
        stage: stage.to_string(),
        error_rate,
    }
}

fn class_count(train: &LabeledDataset, test: &LabeledDataset) -> usize {
    train.class_count.max(test.class_count)
}

/// Softmax head on frozen single-layer codes; returns the head and the test
/// error.
fn frozen_head(
    layer: &StackLayer,
    train: &LabeledDataset,
    test: &LabeledDataset,
    cfg: &SupervisedConfig,
) -> Result<(SoftmaxHead, f64)> {
    let ftr = stack_features(std::slice::from_ref(layer), &train.x)?;
    let fte = stack_features(std::slice::from_ref(layer), &test.x)?;
    let (head, _) = train_head(SoftmaxHead::zeros(ftr.cols(), class_count(train, test)), &ftr, &train.y, cfg)
        .context("training softmax head")?;
    let err = evaluate(&head, &test.with_features(fte)?)?;
    Ok((head, err))
}

fn cmd_eval(a: &EvalArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    let (train, test, name) = load_eval(&a.eval, seed, m)?;
    let cfg = head_config(&a.head, seed);
    let rec = match a.features {
        FeatureKind::Raw => {
            let (head, _) = train_head(SoftmaxHead::zeros(train.input_dim(), class_count(&train, &test)), &train.x, &train.y, &cfg)
                .context("training softmax head")?;
            let err = evaluate(&head, &test)?;
            let d = train.input_dim();
            record(&a.eval.run_id, name, train.len(), (d, d, 1.0), "raw", err)
        }
        FeatureKind::Model => {
            let model = read_model(a.model.as_ref().expect("clap requires --model"), m)?;
            check_input_dim(&model, &train.x)?;
            let k = a.k.expect("clap requires --k");
            let hidden = model.hidden_dim();
            let layer = StackLayer { model, k, alpha: a.alpha };
            let (_, err) = frozen_head(&layer, &train, &test, &cfg)?;
            record(&a.eval.run_id, name, train.len(), (hidden, k, a.alpha), "frozen", err)
        }
    };
    println!("{}_error={:.6}", rec.stage, rec.error_rate);
    m.write("eval.csv", eval_csv(&[rec]).as_bytes())?;
    Ok(())
}

fn cmd_finetune(a: &FinetuneArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    let (train, test, name) = load_eval(&a.eval, seed, m)?;
    let model = read_model(&a.model, m)?;
    check_input_dim(&model, &train.x)?;
    let hidden = model.hidden_dim();
    let layer = StackLayer {
        model,
        k: a.k,
        alpha: a.alpha,
    };
    let (head, frozen_err) = frozen_head(&layer, &train, &test, &head_config(&a.head, seed))?;
    let ft_cfg = finetune_config(&a.ft, a.head.head_batch, seed);
    let (stack, history) = finetune_shallow(layer.model, head, &train, a.k, a.alpha, &ft_cfg).context("fine-tuning")?;
    let ft_err = evaluate(&stack, &test)?;
    let shape = (hidden, a.k, a.alpha);
    let recs = [
        record(&a.eval.run_id, name, train.len(), shape, "frozen", frozen_err),
        record(&a.eval.run_id, name, train.len(), shape, "finetuned", ft_err),
    ];
    m.write("eval.csv", eval_csv(&recs).as_bytes())?;
    m.write("finetune_loss.csv", csv_series("mean_loss", &history).as_bytes())?;
    m.write("model_finetuned.ksae", &model_to_bytes(&stack.layers[0].model))?;
    println!("frozen_error={frozen_err:.6}");
    println!("finetuned_error={ft_err:.6}");
    Ok(())
}

fn cmd_pretrain_deep(a: &PretrainDeepArgs, seed: u64, m: &mut RunManifest) -> Result<()> {
    if a.layers.is_empty() {
        return Err(UsageError("--layers needs at least one hidden:k entry".into()).into());
    }
    let (train, test, name) = load_eval(&a.eval, seed, m)?;
    let configs: Vec<TrainConfig> = a
        .layers
        .iter()
        .enumerate()
        .map(|(i, l)| train_config(l.hidden, l.k, &a.optim, Rng::derive_seed(seed, i as u64)))
        .collect();
    for (i, c) in configs.iter().enumerate() {
        m.resolved(&format!("layer{i}.k_initial"), c.k_initial);
        m.resolved(&format!("layer{i}.seed"), c.seed);
    }
    let (layers, histories) = pretrain_stack(&train.x, &configs, init_model).context("pretraining")?;
    for (i, h) in histories.iter().enumerate() {
        m.write(&format!("layer{i}_pretrain_loss.csv"), loss_history_csv(h).as_bytes())?;
    }
    let cfg = DeepFinetuneConfig {
        base: finetune_config(&a.ft, a.head.head_batch, seed),
        stage_epochs: Some([a.head.head_epochs, a.ft.ft_epochs, a.ft.ft_epochs]),
        head: Some(head_config(&a.head, seed)),
    };
    let mut stage_errors: Vec<ksae_core::Result<f64>> = Vec::new();
    let (stack, reports) = finetune_deep(layers, &train, &cfg, |_, s| stage_errors.push(evaluate(s, &test)))
        .context("fine-tuning")?;
    let top = a.layers.last().expect("checked");
    let mut recs = Vec::new();
    for (r, err) in reports.iter().zip(stage_errors) {
        let err = err?;
        println!("stage{}_error={err:.6}", r.stage);
        recs.push(record(
            &a.eval.run_id,
            name,
            train.len(),
            (top.hidden, top.k, a.optim.alpha),
            &format!("deep-stage{}", r.stage),
            err,
        ));
        m.write(
            &format!("stage{}_loss.csv", r.stage),
            csv_series("mean_loss", &r.loss_history).as_bytes(),
        )?;
    }
    m.write("eval.csv", eval_csv(&recs).as_bytes())?;
    for (i, l) in stack.layers.iter().enumerate() {
        m.write(&format!("layer{i}.ksae"), &model_to_bytes(&l.model))?;
    }
    Ok(())
}
