use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use nmflab::classify::{self, encode_hard, encode_partial, ConfusionMatrix, LabelEncoding};
use nmflab::dataset::{self, load_csv, Dataset, LoadOptions};
use nmflab::kernel::{self, KernelDesign};
use nmflab::model_file::{self, FitMetadata, Mode, ModelFile};
use nmflab::modelsel::{
    self, CvCriterion, CvResult, DesignCandidate, DesignFamily, LabeledData, NmfLabPipeline, SplitSpec, Task,
};
use nmflab::trinmf::{self, FitReport, InitMode, TriNmfConfig, TriNmfModel};
use nmflab::{Error, NonNegMatrix, Result};

use crate::{
    CriterionArg, CvArgs, DataArgs, DesignArg, DesignArgs, EvaluateArgs, FitArgs, InitArg, LabelArgs, ModeArg,
    PredictArgs, TrainArgs,
};

const DEFAULT_LANDMARKS: usize = 500;

pub struct Context {
    pub data_dir: Option<PathBuf>,
}

impl Context {
    /// Relative paths that do not exist as given are looked up in the data
    /// directory.
    fn resolve(&self, path: &Path) -> PathBuf {
        if path.exists() || path.is_absolute() {
            return path.to_path_buf();
        }
        match &self.data_dir {
            Some(dir) if dir.join(path).exists() => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn load_training(ctx: &Context, data: &DataArgs, scale: bool) -> Result<Dataset> {
    let mut opts = if scale { LoadOptions::scaled() } else { LoadOptions::default() };
    opts.label_column = data.label_column.clone();
    opts.id_column = data.id_column.clone();
    load_csv(ctx.resolve(&data.data), &opts)
}

fn labels_of(d: &Dataset) -> Result<&[String]> {
    d.labels
        .as_deref()
        .ok_or_else(|| config_err("--label-column is required"))
}

fn fit_config(fit: &FitArgs, rows: usize) -> Result<TriNmfConfig> {
    let rank = fit.rank.unwrap_or(rows);
    let init = match fit.init {
        Some(InitArg::Identity) => InitMode::Identity,
        Some(InitArg::Kmeans) => InitMode::KMeansCentroids { seed: fit.seed },
        Some(InitArg::Random) => InitMode::Random { seed: fit.seed },
        None if rank == rows => InitMode::Identity,
        None => InitMode::KMeansCentroids { seed: fit.seed },
    };
    let cfg = TriNmfConfig::new(rank)
        .with_init(init)
        .with_max_iter(fit.max_iter)
        .with_rel_tol(fit.tol);
    cfg.validate()?;
    Ok(cfg)
}

fn criterion(c: CriterionArg) -> CvCriterion {
    match c {
        CriterionArg::Loss => CvCriterion::FrobeniusLoss,
        CriterionArg::Accuracy => CvCriterion::Accuracy,
    }
}

/// `None` means the median heuristic.
fn fixed_beta(design: &DesignArgs) -> Result<Option<f64>> {
    if design.beta == "median" {
        return Ok(None);
    }
    let beta: f64 = design
        .beta
        .parse()
        .map_err(|_| config_err(format!("--beta must be `median` or a number, got `{}`", design.beta)))?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(config_err(format!("--beta must be positive, got {beta}")));
    }
    Ok(Some(beta))
}

fn resolve_beta(design: &DesignArgs, samples: &Array2<f64>) -> Result<f64> {
    match fixed_beta(design)? {
        Some(b) => Ok(b),
        None => kernel::median_heuristic_beta(samples.view()),
    }
}

fn parse_grid(spec: &str, beta_median: f64) -> Result<Vec<f64>> {
    match spec {
        "coarse" => kernel::beta_grid(beta_median),
        "fine" => kernel::log_beta_grid(beta_median, -20, 10, 10),
        list => list
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|b| *b > 0.0 && b.is_finite())
                    .ok_or_else(|| config_err(format!("invalid beta grid entry `{s}`")))
            })
            .collect(),
    }
}

fn check_design_flags(design: &DesignArgs) -> Result<()> {
    if design.landmarks.is_some() && design.design != DesignArg::Nystrom {
        return Err(config_err("--landmarks only applies to --design nystrom"));
    }
    if design.design == DesignArg::Direct && (design.beta != "median" || design.beta_grid.is_some()) {
        return Err(config_err("--beta and --beta-grid do not apply to --design direct"));
    }
    if design.beta != "median" && design.beta_grid.is_some() {
        return Err(config_err("give either --beta or --beta-grid, not both"));
    }
    Ok(())
}

struct Encoded {
    classes: Vec<String>,
    targets: LabelEncoding,
}

fn encode(labels: &[String], opts: &LabelArgs) -> Result<Encoded> {
    let token = opts.unlabeled_token.as_deref();
    let known: Vec<&String> = labels.iter().filter(|l| Some(l.as_str()) != token).collect();
    let classes = classify::classes_in_order(&known);
    if classes.is_empty() {
        return Err(Error::Degenerate("no labeled samples".into()));
    }
    let targets = encode_partial(labels, &classes, opts.soft_r, token)?;
    Ok(Encoded { classes, targets })
}

fn summary(report: &FitReport, model: &TriNmfModel) -> String {
    let mut out = format!(
        "iterations: {}\nconverged: {}\nfinal loss: {:.6e}\nmean B column sum: {:.6}\n",
        report.iterations_run,
        report.converged,
        report.final_loss,
        report.mean_b_column_sum()
    );
    if let Some(beta) = model.design().beta() {
        let _ = writeln!(out, "beta: {beta}");
    }
    out.push_str("basis X:\n");
    for row in model.basis().to_rows() {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        let _ = writeln!(out, "  {}", cells.join(" "));
    }
    out
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => model_file::write_atomic(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    match args.mode {
        ModeArg::Forward => train_forward(ctx, args),
        ModeArg::Label => train_label(ctx, args),
    }
}

/// Observed features explained by one-hot group covariates. Features are
/// the response here, so they are never rescaled.
fn train_forward(ctx: &Context, args: TrainArgs) -> Result<()> {
    if args.labels.soft_r.is_some()
        || args.labels.unlabeled_token.is_some()
        || args.design.beta_grid.is_some()
        || args.design.landmarks.is_some()
        || args.design.beta != "median"
    {
        return Err(config_err("label and kernel flags do not apply to --mode forward"));
    }
    let d = load_training(ctx, &args.data, false)?;
    let groups_of = labels_of(&d).map_err(|_| config_err("--label-column (the group column) is required"))?;
    let groups = classify::classes_in_order(groups_of);
    let y = NonNegMatrix::new(d.samples.t().to_owned())?;
    let a = encode_hard(groups_of, &groups)?;
    let cfg = fit_config(&args.fit, y.rows())?;
    let (model, report) = trinmf::fit(&y, a.columns(), &cfg).map_err(|e| e.context("fitting forward model"))?;

    let curves = model.reconstruct(&NonNegMatrix::identity(groups.len())?)?;
    let mut text = summary(&report, &model);
    text.push_str("fitted values:\n");
    for (g, name) in groups.iter().enumerate() {
        let vals: Vec<String> = curves.column(g).iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(text, "  {name}: {}", vals.join(" "));
    }
    ModelFile::new(Mode::Forward, d.feature_names.clone(), None, model, FitMetadata::from_report(&report, Some(args.fit.seed)))
        .with_group_names(groups)
        .with_label_column(args.data.label_column.clone())
        .save(&args.output)?;
    print!("{text}");
    Ok(())
}

fn train_label(ctx: &Context, args: TrainArgs) -> Result<()> {
    check_design_flags(&args.design)?;
    let d = load_training(ctx, &args.data, !args.data.no_scale)?;
    let enc = encode(labels_of(&d)?, &args.labels)?;
    let cfg = fit_config(&args.fit, enc.classes.len())?;

    let design = match args.design.design {
        DesignArg::Direct => KernelDesign::Direct { feature_dim: d.feature_dim() },
        DesignArg::Kernel => {
            let beta = match &args.design.beta_grid {
                Some(spec) => {
                    let grid = parse_grid(spec, kernel::median_heuristic_beta(d.samples.view())?)?;
                    let cv = modelsel::repeated_kfold_cv_kernel(
                        d.samples.view(),
                        &enc.targets,
                        &grid,
                        args.cv.folds,
                        args.cv.cv_repeats,
                        &cfg,
                        criterion(args.cv.criterion),
                        args.fit.seed,
                    )?;
                    cv.chosen().candidate.beta().expect("kernel candidate")
                }
                None => resolve_beta(&args.design, &d.samples)?,
            };
            KernelDesign::gaussian_full(beta, d.samples.clone())?
        }
        DesignArg::Nystrom => {
            if args.design.beta_grid.is_some() {
                return Err(config_err("--beta-grid in train needs --design kernel; use `cv` or `evaluate` for Nyström"));
            }
            DesignCandidate::GaussianNystrom {
                beta: resolve_beta(&args.design, &d.samples)?,
                landmarks: args.design.landmarks.unwrap_or(DEFAULT_LANDMARKS),
                seed: args.fit.seed,
            }
            .design(d.samples.view())?
        }
    };
    let a = design.build_covariates(d.samples.view())?;
    let (model, report) = trinmf::fit(enc.targets.columns(), &a, &cfg).map_err(|e| e.context("fitting label model"))?;
    let model = model.with_design(design)?.with_class_names(enc.classes.clone())?;
    let text = summary(&report, &model);
    ModelFile::new(
        Mode::Label,
        d.feature_names.clone(),
        d.scaling.clone(),
        model,
        FitMetadata::from_report(&report, Some(args.fit.seed)),
    )
    .with_label_column(args.data.label_column.clone())
    .save(&args.output)?;
    print!("{text}");
    Ok(())
}

pub fn predict(ctx: &Context, args: PredictArgs) -> Result<()> {
    let mf = ModelFile::load(ctx.resolve(&args.model))?;
    let path = ctx.resolve(&args.data);
    let out = match mf.mode {
        Mode::Label => predict_label(&mf, &path, args.id_column.as_deref())?,
        Mode::Forward => predict_forward(&mf, &path, args.id_column.as_deref())?,
    };
    write_or_print(args.output.as_deref(), &out)
}

fn predict_label(mf: &ModelFile, path: &Path, id_column: Option<&str>) -> Result<String> {
    let mut d = dataset::load_features(path, &mf.feature_names, id_column, None)?;
    let classes: Vec<String> = match mf.model.class_names() {
        Some(c) => c.to_vec(),
        None => (1..=mf.model.basis().rows()).map(|i| format!("class{i}")).collect(),
    };
    let mut out = String::from("sample_id");
    for c in &classes {
        out.push(',');
        out.push_str(&csv_field(c));
    }
    out.push_str(",predicted\n");
    if d.is_empty() {
        return Ok(out);
    }
    if let Some(pairs) = &mf.scaling {
        dataset::apply_scaling(&mut d.samples, pairs)?;
    }
    let a = mf.model.design().build_covariates(d.samples.view())?;
    let pred = classify::membership_probabilities(&mf.model, &a)?;
    let probs = pred.probabilities.as_array();
    for (n, id) in d.sample_ids().iter().enumerate() {
        out.push_str(&csv_field(id));
        for p in probs.column(n) {
            let _ = write!(out, ",{p:.15e}");
        }
        let _ = writeln!(out, ",{}", csv_field(&classes[pred.predicted[n]]));
    }
    Ok(out)
}

fn predict_forward(mf: &ModelFile, path: &Path, id_column: Option<&str>) -> Result<String> {
    let column = mf
        .label_column
        .as_deref()
        .ok_or_else(|| Error::Format("forward model lacks its group column name".into()))?;
    let groups = mf
        .group_names
        .as_ref()
        .ok_or_else(|| Error::Format("forward model lacks group names".into()))?;
    let d = dataset::load_features(path, &[], id_column, Some(column))?;
    let mut out = String::from("sample_id");
    for f in &mf.feature_names {
        out.push(',');
        out.push_str(&csv_field(f));
    }
    out.push('\n');
    let labels = d.labels.clone().unwrap_or_default();
    if labels.is_empty() {
        return Ok(out);
    }
    let a = encode_hard(&labels, groups)?;
    let fitted = mf.model.reconstruct(a.columns())?;
    let ids = d.ids.clone().unwrap_or_else(|| (1..=labels.len()).map(|i| i.to_string()).collect());
    for (n, id) in ids.iter().enumerate() {
        out.push_str(&csv_field(id));
        for v in fitted.as_array().column(n) {
            let _ = write!(out, ",{v:.15e}");
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn cv(ctx: &Context, args: CvArgs) -> Result<()> {
    check_design_flags(&args.design)?;
    if args.design.beta != "median" {
        return Err(config_err("cv searches a grid; use --beta-grid instead of --beta"));
    }
    let d = load_training(ctx, &args.data, !args.data.no_scale)?;
    let enc = encode(labels_of(&d)?, &args.labels)?;
    let cfg = fit_config(&args.fit, enc.classes.len())?;
    let grid_spec = args.design.beta_grid.as_deref().unwrap_or("coarse");
    let crit = criterion(args.cv.criterion);

    let result: CvResult = match args.design.design {
        DesignArg::Kernel => {
            let grid = parse_grid(grid_spec, kernel::median_heuristic_beta(d.samples.view())?)?;
            modelsel::repeated_kfold_cv_kernel(
                d.samples.view(),
                &enc.targets,
                &grid,
                args.cv.folds,
                args.cv.cv_repeats,
                &cfg,
                crit,
                args.fit.seed,
            )?
        }
        DesignArg::Direct | DesignArg::Nystrom => {
            // Held-out selection on the training and validation parts of a
            // standard split.
            let truth: Vec<String> = enc
                .targets
                .argmax_classes()
                .iter()
                .map(|c| c.map(|c| enc.classes[c].clone()).unwrap_or_default())
                .collect();
            let split = modelsel::stratified_split(&truth, &SplitSpec::standard(args.fit.seed))?;
            let rows = |idx: &[usize]| d.samples.select(ndarray::Axis(0), idx);
            let (xtr, xva) = (rows(&split.train), rows(&split.valid));
            let (ytr, yva) = (enc.targets.select(&split.train)?, enc.targets.select(&split.valid)?);
            let candidates = match args.design.design {
                DesignArg::Direct => vec![DesignCandidate::Direct],
                _ => parse_grid(grid_spec, kernel::median_heuristic_beta(xtr.view())?)?
                    .into_iter()
                    .map(|beta| DesignCandidate::GaussianNystrom {
                        beta,
                        landmarks: args.design.landmarks.unwrap_or(DEFAULT_LANDMARKS),
                        seed: args.fit.seed,
                    })
                    .collect(),
            };
            modelsel::grid_search(
                &Task { features: xtr.view(), targets: &ytr },
                &Task { features: xva.view(), targets: &yva },
                &candidates,
                &cfg,
                crit,
            )?
            .cv
        }
    };
    write_or_print(args.output.as_deref(), &result.to_csv())?;
    match result.chosen().candidate.beta() {
        Some(b) => eprintln!("chosen beta: {b}"),
        None => eprintln!("chosen: direct"),
    }
    Ok(())
}

pub fn evaluate(ctx: &Context, args: EvaluateArgs) -> Result<()> {
    check_design_flags(&args.design)?;
    let d = load_training(ctx, &args.data, !args.data.no_scale)?;
    if args.full_data {
        return evaluate_full(&d, &args);
    }
    if args.labels.unlabeled_token.is_some() {
        return Err(config_err("--unlabeled-token is only supported by train and cv"));
    }
    if args.design.beta != "median" || args.design.beta_grid.is_some() {
        return Err(config_err(
            "split evaluation tunes beta on the standard grid; --beta and --beta-grid need --full-data",
        ));
    }
    let labels = labels_of(&d)?.to_vec();
    let classes = classify::classes_in_order(&labels);
    let mut cfg = fit_config(&args.fit, classes.len())?;
    if cfg.rank != classes.len() {
        return Err(config_err("split evaluation uses rank equal to the class count"));
    }
    cfg.rank = classes.len();
    let family = match args.design.design {
        DesignArg::Direct => DesignFamily::Direct,
        DesignArg::Kernel => DesignFamily::Kernel,
        DesignArg::Nystrom => DesignFamily::Nystrom {
            landmarks: args.design.landmarks.unwrap_or(DEFAULT_LANDMARKS),
        },
    };
    let pipeline = NmfLabPipeline::new(family)
        .with_config(cfg)
        .with_criterion(criterion(args.cv.criterion))
        .with_soft_r(args.labels.soft_r);
    let data = LabeledData::new(d.samples, labels)?;
    let summary = modelsel::repeated_evaluation(&data, &SplitSpec::standard(args.fit.seed), args.repeats, &pipeline)?;

    let mut per_repeat = String::from("repeat,seed,accuracy,beta\n");
    let mut total: Option<ConfusionMatrix> = None;
    for (i, o) in summary.outcomes.iter().enumerate() {
        let beta = o.chosen.and_then(|c| c.beta()).map(|b| b.to_string()).unwrap_or_default();
        let _ = writeln!(per_repeat, "{i},{},{:.6},{beta}", args.fit.seed + i as u64, o.accuracy);
        if let Some(cm) = &o.confusion {
            match &mut total {
                Some(t) => t.add(cm)?,
                None => total = Some(cm.clone()),
            }
        }
    }
    if let Some(p) = &args.output {
        model_file::write_atomic(p, per_repeat.as_bytes())?;
    }
    println!(
        "accuracy: {:.2}% +- {:.2}% over {} repeat(s)",
        100.0 * summary.mean_accuracy,
        100.0 * summary.sd_accuracy,
        args.repeats
    );
    if let Some(cm) = total {
        println!("confusion (rows predicted, columns true, summed over repeats):");
        print!("{}", cm.to_csv());
        if let Some(p) = &args.confusion {
            model_file::write_atomic(p, cm.to_csv().as_bytes())?;
        }
    }
    Ok(())
}

/// Fit on every sample, score on the same samples.
fn evaluate_full(d: &Dataset, args: &EvaluateArgs) -> Result<()> {
    let labels = labels_of(d)?;
    let enc = encode(labels, &args.labels)?;
    let cfg = fit_config(&args.fit, enc.classes.len())?;
    let design = match args.design.design {
        DesignArg::Direct => KernelDesign::Direct { feature_dim: d.feature_dim() },
        DesignArg::Kernel => {
            let beta = match &args.design.beta_grid {
                Some(spec) => {
                    let grid = parse_grid(spec, kernel::median_heuristic_beta(d.samples.view())?)?;
                    modelsel::repeated_kfold_cv_kernel(
                        d.samples.view(),
                        &enc.targets,
                        &grid,
                        args.cv.folds,
                        args.cv.cv_repeats,
                        &cfg,
                        criterion(args.cv.criterion),
                        args.fit.seed,
                    )?
                    .chosen()
                    .candidate
                    .beta()
                    .expect("kernel candidate")
                }
                None => resolve_beta(&args.design, &d.samples)?,
            };
            KernelDesign::gaussian_full(beta, d.samples.clone())?
        }
        DesignArg::Nystrom => DesignCandidate::GaussianNystrom {
            beta: resolve_beta(&args.design, &d.samples)?,
            landmarks: args.design.landmarks.unwrap_or(DEFAULT_LANDMARKS),
            seed: args.fit.seed,
        }
        .design(d.samples.view())?,
    };
    let a = design.build_covariates(d.samples.view())?;
    let (model, report) = trinmf::fit(enc.targets.columns(), &a, &cfg).map_err(|e| e.context("fitting label model"))?;
    let model = model.with_design(design)?.with_class_names(enc.classes.clone())?;
    let pred = classify::membership_probabilities(&model, &a)?;

    let token = args.labels.unlabeled_token.as_deref();
    let keep: Vec<usize> = (0..labels.len()).filter(|&i| Some(labels[i].as_str()) != token).collect();
    let predicted: Vec<usize> = keep.iter().map(|&i| pred.predicted[i]).collect();
    let truth = classify::class_indices(&keep.iter().map(|&i| &labels[i]).collect::<Vec<_>>(), &enc.classes)?;
    let cm = ConfusionMatrix::from_indices(&enc.classes, &predicted, &truth)?;

    print!("{}", summary(&report, &model));
    println!("accuracy: {:.2}% ({} of {})", 100.0 * cm.accuracy(), cm.correct(), cm.total());
    println!("confusion (rows predicted, columns true):");
    print!("{}", cm.to_csv());
    if let Some(p) = &args.confusion {
        model_file::write_atomic(p, cm.to_csv().as_bytes())?;
    }
    Ok(())
}
