use std::collections::BTreeMap;
use std::fmt;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use serde_json::json;
use stylemetric::calibration::{
    build_supervision_set, estimate_recognition_curve, filter_responses, load_curves, save_curves,
    summarize_supervision_set, SupervisionSet,
};
use stylemetric::encoder::{BackboneConfig, Checkpoint, Encoder};
use stylemetric::evaluation::{
    agreement_metrics, cosine_similarity, export_report, load_pairs, pose_consistency_by_identity,
    retrieval_topk_accuracy, roc_curve, score_pairs, tpr_at_fpr, write_pairs, EvalReport, LabeledEmbeddings, Pair,
    VerificationScores, FPR_TARGETS, REPORT_FILE,
};
use stylemetric::model::{
    load_response_log, load_sample_manifest, validate_dataset, write_manifest, write_response_log, Answer,
    EmbeddingMatrix, Hyperparams, Protocol,
};
use stylemetric::synthetic::{generate, identity_id, SyntheticConfig, SyntheticDataset};
use stylemetric::trainer::{
    parse_loss_log, write_loss_log, LossLogRow, TrainCallbacks, TrainState, Trainer, TrainingData,
};

use super::{
    BackboneFlags, BuildPairsArgs, CalibrateArgs, Command, EmbedArgs, EvalAgreementArgs, EvalPoseArgs,
    EvalRetrieveArgs, EvalVerifyArgs, HyperparamFlags, LatencyArgs, OutDir, ReportArgs, SynthArgs, TrainArgs,
};

pub const CURVES_FILE: &str = "curves.json";
pub const EXCLUSIONS_FILE: &str = "exclusions.json";
pub const MANIFEST_FILE: &str = "supervision.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const LOSS_LOG_FILE: &str = "loss_log.csv";
pub const HYPERPARAMS_FILE: &str = "hyperparams.conf";
pub const EMBEDDINGS_FILE: &str = "embeddings.txt";
pub const SCORES_FILE: &str = "scores.csv";

#[derive(Debug)]
pub enum CliError {
    Lib(stylemetric::Error),
    Io { path: PathBuf, source: std::io::Error },
    Invalid(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(e) if e.is_io() => 1,
            CliError::Io { .. } => 1,
            CliError::Lib(_) | CliError::Invalid(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Invalid(m) => f.write_str(m),
        }
    }
}

impl From<stylemetric::Error> for CliError {
    fn from(e: stylemetric::Error) -> Self {
        CliError::Lib(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn out_dir(o: &OutDir) -> Result<&Path> {
    std::fs::create_dir_all(&o.out).map_err(|source| CliError::Io { path: o.out.clone(), source })?;
    Ok(&o.out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| CliError::Io { path: path.to_path_buf(), source })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("plain data always serializes");
    write_text(path, &(text + "\n"))
}

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(a) => synth(a),
        Command::Calibrate(a) => calibrate(a),
        Command::BuildPairs(a) => build_pairs(a),
        Command::Train(a) => train(a),
        Command::Embed(a) => embed(a),
        Command::EvalVerify(a) => eval_verify(a),
        Command::EvalRetrieve(a) => eval_retrieve(a),
        Command::EvalPose(a) => eval_pose(a),
        Command::EvalAgreement(a) => eval_agreement(a),
        Command::Report(a) => report(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    if a.test_identities == 0 || a.test_identities >= a.identities {
        return Err(CliError::Invalid(format!(
            "--test-identities must be in 1..{}, got {}",
            a.identities, a.test_identities
        )));
    }
    let cfg = SyntheticConfig {
        identities: a.identities,
        samples_per_identity: a.samples_per_identity,
        seed: a.seed,
        ..SyntheticConfig::default()
    };
    let data = generate(&cfg)?;
    let split = a.identities - a.test_identities;
    let train_ids: Vec<String> = (0..split).map(identity_id).collect();
    let test_ids: Vec<String> = (split..a.identities).map(identity_id).collect();
    let train = SyntheticDataset {
        samples: data.samples_of(&train_ids),
        features: data.features.clone(),
    };
    let pairs: Vec<Pair> = data
        .verification_pairs(&test_ids)
        .into_iter()
        .map(|(id_a, id_b, same)| Pair { id_a, id_b, same })
        .collect();

    let dir = out_dir(&a.out)?;
    write_manifest(dir.join("samples.jsonl"), &data.samples)?;
    write_manifest(dir.join("train_samples.jsonl"), &train.samples)?;
    write_manifest(dir.join("test_samples.jsonl"), &data.samples_of(&test_ids))?;
    data.features.save(dir.join("features.txt"))?;
    write_response_log(dir.join("responses.csv"), &train.forced_choice_log(a.responses_per_level, 1))?;
    write_pairs(dir.join("pairs.csv"), &pairs)?;
    println!(
        "{} samples of {} identities ({} train, {} held out), {} pairs",
        data.samples.len(),
        a.identities,
        split,
        a.test_identities,
        pairs.len()
    );
    Ok(())
}

fn check_latency(l: &LatencyArgs) -> Result<()> {
    if !(l.min_latency.is_finite() && l.max_latency.is_finite() && 0.0 <= l.min_latency && l.min_latency <= l.max_latency)
    {
        return Err(CliError::Invalid(format!(
            "latency window [{}, {}] is not a valid range",
            l.min_latency, l.max_latency
        )));
    }
    Ok(())
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    check_latency(&a.latency)?;
    let responses = load_response_log(&a.responses)?;
    let samples = load_sample_manifest(&a.samples)?;
    let validation = validate_dataset(&samples, &responses);
    for orphan in &validation.orphan_references {
        eprintln!("warning: response `{}` references unknown sample `{}`", orphan.response_id, orphan.sample_id);
    }
    let (kept, exclusions) = filter_responses(&responses, a.latency.max_latency, a.latency.min_latency);
    let curves = estimate_recognition_curve(&kept, &samples)?;
    let dir = out_dir(&a.out)?;
    save_curves(dir.join(CURVES_FILE), &curves)?;
    write_json(&dir.join(EXCLUSIONS_FILE), &exclusions)?;
    println!(
        "{} of {} responses kept, {} curves",
        exclusions.kept,
        exclusions.input,
        curves.len()
    );
    Ok(())
}

fn build_pairs(a: BuildPairsArgs) -> Result<()> {
    if !a.threshold.is_finite() {
        return Err(CliError::Invalid(format!("threshold must be finite, got {}", a.threshold)));
    }
    let curves = load_curves(&a.curves)?;
    let samples = load_sample_manifest(&a.samples)?;
    let set = build_supervision_set(&samples, &curves, a.threshold);
    if set.is_empty() {
        eprintln!("warning: no strength level reaches accuracy {}; the manifest is empty", a.threshold);
    }
    let dir = out_dir(&a.out)?;
    set.save(dir.join(MANIFEST_FILE), dir.join(PROVENANCE_FILE))?;
    let summary = summarize_supervision_set(&set);
    write_json(&dir.join("summary.json"), &summary)?;
    println!("{} samples over {} identities", summary.samples, summary.identities);
    Ok(())
}

/// Built-in defaults, then the resumed checkpoint, then `--config`, then flags.
fn resolve_hyperparams(flags: &HyperparamFlags, resumed: Option<&Hyperparams>) -> Result<Hyperparams> {
    let mut hp = resumed.cloned().unwrap_or_default();
    if let Some(path) = &flags.config {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        hp.apply_config(&text, path)?;
    }
    let named = [
        ("margin_m", &flags.margin_m),
        ("scale_alpha", &flags.scale_alpha),
        ("lambda_scon", &flags.lambda_scon),
        ("lambda_reg", &flags.lambda_reg),
        ("temperature_tau", &flags.temperature_tau),
        ("adapter_rank", &flags.adapter_rank),
        ("adapter_scale", &flags.adapter_scale),
        ("learning_rate", &flags.learning_rate),
        ("weight_decay", &flags.weight_decay),
        ("batch_identities", &flags.batch_identities),
        ("samples_per_identity", &flags.samples_per_identity),
        ("total_iterations", &flags.total_iterations),
        ("checkpoint_every", &flags.checkpoint_every),
        ("seed", &flags.seed),
    ];
    let mut overrides: BTreeMap<String, String> = BTreeMap::new();
    let mut add = |key: &str, value: &str| -> Result<()> {
        match overrides.get(key) {
            Some(prev) if prev != value => Err(CliError::Invalid(format!(
                "conflicting overrides for `{key}`: `{prev}` and `{value}`"
            ))),
            _ => {
                overrides.insert(key.to_string(), value.to_string());
                Ok(())
            }
        }
    };
    for (key, value) in named {
        if let Some(v) = value {
            add(key, v.trim())?;
        }
    }
    for kv in &flags.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| CliError::Invalid(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        add(key.trim(), value.trim())?;
    }
    for (key, value) in &overrides {
        hp.set(key, value)?;
    }
    hp.validate()?;
    Ok(hp)
}

fn backbone_config(flags: &BackboneFlags, input_dim: usize) -> Result<BackboneConfig> {
    if let Some(path) = &flags.backbone {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.clone(), source })?;
        return serde_json::from_str(&text)
            .map_err(|e| CliError::Invalid(format!("{}:{}: {e}", path.display(), e.line())));
    }
    let architecture = flags.architecture.parse()?;
    let mut cfg = BackboneConfig::toy_mlp(input_dim, flags.hidden_dim, flags.embed_dim, flags.base_seed);
    cfg.architecture = architecture;
    cfg.tokens = flags.tokens;
    Ok(cfg.with_tier(flags.tier.parse()?))
}

struct CheckpointWriter<'a> {
    dir: &'a Path,
    encoder: &'a Encoder,
    hp: &'a Hyperparams,
    last: Option<LossLogRow>,
}

impl TrainCallbacks for CheckpointWriter<'_> {
    fn on_step(&mut self, row: &LossLogRow, _: &TrainState) -> ControlFlow<()> {
        self.last = Some(row.clone());
        ControlFlow::Continue(())
    }

    fn on_checkpoint(&mut self, state: &TrainState) -> stylemetric::Result<()> {
        let path = self.dir.join(format!("checkpoint-{:06}.json", state.iteration));
        state.to_checkpoint(self.encoder, self.hp).save(&path)?;
        if let Some(row) = &self.last {
            eprintln!(
                "iteration {}/{}: total loss {:.4}",
                state.iteration, self.hp.total_iterations, row.breakdown.total
            );
        }
        Ok(())
    }
}

fn train(a: TrainArgs) -> Result<()> {
    let set = SupervisionSet::load(&a.manifest, &a.provenance)?;
    if set.is_empty() {
        return Err(CliError::Invalid(format!("{}: supervision manifest is empty", a.manifest.display())));
    }
    let features = EmbeddingMatrix::load(&a.features)?;
    let resumed = a.resume.as_ref().map(Checkpoint::load).transpose()?;
    let hp = resolve_hyperparams(&a.hyperparams, resumed.as_ref().map(|c| &c.hyperparams))?;
    let encoder = match &resumed {
        Some(ckpt) => ckpt.encoder()?,
        None => Encoder::from_config(&backbone_config(&a.backbone, features.dim())?)?,
    };
    let data = TrainingData::new(&set, &features)?;
    let trainer = Trainer::new(&encoder, &data, hp.clone())?.deterministic(a.deterministic);
    let start = resumed.as_ref().map(TrainState::from_checkpoint).transpose()?;
    let start_iteration = start.as_ref().map_or(0, |s| s.iteration);

    let dir = out_dir(&a.out)?;
    let mut writer = CheckpointWriter {
        dir,
        encoder: &encoder,
        hp: &hp,
        last: None,
    };
    let outcome = trainer.run(start, &mut writer)?;

    let log_path = dir.join(LOSS_LOG_FILE);
    let mut rows = Vec::new();
    if start_iteration > 0 && log_path.exists() {
        let text = std::fs::read_to_string(&log_path).map_err(|source| CliError::Io { path: log_path.clone(), source })?;
        rows = parse_loss_log(&text, &log_path)?;
        rows.retain(|r| r.iteration <= start_iteration);
    }
    rows.extend(outcome.log.iter().cloned());
    write_loss_log(&log_path, &rows)?;
    outcome.state.to_checkpoint(&encoder, &hp).save(dir.join(CHECKPOINT_FILE))?;
    write_text(&dir.join(HYPERPARAMS_FILE), &hp.to_config())?;
    match outcome.log.last() {
        Some(last) => println!(
            "trained {} -> {} iterations, final total loss {:.4}, base checksum {}",
            start_iteration,
            outcome.state.iteration,
            last.breakdown.total,
            encoder.base_checksum()
        ),
        None => println!("nothing to do: already at iteration {}", outcome.state.iteration),
    }
    Ok(())
}

fn embed(a: EmbedArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let encoder = ckpt.encoder()?;
    let mut features = EmbeddingMatrix::load(&a.features)?;
    if let Some(manifest) = &a.manifest {
        let samples = load_sample_manifest(manifest)?;
        let ids: Vec<&str> = samples.iter().map(|s| s.sample_id.as_str()).collect();
        features = features.select(&ids)?;
    }
    let z = if a.reference {
        encoder.embed_reference(&features)?
    } else {
        encoder.embed(&features, &ckpt.adapters, true)?
    };
    let dir = out_dir(&a.out)?;
    z.save(dir.join(EMBEDDINGS_FILE))?;
    println!("{} embeddings of dim {}", z.len(), z.dim());
    Ok(())
}

fn eval_verify(a: EvalVerifyArgs) -> Result<()> {
    let embeddings = EmbeddingMatrix::load(&a.embeddings)?;
    let pairs = load_pairs(&a.pairs)?;
    let scores = score_pairs(&embeddings, &pairs)?;
    let report = EvalReport::verification(&scores)?;
    let mut targets = FPR_TARGETS.to_vec();
    targets.extend(a.fpr_targets.iter().copied());
    let mut points = String::from("fpr_target,tpr\n");
    for t in targets {
        points.push_str(&format!("{t},{}\n", tpr_at_fpr(&scores, t)?));
    }
    let dir = out_dir(&a.out)?;
    scores.save(dir.join(SCORES_FILE))?;
    write_text(&dir.join("operating_points.csv"), &points)?;
    report.save(dir.join(REPORT_FILE))?;
    print!("{}", report.to_json());
    Ok(())
}

fn eval_retrieve(a: EvalRetrieveArgs) -> Result<()> {
    let samples = load_sample_manifest(&a.manifest)?;
    let gallery = LabeledEmbeddings::from_samples(EmbeddingMatrix::load(&a.gallery)?, &samples)?;
    let queries = match &a.queries {
        Some(path) => LabeledEmbeddings::from_samples(EmbeddingMatrix::load(path)?, &samples)?,
        None => gallery.clone(),
    };
    let accuracy = retrieval_topk_accuracy(&gallery, &queries, a.k)?;
    let report = EvalReport {
        retrieval_top4: (a.k == 4).then_some(accuracy),
        ..EvalReport::default()
    };
    let dir = out_dir(&a.out)?;
    report.save(dir.join(REPORT_FILE))?;
    let detail = json!({ "k": a.k, "accuracy": accuracy, "gallery": gallery.len(), "queries": queries.len() });
    write_json(&dir.join("retrieval.json"), &detail)?;
    println!("top-{} retrieval accuracy {accuracy}", a.k);
    Ok(())
}

fn eval_pose(a: EvalPoseArgs) -> Result<()> {
    let samples = load_sample_manifest(&a.manifest)?;
    let views = LabeledEmbeddings::from_samples(EmbeddingMatrix::load(&a.embeddings)?, &samples)?;
    let pose = pose_consistency_by_identity(&views)?;
    let report = EvalReport {
        pose_consistency: Some(pose.mean),
        ..EvalReport::default()
    };
    let dir = out_dir(&a.out)?;
    report.save(dir.join(REPORT_FILE))?;
    write_json(&dir.join("pose.json"), &pose)?;
    println!(
        "pose consistency {} over {} identities",
        pose.mean,
        pose.per_identity.len()
    );
    Ok(())
}

fn eval_agreement(a: EvalAgreementArgs) -> Result<()> {
    check_latency(&a.latency)?;
    let embeddings = EmbeddingMatrix::load(&a.embeddings)?;
    let responses = load_response_log(&a.responses)?;
    let (kept, _) = filter_responses(&responses, a.latency.max_latency, a.latency.min_latency);
    let row = |id: &str| {
        embeddings.get(id).ok_or_else(|| stylemetric::Error::UnknownId {
            kind: "embedding",
            id: id.to_string(),
        })
    };
    let mut model = Vec::with_capacity(kept.len());
    let mut human = Vec::with_capacity(kept.len());
    for r in &kept {
        let source = row(&r.source_sample_id)?;
        let cos_a = cosine_similarity(source, row(&r.option_a_sample_id)?)?;
        match r.protocol {
            Protocol::Verification => {
                model.push(cos_a >= a.threshold);
                human.push(r.answer == Answer::Same);
            }
            Protocol::ForcedChoice => {
                let b = r.option_b_sample_id.as_deref().expect("validated forced-choice rows have option b");
                model.push(cos_a >= cosine_similarity(source, row(b)?)?);
                human.push(r.answer == Answer::A);
            }
        }
    }
    let agreement = agreement_metrics(&model, &human)?;
    let report = EvalReport {
        kappa: agreement.kappa,
        mcc: agreement.mcc,
        ..EvalReport::default()
    };
    let dir = out_dir(&a.out)?;
    report.save(dir.join(REPORT_FILE))?;
    write_json(&dir.join("agreement.json"), &json!({ "threshold": a.threshold, "agreement": agreement }))?;
    println!(
        "{} judgments: accuracy {}, kappa {}, mcc {}",
        model.len(),
        agreement.accuracy,
        agreement.kappa.map_or("null".into(), |v| v.to_string()),
        agreement.mcc.map_or("null".into(), |v| v.to_string())
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    let mut merged = EvalReport::default();
    for path in &a.partials {
        merged.merge(&EvalReport::load(path)?);
    }
    let scores = VerificationScores::load(&a.scores)?;
    let roc = roc_curve(&scores)?;
    export_report(&merged, &roc, out_dir(&a.out)?)?;
    print!("{}", merged.to_json());
    Ok(())
}
