use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use auprc_core::simlab::{
    run_bias_experiment, run_ema_experiment, run_interp_experiment, run_stability_probe, BiasExperimentSpec,
    BlobGenerator, CoupledEma, EmaExperimentSpec, InterpExperimentSpec, ScoreDistribution, StabilityProbeSpec,
};
use auprc_core::{
    ap_loss, empirical_auprc, pr_curve, surrogate_risk, train_with_validation, Dataset, ModelKind, RngHandle,
    ScoreRange, ScoreSet, ScorerModel, SurrogateParams, TrainConfig,
};

use crate::config::load_layered;
use crate::manifest::RunManifest;
use crate::{
    write_file, BiasArgs, Cli, CliError, Command, EmaArgs, EvalArgs, GenerateCommand, GlobalArgs, InterpArgs,
    SimulateCommand, StabilityArgs, TrainArgs,
};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Train(a) => train(g, a),
        Command::Eval(a) => eval(g, a),
        Command::Simulate(SimulateCommand::Bias(a)) => bias(g, a),
        Command::Simulate(SimulateCommand::Interp(a)) => interp(g, a),
        Command::Simulate(SimulateCommand::Ema(a)) => ema(g, a),
        Command::Simulate(SimulateCommand::Stability(a)) => stability(g, a),
        Command::Generate(GenerateCommand::Blobs(a)) => blobs(g, a),
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Loads a dataset CSV, skipping a first line whose label field is not a
/// number.
fn load_data(path: &Path) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let first = text.lines().next().unwrap_or_default();
    let label = first.split(',').next().unwrap_or_default().trim();
    let has_header = !label.is_empty() && label.parse::<f64>().is_err();
    Dataset::from_reader(text.as_bytes(), has_header)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSettings {
    pub kind: ModelKind,
    pub hidden_dim: usize,
    pub range: ScoreRange,
    /// Initial weights are Gaussian with std `init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
}

impl Default for ModelSettings {
    fn default() -> Self {
        Self {
            kind: ModelKind::Linear,
            hidden_dim: 0,
            range: ScoreRange::default(),
            init_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSettings {
    pub model: ModelSettings,
    pub trainer: TrainConfig,
}

fn train(g: &GlobalArgs, a: &TrainArgs) -> Result<(), CliError> {
    let mut s = load_layered(&TrainSettings::default(), g.config.as_deref())?;
    let t = &mut s.trainer;
    set(&mut t.max_iters, a.iters);
    set(&mut t.beta, a.beta);
    set(&mut t.n_pos, a.npos);
    set(&mut t.n_neg, a.nneg);
    set(&mut t.seed, a.seed);
    set(&mut t.lr_schedule, a.lr);
    set(&mut t.weight_decay, a.weight_decay);
    set(&mut t.lambda1, a.lambda1);
    set(&mut t.lambda2, a.lambda2);
    set(&mut t.tau1, a.tau1);
    set(&mut t.tau2, a.tau2);
    set(&mut t.eval_every, a.eval_every);
    set(&mut t.aux_gradient, a.aux_gradient);
    if a.prior.is_some() {
        t.prior = a.prior;
    }
    set(&mut s.model.kind, a.model);
    set(&mut s.model.hidden_dim, a.hidden);
    set(&mut s.model.init_scale, a.init_scale);
    s.trainer.validate()?;

    let data = load_data(&a.data)?;
    let val = a.val.as_deref().map(load_data).transpose()?;
    let seed = s.trainer.seed;
    let m = &s.model;
    let model = ScorerModel::random(
        m.kind,
        data.dim(),
        m.hidden_dim,
        m.range,
        m.init_scale,
        &mut RngHandle::new(seed, 0).fork(0).rng(),
    )?;
    let out = train_with_validation(&data, val.as_ref(), model, &s.trainer, RngHandle::new(seed, 0))?;

    let trace_path = g.out_dir.join("trace.csv");
    let model_path = g.out_dir.join("model.json");
    write_file(&trace_path, &out.trace.to_csv())?;
    write_file(&model_path, &(out.model.to_json()? + "\n"))?;
    let mut outputs = vec![trace_path, model_path];
    if g.json {
        let path = g.out_dir.join("trace.json");
        write_file(&path, &to_json(&out.trace)?)?;
        outputs.push(path);
    }
    let config = json!({ "data": a.data, "val": a.val, "settings": s });
    finish(g, "train", &config, seed, outputs)?;

    let last = out.trace.records.last().expect("at least one iteration");
    println!("iterations {}", last.iter);
    println!("final_loss {}", last.loss);
    if let Some(v) = out.trace.final_val_auprc() {
        println!("val_auprc {v}");
    }
    Ok(())
}

fn to_json(x: &impl Serialize) -> Result<String, CliError> {
    serde_json::to_string_pretty(x)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Usage(e.to_string()))
}

/// Writes `<command>.manifest.json` into the output directory.
fn finish(g: &GlobalArgs, name: &str, config: &impl Serialize, seed: u64, outputs: Vec<PathBuf>) -> Result<(), CliError> {
    let mut manifest = RunManifest::new(name, config, seed)?;
    manifest.outputs = outputs;
    manifest.write(&g.out_dir.join(format!("{}.manifest.json", name.replace(' ', "_"))))
}

#[derive(Debug, Serialize)]
struct EvalReport {
    auprc: f64,
    surrogate_risk: f64,
    ap_loss: f64,
    prior: f64,
}

fn eval(g: &GlobalArgs, a: &EvalArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.model)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.model.display())))?;
    let model = ScorerModel::from_json(&text)
        .map_err(|e| CliError::Usage(format!("corrupt checkpoint {}: {e}", a.model.display())))?;
    model
        .validate()
        .map_err(|e| CliError::Usage(format!("corrupt checkpoint {}: {e}", a.model.display())))?;
    let data = load_data(&a.data)?;
    if data.dim() != model.input_dim {
        return Err(CliError::Usage(format!(
            "checkpoint expects {} features, {} has {}",
            model.input_dim,
            a.data.display(),
            data.dim()
        )));
    }
    let scores = ScoreSet::new(
        model.forward_batch(data.positives().iter().map(|r| r.features()))?,
        model.forward_batch(data.negatives().iter().map(|r| r.features()))?,
    )?;
    let defaults = TrainConfig::default();
    let prior = a.prior.unwrap_or_else(|| data.prior());
    let params = SurrogateParams::new(a.tau1.unwrap_or(defaults.tau1), a.tau2.unwrap_or(defaults.tau2), prior)?;
    let report = EvalReport {
        auprc: empirical_auprc(&scores, prior)?,
        surrogate_risk: surrogate_risk(&scores, &params)?,
        ap_loss: ap_loss(&scores, &params)?,
        prior,
    };
    if g.json {
        print!("{}", to_json(&report)?);
    } else {
        println!("auprc {}", report.auprc);
        println!("surrogate_risk {}", report.surrogate_risk);
        println!("ap_loss {}", report.ap_loss);
    }
    if let Some(path) = &a.pr_curve {
        let path = g.out_dir.join(path);
        write_file(&path, &pr_curve(&scores, prior)?.to_csv())?;
        let config = json!({
            "data": a.data,
            "model": a.model,
            "prior": prior,
            "tau1": params.tau1,
            "tau2": params.tau2,
        });
        let mut manifest = RunManifest::new("eval", &config, 0)?;
        manifest.outputs = vec![path.clone()];
        manifest.write(&path.with_extension("manifest.json"))?;
    }
    Ok(())
}

/// Common tail of the simulation commands: CSV, optional JSON, manifest.
fn write_table(g: &GlobalArgs, name: &str, csv: String, json: &impl Serialize, config: &impl Serialize, seed: u64) -> Result<(), CliError> {
    let csv_path = g.out_dir.join(format!("{name}.csv"));
    write_file(&csv_path, &csv)?;
    let mut outputs = vec![csv_path.clone()];
    if g.json {
        let path = g.out_dir.join(format!("{name}.json"));
        write_file(&path, &to_json(json)?)?;
        outputs.push(path);
    }
    finish(g, name, config, seed, outputs)?;
    println!("wrote {}", csv_path.display());
    Ok(())
}

fn distribution(current: ScoreDistribution, flag: Option<auprc_core::simlab::DistKind>) -> ScoreDistribution {
    match flag {
        Some(kind) if kind != current.kind => ScoreDistribution::standard(kind),
        _ => current,
    }
}

fn bias(g: &GlobalArgs, a: &BiasArgs) -> Result<(), CliError> {
    let mut spec = load_layered(&BiasExperimentSpec::default(), g.config.as_deref())?;
    spec.distribution = distribution(spec.distribution, a.dist.dist);
    set(&mut spec.prior_pi, a.pi);
    set(&mut spec.sample_rate_pi0, a.pi0);
    set(&mut spec.batch_sizes, a.sizes.clone());
    set(&mut spec.repeats, a.repeats);
    set(&mut spec.seed, a.seed);
    set(&mut spec.population_size, a.population);
    set(&mut spec.tau1, a.tau1);
    set(&mut spec.tau2, a.tau2);
    if let (Some(beta), Some(steps)) = (a.coupled_beta, a.coupled_steps) {
        spec.coupled = Some(CoupledEma { beta, steps });
    }
    let table = run_bias_experiment(&spec)?;
    write_table(g, "bias", table.to_csv(), &table, &spec, spec.seed)
}

fn interp(g: &GlobalArgs, a: &InterpArgs) -> Result<(), CliError> {
    let mut spec = load_layered(&InterpExperimentSpec::default(), g.config.as_deref())?;
    spec.distribution = distribution(spec.distribution, a.dist.dist);
    set(&mut spec.n_values, a.sizes.clone());
    set(&mut spec.target_len, a.target);
    set(&mut spec.repeats, a.repeats);
    set(&mut spec.seed, a.seed);
    set(&mut spec.grid, a.grid);
    let table = run_interp_experiment(&spec)?;
    write_table(g, "interp", table.to_csv(), &table, &spec, spec.seed)
}

fn ema(g: &GlobalArgs, a: &EmaArgs) -> Result<(), CliError> {
    let mut spec = load_layered(&EmaExperimentSpec::default(), g.config.as_deref())?;
    spec.distribution = distribution(spec.distribution, a.dist.dist);
    set(&mut spec.pop_size, a.pop);
    set(&mut spec.batch_pos, a.batch);
    set(&mut spec.betas, a.betas.clone());
    set(&mut spec.steps, a.steps);
    set(&mut spec.repeats, a.repeats);
    set(&mut spec.reference_draws, a.reference_draws);
    set(&mut spec.seed, a.seed);
    let outcome = run_ema_experiment(&spec)?;
    write_table(g, "ema", outcome.table.to_csv(), &outcome, &spec, spec.seed)
}

fn stability(g: &GlobalArgs, a: &StabilityArgs) -> Result<(), CliError> {
    let mut spec = load_layered(&StabilityProbeSpec::default(), g.config.as_deref())?;
    set(&mut spec.sizes, a.sizes.clone());
    set(&mut spec.prior_pi, a.pi);
    set(&mut spec.num_perturbations, a.perturbations);
    set(&mut spec.seed, a.seed);
    set(&mut spec.train.max_iters, a.iters);
    let table = run_stability_probe(&spec)?;
    write_table(g, "stability", table.to_csv(), &table, &spec, spec.seed)
}

fn blobs(g: &GlobalArgs, a: &crate::BlobArgs) -> Result<(), CliError> {
    let generator = BlobGenerator::default();
    let data = generator.dataset(a.n, a.pi, &mut RngHandle::new(a.seed, 0).rng())?;
    let path = g.out_dir.join(&a.name);
    write_file(&path, &data.to_csv())?;
    let config = json!({ "n": a.n, "pi": a.pi, "generator": generator });
    let mut manifest = RunManifest::new("generate blobs", &config, a.seed)?;
    manifest.outputs = vec![path.clone()];
    manifest.write(&path.with_extension("manifest.json"))?;
    println!("wrote {}", path.display());
    Ok(())
}
