//! Command-line front end: simulate datasets, extract features, train
//! dictionaries and classifiers, classify traces, evaluate, and run
//! declarative experiments.

use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use modrec::dataset::{generate_dataset, Dataset, MANIFEST_FILE};
use modrec::features::global::{compute_order_stats, hoc_features, DEFAULT_QUANTILES};
use modrec::features::local::{
    encode_instance, load_dictionary_pair, save_dictionary_pair, train_dictionary_pair,
};
use modrec::features::{read_feature_csv, write_feature_csv, FeatureRow, FeatureTag};
use modrec::harness::{parameter_sweep, run_experiment, ExperimentConfig};
use modrec::iq::{to_polar, Modulation};
use modrec::sim::SimConfig;
use modrec::svm::{kfold_evaluate, predict, train_svm, train_svm_auto, SvmModel};
use modrec::{Error, Result};

#[derive(Parser)]
#[command(name = "modrec", version, about = "Modulation recognition toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated dataset (raw I/Q blob + manifest).
    Simulate(SimulateArgs),
    /// Extract a feature family from a dataset into a CSV.
    Extract(ExtractArgs),
    /// Train an (amplitude, phase) shingle dictionary pair.
    TrainDict(TrainDictArgs),
    /// Train a one-vs-rest linear SVM from a feature CSV.
    TrainClf(TrainClfArgs),
    /// Classify a dataset with a trained model.
    Classify(ClassifyArgs),
    /// Stratified k-fold cross validation over a feature CSV.
    Evaluate(EvaluateArgs),
    /// Run a declarative experiment config end to end.
    Run(RunArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Modulation scheme; repeat for several (default: all five).
    #[arg(long = "mod", value_parser = Modulation::from_str)]
    modulations: Vec<Modulation>,
    /// Es/N0 in dB ("inf" for noiseless).
    #[arg(long)]
    snr: f64,
    /// Scan overlap in percent, (0, 100].
    #[arg(long, default_value_t = 100.0)]
    overlap: f64,
    /// Symbols removed from the constellation (scan bias).
    #[arg(long, default_value_t = 0)]
    missing: usize,
    /// Constellation rotation in radians.
    #[arg(long, default_value_t = 0.0)]
    rotation: f64,
    /// Instances per modulation.
    #[arg(long)]
    count: usize,
    /// Samples per instance.
    #[arg(long, default_value_t = 512)]
    len: usize,
    /// Samples per symbol.
    #[arg(long, default_value_t = 4)]
    sps: usize,
    #[arg(long)]
    seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExtractArgs {
    /// Feature family: hoc | os | lp | lp+hoc.
    #[arg(long, value_parser = FeatureTag::from_str)]
    features: FeatureTag,
    /// Dictionary directory (required for lp and lp+hoc).
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Dataset manifest (or its directory).
    #[arg(long = "in")]
    input: PathBuf,
    /// Output feature CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainDictArgs {
    /// Dataset manifest (or its directory).
    #[arg(long = "in")]
    input: PathBuf,
    /// Shingle length.
    #[arg(long, default_value_t = 3)]
    l: usize,
    /// Dictionary size (GMM components).
    #[arg(long = "K", default_value_t = 50)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output dictionary directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainClfArgs {
    /// Training feature CSV.
    #[arg(long)]
    features: PathBuf,
    /// Regularization C: a number, or "auto" for a validated grid search.
    #[arg(long = "C", default_value = "auto")]
    c: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output model directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ClassifyArgs {
    /// Model directory (or model.json path).
    #[arg(long)]
    model: PathBuf,
    /// Dataset manifest (or its directory).
    #[arg(long = "in")]
    input: PathBuf,
    /// Dictionary directory (required for lp and lp+hoc models).
    #[arg(long)]
    dict: Option<PathBuf>,
    /// Output predictions CSV.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Feature CSV to cross-validate.
    #[arg(long)]
    features: PathBuf,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    /// Regularization C: a number, or "auto".
    #[arg(long = "C", default_value = "auto")]
    c: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Results directory.
    #[arg(long)]
    out: PathBuf,
    /// Cache directory for datasets/dictionaries/features
    /// (default: <out>/cache).
    #[arg(long)]
    cache: Option<PathBuf>,
    /// Instead of one run, sweep shingle length {2,3,5} x dictionary
    /// size {20,50,100} over the config's grid.
    #[arg(long, default_value_t = false)]
    sweep: bool,
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn manifest_path(input: &PathBuf) -> PathBuf {
    if input.is_dir() {
        input.join(MANIFEST_FILE)
    } else {
        input.clone()
    }
}

fn parse_c(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("auto") {
        return Ok(None);
    }
    let c: f64 = s.parse().map_err(|_| Error::ConfigError(format!("invalid C: {s}")))?;
    if c <= 0.0 {
        return Err(Error::ConfigError("C must be positive".into()));
    }
    Ok(Some(c))
}

fn extract_features(
    ds: &Dataset,
    family: FeatureTag,
    dict: Option<&PathBuf>,
) -> Result<Vec<FeatureRow>> {
    let dicts = match family {
        FeatureTag::Fv | FeatureTag::FvHoc => {
            let dir = dict.ok_or_else(|| {
                Error::ConfigError(format!("feature family {family} needs --dict"))
            })?;
            Some(load_dictionary_pair(dir)?)
        }
        _ => None,
    };
    ds.entries
        .iter()
        .map(|entry| {
            let inst = ds.load(entry)?;
            let values = match family {
                FeatureTag::Hoc => hoc_features(&inst)?.values.to_vec(),
                FeatureTag::Os => compute_order_stats(&to_polar(&inst), DEFAULT_QUANTILES)?.values,
                FeatureTag::Fv | FeatureTag::FvHoc => {
                    let (amp, phase) = dicts.as_ref().unwrap();
                    let mut v = encode_instance(amp, phase, &to_polar(&inst))?.values;
                    if family == FeatureTag::FvHoc {
                        v.extend_from_slice(&hoc_features(&inst)?.values);
                    }
                    v
                }
            };
            Ok(FeatureRow { id: entry.id, meta: entry.meta, values })
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(a) => {
            let modulations =
                if a.modulations.is_empty() { Modulation::ALL.to_vec() } else { a.modulations };
            let configs: Vec<(SimConfig, usize)> = modulations
                .iter()
                .enumerate()
                .map(|(i, &m)| {
                    let mut c = SimConfig::new(m, a.snr, a.len, a.seed.wrapping_add(i as u64));
                    c.overlap_pct = a.overlap;
                    c.missing_symbols = a.missing;
                    c.rotation_rad = a.rotation;
                    c.samples_per_symbol = a.sps;
                    (c, a.count)
                })
                .collect();
            for (c, _) in &configs {
                c.validate()?;
            }
            let ds = generate_dataset(&configs, &a.out)?;
            println!("wrote {} instances to {}", ds.entries.len(), a.out.display());
        }
        Command::Extract(a) => {
            let ds = Dataset::read(&manifest_path(&a.input))?;
            let rows = extract_features(&ds, a.features, a.dict.as_ref())?;
            write_feature_csv(&a.out, a.features, &rows)?;
            let dim = rows.first().map_or(0, |r| r.values.len());
            println!("wrote {} rows of {}-dim {} features to {}", rows.len(), dim, a.features, a.out.display());
        }
        Command::TrainDict(a) => {
            let ds = Dataset::read(&manifest_path(&a.input))?;
            let polars: Vec<_> = ds.load_all()?.iter().map(to_polar).collect();
            let description = format!("{} instances from {}", polars.len(), a.input.display());
            let (amp, phase) = train_dictionary_pair(&polars, a.l, a.k, a.seed, &description)?;
            save_dictionary_pair(&a.out, &amp, &phase)?;
            println!("trained l={} K={} dictionary pair at {}", a.l, a.k, a.out.display());
        }
        Command::TrainClf(a) => {
            let (tag, rows) = read_feature_csv(&a.features)?;
            let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
            let y: Vec<Modulation> = rows.iter().map(|r| r.meta.modulation).collect();
            let model = match parse_c(&a.c)? {
                Some(c) => train_svm(&x, &y, tag, c, a.seed)?,
                None => train_svm_auto(&x, &y, tag, a.seed)?,
            };
            std::fs::create_dir_all(&a.out)?;
            model.save(&a.out.join("model.json"))?;
            println!("trained {} classifier (C={}) at {}", tag, model.c, a.out.display());
        }
        Command::Classify(a) => {
            let model_path =
                if a.model.is_dir() { a.model.join("model.json") } else { a.model.clone() };
            let model = SvmModel::load(&model_path)?;
            let ds = Dataset::read(&manifest_path(&a.input))?;
            let rows = extract_features(&ds, model.feature_tag, a.dict.as_ref())?;
            let mut out = String::from("id,modulation,predicted");
            for class in &model.classes {
                out.push_str(&format!(",decision_{class}"));
            }
            out.push('\n');
            for row in &rows {
                let (pred, decisions) = predict(&model, &row.values)?;
                out.push_str(&format!("{},{},{pred}", row.id, row.meta.modulation));
                for d in &decisions {
                    out.push_str(&format!(",{d}"));
                }
                out.push('\n');
            }
            std::fs::write(&a.out, out)?;
            println!("wrote {} predictions to {}", rows.len(), a.out.display());
        }
        Command::Evaluate(a) => {
            let (tag, rows) = read_feature_csv(&a.features)?;
            let x: Vec<Vec<f64>> = rows.iter().map(|r| r.values.clone()).collect();
            let y: Vec<Modulation> = rows.iter().map(|r| r.meta.modulation).collect();
            let c = match parse_c(&a.c)? {
                Some(c) => c,
                // pick C once on the full table, then cross-validate with it
                None => train_svm_auto(&x, &y, tag, a.seed)?.c,
            };
            let report = kfold_evaluate(&x, &y, tag, a.folds, c, a.seed)?;
            println!("{}-fold accuracy ({}, C={c}): {:.4}", a.folds, tag, report.accuracy());
            for (class, acc) in report.classes.iter().zip(report.per_class_accuracy()) {
                println!("  {class}: {acc:.4}");
            }
            if let Some(path) = a.out {
                std::fs::write(
                    &path,
                    serde_json::to_string_pretty(&report)
                        .map_err(|e| Error::FormatError(e.to_string()))?,
                )?;
                println!("wrote report to {}", path.display());
            }
        }
        Command::Run(a) => {
            let config = ExperimentConfig::from_toml_file(&a.config)?;
            let cache = a.cache.unwrap_or_else(|| a.out.join("cache"));
            let table = if a.sweep {
                parameter_sweep(&config, &[2, 3, 5], &[20, 50, 100], &a.out, &cache)?
            } else {
                run_experiment(&config, &a.out, &cache)?
            };
            print!("{}", table.to_csv());
            println!("results written under {}", a.out.display());
        }
    }
    Ok(())
}
