use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use protoloc::eval::{Preset, Report};
use protoloc::io::{dump_pseudo_labels, dump_results, load_corpus, load_results, write_corpus, write_json_file};
use protoloc::model::Checkpoint;
use protoloc::synth::{generate, SynthSpec};
use protoloc::train::{
    ablate, ablation_report, evaluate_detections, infer_corpus, log_csv, snapshot, train,
    AblationRun, TrainConfig,
};
use protoloc::types::Corpus;
use protoloc::{Error, Result};

#[derive(Parser)]
#[command(name = "protoloc", version, about = "Point-supervised temporal action localization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus.
    Synth {
        /// Generator spec (JSON); the built-in reference spec when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the spec seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 250)]
        videos: usize,
        #[arg(long, default_value_t = 2)]
        instances: usize,
        /// Hold out this many videos into <out>/test, the rest go to <out>/train.
        #[arg(long, default_value_t = 0)]
        test: usize,
    },
    /// Train a model and write checkpoint.json, train_log.csv, config.json,
    /// pseudo_labels.json and bank.json into --out.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        /// Corpus with ground truth for periodic evaluation.
        #[arg(long)]
        eval_corpus: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        preset: Option<Preset>,
    },
    /// Localize actions with a trained checkpoint.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Training config whose inference settings to use.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a results file against corpus ground truth.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value_t = Preset::Thumos)]
        preset: Preset,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Train several variants over several seeds and compare them.
    Ablate {
        #[arg(long, value_enum, default_value_t = Table::Components)]
        table: Table,
        /// Base config; the short reference schedule when absent.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Training corpus; the reference corpus when absent.
        #[arg(long, requires = "test_corpus")]
        train_corpus: Option<PathBuf>,
        #[arg(long, requires = "train_corpus")]
        test_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Highest N_max of the sweep table.
        #[arg(long, default_value_t = 6)]
        n_max: usize,
        #[arg(long, value_enum, default_value_t = Preset::Thumos)]
        preset: Preset,
        /// Write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Table {
    /// Each component switched on in turn.
    Components,
    /// Proposal-only labels vs fixed vs adaptive prototype counts.
    Criteria,
    /// N_max from 1 upward.
    NMax,
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Validation(format!("{}: {e}", path.display())))
}

fn synth(
    spec: Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
    videos: usize,
    instances: usize,
    test: usize,
) -> Result<()> {
    let mut spec = match spec {
        Some(p) => SynthSpec::load(p)?,
        None => SynthSpec::reference(seed.unwrap_or(42)),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let corpus = generate(&spec, videos, instances)?;
    create_dir(out)?;
    spec.save(out.join("spec.json"))?;
    if test > 0 {
        let (tr, te) = corpus.split_tail(test)?;
        write_corpus(&tr, out.join("train"))?;
        write_corpus(&te, out.join("test"))?;
        println!("wrote {} training and {} test videos to {}", tr.len(), te.len(), out.display());
    } else {
        write_corpus(&corpus, out)?;
        println!("wrote {} videos to {}", corpus.len(), out.display());
    }
    Ok(())
}

fn load_config(path: Option<PathBuf>, fallback: TrainConfig) -> Result<TrainConfig> {
    path.map_or(Ok(fallback), TrainConfig::load)
}

fn run_train(
    config: Option<PathBuf>,
    corpus: &Path,
    eval_corpus: Option<PathBuf>,
    out: &Path,
    seed: Option<u64>,
    preset: Option<Preset>,
) -> Result<()> {
    let mut cfg = load_config(config, TrainConfig::default())?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(p) = preset {
        cfg.eval_thresholds = p.thresholds();
    }
    let corpus = load_corpus(corpus)?;
    let eval = eval_corpus.map(load_corpus).transpose()?;
    if cfg.eval_every > 0 && eval.is_none() {
        log::warn!("eval_every is set but no --eval-corpus was given; skipping evaluation");
    }
    let state = train(&corpus, eval.as_ref(), &cfg)?;

    create_dir(out)?;
    cfg.save(out.join("config.json"))?;
    Checkpoint::new(state.params.clone()).save(out.join("checkpoint.json"))?;
    write_text(&out.join("train_log.csv"), &log_csv(&state.log))?;
    if cfg.variant.needs_snapshot() {
        let snap = snapshot(&state.params, &corpus, &cfg)?;
        let labels: BTreeMap<_, _> = corpus
            .videos()
            .iter()
            .zip(snap.plans)
            .filter_map(|(v, p)| p.labels.map(|l| (v.id().to_owned(), l)))
            .collect();
        if !labels.is_empty() {
            dump_pseudo_labels(&labels, out.join("pseudo_labels.json"))?;
        }
        if let Some(bank) = &snap.bank {
            write_json_file(bank, &out.join("bank.json"))?;
        }
    }
    if let Some(last) = state.log.last() {
        println!("epoch {}: total loss {:.4}", last.epoch, last.total);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn infer(checkpoint: &Path, corpus: &Path, out: &Path, config: Option<PathBuf>) -> Result<()> {
    let cfg = load_config(config, TrainConfig::default())?;
    let ckpt = Checkpoint::load(checkpoint)?;
    let corpus = load_corpus(corpus)?;
    let dets = infer_corpus(&ckpt.params, &corpus, &cfg.infer)?;
    let report = dump_results(dets, out)?;
    let n: usize = report.videos.iter().map(|v| v.proposals.len()).sum();
    println!("{n} detections over {} videos written to {}", report.videos.len(), out.display());
    Ok(())
}

fn num_categories(corpus: &Corpus, dets: &BTreeMap<String, Vec<protoloc::types::Segment>>) -> usize {
    let from_dets = dets.values().flatten().map(|s| s.category + 1).max().unwrap_or(0);
    corpus.num_categories().max(from_dets)
}

fn eval(results: &Path, corpus: &Path, preset: Preset, csv: Option<PathBuf>) -> Result<()> {
    let report = load_results(results)?;
    let corpus = load_corpus(corpus)?;
    let dets: BTreeMap<String, Vec<_>> = report
        .videos
        .into_iter()
        .map(|v| (v.video_id, v.proposals))
        .collect();
    for id in dets.keys() {
        if !corpus.videos().iter().any(|v| v.id() == id) {
            return Err(Error::Validation(format!("results mention unknown video {id}")));
        }
    }
    let c = num_categories(&corpus, &dets);
    let table = evaluate_detections(&dets, &corpus, &preset.thresholds(), c)?;
    let report = Report::single("mAP", table);
    print!("{}", report.to_text());
    if let Some(path) = csv {
        write_text(&path, &report.to_csv())?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_ablate(
    table: Table,
    config: Option<PathBuf>,
    train_corpus: Option<PathBuf>,
    test_corpus: Option<PathBuf>,
    seeds: u64,
    n_max: usize,
    preset: Preset,
    out: Option<PathBuf>,
) -> Result<()> {
    let mut cfg = load_config(config, TrainConfig::reference())?;
    cfg.eval_thresholds = preset.thresholds();
    let (tr, te) = match (train_corpus, test_corpus) {
        (Some(a), Some(b)) => (load_corpus(a)?, load_corpus(b)?),
        _ => protoloc::synth::reference_corpus(42)?,
    };
    let runs = match table {
        Table::Components => AblationRun::components(&cfg.spc),
        Table::Criteria => AblationRun::criteria(&cfg.spc),
        Table::NMax => AblationRun::n_max_sweep(&cfg.spc, n_max),
    };
    let seeds: Vec<u64> = (0..seeds).collect();
    let results = ablate(&tr, &te, &cfg, &runs, &seeds)?;
    let report = ablation_report(&results);
    print!("{}", report.to_text());
    if let Some(path) = out {
        write_text(&path, &report.to_csv())?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth {
            spec,
            out,
            seed,
            videos,
            instances,
            test,
        } => synth(spec, &out, seed, videos, instances, test),
        Command::Train {
            config,
            corpus,
            eval_corpus,
            out,
            seed,
            preset,
        } => run_train(config, &corpus, eval_corpus, &out, seed, preset),
        Command::Infer {
            checkpoint,
            corpus,
            out,
            config,
        } => infer(&checkpoint, &corpus, &out, config),
        Command::Eval {
            results,
            corpus,
            preset,
            csv,
        } => eval(&results, &corpus, preset, csv),
        Command::Ablate {
            table,
            config,
            train_corpus,
            test_corpus,
            seeds,
            n_max,
            preset,
            out,
        } => run_ablate(table, config, train_corpus, test_corpus, seeds, n_max, preset, out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
