use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use facesub::config::PipelineConfig;
use facesub::dataset::{Protocol, TemplateDef};
use facesub::io::{self, Manifest, ManifestOptions, RepresentationRecord};
use facesub::pipeline::{self, with_workers, worker_count};
use facesub::similarity::SimilarityConfig;
use facesub::synth::{gen_scenario, ScenarioConfig};
use facesub::{Error, Result};

#[derive(Parser)]
#[command(name = "facesub", version, about = "Set-based face matching for surveillance video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset and its manifest.
    Synth(SynthArgs),
    /// Track detections into single-shot probe templates.
    Track(StageArgs),
    /// Associate target faces from anchors into multi-shot probe templates.
    Associate(StageArgs),
    /// Write template representations as JSON lines.
    Aggregate(AggregateArgs),
    /// Score probe templates against every gallery split.
    Match(MatchArgs),
    /// Compute identification metrics from a score file.
    Eval(EvalArgs),
    /// Run tracking or association, matching and evaluation end to end.
    Pipeline(PipelineArgs),
}

#[derive(Args)]
struct SynthArgs {
    /// Scenario TOML; unspecified fields take defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    protocol: Option<Protocol>,
    /// Detection score floor written into the manifest.
    #[arg(long, default_value_t = 0.0)]
    score_floor: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Common {
    /// Pipeline TOML providing stage settings.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset manifest; overrides the one named in the config.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Args)]
struct StageArgs {
    #[command(flatten)]
    common: Common,
    /// Keep every tracklet regardless of length and score.
    #[arg(long)]
    no_filtering: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Variant {
    /// Similarity variant, e.g. `Cos` or `QCos+QSub-VPM`.
    #[arg(long)]
    variant: Option<String>,
    /// Fusion weight of the subspace term.
    #[arg(long)]
    lambda: Option<f64>,
}

#[derive(Args)]
struct AggregateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    variant: Variant,
    /// Templates to represent; defaults to the gallery.
    #[arg(long)]
    templates: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MatchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    variant: Variant,
    /// Probe templates written by `track` or `associate`.
    #[arg(long)]
    probes: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scores: PathBuf,
    /// Report CSV for the split average; per-split reports go next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    rank_ks: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    fpir: Option<Vec<f64>>,
}

#[derive(Args)]
struct PipelineArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    variant: Variant,
    #[arg(long)]
    no_filtering: bool,
    #[arg(long)]
    score_floor: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn load_config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = match (&common.config, &common.manifest) {
        (Some(path), _) => PipelineConfig::load(path)?,
        (None, Some(m)) => PipelineConfig::new(m),
        (None, None) => return Err(Error::Config("either --config or --manifest is required".into())),
    };
    if let Some(m) = &common.manifest {
        cfg.manifest = m.clone();
    }
    if common.workers.is_some() {
        cfg.workers = common.workers;
    }
    Ok(cfg)
}

fn apply_variant(cfg: &mut PipelineConfig, v: &Variant) -> Result<()> {
    let name = match &v.variant {
        Some(name) => name.clone(),
        None => cfg.similarity.name(),
    };
    let lambda = v.lambda.unwrap_or(cfg.similarity.lambda_fusion);
    cfg.similarity = SimilarityConfig::named(&name, lambda)?;
    Ok(())
}

fn load_dataset(cfg: &PipelineConfig) -> Result<(Manifest, facesub::dataset::Dataset)> {
    let mut m = Manifest::load(&cfg.manifest)?;
    if let Some(f) = cfg.score_floor {
        m.options.score_floor = f;
    }
    let ds = io::ingest(&m)?;
    Ok((m, ds))
}

fn read_templates(path: &Path) -> Result<Vec<TemplateDef>> {
    Ok(io::read_jsonl::<TemplateDef>(path)?.into_iter().map(|(_, t)| t).collect())
}

fn synth(args: SynthArgs) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            toml::from_str::<ScenarioConfig>(&text).map_err(|e| Error::parse(p, 1, e.message().to_string()))?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = args.protocol {
        cfg.protocol = p;
    }
    let scenario = gen_scenario(&cfg)?;
    let options = ManifestOptions {
        filtering: true,
        score_floor: args.score_floor,
    };
    let manifest = io::write_dataset(&scenario.dataset, &args.out, options)?;
    let echo = args.out.join("scenario.toml");
    let text = toml::to_string(&cfg).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(&echo, text).map_err(|e| Error::io(&echo, e))?;
    println!("{}", manifest.display());
    Ok(())
}

fn stage(args: StageArgs, multishot: bool) -> Result<()> {
    let cfg = load_config(&args.common)?;
    cfg.validate()?;
    let probes = with_workers(worker_count(&cfg)?, || -> Result<Vec<TemplateDef>> {
        let (m, ds) = load_dataset(&cfg)?;
        if multishot {
            pipeline::associate_probes(&ds, &cfg.tfa, cfg.eval.truth_iou)
        } else {
            let filtering = !args.no_filtering && cfg.filtering.unwrap_or(m.options.filtering);
            pipeline::track_probes(&ds, &cfg.sort, filtering, cfg.eval.truth_iou)
        }
    })??;
    io::write_jsonl(&args.out, &probes)?;
    println!("{} templates written to {}", probes.len(), args.out.display());
    Ok(())
}

fn aggregate(args: AggregateArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    apply_variant(&mut cfg, &args.variant)?;
    cfg.validate()?;
    let records = with_workers(worker_count(&cfg)?, || -> Result<Vec<RepresentationRecord>> {
        let (_, ds) = load_dataset(&cfg)?;
        let defs = match &args.templates {
            Some(p) => read_templates(p)?,
            None => ds.gallery.clone(),
        };
        let mut out = Vec::new();
        for n in 0..ds.embeddings.networks.len() {
            let tpls = pipeline::templates_for(&ds, &defs, n)?;
            let reps = pipeline::represent_all(&tpls, &cfg.similarity, &cfg.aggregate)?;
            out.extend(
                defs.iter()
                    .zip(&reps)
                    .map(|(d, r)| RepresentationRecord::new(&d.template_id, n, d.label, r)),
            );
        }
        Ok(out)
    })??;
    io::write_jsonl(&args.out, &records)?;
    println!("{} representations written to {}", records.len(), args.out.display());
    Ok(())
}

fn match_cmd(args: MatchArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    apply_variant(&mut cfg, &args.variant)?;
    cfg.validate()?;
    let probes = read_templates(&args.probes)?;
    let splits = with_workers(worker_count(&cfg)?, || {
        let (_, ds) = load_dataset(&cfg)?;
        pipeline::match_splits(&ds, &probes, &cfg.similarity, &cfg.aggregate)
    })??;
    io::write_scores_csv(&args.out, &splits)?;
    println!("{} probes scored against {} splits", probes.len(), splits.len());
    Ok(())
}

fn eval_cmd(args: EvalArgs) -> Result<()> {
    let mut ev = match &args.config {
        Some(p) => PipelineConfig::load(p)?.eval,
        None => Default::default(),
    };
    if let Some(k) = args.rank_ks {
        ev.rank_ks = k;
    }
    if let Some(f) = args.fpir {
        ev.fpir_targets = f;
    }
    ev.validate()?;
    let splits = io::read_scores_csv(&args.scores)?;
    let (reports, average) = pipeline::evaluate_splits(&splits, &ev)?;
    for (split, report) in &reports {
        println!("[{split}]\n{report}");
        if let Some(out) = &args.out {
            let dir = out.parent().unwrap_or(Path::new(""));
            io::write_report_csv(&dir.join(format!("report_{split}.csv")), report)?;
        }
    }
    println!("[average]\n{average}");
    if let Some(out) = &args.out {
        io::write_report_csv(out, &average)?;
    }
    Ok(())
}

fn pipeline_cmd(args: PipelineArgs) -> Result<()> {
    let mut cfg = load_config(&args.common)?;
    apply_variant(&mut cfg, &args.variant)?;
    if args.no_filtering {
        cfg.filtering = Some(false);
    }
    if args.score_floor.is_some() {
        cfg.score_floor = args.score_floor;
    }
    if let Some(d) = args.out_dir {
        cfg.out_dir = d;
    }
    let out = pipeline::run_pipeline(&cfg)?;
    println!(
        "{} {}: {} probes, {} splits",
        out.config.similarity,
        Manifest::load(&cfg.manifest).map(|m| m.protocol.to_string()).unwrap_or_default(),
        out.probes.len(),
        out.splits.len()
    );
    for (split, report) in &out.reports {
        println!("[{split}]\n{report}");
    }
    println!("[average]\n{}", out.average);
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Track(a) => stage(a, false),
        Command::Associate(a) => stage(a, true),
        Command::Aggregate(a) => aggregate(a),
        Command::Match(a) => match_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Pipeline(a) => pipeline_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
