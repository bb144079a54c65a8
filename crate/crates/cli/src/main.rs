mod settings;

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use mvground_core::backend::Screenshot;
use mvground_core::harness::report::{emit_pass_at_n, emit_perturbation, to_json};
use mvground_core::harness::{
    emit_report, evaluate, load_dataset, load_screenspot_pro, pass_at_n, perturbation_study, synthesize,
    write_dataset, Dataset, EvalMode, EvalReport, EvalSettings, PerturbationSettings, ReportFormat, SynthSpec,
};
use mvground_core::{run_mvp, MvpInput, Rect, RunOptions};

use settings::{BackendChoice, Settings};

/// Multi-view GUI grounding: query a model on the screenshot and on
/// attention-selected zoomed crops, then take the largest consistent
/// cluster of answers.
#[derive(Parser, Debug)]
#[command(name = "mvground", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct DatasetArgs {
    /// JSONL dataset, or a ScreenSpot-Pro style `.json` annotation array.
    #[arg(long)]
    dataset: PathBuf,
    /// Image directory for `.json` annotations (defaults to the file's directory).
    #[arg(long)]
    image_root: Option<PathBuf>,
    /// `mock` or the base URL of a grounding server.
    #[arg(long)]
    backend: String,
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report path; `.csv` writes aggregates, anything else full JSON.
    #[arg(long)]
    out: PathBuf,
    /// Only evaluate the first N samples.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground one instruction on one screenshot.
    Ground {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        instruction: String,
        #[arg(long)]
        backend: String,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the full result (views, predictions, clusters) as JSON.
        #[arg(long)]
        emit_json: Option<PathBuf>,
        /// Target box `x,y,w,h`; only the mock backend uses it.
        #[arg(long, value_parser = parse_rect)]
        gt: Option<Rect>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Accuracy of the full pipeline over a dataset.
    Eval(DatasetArgs),
    /// Accuracy of one pipeline variant.
    Ablate {
        #[command(flatten)]
        data: DatasetArgs,
        /// mvp, single, avg, random, no_resize or border_pad.
        #[arg(long, value_parser = parse_mode)]
        mode: EvalMode,
    },
    /// Fraction of samples where one of the first N predictions hits.
    Passn {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,10")]
        n: Vec<usize>,
    },
    /// Prediction shift when the screenshot gets a thin black border.
    Perturb(DatasetArgs),
    /// Write a seeded synthetic dataset for mock runs.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Minimum distance of targets from the border, px.
        #[arg(long, default_value_t = 0)]
        margin: u32,
    },
}

fn parse_rect(s: &str) -> Result<Rect, String> {
    let v: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [x, y, w, h] if w > 0 && h > 0 => Ok(Rect::new(x, y, w, h)),
        _ => Err("expected x,y,w,h with positive w and h".into()),
    }
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    EvalMode::parse(s).ok_or_else(|| {
        let names: Vec<_> = EvalMode::ALL.iter().map(|m| m.as_str()).collect();
        format!("unknown mode {s:?}; expected one of {}", names.join(", "))
    })
}

fn load_samples(args: &DatasetArgs) -> Result<Dataset> {
    let path = &args.dataset;
    let is_json_array = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let mut ds = if is_json_array {
        let root = args
            .image_root
            .clone()
            .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
        load_screenspot_pro(path, root)?
    } else {
        load_dataset(path)?
    };
    if !ds.rejects.is_empty() {
        log::warn!("{} annotation(s) rejected", ds.rejects.len());
    }
    if let Some(n) = args.limit {
        ds.samples.truncate(n);
    }
    info!("{} samples from {}", ds.samples.len(), path.display());
    Ok(ds)
}

struct Prepared {
    settings: Settings,
    backend: BackendChoice,
    dataset: Dataset,
}

fn prepare(args: &DatasetArgs) -> Result<Prepared> {
    let settings = Settings::load(args.config.as_deref())?;
    let backend = BackendChoice::build(&args.backend, &settings, Some(args.seed))?;
    let dataset = load_samples(args)?;
    Ok(Prepared { settings, backend, dataset })
}

fn eval_settings(p: &Prepared, seed: u64) -> EvalSettings {
    EvalSettings {
        cfg: p.settings.mvp.clone(),
        seed,
        workers: p.settings.run.workers,
        params: p.settings.decode.clone(),
        backend: p.backend.describe(),
    }
}

fn summarize(r: &EvalReport) {
    let a = &r.aggregates;
    println!("{}: accuracy {:.4} ({}/{})", r.mode.as_str(), a.accuracy, a.hits, a.n);
    if let Some(c) = a.containing_ratio {
        println!("containing ratio {c:.4}");
    }
    for (tag, t) in &a.per_tag {
        println!("  {tag}: {:.4} ({}/{})", t.accuracy, t.hits, t.n);
    }
}

fn run_mode(args: &DatasetArgs, mode: EvalMode) -> Result<()> {
    let p = prepare(args)?;
    let report = evaluate(&p.dataset.samples, p.backend.as_dyn(), &eval_settings(&p, args.seed), mode)?;
    emit_report(&report, ReportFormat::from_path(&args.out), &args.out)?;
    summarize(&report);
    Ok(())
}

fn ground(
    image: &Path,
    instruction: &str,
    backend: &str,
    config: Option<&Path>,
    emit_json: Option<&Path>,
    gt: Option<Rect>,
    seed: Option<u64>,
) -> Result<()> {
    let settings = Settings::load(config)?;
    let backend = BackendChoice::build(backend, &settings, seed)?;
    let shot = Screenshot::open(image).with_context(|| format!("loading {}", image.display()))?;
    if let Some(g) = gt {
        if !g.fits_in(shot.dims()) {
            bail!("--gt {g:?} lies outside the {}x{} image", shot.dims().width, shot.dims().height);
        }
    }
    let input = MvpInput { screenshot: &shot, instruction, target: gt, params: &settings.decode };
    let result = run_mvp(backend.as_dyn(), &input, &settings.mvp, RunOptions::default())?;
    if let Some(path) = emit_json {
        std::fs::write(path, to_json(&result)?).with_context(|| format!("writing {}", path.display()))?;
    }
    for f in &result.failures {
        log::warn!("view {} failed: {}", f.view_id, f.error);
    }
    println!("{} {}", result.final_point.x, result.final_point.y);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Ground { image, instruction, backend, config, emit_json, gt, seed } => {
            ground(image, instruction, backend, config.as_deref(), emit_json.as_deref(), *gt, *seed)
        }
        Command::Eval(args) => run_mode(args, EvalMode::Mvp),
        Command::Ablate { data, mode } => run_mode(data, *mode),
        Command::Passn { data, n } => {
            let p = prepare(data)?;
            let report = pass_at_n(&p.dataset.samples, p.backend.as_dyn(), &eval_settings(&p, data.seed), n)?;
            emit_pass_at_n(&report, ReportFormat::from_path(&data.out), &data.out)?;
            for row in &report.table {
                println!("pass@{}: {:.4} ({}/{})", row.n, row.rate, row.passed, report.run.records.len());
            }
            Ok(())
        }
        Command::Perturb(args) => {
            let p = prepare(args)?;
            let ps = PerturbationSettings {
                border_px: p.settings.perturb.border_px,
                height_edges: p.settings.perturb.height_edges.clone(),
                area_edges: p.settings.perturb.area_edges.clone(),
                workers: p.settings.run.workers,
                seed: args.seed,
                params: p.settings.decode.clone(),
            };
            let report = perturbation_study(&p.dataset.samples, p.backend.as_dyn(), &ps, p.backend.describe())?;
            emit_perturbation(&report, ReportFormat::from_path(&args.out), &args.out)?;
            match report.mean_shift {
                Some(s) => println!("paired {}: mean shift {s:.2}px", report.n_paired),
                None => println!("paired 0: no usable samples"),
            }
            let f = &report.flips;
            println!(
                "correct->wrong {} ({:.4}), wrong->correct {} ({:.4})",
                f.correct_to_wrong, f.correct_to_wrong_rate, f.wrong_to_correct, f.wrong_to_correct_rate
            );
            Ok(())
        }
        Command::Synth { out, n, seed, margin } => {
            let samples = synthesize(&SynthSpec { n: *n, seed: *seed, margin: *margin, ..Default::default() })?;
            write_dataset(out, &samples)?;
            println!("wrote {} samples to {}", samples.len(), out.display());
            Ok(())
        }
    }
}
