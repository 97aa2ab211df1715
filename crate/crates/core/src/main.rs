use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use bandformer::attention::AttentionMode;
use bandformer::bench::{bench_attention, BenchConfig};
use bandformer::generation::{sample, SamplerConfig, Strategy};
use bandformer::midi::{decode_events, encode_events, parse_midi_with_warnings, write_midi, write_token_file, EventVocab};
use bandformer::training::{
    evaluate_nll, load_checkpoint, load_dataset, read_tokens, train, DataConfig, TrainConfig, TrainError,
    TrainOptions, THREADS_ENV,
};
use bandformer::verify::run_verify;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_VERIFY: u8 = 3;

/// Music language models with sliding-window and relative attention.
#[derive(Parser)]
#[command(name = "bandformer", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert a directory of MIDI files into token files.
    Preprocess(PreprocessArgs),
    /// Train a model from a TOML config.
    Train(TrainArgs),
    /// Mean per-token NLL of a checkpoint on token files.
    Eval(EvalArgs),
    /// Sample a sequence and write it as MIDI and tokens.
    Generate(GenerateArgs),
    /// Time the attention kernels over a grid of lengths.
    Bench(BenchArgs),
    /// Run the built-in correctness checks.
    Verify,
}

#[derive(Args)]
struct PreprocessArgs {
    /// Directory of .mid / .midi files.
    #[arg(long)]
    input: PathBuf,
    /// Destination directory for .bbtk files.
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint and log directory; defaults to runs/<variant label>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// A .bbtk file or a directory of them.
    #[arg(long)]
    tokens: PathBuf,
    /// Window length; defaults to the model's max_len + 1 (1025 for the LSTM).
    #[arg(long)]
    window_len: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output .mid path; the tokens go next to it as .bbtk.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    length: usize,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    greedy: bool,
    /// Token file whose contents start the sequence.
    #[arg(long)]
    primer: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [256, 512, 1024, 2048, 4096])]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    window: usize,
    #[arg(long, default_value_t = 1)]
    heads: usize,
    #[arg(long, default_value_t = 64)]
    head_dim: usize,
    /// Any of dense, sliding, relative.
    #[arg(long, value_delimiter = ',', default_values_t = ["dense".to_string(), "sliding".to_string()])]
    modes: Vec<String>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Skip the forward + backward timings.
    #[arg(long)]
    forward_only: bool,
    /// Write JSON lines here instead of stdout.
    #[arg(long)]
    json: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(String),
    Verify(String),
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Config(m) => Failure::Usage(m),
            other => Failure::Data(other.to_string()),
        }
    }
}

type CliResult = Result<(), Failure>;

fn require_exists(path: &Path) -> CliResult {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::Usage(format!("{} does not exist", path.display())))
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::Data(format!("{}: {e}", path.display()))
}

fn preprocess(args: PreprocessArgs) -> CliResult {
    require_exists(&args.input)?;
    let mut inputs: Vec<PathBuf> = std::fs::read_dir(&args.input)
        .map_err(io_err(&args.input))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|x| x.to_str())
                .is_some_and(|x| x.eq_ignore_ascii_case("mid") || x.eq_ignore_ascii_case("midi"))
        })
        .collect();
    inputs.sort();
    if inputs.is_empty() {
        return Err(Failure::Data(format!("no MIDI files in {}", args.input.display())));
    }
    std::fs::create_dir_all(&args.output).map_err(io_err(&args.output))?;
    let results: Vec<Result<(usize, Vec<String>), String>> = inputs
        .par_iter()
        .map(|path| {
            let name = path.display();
            let bytes = std::fs::read(path).map_err(|e| format!("{name}: {e}"))?;
            let (seq, warnings) = parse_midi_with_warnings(&bytes).map_err(|e| format!("{name}: {e}"))?;
            let tokens = encode_events(&seq, &EventVocab).map_err(|e| format!("{name}: {e}"))?;
            let out = args.output.join(path.with_extension("bbtk").file_name().expect("file has a name"));
            let bytes = write_token_file(&tokens, &EventVocab).map_err(|e| format!("{name}: {e}"))?;
            std::fs::write(&out, bytes).map_err(|e| format!("{}: {e}", out.display()))?;
            Ok((tokens.len(), warnings.into_iter().map(|w| format!("{name}: {w}")).collect()))
        })
        .collect();
    let mut failed = Vec::new();
    let mut total = 0;
    for (path, r) in inputs.iter().zip(results) {
        match r {
            Ok((n, warnings)) => {
                warnings.iter().for_each(|w| log::warn!("{w}"));
                println!("{} -> {n} tokens", path.display());
                total += n;
            }
            Err(e) => failed.push(e),
        }
    }
    println!("{} files, {total} tokens", inputs.len() - failed.len());
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Data(failed.join("\n")))
    }
}

fn run_train(args: TrainArgs) -> CliResult {
    require_exists(&args.config)?;
    let mut cfg = TrainConfig::load(&args.config)?;
    cfg.apply_env()?;
    let data_cfg = cfg
        .data
        .clone()
        .ok_or_else(|| Failure::Usage("config has no [data] section".into()))?;
    require_exists(&data_cfg.tokens)?;
    let data = load_dataset(&data_cfg)?;
    let out = args.out.unwrap_or_else(|| PathBuf::from("runs").join(cfg.variant_label()));
    std::fs::create_dir_all(&out).map_err(io_err(&out))?;
    let log_path = out.join("log.jsonl");
    let mut log = BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?);
    println!(
        "{}: {} train / {} val windows of {} tokens",
        cfg.variant_label(),
        data.train.len(),
        data.val.len(),
        data_cfg.window_len
    );
    let outcome = train(
        &cfg,
        &data,
        TrainOptions {
            out_dir: Some(&out),
            log: Some(&mut log),
        },
    )?;
    log.flush().map_err(io_err(&log_path))?;
    let r = &outcome.report;
    println!(
        "stopped after {} steps ({:?}); best val NLL {}; {:.1} ms/step",
        r.steps_run,
        r.stop_reason,
        r.best_val.map_or("-".into(), |v| format!("{v:.4}")),
        r.mean_ms_per_step
    );
    if let Some(p) = &r.checkpoint_path {
        println!("checkpoint {}", p.display());
    }
    println!("log {}", log_path.display());
    Ok(())
}

fn eval(args: EvalArgs) -> CliResult {
    require_exists(&args.checkpoint)?;
    require_exists(&args.tokens)?;
    let (model, manifest) = load_checkpoint(&args.checkpoint)?;
    let window_len = args.window_len.unwrap_or(manifest.model.max_len().unwrap_or(1024) + 1);
    let windows = if args.tokens.is_dir() {
        let cfg = DataConfig {
            tokens: args.tokens.clone(),
            val_fraction: 0.0,
            window_len,
            stride: None,
        };
        load_dataset(&cfg)?.train
    } else {
        let tokens = read_tokens(&args.tokens)?;
        bandformer::midi::window_dataset(&[tokens], window_len, window_len, &EventVocab)
    };
    let report = evaluate_nll(&model, &windows)?;
    println!(
        "{}",
        serde_json::json!({
            "checkpoint": args.checkpoint,
            "model": manifest.model.label(),
            "windows": windows.len(),
            "nll": report.nll,
            "tokens": report.tokens,
            "skipped_windows": report.skipped,
        })
    );
    Ok(())
}

fn generate(args: GenerateArgs) -> CliResult {
    require_exists(&args.checkpoint)?;
    let (model, _) = load_checkpoint(&args.checkpoint)?;
    let primer = match &args.primer {
        Some(p) => {
            require_exists(p)?;
            read_tokens(p)?
        }
        None => Vec::new(),
    };
    let cfg = SamplerConfig {
        temperature: args.temperature,
        primer,
        target_length: args.length,
        seed: args.seed,
        strategy: if args.greedy { Strategy::Greedy } else { Strategy::Categorical },
    };
    let tokens = sample(&model, &cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    let (notes, report) = decode_events(&tokens, &EventVocab).map_err(|e| Failure::Data(e.to_string()))?;
    let midi = write_midi(&notes).map_err(|e| Failure::Data(e.to_string()))?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(&args.out, midi).map_err(io_err(&args.out))?;
    let token_path = args.out.with_extension("bbtk");
    let bytes = write_token_file(&tokens, &EventVocab).map_err(|e| Failure::Data(e.to_string()))?;
    std::fs::write(&token_path, bytes).map_err(io_err(&token_path))?;
    println!(
        "{} tokens, {} notes, {:.1} s -> {} ({} stray note-offs, {} notes closed at the end)",
        tokens.len(),
        notes.notes.len(),
        notes.duration_seconds(),
        args.out.display(),
        report.stray_note_offs,
        report.dangling_note_ons
    );
    Ok(())
}

fn bench(args: BenchArgs) -> CliResult {
    let modes = args
        .modes
        .iter()
        .map(|m| m.parse::<AttentionMode>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let cfg = BenchConfig {
        lengths: args.lengths,
        window: args.window,
        heads: args.heads,
        head_dim: args.head_dim,
        modes,
        trials: args.trials,
        seed: args.seed,
        backward: !args.forward_only,
    };
    let report = bench_attention(&cfg).map_err(|e| Failure::Usage(e.to_string()))?;
    match &args.json {
        Some(path) => std::fs::write(path, report.to_json_lines()).map_err(io_err(path))?,
        None => print!("{}", report.to_json_lines()),
    }
    eprint!("{}", report.to_table());
    Ok(())
}

fn verify() -> CliResult {
    let results = run_verify();
    for r in &results {
        println!("{}", r.line());
    }
    let failed: Vec<String> = results.iter().filter(|r| !r.passed).map(|r| r.id.to_string()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verify(format!("failed criteria: {}", failed.join(", "))))
    }
}

fn init_threads() -> CliResult {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Failure::Usage(format!("{THREADS_ENV}={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = init_threads().and_then(|()| match cli.command {
        Command::Preprocess(a) => preprocess(a),
        Command::Train(a) => run_train(a),
        Command::Eval(a) => eval(a),
        Command::Generate(a) => generate(a),
        Command::Bench(a) => bench(a),
        Command::Verify => verify(),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Verify(m)) => {
            eprintln!("{m}");
            ExitCode::from(EXIT_VERIFY)
        }
    }
}
