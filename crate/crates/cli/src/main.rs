use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use ftg_core::diffusion::{train, ScheduleConfig, ToyConfig, TrainConfig};
use ftg_core::midi::CorpusSpec;
use ftg_core::{CheckpointF64, ToyDenoiserF64};
use ftg_service::workflows::{
    evaluate_dirs, inspect_midi, json_to_midi, midi_to_json, read_config, training_examples, write_corpus, PieceJson,
};
use ftg_service::{
    generate, ChordUnit, CheckpointStore, GenerationRequest, RhythmInput, SamplerMode, ServiceError, StepsInput,
    CHECKPOINT_DIR_ENV, CHECKPOINT_EXTENSION,
};
use serde::{Deserialize, Serialize};
use serde_json::json;

#[derive(Parser)]
#[command(name = "ftg", version, about = "Constrained diffusion accompaniment generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a denoiser on a directory of MIDI files.
    Train(TrainArgs),
    /// Generate an accompaniment for a chord progression.
    Generate(GenerateArgs),
    /// Compare generated accompaniments against ground truth.
    Evaluate(EvaluateArgs),
    /// Write a synthetic MIDI corpus.
    Corpus(CorpusArgs),
    /// Inspect or convert MIDI files.
    #[command(subcommand)]
    Midi(MidiCommand),
    /// Run the HTTP generation service.
    Serve(ServeArgs),
}

/// Everything `train` reads from `--config`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct TrainSettings {
    train: TrainConfig,
    model: ToyConfig,
    schedule: ScheduleConfig,
}

#[derive(Args)]
struct TrainArgs {
    /// Directory of MIDI files.
    #[arg(long)]
    data: PathBuf,
    /// Output directory for the checkpoint and loss curve.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "model")]
    name: String,
    /// TOML or JSON with `train`, `model` and `schedule` tables.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    p_drop: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    embed_dim: Option<usize>,
}

#[derive(Args)]
struct GenerateArgs {
    /// Request file (TOML or JSON); flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Space-separated chord symbols, one per step, beat or bar.
    #[arg(long)]
    chords: Option<String>,
    #[arg(long, value_enum)]
    chord_unit: Option<UnitArg>,
    #[arg(long)]
    length: Option<usize>,
    /// One key for the whole piece.
    #[arg(long)]
    key: Option<String>,
    /// Space-separated keys in the chord unit.
    #[arg(long)]
    keys: Option<String>,
    /// Pattern, one character per 16th: x onset, o silent, . free, 1-9 exact count.
    #[arg(long)]
    rhythm: Option<String>,
    /// MIDI file whose melody track conditions the model.
    #[arg(long)]
    melody: Option<PathBuf>,
    /// Checkpoint file, or an id under $FTG_CHECKPOINT_DIR.
    #[arg(long)]
    checkpoint: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// DDIM subsequence length.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    eta: Option<f64>,
    /// Visit every timestep instead of a DDIM subsequence.
    #[arg(long)]
    ddpm: bool,
    #[arg(long)]
    w: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    no_harmonic: bool,
    /// Keep the rhythm condition but skip the rhythm correction.
    #[arg(long)]
    no_rhythm_guidance: bool,
    #[arg(long)]
    tempo: Option<f64>,
    #[arg(long, default_value = "generated.mid")]
    out: PathBuf,
    /// Audit JSON path; printed to stdout when absent.
    #[arg(long)]
    audit: Option<PathBuf>,
    /// Also write the accompaniment roll as JSON.
    #[arg(long)]
    roll_json: Option<PathBuf>,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum UnitArg {
    Step,
    Beat,
    Bar,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    gen: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    /// Report JSON path; printed to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct CorpusArgs {
    #[arg(long)]
    out: PathBuf,
    /// TOML or JSON corpus description; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    pieces: Option<usize>,
    #[arg(long)]
    measures: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum MidiCommand {
    /// Print track and grid information as JSON.
    Inspect { file: PathBuf },
    /// Convert MIDI to roll JSON or roll JSON to MIDI, by the output extension.
    Convert {
        input: PathBuf,
        output: PathBuf,
        #[arg(long, default_value_t = 120.0)]
        tempo: f64,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    #[arg(long, env = CHECKPOINT_DIR_ENV)]
    checkpoint_dir: Option<PathBuf>,
    /// Checkpoint id to load at startup.
    #[arg(long)]
    load: Option<String>,
}

fn print_json(value: &impl Serialize) -> Result<(), ServiceError> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), ServiceError> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").map_err(|e| ServiceError::from(e).with_context(path))
}

fn run_train(args: TrainArgs) -> Result<(), ServiceError> {
    let mut s: TrainSettings = match &args.config {
        Some(p) => read_config(p)?,
        None => TrainSettings::default(),
    };
    if let Some(v) = args.epochs {
        s.train.epochs = v;
    }
    if let Some(v) = args.batch_size {
        s.train.batch_size = v;
    }
    if let Some(v) = args.lr {
        s.train.optimizer.learning_rate = v;
    }
    if let Some(v) = args.p_drop {
        s.train.p_drop = v;
    }
    if let Some(v) = args.seed {
        s.train.seed = v;
    }
    if let Some(v) = args.width {
        s.model.width = v;
    }
    if let Some(v) = args.embed_dim {
        s.model.embed_dim = v;
    }
    let data = training_examples(&args.data)?;
    let sched = s.schedule.build::<f64>()?;
    let mut model = ToyDenoiserF64::new(s.model.clone())?;
    let report = train(&mut model, &data, &s.train, &sched, |e| {
        eprintln!("epoch {} loss {:.6}", e.epoch, e.mean_loss);
    })?;
    std::fs::create_dir_all(&args.out)?;
    let ck_path = args.out.join(format!("{}.{CHECKPOINT_EXTENSION}", args.name));
    CheckpointF64 { schedule: s.schedule.clone(), model }.save(&ck_path)?;
    let mut csv = String::from("epoch,mean_loss,steps\n");
    for e in &report.epochs {
        csv.push_str(&format!("{},{},{}\n", e.epoch, e.mean_loss, e.steps));
    }
    let loss_path = args.out.join(format!("{}_loss.csv", args.name));
    std::fs::write(&loss_path, csv)?;
    print_json(&json!({
        "checkpoint": ck_path,
        "loss_csv": loss_path,
        "examples": data.len(),
        "epochs": report.epochs.len(),
        "final_loss": report.epochs.last().map(|e| e.mean_loss),
        "n_chord_only": report.n_chord_only,
        "n_chord_rhythm": report.n_chord_rhythm,
    }))
}

fn split_symbols(text: &str) -> Vec<String> {
    text.split(|c: char| c.is_whitespace() || c == ',' || c == '|').filter(|s| !s.is_empty()).map(String::from).collect()
}

fn resolve_checkpoint(arg: Option<&str>) -> Result<(Option<String>, CheckpointF64, Vec<String>), ServiceError> {
    let Some(arg) = arg else {
        let ck = CheckpointF64 { schedule: ScheduleConfig::default(), model: ToyDenoiserF64::new(ToyConfig::default())? };
        return Ok((None, ck, vec!["no checkpoint given; sampling with an untrained model".into()]));
    };
    let path = Path::new(arg);
    if path.is_file() {
        let ck = CheckpointF64::load(path).map_err(|e| ServiceError::from(e).with_context(path))?;
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        return Ok((id, ck, Vec::new()));
    }
    let store = CheckpointStore::from_env();
    let ck = store.load(arg)?;
    Ok((Some(arg.to_string()), (*ck).clone(), Vec::new()))
}

fn run_generate(args: GenerateArgs) -> Result<(), ServiceError> {
    let mut req: GenerationRequest = match &args.config {
        Some(p) => read_config(p)?,
        None => GenerationRequest::default(),
    };
    if let Some(c) = &args.chords {
        req.chords = split_symbols(c);
    }
    if let Some(u) = args.chord_unit {
        req.chord_unit = match u {
            UnitArg::Step => ChordUnit::Step,
            UnitArg::Beat => ChordUnit::Beat,
            UnitArg::Bar => ChordUnit::Bar,
        };
    }
    if args.length.is_some() {
        req.length = args.length;
    }
    if let Some(k) = &args.key {
        req.key = Some(k.clone());
        req.keys = None;
    }
    if let Some(k) = &args.keys {
        req.keys = Some(split_symbols(k));
        req.key = None;
    }
    if let Some(r) = &args.rhythm {
        req.rhythm = Some(RhythmInput::Pattern(r.clone()));
    }
    if let Some(v) = args.seed {
        req.seed = v;
    }
    if args.ddpm {
        req.sampler.mode = SamplerMode::Ddpm;
        req.sampler.steps = None;
    }
    if let Some(n) = args.steps {
        req.sampler.mode = SamplerMode::Ddim;
        req.sampler.steps = Some(StepsInput::Count(n));
    }
    if let Some(v) = args.eta {
        req.sampler.eta = v;
    }
    if args.w.is_some() {
        req.guidance.w = args.w;
    }
    if let Some(v) = args.kappa {
        req.guidance.kappa = v;
    }
    if args.no_harmonic {
        req.guidance.harmonic = false;
    }
    if args.no_rhythm_guidance {
        req.guidance.rhythm = false;
    }
    if let Some(v) = args.tempo {
        req.tempo_bpm = v;
    }
    if let Some(path) = &args.melody {
        let piece = ftg_service::workflows::load_midi_file(path)?;
        let length = req.resolve_length()?;
        req.melody = Some((&piece.melody.window(0, length)).into());
    }
    let (id, ck, mut warnings) = resolve_checkpoint(args.checkpoint.as_deref().or(req.checkpoint.as_deref()))?;
    let mut response = generate(&ck, id, &req)?;
    warnings.append(&mut response.warnings);
    response.warnings = warnings;
    std::fs::write(&args.out, response.midi_bytes()?).map_err(|e| ServiceError::from(e).with_context(&args.out))?;
    if let Some(p) = &args.roll_json {
        write_json(p, &response.roll)?;
    }
    let summary = json!({
        "midi": args.out,
        "checkpoint": response.checkpoint,
        "length": response.length,
        "audit": response.audit,
        "warnings": response.warnings,
    });
    match &args.audit {
        Some(p) => write_json(p, &summary),
        None => print_json(&summary),
    }
}

fn run_evaluate(args: EvaluateArgs) -> Result<(), ServiceError> {
    let report = evaluate_dirs(&args.gen, &args.gt)?;
    if let Some(p) = &args.csv {
        std::fs::write(p, ftg_core::metrics::reports_to_csv(&report.reports))?;
    }
    match &args.out {
        Some(p) => write_json(p, &report),
        None => print_json(&report),
    }
}

fn run_corpus(args: CorpusArgs) -> Result<(), ServiceError> {
    let mut spec: CorpusSpec = match &args.config {
        Some(p) => read_config(p)?,
        None => CorpusSpec::default(),
    };
    if let Some(v) = args.pieces {
        spec.pieces = v;
    }
    if let Some(v) = args.measures {
        spec.measures = v;
    }
    if let Some(v) = args.seed {
        spec.seed = v;
    }
    print_json(&write_corpus(&spec, &args.out)?)
}

fn run_midi(cmd: MidiCommand) -> Result<(), ServiceError> {
    match cmd {
        MidiCommand::Inspect { file } => {
            let bytes = std::fs::read(&file).map_err(|e| ServiceError::from(e).with_context(&file))?;
            print_json(&inspect_midi(&bytes).map_err(|e| e.with_context(&file))?)
        }
        MidiCommand::Convert { input, output, tempo } => {
            let bytes = std::fs::read(&input).map_err(|e| ServiceError::from(e).with_context(&input))?;
            if output.extension().is_some_and(|e| e == "json") {
                write_json(&output, &midi_to_json(&bytes).map_err(|e| e.with_context(&input))?)
            } else {
                let piece: PieceJson = serde_json::from_slice(&bytes).map_err(|e| ServiceError::from(e).with_context(&input))?;
                std::fs::write(&output, json_to_midi(&piece, tempo)?)?;
                Ok(())
            }
        }
    }
}

fn run_serve(args: ServeArgs) -> Result<(), ServiceError> {
    let store = Arc::new(CheckpointStore::new(args.checkpoint_dir));
    if let Some(id) = &args.load {
        store.load(id)?;
    }
    let runtime = tokio::runtime::Runtime::new()?;
    eprintln!("listening on http://{}", args.addr);
    runtime.block_on(ftg_service::serve(args.addr, store))?;
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => run_train(a),
        Command::Generate(a) => run_generate(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Corpus(a) => run_corpus(a),
        Command::Midi(c) => run_midi(c),
        Command::Serve(a) => run_serve(a),
    };
    if let Err(e) = result {
        eprintln!("{}", e.to_json());
        std::process::exit(e.exit_code());
    }
}
