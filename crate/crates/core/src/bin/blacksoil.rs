//! Command-line front end: inference over tiles or whole scenes, mask
//! evaluation, the built-in verification suite, scan benchmarking, order
//! inspection, and checkpoint creation.
//!
//! Exit codes: 0 success, 1 usage error or failed check, 2 unreadable or
//! malformed file, 3 shape/domain mismatch.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use blacksoil_core::data::checkpoint::{load_checkpoint, save_checkpoint};
use blacksoil_core::data::netpbm::{load_ppm, save_pgm};
use blacksoil_core::data::{GrayImage, MaskImage};
use blacksoil_core::data::netpbm::load_pgm;
use blacksoil_core::loss::{evaluate, LossWeights, MetricsReport};
use blacksoil_core::model::{
    from_entries, infer_image, infer_scene, init_weights, to_entries, ModelConfig, ModelWeights,
};
use blacksoil_core::scan::{build_scan_order, ScanStrategy};
use blacksoil_core::selftest;
use blacksoil_core::ssm::{discretize, scan_blocked, scan_sequential, ScanInputs};
use blacksoil_core::tensor::{Element, Tensor};
use blacksoil_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "blacksoil",
    version,
    about = "Black-soil patch segmentation over RGB survey imagery"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Segment one tile-sized image, or a full scene with --scene
    Infer(InferArgs),
    /// Score a predicted mask against ground truth, CSV to stdout or --out
    Eval(EvalArgs),
    /// Run the built-in verification suite
    Selftest,
    /// Measure scan kernel throughput across block sizes
    Bench(BenchArgs),
    /// Print the pixel visiting order of a scan strategy
    ScanOrder(ScanOrderArgs),
    /// Create a seeded random-weight checkpoint
    Init(InitArgs),
}

/// Knobs shared by the model-running subcommands. Every value can also come
/// from a key=value config file; explicit flags win over the file, the file
/// wins over defaults.
#[derive(Args, Clone, Default)]
struct ConfigOpts {
    /// Flat key=value config file (keys match the long flag names)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base channel width; later stages double it
    #[arg(long)]
    channels: Option<usize>,
    /// States per channel in the selective scan
    #[arg(long = "state-dim")]
    state_dim: Option<usize>,
    /// Window side of the local scan orders
    #[arg(long)]
    window: Option<usize>,
    /// Channel expansion factor inside each Mamba block
    #[arg(long)]
    expansion: Option<usize>,
    /// Block length of the chunked scan kernel
    #[arg(long)]
    block: Option<usize>,
    /// Cross-entropy weight in the combined loss
    #[arg(long)]
    lambda1: Option<f64>,
    /// Soft-IoU weight in the combined loss
    #[arg(long)]
    lambda2: Option<f64>,
    /// Tile side length for scene inference
    #[arg(long)]
    tile: Option<usize>,
    /// Tile columns for scene inference
    #[arg(long)]
    nx: Option<usize>,
    /// Tile rows for scene inference
    #[arg(long)]
    ny: Option<usize>,
    /// RNG seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: one per core)
    #[arg(long)]
    threads: Option<usize>,
    /// Arithmetic precision
    #[arg(long, value_enum)]
    precision: Option<Prec>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Prec {
    F32,
    F64,
}

/// Fully resolved settings after merging flags, config file, and defaults.
struct Settings {
    model: ModelConfig,
    loss: LossWeights,
    tile: usize,
    nx: usize,
    ny: usize,
    seed: u64,
    threads: Option<usize>,
    precision: Prec,
}

fn parse_config_file(path: &Path) -> Result<HashMap<String, String>> {
    let text = fs::read_to_string(path)?;
    let mut map = HashMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::format(lineno + 1, format!("config line '{line}' is not key=value"))
        })?;
        map.insert(key.trim().replace('_', "-"), value.trim().to_string());
    }
    Ok(map)
}

fn config_value<T: std::str::FromStr>(
    file: &HashMap<String, String>,
    key: &str,
) -> Result<Option<T>> {
    match file.get(key) {
        None => Ok(None),
        Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
            Error::format(0, format!("config key '{key}' has unparsable value '{raw}'"))
        }),
    }
}

impl ConfigOpts {
    fn resolve(&self) -> Result<Settings> {
        let file = match &self.config {
            Some(path) => parse_config_file(path)?,
            None => HashMap::new(),
        };
        let known = [
            "channels", "state-dim", "window", "expansion", "block", "lambda1", "lambda2",
            "tile", "nx", "ny", "seed", "threads", "precision",
        ];
        for key in file.keys() {
            if !known.contains(&key.as_str()) {
                return Err(Error::format(0, format!("unknown config key '{key}'")));
            }
        }

        let defaults = ModelConfig::default();
        let model = ModelConfig {
            base_channels: self
                .channels
                .or(config_value(&file, "channels")?)
                .unwrap_or(defaults.base_channels),
            state_dim: self
                .state_dim
                .or(config_value(&file, "state-dim")?)
                .unwrap_or(defaults.state_dim),
            window: self.window.or(config_value(&file, "window")?).unwrap_or(defaults.window),
            expansion: self
                .expansion
                .or(config_value(&file, "expansion")?)
                .unwrap_or(defaults.expansion),
            scan_block: self.block.or(config_value(&file, "block")?).unwrap_or(defaults.scan_block),
        };
        let loss = LossWeights {
            lambda1: self.lambda1.or(config_value(&file, "lambda1")?).unwrap_or(0.5),
            lambda2: self.lambda2.or(config_value(&file, "lambda2")?).unwrap_or(0.5),
        };
        let precision = match self.precision {
            Some(p) => p,
            None => match file.get("precision").map(String::as_str) {
                None => Prec::F32,
                Some("f32") => Prec::F32,
                Some("f64") => Prec::F64,
                Some(other) => {
                    return Err(Error::format(
                        0,
                        format!("config precision must be f32 or f64, got '{other}'"),
                    ))
                }
            },
        };
        let settings = Settings {
            model,
            loss,
            tile: self.tile.or(config_value(&file, "tile")?).unwrap_or(384),
            nx: self.nx.or(config_value(&file, "nx")?).unwrap_or(15),
            ny: self.ny.or(config_value(&file, "ny")?).unwrap_or(10),
            seed: self.seed.or(config_value(&file, "seed")?).unwrap_or(0),
            threads: match self.threads {
                Some(t) => Some(t),
                None => config_value(&file, "threads")?,
            },
            precision,
        };
        settings.model.validate()?;
        settings.loss.validate()?;
        if settings.tile == 0 || !settings.tile.is_multiple_of(32) {
            return Err(Error::domain(format!(
                "tile side must be a positive multiple of 32, got {}",
                settings.tile
            )));
        }
        Ok(settings)
    }
}

#[derive(Args)]
struct InferArgs {
    /// Weight checkpoint to run
    #[arg(long)]
    weights: PathBuf,
    /// Input image (binary PPM)
    #[arg(long)]
    image: PathBuf,
    /// Output mask (binary PGM, 0 = background, 255 = positive class)
    #[arg(long)]
    out: PathBuf,
    /// Tile a large scene instead of requiring one network-sized input
    #[arg(long)]
    scene: bool,
    /// Also write per-class probability maps with this path prefix
    #[arg(long)]
    probs: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigOpts,
}

#[derive(Args)]
struct EvalArgs {
    /// Predicted mask (binary PGM; 128 and above is the positive class)
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth mask (binary PGM)
    #[arg(long)]
    gt: PathBuf,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Sequence length
    #[arg(long = "L", default_value_t = 4096)]
    l: usize,
    /// Channels
    #[arg(long = "D", default_value_t = 8)]
    d: usize,
    /// States per channel
    #[arg(long = "N", default_value_t = 16)]
    n: usize,
    /// Benchmark one block size instead of the default sweep
    #[arg(long)]
    block: Option<usize>,
    /// RNG seed for the synthetic sequence
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: one per core)
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ScanOrderArgs {
    /// Grid height
    #[arg(long = "h", visible_alias = "height")]
    height: usize,
    /// Grid width
    #[arg(long = "w", visible_alias = "width")]
    width: usize,
    /// horizontal, vertical, local_window or local_window_flipped; a
    /// trailing number sets the window (e.g. local_window2)
    #[arg(long)]
    strategy: String,
    /// Window side for the local strategies
    #[arg(long)]
    window: Option<usize>,
}

#[derive(Args)]
struct InitArgs {
    /// Where to write the checkpoint
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    cfg: ConfigOpts,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Format { .. } | Error::Io(_) => 2,
        Error::Shape(_) | Error::Domain(_) | Error::NonFinite(_) => 3,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap reserves 2 for usage errors; 2 means unreadable file here
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn set_thread_pool(threads: Option<usize>) -> Result<()> {
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::domain("thread count must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.cmd {
        Cmd::Infer(args) => {
            let settings = args.cfg.resolve()?;
            set_thread_pool(settings.threads)?;
            match settings.precision {
                Prec::F32 => cmd_infer::<f32>(&args, &settings),
                Prec::F64 => cmd_infer::<f64>(&args, &settings),
            }?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Eval(args) => {
            cmd_eval(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Selftest => {
            let ok = selftest::run_all(&mut std::io::stdout())?;
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Cmd::Bench(args) => {
            set_thread_pool(args.threads)?;
            cmd_bench(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::ScanOrder(args) => {
            cmd_scan_order(&args)?;
            Ok(ExitCode::SUCCESS)
        }
        Cmd::Init(args) => {
            let settings = args.cfg.resolve()?;
            let weights = init_weights::<f32>(&settings.model, settings.seed)?;
            save_checkpoint(&args.out, &to_entries(&weights))?;
            println!("wrote {}", args.out.display());
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_weights<T: Element>(path: &Path, cfg: &ModelConfig) -> Result<ModelWeights<T>> {
    from_entries(load_checkpoint(path)?, cfg)
}

fn prob_plane_to_gray<T: Element>(probs: &Tensor<T>, channel: usize) -> GrayImage {
    let h = probs.dims()[1];
    let w = probs.dims()[2];
    let plane = &probs.data()[channel * h * w..(channel + 1) * h * w];
    let px = plane.iter().map(|p| (p.as_f64() * 255.0).round().clamp(0.0, 255.0) as u8).collect();
    GrayImage::new(w, h, px).expect("plane size matches image")
}

fn cmd_infer<T: Element>(args: &InferArgs, settings: &Settings) -> Result<()> {
    let weights = load_weights::<T>(&args.weights, &settings.model)?;
    let image = load_ppm(&args.image)?;
    let (mask, probs): (MaskImage, Tensor<T>) = if args.scene {
        infer_scene(&image, &weights, &settings.model, settings.tile, settings.nx, settings.ny)?
    } else {
        infer_image(&image, &weights, &settings.model)?
    };
    save_pgm(&args.out, &mask.to_gray())?;
    if let Some(prefix) = &args.probs {
        for (ch, tag) in [(0, "blk"), (1, "mat")] {
            let mut path = prefix.as_os_str().to_owned();
            path.push(format!("_{tag}.pgm"));
            save_pgm(Path::new(&path), &prob_plane_to_gray(&probs, ch))?;
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let pred = MaskImage::from_gray(&load_pgm(&args.pred)?);
    let gt = MaskImage::from_gray(&load_pgm(&args.gt)?);
    let m = evaluate(&pred, &gt)?;
    let text = format!("{}\n{}\n", MetricsReport::CSV_HEADER, m.to_csv_row());
    match &args.out {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<()> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(args.seed);
    let (b, l, d, n) = (1usize, args.l, args.d, args.n);
    let inputs = ScanInputs::new(
        Tensor::from_fn(&[b, l, d], |_| rng.random_range(-1.0f32..1.0)),
        Tensor::from_fn(&[b, l, d], |_| rng.random_range(1e-3f32..0.1)),
        Tensor::from_fn(&[b, l, n], |_| rng.random_range(-1.0f32..1.0)),
        Tensor::from_fn(&[b, l, n], |_| rng.random_range(-1.0f32..1.0)),
        Tensor::from_fn(&[d, n], |_| rng.random_range(-2.0f32..-0.05)),
    )?;
    let step = discretize(&inputs)?;
    let elems = (b * l * d) as f64;

    let time = |f: &dyn Fn() -> Result<Tensor<f32>>| -> Result<f64> {
        f()?; // warm-up
        let iters = 5;
        let start = Instant::now();
        for _ in 0..iters {
            f()?;
        }
        Ok(elems * iters as f64 / start.elapsed().as_secs_f64())
    };

    let mut out = std::io::stdout().lock();
    writeln!(out, "kernel,block,elements_per_s")?;
    let seq = time(&|| scan_sequential(&step, &inputs.x, &inputs.cmat))?;
    writeln!(out, "sequential,{l},{seq:.0}")?;
    let blocks: Vec<usize> = match args.block {
        Some(blk) => vec![blk],
        None => vec![16, 64, 256, 1024].into_iter().filter(|&x| x < l).collect(),
    };
    for blk in blocks {
        let rate = time(&|| scan_blocked(&step, &inputs.x, &inputs.cmat, blk))?;
        writeln!(out, "blocked,{blk},{rate:.0}")?;
    }
    Ok(())
}

fn cmd_scan_order(args: &ScanOrderArgs) -> Result<()> {
    let mut strategy = args.strategy.clone();
    let mut window = args.window;
    // accept a glued trailing window size, e.g. local_window2
    let digits = strategy.chars().rev().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let split = strategy.len() - digits;
        if window.is_none() {
            window = Some(strategy[split..].parse().expect("digits parse"));
        }
        strategy.truncate(split);
    }
    let mut s: ScanStrategy = strategy.parse()?;
    if let Some(w) = window {
        s.window = w;
    }
    let p = build_scan_order(args.height, args.width, s)?;
    let line: Vec<String> = p.order().iter().map(|i| i.to_string()).collect();
    println!("{}", line.join(" "));
    Ok(())
}
