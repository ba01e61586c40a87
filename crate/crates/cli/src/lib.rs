//! `demfill` command line: fill, blend, evaluate, synthesize, train and
//! compare.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use demfill_core::harness::{load_tiles, parse_methods, records_to_csv, summarize, CompareConfig, Tile};
use demfill_core::neural::{synthetic_dataset, train_coarse, TrainConfig};
use demfill_core::raster::{load_asc, load_mask_asc, save_asc, write_mask_asc};
use demfill_core::{
    em_histogram, fill_and_blend, mse, sample_rect_mask, synth_terrain, BlendConfig, DemGrid, Error,
    Filler, Generator, IdwParams, NetworkSpec, SplineParams, TerrainKind, VoidMask, WeightStore,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "demfill", version, about = "Void filling for digital elevation models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fill the voids of a grid with one method.
    Fill(FillArgs),
    /// Fill, then blend the boundary band with the smooth extension.
    Blend(BlendArgs),
    /// Print MSE and histogram EM of a prediction over a void.
    Eval(EvalArgs),
    /// Write a random rectangular void mask.
    MaskGen(MaskGenArgs),
    /// Write a synthetic terrain tile.
    Synth(SynthArgs),
    /// Train the coarse network stage on synthetic tiles.
    TrainCoarse(TrainArgs),
    /// Run several methods over a tile set and write a CSV.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MethodArg {
    Extend,
    Idw,
    Spline,
    Neural,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum KindArg {
    Quadratic,
    Hills,
    Fractal,
}

impl From<KindArg> for TerrainKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Quadratic => TerrainKind::Quadratic,
            KindArg::Hills => TerrainKind::GaussianHills,
            KindArg::Fractal => TerrainKind::Fractal,
        }
    }
}

#[derive(Debug, Args)]
struct FillerArgs {
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Window radius of the paraboloid fits.
    #[arg(long, default_value_t = 3)]
    fit_radius: usize,
    #[arg(long, default_value_t = 2.0)]
    idw_power: f64,
    #[arg(long, default_value_t = 32.0)]
    idw_radius: f64,
    #[arg(long, default_value_t = 2)]
    smoothing_passes: usize,
    #[arg(long, default_value_t = 8)]
    knot_spacing: usize,
    #[arg(long, default_value_t = 1e-3)]
    smoothing_weight: f64,
    /// Network description; the built-in desk network when omitted.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Weight file, required by the neural method.
    #[arg(long)]
    weights: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IoArgs {
    /// Input grid; nodata cells are voids.
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Extra void mask (0 known, 1 unknown), merged with the nodata cells.
    #[arg(long)]
    mask: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FillArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    filler: FillerArgs,
}

#[derive(Debug, Args)]
struct BlendArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    filler: FillerArgs,
    /// Number of rings over which the fill takes over.
    #[arg(long, default_value_t = 8)]
    blend_width: usize,
    #[arg(long, default_value_t = 10.0)]
    sigmoid_steepness: f64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    mask: PathBuf,
    #[arg(long, default_value_t = 256)]
    bins: usize,
}

#[derive(Debug, Args)]
struct MaskGenArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    rects: usize,
    #[arg(long, default_value_t = 4)]
    min_size: usize,
    #[arg(long, default_value_t = 16)]
    max_size: usize,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    rows: usize,
    #[arg(long)]
    cols: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = KindArg::Hills)]
    kind: KindArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value_t = 500)]
    steps: usize,
    /// Seeds both the weight initialisation and the synthetic tiles.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    tiles: usize,
    #[arg(long, default_value_t = 32)]
    tile_size: usize,
    #[arg(long, default_value_t = 1e-4)]
    learning_rate: f64,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    out_weights: PathBuf,
    /// Per-step loss log as CSV.
    #[arg(long)]
    loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CompareArgs {
    /// Comma-separated methods; append `+blend` to blend the boundary.
    #[arg(long, default_value = "extend,idw,spline")]
    methods: String,
    /// Directory of complete `.asc` tiles.
    #[arg(long, conflicts_with = "synth")]
    tiles_dir: Option<PathBuf>,
    /// Number of synthetic 64×64 tiles to use instead of a directory.
    #[arg(long)]
    synth: Option<usize>,
    #[arg(long)]
    csv: PathBuf,
    #[arg(long, default_value_t = 0)]
    mask_seed: u64,
    #[arg(long, default_value_t = 2)]
    rects: usize,
    #[arg(long, default_value_t = 4)]
    min_size: usize,
    #[arg(long, default_value_t = 16)]
    max_size: usize,
    #[arg(long, default_value_t = 256)]
    bins: usize,
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Record wall times (the CSV is then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                EXIT_NUMERICAL
            } else {
                EXIT_DATA
            }
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Error> {
    match cmd {
        Command::Fill(a) => fill(&a),
        Command::Blend(a) => blend(&a),
        Command::Eval(a) => eval(&a),
        Command::MaskGen(a) => mask_gen(&a),
        Command::Synth(a) => synth(&a),
        Command::TrainCoarse(a) => train(&a),
        Command::Compare(a) => compare(&a),
    }
}

fn load_spec(path: Option<&Path>) -> Result<NetworkSpec, Error> {
    match path {
        Some(p) => std::fs::read_to_string(p)?.parse(),
        None => Ok(NetworkSpec::desk()),
    }
}

fn load_generator(spec: Option<&Path>, weights: Option<&Path>) -> Result<Generator, Error> {
    let spec = load_spec(spec)?;
    let path = weights.ok_or_else(|| Error::InvalidParam("the neural method needs --weights".into()))?;
    Generator::new(&spec, &WeightStore::load_file(path, &spec)?)
}

fn build_filler(a: &FillerArgs) -> Result<Filler, Error> {
    Ok(match a.method {
        MethodArg::Extend => Filler::Extend { radius: a.fit_radius },
        MethodArg::Idw => Filler::Idw(IdwParams {
            power: a.idw_power,
            radius: a.idw_radius,
            smoothing_passes: a.smoothing_passes,
        }),
        MethodArg::Spline => Filler::Spline(SplineParams {
            knot_spacing: a.knot_spacing,
            smoothing_weight: a.smoothing_weight,
            ..SplineParams::default()
        }),
        MethodArg::Neural => Filler::Neural(Arc::new(load_generator(a.spec.as_deref(), a.weights.as_deref())?)),
    })
}

fn load_input(io: &IoArgs) -> Result<(DemGrid, VoidMask), Error> {
    let (grid, holes) = load_asc(&io.input)?;
    let mask = match &io.mask {
        Some(p) => holes.union(&load_mask_asc(p)?)?,
        None => holes,
    };
    Ok((grid, mask))
}

fn save_filled(path: &Path, grid: &DemGrid) -> Result<(), Error> {
    save_asc(path, grid, &VoidMask::all_known(grid.rows(), grid.cols()))
}

fn fill(a: &FillArgs) -> Result<(), Error> {
    let (grid, mask) = load_input(&a.io)?;
    let filled = build_filler(&a.filler)?.fill(&grid, &mask)?;
    save_filled(&a.io.out, &filled)
}

fn blend(a: &BlendArgs) -> Result<(), Error> {
    let (grid, mask) = load_input(&a.io)?;
    let cfg = BlendConfig {
        width: a.blend_width,
        fit_radius: a.filler.fit_radius,
        sigmoid_steepness: a.sigmoid_steepness,
    };
    let out = fill_and_blend(&grid, &mask, &build_filler(&a.filler)?, &cfg)?;
    save_filled(&a.io.out, &out)
}

fn eval(a: &EvalArgs) -> Result<(), Error> {
    let (pred, _) = load_asc(&a.pred)?;
    let (truth, _) = load_asc(&a.truth)?;
    let mask = load_mask_asc(&a.mask)?;
    pred.check_same_shape(&truth)?;
    let m = mse(&pred, &truth, &mask)?;
    let e = em_histogram(&pred, &truth, &mask, a.bins)?;
    println!("mse={m} em={e}");
    Ok(())
}

fn mask_gen(a: &MaskGenArgs) -> Result<(), Error> {
    let mask = sample_rect_mask(a.rows, a.cols, a.seed, a.rects, (a.min_size, a.max_size))?;
    let text = write_mask_asc(&mask, Default::default());
    match &a.out {
        Some(p) => std::fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn synth(a: &SynthArgs) -> Result<(), Error> {
    let grid = synth_terrain(a.rows, a.cols, a.seed, a.kind.into())?;
    save_filled(&a.out, &grid)
}

fn train(a: &TrainArgs) -> Result<(), Error> {
    let spec = load_spec(a.spec.as_deref())?;
    let data = synthetic_dataset(a.tiles, a.tile_size, a.seed)?;
    let cfg = TrainConfig {
        steps: a.steps,
        seed: a.seed,
        learning_rate: a.learning_rate,
        ..TrainConfig::default()
    };
    let report = train_coarse(&data, &spec, &cfg)?;
    report.weights.save_file(&a.out_weights)?;
    if let Some(p) = &a.loss_csv {
        let mut text = String::from("step,loss\n");
        for (k, l) in report.losses.iter().enumerate() {
            text.push_str(&format!("{k},{l}\n"));
        }
        std::fs::write(p, text)?;
    }
    println!(
        "initial_loss={} final_loss={} ratio={}",
        report.initial_mean_loss,
        report.final_mean_loss,
        report.final_mean_loss / report.initial_mean_loss
    );
    Ok(())
}

fn synthetic_tiles(n: usize) -> Result<Vec<Tile>, Error> {
    let kinds = [TerrainKind::GaussianHills, TerrainKind::Fractal, TerrainKind::Quadratic];
    (0..n)
        .map(|k| {
            Ok(Tile {
                id: format!("synth{k:03}"),
                truth: synth_terrain(64, 64, k as u64, kinds[k % kinds.len()])?,
                mask: None,
            })
        })
        .collect()
}

fn compare(a: &CompareArgs) -> Result<(), Error> {
    let methods = parse_methods(&a.methods)?;
    let tiles = match (&a.tiles_dir, a.synth) {
        (Some(dir), _) => load_tiles(dir)?,
        (None, Some(n)) => synthetic_tiles(n)?,
        (None, None) => return Err(Error::InvalidParam("give --tiles-dir or --synth".into())),
    };
    let generator = if methods.iter().any(|m| m.kind == demfill_core::harness::MethodKind::Neural) {
        Some(Arc::new(load_generator(a.spec.as_deref(), a.weights.as_deref())?))
    } else {
        None
    };
    let cfg = CompareConfig {
        methods,
        mask_seed: a.mask_seed,
        rects: a.rects,
        rect_size: (a.min_size, a.max_size),
        generator,
        bins: a.bins,
        timing: a.timing,
        ..CompareConfig::default()
    };
    let records = demfill_core::run_comparison(&tiles, &cfg)?;
    std::fs::write(&a.csv, records_to_csv(&records, a.bins))?;
    println!("{:<16} {:>4} {:>6} {:>14} {:>14}", "method", "ok", "failed", "mean_mse", "mean_em");
    for s in summarize(&records) {
        println!(
            "{:<16} {:>4} {:>6} {:>14.6} {:>14.6}",
            s.method, s.ok, s.failed, s.mean_mse, s.mean_em
        );
    }
    Ok(())
}
