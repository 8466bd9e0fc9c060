//! `floorhal` command line: synthetic floorplan generation, rasterization,
//! hallucination inference, training losses, evaluation metrics, refinement,
//! and SVG rendering. Results go to stdout as JSON; failures put a
//! machine-readable error JSON on stderr (exit 2 for bad input, 3 for an
//! internal invariant violation).

mod config;

use clap::{Parser, Subcommand, ValueEnum};
use config::FileConfig;
use floorhal_core as core;
use floorhal_core::{Error, Floorplan, Result};
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "floorhal", version, about = "Extreme floorplan completion toolkit")]
struct Cli {
    /// Optional key=value config file (decoder_layers, focal_gamma, ...);
    /// explicit flags win over file entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RegimeArg {
    Train,
    Test,
}

impl From<RegimeArg> for core::Regime {
    fn from(r: RegimeArg) -> core::Regime {
        match r {
            RegimeArg::Train => core::Regime::Train,
            RegimeArg::Test => core::Regime::Test,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RasterRegime {
    /// Rasterize on the plan's own canvas without normalization.
    Raw,
    Train,
    Test,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RefinerArg {
    Identity,
    Morph,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic (partial, full) floorplan pair.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 6)]
        rooms: usize,
        #[arg(long, default_value_t = 6)]
        doors: usize,
        #[arg(long, default_value_t = 64)]
        canvas: usize,
        #[arg(long)]
        partial_out: PathBuf,
        #[arg(long)]
        full_out: PathBuf,
    },
    /// Rasterize a plan to per-channel PGMs plus a composite PPM.
    Rasterize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Drop invisible components (raw regime only; normalization always
        /// encodes the visible part).
        #[arg(long)]
        visible_only: bool,
        #[arg(long, value_enum, default_value_t = RasterRegime::Raw)]
        regime: RasterRegime,
        /// Apply the seeded augmentation schedule (train regime).
        #[arg(long)]
        augment: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Complete a partial floorplan with the cascading decoders.
    Infer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Weights manifest; omitted = seeded random weights (smoke mode).
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = RegimeArg::Test)]
        regime: RegimeArg,
        #[arg(long)]
        decoder_layers: Option<usize>,
    },
    /// Training-loss breakdown of a predicted plan against ground truth.
    Loss {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
    },
    /// Precision/recall/F1 for rooms and doors; single pair or directories.
    Eval {
        #[arg(long, required_unless_present = "pred_dir")]
        pred: Option<PathBuf>,
        #[arg(long, required_unless_present = "gt_dir")]
        gt: Option<PathBuf>,
        #[arg(long, requires_all = ["gt_dir", "csv"], conflicts_with = "pred")]
        pred_dir: Option<PathBuf>,
        #[arg(long, requires = "pred_dir", conflicts_with = "gt")]
        gt_dir: Option<PathBuf>,
        /// CSV output path for directory mode.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Search pixel translations for the best F1 before scoring.
        #[arg(long)]
        align: bool,
        /// Disable the bbox-overlap pruning of the alignment search.
        #[arg(long, requires = "align")]
        exhaustive: bool,
    },
    /// Apply the refinement heuristics and re-vectorize.
    Refine {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = RefinerArg::Morph)]
        refiner: RefinerArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Render a plan as SVG.
    Render {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_plan(path: &Path) -> Result<Floorplan> {
    Floorplan::from_json(&std::fs::read_to_string(path)?)
}

fn save_plan(plan: &Floorplan, path: &Path) -> Result<()> {
    std::fs::write(path, plan.to_json()?)?;
    Ok(())
}

fn cmd_synth(
    seed: u64,
    rooms: usize,
    doors: usize,
    canvas: usize,
    partial_out: &Path,
    full_out: &Path,
) -> Result<serde_json::Value> {
    let cfg = core::SynthConfig { seed, n_rooms: rooms, n_doors: doors, canvas };
    let (partial, full) = core::gen_synthetic(&cfg)?;
    save_plan(&partial, partial_out)?;
    save_plan(&full, full_out)?;
    Ok(json!({
        "partial": partial_out,
        "full": full_out,
        "rooms": rooms,
        "doors": doors,
        "visible_rooms": partial.visible_rooms().count(),
        "visible_doors": partial.visible_doors().count(),
    }))
}

fn cmd_rasterize(
    file_cfg: &FileConfig,
    input: &Path,
    out_dir: &Path,
    visible_only: bool,
    regime: RasterRegime,
    do_augment: bool,
    seed: u64,
) -> Result<serde_json::Value> {
    let plan = load_plan(input)?;
    let mut stack = match regime {
        RasterRegime::Raw => core::rasterize(&plan, visible_only)?,
        RasterRegime::Train => core::normalize_train(&plan)?,
        RasterRegime::Test => core::normalize_test(&plan)?,
    };
    if do_augment {
        if regime != RasterRegime::Train {
            return Err(Error::BadConfig("--augment applies to the train regime".into()));
        }
        stack = core::augment(&stack, &file_cfg.augment(seed))?;
    }
    std::fs::create_dir_all(out_dir)?;
    for (ci, channel) in stack.channels.iter().enumerate() {
        let label = core::ComponentType::from_channel(ci).unwrap().label();
        let path = out_dir.join(format!("channel_{ci:02}_{label}.pgm"));
        std::fs::write(path, core::raster::mask_to_pgm(channel))?;
    }
    std::fs::write(out_dir.join("composite.ppm"), core::raster::stack_to_ppm(&stack))?;
    Ok(json!({
        "out_dir": out_dir,
        "canvas": [stack.w, stack.h],
        "set_pixels": stack.total_count(),
        "files": 15,
    }))
}

fn cmd_infer(
    file_cfg: &FileConfig,
    input: &Path,
    out: &Path,
    weights: Option<&Path>,
    seed: u64,
    regime: core::Regime,
    decoder_layers: Option<usize>,
) -> Result<serde_json::Value> {
    let plan = load_plan(input)?;
    let bundle = match weights {
        Some(path) => core::WeightBundle::load(path)?,
        None => core::init_seeded(&file_cfg.arch(decoder_layers), seed),
    };
    let result = core::infer_plan(&plan, &bundle, regime)?;
    save_plan(&result.completed, out)?;
    let hallucinated = result.completed.components.iter().filter(|c| !c.visible).count();
    Ok(json!({
        "out": out,
        "hallucinated": hallucinated,
        "diagnostics": result.diagnostics,
    }))
}

fn cmd_loss(file_cfg: &FileConfig, pred: &Path, gt: &Path) -> Result<serde_json::Value> {
    let pred = load_plan(pred)?;
    let gt = load_plan(gt)?;
    let report =
        core::plan_loss(&pred, &gt, &core::ClassWeights::default(), &file_cfg.seg_loss())?;
    Ok(serde_json::to_value(&report)?)
}

#[allow(clippy::type_complexity)]
fn eval_pair(
    pred: &Floorplan,
    gt: &Floorplan,
    align: bool,
    cfg: &core::AlignConfig,
) -> Result<(core::MetricReport, core::MetricReport, Option<(i64, i64)>)> {
    if align {
        let (rooms, doors, t) = core::align_evaluate(pred, gt, cfg)?;
        Ok((rooms, doors, Some(t)))
    } else {
        let (rooms, doors) = core::evaluate(pred, gt)?;
        Ok((rooms, doors, None))
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_eval(
    file_cfg: &FileConfig,
    pred: Option<&Path>,
    gt: Option<&Path>,
    pred_dir: Option<&Path>,
    gt_dir: Option<&Path>,
    csv: Option<&Path>,
    align: bool,
    exhaustive: bool,
) -> Result<serde_json::Value> {
    let align_cfg = core::AlignConfig {
        exhaustive,
        rooms_only: file_cfg.align_rooms_only.unwrap_or(false),
    };
    if let (Some(pred), Some(gt)) = (pred, gt) {
        let (rooms, doors, translation) =
            eval_pair(&load_plan(pred)?, &load_plan(gt)?, align, &align_cfg)?;
        return Ok(json!({
            "rooms": rooms,
            "doors": doors,
            "translation": translation,
        }));
    }

    let (pred_dir, gt_dir) = (pred_dir.unwrap(), gt_dir.unwrap());
    let mut names: Vec<String> = std::fs::read_dir(pred_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".json"))
        .collect();
    names.sort();
    if names.is_empty() {
        return Err(Error::EmptyInput(format!("no .json files in {}", pred_dir.display())));
    }
    let mut rows = String::from(
        "id,room_precision,room_recall,room_f1,door_precision,door_recall,door_f1\n",
    );
    let mut sums = [0.0f64; 6];
    for name in &names {
        let pred = load_plan(&pred_dir.join(name))?;
        let gt = load_plan(&gt_dir.join(name))?;
        let (rooms, doors, _) = eval_pair(&pred, &gt, align, &align_cfg)?;
        let id = name.trim_end_matches(".json");
        let cells = [
            rooms.precision,
            rooms.recall,
            rooms.f1,
            doors.precision,
            doors.recall,
            doors.f1,
        ];
        rows.push_str(id);
        for (sum, cell) in sums.iter_mut().zip(cells) {
            rows.push_str(&format!(",{cell:.4}"));
            *sum += cell;
        }
        rows.push('\n');
    }
    let n = names.len() as f64;
    rows.push_str("average");
    for sum in sums {
        rows.push_str(&format!(",{:.4}", sum / n));
    }
    rows.push('\n');
    let csv_path = csv.expect("clap requires --csv with --pred-dir");
    std::fs::write(csv_path, &rows)?;
    Ok(json!({
        "samples": names.len(),
        "csv": csv,
        "avg_room_f1": sums[2] / n,
        "avg_door_f1": sums[5] / n,
    }))
}

fn cmd_refine(
    input: &Path,
    steps: usize,
    refiner: RefinerArg,
    out: &Path,
    svg: Option<&Path>,
) -> Result<serde_json::Value> {
    let plan = load_plan(input)?;
    let refined = match refiner {
        RefinerArg::Identity => core::refine_iterate(&plan, &core::IdentityRefiner, steps)?,
        RefinerArg::Morph => core::refine_iterate(&plan, &core::MorphRefiner, steps)?,
    };
    save_plan(&refined, out)?;
    let svg_path = svg.map(Path::to_path_buf).unwrap_or_else(|| out.with_extension("svg"));
    std::fs::write(&svg_path, core::render_svg(&refined))?;
    Ok(json!({ "out": out, "svg": svg_path, "steps": steps }))
}

fn cmd_render(input: &Path, out: &Path) -> Result<serde_json::Value> {
    let plan = load_plan(input)?;
    std::fs::write(out, core::render_svg(&plan))?;
    Ok(json!({ "out": out, "components": plan.components.len() }))
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let file_cfg = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Synth { seed, rooms, doors, canvas, partial_out, full_out } => {
            cmd_synth(seed, rooms, doors, canvas, &partial_out, &full_out)
        }
        Command::Rasterize { input, out_dir, visible_only, regime, augment, seed } => {
            cmd_rasterize(&file_cfg, &input, &out_dir, visible_only, regime, augment, seed)
        }
        Command::Infer { input, out, weights, seed, regime, decoder_layers } => cmd_infer(
            &file_cfg,
            &input,
            &out,
            weights.as_deref(),
            seed,
            regime.into(),
            decoder_layers,
        ),
        Command::Loss { pred, gt } => cmd_loss(&file_cfg, &pred, &gt),
        Command::Eval { pred, gt, pred_dir, gt_dir, csv, align, exhaustive } => cmd_eval(
            &file_cfg,
            pred.as_deref(),
            gt.as_deref(),
            pred_dir.as_deref(),
            gt_dir.as_deref(),
            csv.as_deref(),
            align,
            exhaustive,
        ),
        Command::Refine { input, steps, refiner, out, svg } => {
            cmd_refine(&input, steps, refiner, &out, svg.as_deref())
        }
        Command::Render { input, out } => cmd_render(&input, &out),
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::EmptyMask => "empty-mask",
        Error::OutOfCanvas(_) => "out-of-canvas",
        Error::BadDims(_) => "bad-dims",
        Error::EmptyInput(_) => "empty-input",
        Error::TooManyDoors(_, _) => "too-many-doors",
        Error::TooFewQueries { .. } => "too-few-queries",
        Error::NoMatches => "no-matches",
        Error::NoRooms => "no-rooms",
        Error::BadConfig(_) => "bad-config",
        Error::UnknownLabel(_) => "unknown-label",
        Error::InvalidPlan(_) => "invalid-plan",
        Error::BadWeights(_) => "bad-weights",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn main() {
    let cli = Cli::parse();
    let outcome = std::panic::catch_unwind(|| run(cli));
    match outcome {
        Ok(Ok(value)) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("result serializes"));
        }
        Ok(Err(e)) => {
            eprintln!("{}", json!({ "error": e.to_string(), "kind": error_kind(&e) }));
            std::process::exit(2);
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "internal invariant violation".into());
            eprintln!("{}", json!({ "error": msg, "kind": "internal" }));
            std::process::exit(3);
        }
    }
}
