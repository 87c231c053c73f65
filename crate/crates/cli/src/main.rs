//! `lamina`: measure lamina-curve lordosis from tracked ultrasound scans,
//! generate phantom scans, and compute agreement statistics.

mod svg;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lamina::corepoints::{write_csv, DEFAULT_BAND_MM};
use lamina::curvefit::dbscan::{DEFAULT_EPS_MM, DEFAULT_MIN_PTS};
use lamina::keyframe::DEFAULT_MARGIN_MM;
use lamina::metrics::{agreement, dice, AnglePairTable};
use lamina::phantom::{generate, CurveModel, PhantomError, PhantomSpec, PoseNoise};
use lamina::pipeline::{measure, MeasureParams};
use lamina::reconstruction::{DEFAULT_FILL_RADIUS_MM, DEFAULT_VOXEL_MM};
use lamina::scan_model::{load_dataset, read_pgm};
use lamina::Side;

const MEASUREMENT_FILE: &str = "measurement.json";
const CORE_POINTS_FILE: &str = "core_points.csv";
const VOLUME_STEM: &str = "volume";

#[derive(Parser)]
#[command(
    name = "lamina",
    version,
    about = "Lamina-curve lordosis measurement from tracked ultrasound"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Reconstruct a scan and measure the left and right lamina curves.
    Measure(MeasureArgs),
    /// Write a synthetic scan with a known curve angle.
    Phantom(PhantomArgs),
    /// Left/right agreement statistics over a table of angle pairs.
    Agreement(AgreementArgs),
    /// Dice coefficient of two binary PGM masks.
    Dice(DiceArgs),
}

#[derive(Args)]
struct MeasureArgs {
    /// Scan directory or its manifest.json.
    scan: PathBuf,
    #[arg(long, default_value_t = DEFAULT_VOXEL_MM)]
    voxel_mm: f64,
    #[arg(long, default_value_t = DEFAULT_MARGIN_MM)]
    margin_mm: f64,
    #[arg(long, default_value_t = DEFAULT_BAND_MM)]
    band_mm: f64,
    #[arg(long, default_value_t = DEFAULT_EPS_MM)]
    eps_mm: f64,
    #[arg(long, default_value_t = DEFAULT_MIN_PTS)]
    min_pts: usize,
    #[arg(long, default_value_t = DEFAULT_FILL_RADIUS_MM)]
    fill_mm: f64,
    /// Output directory [default: <scan dir>/measurement].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also dump the reconstructed volume as raw channels plus a JSON sidecar.
    #[arg(long)]
    export_volume: bool,
}

#[derive(Args)]
struct PhantomArgs {
    /// Circular-arc profile subtending this angle (negative for flexion).
    #[arg(long, allow_negative_numbers = true, conflicts_with = "quintic")]
    arc: Option<f64>,
    /// Quintic depth profile c0,..,c5 in mm over the normalized scan extent.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, num_args = 1)]
    quintic: Option<Vec<f64>>,
    #[arg(long, default_value_t = 400)]
    frames: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tracker translation noise, standard deviation per axis.
    #[arg(long, default_value_t = 0.0)]
    noise_mm: f64,
    /// Tracker rotation noise, standard deviation of the rotation angle.
    #[arg(long, default_value_t = 0.0)]
    noise_deg: f64,
    #[arg(long, default_value_t = 1.5)]
    sigma_mm: f64,
    #[arg(long, default_value = "phantom")]
    subject: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AgreementArgs {
    /// CSV with columns label,status,left_deg,right_deg [default: bundled reference table].
    table: Option<PathBuf>,
    /// Drop a row by label before computing; repeatable.
    #[arg(long)]
    exclude: Vec<String>,
}

#[derive(Args)]
struct DiceArgs {
    a: PathBuf,
    b: PathBuf,
}

/// Failures split by exit code: bad input versus a pipeline stage giving up.
enum Failure {
    Input(String),
    Pipeline(String),
}

impl Failure {
    fn input(e: impl std::fmt::Display) -> Self {
        Failure::Input(e.to_string())
    }
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    fs::write(path, contents)
        .map_err(|e| Failure::Input(format!("writing {}: {e}", path.display())))
}

fn run_measure(args: MeasureArgs) -> Result<(), Failure> {
    let ds = load_dataset(&args.scan).map_err(Failure::input)?;
    let params = MeasureParams {
        voxel_mm: args.voxel_mm,
        margin_mm: args.margin_mm,
        band_mm: args.band_mm,
        eps_mm: args.eps_mm,
        min_pts: args.min_pts,
        fill_mm: args.fill_mm,
    };
    let m = measure(&ds, &params).map_err(|e| Failure::Pipeline(e.to_string()))?;

    let out = args.out.unwrap_or_else(|| {
        let dir = if args.scan.is_dir() {
            args.scan.clone()
        } else {
            args.scan.parent().unwrap_or(Path::new(".")).to_path_buf()
        };
        dir.join("measurement")
    });
    fs::create_dir_all(&out)
        .map_err(|e| Failure::Input(format!("creating {}: {e}", out.display())))?;

    let report = m.report(&ds.subject_id);
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    write_file(&out.join(MEASUREMENT_FILE), json + "\n")?;

    let mut csv = Vec::new();
    let both: Vec<_> = m
        .left
        .core_points
        .iter()
        .chain(&m.right.core_points)
        .cloned()
        .collect();
    write_csv(&mut csv, &both).map_err(Failure::input)?;
    write_file(&out.join(CORE_POINTS_FILE), csv)?;

    for side in [Side::Left, Side::Right] {
        let title = format!("{} {side} lamina", ds.subject_id);
        let plot = svg::render(m.side(side), &m.volume.geometry, &title);
        write_file(&out.join(format!("{side}.svg")), plot)?;
    }
    if args.export_volume {
        m.volume.export(&out, VOLUME_STEM).map_err(Failure::input)?;
    }

    for side in [Side::Left, Side::Right] {
        match m.side(side).result.curve.reported_angle_deg {
            Some(a) => println!("{side} {a:.3} deg"),
            None => println!("{side} n/a"),
        }
    }
    Ok(())
}

fn run_phantom(args: PhantomArgs) -> Result<(), Failure> {
    let curve_model = match (args.arc, args.quintic) {
        (Some(angle_deg), None) => CurveModel::CircularArc { angle_deg },
        (None, Some(c)) => {
            let coeffs: [f64; 6] = c.try_into().map_err(|c: Vec<f64>| {
                Failure::Input(format!("--quintic needs 6 coefficients, got {}", c.len()))
            })?;
            CurveModel::Quintic { coeffs }
        }
        _ => {
            return Err(Failure::Input(
                "one of --arc or --quintic is required".into(),
            ))
        }
    };
    let spec = PhantomSpec {
        curve_model,
        frame_count: args.frames,
        seed: args.seed,
        blob_sigma_mm: args.sigma_mm,
        pose_noise: PoseNoise {
            translation_sd_mm: args.noise_mm,
            rotation_sd_deg: args.noise_deg,
        },
        subject_id: args.subject,
        ..PhantomSpec::default()
    };
    let phantom = generate(&spec).map_err(|e| match e {
        PhantomError::InvalidSpec(_) => Failure::input(e),
        other => Failure::Pipeline(other.to_string()),
    })?;
    phantom.write(&args.out).map_err(Failure::input)?;
    println!("{}", phantom.truth.truth_angle_deg);
    Ok(())
}

fn run_agreement(args: AgreementArgs) -> Result<(), Failure> {
    let mut table = match &args.table {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            AnglePairTable::from_csv(file).map_err(Failure::input)?
        }
        None => AnglePairTable::reference(),
    };
    for label in &args.exclude {
        table = table.excluding(label).map_err(Failure::input)?;
    }
    let report = agreement(&table).map_err(Failure::input)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    Ok(())
}

fn run_dice(args: DiceArgs) -> Result<(), Failure> {
    let a = read_pgm(&args.a).map_err(Failure::input)?;
    let b = read_pgm(&args.b).map_err(Failure::input)?;
    println!("{}", dice(&a, &b).map_err(Failure::input)?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Measure(a) => run_measure(a),
        Command::Phantom(a) => run_phantom(a),
        Command::Agreement(a) => run_agreement(a),
        Command::Dice(a) => run_dice(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
