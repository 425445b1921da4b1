//! `dualpol` command-line front end.
//!
//! Exit status: 0 on success, 1 on usage errors, 2 on data errors.

// `!(x > 0.0)` checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use dualpol::detector::{
    aggregate, calibrate, classify, parse_decisions, threshold_at, write_decisions, ThresholdCurve,
    Verdict, DEFAULT_AGGREGATION_RATIO, DEFAULT_BIN_WIDTH_DEG,
};
use dualpol::eval::{los_only, score, synthesize, LabeledEpoch, SynthesisModel};
use dualpol::obs::{
    cn0_difference, merge_channels, parse_observations, write_observations, ObservationRecord,
};
use dualpol::raytracer::{
    label_condition, load_scene, parse_path_reports, trace_paths, write_path_reports, PathReport,
    DEFAULT_RX_HEIGHT_M, MAX_ORDER,
};
use dualpol::satgeo::{
    annotate_elevations, enu_direction, parse_yuma, satellite_state, Almanac, GeodeticPosition,
    DEFAULT_LEAP_SECONDS,
};
use nalgebra::Vector3;

use crate::io::{read_bytes, read_text, require_inputs, require_outputs, write_atomic};

#[derive(Debug, Parser)]
#[command(
    name = "dualpol",
    version,
    about = "GPS multipath detection from dual-polarized C/N0"
)]
struct Cli {
    /// GPS-UTC leap seconds used to convert Unix epochs to GPS time.
    #[arg(long, global = true, env = "DUALPOL_LEAP_SECONDS", default_value_t = DEFAULT_LEAP_SECONDS)]
    leap_seconds: i64,

    /// Log filter for standard error (error, warn, info, debug, trace).
    #[arg(long, global = true, env = "DUALPOL_LOG", default_value = "info")]
    log_level: String,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Join RHCP and LHCP channel logs into the merged observation CSV.
    Merge(MergeArgs),
    /// Build an elevation-dependent threshold curve from low-multipath data.
    Calibrate(CalibrateArgs),
    /// Classify observations against a threshold curve.
    Detect(DetectArgs),
    /// Ray-trace LOS/NLOS labels for every satellite above the horizon.
    Trace(TraceArgs),
    /// Synthesize dual-channel observations from ray-traced labels.
    Synth(SynthArgs),
    /// Score detector decisions against ray-traced labels.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct MergeArgs {
    /// Channel log (`epoch_unix_s,prn,channel,cn0_dbhz`), usually the RHCP one.
    #[arg(long)]
    rhcp: PathBuf,
    /// Second channel log, usually the LHCP one.
    #[arg(long)]
    lhcp: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Receiver position, needed when elevations come from an almanac.
#[derive(Debug, Args)]
struct ReceiverArgs {
    /// YUMA almanac; without it the observation CSV must carry `elevation_deg`.
    #[arg(long, requires_all = ["rx_lat", "rx_lon"])]
    almanac: Option<PathBuf>,
    /// Receiver latitude, degrees.
    #[arg(long, allow_negative_numbers = true)]
    rx_lat: Option<f64>,
    /// Receiver longitude, degrees.
    #[arg(long, allow_negative_numbers = true)]
    rx_lon: Option<f64>,
    /// Receiver ellipsoidal height, meters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rx_height: f64,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Merged observation CSV from a low-multipath site.
    #[arg(long)]
    obs: PathBuf,
    #[command(flatten)]
    receiver: ReceiverArgs,
    /// Elevation bin width, degrees.
    #[arg(long, default_value_t = DEFAULT_BIN_WIDTH_DEG)]
    bin_width: f64,
    /// Lowest elevation used for calibration, degrees.
    #[arg(long, default_value_t = 10.0, allow_negative_numbers = true)]
    min_el: f64,
    /// Elevation above which records are not used, degrees.
    #[arg(long, default_value_t = 35.0, allow_negative_numbers = true)]
    max_el: f64,
    /// Threshold curve JSON.
    #[arg(long)]
    out: PathBuf,
    /// Per-record `elevation_deg,diff_db,threshold_db` rows for plotting.
    #[arg(long)]
    plot_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    obs: PathBuf,
    /// Threshold curve JSON written by `calibrate`.
    #[arg(long)]
    curve: PathBuf,
    #[command(flatten)]
    receiver: ReceiverArgs,
    /// Decisions CSV.
    #[arg(long)]
    out: PathBuf,
    /// Also write OUT_OF_RANGE rows.
    #[arg(long)]
    include_out_of_range: bool,
    /// Per-satellite verdict JSON.
    #[arg(long)]
    verdicts: Option<PathBuf>,
    /// A satellite is flagged when its multipath fraction exceeds this.
    #[arg(long, default_value_t = DEFAULT_AGGREGATION_RATIO)]
    ratio: f64,
}

#[derive(Debug, Args)]
struct TraceArgs {
    /// Scene JSON with extruded building footprints.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    almanac: PathBuf,
    /// `START:END:STEP` (inclusive, seconds) or a comma-separated list of Unix epochs.
    #[arg(long)]
    epochs: String,
    /// Receiver east offset from the scene origin, meters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rx_east: f64,
    /// Receiver north offset from the scene origin, meters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    rx_north: f64,
    /// Antenna height above local ground, meters.
    #[arg(long, default_value_t = DEFAULT_RX_HEIGHT_M)]
    rx_above_ground: f64,
    /// Ellipsoidal height of the scene ground, meters.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    ground_height: f64,
    #[arg(long, default_value_t = MAX_ORDER)]
    max_order: usize,
    /// Path report JSON.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Path report JSON written by `trace`.
    #[arg(long)]
    labels: PathBuf,
    /// Synthesis model JSON; flags below override its fields.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// ΔC/N0 drop applied to labels with reflected paths, dB.
    #[arg(long)]
    penalty: Option<f64>,
    /// Gaussian noise standard deviation, dB.
    #[arg(long)]
    sigma: Option<f64>,
    /// Keep only LOS_ONLY records, the low-multipath calibration set.
    #[arg(long)]
    los_only: bool,
    /// Merged observation CSV with elevations.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    /// Decisions CSV written by `detect`.
    #[arg(long)]
    decisions: PathBuf,
    /// Path report JSON written by `trace`.
    #[arg(long)]
    labels: PathBuf,
    /// Report JSON; the table always goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let leap = cli.leap_seconds;
    match cli.command {
        Command::Merge(a) => merge(a),
        Command::Calibrate(a) => run_calibrate(a, leap),
        Command::Detect(a) => detect(a, leap),
        Command::Trace(a) => trace(a, leap),
        Command::Synth(a) => synth(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn merge(a: MergeArgs) -> Result<()> {
    require_inputs(&[&a.rhcp, &a.lhcp])?;
    require_outputs(&[&a.out])?;
    let records = merge_channels(&read_bytes(&a.rhcp)?, &read_bytes(&a.lhcp)?)?;
    let complete = records.iter().filter(|r| r.is_complete()).count();
    log::info!(
        "merge: {} keys, {} with both channels",
        records.len(),
        complete
    );
    write_atomic(&a.out, &write_observations(&records))
}

impl ReceiverArgs {
    fn inputs(&self) -> Vec<&Path> {
        self.almanac.iter().map(PathBuf::as_path).collect()
    }

    /// Observations with elevations, from the almanac when one is given.
    fn elevations(&self, obs: &Path, leap: i64) -> Result<Vec<ObservationRecord>> {
        let parsed = parse_observations(&read_bytes(obs)?)
            .with_context(|| format!("reading {}", obs.display()))?;
        if parsed.dropped > 0 {
            log::warn!(
                "{}: dropped {} incomplete record(s)",
                obs.display(),
                parsed.dropped
            );
        }
        let Some(almanac_path) = &self.almanac else {
            return Ok(parsed.records);
        };
        let rx = GeodeticPosition::new(
            self.rx_lat.expect("clap requires rx-lat"),
            self.rx_lon.expect("clap requires rx-lon"),
            self.rx_height,
        )?;
        let almanac = load_almanac(almanac_path)?;
        Ok(annotate_elevations(&parsed.records, &almanac, &rx, leap)?)
    }
}

fn load_almanac(path: &Path) -> Result<Almanac> {
    let entries =
        parse_yuma(&read_text(path)?).with_context(|| format!("reading {}", path.display()))?;
    log::info!("{}: {} almanac entries", path.display(), entries.len());
    Ok(Almanac::new(entries))
}

fn run_calibrate(a: CalibrateArgs, leap: i64) -> Result<()> {
    if !(a.min_el < a.max_el) {
        bail!("--min-el {} must be below --max-el {}", a.min_el, a.max_el);
    }
    let mut inputs = vec![a.obs.as_path()];
    inputs.extend(a.receiver.inputs());
    require_inputs(&inputs)?;
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.plot_csv.as_deref());
    require_outputs(&outputs)?;

    let records = a.receiver.elevations(&a.obs, leap)?;
    let mut window = Vec::with_capacity(records.len());
    for r in &records {
        let el = r.elevation_deg.with_context(|| {
            format!(
                "epoch {}, PRN {}: no elevation; pass --almanac or add an elevation_deg column",
                r.epoch, r.prn
            )
        })?;
        if el >= a.min_el && el < a.max_el {
            window.push(*r);
        }
    }
    log::info!(
        "calibrate: {} of {} records within [{}, {}) deg",
        window.len(),
        records.len(),
        a.min_el,
        a.max_el
    );
    let curve = calibrate(&window, a.bin_width)?;
    log::info!(
        "calibrate: {} bins over {:?} deg",
        curve.bins.len(),
        curve.valid_range
    );
    write_atomic(&a.out, &curve.to_json())?;

    if let Some(plot) = &a.plot_csv {
        let mut out = String::from("epoch,prn,elevation_deg,diff_db,threshold_db\n");
        for r in &window {
            let el = r.elevation_deg.unwrap_or_default();
            let threshold = threshold_at(&curve, el)?;
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.epoch,
                r.prn,
                el,
                cn0_difference(r)?.value(),
                threshold.value_db
            ));
        }
        write_atomic(plot, &out)?;
    }
    Ok(())
}

fn detect(a: DetectArgs, leap: i64) -> Result<()> {
    let mut inputs = vec![a.obs.as_path(), a.curve.as_path()];
    inputs.extend(a.receiver.inputs());
    require_inputs(&inputs)?;
    let mut outputs = vec![a.out.as_path()];
    outputs.extend(a.verdicts.as_deref());
    require_outputs(&outputs)?;

    let curve = ThresholdCurve::from_json(&read_text(&a.curve)?)
        .with_context(|| format!("reading {}", a.curve.display()))?;
    let records = a.receiver.elevations(&a.obs, leap)?;
    let decisions = records
        .iter()
        .map(|r| classify(r, &curve))
        .collect::<Result<Vec<_>, _>>()?;
    let out_of_range = decisions
        .iter()
        .filter(|d| d.verdict == Verdict::OutOfRange)
        .count();
    let multipath = decisions
        .iter()
        .filter(|d| d.verdict == Verdict::Multipath)
        .count();
    log::info!(
        "detect: {} records, {multipath} multipath, {out_of_range} outside the calibrated range",
        decisions.len()
    );
    let written: Vec<_> = decisions
        .iter()
        .filter(|d| a.include_out_of_range || d.verdict != Verdict::OutOfRange)
        .cloned()
        .collect();
    write_atomic(&a.out, &write_decisions(&written))?;

    if let Some(path) = &a.verdicts {
        let verdicts = aggregate(&decisions, a.ratio)?;
        let mut json = serde_json::to_string_pretty(&verdicts)?;
        json.push('\n');
        write_atomic(path, &json)?;
    }
    Ok(())
}

fn parse_epochs(spec: &str) -> Result<Vec<i64>> {
    let parse = |s: &str| -> Result<i64> {
        s.trim()
            .parse()
            .with_context(|| format!("bad epoch `{s}` in --epochs"))
    };
    let parts: Vec<&str> = spec.split(':').collect();
    let epochs = match parts.as_slice() {
        [start, end, step] => {
            let (start, end, step) = (parse(start)?, parse(end)?, parse(step)?);
            if step <= 0 || end < start {
                bail!("--epochs {spec}: need START <= END and STEP > 0");
            }
            (start..=end).step_by(step as usize).collect()
        }
        [_] => spec.split(',').map(parse).collect::<Result<Vec<_>>>()?,
        _ => bail!("--epochs {spec}: expected START:END:STEP or a comma-separated list"),
    };
    if epochs.is_empty() {
        bail!("--epochs {spec}: no epochs");
    }
    Ok(epochs)
}

fn trace(a: TraceArgs, leap: i64) -> Result<()> {
    require_inputs(&[&a.scene, &a.almanac])?;
    require_outputs(&[&a.out])?;
    let mut epochs = parse_epochs(&a.epochs)?;
    epochs.sort_unstable();
    epochs.dedup();
    if a.max_order > MAX_ORDER {
        bail!(
            "--max-order must be at most {MAX_ORDER}, got {}",
            a.max_order
        );
    }

    let scene = load_scene(&read_bytes(&a.scene)?)
        .with_context(|| format!("reading {}", a.scene.display()))?;
    let almanac = load_almanac(&a.almanac)?;
    let rx_geo = GeodeticPosition::new(
        scene.spec.origin.lat,
        scene.spec.origin.lon,
        a.ground_height,
    )?;
    let rx = Vector3::new(a.rx_east, a.rx_north, a.rx_above_ground);
    log::info!(
        "trace: {} faces, {} epochs, {} satellites",
        scene.faces.len(),
        epochs.len(),
        almanac.len()
    );

    let mut reports = Vec::new();
    for &epoch in &epochs {
        for entry in almanac.iter() {
            let state = satellite_state(entry, epoch, &rx_geo, leap)?;
            if state.elevation_deg <= 0.0 {
                continue;
            }
            let dir = enu_direction(state.elevation_deg, state.azimuth_deg);
            let paths = trace_paths(&scene, &rx, &dir, a.max_order)?;
            reports.push(PathReport {
                epoch,
                prn: entry.prn,
                elevation_deg: state.elevation_deg,
                azimuth_deg: state.azimuth_deg,
                label: label_condition(entry.prn, &paths),
                paths,
            });
        }
    }
    let multipath = reports
        .iter()
        .filter(|r| r.label.label.is_multipath())
        .count();
    log::info!(
        "trace: {} visible (epoch, prn) pairs, {multipath} with reflected paths",
        reports.len()
    );
    write_atomic(&a.out, &write_path_reports(&reports))
}

fn load_labels(path: &Path) -> Result<Vec<LabeledEpoch>> {
    let reports = parse_path_reports(&read_text(path)?)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(reports.iter().map(LabeledEpoch::from).collect())
}

fn synth(a: SynthArgs) -> Result<()> {
    let mut inputs = vec![a.labels.as_path()];
    inputs.extend(a.model.as_deref());
    require_inputs(&inputs)?;
    require_outputs(&[&a.out])?;

    let mut model = match &a.model {
        Some(path) => serde_json::from_str(&read_text(path)?)
            .with_context(|| format!("reading {}", path.display()))?,
        None => SynthesisModel::default(),
    };
    if let Some(seed) = a.seed {
        model.seed = seed;
    }
    if let Some(penalty) = a.penalty {
        model.multipath_diff_penalty_db = penalty;
    }
    if let Some(sigma) = a.sigma {
        model.noise_sigma_db = sigma;
    }
    let labels = load_labels(&a.labels)?;
    let mut records = synthesize(&labels, &model)?;
    if a.los_only {
        records = los_only(&records, &labels);
    }
    log::info!(
        "synth: {} records from {} labels (seed {})",
        records.len(),
        labels.len(),
        model.seed
    );
    write_atomic(&a.out, &write_observations(&records))
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    require_inputs(&[&a.decisions, &a.labels])?;
    if let Some(out) = &a.out {
        require_outputs(&[out])?;
    }
    let decisions = parse_decisions(&read_text(&a.decisions)?)
        .with_context(|| format!("reading {}", a.decisions.display()))?;
    let labels = load_labels(&a.labels)?;
    let report = score(&decisions, &labels)?;
    print!("{report}");
    if let Some(out) = &a.out {
        write_atomic(out, &report.to_json())?;
    }
    Ok(())
}
