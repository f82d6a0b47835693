//! `dlr`: command-line front end for the delay-loop reservoir toolkit.
//!
//! Exit codes: 0 success, 2 input error, 3 artifact or hash mismatch.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use dlr_core::analysis::{average_gain, compute_foms, latency_model, loop_gain, FomInputs, StabilityParams};
use dlr_core::config::{mackey_reservoir, RunConfig};
use dlr_core::experiment::{evaluate, mackey_bench, quick_accuracy, sweep, train_eval};
use dlr_core::readout::{read_weights, write_weights};
use dlr_core::signal::format::{load_capture, load_dataset, save_capture, save_dataset};
use dlr_core::signal::{
    apply_normalization, corrupt, detect_bursts_with, extract_datapoint, magnitude, saliency_sweep, sub_burst,
    DetectorConfig, LabeledBurst, DEFAULT_BURST_LEN, DEFAULT_MIN_WINDOW, DEFAULT_PRE_ROLL, DEFAULT_SUB_BURST,
};
use dlr_core::synth::gen_dataset;
use dlr_core::{Dataset, Error, IqCapture, Normalization};

#[derive(Parser)]
#[command(name = "dlr", version, about = "Delay-loop reservoir computing toolkit")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (flat `key = value` file).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seeds named by the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Suppress the table on standard output.
    #[arg(long, global = true)]
    quiet: bool,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Args, Clone)]
struct ExtractArgs {
    /// Moving-average window of the burst detector.
    #[arg(long, default_value_t = 64)]
    window: usize,
    /// Detection threshold as a multiple of the noise floor.
    #[arg(long, default_value_t = 4.0)]
    threshold: f64,
    /// Samples kept per burst.
    #[arg(long, default_value_t = DEFAULT_BURST_LEN)]
    k: usize,
    /// Samples kept before the detected edge.
    #[arg(long, default_value_t = DEFAULT_PRE_ROLL)]
    pre_roll: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic emitter dataset (seed: synth.seed).
    Synth {
        /// Also write one DLRC capture per device.
        #[arg(long)]
        captures: bool,
        /// Apply the configured corruption to every burst.
        #[arg(long)]
        corrupt: bool,
    },
    /// Corrupt every detected burst of a capture in place (seed: corruption.seed).
    Corrupt {
        input: PathBuf,
        #[command(flatten)]
        extract: ExtractArgs,
    },
    /// Turn captures into a magnitude dataset; the i-th capture gets label i.
    Extract {
        #[arg(required = true)]
        captures: Vec<PathBuf>,
        #[command(flatten)]
        extract: ExtractArgs,
        /// Sub-burst start within the extracted burst.
        #[arg(long, default_value_t = DEFAULT_SUB_BURST.0)]
        start: usize,
        /// Sub-burst end (exclusive).
        #[arg(long, default_value_t = DEFAULT_SUB_BURST.1)]
        end: usize,
        /// none, per_datapoint or global.
        #[arg(long, default_value = "global")]
        normalization: Normalization,
        /// Leave datapoints unlabeled.
        #[arg(long)]
        unlabeled: bool,
    },
    /// Train a readout and evaluate it on the held-out split (seed: reservoir and split).
    Train { dataset: PathBuf },
    /// Apply stored weights to a dataset (seed: reservoir).
    Infer { dataset: PathBuf, weights: PathBuf },
    /// Evaluate every cell of the configured grid (seed: reservoir and split).
    Sweep { dataset: PathBuf },
    /// Accuracy map over sub-burst windows. Without captures, a synthetic set is built.
    Saliency {
        captures: Vec<PathBuf>,
        #[command(flatten)]
        extract: ExtractArgs,
        #[arg(long, default_value_t = 64)]
        grid_step: usize,
        #[arg(long, default_value_t = DEFAULT_MIN_WINDOW)]
        min_window: usize,
    },
    /// One-step Mackey-Glass prediction against persistence (seed: reservoir).
    Mackey {
        /// Also run the two-layer stack.
        #[arg(long)]
        compare_layers: bool,
    },
    /// Loop gain and periodically-opened average gain.
    Stability {
        #[arg(long)]
        gain: f64,
        #[arg(long, default_value_t = 1000)]
        traversals: u64,
    },
    /// Figures of merit and the training latency model.
    Fom {
        #[arg(long)]
        q: Option<u64>,
        #[arg(long)]
        n: Option<u64>,
        #[arg(long)]
        b: Option<u64>,
        #[arg(long)]
        m_rnn: Option<f64>,
        #[arg(long)]
        c_rnn: Option<f64>,
        #[arg(long)]
        delta_rnn: Option<f64>,
        #[arg(long)]
        delta_dlr: Option<f64>,
        #[arg(long)]
        delta_d: Option<f64>,
        #[arg(long)]
        f_bus: Option<f64>,
        #[arg(long)]
        delta_rr: Option<f64>,
    },
}

struct Ctx {
    config: RunConfig,
    config_given: bool,
    seed: Option<u64>,
    out: PathBuf,
    quiet: bool,
}

impl Ctx {
    fn print(&self, table: &str) {
        if !self.quiet {
            print!("{table}");
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    fn path(&self, name: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}

fn load_config(path: Option<&Path>) -> anyhow::Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn detector(a: &ExtractArgs) -> DetectorConfig {
    DetectorConfig {
        window: a.window,
        threshold_factor: a.threshold,
        merge_radius: a.k,
        ..DetectorConfig::default()
    }
}

/// Detected and extracted bursts of one capture, in capture order, with
/// their edge indices.
fn bursts_of(capture: &IqCapture, a: &ExtractArgs) -> anyhow::Result<Vec<(usize, Vec<dlr_core::Iq>)>> {
    let edges = detect_bursts_with(capture, &detector(a))?;
    Ok(edges
        .into_iter()
        .filter_map(|e| extract_datapoint(capture, e, a.k, a.pre_roll).ok().map(|b| (e, b)))
        .collect())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = load_config(cli.common.config.as_deref())?;
    let seed = cli.common.seed;
    if let Some(s) = seed {
        config.reservoir.seed = s;
        config.split_seed = s;
        config.synth.seed = s;
        if let Some(c) = config.corruption.as_mut() {
            c.seed = s;
        }
        config.mackey.series.seed = s;
    }
    let ctx = Ctx {
        config,
        config_given: cli.common.config.is_some(),
        seed,
        out: cli.common.out,
        quiet: cli.common.quiet,
    };
    match cli.command {
        Command::Synth { captures, corrupt } => cmd_synth(&ctx, captures, corrupt),
        Command::Corrupt { input, extract } => cmd_corrupt(&ctx, &input, &extract),
        Command::Extract {
            captures,
            extract,
            start,
            end,
            normalization,
            unlabeled,
        } => cmd_extract(&ctx, &captures, &extract, (start, end), normalization, unlabeled),
        Command::Train { dataset } => cmd_train(&ctx, &dataset),
        Command::Infer { dataset, weights } => cmd_infer(&ctx, &dataset, &weights),
        Command::Sweep { dataset } => cmd_sweep(&ctx, &dataset),
        Command::Saliency {
            captures,
            extract,
            grid_step,
            min_window,
        } => cmd_saliency(&ctx, &captures, &extract, grid_step, min_window),
        Command::Mackey { compare_layers } => cmd_mackey(&ctx, compare_layers),
        Command::Stability { gain, traversals } => cmd_stability(&ctx, gain, traversals),
        Command::Fom {
            q,
            n,
            b,
            m_rnn,
            c_rnn,
            delta_rnn,
            delta_dlr,
            delta_d,
            f_bus,
            delta_rr,
        } => {
            let mut i = FomInputs::reference();
            if let Some(v) = q {
                i.q = v;
            }
            if let Some(v) = n {
                i.n = v;
            }
            if let Some(v) = b {
                i.b = v;
            }
            i.m_dlr = (i.q * i.n) as f64;
            i.c_dlr = (i.b * i.n * i.n) as f64;
            i.m_rnn = m_rnn.unwrap_or(i.m_rnn);
            i.c_rnn = c_rnn.unwrap_or(i.c_rnn);
            i.delta_rnn = delta_rnn.unwrap_or(i.delta_rnn);
            i.delta_dlr = delta_dlr.unwrap_or(i.delta_dlr);
            i.delta_d = delta_d.unwrap_or(i.delta_d);
            i.f_bus = f_bus.unwrap_or(i.f_bus);
            i.delta_rr = delta_rr.unwrap_or(i.delta_rr);
            cmd_fom(&ctx, &i)
        }
    }
}

fn cmd_synth(ctx: &Ctx, keep_captures: bool, with_corruption: bool) -> anyhow::Result<()> {
    let cfg = &ctx.config;
    let corruption = if with_corruption {
        Some(cfg.corruption.unwrap_or_default())
    } else {
        None
    };
    let g = gen_dataset(&cfg.synth, corruption.as_ref(), keep_captures)?;
    save_dataset(ctx.path("dataset.dlrd")?, &g.dataset)?;
    for (i, c) in g.captures.iter().enumerate() {
        save_capture(ctx.path(&format!("capture_{i:03}.dlrc"))?, c)?;
    }
    let manifest = g.manifest.to_text();
    ctx.write("manifest.txt", &manifest)?;
    let mut table = format!("{:<20}{:>10}\n", "datapoints", g.dataset.len());
    table += &format!("{:<20}{:>10}\n", "classes", g.dataset.num_classes);
    table += &format!("{:<20}{:>10}\n", "length", g.dataset.length);
    for d in &g.manifest.devices {
        table += &format!(
            "device {:>3}  planted {:>5}  detected {:>5}  matched {:>5}\n",
            d.device_id, d.planted, d.detected, d.matched
        );
    }
    ctx.print(&table);
    Ok(())
}

fn cmd_corrupt(ctx: &Ctx, input: &Path, a: &ExtractArgs) -> anyhow::Result<()> {
    let spec = ctx.config.corruption.unwrap_or_default();
    let mut capture = load_capture(input).with_context(|| format!("reading {}", input.display()))?;
    let bursts = bursts_of(&capture, a)?;
    for (i, (edge, burst)) in bursts.iter().enumerate() {
        let noisy = corrupt(burst, &spec.for_burst(i as u64), capture.sample_rate_hz)?;
        let start = edge - a.pre_roll;
        capture.samples[start..start + noisy.len()].copy_from_slice(&noisy);
    }
    let path = ctx.path("corrupted.dlrc")?;
    save_capture(&path, &capture)?;
    let report = format!(
        "command = corrupt\nbursts = {}\njitter_max_hz = {}\nsnr_db_low = {}\nsnr_db_high = {}\nseed = {}\n",
        bursts.len(),
        spec.jitter_max_hz,
        spec.snr_db_range.0,
        spec.snr_db_range.1,
        spec.seed
    );
    ctx.write("corrupt_report.txt", &report)?;
    ctx.print(&format!("{:<20}{:>10}\n", "bursts corrupted", bursts.len()));
    Ok(())
}

fn cmd_extract(
    ctx: &Ctx,
    captures: &[PathBuf],
    a: &ExtractArgs,
    window: (usize, usize),
    normalization: Normalization,
    unlabeled: bool,
) -> anyhow::Result<()> {
    let mut points = Vec::new();
    let mut report = String::from("command = extract\n");
    for (label, path) in captures.iter().enumerate() {
        let capture = load_capture(path).with_context(|| format!("reading {}", path.display()))?;
        let bursts = bursts_of(&capture, a)?;
        report += &format!("capture.{label} = {} bursts {}\n", path.display(), bursts.len());
        for (edge, burst) in bursts {
            let mut d = magnitude(&sub_burst(&burst, window.0, window.1)?);
            d.label = (!unlabeled).then_some(label);
            d.provenance.capture_id = label as u64;
            d.provenance.burst_offset = edge as u64;
            points.push(d);
        }
    }
    if points.is_empty() {
        bail!(Error::Empty("detected bursts"));
    }
    let flagged = apply_normalization(&mut points, normalization);
    report += &format!("normalization = {}\nnormalization_flagged = {flagged}\n", normalization.name());
    let dataset = Dataset::new(points, if unlabeled { 0 } else { captures.len() })?;
    report += &format!("datapoints = {}\nlength = {}\n", dataset.len(), dataset.length);
    save_dataset(ctx.path("dataset.dlrd")?, &dataset)?;
    ctx.write("extract_report.txt", &report)?;
    ctx.print(&format!("{:<20}{:>10}\n", "datapoints", dataset.len()));
    Ok(())
}

fn cmd_train(ctx: &Ctx, dataset: &Path) -> anyhow::Result<()> {
    let ds = load_dataset(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let out = train_eval(&ds, &ctx.config)?;
    let mut f = fs::File::create(ctx.path("weights.dlrw")?)?;
    write_weights(&mut f, &out.weights)?;
    ctx.write("train_report.txt", out.report.to_kv())?;
    ctx.print(&out.report.to_table());
    Ok(())
}

fn cmd_infer(ctx: &Ctx, dataset: &Path, weights: &Path) -> anyhow::Result<()> {
    let ds = load_dataset(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let file = fs::File::open(weights).with_context(|| format!("opening {}", weights.display()))?;
    let w = read_weights(std::io::BufReader::new(file))?;
    let report = evaluate(&ds, &w, &ctx.config)?;
    ctx.write("infer_report.txt", report.to_kv())?;
    ctx.print(&report.to_table());
    Ok(())
}

fn cmd_sweep(ctx: &Ctx, dataset: &Path) -> anyhow::Result<()> {
    let ds = load_dataset(dataset).with_context(|| format!("reading {}", dataset.display()))?;
    let report = sweep(&ds, &ctx.config)?;
    ctx.write("sweep_report.txt", report.to_kv())?;
    ctx.print(&report.to_table());
    Ok(())
}

fn cmd_saliency(
    ctx: &Ctx,
    captures: &[PathBuf],
    a: &ExtractArgs,
    grid_step: usize,
    min_window: usize,
) -> anyhow::Result<()> {
    let loaded: Vec<IqCapture> = if captures.is_empty() {
        gen_dataset(&ctx.config.synth, None, true)?.captures
    } else {
        captures.iter().map(load_capture).collect::<Result<_, _>>()?
    };
    let mut bursts = Vec::new();
    for (label, capture) in loaded.iter().enumerate() {
        for (_, samples) in bursts_of(capture, a)? {
            bursts.push(LabeledBurst { samples, label });
        }
    }
    let cfg = &ctx.config;
    let map = saliency_sweep(&bursts, grid_step, min_window, |points| {
        quick_accuracy(points, &cfg.reservoir, cfg.train_fraction, cfg.split_seed)
    })?;
    let (bs, be, bacc) = map.best;
    let mut kv = format!(
        "command = saliency\nbursts = {}\ngrid_step = {grid_step}\nmin_window = {min_window}\nbest = {bs} {be} {bacc:.6}\n",
        bursts.len()
    );
    for (s, e, acc) in map.cells() {
        kv += &format!("cell.{s}.{e} = {acc:.6}\n");
    }
    ctx.write("saliency_report.txt", &kv)?;
    let mut table = format!("{:>6} {:>6} {:>9}\n", "start", "end", "accuracy");
    for (s, e, acc) in map.cells() {
        table += &format!("{s:>6} {e:>6} {acc:>9.4}\n");
    }
    table += &format!("best window [{bs}, {be}) accuracy {bacc:.4}\n");
    ctx.print(&table);
    Ok(())
}

fn cmd_mackey(ctx: &Ctx, compare_layers: bool) -> anyhow::Result<()> {
    let mut bench = ctx.config.mackey.clone();
    bench.compare_layers |= compare_layers;
    // Without a config file the regression defaults apply.
    let reservoir = if ctx.config_given {
        ctx.config.reservoir.clone()
    } else {
        let mut r = mackey_reservoir();
        if let Some(s) = ctx.seed {
            r.seed = s;
        }
        r
    };
    let report = mackey_bench(&bench, &reservoir)?;
    ctx.write("mackey_report.txt", report.to_kv())?;
    ctx.print(&report.to_table());
    Ok(())
}

fn cmd_stability(ctx: &Ctx, gain: f64, traversals: u64) -> anyhow::Result<()> {
    let (g, stable) = loop_gain(&StabilityParams {
        one_pass_gain: gain,
        traversals,
    })?;
    let (g_ave, stable_ave) = average_gain(gain, traversals)?;
    let kv = format!(
        "command = stability\none_pass_gain = {gain}\ntraversals = {traversals}\nloop_gain = {g:e}\nloop_stable = {stable}\naverage_gain = {g_ave:.12}\naverage_stable = {stable_ave}\n"
    );
    ctx.write("stability_report.txt", &kv)?;
    ctx.print(&format!(
        "{:<16}{:>16}{:>10}\n{:<16}{:>16.6e}{:>10}\n{:<16}{:>16.6}{:>10}\n",
        "quantity", "value", "stable", "loop_gain", g, stable, "average_gain", g_ave, stable_ave
    ));
    Ok(())
}

fn cmd_fom(ctx: &Ctx, inputs: &FomInputs) -> anyhow::Result<()> {
    let table = compute_foms(inputs)?;
    let lat = latency_model(inputs)?;
    let mut text = table.to_text();
    text += &format!(
        "{:<14} {:e}\n{:<14} {:e}\n{:<14} {:e}\n{:<14} {:e}\n",
        "delta_rc_s", lat.state_collection, "memory_read_s", lat.memory_read, "delta_dlr1_s", lat.loop_total,
        "delta_dlr_s", lat.training_total
    );
    let kv: String = text
        .lines()
        .map(|l| {
            let (k, v) = l.split_once(' ').unwrap_or((l, ""));
            format!("{k} = {}\n", v.trim())
        })
        .collect();
    ctx.write("fom_report.txt", format!("command = fom\n{kv}"))?;
    ctx.print(&text);
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(Error::ArtifactMismatch(_)) = cause.downcast_ref::<Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.common.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
