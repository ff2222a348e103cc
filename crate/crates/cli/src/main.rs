use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cvqss_core::keyrate::{self, ModulationPolicy};
use cvqss_core::montecarlo::SimulationConfig;
use cvqss_core::optimize::{self, HonestPolicy};
use cvqss_core::postprocess::{self, qss_round, Abort};
use cvqss_harness::batch_csv::{self, BatchMeta};
use cvqss_harness::config::Config;
use cvqss_harness::sweep::{self, SweepSpec};
use cvqss_harness::{figures, plot, report, simulate_chunked, CliError};

#[derive(Parser)]
#[command(name = "cvqss", version, about = "Sequential continuous-variable quantum secret sharing toolkit")]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for simulation and disclosure sampling (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true, env = "CVQSS_THREADS")]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Key rate at one operating point; V_A is optimized unless given.
    Keyrate {
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        length_km: Option<f64>,
        #[arg(long)]
        va: Option<f64>,
    },
    /// Optimize the shared modulation variance.
    Optimize {
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        length_km: Option<f64>,
        /// Optimize a single player's rate instead of the minimum.
        #[arg(long)]
        honest: Option<usize>,
    },
    /// Rate-versus-distance sweep to CSV, with a gnuplot script alongside.
    Sweep {
        /// Run a built-in preset instead of the config's sweep section.
        #[arg(long)]
        preset: Option<String>,
    },
    /// Monte-Carlo batch to CSV.
    Simulate {
        #[arg(long)]
        players: Option<usize>,
        #[arg(long)]
        length_km: Option<f64>,
        #[arg(long)]
        va: Option<f64>,
        #[arg(long)]
        pulses: Option<usize>,
    },
    /// Post-process a batch CSV into an empirical key-rate report.
    Estimate {
        /// Batch CSV produced by `simulate`.
        #[arg(long)]
        input: PathBuf,
        /// Modulation variance the batch was prepared with.
        #[arg(long)]
        va: Option<f64>,
    },
    /// Run the built-in presets: CSV and plot script for each.
    Figures,
    /// XOR a message with n keys: E = M ⊕ K₁ ⊕ … ⊕ K_n.
    Share {
        #[arg(long)]
        message: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        keys: Vec<PathBuf>,
    },
    /// Undo `share` with the same keys.
    Recover {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        keys: Vec<PathBuf>,
    },
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(CliError::io(path))
}

fn write_out(out: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, bytes).map_err(CliError::io(p)),
        None => io::stdout().write_all(bytes).map_err(CliError::io("<stdout>")),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(CliError::io(path))
}

fn layout_override(cfg: &mut Config, players: Option<usize>, length_km: Option<f64>) -> Result<(), CliError> {
    use cvqss_harness::config::LayoutConfig;
    if players.is_none() && length_km.is_none() {
        return Ok(());
    }
    let (n0, l0) = match &cfg.layout {
        LayoutConfig::Equal { players, length_km } => (*players, *length_km),
        LayoutConfig::Explicit { .. } => {
            return Err(CliError::config("--players/--length-km need an equal-spacing layout"));
        }
    };
    cfg.layout = LayoutConfig::Equal { players: players.unwrap_or(n0), length_km: length_km.unwrap_or(l0) };
    Ok(())
}

fn keyrate_cmd(cfg: &Config, out: Option<&Path>) -> Result<(), CliError> {
    let layout = cfg.layout.build()?;
    let mut text = String::new();
    let v_a = match cfg.v_a {
        Some(v) => v,
        None => {
            let o = optimize::optimize_va(&layout, &cfg.params, &cfg.optimizer, HonestPolicy::All)
                .map_err(CliError::config)?;
            text.push_str(&report::optimization_report(&o));
            o.v_a
        }
    };
    let r = keyrate::qss_rate(&layout, &cfg.params, &ModulationPolicy::Shared(v_a)).map_err(CliError::config)?;
    text.push_str(&report::key_rate_report(&r));
    write_out(out, text.as_bytes())?;
    if r.rate <= 0.0 {
        return Err(CliError::NoKey(format!("R = {} (limiting player {})", r.rate, r.limiting_player)));
    }
    Ok(())
}

fn optimize_cmd(cfg: &Config, honest: Option<usize>, out: Option<&Path>) -> Result<(), CliError> {
    let layout = cfg.layout.build()?;
    let policy = honest.map_or(HonestPolicy::All, HonestPolicy::Player);
    let o = optimize::optimize_va(&layout, &cfg.params, &cfg.optimizer, policy).map_err(CliError::config)?;
    let r = keyrate::qss_rate(&layout, &cfg.params, &ModulationPolicy::Shared(o.v_a)).map_err(CliError::config)?;
    let text = report::optimization_report(&o) + &report::key_rate_report(&r);
    write_out(out, text.as_bytes())
}

fn sweep_cmd(cfg: &Config, preset: Option<&str>, out: Option<&Path>) -> Result<(), CliError> {
    let (spec, title) = match preset {
        Some(name) => {
            let p = figures::find(name).ok_or_else(|| CliError::config(format!("unknown preset {name:?}")))?;
            (p.spec, p.title.to_string())
        }
        None => (
            SweepSpec {
                lengths: cfg.sweep.lengths.values()?,
                players: cfg.sweep.players.clone(),
                deltas: cfg.sweep.deltas.clone(),
                params: cfg.params,
                optimizer: cfg.optimizer,
                honest: cfg.sweep.honest,
            },
            "Key rate vs distance".to_string(),
        ),
    };
    let rows = sweep::run_sweep(&spec)?;
    let mut buf = Vec::new();
    sweep::write_rows(&rows, &mut buf).map_err(CliError::config)?;
    write_out(out, &buf)?;
    if let Some(path) = out {
        let text = String::from_utf8(buf).expect("CSV writer emits UTF-8");
        let script = plot::emit_plot_script(&text, &title).map_err(CliError::config)?;
        let gp = path.with_extension("gp");
        fs::write(&gp, script).map_err(CliError::io(&gp))?;
    }
    Ok(())
}

fn simulate_cmd(cfg: &Config, seed: u64, out: Option<&Path>) -> Result<(), CliError> {
    let layout = cfg.layout.build()?;
    let v_a = cfg.v_a.ok_or_else(|| CliError::config("simulate needs a modulation variance (--va or v_a)"))?;
    let sim = SimulationConfig { seed, pulses: cfg.simulation.pulses, v_a, record_injected_noise: false };
    let batch = simulate_chunked(&layout, &cfg.params, &sim, cfg.simulation.chunk).map_err(CliError::config)?;
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::Io { path: out.map_or("<stdout>".into(), Path::to_path_buf), source },
        other => CliError::Config(format!("{other:?}")),
    };
    match out {
        Some(p) => batch_csv::write_batch(&batch, create(p)?).map_err(csv_err),
        None => batch_csv::write_batch(&batch, io::stdout().lock()).map_err(csv_err),
    }
}

fn estimate_cmd(cfg: &Config, seed: u64, input: &Path, out: Option<&Path>) -> Result<(), CliError> {
    let layout = cfg.layout.build()?;
    let v_a = cfg.v_a.ok_or_else(|| CliError::config("estimate needs the calibrated modulation variance (--va or v_a)"))?;
    let file = File::open(input).map_err(CliError::io(input))?;
    let meta = BatchMeta { seed, v_a, n0: cfg.params.n0, eta_d: cfg.params.eta_d };
    let batch = batch_csv::read_batch(BufReader::new(file), meta).map_err(CliError::config)?;
    let round = qss_round(&batch, &cfg.params, &layout, &cfg.postprocess)?;
    let text = report::round_report(&round);
    match out {
        Some(p) => {
            let mut w = create(p)?;
            report::write_round_csv(&round, &mut w).map_err(CliError::config)?;
            w.flush().map_err(CliError::io(p))?;
            io::stdout().write_all(text.as_bytes()).map_err(CliError::io("<stdout>"))?;
        }
        None => write_out(None, text.as_bytes())?,
    }
    if let Some(Abort::NoKey { player, rate }) = round.abort {
        return Err(CliError::NoKey(format!("empirical rate {rate} for player {player}")));
    }
    Ok(())
}

fn xor_cmd(data: &Path, keys: &[PathBuf], out: Option<&Path>, forward: bool) -> Result<(), CliError> {
    let data = read(data)?;
    let keys = keys.iter().map(|k| read(k)).collect::<Result<Vec<_>, _>>()?;
    let res = if forward { postprocess::share(&data, &keys) } else { postprocess::recover(&data, &keys) };
    write_out(out, &res.map_err(CliError::config)?)
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().map_err(CliError::config)?;
    }
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = cli.seed.unwrap_or(cfg.simulation.seed);
    let out = cli.out.as_deref();
    match cli.command {
        Command::Keyrate { players, length_km, va } => {
            layout_override(&mut cfg, players, length_km)?;
            cfg.v_a = va.or(cfg.v_a);
            keyrate_cmd(&cfg, out)
        }
        Command::Optimize { players, length_km, honest } => {
            layout_override(&mut cfg, players, length_km)?;
            optimize_cmd(&cfg, honest, out)
        }
        Command::Sweep { preset } => sweep_cmd(&cfg, preset.as_deref(), out),
        Command::Simulate { players, length_km, va, pulses } => {
            layout_override(&mut cfg, players, length_km)?;
            cfg.v_a = va.or(cfg.v_a);
            if let Some(n) = pulses {
                cfg.simulation.pulses = n;
            }
            simulate_cmd(&cfg, seed, out)
        }
        Command::Estimate { input, va } => {
            cfg.v_a = va.or(cfg.v_a);
            estimate_cmd(&cfg, seed, &input, out)
        }
        Command::Figures => figures::write_all(out.unwrap_or(Path::new("figures"))),
        Command::Share { message, keys } => xor_cmd(&message, &keys, out, true),
        Command::Recover { input, keys } => xor_cmd(&input, &keys, out, false),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cvqss: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
