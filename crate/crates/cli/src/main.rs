use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use qubit_readout::classify::Classification;
use qubit_readout::estimate::{derive_lifetimes, fit_decay_curves};
use qubit_readout::harness::{
    compare_methods, evaluate, optimize_threshold, pi_pulse_sweep, run_sweep, ErrorReport,
    MethodSpec, PairedEnsembles, RunConfig, SweepRow, ThresholdFamily, TotalHistograms,
};
use qubit_readout::io::{self, fmt6, FitDocument};
use qubit_readout::table::ObservationTable;
use qubit_readout::{Error, IonState, Trajectory};
use serde::Serialize;

#[derive(Parser)]
#[command(
    name = "qubit-readout",
    version,
    about = "Simulate and discriminate fluorescence readout records"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate bright and dark ensembles and write them as CSV.
    Simulate(Common),
    /// Classify an ensemble CSV, or a freshly simulated ensemble.
    Classify {
        #[command(flatten)]
        common: Common,
        /// Ensemble CSV; simulated from the config when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit the decay curves of an ensemble CSV and derive lifetimes.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
    },
    /// Error-rate sweeps over measurement time (and the π-pulse sweep).
    Sweep(Common),
    /// Threshold vs single-change vs hidden-Markov comparison.
    Compare(Common),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

/// Failure with its exit status: 2 for configuration, 3 for input data.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Data { .. }
            | Error::EmptyEnsemble
            | Error::EmptySequence
            | Error::DegenerateFit(_)
            | Error::NoConvergence { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        };
        Failure {
            code,
            error: e.into(),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(error: anyhow::Error) -> Self {
        Failure { code: 1, error }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn config_failure(error: anyhow::Error) -> Failure {
    Failure { code: 2, error }
}

fn data_failure(error: anyhow::Error) -> Failure {
    Failure { code: 3, error }
}

struct Run {
    command: &'static str,
    config: RunConfig,
    out_dir: PathBuf,
    format: Format,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    outputs: &'a [String],
    config: &'a RunConfig,
}

impl Run {
    fn start(command: &'static str, common: &Common) -> CliResult<Self> {
        if let Some(n) = common.threads {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| config_failure(anyhow::anyhow!("cannot start {n} threads: {e}")))?;
        }
        let text = fs::read_to_string(&common.config)
            .with_context(|| format!("reading config {}", common.config.display()))
            .map_err(config_failure)?;
        let mut config = RunConfig::from_toml(&text).map_err(|e| {
            Failure::from(e).with_context(format!("config {}", common.config.display()))
        })?;
        if let Some(seed) = common.seed {
            config.seed = seed;
        }
        fs::create_dir_all(&common.out_dir)
            .with_context(|| format!("creating {}", common.out_dir.display()))?;
        Ok(Run {
            command,
            config,
            out_dir: common.out_dir.clone(),
            format: common.format,
            outputs: Vec::new(),
        })
    }

    fn create(&mut self, name: &str) -> CliResult<BufWriter<File>> {
        let path = self.out_dir.join(name);
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        self.outputs.push(name.to_string());
        Ok(BufWriter::new(f))
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> CliResult<()> {
        let w = self.create(name)?;
        serde_json::to_writer_pretty(w, value).context("writing JSON")?;
        Ok(())
    }

    fn finish(self) -> CliResult<()> {
        let manifest = Manifest {
            tool: "qubit-readout",
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            seed: self.config.seed,
            outputs: &self.outputs,
            config: &self.config,
        };
        let path = self.out_dir.join("manifest.json");
        let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        serde_json::to_writer_pretty(BufWriter::new(f), &manifest).context("writing manifest")?;
        Ok(())
    }
}

impl Failure {
    fn with_context(self, c: String) -> Self {
        Failure {
            code: self.code,
            error: self.error.context(c),
        }
    }
}

fn simulate_pair(cfg: &RunConfig) -> CliResult<PairedEnsembles> {
    let s = cfg.simulate_section()?;
    Ok(PairedEnsembles::simulate(
        cfg.params, s.t_b_ms, s.n_trials, cfg.seed,
    )?)
}

fn read_input(path: &Path, cfg: &RunConfig) -> CliResult<Vec<Trajectory>> {
    let f = File::open(path)
        .with_context(|| format!("opening {}", path.display()))
        .map_err(data_failure)?;
    io::read_ensemble_csv(f, cfg.params.t_sub_ms)
        .map_err(|e| Failure::from(e).with_context(format!("input {}", path.display())))
}

fn cmd_simulate(common: &Common) -> CliResult<()> {
    let mut run = Run::start("simulate", common)?;
    let ens = simulate_pair(&run.config)?;
    let all: Vec<Trajectory> = ens.bright.into_iter().chain(ens.dark).collect();
    io::write_ensemble_csv(run.create("ensemble.csv")?, &all)?;
    io::write_change_times_csv(run.create("change_times.csv")?, &all)?;
    run.finish()
}

fn write_reports(run: &mut Run, stem: &str, rows: &[SweepRow]) -> CliResult<()> {
    match run.format {
        Format::Csv => io::write_reports_csv(run.create(&format!("{stem}.csv"))?, rows)?,
        Format::Json => run.write_json(&format!("{stem}.json"), &rows)?,
    }
    Ok(())
}

fn cmd_classify(common: &Common, input: Option<&Path>) -> CliResult<()> {
    let mut run = Run::start("classify", common)?;
    let cfg = run.config.clone();
    let method = cfg.classify_section()?.method.clone();
    let (ordered, bright, dark) = match input {
        Some(path) => {
            let all = read_input(path, &cfg)?;
            let (b, d) = io::split_by_initial(all.clone());
            (all, b, d)
        }
        None => {
            let ens = simulate_pair(&cfg)?;
            let all = ens.bright.iter().chain(&ens.dark).cloned().collect();
            (all, ens.bright, ens.dark)
        }
    };
    if bright.is_empty() || dark.is_empty() {
        return Err(data_failure(anyhow::anyhow!(
            "input needs both B and D trials"
        )));
    }
    // thresholds left open are optimized on the data being classified
    let method = match method {
        MethodSpec::Threshold { n_c: None } => {
            let hist = TotalHistograms::build(&bright, &dark, &[bright[0].len()])?;
            let grid = qubit_readout::harness::default_grid(&hist);
            let best = optimize_threshold(&bright, &dark, ThresholdFamily::Single, &grid)?.best;
            MethodSpec::Threshold {
                n_c: best.threshold,
            }
        }
        MethodSpec::DoubleThreshold {
            n_dark,
            n_bright: None,
        } => {
            let hist = TotalHistograms::build(&bright, &dark, &[bright[0].len()])?;
            let grid = qubit_readout::harness::default_grid(&hist);
            let family = ThresholdFamily::Double { n_dark };
            let best = optimize_threshold(&bright, &dark, family, &grid)?.best;
            MethodSpec::DoubleThreshold {
                n_dark,
                n_bright: best.threshold,
            }
        }
        m => m,
    };
    let table = ObservationTable::with_defaults(cfg.params)?;
    let det = method.detector(&cfg.params, &table)?;
    let results = ordered
        .iter()
        .map(|t| det.classify(&t.counts))
        .collect::<qubit_readout::Result<Vec<Classification>>>()?;
    io::write_decisions_csv(run.create("decisions.csv")?, &ordered, &results)?;
    let mut report = evaluate(&bright, &dark, &det)?;
    if let MethodSpec::Threshold { n_c } = method {
        report.threshold = n_c;
    }
    let row = SweepRow {
        efficiency_factor: 1.0,
        report,
    };
    write_reports(&mut run, "report", std::slice::from_ref(&row))?;
    run.finish()
}

fn cmd_fit(common: &Common, input: &Path) -> CliResult<()> {
    let mut run = Run::start("fit", common)?;
    let cfg = run.config.clone();
    let merge = cfg.fit.clone().unwrap_or_default().merge_bins;
    let all = read_input(input, &cfg)?;
    let series = |s: IonState| {
        io::mean_series(&all, s, merge)
            .map_err(|e| Failure::from(e).with_context(format!("{} series", s.label())))
    };
    let (b, d) = (series(IonState::Bright)?, series(IonState::Dark)?);
    let fit = fit_decay_curves(&b, &d)?;
    let lifetimes = if fit.degenerate {
        None
    } else {
        derive_lifetimes(&fit).ok()
    };
    let doc = FitDocument::new(fit, lifetimes, merge as f64 * cfg.params.t_sub_ms, b.len());
    run.write_json("fit.json", &doc)?;
    run.finish()
}

fn pi_pulse_csv(run: &mut Run, rows: &[qubit_readout::harness::PiPulseRow]) -> CliResult<()> {
    let mut w = run.create("pi_pulse.csv")?;
    use std::io::Write;
    let line = |w: &mut BufWriter<File>, cells: Vec<String>| -> CliResult<()> {
        writeln!(w, "{}", cells.join(",")).context("writing pi_pulse.csv")?;
        Ok(())
    };
    line(
        &mut w,
        [
            "t_b_ms",
            "epsilon_rel",
            "epsilon_rel_bright",
            "epsilon_rel_dark",
            "n_r",
            "m_b_bb",
            "m_b_bd",
            "m_b_db",
            "m_b_dd",
            "m_d_bb",
            "m_d_bd",
            "m_d_db",
            "m_d_dd",
            "simulated_epsilon_rel",
            "simulated_std_error",
            "simulated_n_r",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect(),
    )?;
    let opt = |x: Option<f64>| x.map(fmt6).unwrap_or_default();
    for r in rows {
        let p = &r.point;
        let mut cells = vec![
            fmt6(p.t_b_ms),
            opt(p.predicted.epsilon_rel),
            opt(p.predicted.bright.epsilon_rel),
            opt(p.predicted.dark.epsilon_rel),
            fmt6(p.predicted.n_r),
        ];
        for m in [&p.m_bright.0, &p.m_dark.0] {
            cells.extend(m.iter().flatten().map(|&x| fmt6(x)));
        }
        match &r.simulated {
            Some(s) => cells.extend([opt(s.epsilon), opt(s.std_error), fmt6(s.n_r)]),
            None => cells.extend([String::new(), String::new(), String::new()]),
        }
        line(&mut w, cells)?;
    }
    Ok(())
}

fn cmd_sweep(common: &Common) -> CliResult<()> {
    let mut run = Run::start("sweep", common)?;
    let cfg = run.config.clone();
    if cfg.sweep.is_none() && cfg.pi_pulse.is_none() {
        return Err(config_failure(anyhow::anyhow!(
            "config has neither [sweep] nor [pi_pulse]"
        )));
    }
    if cfg.sweep.is_some() {
        let rows = run_sweep(&cfg.sweep_spec()?)?;
        write_reports(&mut run, "sweep", &rows)?;
    }
    if cfg.pi_pulse.is_some() {
        let rows = pi_pulse_sweep(&cfg.pi_pulse_spec()?)?;
        match run.format {
            Format::Csv => pi_pulse_csv(&mut run, &rows)?,
            Format::Json => run.write_json("pi_pulse.json", &rows)?,
        }
    }
    run.finish()
}

fn cmd_compare(common: &Common) -> CliResult<()> {
    let mut run = Run::start("compare", common)?;
    let cfg = run.config.clone();
    let s = cfg.compare_section()?;
    let params = s.params.unwrap_or(cfg.params);
    let cmp = compare_methods(
        params,
        &s.t_b_ms.values()?,
        s.n_trials,
        s.repetitions,
        cfg.seed,
        &s.simple_method(),
    )?;
    match run.format {
        Format::Json => run.write_json("compare.json", &cmp)?,
        Format::Csv => {
            let mut rows = Vec::new();
            for r in &cmp.runs {
                for rep in [&r.threshold, &r.simple, &r.generalized] {
                    rows.push(SweepRow {
                        efficiency_factor: 1.0,
                        report: ErrorReport {
                            params: format!("{};seed={}", rep.params, r.seed),
                            ..rep.clone()
                        },
                    });
                }
            }
            write_reports(&mut run, "compare", &rows)?;
            let mut w = run.create("compare_summary.csv")?;
            use std::io::Write;
            let body = format!(
                "method,mean_epsilon,sd_epsilon\nthreshold,{},{}\nsimple,{},{}\ngeneralized,{},{}\n",
                fmt6(cmp.threshold.0),
                fmt6(cmp.threshold.1),
                fmt6(cmp.simple.0),
                fmt6(cmp.simple.1),
                fmt6(cmp.generalized.0),
                fmt6(cmp.generalized.1),
            );
            w.write_all(body.as_bytes())
                .context("writing compare_summary.csv")?;
        }
    }
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(c) => cmd_simulate(c),
        Command::Classify { common, input } => cmd_classify(common, input.as_deref()),
        Command::Fit { common, input } => cmd_fit(common, input),
        Command::Sweep(c) => cmd_sweep(c),
        Command::Compare(c) => cmd_compare(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
