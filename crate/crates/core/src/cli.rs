//! Command-line entry point: load a configuration, run schemes, write
//! outputs atomically.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};

use crate::config::SimConfig;
use crate::engine::{simulate_network, Network, SimOptions, SimulationResult};
use crate::error::{ConfigError, SimError};
use crate::metrics::{compute_headlines, subset_cdf, summary_text, write_cdf_csv, write_sensor_csv, Subset};
use crate::tms::Scheme;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG_UNREADABLE: i32 = 3;
pub const EXIT_CONFIG_INVALID: i32 = 4;
pub const EXIT_OUTPUT: i32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    R12,
    R13,
    Context,
    All,
}

impl SchemeArg {
    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            SchemeArg::R12 => vec![Scheme::R12],
            SchemeArg::R13 => vec![Scheme::R13],
            SchemeArg::Context => vec![Scheme::ContextAware],
            SchemeArg::All => Scheme::ALL.to_vec(),
        }
    }
}

const EXIT_CODES: &str = "\
Exit codes:
  0  success
  1  internal error
  2  usage error (unknown flag, bad flag value)
  3  configuration or MCS table file unreadable
  4  configuration invalid
  5  output directory or trace file not writable";

/// Day-stepped simulator of sensor relaying in a massive machine-type cell.
#[derive(Debug, Parser)]
#[command(name = "mmtc-sim", version, after_help = EXIT_CODES)]
pub struct RunRequest {
    /// Configuration file (`key = value` per line).
    #[arg(long, value_name = "PATH")]
    pub config: PathBuf,
    /// Scheme to simulate.
    #[arg(long, value_enum, default_value = "all")]
    pub scheme: SchemeArg,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "./out")]
    pub out: PathBuf,
    /// Override rng_seed.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Override n_sensors.
    #[arg(long, value_name = "N")]
    pub sensors: Option<u32>,
    /// Override horizon_days.
    #[arg(long = "horizon-days", value_name = "N")]
    pub horizon_days: Option<u32>,
    /// Write a signaling transcript of the first days to PATH.
    #[arg(long, value_name = "PATH")]
    pub trace: Option<PathBuf>,
    /// Days covered by --trace.
    #[arg(long = "trace-days", value_name = "N", default_value_t = 1)]
    pub trace_days: u32,
    /// Override mcs_table_path.
    #[arg(long = "mcs-table", value_name = "PATH")]
    pub mcs_table: Option<PathBuf>,
    /// Run the selected schemes on separate threads.
    #[arg(long = "parallel-schemes")]
    pub parallel_schemes: bool,
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

fn classify(e: SimError) -> Failure {
    match e {
        SimError::Read { .. } => Failure::new(EXIT_CONFIG_UNREADABLE, e.to_string()),
        SimError::Config(_) => Failure::new(EXIT_CONFIG_INVALID, e.to_string()),
        SimError::Write { .. } => Failure::new(EXIT_OUTPUT, e.to_string()),
        SimError::EmptyInput(_) => Failure::new(EXIT_INTERNAL, e.to_string()),
    }
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    let werr = |source| SimError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(werr(e));
    }
    Ok(())
}

fn load_config(req: &RunRequest) -> Result<SimConfig, Failure> {
    let text = fs::read_to_string(&req.config).map_err(|e| {
        Failure::new(
            EXIT_CONFIG_UNREADABLE,
            format!("cannot read config {}: {e}", req.config.display()),
        )
    })?;
    let mut config = SimConfig::parse(&text).map_err(|e| {
        Failure::new(EXIT_CONFIG_INVALID, format!("{}: {e}", req.config.display()))
    })?;
    if let Some(seed) = req.seed {
        config.scenario.rng_seed = seed;
    }
    if let Some(n) = req.sensors {
        config.scenario.n_sensors = n;
        // Fewer sensors than clusters would be unsatisfiable.
        config.scenario.n_clusters = config.scenario.n_clusters.min(n.max(1));
    }
    if let Some(h) = req.horizon_days {
        config.horizon_days = h;
    }
    if let Some(path) = &req.mcs_table {
        config.channel.mcs_table_path = Some(path.clone());
    }
    config
        .validate()
        .map_err(|e: ConfigError| Failure::new(EXIT_CONFIG_INVALID, e.to_string()))?;
    Ok(config)
}

fn prepare_out_dir(dir: &Path) -> Result<(), Failure> {
    let fail = |e: std::io::Error| {
        Failure::new(EXIT_OUTPUT, format!("output directory {} not writable: {e}", dir.display()))
    };
    fs::create_dir_all(dir).map_err(fail)?;
    let probe = dir.join(".mmtc-sim-probe");
    fs::write(&probe, b"").map_err(fail)?;
    let _ = fs::remove_file(&probe);
    Ok(())
}

fn run_schemes(net: &Network, schemes: &[Scheme], opts: SimOptions, parallel: bool) -> Vec<SimulationResult> {
    if parallel && schemes.len() > 1 {
        std::thread::scope(|s| {
            let handles: Vec<_> = schemes
                .iter()
                .map(|&scheme| s.spawn(move || simulate_network(net, scheme, opts)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("scheme thread panicked"))
                .collect()
        })
    } else {
        schemes
            .iter()
            .map(|&s| simulate_network(net, s, opts))
            .collect()
    }
}

fn execute(req: &RunRequest) -> Result<String, Failure> {
    let config = load_config(req)?;
    prepare_out_dir(&req.out)?;
    let net = Network::build(&config).map_err(classify)?;
    let opts = SimOptions {
        trace_days: if req.trace.is_some() { req.trace_days } else { 0 },
    };
    let results = run_schemes(&net, &req.scheme.schemes(), opts, req.parallel_schemes);

    for r in &results {
        let name = r.scheme.as_str();
        let mut buf = Vec::new();
        write_sensor_csv(r, &mut buf).map_err(classify)?;
        write_atomic(&req.out.join(format!("sensors_{name}.csv")), &buf).map_err(classify)?;
        for subset in Subset::ALL {
            let mut buf = Vec::new();
            write_cdf_csv(r.scheme, subset, &subset_cdf(r, subset), &mut buf).map_err(classify)?;
            let file = format!("cdf_{name}_{}.csv", subset.as_str());
            write_atomic(&req.out.join(file), &buf).map_err(classify)?;
        }
    }
    let summary = summary_text(&compute_headlines(&results));
    write_atomic(&req.out.join("summary.txt"), summary.as_bytes()).map_err(classify)?;
    if let Some(path) = &req.trace {
        let mut text = String::new();
        for r in &results {
            text.push_str(&format!("# scheme {}\n", r.scheme.as_str()));
            for line in &r.trace {
                text.push_str(line);
                text.push('\n');
            }
        }
        write_atomic(path, text.as_bytes()).map_err(classify)?;
    }
    Ok(summary)
}

/// Runs the CLI on `args` (including the program name); returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let req = match RunRequest::try_parse_from(args) {
        Ok(r) => r,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&req) {
        Ok(summary) => {
            print!("{summary}");
            EXIT_OK
        }
        Err(f) => {
            eprintln!("error: {}", f.message.replace('\n', " "));
            f.code
        }
    }
}
