//! Command-line and config-file handling.
//!
//! Every setting has one canonical key, spelled like its flag without the
//! leading dashes (`L`, `J`, `h`, `h-list`, `order`, `dt`, `t-end`,
//! `epsilon`, `sample-interval`, `perturb-site`, `out`). Values are merged
//! from lowest to highest precedence: built-in defaults, the stored config of
//! the analysed run (`analyze` only), `--config FILE`, then flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use tfim_lightcone::lattice::{ModelParams, Order, SiteIndex};

use crate::CliError;

pub const PROVENANCE_FILE: &str = "config.txt";

pub const KEYS: [&str; 11] = [
    "L",
    "J",
    "h",
    "h-list",
    "order",
    "dt",
    "t-end",
    "epsilon",
    "sample-interval",
    "perturb-site",
    "out",
];

/// Informational keys written to provenance files and skipped on reading.
const IGNORED_KEYS: [&str; 1] = ["command"];

pub const DEFAULT_SWEEP: [f64; 4] = [0.3, 0.4, 0.5, 0.6];

#[derive(Parser, Debug)]
#[command(name = "tfim-lightcone", version, about = "Light cones of the 2D transverse-field Ising model in BBGKY mean field")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Subcommand, Debug)]
pub enum CommandArgs {
    /// Integrate one locally perturbed run and analyse its light cone
    Simulate(Flags),
    /// Measure the front velocity for several fields and fit v ~ h^a
    Sweep(Flags),
    /// Re-run the light-cone analysis on the stored output of `simulate`
    Analyze {
        /// Output directory of a previous `simulate`
        run_dir: PathBuf,
        #[command(flatten)]
        flags: Flags,
    },
    /// Compare the homogeneous quench with the perturbative series
    PtCompare(Flags),
}

#[derive(Args, Debug, Default, Clone)]
pub struct Flags {
    /// Linear lattice size
    #[arg(long = "L", value_name = "INT")]
    pub l: Option<String>,
    /// Nearest-neighbour coupling
    #[arg(long = "J", value_name = "REAL", allow_negative_numbers = true)]
    pub j: Option<String>,
    /// Transverse field (a comma-separated list is accepted by `sweep`)
    #[arg(long, value_name = "REAL[,REAL...]", allow_negative_numbers = true)]
    pub h: Option<String>,
    /// Fields for `sweep`
    #[arg(long = "h-list", value_name = "REAL,REAL,...", allow_negative_numbers = true)]
    pub h_list: Option<String>,
    /// BBGKY truncation order
    #[arg(long, value_name = "1|2")]
    pub order: Option<String>,
    #[arg(long, value_name = "REAL", allow_negative_numbers = true)]
    pub dt: Option<String>,
    #[arg(long = "t-end", value_name = "REAL", allow_negative_numbers = true)]
    pub t_end: Option<String>,
    /// Arrival threshold on max |Delta|
    #[arg(long, value_name = "REAL", allow_negative_numbers = true)]
    pub epsilon: Option<String>,
    /// Integration steps per recorded sample
    #[arg(long = "sample-interval", value_name = "INT")]
    pub sample_interval: Option<String>,
    /// Site of the flipped spin
    #[arg(long = "perturb-site", value_name = "X,Y")]
    pub perturb_site: Option<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: Option<String>,
    /// Flat `key = value` file; flags take precedence
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

impl Flags {
    fn pairs(&self) -> impl Iterator<Item = (&'static str, &String)> {
        [
            ("L", &self.l),
            ("J", &self.j),
            ("h", &self.h),
            ("h-list", &self.h_list),
            ("order", &self.order),
            ("dt", &self.dt),
            ("t-end", &self.t_end),
            ("epsilon", &self.epsilon),
            ("sample-interval", &self.sample_interval),
            ("perturb-site", &self.perturb_site),
            ("out", &self.out),
        ]
        .into_iter()
        .filter_map(|(k, v)| v.as_ref().map(|v| (k, v)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Command {
    Simulate,
    Sweep,
    Analyze { run_dir: PathBuf },
    PtCompare,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Sweep => "sweep",
            Command::Analyze { .. } => "analyze",
            Command::PtCompare => "pt-compare",
        }
    }
}

/// Fully resolved, validated configuration of one invocation.
#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub command: Command,
    pub model: ModelParams,
    /// Fields of a sweep; empty for the other commands.
    pub h_list: Vec<f64>,
    pub perturb_site: SiteIndex,
    pub output_dir: PathBuf,
}

fn usage(key: &str, reason: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("invalid `{key}`: {reason}"))
}

/// Parses a flat `key = value` file. `#` starts a comment.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage("config", format!("cannot read {}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(CliError::Usage(format!("line {}: expected `key = value`", n + 1)));
        };
        let key = k.trim().replace('_', "-");
        if IGNORED_KEYS.contains(&key.as_str()) {
            continue;
        }
        let Some(&canon) = KEYS.iter().find(|c| **c == key) else {
            return Err(CliError::Usage(format!("line {}: unknown key `{}`", n + 1, k.trim())));
        };
        if map.insert(canon.to_owned(), v.trim().to_owned()).is_some() {
            return Err(CliError::Usage(format!("line {}: duplicate key `{canon}`", n + 1)));
        }
    }
    Ok(map)
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T, CliError> {
    v.trim()
        .parse()
        .map_err(|_| usage(key, format!("cannot parse {v:?}")))
}

fn parse_list(key: &str, v: &str) -> Result<Vec<f64>, CliError> {
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn parse_site(key: &str, v: &str) -> Result<(usize, usize), CliError> {
    match v.split(',').collect::<Vec<_>>()[..] {
        [x, y] => Ok((parse_num(key, x)?, parse_num(key, y)?)),
        _ => Err(usage(key, format!("expected `x,y`, got {v:?}"))),
    }
}

fn default_t_end(command: &Command) -> f64 {
    match command {
        Command::Simulate | Command::Analyze { .. } => 500.0,
        Command::Sweep => 2500.0,
        Command::PtCompare => 3.0,
    }
}

fn default_h(command: &Command) -> f64 {
    match command {
        Command::PtCompare => 0.1,
        _ => ModelParams::default().h,
    }
}

/// Resolves a command and its merged key/value settings.
pub fn resolve(command: Command, values: &BTreeMap<String, String>) -> Result<RunConfig, CliError> {
    let get = |k: &str| values.get(k).map(String::as_str);
    let mut model = ModelParams {
        t_end: default_t_end(&command),
        h: default_h(&command),
        ..ModelParams::default()
    };
    if let Some(v) = get("L") {
        model.l = parse_num("L", v)?;
    }
    if let Some(v) = get("J") {
        model.j = parse_num("J", v)?;
    }
    if let Some(v) = get("order") {
        model.order = parse_num::<u8>("order", v)
            .ok()
            .and_then(Order::from_int)
            .ok_or_else(|| usage("order", format!("must be 1 or 2, got {v:?}")))?;
    }
    if let Some(v) = get("dt") {
        model.dt = parse_num("dt", v)?;
    }
    if let Some(v) = get("t-end") {
        model.t_end = parse_num("t-end", v)?;
    }
    if let Some(v) = get("epsilon") {
        model.epsilon_arrival = parse_num("epsilon", v)?;
    }
    if let Some(v) = get("sample-interval") {
        model.sample_interval = parse_num("sample-interval", v)?;
    }

    let mut h_list = Vec::new();
    match (&command, get("h"), get("h-list")) {
        (Command::Sweep, h, list) => {
            h_list = match (list, h) {
                (Some(v), _) => parse_list("h-list", v)?,
                (None, Some(v)) => parse_list("h", v)?,
                (None, None) => DEFAULT_SWEEP.to_vec(),
            };
            if h_list.is_empty() {
                return Err(usage("h-list", "must not be empty"));
            }
            if let Some(bad) = h_list.iter().find(|h| !(h.is_finite() && **h > 0.0)) {
                return Err(usage("h-list", format!("fields must be > 0, got {bad}")));
            }
            model.h = h_list[0];
        }
        (_, _, Some(_)) => {
            return Err(usage("h-list", format!("only applies to `sweep`, not `{}`", command.name())));
        }
        (_, Some(v), None) => model.h = parse_num("h", v)?,
        (_, None, None) => {}
    }

    model.validate().map_err(|e| match e {
        tfim_lightcone::Error::InvalidParams { field, reason } => usage(&field.replace('_', "-"), reason),
        other => CliError::Core(other),
    })?;

    let perturb_site = match get("perturb-site") {
        Some(v) => {
            let (x, y) = parse_site("perturb-site", v)?;
            let site = SiteIndex::new(x, y);
            if !site.in_lattice(model.l) {
                return Err(usage("perturb-site", format!("({x},{y}) lies outside the {0}x{0} lattice", model.l)));
            }
            site
        }
        None => SiteIndex::ORIGIN,
    };

    let output_dir = match (get("out"), &command) {
        (Some(v), _) if !v.is_empty() => PathBuf::from(v),
        (Some(_), _) => return Err(usage("out", "must not be empty")),
        (None, Command::Analyze { run_dir }) => run_dir.join("analysis"),
        (None, _) => PathBuf::from("tfim-out"),
    };

    Ok(RunConfig {
        command,
        model,
        h_list,
        perturb_site,
        output_dir,
    })
}

/// `parse_config`: command-line arguments (program name first) plus the
/// optional `--config` file, merged and validated.
pub fn parse_args<I, T>(args: I) -> Result<RunConfig, CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args)?;
    let (command, flags) = match cli.command {
        CommandArgs::Simulate(f) => (Command::Simulate, f),
        CommandArgs::Sweep(f) => (Command::Sweep, f),
        CommandArgs::Analyze { run_dir, flags } => (Command::Analyze { run_dir }, flags),
        CommandArgs::PtCompare(f) => (Command::PtCompare, f),
    };
    let mut values = BTreeMap::new();
    if let Command::Analyze { run_dir } = &command {
        let mut stored = read_config_file(&run_dir.join(PROVENANCE_FILE))?;
        stored.remove("out");
        values.extend(stored);
    }
    if let Some(path) = &flags.config {
        values.extend(read_config_file(path)?);
    }
    for (k, v) in flags.pairs() {
        values.insert(k.to_owned(), v.clone());
    }
    resolve(command, &values)
}

impl RunConfig {
    /// Effective configuration as `key = value` lines, readable by
    /// [`parse_config_text`].
    pub fn to_config_text(&self) -> String {
        let m = &self.model;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("command", self.command.name().to_owned());
        kv("L", m.l.to_string());
        kv("J", m.j.to_string());
        if self.command == Command::Sweep {
            let list: Vec<String> = self.h_list.iter().map(f64::to_string).collect();
            kv("h-list", list.join(","));
        } else {
            kv("h", m.h.to_string());
        }
        kv("order", m.order.to_string());
        kv("dt", m.dt.to_string());
        kv("t-end", m.t_end.to_string());
        kv("epsilon", m.epsilon_arrival.to_string());
        kv("sample-interval", m.sample_interval.to_string());
        kv("perturb-site", format!("{},{}", self.perturb_site.x, self.perturb_site.y));
        kv("out", self.output_dir.display().to_string());
        s
    }

    pub fn write_provenance(&self, dir: &Path) -> Result<(), CliError> {
        fs::write(dir.join(PROVENANCE_FILE), self.to_config_text()).map_err(|e| {
            usage("out", format!("cannot write to {}: {e}", dir.display()))
        })
    }
}
