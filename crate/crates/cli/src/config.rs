//! Run configuration: an optional TOML file with one table per subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use volterra_core::metrics::TimedVariant;
use volterra_core::{BankKind, InitPolicy, KernelVariant, SolverPath};

use crate::error::{CliError, CliResult};

pub const OUT_ENV: &str = "VOLTERRA_OUT";
pub const DEFAULT_OUT: &str = "volterra-out";

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub simulate: SimulateSection,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub predict: PredictSection,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
    #[serde(default)]
    pub report: ReportSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSection {
    pub bank: Option<String>,
    pub count: Option<usize>,
    pub seed: Option<u64>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub order: Option<usize>,
    pub snr_db: Option<f64>,
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    pub variant: Option<String>,
    pub order: Option<usize>,
    pub memory: Option<usize>,
    pub path: Option<String>,
    pub init: Option<String>,
    pub restarts: Option<usize>,
    pub max_iters: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictSection {
    pub model: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub bank: Option<String>,
    pub n: Option<Vec<usize>>,
    pub memory: Option<usize>,
    pub order: Option<usize>,
    pub repetitions: Option<usize>,
    pub seed: Option<u64>,
    pub variants: Option<Vec<String>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub manifest: Option<PathBuf>,
    pub variants: Option<Vec<String>>,
    pub workers: Option<usize>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

/// Output root: flag, then config file, then `VOLTERRA_OUT`, then `./volterra-out`.
pub fn output_root(flag: Option<PathBuf>, file: Option<PathBuf>) -> PathBuf {
    flag.or(file)
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

pub fn parse_bank(name: &str, order: Option<usize>, snr_db: Option<f64>) -> CliResult<BankKind> {
    let kind = BankKind::parse(name).map_err(|e| CliError::Config(format!("bank: {e}")))?;
    Ok(match kind {
        BankKind::D2like {
            config,
            order: o,
            snr_db: s,
        } => {
            let order = order.unwrap_or(o);
            if order == 0 {
                return Err(CliError::Config("order: must be >= 1".into()));
            }
            let snr_db = snr_db.unwrap_or(s);
            if !snr_db.is_finite() {
                return Err(CliError::Config("snr_db: must be finite".into()));
            }
            BankKind::D2like {
                config,
                order,
                snr_db,
            }
        }
        other => {
            if order.is_some() || snr_db.is_some() {
                return Err(CliError::Config(format!(
                    "order/snr_db: only d2like banks take them, got bank '{}'",
                    other.tag()
                )));
            }
            other
        }
    })
}

pub fn parse_variant(name: &str) -> CliResult<KernelVariant> {
    if name == "control-bd-delta" {
        return Ok(volterra_core::metrics::mismatched_control());
    }
    KernelVariant::preset(name).map_err(|e| CliError::Config(format!("variant: {e}")))
}

pub fn parse_path(name: &str) -> CliResult<SolverPath> {
    match name {
        "dense" => Ok(SolverPath::Dense),
        "fast" | "fast-separable" => Ok(SolverPath::FastSeparable),
        _ => Err(CliError::Config(format!(
            "path: expected 'dense' or 'fast', got '{name}'"
        ))),
    }
}

pub fn parse_init(name: &str) -> CliResult<InitPolicy> {
    match name {
        "trim" | "trim-to-known" => Ok(InitPolicy::TrimToKnown),
        "prewindow" | "pre-window-zero" => Ok(InitPolicy::PreWindowZero),
        _ => Err(CliError::Config(format!(
            "init: expected 'trim' or 'prewindow', got '{name}'"
        ))),
    }
}

/// `name/path`, e.g. `dc-bd-w/fast`; the path defaults to `fast`.
pub fn parse_timed(spec: &str) -> CliResult<TimedVariant> {
    let (name, path) = spec.split_once('/').unwrap_or((spec, "fast"));
    Ok(TimedVariant {
        variant: parse_variant(name)?,
        path: parse_path(path)?,
    })
}

/// Reference configuration printed by `volterra config-reference`.
pub const REFERENCE: &str = r#"# volterra run configuration. Every key is optional; command-line flags win over
# values here, and built-in defaults fill the rest. Unknown keys are rejected.

# Output root. Falls back to $VOLTERRA_OUT, then ./volterra-out.
out = "volterra-out"

[simulate]
bank = "d2like-b"      # d1like | d2like-a | d2like-b | d3like | d4like
count = 20             # datasets in the bank
seed = 1
n_train = 400          # default 400 (300 for d3like)
# n_test = 2000        # default 5 x n_train (1 x for d3like)
order = 2              # d2like only: polynomial order
snr_db = 10.0          # d2like only

[fit]
variant = "dc-ob"      # dc-bd | dc-decay | dc-ob, with "-w" for the Wiener form, or control-bd-delta
# order = 2            # default: the bank's model order
memory = 30            # memory length n
path = "dense"         # dense | fast (fast needs a "-w" variant and a separable input)
init = "trim"          # trim | prewindow
restarts = 5
max_iters = 2000
seed = 0

[predict]
# model = "volterra-out/fit/model.json"
# dataset = "..."      # default: the dataset recorded in the model file

[benchmark]
bank = "d4like"
n = [1000, 2000, 4000, 8000]
memory = 50
# order = 3            # default: the bank's model order
repetitions = 5
seed = 0
variants = ["dc-ob-w/fast", "dc-decay-w/fast", "dc-bd-w/fast", "dc-ob-w/dense"]

[report]
# manifest = "volterra-out/d2like-b-s1/manifest.json"
variants = ["dc-ob", "dc-bd", "control-bd-delta"]
workers = 0            # 0 uses every available core
"#;

#[cfg(test)]
mod tests {
    use super::*;
    use volterra_core::simulator::D2Config;

    #[test]
    fn reference_config_parses() {
        let cfg: FileConfig = toml::from_str(REFERENCE).unwrap();
        assert_eq!(cfg.simulate.bank.as_deref(), Some("d2like-b"));
        assert_eq!(cfg.benchmark.variants.unwrap().len(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("[fit]\nvariant = \"dc-ob\"\nbogus = 1\n").is_err());
        assert!(toml::from_str::<FileConfig>("colour = 3\n").is_err());
    }

    #[test]
    fn bank_overrides() {
        let k = parse_bank("d2like-b", Some(3), Some(5.0)).unwrap();
        assert_eq!(
            k,
            BankKind::D2like {
                config: D2Config::B,
                order: 3,
                snr_db: 5.0
            }
        );
        assert!(parse_bank("d4like", Some(3), None).is_err());
        assert!(parse_bank("d9", None, None).is_err());
    }

    #[test]
    fn timed_variant_specs() {
        let t = parse_timed("dc-bd-w/dense").unwrap();
        assert_eq!(t.path, SolverPath::Dense);
        assert_eq!(
            parse_timed("dc-ob-w").unwrap().path,
            SolverPath::FastSeparable
        );
        assert!(parse_timed("dc-ob-w/gpu").is_err());
    }
}
