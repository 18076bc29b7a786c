use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use shadekit_cli::{api, commands};
use shadekit_core::moo::EvolveConfig;
use shadekit_core::sensitivity::ReportOptions;
use shadekit_core::service::{leed_score, Artifacts, ParamValue, PredictRequest, Predictor, ServiceConfig, SuggestQuery};
use shadekit_core::surrogate::{Algorithm, Hyperparams, Weighting};
use shadekit_core::{Error, Family, Fidelity, Output, Result};

#[derive(Parser)]
#[command(name = "shadekit", version, about = "Shading design-space pipeline and prediction service")]
struct Cli {
    /// JSON config file (paths, LEED table, seeds, port).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Artifact root; overrides the config and SHADEKIT_ARTIFACTS.
    #[arg(long, global = true)]
    artifacts: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every alternative of a family into data/<family>.csv.
    Generate {
        #[arg(long)]
        family: FamilyArg,
        #[arg(long, default_value = "coarse")]
        fidelity: Fidelity,
        #[arg(long, default_value_t = default_parallelism())]
        parallelism: usize,
    },
    /// Grid-search surrogates and save the best per output.
    Tune {
        #[command(flatten)]
        target: Target,
        #[arg(long, value_enum, default_value = "forest")]
        algorithm: AlgorithmArg,
    },
    /// Train surrogates with fixed hyperparameters.
    Train {
        #[command(flatten)]
        target: Target,
        /// Forest size (selects the random forest).
        #[arg(long, conflicts_with = "k")]
        n_estimators: Option<usize>,
        #[arg(long, requires = "n_estimators")]
        max_depth: Option<usize>,
        /// Neighbour count (selects KNN).
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, value_enum, default_value = "distance", requires = "k")]
        weighting: WeightingArg,
    },
    /// Shapley importance report for the sDA, ASE and HVC-60 models.
    Shap {
        #[arg(long)]
        family: FamilyArg,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 256)]
        background: usize,
        #[arg(long, default_value_t = 32)]
        permutations: usize,
    },
    /// Build the optimal-designs database with NSGA-II.
    Optimize {
        /// Shaded families to include (default: all five).
        #[arg(long = "family")]
        families: Vec<Family>,
        #[arg(long, value_enum, default_value = "standard")]
        profile: Profile,
        #[arg(long)]
        pop: Option<usize>,
        #[arg(long)]
        generations: Option<usize>,
    },
    /// LEED daylight points for an sDA / ASE pair.
    Score {
        #[arg(long)]
        sda: f64,
        #[arg(long)]
        ase: f64,
    },
    /// Predict all metrics for one design.
    Predict {
        #[arg(long)]
        family: Family,
        /// Parameter assignment, repeatable: --param width_x=6 --param win_side=S
        #[arg(long = "param", value_parser = parse_param)]
        params: Vec<(String, ParamValue)>,
    },
    /// Query the optimal-designs database.
    Suggest {
        /// Full query as JSON; flags below are merged over it.
        #[arg(long)]
        query: Option<String>,
        #[arg(long)]
        family: Option<Family>,
        #[arg(long)]
        win_side: Option<shadekit_core::Orientation>,
        #[arg(long)]
        max_results: Option<usize>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        host: Option<String>,
    },
}

#[derive(Args)]
struct Target {
    #[arg(long)]
    family: FamilyArg,
    /// One output or `all`.
    #[arg(long, default_value = "all")]
    output: OutputArg,
}

#[derive(Clone)]
enum FamilyArg {
    All,
    One(Family),
}

impl std::str::FromStr for FamilyArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(FamilyArg::All)
        } else {
            Ok(FamilyArg::One(s.parse()?))
        }
    }
}

impl FamilyArg {
    fn list(&self) -> Vec<Family> {
        match self {
            FamilyArg::All => Family::ALL.to_vec(),
            FamilyArg::One(f) => vec![*f],
        }
    }
}

#[derive(Clone)]
enum OutputArg {
    All,
    One(Output),
}

impl std::str::FromStr for OutputArg {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "all" {
            Ok(OutputArg::All)
        } else {
            Ok(OutputArg::One(s.parse()?))
        }
    }
}

impl OutputArg {
    fn list(&self) -> Vec<Output> {
        match self {
            OutputArg::All => Output::ALL.to_vec(),
            OutputArg::One(o) => vec![*o],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgorithmArg {
    Forest,
    Knn,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    Uniform,
    Distance,
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Population 500, 20 generations.
    Standard,
    /// Population 50, 5 generations.
    Smoke,
}

fn default_parallelism() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_param(s: &str) -> std::result::Result<(String, ParamValue), String> {
    let (k, v) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let value = v.parse::<f64>().map(ParamValue::Number).unwrap_or_else(|_| ParamValue::Label(v.to_string()));
    Ok((k.trim().to_string(), value))
}

fn load_config(cli: &Cli) -> Result<ServiceConfig> {
    let mut config = match &cli.config {
        Some(p) => ServiceConfig::load(p)?,
        None => ServiceConfig::default(),
    };
    config.apply_env(|k| std::env::var(k).ok())?;
    if let Some(a) = &cli.artifacts {
        config.artifacts = a.clone();
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<Value> {
    let config = load_config(&cli)?;
    let art = Artifacts::new(&config.artifacts);
    let seeds = &config.seeds;
    match cli.command {
        Command::Generate { family, fidelity, parallelism } => {
            let out = family
                .list()
                .into_iter()
                .map(|f| commands::generate(&art, f, fidelity, parallelism))
                .collect::<Result<Vec<_>>>()?;
            Ok(json!(out))
        }
        Command::Tune { target, algorithm } => {
            let algorithm = match algorithm {
                AlgorithmArg::Forest => Algorithm::Forest,
                AlgorithmArg::Knn => Algorithm::Knn,
            };
            let mut out = Vec::new();
            for f in target.family.list() {
                out.extend(commands::tune(&art, f, &target.output.list(), algorithm, seeds)?);
            }
            Ok(json!(out))
        }
        Command::Train { target, n_estimators, max_depth, k, weighting } => {
            let params = match (n_estimators, k) {
                (Some(n_estimators), None) => Hyperparams::Forest { n_estimators, max_depth },
                (None, Some(k)) => Hyperparams::Knn {
                    k,
                    weighting: match weighting {
                        WeightingArg::Uniform => Weighting::Uniform,
                        WeightingArg::Distance => Weighting::Distance,
                    },
                },
                _ => return Err(Error::Domain("train needs --n-estimators or --k".into())),
            };
            let mut out = Vec::new();
            for f in target.family.list() {
                out.extend(commands::train(&art, f, &target.output.list(), params, seeds)?);
            }
            Ok(json!(out))
        }
        Command::Shap { family, instances, background, permutations } => {
            let options = ReportOptions { instances, background, permutations };
            let out = family
                .list()
                .into_iter()
                .map(|f| commands::shap(&art, f, seeds.shap, options))
                .collect::<Result<Vec<_>>>()?;
            Ok(json!(out))
        }
        Command::Optimize { families, profile, pop, generations } => {
            let families = if families.is_empty() { Family::SHADED.to_vec() } else { families };
            let base = match profile {
                Profile::Standard => EvolveConfig::standard(seeds.optimize),
                Profile::Smoke => EvolveConfig::smoke(seeds.optimize),
            };
            let cfg = EvolveConfig {
                pop_size: pop.unwrap_or(base.pop_size),
                generations: generations.unwrap_or(base.generations),
                ..base
            };
            commands::optimize(&art, &families, cfg)
        }
        Command::Score { sda, ase } => Ok(json!(leed_score(sda, ase, &config.leed)?)),
        Command::Predict { family, params } => {
            let predictor = Predictor::new(&config);
            let params: BTreeMap<String, ParamValue> = params.into_iter().collect();
            Ok(json!(predictor.predict(&PredictRequest { family: family.name().into(), params })?))
        }
        Command::Suggest { query, family, win_side, max_results } => {
            let mut q: SuggestQuery = match query {
                Some(s) => serde_json::from_str(&s)?,
                None => SuggestQuery::default(),
            };
            q.family = family.or(q.family);
            q.win_side = win_side.or(q.win_side);
            q.max_results = max_results.or(q.max_results);
            Ok(json!(Predictor::new(&config).suggest(&q)?))
        }
        Command::Serve { port, host } => {
            let host = host.unwrap_or(config.host.clone());
            let port = port.unwrap_or(config.port);
            let addr: SocketAddr = format!("{host}:{port}")
                .parse()
                .map_err(|_| Error::Domain(format!("bad listen address {host}:{port}")))?;
            let predictor = Arc::new(Predictor::new(&config));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(api::serve(predictor, addr))?;
            Ok(json!({ "stopped": true }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("json output"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
