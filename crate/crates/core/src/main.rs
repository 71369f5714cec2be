use std::error::Error;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand};

use semsearch::bridge::{self, ServeConfig, Session, SessionConfig};
use semsearch::eval::{self, CurationConfig, EvalConfig};
use semsearch::expert::{Dataset, OracleConfig, OraclePolicy};
use semsearch::learn::{self, TrainConfig};
use semsearch::planner::PlannerMode;
use semsearch::scenario::{generate_scenario, load_scenario, load_scenario_dir, save_scenario, GeneratorConfig, Scenario};
use semsearch::semantics::WeightsFile;

#[derive(Parser)]
#[command(name = "semsearch", version, about = "Semantic target search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate floorplan scenarios.
    Gen {
        #[arg(long, default_value_t = 30)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (TOML).
        #[arg(long)]
        config: Option<PathBuf>,
        /// Keep only scenarios where coverage travels at least this multiple
        /// of the shortest observation distance.
        #[arg(long)]
        curate: Option<f64>,
    },
    /// Collect oracle interventions on the coverage planner.
    Collect {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, default_value_t = 30)]
        episodes: usize,
        /// Oracle settings (TOML).
        #[arg(long)]
        oracle: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Fit priority weights, one file per seed.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 2000)]
        epochs: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run planner modes over a scenario directory.
    Eval {
        #[arg(long)]
        scenarios: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "learned,coverage,oracle")]
        modes: Vec<String>,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Serve a live episode over TCP.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "coverage")]
        mode: String,
        #[arg(long)]
        weights: Option<PathBuf>,
        #[arg(long, default_value_t = 7878)]
        port: u16,
        #[arg(long)]
        record: Option<PathBuf>,
        /// Start stepping without waiting for a client.
        #[arg(long)]
        autorun: bool,
        #[arg(long, default_value_t = 100)]
        interval_ms: u64,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn parse_mode(s: &str) -> Result<PlannerMode, String> {
    PlannerMode::parse(s).ok_or_else(|| format!("unknown mode {s}"))
}

fn load_all(dir: &PathBuf) -> Result<Vec<Arc<Scenario>>, Box<dyn Error>> {
    Ok(load_scenario_dir(dir)?.into_iter().map(Arc::new).collect())
}

fn main() -> Result<(), Box<dyn Error>> {
    match Cli::parse().command {
        Cmd::Gen {
            count,
            seed,
            out,
            config,
            curate,
        } => {
            let gen: GeneratorConfig = match config {
                Some(p) => toml::from_str(&fs::read_to_string(p)?)?,
                None => GeneratorConfig::default(),
            };
            fs::create_dir_all(&out)?;
            let mut kept = 0;
            let mut s = seed;
            while kept < count {
                let batch: Vec<Arc<Scenario>> = (s..s + (count - kept) as u64)
                    .map(|k| generate_scenario(k, &gen).map(Arc::new))
                    .collect::<Result<_, _>>()?;
                s += batch.len() as u64;
                let batch = match curate {
                    Some(min_ratio) => eval::curate(batch, &CurationConfig { min_ratio }, &EvalConfig::default()),
                    None => batch,
                };
                for sc in batch {
                    save_scenario(&sc, out.join(format!("{}.toml", sc.id)))?;
                    kept += 1;
                }
            }
            println!("wrote {kept} scenarios to {}", out.display());
        }
        Cmd::Collect {
            scenarios,
            episodes,
            oracle,
            out,
            jobs,
        } => {
            let oracle_cfg = match oracle {
                Some(p) => OracleConfig::from_toml_str(&fs::read_to_string(p)?)?,
                None => OracleConfig::default(),
            };
            let mut sc = load_all(&scenarios)?;
            sc.truncate(episodes);
            let cfg = EvalConfig { jobs, ..EvalConfig::default() };
            let ds = eval::collect_dataset(&sc, &OraclePolicy::RoomTypes(oracle_cfg), &cfg);
            ds.save(&out)?;
            println!("{} episodes, {} interventions, {} pairs", sc.len(), ds.records.len(), ds.pair_count());
        }
        Cmd::Train {
            data,
            epochs,
            lr,
            seeds,
            out,
        } => {
            let ds = Dataset::load(&data)?;
            let cfg = TrainConfig {
                epochs,
                learning_rate: lr,
                seeds: (0..seeds).collect(),
                ..TrainConfig::default()
            };
            fs::create_dir_all(&out)?;
            for o in learn::train_all(&ds, &cfg)? {
                let meta = learn::metadata(&ds, &cfg, &o);
                WeightsFile::new(&ds.header.class_names, &o.model, Some(meta)).save(out.join(format!("weights_seed{:02}.json", o.seed)))?;
                let curve: String = o.loss_curve.iter().enumerate().map(|(i, l)| format!("{i},{l}\n")).collect();
                fs::write(out.join(format!("loss_seed{:02}.csv", o.seed)), format!("epoch,nll\n{curve}"))?;
                println!("seed {}: nll {:.3} -> {:.3}", o.seed, o.initial_nll, o.final_nll);
            }
        }
        Cmd::Eval {
            scenarios,
            modes,
            weights,
            out,
            jobs,
            alpha,
        } => {
            let sc = load_all(&scenarios)?;
            let modes: Vec<PlannerMode> = modes.iter().map(|m| parse_mode(m)).collect::<Result<_, _>>()?;
            let mut models = Vec::new();
            if let Some(dir) = weights {
                let classes = sc.first().map(|s| s.class_names.clone()).unwrap_or_default();
                for (i, w) in WeightsFile::load_dir(dir)?.iter().enumerate() {
                    let seed = w.metadata.as_ref().map_or(i as u64, |m| m.seed);
                    models.push((seed, w.model_for(&classes)?));
                }
            }
            if modes.contains(&PlannerMode::Learned) && models.is_empty() {
                return Err("learned mode needs --weights".into());
            }
            let mut cfg = EvalConfig { jobs, ..EvalConfig::default() };
            if let Some(a) = alpha {
                cfg.episode.planner.alpha = a;
            }
            let report = eval::run_suite(&sc, &modes, &models, &cfg);
            eval::write_report(&report, &out)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
        }
        Cmd::Serve {
            scenario,
            mode,
            weights,
            port,
            record,
            autorun,
            interval_ms,
            seed,
        } => {
            let sc = Arc::new(load_scenario(&scenario)?);
            let mode = parse_mode(&mode)?;
            let model = match weights {
                Some(p) => Some(WeightsFile::load(p)?.model_for(&sc.class_names)?),
                None => None,
            };
            let mut cfg = SessionConfig {
                mode,
                model,
                ..SessionConfig::default()
            };
            cfg.episode.seed = seed.unwrap_or(0);
            let session = Session::new(format!("{}-{port}", sc.id), sc, cfg)?;
            let listener = bridge::bind(&format!("127.0.0.1:{port}"))?;
            println!("serving on {}", listener.local_addr()?);
            let summary = bridge::serve(
                session,
                listener,
                ServeConfig {
                    step_interval: Duration::from_millis(interval_ms),
                    autorun,
                    record,
                    ..ServeConfig::default()
                },
            )?;
            println!("{summary:?}");
        }
    }
    Ok(())
}
