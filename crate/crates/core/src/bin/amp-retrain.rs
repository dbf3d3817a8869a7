use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use amp_retrain::bayesmix::{BayesMixConfig, DemoConfig};
use amp_retrain::glm::{GlmParams, Link, ScheduleGlm};
use amp_retrain::gmm::{AggregatorGmm, GmmParams, ScheduleGmm};
use amp_retrain::gmm_se::{SeMapVariant, DEFAULT_GRID, DEFAULT_U_MAX};
use amp_retrain::harness::{
    execute, write_outputs, BayesApplyConfig, BayesDemoConfig, BayesFitConfig, CobwebConfig,
    CommandConfig, CrossoverConfig, DataSpec, DatasetConfig, ExperimentConfig, MapSpec, ModelSpec,
    SeConfig,
};
use amp_retrain::numerics::DEFAULT_ORDER_2D;
use amp_retrain::{Error, Result};

/// Retraining with noisy labels: AMP simulations, state evolution and
/// logit-mixture targets.
#[derive(Parser, Debug)]
#[command(name = "amp-retrain", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory. Defaults to $AMP_RETRAIN_OUT/<command>, or
    /// ./amp-retrain-out/<command> when the variable is unset.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for replications; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Replicated AMP runs compared with the state-evolution prediction.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short = 'T', long, default_value_t = 10)]
        iterations: usize,
        #[arg(long, default_value_t = 10)]
        replications: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// State-evolution trajectory only (plus the hard-rule limits for the mixture model).
    Se {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(short = 'T', long, default_value_t = 10)]
        iterations: usize,
    },
    /// Iterates an η² map from u1 and samples the map for plotting.
    Cobweb {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, value_enum, default_value_t = MapKind::Opt)]
        map: MapKind,
        #[arg(long, default_value_t = 0.04)]
        u1: f64,
        #[arg(short = 'T', long, default_value_t = 20)]
        iterations: usize,
        #[arg(long, default_value_t = 201)]
        grid_points: usize,
        #[arg(long, default_value_t = 10.0)]
        u_max: f64,
    },
    /// Crossover between the full- and consensus-retraining maps for each p.
    Crossover {
        #[arg(long, default_value_t = 1.5)]
        gamma: f64,
        #[arg(long, default_value_t = 2.0)]
        alpha: f64,
        #[arg(long, default_value_t = 0.3)]
        pi_plus: f64,
        /// Comma-separated flip probabilities.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, default_value_t = DEFAULT_U_MAX)]
        u_max: f64,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
    },
    /// Logit-mixture targets.
    Bayesmix {
        #[command(subcommand)]
        action: BayesAction,
    },
    /// Writes one sampled dataset.
    Dataset {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        replication: u64,
    },
    /// Re-runs the command recorded in a config.json or any output table.
    Replay { file: PathBuf },
}

#[derive(Subcommand, Debug)]
enum BayesAction {
    /// Fits the two-component mixture to a logit file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        em: EmArgs,
    },
    /// Emits targets for a logit file, fitting first unless --fit is given.
    Apply {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        fit: Option<PathBuf>,
        #[command(flatten)]
        em: EmArgs,
    },
    /// Ridge-regression retraining loop on simulated mixture data.
    Demo {
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value_t = 0.5)]
        pi_plus: f64,
        #[arg(long, default_value_t = 2000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        rounds: usize,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Ridge penalty per training sample.
        #[arg(long, default_value_t = 10.0)]
        ridge: f64,
        #[command(flatten)]
        em: EmArgs,
    },
}

#[derive(Args, Debug)]
struct EmArgs {
    /// Label flip probability.
    #[arg(long, default_value_t = 0.45)]
    p: f64,
    #[arg(long, default_value_t = 500)]
    em_max_iters: usize,
    #[arg(long, default_value_t = 1e-10)]
    em_tol: f64,
    /// Defaults to 1e-3 times the standard deviation of the logits.
    #[arg(long)]
    sigma_floor: Option<f64>,
}

impl EmArgs {
    fn config(&self) -> BayesMixConfig {
        BayesMixConfig {
            p: self.p,
            em_max_iters: self.em_max_iters,
            em_tol: self.em_tol,
            sigma_floor: self.sigma_floor,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ModelKind {
    Gmm,
    Glm,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum LinkKind {
    Sign,
    Logistic,
    Probit,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum AggregatorKind {
    Optimal,
    OptimalPlugin,
    Identity,
    SmoothedFt,
    SmoothedCt,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum MapKind {
    Opt,
    Ft,
    Ct,
    SmoothedFt,
    SmoothedCt,
}

#[derive(Args, Debug)]
struct ModelArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Gmm)]
    model: ModelKind,
    #[arg(long, default_value_t = 1.5)]
    gamma: f64,
    /// d/n.
    #[arg(long, default_value_t = 0.8)]
    alpha: f64,
    /// Label flip probability.
    #[arg(long, default_value_t = 0.4)]
    p: f64,
    /// Class prior of +1 (mixture model only).
    #[arg(long, default_value_t = 0.3)]
    pi_plus: f64,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, value_enum, default_value_t = LinkKind::Sign)]
    link: LinkKind,
    #[arg(long, default_value_t = 1.0)]
    link_scale: f64,
    #[arg(long, value_enum, default_value_t = AggregatorKind::Optimal)]
    aggregator: AggregatorKind,
    /// Sharpness of the smoothed hard rules.
    #[arg(long, default_value_t = 100.0)]
    beta: f64,
    #[arg(long, default_value_t = DEFAULT_ORDER_2D)]
    quad_order: usize,
}

impl ModelArgs {
    fn gmm_params(&self) -> Result<GmmParams> {
        GmmParams::new(self.gamma, self.alpha, self.p, self.pi_plus, self.n)
    }

    fn glm_params(&self) -> Result<GlmParams> {
        let link = match self.link {
            LinkKind::Sign => Link::Sign,
            LinkKind::Logistic => Link::Logistic {
                scale: self.link_scale,
            },
            LinkKind::Probit => Link::Probit {
                scale: self.link_scale,
            },
        };
        GlmParams::new(self.gamma, self.alpha, self.p, link, self.n)
    }

    fn spec(&self) -> Result<ModelSpec> {
        match self.model {
            ModelKind::Gmm => {
                let schedule = match self.aggregator {
                    AggregatorKind::Optimal => ScheduleGmm::Optimal,
                    AggregatorKind::OptimalPlugin => ScheduleGmm::OptimalPlugin,
                    AggregatorKind::Identity => ScheduleGmm::Identity,
                    AggregatorKind::SmoothedFt => ScheduleGmm::SmoothedFullRt { beta: self.beta },
                    AggregatorKind::SmoothedCt => {
                        ScheduleGmm::SmoothedConsensusRt { beta: self.beta }
                    }
                };
                Ok(ModelSpec::Gmm {
                    params: self.gmm_params()?,
                    schedule,
                })
            }
            ModelKind::Glm => {
                let schedule = match self.aggregator {
                    AggregatorKind::Optimal => ScheduleGlm::Optimal {
                        order: self.quad_order,
                    },
                    AggregatorKind::Identity => ScheduleGlm::Identity,
                    other => {
                        return Err(Error::Config(format!(
                            "aggregator {other:?} is only available for the mixture model"
                        )))
                    }
                };
                Ok(ModelSpec::Glm {
                    params: self.glm_params()?,
                    schedule,
                })
            }
        }
    }
}

fn build(command: Command) -> Result<CommandConfig> {
    Ok(match command {
        Command::Simulate {
            model,
            iterations,
            replications,
            seed,
        } => CommandConfig::Simulate(ExperimentConfig {
            model: model.spec()?,
            iterations,
            replications,
            master_seed: seed,
        }),
        Command::Se { model, iterations } => CommandConfig::Se(SeConfig {
            model: model.spec()?,
            iterations,
        }),
        Command::Cobweb {
            model,
            map,
            u1,
            iterations,
            grid_points,
            u_max,
        } => {
            let map = match model.model {
                ModelKind::Glm => MapSpec::Glm {
                    params: model.glm_params()?,
                    order: model.quad_order,
                },
                ModelKind::Gmm => {
                    let variant = match map {
                        MapKind::Opt => SeMapVariant::Opt,
                        MapKind::Ft => SeMapVariant::FtLimit,
                        MapKind::Ct => SeMapVariant::CtLimit,
                        MapKind::SmoothedFt => SeMapVariant::Smoothed {
                            agg: AggregatorGmm::SmoothedFullRt { beta: model.beta },
                        },
                        MapKind::SmoothedCt => SeMapVariant::Smoothed {
                            agg: AggregatorGmm::SmoothedConsensusRt { beta: model.beta },
                        },
                    };
                    MapSpec::Gmm {
                        params: model.gmm_params()?,
                        variant,
                    }
                }
            };
            CommandConfig::Cobweb(CobwebConfig {
                map,
                u1,
                iterations,
                grid_points,
                u_max,
            })
        }
        Command::Crossover {
            gamma,
            alpha,
            pi_plus,
            p,
            u_max,
            grid,
        } => CommandConfig::Crossover(CrossoverConfig {
            gamma,
            alpha,
            pi_plus,
            p_values: p,
            u_max,
            grid,
        }),
        Command::Bayesmix { action } => match action {
            BayesAction::Fit { input, em } => CommandConfig::BayesmixFit(BayesFitConfig {
                input,
                bayes: em.config(),
            }),
            BayesAction::Apply { input, fit, em } => {
                CommandConfig::BayesmixApply(BayesApplyConfig {
                    input,
                    fit,
                    bayes: em.config(),
                })
            }
            BayesAction::Demo {
                gamma,
                alpha,
                pi_plus,
                n,
                rounds,
                seeds,
                seed,
                ridge,
                em,
            } => {
                let bayes = em.config();
                CommandConfig::BayesmixDemo(BayesDemoConfig {
                    params: GmmParams::new(gamma, alpha, bayes.p, pi_plus, n)?,
                    bayes,
                    demo: DemoConfig {
                        ridge_per_sample: ridge,
                    },
                    rounds,
                    seeds,
                    master_seed: seed,
                })
            }
        },
        Command::Dataset {
            model,
            seed,
            replication,
        } => {
            let data = match model.model {
                ModelKind::Gmm => DataSpec::Gmm {
                    params: model.gmm_params()?,
                },
                ModelKind::Glm => DataSpec::Glm {
                    params: model.glm_params()?,
                },
            };
            CommandConfig::Dataset(DatasetConfig {
                data,
                master_seed: seed,
                replication,
            })
        }
        Command::Replay { file } => CommandConfig::load(&file)?,
    })
}

fn command_name(cmd: &CommandConfig) -> &'static str {
    match cmd {
        CommandConfig::Simulate(_) => "simulate",
        CommandConfig::Se(_) => "se",
        CommandConfig::Cobweb(_) => "cobweb",
        CommandConfig::Crossover(_) => "crossover",
        CommandConfig::BayesmixFit(_) => "bayesmix-fit",
        CommandConfig::BayesmixApply(_) => "bayesmix-apply",
        CommandConfig::BayesmixDemo(_) => "bayesmix-demo",
        CommandConfig::Dataset(_) => "dataset",
    }
}

fn run(cli: Cli) -> Result<()> {
    let cmd = build(cli.command)?;
    let dir = match cli.out {
        Some(dir) => dir,
        None => {
            let base = std::env::var_os("AMP_RETRAIN_OUT")
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("amp-retrain-out"));
            base.join(command_name(&cmd))
        }
    };
    let outputs = execute(&cmd, cli.jobs)?;
    write_outputs(&dir, &cmd, &outputs)?;
    if let Some((name, table)) = outputs.tables.first() {
        if table.rows.len() <= 40 {
            print!("{}", table.render());
        } else {
            println!(
                "{} rows written to {}",
                table.rows.len(),
                dir.join(name).display()
            );
        }
    }
    eprintln!("outputs in {}", dir.display());
    match outputs.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
