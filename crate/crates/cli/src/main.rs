use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cran_core::harness::{
    emit_results, load_run_config, output_dir, run_experiment, sample_feasible_trial, screen_instance,
    ExperimentKind, ExperimentPlan, MethodTag, RunConfig, RESULTS_ENV,
};
use cran_core::learner::{generate_dataset, train, Dataset, TrainedModel};
use cran_core::solver::{audit_solution, kkt_report, solve, Instance, Method};

#[derive(Parser)]
#[command(name = "cran-offload", version, about = "Power, CPU and fronthaul allocation for IoT offloading over a C-RAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON or TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Output directory; defaults to $CRAN_RESULTS_DIR/<experiment>/<timestamp> or results/...
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    antennas: Option<usize>,
    #[arg(long)]
    devices: Option<usize>,
    /// Cycles per task bit.
    #[arg(long)]
    eta: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one feasible scene and write it to scene.json.
    Scene(Common),
    /// Solve one instance with every optimizer variant.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Instance JSON written by `scene`; a fresh draw is used otherwise.
        #[arg(long)]
        instance: Option<PathBuf>,
    },
    /// Run a sweep experiment.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// power-vs-n, power-vs-eta, cdf, per-device-profile, dnn-eval or timing.
        #[arg(long, default_value = "power-vs-n")]
        experiment: String,
        /// Comma-separated methods overriding the experiment default.
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Generate a training dataset of solved instances.
    Dataset {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Train the allocation network on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Compare a trained model against the optimizer on fresh instances.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
    /// Per-device allocation table of solved instances.
    Profile(Common),
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    };
    let sys = &mut cfg.scenario.system;
    if let Some(k) = c.devices {
        *sys = sys.clone().with_devices(k);
    }
    if let Some(n) = c.antennas {
        sys.antennas = n;
    }
    if let Some(eta) = c.eta {
        sys.cycles_per_bit = eta;
    }
    cfg.scenario.validate()?;
    Ok(cfg)
}

fn resolve_out(c: &Common, experiment: &str) -> PathBuf {
    let stamp = chrono::Local::now().format("%Y%m%d-%H%M%S").to_string();
    let env_root = std::env::var_os(RESULTS_ENV).map(PathBuf::from);
    output_dir(c.out.as_deref(), env_root.as_deref(), experiment, &stamp)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn run_plan(c: &Common, cfg: &RunConfig, kind: ExperimentKind, methods: Option<Vec<MethodTag>>, model: Option<&Path>) -> Result<()> {
    let mut plan = ExperimentPlan::new(kind, cfg.scenario.clone(), c.trials.unwrap_or(100), c.seed);
    plan.solver = cfg.solver.clone();
    if let Some(s) = &cfg.sweep {
        plan.sweep = s.clone();
    }
    if let Some(m) = methods.or_else(|| cfg.methods.clone()) {
        plan.methods = m;
    }
    let model = match model {
        Some(p) => Some(TrainedModel::load(p)?),
        None => None,
    };
    if model.is_none() && plan.methods.contains(&MethodTag::Dnn) {
        if kind == ExperimentKind::Cdf {
            plan.methods.retain(|m| *m != MethodTag::Dnn);
        } else {
            bail!("{} needs --model", kind.tag());
        }
    }
    let result = run_experiment(&plan, c.jobs, model.as_ref())?;
    let dir = resolve_out(c, &plan.id);
    for f in emit_results(&result, &dir)? {
        println!("{}", f.display());
    }
    for f in &result.summary.failures {
        eprintln!("warning: {f}");
    }
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Scene(c) => {
            let cfg = load_config(&c)?;
            let st = sample_feasible_trial(&cfg.scenario, c.seed, 0)?;
            let dir = resolve_out(&c, "scene");
            ensure_dir(&dir)?;
            write_json(&dir.join("scene.json"), &st.trial)?;
            write_json(&dir.join("instance.json"), &st.instance)?;
            write_json(&dir.join("screen.json"), &screen_instance(&st.instance))?;
            println!("{} (draws: {})", dir.display(), st.draws);
        }
        Command::Solve { common: c, instance } => {
            let cfg = load_config(&c)?;
            let inst: Instance = match instance {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
                }
                None => sample_feasible_trial(&cfg.scenario, c.seed, 0)?.instance,
            };
            let dir = resolve_out(&c, "solve");
            ensure_dir(&dir)?;
            for method in [Method::Joint, Method::FixedF, Method::FixedVarpi] {
                match solve(&inst, method, &cfg.solver) {
                    Ok(sol) => {
                        let audit = audit_solution(&inst, &sol, 1e-6);
                        println!(
                            "{:<12} P_sum = {:.6e} W  varpi = {}  outer = {}  audit = {}",
                            method.tag(),
                            sol.total_power(),
                            sol.allocation.bits,
                            sol.trace.outer_iterations(),
                            if audit.passed() { "pass" } else { "FAIL" }
                        );
                        let trace = dir.join(format!("{}-trace.csv", method.tag()));
                        let f = std::fs::File::create(&trace).with_context(|| format!("creating {}", trace.display()))?;
                        sol.trace.write_csv(f)?;
                        write_json(&dir.join(format!("{}-allocation.json", method.tag())), &sol.allocation)?;
                        write_json(&dir.join(format!("{}-kkt.json", method.tag())), &kkt_report(&inst, &sol)?)?;
                    }
                    Err(e) => println!("{:<12} {e}", method.tag()),
                }
            }
        }
        Command::Sweep {
            common: c,
            experiment,
            methods,
            model,
        } => {
            let cfg = load_config(&c)?;
            let kind = ExperimentKind::parse(&experiment).with_context(|| format!("unknown experiment {experiment}"))?;
            let methods = methods
                .map(|ms| {
                    ms.iter()
                        .map(|m| MethodTag::parse(m).with_context(|| format!("unknown method {m}")))
                        .collect::<Result<Vec<_>>>()
                })
                .transpose()?;
            run_plan(&c, &cfg, kind, methods, model.as_deref())?;
        }
        Command::Dataset { common: c, count } => {
            let cfg = load_config(&c)?;
            let mut dcfg = cfg.dataset.clone();
            dcfg.master_seed = c.seed;
            dcfg.jobs = c.jobs;
            dcfg.solver = cfg.solver.clone();
            if let Some(n) = count.or(c.trials) {
                dcfg.count = n;
            }
            let ds = generate_dataset(&cfg.scenario, &dcfg)?;
            let dir = resolve_out(&c, "dataset");
            ensure_dir(&dir)?;
            ds.save(&dir.join("dataset.csv"))?;
            write_json(&dir.join("dataset-stats.json"), &ds.stats)?;
            println!(
                "{}: {} train / {} test, {} draws",
                dir.display(),
                ds.train.len(),
                ds.test.len(),
                ds.stats.draws
            );
        }
        Command::Train { common: c, dataset } => {
            let cfg = load_config(&c)?;
            let ds = Dataset::load(&dataset)?;
            let mut tcfg = cfg.train.clone();
            tcfg.seed = c.seed;
            let system = cfg.scenario.system.clone().with_devices(ds.devices);
            let model = train(&ds, &system, &tcfg)?;
            let dir = resolve_out(&c, "train");
            ensure_dir(&dir)?;
            model.save(&dir.join("model.json"))?;
            let loss = dir.join("loss.csv");
            let f = std::fs::File::create(&loss).with_context(|| format!("creating {}", loss.display()))?;
            model.curve.write_csv(f)?;
            println!(
                "{}: {} epochs, best test MSE {:.4e}",
                dir.display(),
                model.curve.test.len(),
                model.curve.best_test()
            );
        }
        Command::Eval { common: c, model } => {
            let cfg = load_config(&c)?;
            run_plan(&c, &cfg, ExperimentKind::DnnEval, None, Some(&model))?;
        }
        Command::Profile(c) => {
            let cfg = load_config(&c)?;
            let c = Common {
                trials: c.trials.or(Some(1)),
                ..c
            };
            run_plan(&c, &cfg, ExperimentKind::PerDeviceProfile, None, None)?;
        }
    }
    Ok(())
}
