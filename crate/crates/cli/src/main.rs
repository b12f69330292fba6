use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use clap::{Parser, Subcommand, ValueEnum};
use rcisep::engine::{
    compare_instances, cutting_plane, read_ub_file, separation_metrics, write_metrics_csv, write_summary_csv,
    write_trace_csv, Limits, SeparatorSpec,
};
use rcisep::gnn::GnnParams;
use rcisep::instances::{generate_random, parse_cvrplib, to_cvrplib, CvrpInstance};
use rcisep::sep_exact::ExactConfig;
use rcisep::training::{collect_labels, load_dataset, save_dataset, train, LabelConfig, TrainConfig};
use rcisep::{Error, Result};

/// Rounded capacity inequality separation for CVRP cutting-plane bounds.
#[derive(Parser, Debug)]
#[command(name = "rcisep", version)]
struct Cli {
    /// Seed for instance generation and training.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Cutting-plane rounds (default depends on instance size).
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    /// Wall-clock limit per cutting-plane run, in seconds.
    #[arg(long, global = true)]
    time_limit: Option<f64>,
    /// Parameter checkpoint for the neural separator.
    #[arg(long, global = true)]
    checkpoint: Option<PathBuf>,
    /// Output file (or directory for `generate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SeparatorArg {
    Exact,
    Components,
    Greedy,
    Neural,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write random instances as CVRPLIB files.
    Generate {
        /// Customers per instance.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        count: usize,
    },
    /// Collect exact-separation labels into a dataset file.
    Labels {
        /// Instance files; random instances are generated when none are given.
        instances: Vec<PathBuf>,
        /// Number of random instances to generate.
        #[arg(long, default_value_t = 50)]
        random: usize,
        #[arg(long, default_value_t = 10)]
        n_min: usize,
        #[arg(long, default_value_t = 20)]
        n_max: usize,
    },
    /// Train the policy network on a dataset and write a checkpoint.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
    },
    /// Run the cutting-plane loop on one instance and write the trace CSV.
    Solve {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, value_enum)]
        separator: SeparatorArg,
    },
    /// Run several separators on several instances and write a summary CSV.
    Compare {
        instances: Vec<PathBuf>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "exact,components")]
        separators: Vec<SeparatorArg>,
        /// Best-known upper bounds as `name,value` lines.
        #[arg(long)]
        ub_file: Option<PathBuf>,
    },
    /// Separation quality of each separator on recorded support graphs.
    Sepbench {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "exact,components,greedy")]
        separators: Vec<SeparatorArg>,
    },
}

fn read_instance(path: &Path) -> Result<CvrpInstance> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Validation(format!("cannot read instance {}: {e}", path.display())))?;
    parse_cvrplib(&text)
}

fn out_path(cli: &Cli) -> Result<&Path> {
    cli.out.as_deref().ok_or_else(|| Error::Validation("--out is required".into()))
}

fn limits_for(cli: &Cli, inst: &CvrpInstance) -> Limits {
    let mut lim = Limits::for_instance(inst);
    if let Some(m) = cli.max_iter {
        lim.max_iter = m;
    }
    lim.time_limit = cli.time_limit.map(Duration::from_secs_f64);
    lim
}

fn spec_for(cli: &Cli, sep: SeparatorArg) -> Result<SeparatorSpec> {
    Ok(match sep {
        SeparatorArg::Exact => SeparatorSpec::Exact(ExactConfig::default()),
        SeparatorArg::Components => SeparatorSpec::Components,
        SeparatorArg::Greedy => SeparatorSpec::Greedy,
        SeparatorArg::Neural => {
            let path = cli
                .checkpoint
                .as_deref()
                .ok_or_else(|| Error::Validation("--separator neural requires --checkpoint".into()))?;
            if !path.exists() {
                return Err(Error::Validation(format!("checkpoint {} not found", path.display())));
            }
            SeparatorSpec::Neural(Arc::new(GnnParams::load(path)?))
        }
    })
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { n, count } => {
            let dir = out_path(cli)?;
            fs::create_dir_all(dir)?;
            for i in 0..*count {
                let inst = generate_random(*n, cli.seed + i as u64)?;
                let path = dir.join(format!("{}.vrp", inst.name));
                fs::write(&path, to_cvrplib(&inst))?;
                println!("{}", path.display());
            }
        }
        Command::Labels { instances, random, n_min, n_max } => {
            let insts = if instances.is_empty() {
                if n_min > n_max {
                    return Err(Error::Validation("--n-min exceeds --n-max".into()));
                }
                let span = (n_max - n_min + 1) as u64;
                (0..*random as u64)
                    .map(|i| generate_random(n_min + ((cli.seed + i) % span) as usize, cli.seed + i))
                    .collect::<Result<Vec<_>>>()?
            } else {
                instances.iter().map(|p| read_instance(p)).collect::<Result<Vec<_>>>()?
            };
            let config = LabelConfig { max_iter: cli.max_iter, ..Default::default() };
            let dataset = collect_labels(&insts, &config)?;
            save_dataset(&dataset, out_path(cli)?)?;
            println!("{} samples from {} instances", dataset.len(), insts.len());
        }
        Command::Train { dataset, epochs } => {
            let target = cli
                .checkpoint
                .as_deref()
                .or(cli.out.as_deref())
                .ok_or_else(|| Error::Validation("--checkpoint or --out is required".into()))?;
            let data = load_dataset(dataset)?;
            let config = TrainConfig { epochs: *epochs, seed: cli.seed, ..Default::default() };
            let out = train::<f64>(&data, &config)?;
            out.params.save(target)?;
            for (e, l) in out.epoch_losses.iter().enumerate() {
                println!("epoch {e}: loss {l:.6}");
            }
        }
        Command::Solve { instance, separator } => {
            let inst = read_instance(instance)?;
            let out = out_path(cli)?;
            let spec = spec_for(cli, *separator)?;
            let mut sep = spec.build();
            let trace = cutting_plane(&inst, sep.as_mut(), &limits_for(cli, &inst))?;
            write_trace_csv(&trace, fs::File::create(out)?)?;
            println!(
                "{}: lb {:.4} after {} rounds ({})",
                inst.name,
                trace.final_lb,
                trace.iterations(),
                trace.termination.as_str()
            );
        }
        Command::Compare { instances, separators, ub_file } => {
            let insts = instances.iter().map(|p| read_instance(p)).collect::<Result<Vec<_>>>()?;
            let specs = separators.iter().map(|&s| spec_for(cli, s)).collect::<Result<Vec<_>>>()?;
            let ubs = match ub_file {
                Some(p) => read_ub_file(&fs::read_to_string(p)?)?,
                None => BTreeMap::new(),
            };
            let limits = (cli.max_iter.is_some() || cli.time_limit.is_some()).then(|| Limits {
                max_iter: cli.max_iter.unwrap_or(usize::MAX),
                time_limit: cli.time_limit.map(Duration::from_secs_f64),
            });
            let rows = compare_instances(&insts, &specs, limits, &ubs)?;
            write_summary_csv(&rows, fs::File::create(out_path(cli)?)?)?;
        }
        Command::Sepbench { dataset, separators } => {
            let data = load_dataset(dataset)?;
            let mut rows = Vec::new();
            for &s in separators {
                let mut sep = spec_for(cli, s)?.build();
                rows.push(separation_metrics(&data.samples, sep.as_mut())?);
            }
            write_metrics_csv(&rows, fs::File::create(out_path(cli)?)?)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_user_error() { 2 } else { 1 })
        }
    }
}
