use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use ac_lab::error::{LabError, Result};
use ac_lab::harness::{self, config, ConfigFile, Overrides, RunReport};

#[derive(Parser)]
#[command(name = "ac-lab", version, about = "Allen-Cahn layer experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one experiment
    Run {
        name: String,
        #[command(flatten)]
        common: Common,
        /// Comma-separated epsilon list, descending
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        #[arg(long)]
        ny: Option<usize>,
    },
    /// List registered experiments
    List,
    /// Show details of one experiment
    Describe { name: String },
    /// Run every experiment
    All {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<ConfigFile> {
        match &self.config {
            Some(p) => ConfigFile::load(p),
            None => Ok(ConfigFile::default()),
        }
    }
}

fn print_report(r: &RunReport) {
    println!(
        "[{:>2}] {:<24} {}  ({:.1} s)",
        r.criterion,
        r.experiment,
        if r.pass { "PASS" } else { "FAIL" },
        r.elapsed_s
    );
    for c in &r.checks {
        println!("       {} {:<32} {:>12.4e}  {}", if c.pass { "ok  " } else { "FAIL" }, c.name, c.value, c.limit);
    }
}

fn code_of(results: &[Result<RunReport>]) -> i32 {
    let mut code = 0;
    for r in results {
        let c = match r {
            Ok(r) if r.pass => 0,
            Ok(_) => 1,
            Err(e) => e.exit_code(),
        };
        code = code.max(c);
    }
    code
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.cmd {
        Cmd::List => {
            for e in harness::registry() {
                println!("{:<24} [{:>2}] {}", e.name, e.criterion, e.summary);
            }
            Ok(0)
        }
        Cmd::Describe { name } => {
            let e = harness::find(&name)?;
            println!("name:      {}\ncriterion: {}\n{}", e.name, e.criterion, e.summary);
            Ok(0)
        }
        Cmd::Run { name, common, eps, ny } => {
            let cfg = common.load()?;
            let root = config::out_root(common.out.as_deref(), &cfg);
            let spec = cfg.spec(&name, &root, &Overrides { eps, ny, seed: common.seed })?;
            let res = harness::run(&spec);
            match &res {
                Ok(r) => {
                    print_report(r);
                    println!("artifacts: {}", spec.out.display());
                }
                Err(e) => eprintln!("{name}: {e}"),
            }
            Ok(code_of(&[res]))
        }
        Cmd::All { common, jobs } => {
            let cfg = common.load()?;
            let root = config::out_root(common.out.as_deref(), &cfg);
            let jobs = cfg.run.jobs.filter(|_| jobs == 1).unwrap_or(jobs).max(1);
            let cli = Overrides { seed: common.seed, ..Default::default() };
            let specs = harness::registry()
                .iter()
                .map(|e| cfg.spec(e.name, &root, &cli))
                .collect::<Result<Vec<_>>>()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| LabError::Config(e.to_string()))?;
            let results: Vec<Result<RunReport>> = pool.install(|| specs.par_iter().map(harness::run).collect());
            for (s, r) in specs.iter().zip(&results) {
                match r {
                    Ok(r) => print_report(r),
                    Err(e) => println!("[--] {:<24} ERROR {e}", s.name),
                }
            }
            Ok(code_of(&results))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(c) => ExitCode::from(c as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
