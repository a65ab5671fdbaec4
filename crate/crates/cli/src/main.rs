use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use inl_cli::config::{RunConfig, Scheme};
use inl_cli::region::{answer, Instance, Query};
use inl_cli::{runner, OutDir};
use inl_core::baselines::bandwidth::{table1, table1_csv, table1_text, BandwidthParams, Scheme as BwScheme};
use inl_core::data::{gen_dataset, SyntheticSpec};
use inl_core::protocol::{checkpoint, metrics_csv};
use inl_core::verify::{self, Suite, REPORT_HEADER};
use serde_json::json;

#[derive(Parser)]
#[command(name = "inl", version, about = "In-network learning experiments and checks")]
struct Cli {
    /// Output directory (INL_OUT_DIR takes precedence).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Run everything on one thread.
    #[arg(long, global = true)]
    deterministic: bool,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic multi-view dataset as JSON.
    GenData {
        /// Dataset spec JSON; defaults to the standard five-view task.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "data.json")]
        name: String,
    },
    /// Train one scheme and write its metrics CSV and summary JSON.
    Train {
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
        /// Run config JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Also save the trained model here.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Bits exchanged by FL, SL and INL at the reference sizes.
    BandwidthTable {
        /// Compute one custom point from a parameter JSON instead.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Rate-region and bound queries on a JSON instance.
    Region {
        #[arg(value_enum)]
        query: RegionQuery,
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the verification suites; exits non-zero on any failure.
    Verify {
        #[arg(value_enum, default_value = "all")]
        suite: SuiteArg,
        /// Root seeds, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum RegionQuery {
    Feasible,
    Sum,
    Prop1,
    Lemma1,
    Lemma2,
}

#[derive(Clone, Copy, ValueEnum)]
enum SuiteArg {
    Gradients,
    Bounds,
    Regions,
    Bandwidth,
    All,
}

fn parse_scheme(s: &str) -> Result<Scheme> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    let out = OutDir::resolve(cli.out_dir.as_deref());
    match cli.command {
        Command::GenData { config, seed, name } => {
            let mut spec = match config {
                Some(p) => {
                    serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                        .with_context(|| format!("parsing {}", p.display()))?
                }
                None => SyntheticSpec::default(),
            };
            if let Some(s) = seed {
                spec.seed = s;
            }
            let data = gen_dataset(&spec)?;
            let path = out.write(&name, &data.to_json()?)?;
            println!("{}", path.display());
        }
        Command::Train { scheme, config, seed, epochs, checkpoint: ckpt } => {
            let mut cfg = match &config {
                Some(p) => RunConfig::load(p)?,
                None => RunConfig::default(),
            };
            if let Some(s) = scheme {
                cfg.scheme = s;
            }
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let out = match cli.out_dir {
                Some(_) => out,
                None => OutDir::resolve(cfg.out_dir.as_deref()),
            };
            let res = runner::run(&cfg, !cli.deterministic)?;
            let tag = cfg.scheme.as_str();
            out.write(&format!("{tag}_metrics.csv"), &metrics_csv(&res.rows))?;
            out.write_json(&format!("{tag}_summary.json"), &res.summary)?;
            if let Some(dir) = ckpt {
                checkpoint::save(&res.system, &dir)?;
            }
            println!("{}", serde_json::to_string_pretty(&res.summary)?);
        }
        Command::BandwidthTable { params } => match params {
            Some(p) => {
                let b: BandwidthParams = serde_json::from_str(&fs::read_to_string(&p)?)
                    .with_context(|| format!("parsing {}", p.display()))?;
                b.validate()?;
                let bits: serde_json::Map<String, serde_json::Value> = [BwScheme::Fl, BwScheme::Sl, BwScheme::Inl]
                    .iter()
                    .map(|s| (s.as_str().to_string(), json!(s.bits(&b))))
                    .collect();
                println!("{}", serde_json::to_string_pretty(&json!({"params": b, "bits": bits}))?);
            }
            None => {
                let cells = table1();
                out.write("bandwidth_table.csv", &table1_csv(&cells))?;
                print!("{}", table1_text(&cells));
                let matched = cells.iter().filter(|c| c.matched).count();
                println!("{matched}/{} cells match the reference values", cells.len());
            }
        },
        Command::Region { query, input } => {
            let text = fs::read_to_string(&input).with_context(|| format!("reading {}", input.display()))?;
            let inst = Instance::from_json(&text).with_context(|| format!("parsing {}", input.display()))?;
            let q = match query {
                RegionQuery::Feasible => Query::Feasible,
                RegionQuery::Sum => Query::Sum,
                RegionQuery::Prop1 => Query::Prop1,
                RegionQuery::Lemma1 => Query::Lemma1,
                RegionQuery::Lemma2 => Query::Lemma2,
            };
            let verdict = answer(q, &inst)?;
            let name = format!("region_{}.json", query.to_possible_value().expect("no skipped variants").get_name());
            out.write_json(&name, &verdict)?;
            println!("{}", serde_json::to_string_pretty(&verdict)?);
        }
        Command::Verify { suite, seeds } => return run_verify(&out, suite, &seeds),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_verify(out: &OutDir, suite: SuiteArg, seeds: &[u64]) -> Result<ExitCode> {
    let suite = match suite {
        SuiteArg::Gradients => Suite::Gradients,
        SuiteArg::Bounds => Suite::Bounds,
        SuiteArg::Regions => Suite::Regions,
        SuiteArg::Bandwidth => Suite::Bandwidth,
        SuiteArg::All => Suite::All,
    };
    let mut csv = format!("seed,{REPORT_HEADER}\n");
    let mut failing_seeds = Vec::new();
    let mut failing = Vec::new();
    for &seed in seeds {
        let report = verify::run(suite, seed)?;
        for line in report.to_csv().lines().skip(1) {
            csv.push_str(&format!("{seed},{line}\n"));
        }
        for c in report.failed() {
            failing.push(json!({"seed": seed, "suite": c.suite, "check": c.check, "instances": c.failures}));
        }
        if !report.passed() {
            failing_seeds.push(seed);
        }
    }
    let name = suite.as_str();
    out.write(&format!("verify_{name}.csv"), &csv)?;
    let passed = failing_seeds.is_empty();
    let verdict =
        json!({"suite": name, "seeds": seeds, "passed": passed, "failing_seeds": failing_seeds, "failing": failing});
    out.write_json(&format!("verify_{name}.json"), &verdict)?;
    print!("{csv}");
    if passed {
        println!("verify {name}: all checks passed");
        Ok(ExitCode::SUCCESS)
    } else {
        let list: Vec<String> = failing_seeds.iter().map(u64::to_string).collect();
        eprintln!("verify {name}: FAILED; failing seeds: {}", list.join(","));
        for f in &failing {
            eprintln!("  {f}");
        }
        Ok(ExitCode::FAILURE)
    }
}
