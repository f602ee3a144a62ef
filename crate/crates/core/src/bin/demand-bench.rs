use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use demand_bench::config::KeyValues;
use demand_bench::econometric::{estimate_all, product_distances, write_estimates_csv};
use demand_bench::features::{build_feature_table, read_feature_csv, write_feature_csv};
use demand_bench::harness::{
    descriptive_stats, feature_config_from, ols_config_from, run_comparison, train_config_from,
    truth_at_mean_prices, write_stats_csv, ExperimentSpec, RunManifest,
};
use demand_bench::market::{
    read_catalog_csv, read_panel_csv, simulate_panel, write_catalog_csv, write_panel_csv,
    write_truth_csv, MarketConfig, ObservedCatalog, SalesPanel,
};
use demand_bench::ml::{train, write_loss_history_csv};
use demand_bench::optimizer::{optimize, read_problem_csv, write_solution_csv, DEFAULT_STARTS};
use demand_bench::{Error, Result};

#[derive(Parser)]
#[command(
    name = "demand-bench",
    version,
    about = "Elasticity estimation benchmark on a simulated logit market"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` settings file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a market: panel.csv, catalog.csv, truth.csv, elasticity.csv.
    Simulate,
    /// Build the feature table: features.csv.
    Featurize {
        #[arg(long)]
        panel: PathBuf,
        /// Catalog whose characteristics become item features.
        #[arg(long)]
        catalog: Option<PathBuf>,
    },
    /// Train the structural network: model.json, loss_history.csv, elasticities.csv.
    FitMl {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        features: PathBuf,
    },
    /// Per-product log-log regressions: ols.csv.
    FitOls {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
    },
    /// Run the estimator comparison: rows.csv, summary.csv, density.csv, failures.csv.
    /// `--seed` restricts the run to that single seed.
    Compare,
    /// Solve a margin-constrained pricing problem: solution.csv, solution.json.
    Optimize {
        /// CSV with `product_id,alpha,beta,cost,margin_lb,margin_ub`.
        #[arg(long)]
        problem: PathBuf,
        #[arg(long)]
        margin_target: Option<f64>,
        #[arg(long)]
        price_cap: Option<f64>,
        #[arg(long, default_value_t = DEFAULT_STARTS)]
        starts: usize,
    },
    /// Descriptive statistics of a panel: stats.csv.
    Stats {
        #[arg(long)]
        panel: PathBuf,
    },
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn load_panel(path: &Path) -> Result<SalesPanel> {
    read_panel_csv(open(path)?)
}

/// Catalog rows must follow the panel's ascending product ids.
fn load_catalog(path: &Path, panel: &SalesPanel) -> Result<ObservedCatalog> {
    let (catalog, _) = read_catalog_csv(open(path)?)?;
    if catalog.product_ids != panel.product_ids() {
        return Err(Error::InvalidConfig(
            "catalog product ids do not match the panel's".into(),
        ));
    }
    Ok(catalog)
}

/// Writes each named output through `f` and records its hash.
struct Outputs<'a> {
    dir: &'a Path,
    manifest: RunManifest,
}

impl Outputs<'_> {
    fn write(&mut self, name: &str, f: impl FnOnce(BufWriter<File>) -> Result<()>) -> Result<()> {
        f(create(self.dir, name)?)?;
        self.manifest.record_output(self.dir, name)
    }

    fn finish(self) -> Result<()> {
        self.manifest.write(self.dir)
    }
}

fn run(cli: Cli) -> Result<()> {
    let Common { config, seed, out } = cli.common;
    let kv = match &config {
        Some(path) => KeyValues::load(path)?,
        None => KeyValues::default(),
    };
    std::fs::create_dir_all(&out)?;
    let manifest = |command: &str, settings: serde_json::Value| {
        RunManifest::new(command, seed, config.as_deref(), settings)
    };

    match cli.command {
        Command::Simulate => {
            let mut market = MarketConfig::from_key_values(&kv)?;
            if let Some(s) = seed {
                market.seed = s;
            }
            let (catalog, panel) = simulate_panel(&market)?;
            let truth = truth_at_mean_prices(&catalog, &panel)?;
            let mean_prices = panel.mean_prices();
            let mut o = Outputs {
                dir: &out,
                manifest: manifest("simulate", serde_json::to_value(&market)?),
            };
            o.write("panel.csv", |w| write_panel_csv(&panel, w))?;
            o.write("catalog.csv", |w| write_catalog_csv(&catalog, w))?;
            o.write("truth.csv", |w| write_truth_csv(&catalog, w))?;
            o.write("elasticity.csv", |w| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["product_id", "mean_price", "elasticity"])?;
                for ((id, p), e) in mean_prices.iter().zip(&truth) {
                    w.write_record([id.to_string(), p.to_string(), e.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
            o.finish()
        }
        Command::Featurize { panel, catalog } => {
            let features = feature_config_from(&kv)?;
            let p = load_panel(&panel)?;
            let cat = catalog
                .as_deref()
                .map(|c| load_catalog(c, &p))
                .transpose()?;
            let table = build_feature_table(&p, None, cat.as_ref(), &features)?;
            let mut o = Outputs {
                dir: &out,
                manifest: manifest("featurize", serde_json::to_value(&features)?),
            };
            o.write("features.csv", |w| write_feature_csv(&table, w))?;
            o.finish()
        }
        Command::FitMl { panel, features } => {
            let mut cfg = train_config_from(&kv)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let p = load_panel(&panel)?;
            let table = read_feature_csv(open(&features)?)?;
            let model = train(&p, &table, &cfg)?;
            let elasticities = model.product_elasticities(&table)?;
            let mut o = Outputs {
                dir: &out,
                manifest: manifest("fit-ml", serde_json::to_value(&cfg)?),
            };
            let text = model.to_json()?;
            o.write("model.json", |mut w| {
                use std::io::Write;
                w.write_all(text.as_bytes())?;
                Ok(w.flush()?)
            })?;
            o.write("loss_history.csv", |w| {
                write_loss_history_csv(&model.history, w)
            })?;
            o.write("elasticities.csv", |w| {
                let mut w = csv::Writer::from_writer(w);
                w.write_record(["product_id", "elasticity"])?;
                for (id, e) in &elasticities {
                    w.write_record([id.to_string(), e.to_string()])?;
                }
                w.flush()?;
                Ok(())
            })?;
            o.finish()
        }
        Command::FitOls { panel, catalog } => {
            let cfg = ols_config_from(&kv)?;
            let p = load_panel(&panel)?;
            let cat = load_catalog(&catalog, &p)?;
            let (_, distances) = product_distances(&cat.features, None, cfg.rank)?;
            let estimates = estimate_all(&p, &distances, cfg.degree)?;
            let mut o = Outputs {
                dir: &out,
                manifest: manifest("fit-ols", serde_json::to_value(&cfg)?),
            };
            o.write("ols.csv", |w| write_estimates_csv(&estimates, w))?;
            o.finish()
        }
        Command::Compare => {
            let mut spec = ExperimentSpec::from_key_values(&kv)?;
            if let Some(s) = seed {
                spec.seeds = vec![s];
            }
            let report = run_comparison(&spec)?;
            let mut o = Outputs {
                dir: &out,
                manifest: manifest("compare", serde_json::to_value(&spec)?),
            };
            o.write("rows.csv", |w| report.write_rows_csv(w))?;
            o.write("summary.csv", |w| report.write_summary_csv(w))?;
            o.write("density.csv", |w| report.write_density_csv(w))?;
            o.write("failures.csv", |w| report.write_failures_csv(w))?;
            o.finish()
        }
        Command::Optimize {
            problem,
            margin_target,
            price_cap,
            starts,
        } => {
            let margin_target = margin_target.or(kv.parse_opt("optimizer.margin_target")?);
            let price_cap = price_cap.or(kv.parse_opt("optimizer.price_cap")?);
            let seed = seed.or(kv.parse_opt("optimizer.seed")?).unwrap_or(0);
            let problem = read_problem_csv(open(&problem)?, margin_target, price_cap)?;
            let solution = optimize(&problem, starts, seed)?;
            let settings = json!({ "problem": problem, "starts": starts, "seed": seed });
            let mut o = Outputs {
                dir: &out,
                manifest: manifest("optimize", settings),
            };
            o.write("solution.csv", |w| {
                write_solution_csv(&problem, &solution, w)
            })?;
            o.write("solution.json", |mut w| {
                serde_json::to_writer_pretty(&mut w, &solution)?;
                use std::io::Write;
                Ok(w.flush()?)
            })?;
            o.finish()
        }
        Command::Stats { panel } => {
            let stats = descriptive_stats(&load_panel(&panel)?)?;
            let mut o = Outputs {
                dir: &out,
                manifest: manifest("stats", json!({ "panel": panel })),
            };
            o.write("stats.csv", |w| write_stats_csv(&stats, w))?;
            o.finish()
        }
    }
}

fn error_line(kind: &str, message: &str) {
    eprintln!(
        "{}",
        json!({ "status": "error", "kind": kind, "message": message })
    );
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            error_line("usage", e.to_string().trim());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(e.kind(), &e.to_string());
            ExitCode::FAILURE
        }
    }
}
