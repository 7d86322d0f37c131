use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::error;
use niche_core::equilibrium::{BorensteinParams, SzParams};
use niche_core::pipeline::{
    cmd_describe, cmd_equilibrium, cmd_gen_synthetic, cmd_impute, cmd_ingest, cmd_niche,
    cmd_regress, cmd_report, EquilibriumRequest, EquilibriumResult, PipelineConfig,
};
use niche_core::synthetic::SyntheticSpec;
use niche_core::NicheError;

/// Niche index from app descriptions, the panel regression program, and
/// pricing-equilibrium checks.
#[derive(Debug, Parser)]
#[command(name = "niche", version)]
struct Cli {
    /// key = value config file; flags below override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    overrides: ConfigFlags,

    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

/// One optional flag per config key. Values are parsed by the config layer so
/// files and flags share one grammar.
#[derive(Debug, Args)]
struct ConfigFlags {
    #[arg(long, global = true)]
    input: Option<String>,
    #[arg(long, global = true)]
    top_firms: Option<String>,
    #[arg(long, global = true)]
    wave_dates: Option<String>,
    #[arg(long, global = true)]
    out_dir: Option<String>,
    #[arg(long, global = true)]
    min_words: Option<String>,
    #[arg(long, global = true)]
    max_words: Option<String>,
    #[arg(long, global = true)]
    threshold_min: Option<String>,
    #[arg(long, global = true)]
    threshold_max: Option<String>,
    #[arg(long, global = true)]
    svd_ratio: Option<String>,
    #[arg(long, global = true)]
    svd_max_rank: Option<String>,
    #[arg(long, global = true)]
    svd_centered: Option<String>,
    /// Comma-separated elbow grid.
    #[arg(long, global = true)]
    k_coarse: Option<String>,
    /// Comma-separated silhouette grid.
    #[arg(long, global = true)]
    k_fine: Option<String>,
    /// Cluster count, or "auto" for the best fine-grid silhouette.
    #[arg(long, global = true)]
    chosen_k: Option<String>,
    #[arg(long, global = true)]
    kmeans_restarts: Option<String>,
    #[arg(long, global = true)]
    seed: Option<String>,
    #[arg(long, global = true)]
    anchor_date: Option<String>,
    /// classical, hc1 or cluster.
    #[arg(long, global = true)]
    se_mode: Option<String>,
    /// Three decreasing p-value cut-offs, e.g. 0.1,0.05,0.01.
    #[arg(long, global = true)]
    star_thresholds: Option<String>,
    #[arg(long, global = true)]
    cross_section_month: Option<String>,
    #[arg(long, global = true)]
    step_margin: Option<String>,
    #[arg(long, global = true)]
    length_bin: Option<String>,
    #[arg(long, global = true)]
    hist_bin: Option<String>,
}

impl ConfigFlags {
    fn pairs(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("input", &self.input),
            ("top-firms", &self.top_firms),
            ("wave-dates", &self.wave_dates),
            ("out-dir", &self.out_dir),
            ("min-words", &self.min_words),
            ("max-words", &self.max_words),
            ("threshold-min", &self.threshold_min),
            ("threshold-max", &self.threshold_max),
            ("svd-ratio", &self.svd_ratio),
            ("svd-max-rank", &self.svd_max_rank),
            ("svd-centered", &self.svd_centered),
            ("k-coarse", &self.k_coarse),
            ("k-fine", &self.k_fine),
            ("chosen-k", &self.chosen_k),
            ("kmeans-restarts", &self.kmeans_restarts),
            ("seed", &self.seed),
            ("anchor-date", &self.anchor_date),
            ("se-mode", &self.se_mode),
            ("star-thresholds", &self.star_thresholds),
            ("cross-section-month", &self.cross_section_month),
            ("step-margin", &self.step_margin),
            ("length-bin", &self.length_bin),
            ("hist-bin", &self.hist_bin),
        ]
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse the input JSONL into the dense panel.
    Ingest,
    /// Apply the imputation rules.
    Impute,
    /// Summary statistics and correlations.
    Describe,
    /// Text preparation, TF-IDF, SVD and k-means; writes the niche index.
    Niche,
    /// Step models, interaction tables and pooled OLS.
    Regress,
    /// Assemble report.md from existing artifacts.
    Report,
    /// ingest, impute, niche, describe, regress and report.
    Run,
    /// Solve a pricing-equilibrium model.
    Equilibrium(EquilibriumArgs),
    /// Write a synthetic panel, manifest, top-firm list and wave dates.
    GenSynthetic(GenArgs),
    /// Print the effective configuration.
    Config,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Model {
    Sz,
    Borenstein,
}

#[derive(Debug, Args)]
struct EquilibriumArgs {
    #[arg(long, value_enum)]
    model: Model,
    /// Firm A's share at equal prices; omit to sweep the default grid.
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    l_alpha: f64,
    /// Defaults to l-alpha.
    #[arg(long)]
    l_beta: Option<f64>,
    /// Marginal cost in the loyalty game.
    #[arg(long, default_value_t = 0.0)]
    c: f64,
    /// Group-specific prices instead of one price per firm.
    #[arg(long)]
    discrimination: bool,
    #[arg(long, default_value_t = 4)]
    n_brands: usize,
    #[arg(long, default_value_t = 2.0)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    c_strength: f64,
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    #[arg(long, default_value_t = 0.0)]
    fixed_cost: f64,
    #[arg(long, default_value_t = 0.5)]
    marginal_cost: f64,
    /// Reservation price of a second, low-valuation segment.
    #[arg(long)]
    segment2_a: Option<f64>,
}

#[derive(Debug, Args)]
struct GenArgs {
    /// Output directory for the corpus.
    #[arg(long)]
    dest: PathBuf,
    #[arg(long, default_value_t = 200)]
    apps: usize,
    #[arg(long, default_value_t = 18)]
    months: usize,
    #[arg(long, default_value_t = 3)]
    topics: usize,
    #[arg(long, default_value_t = -0.3)]
    beta_niche: f64,
    #[arg(long, default_value_t = 0.03)]
    missing_rate: f64,
    /// Generator seed (independent of the pipeline seed).
    #[arg(long, default_value_t = 7)]
    gen_seed: u64,
    /// No absent fields, gaps or deaths.
    #[arg(long)]
    complete: bool,
}

fn build_config(cli: &Cli) -> niche_core::Result<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(p) = &cli.config {
        cfg.apply_file(p)?;
    }
    cfg.apply_env(|k| std::env::var(k).ok())?;
    for (key, value) in cli.overrides.pairs() {
        if let Some(v) = value {
            cfg.set(key, v)?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn equilibrium_request(a: &EquilibriumArgs) -> niche_core::Result<EquilibriumRequest> {
    Ok(match a.model {
        Model::Sz => EquilibriumRequest::ShafferZhang {
            params: match a.theta {
                Some(theta) => Some(SzParams::new(
                    theta,
                    a.l_alpha,
                    a.l_beta.unwrap_or(a.l_alpha),
                    a.c,
                    a.discrimination,
                )?),
                None => None,
            },
            discrimination_grid: a.discrimination,
        },
        Model::Borenstein => {
            let params = BorensteinParams {
                n_brands: a.n_brands,
                a: a.a,
                c_strength: a.c_strength,
                l: a.l,
                fixed_cost: a.fixed_cost,
                marginal_cost: a.marginal_cost,
            };
            EquilibriumRequest::Borenstein {
                params,
                second_segment: a.segment2_a.map(|a2| BorensteinParams { a: a2, ..params }),
            }
        }
    })
}

fn print_equilibrium(res: &EquilibriumResult) {
    match res {
        EquilibriumResult::ShafferZhang(rows) => {
            for r in rows {
                let p = &r.prices;
                let prices = if r.params.discrimination {
                    format!(
                        "alpha / beta: A {} / {}, B {} / {}",
                        p.p_a, p.p_tilde_a, p.p_b, p.p_tilde_b
                    )
                } else {
                    format!("{}, {}", p.p_a, p.p_b)
                };
                println!(
                    "theta={} l_alpha={} l_beta={} c={}: prices {prices}; profits {}, {}; nash {}",
                    r.params.theta,
                    r.params.l_alpha,
                    r.params.l_beta,
                    r.params.c,
                    r.profits.0,
                    r.profits.1,
                    if r.certified {
                        "certified"
                    } else {
                        "NOT certified"
                    }
                );
            }
        }
        EquilibriumResult::Borenstein(o) => {
            println!(
                "price {} quantity {} regime {:?} profit {}",
                o.primary.price, o.primary.quantity, o.primary.regime, o.profit
            );
            if let (Some(s), Some(t)) = (&o.secondary, o.theta_disc) {
                println!(
                    "second segment price {} quantity {}; theta_disc {t}",
                    s.price, s.quantity
                );
            }
        }
    }
}

fn run(cli: &Cli) -> niche_core::Result<()> {
    if let Command::GenSynthetic(g) = &cli.command {
        let mut spec = SyntheticSpec {
            n_apps: g.apps,
            n_months: g.months,
            n_topics: g.topics,
            beta_niche_log_price: g.beta_niche,
            missing_rate: g.missing_rate,
            seed: g.gen_seed,
            ..SyntheticSpec::default()
        };
        if g.complete {
            spec = spec.complete();
        }
        let m = cmd_gen_synthetic(&spec, &g.dest)?;
        println!(
            "wrote {} apps x {} months to {}",
            m.n_apps,
            m.n_months,
            g.dest.display()
        );
        return Ok(());
    }
    let cfg = build_config(cli)?;
    match &cli.command {
        Command::Ingest => {
            let s = cmd_ingest(&cfg)?;
            println!(
                "{} apps x {} months ({} dropped)",
                s.n_apps, s.n_months, s.dropped
            );
        }
        Command::Impute => {
            let s = cmd_impute(&cfg)?;
            println!("{} apps retained, {} deleted", s.n_apps, s.dropped);
        }
        Command::Describe => {
            let (full, ml, mf) = cmd_describe(&cfg)?;
            println!("FULL {full}, ML {ml}, MF {mf}");
        }
        Command::Niche => {
            let s = cmd_niche(&cfg)?;
            println!(
                "{} documents, {} terms, rank {} ({:.3} explained), k = {} ({})",
                s.n_documents, s.n_terms, s.svd_rank, s.explained_ratio, s.k, s.k_source
            );
        }
        Command::Regress => {
            let s = cmd_regress(&cfg)?;
            println!("{} fits written, {} skipped", s.n_fits, s.n_skipped);
        }
        Command::Report => {
            let p = cmd_report(&cfg)?;
            println!("{}", p.display());
        }
        Command::Run => {
            niche_core::pipeline::run_all(&cfg)?;
            println!("artifacts in {}", cfg.out_dir.display());
        }
        Command::Equilibrium(a) => {
            let res = cmd_equilibrium(&cfg, &equilibrium_request(a)?)?;
            print_equilibrium(&res);
        }
        Command::Config => print!("{}", cfg.to_file_format()),
        Command::GenSynthetic(_) => unreachable!("handled above"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &NicheError) -> ExitCode {
    ExitCode::from(e.exit_class() as u8)
}
