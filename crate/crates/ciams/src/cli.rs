use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use ciams_core::data::{load_corpus, load_csv, Subsample};
use ciams_core::eval::{evaluate, feature_importance};
use ciams_core::fitness::{build_training_table, TrainingTable};
use ciams_core::indices::{index_vector, schema_for};
use ciams_core::learners::ModelClass;
use ciams_core::mapper::{fit_mappers, load_bundle, save_bundle};
use ciams_core::recommend::{automl_fit, Mode};
use ciams_core::{seed, Config};

use crate::commands::{self, FitSummary};
use crate::service::{self, AppState};

#[derive(Debug, Parser)]
#[command(name = "ciams", version, about = "Recommend classifier families from clustering-index meta-features")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// key=value configuration file
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed (and CIAMS_SEED)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Extra key=value settings, applied last
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub sets: Vec<String>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Subsampled,
    SingleShot,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Subsampled => Mode::Subsampled,
            ModeArg::SingleShot => Mode::SingleShot,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Table,
    Json,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the training table from a corpus and fit the mappers
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Reuse a saved training table instead of a corpus
        #[arg(long, conflicts_with = "corpus")]
        table: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the training table as CSV
        #[arg(long)]
        save_table: Option<PathBuf>,
        /// Print the ten highest-gain features
        #[arg(long)]
        importance: bool,
    },
    /// Rank the six classifier families for a dataset
    Recommend {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "subsampled")]
        mode: ModeArg,
        #[arg(long, default_value_t = 6, value_parser = clap::value_parser!(u64).range(1..=6))]
        top: u64,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
        /// Also write the ranking as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Recommend, tune the top three on labeled data, predict unlabeled rows
    FitPredict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        labeled: PathBuf,
        #[arg(long)]
        unlabeled: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dataset-level cross-validation of the whole pipeline
    Evaluate {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        repeats: Option<usize>,
        /// Write the full JSON report here instead of standard output
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the index vector of a whole dataset
    Indices {
        #[arg(long)]
        data: PathBuf,
    },
    /// Run the HTTP service
    Serve {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: SocketAddr,
        /// Session directory (default: next to the model file)
        #[arg(long)]
        sessions_dir: Option<PathBuf>,
    },
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    if let Some(t) = cli.global.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .context("configuring the thread pool")?;
    }
    let cfg = commands::load_config(cli.global.config.as_deref(), cli.global.seed, &cli.global.sets)?;
    let mut out = std::io::stdout().lock();
    match cli.command {
        Command::Train {
            corpus,
            table,
            out: path,
            save_table,
            importance,
        } => {
            let table = match (corpus, table) {
                (_, Some(t)) => TrainingTable::load(&t)?,
                (Some(c), None) => {
                    let datasets = load_corpus(&c, &commands::load_options(&cfg))?;
                    build_training_table(&datasets, &cfg, cfg.seed)?
                }
                (None, None) => anyhow::bail!(ciams_core::CiamsError::InvalidInput(
                    "train needs --corpus or --table".into()
                )),
            };
            if let Some(p) = save_table {
                table.save(&p)?;
            }
            let bundle = fit_mappers(&table, cfg.mapper_folds, &cfg.mapper_depth_grid, seed::derive(cfg.seed, 0x7a))?;
            save_bundle(&bundle, &path)?;
            writeln!(out, "rows={} parents={} schema={}", table.rows.len(), table.parents().len(), table.schema.len())?;
            for (c, r) in ModelClass::ALL.iter().zip(&bundle.training_meta.reports) {
                writeln!(out, "{c:<20} depth={} rounds={} cv_r2={:.4}", r.depth, r.rounds, r.cv_r2)?;
            }
            if importance {
                for f in feature_importance(&bundle, &table)? {
                    writeln!(out, "{:<45} gain={:.4} spearman={:+.3}", f.feature, f.total_gain, f.spearman)?;
                }
            }
            writeln!(out, "saved {} ({})", path.display(), bundle.fingerprint())?;
        }
        Command::Recommend {
            model,
            data,
            mode,
            top,
            format,
            csv,
        } => {
            let bundle = load_bundle(&model)?;
            let bytes = commands::read_file(&data)?;
            let d = commands::parse_dataset(&bytes, &commands::dataset_name(&data), &cfg)?;
            let rec = commands::run_recommend(&bundle, &d, mode.into(), &cfg)?;
            let top = top as usize;
            let text = match format {
                Format::Table => commands::recommendation_table(&rec, top),
                Format::Json => commands::recommendation_json(&rec, top, cfg.seed),
            };
            out.write_all(text.as_bytes())?;
            if let Some(p) = csv {
                commands::write_recommendation_csv(&rec, top, &p)?;
            }
        }
        Command::FitPredict {
            model,
            labeled,
            unlabeled,
            out: path,
        } => {
            let bundle = load_bundle(&model)?;
            let d = load_csv(&labeled, &commands::load_options(&cfg))?;
            let m = automl_fit(&bundle, &d, &cfg, cfg.seed)?;
            let x = commands::parse_unlabeled(&commands::read_file(&unlabeled)?, &m.feature_names, &cfg)?;
            let preds = m.predict(&x)?;
            commands::write_predictions_csv(&m, &preds, &path)?;
            let s = FitSummary::of(&m);
            writeln!(
                out,
                "top3={} chosen={} cv_f1={:.4} predictions={}",
                s.top3.iter().map(|c| c.as_str()).collect::<Vec<_>>().join(","),
                s.chosen,
                s.cv_f1_of_chosen,
                preds.len()
            )?;
        }
        Command::Evaluate {
            corpus,
            folds,
            repeats,
            out: path,
        } => {
            let cfg = Config {
                folds: folds.unwrap_or(cfg.folds),
                repeats: repeats.unwrap_or(cfg.repeats),
                ..cfg
            };
            let datasets = load_corpus(&corpus, &commands::load_options(&cfg))?;
            let report = evaluate(&datasets, &cfg)?;
            let json = report.to_json()? + "\n";
            match path {
                Some(p) => {
                    std::fs::write(&p, json).with_context(|| format!("writing {}", p.display()))?;
                    let a = &report.aggregate;
                    writeln!(
                        out,
                        "evaluations={} top1_in_top3_recall={:.3} pass_counts={:?}",
                        a.n_evaluations, a.top1_in_top3_recall, a.pass_counts
                    )?;
                }
                None => out.write_all(json.as_bytes())?,
            }
        }
        Command::Indices { data } => {
            let d = load_csv(&data, &commands::load_options(&cfg))?;
            let iv = index_vector(
                &Subsample::whole(&d),
                &cfg.methods,
                &cfg.cluster_config(),
                seed::derive(cfg.seed, 20),
            );
            writeln!(out, "index,value")?;
            for (name, v) in schema_for(&cfg.methods).iter().zip(&iv.values) {
                writeln!(out, "{name},{v}")?;
            }
        }
        Command::Serve {
            model,
            bind,
            sessions_dir,
        } => {
            let bundle = load_bundle(&model)?;
            let sessions_dir = sessions_dir.unwrap_or_else(|| commands::default_sessions_dir(&model));
            let state = Arc::new(AppState {
                bundle,
                cfg,
                sessions_dir,
            });
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(bind).await?;
                service::serve(state, listener).await
            })?;
        }
    }
    Ok(())
}
