use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use transa_core::analysis::{margin_sweep, risk_report, RiskReport, SweepConfig};
use transa_core::data::{
    load_graph, load_serialized, save_serialized, LoadOptions, NeighborhoodIndex, TripleFormat,
    DEFAULT_MAX_RETRIES,
};
use transa_core::eval::{
    check_compatible, fit_thresholds, link_prediction, make_negatives, triple_classification,
    ClassificationReport, ClassifierThresholds, NegativeMode,
};
use transa_core::margin::{refresh_table, ActiveSetConfig};
use transa_core::train::EpochLog;
use transa_core::{
    train_keeping_progress, EmbeddingModel, EvalOptions, KnowledgeGraph, MarginMethod, TrainConfig,
    Triple,
};

use crate::config::ExperimentConfig;
use crate::output::{align, atomic_dir, ensure_dir, write_json, write_text};
use crate::{
    BoundArgs, EvalArgs, ExportArgs, Format, IngestArgs, NegativeKind, NumericError, PartitionArgs,
    SweepArgs, Task, TrainArgs, UsageError,
};

const CONFIG_FILE: &str = "config.toml";

/// Records the resolved invocation of a command that has no experiment
/// config of its own.
fn write_invocation<T: Serialize>(dir: &Path, command: &str, args: &T) -> Result<()> {
    let body = toml::to_string(args).context("serializing invocation")?;
    write_text(
        &dir.join(CONFIG_FILE),
        &format!("command = \"{command}\"\n{body}"),
    )
}

fn load_model(path: &Path, graph: &KnowledgeGraph) -> Result<EmbeddingModel> {
    let model = EmbeddingModel::load_tsv(path)?;
    check_compatible(&model, graph)?;
    Ok(model)
}

#[derive(Serialize)]
struct IngestRecord<'a> {
    train: &'a Path,
    valid: &'a Path,
    test: &'a Path,
    format: Format,
    labeled: bool,
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let opts = LoadOptions {
        format: match a.format {
            Format::Names => TripleFormat::Names,
            Format::Ids => TripleFormat::Ids,
        },
        labeled_eval: a.labeled,
    };
    let graph = load_graph(&a.train, &a.valid, &a.test, opts)?;
    println!("{}", graph.summary());
    if a.labeled {
        println!(
            "valid_neg={} test_neg={}",
            graph.valid_negatives().len(),
            graph.test_negatives().len()
        );
    }
    atomic_dir(&a.out, |dir| {
        save_serialized(&graph, dir)?;
        write_invocation(
            dir,
            "ingest",
            &IngestRecord {
                train: &a.train,
                valid: &a.valid,
                test: &a.test,
                format: a.format,
                labeled: a.labeled,
            },
        )
    })
}

#[derive(Serialize)]
struct PartitionRecord<'a> {
    graph: &'a Path,
    k: usize,
    seed: u64,
}

pub fn partition(a: &PartitionArgs) -> Result<()> {
    let graph = load_serialized(&a.graph)?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let parts = transa_core::data::partition(&graph, a.k, &mut rng)?;
    atomic_dir(&a.out, |dir| {
        for (i, part) in parts.iter().enumerate() {
            let sub = dir.join(format!("part-{i:02}"));
            ensure_dir(&sub)?;
            save_serialized(&part.graph, &sub)?;
            let mut map = String::from("local_id\tsource_id\tname\n");
            for (local, &source) in part.source_relations.iter().enumerate() {
                let name = graph.relations().name(source).unwrap_or("?");
                let _ = writeln!(map, "{local}\t{source}\t{name}");
            }
            write_text(&sub.join("source_relations.tsv"), &map)?;
            println!("part-{i:02}: {}", part.graph.summary());
        }
        write_invocation(
            dir,
            "partition",
            &PartitionRecord {
                graph: &a.graph,
                k: a.k,
                seed: a.seed,
            },
        )
    })
}

fn epochs_tsv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch\tmean_hinge_loss\twall_time_secs\tmargin_refreshed\tmean_margin\tvalid_filtered_mean_rank\n");
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), |x| x.to_string());
    for l in logs {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            l.epoch,
            l.mean_hinge_loss,
            l.wall_time_secs,
            l.margin_refreshed,
            opt(l.mean_margin),
            opt(l.valid_filtered_mean_rank)
        );
    }
    out
}

#[derive(Debug, Clone, Serialize)]
struct GridPoint {
    lr: f64,
    dim: usize,
    batch: usize,
    /// Validation filtered mean rank, or validation accuracy when the graph
    /// has labeled validation negatives.
    score: f64,
}

/// Trains every combination of the published grids and keeps the best one on
/// the validation split.
fn grid_search(
    graph: &KnowledgeGraph,
    base: &ExperimentConfig,
    dir: &Path,
) -> Result<(ExperimentConfig, EmbeddingModel)> {
    if graph.valid().is_empty() {
        return Err(UsageError("--grid needs a validation split".into()).into());
    }
    let by_accuracy = !graph.valid_negatives().is_empty();
    let dims: &[usize] = if base.preset.as_deref().is_some_and(|p| p.ends_with("-tc")) {
        &[20, 50, 100, 200, 220, 300]
    } else {
        &[20, 50, 100]
    };
    let opts = EvalOptions {
        hits_at: vec![],
        per_relation: false,
    };
    let mut points = Vec::new();
    let mut best: Option<(f64, ExperimentConfig, EmbeddingModel)> = None;
    for &lr in &[0.1, 0.01, 0.001] {
        for &dim in dims {
            for &batch in &[20, 120, 480, 1440, 4800] {
                let cfg = ExperimentConfig {
                    lr,
                    dim,
                    batch,
                    ..base.clone()
                };
                let model = match train_keeping_progress(graph, &cfg.train_config()?) {
                    Ok((m, _)) => m,
                    Err(f) if matches!(f.error, transa_core::Error::NonFinite { .. }) => {
                        log::warn!("grid point lr={lr} d={dim} B={batch} diverged: {}", f.error);
                        continue;
                    }
                    Err(f) => return Err(f.error.into()),
                };
                let score = if by_accuracy {
                    fit_thresholds(&model, graph.valid(), graph.valid_negatives())?.accuracy
                } else {
                    transa_core::eval::evaluate_triples(&model, graph, graph.valid(), &opts)?
                        .filtered_mean_rank
                };
                log::info!("grid lr={lr} d={dim} B={batch}: {score}");
                points.push(GridPoint {
                    lr,
                    dim,
                    batch,
                    score,
                });
                let better =
                    best.as_ref()
                        .is_none_or(|(b, _, _)| if by_accuracy { score > *b } else { score < *b });
                if better {
                    best = Some((score, cfg, model));
                }
            }
        }
    }
    let mut tsv = String::from("lr\tdim\tbatch\tscore\n");
    for p in &points {
        let _ = writeln!(tsv, "{}\t{}\t{}\t{}", p.lr, p.dim, p.batch, p.score);
    }
    write_text(&dir.join("grid.tsv"), &tsv)?;
    write_json(&dir.join("grid.json"), &points)?;
    let (score, cfg, model) =
        best.ok_or_else(|| NumericError("every grid point diverged".into()))?;
    println!(
        "grid: best lr={} d={} B={} ({} {score})",
        cfg.lr,
        cfg.dim,
        cfg.batch,
        if by_accuracy {
            "valid accuracy"
        } else {
            "valid filtered MR"
        }
    );
    Ok((cfg, model))
}

pub fn train(a: &TrainArgs, threads: usize) -> Result<()> {
    let mut cfg =
        ExperimentConfig::resolve(a.preset.as_deref(), a.config.as_deref(), &a.layer, threads)?;
    let graph = load_serialized(&cfg.graph)?;
    println!("{}", graph.summary());
    ensure_dir(&a.out)?;

    if a.grid {
        let (best, model) = grid_search(&graph, &cfg, &a.out)?;
        cfg = best;
        write_text(&a.out.join(CONFIG_FILE), &cfg.to_toml())?;
        model.save_tsv(&a.out.join("model.tsv"))?;
        return Ok(());
    }

    write_text(&a.out.join(CONFIG_FILE), &cfg.to_toml())?;
    let tc: TrainConfig = cfg.train_config()?;
    match train_keeping_progress(&graph, &tc) {
        Ok((model, logs)) => {
            model.save_tsv(&a.out.join("model.tsv"))?;
            write_json(&a.out.join("epochs.json"), &logs)?;
            write_text(&a.out.join("epochs.tsv"), &epochs_tsv(&logs))?;
            if let Some(last) = logs.last() {
                println!(
                    "trained {} epochs, final mean hinge loss {:.6}",
                    logs.len(),
                    last.mean_hinge_loss
                );
            }
            Ok(())
        }
        Err(failure) => {
            write_json(&a.out.join("epochs.json"), &failure.logs)?;
            write_text(&a.out.join("epochs.tsv"), &epochs_tsv(&failure.logs))?;
            match (&failure.error, &failure.last_good) {
                (transa_core::Error::NonFinite { .. }, Some(model)) => {
                    model.save_tsv(&a.out.join("model.tsv"))?;
                    Err(NumericError(format!(
                        "{}; model after {} completed epochs saved",
                        failure.error,
                        failure.logs.len()
                    ))
                    .into())
                }
                _ => Err(failure.error.into()),
            }
        }
    }
}

/// Negatives for a split: the graph's labeled ones if present, otherwise
/// generated corruptions.
fn negatives_for(
    positives: &[Triple],
    labeled: &[Triple],
    graph: &KnowledgeGraph,
    rng: &mut ChaCha8Rng,
    kind: NegativeKind,
) -> Result<(Vec<Triple>, Vec<u32>)> {
    if !labeled.is_empty() {
        return Ok((labeled.to_vec(), vec![]));
    }
    let mode = match kind {
        NegativeKind::PositionCompatible => NegativeMode::PositionCompatible,
        NegativeKind::Uniform => NegativeMode::Uniform,
    };
    let n = make_negatives(positives, graph, rng, mode, DEFAULT_MAX_RETRIES)?;
    Ok((n.triples, n.fallback_relations))
}

#[derive(Serialize)]
struct ClassificationOutput<'a> {
    #[serde(flatten)]
    report: &'a ClassificationReport,
    /// "labeled" or the corruption scheme used to build negatives.
    negatives: String,
    fallback_relations: Vec<String>,
}

fn thresholds_tsv(th: &ClassifierThresholds, graph: &KnowledgeGraph) -> String {
    let mut out = String::from("relation\tthreshold\tvalid_accuracy\tn_valid\n");
    for (r, t) in &th.per_relation {
        let name = graph.relations().name(*r).unwrap_or("?");
        let _ = writeln!(
            out,
            "{name}\t{}\t{}\t{}",
            t.threshold, t.accuracy, t.n_valid
        );
    }
    let _ = writeln!(
        out,
        "*pooled*\t{}\t{}\t{}",
        th.global.threshold, th.global.accuracy, th.global.n_valid
    );
    out
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let graph = load_serialized(&a.graph)?;
    let model = load_model(&a.model, &graph)?;
    ensure_dir(&a.out)?;
    write_invocation(&a.out, "eval", a)?;
    match a.task {
        Task::Lp => {
            let opts = EvalOptions {
                hits_at: a.hits.clone(),
                per_relation: a.per_relation,
            };
            let report = link_prediction(&model, &graph, &opts)?;
            print!("{}", report.to_table());
            write_json(&a.out.join("lp_report.json"), &report)?;
            write_text(&a.out.join("lp_report.tsv"), &report.to_tsv())?;
            if let Some(per) = &report.per_relation {
                let mut tsv = String::from("relation\tn_test\traw_mean_rank\tfiltered_mean_rank\n");
                for (name, b) in per {
                    let _ = writeln!(
                        tsv,
                        "{name}\t{}\t{}\t{}",
                        b.n_test, b.raw_mean_rank, b.filtered_mean_rank
                    );
                }
                write_text(&a.out.join("lp_per_relation.tsv"), &tsv)?;
            }
        }
        Task::Tc => {
            if graph.valid().is_empty() || graph.test().is_empty() {
                return Err(UsageError(
                    "triple classification needs validation and test splits".into(),
                )
                .into());
            }
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            let (valid_neg, mut fallback) = negatives_for(
                graph.valid(),
                graph.valid_negatives(),
                &graph,
                &mut rng,
                a.negatives,
            )?;
            let (test_neg, more) = negatives_for(
                graph.test(),
                graph.test_negatives(),
                &graph,
                &mut rng,
                a.negatives,
            )?;
            fallback.extend(more);
            fallback.sort_unstable();
            fallback.dedup();
            let labeled = !graph.valid_negatives().is_empty() && !graph.test_negatives().is_empty();

            let thresholds = fit_thresholds(&model, graph.valid(), &valid_neg)?;
            let report = triple_classification(&model, &thresholds, graph.test(), &test_neg)?;
            println!(
                "accuracy {:.4} on {} positives and {} negatives ({} relations used the pooled threshold)",
                report.accuracy,
                report.n_pos,
                report.n_neg,
                report.pooled_relations.len()
            );
            write_json(&a.out.join("thresholds.json"), &thresholds)?;
            write_text(
                &a.out.join("thresholds.tsv"),
                &thresholds_tsv(&thresholds, &graph),
            )?;
            let out = ClassificationOutput {
                report: &report,
                negatives: if labeled {
                    "labeled".into()
                } else {
                    serde_json::to_value(a.negatives)?
                        .as_str()
                        .unwrap_or_default()
                        .to_owned()
                },
                fallback_relations: fallback
                    .iter()
                    .map(|r| graph.relations().name(*r).unwrap_or("?").to_owned())
                    .collect(),
            };
            write_json(&a.out.join("tc_report.json"), &out)?;
            write_text(&a.out.join("tc_report.tsv"), &report.to_tsv())?;
        }
    }
    Ok(())
}

pub fn bound(a: &BoundArgs) -> Result<()> {
    let graph = load_serialized(&a.graph)?;
    let model = load_model(&a.model, &graph)?;
    ensure_dir(&a.out)?;
    write_invocation(&a.out, "bound", a)?;
    let reports: Vec<RiskReport> = a
        .margins
        .iter()
        .map(|&m| risk_report(&model, &graph, m, a.delta, a.seed))
        .collect::<transa_core::Result<_>>()?;
    let mut tsv = format!("{}\n", RiskReport::TSV_HEADER);
    for r in &reports {
        tsv.push_str(&r.tsv_row());
        tsv.push('\n');
    }
    print!("{}", align(&tsv));
    write_json(&a.out.join("risk.json"), &reports)?;
    write_text(&a.out.join("risk.tsv"), &tsv)?;
    Ok(())
}

#[derive(Serialize)]
struct SweepRecord<'a> {
    margins: &'a [f64],
    delta: f64,
    corruption_seed: u64,
}

pub fn sweep(a: &SweepArgs, threads: usize) -> Result<()> {
    let cfg =
        ExperimentConfig::resolve(a.preset.as_deref(), a.config.as_deref(), &a.layer, threads)?;
    let graph = load_serialized(&cfg.graph)?;
    ensure_dir(&a.out)?;
    let record = SweepRecord {
        margins: &a.margins,
        delta: a.delta,
        corruption_seed: a.corruption_seed,
    };
    let mut text = cfg.to_toml();
    text.push_str("\n[sweep]\n");
    text.push_str(&toml::to_string(&record)?);
    write_text(&a.out.join(CONFIG_FILE), &text)?;

    let report = margin_sweep(
        &graph,
        &a.margins,
        &SweepConfig {
            train: cfg.train_config()?,
            delta: a.delta,
            corruption_seed: a.corruption_seed,
        },
    )?;
    let tsv = report.to_tsv();
    print!("{}", align(&tsv));
    if let Some(best) = report.best() {
        println!(
            "best margin {} (filtered MR {:.2} on {})",
            best.margin, best.filtered_mean_rank, report.eval_split
        );
    }
    write_json(&a.out.join("sweep.json"), &report)?;
    write_text(&a.out.join("sweep.tsv"), &tsv)?;
    Ok(())
}

fn embeddings_tsv(names: &[String], matrix: &[f64], dim: usize) -> String {
    let mut out = String::new();
    for (name, row) in names.iter().zip(matrix.chunks_exact(dim)) {
        out.push_str(name);
        for x in row {
            let _ = write!(out, "\t{x}");
        }
        out.push('\n');
    }
    out
}

pub fn export(a: &ExportArgs) -> Result<()> {
    let graph = load_serialized(&a.graph)?;
    let model = load_model(&a.model, &graph)?;
    ensure_dir(&a.out)?;
    write_invocation(&a.out, "export", a)?;
    let method = if a.exact {
        MarginMethod::Exact
    } else {
        MarginMethod::Active(ActiveSetConfig {
            fraction: a.active_fraction,
            rounds: a.active_rounds,
            rng_seed: a.active_seed,
        })
    };
    let index = NeighborhoodIndex::build(&graph);
    let table = refresh_table(&graph, &index, &model, a.mu, &method, 0)?;
    table.export_tsv(
        &graph,
        &a.out.join("entity_margins.tsv"),
        &a.out.join("pair_margins.tsv"),
    )?;
    let summary = table.summary();
    write_json(&a.out.join("margin_summary.json"), &summary)?;
    write_text(
        &a.out.join("entity_embeddings.tsv"),
        &embeddings_tsv(graph.entities().names(), model.entity_matrix(), model.dim()),
    )?;
    write_text(
        &a.out.join("relation_embeddings.tsv"),
        &embeddings_tsv(
            graph.relations().names(),
            model.relation_matrix(),
            model.dim(),
        ),
    )?;
    println!(
        "exported {} entities and {} relations; mean M_ent {:.4}, mean M_opt {:.4}",
        graph.num_entities(),
        graph.num_relations(),
        summary.mean_m_ent,
        summary.mean_m_opt
    );
    Ok(())
}
