//! Subcommand implementations. All file outputs are deterministic for a
//! fixed seed and fixed inputs; timing goes to stderr.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

use mlstm::analysis::{dbscan, export_embeddings, read_embeddings, write_cluster_tsv, UserEmbedding};
use mlstm::detection::{
    early_stats, evaluate, evaluate_at_thresholds, format_detection_table, format_early_table,
    stream_user, DetectionConfig, EarlyRow, StreamOutcome,
};
use mlstm::embeddings::{load_word_vectors, WordVectorStore};
use mlstm::ingestion::{
    build_aspect_sequences, chronological_split, filter_meta_edits, gen_synthetic,
    group_into_user_sequences, parse_edit_log, read_labels, synthetic_vocabulary,
    AspectSequences, UserSequence,
};
use mlstm::model::{forward_user, ModelParams};
use mlstm::numerics::{fnv1a, SeededRng};
use mlstm::training::{save_checkpoint, train, TrainConfig};

use crate::config::{resolve, FileConfig};
use crate::{ClusterArgs, Command, EvalArgs, ExportArgs, StreamArgs, SynthArgs, TrainArgs};

const DEFAULT_SEED: u64 = 42;
const DEFAULT_SYNTH_DIM: usize = 16;
/// Range of the generated synthetic word vectors.
const SYNTH_VECTOR_BOUND: f64 = 0.5;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(args) => run_synth(args),
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::Stream(args) => run_stream(args),
        Command::Cluster(args) => run_cluster(args),
        Command::Export(args) => run_export(args),
    }
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("cannot open {}", path.display()))?,
    ))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)
            .with_context(|| format!("cannot create directory {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?,
    ))
}

/// Parse, meta-filter, label, and group an edit log.
fn load_users(edits: &Path, labels: &Path) -> Result<Vec<UserSequence>> {
    let records = parse_edit_log(open_reader(edits)?)
        .with_context(|| format!("while reading {}", edits.display()))?;
    let records = filter_meta_edits(records);
    let label_map = read_labels(open_reader(labels)?)
        .with_context(|| format!("while reading {}", labels.display()))?;
    let users = group_into_user_sequences(records, &label_map)?;
    if users.is_empty() {
        return Err(mlstm::Error::Config(format!(
            "no users left after filtering {}",
            edits.display()
        ))
        .into());
    }
    Ok(users)
}

/// Count the values on the first line to infer the vector dimension.
fn infer_dim(path: &Path) -> Result<usize> {
    let mut line = String::new();
    open_reader(path)?.read_line(&mut line)?;
    let count = line.split_whitespace().count();
    if count < 2 {
        return Err(mlstm::Error::Config(format!(
            "cannot infer vector dimension from {} (empty or malformed first line); pass --dim",
            path.display()
        ))
        .into());
    }
    Ok(count - 1)
}

fn load_store(path: &Path, dim: Option<usize>, seed: u64) -> Result<WordVectorStore> {
    let dim = match dim {
        Some(d) => d,
        None => infer_dim(path)?,
    };
    let store = load_word_vectors(open_reader(path)?, dim, seed)
        .with_context(|| format!("while reading {}", path.display()))?;
    if store.duplicates() > 0 {
        eprintln!(
            "warning: {} duplicate words in {} (last entry wins)",
            store.duplicates(),
            path.display()
        );
    }
    Ok(store)
}

fn parse_taus(arg: &str) -> Result<Vec<f64>> {
    let taus: Vec<f64> = arg
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| mlstm::Error::Config(format!("bad tau {t:?}: {e}")))
        })
        .collect::<mlstm::Result<_>>()?;
    for &tau in &taus {
        DetectionConfig::new(tau)?;
    }
    Ok(taus)
}

fn write_edit_log(users: &[UserSequence], path: &Path) -> Result<()> {
    let mut w = create_writer(path)?;
    for user in users {
        for edit in &user.edits {
            writeln!(w, "{}", serde_json::to_string(edit)?)?;
        }
    }
    Ok(())
}

fn write_labels(users: &[UserSequence], path: &Path) -> Result<()> {
    let mut w = create_writer(path)?;
    for user in users {
        writeln!(w, "{}\t{}", user.user_id, user.label)?;
    }
    Ok(())
}

fn median_first_edit(users: &[UserSequence]) -> i64 {
    let mut firsts: Vec<i64> = users.iter().map(UserSequence::first_timestamp).collect();
    firsts.sort();
    firsts[firsts.len() / 2]
}

fn run_synth(args: SynthArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let seed = resolve(args.common.seed, cfg.seed, DEFAULT_SEED);
    let users = resolve(args.users, cfg.users, 400);
    let mean_edits = resolve(args.mean_edits, cfg.mean_edits, 8);
    let separability = resolve(args.separability, cfg.separability, 1.0);
    let dim = resolve(args.dim, cfg.dim, DEFAULT_SYNTH_DIM);

    let dataset = gen_synthetic(users, mean_edits, separability, seed)?;

    // One deterministic vector per word the generator can emit, so the
    // synthetic pipeline has no out-of-vocabulary lookups.
    let vectors_path = args.out.join("vectors.txt");
    let mut w = create_writer(&vectors_path)?;
    for word in synthetic_vocabulary() {
        let mut rng = SeededRng::new(fnv1a(word.as_bytes()) ^ seed);
        let values: Vec<String> = (0..dim)
            .map(|_| format!("{:.6}", rng.uniform(-SYNTH_VECTOR_BOUND, SYNTH_VECTOR_BOUND)))
            .collect();
        writeln!(w, "{} {}", word, values.join(" "))?;
    }
    drop(w);

    write_edit_log(&dataset, &args.out.join("edits.jsonl"))?;
    write_labels(&dataset, &args.out.join("labels.tsv"))?;

    let cutoff = median_first_edit(&dataset);
    let (train_users, test_users) = chronological_split(dataset, cutoff);
    write_edit_log(&train_users, &args.out.join("train/edits.jsonl"))?;
    write_labels(&train_users, &args.out.join("train/labels.tsv"))?;
    write_edit_log(&test_users, &args.out.join("test/edits.jsonl"))?;
    write_labels(&test_users, &args.out.join("test/labels.tsv"))?;

    println!(
        "wrote {} users ({} train / {} test, split at t={}) to {}",
        train_users.len() + test_users.len(),
        train_users.len(),
        test_users.len(),
        cutoff,
        args.out.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let seed = resolve(args.common.seed, cfg.seed, DEFAULT_SEED);
    let defaults = TrainConfig::default();
    let store = load_store(&args.vectors, args.dim.or(cfg.dim), seed)?;
    let train_cfg = TrainConfig {
        epochs: resolve(args.epochs, cfg.epochs, defaults.epochs),
        hidden: resolve(args.hidden, cfg.hidden, defaults.hidden),
        word_dim: store.dim(),
        seed,
        rho: resolve(None, cfg.rho, defaults.rho),
        eps_ada: resolve(None, cfg.eps_ada, defaults.eps_ada),
        clip_norm: resolve(None, cfg.clip, defaults.clip_norm),
        shuffle: if args.shuffle { true } else { cfg.shuffle.unwrap_or(false) },
    };

    let users = load_users(&args.edits, &args.labels)?;
    let dataset: Vec<AspectSequences> =
        users.iter().map(|u| build_aspect_sequences(u, &store)).collect();

    let (mut params, history) = train(&dataset, &train_cfg)?;
    params.word_seed = store.seed();

    for (i, epoch) in history.epochs.iter().enumerate() {
        eprintln!(
            "epoch {:>3}/{}: loss {:.6} acc {:.4} ({:.2}s)",
            i + 1,
            train_cfg.epochs,
            epoch.mean_loss,
            epoch.train_accuracy,
            epoch.seconds
        );
    }
    if let Some(history_path) = &args.history {
        let mut w = create_writer(history_path)?;
        writeln!(w, "epoch\tmean_loss\ttrain_accuracy")?;
        for (i, epoch) in history.epochs.iter().enumerate() {
            writeln!(w, "{}\t{:.12}\t{:.6}", i + 1, epoch.mean_loss, epoch.train_accuracy)?;
        }
    }

    save_checkpoint(&params, None, &args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;
    println!(
        "trained on {} users for {} epochs; checkpoint {}",
        dataset.len(),
        train_cfg.epochs,
        args.out.display()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<ModelParams> {
    let (params, _) = mlstm::training::load_checkpoint(path)
        .with_context(|| format!("while reading {}", path.display()))?;
    Ok(params)
}

/// The store for scoring must match the checkpoint: same title/category
/// dimension, and the word seed recorded at training time.
fn load_scoring_store(vectors: &Path, params: &ModelParams) -> Result<WordVectorStore> {
    let dim = params.aspect_dims[0];
    let store = load_store(vectors, Some(dim), params.word_seed)?;
    Ok(store)
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let taus = parse_taus(&resolve(args.tau, cfg.tau, "0.5".into()))?;
    let params = load_model(&args.ckpt)?;
    let store = load_scoring_store(&args.vectors, &params)?;
    let users = load_users(&args.edits, &args.labels)?;
    let dataset: Vec<AspectSequences> =
        users.iter().map(|u| build_aspect_sequences(u, &store)).collect();

    let rows = evaluate_at_thresholds(&params, &dataset, &taus)?;
    print!("{}", format_detection_table(&rows));
    if let Some(report) = &args.report {
        let w = create_writer(report)?;
        mlstm::detection::write_detection_tsv(w, &rows)?;
        println!("report {}", report.display());
    }
    Ok(())
}

fn run_stream(args: StreamArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let taus = parse_taus(&resolve(args.tau, cfg.tau, "0.5".into()))?;
    let params = load_model(&args.ckpt)?;
    let store = load_scoring_store(&args.vectors, &params)?;
    let users = load_users(&args.edits, &args.labels)?;

    let mut report = create_writer(&args.report)?;
    writeln!(report, "tau\tuser_id\tlabel\tedits\tflagged_at\tfinal_prob")?;
    let mut summary_rows = Vec::with_capacity(taus.len());
    for &tau in &taus {
        let detection = DetectionConfig::new(tau)?;
        let outcomes: Vec<StreamOutcome> = users
            .iter()
            .map(|u| stream_user(&params, u, &store, &detection))
            .collect::<mlstm::Result<_>>()?;
        for outcome in &outcomes {
            writeln!(
                report,
                "{}\t{}\t{}\t{}\t{}\t{:.6}",
                tau,
                outcome.user_id,
                outcome.label,
                outcome.edits(),
                outcome.flagged_at.map_or(-1, |t| t as i64),
                outcome.probs.last().copied().unwrap_or(0.0)
            )?;
        }
        let verdicts: Vec<bool> = outcomes.iter().map(StreamOutcome::flagged).collect();
        let labels: Vec<mlstm::Label> = outcomes.iter().map(|o| o.label).collect();
        summary_rows.push(EarlyRow {
            tau,
            metrics: evaluate(&verdicts, &labels)?,
            early: early_stats(&outcomes),
        });
    }
    drop(report);

    print!("{}", format_early_table(&summary_rows));
    if let Some(summary) = &args.summary {
        let w = create_writer(summary)?;
        mlstm::detection::write_early_tsv(w, &summary_rows)?;
        println!("summary {}", summary.display());
    }
    println!("report {}", args.report.display());
    Ok(())
}

fn compute_embeddings(
    params: &ModelParams,
    users: &[UserSequence],
    store: &WordVectorStore,
) -> Result<Vec<UserEmbedding>> {
    users
        .iter()
        .map(|u| {
            let trace = forward_user(params, &build_aspect_sequences(u, store))?;
            Ok(UserEmbedding {
                user_id: u.user_id.clone(),
                label: u.label,
                vector: trace.embedding().clone(),
            })
        })
        .collect()
}

fn run_export(args: ExportArgs) -> Result<()> {
    let _ = FileConfig::load(args.common.config.as_deref())?;
    let params = load_model(&args.ckpt)?;
    let store = load_scoring_store(&args.vectors, &params)?;
    let users = load_users(&args.edits, &args.labels)?;
    let points = compute_embeddings(&params, &users, &store)?;
    let rows = export_embeddings(&points, create_writer(&args.out)?)?;
    println!("wrote {} embeddings to {}", rows, args.out.display());
    Ok(())
}

fn run_cluster(args: ClusterArgs) -> Result<()> {
    let cfg = FileConfig::load(args.common.config.as_deref())?;
    let eps = resolve(args.eps, cfg.eps, 0.05);
    let min_pts = resolve(args.min_pts, cfg.min_pts, 3);
    let points = read_embeddings(open_reader(&args.embeddings)?)
        .with_context(|| format!("while reading {}", args.embeddings.display()))?;
    let result = dbscan(&points, eps, min_pts)?;

    match &args.out {
        Some(path) => {
            write_cluster_tsv(&points, &result, create_writer(path)?)?;
            println!("cluster report {}", path.display());
        }
        None => {
            let stdout = std::io::stdout();
            write_cluster_tsv(&points, &result, stdout.lock())?;
        }
    }

    let only = |f: fn(&mlstm::analysis::ClusterSummary) -> bool| {
        result.clusters.iter().filter(|c| f(c)).count()
    };
    println!(
        "{} clusters over {} points (eps {}, min_pts {}): {} vandal-only, {} benign-only, {} mixed, {} noise",
        result.clusters.len(),
        points.len(),
        eps,
        min_pts,
        only(|c| c.benign == 0),
        only(|c| c.vandals == 0),
        only(|c| c.vandals > 0 && c.benign > 0),
        result.noise_count()
    );
    Ok(())
}
