//! Subcommand implementations. Each returns either a usage failure (bad
//! flags or combinations, exit 1) or passes library errors through as data
//! failures (exit 2).

use std::collections::HashMap;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use serde::Serialize;

use mmt_core::debias::{hubness_report, DebiasMethod, Metric};
use mmt_core::embedding::{
    build_vocabulary, init_embedding_table, parse_embedding_text, write_embedding_text,
    EmbFormat, EmbeddingTable, Vocabulary,
};
use mmt_core::mnmt::checkpoint::{load_model, save_model};
use mmt_core::mnmt::{greedy_decode, FeatureFile, Model, ModelDims, ModelKind, TrainExample};
use mmt_core::train::{
    corpus_bleu, loss_log_csv, tokenize, train_model, word_fscore_breakdown, FScoreReport,
    TrainConfig,
};
use mmt_core::{Error, Result};

use crate::files::{commit, read_lines, tmp_sibling, write_atomic};
use crate::{
    Command, DebiasArgs, EvaluateArgs, FormatArg, HubnessArgs, InitArgs, MethodArg, MetricArg,
    TrainArgs, TranslateArgs,
};

/// A failed run, split by exit code.
pub enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

type CmdResult = std::result::Result<(), Failure>;

pub fn run(command: Command) -> CmdResult {
    match command {
        Command::Debias(args) => run_debias(args),
        Command::Hubness(args) => run_hubness(args),
        Command::Init(args) => run_init(args),
        Command::Train(args) => run_train(args),
        Command::Translate(args) => run_translate(args),
        Command::Evaluate(args) => run_evaluate(args),
    }
}

impl FormatArg {
    fn to_core(self) -> EmbFormat {
        match self {
            FormatArg::Headerless => EmbFormat::Headerless,
            FormatArg::Header => EmbFormat::Header,
        }
    }
}

fn run_debias(args: DebiasArgs) -> CmdResult {
    let method = match args.method {
        MethodArg::None => DebiasMethod::None,
        MethodArg::Lc => DebiasMethod::LocalizedCentering { k: args.k },
        MethodArg::Abtt => DebiasMethod::AllButTheTop { d: args.d },
    };
    let pre = parse_embedding_text(&args.input, args.format.to_core())?;
    let table = EmbeddingTable::from_pretrained(&pre)?;
    let fixed = method.apply(&table)?;

    let tmp = tmp_sibling(&args.out);
    write_embedding_text(fixed.iter_words(), fixed.dim(), &tmp, args.format.to_core())?;
    commit(&tmp, &args.out)?;
    println!(
        "debiased {} words ({}-d) -> {}",
        pre.len(),
        pre.dim(),
        args.out.display()
    );
    Ok(())
}

fn run_hubness(args: HubnessArgs) -> CmdResult {
    let pre = parse_embedding_text(&args.input, args.format.to_core())?;
    let table = EmbeddingTable::from_pretrained(&pre)?;
    let metric = match args.metric {
        MetricArg::Cosine => Metric::Cosine,
        MetricArg::Euclidean => Metric::Euclidean,
    };
    let report = hubness_report(&table, args.k, metric)?;
    let json = format!("{}\n", report.to_json(args.top));
    match &args.out {
        Some(path) => write_atomic(path, json.as_bytes())?,
        None => print!("{json}"),
    }
    Ok(())
}

fn run_init(args: InitArgs) -> CmdResult {
    let sentences: Vec<Vec<String>> =
        read_lines(&args.corpus)?.iter().map(|l| tokenize(l)).collect();
    let vocab = build_vocabulary(&sentences, args.min_freq, args.max_size);
    let pre = parse_embedding_text(&args.emb, args.format.to_core())?;
    let table = init_embedding_table(&pre, &vocab)?;

    write_atomic(&args.out_vocab, &vocab_bytes(&vocab)?)?;
    let tmp = tmp_sibling(&args.out_table);
    write_embedding_text(table.iter(), table.dim(), &tmp, args.format.to_core())?;
    commit(&tmp, &args.out_table)?;

    println!("vocabulary: {} tokens -> {}", vocab.len(), args.out_vocab.display());
    println!(
        "table: {} x {}, {} rows set to the OOV mean -> {}",
        vocab.len(),
        table.dim(),
        table.oov_ids.len(),
        args.out_table.display()
    );
    Ok(())
}

fn run_train(args: TrainArgs) -> CmdResult {
    let kind: ModelKind = args.model.parse().map_err(|_| {
        usage(format!(
            "unknown model {:?} (expected nmt, da, imagination, or vag)",
            args.model
        ))
    })?;

    let src_lines = read_lines(&args.src)?;
    let tgt_lines = read_lines(&args.tgt)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::Argument(format!(
            "corpus sizes differ: {} has {} lines, {} has {}",
            args.src.display(),
            src_lines.len(),
            args.tgt.display(),
            tgt_lines.len()
        ))
        .into());
    }
    let src_sents: Vec<Vec<String>> = src_lines.iter().map(|l| tokenize(l)).collect();
    let tgt_sents: Vec<Vec<String>> = tgt_lines.iter().map(|l| tokenize(l)).collect();
    for (i, (s, t)) in src_sents.iter().zip(&tgt_sents).enumerate() {
        if s.is_empty() || t.is_empty() {
            let path = if s.is_empty() { &args.src } else { &args.tgt };
            return Err(Error::Parse {
                path: path.display().to_string(),
                line: i + 1,
                msg: "empty sentence".into(),
            }
            .into());
        }
    }

    let feats = args.feats.as_deref().map(FeatureFile::load).transpose()?;
    if kind != ModelKind::Nmt && feats.is_none() {
        return Err(usage(format!("--model {kind} needs --feats")));
    }
    if let Some(f) = &feats {
        if f.len() != src_sents.len() {
            return Err(Error::Argument(format!(
                "feature file has {} items for {} sentences",
                f.len(),
                src_sents.len()
            ))
            .into());
        }
        if matches!(kind, ModelKind::Imagination | ModelKind::Vag) && f.rows_per_item() != 1 {
            return Err(Error::Argument(format!(
                "{kind} needs global features (one row per item); this file has {} rows",
                f.rows_per_item()
            ))
            .into());
        }
    }

    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path.display(), e))?;
            serde_json::from_str::<TrainConfig>(&text)
                .map_err(|e| Error::format(path.display(), e))?
        }
        None => TrainConfig::default(),
    };
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.clip_norm {
        cfg.clip_norm = v;
    }
    if let Some(v) = args.dropout {
        cfg.dropout = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.margin {
        cfg.margin = v;
    }
    if let Some(v) = args.rho {
        cfg.rho = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }

    let src_vocab = build_vocabulary(&src_sents, args.min_freq, args.max_size);
    let tgt_vocab = build_vocabulary(&tgt_sents, args.min_freq, args.max_size);

    let emb_table = match &args.emb_init {
        Some(path) => {
            let pre = parse_embedding_text(path, args.format.to_core())?;
            Some(init_embedding_table(&pre, &src_vocab)?)
        }
        None => None,
    };

    let mut dims = ModelDims::new(src_vocab.len(), tgt_vocab.len());
    if let Some(v) = args.emb_dim {
        dims.emb = v;
    }
    if let Some(v) = args.enc_hidden {
        dims.enc_hidden = v;
    }
    if let Some(v) = args.shared_dim {
        dims.shared_dim = v;
    }
    if let Some(t) = &emb_table {
        if args.emb_dim.is_some_and(|e| e != t.dim()) {
            return Err(usage(format!(
                "--emb-dim {} conflicts with the {}-d --emb-init table",
                dims.emb,
                t.dim()
            )));
        }
        dims.emb = t.dim();
    }
    if let Some(f) = &feats {
        if f.rows_per_item() == 1 {
            dims.global_dim = f.dim();
            dims.latent_dim = f.dim();
        } else {
            dims.spatial_dim = f.dim();
        }
    }
    if let Some(v) = args.latent_dim {
        dims.latent_dim = v;
    }

    let mut model = Model::init(kind, dims, cfg.hyper(), cfg.seed)?;
    if let Some(t) = &emb_table {
        model.set_source_embeddings(&t.matrix)?;
    }

    let mut dataset = Vec::with_capacity(src_sents.len());
    for i in 0..src_sents.len() {
        let mut ex = TrainExample {
            source: src_vocab.encode(&src_sents[i]),
            target: tgt_vocab.encode(&tgt_sents[i]),
            global: None,
            spatial: None,
        };
        if let Some(f) = &feats {
            match kind {
                ModelKind::DoublyAttentive => ex.spatial = Some(f.item(i)?.clone()),
                ModelKind::Imagination | ModelKind::Vag => {
                    ex.global = Some(f.global(i)?.vector)
                }
                ModelKind::Nmt => {}
            }
        }
        dataset.push(ex);
    }

    let log = train_model(&mut model, &dataset, &cfg)?;

    let tmp = tmp_sibling(&args.out);
    save_model(&tmp, &model, src_vocab.fingerprint(), tgt_vocab.fingerprint())?;
    commit(&tmp, &args.out)?;
    write_atomic(&sidecar(&args.out, "vocab.src"), &vocab_bytes(&src_vocab)?)?;
    write_atomic(&sidecar(&args.out, "vocab.tgt"), &vocab_bytes(&tgt_vocab)?)?;
    let csv_path = args
        .loss_csv
        .clone()
        .unwrap_or_else(|| sidecar(&args.out, "loss.csv"));
    write_atomic(&csv_path, loss_log_csv(&log).as_bytes())?;

    let last = log.last().expect("at least one epoch");
    println!(
        "trained {kind} on {} pairs for {} epochs: loss {:.6} -> {:.6}",
        dataset.len(),
        cfg.epochs,
        log[0].total,
        last.total
    );
    println!(
        "checkpoint {} ({} coordinates), loss log {}",
        args.out.display(),
        model.coord_count(),
        csv_path.display()
    );
    Ok(())
}

fn run_translate(args: TranslateArgs) -> CmdResult {
    let src_vocab = read_vocab(&sidecar(&args.model, "vocab.src"))?;
    let tgt_vocab = read_vocab(&sidecar(&args.model, "vocab.tgt"))?;
    let model = load_model(&args.model, src_vocab.fingerprint(), tgt_vocab.fingerprint())?;

    let lines = read_lines(&args.input)?;
    let feats = args.feats.as_deref().map(FeatureFile::load).transpose()?;
    let needs = matches!(model.kind(), ModelKind::DoublyAttentive | ModelKind::Vag);
    if needs && feats.is_none() {
        return Err(usage(format!(
            "a {} checkpoint needs --feats to decode",
            model.kind()
        )));
    }
    if let Some(f) = &feats {
        if needs && f.len() != lines.len() {
            return Err(Error::Argument(format!(
                "feature file has {} items for {} input lines",
                f.len(),
                lines.len()
            ))
            .into());
        }
    }

    let mut out = String::new();
    for (i, line) in lines.iter().enumerate() {
        let tokens = tokenize(line);
        if tokens.is_empty() {
            out.push('\n');
            continue;
        }
        let ids = src_vocab.encode(&tokens);
        let (spatial, global) = match (model.kind(), &feats) {
            (ModelKind::DoublyAttentive, Some(f)) => (Some(f.spatial(i)?), None),
            (ModelKind::Vag, Some(f)) => (None, Some(f.global(i)?)),
            _ => (None, None),
        };
        let decoded = greedy_decode(&model, &ids, spatial.as_ref(), global.as_ref(), args.max_len)?;
        out.push_str(&tgt_vocab.decode(&decoded).join(" "));
        out.push('\n');
    }
    write_atomic(&args.out, out.as_bytes())?;
    println!("translated {} lines -> {}", lines.len(), args.out.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalReport {
    bleu: f64,
    fscore: FScoreReport,
}

fn run_evaluate(args: EvaluateArgs) -> CmdResult {
    let hyp: Vec<Vec<String>> = read_lines(&args.hyp)?.iter().map(|l| tokenize(l)).collect();
    let reference: Vec<Vec<String>> =
        read_lines(&args.reference)?.iter().map(|l| tokenize(l)).collect();

    let bleu = corpus_bleu(&hyp, &reference, args.max_n)?;
    let mut freq = HashMap::new();
    if let Some(path) = &args.train_corpus {
        for line in read_lines(path)? {
            for token in tokenize(&line) {
                *freq.entry(token).or_insert(0u64) += 1;
            }
        }
    }
    let fscore = word_fscore_breakdown(&hyp, &reference, &freq, &args.buckets)?;

    let report = EvalReport { bleu, fscore };
    let json = format!(
        "{}\n",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    match &args.out {
        Some(path) => {
            write_atomic(path, json.as_bytes())?;
            println!("BLEU = {bleu:.2} -> {}", path.display());
        }
        None => print!("{json}"),
    }
    Ok(())
}

/// `model.bin` -> `model.bin.<suffix>`.
fn sidecar(base: &Path, suffix: &str) -> PathBuf {
    let mut name = base.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".");
    name.push(suffix);
    base.with_file_name(name)
}

fn vocab_bytes(vocab: &Vocabulary) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    vocab
        .write_to(&mut bytes)
        .map_err(|e| Error::io("<vocabulary>", e))?;
    Ok(bytes)
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    let file = fs::File::open(path).map_err(|e| Error::io(path.display(), e))?;
    Vocabulary::read_from(BufReader::new(file))
}
