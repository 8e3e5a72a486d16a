use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clm::diagnostics::{run_checks, CheckPlan, ParamSource};
use clm::training::{read_checkpoint, write_checkpoint, Trainer};
use clm::{evaluate, viterbi_tree, Chart, DistortionSpec, ModelParams, Sentence, Vocab};
use log::{info, warn};

use crate::config::{self, Overrides, RunFile};
use crate::error::CliError;
use crate::{BuildVocabArgs, CheckArgs, DistortArgs, EvalArgs, ScoreArgs, TrainArgs};

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn require_file(path: &Path) -> Result<(), CliError> {
    match fs::metadata(path) {
        Ok(m) if m.is_file() => Ok(()),
        Ok(_) => Err(CliError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::InvalidInput, "not a regular file"),
        )),
        Err(e) => Err(CliError::io(path, e)),
    }
}

fn require_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() && !p.is_dir() => Err(CliError::io(
            p,
            std::io::Error::new(
                std::io::ErrorKind::NotFound,
                "output directory does not exist",
            ),
        )),
        _ => Ok(()),
    }
}

fn load_vocab(path: &Path) -> Result<Vocab> {
    Vocab::from_text(&read(path)?).with_context(|| format!("reading vocabulary {}", path.display()))
}

/// Loads a model and confirms it was trained against `vocab`.
fn load_model(path: &Path, vocab: &Vocab) -> Result<ModelParams> {
    let (params, hash) = ModelParams::from_text(&read(path)?)
        .with_context(|| format!("reading model {}", path.display()))?;
    let fp = vocab.fingerprint();
    if hash != fp {
        return Err(clm::Error::VocabMismatch {
            expected: hash,
            got: fp,
        }
        .into());
    }
    if params.vocab_size() != vocab.len() {
        return Err(CliError::config(format!(
            "model has {} embeddings but the vocabulary has {} entries",
            params.vocab_size(),
            vocab.len()
        ))
        .into());
    }
    Ok(params)
}

fn load_corpus(path: &Path, vocab: &Vocab) -> Result<Vec<Sentence>> {
    let corpus = vocab.encode_corpus(&read(path)?);
    if corpus.is_empty() {
        return Err(clm::Error::EmptyCorpus).with_context(|| format!("corpus {}", path.display()));
    }
    Ok(corpus)
}

pub fn build_vocab(a: BuildVocabArgs) -> Result<()> {
    require_file(&a.corpus)?;
    require_parent(&a.out)?;
    let text = read(&a.corpus)?;
    let vocab = Vocab::build(text.lines(), a.min_count)?;
    write(&a.out, &vocab.to_text())?;
    info!(
        "{} content tokens plus {} written to {}",
        vocab.content_len(),
        clm::corpus::UNK_TOKEN,
        a.out.display()
    );
    Ok(())
}

fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("checkpoint-{epoch:03}.txt"))
}

pub fn train(a: TrainArgs) -> Result<()> {
    let file = RunFile::load(a.config.as_deref())?;
    let mut flags = Overrides::default();
    flags
        .set_u64("seed", a.seed)
        .set_usize("epochs", a.epochs)
        .set_usize("d", a.d)
        .set("learning_rate", a.learning_rate)
        .set("l2", a.l2)
        .set("grad_mode", a.grad_mode)
        .set_usize("batch_size", a.batch_size)
        .set_usize("max_sentence_length", a.max_sentence_length)
        .set_usize("workers", a.workers);
    let config = config::train_config(&file, &flags)?;
    let corpus_path = config::pick(a.corpus, &file.corpus, "corpus")?;
    let vocab_path = config::pick(a.vocab, &file.vocab, "vocab")?;
    let out_dir = config::pick(a.out_dir, &file.out_dir, "out_dir")?;
    let resume = a.resume.or(file.resume);
    require_file(&corpus_path)?;
    require_file(&vocab_path)?;
    if let Some(r) = &resume {
        require_file(r)?;
    }
    fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    if config.workers > 1 {
        warn!("workers = {}: runs are reduced in sentence order but only single-worker runs are guaranteed reproducible", config.workers);
    }

    let vocab = load_vocab(&vocab_path)?;
    let fp = vocab.fingerprint();
    let corpus = load_corpus(&corpus_path, &vocab)?;

    let mut trainer = match &resume {
        None => Trainer::new(config.clone(), vocab.len())?,
        Some(path) => {
            let (params, state, epoch, hash) = read_checkpoint(&read(path)?)
                .with_context(|| format!("reading checkpoint {}", path.display()))?;
            if hash != fp {
                return Err(clm::Error::VocabMismatch {
                    expected: hash,
                    got: fp,
                }
                .into());
            }
            if params.d != config.d {
                warn!(
                    "checkpoint has d = {}; ignoring configured d = {}",
                    params.d, config.d
                );
            }
            Trainer::resume(config.clone(), params, state, epoch)?
        }
    };

    let log_path = out_dir.join("train_log.jsonl");
    let mut log = fs::File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut record = trainer.initial_record(&corpus)?;
    loop {
        info!(
            "epoch {}: objective {:.6} (nll {:.6}, l2 {:.6}), {} sentences, {} skipped",
            record.epoch,
            record.objective,
            record.nll,
            record.regularizer,
            record.sentences,
            record.skipped
        );
        writeln!(log, "{}", serde_json::to_string(&record)?)
            .map_err(|e| CliError::io(&log_path, e))?;
        let ckpt = checkpoint_path(&out_dir, trainer.epoch());
        write(
            &ckpt,
            &write_checkpoint(trainer.params(), trainer.state(), trainer.epoch(), &fp),
        )?;
        if trainer.epoch() >= config.epochs {
            break;
        }
        record = trainer.run_epoch(&corpus)?;
    }
    let model_path = out_dir.join("model.txt");
    write(&model_path, &trainer.params().to_text(&fp))?;
    info!("model written to {}", model_path.display());
    Ok(())
}

pub fn score(a: ScoreArgs) -> Result<()> {
    require_file(&a.vocab)?;
    require_file(&a.model)?;
    let vocab = load_vocab(&a.vocab)?;
    let params = load_model(&a.model, &vocab)?;
    let s = vocab.encode(&a.text)?;
    let chart = Chart::inside(&params, &s)?;
    println!("{}", chart.sentence_log_score());
    if a.tree {
        let (tree, _) = viterbi_tree(&params, &s)?;
        let words: Vec<&str> = a.text.split_whitespace().collect();
        println!("{}", tree.bracketed(&words));
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> Result<()> {
    let file = RunFile::load(a.config.as_deref())?;
    let mut flags = Overrides::default();
    flags
        .set_u64("seed", a.seed)
        .set("levels", a.levels)
        .set("baseline_level", a.baseline)
        .set_usize("runs", a.runs)
        .set_usize("workers", a.workers);
    let config = config::eval_config(&file, &flags)?;
    let model_path = config::pick(a.model, &file.model, "model")?;
    let vocab_path = config::pick(a.vocab, &file.vocab, "vocab")?;
    let test_path = config::pick(a.test, &file.test, "test")?;
    let out = a.out.or(file.out);
    let plot = a.plot.or(file.plot);
    for p in [&model_path, &vocab_path, &test_path] {
        require_file(p)?;
    }
    for p in out.iter().chain(&plot) {
        require_parent(p)?;
    }

    let vocab = load_vocab(&vocab_path)?;
    let params = load_model(&model_path, &vocab)?;
    let testset = load_corpus(&test_path, &vocab)?;
    let report = evaluate(&params, &testset, &vocab, &config)?;
    for row in report.rows() {
        info!(
            "level {}: H_C {:.6} bits, H_CR {:.6}",
            row.level, row.h_c_bits, row.h_cr
        );
    }
    let csv = report.to_csv();
    match &out {
        Some(p) => write(p, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(p) = &plot {
        write(p, &report.plot_data())?;
    }
    Ok(())
}

pub fn distort(a: DistortArgs) -> Result<()> {
    require_file(&a.vocab)?;
    let vocab = load_vocab(&a.vocab)?;
    let spec = DistortionSpec::new(a.level, a.seed).map_err(|e| CliError::config(e.to_string()))?;
    let s = vocab.encode(&a.text)?;
    println!("{}", vocab.decode(&clm::distort(&s, &spec, &vocab)));
    Ok(())
}

pub fn check(a: CheckArgs) -> Result<()> {
    if a.min_len == 0 || a.min_len > a.max_len {
        return Err(CliError::config("need 1 <= min-len <= max-len").into());
    }
    if a.seeds == 0 {
        return Err(CliError::config("seeds must be positive").into());
    }
    let model = match &a.model {
        Some(path) => {
            require_file(path)?;
            let (params, _) = ModelParams::from_text(&read(path)?)
                .with_context(|| format!("reading model {}", path.display()))?;
            Some(params)
        }
        None => None,
    };
    let source = match &model {
        Some(p) => ParamSource::Model(p),
        None => {
            if a.dims.contains(&0) || a.vocab_size == 0 {
                return Err(CliError::config("dims and vocab-size must be positive").into());
            }
            ParamSource::Random {
                vocab_size: a.vocab_size,
                dims: a.dims.clone(),
            }
        }
    };
    let plan = CheckPlan {
        source,
        lengths: a.min_len..=a.max_len,
        seeds: (a.seed..a.seed + a.seeds).collect(),
        gradient_max_len: a.gradient_max_len,
    };
    let results = run_checks(&plan)?;
    for r in &results {
        println!("{r}");
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed {
            failed,
            total: results.len(),
        }
        .into());
    }
    println!("all {} checks passed", results.len());
    Ok(())
}
