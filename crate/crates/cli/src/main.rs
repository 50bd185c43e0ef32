use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;
use terzina::corpus::parse_blocks;
use terzina::generator::{self, GenConfig, Lexicon, Scores, TercetView};
use terzina::neural::{perplexity, Checkpoint};
use terzina::trainer::config::sidecar;
use terzina::trainer::{PlanConfig, PlanOverrides, Preset, PresetCorpora};
use terzina::{CorpusKind, Error, Syllabifier, Vocabulary};

/// Syllable-level language model for Italian tercets.
#[derive(Parser, Debug)]
#[command(name = "terzina", version, about)]
struct Cli {
    /// Worker threads for training and sampling; 1 gives bit-identical runs.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Emit one JSON record per result instead of text.
    #[arg(long, global = true)]
    json: bool,

    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build a syllable vocabulary from a corpus.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "tercets")]
        kind: CorpusKind,
        #[arg(long)]
        output: PathBuf,
        #[command(flatten)]
        syl: SylArgs,
    },
    /// Train a model from a plan file or a preset.
    Train(TrainArgs),
    /// Print the perplexity of a checkpoint on a corpus.
    EvalPpl {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Vocabulary file; defaults to the checkpoint's `.vocab` sidecar.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value = "tercets")]
        kind: CorpusKind,
        #[command(flatten)]
        syl: SylArgs,
    },
    /// Sample tercets and print the best ones.
    Generate(GenerateArgs),
    /// Score the verse blocks of a text file.
    Score {
        file: PathBuf,
        /// Word list, one word per line.
        #[arg(long, conflicts_with = "lexicon_corpus")]
        lexicon: Option<PathBuf>,
        /// Tercet corpus whose words form the lexicon.
        #[arg(long)]
        lexicon_corpus: Option<PathBuf>,
        #[arg(long, default_value_t = 0.05)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        b: f64,
        #[command(flatten)]
        syl: SylArgs,
    },
    /// Hyphenate words, or every line of a file.
    Syllabify {
        words: Vec<String>,
        #[arg(long, conflicts_with = "words")]
        file: Option<PathBuf>,
        #[command(flatten)]
        syl: SylArgs,
    },
}

#[derive(Args, Debug)]
struct SylArgs {
    /// Extra hyphenation exceptions (`word<TAB>syl-la-bles` per line).
    #[arg(long)]
    exceptions: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    plan: Option<PathBuf>,
    /// dc, paisa-dc, dp-dc or paisa-dp-dc.
    #[arg(long, requires = "comedy")]
    preset: Option<Preset>,
    /// Target tercet corpus for presets.
    #[arg(long)]
    comedy: Option<PathBuf>,
    /// Generic prose corpus for presets.
    #[arg(long)]
    paisa: Option<PathBuf>,
    /// Author prose corpus for presets.
    #[arg(long)]
    dante_prose: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    embed: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
    #[command(flatten)]
    syl: SylArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Defaults to the checkpoint's `.vocab` sidecar.
    #[arg(long)]
    vocab: Option<PathBuf>,
    /// Defaults to the checkpoint's `.lexicon` sidecar.
    #[arg(long)]
    lexicon: Option<PathBuf>,
    /// Number of candidates to sample.
    #[arg(long, default_value_t = 2000)]
    count: usize,
    /// Number of best candidates to print.
    #[arg(long, default_value_t = 1)]
    top: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    #[arg(long, default_value_t = 75)]
    max_syllables: usize,
    #[arg(long, default_value_t = 0.05)]
    a: f64,
    #[arg(long, default_value_t = 1.0)]
    b: f64,
    /// Also write the scores of the printed tercets as TSV.
    #[arg(long)]
    scores: Option<PathBuf>,
    #[command(flatten)]
    syl: SylArgs,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(msg) => Failure::Usage(msg),
            e => Failure::Data(e),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => f.write_str(m),
            Failure::Data(e) => e.fmt(f),
        }
    }
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(e) if e.is_divergence() => 3,
            Failure::Data(_) => 2,
        }
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command, cli.json) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit_code())
        }
    }
}

fn syllabifier(args: &SylArgs) -> Result<Syllabifier, Error> {
    let mut s = Syllabifier::new();
    if let Some(path) = &args.exceptions {
        s.load_exceptions_file(path)?;
    }
    Ok(s)
}

fn run(command: Command, json: bool) -> Outcome {
    match command {
        Command::BuildVocab {
            corpus,
            kind,
            output,
            syl,
        } => {
            let vocab = Vocabulary::from_corpus_file(&corpus, kind, &syllabifier(&syl)?)?;
            vocab.save(&output)?;
            if json {
                println!(
                    "{}",
                    json!({"path": output, "size": vocab.len(), "hash": vocab.hash().to_hex()})
                );
            } else {
                println!("{} tokens, hash {}", vocab.len(), vocab.hash());
            }
            Ok(())
        }
        Command::Train(args) => train(args, json),
        Command::EvalPpl {
            checkpoint,
            vocab,
            corpus,
            kind,
            syl,
        } => {
            let vocab = Vocabulary::load(vocab.unwrap_or_else(|| sidecar(&checkpoint, "vocab")))?;
            let ckpt = Checkpoint::load_for(&checkpoint, &vocab)?;
            let seqs = vocab.encode_corpus_file(&corpus, kind, &syllabifier(&syl)?)?;
            let ppl = perplexity(&seqs, &ckpt.params)?;
            if json {
                println!("{}", json!({"ppl": ppl, "sequences": seqs.len()}));
            } else {
                println!("{ppl:.6}");
            }
            Ok(())
        }
        Command::Generate(args) => generate(args, json),
        Command::Score {
            file,
            lexicon,
            lexicon_corpus,
            a,
            b,
            syl,
        } => {
            let syl = syllabifier(&syl)?;
            let lexicon = match (lexicon, lexicon_corpus) {
                (Some(path), _) => Lexicon::load(path)?,
                (None, Some(corpus)) => {
                    Lexicon::from_tercets(&terzina::corpus::read_tercets(corpus)?)
                }
                (None, None) => {
                    return Err(Failure::Usage(
                        "score needs --lexicon or --lexicon-corpus".into(),
                    ))
                }
            };
            if !(a > 0.0 && b > 0.0) {
                return Err(Failure::Usage("--a and --b must be positive".into()));
            }
            let text = std::fs::read_to_string(&file).map_err(|e| Error::Io {
                path: file.clone(),
                source: e,
            })?;
            if !json {
                println!("{}", generator::SCORE_HEADER);
            }
            for (i, block) in parse_blocks(&text).iter().enumerate() {
                let view = TercetView::from_verses(&block.lines, &syl);
                let s = Scores::of(&view, &lexicon, a, b, &syl);
                if json {
                    println!(
                        "{}",
                        json!({"index": i, "line": block.first_line, "r1": s.r1, "r2": s.r2, "r3": s.r3, "r4": s.r4, "r": s.r})
                    );
                } else {
                    println!("{}", generator::score_row(i, &s));
                }
            }
            Ok(())
        }
        Command::Syllabify { words, file, syl } => {
            let syl = syllabifier(&syl)?;
            let lines: Vec<String> = match file {
                Some(path) => std::fs::read_to_string(&path)
                    .map_err(|e| Error::Io { path, source: e })?
                    .lines()
                    .map(String::from)
                    .collect(),
                None if words.is_empty() => {
                    return Err(Failure::Usage("give words or --file".into()))
                }
                None => vec![words.join(" ")],
            };
            for line in lines {
                let norm = terzina::corpus::normalize(&line);
                if norm.is_empty() {
                    continue;
                }
                let mut hyphenated = Vec::new();
                for word in norm.split_whitespace() {
                    let syllables = match syl.syllabify(word) {
                        Ok(b) => b.syllables,
                        Err(_) => vec![word.to_string()],
                    };
                    if json {
                        println!("{}", json!({"word": word, "syllables": syllables}));
                    }
                    hyphenated.push(syllables.join("-"));
                }
                if !json {
                    println!("{}", hyphenated.join(" "));
                }
            }
            Ok(())
        }
    }
}

fn train(args: TrainArgs, json: bool) -> Outcome {
    let mut cfg = match (&args.plan, args.preset) {
        (Some(path), _) => PlanConfig::load(path)?,
        (None, Some(preset)) => PlanConfig::preset(
            preset,
            &PresetCorpora {
                comedy: args.comedy.clone().expect("clap enforces --comedy"),
                paisa: args.paisa.clone(),
                dante_prose: args.dante_prose.clone(),
            },
        )?,
        (None, None) => unreachable!("clap requires --plan or --preset"),
    };
    cfg.apply(&PlanOverrides {
        seed: args.seed,
        embed: args.embed,
        hidden: args.hidden,
        vocab: args.vocab,
        output: args.output,
        log: args.log,
        batch_size: args.batch_size,
        lr: args.lr,
        patience: args.patience,
        max_epochs: args.max_epochs,
        dropout: args.dropout,
    });
    let trained = cfg.train(&syllabifier(&args.syl)?)?;
    for stage in &trained.report.stages {
        let best = stage.best_val_ppl();
        if json {
            println!(
                "{}",
                json!({"stage": stage.name, "epochs": stage.history.len(), "best_epoch": stage.best_epoch, "val_ppl": best})
            );
        } else {
            println!(
                "{}\tepochs {}\tbest epoch {}\tval ppl {}",
                stage.name,
                stage.history.len(),
                stage.best_epoch.map_or("-".into(), |e| e.to_string()),
                best.map_or("-".into(), |p| format!("{p:.4}"))
            );
        }
    }
    let out = cfg.output.display();
    match (json, trained.report.test_ppl) {
        (true, test) => println!("{}", json!({"checkpoint": cfg.output, "test_ppl": test})),
        (false, Some(t)) => println!("test ppl {t:.4}\ncheckpoint {out}"),
        (false, None) => println!("checkpoint {out}"),
    }
    Ok(())
}

fn generate(args: GenerateArgs, json: bool) -> Outcome {
    let vocab = Vocabulary::load(
        args.vocab
            .unwrap_or_else(|| sidecar(&args.checkpoint, "vocab")),
    )?;
    let ckpt = Checkpoint::load_for(&args.checkpoint, &vocab)?;
    let lexicon = Lexicon::load(
        args.lexicon
            .unwrap_or_else(|| sidecar(&args.checkpoint, "lexicon")),
    )?;
    let cfg = GenConfig {
        max_syllables: args.max_syllables,
        batch: args.count,
        top_k: args.top,
        temperature: args.temperature,
        seed: args.seed,
        a: args.a,
        b: args.b,
    };
    let best = generator::generate_best(
        &ckpt.params,
        &vocab,
        &lexicon,
        &cfg,
        &syllabifier(&args.syl)?,
    )?;
    if json {
        for t in &best {
            println!("{}", serde_json::to_string(t).expect("serializable"));
        }
    } else {
        print!("{}", generator::format_tercets(&best));
    }
    if let Some(path) = &args.scores {
        write(path, &generator::format_scores(&best))?;
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}
