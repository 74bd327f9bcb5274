//! The `codeir` command line.
//!
//! Exit codes: 0 on success, 1 on a domain error (printed as `error[<id>]: ...`),
//! 2 on a usage error.

use std::ffi::OsString;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::evalharness::{embedding_report, evaluate, validate_references, EvalSet, Toolchains};
use crate::frontends::{build_corpus, read_shard, shard_path, CorpusOptions, FrontendConfig, ShardKind};
use crate::irnorm::{normalize, NormalizationConfig};
use crate::lang::SourceLang;
use crate::neural::{Checkpoint, DecoderMode, CHECKPOINT_VERSION};
use crate::objectives::Objective;
use crate::pool::default_jobs;
use crate::tokenizer::{Vocab, DEFAULT_VOCAB_SIZE};
use crate::trainer::{train, TrainConfig, TrainData};
use crate::translator::Translator;

/// Settings loadable with `--config`; command-line flags override them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub normalize: NormalizationConfig,
    pub frontends: Option<FrontendConfig>,
    pub train: TrainConfig,
    pub eval: Toolchains,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        toml::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    fn frontends(&self) -> FrontendConfig {
        self.frontends.clone().unwrap_or_else(FrontendConfig::desk_defaults)
    }
}

#[derive(Debug, Parser)]
#[command(name = "codeir", about = "Code translation with LLVM IR augmentation", disable_version_flag = true)]
struct Cli {
    /// Worker threads for corpus building and evaluation.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML file with [normalize], [frontends], [train] and [eval] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    /// Print the toolkit and checkpoint-format versions.
    #[arg(long)]
    version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Normalize LLVM IR text.
    Normalize {
        /// IR file, or `-` for stdin.
        #[arg(long = "in", value_name = "PATH", default_value = "-")]
        input: PathBuf,
        /// Output file; stdout when absent.
        #[arg(short, long = "out", value_name = "PATH")]
        output: Option<PathBuf>,
        /// Keep mangled symbol names.
        #[arg(long)]
        no_demangle: bool,
        /// External demangler with a `{sym}` placeholder.
        #[arg(long = "demangler-cmd", value_name = "TEMPLATE")]
        demangler: Option<String>,
    },
    /// Extract functions, compile them to IR and write training shards.
    BuildCorpus {
        /// Source files or directories; repeatable.
        #[arg(long = "src", value_name = "DIR", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        /// Comma-separated languages.
        #[arg(long, value_delimiter = ',', default_value = "cpp,rust")]
        lang: Vec<SourceLang>,
        /// Frontend command with `{in}` and `{out}` placeholders, used for every selected language.
        #[arg(long, value_name = "TEMPLATE")]
        frontend_cmd: Option<String>,
        /// Per-function compile timeout in seconds.
        #[arg(long, value_name = "SECS")]
        timeout: Option<f64>,
        /// Skip functions longer than this many tokens.
        #[arg(long)]
        max_tokens: Option<usize>,
        /// Vocabulary for the length guard.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Learn a BPE vocabulary from corpus shards.
    TrainVocab {
        /// Directory holding `mono.<lang>.jsonl` shards.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VOCAB_SIZE)]
        size: usize,
        #[arg(long)]
        no_byte_fallback: bool,
        #[arg(short, long = "out", value_name = "PATH")]
        output: PathBuf,
    },
    /// Train a model on corpus shards.
    Train(TrainArgs),
    /// Translate one function between source languages.
    Translate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "src", alias = "from")]
        from: SourceLang,
        #[arg(long = "tgt", alias = "to")]
        to: SourceLang,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// Print this many hypotheses of the beam.
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Source file; stdin by default.
        #[arg(default_value = "-")]
        input: PathBuf,
    },
    /// Decode IR into source code.
    Decompile {
        #[command(flatten)]
        model: ModelArgs,
        /// Language whose frontend produced the IR.
        #[arg(long, default_value = "cpp")]
        ir_lang: SourceLang,
        #[arg(long = "tgt", alias = "to")]
        to: SourceLang,
        /// Fail unless the checkpoint uses this decoder layout (`shared` or `separate`).
        #[arg(long = "decoder", alias = "decoder-mode")]
        decoder_mode: Option<DecoderMode>,
        /// IR file; stdin by default.
        #[arg(default_value = "-")]
        input: PathBuf,
    },
    /// Translate by compiling to IR and decoding the IR.
    Pivot {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long = "src", alias = "from")]
        from: SourceLang,
        #[arg(long = "tgt", alias = "to")]
        to: SourceLang,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// Source file; stdin by default.
        #[arg(default_value = "-")]
        input: PathBuf,
    },
    /// Compute CA@k and BLEU on an eval set.
    Evaluate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        set: PathBuf,
        /// Comma-separated `src-tgt` pairs; all pairs of the set's languages by default.
        #[arg(long, value_delimiter = ',')]
        directions: Vec<String>,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        /// Candidates per case for CA@k (top-k of one beam).
        #[arg(long, default_value_t = 1)]
        k: usize,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Skip running each reference against its own tests before grading.
        #[arg(long)]
        no_validate: bool,
    },
    /// Nearest tokens by embedding cosine similarity.
    EmbedReport {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        token: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Checkpoint file.
    #[arg(long)]
    model: PathBuf,
    /// Vocabulary file; defaults to `vocab.txt` next to the checkpoint.
    #[arg(long)]
    vocab: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Directory holding corpus shards.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Output directory for checkpoints and `log.jsonl`.
    #[arg(short, long)]
    out: PathBuf,
    #[arg(long)]
    steps: Option<u64>,
    /// Comma-separated objectives, e.g. `mlm,ae,bt,tlm,tae,irgen`.
    #[arg(long, value_delimiter = ',')]
    objectives: Vec<Objective>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    warmup: Option<u64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<u64>,
    #[arg(long)]
    decoder_mode: Option<DecoderMode>,
    /// Train the IR pivot (dialect back-translation).
    #[arg(long)]
    pivot: bool,
    /// Continue from `<out>/last.ckpt` when it exists.
    #[arg(long)]
    resume: bool,
}

fn io_error(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_input(path: &Path) -> Result<String, Error> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::stdin().read_to_string(&mut s).map_err(io_error(path))?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).map_err(io_error(path))
    }
}

fn read_vocab(path: &Path) -> Result<Vocab, Error> {
    let text = std::fs::read_to_string(path).map_err(io_error(path))?;
    Ok(Vocab::from_text(&text)?)
}

fn load_translator(args: &ModelArgs) -> Result<Translator, Error> {
    let vocab_path = match &args.vocab {
        Some(p) => p.clone(),
        None => args.model.parent().unwrap_or(Path::new(".")).join("vocab.txt"),
    };
    let ck = Checkpoint::load(&args.model)?;
    Ok(Translator::new(&ck, read_vocab(&vocab_path)?)?)
}

fn parse_direction(s: &str) -> Result<(SourceLang, SourceLang), Error> {
    let bad = || Error::InvalidInput(format!("direction `{s}` is not of the form src-tgt"));
    let (a, b) = s.split_once('-').ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

pub fn version_string() -> String {
    format!("codeir {} (checkpoint format {CHECKPOINT_VERSION})", env!("CARGO_PKG_VERSION"))
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    if cli.version {
        let _ = writeln!(out, "{}", version_string());
        return 0;
    }
    let Some(command) = cli.command else {
        let _ = writeln!(err, "{}", <Cli as clap::CommandFactory>::command().render_help());
        return 2;
    };
    let _ = env_logger::Builder::new()
        .filter_level(if cli.verbose { log::LevelFilter::Info } else { log::LevelFilter::Warn })
        .parse_default_env()
        .try_init();
    let ctx = Context {
        jobs: cli.jobs.unwrap_or_else(default_jobs).max(1),
        seed: cli.seed,
        config: cli.config,
    };
    match dispatch(command, &ctx, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error[{}]: {e}", e.id());
            1
        }
    }
}

struct Context {
    jobs: usize,
    seed: Option<u64>,
    config: Option<PathBuf>,
}

impl Context {
    fn file_config(&self) -> Result<FileConfig, Error> {
        match &self.config {
            Some(p) => FileConfig::load(p),
            None => Ok(FileConfig::default()),
        }
    }
}

fn write_output(path: Option<&Path>, text: &str, out: &mut dyn Write) -> Result<(), Error> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_error(p)),
        None => out.write_all(text.as_bytes()).map_err(io_error(Path::new("<stdout>"))),
    }
}

fn dispatch(command: Command, ctx: &Context, out: &mut dyn Write) -> Result<(), Error> {
    let fc = ctx.file_config()?;
    let stdout = Path::new("<stdout>");
    match command {
        Command::Normalize {
            input,
            output,
            no_demangle,
            demangler,
        } => {
            let mut cfg = fc.normalize;
            if no_demangle {
                cfg.demangle = false;
            }
            if demangler.is_some() {
                cfg.demangler_command = demangler;
            }
            let text = normalize(&read_input(&input)?, &cfg)?;
            write_output(output.as_deref(), &text, out)
        }
        Command::BuildCorpus {
            inputs,
            out: out_dir,
            lang,
            frontend_cmd,
            timeout,
            max_tokens,
            vocab,
        } => {
            let mut frontends = fc.frontends();
            if let Some(cmd) = frontend_cmd {
                for &l in &lang {
                    frontends.commands.insert(l, cmd.clone());
                }
            }
            if let Some(t) = timeout {
                frontends.timeout_secs = t;
            }
            let opts = CorpusOptions {
                jobs: ctx.jobs,
                max_tokens,
                vocab: vocab.as_deref().map(read_vocab).transpose()?,
            };
            let summary = build_corpus(&inputs, &lang, &frontends, &fc.normalize, &out_dir, &opts)?;
            for (l, c) in &summary.languages {
                writeln!(
                    out,
                    "{l}: {} functions, {} parallel ({} ok, {} compile_error, {} timeout, {} skipped_too_long)",
                    c.monolingual, c.parallel, c.ok, c.compile_error, c.timeout, c.skipped_too_long
                )
                .map_err(io_error(stdout))?;
            }
            Ok(())
        }
        Command::TrainVocab {
            corpus,
            size,
            no_byte_fallback,
            output,
        } => {
            let mut texts = Vec::new();
            for lang in SourceLang::ALL {
                let path = shard_path(&corpus, ShardKind::Monolingual, lang);
                if !path.exists() {
                    continue;
                }
                for rec in read_shard(&path)? {
                    texts.push(rec.source);
                    texts.extend(rec.normalized_ir);
                }
            }
            let vocab = Vocab::train(&texts, size, !no_byte_fallback)?;
            std::fs::write(&output, vocab.to_text()).map_err(io_error(&output))?;
            writeln!(out, "{} tokens, hash {}", vocab.size(), vocab.hash()).map_err(io_error(stdout))
        }
        Command::Train(args) => run_train(args, fc.train, ctx, out),
        Command::Translate {
            model,
            from,
            to,
            beam,
            k,
            input,
        } => {
            let t = load_translator(&model)?;
            let source = read_input(&input)?;
            for cand in t.translate_k(&source, from, to, beam, k)? {
                writeln!(out, "{cand}").map_err(io_error(stdout))?;
            }
            Ok(())
        }
        Command::Decompile {
            model,
            ir_lang,
            to,
            decoder_mode,
            input,
        } => {
            let t = load_translator(&model)?;
            let text = t.decompile(&read_input(&input)?, ir_lang, to, decoder_mode, &fc.normalize)?;
            writeln!(out, "{text}").map_err(io_error(stdout))
        }
        Command::Pivot {
            model,
            from,
            to,
            beam,
            input,
        } => {
            let t = load_translator(&model)?;
            let text = t.pivot_translate(&read_input(&input)?, from, to, &fc.frontends(), &fc.normalize, beam)?;
            writeln!(out, "{text}").map_err(io_error(stdout))
        }
        Command::Evaluate {
            model,
            set,
            directions,
            beam,
            k,
            json,
            no_validate,
        } => {
            let t = load_translator(&model)?;
            let set = EvalSet::load(&set)?;
            if !no_validate {
                validate_references(&set, &fc.eval, ctx.jobs)?;
            }
            let directions = if directions.is_empty() {
                let langs = set.languages();
                langs
                    .iter()
                    .flat_map(|&a| langs.iter().filter(move |&&b| b != a).map(move |&b| (a, b)))
                    .collect()
            } else {
                directions.iter().map(|d| parse_direction(d)).collect::<Result<Vec<_>, _>>()?
            };
            let report = evaluate(&t, &set, &directions, beam, k, &fc.eval, ctx.jobs);
            if let Some(p) = json {
                let text = serde_json::to_string_pretty(&report).expect("reports serialize");
                std::fs::write(&p, text).map_err(io_error(&p))?;
            }
            write!(out, "{}", report.to_table()).map_err(io_error(stdout))
        }
        Command::EmbedReport { model, token, k } => {
            let t = load_translator(&model)?;
            for (tok, sim) in embedding_report(&token, &t.model, &t.vocab, k)? {
                writeln!(out, "{sim:>8.4}  {tok:?}").map_err(io_error(stdout))?;
            }
            Ok(())
        }
    }
}

fn run_train(args: TrainArgs, mut cfg: TrainConfig, ctx: &Context, out: &mut dyn Write) -> Result<(), Error> {
    let vocab = read_vocab(&args.vocab)?;
    if let Some(seed) = ctx.seed {
        cfg.seed = seed;
        cfg.model.seed = seed;
    }
    if let Some(v) = args.steps {
        cfg.steps = v;
    }
    if !args.objectives.is_empty() {
        cfg.objectives = args.objectives;
    }
    if let Some(v) = args.lr {
        cfg.lr = v;
    }
    if let Some(v) = args.warmup {
        cfg.warmup = v;
    }
    if let Some(v) = args.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = args.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    if let Some(v) = args.decoder_mode {
        cfg.model.decoder_mode = v;
    }
    if args.pivot {
        cfg.pivot_mode = true;
    }
    cfg.model.vocab_size = vocab.size();
    let langs = if cfg.languages.is_empty() { SourceLang::ALL.to_vec() } else { cfg.languages.clone() };
    let langs: Vec<SourceLang> = langs
        .into_iter()
        .filter(|&l| shard_path(&args.data, ShardKind::Monolingual, l).exists())
        .collect();
    let data = TrainData::load_dir(&args.data, &langs, &vocab, cfg.model.max_len)?;
    std::fs::create_dir_all(&args.out).map_err(io_error(&args.out))?;
    let vocab_copy = args.out.join("vocab.txt");
    std::fs::write(&vocab_copy, vocab.to_text()).map_err(io_error(&vocab_copy))?;
    let ck = train(data, cfg, &vocab.hash(), &args.out, args.resume)?;
    writeln!(out, "trained to step {}; checkpoints in {}", ck.step, args.out.display()).map_err(io_error(Path::new("<stdout>")))
}
