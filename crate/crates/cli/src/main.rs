use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use lts_core::align_em::{alignments_to_tsv, parse_alignments, Alignment, EmOptions};
use lts_core::align_seeded::{report_unalignable, AllowablesTable};
use lts_core::compressx::{compress, CompressedLexicon, UnalignablePolicy};
use lts_core::evalx::{accuracy_size_sweep, evaluate, sweep_csv, Preset};
use lts_core::features::{Direction, FeatureConfig, StressMode};
use lts_core::id3::TrainConfig;
use lts_core::lexicon::{
    merge_pseudo_phones, parse_lexicon, render_phones, LexiconFormat, MergePolicy, PhoneInventory, PseudoPhoneSet,
};
use lts_core::pipeline::{align_lexicon, parse_split, split_aligned, AlignMethod, AlignedCorpus};
use lts_core::transcriber::{transcribe_batch, UnknownLetterPolicy};
use lts_core::{Error, Model};

const FORMATS: &str = "\
Lexicon formats (--format):
  cmu    WORD  PH0 PH1 ...   ';;;' comments, '(n)' variant suffixes, digit stress
  oald   word<TAB>pos<TAB>ph ph* ...   '*' marks primary stress
  tsv    word<TAB>pos<TAB>ph ph ...    (pos may be empty) or 'word [pos] :: ph ph ...'
Alignment files: word<TAB>pos<TAB>sym sym ...  one symbol per letter, '-' is epsilon,
  A_B a pseudo-phone.
Allowables: 'letter: SYM SYM ... _' per line, '_' is epsilon, stress ignored.
Pseudo-phones: 'NAME = A B' per line.
Phone inventory: 'SYM class' per line, class 'vowel' marks vowels.";

#[derive(Parser)]
#[command(name = "lts", version, about = "Learn letter-to-sound rules from a pronunciation lexicon", after_help = FORMATS)]
struct Cli {
    /// Worker threads (default: available parallelism). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Align a lexicon one-to-one and write the alignment TSV.
    #[command(after_help = FORMATS)]
    Align {
        #[command(flatten)]
        lex: LexArgs,
        #[command(flatten)]
        align: AlignArgs,
        /// Write the association table (letter<TAB>symbol<TAB>prob) here.
        #[arg(long)]
        table: Option<PathBuf>,
        /// Write alignments here instead of stdout.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// List entries the allowables table cannot align, with the letter index where they get stuck.
    #[command(after_help = FORMATS)]
    SeedReport {
        #[command(flatten)]
        lex: LexArgs,
        #[arg(long)]
        allowables: Option<PathBuf>,
        #[arg(long)]
        pseudo: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Merge::Always)]
        merge: Merge,
    },
    /// Train a model file.
    #[command(after_help = FORMATS)]
    Train {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        feat: FeatArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Transcribe words (one `word[<TAB>pos]` per line) read from --input or stdin.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: Option<PathBuf>,
        /// Emit epsilon for letters the model has never seen instead of failing.
        #[arg(long)]
        skip_unknown: bool,
    },
    /// Train on a split and report accuracy on the held-out part.
    #[command(after_help = FORMATS)]
    Eval {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        feat: FeatArgs,
        /// `every:N[:OFFSET]` holds out every N-th entry; `none` tests on the training set.
        #[arg(long, default_value = "every:10:0")]
        split: String,
        /// Machine-readable TSV instead of the table.
        #[arg(long)]
        tsv: bool,
    },
    /// Tree size against word accuracy for several depth caps and feature presets (CSV).
    #[command(after_help = FORMATS)]
    Sweep {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        feat: FeatArgs,
        /// Comma-separated depth caps; `full` is uncapped.
        #[arg(long, default_value = "0,2,4,6,8,full")]
        depths: String,
        #[arg(long, default_value = "g,gp,gppos")]
        presets: String,
        #[arg(long, default_value = "none")]
        split: String,
    },
    /// Build a compressed lexicon (model + exceptions) in a directory.
    #[command(after_help = FORMATS)]
    Compress {
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        feat: FeatArgs,
        #[arg(long, short)]
        out: PathBuf,
        /// Leave unalignable entries out instead of failing.
        #[arg(long)]
        drop_unalignable: bool,
    },
    /// Look a word up in a compressed lexicon.
    Lookup {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        phones: Option<PathBuf>,
        /// Print every stored variant.
        #[arg(long)]
        all: bool,
        word: String,
        pos: Option<String>,
    },
}

#[derive(Args)]
struct LexArgs {
    #[arg(long)]
    lexicon: PathBuf,
    #[arg(long, default_value = "cmu")]
    format: String,
    /// Phone inventory file (default: the CMU set).
    #[arg(long)]
    phones: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Em,
    Seeded,
}

#[derive(Clone, Copy, ValueEnum)]
enum Merge {
    Always,
    WhenNeeded,
}

impl From<Merge> for MergePolicy {
    fn from(m: Merge) -> Self {
        match m {
            Merge::Always => MergePolicy::Always,
            Merge::WhenNeeded => MergePolicy::WhenNeeded,
        }
    }
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long, value_enum, default_value_t = Method::Seeded)]
    method: Method,
    /// Allowables table for the seeded method (default: built-in English table).
    #[arg(long)]
    allowables: Option<PathBuf>,
    /// Pseudo-phone list (default: K_S, G_Z, W_A).
    #[arg(long)]
    pseudo: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Merge::Always)]
    merge: Merge,
    /// EM iteration cap.
    #[arg(long, default_value_t = 10)]
    iters: usize,
    /// EM stops once no probability moves by this much.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    /// Extra re-estimation passes for the seeded method.
    #[arg(long, default_value_t = 0)]
    iterate: usize,
}

/// Training data: a ready alignment file, or a lexicon aligned on the fly.
#[derive(Args)]
struct CorpusArgs {
    #[arg(long, conflicts_with = "lexicon")]
    alignments: Option<PathBuf>,
    #[arg(long, required_unless_present = "alignments")]
    lexicon: Option<PathBuf>,
    #[arg(long, default_value = "cmu")]
    format: String,
    #[arg(long)]
    phones: Option<PathBuf>,
    #[command(flatten)]
    align: AlignArgs,
}

#[derive(Args)]
struct FeatArgs {
    #[arg(long, default_value_t = 3)]
    window: usize,
    #[arg(long, default_value_t = 0)]
    feedback: usize,
    #[arg(long, default_value = "ltr")]
    direction: String,
    #[arg(long)]
    pos: bool,
    #[arg(long, default_value = "merged")]
    stress: String,
    #[arg(long, default_value_t = 0.0)]
    min_gain: f64,
    #[arg(long)]
    max_depth: Option<usize>,
}

impl FeatArgs {
    fn configs(&self) -> Result<(FeatureConfig, TrainConfig)> {
        let cfg = FeatureConfig {
            window: self.window,
            feedback: self.feedback,
            direction: self.direction.parse::<Direction>()?,
            use_pos: self.pos,
            stress_mode: self.stress.parse::<StressMode>()?,
        };
        cfg.validate()?;
        Ok((cfg, TrainConfig { min_gain: self.min_gain, max_depth: self.max_depth }))
    }
}

fn inventory(path: &Option<PathBuf>) -> Result<PhoneInventory> {
    Ok(match path {
        Some(p) => PhoneInventory::load(p)?,
        None => PhoneInventory::cmu(),
    })
}

fn pseudo_set(path: &Option<PathBuf>) -> Result<PseudoPhoneSet> {
    Ok(match path {
        Some(p) => PseudoPhoneSet::load(p)?,
        None => PseudoPhoneSet::default(),
    })
}

fn allowables(path: &Option<PathBuf>) -> Result<AllowablesTable> {
    Ok(match path {
        Some(p) => AllowablesTable::load(p)?,
        None => AllowablesTable::english_starter(),
    })
}

fn load_lexicon(path: &Path, format: &str, inv: &PhoneInventory) -> Result<Vec<lts_core::LexiconEntry>> {
    let fmt: LexiconFormat = format.parse()?;
    let parsed = parse_lexicon(path, fmt, inv)?;
    if !parsed.rejects.is_empty() {
        eprintln!("{} lexicon lines rejected", parsed.rejects.len());
        for r in parsed.rejects.iter().take(5) {
            eprintln!("  line {}: {}", r.line_no, r.reason);
        }
    }
    Ok(parsed.entries)
}

fn run_align(entries: &[lts_core::LexiconEntry], a: &AlignArgs) -> Result<AlignedCorpus> {
    let method = match a.method {
        Method::Em => AlignMethod::Em(EmOptions { max_iters: a.iters, tol: a.tol }),
        Method::Seeded => AlignMethod::Seeded { allow: allowables(&a.allowables)?, extra_passes: a.iterate },
    };
    let corpus = align_lexicon(entries, &pseudo_set(&a.pseudo)?, a.merge.into(), &method)?;
    if let Some(em) = &corpus.em {
        for (i, it) in em.trace.iter().enumerate() {
            eprintln!(
                "em iteration {}: objective {:.4} max delta {:.6}{}",
                i + 1,
                it.objective,
                it.max_delta,
                if it.alignments_changed { "" } else { " (alignments unchanged)" }
            );
        }
    }
    eprintln!("{} aligned, {} unalignable", corpus.alignments.len(), corpus.unaligned.len());
    Ok(corpus)
}

/// Aligned entries plus the unalignable source entries.
fn load_corpus(c: &CorpusArgs) -> Result<(Vec<Alignment>, Vec<lts_core::LexiconEntry>, PhoneInventory)> {
    let inv = inventory(&c.phones)?;
    if let Some(path) = &c.alignments {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok((parse_alignments(&text)?, Vec::new(), inv));
    }
    let lexicon = c.lexicon.as_ref().expect("clap enforces one input");
    let entries = load_lexicon(lexicon, &c.format, &inv)?;
    let corpus = run_align(&entries, &c.align)?;
    Ok((corpus.alignments, corpus.unaligned, inv))
}

fn split(alignments: Vec<Alignment>, spec: &str) -> Result<(Vec<Alignment>, Vec<Alignment>)> {
    if spec == "none" {
        return Ok((alignments.clone(), alignments));
    }
    let (n, offset) = parse_split(spec)?;
    Ok(split_aligned(&alignments, n, offset)?)
}

fn write_out(path: &Option<PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Align { lex, align, table, out } => {
            let inv = inventory(&lex.phones)?;
            let entries = load_lexicon(&lex.lexicon, &lex.format, &inv)?;
            let corpus = run_align(&entries, &align)?;
            if let Some(t) = table {
                fs::write(&t, corpus.table.to_tsv()).with_context(|| format!("writing {}", t.display()))?;
            }
            write_out(&out, &alignments_to_tsv(&corpus.alignments))?;
        }
        Cmd::SeedReport { lex, allowables: allow, pseudo, merge } => {
            let inv = inventory(&lex.phones)?;
            let entries = load_lexicon(&lex.lexicon, &lex.format, &inv)?;
            let merges = pseudo_set(&pseudo)?;
            let merged: Vec<_> = entries
                .iter()
                .map(|e| merge_pseudo_phones(e, &merges, merge.into()).entry().clone())
                .collect();
            let report = report_unalignable(&merged, &allowables(&allow)?);
            io::stdout().write_all(report.to_tsv().as_bytes())?;
            eprintln!("{}", report.summary());
        }
        Cmd::Train { corpus, feat, out } => {
            let (cfg, tc) = feat.configs()?;
            let (alignments, _, inv) = load_corpus(&corpus)?;
            let model = Model::train(&alignments, &cfg, &tc, &inv)?;
            fs::write(&out, model.serialize()).with_context(|| format!("writing {}", out.display()))?;
            eprintln!("model size {} nodes", model.size());
        }
        Cmd::Predict { model, input, skip_unknown } => {
            let text = fs::read_to_string(&model).with_context(|| format!("reading {}", model.display()))?;
            let model = Model::deserialize(&text)?;
            let mut words = String::new();
            match &input {
                Some(p) => words = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
                None => {
                    io::stdin().lock().read_to_string(&mut words)?;
                }
            }
            let items: Vec<(String, Option<String>)> = words
                .as_bytes()
                .lines()
                .map_while(|l| l.ok())
                .filter(|l| !l.trim().is_empty())
                .map(|l| {
                    let mut it = l.split('\t');
                    let w = it.next().unwrap_or("").trim().to_string();
                    let p = it.next().map(str::trim).filter(|p| !p.is_empty()).map(str::to_string);
                    (w, p)
                })
                .collect();
            let policy = if skip_unknown { UnknownLetterPolicy::SkipWithEpsilon } else { UnknownLetterPolicy::Fail };
            let batch = transcribe_batch(&items, &model, policy);
            let mut out = String::new();
            for ((w, p), r) in items.iter().zip(&batch.results) {
                if let Ok(t) = r {
                    out.push_str(&format!("{w}\t{}\t{}\n", p.as_deref().unwrap_or(""), render_phones(&t.phones)));
                }
            }
            io::stdout().write_all(out.as_bytes())?;
            let failed = batch.failures().count();
            if failed > 0 {
                eprint!("{}", batch.error_report());
                bail!(Error::Config(format!("{failed} words could not be transcribed")));
            }
        }
        Cmd::Eval { corpus, feat, split: spec, tsv } => {
            let (cfg, tc) = feat.configs()?;
            let (alignments, _, inv) = load_corpus(&corpus)?;
            let (train, test) = split(alignments, &spec)?;
            let model = Model::train(&train, &cfg, &tc, &inv)?;
            let m = evaluate(&model, &test)?;
            if tsv {
                print!("{}", m.to_tsv());
            } else {
                println!("{m}");
                println!("model size                  {}", model.size());
            }
        }
        Cmd::Sweep { corpus, feat, depths, presets, split: spec } => {
            let (cfg, tc) = feat.configs()?;
            let depths: Vec<Option<usize>> = depths
                .split(',')
                .map(|d| match d.trim() {
                    "full" => Ok(None),
                    d => d.parse().map(Some).map_err(|_| Error::Config(format!("bad depth '{d}'"))),
                })
                .collect::<std::result::Result<_, _>>()?;
            let presets: Vec<Preset> = presets.split(',').map(|p| p.trim().parse()).collect::<std::result::Result<_, _>>()?;
            let (alignments, _, inv) = load_corpus(&corpus)?;
            let (train, test) = split(alignments, &spec)?;
            let rows = accuracy_size_sweep(&train, &test, &cfg, &tc, &depths, &presets, &inv)?;
            print!("{}", sweep_csv(&rows));
        }
        Cmd::Compress { corpus, feat, out, drop_unalignable } => {
            let (cfg, tc) = feat.configs()?;
            let (alignments, unaligned, inv) = load_corpus(&corpus)?;
            let policy = if drop_unalignable { UnalignablePolicy::Drop } else { UnalignablePolicy::Fail };
            let c = compress(&alignments, &unaligned, &cfg, &tc, &inv, policy)?;
            c.save(&out)?;
            print!("{}", c.stats.to_text());
        }
        Cmd::Lookup { dir, phones, all, word, pos } => {
            let c = CompressedLexicon::load(&dir, &inventory(&phones)?)?;
            let variants = c.lookup_all(&word, pos.as_deref())?;
            let shown = if all { &variants[..] } else { &variants[..1] };
            for v in shown {
                println!("{}", render_phones(v));
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<Error>() {
        Some(e) if e.is_invariant() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("thread pool is configured once");
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
