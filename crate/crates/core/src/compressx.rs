//! Lexicon compression: a model trained on the whole lexicon plus the list
//! of entries it gets wrong.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::align_em::Alignment;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::id3::TrainConfig;
use crate::lexicon::{
    parse_lexicon_str, postprocess_output, serialize_lexicon, LexiconEntry, LexiconFormat, Phone, PhoneInventory,
};
use crate::model::Model;
use crate::transcriber::{transcribe, UnknownLetterPolicy};

pub const MODEL_FILE: &str = "model.lts";
pub const EXCEPTIONS_FILE: &str = "exceptions.tsv";
pub const STATS_FILE: &str = "stats.txt";

pub type LexiconKey = (String, Option<String>);

#[derive(Debug, Clone, PartialEq)]
pub struct CompressionStats {
    pub entries: usize,
    pub nodes: usize,
    pub covered: usize,
    pub coverage_pct: f64,
    pub exception_count: usize,
    pub text_bytes: usize,
    pub model_bytes: usize,
    pub exceptions_bytes: usize,
    pub ratio_vs_text: f64,
}

impl CompressionStats {
    /// Flat `key=value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        writeln!(out, "entries={}", self.entries).unwrap();
        writeln!(out, "nodes={}", self.nodes).unwrap();
        writeln!(out, "covered={}", self.covered).unwrap();
        writeln!(out, "coverage_pct={:.4}", self.coverage_pct).unwrap();
        writeln!(out, "exception_count={}", self.exception_count).unwrap();
        writeln!(out, "text_bytes={}", self.text_bytes).unwrap();
        writeln!(out, "model_bytes={}", self.model_bytes).unwrap();
        writeln!(out, "exceptions_bytes={}", self.exceptions_bytes).unwrap();
        writeln!(out, "ratio_vs_text={:.4}", self.ratio_vs_text).unwrap();
        out
    }
}

#[derive(Debug, Clone)]
pub struct CompressedLexicon {
    pub model: Model,
    /// Every stored variant per key, in source order.
    pub exceptions: BTreeMap<LexiconKey, Vec<Vec<Phone>>>,
    pub stats: CompressionStats,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnalignablePolicy {
    #[default]
    Fail,
    /// Leave unalignable entries out of the lexicon being compressed.
    Drop,
}

/// Trains on every aligned entry and stores what the model mispronounces.
/// `unalignable` are source entries without an alignment.
pub fn compress(
    aligned: &[Alignment],
    unalignable: &[LexiconEntry],
    cfg: &FeatureConfig,
    tc: &TrainConfig,
    inventory: &PhoneInventory,
    policy: UnalignablePolicy,
) -> Result<CompressedLexicon> {
    if !unalignable.is_empty() && policy == UnalignablePolicy::Fail {
        let words: Vec<&str> = unalignable.iter().take(10).map(|e| e.word.as_str()).collect();
        return Err(Error::Unalignable(format!(
            "{} entries cannot be aligned (first: {})",
            unalignable.len(),
            words.join(", ")
        )));
    }
    let model = Model::train(aligned, cfg, tc, inventory)?;

    let source: Vec<LexiconEntry> = aligned
        .iter()
        .map(|a| LexiconEntry {
            word: a.word.clone(),
            pos: a.pos.clone(),
            phones: postprocess_output(&a.out),
        })
        .collect();

    let mut groups: BTreeMap<LexiconKey, Vec<usize>> = BTreeMap::new();
    for (i, e) in source.iter().enumerate() {
        groups.entry((e.word.clone(), e.pos.clone())).or_default().push(i);
    }
    let groups: Vec<(LexiconKey, Vec<usize>)> = groups.into_iter().collect();
    let verdicts: Vec<Result<bool>> = groups
        .par_iter()
        .map(|((word, pos), idx)| {
            let variants: BTreeSet<&Vec<Phone>> = idx.iter().map(|&i| &source[i].phones).collect();
            if variants.len() > 1 {
                return Ok(false);
            }
            let t = transcribe(word, pos.as_deref(), &model, UnknownLetterPolicy::Fail)?;
            Ok(&t.phones == variants.into_iter().next().unwrap())
        })
        .collect();

    let mut exceptions: BTreeMap<LexiconKey, Vec<Vec<Phone>>> = BTreeMap::new();
    let mut covered = 0;
    for ((key, idx), ok) in groups.into_iter().zip(verdicts) {
        if ok? {
            covered += idx.len();
        } else {
            let variants = exceptions.entry(key).or_default();
            for i in idx {
                if !variants.contains(&source[i].phones) {
                    variants.push(source[i].phones.clone());
                }
            }
        }
    }

    let model_bytes = model.serialize().len();
    let exceptions_bytes = exceptions_tsv(&exceptions).len();
    let text_bytes = serialize_lexicon(&source).len();
    let entries = source.len();
    let stats = CompressionStats {
        entries,
        nodes: model.size(),
        covered,
        coverage_pct: 100.0 * covered as f64 / entries as f64,
        exception_count: entries - covered,
        text_bytes,
        model_bytes,
        exceptions_bytes,
        ratio_vs_text: text_bytes as f64 / (model_bytes + exceptions_bytes) as f64,
    };
    Ok(CompressedLexicon {
        model,
        exceptions,
        stats,
    })
}

fn exceptions_tsv(exceptions: &BTreeMap<LexiconKey, Vec<Vec<Phone>>>) -> String {
    let entries: Vec<LexiconEntry> = exceptions
        .iter()
        .flat_map(|((w, p), vs)| {
            vs.iter().map(move |phones| LexiconEntry {
                word: w.clone(),
                pos: p.clone(),
                phones: phones.clone(),
            })
        })
        .collect();
    serialize_lexicon(&entries)
}

impl CompressedLexicon {
    /// Exceptions first, otherwise the model's transcription.
    pub fn lookup(&self, word: &str, pos: Option<&str>) -> Result<Vec<Phone>> {
        Ok(self.lookup_all(word, pos)?.swap_remove(0))
    }

    /// All stored variants for an exception key, or the single model output.
    pub fn lookup_all(&self, word: &str, pos: Option<&str>) -> Result<Vec<Vec<Phone>>> {
        let key = (word.to_string(), pos.map(str::to_string));
        if let Some(v) = self.exceptions.get(&key) {
            return Ok(v.clone());
        }
        Ok(vec![transcribe(word, pos, &self.model, UnknownLetterPolicy::Fail)?.phones])
    }

    pub fn exceptions_tsv(&self) -> String {
        exceptions_tsv(&self.exceptions)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, text: String| {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|e| Error::io(path, e))
        };
        write(MODEL_FILE, self.model.serialize())?;
        write(EXCEPTIONS_FILE, self.exceptions_tsv())?;
        write(STATS_FILE, self.stats.to_text())
    }

    /// Reloads a saved directory. Stats are re-read from their file.
    pub fn load(dir: &Path, inventory: &PhoneInventory) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|e| Error::io(path, e))
        };
        let model = Model::deserialize(&read(MODEL_FILE)?)?;
        let mut exceptions: BTreeMap<LexiconKey, Vec<Vec<Phone>>> = BTreeMap::new();
        let text = read(EXCEPTIONS_FILE)?;
        if !text.trim().is_empty() {
            let parsed = parse_lexicon_str(&text, LexiconFormat::Tsv, inventory)?;
            if let Some(r) = parsed.rejects.first() {
                return Err(Error::Syntax {
                    line: r.line_no,
                    reason: format!("exceptions file: {}", r.reason),
                });
            }
            for e in parsed.entries {
                exceptions.entry((e.word, e.pos)).or_default().push(e.phones);
            }
        }
        let stats = parse_stats(&read(STATS_FILE)?)?;
        Ok(CompressedLexicon {
            model,
            exceptions,
            stats,
        })
    }
}

fn parse_stats(text: &str) -> Result<CompressionStats> {
    let kv: BTreeMap<&str, &str> = text.lines().filter_map(|l| l.split_once('=')).collect();
    let get = |k: &str| -> Result<&str> {
        kv.get(k)
            .copied()
            .ok_or_else(|| Error::Syntax { line: 0, reason: format!("stats: missing {k}") })
    };
    let int = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Syntax { line: 0, reason: format!("stats: bad {k}") })
    };
    let float = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Syntax { line: 0, reason: format!("stats: bad {k}") })
    };
    Ok(CompressionStats {
        entries: int("entries")?,
        nodes: int("nodes")?,
        covered: int("covered")?,
        coverage_pct: float("coverage_pct")?,
        exception_count: int("exception_count")?,
        text_bytes: int("text_bytes")?,
        model_bytes: int("model_bytes")?,
        exceptions_bytes: int("exceptions_bytes")?,
        ratio_vs_text: float("ratio_vs_text")?,
    })
}
