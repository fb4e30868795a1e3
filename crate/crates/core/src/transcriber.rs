//! Greedy transcription with live phonemic feedback.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{layout, StressMode, PAD_KEY};
use crate::id3::Sym;
use crate::lexicon::{postprocess_output, Phone, Unit};
use crate::model::Model;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UnknownLetterPolicy {
    #[default]
    Fail,
    /// Emit epsilon for letters the model has no tree for.
    SkipWithEpsilon,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transcription {
    pub phones: Vec<Phone>,
    /// One output per letter, surface order, before post-processing.
    pub raw: Vec<Unit>,
}

pub fn transcribe(word: &str, pos: Option<&str>, model: &Model, policy: UnknownLetterPolicy) -> Result<Transcription> {
    transcribe_traced(word, pos, model, policy, |_, _| {})
}

/// Like [`transcribe`], reporting each prediction vector (as interned ids)
/// with its position before it is classified.
pub fn transcribe_traced(
    word: &str,
    pos: Option<&str>,
    model: &Model,
    policy: UnknownLetterPolicy,
    mut observe: impl FnMut(usize, &[Sym]),
) -> Result<Transcription> {
    let cfg = &model.cfg;
    let syms = model.symbols();
    let chars: Vec<char> = word.chars().collect();
    let letters: Vec<Sym> = chars.iter().map(|c| syms.lookup(&c.to_string())).collect();
    let pad = syms.lookup(PAD_KEY);
    let pos_sym = pos.map(|p| syms.lookup(p));
    let eps = syms.lookup("-");

    let mut raw = vec![Unit::Epsilon; chars.len()];
    let mut history: Vec<Sym> = Vec::with_capacity(chars.len());
    for p in cfg.direction.visit_order(chars.len()) {
        let letter = chars[p];
        let Some(tree) = model.tree(letter) else {
            match policy {
                UnknownLetterPolicy::Fail => {
                    return Err(Error::UnknownGrapheme {
                        word: word.to_string(),
                        letter,
                    })
                }
                UnknownLetterPolicy::SkipWithEpsilon => {
                    history.push(eps);
                    continue;
                }
            }
        };
        let vector = layout(&letters, p, &history, pos_sym.as_ref(), &pad, cfg);
        observe(p, &vector);
        let out = tree.predict(&vector);
        history.push(out);
        let mut unit = Unit::parse(syms.name(out));
        if cfg.stress_mode == StressMode::Separate {
            if let Some(stress_tree) = model.stress_tree(letter) {
                let marker = syms.name(stress_tree.predict(&vector)).chars().next().filter(|c| *c != '-');
                if marker.is_some() {
                    unit = unit.with_stress(marker, |b| model.is_vowel(b));
                }
            }
        }
        raw[p] = unit;
    }
    Ok(Transcription {
        phones: postprocess_output(&raw),
        raw,
    })
}

#[derive(Debug)]
pub struct BatchResult {
    /// Order matches the input.
    pub results: Vec<Result<Transcription>>,
}

impl BatchResult {
    pub fn failures(&self) -> impl Iterator<Item = (usize, &Error)> {
        self.results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
    }

    /// One line per failed item: `index<TAB>error`.
    pub fn error_report(&self) -> String {
        self.failures().map(|(i, e)| format!("{i}\t{e}\n")).collect()
    }
}

pub fn transcribe_batch(
    items: &[(String, Option<String>)],
    model: &Model,
    policy: UnknownLetterPolicy,
) -> BatchResult {
    BatchResult {
        results: items
            .par_iter()
            .map(|(w, p)| transcribe(w, p.as_deref(), model, policy))
            .collect(),
    }
}
