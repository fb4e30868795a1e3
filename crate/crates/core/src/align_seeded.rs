//! Hand-seeded alignment: a human lists, per letter, the units it may map to
//! (regardless of context). All alignments licensed by that table are
//! counted, a P(unit | letter) table is estimated from the counts, and each
//! entry keeps its most probable licensed alignment.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::align_em::{Alignment, AssociationTable, PairCountMap, DEFAULT_FLOOR};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::lexicon::{join_display, MergedEntry, Unit};

/// Guard for explicit enumeration; the counting DP is not capped.
pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

const ENGLISH_STARTER: &str = include_str!("../../../data/allowables_en.txt");

/// A stress-insensitive unit key.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AllowedSym {
    Epsilon,
    Phone(String),
    Pseudo(String, String),
}

impl AllowedSym {
    pub fn of(unit: &Unit) -> AllowedSym {
        match unit {
            Unit::Epsilon => AllowedSym::Epsilon,
            Unit::Phone(p) => AllowedSym::Phone(p.base.clone()),
            Unit::Pseudo(a, b) => AllowedSym::Pseudo(a.base.clone(), b.base.clone()),
        }
    }

    fn parse(token: &str) -> AllowedSym {
        if token == "_" || token == "-" {
            return AllowedSym::Epsilon;
        }
        AllowedSym::of(&Unit::parse(token))
    }
}

/// Per-letter sets of feasible units.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct AllowablesTable {
    table: BTreeMap<char, BTreeSet<AllowedSym>>,
}

impl AllowablesTable {
    /// Parses `g: SYM SYM _ ...` lines; `_` is epsilon, `#` starts a comment.
    /// Repeated letters accumulate.
    pub fn parse(text: &str) -> Result<Self> {
        let mut table: BTreeMap<char, BTreeSet<AllowedSym>> = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(k) => &raw[..k],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::Syntax {
                line: i + 1,
                reason: reason.into(),
            };
            let (head, syms) = line.split_once(':').ok_or_else(|| bad("expected 'g: SYM ...'"))?;
            let mut chars = head.trim().chars();
            let (Some(letter), None) = (chars.next(), chars.next()) else {
                return Err(bad("the key must be a single letter"));
            };
            let set = table.entry(letter.to_lowercase().next().unwrap_or(letter)).or_default();
            set.extend(syms.split_whitespace().map(AllowedSym::parse));
        }
        Ok(AllowablesTable { table })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// The bundled starter table for English (CMU phone set).
    pub fn english_starter() -> Self {
        Self::parse(ENGLISH_STARTER).expect("bundled allowables table is well-formed")
    }

    pub fn insert(&mut self, letter: char, unit: &Unit) {
        self.table.entry(letter).or_default().insert(AllowedSym::of(unit));
    }

    pub fn remove(&mut self, letter: char, sym: &AllowedSym) -> bool {
        self.table.get_mut(&letter).is_some_and(|s| s.remove(sym))
    }

    pub fn allows(&self, letter: char, unit: &Unit) -> bool {
        self.table
            .get(&letter)
            .is_some_and(|s| s.contains(&AllowedSym::of(unit)))
    }

    /// Letters of `alphabet` with no (or an empty) entry.
    pub fn missing_letters(&self, alphabet: impl IntoIterator<Item = char>) -> Vec<char> {
        alphabet
            .into_iter()
            .filter(|g| self.table.get(g).is_none_or(|s| s.is_empty()))
            .collect()
    }
}

fn lattice_of(entry: &MergedEntry) -> Option<(Lattice, Vec<char>)> {
    let letters = entry.letters();
    Lattice::new(letters.len(), entry.units.len()).map(|l| (l, letters))
}

/// All licensed alignments of an entry. Empty means unalignable.
pub fn enumerate_alignments(entry: &MergedEntry, allow: &AllowablesTable, cap: u64) -> Result<Vec<Alignment>> {
    let Some((lat, letters)) = lattice_of(entry) else {
        return Ok(Vec::new());
    };
    let m = |i: usize, j: usize| allow.allows(letters[i], &entry.units[j]);
    let e = |i: usize| allow.allows(letters[i], &Unit::Epsilon);
    if lat.count_paths(m, e) > cap as f64 {
        return Err(Error::TooManyAlignments {
            word: entry.word.clone(),
            cap,
        });
    }
    Ok(lat
        .enumerate(m, e)
        .iter()
        .map(|p| Alignment::from_path(entry, p))
        .collect())
}

/// Pair counts over every licensed alignment of every entry.
pub fn licensed_pair_counts(entries: &[MergedEntry], allow: &AllowablesTable) -> (PairCountMap, usize) {
    let per_entry: Vec<Option<crate::lattice::PairCounts>> = entries
        .par_iter()
        .map(|entry| {
            let (lat, letters) = lattice_of(entry)?;
            let c = lat.pair_counts(
                |i, j| allow.allows(letters[i], &entry.units[j]),
                |i| allow.allows(letters[i], &Unit::Epsilon),
            );
            (c.paths > 0.0).then_some(c)
        })
        .collect();
    let mut counts = PairCountMap::new();
    let mut alignable = 0;
    for (entry, c) in entries.iter().zip(per_entry) {
        let Some(c) = c else { continue };
        alignable += 1;
        for (i, g) in entry.word.chars().enumerate() {
            for (j, u) in entry.units.iter().enumerate() {
                let n = c.matches[i * entry.units.len() + j];
                if n > 0.0 {
                    *counts.entry((g, u.clone())).or_default() += n;
                }
            }
            if c.epsilons[i] > 0.0 {
                *counts.entry((g, Unit::Epsilon)).or_default() += c.epsilons[i];
            }
        }
    }
    (counts, alignable)
}

/// P(unit | letter) estimated from all licensed alignments.
pub fn estimate_pair_probs(entries: &[MergedEntry], allow: &AllowablesTable) -> Result<AssociationTable> {
    let (counts, alignable) = licensed_pair_counts(entries, allow);
    if alignable == 0 {
        return Err(Error::NothingAlignable);
    }
    Ok(AssociationTable::from_counts(&counts, DEFAULT_FLOOR))
}

/// Most probable licensed alignment; ties go to the rightmost epsilons.
pub fn best_seeded_alignment(
    entry: &MergedEntry,
    allow: &AllowablesTable,
    probs: &AssociationTable,
) -> Result<(Alignment, f64)> {
    let unalignable = || Error::Unalignable(entry.word.clone());
    let (lat, letters) = lattice_of(entry).ok_or_else(unalignable)?;
    let lp = |g: char, u: &Unit| {
        if allow.allows(g, u) {
            probs.log_prob(g, u)
        } else {
            f64::NEG_INFINITY
        }
    };
    let (path, score) = lat
        .viterbi(
            |i, j| lp(letters[i], &entry.units[j]),
            |i| lp(letters[i], &Unit::Epsilon),
        )
        .ok_or_else(unalignable)?;
    Ok((Alignment::from_path(entry, &path), score))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnalignableItem {
    pub index: usize,
    pub word: String,
    pub units: Vec<Unit>,
    /// First letter index no licensed partial alignment gets past.
    pub stuck_at: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UnalignableReport {
    pub items: Vec<UnalignableItem>,
    pub total: usize,
}

impl UnalignableReport {
    pub fn per_thousand(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            1000.0 * self.items.len() as f64 / self.total as f64
        }
    }

    /// `word<TAB>phones<TAB>stuck_at_letter_index`
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for it in &self.items {
            out.push_str(&format!("{}\t{}\t{}\n", it.word, join_display(&it.units), it.stuck_at));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "{} of {} entries unalignable ({:.2} per thousand)",
            self.items.len(),
            self.total,
            self.per_thousand()
        )
    }
}

pub fn report_unalignable(entries: &[MergedEntry], allow: &AllowablesTable) -> UnalignableReport {
    let items: Vec<Option<UnalignableItem>> = entries
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let item = |stuck_at| UnalignableItem {
                index,
                word: entry.word.clone(),
                units: entry.units.clone(),
                stuck_at,
            };
            let Some((lat, letters)) = lattice_of(entry) else {
                return Some(item(0));
            };
            let m = |i: usize, j: usize| allow.allows(letters[i], &entry.units[j]);
            let e = |i: usize| allow.allows(letters[i], &Unit::Epsilon);
            if lat.count_paths(m, e) > 0.0 {
                None
            } else {
                Some(item(lat.frontier(m, e)))
            }
        })
        .collect();
    UnalignableReport {
        items: items.into_iter().flatten().collect(),
        total: entries.len(),
    }
}

#[derive(Debug, Clone)]
pub struct SeededResult {
    pub table: AssociationTable,
    /// One slot per input entry; `None` for unalignable entries.
    pub alignments: Vec<Option<Alignment>>,
}

/// Count, estimate, select. `extra_passes` re-estimates the table from the
/// selected alignments and selects again that many times.
pub fn seeded_align(entries: &[MergedEntry], allow: &AllowablesTable, extra_passes: usize) -> Result<SeededResult> {
    let mut table = estimate_pair_probs(entries, allow)?;
    let mut alignments = select_all(entries, allow, &table);
    for _ in 0..extra_passes {
        let mut counts = PairCountMap::new();
        for a in alignments.iter().flatten() {
            for (g, u) in a.word.chars().zip(&a.out) {
                *counts.entry((g, u.clone())).or_default() += 1.0;
            }
        }
        table = AssociationTable::from_counts(&counts, DEFAULT_FLOOR);
        alignments = select_all(entries, allow, &table);
    }
    Ok(SeededResult { table, alignments })
}

fn select_all(entries: &[MergedEntry], allow: &AllowablesTable, table: &AssociationTable) -> Vec<Option<Alignment>> {
    entries
        .par_iter()
        .map(|e| best_seeded_alignment(e, allow, table).ok().map(|(a, _)| a))
        .collect()
}
