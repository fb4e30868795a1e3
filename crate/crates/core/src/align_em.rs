//! Fully automatic "epsilon scattering" alignment.
//!
//! Letter/unit association probabilities are initialised by counting every
//! possible epsilon placement of every entry, then refined by hard EM:
//! align each entry on its best path, re-estimate the table from the chosen
//! paths, repeat.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, Path};
use crate::lexicon::{join_display, MergedEntry, Unit};

/// Probability assigned to pairs the table has never seen.
pub const DEFAULT_FLOOR: f64 = 1e-12;

/// `prob(G, P)`: probability that letter `G` is paired with unit `P`
/// (epsilon included). Rows with any mass sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AssociationTable {
    letters: Vec<char>,
    units: Vec<Unit>,
    /// Dense row-major `letters × units`; 0.0 marks an unstored pair.
    probs: Vec<f64>,
    floor: f64,
}

/// Raw pair counts keyed by (letter, unit).
pub type PairCountMap = BTreeMap<(char, Unit), f64>;

impl AssociationTable {
    /// Row-normalises a count map.
    pub fn from_counts(counts: &PairCountMap, floor: f64) -> Self {
        let letters: Vec<char> = counts.keys().map(|(g, _)| *g).collect::<BTreeSet<_>>().into_iter().collect();
        let units: Vec<Unit> = counts
            .keys()
            .map(|(_, u)| u.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let vocab = Vocab { letters, units };
        let mut dense = vec![0.0; vocab.letters.len() * vocab.units.len()];
        for ((g, u), c) in counts {
            let gi = vocab.letter(*g).unwrap();
            let ui = vocab.unit(u).unwrap();
            dense[gi * vocab.units.len() + ui] += c;
        }
        Self::from_dense(vocab, dense, floor)
    }

    fn from_dense(vocab: Vocab, mut dense: Vec<f64>, floor: f64) -> Self {
        let width = vocab.units.len();
        if width > 0 {
            for row in dense.chunks_mut(width) {
                let total: f64 = row.iter().sum();
                if total > 0.0 {
                    for p in row.iter_mut().filter(|p| **p > 0.0) {
                        *p = (*p / total).max(floor);
                    }
                }
            }
        }
        AssociationTable {
            letters: vocab.letters,
            units: vocab.units,
            probs: dense,
            floor,
        }
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    /// Stored probability, or the floor for unseen pairs.
    pub fn prob(&self, letter: char, unit: &Unit) -> f64 {
        match (self.letter_index(letter), self.unit_index(unit)) {
            (Some(g), Some(u)) => self.prob_idx(g, u),
            _ => self.floor,
        }
    }

    pub fn log_prob(&self, letter: char, unit: &Unit) -> f64 {
        self.prob(letter, unit).ln()
    }

    fn prob_idx(&self, g: usize, u: usize) -> f64 {
        let p = self.probs[g * self.units.len() + u];
        if p > 0.0 {
            p
        } else {
            self.floor
        }
    }

    fn letter_index(&self, letter: char) -> Option<usize> {
        self.letters.binary_search(&letter).ok()
    }

    fn unit_index(&self, unit: &Unit) -> Option<usize> {
        self.units.binary_search(unit).ok()
    }

    /// Stored (letter, unit, prob) triples in key order.
    pub fn iter(&self) -> impl Iterator<Item = (char, &Unit, f64)> + '_ {
        let width = self.units.len();
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(move |(k, p)| (self.letters[k / width], &self.units[k % width], *p))
    }

    /// Sum of stored probabilities in a letter's row.
    pub fn row_sum(&self, letter: char) -> f64 {
        self.iter().filter(|(g, _, _)| *g == letter).map(|(_, _, p)| p).sum()
    }

    pub fn letters(&self) -> &[char] {
        &self.letters
    }

    /// Largest absolute difference over stored pairs of either table.
    pub fn max_abs_diff(&self, other: &AssociationTable) -> f64 {
        let stored = |t: &AssociationTable| -> BTreeMap<(char, Unit), f64> {
            t.iter().map(|(g, u, p)| ((g, u.clone()), p)).collect()
        };
        let (a, b) = (stored(self), stored(other));
        a.keys()
            .chain(b.keys())
            .map(|k| (a.get(k).unwrap_or(&0.0) - b.get(k).unwrap_or(&0.0)).abs())
            .fold(0.0, f64::max)
    }

    /// `G<TAB>P<TAB>prob` dump.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (g, u, p) in self.iter() {
            out.push_str(&format!("{g}\t{u}\t{p}\n"));
        }
        out
    }
}

/// Letters and units of a corpus, sorted, for dense indexing.
#[derive(Debug, Clone)]
struct Vocab {
    letters: Vec<char>,
    units: Vec<Unit>,
}

impl Vocab {
    fn from_entries(entries: &[MergedEntry]) -> Self {
        let mut letters = BTreeSet::new();
        let mut units = BTreeSet::new();
        units.insert(Unit::Epsilon);
        for e in entries {
            letters.extend(e.word.chars());
            units.extend(e.units.iter().cloned());
        }
        Vocab {
            letters: letters.into_iter().collect(),
            units: units.into_iter().collect(),
        }
    }

    fn letter(&self, g: char) -> Option<usize> {
        self.letters.binary_search(&g).ok()
    }

    fn unit(&self, u: &Unit) -> Option<usize> {
        self.units.binary_search(u).ok()
    }

    fn encode(&self, e: &MergedEntry) -> Encoded {
        Encoded {
            letters: e.word.chars().map(|g| self.letter(g).unwrap()).collect(),
            units: e.units.iter().map(|u| self.unit(u).unwrap()).collect(),
        }
    }
}

struct Encoded {
    letters: Vec<usize>,
    units: Vec<usize>,
}

/// A one-to-one pairing of each letter with a unit or epsilon.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alignment {
    pub word: String,
    pub pos: Option<String>,
    pub out: Vec<Unit>,
}

impl Alignment {
    pub(crate) fn from_path(entry: &MergedEntry, path: &Path) -> Self {
        Alignment {
            word: entry.word.clone(),
            pos: entry.pos.clone(),
            out: path
                .iter()
                .map(|slot| match slot {
                    Some(j) => entry.units[*j].clone(),
                    None => Unit::Epsilon,
                })
                .collect(),
        }
    }

    pub fn letters(&self) -> Vec<char> {
        self.word.chars().collect()
    }

    /// Checks the one-to-one invariants against the merged entry.
    pub fn is_valid_for(&self, entry: &MergedEntry) -> bool {
        self.word == entry.word
            && self.out.len() == self.word.chars().count()
            && self.out.iter().filter(|u| !u.is_epsilon()).eq(entry.units.iter())
    }

    /// Sum of log-probabilities of the slots under a table.
    pub fn score(&self, table: &AssociationTable) -> f64 {
        // summed right to left, the same order the lattice accumulates in
        let letters: Vec<char> = self.word.chars().collect();
        letters
            .iter()
            .copied()
            .zip(&self.out)
            .rev()
            .fold(0.0, |acc, (g, u)| table.log_prob(g, u) + acc)
    }

    /// `word<TAB>pos<TAB>sym sym ...`
    pub fn to_tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{}",
            self.word,
            self.pos.as_deref().unwrap_or(""),
            join_display(&self.out)
        )
    }
}

pub fn alignments_to_tsv(alignments: &[Alignment]) -> String {
    let mut out = String::new();
    for a in alignments {
        out.push_str(&a.to_tsv_line());
        out.push('\n');
    }
    out
}

/// Parses an alignment dump.
pub fn parse_alignments(text: &str) -> Result<Vec<Alignment>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [word, pos, syms] = cols.as_slice() else {
            return Err(Error::Syntax {
                line: i + 1,
                reason: "expected word<TAB>pos<TAB>symbols".into(),
            });
        };
        let a = Alignment {
            word: word.to_string(),
            pos: (!pos.is_empty()).then(|| pos.to_string()),
            out: syms.split_whitespace().map(Unit::parse).collect(),
        };
        if a.out.len() != a.word.chars().count() {
            return Err(Error::Syntax {
                line: i + 1,
                reason: format!("{} symbols for {} letters", a.out.len(), a.word.chars().count()),
            });
        }
        out.push(a);
    }
    Ok(out)
}

fn lattice_for(entry: &MergedEntry) -> Result<Lattice> {
    let letters = entry.word.chars().count();
    Lattice::new(letters, entry.units.len()).ok_or_else(|| Error::TooManyPhones {
        word: entry.word.clone(),
        phones: entry.units.len(),
        letters,
    })
}

/// Pair incidences summed over every monotone epsilon placement.
pub fn placement_counts(entries: &[MergedEntry]) -> Result<PairCountMap> {
    let per_entry: Vec<_> = entries
        .par_iter()
        .map(|e| {
            let lat = lattice_for(e)?;
            Ok(lat.pair_counts(|_, _| true, |_| true))
        })
        .collect::<Result<_>>()?;
    let mut counts = PairCountMap::new();
    for (e, c) in entries.iter().zip(per_entry) {
        for (i, g) in e.word.chars().enumerate() {
            for (j, u) in e.units.iter().enumerate() {
                let n = c.matches[i * e.units.len() + j];
                if n > 0.0 {
                    *counts.entry((g, u.clone())).or_default() += n;
                }
            }
            if c.epsilons[i] > 0.0 {
                *counts.entry((g, Unit::Epsilon)).or_default() += c.epsilons[i];
            }
        }
    }
    Ok(counts)
}

/// Initial table: normalised placement counts.
pub fn init_counts(entries: &[MergedEntry]) -> Result<AssociationTable> {
    Ok(AssociationTable::from_counts(&placement_counts(entries)?, DEFAULT_FLOOR))
}

/// Best alignment of one entry and its log-probability. Ties go to the
/// alignment with epsilons furthest right.
pub fn viterbi_align(entry: &MergedEntry, table: &AssociationTable) -> Result<(Alignment, f64)> {
    let lat = lattice_for(entry)?;
    let letters = entry.letters();
    let unit_idx: Vec<Option<usize>> = entry.units.iter().map(|u| table.unit_index(u)).collect();
    let letter_idx: Vec<Option<usize>> = letters.iter().map(|g| table.letter_index(*g)).collect();
    let eps = table.unit_index(&Unit::Epsilon);
    let lp = |g: Option<usize>, u: Option<usize>| match (g, u) {
        (Some(g), Some(u)) => table.prob_idx(g, u).ln(),
        _ => table.floor.ln(),
    };
    let (path, score) = lat
        .viterbi(|i, j| lp(letter_idx[i], unit_idx[j]), |i| lp(letter_idx[i], eps))
        .ok_or_else(|| Error::Invariant(format!("no path for '{}'", entry.word)))?;
    Ok((Alignment::from_path(entry, &path), score))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EmOptions {
    pub max_iters: usize,
    /// Stop once no probability moves by this much.
    pub tol: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        EmOptions {
            max_iters: 10,
            tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmIteration {
    /// Σ log-probability of the chosen paths under the table they were
    /// chosen with.
    pub objective: f64,
    pub max_delta: f64,
    pub alignments_changed: bool,
}

#[derive(Debug, Clone)]
pub struct EmResult {
    pub table: AssociationTable,
    pub alignments: Vec<Alignment>,
    pub scores: Vec<f64>,
    pub trace: Vec<EmIteration>,
}

pub fn em_train(entries: &[MergedEntry], opts: EmOptions) -> Result<EmResult> {
    if entries.is_empty() {
        return Err(Error::NothingAlignable);
    }
    if opts.max_iters == 0 {
        return Err(Error::Config("max_iters must be at least 1".into()));
    }
    let vocab = Vocab::from_entries(entries);
    let encoded: Vec<Encoded> = entries.iter().map(|e| vocab.encode(e)).collect();
    let lattices: Vec<Lattice> = entries.iter().map(lattice_for).collect::<Result<_>>()?;
    let width = vocab.units.len();
    let eps = vocab.unit(&Unit::Epsilon).unwrap();

    let mut table = init_counts(entries)?;
    // re-home the initial table on the corpus vocabulary
    let mut dense = vec![0.0; vocab.letters.len() * width];
    for (g, u, p) in table.iter() {
        dense[vocab.letter(g).unwrap() * width + vocab.unit(u).unwrap()] = p;
    }
    table = AssociationTable {
        letters: vocab.letters.clone(),
        units: vocab.units.clone(),
        probs: dense,
        floor: DEFAULT_FLOOR,
    };

    let mut trace = Vec::new();
    let mut prev_paths: Option<Vec<Path>> = None;
    let mut scores = Vec::new();
    for _ in 0..opts.max_iters {
        let aligned: Vec<(Path, f64)> = encoded
            .par_iter()
            .zip(&lattices)
            .map(|(enc, lat)| {
                let lp = |g: usize, u: usize| table.prob_idx(g, u).ln();
                lat.viterbi(
                    |i, j| lp(enc.letters[i], enc.units[j]),
                    |i| lp(enc.letters[i], eps),
                )
                .expect("a lattice with units <= letters always has a path")
            })
            .collect();
        let objective: f64 = aligned.iter().map(|(_, s)| s).sum();

        let mut counts = vec![0.0; vocab.letters.len() * width];
        for (enc, (path, _)) in encoded.iter().zip(&aligned) {
            for (i, slot) in path.iter().enumerate() {
                let u = slot.map_or(eps, |j| enc.units[j]);
                counts[enc.letters[i] * width + u] += 1.0;
            }
        }
        let next = AssociationTable::from_dense(vocab.clone(), counts, DEFAULT_FLOOR);
        let max_delta = table
            .probs
            .iter()
            .zip(&next.probs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let (paths, s): (Vec<Path>, Vec<f64>) = aligned.into_iter().unzip();
        let changed = prev_paths.as_ref() != Some(&paths);
        trace.push(EmIteration {
            objective,
            max_delta,
            alignments_changed: changed,
        });
        table = next;
        prev_paths = Some(paths);
        scores = s;
        if max_delta < opts.tol || !changed {
            break;
        }
    }

    let paths = prev_paths.expect("at least one iteration ran");
    let alignments = entries
        .iter()
        .zip(&paths)
        .map(|(e, p)| Alignment::from_path(e, p))
        .collect();
    Ok(EmResult {
        table,
        alignments,
        scores,
        trace,
    })
}
