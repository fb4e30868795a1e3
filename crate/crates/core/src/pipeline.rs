//! Glue from a parsed lexicon to aligned training data.

use crate::align_em::{em_train, Alignment, AssociationTable, EmOptions, EmResult};
use crate::align_seeded::{seeded_align, AllowablesTable};
use crate::error::{Error, Result};
use crate::lexicon::{merge_pseudo_phones, split_every_nth, LexiconEntry, MergeOutcome, MergePolicy, MergedEntry, PseudoPhoneSet};

#[derive(Debug, Clone)]
pub enum AlignMethod {
    Em(EmOptions),
    Seeded { allow: AllowablesTable, extra_passes: usize },
}

#[derive(Debug, Clone)]
pub struct AlignedCorpus {
    /// Aligned entries, source order.
    pub alignments: Vec<Alignment>,
    /// Source entries that could not be aligned, source order.
    pub unaligned: Vec<LexiconEntry>,
    pub table: AssociationTable,
    /// Per-iteration trace when aligned by EM.
    pub em: Option<EmResult>,
}

pub fn align_lexicon(
    entries: &[LexiconEntry],
    pseudo: &PseudoPhoneSet,
    policy: MergePolicy,
    method: &AlignMethod,
) -> Result<AlignedCorpus> {
    let mut merged: Vec<MergedEntry> = Vec::with_capacity(entries.len());
    let mut source: Vec<&LexiconEntry> = Vec::with_capacity(entries.len());
    let mut unaligned = Vec::new();
    for e in entries {
        match merge_pseudo_phones(e, pseudo, policy) {
            MergeOutcome::Fits(m) => {
                merged.push(m);
                source.push(e);
            }
            MergeOutcome::Unalignable(_) => unaligned.push(e.clone()),
        }
    }
    if merged.is_empty() {
        return Err(Error::NothingAlignable);
    }
    match method {
        AlignMethod::Em(opts) => {
            let res = em_train(&merged, *opts)?;
            Ok(AlignedCorpus {
                alignments: res.alignments.clone(),
                unaligned,
                table: res.table.clone(),
                em: Some(res),
            })
        }
        AlignMethod::Seeded { allow, extra_passes } => {
            let res = seeded_align(&merged, allow, *extra_passes)?;
            let mut alignments = Vec::with_capacity(merged.len());
            for (a, e) in res.alignments.into_iter().zip(source) {
                match a {
                    Some(a) => alignments.push(a),
                    None => unaligned.push(e.clone()),
                }
            }
            if alignments.is_empty() {
                return Err(Error::NothingAlignable);
            }
            Ok(AlignedCorpus {
                alignments,
                unaligned,
                table: res.table,
                em: None,
            })
        }
    }
}

/// Splits aligned entries into (train, test) by index: every `n`-th entry
/// starting at `offset` is held out.
pub fn split_aligned(alignments: &[Alignment], n: usize, offset: usize) -> Result<(Vec<Alignment>, Vec<Alignment>)> {
    let spec = split_every_nth(alignments.len(), n, offset)?;
    let pick = |idx: &[usize]| idx.iter().map(|&i| alignments[i].clone()).collect();
    Ok((pick(&spec.train), pick(&spec.test)))
}

/// Parses `every:N:OFFSET` (or `every:N`, offset 0).
pub fn parse_split(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Config(format!("bad split '{s}', expected every:N[:OFFSET]"));
    let mut parts = s.split(':');
    if parts.next() != Some("every") {
        return Err(bad());
    }
    let n = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
    let offset = match parts.next() {
        Some(o) => o.parse().map_err(|_| bad())?,
        None => 0,
    };
    if parts.next().is_some() {
        return Err(bad());
    }
    Ok((n, offset))
}
