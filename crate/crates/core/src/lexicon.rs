//! Pronunciation lexicons: parsing, phone inventories, pseudo-phone merging
//! and train/test splitting.
//!
//! Stress is fused into the phone symbol (`EH*`, `AH1`), so a phone with its
//! stress marker is a single categorical value everywhere downstream.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Characters that may not appear in words or POS tags. `-` and `#` are the
/// epsilon and padding tokens of the text formats, parentheses delimit the
/// model file.
pub const RESERVED_CHARS: [char; 4] = ['-', '#', '(', ')'];

const CMU_PHONES: &str = include_str!("../../../data/cmudict/cmudict.phones");

/// A phone with an optional stress marker.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phone {
    pub base: String,
    pub stress: Option<char>,
}

impl Phone {
    pub fn new(base: impl Into<String>, stress: Option<char>) -> Self {
        Phone {
            base: base.into(),
            stress,
        }
    }

    /// Splits a rendered symbol such as `AH1` or `EH*` into base and marker.
    pub fn parse(s: &str) -> Phone {
        let mut chars = s.chars();
        match chars.next_back() {
            Some(c) if is_stress_marker(c) && !chars.as_str().is_empty() => Phone {
                base: chars.as_str().to_string(),
                stress: Some(c),
            },
            _ => Phone {
                base: s.to_string(),
                stress: None,
            },
        }
    }

    pub fn unstressed(&self) -> Phone {
        Phone {
            base: self.base.clone(),
            stress: None,
        }
    }
}

impl fmt::Display for Phone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.base)?;
        if let Some(c) = self.stress {
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

pub fn is_stress_marker(c: char) -> bool {
    c == '*' || c.is_ascii_digit()
}

/// One slot of an aligned output: a phone, a fused pair of phones, or epsilon.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Unit {
    Epsilon,
    Phone(Phone),
    Pseudo(Phone, Phone),
}

impl Unit {
    /// Parses the display form: `-` is epsilon, `A_B` a pseudo-phone.
    pub fn parse(s: &str) -> Unit {
        if s == "-" {
            return Unit::Epsilon;
        }
        match s.split_once('_') {
            Some((a, b)) if !a.is_empty() && !b.is_empty() => {
                Unit::Pseudo(Phone::parse(a), Phone::parse(b))
            }
            _ => Unit::Phone(Phone::parse(s)),
        }
    }

    pub fn is_epsilon(&self) -> bool {
        matches!(self, Unit::Epsilon)
    }

    pub fn without_stress(&self) -> Unit {
        match self {
            Unit::Epsilon => Unit::Epsilon,
            Unit::Phone(p) => Unit::Phone(p.unstressed()),
            Unit::Pseudo(a, b) => Unit::Pseudo(a.unstressed(), b.unstressed()),
        }
    }

    /// The stress marker carried by this slot, if any part has one.
    pub fn stress(&self) -> Option<char> {
        match self {
            Unit::Epsilon => None,
            Unit::Phone(p) => p.stress,
            Unit::Pseudo(a, b) => a.stress.or(b.stress),
        }
    }

    /// Re-attaches a marker to the vowel part(s) of an unstressed unit.
    pub fn with_stress(&self, marker: Option<char>, is_vowel: impl Fn(&str) -> bool) -> Unit {
        let mark = |p: &Phone| {
            if is_vowel(&p.base) {
                Phone::new(p.base.clone(), marker)
            } else {
                p.clone()
            }
        };
        match self {
            Unit::Epsilon => Unit::Epsilon,
            Unit::Phone(p) => Unit::Phone(mark(p)),
            Unit::Pseudo(a, b) => {
                // only one part of a pseudo-phone is stressed
                if is_vowel(&a.base) {
                    Unit::Pseudo(mark(a), b.clone())
                } else {
                    Unit::Pseudo(a.clone(), mark(b))
                }
            }
        }
    }

    pub fn phones(&self) -> impl Iterator<Item = &Phone> {
        let (a, b) = match self {
            Unit::Epsilon => (None, None),
            Unit::Phone(p) => (Some(p), None),
            Unit::Pseudo(p, q) => (Some(p), Some(q)),
        };
        a.into_iter().chain(b)
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unit::Epsilon => f.write_str("-"),
            Unit::Phone(p) => write!(f, "{p}"),
            Unit::Pseudo(a, b) => write!(f, "{a}_{b}"),
        }
    }
}

/// Strips epsilons and splits pseudo-phones back into their parts.
pub fn postprocess_output(units: &[Unit]) -> Vec<Phone> {
    units.iter().flat_map(|u| u.phones().cloned()).collect()
}

pub fn render_phones(phones: &[Phone]) -> String {
    join_display(phones)
}

pub fn join_display<T: fmt::Display>(items: &[T]) -> String {
    let mut out = String::new();
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&item.to_string());
    }
    out
}

/// The declared phone set. Each phone is flagged vowel or not; stress markers
/// are only accepted on vowels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    phones: BTreeMap<String, bool>,
}

impl PhoneInventory {
    pub fn new<I, S>(phones: I) -> Self
    where
        I: IntoIterator<Item = (S, bool)>,
        S: Into<String>,
    {
        PhoneInventory {
            phones: phones.into_iter().map(|(p, v)| (p.into(), v)).collect(),
        }
    }

    /// The 39-phone CMU set.
    pub fn cmu() -> Self {
        Self::parse(CMU_PHONES).expect("bundled CMU phone list is well-formed")
    }

    /// Parses `SYMBOL<ws>class` lines; class `vowel` marks a vowel, anything
    /// else a consonant. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut phones = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw, '#').trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let sym = fields.next().unwrap_or_default();
            let class = fields.next().ok_or_else(|| Error::Syntax {
                line: i + 1,
                reason: format!("phone '{sym}' has no class"),
            })?;
            phones.insert(sym.to_string(), class.eq_ignore_ascii_case("vowel"));
        }
        if phones.is_empty() {
            return Err(Error::Config("empty phone inventory".into()));
        }
        Ok(PhoneInventory { phones })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn contains(&self, base: &str) -> bool {
        self.phones.contains_key(base)
    }

    pub fn is_vowel(&self, base: &str) -> bool {
        self.phones.get(base).copied().unwrap_or(false)
    }

    pub fn vowels(&self) -> impl Iterator<Item = &str> {
        self.phones
            .iter()
            .filter(|(_, v)| **v)
            .map(|(p, _)| p.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, bool)> {
        self.phones.iter().map(|(p, v)| (p.as_str(), *v))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LexiconEntry {
    pub word: String,
    pub pos: Option<String>,
    pub phones: Vec<Phone>,
}

impl LexiconEntry {
    pub fn letters(&self) -> Vec<char> {
        self.word.chars().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexiconFormat {
    /// `WORD  PH PH ...`, `;;;` comment lines, `(n)` variant suffixes,
    /// digit stress markers.
    Cmu,
    /// `word<TAB>pos<TAB>ph ph*`, `*` marks primary stress.
    Oald,
    /// `word<TAB>pos<TAB>ph ph ...` (pos may be empty), or the shorthand
    /// `word [pos] :: ph ph ...`. Digit or `*` markers.
    Tsv,
}

impl LexiconFormat {
    fn accepts_marker(self, c: char) -> bool {
        match self {
            LexiconFormat::Cmu => c.is_ascii_digit(),
            LexiconFormat::Oald => c == '*',
            LexiconFormat::Tsv => is_stress_marker(c),
        }
    }
}

impl std::str::FromStr for LexiconFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cmu" => Ok(LexiconFormat::Cmu),
            "oald" | "oald-like" => Ok(LexiconFormat::Oald),
            "tsv" | "generic-tsv" | "generic" => Ok(LexiconFormat::Tsv),
            other => Err(Error::Config(format!("unknown lexicon format '{other}'"))),
        }
    }
}

/// A line the parser could not turn into an entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub line_no: usize,
    pub reason: String,
    pub raw: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedLexicon {
    pub entries: Vec<LexiconEntry>,
    pub rejects: Vec<Reject>,
}

impl ParsedLexicon {
    /// Rejects report: `line_no<TAB>reason<TAB>raw_line`.
    pub fn rejects_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rejects {
            out.push_str(&format!("{}\t{}\t{}\n", r.line_no, r.reason, r.raw));
        }
        out
    }
}

pub fn parse_lexicon(
    path: &Path,
    format: LexiconFormat,
    inventory: &PhoneInventory,
) -> Result<ParsedLexicon> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_lexicon_str(&text, format, inventory)
}

pub fn parse_lexicon_str(
    text: &str,
    format: LexiconFormat,
    inventory: &PhoneInventory,
) -> Result<ParsedLexicon> {
    let mut parsed = ParsedLexicon::default();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let fields = match format {
            LexiconFormat::Cmu => split_cmu_line(raw),
            LexiconFormat::Oald | LexiconFormat::Tsv => split_tsv_line(raw),
        };
        let fields = match fields {
            Ok(Some(f)) => f,
            Ok(None) => continue,
            Err(reason) => {
                parsed.rejects.push(Reject {
                    line_no,
                    reason,
                    raw: raw.to_string(),
                });
                continue;
            }
        };
        match build_entry(fields, format, inventory) {
            Ok(entry) => parsed.entries.push(entry),
            Err(reason) => parsed.rejects.push(Reject {
                line_no,
                reason,
                raw: raw.to_string(),
            }),
        }
    }
    if parsed.entries.is_empty() {
        return Err(Error::EmptyLexicon);
    }
    Ok(parsed)
}

struct RawFields<'a> {
    word: &'a str,
    pos: Option<&'a str>,
    phones: Vec<&'a str>,
}

fn strip_comment(line: &str, marker: char) -> &str {
    match line.find(marker) {
        Some(i) => &line[..i],
        None => line,
    }
}

fn split_cmu_line(raw: &str) -> std::result::Result<Option<RawFields<'_>>, String> {
    let line = raw.trim();
    if line.is_empty() || line.starts_with(";;;") {
        return Ok(None);
    }
    // inline comments are introduced by " #"
    let line = match line.find(" #") {
        Some(i) => line[..i].trim_end(),
        None => line,
    };
    let mut tokens = line.split_whitespace();
    let mut word = tokens.next().unwrap_or_default();
    if let Some(open) = word.rfind('(') {
        let tail = &word[open + 1..];
        if open > 0 && tail.ends_with(')') && tail[..tail.len() - 1].bytes().all(|b| b.is_ascii_digit())
        {
            word = &word[..open];
        }
    }
    Ok(Some(RawFields {
        word,
        pos: None,
        phones: tokens.collect(),
    }))
}

fn split_tsv_line(raw: &str) -> std::result::Result<Option<RawFields<'_>>, String> {
    let line = raw.trim_end_matches(['\r', '\n']);
    if line.trim().is_empty() || line.trim_start().starts_with('#') {
        return Ok(None);
    }
    if line.contains('\t') {
        let cols: Vec<&str> = line.split('\t').collect();
        let (word, pos, phones) = match cols.as_slice() {
            [w, p] => (*w, "", *p),
            [w, pos, p] => (*w, *pos, *p),
            _ => return Err(format!("expected 2 or 3 tab-separated fields, got {}", cols.len())),
        };
        let pos = pos.trim();
        return Ok(Some(RawFields {
            word: word.trim(),
            pos: (!pos.is_empty()).then_some(pos),
            phones: phones.split_whitespace().collect(),
        }));
    }
    if let Some((head, phones)) = line.split_once("::") {
        let mut head = head.split_whitespace();
        let word = head.next().ok_or("missing word")?;
        let pos = head.next();
        if head.next().is_some() {
            return Err("too many fields before '::'".into());
        }
        return Ok(Some(RawFields {
            word,
            pos,
            phones: phones.split_whitespace().collect(),
        }));
    }
    Err("malformed line".into())
}

fn check_symbol(kind: &str, s: &str) -> std::result::Result<(), String> {
    if s.is_empty() {
        return Err(format!("empty {kind}"));
    }
    if let Some(c) = s
        .chars()
        .find(|c| c.is_whitespace() || RESERVED_CHARS.contains(c))
    {
        return Err(format!("reserved character '{c}' in {kind}"));
    }
    Ok(())
}

fn build_entry(
    fields: RawFields<'_>,
    format: LexiconFormat,
    inventory: &PhoneInventory,
) -> std::result::Result<LexiconEntry, String> {
    let word = fields.word.to_lowercase();
    check_symbol("word", &word)?;
    if let Some(pos) = fields.pos {
        check_symbol("pos", pos)?;
    }
    if fields.phones.is_empty() {
        return Err("missing phones".into());
    }
    let mut phones = Vec::with_capacity(fields.phones.len());
    for sym in fields.phones {
        let mut phone = Phone::parse(sym);
        if let Some(mark) = phone.stress {
            if !format.accepts_marker(mark) {
                // a digit in the OALD style is part of the symbol, not stress
                phone = Phone::new(sym, None);
            }
        }
        if !inventory.contains(&phone.base) {
            return Err(format!("unknown phone {sym}"));
        }
        if phone.stress.is_some() && !inventory.is_vowel(&phone.base) {
            return Err(format!("stress marker on non-vowel {sym}"));
        }
        phones.push(phone);
    }
    Ok(LexiconEntry {
        word,
        pos: fields.pos.map(str::to_string),
        phones,
    })
}

/// Renders entries in the generic TSV format.
pub fn serialize_lexicon(entries: &[LexiconEntry]) -> String {
    let mut out = String::new();
    for e in entries {
        out.push_str(&e.word);
        out.push('\t');
        out.push_str(e.pos.as_deref().unwrap_or(""));
        out.push('\t');
        out.push_str(&render_phones(&e.phones));
        out.push('\n');
    }
    out
}

/// A fused phone pair, named `FIRST_SECOND` after the phone bases.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PseudoPhone {
    pub first: String,
    pub second: String,
}

impl PseudoPhone {
    pub fn new(first: impl Into<String>, second: impl Into<String>) -> Self {
        PseudoPhone {
            first: first.into(),
            second: second.into(),
        }
    }

    pub fn name(&self) -> String {
        format!("{}_{}", self.first, self.second)
    }

    pub fn matches(&self, a: &Phone, b: &Phone) -> bool {
        a.base == self.first && b.base == self.second
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PseudoPhoneSet {
    merges: Vec<PseudoPhone>,
}

impl Default for PseudoPhoneSet {
    fn default() -> Self {
        PseudoPhoneSet {
            merges: vec![
                PseudoPhone::new("K", "S"),
                PseudoPhone::new("G", "Z"),
                PseudoPhone::new("W", "A"),
            ],
        }
    }
}

impl PseudoPhoneSet {
    pub fn new(merges: Vec<PseudoPhone>) -> Self {
        PseudoPhoneSet { merges }
    }

    pub fn empty() -> Self {
        PseudoPhoneSet { merges: Vec::new() }
    }

    /// Parses `NAME = PART1 PART2` lines.
    pub fn parse(text: &str) -> Result<Self> {
        let mut merges = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = strip_comment(raw, '#').trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: &str| Error::Syntax {
                line: i + 1,
                reason: reason.to_string(),
            };
            let (name, parts) = line.split_once('=').ok_or_else(|| bad("expected NAME = A B"))?;
            let parts: Vec<&str> = parts.split_whitespace().collect();
            let [a, b] = parts.as_slice() else {
                return Err(bad("a pseudo-phone has exactly two parts"));
            };
            let pseudo = PseudoPhone::new(*a, *b);
            if pseudo.name() != name.trim() {
                return Err(bad(&format!(
                    "name '{}' does not match parts '{}'",
                    name.trim(),
                    pseudo.name()
                )));
            }
            merges.push(pseudo);
        }
        Ok(PseudoPhoneSet { merges })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PseudoPhone> {
        self.merges.iter()
    }

    fn mergeable(&self, a: &Phone, b: &Phone) -> bool {
        self.merges.iter().any(|m| m.matches(a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MergePolicy {
    /// Fuse every listed pair, leftmost first, so a letter like `x` maps to
    /// the same pseudo-phone whatever the word length.
    #[default]
    Always,
    /// Fuse leftmost pairs only while the phones outnumber the letters.
    WhenNeeded,
}

/// An entry whose output units are ready for one-to-one alignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergedEntry {
    pub word: String,
    pub pos: Option<String>,
    pub units: Vec<Unit>,
}

impl MergedEntry {
    pub fn letters(&self) -> Vec<char> {
        self.word.chars().collect()
    }

    pub fn fits(&self) -> bool {
        self.units.len() <= self.word.chars().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MergeOutcome {
    Fits(MergedEntry),
    /// Still more units than letters after every applicable merge.
    Unalignable(MergedEntry),
}

impl MergeOutcome {
    pub fn fits(self) -> Option<MergedEntry> {
        match self {
            MergeOutcome::Fits(e) => Some(e),
            MergeOutcome::Unalignable(_) => None,
        }
    }

    pub fn entry(&self) -> &MergedEntry {
        match self {
            MergeOutcome::Fits(e) | MergeOutcome::Unalignable(e) => e,
        }
    }
}

pub fn merge_pseudo_phones(
    entry: &LexiconEntry,
    merges: &PseudoPhoneSet,
    policy: MergePolicy,
) -> MergeOutcome {
    let letters = entry.word.chars().count();
    let units = match policy {
        MergePolicy::Always => {
            let mut units = Vec::with_capacity(entry.phones.len());
            let mut i = 0;
            while i < entry.phones.len() {
                let a = &entry.phones[i];
                match entry.phones.get(i + 1) {
                    Some(b) if merges.mergeable(a, b) => {
                        units.push(Unit::Pseudo(a.clone(), b.clone()));
                        i += 2;
                    }
                    _ => {
                        units.push(Unit::Phone(a.clone()));
                        i += 1;
                    }
                }
            }
            units
        }
        MergePolicy::WhenNeeded => {
            let mut units: Vec<Unit> = entry.phones.iter().cloned().map(Unit::Phone).collect();
            while units.len() > letters {
                let hit = units.windows(2).position(|w| match (&w[0], &w[1]) {
                    (Unit::Phone(a), Unit::Phone(b)) => merges.mergeable(a, b),
                    _ => false,
                });
                let Some(i) = hit else { break };
                let (Unit::Phone(a), Unit::Phone(b)) = (units[i].clone(), units[i + 1].clone())
                else {
                    unreachable!()
                };
                units.splice(i..i + 2, [Unit::Pseudo(a, b)]);
            }
            units
        }
    };
    let merged = MergedEntry {
        word: entry.word.clone(),
        pos: entry.pos.clone(),
        units,
    };
    if merged.units.len() <= letters {
        MergeOutcome::Fits(merged)
    } else {
        MergeOutcome::Unalignable(merged)
    }
}

/// Train/test partition by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub every: usize,
    pub offset: usize,
}

/// Puts every `n`-th entry (indices ≡ offset mod n) in the test set.
pub fn split_every_nth(len: usize, n: usize, offset: usize) -> Result<SplitSpec> {
    if n < 2 {
        return Err(Error::Config(format!("split period must be >= 2, got {n}")));
    }
    if offset >= n {
        return Err(Error::Config(format!(
            "split offset {offset} must be below the period {n}"
        )));
    }
    let (test, train) = (0..len).partition(|i| i % n == offset);
    Ok(SplitSpec {
        train,
        test,
        every: n,
        offset,
    })
}
