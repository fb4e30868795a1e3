//! Trained letter-to-sound models: one ID3 tree per focus letter, plus an
//! optional stress forest, with a versioned text format.
//!
//! ```text
//! lts-model 1
//! config window=3 feedback=0 direction=ltr pos=false stress=merged
//! alphabet a b c
//! vowels AA AE AH
//! tree a = (@4 default=AE1 (b -> AE1) (t -> (@2 default=AH0 (# -> EY1) (s -> AH0))))
//! tree b = B
//! ```
//!
//! `@k` is the tested attribute index, `#` the padding value and `-`
//! epsilon. Children are sorted by value.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;

use crate::align_em::Alignment;
use crate::error::{Error, Result};
use crate::features::{extract_stress_vectors, extract_training_vectors, FeatureConfig, StressMode, PAD_KEY};
use crate::id3::{train_tree, Dataset, Sym, TrainConfig, TreeNode, UNSEEN};
use crate::lexicon::PhoneInventory;

pub const MODEL_VERSION: &str = "1";
const MAGIC: &str = "lts-model";

/// Interned attribute values and targets. Ids follow string order, so id
/// ties break the same way as symbol ties.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SymbolTable {
    names: Vec<String>,
    index: HashMap<String, Sym>,
}

impl SymbolTable {
    pub fn from_names(names: impl IntoIterator<Item = String>) -> Self {
        let sorted: BTreeSet<String> = names.into_iter().collect();
        let names: Vec<String> = sorted.into_iter().collect();
        let index = names.iter().enumerate().map(|(i, s)| (s.clone(), i as Sym)).collect();
        SymbolTable { names, index }
    }

    pub fn get(&self, name: &str) -> Option<Sym> {
        self.index.get(name).copied()
    }

    /// Id of `name`, or [`UNSEEN`].
    pub fn lookup(&self, name: &str) -> Sym {
        self.get(name).unwrap_or(UNSEEN)
    }

    pub fn name(&self, id: Sym) -> &str {
        &self.names[id as usize]
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Model {
    pub cfg: FeatureConfig,
    pub(crate) symbols: SymbolTable,
    pub(crate) alphabet: Vec<char>,
    pub(crate) vowels: BTreeSet<String>,
    pub(crate) trees: BTreeMap<char, TreeNode>,
    pub(crate) stress_trees: Option<BTreeMap<char, TreeNode>>,
}

impl Model {
    /// Trains one tree per focus letter (and a stress forest when the stress
    /// mode is `separate`).
    pub fn train(
        alignments: &[Alignment],
        cfg: &FeatureConfig,
        tc: &TrainConfig,
        inventory: &PhoneInventory,
    ) -> Result<Model> {
        cfg.validate()?;
        if tc.min_gain < 0.0 || tc.min_gain.is_nan() {
            return Err(Error::Config(format!("min_gain must be >= 0, got {}", tc.min_gain)));
        }
        if alignments.is_empty() {
            return Err(Error::Config("no training alignments".into()));
        }
        let separate = cfg.stress_mode == StressMode::Separate;
        let per_entry: Vec<_> = alignments
            .par_iter()
            .map(|a| {
                let v = extract_training_vectors(a, cfg);
                let s = separate.then(|| extract_stress_vectors(a, cfg));
                (v, s)
            })
            .collect();

        let mut names: BTreeSet<String> = BTreeSet::new();
        names.insert(PAD_KEY.to_string());
        names.insert("-".to_string());
        for (vs, ss) in &per_entry {
            for v in vs.iter().chain(ss.iter().flatten()) {
                names.extend(v.attrs.iter().map(|a| a.key()));
                names.extend(v.target.iter().map(|t| t.key()));
            }
        }
        let symbols = SymbolTable::from_names(names);
        let focus = cfg.focus_index();

        let mut phone_sets: BTreeMap<char, Dataset> = BTreeMap::new();
        let mut stress_sets: BTreeMap<char, Dataset> = BTreeMap::new();
        let mut row = Vec::with_capacity(cfg.arity());
        for (a, (vs, ss)) in alignments.iter().zip(&per_entry) {
            let letters: Vec<char> = a.word.chars().collect();
            let mut add = |sets: &mut BTreeMap<char, Dataset>, v: &crate::features::FeatureVector| {
                row.clear();
                row.extend(v.attrs.iter().map(|x| symbols.lookup(&x.key())));
                let target = symbols.lookup(&v.target.as_ref().expect("training vector").key());
                sets.entry(letters[v.position])
                    .or_insert_with(|| Dataset::new(cfg.arity()))
                    .push(&row, target);
            };
            for v in vs {
                debug_assert_eq!(v.attrs[focus].key(), letters[v.position].to_string());
                add(&mut phone_sets, v);
            }
            for v in ss.iter().flatten() {
                add(&mut stress_sets, v);
            }
        }

        let train_forest = |sets: &BTreeMap<char, Dataset>| -> BTreeMap<char, TreeNode> {
            let trained: Vec<(char, TreeNode)> = sets
                .par_iter()
                .map(|(g, d)| (*g, train_tree(d, tc)))
                .collect();
            trained.into_iter().collect()
        };
        let trees = train_forest(&phone_sets);
        let stress_trees = separate.then(|| train_forest(&stress_sets));
        Ok(Model {
            cfg: *cfg,
            symbols,
            alphabet: trees.keys().copied().collect(),
            vowels: inventory.vowels().map(str::to_string).collect(),
            trees,
            stress_trees,
        })
    }

    pub fn alphabet(&self) -> &[char] {
        &self.alphabet
    }

    pub fn is_vowel(&self, base: &str) -> bool {
        self.vowels.contains(base)
    }

    pub fn tree(&self, letter: char) -> Option<&TreeNode> {
        self.trees.get(&letter)
    }

    pub fn stress_tree(&self, letter: char) -> Option<&TreeNode> {
        self.stress_trees.as_ref().and_then(|t| t.get(&letter))
    }

    pub fn symbols(&self) -> &SymbolTable {
        &self.symbols
    }

    /// Σ tree sizes over both forests.
    pub fn size(&self) -> usize {
        self.trees.values().map(TreeNode::size).sum::<usize>()
            + self
                .stress_trees
                .iter()
                .flat_map(|t| t.values())
                .map(TreeNode::size)
                .sum::<usize>()
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        writeln!(out, "{MAGIC} {MODEL_VERSION}").unwrap();
        writeln!(out, "config {}", self.cfg).unwrap();
        let alphabet: Vec<String> = self.alphabet.iter().map(char::to_string).collect();
        writeln!(out, "alphabet {}", alphabet.join(" ")).unwrap();
        let vowels: Vec<&str> = self.vowels.iter().map(String::as_str).collect();
        writeln!(out, "vowels {}", vowels.join(" ")).unwrap();
        for (g, t) in &self.trees {
            write!(out, "tree {g} = ").unwrap();
            self.write_node(t, &mut out);
            out.push('\n');
        }
        for (g, t) in self.stress_trees.iter().flatten() {
            write!(out, "stress-tree {g} = ").unwrap();
            self.write_node(t, &mut out);
            out.push('\n');
        }
        out
    }

    fn write_node(&self, node: &TreeNode, out: &mut String) {
        match node {
            TreeNode::Leaf(v) => out.push_str(self.symbols.name(*v)),
            TreeNode::Internal {
                attr,
                default,
                children,
            } => {
                write!(out, "(@{attr} default={}", self.symbols.name(*default)).unwrap();
                // ids follow string order, so this is sorted by value
                for (v, child) in children {
                    write!(out, " ({} -> ", self.symbols.name(*v)).unwrap();
                    self.write_node(child, out);
                    out.push(')');
                }
                out.push(')');
            }
        }
    }

    pub fn deserialize(text: &str) -> Result<Model> {
        let corrupt = |m: String| Error::CorruptModel(m);
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| corrupt("empty file".into()))?;
        let mut head = header.split_whitespace();
        if head.next() != Some(MAGIC) {
            return Err(corrupt("missing header".into()));
        }
        let version = head.next().unwrap_or_default();
        if version != MODEL_VERSION {
            return Err(Error::ModelVersion(version.to_string()));
        }

        let mut field = |name: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| corrupt(format!("missing {name} line")))?;
            let rest = line
                .strip_prefix(name)
                .ok_or_else(|| corrupt(format!("expected {name} line")))?;
            Ok(rest.trim().to_string())
        };
        let cfg: FeatureConfig = field("config")?.parse()?;
        let alphabet: Vec<char> = field("alphabet")?
            .split_whitespace()
            .map(|s| {
                let mut c = s.chars();
                match (c.next(), c.next()) {
                    (Some(g), None) => Ok(g),
                    _ => Err(corrupt(format!("bad alphabet symbol '{s}'"))),
                }
            })
            .collect::<Result<_>>()?;
        let vowels: BTreeSet<String> = field("vowels")?.split_whitespace().map(str::to_string).collect();

        let mut raw_trees: Vec<(bool, char, RawNode)> = Vec::new();
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let (kind, rest) = line
                .split_once(' ')
                .ok_or_else(|| corrupt(format!("bad line '{line}'")))?;
            let stress = match kind {
                "tree" => false,
                "stress-tree" => true,
                _ => return Err(corrupt(format!("unknown record '{kind}'"))),
            };
            let (g, body) = rest
                .split_once(" = ")
                .ok_or_else(|| corrupt(format!("bad tree line '{line}'")))?;
            let mut gc = g.chars();
            let (Some(letter), None) = (gc.next(), gc.next()) else {
                return Err(corrupt(format!("bad tree letter '{g}'")));
            };
            let tokens = tokenize(body);
            let mut pos = 0;
            let node = parse_node(&tokens, &mut pos, cfg.arity())?;
            if pos != tokens.len() {
                return Err(corrupt(format!("trailing tokens in tree '{letter}'")));
            }
            raw_trees.push((stress, letter, node));
        }

        let mut names = BTreeSet::new();
        names.insert(PAD_KEY.to_string());
        names.insert("-".to_string());
        for (_, _, n) in &raw_trees {
            n.collect_names(&mut names);
        }
        let symbols = SymbolTable::from_names(names);
        let mut trees = BTreeMap::new();
        let mut stress_trees = BTreeMap::new();
        for (stress, g, n) in raw_trees {
            let node = n.resolve(&symbols);
            let target = if stress { &mut stress_trees } else { &mut trees };
            if target.insert(g, node).is_some() {
                return Err(corrupt(format!("duplicate tree for '{g}'")));
            }
        }
        let listed: BTreeSet<char> = alphabet.iter().copied().collect();
        if listed != trees.keys().copied().collect::<BTreeSet<_>>() {
            return Err(corrupt("alphabet and trees disagree".into()));
        }
        let separate = cfg.stress_mode == StressMode::Separate;
        if separate != !stress_trees.is_empty() {
            return Err(corrupt("stress forest does not match the stress mode".into()));
        }
        Ok(Model {
            cfg,
            symbols,
            alphabet,
            vowels,
            trees,
            stress_trees: separate.then_some(stress_trees),
        })
    }
}

enum RawNode {
    Leaf(String),
    Internal {
        attr: usize,
        default: String,
        children: Vec<(String, RawNode)>,
    },
}

impl RawNode {
    fn collect_names(&self, names: &mut BTreeSet<String>) {
        match self {
            RawNode::Leaf(s) => {
                names.insert(s.clone());
            }
            RawNode::Internal { default, children, .. } => {
                names.insert(default.clone());
                for (v, c) in children {
                    names.insert(v.clone());
                    c.collect_names(names);
                }
            }
        }
    }

    fn resolve(self, symbols: &SymbolTable) -> TreeNode {
        match self {
            RawNode::Leaf(s) => TreeNode::Leaf(symbols.lookup(&s)),
            RawNode::Internal {
                attr,
                default,
                children,
            } => TreeNode::Internal {
                attr,
                default: symbols.lookup(&default),
                children: children
                    .into_iter()
                    .map(|(v, c)| (symbols.lookup(&v), c.resolve(symbols)))
                    .collect(),
            },
        }
    }
}

fn tokenize(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in s.char_indices() {
        if c == '(' || c == ')' || c.is_whitespace() {
            if let Some(b) = start.take() {
                out.push(&s[b..i]);
            }
            if !c.is_whitespace() {
                out.push(&s[i..i + 1]);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(b) = start {
        out.push(&s[b..]);
    }
    out
}

fn parse_node(tokens: &[&str], pos: &mut usize, arity: usize) -> Result<RawNode> {
    let corrupt = |m: &str| Error::CorruptModel(m.to_string());
    let next = |pos: &mut usize| -> Result<&str> {
        let t = tokens.get(*pos).ok_or_else(|| corrupt("unexpected end of tree"))?;
        *pos += 1;
        Ok(t)
    };
    let tok = next(pos)?;
    if tok != "(" {
        if tok == ")" {
            return Err(corrupt("unexpected ')'"));
        }
        return Ok(RawNode::Leaf(tok.to_string()));
    }
    let attr = next(pos)?
        .strip_prefix('@')
        .and_then(|a| a.parse::<usize>().ok())
        .filter(|a| *a < arity)
        .ok_or_else(|| corrupt("bad attribute index"))?;
    let default = next(pos)?
        .strip_prefix("default=")
        .ok_or_else(|| corrupt("missing default"))?
        .to_string();
    let mut children = Vec::new();
    loop {
        match next(pos)? {
            ")" => break,
            "(" => {
                let value = next(pos)?.to_string();
                if next(pos)? != "->" {
                    return Err(corrupt("expected '->'"));
                }
                let child = parse_node(tokens, pos, arity)?;
                if next(pos)? != ")" {
                    return Err(corrupt("expected ')' after child"));
                }
                children.push((value, child));
            }
            _ => return Err(corrupt("expected child or ')'")),
        }
    }
    if children.len() < 2 {
        return Err(corrupt("internal node with fewer than two children"));
    }
    Ok(RawNode::Internal { attr, default, children })
}
