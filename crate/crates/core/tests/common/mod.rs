//! Brute-force oracles and randomized checks shared by the integration tests
//! and the acceptance runner. Each check returns a short summary on success.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use lts_core::align_em::{em_train, init_counts, viterbi_align, Alignment, AssociationTable, EmOptions, PairCountMap, DEFAULT_FLOOR};
use lts_core::align_seeded::AllowablesTable;
use lts_core::compressx::{compress, UnalignablePolicy};
use lts_core::evalx::evaluate;
use lts_core::features::{extract_training_vectors, Direction, FeatureConfig, StressMode, PAD_KEY};
use lts_core::id3::{info_gain, train_tree, Dataset, Sym, TrainConfig, TreeNode};
use lts_core::lexicon::{
    parse_lexicon_str, postprocess_output, LexiconFormat, MergePolicy, MergedEntry, Phone, PhoneInventory, PseudoPhoneSet, Unit,
};
use lts_core::model::Model;
use lts_core::pipeline::{align_lexicon, AlignMethod};
use lts_core::transcriber::{transcribe_traced, UnknownLetterPolicy};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const LETTERS: &[char] = &['a', 'b', 'c', 'd', 'e'];
const UNITS: &[&str] = &["A", "B", "C", "D", "E1", "K_S"];

pub fn random_entry(rng: &mut ChaCha8Rng, max_len: usize) -> MergedEntry {
    let n = rng.gen_range(1..=max_len);
    let m = rng.gen_range(0..=n);
    MergedEntry {
        word: (0..n).map(|_| *LETTERS.choose(rng).unwrap()).collect(),
        pos: None,
        units: (0..m).map(|_| Unit::parse(UNITS.choose(rng).unwrap())).collect(),
    }
}

/// Every monotone placement of `units` into `letters` slots, as
/// per-letter unit indices.
pub fn placements(letters: usize, units: usize) -> Vec<Vec<Option<usize>>> {
    fn go(i: usize, j: usize, letters: usize, units: usize, cur: &mut Vec<Option<usize>>, out: &mut Vec<Vec<Option<usize>>>) {
        if i == letters {
            if j == units {
                out.push(cur.clone());
            }
            return;
        }
        if j < units {
            cur.push(Some(j));
            go(i + 1, j + 1, letters, units, cur, out);
            cur.pop();
        }
        if letters - i > units - j {
            cur.push(None);
            go(i + 1, j, letters, units, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, 0, letters, units, &mut Vec::new(), &mut out);
    out
}

fn realize(entry: &MergedEntry, p: &[Option<usize>]) -> Vec<Unit> {
    p.iter()
        .map(|s| s.map_or(Unit::Epsilon, |j| entry.units[j].clone()))
        .collect()
}

/// Argmax over all placements; among ties (up to float noise) the first divergence must
/// prefer a match (epsilons as far right as possible).
pub fn oracle_viterbi(entry: &MergedEntry, table: &AssociationTable) -> (Vec<Unit>, f64) {
    let letters: Vec<char> = entry.word.chars().collect();
    let scored: Vec<(Vec<Option<usize>>, f64)> = placements(letters.len(), entry.units.len())
        .into_iter()
        .map(|p| {
            let out = realize(entry, &p);
            let score = letters
                .iter()
                .zip(&out)
                .rev()
                .fold(0.0, |acc, (g, u)| table.log_prob(*g, u) + acc);
            (p, score)
        })
        .collect();
    let max = scored.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let tol = 1e-9 * max.abs().max(1.0);
    let mut best: Option<&(Vec<Option<usize>>, f64)> = None;
    for cand in scored.iter().filter(|s| s.1 >= max - tol) {
        if best.is_none_or(|b| prefers_match(&cand.0, &b.0)) {
            best = Some(cand);
        }
    }
    let (p, s) = best.unwrap();
    (realize(entry, p), *s)
}

fn prefers_match(a: &[Option<usize>], b: &[Option<usize>]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match (x.is_some(), y.is_some()) {
            (true, false) => return true,
            (false, true) => return false,
            _ => {}
        }
    }
    false
}

/// Pair probabilities from counting every placement of every entry.
pub fn oracle_init(entries: &[MergedEntry]) -> BTreeMap<(char, Unit), f64> {
    let mut counts: BTreeMap<(char, Unit), f64> = BTreeMap::new();
    for e in entries {
        let letters: Vec<char> = e.word.chars().collect();
        for p in placements(letters.len(), e.units.len()) {
            for (g, u) in letters.iter().zip(realize(e, &p)) {
                *counts.entry((*g, u)).or_default() += 1.0;
            }
        }
    }
    let mut totals: HashMap<char, f64> = HashMap::new();
    for ((g, _), c) in &counts {
        *totals.entry(*g).or_default() += c;
    }
    counts.into_iter().map(|((g, u), c)| ((g, u), c / totals[&g])).collect()
}

fn random_table(rng: &mut ChaCha8Rng) -> AssociationTable {
    // coarse weights so exact ties are common
    let mut counts = PairCountMap::new();
    for &g in LETTERS {
        for u in UNITS.iter().map(|s| Unit::parse(s)).chain([Unit::Epsilon]) {
            if rng.gen_bool(0.8) {
                counts.insert((g, u), rng.gen_range(1..4) as f64);
            }
        }
    }
    AssociationTable::from_counts(&counts, DEFAULT_FLOOR)
}

/// 1a: Viterbi and initial counts against exhaustive enumeration.
pub fn check_alignment_oracle(pairs: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut ambiguous = 0;
    for k in 0..pairs {
        let entry = random_entry(&mut rng, 6);
        let table = random_table(&mut rng);
        let (a, score) = viterbi_align(&entry, &table).map_err(|e| e.to_string())?;
        let (want, want_score) = oracle_viterbi(&entry, &table);
        if a.out != want || (score - want_score).abs() > 1e-9 * want_score.abs().max(1.0) {
            return Err(format!(
                "pair {k} '{}': viterbi {:?} ({score}) vs oracle {:?} ({want_score})",
                entry.word, a.out, want
            ));
        }
        if placements(entry.word.len(), entry.units.len()).len() > 1 {
            ambiguous += 1;
        }
        let corpus: Vec<MergedEntry> = (0..rng.gen_range(1..4)).map(|_| random_entry(&mut rng, 6)).chain([entry]).collect();
        let init = init_counts(&corpus).map_err(|e| e.to_string())?;
        let want = oracle_init(&corpus);
        for ((g, u), p) in &want {
            if (init.prob(*g, u) - p).abs() > 1e-9 {
                return Err(format!("pair {k}: init prob({g},{u}) = {} vs oracle {p}", init.prob(*g, u)));
            }
        }
        let stored = init.iter().filter(|(_, _, p)| *p > 0.0).count();
        if stored != want.len() {
            return Err(format!("pair {k}: init stores {stored} pairs, oracle {}", want.len()));
        }
    }
    Ok(format!("{pairs} pairs, {ambiguous} with more than one placement"))
}

/// 1b: the hard-EM objective never decreases.
pub fn check_em_monotone(corpora: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut iters = 0;
    for k in 0..corpora {
        let corpus: Vec<MergedEntry> = (0..rng.gen_range(2..25)).map(|_| random_entry(&mut rng, 7)).collect();
        let r = em_train(&corpus, EmOptions::default()).map_err(|e| e.to_string())?;
        iters += r.trace.len();
        for w in r.trace.windows(2) {
            if w[1].objective < w[0].objective - 1e-9 * w[0].objective.abs().max(1.0) {
                return Err(format!("corpus {k}: objective {} -> {}", w[0].objective, w[1].objective));
            }
        }
    }
    Ok(format!("{corpora} corpora, {iters} iterations"))
}

pub fn oracle_entropy(targets: &[Sym]) -> f64 {
    let mut counts: HashMap<Sym, usize> = HashMap::new();
    for t in targets {
        *counts.entry(*t).or_default() += 1;
    }
    let n = targets.len() as f64;
    counts.values().map(|&c| {
        let p = c as f64 / n;
        -p * p.log2()
    }).sum()
}

pub fn oracle_gain(rows: &[(Vec<Sym>, Sym)], attr: usize) -> f64 {
    let all: Vec<Sym> = rows.iter().map(|r| r.1).collect();
    let mut parts: HashMap<Sym, Vec<Sym>> = HashMap::new();
    for (a, t) in rows {
        parts.entry(a[attr]).or_default().push(*t);
    }
    let n = rows.len() as f64;
    oracle_entropy(&all) - parts.values().map(|p| p.len() as f64 / n * oracle_entropy(p)).sum::<f64>()
}

fn dataset(rows: &[(Vec<Sym>, Sym)]) -> Dataset {
    let mut d = Dataset::new(rows[0].0.len());
    for (a, t) in rows {
        d.push(a, *t);
    }
    d
}

/// 1c: gain against the textbook formula on every subset of a 12-vector
/// universe, then 100% training accuracy on random consistent data.
pub fn check_id3_oracle(seed: u64) -> Check {
    let mut universe = Vec::new();
    for a in 0..2 {
        for b in 0..3 {
            for t in 0..2 {
                universe.push((vec![a, b], t as Sym));
            }
        }
    }
    let mut subsets = 0;
    for mask in 1u32..(1 << universe.len()) {
        let rows: Vec<(Vec<Sym>, Sym)> = universe
            .iter()
            .enumerate()
            .filter(|(i, _)| mask >> i & 1 == 1)
            .map(|(_, r)| r.clone())
            .collect();
        let d = dataset(&rows);
        for attr in 0..2 {
            let (got, want) = (info_gain(&d, attr), oracle_gain(&rows, attr));
            if (got - want).abs() > 1e-9 || got < 0.0 {
                return Err(format!("subset {mask:#x} attr {attr}: gain {got} vs oracle {want}"));
            }
        }
        subsets += 1;
    }
    let mut rng = rng(seed);
    for k in 0..200 {
        let arity = rng.gen_range(1..6);
        let mut seen: HashMap<Vec<Sym>, Sym> = HashMap::new();
        for _ in 0..rng.gen_range(1..80) {
            let a: Vec<Sym> = (0..arity).map(|_| rng.gen_range(0..4)).collect();
            let t = rng.gen_range(0..5);
            seen.entry(a).or_insert(t);
        }
        let mut rows: Vec<(Vec<Sym>, Sym)> = seen.into_iter().collect();
        rows.sort();
        let tree = train_tree(&dataset(&rows), &TrainConfig::default());
        if let Some((a, t)) = rows.iter().find(|(a, t)| tree.predict(a) != *t) {
            return Err(format!("dataset {k}: {a:?} predicted {} expected {t}", tree.predict(a)));
        }
    }
    Ok(format!("{subsets} exhaustive subsets, 200 consistent datasets at 100%"))
}

fn count_nodes(t: &TreeNode) -> (usize, usize, usize) {
    let mut stack = vec![t];
    let (mut internal, mut leaves, mut edges) = (0, 0, 0);
    while let Some(n) = stack.pop() {
        match n {
            TreeNode::Leaf(_) => leaves += 1,
            TreeNode::Internal { children, .. } => {
                internal += 1;
                edges += children.len();
                stack.extend(children.values());
            }
        }
    }
    (internal, leaves, edges)
}

fn boxed_size(t: &TreeNode) -> usize {
    match t {
        TreeNode::Leaf(_) => 1,
        TreeNode::Internal { children, .. } => 1 + children.values().map(|c| 1 + boxed_size(c)).sum::<usize>(),
    }
}

/// 1d: size formula equals internal + leaves + edges on random trees.
pub fn check_tree_size(trees: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut largest = 0;
    for k in 0..trees {
        let arity = rng.gen_range(1..5);
        let rows: Vec<(Vec<Sym>, Sym)> = (0..rng.gen_range(1..60))
            .map(|_| ((0..arity).map(|_| rng.gen_range(0..5)).collect(), rng.gen_range(0..4)))
            .collect();
        let depth = if rng.gen_bool(0.3) { Some(rng.gen_range(0..4)) } else { None };
        let tree = train_tree(&dataset(&rows), &TrainConfig { min_gain: 0.0, max_depth: depth });
        let (i, l, e) = count_nodes(&tree);
        if tree.size() != i + l + e || tree.size() != boxed_size(&tree) {
            return Err(format!("tree {k}: size {} vs {i}+{l}+{e}", tree.size()));
        }
        largest = largest.max(tree.size());
    }
    Ok(format!("{trees} trees, largest size {largest}"))
}

pub fn toy_inventory() -> PhoneInventory {
    PhoneInventory::new([("A", true), ("E", true), ("B", false), ("C", false), ("D", false), ("K", false), ("S", false)])
}

const TOY_UNITS: &[&str] = &["A", "A1", "E", "E1", "B", "C", "D", "K_S", "-"];

pub fn random_alignment(rng: &mut ChaCha8Rng, pos: bool) -> Alignment {
    let n = rng.gen_range(1..7);
    let word: String = (0..n).map(|_| *LETTERS.choose(rng).unwrap()).collect();
    Alignment {
        word,
        pos: (pos && rng.gen_bool(0.5)).then(|| ["n", "v"].choose(rng).unwrap().to_string()),
        out: (0..n).map(|_| Unit::parse(TOY_UNITS.choose(rng).unwrap())).collect(),
    }
}

/// 1e: model + exceptions reproduce every entry, and the accounting adds up.
pub fn check_compression(lexicons: usize, seed: u64) -> Check {
    let mut rng = rng(seed);
    let mut exceptions = 0;
    for k in 0..lexicons {
        let lex: Vec<Alignment> = (0..rng.gen_range(5..60)).map(|_| random_alignment(&mut rng, true)).collect();
        let cfg = FeatureConfig {
            window: rng.gen_range(1..3),
            feedback: rng.gen_range(0..3),
            use_pos: rng.gen_bool(0.5),
            ..FeatureConfig::default()
        };
        let tc = TrainConfig {
            min_gain: 0.0,
            max_depth: if rng.gen_bool(0.5) { Some(rng.gen_range(0..3)) } else { None },
        };
        let c = compress(&lex, &[], &cfg, &tc, &toy_inventory(), UnalignablePolicy::Fail).map_err(|e| e.to_string())?;
        for a in &lex {
            let src = postprocess_output(&a.out);
            let all = c.lookup_all(&a.word, a.pos.as_deref()).map_err(|e| e.to_string())?;
            if !all.contains(&src) {
                return Err(format!("lexicon {k}: '{}' lost {:?}", a.word, src));
            }
            if all.len() == 1 && c.lookup(&a.word, a.pos.as_deref()).map_err(|e| e.to_string())? != src {
                return Err(format!("lexicon {k}: lookup('{}') differs", a.word));
            }
        }
        let s = &c.stats;
        let total = s.coverage_pct + 100.0 * s.exception_count as f64 / s.entries as f64;
        if (total - 100.0).abs() > 1e-9 || s.entries != lex.len() {
            return Err(format!("lexicon {k}: coverage {} + exceptions {} of {}", s.coverage_pct, s.exception_count, s.entries));
        }
        exceptions += s.exception_count;
    }
    Ok(format!("{lexicons} lexicons lossless, {exceptions} exceptions in total"))
}

pub const TOY_LEXICON: &str = "\
box\tn\tB AA1 K S
boxes\tn\tB AA1 K S AH0 Z
cat\tn\tK AE1 T
cater\tv\tK EY1 T ER0
exact\tadj\tIH0 G Z AE1 K T
fax\tn\tF AE1 K S
lake\tn\tL EY1 K
make\tv\tM EY1 K
maker\tn\tM EY1 K ER0
read\tv\tR IY1 D
read\tv\tR EH1 D
record\tn\tR EH1 K ER0 D
record\tv\tR IH0 K AO1 R D
tax\tn\tT AE1 K S
taxes\tn\tT AE1 K S AH0 Z
";

/// Every output of one toy pipeline run, concatenated.
pub fn pipeline_outputs(stress: StressMode, direction: Direction) -> Result<String, String> {
    let inv = PhoneInventory::cmu();
    let entries = parse_lexicon_str(TOY_LEXICON, LexiconFormat::Tsv, &inv).map_err(|e| e.to_string())?.entries;
    let mut out = String::new();
    for method in [
        AlignMethod::Em(EmOptions::default()),
        AlignMethod::Seeded { allow: AllowablesTable::english_starter(), extra_passes: 1 },
    ] {
        let corpus = align_lexicon(&entries, &PseudoPhoneSet::default(), MergePolicy::Always, &method).map_err(|e| e.to_string())?;
        out.push_str(&lts_core::align_em::alignments_to_tsv(&corpus.alignments));
        out.push_str(&corpus.table.to_tsv());
        let cfg = FeatureConfig { feedback: 2, direction, use_pos: true, stress_mode: stress, ..FeatureConfig::default() };
        let model = Model::train(&corpus.alignments, &cfg, &TrainConfig::default(), &inv).map_err(|e| e.to_string())?;
        out.push_str(&model.serialize());
        out.push_str(&evaluate(&model, &corpus.alignments).map_err(|e| e.to_string())?.to_tsv());
        let c = compress(&corpus.alignments, &corpus.unaligned, &cfg, &TrainConfig::default(), &inv, UnalignablePolicy::Drop)
            .map_err(|e| e.to_string())?;
        out.push_str(&c.exceptions_tsv());
        out.push_str(&c.stats.to_text());
    }
    Ok(out)
}

/// 1f: identical outputs across repeated runs and thread counts.
pub fn check_determinism() -> Check {
    let mut bytes = 0;
    for (stress, dir) in [(StressMode::Merged, Direction::LeftToRight), (StressMode::Separate, Direction::RightToLeft)] {
        let mut runs = Vec::new();
        for threads in [1, 1, 3, 8] {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
            runs.push(pool.install(|| pipeline_outputs(stress, dir))?);
        }
        if runs.windows(2).any(|w| w[0] != w[1]) {
            return Err(format!("outputs differ across runs ({stress}, {dir})"));
        }
        bytes += runs[0].len();
    }
    Ok(format!("4 runs x 2 configs byte-identical ({bytes} bytes)"))
}

/// 1g: prediction-time feedback is exactly the previous outputs, and the
/// letter window does not depend on direction.
pub fn check_feedback_and_direction(seed: u64) -> Check {
    // rigged: every position of the training word has its own output
    let tags: Vec<String> = (0..8).map(|i| format!("P{i}")).collect();
    let inv = PhoneInventory::new(tags.iter().map(|t| (t.as_str(), false)));
    let rigged = Alignment {
        word: "abcdefgh".into(),
        pos: None,
        out: tags.iter().map(|t| Unit::Phone(Phone::parse(t))).collect(),
    };
    let mut checked = 0;
    let mut rng = rng(seed);
    let random: Vec<Alignment> = (0..40).map(|_| random_alignment(&mut rng, false)).collect();
    for dir in [Direction::LeftToRight, Direction::RightToLeft] {
        for k in 0..=4 {
            let cfg = FeatureConfig { window: 2, feedback: k, direction: dir, ..FeatureConfig::default() };
            let cases: [(&[Alignment], &PhoneInventory); 2] = [(std::slice::from_ref(&rigged), &inv), (&random, &toy_inventory())];
            for (corpus, inv) in cases {
                let model = Model::train(corpus, &cfg, &TrainConfig::default(), inv).map_err(|e| e.to_string())?;
                for a in corpus {
                    checked += feedback_matches(&model, &a.word, &cfg)?;
                }
                if corpus.len() == 1 {
                    let t = lts_core::transcriber::transcribe("abcdefgh", None, &model, UnknownLetterPolicy::Fail).map_err(|e| e.to_string())?;
                    if t.raw != rigged.out {
                        return Err(format!("rigged model replay {:?} ({dir}, K={k})", t.raw));
                    }
                }
            }
        }
    }
    for a in &random {
        let windows = |dir| {
            let cfg = FeatureConfig { feedback: 2, direction: dir, ..FeatureConfig::default() };
            let mut v: Vec<(usize, Vec<String>)> = extract_training_vectors(a, &cfg)
                .into_iter()
                .map(|fv| (fv.position, fv.attrs[..2 * cfg.window + 1].iter().map(|x| x.key()).collect()))
                .collect();
            v.sort();
            v
        };
        if windows(Direction::LeftToRight) != windows(Direction::RightToLeft) {
            return Err(format!("letter windows of '{}' depend on direction", a.word));
        }
    }
    Ok(format!("{checked} prediction vectors checked, {} words direction-invariant", random.len()))
}

fn feedback_matches(model: &Model, word: &str, cfg: &FeatureConfig) -> Result<usize, String> {
    let syms = model.symbols();
    let mut seen: Vec<(usize, Vec<String>)> = Vec::new();
    let t = transcribe_traced(word, None, model, UnknownLetterPolicy::Fail, |p, v| {
        let start = 2 * cfg.window + 1;
        seen.push((p, v[start..start + cfg.feedback].iter().map(|s| syms.name(*s).to_string()).collect()));
    })
    .map_err(|e| e.to_string())?;
    let order = cfg.direction.visit_order(word.chars().count());
    for (step, (p, fb)) in seen.iter().enumerate() {
        if *p != order[step] {
            return Err(format!("'{word}': visit {step} at {p}, expected {}", order[step]));
        }
        let have = step.min(cfg.feedback);
        let mut want: Vec<String> = vec![PAD_KEY.to_string(); cfg.feedback - have];
        want.extend(order[step - have..step].iter().map(|&q| t.raw[q].to_string()));
        if *fb != want {
            return Err(format!("'{word}' step {step}: feedback {fb:?}, expected {want:?}"));
        }
    }
    Ok(seen.len())
}
