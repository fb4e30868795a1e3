//! Acceptance runner: one PASS/FAIL line per criterion.
//!
//! Criteria that run without external data (1a-1g, 5 on toy data, 6) decide
//! the exit status. The CMU criteria (2-4, and 5 on CMU) are reported but do
//! not fail the run; their measured values are printed alongside.

mod common;

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use common::*;
use lts_core::align_em::{Alignment, EmOptions};
use lts_core::align_seeded::AllowablesTable;
use lts_core::evalx::{accuracy_size_sweep, evaluate, Metrics, Preset, SweepRow};
use lts_core::features::{Direction, FeatureConfig, StressMode};
use lts_core::id3::TrainConfig;
use lts_core::lexicon::{parse_lexicon, postprocess_output, LexiconEntry, LexiconFormat, MergePolicy, PhoneInventory, PseudoPhoneSet};
use lts_core::model::Model;
use lts_core::pipeline::{align_lexicon, split_aligned, AlignMethod};

struct Report {
    gating_failures: usize,
    passed: usize,
    failed: usize,
}

impl Report {
    fn line(&mut self, id: &str, gating: bool, started: Instant, result: Check) {
        let secs = started.elapsed().as_secs_f64();
        match result {
            Ok(detail) => {
                self.passed += 1;
                println!("PASS {id:<4} {detail} [{secs:.1}s]");
            }
            Err(detail) => {
                self.failed += 1;
                if gating {
                    self.gating_failures += 1;
                }
                let tag = if gating { "" } else { " (reported, non-gating)" };
                println!("FAIL {id:<4} {detail}{tag} [{secs:.1}s]");
            }
        }
    }
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn pct(m: &Metrics) -> String {
    format!("word+stress {:.2}% word {:.2}% phone {:.2}%", m.word_acc_stress, m.word_acc_nostress, m.phone_acc)
}

fn train_eval(train: &[Alignment], test: &[Alignment], cfg: &FeatureConfig) -> Result<Metrics, String> {
    let model = Model::train(train, cfg, &TrainConfig::default(), &PhoneInventory::cmu()).map_err(|e| e.to_string())?;
    evaluate(&model, test).map_err(|e| e.to_string())
}

struct Cmu {
    seeded: Vec<Alignment>,
    em: Vec<Alignment>,
}

fn load_cmu() -> Result<Cmu, String> {
    let data = data_dir();
    let inv = PhoneInventory::cmu();
    let entries = parse_lexicon(&data.join("cmudict/cmudict.dict"), LexiconFormat::Cmu, &inv).map_err(|e| e.to_string())?.entries;
    let pseudo = PseudoPhoneSet::load(&data.join("pseudo_cmu.txt")).map_err(|e| e.to_string())?;
    let allow = AllowablesTable::load(&data.join("allowables_en.txt")).map_err(|e| e.to_string())?;
    let seeded = align_lexicon(&entries, &pseudo, MergePolicy::Always, &AlignMethod::Seeded { allow, extra_passes: 0 })
        .map_err(|e| e.to_string())?
        .alignments;
    // epsilon scattering on exactly the entries the seeded method aligned
    let same: Vec<LexiconEntry> = seeded
        .iter()
        .map(|a| LexiconEntry { word: a.word.clone(), pos: a.pos.clone(), phones: postprocess_output(&a.out) })
        .collect();
    let em = align_lexicon(&same, &pseudo, MergePolicy::Always, &AlignMethod::Em(EmOptions::default()))
        .map_err(|e| e.to_string())?
        .alignments;
    if em.len() != seeded.len() {
        return Err(format!("EM aligned {} of {} entries", em.len(), seeded.len()));
    }
    Ok(Cmu { seeded, em })
}

fn sweep_check(rows: &[SweepRow], need_full: f64) -> Check {
    let mut detail = Vec::new();
    let presets: BTreeSet<&str> = rows.iter().map(|r| r.preset.name()).collect();
    for p in presets {
        let curve: Vec<&SweepRow> = rows.iter().filter(|r| r.preset.name() == p).collect();
        for w in curve.windows(2) {
            if w[1].word_stress_acc < w[0].word_stress_acc || w[1].size < w[0].size {
                return Err(format!(
                    "{p}: depth {:?} -> {:?} accuracy {:.2} -> {:.2}, size {} -> {}",
                    w[0].depth, w[1].depth, w[0].word_stress_acc, w[1].word_stress_acc, w[0].size, w[1].size
                ));
            }
        }
        let last = curve.last().unwrap();
        if last.word_stress_acc < need_full {
            return Err(format!("{p}: full depth reaches {:.2}% < {need_full}%", last.word_stress_acc));
        }
        detail.push(format!("{p} {:.2}%@{}", last.word_stress_acc, last.size));
    }
    Ok(detail.join(", "))
}

fn depth_grid() -> Vec<Option<usize>> {
    vec![Some(0), Some(1), Some(2), Some(3), Some(4), Some(6), Some(8), None]
}

/// A consistent corpus: first pronunciation of every fixture word, no
/// duplicates.
fn toy_consistent() -> Result<Vec<Alignment>, String> {
    let inv = PhoneInventory::cmu();
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/oald_like.tsv");
    let entries = parse_lexicon(&path, LexiconFormat::Oald, &inv).map_err(|e| e.to_string())?.entries;
    let mut seen = BTreeSet::new();
    let entries: Vec<LexiconEntry> = entries.into_iter().filter(|e| seen.insert(e.word.clone())).collect();
    Ok(align_lexicon(
        &entries,
        &PseudoPhoneSet::default(),
        MergePolicy::Always,
        &AlignMethod::Seeded { allow: AllowablesTable::english_starter(), extra_passes: 0 },
    )
    .map_err(|e| e.to_string())?
    .alignments)
}

fn main() -> ExitCode {
    let mut r = Report { gating_failures: 0, passed: 0, failed: 0 };

    let t = Instant::now();
    r.line("1a", true, t, check_alignment_oracle(1000, 1));
    let t = Instant::now();
    r.line("1b", true, t, check_em_monotone(200, 2));
    let t = Instant::now();
    r.line("1c", true, t, check_id3_oracle(3));
    let t = Instant::now();
    r.line("1d", true, t, check_tree_size(500, 4));
    let t = Instant::now();
    r.line("1e", true, t, check_compression(50, 5));
    let t = Instant::now();
    r.line("1f", true, t, check_determinism());
    let t = Instant::now();
    r.line("1g", true, t, check_feedback_and_direction(6));

    let t = Instant::now();
    let toy = toy_consistent().and_then(|c| {
        let base = FeatureConfig { direction: Direction::LeftToRight, ..FeatureConfig::default() };
        let rows = accuracy_size_sweep(&c, &c, &base, &TrainConfig::default(), &depth_grid(), &[Preset::G, Preset::Gp, Preset::GpPos], &PhoneInventory::cmu())
            .map_err(|e| e.to_string())?;
        sweep_check(&rows, 99.0).map(|d| format!("fixture corpus, train=test: {d}"))
    });
    r.line("5", true, t, toy);

    let t = Instant::now();
    r.line("6", true, t, check_fixtures());

    let t = Instant::now();
    if !data_dir().join("cmudict/cmudict.dict").exists() {
        println!("SKIP 2-4 CMU dictionary not found under data/cmudict");
    } else {
        match load_cmu() {
            Err(e) => {
                r.line("2", false, t, Err(format!("CMU pipeline failed: {e}")));
            }
            Ok(cmu) => run_cmu(&mut r, &cmu, t),
        }
    }

    println!(
        "{} passed, {} failed ({} gating)",
        r.passed, r.failed, r.gating_failures
    );
    if r.gating_failures > 0 {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn check_fixtures() -> Check {
    let inv = PhoneInventory::cmu();
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let mut detail = Vec::new();
    for (name, fmt, pos) in [("oald_like.tsv", LexiconFormat::Oald, true), ("generic.tsv", LexiconFormat::Tsv, false)] {
        let parsed = parse_lexicon(&dir.join(name), fmt, &inv).map_err(|e| e.to_string())?;
        if parsed.entries.len() > 100 {
            return Err(format!("{name} has {} entries", parsed.entries.len()));
        }
        let corpus = align_lexicon(
            &parsed.entries,
            &PseudoPhoneSet::default(),
            MergePolicy::Always,
            &AlignMethod::Seeded { allow: AllowablesTable::english_starter(), extra_passes: 0 },
        )
        .map_err(|e| e.to_string())?;
        let cfg = FeatureConfig { feedback: 3, direction: Direction::RightToLeft, use_pos: pos, ..FeatureConfig::default() };
        let (train, test) = split_aligned(&corpus.alignments, 10, 0).map_err(|e| e.to_string())?;
        let held_out = train_eval(&train, &test, &cfg)?;
        let seen = train_eval(&corpus.alignments, &corpus.alignments, &cfg)?;
        detail.push(format!(
            "{name}: {} entries, {} rejects, {} aligned, train=test word+stress {:.2}%, held-out {:.2}%",
            parsed.entries.len(),
            parsed.rejects.len(),
            corpus.alignments.len(),
            seen.word_acc_stress,
            held_out.word_acc_stress
        ));
    }
    Ok(detail.join("; "))
}

fn run_cmu(r: &mut Report, cmu: &Cmu, started: Instant) {
    let split = |a: &[Alignment]| split_aligned(a, 10, 0).expect("valid split");
    let (train, test) = split(&cmu.seeded);
    let w3 = FeatureConfig::default();
    let fb3 = FeatureConfig { feedback: 3, direction: Direction::LeftToRight, ..w3 };
    let sep = FeatureConfig { stress_mode: StressMode::Separate, ..w3 };

    let base = train_eval(&train, &test, &w3);
    let with_fb = train_eval(&train, &test, &fb3);
    let c2 = match (&base, &with_fb) {
        (Ok(b), Ok(f)) => {
            let word_ok = (b.word_acc_stress - 59.71).abs() <= 4.0;
            let phone_ok = (b.phone_acc - 86.95).abs() <= 3.0;
            let gain = f.word_acc_stress - b.word_acc_stress;
            let detail = format!(
                "{} aligned, test {}: w3 {}; +3 phones LtoR word+stress {:.2}% (gain {gain:+.2}); targets 59.71±4 word, 86.95±3 phone, gain >= 1",
                cmu.seeded.len(),
                test.len(),
                pct(b),
                f.word_acc_stress
            );
            if word_ok && phone_ok && gain >= 1.0 {
                Ok(detail)
            } else {
                let mut why = Vec::new();
                if !word_ok {
                    why.push("word accuracy out of band");
                }
                if !phone_ok {
                    why.push("phone accuracy out of band");
                }
                if gain < 1.0 {
                    why.push("feedback gain below 1 point");
                }
                Err(format!("{} ({})", detail, why.join(", ")))
            }
        }
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    r.line("2", false, started, c2);

    let t = Instant::now();
    let (em_train, em_test) = split(&cmu.em);
    let c3 = match (&base, train_eval(&em_train, &em_test, &w3)) {
        (Ok(b), Ok(e)) => {
            let detail = format!("same {} entries: hand-seeded {:.2}% vs epsilon scattering {:.2}% word+stress", cmu.seeded.len(), b.word_acc_stress, e.word_acc_stress);
            if b.word_acc_stress >= e.word_acc_stress { Ok(detail) } else { Err(detail) }
        }
        (Err(e), _) => Err(e.clone()),
        (_, Err(e)) => Err(e),
    };
    r.line("3", false, t, c3);

    let t = Instant::now();
    let c4 = match (&base, train_eval(&train, &test, &sep)) {
        (Ok(m), Ok(s)) => {
            let detail = format!(
                "merged {:.2}% (no stress {:.2}%) vs two-tree {:.2}% word+stress; gate merged >= two-tree + 5",
                m.word_acc_stress, m.word_acc_nostress, s.word_acc_stress
            );
            if m.word_acc_stress >= s.word_acc_stress + 5.0 { Ok(detail) } else { Err(detail) }
        }
        (Err(e), _) => Err(e.clone()),
        (_, Err(e)) => Err(e),
    };
    r.line("4", false, t, c4);

    let t = Instant::now();
    let mut seen = BTreeSet::new();
    let consistent: Vec<Alignment> = cmu
        .seeded
        .iter()
        .filter(|a| seen.insert(a.word.clone()))
        .step_by(5)
        .cloned()
        .collect();
    let c5 = accuracy_size_sweep(&consistent, &consistent, &w3, &TrainConfig::default(), &depth_grid(), &[Preset::G, Preset::Gp], &PhoneInventory::cmu())
        .map_err(|e| e.to_string())
        .and_then(|rows| sweep_check(&rows, 0.0))
        .map(|d| format!("CMU {} distinct words, train=test, monotone (not a consistent corpus, so no 99% bar): {d}", consistent.len()));
    r.line("5cmu", false, t, c5);
}
