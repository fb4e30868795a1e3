//! Accuracy metrics and the depth/size sweep.

use std::fmt;

use rayon::prelude::*;

use crate::align_em::Alignment;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::id3::TrainConfig;
use crate::lexicon::{postprocess_output, Phone, PhoneInventory};
use crate::model::Model;
use crate::transcriber::{transcribe, Transcription, UnknownLetterPolicy};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub entries: usize,
    /// Slot-wise over the one-to-one alignment; epsilon slots count.
    pub phone_acc: f64,
    pub word_acc_nostress: f64,
    pub word_acc_stress: f64,
    /// 1 − Σ edit distance / Σ reference length, on post-processed phones.
    pub phone_acc_edit: f64,
}

impl Metrics {
    pub fn to_tsv(&self) -> String {
        format!(
            "entries\tphone_acc\tword_acc_nostress\tword_acc_stress\tphone_acc_edit\n{}\t{:.2}\t{:.2}\t{:.2}\t{:.2}\n",
            self.entries, self.phone_acc, self.word_acc_nostress, self.word_acc_stress, self.phone_acc_edit
        )
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "entries                     {}", self.entries)?;
        writeln!(f, "phone accuracy (slots)      {:.2}%", self.phone_acc)?;
        writeln!(f, "word accuracy (no stress)   {:.2}%", self.word_acc_nostress)?;
        writeln!(f, "word accuracy (with stress) {:.2}%", self.word_acc_stress)?;
        write!(f, "phone accuracy (edit dist.) {:.2}%", self.phone_acc_edit)
    }
}

fn strip(phones: &[Phone]) -> Vec<Phone> {
    phones.iter().map(Phone::unstressed).collect()
}

fn edit_distance(a: &[Phone], b: &[Phone]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = (prev[j] + usize::from(x != y)).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

fn pct(num: usize, den: usize) -> f64 {
    if den == 0 {
        100.0
    } else {
        100.0 * num as f64 / den as f64
    }
}

/// Scores predictions against reference alignments (index-aligned).
pub fn score(predictions: &[Transcription], references: &[Alignment]) -> Result<Metrics> {
    if predictions.len() != references.len() {
        return Err(Error::LengthMismatch {
            what: "predictions vs references",
            left: predictions.len(),
            right: references.len(),
        });
    }
    let (mut slots, mut slots_ok) = (0, 0);
    let (mut words_ok, mut words_ok_ns) = (0, 0);
    let (mut ref_len, mut edits) = (0, 0);
    for (p, r) in predictions.iter().zip(references) {
        if p.raw.len() != r.out.len() {
            return Err(Error::LengthMismatch {
                what: "predicted slots vs reference slots",
                left: p.raw.len(),
                right: r.out.len(),
            });
        }
        slots += r.out.len();
        slots_ok += p.raw.iter().zip(&r.out).filter(|(a, b)| a == b).count();
        let reference = postprocess_output(&r.out);
        words_ok += usize::from(p.phones == reference);
        words_ok_ns += usize::from(strip(&p.phones) == strip(&reference));
        ref_len += reference.len();
        edits += edit_distance(&p.phones, &reference);
    }
    Ok(Metrics {
        entries: references.len(),
        phone_acc: pct(slots_ok, slots),
        word_acc_nostress: pct(words_ok_ns, predictions.len()),
        word_acc_stress: pct(words_ok, predictions.len()),
        phone_acc_edit: if ref_len == 0 {
            100.0
        } else {
            100.0 * (1.0 - edits as f64 / ref_len as f64)
        },
    })
}

/// Transcribes every reference word and scores the result.
pub fn evaluate(model: &Model, references: &[Alignment]) -> Result<Metrics> {
    let predictions: Vec<Transcription> = references
        .par_iter()
        .map(|a| transcribe(&a.word, a.pos.as_deref(), model, UnknownLetterPolicy::SkipWithEpsilon))
        .collect::<Result<_>>()?;
    score(&predictions, references)
}

/// Feature sets compared by the sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Letters only.
    G,
    /// Letters and phonemic feedback.
    Gp,
    /// Letters, feedback and POS.
    GpPos,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::G => "g",
            Preset::Gp => "gp",
            Preset::GpPos => "gppos",
        }
    }

    /// Derives the preset's configuration from a base one; feedback defaults
    /// to 3 when the base has none.
    pub fn apply(self, base: &FeatureConfig) -> FeatureConfig {
        let feedback = if base.feedback > 0 { base.feedback } else { 3 };
        match self {
            Preset::G => FeatureConfig {
                feedback: 0,
                use_pos: false,
                ..*base
            },
            Preset::Gp => FeatureConfig {
                feedback,
                use_pos: false,
                ..*base
            },
            Preset::GpPos => FeatureConfig {
                feedback,
                use_pos: true,
                ..*base
            },
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g" => Ok(Preset::G),
            "gp" => Ok(Preset::Gp),
            "gppos" => Ok(Preset::GpPos),
            _ => Err(Error::Config(format!("unknown preset '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub preset: Preset,
    /// `None` is an uncapped tree.
    pub depth: Option<usize>,
    pub size: usize,
    pub word_stress_acc: f64,
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("preset,depth,size,word_stress_acc\n");
    for r in rows {
        let depth = r.depth.map_or("full".to_string(), |d| d.to_string());
        out.push_str(&format!("{},{},{},{:.2}\n", r.preset.name(), depth, r.size, r.word_stress_acc));
    }
    out
}

/// Trains and scores every (preset, depth cap) pair. Rows come out grouped
/// by preset, depths in grid order.
pub fn accuracy_size_sweep(
    train: &[Alignment],
    test: &[Alignment],
    base: &FeatureConfig,
    tc: &TrainConfig,
    depth_grid: &[Option<usize>],
    presets: &[Preset],
    inventory: &PhoneInventory,
) -> Result<Vec<SweepRow>> {
    if depth_grid.is_empty() {
        return Err(Error::Config("empty depth grid".into()));
    }
    let mut rows = Vec::new();
    for &preset in presets {
        let cfg = preset.apply(base);
        for &depth in depth_grid {
            let tc = TrainConfig { max_depth: depth, ..*tc };
            let model = Model::train(train, &cfg, &tc, inventory)?;
            let m = evaluate(&model, test)?;
            rows.push(SweepRow {
                preset,
                depth,
                size: model.size(),
                word_stress_acc: m.word_acc_stress,
            });
        }
    }
    Ok(rows)
}
