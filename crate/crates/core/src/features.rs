//! Fixed-size categorical learning vectors.
//!
//! Layout: `[N left letters, focus letter, N right letters] ++ [K feedback
//! outputs] ++ [POS]`. Letter windows are always in surface order; the
//! transcription direction only changes the visit order and therefore which
//! outputs are available as feedback. Feedback lists the K most recently
//! visited outputs, oldest first, padded at the front.

use std::fmt;
use std::str::FromStr;

use crate::align_em::Alignment;
use crate::error::{Error, Result};
use crate::lexicon::Unit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    LeftToRight,
    RightToLeft,
}

impl Direction {
    /// Letter positions in the order they are transcribed.
    pub fn visit_order(self, len: usize) -> Vec<usize> {
        match self {
            Direction::LeftToRight => (0..len).collect(),
            Direction::RightToLeft => (0..len).rev().collect(),
        }
    }

    /// How many positions are visited before `position`.
    pub fn rank(self, len: usize, position: usize) -> usize {
        match self {
            Direction::LeftToRight => position,
            Direction::RightToLeft => len - 1 - position,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::LeftToRight => "ltr",
            Direction::RightToLeft => "rtl",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ltr" => Ok(Direction::LeftToRight),
            "rtl" => Ok(Direction::RightToLeft),
            _ => Err(Error::Config(format!("unknown direction '{s}'"))),
        }
    }
}

/// How stress is predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StressMode {
    /// One target: phone with its stress marker.
    #[default]
    Merged,
    /// A phone forest without stress plus a stress forest over the same
    /// vectors.
    Separate,
    /// Stress markers are dropped.
    None,
}

impl fmt::Display for StressMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StressMode::Merged => "merged",
            StressMode::Separate => "separate",
            StressMode::None => "none",
        })
    }
}

impl FromStr for StressMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "merged" => Ok(StressMode::Merged),
            "separate" => Ok(StressMode::Separate),
            "none" => Ok(StressMode::None),
            _ => Err(Error::Config(format!("unknown stress mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureConfig {
    pub window: usize,
    pub feedback: usize,
    pub direction: Direction,
    pub use_pos: bool,
    pub stress_mode: StressMode,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            window: 3,
            feedback: 0,
            direction: Direction::LeftToRight,
            use_pos: false,
            stress_mode: StressMode::Merged,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 {
            return Err(Error::Config("window must be at least 1".into()));
        }
        Ok(())
    }

    pub fn arity(&self) -> usize {
        2 * self.window + 1 + self.feedback + usize::from(self.use_pos)
    }

    pub fn focus_index(&self) -> usize {
        self.window
    }

    /// Target form of an aligned unit under this stress mode.
    pub fn target_unit(&self, unit: &Unit) -> Unit {
        match self.stress_mode {
            StressMode::Merged => unit.clone(),
            StressMode::Separate | StressMode::None => unit.without_stress(),
        }
    }
}

impl fmt::Display for FeatureConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "window={} feedback={} direction={} pos={} stress={}",
            self.window, self.feedback, self.direction, self.use_pos, self.stress_mode
        )
    }
}

impl FromStr for FeatureConfig {
    type Err = Error;

    /// Parses the `key=value ...` form produced by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = FeatureConfig::default();
        for kv in s.split_whitespace() {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got '{kv}'")))?;
            let num = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| Error::Config(format!("bad number '{v}' for {k}")))
            };
            match k {
                "window" => cfg.window = num(v)?,
                "feedback" => cfg.feedback = num(v)?,
                "direction" => cfg.direction = v.parse()?,
                "pos" => {
                    cfg.use_pos = v
                        .parse()
                        .map_err(|_| Error::Config(format!("bad boolean '{v}'")))?
                }
                "stress" => cfg.stress_mode = v.parse()?,
                _ => return Err(Error::Config(format!("unknown config key '{k}'"))),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// One categorical attribute value. Padding (outside the word, or before any
/// output exists) is distinct from an epsilon output.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Attr {
    Pad,
    Letter(char),
    Output(Unit),
    Pos(String),
}

/// Symbol used for padding in model files; `-` is epsilon there.
pub const PAD_KEY: &str = "#";

impl Attr {
    /// Interning key: unique per value, `#` for padding.
    pub fn key(&self) -> String {
        match self {
            Attr::Pad => PAD_KEY.to_string(),
            Attr::Letter(c) => c.to_string(),
            Attr::Output(u) => u.to_string(),
            Attr::Pos(p) => p.clone(),
        }
    }
}

impl fmt::Display for Attr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Attr::Pad => f.write_str("-"),
            other => f.write_str(&other.key()),
        }
    }
}

/// What a vector is trained to predict.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Target {
    Unit(Unit),
    /// Stress marker of the slot, `None` for unstressed or consonant slots.
    Stress(Option<char>),
}

impl Target {
    pub fn key(&self) -> String {
        match self {
            Target::Unit(u) => u.to_string(),
            Target::Stress(Some(c)) => c.to_string(),
            Target::Stress(None) => "-".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureVector {
    pub position: usize,
    pub attrs: Vec<Attr>,
    pub target: Option<Target>,
}

impl FeatureVector {
    pub fn focus(&self, cfg: &FeatureConfig) -> &Attr {
        &self.attrs[cfg.focus_index()]
    }

    /// Debug dump line: attributes space-joined, then `→ target`.
    pub fn to_tsv_line(&self) -> String {
        let attrs: Vec<String> = self.attrs.iter().map(|a| a.to_string()).collect();
        match &self.target {
            Some(t) => format!("{}\t→ {}", attrs.join(" "), t.key()),
            None => attrs.join(" "),
        }
    }
}

/// Assembles a vector from its parts. `history` holds the outputs of the
/// already visited positions, in visit order.
pub(crate) fn layout<T: Clone>(
    letters: &[T],
    position: usize,
    history: &[T],
    pos: Option<&T>,
    pad: &T,
    cfg: &FeatureConfig,
) -> Vec<T> {
    let mut attrs = Vec::with_capacity(cfg.arity());
    let n = cfg.window as isize;
    for off in -n..=n {
        let p = position as isize + off;
        if p < 0 || p >= letters.len() as isize {
            attrs.push(pad.clone());
        } else {
            attrs.push(letters[p as usize].clone());
        }
    }
    if cfg.feedback > 0 {
        let k = cfg.feedback;
        let have = history.len().min(k);
        attrs.extend(std::iter::repeat_n(pad.clone(), k - have));
        attrs.extend(history[history.len() - have..].iter().cloned());
    }
    if cfg.use_pos {
        attrs.push(pos.cloned().unwrap_or_else(|| pad.clone()));
    }
    attrs
}

/// Teacher-forced vectors for an aligned entry, one per letter, in visit
/// order. Feedback comes from the reference outputs.
pub fn extract_training_vectors(alignment: &Alignment, cfg: &FeatureConfig) -> Vec<FeatureVector> {
    training_vectors(alignment, cfg, |u| Target::Unit(cfg.target_unit(u)))
}

/// Vectors for the separate stress forest: same attributes, stress target.
pub fn extract_stress_vectors(alignment: &Alignment, cfg: &FeatureConfig) -> Vec<FeatureVector> {
    training_vectors(alignment, cfg, |u| Target::Stress(u.stress()))
}

fn training_vectors(
    alignment: &Alignment,
    cfg: &FeatureConfig,
    target: impl Fn(&Unit) -> Target,
) -> Vec<FeatureVector> {
    let letters: Vec<Attr> = alignment.word.chars().map(Attr::Letter).collect();
    let pos = alignment.pos.clone().map(Attr::Pos);
    let mut history = Vec::with_capacity(letters.len());
    let mut out = Vec::with_capacity(letters.len());
    for p in cfg.direction.visit_order(letters.len()) {
        let attrs = layout(&letters, p, &history, pos.as_ref(), &Attr::Pad, cfg);
        let unit = &alignment.out[p];
        out.push(FeatureVector {
            position: p,
            attrs,
            target: Some(target(unit)),
        });
        history.push(Attr::Output(cfg.target_unit(unit)));
    }
    out
}

/// Prediction-time vector: `produced` holds the model outputs of every
/// position visited before `position`.
pub fn extract_prediction_vector(
    word: &str,
    position: usize,
    produced: &[Unit],
    pos: Option<&str>,
    cfg: &FeatureConfig,
) -> Result<FeatureVector> {
    let letters: Vec<Attr> = word.chars().map(Attr::Letter).collect();
    if position >= letters.len() {
        return Err(Error::PositionOutOfRange {
            position,
            len: letters.len(),
        });
    }
    let expected = cfg.direction.rank(letters.len(), position);
    if produced.len() != expected {
        return Err(Error::LengthMismatch {
            what: "produced outputs vs visited positions",
            left: produced.len(),
            right: expected,
        });
    }
    let history: Vec<Attr> = produced.iter().cloned().map(Attr::Output).collect();
    let pos = pos.map(|p| Attr::Pos(p.to_string()));
    Ok(FeatureVector {
        position,
        attrs: layout(&letters, position, &history, pos.as_ref(), &Attr::Pad, cfg),
        target: None,
    })
}
