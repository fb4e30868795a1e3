//! Dynamic programming over the monotone letter/unit alignment lattice.
//!
//! State `(i, j)` means `i` letters and `j` output units consumed. A match
//! move pairs letter `i` with unit `j`, an epsilon move pairs letter `i` with
//! epsilon. Every complete path from `(0, 0)` to `(L, P)` has exactly `L - P`
//! epsilon moves.

/// One path through the lattice: for each letter, the index of the unit it
/// carries, or `None` for epsilon.
/// Relative slack under which the match move wins a tie; summation order
/// alone can split mathematically equal scores by an ulp.
const TIE_EPS: f64 = 1e-12;

pub type Path = Vec<Option<usize>>;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lattice {
    pub letters: usize,
    pub units: usize,
}

impl Lattice {
    pub fn new(letters: usize, units: usize) -> Option<Self> {
        (units <= letters).then_some(Lattice { letters, units })
    }

    fn epsilons(&self) -> usize {
        self.letters - self.units
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.units + 1) + j
    }

    fn size(&self) -> usize {
        (self.letters + 1) * (self.units + 1)
    }

    fn valid(&self, i: usize, j: usize) -> bool {
        j <= i && j <= self.units && i - j <= self.epsilons()
    }

    /// Path counts from the start to each state.
    fn forward(&self, allow_match: &impl Fn(usize, usize) -> bool, allow_eps: &impl Fn(usize) -> bool) -> Vec<f64> {
        let mut f = vec![0.0; self.size()];
        f[0] = 1.0;
        for i in 0..self.letters {
            for j in 0..=self.units.min(i) {
                if !self.valid(i, j) {
                    continue;
                }
                let here = f[self.idx(i, j)];
                if here == 0.0 {
                    continue;
                }
                if j < self.units && allow_match(i, j) {
                    f[self.idx(i + 1, j + 1)] += here;
                }
                if i - j < self.epsilons() && allow_eps(i) {
                    f[self.idx(i + 1, j)] += here;
                }
            }
        }
        f
    }

    /// Path counts from each state to the end.
    fn backward(&self, allow_match: &impl Fn(usize, usize) -> bool, allow_eps: &impl Fn(usize) -> bool) -> Vec<f64> {
        let mut b = vec![0.0; self.size()];
        b[self.idx(self.letters, self.units)] = 1.0;
        for i in (0..self.letters).rev() {
            for j in 0..=self.units.min(i) {
                if !self.valid(i, j) {
                    continue;
                }
                let mut total = 0.0;
                if j < self.units && allow_match(i, j) {
                    total += b[self.idx(i + 1, j + 1)];
                }
                if i - j < self.epsilons() && allow_eps(i) {
                    total += b[self.idx(i + 1, j)];
                }
                b[self.idx(i, j)] = total;
            }
        }
        b
    }

    /// Number of complete paths using only allowed moves.
    pub fn count_paths(&self, allow_match: impl Fn(usize, usize) -> bool, allow_eps: impl Fn(usize) -> bool) -> f64 {
        self.backward(&allow_match, &allow_eps)[0]
    }

    /// Exact pair incidence counts summed over every complete path.
    pub fn pair_counts(
        &self,
        allow_match: impl Fn(usize, usize) -> bool,
        allow_eps: impl Fn(usize) -> bool,
    ) -> PairCounts {
        let f = self.forward(&allow_match, &allow_eps);
        let b = self.backward(&allow_match, &allow_eps);
        let mut counts = PairCounts {
            matches: vec![0.0; self.letters * self.units],
            epsilons: vec![0.0; self.letters],
            paths: b[0],
        };
        for i in 0..self.letters {
            for j in 0..=self.units.min(i) {
                if !self.valid(i, j) {
                    continue;
                }
                let here = f[self.idx(i, j)];
                if here == 0.0 {
                    continue;
                }
                if j < self.units && allow_match(i, j) {
                    counts.matches[i * self.units + j] += here * b[self.idx(i + 1, j + 1)];
                }
                if i - j < self.epsilons() && allow_eps(i) {
                    counts.epsilons[i] += here * b[self.idx(i + 1, j)];
                }
            }
        }
        counts
    }

    /// Best path under additive log weights (`NEG_INFINITY` forbids a move).
    /// Among equal-scoring paths the one whose epsilons sit furthest right is
    /// returned.
    pub fn viterbi(&self, match_lp: impl Fn(usize, usize) -> f64, eps_lp: impl Fn(usize) -> f64) -> Option<(Path, f64)> {
        let mut v = vec![f64::NEG_INFINITY; self.size()];
        v[self.idx(self.letters, self.units)] = 0.0;
        for i in (0..self.letters).rev() {
            for j in 0..=self.units.min(i) {
                if !self.valid(i, j) {
                    continue;
                }
                let (m, e) = self.move_scores(&v, i, j, &match_lp, &eps_lp);
                v[self.idx(i, j)] = m.max(e);
            }
        }
        let score = v[0];
        if score == f64::NEG_INFINITY {
            return None;
        }
        let mut path = Vec::with_capacity(self.letters);
        let mut j = 0;
        for i in 0..self.letters {
            let (m, e) = self.move_scores(&v, i, j, &match_lp, &eps_lp);
            if m > f64::NEG_INFINITY && m >= e - TIE_EPS * e.abs().max(1.0) {
                path.push(Some(j));
                j += 1;
            } else {
                path.push(None);
            }
        }
        Some((path, score))
    }

    fn move_scores(
        &self,
        v: &[f64],
        i: usize,
        j: usize,
        match_lp: &impl Fn(usize, usize) -> f64,
        eps_lp: &impl Fn(usize) -> f64,
    ) -> (f64, f64) {
        let m = if j < self.units {
            match_lp(i, j) + v[self.idx(i + 1, j + 1)]
        } else {
            f64::NEG_INFINITY
        };
        let e = if i - j < self.epsilons() {
            eps_lp(i) + v[self.idx(i + 1, j)]
        } else {
            f64::NEG_INFINITY
        };
        (m, e)
    }

    /// Explicit list of all complete allowed paths, match-first order.
    pub fn enumerate(&self, allow_match: impl Fn(usize, usize) -> bool, allow_eps: impl Fn(usize) -> bool) -> Vec<Path> {
        let b = self.backward(&allow_match, &allow_eps);
        let mut out = Vec::new();
        let mut path = Vec::with_capacity(self.letters);
        self.walk(0, 0, &b, &allow_match, &allow_eps, &mut path, &mut out);
        out
    }

    #[allow(clippy::too_many_arguments)]
    fn walk(
        &self,
        i: usize,
        j: usize,
        b: &[f64],
        allow_match: &impl Fn(usize, usize) -> bool,
        allow_eps: &impl Fn(usize) -> bool,
        path: &mut Path,
        out: &mut Vec<Path>,
    ) {
        if b[self.idx(i, j)] == 0.0 {
            return;
        }
        if i == self.letters {
            out.push(path.clone());
            return;
        }
        if j < self.units && allow_match(i, j) {
            path.push(Some(j));
            self.walk(i + 1, j + 1, b, allow_match, allow_eps, path, out);
            path.pop();
        }
        if i - j < self.epsilons() && allow_eps(i) {
            path.push(None);
            self.walk(i + 1, j, b, allow_match, allow_eps, path, out);
            path.pop();
        }
    }

    /// Furthest letter count any allowed partial path reaches.
    pub fn frontier(&self, allow_match: impl Fn(usize, usize) -> bool, allow_eps: impl Fn(usize) -> bool) -> usize {
        let f = self.forward(&allow_match, &allow_eps);
        (0..=self.letters)
            .rev()
            .find(|&i| (0..=self.units.min(i)).any(|j| self.valid(i, j) && f[self.idx(i, j)] > 0.0))
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub(crate) struct PairCounts {
    /// `matches[i * units + j]`: paths pairing letter i with unit j.
    pub matches: Vec<f64>,
    /// `epsilons[i]`: paths pairing letter i with epsilon.
    pub epsilons: Vec<f64>,
    pub paths: f64,
}
