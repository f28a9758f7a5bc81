//! The lookahead window and the combined lookahead + verification layout.
//!
//! Window geometry: `N - 1` levels, oldest first. Cell `(level, column)`
//! with 1-based `column` sits at relative position `column + level - 1`.
//! Level 0 has no column 1 because that position is the confirmed token
//! itself. Column `j` read bottom to top is a run of consecutive positions,
//! and each level is one step further along the Jacobi trajectory than the
//! level below it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::step::{QueryRole, QueryToken, StepLayout};
use crate::error::{Error, Result};
use crate::token::{Distribution, NGram, Token};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window2D {
    width: usize,
    ngram: usize,
    vocab_size: usize,
    /// `levels[0]` holds columns 2..=W, every other level columns 1..=W.
    levels: Vec<Vec<Token>>,
}

fn random_tokens<R: Rng + ?Sized>(rng: &mut R, vocab_size: usize, count: usize) -> Vec<Token> {
    (0..count)
        .map(|_| rng.random_range(0..vocab_size) as Token)
        .collect()
}

impl Window2D {
    /// A window filled with uniform draws from the vocabulary.
    pub fn init<R: Rng + ?Sized>(
        width: usize,
        ngram: usize,
        vocab_size: usize,
        rng: &mut R,
    ) -> Self {
        assert!(width >= 1 && ngram >= 2 && vocab_size >= 1);
        let levels = (0..ngram - 1)
            .map(|level| {
                let cols = if level == 0 { width - 1 } else { width };
                random_tokens(rng, vocab_size, cols)
            })
            .collect();
        Self {
            width,
            ngram,
            vocab_size,
            levels,
        }
    }

    /// Builds a window from explicit rows (level 0 first, `W - 1` tokens;
    /// higher levels `W` tokens).
    pub fn from_levels(width: usize, ngram: usize, vocab_size: usize, levels: Vec<Vec<Token>>) -> Result<Self> {
        if width == 0 || ngram < 2 || levels.len() != ngram - 1 {
            return Err(Error::InvalidConfig("window shape mismatch".into()));
        }
        for (l, row) in levels.iter().enumerate() {
            let want = if l == 0 { width - 1 } else { width };
            if row.len() != want {
                return Err(Error::InvalidConfig(format!(
                    "level {l} has {} cells, expected {want}",
                    row.len()
                )));
            }
            if let Some(&t) = row.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(Error::TokenOutOfRange { token: t, vocab_size });
            }
        }
        Ok(Self {
            width,
            ngram,
            vocab_size,
            levels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn ngram(&self) -> usize {
        self.ngram
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn levels(&self) -> &[Vec<Token>] {
        &self.levels
    }

    pub fn top_level(&self) -> usize {
        self.ngram - 2
    }

    /// Cell count: `(N - 1) * W - 1`.
    pub fn cell_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }

    /// Token at `(level, column)`, `None` for the absent level-0 column 1.
    pub fn cell(&self, level: usize, column: usize) -> Option<Token> {
        assert!(level < self.levels.len() && (1..=self.width).contains(&column));
        if level == 0 {
            (column >= 2).then(|| self.levels[0][column - 2])
        } else {
            Some(self.levels[level][column - 1])
        }
    }

    pub fn rel_pos(level: usize, column: usize) -> usize {
        column + level - 1
    }

    /// Query index of cell `(level, column)` in a built layout. The absent
    /// cell `(0, 1)` maps to query 0, which occupies its position.
    pub fn query_index(&self, level: usize, column: usize) -> usize {
        if level == 0 {
            column - 1
        } else {
            self.width + (level - 1) * self.width + column - 1
        }
    }

    /// Collects one n-gram per column from the trajectory: the column's
    /// cells bottom to top followed by that column's newly generated token.
    /// Column 1 starts with the confirmed token.
    pub fn collect_ngrams(&self, last_token: Token, new_top: &[Token]) -> Vec<NGram> {
        assert_eq!(new_top.len(), self.width, "one new token per column");
        (1..=self.width)
            .map(|column| {
                let mut tokens = Vec::with_capacity(self.ngram);
                tokens.push(self.cell(0, column).unwrap_or(last_token));
                for level in 1..self.levels.len() {
                    tokens.push(self.levels[level][column - 1]);
                }
                tokens.push(new_top[column - 1]);
                NGram::new(tokens, self.ngram).expect("column spans N positions")
            })
            .collect()
    }

    /// Advances the window after a step that accepted `accepted` tokens.
    ///
    /// The oldest level is dropped, the remaining levels move down one, and
    /// `new_top` becomes the top level. Every level then shifts left by
    /// `accepted - 1` columns to follow the confirmed position, vacated
    /// right-hand cells are refilled with uniform draws, and the new level
    /// 0 loses its column 1.
    ///
    /// # Panics
    ///
    /// If `accepted` is outside `1..=N` or `new_top` does not hold W tokens.
    pub fn update<R: Rng + ?Sized>(&mut self, new_top: &[Token], accepted: usize, rng: &mut R) {
        assert!(
            (1..=self.ngram).contains(&accepted),
            "accepted count {accepted} outside 1..={}",
            self.ngram
        );
        assert_eq!(new_top.len(), self.width, "one new token per column");
        let shift = (accepted - 1).min(self.width);

        let mut rows: Vec<Vec<Token>> = self.levels.drain(1..).collect();
        rows.push(new_top.to_vec());
        for row in rows.iter_mut() {
            row.drain(..shift);
            row.extend(random_tokens(rng, self.vocab_size, shift));
        }
        rows[0].remove(0);
        self.levels = rows;
    }

    /// Builds the combined layout for one step.
    ///
    /// Query 0 is `last_token`; window cells follow level by level, then
    /// each candidate branch. A window cell `(l, j)` sees level-0 columns
    /// `2..=j` (`2..j` for level 0 itself) and the cells below it in column
    /// `j`. A candidate token sees the earlier tokens of its own branch.
    /// The two branches never see each other.
    pub fn build_layout(&self, last_token: Token, candidates: &[Vec<Token>]) -> Result<LookaheadLayout> {
        let suffix_len = self.ngram - 1;
        if let Some(bad) = candidates.iter().find(|c| c.len() != suffix_len) {
            return Err(Error::InvalidCandidate {
                expected: suffix_len,
                got: bad.len(),
            });
        }
        let mut queries = Vec::with_capacity(1 + self.cell_count() + candidates.len() * suffix_len);
        queries.push(QueryToken {
            token: last_token,
            rel_pos: 0,
            visible: Vec::new(),
            role: QueryRole::Confirmed,
        });
        for level in 0..self.levels.len() {
            for column in 1..=self.width {
                let Some(token) = self.cell(level, column) else {
                    continue;
                };
                let base_cols = if level == 0 { column - 1 } else { column };
                let mut visible: Vec<usize> =
                    (2..=base_cols).map(|c| self.query_index(0, c)).collect();
                visible.extend((1..level).map(|l| self.query_index(l, column)));
                debug_assert_eq!(self.query_index(level, column), queries.len());
                queries.push(QueryToken {
                    token,
                    rel_pos: Self::rel_pos(level, column),
                    visible,
                    role: QueryRole::Window { level, column },
                });
            }
        }
        let candidate_base = queries.len();
        for (branch, suffix) in candidates.iter().enumerate() {
            let start = queries.len();
            for (k, &token) in suffix.iter().enumerate() {
                queries.push(QueryToken {
                    token,
                    rel_pos: k + 1,
                    visible: (start..start + k).collect(),
                    role: QueryRole::Candidate {
                        branch,
                        offset: k + 1,
                    },
                });
            }
        }
        Ok(LookaheadLayout {
            layout: StepLayout::new(queries)?,
            window: self.width,
            ngram: self.ngram,
            top_indices: (1..=self.width)
                .map(|c| self.query_index(self.top_level(), c))
                .collect(),
            candidate_base,
            candidates: candidates.to_vec(),
        })
    }
}

/// A built step layout plus the index bookkeeping needed to read outputs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookaheadLayout {
    pub layout: StepLayout,
    pub window: usize,
    pub ngram: usize,
    top_indices: Vec<usize>,
    candidate_base: usize,
    pub candidates: Vec<Vec<Token>>,
}

impl LookaheadLayout {
    /// Query indices of the top-level cells, column 1 first.
    pub fn top_indices(&self) -> &[usize] {
        &self.top_indices
    }

    /// Query index of token `offset` (1-based) of candidate `branch`.
    pub fn candidate_index(&self, branch: usize, offset: usize) -> usize {
        self.candidate_base + branch * (self.ngram - 1) + offset - 1
    }

    /// Greedy outputs of the top-level cells: the W newly generated tokens.
    pub fn new_top(&self, outputs: &[Distribution]) -> Vec<Token> {
        self.top_indices.iter().map(|&i| outputs[i].argmax()).collect()
    }

    /// Per candidate, the N distributions used by verification: the base
    /// output followed by the outputs after each speculated token.
    pub fn candidate_distributions(&self, outputs: &[Distribution]) -> Vec<Vec<Distribution>> {
        (0..self.candidates.len())
            .map(|b| {
                std::iter::once(outputs[0].clone())
                    .chain((1..self.ngram).map(|k| outputs[self.candidate_index(b, k)].clone()))
                    .collect()
            })
            .collect()
    }

    pub fn query_count(&self) -> usize {
        self.layout.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::session_rng;
    use proptest::prelude::*;

    fn numbered(width: usize, ngram: usize) -> Window2D {
        // level l, column j holds token 10*l + j
        let levels = (0..ngram - 1)
            .map(|l| {
                let first = if l == 0 { 2 } else { 1 };
                (first..=width).map(|j| (10 * l + j) as Token).collect()
            })
            .collect();
        Window2D::from_levels(width, ngram, 100, levels).unwrap()
    }

    #[test]
    fn init_geometry() {
        let mut rng = session_rng(3, 0);
        let w = Window2D::init(5, 4, 50, &mut rng);
        let sizes: Vec<usize> = w.levels().iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 5, 5]);

        let w2 = Window2D::init(5, 2, 50, &mut rng);
        assert_eq!(w2.levels().len(), 1);
        assert_eq!(w2.cell_count(), 4);

        let a = Window2D::init(7, 3, 50, &mut session_rng(9, 0));
        let b = Window2D::init(7, 3, 50, &mut session_rng(9, 0));
        assert_eq!(a, b);
    }

    #[test]
    fn red_six_sees_green_five_and_all_orange() {
        let w = numbered(5, 4);
        let built = w.build_layout(0, &[vec![1, 2, 3], vec![4, 5, 6]]).unwrap();
        let layout = &built.layout;
        let red6 = w.query_index(2, 5);
        assert_eq!(layout.queries()[red6].rel_pos, 6);
        let mut seen: Vec<usize> = layout.queries()[red6]
            .visible
            .iter()
            .map(|&v| layout.queries()[v].rel_pos)
            .collect();
        seen.sort();
        assert_eq!(seen, vec![1, 2, 3, 4, 5]);
        let green5 = w.query_index(1, 5);
        assert!(layout.sees(red6, green5));
        for c in 2..=5 {
            assert!(layout.sees(red6, w.query_index(0, c)));
        }
        // no other green or red cell
        assert!(!layout.sees(red6, w.query_index(1, 4)));
        assert!(!layout.sees(red6, w.query_index(2, 4)));
    }

    #[test]
    fn w1_n2_is_autoregressive() {
        let w = Window2D::init(1, 2, 10, &mut session_rng(0, 0));
        let built = w.build_layout(4, &[]).unwrap();
        assert_eq!(built.query_count(), 1);
        assert_eq!(built.top_indices(), &[0]);
    }

    #[test]
    fn identical_candidates_are_disjoint_branches() {
        let w = numbered(3, 3);
        let built = w.build_layout(0, &[vec![7, 8], vec![7, 8]]).unwrap();
        let a2 = built.candidate_index(0, 2);
        let b1 = built.candidate_index(1, 1);
        let b2 = built.candidate_index(1, 2);
        assert!(!built.layout.sees(a2, b1));
        assert!(!built.layout.sees(b2, built.candidate_index(0, 1)));
        assert!(built.layout.sees(b2, b1));
    }

    #[test]
    fn candidate_length_checked() {
        let w = numbered(3, 3);
        assert_eq!(
            w.build_layout(0, &[vec![1, 2, 3]]).unwrap_err(),
            Error::InvalidCandidate {
                expected: 2,
                got: 3
            }
        );
    }

    #[test]
    fn ngrams_per_column() {
        let w = numbered(5, 4);
        let grams = w.collect_ngrams(99, &[31, 32, 33, 34, 35]);
        assert_eq!(grams.len(), 5);
        assert_eq!(grams[0].tokens(), &[99, 11, 21, 31]);
        assert_eq!(grams[1].tokens(), &[2, 12, 22, 32]);
        assert_eq!(grams[4].tokens(), &[5, 15, 25, 35]);

        let w2 = numbered(3, 2);
        let grams = w2.collect_ngrams(99, &[7, 8, 9]);
        let pairs: Vec<&[Token]> = grams.iter().map(|g| g.tokens()).collect();
        assert_eq!(pairs, vec![&[99, 7][..], &[2, 8], &[3, 9]]);
    }

    #[test]
    fn constant_window_dedups_to_one() {
        let levels = vec![vec![4; 3], vec![4; 4]];
        let w = Window2D::from_levels(4, 3, 10, levels).unwrap();
        let mut pool = crate::pool::NGramPool::new(3);
        for g in w.collect_ngrams(4, &[6; 4]) {
            pool.insert(g).unwrap();
        }
        assert_eq!(pool.len(), 1);
    }

    #[test]
    fn update_single_acceptance() {
        let mut w = numbered(5, 4);
        let mut rng = session_rng(0, 0);
        w.update(&[31, 32, 33, 34, 35], 1, &mut rng);
        assert_eq!(w.levels()[0], vec![12, 13, 14, 15]);
        assert_eq!(w.levels()[1], vec![21, 22, 23, 24, 25]);
        assert_eq!(w.levels()[2], vec![31, 32, 33, 34, 35]);
    }

    #[test]
    fn update_full_acceptance_shifts_out_n_minus_1() {
        let mut w = numbered(6, 4);
        let mut rng = session_rng(0, 0);
        w.update(&[31, 32, 33, 34, 35, 36], 4, &mut rng);
        // shift 3: new level 0 = old level 1 cols 4..6 minus col 1 -> cols 5,6 + 3 random
        assert_eq!(&w.levels()[0][..2], &[15, 16]);
        assert_eq!(w.levels()[0].len(), 5);
        assert_eq!(&w.levels()[1][..3], &[24, 25, 26]);
        assert_eq!(&w.levels()[2][..3], &[34, 35, 36]);
        assert_eq!(w.levels()[2].len(), 6);
    }

    #[test]
    fn update_is_deterministic() {
        let base = numbered(5, 3);
        let mut a = base.clone();
        let mut b = base.clone();
        a.update(&[1, 2, 3, 4, 5], 3, &mut session_rng(5, 1));
        b.update(&[1, 2, 3, 4, 5], 3, &mut session_rng(5, 1));
        assert_eq!(a, b);
    }

    #[test]
    #[should_panic]
    fn update_rejects_out_of_range() {
        let mut w = numbered(5, 3);
        w.update(&[1, 2, 3, 4, 5], 4, &mut session_rng(0, 0));
    }

    proptest! {
        #[test]
        fn layout_invariants(
            width in 1usize..9,
            ngram in 2usize..6,
            n_cand in 0usize..5,
            seed in any::<u64>(),
            steps in proptest::collection::vec(1usize..6, 0..5),
        ) {
            let mut rng = session_rng(seed, 0);
            let mut w = Window2D::init(width, ngram, 20, &mut rng);
            for k in steps {
                let k = k.min(ngram);
                let top: Vec<Token> = (0..width as Token).collect();
                w.update(&top, k, &mut rng);
                // geometry
                prop_assert_eq!(w.levels()[0].len(), width - 1);
                for l in 1..ngram - 1 {
                    prop_assert_eq!(w.levels()[l].len(), width);
                }
            }
            let cands: Vec<Vec<Token>> = (0..n_cand).map(|c| vec![c as Token; ngram - 1]).collect();
            let built = w.build_layout(3, &cands).unwrap();
            let layout = &built.layout;
            prop_assert_eq!(layout.len(), 1 + ((ngram - 1) * width - 1) + n_cand * (ngram - 1));
            prop_assert!(layout.len() <= (width + n_cand) * (ngram - 1) + 1);
            for (q, query) in layout.queries().iter().enumerate().skip(1) {
                // chain property: one token per position 1..rel_pos-1
                let mut pos: Vec<usize> = query
                    .visible
                    .iter()
                    .map(|&v| layout.queries()[v].rel_pos)
                    .collect();
                pos.sort();
                let expected: Vec<usize> = (1..query.rel_pos).collect();
                prop_assert_eq!(pos, expected, "query {}", q);
                if let QueryRole::Window { level, column } = query.role {
                    prop_assert_eq!(query.rel_pos, column + level - 1);
                }
            }
            for g in w.collect_ngrams(3, &vec![1; width]) {
                prop_assert_eq!(g.len(), ngram);
            }
        }
    }
}
