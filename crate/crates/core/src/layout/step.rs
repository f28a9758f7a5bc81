//! Per-step query layouts: tokens, relative positions and visibility sets.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::token::Token;

/// What a query stands for in a lookahead step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QueryRole {
    /// The last confirmed token, always query 0.
    Confirmed,
    /// A lookahead window cell; columns are 1-based.
    Window { level: usize, column: usize },
    /// Token `offset` (1-based) of verification candidate `branch`.
    Candidate { branch: usize, offset: usize },
    /// Anything else, e.g. Jacobi chains or ad-hoc test layouts.
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryToken {
    pub token: Token,
    /// Position relative to the last confirmed token (which sits at 0).
    pub rel_pos: usize,
    /// Indices of other queries this one attends to. Query 0 and the
    /// confirmed prefix are always visible and need not be listed.
    pub visible: Vec<usize>,
    pub role: QueryRole,
}

/// An ordered, validated set of queries evaluated in one forward pass.
///
/// Every visible reference points at a query with a strictly smaller
/// relative position, so the visibility relation is acyclic, and no query
/// sees two tokens at the same position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepLayout {
    queries: Vec<QueryToken>,
}

impl StepLayout {
    pub fn new(queries: Vec<QueryToken>) -> Result<Self> {
        let first = queries
            .first()
            .ok_or_else(|| Error::InvalidLayout("layout has no queries".into()))?;
        if first.rel_pos != 0 {
            return Err(Error::InvalidLayout("query 0 must sit at rel_pos 0".into()));
        }
        if first.visible.iter().any(|&v| v != 0) {
            return Err(Error::InvalidLayout("query 0 cannot see other queries".into()));
        }
        for (q, query) in queries.iter().enumerate().skip(1) {
            if query.rel_pos == 0 {
                return Err(Error::InvalidLayout(format!(
                    "query {q} shares rel_pos 0 with the confirmed token"
                )));
            }
            let mut seen_pos = HashSet::new();
            for &v in &query.visible {
                let target = queries.get(v).ok_or_else(|| {
                    Error::InvalidLayout(format!("query {q} sees missing query {v}"))
                })?;
                if target.rel_pos >= query.rel_pos {
                    return Err(Error::InvalidLayout(format!(
                        "query {q} (rel_pos {}) sees query {v} at rel_pos {}",
                        query.rel_pos, target.rel_pos
                    )));
                }
                if v != 0 && !seen_pos.insert(target.rel_pos) {
                    return Err(Error::InvalidLayout(format!(
                        "query {q} sees two tokens at rel_pos {}",
                        target.rel_pos
                    )));
                }
            }
        }
        Ok(Self { queries })
    }

    /// The degenerate layout holding only the last confirmed token.
    pub fn single(token: Token) -> Self {
        Self {
            queries: vec![QueryToken {
                token,
                rel_pos: 0,
                visible: Vec::new(),
                role: QueryRole::Confirmed,
            }],
        }
    }

    /// A triangular chain: `last` at 0 followed by `tokens` at 1, 2, ...
    /// each seeing everything before it.
    pub fn chain(last: Token, tokens: &[Token]) -> Self {
        let mut queries = Vec::with_capacity(tokens.len() + 1);
        queries.push(QueryToken {
            token: last,
            rel_pos: 0,
            visible: Vec::new(),
            role: QueryRole::Confirmed,
        });
        for (i, &t) in tokens.iter().enumerate() {
            queries.push(QueryToken {
                token: t,
                rel_pos: i + 1,
                visible: (1..=i).collect(),
                role: QueryRole::Other,
            });
        }
        Self { queries }
    }

    pub fn queries(&self) -> &[QueryToken] {
        &self.queries
    }

    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    pub fn confirmed_token(&self) -> Token {
        self.queries[0].token
    }

    /// Query indices (excluding 0) forming the context of `q`, ordered by
    /// relative position and ending with `q` itself.
    pub fn context_chain(&self, q: usize) -> Vec<usize> {
        if q == 0 {
            return Vec::new();
        }
        let mut chain: Vec<usize> = self.queries[q]
            .visible
            .iter()
            .copied()
            .filter(|&v| v != 0)
            .collect();
        chain.sort_by_key(|&v| self.queries[v].rel_pos);
        chain.push(q);
        chain
    }

    /// Whether `q` can see `target` (query 0 is visible to all).
    pub fn sees(&self, q: usize, target: usize) -> bool {
        target == 0 || self.queries[q].visible.contains(&target)
    }

    /// Restricts the layout to `indices` (which must start with 0 and be
    /// closed under visibility). Returns the sub-layout; its query `i`
    /// corresponds to `indices[i]`.
    pub fn restrict(&self, indices: &[usize]) -> Result<StepLayout> {
        if indices.first() != Some(&0) {
            return Err(Error::InvalidLayout("a shard must start with query 0".into()));
        }
        let mut local = vec![usize::MAX; self.queries.len()];
        for (i, &g) in indices.iter().enumerate() {
            if g >= self.queries.len() || local[g] != usize::MAX {
                return Err(Error::InvalidLayout(format!("bad shard index {g}")));
            }
            local[g] = i;
        }
        let mut queries = Vec::with_capacity(indices.len());
        for &g in indices {
            let src = &self.queries[g];
            let visible = src
                .visible
                .iter()
                .map(|&v| match local[v] {
                    usize::MAX => Err(Error::InvalidLayout(format!(
                        "shard is not visibility-closed: query {g} sees query {v}"
                    ))),
                    l => Ok(l),
                })
                .collect::<Result<Vec<_>>>()?;
            queries.push(QueryToken {
                visible,
                ..src.clone()
            });
        }
        StepLayout::new(queries)
    }

    /// Textual visibility matrix: one row per query, one column per query.
    /// `*` marks the query itself, `x` a visible query, `.` an invisible one.
    pub fn visibility_matrix(&self) -> String {
        let mut out = String::new();
        for (q, query) in self.queries.iter().enumerate() {
            let _ = write!(out, "{q:>3} p{:<2} {:<8} ", query.rel_pos, role_tag(query.role));
            for k in 0..self.queries.len() {
                let c = if k == q {
                    '*'
                } else if q != 0 && self.sees(q, k) {
                    'x'
                } else {
                    '.'
                };
                out.push(c);
            }
            out.push('\n');
        }
        out
    }
}

fn role_tag(role: QueryRole) -> String {
    match role {
        QueryRole::Confirmed => "in".to_string(),
        QueryRole::Window { level, column } => format!("w{level}.{column}"),
        QueryRole::Candidate { branch, offset } => format!("c{branch}.{offset}"),
        QueryRole::Other => "-".to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(token: Token, rel_pos: usize, visible: Vec<usize>) -> QueryToken {
        QueryToken {
            token,
            rel_pos,
            visible,
            role: QueryRole::Other,
        }
    }

    #[test]
    fn forward_reference_rejected() {
        let err = StepLayout::new(vec![q(0, 0, vec![]), q(1, 1, vec![2]), q(2, 2, vec![])]);
        assert!(matches!(err, Err(Error::InvalidLayout(_))));
    }

    #[test]
    fn cycle_rejected() {
        let err = StepLayout::new(vec![q(0, 0, vec![]), q(1, 1, vec![2]), q(2, 1, vec![1])]);
        assert!(matches!(err, Err(Error::InvalidLayout(_))));
    }

    #[test]
    fn ambiguous_chain_rejected() {
        let err = StepLayout::new(vec![
            q(0, 0, vec![]),
            q(1, 1, vec![]),
            q(2, 1, vec![]),
            q(3, 2, vec![1, 2]),
        ]);
        assert!(matches!(err, Err(Error::InvalidLayout(_))));
    }

    #[test]
    fn chain_layout_contexts() {
        let l = StepLayout::chain(9, &[1, 2, 3]);
        assert_eq!(l.len(), 4);
        assert_eq!(l.context_chain(3), vec![1, 2, 3]);
        assert_eq!(l.context_chain(0), Vec::<usize>::new());
        assert!(StepLayout::new(l.queries().to_vec()).is_ok());
    }

    #[test]
    fn restrict_requires_closure() {
        let l = StepLayout::chain(9, &[1, 2, 3]);
        assert!(l.restrict(&[0, 1, 2]).is_ok());
        assert!(l.restrict(&[0, 2]).is_err());
        assert!(l.restrict(&[1, 2]).is_err());
    }
}
