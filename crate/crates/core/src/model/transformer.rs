//! A tiny decoder-only transformer with seeded random weights.
//!
//! Attention accumulates over keys in ascending absolute position, so the
//! output for a query depends only on the set of tokens it sees, never on
//! how queries are grouped into a layout. Feeding a chain of queries in one
//! call is therefore bit-identical to feeding the same tokens one at a
//! time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_tokens, LanguageModel};
use crate::error::{Error, Result};
use crate::layout::StepLayout;
use crate::sampling::session_rng;
use crate::token::{Distribution, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerDims {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
}

impl Default for TransformerDims {
    fn default() -> Self {
        Self {
            vocab_size: 32,
            d_model: 16,
            n_layers: 2,
            n_heads: 2,
            d_ff: 32,
        }
    }
}

/// Row-major `rows x cols` matrix.
#[derive(Debug, Clone)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    fn random<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Self {
        let data = (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0) * scale)
            .collect();
        Self { rows, cols, data }
    }

    /// `x · M` for a row vector `x` of length `rows`.
    fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        debug_assert_eq!(x.len(), self.rows);
        out.clear();
        out.resize(self.cols, 0.0);
        for (r, &xv) in x.iter().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += xv * w;
            }
        }
    }
}

#[derive(Debug, Clone)]
struct Block {
    wq: Matrix,
    wk: Matrix,
    wv: Matrix,
    wo: Matrix,
    w1: Matrix,
    b1: Vec<f64>,
    w2: Matrix,
    b2: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TinyTransformer {
    dims: TransformerDims,
    seed: u64,
    embed: Matrix,
    blocks: Vec<Block>,
    unembed: Matrix,
}

fn layer_norm(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let inv = 1.0 / (var + 1e-5).sqrt();
    x.iter().map(|v| (v - mean) * inv).collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (0.797_884_560_802_865_4 * (x + 0.044_715 * x * x * x)).tanh())
}

struct Node {
    token: Token,
    pos: usize,
    /// Node indices attended to, ascending by position, ending with self.
    keys: Vec<usize>,
}

impl TinyTransformer {
    pub fn new(seed: u64, dims: TransformerDims) -> Result<Self> {
        let TransformerDims {
            vocab_size,
            d_model,
            n_layers,
            n_heads,
            d_ff,
        } = dims;
        if vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 {
            return Err(Error::InvalidConfig("transformer dimensions must be positive".into()));
        }
        if d_model % n_heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "d_model {d_model} not divisible by {n_heads} heads"
            )));
        }
        let mut rng = session_rng(seed, 0x7f4a);
        let proj = (3.0 / d_model as f64).sqrt();
        let embed = Matrix::random(&mut rng, vocab_size, d_model, 1.0);
        let blocks = (0..n_layers)
            .map(|_| Block {
                wq: Matrix::random(&mut rng, d_model, d_model, proj),
                wk: Matrix::random(&mut rng, d_model, d_model, proj),
                wv: Matrix::random(&mut rng, d_model, d_model, proj),
                wo: Matrix::random(&mut rng, d_model, d_model, proj),
                w1: Matrix::random(&mut rng, d_model, d_ff, proj),
                b1: (0..d_ff).map(|_| rng.random_range(-0.1..0.1)).collect(),
                w2: Matrix::random(&mut rng, d_ff, d_model, (3.0 / d_ff as f64).sqrt()),
                b2: (0..d_model).map(|_| rng.random_range(-0.1..0.1)).collect(),
            })
            .collect();
        // Sharp-ish output distributions so greedy decoding is not all ties.
        let unembed = Matrix::random(&mut rng, d_model, vocab_size, 3.0 * proj);
        Ok(Self {
            dims,
            seed,
            embed,
            blocks,
            unembed,
        })
    }

    pub fn dims(&self) -> TransformerDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn positional(&self, pos: usize, out: &mut [f64]) {
        let d = self.dims.d_model;
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = pos as f64 / 10_000f64.powf(2.0 * pair / d as f64);
            out[i] += if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }

    fn run(&self, nodes: &[Node], outputs: &[usize]) -> Vec<Distribution> {
        let d = self.dims.d_model;
        let heads = self.dims.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x: Vec<Vec<f64>> = nodes
            .iter()
            .map(|n| {
                let row = &self.embed.data[n.token as usize * d..(n.token as usize + 1) * d];
                let mut v = row.to_vec();
                self.positional(n.pos, &mut v);
                v
            })
            .collect();

        let mut buf = Vec::new();
        let mut hidden = Vec::new();
        for block in &self.blocks {
            let normed: Vec<Vec<f64>> = x.iter().map(|v| layer_norm(v)).collect();
            let project = |m: &Matrix| -> Vec<Vec<f64>> {
                normed
                    .iter()
                    .map(|h| {
                        let mut o = Vec::new();
                        m.apply(h, &mut o);
                        o
                    })
                    .collect()
            };
            let q = project(&block.wq);
            let k = project(&block.wk);
            let v = project(&block.wv);

            for (n, node) in nodes.iter().enumerate() {
                let mut attn = vec![0.0; d];
                let mut scores = Vec::with_capacity(node.keys.len());
                for h in 0..heads {
                    let span = h * dh..(h + 1) * dh;
                    scores.clear();
                    for &key in &node.keys {
                        let s: f64 = q[n][span.clone()]
                            .iter()
                            .zip(&k[key][span.clone()])
                            .map(|(a, b)| a * b)
                            .sum();
                        scores.push(s * scale);
                    }
                    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut total = 0.0;
                    for s in scores.iter_mut() {
                        *s = (*s - max).exp();
                        total += *s;
                    }
                    for (&key, &w) in node.keys.iter().zip(&scores) {
                        let w = w / total;
                        for (a, vv) in attn[span.clone()].iter_mut().zip(&v[key][span.clone()]) {
                            *a += w * vv;
                        }
                    }
                }
                block.wo.apply(&attn, &mut buf);
                for (xi, o) in x[n].iter_mut().zip(&buf) {
                    *xi += o;
                }
            }

            for row in x.iter_mut() {
                let h = layer_norm(row);
                block.w1.apply(&h, &mut hidden);
                for (hv, b) in hidden.iter_mut().zip(&block.b1) {
                    *hv = gelu(*hv + b);
                }
                block.w2.apply(&hidden, &mut buf);
                for ((xi, o), b) in row.iter_mut().zip(&buf).zip(&block.b2) {
                    *xi += o + b;
                }
            }
        }

        outputs
            .iter()
            .map(|&n| {
                let h = layer_norm(&x[n]);
                self.unembed.apply(&h, &mut buf);
                Distribution::softmax(&buf)
            })
            .collect()
    }
}

impl LanguageModel for TinyTransformer {
    fn vocab_size(&self) -> usize {
        self.dims.vocab_size
    }

    fn forward(&self, context: &[Token], layout: &StepLayout) -> Result<Vec<Distribution>> {
        check_tokens(self.dims.vocab_size, context, layout)?;
        let c = context.len();
        let mut nodes: Vec<Node> = context
            .iter()
            .enumerate()
            .map(|(i, &token)| Node {
                token,
                pos: i,
                keys: (0..=i).collect(),
            })
            .collect();
        for (q, query) in layout.queries().iter().enumerate() {
            let mut keys: Vec<usize> = (0..c).collect();
            if q != 0 {
                keys.push(c);
            }
            keys.extend(layout.context_chain(q).into_iter().map(|i| c + i));
            if q == 0 {
                keys.push(c);
            }
            nodes.push(Node {
                token: query.token,
                pos: c + query.rel_pos,
                keys,
            });
        }
        let outputs: Vec<usize> = (c..c + layout.len()).collect();
        Ok(self.run(&nodes, &outputs))
    }
}
