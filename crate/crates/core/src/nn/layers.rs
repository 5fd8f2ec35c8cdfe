//! Transformer building blocks expressed as graph operations.

use rand::Rng;

use super::graph::{Graph, NodeId};
use super::params::{Init, ParamId, ParamStore};

#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut R) -> Linear {
        Linear {
            w: store.add(format!("{name}.w"), din, dout, Init::Xavier, rng),
            b: Some(store.add(format!("{name}.b"), 1, dout, Init::Zeros, rng)),
        }
    }

    pub fn without_bias<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, din: usize, dout: usize, rng: &mut R) -> Linear {
        Linear {
            w: store.add(format!("{name}.w"), din, dout, Init::Xavier, rng),
            b: None,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let w = g.param(self.w);
        let h = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(h, b)
            }
            None => h,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, rng: &mut R) -> LayerNorm {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), 1, d, Init::Ones, rng),
            beta: store.add(format!("{name}.beta"), 1, d, Init::Zeros, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let gamma = g.param(self.gamma);
        let beta = g.param(self.beta);
        g.layer_norm(x, gamma, beta)
    }
}

/// Multi-head scaled dot-product attention.
#[derive(Debug, Clone)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub n_heads: usize,
    pub d_model: usize,
}

impl Attention {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut R,
    ) -> Attention {
        Attention {
            q: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            // A key bias shifts every score of a query equally, which the
            // softmax cancels, so it would be a dead parameter.
            k: Linear::without_bias(store, &format!("{name}.k"), d_model, d_model, rng),
            v: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            o: Linear::new(store, &format!("{name}.o"), d_model, d_model, rng),
            n_heads,
            d_model,
        }
    }

    /// Queries from `x`, keys and values from `memory`.
    pub fn forward(&self, g: &mut Graph, x: NodeId, memory: NodeId, causal: bool) -> NodeId {
        let q = self.q.forward(g, x);
        let k = self.k.forward(g, memory);
        let v = self.v.forward(g, memory);
        let dh = self.d_model / self.n_heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let qh = g.col_slice(q, h * dh, dh);
            let kh = g.col_slice(k, h * dh, dh);
            let vh = g.col_slice(v, h * dh, dh);
            let scores = g.matmul_bt(qh, kh);
            let scores = g.scale(scores, scale);
            let weights = if causal { g.causal_softmax(scores) } else { g.softmax(scores) };
            let weights = g.dropout(weights);
            heads.push(g.matmul(weights, vh));
        }
        let joined = if heads.len() == 1 { heads[0] } else { g.concat_cols(&heads) };
        self.o.forward(g, joined)
    }
}

#[derive(Debug, Clone)]
pub struct FeedForward {
    pub up: Linear,
    pub down: Linear,
}

impl FeedForward {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, hidden: usize, rng: &mut R) -> FeedForward {
        FeedForward {
            up: Linear::new(store, &format!("{name}.up"), d, hidden, rng),
            down: Linear::new(store, &format!("{name}.down"), hidden, d, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let h = self.up.forward(g, x);
        let h = g.gelu(h);
        let h = g.dropout(h);
        self.down.forward(g, h)
    }
}

/// Post-norm encoder block: self-attention then feed-forward.
#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub attn: Attention,
    pub ln1: LayerNorm,
    pub ff: FeedForward,
    pub ln2: LayerNorm,
}

impl EncoderLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, n_heads: usize, rng: &mut R) -> EncoderLayer {
        EncoderLayer {
            attn: Attention::new(store, &format!("{name}.attn"), d, n_heads, rng),
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d, rng),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, 4 * d, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> NodeId {
        let a = self.attn.forward(g, x, x, false);
        let a = g.dropout(a);
        let x = g.add(x, a);
        let x = self.ln1.forward(g, x);
        let f = self.ff.forward(g, x);
        let f = g.dropout(f);
        let x = g.add(x, f);
        self.ln2.forward(g, x)
    }
}

/// Post-norm decoder block: causal self-attention, cross-attention over the
/// encoder states, feed-forward.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: Attention,
    pub ln1: LayerNorm,
    pub cross_attn: Attention,
    pub ln2: LayerNorm,
    pub ff: FeedForward,
    pub ln3: LayerNorm,
}

impl DecoderLayer {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, d: usize, n_heads: usize, rng: &mut R) -> DecoderLayer {
        DecoderLayer {
            self_attn: Attention::new(store, &format!("{name}.self_attn"), d, n_heads, rng),
            ln1: LayerNorm::new(store, &format!("{name}.ln1"), d, rng),
            cross_attn: Attention::new(store, &format!("{name}.cross_attn"), d, n_heads, rng),
            ln2: LayerNorm::new(store, &format!("{name}.ln2"), d, rng),
            ff: FeedForward::new(store, &format!("{name}.ff"), d, 4 * d, rng),
            ln3: LayerNorm::new(store, &format!("{name}.ln3"), d, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId, memory: NodeId) -> NodeId {
        let a = self.self_attn.forward(g, x, x, true);
        let a = g.dropout(a);
        let x = g.add(x, a);
        let x = self.ln1.forward(g, x);
        let c = self.cross_attn.forward(g, x, memory, false);
        let c = g.dropout(c);
        let x = g.add(x, c);
        let x = self.ln2.forward(g, x);
        let f = self.ff.forward(g, x);
        let f = g.dropout(f);
        let x = g.add(x, f);
        self.ln3.forward(g, x)
    }
}
