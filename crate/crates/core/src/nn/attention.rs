use ndarray::{s, Array2};

use super::{join, softmax_rows, Linear, Matrix, Module, Rng};

/// Unmasked multi-head self-attention over one sequence.
#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    heads: usize,
}

pub struct AttentionCache {
    x: Matrix,
    q: Matrix,
    k: Matrix,
    v: Matrix,
    probs: Vec<Matrix>,
    context: Matrix,
}

impl MultiHeadAttention {
    pub fn new(rng: &mut Rng, dim: usize, heads: usize) -> Self {
        assert!(heads > 0 && dim.is_multiple_of(heads), "width {dim} not divisible by {heads} heads");
        MultiHeadAttention {
            query: Linear::new(rng, dim, dim),
            key: Linear::new(rng, dim, dim),
            value: Linear::new(rng, dim, dim),
            output: Linear::new(rng, dim, dim),
            heads,
        }
    }

    pub fn heads(&self) -> usize {
        self.heads
    }

    fn head_dim(&self) -> usize {
        self.query.output_dim() / self.heads
    }

    pub fn forward(&self, x: &Matrix) -> (Matrix, AttentionCache) {
        let q = self.query.forward(&x.view());
        let k = self.key.forward(&x.view());
        let v = self.value.forward(&x.view());
        let dk = self.head_dim();
        let scale = 1.0 / (dk as f64).sqrt();
        let mut context = Array2::zeros(q.raw_dim());
        let mut probs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let cols = s![.., h * dk..(h + 1) * dk];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let p = softmax_rows(&scores);
            context.slice_mut(cols).assign(&p.dot(&v.slice(cols)));
            probs.push(p);
        }
        let out = self.output.forward(&context.view());
        let cache = AttentionCache {
            x: x.clone(),
            q,
            k,
            v,
            probs,
            context,
        };
        (out, cache)
    }

    pub fn backward(&self, cache: &AttentionCache, dy: &Matrix, grad: &mut MultiHeadAttention) -> Matrix {
        let dcontext = self.output.backward(&cache.context.view(), dy, &mut grad.output);
        let dk_width = self.head_dim();
        let scale = 1.0 / (dk_width as f64).sqrt();
        let mut dq = Array2::zeros(cache.q.raw_dim());
        let mut dk = Array2::zeros(cache.k.raw_dim());
        let mut dv = Array2::zeros(cache.v.raw_dim());
        for h in 0..self.heads {
            let cols = s![.., h * dk_width..(h + 1) * dk_width];
            let p = &cache.probs[h];
            let dc = dcontext.slice(cols);
            dv.slice_mut(cols).assign(&p.t().dot(&dc));
            let dp = dc.dot(&cache.v.slice(cols).t());
            // softmax backward, row by row
            let mut ds = &dp * p;
            for (mut row, prow) in ds.rows_mut().into_iter().zip(p.rows()) {
                let total = row.sum();
                row.zip_mut_with(&prow, |d, &pv| *d -= pv * total);
            }
            ds *= scale;
            dq.slice_mut(cols).assign(&ds.dot(&cache.k.slice(cols)));
            dk.slice_mut(cols).assign(&ds.t().dot(&cache.q.slice(cols)));
        }
        let x = cache.x.view();
        let mut dx = self.query.backward(&x, &dq, &mut grad.query);
        dx += &self.key.backward(&x, &dk, &mut grad.key);
        dx += &self.value.backward(&x, &dv, &mut grad.value);
        dx
    }
}

impl Module for MultiHeadAttention {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.query.visit(&join(prefix, "query"), f);
        self.key.visit(&join(prefix, "key"), f);
        self.value.visit(&join(prefix, "value"), f);
        self.output.visit(&join(prefix, "output"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.query.visit_mut(&join(prefix, "query"), f);
        self.key.visit_mut(&join(prefix, "key"), f);
        self.value.visit_mut(&join(prefix, "value"), f);
        self.output.visit_mut(&join(prefix, "output"), f);
    }
}
