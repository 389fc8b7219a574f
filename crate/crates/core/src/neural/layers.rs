//! Layers with hand-written backward passes.
//!
//! Every `backward` accumulates parameter gradients into a structurally
//! identical `grad` value and input gradients into caller-provided buffers.

use rand::Rng;

use super::{NeuralError, ParamList, ParamListMut, Tensor};
use crate::scalar::Scalar;

fn check_len(what: &str, got: usize, want: usize) -> Result<(), NeuralError> {
    if got == want {
        Ok(())
    } else {
        Err(NeuralError::ShapeMismatch(format!("{what}: expected length {want}, got {got}")))
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let mut out: Vec<T> = xs.iter().map(|&x| (x - m).exp()).collect();
    let s: T = out.iter().copied().sum();
    out.iter_mut().for_each(|v| *v /= s);
    out
}

/// Index of the largest value; the earliest index wins ties.
pub fn argmax<T: Scalar>(xs: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub w: Tensor<T>,
    pub b: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng>(input: usize, output: usize, rng: &mut R) -> Self {
        Self { w: Tensor::xavier(output, input, rng), b: Tensor::zeros(&[output]) }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn forward(&self, x: &[T]) -> Vec<T> {
        let mut y = self.b.values().to_vec();
        self.w.matvec_acc(x, &mut y);
        y
    }

    pub fn try_forward(&self, x: &[T]) -> Result<Vec<T>, NeuralError> {
        check_len("dense input", x.len(), self.input_dim())?;
        Ok(self.forward(x))
    }

    pub fn backward(&self, x: &[T], dy: &[T], grad: &mut Self, dx: Option<&mut [T]>) {
        grad.w.outer_acc(dy, x);
        grad.b.add_acc(dy);
        if let Some(dx) = dx {
            self.w.matvec_t_acc(dy, dx);
        }
    }

    pub(crate) fn params<'a>(&'a self, prefix: &str, out: &mut ParamList<'a, T>) {
        out.push((format!("{prefix}.w"), &self.w));
        out.push((format!("{prefix}.b"), &self.b));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, prefix: &str, out: &mut ParamListMut<'a, T>) {
        out.push((format!("{prefix}.w"), &mut self.w));
        out.push((format!("{prefix}.b"), &mut self.b));
    }
}

/// Gated recurrent unit with update gate `z`, reset gate `r` and candidate
/// state `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Gru<T> {
    pub w_z: Tensor<T>,
    pub u_z: Tensor<T>,
    pub b_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub u_r: Tensor<T>,
    pub b_r: Tensor<T>,
    pub w_c: Tensor<T>,
    pub u_c: Tensor<T>,
    pub b_c: Tensor<T>,
}

/// Forward values of one GRU step, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct GruStep<T> {
    pub h_prev: Vec<T>,
    pub z: Vec<T>,
    pub r: Vec<T>,
    pub c: Vec<T>,
    pub h: Vec<T>,
}

impl<T: Scalar> Gru<T> {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            w_z: Tensor::xavier(hidden, input, rng),
            u_z: Tensor::xavier(hidden, hidden, rng),
            b_z: Tensor::zeros(&[hidden]),
            w_r: Tensor::xavier(hidden, input, rng),
            u_r: Tensor::xavier(hidden, hidden, rng),
            b_r: Tensor::zeros(&[hidden]),
            w_c: Tensor::xavier(hidden, input, rng),
            u_c: Tensor::xavier(hidden, hidden, rng),
            b_c: Tensor::zeros(&[hidden]),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Tensor::zeros(&[hidden, input]),
            u_z: Tensor::zeros(&[hidden, hidden]),
            b_z: Tensor::zeros(&[hidden]),
            w_r: Tensor::zeros(&[hidden, input]),
            u_r: Tensor::zeros(&[hidden, hidden]),
            b_r: Tensor::zeros(&[hidden]),
            w_c: Tensor::zeros(&[hidden, input]),
            u_c: Tensor::zeros(&[hidden, hidden]),
            b_c: Tensor::zeros(&[hidden]),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows()
    }

    /// One step: `h = (1 - z)∘h_prev + z∘c`.
    pub fn step(&self, x: &[T], h_prev: &[T]) -> Result<Vec<T>, NeuralError> {
        check_len("gru input", x.len(), self.input_dim())?;
        check_len("gru state", h_prev.len(), self.hidden_dim())?;
        Ok(self.step_cached(x, h_prev).h)
    }

    fn step_cached(&self, x: &[T], h_prev: &[T]) -> GruStep<T> {
        let mut z = self.b_z.values().to_vec();
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = v.sigmoid());

        let mut r = self.b_r.values().to_vec();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = v.sigmoid());

        let rh: Vec<T> = r.iter().zip(h_prev).map(|(a, b)| *a * *b).collect();
        let mut c = self.b_c.values().to_vec();
        self.w_c.matvec_acc(x, &mut c);
        self.u_c.matvec_acc(&rh, &mut c);
        c.iter_mut().for_each(|v| *v = v.tanh());

        let h = (0..c.len()).map(|i| (T::one() - z[i]) * h_prev[i] + z[i] * c[i]).collect();
        GruStep { h_prev: h_prev.to_vec(), z, r, c, h }
    }

    /// Runs over `xs` from a zero initial state.
    pub fn run(&self, xs: &[&[T]]) -> Vec<GruStep<T>> {
        let mut h = vec![T::zero(); self.hidden_dim()];
        let mut steps = Vec::with_capacity(xs.len());
        for x in xs {
            let s = self.step_cached(x, &h);
            h.clone_from(&s.h);
            steps.push(s);
        }
        steps
    }

    /// Backpropagation through time. `dh_out[t]` is the loss gradient with
    /// respect to the state emitted at step `t`.
    pub fn backward(
        &self,
        xs: &[&[T]],
        steps: &[GruStep<T>],
        dh_out: &[Vec<T>],
        grad: &mut Self,
        mut dxs: Option<&mut [Vec<T>]>,
    ) {
        let hd = self.hidden_dim();
        let mut carry = vec![T::zero(); hd];
        for t in (0..steps.len()).rev() {
            let s = &steps[t];
            let x = xs[t];
            let dh: Vec<T> = dh_out[t].iter().zip(&carry).map(|(a, b)| *a + *b).collect();
            let mut dhp: Vec<T> = (0..hd).map(|i| dh[i] * (T::one() - s.z[i])).collect();

            let daz: Vec<T> = (0..hd)
                .map(|i| dh[i] * (s.c[i] - s.h_prev[i]) * s.z[i] * (T::one() - s.z[i]))
                .collect();
            let dac: Vec<T> = (0..hd).map(|i| dh[i] * s.z[i] * (T::one() - s.c[i] * s.c[i])).collect();

            let rh: Vec<T> = (0..hd).map(|i| s.r[i] * s.h_prev[i]).collect();
            grad.w_c.outer_acc(&dac, x);
            grad.u_c.outer_acc(&dac, &rh);
            grad.b_c.add_acc(&dac);
            let mut drh = vec![T::zero(); hd];
            self.u_c.matvec_t_acc(&dac, &mut drh);
            let dar: Vec<T> = (0..hd).map(|i| drh[i] * s.h_prev[i] * s.r[i] * (T::one() - s.r[i])).collect();
            for i in 0..hd {
                dhp[i] += drh[i] * s.r[i];
            }

            grad.w_z.outer_acc(&daz, x);
            grad.u_z.outer_acc(&daz, &s.h_prev);
            grad.b_z.add_acc(&daz);
            self.u_z.matvec_t_acc(&daz, &mut dhp);

            grad.w_r.outer_acc(&dar, x);
            grad.u_r.outer_acc(&dar, &s.h_prev);
            grad.b_r.add_acc(&dar);
            self.u_r.matvec_t_acc(&dar, &mut dhp);

            if let Some(dxs) = dxs.as_deref_mut() {
                let dx = &mut dxs[t];
                self.w_c.matvec_t_acc(&dac, dx);
                self.w_z.matvec_t_acc(&daz, dx);
                self.w_r.matvec_t_acc(&dar, dx);
            }
            carry = dhp;
        }
    }

    pub(crate) fn params<'a>(&'a self, p: &str, out: &mut ParamList<'a, T>) {
        for (n, t) in [
            ("w_z", &self.w_z),
            ("u_z", &self.u_z),
            ("b_z", &self.b_z),
            ("w_r", &self.w_r),
            ("u_r", &self.u_r),
            ("b_r", &self.b_r),
            ("w_c", &self.w_c),
            ("u_c", &self.u_c),
            ("b_c", &self.b_c),
        ] {
            out.push((format!("{p}.{n}"), t));
        }
    }

    pub(crate) fn params_mut<'a>(&'a mut self, p: &str, out: &mut ParamListMut<'a, T>) {
        for (n, t) in [
            ("w_z", &mut self.w_z),
            ("u_z", &mut self.u_z),
            ("b_z", &mut self.b_z),
            ("w_r", &mut self.w_r),
            ("u_r", &mut self.u_r),
            ("b_r", &mut self.b_r),
            ("w_c", &mut self.w_c),
            ("u_c", &mut self.u_c),
            ("b_c", &mut self.b_c),
        ] {
            out.push((format!("{p}.{n}"), t));
        }
    }
}

/// Two GRUs reading the sequence in opposite directions; the state at
/// position `t` is the concatenation `[forward_t; backward_t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiGru<T> {
    pub fwd: Gru<T>,
    pub bwd: Gru<T>,
}

#[derive(Debug, Clone)]
pub struct BiGruCache<T> {
    fwd: Vec<GruStep<T>>,
    bwd: Vec<GruStep<T>>,
    pub states: Vec<Vec<T>>,
}

impl<T: Scalar> BiGru<T> {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        Self { fwd: Gru::new(input, hidden, rng), bwd: Gru::new(input, hidden, rng) }
    }

    pub fn output_dim(&self) -> usize {
        self.fwd.hidden_dim() + self.bwd.hidden_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.fwd.input_dim()
    }

    pub fn forward(&self, xs: &[&[T]]) -> BiGruCache<T> {
        let fwd = self.fwd.run(xs);
        let rev: Vec<&[T]> = xs.iter().rev().copied().collect();
        let bwd = self.bwd.run(&rev);
        let n = xs.len();
        let states = (0..n)
            .map(|t| {
                let mut s = fwd[t].h.clone();
                s.extend_from_slice(&bwd[n - 1 - t].h);
                s
            })
            .collect();
        BiGruCache { fwd, bwd, states }
    }

    pub fn backward(
        &self,
        xs: &[&[T]],
        cache: &BiGruCache<T>,
        dstates: &[Vec<T>],
        grad: &mut Self,
        mut dxs: Option<&mut [Vec<T>]>,
    ) {
        let n = xs.len();
        let hf = self.fwd.hidden_dim();
        let df: Vec<Vec<T>> = dstates.iter().map(|d| d[..hf].to_vec()).collect();
        let db: Vec<Vec<T>> = dstates.iter().rev().map(|d| d[hf..].to_vec()).collect();
        self.fwd.backward(xs, &cache.fwd, &df, &mut grad.fwd, dxs.as_deref_mut());
        let rev: Vec<&[T]> = xs.iter().rev().copied().collect();
        match dxs {
            Some(dxs) => {
                let mut rdx = vec![vec![T::zero(); self.input_dim()]; n];
                self.bwd.backward(&rev, &cache.bwd, &db, &mut grad.bwd, Some(&mut rdx));
                for (t, d) in rdx.into_iter().enumerate() {
                    for (a, b) in dxs[n - 1 - t].iter_mut().zip(d) {
                        *a += b;
                    }
                }
            }
            None => self.bwd.backward(&rev, &cache.bwd, &db, &mut grad.bwd, None),
        }
    }

    pub(crate) fn params<'a>(&'a self, p: &str, out: &mut ParamList<'a, T>) {
        self.fwd.params(&format!("{p}.fwd"), out);
        self.bwd.params(&format!("{p}.bwd"), out);
    }

    pub(crate) fn params_mut<'a>(&'a mut self, p: &str, out: &mut ParamListMut<'a, T>) {
        self.fwd.params_mut(&format!("{p}.fwd"), out);
        self.bwd.params_mut(&format!("{p}.bwd"), out);
    }
}

/// Additive attention: `e_t = vᵀ tanh(W s_t + U q + b)`, weights are the
/// softmax of `e` and the context is the weighted sum of the states. `U` is
/// absent for query-free pooling.
#[derive(Debug, Clone, PartialEq)]
pub struct Attention<T> {
    pub w: Tensor<T>,
    pub u: Option<Tensor<T>>,
    pub b: Tensor<T>,
    pub v: Tensor<T>,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<T> {
    hidden: Vec<Vec<T>>,
    pub weights: Vec<T>,
    pub context: Vec<T>,
}

impl<T: Scalar> Attention<T> {
    pub fn new<R: Rng>(state_dim: usize, query_dim: Option<usize>, attn_dim: usize, rng: &mut R) -> Self {
        Self {
            w: Tensor::xavier(attn_dim, state_dim, rng),
            u: query_dim.map(|q| Tensor::xavier(attn_dim, q, rng)),
            b: Tensor::zeros(&[attn_dim]),
            v: Tensor::xavier(attn_dim, 1, rng),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn query_dim(&self) -> Option<usize> {
        self.u.as_ref().map(Tensor::cols)
    }

    /// Returns `(context, weights)`.
    pub fn attend(&self, states: &[Vec<T>], query: Option<&[T]>) -> Result<(Vec<T>, Vec<T>), NeuralError> {
        if states.is_empty() {
            return Err(NeuralError::ShapeMismatch("attention over zero states".into()));
        }
        for s in states {
            check_len("attention state", s.len(), self.state_dim())?;
        }
        match (query, self.query_dim()) {
            (Some(q), Some(d)) => check_len("attention query", q.len(), d)?,
            (None, None) => {}
            (Some(_), None) => return Err(NeuralError::ShapeMismatch("query given to query-free attention".into())),
            (None, Some(_)) => return Err(NeuralError::ShapeMismatch("attention needs a query".into())),
        }
        let c = self.forward(states, query);
        Ok((c.context, c.weights))
    }

    pub fn forward(&self, states: &[Vec<T>], query: Option<&[T]>) -> AttentionCache<T> {
        let mut base = self.b.values().to_vec();
        if let (Some(u), Some(q)) = (&self.u, query) {
            u.matvec_acc(q, &mut base);
        }
        let mut hidden = Vec::with_capacity(states.len());
        let mut scores = Vec::with_capacity(states.len());
        for s in states {
            let mut m = base.clone();
            self.w.matvec_acc(s, &mut m);
            m.iter_mut().for_each(|v| *v = v.tanh());
            scores.push(crate::scalar::dot(self.v.values(), &m));
            hidden.push(m);
        }
        let weights = softmax(&scores);
        let mut context = vec![T::zero(); self.state_dim()];
        for (a, s) in weights.iter().zip(states) {
            for (c, v) in context.iter_mut().zip(s) {
                *c += *a * *v;
            }
        }
        AttentionCache { hidden, weights, context }
    }

    pub fn backward(
        &self,
        states: &[Vec<T>],
        query: Option<&[T]>,
        cache: &AttentionCache<T>,
        dctx: &[T],
        grad: &mut Self,
        dstates: &mut [Vec<T>],
        dquery: Option<&mut [T]>,
    ) {
        let alpha = &cache.weights;
        let dalpha: Vec<T> = states.iter().map(|s| crate::scalar::dot(dctx, s)).collect();
        let mean: T = alpha.iter().zip(&dalpha).map(|(a, d)| *a * *d).sum();
        let mut dbase = vec![T::zero(); self.b.len()];
        for t in 0..states.len() {
            for (d, g) in dstates[t].iter_mut().zip(dctx) {
                *d += alpha[t] * *g;
            }
            let de = alpha[t] * (dalpha[t] - mean);
            let m = &cache.hidden[t];
            let dv: Vec<T> = m.iter().map(|x| de * *x).collect();
            grad.v.add_acc(&dv);
            let dpre: Vec<T> = m
                .iter()
                .zip(self.v.values())
                .map(|(x, v)| de * *v * (T::one() - *x * *x))
                .collect();
            grad.w.outer_acc(&dpre, &states[t]);
            self.w.matvec_t_acc(&dpre, &mut dstates[t]);
            for (a, b) in dbase.iter_mut().zip(&dpre) {
                *a += *b;
            }
        }
        grad.b.add_acc(&dbase);
        if let (Some(u), Some(gu), Some(q)) = (&self.u, grad.u.as_mut(), query) {
            gu.outer_acc(&dbase, q);
            if let Some(dq) = dquery {
                u.matvec_t_acc(&dbase, dq);
            }
        }
    }

    pub(crate) fn params<'a>(&'a self, p: &str, out: &mut ParamList<'a, T>) {
        out.push((format!("{p}.w"), &self.w));
        if let Some(u) = &self.u {
            out.push((format!("{p}.u"), u));
        }
        out.push((format!("{p}.b"), &self.b));
        out.push((format!("{p}.v"), &self.v));
    }

    pub(crate) fn params_mut<'a>(&'a mut self, p: &str, out: &mut ParamListMut<'a, T>) {
        out.push((format!("{p}.w"), &mut self.w));
        if let Some(u) = &mut self.u {
            out.push((format!("{p}.u"), u));
        }
        out.push((format!("{p}.b"), &mut self.b));
        out.push((format!("{p}.v"), &mut self.v));
    }
}

/// Lookup table of word vectors, one row per vocabulary id.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding<T> {
    pub table: Tensor<T>,
}

impl<T: Scalar> Embedding<T> {
    pub fn new<R: Rng>(vocab: usize, dim: usize, rng: &mut R) -> Self {
        Self { table: Tensor::uniform(&[vocab, dim], 0.5, rng) }
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn rows(&self, ids: &[usize]) -> Vec<&[T]> {
        ids.iter().map(|&i| self.table.row(i)).collect()
    }

    pub fn backward(&self, ids: &[usize], dxs: &[Vec<T>], grad: &mut Self) {
        for (&i, d) in ids.iter().zip(dxs) {
            for (a, b) in grad.table.row_mut(i).iter_mut().zip(d) {
                *a += *b;
            }
        }
    }
}
