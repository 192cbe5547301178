//! Pre-norm transformer encoder with a two-way classification head read at
//! the `<s>` position. Forward and backward passes are written out by hand
//! in f64 so gradients can be checked against finite differences.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{AttentionStack, EncoderConfig};

const LN_EPS: f64 = 1e-5;
const INIT_STD: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub ln1_g: Array1<f64>,
    pub ln1_b: Array1<f64>,
    pub wq: Array2<f64>,
    pub bq: Array1<f64>,
    pub wk: Array2<f64>,
    pub bk: Array1<f64>,
    pub wv: Array2<f64>,
    pub bv: Array1<f64>,
    pub wo: Array2<f64>,
    pub bo: Array1<f64>,
    pub ln2_g: Array1<f64>,
    pub ln2_b: Array1<f64>,
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

/// All trainable weights plus the configuration that shapes them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: EncoderConfig,
    pub tok_emb: Array2<f64>,
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_g: Array1<f64>,
    pub lnf_b: Array1<f64>,
    pub w_cls: Array2<f64>,
    pub b_cls: Array1<f64>,
}

/// A named view of one parameter tensor.
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

macro_rules! layer_fields {
    ($mac:ident, $l:expr, $i:expr, $out:expr) => {
        $mac!($out, $l, $i, ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2)
    };
}

macro_rules! push_ref {
    ($out:expr, $l:expr, $i:expr, $($f:ident),*) => {
        $( $out.push(TensorRef {
            name: format!("layers.{}.{}", $i, stringify!($f)),
            shape: $l.$f.shape().to_vec(),
            data: $l.$f.as_slice().expect("standard layout"),
        }); )*
    };
}

macro_rules! push_mut {
    ($out:expr, $l:expr, $i:expr, $($f:ident),*) => {
        $( $out.push($l.$f.as_slice_mut().expect("standard layout")); )*
    };
}

impl ModelParams {
    /// Randomly initialized parameters for a vocabulary of `vocab_size`.
    pub fn init<R: Rng>(config: &EncoderConfig, vocab_size: usize, rng: &mut R) -> Self {
        let d = config.d_model;
        let normal = Normal::new(0.0, INIT_STD).expect("valid std");
        let mut mat = |r: usize, c: usize| Array2::from_shape_fn((r, c), |_| normal.sample(rng));
        let tok_emb = mat(vocab_size, d);
        let pos_emb = mat(config.max_seq_len, d);
        let layers = (0..config.num_layers)
            .map(|_| LayerParams {
                ln1_g: Array1::ones(d),
                ln1_b: Array1::zeros(d),
                wq: mat(d, d),
                bq: Array1::zeros(d),
                wk: mat(d, d),
                bk: Array1::zeros(d),
                wv: mat(d, d),
                bv: Array1::zeros(d),
                wo: mat(d, d),
                bo: Array1::zeros(d),
                ln2_g: Array1::ones(d),
                ln2_b: Array1::zeros(d),
                w1: mat(d, config.d_ff),
                b1: Array1::zeros(config.d_ff),
                w2: mat(config.d_ff, d),
                b2: Array1::zeros(d),
            })
            .collect();
        let w_cls = mat(d, 2);
        Self {
            config: config.clone(),
            tok_emb,
            pos_emb,
            layers,
            lnf_g: Array1::ones(d),
            lnf_b: Array1::zeros(d),
            w_cls,
            b_cls: Array1::zeros(2),
        }
    }

    /// Same shapes, every entry zero. Used for gradients and optimizer moments.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for t in z.tensors_mut() {
            t.fill(0.0);
        }
        z
    }

    pub fn vocab_size(&self) -> usize {
        self.tok_emb.nrows()
    }

    /// Every tensor in a fixed order with its name and shape.
    pub fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        out.push(TensorRef { name: "tok_emb".into(), shape: self.tok_emb.shape().to_vec(), data: self.tok_emb.as_slice().unwrap() });
        out.push(TensorRef { name: "pos_emb".into(), shape: self.pos_emb.shape().to_vec(), data: self.pos_emb.as_slice().unwrap() });
        for (i, l) in self.layers.iter().enumerate() {
            layer_fields!(push_ref, l, i, out);
        }
        out.push(TensorRef { name: "lnf_g".into(), shape: self.lnf_g.shape().to_vec(), data: self.lnf_g.as_slice().unwrap() });
        out.push(TensorRef { name: "lnf_b".into(), shape: self.lnf_b.shape().to_vec(), data: self.lnf_b.as_slice().unwrap() });
        out.push(TensorRef { name: "w_cls".into(), shape: self.w_cls.shape().to_vec(), data: self.w_cls.as_slice().unwrap() });
        out.push(TensorRef { name: "b_cls".into(), shape: self.b_cls.shape().to_vec(), data: self.b_cls.as_slice().unwrap() });
        out
    }

    /// Mutable slices in the same order as [`ModelParams::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        out.push(self.tok_emb.as_slice_mut().unwrap());
        out.push(self.pos_emb.as_slice_mut().unwrap());
        for l in self.layers.iter_mut() {
            layer_fields!(push_mut, l, (), out);
        }
        out.push(self.lnf_g.as_slice_mut().unwrap());
        out.push(self.lnf_b.as_slice_mut().unwrap());
        out.push(self.w_cls.as_slice_mut().unwrap());
        out.push(self.b_cls.as_slice_mut().unwrap());
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &ModelParams) {
        let src = other.tensors();
        for (dst, src) in self.tensors_mut().into_iter().zip(src) {
            for (a, b) in dst.iter_mut().zip(src.data) {
                *a += b;
            }
        }
    }

    /// Token embedding rows for `ids`.
    pub fn embed(&self, ids: &[usize]) -> Array2<f64> {
        self.tok_emb.select(Axis(0), ids)
    }

    /// Run the encoder on already-looked-up token embeddings (`[seq, d_model]`).
    /// Dropout is active only when `dropout_rng` is given.
    pub fn forward<R: Rng>(&self, tok_embs: &Array2<f64>, mut dropout_rng: Option<&mut R>) -> ForwardCache {
        let n = tok_embs.nrows();
        assert!(n >= 1 && n <= self.config.max_seq_len, "sequence length {n} out of range");
        let mut x = tok_embs + &self.pos_emb.slice(s![..n, ..]);
        let p = self.config.dropout;
        let mut layers = Vec::with_capacity(self.layers.len());
        for lp in &self.layers {
            let (cache, out) = self.layer_forward(lp, x, dropout_rng.as_deref_mut().map(|r| (r, p)));
            layers.push(cache);
            x = out;
        }
        let (z, lnf) = layer_norm(&x, &self.lnf_g, &self.lnf_b);
        let cls = z.row(0).to_owned();
        let logits_arr = cls.dot(&self.w_cls) + &self.b_cls;
        ForwardCache {
            layers,
            lnf,
            cls,
            logits: [logits_arr[0], logits_arr[1]],
        }
    }

    fn layer_forward<R: Rng>(
        &self,
        lp: &LayerParams,
        x: Array2<f64>,
        mut dropout: Option<(&mut R, f64)>,
    ) -> (LayerCache, Array2<f64>) {
        let heads = self.config.num_heads;
        let dh = self.config.d_model / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let (h, ln1) = layer_norm(&x, &lp.ln1_g, &lp.ln1_b);
        let q = h.dot(&lp.wq) + &lp.bq;
        let k = h.dot(&lp.wk) + &lp.bk;
        let v = h.dot(&lp.wv) + &lp.bv;
        let mut attn = Vec::with_capacity(heads);
        let mut o = Array2::zeros(x.raw_dim());
        for hd in 0..heads {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let scores = q.slice(cols).dot(&k.slice(cols).t()) * scale;
            let a = softmax_rows(scores);
            o.slice_mut(cols).assign(&a.dot(&v.slice(cols)));
            attn.push(a);
        }
        let a_out = o.dot(&lp.wo) + &lp.bo;
        let mask1 = dropout.as_mut().map(|(r, p)| dropout_mask(a_out.raw_dim(), *p, *r));
        let x1 = match &mask1 {
            Some(m) => &x + &(&a_out * m),
            None => &x + &a_out,
        };
        let (h2, ln2) = layer_norm(&x1, &lp.ln2_g, &lp.ln2_b);
        let u = h2.dot(&lp.w1) + &lp.b1;
        let gl = u.mapv(gelu);
        let f = gl.dot(&lp.w2) + &lp.b2;
        let mask2 = dropout.as_mut().map(|(r, p)| dropout_mask(f.raw_dim(), *p, *r));
        let out = match &mask2 {
            Some(m) => &x1 + &(&f * m),
            None => &x1 + &f,
        };
        let cache = LayerCache {
            ln1,
            h,
            q,
            k,
            v,
            attn,
            o,
            mask1,
            ln2,
            h2,
            u,
            gl,
            mask2,
        };
        (cache, out)
    }

    /// Backpropagate `dlogits` through a cached forward pass.
    ///
    /// Returns the gradient with respect to the token embeddings fed to
    /// [`ModelParams::forward`]. When `grads` is given, parameter gradients are
    /// accumulated into it; token-embedding rows are left to the caller, who
    /// knows which ids were looked up.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: [f64; 2],
        mut grads: Option<&mut ModelParams>,
    ) -> Array2<f64> {
        let d = self.config.d_model;
        let n = cache.lnf.xhat.nrows();
        let dlog = Array1::from(dlogits.to_vec());
        if let Some(g) = grads.as_deref_mut() {
            g.w_cls += &outer(&cache.cls, &dlog);
            g.b_cls += &dlog;
        }
        let dcls = self.w_cls.dot(&dlog);
        let mut dz = Array2::zeros((n, d));
        dz.row_mut(0).assign(&dcls);
        let mut dx = layer_norm_backward(
            &dz,
            &cache.lnf,
            &self.lnf_g,
            grads.as_deref_mut().map(|g| (&mut g.lnf_g, &mut g.lnf_b)),
        );
        for (li, lp) in self.layers.iter().enumerate().rev() {
            let lg = grads.as_deref_mut().map(|g| &mut g.layers[li]);
            dx = self.layer_backward(lp, &cache.layers[li], dx, lg);
        }
        if let Some(g) = grads {
            let mut pos = g.pos_emb.slice_mut(s![..n, ..]);
            pos += &dx;
        }
        dx
    }

    fn layer_backward(
        &self,
        lp: &LayerParams,
        c: &LayerCache,
        dout: Array2<f64>,
        mut g: Option<&mut LayerParams>,
    ) -> Array2<f64> {
        let heads = self.config.num_heads;
        let dh = self.config.d_model / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        // Feed-forward branch.
        let df = match &c.mask2 {
            Some(m) => &dout * m,
            None => dout.clone(),
        };
        if let Some(g) = g.as_deref_mut() {
            g.w2 += &c.gl.t().dot(&df);
            g.b2 += &df.sum_axis(Axis(0));
        }
        let dgl = df.dot(&lp.w2.t());
        let du = dgl * &c.u.mapv(gelu_grad);
        if let Some(g) = g.as_deref_mut() {
            g.w1 += &c.h2.t().dot(&du);
            g.b1 += &du.sum_axis(Axis(0));
        }
        let dh2 = du.dot(&lp.w1.t());
        let dx1 = dout
            + layer_norm_backward(
                &dh2,
                &c.ln2,
                &lp.ln2_g,
                g.as_deref_mut().map(|g| (&mut g.ln2_g, &mut g.ln2_b)),
            );

        // Attention branch.
        let da = match &c.mask1 {
            Some(m) => &dx1 * m,
            None => dx1.clone(),
        };
        if let Some(g) = g.as_deref_mut() {
            g.wo += &c.o.t().dot(&da);
            g.bo += &da.sum_axis(Axis(0));
        }
        let d_o = da.dot(&lp.wo.t());
        let mut dq = Array2::zeros(c.q.raw_dim());
        let mut dk = Array2::zeros(c.k.raw_dim());
        let mut dv = Array2::zeros(c.v.raw_dim());
        for (hd, a) in c.attn.iter().enumerate() {
            let cols = s![.., hd * dh..(hd + 1) * dh];
            let d_oh = d_o.slice(cols);
            let d_a = d_oh.dot(&c.v.slice(cols).t());
            dv.slice_mut(cols).assign(&a.t().dot(&d_oh));
            let row_dot = (&d_a * a).sum_axis(Axis(1)).insert_axis(Axis(1));
            let d_s = a * &(&d_a - &row_dot) * scale;
            dq.slice_mut(cols).assign(&d_s.dot(&c.k.slice(cols)));
            dk.slice_mut(cols).assign(&d_s.t().dot(&c.q.slice(cols)));
        }
        if let Some(g) = g.as_deref_mut() {
            let ht = c.h.t();
            g.wq += &ht.dot(&dq);
            g.wk += &ht.dot(&dk);
            g.wv += &ht.dot(&dv);
            g.bq += &dq.sum_axis(Axis(0));
            g.bk += &dk.sum_axis(Axis(0));
            g.bv += &dv.sum_axis(Axis(0));
        }
        let dh = dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
        dx1 + layer_norm_backward(&dh, &c.ln1, &lp.ln1_g, g.map(|g| (&mut g.ln1_g, &mut g.ln1_b)))
    }
}

#[derive(Debug, Clone)]
struct LnCache {
    xhat: Array2<f64>,
    inv_std: Array1<f64>,
}

#[derive(Debug, Clone)]
struct LayerCache {
    ln1: LnCache,
    h: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    attn: Vec<Array2<f64>>,
    o: Array2<f64>,
    mask1: Option<Array2<f64>>,
    ln2: LnCache,
    h2: Array2<f64>,
    u: Array2<f64>,
    gl: Array2<f64>,
    mask2: Option<Array2<f64>>,
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    layers: Vec<LayerCache>,
    lnf: LnCache,
    cls: Array1<f64>,
    pub logits: [f64; 2],
}

impl ForwardCache {
    pub fn seq_len(&self) -> usize {
        self.lnf.xhat.nrows()
    }

    pub fn probabilities(&self) -> [f64; 2] {
        let m = self.logits[0].max(self.logits[1]);
        let e0 = (self.logits[0] - m).exp();
        let e1 = (self.logits[1] - m).exp();
        [e0 / (e0 + e1), e1 / (e0 + e1)]
    }

    /// Post-softmax attention of every head in every layer.
    pub fn attention_stack(&self) -> AttentionStack {
        let n = self.seq_len();
        let heads = self.layers.first().map_or(0, |l| l.attn.len());
        let mut data = Vec::with_capacity(self.layers.len() * heads * n * n);
        for l in &self.layers {
            for a in &l.attn {
                data.extend(a.iter().copied());
            }
        }
        AttentionStack::from_flat(self.layers.len(), heads, n, data)
            .expect("attention shapes are consistent")
    }
}

fn layer_norm(x: &Array2<f64>, g: &Array1<f64>, b: &Array1<f64>) -> (Array2<f64>, LnCache) {
    let n = x.nrows();
    let mut xhat = Array2::zeros(x.raw_dim());
    let mut inv_std = Array1::zeros(n);
    for (i, row) in x.axis_iter(Axis(0)).enumerate() {
        let mean = row.mean().unwrap_or(0.0);
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / row.len() as f64;
        let is = 1.0 / (var + LN_EPS).sqrt();
        inv_std[i] = is;
        xhat.row_mut(i).assign(&row.mapv(|v| (v - mean) * is));
    }
    let y = &xhat * g + b;
    (y, LnCache { xhat, inv_std })
}

fn layer_norm_backward(
    dy: &Array2<f64>,
    c: &LnCache,
    g: &Array1<f64>,
    grads: Option<(&mut Array1<f64>, &mut Array1<f64>)>,
) -> Array2<f64> {
    if let Some((dg, db)) = grads {
        *dg += &(dy * &c.xhat).sum_axis(Axis(0));
        *db += &dy.sum_axis(Axis(0));
    }
    let dxhat = dy * g;
    let d = dy.ncols() as f64;
    let mut dx = Array2::zeros(dy.raw_dim());
    for i in 0..dy.nrows() {
        let dxh = dxhat.row(i);
        let xh = c.xhat.row(i);
        let mean_d = dxh.sum() / d;
        let mean_dx = dxh.dot(&xh) / d;
        let is = c.inv_std[i];
        dx.row_mut(i)
            .assign(&((&dxh - mean_d - &(&xh * mean_dx)) * is));
    }
    dx
}

fn softmax_rows(mut m: Array2<f64>) -> Array2<f64> {
    for mut row in m.axis_iter_mut(Axis(0)) {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    m
}

fn dropout_mask<R: Rng>(dim: ndarray::Ix2, p: f64, rng: &mut R) -> Array2<f64> {
    let keep = 1.0 - p;
    Array2::from_shape_simple_fn(dim, || if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let av: ArrayView2<f64> = a.view().insert_axis(Axis(1));
    let bv: ArrayView2<f64> = b.view().insert_axis(Axis(0));
    av.dot(&bv)
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + 0.044715 * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let t = (GELU_C * (u + 0.044715 * u * u * u)).tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * u * u)
}
