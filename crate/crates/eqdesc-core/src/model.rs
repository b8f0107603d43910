//! The image-description network: a small stride-2 conv encoder producing an
//! annotation grid, a soft-attention recurrent decoder (LSTM, GRU or plain
//! RNN cell), a deep-output word head, the training step and greedy / beam
//! decoding.
//!
//! Training processes each example on its own tape, fanning out across
//! threads; per-example gradients are reduced in index order, so results are
//! bit-identical for any thread count.

use crate::autodiff::{
    sgd_step, Graph, Scalar, SgdState, TensorData, TensorError, Var,
};
use crate::data::{mix_seed, END_ID, PAD_ID, START_ID};
use crate::exec;
use crate::layout::EqImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;

pub type Params<S> = BTreeMap<String, TensorData<S>>;
pub type GradMap<S> = BTreeMap<String, Vec<S>>;

type Result<T> = std::result::Result<T, TensorError>;

fn fail<T>(msg: impl Into<String>) -> Result<T> {
    Err(TensorError::Invalid {
        op: "model",
        msg: msg.into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellKind {
    Lstm,
    Gru,
    Rnn,
}

impl CellKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellKind::Lstm => "lstm",
            CellKind::Gru => "gru",
            CellKind::Rnn => "rnn",
        }
    }

    pub fn from_str(s: &str) -> Option<CellKind> {
        match s {
            "lstm" => Some(CellKind::Lstm),
            "gru" => Some(CellKind::Gru),
            "rnn" => Some(CellKind::Rnn),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub img_h: usize,
    pub img_w: usize,
    /// Hidden conv channel widths; a final conv to `feature_dim` is added,
    /// so the encoder has `enc_channels.len() + 1` stride-2 layers.
    pub enc_channels: Vec<usize>,
    pub feature_dim: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub attn_dim: usize,
    pub vocab_size: usize,
    pub t_max: usize,
    pub cell: CellKind,
    pub use_attention: bool,
    pub freeze_encoder: bool,
    pub dropout: f64,
}

impl ModelConfig {
    /// Desk-scale defaults; the paper-scale counterparts (512-d embeddings,
    /// 1024-d memory, a pretrained deep encoder) are far outside a CPU
    /// budget and are not the target here.
    pub fn desk_default(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            img_h: 64,
            img_w: 256,
            enc_channels: vec![16, 32, 64],
            feature_dim: 32,
            embed_dim: 48,
            hidden_dim: 96,
            attn_dim: 48,
            vocab_size,
            t_max: 40,
            cell: CellKind::Lstm,
            use_attention: true,
            freeze_encoder: false,
            dropout: 0.5,
        }
    }

    /// Smallest config exercising every code path (annotation grid 2x2);
    /// used by gradient checks.
    pub fn tiny(vocab_size: usize) -> ModelConfig {
        ModelConfig {
            img_h: 16,
            img_w: 16,
            enc_channels: vec![4, 6],
            feature_dim: 8,
            embed_dim: 8,
            hidden_dim: 16,
            attn_dim: 8,
            vocab_size,
            t_max: 3,
            cell: CellKind::Lstm,
            use_attention: true,
            freeze_encoder: false,
            dropout: 0.5,
        }
    }

    pub fn conv_layers(&self) -> usize {
        self.enc_channels.len() + 1
    }

    /// Annotation grid after the stride-2 stack.
    pub fn grid(&self) -> (usize, usize) {
        let s = 1 << self.conv_layers();
        (self.img_h / s, self.img_w / s)
    }

    /// Number of annotation positions L.
    pub fn num_positions(&self) -> usize {
        let (h, w) = self.grid();
        h * w
    }

    pub fn validate(&self) -> Result<()> {
        let s = 1 << self.conv_layers();
        if self.img_h % s != 0 || self.img_w % s != 0 {
            return fail(format!(
                "image {}x{} not divisible by the conv stack stride {s}",
                self.img_h, self.img_w
            ));
        }
        if self.num_positions() == 0 {
            return fail("annotation grid is empty");
        }
        if self.vocab_size < 4 {
            return fail("vocab must include the four special ids");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout {} outside [0,1)", self.dropout));
        }
        let dims = [
            self.feature_dim,
            self.embed_dim,
            self.hidden_dim,
            self.attn_dim,
            self.t_max,
        ];
        if dims.iter().any(|&d| d == 0) {
            return fail("all dimensions must be positive");
        }
        Ok(())
    }

    fn gate_names(&self) -> &'static [&'static str] {
        match self.cell {
            CellKind::Lstm => &["i", "f", "o", "g"],
            CellKind::Gru => &["r", "u", "h"],
            CellKind::Rnn => &["h"],
        }
    }

    /// Every parameter tensor's name and shape.
    pub fn param_shapes(&self) -> BTreeMap<String, Vec<usize>> {
        let mut m = BTreeMap::new();
        let (d, emb, n, np, k) = (
            self.feature_dim,
            self.embed_dim,
            self.hidden_dim,
            self.attn_dim,
            self.vocab_size,
        );
        let mut cin = 1;
        for (i, cout) in self
            .enc_channels
            .iter()
            .copied()
            .chain([d])
            .enumerate()
        {
            m.insert(format!("enc.conv{i}.w"), vec![cout, cin, 2, 2]);
            m.insert(format!("enc.conv{i}.b"), vec![cout]);
            cin = cout;
        }
        m.insert("embed.e".into(), vec![emb, k]);
        for gate in self.gate_names() {
            m.insert(format!("cell.{gate}.wy"), vec![n, emb]);
            m.insert(format!("cell.{gate}.uh"), vec![n, n]);
            m.insert(format!("cell.{gate}.vz"), vec![n, d]);
        }
        m.insert("attn.w".into(), vec![np, n]);
        m.insert("attn.u".into(), vec![d, np]);
        m.insert("attn.v".into(), vec![np]);
        m.insert("init.h.w".into(), vec![n, d]);
        m.insert("init.h.b".into(), vec![n]);
        if self.cell == CellKind::Lstm {
            m.insert("init.c.w".into(), vec![n, d]);
            m.insert("init.c.b".into(), vec![n]);
        }
        m.insert("out.wo".into(), vec![k, emb]);
        m.insert("out.wh".into(), vec![emb, n]);
        m.insert("out.wz".into(), vec![emb, d]);
        m
    }
}

fn name_seed(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        mix_seed(h, b as u64)
    })
}

/// Xavier-uniform initialization, independently seeded per tensor name;
/// biases start at zero.
pub fn init_params<S: Scalar>(cfg: &ModelConfig, seed: u64) -> Params<S> {
    let mut out = BTreeMap::new();
    for (name, shape) in cfg.param_shapes() {
        let n: usize = shape.iter().product();
        let data = if name.ends_with(".b") {
            vec![S::zero(); n]
        } else {
            let (fan_in, fan_out) = match shape.as_slice() {
                [co, ci, kh, kw] => (ci * kh * kw, co * kh * kw),
                [rows, cols] => {
                    if name == "embed.e" {
                        (shape[1], shape[0])
                    } else {
                        (*cols, *rows)
                    }
                }
                [len] => (*len, 1),
                _ => (n, n),
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, name_seed(&name)));
            (0..n)
                .map(|_| S::from_f64(rng.random_range(-limit..limit)))
                .collect()
        };
        out.insert(name, TensorData { shape, data });
    }
    out
}

/// Per-graph binding of every parameter to a leaf node.
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("unbound parameter {name}"))
    }
}

/// Install all parameters as leaves. Encoder leaves are non-differentiable
/// when the encoder is frozen.
pub fn bind<S: Scalar>(g: &mut Graph<S>, params: &Params<S>, cfg: &ModelConfig) -> Bound {
    let vars = params
        .iter()
        .map(|(name, t)| {
            let trainable = !(cfg.freeze_encoder && name.starts_with("enc."));
            (name.clone(), g.leaf(t, trainable))
        })
        .collect();
    Bound { vars }
}

fn image_leaf<S: Scalar>(g: &mut Graph<S>, cfg: &ModelConfig, img: &EqImage) -> Result<Var> {
    if (img.height as usize, img.width as usize) != (cfg.img_h, cfg.img_w) {
        return Err(TensorError::ShapeMismatch {
            op: "encode",
            lhs: vec![img.height as usize, img.width as usize],
            rhs: vec![cfg.img_h, cfg.img_w],
        });
    }
    // ink as signal: 1.0 where dark, 0.0 background
    let data: Vec<S> = img
        .pixels
        .iter()
        .map(|&p| S::from_f64(1.0 - p as f64))
        .collect();
    let t = TensorData {
        shape: vec![1, cfg.img_h, cfg.img_w],
        data,
    };
    Ok(g.leaf(&t, false))
}

/// Conv stack producing the `[L, D]` annotation grid.
pub fn encode<S: Scalar, R: Rng>(
    g: &mut Graph<S>,
    bound: &Bound,
    cfg: &ModelConfig,
    img: &EqImage,
    train: bool,
    dropout_rng: &mut R,
) -> Result<Var> {
    let mut x = image_leaf(g, cfg, img)?;
    for i in 0..cfg.conv_layers() {
        let w = bound.var(&format!("enc.conv{i}.w"));
        let b = bound.var(&format!("enc.conv{i}.b"));
        let conv = g.conv2d(x, w, Some(b), 2)?;
        let act = g.tanh(conv);
        x = g.dropout(act, cfg.dropout, train, dropout_rng)?;
    }
    g.channels_to_rows(x)
}

/// Initial decoder state from the mean annotation vector, one tanh layer
/// per head.
pub fn init_states<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    cfg: &ModelConfig,
    annotations: Var,
) -> Result<(Var, Option<Var>)> {
    let mean = g.mean_rows(annotations)?;
    let mk = |g: &mut Graph<S>, w: Var, b: Var| -> Result<Var> {
        let wx = g.matmul(w, mean)?;
        let pre = g.add(wx, b)?;
        Ok(g.tanh(pre))
    };
    let h0 = mk(g, bound.var("init.h.w"), bound.var("init.h.b"))?;
    let c0 = if cfg.cell == CellKind::Lstm {
        Some(mk(g, bound.var("init.c.w"), bound.var("init.c.b"))?)
    } else {
        None
    };
    Ok((h0, c0))
}

/// Attention: scores from the previous hidden state against each annotation
/// vector, softmax weights, and their convex combination as the context.
/// Without attention the weights are uniform.
pub fn attend<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    cfg: &ModelConfig,
    h_prev: Var,
    annotations: Var,
) -> Result<(Var, Var)> {
    let l = cfg.num_positions();
    let alpha = if cfg.use_attention {
        let wh = g.matmul(bound.var("attn.w"), h_prev)?;
        let au = g.matmul(annotations, bound.var("attn.u"))?;
        let pre = g.row_add(au, wh)?;
        let m = g.tanh(pre);
        let e = g.matmul(m, bound.var("attn.v"))?;
        g.softmax(e)?
    } else {
        let uniform = TensorData {
            shape: vec![l],
            data: vec![S::from_f64(1.0 / l as f64); l],
        };
        g.leaf(&uniform, false)
    };
    let z = g.matmul(alpha, annotations)?;
    Ok((alpha, z))
}

fn gate_preact<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    gate: &str,
    ey: Var,
    h: Var,
    z: Var,
) -> Result<Var> {
    let wy = g.matmul(bound.var(&format!("cell.{gate}.wy")), ey)?;
    let uh = g.matmul(bound.var(&format!("cell.{gate}.uh")), h)?;
    let vz = g.matmul(bound.var(&format!("cell.{gate}.vz")), z)?;
    let s = g.add(wy, uh)?;
    g.add(s, vz)
}

fn ones<S: Scalar>(g: &mut Graph<S>, n: usize) -> Var {
    g.leaf(
        &TensorData {
            shape: vec![n],
            data: vec![S::one(); n],
        },
        false,
    )
}

/// One recurrent step over (previous word embedding, state, context).
pub fn cell_step<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    cfg: &ModelConfig,
    y_prev: u32,
    h: Var,
    c: Option<Var>,
    z: Var,
) -> Result<(Var, Option<Var>)> {
    let ey = g.embed_col(bound.var("embed.e"), y_prev as usize)?;
    match cfg.cell {
        CellKind::Lstm => {
            let c = c.expect("lstm carries a memory state");
            let pi = gate_preact(g, bound, "i", ey, h, z)?;
            let i = g.sigmoid(pi);
            let pf = gate_preact(g, bound, "f", ey, h, z)?;
            let f = g.sigmoid(pf);
            let po = gate_preact(g, bound, "o", ey, h, z)?;
            let o = g.sigmoid(po);
            let pg = gate_preact(g, bound, "g", ey, h, z)?;
            let gate = g.tanh(pg);
            let fc = g.mul(f, c)?;
            let ig = g.mul(i, gate)?;
            let c_next = g.add(fc, ig)?;
            let tc = g.tanh(c_next);
            let h_next = g.mul(o, tc)?;
            Ok((h_next, Some(c_next)))
        }
        CellKind::Gru => {
            let pr = gate_preact(g, bound, "r", ey, h, z)?;
            let r = g.sigmoid(pr);
            let pu = gate_preact(g, bound, "u", ey, h, z)?;
            let u = g.sigmoid(pu);
            let rh = g.mul(r, h)?;
            let wy = g.matmul(bound.var("cell.h.wy"), ey)?;
            let uh = g.matmul(bound.var("cell.h.uh"), rh)?;
            let vz = g.matmul(bound.var("cell.h.vz"), z)?;
            let s = g.add(wy, uh)?;
            let pre = g.add(s, vz)?;
            let cand = g.tanh(pre);
            let one = ones(g, cfg.hidden_dim);
            let keep = g.sub(one, u)?;
            let kh = g.mul(keep, h)?;
            let uc = g.mul(u, cand)?;
            let h_next = g.add(kh, uc)?;
            Ok((h_next, None))
        }
        CellKind::Rnn => {
            let pre = gate_preact(g, bound, "h", ey, h, z)?;
            Ok((g.tanh(pre), None))
        }
    }
}

/// Deep-output head: probabilities from the previous word embedding, the
/// hidden state and the context vector.
pub fn word_distribution<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    y_prev: u32,
    h: Var,
    z: Var,
) -> Result<Var> {
    let ey = g.embed_col(bound.var("embed.e"), y_prev as usize)?;
    let wh = g.matmul(bound.var("out.wh"), h)?;
    let wz = g.matmul(bound.var("out.wz"), z)?;
    let s = g.add(ey, wh)?;
    let u = g.add(s, wz)?;
    let logits = g.matmul(bound.var("out.wo"), u)?;
    g.softmax(logits)
}

/// Teacher-forced loss sum over one example. Returns the scalar node and
/// the number of scored tokens.
fn example_graph<S: Scalar>(
    g: &mut Graph<S>,
    bound: &Bound,
    cfg: &ModelConfig,
    img: &EqImage,
    tokens: &[u32],
    train: bool,
    dropout_seed: u64,
) -> Result<(Var, usize)> {
    if tokens.len() < 2 {
        return fail("token sequence needs at least start and end");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let a = encode(g, bound, cfg, img, train, &mut rng)?;
    let (mut h, mut c) = init_states(g, bound, cfg, a)?;
    let mut loss: Option<Var> = None;
    let mut scored = 0usize;
    for t in 1..tokens.len() {
        let prev = tokens[t - 1];
        let target = tokens[t];
        if target == PAD_ID {
            break;
        }
        let (_alpha, z) = attend(g, bound, cfg, h, a)?;
        let (h2, c2) = cell_step(g, bound, cfg, prev, h, c, z)?;
        h = h2;
        c = c2;
        let p = word_distribution(g, bound, prev, h, z)?;
        let ce = g.cross_entropy(p, target as usize)?;
        loss = Some(match loss {
            Some(acc) => g.add(acc, ce)?,
            None => ce,
        });
        scored += 1;
    }
    Ok((loss.expect("at least one scored token"), scored))
}

/// Forward-only loss sum for one example.
pub fn example_loss<S: Scalar>(
    params: &Params<S>,
    cfg: &ModelConfig,
    img: &EqImage,
    tokens: &[u32],
    train: bool,
    dropout_seed: u64,
) -> Result<(f64, usize)> {
    let mut g = Graph::new();
    let bound = bind(&mut g, params, cfg);
    let (loss, n) = example_graph(&mut g, &bound, cfg, img, tokens, train, dropout_seed)?;
    Ok((Scalar::to_f64(g.scalar_value(loss)), n))
}

/// Loss sum plus parameter gradients for one example. Frozen parameters get
/// explicit zero gradients.
pub fn example_loss_grads<S: Scalar>(
    params: &Params<S>,
    cfg: &ModelConfig,
    img: &EqImage,
    tokens: &[u32],
    train: bool,
    dropout_seed: u64,
) -> Result<(f64, GradMap<S>, usize)> {
    let mut g = Graph::new();
    let bound = bind(&mut g, params, cfg);
    let (loss, n) = example_graph(&mut g, &bound, cfg, img, tokens, train, dropout_seed)?;
    let grads = g.backward(loss)?;
    let mut out = BTreeMap::new();
    for (name, t) in params {
        let v = bound.var(name);
        let gvec = grads
            .get(v)
            .map(|s| s.to_vec())
            .unwrap_or_else(|| vec![S::zero(); t.len()]);
        out.insert(name.clone(), gvec);
    }
    Ok((Scalar::to_f64(g.scalar_value(loss)), out, n))
}

/// A training batch: rows padded to the longest sequence with the pad id.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Vec<EqImage>,
    pub padded_tokens: Vec<Vec<u32>>,
    lengths: Vec<usize>,
}

impl Batch {
    pub fn new(examples: Vec<(EqImage, Vec<u32>)>) -> Batch {
        let max_len = examples.iter().map(|(_, t)| t.len()).max().unwrap_or(0);
        let mut images = Vec::with_capacity(examples.len());
        let mut padded = Vec::with_capacity(examples.len());
        let mut lengths = Vec::with_capacity(examples.len());
        for (img, mut toks) in examples {
            lengths.push(toks.len());
            toks.resize(max_len, PAD_ID);
            images.push(img);
            padded.push(toks);
        }
        Batch {
            images,
            padded_tokens: padded,
            lengths,
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    fn tokens(&self, i: usize) -> &[u32] {
        &self.padded_tokens[i][..self.lengths[i]]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Hyper {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Global L2 clip on the batch gradient; 0 disables clipping.
    pub clip_norm: f64,
}

impl Hyper {
    /// Calibrated for the desk-scale corpora: the token-mean loss at this
    /// model size needs a far larger step than paper-scale training,
    /// momentum 0.9 roughly halves the epochs to convergence, and recurrent
    /// gradients need the clip to survive the higher rate.
    pub fn desk_default() -> Hyper {
        Hyper {
            lr: 0.3,
            momentum: 0.9,
            weight_decay: 1e-4,
            clip_norm: 5.0,
        }
    }
}

/// One SGD step over a batch: per-example losses and gradients in parallel,
/// fixed-order reduction, token-mean scaling, then the parameter update.
/// Returns the mean loss per scored token.
pub fn train_step<S: Scalar>(
    params: &mut Params<S>,
    opt: &mut SgdState<S>,
    cfg: &ModelConfig,
    batch: &Batch,
    hyper: &Hyper,
    step_seed: u64,
) -> Result<f64> {
    if batch.is_empty() {
        return fail("empty batch");
    }
    let results: Vec<Result<(f64, GradMap<S>, usize)>> = exec::map_indexed(batch.len(), |i| {
        example_loss_grads(
            params,
            cfg,
            &batch.images[i],
            batch.tokens(i),
            true,
            mix_seed(step_seed, i as u64),
        )
    });
    let mut total_loss = 0.0f64;
    let mut total_tokens = 0usize;
    let mut acc: Option<GradMap<S>> = None;
    for r in results {
        let (loss, grads, n) = r?;
        total_loss += loss;
        total_tokens += n;
        match &mut acc {
            None => acc = Some(grads),
            Some(a) => {
                for (name, g) in grads {
                    let slot = a.get_mut(&name).expect("same parameter set");
                    for (x, y) in slot.iter_mut().zip(&g) {
                        *x += *y;
                    }
                }
            }
        }
    }
    let mut grads = acc.expect("non-empty batch");
    let mut scale = 1.0 / total_tokens as f64;
    if hyper.clip_norm > 0.0 {
        let sq_sum: f64 = grads
            .values()
            .flat_map(|g| g.iter())
            .map(|v| {
                let x = Scalar::to_f64(*v) * scale;
                x * x
            })
            .sum();
        let norm = sq_sum.sqrt();
        if norm > hyper.clip_norm {
            scale *= hyper.clip_norm / norm;
        }
    }
    let scale = S::from_f64(scale);
    for g in grads.values_mut() {
        for v in g.iter_mut() {
            *v *= scale;
        }
    }
    sgd_step(
        params,
        &grads,
        opt,
        S::from_f64(hyper.lr),
        S::from_f64(hyper.momentum),
        S::from_f64(hyper.weight_decay),
    )?;
    Ok(total_loss / total_tokens as f64)
}

/// Anything the search can drive: a start state and a scored step.
pub trait DecodeModel {
    type State: Clone;
    fn vocab_size(&self) -> usize;
    fn start_state(&self) -> Result<Self::State>;
    /// Log-probabilities over the vocabulary plus the successor state.
    fn step(&self, state: &Self::State, prev_token: u32) -> Result<(Vec<f64>, Self::State)>;
}

/// Decoder state values outside any graph.
#[derive(Debug, Clone)]
pub struct NetState<S> {
    pub h: Vec<S>,
    pub c: Option<Vec<S>>,
}

/// Diagnostics of one decode step, for invariant checks.
#[derive(Debug, Clone)]
pub struct StepInfo {
    pub alpha: Vec<f64>,
    pub context: Vec<f64>,
    pub probs: Vec<f64>,
}

/// The trained network plus one image's precomputed annotations. The
/// parameters are bound once into an internal forward-only tape that grows
/// as steps are taken, so a decode step costs only its own arithmetic.
pub struct NetDecoder<'a, S: Scalar> {
    cfg: &'a ModelConfig,
    annotations: TensorData<S>,
    inner: std::cell::RefCell<(Graph<S>, Bound, Var)>,
}

impl<'a, S: Scalar> NetDecoder<'a, S> {
    pub fn new(params: &'a Params<S>, cfg: &'a ModelConfig, img: &EqImage) -> Result<Self> {
        cfg.validate()?;
        let mut g = Graph::new();
        let bound = bind(&mut g, params, cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = encode(&mut g, &bound, cfg, img, false, &mut rng)?;
        let annotations = TensorData {
            shape: g.shape(a).to_vec(),
            data: g.values(a).to_vec(),
        };
        Ok(NetDecoder {
            cfg,
            annotations,
            inner: std::cell::RefCell::new((g, bound, a)),
        })
    }

    pub fn annotations(&self) -> &TensorData<S> {
        &self.annotations
    }

    /// One step with full diagnostics.
    pub fn step_full(&self, state: &NetState<S>, prev: u32) -> Result<(StepInfo, NetState<S>)> {
        let mut inner = self.inner.borrow_mut();
        let (g, bound, a) = &mut *inner;
        let a = *a;
        let h = g.leaf(
            &TensorData {
                shape: vec![state.h.len()],
                data: state.h.clone(),
            },
            false,
        );
        let c = state.c.as_ref().map(|c| {
            g.leaf(
                &TensorData {
                    shape: vec![c.len()],
                    data: c.clone(),
                },
                false,
            )
        });
        let (alpha, z) = attend(g, bound, self.cfg, h, a)?;
        let (h2, c2) = cell_step(g, bound, self.cfg, prev, h, c, z)?;
        let p = word_distribution(g, bound, prev, h2, z)?;
        let info = StepInfo {
            alpha: g.values(alpha).iter().map(|v| Scalar::to_f64(*v)).collect(),
            context: g.values(z).iter().map(|v| Scalar::to_f64(*v)).collect(),
            probs: g.values(p).iter().map(|v| Scalar::to_f64(*v)).collect(),
        };
        let next = NetState {
            h: g.values(h2).to_vec(),
            c: c2.map(|c| g.values(c).to_vec()),
        };
        Ok((info, next))
    }
}

impl<'a, S: Scalar> DecodeModel for NetDecoder<'a, S> {
    type State = NetState<S>;

    fn vocab_size(&self) -> usize {
        self.cfg.vocab_size
    }

    fn start_state(&self) -> Result<NetState<S>> {
        let mut inner = self.inner.borrow_mut();
        let (g, bound, a) = &mut *inner;
        let a = *a;
        let (h0, c0) = init_states(g, bound, self.cfg, a)?;
        Ok(NetState {
            h: g.values(h0).to_vec(),
            c: c0.map(|c| g.values(c).to_vec()),
        })
    }

    fn step(&self, state: &NetState<S>, prev: u32) -> Result<(Vec<f64>, NetState<S>)> {
        let (info, next) = self.step_full(state, prev)?;
        Ok((info.probs.iter().map(|p| p.ln()).collect(), next))
    }
}

/// Greedy decoding: argmax word each step (ties to the lowest id), stopping
/// at the end token or `t_max`. The end token is not included.
pub fn greedy_decode_with<M: DecodeModel>(model: &M, t_max: usize) -> Result<Vec<u32>> {
    let mut state = model.start_state()?;
    let mut prev = START_ID;
    let mut out = Vec::new();
    for _ in 0..t_max {
        let (logp, next) = model.step(&state, prev)?;
        let mut best = 0usize;
        for (i, &v) in logp.iter().enumerate() {
            if v > logp[best] {
                best = i;
            }
        }
        let tok = best as u32;
        if tok == END_ID {
            return Ok(out);
        }
        out.push(tok);
        prev = tok;
        state = next;
    }
    Ok(out)
}

/// Total log-probability of forcing `tokens ++ [end]` through the model.
pub fn sequence_logp<M: DecodeModel>(model: &M, tokens: &[u32]) -> Result<f64> {
    let mut state = model.start_state()?;
    let mut prev = START_ID;
    let mut total = 0.0;
    for &tok in tokens.iter().chain([&END_ID]) {
        let (logp, next) = model.step(&state, prev)?;
        total += logp[tok as usize];
        prev = tok;
        state = next;
    }
    Ok(total)
}

#[derive(Clone)]
struct Hypothesis<St> {
    tokens: Vec<u32>,
    logp: f64,
    state: St,
}

/// Beam search. Every live hypothesis expands over the full vocabulary; the
/// `beam` best by cumulative log-probability are kept, finished ones moving
/// to the completed set. Ties break by log-probability then lexicographic
/// token ids. Returns the best completed hypothesis (token ids without the
/// end token) and its log-probability, falling back to the best partial one
/// if nothing completed within `t_max`.
pub fn beam_decode_with<M: DecodeModel>(
    model: &M,
    beam: usize,
    t_max: usize,
) -> Result<(Vec<u32>, f64)> {
    if beam == 0 {
        return fail("beam must be at least 1");
    }
    let k = model.vocab_size();
    let mut live = vec![Hypothesis {
        tokens: Vec::new(),
        logp: 0.0,
        state: model.start_state()?,
    }];
    let mut completed: Vec<(Vec<u32>, f64)> = Vec::new();
    for _ in 0..t_max {
        if live.is_empty() {
            break;
        }
        let mut candidates: Vec<Hypothesis<M::State>> = Vec::with_capacity(live.len() * k);
        for hyp in &live {
            let prev = hyp.tokens.last().copied().unwrap_or(START_ID);
            let (logp, next) = model.step(&hyp.state, prev)?;
            for (tok, lp) in logp.iter().enumerate() {
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok as u32);
                candidates.push(Hypothesis {
                    tokens,
                    logp: hyp.logp + lp,
                    state: next.clone(),
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.logp
                .total_cmp(&a.logp)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        live = Vec::with_capacity(beam);
        for hyp in candidates.into_iter().take(beam) {
            if *hyp.tokens.last().unwrap() == END_ID {
                let mut tokens = hyp.tokens;
                tokens.pop();
                completed.push((tokens, hyp.logp));
            } else {
                live.push(hyp);
            }
        }
    }
    completed.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    if let Some(best) = completed.into_iter().next() {
        return Ok(best);
    }
    live.sort_by(|a, b| {
        b.logp
            .total_cmp(&a.logp)
            .then_with(|| a.tokens.cmp(&b.tokens))
    });
    match live.into_iter().next() {
        Some(h) => Ok((h.tokens, h.logp)),
        None => fail("nothing decoded"),
    }
}

/// Greedy decoding of one image under the trained parameters.
pub fn greedy_decode<S: Scalar>(
    params: &Params<S>,
    cfg: &ModelConfig,
    img: &EqImage,
    t_max: usize,
) -> Result<Vec<u32>> {
    let dec = NetDecoder::new(params, cfg, img)?;
    greedy_decode_with(&dec, t_max)
}

/// Beam-search decoding of one image under the trained parameters.
pub fn beam_decode<S: Scalar>(
    params: &Params<S>,
    cfg: &ModelConfig,
    img: &EqImage,
    beam: usize,
    t_max: usize,
) -> Result<(Vec<u32>, f64)> {
    let dec = NetDecoder::new(params, cfg, img)?;
    beam_decode_with(&dec, beam, t_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::UNK_ID;
    use crate::expr::{sample_equation, Category};
    use crate::layout::render;
    use crate::verbalize::verbalize;

    fn white(cfg: &ModelConfig) -> EqImage {
        EqImage::blank(cfg.img_h as u32, cfg.img_w as u32)
    }

    fn toy_tokens() -> Vec<u32> {
        vec![START_ID, 5, 7, 4, END_ID]
    }

    /// Zero every weight, then make the start-token embedding drive the end
    /// token's logit sky-high through the deep output.
    fn rig_end_token(params: &mut Params<f64>, cfg: &ModelConfig) {
        for t in params.values_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let k = cfg.vocab_size;
        let e = params.get_mut("embed.e").unwrap();
        for i in 0..cfg.embed_dim {
            e.data[i * k + START_ID as usize] = 1.0;
        }
        let wo = params.get_mut("out.wo").unwrap();
        let m = cfg.embed_dim;
        for j in 0..m {
            wo.data[END_ID as usize * m + j] = 100.0;
        }
    }

    #[test]
    fn desk_grid_shape() {
        let cfg = ModelConfig::desk_default(90);
        assert_eq!(cfg.conv_layers(), 4);
        assert_eq!(cfg.grid(), (4, 16));
        assert_eq!(cfg.num_positions(), 64);
        cfg.validate().unwrap();
    }

    #[test]
    fn encode_output_shape_and_finiteness() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 0);
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let img = white(&cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = encode(&mut g, &bound, &cfg, &img, false, &mut rng).unwrap();
        assert_eq!(g.shape(a), [cfg.num_positions(), cfg.feature_dim]);
        assert!(g.values(a).iter().all(|v| v.is_finite()));
    }

    #[test]
    fn encode_rejects_wrong_image_size() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 0);
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let img = EqImage::blank(32, 16);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(encode(&mut g, &bound, &cfg, &img, false, &mut rng).is_err());
    }

    #[test]
    fn frozen_encoder_has_exactly_zero_grads() {
        let mut cfg = ModelConfig::tiny(12);
        cfg.freeze_encoder = true;
        let params: Params<f64> = init_params(&cfg, 1);
        let (_, grads, _) =
            example_loss_grads(&params, &cfg, &white(&cfg), &toy_tokens(), true, 3).unwrap();
        for (name, g) in &grads {
            if name.starts_with("enc.") {
                assert!(g.iter().all(|&v| v == 0.0), "{name} has nonzero grad");
            }
        }
        // and the decoder still learns
        assert!(grads["out.wo"].iter().any(|&v| v != 0.0));
    }

    #[test]
    fn finetuned_encoder_gets_nonzero_grads() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 1);
        let (_, grads, _) =
            example_loss_grads(&params, &cfg, &white(&cfg), &toy_tokens(), true, 3).unwrap();
        let enc_norm: f64 = grads
            .iter()
            .filter(|(n, _)| n.starts_with("enc."))
            .flat_map(|(_, g)| g.iter())
            .map(|v| v.abs())
            .sum();
        assert!(enc_norm > 0.0);
    }

    #[test]
    fn init_state_mean_of_identical_rows() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 2);
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let l = cfg.num_positions();
        let row: Vec<f64> = (0..cfg.feature_dim).map(|i| 0.1 * i as f64 - 0.3).collect();
        let mut data = Vec::new();
        for _ in 0..l {
            data.extend_from_slice(&row);
        }
        let a = g.leaf(
            &TensorData::new(vec![l, cfg.feature_dim], data).unwrap(),
            false,
        );
        let mean = g.mean_rows(a).unwrap();
        for (m, r) in g.values(mean).iter().zip(&row) {
            assert!((m - r).abs() < 1e-12, "mean of identical rows is the row");
        }
        let (h0, c0) = init_states(&mut g, &bound, &cfg, a).unwrap();
        // cross-check against a by-hand tanh(W mean + b)
        let w = &params["init.h.w"];
        let b = &params["init.h.b"];
        for i in 0..cfg.hidden_dim {
            let pre: f64 = (0..cfg.feature_dim)
                .map(|j| w.data[i * cfg.feature_dim + j] * row[j])
                .sum::<f64>()
                + b.data[i];
            assert!((g.values(h0)[i] - pre.tanh()).abs() < 1e-12);
        }
        assert!(c0.is_some());
    }

    #[test]
    fn zero_annotations_zero_bias_give_zero_state() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 3);
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let a = g.leaf(
            &TensorData::zeros(vec![cfg.num_positions(), cfg.feature_dim]),
            false,
        );
        let (h0, _) = init_states(&mut g, &bound, &cfg, a).unwrap();
        assert!(g.values(h0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn attention_uniform_when_scores_equal() {
        let cfg = ModelConfig::tiny(12);
        // zero parameters make every score zero
        let mut params: Params<f64> = init_params(&cfg, 4);
        for (name, t) in params.iter_mut() {
            if name.starts_with("attn.") {
                t.data.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let l = cfg.num_positions();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a_data: Vec<f64> = (0..l * cfg.feature_dim)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let a = g.leaf(
            &TensorData::new(vec![l, cfg.feature_dim], a_data.clone()).unwrap(),
            false,
        );
        let h = g.leaf(&TensorData::zeros(vec![cfg.hidden_dim]), false);
        let (alpha, z) = attend(&mut g, &bound, &cfg, h, a).unwrap();
        for &w in g.values(alpha) {
            assert!((w - 1.0 / l as f64).abs() < 1e-12);
        }
        // context equals the column mean
        for d in 0..cfg.feature_dim {
            let mean: f64 =
                (0..l).map(|i| a_data[i * cfg.feature_dim + d]).sum::<f64>() / l as f64;
            assert!((g.values(z)[d] - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_concentrates_on_dominant_score() {
        let mut cfg = ModelConfig::tiny(12);
        cfg.feature_dim = 1;
        cfg.attn_dim = 1;
        let mut params: Params<f64> = init_params(&cfg, 6);
        params.insert("attn.w".into(), TensorData::zeros(vec![1, cfg.hidden_dim]));
        params.insert(
            "attn.u".into(),
            TensorData::new(vec![1, 1], vec![1.0]).unwrap(),
        );
        params.insert("attn.v".into(), TensorData::new(vec![1], vec![50.0]).unwrap());
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let l = cfg.num_positions();
        let mut a_data = vec![0.0; l];
        a_data[1] = 5.0; // tanh(5) ~ 1, so its score is ~50 while others are 0
        let a = g.leaf(&TensorData::new(vec![l, 1], a_data).unwrap(), false);
        let h = g.leaf(&TensorData::zeros(vec![cfg.hidden_dim]), false);
        let (alpha, _) = attend(&mut g, &bound, &cfg, h, a).unwrap();
        assert!(g.values(alpha)[1] > 0.999, "alpha = {:?}", g.values(alpha));
    }

    #[test]
    fn context_stays_in_annotation_hull() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 7);
        for seed in 0..50u64 {
            let mut g = Graph::new();
            let bound = bind(&mut g, &params, &cfg);
            let l = cfg.num_positions();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a_data: Vec<f64> = (0..l * cfg.feature_dim)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let a = g.leaf(
                &TensorData::new(vec![l, cfg.feature_dim], a_data.clone()).unwrap(),
                false,
            );
            let h_data: Vec<f64> = (0..cfg.hidden_dim)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect();
            let h = g.leaf(
                &TensorData::new(vec![cfg.hidden_dim], h_data).unwrap(),
                false,
            );
            let (alpha, z) = attend(&mut g, &bound, &cfg, h, a).unwrap();
            let asum: f64 = g.values(alpha).iter().sum();
            assert!((asum - 1.0).abs() < 1e-9);
            assert!(g.values(alpha).iter().all(|&v| v >= 0.0));
            for d in 0..cfg.feature_dim {
                let col: Vec<f64> = (0..l).map(|i| a_data[i * cfg.feature_dim + d]).collect();
                let lo = col.iter().cloned().fold(f64::MAX, f64::min) - 1e-9;
                let hi = col.iter().cloned().fold(f64::MIN, f64::max) + 1e-9;
                let zv = g.values(z)[d];
                assert!(zv >= lo && zv <= hi, "context outside hull");
            }
        }
    }

    #[test]
    fn lstm_step_with_zero_weights_halves_memory() {
        let cfg = ModelConfig::tiny(12);
        let mut params: Params<f64> = init_params(&cfg, 8);
        for t in params.values_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let n = cfg.hidden_dim;
        let c_prev: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let h = g.leaf(&TensorData::zeros(vec![n]), false);
        let c = g.leaf(&TensorData::new(vec![n], c_prev.clone()).unwrap(), false);
        let z = g.leaf(&TensorData::zeros(vec![cfg.feature_dim]), false);
        let (h2, c2) = cell_step(&mut g, &bound, &cfg, 5, h, Some(c), z).unwrap();
        let c2v = g.values(c2.unwrap()).to_vec();
        for (got, prev) in c2v.iter().zip(&c_prev) {
            assert!((got - 0.5 * prev).abs() < 1e-12, "c' = f*c with f = 0.5");
        }
        for (got, cnew) in g.values(h2).iter().zip(&c2v) {
            assert!((got - 0.5 * cnew.tanh()).abs() < 1e-12, "h' = o*tanh(c')");
        }
    }

    #[test]
    fn hidden_state_is_bounded() {
        for cell in [CellKind::Lstm, CellKind::Gru, CellKind::Rnn] {
            let mut cfg = ModelConfig::tiny(12);
            cfg.cell = cell;
            let params: Params<f64> = init_params(&cfg, 9);
            let img = render(
                &sample_equation(Category::LinearEquation, &mut ChaCha8Rng::seed_from_u64(1), 2),
                cfg.img_h as u32,
                cfg.img_w as u32,
            );
            let dec = NetDecoder::new(&params, &cfg, &img).unwrap();
            let mut st = dec.start_state().unwrap();
            for tok in [START_ID, 5, 6] {
                let (_, next) = dec.step(&st, tok).unwrap();
                assert!(next.h.iter().all(|v| v.abs() <= 1.0 + 1e-12));
                st = next;
            }
        }
    }

    #[test]
    fn word_distribution_uniform_under_zero_params() {
        let cfg = ModelConfig::tiny(12);
        let mut params: Params<f64> = init_params(&cfg, 10);
        for t in params.values_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let h = g.leaf(&TensorData::zeros(vec![cfg.hidden_dim]), false);
        let z = g.leaf(&TensorData::zeros(vec![cfg.feature_dim]), false);
        let p = word_distribution(&mut g, &bound, 5, h, z).unwrap();
        for &v in g.values(p) {
            assert!((v - 1.0 / cfg.vocab_size as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn word_distribution_sums_to_one_and_shift_invariant() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 11);
        let mut g = Graph::new();
        let bound = bind(&mut g, &params, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let h_t: Vec<f64> = (0..cfg.hidden_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let z_t: Vec<f64> = (0..cfg.feature_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = g.leaf(&TensorData::new(vec![cfg.hidden_dim], h_t).unwrap(), false);
        let z = g.leaf(&TensorData::new(vec![cfg.feature_dim], z_t).unwrap(), false);
        let p = word_distribution(&mut g, &bound, 3, h, z).unwrap();
        let sum: f64 = g.values(p).iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);

        // softmax shift invariance at the logit level
        let mut g2: Graph<f64> = Graph::new();
        let logits: Vec<f64> = (0..7).map(|_| rng.random_range(-3.0..3.0)).collect();
        let shifted: Vec<f64> = logits.iter().map(|v| v + 11.25).collect();
        let a = g2.leaf(&TensorData::new(vec![7], logits).unwrap(), false);
        let b = g2.leaf(&TensorData::new(vec![7], shifted).unwrap(), false);
        let pa = g2.softmax(a).unwrap();
        let pb = g2.softmax(b).unwrap();
        for (x, y) in g2.values(pa).iter().zip(g2.values(pb)) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_model_loss_is_log_k() {
        let cfg = ModelConfig::tiny(12);
        let mut params: Params<f64> = init_params(&cfg, 13);
        for t in params.values_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        let tokens = toy_tokens();
        let (loss, n) =
            example_loss(&params, &cfg, &white(&cfg), &tokens, false, 0).unwrap();
        let per_token = loss / n as f64;
        assert!((per_token - (cfg.vocab_size as f64).ln()).abs() < 1e-9);
    }

    #[test]
    fn confident_model_loss_is_zero() {
        let cfg = ModelConfig::tiny(12);
        let mut params: Params<f64> = init_params(&cfg, 14);
        for t in params.values_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
        // rig the head so the end token gets an enormous logit: the start
        // embedding feeds the deep output directly
        rig_end_token(&mut params, &cfg);
        let tokens = vec![START_ID, END_ID];
        let (loss, _) = example_loss(&params, &cfg, &white(&cfg), &tokens, false, 0).unwrap();
        assert!(loss.abs() < 1e-9, "loss {loss}");
    }

    #[test]
    fn loss_decreases_over_fifty_steps() {
        let mut cfg = ModelConfig::tiny(40);
        cfg.img_h = 16;
        cfg.img_w = 32;
        cfg.dropout = 0.0;
        let mut params: Params<f32> = init_params(&cfg, 15);
        let mut opt = SgdState::new();
        let hyper = Hyper {
            lr: 1e-2,
            momentum: 0.5,
            weight_decay: 1e-4,
            clip_norm: 0.0,
        };
        let examples: Vec<(EqImage, Vec<u32>)> = (0..4u64)
            .map(|seed| {
                let e = sample_equation(
                    Category::LinearEquation,
                    &mut ChaCha8Rng::seed_from_u64(seed),
                    2,
                );
                let img = render(&e, cfg.img_h as u32, cfg.img_w as u32);
                // stable ad-hoc ids below the vocab bound
                let toks: Vec<u32> = std::iter::once(START_ID)
                    .chain(verbalize(&e).tokens.iter().map(|w| {
                        4 + (w.bytes().map(|b| b as u32).sum::<u32>() % (cfg.vocab_size as u32 - 4))
                    }))
                    .chain(std::iter::once(END_ID))
                    .collect();
                (img, toks)
            })
            .collect();
        let batch = Batch::new(examples);
        let mut losses = Vec::new();
        for step in 0..50 {
            losses.push(train_step(&mut params, &mut opt, &cfg, &batch, &hyper, step).unwrap());
        }
        let decreases = losses.windows(2).filter(|w| w[1] < w[0]).count();
        assert!(decreases >= 45, "only {decreases}/49 decreasing steps: {losses:?}");
        assert!(losses.last().unwrap() < losses.first().unwrap());
    }

    #[test]
    fn empty_batch_is_an_error() {
        let cfg = ModelConfig::tiny(12);
        let mut params: Params<f32> = init_params(&cfg, 16);
        let mut opt = SgdState::new();
        let batch = Batch::new(Vec::new());
        assert!(train_step(
            &mut params,
            &mut opt,
            &cfg,
            &batch,
            &Hyper::desk_default(),
            0
        )
        .is_err());
    }

    #[test]
    fn batch_pads_with_pad_id() {
        let img = EqImage::blank(8, 8);
        let b = Batch::new(vec![
            (img.clone(), vec![START_ID, 5, END_ID]),
            (img, vec![START_ID, END_ID]),
        ]);
        assert_eq!(b.padded_tokens[1], vec![START_ID, END_ID, PAD_ID]);
        assert_eq!(b.tokens(1), &[START_ID, END_ID]);
    }

    #[test]
    fn full_model_gradient_matches_finite_differences() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 17);
        let img = render(
            &sample_equation(Category::Integral, &mut ChaCha8Rng::seed_from_u64(2), 2),
            cfg.img_h as u32,
            cfg.img_w as u32,
        );
        let tokens = vec![START_ID, 6, 9, END_ID];
        let seed = 77u64;
        let (_, grads, _) =
            example_loss_grads(&params, &cfg, &img, &tokens, true, seed).unwrap();
        // wider step than the per-primitive checks: the loss runs through a
        // few thousand ops, so fp round-off at 1e-5 would drown the tiny
        // encoder gradients this config produces
        let h = 1e-4;
        let mut worst = 0.0f64;
        let mut work = params.clone();
        for (name, t) in &params {
            for j in 0..t.len() {
                let orig = work.get_mut(name).unwrap().data[j];
                work.get_mut(name).unwrap().data[j] = orig + h;
                let (up, _) = example_loss(&work, &cfg, &img, &tokens, true, seed).unwrap();
                work.get_mut(name).unwrap().data[j] = orig - h;
                let (down, _) = example_loss(&work, &cfg, &img, &tokens, true, seed).unwrap();
                work.get_mut(name).unwrap().data[j] = orig;
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads[name][j];
                let err = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
                worst = worst.max(err);
            }
        }
        assert!(worst < 1e-4, "max rel err {worst}");
    }

    #[test]
    fn greedy_is_deterministic_and_end_rig_gives_empty() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 18);
        let img = white(&cfg);
        let a = greedy_decode(&params, &cfg, &img, 5).unwrap();
        let b = greedy_decode(&params, &cfg, &img, 5).unwrap();
        assert_eq!(a, b);

        let mut rigged: Params<f64> = init_params(&cfg, 18);
        rig_end_token(&mut rigged, &cfg);
        let out = greedy_decode(&rigged, &cfg, &img, 5).unwrap();
        assert!(out.is_empty(), "end-rigged decode should be empty, got {out:?}");
    }

    #[test]
    fn beam_one_equals_greedy_on_many_images() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 19);
        for seed in 0..100u64 {
            let e = sample_equation(
                Category::ALL[(seed % 7) as usize],
                &mut ChaCha8Rng::seed_from_u64(seed),
                3,
            );
            let img = render(&e, cfg.img_h as u32, cfg.img_w as u32);
            let greedy = greedy_decode(&params, &cfg, &img, cfg.t_max).unwrap();
            let (beam, _) = beam_decode(&params, &cfg, &img, 1, cfg.t_max).unwrap();
            assert_eq!(greedy, beam, "seed {seed}");
        }
    }

    #[test]
    fn beam_logp_dominates_greedy_when_greedy_completes() {
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 20);
        let mut compared = 0;
        for seed in 0..40u64 {
            let e = sample_equation(
                Category::ALL[(seed % 7) as usize],
                &mut ChaCha8Rng::seed_from_u64(seed + 1000),
                3,
            );
            let img = render(&e, cfg.img_h as u32, cfg.img_w as u32);
            let dec = NetDecoder::new(&params, &cfg, &img).unwrap();
            let greedy = greedy_decode_with(&dec, cfg.t_max).unwrap();
            if greedy.len() >= cfg.t_max {
                continue; // greedy did not complete with an end token
            }
            let glp = sequence_logp(&dec, &greedy).unwrap();
            let (_, blp) = beam_decode_with(&dec, 20, cfg.t_max).unwrap();
            assert!(
                blp >= glp - 1e-9,
                "beam {blp} < greedy {glp} at seed {seed}"
            );
            compared += 1;
        }
        assert!(compared > 0, "no greedy decode completed");
    }

    /// Fixed-table model over a three-word vocabulary where the best
    /// sequence starts with the second-best first token. The state is the
    /// emitted prefix.
    struct Rigged;

    const TOK_A: u32 = 4;
    const TOK_B: u32 = 5;

    fn rigged_dist(prefix: &[u32]) -> Vec<f64> {
        let mut p = vec![1e-9f64; 6];
        match prefix {
            [] => {
                p[TOK_A as usize] = 0.5;
                p[TOK_B as usize] = 0.45;
                p[END_ID as usize] = 0.05;
            }
            [TOK_A] => {
                p[END_ID as usize] = 0.35;
                p[TOK_A as usize] = 0.33;
                p[TOK_B as usize] = 0.32;
            }
            [TOK_B] => {
                p[END_ID as usize] = 0.9;
                p[TOK_A as usize] = 0.05;
                p[TOK_B as usize] = 0.05;
            }
            _ => {
                p[END_ID as usize] = 0.6;
                p[TOK_A as usize] = 0.2;
                p[TOK_B as usize] = 0.2;
            }
        }
        p
    }

    impl DecodeModel for Rigged {
        type State = Vec<u32>;

        fn vocab_size(&self) -> usize {
            6
        }

        fn start_state(&self) -> Result<Vec<u32>> {
            Ok(Vec::new())
        }

        fn step(&self, state: &Vec<u32>, prev: u32) -> Result<(Vec<f64>, Vec<u32>)> {
            let mut prefix = state.clone();
            if prev != START_ID {
                prefix.push(prev);
            }
            let p = rigged_dist(&prefix);
            Ok((p.iter().map(|v| v.ln()).collect(), prefix))
        }
    }

    #[test]
    fn beam_two_recovers_exhaustive_argmax_that_greedy_misses() {
        let model = Rigged;
        // independent oracle: enumerate every end-terminated sequence of
        // length <= 3 and score it directly off the table
        fn enumerate(prefix: Vec<u32>, logp: f64, best: &mut (Vec<u32>, f64)) {
            if prefix.len() > 3 {
                return;
            }
            let dist = rigged_dist(&prefix);
            let end_lp = logp + dist[END_ID as usize].ln();
            if end_lp > best.1 {
                *best = (prefix.clone(), end_lp);
            }
            if prefix.len() == 3 {
                return;
            }
            for tok in [TOK_A, TOK_B] {
                let mut p = prefix.clone();
                p.push(tok);
                enumerate(p, logp + dist[tok as usize].ln(), best);
            }
        }
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        enumerate(Vec::new(), 0.0, &mut best);
        assert_eq!(best.0, vec![TOK_B], "oracle finds the b-path");

        let greedy = greedy_decode_with(&model, 4).unwrap();
        assert_eq!(greedy, vec![TOK_A], "greedy commits to the locally best token");

        let (beamed, logp) = beam_decode_with(&model, 2, 4).unwrap();
        assert_eq!(beamed, best.0);
        assert!((logp - best.1).abs() < 1e-12);
    }

    #[test]
    fn decode_ignores_unknown_token_gracefully() {
        // unk stays a legal vocabulary item end to end
        let cfg = ModelConfig::tiny(12);
        let params: Params<f64> = init_params(&cfg, 23);
        let tokens = vec![START_ID, UNK_ID, END_ID];
        let (loss, n) = example_loss(&params, &cfg, &white(&cfg), &tokens, false, 0).unwrap();
        assert!(loss.is_finite());
        assert_eq!(n, 2);
    }
}
