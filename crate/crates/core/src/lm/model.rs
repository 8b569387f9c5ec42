//! Forward pass, losses and hand-derived gradients of the decoder.
//!
//! Each block is pre-norm: `x += attn(ln1(x)); x += mlp(ln2(x))`, with
//! causal multi-head self-attention and a tanh-approximated GELU MLP. The
//! next-token head is tied to the token embedding; the class head `w_y`
//! reads the final (class-query) position.

use rayon::prelude::*;

use super::params::{LmParams, ParamLayout};
use super::{LmConfig, LmError};
use crate::dataset::{TokenSequence, TokenVocab};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_A: f64 = 0.044_715;
/// Sequences per gradient accumulation buffer; fixed so results do not
/// depend on the thread count.
const GRAD_CHUNK: usize = 4;

/// A token sequence with its binary class (true = threat).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub tokens: TokenSequence,
    pub threat: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutput {
    /// `next_token[t]` is the distribution over the token following position `t`.
    pub next_token: Vec<Vec<f64>>,
    /// `[p(benign), p(threat)]` at the final position.
    pub class: [f64; 2],
    /// Final hidden states after the closing layer norm, one row per position.
    pub hidden: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Losses {
    pub l1: f64,
    pub l2: f64,
    pub l3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LanguageModel {
    pub config: LmConfig,
    pub params: LmParams,
}

// ----------------------------------------------------------------------------
// dense helpers (row-major)

/// `a[m×k] · w[k×n] (+ bias)`
fn linear(a: &[f64], w: &[f64], bias: Option<&[f64]>, m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        if let Some(b) = bias {
            row.copy_from_slice(b);
        }
        for (p, &av) in a[i * k..(i + 1) * k].iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &wv) in row.iter_mut().zip(&w[p * n..(p + 1) * n]) {
                *o += av * wv;
            }
        }
    }
    out
}

/// Accumulates `dw += aᵀ·dy`, `db += Σ dy` and returns `dy·wᵀ`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    a: &[f64],
    w: &[f64],
    dy: &[f64],
    m: usize,
    k: usize,
    n: usize,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut da = vec![0.0; m * k];
    for i in 0..m {
        let dyr = &dy[i * n..(i + 1) * n];
        let ar = &a[i * k..(i + 1) * k];
        let dar = &mut da[i * k..(i + 1) * k];
        for p in 0..k {
            let wr = &w[p * n..(p + 1) * n];
            let dwr = &mut dw[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                acc += dyr[j] * wr[j];
                dwr[j] += ar[p] * dyr[j];
            }
            dar[p] = acc;
        }
    }
    if let Some(db) = db {
        for i in 0..m {
            for (b, d) in db.iter_mut().zip(&dy[i * n..(i + 1) * n]) {
                *b += d;
            }
        }
    }
    da
}

struct LnCache {
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

fn layer_norm(x: &[f64], g: &[f64], b: &[f64], rows: usize, d: usize) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * d];
    let mut xhat = vec![0.0; rows * d];
    let mut rstd = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let rs = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = rs;
        for j in 0..d {
            let h = (xr[j] - mean) * rs;
            xhat[r * d + j] = h;
            y[r * d + j] = g[j] * h + b[j];
        }
    }
    (y, LnCache { xhat, rstd })
}

fn layer_norm_backward(
    dy: &[f64],
    cache: &LnCache,
    g: &[f64],
    rows: usize,
    d: usize,
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..rows {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        let (mut mean_dxhat, mut mean_dxhat_xhat) = (0.0, 0.0);
        for j in 0..d {
            dg[j] += dyr[j] * xh[j];
            db[j] += dyr[j];
            dxhat[j] = dyr[j] * g[j];
            mean_dxhat += dxhat[j];
            mean_dxhat_xhat += dxhat[j] * xh[j];
        }
        mean_dxhat /= d as f64;
        mean_dxhat_xhat /= d as f64;
        for j in 0..d {
            dx[r * d + j] = cache.rstd[r] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Numerically stable softmax, in place.
fn softmax(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// `-log softmax(logits)[target]` via log-sum-exp.
fn nll(logits: &[f64], target: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln();
    lse - logits[target]
}

// ----------------------------------------------------------------------------

struct BlockCache {
    ln1: LnCache,
    a: Vec<f64>,
    qkv: Vec<f64>,
    /// heads × T × T, zero above the diagonal
    probs: Vec<f64>,
    att: Vec<f64>,
    ln2: LnCache,
    m: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
}

struct Trace {
    t: usize,
    blocks: Vec<BlockCache>,
    lnf: LnCache,
    /// Final hidden states (after ln_f), T × D.
    hf: Vec<f64>,
}

struct SeqResult {
    l1: Option<f64>,
    l2: Option<f64>,
}

impl LanguageModel {
    pub fn new(config: LmConfig, params: LmParams) -> Result<Self, LmError> {
        config.validate()?;
        if params.layout != ParamLayout::new(&config) || params.data.len() != params.layout.total() {
            return Err(LmError::Config("parameter layout does not match configuration".into()));
        }
        Ok(Self { config, params })
    }

    pub fn init(config: LmConfig, seed: u64) -> Result<Self, LmError> {
        config.validate()?;
        let params = LmParams::init(&config, seed);
        Ok(Self { config, params })
    }

    pub fn zeros(config: LmConfig) -> Result<Self, LmError> {
        config.validate()?;
        let params = LmParams::zeros(&config);
        Ok(Self { config, params })
    }

    fn p(&self, offset: usize, len: usize) -> &[f64] {
        &self.params.data[offset..offset + len]
    }

    fn check_tokens(&self, tokens: &[u32]) -> Result<(), LmError> {
        if tokens.is_empty() {
            return Err(LmError::Argument("empty token sequence".into()));
        }
        if tokens.len() > self.config.context {
            return Err(LmError::Argument(format!(
                "sequence length {} exceeds context window {}",
                tokens.len(),
                self.config.context
            )));
        }
        if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= self.config.vocab_size) {
            return Err(LmError::Argument(format!(
                "token {bad} outside vocabulary of {}",
                self.config.vocab_size
            )));
        }
        Ok(())
    }

    fn run(&self, tokens: &[u32]) -> Trace {
        let c = &self.config;
        let (t, d, f, h) = (tokens.len(), c.d_model, c.d_ff, c.heads);
        let dh = c.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let lay = &self.params.layout;

        let mut x = vec![0.0; t * d];
        for (pos, &tok) in tokens.iter().enumerate() {
            let e = self.p(lay.wte + tok as usize * d, d);
            let pe = self.p(lay.wpe + pos * d, d);
            for j in 0..d {
                x[pos * d + j] = e[j] + pe[j];
            }
        }

        let mut blocks = Vec::with_capacity(c.layers);
        for b in &lay.blocks {
            let (a, ln1) = layer_norm(&x, self.p(b.ln1_g, d), self.p(b.ln1_b, d), t, d);
            let qkv = linear(&a, self.p(b.w_qkv, d * 3 * d), Some(self.p(b.b_qkv, 3 * d)), t, d, 3 * d);
            let mut probs = vec![0.0; h * t * t];
            let mut att = vec![0.0; t * d];
            for head in 0..h {
                let qo = head * dh;
                let ko = d + head * dh;
                let vo = 2 * d + head * dh;
                for i in 0..t {
                    let row = &mut probs[(head * t + i) * t..(head * t + i) * t + i + 1];
                    for (u, s) in row.iter_mut().enumerate() {
                        let mut dot = 0.0;
                        for j in 0..dh {
                            dot += qkv[i * 3 * d + qo + j] * qkv[u * 3 * d + ko + j];
                        }
                        *s = dot * scale;
                    }
                    softmax(row);
                    for (u, &pr) in row.iter().enumerate() {
                        for j in 0..dh {
                            att[i * d + qo + j] += pr * qkv[u * 3 * d + vo + j];
                        }
                    }
                }
            }
            let o = linear(&att, self.p(b.w_o, d * d), Some(self.p(b.b_o, d)), t, d, d);
            for (xv, ov) in x.iter_mut().zip(&o) {
                *xv += ov;
            }
            let (m, ln2) = layer_norm(&x, self.p(b.ln2_g, d), self.p(b.ln2_b, d), t, d);
            let fpre = linear(&m, self.p(b.w_fc, d * f), Some(self.p(b.b_fc, f)), t, d, f);
            let g: Vec<f64> = fpre.iter().map(|&v| gelu(v)).collect();
            let proj = linear(&g, self.p(b.w_proj, f * d), Some(self.p(b.b_proj, d)), t, f, d);
            for (xv, pv) in x.iter_mut().zip(&proj) {
                *xv += pv;
            }
            blocks.push(BlockCache { ln1, a, qkv, probs, att, ln2, m, f: fpre, g });
        }
        let (hf, lnf) = layer_norm(&x, self.p(lay.lnf_g, d), self.p(lay.lnf_b, d), t, d);
        Trace { t, blocks, lnf, hf }
    }

    fn next_logits(&self, hf_row: &[f64]) -> Vec<f64> {
        let d = self.config.d_model;
        let wte = self.p(self.params.layout.wte, self.config.vocab_size * d);
        wte.chunks_exact(d).map(|e| e.iter().zip(hf_row).map(|(a, b)| a * b).sum()).collect()
    }

    fn class_logits(&self, hf_row: &[f64]) -> [f64; 2] {
        let w_y = self.p(self.params.layout.w_y, self.config.d_model * 2);
        let mut z = [0.0; 2];
        for (j, &hv) in hf_row.iter().enumerate() {
            z[0] += hv * w_y[j * 2];
            z[1] += hv * w_y[j * 2 + 1];
        }
        z
    }

    pub fn forward(&self, tokens: &[u32]) -> Result<LmOutput, LmError> {
        self.check_tokens(tokens)?;
        let d = self.config.d_model;
        let tr = self.run(tokens);
        let hidden: Vec<Vec<f64>> = tr.hf.chunks_exact(d).map(<[f64]>::to_vec).collect();
        let next_token = hidden
            .iter()
            .map(|row| {
                let mut z = self.next_logits(row);
                softmax(&mut z);
                z
            })
            .collect();
        let mut class = self.class_logits(&hidden[tr.t - 1]);
        softmax(&mut class);
        Ok(LmOutput { next_token, class, hidden })
    }

    /// `[p(benign), p(threat)]` without evaluating the next-token head.
    pub fn class_probabilities(&self, tokens: &[u32]) -> Result<[f64; 2], LmError> {
        self.check_tokens(tokens)?;
        let d = self.config.d_model;
        let tr = self.run(tokens);
        let mut z = self.class_logits(&tr.hf[(tr.t - 1) * d..tr.t * d]);
        softmax(&mut z);
        Ok(z)
    }

    /// Probability of the threat class at the class-query position.
    pub fn threat_probability(&self, tokens: &TokenSequence) -> Result<f64, LmError> {
        if !tokens.ends_with_query() {
            return Err(LmError::Argument("sequence must end with the class-query token".into()));
        }
        Ok(self.class_probabilities(tokens.as_slice())?[1])
    }

    /// Flags the flow when `p(threat) > tau` (strict).
    pub fn detect_gpt2(&self, tokens: &TokenSequence) -> Result<LmVerdict, LmError> {
        let probability = self.threat_probability(tokens)?;
        Ok(LmVerdict { detected: probability > self.config.tau, probability })
    }

    /// Positions `i ≥ 1` whose token is an ordinary (non-reserved) token.
    fn targets(tokens: &[u32]) -> impl Iterator<Item = usize> + '_ {
        (1..tokens.len()).filter(move |&i| !TokenVocab::is_reserved(tokens[i]))
    }

    /// Per-sequence losses, and when `grad` is given, accumulation of
    /// `w1·∇L1_seq + w2·∇L2_seq` into it.
    fn sequence(
        &self,
        tokens: &[u32],
        label: Option<bool>,
        w1: f64,
        w2: f64,
        grad: Option<&mut [f64]>,
    ) -> SeqResult {
        let c = &self.config;
        let (d, v) = (c.d_model, c.vocab_size);
        let tr = self.run(tokens);
        let t = tr.t;
        let targets: Vec<usize> = Self::targets(tokens).collect();

        let mut dhf = grad.is_some().then(|| vec![0.0; t * d]);
        let mut dwte_head: Vec<(usize, Vec<f64>)> = Vec::new();

        let l1 = if targets.is_empty() {
            None
        } else {
            let per_target = w1 / targets.len() as f64;
            let mut total = 0.0;
            for &i in &targets {
                let row = &tr.hf[(i - 1) * d..i * d];
                let logits = self.next_logits(row);
                total += nll(&logits, tokens[i] as usize);
                if let Some(dhf) = dhf.as_mut() {
                    if per_target != 0.0 {
                        let mut p = logits;
                        softmax(&mut p);
                        p[tokens[i] as usize] -= 1.0;
                        p.iter_mut().for_each(|x| *x *= per_target);
                        let wte = self.p(self.params.layout.wte, v * d);
                        let dh = &mut dhf[(i - 1) * d..i * d];
                        for (tok, &dl) in p.iter().enumerate() {
                            for j in 0..d {
                                dh[j] += dl * wte[tok * d + j];
                            }
                        }
                        dwte_head.push((i - 1, p));
                    }
                }
            }
            Some(total / targets.len() as f64)
        };

        let last = &tr.hf[(t - 1) * d..t * d];
        let l2 = label.map(|threat| {
            let z = self.class_logits(last);
            let y = usize::from(threat);
            if let Some(dhf) = dhf.as_mut() {
                if w2 != 0.0 {
                    let mut p = z;
                    softmax(&mut p);
                    p[y] -= 1.0;
                    let w_y = self.p(self.params.layout.w_y, d * 2);
                    let dh = &mut dhf[(t - 1) * d..t * d];
                    for j in 0..d {
                        dh[j] += w2 * (p[0] * w_y[j * 2] + p[1] * w_y[j * 2 + 1]);
                    }
                    dwte_head.push((usize::MAX, vec![w2 * p[0], w2 * p[1]]));
                }
            }
            nll(&z, y)
        });

        if let (Some(grad), Some(dhf)) = (grad, dhf) {
            let lay = &self.params.layout;
            for (row, dl) in &dwte_head {
                if *row == usize::MAX {
                    let gy = &mut grad[lay.w_y..lay.w_y + d * 2];
                    for j in 0..d {
                        gy[j * 2] += last[j] * dl[0];
                        gy[j * 2 + 1] += last[j] * dl[1];
                    }
                } else {
                    let hrow = &tr.hf[row * d..(row + 1) * d];
                    let gw = &mut grad[lay.wte..lay.wte + v * d];
                    for (tok, &g) in dl.iter().enumerate() {
                        if g != 0.0 {
                            for j in 0..d {
                                gw[tok * d + j] += g * hrow[j];
                            }
                        }
                    }
                }
            }
            self.backward(tokens, &tr, dhf, grad);
        }
        SeqResult { l1, l2 }
    }

    fn backward(&self, tokens: &[u32], tr: &Trace, dhf: Vec<f64>, grad: &mut [f64]) {
        let c = &self.config;
        let (t, d, f, h) = (tr.t, c.d_model, c.d_ff, c.heads);
        let dh = c.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let lay = &self.params.layout;

        // Every weight matrix is immediately followed by its bias, and every
        // layer-norm gain by its shift.
        fn pair(grad: &mut [f64], start: usize, first: usize, second: usize) -> (&mut [f64], &mut [f64]) {
            grad[start..start + first + second].split_at_mut(first)
        }

        let (dg, db) = pair(grad, lay.lnf_g, d, d);
        let mut dx = layer_norm_backward(&dhf, &tr.lnf, self.p(lay.lnf_g, d), t, d, dg, db);

        for (b, cache) in lay.blocks.iter().zip(&tr.blocks).rev() {
            // mlp branch
            let (dw, db) = pair(grad, b.w_proj, f * d, d);
            let dg = linear_backward(&cache.g, self.p(b.w_proj, f * d), &dx, t, f, d, dw, Some(db));
            let dfpre: Vec<f64> = dg.iter().zip(&cache.f).map(|(g, &x)| g * gelu_grad(x)).collect();
            let (dw, db) = pair(grad, b.w_fc, d * f, f);
            let dm = linear_backward(&cache.m, self.p(b.w_fc, d * f), &dfpre, t, d, f, dw, Some(db));
            let (dg, db) = pair(grad, b.ln2_g, d, d);
            let dx_ln2 = layer_norm_backward(&dm, &cache.ln2, self.p(b.ln2_g, d), t, d, dg, db);
            for (a, bv) in dx.iter_mut().zip(&dx_ln2) {
                *a += bv;
            }

            // attention branch
            let (dw, db) = pair(grad, b.w_o, d * d, d);
            let datt = linear_backward(&cache.att, self.p(b.w_o, d * d), &dx, t, d, d, dw, Some(db));
            let qkv = &cache.qkv;
            let mut dqkv = vec![0.0; t * 3 * d];
            let mut dp = vec![0.0; t];
            for head in 0..h {
                let qo = head * dh;
                let ko = d + head * dh;
                let vo = 2 * d + head * dh;
                for i in 0..t {
                    let probs = &cache.probs[(head * t + i) * t..(head * t + i) * t + i + 1];
                    let mut dot = 0.0;
                    for u in 0..=i {
                        let mut acc = 0.0;
                        for j in 0..dh {
                            acc += datt[i * d + qo + j] * qkv[u * 3 * d + vo + j];
                            dqkv[u * 3 * d + vo + j] += probs[u] * datt[i * d + qo + j];
                        }
                        dp[u] = acc;
                        dot += probs[u] * acc;
                    }
                    for u in 0..=i {
                        let ds = probs[u] * (dp[u] - dot) * scale;
                        if ds == 0.0 {
                            continue;
                        }
                        for j in 0..dh {
                            dqkv[i * 3 * d + qo + j] += ds * qkv[u * 3 * d + ko + j];
                            dqkv[u * 3 * d + ko + j] += ds * qkv[i * 3 * d + qo + j];
                        }
                    }
                }
            }
            let (dw, db) = pair(grad, b.w_qkv, d * 3 * d, 3 * d);
            let da = linear_backward(&cache.a, self.p(b.w_qkv, d * 3 * d), &dqkv, t, d, 3 * d, dw, Some(db));
            let (dg, db) = pair(grad, b.ln1_g, d, d);
            let dx_ln1 = layer_norm_backward(&da, &cache.ln1, self.p(b.ln1_g, d), t, d, dg, db);
            for (a, bv) in dx.iter_mut().zip(&dx_ln1) {
                *a += bv;
            }
        }

        for (pos, &tok) in tokens.iter().enumerate() {
            let row = &dx[pos * d..(pos + 1) * d];
            let e = lay.wte + tok as usize * d;
            let p = lay.wpe + pos * d;
            for j in 0..d {
                grad[e + j] += row[j];
                grad[p + j] += row[j];
            }
        }
    }

    fn check_l1_batch(&self, batch: &[&TokenSequence]) -> Result<(), LmError> {
        for s in batch {
            self.check_tokens(s.as_slice())?;
            if s.len() < 2 {
                return Err(LmError::Argument("next-token loss needs sequences of length >= 2".into()));
            }
        }
        Ok(())
    }

    fn check_l2_batch(&self, batch: &[LabeledSequence]) -> Result<(), LmError> {
        if batch.is_empty() {
            return Err(LmError::Argument("empty batch".into()));
        }
        for s in batch {
            self.check_tokens(s.tokens.as_slice())?;
            if !s.tokens.ends_with_query() {
                return Err(LmError::Argument("sequence must end with the class-query token".into()));
            }
        }
        Ok(())
    }

    fn mean_l1(per_seq: impl Iterator<Item = Option<f64>>) -> f64 {
        let (sum, n) = per_seq.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    /// Mean over sequences of the per-token next-token negative
    /// log-likelihood. Targets that are reserved tokens are skipped;
    /// sequences without targets do not contribute.
    pub fn loss_l1(&self, batch: &[TokenSequence]) -> Result<f64, LmError> {
        let refs: Vec<&TokenSequence> = batch.iter().collect();
        self.check_l1_batch(&refs)?;
        let per: Vec<Option<f64>> =
            batch.par_iter().map(|s| self.sequence(s.as_slice(), None, 0.0, 0.0, None).l1).collect();
        finite(Self::mean_l1(per.into_iter()), "L1")
    }

    /// Mean negative log-probability of the true class at the final position.
    pub fn loss_l2(&self, batch: &[LabeledSequence]) -> Result<f64, LmError> {
        Ok(self.losses(batch)?.l2)
    }

    /// `L2 + lambda · L1` on the same batch.
    pub fn loss_l3(&self, batch: &[LabeledSequence]) -> Result<f64, LmError> {
        Ok(self.losses(batch)?.l3)
    }

    pub fn losses(&self, batch: &[LabeledSequence]) -> Result<Losses, LmError> {
        self.check_l2_batch(batch)?;
        let per: Vec<SeqResult> = batch
            .par_iter()
            .map(|s| self.sequence(s.tokens.as_slice(), Some(s.threat), 0.0, 0.0, None))
            .collect();
        self.combine(&per)
    }

    fn combine(&self, per: &[SeqResult]) -> Result<Losses, LmError> {
        let l1 = finite(Self::mean_l1(per.iter().map(|r| r.l1)), "L1")?;
        let l2 = finite(per.iter().map(|r| r.l2.unwrap_or(0.0)).sum::<f64>() / per.len() as f64, "L2")?;
        Ok(Losses { l1, l2, l3: l2 + self.config.lambda * l1 })
    }

    /// Combined loss and its gradient with respect to every parameter.
    pub fn loss_and_gradient(&self, batch: &[LabeledSequence]) -> Result<(Losses, Vec<f64>), LmError> {
        self.check_l2_batch(batch)?;
        let with_targets = batch.iter().filter(|s| Self::targets(s.tokens.as_slice()).next().is_some()).count();
        let w1 = if with_targets == 0 { 0.0 } else { self.config.lambda / with_targets as f64 };
        let w2 = 1.0 / batch.len() as f64;
        let n = self.params.data.len();
        let chunks: Vec<(Vec<SeqResult>, Vec<f64>)> = batch
            .par_chunks(GRAD_CHUNK)
            .map(|chunk| {
                let mut g = vec![0.0; n];
                let res = chunk
                    .iter()
                    .map(|s| self.sequence(s.tokens.as_slice(), Some(s.threat), w1, w2, Some(&mut g)))
                    .collect();
                (res, g)
            })
            .collect();
        let mut grad = vec![0.0; n];
        let mut per = Vec::with_capacity(batch.len());
        for (res, g) in chunks {
            per.extend(res);
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        let losses = self.combine(&per)?;
        Ok((losses, grad))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmVerdict {
    pub detected: bool,
    pub probability: f64,
}

fn finite(v: f64, what: &str) -> Result<f64, LmError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(LmError::NonFinite(format!("{what} evaluated to {v}")))
    }
}
