//! Fixed-window MLP token predictor with a hand-written backward pass.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::FlatSequence;
use crate::vocab::{TokenId, PAD};

/// Shape of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub window: usize,
    pub hidden: usize,
}

impl Architecture {
    pub const DEFAULT_EMBED: usize = 16;
    pub const DEFAULT_WINDOW: usize = 24;
    pub const DEFAULT_HIDDEN: usize = 64;

    pub fn new(vocab_size: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: Self::DEFAULT_EMBED,
            window: Self::DEFAULT_WINDOW,
            hidden: Self::DEFAULT_HIDDEN,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.window * self.embed_dim
    }

    pub fn param_count(&self) -> usize {
        let (v, d, h) = (self.vocab_size, self.embed_dim, self.hidden);
        v * d + self.input_dim() * h + h + h * v + v
    }

    pub fn layout(&self) -> Layout {
        let (v, d, h) = (self.vocab_size, self.embed_dim, self.hidden);
        let w1 = v * d;
        let b1 = w1 + self.input_dim() * h;
        let w2 = b1 + h;
        let b2 = w2 + h * v;
        Layout {
            embed: 0,
            w1,
            b1,
            w2,
            b2,
            end: b2 + v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.vocab_size == 0 || self.embed_dim == 0 || self.window == 0 || self.hidden == 0 {
            return Err(Error::Config(format!("degenerate architecture {self:?}")));
        }
        Ok(())
    }
}

/// Offsets of each parameter block inside the flat vector.
///
/// `E` is `|V|×d`, `W1` is `(W·d)×h` (row per input unit), then `b1`, `W2`
/// (`h×|V|`, row per hidden unit) and `b2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub embed: usize,
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
    pub end: usize,
}

/// Architecture plus flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub arch: Architecture,
    pub theta: Vec<f64>,
}

/// Forward activations for one context, reused across positions.
#[derive(Debug, Clone)]
pub struct Scratch {
    context: Vec<TokenId>,
    hidden: Vec<f64>,
    pub log_probs: Vec<f64>,
    d_logits: Vec<f64>,
    d_hidden: Vec<f64>,
}

impl Scratch {
    pub fn new(arch: &Architecture) -> Self {
        Self {
            context: vec![PAD; arch.window],
            hidden: vec![0.0; arch.hidden],
            log_probs: vec![0.0; arch.vocab_size],
            d_logits: vec![0.0; arch.vocab_size],
            d_hidden: vec![0.0; arch.hidden],
        }
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let mut out = logits.to_vec();
    log_softmax_in_place(&mut out);
    out
}

pub(crate) fn log_softmax_in_place(x: &mut [f64]) {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = x.iter().map(|&v| (v - max).exp()).sum();
    let norm = max + sum.ln();
    for v in x.iter_mut() {
        *v -= norm;
    }
}

impl PolicyParams {
    pub fn zeros(arch: Architecture) -> Self {
        Self {
            theta: vec![0.0; arch.param_count()],
            arch,
        }
    }

    /// Seeded uniform Glorot-style initialization; biases start at zero.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let l = arch.layout();
        let mut theta = vec![0.0; arch.param_count()];
        let mut fill = |range: std::ops::Range<usize>, scale: f64| {
            for v in &mut theta[range] {
                *v = rng.random_range(-scale..scale);
            }
        };
        let (v, d, h) = (arch.vocab_size as f64, arch.embed_dim as f64, arch.hidden as f64);
        let input = arch.input_dim() as f64;
        fill(l.embed..l.w1, (3.0 / d).sqrt() * 0.5);
        fill(l.w1..l.b1, (6.0 / (input + h)).sqrt());
        fill(l.w2..l.b2, (6.0 / (h + v)).sqrt());
        Self { arch, theta }
    }

    pub fn from_vec(arch: Architecture, theta: Vec<f64>) -> Result<Self> {
        arch.validate()?;
        if theta.len() != arch.param_count() {
            return Err(Error::InvalidInput(format!(
                "parameter vector has {} entries, architecture needs {}",
                theta.len(),
                arch.param_count()
            )));
        }
        if let Some(i) = theta.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is {}", theta[i])));
        }
        Ok(Self { arch, theta })
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.theta.iter().all(|v| v.is_finite())
    }

    fn check_tokens(&self, tokens: &[TokenId]) -> Result<()> {
        match tokens.iter().find(|&&t| t as usize >= self.arch.vocab_size) {
            Some(t) => Err(Error::InvalidInput(format!(
                "token id {t} outside vocabulary of size {}",
                self.arch.vocab_size
            ))),
            None => Ok(()),
        }
    }

    /// Logits for the next token after `context`. Only the last `W` ids are
    /// used; shorter contexts are left-padded.
    pub fn token_logits(&self, context: &[TokenId]) -> Result<Vec<f64>> {
        self.check_tokens(context)?;
        let mut s = Scratch::new(&self.arch);
        self.load_context(&mut s, context);
        Ok(self.forward_logits(&mut s))
    }

    /// Log-probabilities of the next token after `context`.
    pub fn next_token_log_probs(&self, context: &[TokenId], scratch: &mut Scratch) -> Result<()> {
        self.check_tokens(context)?;
        self.load_context(scratch, context);
        self.forward(scratch);
        Ok(())
    }

    fn load_context(&self, s: &mut Scratch, context: &[TokenId]) {
        let w = self.arch.window;
        let tail = &context[context.len().saturating_sub(w)..];
        let pad = w - tail.len();
        s.context[..pad].fill(PAD);
        s.context[pad..].copy_from_slice(tail);
    }

    /// Writes the window ending just before `pos` into the scratch context.
    fn load_position(&self, s: &mut Scratch, tokens: &[TokenId], pos: usize) {
        self.load_context(s, &tokens[..pos]);
    }

    fn forward_logits(&self, s: &mut Scratch) -> Vec<f64> {
        let (d, h, v) = (self.arch.embed_dim, self.arch.hidden, self.arch.vocab_size);
        let l = self.arch.layout();
        let th = &self.theta;
        s.hidden.copy_from_slice(&th[l.b1..l.b1 + h]);
        for (slot, &tok) in s.context.iter().enumerate() {
            let emb = &th[l.embed + tok as usize * d..l.embed + (tok as usize + 1) * d];
            for (j, &x) in emb.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let row = l.w1 + (slot * d + j) * h;
                for (z, &w) in s.hidden.iter_mut().zip(&th[row..row + h]) {
                    *z += x * w;
                }
            }
        }
        for z in s.hidden.iter_mut() {
            *z = z.tanh();
        }
        let mut logits = th[l.b2..l.b2 + v].to_vec();
        for (k, &a) in s.hidden.iter().enumerate() {
            let row = l.w2 + k * v;
            for (o, &w) in logits.iter_mut().zip(&th[row..row + v]) {
                *o += a * w;
            }
        }
        logits
    }

    fn forward(&self, s: &mut Scratch) {
        let logits = self.forward_logits(s);
        s.log_probs.copy_from_slice(&logits);
        log_softmax_in_place(&mut s.log_probs);
    }

    /// Backpropagates `s.d_logits` (gradient w.r.t. the logits of the context
    /// currently loaded in `s`) into `grad`.
    fn backward(&self, s: &mut Scratch, grad: &mut [f64]) {
        let (d, h, v) = (self.arch.embed_dim, self.arch.hidden, self.arch.vocab_size);
        let l = self.arch.layout();
        let th = &self.theta;
        for (g, &dl) in grad[l.b2..l.b2 + v].iter_mut().zip(&s.d_logits) {
            *g += dl;
        }
        for k in 0..h {
            let row = l.w2 + k * v;
            let a = s.hidden[k];
            let mut da = 0.0;
            for ((g, &w), &dl) in grad[row..row + v]
                .iter_mut()
                .zip(&th[row..row + v])
                .zip(&s.d_logits)
            {
                *g += a * dl;
                da += w * dl;
            }
            s.d_hidden[k] = da * (1.0 - a * a);
        }
        for (g, &dz) in grad[l.b1..l.b1 + h].iter_mut().zip(&s.d_hidden) {
            *g += dz;
        }
        for (slot, &tok) in s.context.iter().enumerate() {
            let e = l.embed + tok as usize * d;
            for j in 0..d {
                let x = th[e + j];
                let row = l.w1 + (slot * d + j) * h;
                let mut dx = 0.0;
                for ((g, &w), &dz) in grad[row..row + h]
                    .iter_mut()
                    .zip(&th[row..row + h])
                    .zip(&s.d_hidden)
                {
                    *g += x * dz;
                    dx += w * dz;
                }
                grad[e + j] += dx;
            }
        }
    }

    /// Log-probability of each masked token, in sequence order.
    pub fn position_log_probs(&self, flat: &FlatSequence) -> Result<Vec<f64>> {
        self.check_flat(flat)?;
        let mut s = Scratch::new(&self.arch);
        let mut out = Vec::with_capacity(flat.masked_count());
        for (pos, (&tok, &m)) in flat.token_ids.iter().zip(&flat.action_mask).enumerate() {
            if m {
                self.load_position(&mut s, &flat.token_ids, pos);
                self.forward(&mut s);
                out.push(s.log_probs[tok as usize]);
            }
        }
        Ok(out)
    }

    /// Sum of log-probabilities over the masked positions of `flat`.
    pub fn trajectory_logprob(&self, flat: &FlatSequence) -> Result<f64> {
        Ok(self.position_log_probs(flat)?.iter().sum())
    }

    /// Gradient of [`Self::trajectory_logprob`] with respect to `theta`.
    pub fn trajectory_logprob_grad(&self, flat: &FlatSequence) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.len()];
        let mut s = Scratch::new(&self.arch);
        self.accumulate_logprob_grad(flat, 1.0, &mut grad, &mut s)?;
        Ok(grad)
    }

    /// Adds `weight · ∇ log π(flat)` into `grad` and returns `log π(flat)`.
    pub fn accumulate_logprob_grad(
        &self,
        flat: &FlatSequence,
        weight: f64,
        grad: &mut [f64],
        s: &mut Scratch,
    ) -> Result<f64> {
        self.check_flat(flat)?;
        self.check_grad(grad)?;
        let mut total = 0.0;
        for (pos, (&tok, &m)) in flat.token_ids.iter().zip(&flat.action_mask).enumerate() {
            if !m {
                continue;
            }
            self.load_position(s, &flat.token_ids, pos);
            self.forward(s);
            total += s.log_probs[tok as usize];
            if weight != 0.0 {
                for (dl, &lp) in s.d_logits.iter_mut().zip(&s.log_probs) {
                    *dl = -weight * lp.exp();
                }
                s.d_logits[tok as usize] += weight;
                self.backward(s, grad);
            }
        }
        Ok(total)
    }

    /// Adds `weight · ∇_θ Σ_k KL(π_θ(·|c_k) ‖ π_ref(·|c_k))` over the masked
    /// contexts `c_k` of `flat` into `grad`, and returns the KL sum.
    pub fn accumulate_kl_grad(
        &self,
        reference: &PolicyParams,
        flat: &FlatSequence,
        weight: f64,
        grad: &mut [f64],
        s: &mut Scratch,
    ) -> Result<f64> {
        if reference.arch != self.arch {
            return Err(Error::InvalidInput("reference architecture differs".into()));
        }
        self.check_flat(flat)?;
        self.check_grad(grad)?;
        let mut rs = Scratch::new(&self.arch);
        let mut total = 0.0;
        for (pos, &m) in flat.action_mask.iter().enumerate() {
            if !m {
                continue;
            }
            self.load_position(s, &flat.token_ids, pos);
            self.forward(s);
            reference.load_position(&mut rs, &flat.token_ids, pos);
            reference.forward(&mut rs);
            let kl: f64 = s
                .log_probs
                .iter()
                .zip(&rs.log_probs)
                .map(|(&lp, &lq)| lp.exp() * (lp - lq))
                .sum();
            total += kl;
            if weight != 0.0 {
                for ((dl, &lp), &lq) in s.d_logits.iter_mut().zip(&s.log_probs).zip(&rs.log_probs) {
                    *dl = weight * lp.exp() * ((lp - lq) - kl);
                }
                self.backward(s, grad);
            }
        }
        Ok(total)
    }

    fn check_flat(&self, flat: &FlatSequence) -> Result<()> {
        if flat.token_ids.len() != flat.action_mask.len() {
            return Err(Error::InvalidInput(format!(
                "sequence has {} tokens but {} mask entries",
                flat.token_ids.len(),
                flat.action_mask.len()
            )));
        }
        self.check_tokens(&flat.token_ids)
    }

    fn check_grad(&self, grad: &[f64]) -> Result<()> {
        if grad.len() != self.len() {
            return Err(Error::InvalidInput(format!(
                "gradient buffer has {} entries, expected {}",
                grad.len(),
                self.len()
            )));
        }
        Ok(())
    }
}
