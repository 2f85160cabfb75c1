//! Skip-gram with negative sampling.
//!
//! The trainer follows the classic word2vec recipe: input vectors start
//! uniform in `[-0.5/d, 0.5/d]`, output vectors at zero, the learning rate
//! decays linearly over processed pairs, and negatives are drawn from the
//! unigram distribution raised to `ns_exponent`. Workers update the shared
//! matrices without locks (hogwild); single-worker runs with a fixed seed
//! are bit-reproducible.

use std::cell::UnsafeCell;
use std::ops::{AddAssign, SubAssign};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{TokenId, TokenKind, Vocabulary};
use crate::rng::stream_rng;
use crate::{Error, Result};

/// Float scalar usable by the training math (f32 for training, f64 for the
/// gradient-check mode).
pub trait Real: Float + AddAssign + SubAssign + Send + Sync + 'static {}
impl<T: Float + AddAssign + SubAssign + Send + Sync + 'static> Real for T {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgnsConfig {
    pub dim: usize,
    pub epochs: u32,
    pub negatives: usize,
    pub initial_lr: f64,
    /// The learning rate decays linearly to `initial_lr * final_lr_fraction`.
    pub final_lr_fraction: f64,
    pub ns_exponent: f64,
    pub seed: u64,
    pub workers: usize,
}

impl Default for SgnsConfig {
    fn default() -> Self {
        SgnsConfig {
            dim: 300,
            epochs: 15,
            negatives: 20,
            initial_lr: 0.025,
            final_lr_fraction: 1e-4 / 0.025,
            ns_exponent: 0.75,
            seed: 0,
            workers: 1,
        }
    }
}

impl SgnsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim < 1 {
            return Err(Error::InvalidConfig("dim must be >= 1".into()));
        }
        if self.negatives < 1 {
            return Err(Error::InvalidConfig("negatives must be >= 1".into()));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidConfig("epochs must be >= 1".into()));
        }
        if self.initial_lr.is_nan() || self.initial_lr <= 0.0 {
            return Err(Error::InvalidConfig("initial_lr must be > 0".into()));
        }
        if !(self.final_lr_fraction > 0.0 && self.final_lr_fraction <= 1.0) {
            return Err(Error::InvalidConfig(
                "final_lr_fraction must be in (0, 1]".into(),
            ));
        }
        if self.workers < 1 {
            return Err(Error::InvalidConfig("workers must be >= 1".into()));
        }
        Ok(())
    }
}

/// Paired input/output vector tables. `input` rows are the published word
/// vectors; `output` rows are the context vectors.
#[derive(Debug, Clone)]
pub struct EmbeddingMatrix<F> {
    vocab_size: usize,
    dim: usize,
    input: Vec<F>,
    output: Vec<F>,
}

impl<F: Real> EmbeddingMatrix<F> {
    pub fn zeroed(vocab_size: usize, dim: usize) -> Self {
        EmbeddingMatrix {
            vocab_size,
            dim,
            input: vec![F::zero(); vocab_size * dim],
            output: vec![F::zero(); vocab_size * dim],
        }
    }

    /// word2vec initialization: input uniform in `[-0.5/d, 0.5/d]`, output
    /// zero.
    pub fn init<R: Rng>(vocab_size: usize, dim: usize, rng: &mut R) -> Self {
        let mut m = Self::zeroed(vocab_size, dim);
        for w in m.input.iter_mut() {
            let v = (rng.gen::<f64>() - 0.5) / dim as f64;
            *w = F::from(v).unwrap();
        }
        m
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn input_row(&self, id: TokenId) -> &[F] {
        let i = id as usize * self.dim;
        &self.input[i..i + self.dim]
    }

    pub fn output_row(&self, id: TokenId) -> &[F] {
        let i = id as usize * self.dim;
        &self.output[i..i + self.dim]
    }

    pub fn input_row_mut(&mut self, id: TokenId) -> &mut [F] {
        let i = id as usize * self.dim;
        &mut self.input[i..i + self.dim]
    }

    pub fn output_row_mut(&mut self, id: TokenId) -> &mut [F] {
        let i = id as usize * self.dim;
        &mut self.output[i..i + self.dim]
    }

    pub fn all_finite(&self) -> bool {
        self.input.iter().chain(self.output.iter()).all(|x| x.is_finite())
    }

    /// Consume the matrix, keeping the published (input) table.
    pub fn into_input(self) -> Vec<F> {
        self.input
    }
}

/// Numerically stable logistic function; the argument is clamped to
/// `[-700, 700]`, so extreme dots saturate instead of producing NaN.
pub fn sigmoid<F: Float>(x: F) -> F {
    let cap = F::from(700.0).unwrap();
    let x = x.max(-cap).min(cap);
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// `ln(1 + e^x)` without overflow; used for the step loss.
fn softplus<F: Float>(x: F) -> F {
    if x > F::from(34.0).unwrap() {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn dot<F: Float>(a: &[F], b: &[F]) -> F {
    a.iter()
        .zip(b)
        .fold(F::zero(), |acc, (&x, &y)| acc + x * y)
}

/// One SGD step on a single `(center, context)` pair with its negatives.
///
/// All gradients are evaluated at the pre-update point and the returned loss
/// is the pre-update value
/// `-ln σ(w·c_ctx) - Σ ln σ(-w·c_neg)`.
/// A negative that happens to equal the context is used as-is.
pub fn sgns_step<F: Real>(
    model: &mut EmbeddingMatrix<F>,
    center: TokenId,
    context: TokenId,
    negatives: &[TokenId],
    lr: F,
) -> F {
    let mut scratch = vec![F::zero(); model.dim()];
    sgns_step_with_scratch(model, center, context, negatives, lr, &mut scratch)
}

/// [`sgns_step`] reusing a caller-owned gradient buffer (`len == dim`).
pub fn sgns_step_with_scratch<F: Real>(
    model: &mut EmbeddingMatrix<F>,
    center: TokenId,
    context: TokenId,
    negatives: &[TokenId],
    lr: F,
    wgrad: &mut [F],
) -> F {
    debug_assert_eq!(wgrad.len(), model.dim());
    let dim = model.dim();

    let dot_pos = dot(model.input_row(center), model.output_row(context));
    let g_pos = sigmoid(dot_pos) - F::one();
    let mut loss = softplus(-dot_pos);

    // Accumulate the center gradient from the old output rows.
    for (g, &c) in wgrad.iter_mut().zip(model.output_row(context)) {
        *g = g_pos * c;
    }
    let mut neg_grads = Vec::with_capacity(negatives.len());
    for &neg in negatives {
        let d = dot(model.input_row(center), model.output_row(neg));
        let g_neg = sigmoid(d);
        loss += softplus(d);
        for (g, &c) in wgrad.iter_mut().zip(model.output_row(neg)) {
            *g += g_neg * c;
        }
        neg_grads.push(g_neg);
    }

    // Output rows move along the (still unmodified) center row.
    for i in 0..dim {
        let w = model.input_row(center)[i];
        model.output_row_mut(context)[i] -= lr * g_pos * w;
    }
    for (&neg, &g_neg) in negatives.iter().zip(&neg_grads) {
        for i in 0..dim {
            let w = model.input_row(center)[i];
            model.output_row_mut(neg)[i] -= lr * g_neg * w;
        }
    }
    for (w, &g) in model.input_row_mut(center).iter_mut().zip(wgrad.iter()) {
        *w -= lr * g;
    }

    debug_assert!(loss.is_finite());
    loss
}

/// Noise distribution for negative sampling: mass proportional to
/// `count^exponent`, optionally restricted to a set of token kinds.
pub struct NegativeSampler {
    ids: Vec<TokenId>,
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    pub fn new(vocab: &Vocabulary, exponent: f64) -> Result<Self> {
        Self::build(vocab, exponent, None)
    }

    pub fn with_kinds(vocab: &Vocabulary, exponent: f64, kinds: &[TokenKind]) -> Result<Self> {
        Self::build(vocab, exponent, Some(kinds))
    }

    fn build(vocab: &Vocabulary, exponent: f64, kinds: Option<&[TokenKind]>) -> Result<Self> {
        let mut ids = Vec::new();
        let mut cumulative = Vec::new();
        let mut total = 0.0f64;
        for (id, e) in vocab.entries().iter().enumerate() {
            if let Some(kinds) = kinds {
                if !kinds.contains(&e.kind) {
                    continue;
                }
            }
            if e.count == 0 {
                continue;
            }
            total += (e.count as f64).powf(exponent);
            ids.push(id as TokenId);
            cumulative.push(total);
        }
        if ids.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        Ok(NegativeSampler { ids, cumulative })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> TokenId {
        let total = *self.cumulative.last().unwrap();
        let u = rng.gen::<f64>() * total;
        let i = self.cumulative.partition_point(|&c| c <= u);
        self.ids[i.min(self.ids.len() - 1)]
    }

    /// Selection probability of `id` (0 if not in the support).
    pub fn probability(&self, id: TokenId) -> f64 {
        let total = *self.cumulative.last().unwrap();
        match self.ids.binary_search(&id) {
            Ok(i) => {
                let prev = if i == 0 { 0.0 } else { self.cumulative[i - 1] };
                (self.cumulative[i] - prev) / total
            }
            Err(_) => 0.0,
        }
    }
}

/// A restartable source of `(center, context)` pairs.
///
/// Implementations must emit a deterministic stream for a given
/// `(epoch, worker, workers)` triple and partition work disjointly across
/// workers.
pub trait PairSource: Sync {
    fn for_each_pair(
        &self,
        epoch: u32,
        worker: usize,
        workers: usize,
        emit: &mut dyn FnMut(TokenId, TokenId),
    );
}

/// Shared-parameter cell for hogwild workers. Races on individual f32 writes
/// are accepted per the training contract.
struct Hogwild<T>(Arc<UnsafeCell<T>>);

unsafe impl<T: Send> Send for Hogwild<T> {}
unsafe impl<T: Send> Sync for Hogwild<T> {}

impl<T> Clone for Hogwild<T> {
    fn clone(&self) -> Self {
        Hogwild(self.0.clone())
    }
}

impl<T> Hogwild<T> {
    fn new(value: T) -> Self {
        Hogwild(Arc::new(UnsafeCell::new(value)))
    }

    #[allow(clippy::mut_from_ref)]
    fn get(&self) -> &mut T {
        unsafe { &mut *self.0.get() }
    }

    fn into_inner(self) -> T {
        match Arc::try_unwrap(self.0) {
            Ok(cell) => cell.into_inner(),
            Err(_) => panic!("hogwild cell still shared after join"),
        }
    }
}

pub struct TrainOutcome {
    pub model: EmbeddingMatrix<f32>,
    /// Mean step loss per epoch, aggregated over workers.
    pub epoch_loss: Vec<f64>,
    pub pairs_processed: u64,
}

/// Train the embedding over `config.epochs` passes of the pair source.
pub fn train<S>(
    source: &S,
    sampler: &NegativeSampler,
    vocab_size: usize,
    config: &SgnsConfig,
) -> Result<TrainOutcome>
where
    S: PairSource + ?Sized,
{
    config.validate()?;
    let workers = config.workers;
    let epochs = config.epochs as usize;

    // The first epoch is generated twice: once to size the linear lr
    // schedule, once for training. Both calls see identical streams.
    let mut epoch0_pairs = 0u64;
    for w in 0..workers {
        source.for_each_pair(0, w, workers, &mut |_, _| epoch0_pairs += 1);
    }
    if epoch0_pairs == 0 {
        return Err(Error::EmptyCorpus);
    }
    let total_est = epoch0_pairs * epochs as u64;

    let mut init_rng = stream_rng(config.seed, "sgns-init", &[]);
    let shared = Hogwild::new(EmbeddingMatrix::<f32>::init(
        vocab_size,
        config.dim,
        &mut init_rng,
    ));
    let progress = AtomicU64::new(0);

    let worker_losses: Vec<Vec<(f64, u64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let shared = shared.clone();
                let progress = &progress;
                s.spawn(move || {
                    let mut scratch = vec![0f32; config.dim];
                    let mut neg_buf: Vec<TokenId> = Vec::with_capacity(config.negatives);
                    let mut losses = vec![(0f64, 0u64); epochs];
                    for epoch in 0..epochs {
                        let mut neg_rng =
                            stream_rng(config.seed, "negatives", &[epoch as u64, w as u64]);
                        source.for_each_pair(epoch as u32, w, workers, &mut |center, context| {
                            neg_buf.clear();
                            for _ in 0..config.negatives {
                                neg_buf.push(sampler.sample(&mut neg_rng));
                            }
                            let t = progress.fetch_add(1, Ordering::Relaxed);
                            let remaining = 1.0 - t as f64 / total_est as f64;
                            let lr =
                                config.initial_lr * remaining.max(config.final_lr_fraction);
                            let loss = sgns_step_with_scratch(
                                shared.get(),
                                center,
                                context,
                                &neg_buf,
                                lr as f32,
                                &mut scratch,
                            );
                            losses[epoch].0 += f64::from(loss);
                            losses[epoch].1 += 1;
                        });
                    }
                    losses
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().unwrap()).collect()
    });

    let epoch_loss = (0..epochs)
        .map(|e| {
            let (sum, n) = worker_losses
                .iter()
                .fold((0.0, 0u64), |(s, n), wl| (s + wl[e].0, n + wl[e].1));
            if n == 0 {
                0.0
            } else {
                sum / n as f64
            }
        })
        .collect();

    Ok(TrainOutcome {
        model: shared.into_inner(),
        epoch_loss,
        pairs_processed: progress.into_inner(),
    })
}
