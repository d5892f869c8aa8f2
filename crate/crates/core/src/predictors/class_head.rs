//! Self-supervised classification head: a small MLP trained on frozen
//! embeddings to predict k-means cluster ids. The spread of its softmax
//! output on a query (dispersion, kurtosis) signals query difficulty.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::io::{read_bytes, write_file, BinReader, BinWriter, Meta};
use crate::model::EmbeddingStore;

/// Width of both hidden layers.
pub const HIDDEN: usize = 50;

const MAGIC: &[u8; 8] = b"IQPPCLH1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassHeadParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for ClassHeadParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            learning_rate: 1e-4,
            batch_size: 64,
            seed: 0,
        }
    }
}

/// Dense layer, weights row-major `out x in`.
#[derive(Debug, Clone, PartialEq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Dense {
    fn he(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let normal = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).expect("positive std");
        Self {
            inputs,
            outputs,
            w: (0..inputs * outputs).map(|_| normal.sample(rng)).collect(),
            b: vec![0.0; outputs],
        }
    }

    fn forward(&self, x: &[f64], out: &mut [f64]) {
        for (o, (row, b)) in out.iter_mut().zip(self.w.chunks(self.inputs).zip(&self.b)) {
            *o = b + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    fn params(&self) -> usize {
        self.w.len() + self.b.len()
    }
}

/// Two ReLU hidden layers of [`HIDDEN`] units and a softmax over the classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassHead {
    layers: [Dense; 3],
    pub params: ClassHeadParams,
    /// Mean training cross-entropy at initialization, then after each epoch.
    pub loss_history: Vec<f64>,
}

struct Activations {
    h1: Vec<f64>,
    h2: Vec<f64>,
    probs: Vec<f64>,
}

fn relu(v: &mut [f64]) {
    for x in v {
        *x = x.max(0.0);
    }
}

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

impl ClassHead {
    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn classes(&self) -> usize {
        self.layers[2].outputs
    }

    fn activations(&self, x: &[f64]) -> Activations {
        let [l1, l2, l3] = &self.layers;
        let mut h1 = vec![0.0; HIDDEN];
        l1.forward(x, &mut h1);
        relu(&mut h1);
        let mut h2 = vec![0.0; HIDDEN];
        l2.forward(&h1, &mut h2);
        relu(&mut h2);
        let mut probs = vec![0.0; l3.outputs];
        l3.forward(&h2, &mut probs);
        softmax(&mut probs);
        Activations { h1, h2, probs }
    }

    /// Softmax class distribution for one embedding.
    pub fn probabilities(&self, x: &[f32]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        let x: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        Ok(self.activations(&x).probs)
    }

    fn mean_loss(&self, inputs: &[Vec<f64>], labels: &[usize]) -> f64 {
        let total: f64 = inputs
            .iter()
            .zip(labels)
            .map(|(x, &y)| -self.activations(x).probs[y].max(f64::MIN_POSITIVE).ln())
            .sum();
        total / inputs.len() as f64
    }

    /// Accumulates cross-entropy gradients of one sample into `grads`
    /// (laid out like the flattened layers).
    fn backprop(&self, x: &[f64], label: usize, grads: &mut [Vec<f64>; 3]) {
        let [_, l2, l3] = &self.layers;
        let act = self.activations(x);
        let mut d3 = act.probs;
        d3[label] -= 1.0;
        let mut d2 = vec![0.0; HIDDEN];
        for (o, &g) in d3.iter().enumerate() {
            let row = &l3.w[o * HIDDEN..(o + 1) * HIDDEN];
            for (i, d) in d2.iter_mut().enumerate() {
                *d += g * row[i];
            }
        }
        for (d, &h) in d2.iter_mut().zip(&act.h2) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        let mut d1 = vec![0.0; HIDDEN];
        for (o, &g) in d2.iter().enumerate() {
            let row = &l2.w[o * HIDDEN..(o + 1) * HIDDEN];
            for (i, d) in d1.iter_mut().enumerate() {
                *d += g * row[i];
            }
        }
        for (d, &h) in d1.iter_mut().zip(&act.h1) {
            if h <= 0.0 {
                *d = 0.0;
            }
        }
        for (grad, (delta, input)) in grads
            .iter_mut()
            .zip([(&d1, x), (&d2, &act.h1[..]), (&d3, &act.h2[..])])
        {
            let n_in = input.len();
            let (gw, gb) = grad.split_at_mut(delta.len() * n_in);
            for (o, &g) in delta.iter().enumerate() {
                if g != 0.0 {
                    for (w, &v) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                        *w += g * v;
                    }
                }
                gb[o] += g;
            }
        }
    }

    pub fn save(&self, meta: &Meta, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BinWriter::new(MAGIC);
        w.u32(VERSION);
        w.long_str(&meta.to_line());
        w.u64(self.params.epochs as u64);
        w.f64(self.params.learning_rate);
        w.u64(self.params.batch_size as u64);
        w.u64(self.params.seed);
        for l in &self.layers {
            w.u64(l.inputs as u64);
            w.u64(l.outputs as u64);
            w.f64s(&l.w);
            w.f64s(&l.b);
        }
        w.f64s(&self.loss_history);
        write_file(path.as_ref(), w.buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = read_bytes(path)?;
        let mut r = BinReader::new(&bytes, MAGIC, path)?;
        if r.u32()? != VERSION {
            return Err(r.error("unsupported class-head version"));
        }
        r.long_str()?;
        let params = ClassHeadParams {
            epochs: r.u64()? as usize,
            learning_rate: r.f64()?,
            batch_size: r.u64()? as usize,
            seed: r.u64()?,
        };
        let mut read_layer = || -> Result<Dense> {
            let inputs = r.u64()? as usize;
            let outputs = r.u64()? as usize;
            let w = r.f64s()?;
            let b = r.f64s()?;
            if w.len() != inputs * outputs || b.len() != outputs {
                return Err(Error::format(path, "layer shape mismatch"));
            }
            Ok(Dense { inputs, outputs, w, b })
        };
        let layers = [read_layer()?, read_layer()?, read_layer()?];
        let loss_history = r.f64s()?;
        r.finish()?;
        if layers[1].inputs != HIDDEN || layers[2].inputs != HIDDEN {
            return Err(Error::format(path, "hidden width mismatch"));
        }
        Ok(Self {
            layers,
            params,
            loss_history,
        })
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// Trains the head with mini-batch Adam on cross-entropy.
///
/// `labels[i]` is the pseudo-class of collection row `i`, in
/// `0..classes`. Deterministic for a given seed: initialization and the
/// per-epoch shuffle both come from it.
pub fn train_class_head(
    collection: &EmbeddingStore,
    labels: &[usize],
    classes: usize,
    params: &ClassHeadParams,
) -> Result<ClassHead> {
    if labels.len() != collection.len() {
        return Err(Error::LengthMismatch {
            what: "labels",
            left: labels.len(),
            right: collection.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} outside 0..{classes}"
        )));
    }
    let mut distinct = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateLabels(distinct.len()));
    }
    if params.batch_size == 0 {
        return Err(Error::InvalidArgument("batch size must be >= 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let dim = collection.dim();
    let mut head = ClassHead {
        layers: [
            Dense::he(dim, HIDDEN, &mut rng),
            Dense::he(HIDDEN, HIDDEN, &mut rng),
            Dense::he(HIDDEN, classes, &mut rng),
        ],
        params: *params,
        loss_history: Vec::with_capacity(params.epochs + 1),
    };
    let inputs: Vec<Vec<f64>> = collection
        .rows()
        .map(|r| r.iter().map(|&v| v as f64).collect())
        .collect();
    head.loss_history.push(head.mean_loss(&inputs, labels));

    let mut adam: Vec<Adam> = head.layers.iter().map(|l| Adam::new(l.params())).collect();
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for _ in 0..params.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(params.batch_size) {
            let mut grads: [Vec<f64>; 3] =
                std::array::from_fn(|i| vec![0.0; head.layers[i].params()]);
            for &i in batch {
                head.backprop(&inputs[i], labels[i], &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            for ((layer, grad), opt) in head.layers.iter_mut().zip(&grads).zip(&mut adam) {
                opt.step += 1;
                let c1 = 1.0 - Adam::BETA1.powi(opt.step);
                let c2 = 1.0 - Adam::BETA2.powi(opt.step);
                let (w, b) = (&mut layer.w, &mut layer.b);
                for (idx, p) in w.iter_mut().chain(b.iter_mut()).enumerate() {
                    let g = grad[idx] * scale;
                    opt.m[idx] = Adam::BETA1 * opt.m[idx] + (1.0 - Adam::BETA1) * g;
                    opt.v[idx] = Adam::BETA2 * opt.v[idx] + (1.0 - Adam::BETA2) * g * g;
                    let m_hat = opt.m[idx] / c1;
                    let v_hat = opt.v[idx] / c2;
                    *p -= params.learning_rate * m_hat / (v_hat.sqrt() + Adam::EPS);
                }
            }
        }
        head.loss_history.push(head.mean_loss(&inputs, labels));
    }
    Ok(head)
}

fn central_moments(p: &[f64]) -> (f64, f64) {
    let n = p.len() as f64;
    let mean = p.iter().sum::<f64>() / n;
    let m2 = p.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = p.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m2, m4)
}

/// Population variance of the class probabilities. Confident (peaked)
/// outputs score higher.
pub fn class_head_dispersion(head: &ClassHead, query: &[f32]) -> Result<f64> {
    Ok(dispersion_of(&head.probabilities(query)?))
}

/// Population excess kurtosis of the class probabilities; 0 for a
/// perfectly flat output, where kurtosis is undefined.
pub fn class_head_kurtosis(head: &ClassHead, query: &[f32]) -> Result<f64> {
    Ok(kurtosis_of(&head.probabilities(query)?))
}

pub(crate) fn dispersion_of(p: &[f64]) -> f64 {
    central_moments(p).0
}

pub(crate) fn kurtosis_of(p: &[f64]) -> f64 {
    let (m2, m4) = central_moments(p);
    if m2 <= f64::EPSILON * f64::EPSILON {
        0.0
    } else {
        m4 / (m2 * m2) - 3.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn separable(n: usize, seed: u64) -> (EmbeddingStore, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let label = i % 2;
            let cx = if label == 0 { -2.0 } else { 2.0 };
            rows.push(vec![cx + rng.random_range(-1.0f32..1.0), rng.random_range(-1.0f32..1.0)]);
            labels.push(label);
        }
        let ids = (0..n).map(|i| format!("x{i}")).collect();
        (EmbeddingStore::from_rows(ids, &rows).unwrap(), labels)
    }

    fn accuracy(head: &ClassHead, store: &EmbeddingStore, labels: &[usize]) -> f64 {
        let correct = store
            .rows()
            .zip(labels)
            .filter(|(r, &l)| {
                let p = head.probabilities(r).unwrap();
                let best = (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
                best == l
            })
            .count();
        correct as f64 / labels.len() as f64
    }

    #[test]
    fn learns_separable_classes() {
        let (store, labels) = separable(200, 1);
        let params = ClassHeadParams { epochs: 200, seed: 5, ..Default::default() };
        let head = train_class_head(&store, &labels, 2, &params).unwrap();
        assert!(accuracy(&head, &store, &labels) >= 0.95);
        let h = &head.loss_history;
        assert!(h[1] <= h[0]);
        assert!(h.last().unwrap() < &h[0]);
    }

    #[test]
    fn rejects_single_label() {
        let (store, _) = separable(10, 2);
        let e = train_class_head(&store, &[0; 10], 1, &ClassHeadParams::default()).unwrap_err();
        assert_eq!(e.code(), "DEGENERATE_LABELS");
    }

    #[test]
    fn deterministic_given_seed() {
        let (store, labels) = separable(50, 3);
        let p = ClassHeadParams { epochs: 3, seed: 9, ..Default::default() };
        assert_eq!(
            train_class_head(&store, &labels, 2, &p).unwrap(),
            train_class_head(&store, &labels, 2, &p).unwrap()
        );
    }

    #[test]
    fn softmax_sums_to_one() {
        let (store, labels) = separable(40, 4);
        let labels: Vec<usize> = labels.iter().enumerate().map(|(i, l)| l + 2 * (i % 3)).collect();
        let head = train_class_head(&store, &labels, 6, &ClassHeadParams { epochs: 2, ..Default::default() }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            let x = [rng.random_range(-50.0f32..50.0), rng.random_range(-50.0f32..50.0)];
            let s: f64 = head.probabilities(&x).unwrap().iter().sum();
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn dispersion_examples() {
        assert_eq!(dispersion_of(&[0.25; 4]), 0.0);
        assert_eq!(dispersion_of(&[1.0, 0.0]), 0.25);
        assert_eq!(kurtosis_of(&[0.25; 4]), 0.0);
        // one-hot over 4: values {1,0,0,0}, mean 1/4, m2 = 3/16, m4 = 21/256
        assert!((kurtosis_of(&[1.0, 0.0, 0.0, 0.0]) - (21.0 / 256.0 / (9.0 / 256.0) - 3.0)).abs() < 1e-12);
    }

    #[test]
    fn dispersion_bound_matches_grid_maximum() {
        // brute-force the maximum variance over a grid on the simplex
        for k in 2..=4usize {
            let steps = 20;
            let mut best = 0.0f64;
            let mut stack = vec![(Vec::<usize>::new(), steps)];
            while let Some((prefix, left)) = stack.pop() {
                if prefix.len() == k - 1 {
                    let mut p: Vec<f64> = prefix.iter().map(|&c| c as f64 / steps as f64).collect();
                    p.push(left as f64 / steps as f64);
                    best = best.max(dispersion_of(&p));
                    continue;
                }
                for c in 0..=left {
                    let mut next = prefix.clone();
                    next.push(c);
                    stack.push((next, left - c));
                }
            }
            let bound = (k as f64 - 1.0) / (k * k) as f64;
            assert!((best - bound).abs() < 1e-12, "k={k}");
        }
    }

    #[test]
    fn persists() {
        let (store, labels) = separable(30, 6);
        let head = train_class_head(&store, &labels, 2, &ClassHeadParams { epochs: 2, ..Default::default() }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("head.bin");
        head.save(&Meta::new(), &p).unwrap();
        assert_eq!(ClassHead::load(&p).unwrap(), head);
    }

    proptest! {
        #[test]
        fn dispersion_within_bound(raw in proptest::collection::vec(0.0f64..1.0, 2..12)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 0.0);
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let k = p.len() as f64;
            let d = dispersion_of(&p);
            prop_assert!(d >= 0.0 && d <= (k - 1.0) / (k * k) + 1e-15);
        }
    }
}
