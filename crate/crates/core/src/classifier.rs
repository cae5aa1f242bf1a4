//! Trainable softmax classifier head over frozen embeddings.
//!
//! The head is either linear or a single ReLU hidden layer followed by a
//! linear output. Training uses Adam with optional cosine learning-rate
//! decay, and the head exposes the analytic gradient of the cross-entropy
//! loss with respect to its *input*, which the scoring engine uses to pick
//! fusion mask positions.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{self, Matrix};
use crate::seeding;

const CHECKPOINT_MAGIC: &[u8; 8] = b"DCRNHEAD";
const CHECKPOINT_VERSION: u32 = 1;

/// Shape of the classifier head. The hidden layer, when present, uses ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadArch {
    pub input_dim: usize,
    pub hidden: Option<usize>,
    pub n_classes: usize,
}

impl HeadArch {
    pub fn linear(input_dim: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: None,
            n_classes,
        }
    }

    pub fn with_hidden(input_dim: usize, hidden: usize, n_classes: usize) -> Self {
        Self {
            input_dim,
            hidden: Some(hidden),
            n_classes,
        }
    }

    /// Total parameter count under the flat layout
    /// [w1, b1] for linear heads, [w1, b1, w2, b2] with a hidden layer.
    pub fn param_count(&self) -> usize {
        match self.hidden {
            None => self.n_classes * self.input_dim + self.n_classes,
            Some(h) => h * self.input_dim + h + self.n_classes * h + self.n_classes,
        }
    }
}

/// Softmax classifier head with parameters stored as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    arch: HeadArch,
    params: Vec<f64>,
}

impl ClassifierHead {
    /// All-zero parameters; predicts the uniform distribution everywhere.
    pub fn zeroed(arch: HeadArch) -> Self {
        Self {
            arch,
            params: vec![0.0; arch.param_count()],
        }
    }

    /// Seeded uniform initialization scaled by 1/sqrt(fan_in) per layer.
    pub fn init_seeded(arch: HeadArch, seed: u64) -> Self {
        let mut rng = seeding::rng(seed);
        let mut head = Self::zeroed(arch);
        let (rows1, cols1) = match arch.hidden {
            None => (arch.n_classes, arch.input_dim),
            Some(h) => (h, arch.input_dim),
        };
        let bound1 = 1.0 / (cols1 as f64).sqrt();
        for i in 0..rows1 * cols1 {
            head.params[i] = rng.gen_range(-bound1..bound1);
        }
        if let Some(h) = arch.hidden {
            let off = h * arch.input_dim + h;
            let bound2 = 1.0 / (h as f64).sqrt();
            for i in 0..arch.n_classes * h {
                head.params[off + i] = rng.gen_range(-bound2..bound2);
            }
        }
        head
    }

    pub fn from_params(arch: HeadArch, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::InvalidInput(format!(
                "parameter count {} does not match architecture ({} expected)",
                params.len(),
                arch.param_count()
            )));
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> HeadArch {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn split_linear(&self) -> (&[f64], &[f64]) {
        let nw = self.arch.n_classes * self.arch.input_dim;
        (&self.params[..nw], &self.params[nw..])
    }

    fn split_hidden(&self) -> (&[f64], &[f64], &[f64], &[f64]) {
        let h = self.arch.hidden.expect("hidden layout");
        let d = self.arch.input_dim;
        let c = self.arch.n_classes;
        let (w1, rest) = self.params.split_at(h * d);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(c * h);
        (w1, b1, w2, b2)
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.arch.input_dim {
            return Err(Error::InvalidInput(format!(
                "input dimension {} does not match head input {}",
                z.len(),
                self.arch.input_dim
            )));
        }
        Ok(())
    }

    /// Raw class logits for one embedding.
    pub fn logits(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.check_input(z)?;
        let c = self.arch.n_classes;
        match self.arch.hidden {
            None => {
                let (w, b) = self.split_linear();
                let d = self.arch.input_dim;
                let mut out = Vec::with_capacity(c);
                for k in 0..c {
                    let row = &w[k * d..(k + 1) * d];
                    let dot: f64 = row.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
                    out.push(dot + b[k]);
                }
                Ok(out)
            }
            Some(h) => {
                let (w1, b1, w2, b2) = self.split_hidden();
                let d = self.arch.input_dim;
                let mut act = Vec::with_capacity(h);
                for k in 0..h {
                    let row = &w1[k * d..(k + 1) * d];
                    let pre: f64 =
                        row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>() + b1[k];
                    act.push(pre.max(0.0));
                }
                let mut out = Vec::with_capacity(c);
                for k in 0..c {
                    let row = &w2[k * h..(k + 1) * h];
                    let dot: f64 = row.iter().zip(act.iter()).map(|(a, b)| a * b).sum();
                    out.push(dot + b2[k]);
                }
                Ok(out)
            }
        }
    }

    /// Predicted class probabilities (softmax of the logits).
    pub fn predict_proba(&self, z: &[f64]) -> Result<Vec<f64>> {
        numerics::softmax(&self.logits(z)?)
    }

    /// Argmax class; ties resolve to the lowest class index.
    pub fn predicted_class(&self, z: &[f64]) -> Result<usize> {
        let p = self.predict_proba(z)?;
        Ok(argmax(&p))
    }

    /// Gradient of the cross-entropy loss at `target` with respect to the
    /// input embedding. For a linear head this is W^T (p - onehot(target)).
    pub fn input_gradient(&self, z: &[f64], target: usize) -> Result<Vec<f64>> {
        self.check_input(z)?;
        if target >= self.arch.n_classes {
            return Err(Error::InvalidInput(format!(
                "target class {target} out of range"
            )));
        }
        let p = self.predict_proba(z)?;
        let mut dlogits = p;
        dlogits[target] -= 1.0;
        let d = self.arch.input_dim;
        let c = self.arch.n_classes;
        match self.arch.hidden {
            None => {
                let (w, _) = self.split_linear();
                let mut grad = vec![0.0; d];
                for k in 0..c {
                    let row = &w[k * d..(k + 1) * d];
                    let g = dlogits[k];
                    for (gi, wi) in grad.iter_mut().zip(row.iter()) {
                        *gi += wi * g;
                    }
                }
                Ok(grad)
            }
            Some(h) => {
                let (w1, b1, w2, _) = self.split_hidden();
                // Recompute hidden pre-activations to know which units fire.
                let mut dpre = vec![0.0; h];
                for k in 0..h {
                    let row = &w1[k * d..(k + 1) * d];
                    let pre: f64 =
                        row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>() + b1[k];
                    if pre > 0.0 {
                        let mut da = 0.0;
                        for j in 0..c {
                            da += w2[j * h + k] * dlogits[j];
                        }
                        dpre[k] = da;
                    }
                }
                let mut grad = vec![0.0; d];
                for k in 0..h {
                    if dpre[k] != 0.0 {
                        let row = &w1[k * d..(k + 1) * d];
                        for (gi, wi) in grad.iter_mut().zip(row.iter()) {
                            *gi += wi * dpre[k];
                        }
                    }
                }
                Ok(grad)
            }
        }
    }

    /// Cross-entropy loss and parameter gradient for one sample, added into
    /// `grad` (length [`HeadArch::param_count`]; caller scales by the batch
    /// size).
    pub fn accumulate_gradients(&self, z: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let d = self.arch.input_dim;
        let c = self.arch.n_classes;
        match self.arch.hidden {
            None => {
                let p = self.predict_proba(z).expect("validated input");
                let loss = -p[label].max(numerics::LOG_CLAMP).ln();
                let nw = c * d;
                for k in 0..c {
                    let g = p[k] - if k == label { 1.0 } else { 0.0 };
                    let row = &mut grad[k * d..(k + 1) * d];
                    for (gi, zi) in row.iter_mut().zip(z.iter()) {
                        *gi += g * zi;
                    }
                    grad[nw + k] += g;
                }
                loss
            }
            Some(h) => {
                let (w1, b1, w2, b2) = self.split_hidden();
                let mut pre = vec![0.0; h];
                let mut act = vec![0.0; h];
                for k in 0..h {
                    let row = &w1[k * d..(k + 1) * d];
                    pre[k] = row.iter().zip(z.iter()).map(|(a, b)| a * b).sum::<f64>() + b1[k];
                    act[k] = pre[k].max(0.0);
                }
                let mut logits = vec![0.0; c];
                for k in 0..c {
                    let row = &w2[k * h..(k + 1) * h];
                    logits[k] =
                        row.iter().zip(act.iter()).map(|(a, b)| a * b).sum::<f64>() + b2[k];
                }
                let p = numerics::softmax(&logits).expect("non-empty logits");
                let loss = -p[label].max(numerics::LOG_CLAMP).ln();
                let mut dlogits = p;
                dlogits[label] -= 1.0;

                let off_b1 = h * d;
                let off_w2 = off_b1 + h;
                let off_b2 = off_w2 + c * h;
                for k in 0..c {
                    let g = dlogits[k];
                    let row = &mut grad[off_w2 + k * h..off_w2 + (k + 1) * h];
                    for (gi, ai) in row.iter_mut().zip(act.iter()) {
                        *gi += g * ai;
                    }
                    grad[off_b2 + k] += g;
                }
                for k in 0..h {
                    if pre[k] > 0.0 {
                        let mut da = 0.0;
                        for j in 0..c {
                            da += w2[j * h + k] * dlogits[j];
                        }
                        let row = &mut grad[k * d..(k + 1) * d];
                        for (gi, zi) in row.iter_mut().zip(z.iter()) {
                            *gi += da * zi;
                        }
                        grad[off_b1 + k] += da;
                    }
                }
                loss
            }
        }
    }

    /// Mean cross-entropy loss over the given sample indices.
    pub fn mean_loss(&self, embeddings: &Matrix, labels: &[u32], indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("empty index set".into()));
        }
        let mut acc = 0.0;
        for &i in indices {
            let p = self.predict_proba(embeddings.row(i))?;
            acc -= p[labels[i] as usize].max(numerics::LOG_CLAMP).ln();
        }
        Ok(acc / indices.len() as f64)
    }

    /// Fraction of indices whose argmax prediction matches the label.
    pub fn evaluate_accuracy(
        &self,
        embeddings: &Matrix,
        labels: &[u32],
        indices: &[usize],
    ) -> Result<f64> {
        if indices.is_empty() {
            return Err(Error::InvalidInput("empty index set".into()));
        }
        let mut correct = 0usize;
        for &i in indices {
            if self.predicted_class(embeddings.row(i))? == labels[i] as usize {
                correct += 1;
            }
        }
        Ok(correct as f64 / indices.len() as f64)
    }

    /// Write the head to a versioned little-endian binary checkpoint.
    pub fn save_checkpoint<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut buf = Vec::with_capacity(24 + self.params.len() * 8);
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(self.arch.input_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.arch.hidden.unwrap_or(0) as u32).to_le_bytes());
        buf.extend_from_slice(&(self.arch.n_classes as u32).to_le_bytes());
        for &p in &self.params {
            buf.extend_from_slice(&p.to_le_bytes());
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    /// Read a checkpoint written by [`ClassifierHead::save_checkpoint`].
    pub fn load_checkpoint<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        if bytes.len() < 24 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a DCRNHEAD checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let input_dim = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let hidden = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
        let n_classes = u32::from_le_bytes(bytes[20..24].try_into().unwrap()) as usize;
        let arch = HeadArch {
            input_dim,
            hidden: (hidden > 0).then_some(hidden),
            n_classes,
        };
        let expected = 24 + arch.param_count() * 8;
        if bytes.len() != expected {
            return Err(Error::Format(format!(
                "checkpoint size {} does not match architecture (expected {})",
                bytes.len(),
                expected
            )));
        }
        let params = bytes[24..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_params(arch, params)
    }
}

/// First index of the maximum value (ties to the lowest index).
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Adam hyperparameters and per-parameter moment accumulators.
#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: usize,
}

impl AdamState {
    pub fn new(lr: f64, param_count: usize) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    /// One bias-corrected update; `lr_scale` applies the decay schedule.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64], lr_scale: f64) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let lr = self.lr * lr_scale;
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub cosine_decay: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            batch_size: 128,
            epochs: 100,
            cosine_decay: true,
            seed: 0,
        }
    }
}

/// Per-epoch mean losses; entry 0 is the loss before any update.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub loss_trace: Vec<f64>,
}

/// Train the head in place on the labeled subset with mini-batch Adam.
///
/// Batch order is shuffled by a PRNG seeded from `cfg.seed`; the last
/// partial batch is kept. With cosine decay the step-t learning rate is
/// lr * 0.5 * (1 + cos(pi * t / T)) over the total step count T.
pub fn train(
    head: &mut ClassifierHead,
    embeddings: &Matrix,
    labels: &[u32],
    labeled: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    if labeled.is_empty() {
        return Err(Error::InvalidInput("empty labeled set".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::InvalidInput(
            "batch size and epochs must be at least 1".into(),
        ));
    }
    let arch = head.arch();
    if embeddings.cols() != arch.input_dim {
        return Err(Error::InvalidInput(format!(
            "embedding dimension {} does not match head input {}",
            embeddings.cols(),
            arch.input_dim
        )));
    }
    for &i in labeled {
        if i >= embeddings.rows() {
            return Err(Error::InvalidInput(format!("index {i} out of range")));
        }
        if labels[i] as usize >= arch.n_classes {
            return Err(Error::InvalidInput(format!(
                "label {} out of range for {} classes",
                labels[i], arch.n_classes
            )));
        }
    }

    let mut rng = seeding::rng(cfg.seed);
    let mut adam = AdamState::new(cfg.lr, arch.param_count());
    let mut order: Vec<usize> = labeled.to_vec();
    let batches_per_epoch = order.len().div_ceil(cfg.batch_size);
    let total_steps = (cfg.epochs * batches_per_epoch) as f64;

    let mut trace = Vec::with_capacity(cfg.epochs + 1);
    trace.push(head.mean_loss(embeddings, labels, labeled)?);

    let mut grad = vec![0.0; arch.param_count()];
    let mut step = 0usize;
    for _epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                head.accumulate_gradients(embeddings.row(i), labels[i] as usize, &mut grad);
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            let lr_scale = if cfg.cosine_decay {
                0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps).cos())
            } else {
                1.0
            };
            adam.step(head.params_mut(), &grad, lr_scale);
            step += 1;
        }
        trace.push(head.mean_loss(embeddings, labels, labeled)?);
    }

    if !head.params().iter().all(|p| p.is_finite()) {
        return Err(Error::InvalidInput(
            "training produced non-finite parameters".into(),
        ));
    }
    Ok(TrainReport { loss_trace: trace })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_head() -> ClassifierHead {
        // 2x2 identity weights, zero bias
        ClassifierHead::from_params(
            HeadArch::linear(2, 2),
            vec![1.0, 0.0, 0.0, 1.0, 0.0, 0.0],
        )
        .unwrap()
    }

    #[test]
    fn zero_head_predicts_uniform() {
        let head = ClassifierHead::zeroed(HeadArch::linear(3, 4));
        let p = head.predict_proba(&[0.3, -1.0, 2.0]).unwrap();
        for &x in &p {
            assert!((x - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_head_matches_softmax_oracle() {
        let head = identity_head();
        let p = head.predict_proba(&[3.0, 1.0]).unwrap();
        // hand matrix multiply + softmax([3, 1])
        assert!((p[0] - 0.880797).abs() < 1e-6);
        assert!((p[1] - 0.119203).abs() < 1e-6);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn predict_rejects_dimension_mismatch() {
        let head = identity_head();
        assert!(head.predict_proba(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn input_gradient_identity_case() {
        let head = identity_head();
        let g = head.input_gradient(&[0.0, 0.0], 0).unwrap();
        assert!((g[0] + 0.5).abs() < 1e-15);
        assert!((g[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn input_gradient_vanishes_at_confident_prediction() {
        // Huge margin makes p effectively one-hot at the target.
        let head = ClassifierHead::from_params(
            HeadArch::linear(2, 2),
            vec![100.0, 0.0, -100.0, 0.0, 0.0, 0.0],
        )
        .unwrap();
        let g = head.input_gradient(&[1.0, 0.0], 0).unwrap();
        assert!(g.iter().all(|x| x.abs() < 1e-12));
    }

    fn finite_diff_input(head: &ClassifierHead, z: &[f64], target: usize) -> Vec<f64> {
        let h = 1e-5;
        let mut g = vec![0.0; z.len()];
        let loss = |z: &[f64]| {
            let p = head.predict_proba(z).unwrap();
            -p[target].ln()
        };
        for i in 0..z.len() {
            let mut zp = z.to_vec();
            let mut zm = z.to_vec();
            zp[i] += h;
            zm[i] -= h;
            g[i] = (loss(&zp) - loss(&zm)) / (2.0 * h);
        }
        g
    }

    fn finite_diff_params(
        head: &ClassifierHead,
        z: &[f64],
        target: usize,
    ) -> Vec<f64> {
        let h = 1e-5;
        let mut g = vec![0.0; head.params().len()];
        for i in 0..g.len() {
            let mut hp = head.clone();
            hp.params_mut()[i] += h;
            let mut hm = head.clone();
            hm.params_mut()[i] -= h;
            let lp = -hp.predict_proba(z).unwrap()[target].ln();
            let lm = -hm.predict_proba(z).unwrap()[target].ln();
            g[i] = (lp - lm) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = seeding::rng(411);
        for case in 0..24 {
            let d = 2 + case % 5;
            let c = 2 + case % 3;
            let arch = if case % 2 == 0 {
                HeadArch::linear(d, c)
            } else {
                HeadArch::with_hidden(d, 3, c)
            };
            let head = ClassifierHead::init_seeded(arch, 1000 + case as u64);
            let z: Vec<f64> = (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let target = case % c;

            let analytic = head.input_gradient(&z, target).unwrap();
            let numeric = finite_diff_input(&head, &z, target);
            for (a, n) in analytic.iter().zip(numeric.iter()) {
                assert!(rel_err(*a, *n) < 1e-4, "input grad {a} vs {n}");
            }

            let mut pgrad = vec![0.0; head.params().len()];
            head.accumulate_gradients(&z, target, &mut pgrad);
            let pnum = finite_diff_params(&head, &z, target);
            for (a, n) in pgrad.iter().zip(pnum.iter()) {
                assert!(rel_err(*a, *n) < 1e-4, "param grad {a} vs {n}");
            }
        }
    }

    fn blob_dataset() -> (Matrix, Vec<u32>, Vec<usize>) {
        // Two well separated 2-d blobs, 10 points each.
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        let mut rng = seeding::rng(7);
        for k in 0..2u32 {
            let cx = if k == 0 { -4.0 } else { 4.0 };
            for _ in 0..10 {
                rows.push(vec![
                    cx + rng.gen_range(-0.5..0.5),
                    rng.gen_range(-0.5..0.5),
                ]);
                labels.push(k);
            }
        }
        let m = Matrix::from_rows(&rows).unwrap();
        let idx = (0..m.rows()).collect();
        (m, labels, idx)
    }

    #[test]
    fn training_separable_blobs_reaches_full_accuracy() {
        let (m, labels, idx) = blob_dataset();
        let mut head = ClassifierHead::init_seeded(HeadArch::linear(2, 2), 3);
        let cfg = TrainConfig {
            epochs: 50,
            lr: 0.05,
            cosine_decay: false,
            seed: 5,
            ..TrainConfig::default()
        };
        train(&mut head, &m, &labels, &idx, &cfg).unwrap();
        let acc = head.evaluate_accuracy(&m, &labels, &idx).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn one_epoch_decreases_loss() {
        let (m, labels, _) = blob_dataset();
        // one labeled sample per class
        let idx = vec![0, 10];
        let mut head = ClassifierHead::init_seeded(HeadArch::linear(2, 2), 11);
        let cfg = TrainConfig {
            epochs: 1,
            seed: 2,
            cosine_decay: false,
            ..TrainConfig::default()
        };
        let report = train(&mut head, &m, &labels, &idx, &cfg).unwrap();
        assert_eq!(report.loss_trace.len(), 2);
        assert!(report.loss_trace[1] < report.loss_trace[0]);
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_unchanged() {
        let (m, labels, idx) = blob_dataset();
        let mut head = ClassifierHead::init_seeded(HeadArch::linear(2, 2), 13);
        let before = head.params().to_vec();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 3,
            seed: 1,
            ..TrainConfig::default()
        };
        train(&mut head, &m, &labels, &idx, &cfg).unwrap();
        assert_eq!(before, head.params());
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (m, labels, idx) = blob_dataset();
        let cfg = TrainConfig {
            epochs: 5,
            seed: 42,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let mut h1 = ClassifierHead::init_seeded(HeadArch::with_hidden(2, 4, 2), 9);
        let mut h2 = ClassifierHead::init_seeded(HeadArch::with_hidden(2, 4, 2), 9);
        let r1 = train(&mut h1, &m, &labels, &idx, &cfg).unwrap();
        let r2 = train(&mut h2, &m, &labels, &idx, &cfg).unwrap();
        assert_eq!(r1.loss_trace, r2.loss_trace);
        assert_eq!(h1.params(), h2.params());
    }

    #[test]
    fn adam_single_step_is_bounded_by_lr() {
        let mut params = vec![0.5, -0.25, 1.0];
        let before = params.clone();
        let mut adam = AdamState::new(0.01, 3);
        adam.step(&mut params, &[0.3, -2.0, 0.0001], 1.0);
        for (b, a) in before.iter().zip(params.iter()) {
            assert!((b - a).abs() <= 0.01 + 1e-12);
            assert!(a.is_finite());
        }
    }

    #[test]
    fn train_rejects_empty_labeled_set() {
        let (m, labels, _) = blob_dataset();
        let mut head = ClassifierHead::zeroed(HeadArch::linear(2, 2));
        let err = train(&mut head, &m, &labels, &[], &TrainConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn accuracy_counts_correctly() {
        let head = identity_head();
        let m = Matrix::from_rows(&[
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![3.0, 1.0],
            vec![1.0, 3.0],
        ])
        .unwrap();
        // 3 of 4 correct
        let labels = vec![0, 1, 0, 0];
        let idx = vec![0, 1, 2, 3];
        assert_eq!(head.evaluate_accuracy(&m, &labels, &idx).unwrap(), 0.75);
        // all correct / all wrong
        assert_eq!(
            head.evaluate_accuracy(&m, &vec![0, 1, 0, 1], &idx).unwrap(),
            1.0
        );
        assert_eq!(
            head.evaluate_accuracy(&m, &vec![1, 0, 1, 0], &idx).unwrap(),
            0.0
        );
        assert!(head.evaluate_accuracy(&m, &labels, &[]).is_err());
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("head.dcrnhead");
        let head = ClassifierHead::init_seeded(HeadArch::with_hidden(5, 3, 4), 77);
        head.save_checkpoint(&path).unwrap();
        let loaded = ClassifierHead::load_checkpoint(&path).unwrap();
        assert_eq!(head, loaded);
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        std::fs::write(&path, b"NOTAHEADxxxxxxxxxxxxxxxxxxxx").unwrap();
        assert!(ClassifierHead::load_checkpoint(&path).is_err());
    }
}
