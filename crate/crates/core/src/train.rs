//! Adam training with a step-halving learning rate.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{evaluate, SsimParams};
use crate::network::{
    image_to_tensor, tensor_to_image, GradTable, Network, Param, Tensor, ValueGraph,
};
use crate::noise::{add_noise, derive_seed, NoiseSpec};
use crate::Image;

type Batch = (Vec<Tensor<f32>>, Vec<Tensor<f32>>);

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// Validation crops taken from at most this many training images.
const MAX_VALIDATION_IMAGES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainPlan {
    pub base_lr: f64,
    /// Epochs between learning-rate halvings.
    pub halve_every: usize,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    /// Side of the square training crops; a multiple of the network's
    /// input multiple.
    pub patch_size: usize,
    pub noise: NoiseSpec,
    pub seed: u64,
}

impl Default for TrainPlan {
    fn default() -> Self {
        Self {
            base_lr: 1e-4,
            halve_every: 25,
            epochs: 100,
            steps_per_epoch: 50,
            batch_size: 8,
            patch_size: 64,
            noise: NoiseSpec::gaussian(30.0, 0),
            seed: 0,
        }
    }
}

impl TrainPlan {
    pub fn validate(&self, input_multiple: usize) -> Result<()> {
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return Err(Error::Config(format!(
                "base learning rate must be positive, got {}",
                self.base_lr
            )));
        }
        if self.halve_every == 0 {
            return Err(Error::Config("halve_every must be positive".into()));
        }
        if self.batch_size == 0 || self.steps_per_epoch == 0 {
            return Err(Error::Config(
                "batch size and steps per epoch must be positive".into(),
            ));
        }
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(input_multiple) {
            return Err(Error::Config(format!(
                "patch size {} is not a positive multiple of {input_multiple}",
                self.patch_size
            )));
        }
        self.noise
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }
}

/// `base_lr / 2^floor(epoch / halve_every)`.
pub fn lr_schedule(epoch: usize, plan: &TrainPlan) -> f64 {
    let halvings = (epoch / plan.halve_every.max(1)) as i32;
    plan.base_lr / 2f64.powi(halvings)
}

/// First and second moment estimates for every parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(params: &[Param]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            t: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            epsilon: ADAM_EPSILON,
        }
    }
}

/// One bias-corrected Adam update. Non-finite gradients abort the step
/// before any state is touched.
pub fn adam_step(
    params: &mut [Param],
    grads: &[Tensor<f32>],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::Parameter(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "{} gradients / {} moment slots for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.value.dims() != g.dims() || m.len() != p.value.len() {
            return Err(Error::Shape(format!(
                "gradient shape mismatch for {}",
                p.name
            )));
        }
    }
    if let Some((p, _)) = params.iter().zip(grads).find(|(_, g)| !g.all_finite()) {
        return Err(Error::Numeric(format!(
            "non-finite gradient for {}",
            p.name
        )));
    }

    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for (j, w) in p.value.data_mut().iter_mut().enumerate() {
            let gj = g.data()[j] as f64;
            m[j] = b1 * m[j] + (1.0 - b1) * gj;
            v[j] = b2 * v[j] + (1.0 - b2) * gj * gj;
            let update = lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
            *w = (*w as f64 - update) as f32;
        }
    }
    Ok(())
}

/// Mean of `(pred - target)²` over every element of the batch, and its
/// gradient `2(pred - target)/count`.
pub fn mse_loss<T: crate::network::Scalar>(
    pred: &[Tensor<T>],
    target: &[Tensor<T>],
) -> Result<(f64, Vec<Tensor<T>>)> {
    if pred.len() != target.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} targets",
            pred.len(),
            target.len()
        )));
    }
    if let Some((p, t)) = pred.iter().zip(target).find(|(p, t)| p.dims() != t.dims()) {
        return Err(Error::Shape(format!("{:?} vs {:?}", p.dims(), t.dims())));
    }
    let count: usize = pred.iter().map(Tensor::len).sum();
    if count == 0 {
        return Err(Error::Shape("empty batch".into()));
    }
    let scale = 2.0 / count as f64;
    let mut sum = 0.0;
    let mut grads = Vec::with_capacity(pred.len());
    for (p, t) in pred.iter().zip(target) {
        let g: Vec<T> = p
            .data()
            .iter()
            .zip(t.data())
            .map(|(&a, &b)| {
                let d = a.to_f64() - b.to_f64();
                sum += d * d;
                T::from_f64(scale * d)
            })
            .collect();
        grads.push(Tensor::new(p.dims().to_vec(), g)?);
    }
    Ok((sum / count as f64, grads))
}

/// Forward, MSE, backward and Adam on one batch of `1 x H x W` tensors.
/// Returns the batch loss before the update.
pub fn train_step(
    net: &mut Network,
    state: &mut AdamState,
    inputs: &[Tensor<f32>],
    targets: &[Tensor<f32>],
    lr: f64,
) -> Result<f64> {
    let net_ref: &Network = net;
    let mut recorded: Vec<(ValueGraph<f32>, Tensor<f32>)> = inputs
        .par_iter()
        .map(|x| {
            let mut g = ValueGraph::new();
            let y = net_ref.forward_recorded(&mut g, x)?;
            Ok((g, y))
        })
        .collect::<Result<_>>()?;
    let outputs: Vec<Tensor<f32>> = recorded.iter().map(|(_, y)| y.clone()).collect();
    let (loss, out_grads) = mse_loss(&outputs, targets)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite training loss {loss}")));
    }
    let per_item: Vec<GradTable<f32>> = recorded
        .par_iter_mut()
        .zip(out_grads.par_iter())
        .map(|((g, _), og)| net_ref.backward(g, og))
        .collect::<Result<_>>()?;
    // index-ordered reduction keeps results independent of worker count
    let mut total = GradTable::zeros_like(net_ref);
    for g in &per_item {
        total.add_assign(g);
    }
    adam_step(net.params_mut(), total.tensors(), state, lr)?;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Mean PSNR / SSIM of the noisy validation crops themselves.
    pub input_psnr: f64,
    pub input_ssim: f64,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    /// `epoch,lr,loss,psnr,ssim`, one row per epoch, after any `comments`
    /// (written as `# ...` lines).
    pub fn write_csv(&self, w: &mut impl Write, comments: &[String]) -> std::io::Result<()> {
        for c in comments {
            writeln!(w, "# {c}")?;
        }
        writeln!(w, "epoch,lr,loss,psnr,ssim")?;
        for r in &self.records {
            writeln!(
                w,
                "{},{:e},{:.9},{:.6},{:.6}",
                r.epoch, r.lr, r.loss, r.psnr, r.ssim
            )?;
        }
        Ok(())
    }
}

struct Validation {
    noisy: Vec<Tensor<f32>>,
    clean: Vec<Image>,
}

impl Validation {
    fn new(images: &[Image], plan: &TrainPlan) -> Result<Self> {
        let p = plan.patch_size;
        let mut noisy = Vec::new();
        let mut clean = Vec::new();
        for (i, img) in images.iter().take(MAX_VALIDATION_IMAGES).enumerate() {
            let crop = img.crop((img.width() - p) / 2, (img.height() - p) / 2, p, p)?;
            let spec = plan
                .noise
                .with_seed(derive_seed(plan.seed, u64::MAX, i as u64));
            noisy.push(image_to_tensor(&add_noise(&crop, &spec)?));
            clean.push(crop);
        }
        Ok(Self { noisy, clean })
    }

    fn score(&self, images: &[Image]) -> Result<(f64, f64)> {
        let params = SsimParams::default();
        let n = self.clean.len() as f64;
        let (mut p, mut s) = (0.0, 0.0);
        for (clean, test) in self.clean.iter().zip(images) {
            let m = evaluate(clean, &test.clamped(0.0, 255.0), &params)?;
            p += m.psnr_db;
            s += m.ssim;
        }
        Ok((p / n, s / n))
    }

    fn evaluate(&self, net: &Network) -> Result<(f64, f64)> {
        let outs: Vec<Image> = self
            .noisy
            .par_iter()
            .map(|x| tensor_to_image(&net.forward_tensor(x)?))
            .collect::<Result<_>>()?;
        self.score(&outs)
    }

    fn inputs(&self) -> Result<(f64, f64)> {
        let imgs: Vec<Image> = self
            .noisy
            .iter()
            .map(tensor_to_image)
            .collect::<Result<_>>()?;
        self.score(&imgs)
    }
}

/// Draws a batch of random crops and their noisy versions for `(epoch, step)`.
fn sample_batch(images: &[Image], plan: &TrainPlan, epoch: usize, step: usize) -> Result<Batch> {
    let stream = (epoch * plan.steps_per_epoch + step) as u64;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(plan.seed, 1, stream));
    let p = plan.patch_size;
    let mut inputs = Vec::with_capacity(plan.batch_size);
    let mut targets = Vec::with_capacity(plan.batch_size);
    for b in 0..plan.batch_size {
        let img = &images[rng.random_range(0..images.len())];
        let x0 = rng.random_range(0..=img.width() - p);
        let y0 = rng.random_range(0..=img.height() - p);
        let crop = img.crop(x0, y0, p, p)?;
        let spec = plan
            .noise
            .with_seed(derive_seed(plan.seed ^ 0x6e_6f69_7365, stream, b as u64));
        inputs.push(image_to_tensor(&add_noise(&crop, &spec)?));
        targets.push(image_to_tensor(&crop));
    }
    Ok((inputs, targets))
}

pub fn train(net: &Network, images: &[Image], plan: &TrainPlan) -> Result<(Network, TrainHistory)> {
    train_with(net, images, plan, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    net: &Network,
    images: &[Image],
    plan: &TrainPlan,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Network, TrainHistory)> {
    if images.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    plan.validate(net.config().input_multiple())?;
    let p = plan.patch_size;
    if let Some(img) = images.iter().find(|i| i.width() < p || i.height() < p) {
        return Err(Error::Config(format!(
            "{}x{} image is smaller than the {p}x{p} patch",
            img.width(),
            img.height()
        )));
    }

    let mut net = net.clone();
    let mut history = TrainHistory::default();
    if plan.epochs == 0 {
        return Ok((net, history));
    }
    let validation = Validation::new(images, plan)?;
    (history.input_psnr, history.input_ssim) = validation.inputs()?;

    let mut state = AdamState::new(net.params());
    for epoch in 0..plan.epochs {
        let lr = lr_schedule(epoch, plan);
        let mut loss_sum = 0.0;
        for step in 0..plan.steps_per_epoch {
            let (inputs, targets) = sample_batch(images, plan, epoch, step)?;
            let loss = train_step(&mut net, &mut state, &inputs, &targets, lr)
                .map_err(|e| Error::Numeric(format!("epoch {epoch} step {step}: {e}")))?;
            loss_sum += loss;
        }
        let (psnr, ssim) = validation.evaluate(&net)?;
        let record = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / plan.steps_per_epoch as f64,
            psnr,
            ssim,
        };
        on_epoch(&record);
        history.records.push(record);
    }
    Ok((net, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, StageConfig};

    #[test]
    fn schedule_halves() {
        let plan = TrainPlan::default();
        assert_eq!(lr_schedule(0, &plan), 1e-4);
        assert_eq!(lr_schedule(24, &plan), 1e-4);
        assert_eq!(lr_schedule(25, &plan), 5e-5);
        assert_eq!(lr_schedule(50, &plan), 2.5e-5);
        assert_eq!(lr_schedule(75, &plan), 1.25e-5);
    }

    fn scalar(v: f32) -> Vec<Param> {
        vec![Param {
            name: "w".into(),
            value: Tensor::new(vec![1], vec![v]).unwrap(),
        }]
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new(&p);
        let g = vec![Tensor::new(vec![1], vec![1.0f32]).unwrap()];
        adam_step(&mut p, &g, &mut st, 0.01).unwrap();
        assert!((p[0].value.data()[0] as f64 + 0.01).abs() < 1e-8);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_zero_gradient_is_stationary() {
        let mut p = scalar(1.5);
        let mut st = AdamState::new(&p);
        let g = vec![Tensor::new(vec![1], vec![0.0f32]).unwrap()];
        for _ in 0..100 {
            adam_step(&mut p, &g, &mut st, 0.1).unwrap();
        }
        assert_eq!(p[0].value.data()[0], 1.5);
    }

    #[test]
    fn adam_is_deterministic() {
        let g = vec![Tensor::new(vec![1], vec![0.37f32]).unwrap()];
        let run = || {
            let mut p = scalar(0.2);
            let mut st = AdamState::new(&p);
            adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
            adam_step(&mut p, &g, &mut st, 1e-3).unwrap();
            (p, st)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(
            a[0].value.data()[0].to_bits(),
            b[0].value.data()[0].to_bits()
        );
        assert_eq!(sa, sb);
    }

    #[test]
    fn adam_rejects_non_finite_without_mutation() {
        let mut p = scalar(0.5);
        let mut st = AdamState::new(&p);
        let before = (p.clone(), st.clone());
        let g = vec![Tensor::new(vec![1], vec![f32::NAN]).unwrap()];
        assert!(matches!(
            adam_step(&mut p, &g, &mut st, 0.1),
            Err(Error::Numeric(_))
        ));
        assert_eq!((p, st), before);
    }

    #[test]
    fn mse_examples() {
        let t = Tensor::map(1, 2, 2, vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        let (l, g) = mse_loss(std::slice::from_ref(&t), std::slice::from_ref(&t)).unwrap();
        assert_eq!(l, 0.0);
        assert!(g[0].data().iter().all(|&v| v == 0.0));

        let shifted = Tensor::map(1, 2, 2, t.data().iter().map(|v| v + 30.0).collect()).unwrap();
        let (l, _) = mse_loss(&[shifted], std::slice::from_ref(&t)).unwrap();
        assert_eq!(l, 900.0);

        assert!(mse_loss(std::slice::from_ref(&t), &[Tensor::zeros(&[1, 1, 4])]).is_err());
        assert!(mse_loss(std::slice::from_ref(&t), &[]).is_err());
    }

    #[test]
    fn mse_gradient_matches_finite_differences() {
        let pred = vec![
            Tensor::map(1, 2, 3, vec![0.1f64, -0.4, 0.9, 1.3, 0.0, -2.0]).unwrap(),
            Tensor::map(1, 1, 2, vec![0.5f64, 0.25]).unwrap(),
        ];
        let target = vec![
            Tensor::map(1, 2, 3, vec![0.3f64, 0.1, -0.2, 1.0, 0.5, 0.5]).unwrap(),
            Tensor::map(1, 1, 2, vec![-0.5f64, 1.0]).unwrap(),
        ];
        let (_, grads) = mse_loss(&pred, &target).unwrap();
        let h = 1e-6;
        for b in 0..pred.len() {
            for i in 0..pred[b].len() {
                let mut plus = pred.clone();
                plus[b].data_mut()[i] += h;
                let mut minus = pred.clone();
                minus[b].data_mut()[i] -= h;
                let fd = (mse_loss(&plus, &target).unwrap().0
                    - mse_loss(&minus, &target).unwrap().0)
                    / (2.0 * h);
                let an = grads[b].data()[i];
                assert!((fd - an).abs() <= 1e-8 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }

    fn tiny_images() -> Vec<Image> {
        (0..3)
            .map(|k| Image::from_fn(24, 20, |x, y| ((x * (k + 1) + y * 3) % 200) as f64 + 20.0))
            .collect()
    }

    #[test]
    fn zero_epochs_returns_input_network() {
        let net = build_network(&StageConfig::new("2", 2).unwrap(), 1).unwrap();
        let plan = TrainPlan {
            epochs: 0,
            patch_size: 8,
            ..TrainPlan::default()
        };
        let (out, hist) = train(&net, &tiny_images(), &plan).unwrap();
        assert_eq!(out, net);
        assert!(hist.records.is_empty());
    }

    #[test]
    fn plan_and_dataset_errors() {
        let net = build_network(&StageConfig::new("2", 2).unwrap(), 1).unwrap();
        let plan = TrainPlan {
            patch_size: 8,
            ..TrainPlan::default()
        };
        assert!(matches!(train(&net, &[], &plan), Err(Error::Config(_))));
        let odd = TrainPlan {
            patch_size: 7,
            ..plan.clone()
        };
        assert!(matches!(
            train(&net, &tiny_images(), &odd),
            Err(Error::Config(_))
        ));
        let big = TrainPlan {
            patch_size: 32,
            ..plan
        };
        assert!(matches!(
            train(&net, &tiny_images(), &big),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn history_tracks_schedule() {
        let net = build_network(&StageConfig::new("2", 2).unwrap(), 1).unwrap();
        let plan = TrainPlan {
            epochs: 5,
            halve_every: 2,
            steps_per_epoch: 2,
            batch_size: 2,
            patch_size: 8,
            base_lr: 1e-3,
            ..TrainPlan::default()
        };
        let (_, hist) = train(&net, &tiny_images(), &plan).unwrap();
        assert_eq!(hist.records.len(), 5);
        for r in &hist.records {
            assert_eq!(r.lr, lr_schedule(r.epoch, &plan));
        }
        let mut csv = Vec::new();
        hist.write_csv(&mut csv, &["seed=0".into()]).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("# seed=0\nepoch,lr,loss,psnr,ssim\n0,1e-3,"));
        assert_eq!(text.lines().count(), 7);
    }

    #[test]
    fn batches_use_fresh_noise() {
        let plan = TrainPlan {
            patch_size: 8,
            batch_size: 1,
            steps_per_epoch: 3,
            ..TrainPlan::default()
        };
        let imgs = vec![Image::filled(8, 8, 128.0)];
        let (a, _) = sample_batch(&imgs, &plan, 0, 0).unwrap();
        let (b, _) = sample_batch(&imgs, &plan, 0, 1).unwrap();
        let (c, _) = sample_batch(&imgs, &plan, 1, 0).unwrap();
        let (a2, _) = sample_batch(&imgs, &plan, 0, 0).unwrap();
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, a2);
    }
}
