//! Small convolutional network trained by plain mini-batch gradient descent.
//!
//! The benchmark architecture is two valid-padding 3x3 convolution stages
//! (8 then 16 filters), each followed by ReLU and a 2x2 max-pool, then one
//! dense layer to the two class logits. Stages are configurable so tests can
//! run reduced nets. Everything is f64 with explicit loops; the backward
//! pass is checked against central finite differences.

use serde::{Deserialize, Serialize};

use crate::image::GrayImage;
use crate::seed::stream_rng;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{PredictError, SliceDataset, TrainConfig, TrainError};

/// One convolution stage: `filters` x `kernel` x `kernel` valid convolution,
/// ReLU, and an optional 2x2/stride-2 max-pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvStage {
    pub filters: usize,
    pub kernel: usize,
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnnArch {
    pub input_h: usize,
    pub input_w: usize,
    pub stages: Vec<ConvStage>,
}

/// Per-stage tensor shapes derived from the architecture.
#[derive(Debug, Clone, Copy)]
struct StageDims {
    in_c: usize,
    in_h: usize,
    in_w: usize,
    conv_h: usize,
    conv_w: usize,
    out_h: usize,
    out_w: usize,
}

impl CnnArch {
    /// The benchmark network for a given input size.
    pub fn paper_default(input_h: usize, input_w: usize) -> Self {
        CnnArch {
            input_h,
            input_w,
            stages: vec![
                ConvStage { filters: 8, kernel: 3, pool: true },
                ConvStage { filters: 16, kernel: 3, pool: true },
            ],
        }
    }

    fn plan(&self) -> Result<Vec<StageDims>, TrainError> {
        if self.stages.is_empty() {
            return Err(TrainError::BadArch("network needs at least one stage".into()));
        }
        let mut dims = Vec::with_capacity(self.stages.len());
        let (mut c, mut h, mut w) = (1usize, self.input_h, self.input_w);
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.filters == 0 || stage.kernel == 0 {
                return Err(TrainError::BadArch(format!("stage {i} has a zero dimension")));
            }
            if h < stage.kernel || w < stage.kernel {
                return Err(TrainError::BadArch(format!(
                    "stage {i}: {h}x{w} input smaller than {k}x{k} kernel",
                    k = stage.kernel
                )));
            }
            let conv_h = h - stage.kernel + 1;
            let conv_w = w - stage.kernel + 1;
            let (out_h, out_w) = if stage.pool {
                if conv_h < 2 || conv_w < 2 {
                    return Err(TrainError::BadArch(format!(
                        "stage {i}: {conv_h}x{conv_w} map too small to pool"
                    )));
                }
                (conv_h / 2, conv_w / 2)
            } else {
                (conv_h, conv_w)
            };
            dims.push(StageDims { in_c: c, in_h: h, in_w: w, conv_h, conv_w, out_h, out_w });
            c = stage.filters;
            h = out_h;
            w = out_w;
        }
        Ok(dims)
    }

    pub fn flatten_len(&self) -> Result<usize, TrainError> {
        let dims = self.plan()?;
        let last = dims.last().unwrap();
        Ok(self.stages.last().unwrap().filters * last.out_h * last.out_w)
    }
}

/// Weights `w[((f * in_c + c) * k + ky) * k + kx]` and per-filter biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvParams {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CnnModel {
    pub arch: CnnArch,
    pub convs: Vec<ConvParams>,
    /// `dense_w[j * flatten + i]` maps flattened features to logit `j`.
    pub dense_w: Vec<f64>,
    pub dense_b: [f64; 2],
}

impl CnnModel {
    /// Glorot-uniform initialization: weights uniform in `[-s, s]` with
    /// `s = sqrt(6 / (fan_in + fan_out))`, biases zero, all draws seeded.
    pub fn init(arch: CnnArch, seed: u64) -> Result<Self, TrainError> {
        let dims = arch.plan()?;
        let flat = arch.flatten_len()?;
        let mut rng = stream_rng(seed, "cnn-init", 0);
        let mut convs = Vec::with_capacity(arch.stages.len());
        for (stage, d) in arch.stages.iter().zip(&dims) {
            let k = stage.kernel;
            let fan_in = (d.in_c * k * k) as f64;
            let fan_out = (stage.filters * k * k) as f64;
            let s = (6.0 / (fan_in + fan_out)).sqrt();
            let w = (0..stage.filters * d.in_c * k * k)
                .map(|_| rng.random_range(-s..s))
                .collect();
            convs.push(ConvParams { w, b: vec![0.0; stage.filters] });
        }
        let s = (6.0 / (flat as f64 + 2.0)).sqrt();
        let dense_w = (0..2 * flat).map(|_| rng.random_range(-s..s)).collect();
        Ok(CnnModel { arch, convs, dense_w, dense_b: [0.0, 0.0] })
    }

    pub fn param_count(&self) -> usize {
        self.convs.iter().map(|c| c.w.len() + c.b.len()).sum::<usize>()
            + self.dense_w.len()
            + self.dense_b.len()
    }

    pub fn params_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for c in &self.convs {
            out.extend_from_slice(&c.w);
            out.extend_from_slice(&c.b);
        }
        out.extend_from_slice(&self.dense_w);
        out.extend_from_slice(&self.dense_b);
        out
    }

    pub fn set_params_vec(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count());
        let mut at = 0;
        for c in &mut self.convs {
            let (nw, nb) = (c.w.len(), c.b.len());
            c.w.copy_from_slice(&params[at..at + nw]);
            at += nw;
            c.b.copy_from_slice(&params[at..at + nb]);
            at += nb;
        }
        let nd = self.dense_w.len();
        self.dense_w.copy_from_slice(&params[at..at + nd]);
        at += nd;
        self.dense_b.copy_from_slice(&params[at..at + 2]);
    }

    fn check_shape(&self, img: &GrayImage) -> Result<(), PredictError> {
        if img.height != self.arch.input_h || img.width != self.arch.input_w {
            return Err(PredictError::ShapeMismatch {
                want_w: self.arch.input_w,
                want_h: self.arch.input_h,
                got_w: img.width,
                got_h: img.height,
            });
        }
        Ok(())
    }

    fn dims(&self) -> Vec<StageDims> {
        self.arch.plan().expect("constructed model has a valid plan")
    }

    fn forward_into(&self, pixels: &[f64], trace: &mut Trace) {
        trace.inputs[0].copy_from_slice(pixels);
        let Trace { dims, inputs, pre, argmax, .. } = trace;
        for (s, stage) in self.arch.stages.iter().enumerate() {
            let d = dims[s];
            let k = stage.kernel;
            let params = &self.convs[s];

            // Valid convolution: read inputs[s], write pre[s].
            {
                let input = &inputs[s];
                let out = &mut pre[s];
                for f in 0..stage.filters {
                    let bias = params.b[f];
                    let out_base = f * d.conv_h * d.conv_w;
                    for oy in 0..d.conv_h {
                        for ox in 0..d.conv_w {
                            let mut acc = bias;
                            for c in 0..d.in_c {
                                let w_base = (f * d.in_c + c) * k * k;
                                let in_base = c * d.in_h * d.in_w;
                                for ky in 0..k {
                                    let row = in_base + (oy + ky) * d.in_w + ox;
                                    let wrow = w_base + ky * k;
                                    for kx in 0..k {
                                        acc += input[row + kx] * params.w[wrow + kx];
                                    }
                                }
                            }
                            out[out_base + oy * d.conv_w + ox] = acc;
                        }
                    }
                }
            }

            // ReLU plus optional 2x2 max-pool; inputs[s + 1] receives the
            // stage output.
            let conv_out = &pre[s];
            let post = &mut inputs[s + 1];
            if stage.pool {
                let am = &mut argmax[s];
                for f in 0..stage.filters {
                    for py in 0..d.out_h {
                        for px in 0..d.out_w {
                            let mut best_at = (f * d.conv_h + 2 * py) * d.conv_w + 2 * px;
                            let mut best = conv_out[best_at];
                            for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                                let at = (f * d.conv_h + 2 * py + dy) * d.conv_w + 2 * px + dx;
                                if conv_out[at] > best {
                                    best = conv_out[at];
                                    best_at = at;
                                }
                            }
                            let out_at = (f * d.out_h + py) * d.out_w + px;
                            post[out_at] = best.max(0.0);
                            am[out_at] = best_at;
                        }
                    }
                }
            } else {
                for (o, &v) in post.iter_mut().zip(conv_out.iter()) {
                    *o = v.max(0.0);
                }
            }
        }

        // Dense layer and a numerically stable softmax.
        let flat = inputs.last().unwrap();
        let mut logits = [0.0f64; 2];
        for (j, logit) in logits.iter_mut().enumerate() {
            let row = &self.dense_w[j * flat.len()..(j + 1) * flat.len()];
            *logit = self.dense_b[j]
                + row.iter().zip(flat.iter()).map(|(w, x)| w * x).sum::<f64>();
        }
        let m = logits[0].max(logits[1]);
        let e = [(logits[0] - m).exp(), (logits[1] - m).exp()];
        let z = e[0] + e[1];
        trace.logits = logits;
        trace.probs = [e[0] / z, e[1] / z];
    }

    /// Accumulates one sample's gradients into `grads` (unscaled sums).
    fn backward_into(&self, trace: &Trace, label: u8, grads: &mut CnnGrads) {
        let flat = trace.flat();

        // d(loss)/d(logit) for cross-entropy on softmax.
        let mut dlogits = trace.probs;
        dlogits[label as usize] -= 1.0;

        for (j, &dl) in dlogits.iter().enumerate() {
            grads.dense_b[j] += dl;
            let grow = &mut grads.dense_w[j * flat.len()..(j + 1) * flat.len()];
            for (g, &x) in grow.iter_mut().zip(flat.iter()) {
                *g += dl * x;
            }
        }
        let mut dpost: Vec<f64> = (0..flat.len())
            .map(|i| dlogits[0] * self.dense_w[i] + dlogits[1] * self.dense_w[flat.len() + i])
            .collect();

        for s in (0..self.arch.stages.len()).rev() {
            let stage = self.arch.stages[s];
            let d = trace.dims[s];
            let k = stage.kernel;
            let params = &self.convs[s];
            let g = &mut grads.convs[s];
            let conv_out = &trace.pre[s];
            let input = &trace.inputs[s];

            // Route gradients back through the pool (or straight through),
            // then gate by ReLU.
            let mut dpre = vec![0.0; conv_out.len()];
            if stage.pool {
                for (o, &src) in trace.argmax[s].iter().enumerate() {
                    if conv_out[src] > 0.0 {
                        dpre[src] += dpost[o];
                    }
                }
            } else {
                for (i, d_out) in dpost.iter().enumerate() {
                    if conv_out[i] > 0.0 {
                        dpre[i] = *d_out;
                    }
                }
            }

            let mut dinput = vec![0.0; d.in_c * d.in_h * d.in_w];
            for f in 0..stage.filters {
                let out_base = f * d.conv_h * d.conv_w;
                for oy in 0..d.conv_h {
                    for ox in 0..d.conv_w {
                        let go = dpre[out_base + oy * d.conv_w + ox];
                        if go == 0.0 {
                            continue;
                        }
                        g.b[f] += go;
                        for c in 0..d.in_c {
                            let w_base = (f * d.in_c + c) * k * k;
                            let in_base = c * d.in_h * d.in_w;
                            for ky in 0..k {
                                let row = in_base + (oy + ky) * d.in_w + ox;
                                let wrow = w_base + ky * k;
                                for kx in 0..k {
                                    g.w[wrow + kx] += go * input[row + kx];
                                    dinput[row + kx] += go * params.w[wrow + kx];
                                }
                            }
                        }
                    }
                }
            }
            dpost = dinput;
        }
    }

    fn update(&mut self, grads: &CnnGrads, step: f64) {
        for (p, g) in self.convs.iter_mut().zip(&grads.convs) {
            for (w, gw) in p.w.iter_mut().zip(&g.w) {
                *w -= step * gw;
            }
            for (b, gb) in p.b.iter_mut().zip(&g.b) {
                *b -= step * gb;
            }
        }
        for (w, gw) in self.dense_w.iter_mut().zip(&grads.dense_w) {
            *w -= step * gw;
        }
        for (b, gb) in self.dense_b.iter_mut().zip(&grads.dense_b) {
            *b -= step * gb;
        }
    }

    /// Mean cross-entropy over `(normalized pixels, label)` pairs.
    pub fn mean_loss(&self, samples: &[(Vec<f64>, u8)]) -> f64 {
        let mut trace = Trace::for_model(self);
        let mut sum = 0.0;
        for (pixels, label) in samples {
            self.forward_into(pixels, &mut trace);
            sum -= trace.probs[*label as usize].max(1e-300).ln();
        }
        sum / samples.len() as f64
    }

    /// Gradient of [`Self::mean_loss`], flattened in parameter order.
    pub fn mean_loss_gradient(&self, samples: &[(Vec<f64>, u8)]) -> Vec<f64> {
        let mut trace = Trace::for_model(self);
        let mut grads = CnnGrads::for_model(self);
        for (pixels, label) in samples {
            self.forward_into(pixels, &mut trace);
            self.backward_into(&trace, *label, &mut grads);
        }
        let scale = 1.0 / samples.len() as f64;
        let mut v = grads.to_vec();
        for g in &mut v {
            *g *= scale;
        }
        v
    }

    /// Smallest |pre-activation| and smallest pool-window winner margin over
    /// one input. Gradient-check harnesses use this to skip configurations
    /// sitting on a ReLU or argmax kink, where finite differences are
    /// meaningless.
    pub fn kink_margins(&self, pixels: &[f64]) -> (f64, f64) {
        let mut trace = Trace::for_model(self);
        self.forward_into(pixels, &mut trace);
        let mut min_relu = f64::INFINITY;
        let mut min_pool_gap = f64::INFINITY;
        for (s, stage) in self.arch.stages.iter().enumerate() {
            let d = trace.dims[s];
            let conv_out = &trace.pre[s];
            for &v in conv_out.iter() {
                min_relu = min_relu.min(v.abs());
            }
            if stage.pool {
                for f in 0..stage.filters {
                    for py in 0..d.out_h {
                        for px in 0..d.out_w {
                            let mut window = [0.0f64; 4];
                            for (i, (dy, dx)) in
                                [(0, 0), (0, 1), (1, 0), (1, 1)].iter().enumerate()
                            {
                                window[i] = conv_out
                                    [(f * d.conv_h + 2 * py + dy) * d.conv_w + 2 * px + dx];
                            }
                            window.sort_by(f64::total_cmp);
                            min_pool_gap = min_pool_gap.min(window[3] - window[2]);
                        }
                    }
                }
            }
        }
        (min_relu, min_pool_gap)
    }
}

/// Scratch buffers for one forward/backward pass.
struct Trace {
    dims: Vec<StageDims>,
    /// `inputs[s]` feeds stage `s`; the final entry is the flattened output.
    inputs: Vec<Vec<f64>>,
    /// Convolution outputs before ReLU/pool.
    pre: Vec<Vec<f64>>,
    /// Flat index into `pre[s]` of each pool winner.
    argmax: Vec<Vec<usize>>,
    logits: [f64; 2],
    probs: [f64; 2],
}

impl Trace {
    fn for_model(model: &CnnModel) -> Self {
        let dims = model.dims();
        let mut inputs = Vec::with_capacity(dims.len() + 1);
        let mut pre = Vec::with_capacity(dims.len());
        let mut argmax = Vec::with_capacity(dims.len());
        for (stage, d) in model.arch.stages.iter().zip(&dims) {
            inputs.push(vec![0.0; d.in_c * d.in_h * d.in_w]);
            pre.push(vec![0.0; stage.filters * d.conv_h * d.conv_w]);
            argmax.push(vec![0usize; stage.filters * d.out_h * d.out_w]);
        }
        let last = *dims.last().unwrap();
        let last_filters = model.arch.stages.last().unwrap().filters;
        inputs.push(vec![0.0; last_filters * last.out_h * last.out_w]);
        Trace { dims, inputs, pre, argmax, logits: [0.0; 2], probs: [0.0; 2] }
    }

    fn flat(&self) -> &[f64] {
        self.inputs.last().unwrap()
    }
}

/// Gradient accumulators mirroring [`CnnModel`]'s parameters.
struct CnnGrads {
    convs: Vec<ConvParams>,
    dense_w: Vec<f64>,
    dense_b: [f64; 2],
}

impl CnnGrads {
    fn for_model(model: &CnnModel) -> Self {
        CnnGrads {
            convs: model
                .convs
                .iter()
                .map(|c| ConvParams { w: vec![0.0; c.w.len()], b: vec![0.0; c.b.len()] })
                .collect(),
            dense_w: vec![0.0; model.dense_w.len()],
            dense_b: [0.0; 2],
        }
    }

    fn reset(&mut self) {
        for c in &mut self.convs {
            c.w.fill(0.0);
            c.b.fill(0.0);
        }
        self.dense_w.fill(0.0);
        self.dense_b = [0.0; 2];
    }

    fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for c in &self.convs {
            out.extend_from_slice(&c.w);
            out.extend_from_slice(&c.b);
        }
        out.extend_from_slice(&self.dense_w);
        out.extend_from_slice(&self.dense_b);
        out
    }
}

/// One epoch's running statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when the dataset has no test split.
    pub test_acc: f64,
}

#[derive(Debug, Clone)]
pub struct CnnTrainOutput {
    pub model: CnnModel,
    pub history: Vec<EpochStats>,
}

/// Trains by shuffled mini-batch gradient descent on the dataset's train
/// split, reporting per-epoch train loss/accuracy and test accuracy. The
/// shuffle is reseeded per epoch from the config seed.
pub fn train(
    data: &SliceDataset,
    arch: CnnArch,
    cfg: &TrainConfig,
) -> Result<CnnTrainOutput, TrainError> {
    if data.train.is_empty() {
        return Err(TrainError::EmptyTraining);
    }
    let labels = data.labels();
    let first = labels[data.train[0]];
    if data.train.iter().all(|&i| labels[i] == first) {
        return Err(TrainError::SingleClass);
    }
    for &i in data.train.iter().chain(&data.test) {
        let img = &data.items[i].image;
        if img.height != arch.input_h || img.width != arch.input_w {
            return Err(TrainError::BadArch(format!(
                "item {i} is {}x{} but the network expects {}x{}",
                img.width, img.height, arch.input_w, arch.input_h
            )));
        }
    }

    let normalized: Vec<Vec<f64>> = data
        .items
        .iter()
        .map(|it| it.image.pixels.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect();

    let mut model = CnnModel::init(arch, cfg.seed)?;
    let mut trace = Trace::for_model(&model);
    let mut grads = CnnGrads::for_model(&model);
    let mut order = data.train.clone();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let mut rng = stream_rng(cfg.seed, "cnn-shuffle", epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            let mut batch_loss = 0.0;
            for &i in batch {
                model.forward_into(&normalized[i], &mut trace);
                let label = labels[i];
                batch_loss -= trace.probs[label as usize].max(1e-300).ln();
                if u8::from(trace.probs[1] >= trace.probs[0]) == label {
                    correct += 1;
                }
                model.backward_into(&trace, label, &mut grads);
            }
            if !batch_loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { epoch, last_good: epoch.checked_sub(1) });
            }
            loss_sum += batch_loss;
            model.update(&grads, cfg.learning_rate / batch.len() as f64);
        }

        let mut test_correct = 0usize;
        for &i in &data.test {
            model.forward_into(&normalized[i], &mut trace);
            if u8::from(trace.probs[1] >= trace.probs[0]) == labels[i] {
                test_correct += 1;
            }
        }
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / order.len() as f64,
            train_acc: correct as f64 / order.len() as f64,
            test_acc: if data.test.is_empty() {
                f64::NAN
            } else {
                test_correct as f64 / data.test.len() as f64
            },
        });
    }

    Ok(CnnTrainOutput { model, history })
}

/// Forward pass on a [0, 255] image (pixels are normalized to [0, 1]);
/// returns `(logits, softmax probabilities)`.
pub fn cnn_forward(
    model: &CnnModel,
    img: &GrayImage,
) -> Result<([f64; 2], [f64; 2]), PredictError> {
    model.check_shape(img)?;
    let pixels: Vec<f64> = img.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let mut trace = Trace::for_model(model);
    model.forward_into(&pixels, &mut trace);
    Ok((trace.logits, trace.probs))
}

/// Predicted `(label, probability of class 1)`.
pub fn predict(model: &CnnModel, img: &GrayImage) -> Result<(u8, f64), PredictError> {
    let (_, probs) = cnn_forward(model, img)?;
    Ok((u8::from(probs[1] >= probs[0]), probs[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifiers::SliceItem;

    fn tiny_arch() -> CnnArch {
        CnnArch {
            input_h: 6,
            input_w: 6,
            stages: vec![
                ConvStage { filters: 3, kernel: 3, pool: false },
                ConvStage { filters: 4, kernel: 3, pool: true },
            ],
        }
    }

    #[test]
    fn zero_weights_give_even_odds() {
        let mut model = CnnModel::init(CnnArch::paper_default(12, 12), 1).unwrap();
        let zeros = vec![0.0; model.param_count()];
        model.set_params_vec(&zeros);
        let img = GrayImage::new(12, 12, (0..144).map(|i| i as u8).collect());
        let (logits, probs) = cnn_forward(&model, &img).unwrap();
        assert_eq!(logits, [0.0, 0.0]);
        assert_eq!(probs, [0.5, 0.5]);
        let pixels: Vec<f64> = img.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
        let loss = model.mean_loss(&[(pixels, 0)]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn one_by_one_conv_is_identity() {
        let arch = CnnArch {
            input_h: 2,
            input_w: 2,
            stages: vec![ConvStage { filters: 1, kernel: 1, pool: false }],
        };
        let mut model = CnnModel::init(arch, 0).unwrap();
        let mut params = vec![0.0; model.param_count()];
        params[0] = 1.0; // single conv weight
        for i in 0..4 {
            params[2 + i] = 1.0; // dense row 0 sums the feature map
        }
        model.set_params_vec(&params);
        let img = GrayImage::new(2, 2, vec![51, 102, 153, 204]);
        let (logits, _) = cnn_forward(&model, &img).unwrap();
        let expected: f64 = img.pixels.iter().map(|&p| f64::from(p) / 255.0).sum();
        assert!((logits[0] - expected).abs() < 1e-12);
        assert_eq!(logits[1], 0.0);
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = CnnModel::init(tiny_arch(), 7).unwrap();
        let img = GrayImage::new(6, 6, (0..36).map(|i| (i * 7) as u8).collect());
        let (_, probs) = cnn_forward(&model, &img).unwrap();
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-9);
        assert!(probs[0] > 0.0 && probs[1] > 0.0);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let model = CnnModel::init(tiny_arch(), 7).unwrap();
        let img = GrayImage::filled(5, 6, 1);
        assert!(matches!(
            cnn_forward(&model, &img),
            Err(PredictError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn arch_validation_rejects_impossible_nets() {
        let arch = CnnArch {
            input_h: 4,
            input_w: 4,
            stages: vec![
                ConvStage { filters: 2, kernel: 3, pool: true },
                ConvStage { filters: 2, kernel: 3, pool: false },
            ],
        };
        assert!(matches!(CnnModel::init(arch, 0), Err(TrainError::BadArch(_))));
    }

    /// Two-class 6x6 set: class 1 bright on the left, class 0 on the right.
    fn toy_dataset(n: usize) -> SliceDataset {
        let mut items = Vec::new();
        for i in 0..n {
            let label = (i % 2) as u8;
            let mut pixels = vec![10u8; 36];
            for row in 0..6 {
                for col in 0..3 {
                    let c = if label == 1 { col } else { 5 - col };
                    pixels[row * 6 + c] = 200 + (i % 10) as u8;
                }
            }
            items.push(SliceItem {
                volume: format!("toy_{i}"),
                slice_index: 0,
                label,
                image: GrayImage::new(6, 6, pixels),
            });
        }
        let mut data = SliceDataset { items, train: vec![], test: vec![] };
        data.split(0.75, 5);
        data
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let data = toy_dataset(8);
        let model = CnnModel::init(tiny_arch(), 3).unwrap();
        let samples: Vec<(Vec<f64>, u8)> = data
            .items
            .iter()
            .take(4)
            .map(|it| {
                (
                    it.image.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
                    it.label,
                )
            })
            .collect();
        let analytic = model.mean_loss_gradient(&samples);
        let params = model.params_vec();
        let eps = 1e-4;
        let mut worst = 0.0f64;
        for i in 0..params.len() {
            let mut p = params.clone();
            p[i] += eps;
            let mut probe = model.clone();
            probe.set_params_vec(&p);
            let up = probe.mean_loss(&samples);
            p[i] = params[i] - eps;
            probe.set_params_vec(&p);
            let down = probe.mean_loss(&samples);
            let numeric = (up - down) / (2.0 * eps);
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        assert!(worst < 1e-4, "max relative gradient error {worst}");
    }

    #[test]
    fn zero_learning_rate_leaves_weights_unchanged() {
        let data = toy_dataset(8);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 4,
            seed: 11,
            ..TrainConfig::default()
        };
        let out = train(&data, tiny_arch(), &cfg).unwrap();
        let fresh = CnnModel::init(tiny_arch(), 11).unwrap();
        assert_eq!(out.model.params_vec(), fresh.params_vec());
        let accs: Vec<f64> = out.history.iter().map(|h| h.test_acc).collect();
        assert!(accs.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn learns_a_separable_toy_problem() {
        let data = toy_dataset(24);
        let cfg = TrainConfig {
            epochs: 30,
            learning_rate: 0.05,
            batch_size: 4,
            seed: 2,
            ..TrainConfig::default()
        };
        let out = train(&data, tiny_arch(), &cfg).unwrap();
        assert_eq!(out.history.len(), 30);
        assert_eq!(out.history.last().unwrap().test_acc, 1.0);
    }

    #[test]
    fn training_is_deterministic() {
        let data = toy_dataset(12);
        let cfg = TrainConfig { epochs: 4, seed: 9, batch_size: 4, ..TrainConfig::default() };
        let a = train(&data, tiny_arch(), &cfg).unwrap();
        let b = train(&data, tiny_arch(), &cfg).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn single_class_train_split_is_rejected() {
        let mut data = toy_dataset(8);
        data.train.retain(|&i| data.items[i].label == 1);
        assert!(matches!(
            train(&data, tiny_arch(), &TrainConfig::default()),
            Err(TrainError::SingleClass)
        ));
    }
}
