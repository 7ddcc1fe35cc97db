//! Layers, the dual-stream network, and its forward/backward passes.

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use super::{ModelConfig, ModelError, NUM_CLASSES};
use crate::seed;

/// Output size of a 3x3, stride-2, padding-1 convolution.
pub fn conv_out(n: usize) -> usize {
    (n - 1) / 2 + 1
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv {
    pub cin: usize,
    pub cout: usize,
    /// cout × cin × 3 × 3
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Conv {
    fn zeros(cin: usize, cout: usize) -> Self {
        Self {
            cin,
            cout,
            w: vec![0.0; cout * cin * 9],
            b: vec![0.0; cout],
        }
    }

    /// Convolution without bias; input channels that are entirely zero are
    /// skipped, which keeps sparse perturbations cheap.
    pub fn apply_linear(&self, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let (oh, ow) = (conv_out(h), conv_out(w));
        let mut out = vec![0.0; self.cout * oh * ow];
        let live: Vec<bool> = (0..self.cin).map(|c| x[c * h * w..(c + 1) * h * w].iter().any(|&v| v != 0.0)).collect();
        for co in 0..self.cout {
            let oc = &mut out[co * oh * ow..(co + 1) * oh * ow];
            for ci in (0..self.cin).filter(|&c| live[c]) {
                let k = &self.w[(co * self.cin + ci) * 9..(co * self.cin + ci + 1) * 9];
                let xc = &x[ci * h * w..(ci + 1) * h * w];
                for oy in 0..oh {
                    for ky in 0..3 {
                        let iy = 2 * oy + ky;
                        if iy == 0 || iy > h {
                            continue;
                        }
                        let row = &xc[(iy - 1) * w..iy * w];
                        let kr = &k[ky * 3..ky * 3 + 3];
                        let orow = &mut oc[oy * ow..(oy + 1) * ow];
                        for (ox, o) in orow.iter_mut().enumerate() {
                            let base = 2 * ox;
                            // ix = base + kx - 1
                            let mut s = 0.0;
                            if base >= 1 {
                                s += kr[0] * row[base - 1];
                            }
                            s += kr[1] * row[base];
                            if base + 1 < w {
                                s += kr[2] * row[base + 1];
                            }
                            *o += s;
                        }
                    }
                }
            }
        }
        out
    }

    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> Vec<f64> {
        let mut out = self.apply_linear(x, h, w);
        let n = conv_out(h) * conv_out(w);
        for (co, chunk) in out.chunks_mut(n).enumerate() {
            chunk.iter_mut().for_each(|v| *v += self.b[co]);
        }
        out
    }

    /// Accumulate parameter gradients and (optionally) the input gradient.
    pub fn backward(&self, x: &[f64], h: usize, w: usize, dz: &[f64], g: &mut Conv, mut dx: Option<&mut [f64]>) {
        let (oh, ow) = (conv_out(h), conv_out(w));
        for co in 0..self.cout {
            let dzc = &dz[co * oh * ow..(co + 1) * oh * ow];
            g.b[co] += dzc.iter().sum::<f64>();
            for ci in 0..self.cin {
                let kidx = (co * self.cin + ci) * 9;
                let xc = &x[ci * h * w..(ci + 1) * h * w];
                let mut gk = [0.0f64; 9];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let d = dzc[oy * ow + ox];
                        if d == 0.0 {
                            continue;
                        }
                        for ky in 0..3 {
                            let iy = 2 * oy + ky;
                            if iy == 0 || iy > h {
                                continue;
                            }
                            for kx in 0..3 {
                                let ix = 2 * ox + kx;
                                if ix == 0 || ix > w {
                                    continue;
                                }
                                let p = (iy - 1) * w + (ix - 1);
                                gk[ky * 3 + kx] += d * xc[p];
                                if let Some(dx) = dx.as_deref_mut() {
                                    dx[ci * h * w + p] += d * self.w[kidx + ky * 3 + kx];
                                }
                            }
                        }
                    }
                }
                for (a, b) in g.w[kidx..kidx + 9].iter_mut().zip(gk) {
                    *a += b;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub nin: usize,
    pub nout: usize,
    /// nout × nin
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Linear {
    fn zeros(nin: usize, nout: usize) -> Self {
        Self {
            nin,
            nout,
            w: vec![0.0; nin * nout],
            b: vec![0.0; nout],
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        (0..self.nout)
            .map(|o| self.b[o] + dot(&self.w[o * self.nin..(o + 1) * self.nin], x))
            .collect()
    }

    /// W·x without bias, iterating only over nonzero inputs.
    pub fn apply_sparse(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nout];
        let nz: Vec<(usize, f64)> = x.iter().copied().enumerate().filter(|(_, v)| *v != 0.0).collect();
        if nz.len() * 4 > self.nin {
            for (o, slot) in out.iter_mut().enumerate() {
                *slot = dot(&self.w[o * self.nin..(o + 1) * self.nin], x);
            }
        } else {
            for (o, slot) in out.iter_mut().enumerate() {
                let row = &self.w[o * self.nin..(o + 1) * self.nin];
                *slot = nz.iter().map(|&(i, v)| row[i] * v).sum();
            }
        }
        out
    }

    pub fn backward(&self, x: &[f64], dout: &[f64], g: &mut Linear, dx: Option<&mut [f64]>) {
        for o in 0..self.nout {
            let d = dout[o];
            g.b[o] += d;
            if d == 0.0 {
                continue;
            }
            let gw = &mut g.w[o * self.nin..(o + 1) * self.nin];
            for (gi, xi) in gw.iter_mut().zip(x) {
                *gi += d * xi;
            }
        }
        if let Some(dx) = dx {
            for o in 0..self.nout {
                let d = dout[o];
                if d == 0.0 {
                    continue;
                }
                let row = &self.w[o * self.nin..(o + 1) * self.nin];
                for (dxi, wi) in dx.iter_mut().zip(row) {
                    *dxi += d * wi;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
}

impl BatchNorm {
    fn new(n: usize) -> Self {
        Self {
            gamma: vec![1.0; n],
            beta: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![1.0; n],
        }
    }

    fn zeros(n: usize) -> Self {
        Self {
            gamma: vec![0.0; n],
            beta: vec![0.0; n],
            running_mean: vec![0.0; n],
            running_var: vec![0.0; n],
        }
    }

    pub fn eval_scale(&self, eps: f64) -> Vec<f64> {
        self.running_var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub convs: Vec<Conv>,
    pub fc: Linear,
}

/// Activations of one encoder pass.
#[derive(Debug, Clone)]
pub struct EncCache {
    /// acts[0] is the input map; acts[k + 1] = relu(pre[k])
    pub acts: Vec<Vec<f64>>,
    pub pre: Vec<Vec<f64>>,
    /// spatial size of acts[k]
    pub dims: Vec<(usize, usize)>,
    pub gap: Vec<f64>,
    pub zf: Vec<f64>,
    pub feat: Vec<f64>,
}

impl Encoder {
    pub fn forward(&self, x: &[f64], h: usize, w: usize) -> EncCache {
        let mut acts = vec![x.to_vec()];
        let mut pre = Vec::new();
        let mut dims = vec![(h, w)];
        for conv in &self.convs {
            let (ch, cw) = *dims.last().expect("dims");
            let z = conv.forward(acts.last().expect("acts"), ch, cw);
            acts.push(z.iter().map(|&v| v.max(0.0)).collect());
            pre.push(z);
            dims.push((conv_out(ch), conv_out(cw)));
        }
        let (fh, fw) = *dims.last().expect("dims");
        let gap = global_average(acts.last().expect("acts"), fh * fw);
        let zf = self.fc.forward(&gap);
        let feat = zf.iter().map(|&v| v.max(0.0)).collect();
        EncCache {
            acts,
            pre,
            dims,
            gap,
            zf,
            feat,
        }
    }

    pub fn backward(&self, c: &EncCache, dfeat: &[f64], g: &mut Encoder) {
        let dzf: Vec<f64> = dfeat.iter().zip(&c.zf).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
        let mut dgap = vec![0.0; self.fc.nin];
        self.fc.backward(&c.gap, &dzf, &mut g.fc, Some(&mut dgap));
        let (fh, fw) = *c.dims.last().expect("dims");
        let n = (fh * fw) as f64;
        let mut dact: Vec<f64> = dgap.iter().flat_map(|&d| std::iter::repeat(d / n).take(fh * fw)).collect();
        for k in (0..self.convs.len()).rev() {
            let dz: Vec<f64> = dact.iter().zip(&c.pre[k]).map(|(d, z)| if *z > 0.0 { *d } else { 0.0 }).collect();
            let (h, w) = c.dims[k];
            if k > 0 {
                let mut dx = vec![0.0; c.acts[k].len()];
                self.convs[k].backward(&c.acts[k], h, w, &dz, &mut g.convs[k], Some(&mut dx));
                dact = dx;
            } else {
                self.convs[k].backward(&c.acts[k], h, w, &dz, &mut g.convs[k], None);
            }
        }
    }
}

pub fn global_average(x: &[f64], plane: usize) -> Vec<f64> {
    x.chunks(plane).map(|c| c.iter().sum::<f64>() / plane as f64).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Per hidden layer activations for a batch (row-major B × n).
#[derive(Debug, Clone)]
pub struct HiddenCache {
    pub input: Vec<f64>,
    pub z: Vec<f64>,
    pub xhat: Vec<f64>,
    /// per-feature 1/sqrt(var + eps) used in this pass
    pub inv_std: Vec<f64>,
    pub bn: Vec<f64>,
    /// inverted-dropout multipliers (train mode only)
    pub mask: Option<Vec<f64>>,
    pub out: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchCache {
    pub mode: Mode,
    pub batch: usize,
    pub enc: Vec<[EncCache; 2]>,
    pub u: Vec<f64>,
    pub hidden: Vec<HiddenCache>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Net {
    pub cfg: ModelConfig,
    /// [left, right]
    pub enc: [Encoder; 2],
    pub hidden: Vec<(Linear, BatchNorm)>,
    pub out: Linear,
}

fn kaiming(rng: &mut impl Rng, v: &mut [f64], fan_in: usize, gain: f64) {
    let bound = gain * (3.0 / fan_in as f64).sqrt();
    let u = Uniform::new_inclusive(-bound, bound);
    v.iter_mut().for_each(|x| *x = u.sample(rng));
}

impl Net {
    fn zeros(cfg: &ModelConfig) -> Self {
        let enc = || {
            let mut cin = 1;
            let convs = cfg
                .conv_channels
                .iter()
                .map(|&c| {
                    let conv = Conv::zeros(cin, c);
                    cin = c;
                    conv
                })
                .collect();
            Encoder {
                convs,
                fc: Linear::zeros(cin, cfg.feature_dim),
            }
        };
        let dims = cfg.head_dims();
        let hidden = dims
            .windows(2)
            .take(cfg.hidden.len())
            .map(|d| (Linear::zeros(d[0], d[1]), BatchNorm::new(d[1])))
            .collect();
        let n = dims.len();
        Self {
            cfg: cfg.clone(),
            enc: [enc(), enc()],
            hidden,
            out: Linear::zeros(dims[n - 2], dims[n - 1]),
        }
    }

    /// Kaiming-uniform weights, zero biases, unit BN; the output layer is
    /// zeroed when `cfg.zero_init_final` is set.
    pub fn new(cfg: &ModelConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        let mut net = Self::zeros(cfg);
        let mut rng = seed::rng(cfg.seed, "init");
        let relu_gain = 2f64.sqrt();
        for e in net.enc.iter_mut() {
            for c in e.convs.iter_mut() {
                let fan = c.cin * 9;
                kaiming(&mut rng, &mut c.w, fan, relu_gain);
            }
            let fan = e.fc.nin;
            kaiming(&mut rng, &mut e.fc.w, fan, relu_gain);
        }
        for (l, _) in net.hidden.iter_mut() {
            let fan = l.nin;
            kaiming(&mut rng, &mut l.w, fan, relu_gain);
        }
        if !cfg.zero_init_final {
            let fan = net.out.nin;
            kaiming(&mut rng, &mut net.out.w, fan, 1.0);
            kaiming(&mut rng, &mut net.out.b, fan, 1.0);
        }
        Ok(net)
    }

    /// Same shapes, every tensor zero (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = Self::zeros(&self.cfg);
        for (_, bn) in z.hidden.iter_mut() {
            *bn = BatchNorm::zeros(bn.gamma.len());
        }
        z
    }

    /// Trainable tensors in a fixed order.
    pub fn tensors(&self) -> Vec<(String, &Vec<f64>)> {
        let mut v = Vec::new();
        for (side, e) in ["enc_left", "enc_right"].iter().zip(&self.enc) {
            for (k, c) in e.convs.iter().enumerate() {
                v.push((format!("{side}.conv{k}.weight"), &c.w));
                v.push((format!("{side}.conv{k}.bias"), &c.b));
            }
            v.push((format!("{side}.fc.weight"), &e.fc.w));
            v.push((format!("{side}.fc.bias"), &e.fc.b));
        }
        for (k, (l, bn)) in self.hidden.iter().enumerate() {
            v.push((format!("head.fc{k}.weight"), &l.w));
            v.push((format!("head.fc{k}.bias"), &l.b));
            v.push((format!("head.bn{k}.weight"), &bn.gamma));
            v.push((format!("head.bn{k}.bias"), &bn.beta));
        }
        v.push(("head.out.weight".into(), &self.out.w));
        v.push(("head.out.bias".into(), &self.out.b));
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut v = Vec::new();
        for (side, e) in ["enc_left", "enc_right"].iter().zip(self.enc.iter_mut()) {
            for (k, c) in e.convs.iter_mut().enumerate() {
                v.push((format!("{side}.conv{k}.weight"), &mut c.w));
                v.push((format!("{side}.conv{k}.bias"), &mut c.b));
            }
            v.push((format!("{side}.fc.weight"), &mut e.fc.w));
            v.push((format!("{side}.fc.bias"), &mut e.fc.b));
        }
        for (k, (l, bn)) in self.hidden.iter_mut().enumerate() {
            v.push((format!("head.fc{k}.weight"), &mut l.w));
            v.push((format!("head.fc{k}.bias"), &mut l.b));
            v.push((format!("head.bn{k}.weight"), &mut bn.gamma));
            v.push((format!("head.bn{k}.bias"), &mut bn.beta));
        }
        v.push(("head.out.weight".into(), &mut self.out.w));
        v.push(("head.out.bias".into(), &mut self.out.b));
        v
    }

    /// Non-trainable state (BN running statistics).
    pub fn buffers(&self) -> Vec<(String, &Vec<f64>)> {
        let mut v = Vec::new();
        for (k, (_, bn)) in self.hidden.iter().enumerate() {
            v.push((format!("head.bn{k}.running_mean"), &bn.running_mean));
            v.push((format!("head.bn{k}.running_var"), &bn.running_var));
        }
        v
    }

    pub fn buffers_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut v = Vec::new();
        for (k, (_, bn)) in self.hidden.iter_mut().enumerate() {
            v.push((format!("head.bn{k}.running_mean"), &mut bn.running_mean));
            v.push((format!("head.bn{k}.running_var"), &mut bn.running_var));
        }
        v
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn check_shape(&self, map: &[f64]) -> Result<(), ModelError> {
        let want = self.cfg.map_height * self.cfg.map_width;
        if map.len() != want {
            return Err(ModelError::Shape(format!("map has {} values, model expects {want}", map.len())));
        }
        Ok(())
    }

    /// Inference-mode class probabilities for one sample.
    pub fn forward(&self, left: &[f64], right: &[f64]) -> Result<[f64; NUM_CLASSES], ModelError> {
        self.check_shape(left)?;
        self.check_shape(right)?;
        let c = self.forward_cached(&[(left, right)], Mode::Eval, None);
        Ok([c.probs[0], c.probs[1], c.probs[2]])
    }

    /// Batch forward keeping every activation. In train mode BN uses batch
    /// statistics (and updates its running estimates) and dropout draws masks
    /// from `rng`.
    pub fn forward_batch(&mut self, xs: &[(&[f64], &[f64])], rng: &mut impl Rng) -> BatchCache {
        let c = self.forward_cached(xs, Mode::Train, Some(rng as &mut dyn rand::RngCore));
        let m = self.cfg.bn_momentum;
        let b = xs.len() as f64;
        for ((_, bn), hc) in self.hidden.iter_mut().zip(&c.hidden) {
            let n = bn.gamma.len();
            for j in 0..n {
                let col = (0..xs.len()).map(|i| hc.z[i * n + j]);
                let mean = col.clone().sum::<f64>() / b;
                let var = col.map(|v| (v - mean).powi(2)).sum::<f64>() / b;
                let unbiased = if b > 1.0 { var * b / (b - 1.0) } else { var };
                bn.running_mean[j] = (1.0 - m) * bn.running_mean[j] + m * mean;
                bn.running_var[j] = (1.0 - m) * bn.running_var[j] + m * unbiased;
            }
        }
        c
    }

    pub fn forward_eval_cached(&self, xs: &[(&[f64], &[f64])]) -> BatchCache {
        self.forward_cached(xs, Mode::Eval, None)
    }

    fn forward_cached(&self, xs: &[(&[f64], &[f64])], mode: Mode, mut rng: Option<&mut dyn rand::RngCore>) -> BatchCache {
        let (h, w) = (self.cfg.map_height, self.cfg.map_width);
        let bsz = xs.len();
        let f = self.cfg.feature_dim;
        let mut enc = Vec::with_capacity(bsz);
        let mut u = Vec::with_capacity(bsz * 2 * f);
        for (l, r) in xs {
            let cl = self.enc[0].forward(l, h, w);
            let cr = self.enc[1].forward(r, h, w);
            u.extend_from_slice(&cl.feat);
            u.extend_from_slice(&cr.feat);
            enc.push([cl, cr]);
        }
        let eps = self.cfg.bn_eps;
        let mut x = u.clone();
        let mut hidden = Vec::new();
        for (lin, bn) in &self.hidden {
            let n = lin.nout;
            let mut z = Vec::with_capacity(bsz * n);
            for i in 0..bsz {
                z.extend(lin.forward(&x[i * lin.nin..(i + 1) * lin.nin]));
            }
            let (mean, inv_std) = match mode {
                Mode::Train => {
                    let mut mean = vec![0.0; n];
                    let mut var = vec![0.0; n];
                    for i in 0..bsz {
                        for j in 0..n {
                            mean[j] += z[i * n + j];
                        }
                    }
                    mean.iter_mut().for_each(|m| *m /= bsz as f64);
                    for i in 0..bsz {
                        for j in 0..n {
                            var[j] += (z[i * n + j] - mean[j]).powi(2);
                        }
                    }
                    let inv: Vec<f64> = var.iter().map(|v| 1.0 / (v / bsz as f64 + eps).sqrt()).collect();
                    (mean, inv)
                }
                Mode::Eval => (bn.running_mean.clone(), bn.eval_scale(eps)),
            };
            let mut xhat = vec![0.0; bsz * n];
            let mut bnout = vec![0.0; bsz * n];
            for i in 0..bsz {
                for j in 0..n {
                    let k = i * n + j;
                    xhat[k] = (z[k] - mean[j]) * inv_std[j];
                    bnout[k] = bn.gamma[j] * xhat[k] + bn.beta[j];
                }
            }
            let mut out: Vec<f64> = bnout.iter().map(|&v| v.max(0.0)).collect();
            let mask = match (mode, rng.as_deref_mut()) {
                (Mode::Train, Some(r)) if self.cfg.dropout > 0.0 => {
                    let p = self.cfg.dropout;
                    let keep = 1.0 / (1.0 - p);
                    let m: Vec<f64> = (0..bsz * n).map(|_| if r.gen::<f64>() < p { 0.0 } else { keep }).collect();
                    out.iter_mut().zip(&m).for_each(|(o, k)| *o *= k);
                    Some(m)
                }
                _ => None,
            };
            hidden.push(HiddenCache {
                input: x,
                z,
                xhat,
                inv_std,
                bn: bnout,
                mask,
                out: out.clone(),
            });
            x = out;
        }
        let mut logits = Vec::with_capacity(bsz * NUM_CLASSES);
        for i in 0..bsz {
            logits.extend(self.out.forward(&x[i * self.out.nin..(i + 1) * self.out.nin]));
        }
        let probs = logits.chunks(NUM_CLASSES).flat_map(softmax).collect();
        BatchCache {
            mode,
            batch: bsz,
            enc,
            u,
            hidden,
            logits,
            probs,
        }
    }

    /// Mean cross-entropy of a cached batch.
    pub fn loss(cache: &BatchCache, labels: &[usize]) -> f64 {
        cache
            .logits
            .chunks(NUM_CLASSES)
            .zip(labels)
            .map(|(z, &y)| log_sum_exp(z) - z[y])
            .sum::<f64>()
            / labels.len() as f64
    }

    /// Gradients of the mean cross-entropy, accumulated into `g`.
    pub fn backward(&self, c: &BatchCache, labels: &[usize], g: &mut Net) {
        let bsz = c.batch;
        let mut d: Vec<f64> = c
            .probs
            .chunks(NUM_CLASSES)
            .zip(labels)
            .flat_map(|(p, &y)| (0..NUM_CLASSES).map(move |k| (p[k] - if k == y { 1.0 } else { 0.0 }) / bsz as f64))
            .collect();

        let last_in = c.hidden.last().map_or(&c.u, |h| &h.out);
        let nin = self.out.nin;
        let mut dx = vec![0.0; bsz * nin];
        for i in 0..bsz {
            self.out.backward(
                &last_in[i * nin..(i + 1) * nin],
                &d[i * NUM_CLASSES..(i + 1) * NUM_CLASSES],
                &mut g.out,
                Some(&mut dx[i * nin..(i + 1) * nin]),
            );
        }
        d = dx;

        for (k, ((lin, bn), hc)) in self.hidden.iter().zip(&c.hidden).enumerate().rev() {
            let n = lin.nout;
            if let Some(m) = &hc.mask {
                d.iter_mut().zip(m).for_each(|(a, b)| *a *= b);
            }
            for (a, b) in d.iter_mut().zip(&hc.bn) {
                if *b <= 0.0 {
                    *a = 0.0;
                }
            }
            let (gl, gbn) = {
                let (l, b) = &mut g.hidden[k];
                (l, b)
            };
            let mut dz = vec![0.0; bsz * n];
            for j in 0..n {
                let mut sum_d = 0.0;
                let mut sum_dx = 0.0;
                for i in 0..bsz {
                    let q = i * n + j;
                    sum_d += d[q];
                    sum_dx += d[q] * hc.xhat[q];
                }
                gbn.gamma[j] += sum_dx;
                gbn.beta[j] += sum_d;
                let gamma = bn.gamma[j];
                let inv = hc.inv_std[j];
                match c.mode {
                    Mode::Eval => {
                        for i in 0..bsz {
                            dz[i * n + j] = d[i * n + j] * gamma * inv;
                        }
                    }
                    Mode::Train => {
                        let b = bsz as f64;
                        // dxhat = d·γ;  dz = inv/B · (B·dxhat − Σdxhat − xhat·Σ(dxhat·xhat))
                        for i in 0..bsz {
                            let q = i * n + j;
                            dz[q] = gamma * inv / b * (b * d[q] - sum_d - hc.xhat[q] * sum_dx);
                        }
                    }
                }
            }
            let mut dx = vec![0.0; bsz * lin.nin];
            for i in 0..bsz {
                lin.backward(
                    &hc.input[i * lin.nin..(i + 1) * lin.nin],
                    &dz[i * n..(i + 1) * n],
                    gl,
                    Some(&mut dx[i * lin.nin..(i + 1) * lin.nin]),
                );
            }
            d = dx;
        }

        let f = self.cfg.feature_dim;
        for (i, [cl, cr]) in c.enc.iter().enumerate() {
            let du = &d[i * 2 * f..(i + 1) * 2 * f];
            let (gl, gr) = g.enc.split_at_mut(1);
            self.enc[0].backward(cl, &du[..f], &mut gl[0]);
            self.enc[1].backward(cr, &du[f..], &mut gr[0]);
        }
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}
