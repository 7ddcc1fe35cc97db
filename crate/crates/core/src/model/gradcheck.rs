//! Central finite-difference check of the backward pass.
//!
//! Every parameter is perturbed by ±h and the change in loss is measured.
//! Re-running the whole network for each of the ~550k desk-scale parameters
//! would take hours, so the perturbation is pushed forward as a *delta*:
//! with one parameter moved, the logits are a piecewise-linear function of
//! it, and away from ReLU kinks the delta through each layer is obtained
//! exactly from that layer's linear part. The loss change is then
//! `log1p(Σ p_k·expm1(Δz_k)) − Δz_y`, which has no cancellation error.
//! If any ReLU would change state the step is shrunk and retried.
//!
//! The check runs in inference mode (running BN statistics, no dropout).

use serde::{Deserialize, Serialize};

use super::net::{global_average, BatchCache, Net};
use super::{ModelError, NUM_CLASSES};

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const TOLERANCE: f64 = 1e-4;
/// Denominator floor for the relative error, so near-zero gradients are
/// compared on an absolute scale.
pub const GRAD_FLOOR: f64 = 1e-8;
const RETRIES: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorCheck {
    pub name: String,
    pub len: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub per_tensor: Vec<TensorCheck>,
    pub n_params: usize,
    pub epsilon: f64,
    /// parameters whose first step crossed a ReLU kink
    pub kink_retries: usize,
    /// parameters still on a kink after all retries (excluded)
    pub kink_skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d == 0.0 {
        return 0.0;
    }
    d / analytic.abs().max(numeric.abs()).max(GRAD_FLOOR)
}

/// Check and fail with the offending tensor when the error reaches
/// [`TOLERANCE`].
pub fn gradient_check(net: &Net, left: &[f64], right: &[f64], label: usize, epsilon: f64) -> Result<GradCheckReport, ModelError> {
    enforce(measure(net, left, right, label, epsilon)?)
}

fn enforce(r: GradCheckReport) -> Result<GradCheckReport, ModelError> {
    if r.max_rel_err >= TOLERANCE {
        return Err(ModelError::GradientMismatch {
            tensor: r.worst_tensor,
            index: r.worst_index,
            rel_err: r.max_rel_err,
        });
    }
    Ok(r)
}

/// Full report without applying a tolerance.
pub fn measure(net: &Net, left: &[f64], right: &[f64], label: usize, epsilon: f64) -> Result<GradCheckReport, ModelError> {
    if label >= NUM_CLASSES {
        return Err(ModelError::Dataset(format!("label {label} out of range")));
    }
    if !(epsilon > 0.0) {
        return Err(ModelError::Config("epsilon must be positive".into()));
    }
    net.forward(left, right)?; // shape check
    let cache = net.forward_eval_cached(&[(left, right)]);
    let mut g = net.zeros_like();
    net.backward(&cache, &[label], &mut g);
    compare(net, &cache, label, epsilon, &g)
}

fn compare(net: &Net, cache: &BatchCache, label: usize, epsilon: f64, g: &Net) -> Result<GradCheckReport, ModelError> {
    let analytic: Vec<(String, Vec<f64>)> = g.tensors().into_iter().map(|(n, t)| (n, t.clone())).collect();
    let probe = Probe { net, c: cache, y: label };

    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_tensor: analytic[0].0.clone(),
        worst_index: 0,
        per_tensor: Vec::new(),
        n_params: 0,
        epsilon,
        kink_retries: 0,
        kink_skipped: 0,
    };
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        let param = probe.locate(ti);
        let mut tc = TensorCheck {
            name: name.clone(),
            len: grad.len(),
            max_rel_err: 0.0,
            worst_index: 0,
        };
        for (idx, &a) in grad.iter().enumerate() {
            let Some(num) = probe.numeric(param, idx, epsilon, &mut report) else {
                continue;
            };
            let rel = relative_error(a, num);
            if rel > tc.max_rel_err {
                tc.max_rel_err = rel;
                tc.worst_index = idx;
            }
        }
        report.n_params += grad.len();
        if tc.max_rel_err > report.max_rel_err {
            report.max_rel_err = tc.max_rel_err;
            report.worst_tensor = name.clone();
            report.worst_index = tc.worst_index;
        }
        report.per_tensor.push(tc);
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Weight,
    Bias,
    Gamma,
    Beta,
}

#[derive(Debug, Clone, Copy)]
enum Param {
    Conv { foot: usize, layer: usize, kind: Kind },
    EncFc { foot: usize, kind: Kind },
    Hidden { layer: usize, kind: Kind },
    Out { kind: Kind },
}

struct Probe<'a> {
    net: &'a Net,
    c: &'a BatchCache,
    y: usize,
}

/// Delta of `relu(base + d)`; flags a kink if either `base + d` or
/// `base − d` lands on the other side of zero.
fn relu_delta(base: &[f64], d: &[f64], kink: &mut bool) -> Vec<f64> {
    base.iter()
        .zip(d)
        .map(|(&b, &x)| {
            if x == 0.0 {
                return 0.0;
            }
            let on = b > 0.0;
            if (b + x > 0.0) != on || (b - x > 0.0) != on {
                *kink = true;
            }
            if on {
                x
            } else {
                0.0
            }
        })
        .collect()
}

impl Probe<'_> {
    /// Map a position in `Net::tensors()` to its structural role.
    fn locate(&self, ti: usize) -> Param {
        let n_conv = self.net.cfg.conv_channels.len();
        let per_foot = 2 * n_conv + 2;
        let wb = |k: usize| if k % 2 == 0 { Kind::Weight } else { Kind::Bias };
        if ti < 2 * per_foot {
            let (foot, r) = (ti / per_foot, ti % per_foot);
            return if r < 2 * n_conv {
                Param::Conv {
                    foot,
                    layer: r / 2,
                    kind: wb(r),
                }
            } else {
                Param::EncFc { foot, kind: wb(r) }
            };
        }
        let r = ti - 2 * per_foot;
        if r < 4 * self.net.hidden.len() {
            let kind = [Kind::Weight, Kind::Bias, Kind::Gamma, Kind::Beta][r % 4];
            return Param::Hidden { layer: r / 4, kind };
        }
        Param::Out { kind: wb(r - 4 * self.net.hidden.len()) }
    }

    fn numeric(&self, p: Param, idx: usize, eps: f64, report: &mut GradCheckReport) -> Option<f64> {
        let mut h = eps;
        for attempt in 0..=RETRIES {
            let mut kink = false;
            let dz = self.delta(p, idx, h, &mut kink);
            if !kink {
                // piecewise-linear regime: the −h delta is the negation
                let neg: Vec<f64> = dz.iter().map(|v| -v).collect();
                return Some((self.dloss(&dz) - self.dloss(&neg)) / (2.0 * h));
            }
            if attempt == 0 {
                report.kink_retries += 1;
            }
            h /= 1000.0;
        }
        report.kink_skipped += 1;
        None
    }

    /// Change in loss for a logit change `dz`.
    fn dloss(&self, dz: &[f64]) -> f64 {
        let p = &self.c.probs[..NUM_CLASSES];
        let s: f64 = p.iter().zip(dz).map(|(pk, d)| pk * d.exp_m1()).sum();
        s.ln_1p() - dz[self.y]
    }

    /// Logit delta for moving parameter `idx` of `p` by `h`.
    fn delta(&self, p: Param, idx: usize, h: f64, kink: &mut bool) -> Vec<f64> {
        let net = self.net;
        match p {
            Param::Conv { foot, layer, kind } => {
                let e = &self.c.enc[0][foot];
                let conv = &net.enc[foot].convs[layer];
                let (ih, iw) = e.dims[layer];
                let (oh, ow) = e.dims[layer + 1];
                let plane = oh * ow;
                let mut d = vec![0.0; conv.cout * plane];
                match kind {
                    Kind::Weight => {
                        let co = idx / (conv.cin * 9);
                        let ci = (idx / 9) % conv.cin;
                        let (ky, kx) = ((idx % 9) / 3, idx % 3);
                        let x = &e.acts[layer][ci * ih * iw..(ci + 1) * ih * iw];
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let (iy, ix) = ((2 * oy + ky) as isize - 1, (2 * ox + kx) as isize - 1);
                                if iy < 0 || ix < 0 || iy >= ih as isize || ix >= iw as isize {
                                    continue;
                                }
                                d[co * plane + oy * ow + ox] = h * x[iy as usize * iw + ix as usize];
                            }
                        }
                    }
                    _ => d[idx * plane..(idx + 1) * plane].iter_mut().for_each(|v| *v = h),
                }
                self.from_conv(foot, layer, d, kink)
            }
            Param::EncFc { foot, kind } => {
                let e = &self.c.enc[0][foot];
                let fc = &net.enc[foot].fc;
                let mut d = vec![0.0; fc.nout];
                match kind {
                    Kind::Weight => d[idx / fc.nin] = h * e.gap[idx % fc.nin],
                    _ => d[idx] = h,
                }
                self.from_fc(foot, d, kink)
            }
            Param::Hidden { layer, kind } => {
                let hc = &self.c.hidden[layer];
                let lin = &net.hidden[layer].0;
                let mut d = vec![0.0; lin.nout];
                match kind {
                    Kind::Weight => d[idx / lin.nin] = h * hc.input[idx % lin.nin],
                    Kind::Bias => d[idx] = h,
                    Kind::Gamma => {
                        d[idx] = h * hc.xhat[idx];
                        return self.from_bn(layer, d, kink);
                    }
                    Kind::Beta => {
                        d[idx] = h;
                        return self.from_bn(layer, d, kink);
                    }
                }
                self.from_z(layer, d, kink)
            }
            Param::Out { kind } => {
                let nin = net.out.nin;
                let x = self.c.hidden.last().map_or(&self.c.u, |hc| &hc.out);
                let mut d = vec![0.0; NUM_CLASSES];
                match kind {
                    Kind::Weight => d[idx / nin] = h * x[idx % nin],
                    _ => d[idx] = h,
                }
                d
            }
        }
    }

    fn from_conv(&self, foot: usize, layer: usize, dpre: Vec<f64>, kink: &mut bool) -> Vec<f64> {
        let e = &self.c.enc[0][foot];
        let enc = &self.net.enc[foot];
        let mut d = relu_delta(&e.pre[layer], &dpre, kink);
        for j in layer + 1..enc.convs.len() {
            let (h, w) = e.dims[j];
            let dp = enc.convs[j].apply_linear(&d, h, w);
            d = relu_delta(&e.pre[j], &dp, kink);
        }
        let (fh, fw) = *e.dims.last().expect("dims");
        let dgap = global_average(&d, fh * fw);
        self.from_fc(foot, enc.fc.apply_sparse(&dgap), kink)
    }

    fn from_fc(&self, foot: usize, dzf: Vec<f64>, kink: &mut bool) -> Vec<f64> {
        let e = &self.c.enc[0][foot];
        let f = self.net.cfg.feature_dim;
        let dfeat = relu_delta(&e.zf, &dzf, kink);
        let mut du = vec![0.0; 2 * f];
        du[foot * f..(foot + 1) * f].copy_from_slice(&dfeat);
        self.from_input(0, du, kink)
    }

    /// Delta entering hidden layer `k` (or the output layer).
    fn from_input(&self, k: usize, dx: Vec<f64>, kink: &mut bool) -> Vec<f64> {
        if k == self.net.hidden.len() {
            return self.net.out.apply_sparse(&dx);
        }
        let dz = self.net.hidden[k].0.apply_sparse(&dx);
        self.from_z(k, dz, kink)
    }

    /// Inference-mode BN is affine: Δ = γ·inv_std·Δz.
    fn from_z(&self, k: usize, dz: Vec<f64>, kink: &mut bool) -> Vec<f64> {
        let bn = &self.net.hidden[k].1;
        let inv = &self.c.hidden[k].inv_std;
        let dbn = dz.iter().enumerate().map(|(j, d)| d * bn.gamma[j] * inv[j]).collect();
        self.from_bn(k, dbn, kink)
    }

    fn from_bn(&self, k: usize, dbn: Vec<f64>, kink: &mut bool) -> Vec<f64> {
        let dout = relu_delta(&self.c.hidden[k].bn, &dbn, kink);
        self.from_input(k + 1, dout, kink)
    }
}

/// Small seeded offsets on every bias and BN shift, moving a freshly
/// initialised model off the exact ReLU kinks that zero biases create on
/// zero-valued input regions.
pub fn jitter_biases(net: &mut Net, seed: u64, scale: f64) {
    use rand::Rng;
    let mut rng = crate::seed::rng(seed, "gradcheck-jitter");
    for (name, t) in net.tensors_mut() {
        if name.ends_with(".bias") {
            t.iter_mut().for_each(|v| *v += scale * (2.0 * rng.gen::<f64>() - 1.0));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::seed;
    use rand::Rng;

    fn tiny(hidden: Vec<usize>) -> ModelConfig {
        ModelConfig {
            map_height: 9,
            map_width: 8,
            conv_channels: vec![2, 3],
            feature_dim: 5,
            hidden,
            zero_init_final: false,
            ..ModelConfig::desk_scale()
        }
    }

    fn map(cfg: &ModelConfig, k: u64) -> Vec<f64> {
        let mut r = seed::rng(k, "gc-map");
        (0..cfg.map_height * cfg.map_width).map(|_| r.gen::<f64>()).collect()
    }

    fn net(cfg: &ModelConfig) -> Net {
        let mut n = Net::new(cfg).unwrap();
        jitter_biases(&mut n, 1, 0.1);
        // non-trivial running statistics
        let mut r = seed::rng(2, "bn");
        for (_, t) in n.buffers_mut() {
            t.iter_mut().for_each(|v| *v += 0.5 * r.gen::<f64>());
        }
        n
    }

    /// Plain central differences with full forward passes.
    fn brute_force(net: &Net, l: &[f64], r: &[f64], y: usize, h: f64) -> Vec<Vec<f64>> {
        let loss = |n: &Net| -n.forward(l, r).unwrap()[y].ln();
        let shapes: Vec<usize> = net.tensors().iter().map(|(_, t)| t.len()).collect();
        shapes
            .iter()
            .enumerate()
            .map(|(ti, &len)| {
                (0..len)
                    .map(|i| {
                        let mut p = net.clone();
                        p.tensors_mut()[ti].1[i] += h;
                        let mut m = net.clone();
                        m.tensors_mut()[ti].1[i] -= h;
                        (loss(&p) - loss(&m)) / (2.0 * h)
                    })
                    .collect()
            })
            .collect()
    }

    #[test]
    fn delta_propagation_agrees_with_brute_force() {
        let cfg = tiny(vec![6, 4]);
        let n = net(&cfg);
        let (l, r) = (map(&cfg, 1), map(&cfg, 2));
        let brute = brute_force(&n, &l, &r, 2, 1e-5);
        let cache = n.forward_eval_cached(&[(l.as_slice(), r.as_slice())]);
        let probe = Probe { net: &n, c: &cache, y: 2 };
        let mut rep = measure(&n, &l, &r, 2, 1e-6).unwrap();
        for (ti, want) in brute.iter().enumerate() {
            let p = probe.locate(ti);
            for (i, &w) in want.iter().enumerate() {
                let got = probe.numeric(p, i, 1e-6, &mut rep).unwrap();
                assert!((got - w).abs() <= 1e-7 * w.abs().max(1e-2), "tensor {ti}[{i}]: {got} vs {w}");
            }
        }
    }

    #[test]
    fn report_names_follow_tensor_order() {
        let cfg = tiny(vec![6]);
        let n = net(&cfg);
        let rep = measure(&n, &map(&cfg, 3), &map(&cfg, 4), 0, DEFAULT_EPSILON).unwrap();
        let names: Vec<String> = n.tensors().into_iter().map(|(s, _)| s).collect();
        let got: Vec<String> = rep.per_tensor.iter().map(|t| t.name.clone()).collect();
        assert_eq!(got, names);
        assert_eq!(rep.n_params, n.param_count());
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");
    }

    #[test]
    fn single_layer_head_is_tight() {
        let cfg = tiny(vec![]);
        let n = net(&cfg);
        let rep = gradient_check(&n, &map(&cfg, 5), &map(&cfg, 6), 1, DEFAULT_EPSILON).unwrap();
        assert!(rep.max_rel_err < 1e-6, "{rep:?}");
    }

    #[test]
    fn zero_input_gives_zero_first_layer_weight_gradients() {
        let cfg = tiny(vec![6]);
        let n = net(&cfg);
        let zero = vec![0.0; cfg.map_height * cfg.map_width];
        let c = n.forward_eval_cached(&[(zero.as_slice(), zero.as_slice())]);
        let mut g = n.zeros_like();
        n.backward(&c, &[0], &mut g);
        assert!(g.enc[0].convs[0].w.iter().chain(&g.enc[1].convs[0].w).all(|&v| v == 0.0));
        let rep = gradient_check(&n, &zero, &zero, 0, DEFAULT_EPSILON).unwrap();
        let conv0 = rep.per_tensor.iter().find(|t| t.name == "enc_left.conv0.weight").unwrap();
        assert_eq!(conv0.max_rel_err, 0.0);
    }

    #[test]
    fn broken_gradient_is_named() {
        let cfg = tiny(vec![6]);
        let n = net(&cfg);
        let (l, r) = (map(&cfg, 7), map(&cfg, 8));
        let c = n.forward_eval_cached(&[(l.as_slice(), r.as_slice())]);
        let mut g = n.zeros_like();
        n.backward(&c, &[1], &mut g);
        g.hidden[0].1.gamma[3] += 0.01;
        let err = enforce(compare(&n, &c, 1, DEFAULT_EPSILON, &g).unwrap()).unwrap_err();
        assert!(matches!(err, ModelError::GradientMismatch { ref tensor, index: 3, .. } if tensor == "head.bn0.weight"), "{err}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!(relative_error(1.0, 1.0 + 1e-3) > TOLERANCE);
        assert!(relative_error(1e-12, 2e-12) < 1e-3);
    }

    #[test]
    fn relu_delta_flags_crossings() {
        let mut k = false;
        assert_eq!(relu_delta(&[1.0, -1.0], &[0.5, 0.5], &mut k), vec![0.5, 0.0]);
        assert!(!k);
        relu_delta(&[0.1], &[0.2], &mut k);
        assert!(k);
    }
}
