use super::{
    Activation, Batch, BnMode, BnStats, Labels, LayerSlots, LossKind, MlpSpec, NetError,
    ParamVector, BN_EPS,
};

/// Result of a forward pass over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub mean_loss: f64,
    pub per_example: Vec<f64>,
    pub accuracy: f64,
    /// Statistics of this batch for every BN layer (empty without BN).
    pub bn_stats: Vec<BnStats>,
}

pub(super) struct LayerCache {
    pub input: Vec<f64>,
    /// Normalized pre-activations, BN layers only.
    pub xhat: Option<Vec<f64>>,
    pub inv_std: Option<Vec<f64>>,
    /// Pre-activation fed into the nonlinearity (logits for the last layer).
    pub pre: Vec<f64>,
    pub out: Vec<f64>,
}

pub(super) fn activation_of(spec: &MlpSpec, layer: usize) -> Activation {
    spec.activations
        .get(layer)
        .copied()
        .unwrap_or(Activation::Identity)
}

/// `z = a W^T + b` for row-major `a` (`n x in`) and `W` (`out x in`).
pub(super) fn linear(
    a: &[f64],
    n: usize,
    w: &[f64],
    b: Option<&[f64]>,
    fan_in: usize,
    fan_out: usize,
) -> Vec<f64> {
    let mut z = vec![0.0; n * fan_out];
    for i in 0..n {
        let row = &a[i * fan_in..(i + 1) * fan_in];
        for o in 0..fan_out {
            let wrow = &w[o * fan_in..(o + 1) * fan_in];
            let mut s = b.map_or(0.0, |b| b[o]);
            for k in 0..fan_in {
                s += row[k] * wrow[k];
            }
            z[i * fan_out + o] = s;
        }
    }
    z
}

pub(super) fn forward_cache(
    spec: &MlpSpec,
    layout: &[LayerSlots],
    theta: &[f64],
    batch: &Batch,
    mode: BnMode<'_>,
) -> Result<(Vec<LayerCache>, Vec<BnStats>), NetError> {
    let n = batch.len();
    let mut caches = Vec::with_capacity(layout.len());
    let mut stats_out = Vec::new();
    let mut bn_ordinal = 0;
    let mut a = batch.inputs.clone();
    for (l, slot) in layout.iter().enumerate() {
        let (fi, fo) = (slot.fan_in, slot.fan_out);
        let w = &theta[slot.weight..slot.weight + fi * fo];
        let b = &theta[slot.bias..slot.bias + fo];
        let z = linear(&a, n, w, Some(b), fi, fo);
        let last = l + 1 == layout.len();
        let (pre, xhat, inv_std) = match slot.bn {
            Some((g_off, b_off)) => {
                let (mean, var) = match mode {
                    BnMode::BatchStats => {
                        let mut mean = vec![0.0; fo];
                        let mut var = vec![0.0; fo];
                        for i in 0..n {
                            for o in 0..fo {
                                mean[o] += z[i * fo + o];
                            }
                        }
                        for m in &mut mean {
                            *m /= n as f64;
                        }
                        for i in 0..n {
                            for o in 0..fo {
                                let d = z[i * fo + o] - mean[o];
                                var[o] += d * d;
                            }
                        }
                        for v in &mut var {
                            *v /= n as f64;
                        }
                        (mean, var)
                    }
                    BnMode::Frozen(stats) => {
                        let s = stats.get(bn_ordinal).ok_or_else(|| {
                            NetError::Shape(format!(
                                "missing frozen statistics for BN layer {bn_ordinal}"
                            ))
                        })?;
                        if s.mean.len() != fo || s.var.len() != fo {
                            return Err(NetError::Shape(
                                "frozen BN statistics have wrong width".into(),
                            ));
                        }
                        (s.mean.clone(), s.var.clone())
                    }
                };
                bn_ordinal += 1;
                let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
                let gamma = &theta[g_off..g_off + fo];
                let beta = &theta[b_off..b_off + fo];
                let mut xhat = vec![0.0; n * fo];
                let mut pre = vec![0.0; n * fo];
                for i in 0..n {
                    for o in 0..fo {
                        let xh = (z[i * fo + o] - mean[o]) * inv_std[o];
                        xhat[i * fo + o] = xh;
                        pre[i * fo + o] = gamma[o] * xh + beta[o];
                    }
                }
                stats_out.push(BnStats { mean, var });
                (pre, Some(xhat), Some(inv_std))
            }
            None => (z, None, None),
        };
        let out = if last {
            pre.clone()
        } else {
            let act = activation_of(spec, l);
            pre.iter().map(|&x| act.apply(x)).collect()
        };
        let input = std::mem::replace(&mut a, out.clone());
        caches.push(LayerCache {
            input,
            xhat,
            inv_std,
            pre,
            out,
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(NetError::NonFinite);
    }
    Ok((caches, stats_out))
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Per-example losses, gradient of the mean loss w.r.t. the logits, and accuracy.
pub(super) fn loss_head(
    spec: &MlpSpec,
    logits: &[f64],
    batch: &Batch,
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = batch.len();
    let c = spec.output_size();
    let inv_n = 1.0 / n as f64;
    let mut per = Vec::with_capacity(n);
    let mut dlogits = vec![0.0; n * c];
    let mut correct = 0usize;
    for i in 0..n {
        let z = &logits[i * c..(i + 1) * c];
        let dz = &mut dlogits[i * c..(i + 1) * c];
        let pred = argmax(z);
        match (&batch.labels, spec.loss) {
            (Labels::Classes(labels), LossKind::SoftmaxCrossEntropy) => {
                let y = labels[i];
                let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
                let lse = zmax + sum.ln();
                per.push(lse - z[y]);
                for k in 0..c {
                    let p = (z[k] - zmax).exp() / sum;
                    dz[k] = (p - if k == y { 1.0 } else { 0.0 }) * inv_n;
                }
                correct += usize::from(pred == y);
            }
            (Labels::Classes(labels), LossKind::Mse) => {
                let y = labels[i];
                let mut l = 0.0;
                for k in 0..c {
                    let t = if k == y { 1.0 } else { 0.0 };
                    let e = z[k] - t;
                    l += e * e;
                    dz[k] = 2.0 * e * inv_n;
                }
                per.push(l);
                correct += usize::from(pred == y);
            }
            (Labels::Targets { values, width }, _) => {
                let t = &values[i * width..(i + 1) * width];
                let mut l = 0.0;
                for k in 0..c {
                    let e = z[k] - t[k];
                    l += e * e;
                    dz[k] = 2.0 * e * inv_n;
                }
                per.push(l);
                correct += usize::from(pred == argmax(t));
            }
        }
    }
    (per, dlogits, correct as f64 / n as f64)
}

/// Mean loss, per-example losses and accuracy (ties in argmax go to the lowest class).
pub fn forward_loss(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    mode: BnMode<'_>,
) -> Result<ForwardOutput, NetError> {
    check_inputs(spec, theta, batch)?;
    let layout = spec.layout();
    let (caches, bn_stats) = forward_cache(spec, &layout, &theta.0, batch, mode)?;
    let logits = &caches.last().unwrap().out;
    let (per_example, _, accuracy) = loss_head(spec, logits, batch);
    let mean_loss = per_example.iter().sum::<f64>() / per_example.len() as f64;
    if !mean_loss.is_finite() {
        return Err(NetError::NonFinite);
    }
    Ok(ForwardOutput {
        mean_loss,
        per_example,
        accuracy,
        bn_stats,
    })
}

/// Batch statistics of every BN layer at `theta` over `batch`.
pub fn bn_batch_statistics(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
) -> Result<Vec<BnStats>, NetError> {
    check_inputs(spec, theta, batch)?;
    let (_, stats) = forward_cache(spec, &spec.layout(), &theta.0, batch, BnMode::BatchStats)?;
    Ok(stats)
}

pub(super) fn check_inputs(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
) -> Result<(), NetError> {
    spec.validate()?;
    if theta.len() != spec.num_params() {
        return Err(NetError::Shape(format!(
            "parameter vector has {} entries, spec needs {}",
            theta.len(),
            spec.num_params()
        )));
    }
    batch.check(spec)
}

/// Reverse pass. `dlogits` is the gradient of the mean loss w.r.t. the logits.
pub(super) fn backward(
    spec: &MlpSpec,
    layout: &[LayerSlots],
    theta: &[f64],
    caches: &[LayerCache],
    mut upstream: Vec<f64>,
    n: usize,
    batch_stats: bool,
) -> Vec<f64> {
    let mut g = vec![0.0; theta.len()];
    let last = layout.len() - 1;
    for l in (0..layout.len()).rev() {
        let slot = &layout[l];
        let cache = &caches[l];
        let (fi, fo) = (slot.fan_in, slot.fan_out);
        // upstream: d(loss)/d(out) for hidden layers, d(loss)/d(logits) for the last
        let du: Vec<f64> = if l == last {
            upstream
        } else {
            let act = activation_of(spec, l);
            upstream
                .iter()
                .zip(cache.pre.iter().zip(&cache.out))
                .map(|(d, (&x, &y))| d * act.d1(x, y))
                .collect()
        };
        let dz = match (slot.bn, &cache.xhat, &cache.inv_std) {
            (Some((g_off, b_off)), Some(xhat), Some(inv_std)) => {
                let gamma = &theta[g_off..g_off + fo];
                let mut dxhat = vec![0.0; n * fo];
                for i in 0..n {
                    for o in 0..fo {
                        let d = du[i * fo + o];
                        g[g_off + o] += d * xhat[i * fo + o];
                        g[b_off + o] += d;
                        dxhat[i * fo + o] = d * gamma[o];
                    }
                }
                let mut dz = vec![0.0; n * fo];
                if batch_stats {
                    let mut mean_dx = vec![0.0; fo];
                    let mut mean_dxx = vec![0.0; fo];
                    for i in 0..n {
                        for o in 0..fo {
                            mean_dx[o] += dxhat[i * fo + o];
                            mean_dxx[o] += dxhat[i * fo + o] * xhat[i * fo + o];
                        }
                    }
                    for o in 0..fo {
                        mean_dx[o] /= n as f64;
                        mean_dxx[o] /= n as f64;
                    }
                    for i in 0..n {
                        for o in 0..fo {
                            let k = i * fo + o;
                            dz[k] = inv_std[o] * (dxhat[k] - mean_dx[o] - xhat[k] * mean_dxx[o]);
                        }
                    }
                } else {
                    for i in 0..n {
                        for o in 0..fo {
                            dz[i * fo + o] = dxhat[i * fo + o] * inv_std[o];
                        }
                    }
                }
                dz
            }
            _ => du,
        };
        let w = &theta[slot.weight..slot.weight + fi * fo];
        for i in 0..n {
            let a = &cache.input[i * fi..(i + 1) * fi];
            for o in 0..fo {
                let d = dz[i * fo + o];
                if d == 0.0 {
                    continue;
                }
                g[slot.bias + o] += d;
                let gw = &mut g[slot.weight + o * fi..slot.weight + (o + 1) * fi];
                for k in 0..fi {
                    gw[k] += d * a[k];
                }
            }
        }
        if l > 0 {
            let mut da = vec![0.0; n * fi];
            for i in 0..n {
                let row = &mut da[i * fi..(i + 1) * fi];
                for o in 0..fo {
                    let d = dz[i * fo + o];
                    if d == 0.0 {
                        continue;
                    }
                    let wrow = &w[o * fi..(o + 1) * fi];
                    for k in 0..fi {
                        row[k] += d * wrow[k];
                    }
                }
            }
            upstream = da;
        } else {
            upstream = Vec::new();
        }
    }
    g
}

/// Exact gradient of the mean batch loss.
pub fn grad(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    mode: BnMode<'_>,
) -> Result<ParamVector, NetError> {
    Ok(grad_with_output(spec, theta, batch, mode)?.0)
}

/// Gradient together with the forward output of the same pass.
pub(crate) fn grad_with_output(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    mode: BnMode<'_>,
) -> Result<(ParamVector, ForwardOutput), NetError> {
    check_inputs(spec, theta, batch)?;
    let layout = spec.layout();
    let (caches, bn_stats) = forward_cache(spec, &layout, &theta.0, batch, mode)?;
    let (per_example, dlogits, accuracy) = loss_head(spec, &caches.last().unwrap().out, batch);
    let mean_loss = per_example.iter().sum::<f64>() / per_example.len() as f64;
    let batch_stats = matches!(mode, BnMode::BatchStats);
    let g = backward(
        spec,
        &layout,
        &theta.0,
        &caches,
        dlogits,
        batch.len(),
        batch_stats,
    );
    if !mean_loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(NetError::NonFinite);
    }
    Ok((
        ParamVector(g),
        ForwardOutput {
            mean_loss,
            per_example,
            accuracy,
            bn_stats,
        },
    ))
}

/// One gradient per example. Networks with BN need frozen statistics.
pub fn per_example_grads(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    mode: BnMode<'_>,
) -> Result<Vec<ParamVector>, NetError> {
    if spec.any_bn() && matches!(mode, BnMode::BatchStats) {
        return Err(NetError::BnBatchStatsUnsupported);
    }
    check_inputs(spec, theta, batch)?;
    (0..batch.len())
        .map(|i| grad(spec, theta, &batch.select(&[i]), mode))
        .collect()
}
