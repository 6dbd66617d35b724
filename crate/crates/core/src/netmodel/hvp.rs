use super::backprop::{activation_of, check_inputs, forward_cache, grad, linear, loss_head};
use super::{Batch, BnMode, BnStats, Labels, LossKind, MlpSpec, NetError, ParamVector};
use crate::linalg::LinearOperator;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HvpMethod {
    Pearlmutter,
    Fd,
}

impl HvpMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HvpMethod::Pearlmutter => "pearlmutter",
            HvpMethod::Fd => "fd",
        }
    }
}

/// Exact Hessian-vector product of the mean batch loss by forward-over-reverse
/// (R-operator) differentiation. Networks with batch norm are rejected.
pub fn hvp_pearlmutter(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    v: &ParamVector,
) -> Result<ParamVector, NetError> {
    if spec.any_bn() {
        return Err(NetError::BnUnsupported);
    }
    check_inputs(spec, theta, batch)?;
    if v.len() != theta.len() {
        return Err(NetError::Shape(
            "direction length differs from parameter count".into(),
        ));
    }
    let layout = spec.layout();
    let th = &theta.0;
    let vv = &v.0;
    let n = batch.len();
    let (caches, _) = forward_cache(spec, &layout, th, batch, BnMode::BatchStats)?;

    // R-forward: directional derivative of every pre-activation and output.
    let mut r_pre: Vec<Vec<f64>> = Vec::with_capacity(layout.len());
    let mut r_in: Vec<Vec<f64>> = Vec::with_capacity(layout.len());
    let mut ra = vec![0.0; n * spec.input_size()];
    for (l, slot) in layout.iter().enumerate() {
        let (fi, fo) = (slot.fan_in, slot.fan_out);
        let w = &th[slot.weight..slot.weight + fi * fo];
        let dw = &vv[slot.weight..slot.weight + fi * fo];
        let db = &vv[slot.bias..slot.bias + fo];
        let mut rz = linear(&caches[l].input, n, dw, Some(db), fi, fo);
        let from_input = linear(&ra, n, w, None, fi, fo);
        for (a, b) in rz.iter_mut().zip(&from_input) {
            *a += b;
        }
        let rout: Vec<f64> = if l + 1 == layout.len() {
            rz.clone()
        } else {
            let act = activation_of(spec, l);
            rz.iter()
                .zip(caches[l].pre.iter().zip(&caches[l].out))
                .map(|(r, (&x, &y))| r * act.d1(x, y))
                .collect()
        };
        r_in.push(std::mem::replace(&mut ra, rout));
        r_pre.push(rz);
    }

    let logits = &caches.last().unwrap().out;
    let (_, dlogits, _) = loss_head(spec, logits, batch);
    let c = spec.output_size();
    let inv_n = 1.0 / n as f64;
    let rlog = r_pre.last().unwrap();
    let mut r_dlogits = vec![0.0; n * c];
    let softmax =
        spec.loss == LossKind::SoftmaxCrossEntropy && matches!(batch.labels, Labels::Classes(_));
    for i in 0..n {
        let z = &logits[i * c..(i + 1) * c];
        let rz = &rlog[i * c..(i + 1) * c];
        let out = &mut r_dlogits[i * c..(i + 1) * c];
        if softmax {
            let zmax = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = z.iter().map(|v| (v - zmax).exp()).sum();
            let p: Vec<f64> = z.iter().map(|v| (v - zmax).exp() / sum).collect();
            let prz: f64 = p.iter().zip(rz).map(|(a, b)| a * b).sum();
            for k in 0..c {
                out[k] = p[k] * (rz[k] - prz) * inv_n;
            }
        } else {
            for k in 0..c {
                out[k] = 2.0 * rz[k] * inv_n;
            }
        }
    }

    let mut hv = vec![0.0; th.len()];
    let mut up = dlogits;
    let mut r_up = r_dlogits;
    let last = layout.len() - 1;
    for l in (0..layout.len()).rev() {
        let slot = &layout[l];
        let (fi, fo) = (slot.fan_in, slot.fan_out);
        let cache = &caches[l];
        let (du, rdu) = if l == last {
            (up, r_up)
        } else {
            let act = activation_of(spec, l);
            let mut du = vec![0.0; n * fo];
            let mut rdu = vec![0.0; n * fo];
            for k in 0..n * fo {
                let d1 = act.d1(cache.pre[k], cache.out[k]);
                du[k] = up[k] * d1;
                rdu[k] = r_up[k] * d1 + up[k] * act.d2(cache.out[k]) * r_pre[l][k];
            }
            (du, rdu)
        };
        let a = &cache.input;
        let ra = &r_in[l];
        for i in 0..n {
            for o in 0..fo {
                let d = du[i * fo + o];
                let rd = rdu[i * fo + o];
                hv[slot.bias + o] += rd;
                let h = &mut hv[slot.weight + o * fi..slot.weight + (o + 1) * fi];
                for k in 0..fi {
                    h[k] += rd * a[i * fi + k] + d * ra[i * fi + k];
                }
            }
        }
        if l > 0 {
            let w = &th[slot.weight..slot.weight + fi * fo];
            let dw = &vv[slot.weight..slot.weight + fi * fo];
            let mut nu = vec![0.0; n * fi];
            let mut rnu = vec![0.0; n * fi];
            for i in 0..n {
                for o in 0..fo {
                    let d = du[i * fo + o];
                    let rd = rdu[i * fo + o];
                    for k in 0..fi {
                        nu[i * fi + k] += d * w[o * fi + k];
                        rnu[i * fi + k] += rd * w[o * fi + k] + d * dw[o * fi + k];
                    }
                }
            }
            up = nu;
            r_up = rnu;
        } else {
            up = Vec::new();
            r_up = Vec::new();
        }
    }
    if hv.iter().any(|x| !x.is_finite()) {
        return Err(NetError::NonFinite);
    }
    Ok(ParamVector(hv))
}

/// Central-difference Hessian-vector product along the normalized direction,
/// rescaled by `‖v‖`. Works with batch norm under any `mode`.
pub fn hvp_fd(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    v: &ParamVector,
    mode: BnMode<'_>,
    eps: f64,
) -> Result<ParamVector, NetError> {
    let nv = v.norm();
    if nv == 0.0 {
        return Err(NetError::ZeroDirection);
    }
    if v.len() != theta.len() {
        return Err(NetError::Shape(
            "direction length differs from parameter count".into(),
        ));
    }
    let mut plus = theta.clone();
    let mut minus = theta.clone();
    for ((p, m), d) in plus.0.iter_mut().zip(minus.0.iter_mut()).zip(&v.0) {
        let step = eps * d / nv;
        *p += step;
        *m -= step;
    }
    let gp = grad(spec, &plus, batch, mode)?;
    let gm = grad(spec, &minus, batch, mode)?;
    let s = nv / (2.0 * eps);
    Ok(ParamVector(
        gp.0.iter().zip(&gm.0).map(|(a, b)| (a - b) * s).collect(),
    ))
}

pub const DEFAULT_FD_EPS: f64 = 1e-4;

/// The Hessian of the mean loss over a fixed batch, as a matrix-free operator.
#[derive(Debug, Clone)]
pub struct HessianOperator {
    spec: MlpSpec,
    theta: ParamVector,
    batch: Batch,
    method: HvpMethod,
    frozen: Option<Vec<BnStats>>,
    fd_eps: f64,
}

impl HessianOperator {
    pub fn method(&self) -> HvpMethod {
        self.method
    }

    pub fn hvp(&self, v: &ParamVector) -> Result<ParamVector, NetError> {
        match self.method {
            HvpMethod::Pearlmutter => hvp_pearlmutter(&self.spec, &self.theta, &self.batch, v),
            HvpMethod::Fd => {
                let mode = match &self.frozen {
                    Some(s) => BnMode::Frozen(s),
                    None => BnMode::BatchStats,
                };
                if v.norm() == 0.0 {
                    return Ok(ParamVector::zeros(v.len()));
                }
                hvp_fd(&self.spec, &self.theta, &self.batch, v, mode, self.fd_eps)
            }
        }
    }
}

impl LinearOperator for HessianOperator {
    fn dim(&self) -> usize {
        self.theta.len()
    }

    /// Failures surface as NaN so the eigensolver reports `NonFinite`.
    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.hvp(&ParamVector(v.to_vec()))
            .map(ParamVector::into_vec)
            .unwrap_or_else(|_| vec![f64::NAN; v.len()])
    }
}

/// Wraps the chosen HVP as a linear operator of dimension `D`.
pub fn hessian_operator(
    spec: &MlpSpec,
    theta: &ParamVector,
    batch: &Batch,
    method: HvpMethod,
    mode: BnMode<'_>,
) -> Result<HessianOperator, NetError> {
    if method == HvpMethod::Pearlmutter && spec.any_bn() {
        return Err(NetError::BnUnsupported);
    }
    check_inputs(spec, theta, batch)?;
    let frozen = match mode {
        BnMode::Frozen(s) => Some(s.to_vec()),
        BnMode::BatchStats => None,
    };
    Ok(HessianOperator {
        spec: spec.clone(),
        theta: theta.clone(),
        batch: batch.clone(),
        method,
        frozen,
        fd_eps: DEFAULT_FD_EPS,
    })
}
