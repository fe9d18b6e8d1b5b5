use crate::error::{Error, Result};
use crate::model::{AstParams, ParamSet};
use crate::tensor::{Real, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moments, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Real = f32> {
    pub m: AstParams<T>,
    pub v: AstParams<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(params: &AstParams<T>) -> Self {
        let zeros = params.map(|t| Tensor::zeros(t.shape().to_vec()));
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }
}

/// One bias-corrected Adam update, no weight decay.
pub fn adam_step<T: Real>(
    params: &mut AstParams<T>,
    grads: &ParamSet<Tensor<T>>,
    state: &mut OptimizerState<T>,
    lr: f64,
) -> Result<()> {
    let names = params.named().into_iter().map(|(n, _)| n).collect::<Vec<_>>();
    let gs = grads.slots();
    if gs.len() != names.len() || state.m.slots().len() != names.len() {
        return Err(Error::Aggregation(format!(
            "adam: {} parameters, {} gradients, {} moments",
            names.len(),
            gs.len(),
            state.m.slots().len()
        )));
    }
    for ((name, p), (g, m)) in names.iter().zip(params.slots()).zip(gs.iter().zip(state.m.slots())) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::Aggregation(format!(
                "adam: {name} is {:?}, gradient {:?}, moments {:?}",
                p.shape(),
                g.shape(),
                m.shape()
            )));
        }
    }
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    let eps = state.eps;
    for (((p, g), m), v) in params
        .slots_mut()
        .into_iter()
        .zip(gs)
        .zip(state.m.slots_mut())
        .zip(state.v.slots_mut())
    {
        let (pd, gd) = (p.data_mut(), g.data());
        let (md, vd) = (m.data_mut(), v.data_mut());
        for i in 0..pd.len() {
            let gi = gd[i].f64();
            let mi = b1 * md[i].f64() + (1.0 - b1) * gi;
            let vi = b2 * vd[i].f64() + (1.0 - b2) * gi * gi;
            md[i] = T::of(mi);
            vd[i] = T::of(vi);
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + eps);
            pd[i] = T::of(pd[i].f64() - update);
        }
    }
    Ok(())
}
