use crate::error::{Error, Result};
use crate::model::{AstParams, ParamSet};
use crate::tensor::{Real, Tensor};

/// Running elementwise mean of parameter sets, accumulated in f64.
#[derive(Clone, Debug, Default)]
pub struct WeightAverager {
    sum: Option<ParamSet<Tensor<f64>>>,
    count: usize,
}

impl WeightAverager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn add<T: Real>(&mut self, params: &AstParams<T>) -> Result<()> {
        match &mut self.sum {
            None => self.sum = Some(params.cast()),
            Some(sum) => {
                let next = sum.zip_map(params, |name, acc, p| {
                    if acc.shape() != p.shape() {
                        return Err(Error::Aggregation(format!(
                            "{name}: {:?} vs {:?}",
                            acc.shape(),
                            p.shape()
                        )));
                    }
                    let mut out = acc.clone();
                    for (a, &v) in out.data_mut().iter_mut().zip(p.data()) {
                        *a += v.f64();
                    }
                    Ok(out)
                })?;
                *sum = next;
            }
        }
        self.count += 1;
        Ok(())
    }

    pub fn finish<T: Real>(&self) -> Result<AstParams<T>> {
        let sum = self
            .sum
            .as_ref()
            .ok_or_else(|| Error::Aggregation("no checkpoints to average".into()))?;
        let n = self.count as f64;
        Ok(sum.map(|t| t.map(|v| v / n).cast()))
    }
}

/// Elementwise mean of the checkpoints, tensor by tensor.
pub fn weight_average<T: Real>(checkpoints: &[AstParams<T>]) -> Result<AstParams<T>> {
    let mut avg = WeightAverager::new();
    for c in checkpoints {
        avg.add(c)?;
    }
    avg.finish()
}

/// Elementwise mean of member outputs.
pub fn ensemble_predict<T: Real>(outputs: &[Tensor<T>]) -> Result<Tensor<T>> {
    let first = outputs
        .first()
        .ok_or_else(|| Error::Aggregation("ensemble has no members".into()))?;
    let mut acc = vec![0f64; first.numel()];
    for (k, o) in outputs.iter().enumerate() {
        if o.shape() != first.shape() {
            return Err(Error::Aggregation(format!(
                "member {k} outputs {:?}, member 0 outputs {:?}",
                o.shape(),
                first.shape()
            )));
        }
        for (a, v) in acc.iter_mut().zip(o.data()) {
            *a += v.f64();
        }
    }
    let n = outputs.len() as f64;
    Tensor::new(first.shape().to_vec(), acc.into_iter().map(|v| T::of(v / n)).collect())
}
