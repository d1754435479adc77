use std::collections::BTreeMap;

use super::NumericsError;

/// One momentum step on a single parameter block:
/// `v ← momentum·v + g; p ← p − lr·v`.
pub fn sgd_update(
    block: &str,
    params: &mut [f64],
    grads: &[f64],
    velocity: &mut [f64],
    lr: f64,
    momentum: f64,
) -> Result<(), NumericsError> {
    check_hyperparameters(lr, momentum)?;
    if params.len() != grads.len() || params.len() != velocity.len() {
        return Err(NumericsError::Length {
            what: "gradient block",
            expected: params.len(),
            actual: grads.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(NumericsError::NonFinite(format!("gradient {block}[{i}]")));
    }
    for ((p, g), v) in params.iter_mut().zip(grads).zip(velocity.iter_mut()) {
        *v = momentum * *v + g;
        *p -= lr * *v;
    }
    Ok(())
}

fn check_hyperparameters(lr: f64, momentum: f64) -> Result<(), NumericsError> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(NumericsError::InvalidArgument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if !(0.0..1.0).contains(&momentum) {
        return Err(NumericsError::InvalidArgument(format!(
            "momentum must lie in [0, 1), got {momentum}"
        )));
    }
    Ok(())
}

/// SGD with momentum, holding one velocity buffer per named parameter block.
#[derive(Debug, Clone)]
pub struct Sgd {
    lr: f64,
    momentum: f64,
    velocity: BTreeMap<String, Vec<f64>>,
}

impl Sgd {
    pub fn new(lr: f64, momentum: f64) -> Result<Self, NumericsError> {
        check_hyperparameters(lr, momentum)?;
        Ok(Self {
            lr,
            momentum,
            velocity: BTreeMap::new(),
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn velocity(&self, block: &str) -> Option<&[f64]> {
        self.velocity.get(block).map(Vec::as_slice)
    }

    pub fn step(&mut self, block: &str, params: &mut [f64], grads: &[f64]) -> Result<(), NumericsError> {
        let v = self
            .velocity
            .entry(block.to_string())
            .or_insert_with(|| vec![0.0; params.len()]);
        sgd_update(block, params, grads, v, self.lr, self.momentum)
    }
}
