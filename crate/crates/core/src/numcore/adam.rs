//! Parameter storage and the Adam update with decoupled weight decay.

use serde::{Deserialize, Serialize};

use super::{NumError, Result};

/// One named trainable tensor plus its Adam moment buffers.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub value: Vec<f64>,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Param {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, value: Vec<f64>) -> Self {
        assert_eq!(rows * cols, value.len());
        let n = value.len();
        Param { name: name.into(), rows, cols, value, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

/// A group of parameters updated together; `step` counts Adam steps taken.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ParamSet {
    pub params: Vec<Param>,
    pub step: u64,
}

impl ParamSet {
    pub fn push(&mut self, p: Param) -> usize {
        self.params.push(p);
        self.params.len() - 1
    }

    pub fn total_len(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if !p.value.iter().all(|x| x.is_finite()) {
                return Err(NumError::NonFinite(p.name.clone()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamParams {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamParams { lr, weight_decay, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One Adam step over the whole set. `grads[i]` must be shaped like
/// `set.params[i]`; weight decay is decoupled (AdamW): `p -= lr * wd * p`.
pub fn adam_step(set: &mut ParamSet, grads: &[&[f64]], hp: AdamParams) -> Result<()> {
    if hp.lr <= 0.0 {
        return Err(NumError::Parameter { name: "lr", value: hp.lr });
    }
    assert_eq!(grads.len(), set.params.len(), "one gradient slice per parameter");
    set.step += 1;
    let t = set.step as f64;
    let bc1 = 1.0 - hp.beta1.powf(t);
    let bc2 = 1.0 - hp.beta2.powf(t);
    for (p, g) in set.params.iter_mut().zip(grads) {
        assert_eq!(p.len(), g.len(), "gradient shape mismatch for {}", p.name);
        for i in 0..p.value.len() {
            p.m[i] = hp.beta1 * p.m[i] + (1.0 - hp.beta1) * g[i];
            p.v[i] = hp.beta2 * p.v[i] + (1.0 - hp.beta2) * g[i] * g[i];
            let m_hat = p.m[i] / bc1;
            let v_hat = p.v[i] / bc2;
            p.value[i] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
            p.value[i] -= hp.lr * hp.weight_decay * p.value[i];
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: Vec<f64>) -> ParamSet {
        let mut set = ParamSet::default();
        let n = v.len();
        set.push(Param::new("p", 1, n, v));
        set
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut set = one_param(vec![1.0, -2.0, 3.0]);
        adam_step(&mut set, &[&[0.0, 0.0, 0.0]], AdamParams::new(0.1, 0.0)).unwrap();
        assert_eq!(set.params[0].value, vec![1.0, -2.0, 3.0]);
    }

    #[test]
    fn first_step_magnitude_is_lr() {
        // bias correction makes the first update m_hat/sqrt(v_hat) = sign(g)
        let mut set = one_param(vec![0.0, 0.0]);
        adam_step(&mut set, &[&[0.5, -2.0]], AdamParams::new(0.01, 0.0)).unwrap();
        assert!((set.params[0].value[0] + 0.01).abs() < 1e-6);
        assert!((set.params[0].value[1] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn rejects_non_positive_lr() {
        let mut set = one_param(vec![0.0]);
        assert!(adam_step(&mut set, &[&[1.0]], AdamParams::new(0.0, 0.0)).is_err());
    }

    #[test]
    fn three_steps_match_scalar_reference() {
        // minimize f(x) = x^2 from x = 1, grad = 2x, with weight decay
        let hp = AdamParams::new(0.05, 0.01);
        let mut set = one_param(vec![1.0]);
        // hand-rolled reference loop
        let (mut x, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
        for t in 1..=3u32 {
            let g = 2.0 * x;
            m = hp.beta1 * m + (1.0 - hp.beta1) * g;
            v = hp.beta2 * v + (1.0 - hp.beta2) * g * g;
            let m_hat = m / (1.0 - hp.beta1.powi(t as i32));
            let v_hat = v / (1.0 - hp.beta2.powi(t as i32));
            x -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
            x -= hp.lr * hp.weight_decay * x;

            let gp = 2.0 * set.params[0].value[0];
            adam_step(&mut set, &[&[gp]], hp).unwrap();
        }
        assert!((set.params[0].value[0] - x).abs() < 1e-15);
    }
}
