use std::collections::BTreeMap;

use ndarray::{ArrayD, Zip};
use serde::{Deserialize, Serialize};

use crate::params::ParamKey;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Gradients are rescaled so their global L2 norm does not exceed this.
    pub max_grad_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 3e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            max_grad_norm: Some(1.0),
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<(), String> {
        let ok = self.learning_rate > 0.0
            && self.learning_rate.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0
            && self.max_grad_norm.is_none_or(|n| n > 0.0);
        if ok {
            Ok(())
        } else {
            Err(format!("invalid optimizer settings {self:?}"))
        }
    }
}

struct Moments {
    m: ArrayD<f64>,
    v: ArrayD<f64>,
}

/// Adam with bias correction; moment state is kept per parameter.
pub struct Adam {
    config: OptimizerConfig,
    step: i32,
    state: BTreeMap<ParamKey, Moments>,
}

impl Adam {
    pub fn new(config: OptimizerConfig) -> Self {
        Adam {
            config,
            step: 0,
            state: BTreeMap::new(),
        }
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Advances the shared step counter; call once per optimisation step
    /// before the per-parameter [`Adam::update`] calls.
    pub fn begin_step(&mut self) {
        self.step += 1;
    }

    pub fn update(&mut self, key: &ParamKey, param: &mut ArrayD<f64>, grad: &ArrayD<f64>) {
        let c = &self.config;
        let moments = self.state.entry(key.clone()).or_insert_with(|| Moments {
            m: ArrayD::zeros(param.raw_dim()),
            v: ArrayD::zeros(param.raw_dim()),
        });
        let bc1 = 1.0 - c.beta1.powi(self.step);
        let bc2 = 1.0 - c.beta2.powi(self.step);
        Zip::from(param)
            .and(&mut moments.m)
            .and(&mut moments.v)
            .and(grad)
            .for_each(|p, m, v, &g| {
                *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                *p -= c.learning_rate * (*m / bc1) / ((*v / bc2).sqrt() + c.epsilon);
            });
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamGroup;
    use ndarray::IxDyn;

    #[test]
    fn first_step_moves_by_learning_rate_against_the_gradient() {
        let mut adam = Adam::new(OptimizerConfig::default());
        let key = ParamKey::new(ParamGroup::MaskDecoder, "w");
        let mut p = ArrayD::from_shape_vec(IxDyn(&[2]), vec![1.0, 1.0]).unwrap();
        let g = ArrayD::from_shape_vec(IxDyn(&[2]), vec![3.0, -0.5]).unwrap();
        adam.begin_step();
        adam.update(&key, &mut p, &g);
        assert!((p[0] - 0.997).abs() < 1e-8);
        assert!((p[1] - 1.003).abs() < 1e-8);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut adam = Adam::new(OptimizerConfig {
            learning_rate: 0.1,
            ..OptimizerConfig::default()
        });
        let key = ParamKey::new(ParamGroup::MaskDecoder, "x");
        let mut x = ArrayD::from_elem(IxDyn(&[1]), 5.0);
        for _ in 0..500 {
            let g = x.mapv(|v| 2.0 * (v - 1.5));
            adam.begin_step();
            adam.update(&key, &mut x, &g);
        }
        assert!((x[0] - 1.5).abs() < 1e-2, "{}", x[0]);
    }
}
