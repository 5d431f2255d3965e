pub const DEFAULT_MOMENTUM: f64 = 0.1;
pub const DEFAULT_EPSILON: f64 = 1e-5;

/// Per-feature batch normalization parameters and running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState {
    pub scale: Vec<f64>,
    pub shift: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub epsilon: f64,
}

impl BatchNormState {
    pub fn new(features: usize) -> Self {
        BatchNormState {
            scale: vec![1.0; features],
            shift: vec![0.0; features],
            running_mean: vec![0.0; features],
            running_var: vec![1.0; features],
            momentum: DEFAULT_MOMENTUM,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn features(&self) -> usize {
        self.scale.len()
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.scale,
            &self.shift,
            &self.running_mean,
            &self.running_var,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    /// Normalizes `x` in place with the running statistics.
    pub fn apply_running(&self, x: &mut [f64]) {
        for (f, v) in x.iter_mut().enumerate() {
            let inv_std = 1.0 / (self.running_var[f] + self.epsilon).sqrt();
            let normalized = (*v - self.running_mean[f]) * inv_std;
            *v = self.scale[f] * normalized + self.shift[f];
        }
    }

    /// Folds one batch's mean and unbiased variance into the running statistics.
    pub fn update_running(&mut self, mean: &[f64], var_unbiased: &[f64]) {
        let m = self.momentum;
        for f in 0..self.features() {
            self.running_mean[f] = (1.0 - m) * self.running_mean[f] + m * mean[f];
            self.running_var[f] = (1.0 - m) * self.running_var[f] + m * var_unbiased[f];
        }
    }
}
