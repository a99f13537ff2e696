use crate::error::{Error, Result};

use super::mlp::Mlp;

/// Adam with bias-corrected moments and a fixed learning rate.
///
/// Moment buffers are allocated on the first step and their shapes are then
/// frozen; later steps with differently shaped parameters fail.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Vec<f64>] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Vec<f64>] {
        &self.second_moment
    }

    /// Applies one update to every `(parameter, gradient)` pair in place.
    pub fn step(&mut self, tensors: Vec<(&mut [f64], &[f64])>) -> Result<()> {
        if self.step_count == 0 && self.first_moment.is_empty() {
            self.first_moment = tensors.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if tensors.len() != self.first_moment.len() {
            return Err(Error::dim(format!(
                "adam tracks {} tensors, got {}",
                self.first_moment.len(),
                tensors.len()
            )));
        }
        for (i, (p, g)) in tensors.iter().enumerate() {
            if p.len() != g.len() || p.len() != self.first_moment[i].len() {
                return Err(Error::dim(format!(
                    "adam tensor {i}: parameter {} / gradient {} / moment {}",
                    p.len(),
                    g.len(),
                    self.first_moment[i].len()
                )));
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::Numeric(format!("adam tensor {i} has a non-finite gradient")));
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in tensors.into_iter().enumerate() {
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }

    pub fn step_mlp(&mut self, net: &mut Mlp) -> Result<()> {
        self.step(net.params_and_grads())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(0.01);
        let mut p = [0.0];
        adam.step(vec![(&mut p, &[0.5])]).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-9);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(0.1);
        let mut p = [1.5, -2.0];
        adam.step(vec![(&mut p, &[0.0, 0.0])]).unwrap();
        adam.step(vec![(&mut p, &[0.0, 0.0])]).unwrap();
        assert_eq!(p, [1.5, -2.0]);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn descends_a_parabola() {
        // Oracle run beforehand: plain Adam on w² from 1 with lr 0.05 reaches
        // w ≈ -0.0042 after 100 steps.
        let mut adam = AdamState::new(0.05);
        let mut w = [1.0];
        for _ in 0..100 {
            let g = [2.0 * w[0]];
            adam.step(vec![(&mut w, &g)]).unwrap();
        }
        assert!(w[0].abs() < 0.1, "w = {}", w[0]);
    }

    #[test]
    fn shape_change_is_rejected() {
        let mut adam = AdamState::new(0.1);
        let mut a = [0.0, 0.0];
        adam.step(vec![(&mut a, &[1.0, 1.0])]).unwrap();
        let mut b = [0.0];
        assert!(matches!(
            adam.step(vec![(&mut b, &[1.0])]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            adam.step(vec![(&mut a, &[1.0])]),
            Err(Error::Dimension(_))
        ));
    }
}
