//! Classical fourth-order Runge–Kutta on flat state vectors.

/// Scratch buffers for [`Rk4::step`].
#[derive(Clone, Debug)]
pub struct Rk4 {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    pub fn new(dim: usize) -> Self {
        Self { k1: vec![0.0; dim], k2: vec![0.0; dim], k3: vec![0.0; dim], k4: vec![0.0; dim], tmp: vec![0.0; dim] }
    }

    /// Advances `y` from `t` to `t + h` (`h` may be negative). Returns the
    /// slope evaluated at the start point.
    pub fn step<F>(&mut self, t: f64, h: f64, y: &mut [f64], mut f: F) -> &[f64]
    where
        F: FnMut(f64, &[f64], &mut [f64]),
    {
        let n = y.len();
        f(t, y, &mut self.k1);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k1[i];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k2);
        for i in 0..n {
            self.tmp[i] = y[i] + 0.5 * h * self.k2[i];
        }
        f(t + 0.5 * h, &self.tmp, &mut self.k3);
        for i in 0..n {
            self.tmp[i] = y[i] + h * self.k3[i];
        }
        f(t + h, &self.tmp, &mut self.k4);
        for i in 0..n {
            y[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        &self.k1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_growth() {
        let mut rk = Rk4::new(1);
        let mut y = [1.0];
        let h = 0.01;
        for k in 0..100 {
            rk.step(k as f64 * h, h, &mut y, |_, y, dy| dy[0] = y[0]);
        }
        assert!((y[0] - 1f64.exp()).abs() < 1e-9);
    }

    #[test]
    fn backward_step_is_exact_for_cubics() {
        let mut rk = Rk4::new(1);
        let mut y = [0.0];
        rk.step(1.0, -0.5, &mut y, |t, _, dy| dy[0] = 3.0 * t * t);
        assert!((y[0] - (0.125 - 1.0)).abs() < 1e-15);
    }
}
