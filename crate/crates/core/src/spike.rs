//! Spike trains: the dataflow flowing between layers, one frame per time step.

/// A `[steps x width]` tensor of spike values, row-major by step.
///
/// Values are 0/1 for binary spikes; average-pooling and the smooth forward
/// gate produce fractional values in `[0, 1]`, which flow through unchanged.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    steps: usize,
    width: usize,
    data: Vec<f64>,
}

impl SpikeTrain {
    pub fn zeros(steps: usize, width: usize) -> Self {
        SpikeTrain {
            steps,
            width,
            data: vec![0.0; steps * width],
        }
    }

    pub fn from_rows(steps: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), steps * width, "spike train data length");
        SpikeTrain { steps, width, data }
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn step(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn step_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mean firing rate per position over the window: `(1/T) sum_t o^t`.
    pub fn rates(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.width];
        for t in 0..self.steps {
            for (acc, v) in r.iter_mut().zip(self.step(t)) {
                *acc += v;
            }
        }
        let inv = 1.0 / self.steps as f64;
        for v in &mut r {
            *v *= inv;
        }
        r
    }

    /// Total spike count per position.
    pub fn counts(&self) -> Vec<f64> {
        let mut r = vec![0.0; self.width];
        for t in 0..self.steps {
            for (acc, v) in r.iter_mut().zip(self.step(t)) {
                *acc += v;
            }
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rates_average_over_steps() {
        let mut s = SpikeTrain::zeros(4, 2);
        s.step_mut(0)[0] = 1.0;
        s.step_mut(2)[0] = 1.0;
        s.step_mut(3)[1] = 1.0;
        assert_eq!(s.rates(), vec![0.5, 0.25]);
        assert_eq!(s.counts(), vec![2.0, 1.0]);
    }
}
