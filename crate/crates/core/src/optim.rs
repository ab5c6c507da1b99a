//! Full-batch gradient descent with halve-on-increase step control. One
//! gradient per epoch; a step is accepted only if it strictly lowers the
//! full-batch loss, otherwise the learning rate halves and the same step
//! retries. Equal loss rejects the step, or an oscillation with period two
//! could hold the loss constant forever. The recorded trace is therefore
//! non-increasing by construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 400,
            learning_rate: 0.5,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config(format!(
                "learning_rate must be finite and positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

const MIN_LEARNING_RATE: f64 = 1e-12;

/// Minimize `loss` over `params` in place. Returns the per-epoch loss trace
/// (one entry per epoch, empty when epochs is zero).
pub fn descend<L, G>(params: &mut [f64], opts: &TrainOptions, loss: L, grad: G) -> Result<Vec<f64>>
where
    L: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    opts.validate()?;
    let mut trace = Vec::with_capacity(opts.epochs);
    if opts.epochs == 0 {
        return Ok(trace);
    }

    let mut current = loss(params);
    if !current.is_finite() {
        return Err(Error::TrainingDiverged(format!(
            "initial loss is {current}"
        )));
    }

    let mut lr = opts.learning_rate;
    let mut candidate = vec![0.0; params.len()];
    for _ in 0..opts.epochs {
        let g = grad(params);
        debug_assert_eq!(g.len(), params.len());
        loop {
            for ((c, p), gi) in candidate.iter_mut().zip(params.iter()).zip(&g) {
                *c = p - lr * gi;
            }
            let next = loss(&candidate);
            if next.is_finite() && next < current {
                params.copy_from_slice(&candidate);
                current = next;
                break;
            }
            lr *= 0.5;
            if lr < MIN_LEARNING_RATE {
                // No improving step exists at any usable rate; hold position.
                break;
            }
        }
        if !current.is_finite() {
            return Err(Error::TrainingDiverged(format!("loss became {current}")));
        }
        trace.push(current);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quadratic_loss(w: &[f64]) -> f64 {
        w.iter().map(|x| (x - 3.0) * (x - 3.0)).sum()
    }

    fn quadratic_grad(w: &[f64]) -> Vec<f64> {
        w.iter().map(|x| 2.0 * (x - 3.0)).collect()
    }

    #[test]
    fn converges_on_quadratic() {
        let mut w = vec![0.0, 10.0];
        let opts = TrainOptions {
            epochs: 200,
            learning_rate: 0.4,
            seed: 0,
        };
        let trace = descend(&mut w, &opts, quadratic_loss, quadratic_grad).unwrap();
        assert_eq!(trace.len(), 200);
        assert!(quadratic_loss(&w) < 1e-12);
    }

    #[test]
    fn trace_is_non_increasing_even_with_oversized_rate() {
        let mut w = vec![100.0];
        let opts = TrainOptions {
            epochs: 60,
            learning_rate: 64.0, // would oscillate without halving
            seed: 0,
        };
        let trace = descend(&mut w, &opts, quadratic_loss, quadratic_grad).unwrap();
        for pair in trace.windows(2) {
            assert!(pair[1] <= pair[0], "trace increased: {pair:?}");
        }
        assert!(quadratic_loss(&w) < 1e-6);
    }

    #[test]
    fn zero_epochs_leaves_params_untouched() {
        let mut w = vec![1.0, 2.0];
        let opts = TrainOptions {
            epochs: 0,
            ..TrainOptions::default()
        };
        let trace = descend(&mut w, &opts, quadratic_loss, quadratic_grad).unwrap();
        assert!(trace.is_empty());
        assert_eq!(w, vec![1.0, 2.0]);
    }

    #[test]
    fn invalid_learning_rate_is_config_error() {
        let mut w = vec![0.0];
        let opts = TrainOptions {
            epochs: 1,
            learning_rate: 0.0,
            seed: 0,
        };
        let err = descend(&mut w, &opts, quadratic_loss, quadratic_grad).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }
}
