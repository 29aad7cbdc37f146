use super::{Result, TrainConfig, TrainError};
use crate::model::EncoderWeights;

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &EncoderWeights) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .named()
            .iter()
            .map(|(_, t)| vec![0.0; t.len()])
            .collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// State for a flat list of buffers with the given lengths.
    pub fn for_shapes(lens: &[usize]) -> Self {
        let zeros: Vec<Vec<f64>> = lens.iter().map(|&n| vec![0.0; n]).collect();
        AdamState {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    /// One bias-corrected update over parallel buffers of parameters and gradients.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]], config: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (config.adam_beta1, config.adam_beta2);
        let bc1 = 1.0 - b1.powi(self.t as i32);
        let bc2 = 1.0 - b2.powi(self.t as i32);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= config.learning_rate * m_hat / (v_hat.sqrt() + config.adam_epsilon);
            }
        }
    }
}

/// Applies one Adam step to every parameter tensor. Fails without touching
/// the parameters if any gradient entry is non-finite.
pub fn adam_step(
    params: &mut EncoderWeights,
    grads: &EncoderWeights,
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    let named_grads = grads.named();
    if let Some((name, _)) = named_grads
        .iter()
        .find(|(_, t)| t.data.iter().any(|x| !x.is_finite()))
    {
        return Err(TrainError::NonFiniteGradient(name.clone()));
    }
    let mut p: Vec<&mut [f64]> = params
        .named_mut()
        .into_iter()
        .map(|(_, t)| t.data.as_mut_slice())
        .collect();
    let g: Vec<&[f64]> = named_grads.iter().map(|(_, t)| t.data.as_slice()).collect();
    state.update(&mut p, &g, config);
    Ok(())
}
