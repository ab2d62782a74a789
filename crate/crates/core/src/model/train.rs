use super::{DifferentiableModel, ModelSpec, Network, Weights};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Full-batch gradient descent on the mean cross-entropy, starting from the
/// seeded `N(0, 1/fan_in)` initialization.
pub fn train(
    spec: &ModelSpec,
    data: &[(Tensor, usize)],
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<Weights> {
    train_with_history(spec, data, lr, epochs, seed).map(|(w, _)| w)
}

/// Like [`train`], also returning the mean training loss measured before each
/// update and once more after the last one (`epochs + 1` entries).
pub fn train_with_history(
    spec: &ModelSpec,
    data: &[(Tensor, usize)],
    lr: f64,
    epochs: usize,
    seed: u64,
) -> Result<(Weights, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::invalid("cannot train on an empty dataset"));
    }
    if !(lr > 0.0) {
        return Err(Error::invalid(format!("learning rate must be > 0, got {lr}")));
    }
    let mut net = Network::init(spec.clone(), seed)?;
    for (x, y) in data {
        if x.len() != spec.input_dim {
            return Err(Error::invalid(format!(
                "sample has {} values, model expects {}",
                x.len(),
                spec.input_dim
            )));
        }
        if *y >= spec.num_classes {
            return Err(Error::LabelOutOfRange {
                label: *y,
                num_classes: spec.num_classes,
            });
        }
    }

    let n = data.len() as f64;
    let mut history = Vec::with_capacity(epochs + 1);
    for _ in 0..epochs {
        let mut acc = net.zero_accumulator();
        let mut loss = 0.0;
        for (x, y) in data {
            loss += net.accumulate_weight_gradient(x.data(), *y, &mut acc);
        }
        history.push(loss / n);
        let step = lr / n;
        for (layer, (gw, gb)) in net.weights_mut().layers.iter_mut().zip(acc) {
            layer.weight = descend(&layer.weight, &gw, step)?;
            layer.bias = descend(&layer.bias, &gb, step)?;
        }
    }
    let mut final_loss = 0.0;
    for (x, y) in data {
        final_loss += net.loss(x, *y)?;
    }
    history.push(final_loss / n);
    Ok((net.into_weights(), history))
}

fn descend(param: &Tensor, grad: &[f64], step: f64) -> Result<Tensor> {
    let data = param
        .data()
        .iter()
        .zip(grad)
        .map(|(&p, &g)| (p as f64 - step * g) as f32)
        .collect();
    Tensor::new(param.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Rng;

    fn toy_data() -> Vec<(Tensor, usize)> {
        let mut rng = Rng::new(3);
        (0..40)
            .map(|i| {
                let y = i % 2;
                let c = if y == 0 { -1.0 } else { 1.0 };
                let x = vec![c + 0.3 * rng.next_gaussian() as f32, 0.3 * rng.next_gaussian() as f32];
                (Tensor::from_slice(&x).unwrap(), y)
            })
            .collect()
    }

    #[test]
    fn zero_epochs_returns_init() {
        let spec = ModelSpec::mlp(2, &[4], 2);
        let w = train(&spec, &toy_data(), 0.1, 0, 11).unwrap();
        assert_eq!(w, Network::init(spec, 11).unwrap().into_weights());
    }

    #[test]
    fn deterministic_and_learns() {
        let spec = ModelSpec::mlp(2, &[8], 2);
        let data = toy_data();
        let (a, hist) = train_with_history(&spec, &data, 0.1, 200, 5).unwrap();
        let b = train(&spec, &data, 0.1, 200, 5).unwrap();
        assert_eq!(a, b);
        assert!(hist.last().unwrap() < &hist[0]);
    }

    #[test]
    fn rejects_empty_and_bad_lr() {
        let spec = ModelSpec::linear(2, 2);
        assert!(train(&spec, &[], 0.1, 1, 0).is_err());
        assert!(train(&spec, &toy_data(), 0.0, 1, 0).is_err());
    }
}
