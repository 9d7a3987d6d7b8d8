//! Backpropagated loss gradients against central differences of the loss.

use fairaudit::benn::{gradients, loss, GeneratorNet, LossConfig};
use fairaudit::model::ConstantPredictor;
use ndarray::Array2;

pub const STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;

fn reg_loss(net: &GeneratorNet, batch: &Array2<f64>, cfg: &LossConfig) -> f64 {
    let model = ConstantPredictor::new(net.n_features, 0.5);
    loss(net, batch.view(), &model, cfg).unwrap().total
}

fn param_mut(net: &mut GeneratorNet, layer: usize, p: usize) -> &mut f64 {
    let l = &mut net.layers[layer];
    let n_w = l.weights.len();
    if p < n_w {
        let cols = l.weights.ncols();
        &mut l.weights[(p / cols, p % cols)]
    } else {
        &mut l.bias[p - n_w]
    }
}

/// Largest relative error over all parameters.
pub fn max_relative_error(net: &GeneratorNet, batch: &Array2<f64>, cfg: &LossConfig) -> f64 {
    let model = ConstantPredictor::new(net.n_features, 0.5);
    let (_, grads) = gradients(net, batch.view(), &model, cfg).unwrap();
    let mut analytic_net = net.clone();
    analytic_net.layers = grads.layers;
    let mut worst = 0.0f64;
    for li in 0..net.layers.len() {
        let n_params = net.layers[li].weights.len() + net.layers[li].bias.len();
        for p in 0..n_params {
            let analytic = *param_mut(&mut analytic_net, li, p);
            let mut plus = net.clone();
            *param_mut(&mut plus, li, p) += STEP;
            let mut minus = net.clone();
            *param_mut(&mut minus, li, p) -= STEP;
            let numeric = (reg_loss(&plus, batch, cfg) - reg_loss(&minus, batch, cfg)) / (2.0 * STEP);
            let scale = analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic - numeric).abs() / scale);
        }
    }
    worst
}
