//! Shared helpers for the integration and acceptance suites: central
//! finite differences as the independent gradient oracle.

#![allow(dead_code)]

use convtran::autodiff::{Graph, Var};
use convtran::model::{ConvTranNet, Phase};
use convtran::tensor::{uniform, Tensor};

/// Relative error with a unit floor, as |a - b| / max(1, |a|, |b|).
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / 1f64.max(a.abs()).max(b.abs())
}

/// Deterministic random tensor for test fixtures.
pub fn rand_t(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor {
    uniform(shape, lo, hi, &mut convtran::rng_from_seed(seed))
}

/// Check the analytic gradients of a scalar-valued graph against
/// central finite differences, for every element of every input.
///
/// `build` must construct the same computation every call; it receives
/// one graph variable per input tensor and returns the scalar loss.
pub fn fd_gradcheck<F>(name: &str, build: F, inputs: &[Tensor], tol: f64)
where
    F: Fn(&mut Graph, &[Var]) -> Var,
{
    // Analytic pass.
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let loss = build(&mut g, &vars);
    assert!(
        g.value(loss).is_scalar(),
        "{name}: gradcheck losses must be scalar"
    );
    let grads = g.backward(loss).unwrap();
    let analytic: Vec<Tensor> = vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .wrt(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape()))
        })
        .collect();

    let eval = |points: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vars: Vec<Var> = points.iter().map(|t| g.constant(t.clone())).collect();
        let loss = build(&mut g, &vars);
        g.value(loss).item().unwrap()
    };

    for (i, t) in inputs.iter().enumerate() {
        for j in 0..t.numel() {
            let h = 1e-6 * t.data()[j].abs().max(1.0);
            let mut plus = inputs.to_vec();
            plus[i].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[i].data_mut()[j] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic[i].data()[j];
            assert!(
                rel_err(a, numeric) < tol,
                "{name}: input {i} cell {j}: analytic {a} vs finite-difference {numeric}"
            );
        }
    }
}

/// Project a tensor to a scalar with fixed random weights so every
/// output cell receives a distinct gradient.
pub fn weighted_sum(g: &mut Graph, out: Var, seed: u64) -> Var {
    let shape = g.shape(out).to_vec();
    let w = g.constant(rand_t(&shape, -1.0, 1.0, seed));
    let prod = g.mul(out, w).unwrap();
    g.sum_all(prod)
}

/// Check every trainable tensor of a net against central finite
/// differences of the eval-mode cross-entropy loss.
pub fn fd_param_gradcheck(net: &ConvTranNet, x: &Tensor, label: usize, tol: f64) {
    let grads = {
        let mut phase = Phase::Eval;
        net.loss_and_gradients(x, label, &mut phase).unwrap().1
    };
    let mut probe = net.clone();
    for id in net.params.ids().collect::<Vec<_>>() {
        let analytic = grads
            .by_param(id)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(net.params.get(id).shape()));
        for j in 0..net.params.get(id).numel() {
            let orig = probe.params.get(id).data()[j];
            let h = 1e-5 * orig.abs().max(1.0);
            probe.params.get_mut(id).data_mut()[j] = orig + h;
            let lp = probe.loss(x, label).unwrap();
            probe.params.get_mut(id).data_mut()[j] = orig - h;
            let lm = probe.loss(x, label).unwrap();
            probe.params.get_mut(id).data_mut()[j] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            let a = analytic.data()[j];
            assert!(
                rel_err(a, numeric) < tol,
                "param '{}' cell {j}: analytic {a} vs finite-difference {numeric}",
                net.params.name(id)
            );
        }
    }
}

/// Path to the bundled UEA data directory, overridable via UEA_DATA_DIR.
pub fn uea_dir() -> std::path::PathBuf {
    if let Ok(dir) = std::env::var("UEA_DATA_DIR") {
        return std::path::PathBuf::from(dir);
    }
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../data/UEA")
        .to_path_buf()
}

/// Train-file path for a named UEA dataset, if present.
pub fn uea_train_file(name: &str) -> Option<std::path::PathBuf> {
    let p = uea_dir().join(name).join(format!("{name}_TRAIN.ts"));
    p.exists().then_some(p)
}
