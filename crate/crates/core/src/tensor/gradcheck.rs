//! Central-difference gradient oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ops::{self, In, OpKind};
use super::{Graph, Tensor, TensorError};

/// Smallest and largest admissible finite-difference step.
pub const STEP_RANGE: (f64, f64) = (1e-7, 1e-4);

/// Relative error used throughout: `|a - n| / max(1, |a|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Compares the analytic gradient of `kind` with central differences.
///
/// The scalar probed is `sum(w ⊙ kind(inputs))` with fixed pseudo-random
/// weights `w`, so every output entry contributes. Returns the maximum
/// relative error over all input entries. Callers should sample inputs away
/// from kinks (relu at 0) and exact ties (max/top-k).
pub fn finite_diff_check(kind: &OpKind, inputs: &[Tensor<f64>], h: f64) -> Result<f64, TensorError> {
    let h = h.clamp(STEP_RANGE.0, STEP_RANGE.1);
    let probe = |xs: &[Tensor<f64>]| -> Result<Vec<f64>, TensorError> {
        let views: Vec<In<'_, f64>> = xs
            .iter()
            .map(|t| In {
                shape: t.shape(),
                data: t.data(),
            })
            .collect();
        Ok(ops::forward(kind, &views)?.data)
    };

    let y = probe(inputs)?;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e_ed0f_d1ff);
    let weights: Vec<f64> = (0..y.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let project = |y: &[f64]| y.iter().zip(&weights).map(|(a, b)| a * b).sum::<f64>();

    let mut g = Graph::<f64>::new();
    let leaves: Vec<_> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let out = g.apply(kind.clone(), &leaves)?;
    let w = g.constant(Tensor::new(g.shape(out).to_vec(), weights.clone())?);
    let weighted = g.mul(out, w)?;
    let loss = g.sum_all(weighted)?;
    let grads = g.backward(loss)?;

    let mut worst = 0.0f64;
    let mut probe_inputs = inputs.to_vec();
    for (j, leaf) in leaves.iter().enumerate() {
        let zeros = vec![0.0; inputs[j].numel()];
        let analytic = grads.get(*leaf).unwrap_or(&zeros).to_vec();
        for i in 0..inputs[j].numel() {
            let orig = inputs[j].data()[i];
            probe_inputs[j].data_mut()[i] = orig + h;
            let plus = project(&probe(&probe_inputs)?);
            probe_inputs[j].data_mut()[i] = orig - h;
            let minus = project(&probe(&probe_inputs)?);
            probe_inputs[j].data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[i], numeric));
        }
    }
    Ok(worst)
}

/// Central-difference check of a scalar function of several flat parameter
/// buffers against supplied analytic gradients.
///
/// `eval` receives the (perturbed) buffers and returns the scalar value.
pub fn check_buffers<F>(params: &mut [Vec<f64>], analytic: &[Vec<f64>], h: f64, mut eval: F) -> Result<f64, TensorError>
where
    F: FnMut(&[Vec<f64>]) -> Result<f64, TensorError>,
{
    let h = h.clamp(STEP_RANGE.0, STEP_RANGE.1);
    let mut worst = 0.0f64;
    for j in 0..params.len() {
        for i in 0..params[j].len() {
            let orig = params[j][i];
            params[j][i] = orig + h;
            let plus = eval(params)?;
            params[j][i] = orig - h;
            let minus = eval(params)?;
            params[j][i] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            worst = worst.max(relative_error(analytic[j][i], numeric));
        }
    }
    Ok(worst)
}

/// Names of every operator kind, in declaration order.
pub const KIND_NAMES: [&str; 18] = [
    "matmul",
    "add",
    "mul",
    "scale",
    "concat",
    "slice",
    "gather",
    "transpose",
    "reshape",
    "relu",
    "gelu",
    "softmax",
    "layernorm",
    "max_reduce",
    "topk_reduce",
    "mean_reduce",
    "cross_entropy_with_logits",
    "squared_distance_matrix",
];

fn uniform(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = super::numel(&shape);
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.5..1.5)).collect()).expect("shape")
}

/// Values bounded away from zero, so relu never sits on its kink.
fn off_kink(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor<f64> {
    let n = super::numel(&shape);
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.5);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::new(shape, data).expect("shape")
}

/// Pairwise-distinct values with gaps of at least 0.05, so selections have no ties.
fn distinct(rng: &mut impl Rng, shape: Vec<usize>) -> Tensor<f64> {
    use rand::seq::SliceRandom;
    let n = super::numel(&shape);
    let mut data: Vec<f64> = (0..n).map(|i| i as f64 * 0.1 - n as f64 * 0.05 + rng.random_range(0.0..0.05)).collect();
    data.shuffle(rng);
    Tensor::new(shape, data).expect("shape")
}

/// A random non-degenerate instance of the named operator kind.
pub fn random_case(name: &str, rng: &mut impl Rng) -> (OpKind, Vec<Tensor<f64>>) {
    let mut dim = |lo: usize, hi: usize| rng.random_range(lo..=hi);
    let (a, b, c) = (dim(1, 5), dim(1, 5), dim(1, 5));
    match name {
        "matmul" => (OpKind::MatMul, vec![uniform(rng, vec![a, b]), uniform(rng, vec![b, c])]),
        "add" => (OpKind::Add, vec![uniform(rng, vec![a, b]), uniform(rng, vec![b])]),
        "mul" => (OpKind::Mul, vec![uniform(rng, vec![a, b]), uniform(rng, vec![a, b])]),
        "scale" => (OpKind::Scale(rng.random_range(-2.0..2.0)), vec![uniform(rng, vec![a, b])]),
        "concat" => {
            let axis = rng.random_range(0..2);
            let mut s1 = vec![a, b];
            s1[axis] = c;
            (OpKind::Concat { axis }, vec![uniform(rng, vec![a, b]), uniform(rng, s1)])
        }
        "slice" => {
            let len = a + 1;
            let start = rng.random_range(0..len);
            let end = rng.random_range(start + 1..=len);
            (OpKind::Slice { axis: 1, start, end }, vec![uniform(rng, vec![b, len, c])])
        }
        "gather" => {
            let n = rng.random_range(1..=6);
            let rows = (0..n).map(|_| rng.random_range(0..a)).collect();
            (OpKind::Gather { rows }, vec![uniform(rng, vec![a, b])])
        }
        "transpose" => (OpKind::Transpose, vec![uniform(rng, vec![a, b])]),
        "reshape" => (OpKind::Reshape { shape: vec![b, a * c] }, vec![uniform(rng, vec![a, b, c])]),
        "relu" => (OpKind::Relu, vec![off_kink(rng, vec![a, b])]),
        "gelu" => (OpKind::Gelu, vec![uniform(rng, vec![a, b])]),
        "softmax" => (OpKind::Softmax { axis: rng.random_range(0..2) }, vec![uniform(rng, vec![a + 1, b + 1])]),
        "layernorm" => (
            OpKind::LayerNorm {
                axis: rng.random_range(0..2),
                eps: super::LAYERNORM_EPS,
            },
            vec![uniform(rng, vec![a + 1, b + 1])],
        ),
        "max_reduce" => (OpKind::MaxReduce { axis: rng.random_range(0..2) }, vec![distinct(rng, vec![a, b])]),
        "topk_reduce" => {
            let axis = rng.random_range(0..2);
            let shape = vec![a + 1, b + 1];
            let k = rng.random_range(1..=shape[axis]);
            (OpKind::TopkReduce { axis, k }, vec![distinct(rng, shape)])
        }
        "mean_reduce" => (OpKind::MeanReduce { axis: rng.random_range(0..3) }, vec![uniform(rng, vec![a, b, c])]),
        "cross_entropy_with_logits" => {
            let classes = b + 1;
            let labels = (0..a).map(|_| rng.random_range(0..classes)).collect();
            (OpKind::CrossEntropyWithLogits { labels }, vec![uniform(rng, vec![a, classes])])
        }
        "squared_distance_matrix" => (
            OpKind::SquaredDistanceMatrix,
            vec![uniform(rng, vec![a, c]), uniform(rng, vec![b, c])],
        ),
        other => panic!("unknown op kind {other}"),
    }
}
