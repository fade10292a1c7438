//! Central finite-difference checks of tape gradients.

use super::{EngineError, Tape, Tensor, Var};

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`; zero when both
/// vectors vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Numerical gradient of a scalar function of `inputs` by central
/// differences with step `h`.
pub fn numerical_gradient<F>(inputs: &[Tensor], h: f64, f: &F) -> Result<Vec<Tensor>, EngineError>
where
    F: Fn(&[Tensor]) -> Result<f64, EngineError>,
{
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for i in 0..inputs.len() {
        let mut g = Tensor::zeros(inputs[i].shape().to_vec());
        for j in 0..inputs[i].len() {
            let orig = inputs[i].data()[j];
            work[i].data_mut()[j] = orig + h;
            let plus = f(&work)?;
            work[i].data_mut()[j] = orig - h;
            let minus = f(&work)?;
            work[i].data_mut()[j] = orig;
            g.data_mut()[j] = (plus - minus) / (2.0 * h);
        }
        out.push(g);
    }
    Ok(out)
}

/// Tape gradients of a scalar function with respect to every input.
pub fn analytic_gradient<F>(inputs: &[Tensor], build: &F) -> Result<Vec<Tensor>, EngineError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, EngineError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(v, t)| {
            grads
                .get(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect())
}

/// Largest per-input relative error between tape and finite-difference
/// gradients of `build`.
pub fn check<F>(inputs: &[Tensor], h: f64, build: F) -> Result<f64, EngineError>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var, EngineError>,
{
    let analytic = analytic_gradient(inputs, &build)?;
    let eval = |xs: &[Tensor]| -> Result<f64, EngineError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|t| tape.constant(t.clone())).collect();
        let out = build(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let numeric = numerical_gradient(inputs, h, &eval)?;
    Ok(analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| relative_error(a.data(), n.data()))
        .fold(0.0, f64::max))
}
