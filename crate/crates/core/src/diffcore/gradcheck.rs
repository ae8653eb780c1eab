use crate::scalar::Scalar;

use super::{ParamStore, Session, Tape, Tensor, TensorError, Var};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric|` divided by the largest gradient magnitude,
    /// computed per input and maximized over inputs.
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

/// Central finite differences of a scalar function with respect to `inputs[which]`.
pub fn numeric_gradient<T, F>(f: &F, inputs: &[Tensor<T>], which: usize, h: f64) -> Result<Tensor<T>, TensorError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, TensorError>,
{
    let eval = |xs: &[Tensor<T>]| -> Result<T, TensorError> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut work = inputs.to_vec();
    let mut grad = Tensor::zeros(inputs[which].shape().to_vec());
    for k in 0..inputs[which].len() {
        let orig = work[which].data()[k];
        work[which].data_mut()[k] = orig + T::of(h);
        let plus = eval(&work)?;
        work[which].data_mut()[k] = orig - T::of(h);
        let minus = eval(&work)?;
        work[which].data_mut()[k] = orig;
        grad.data_mut()[k] = (plus - minus) / T::of(2.0 * h);
    }
    Ok(grad)
}

/// Compares reverse-mode gradients of `f` against central finite differences
/// for every input tensor.
pub fn check_gradients<T, F>(f: F, inputs: &[Tensor<T>], h: f64) -> Result<GradCheckReport, TensorError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &[Var]) -> Result<Var, TensorError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.param(x.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;
    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0 };
    for (i, (&v, x)) in vars.iter().zip(inputs).enumerate() {
        let analytic = grads.get_or_zeros(v, x.shape());
        let numeric = numeric_gradient(&f, inputs, i, h)?;
        let abs = analytic.max_abs_diff(&numeric).as_f64();
        let scale = analytic
            .data()
            .iter()
            .chain(numeric.data())
            .map(|g| g.as_f64().abs())
            .fold(1e-12, f64::max);
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(abs / scale);
    }
    Ok(report)
}

/// Like [`check_gradients`] but differentiates a loss built from a
/// [`Session`] with respect to every parameter of `store`.
pub fn check_param_gradients<T, F>(store: &ParamStore<T>, f: F, h: f64) -> Result<GradCheckReport, TensorError>
where
    T: Scalar,
    F: Fn(&mut Session<T>) -> Result<Var, TensorError>,
{
    let mut s = Session::new(store);
    let out = f(&mut s)?;
    let analytic = s.param_grads(store, out)?;
    let eval = |st: &ParamStore<T>| -> Result<T, TensorError> {
        let mut s = Session::frozen(st);
        let out = f(&mut s)?;
        Ok(s.value(out).item())
    };
    let mut work = store.clone();
    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0 };
    for (p, a) in analytic.iter().enumerate() {
        let mut abs = 0.0f64;
        let mut scale = 1e-12f64;
        for k in 0..a.len() {
            let orig = work.values()[p].data()[k];
            work.values_mut()[p].data_mut()[k] = orig + T::of(h);
            let plus = eval(&work)?;
            work.values_mut()[p].data_mut()[k] = orig - T::of(h);
            let minus = eval(&work)?;
            work.values_mut()[p].data_mut()[k] = orig;
            let num = ((plus - minus) / T::of(2.0 * h)).as_f64();
            let an = a.data()[k].as_f64();
            abs = abs.max((an - num).abs());
            scale = scale.max(an.abs()).max(num.abs());
        }
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(abs / scale);
    }
    Ok(report)
}
