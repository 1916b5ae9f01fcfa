use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

const STEP: f64 = 1e-5;

/// Analytic gradients of the scalar `f` at `params`.
pub fn gradients<F>(params: &[Tensor], f: F) -> Result<(f64, Vec<Tensor>)>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    tape.backward(out)?;
    let value = tape.value(out).item();
    let grads = vars
        .iter()
        .zip(params)
        .map(|(v, p)| {
            tape.grad(*v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(p.rows(), p.cols()))
        })
        .collect();
    Ok((value, grads))
}

/// Max over all parameter entries of `|analytic − numeric| / max(1, |numeric|)`,
/// where `numeric` is a central difference with step `1e-5`.
pub fn grad_check<F>(params: &[Tensor], f: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let (_, analytic) = gradients(params, &f)?;
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        if tape.shape(out) != (1, 1) {
            return Err(Error::shape("grad_check", "function is not scalar"));
        }
        Ok(tape.value(out).item())
    };
    let mut work = params.to_vec();
    let mut worst = 0.0f64;
    for (pi, grad) in analytic.iter().enumerate() {
        for e in 0..work[pi].len() {
            let orig = work[pi].data()[e];
            work[pi].data_mut()[e] = orig + STEP;
            let up = eval(&work)?;
            work[pi].data_mut()[e] = orig - STEP;
            let down = eval(&work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = (grad.data()[e] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_exact() {
        let w = Tensor::from_vec(3, 1, vec![0.5, -1.0, 2.0]).unwrap();
        let x = Tensor::from_vec(2, 3, vec![1.0, 2.0, 3.0, -4.0, 0.25, 7.0]).unwrap();
        let err = grad_check(&[x, w.clone()], |t, p| {
            let y = t.matmul(p[0], p[1])?;
            let y = t.scale(y, 3.0)?;
            t.sum(y)
        })
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let x = Tensor::row(&[1.0, 2.0, 3.0]);
        let (value, grads) = gradients(std::slice::from_ref(&x), |t, _| Ok(t.constant(Tensor::scalar(4.0)))).unwrap();
        assert_eq!(value, 4.0);
        assert!(grads[0].data().iter().all(|g| *g == 0.0));
        let err = grad_check(&[x], |t, _| Ok(t.constant(Tensor::scalar(4.0)))).unwrap();
        assert_eq!(err, 0.0);
    }
}
