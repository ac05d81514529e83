use super::{Tape, Tensor, Var};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Per parameter block: max |analytic − numeric| over the block divided by
    /// the block's largest gradient magnitude (floored at 1e-12).
    pub block_errors: Vec<f64>,
    pub max_relative_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error <= self.tolerance
    }
}

/// Compares tape gradients of `f` with central finite differences of step `h`.
/// `f` builds a scalar from parameter vars registered in the order of `params`.
pub fn grad_check<F>(f: F, params: &[Tensor], h: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).item())
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut work = params.to_vec();
    let mut block_errors = Vec::with_capacity(params.len());
    for (b, &v) in vars.iter().enumerate() {
        let analytic = grads.wrt(v);
        let mut max_diff = 0.0f64;
        let mut scale = 1e-12f64;
        for k in 0..params[b].len() {
            let orig = params[b].data()[k];
            work[b].data_mut()[k] = orig + h;
            let plus = eval(&work)?;
            work[b].data_mut()[k] = orig - h;
            let minus = eval(&work)?;
            work[b].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic.data()[k];
            max_diff = max_diff.max((a - numeric).abs());
            scale = scale.max(a.abs()).max(numeric.abs());
        }
        block_errors.push(max_diff / scale);
    }
    let max_relative_error = block_errors.iter().cloned().fold(0.0, f64::max);
    Ok(GradCheckReport {
        block_errors,
        max_relative_error,
        tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn linear_map_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random(&mut rng, 3, 4);
        let w = random(&mut rng, 4, 2);
        let rep = grad_check(
            |t, p| {
                let m = t.matmul(p[0], p[1])?;
                t.sum(m)
            },
            &[x, w],
            1e-6,
            1e-9,
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn mean_leaky_relu_of_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random(&mut rng, 5, 3);
        let w = random(&mut rng, 3, 4);
        let rep = grad_check(
            |t, p| {
                let m = t.matmul(p[0], p[1])?;
                let a = t.leaky_relu(m, 0.01)?;
                t.mean(a)
            },
            &[x, w],
            1e-6,
            1e-5,
        )
        .unwrap();
        assert!(rep.passed(), "{rep:?}");
    }
}
