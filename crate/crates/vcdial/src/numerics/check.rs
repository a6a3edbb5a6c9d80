use super::graph::{Graph, Var};
use super::tensor::Tensor;
use super::NumericsError;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Compare the tape's gradient of `f` at `x` against central differences.
///
/// `f` must be a deterministic scalar function built from graph ops. The
/// result is the max over coordinates of |analytic - numeric| /
/// max(|analytic|, |numeric|, 1e-8).
pub fn grad_check<F>(f: F, x: &Tensor, eps: f64) -> Result<f64, NumericsError>
where
    F: Fn(&Graph, Var) -> Result<Var, NumericsError>,
{
    let g = Graph::new();
    let xv = g.leaf_grad(x.clone());
    let loss = f(&g, xv)?;
    g.backward(loss)?;
    let analytic = g
        .grad(xv)
        .map(|t| t.data().to_vec())
        .unwrap_or_else(|| vec![0.0; x.numel()]);

    let eval = |data: &[f64]| -> Result<f64, NumericsError> {
        let g = Graph::new();
        let xv = g.leaf(Tensor::new(x.shape().to_vec(), data.to_vec())?);
        let loss = f(&g, xv)?;
        Ok(g.item(loss))
    };

    let mut max_rel = 0.0f64;
    let mut point = x.data().to_vec();
    for i in 0..point.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let fp = eval(&point)?;
        point[i] = orig - eps;
        let fm = eval(&point)?;
        point[i] = orig;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

/// Gradient-check a scalar function of every parameter in a store at once.
///
/// `f` rebuilds its loss from the (possibly perturbed) store each call;
/// the store's parameters are flattened in sorted-name order.
pub fn grad_check_store<F>(
    store: &super::store::ParameterStore,
    f: F,
    eps: f64,
) -> Result<f64, NumericsError>
where
    F: Fn(&Graph, &super::store::ParameterStore) -> Result<Var, NumericsError>,
{
    let mut work = store.clone();
    work.zero_grads();

    let g = Graph::new();
    let loss = f(&g, &work)?;
    g.backward(loss)?;
    g.grads_into(&mut work)?;
    let analytic = work.pack_grads();

    let mut point = work.pack_values();
    let mut max_rel = 0.0f64;
    for i in 0..point.len() {
        let orig = point[i];
        let mut eval = |v: f64| -> Result<f64, NumericsError> {
            point[i] = v;
            work.unpack_values(&point)?;
            let g = Graph::new();
            let loss = f(&g, &work)?;
            Ok(g.item(loss))
        };
        let fp = eval(orig + eps)?;
        let fm = eval(orig - eps)?;
        point[i] = orig;
        work.unpack_values(&point)?;
        let numeric = (fp - fm) / (2.0 * eps);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        max_rel = max_rel.max(rel);
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::rng_for;
    use rand::Rng;

    #[test]
    fn linear_function_is_exact() {
        // f = sum(3x): central differences are exact for linear maps
        let x = Tensor::vector(vec![0.4, -1.2, 2.5]);
        let err = grad_check(
            |g, v| {
                let s = g.scale(v, 3.0);
                Ok(g.sum(s))
            },
            &x,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err <= 1e-9, "err = {err}");
    }

    #[test]
    fn tanh_of_linear_map_passes() {
        // f = sum(tanh(W x)) at random W, x
        let mut rng = rng_for(11, "gradcheck", 0);
        let w = Tensor::from_fn(4, 3, |_, _| rng.gen_range(-1.0..1.0));
        let x = Tensor::new(vec![3, 1], (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .unwrap();
        let err = grad_check(
            |g, xv| {
                let wv = g.leaf(w.clone());
                let h = g.matmul(wv, xv)?;
                let t = g.tanh(h);
                Ok(g.sum(t))
            },
            &x,
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err <= 1e-4, "err = {err}");
    }

    #[test]
    fn every_core_op_passes_at_random_points() {
        let cases: Vec<(&str, Box<dyn Fn(&Graph, Var) -> Result<Var, NumericsError>>)> = vec![
            ("tanh", Box::new(|g, x| Ok(g.sum(g.tanh(x))))),
            ("sigmoid", Box::new(|g, x| Ok(g.sum(g.sigmoid(x))))),
            ("relu", Box::new(|g, x| Ok(g.sum(g.relu(x))))),
            ("mul", Box::new(|g, x| Ok(g.sum(g.mul(x, x)?)))),
            ("mean", Box::new(|g, x| Ok(g.mean(g.mul(x, x)?)))),
            (
                "softmax",
                Box::new(|g, x| {
                    let s = g.softmax(x, crate::numerics::NormAxis::Row)?;
                    let sq = g.mul(s, s)?;
                    Ok(g.sum(sq))
                }),
            ),
            (
                "log_softmax",
                Box::new(|g, x| {
                    let s = g.log_softmax(x, crate::numerics::NormAxis::Row)?;
                    let w = g.mul(s, s)?;
                    Ok(g.sum(w))
                }),
            ),
            (
                "matmul_transpose",
                Box::new(|g, x| {
                    let xt = g.transpose(x)?;
                    let p = g.matmul(x, xt)?;
                    Ok(g.sum(p))
                }),
            ),
            (
                "concat_rows",
                Box::new(|g, x| {
                    let c = g.concat(&[x, x], 0)?;
                    let t = g.tanh(c);
                    Ok(g.sum(t))
                }),
            ),
            (
                "log_of_sigmoid",
                Box::new(|g, x| {
                    let p = g.sigmoid(x);
                    let lp = g.log(p)?;
                    Ok(g.sum(lp))
                }),
            ),
        ];
        for (name, f) in &cases {
            for trial in 0..10 {
                let mut rng = rng_for(5, name, trial);
                let r = rng.gen_range(1..=2usize);
                let c = rng.gen_range(2..=4usize);
                let x = Tensor::from_fn(r, c, |_, _| rng.gen_range(-1.5..1.5));
                let err = grad_check(f, &x, DEFAULT_EPS).unwrap();
                assert!(err <= 1e-4, "{name} trial {trial}: err = {err}");
            }
        }
    }

    #[test]
    fn store_level_check_covers_bindings() {
        let mut store = crate::numerics::ParameterStore::new(21);
        store.insert_uniform("w", &[3, 3], 0.5);
        store.insert_uniform("b", &[1, 3], 0.5);
        let err = grad_check_store(
            &store,
            |g, s| {
                let w = g.param(s, "w")?;
                let b = g.param(s, "b")?;
                let x = g.leaf(Tensor::new(vec![1, 3], vec![0.3, -0.8, 1.1])?);
                let h = g.matmul(x, w)?;
                let h = g.add(h, b)?;
                let t = g.tanh(h);
                Ok(g.sum(t))
            },
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(err <= 1e-6, "err = {err}");
    }
}
