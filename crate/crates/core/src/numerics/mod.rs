//! Dense tensors, activations, the differentiation tape, gradient checking,
//! seeded randomness and K-Means.

mod graph;
mod kmeans;
mod optim;
mod rng;
mod tensor;

pub use graph::{Graph, Var, LOG_FLOOR};
pub use kmeans::{kmeans, KMeansResult};
pub use optim::AdamW;
pub use rng::SeededRng;
pub use tensor::{Param, ParamId, ParamStore, Tensor};

use crate::error::{Error, Result};

/// Exponent arguments are clamped to this magnitude; `e^745` overflows.
const EXP_CLAMP: f64 = 700.0;

#[inline]
pub(crate) fn sigmoid_scalar(x: f64) -> f64 {
    let x = x.clamp(-EXP_CLAMP, EXP_CLAMP);
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise logistic function.
pub fn sigmoid(x: &Tensor) -> Tensor {
    let data = x.data().iter().map(|v| sigmoid_scalar(*v)).collect();
    Tensor::from_vec(x.rows(), x.cols(), data).expect("same shape")
}

pub(crate) fn softmax_into(logits: &[f64], tau: f64, out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, l) in out.iter_mut().zip(logits) {
        *o = ((l - max) / tau).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Softmax of `logits / tau`.
pub fn softmax_t(logits: &[f64], tau: f64) -> Result<Vec<f64>> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!("temperature must be positive, got {tau}")));
    }
    if logits.is_empty() {
        return Err(Error::invalid("softmax of an empty vector"));
    }
    let mut out = vec![0.0; logits.len()];
    softmax_into(logits, tau, &mut out);
    Ok(out)
}

/// Denominator floor for [`grad_check`]. Central differences with a step of
/// 1e-5 resolve gradients only to about 1e-11, so coordinates far below
/// this floor are compared in absolute terms.
pub const GRAD_CHECK_FLOOR: f64 = 1e-6;

/// Compares analytic gradients against central differences.
///
/// `f(store, want_grad)` returns the objective at the current parameter
/// values; when `want_grad` is set it must also add its gradient into the
/// store (the store's gradients are zeroed beforehand). Returns the maximum
/// over all coordinates of `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_CHECK_FLOOR)`.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, mut f: F) -> Result<f64>
where
    F: FnMut(&mut ParamStore, bool) -> Result<f64>,
{
    if !(1e-6..=1e-4).contains(&eps) {
        return Err(Error::invalid(format!("eps {eps} outside [1e-6, 1e-4]")));
    }
    store.zero_grad();
    let base = f(store, true)?;
    if !base.is_finite() {
        return Err(Error::NonFinite {
            param: "<unperturbed>".into(),
            index: 0,
        });
    }
    let analytic: Vec<Tensor> = store.ids().map(|id| store.grad(id).clone()).collect();

    let mut worst: f64 = 0.0;
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for k in 0..store.value(id).len() {
            let orig = store.value(id).data()[k];
            store.value_mut(id).data_mut()[k] = orig + eps;
            let plus = f(store, false)?;
            store.value_mut(id).data_mut()[k] = orig - eps;
            let minus = f(store, false)?;
            store.value_mut(id).data_mut()[k] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    param: store.name(id).to_string(),
                    index: k,
                });
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic[id.0].data()[k];
            worst = worst.max((a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_CHECK_FLOOR));
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sigmoid_values() {
        let s = |x: f64| sigmoid(&Tensor::scalar(x)).item();
        assert_eq!(s(0.0), 0.5);
        assert!((s(1e6) - 1.0).abs() < 1e-15);
        assert!(s(-1e6) >= 0.0 && s(-1e6) < 1e-15);
        assert!((s(1.0) - 0.7310585786).abs() < 1e-10);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_t(&[2.0, 2.0, 2.0, 2.0], 0.3).unwrap(), vec![0.25; 4]);
        assert_eq!(softmax_t(&[-4.0], 1.0).unwrap(), vec![1.0]);
        let p = softmax_t(&[1.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.73106).abs() < 1e-5 && (p[1] - 0.26894).abs() < 1e-5);
    }

    #[test]
    fn softmax_rejects_bad_temperature() {
        assert!(matches!(softmax_t(&[1.0], 0.0), Err(Error::InvalidArgument(_))));
        assert!(matches!(softmax_t(&[1.0], -2.0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn softmax_sharpens_at_low_temperature() {
        let p = softmax_t(&[1.0, 0.0, -0.5], 0.01).unwrap();
        assert!(p[0] >= 0.99);
    }

    fn logits_and_tau() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(-50.0f64..50.0, 1..12), 0.05f64..5.0)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn softmax_on_simplex((logits, tau) in logits_and_tau()) {
            let p = softmax_t(&logits, tau).unwrap();
            let sum: f64 = p.iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
        }

        #[test]
        fn softmax_shift_invariant((logits, tau) in logits_and_tau(), c in -100.0f64..100.0) {
            let p = softmax_t(&logits, tau).unwrap();
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            let q = softmax_t(&shifted, tau).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grad_check_sum_of_squares() {
        let mut store = ParamStore::new();
        let mut rng = SeededRng::new(5);
        let id = store.add(
            "w",
            Tensor::from_vec(2, 3, (0..6).map(|_| rng.normal()).collect()).unwrap(),
        );
        let err = grad_check(&mut store, 1e-5, |s, want| {
            let v = s.value(id).clone();
            if want {
                let g = s.grad_mut(id);
                for (gi, vi) in g.data_mut().iter_mut().zip(v.data()) {
                    *gi += 2.0 * vi;
                }
            }
            Ok(v.data().iter().map(|x| x * x).sum())
        })
        .unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn grad_check_constant_is_zero() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::filled(3, 1, 0.4));
        let err = grad_check(&mut store, 1e-5, |_, _| Ok(3.0)).unwrap();
        assert_eq!(err, 0.0);
        assert!(store.grad(ParamId(0)).data().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn grad_check_reports_non_finite_coordinate() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::filled(1, 1, 1.0));
        let b = store.add("b", Tensor::filled(1, 2, 0.0));
        let err = grad_check(&mut store, 1e-5, |s, _| {
            let v = s.value(b).data()[1];
            Ok(if v > 0.0 { f64::NAN } else { v })
        })
        .unwrap_err();
        match err {
            Error::NonFinite { param, index } => {
                assert_eq!(param, "b");
                assert_eq!(index, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
