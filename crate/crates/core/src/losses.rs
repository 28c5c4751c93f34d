//! Adversarial objectives.
//!
//! Generator:     `L_G = mean(-log(D_F + eps)) + lambda * mean(|Y - Yhat|)`
//! Discriminator: `L_D = mean(-(log(D_R + eps) + log(1 - D_F + eps)))`
//!
//! Means run jointly over batch, spatial and channel axes. The L1
//! subgradient at `Y == Yhat` is 0.

use serde::{Deserialize, Serialize};

use crate::engine::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Stabilizer inside the logarithms.
pub const DEFAULT_EPS: f64 = 1e-12;
/// Weight of the L1 term.
pub const DEFAULT_LAMBDA: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub gan_term: f64,
    pub l1_term: f64,
}

/// Loss value plus gradients w.r.t. the patch map and the generator output.
#[derive(Clone, Debug)]
pub struct GeneratorLossGrad<F> {
    pub loss: LossBreakdown,
    pub grad_df: Tensor<F>,
    pub grad_yhat: Tensor<F>,
}

#[derive(Clone, Debug)]
pub struct DiscriminatorLossGrad<F> {
    pub loss: f64,
    pub grad_dr: Tensor<F>,
    pub grad_df: Tensor<F>,
}

fn check_probs<F: Scalar>(t: &Tensor<F>, what: &str) -> Result<()> {
    if t.is_empty() {
        return Err(Error::shape(format!("{what} is empty")));
    }
    match t
        .data()
        .iter()
        .find(|v| !v.is_finite() || **v < F::zero() || **v > F::one())
    {
        Some(v) => Err(Error::Numeric(format!(
            "{what} holds {v:?}, outside [0, 1]"
        ))),
        None => Ok(()),
    }
}

fn check_params(lambda: f64, eps: f64) -> Result<()> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::config(format!(
            "lambda must be finite and >= 0, got {lambda}"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::config(format!(
            "eps must be finite and > 0, got {eps}"
        )));
    }
    Ok(())
}

pub fn generator_loss<F: Scalar>(
    df: &Tensor<F>,
    y: &Tensor<F>,
    yhat: &Tensor<F>,
    lambda: f64,
    eps: f64,
) -> Result<LossBreakdown> {
    generator_loss_with_grad(df, y, yhat, lambda, eps).map(|g| g.loss)
}

pub fn generator_loss_with_grad<F: Scalar>(
    df: &Tensor<F>,
    y: &Tensor<F>,
    yhat: &Tensor<F>,
    lambda: f64,
    eps: f64,
) -> Result<GeneratorLossGrad<F>> {
    check_params(lambda, eps)?;
    check_probs(df, "D_F")?;
    if y.shape() != yhat.shape() || y.is_empty() {
        return Err(Error::shape(format!(
            "target {:?} and output {:?} differ",
            y.shape(),
            yhat.shape()
        )));
    }
    if !y.all_finite() || !yhat.all_finite() {
        return Err(Error::Numeric(
            "non-finite generator target or output".into(),
        ));
    }

    let cells = df.len() as f64;
    let mut gan = 0.0;
    let grad_df = df.map(|p| {
        let p = p.as_f64() + eps;
        gan -= p.ln();
        F::from_f64(-1.0 / (p * cells))
    });
    let gan_term = gan / cells;

    let count = y.len() as f64;
    let mut l1 = 0.0;
    let step = lambda / count;
    let grad: Vec<F> = y
        .data()
        .iter()
        .zip(yhat.data())
        .map(|(&t, &o)| {
            let diff = o.as_f64() - t.as_f64();
            l1 += diff.abs();
            F::from_f64(if diff > 0.0 {
                step
            } else if diff < 0.0 {
                -step
            } else {
                0.0
            })
        })
        .collect();
    let l1_term = l1 / count;
    let total = gan_term + lambda * l1_term;
    if !total.is_finite() {
        return Err(Error::Numeric(format!(
            "generator loss evaluated to {total}"
        )));
    }
    Ok(GeneratorLossGrad {
        loss: LossBreakdown {
            total,
            gan_term,
            l1_term,
        },
        grad_df,
        grad_yhat: Tensor::from_vec(yhat.shape(), grad)?,
    })
}

pub fn discriminator_loss<F: Scalar>(dr: &Tensor<F>, df: &Tensor<F>, eps: f64) -> Result<f64> {
    discriminator_loss_with_grad(dr, df, eps).map(|g| g.loss)
}

pub fn discriminator_loss_with_grad<F: Scalar>(
    dr: &Tensor<F>,
    df: &Tensor<F>,
    eps: f64,
) -> Result<DiscriminatorLossGrad<F>> {
    check_params(0.0, eps)?;
    if dr.shape() != df.shape() {
        return Err(Error::shape(format!(
            "D_R {:?} and D_F {:?} differ",
            dr.shape(),
            df.shape()
        )));
    }
    check_probs(dr, "D_R")?;
    check_probs(df, "D_F")?;
    let cells = dr.len() as f64;
    let mut sum = 0.0;
    let grad_dr = dr.map(|p| {
        let p = p.as_f64() + eps;
        sum -= p.ln();
        F::from_f64(-1.0 / (p * cells))
    });
    let grad_df = df.map(|p| {
        let q = 1.0 - p.as_f64() + eps;
        sum -= q.ln();
        F::from_f64(1.0 / (q * cells))
    });
    let loss = sum / cells;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!(
            "discriminator loss evaluated to {loss}"
        )));
    }
    Ok(DiscriminatorLossGrad {
        loss,
        grad_dr,
        grad_df,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn full(shape: [usize; 4], v: f64) -> Tensor<f64> {
        Tensor::full(shape, v)
    }

    #[test]
    fn perfect_fooling_is_minus_log_one_plus_eps() {
        let y = full([1, 6, 4, 4], 0.2);
        let l = generator_loss(&full([1, 1, 2, 2], 1.0), &y, &y, 10.0, DEFAULT_EPS).unwrap();
        assert_eq!(l.total, -(1.0 + DEFAULT_EPS).ln());
        assert_eq!(l.l1_term, 0.0);
    }

    #[test]
    fn analytic_values() {
        let y = full([1, 3, 4, 4], 0.0);
        let l = generator_loss(&full([1, 1, 3, 3], 0.5), &y, &y, 10.0, DEFAULT_EPS).unwrap();
        assert!((l.total - 0.6931).abs() < 1e-4);

        let yhat = full([1, 3, 4, 4], 0.1);
        let l = generator_loss(&full([1, 1, 3, 3], 0.5), &y, &yhat, 10.0, DEFAULT_EPS).unwrap();
        assert!((l.l1_term - 0.1).abs() < 1e-12);
        assert!((l.total - 1.6931).abs() < 1e-4);

        let d = discriminator_loss(
            &full([2, 1, 3, 3], 0.5),
            &full([2, 1, 3, 3], 0.5),
            DEFAULT_EPS,
        )
        .unwrap();
        assert!((d - 1.3863).abs() < 1e-4);
        let d = discriminator_loss(
            &full([1, 1, 2, 2], 1.0),
            &full([1, 1, 2, 2], 0.0),
            DEFAULT_EPS,
        )
        .unwrap();
        assert!(d.abs() < 1e-9);
    }

    #[test]
    fn saturated_discriminator_stays_finite() {
        let d = discriminator_loss(
            &full([1, 1, 2, 2], 0.0),
            &full([1, 1, 2, 2], 1.0),
            DEFAULT_EPS,
        )
        .unwrap();
        let expect = -2.0 * DEFAULT_EPS.ln();
        assert!((d - expect).abs() < 1e-6 * expect);
        let y = full([1, 3, 2, 2], 0.0);
        let g = generator_loss(&full([1, 1, 2, 2], 0.0), &y, &y, 1.0, DEFAULT_EPS).unwrap();
        assert!(g.total.is_finite());
    }

    #[test]
    fn error_paths() {
        let p = full([1, 1, 2, 2], 0.5);
        let a = full([1, 3, 2, 2], 0.0);
        let b = full([1, 6, 2, 2], 0.0);
        assert!(matches!(
            generator_loss(&p, &a, &b, 1.0, DEFAULT_EPS),
            Err(Error::Shape(_))
        ));
        let nan = full([1, 3, 2, 2], f64::NAN);
        assert!(matches!(
            generator_loss(&p, &a, &nan, 1.0, DEFAULT_EPS),
            Err(Error::Numeric(_))
        ));
        assert!(matches!(
            discriminator_loss(&p, &full([1, 1, 3, 3], 0.5), DEFAULT_EPS),
            Err(Error::Shape(_))
        ));
        assert!(matches!(
            discriminator_loss(&p, &full([1, 1, 2, 2], 1.5), DEFAULT_EPS),
            Err(Error::Numeric(_))
        ));
        assert!(generator_loss(&p, &a, &a, -1.0, DEFAULT_EPS).is_err());
        assert!(discriminator_loss(&p, &p, 0.0).is_err());
    }

    #[test]
    fn l1_gradient_sign() {
        let y = Tensor::from_vec([1, 1, 1, 3], vec![0.0, 0.5, -0.5]).unwrap();
        let yhat = Tensor::from_vec([1, 1, 1, 3], vec![0.3, 0.2, -0.5]).unwrap();
        let g = generator_loss_with_grad(&full([1, 1, 1, 1], 0.5), &y, &yhat, 6.0, DEFAULT_EPS)
            .unwrap();
        assert_eq!(g.grad_yhat.data(), &[2.0, -2.0, 0.0]);
    }

    proptest! {
        #[test]
        fn total_is_affine_in_lambda(
            p in 0.01f64..0.99,
            diffs in prop::collection::vec(-1.0f64..1.0, 8),
            lambda in 0.0f64..50.0,
        ) {
            let y = full([1, 2, 2, 2], 0.0);
            let yhat = Tensor::from_vec([1, 2, 2, 2], diffs).unwrap();
            let df = full([1, 1, 2, 2], p);
            let l0 = generator_loss(&df, &y, &yhat, 0.0, DEFAULT_EPS).unwrap();
            let l = generator_loss(&df, &y, &yhat, lambda, DEFAULT_EPS).unwrap();
            prop_assert!((l.total - (l0.total + lambda * l.l1_term)).abs() < 1e-12);
            prop_assert!(l.total >= 0.0 && l.gan_term >= 0.0 && l.l1_term >= 0.0);
        }

        #[test]
        fn gan_term_decreases_as_df_increases(p in 0.0f64..0.9, dp in 0.001f64..0.1, cell in 0usize..4) {
            let y = full([1, 3, 2, 2], 0.0);
            let lo = full([1, 1, 2, 2], p);
            let mut hi = lo.clone();
            hi.data_mut()[cell] += dp;
            let a = generator_loss(&lo, &y, &y, 10.0, DEFAULT_EPS).unwrap();
            let b = generator_loss(&hi, &y, &y, 10.0, DEFAULT_EPS).unwrap();
            prop_assert!(b.total < a.total);
        }

        #[test]
        fn l1_increases_with_any_error(base in prop::collection::vec(-1.0f64..1.0, 12), idx in 0usize..12, bump in 0.001f64..0.5) {
            let y = full([1, 3, 2, 2], 0.0);
            let yhat = Tensor::from_vec([1, 3, 2, 2], base).unwrap();
            let mut worse = yhat.clone();
            let v = worse.data()[idx];
            worse.data_mut()[idx] = if v >= 0.0 { v + bump } else { v - bump };
            let df = full([1, 1, 1, 1], 0.5);
            let a = generator_loss(&df, &y, &yhat, 1.0, DEFAULT_EPS).unwrap();
            let b = generator_loss(&df, &y, &worse, 1.0, DEFAULT_EPS).unwrap();
            prop_assert!(b.l1_term > a.l1_term);
        }
    }
}
