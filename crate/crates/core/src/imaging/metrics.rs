use super::planes::Planes;
use crate::error::{Error, Result};

/// Mean over all elements of `(a − b)²`.
pub fn mse(a: impl AsRef<Planes>, b: impl AsRef<Planes>) -> Result<f64> {
    let (a, b) = (a.as_ref(), b.as_ref());
    a.ensure_same_shape(b, "mse")?;
    if a.is_empty() {
        return Err(Error::Shape("mse of empty arrays".into()));
    }
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.len() as f64)
}

/// PSNR in dB for peak 1.0. Identical inputs yield [`Error::InfinitePsnr`].
pub fn psnr(a: impl AsRef<Planes>, b: impl AsRef<Planes>) -> Result<f64> {
    psnr_from_mse(mse(a, b)?)
}

pub fn psnr_from_mse(mse: f64) -> Result<f64> {
    if mse <= 0.0 {
        return Err(Error::InfinitePsnr);
    }
    Ok(10.0 * (1.0 / mse).log10())
}

pub fn mse_from_psnr(psnr_db: f64) -> f64 {
    10f64.powf(-psnr_db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::ImageTensor;
    use proptest::prelude::*;

    fn toy(v: &[f64]) -> Planes {
        Planes::from_vec(1, 1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn mse_examples() {
        let a = Planes::filled(3, 4, 4, 0.0);
        let b = Planes::filled(3, 4, 4, 0.5);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mse(&a, &b).unwrap(), 0.25);
        assert_eq!(mse(toy(&[0.0, 1.0]), toy(&[1.0, 0.0])).unwrap(), 1.0);
        assert!(matches!(mse(&a, toy(&[0.0])), Err(Error::Shape(_))));
    }

    #[test]
    fn psnr_examples() {
        assert!((psnr_from_mse(0.01).unwrap() - 20.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(1.0).unwrap(), 0.0);
        assert!((mse_from_psnr(26.06) - 2.477e-3).abs() < 1e-6);
        assert!((mse_from_psnr(26.06) - 10f64.powf(-2.606)).abs() < 1e-15);
        let a = Planes::filled(1, 2, 2, 0.3);
        assert!(matches!(psnr(&a, &a), Err(Error::InfinitePsnr)));
    }

    proptest! {
        #[test]
        fn metrics_are_symmetric(a in prop::collection::vec(0.0f64..1.0, 12), b in prop::collection::vec(0.0f64..1.0, 12)) {
            let (a, b) = (toy(&a), toy(&b));
            prop_assert_eq!(mse(&a, &b).unwrap(), mse(&b, &a).unwrap());
            if let (Ok(p), Ok(q)) = (psnr(&a, &b), psnr(&b, &a)) {
                prop_assert_eq!(p, q);
            }
        }

        #[test]
        fn clipped_offset_error_bounded(v in prop::collection::vec(0.0f64..=1.0, 16), c in 0.0f64..=1.0) {
            let x = ImageTensor::new(toy(&v)).unwrap();
            let shifted = ImageTensor::clipped(x.planes().map(|p| p + c));
            prop_assert!(mse(&x, &shifted).unwrap() <= c * c + 1e-15);
        }
    }
}
