use super::{FingerprintDataset, NOT_DETECTED_DBM};
use crate::error::{config, check_dim, Result};
use crate::scalar::Scalar;

/// Per-column min-max scaling of RSSI features to `[0, 1]`.
///
/// Not-detected entries map to 0 and are ignored when fitting. Targets are
/// never scaled, so errors stay in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler<T> {
    pub offset: Vec<T>,
    pub scale: Vec<T>,
}

impl<T: Scalar> FeatureScaler<T> {
    pub fn fit(ds: &FingerprintDataset<T>) -> Result<Self> {
        if ds.is_empty() {
            return Err(config("cannot fit a scaler on an empty dataset"));
        }
        let sentinel = T::of(NOT_DETECTED_DBM);
        let m = ds.input_dim();
        let mut lo = vec![T::infinity(); m];
        let mut hi = vec![T::neg_infinity(); m];
        for x in &ds.features {
            for (j, v) in x.iter().enumerate() {
                if *v != sentinel {
                    lo[j] = lo[j].min(*v);
                    hi[j] = hi[j].max(*v);
                }
            }
        }
        let mut offset = Vec::with_capacity(m);
        let mut scale = Vec::with_capacity(m);
        for (l, h) in lo.into_iter().zip(hi) {
            if l.is_finite() && h > l {
                offset.push(l);
                scale.push(h - l);
            } else {
                // constant or never-detected column
                offset.push(if l.is_finite() { l } else { T::zero() });
                scale.push(T::one());
            }
        }
        Ok(Self { offset, scale })
    }

    pub fn apply_row(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim("feature width", self.offset.len(), x.len())?;
        let sentinel = T::of(NOT_DETECTED_DBM);
        Ok(x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| if *v == sentinel { T::zero() } else { (*v - *o) / *s })
            .collect())
    }

    pub fn invert_row(&self, x: &[T]) -> Result<Vec<T>> {
        check_dim("feature width", self.offset.len(), x.len())?;
        Ok(x.iter()
            .zip(self.offset.iter().zip(&self.scale))
            .map(|(v, (o, s))| *v * *s + *o)
            .collect())
    }

    pub fn apply(&self, ds: &FingerprintDataset<T>) -> Result<FingerprintDataset<T>> {
        let mut out = ds.clone();
        for x in out.features.iter_mut() {
            *x = self.apply_row(x)?;
        }
        Ok(out)
    }
}

/// Fits a scaler on `ds` and returns the scaled copy with the scaler.
pub fn normalize<T: Scalar>(ds: &FingerprintDataset<T>) -> Result<(FingerprintDataset<T>, FeatureScaler<T>)> {
    let scaler = FeatureScaler::fit(ds)?;
    Ok((scaler.apply(ds)?, scaler))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ds(rows: Vec<Vec<f64>>) -> FingerprintDataset<f64> {
        let n = rows.len();
        FingerprintDataset::new(rows, vec![vec![0.0, 0.0]; n]).unwrap()
    }

    #[test]
    fn unit_range_is_unchanged() {
        let d = ds(vec![vec![0.0, 1.0], vec![1.0, 0.0], vec![0.5, 0.25]]);
        let (n, _) = normalize(&d).unwrap();
        assert_eq!(n.features, d.features);
    }

    #[test]
    fn constant_column_becomes_zero() {
        let d = ds(vec![vec![-60.0, 1.0], vec![-60.0, 2.0]]);
        let (n, s) = normalize(&d).unwrap();
        assert_eq!(n.features[0][0], 0.0);
        assert_eq!(n.features[1][0], 0.0);
        assert_eq!(s.scale[0], 1.0);
    }

    #[test]
    fn sentinel_maps_to_zero() {
        let d = ds(vec![vec![-40.0], vec![-80.0], vec![NOT_DETECTED_DBM]]);
        let (n, _) = normalize(&d).unwrap();
        assert_eq!(n.features, vec![vec![1.0], vec![0.0], vec![0.0]]);
        assert!(normalize(&FingerprintDataset::<f64>::default()).is_err());
    }

    proptest! {
        #[test]
        fn apply_invert_roundtrip(rows in prop::collection::vec(prop::collection::vec(-100.0f64..0.0, 3), 2..40)) {
            let d = ds(rows);
            let (n, s) = normalize(&d).unwrap();
            for (orig, scaled) in d.features.iter().zip(&n.features) {
                prop_assert!(scaled.iter().all(|v| (0.0..=1.0).contains(v)));
                let back = s.invert_row(scaled).unwrap();
                for (a, b) in orig.iter().zip(&back) {
                    prop_assert!((a - b).abs() <= 1e-12);
                }
            }
        }
    }
}
