use crate::scalar::Real;

/// Huber kernel acting on a squared (whitened) residual norm `s = |r|^2`:
///
/// `rho(s) = s` for `sqrt(s) <= delta`, `2 delta sqrt(s) - delta^2` beyond.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Huber<T: Real> {
    delta: T,
}

impl<T: Real> Huber<T> {
    /// # Panics
    /// If `delta` is not strictly positive.
    pub fn new(delta: T) -> Self {
        assert!(delta > T::zero(), "Huber delta must be positive");
        Self { delta }
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn rho(&self, squared_norm: T) -> T {
        let d2 = self.delta * self.delta;
        if squared_norm <= d2 {
            squared_norm
        } else {
            T::lit(2.0) * self.delta * squared_norm.sqrt() - d2
        }
    }

    /// `d rho / d s`, the IRLS weight.
    pub fn weight(&self, squared_norm: T) -> T {
        if squared_norm <= self.delta * self.delta {
            T::one()
        } else {
            self.delta / squared_norm.sqrt()
        }
    }
}

/// Optional robustification of a factor family; `None` is plain least squares.
pub type Kernel<T> = Option<Huber<T>>;

pub fn rho<T: Real>(kernel: &Kernel<T>, squared_norm: T) -> T {
    kernel.map_or(squared_norm, |k| k.rho(squared_norm))
}

pub fn weight<T: Real>(kernel: &Kernel<T>, squared_norm: T) -> T {
    kernel.map_or(T::one(), |k| k.weight(squared_norm))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quadratic_inside_linear_outside() {
        let h = Huber::new(1.345f64);
        assert_eq!(h.rho(1.0), 1.0);
        let x: f64 = 4.0;
        assert!((h.rho(x * x) - (2.0 * 1.345 * x - 1.345 * 1.345)).abs() < 1e-12);
        // Past the knee the cost grows linearly: doubling a residual adds
        // 2 delta |x| instead of quadrupling the cost.
        let c1 = h.rho(3.0f64.powi(2));
        let c2 = h.rho(6.0f64.powi(2));
        assert!((c2 - c1 - 2.0 * 1.345 * 3.0).abs() < 1e-12);
        assert!(c2 < 4.0 * c1);
    }

    #[test]
    fn continuous_with_continuous_slope_at_knee() {
        let h = Huber::new(1.345f64);
        let knee = 1.345f64;
        let f = |x: f64| h.rho(x * x);
        let eps = 1e-9;
        assert!((f(knee - eps) - f(knee + eps)).abs() < 1e-8);
        // d rho(x^2)/dx on both sides equals 2 delta at the knee.
        let left = (f(knee) - f(knee - eps)) / eps;
        let right = (f(knee + eps) - f(knee)) / eps;
        assert!((left - 2.0 * knee).abs() < 1e-5);
        assert!((right - 2.0 * knee).abs() < 1e-5);
        assert_eq!(h.weight(knee * knee), 1.0);
        assert!((h.weight((knee + eps).powi(2)) - 1.0).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn weight_is_derivative_of_rho(s in 1e-3f64..1e4, delta in 0.1f64..10.0) {
            let h = Huber::new(delta);
            let e = 1e-6 * s;
            let fd = (h.rho(s + e) - h.rho(s - e)) / (2.0 * e);
            prop_assert!((fd - h.weight(s)).abs() < 1e-5 * (1.0 + fd.abs()));
            prop_assert!(h.rho(s) <= s + 1e-12);
        }
    }
}
