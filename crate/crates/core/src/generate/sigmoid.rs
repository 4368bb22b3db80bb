use serde::{Deserialize, Serialize};

/// Logistic ramp from `floor` to `ceiling`, centred on `midpoint`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidParams {
    /// Minutes after incident start at which the ramp is halfway.
    pub midpoint: f64,
    /// Per-minute growth rate.
    pub steepness: f64,
    pub floor: f64,
    pub ceiling: f64,
}

impl SigmoidParams {
    pub fn new(midpoint: f64, steepness: f64, floor: f64, ceiling: f64) -> Self {
        Self { midpoint, steepness, floor, ceiling }
    }

    pub fn at(&self, t: f64) -> f64 {
        reveal_fraction(t, self)
    }
}

/// `floor + (ceiling - floor) / (1 + exp(-k (t - t0)))`.
pub fn reveal_fraction(t: f64, params: &SigmoidParams) -> f64 {
    let span = params.ceiling - params.floor;
    let value = params.floor + span / (1.0 + (-params.steepness * (t - params.midpoint)).exp());
    // exp overflow yields span / inf = 0, so the result is already in range;
    // the clamp only guards against rounding at the extremes.
    value.clamp(params.floor, params.ceiling)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn midpoint_is_half() {
        let p = SigmoidParams::new(30.0, 0.2, 0.0, 1.0);
        assert_eq!(reveal_fraction(30.0, &p), 0.5);
    }

    #[test]
    fn pre_onset_is_floor() {
        let p = SigmoidParams::new(500.0, 50.0, 0.2, 0.9);
        assert!((reveal_fraction(0.0, &p) - 0.2).abs() < 1e-12);
    }

    #[test]
    fn scalar_oracle_value() {
        // 1 / (1 + e^-2), evaluated independently: 0.8807970779778823.
        let p = SigmoidParams::new(30.0, 0.2, 0.0, 1.0);
        assert!((reveal_fraction(40.0, &p) - 0.880_797_077_977_882_3).abs() < 1e-15);
    }

    #[test]
    fn extreme_arguments_stay_finite() {
        let p = SigmoidParams::new(10.0, 1e6, 0.1, 0.7);
        assert_eq!(reveal_fraction(0.0, &p), 0.1);
        assert_eq!(reveal_fraction(1e9, &p), 0.7);
    }

    fn params() -> impl Strategy<Value = SigmoidParams> {
        (0.0..1000.0f64, 1e-4..5.0f64, 0.0..1.0f64, 0.0..1.0f64).prop_filter_map("floor < ceiling", |(m, k, a, b)| {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            (hi - lo > 1e-6).then(|| SigmoidParams::new(m, k, lo, hi))
        })
    }

    proptest! {
        #[test]
        fn bounded_and_nondecreasing(p in params(), t in 0.0..2000.0f64, dt in 0.0..500.0f64) {
            let a = reveal_fraction(t, &p);
            let b = reveal_fraction(t + dt, &p);
            prop_assert!(a >= p.floor && a <= p.ceiling);
            prop_assert!(b >= a);
        }
    }
}
