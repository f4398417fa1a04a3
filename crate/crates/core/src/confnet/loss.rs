/// `(min(s1, s2) − y)²`.
///
/// Agrees with the indicator form `𝟙{s1<s2}(s1−y)² + 𝟙{s2<s1}(s2−y)²`
/// whenever `s1 ≠ s2`; on ties it still regresses the common value onto `y`
/// instead of vanishing.
pub fn loss(s1: f64, s2: f64, y: f64) -> f64 {
    let m = s1.min(s2);
    (m - y) * (m - y)
}

/// `(∂L/∂s1, ∂L/∂s2)`. On a tie the subgradient `2(s−y)` is split equally.
pub fn loss_gradient(s1: f64, s2: f64, y: f64) -> (f64, f64) {
    if s1 < s2 {
        (2.0 * (s1 - y), 0.0)
    } else if s2 < s1 {
        (0.0, 2.0 * (s2 - y))
    } else {
        (s1 - y, s1 - y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn worked_values() {
        assert_eq!(loss(0.3, 0.8, 0.3), 0.0);
        assert!((loss(0.3, 0.8, 0.5) - 0.04).abs() < 1e-15);
        assert_eq!(loss(0.3, 0.8, 0.5), loss(0.8, 0.3, 0.5));
        assert!((loss(0.5, 0.5, 0.2) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn worked_gradients() {
        let (g1, g2) = loss_gradient(0.3, 0.8, 0.5);
        assert!((g1 + 0.4).abs() < 1e-15);
        assert_eq!(g2, 0.0);
        let (g1, g2) = loss_gradient(0.5, 0.5, 0.2);
        assert!((g1 - 0.3).abs() < 1e-15 && (g2 - 0.3).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn symmetric_and_nonnegative(s1 in 1e-6f64..1.0, s2 in 1e-6f64..1.0, y in 0.0f64..=1.0) {
            prop_assert_eq!(loss(s1, s2, y), loss(s2, s1, y));
            prop_assert!(loss(s1, s2, y) >= 0.0);
            let (a, b) = loss_gradient(s1, s2, y);
            let (c, d) = loss_gradient(s2, s1, y);
            prop_assert_eq!((a, b), (d, c));
        }

        #[test]
        fn small_step_decreases_loss(s1 in 0.01f64..0.99, s2 in 0.01f64..0.99, y in 0.0f64..=1.0) {
            prop_assume!((s1 - s2).abs() > 1e-3);
            let l0 = loss(s1, s2, y);
            prop_assume!(l0 > 1e-12);
            let (g1, g2) = loss_gradient(s1, s2, y);
            let lr = 1e-4;
            prop_assert!(loss(s1 - lr * g1, s2 - lr * g2, y) < l0);
        }
    }
}
