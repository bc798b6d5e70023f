use super::ExplainError;
use crate::exec;

pub const MAX_BRUTE_FORCE_FEATURES: usize = 15;

/// Exact interventional Shapley values of `f` at `x` by enumerating all
/// `2^d` coalitions. The value of coalition `S` is the mean of `f` over the
/// background rows with the features in `S` replaced by those of `x`.
///
/// Returns `(phi, base)` where `base` is the value of the empty coalition.
pub fn brute_force_shapley<F>(f: F, x: &[f64], background: &[Vec<f64>]) -> Result<(Vec<f64>, f64), ExplainError>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let d = x.len();
    if d > MAX_BRUTE_FORCE_FEATURES {
        return Err(ExplainError::TooManyFeatures {
            max: MAX_BRUTE_FORCE_FEATURES,
            found: d,
        });
    }
    if background.is_empty() {
        return Err(ExplainError::AlignmentMismatch { expected: 1, found: 0 });
    }
    if let Some(b) = background.iter().find(|b| b.len() != d) {
        return Err(ExplainError::SchemaMismatch {
            expected: d,
            found: b.len(),
        });
    }
    let value: Vec<f64> = exec::map_range(1usize << d, |mask| {
        let mut hybrid = vec![0.0; d];
        let mut total = 0.0;
        for b in background {
            for j in 0..d {
                hybrid[j] = if mask >> j & 1 == 1 { x[j] } else { b[j] };
            }
            total += f(&hybrid);
        }
        total / background.len() as f64
    });

    let fact: Vec<f64> = (0..=d).scan(1.0, |acc, k| {
        if k > 0 {
            *acc *= k as f64;
        }
        Some(*acc)
    }).collect();
    let mut phi = vec![0.0; d];
    for (j, p) in phi.iter_mut().enumerate() {
        for mask in 0..1usize << d {
            if mask >> j & 1 == 1 {
                continue;
            }
            let s = mask.count_ones() as usize;
            let w = fact[s] * fact[d - s - 1] / fact[d];
            *p += w * (value[mask | 1 << j] - value[mask]);
        }
    }
    Ok((phi, value[0]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_player_game() {
        let bg = vec![vec![1.0], vec![3.0]];
        let (phi, base) = brute_force_shapley(|r| r[0] * r[0], &[4.0], &bg).unwrap();
        assert_eq!(base, 5.0);
        assert_eq!(phi, vec![11.0]);
    }

    #[test]
    fn symmetric_features_share_credit() {
        let bg = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.5, 0.5]];
        let f = |r: &[f64]| (r[0] + r[1]).powi(2);
        let (phi, _) = brute_force_shapley(f, &[2.0, 2.0], &bg).unwrap();
        assert!((phi[0] - phi[1]).abs() < 1e-9);
    }

    #[test]
    fn too_many_features() {
        let x = vec![0.0; 16];
        assert!(matches!(
            brute_force_shapley(|_| 0.0, &x, &[x.clone()]),
            Err(ExplainError::TooManyFeatures { max: 15, found: 16 })
        ));
    }

    proptest! {
        #[test]
        fn efficiency(coef in prop::collection::vec(-3.0f64..3.0, 4), x in prop::collection::vec(-2.0f64..2.0, 4),
                      bg in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 4), 1..6)) {
            let f = |r: &[f64]| coef[0] * r[0] + coef[1] * r[1] * r[2] + (coef[2] * r[3]).max(coef[3]);
            let (phi, base) = brute_force_shapley(f, &x, &bg).unwrap();
            prop_assert!((base + phi.iter().sum::<f64>() - f(&x)).abs() < 1e-9);
        }
    }
}
