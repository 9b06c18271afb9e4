use crate::error::{Error, Result};

fn sign(x: f64) -> i64 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Kendall's tau-a: `2/(M(M−1)) Σ_{i<j} sign(t_i − t_j)·sign(s_i − s_j)`.
/// Tied pairs contribute 0.
pub fn kendall_tau(t: &[f64], s: &[f64]) -> Result<f64> {
    if t.len() != s.len() {
        return Err(Error::LengthMismatch {
            expected: t.len(),
            got: s.len(),
        });
    }
    let m = t.len();
    if m < 2 {
        return Err(Error::InvalidArgument(format!(
            "Kendall tau needs at least 2 points, got {m}"
        )));
    }
    let mut sum: i64 = 0;
    for i in 0..m {
        for j in i + 1..m {
            sum += sign(t[i] - t[j]) * sign(s[i] - s[j]);
        }
    }
    Ok(2.0 * sum as f64 / (m * (m - 1)) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(
            kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
            1.0
        );
        assert_eq!(
            kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(),
            -1.0
        );
        assert!(
            (kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 3.0, 2.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15
        );
        assert_eq!(
            kendall_tau(&[1.0, 2.0, 3.0], &[5.0, 5.0, 5.0]).unwrap(),
            0.0
        );
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
        assert!(kendall_tau(&[1.0, 2.0], &[1.0]).is_err());
    }

    fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (2usize..30).prop_flat_map(|m| {
            (
                prop::collection::vec(-1e3f64..1e3, m),
                prop::collection::vec(-1e3f64..1e3, m),
            )
        })
    }

    proptest! {
        #[test]
        fn symmetric_and_rank_based((t, s) in pair()) {
            let a = kendall_tau(&t, &s).unwrap();
            prop_assert_eq!(a, kendall_tau(&s, &t).unwrap());
            prop_assert!((-1.0..=1.0).contains(&a));
            let s2: Vec<f64> = s.iter().map(|x| x.powi(3) + 2.0 * x).collect();
            prop_assert_eq!(a, kendall_tau(&t, &s2).unwrap());
            prop_assert_eq!(kendall_tau(&t, &t).unwrap(), 1.0);
        }
    }
}
