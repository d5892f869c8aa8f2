use crate::error::{Error, Result};

fn check(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            what: "correlation inputs",
            left: x.len(),
            right: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation needs at least 3 pairs, got {}",
            x.len()
        )));
    }
    if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue {
            id: format!("pair {}", i % x.len()),
            column: i / x.len(),
        });
    }
    Ok(())
}

/// Sample Pearson correlation. `None` when either input is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    check(x, y)?;
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(None);
    }
    Ok(Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)))
}

/// Pairs tied within runs of equal values of an already sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Sorts `v` and returns the number of inversions (strictly greater before smaller).
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = v.split_at_mut(mid);
    let mut swaps = merge_count(left, &mut buf[..mid]) + merge_count(right, &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if right[j] < left[i] {
            buf[k] = right[j];
            swaps += (left.len() - i) as u64;
            j += 1;
        } else {
            buf[k] = left[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + left.len() - i].copy_from_slice(&left[i..]);
    k += left.len() - i;
    buf[k..].copy_from_slice(&right[j..]);
    v.copy_from_slice(buf);
    swaps
}

/// Pair counts behind tau-b: total pairs, pairs tied in x, tied in y, tied
/// in both, and discordant pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairCounts {
    pub n0: u64,
    pub ties_x: u64,
    pub ties_y: u64,
    pub ties_xy: u64,
    pub discordant: u64,
}

impl PairCounts {
    pub fn concordant(&self) -> u64 {
        self.n0 + self.ties_xy - self.ties_x - self.ties_y - self.discordant
    }

    /// `None` when every pair is tied in x or in y.
    pub fn tau_b(&self) -> Option<f64> {
        let dx = self.n0 - self.ties_x;
        let dy = self.n0 - self.ties_y;
        if dx == 0 || dy == 0 {
            return None;
        }
        let num = self.concordant() as i128 - self.discordant as i128;
        Some(num as f64 / ((dx as f64) * (dy as f64)).sqrt())
    }
}

/// O(n log n) pair counting: sort by (x, y), count y inversions by merge sort.
pub fn kendall_pair_counts(x: &[f64], y: &[f64]) -> Result<PairCounts> {
    check(x, y)?;
    let n = x.len() as u64;
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_x = tied_pairs(&xs);
    let ties_xy = tied_pairs(&pairs);
    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = vec![0.0; ys.len()];
    let discordant = merge_count(&mut ys, &mut buf);
    let ties_y = tied_pairs(&ys);
    Ok(PairCounts {
        n0: n * (n - 1) / 2,
        ties_x,
        ties_y,
        ties_xy,
        discordant,
    })
}

/// Kendall tau-b. `None` when either input is constant.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<Option<f64>> {
    Ok(kendall_pair_counts(x, y)?.tau_b())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_counts(x: &[f64], y: &[f64]) -> PairCounts {
        let n = x.len();
        let mut c = PairCounts { n0: 0, ties_x: 0, ties_y: 0, ties_xy: 0, discordant: 0 };
        for i in 0..n {
            for j in i + 1..n {
                c.n0 += 1;
                let (tx, ty) = (x[i] == x[j], y[i] == y[j]);
                c.ties_x += tx as u64;
                c.ties_y += ty as u64;
                c.ties_xy += (tx && ty) as u64;
                if !tx && !ty && (x[i] < x[j]) != (y[i] < y[j]) {
                    c.discordant += 1;
                }
            }
        }
        c
    }

    #[test]
    fn pearson_affine_and_negation() {
        let x = [1.0, 2.0, 4.0, 7.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        assert!((pearson(&x, &y).unwrap().unwrap() - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((pearson(&x, &neg).unwrap().unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_input_is_undefined() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[5.0; 3]).unwrap(), None);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[5.0; 3]).unwrap(), None);
    }

    #[test]
    fn length_mismatch() {
        assert_eq!(pearson(&[1.0, 2.0, 3.0], &[1.0, 2.0]).unwrap_err().code(), "LENGTH_MISMATCH");
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[1.0, 2.0]).unwrap_err().code(), "LENGTH_MISMATCH");
    }

    #[test]
    fn kendall_small_cases() {
        let t = kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap().unwrap();
        assert!((t + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[4.0, 5.0, 9.0]).unwrap(), Some(1.0));
    }

    #[test]
    fn kendall_with_ties_matches_hand_count() {
        // pairs: (1,1)-(1,2) tied x; (1,1)-(2,2) C; (1,2)-(2,2) tied y
        let c = kendall_pair_counts(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]).unwrap();
        assert_eq!(c, brute_counts(&[1.0, 1.0, 2.0], &[1.0, 2.0, 2.0]));
        assert_eq!(c.tau_b(), Some(1.0 / 2.0));
    }

    proptest! {
        #[test]
        fn merge_counts_equal_pair_enumeration(
            v in prop::collection::vec((0u8..6, 0u8..6), 3..60)
        ) {
            let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            let fast = kendall_pair_counts(&x, &y).unwrap();
            prop_assert_eq!(fast, brute_counts(&x, &y));
        }

        #[test]
        fn kendall_rank_invariant_and_antisymmetric(
            v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40)
        ) {
            let x: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            let t = kendall_tau(&x, &y).unwrap();
            let cubed: Vec<f64> = x.iter().map(|a| a.powi(3) + 5.0).collect();
            prop_assert_eq!(t, kendall_tau(&cubed, &y).unwrap());
            let neg: Vec<f64> = y.iter().map(|b| -b).collect();
            prop_assert_eq!(t.map(|t| -t), kendall_tau(&x, &neg).unwrap());
        }

        #[test]
        fn pearson_affine_invariant(
            v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 3..40),
            a in 0.1f64..10.0, b in -100f64..100.0
        ) {
            let x: Vec<f64> = v.iter().map(|p| p.0).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1).collect();
            let r = pearson(&x, &y).unwrap().unwrap();
            let scaled: Vec<f64> = x.iter().map(|t| a * t + b).collect();
            prop_assert!((pearson(&scaled, &y).unwrap().unwrap() - r).abs() < 1e-9);
            prop_assert!(r.abs() <= 1.0);
        }
    }
}
