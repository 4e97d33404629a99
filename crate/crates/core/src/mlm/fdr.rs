/// Benjamini–Hochberg adjusted p-values: `q₍ₖ₎ = min_{j≥k} p₍ⱼ₎·n/j`, capped
/// at 1, returned in input order.
pub fn bh_q_values(p_values: &[f64]) -> Vec<f64> {
    let n = p_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut q = vec![0.0; n];
    let mut running = 1.0_f64;
    for (rank, &i) in order.iter().enumerate().rev() {
        running = running.min(p_values[i] * (n as f64 / (rank + 1) as f64));
        q[i] = running;
    }
    q
}

/// Step-up rule: with sorted p-values, reject the `k` smallest where `k` is
/// the largest rank with `p₍ₖ₎ ≤ k·level/n`.
pub fn bh_reject(p_values: &[f64], level: f64) -> Vec<bool> {
    let n = p_values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let k = (1..=n)
        .rev()
        .find(|&k| p_values[order[k - 1]] <= k as f64 * level / n as f64)
        .unwrap_or(0);
    let mut reject = vec![false; n];
    for &i in &order[..k] {
        reject[i] = true;
    }
    reject
}

/// q-values and rejection flags at FDR level `level`.
pub fn benjamini_hochberg(p_values: &[f64], level: f64) -> (Vec<f64>, Vec<bool>) {
    (bh_q_values(p_values), bh_reject(p_values, level))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_example() {
        let (q, r) = benjamini_hochberg(&[0.01, 0.02, 0.04, 0.8], 0.05);
        assert_eq!(r, vec![true, true, false, false]);
        let expected = [0.04, 0.04, 0.04 * 4.0 / 3.0, 0.8];
        for (a, b) in q.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn trivial_cases() {
        let (q, r) = benjamini_hochberg(&[1.0, 1.0, 1.0], 0.05);
        assert_eq!(q, vec![1.0; 3]);
        assert_eq!(r, vec![false; 3]);
        let (q, r) = benjamini_hochberg(&[0.001], 0.05);
        assert_eq!(q, vec![0.001]);
        assert_eq!(r, vec![true]);
        assert!(benjamini_hochberg(&[], 0.05).0.is_empty());
    }

    proptest! {
        #[test]
        fn q_values_monotone_in_p_order(p in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let q = bh_q_values(&p);
            let mut idx: Vec<usize> = (0..p.len()).collect();
            idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
            for w in idx.windows(2) {
                prop_assert!(q[w[0]] <= q[w[1]]);
            }
            for (&qi, &pi) in q.iter().zip(&p) {
                prop_assert!(qi >= pi && qi <= 1.0);
            }
        }
    }
}
