use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum KappaError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("label sequences are empty")]
    EmptyInput,
}

/// Cohen's kappa for two raters. Returns 1 when chance agreement is 1.
pub fn cohen_kappa<L: Ord>(a: &[L], b: &[L]) -> Result<f64, KappaError> {
    if a.len() != b.len() {
        return Err(KappaError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(KappaError::EmptyInput);
    }
    let n = a.len() as f64;
    let mut marg: BTreeMap<&L, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        marg.entry(x).or_default().0 += 1;
        marg.entry(y).or_default().1 += 1;
        agree += usize::from(x == y);
    }
    let p_o = agree as f64 / n;
    let p_e: f64 = marg.values().map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n)).sum();
    if (1.0 - p_e).abs() < f64::EPSILON {
        return Ok(if p_o >= 1.0 { 1.0 } else { 0.0 });
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(cohen_kappa(&["x", "y", "x"], &["x", "y", "x"]).unwrap(), 1.0);
        assert!((cohen_kappa(&['x', 'x', 'y', 'y'], &['x', 'y', 'x', 'y']).unwrap() - 0.0).abs() < 1e-12);
        assert!((cohen_kappa(&['x', 'x', 'x', 'y'], &['x', 'x', 'y', 'y']).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(cohen_kappa(&[1, 1], &[1, 1]).unwrap(), 1.0);
        assert_eq!(cohen_kappa::<u8>(&[], &[]), Err(KappaError::EmptyInput));
        assert_eq!(cohen_kappa(&[1], &[1, 2]), Err(KappaError::LengthMismatch(1, 2)));
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded(pairs in proptest::collection::vec((0u8..5, 0u8..5), 1..60)) {
            let (a, b): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let k1 = cohen_kappa(&a, &b).unwrap();
            let k2 = cohen_kappa(&b, &a).unwrap();
            prop_assert!((k1 - k2).abs() < 1e-12);
            prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&k1));
            prop_assert!((cohen_kappa(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
