use super::GnnError;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy over `nodes` in logit form, and its gradient
/// w.r.t. every logit (zero outside `nodes`).
pub fn bce_loss(logits: &[f64], labels: &[f64], nodes: &[usize]) -> Result<(f64, Vec<f64>), GnnError> {
    if nodes.is_empty() {
        return Err(GnnError::EmptyNodeSet);
    }
    let n = nodes.len() as f64;
    let mut grad = vec![0.0; logits.len()];
    let mut total = 0.0;
    for &i in nodes {
        let (z, y) = (logits[i], labels[i]);
        total += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        grad[i] += (sigmoid(z) - y) / n;
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let (l, _) = bce_loss(&[20.0], &[1.0], &[0]).unwrap();
        assert!((l - 2.061_153_6e-9).abs() < 1e-15);
        let (l, g) = bce_loss(&[0.0, 0.0], &[1.0, 0.0], &[0, 1]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![-0.25, 0.25]);
        assert!(bce_loss(&[0.0], &[1.0], &[]).is_err());
    }

    #[test]
    fn order_invariant_and_extreme_logits() {
        let z = [3.0, -2.0, 0.5, 800.0, -800.0];
        let y = [1.0, 0.0, 0.0, 1.0, 1.0];
        let (a, _) = bce_loss(&z, &y, &[0, 1, 2, 3, 4]).unwrap();
        let (b, _) = bce_loss(&z, &y, &[4, 2, 0, 3, 1]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(a.is_finite());
        assert!((sigmoid(-800.0)).abs() < 1e-300 && sigmoid(800.0) == 1.0);
    }

    #[test]
    fn gradient_matches_differences() {
        let z = [0.3, -1.2, 2.0];
        let y = [1.0, 0.0, 0.0];
        let nodes = [0, 2];
        let (_, g) = bce_loss(&z, &y, &nodes).unwrap();
        for i in 0..3 {
            let mut p = z;
            let mut m = z;
            p[i] += 1e-6;
            m[i] -= 1e-6;
            let fd = (bce_loss(&p, &y, &nodes).unwrap().0 - bce_loss(&m, &y, &nodes).unwrap().0) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }
}
