//! Nonnegative least squares by the Lawson–Hanson active-set method, posed on
//! the normal equations: minimize `½ wᵀ G w − bᵀ w` subject to `w ≥ 0`.

use nalgebra::{DMatrix, DVector};

fn solve_passive(gram: &DMatrix<f64>, rhs: &DVector<f64>, passive: &[usize]) -> DVector<f64> {
    let k = passive.len();
    let sub = DMatrix::from_fn(k, k, |i, j| gram[(passive[i], passive[j])]);
    let sub_rhs = DVector::from_fn(k, |i, _| rhs[passive[i]]);
    match sub.clone().cholesky() {
        Some(ch) => ch.solve(&sub_rhs),
        None => sub
            .svd(true, true)
            .solve(&sub_rhs, 1e-14)
            .unwrap_or_else(|_| DVector::zeros(k)),
    }
}

/// Solves `min ‖A w − x‖²` over `w ≥ 0` given `gram = AᵀA` and `rhs = Aᵀx`.
pub fn nnls_gram(gram: &DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let r = rhs.len();
    let mut w = DVector::zeros(r);
    let mut passive = vec![false; r];
    let scale = gram.amax().max(rhs.amax()).max(1e-300);
    let tol = 1e-12 * scale;
    let max_outer = 3 * r + 10;

    for _ in 0..max_outer {
        let grad = rhs - gram * &w;
        let entering = (0..r)
            .filter(|&j| !passive[j])
            .max_by(|&a, &b| grad[a].total_cmp(&grad[b]).then(b.cmp(&a)));
        let Some(j) = entering else { break };
        if grad[j] <= tol {
            break;
        }
        passive[j] = true;

        let mut first = true;
        for _ in 0..max_outer {
            let idx: Vec<usize> = (0..r).filter(|&i| passive[i]).collect();
            let sol = solve_passive(gram, rhs, &idx);
            let mut s = DVector::zeros(r);
            for (pos, &i) in idx.iter().enumerate() {
                s[i] = sol[pos];
            }
            if idx.iter().all(|&i| s[i] > 0.0) {
                w = s;
                break;
            }
            if first && s[j] <= 0.0 {
                // Numerically the entering variable cannot move; stop.
                passive[j] = false;
                return w;
            }
            first = false;
            let alpha = idx
                .iter()
                .filter(|&&i| s[i] <= 0.0)
                .map(|&i| w[i] / (w[i] - s[i]))
                .fold(f64::INFINITY, f64::min);
            w += (s - &w) * alpha;
            for &i in &idx {
                if w[i] <= tol * 1e-3 {
                    w[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    w
}
