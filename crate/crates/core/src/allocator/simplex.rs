use crate::error::{Error, Result};

/// Euclidean projection of `v` onto `{x ≥ 0, Σx = total}`.
///
/// Sort-based: find the largest `k` with `u_k > (Σ_{j≤k} u_j − total)/k` over the
/// descending sort `u`, then shift by that threshold and clip at zero.
pub fn project_simplex(v: &[f64], total: f64) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::InvalidInput("cannot project an empty vector".into()));
    }
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::InvalidInput(format!("simplex total must be > 0, got {total}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("cannot project non-finite vector".into()));
    }
    Ok(project_simplex_unchecked(v, total))
}

pub(crate) fn project_simplex_unchecked(v: &[f64], total: f64) -> Vec<f64> {
    let mut u = v.to_vec();
    u.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &uk) in u.iter().enumerate() {
        cumsum += uk;
        let t = (cumsum - total) / (k + 1) as f64;
        if uk - t > 0.0 {
            tau = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - tau).max(0.0)).collect();
    // Rounding can leave the sum a few ulps off; push the slack onto the
    // largest entry, which is strictly positive.
    let sum: f64 = out.iter().sum();
    let (imax, _) = out
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |best, (i, &x)| if x > best.1 { (i, x) } else { best });
    out[imax] += total - sum;
    if out[imax] < 0.0 {
        out[imax] = 0.0;
    }
    out
}
