/// Euclidean projection of a vector onto the probability simplex, in place.
///
/// Sort-based thresholding: find the largest prefix of the descending sort
/// whose shifted average keeps every kept coordinate positive, then clip.
pub fn project_row_simplex(x: &mut [f64]) {
    let n = x.len();
    debug_assert!(n > 0);
    let mut sorted = x.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    let mut kept = 0;
    for (k, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (k as f64 + 1.0);
        if v - t > 0.0 {
            threshold = t;
            kept = k + 1;
        }
    }
    debug_assert!(kept > 0);
    for v in x.iter_mut() {
        *v = (*v - threshold).max(0.0);
    }
    // tidy the roundoff so downstream row-sum checks hold exactly enough
    let sum: f64 = x.iter().sum();
    if sum > 0.0 {
        for v in x.iter_mut() {
            *v /= sum;
        }
    } else {
        x[0] = 1.0;
    }
}
