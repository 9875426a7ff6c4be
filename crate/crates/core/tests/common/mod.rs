//! Oracles shared by the integration tests.
#![allow(dead_code)]

/// Maximizes `sum_k log(K w_k)` over the simplex subject to
/// `sum_k w_k y_k = mu` by cyclic exchanges among triples of points. Each
/// exchange moves along the unique direction that keeps both constraints
/// and maximizes exactly on that line. Returns `-2 log R(mu)`.
pub fn el_simplex_oracle(y: &[f64], mu: f64) -> f64 {
    let k = y.len();
    let mut w = feasible_start(y, mu);
    let objective = |w: &[f64]| w.iter().map(|wi| (k as f64 * wi).ln()).sum::<f64>();
    let mut last = objective(&w);
    for _ in 0..200_000 {
        for a in 0..k {
            for b in a + 1..k {
                for c in b + 1..k {
                    exchange(&mut w, y, [a, b, c]);
                }
            }
        }
        let now = objective(&w);
        if now - last <= 1e-15 {
            break;
        }
        last = now;
    }
    -2.0 * objective(&w)
}

fn feasible_start(y: &[f64], mu: f64) -> Vec<f64> {
    let k = y.len();
    let (lo, hi) = y.iter().enumerate().fold((0, 0), |(lo, hi), (i, &v)| {
        (
            if v < y[lo] { i } else { lo },
            if v > y[hi] { i } else { hi },
        )
    });
    let mean = y.iter().sum::<f64>() / k as f64;
    let mut alpha = 0.5;
    loop {
        // alpha * uniform + (1 - alpha) * two-point law on the extremes.
        let target = (mu - alpha * mean) / (1.0 - alpha);
        if target > y[lo] && target < y[hi] {
            let t = (target - y[lo]) / (y[hi] - y[lo]);
            let mut w = vec![alpha / k as f64; k];
            w[lo] += (1.0 - alpha) * (1.0 - t);
            w[hi] += (1.0 - alpha) * t;
            return w;
        }
        alpha *= 0.5;
        assert!(alpha > 1e-12, "mu is not inside the hull");
    }
}

fn exchange(w: &mut [f64], y: &[f64], idx: [usize; 3]) {
    let [a, b, c] = idx;
    let d = [y[b] - y[c], y[c] - y[a], y[a] - y[b]];
    if d.iter().all(|v| *v == 0.0) {
        return;
    }
    let cur = [w[a], w[b], w[c]];
    // Feasible step interval keeping all three weights positive.
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    for i in 0..3 {
        if d[i] > 0.0 {
            lo = lo.max(-cur[i] / d[i]);
        } else if d[i] < 0.0 {
            hi = hi.min(-cur[i] / d[i]);
        }
    }
    let slope = |t: f64| (0..3).map(|i| d[i] / (cur[i] + t * d[i])).sum::<f64>();
    // The slope decreases from +inf at `lo` to -inf at `hi`.
    let (mut l, mut h) = (lo, hi);
    for _ in 0..200 {
        let mid = 0.5 * (l + h);
        if mid <= l || mid >= h {
            break;
        }
        if slope(mid) > 0.0 {
            l = mid;
        } else {
            h = mid;
        }
    }
    let t = 0.5 * (l + h);
    let next = [cur[0] + t * d[0], cur[1] + t * d[1], cur[2] + t * d[2]];
    if next.iter().all(|v| *v > 0.0) {
        let before: f64 = cur.iter().map(|v| v.ln()).sum();
        let after: f64 = next.iter().map(|v| v.ln()).sum();
        if after >= before {
            w[a] = next[0];
            w[b] = next[1];
            w[c] = next[2];
        }
    }
}

/// Dense grid over the one-dimensional feasible segment of a three-point
/// problem, with step `step` in the free weight. Returns `-2 log R(mu)`.
pub fn el_grid_three(y: [f64; 3], mu: f64, step: f64) -> f64 {
    // Parametrize by w0; w1, w2 follow from the two constraints.
    let det = y[2] - y[1];
    let mut best = f64::NEG_INFINITY;
    let steps = (1.0 / step) as usize;
    for s in 1..steps {
        let w0 = s as f64 * step;
        let w2 = (mu - w0 * y[0] - (1.0 - w0) * y[1]) / det;
        let w1 = 1.0 - w0 - w2;
        if w1 > 0.0 && w2 > 0.0 {
            best = best.max((3.0 * w0).ln() + (3.0 * w1).ln() + (3.0 * w2).ln());
        }
    }
    -2.0 * best
}
