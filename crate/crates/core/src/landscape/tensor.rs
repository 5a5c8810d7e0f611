//! Dense contraction kernels for unsymmetrized order-p tensors.
//!
//! Tensors are flat row-major arrays of length `n^p`; the last index is the
//! fastest. For `f(x) = <W, x^{⊗p}>` the gradient is the sum of the `p`
//! single-slot contractions, obtained by peeling off the last slot:
//! `f = <V, x^{⊗(p-1)}>` with `V_I = sum_k W_{I k} x_k`, so
//! `∇f = ∇<V, x^{⊗(p-1)}> + sum_I W_{I ·} x^{⊗(p-1)}_I`.

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `x^{⊗q}` flattened row-major.
pub(crate) fn outer_power(x: &[f64], q: u32) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..q {
        let mut next = Vec::with_capacity(out.len() * x.len());
        for &a in &out {
            next.extend(x.iter().map(|&b| a * b));
        }
        out = next;
    }
    out
}

/// `x^{⊗q}` together with its directional derivative along `v`.
fn outer_power_tangent(x: &[f64], v: &[f64], q: u32) -> (Vec<f64>, Vec<f64>) {
    let mut p = vec![1.0];
    let mut dp = vec![0.0];
    for _ in 0..q {
        let mut np = Vec::with_capacity(p.len() * x.len());
        let mut ndp = Vec::with_capacity(p.len() * x.len());
        for (&a, &da) in p.iter().zip(&dp) {
            for (&b, &db) in x.iter().zip(v) {
                np.push(a * b);
                ndp.push(da * b + a * db);
            }
        }
        p = np;
        dp = ndp;
    }
    (p, dp)
}

/// `<W, x^{⊗p}>`.
pub(crate) fn contract_value(w: &[f64], x: &[f64], p: u32) -> f64 {
    let n = x.len();
    debug_assert_eq!(w.len(), n.pow(p));
    if p == 0 {
        return w[0];
    }
    let mut cur: Vec<f64> = w.chunks_exact(n).map(|row| dot(row, x)).collect();
    for _ in 1..p {
        cur = cur.chunks_exact(n).map(|row| dot(row, x)).collect();
    }
    cur[0]
}

/// `W[x, …, x, ·]`: contraction of all but the last slot.
pub(crate) fn contract_leading(w: &[f64], x: &[f64], p: u32) -> Vec<f64> {
    let n = x.len();
    debug_assert_eq!(w.len(), n.pow(p));
    let prefix = outer_power(x, p - 1);
    let mut out = vec![0.0; n];
    for (row, &pi) in w.chunks_exact(n).zip(&prefix) {
        axpy(&mut out, pi, row);
    }
    out
}

/// `<W, x^{⊗p}>` and its ambient gradient.
pub(crate) fn contract_grad(w: &[f64], x: &[f64], p: u32) -> (f64, Vec<f64>) {
    let n = x.len();
    debug_assert_eq!(w.len(), n.pow(p));
    match p {
        0 => (w[0], vec![0.0; n]),
        1 => (dot(w, x), w.to_vec()),
        _ => {
            let prefix = outer_power(x, p - 1);
            let mut reduced = Vec::with_capacity(prefix.len());
            let mut last = vec![0.0; n];
            for (row, &pi) in w.chunks_exact(n).zip(&prefix) {
                reduced.push(dot(row, x));
                axpy(&mut last, pi, row);
            }
            let (value, mut grad) = contract_grad(&reduced, x, p - 1);
            for (g, l) in grad.iter_mut().zip(&last) {
                *g += l;
            }
            (value, grad)
        }
    }
}

#[allow(dead_code)]
pub(crate) struct Jet {
    pub value: f64,
    pub dvalue: f64,
    pub grad: Vec<f64>,
    /// Hessian applied to the tangent direction.
    pub dgrad: Vec<f64>,
}

/// Value, gradient and their derivatives along `v` for `<W, x^{⊗p}>`,
/// where `W` itself may carry a tangent `dw` (used by the recursion).
pub(crate) fn contract_jet(w: &[f64], dw: Option<&[f64]>, x: &[f64], v: &[f64], p: u32) -> Jet {
    let n = x.len();
    match p {
        0 => Jet {
            value: w[0],
            dvalue: dw.map_or(0.0, |d| d[0]),
            grad: vec![0.0; n],
            dgrad: vec![0.0; n],
        },
        1 => Jet {
            value: dot(w, x),
            dvalue: dot(w, v) + dw.map_or(0.0, |d| dot(d, x)),
            grad: w.to_vec(),
            dgrad: dw.map_or_else(|| vec![0.0; n], |d| d.to_vec()),
        },
        _ => {
            let (prefix, dprefix) = outer_power_tangent(x, v, p - 1);
            let mut reduced = Vec::with_capacity(prefix.len());
            let mut dreduced = Vec::with_capacity(prefix.len());
            let mut last = vec![0.0; n];
            let mut dlast = vec![0.0; n];
            match dw {
                None => {
                    for ((row, &pi), &dpi) in w.chunks_exact(n).zip(&prefix).zip(&dprefix) {
                        reduced.push(dot(row, x));
                        dreduced.push(dot(row, v));
                        axpy(&mut last, pi, row);
                        axpy(&mut dlast, dpi, row);
                    }
                }
                Some(dw) => {
                    for (((row, drow), &pi), &dpi) in w.chunks_exact(n).zip(dw.chunks_exact(n)).zip(&prefix).zip(&dprefix) {
                        reduced.push(dot(row, x));
                        dreduced.push(dot(row, v) + dot(drow, x));
                        axpy(&mut last, pi, row);
                        axpy(&mut dlast, dpi, row);
                        axpy(&mut dlast, pi, drow);
                    }
                }
            }
            let mut jet = contract_jet(&reduced, Some(&dreduced), x, v, p - 1);
            for i in 0..n {
                jet.grad[i] += last[i];
                jet.dgrad[i] += dlast[i];
            }
            jet
        }
    }
}

/// Order-(p-2) tensor `Q` with `Δ <W, x^{⊗p}> = <Q, x^{⊗(p-2)}>` (ambient
/// Laplacian): the sum over ordered slot pairs of the pairwise traces.
pub(crate) fn pair_trace(w: &[f64], n: usize, p: u32) -> Vec<f64> {
    if p < 2 {
        return vec![0.0; 1];
    }
    let p = p as usize;
    let strides: Vec<usize> = (0..p).map(|s| n.pow((p - 1 - s) as u32)).collect();
    let rest = n.pow((p - 2) as u32);
    let mut out = vec![0.0; rest];
    for a in 0..p {
        for b in (a + 1)..p {
            let others: Vec<usize> = (0..p).filter(|&s| s != a && s != b).collect();
            let diag = strides[a] + strides[b];
            for (r, o) in out.iter_mut().enumerate() {
                // digits of r over the remaining slots, most significant first
                let mut base = 0usize;
                let mut rem = r;
                for (j, &slot) in others.iter().enumerate() {
                    let place = n.pow((others.len() - 1 - j) as u32);
                    base += (rem / place) * strides[slot];
                    rem %= place;
                }
                let mut s = 0.0;
                for i in 0..n {
                    s += w[base + i * diag];
                }
                *o += 2.0 * s;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_value(w: &[f64], x: &[f64], p: u32) -> f64 {
        let n = x.len();
        let mut total = 0.0;
        for (flat, &wv) in w.iter().enumerate() {
            let mut rem = flat;
            let mut prod = 1.0;
            for _ in 0..p {
                prod *= x[rem % n];
                rem /= n;
            }
            total += wv * prod;
        }
        total
    }

    fn sample(n: usize, p: u32, salt: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let mut state = salt;
        let mut next = || {
            state = crate::rng::splitmix64(state);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let w = (0..n.pow(p)).map(|_| next()).collect();
        let x = (0..n).map(|_| next()).collect();
        let v = (0..n).map(|_| next()).collect();
        (w, x, v)
    }

    #[test]
    fn value_matches_brute_force() {
        for p in 0..=4u32 {
            let (w, x, _) = sample(4, p, 11 + p as u64);
            let b = brute_value(&w, &x, p);
            assert!((contract_value(&w, &x, p) - b).abs() < 1e-12);
            assert!((contract_grad(&w, &x, p).0 - b).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_and_hvp_match_finite_differences() {
        for p in 1..=4u32 {
            let (w, x, v) = sample(5, p, 100 + p as u64);
            let (_, g) = contract_grad(&w, &x, p);
            let jet = contract_jet(&w, None, &x, &v, p);
            let h = 1e-6;
            for i in 0..x.len() {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[i] += h;
                xm[i] -= h;
                let fd = (brute_value(&w, &xp, p) - brute_value(&w, &xm, p)) / (2.0 * h);
                assert!((fd - g[i]).abs() < 1e-8, "p={p} i={i}");
                assert!((jet.grad[i] - g[i]).abs() < 1e-12);
            }
            let xp: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + h * b).collect();
            let xm: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a - h * b).collect();
            let gp = contract_grad(&w, &xp, p).1;
            let gm = contract_grad(&w, &xm, p).1;
            for i in 0..x.len() {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd - jet.dgrad[i]).abs() < 1e-7, "p={p} i={i}");
            }
            assert!((jet.dvalue - dot(&g, &v)).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_trace_gives_the_laplacian() {
        for p in 2..=4u32 {
            let n = 4;
            let (w, x, _) = sample(n, p, 300 + p as u64);
            let q = pair_trace(&w, n, p);
            let lap = contract_value(&q, &x, p - 2);
            // Laplacian by summing Hessian diagonals
            let mut diag = 0.0;
            for i in 0..n {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                diag += contract_jet(&w, None, &x, &e, p).dgrad[i];
            }
            assert!((lap - diag).abs() < 1e-10, "p={p}: {lap} vs {diag}");
        }
    }
}
