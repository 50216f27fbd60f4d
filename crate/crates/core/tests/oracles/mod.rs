//! Straight-line reference implementations used as test oracles.
//!
//! These deliberately avoid the library's code paths: the extraction oracles
//! are written as naive column loops over the raw bits (including zero
//! initialisation), Otsu recomputes every candidate threshold from raw pixels
//! and soft-DTW enumerates alignment paths explicitly.

#![allow(dead_code)]

/// Column-major view over a row-major 0/1 matrix where 0 is ink.
pub struct Matrix<'a> {
    pub n: usize,
    pub m: usize,
    pub bits: &'a [u8],
}

impl Matrix<'_> {
    fn lit(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.m + col] == 0
    }

    fn lit_pixels_positions(&self, col: usize) -> Vec<usize> {
        let mut out = Vec::new();
        for row in 0..self.n {
            if self.lit(row, col) {
                out.push(row);
            }
        }
        out
    }
}

fn mean(v: &[usize]) -> f64 {
    let mut s = 0usize;
    for x in v {
        s += x;
    }
    s as f64 / v.len() as f64
}

/// Full extraction: `V[j] = mean(lit_pixels)`, untouched (zero) for empty columns.
pub fn full(mat: &Matrix) -> Vec<f64> {
    let mut v = vec![0.0; mat.m];
    for j in 0..mat.m {
        let lit_pixels = mat.lit_pixels_positions(j);
        if lit_pixels.is_empty() {
            continue;
        }
        v[j] = mean(&lit_pixels);
    }
    v
}

/// Fragmented extraction with the `it = lit[-1]` style negative indexing made explicit.
pub fn fragmented(mat: &Matrix) -> Vec<f64> {
    let mut v = vec![0.0; mat.m];
    for j in 0..mat.m {
        let lit_pixels = mat.lit_pixels_positions(j);
        let mut group_of_pixels = Vec::new();
        if lit_pixels.is_empty() {
            continue;
        }
        let len = lit_pixels.len() as isize;
        let at = |l: isize| -> Option<usize> { (l >= -len).then(|| lit_pixels[(len + l) as usize]) };
        let mut it = lit_pixels[lit_pixels.len() - 1] as isize;
        let mut l: isize = -1;
        while at(l).is_some_and(|p| p as isize == it) {
            group_of_pixels.push(at(l).unwrap());
            it -= 1;
            l -= 1;
        }
        v[j] = mean(&group_of_pixels);
    }
    v
}

/// Lazy extraction. The anchor indexes rows through its integer part; the
/// `a_point + i <= n` probe bound is read as staying inside the matrix.
pub fn lazy(mat: &Matrix) -> Vec<f64> {
    let (n, m) = (mat.n, mat.m);
    let mut v = vec![0.0; m];
    let lit_pixels = mat.lit_pixels_positions(0);
    let mut a_point = if lit_pixels.is_empty() { n as f64 / 2.0 } else { mean(&lit_pixels) };
    v[0] = a_point;
    for j in 1..m {
        let a = a_point.floor() as isize;
        let exists = |row: isize| row >= 0 && (row as usize) < n && mat.lit(row as usize, j);
        if exists(a) {
            v[j] = a_point;
        } else {
            let mut new_a_point = a_point;
            for i in 0..n as isize {
                if a + i < n as isize && exists(a + i) {
                    new_a_point = (a + i) as f64;
                    break;
                } else if a - i >= 0 && exists(a - i) {
                    new_a_point = (a - i) as f64;
                    break;
                }
            }
            a_point = new_a_point;
            v[j] = a_point;
        }
    }
    v
}

/// Otsu by exhaustive search: for each `t`, split the raw pixels into
/// `v <= t` and `v > t` and evaluate `w0 * w1 * (mu0 - mu1)^2` as the exact
/// rational `(N*S0 - S*N0)^2 / (N^2 * N0 * N1)`. First maximum wins.
pub fn otsu(pixels: &[u8]) -> u8 {
    let total = pixels.len() as u128;
    let sum: u128 = pixels.iter().map(|&p| p as u128).sum();
    let mut best: Option<(u128, u128)> = None;
    let mut best_t = 0u8;
    for t in 0..=255u8 {
        let (mut n0, mut s0) = (0u128, 0u128);
        for &p in pixels {
            if p <= t {
                n0 += 1;
                s0 += p as u128;
            }
        }
        let n1 = total - n0;
        if n0 == 0 || n1 == 0 {
            continue;
        }
        let d = (total * s0).abs_diff(sum * n0);
        let (num, den) = (d * d, n0 * n1);
        let better = match best {
            None => num > 0,
            Some((bn, bd)) => num * bd > bn * den,
        };
        if better {
            best = Some((num, den));
            best_t = t;
        }
    }
    best_t
}

/// Every monotone alignment path from `(0,0)` to `(n-1,m-1)` with unit steps.
pub fn alignment_paths(n: usize, m: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(i: usize, j: usize, n: usize, m: usize, path: &mut Vec<(usize, usize)>, out: &mut Vec<Vec<(usize, usize)>>) {
        path.push((i, j));
        if i == n - 1 && j == m - 1 {
            out.push(path.clone());
        } else {
            if i + 1 < n {
                walk(i + 1, j, n, m, path, out);
            }
            if j + 1 < m {
                walk(i, j + 1, n, m, path, out);
            }
            if i + 1 < n && j + 1 < m {
                walk(i + 1, j + 1, n, m, path, out);
            }
        }
        path.pop();
    }
    let mut out = Vec::new();
    walk(0, 0, n, m, &mut Vec::new(), &mut out);
    out
}

/// Soft minimum over explicit paths: `-gamma * ln(sum(exp(-cost / gamma)))`.
pub fn sdtw_paths(a: &[f64], b: &[f64], paths: &[Vec<(usize, usize)>], gamma: f64) -> f64 {
    let costs: Vec<f64> = paths
        .iter()
        .map(|p| p.iter().map(|&(i, j)| (a[i] - b[j]).powi(2)).sum())
        .collect();
    let lo = costs.iter().cloned().fold(f64::INFINITY, f64::min);
    let s: f64 = costs.iter().map(|c| (-(c - lo) / gamma).exp()).sum();
    lo - gamma * s.ln()
}

pub fn sdtw(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    sdtw_paths(a, b, &alignment_paths(a.len(), b.len()), gamma)
}

/// Pearson correlation computed in two passes.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va.sqrt() * vb.sqrt())
}

/// Every signal of length `1..=max_len` over `alphabet`.
pub fn all_signals(alphabet: &[f64], max_len: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut level: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..max_len {
        level = level
            .iter()
            .flat_map(|s| {
                alphabet.iter().map(move |&v| {
                    let mut t = s.clone();
                    t.push(v);
                    t
                })
            })
            .collect();
        out.extend(level.iter().cloned());
    }
    out
}
