//! Flat-slice forward kernels and their vector-Jacobian products.
//!
//! Layouts: 1-D signals are `[position][channel]`, images are
//! `[row][col][channel]`, conv1d weights are `[out][in][tap]`, conv2d
//! weights are `[out][ky][kx][in]`, dense weights are `[out][in]`.

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv1dShape {
    pub len: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv1dShape {
    pub fn out_len(&self) -> usize {
        (self.len - self.kernel) / self.stride + 1
    }
}

pub(crate) fn conv1d(s: Conv1dShape, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let out_len = s.out_len();
    let mut out = Vec::with_capacity(out_len * s.out_ch);
    for p in 0..out_len {
        let start = p * s.stride;
        for j in 0..s.out_ch {
            let w = &weight[j * s.in_ch * s.kernel..(j + 1) * s.in_ch * s.kernel];
            let mut acc = bias[j];
            for l in 0..s.kernel {
                let x = &input[(start + l) * s.in_ch..(start + l + 1) * s.in_ch];
                for (ci, &xv) in x.iter().enumerate() {
                    acc += w[ci * s.kernel + l] * xv;
                }
            }
            out.push(acc);
        }
    }
    out
}

/// Accumulates gradients of a conv1d into the three output buffers.
pub(crate) fn conv1d_backward(
    s: Conv1dShape,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_in: Option<&mut [f64]>,
    grad_w: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) {
    let out_len = s.out_len();
    if let Some(gb) = grad_b {
        for p in 0..out_len {
            for j in 0..s.out_ch {
                gb[j] += grad_out[p * s.out_ch + j];
            }
        }
    }
    if let Some(gw) = grad_w {
        for p in 0..out_len {
            let start = p * s.stride;
            for j in 0..s.out_ch {
                let g = grad_out[p * s.out_ch + j];
                if g == 0.0 {
                    continue;
                }
                for l in 0..s.kernel {
                    for ci in 0..s.in_ch {
                        gw[(j * s.in_ch + ci) * s.kernel + l] += g * input[(start + l) * s.in_ch + ci];
                    }
                }
            }
        }
    }
    if let Some(gi) = grad_in {
        for p in 0..out_len {
            let start = p * s.stride;
            for j in 0..s.out_ch {
                let g = grad_out[p * s.out_ch + j];
                if g == 0.0 {
                    continue;
                }
                for l in 0..s.kernel {
                    for ci in 0..s.in_ch {
                        gi[(start + l) * s.in_ch + ci] += g * weight[(j * s.in_ch + ci) * s.kernel + l];
                    }
                }
            }
        }
    }
}

pub(crate) fn dense(input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = input.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            let row = &weight[o * n_in..(o + 1) * n_in];
            b + row.iter().zip(input).map(|(w, x)| w * x).sum::<f64>()
        })
        .collect()
}

pub(crate) fn dense_backward(
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_in: Option<&mut [f64]>,
    grad_w: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) {
    let n_in = input.len();
    if let Some(gb) = grad_b {
        for (g, &go) in gb.iter_mut().zip(grad_out) {
            *g += go;
        }
    }
    if let Some(gw) = grad_w {
        for (o, &go) in grad_out.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            for (g, &x) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                *g += go * x;
            }
        }
    }
    if let Some(gi) = grad_in {
        for (o, &go) in grad_out.iter().enumerate() {
            if go == 0.0 {
                continue;
            }
            for (g, &w) in gi.iter_mut().zip(&weight[o * n_in..(o + 1) * n_in]) {
                *g += go * w;
            }
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Conv2dShape {
    pub height: usize,
    pub width: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl Conv2dShape {
    pub fn out_hw(&self) -> (usize, usize) {
        (
            (self.height - self.kernel) / self.stride + 1,
            (self.width - self.kernel) / self.stride + 1,
        )
    }
}

/// Valid cross-correlation.
pub(crate) fn conv2d(s: Conv2dShape, input: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let (oh, ow) = s.out_hw();
    let k = s.kernel;
    let row_len = k * s.in_ch;
    let mut out = Vec::with_capacity(oh * ow * s.out_ch);
    for oy in 0..oh {
        for ox in 0..ow {
            for (f, &b) in bias.iter().enumerate().take(s.out_ch) {
                let mut acc = b;
                for ky in 0..k {
                    let iy = oy * s.stride + ky;
                    let x0 = (iy * s.width + ox * s.stride) * s.in_ch;
                    let x = &input[x0..x0 + row_len];
                    let w0 = (f * k + ky) * row_len;
                    let w = &weight[w0..w0 + row_len];
                    acc += w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
                out.push(acc);
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward(
    s: Conv2dShape,
    input: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    mut grad_in: Option<&mut [f64]>,
    mut grad_w: Option<&mut [f64]>,
    mut grad_b: Option<&mut [f64]>,
) {
    let (oh, ow) = s.out_hw();
    let k = s.kernel;
    let row_len = k * s.in_ch;
    for oy in 0..oh {
        for ox in 0..ow {
            for f in 0..s.out_ch {
                let g = grad_out[(oy * ow + ox) * s.out_ch + f];
                if g == 0.0 {
                    continue;
                }
                if let Some(gb) = grad_b.as_deref_mut() {
                    gb[f] += g;
                }
                for ky in 0..k {
                    let iy = oy * s.stride + ky;
                    let x0 = (iy * s.width + ox * s.stride) * s.in_ch;
                    let w0 = (f * k + ky) * row_len;
                    if let Some(gw) = grad_w.as_deref_mut() {
                        for (gwv, &xv) in gw[w0..w0 + row_len]
                            .iter_mut()
                            .zip(&input[x0..x0 + row_len])
                        {
                            *gwv += g * xv;
                        }
                    }
                    if let Some(gi) = grad_in.as_deref_mut() {
                        for (giv, &wv) in gi[x0..x0 + row_len]
                            .iter_mut()
                            .zip(&weight[w0..w0 + row_len])
                        {
                            *giv += g * wv;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn relu(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| v.max(0.0)).collect()
}

/// Gradient through relu; the kink at 0 takes the zero side.
pub(crate) fn relu_backward(x: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
    for ((g, &xv), &go) in grad_in.iter_mut().zip(x).zip(grad_out) {
        if xv > 0.0 {
            *g += go;
        }
    }
}

/// Norm-compressing squash applied to each consecutive `dim`-sized group.
pub(crate) fn squash_groups(x: &[f64], dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for u in x.chunks_exact(dim) {
        let sq: f64 = u.iter().map(|v| v * v).sum();
        if sq == 0.0 {
            out.extend(std::iter::repeat_n(0.0, dim));
            continue;
        }
        let norm = sq.sqrt();
        let den = 1.0 + sq;
        // multiplying before dividing keeps |u| = 1 and |u| = 3 exact
        out.extend(u.iter().map(|v| v * norm / den));
    }
    out
}

pub(crate) fn squash_groups_backward(x: &[f64], dim: usize, grad_out: &[f64], grad_in: &mut [f64]) {
    for ((u, go), gi) in x
        .chunks_exact(dim)
        .zip(grad_out.chunks_exact(dim))
        .zip(grad_in.chunks_exact_mut(dim))
    {
        let sq: f64 = u.iter().map(|v| v * v).sum();
        if sq == 0.0 {
            continue;
        }
        let r = sq.sqrt();
        let f = r / (1.0 + sq);
        // d/dr [r / (1 + r^2)] = (1 - r^2) / (1 + r^2)^2
        let df = (1.0 - sq) / ((1.0 + sq) * (1.0 + sq));
        let ug: f64 = u.iter().zip(go).map(|(a, b)| a * b).sum();
        let coeff = df / r * ug;
        for ((g, &gov), &uv) in gi.iter_mut().zip(go).zip(u) {
            *g += f * gov + coeff * uv;
        }
    }
}

pub(crate) fn group_norms(x: &[f64], dim: usize) -> Vec<f64> {
    x.chunks_exact(dim)
        .map(|u| u.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect()
}

pub(crate) fn group_norms_backward(x: &[f64], dim: usize, norms: &[f64], grad_out: &[f64], grad_in: &mut [f64]) {
    for (((u, &n), &go), gi) in x
        .chunks_exact(dim)
        .zip(norms)
        .zip(grad_out)
        .zip(grad_in.chunks_exact_mut(dim))
    {
        if n == 0.0 {
            continue;
        }
        for (g, &uv) in gi.iter_mut().zip(u) {
            *g += go * uv / n;
        }
    }
}

/// Row-wise softmax of a `rows x cols` matrix.
pub(crate) fn softmax_rows(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks_exact(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        out.extend(exps.iter().map(|e| e / total));
    }
    out
}

pub(crate) fn softmax_rows_backward(y: &[f64], cols: usize, grad_out: &[f64], grad_in: &mut [f64]) {
    for ((yr, gr), gi) in y
        .chunks_exact(cols)
        .zip(grad_out.chunks_exact(cols))
        .zip(grad_in.chunks_exact_mut(cols))
    {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((g, &yv), &gv) in gi.iter_mut().zip(yr).zip(gr) {
            *g += yv * (gv - dot);
        }
    }
}

/// Normalized difference over all unordered pairs `i < j`, lexicographic.
pub(crate) fn binary_index(x: &[f64], eps: f64) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            out.push(normalized_difference(x[i], x[j], eps).0);
        }
    }
    out
}

/// Returns the clamped value and whether the clamp was inactive.
#[inline]
pub(crate) fn normalized_difference(a: f64, b: f64, eps: f64) -> (f64, bool) {
    let d = a + b;
    let guarded = d + eps.copysign(if d == 0.0 { 1.0 } else { d });
    let raw = (a - b) / guarded;
    if raw > 1.0 {
        (1.0, false)
    } else if raw < -1.0 {
        (-1.0, false)
    } else {
        (raw, true)
    }
}

pub(crate) fn binary_index_backward(x: &[f64], eps: f64, grad_out: &[f64], grad_in: &mut [f64]) {
    let n = x.len();
    let mut k = 0;
    for i in 0..n {
        for j in i + 1..n {
            let g = grad_out[k];
            k += 1;
            if g == 0.0 {
                continue;
            }
            let (a, b) = (x[i], x[j]);
            let (_, active) = normalized_difference(a, b, eps);
            if !active {
                continue;
            }
            let d = a + b;
            let den = d + eps.copysign(if d == 0.0 { 1.0 } else { d });
            let num = a - b;
            let den2 = den * den;
            grad_in[i] += g * (den - num) / den2;
            grad_in[j] += g * (-den - num) / den2;
        }
    }
}

/// Signed triangle area for each `(i, j, h)` triple, `i < j < h`.
pub(crate) fn triangular_index(x: &[f64], triples: &[[u32; 3]]) -> Vec<f64> {
    triples
        .iter()
        .map(|&[i, j, h]| {
            let (i, j, h) = (i as usize, j as usize, h as usize);
            let dj = j.abs_diff(h) as f64;
            let di = i.abs_diff(h) as f64;
            (dj * (x[i] - x[h]) - di * (x[j] - x[h])) / 2.0
        })
        .collect()
}

pub(crate) fn triangular_index_backward(triples: &[[u32; 3]], grad_out: &[f64], grad_in: &mut [f64]) {
    for (&[i, j, h], &g) in triples.iter().zip(grad_out) {
        let (i, j, h) = (i as usize, j as usize, h as usize);
        let dj = j.abs_diff(h) as f64;
        let di = i.abs_diff(h) as f64;
        grad_in[i] += g * dj / 2.0;
        grad_in[j] -= g * di / 2.0;
        grad_in[h] += g * (di - dj) / 2.0;
    }
}

/// All lexicographic triples of `0..n`.
pub(crate) fn all_triples(n: usize) -> Vec<[u32; 3]> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            for h in j + 1..n {
                out.push([i as u32, j as u32, h as u32]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CapsShape {
    /// primary capsules
    pub m: usize,
    /// classes
    pub n: usize,
    /// class capsule dim
    pub d: usize,
    /// primary capsule dim
    pub k: usize,
}

/// `u_hat[m][n][:] = W[m][n] · pose[m] + B[n]`, W stored `[m][n][d][k]`.
pub(crate) fn class_predict(s: CapsShape, poses: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.m * s.n * s.d);
    for m in 0..s.m {
        let u = &poses[m * s.k..(m + 1) * s.k];
        for n in 0..s.n {
            for d in 0..s.d {
                let w0 = ((m * s.n + n) * s.d + d) * s.k;
                let row = &w[w0..w0 + s.k];
                out.push(b[n * s.d + d] + row.iter().zip(u).map(|(a, c)| a * c).sum::<f64>());
            }
        }
    }
    out
}

pub(crate) fn class_predict_backward(
    s: CapsShape,
    poses: &[f64],
    w: &[f64],
    grad_out: &[f64],
    mut grad_poses: Option<&mut [f64]>,
    mut grad_w: Option<&mut [f64]>,
    mut grad_b: Option<&mut [f64]>,
) {
    for m in 0..s.m {
        for n in 0..s.n {
            for d in 0..s.d {
                let g = grad_out[(m * s.n + n) * s.d + d];
                if g == 0.0 {
                    continue;
                }
                if let Some(gb) = grad_b.as_deref_mut() {
                    gb[n * s.d + d] += g;
                }
                let w0 = ((m * s.n + n) * s.d + d) * s.k;
                if let Some(gw) = grad_w.as_deref_mut() {
                    for kk in 0..s.k {
                        gw[w0 + kk] += g * poses[m * s.k + kk];
                    }
                }
                if let Some(gp) = grad_poses.as_deref_mut() {
                    for kk in 0..s.k {
                        gp[m * s.k + kk] += g * w[w0 + kk];
                    }
                }
            }
        }
    }
}

/// `s[n][:] = sum_m c[m][n] * u_hat[m][n][:]`.
pub(crate) fn weighted_sum(s: CapsShape, c: &[f64], u_hat: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; s.n * s.d];
    for m in 0..s.m {
        for n in 0..s.n {
            let cmn = c[m * s.n + n];
            let u = &u_hat[(m * s.n + n) * s.d..(m * s.n + n + 1) * s.d];
            for (o, &uv) in out[n * s.d..(n + 1) * s.d].iter_mut().zip(u) {
                *o += cmn * uv;
            }
        }
    }
    out
}

pub(crate) fn weighted_sum_backward(
    s: CapsShape,
    c: &[f64],
    u_hat: &[f64],
    grad_out: &[f64],
    mut grad_c: Option<&mut [f64]>,
    mut grad_u: Option<&mut [f64]>,
) {
    for m in 0..s.m {
        for n in 0..s.n {
            let base = (m * s.n + n) * s.d;
            let go = &grad_out[n * s.d..(n + 1) * s.d];
            if let Some(gc) = grad_c.as_deref_mut() {
                gc[m * s.n + n] += go.iter().zip(&u_hat[base..base + s.d]).map(|(a, b)| a * b).sum::<f64>();
            }
            if let Some(gu) = grad_u.as_deref_mut() {
                let cmn = c[m * s.n + n];
                for (g, &gov) in gu[base..base + s.d].iter_mut().zip(go) {
                    *g += cmn * gov;
                }
            }
        }
    }
}

/// `a[m][n] = v[n] · u_hat[m][n]`.
pub(crate) fn agreement(s: CapsShape, v: &[f64], u_hat: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(s.m * s.n);
    for m in 0..s.m {
        for n in 0..s.n {
            let base = (m * s.n + n) * s.d;
            out.push(
                v[n * s.d..(n + 1) * s.d]
                    .iter()
                    .zip(&u_hat[base..base + s.d])
                    .map(|(a, b)| a * b)
                    .sum(),
            );
        }
    }
    out
}

pub(crate) fn agreement_backward(
    s: CapsShape,
    v: &[f64],
    u_hat: &[f64],
    grad_out: &[f64],
    mut grad_v: Option<&mut [f64]>,
    mut grad_u: Option<&mut [f64]>,
) {
    for m in 0..s.m {
        for n in 0..s.n {
            let g = grad_out[m * s.n + n];
            if g == 0.0 {
                continue;
            }
            let base = (m * s.n + n) * s.d;
            if let Some(gv) = grad_v.as_deref_mut() {
                for (gvv, &uv) in gv[n * s.d..(n + 1) * s.d].iter_mut().zip(&u_hat[base..base + s.d]) {
                    *gvv += g * uv;
                }
            }
            if let Some(gu) = grad_u.as_deref_mut() {
                for (guv, &vv) in gu[base..base + s.d].iter_mut().zip(&v[n * s.d..(n + 1) * s.d]) {
                    *guv += g * vv;
                }
            }
        }
    }
}
