//! Row-major array plumbing: axis permutations and contiguous row operations.

/// Reorders a row-major array so that output dimension `k` is input dimension `perm[k]`.
pub fn permute(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    if perm.iter().enumerate().all(|(k, &p)| k == p) {
        return data.to_vec();
    }
    let index = permutation_index(shape, perm);
    index.iter().map(|&i| data[i]).collect()
}

/// Inverse of [`permute`] with the same `shape` and `perm`.
pub fn unpermute(data: &[f64], shape: &[usize], perm: &[usize]) -> Vec<f64> {
    if perm.iter().enumerate().all(|(k, &p)| k == p) {
        return data.to_vec();
    }
    let index = permutation_index(shape, perm);
    let mut out = vec![0.0; data.len()];
    for (o, &i) in index.iter().enumerate() {
        out[i] = data[o];
    }
    out
}

/// For each output position of `permute`, the input offset it reads.
pub fn permutation_index(shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let nd = shape.len();
    let mut in_strides = vec![1usize; nd];
    for k in (0..nd.saturating_sub(1)).rev() {
        in_strides[k] = in_strides[k + 1] * shape[k + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let total: usize = shape.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut counter = vec![0usize; nd];
    let mut offset = 0usize;
    for _ in 0..total {
        out.push(offset);
        for k in (0..nd).rev() {
            counter[k] += 1;
            offset += strides[k];
            if counter[k] < out_shape[k] {
                break;
            }
            offset -= strides[k] * out_shape[k];
            counter[k] = 0;
        }
    }
    out
}

/// Moves the dimensions listed in `front` to the front, keeping the rest in order.
pub fn front_perm(ndim: usize, front: &[usize]) -> Vec<usize> {
    let mut perm = front.to_vec();
    perm.extend((0..ndim).filter(|k| !front.contains(k)));
    perm
}

pub fn sum_rows(data: &[f64], row_len: usize, rows: std::ops::Range<usize>) -> Vec<f64> {
    let mut acc = vec![0.0; row_len];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(&data[r * row_len..(r + 1) * row_len]) {
            *a += v;
        }
    }
    acc
}

pub fn add_to_rows(data: &mut [f64], row_len: usize, rows: std::ops::Range<usize>, v: &[f64], scale: f64) {
    for r in rows {
        for (a, x) in data[r * row_len..(r + 1) * row_len].iter_mut().zip(v) {
            *a += scale * x;
        }
    }
}

/// Martingale block of relative depth `depth` over a contiguous run of rows
/// covering one cube; `branch` is the number of children per cube (`2^n`).
pub fn block_rows(src: &[f64], row_len: usize, branch: usize, depth: u32) -> Vec<f64> {
    let rows = src.len() / row_len;
    let desc = rows / branch.pow(depth);
    let child = desc / branch;
    assert!(child >= 1, "block depth exceeds the local resolution");
    let mut out = vec![0.0; src.len()];
    let mut tmp = vec![0.0; row_len];
    for d in 0..branch.pow(depth) {
        let base = d * desc;
        let parent = sum_rows(src, row_len, base..base + desc);
        for c in 0..branch {
            let lo = base + c * child;
            let avg = sum_rows(src, row_len, lo..lo + child);
            for ((t, a), p) in tmp.iter_mut().zip(&avg).zip(&parent) {
                *t = a / child as f64 - p / desc as f64;
            }
            for r in lo..lo + child {
                out[r * row_len..(r + 1) * row_len].copy_from_slice(&tmp);
            }
        }
    }
    out
}

/// `sum over the box of prod_t w_t(x_t) * row(x)`, where the leading dimensions
/// of `data` are `cells` and each cell holds a row of `row_len` values.
pub fn separable_pair(data: &[f64], cells: &[usize], row_len: usize, weights: &[Vec<(usize, f64)>]) -> Vec<f64> {
    let mut acc = vec![0.0; row_len];
    visit_box(cells, weights, |off, w| {
        for (a, v) in acc.iter_mut().zip(&data[off * row_len..(off + 1) * row_len]) {
            *a += w * v;
        }
    });
    acc
}

/// `row(x) += prod_t w_t(x_t) * v` over the box.
pub fn separable_add(out: &mut [f64], cells: &[usize], row_len: usize, weights: &[Vec<(usize, f64)>], v: &[f64]) {
    visit_box(cells, weights, |off, w| {
        for (a, x) in out[off * row_len..(off + 1) * row_len].iter_mut().zip(v) {
            *a += w * x;
        }
    });
}

fn visit_box(cells: &[usize], weights: &[Vec<(usize, f64)>], mut f: impl FnMut(usize, f64)) {
    fn rec(
        k: usize,
        off: usize,
        w: f64,
        cells: &[usize],
        weights: &[Vec<(usize, f64)>],
        f: &mut dyn FnMut(usize, f64),
    ) {
        if k == weights.len() {
            f(off, w);
            return;
        }
        for &(c, x) in &weights[k] {
            if x != 0.0 {
                rec(k + 1, off * cells[k] + c, w * x, cells, weights, f);
            }
        }
    }
    rec(0, 0, 1.0, cells, weights, &mut f);
}
