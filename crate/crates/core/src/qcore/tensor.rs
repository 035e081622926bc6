//! Index bookkeeping for row-major tensor products.

/// Row-major strides: factor 0 is the most significant digit.
pub fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

pub fn product(dims: &[usize]) -> usize {
    dims.iter().product()
}

/// Splits the factors `0..dims.len()` into `sub` (in the order given) and the
/// remaining factors (ascending). Returns `table` with
/// `table[rest * d_sub + s] = full index`.
#[derive(Debug, Clone)]
pub struct SplitTable {
    pub d_sub: usize,
    pub d_rest: usize,
    pub table: Vec<usize>,
}

impl SplitTable {
    pub fn new(dims: &[usize], sub: &[usize]) -> Self {
        let st = strides(dims);
        let rest: Vec<usize> = (0..dims.len()).filter(|k| !sub.contains(k)).collect();
        let sub_dims: Vec<usize> = sub.iter().map(|&k| dims[k]).collect();
        let rest_dims: Vec<usize> = rest.iter().map(|&k| dims[k]).collect();
        let d_sub = product(&sub_dims);
        let d_rest = product(&rest_dims);
        let sub_off = offsets(&sub_dims, &sub.iter().map(|&k| st[k]).collect::<Vec<_>>());
        let rest_off = offsets(&rest_dims, &rest.iter().map(|&k| st[k]).collect::<Vec<_>>());
        let mut table = Vec::with_capacity(d_sub * d_rest);
        for &r in &rest_off {
            for &s in &sub_off {
                table.push(r + s);
            }
        }
        SplitTable {
            d_sub,
            d_rest,
            table,
        }
    }

    #[inline]
    pub fn at(&self, rest: usize, sub: usize) -> usize {
        self.table[rest * self.d_sub + sub]
    }
}

/// Full-index offsets for every multi-index over `dims` with the given strides,
/// enumerated row-major over `dims`.
fn offsets(dims: &[usize], strides: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for (&d, &s) in dims.iter().zip(strides) {
        let mut next = Vec::with_capacity(out.len() * d);
        for &o in &out {
            for j in 0..d {
                next.push(o + j * s);
            }
        }
        out = next;
    }
    out
}

/// Digits of `index` in the mixed radix `dims`.
pub fn digits(mut index: usize, dims: &[usize]) -> Vec<usize> {
    let mut out = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        out[k] = index % dims[k];
        index /= dims[k];
    }
    out
}

pub fn from_digits(digits: &[usize], dims: &[usize]) -> usize {
    digits
        .iter()
        .zip(dims)
        .fold(0, |acc, (&d, &n)| acc * n + d)
}
