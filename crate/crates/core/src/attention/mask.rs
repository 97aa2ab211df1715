use crate::tensor::{Element, Tensor};

/// Whether query `i` may attend key `j` under a (possibly dilated) band.
pub(crate) fn band_allows(i: usize, j: usize, one_sided: usize, dilation: usize, causal: bool) -> bool {
    let dist = i.abs_diff(j);
    dist <= one_sided && (dilation <= 1 || dist % dilation == 0) && (!causal || j <= i)
}

/// Reference `[n, n]` 0/1 mask for sliding-window attention with window `w`:
/// `1` iff `|i - j| <= w / 2`, `i - j` is a multiple of `dilation`, and
/// `j <= i` when causal.
pub fn band_mask_oracle<T: Element>(n: usize, w: usize, dilation: usize, causal: bool) -> Tensor<T> {
    let mut data = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            if band_allows(i, j, w / 2, dilation, causal) {
                data[i * n + j] = T::one();
            }
        }
    }
    Tensor::from_vec(data, &[n, n]).expect("square mask")
}

/// Lower-triangular `[n, n]` 0/1 mask.
pub fn causal_mask<T: Element>(n: usize) -> Tensor<T> {
    let mut data = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            data[i * n + j] = T::one();
        }
    }
    Tensor::from_vec(data, &[n, n]).expect("square mask")
}
