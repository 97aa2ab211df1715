use crate::tensor::{Element, Tensor, TensorError};

/// Sinusoidal table `[len, d]`: `sin(pos / 10000^(2i/d))` in even columns and
/// the matching cosine in odd ones.
pub fn positional_encoding<T: Element>(len: usize, d: usize) -> Result<Tensor<T>, TensorError> {
    if d % 2 != 0 {
        return Err(TensorError::Dimension(format!("positional encoding width {d} must be even")));
    }
    let mut data = vec![T::zero(); len * d];
    for pos in 0..len {
        for i in 0..d / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d as f64);
            data[pos * d + 2 * i] = T::of(angle.sin());
            data[pos * d + 2 * i + 1] = T::of(angle.cos());
        }
    }
    Tensor::from_vec(data, &[len, d])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_row_alternates_zero_one() {
        let pe = positional_encoding::<f64>(4, 8).unwrap();
        for c in 0..8 {
            assert_eq!(pe.data()[c], if c % 2 == 0 { 0.0 } else { 1.0 });
        }
    }

    #[test]
    fn second_row_first_column_is_sin_one() {
        let pe = positional_encoding::<f64>(2, 6).unwrap();
        assert!((pe.data()[6] - 0.8415).abs() < 1e-4);
    }

    #[test]
    fn bounded_by_one() {
        let pe = positional_encoding::<f32>(1024, 128).unwrap();
        assert!(pe.data().iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(positional_encoding::<f32>(3, 5), Err(TensorError::Dimension(_))));
    }
}
