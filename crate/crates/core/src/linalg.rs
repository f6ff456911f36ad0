//! Dense vector helpers shared by the encoders, composers and trainer.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `acc += alpha * x`
pub fn axpy(acc: &mut [f64], alpha: f64, x: &[f64]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, v) in acc.iter_mut().zip(x) {
        *a += alpha * v;
    }
}

pub fn add_assign(acc: &mut [f64], x: &[f64]) {
    debug_assert_eq!(acc.len(), x.len());
    for (a, v) in acc.iter_mut().zip(x) {
        *a += v;
    }
}

/// Cosine similarity; zero when either side is the zero vector.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot(a, b) / (na * nb)
}

/// Row-major `d x d` matrix times vector.
pub fn matvec(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    debug_assert_eq!(m.len(), d * d);
    m.chunks_exact(d).map(|row| dot(row, v)).collect()
}

/// Transposed product `m^T v` for a row-major `d x d` matrix.
pub fn matvec_t(m: &[f64], v: &[f64]) -> Vec<f64> {
    let d = v.len();
    debug_assert_eq!(m.len(), d * d);
    let mut out = vec![0.0; d];
    for (row, vi) in m.chunks_exact(d).zip(v) {
        axpy(&mut out, *vi, row);
    }
    out
}

/// `acc += u v^T` into a row-major `d x d` block.
pub fn add_outer(acc: &mut [f64], u: &[f64], v: &[f64]) {
    let d = v.len();
    debug_assert_eq!(acc.len(), u.len() * d);
    for (row, ui) in acc.chunks_exact_mut(d).zip(u) {
        axpy(row, *ui, v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matvec_and_transpose() {
        let m = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(matvec(&m, &[1.0, 1.0]), vec![3.0, 7.0]);
        assert_eq!(matvec_t(&m, &[1.0, 1.0]), vec![4.0, 6.0]);
        let mut acc = [0.0; 4];
        add_outer(&mut acc, &[1.0, 2.0], &[3.0, 4.0]);
        assert_eq!(acc, [3.0, 4.0, 6.0, 8.0]);
    }

    #[test]
    fn cosine_of_zero_is_zero() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert!((cosine(&[1.0, 1.0], &[2.0, 2.0]) - 1.0).abs() < 1e-15);
    }
}
