#![allow(dead_code)]

use nalgebra::DMatrix;
use ndarray::Array2;

use cantor_sss::Params;

/// In-place fast Walsh–Hadamard transform (unnormalized).
pub fn walsh_hadamard(v: &mut [f64]) {
    let n = v.len();
    assert!(n.is_power_of_two());
    let mut h = 1;
    while h < n {
        for block in (0..n).step_by(2 * h) {
            for i in block..block + h {
                let (a, b) = (v[i], v[i + h]);
                v[i] = a + b;
                v[i + h] = a - b;
            }
        }
        h *= 2;
    }
}

/// True when `q[u][v]` depends only on `u ^ v`, compared bit for bit.
pub fn xor_invariant(q: &Array2<f64>) -> bool {
    let n = q.nrows();
    (0..n).all(|u| (0..n).all(|v| q[[u, v]].to_bits() == q[[0, u ^ v]].to_bits()))
}

/// Spectrum of an XOR-invariant matrix: the Walsh–Hadamard transform of row 0.
pub fn xor_convolution_spectrum(q: &Array2<f64>) -> Vec<f64> {
    let mut row = q.row(0).to_vec();
    walsh_hadamard(&mut row);
    row.sort_by(f64::total_cmp);
    row
}

/// Eigenvalues of a symmetric matrix by a dense general-purpose solver.
pub fn dense_symmetric_eigenvalues(q: &Array2<f64>) -> Vec<f64> {
    let n = q.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| q[[i, j]]);
    let mut e: Vec<f64> = m.symmetric_eigenvalues().iter().copied().collect();
    e.sort_by(f64::total_cmp);
    e
}

/// `λ_m = −γ(θ + … + θ^{m−1} + 2θ^m)`, written out term by term.
pub fn lambda(m: u32, p: &Params) -> f64 {
    if m == 0 {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 1..m {
        s += p.theta().powi(k as i32);
    }
    -p.gamma() * (s + 2.0 * p.theta().powi(m as i32))
}

/// `{0} ∪ {λ_m ×2^{m−1}}`, sorted ascending.
pub fn expected_spectrum(n: u32, p: &Params) -> Vec<f64> {
    let mut out = vec![0.0];
    for m in 1..=n {
        out.extend(std::iter::repeat_n(lambda(m, p), 1 << (m - 1)));
    }
    out.sort_by(f64::total_cmp);
    out
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn params(gamma: f64, theta: f64) -> Params {
    Params::new(gamma, theta).unwrap()
}
