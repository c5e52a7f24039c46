//! Seeded random draws of graphs, couplings and states.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::network::NetworkGraph;

pub type SampleRng = ChaCha8Rng;

pub fn rng(seed: u64) -> SampleRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Standard normal by Box-Muller.
pub fn normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

pub fn normal_vector<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| normal(rng))
}

pub fn normal_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| normal(rng))
}

/// Random `n × n` orthogonal matrix (QR of a Gaussian matrix, sign-fixed).
pub fn orthogonal<R: Rng>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let qr = normal_matrix(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric PSD `n × n` matrix of the given rank with nonzero eigenvalues in
/// `[lo, hi]`.
pub fn psd_coupling<R: Rng>(rng: &mut R, n: usize, rank: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let u = orthogonal(rng, n);
    let w = u.columns(0, rank);
    let d = DMatrix::from_diagonal(&DVector::from_fn(rank, |_, _| rng.gen_range(lo..=hi)));
    let b = &w * d * w.transpose();
    (&b + b.transpose()) * 0.5
}

/// Connected graph: a random spanning tree plus each remaining pair with
/// probability `extra`, weights uniform in `[0.5, 2]`.
pub fn connected_graph<R: Rng>(rng: &mut R, agent_count: usize, extra: f64) -> NetworkGraph {
    let mut edges = Vec::new();
    let mut present = vec![vec![false; agent_count]; agent_count];
    for i in 1..agent_count {
        let j = rng.gen_range(0..i);
        edges.push((j, i, rng.gen_range(0.5..=2.0)));
        present[j][i] = true;
    }
    for i in 0..agent_count {
        for j in i + 1..agent_count {
            if !present[i][j] && rng.gen_bool(extra) {
                edges.push((i, j, rng.gen_range(0.5..=2.0)));
            }
        }
    }
    NetworkGraph::new(agent_count, &edges).expect("generated edges are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orthogonal_is_orthogonal() {
        let mut r = rng(7);
        let q = orthogonal(&mut r, 5);
        assert!((q.transpose() * &q - DMatrix::<f64>::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn psd_coupling_has_requested_rank() {
        let mut r = rng(3);
        for rank in 0..=4 {
            let b = psd_coupling(&mut r, 4, rank, 0.5, 2.0);
            assert_eq!(crate::linalg::rank(&b, 1e-9), rank);
            assert!(crate::linalg::sym_eigenvalues(&b).iter().all(|v| *v > -1e-12));
        }
    }

    #[test]
    fn graphs_are_connected() {
        let mut r = rng(11);
        for n in 1..10 {
            assert!(connected_graph(&mut r, n, 0.3).is_connected());
        }
    }
}
