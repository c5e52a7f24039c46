//! Dense linear-algebra helpers shared by the decomposition, analysis and
//! application modules.
//!
//! Every orthonormal vector produced here passes through
//! [`apply_sign_convention`], so results are reproducible regardless of the
//! sign choices made inside the underlying eigen and singular value solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

/// Relative tolerance used to decide that two magnitudes tie in the sign convention.
const SIGN_TIE_TOL: f64 = 1e-10;

/// Flip `v` so that its entry of largest magnitude is positive. Ties are
/// broken in favour of the lowest index.
pub fn apply_sign_convention(v: &mut DVector<f64>) {
    let max_abs = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max_abs == 0.0 {
        return;
    }
    let pivot = v
        .iter()
        .position(|x| x.abs() >= max_abs * (1.0 - SIGN_TIE_TOL))
        .unwrap_or(0);
    if v[pivot] < 0.0 {
        v.neg_mut();
    }
}

/// Apply [`apply_sign_convention`] to every column of `m`.
pub fn sign_columns(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        let mut col = m.column(j).clone_owned();
        apply_sign_convention(&mut col);
        m.set_column(j, &col);
    }
}

pub fn is_symmetric(a: &DMatrix<f64>, tol: f64) -> bool {
    a.is_square() && (a - a.transpose()).norm() <= tol * a.norm().max(1.0)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order
/// and sign-normalised eigenvectors.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    sign_columns(&mut vectors);
    (values, vectors)
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    sym_eigen_sorted(a).0
}

/// Orthonormal basis of `ker(a)` from the SVD, keeping singular values
/// `sigma <= rel_tol * sigma_max`. Rows are zero-padded so the full right
/// singular basis is available for wide matrices.
pub fn kernel_basis(a: &DMatrix<f64>, rel_tol: f64) -> DMatrix<f64> {
    let cols = a.ncols();
    if cols == 0 {
        return DMatrix::zeros(0, 0);
    }
    let rows = a.nrows().max(cols);
    let mut padded = DMatrix::zeros(rows, cols);
    padded.view_mut((0, 0), (a.nrows(), cols)).copy_from(a);
    let svd = SVD::new(padded, false, true);
    let v_t = svd.v_t.expect("requested right singular vectors");
    let sigma_max = svd.singular_values.iter().fold(0.0_f64, |m, s| m.max(*s));
    let threshold = rel_tol * sigma_max;
    let kernel_rows: Vec<usize> = (0..cols)
        .filter(|&i| svd.singular_values[i] <= threshold)
        .collect();
    let mut basis = DMatrix::zeros(cols, kernel_rows.len());
    for (j, &i) in kernel_rows.iter().enumerate() {
        basis.set_column(j, &v_t.row(i).transpose());
    }
    // Reorthonormalise and fix signs for reproducibility.
    let mut basis = gram_schmidt(&basis);
    sign_columns(&mut basis);
    basis
}

/// Numerical rank from singular values with relative threshold.
pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0;
    }
    let sv = a.clone().singular_values();
    let smax = sv.iter().fold(0.0_f64, |m, s| m.max(*s));
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * smax).count()
}

/// Modified Gram-Schmidt with one reorthogonalisation pass. Columns whose
/// residual collapses below 1e-12 are dropped.
pub fn gram_schmidt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(a.ncols());
    for j in 0..a.ncols() {
        let mut v = a.column(j).clone_owned();
        let scale = v.norm();
        for _ in 0..2 {
            for q in &out {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let nv = v.norm();
        if nv > 1e-12 * scale.max(1e-300) && nv > 0.0 {
            out.push(v / nv);
        }
    }
    let mut m = DMatrix::zeros(a.nrows(), out.len());
    for (j, q) in out.iter().enumerate() {
        m.set_column(j, q);
    }
    m
}

/// Orthonormal completion `vbar` of the orthonormal columns `v`, so that
/// `[v vbar]` is orthogonal. Uses Gram-Schmidt on the standard basis with
/// largest-residual pivoting.
pub fn orthogonal_complement(v: &DMatrix<f64>, dim: usize) -> Result<DMatrix<f64>> {
    if v.nrows() != dim {
        return Err(Error::DimensionMismatch {
            context: "orthogonal_complement",
            expected: dim,
            got: v.nrows(),
        });
    }
    let k = v.ncols();
    let gram = v.transpose() * v;
    if (gram - DMatrix::identity(k, k)).norm() > 1e-10 {
        return Err(Error::InvalidParameter(
            "columns are not orthonormal".into(),
        ));
    }
    let mut basis: Vec<DVector<f64>> = (0..k).map(|j| v.column(j).clone_owned()).collect();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(dim - k);
    let mut used = vec![false; dim];
    while out.len() < dim - k {
        // Residual of each unused unit vector after projecting out the basis.
        let mut best: Option<(usize, DVector<f64>, f64)> = None;
        for (i, taken) in used.iter().enumerate() {
            if *taken {
                continue;
            }
            let mut e = DVector::zeros(dim);
            e[i] = 1.0;
            for _ in 0..2 {
                for q in &basis {
                    let c = q.dot(&e);
                    e.axpy(-c, q, 1.0);
                }
            }
            let n = e.norm();
            if best.as_ref().is_none_or(|(_, _, bn)| n > *bn + 1e-12) {
                best = Some((i, e, n));
            }
        }
        let (i, e, n) = best.ok_or_else(|| Error::Numerical("complement exhausted".into()))?;
        if n < 1e-8 {
            return Err(Error::Numerical("orthogonal complement is rank deficient".into()));
        }
        used[i] = true;
        let mut q = e / n;
        apply_sign_convention(&mut q);
        basis.push(q.clone());
        out.push(q);
    }
    let mut m = DMatrix::zeros(dim, out.len());
    for (j, q) in out.iter().enumerate() {
        m.set_column(j, q);
    }
    Ok(m)
}

pub fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut m = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        m.view_mut((r, c), (b.nrows(), b.ncols())).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    m
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Square root of a symmetric positive semidefinite matrix.
pub fn sqrtm_psd(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(a);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|v| v.max(0.0).sqrt()),
    ));
    &vecs * d * vecs.transpose()
}

/// `exp(-a * t)` for symmetric `a`.
pub fn expm_neg_sym(a: &DMatrix<f64>, t: f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen_sorted(a);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        vals.len(),
        vals.iter().map(|v| (-v * t).exp()),
    ));
    &vecs * d * vecs.transpose()
}

/// Eigenvalues of a general real matrix as `(re, im)` pairs, sorted by real part
/// descending.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let ev = a.clone().complex_eigenvalues();
    let mut out: Vec<(f64, f64)> = ev.iter().map(|c| (c.re, c.im)).collect();
    out.sort_by(|x, y| y.0.total_cmp(&x.0).then(y.1.total_cmp(&x.1)));
    out
}

/// Largest real part over the spectrum; `-inf` for an empty matrix.
pub fn spectral_abscissa(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .iter()
        .fold(f64::NEG_INFINITY, |m, (re, _)| m.max(*re))
}

/// Solve the continuous Lyapunov equation `jᵀ h + h j = -q` by
/// vectorisation and LU. Intended for the small systems in this crate
/// (dimension up to a few dozen).
pub fn solve_lyapunov(j: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = j.nrows();
    if !j.is_square() || q.nrows() != n || q.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "solve_lyapunov",
            expected: n,
            got: q.nrows(),
        });
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let jt = j.transpose();
    // Column-major vec: vec(jᵀ h) = (I ⊗ jᵀ) vec(h), vec(h j) = (jᵀ ⊗ I) vec(h).
    let op = eye.kronecker(&jt) + jt.kronecker(&eye);
    let rhs = -DVector::from_column_slice(q.as_slice());
    let sol = op
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("Lyapunov operator is singular".into()))?;
    let h = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok(symmetrize(&h))
}

/// Matrix sign function by scaled Newton iteration. Fails if `a` has
/// eigenvalues (numerically) on the imaginary axis.
pub fn matrix_sign(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let mut z = a.clone();
    for _ in 0..200 {
        let lu = z.clone().lu();
        let det = lu.determinant();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Numerical("matrix sign iteration hit a singular matrix".into()))?;
        let c = if det.abs() > 0.0 && det.is_finite() {
            det.abs().powf(-1.0 / n as f64)
        } else {
            1.0
        };
        let next = (&z * c + inv / c) * 0.5;
        let diff = (&next - &z).norm();
        z = next;
        if diff <= 1e-13 * z.norm().max(1.0) {
            return Ok(z);
        }
    }
    // Scaling can stall the last digits; one unscaled Newton pass settles it.
    for _ in 0..20 {
        let inv = z
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Numerical("matrix sign iteration hit a singular matrix".into()))?;
        let next = (&z + inv) * 0.5;
        let diff = (&next - &z).norm();
        z = next;
        if diff <= 1e-12 * z.norm().max(1.0) {
            return Ok(z);
        }
    }
    Err(Error::Numerical("matrix sign iteration did not converge".into()))
}

/// Stabilising solution of the control algebraic Riccati equation
/// `aᵀ x + x a - x b bᵀ x + q = 0` (unit input weight), via the sign function
/// of the Hamiltonian matrix.
pub fn solve_care(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let g = b * b.transpose();
    let mut ham = DMatrix::zeros(2 * n, 2 * n);
    ham.view_mut((0, 0), (n, n)).copy_from(a);
    ham.view_mut((0, n), (n, n)).copy_from(&(-&g));
    ham.view_mut((n, 0), (n, n)).copy_from(&(-q));
    ham.view_mut((n, n), (n, n)).copy_from(&(-a.transpose()));
    let w = matrix_sign(&ham)?;
    let eye = DMatrix::<f64>::identity(n, n);
    let w11 = w.view((0, 0), (n, n)).clone_owned();
    let w12 = w.view((0, n), (n, n)).clone_owned();
    let w21 = w.view((n, 0), (n, n)).clone_owned();
    let w22 = w.view((n, n), (n, n)).clone_owned();
    let mut lhs = DMatrix::zeros(2 * n, n);
    lhs.view_mut((0, 0), (n, n)).copy_from(&w12);
    lhs.view_mut((n, 0), (n, n)).copy_from(&(w22 + &eye));
    let mut rhs = DMatrix::zeros(2 * n, n);
    rhs.view_mut((0, 0), (n, n)).copy_from(&(-(w11 + &eye)));
    rhs.view_mut((n, 0), (n, n)).copy_from(&(-w21));
    let x = SVD::new(lhs, true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Numerical(format!("Riccati least squares failed: {e}")))?;
    let x = symmetrize(&x);
    let residual = a.transpose() * &x + &x * a - &x * &g * &x + q;
    if residual.norm() > 1e-7 * (1.0 + x.norm() * x.norm() * g.norm().max(1.0)) {
        return Err(Error::Numerical(format!(
            "Riccati residual too large: {:e}",
            residual.norm()
        )));
    }
    Ok(x)
}

/// Basis of the invariant subspace of `a` belonging to eigenvalues with real
/// part `>= 0` (marginal modes count as unstable).
pub fn unstable_invariant_subspace(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let ev = eigenvalues(a);
    let scale = ev.iter().fold(1.0_f64, |m, (re, im)| m.max(re.hypot(*im)));
    let marginal_tol = 1e-9 * scale;
    let stable: Vec<f64> = ev
        .iter()
        .filter(|(re, _)| *re < -marginal_tol)
        .map(|(re, _)| *re)
        .collect();
    if stable.is_empty() {
        return Ok(DMatrix::identity(n, n));
    }
    if stable.len() == n {
        return Ok(DMatrix::zeros(n, 0));
    }
    // Shift halfway toward the least stable mode so marginal modes move right.
    let shift = stable.iter().fold(f64::INFINITY, |m, re| m.min(re.abs())) * 0.5;
    let s = matrix_sign(&(a + DMatrix::identity(n, n) * shift))?;
    let projector = (s + DMatrix::identity(n, n)) * 0.5;
    let expected = n - stable.len();
    let svd = SVD::new(projector, true, false);
    let u = svd.u.expect("requested left singular vectors");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let mut basis = DMatrix::zeros(n, expected);
    for (dst, &src) in order.iter().take(expected).enumerate() {
        basis.set_column(dst, &u.column(src));
    }
    let mut basis = gram_schmidt(&basis);
    sign_columns(&mut basis);
    Ok(basis)
}
