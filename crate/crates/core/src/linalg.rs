//! Small dense and structured linear solvers used by the per-mode elliptic
//! systems. Everything here is deterministic; the matrices are at most a few
//! thousand unknowns per azimuthal mode.

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

/// Dense complex matrix, row major.
#[derive(Debug, Clone)]
pub struct CMat {
    pub n: usize,
    pub m: usize,
    pub d: Vec<C64>,
}

impl CMat {
    pub fn zeros(n: usize, m: usize) -> Self {
        Self { n, m, d: vec![C64::new(0.0, 0.0); n * m] }
    }

    pub fn eye(n: usize) -> Self {
        let mut a = Self::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = C64::new(1.0, 0.0);
        }
        a
    }

    pub fn matmul(&self, b: &CMat) -> CMat {
        assert_eq!(self.m, b.n);
        let mut out = CMat::zeros(self.n, b.m);
        for i in 0..self.n {
            for k in 0..self.m {
                let aik = self[(i, k)];
                if aik == C64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..b.m {
                    out[(i, j)] += aik * b[(k, j)];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[C64], out: &mut [C64]) {
        for i in 0..self.n {
            let mut acc = C64::new(0.0, 0.0);
            for j in 0..self.m {
                acc += self[(i, j)] * x[j];
            }
            out[i] = acc;
        }
    }
}

impl std::ops::Index<(usize, usize)> for CMat {
    type Output = C64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.d[i * self.m + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.d[i * self.m + j]
    }
}

/// Dense LU factorization with partial pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu {
    lu: CMat,
    piv: Vec<usize>,
}

impl DenseLu {
    pub fn factor(mut a: CMat) -> Result<Self> {
        assert_eq!(a.n, a.m);
        let n = a.n;
        let mut piv = vec![0usize; n];
        for col in 0..n {
            let mut best = col;
            let mut best_mag = a[(col, col)].norm_sqr();
            for r in col + 1..n {
                let mag = a[(r, col)].norm_sqr();
                if mag > best_mag {
                    best_mag = mag;
                    best = r;
                }
            }
            if best_mag == 0.0 {
                return Err(Error::Solver(format!("singular pivot at column {col}")));
            }
            piv[col] = best;
            if best != col {
                for j in 0..n {
                    let t = a[(col, j)];
                    a[(col, j)] = a[(best, j)];
                    a[(best, j)] = t;
                }
            }
            let inv = C64::new(1.0, 0.0) / a[(col, col)];
            for r in col + 1..n {
                let f = a[(r, col)] * inv;
                a[(r, col)] = f;
                if f != C64::new(0.0, 0.0) {
                    for j in col + 1..n {
                        let v = a[(col, j)];
                        a[(r, j)] -= f * v;
                    }
                }
            }
        }
        Ok(Self { lu: a, piv })
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let n = self.lu.n;
        for i in 0..n {
            b.swap(i, self.piv[i]);
        }
        for i in 1..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * b[j];
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in i + 1..n {
                acc -= self.lu[(i, j)] * b[j];
            }
            b[i] = acc / self.lu[(i, i)];
        }
    }

    /// Solve for each column of a dense right-hand-side matrix.
    pub fn solve_mat(&self, b: &CMat) -> CMat {
        let mut out = CMat::zeros(b.n, b.m);
        let mut col = vec![C64::new(0.0, 0.0); b.n];
        for j in 0..b.m {
            for i in 0..b.n {
                col[i] = b[(i, j)];
            }
            self.solve_in_place(&mut col);
            for i in 0..b.n {
                out[(i, j)] = col[i];
            }
        }
        out
    }
}

/// Factored block-tridiagonal system
/// `L_i x_{i-1} + D_i x_i + U_i x_{i+1} = f_i`, plus an optional low-rank
/// column coupling every block to block zero, eliminated by the
/// Sherman-Morrison-Woodbury identity.
pub struct BlockTriSolver {
    bs: usize,
    nb: usize,
    lower: Vec<CMat>,
    pivots: Vec<DenseLu>,
    gain: Vec<CMat>,
    /// `t_inv_c` = T^{-1} C (row-major nb*bs x bs) and the factored
    /// capacitance `I + S T^{-1} C`, with `S` the block-0 selector.
    woodbury: Option<(Vec<C64>, DenseLu)>,
}

impl BlockTriSolver {
    /// Factor the pure block-tridiagonal part. `lower[i]` couples block `i`
    /// to `i-1` (index 0 unused), `upper[i]` couples to `i+1`.
    pub fn factor(lower: Vec<CMat>, diag: Vec<CMat>, upper: Vec<CMat>) -> Result<Self> {
        let nb = diag.len();
        let bs = diag[0].n;
        let mut pivots = Vec::with_capacity(nb);
        let mut gain: Vec<CMat> = Vec::with_capacity(nb);
        for i in 0..nb {
            let mut s = diag[i].clone();
            if i > 0 {
                // S_i = D_i - L_i G_{i-1}
                let lg = lower[i].matmul(&gain[i - 1]);
                for q in 0..bs * bs {
                    s.d[q] -= lg.d[q];
                }
            }
            let lu = DenseLu::factor(s)?;
            if i + 1 < nb {
                gain.push(lu.solve_mat(&upper[i]));
            } else {
                gain.push(CMat::zeros(bs, bs));
            }
            pivots.push(lu);
        }
        Ok(Self { bs, nb, lower, pivots, gain, woodbury: None })
    }

    /// Attach the nonlocal block-zero column: every block row `i` carries an
    /// extra diagonal coupling `coeff[i] * I` to the unknowns of block 0.
    pub fn with_block0_column(mut self, coeff: &[f64]) -> Result<Self> {
        let (bs, nb) = (self.bs, self.nb);
        assert_eq!(coeff.len(), nb);
        let mut t_inv_c = vec![C64::new(0.0, 0.0); nb * bs * bs];
        let mut rhs = vec![C64::new(0.0, 0.0); nb * bs];
        for col in 0..bs {
            for v in rhs.iter_mut() {
                *v = C64::new(0.0, 0.0);
            }
            for i in 0..nb {
                rhs[i * bs + col] = C64::new(coeff[i], 0.0);
            }
            self.solve_tri(&mut rhs);
            for q in 0..nb * bs {
                t_inv_c[q * bs + col] = rhs[q];
            }
        }
        let mut cap = CMat::eye(bs);
        for r in 0..bs {
            for c in 0..bs {
                cap[(r, c)] += t_inv_c[r * bs + c];
            }
        }
        let cap_lu = DenseLu::factor(cap)
            .map_err(|_| Error::Solver("singular nonlocal capacitance".into()))?;
        self.woodbury = Some((t_inv_c, cap_lu));
        Ok(self)
    }

    fn solve_tri(&self, f: &mut [C64]) {
        let (bs, nb) = (self.bs, self.nb);
        let mut buf = vec![C64::new(0.0, 0.0); bs];
        for i in 0..nb {
            if i > 0 {
                let li = &self.lower[i];
                for r in 0..bs {
                    let mut acc = C64::new(0.0, 0.0);
                    for c in 0..bs {
                        acc += li[(r, c)] * f[(i - 1) * bs + c];
                    }
                    buf[r] = acc;
                }
                for r in 0..bs {
                    f[i * bs + r] -= buf[r];
                }
            }
            self.pivots[i].solve_in_place(&mut f[i * bs..(i + 1) * bs]);
        }
        for i in (0..nb.saturating_sub(1)).rev() {
            let g = &self.gain[i];
            for r in 0..bs {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..bs {
                    acc += g[(r, c)] * f[(i + 1) * bs + c];
                }
                buf[r] = acc;
            }
            for r in 0..bs {
                f[i * bs + r] -= buf[r];
            }
        }
    }

    /// Solve the full system including the nonlocal column if attached.
    pub fn solve(&self, f: &mut [C64]) {
        self.solve_tri(f);
        if let Some((t_inv_c, cap)) = &self.woodbury {
            let bs = self.bs;
            // x = z - T^{-1}C (I + S T^{-1}C)^{-1} S z
            let mut s_z: Vec<C64> = f[0..bs].to_vec();
            cap.solve_in_place(&mut s_z);
            for q in 0..self.nb * bs {
                let mut acc = C64::new(0.0, 0.0);
                for c in 0..bs {
                    acc += t_inv_c[q * bs + c] * s_z[c];
                }
                f[q] -= acc;
            }
        }
    }
}

/// Hermitian positive definite banded matrix, lower storage:
/// `band[d][i] = A[i+d][i]` for diagonals `d = 0..=bw`.
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    band: Vec<Vec<C64>>,
}

impl BandedCholesky {
    /// In-place banded Cholesky `A = L L^H`.
    pub fn factor(n: usize, bw: usize, mut band: Vec<Vec<C64>>) -> Result<Self> {
        assert_eq!(band.len(), bw + 1);
        for j in 0..n {
            let mut s = band[0][j].re;
            let klo = j.saturating_sub(bw);
            for k in klo..j {
                s -= band[j - k][k].norm_sqr();
            }
            if s <= 0.0 {
                return Err(Error::Solver(format!(
                    "banded Cholesky lost positivity at row {j} ({s:.3e})"
                )));
            }
            let ljj = s.sqrt();
            band[0][j] = C64::new(ljj, 0.0);
            for i in j + 1..(j + bw + 1).min(n) {
                let mut s = band[i - j][j];
                let klo = i.saturating_sub(bw).max(j.saturating_sub(bw));
                for k in klo..j {
                    if i - k <= bw {
                        let l_ik = band[i - k][k];
                        let l_jk = band[j - k][k];
                        s -= l_ik * l_jk.conj();
                    }
                }
                band[i - j][j] = s / ljj;
            }
        }
        Ok(Self { n, bw, band })
    }

    pub fn solve_in_place(&self, b: &mut [C64]) {
        let (n, bw) = (self.n, self.bw);
        for i in 0..n {
            let mut acc = b[i];
            let klo = i.saturating_sub(bw);
            for k in klo..i {
                acc -= self.band[i - k][k] * b[k];
            }
            b[i] = acc / self.band[0][i];
        }
        for i in (0..n).rev() {
            let mut acc = b[i];
            let khi = (i + bw + 1).min(n);
            for k in i + 1..khi {
                acc -= self.band[k - i][i].conj() * b[k];
            }
            b[i] = acc / self.band[0][i];
        }
    }
}

/// Eigen-decomposition of a small real symmetric matrix by cyclic Jacobi
/// rotations. Returns eigenvalues ascending with matching eigenvectors in
/// the columns of the returned row-major matrix.
pub fn jacobi_eigh(a_in: &[f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut a = a_in.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let idx = |i: usize, j: usize| i * n + j;
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off += a[idx(i, j)] * a[idx(i, j)];
            }
        }
        if off.sqrt() < 1e-14 * (1.0 + a.iter().fold(0.0f64, |m, x| m.max(x.abs()))) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[idx(p, q)];
                if apq.abs() < 1e-300 {
                    continue;
                }
                let theta = (a[idx(q, q)] - a[idx(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[idx(k, p)];
                    let akq = a[idx(k, q)];
                    a[idx(k, p)] = c * akp - s * akq;
                    a[idx(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[idx(p, k)];
                    let aqk = a[idx(q, k)];
                    a[idx(p, k)] = c * apk - s * aqk;
                    a[idx(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[idx(k, p)];
                    let vkq = v[idx(k, q)];
                    v[idx(k, p)] = c * vkp - s * vkq;
                    v[idx(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[idx(i, i)].partial_cmp(&a[idx(j, j)]).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[idx(i, i)]).collect();
    let mut vecs = vec![0.0; n * n];
    for (col, &src) in order.iter().enumerate() {
        for r in 0..n {
            vecs[r * n + col] = v[idx(r, src)];
        }
    }
    (vals, vecs)
}
