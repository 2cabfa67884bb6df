//! Complex linear-algebra substrate.
//!
//! Everything downstream works on `&[C64]` slices and the [`LinearOperator`]
//! trait, so the equalizers never need a dense channel matrix. Dense
//! helpers ([`ComplexMatrix`], [`densify`], [`dense_regularized_solve`]) exist
//! for test oracles and for the MMSE benchmark.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Default cap on `rows * cols` for dense materialization.
pub const DEFAULT_DENSE_CAP: usize = 4096 * 4096;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// `Σ conj(a[i]) b[i]`.
pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let (mut re0, mut im0, mut re1, mut im1) = (0.0, 0.0, 0.0, 0.0);
    let mut ca = a.chunks_exact(2);
    let mut cb = b.chunks_exact(2);
    for (x, y) in (&mut ca).zip(&mut cb) {
        re0 += x[0].re * y[0].re + x[0].im * y[0].im;
        im0 += x[0].re * y[0].im - x[0].im * y[0].re;
        re1 += x[1].re * y[1].re + x[1].im * y[1].im;
        im1 += x[1].re * y[1].im - x[1].im * y[1].re;
    }
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        re0 += x.re * y.re + x.im * y.im;
        im0 += x.re * y.im - x.im * y.re;
    }
    C64::new(re0 + re1, im0 + im1)
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    norm_sqr(a).sqrt()
}

/// `y += alpha * x`.
pub fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [C64]) {
    for xi in x {
        *xi *= alpha;
    }
}

/// `‖a - b‖ / ‖b‖`, or `‖a‖` when `b` is zero.
pub fn relative_error(a: &[C64], b: &[C64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den = norm_sqr(b);
    if den == 0.0 {
        diff.sqrt()
    } else {
        (diff / den).sqrt()
    }
}

/// i.i.d. circularly-symmetric complex Gaussian samples with the given variance.
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, len: usize, variance: f64) -> Vec<C64> {
    let s = (variance / 2.0).sqrt();
    (0..len)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(s * re, s * im)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// DFT

/// Unitary `len`-point DFT, `F[l,k] = exp(-2πj lk/len) / sqrt(len)`.
///
/// Plans come from `rustfft`, which covers every length in `O(len log len)`
/// (mixed radix, Rader and Bluestein for prime factors). The plans are shared
/// behind `Arc`s, so cloning is cheap and the transform can be used from many
/// threads; scratch space is allocated per call.
#[derive(Clone)]
pub struct UnitaryDft {
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl fmt::Debug for UnitaryDft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UnitaryDft").field("len", &self.len).finish()
    }
}

impl UnitaryDft {
    pub fn new(len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::dim("DFT length", 1, 0));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            len,
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            scale: 1.0 / (len as f64).sqrt(),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// In-place transform of every consecutive `len`-chunk of `buf`.
    pub fn forward_inplace(&self, buf: &mut [C64]) {
        self.run(&self.forward, buf);
    }

    pub fn inverse_inplace(&self, buf: &mut [C64]) {
        self.run(&self.inverse, buf);
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, buf: &mut [C64]) {
        assert!(
            buf.len().is_multiple_of(self.len),
            "buffer is not a multiple of the DFT length"
        );
        if buf.is_empty() {
            return;
        }
        let mut scratch = vec![ZERO; plan.get_inplace_scratch_len()];
        plan.process_with_scratch(buf, &mut scratch);
        scale(self.scale, buf);
    }
}

/// Unitary DFT (or its inverse) of `x`.
pub fn dft(x: &[C64], inverse: bool) -> Result<Vec<C64>> {
    let plan = UnitaryDft::new(x.len())?;
    let mut out = x.to_vec();
    if inverse {
        plan.inverse_inplace(&mut out);
    } else {
        plan.forward_inplace(&mut out);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Linear operators

/// A linear map `C^ncols -> C^nrows` known only through its action and the
/// action of its adjoint.
///
/// `apply_into` and `apply_adjoint_into` must be re-entrant: implementations
/// keep no mutable scratch between calls. Callers guarantee slice lengths;
/// the checked entry points are [`LinearOperator::apply`] and
/// [`LinearOperator::apply_adjoint`].
pub trait LinearOperator: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `out = A x`, overwriting `out`.
    fn apply_into(&self, x: &[C64], out: &mut [C64]);

    /// `out = Aᴴ y`, overwriting `out`.
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]);

    fn apply(&self, x: &[C64]) -> Result<Vec<C64>> {
        if x.len() != self.ncols() {
            return Err(Error::dim("operator input", self.ncols(), x.len()));
        }
        let mut out = vec![ZERO; self.nrows()];
        self.apply_into(x, &mut out);
        Ok(out)
    }

    fn apply_adjoint(&self, y: &[C64]) -> Result<Vec<C64>> {
        if y.len() != self.nrows() {
            return Err(Error::dim("adjoint input", self.nrows(), y.len()));
        }
        let mut out = vec![ZERO; self.ncols()];
        self.apply_adjoint_into(y, &mut out);
        Ok(out)
    }
}

macro_rules! forward_operator {
    ($($ty:ty),*) => {$(
        impl<T: LinearOperator + ?Sized> LinearOperator for $ty {
            fn nrows(&self) -> usize { (**self).nrows() }
            fn ncols(&self) -> usize { (**self).ncols() }
            fn apply_into(&self, x: &[C64], out: &mut [C64]) { (**self).apply_into(x, out) }
            fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
                (**self).apply_adjoint_into(y, out)
            }
        }
    )*};
}

forward_operator!(&T, Box<T>, Arc<T>);

#[derive(Debug, Clone, Copy)]
pub struct Identity(pub usize);

impl LinearOperator for Identity {
    fn nrows(&self) -> usize {
        self.0
    }
    fn ncols(&self) -> usize {
        self.0
    }
    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        out.copy_from_slice(x);
    }
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        out.copy_from_slice(y);
    }
}

/// `outer ∘ inner`: applies `inner` first.
#[derive(Debug, Clone)]
pub struct Composed<A, B> {
    outer: A,
    inner: B,
}

impl<A: LinearOperator, B: LinearOperator> Composed<A, B> {
    pub fn new(outer: A, inner: B) -> Result<Self> {
        if outer.ncols() != inner.nrows() {
            return Err(Error::dim(
                "composition inner dimension",
                outer.ncols(),
                inner.nrows(),
            ));
        }
        Ok(Self { outer, inner })
    }

    pub fn outer(&self) -> &A {
        &self.outer
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<A: LinearOperator, B: LinearOperator> LinearOperator for Composed<A, B> {
    fn nrows(&self) -> usize {
        self.outer.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        let mut mid = vec![ZERO; self.inner.nrows()];
        self.inner.apply_into(x, &mut mid);
        self.outer.apply_into(&mid, out);
    }
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        let mut mid = vec![ZERO; self.outer.ncols()];
        self.outer.apply_adjoint_into(y, &mut mid);
        self.inner.apply_adjoint_into(&mid, out);
    }
}

/// The adjoint `Aᴴ` of a wrapped operator.
#[derive(Debug, Clone)]
pub struct Adjoint<A>(pub A);

impl<A: LinearOperator> LinearOperator for Adjoint<A> {
    fn nrows(&self) -> usize {
        self.0.ncols()
    }
    fn ncols(&self) -> usize {
        self.0.nrows()
    }
    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        self.0.apply_adjoint_into(x, out);
    }
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        self.0.apply_into(y, out);
    }
}

/// Counts forward and adjoint applications of the wrapped operator.
#[derive(Debug)]
pub struct Counting<A> {
    inner: A,
    forward: AtomicUsize,
    adjoint: AtomicUsize,
}

impl<A> Counting<A> {
    pub fn new(inner: A) -> Self {
        Self {
            inner,
            forward: AtomicUsize::new(0),
            adjoint: AtomicUsize::new(0),
        }
    }

    pub fn forward_count(&self) -> usize {
        self.forward.load(Ordering::Relaxed)
    }

    pub fn adjoint_count(&self) -> usize {
        self.adjoint.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.forward.store(0, Ordering::Relaxed);
        self.adjoint.store(0, Ordering::Relaxed);
    }
}

impl<A: LinearOperator> LinearOperator for Counting<A> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        self.forward.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_into(x, out);
    }
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        self.adjoint.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_adjoint_into(y, out);
    }
}

/// `|⟨Au, v⟩ − ⟨u, Aᴴv⟩| / (‖u‖‖v‖)`; zero for an exact adjoint pair.
pub fn adjoint_defect(op: &dyn LinearOperator, u: &[C64], v: &[C64]) -> Result<f64> {
    let au = op.apply(u)?;
    let ahv = op.apply_adjoint(v)?;
    let lhs = dot(&au, v);
    let rhs = dot(u, &ahv);
    Ok((lhs - rhs).norm() / (norm(u) * norm(v)))
}

// ---------------------------------------------------------------------------
// Dense matrices

/// Column-major dense complex matrix.
#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ComplexMatrix({}x{})", self.rows, self.cols)
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for c in 0..cols {
            for r in 0..rows {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_col_major(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dim("matrix storage", rows * cols, data.len()));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn random<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: complex_gaussian(rng, rows * cols, 1.0),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn col(&self, c: usize) -> &[C64] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn col_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.data[c * self.rows..(c + 1) * self.rows]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    /// Dense product `self * rhs`.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<Self> {
        if self.cols != rhs.rows {
            return Err(Error::dim("matmul inner dimension", self.cols, rhs.rows));
        }
        let mut out = Self::zeros(self.rows, rhs.cols);
        for j in 0..rhs.cols {
            let dst = &mut out.data[j * self.rows..(j + 1) * self.rows];
            for (k, &b) in rhs.col(j).iter().enumerate() {
                if b != ZERO {
                    axpy(b, self.col(k), dst);
                }
            }
        }
        Ok(out)
    }

    /// Largest entrywise `|a - b|`.
    pub fn max_abs_diff(&self, other: &ComplexMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `GᴴG + damp² I`, Hermitian, fully populated.
    pub fn regularized_gram(&self, damp: f64) -> ComplexMatrix {
        let n = self.cols;
        let mut gram = Self::zeros(n, n);
        for j in 0..n {
            let cj = self.col(j);
            for i in j..n {
                let v = dot(self.col(i), cj);
                gram.data[i + j * n] = v;
                gram.data[j + i * n] = v.conj();
            }
            gram.data[j + j * n] = C64::new(gram.data[j + j * n].re + damp * damp, 0.0);
        }
        gram
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, c): (usize, usize)) -> &C64 {
        &self.data[r + c * self.rows]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut C64 {
        &mut self.data[r + c * self.rows]
    }
}

impl LinearOperator for ComplexMatrix {
    fn nrows(&self) -> usize {
        self.rows
    }
    fn ncols(&self) -> usize {
        self.cols
    }
    fn apply_into(&self, x: &[C64], out: &mut [C64]) {
        out.fill(ZERO);
        for (c, &xc) in x.iter().enumerate() {
            if xc != ZERO {
                axpy(xc, self.col(c), out);
            }
        }
    }
    fn apply_adjoint_into(&self, y: &[C64], out: &mut [C64]) {
        for (c, o) in out.iter_mut().enumerate() {
            *o = dot(self.col(c), y);
        }
    }
}

/// Materializes `op` column by column: column `j` is `op.apply(e_j)`.
pub fn densify(op: &dyn LinearOperator) -> Result<ComplexMatrix> {
    densify_with_cap(op, DEFAULT_DENSE_CAP)
}

pub fn densify_with_cap(op: &dyn LinearOperator, cap: usize) -> Result<ComplexMatrix> {
    let (rows, cols) = (op.nrows(), op.ncols());
    if rows.saturating_mul(cols) > cap {
        return Err(Error::DenseCap { rows, cols, cap });
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    let mut unit = vec![ZERO; cols];
    for j in 0..cols {
        unit[j] = C64::new(1.0, 0.0);
        op.apply_into(&unit, out.col_mut(j));
        unit[j] = ZERO;
    }
    Ok(out)
}

/// Cholesky factor `A = L Lᴴ` of a Hermitian positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    // lower triangle of L, column-major; the strict upper part is junk
    l: Vec<C64>,
}

impl Cholesky {
    pub fn factor(a: ComplexMatrix) -> Result<Self> {
        if a.rows != a.cols {
            return Err(Error::dim("Cholesky requires a square matrix", a.rows, a.cols));
        }
        let n = a.rows;
        let max_diag = (0..n).map(|i| a[(i, i)].re.abs()).fold(0.0, f64::max);
        let tol = (n.max(1) as f64) * f64::EPSILON * max_diag;
        let mut l = a.data;
        for k in 0..n {
            let pivot = l[k + k * n].re;
            if !(pivot > tol) || !pivot.is_finite() {
                return Err(Error::NumericalRank { index: k, pivot });
            }
            let lkk = pivot.sqrt();
            l[k + k * n] = C64::new(lkk, 0.0);
            let inv = 1.0 / lkk;
            for v in &mut l[k * n + k + 1..(k + 1) * n] {
                *v *= inv;
            }
            let (left, right) = l.split_at_mut((k + 1) * n);
            let colk = &left[k * n..];
            for j in k + 1..n {
                let f = -colk[j].conj();
                let colj = &mut right[(j - k - 1) * n..(j - k) * n];
                axpy(f, &colk[j..], &mut colj[j..]);
            }
        }
        Ok(Self { n, l })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve(&self, b: &[C64]) -> Result<Vec<C64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::dim("Cholesky right-hand side", n, b.len()));
        }
        let mut x = b.to_vec();
        for k in 0..n {
            let col = &self.l[k * n..(k + 1) * n];
            x[k] /= col[k].re;
            let xk = x[k];
            axpy(-xk, &col[k + 1..], &mut x[k + 1..]);
        }
        for k in (0..n).rev() {
            let col = &self.l[k * n..(k + 1) * n];
            let s = dot(&col[k + 1..], &x[k + 1..]);
            x[k] = (x[k] - s) / col[k].re;
        }
        Ok(x)
    }
}

/// Tikhonov / MMSE solve `x = (GᴴG + damp² I)⁻¹ Gᴴ y`.
pub fn dense_regularized_solve(g: &ComplexMatrix, y: &[C64], damp: f64) -> Result<Vec<C64>> {
    RegularizedSolver::new(g, damp)?.solve(y)
}

/// Factorization of `GᴴG + damp² I` reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct RegularizedSolver<'a> {
    g: &'a ComplexMatrix,
    factor: Cholesky,
}

impl<'a> RegularizedSolver<'a> {
    pub fn new(g: &'a ComplexMatrix, damp: f64) -> Result<Self> {
        if !(damp >= 0.0) {
            return Err(Error::config(format!("damping must be nonnegative, got {damp}")));
        }
        if g.rows < g.cols {
            return Err(Error::dim(
                "regularized solve requires rows >= cols",
                g.cols,
                g.rows,
            ));
        }
        let factor = Cholesky::factor(g.regularized_gram(damp))?;
        Ok(Self { g, factor })
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.g
    }

    pub fn solve(&self, y: &[C64]) -> Result<Vec<C64>> {
        let rhs = self.g.apply_adjoint(y)?;
        self.factor.solve(&rhs)
    }
}
