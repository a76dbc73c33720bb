//! Dense primal-dual interior-point solver for cone programs
//!
//! ```text
//! minimize    c' x
//! subject to  A x + s = b,   s in K,
//! ```
//!
//! where `K` is a product of a nonnegative orthant and second-order cones
//! (rows of `A` laid out in that order). The dual variable `z` lives in the
//! same cone. The method is the standard Nesterov-Todd scaled Mehrotra
//! predictor-corrector; each step solves the normal equations
//! `A' W^-2 A dx = r` by dense Cholesky, which is the right trade-off for the
//! problem sizes in this crate (tens of variables, a few thousand rows).

use crate::error::{Error, Result};
use crate::mat::RMat;
use crate::scalar::Scalar;

/// Cone layout: `nonneg` leading rows in the nonnegative orthant followed by
/// second-order cone blocks of the listed dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConeSpec {
    pub nonneg: usize,
    pub soc_dims: Vec<usize>,
}

impl ConeSpec {
    pub fn total_dim(&self) -> usize {
        self.nonneg + self.soc_dims.iter().sum::<usize>()
    }

    /// Barrier degree: orthant components count one each, SOC blocks one per
    /// block.
    pub fn degree(&self) -> usize {
        self.nonneg + self.soc_dims.len()
    }

    /// Cone identity element (ones on the orthant, `(1, 0, ...)` per block).
    pub fn identity<T: Scalar>(&self) -> Vec<T> {
        let mut e = vec![T::zero(); self.total_dim()];
        for v in e.iter_mut().take(self.nonneg) {
            *v = T::one();
        }
        let mut at = self.nonneg;
        for &d in &self.soc_dims {
            e[at] = T::one();
            at += d;
        }
        e
    }

    fn soc_blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.soc_dims.iter().scan(self.nonneg, |at, &d| {
            let start = *at;
            *at += d;
            Some((start, d))
        })
    }

    /// Whether `v` lies in the cone, within `slack` on each block test.
    pub fn contains<T: Scalar>(&self, v: &[T], slack: T) -> bool {
        if v[..self.nonneg].iter().any(|&x| x < -slack) {
            return false;
        }
        self.soc_blocks().all(|(start, d)| {
            let head = v[start];
            let tail = norm2(&v[start + 1..start + d]);
            head + slack >= tail
        })
    }
}

/// Problem data in the solver's canonical form.
#[derive(Debug, Clone)]
pub struct ConeProgram<T> {
    pub objective: Vec<T>,
    pub a: RMat<T>,
    pub b: Vec<T>,
    pub cones: ConeSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    MaxIterations,
}

/// Residuals of the returned iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals<T> {
    pub primal: T,
    pub dual: T,
    pub relative_gap: T,
}

#[derive(Debug, Clone)]
pub struct ConeSolution<T> {
    pub x: Vec<T>,
    pub s: Vec<T>,
    pub z: Vec<T>,
    pub objective: T,
    pub status: SolveStatus,
    pub iterations: usize,
    pub residuals: KktResiduals<T>,
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOptions<T> {
    pub tol: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            tol: T::real(1e-8),
            max_iterations: 100,
        }
    }
}

fn norm2<T: Scalar>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

// ---------------------------------------------------------------------------
// Nesterov-Todd scaling
// ---------------------------------------------------------------------------

enum BlockScaling<T> {
    Nonneg {
        w: Vec<T>,
    },
    Soc {
        start: usize,
        eta: T,
        /// Scaling point on the unit hyperboloid, `J(v) = 1`; `W = eta * (2 v v' - J)`.
        v: Vec<T>,
    },
}

struct Scaling<T> {
    blocks: Vec<BlockScaling<T>>,
    lambda: Vec<T>,
    spec: ConeSpec,
}

impl<T: Scalar> Scaling<T> {
    fn compute(spec: &ConeSpec, s: &[T], z: &[T]) -> Result<Self> {
        let mut blocks = Vec::with_capacity(1 + spec.soc_dims.len());
        if spec.nonneg > 0 {
            let mut w = Vec::with_capacity(spec.nonneg);
            for i in 0..spec.nonneg {
                if !(s[i] > T::zero() && z[i] > T::zero()) {
                    return Err(stalled(0));
                }
                w.push((s[i] / z[i]).sqrt());
            }
            blocks.push(BlockScaling::Nonneg { w });
        }
        for (start, d) in spec.soc_blocks() {
            let sb = &s[start..start + d];
            let zb = &z[start..start + d];
            let js = sb[0] * sb[0] - dot(&sb[1..], &sb[1..]);
            let jz = zb[0] * zb[0] - dot(&zb[1..], &zb[1..]);
            if !(js > T::zero() && jz > T::zero() && sb[0] > T::zero() && zb[0] > T::zero()) {
                return Err(stalled(0));
            }
            let (rjs, rjz) = (js.sqrt(), jz.sqrt());
            // gamma^2 = (1 + sbar' zbar) / 2 with plain inner product.
            let sz = dot(sb, zb) / (rjs * rjz);
            let gamma = ((T::one() + sz) / T::real(2.0)).sqrt();
            // wbar = (sbar + J zbar) / (2 gamma); J(wbar) = 1.
            let scale = (T::real(2.0) * gamma).recip();
            let mut wbar = Vec::with_capacity(d);
            wbar.push((sb[0] / rjs + zb[0] / rjz) * scale);
            for i in 1..d {
                wbar.push((sb[i] / rjs - zb[i] / rjz) * scale);
            }
            // Jordan square root of wbar, still on the unit hyperboloid.
            let denom = (T::real(2.0) * (T::one() + wbar[0])).sqrt();
            let mut v = wbar;
            v[0] += T::one();
            for x in v.iter_mut() {
                *x /= denom;
            }
            let eta = (js / jz).sqrt().sqrt();
            blocks.push(BlockScaling::Soc { start, eta, v });
        }
        let mut scaling = Self {
            blocks,
            lambda: Vec::new(),
            spec: spec.clone(),
        };
        scaling.lambda = scaling.apply_w(z);
        Ok(scaling)
    }

    /// `W u`, block-wise.
    fn apply_w(&self, u: &[T]) -> Vec<T> {
        let mut out = u.to_vec();
        for block in &self.blocks {
            match block {
                BlockScaling::Nonneg { w } => {
                    for (o, &wi) in out.iter_mut().zip(w) {
                        *o *= wi;
                    }
                }
                BlockScaling::Soc { start, eta, v } => {
                    soc_apply(&mut out[*start..*start + v.len()], *eta, v, false);
                }
            }
        }
        out
    }

    /// `W^{-1} u` (W is symmetric).
    fn apply_winv(&self, u: &[T]) -> Vec<T> {
        let mut out = u.to_vec();
        for block in &self.blocks {
            match block {
                BlockScaling::Nonneg { w } => {
                    for (o, &wi) in out.iter_mut().zip(w) {
                        *o /= wi;
                    }
                }
                BlockScaling::Soc { start, eta, v } => {
                    soc_apply(&mut out[*start..*start + v.len()], *eta, v, true);
                }
            }
        }
        out
    }

    /// Jordan product `u o v` over the cone blocks.
    fn jordan_mul(&self, u: &[T], v: &[T]) -> Vec<T> {
        let spec = &self.spec;
        let mut out = vec![T::zero(); u.len()];
        for i in 0..spec.nonneg {
            out[i] = u[i] * v[i];
        }
        for (start, d) in spec.soc_blocks() {
            let (ub, vb) = (&u[start..start + d], &v[start..start + d]);
            out[start] = dot(ub, vb);
            for i in 1..d {
                out[start + i] = ub[0] * vb[i] + vb[0] * ub[i];
            }
        }
        out
    }

    /// Solves `lambda o u = rhs` for `u`.
    fn lambda_solve(&self, rhs: &[T]) -> Vec<T> {
        let spec = &self.spec;
        let lam = &self.lambda;
        let mut out = vec![T::zero(); rhs.len()];
        for i in 0..spec.nonneg {
            out[i] = rhs[i] / lam[i];
        }
        for (start, d) in spec.soc_blocks() {
            let lb = &lam[start..start + d];
            let rb = &rhs[start..start + d];
            let det = lb[0] * lb[0] - dot(&lb[1..], &lb[1..]);
            let u0 = (lb[0] * rb[0] - dot(&lb[1..], &rb[1..])) / det;
            out[start] = u0;
            for i in 1..d {
                out[start + i] = (rb[i] - u0 * lb[i]) / lb[0];
            }
        }
        out
    }
}

/// Applies `eta^{±1} (2 v v' - J)` with `v` replaced by `Jv` for the inverse.
fn soc_apply<T: Scalar>(u: &mut [T], eta: T, v: &[T], inverse: bool) {
    let d = v.len();
    let mut vdotu = v[0] * u[0];
    for i in 1..d {
        let vi = if inverse { -v[i] } else { v[i] };
        vdotu += vi * u[i];
    }
    let two = T::real(2.0);
    let scale = if inverse { eta.recip() } else { eta };
    let head = u[0];
    u[0] = scale * (two * v[0] * vdotu - head);
    for i in 1..d {
        let vi = if inverse { -v[i] } else { v[i] };
        u[i] = scale * (two * vi * vdotu + u[i]);
    }
}

/// Pushes a grazed point back inside the cone by a relative margin.
fn nudge_interior<T: Scalar>(spec: &ConeSpec, v: &mut [T], relative: T) {
    for x in v.iter_mut().take(spec.nonneg) {
        let margin = relative * (T::one() + x.abs());
        if *x <= margin {
            *x = margin;
        }
    }
    for (start, d) in spec.soc_blocks() {
        let tail = norm2(&v[start + 1..start + d]);
        let margin = relative * (T::one() + tail);
        if v[start] <= tail + margin {
            v[start] = tail + margin;
        }
    }
}

/// Strict interiority, matching what the scaling computation requires.
fn strictly_interior<T: Scalar>(spec: &ConeSpec, v: &[T]) -> bool {
    if v[..spec.nonneg].iter().any(|&x| x <= T::zero()) {
        return false;
    }
    spec.soc_blocks().all(|(start, d)| {
        let head = v[start];
        head > T::zero() && head * head > dot(&v[start + 1..start + d], &v[start + 1..start + d])
    })
}

/// Largest step `alpha` keeping `p + alpha d` in the cone (`inf` if unbounded).
fn step_to_boundary<T: Scalar>(spec: &ConeSpec, p: &[T], d: &[T]) -> T {
    let mut alpha = T::infinity();
    for i in 0..spec.nonneg {
        if d[i] < T::zero() {
            alpha = alpha.min(-p[i] / d[i]);
        }
    }
    for (start, dim) in spec.soc_blocks() {
        let (pb, db) = (&p[start..start + dim], &d[start..start + dim]);
        let a0 = pb[0] * pb[0] - dot(&pb[1..], &pb[1..]);
        let a1 = T::real(2.0) * (pb[0] * db[0] - dot(&pb[1..], &db[1..]));
        let a2 = db[0] * db[0] - dot(&db[1..], &db[1..]);
        let tiny = T::real(1e-300);
        if a2.abs() <= tiny {
            if a1 < T::zero() {
                alpha = alpha.min(-a0 / a1);
            }
        } else {
            let disc = a1 * a1 - T::real(4.0) * a2 * a0;
            if disc >= T::zero() {
                let sq = disc.sqrt();
                let qq = -(a1 + a1.signum() * sq) / T::real(2.0);
                for root in [
                    if a2.abs() > tiny {
                        qq / a2
                    } else {
                        T::infinity()
                    },
                    if qq.abs() > tiny {
                        a0 / qq
                    } else {
                        T::infinity()
                    },
                ] {
                    if root > T::zero() {
                        alpha = alpha.min(root);
                    }
                }
            }
        }
        if db[0] < T::zero() {
            alpha = alpha.min(-pb[0] / db[0]);
        }
    }
    alpha
}

// ---------------------------------------------------------------------------
// Dense Cholesky
// ---------------------------------------------------------------------------

struct Cholesky<T> {
    l: RMat<T>,
}

impl<T: Scalar> Cholesky<T> {
    fn factor(m: &RMat<T>, reg: T) -> Option<Self> {
        let n = m.rows();
        let mut l = RMat::zeros(n, n);
        for j in 0..n {
            for i in j..n {
                let mut sum = m[(i, j)] + if i == j { reg } else { T::zero() };
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= T::zero() {
                        return None;
                    }
                    l[(j, j)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Some(Self { l })
    }

    fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.l.rows();
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut v = y[i];
            for (k, yk) in y.iter().enumerate().take(i) {
                v -= self.l[(i, k)] * *yk;
            }
            y[i] = v / self.l[(i, i)];
        }
        for i in (0..n).rev() {
            let mut v = y[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                v -= self.l[(k, i)] * *yk;
            }
            y[i] = v / self.l[(i, i)];
        }
        y
    }
}

fn stalled(iterations: usize) -> Error {
    Error::SolverStalled {
        iterations,
        primal: f64::NAN,
        dual: f64::NAN,
        gap: f64::NAN,
    }
}

// ---------------------------------------------------------------------------
// Main loop
// ---------------------------------------------------------------------------

struct Kkt<T> {
    normal: RMat<T>,
    chol: Cholesky<T>,
    /// Jacobi scale of the normal matrix; the factorization runs on
    /// `D^-1 M D^-1` to tame the conditioning W induces near the optimum.
    jacobi: Vec<T>,
}

impl<T: Scalar> Kkt<T> {
    fn assemble(a: &RMat<T>, scaling: &Scaling<T>, iterations: usize) -> Result<Self> {
        let (m, n) = (a.rows(), a.cols());
        // B = W^{-1} A, built column-wise.
        let mut b = RMat::zeros(m, n);
        let mut col = vec![T::zero(); m];
        for j in 0..n {
            for r in 0..m {
                col[r] = a[(r, j)];
            }
            let scaled = scaling.apply_winv(&col);
            for r in 0..m {
                b[(r, j)] = scaled[r];
            }
        }
        // normal = B' B, symmetric product accumulated row by row.
        let mut normal: RMat<T> = RMat::zeros(n, n);
        for r in 0..m {
            let row = b.row(r).to_vec();
            for i in 0..n {
                let bi = row[i];
                if bi == T::zero() {
                    continue;
                }
                for j in i..n {
                    normal[(i, j)] += bi * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                normal[(i, j)] = normal[(j, i)];
            }
        }
        let jacobi: Vec<T> = (0..n)
            .map(|i| normal[(i, i)].max(T::real(1e-300)).sqrt())
            .collect();
        let mut scaled = RMat::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                scaled[(i, j)] = normal[(i, j)] / (jacobi[i] * jacobi[j]);
            }
        }
        let mut reg = T::real(1e-14);
        for _ in 0..5 {
            if let Some(chol) = Cholesky::factor(&scaled, reg) {
                return Ok(Self {
                    normal,
                    chol,
                    jacobi,
                });
            }
            reg *= T::real(100.0);
        }
        Err(stalled(iterations))
    }

    /// Solves `M v = rhs` through the Jacobi-scaled factorization.
    fn normal_solve(&self, rhs: &[T]) -> Vec<T> {
        let scaled_rhs: Vec<T> = rhs.iter().zip(&self.jacobi).map(|(&r, &d)| r / d).collect();
        let mut v = self.chol.solve(&scaled_rhs);
        for (x, &d) in v.iter_mut().zip(&self.jacobi) {
            *x /= d;
        }
        v
    }

    /// Solves the scaled Newton system
    ///   A' dz = bx,   A dx + ds = bz,   W^{-1} ds + W dz = bs
    /// returning `(dx, dz, ds)`.
    fn solve(
        &self,
        a: &RMat<T>,
        scaling: &Scaling<T>,
        bx: &[T],
        bz: &[T],
        bs: &[T],
    ) -> (Vec<T>, Vec<T>, Vec<T>) {
        // rhs = bx + A' W^{-2} bz - A' W^{-1} bs
        let winv_bz = scaling.apply_winv(bz);
        let winv2_bz = scaling.apply_winv(&winv_bz);
        let winv_bs = scaling.apply_winv(bs);
        let mut rhs = a.tr_mul_vec(&winv2_bz);
        let t2 = a.tr_mul_vec(&winv_bs);
        for i in 0..rhs.len() {
            rhs[i] += bx[i] - t2[i];
        }
        let mut dx = self.normal_solve(&rhs);
        // Iterative refinement against the unregularized matrix; the dual
        // residual of the outer iteration is bounded by this solve's
        // accuracy, so polish until the correction stops paying off.
        for _ in 0..3 {
            let mdx = self.normal.mul_vec(&dx);
            let resid: Vec<T> = rhs.iter().zip(&mdx).map(|(&r, &m)| r - m).collect();
            let corr = self.normal_solve(&resid);
            let corr_norm = norm2(&corr);
            for (d, c) in dx.iter_mut().zip(&corr) {
                *d += *c;
            }
            if corr_norm <= T::real(1e-14) * (T::one() + norm2(&dx)) {
                break;
            }
        }

        // dz = W^{-2}(A dx - bz) + W^{-1} bs
        let adx = a.mul_vec(&dx);
        let diff: Vec<T> = adx.iter().zip(bz).map(|(&p, &q)| p - q).collect();
        let winv_diff = scaling.apply_winv(&diff);
        let winv2_diff = scaling.apply_winv(&winv_diff);
        let dz: Vec<T> = winv2_diff
            .iter()
            .zip(&winv_bs)
            .map(|(&p, &q)| p + q)
            .collect();
        // ds = bz - A dx
        let ds: Vec<T> = bz.iter().zip(&adx).map(|(&p, &q)| p - q).collect();
        (dx, dz, ds)
    }
}

/// Solves the cone program. Returns the best iterate with
/// [`SolveStatus::MaxIterations`] when the iteration cap is hit; hard
/// numerical breakdown surfaces as an error.
pub fn solve<T: Scalar>(prob: &ConeProgram<T>, opts: &SolverOptions<T>) -> Result<ConeSolution<T>> {
    let a = &prob.a;
    let (m, n) = (a.rows(), a.cols());
    assert_eq!(prob.b.len(), m);
    assert_eq!(prob.objective.len(), n);
    assert_eq!(prob.cones.total_dim(), m);
    let spec = &prob.cones;
    let c = &prob.objective;
    let b = &prob.b;

    // Least-squares primal start, shifted into the cone interior; dual start
    // at the cone identity.
    let mut x = {
        let mut gram = RMat::zeros(n, n);
        for r in 0..m {
            let row = a.row(r).to_vec();
            for i in 0..n {
                for j in i..n {
                    gram[(i, j)] += row[i] * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                gram[(i, j)] = gram[(j, i)];
            }
        }
        let max_diag = (0..n).fold(T::zero(), |acc, i| acc.max(gram[(i, i)]));
        match Cholesky::factor(&gram, T::real(1e-12) * (T::one() + max_diag)) {
            Some(ch) => ch.solve(&a.tr_mul_vec(b)),
            None => vec![T::zero(); n],
        }
    };
    let e = spec.identity::<T>();
    let mut s = {
        let ax = a.mul_vec(&x);
        let shat: Vec<T> = b.iter().zip(&ax).map(|(&bi, &axi)| bi - axi).collect();
        let mut shift = T::zero();
        for &v in shat.iter().take(spec.nonneg) {
            shift = shift.max(-v);
        }
        for (start, d) in spec.soc_blocks() {
            let tail = norm2(&shat[start + 1..start + d]);
            shift = shift.max(tail - shat[start]);
        }
        shat.iter()
            .zip(&e)
            .map(|(&v, &ei)| v + (T::one() + shift) * ei)
            .collect::<Vec<T>>()
    };
    let mut z = e.clone();

    let deg = T::count(spec.degree());
    let norm_b = T::one().max(norm2(b));
    let norm_c = T::one().max(norm2(c));
    let step_damp = T::real(0.99);

    let mut best: Option<(T, ConeSolution<T>)> = None;

    for iter in 0..opts.max_iterations {
        // Residuals and convergence metrics.
        let ax = a.mul_vec(&x);
        let res_z: Vec<T> = ax
            .iter()
            .zip(&s)
            .zip(b)
            .map(|((&axi, &si), &bi)| axi + si - bi)
            .collect();
        let atz = a.tr_mul_vec(&z);
        let res_x: Vec<T> = atz.iter().zip(c).map(|(&ai, &ci)| ai + ci).collect();
        let gap = dot(&s, &z);
        let pobj = dot(c, &x);
        let dobj = -dot(b, &z);
        let pres = norm2(&res_z) / norm_b;
        let dres = norm2(&res_x) / norm_c;
        let relgap = gap / T::one().max(pobj.abs().max(dobj.abs()));

        let score = pres.max(dres).max(relgap);
        let snapshot = |status: SolveStatus| ConeSolution {
            x: x.clone(),
            s: s.clone(),
            z: z.clone(),
            objective: pobj,
            status,
            iterations: iter,
            residuals: KktResiduals {
                primal: pres,
                dual: dres,
                relative_gap: relgap,
            },
        };
        if best.as_ref().is_none_or(|(bs, _)| score < *bs) {
            best = Some((score, snapshot(SolveStatus::MaxIterations)));
        }
        if pres <= opts.tol && dres <= opts.tol && relgap <= opts.tol {
            return Ok(snapshot(SolveStatus::Optimal));
        }

        // Rounding can graze the cone boundary once the gap is tiny; nudge
        // toward the identity, scaled to each block, and retry before
        // settling for the best iterate.
        let mut scaling = Scaling::compute(spec, &s, &z);
        for relative in [1e-9, 1e-7, 1e-5] {
            if scaling.is_ok() {
                break;
            }
            nudge_interior(spec, &mut s, T::real(relative));
            nudge_interior(spec, &mut z, T::real(relative));
            scaling = Scaling::compute(spec, &s, &z);
        }
        let scaling = match scaling {
            Ok(sc) => sc,
            Err(_) => break,
        };
        let mu = gap / deg;

        let kkt = match Kkt::assemble(a, &scaling, iter) {
            Ok(kkt) => kkt,
            Err(_) => break,
        };

        // Predictor (affine) direction.
        let bx: Vec<T> = res_x.iter().map(|&v| -v).collect();
        let bz: Vec<T> = res_z.iter().map(|&v| -v).collect();
        let bs_aff: Vec<T> = scaling.lambda.iter().map(|&v| -v).collect();
        let (_, dz_a, ds_a) = kkt.solve(a, &scaling, &bx, &bz, &bs_aff);

        let alpha_aff = step_to_boundary(spec, &s, &ds_a)
            .min(step_to_boundary(spec, &z, &dz_a))
            .min(T::one());
        let s_aff: Vec<T> = s
            .iter()
            .zip(&ds_a)
            .map(|(&p, &d)| p + alpha_aff * d)
            .collect();
        let z_aff: Vec<T> = z
            .iter()
            .zip(&dz_a)
            .map(|(&p, &d)| p + alpha_aff * d)
            .collect();
        let rho = dot(&s_aff, &z_aff) / gap;
        let sigma = rho.max(T::zero()).min(T::one()).powi(3);

        // Corrector (combined) direction.
        let one_minus_sigma = T::one() - sigma;
        let bx_c: Vec<T> = res_x.iter().map(|&v| -one_minus_sigma * v).collect();
        let bz_c: Vec<T> = res_z.iter().map(|&v| -one_minus_sigma * v).collect();
        let winv_ds = scaling.apply_winv(&ds_a);
        let w_dz = scaling.apply_w(&dz_a);
        let cross = scaling.jordan_mul(&winv_ds, &w_dz);
        let lam_sq = scaling.jordan_mul(&scaling.lambda, &scaling.lambda);
        let mut comp = vec![T::zero(); m];
        let sig_mu = sigma * mu;
        for i in 0..m {
            comp[i] = sig_mu * e[i] - lam_sq[i] - cross[i];
        }
        let bs_c = scaling.lambda_solve(&comp);
        let (dx, dz, ds) = kkt.solve(a, &scaling, &bx_c, &bz_c, &bs_c);

        let mut alpha = (step_to_boundary(spec, &s, &ds).min(step_to_boundary(spec, &z, &dz))
            * step_damp)
            .min(T::one());
        if !alpha.is_finite() || alpha <= T::zero() {
            break;
        }
        // Backtrack until the damped step provably stays interior (rounding
        // can push the boundary estimate slightly long).
        let mut committed = false;
        for _ in 0..30 {
            let s_new: Vec<T> = s.iter().zip(&ds).map(|(&p, &d)| p + alpha * d).collect();
            let z_new: Vec<T> = z.iter().zip(&dz).map(|(&p, &d)| p + alpha * d).collect();
            if strictly_interior(spec, &s_new) && strictly_interior(spec, &z_new) {
                for i in 0..n {
                    x[i] += alpha * dx[i];
                }
                s = s_new;
                z = z_new;
                committed = true;
                break;
            }
            alpha *= T::real(0.5);
        }
        if !committed {
            break;
        }
    }

    let (_, sol) = best.expect("at least one iterate recorded");
    Ok(sol)
}
