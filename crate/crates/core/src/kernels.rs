//! Closed-form fundamental solutions: the Laplace kernel `Γ`, the
//! flat-interface two-phase kernel `H` and its anisotropic version
//! `H_{A0}`, for any dimension `n ≥ 3`.
//!
//! Branch convention: a point with last coordinate exactly 0 belongs to the
//! closed lower half-space.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SMatrix, SVector};

use crate::geometry::{mirror, Point};
use crate::{Error, Result};

/// Surface area of the unit sphere in `ℝⁿ`.
pub fn omega_n(n: usize) -> f64 {
    // 2 π^{n/2} / Γ(n/2), with Γ at integers and half-integers
    let half_gamma = if n % 2 == 0 {
        (1..n / 2).map(|k| k as f64).product::<f64>()
    } else {
        let mut g = PI.sqrt();
        let mut s = 0.5;
        while s < n as f64 / 2.0 - 0.25 {
            g *= s;
            s += 1.0;
        }
        g
    };
    2.0 * PI.powf(n as f64 / 2.0) / half_gamma
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaplaceKernel<const N: usize> {
    pub omega: f64,
}

impl<const N: usize> Default for LaplaceKernel<N> {
    fn default() -> Self {
        Self::new()
    }
}

impl<const N: usize> LaplaceKernel<N> {
    pub fn new() -> Self {
        assert!(N >= 3, "kernels need n >= 3");
        Self { omega: omega_n(N) }
    }

    fn norm_const(&self) -> f64 {
        1.0 / ((N as f64 - 2.0) * self.omega)
    }

    /// `|x−y|^{2−n} / ((n−2) ω_n)`
    pub fn eval(&self, x: &Point<N>, y: &Point<N>) -> Result<f64> {
        let r = (x - y).norm();
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        Ok(r.powi(2 - N as i32) * self.norm_const())
    }

    /// `∇_x Γ(x, y) = −(x−y) |x−y|^{−n} / ω_n`
    pub fn grad(&self, x: &Point<N>, y: &Point<N>) -> Result<Point<N>> {
        let d = x - y;
        let r = d.norm();
        if r == 0.0 {
            return Err(Error::Singularity);
        }
        Ok(-d * (r.powi(-(N as i32)) / self.omega))
    }
}

pub fn gamma_eval<const N: usize>(x: &Point<N>, y: &Point<N>) -> Result<f64> {
    LaplaceKernel::<N>::new().eval(x, y)
}

pub fn gamma_grad<const N: usize>(x: &Point<N>, y: &Point<N>) -> Result<Point<N>> {
    LaplaceKernel::<N>::new().grad(x, y)
}

/// Which closed half-space an evaluation point is taken in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    pub fn of<const N: usize>(x: &Point<N>) -> Self {
        if x[N - 1] > 0.0 {
            Side::Upper
        } else {
            Side::Lower
        }
    }
}

/// Fundamental solution of `−div((1 + (k−1)χ⁺)∇·)`: conductivity `k` on
/// `{x_n > 0}` and 1 below.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoPhaseKernel<const N: usize> {
    pub k: f64,
    pub laplace: LaplaceKernel<N>,
}

impl<const N: usize> TwoPhaseKernel<N> {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidArgument(format!("contrast must be positive, got {k}")));
        }
        Ok(Self { k, laplace: LaplaceKernel::new() })
    }

    /// Coefficients `(a, b)` with `H = a Γ(ξ,η) + b Γ(ξ,η*)` on a branch.
    pub fn coefficients(&self, xi_side: Side, eta_side: Side) -> (f64, f64) {
        let k = self.k;
        match (xi_side, eta_side) {
            (Side::Upper, Side::Upper) => (1.0 / k, (k - 1.0) / (k * (k + 1.0))),
            (Side::Lower, Side::Lower) => (1.0, (1.0 - k) / (k + 1.0)),
            _ => (2.0 / (k + 1.0), 0.0),
        }
    }

    pub(crate) fn eval_sided(&self, xi: &Point<N>, eta: &Point<N>, xs: Side, es: Side) -> Result<f64> {
        let (a, b) = self.coefficients(xs, es);
        let direct = self.laplace.eval(xi, eta)?;
        if b == 0.0 {
            return Ok(a * direct);
        }
        Ok(a * direct + b * self.laplace.eval(xi, &mirror(eta))?)
    }

    pub(crate) fn grad_sided(&self, xi: &Point<N>, eta: &Point<N>, xs: Side, es: Side) -> Result<Point<N>> {
        let (a, b) = self.coefficients(xs, es);
        let direct = self.laplace.grad(xi, eta)?;
        if b == 0.0 {
            return Ok(direct * a);
        }
        Ok(direct * a + self.laplace.grad(xi, &mirror(eta))? * b)
    }

    pub fn eval(&self, xi: &Point<N>, eta: &Point<N>) -> Result<f64> {
        self.eval_sided(xi, eta, Side::of(xi), Side::of(eta))
    }

    /// `∇_ξ H(ξ, η)`. On the interface the side has to be given.
    pub fn grad(&self, xi: &Point<N>, eta: &Point<N>, side: Option<Side>) -> Result<Point<N>> {
        let xs = match (xi[N - 1] == 0.0, side) {
            (true, None) => return Err(Error::OnInterface),
            (_, Some(s)) => s,
            (false, None) => Side::of(xi),
        };
        self.grad_sided(xi, eta, xs, Side::of(eta))
    }

    /// Phase conductivity at `ξ`.
    pub fn phase(&self, xi: &Point<N>) -> f64 {
        match Side::of(xi) {
            Side::Upper => self.k,
            Side::Lower => 1.0,
        }
    }
}

struct SpdEigen<const N: usize> {
    values: SVector<f64, N>,
    vectors: SMatrix<f64, N, N>,
}

fn spd_eigen<const N: usize>(a0: &SMatrix<f64, N, N>) -> Result<SpdEigen<N>> {
    if (a0 - a0.transpose()).amax() > 1e-12 * a0.amax() {
        return Err(Error::InvalidArgument("matrix is not symmetric".into()));
    }
    let eig = nalgebra::SymmetricEigen::try_new(DMatrix::from_column_slice(N, N, a0.as_slice()), f64::EPSILON * 0.1, 0)
        .ok_or_else(|| Error::InvalidArgument("eigen-decomposition failed".into()))?;
    let min = eig.eigenvalues.min();
    if !(min > 0.0) {
        return Err(Error::NotSpd { eigenvalue: min });
    }
    Ok(SpdEigen {
        values: SVector::from_column_slice(eig.eigenvalues.as_slice()),
        vectors: SMatrix::from_column_slice(eig.eigenvectors.as_slice()),
    })
}

fn dense_inverse<const N: usize>(m: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    let inv = DMatrix::from_column_slice(N, N, m.as_slice())
        .try_inverse()
        .ok_or(Error::NotSpd { eigenvalue: 0.0 })?;
    Ok(SMatrix::from_column_slice(inv.as_slice()))
}

/// Principal square root and its inverse, polished by Newton steps
/// `S ← (S + S⁻¹A)/2` after the spectral estimate.
fn sqrt_pair<const N: usize>(a0: &SMatrix<f64, N, N>, eig: &SpdEigen<N>) -> Result<(SMatrix<f64, N, N>, SMatrix<f64, N, N>)> {
    let mut s = spectral_power(eig, 0.5);
    for _ in 0..2 {
        let next = (s + dense_inverse(&s)? * a0) * 0.5;
        s = (next + next.transpose()) * 0.5;
    }
    let j = dense_inverse(&s)?;
    Ok((s, (j + j.transpose()) * 0.5))
}

fn spectral_power<const N: usize>(eig: &SpdEigen<N>, p: f64) -> SMatrix<f64, N, N> {
    let q = eig.vectors;
    let d = SMatrix::<f64, N, N>::from_diagonal(&eig.values.map(|l| l.powf(p)));
    q * d * q.transpose()
}

/// `J = √(A0^{-1})`, the principal square root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JMatrix<const N: usize> {
    pub j: SMatrix<f64, N, N>,
}

pub fn j_matrix<const N: usize>(a0: &SMatrix<f64, N, N>) -> Result<JMatrix<N>> {
    let eig = spd_eigen(a0)?;
    Ok(JMatrix { j: sqrt_pair(a0, &eig)?.1 })
}

/// `L = R √(A0^{-1})` with `R` the planar rotation taking `v/|v|`
/// (`v = √A0 e_n`) to `e_n`; `L*` has its last row negated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeOfBasis<const N: usize> {
    pub a0: SMatrix<f64, N, N>,
    pub l: SMatrix<f64, N, N>,
    pub lstar: SMatrix<f64, N, N>,
    /// `√det(A0^{-1})`
    pub detfactor: f64,
    pub j: SMatrix<f64, N, N>,
    pub v_norm: f64,
}

fn householder<const N: usize>(w: &SVector<f64, N>) -> SMatrix<f64, N, N> {
    SMatrix::<f64, N, N>::identity() - w * w.transpose() * 2.0
}

/// Rotation in `span{u, e_n}` taking the unit vector `u` to `e_n`, as the
/// product of two reflections through the bisector `m`.
fn planar_rotation_to_en<const N: usize>(u: &SVector<f64, N>) -> SMatrix<f64, N, N> {
    let mut en = SVector::<f64, N>::zeros();
    en[N - 1] = 1.0;
    let s = u + en;
    if (u - en).norm() < 1e-15 || s.norm() < 1e-300 {
        return SMatrix::identity();
    }
    let m = s.normalize();
    let w1 = u - m;
    let h1 = if w1.norm() > 0.0 { householder(&w1.normalize()) } else { SMatrix::identity() };
    let w2 = m - en;
    let h2 = if w2.norm() > 0.0 { householder(&w2.normalize()) } else { SMatrix::identity() };
    h2 * h1
}

pub fn build_change_of_basis<const N: usize>(a0: &SMatrix<f64, N, N>) -> Result<ChangeOfBasis<N>> {
    let eig = spd_eigen(a0)?;
    let (sqrt_a0, j) = sqrt_pair(a0, &eig)?;
    let v = sqrt_a0.column(N - 1).into_owned();
    let v_norm = v.norm();
    let r = planar_rotation_to_en(&(v / v_norm));
    let l = r * j;
    let mut lstar = l;
    for c in 0..N {
        lstar[(N - 1, c)] = -l[(N - 1, c)];
    }
    let detfactor = eig.values.iter().map(|e| e.powf(-0.5)).product();
    Ok(ChangeOfBasis { a0: *a0, l, lstar, detfactor, j, v_norm })
}

/// Fundamental solution of `−div((1 + (k−1)χ⁺) A0 ∇·)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisoTwoPhaseKernel<const N: usize> {
    pub basis: ChangeOfBasis<N>,
    pub flat: TwoPhaseKernel<N>,
}

impl<const N: usize> AnisoTwoPhaseKernel<N> {
    pub fn new(a0: &SMatrix<f64, N, N>, k: f64) -> Result<Self> {
        Ok(Self { basis: build_change_of_basis(a0)?, flat: TwoPhaseKernel::new(k)? })
    }

    pub fn k(&self) -> f64 {
        self.flat.k
    }

    /// `√det(A0^{-1})` times the two-phase branch formula evaluated with
    /// `Γ(Lξ, Lη)` and `Γ(Lξ, L*η)`; branches follow the signs of `ξ_n`, `η_n`.
    pub fn eval(&self, xi: &Point<N>, eta: &Point<N>) -> Result<f64> {
        let lx = self.basis.l * xi;
        let le = self.basis.l * eta;
        let (a, b) = self.flat.coefficients(Side::of(xi), Side::of(eta));
        let lap = &self.flat.laplace;
        let mut h = a * lap.eval(&lx, &le)?;
        if b != 0.0 {
            h += b * lap.eval(&lx, &(self.basis.lstar * eta))?;
        }
        Ok(self.basis.detfactor * h)
    }

    pub fn grad(&self, xi: &Point<N>, eta: &Point<N>, side: Option<Side>) -> Result<Point<N>> {
        let xs = match (xi[N - 1] == 0.0, side) {
            (true, None) => return Err(Error::OnInterface),
            (_, Some(s)) => s,
            (false, None) => Side::of(xi),
        };
        let lx = self.basis.l * xi;
        let (a, b) = self.flat.coefficients(xs, Side::of(eta));
        let lap = &self.flat.laplace;
        let mut g = lap.grad(&lx, &(self.basis.l * eta))? * a;
        if b != 0.0 {
            g += lap.grad(&lx, &(self.basis.lstar * eta))? * b;
        }
        Ok(self.basis.l.transpose() * g * self.basis.detfactor)
    }

    /// Opposite-side closed form
    /// `√det(A0^{-1}) (2/(k+1)) ⟨A0^{-1}(ξ−η), ξ−η⟩^{(2−n)/2} / ((n−2) ω_n)`.
    pub fn mid_branch_closed_form(&self, xi: &Point<N>, eta: &Point<N>) -> Result<f64> {
        let d = xi - eta;
        let inv = self
            .basis
            .a0
            .try_inverse()
            .ok_or(Error::NotSpd { eigenvalue: 0.0 })?;
        let q = d.dot(&(inv * d));
        if q == 0.0 {
            return Err(Error::Singularity);
        }
        let n = N as f64;
        Ok(self.basis.detfactor * 2.0 / (self.k() + 1.0) * q.powf((2.0 - n) / 2.0) * self.flat.laplace.norm_const())
    }

    /// Conductivity matrix of the operator at `ξ`.
    pub fn sigma(&self, xi: &Point<N>) -> SMatrix<f64, N, N> {
        self.basis.a0 * self.flat.phase(xi)
    }
}

/// Smooth bump `exp(1 − 1/(1 − |x−c|²/R²))` with value 1 at its centre,
/// and its gradient.
pub fn smooth_bump(x: &Point<3>, c: &Point<3>, radius: f64) -> (f64, Point<3>) {
    let d = x - c;
    let s = d.norm_squared() / (radius * radius);
    if s >= 1.0 {
        return (0.0, Point::<3>::zeros());
    }
    let t = 1.0 - s;
    let v = (1.0 - 1.0 / t).exp();
    // d/dx exp(1 − 1/t) = v · (−1/t²) · 2 (x−c)/R²
    let g = d * (-2.0 * v / (t * t * radius * radius));
    (v, g)
}

/// `∫ σ ∇K(·,η) · ∇ψ` for the bump `ψ` of radius `radius` centred at
/// `centre`, in spherical coordinates around `η` (the Jacobian `r²` absorbs
/// the kernel singularity), with the radial integral split where rays
/// cross the plane `x_3 = 0`.
pub fn weak_delta_pairing<F, S>(grad_k: F, sigma: S, eta: &Point<3>, centre: &Point<3>, radius: f64, order: usize) -> Result<f64>
where
    F: Fn(&Point<3>) -> Result<Point<3>>,
    S: Fn(&Point<3>) -> SMatrix<f64, 3, 3>,
{
    let rmax = (eta - centre).norm() + radius;
    let thetas = crate::quadrature::gauss_on(order, 0.0, PI);
    let nphi = 2 * order;
    let mut total = 0.0;
    for &(th, wt) in &thetas {
        let (st, ct) = th.sin_cos();
        for ip in 0..nphi {
            let ph = 2.0 * PI * (ip as f64 + 0.5) / nphi as f64;
            let wp = 2.0 * PI / nphi as f64;
            let dir = Point::<3>::new(st * ph.cos(), st * ph.sin(), ct);
            let mut cuts = vec![0.0];
            if ct != 0.0 {
                let rc = -eta[2] / ct;
                if rc > 0.0 && rc < rmax {
                    cuts.push(rc);
                }
            }
            cuts.push(rmax);
            for w in cuts.windows(2) {
                for (r, wr) in crate::quadrature::gauss_on(order, w[0], w[1]) {
                    let x = eta + dir * r;
                    let (_, gpsi) = smooth_bump(&x, centre, radius);
                    if gpsi == Point::<3>::zeros() {
                        continue;
                    }
                    let gk = grad_k(&x)?;
                    total += wt * wp * wr * r * r * st * gpsi.dot(&(sigma(&x) * gk));
                }
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    type P3 = Point<3>;

    fn random_spd(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let m = Matrix3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
        m * m.transpose() + Matrix3::identity() * 0.2
    }

    fn rand_point(rng: &mut ChaCha8Rng, side: Option<Side>) -> P3 {
        let mut p = P3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(0.05..1.0));
        match side {
            Some(Side::Lower) => p[2] = -p[2],
            Some(Side::Upper) => {}
            None => {
                if rng.gen_bool(0.5) {
                    p[2] = -p[2]
                }
            }
        }
        p
    }

    #[test]
    fn omega_values() {
        assert!((omega_n(3) - 4.0 * PI).abs() < 1e-14);
        assert!((omega_n(4) - 2.0 * PI * PI).abs() < 1e-13);
        assert!((omega_n(5) - 8.0 * PI * PI / 3.0).abs() < 1e-13);
    }

    #[test]
    fn gamma_examples() {
        let o = P3::zeros();
        assert!((gamma_eval(&P3::new(1.0, 0.0, 0.0), &o).unwrap() - 1.0 / (4.0 * PI)).abs() < 1e-16);
        assert!((gamma_eval(&P3::new(0.0, 2.0, 0.0), &o).unwrap() - 1.0 / (8.0 * PI)).abs() < 1e-16);
        assert!(matches!(gamma_eval(&o, &o), Err(Error::Singularity)));
        let g = gamma_grad(&P3::new(1.0, 0.0, 0.0), &o).unwrap();
        assert!((g.norm() - 1.0 / (4.0 * PI)).abs() < 1e-16);
        // points from x toward y
        assert!(g[0] < 0.0);
    }

    #[test]
    fn gamma_grad_central_differences() {
        let x = P3::new(0.3, -0.2, 0.5);
        let y = P3::new(-0.1, 0.1, 0.05);
        let g = gamma_grad(&x, &y).unwrap();
        let fd = |h: f64| {
            P3::from_fn(|i, _| {
                let mut e = P3::zeros();
                e[i] = h;
                (gamma_eval(&(x + e), &y).unwrap() - gamma_eval(&(x - e), &y).unwrap()) / (2.0 * h)
            })
        };
        let (e1, e2) = ((fd(1e-3) - g).norm(), (fd(5e-4) - g).norm());
        assert!(e1 < 1e-5 && e2 < 0.3 * e1);
    }

    #[test]
    fn four_dimensional_instantiation() {
        let x = Point::<4>::new(1.0, 0.0, 0.0, 0.0);
        let y = Point::<4>::zeros();
        // |x−y|^{-2} / (2 · 2π²)
        assert!((gamma_eval(&x, &y).unwrap() - 1.0 / (4.0 * PI * PI)).abs() < 1e-15);
        let h = TwoPhaseKernel::<4>::new(2.0).unwrap();
        let a = Point::<4>::new(0.1, 0.2, 0.3, 0.4);
        let b = Point::<4>::new(-0.3, 0.1, 0.0, -0.2);
        assert!((h.eval(&a, &b).unwrap() - 2.0 / 3.0 * gamma_eval(&a, &b).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn mirror_examples() {
        assert_eq!(mirror(&P3::new(1.0, 2.0, 3.0)), P3::new(1.0, 2.0, -3.0));
        let p = P3::new(0.4, 0.1, 0.0);
        assert_eq!(mirror(&p), p);
    }

    #[test]
    fn unit_contrast_is_laplace_in_every_branch() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h = TwoPhaseKernel::<3>::new(1.0).unwrap();
        for s in [Side::Upper, Side::Lower] {
            for t in [Side::Upper, Side::Lower] {
                for _ in 0..20 {
                    let (x, y) = (rand_point(&mut rng, Some(s)), rand_point(&mut rng, Some(t)));
                    assert_eq!(h.eval(&x, &y).unwrap(), gamma_eval(&x, &y).unwrap());
                    assert_eq!(h.grad(&x, &y, None).unwrap(), gamma_grad(&x, &y).unwrap());
                }
            }
        }
    }

    #[test]
    fn continuity_identity_and_interface_limits() {
        for k in [0.2f64, 0.5, 1.0, 3.0, 25.0] {
            let lhs = 1.0 / k + (k - 1.0) / (k * (k + 1.0));
            assert!((lhs - 2.0 / (k + 1.0)).abs() < 1e-12);
            let h = TwoPhaseKernel::<3>::new(k).unwrap();
            let eta_lo = P3::new(0.1, -0.2, -0.4);
            let eta_up = P3::new(0.1, -0.2, 0.4);
            for eta in [eta_lo, eta_up] {
                let on = P3::new(0.3, 0.2, 0.0);
                let up = h.eval_sided(&on, &eta, Side::Upper, Side::of(&eta)).unwrap();
                let lo = h.eval_sided(&on, &eta, Side::Lower, Side::of(&eta)).unwrap();
                assert!((up - lo).abs() <= 1e-12 * up.abs());
                let eps = 1e-9;
                let a = h.eval(&P3::new(0.3, 0.2, eps), &eta).unwrap();
                let b = h.eval(&P3::new(0.3, 0.2, -eps), &eta).unwrap();
                assert!((a - b).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn zero_coordinate_is_lower_branch() {
        let h = TwoPhaseKernel::<3>::new(3.0).unwrap();
        let on = P3::new(0.3, 0.2, 0.0);
        let eta = P3::new(0.0, 0.0, -0.5);
        let lower = h.eval_sided(&on, &eta, Side::Lower, Side::Lower).unwrap();
        assert_eq!(h.eval(&on, &eta).unwrap(), lower);
        assert!(matches!(h.grad(&on, &eta, None), Err(Error::OnInterface)));
    }

    #[test]
    fn flux_transmission_and_tangential_continuity() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in [0.3, 3.0, 10.0] {
            let h = TwoPhaseKernel::<3>::new(k).unwrap();
            for _ in 0..100 {
                let eta = rand_point(&mut rng, Some(Side::Lower));
                let xi = P3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0);
                let up = h.grad(&xi, &eta, Some(Side::Upper)).unwrap();
                let lo = h.grad(&xi, &eta, Some(Side::Lower)).unwrap();
                assert!((k * up[2] - lo[2]).abs() <= 1e-9 * lo[2].abs().max(1e-3));
                assert!((up[0] - lo[0]).abs() < 1e-12 && (up[1] - lo[1]).abs() < 1e-12);
                // one-sided differences agree with analytic one-sided gradients
                let s = 1e-6;
                let e3 = P3::new(0.0, 0.0, 1.0);
                let fd_up = (-3.0 * h.eval(&xi, &eta).unwrap() + 4.0 * h.eval(&(xi + e3 * s), &eta).unwrap()
                    - h.eval(&(xi + e3 * 2.0 * s), &eta).unwrap())
                    / (2.0 * s);
                assert!((fd_up - up[2]).abs() < 1e-5 * (1.0 + up[2].abs()));
            }
        }
    }

    #[test]
    fn harmonic_away_from_source_and_interface() {
        let h = TwoPhaseKernel::<3>::new(4.0).unwrap();
        let eta = P3::new(0.0, 0.0, -0.3);
        for x in [P3::new(0.4, 0.1, 0.5), P3::new(-0.2, 0.3, -0.6), P3::new(0.5, -0.5, -0.1)] {
            let lap = |s: f64| {
                let mut acc = -6.0 * h.eval(&x, &eta).unwrap();
                for i in 0..3 {
                    let mut e = P3::zeros();
                    e[i] = s;
                    acc += h.eval(&(x + e), &eta).unwrap() + h.eval(&(x - e), &eta).unwrap();
                }
                acc / (s * s)
            };
            let (a, b) = (lap(1e-2).abs(), lap(5e-3).abs());
            assert!(a < 1e-2 && b < 0.3 * a + 1e-9, "{a} {b}");
        }
    }

    #[test]
    fn decay_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 5.0;
        let h = TwoPhaseKernel::<3>::new(k).unwrap();
        let norm = 1.0 / (4.0 * PI);
        for _ in 0..500 {
            let (x, y) = (rand_point(&mut rng, None), rand_point(&mut rng, None));
            let v = h.eval(&x, &y).unwrap() * (x - y).norm() / norm;
            // between the smallest and largest phase coefficients
            assert!(v >= (1.0 / k).min(2.0 / (k + 1.0)) - 1e-12 && v <= 1.0 + 1e-12, "{v}");
        }
    }

    #[test]
    fn change_of_basis_examples() {
        let b = build_change_of_basis(&Matrix3::identity()).unwrap();
        assert_eq!(b.l, Matrix3::identity());
        assert_eq!(b.lstar, Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0)));
        assert_eq!(b.detfactor, 1.0);
        let d = build_change_of_basis(&Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0))).unwrap();
        assert!((d.l - Matrix3::from_diagonal(&Vector3::new(0.5, 1.0, 1.0))).amax() < 1e-15);
        assert!((d.detfactor - 0.5).abs() < 1e-15);
        let bad = Matrix3::from_diagonal(&Vector3::new(1.0, -2.0, 1.0));
        assert!(matches!(build_change_of_basis(&bad), Err(Error::NotSpd { eigenvalue }) if eigenvalue == -2.0));
        let j = j_matrix(&Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0))).unwrap();
        assert!((j.j - Matrix3::from_diagonal(&Vector3::new(0.5, 1.0, 1.0))).amax() < 1e-15);
        assert_eq!(j_matrix(&Matrix3::<f64>::identity()).unwrap().j, Matrix3::identity());
    }

    #[test]
    fn change_of_basis_random_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let a0 = random_spd(&mut rng);
            let b = build_change_of_basis(&a0).unwrap();
            let linv = b.l.try_inverse().unwrap();
            assert!((linv * linv.transpose() - a0).amax() <= 1e-12 * a0.amax().max(1.0));
            let xi = rand_point(&mut rng, None);
            assert!(((b.l * xi)[2] - xi[2] / b.v_norm).abs() < 1e-12);
            assert_eq!(b.lstar.row(0), b.l.row(0));
            assert_eq!(b.lstar.row(2), -b.l.row(2));
            let j = j_matrix(&a0).unwrap().j;
            let e = (j * j * a0 - Matrix3::identity()).amax();
            assert!(e < 1e-12, "JJA0 - I = {e:e}, cond {}", a0.symmetric_eigenvalues().max() / a0.symmetric_eigenvalues().min());
            assert!((j.transpose() * j - a0.try_inverse().unwrap()).amax() < 1e-10);
            assert!((b.j - j).amax() < 1e-13);
            // |L z| = |J z| for the rotated square root
            let z = rand_point(&mut rng, None);
            assert!(((b.l * z).norm() - (j * z).norm()).abs() < 1e-12);
        }
    }

    #[test]
    fn aniso_reduces_to_isotropic_under_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = AnisoTwoPhaseKernel::<3>::new(&Matrix3::identity(), 3.0).unwrap();
        let h = TwoPhaseKernel::<3>::new(3.0).unwrap();
        for _ in 0..100 {
            let (x, y) = (rand_point(&mut rng, None), rand_point(&mut rng, None));
            assert_eq!(a.eval(&x, &y).unwrap(), h.eval(&x, &y).unwrap());
            assert_eq!(a.grad(&x, &y, None).unwrap(), h.grad(&x, &y, None).unwrap());
        }
    }

    #[test]
    fn mid_branch_closed_form_matches_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let a0 = random_spd(&mut rng);
            let kern = AnisoTwoPhaseKernel::<3>::new(&a0, rng.gen_range(0.2..5.0)).unwrap();
            let x = rand_point(&mut rng, Some(Side::Upper));
            let y = rand_point(&mut rng, Some(Side::Lower));
            let a = kern.eval(&x, &y).unwrap();
            let b = kern.mid_branch_closed_form(&x, &y).unwrap();
            assert!((a - b).abs() <= 1e-12 * a.abs());
            // ⟨A0^{-1} d, d⟩ = |J d|²
            let d = x - y;
            let q = d.dot(&(a0.try_inverse().unwrap() * d));
            assert!((q - (kern.basis.j * d).norm_squared()).abs() < 1e-10 * q);
        }
    }

    #[test]
    fn aniso_gradient_matches_differences() {
        let a0 = Matrix3::new(2.0, 0.3, 0.4, 0.3, 1.0, 0.2, 0.4, 0.2, 1.5);
        let kern = AnisoTwoPhaseKernel::<3>::new(&a0, 2.5).unwrap();
        let y = P3::new(0.1, 0.0, -0.3);
        for x in [P3::new(0.3, 0.2, 0.4), P3::new(-0.2, 0.1, -0.5)] {
            let g = kern.grad(&x, &y, None).unwrap();
            let s = 1e-5;
            for i in 0..3 {
                let mut e = P3::zeros();
                e[i] = s;
                let fd = (kern.eval(&(x + e), &y).unwrap() - kern.eval(&(x - e), &y).unwrap()) / (2.0 * s);
                assert!((fd - g[i]).abs() < 1e-7, "{fd} {}", g[i]);
            }
        }
    }

    #[test]
    fn weak_delta_isotropic() {
        for (k, eta) in [(3.0, P3::new(0.0, 0.0, -0.2)), (0.4, P3::new(0.0, 0.0, 0.15))] {
            let h = TwoPhaseKernel::<3>::new(k).unwrap();
            let pair = weak_delta_pairing(
                |x| h.grad(x, &eta, None),
                |x| Matrix3::identity() * h.phase(x),
                &eta,
                &eta,
                0.5,
                24,
            )
            .unwrap();
            assert!((pair - 1.0).abs() < 1e-2, "k={k}: {pair}");
        }
    }

    #[test]
    fn weak_delta_anisotropic_off_centre() {
        let a0 = Matrix3::new(2.0, 0.3, 0.4, 0.3, 1.0, 0.2, 0.4, 0.2, 1.5);
        let kern = AnisoTwoPhaseKernel::<3>::new(&a0, 3.0).unwrap();
        let eta = P3::new(0.05, -0.02, -0.2);
        let centre = P3::new(0.0, 0.0, -0.1);
        let (psi, _) = smooth_bump(&eta, &centre, 0.6);
        let pair = weak_delta_pairing(|x| kern.grad(x, &eta, None), |x| kern.sigma(x), &eta, &centre, 0.6, 24).unwrap();
        assert!((pair / psi - 1.0).abs() < 1e-2, "{pair} vs {psi}");
    }

    proptest! {
        #[test]
        fn two_phase_symmetry(k in 0.1f64..10.0,
                              a in prop::array::uniform3(-1.0f64..1.0),
                              b in prop::array::uniform3(-1.0f64..1.0)) {
            let h = TwoPhaseKernel::<3>::new(k).unwrap();
            let (x, y) = (P3::from(a), P3::from(b));
            prop_assume!((x - y).norm() > 1e-3);
            let (p, q) = (h.eval(&x, &y).unwrap(), h.eval(&y, &x).unwrap());
            prop_assert!((p - q).abs() <= 1e-12 * p.abs());
        }

        #[test]
        fn gamma_symmetric_and_positive(a in prop::array::uniform3(-2.0f64..2.0),
                                        b in prop::array::uniform3(-2.0f64..2.0)) {
            let (x, y) = (P3::from(a), P3::from(b));
            prop_assume!(x != y);
            let g = gamma_eval(&x, &y).unwrap();
            prop_assert!(g > 0.0);
            prop_assert_eq!(g, gamma_eval(&y, &x).unwrap());
        }

        #[test]
        fn aniso_symmetry(k in 0.2f64..5.0,
                          a in prop::array::uniform3(-1.0f64..1.0),
                          b in prop::array::uniform3(-1.0f64..1.0),
                          m in prop::array::uniform3(-0.4f64..0.4)) {
            let a0 = Matrix3::new(1.5, m[0], m[1], m[0], 1.2, m[2], m[1], m[2], 1.8);
            let kern = AnisoTwoPhaseKernel::<3>::new(&a0, k).unwrap();
            let (x, y) = (P3::from(a), P3::from(b));
            prop_assume!((x - y).norm() > 1e-3);
            let (p, q) = (kern.eval(&x, &y).unwrap(), kern.eval(&y, &x).unwrap());
            prop_assert!((p - q).abs() <= 1e-11 * p.abs());
        }
    }
}
