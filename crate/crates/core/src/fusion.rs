//! Two-estimator fusion: inverse covariance intersection with the mixing
//! weight chosen by Brent minimization of the fused covariance trace, plus
//! the simple and information-weighted averages used as baselines.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GOLDEN_SECTION: f64 = 0.381_966_011_250_105_1;
const SQRT_EPS: f64 = 1.490_116_119_384_765_6e-8;
pub const BRENT_MAX_ITER: usize = 100;
pub const DEFAULT_OMEGA_TOL: f64 = 1e-5;

/// Result of a scalar minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub iterations: usize,
}

/// Brent's golden-section / parabolic-interpolation minimizer on the closed
/// interval `[lo, hi]`. Endpoints are evaluated as well, so a monotone
/// function returns the better endpoint exactly.
pub fn brent_minimize<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Result<Minimum>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut eval = |x: f64| -> Result<f64> {
        let v = f(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("objective is {v} at {x}")))
        }
    };

    let (mut a, mut b) = (lo, hi);
    let mut x = a + GOLDEN_SECTION * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = eval(x)?;
    let (mut fw, mut fv) = (fx, fx);
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let mut iterations = 0;

    while iterations < BRENT_MAX_ITER {
        let xm = 0.5 * (a + b);
        let tol1 = SQRT_EPS * x.abs() + tol / 3.0;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        iterations += 1;
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            } else {
                q = -q;
            }
            let e_prev = e;
            e = d;
            if p.abs() < (0.5 * q * e_prev).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = tol1.copysign(xm - x);
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = GOLDEN_SECTION * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + tol1.copysign(d) };
        let fu = eval(u)?;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }

    let mut best = Minimum { x, value: fx, iterations };
    for end in [lo, hi] {
        let fe = eval(end)?;
        if fe < best.value {
            best = Minimum { x: end, value: fe, iterations };
        }
    }
    Ok(best)
}

/// ICI output.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedEstimate {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
    pub omega: f64,
    /// Gain applied to the first estimate.
    pub k: DMatrix<f64>,
    /// Gain applied to the second estimate.
    pub l: DMatrix<f64>,
}

fn check_pair(pa: &DMatrix<f64>, pb: &DMatrix<f64>) -> Result<usize> {
    let n = pa.nrows();
    if pa.ncols() != n || pb.nrows() != n || pb.ncols() != n || n == 0 {
        return Err(Error::Dimension(format!(
            "covariances must be square and equal-sized, got {:?} and {:?}",
            pa.shape(),
            pb.shape()
        )));
    }
    Ok(n)
}

fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let sym = (m + m.transpose()) * 0.5;
    sym.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::FusionDegenerate(format!("{what} is not positive definite")))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// Precomputed inverses shared by objective evaluations.
struct IciTerms<'a> {
    pa: &'a DMatrix<f64>,
    pb: &'a DMatrix<f64>,
    pa_inv: DMatrix<f64>,
    pb_inv: DMatrix<f64>,
}

impl<'a> IciTerms<'a> {
    fn new(pa: &'a DMatrix<f64>, pb: &'a DMatrix<f64>) -> Result<Self> {
        check_pair(pa, pb)?;
        Ok(Self { pa, pb, pa_inv: spd_inverse(pa, "first covariance")?, pb_inv: spd_inverse(pb, "second covariance")? })
    }

    /// `(fused covariance, inverse of the mixed covariance)`.
    fn fused(&self, omega: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let mixed = self.pa * omega + self.pb * (1.0 - omega);
        let mixed_inv = spd_inverse(&mixed, "mixed covariance")?;
        let info = &self.pa_inv + &self.pb_inv - &mixed_inv;
        let sigma = spd_inverse(&info, "fused information")?;
        Ok((symmetrize(sigma), mixed_inv))
    }
}

fn check_omega(omega: f64) -> Result<()> {
    if (0.0..=1.0).contains(&omega) {
        Ok(())
    } else {
        Err(Error::Domain(format!("omega must lie in [0, 1], got {omega}")))
    }
}

/// Inverse covariance intersection of two estimates at a given `omega`.
pub fn ici_fuse(
    xa: &DVector<f64>,
    pa: &DMatrix<f64>,
    xb: &DVector<f64>,
    pb: &DMatrix<f64>,
    omega: f64,
) -> Result<FusedEstimate> {
    check_omega(omega)?;
    let terms = IciTerms::new(pa, pb)?;
    if xa.len() != pa.nrows() || xb.len() != pb.nrows() {
        return Err(Error::Dimension("state and covariance sizes differ".into()));
    }
    let (sigma, mixed_inv) = terms.fused(omega)?;
    let k = &sigma * (&terms.pa_inv - &mixed_inv * omega);
    let l = &sigma * (&terms.pb_inv - &mixed_inv * (1.0 - omega));
    let x = &k * xa + &l * xb;
    Ok(FusedEstimate { x, p: sigma, omega, k, l })
}

/// Trace of the ICI fused covariance at `omega`.
pub fn ici_objective(pa: &DMatrix<f64>, pb: &DMatrix<f64>, omega: f64) -> Result<f64> {
    check_omega(omega)?;
    Ok(IciTerms::new(pa, pb)?.fused(omega)?.0.trace())
}

/// Mixing weight minimizing the fused covariance trace over `[0, 1]`.
///
/// When the objective is flat to rounding (equal covariances) the symmetric
/// weight 0.5 is returned, which makes the fused mean the midpoint.
pub fn optimize_omega(pa: &DMatrix<f64>, pb: &DMatrix<f64>, tol: f64) -> Result<f64> {
    let terms = IciTerms::new(pa, pb)?;
    let objective = |w: f64| -> Result<f64> { Ok(terms.fused(w)?.0.trace()) };
    let best = brent_minimize(objective, 0.0, 1.0, tol)?;
    let mid = objective(0.5)?;
    if mid <= best.value + 1e-12 * best.value.abs().max(f64::MIN_POSITIVE) {
        let (f0, f1) = (objective(0.0)?, objective(1.0)?);
        let flat = (f0 - mid).abs() <= 1e-12 * mid.abs() && (f1 - mid).abs() <= 1e-12 * mid.abs();
        if flat {
            return Ok(0.5);
        }
    }
    Ok(best.x)
}

/// [`optimize_omega`] followed by [`ici_fuse`].
pub fn ici_fuse_optimal(
    xa: &DVector<f64>,
    pa: &DMatrix<f64>,
    xb: &DVector<f64>,
    pb: &DMatrix<f64>,
    tol: f64,
) -> Result<FusedEstimate> {
    let omega = optimize_omega(pa, pb, tol)?;
    ici_fuse(xa, pa, xb, pb, omega)
}

pub fn simple_average_fuse(xa: &DVector<f64>, xb: &DVector<f64>) -> Result<DVector<f64>> {
    if xa.len() != xb.len() {
        return Err(Error::Dimension(format!("state sizes {} and {} differ", xa.len(), xb.len())));
    }
    Ok((xa + xb) * 0.5)
}

/// Information-form combination that treats the estimates as independent.
pub fn weighted_average_fuse(
    xa: &DVector<f64>,
    pa: &DMatrix<f64>,
    xb: &DVector<f64>,
    pb: &DMatrix<f64>,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    check_pair(pa, pb)?;
    if xa.len() != pa.nrows() || xb.len() != pb.nrows() {
        return Err(Error::Dimension("state and covariance sizes differ".into()));
    }
    let ia = spd_inverse(pa, "first covariance")?;
    let ib = spd_inverse(pb, "second covariance")?;
    let p = symmetrize(spd_inverse(&(&ia + &ib), "information sum")?);
    let x = &p * (ia * xa + ib * xb);
    Ok((x, p))
}

/// Fusion rule applied to the two trackers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FusionStrategy {
    Simple,
    Weighted,
    #[default]
    Ici,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] = [FusionStrategy::Simple, FusionStrategy::Weighted, FusionStrategy::Ici];

    pub fn name(&self) -> &'static str {
        match self {
            FusionStrategy::Simple => "simple",
            FusionStrategy::Weighted => "weighted",
            FusionStrategy::Ici => "ici",
        }
    }
}

/// Fuses with the chosen strategy; `omega` is only reported for ICI. The
/// simple average reports `(Pa + Pb) / 4`.
pub fn fuse(
    strategy: FusionStrategy,
    xa: &DVector<f64>,
    pa: &DMatrix<f64>,
    xb: &DVector<f64>,
    pb: &DMatrix<f64>,
    tol: f64,
) -> Result<(DVector<f64>, DMatrix<f64>, Option<f64>)> {
    match strategy {
        FusionStrategy::Simple => {
            check_pair(pa, pb)?;
            Ok((simple_average_fuse(xa, xb)?, (pa + pb) * 0.25, None))
        }
        FusionStrategy::Weighted => {
            let (x, p) = weighted_average_fuse(xa, pa, xb, pb)?;
            Ok((x, p, None))
        }
        FusionStrategy::Ici => {
            let f = ici_fuse_optimal(xa, pa, xb, pb, tol)?;
            Ok((f.x, f.p, Some(f.omega)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate_covariance;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn scalar(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    fn random_spd(rng: &mut impl Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(n, n) * 0.05
    }

    #[test]
    fn brent_quadratics() {
        let m = brent_minimize(|x| Ok((x - 0.3) * (x - 0.3)), 0.0, 1.0, 1e-5).unwrap();
        assert!((m.x - 0.3).abs() <= 1e-5);
        let m = brent_minimize(|x| Ok(x * x - x), 0.0, 1.0, 1e-5).unwrap();
        assert!((m.x - 0.5).abs() <= 1e-5);
        assert!(m.iterations <= BRENT_MAX_ITER);
    }

    #[test]
    fn brent_finds_interior_sine_minimum() {
        // grid oracle
        let grid = (0..=10_000).map(|i| i as f64 * 1e-4).min_by(|a, b| (5.0 * a).sin().total_cmp(&(5.0 * b).sin())).unwrap();
        assert!((grid - 3.0 * PI / 10.0).abs() <= 1e-4);
        let m = brent_minimize(|x| Ok((5.0 * x).sin()), 0.0, 1.0, 1e-5).unwrap();
        assert!((m.x - 3.0 * PI / 10.0).abs() <= 1e-4, "{m:?}");
    }

    #[test]
    fn brent_monotone_returns_endpoint() {
        let m = brent_minimize(Ok, 0.0, 1.0, 1e-5).unwrap();
        assert_eq!(m.x, 0.0);
        let m = brent_minimize(|x| Ok(-x), 0.0, 1.0, 1e-5).unwrap();
        assert_eq!(m.x, 1.0);
    }

    #[test]
    fn brent_errors() {
        assert!(matches!(brent_minimize(|_| Ok(f64::NAN), 0.0, 1.0, 1e-5), Err(Error::Numeric(_))));
        assert!(brent_minimize(Ok, 1.0, 0.0, 1e-5).is_err());
    }

    #[test]
    fn equal_covariances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_spd(&mut rng, 4);
        let xa = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let xb = DVector::from_vec(vec![-1.0, 0.0, 5.0, 2.0]);
        for omega in [0.0, 0.3, 0.5, 1.0] {
            let f = ici_fuse(&xa, &p, &xb, &p, omega).unwrap();
            assert!((&f.p - &p).amax() < 1e-9);
            let eye = DMatrix::<f64>::identity(4, 4);
            assert!((&f.k - &eye * (1.0 - omega)).amax() < 1e-9);
            assert!((&f.l - &eye * omega).amax() < 1e-9);
        }
        let omega = optimize_omega(&p, &p, DEFAULT_OMEGA_TOL).unwrap();
        assert_eq!(omega, 0.5);
        let f = ici_fuse(&xa, &p, &xb, &p, omega).unwrap();
        assert!((&f.x - (&xa + &xb) * 0.5).amax() < 1e-9);
    }

    #[test]
    fn scalar_closed_form() {
        let x = |v: f64| DVector::from_element(1, v);
        let f = ici_fuse(&x(3.0), &scalar(1.0), &x(7.0), &scalar(2.0), 0.0).unwrap();
        assert!((f.p[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((f.k[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(f.l[(0, 0)].abs() < 1e-12);
        assert!((f.x[0] - 3.0).abs() < 1e-12);
        let omega = optimize_omega(&scalar(1.0), &scalar(2.0), DEFAULT_OMEGA_TOL).unwrap();
        assert_eq!(omega, 0.0);
        // closed form objective (1.5 - 1/(2 - w))^-1
        for w in [0.0, 0.25, 0.75, 1.0] {
            let obj = ici_objective(&scalar(1.0), &scalar(2.0), w).unwrap();
            assert!((obj - 1.0 / (1.5 - 1.0 / (2.0 - w))).abs() < 1e-12);
        }
    }

    #[test]
    fn omega_matches_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..30 {
            let n = rng.random_range(2..=7);
            let (pa, pb) = (random_spd(&mut rng, n), random_spd(&mut rng, n));
            let (gw, gv) = (0..=1000)
                .map(|i| {
                    let w = i as f64 * 1e-3;
                    (w, ici_objective(&pa, &pb, w).unwrap())
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let w = optimize_omega(&pa, &pb, DEFAULT_OMEGA_TOL).unwrap();
            let v = ici_objective(&pa, &pb, w).unwrap();
            assert!((w - gw).abs() <= 1e-3, "brent {w} grid {gw}");
            assert!(v <= gv + 1e-9);
            assert!(v <= ici_objective(&pa, &pb, 0.0).unwrap() + 1e-9);
            assert!(v <= ici_objective(&pa, &pb, 1.0).unwrap() + 1e-9);
        }
    }

    #[test]
    fn gains_sum_to_identity_and_cov_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let n = [3, 6, 7][rng.random_range(0..3)];
            let (pa, pb) = (random_spd(&mut rng, n), random_spd(&mut rng, n));
            let xa = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let xb = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let f = ici_fuse(&xa, &pa, &xb, &pb, rng.random_range(0.0..=1.0)).unwrap();
            assert!((&f.k + &f.l - DMatrix::identity(n, n)).amax() < 1e-9);
            assert!(validate_covariance(&f.p).unwrap().is_valid());
        }
    }

    #[test]
    fn ici_more_conservative_than_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let n = rng.random_range(1..=7);
            let (pa, pb) = (random_spd(&mut rng, n), random_spd(&mut rng, n));
            let x = DVector::zeros(n);
            let (_, naive) = weighted_average_fuse(&x, &pa, &x, &pb).unwrap();
            let ici = ici_fuse_optimal(&x, &pa, &x, &pb, DEFAULT_OMEGA_TOL).unwrap();
            assert!(ici.p.trace() >= naive.trace() - 1e-12);
        }
    }

    #[test]
    fn self_fusion_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_spd(&mut rng, 6);
        let x = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let f = ici_fuse_optimal(&x, &p, &x, &p, DEFAULT_OMEGA_TOL).unwrap();
        assert!((&f.x - &x).amax() < 1e-9);
    }

    #[test]
    fn averages() {
        let x = |v: f64| DVector::from_element(1, v);
        assert_eq!(simple_average_fuse(&x(2.0), &x(2.0)).unwrap(), x(2.0));
        let (m, _) = weighted_average_fuse(&x(0.0), &scalar(1.0), &x(4.0), &scalar(1.0)).unwrap();
        assert!((m[0] - 2.0).abs() < 1e-12);
        let (m, p) = weighted_average_fuse(&x(0.0), &scalar(1.0), &x(4.0), &scalar(3.0)).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-12);
        assert!((p[(0, 0)] - 0.75).abs() < 1e-12);
        assert!(simple_average_fuse(&x(1.0), &DVector::zeros(2)).is_err());
    }

    #[test]
    fn degenerate_inputs() {
        let x = DVector::zeros(2);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let good = DMatrix::identity(2, 2);
        assert!(matches!(ici_fuse(&x, &bad, &x, &good, 0.5), Err(Error::FusionDegenerate(_))));
        assert!(matches!(weighted_average_fuse(&x, &bad, &x, &good), Err(Error::FusionDegenerate(_))));
        assert!(ici_fuse(&x, &good, &x, &good, 1.5).is_err());
        assert!(ici_fuse(&x, &good, &x, &DMatrix::identity(3, 3), 0.5).is_err());
    }
}
