//! Independent reference implementations used as test oracles. They follow
//! the textbook definitions literally (dense projectors, leave-one-out loops,
//! determinant root scans) and share no code paths with the library.

#![allow(dead_code)]

use effcov::estimators::UnitTable;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Balanced panel with `n/2` units per arm, nonzero experiment intercepts,
/// random effects and correlated unit noise.
pub fn random_units(seed: u64, k: usize, n: usize, g: usize) -> UnitTable {
    let mut r = rng(seed);
    let mix = DMatrix::from_fn(g, g, |_, _| r.sample::<f64, _>(StandardNormal));
    let mut t = UnitTable::new(g);
    for e in 0..k {
        t.add_experiment(format!("x{e}"));
        let mu: Vec<f64> = (0..g).map(|_| 3.0 + 2.0 * r.sample::<f64, _>(StandardNormal)).collect();
        let tau: Vec<f64> = (0..g).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        for arm in 0..2u8 {
            for _ in 0..n / 2 {
                let z = DVector::from_fn(g, |_, _| r.sample::<f64, _>(StandardNormal));
                let noise = &mix * z;
                let v: Vec<f64> = (0..g)
                    .map(|j| mu[j] + (arm as f64 - 0.5) * tau[j] + noise[j])
                    .collect();
                t.push(e, arm, &v).unwrap();
            }
        }
    }
    t
}

/// Signed outcomes `D̃_i = 2(2A_i − 1)D_i`, grouped by experiment.
fn tilde_by_experiment(t: &UnitTable) -> Vec<Vec<DVector<f64>>> {
    let mut groups = vec![Vec::new(); t.num_experiments()];
    for row in t.rows() {
        let sign = if row.arm == 1 { 2.0 } else { -2.0 };
        groups[row.experiment].push(DVector::from_row_slice(row.values) * sign);
    }
    groups
}

/// Jackknife covariance by the literal leave-one-out double loop:
/// `Λ̂₂(t) = (1/n) Σ_i τ̂_{−i}(t) D̃_iᵀ`, averaged over experiments, minus
/// `τ̄τ̄ᵀ`, symmetrized.
pub fn jackknife_leave_one_out(t: &UnitTable) -> DMatrix<f64> {
    let g = t.num_metrics();
    let groups = tilde_by_experiment(t);
    let k = groups.len() as f64;
    let mut second = DMatrix::zeros(g, g);
    let mut tau_bar = DVector::zeros(g);
    for d in &groups {
        let n = d.len();
        let mut lam2 = DMatrix::zeros(g, g);
        for i in 0..n {
            let mut loo = DVector::zeros(g);
            for (j, dj) in d.iter().enumerate() {
                if j != i {
                    loo += dj;
                }
            }
            loo /= (n - 1) as f64;
            lam2 += &loo * d[i].transpose();
        }
        second += lam2 / n as f64;
        tau_bar += d.iter().fold(DVector::zeros(g), |a, x| a + x) / n as f64;
    }
    second /= k;
    tau_bar /= k;
    let raw = second - &tau_bar * tau_bar.transpose();
    (&raw + raw.transpose()) * 0.5
}

/// Within-experiment scatter of `D̃` over `N`, from raw rows.
pub fn within_tilde_scatter(t: &UnitTable) -> DMatrix<f64> {
    let g = t.num_metrics();
    let mut w = DMatrix::zeros(g, g);
    for d in tilde_by_experiment(t) {
        let m = d.iter().fold(DVector::zeros(g), |a, x| a + x) / d.len() as f64;
        for x in &d {
            let r = x - &m;
            w += &r * r.transpose();
        }
    }
    w / t.num_rows() as f64
}

/// `D̃⁰ᵀ(I − kM_T)D̃⁰ / N` with explicit `N×N` matrices: grand-centering
/// `I − 11ᵀ/N` and the within-experiment annihilator `M_T = I − P_T`.
pub fn kclass_dense_moment(t: &UnitTable, kval: f64) -> DMatrix<f64> {
    let big_n = t.num_rows();
    let g = t.num_metrics();
    let mut d = DMatrix::zeros(big_n, g);
    let mut exp = vec![0usize; big_n];
    for (i, row) in t.rows().enumerate() {
        let sign = if row.arm == 1 { 2.0 } else { -2.0 };
        for j in 0..g {
            d[(i, j)] = sign * row.values[j];
        }
        exp[i] = row.experiment;
    }
    let ones = DMatrix::from_element(big_n, big_n, 1.0 / big_n as f64);
    let d0 = (DMatrix::identity(big_n, big_n) - ones) * &d;
    let mut p = DMatrix::zeros(big_n, big_n);
    for a in 0..big_n {
        let size = exp.iter().filter(|&&e| e == exp[a]).count() as f64;
        for b in 0..big_n {
            if exp[a] == exp[b] {
                p[(a, b)] = 1.0 / size;
            }
        }
    }
    let m_t = DMatrix::identity(big_n, big_n) - p;
    let a = DMatrix::identity(big_n, big_n) - m_t * kval;
    d0.transpose() * a * d0 / big_n as f64
}

/// k-class weights `[S̃⁰ᵀ(I − kM_T)S̃⁰]⁻¹ S̃⁰ᵀ(I − kM_T)Ỹ⁰` from the dense moment.
pub fn kclass_dense(t: &UnitTable, kval: f64) -> DVector<f64> {
    let q = kclass_dense_moment(t, kval);
    let g = q.nrows();
    let lhs = q.view((1, 1), (g - 1, g - 1)).into_owned();
    let rhs = q.view((1, 0), (g - 1, 1)).into_owned();
    let sol = lhs.lu().solve(&rhs).expect("nonsingular k-class system");
    DVector::from_column_slice(sol.as_slice())
}

fn det(m: &DMatrix<f64>) -> f64 {
    m.clone().lu().determinant()
}

/// TLS weights from the smallest root of `det(Λ − κΨ)`, located by a scan and
/// bisection, with the null vector solved at `γ_Y = 1`.
pub fn theta2_det_scan(lambda: &DMatrix<f64>, psi: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let g = lambda.nrows();
    let psi_min = psi.clone().symmetric_eigen().eigenvalues.min();
    let bound = lambda.norm() / psi_min + 1.0;
    let f = |kappa: f64| det(&(lambda - psi * kappa));
    let steps = 20_000;
    let h = 2.0 * bound / steps as f64;
    let mut lo = -bound;
    let mut flo = f(lo);
    let mut bracket = None;
    for s in 1..=steps {
        let x = -bound + h * s as f64;
        let fx = f(x);
        if fx == 0.0 || fx.signum() != flo.signum() {
            bracket = Some((lo, x));
            break;
        }
        lo = x;
        flo = fx;
    }
    let (mut a, mut b) = bracket.expect("generalized eigenvalue in range");
    let fa_sign = f(a).signum();
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid == a || mid == b {
            break;
        }
        if f(mid).signum() == fa_sign {
            a = mid;
        } else {
            b = mid;
        }
    }
    let kappa = 0.5 * (a + b);
    let m = lambda - psi * kappa;
    let ss = m.view((1, 1), (g - 1, g - 1)).into_owned();
    let sy = m.view((1, 0), (g - 1, 1)).into_owned();
    let gamma_s = ss.lu().solve(&(-sy)).expect("nonsingular S block");
    (kappa, -DVector::from_column_slice(gamma_s.as_slice()))
}

/// Random SPD matrix with eigenvalues in roughly `[lo, lo + spread]`.
pub fn random_spd<R: Rng>(r: &mut R, g: usize, lo: f64, spread: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(g, g, |_, _| r.sample::<f64, _>(StandardNormal));
    let q = a.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(g, |_, _| lo + spread * r.random::<f64>()));
    let m = &q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Random symmetric matrix (possibly indefinite).
pub fn random_symmetric<R: Rng>(r: &mut R, g: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(g, g, |_, _| r.sample::<f64, _>(StandardNormal));
    (&a + a.transpose()) * 0.5
}

/// Secant root of a scalar function.
pub fn secant(f: impl Fn(f64) -> f64, mut x0: f64, mut x1: f64) -> f64 {
    let mut f0 = f(x0);
    for _ in 0..100 {
        let f1 = f(x1);
        if f1 == 0.0 || (x1 - x0).abs() < 1e-15 * x1.abs().max(1.0) {
            return x1;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        x0 = x1;
        f0 = f1;
        x1 = x2;
    }
    x1
}
