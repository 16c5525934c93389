//! Independent brute-force cross-check on S^2: Nystrom discretization of the normalized
//! integral operator over a Gauss-Legendre x uniform-azimuth product grid, and a dense
//! symmetric eigensolver (Householder tridiagonalization + implicit-shift QL, eigenvalues
//! only). Everything here is binary64: only eigenvalues well above 1e-12 are compared, the
//! extended-precision analytic path covers the deep tail.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::spectra::Spectrum;

/// Product quadrature grid on the unit 2-sphere; weights sum to 4 pi.
#[derive(Clone, Debug)]
pub struct SphereGrid {
    pub points: Vec<[f64; 3]>,
    pub weights: Vec<f64>,
    pub n_polar: usize,
    pub n_azimuthal: usize,
}

impl Serialize for SphereGrid {
    fn serialize<S: serde::Serializer>(
        &self,
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Wire {
            n_polar: usize,
            n_azimuthal: usize,
            point_count: usize,
            weight_sum: f64,
        }
        Wire {
            n_polar: self.n_polar,
            n_azimuthal: self.n_azimuthal,
            point_count: self.points.len(),
            weight_sum: self.weights.iter().sum(),
        }
        .serialize(serializer)
    }
}

/// Gauss-Legendre nodes in the polar cosine crossed with a uniform azimuth.
pub fn build_grid(n_polar: usize, n_azimuthal: usize) -> Result<SphereGrid> {
    if n_polar < 2 {
        return Err(Error::param("n_polar", "need at least 2 polar nodes"));
    }
    if n_azimuthal < 4 {
        return Err(Error::param(
            "n_azimuthal",
            "need at least 4 azimuthal nodes",
        ));
    }
    let (z, w_polar) = gauss_legendre_f64(n_polar)?;
    let dphi = std::f64::consts::TAU / n_azimuthal as f64;
    let mut points = Vec::with_capacity(n_polar * n_azimuthal);
    let mut weights = Vec::with_capacity(n_polar * n_azimuthal);
    for (zi, wi) in z.iter().zip(&w_polar) {
        let rho = (1.0 - zi * zi).max(0.0).sqrt();
        for j in 0..n_azimuthal {
            let phi = dphi * j as f64;
            points.push([rho * phi.cos(), rho * phi.sin(), *zi]);
            weights.push(wi * dphi);
        }
    }
    Ok(SphereGrid {
        points,
        weights,
        n_polar,
        n_azimuthal,
    })
}

/// Nodes and weights of the n-point Gauss-Legendre rule on [-1, 1].
fn gauss_legendre_f64(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..100 {
            let (p, dp) = legendre_pair(n, z);
            let step = p / dp;
            z -= step;
            if step.abs() < 1e-15 {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NonConvergence {
                what: "Gauss-Legendre node".into(),
                index: i,
            });
        }
        let (_, dp) = legendre_pair(n, z);
        let weight = 2.0 / ((1.0 - z * z) * dp * dp);
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = weight;
        w[n - 1 - i] = weight;
    }
    Ok((x, w))
}

fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Dense symmetric matrix in full row-major storage.
#[derive(Clone, Debug)]
pub struct SymmetricMatrix {
    order: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    pub fn from_rows(order: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != order * order {
            return Err(Error::domain("matrix storage size mismatch"));
        }
        for i in 0..order {
            for j in 0..i {
                if data[i * order + j] != data[j * order + i] {
                    return Err(Error::domain(format!("entry ({i},{j}) breaks symmetry")));
                }
            }
        }
        Ok(SymmetricMatrix { order, data })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.order + j]
    }

    pub fn trace(&self) -> f64 {
        (0..self.order).map(|i| self.data[i * self.order + i]).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Symmetrized Nystrom matrix of the normalized operator (1/omega_2) integral:
/// A_ij = sqrt(w_i w_j) K(x_i . x_j) / (4 pi). Its eigenvalues approximate the block values
/// c_n / d_n^m with multiplicity d_n^m.
pub fn assemble(kernel: impl Fn(f64) -> f64 + Sync, grid: &SphereGrid) -> SymmetricMatrix {
    let n = grid.points.len();
    let inv_omega = 1.0 / (4.0 * std::f64::consts::PI);
    let sqrt_w: Vec<f64> = grid.weights.iter().map(|w| w.sqrt()).collect();
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let pi = grid.points[i];
        for j in 0..=i {
            let pj = grid.points[j];
            let dot = (pi[0] * pj[0] + pi[1] * pj[1] + pi[2] * pj[2]).clamp(-1.0, 1.0);
            let v = sqrt_w[i] * sqrt_w[j] * kernel(dot) * inv_omega;
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    SymmetricMatrix { order: n, data }
}

/// All eigenvalues, sorted non-increasing. `tol` controls the off-diagonal mass allowed at
/// termination relative to the Frobenius norm; iteration caps surface as diagnostics.
pub fn eigs_symmetric(a: &SymmetricMatrix, tol: f64) -> Result<Vec<f64>> {
    if tol <= 0.0 {
        return Err(Error::param("tol", "tolerance must be > 0"));
    }
    let n = a.order;
    if n == 0 {
        return Ok(Vec::new());
    }
    if n == 1 {
        return Ok(vec![a.data[0]]);
    }
    let mut work = a.data.clone();
    let (mut d, mut e) = householder_tridiagonalize(&mut work, n);
    let anorm = {
        let diag: f64 = d.iter().map(|v| v * v).sum();
        let off: f64 = e.iter().map(|v| v * v).sum();
        (diag + 2.0 * off).sqrt()
    };
    let extra = tol * anorm / (2.0 * (n as f64 - 1.0)).sqrt();
    ql_eigenvalues(&mut d, &mut e, extra)?;
    d.sort_unstable_by(|x, y| y.partial_cmp(x).expect("finite eigenvalues"));
    Ok(d)
}

/// Householder reduction of a symmetric matrix (row-major, destroyed) to tridiagonal form;
/// returns (diagonal, subdiagonal) with the subdiagonal in e[1..n].
fn householder_tridiagonalize(a: &mut [f64], n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let scale: f64 = (0..=l).map(|k| a[i * n + k].abs()).sum();
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    let mut g2 = 0.0;
                    for k in 0..=j {
                        g2 += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g2 += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g2 / h;
                    f_acc += e[j] * a[i * n + j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f3 = a[i * n + j];
                    let g3 = e[j] - hh * f3;
                    e[j] = g3;
                    for k in 0..=j {
                        a[j * n + k] -= f3 * e[k] + g3 * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    for i in 0..n {
        d[i] = a[i * n + i];
    }
    (d, e)
}

/// Implicit-shift QL on a tridiagonal matrix, eigenvalues only (EISPACK imtql1 shape).
/// `extra` widens the deflation threshold so the retired off-diagonal mass stays below the
/// caller's Frobenius budget.
fn ql_eigenvalues(d: &mut [f64], e: &mut [f64], extra: f64) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        'outer: loop {
            let mut m = n - 1;
            for mm in l..n - 1 {
                let dd = d[mm].abs() + d[mm + 1].abs();
                if e[mm].abs() <= f64::EPSILON * dd + extra {
                    m = mm;
                    break;
                }
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 50 {
                return Err(Error::NonConvergence {
                    what: "QL eigenvalue iteration".into(),
                    index: l,
                });
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    continue 'outer;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                f = (d[i] - g) * s + 2.0 * c * b;
                p = s * f;
                d[i + 1] = g + p;
                g = c * f - b;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub flat_index: u64,
    pub numeric: f64,
    pub analytic: f64,
    pub relative_error: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumComparison {
    pub rows: Vec<ComparisonRow>,
    pub max_relative_error: f64,
    /// Sizes of the numeric eigenvalue clusters among the top k (complete clusters only).
    pub clusters: Vec<usize>,
    /// Multiplicities d_n^m of the sorted analytic blocks covering the same range.
    pub expected_clusters: Vec<usize>,
    pub clusters_match: bool,
}

/// Per-index relative error of the top k numeric eigenvalues against the sorted analytic
/// spectrum, plus multiplicity clustering.
pub fn compare_spectra(
    numeric: &[f64],
    analytic: &Spectrum,
    k: usize,
) -> Result<SpectrumComparison> {
    if k > numeric.len() {
        return Err(Error::param(
            "k",
            "fewer numeric eigenvalues than requested",
        ));
    }
    let sorted = analytic.sorted();
    if num_bigint::BigUint::from(k as u64) > *sorted.flat_len() {
        return Err(Error::param(
            "k",
            "beyond the available analytic truncation",
        ));
    }
    let mut rows = Vec::with_capacity(k);
    let mut max_rel: f64 = 0.0;
    for i in 1..=k as u64 {
        let ana = sorted.value_at(i).expect("checked").to_f64();
        let num = numeric[(i - 1) as usize];
        let relative_error = if ana != 0.0 {
            ((num - ana) / ana).abs()
        } else {
            num.abs()
        };
        max_rel = max_rel.max(relative_error);
        rows.push(ComparisonRow {
            flat_index: i,
            numeric: num,
            analytic: ana,
            relative_error,
        });
    }

    // cluster the numeric values by relative gap
    let cluster_tol = 1e-6;
    let mut clusters = Vec::new();
    let mut start = 0usize;
    let mut complete_prefix = true;
    for i in 1..=k {
        let boundary = if i == k {
            // the final cluster may continue past k; count it only if the next numeric
            // eigenvalue clearly separates
            if numeric.len() > k {
                let anchor = numeric[start];
                let scale = anchor.abs().max(1e-300);
                ((anchor - numeric[k]) / scale).abs() > cluster_tol
            } else {
                false
            }
        } else {
            let anchor = numeric[start];
            let scale = anchor.abs().max(1e-300);
            ((anchor - numeric[i]) / scale).abs() > cluster_tol
        };
        if boundary {
            clusters.push(i - start);
            start = i;
        } else if i == k {
            complete_prefix = false;
        }
    }

    // expected multiplicities of the sorted analytic blocks over the same prefix
    let mut expected_clusters = Vec::new();
    let mut covered = 0u64;
    while covered < k as u64 {
        let block = sorted.block_at(covered + 1).expect("within range");
        let mult = block
            .multiplicity
            .to_u64_digits()
            .first()
            .copied()
            .unwrap_or(u64::MAX);
        if covered + mult > k as u64 {
            break;
        }
        expected_clusters.push(mult as usize);
        covered += mult;
    }

    let clusters_match = clusters.iter().zip(&expected_clusters).all(|(a, b)| a == b)
        && (clusters.len() == expected_clusters.len() || !complete_prefix);

    Ok(SpectrumComparison {
        rows,
        max_relative_error: max_rel,
        clusters,
        expected_clusters,
        clusters_match,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonics::SphereDim;
    use crate::kernels::{catalog_coefficients, expand, KernelSpec};
    use crate::real::Decimal;
    use crate::spectra::{eigenvalue_blocks, hs_norm};

    fn m2() -> SphereDim {
        SphereDim::new(2).unwrap()
    }

    #[test]
    fn grid_weight_sum_is_sphere_area() {
        for (np, na) in [(2usize, 4usize), (10, 20), (16, 31)] {
            let g = build_grid(np, na).unwrap();
            let total: f64 = g.weights.iter().sum();
            let rel = (total - 4.0 * std::f64::consts::PI) / (4.0 * std::f64::consts::PI);
            assert!(rel.abs() < 1e-13, "{np}x{na}: {rel}");
            for p in &g.points {
                let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn grid_moments() {
        let g = build_grid(6, 12).unwrap();
        let omega = 4.0 * std::f64::consts::PI;
        // mean of z^2 over the sphere is 1/3
        let z2: f64 = g
            .points
            .iter()
            .zip(&g.weights)
            .map(|(p, w)| p[2] * p[2] * w)
            .sum::<f64>()
            / omega;
        assert!((z2 - 1.0 / 3.0).abs() < 1e-13);
        // mean of P_2(z)^2 is 1/d_2^2 = 1/5
        let p22: f64 = g
            .points
            .iter()
            .zip(&g.weights)
            .map(|(p, w)| {
                let p2 = 0.5 * (3.0 * p[2] * p[2] - 1.0);
                p2 * p2 * w
            })
            .sum::<f64>()
            / omega;
        assert!((p22 - 0.2).abs() < 1e-13);
    }

    #[test]
    fn grid_rejects_degenerate_sizes() {
        assert!(build_grid(1, 8).is_err());
        assert!(build_grid(4, 3).is_err());
    }

    #[test]
    fn eigs_two_by_two() {
        let a = SymmetricMatrix::from_rows(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let ev = eigs_symmetric(&a, 1e-12).unwrap();
        assert!((ev[0] - 3.0).abs() < 1e-14);
        assert!((ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn eigs_identity() {
        let k = 17;
        let mut data = vec![0.0; k * k];
        for i in 0..k {
            data[i * k + i] = 1.0;
        }
        let a = SymmetricMatrix::from_rows(k, data).unwrap();
        let ev = eigs_symmetric(&a, 1e-12).unwrap();
        for v in ev {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    #[allow(clippy::needless_range_loop)]
    fn eigs_recover_conjugated_diagonal() {
        // diag(5, 2, 2) conjugated by a fixed product of Givens rotations
        let d = [5.0, 2.0, 2.0];
        let rot = |a: f64, i: usize, j: usize| {
            let mut r = [[0.0; 3]; 3];
            for k in 0..3 {
                r[k][k] = 1.0;
            }
            r[i][i] = a.cos();
            r[j][j] = a.cos();
            r[i][j] = -a.sin();
            r[j][i] = a.sin();
            r
        };
        let matmul = |x: [[f64; 3]; 3], y: [[f64; 3]; 3]| {
            let mut z = [[0.0; 3]; 3];
            for i in 0..3 {
                for j in 0..3 {
                    for k in 0..3 {
                        z[i][j] += x[i][k] * y[k][j];
                    }
                }
            }
            z
        };
        let q = matmul(rot(0.7, 0, 1), rot(-1.3, 1, 2));
        let mut a = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for k in 0..3 {
                    a[i][j] += q[i][k] * d[k] * q[j][k];
                }
            }
        }
        let mut flat = Vec::with_capacity(9);
        for i in 0..3 {
            for j in 0..3 {
                // symmetrize away the last-bit rounding noise
                flat.push(0.5 * (a[i][j] + a[j][i]));
            }
        }
        let m = SymmetricMatrix::from_rows(3, flat).unwrap();
        let ev = eigs_symmetric(&m, 1e-13).unwrap();
        assert!((ev[0] - 5.0).abs() < 1e-12);
        assert!((ev[1] - 2.0).abs() < 1e-12);
        assert!((ev[2] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn constant_kernel_is_rank_one() {
        let g = build_grid(10, 20).unwrap();
        let a = assemble(|_| 1.0, &g);
        let ev = eigs_symmetric(&a, 1e-13).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-12);
        assert!(ev[1].abs() < 1e-11);
        assert!(ev.last().unwrap().abs() < 1e-11);
    }

    #[test]
    fn linear_kernel_matches_convention() {
        // K(t) = t: eigenvalue 1/3 with multiplicity 3 (c_1 = 1, d_1^2 = 3)
        let g = build_grid(12, 24).unwrap();
        let a = assemble(|t| t, &g);
        let ev = eigs_symmetric(&a, 1e-13).unwrap();
        for v in ev.iter().take(3) {
            assert!((v - 1.0 / 3.0).abs() < 1e-11, "{v}");
        }
        assert!(ev[3].abs() < 1e-11);
    }

    #[test]
    fn multiquadric_top_eigenvalue() {
        let spec = KernelSpec::Multiquadric {
            sigma: Decimal::new("1").unwrap(),
            delta: Decimal::new("0.5").unwrap(),
        };
        let f = spec.pointwise_f64(m2(), 0).unwrap();
        let g = build_grid(20, 40).unwrap();
        let a = assemble(&f, &g);
        let ev = eigs_symmetric(&a, 1e-13).unwrap();
        assert!((ev[0] - 0.5).abs() < 1e-10, "{}", ev[0]);
    }

    #[test]
    fn gaussian_oracle_cross_check() {
        let spec = KernelSpec::Gaussian {
            r: Decimal::new("1").unwrap(),
        };
        let prec = 192;
        let e = expand(&spec, m2(), 24, prec, None).unwrap();
        let s = eigenvalue_blocks(&e);

        let f = spec.pointwise_f64(m2(), 0).unwrap();
        let g = build_grid(20, 40).unwrap();
        let a = assemble(&f, &g);

        // trace identity: trace(A) = K(1) = sum c_n
        let k1: f64 = e.coeffs().iter().map(|c| c.to_f64()).sum();
        assert!(((a.trace() - k1) / k1).abs() < 1e-10);

        // Frobenius vs extended-precision HS norm
        let hs = hs_norm(&e).to_f64();
        assert!(((a.frobenius_norm() - hs) / hs).abs() < 1e-8);

        let ev = eigs_symmetric(&a, 1e-12).unwrap();
        // positivity of the discretized PD kernel
        let floor = -1e-10 * a.frobenius_norm();
        assert!(*ev.last().unwrap() > floor);

        let cmp = compare_spectra(&ev, &s, 9).unwrap();
        assert!(cmp.max_relative_error < 1e-8, "{}", cmp.max_relative_error);
        assert_eq!(cmp.clusters, vec![1, 3, 5]);
        assert_eq!(cmp.expected_clusters, vec![1, 3, 5]);
        assert!(cmp.clusters_match);
    }

    #[test]
    fn frobenius_converges_with_refinement() {
        let spec = KernelSpec::Gaussian {
            r: Decimal::new("1").unwrap(),
        };
        let e = expand(&spec, m2(), 24, 192, None).unwrap();
        let hs = hs_norm(&e).to_f64();
        let f = spec.pointwise_f64(m2(), 0).unwrap();
        let mut errs = Vec::new();
        for (np, na) in [(6usize, 12usize), (12, 24), (24, 48)] {
            let g = build_grid(np, na).unwrap();
            let a = assemble(&f, &g);
            errs.push(((a.frobenius_norm() - hs) / hs).abs());
        }
        // decreasing until the binary64 noise floor saturates
        assert!(errs[1] < errs[0]);
        assert!(errs[2] <= errs[1] || errs[2] < 1e-12, "{errs:?}");
        assert!(errs[2] < 1e-10);
    }

    #[test]
    fn comparison_rejects_oversized_k() {
        let e = catalog_coefficients(&KernelSpec::Optimality, m2(), 2, 128).unwrap();
        let s = eigenvalue_blocks(&e);
        let numeric = vec![1.0; 4];
        assert!(compare_spectra(&numeric, &s, 5).is_err());
        assert!(compare_spectra(&numeric, &s, 20).is_err());
    }
}
