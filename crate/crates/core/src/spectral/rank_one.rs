//! Spectrum of `H - i beta |N><N|` from the spectrum of `H`.
//!
//! With `H = U diag(lambda) U^T` and `a = U^T |N>` the perturbed eigenvalues
//! are the roots of `1 - i beta sum_l a_l^2 / (lambda_l - z) = 0`. Every
//! coupled pole `lambda_j` carries exactly one root, found by Newton's method
//! on the shift `delta = z - lambda_j` so that widths many orders of magnitude
//! below `beta` keep full relative precision.
//!
//! Nearly coincident poles are first merged by Givens rotations, which leaves
//! one coupled pole per cluster and exactly dark states for the rest.

use ndarray::{Array1, Array2};
use ndarray_linalg::EigVals;
use num_complex::Complex64;

use super::{BiorthogonalSpectrum, EdgeOverlaps, RealSpectrum};
use crate::error::{Error, Result};

const DEFLATION_TOL: f64 = 1e-13;
const DARK_WEIGHT: f64 = 1e-150;
const MAX_NEWTON: usize = 80;
const ROOT_RESIDUAL: f64 = 1e-10;
const MAX_ABERTH: usize = 200;

#[derive(Clone, Copy, Debug)]
struct Rotation {
    p: usize,
    q: usize,
    c: f64,
    s: f64,
}

#[derive(Clone, Debug)]
struct Root {
    eigenvalue: Complex64,
    pole: usize,
    delta: Complex64,
    coupled: bool,
    /// `1/sqrt(sum_l t_l^2)`, the bilinear normalization of the pole-basis
    /// vector `t_l = a_l / (lambda_l - z)`.
    norm: Complex64,
    drain: Complex64,
    pump: Complex64,
    petermann: f64,
}

/// Drain-broadened spectrum in the eigenbasis of `H`.
#[derive(Clone, Debug)]
pub struct DrainCoupledSpectrum {
    basis: RealSpectrum,
    beta: f64,
    /// Drain components of the rotated eigenbasis.
    a: Vec<f64>,
    active: Vec<usize>,
    rotations: Vec<Rotation>,
    roots: Vec<Root>,
    dense_roots: bool,
}

impl DrainCoupledSpectrum {
    /// Solves for all roots. Fails if the roots do not pass the trace and
    /// uniqueness checks even after re-seeding Newton from a dense
    /// eigenvalue solve; callers then fall back to the dense route.
    pub fn solve(basis: RealSpectrum, gamma_drain: f64) -> Result<Self> {
        let n = basis.n();
        if n == 0 {
            return Err(Error::Empty("spectrum"));
        }
        let beta = 0.5 * gamma_drain;
        let lambda = basis.eigenvalues.as_slice().expect("contiguous").to_vec();
        let mut a: Vec<f64> = (0..n).map(|l| basis.eigenvectors[[n - 1, l]]).collect();
        let mut b: Vec<f64> = (0..n).map(|l| basis.eigenvectors[[0, l]]).collect();
        let scale = lambda[0].abs().max(lambda[n - 1].abs()).max(beta);

        let mut rotations = Vec::new();
        for q in 1..n {
            let p = q - 1;
            if lambda[q] - lambda[p] > DEFLATION_TOL * scale {
                continue;
            }
            let r = a[p].hypot(a[q]);
            if a[p] == 0.0 || r == 0.0 {
                continue;
            }
            let rot = Rotation {
                p,
                q,
                c: a[q] / r,
                s: a[p] / r,
            };
            a[p] = 0.0;
            a[q] = r;
            let (bp, bq) = (b[p], b[q]);
            b[p] = rot.c * bp - rot.s * bq;
            b[q] = rot.s * bp + rot.c * bq;
            rotations.push(rot);
        }

        let active: Vec<usize> = (0..n).filter(|&l| a[l].abs() >= DARK_WEIGHT).collect();
        let ctx = Secular {
            lambda: &lambda,
            a: &a,
            active: &active,
            beta,
        };

        let mut deltas: Vec<Option<Complex64>> = active
            .iter()
            .map(|&j| ctx.newton(j, Complex64::new(0.0, -beta * a[j] * a[j])))
            .collect();
        let mut poles: Vec<usize> = active.clone();
        let mut dense_roots = false;
        if !ctx.validate(&poles, &deltas, scale) {
            let (p, d) = ctx.aberth_seeds(scale);
            poles = p;
            deltas = d;
        }
        if !ctx.validate(&poles, &deltas, scale) {
            dense_roots = true;
            let (p, d) = ctx.dense_seeds(scale)?;
            poles = p;
            deltas = d;
            if !ctx.validate(&poles, &deltas, scale) {
                return Err(Error::Eigensolver {
                    kind: "drain-coupled",
                    n,
                    scale,
                    reason: "secular roots failed the trace or uniqueness check".into(),
                });
            }
        }

        let mut roots = Vec::with_capacity(n);
        for (&j, d) in poles.iter().zip(&deltas) {
            let delta = d.expect("validated");
            roots.push(ctx.coupled_root(j, delta, &b)?);
        }
        for l in (0..n).filter(|l| a[*l].abs() < DARK_WEIGHT) {
            roots.push(Root {
                eigenvalue: Complex64::new(lambda[l], 0.0),
                pole: l,
                delta: Complex64::new(0.0, 0.0),
                coupled: false,
                norm: Complex64::new(1.0, 0.0),
                drain: Complex64::new(a[l], 0.0),
                pump: Complex64::new(b[l], 0.0),
                petermann: 1.0,
            });
        }
        roots.sort_by(|x, y| {
            x.eigenvalue
                .re
                .total_cmp(&y.eigenvalue.re)
                .then(x.eigenvalue.im.total_cmp(&y.eigenvalue.im))
        });
        Ok(Self {
            basis,
            beta,
            a,
            active,
            rotations,
            roots,
            dense_roots,
        })
    }

    /// Whether Newton had to be re-seeded from a dense eigenvalue solve.
    pub fn used_dense_roots(&self) -> bool {
        self.dense_roots
    }

    pub fn eigenvalues(&self) -> Array1<Complex64> {
        self.roots.iter().map(|r| r.eigenvalue).collect()
    }

    /// Shift of root `k` from its parent pole of `H`.
    pub fn shift(&self, k: usize) -> Complex64 {
        self.roots[k].delta
    }

    fn pole_vector(&self, k: usize) -> Vec<Complex64> {
        let root = &self.roots[k];
        let n = self.basis.n();
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        if !root.coupled {
            x[root.pole] = Complex64::new(1.0, 0.0);
        } else {
            let lj = self.basis.eigenvalues[root.pole];
            for &l in &self.active {
                let den = Complex64::new(self.basis.eigenvalues[l] - lj, 0.0) - root.delta;
                x[l] = root.norm * self.a[l] / den;
            }
        }
        for rot in self.rotations.iter().rev() {
            let (xp, xq) = (x[rot.p], x[rot.q]);
            x[rot.p] = rot.c * xp + rot.s * xq;
            x[rot.q] = -rot.s * xp + rot.c * xq;
        }
        x
    }

    /// Dense biorthogonal form, mostly for cross-checks against the direct
    /// solver.
    pub fn to_biorthogonal(&self) -> BiorthogonalSpectrum {
        let n = self.basis.n();
        let mut right = Array2::<Complex64>::zeros((n, n));
        for k in 0..n {
            right.column_mut(k).assign(&self.right_vector(k));
        }
        let eigenvalues = self.eigenvalues();
        BiorthogonalSpectrum {
            widths: eigenvalues.mapv(|e| -e.im),
            eigenvalues,
            left_vectors: right.t().to_owned(),
            right_vectors: right,
            degenerate_pairs: Vec::new(),
            used_inverse: false,
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Leading-order widths `(gamma_d/2) |<N|k>|^2` in the eigenbasis of `H`,
    /// with each degenerate level already rotated so that at most one state
    /// touches the drain. Aligned with the root order.
    pub fn first_order_widths(&self) -> Vec<f64> {
        self.roots
            .iter()
            .map(|r| self.beta * self.a[r.pole] * self.a[r.pole])
            .collect()
    }
}

impl EdgeOverlaps for DrainCoupledSpectrum {
    fn len(&self) -> usize {
        self.roots.len()
    }

    fn eigenvalue(&self, k: usize) -> Complex64 {
        self.roots[k].eigenvalue
    }

    fn drain_overlap(&self, k: usize) -> Complex64 {
        self.roots[k].drain
    }

    fn pump_overlap(&self, k: usize) -> Complex64 {
        self.roots[k].pump
    }

    fn petermann(&self, k: usize) -> f64 {
        self.roots[k].petermann
    }

    fn right_vector(&self, k: usize) -> Array1<Complex64> {
        let x = self.pole_vector(k);
        let u = &self.basis.eigenvectors;
        let n = self.basis.n();
        Array1::from_shape_fn(n, |i| {
            (0..n)
                .filter(|&l| x[l] != Complex64::new(0.0, 0.0))
                .map(|l| x[l] * u[[i, l]])
                .sum()
        })
    }

    fn width_floor(&self, gamma_drain: f64) -> f64 {
        // Widths here are relative-accurate down to underflow, so only an
        // exactly uncoupled pole counts as dark.
        1e-300 * gamma_drain
    }

    fn has_degenerate_pairs(&self) -> bool {
        !self.rotations.is_empty()
    }
}

struct Secular<'a> {
    lambda: &'a [f64],
    a: &'a [f64],
    active: &'a [usize],
    beta: f64,
}

impl Secular<'_> {
    fn i_beta(&self) -> Complex64 {
        Complex64::new(0.0, self.beta)
    }

    /// `g_j(delta) = delta + i beta a_j^2 - i beta delta S_j(delta)` and its
    /// derivative.
    fn g(&self, j: usize, delta: Complex64) -> (Complex64, Complex64) {
        let lj = self.lambda[j];
        let mut s = Complex64::new(0.0, 0.0);
        let mut ds = Complex64::new(0.0, 0.0);
        for &l in self.active {
            if l == j {
                continue;
            }
            let den = Complex64::new(self.lambda[l] - lj, 0.0) - delta;
            let w = self.a[l] * self.a[l] / den;
            s += w;
            ds += w / den;
        }
        let ib = self.i_beta();
        let g = delta + ib * self.a[j] * self.a[j] - ib * delta * s;
        let dg = Complex64::new(1.0, 0.0) - ib * s - ib * delta * ds;
        (g, dg)
    }

    fn newton(&self, j: usize, start: Complex64) -> Option<Complex64> {
        let mut delta = start;
        let mut last_step = f64::INFINITY;
        for it in 0..MAX_NEWTON {
            let (g, dg) = self.g(j, delta);
            if g == Complex64::new(0.0, 0.0) {
                return Some(delta);
            }
            if dg == Complex64::new(0.0, 0.0) || !dg.is_finite() {
                return None;
            }
            let step = g / dg;
            let mut next = delta - step;
            let mut damp = 1.0;
            while next.im > 0.0 && damp > 1e-12 {
                damp *= 0.5;
                next = delta - step * damp;
            }
            if next.im > 0.0 {
                next.im = 0.5 * delta.im;
            }
            if !next.is_finite() {
                return None;
            }
            let size = step.norm() * damp;
            delta = next;
            if size <= 4.0 * f64::EPSILON * delta.norm() {
                return Some(delta);
            }
            // Stagnation at the round-off level.
            if it > 8 && size >= last_step && size <= 1e-10 * delta.norm() {
                return Some(delta);
            }
            last_step = size;
        }
        None
    }

    fn validate(&self, poles: &[usize], deltas: &[Option<Complex64>], scale: f64) -> bool {
        if deltas.iter().any(Option::is_none) {
            return false;
        }
        let d: Vec<Complex64> = deltas.iter().map(|x| x.unwrap()).collect();
        if d.iter().any(|x| x.im > 0.0) {
            return false;
        }
        // Trace of the active block. Roots re-seeded from a dense solve are
        // attached to their nearest pole, which need not be a bijection, so
        // compare full eigenvalues rather than shifts.
        let weight: f64 = self.active.iter().map(|&l| self.a[l] * self.a[l]).sum();
        let pole_sum: f64 = poles.iter().map(|&j| self.lambda[j]).sum();
        let lambda_sum: f64 = self.active.iter().map(|&l| self.lambda[l]).sum();
        let lambda_abs: f64 = self.active.iter().map(|&l| self.lambda[l].abs()).sum();
        let sum: Complex64 = d.iter().sum::<Complex64>() + (pole_sum - lambda_sum);
        let spread: f64 = d.iter().map(|x| x.norm()).sum();
        let target = Complex64::new(0.0, -self.beta * weight);
        if (sum - target).norm() > 1e-10 * (self.beta * weight + spread) + 1e-13 * lambda_abs {
            return false;
        }
        let mut z: Vec<(Complex64, f64)> = poles
            .iter()
            .zip(&d)
            .map(|(&j, x)| (Complex64::new(self.lambda[j] + x.re, x.im), x.norm()))
            .collect();
        z.sort_by(|x, y| x.0.re.total_cmp(&y.0.re));
        for w in z.windows(2) {
            let sep = (w[1].0 - w[0].0).norm();
            if sep <= 1e-9 * (w[0].1 + w[1].1) + 1e-15 * scale * f64::EPSILON {
                return false;
            }
        }
        true
    }

    /// Simultaneous Aberth-Ehrlich iteration on the secular polynomial
    /// `prod_l (lambda_l - z) (1 - i beta sum_l a_l^2/(lambda_l - z))`, started
    /// from the first-order roots. It copes with overlapping resonances where
    /// single-root Newton wanders to a neighbour's root.
    fn aberth_seeds(&self, scale: f64) -> (Vec<usize>, Vec<Option<Complex64>>) {
        let ib = self.i_beta();
        let one = Complex64::new(1.0, 0.0);
        let mut z: Vec<Complex64> = self
            .active
            .iter()
            .map(|&l| Complex64::new(self.lambda[l], -self.beta * self.a[l] * self.a[l]))
            .collect();
        let m = z.len();
        for _ in 0..MAX_ABERTH {
            let mut moved = false;
            for k in 0..m {
                let zk = z[k];
                let (mut s, mut ds, mut q) = (
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                    Complex64::new(0.0, 0.0),
                );
                for &l in self.active {
                    let inv = one / (Complex64::new(self.lambda[l], 0.0) - zk);
                    let w = self.a[l] * self.a[l] * inv;
                    s += w;
                    ds += w * inv;
                    q += inv;
                }
                let f = one - ib * s;
                let df = -ib * ds;
                let log_d = df / f - q;
                let repel: Complex64 = (0..m).filter(|&j| j != k).map(|j| one / (zk - z[j])).sum();
                let newton = one / log_d;
                let step = newton / (one - newton * repel);
                if !step.is_finite() {
                    continue;
                }
                z[k] = zk - step;
                if step.norm() > 1e-14 * zk.norm().max(self.beta) {
                    moved = true;
                }
            }
            if !moved {
                break;
            }
        }
        self.attach(&z, scale)
    }

    /// Assigns each root to its nearest pole and polishes it there by Newton
    /// when that does not move it appreciably.
    fn attach(&self, z: &[Complex64], scale: f64) -> (Vec<usize>, Vec<Option<Complex64>>) {
        let mut poles = Vec::with_capacity(z.len());
        let mut deltas = Vec::with_capacity(z.len());
        for zk in z {
            let j = *self
                .active
                .iter()
                .min_by(|&&x, &&y| {
                    (zk.re - self.lambda[x])
                        .hypot(zk.im)
                        .total_cmp(&(zk.re - self.lambda[y]).hypot(zk.im))
                })
                .expect("active set is non-empty");
            let mut d0 = Complex64::new(zk.re - self.lambda[j], zk.im.min(0.0));
            if let Some(d) = self.newton(j, d0) {
                if (d - d0).norm() <= 1e-6 * d0.norm() + 1e-12 * scale {
                    d0 = d;
                }
            }
            poles.push(j);
            deltas.push(Some(d0));
        }
        (poles, deltas)
    }

    /// Roots from a dense solve of the active block, each polished by Newton
    /// from its nearest pole.
    fn dense_seeds(&self, scale: f64) -> Result<(Vec<usize>, Vec<Option<Complex64>>)> {
        let m = self.active.len();
        let ib = self.i_beta();
        let mat = Array2::from_shape_fn((m, m), |(r, c)| {
            let (l, k) = (self.active[r], self.active[c]);
            let diag = if r == c { self.lambda[l] } else { 0.0 };
            Complex64::new(diag, 0.0) - ib * self.a[l] * self.a[k]
        });
        let z = mat.eigvals().map_err(|e| Error::Eigensolver {
            kind: "drain-coupled",
            n: m,
            scale,
            reason: e.to_string(),
        })?;
        Ok(self.attach(z.as_slice().expect("contiguous"), scale))
    }

    fn coupled_root(&self, j: usize, delta: Complex64, b: &[f64]) -> Result<Root> {
        let lj = self.lambda[j];
        let zero = Complex64::new(0.0, 0.0);
        let (mut s1, mut s2, mut pb, mut h2) = (zero, zero, zero, 0.0);
        for &l in self.active {
            let den = Complex64::new(self.lambda[l] - lj, 0.0) - delta;
            let t = self.a[l] / den;
            s1 += self.a[l] * t;
            s2 += t * t;
            pb += b[l] * t;
            h2 += t.norm_sqr();
        }
        // At an exact root sum_l a_l t_l = -i/beta; the residual measures
        // how well the drain overlap, and hence the width identity, holds.
        let residual = (Complex64::new(1.0, 0.0) - self.i_beta() * s1).norm();
        if residual > ROOT_RESIDUAL {
            return Err(Error::Eigensolver {
                kind: "drain-coupled",
                n: self.lambda.len(),
                scale: self.beta,
                reason: format!("secular residual {residual:e} at root of pole {j}"),
            });
        }
        if s2.norm() < 1e-10 * h2 {
            return Err(Error::Eigensolver {
                kind: "drain-coupled",
                n: self.lambda.len(),
                scale: self.beta,
                reason: "eigenvector is nearly self-orthogonal".into(),
            });
        }
        let norm = Complex64::new(1.0, 0.0) / s2.sqrt();
        let kappa = h2 / s2.norm();
        Ok(Root {
            eigenvalue: Complex64::new(lj + delta.re, delta.im),
            pole: j,
            delta,
            coupled: true,
            norm,
            drain: norm * s1,
            pump: norm * pb,
            petermann: kappa * kappa,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{
        build_effective_hamiltonian, build_hamiltonian, sample_disorder, ChainParams,
        DisorderRealization,
    };
    use crate::spectral::{eig_biorthogonal, eig_hermitian};

    fn solve(p: &ChainParams, w: f64, seed: u64) -> (DrainCoupledSpectrum, BiorthogonalSpectrum) {
        let d = sample_disorder(p, w, seed, 0).unwrap();
        let h = build_hamiltonian(p, &d).unwrap();
        let fast = DrainCoupledSpectrum::solve(eig_hermitian(&h).unwrap(), p.gamma_drain).unwrap();
        let heff = build_effective_hamiltonian(&h, p.gamma_drain).unwrap();
        (fast, eig_biorthogonal(&heff).unwrap())
    }

    #[test]
    fn matches_dense_solver() {
        for (n, alpha, w, seed) in [(6, 0.5, 1.0, 1), (16, 1.5, 4.0, 2), (25, 3.0, 0.3, 3)] {
            let p = ChainParams::new(n, alpha).with_drain(0.8);
            let (fast, dense) = solve(&p, w, seed);
            assert_eq!(fast.len(), n);
            for k in 0..n {
                let (a, b) = (fast.eigenvalue(k), dense.eigenvalue(k));
                assert!((a - b).norm() < 1e-10, "n={n} k={k}: {a} vs {b}");
                assert!(
                    (fast.drain_overlap(k).norm() - dense.drain_overlap(k).norm()).abs() < 1e-8
                );
                assert!((fast.pump_overlap(k).norm() - dense.pump_overlap(k).norm()).abs() < 1e-8);
                assert!((fast.petermann(k) - dense.petermann(k)).abs() < 1e-6 * dense.petermann(k));
            }
        }
    }

    #[test]
    fn overlapping_resonances_match_dense_eigenvalues() {
        // Weak disorder on a long-range chain: the widths of neighbouring
        // levels overlap and single-root Newton fails.
        let p = ChainParams::new(120, 1.0 / 3.0);
        let (fast, dense) = solve(&p, 0.1, 4);
        let mut a: Vec<Complex64> = (0..120).map(|k| fast.eigenvalue(k)).collect();
        let mut b: Vec<Complex64> = (0..120).map(|k| dense.eigenvalue(k)).collect();
        for v in [&mut a, &mut b] {
            v.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
        }
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-9, "{x} vs {y}");
        }
        assert!(!fast.used_dense_roots());
    }

    #[test]
    fn reconstructed_vectors_are_eigenvectors() {
        let p = ChainParams::new(14, 1.0).with_drain(1.3);
        let d = sample_disorder(&p, 2.5, 5, 1).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap();
        let heff = build_effective_hamiltonian(&h, 1.3).unwrap();
        let fast = DrainCoupledSpectrum::solve(eig_hermitian(&h).unwrap(), 1.3).unwrap();
        let bi = fast.to_biorthogonal();
        assert!(bi.biorthogonality_residual() < 1e-10);
        for k in 0..14 {
            let r = bi.right_vectors.column(k);
            let res = heff.as_array().dot(&r) - r.mapv(|x| x * bi.eigenvalues[k]);
            assert!(res.iter().all(|x| x.norm() < 1e-10));
            assert!((bi.right_vectors[[13, k]] - fast.drain_overlap(k)).norm() < 1e-12);
            assert!((bi.left_vectors[[k, 0]] - fast.pump_overlap(k)).norm() < 1e-12);
        }
    }

    #[test]
    fn degenerate_clean_chain_has_dark_states() {
        let n = 6;
        let h =
            build_hamiltonian(&ChainParams::new(n, 0.0), &DisorderRealization::clean(n)).unwrap();
        let fast = DrainCoupledSpectrum::solve(eig_hermitian(&h).unwrap(), 1.0).unwrap();
        let dark = (0..n).filter(|&k| fast.width(k) < 1e-12).count();
        assert_eq!(dark, n - 2);
        let total: f64 = (0..n).map(|k| fast.width(k)).sum();
        assert!((total - 0.5).abs() < 1e-12);
        let mut first: Vec<f64> = fast.first_order_widths();
        first.sort_by(f64::total_cmp);
        let want = [0.0, 0.0, 0.0, 0.0, 0.5 / 6.0, 0.5 * 5.0 / 6.0];
        for (a, b) in first.iter().zip(want) {
            assert!((a - b).abs() < 1e-13, "{a} vs {b}");
        }
    }

    #[test]
    fn tiny_widths_keep_relative_precision() {
        // Strong disorder and fast hopping decay leave widths near 1e-20,
        // far below what a dense solve can resolve.
        let p = ChainParams::new(60, 4.0);
        let d = sample_disorder(&p, 20.0, 11, 0).unwrap();
        let h = build_hamiltonian(&p, &d).unwrap();
        let fast = DrainCoupledSpectrum::solve(eig_hermitian(&h).unwrap(), 1.0).unwrap();
        for k in 0..60 {
            let g = fast.width(k);
            assert!(g > 0.0);
            // Width identity with conventional normalization.
            let r = fast.right_vector(k);
            let rr: f64 = r.iter().map(|x| x.norm_sqr()).sum();
            let want = 0.5 * r[59].norm_sqr() / rr;
            assert!((g - want).abs() <= 1e-8 * want, "k={k}: {g} vs {want}");
        }
    }

    #[test]
    fn single_site() {
        let h =
            build_hamiltonian(&ChainParams::new(1, 1.0), &DisorderRealization::clean(1)).unwrap();
        let s = DrainCoupledSpectrum::solve(eig_hermitian(&h).unwrap(), 2.0).unwrap();
        assert!((s.eigenvalue(0) - Complex64::new(0.0, -1.0)).norm() < 1e-15);
        assert!((s.drain_overlap(0).norm() - 1.0).abs() < 1e-15);
    }
}
