//! Dense discretization of `Ψ(−Δ)` on a uniform grid with zero exterior data,
//! and an FFT multiplier oracle for whole-line data.

use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::bernstein::{BernsteinSymbol, KernelMode, LevyKernel};
use crate::error::{Error, Result};
use crate::grid::Grid1D;

/// How jump weights are distributed onto grid nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightScheme {
    /// Each cell's moments are integrated against a local quadratic interpolant.
    Quadratic,
    /// Each cell's mass is lumped on its centre node.
    CellAverage,
}

/// Largest condition estimate accepted by [`OperatorMatrix::green_solve`].
pub const MAX_CONDITION: f64 = 1e12;

struct GreenFactor {
    chol: Cholesky<f64, Dyn>,
    condition: f64,
}

/// Symmetric M-matrix `A` with `(A u)_i ≈ Ψ(−Δ)u(x_i)` for `u = 0` off the domain.
pub struct OperatorMatrix {
    pub grid: Grid1D,
    pub kernel: LevyKernel,
    pub far_cutoff: f64,
    pub scheme: WeightScheme,
    /// Two-sided `∫_{|y|<h/2} y² j`.
    pub sigma2_local: f64,
    /// Two-sided mass beyond the last cell, lumped on the diagonal.
    pub tail_mass: f64,
    matrix: DMatrix<f64>,
    factor: OnceLock<std::result::Result<GreenFactor, f64>>,
}

impl std::fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorMatrix")
            .field("n", &self.grid.n_interior)
            .field("kernel", &self.kernel)
            .field("scheme", &self.scheme)
            .finish()
    }
}

/// Assembles the operator with far field beyond `far_cutoff` lumped on the diagonal.
pub fn assemble(grid: &Grid1D, kernel: &LevyKernel, far_cutoff: f64) -> Result<OperatorMatrix> {
    let diam = grid.diameter();
    if !(far_cutoff >= 2.0 * diam) {
        return Err(Error::config(format!(
            "far_cutoff must be >= 2 * diameter = {}, got {far_cutoff}",
            2.0 * diam
        )));
    }
    let n = grid.n_interior;
    let h = grid.h;
    let n_cells = (far_cutoff / h - 0.5).ceil() as usize;
    // Cells past offset n only add mass on the diagonal.
    let n_near = n.min(n_cells);
    let moments: Vec<[f64; 3]> = (1..=n_near)
        .into_par_iter()
        .map(|k| kernel.cell_moments((k as f64 - 0.5) * h, (k as f64 + 0.5) * h))
        .collect::<Result<_>>()?;
    let sigma2 = 2.0 * kernel.second_moment_near(0.5 * h)?;
    let last = (n_cells as f64 + 0.5) * h;
    let far_mass = 2.0 * kernel.mass_one_sided((n_near as f64 + 0.5) * h, last)?;
    let tail = 2.0 * kernel.tail_one_sided(last)?;

    let build = |scheme: WeightScheme| -> (f64, Vec<f64>) {
        let mut t = vec![0.0; n + 2];
        let mut diag = sigma2 / (h * h) + far_mass + tail;
        t[1] += sigma2 / (2.0 * h * h);
        for (i, &[m0, m1, m2]) in moments.iter().enumerate() {
            let k = i + 1;
            diag += 2.0 * m0;
            match scheme {
                WeightScheme::Quadratic => {
                    let t1 = m1 / h;
                    let t2 = m2 / (h * h);
                    t[k - 1] += 0.5 * (t2 - t1);
                    t[k] += m0 - t2;
                    t[k + 1] += 0.5 * (t2 + t1);
                }
                WeightScheme::CellAverage => t[k] += m0,
            }
        }
        diag -= 2.0 * t[0];
        (diag, t)
    };
    let (mut scheme, (mut diag, mut t)) = (WeightScheme::Quadratic, build(WeightScheme::Quadratic));
    if t[1..n].iter().any(|&w| w < 0.0) || diag <= 0.0 {
        scheme = WeightScheme::CellAverage;
        (diag, t) = build(scheme);
    }
    let matrix = DMatrix::from_fn(n, n, |i, j| if i == j { diag } else { -t[i.abs_diff(j)] });
    Ok(OperatorMatrix {
        grid: grid.clone(),
        kernel: *kernel,
        far_cutoff,
        scheme,
        sigma2_local: sigma2,
        tail_mass: tail + far_mass,
        matrix,
        factor: OnceLock::new(),
    })
}

impl OperatorMatrix {
    pub fn n(&self) -> usize {
        self.grid.n_interior
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kernel_mode(&self) -> KernelMode {
        self.kernel.mode
    }

    pub fn symbol(&self) -> &BernsteinSymbol {
        &self.kernel.symbol
    }

    pub fn norm_inf(&self) -> f64 {
        row_sum_norm(&self.matrix)
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n() {
            return Err(Error::Dimension {
                expected: self.n(),
                got: len,
            });
        }
        Ok(())
    }

    pub fn apply(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let v = &self.matrix * DVector::from_column_slice(u);
        Ok(v.as_slice().to_vec())
    }

    fn factor(&self) -> Result<&GreenFactor> {
        let f = self.factor.get_or_init(|| {
            let chol = Cholesky::new(self.matrix.clone()).ok_or(f64::INFINITY)?;
            // A⁻¹ ≥ 0 entrywise, so ‖A⁻¹‖∞ = ‖A⁻¹𝟙‖∞.
            let w = chol.solve(&DVector::from_element(self.n(), 1.0));
            let inv_norm = w.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            let condition = self.norm_inf() * inv_norm;
            if !condition.is_finite() || condition > MAX_CONDITION {
                return Err(condition);
            }
            Ok(GreenFactor { chol, condition })
        });
        f.as_ref()
            .map_err(|&condition| Error::IllConditioned { condition })
    }

    /// Condition estimate `‖A‖∞ ‖A⁻¹‖∞`.
    pub fn condition_estimate(&self) -> Result<f64> {
        Ok(self.factor()?.condition)
    }

    /// Discrete Green operator: solves `A u = f`.
    pub fn green_solve(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        let u = self.factor()?.chol.solve(&DVector::from_column_slice(f));
        Ok(u.as_slice().to_vec())
    }

    /// Dense `A⁻¹`.
    pub fn green_matrix(&self) -> Result<DMatrix<f64>> {
        Ok(self.factor()?.chol.inverse())
    }

    /// Writes `row,col,value` for every entry.
    pub fn write_audit_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,value")?;
        for i in 0..self.n() {
            for j in 0..self.n() {
                writeln!(w, "{i},{j},{:e}", self.matrix[(i, j)])?;
            }
        }
        Ok(())
    }
}

pub(crate) fn row_sum_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `ζ(s)` for real `s > 1` by Euler–Maclaurin summation.
fn zeta_gt1(s: f64) -> f64 {
    const N: usize = 16;
    const B: [f64; 5] = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let nf = N as f64;
    let mut sum: f64 = (1..N).map(|k| (k as f64).powf(-s)).sum();
    sum += nf.powf(1.0 - s) / (s - 1.0) + 0.5 * nf.powf(-s);
    let mut rising = s;
    let mut fact = 2.0;
    for (j, &b) in B.iter().enumerate() {
        let p = 2 * j + 1;
        sum += b / fact * rising * nf.powf(-s - p as f64);
        rising *= (s + p as f64) * (s + p as f64 + 1.0);
        fact *= ((p + 2) * (p + 3)) as f64;
    }
    sum
}

/// `ζ(−e)` for `e > 0` via the functional equation.
fn zeta_negative(e: f64) -> f64 {
    let s = 1.0 + e;
    2.0 * (2.0 * PI).powf(-s) * (PI * s / 2.0).cos() * gamma(s) * zeta_gt1(s)
}

/// Applies `Ψ(−Δ)` to periodic samples `u` with spacing `dx` by multiplying the
/// discrete Fourier transform with `Ψ(ξ²)`.
///
/// `u` must vanish outside the central third of the box; the leading
/// Riemann-sum error at `ξ = 0` from non-smooth terms of `Ψ` is removed.
pub fn multiplier_oracle(symbol: &BernsteinSymbol, u: &[f64], dx: f64) -> Result<Vec<f64>> {
    symbol.validate()?;
    let n = u.len();
    if n < 3 || !(dx > 0.0) {
        return Err(Error::config("oracle needs at least 3 samples and dx > 0"));
    }
    let peak = u.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    if peak == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let (lo, hi) = (n / 3, 2 * n / 3);
    if let Some(j) = (0..n).find(|&j| (j < lo || j > hi) && u[j].abs() > 1e-10 * peak) {
        return Err(Error::OracleDomain(format!(
            "sample {j} of {n} is outside the central third ({:e} relative)",
            u[j].abs() / peak
        )));
    }
    let mut buf: Vec<Complex64> = u.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let box_len = n as f64 * dx;
    let dxi = 2.0 * PI / box_len;
    for (k, z) in buf.iter_mut().enumerate() {
        let kk = if k <= n / 2 {
            k as f64
        } else {
            k as f64 - n as f64
        };
        let xi = kk * dxi;
        *z *= symbol.psi(xi * xi);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mass: f64 = dx * u.iter().sum::<f64>();
    let correction: f64 = symbol
        .small_argument_powers()
        .iter()
        .map(|&(coef, e)| coef * 2.0 * zeta_negative(e) * dxi.powf(1.0 + e) * mass / (2.0 * PI))
        .sum();
    Ok(buf.iter().map(|z| z.re / n as f64 - correction).collect())
}

/// Oracle values at the grid nodes for whole-line data `u`, using a periodic
/// box of at least `min_box` length with spacing `h / refine`.
pub fn oracle_at_nodes<F: Fn(f64) -> f64>(
    symbol: &BernsteinSymbol,
    grid: &Grid1D,
    u: F,
    refine: usize,
    min_box: f64,
) -> Result<Vec<f64>> {
    if refine == 0 || refine % 2 != 0 {
        return Err(Error::config(
            "oracle refinement must be a positive even integer",
        ));
    }
    let dx = grid.h / refine as f64;
    let len = min_box.max(3.0 * grid.diameter());
    let n_box = ((len / dx).ceil() as usize).next_power_of_two();
    let centre = n_box / 2;
    let mid = grid.midpoint();
    let samples: Vec<f64> = (0..n_box)
        .map(|j| u(mid + (j as f64 - centre as f64) * dx))
        .collect();
    let out = multiplier_oracle(symbol, &samples, dx)?;
    let n = grid.n_interior;
    Ok((1..=n)
        .map(|i| {
            let off = (2 * i) as i64 - (n as i64 + 1);
            out[(centre as i64 + off * refine as i64 / 2) as usize]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::fractional_constant;
    use crate::grid::build_grid;
    use crate::quadrature::{integrate, integrate_to_infinity, QuadOptions};
    use approx::assert_relative_eq;

    fn cauchy(n: usize) -> OperatorMatrix {
        let g = build_grid(-1.0, 1.0, n).unwrap();
        let k =
            LevyKernel::new(BernsteinSymbol::fractional(1.0).unwrap(), KernelMode::Exact).unwrap();
        assemble(&g, &k, 4.0).unwrap()
    }

    #[test]
    fn zeta_values() {
        assert_relative_eq!(zeta_gt1(2.0), PI * PI / 6.0, max_relative = 1e-14);
        assert_relative_eq!(zeta_gt1(1.5), 2.612_375_348_685_488, max_relative = 1e-13);
        assert_relative_eq!(zeta_negative(1.0), -1.0 / 12.0, max_relative = 1e-13);
        assert_relative_eq!(zeta_negative(3.0), 1.0 / 120.0, max_relative = 1e-12);
    }

    #[test]
    fn structure() {
        let a = cauchy(49);
        let m = a.matrix();
        assert_eq!(m, &m.transpose());
        for i in 0..a.n() {
            assert!(m[(i, i)] > 0.0);
            for j in 0..a.n() {
                if i != j {
                    assert!(m[(i, j)] <= 0.0);
                }
            }
        }
        assert_eq!(a.scheme, WeightScheme::Quadratic);
        assert_eq!(a.apply(&vec![0.0; 49]).unwrap(), vec![0.0; 49]);
        assert!(a.apply(&[1.0; 3]).is_err());
    }

    #[test]
    fn far_cutoff_precondition() {
        let g = build_grid(-1.0, 1.0, 19).unwrap();
        let k =
            LevyKernel::new(BernsteinSymbol::fractional(1.0).unwrap(), KernelMode::Exact).unwrap();
        assert!(matches!(assemble(&g, &k, 3.9), Err(Error::Config(_))));
    }

    #[test]
    fn row_sums_exceed_exterior_tail() {
        let a = cauchy(99);
        let ones = vec![1.0; 99];
        let rows = a.apply(&ones).unwrap();
        let bound = 2.0 * a.kernel.tail_one_sided(a.grid.diameter()).unwrap();
        assert!(rows.iter().all(|&r| r >= bound), "{bound}");
    }

    #[test]
    fn green_solve_contract() {
        let a = cauchy(99);
        let f: Vec<f64> = (0..99)
            .map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0)
            .collect();
        let u = a.green_solve(&f).unwrap();
        let r = a.apply(&u).unwrap();
        let fmax = f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let res = r
            .iter()
            .zip(&f)
            .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(res <= 1e-10 * fmax, "{res}");
        assert!(a.green_solve(&[0.0; 99]).unwrap().iter().all(|&x| x == 0.0));
        assert!(a.condition_estimate().unwrap() > 1.0);
    }

    #[test]
    fn laplacian_symbol_matches_second_difference() {
        let sym = BernsteinSymbol::fractional(2.0).unwrap();
        let s = 0.1;
        let g = build_grid(-1.0, 1.0, 199).unwrap();
        let o = oracle_at_nodes(&sym, &g, |x| (-x * x / (2.0 * s * s)).exp(), 4, 64.0).unwrap();
        let h = g.h;
        let u = |x: f64| (-x * x / (2.0 * s * s)).exp();
        for &i in &[60usize, 90, 99, 120] {
            let x = g.nodes[i];
            let fd = -(u(x + h) - 2.0 * u(x) + u(x - h)) / (h * h);
            // Truncation error of the central difference is at most h² max|u''''| / 12.
            assert!(
                (o[i] - fd).abs() <= 1.5 * h * h * 3.0 / s.powi(4) / 12.0,
                "{} vs {fd}",
                o[i]
            );
        }
    }

    #[test]
    fn cauchy_oracle_matches_direct_singular_integral() {
        let sym = BernsteinSymbol::fractional(1.0).unwrap();
        let s = 0.1;
        let u = |x: f64| (-x * x / (2.0 * s * s)).exp();
        let g = build_grid(-1.0, 1.0, 199).unwrap();
        let o = oracle_at_nodes(&sym, &g, u, 4, 1024.0).unwrap();
        let c = fractional_constant(1.0);
        let opts = QuadOptions {
            rel_tol: 1e-12,
            ..QuadOptions::default()
        };
        for &i in &[49usize, 79, 99, 109, 139] {
            let x = g.nodes[i];
            let second = |y: f64| (2.0 * u(x) - u(x + y) - u(x - y)) * c / (y * y);
            let near = integrate(second, 0.0, 1.0, opts).unwrap().value;
            let far = integrate_to_infinity(second, 1.0, opts).unwrap().value;
            let direct = near + far;
            assert!(
                (o[i] - direct).abs() <= 1e-4 * direct.abs().max(1e-3),
                "{i}: {} vs {direct}",
                o[i]
            );
        }
    }

    #[test]
    fn oracle_rejects_wide_support() {
        let sym = BernsteinSymbol::fractional(1.0).unwrap();
        let u = vec![1.0; 64];
        assert!(matches!(
            multiplier_oracle(&sym, &u, 0.1),
            Err(Error::OracleDomain(_))
        ));
        assert_eq!(
            multiplier_oracle(&sym, &[0.0; 64], 0.1).unwrap(),
            vec![0.0; 64]
        );
    }
}
