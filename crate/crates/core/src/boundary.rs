//! Boundary diagnostics against the profile `V̂(δ_D)`.

use std::io::Write;

use serde::Serialize;

use crate::bernstein::{v_profile, BernsteinSymbol};
use crate::error::{Error, Result};
use crate::grid::Grid1D;
use crate::parabolic::ParabolicRun;

/// Nodes with `δ_D ≤ BAND_WIDTH · h` form the near-boundary band.
pub const BAND_WIDTH: f64 = 10.0;
/// Above this many nodes `v_modulus` uses an evenly strided subset.
pub const MODULUS_NODES: usize = 400;
/// Earliest time accepted by [`parabolic_boundary_bounds`].
pub const BURN_IN: f64 = 0.1;

#[derive(Clone, Debug, Serialize)]
pub struct RatioField {
    /// `u_i / V̂(δ_D(x_i))`.
    pub values: Vec<f64>,
    pub min: f64,
    pub max: f64,
    pub band_min: f64,
    pub band_max: f64,
    pub band_nodes: usize,
}

pub fn hopf_ratio(u: &[f64], grid: &Grid1D, symbol: &BernsteinSymbol) -> Result<RatioField> {
    if u.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            got: u.len(),
        });
    }
    let values: Vec<f64> = u
        .iter()
        .zip(&grid.delta)
        .map(|(&ui, &d)| ui / v_profile(symbol, d))
        .collect();
    let band = BAND_WIDTH * grid.h * (1.0 + 1e-12);
    let (mut band_min, mut band_max, mut band_nodes) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for (r, &d) in values.iter().zip(&grid.delta) {
        if d <= band {
            band_min = band_min.min(*r);
            band_max = band_max.max(*r);
            band_nodes += 1;
        }
    }
    Ok(RatioField {
        min: values.iter().copied().fold(f64::INFINITY, f64::min),
        max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        values,
        band_min,
        band_max,
        band_nodes,
    })
}

impl RatioField {
    /// Rows `node,delta,u,ratio`.
    pub fn write_csv<W: Write>(&self, grid: &Grid1D, u: &[f64], mut w: W) -> std::io::Result<()> {
        writeln!(w, "node,delta,u,ratio")?;
        for (i, r) in self.values.iter().enumerate() {
            writeln!(w, "{i},{:e},{:e},{r:e}", grid.delta[i], u[i])?;
        }
        Ok(())
    }
}

/// `max_{i<j} |u_i − u_j| / V̂(|x_i − x_j|)`, over a strided node subset when `n > 400`.
pub fn v_modulus(u: &[f64], grid: &Grid1D, symbol: &BernsteinSymbol) -> Result<f64> {
    if u.len() != grid.len() {
        return Err(Error::Dimension {
            expected: grid.len(),
            got: u.len(),
        });
    }
    let n = grid.len();
    let stride = n.div_ceil(MODULUS_NODES).max(1);
    // Offset stride−1 picks the nodes shared with coarser nested grids.
    let idx: Vec<usize> = (stride - 1..n).step_by(stride).collect();
    let mut best = 0.0f64;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let q = (u[i] - u[j]).abs() / v_profile(symbol, (grid.nodes[j] - grid.nodes[i]).abs());
            best = best.max(q);
        }
    }
    Ok(best)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundaryBounds {
    pub s: f64,
    pub lower_ratio_min: f64,
    pub upper_ratio_max: f64,
    pub pass: bool,
}

/// Two-sided ratio check `1/C ≤ w(·,s)/V̂(δ_D) ≤ C` on a recorded snapshot.
pub fn parabolic_boundary_bounds(
    run: &ParabolicRun,
    s: f64,
    grid: &Grid1D,
    symbol: &BernsteinSymbol,
) -> Result<BoundaryBounds> {
    if s < BURN_IN {
        return Err(Error::config(format!(
            "boundary bounds need s >= {BURN_IN}, got {s}"
        )));
    }
    let snap = run.snapshot(s)?;
    let field = hopf_ratio(&snap.u, grid, symbol)?;
    Ok(BoundaryBounds {
        s: snap.s,
        lower_ratio_min: field.min,
        upper_ratio_max: field.max,
        pass: field.min > 0.0 && field.min.is_finite() && field.max.is_finite(),
    })
}
