use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform interior grid on a bounded interval `(x_left, x_right)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Grid1D {
    pub x_left: f64,
    pub x_right: f64,
    pub n_interior: usize,
    pub h: f64,
    /// `x_i = x_left + (i+1) h` for `i = 0..n_interior`.
    pub nodes: Vec<f64>,
    /// Distance from each node to the nearest endpoint.
    pub delta: Vec<f64>,
}

/// Serialized form: `domain = { left = -1.0, right = 1.0, n = 199 }`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub left: f64,
    pub right: f64,
    pub n: usize,
}

pub fn build_grid(x_left: f64, x_right: f64, n_interior: usize) -> Result<Grid1D> {
    if !(x_left.is_finite() && x_right.is_finite() && x_left < x_right) {
        return Err(Error::config(format!(
            "domain needs left < right, got ({x_left}, {x_right})"
        )));
    }
    if n_interior < 3 {
        return Err(Error::config(format!(
            "domain needs n >= 3 interior nodes, got {n_interior}"
        )));
    }
    let len = x_right - x_left;
    let h = len / (n_interior + 1) as f64;
    let nodes: Vec<f64> = (1..=n_interior)
        .map(|i| x_left + len * (i as f64 / (n_interior + 1) as f64))
        .collect();
    // Index symmetry keeps δ exactly mirrored on symmetric intervals.
    let delta = (1..=n_interior)
        .map(|i| {
            let k = i.min(n_interior + 1 - i);
            len * (k as f64 / (n_interior + 1) as f64)
        })
        .collect();
    Ok(Grid1D {
        x_left,
        x_right,
        n_interior,
        h,
        nodes,
        delta,
    })
}

impl Grid1D {
    pub fn from_spec(spec: DomainSpec) -> Result<Self> {
        build_grid(spec.left, spec.right, spec.n)
    }

    pub fn len(&self) -> usize {
        self.n_interior
    }

    pub fn is_empty(&self) -> bool {
        self.n_interior == 0
    }

    pub fn diameter(&self) -> f64 {
        self.x_right - self.x_left
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.x_left + self.x_right)
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.x_left && x < self.x_right
    }

    /// Index of the node nearest to `x`, clamped to the interior.
    pub fn nearest_node(&self, x: f64) -> usize {
        let k = ((x - self.x_left) / self.h).round() as i64 - 1;
        k.clamp(0, self.n_interior as i64 - 1) as usize
    }

    /// Piecewise-linear interpolant of nodal values, zero outside the domain.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        if !self.contains(x) {
            return 0.0;
        }
        let s = (x - self.x_left) / self.h;
        let k = (s.floor() as usize).min(self.n_interior);
        let t = s - k as f64;
        let at = |j: usize| {
            if j == 0 || j > self.n_interior {
                0.0
            } else {
                values[j - 1]
            }
        };
        (1.0 - t) * at(k) + t * at(k + 1)
    }

    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<f64> {
        self.nodes.iter().map(|&x| f(x)).collect()
    }
}
