//! Analytic reference solutions.

use std::f64::consts::PI;

/// Continuous evolution of a unit discrete delta on a Dirichlet box.
///
/// The grid data is expanded in its discrete sine basis, which matches it
/// exactly at the nodes, and each mode decays as `exp(-a pi^2 |k|^2 t)`.
/// The solution is a product of one-dimensional series.
#[derive(Clone, Debug)]
pub struct SineSeries {
    dims: Vec<usize>,
    a: f64,
    /// Per axis, `table[k-1][i] = 2h sin(k pi x_i) sin(k pi x_p)`.
    tables: Vec<Vec<Vec<f64>>>,
    /// Relative size below which trailing modes are dropped.
    pub threshold: f64,
}

impl SineSeries {
    /// `source` holds 0-based interior indices; node `i` sits at `(i+1) h`.
    pub fn new(dims: &[usize], source: &[usize], a: f64, threshold: f64) -> Self {
        let tables = dims
            .iter()
            .zip(source)
            .map(|(&n, &p)| {
                let h = 1.0 / (n + 1) as f64;
                let xp = (p + 1) as f64 * h;
                (1..=n)
                    .map(|k| {
                        let kp = k as f64 * PI;
                        (0..n).map(|i| 2.0 * h * (kp * (i + 1) as f64 * h).sin() * (kp * xp).sin()).collect()
                    })
                    .collect()
            })
            .collect();
        Self { dims: dims.to_vec(), a, tables, threshold }
    }

    fn axis(&self, axis: usize, t: f64) -> Vec<f64> {
        let n = self.dims[axis];
        let mut out = vec![0.0; n];
        for (k, row) in self.tables[axis].iter().enumerate() {
            let kk = (k + 1) as f64 * PI;
            let decay = (-self.a * kk * kk * t).exp();
            if decay < self.threshold {
                break;
            }
            for (o, v) in out.iter_mut().zip(row) {
                *o += decay * v;
            }
        }
        out
    }

    /// Values at every interior node, row-major.
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let axes: Vec<Vec<f64>> = (0..self.dims.len()).map(|a| self.axis(a, t)).collect();
        let mut out = vec![1.0];
        for ax in &axes {
            out = out.iter().flat_map(|&p| ax.iter().map(move |&v| p * v)).collect();
        }
        out
    }
}

/// Maps `s` into `(0, period]`.
fn wrap(s: f64, period: f64) -> f64 {
    let w = s.rem_euclid(period);
    if w == 0.0 {
        period
    } else {
        w
    }
}

/// `sin(2 pi (x - a t))` at nodes `x_i = i dx`, `i = 1..=n`, for data
/// repeating with period `n dx`.
pub fn advection_1d(n: usize, dx: f64, a: f64, t: f64) -> Vec<f64> {
    let period = n as f64 * dx;
    (1..=n).map(|i| (2.0 * PI * wrap(i as f64 * dx - a * t, period)).sin()).collect()
}

/// `cos(2 pi (x1 + x2))` transported with velocity `(a, a)`, same node and
/// period convention per axis.
pub fn advection_2d(n: [usize; 2], dx: f64, a: f64, t: f64) -> Vec<f64> {
    let p = [n[0] as f64 * dx, n[1] as f64 * dx];
    let mut out = Vec::with_capacity(n[0] * n[1]);
    for i in 1..=n[0] {
        let x = wrap(i as f64 * dx - a * t, p[0]);
        for j in 1..=n[1] {
            let y = wrap(j as f64 * dx - a * t, p[1]);
            out.push((2.0 * PI * (x + y)).cos());
        }
    }
    out
}

/// `1 + x^2 + y^2` on nodes `i dx`, `i = 0..n`.
pub fn poisson(n: [usize; 2], dx: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n[0] * n[1]);
    for i in 0..n[0] {
        for j in 0..n[1] {
            let (x, y) = (i as f64 * dx, j as f64 * dx);
            out.push(1.0 + x * x + y * y);
        }
    }
    out
}

/// Boundary values of the Poisson problem with a zero interior.
pub fn poisson_initial(n: [usize; 2], dx: f64) -> Vec<f64> {
    let exact = poisson(n, dx);
    let mut out = vec![0.0; n[0] * n[1]];
    for i in 0..n[0] {
        for j in 0..n[1] {
            if i == 0 || j == 0 || i + 1 == n[0] || j + 1 == n[1] {
                out[i * n[1] + j] = exact[i * n[1] + j];
            }
        }
    }
    out
}
