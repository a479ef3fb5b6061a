//! Finite-difference advancement operators for the experiment families.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::iterops::{Boundary, OperatorMeta, StencilOperator};

type Taps = Vec<(Vec<isize>, f64)>;

fn unit(d: usize, axis: usize, s: isize) -> Vec<isize> {
    let mut o = vec![0; d];
    o[axis] = s;
    o
}

/// Forward-time central-space diffusion on the interior of a Dirichlet box;
/// neighbors outside the state are the zero boundary.
pub fn ftcs_diffusion(dims: &[usize], a: f64, dt: f64, dx: f64) -> Result<StencilOperator> {
    let d = dims.len();
    let r = a * dt / (dx * dx);
    let lambda = 2.0 * d as f64 * r;
    if !(lambda <= 1.0) || r < 0.0 {
        return Err(Error::Stability(format!("a dt sum(2/dx^2) = {lambda} exceeds 1")));
    }
    let mut taps: Taps = vec![(vec![0; d], 1.0 - lambda)];
    for axis in 0..d {
        taps.push((unit(d, axis, 1), r));
        taps.push((unit(d, axis, -1), r));
    }
    let mut op = StencilOperator::new(dims.to_vec(), taps, Boundary::Zero);
    op.meta = OperatorMeta { lipschitz: Some(1.0), kreiss: None };
    Ok(op)
}

/// Lax-Wendroff for `u_t + a u_x = 0` on a periodic line, CFL number `s`.
pub fn lax_wendroff_1d(n: usize, s: f64) -> Result<StencilOperator> {
    check_cfl(s)?;
    let taps = vec![(vec![-1], (s * s + s) / 2.0), (vec![0], 1.0 - s * s), (vec![1], (s * s - s) / 2.0)];
    let mut op = StencilOperator::new(vec![n], taps, Boundary::Periodic);
    op.meta = OperatorMeta { lipschitz: None, kreiss: Some(2.0) };
    Ok(op)
}

/// Two-step (Richtmyer) Lax-Wendroff for `u_t + a u_x + b u_y = 0` with
/// CFL numbers `sx`, `sy`, collapsed into one periodic stencil.
///
/// Half step at the same nodes: `h = (E+W+N+S)/4 - sx/4 (E-W) - sy/4 (N-S)`;
/// full step: `u' = u - sx/2 (h_E - h_W) - sy/2 (h_N - h_S)`.
pub fn richtmyer_2d(dims: [usize; 2], sx: f64, sy: f64) -> Result<StencilOperator> {
    check_cfl(sx)?;
    check_cfl(sy)?;
    let mut taps = BTreeMap::new();
    *taps.entry([0isize, 0isize]).or_insert(0.0) += 1.0;
    let half = [([1, 0], 0.25 - sx / 4.0), ([-1, 0], 0.25 + sx / 4.0), ([0, 1], 0.25 - sy / 4.0), ([0, -1], 0.25 + sy / 4.0)];
    let full = [([1, 0], -sx / 2.0), ([-1, 0], sx / 2.0), ([0, 1], -sy / 2.0), ([0, -1], sy / 2.0)];
    for (fo, fc) in full {
        for (ho, hc) in half {
            *taps.entry([fo[0] + ho[0], fo[1] + ho[1]]).or_insert(0.0) += fc * hc;
        }
    }
    let taps: Taps = taps.into_iter().filter(|(_, c)| *c != 0.0).map(|(o, c)| (o.to_vec(), c)).collect();
    let mut op = StencilOperator::new(dims.to_vec(), taps, Boundary::Periodic);
    op.meta = OperatorMeta { lipschitz: None, kreiss: Some(2.0) };
    Ok(op)
}

fn check_cfl(s: f64) -> Result<()> {
    if !(s.abs() < 1.0) {
        return Err(Error::Stability(format!("CFL number {s} not below 1")));
    }
    Ok(())
}

/// Jacobi sweep for the 5-point Poisson problem `lap u = f` with the
/// boundary layer held: `u' = (E+W+N+S - f dx^2) / 4`.
pub fn poisson_jacobi(dims: [usize; 2], f: f64, dx: f64) -> StencilOperator {
    let taps = vec![(vec![1, 0], 0.25), (vec![-1, 0], 0.25), (vec![0, 1], 0.25), (vec![0, -1], 0.25)];
    let mut op = StencilOperator::new(dims.to_vec(), taps, Boundary::Fixed);
    op.source = -f * dx * dx / 4.0;
    op
}
