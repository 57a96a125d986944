//! Reference values computed independently of the library's assembly.
#![allow(dead_code)]

use std::f64::consts::PI;

use nalgebra::DMatrix;

/// Generalized eigenvalues of the 5-point (or 3-point) Dirichlet pencil with
/// lumped mass, built edge by edge. `potential[c]` is the per-cell density,
/// `INFINITY` blocks the cell. Nodes are ordered `x` fastest.
pub fn dense_dirichlet(dim: usize, n: usize, lengths: &[f64], potential: &[f64]) -> Vec<f64> {
    let m = n - 1;
    let nodes = if dim == 1 { m } else { m * m };
    let h: Vec<f64> = lengths.iter().map(|l| l / n as f64).collect();
    let vol: f64 = h.iter().product();
    let corners = if dim == 1 { 2.0 } else { 4.0 };
    let index = |a: usize, b: usize| -> Option<usize> {
        // a, b are grid coordinates 0..=n
        if a == 0 || a == n || (dim == 2 && (b == 0 || b == n)) {
            None
        } else if dim == 1 {
            Some(a - 1)
        } else {
            Some((a - 1) + m * (b - 1))
        }
    };
    let mut blocked = vec![false; nodes];
    let mut mass = vec![0.0; nodes];
    let mut pot = vec![0.0; nodes];
    let cells = if dim == 1 { n } else { n * n };
    for (c, v) in potential.iter().enumerate().take(cells) {
        let (i, j) = (c % n, c / n);
        let cs: Vec<Option<usize>> = if dim == 1 {
            vec![index(i, 0), index(i + 1, 0)]
        } else {
            vec![index(i, j), index(i + 1, j), index(i, j + 1), index(i + 1, j + 1)]
        };
        for k in cs.into_iter().flatten() {
            mass[k] += vol / corners;
            if v.is_infinite() {
                blocked[k] = true;
            } else {
                pot[k] += v * vol / corners;
            }
        }
    }
    let free: Vec<usize> = (0..nodes).filter(|k| !blocked[*k]).collect();
    let mut pos = vec![usize::MAX; nodes];
    for (r, k) in free.iter().enumerate() {
        pos[*k] = r;
    }
    let nf = free.len();
    let mut a = DMatrix::<f64>::zeros(nf, nf);
    // one forward difference per cell and axis
    for c in 0..cells {
        let (i, j) = (c % n, c / n);
        let base = index(i, j);
        let nbrs: Vec<(Option<usize>, f64)> = if dim == 1 {
            vec![(index(i + 1, 0), h[0])]
        } else {
            vec![(index(i + 1, j), h[0]), (index(i, j + 1), h[1])]
        };
        for (other, hk) in nbrs {
            let w = vol / (hk * hk);
            let ends = [base, other];
            for (s, e) in ends.iter().enumerate() {
                let Some(e) = e.filter(|e| !blocked[*e]) else { continue };
                a[(pos[e], pos[e])] += w;
                if let Some(f) = ends[1 - s].filter(|f| !blocked[*f]) {
                    a[(pos[e], pos[f])] -= w;
                }
            }
        }
    }
    for (r, k) in free.iter().enumerate() {
        a[(r, r)] += pot[*k];
    }
    // B is diagonal: reduce to the standard problem D^-1/2 A D^-1/2
    let mut s = a;
    for r in 0..nf {
        for q in 0..nf {
            s[(r, q)] /= (mass[free[r]] * mass[free[q]]).sqrt();
        }
    }
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// `pi_p = 2 pi / (p sin(pi / p))`.
pub fn pi_p(p: f64) -> f64 {
    2.0 * PI / (p * (PI / p).sin())
}

fn phi(x: f64, r: f64) -> f64 {
    x.signum() * x.abs().powf(r - 1.0)
}

/// First Dirichlet eigenvalue of the 1D p-Laplacian on `(0, len)` by
/// shooting: `u' = phi_q(v)`, `v' = -lambda phi_p(u)`, `u(0) = 0`, `v(0) = 1`,
/// with `lambda` bisected so that the first zero of `u` lands at `len`.
pub fn shooting_first_eigenvalue(p: f64, len: f64) -> f64 {
    let q = p / (p - 1.0);
    let first_zero = |lambda: f64| -> f64 {
        let steps = 200_000;
        let dt = 4.0 * len / steps as f64;
        let rhs = |u: f64, v: f64| (phi(v, q), -lambda * phi(u, p));
        let (mut u, mut v, mut t) = (0.0f64, 1.0f64, 0.0);
        for _ in 0..steps {
            let (k1u, k1v) = rhs(u, v);
            let (k2u, k2v) = rhs(u + 0.5 * dt * k1u, v + 0.5 * dt * k1v);
            let (k3u, k3v) = rhs(u + 0.5 * dt * k2u, v + 0.5 * dt * k2v);
            let (k4u, k4v) = rhs(u + dt * k3u, v + dt * k3v);
            let un = u + dt / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            let vn = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
            if t > 0.0 && u > 0.0 && un <= 0.0 {
                return t + dt * u / (u - un);
            }
            u = un;
            v = vn;
            t += dt;
            if t > 1.5 * len {
                return t;
            }
        }
        f64::INFINITY
    };
    let (mut lo, mut hi) = (1e-3f64, 1e4f64);
    for _ in 0..100 {
        let mid = (lo * hi).sqrt();
        if first_zero(mid) > len {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo * hi).sqrt()
}

/// `J_0(x) = (1/pi) int_0^pi cos(x sin t) dt`, composite Simpson.
pub fn bessel_j0(x: f64) -> f64 {
    let n = 2000;
    let h = PI / n as f64;
    let f = |t: f64| (x * t.sin()).cos();
    let mut s = f(0.0) + f(PI);
    for i in 1..n {
        s += f(i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0 / PI
}

/// First positive zero of `J_0`, bracketed in `[2, 3]`.
pub fn bessel_j0_first_zero() -> f64 {
    let (mut a, mut b) = (2.0, 3.0);
    for _ in 0..80 {
        let m = 0.5 * (a + b);
        if bessel_j0(a) * bessel_j0(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    0.5 * (a + b)
}

/// Central finite-difference gradient of `f` at `x`.
pub fn central_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = step * x[i].abs().max(1.0);
            y[i] = x[i] + h;
            let fp = f(&y);
            y[i] = x[i] - h;
            let fm = f(&y);
            y[i] = x[i];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}
