#![allow(dead_code)]

use num_complex::Complex64;

type M2 = [[Complex64; 2]; 2];

fn mul(a: &M2, b: &M2) -> M2 {
    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

fn inv(m: &M2) -> M2 {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [
        [m[1][1] / det, -m[0][1] / det],
        [-m[1][0] / det, m[0][0] / det],
    ]
}

/// Maps `(A, B)` of `ψ = A e^{ikx} + B e^{-ikx}` to `(ψ(x), ψ'(x))`.
fn wave_matrix(k: Complex64, x: f64) -> M2 {
    let i = Complex64::new(0.0, 1.0);
    let p = (i * k * x).exp();
    let m = (-i * k * x).exp();
    [[p, m], [i * k * p, -i * k * m]]
}

/// Transmission probability through a piecewise-constant potential
/// `V(x) = potential(x)` on `[0, width]`, zero outside, for `-ψ'' + Vψ = Eψ`.
/// The barrier is cut into `slices` constant steps and ψ, ψ' are matched at
/// every interface.
pub fn transfer_matrix_transmission(
    energy: f64,
    width: f64,
    slices: usize,
    potential: impl Fn(f64) -> f64,
) -> f64 {
    let k0 = Complex64::new(energy, 0.0).sqrt();
    let dx = width / slices as f64;
    let mut ks = vec![k0];
    for s in 0..slices {
        let v = potential((s as f64 + 0.5) * dx);
        ks.push(Complex64::new(energy - v, 0.0).sqrt());
    }
    ks.push(k0);
    // Coefficients in region j+1 = inv(W_{j+1}(x_j)) · W_j(x_j) · coefficients in region j.
    let mut total: M2 = [
        [Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)],
        [Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)],
    ];
    for j in 0..=slices {
        let x = j as f64 * dx;
        let step = mul(&inv(&wave_matrix(ks[j + 1], x)), &wave_matrix(ks[j], x));
        total = mul(&step, &total);
    }
    // Incident (1, r) on the left becomes (t, 0) on the right: 0 = T10 + T11·r.
    let r = -total[1][0] / total[1][1];
    let t = total[0][0] + total[0][1] * r;
    t.norm_sqr()
}

/// Rectangular barrier of height `v0` evaluated by the transfer-matrix oracle.
pub fn oracle_transmission(energy: f64, v0: f64, a: f64) -> f64 {
    transfer_matrix_transmission(energy, a, 64, |_| v0)
}

/// Largest `|a − n| / max(|a|, |n|, floor)` between `analytic` and central
/// differences of `f` with step `h` over every coordinate of `params`.
pub fn max_fd_error(
    f: impl Fn(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    h: f64,
    floor: f64,
) -> (f64, usize) {
    assert_eq!(params.len(), analytic.len());
    let mut worst = (0.0, 0);
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(floor);
        if err > worst.0 {
            worst = (err, i);
        }
    }
    worst
}
