//! Quantum-tunnelling activation.
//!
//! The activation value is the transmission probability `T(E)` of a particle
//! of energy `E` through a rectangular potential barrier of height `V₀` and
//! width `a`, in units where `ħ²/2m = 1`:
//!
//! * sub-barrier (`E < V₀`): `T = 1 / (1 + V₀² sinh²(κa) / (4E(V₀ − E)))`, `κ = √(V₀ − E)`
//! * above-barrier (`E > V₀`): `T = 1 / (1 + V₀² sin²(ka) / (4E(E − V₀)))`, `k = √(E − V₀)`
//!
//! The branch point `E = V₀` is a removable singularity and is handled with a
//! second-order series. For `κa > 20` the sub-barrier branch switches to the
//! exponential asymptote, evaluated so that nothing overflows for any finite
//! barrier.
//!
//! Pre-activations are turned into energies by an [`EnergyMap`].

use crate::error::{Error, Result};

/// Relative half-width of the window around `E = V₀` where the series is used.
pub const BRANCH_WINDOW: f64 = 1e-6;

/// `κa` above which `sinh²(κa)` is replaced by `e^{2κa}/4`.
pub const DEEP_TUNNELLING: f64 = 20.0;

/// Lower clamp of [`EnergyMapKind::IdentityClamp`].
pub const CLAMP_FLOOR: f64 = 1e-12;

/// Rectangular potential barrier: height `V₀` and width `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Barrier {
    height: f64,
    width: f64,
}

impl Barrier {
    pub fn new(height: f64, width: f64) -> Result<Self> {
        if !(height.is_finite() && height > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "barrier height must be positive and finite, got {height}"
            )));
        }
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "barrier width must be positive and finite, got {width}"
            )));
        }
        Ok(Self { height, width })
    }

    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// `z₀ = (a/2)·√V₀`, the dimensionless strength of the matching square well.
    pub fn well_strength(&self) -> f64 {
        0.5 * self.width * self.height.sqrt()
    }
}

impl Default for Barrier {
    fn default() -> Self {
        Self {
            height: 1.0,
            width: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyMapKind {
    /// `E(x) = s·ln(1 + e^{x/s})`
    SmoothPositive,
    /// `E(x) = max(x, 1e-12)`
    IdentityClamp,
}

/// Maps a pre-activation onto a strictly positive energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyMap {
    kind: EnergyMapKind,
    scale: f64,
}

impl EnergyMap {
    pub fn smooth(scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "energy map scale must be positive and finite, got {scale}"
            )));
        }
        Ok(Self {
            kind: EnergyMapKind::SmoothPositive,
            scale,
        })
    }

    pub fn clamp() -> Self {
        Self {
            kind: EnergyMapKind::IdentityClamp,
            scale: 1.0,
        }
    }

    pub fn kind(&self) -> EnergyMapKind {
        self.kind
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn apply(&self, x: f64) -> f64 {
        match self.kind {
            EnergyMapKind::SmoothPositive => {
                let s = self.scale;
                let z = x / s;
                let e = if z < -40.0 {
                    s * z.exp()
                } else if z <= 0.0 {
                    s * z.exp().ln_1p()
                } else {
                    x + s * (-z).exp().ln_1p()
                };
                // e^{z} underflows for z < -745; the map must stay positive.
                e.max(f64::MIN_POSITIVE)
            }
            EnergyMapKind::IdentityClamp => x.max(CLAMP_FLOOR),
        }
    }

    /// `dE/dx`.
    pub fn derivative(&self, x: f64) -> f64 {
        match self.kind {
            EnergyMapKind::SmoothPositive => logistic(x / self.scale),
            EnergyMapKind::IdentityClamp => {
                if x > CLAMP_FLOOR {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl Default for EnergyMap {
    fn default() -> Self {
        Self {
            kind: EnergyMapKind::SmoothPositive,
            scale: 1.0,
        }
    }
}

/// Overflow-safe `1 / (1 + e^{-z})`.
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn apply_energy_map(x: f64, map: &EnergyMap) -> f64 {
    map.apply(x)
}

fn check_energy(energy: f64) -> Result<()> {
    if energy.is_finite() && energy > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "energy must be positive and finite, got {energy}"
        )))
    }
}

/// Transmission probability `T(E)` through `barrier`.
pub fn transmission(energy: f64, barrier: &Barrier) -> Result<f64> {
    check_energy(energy)?;
    Ok(transmission_parts(energy, barrier).0)
}

/// Analytic `dT/dE`.
pub fn transmission_grad(energy: f64, barrier: &Barrier) -> Result<f64> {
    check_energy(energy)?;
    Ok(transmission_parts(energy, barrier).1)
}

/// `(T(E), dT/dE)` in one evaluation.
pub fn transmission_with_grad(energy: f64, barrier: &Barrier) -> Result<(f64, f64)> {
    check_energy(energy)?;
    Ok(transmission_parts(energy, barrier))
}

// Callers guarantee energy > 0 and finite.
fn transmission_parts(energy: f64, barrier: &Barrier) -> (f64, f64) {
    let v0 = barrier.height;
    let a = barrier.width;
    let e = energy;
    let u = v0 - e;

    if u.abs() <= BRANCH_WINDOW * v0 {
        // sinh²(κa)/κ² and sin²(ka)/k² share the expansion
        // a²(1 + u a²/3 + 2u²a⁴/45 + …) in u = V₀ − E.
        let a2 = a * a;
        let p = 1.0 + u * a2 / 3.0 + 2.0 * u * u * a2 * a2 / 45.0;
        let dp_du = a2 / 3.0 + 4.0 * u * a2 * a2 / 45.0;
        let c = v0 * v0 * a2 / 4.0;
        let f = c * p / e;
        let t = 1.0 / (1.0 + f);
        let df = -c * (dp_du + p / e) / e;
        return (t, -t * t * df);
    }

    if u > 0.0 {
        // Written as T = G/(1+G) with G = 4E(V₀−E) / (V₀² sinh²(κa)) so that
        // E → 0 drives G → 0 without dividing by a vanishing 4E(V₀−E).
        let kappa = u.sqrt();
        let x = kappa * a;
        let d = 4.0 * e * u;
        let dd = 4.0 * (u - e);
        let (g, dg) = if x > DEEP_TUNNELLING {
            let q = 4.0 / (v0 * v0) * (-2.0 * x).exp();
            (q * d, q * (dd + d * a / kappa))
        } else {
            let s = x.sinh();
            let n = v0 * v0 * s * s;
            let g = d / n;
            (g, dd / n + g * a / (kappa * x.tanh()))
        };
        let denom = 1.0 + g;
        return (g / denom, dg / (denom * denom));
    }

    let w = e - v0;
    let k = w.sqrt();
    let x = k * a;
    let sn = x.sin();
    // V₀²/(4E(E−V₀)) split in two factors so huge E cannot overflow.
    let h = (v0 / (2.0 * e)) * (v0 / (2.0 * w));
    let f = h * sn * sn;
    let t = 1.0 / (1.0 + f);
    let df = h * a * (2.0 * x).sin() / (2.0 * k) - f * (1.0 / e + 1.0 / w);
    (t, -t * t * df)
}

/// Element-wise QT activation and its derivative with respect to the
/// pre-activation.
pub fn qt_activate(
    pre: &[f64],
    barrier: &Barrier,
    map: &EnergyMap,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut act = Vec::with_capacity(pre.len());
    let mut deriv = Vec::with_capacity(pre.len());
    for &x in pre {
        let (t, dt) = qt_scalar(x, barrier, map)?;
        act.push(t);
        deriv.push(dt);
    }
    Ok((act, deriv))
}

/// Scalar form of [`qt_activate`].
pub fn qt_scalar(x: f64, barrier: &Barrier, map: &EnergyMap) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("pre-activation is not finite: {x}")));
    }
    let energy = map.apply(x);
    let (t, dt) = transmission_with_grad(energy, barrier)?;
    Ok((t, dt * map.derivative(x)))
}

/// Bound-state energies of the symmetric finite square well of depth `V₀`
/// and full width `a`, ascending. Every level lies in `(-V₀, 0)`.
///
/// With `z₀ = (a/2)√V₀`, even states solve `z tan z = √(z₀² − z²)` and odd
/// states solve `−z cot z = √(z₀² − z²)`. Each quarter period
/// `[mπ/2, (m+1)π/2) ∩ (0, z₀)` holds exactly one root, even for even `m` and
/// odd for odd `m`, so the level count is `⌊2z₀/π⌋ + 1`.
pub fn bound_state_energies(barrier: &Barrier) -> Vec<f64> {
    let z0 = barrier.well_strength();
    let half_pi = std::f64::consts::FRAC_PI_2;
    let radial = |z: f64| (z0 * z0 - z * z).max(0.0).sqrt();
    // Multiplied through by cos z / sin z so there are no poles inside a bracket.
    let even = |z: f64| z * z.sin() - radial(z) * z.cos();
    let odd = |z: f64| -z * z.cos() - radial(z) * z.sin();

    let mut levels = Vec::new();
    let mut m = 0usize;
    loop {
        let lo = m as f64 * half_pi;
        if lo >= z0 {
            break;
        }
        let hi = ((m + 1) as f64 * half_pi).min(z0);
        let z = if m.is_multiple_of(2) {
            bisect(&even, lo, hi)
        } else {
            bisect(&odd, lo, hi)
        };
        let k = 2.0 * z / barrier.width;
        levels.push(-barrier.height + k * k);
        m += 1;
    }
    levels
}

fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut f_lo = f(lo);
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if (f_mid < 0.0) == (f_lo < 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
