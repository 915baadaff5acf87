//! Closed-form cubic and quartic root finding (trigonometric/Cardano and
//! Ferrari), each root polished by Newton's method.
//!
//! Coefficients are given highest degree first.

use num_complex::Complex64 as C64;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("degenerate polynomial: leading coefficient is zero or coefficients are not finite")]
    DegeneratePolynomial,
    #[error("several positive real roots: {0:?}")]
    MultiplePositive(Vec<f64>),
}

/// Roots within this distance of zero count as zero for positivity tests.
pub const POSITIVE_TOL: f64 = 1e-12;

fn check<const N: usize>(c: &[f64; N]) -> Result<(), RootError> {
    if c[0] == 0.0 || c.iter().any(|v| !v.is_finite()) {
        Err(RootError::DegeneratePolynomial)
    } else {
        Ok(())
    }
}

fn horner(c: &[f64], x: C64) -> (C64, C64) {
    let mut f = C64::new(0.0, 0.0);
    let mut df = C64::new(0.0, 0.0);
    for &k in c {
        df = df * x + f;
        f = f * x + k;
    }
    (f, df)
}

/// Newton refinement that only accepts small steps which reduce |f|;
/// clustered roots are left alone.
fn polish(c: &[f64], mut x: C64) -> C64 {
    for _ in 0..3 {
        let (f, df) = horner(c, x);
        if f.norm() == 0.0 || df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        if step.norm() > 1e-6 * (1.0 + x.norm()) {
            break;
        }
        let next = x - step;
        if horner(c, next).0.norm() < f.norm() {
            x = next;
        } else {
            break;
        }
    }
    x
}

/// All three roots of c₃x³ + c₂x² + c₁x + c₀.
///
/// When the discriminant is within rounding of zero the roots are treated
/// as real, so that a (near) triple root does not pick up a spurious
/// imaginary part of order ε^{1/3}.
pub fn cubic_roots(c: [f64; 4]) -> Result<[C64; 3], RootError> {
    check(&c)?;
    let a = c[1] / c[0];
    let b = c[2] / c[0];
    let d = c[3] / c[0];
    let shift = -a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + d;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let scale = (a.abs() / 3.0)
        .max(b.abs().sqrt())
        .max(d.abs().cbrt())
        .max(f64::MIN_POSITIVE);
    let real_tol = 1e-13 * scale.powi(6);

    let ys: [C64; 3] = if disc <= real_tol {
        let p = p.min(0.0);
        if p == 0.0 {
            let y = -q.cbrt();
            [C64::new(y, 0.0); 3]
        } else {
            let m = 2.0 * (-p / 3.0).sqrt();
            let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
            // y = m cos θ with cos 3θ = 3q/(p m)
            let theta = arg.acos() / 3.0;
            let tau = 2.0 * std::f64::consts::PI / 3.0;
            [
                C64::new(m * theta.cos(), 0.0),
                C64::new(m * (theta - tau).cos(), 0.0),
                C64::new(m * (theta + tau).cos(), 0.0),
            ]
        }
    } else {
        let s = disc.sqrt();
        let u = (-q / 2.0 - q.signum() * s).cbrt();
        let u = if q == 0.0 { s.cbrt() } else { u };
        let v = if u == 0.0 { 0.0 } else { -p / (3.0 * u) };
        let re = -(u + v) / 2.0;
        let im = 3f64.sqrt() / 2.0 * (u - v);
        [
            C64::new(u + v, 0.0),
            C64::new(re, im),
            C64::new(re, -im),
        ]
    };

    let mut out = ys.map(|y| y + shift);
    for z in out.iter_mut() {
        *z = polish(&c, *z);
    }
    Ok(out)
}

/// Roots of a cubic that is known to have three real roots, such as the
/// characteristic polynomial of a symmetric matrix, in ascending order.
///
/// Roots that coincide to within the rounding noise of the discriminant are
/// snapped together: a k-fold root is otherwise only resolved to about ε^{1/k}.
/// The second value is the largest imaginary part that was discarded.
pub fn real_rooted_cubic(c: [f64; 4]) -> Result<([f64; 3], f64), RootError> {
    let discarded = cubic_roots(c)?.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let a = c[1] / c[0];
    let b = c[2] / c[0];
    let d = c[3] / c[0];
    let shift = -a / 3.0;
    let p = b - a * a / 3.0;
    let q = 2.0 * a * a * a / 27.0 - a * b / 3.0 + d;
    let scale = 1.0 + (a.abs() / 3.0).max(b.abs().sqrt()).max(d.abs().cbrt());

    let eps = 64.0 * f64::EPSILON;
    let disc = (q / 2.0).powi(2) + (p / 3.0).powi(3);
    let disc_noise = eps * (q.abs() * scale.powi(3) + p * p / 9.0 * scale * scale);

    let ys = if p > -1e-13 * scale * scale {
        [0.0; 3]
    } else if disc.abs() <= disc_noise {
        // double root t and simple root −2t with p = −3t²
        let t = q.signum() * (-p / 3.0).sqrt();
        [-2.0 * t, t, t]
    } else {
        let m = 2.0 * (-p / 3.0).sqrt();
        let arg = (3.0 * q / (p * m)).clamp(-1.0, 1.0);
        let theta = arg.acos() / 3.0;
        let tau = 2.0 * std::f64::consts::PI / 3.0;
        [m * theta.cos(), m * (theta - tau).cos(), m * (theta + tau).cos()]
    };
    let mut out = ys.map(|y| {
        let x = y + shift;
        let (_, df) = horner(&c, C64::new(x, 0.0));
        if df.norm() > 1e-6 * scale * scale * c[0].abs() {
            polish(&c, C64::new(x, 0.0)).re
        } else {
            x
        }
    });
    out.sort_by(f64::total_cmp);
    Ok((out, discarded))
}

/// Real roots of a cubic in ascending order.
pub fn solve_cubic_real(c: [f64; 4]) -> Result<Vec<f64>, RootError> {
    let roots = cubic_roots(c)?;
    let mut out: Vec<f64> = roots
        .iter()
        .filter(|z| z.im.abs() <= 1e-9 * (1.0 + z.re.abs()))
        .map(|z| z.re)
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

fn quadratic(b: C64, c: C64) -> [C64; 2] {
    // y² + b y + c = 0, numerically stable form
    let disc = (b * b - c * 4.0).sqrt();
    let sign = if (b.conj() * disc).re >= 0.0 { 1.0 } else { -1.0 };
    let qq = -(b + disc * sign) / 2.0;
    if qq.norm() == 0.0 {
        [C64::new(0.0, 0.0); 2]
    } else {
        [qq, c / qq]
    }
}

/// All four roots of c₄x⁴ + c₃x³ + c₂x² + c₁x + c₀ by Ferrari's method.
pub fn quartic_roots(c: [f64; 5]) -> Result<[C64; 4], RootError> {
    check(&c)?;
    let a = c[1] / c[0];
    let b = c[2] / c[0];
    let cc = c[3] / c[0];
    let d = c[4] / c[0];
    let shift = -a / 4.0;
    let p = b - 3.0 * a * a / 8.0;
    let q = cc - a * b / 2.0 + a.powi(3) / 8.0;
    let r = d - a * cc / 4.0 + a * a * b / 16.0 - 3.0 * a.powi(4) / 256.0;
    let scale = (a.abs() / 4.0)
        .max(b.abs().sqrt())
        .max(cc.abs().cbrt())
        .max(d.abs().sqrt().sqrt())
        .max(f64::MIN_POSITIVE);

    let ys: [C64; 4] = if q.abs() <= 1e-14 * scale.powi(3) {
        // biquadratic: z = y²
        let [z1, z2] = quadratic(C64::new(p, 0.0), C64::new(r, 0.0));
        let (s1, s2) = (z1.sqrt(), z2.sqrt());
        [s1, -s1, s2, -s2]
    } else {
        // resolvent: m³ + p m² + (p²/4 − r) m − q²/8 = 0, take its largest
        // real root, which is positive because the cubic is −q²/8 at m = 0
        let res = cubic_roots([1.0, p, p * p / 4.0 - r, -q * q / 8.0])?;
        let m = res
            .iter()
            .filter(|z| z.im.abs() <= 1e-9 * (1.0 + z.re.abs()))
            .map(|z| z.re)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(f64::MIN_POSITIVE);
        let s = (2.0 * m).sqrt();
        let k = q / (2.0 * s);
        let [y1, y2] = quadratic(C64::new(-s, 0.0), C64::new(p / 2.0 + m + k, 0.0));
        let [y3, y4] = quadratic(C64::new(s, 0.0), C64::new(p / 2.0 + m - k, 0.0));
        [y1, y2, y3, y4]
    };

    let mut out = ys.map(|y| y + shift);
    for z in out.iter_mut() {
        *z = polish(&c, *z);
    }
    Ok(out)
}

/// The unique positive real root of a quartic, `None` when no root exceeds
/// [`POSITIVE_TOL`].
pub fn solve_quartic_positive(c: [f64; 5]) -> Result<Option<f64>, RootError> {
    let roots = quartic_roots(c)?;
    let mut positive: Vec<f64> = roots
        .iter()
        .filter(|z| z.im.abs() <= 1e-7 * (1.0 + z.re.abs()) && z.re > POSITIVE_TOL)
        .map(|z| z.re)
        .collect();
    positive.sort_by(f64::total_cmp);
    match positive.len() {
        0 => Ok(None),
        1 => Ok(Some(positive[0])),
        _ => Err(RootError::MultiplePositive(positive)),
    }
}
