//! Scalar root finding on a sign-change bracket.

use crate::error::{Error, Result};

/// Grows `[lo, hi]` geometrically until a monotone function changes sign,
/// never leaving `[min, max]`.
///
/// Returns the bracket together with the end-point values.
pub(crate) fn expand_bracket<F>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    min: f64,
    max: f64,
    what: &'static str,
) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    lo = lo.max(min);
    hi = hi.min(max);
    let mut f_lo = f(lo)?;
    let mut f_hi = f(hi)?;
    let mut width = (hi - lo).max(1.0);
    for _ in 0..64 {
        if f_lo == 0.0 || f_hi == 0.0 || (f_lo < 0.0) != (f_hi < 0.0) {
            return Ok((lo, hi, f_lo, f_hi));
        }
        if lo <= min && hi >= max {
            break;
        }
        width *= 2.0;
        // for monotone f the end with the smaller magnitude faces the root
        let move_lo = lo > min && (f_lo.abs() <= f_hi.abs() || hi >= max);
        let move_hi = hi < max && (f_hi.abs() <= f_lo.abs() || lo <= min);
        if move_lo {
            lo = (lo - width).max(min);
            f_lo = f(lo)?;
        }
        if move_hi {
            hi = (hi + width).min(max);
            f_hi = f(hi)?;
        }
    }
    if f_lo == 0.0 || f_hi == 0.0 || (f_lo < 0.0) != (f_hi < 0.0) {
        return Ok((lo, hi, f_lo, f_hi));
    }
    Err(Error::BracketFailure { what })
}

/// Safeguarded Newton iteration: Newton steps are taken while they stay
/// inside the current bracket and shrink the residual, bisection otherwise.
///
/// `f` returns the value and the derivative. Stops when `|f| <= ftol` or the
/// bracket is narrower than `xtol * (1 + |x|)`.
pub(crate) fn newton_bisect<F>(
    mut f: F,
    lo: f64,
    hi: f64,
    f_lo: f64,
    f_hi: f64,
    ftol: f64,
    xtol: f64,
) -> Result<f64>
where
    F: FnMut(f64) -> Result<(f64, f64)>,
{
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if (f_lo < 0.0) == (f_hi < 0.0) {
        return Err(Error::InvalidArgument(
            "newton_bisect requires a sign change".into(),
        ));
    }
    let (mut a, mut b) = (lo, hi);
    let neg_at_a = f_lo < 0.0;
    let mut x = if f_lo.abs() < f_hi.abs() { lo } else { hi };
    x = 0.5 * (x + 0.5 * (a + b));
    let mut best = (f64::INFINITY, x);
    let mut last_abs = f64::INFINITY;
    for _ in 0..400 {
        let (fx, dfx) = f(x)?;
        if !fx.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "non-finite function value at {x}"
            )));
        }
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx.abs() <= ftol {
            return Ok(x);
        }
        if (fx < 0.0) == neg_at_a {
            a = x;
        } else {
            b = x;
        }
        if (b - a).abs() <= xtol * (1.0 + x.abs()) {
            return Ok(best.1);
        }
        let newton = x - fx / dfx;
        let inside = newton.is_finite() && newton > a.min(b) && newton < a.max(b);
        let progressing = fx.abs() < 0.5 * last_abs;
        x = if inside && (progressing || last_abs.is_infinite()) {
            newton
        } else {
            0.5 * (a + b)
        };
        last_abs = fx.abs();
    }
    Ok(best.1)
}
